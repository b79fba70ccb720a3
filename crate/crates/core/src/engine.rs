//! Slot-synchronous simulation loop.
//!
//! Each slot is split into two half-slots. In every half-slot each node
//! picks a channel, nodes on PR-busy channels defer, and every mutually
//! in-range pair sharing an idle channel completes a handshake. Messages in
//! one half-slot carry the tables as they were at its start, so information
//! travels at most one hop per half-slot regardless of processing order.
//!
//! Terminated nodes keep hopping and answering handshakes; termination only
//! freezes their TTR and the tables used for CTM. Because of that the
//! dynamics do not depend on the policy, and a run can be continued past
//! policy termination to also observe when the topology becomes correct.

use std::fmt;

use crate::hopping::{Half, Hopper, Protocol};
use crate::metrics;
use crate::pr_activity::{ChannelOccupancy, OccupancyError, PrLevel};
use crate::protocol::{MessageKind, NeighbourTables, NodeState, TerminationPolicy};
use crate::seed::{self, stream};
use crate::topology::{
    assign_channels, Area, ChannelAssignment, ChannelId, DeploymentSpec, GroundTopology, NodeId,
    TopologyError,
};

pub const DEFAULT_MAX_SLOTS: u64 = 50_000;
pub const DEFAULT_RANGE: f64 = 100.0;

/// Everything that identifies a scenario cell; runs are aggregated only
/// when their keys are equal.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioKey {
    pub protocol: Protocol,
    pub termination: TerminationPolicy,
    pub nodes: usize,
    pub channels: u32,
    pub similarity: u32,
    pub pr: PrLevel,
    pub range: f64,
    pub area: Area,
    pub max_slots: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub key: ScenarioKey,
    pub seed: u64,
    /// Keep simulating after every policy has fired until every node's
    /// direct list matches the ground truth.
    pub observe_full: bool,
    pub trace: bool,
}

impl RunConfig {
    pub fn new(key: ScenarioKey, seed: u64) -> Self {
        Self {
            key,
            seed,
            observe_full: true,
            trace: false,
        }
    }

    /// Deployment and channel sets drawn from `topology_seed`.
    pub fn prepare(&self, topology_seed: u64) -> Result<(GroundTopology, ChannelAssignment), TopologyError> {
        let k = &self.key;
        let topo = DeploymentSpec::new(k.nodes, k.area, k.range)
            .deploy(seed::derive(topology_seed, &[stream::TOPOLOGY]))?;
        let mut rng = seed::rng(seed::derive(topology_seed, &[stream::CHANNELS]));
        let chans = assign_channels(k.nodes, k.channels, k.similarity, &mut rng)?;
        Ok((topo, chans))
    }
}

/// Which per-node time mark to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    /// First time `|DNL ∪ INL| = N - 1`.
    N1,
    /// First time `N - 1` holds and DNL equals the ground truth.
    Full,
    /// When the termination policy fired.
    Policy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeOutcome {
    /// Marks in half-slots elapsed (`h + 1` for half-slot index `h`).
    pub n1: Option<u64>,
    pub full: Option<u64>,
    pub term: Option<u64>,
    pub tables_at_term: Option<NeighbourTables>,
    pub final_tables: NeighbourTables,
}

impl NodeOutcome {
    pub fn half_slots(&self, mark: Mark) -> Option<u64> {
        match mark {
            Mark::N1 => self.n1,
            Mark::Full => self.full,
            Mark::Policy => self.term,
        }
    }

    pub fn slots(&self, mark: Mark) -> Option<f64> {
        self.half_slots(mark).map(|h| h as f64 / 2.0)
    }

    /// Tables CTM is computed from: frozen at termination, else final.
    pub fn scored_tables(&self) -> &NeighbourTables {
        self.tables_at_term.as_ref().unwrap_or(&self.final_tables)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Busy,
    Handshake,
    N1,
    Full,
    Terminate,
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceKind::Busy => "busy",
            TraceKind::Handshake => "handshake",
            TraceKind::N1 => "n1",
            TraceKind::Full => "full",
            TraceKind::Terminate => "terminate",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub half_slot: u64,
    pub node: NodeId,
    pub channel: ChannelId,
    pub kind: TraceKind,
    pub detail: String,
}

impl fmt::Display for TraceEvent {
    /// `slot half node channel event detail`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let detail = if self.detail.is_empty() { "-" } else { &self.detail };
        write!(
            f,
            "{} {} {} {} {} {}",
            self.half_slot / 2,
            self.half_slot % 2,
            self.node,
            self.channel,
            self.kind,
            detail
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub key: ScenarioKey,
    pub seed: u64,
    /// False when the slot cap was reached first.
    pub completed: bool,
    pub half_slots: u64,
    pub nodes: Vec<NodeOutcome>,
    /// CTM over the tables frozen at each node's termination.
    pub ctm: f64,
    pub trace: Vec<TraceEvent>,
}

impl RunRecord {
    /// Mean over nodes of a mark, in slots; `None` if any node lacks it.
    pub fn node_mean(&self, mark: Mark) -> Option<f64> {
        let total = self
            .nodes
            .iter()
            .map(|n| n.slots(mark))
            .sum::<Option<f64>>()?;
        Some(total / self.nodes.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandshakeGroup {
    pub channel: ChannelId,
    pub members: Vec<NodeId>,
    /// Mutually in-range pairs `(a, b)` with `a < b`.
    pub pairs: Vec<(NodeId, NodeId)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResolvedHalfSlot {
    pub deferred: Vec<NodeId>,
    pub groups: Vec<HandshakeGroup>,
}

/// Groups the selections of one half-slot into handshakes. Nodes on a busy
/// channel defer; the rest are grouped by channel and every in-range pair in
/// a group handshakes.
pub fn resolve_half_slot(
    selections: &[(NodeId, ChannelId)],
    occupancy: &mut ChannelOccupancy,
    half_slot: u64,
    topo: &GroundTopology,
) -> Result<ResolvedHalfSlot, OccupancyError> {
    let mut sorted = selections.to_vec();
    sorted.sort_by_key(|&(node, ch)| (ch, node));
    let mut out = ResolvedHalfSlot::default();
    for chunk in sorted.chunk_by(|a, b| a.1 == b.1) {
        let channel = chunk[0].1;
        if occupancy.is_busy(channel, half_slot)? {
            out.deferred.extend(chunk.iter().map(|&(n, _)| n));
            continue;
        }
        if chunk.len() < 2 {
            continue;
        }
        let members: Vec<NodeId> = chunk.iter().map(|&(n, _)| n).collect();
        let mut pairs = Vec::new();
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                if topo.connected(a, b) {
                    pairs.push((a, b));
                }
            }
        }
        if !pairs.is_empty() {
            out.groups.push(HandshakeGroup {
                channel,
                members,
                pairs,
            });
        }
    }
    out.deferred.sort_unstable();
    Ok(out)
}

/// Simulates one run to completion or to the slot cap.
pub fn run_once(cfg: &RunConfig, topo: &GroundTopology, chans: &ChannelAssignment) -> RunRecord {
    let key = &cfg.key;
    let n = topo.len();
    let range = topo.range();
    let policy = key.termination;
    let validate = policy.validates();

    let mut occupancy = ChannelOccupancy::new(
        key.pr.params(),
        chans.pool as usize,
        seed::derive(cfg.seed, &[stream::OCCUPANCY]),
    );
    let mut rngs: Vec<_> = (0..n)
        .map(|i| seed::rng(seed::derive(cfg.seed, &[stream::HOPPING, i as u64])))
        .collect();
    let mut hoppers: Vec<Hopper> = (0..n)
        .map(|i| Hopper::new(key.protocol, chans.channels(NodeId(i)), &mut rngs[i]))
        .collect();
    let mut nodes: Vec<NodeState> = topo
        .nodes()
        .map(|id| NodeState::new(id, topo.coords(id), validate))
        .collect();
    let mut outcomes: Vec<NodeOutcome> = (0..n)
        .map(|_| NodeOutcome {
            n1: None,
            full: None,
            term: None,
            tables_at_term: None,
            final_tables: NeighbourTables::default(),
        })
        .collect();
    let mut trace = Vec::new();
    let mut selections: Vec<(NodeId, ChannelId)> = Vec::with_capacity(n);

    let cap = key.max_slots.saturating_mul(2);
    let mut completed = false;
    let mut h = 0;
    while h < cap {
        let half = Half::of(h);
        selections.clear();
        for i in 0..n {
            selections.push((NodeId(i), hoppers[i].select(half, &mut rngs[i])));
        }
        let resolved = resolve_half_slot(&selections, &mut occupancy, h, topo)
            .expect("half-slots advance monotonically");

        if cfg.trace {
            for &node in &resolved.deferred {
                trace.push(TraceEvent {
                    half_slot: h,
                    node,
                    channel: selections[node.0].1,
                    kind: TraceKind::Busy,
                    detail: String::new(),
                });
            }
        }

        for group in &resolved.groups {
            let snapshots: Vec<_> = group
                .members
                .iter()
                .map(|m| nodes[m.0].message(MessageKind::DReq))
                .collect();
            let snapshot_of = |id: NodeId| {
                let pos = group.members.iter().position(|m| *m == id).expect("member");
                &snapshots[pos]
            };
            for &(a, b) in &group.pairs {
                for (me, peer) in [(a, b), (b, a)] {
                    let msg = snapshot_of(peer);
                    nodes[me.0].absorb(msg, range);
                    nodes[me.0].confirm_direct(peer, msg.sender_coords);
                    if cfg.trace {
                        trace.push(TraceEvent {
                            half_slot: h,
                            node: me,
                            channel: group.channel,
                            kind: TraceKind::Handshake,
                            detail: format!("peer={peer}"),
                        });
                    }
                }
            }
        }

        let elapsed = h + 1;
        let mut all_done = true;
        for i in 0..n {
            let node = &nodes[i];
            let out = &mut outcomes[i];
            let mut events = Vec::new();
            let listed_all = node.tables.listed() == n - 1;
            if out.n1.is_none() && listed_all {
                out.n1 = Some(elapsed);
                events.push(TraceKind::N1);
            }
            if out.full.is_none() && listed_all && node.tables.direct == *topo.direct(node.id) {
                out.full = Some(elapsed);
                events.push(TraceKind::Full);
            }
            if out.term.is_none() {
                let fired = match policy {
                    TerminationPolicy::RunToFull => out.full.is_some(),
                    _ => node.check_termination(policy, n),
                };
                if fired {
                    out.term = Some(elapsed);
                    out.tables_at_term = Some(node.tables.clone());
                    events.push(TraceKind::Terminate);
                }
            }
            if cfg.trace {
                trace.extend(events.into_iter().map(|kind| TraceEvent {
                    half_slot: h,
                    node: node.id,
                    channel: selections[i].1,
                    kind,
                    detail: String::new(),
                }));
            }
            all_done &= out.term.is_some() && (!cfg.observe_full || out.full.is_some());
        }
        h += 1;
        if all_done {
            completed = true;
            break;
        }
    }

    for (out, node) in outcomes.iter_mut().zip(nodes) {
        out.final_tables = node.tables;
    }
    let ptms: Vec<f64> = outcomes
        .iter()
        .zip(topo.nodes())
        .map(|(o, id)| metrics::ptm(&o.scored_tables().direct, topo.direct(id)))
        .collect();

    RunRecord {
        key: key.clone(),
        seed: cfg.seed,
        completed,
        half_slots: h,
        nodes: outcomes,
        ctm: metrics::ctm(&ptms),
        trace,
    }
}

//! Per-node rendezvous state: neighbour tables, the coordinate-assisted
//! three-way handshake and termination policies.
//!
//! Tables are pairwise disjoint and never contain the owner:
//!
//! - DNL: nodes met through a completed handshake.
//! - INL: nodes learned from peers and not (known to be) in range.
//! - IDN: nodes learned from peers whose coordinates place them in range,
//!   still waiting for a direct handshake.
//!
//! A node without coordinate validation (the traditional protocols) files
//! every learned node under INL, so its IDN stays empty.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::topology::{Coordinates, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TerminationPolicy {
    /// Stop once `|DNL ∪ INL| = N - 1`.
    Baseline,
    /// Stop once `|DNL ∪ INL| = N - 1` and IDN is empty.
    Controlled,
    /// Never fires; the engine stops the node once its direct neighbour list
    /// matches the ground truth.
    RunToFull,
}

impl TerminationPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminationPolicy::Baseline => "baseline",
            TerminationPolicy::Controlled => "controlled",
            TerminationPolicy::RunToFull => "run-to-full",
        }
    }

    /// Whether learned nodes are classified by coordinates.
    pub fn validates(&self) -> bool {
        matches!(self, TerminationPolicy::Controlled)
    }
}

impl fmt::Display for TerminationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TerminationPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "baseline" => Ok(TerminationPolicy::Baseline),
            "controlled" => Ok(TerminationPolicy::Controlled),
            "run-to-full" => Ok(TerminationPolicy::RunToFull),
            other => Err(format!(
                "unknown termination `{other}` (expected baseline, controlled or run-to-full)"
            )),
        }
    }
}

/// Where a node ended up in a neighbour table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Direct,
    Indirect,
    Intended,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighbourTables {
    pub direct: BTreeSet<NodeId>,
    pub indirect: BTreeSet<NodeId>,
    pub intended: BTreeSet<NodeId>,
    pub coords: BTreeMap<NodeId, Coordinates>,
}

impl NeighbourTables {
    pub fn placement(&self, u: NodeId) -> Option<Placement> {
        if self.direct.contains(&u) {
            Some(Placement::Direct)
        } else if self.intended.contains(&u) {
            Some(Placement::Intended)
        } else if self.indirect.contains(&u) {
            Some(Placement::Indirect)
        } else {
            None
        }
    }

    /// `|DNL ∪ INL|`.
    pub fn listed(&self) -> usize {
        self.direct.len() + self.indirect.len()
    }

    /// `|DNL ∪ INL ∪ IDN|`.
    pub fn known(&self) -> usize {
        self.listed() + self.intended.len()
    }

    pub fn is_disjoint(&self) -> bool {
        self.direct.is_disjoint(&self.indirect)
            && self.direct.is_disjoint(&self.intended)
            && self.indirect.is_disjoint(&self.intended)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    DReq,
    DResp,
    DAck,
}

/// A handshake message carrying the sender's identity, position and a
/// snapshot of its tables.
#[derive(Debug, Clone, PartialEq)]
pub struct HandshakeMessage {
    pub kind: MessageKind,
    pub sender: NodeId,
    pub sender_coords: Coordinates,
    pub tables: NeighbourTables,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: NodeId,
    pub coords: Coordinates,
    pub tables: NeighbourTables,
    /// Coordinate-assisted classification into IDN.
    pub validate: bool,
}

impl NodeState {
    pub fn new(id: NodeId, coords: Coordinates, validate: bool) -> Self {
        Self {
            id,
            coords,
            tables: NeighbourTables::default(),
            validate,
        }
    }

    /// Files a node learned from a peer. DNL membership is final; with
    /// validation an in-range node goes to IDN, otherwise INL.
    pub fn classify_learned(&mut self, u: NodeId, u_coords: Coordinates, range: f64) -> Placement {
        debug_assert_ne!(u, self.id);
        let t = &mut self.tables;
        t.coords.insert(u, u_coords);
        if t.direct.contains(&u) {
            return Placement::Direct;
        }
        if self.validate && self.coords.within(&u_coords, range) {
            t.indirect.remove(&u);
            t.intended.insert(u);
            return Placement::Intended;
        }
        if t.intended.contains(&u) {
            return Placement::Intended;
        }
        t.indirect.insert(u);
        Placement::Indirect
    }

    /// Records a completed direct handshake with `peer`.
    pub fn confirm_direct(&mut self, peer: NodeId, peer_coords: Coordinates) {
        let t = &mut self.tables;
        t.coords.insert(peer, peer_coords);
        t.indirect.remove(&peer);
        t.intended.remove(&peer);
        t.direct.insert(peer);
    }

    pub fn message(&self, kind: MessageKind) -> HandshakeMessage {
        HandshakeMessage {
            kind,
            sender: self.id,
            sender_coords: self.coords,
            tables: self.tables.clone(),
        }
    }

    /// Merges every node listed in `msg` except the owner and the sender.
    pub fn absorb(&mut self, msg: &HandshakeMessage, range: f64) {
        let t = &msg.tables;
        for u in t.direct.iter().chain(&t.indirect).chain(&t.intended) {
            if *u == self.id || *u == msg.sender {
                continue;
            }
            let Some(&c) = t.coords.get(u) else {
                continue;
            };
            self.classify_learned(*u, c, range);
        }
    }

    pub fn check_termination(&self, policy: TerminationPolicy, n_nodes: usize) -> bool {
        let complete = self.tables.listed() == n_nodes - 1;
        match policy {
            TerminationPolicy::Baseline => complete,
            TerminationPolicy::Controlled => complete && self.tables.intended.is_empty(),
            TerminationPolicy::RunToFull => false,
        }
    }

    /// The tables this node would hold had it validated by coordinates:
    /// known in-range nodes outside DNL move from INL to IDN.
    pub fn validated_view(&self, range: f64) -> NodeState {
        let mut view = self.clone();
        view.validate = true;
        let pending: Vec<_> = self
            .tables
            .indirect
            .iter()
            .filter_map(|u| self.tables.coords.get(u).map(|c| (*u, *c)))
            .collect();
        for (u, c) in pending {
            view.classify_learned(u, c, range);
        }
        view
    }
}

/// Three-way handshake between `initiator` and `responder`, who are tuned to
/// the same idle channel and within range of each other.
pub fn process_handshake(initiator: &mut NodeState, responder: &mut NodeState, range: f64) {
    let req = initiator.message(MessageKind::DReq);
    responder.absorb(&req, range);
    let resp = responder.message(MessageKind::DResp);
    initiator.absorb(&resp, range);
    initiator.confirm_direct(responder.id, responder.coords);
    let ack = initiator.message(MessageKind::DAck);
    responder.confirm_direct(ack.sender, ack.sender_coords);
}

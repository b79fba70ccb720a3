use std::collections::BTreeSet;

use crn_rendezvous::engine::{
    resolve_half_slot, run_once, Mark, RunConfig, ScenarioKey, DEFAULT_MAX_SLOTS,
};
use crn_rendezvous::metrics::{ctm, ptm};
use crn_rendezvous::pr_activity::{ChannelOccupancy, ChannelState, PrLevel, PrParams};
use crn_rendezvous::protocol::{NodeState, TerminationPolicy};
use crn_rendezvous::topology::{ChannelAssignment, ChannelId, Coordinates, GroundTopology, NodeId};
use crn_rendezvous::{topology::Area, Protocol};

fn key(protocol: Protocol, termination: TerminationPolicy, nodes: usize, pr: PrLevel) -> ScenarioKey {
    ScenarioKey {
        protocol,
        termination,
        nodes,
        channels: 10,
        similarity: 2,
        pr,
        range: 100.0,
        area: Area::square(250.0),
        max_slots: DEFAULT_MAX_SLOTS,
    }
}

fn topo(points: &[(f64, f64)]) -> GroundTopology {
    GroundTopology::from_coordinates(
        points.iter().map(|&(x, y)| Coordinates::new(x, y)).collect(),
        100.0,
    )
}

/// Every subset of a 3-node instance where 0 and 2 are out of range, put on
/// one idle channel: exactly the in-range pairs of the subset handshake.
#[test]
fn group_resolution_matches_subset_oracle() {
    let t = topo(&[(0.0, 0.0), (90.0, 0.0), (180.0, 0.0)]);
    for mask in 0u32..8 {
        let mut occ = ChannelOccupancy::new(PrParams::disabled(), 3, 0);
        let selections: Vec<(NodeId, ChannelId)> = (0..3)
            .map(|i| {
                let on_shared = mask & (1 << i) != 0;
                (NodeId(i), ChannelId(if on_shared { 1 } else { 2 + i as u32 % 2 }))
            })
            .collect();
        let resolved = resolve_half_slot(&selections, &mut occ, 0, &t).unwrap();
        let got: BTreeSet<(usize, usize)> = resolved
            .groups
            .iter()
            .filter(|g| g.channel == ChannelId(1))
            .flat_map(|g| g.pairs.iter().map(|(a, b)| (a.0, b.0)))
            .collect();
        let expected: BTreeSet<(usize, usize)> = [(0, 1), (1, 2)]
            .into_iter()
            .filter(|&(a, b)| mask & (1 << a) != 0 && mask & (1 << b) != 0)
            .collect();
        assert_eq!(got, expected, "mask {mask:03b}");
    }
}

#[test]
fn busy_channel_blocks_every_member() {
    let t = topo(&[(0.0, 0.0), (50.0, 0.0), (60.0, 0.0)]);
    let mut occ = ChannelOccupancy::new(PrParams::high(), 2, 1);
    occ.force(ChannelId(1), ChannelState::On, 10.0);
    occ.force(ChannelId(2), ChannelState::Off, 10.0);
    let sel = [
        (NodeId(0), ChannelId(1)),
        (NodeId(1), ChannelId(1)),
        (NodeId(2), ChannelId(2)),
    ];
    let r = resolve_half_slot(&sel, &mut occ, 0, &t).unwrap();
    assert_eq!(r.deferred, vec![NodeId(0), NodeId(1)]);
    assert!(r.groups.is_empty());
}

/// Chain 0-1-2 with 0 and 2 out of range: node 0 ends with DNL={1},
/// INL={2}, nothing pending, and a full match.
#[test]
fn controlled_chain_terminates_with_indirect_far_end() {
    let t = topo(&[(0.0, 0.0), (90.0, 0.0), (180.0, 0.0)]);
    let chans = ChannelAssignment::uniform(3, &[ChannelId(4)]);
    let cfg = RunConfig::new(key(Protocol::Mrdmca, TerminationPolicy::Controlled, 3, PrLevel::Off), 7);
    let rec = run_once(&cfg, &t, &chans);
    assert!(rec.completed);
    let tables = rec.nodes[0].tables_at_term.as_ref().unwrap();
    assert_eq!(tables.direct, BTreeSet::from([NodeId(1)]));
    assert_eq!(tables.indirect, BTreeSet::from([NodeId(2)]));
    assert!(tables.intended.is_empty());
    assert_eq!(rec.ctm, 100.0);
}

/// A node that learns an in-range neighbour second-hand stops at N-1 under
/// the baseline rule; the coordinate view shows the neighbour still pending.
#[test]
fn premature_termination_is_witnessed() {
    let k = key(Protocol::Mdmca, TerminationPolicy::Baseline, 10, PrLevel::Off);
    let mut witnessed = 0;
    for s in 0..200u64 {
        let cfg = RunConfig::new(k.clone(), s);
        let (t, chans) = cfg.prepare(s).unwrap();
        let rec = run_once(&cfg, &t, &chans);
        assert!(rec.completed);
        assert!(rec.ctm <= 100.0);
        for (i, out) in rec.nodes.iter().enumerate() {
            let at_term = out.tables_at_term.as_ref().unwrap();
            if at_term.direct == *t.direct(NodeId(i)) {
                continue;
            }
            witnessed += 1;
            let mut state = NodeState::new(NodeId(i), t.coords(NodeId(i)), false);
            state.tables = at_term.clone();
            assert!(state.check_termination(TerminationPolicy::Baseline, 10));
            let view = state.validated_view(100.0);
            let missing: BTreeSet<NodeId> = t.direct(NodeId(i)) - &at_term.direct;
            assert_eq!(view.tables.intended, missing);
            assert!(!view.check_termination(TerminationPolicy::Controlled, 10));
            assert!(out.full.unwrap() > out.term.unwrap());
        }
    }
    assert!(witnessed > 0);
}

/// Channel selection never reads the tables, so the dual-clock protocols
/// see identical handshakes; controlled termination lands exactly where the
/// baseline variant first reaches the ground truth.
#[test]
fn controlled_termination_coincides_with_full_discovery() {
    for s in 0..100u64 {
        for pr in [PrLevel::Off, PrLevel::High] {
            let base = RunConfig::new(key(Protocol::Mdmca, TerminationPolicy::Baseline, 10, pr), s);
            let ctrl = RunConfig::new(key(Protocol::Mrdmca, TerminationPolicy::Controlled, 10, pr), s);
            let (t, chans) = base.prepare(s).unwrap();
            let a = run_once(&base, &t, &chans);
            let b = run_once(&ctrl, &t, &chans);
            for (x, y) in a.nodes.iter().zip(&b.nodes) {
                assert_eq!(x.full, y.term);
                assert_eq!(x.final_tables.direct, y.final_tables.direct);
            }
            assert_eq!(b.node_mean(Mark::Full), b.node_mean(Mark::Policy));
        }
    }
}

/// CTM recomputed from scratch by walking coordinates, not the edge set.
#[test]
fn ctm_matches_hand_recount_on_five_nodes() {
    let points = [(0.0, 0.0), (60.0, 0.0), (120.0, 0.0), (60.0, 60.0), (400.0, 400.0)];
    let t = topo(&points);
    let discovered: Vec<BTreeSet<NodeId>> = vec![
        BTreeSet::from([NodeId(1)]),
        BTreeSet::from([NodeId(0), NodeId(2), NodeId(3)]),
        BTreeSet::new(),
        BTreeSet::from([NodeId(1), NodeId(2)]),
        BTreeSet::new(),
    ];
    let ptms: Vec<f64> = (0..5).map(|i| ptm(&discovered[i], t.direct(NodeId(i)))).collect();
    // 0 sees {1,3}; 1 sees {0,2,3}; 2 sees {1,3}; 3 sees {0,1,2}; 4 is isolated.
    assert_eq!(ptms, vec![50.0, 100.0, 0.0, 200.0 / 3.0, 100.0]);
    assert!((ctm(&ptms) - (50.0 + 100.0 + 0.0 + 200.0 / 3.0 + 100.0) / 5.0).abs() < 1e-12);
}

#[test]
fn runs_are_reproducible_and_capped() {
    let k = key(Protocol::Rcs, TerminationPolicy::Baseline, 6, PrLevel::High);
    let cfg = RunConfig::new(k.clone(), 99);
    let (t, c) = cfg.prepare(99).unwrap();
    assert_eq!(run_once(&cfg, &t, &c), run_once(&cfg, &t, &c));

    let capped = RunConfig::new(ScenarioKey { max_slots: 1, ..k }, 99);
    let rec = run_once(&capped, &t, &c);
    assert!(!rec.completed);
    assert_eq!(rec.half_slots, 2);
    assert_eq!(rec.node_mean(Mark::Full), None);
}

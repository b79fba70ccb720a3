use std::collections::BTreeSet;

use proptest::prelude::*;

use crn_rendezvous::engine::{run_once, RunConfig, ScenarioKey, DEFAULT_MAX_SLOTS};
use crn_rendezvous::pr_activity::PrLevel;
use crn_rendezvous::protocol::{
    process_handshake, MessageKind, NeighbourTables, NodeState, Placement, TerminationPolicy,
};
use crn_rendezvous::topology::{place_uniform, Area, Coordinates, GroundTopology, NodeId};
use crn_rendezvous::{seed, Protocol};

const R: f64 = 100.0;

fn coords_strategy(n: std::ops::Range<usize>, side: f64) -> impl Strategy<Value = Vec<Coordinates>> {
    prop::collection::vec((0.0..side, 0.0..side), n)
        .prop_map(|v| v.into_iter().map(|(x, y)| Coordinates::new(x, y)).collect())
}

fn brute_edges(coords: &[Coordinates], r: f64) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for i in 0..coords.len() {
        for j in i + 1..coords.len() {
            let (dx, dy) = (coords[i].x - coords[j].x, coords[i].y - coords[j].y);
            if dx * dx + dy * dy <= r * r {
                out.insert((i, j));
            }
        }
    }
    out
}

fn fresh_nodes(coords: &[Coordinates], validate: bool) -> Vec<NodeState> {
    coords
        .iter()
        .enumerate()
        .map(|(i, c)| NodeState::new(NodeId(i), *c, validate))
        .collect()
}

fn pair_mut(nodes: &mut [NodeState], a: usize, b: usize) -> (&mut NodeState, &mut NodeState) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = nodes.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = nodes.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

/// Runs a random handshake schedule restricted to in-range pairs.
fn replay(coords: &[Coordinates], validate: bool, schedule: &[(usize, usize)]) -> Vec<Vec<NodeState>> {
    let mut nodes = fresh_nodes(coords, validate);
    let mut history = vec![nodes.clone()];
    let n = coords.len();
    for &(a, b) in schedule {
        let (a, b) = (a % n, b % n);
        if a == b || !coords[a].within(&coords[b], R) {
            continue;
        }
        let (x, y) = pair_mut(&mut nodes, a, b);
        process_handshake(x, y, R);
        history.push(nodes.clone());
    }
    history
}

fn subset(a: &NeighbourTables, b: &NeighbourTables) -> bool {
    let known = |t: &NeighbourTables| -> BTreeSet<NodeId> {
        t.direct
            .iter()
            .chain(&t.indirect)
            .chain(&t.intended)
            .copied()
            .collect()
    };
    a.direct.is_subset(&b.direct) && known(a).is_subset(&known(b))
}

fn key(protocol: Protocol, termination: TerminationPolicy, nodes: usize) -> ScenarioKey {
    ScenarioKey {
        protocol,
        termination,
        nodes,
        channels: 10,
        similarity: 2,
        pr: PrLevel::Off,
        range: R,
        area: Area::square(250.0),
        max_slots: DEFAULT_MAX_SLOTS,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn edge_set_matches_pairwise_distances(coords in coords_strategy(1..16, 300.0)) {
        let topo = GroundTopology::from_coordinates(coords.clone(), R);
        let got: BTreeSet<(usize, usize)> = topo.edges().iter().map(|(a, b)| (a.0, b.0)).collect();
        prop_assert_eq!(got, brute_edges(&coords, R));
        for i in topo.nodes() {
            prop_assert!(!topo.direct(i).contains(&i));
            prop_assert!(topo.direct(i).is_disjoint(topo.indirect(i)));
        }
    }

    #[test]
    fn tables_stay_disjoint_and_only_grow(
        coords in coords_strategy(2..9, 250.0),
        schedule in prop::collection::vec((0usize..9, 0usize..9), 0..60),
        validate in any::<bool>(),
    ) {
        let history = replay(&coords, validate, &schedule);
        for step in history.windows(2) {
            for (before, after) in step[0].iter().zip(&step[1]) {
                prop_assert!(after.tables.is_disjoint());
                prop_assert!(subset(&before.tables, &after.tables));
                prop_assert!(after.tables.placement(after.id).is_none());
            }
        }
    }

    #[test]
    fn direct_lists_are_sound_and_symmetric(
        coords in coords_strategy(2..9, 250.0),
        schedule in prop::collection::vec((0usize..9, 0usize..9), 0..60),
        validate in any::<bool>(),
    ) {
        let nodes = replay(&coords, validate, &schedule).pop().unwrap();
        for a in &nodes {
            for d in &a.tables.direct {
                prop_assert!(a.coords.within(&coords[d.0], R));
                prop_assert!(nodes[d.0].tables.direct.contains(&a.id));
            }
            if !validate {
                prop_assert!(a.tables.intended.is_empty());
            }
        }
    }

    #[test]
    fn placement_follows_classification_rule(
        coords in coords_strategy(2..9, 250.0),
        schedule in prop::collection::vec((0usize..9, 0usize..9), 0..60),
        validate in any::<bool>(),
    ) {
        let nodes = replay(&coords, validate, &schedule).pop().unwrap();
        for a in &nodes {
            for (u, c) in &a.tables.coords {
                let expected = if a.tables.direct.contains(u) {
                    Placement::Direct
                } else if validate && a.coords.within(c, R) {
                    Placement::Intended
                } else {
                    Placement::Indirect
                };
                prop_assert_eq!(a.tables.placement(*u), Some(expected));
                prop_assert_eq!(*c, coords[u.0]);
            }
        }
    }

    #[test]
    fn snapshot_exchange_equals_three_way_handshake(
        coords in coords_strategy(2..8, 200.0),
        schedule in prop::collection::vec((0usize..8, 0usize..8), 0..40),
        validate in any::<bool>(),
        pick in (0usize..8, 0usize..8),
    ) {
        let nodes = replay(&coords, validate, &schedule).pop().unwrap();
        let n = coords.len();
        let (a, b) = (pick.0 % n, pick.1 % n);
        prop_assume!(a != b && coords[a].within(&coords[b], R));

        let mut sequential = nodes.clone();
        let (x, y) = pair_mut(&mut sequential, a, b);
        process_handshake(x, y, R);

        // Both sides read the other's tables as they stood before the exchange.
        let mut simultaneous = nodes.clone();
        let (ma, mb) = (nodes[a].message(MessageKind::DReq), nodes[b].message(MessageKind::DReq));
        simultaneous[a].absorb(&mb, R);
        simultaneous[a].confirm_direct(NodeId(b), mb.sender_coords);
        simultaneous[b].absorb(&ma, R);
        simultaneous[b].confirm_direct(NodeId(a), ma.sender_coords);

        prop_assert_eq!(&sequential[a].tables, &simultaneous[a].tables);
        prop_assert_eq!(&sequential[b].tables, &simultaneous[b].tables);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn controlled_runs_end_with_ground_truth(master in any::<u64>(), nodes in 2usize..9) {
        let cfg = RunConfig::new(key(Protocol::Mrdmca, TerminationPolicy::Controlled, nodes), master);
        let (topo, chans) = cfg.prepare(master).unwrap();
        let rec = run_once(&cfg, &topo, &chans);
        prop_assert!(rec.completed);
        prop_assert_eq!(rec.ctm, 100.0);
        for (i, out) in rec.nodes.iter().enumerate() {
            let at_term = out.tables_at_term.as_ref().unwrap();
            prop_assert_eq!(&at_term.direct, topo.direct(NodeId(i)));
            prop_assert!(at_term.intended.is_empty());
            prop_assert_eq!(out.term, out.full);
        }
    }

    #[test]
    fn engine_marks_are_ordered(master in any::<u64>(), nodes in 2usize..9, p in 0usize..5) {
        let protocol = Protocol::ALL[p];
        let cfg = RunConfig::new(key(protocol, protocol.native_termination(), nodes), master);
        let (topo, chans) = cfg.prepare(master).unwrap();
        let rec = run_once(&cfg, &topo, &chans);
        prop_assert!(rec.completed);
        for (i, out) in rec.nodes.iter().enumerate() {
            let (n1, full, term) = (out.n1.unwrap(), out.full.unwrap(), out.term.unwrap());
            prop_assert!(n1 <= full);
            prop_assert!(n1 <= term);
            prop_assert!(out.final_tables.direct.is_subset(topo.direct(NodeId(i))));
            prop_assert_eq!(&out.final_tables.direct, topo.direct(NodeId(i)));
            prop_assert!(rec.ctm <= 100.0);
        }
    }

    #[test]
    fn uniform_placement_stays_in_area(seed_value in any::<u64>(), n in 1usize..40, w in 1.0f64..2000.0, h in 1.0f64..2000.0) {
        let area = Area::new(w, h);
        let pts = place_uniform(n, area, &mut seed::rng(seed_value));
        prop_assert_eq!(pts.len(), n);
        prop_assert!(pts.iter().all(|p| area.contains(p)));
    }
}

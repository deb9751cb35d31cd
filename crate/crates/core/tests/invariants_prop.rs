use std::collections::BTreeSet;

use proptest::prelude::*;
use swarmheal::gcn::GcoOperator;
use swarmheal::graph::{centroid, TopologyMatrix};
use swarmheal::sim::{apply_ued, broadcast_round, SimState, UedEvent};
use swarmheal::vrg::{build_vrg, virtual_distance_for};
use swarmheal::LinkPredicate;

fn positions(max: usize) -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec(
        (0.0..400.0f64, 0.0..400.0f64, 0.0..100.0f64).prop_map(|(x, y, z)| [x, y, z]),
        2..max,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn topology_round_trips(ps in positions(30)) {
        let t = TopologyMatrix::from_positions(ps).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        prop_assert_eq!(&TopologyMatrix::read_csv(&buf[..]).unwrap(), &t);
        let json = serde_json::to_string(&t).unwrap();
        prop_assert_eq!(&serde_json::from_str::<TopologyMatrix<f64>>(&json).unwrap(), &t);
    }

    #[test]
    fn gco_step_keeps_centroid(ps in positions(25), eps in 0.05..1.0f64, eta in 0.0..1.0f64) {
        let t = TopologyMatrix::from_positions(ps).unwrap();
        let vd = virtual_distance_for(&t, eta).unwrap();
        let vrg = build_vrg(t.clone(), vd.d_v_m).unwrap();
        let op = GcoOperator::for_vrg(&vrg, eps).unwrap();
        let next = t.from_matrix(&op.apply(&t.to_matrix()).unwrap()).unwrap();
        let (a, b) = (centroid(&t), centroid(&next));
        for k in 0..3 {
            prop_assert!((a[k] - b[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn databases_stay_sound(ps in positions(30), picks in prop::collection::vec(any::<prop::sample::Index>(), 1..8), rounds in 0usize..4) {
        let t = TopologyMatrix::from_positions(ps).unwrap();
        let n = t.len();
        let destroyed: BTreeSet<usize> = picks.iter().map(|ix| ix.index(n) + 1).collect();
        prop_assume!(destroyed.len() < n);
        let link = LinkPredicate::radius(120.0);
        let mut s = SimState::new(&t);
        apply_ued(&mut s, &UedEvent { time_step: 1, destroyed: destroyed.clone() }, &link).unwrap();
        for _ in 0..rounds {
            broadcast_round(&mut s, &link);
        }
        prop_assert!(s.iisr_sound());
        for (i, idb) in &s.idbs {
            prop_assert!(idb.iisr.contains(i));
            prop_assert!(idb.believed.keys().all(|k| idb.iisr.contains(k)));
            prop_assert!(idb.believed_topology().is_ok());
        }
    }
}

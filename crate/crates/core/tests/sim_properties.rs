use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swarmheal::gcn::{GcnHyper, GcnProblem};
use swarmheal::graph::TopologyMatrix;
use swarmheal::meta::{meta_train_all, MetaConfig, MetaParamStore};
use swarmheal::scalar::dist3;
use swarmheal::sim::{
    cr_mgc_heal, fly_to_targets, run_general_with, sample_one_off_ued, sample_schedule, HealConfig, PolicyKind,
    RunOptions, Scenario, UedEvent,
};
use swarmheal::{LinkPredicate, SceneBounds};

fn small_store() -> MetaParamStore {
    let cfg = MetaConfig {
        u0: 20,
        ..MetaConfig::default()
    };
    meta_train_all(30, &cfg).unwrap().0
}

#[test]
fn glob_policy_reproduces_one_off_heal() {
    let store = small_store();
    let horizon = 300;
    let heal = HealConfig {
        kappa: horizon,
        ..HealConfig::default()
    };
    let link = heal.link().unwrap();
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let initial = SceneBounds::DESK.sample_connected(30, &link, &mut rng).unwrap();
        let mut event = sample_one_off_ued(&initial, 6, &link, &mut rng).unwrap();
        event.time_step = 5;
        let post = initial.without(&event.destroyed).unwrap();
        let healed = cr_mgc_heal(&post, Some(&store), &heal).unwrap();

        let scenario = Scenario {
            initial_topology: initial,
            events: vec![event],
            horizon,
            heal: heal.clone(),
            seed,
        };
        let out = run_general_with(
            &scenario,
            PolicyKind::CrMgcmGlob,
            Some(&store),
            RunOptions {
                record_trajectory: true,
                spectral_spot_checks: 10,
            },
            |_| {},
        )
        .unwrap();
        let mut by_step: BTreeMap<usize, BTreeMap<usize, [f64; 3]>> = BTreeMap::new();
        for &(t, i, p) in &out.trajectory {
            by_step.entry(t).or_default().insert(i, p);
        }
        let js = healed.flight.steps();
        assert!(js > 0);
        for k in 0..=js + 5 {
            let t = 4 + k;
            let want = &healed.flight.trajectory[k.min(js)];
            for (i, p) in want.rows() {
                assert_eq!(by_step[&t][&i], *p, "seed {seed} step {t} UAV {i}");
            }
        }
        assert_eq!(out.metrics.j_s, vec![Some(js)]);
    }
}

#[test]
fn general_runs_keep_invariants() {
    let store = small_store();
    let heal = HealConfig::default();
    let link = heal.link().unwrap();
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let initial = SceneBounds::DESK.sample_connected(30, &link, &mut rng).unwrap();
        let events = sample_schedule(&initial, &[(5, 6), (60, 3)], &mut rng).unwrap();
        let scenario = Scenario {
            initial_topology: initial,
            events,
            horizon: 200,
            heal: heal.clone(),
            seed,
        };
        for policy in PolicyKind::ALL {
            let out = run_general_with(
                &scenario,
                policy,
                Some(&store),
                RunOptions {
                    record_trajectory: true,
                    spectral_spot_checks: 10,
                },
                |st| {
                    assert!(st.iisr_sound(), "{policy:?} step {}", st.t);
                    for (i, idb) in &st.idbs {
                        // Own belief lags motion by at most one step.
                        assert!(dist3(&idb.believed[i], &st.positions[i]) <= heal.v0 * (1.0 + 1e-12));
                    }
                },
            )
            .unwrap();
            assert_eq!(out.metrics.cluster_trace.len(), 200);
            assert!((0.0..=1.0).contains(&out.metrics.j_c));
            assert_eq!(out.steps[0].max_center_gap_m, 0.0);

            // Speed contract.
            let mut last: BTreeMap<usize, [f64; 3]> = BTreeMap::new();
            for &(_, i, q) in &out.trajectory {
                if let Some(p) = last.insert(i, q) {
                    assert!(dist3(&p, &q) <= heal.v0 * (1.0 + 1e-12));
                }
            }

            // With ground truth, UAVs stop as soon as the swarm is connected again.
            if policy != PolicyKind::CrMgcm {
                for s in out.steps.iter().filter(|s| s.t > 60) {
                    if s.clusters == 1 {
                        let later = out.steps.iter().filter(|r| r.t > s.t);
                        assert!(later.clone().all(|r| r.moving == 0 && r.clusters == 1), "{policy:?}");
                        break;
                    }
                }
            }
        }
    }
}

#[test]
fn two_uavs_far_apart_fallback_takes_120_steps() {
    let t = TopologyMatrix::from_positions(vec![[0.0; 3], [360.0, 0.0, 0.0]]).unwrap();
    let link = LinkPredicate::radius(120.0);
    let problem = GcnProblem::new(t.clone(), &GcnHyper::default(), &link).unwrap();
    let (targets, _) = problem.gco_fallback(1.0).unwrap();
    let flight = fly_to_targets(&t, &targets, 1.0, &link).unwrap();
    assert!(flight.connected);
    assert_eq!(flight.steps(), 120);

    let out = cr_mgc_heal(&t, None, &HealConfig::default()).unwrap();
    assert!(out.metrics.j_s[0].unwrap() <= 120);
}

#[test]
fn one_off_sampling_is_reproducible() {
    let link = LinkPredicate::radius(120.0);
    let draw = || {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let init = SceneBounds::DESK.sample_connected(40, &link, &mut rng).unwrap();
        sample_one_off_ued(&init, 10, &link, &mut rng).unwrap()
    };
    let a: UedEvent = draw();
    assert_eq!(a, draw());
    assert_eq!(a.destroyed.len(), 10);
}

#[test]
fn store_file_round_trip() {
    let store = small_store();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.json");
    store.save(&path).unwrap();
    let back = MetaParamStore::load(&path).unwrap();
    assert_eq!(back, store);
    let again = dir.path().join("again.json");
    back.save(&again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

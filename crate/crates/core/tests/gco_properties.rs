mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swarmheal::error::Error;
use swarmheal::gcn::{gco_iterate, gco_step, step_size, GcoConfig, GcoOperator};
use swarmheal::graph::{build_graph, centroid, laplacian, TopologyMatrix};
use swarmheal::linalg::{infinity_norm, DenseMatrix};
use swarmheal::vrg::{build_vrg, virtual_distance_for};

fn random_vrg(rng: &mut ChaCha8Rng, n: usize, eta: f64) -> swarmheal::Graph {
    let t = common::random_topology(rng, n, 500.0, 100.0);
    let vd = virtual_distance_for(&t, eta).unwrap();
    build_vrg(t, vd.d_v_m).unwrap()
}

#[test]
fn centroid_is_preserved() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..1000 {
        let n = rng.gen_range(2..=20);
        let eta = rng.gen();
        let g = random_vrg(&mut rng, n, eta);
        let eps = rng.gen_range(0.05..=1.0);
        let t = g.topology();
        let next = gco_step(t, &laplacian(&g), step_size(&g, eps)).unwrap();
        let (a, b) = (centroid(t), centroid(&next));
        let scale = a.iter().map(|v| v.abs()).fold(1.0, f64::max);
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() <= 1e-9 * scale, "{a:?} vs {b:?}");
        }
    }
}

fn frobenius(m: &DenseMatrix<f64>) -> f64 {
    m.frobenius_norm()
}

#[test]
fn mean_matched_pairs_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..1000 {
        let n = rng.gen_range(2..=20);
        let eta = rng.gen();
        let g = random_vrg(&mut rng, n, eta);
        let op = GcoOperator::for_vrg(&g, 1.0).unwrap();
        let x = g.topology().to_matrix();
        // A second configuration with the same centroid.
        let mut y = DenseMatrix::from_fn(n, 3, |_, _| rng.gen_range(-300.0..300.0));
        for k in 0..3 {
            let shift = (0..n).map(|i| y[(i, k)] - x[(i, k)]).sum::<f64>() / n as f64;
            for i in 0..n {
                y[(i, k)] -= shift;
            }
        }
        let d0 = x.sub(&y).unwrap();
        let d1 = op.apply(&x).unwrap().sub(&op.apply(&y).unwrap()).unwrap();
        assert!(frobenius(&d1) <= frobenius(&d0) * (1.0 + 1e-12));
        assert!(infinity_norm(&d1) <= infinity_norm(&d0) * (1.0 + 1e-12));
    }
}

#[test]
fn centroid_configuration_is_fixed() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let g = random_vrg(&mut rng, 9, 0.3);
    let c = centroid(g.topology());
    let t = TopologyMatrix::from_positions(vec![c; 9]).unwrap();
    let next = gco_step(&t, &laplacian(&g), step_size(&g, 1.0)).unwrap();
    for (p, q) in t.positions().iter().zip(next.positions()) {
        for k in 0..3 {
            assert!((p[k] - q[k]).abs() < 1e-9);
        }
    }
}

#[test]
fn long_runs_collapse_onto_centroid() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..100 {
        let n = rng.gen_range(2..=20);
        let g = random_vrg(&mut rng, n, 0.3);
        let l = laplacian(&g);
        let h = step_size(&g, 0.9);
        let mut t = g.topology().clone();
        let before = common::max_dist_to_centroid(&t);
        for _ in 0..200 {
            t = gco_step(&t, &l, h).unwrap();
        }
        assert!(common::max_dist_to_centroid(&t) * 1e6 <= before);
    }
}

#[test]
fn overshooting_step_diverges_on_small_complete_graph() {
    // K3: eigenvalues of I - H L are 1 and 1 - 3H = -1.7 at H = 1.8 / 2.
    let t = TopologyMatrix::from_positions(vec![[0.0; 3], [300.0, 0.0, 0.0], [150.0, 250.0, 0.0]]).unwrap();
    let g = build_graph(t.clone(), |_| true);
    let r = gco_iterate(&t, &g, &GcoConfig::new(1.8), |d| d <= 120.0);
    assert!(matches!(r, Err(Error::Diverged { .. })), "{r:?}");
}

#[test]
fn deviation_gain_matches_closed_forms() {
    let pts = |n: usize| TopologyMatrix::from_positions((0..n).map(|i| [i as f64 * 100.0, 0.0, 0.0]).collect()).unwrap();
    for n in 3..12 {
        // Complete graph: nonzero Laplacian eigenvalues all n, ||A||_inf = n - 1.
        let g = build_graph(pts(n), |_| true);
        for &eps in &[0.5, 1.0, 1.8] {
            let op = GcoOperator::for_vrg(&g, eps).unwrap();
            let want = (1.0 - eps * n as f64 / (n - 1) as f64).abs();
            assert!((op.deviation_gain().unwrap() - want).abs() < 1e-9);
        }
        // Path graph: eigenvalues 2 - 2 cos(k pi / n), ||A||_inf = 2.
        let g = build_graph(pts(n), |d| d <= 100.0);
        for &eps in &[0.5, 1.0, 1.8] {
            let op = GcoOperator::for_vrg(&g, eps).unwrap();
            let want = (1..n)
                .map(|k| (1.0 - eps * (2.0 - 2.0 * (k as f64 * std::f64::consts::PI / n as f64).cos()) / 2.0).abs())
                .fold(0.0, f64::max);
            assert!((op.deviation_gain().unwrap() - want).abs() < 1e-9);
        }
    }
}

#[test]
fn gain_never_exceeds_one_inside_the_theoretical_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..300 {
        let n = rng.gen_range(2..=20);
        let eta = rng.gen_range(0.0..=1.0);
        let g = random_vrg(&mut rng, n, eta);
        let eps = rng.gen_range(0.01..=1.0);
        assert!(GcoOperator::for_vrg(&g, eps).unwrap().deviation_gain().unwrap() <= 1.0 + 1e-9);
    }
}

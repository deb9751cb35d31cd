mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swarmheal::graph::{build_graph, cluster_count, laplacian, laplacian_zero_tol, zero_eig_multiplicity, UnionFind};
use swarmheal::linalg::{symmetric_eigenvalues, DenseMatrix};

fn laplacian_of(n: usize, edges: &[(usize, usize)]) -> DenseMatrix<f64> {
    let mut l = DenseMatrix::zeros(n, n);
    for &(a, b) in edges {
        l[(a, b)] -= 1.0;
        l[(b, a)] -= 1.0;
        l[(a, a)] += 1.0;
        l[(b, b)] += 1.0;
    }
    l
}

fn assert_spectrum(l: &DenseMatrix<f64>, mut want: Vec<f64>) {
    want.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let got = symmetric_eigenvalues(l).unwrap();
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-9, "{got:?} vs {want:?}");
    }
}

#[test]
fn jacobi_reproduces_closed_form_spectra() {
    use std::f64::consts::PI;
    for n in 2..=12 {
        let path: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        assert_spectrum(&laplacian_of(n, &path), (0..n).map(|k| 2.0 - 2.0 * (k as f64 * PI / n as f64).cos()).collect());

        if n >= 3 {
            let cycle: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
            assert_spectrum(
                &laplacian_of(n, &cycle),
                (0..n).map(|k| 2.0 - 2.0 * (2.0 * PI * k as f64 / n as f64).cos()).collect(),
            );
        }

        let complete: Vec<_> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        let mut want = vec![n as f64; n - 1];
        want.push(0.0);
        assert_spectrum(&laplacian_of(n, &complete), want);

        let star: Vec<_> = (1..n).map(|b| (0, b)).collect();
        let mut want = vec![1.0; n.saturating_sub(2)];
        want.extend([0.0, n as f64]);
        assert_spectrum(&laplacian_of(n, &star), want);
    }
}

#[test]
fn union_find_matches_zero_multiplicity_on_random_edge_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=12);
        let p = rng.gen::<f64>() * 0.5;
        let mut uf = UnionFind::new(n);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.gen::<f64>() < p {
                    edges.push((a, b));
                    uf.union(a, b);
                }
            }
        }
        let l = laplacian_of(n, &edges);
        assert_eq!(uf.components(), zero_eig_multiplicity(&l, laplacian_zero_tol(&l)).unwrap());
    }
}

#[test]
fn geometric_graphs_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=12);
        let t = common::random_topology(&mut rng, n, 400.0, 100.0);
        let g = build_graph(t, |d| d <= 120.0);
        let l = laplacian(&g);
        assert_eq!(cluster_count(&g), zero_eig_multiplicity(&l, laplacian_zero_tol(&l)).unwrap());
    }
}

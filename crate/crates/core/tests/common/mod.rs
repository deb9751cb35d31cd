#![allow(dead_code)]

use rand::Rng;
use swarmheal::graph::TopologyMatrix;

/// `n` uniform points in `[0, side]^2 x [0, height]`.
pub fn random_topology<R: Rng>(rng: &mut R, n: usize, side: f64, height: f64) -> TopologyMatrix<f64> {
    TopologyMatrix::from_positions(
        (0..n)
            .map(|_| [rng.gen::<f64>() * side, rng.gen::<f64>() * side, rng.gen::<f64>() * height])
            .collect(),
    )
    .unwrap()
}

pub fn max_dist_to_centroid(t: &TopologyMatrix<f64>) -> f64 {
    let c = swarmheal::graph::centroid(t);
    t.positions()
        .iter()
        .map(|p| swarmheal::scalar::dist3(p, &c))
        .fold(0.0, f64::max)
}

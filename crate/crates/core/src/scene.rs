//! Axis-aligned deployment volume and random topology sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::LinkPredicate;
use crate::error::{Error, Result};
use crate::graph::TopologyMatrix;
use crate::scalar::Vec3;

/// Box `[0, x] x [0, y] x [0, z]` in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneBounds {
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
}

impl SceneBounds {
    pub const DESK: SceneBounds = SceneBounds {
        x_m: 500.0,
        y_m: 500.0,
        z_m: 100.0,
    };
    pub const FULL: SceneBounds = SceneBounds {
        x_m: 1000.0,
        y_m: 1000.0,
        z_m: 100.0,
    };

    pub fn validate(&self) -> Result<()> {
        if [self.x_m, self.y_m, self.z_m].iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid scene bounds {self:?}")))
        }
    }

    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3<f64> {
        [
            rng.gen::<f64>() * self.x_m,
            rng.gen::<f64>() * self.y_m,
            rng.gen::<f64>() * self.z_m,
        ]
    }

    /// `n` independent uniform positions, indexed `1..=n`.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<TopologyMatrix<f64>> {
        TopologyMatrix::from_positions((0..n).map(|_| self.sample_point(rng)).collect())
    }

    /// Connected swarm grown one UAV at a time: each candidate is uniform in the box
    /// and accepted only if it links to an already placed UAV.
    pub fn sample_connected<R: Rng + ?Sized>(
        &self,
        n: usize,
        link: &LinkPredicate<f64>,
        rng: &mut R,
    ) -> Result<TopologyMatrix<f64>> {
        const MAX_REJECTIONS: usize = 100_000;
        if n == 0 {
            return Err(Error::Domain("swarm needs at least one UAV".into()));
        }
        let mut placed = vec![self.sample_point(rng)];
        let mut rejections = 0;
        while placed.len() < n {
            let p = self.sample_point(rng);
            if placed.iter().any(|q| link.linked(crate::scalar::dist3(&p, q))) {
                placed.push(p);
                rejections = 0;
            } else {
                rejections += 1;
                if rejections >= MAX_REJECTIONS {
                    return Err(Error::GenerationInfeasible { attempts: rejections });
                }
            }
        }
        TopologyMatrix::from_positions(placed)
    }
}

impl Default for SceneBounds {
    fn default() -> Self {
        Self::DESK
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::cluster_count_with;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_inside_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = SceneBounds::DESK.sample_uniform(100, &mut rng).unwrap();
        for p in t.positions() {
            assert!((0.0..=500.0).contains(&p[0]) && (0.0..=500.0).contains(&p[1]) && (0.0..=100.0).contains(&p[2]));
        }
    }

    #[test]
    fn connected_sampler() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let link = LinkPredicate::radius(120.0);
        let t = SceneBounds::DESK.sample_connected(50, &link, &mut rng).unwrap();
        assert_eq!(t.len(), 50);
        assert_eq!(cluster_count_with(&t, |d| link.linked(d)), 1);
    }
}

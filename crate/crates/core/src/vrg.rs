//! Virtual communication relaxing: the virtual distance and the virtual RUAV graph (VRG).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, cluster_count_with, laplacian, laplacian_zero_tol, zero_eig_multiplicity, RuavGraph, TopologyMatrix};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirtualDistance<T> {
    pub d_min_m: T,
    pub d_max_m: T,
    pub eta: T,
    pub d_v_m: T,
}

fn sorted_distances<T: Scalar>(topology: &TopologyMatrix<T>) -> Result<Vec<T>> {
    if topology.len() < 2 {
        return Err(Error::Degenerate("virtual distances need at least two RUAVs".into()));
    }
    let mut d: Vec<T> = topology.pairwise().into_iter().map(|(_, _, d)| d).collect();
    d.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    Ok(d)
}

/// Smallest pairwise distance whose threshold graph is connected.
///
/// Connectivity is monotone in the threshold, so this bisects the ascending
/// distance multiset for the leftmost connecting entry.
pub fn min_virtual_distance<T: Scalar>(topology: &TopologyMatrix<T>) -> Result<T> {
    let d = sorted_distances(topology)?;
    let connected = |m: T| cluster_count_with(topology, |x| x <= m) == 1;
    let (mut lo, mut hi) = (0usize, d.len() - 1);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if connected(d[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(d[lo])
}

/// Reference linear scan: walk the ascending distances and stop at the first whose
/// threshold-graph Laplacian has a simple zero eigenvalue.
pub fn min_virtual_distance_scan<T: Scalar>(topology: &TopologyMatrix<T>) -> Result<T> {
    let d = sorted_distances(topology)?;
    let mut last = d[0];
    for &m in &d {
        last = m;
        let g = build_graph(topology.clone(), |x| x <= m);
        let l = laplacian(&g);
        if zero_eig_multiplicity(&l, laplacian_zero_tol(&l))? == 1 {
            break;
        }
    }
    Ok(last)
}

/// Largest pairwise distance.
pub fn max_virtual_distance<T: Scalar>(topology: &TopologyMatrix<T>) -> Result<T> {
    Ok(*sorted_distances(topology)?.last().expect("nonempty"))
}

/// `d_v = eta d_min + (1 - eta) d_max`.
pub fn virtual_distance<T: Scalar>(d_min: T, d_max: T, eta: T) -> Result<VirtualDistance<T>> {
    if !(eta >= T::zero() && eta <= T::one()) {
        return Err(Error::Domain(format!("eta must lie in [0, 1], got {eta}")));
    }
    if !(d_min <= d_max) {
        return Err(Error::Domain(format!("d_min {d_min} exceeds d_max {d_max}")));
    }
    let d_v = eta * d_min + (T::one() - eta) * d_max;
    // Guard the blend against rounding outside [d_min, d_max].
    let d_v = d_v.max(d_min).min(d_max);
    Ok(VirtualDistance {
        d_min_m: d_min,
        d_max_m: d_max,
        eta,
        d_v_m: d_v,
    })
}

/// Virtual distance of a topology for a given blend.
pub fn virtual_distance_for<T: Scalar>(topology: &TopologyMatrix<T>, eta: T) -> Result<VirtualDistance<T>> {
    virtual_distance(min_virtual_distance(topology)?, max_virtual_distance(topology)?, eta)
}

/// Graph with an edge for every pair within `d_v`; connected whenever `d_v >= d_min`.
pub fn build_vrg<T: Scalar>(topology: TopologyMatrix<T>, d_v: T) -> Result<RuavGraph<T>> {
    if topology.len() >= 2 {
        let d_min = min_virtual_distance(&topology)?;
        if d_v < d_min {
            return Err(Error::DisconnectedVrg {
                d_v: d_v.to_f64_lossy(),
                d_min: d_min.to_f64_lossy(),
            });
        }
    }
    Ok(build_graph(topology, |x| x <= d_v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> TopologyMatrix<f64> {
        TopologyMatrix::from_positions(xs.iter().map(|&x| [x, 0.0, 0.0]).collect()).unwrap()
    }

    #[test]
    fn min_distance_examples() {
        assert_eq!(min_virtual_distance(&line(&[0.0, 100.0, 250.0])).unwrap(), 150.0);
        assert_eq!(min_virtual_distance(&line(&[3.0, 10.0])).unwrap(), 7.0);
        let square = TopologyMatrix::from_positions(vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
        ])
        .unwrap();
        assert_eq!(min_virtual_distance(&square).unwrap(), 1.0);
        assert_eq!(min_virtual_distance_scan(&square).unwrap(), 1.0);
        assert!(matches!(min_virtual_distance(&line(&[0.0])), Err(Error::Degenerate(_))));
    }

    #[test]
    fn max_distance_examples() {
        assert_eq!(max_virtual_distance(&line(&[0.0, 7.0])).unwrap(), 7.0);
        assert_eq!(max_virtual_distance(&line(&[0.0, 100.0, 250.0])).unwrap(), 250.0);
        let s = 3.0_f64;
        let tri = TopologyMatrix::from_positions(vec![
            [0.0, 0.0, 0.0],
            [s, 0.0, 0.0],
            [s / 2.0, s * 3f64.sqrt() / 2.0, 0.0],
        ])
        .unwrap();
        assert!((max_virtual_distance(&tri).unwrap() - s).abs() < 1e-12);
        assert!(max_virtual_distance(&line(&[1.0])).is_err());
    }

    #[test]
    fn blend_examples() {
        assert_eq!(virtual_distance(150.0, 250.0, 1.0).unwrap().d_v_m, 150.0);
        assert_eq!(virtual_distance(150.0, 250.0, 0.0).unwrap().d_v_m, 250.0);
        assert!((virtual_distance(150.0_f64, 250.0, 0.3).unwrap().d_v_m - 220.0).abs() < 1e-12);
        assert!(virtual_distance(150.0, 250.0, 1.2).is_err());
        assert!(virtual_distance(150.0, 250.0, -0.1).is_err());
    }

    #[test]
    fn vrg_examples() {
        let t = line(&[0.0, 100.0, 250.0]);
        let g = build_vrg(t.clone(), 150.0).unwrap();
        assert!(g.has_edge(0, 1) && g.has_edge(1, 2) && !g.has_edge(0, 2));
        assert_eq!(g.cluster_count(), 1);

        let g = build_vrg(t.clone(), 250.0).unwrap();
        assert_eq!(g.edge_count(), 3);

        assert!(matches!(build_vrg(t, 149.999), Err(Error::DisconnectedVrg { .. })));
    }
}

//! Graph convolutional operation (GCO) and the Q-layer GCN built on it.
//!
//! The GCO over a connected virtual graph is `X <- (I - H L_v) X` with
//! `H = eps / ||A_v||_inf`. It preserves the centroid and, for `eps <= 1`,
//! contracts every topology towards it. A GCN layer is
//! `X^q = ReLU((I - H L_v) X^{q-1} Theta^q)` with a trainable 3x3 block per layer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::LinkPredicate;
use crate::error::{Error, Result};
use crate::graph::{centroid, cluster_count_with, laplacian, RuavGraph, TopologyMatrix};
use crate::linalg::{infinity_norm, symmetric_eigenvalues, DenseMatrix};
use crate::scalar::{dist3, Scalar, Vec3};
use crate::vrg::{build_vrg, virtual_distance_for};

pub use crate::linalg::infinity_norm as matrix_infinity_norm;

/// Spread growth (relative to the input) past which a GCO run is declared divergent.
const DIVERGENCE_FACTOR: f64 = 1e6;
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

pub type Block3<T> = [[T; 3]; 3];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcoConfig<T> {
    pub epsilon: T,
    pub max_iterations: usize,
}

impl<T: Scalar> GcoConfig<T> {
    pub fn new(epsilon: T) -> Self {
        Self {
            epsilon,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > T::zero()) || !self.epsilon.is_finite() {
            return Err(Error::Domain(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Domain("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// The dense operator `I - H L_v` together with its step `H`.
#[derive(Clone, Debug)]
pub struct GcoOperator<T> {
    matrix: DenseMatrix<T>,
    h: T,
}

impl<T: Scalar> GcoOperator<T> {
    pub fn new(l_v: &DenseMatrix<T>, h: T) -> Result<Self> {
        if !l_v.is_square() {
            return Err(Error::Contract("Laplacian must be square".into()));
        }
        if !(h > T::zero()) {
            return Err(Error::Domain(format!("H must be positive, got {h}")));
        }
        let n = l_v.rows();
        let matrix = DenseMatrix::from_fn(n, n, |i, j| {
            let id = if i == j { T::one() } else { T::zero() };
            id - h * l_v[(i, j)]
        });
        Ok(Self { matrix, h })
    }

    /// Operator of a virtual graph with `H = eps / ||A_v||_inf`.
    pub fn for_vrg(vrg: &RuavGraph<T>, epsilon: T) -> Result<Self> {
        Self::new(&laplacian(vrg), step_size(vrg, epsilon))
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.matrix
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn apply(&self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        self.matrix.matmul(x)
    }

    /// Spectral radius of the operator on deviations from the centroid.
    ///
    /// The constant vector is an eigenvector with eigenvalue 1 and every other
    /// eigenvalue is `1 - H lambda <= 1`, so this is the largest magnitude after
    /// dropping the top eigenvalue. Iterates diverge from the centroid iff it exceeds 1.
    pub fn deviation_gain(&self) -> Result<T> {
        let mut mu = symmetric_eigenvalues(&self.matrix)?;
        if mu.len() < 2 {
            return Ok(T::zero());
        }
        mu.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
        Ok(mu[1].abs().max(mu[mu.len() - 1].abs()))
    }
}

/// `H = eps / ||A_v||_inf`; a graph without edges gets `H = eps`.
pub fn step_size<T: Scalar>(vrg: &RuavGraph<T>, epsilon: T) -> T {
    let a = infinity_norm(&vrg.adjacency_matrix());
    if a > T::zero() {
        epsilon / a
    } else {
        epsilon
    }
}

/// One GCO application.
pub fn gco_step<T: Scalar>(topology: &TopologyMatrix<T>, l_v: &DenseMatrix<T>, h: T) -> Result<TopologyMatrix<T>> {
    if l_v.rows() != topology.len() || !l_v.is_square() {
        return Err(Error::Contract(format!(
            "Laplacian is {}x{} but topology has {} rows",
            l_v.rows(),
            l_v.cols(),
            topology.len()
        )));
    }
    let op = GcoOperator::new(l_v, h)?;
    topology.from_matrix(&op.apply(&topology.to_matrix())?)
}

fn spread<T: Scalar>(t: &TopologyMatrix<T>) -> T {
    let c = centroid(t);
    t.positions().iter().map(|p| dist3(p, &c)).fold(T::zero(), T::max)
}

/// Iterates the GCO until the topology is connected under `link`.
///
/// Returns the first connected iterate and its iteration count `k*`
/// (`k* = 0` when the input is already connected).
pub fn gco_iterate<T: Scalar>(
    topology: &TopologyMatrix<T>,
    vrg: &RuavGraph<T>,
    config: &GcoConfig<T>,
    link: impl Fn(T) -> bool,
) -> Result<(TopologyMatrix<T>, usize)> {
    config.validate()?;
    if vrg.len() != topology.len() {
        return Err(Error::Contract("VRG and topology sizes differ".into()));
    }
    if !vrg.is_connected() {
        return Err(Error::Contract("GCO iteration requires a connected VRG".into()));
    }
    if cluster_count_with(topology, &link) == 1 {
        return Ok((topology.clone(), 0));
    }
    let op = GcoOperator::for_vrg(vrg, config.epsilon)?;
    let limit = spread(topology) * T::lit(DIVERGENCE_FACTOR);
    let mut x = topology.to_matrix();
    for k in 1..=config.max_iterations {
        x = op.apply(&x)?;
        let current = topology.from_matrix(&x);
        let current = match current {
            Ok(t) => t,
            Err(_) => return Err(Error::Diverged { iterations: k }),
        };
        let s = spread(&current);
        if !s.is_finite() || s > limit {
            return Err(Error::Diverged { iterations: k });
        }
        if cluster_count_with(&current, &link) == 1 {
            return Ok((current, k));
        }
    }
    Err(Error::NonConvergence {
        iterations: config.max_iterations,
    })
}

/// Hyperparameters of the GCN and its training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnHyper<T> {
    /// Number of graph convolutional layers.
    pub q: usize,
    pub epsilon: T,
    pub eta: T,
    /// Lagrange multiplier on the cluster-count constraint, meters per extra cluster.
    pub tau: T,
    pub learning_rate: T,
    /// On-line training episodes `M`.
    pub online_episodes: usize,
    /// Length unit in which the displacement gradient is taken for parameter updates.
    pub length_scale_m: T,
}

impl<T: Scalar> Default for GcnHyper<T> {
    fn default() -> Self {
        Self {
            q: 8,
            epsilon: T::one(),
            eta: T::lit(0.3),
            tau: T::lit(10.0),
            learning_rate: T::lit(0.01),
            online_episodes: 50,
            length_scale_m: T::lit(1000.0),
        }
    }
}

impl<T: Scalar> GcnHyper<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |w: &str| Err(Error::Domain(format!("GCN hyperparameter: {w}")));
        if self.q == 0 {
            return bad("Q must be at least 1");
        }
        if !(self.epsilon > T::zero()) {
            return bad("epsilon must be positive");
        }
        if !(self.eta >= T::zero() && self.eta <= T::one()) {
            return bad("eta must lie in [0, 1]");
        }
        if !(self.tau > T::zero()) {
            return bad("tau must be positive");
        }
        if !(self.learning_rate >= T::zero()) {
            return bad("learning rate must be nonnegative");
        }
        if !(self.length_scale_m > T::zero()) {
            return bad("length scale must be positive");
        }
        Ok(())
    }
}

/// Per-layer 3x3 weight blocks plus hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnParams<T> {
    pub layers: Vec<Block3<T>>,
    pub hyper: GcnHyper<T>,
}

pub fn identity_block<T: Scalar>() -> Block3<T> {
    let mut b = [[T::zero(); 3]; 3];
    for (k, row) in b.iter_mut().enumerate() {
        row[k] = T::one();
    }
    b
}

impl<T: Scalar> GcnParams<T> {
    pub fn identity(hyper: GcnHyper<T>) -> Self {
        Self {
            layers: vec![identity_block(); hyper.q],
            hyper,
        }
    }

    pub fn zeros(hyper: GcnHyper<T>) -> Self {
        Self {
            layers: vec![[[T::zero(); 3]; 3]; hyper.q],
            hyper,
        }
    }

    /// Identity plus uniform noise in `[-0.3, 0.3]` per entry.
    pub fn random_init<R: Rng + ?Sized>(hyper: GcnHyper<T>, rng: &mut R) -> Self {
        let mut p = Self::identity(hyper);
        for block in &mut p.layers {
            for row in block.iter_mut() {
                for v in row.iter_mut() {
                    *v = *v + T::lit(rng.gen_range(-0.3..=0.3));
                }
            }
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.layers.len() != self.hyper.q {
            return Err(Error::Contract(format!(
                "expected {} layer blocks, found {}",
                self.hyper.q,
                self.layers.len()
            )));
        }
        if self.layers.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Contract("non-finite weight".into()));
        }
        Ok(())
    }

    /// `self - step * grads`.
    pub fn descend(&self, grads: &[Block3<T>], step: T) -> Self {
        let mut out = self.clone();
        for (block, g) in out.layers.iter_mut().zip(grads) {
            for r in 0..3 {
                for c in 0..3 {
                    block[r][c] = block[r][c] - step * g[r][c];
                }
            }
        }
        out
    }

    pub fn to_f64(&self) -> GcnParams<f64> {
        let conv = |v: T| v.to_f64_lossy();
        GcnParams {
            layers: self.layers.iter().map(|b| b.map(|r| r.map(conv))).collect(),
            hyper: GcnHyper {
                q: self.hyper.q,
                epsilon: conv(self.hyper.epsilon),
                eta: conv(self.hyper.eta),
                tau: conv(self.hyper.tau),
                learning_rate: conv(self.hyper.learning_rate),
                online_episodes: self.hyper.online_episodes,
                length_scale_m: conv(self.hyper.length_scale_m),
            },
        }
    }
}

/// Result of evaluating the GCN on one topology.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + serde::de::DeserializeOwned"))]
pub struct GcnOutput<T> {
    pub target_topology: TopologyMatrix<T>,
    pub cluster_count: usize,
    pub max_displacement_m: T,
    pub loss_value: T,
}

/// Values kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    input: Vec<Vec3<T>>,
    shift: Vec3<T>,
    /// `G Y^{q-1}` per layer, in the shifted frame.
    propagated: Vec<DenseMatrix<T>>,
    /// `G Y^{q-1} Theta^q` per layer.
    pre_activation: Vec<DenseMatrix<T>>,
    output: DenseMatrix<T>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn pre_activations(&self) -> &[DenseMatrix<T>] {
        &self.pre_activation
    }
}

/// Translation that moves the bounding box of `topology` into the nonnegative octant
/// (zero along axes that are already nonnegative).
pub fn nonnegative_shift<T: Scalar>(topology: &TopologyMatrix<T>) -> Vec3<T> {
    let mut lo = [T::zero(); 3];
    for p in topology.positions() {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
        }
    }
    lo
}

fn right_mul3<T: Scalar>(x: &DenseMatrix<T>, theta: &Block3<T>) -> DenseMatrix<T> {
    DenseMatrix::from_fn(x.rows(), 3, |i, c| {
        x[(i, 0)] * theta[0][c] + x[(i, 1)] * theta[1][c] + x[(i, 2)] * theta[2][c]
    })
}

/// Forward pass. Coordinates are translated into the nonnegative octant first and
/// translated back on output.
pub fn gcn_forward<T: Scalar>(
    params: &GcnParams<T>,
    topology: &TopologyMatrix<T>,
    gco: &GcoOperator<T>,
) -> Result<(TopologyMatrix<T>, ForwardCache<T>)> {
    if params.layers.is_empty() {
        return Err(Error::Contract("GCN needs at least one layer".into()));
    }
    if gco.dim() != topology.len() {
        return Err(Error::Contract("GCO operator and topology sizes differ".into()));
    }
    let shift = nonnegative_shift(topology);
    let mut y = DenseMatrix::from_fn(topology.len(), 3, |i, k| topology.positions()[i][k] - shift[k]);
    if y.as_slice().iter().any(|&v| v < T::zero()) {
        return Err(Error::Contract("negative coordinate after shift".into()));
    }
    let mut propagated = Vec::with_capacity(params.layers.len());
    let mut pre_activation = Vec::with_capacity(params.layers.len());
    for theta in &params.layers {
        let p = gco.apply(&y)?;
        let z = right_mul3(&p, theta);
        y = DenseMatrix::from_fn(z.rows(), 3, |i, k| z[(i, k)].max(T::zero()));
        propagated.push(p);
        pre_activation.push(z);
    }
    let out = topology.with_positions(
        (0..y.rows())
            .map(|i| [y[(i, 0)] + shift[0], y[(i, 1)] + shift[1], y[(i, 2)] + shift[2]])
            .collect(),
    )?;
    if !y.is_finite() {
        return Err(Error::TrainingDiverged {
            episode: 0,
            last_finite: Box::new(params.to_f64()),
        });
    }
    Ok((
        out,
        ForwardCache {
            input: topology.positions().to_vec(),
            shift,
            propagated,
            pre_activation,
            output: y,
        },
    ))
}

/// Terms of the Lagrangian loss `tau (C - 1) + max_i ||p_i^Q - p_i||`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTerms<T> {
    pub loss: T,
    pub cluster_count: usize,
    pub max_displacement_m: T,
    /// Row attaining the max displacement (lowest row on ties).
    pub argmax_row: usize,
}

pub fn gcn_loss<T: Scalar>(
    output: &TopologyMatrix<T>,
    input: &TopologyMatrix<T>,
    link: impl Fn(T) -> bool,
    tau: T,
) -> Result<LossTerms<T>> {
    if output.indices() != input.indices() {
        return Err(Error::Contract("output and input index sets differ".into()));
    }
    let mut best = (T::zero(), 0usize);
    for (r, (p, q)) in output.positions().iter().zip(input.positions()).enumerate() {
        let d = dist3(p, q);
        if d > best.0 {
            best = (d, r);
        }
    }
    let clusters = cluster_count_with(output, link);
    Ok(LossTerms {
        loss: tau * T::from_count(clusters - 1) + best.0,
        cluster_count: clusters,
        max_displacement_m: best.0,
        argmax_row: best.1,
    })
}

/// Gradient of the loss w.r.t. every layer block.
///
/// Only the displacement term contributes: the cluster penalty is piecewise constant
/// in the weights. The max routes through the argmax row alone.
pub fn gcn_backward<T: Scalar>(
    params: &GcnParams<T>,
    cache: &ForwardCache<T>,
    input: &TopologyMatrix<T>,
    gco: &GcoOperator<T>,
) -> Result<Vec<Block3<T>>> {
    if cache.input.as_slice() != input.positions() || cache.propagated.len() != params.layers.len() {
        return Err(Error::Contract("stale forward cache".into()));
    }
    let n = input.len();
    let q = params.layers.len();
    let mut grads = vec![[[T::zero(); 3]; 3]; q];

    // d loss / d Y^Q
    let mut best = (T::zero(), 0usize);
    for i in 0..n {
        let target = [
            cache.output[(i, 0)] + cache.shift[0],
            cache.output[(i, 1)] + cache.shift[1],
            cache.output[(i, 2)] + cache.shift[2],
        ];
        let d = dist3(&target, &cache.input[i]);
        if d > best.0 {
            best = (d, i);
        }
    }
    if best.0 == T::zero() {
        return Ok(grads);
    }
    let (dmax, row) = best;
    let mut dy = DenseMatrix::zeros(n, 3);
    for k in 0..3 {
        dy[(row, k)] = (cache.output[(row, k)] + cache.shift[k] - cache.input[row][k]) / dmax;
    }

    for layer in (0..q).rev() {
        let z = &cache.pre_activation[layer];
        let dz = DenseMatrix::from_fn(n, 3, |i, k| if z[(i, k)] > T::zero() { dy[(i, k)] } else { T::zero() });
        let p = &cache.propagated[layer];
        let g = &mut grads[layer];
        for i in 0..n {
            for r in 0..3 {
                let pir = p[(i, r)];
                if pir == T::zero() {
                    continue;
                }
                for c in 0..3 {
                    g[r][c] = g[r][c] + pir * dz[(i, c)];
                }
            }
        }
        if layer > 0 {
            let theta = &params.layers[layer];
            // dZ Theta^T, then G^T = G.
            let dp = DenseMatrix::from_fn(n, 3, |i, r| {
                dz[(i, 0)] * theta[r][0] + dz[(i, 1)] * theta[r][1] + dz[(i, 2)] * theta[r][2]
            });
            dy = gco.apply(&dp)?;
        }
    }
    Ok(grads)
}

/// A topology prepared for GCN evaluation: its VRG operator and link predicate.
#[derive(Clone, Debug)]
pub struct GcnProblem<T> {
    input: TopologyMatrix<T>,
    vrg: RuavGraph<T>,
    gco: GcoOperator<T>,
    link: LinkPredicate<T>,
    tau: T,
}

/// One evaluated forward pass.
#[derive(Clone, Debug)]
pub struct Evaluation<T> {
    pub output: TopologyMatrix<T>,
    pub terms: LossTerms<T>,
    pub cache: ForwardCache<T>,
}

impl<T: Scalar> GcnProblem<T> {
    /// Builds the VRG at `hyper.eta` and the operator at `hyper.epsilon`.
    pub fn new(input: TopologyMatrix<T>, hyper: &GcnHyper<T>, link: &LinkPredicate<T>) -> Result<Self> {
        hyper.validate()?;
        let vrg = if input.len() >= 2 {
            let vd = virtual_distance_for(&input, hyper.eta)?;
            build_vrg(input.clone(), vd.d_v_m)?
        } else {
            crate::graph::build_graph(input.clone(), |_| false)
        };
        let gco = GcoOperator::for_vrg(&vrg, hyper.epsilon)?;
        Ok(Self {
            input,
            vrg,
            gco,
            link: link.clone(),
            tau: hyper.tau,
        })
    }

    pub fn input(&self) -> &TopologyMatrix<T> {
        &self.input
    }

    pub fn vrg(&self) -> &RuavGraph<T> {
        &self.vrg
    }

    pub fn gco(&self) -> &GcoOperator<T> {
        &self.gco
    }

    pub fn link(&self) -> &LinkPredicate<T> {
        &self.link
    }

    pub fn input_connected(&self) -> bool {
        cluster_count_with(&self.input, |d| self.link.linked(d)) == 1
    }

    pub fn evaluate(&self, params: &GcnParams<T>) -> Result<Evaluation<T>> {
        let (output, cache) = gcn_forward(params, &self.input, &self.gco)?;
        let terms = gcn_loss(&output, &self.input, |d| self.link.linked(d), self.tau)?;
        Ok(Evaluation { output, terms, cache })
    }

    pub fn gradient(&self, params: &GcnParams<T>, eval: &Evaluation<T>) -> Result<Vec<Block3<T>>> {
        gcn_backward(params, &eval.cache, &self.input, &self.gco)
    }

    /// Gradient of the loss expressed in `length_scale_m` units.
    pub fn scaled_gradient(&self, params: &GcnParams<T>, eval: &Evaluation<T>) -> Result<Vec<Block3<T>>> {
        let s = params.hyper.length_scale_m;
        Ok(self
            .gradient(params, eval)?
            .into_iter()
            .map(|b| b.map(|r| r.map(|v| v / s)))
            .collect())
    }

    /// Connected topology by plain GCO iteration at `epsilon`, retrying at `epsilon / 2`
    /// (strictly inside the contraction range) if the first run fails.
    pub fn gco_fallback(&self, epsilon: T) -> Result<(TopologyMatrix<T>, usize)> {
        let link = |d: T| self.link.linked(d);
        match gco_iterate(&self.input, &self.vrg, &GcoConfig::new(epsilon), link) {
            Ok(r) => Ok(r),
            Err(Error::NonConvergence { .. }) | Err(Error::Diverged { .. }) => {
                gco_iterate(&self.input, &self.vrg, &GcoConfig::new(epsilon / T::lit(2.0)), link)
            }
            Err(e) => Err(e),
        }
    }
}

/// Outcome of on-line training.
#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub params: GcnParams<T>,
    pub best: GcnOutput<T>,
    /// True when no episode produced a connected output and `best` came from GCO iteration.
    pub fallback: bool,
    /// GCO iterations behind a fallback target.
    pub k_star: Option<usize>,
    /// Loss of every evaluated episode; index 0 is the initial parameters.
    pub loss_trace: Vec<T>,
}

fn better<T: Scalar>(candidate: &LossTerms<T>, incumbent: Option<&LossTerms<T>>) -> bool {
    match incumbent {
        None => true,
        Some(inc) => match (candidate.cluster_count == 1, inc.cluster_count == 1) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => candidate.max_displacement_m < inc.max_displacement_m,
            (false, false) => candidate.loss < inc.loss,
        },
    }
}

/// `M` plain gradient-descent steps on one topology, keeping the best output seen.
///
/// Connected outputs beat disconnected ones; among connected outputs the smallest
/// max displacement wins. If no episode connects, the GCO iterate is returned instead.
pub fn gcn_train_online<T: Scalar>(
    init: &GcnParams<T>,
    topology: &TopologyMatrix<T>,
    link: &LinkPredicate<T>,
    episodes: usize,
    learning_rate: T,
) -> Result<TrainOutcome<T>> {
    init.validate()?;
    if episodes == 0 {
        return Err(Error::Domain("on-line training needs at least one episode".into()));
    }
    let problem = GcnProblem::new(topology.clone(), &init.hyper, link)?;
    if problem.input_connected() {
        return Ok(TrainOutcome {
            params: init.clone(),
            best: GcnOutput {
                target_topology: topology.clone(),
                cluster_count: 1,
                max_displacement_m: T::zero(),
                loss_value: T::zero(),
            },
            fallback: false,
            k_star: None,
            loss_trace: vec![T::zero()],
        });
    }
    train_on_problem(init, &problem, episodes, learning_rate)
}

pub(crate) fn train_on_problem<T: Scalar>(
    init: &GcnParams<T>,
    problem: &GcnProblem<T>,
    episodes: usize,
    learning_rate: T,
) -> Result<TrainOutcome<T>> {
    let mut params = init.clone();
    let mut best: Option<(LossTerms<T>, TopologyMatrix<T>)> = None;
    let mut trace = Vec::with_capacity(episodes + 1);
    let diverged = |episode: usize, p: &GcnParams<T>| Error::TrainingDiverged {
        episode,
        last_finite: Box::new(p.to_f64()),
    };

    for episode in 0..=episodes {
        let eval = match problem.evaluate(&params) {
            Ok(e) => e,
            Err(Error::TrainingDiverged { .. }) => return Err(diverged(episode, &params)),
            Err(e) => return Err(e),
        };
        if !eval.terms.loss.is_finite() {
            return Err(diverged(episode, &params));
        }
        trace.push(eval.terms.loss);
        if better(&eval.terms, best.as_ref().map(|b| &b.0)) {
            best = Some((eval.terms, eval.output.clone()));
        }
        if episode == episodes {
            break;
        }
        let grads = problem.scaled_gradient(&params, &eval)?;
        if grads.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(diverged(episode, &params));
        }
        let next = params.descend(&grads, learning_rate);
        if next.layers.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(diverged(episode, &params));
        }
        params = next;
    }

    let (terms, target) = best.expect("at least one episode evaluated");
    if terms.cluster_count == 1 {
        return Ok(TrainOutcome {
            params,
            best: GcnOutput {
                target_topology: target,
                cluster_count: 1,
                max_displacement_m: terms.max_displacement_m,
                loss_value: terms.loss,
            },
            fallback: false,
            k_star: None,
            loss_trace: trace,
        });
    }

    let (target, k) = problem.gco_fallback(init.hyper.epsilon)?;
    let terms = gcn_loss(&target, problem.input(), |d| problem.link().linked(d), init.hyper.tau)?;
    Ok(TrainOutcome {
        params,
        best: GcnOutput {
            target_topology: target,
            cluster_count: terms.cluster_count,
            max_displacement_m: terms.max_displacement_m,
            loss_value: terms.loss,
        },
        fallback: true,
        k_star: Some(k),
        loss_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;

    fn pair(a: f64, b: f64) -> TopologyMatrix<f64> {
        TopologyMatrix::from_positions(vec![[a, 0.0, 0.0], [b, 0.0, 0.0]]).unwrap()
    }

    fn complete(t: &TopologyMatrix<f64>) -> RuavGraph<f64> {
        build_graph(t.clone(), |_| true)
    }

    #[test]
    fn gco_step_two_nodes() {
        let t = pair(0.0, 2.0);
        let g = complete(&t);
        let l = laplacian(&g);
        let h1 = step_size(&g, 1.0);
        assert_eq!(h1, 1.0);
        let s = gco_step(&t, &l, h1).unwrap();
        assert_eq!(s.positions(), &[[2.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        let s = gco_step(&t, &l, step_size(&g, 0.5)).unwrap();
        assert_eq!(s.positions(), &[[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
    }

    #[test]
    fn gco_step_dimension_mismatch() {
        let t = pair(0.0, 2.0);
        let l = DenseMatrix::<f64>::zeros(3, 3);
        assert!(matches!(gco_step(&t, &l, 1.0), Err(Error::Contract(_))));
    }

    #[test]
    fn gco_iterate_connected_input() {
        let t = pair(0.0, 2.0);
        let (out, k) = gco_iterate(&t, &complete(&t), &GcoConfig::new(1.0), |d| d <= 120.0).unwrap();
        assert_eq!(k, 0);
        assert_eq!(out, t);
    }

    #[test]
    fn gco_iterate_line_contracts() {
        let t = TopologyMatrix::from_positions(vec![[0.0, 0.0, 0.0], [100.0, 0.0, 0.0], [250.0, 0.0, 0.0]]).unwrap();
        let vd = virtual_distance_for(&t, 0.3).unwrap();
        let vrg = build_vrg(t.clone(), vd.d_v_m).unwrap();
        let (out, k) = gco_iterate(&t, &vrg, &GcoConfig::new(1.0), |d| d <= 120.0).unwrap();
        assert!(k >= 1);
        assert_eq!(cluster_count_with(&out, |d| d <= 120.0), 1);
        let c = centroid(&t);
        for (before, after) in t.positions().iter().zip(out.positions()) {
            assert!(dist3(after, &c) < dist3(before, &c));
        }
    }

    #[test]
    fn gco_iterate_two_node_swap_never_connects() {
        let t = pair(0.0, 360.0);
        let cfg = GcoConfig {
            epsilon: 1.0,
            max_iterations: 50,
        };
        assert!(matches!(
            gco_iterate(&t, &complete(&t), &cfg, |d| d <= 120.0),
            Err(Error::NonConvergence { iterations: 50 })
        ));
    }

    fn hyper(q: usize) -> GcnHyper<f64> {
        GcnHyper {
            q,
            ..GcnHyper::default()
        }
    }

    #[test]
    fn forward_identity_single_node() {
        let t = TopologyMatrix::from_positions(vec![[3.0, 4.0, 5.0]]).unwrap();
        let op = GcoOperator::new(&DenseMatrix::zeros(1, 1), 1.0).unwrap();
        let (out, _) = gcn_forward(&GcnParams::identity(hyper(4)), &t, &op).unwrap();
        assert_eq!(out, t);
    }

    #[test]
    fn forward_zero_weights() {
        let t = TopologyMatrix::from_positions(vec![[3.0, 4.0, 0.0], [6.0, 8.0, 0.0]]).unwrap();
        let g = complete(&t);
        let op = GcoOperator::for_vrg(&g, 1.0).unwrap();
        let (out, _) = gcn_forward(&GcnParams::zeros(hyper(3)), &t, &op).unwrap();
        assert!(out.positions().iter().flatten().all(|&v| v == 0.0));
        let terms = gcn_loss(&out, &t, |d| d <= 120.0, 10.0).unwrap();
        assert_eq!(terms.max_displacement_m, 10.0);
    }

    #[test]
    fn forward_identity_matches_gco_iterates() {
        let t = pair(0.0, 2.0);
        let g = complete(&t);
        let op = GcoOperator::for_vrg(&g, 1.0).unwrap();
        let l = laplacian(&g);
        let mut x = t.clone();
        for q in 1..=3 {
            x = gco_step(&x, &l, 1.0).unwrap();
            let (out, _) = gcn_forward(&GcnParams::identity(hyper(q)), &t, &op).unwrap();
            assert_eq!(out, x);
        }
    }

    #[test]
    fn forward_shifts_negative_coordinates() {
        let t = pair(-5.0, 5.0);
        let g = complete(&t);
        let op = GcoOperator::for_vrg(&g, 0.5).unwrap();
        let (out, _) = gcn_forward(&GcnParams::identity(hyper(1)), &t, &op).unwrap();
        assert_eq!(out.positions(), &[[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
    }

    #[test]
    fn loss_examples() {
        let t = pair(0.0, 2.0);
        assert_eq!(gcn_loss(&t, &t, |d| d <= 120.0, 100.0).unwrap().loss, 0.0);

        let spread = TopologyMatrix::from_positions(vec![[0.0; 3], [500.0, 0.0, 0.0], [1000.0, 0.0, 0.0]]).unwrap();
        assert_eq!(gcn_loss(&spread, &spread, |d| d <= 120.0, 100.0).unwrap().loss, 200.0);

        let swapped = pair(2.0, 0.0);
        let terms = gcn_loss(&swapped, &t, |d| d <= 120.0, 100.0).unwrap();
        assert_eq!(terms.loss, 2.0);
        assert_eq!(terms.argmax_row, 0);
    }

    #[test]
    fn backward_single_node_single_layer() {
        let p = [3.0, 4.0, 5.0];
        let t = TopologyMatrix::from_positions(vec![p]).unwrap();
        let op = GcoOperator::new(&DenseMatrix::zeros(1, 1), 1.0).unwrap();
        let mut params = GcnParams::identity(hyper(1));
        params.layers[0] = [[1.2, 0.1, 0.0], [0.0, 0.9, 0.2], [0.1, 0.0, 1.1]];
        let (out, cache) = gcn_forward(&params, &t, &op).unwrap();
        let y = out.positions()[0];
        let d = dist3(&y, &p);
        let upstream = [(y[0] - p[0]) / d, (y[1] - p[1]) / d, (y[2] - p[2]) / d];
        let g = gcn_backward(&params, &cache, &t, &op).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert!((g[0][r][c] - p[r] * upstream[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_zero_displacement() {
        let t = TopologyMatrix::from_positions(vec![[3.0, 4.0, 5.0]]).unwrap();
        let op = GcoOperator::new(&DenseMatrix::zeros(1, 1), 1.0).unwrap();
        let params = GcnParams::identity(hyper(3));
        let (_, cache) = gcn_forward(&params, &t, &op).unwrap();
        let g = gcn_backward(&params, &cache, &t, &op).unwrap();
        assert!(g.iter().flatten().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_stale_cache() {
        let t = TopologyMatrix::from_positions(vec![[3.0, 4.0, 5.0]]).unwrap();
        let other = TopologyMatrix::from_positions(vec![[1.0, 4.0, 5.0]]).unwrap();
        let op = GcoOperator::new(&DenseMatrix::zeros(1, 1), 1.0).unwrap();
        let params = GcnParams::identity(hyper(2));
        let (_, cache) = gcn_forward(&params, &t, &op).unwrap();
        assert!(matches!(gcn_backward(&params, &cache, &other, &op), Err(Error::Contract(_))));
    }

    #[test]
    fn train_connected_input_is_identity() {
        let t = pair(0.0, 2.0);
        let link = LinkPredicate::radius(120.0);
        let out = gcn_train_online(&GcnParams::identity(hyper(2)), &t, &link, 5, 0.01).unwrap();
        assert_eq!(out.best.target_topology, t);
        assert_eq!(out.best.max_displacement_m, 0.0);
        assert!(!out.fallback);
    }

    #[test]
    fn train_rejects_zero_episodes() {
        let t = pair(0.0, 2.0);
        let link = LinkPredicate::radius(120.0);
        assert!(gcn_train_online(&GcnParams::identity(hyper(2)), &t, &link, 0, 0.01).is_err());
    }

    #[test]
    fn train_single_node_zero_gradient() {
        let t = TopologyMatrix::from_positions(vec![[3.0, 4.0, 5.0]]).unwrap();
        let link = LinkPredicate::radius(120.0);
        let init = GcnParams::identity(hyper(2));
        let problem = GcnProblem::new(t.clone(), &init.hyper, &link).unwrap();
        let out = train_on_problem(&init, &problem, 3, 0.01).unwrap();
        assert_eq!(out.loss_trace[0], 0.0);
        assert_eq!(out.params, init);
    }

    #[test]
    fn train_two_far_nodes_connects() {
        let t = pair(0.0, 360.0);
        let link = LinkPredicate::radius(120.0);
        let out = gcn_train_online(&GcnParams::identity(hyper(8)), &t, &link, 10, 0.01).unwrap();
        assert_eq!(out.best.cluster_count, 1);
        assert_eq!(out.loss_trace.len(), 11);
    }
}

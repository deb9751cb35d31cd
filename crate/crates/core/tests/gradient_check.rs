mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swarmheal::gcn::{GcnHyper, GcnParams, GcnProblem};
use swarmheal::LinkPredicate;

const STEP: f64 = 1e-5;

/// Distance of an instance from the ReLU and max kinks, relative to its scale.
fn kink_margin(problem: &GcnProblem<f64>, params: &GcnParams<f64>) -> f64 {
    let eval = problem.evaluate(params).unwrap();
    let scale = eval.output.positions().iter().flatten().fold(1.0_f64, |a, v| a.max(v.abs()));
    let mut m = f64::INFINITY;
    for z in eval.cache.pre_activations() {
        for v in z.as_slice() {
            m = m.min(v.abs() / scale);
        }
    }
    let mut d: Vec<f64> = eval
        .output
        .positions()
        .iter()
        .zip(problem.input().positions())
        .map(|(a, b)| swarmheal::scalar::dist3(a, b))
        .collect();
    d.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if d.len() > 1 {
        m = m.min((d[0] - d[1]) / scale);
    }
    m
}

fn displacement(problem: &GcnProblem<f64>, params: &GcnParams<f64>) -> f64 {
    problem.evaluate(params).unwrap().terms.max_displacement_m
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let link = LinkPredicate::radius(120.0);
    let mut checked = 0;
    let mut worst = 0.0_f64;
    while checked < 50 {
        let n = rng.gen_range(2..=8);
        let q = rng.gen_range(1..=4);
        let hyper = GcnHyper {
            q,
            eta: rng.gen(),
            epsilon: rng.gen_range(0.2..=1.0),
            ..GcnHyper::default()
        };
        let t = common::random_topology(&mut rng, n, 400.0, 100.0);
        let params = GcnParams::random_init(hyper, &mut rng);
        let problem = GcnProblem::new(t, &hyper, &link).unwrap();
        if kink_margin(&problem, &params) < 1e-3 {
            continue;
        }
        let eval = problem.evaluate(&params).unwrap();
        let grad = problem.gradient(&params, &eval).unwrap();
        for layer in 0..q {
            for r in 0..3 {
                for c in 0..3 {
                    let mut plus = params.clone();
                    plus.layers[layer][r][c] += STEP;
                    let mut minus = params.clone();
                    minus.layers[layer][r][c] -= STEP;
                    let fd = (displacement(&problem, &plus) - displacement(&problem, &minus)) / (2.0 * STEP);
                    let a = grad[layer][r][c];
                    let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1.0);
                    worst = worst.max(rel);
                }
            }
        }
        checked += 1;
    }
    eprintln!("max relative error {worst:e}");
    assert!(worst < 1e-4, "max relative error {worst}");
}

use approx::assert_relative_eq;
use swarmheal::channel::{clec_satisfied, log_bessel_i0, max_link_distance, received_power_dbm, ChannelParams};

/// `I0(x) = (1/pi) int_0^pi exp(x cos t) dt` by composite Simpson, scaled by `exp(-x)`.
fn ln_i0_quadrature(x: f64) -> f64 {
    let n = 20_000;
    let h = std::f64::consts::PI / n as f64;
    let f = |t: f64| (x * (t.cos() - 1.0)).exp();
    let mut s = f(0.0) + f(std::f64::consts::PI);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
    }
    x + (s * h / 3.0 / std::f64::consts::PI).ln()
}

#[test]
fn log_bessel_matches_quadrature() {
    for &x in &[0.0, 0.1, 0.5, 1.0, 2.5, 7.0, 14.9, 15.0, 15.1, 30.0, 100.0, 700.0, 5000.0] {
        let got = log_bessel_i0(x).unwrap();
        let want = ln_i0_quadrature(x);
        assert_relative_eq!(got, want, epsilon = 1e-10, max_relative = 1e-10);
    }
}

#[test]
fn link_radius_closed_form() {
    // Without the Rice term the condition is 10 log10(4 pi l f / c) <= margin.
    let p = ChannelParams::<f64>::physical_model();
    let margin = 30.0 + 6.0 + 6.0 - 1.38;
    let closed = 3e8 / (4.0 * std::f64::consts::PI * 2.4e9) * 10f64.powf(margin / 10.0);
    let r = max_link_distance(&p).unwrap();
    assert!((r - closed).abs() < 1e-5, "{r} vs {closed}");
    assert!((r - 114.7).abs() < 0.1);
    assert!(clec_satisfied(&p, closed - 1e-3).unwrap());
    assert!(!clec_satisfied(&p, closed + 1e-3).unwrap());
}

#[test]
fn log_domain_rice_term_matches_linear_evaluation() {
    let mut p = ChannelParams::<f64>::physical_model();
    p.small_scale_enabled = true;
    let (s2, k) = (p.scatter_strength, p.rice_factor);
    let rho2 = p.dominant_strength_sq();
    for &l in &[0.5, 1.0, 3.0, 8.0, 15.0] {
        // Direct Rice density with a series I0.
        let x = 2.0 * k * l;
        let mut i0 = 1.0;
        let mut term = 1.0;
        for m in 1..2000 {
            term *= (x * x / 4.0) / (m * m) as f64;
            i0 += term;
        }
        let pdf = l / s2 * (-(l * l + rho2) / (2.0 * s2)).exp() * i0;
        let large = 10.0 * (4.0 * std::f64::consts::PI * l * 2.4e9 / 3e8).log10();
        let want = 30.0 + 12.0 - large - pdf;
        let got = received_power_dbm(&p, l).unwrap();
        assert_relative_eq!(got, want, epsilon = 1e-9, max_relative = 1e-9);
    }
}

#[test]
fn override_flips_at_radius() {
    let p = ChannelParams::<f64>::default();
    assert!(clec_satisfied(&p, 120.0).unwrap());
    assert!(!clec_satisfied(&p, 120.0 + 1e-9).unwrap());
}

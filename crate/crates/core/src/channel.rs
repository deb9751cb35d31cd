//! Air-to-air link budget and the communication-link-establish condition (CLEC).
//!
//! Units: powers in dBm, gains in dBi, frequency in Hz, distances in meters.
//! The received power is
//!
//! ```text
//! P_b(l) = P + G1 + G2 - 10 a log10(4 pi l fc / vc) - p_xi(l)
//! p_xi(l) = (l / s2) exp((-l^2 - rho^2) / (2 s2)) I0(2 K l),   rho^2 = 2 K s2
//! ```
//!
//! and two UAVs are neighbors when `P_b(l) >= P0`. The Rice term is evaluated
//! through its natural logarithm because the linear form over/underflows at
//! swarm distances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Switch point between the power series and the asymptotic expansion of `ln I0`.
const BESSEL_SWITCH: f64 = 15.0;
const BISECTION_TOL_M: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct ChannelParams<T> {
    pub transmit_power_dbm: T,
    pub receive_threshold_dbm: T,
    pub antenna_gain_rx_dbi: T,
    pub antenna_gain_tx_dbi: T,
    pub path_loss_exponent: T,
    pub carrier_freq_hz: T,
    pub light_speed_m_s: T,
    pub scatter_strength: T,
    pub rice_factor: T,
    pub small_scale_enabled: bool,
    /// Fixed neighbor radius; when set the physical model is ignored.
    pub clec_distance_override_m: Option<T>,
}

impl<T: Scalar> ChannelParams<T> {
    /// Physical model with the swarm's radio settings, small-scale term off.
    pub fn physical_model() -> Self {
        Self {
            transmit_power_dbm: T::lit(30.0),
            receive_threshold_dbm: T::lit(1.38),
            antenna_gain_rx_dbi: T::lit(6.0),
            antenna_gain_tx_dbi: T::lit(6.0),
            path_loss_exponent: T::one(),
            carrier_freq_hz: T::lit(2.4e9),
            light_speed_m_s: T::lit(3e8),
            scatter_strength: T::lit(5.0),
            rice_factor: T::lit(10.0),
            small_scale_enabled: false,
            clec_distance_override_m: None,
        }
    }

    pub fn with_override(mut self, radius_m: T) -> Self {
        self.clec_distance_override_m = Some(radius_m);
        self
    }

    /// `rho^2 = 2 K sigma0^2`.
    pub fn dominant_strength_sq(&self) -> T {
        T::lit(2.0) * self.rice_factor * self.scatter_strength
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Domain(format!("channel parameter: {what}")));
        if !(self.transmit_power_dbm > self.receive_threshold_dbm) {
            return bad("P must exceed P0");
        }
        if !(self.path_loss_exponent > T::zero()) {
            return bad("path loss exponent must be positive");
        }
        if !(self.scatter_strength > T::zero()) {
            return bad("scatter strength must be positive");
        }
        if !(self.rice_factor >= T::zero()) {
            return bad("Rice factor must be nonnegative");
        }
        if !(self.carrier_freq_hz > T::zero()) || !(self.light_speed_m_s > T::zero()) {
            return bad("frequency and light speed must be positive");
        }
        if let Some(r) = self.clec_distance_override_m {
            if !(r > T::zero()) {
                return bad("override radius must be positive");
            }
        }
        Ok(())
    }

    /// Right-hand side of the CLEC: `P + G1 + G2 - P0`.
    pub fn link_margin_db(&self) -> T {
        self.transmit_power_dbm + self.antenna_gain_rx_dbi + self.antenna_gain_tx_dbi
            - self.receive_threshold_dbm
    }

    fn large_scale_loss_db(&self, distance_m: T) -> T {
        let arg = T::lit(4.0) * T::PI() * distance_m * self.carrier_freq_hz / self.light_speed_m_s;
        T::lit(10.0) * self.path_loss_exponent * arg.log10()
    }

    /// Natural log of the Rice term.
    fn ln_small_scale(&self, distance_m: T) -> Result<T> {
        let s2 = self.scatter_strength;
        let rho2 = self.dominant_strength_sq();
        let two = T::lit(2.0);
        Ok(distance_m.ln() - s2.ln() + (-(distance_m * distance_m) - rho2) / (two * s2)
            + log_bessel_i0(two * self.rice_factor * distance_m)?)
    }

    fn small_scale_db(&self, distance_m: T) -> Result<T> {
        Ok(self.ln_small_scale(distance_m)?.exp())
    }
}

impl<T: Scalar> Default for ChannelParams<T> {
    /// The 120 m neighbor rule with the physical model retained for reference.
    fn default() -> Self {
        Self::physical_model().with_override(T::lit(120.0))
    }
}

/// `ln I0(x)` for `x >= 0`.
///
/// Power series below `x = 15`, asymptotic expansion
/// `x - ln(2 pi x)/2 + ln(1 + 1/(8x) + 9/(2 (8x)^2) + ...)` above.
pub fn log_bessel_i0<T: Scalar>(x: T) -> Result<T> {
    if !x.is_finite() || x < T::zero() {
        return Err(Error::Domain(format!("log_bessel_i0 needs finite x >= 0, got {x}")));
    }
    if x < T::lit(BESSEL_SWITCH) {
        let q = x * x / T::lit(4.0);
        let mut term = T::one();
        let mut sum = T::one();
        let mut m = 1usize;
        loop {
            let mf = T::from_count(m);
            term = term * q / (mf * mf);
            sum = sum + term;
            if term <= sum * T::epsilon() {
                break;
            }
            m += 1;
        }
        Ok(sum.ln())
    } else {
        // Coefficient k: ((2k-1)!!)^2 / (k! (8x)^k), i.e. term_k = term_{k-1} (2k-1)^2 / (k 8x).
        let eight_x = T::lit(8.0) * x;
        let mut term = T::one();
        let mut sum = T::one();
        for k in 1..40usize {
            let kf = T::from_count(k);
            let odd = T::lit(2.0) * kf - T::one();
            let next = term * odd * odd / (kf * eight_x);
            if next >= term {
                break;
            }
            term = next;
            sum = sum + term;
            if term <= sum * T::epsilon() {
                break;
            }
        }
        Ok(x - T::lit(0.5) * (T::lit(2.0) * T::PI() * x).ln() + sum.ln())
    }
}

/// Received power in dBm at `distance_m`.
pub fn received_power_dbm<T: Scalar>(params: &ChannelParams<T>, distance_m: T) -> Result<T> {
    if !(distance_m > T::zero()) || !distance_m.is_finite() {
        return Err(Error::Domain(format!("distance must be positive and finite, got {distance_m}")));
    }
    let mut p = params.transmit_power_dbm + params.antenna_gain_rx_dbi + params.antenna_gain_tx_dbi
        - params.large_scale_loss_db(distance_m);
    if params.small_scale_enabled {
        p = p - params.small_scale_db(distance_m)?;
    }
    Ok(p)
}

/// Whether a link can be established at `distance_m`. Depends only on the distance,
/// hence symmetric in the two endpoints.
pub fn clec_satisfied<T: Scalar>(params: &ChannelParams<T>, distance_m: T) -> Result<bool> {
    if let Some(r) = params.clec_distance_override_m {
        if distance_m < T::zero() || !distance_m.is_finite() {
            return Err(Error::Domain(format!("bad distance {distance_m}")));
        }
        return Ok(distance_m <= r);
    }
    if !(distance_m > T::zero()) {
        return Err(Error::Domain(format!("distance must be positive, got {distance_m}")));
    }
    let mut lhs = params.large_scale_loss_db(distance_m);
    if params.small_scale_enabled {
        lhs = lhs + params.small_scale_db(distance_m)?;
    }
    Ok(lhs <= params.link_margin_db())
}

/// Largest distance at which the CLEC still holds.
///
/// Returns the override when set; otherwise bisects the monotone large-scale model
/// to 1e-6 m.
pub fn max_link_distance<T: Scalar>(params: &ChannelParams<T>) -> Result<T> {
    if let Some(r) = params.clec_distance_override_m {
        return Ok(r);
    }
    if params.small_scale_enabled {
        return Err(Error::Unsupported(
            "link radius is not well defined with the non-monotone small-scale term".into(),
        ));
    }
    let mut lo = T::lit(1e-9);
    if !clec_satisfied(params, lo)? {
        return Err(Error::Infeasible);
    }
    let mut hi = T::one();
    while clec_satisfied(params, hi)? {
        lo = hi;
        hi = hi * T::lit(2.0);
        if !hi.is_finite() {
            return Err(Error::Domain("link radius unbounded".into()));
        }
    }
    let tol = T::lit(BISECTION_TOL_M);
    while hi - lo > tol {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if clec_satisfied(params, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Distance predicate used to build RUAV graphs.
///
/// Caches the link radius whenever the model is monotone so that hot loops
/// compare distances instead of re-evaluating the link budget.
#[derive(Clone, Debug)]
pub struct LinkPredicate<T> {
    params: ChannelParams<T>,
    radius: Option<T>,
}

impl<T: Scalar> LinkPredicate<T> {
    pub fn new(params: ChannelParams<T>) -> Result<Self> {
        params.validate()?;
        let radius = match max_link_distance(&params) {
            Ok(r) => Some(r),
            Err(Error::Unsupported(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self { params, radius })
    }

    /// Plain distance threshold `d <= radius`.
    pub fn radius(radius_m: T) -> Self {
        Self {
            params: ChannelParams::physical_model().with_override(radius_m),
            radius: Some(radius_m),
        }
    }

    pub fn params(&self) -> &ChannelParams<T> {
        &self.params
    }

    pub fn link_radius(&self) -> Option<T> {
        self.radius
    }

    #[inline]
    pub fn linked(&self, distance_m: T) -> bool {
        match self.radius {
            Some(r) => distance_m <= r,
            // Coincident UAVs are trivially within range.
            None if distance_m <= T::zero() => true,
            None => clec_satisfied(&self.params, distance_m).unwrap_or(false),
        }
    }
}

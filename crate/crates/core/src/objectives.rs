//! Objective quantities: privacy leakage, utility and training efficiency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pareto::ParamPoint;

/// Constants of the closed-form privacy accountant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    /// Accountant constant `C`.
    #[serde(default = "PrivacyParams::default_c")]
    pub accountant_c: f64,
    pub c_clip: f64,
    #[serde(default = "PrivacyParams::default_delta")]
    pub delta: f64,
    /// Total client count `K`.
    pub clients: usize,
}

impl PrivacyParams {
    pub const DEFAULT_C: f64 = 1.0;
    pub const DEFAULT_DELTA: f64 = 1e-5;

    fn default_c() -> f64 {
        Self::DEFAULT_C
    }

    fn default_delta() -> f64 {
        Self::DEFAULT_DELTA
    }

    pub fn new(c_clip: f64, clients: usize) -> Self {
        Self {
            accountant_c: Self::DEFAULT_C,
            c_clip,
            delta: Self::DEFAULT_DELTA,
            clients,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.accountant_c > 0.0 && self.c_clip > 0.0) {
            return Err(Error::Config("C and c_clip must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!(
                "delta must be in (0, 1), got {}",
                self.delta
            )));
        }
        if self.clients == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        Ok(())
    }
}

/// Constants of the simplified utility bound and the efficiency constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub k: f64,
    pub clients: usize,
    /// Per-round time `c_t`.
    pub c_t: f64,
    /// Efficiency budget `ε̄_e`.
    pub eff_budget: f64,
}

impl TheoryParams {
    /// `floor(ε̄_e / c_t)`, the largest feasible round count.
    pub fn t_max(&self) -> Result<u32> {
        crate::theory::design_t_max(self.eff_budget, self.c_t)
    }

    pub fn is_feasible(&self, rounds: u32) -> bool {
        self.t_max().is_ok_and(|t| rounds >= 1 && rounds <= t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::Config(format!("k must be positive, got {}", self.k)));
        }
        if self.clients == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        self.t_max().map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveSource {
    Empirical,
    Theoretical,
}

/// A `(utility, privacy)` pair, both minimised, with the configuration that
/// produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePoint {
    pub utility: f64,
    pub privacy: f64,
    pub source: ObjectiveSource,
    pub origin: ParamPoint,
}

impl ObjectivePoint {
    pub fn new(utility: f64, privacy: f64, source: ObjectiveSource, origin: ParamPoint) -> Self {
        Self {
            utility,
            privacy,
            source,
            origin,
        }
    }
}

/// `C · c_clip · sqrt(q·T·ln(1/δ)) / (sqrt(K) · σ)`.
///
/// `σ = 0` yields `+∞`, which every finite leakage dominates.
pub fn privacy_leakage(rounds: u32, sigma: f64, q: f64, p: &PrivacyParams) -> f64 {
    if sigma == 0.0 {
        return f64::INFINITY;
    }
    p.accountant_c * p.c_clip * (q * f64::from(rounds) * (1.0 / p.delta).ln()).sqrt()
        / ((p.clients as f64).sqrt() * sigma)
}

/// `1/T + k·σ²/(q·K)`.
pub fn utility_f1(rounds: u32, sigma: f64, q: f64, tp: &TheoryParams) -> f64 {
    1.0 / f64::from(rounds) + tp.k * sigma * sigma / (q * tp.clients as f64)
}

/// `sqrt(q·T)/σ`, `+∞` at `σ = 0`.
pub fn privacy_f2(rounds: u32, sigma: f64, q: f64) -> f64 {
    if sigma == 0.0 {
        return f64::INFINITY;
    }
    (q * f64::from(rounds)).sqrt() / sigma
}

/// Total training time `c_t · T`.
pub fn efficiency(rounds: u32, c_t: f64) -> f64 {
    c_t * f64::from(rounds)
}

/// Big-O constants `(a1, a2)` of the convergence bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub a1: f64,
    pub a2: f64,
}

/// Full convergence bound
/// `a1·(1/(ηET) + η²E² + η) + a2·σ²/(η·q·K·E)`.
pub fn convergence_bound(
    rounds: u32,
    local_epochs: usize,
    eta: f64,
    sigma: f64,
    q: f64,
    clients: usize,
    c: BoundConstants,
) -> f64 {
    let t = f64::from(rounds);
    let e = local_epochs as f64;
    let k = clients as f64;
    c.a1 * (1.0 / (eta * e * t) + eta * eta * e * e + eta)
        + c.a2 * sigma * sigma / (eta * q * k * e)
}

/// Utility read off an averaged test-loss trace at round `T` (1-based).
///
/// Without a baseline this is the raw averaged loss; with one it is the
/// difference against the baseline run at the same round.
pub fn empirical_utility(trace: &[f64], rounds: u32, baseline: Option<&[f64]>) -> Result<f64> {
    let t = rounds as usize;
    if t == 0 || t > trace.len() {
        return Err(Error::OutOfRange(format!(
            "round {t} outside trace of length {}",
            trace.len()
        )));
    }
    let raw = trace[t - 1];
    match baseline {
        None => Ok(raw),
        Some(b) => {
            let base = b.get(t - 1).ok_or_else(|| {
                Error::OutOfRange(format!("round {t} outside baseline of length {}", b.len()))
            })?;
            Ok(raw - base)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pp() -> PrivacyParams {
        PrivacyParams::new(1.0, 40)
    }

    #[test]
    fn leakage_reference_value() {
        // sqrt(0.5 * 100 * ln 1e5) / (sqrt(40) * 0.1)
        let oracle = (0.5f64 * 100.0 * 100_000f64.ln()).sqrt() / (40f64.sqrt() * 0.1);
        let v = privacy_leakage(100, 0.1, 0.5, &pp());
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 37.94).abs() < 0.005);
    }

    #[test]
    fn leakage_scaling() {
        let a = privacy_leakage(100, 0.1, 0.5, &pp());
        let b = privacy_leakage(400, 0.2, 0.5, &pp());
        assert!((a - b).abs() <= 1e-12 * a);
        let c = privacy_leakage(100, 0.1, 1.0, &pp());
        assert!((c / a - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(privacy_leakage(10, 0.0, 0.5, &pp()), f64::INFINITY);
    }

    #[test]
    fn f1_values() {
        let tp = TheoryParams {
            k: 25.0,
            clients: 10,
            c_t: 1.0,
            eff_budget: 200.0,
        };
        assert_eq!(utility_f1(1, 0.0, 1.0, &tp), 1.0);
        assert!(utility_f1(1_000_000, 0.0, 1.0, &tp) < 1e-5);
        assert!((utility_f1(10, 0.2, 1.0, &tp) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn f2_values() {
        assert_eq!(privacy_f2(1, 1.0, 1.0), 1.0);
        assert_eq!(privacy_f2(4, 0.5, 0.25), 2.0);
        assert_eq!(privacy_f2(4, 0.0, 0.25), f64::INFINITY);
    }

    #[test]
    fn efficiency_and_feasibility() {
        assert_eq!(efficiency(200, 1.0), 200.0);
        let tp = TheoryParams {
            k: 1.0,
            clients: 1,
            c_t: 2.0,
            eff_budget: 150.0,
        };
        assert_eq!(tp.t_max().unwrap(), 75);
        assert!(tp.is_feasible(75));
        assert!(!tp.is_feasible(76));
        assert!(efficiency(75, 2.0) <= 150.0);
    }

    #[test]
    fn bound_reduces_without_noise() {
        let c = BoundConstants { a1: 1.0, a2: 1.0 };
        let b = convergence_bound(10, 5, 0.1, 0.0, 0.5, 10, c);
        let expect = 1.0 / (0.1 * 5.0 * 10.0) + 0.01 * 25.0 + 0.1;
        assert!((b - expect).abs() < 1e-12);
        assert!(convergence_bound(10, 5, 0.1, 0.2, 0.5, 10, c) > b);
    }

    #[test]
    fn bound_depends_on_sigma_sq_over_q() {
        let c = BoundConstants { a1: 2.0, a2: 3.0 };
        let a = convergence_bound(50, 4, 0.05, 0.1, 0.25, 20, c);
        let b = convergence_bound(50, 4, 0.05, 0.2, 1.0, 20, c);
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn empirical_utility_modes() {
        let trace = [0.9, 0.5, 0.3];
        assert_eq!(empirical_utility(&trace, 1, None).unwrap(), 0.9);
        assert_eq!(empirical_utility(&trace, 3, Some(&trace)).unwrap(), 0.0);
        assert!(empirical_utility(&trace, 0, None).is_err());
        assert!(empirical_utility(&trace, 4, None).is_err());
        assert!(empirical_utility(&trace, 3, Some(&[0.1])).is_err());
    }
}

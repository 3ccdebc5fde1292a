//! Closed-form Pareto solutions of the simplified problem
//!
//! ```text
//! min (f1, f2),  f1 = 1/T + k·σ²/(qK),  f2 = sqrt(qT)/σ,  s.t. c_t·T ≤ ε̄_e
//! ```
//!
//! Without a noise ceiling the solutions lie on `k·σ²·T = q·K`. With a
//! ceiling `σ_max` and fixed `q` the solution set is piecewise in `T`; see
//! [`analytical_solutions`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pareto::ParamPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseLabel {
    /// No noise ceiling.
    Unconstrained,
    /// `k·σ_max²·T_max > q·K`.
    WideSigma,
    /// `k·σ_max²·T_max ≤ q·K`.
    TightSigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SigmaRule {
    Fixed {
        sigma: f64,
    },
    /// `σ = sqrt(qK/(kT))`
    Curve,
    /// Any `σ ∈ [lo, hi]`.
    Interval {
        lo: f64,
        hi: f64,
    },
}

/// A rule that applies to every `T` in `t_start..=t_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionSegment {
    pub t_start: u32,
    pub t_end: u32,
    #[serde(flatten)]
    pub rule: SigmaRule,
}

impl SolutionSegment {
    pub fn contains(&self, rounds: u32) -> bool {
        (self.t_start..=self.t_end).contains(&rounds)
    }
}

/// Analytical Pareto solutions for one `(q, K, k, σ_max, T_max)` setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticalSolution {
    pub case: CaseLabel,
    pub q: f64,
    #[serde(rename = "K")]
    pub clients: usize,
    pub k: f64,
    pub sigma_max: Option<f64>,
    pub t_max: u32,
    pub segments: Vec<SolutionSegment>,
}

/// One row of a sampled solution: the admissible σ range at `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionRow {
    #[serde(rename = "T")]
    pub rounds: u32,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    /// Largest admissible σ, the one with the smallest `f2`.
    pub sigma: f64,
    /// `σ²/q` of the representative point.
    pub noise_ratio: f64,
}

/// `σ = sqrt(qK/(kT))`.
pub fn curve_sigma(rounds: u32, q: f64, clients: usize, k: f64) -> f64 {
    (q * clients as f64 / (k * f64::from(rounds))).sqrt()
}

fn check_params(q: f64, clients: usize, k: f64, sigma_max: Option<f64>, t_max: u32) -> Result<()> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Config(format!("q must be in (0, 1], got {q}")));
    }
    if clients == 0 || t_max == 0 {
        return Err(Error::Config("K and T_max must be at least 1".into()));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Config(format!("k must be positive, got {k}")));
    }
    if let Some(s) = sigma_max {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Config(format!(
                "sigma_max must be positive, got {s}"
            )));
        }
    }
    Ok(())
}

/// Which of the three regimes applies; the boundary `k·σ_max²·T_max = q·K`
/// is [`CaseLabel::TightSigma`].
pub fn classify_case(
    q: f64,
    clients: usize,
    k: f64,
    sigma_max: Option<f64>,
    t_max: u32,
) -> CaseLabel {
    match sigma_max {
        None => CaseLabel::Unconstrained,
        Some(s) if k * s * s * f64::from(t_max) > q * clients as f64 => CaseLabel::WideSigma,
        Some(_) => CaseLabel::TightSigma,
    }
}

/// `n = q·K/(k·σ_max²)`, the round at which the curve reaches `σ_max`.
pub fn breakpoint(q: f64, clients: usize, k: f64, sigma_max: f64) -> f64 {
    q * clients as f64 / (k * sigma_max * sigma_max)
}

/// `k·σ²·T − q·K`, zero on the Pareto manifold.
pub fn manifold_residual(point: &ParamPoint, k: f64, clients: usize) -> f64 {
    k * point.sigma * point.sigma * f64::from(point.rounds) - point.q * clients as f64
}

/// `X = 1/T + (k/K)·σ²/q`; the same expression as [`crate::objectives::utility_f1`].
pub fn x_transform(rounds: u32, sigma: f64, q: f64, k: f64, clients: usize) -> f64 {
    1.0 / f64::from(rounds) + k * sigma * sigma / (q * clients as f64)
}

/// Smallest `f2` attainable at utility level `X`: `2·sqrt(k)/(sqrt(K)·X)`.
pub fn theoretical_front(x: f64, k: f64, clients: usize) -> f64 {
    2.0 * k.sqrt() / ((clients as f64).sqrt() * x)
}

/// `floor(ε̄_e / c_t)`.
pub fn design_t_max(eff_budget: f64, c_t: f64) -> Result<u32> {
    if !(c_t > 0.0 && c_t.is_finite()) {
        return Err(Error::Config(format!("c_t must be positive, got {c_t}")));
    }
    if eff_budget.is_nan() || eff_budget < c_t {
        return Err(Error::Infeasible(format!(
            "efficiency budget {eff_budget} is below one round ({c_t})"
        )));
    }
    let t = (eff_budget / c_t).floor();
    if t > f64::from(u32::MAX) {
        return Err(Error::Config(format!("T_max = {t} is too large")));
    }
    Ok(t as u32)
}

/// Piecewise Pareto solutions with fixed `q`.
///
/// * Unconstrained: the curve on `[1, T_max]`.
/// * Wide σ range: `σ_max` on `[1, ⌊n⌋]`, the curve on `[⌈n⌉, T_max−1]` and
///   `σ ∈ [0, sqrt(qK/(k·T_max))]` at `T_max`, with `n = qK/(kσ_max²)`. When
///   `n` is an integer both rules give `σ_max` at `T = n`; that round is
///   assigned to the curve.
/// * Tight σ range: `σ_max` on `[1, T_max−1]` and `σ ∈ [0, σ_max]` at `T_max`.
///
/// `T_max = 1` collapses every case to one interval segment. Empty segments
/// are omitted, so the emitted ranges tile `[1, T_max]`.
pub fn analytical_solutions(
    q: f64,
    clients: usize,
    k: f64,
    sigma_max: Option<f64>,
    t_max: u32,
) -> Result<AnalyticalSolution> {
    check_params(q, clients, k, sigma_max, t_max)?;
    let case = classify_case(q, clients, k, sigma_max, t_max);
    let end_hi = match sigma_max {
        Some(s) => s.min(curve_sigma(t_max, q, clients, k)),
        None => curve_sigma(t_max, q, clients, k),
    };
    let interval_at_end = SolutionSegment {
        t_start: t_max,
        t_end: t_max,
        rule: SigmaRule::Interval {
            lo: 0.0,
            hi: end_hi,
        },
    };

    let mut segments = Vec::new();
    let mut push = |t_start: u32, t_end: u32, rule: SigmaRule| {
        if t_start <= t_end {
            segments.push(SolutionSegment {
                t_start,
                t_end,
                rule,
            });
        }
    };
    if t_max == 1 {
        segments.push(interval_at_end);
    } else {
        match (case, sigma_max) {
            (CaseLabel::Unconstrained, _) | (_, None) => push(1, t_max, SigmaRule::Curve),
            (CaseLabel::WideSigma, Some(s)) => {
                let n = breakpoint(q, clients, k, s);
                let last_fixed = if n.fract() == 0.0 {
                    n as u32 - 1
                } else {
                    n.floor() as u32
                };
                push(1, last_fixed, SigmaRule::Fixed { sigma: s });
                push(last_fixed + 1, t_max - 1, SigmaRule::Curve);
                segments.push(interval_at_end);
            }
            (CaseLabel::TightSigma, Some(s)) => {
                push(1, t_max - 1, SigmaRule::Fixed { sigma: s });
                segments.push(interval_at_end);
            }
        }
    }
    Ok(AnalyticalSolution {
        case,
        q,
        clients,
        k,
        sigma_max,
        t_max,
        segments,
    })
}

impl AnalyticalSolution {
    pub fn segment_at(&self, rounds: u32) -> Option<&SolutionSegment> {
        self.segments.iter().find(|s| s.contains(rounds))
    }

    /// Admissible `[lo, hi]` σ range at round `T`.
    pub fn sigma_bounds(&self, rounds: u32) -> Option<(f64, f64)> {
        self.segment_at(rounds).map(|seg| match seg.rule {
            SigmaRule::Fixed { sigma } => (sigma, sigma),
            SigmaRule::Curve => {
                let s = curve_sigma(rounds, self.q, self.clients, self.k);
                (s, s)
            }
            SigmaRule::Interval { lo, hi } => (lo, hi),
        })
    }

    /// One row per `T = 1..=T_max`.
    pub fn rows(&self) -> Vec<SolutionRow> {
        (1..=self.t_max)
            .filter_map(|t| {
                self.sigma_bounds(t).map(|(lo, hi)| SolutionRow {
                    rounds: t,
                    sigma_lo: lo,
                    sigma_hi: hi,
                    sigma: hi,
                    noise_ratio: hi * hi / self.q,
                })
            })
            .collect()
    }

    /// Nearest-grid snap of the solution onto a σ grid.
    ///
    /// Point rules (fixed, curve) map to the grid value nearest the analytic
    /// σ (ties go to the smaller value). An interval maps to every grid value
    /// inside it, or to the grid value nearest its upper end when none lies
    /// inside.
    pub fn snap_to_grid(&self, sigma_grid: &[f64]) -> Vec<ParamPoint> {
        let mut grid: Vec<f64> = sigma_grid.to_vec();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        if grid.is_empty() {
            return Vec::new();
        }
        let nearest = |target: f64| {
            grid.iter()
                .copied()
                .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
                .expect("non-empty grid")
        };
        let mut out = Vec::new();
        for t in 1..=self.t_max {
            let Some(seg) = self.segment_at(t) else {
                continue;
            };
            match seg.rule {
                SigmaRule::Interval { lo, hi } => {
                    let inside: Vec<f64> = grid
                        .iter()
                        .copied()
                        .filter(|&s| s >= lo && s <= hi)
                        .collect();
                    if inside.is_empty() {
                        out.push(ParamPoint::new(t, nearest(hi), self.q));
                    } else {
                        out.extend(inside.into_iter().map(|s| ParamPoint::new(t, s, self.q)));
                    }
                }
                _ => {
                    let (s, _) = self.sigma_bounds(t).expect("segment exists");
                    out.push(ParamPoint::new(t, nearest(s), self.q));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{self, TheoryParams};

    #[test]
    fn case_classification() {
        // 25 * 0.01 * 150 = 37.5 > 10
        assert_eq!(
            classify_case(1.0, 10, 25.0, Some(0.10), 150),
            CaseLabel::WideSigma
        );
        // 25 * 0.0025 * 75 = 4.6875 <= 10
        assert_eq!(
            classify_case(1.0, 10, 25.0, Some(0.050), 75),
            CaseLabel::TightSigma
        );
        assert_eq!(
            classify_case(1.0, 10, 25.0, None, 75),
            CaseLabel::Unconstrained
        );
        // 25 * 0.04 * 10 = 10 exactly
        assert_eq!(
            classify_case(1.0, 10, 25.0, Some(0.2), 10),
            CaseLabel::TightSigma
        );
    }

    #[test]
    fn residuals() {
        let on = ParamPoint::new(40, 0.1, 1.0);
        assert!(manifold_residual(&on, 25.0, 10).abs() < 1e-12);
        assert_eq!(
            manifold_residual(&ParamPoint::new(7, 0.0, 0.5), 25.0, 10),
            -5.0
        );
        // k = 22, K = 40: 22 σ² T = 40 q
        let s = curve_sigma(80, 0.375, 40, 22.0);
        assert!(manifold_residual(&ParamPoint::new(80, s, 0.375), 22.0, 40).abs() < 1e-12);
    }

    #[test]
    fn wide_sigma_segments() {
        let sol = analytical_solutions(1.0, 10, 25.0, Some(0.10), 150).unwrap();
        assert_eq!(sol.case, CaseLabel::WideSigma);
        // n = 10 / (25 * 0.01) = 40 exactly: round 40 is assigned to the curve
        assert_eq!(sol.segments.len(), 3);
        assert_eq!((sol.segments[0].t_start, sol.segments[0].t_end), (1, 39));
        assert_eq!((sol.segments[1].t_start, sol.segments[1].t_end), (40, 149));
        assert_eq!(sol.segments[1].rule, SigmaRule::Curve);
        assert_eq!((sol.segments[2].t_start, sol.segments[2].t_end), (150, 150));
        let (lo, hi) = sol.sigma_bounds(150).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - (10.0f64 / (25.0 * 150.0)).sqrt()).abs() < 1e-15);
        let (s40, _) = sol.sigma_bounds(40).unwrap();
        assert!((s40 - 0.10).abs() < 1e-15);
    }

    #[test]
    fn wide_sigma_non_integer_breakpoint() {
        let sol = analytical_solutions(1.0, 10, 25.0, Some(0.12), 150).unwrap();
        // n = 10 / (25 * 0.0144) = 27.77...
        assert_eq!(sol.segments[0].t_end, 27);
        assert_eq!(sol.segments[1].t_start, 28);
    }

    #[test]
    fn tight_sigma_segments() {
        let sol = analytical_solutions(1.0, 10, 25.0, Some(0.05), 75).unwrap();
        assert_eq!(sol.case, CaseLabel::TightSigma);
        assert_eq!(
            sol.segments,
            vec![
                SolutionSegment {
                    t_start: 1,
                    t_end: 74,
                    rule: SigmaRule::Fixed { sigma: 0.05 }
                },
                SolutionSegment {
                    t_start: 75,
                    t_end: 75,
                    rule: SigmaRule::Interval { lo: 0.0, hi: 0.05 }
                },
            ]
        );
    }

    #[test]
    fn unconstrained_curve_lies_on_manifold() {
        let sol = analytical_solutions(0.5, 40, 22.0, None, 200).unwrap();
        assert_eq!(sol.segments.len(), 1);
        for row in sol.rows() {
            let p = ParamPoint::new(row.rounds, row.sigma, 0.5);
            assert!(manifold_residual(&p, 22.0, 40).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_single_round() {
        for sm in [None, Some(0.01), Some(10.0)] {
            let sol = analytical_solutions(1.0, 10, 25.0, sm, 1).unwrap();
            assert_eq!(sol.segments.len(), 1);
            assert!(matches!(sol.segments[0].rule, SigmaRule::Interval { .. }));
        }
    }

    #[test]
    fn segments_tile_range() {
        for (sm, t_max) in [
            (None, 50),
            (Some(0.1), 150),
            (Some(0.05), 75),
            (Some(0.3), 3),
        ] {
            let sol = analytical_solutions(1.0, 10, 25.0, sm, t_max).unwrap();
            let mut next = 1;
            for seg in &sol.segments {
                assert_eq!(seg.t_start, next);
                next = seg.t_end + 1;
            }
            assert_eq!(next, t_max + 1);
        }
    }

    #[test]
    fn x_transform_on_manifold_and_front() {
        let (t, s) = (40, 0.1);
        let x = x_transform(t, s, 1.0, 25.0, 10);
        assert!((x - 2.0 / 40.0).abs() < 1e-15);
        let front = theoretical_front(x, 25.0, 10);
        assert!((front - 63.245_553_203_367_59).abs() < 1e-9);
        let f2 = objectives::privacy_f2(t, s, 1.0);
        assert!((front - f2).abs() <= 1e-12 * f2);
        assert_eq!(x_transform(8, 0.0, 0.3, 25.0, 10), 1.0 / 8.0);
        let tp = TheoryParams {
            k: 25.0,
            clients: 10,
            c_t: 1.0,
            eff_budget: 10.0,
        };
        assert_eq!(x, objectives::utility_f1(t, s, 1.0, &tp));
    }

    #[test]
    fn front_scaling() {
        let a = theoretical_front(0.1, 25.0, 10);
        assert!(theoretical_front(0.2, 25.0, 10) < a);
        assert!((theoretical_front(0.1, 25.0, 20) * 2f64.sqrt() - a).abs() < 1e-12);
    }

    #[test]
    fn t_max_design() {
        assert_eq!(design_t_max(150.0, 1.0).unwrap(), 150);
        assert_eq!(design_t_max(150.0, 2.0).unwrap(), 75);
        assert!(matches!(design_t_max(0.5, 1.0), Err(Error::Infeasible(_))));
        assert!(design_t_max(10.0, 0.0).is_err());
    }

    #[test]
    fn snapping() {
        let sol = analytical_solutions(1.0, 10, 25.0, Some(0.05), 4).unwrap();
        let grid = [0.01, 0.02, 0.03, 0.04, 0.05];
        let pts = sol.snap_to_grid(&grid);
        // Fixed rule on T = 1..3, every grid value at T = 4
        assert_eq!(pts.len(), 3 + 5);
        assert!(pts[..3].iter().all(|p| p.sigma == 0.05));
    }
}

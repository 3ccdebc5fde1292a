//! Low-cost parameter design: fit `k` from pre-experiment Pareto solutions,
//! design σ for a deployment and account for the simulation cost saved.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pareto::ParamPoint;

/// Unconstrained `ln σ² = a + s·ln T` regression, kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeSlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Estimated constant of the law `k·σ²·T = q0·K0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLaw {
    pub k: f64,
    /// r² of the fixed-slope model in log-log space.
    pub fit_r2: f64,
    pub n_points: usize,
    pub q0: f64,
    #[serde(rename = "K0")]
    pub k0: usize,
    /// Points dropped for `σ <= 0`, non-finite σ or `T = 0`.
    #[serde(default)]
    pub excluded: usize,
    /// `None` when every point shares one `T`.
    #[serde(default)]
    pub free_slope: Option<FreeSlopeFit>,
}

fn r_squared(ss_res: f64, ss_tot: f64) -> f64 {
    if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Fits `ln σ² = ln(q0·K0/k) − ln T` with the slope pinned at −1.
///
/// Only the intercept is estimated, as the mean of `ln σ² + ln T`; a single
/// distinct `T` is therefore fine. Points with `σ <= 0` (or non-finite) and
/// `T = 0` are excluded and counted.
pub fn fit_k(points: &[ParamPoint], q0: f64, k0: usize) -> Result<FittedLaw> {
    if !(q0 > 0.0 && q0 <= 1.0) {
        return Err(Error::Config(format!("q0 must be in (0, 1], got {q0}")));
    }
    if k0 == 0 {
        return Err(Error::Config("K0 must be at least 1".into()));
    }
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.sigma > 0.0 && p.sigma.is_finite() && p.rounds >= 1)
        .map(|p| (f64::from(p.rounds).ln(), (p.sigma * p.sigma).ln()))
        .collect();
    let excluded = points.len() - usable.len();
    if usable.len() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 points with sigma > 0 to fit k, got {}",
            usable.len()
        )));
    }
    let n = usable.len() as f64;
    let intercept = usable.iter().map(|(x, y)| y + x).sum::<f64>() / n;
    let y_mean = usable.iter().map(|(_, y)| y).sum::<f64>() / n;
    let ss_tot: f64 = usable.iter().map(|(_, y)| (y - y_mean).powi(2)).sum();
    let ss_res: f64 = usable
        .iter()
        .map(|(x, y)| (y - (intercept - x)).powi(2))
        .sum();

    let x_mean = usable.iter().map(|(x, _)| x).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|(x, _)| (x - x_mean).powi(2)).sum();
    let free_slope = (sxx > 0.0).then(|| {
        let sxy: f64 = usable
            .iter()
            .map(|(x, y)| (x - x_mean) * (y - y_mean))
            .sum();
        let slope = sxy / sxx;
        let a = y_mean - slope * x_mean;
        let res: f64 = usable
            .iter()
            .map(|(x, y)| (y - a - slope * x).powi(2))
            .sum();
        FreeSlopeFit {
            slope,
            intercept: a,
            r2: r_squared(res, ss_tot),
        }
    });

    Ok(FittedLaw {
        k: q0 * k0 as f64 / intercept.exp(),
        fit_r2: r_squared(ss_res, ss_tot),
        n_points: usable.len(),
        q0,
        k0,
        excluded,
        free_slope,
    })
}

/// `sqrt(q_r·K / (k·T_r))`, the σ that puts `(T_r, σ, q_r)` on the law.
pub fn design_sigma(q_r: f64, clients: usize, k: f64, t_r: u32) -> Result<f64> {
    if !(q_r > 0.0 && q_r <= 1.0) {
        return Err(Error::Config(format!("q_r must be in (0, 1], got {q_r}")));
    }
    if clients == 0 || t_r == 0 {
        return Err(Error::Config("K and T_r must be positive".into()));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Config(format!("k must be positive, got {k}")));
    }
    Ok((q_r * clients as f64 / (k * f64::from(t_r))).sqrt())
}

/// One method's row in a complexity table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCost {
    pub method: String,
    /// Asymptotic cost, LaTeX as printed in the comparison tables.
    pub theta: String,
    /// Full training runs of `T_r` rounds the method needs.
    pub simulations: usize,
    pub simulated_rounds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub n_sigma: usize,
    pub n_q: usize,
    #[serde(rename = "T_r")]
    pub t_r: u32,
    /// Measured pre-experiment wall-clock seconds, if any.
    pub t0_seconds: Option<f64>,
    /// Simulations spent in the pre-experiment, if known.
    pub pre_experiment_cells: Option<usize>,
    /// Guiding parameter design for one `(q, T)`.
    pub guiding: Vec<MethodCost>,
    /// Recovering the full Pareto set.
    pub pareto_set: Vec<MethodCost>,
}

pub const METHOD_OURS: &str = "Our Method";
pub const METHOD_BUDGET: &str = "Training with Budget";
pub const METHOD_CONVERGENCE: &str = "Training until Convergence";

pub const THETA_GUIDING: [&str; 3] = [
    r"t_0 + \Theta(T_r)",
    r"\Theta(n_{\sigma}T_r)",
    r"\Theta(n_{\sigma} T_r)",
];
pub const THETA_PARETO: [&str; 3] = [
    r"t_0 + \Theta(n_{\sigma}T_r)",
    r"\Theta(n_{q}n_{\sigma}T_r)",
    r"\Theta(n_{q} n_{\sigma}T_r)",
];

fn rows(theta: [&str; 3], sims: [usize; 3], t_r: u32) -> Vec<MethodCost> {
    [METHOD_OURS, METHOD_BUDGET, METHOD_CONVERGENCE]
        .into_iter()
        .zip(theta)
        .zip(sims)
        .map(|((method, theta), simulations)| MethodCost {
            method: method.into(),
            theta: theta.into(),
            simulations,
            simulated_rounds: simulations as u64 * u64::from(t_r),
        })
        .collect()
}

/// Instantiates both complexity tables for a run with `n_sigma` noise levels
/// and `n_q` sample ratios.
///
/// Once `k` is known the design path trains a single configuration; the
/// baselines train one per σ (guiding design) or per `(q, σ)` (Pareto set).
pub fn complexity_report(
    n_sigma: usize,
    n_q: usize,
    t_r: u32,
    t0: Option<f64>,
) -> Result<ComplexityReport> {
    if n_sigma == 0 || n_q == 0 || t_r == 0 {
        return Err(Error::Config(
            "n_sigma, n_q and T_r must be positive".into(),
        ));
    }
    Ok(ComplexityReport {
        n_sigma,
        n_q,
        t_r,
        t0_seconds: t0,
        pre_experiment_cells: None,
        guiding: rows(THETA_GUIDING, [1, n_sigma, n_sigma], t_r),
        pareto_set: rows(THETA_PARETO, [1, n_q * n_sigma, n_q * n_sigma], t_r),
    })
}

impl ComplexityReport {
    pub fn with_pre_experiment(mut self, cells: usize) -> Self {
        self.pre_experiment_cells = Some(cells);
        self
    }

    /// Simulations on the design path: the pre-experiment plus one deployment run.
    pub fn design_path_simulations(&self) -> usize {
        1 + self.pre_experiment_cells.unwrap_or(0)
    }

    /// Baseline simulations over ours for the guiding-design table.
    pub fn guiding_factor(&self) -> f64 {
        self.guiding[1].simulations as f64 / self.guiding[0].simulations as f64
    }

    /// Baseline simulations over ours for the Pareto-set table.
    pub fn pareto_factor(&self) -> f64 {
        self.pareto_set[1].simulations as f64 / self.pareto_set[0].simulations as f64
    }
}

impl fmt::Display for ComplexityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t0 = match self.t0_seconds {
            Some(s) => format!("{s:.3} s"),
            None => "t_0".into(),
        };
        writeln!(
            f,
            "n_sigma = {}, n_q = {}, T_r = {}, t0 = {t0}",
            self.n_sigma, self.n_q, self.t_r
        )?;
        for (title, table, factor) in [
            (
                "Guiding parameter design",
                &self.guiding,
                self.guiding_factor(),
            ),
            (
                "Achieving Pareto set",
                &self.pareto_set,
                self.pareto_factor(),
            ),
        ] {
            writeln!(f, "{title}:")?;
            for m in table {
                writeln!(
                    f,
                    "  {:<28} {:<30} {:>6} simulations ({} rounds)",
                    m.method, m.theta, m.simulations, m.simulated_rounds
                )?;
            }
            writeln!(f, "  baseline / ours = {factor}x")?;
        }
        match self.pre_experiment_cells {
            Some(cells) => write!(
                f,
                "design path: 1 + {cells} pre-experiment = {} simulations",
                self.design_path_simulations()
            ),
            None => write!(f, "design path: t0 + 1 simulation"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law_points(k: f64, q0: f64, k0: usize, ts: &[u32]) -> Vec<ParamPoint> {
        ts.iter()
            .map(|&t| ParamPoint::new(t, design_sigma(q0, k0, k, t).unwrap(), q0))
            .collect()
    }

    #[test]
    fn noiseless_recovery() {
        let pts = law_points(25.0, 1.0, 10, &[1, 5, 17, 40, 200]);
        let law = fit_k(&pts, 1.0, 10).unwrap();
        assert!((law.k - 25.0).abs() < 1e-9);
        assert!((law.fit_r2 - 1.0).abs() < 1e-12);
        let free = law.free_slope.unwrap();
        assert!((free.slope + 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_round_still_fits() {
        let pts = [ParamPoint::new(10, 0.2, 1.0), ParamPoint::new(10, 0.3, 1.0)];
        let law = fit_k(&pts, 1.0, 10).unwrap();
        assert!(law.free_slope.is_none());
        assert!(law.k.is_finite() && law.k > 0.0);
    }

    #[test]
    fn bad_points_excluded() {
        let mut pts = law_points(25.0, 1.0, 10, &[4, 9]);
        pts.push(ParamPoint::new(3, 0.0, 1.0));
        pts.push(ParamPoint::new(3, -0.1, 1.0));
        let law = fit_k(&pts, 1.0, 10).unwrap();
        assert_eq!((law.n_points, law.excluded), (2, 2));
        assert!(fit_k(&pts[2..], 1.0, 10).is_err());
    }

    #[test]
    fn scale_symmetry() {
        let pts = [
            ParamPoint::new(10, 0.21, 1.0),
            ParamPoint::new(30, 0.1, 1.0),
            ParamPoint::new(70, 0.08, 1.0),
        ];
        let scaled: Vec<_> = pts
            .iter()
            .map(|p| ParamPoint::new(p.rounds * 4, p.sigma / 2.0, p.q))
            .collect();
        let a = fit_k(&pts, 1.0, 10).unwrap();
        let b = fit_k(&scaled, 1.0, 10).unwrap();
        assert!((a.k - b.k).abs() < 1e-12 * a.k);
    }

    #[test]
    fn designed_sigma_example() {
        let s = design_sigma(0.5, 40, 25.0, 80).unwrap();
        assert!((s - 0.1).abs() < 1e-15);
        assert!(design_sigma(0.0, 40, 25.0, 80).is_err());
    }

    #[test]
    fn complexity_counts() {
        let r = complexity_report(14, 7, 200, None).unwrap();
        assert_eq!(r.pareto_factor(), 98.0);
        assert_eq!(r.guiding_factor(), 14.0);
        assert_eq!(r.pareto_set[2].theta, r"\Theta(n_{q} n_{\sigma}T_r)");
        let one = complexity_report(1, 3, 10, Some(0.0)).unwrap();
        assert!(one.guiding.iter().all(|m| m.simulations == 1));
        let r = r.with_pre_experiment(7);
        assert_eq!(r.design_path_simulations(), 8);
        assert!(r.to_string().contains(r"t_0 + \Theta(T_r)"));
    }
}

//! Pareto dominance, non-dominated filtering and the `(q, σ, T)` grid driver.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{self, ObjectivePoint, ObjectiveSource, TheoryParams};

/// A candidate `(T, σ, q)` configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    #[serde(rename = "T")]
    pub rounds: u32,
    pub sigma: f64,
    pub q: f64,
}

impl ParamPoint {
    pub fn new(rounds: u32, sigma: f64, q: f64) -> Self {
        Self { rounds, sigma, q }
    }

    /// Lexicographic `(T, σ, q)` order.
    pub fn lex_cmp(&self, other: &Self) -> Ordering {
        self.rounds
            .cmp(&other.rounds)
            .then_with(|| cmp_f64(self.sigma, other.sigma))
            .then_with(|| cmp_f64(self.q, other.q))
    }

    /// Canonical grid order `(q, σ, T)`.
    pub fn grid_cmp(&self, other: &Self) -> Ordering {
        cmp_f64(self.q, other.q)
            .then_with(|| cmp_f64(self.sigma, other.sigma))
            .then_with(|| self.rounds.cmp(&other.rounds))
    }
}

/// Numeric order that treats `-0.0 == 0.0` and sorts NaN last.
fn cmp_f64(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b)
        .unwrap_or_else(|| a.is_nan().cmp(&b.is_nan()))
}

/// `a` is no worse than `b` in both objectives and strictly better in one.
pub fn dominates(a: &ObjectivePoint, b: &ObjectivePoint) -> bool {
    a.utility <= b.utility
        && a.privacy <= b.privacy
        && (a.utility < b.utility || a.privacy < b.privacy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoSet {
    /// Non-dominated points, ascending in utility.
    pub members: Vec<ObjectivePoint>,
    /// Evaluated points that are not members.
    pub dominated_count: usize,
}

impl ParetoSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn origins(&self) -> Vec<ParamPoint> {
        self.members.iter().map(|m| m.origin).collect()
    }
}

/// Returns the non-dominated subset of `points`.
///
/// Points with identical objectives do not dominate each other; only the
/// one with the lexicographically smallest `(T, σ, q)` origin is kept. Points
/// with a NaN objective are never members.
///
/// Two objectives allow a sweep: after sorting by `(utility, privacy,
/// origin)`, a point is a member exactly when its privacy is strictly below
/// that of every point before it.
pub fn non_dominated_sort(points: &[ObjectivePoint]) -> ParetoSet {
    let mut order: Vec<&ObjectivePoint> = points
        .iter()
        .filter(|p| !p.utility.is_nan() && !p.privacy.is_nan())
        .collect();
    order.sort_by(|a, b| {
        cmp_f64(a.utility, b.utility)
            .then_with(|| cmp_f64(a.privacy, b.privacy))
            .then_with(|| a.origin.lex_cmp(&b.origin))
    });
    let mut members = Vec::new();
    let mut best = f64::INFINITY;
    for p in order {
        if p.privacy < best || (members.is_empty() && p.privacy == f64::INFINITY) {
            best = p.privacy;
            members.push(*p);
        }
    }
    ParetoSet {
        dominated_count: points.len() - members.len(),
        members,
    }
}

/// Produces the objective points of one `(q, σ)` cell for `T = 1..=t_max`.
pub trait CellEvaluator: Sync {
    fn evaluate_cell(&self, q: f64, sigma: f64, t_max: u32) -> Result<Vec<ObjectivePoint>>;
}

/// Adapts a per-point function into a cell evaluator.
pub struct Pointwise<F>(pub F);

impl<F> CellEvaluator for Pointwise<F>
where
    F: Fn(ParamPoint) -> Result<ObjectivePoint> + Sync,
{
    fn evaluate_cell(&self, q: f64, sigma: f64, t_max: u32) -> Result<Vec<ObjectivePoint>> {
        (1..=t_max)
            .map(|t| (self.0)(ParamPoint::new(t, sigma, q)))
            .collect()
    }
}

/// `(f1, f2)` of the simplified problem.
#[derive(Debug, Clone, Copy)]
pub struct TheoreticalEvaluator {
    pub theory: TheoryParams,
}

impl CellEvaluator for TheoreticalEvaluator {
    fn evaluate_cell(&self, q: f64, sigma: f64, t_max: u32) -> Result<Vec<ObjectivePoint>> {
        Ok((1..=t_max)
            .map(|t| {
                ObjectivePoint::new(
                    objectives::utility_f1(t, sigma, q, &self.theory),
                    objectives::privacy_f2(t, sigma, q),
                    ObjectiveSource::Theoretical,
                    ParamPoint::new(t, sigma, q),
                )
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub q: f64,
    pub sigma: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    /// Points of every successful cell in `(q, σ, T)` order.
    pub points: Vec<ObjectivePoint>,
    pub failures: Vec<CellFailure>,
}

/// Evaluates every `(q, σ)` cell for `T ∈ 1..=T_max` (the efficiency
/// constraint), in parallel on the current rayon pool.
///
/// A failing cell contributes no points and is listed in `failures`.
pub fn grid_search<E: CellEvaluator + ?Sized>(
    q_list: &[f64],
    sigma_list: &[f64],
    tp: &TheoryParams,
    evaluator: &E,
) -> Result<GridOutcome> {
    if q_list.is_empty() || sigma_list.is_empty() {
        return Err(Error::Config("q and sigma grids must be non-empty".into()));
    }
    if let Some(q) = q_list.iter().find(|&&q| !(q > 0.0 && q <= 1.0)) {
        return Err(Error::Config(format!("q = {q} outside (0, 1]")));
    }
    if let Some(s) = sigma_list.iter().find(|&&s| !(s >= 0.0 && s.is_finite())) {
        return Err(Error::Config(format!(
            "sigma = {s} must be finite and >= 0"
        )));
    }
    let t_max = tp.t_max()?;
    let cells: Vec<(f64, f64)> = q_list
        .iter()
        .flat_map(|&q| sigma_list.iter().map(move |&s| (q, s)))
        .collect();
    let results: Vec<(f64, f64, Result<Vec<ObjectivePoint>>)> = cells
        .par_iter()
        .map(|&(q, s)| (q, s, evaluator.evaluate_cell(q, s, t_max)))
        .collect();

    let mut points = Vec::with_capacity(cells.len() * t_max as usize);
    let mut failures = Vec::new();
    for (q, sigma, r) in results {
        match r {
            Ok(pts) => points.extend(pts.into_iter().filter(|p| p.origin.rounds <= t_max)),
            Err(e) => failures.push(CellFailure {
                q,
                sigma,
                message: e.to_string(),
            }),
        }
    }
    points.sort_by(|a, b| a.origin.grid_cmp(&b.origin));
    failures.sort_by(|a, b| cmp_f64(a.q, b.q).then_with(|| cmp_f64(a.sigma, b.sigma)));
    Ok(GridOutcome { points, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

    fn pt(u: f64, p: f64, t: u32) -> ObjectivePoint {
        ObjectivePoint::new(
            u,
            p,
            ObjectiveSource::Theoretical,
            ParamPoint::new(t, 0.1, 1.0),
        )
    }

    fn tp(c_t: f64, budget: f64) -> TheoryParams {
        TheoryParams {
            k: 25.0,
            clients: 10,
            c_t,
            eff_budget: budget,
        }
    }

    #[test]
    fn dominance_basics() {
        assert!(dominates(&pt(1.0, 1.0, 1), &pt(2.0, 2.0, 1)));
        assert!(!dominates(&pt(1.0, 2.0, 1), &pt(2.0, 1.0, 1)));
        assert!(!dominates(&pt(2.0, 1.0, 1), &pt(1.0, 2.0, 1)));
        assert!(!dominates(&pt(1.0, 1.0, 1), &pt(1.0, 1.0, 2)));
        assert!(dominates(&pt(1.0, 1.0, 1), &pt(1.0, f64::INFINITY, 1)));
    }

    #[test]
    fn small_front() {
        let pts = [
            pt(1.0, 3.0, 1),
            pt(2.0, 2.0, 2),
            pt(3.0, 1.0, 3),
            pt(2.0, 3.0, 4),
        ];
        let set = non_dominated_sort(&pts);
        let t: Vec<u32> = set.members.iter().map(|m| m.origin.rounds).collect();
        assert_eq!(t, vec![1, 2, 3]);
        assert_eq!(set.dominated_count, 1);
    }

    #[test]
    fn identical_points_collapse_to_smallest_origin() {
        let pts: Vec<_> = [5, 2, 9].iter().map(|&t| pt(1.0, 1.0, t)).collect();
        let set = non_dominated_sort(&pts);
        assert_eq!(set.len(), 1);
        assert_eq!(set.members[0].origin.rounds, 2);
    }

    #[test]
    fn infinite_privacy_only_wins_alone() {
        let set = non_dominated_sort(&[pt(0.5, f64::INFINITY, 1), pt(0.7, 3.0, 2)]);
        assert_eq!(set.len(), 2);
        let set = non_dominated_sort(&[pt(0.5, f64::INFINITY, 1), pt(0.5, 3.0, 2)]);
        assert_eq!(set.origins()[0].rounds, 2);
        assert_eq!(set.len(), 1);
        let set = non_dominated_sort(&[pt(0.5, f64::INFINITY, 1)]);
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn nan_points_are_dropped() {
        let set = non_dominated_sort(&[pt(f64::NAN, 1.0, 1), pt(1.0, 1.0, 2)]);
        assert_eq!(set.len(), 1);
        assert_eq!(set.dominated_count, 1);
    }

    #[test]
    fn theoretical_cell_count() {
        let out = grid_search(
            &[1.0],
            &[0.1],
            &tp(1.0, 5.0),
            &TheoreticalEvaluator {
                theory: tp(1.0, 5.0),
            },
        )
        .unwrap();
        assert_eq!(out.points.len(), 5);
    }

    #[test]
    fn infeasible_rounds_excluded() {
        let theory = tp(2.0, 150.0);
        let out = grid_search(
            &[0.5, 1.0],
            &[0.05, 0.1],
            &theory,
            &TheoreticalEvaluator { theory },
        )
        .unwrap();
        assert_eq!(out.points.len(), 4 * 75);
        assert!(out.points.iter().all(|p| p.origin.rounds <= 75));
    }

    struct Counting(AtomicUsize);

    impl CellEvaluator for Counting {
        fn evaluate_cell(&self, q: f64, sigma: f64, t_max: u32) -> Result<Vec<ObjectivePoint>> {
            self.0.fetch_add(1, AtomicOrdering::SeqCst);
            if sigma == 0.0 {
                return Err(Error::Protocol("boom".into()));
            }
            Ok((1..=t_max)
                .map(|t| {
                    ObjectivePoint::new(
                        1.0 / f64::from(t),
                        sigma,
                        ObjectiveSource::Empirical,
                        ParamPoint::new(t, sigma, q),
                    )
                })
                .collect())
        }
    }

    #[test]
    fn one_evaluation_per_cell_and_failures_recorded() {
        let ev = Counting(AtomicUsize::new(0));
        let out = grid_search(&[0.25, 0.5, 1.0], &[0.0, 0.1], &tp(1.0, 20.0), &ev).unwrap();
        assert_eq!(ev.0.load(AtomicOrdering::SeqCst), 6);
        assert_eq!(out.failures.len(), 3);
        assert_eq!(out.points.len(), 3 * 20);
        assert!(out
            .points
            .windows(2)
            .all(|w| w[0].origin.grid_cmp(&w[1].origin) == Ordering::Less));
    }

    #[test]
    fn bad_grids_rejected() {
        let theory = tp(1.0, 5.0);
        let ev = TheoreticalEvaluator { theory };
        assert!(grid_search(&[], &[0.1], &theory, &ev).is_err());
        assert!(grid_search(&[1.5], &[0.1], &theory, &ev).is_err());
        assert!(grid_search(&[1.0], &[-0.1], &theory, &ev).is_err());
    }
}

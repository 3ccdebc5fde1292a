//! C ABI over `dpfl-core`.
//!
//! Every entry point returns a [`DpflStatus`] (or a plain value for
//! infallible accessors) and never unwinds across the boundary. On failure
//! a message is stored per thread and can be read with [`dpfl_last_error`].
//!
//! Handles (`DpflParetoSet`, `DpflSolution`, `DpflSimulation`) are opaque and
//! owned by the caller once created; release them with the matching
//! `*_free` function. Passing NULL to a `*_free` function is a no-op.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dpfl_core::experiment::ExperimentConfig;
use dpfl_core::fedsim::{multi_seed_run, MultiSeedTrace};
use dpfl_core::objectives::{self, ObjectivePoint, ObjectiveSource, PrivacyParams, TheoryParams};
use dpfl_core::pareto::{non_dominated_sort, ParamPoint, ParetoSet};
use dpfl_core::theory::{self, AnalyticalSolution, CaseLabel, SigmaRule};
use dpfl_core::{design, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpflStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Format = 5,
    Infeasible = 6,
    OutOfRange = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpflCase {
    Unconstrained = 0,
    WideSigma = 1,
    TightSigma = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpflRule {
    /// `sigma_lo == sigma_hi`, constant over the segment.
    Fixed = 0,
    /// `sigma = sqrt(qK/(kT))`; bounds are left as NaN.
    Curve = 1,
    /// Any sigma in `[sigma_lo, sigma_hi]`.
    Interval = 2,
}

/// One objective point together with its `(T, sigma, q)` origin.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpflObjective {
    pub utility: f64,
    pub privacy: f64,
    pub rounds: u32,
    pub sigma: f64,
    pub q: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpflSegment {
    pub t_start: u32,
    pub t_end: u32,
    pub rule: DpflRule,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
}

pub struct DpflParetoSet {
    inner: ParetoSet,
}

pub struct DpflSolution {
    inner: AnalyticalSolution,
}

pub struct DpflSimulation {
    config: ExperimentConfig,
    data: dpfl_core::datasets::DatasetBundle,
    last: Option<MultiSeedTrace>,
}

struct Failure(DpflStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } => DpflStatus::Io,
            Error::Format(_) | Error::Length { .. } | Error::Json(_) | Error::Csv(_) => {
                DpflStatus::Format
            }
            Error::Config(_) | Error::Shape(_) | Error::Protocol(_) => DpflStatus::Config,
            Error::Infeasible(_) => DpflStatus::Infeasible,
            Error::OutOfRange(_) => DpflStatus::OutOfRange,
        };
        Failure(code, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(DpflStatus::InvalidArgument, msg.into())
}

fn null(what: &str) -> Failure {
    Failure(DpflStatus::NullPointer, format!("{what} is NULL"))
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard<F>(f: F) -> DpflStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            DpflStatus::Ok
        }
        Ok(Err(Failure(code, msg))) => {
            set_last_error(msg);
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {msg}"));
            DpflStatus::Panic
        }
    }
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn slice_in<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

fn opt_sigma_max(sigma_max: f64) -> Option<f64> {
    (sigma_max > 0.0).then_some(sigma_max)
}

fn check_q(q: f64) -> Result<(), Failure> {
    if q > 0.0 && q <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("q must be in (0, 1], got {q}")))
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dpfl_version() -> *const c_char {
    static VERSION: &[u8] = concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes();
    VERSION.as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL if the last call
/// succeeded. Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn dpfl_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Closed-form privacy leakage `C·c·sqrt(qT·ln(1/δ))/(sqrt(K)·σ)`.
#[no_mangle]
pub unsafe extern "C" fn dpfl_privacy_leakage(
    rounds: u32,
    sigma: f64,
    q: f64,
    accountant_c: f64,
    c_clip: f64,
    delta: f64,
    clients: usize,
    out: *mut f64,
) -> DpflStatus {
    guard(|| {
        check_q(q)?;
        let p = PrivacyParams {
            accountant_c,
            c_clip,
            delta,
            clients,
        };
        p.validate()?;
        write_out(
            out,
            objectives::privacy_leakage(rounds, sigma, q, &p),
            "out",
        )
    })
}

/// Utility objective `1/T + k·σ²/(qK)`.
#[no_mangle]
pub unsafe extern "C" fn dpfl_utility_f1(
    rounds: u32,
    sigma: f64,
    q: f64,
    k: f64,
    clients: usize,
    out: *mut f64,
) -> DpflStatus {
    guard(|| {
        check_q(q)?;
        if rounds == 0 || clients == 0 {
            return Err(invalid("T and K must be at least 1"));
        }
        let tp = TheoryParams {
            k,
            clients,
            c_t: 1.0,
            eff_budget: f64::from(rounds),
        };
        tp.validate()?;
        write_out(out, objectives::utility_f1(rounds, sigma, q, &tp), "out")
    })
}

/// Privacy objective `sqrt(qT)/σ`.
#[no_mangle]
pub unsafe extern "C" fn dpfl_privacy_f2(
    rounds: u32,
    sigma: f64,
    q: f64,
    out: *mut f64,
) -> DpflStatus {
    guard(|| {
        check_q(q)?;
        write_out(out, objectives::privacy_f2(rounds, sigma, q), "out")
    })
}

/// `k·σ²·T − q·K`.
#[no_mangle]
pub unsafe extern "C" fn dpfl_manifold_residual(
    rounds: u32,
    sigma: f64,
    q: f64,
    k: f64,
    clients: usize,
    out: *mut f64,
) -> DpflStatus {
    guard(|| {
        let p = ParamPoint::new(rounds, sigma, q);
        write_out(out, theory::manifold_residual(&p, k, clients), "out")
    })
}

/// Designed noise `sqrt(q·K/(k·T))` for a deployment.
#[no_mangle]
pub unsafe extern "C" fn dpfl_design_sigma(
    q: f64,
    clients: usize,
    k: f64,
    rounds: u32,
    out: *mut f64,
) -> DpflStatus {
    guard(|| write_out(out, design::design_sigma(q, clients, k, rounds)?, "out"))
}

/// Regime of the analytical solution. `sigma_max <= 0` or NaN means no
/// ceiling.
#[no_mangle]
pub unsafe extern "C" fn dpfl_classify_case(
    q: f64,
    clients: usize,
    k: f64,
    sigma_max: f64,
    t_max: u32,
    out: *mut DpflCase,
) -> DpflStatus {
    guard(|| {
        let case = theory::classify_case(q, clients, k, opt_sigma_max(sigma_max), t_max);
        write_out(out, case_code(case), "out")
    })
}

fn case_code(case: CaseLabel) -> DpflCase {
    match case {
        CaseLabel::Unconstrained => DpflCase::Unconstrained,
        CaseLabel::WideSigma => DpflCase::WideSigma,
        CaseLabel::TightSigma => DpflCase::TightSigma,
    }
}

/// Fits `k` of `k·σ²·T = q0·K0` from `n` Pareto points given as parallel
/// `rounds`/`sigma` arrays. `r2_out` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn dpfl_fit_k(
    rounds: *const u32,
    sigma: *const f64,
    n: usize,
    q0: f64,
    k0: usize,
    k_out: *mut f64,
    r2_out: *mut f64,
) -> DpflStatus {
    guard(|| {
        let t = slice_in(rounds, n, "rounds")?;
        let s = slice_in(sigma, n, "sigma")?;
        if k_out.is_null() {
            return Err(null("k_out"));
        }
        let points: Vec<ParamPoint> = t
            .iter()
            .zip(s)
            .map(|(&t, &s)| ParamPoint::new(t, s, q0))
            .collect();
        let law = design::fit_k(&points, q0, k0)?;
        k_out.write(law.k);
        if !r2_out.is_null() {
            r2_out.write(law.fit_r2);
        }
        Ok(())
    })
}

/// Non-dominated subset of `n` points. On success `*out` owns a new set.
#[no_mangle]
pub unsafe extern "C" fn dpfl_pareto_sort(
    points: *const DpflObjective,
    n: usize,
    out: *mut *mut DpflParetoSet,
) -> DpflStatus {
    guard(|| {
        let pts = slice_in(points, n, "points")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let objs: Vec<ObjectivePoint> = pts
            .iter()
            .map(|p| {
                ObjectivePoint::new(
                    p.utility,
                    p.privacy,
                    ObjectiveSource::Theoretical,
                    ParamPoint::new(p.rounds, p.sigma, p.q),
                )
            })
            .collect();
        let set = Box::new(DpflParetoSet {
            inner: non_dominated_sort(&objs),
        });
        out.write(Box::into_raw(set));
        Ok(())
    })
}

/// Member count; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn dpfl_pareto_len(set: *const DpflParetoSet) -> usize {
    set.as_ref().map_or(0, |s| s.inner.len())
}

/// Members are ordered by ascending utility.
#[no_mangle]
pub unsafe extern "C" fn dpfl_pareto_get(
    set: *const DpflParetoSet,
    index: usize,
    out: *mut DpflObjective,
) -> DpflStatus {
    guard(|| {
        let set = set.as_ref().ok_or_else(|| null("set"))?;
        let m = set.inner.members.get(index).ok_or_else(|| {
            Failure(
                DpflStatus::OutOfRange,
                format!("index {index} out of range for {} members", set.inner.len()),
            )
        })?;
        write_out(
            out,
            DpflObjective {
                utility: m.utility,
                privacy: m.privacy,
                rounds: m.origin.rounds,
                sigma: m.origin.sigma,
                q: m.origin.q,
            },
            "out",
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn dpfl_pareto_free(set: *mut DpflParetoSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Analytical solution set for fixed `q`. `sigma_max <= 0` means no ceiling.
#[no_mangle]
pub unsafe extern "C" fn dpfl_solution_new(
    q: f64,
    clients: usize,
    k: f64,
    sigma_max: f64,
    t_max: u32,
    out: *mut *mut DpflSolution,
) -> DpflStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = theory::analytical_solutions(q, clients, k, opt_sigma_max(sigma_max), t_max)?;
        out.write(Box::into_raw(Box::new(DpflSolution { inner })));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn dpfl_solution_case(
    sol: *const DpflSolution,
    out: *mut DpflCase,
) -> DpflStatus {
    guard(|| {
        let sol = sol.as_ref().ok_or_else(|| null("sol"))?;
        write_out(out, case_code(sol.inner.case), "out")
    })
}

/// Segment count; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn dpfl_solution_segment_count(sol: *const DpflSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.inner.segments.len())
}

#[no_mangle]
pub unsafe extern "C" fn dpfl_solution_segment(
    sol: *const DpflSolution,
    index: usize,
    out: *mut DpflSegment,
) -> DpflStatus {
    guard(|| {
        let sol = sol.as_ref().ok_or_else(|| null("sol"))?;
        let seg = sol
            .inner
            .segments
            .get(index)
            .ok_or_else(|| Failure(DpflStatus::OutOfRange, format!("no segment {index}")))?;
        let (rule, lo, hi) = match seg.rule {
            SigmaRule::Fixed { sigma } => (DpflRule::Fixed, sigma, sigma),
            SigmaRule::Curve => (DpflRule::Curve, f64::NAN, f64::NAN),
            SigmaRule::Interval { lo, hi } => (DpflRule::Interval, lo, hi),
        };
        write_out(
            out,
            DpflSegment {
                t_start: seg.t_start,
                t_end: seg.t_end,
                rule,
                sigma_lo: lo,
                sigma_hi: hi,
            },
            "out",
        )
    })
}

/// Admissible σ range at round `T`.
#[no_mangle]
pub unsafe extern "C" fn dpfl_solution_sigma_bounds(
    sol: *const DpflSolution,
    rounds: u32,
    lo: *mut f64,
    hi: *mut f64,
) -> DpflStatus {
    guard(|| {
        let sol = sol.as_ref().ok_or_else(|| null("sol"))?;
        if lo.is_null() || hi.is_null() {
            return Err(null("lo/hi"));
        }
        let (l, h) = sol.inner.sigma_bounds(rounds).ok_or_else(|| {
            Failure(
                DpflStatus::OutOfRange,
                format!("T = {rounds} outside [1, {}]", sol.inner.t_max),
            )
        })?;
        lo.write(l);
        hi.write(h);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn dpfl_solution_free(sol: *mut DpflSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Builds a simulation from an experiment config (JSON, NUL-terminated).
/// The dataset named in the config is loaded and partitioned here.
#[no_mangle]
pub unsafe extern "C" fn dpfl_simulation_new(
    config_json: *const c_char,
    out: *mut *mut DpflSimulation,
) -> DpflStatus {
    guard(|| {
        if config_json.is_null() {
            return Err(null("config_json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|e| invalid(format!("config is not UTF-8: {e}")))?;
        let config = ExperimentConfig::from_json(text)?;
        let data = config.bundle()?;
        out.write(Box::into_raw(Box::new(DpflSimulation {
            config,
            data,
            last: None,
        })));
        Ok(())
    })
}

/// Runs DP-FedSGD once per seed and keeps the averaged trace. With `n == 0`
/// the seeds from the config are used.
#[no_mangle]
pub unsafe extern "C" fn dpfl_simulation_run(
    sim: *mut DpflSimulation,
    seeds: *const u64,
    n: usize,
) -> DpflStatus {
    guard(|| {
        let sim = sim.as_mut().ok_or_else(|| null("sim"))?;
        let seeds = match slice_in(seeds, n, "seeds")? {
            [] => sim.config.seeds.clone(),
            s => s.to_vec(),
        };
        sim.last = Some(multi_seed_run(&sim.config.fed, &sim.data, &seeds)?);
        Ok(())
    })
}

/// Number of rounds in the last averaged trace; 0 before the first run.
#[no_mangle]
pub unsafe extern "C" fn dpfl_simulation_rounds(sim: *const DpflSimulation) -> usize {
    sim.as_ref()
        .and_then(|s| s.last.as_ref())
        .map_or(0, |t| t.mean_loss.len())
}

/// Copies the averaged per-round test loss into `buf`, which must hold at
/// least [`dpfl_simulation_rounds`] values.
#[no_mangle]
pub unsafe extern "C" fn dpfl_simulation_trace(
    sim: *const DpflSimulation,
    buf: *mut f64,
    len: usize,
) -> DpflStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or_else(|| null("sim"))?;
        let trace = sim
            .last
            .as_ref()
            .ok_or_else(|| Failure(DpflStatus::Config, "simulation has not been run".into()))?;
        let loss = &trace.mean_loss;
        if len < loss.len() {
            return Err(Failure(
                DpflStatus::OutOfRange,
                format!("buffer holds {len} values, trace has {}", loss.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        std::slice::from_raw_parts_mut(buf, loss.len()).copy_from_slice(loss);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn dpfl_simulation_free(sim: *mut DpflSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

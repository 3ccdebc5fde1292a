use std::ffi::{CStr, CString};
use std::ptr;

use dpfl::*;

fn last_error() -> Option<String> {
    let p = dpfl_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(dpfl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn scalars_match_closed_forms() {
    let mut out = 0.0;
    unsafe {
        assert_eq!(
            dpfl_privacy_leakage(100, 0.5, 0.25, 1.0, 2.0, 1e-5, 16, &mut out),
            DpflStatus::Ok
        );
        let want = 2.0 * (0.25f64 * 100.0 * (1e5f64).ln()).sqrt() / (4.0 * 0.5);
        assert!((out - want).abs() < 1e-12 * want);

        assert_eq!(
            dpfl_utility_f1(10, 0.2, 0.5, 25.0, 20, &mut out),
            DpflStatus::Ok
        );
        assert!((out - (0.1 + 25.0 * 0.04 / 10.0)).abs() < 1e-15);

        assert_eq!(dpfl_privacy_f2(100, 0.5, 0.25, &mut out), DpflStatus::Ok);
        assert!((out - 10.0).abs() < 1e-12);

        assert_eq!(
            dpfl_design_sigma(0.5, 20, 25.0, 40, &mut out),
            DpflStatus::Ok
        );
        let sigma = out;
        assert!((sigma - 0.1).abs() < 1e-15);
        assert_eq!(
            dpfl_manifold_residual(40, sigma, 0.5, 25.0, 20, &mut out),
            DpflStatus::Ok
        );
        assert!(out.abs() < 1e-12);
    }
}

#[test]
fn errors_set_codes_and_messages() {
    let mut out = 0.0;
    unsafe {
        assert_eq!(
            dpfl_privacy_f2(1, 1.0, 0.0, &mut out),
            DpflStatus::InvalidArgument
        );
        assert!(last_error().unwrap().contains("q must be"));
        assert_eq!(
            dpfl_privacy_f2(1, 1.0, 1.0, ptr::null_mut()),
            DpflStatus::NullPointer
        );
        assert_eq!(
            dpfl_design_sigma(0.5, 0, 25.0, 40, &mut out),
            DpflStatus::Config
        );
        assert_eq!(
            dpfl_privacy_leakage(1, 1.0, 1.0, 1.0, 1.0, 2.0, 10, &mut out),
            DpflStatus::Config
        );

        assert_eq!(dpfl_privacy_f2(1, 1.0, 1.0, &mut out), DpflStatus::Ok);
        assert!(last_error().is_none(), "success clears the message");
    }
}

#[test]
fn classify_and_solution_segments() {
    let mut case = DpflCase::Unconstrained;
    unsafe {
        assert_eq!(
            dpfl_classify_case(1.0, 10, 25.0, 0.0, 100, &mut case),
            DpflStatus::Ok
        );
        assert_eq!(case, DpflCase::Unconstrained);
        assert_eq!(
            dpfl_classify_case(1.0, 10, 25.0, 0.01, 100, &mut case),
            DpflStatus::Ok
        );
        assert_eq!(case, DpflCase::TightSigma);

        let mut sol = ptr::null_mut();
        assert_eq!(
            dpfl_solution_new(1.0, 10, 25.0, 0.1, 100, &mut sol),
            DpflStatus::Ok
        );
        assert_eq!(dpfl_solution_case(sol, &mut case), DpflStatus::Ok);
        assert_eq!(case, DpflCase::WideSigma);
        assert_eq!(dpfl_solution_segment_count(sol), 3);

        let mut seg = DpflSegment {
            t_start: 0,
            t_end: 0,
            rule: DpflRule::Fixed,
            sigma_lo: 0.0,
            sigma_hi: 0.0,
        };
        let rules: Vec<_> = (0..3)
            .map(|i| {
                assert_eq!(dpfl_solution_segment(sol, i, &mut seg), DpflStatus::Ok);
                (seg.t_start, seg.t_end, seg.rule)
            })
            .collect();
        assert_eq!(
            rules,
            [
                (1, 39, DpflRule::Fixed),
                (40, 99, DpflRule::Curve),
                (100, 100, DpflRule::Interval)
            ]
        );
        assert_eq!(
            dpfl_solution_segment(sol, 3, &mut seg),
            DpflStatus::OutOfRange
        );

        let (mut lo, mut hi) = (0.0, 0.0);
        assert_eq!(
            dpfl_solution_sigma_bounds(sol, 50, &mut lo, &mut hi),
            DpflStatus::Ok
        );
        assert!((lo - (10.0f64 / (25.0 * 50.0)).sqrt()).abs() < 1e-15 && lo == hi);
        assert_eq!(
            dpfl_solution_sigma_bounds(sol, 101, &mut lo, &mut hi),
            DpflStatus::OutOfRange
        );
        dpfl_solution_free(sol);

        assert_eq!(
            dpfl_solution_new(2.0, 10, 25.0, 0.1, 100, &mut sol),
            DpflStatus::Config
        );
        assert_eq!(dpfl_solution_segment_count(ptr::null()), 0);
    }
}

#[test]
fn fit_k_recovers_exact_law() {
    let (q0, k0, k) = (1.0, 10usize, 25.0);
    let t: Vec<u32> = (10..=100).step_by(10).collect();
    let s: Vec<f64> = t
        .iter()
        .map(|&t| (q0 * k0 as f64 / (k * f64::from(t))).sqrt())
        .collect();
    let (mut k_out, mut r2) = (0.0, 0.0);
    unsafe {
        assert_eq!(
            dpfl_fit_k(t.as_ptr(), s.as_ptr(), t.len(), q0, k0, &mut k_out, &mut r2),
            DpflStatus::Ok
        );
        assert!((k_out - k).abs() < 1e-9 * k);
        assert!((r2 - 1.0).abs() < 1e-12);
        assert_eq!(
            dpfl_fit_k(
                t.as_ptr(),
                s.as_ptr(),
                1,
                q0,
                k0,
                &mut k_out,
                ptr::null_mut()
            ),
            DpflStatus::Config
        );
        assert_eq!(
            dpfl_fit_k(
                ptr::null(),
                s.as_ptr(),
                3,
                q0,
                k0,
                &mut k_out,
                ptr::null_mut()
            ),
            DpflStatus::NullPointer
        );
    }
}

#[test]
fn pareto_roundtrip() {
    let pts = [
        DpflObjective {
            utility: 1.0,
            privacy: 3.0,
            rounds: 1,
            sigma: 0.1,
            q: 1.0,
        },
        DpflObjective {
            utility: 2.0,
            privacy: 2.0,
            rounds: 2,
            sigma: 0.1,
            q: 1.0,
        },
        DpflObjective {
            utility: 3.0,
            privacy: 4.0,
            rounds: 3,
            sigma: 0.1,
            q: 1.0,
        },
        DpflObjective {
            utility: 2.0,
            privacy: 2.0,
            rounds: 1,
            sigma: 0.2,
            q: 1.0,
        },
        DpflObjective {
            utility: f64::NAN,
            privacy: 0.0,
            rounds: 9,
            sigma: 0.1,
            q: 1.0,
        },
    ];
    unsafe {
        let mut set = ptr::null_mut();
        assert_eq!(
            dpfl_pareto_sort(pts.as_ptr(), pts.len(), &mut set),
            DpflStatus::Ok
        );
        assert_eq!(dpfl_pareto_len(set), 2);
        let mut m = pts[0];
        assert_eq!(dpfl_pareto_get(set, 0, &mut m), DpflStatus::Ok);
        assert_eq!(m, pts[0]);
        assert_eq!(dpfl_pareto_get(set, 1, &mut m), DpflStatus::Ok);
        assert_eq!(m, pts[3], "tie keeps the smallest origin");
        assert_eq!(dpfl_pareto_get(set, 2, &mut m), DpflStatus::OutOfRange);
        dpfl_pareto_free(set);
        dpfl_pareto_free(ptr::null_mut());

        let mut empty = ptr::null_mut();
        assert_eq!(dpfl_pareto_sort(ptr::null(), 0, &mut empty), DpflStatus::Ok);
        assert_eq!(dpfl_pareto_len(empty), 0);
        dpfl_pareto_free(empty);
    }
}

const SIM_CONFIG: &str = r#"{
  "dataset": {"kind": "synthetic", "num_classes": 3, "feature_dim": 6, "n_train": 120, "n_test": 30, "seed": 1},
  "fed": {"K": 4, "E": 1, "q": 0.5, "T_max": 5, "B": 8, "eta": 0.05, "sigma": 0.01, "arch": {"kind": "logistic_regression", "feature_dim": 6, "num_classes": 3}},
  "grid": {"sigma_list": [0.01], "q_list": [0.5]},
  "theory": {"c_t": 1.0, "eff_budget": 5.0},
  "seeds": [3, 1]
}"#;

#[test]
fn simulation_handle_runs_deterministically() {
    let cfg = CString::new(SIM_CONFIG).unwrap();
    unsafe {
        let mut sim = ptr::null_mut();
        let status = dpfl_simulation_new(cfg.as_ptr(), &mut sim);
        assert_eq!(status, DpflStatus::Ok, "{:?}", last_error());
        assert_eq!(dpfl_simulation_rounds(sim), 0);
        let mut buf = vec![0.0; 5];
        assert_eq!(
            dpfl_simulation_trace(sim, buf.as_mut_ptr(), buf.len()),
            DpflStatus::Config
        );

        assert_eq!(
            dpfl_simulation_run(sim, ptr::null(), 0),
            DpflStatus::Ok,
            "{:?}",
            last_error()
        );
        assert_eq!(dpfl_simulation_rounds(sim), 5);
        assert_eq!(
            dpfl_simulation_trace(sim, buf.as_mut_ptr(), 4),
            DpflStatus::OutOfRange
        );
        assert_eq!(
            dpfl_simulation_trace(sim, buf.as_mut_ptr(), buf.len()),
            DpflStatus::Ok
        );
        assert!(buf.iter().all(|v| v.is_finite() && *v > 0.0));

        let seeds = [1u64, 3];
        let mut again = vec![0.0; 5];
        assert_eq!(
            dpfl_simulation_run(sim, seeds.as_ptr(), seeds.len()),
            DpflStatus::Ok
        );
        assert_eq!(
            dpfl_simulation_trace(sim, again.as_mut_ptr(), again.len()),
            DpflStatus::Ok
        );
        assert_eq!(buf, again, "seed order and source do not matter");
        dpfl_simulation_free(sim);
    }
}

#[test]
fn simulation_rejects_bad_config() {
    let bad = CString::new("{not json").unwrap();
    let missing = CString::new(
        r#"{"dataset": {"kind": "mnist", "train_images": "/nonexistent/a", "train_labels": "/nonexistent/b",
            "test_images": "/nonexistent/c", "test_labels": "/nonexistent/d"},
            "fed": {"K": 2, "E": 1, "q": 1.0, "T_max": 2, "B": 4, "eta": 0.1, "sigma": 0.1,
                    "arch": {"kind": "logistic_regression", "feature_dim": 784, "num_classes": 10}},
            "grid": {"sigma_list": [0.1], "q_list": [1.0]}, "theory": {"c_t": 1.0, "eff_budget": 2.0}, "seeds": [1]}"#,
    )
    .unwrap();
    unsafe {
        let mut sim = ptr::null_mut();
        assert_eq!(
            dpfl_simulation_new(bad.as_ptr(), &mut sim),
            DpflStatus::Format
        );
        assert!(sim.is_null());
        assert_eq!(
            dpfl_simulation_new(missing.as_ptr(), &mut sim),
            DpflStatus::Io,
            "{:?}",
            last_error()
        );
        assert_eq!(
            dpfl_simulation_new(ptr::null(), &mut sim),
            DpflStatus::NullPointer
        );
        assert_eq!(
            dpfl_simulation_run(ptr::null_mut(), ptr::null(), 0),
            DpflStatus::NullPointer
        );
    }
}

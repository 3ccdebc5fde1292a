//! The `dpfl` command line.
//!
//! Every command collects its artifacts in memory and writes them, plus a
//! `manifest-<command>.json`, only once the work has succeeded.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::design::{self, FittedLaw};
use crate::error::{Error, Result};
use crate::experiment::{self, ExperimentConfig};
use crate::fedsim;
use crate::objectives::ObjectiveSource;
use crate::pareto::{self, ParamPoint};
use crate::report::{self, ArtifactSet, DesignManifest, DesignedPoint};
use crate::theory;

#[derive(Debug, Parser)]
#[command(
    name = "dpfl",
    version,
    about = "DP federated learning simulator and Pareto analysis"
)]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one (sigma, q) cell for every seed and write loss traces.
    Simulate(SimulateArgs),
    /// Evaluate objectives on the whole (q, sigma, T) grid.
    Grid(GridArgs),
    /// Non-dominated subset of an objective table.
    Pareto(ParetoArgs),
    /// Analytical Pareto solutions for fixed q.
    Theory(TheoryArgs),
    /// Fit k from a Pareto set.
    Fit(FitArgs),
    /// Design sigma for deployment round counts.
    Design(DesignArgs),
    /// Overlay experimental Pareto solutions on the analytical curve.
    Report(ReportArgs),
    /// Simulation-count comparison against grid-search baselines.
    Complexity(ComplexityArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (default: the config's output_dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated seeds overriding the config.
    #[arg(long, value_delimiter = ',')]
    pub seed_list: Option<Vec<u64>>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Use (f1, f2) instead of simulation.
    #[arg(long)]
    pub theoretical: bool,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub ct: Option<f64>,
    #[arg(long)]
    pub budget: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ParetoArgs {
    /// Objective CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LawArgs {
    #[arg(long, conflicts_with = "law")]
    pub k: Option<f64>,
    /// FittedLaw JSON.
    #[arg(long)]
    pub law: Option<PathBuf>,
}

impl LawArgs {
    fn resolve(&self) -> Result<f64> {
        match (&self.k, &self.law) {
            (Some(k), _) => Ok(*k),
            (None, Some(path)) => Ok(report::read_json::<FittedLaw>(path)?.k),
            (None, None) => Err(Error::Config("give --k or --law".into())),
        }
    }
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long)]
    pub q: f64,
    #[arg(long = "K")]
    pub clients: usize,
    #[command(flatten)]
    pub law: LawArgs,
    #[arg(long)]
    pub sigma_max: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub ct: f64,
    #[arg(long)]
    pub budget: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Pareto JSON.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub q0: f64,
    #[arg(long = "K0")]
    pub k0: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long)]
    pub q: f64,
    #[arg(long = "K")]
    pub clients: usize,
    #[command(flatten)]
    pub law: LawArgs,
    /// Deployment round counts.
    #[arg(long = "T", required = true, value_delimiter = ',')]
    pub rounds: Vec<u32>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Pareto JSON.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long = "K")]
    pub clients: usize,
    #[command(flatten)]
    pub law: LawArgs,
    #[arg(long)]
    pub sigma_max: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub ct: f64,
    #[arg(long)]
    pub budget: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ComplexityArgs {
    #[arg(long)]
    pub n_sigma: usize,
    #[arg(long)]
    pub n_q: usize,
    #[arg(long = "T-r")]
    pub t_r: u32,
    /// Measured pre-experiment seconds.
    #[arg(long)]
    pub t0: Option<f64>,
    /// Pre-experiment simulations.
    #[arg(long)]
    pub pre_cells: Option<usize>,
}

/// What a successful command produced.
#[derive(Debug)]
pub struct Outcome {
    pub out_dir: Option<PathBuf>,
    pub summary: String,
    /// Grid cells that failed; the process exits nonzero when any did.
    pub failed_cells: usize,
}

fn timings(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn load_config(args: &ConfigArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(seeds) = &args.seed_list {
        cfg.seeds = seeds.clone();
    }
    cfg.validate()?;
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, out))
}

fn config_echo(cfg: &ExperimentConfig) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(cfg)?)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<Outcome> {
    let (cfg, out) = load_config(&args.common)?;
    let start = Instant::now();
    let data = cfg.bundle()?;
    let load_s = start.elapsed().as_secs_f64();
    let run = fedsim::multi_seed_run(&cfg.fed, &data, &cfg.seeds)?;
    let mut set = ArtifactSet::new(&out);
    for (seed, trace) in run.seeds.iter().zip(&run.traces) {
        let n: Vec<usize> = trace.participants.iter().map(Vec::len).collect();
        set.add(
            format!("trace_seed_{seed}.csv"),
            report::trace_csv(&trace.test_loss, &n)?,
        );
    }
    let n: Vec<usize> = run.traces[0].participants.iter().map(Vec::len).collect();
    set.add("trace_mean.csv", report::trace_csv(&run.mean_loss, &n)?);
    let total = start.elapsed().as_secs_f64();
    set.commit(
        "simulate",
        config_echo(&cfg)?,
        timings(&[("load_seconds", load_s), ("total_seconds", total)]),
    )?;
    Ok(Outcome {
        out_dir: Some(out),
        summary: format!(
            "simulated {} seeds x {} rounds, final mean loss {}",
            run.seeds.len(),
            cfg.fed.rounds,
            run.mean_loss.last().copied().unwrap_or(f64::NAN)
        ),
        failed_cells: 0,
    })
}

fn cmd_grid(args: &GridArgs) -> Result<Outcome> {
    let (mut cfg, out) = load_config(&args.common)?;
    if let Some(ct) = args.ct {
        cfg.theory.c_t = ct;
    }
    if let Some(b) = args.budget {
        cfg.theory.eff_budget = b;
    }
    if let Some(k) = args.k {
        cfg.theory.k = Some(k);
    }
    cfg.validate()?;
    let run = if args.theoretical {
        let k = cfg
            .theory
            .k
            .ok_or_else(|| Error::Config("--theoretical needs k (--k or theory.k)".into()))?;
        experiment::theoretical_grid(&cfg, k)?
    } else {
        let data = cfg.bundle()?;
        experiment::empirical_grid(&cfg, &data)?
    };
    let mut set = ArtifactSet::new(&out);
    set.add(
        "objectives.csv",
        report::objective_csv(&run.outcome.points, &run.theory)?,
    );
    for t in &run.traces {
        set.add(
            format!("trace_q{}_sigma{}.csv", t.q, t.sigma),
            report::trace_csv(&t.mean_loss, &t.participants)?,
        );
    }
    if !run.outcome.failures.is_empty() {
        set.add_json("failures.json", &run.outcome.failures)?;
    }
    set.commit(
        "grid",
        config_echo(&cfg)?,
        timings(&[("grid_seconds", run.seconds)]),
    )?;
    Ok(Outcome {
        out_dir: Some(out),
        summary: format!(
            "{} objective rows from {} cells ({} simulated, {} failed)",
            run.outcome.points.len(),
            cfg.grid.q_list.len() * cfg.grid.sigma_list.len(),
            run.cells_simulated,
            run.outcome.failures.len()
        ),
        failed_cells: run.outcome.failures.len(),
    })
}

fn cmd_pareto(args: &ParetoArgs) -> Result<Outcome> {
    let points = report::read_objective_csv(&args.input, ObjectiveSource::Empirical)?;
    let front = pareto::non_dominated_sort(&points);
    let mut set = ArtifactSet::new(&args.out);
    set.add_json("pareto.json", &report::pareto_entries(&front))?;
    set.commit(
        "pareto",
        serde_json::json!({ "input": args.input }),
        BTreeMap::new(),
    )?;
    Ok(Outcome {
        out_dir: Some(args.out.clone()),
        summary: format!("{} non-dominated of {} points", front.len(), points.len()),
        failed_cells: 0,
    })
}

fn cmd_theory(args: &TheoryArgs) -> Result<Outcome> {
    let k = args.law.resolve()?;
    let t_max = theory::design_t_max(args.budget, args.ct)?;
    let sol = theory::analytical_solutions(args.q, args.clients, k, args.sigma_max, t_max)?;
    let mut set = ArtifactSet::new(&args.out);
    set.add_json("solution.json", &sol)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in sol.rows() {
        w.serialize(r)?;
    }
    let rows = w
        .into_inner()
        .map_err(|e| Error::Format(format!("csv flush: {e}")))?;
    set.add("solution_rows.csv", rows);
    set.commit(
        "theory",
        serde_json::json!({
            "q": args.q, "K": args.clients, "k": k, "sigma_max": args.sigma_max,
            "c_t": args.ct, "eff_budget": args.budget,
        }),
        BTreeMap::new(),
    )?;
    let segments: Vec<String> = sol
        .segments
        .iter()
        .map(|s| format!("T {}..={}: {:?}", s.t_start, s.t_end, s.rule))
        .collect();
    Ok(Outcome {
        out_dir: Some(args.out.clone()),
        summary: format!(
            "case {:?}, T_max {}\n{}",
            sol.case,
            t_max,
            segments.join("\n")
        ),
        failed_cells: 0,
    })
}

fn cmd_fit(args: &FitArgs) -> Result<Outcome> {
    let entries = report::read_pareto_json(&args.input)?;
    let origins: Vec<ParamPoint> = entries.iter().map(|e| e.origin()).collect();
    let law = design::fit_k(&origins, args.q0, args.k0)?;
    let mut set = ArtifactSet::new(&args.out);
    set.add_json("law.json", &law)?;
    set.commit(
        "fit",
        serde_json::json!({ "input": args.input, "q0": args.q0, "K0": args.k0 }),
        BTreeMap::new(),
    )?;
    Ok(Outcome {
        out_dir: Some(args.out.clone()),
        summary: format!(
            "k = {} (r2 {}, {} points, {} excluded)",
            law.k, law.fit_r2, law.n_points, law.excluded
        ),
        failed_cells: 0,
    })
}

fn cmd_design(args: &DesignArgs) -> Result<Outcome> {
    let k = args.law.resolve()?;
    let points = args
        .rounds
        .iter()
        .map(|&t| {
            let sigma_r = design::design_sigma(args.q, args.clients, k, t)?;
            Ok(DesignedPoint {
                rounds: t,
                sigma_r,
                residual: theory::manifold_residual(
                    &ParamPoint::new(t, sigma_r, args.q),
                    k,
                    args.clients,
                ),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DesignManifest {
        tool_version: crate::VERSION.into(),
        k,
        q_r: args.q,
        clients: args.clients,
        points,
    };
    let mut set = ArtifactSet::new(&args.out);
    set.add_json("design.json", &manifest)?;
    set.commit("design", serde_json::to_value(&manifest)?, BTreeMap::new())?;
    let lines: Vec<String> = manifest
        .points
        .iter()
        .map(|p| format!("T_r = {}: sigma_r = {}", p.rounds, p.sigma_r))
        .collect();
    Ok(Outcome {
        out_dir: Some(args.out.clone()),
        summary: lines.join("\n"),
        failed_cells: 0,
    })
}

fn cmd_report(args: &ReportArgs) -> Result<Outcome> {
    let k = args.law.resolve()?;
    let t_max = theory::design_t_max(args.budget, args.ct)?;
    let entries = report::read_pareto_json(&args.input)?;
    let members: Vec<ParamPoint> = entries.iter().map(|e| e.origin()).collect();
    let ov = report::overlay(&members, k, args.clients, args.sigma_max, t_max)?;
    let mut set = ArtifactSet::new(&args.out);
    set.add("overlay.csv", ov.csv()?);
    set.add("overlay.svg", ov.svg().into_bytes());
    set.add_json(
        "residual.json",
        &serde_json::json!({ "median_relative_residual": ov.median_residual, "k": k, "K": args.clients }),
    )?;
    set.commit(
        "report",
        serde_json::json!({
            "input": args.input, "K": args.clients, "k": k, "sigma_max": args.sigma_max,
            "c_t": args.ct, "eff_budget": args.budget,
        }),
        BTreeMap::new(),
    )?;
    Ok(Outcome {
        out_dir: Some(args.out.clone()),
        summary: format!(
            "median |k*sigma^2*T - q*K|/(q*K) over {} experimental members: {}",
            members.len(),
            ov.median_residual
        ),
        failed_cells: 0,
    })
}

fn cmd_complexity(args: &ComplexityArgs) -> Result<Outcome> {
    let mut r = design::complexity_report(args.n_sigma, args.n_q, args.t_r, args.t0)?;
    if let Some(cells) = args.pre_cells {
        r = r.with_pre_experiment(cells);
    }
    Ok(Outcome {
        out_dir: None,
        summary: r.to_string(),
        failed_cells: 0,
    })
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Grid(a) => cmd_grid(a),
        Command::Pareto(a) => cmd_pareto(a),
        Command::Theory(a) => cmd_theory(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Design(a) => cmd_design(a),
        Command::Report(a) => cmd_report(a),
        Command::Complexity(a) => cmd_complexity(a),
    }
}

/// Runs a parsed command on a pool of `--jobs` threads.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli))
}

/// Parses `args`, runs the command and maps the result to an exit code:
/// 0 on success, 1 on error, 2 when some grid cells failed.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(64)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(o) => {
            println!("{}", o.summary);
            if let Some(dir) = &o.out_dir {
                println!("wrote {}", dir.display());
            }
            if o.failed_cells > 0 {
                eprintln!("error: {} grid cells failed", o.failed_cells);
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

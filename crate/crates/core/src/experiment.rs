//! Experiment configuration and the end-to-end grid / design workflows.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datasets::{self, Dataset, DatasetBundle};
use crate::design::{self, ComplexityReport, FittedLaw};
use crate::error::{Error, Result};
use crate::fedsim::{self, FedConfig};
use crate::objectives::{self, ObjectivePoint, ObjectiveSource, PrivacyParams, TheoryParams};
use crate::pareto::{
    self, CellEvaluator, GridOutcome, ParamPoint, ParetoSet, TheoreticalEvaluator,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic {
        num_classes: usize,
        feature_dim: usize,
        n_train: usize,
        n_test: usize,
        #[serde(default)]
        seed: u64,
    },
    /// MNIST-format IDX files.
    Mnist {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSpec::Synthetic {
                num_classes,
                feature_dim,
                n_train,
                n_test,
                seed,
            } => datasets::synth_dataset(*num_classes, *feature_dim, *n_train, *n_test, *seed),
            DatasetSpec::Mnist {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => datasets::load_mnist(train_images, train_labels, test_images, test_labels),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub sigma_list: Vec<f64>,
    pub q_list: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheorySpec {
    /// Only needed for theoretical objectives.
    #[serde(default)]
    pub k: Option<f64>,
    pub c_t: f64,
    pub eff_budget: f64,
    #[serde(default)]
    pub sigma_max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpec {
    #[serde(default = "default_accountant_c")]
    pub accountant_c: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_accountant_c() -> f64 {
    PrivacyParams::DEFAULT_C
}

fn default_delta() -> f64 {
    PrivacyParams::DEFAULT_DELTA
}

impl Default for PrivacySpec {
    fn default() -> Self {
        Self {
            accountant_c: PrivacyParams::DEFAULT_C,
            delta: PrivacyParams::DEFAULT_DELTA,
        }
    }
}

fn default_fraction() -> f64 {
    1.0
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Everything one experiment needs, read from a JSON file.
///
/// `fed.sigma` and `fed.sample_ratio` are the cell used by `simulate`; grid
/// runs override them per cell and train for `T_max = floor(eff_budget/c_t)`
/// rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Absent for purely theoretical runs.
    #[serde(default)]
    pub dataset: Option<DatasetSpec>,
    #[serde(default = "default_fraction")]
    pub subset_fraction: f64,
    #[serde(default)]
    pub partition_seed: u64,
    pub fed: FedConfig,
    pub grid: GridSpec,
    pub theory: TheorySpec,
    #[serde(default)]
    pub privacy: PrivacySpec,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.sigma_list.is_empty() || self.grid.q_list.is_empty() {
            return Err(Error::Config(
                "sigma_list and q_list must be non-empty".into(),
            ));
        }
        if let Some(s) = self
            .grid
            .sigma_list
            .iter()
            .find(|&&s| !(s >= 0.0 && s.is_finite()))
        {
            return Err(Error::Config(format!("sigma_list entry {s} must be >= 0")));
        }
        if let Some(q) = self.grid.q_list.iter().find(|&&q| !(q > 0.0 && q <= 1.0)) {
            return Err(Error::Config(format!("q_list entry {q} outside (0, 1]")));
        }
        if !(self.subset_fraction > 0.0 && self.subset_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "subset_fraction must be in (0, 1], got {}",
                self.subset_fraction
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        self.fed.validate()?;
        self.privacy_params().validate()?;
        theory_params(&self.theory, self.fed.clients, 1.0).t_max()?;
        if let Some(k) = self.theory.k {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::Config(format!("k must be positive, got {k}")));
            }
        }
        Ok(())
    }

    pub fn privacy_params(&self) -> PrivacyParams {
        PrivacyParams {
            accountant_c: self.privacy.accountant_c,
            c_clip: self.fed.c_clip,
            delta: self.privacy.delta,
            clients: self.fed.clients,
        }
    }

    pub fn t_max(&self) -> Result<u32> {
        crate::theory::design_t_max(self.theory.eff_budget, self.theory.c_t)
    }

    /// Loads the dataset and keeps `subset_fraction` of the training split.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let spec = self
            .dataset
            .as_ref()
            .ok_or_else(|| Error::Config("config has no dataset".into()))?;
        let ds = spec.load()?;
        if self.subset_fraction < 1.0 {
            ds.subsample_train(self.subset_fraction, self.partition_seed)
        } else {
            Ok(ds)
        }
    }

    /// Loaded dataset split across `fed.clients` shards.
    pub fn bundle(&self) -> Result<DatasetBundle> {
        self.load_dataset()?
            .federate(self.fed.clients, self.partition_seed)
    }
}

/// `TheoryParams` for a given `k`; `k` only affects theoretical objectives.
pub fn theory_params(spec: &TheorySpec, clients: usize, k: f64) -> TheoryParams {
    TheoryParams {
        k,
        clients,
        c_t: spec.c_t,
        eff_budget: spec.eff_budget,
    }
}

/// Averaged test-loss trace of one `(q, σ)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTrace {
    pub q: f64,
    pub sigma: f64,
    pub mean_loss: Vec<f64>,
    pub participants: Vec<usize>,
}

/// Empirical objectives: utility is the seed-averaged test loss after `T`
/// rounds, privacy is the closed-form leakage.
///
/// One cell trains `T_max` rounds once per seed; the loss after round `T`
/// is the same as that of a run stopped at `T`, so every `T ≤ T_max` is
/// read off a single trace.
pub struct EmpiricalEvaluator<'a> {
    pub base: FedConfig,
    pub data: &'a DatasetBundle,
    pub seeds: Vec<u64>,
    pub privacy: PrivacyParams,
    cells: AtomicUsize,
    runs: AtomicUsize,
    traces: Mutex<Vec<CellTrace>>,
}

impl<'a> EmpiricalEvaluator<'a> {
    pub fn new(
        base: FedConfig,
        data: &'a DatasetBundle,
        seeds: Vec<u64>,
        privacy: PrivacyParams,
    ) -> Self {
        Self {
            base,
            data,
            seeds,
            privacy,
            cells: AtomicUsize::new(0),
            runs: AtomicUsize::new(0),
            traces: Mutex::new(Vec::new()),
        }
    }

    /// Distinct configurations simulated so far.
    pub fn cells_simulated(&self) -> usize {
        self.cells.load(Ordering::Relaxed)
    }

    /// Individual seeded runs so far.
    pub fn runs(&self) -> usize {
        self.runs.load(Ordering::Relaxed)
    }

    /// Cell traces in `(q, σ)` order.
    pub fn traces(&self) -> Vec<CellTrace> {
        let mut t = self.traces.lock().expect("trace lock").clone();
        t.sort_by(|a, b| a.q.total_cmp(&b.q).then(a.sigma.total_cmp(&b.sigma)));
        t
    }

    /// Seed-averaged loss trace for `(q, σ)` over `rounds` rounds.
    pub fn simulate(&self, q: f64, sigma: f64, rounds: u32) -> Result<CellTrace> {
        let cfg = FedConfig {
            sample_ratio: q,
            sigma,
            rounds: rounds as usize,
            ..self.base.clone()
        };
        self.cells.fetch_add(1, Ordering::Relaxed);
        self.runs.fetch_add(self.seeds.len(), Ordering::Relaxed);
        let run = fedsim::multi_seed_run(&cfg, self.data, &self.seeds)?;
        let participants = run.traces[0].participants.iter().map(Vec::len).collect();
        let trace = CellTrace {
            q,
            sigma,
            mean_loss: run.mean_loss,
            participants,
        };
        self.traces.lock().expect("trace lock").push(trace.clone());
        Ok(trace)
    }

    pub fn point(&self, trace: &CellTrace, rounds: u32) -> Result<ObjectivePoint> {
        Ok(ObjectivePoint::new(
            objectives::empirical_utility(&trace.mean_loss, rounds, None)?,
            objectives::privacy_leakage(rounds, trace.sigma, trace.q, &self.privacy),
            ObjectiveSource::Empirical,
            ParamPoint::new(rounds, trace.sigma, trace.q),
        ))
    }
}

impl CellEvaluator for EmpiricalEvaluator<'_> {
    fn evaluate_cell(&self, q: f64, sigma: f64, t_max: u32) -> Result<Vec<ObjectivePoint>> {
        let trace = self.simulate(q, sigma, t_max)?;
        (1..=t_max).map(|t| self.point(&trace, t)).collect()
    }
}

/// Result of a grid run plus its bookkeeping.
#[derive(Debug, Clone)]
pub struct GridRun {
    pub outcome: GridOutcome,
    pub theory: TheoryParams,
    /// Configurations simulated (0 for theoretical objectives).
    pub cells_simulated: usize,
    pub traces: Vec<CellTrace>,
    pub seconds: f64,
}

/// Theoretical `(f1, f2)` over the configured grid; needs no dataset.
pub fn theoretical_grid(cfg: &ExperimentConfig, k: f64) -> Result<GridRun> {
    let start = Instant::now();
    let theory = theory_params(&cfg.theory, cfg.fed.clients, k);
    theory.validate()?;
    let outcome = pareto::grid_search(
        &cfg.grid.q_list,
        &cfg.grid.sigma_list,
        &theory,
        &TheoreticalEvaluator { theory },
    )?;
    Ok(GridRun {
        outcome,
        theory,
        cells_simulated: 0,
        traces: Vec::new(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Simulated objectives over the configured grid on `data`.
pub fn empirical_grid(cfg: &ExperimentConfig, data: &DatasetBundle) -> Result<GridRun> {
    let start = Instant::now();
    let theory = theory_params(&cfg.theory, cfg.fed.clients, cfg.theory.k.unwrap_or(1.0));
    let eval = EmpiricalEvaluator::new(
        FedConfig {
            clients: data.num_clients(),
            ..cfg.fed.clone()
        },
        data,
        cfg.seeds.clone(),
        PrivacyParams {
            clients: data.num_clients(),
            ..cfg.privacy_params()
        },
    );
    let outcome = pareto::grid_search(&cfg.grid.q_list, &cfg.grid.sigma_list, &theory, &eval)?;
    Ok(GridRun {
        outcome,
        theory,
        cells_simulated: eval.cells_simulated(),
        traces: eval.traces(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Pre-experiment of the design workflow and the law fitted to its front.
#[derive(Debug, Clone)]
pub struct PreExperiment {
    pub grid: GridRun,
    pub pareto: ParetoSet,
    pub law: FittedLaw,
}

/// Runs the pre-experiment: a `fraction` subset of the training data split
/// over `k0` clients, one sample ratio `q0`, the configured σ grid. The
/// empirical Pareto front is then fitted with the fixed-slope law.
pub fn pre_experiment(
    cfg: &ExperimentConfig,
    fraction: f64,
    q0: f64,
    k0: usize,
) -> Result<PreExperiment> {
    let pre_cfg = ExperimentConfig {
        subset_fraction: fraction,
        fed: FedConfig {
            clients: k0,
            sample_ratio: q0,
            ..cfg.fed.clone()
        },
        grid: GridSpec {
            sigma_list: cfg.grid.sigma_list.clone(),
            q_list: vec![q0],
        },
        ..cfg.clone()
    };
    pre_cfg.validate()?;
    let data = pre_cfg.bundle()?;
    let grid = empirical_grid(&pre_cfg, &data)?;
    let front = pareto::non_dominated_sort(&grid.outcome.points);
    let law = design::fit_k(&front.origins(), q0, k0)?;
    Ok(PreExperiment {
        grid,
        pareto: front,
        law,
    })
}

/// Designed deployment points `(T_r, σ_r, q_r)`, one per `T_r`.
pub fn design_points(
    law: &FittedLaw,
    q_r: f64,
    clients: usize,
    t_r: &[u32],
) -> Result<Vec<ParamPoint>> {
    t_r.iter()
        .map(|&t| {
            Ok(ParamPoint::new(
                t,
                design::design_sigma(q_r, clients, law.k, t)?,
                q_r,
            ))
        })
        .collect()
}

/// Complexity accounting of a design run against grid-search baselines.
pub fn design_complexity(
    pre: &PreExperiment,
    n_sigma: usize,
    n_q: usize,
    t_r: u32,
) -> Result<ComplexityReport> {
    Ok(
        design::complexity_report(n_sigma, n_q, t_r, Some(pre.grid.seconds))?
            .with_pre_experiment(pre.grid.cells_simulated),
    )
}

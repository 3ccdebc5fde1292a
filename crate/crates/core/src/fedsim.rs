//! DP-FedSGD simulation.
//!
//! One round: the server samples `m = max(1, round(q·K))` clients; each runs
//! `E` local SGD steps (one sampled batch per step) from the round-start
//! global model, clips the resulting weight difference, adds Gaussian noise
//! and uploads it; the server adds the mean upload to the global model and
//! evaluates the test loss.
//!
//! Randomness comes from [`crate::rng`] streams keyed by
//! `(seed, domain, round[, client])`, so serial and parallel execution produce
//! identical traces. Uploads are summed in ascending client-id order.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datasets::{DataShard, DatasetBundle, Sample};
use crate::error::{Error, Result};
use crate::models::{self, ModelArch, ModelParams, MomentumSgd};
use crate::rng::{self, domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipMode {
    /// `Δ / max(1, ‖Δ‖² / c_clip)`
    #[default]
    SquaredNorm,
    /// `Δ / max(1, ‖Δ‖ / c_clip)`
    Norm,
}

impl ClipMode {
    /// Largest ℓ2 norm a clipped update can have.
    pub fn norm_bound(self, c_clip: f64) -> f64 {
        match self {
            ClipMode::SquaredNorm => c_clip.sqrt(),
            ClipMode::Norm => c_clip,
        }
    }
}

fn default_momentum() -> f64 {
    0.0
}

fn default_c_clip() -> f64 {
    1.0
}

/// Simulation constants for one DP-FedSGD run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedConfig {
    /// Total client count `K`.
    #[serde(alias = "K")]
    pub clients: usize,
    /// Local steps per round `E`.
    #[serde(alias = "E")]
    pub local_epochs: usize,
    /// Sample ratio `q`.
    #[serde(alias = "q")]
    pub sample_ratio: f64,
    pub sigma: f64,
    /// Number of rounds `T_max`.
    #[serde(alias = "T_max")]
    pub rounds: usize,
    pub eta: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(alias = "B")]
    pub batch_size: usize,
    #[serde(default = "default_c_clip")]
    pub c_clip: f64,
    #[serde(default)]
    pub clip_mode: ClipMode,
    #[serde(default)]
    pub seed: u64,
    pub arch: ModelArch,
}

impl FedConfig {
    pub fn participants(&self) -> usize {
        participant_count(self.clients, self.sample_ratio)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.clients == 0 {
            return bad("K must be at least 1".into());
        }
        if !(self.sample_ratio > 0.0 && self.sample_ratio <= 1.0) {
            return bad(format!("q must be in (0, 1], got {}", self.sample_ratio));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be finite and >= 0, got {}", self.sigma));
        }
        if self.rounds == 0 {
            return bad("T_max must be at least 1".into());
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be finite and >= 0, got {}", self.eta));
        }
        if !(self.momentum >= 0.0 && self.momentum.is_finite()) {
            return bad(format!("momentum must be >= 0, got {}", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.c_clip > 0.0 && self.c_clip.is_finite()) {
            return bad(format!("c_clip must be > 0, got {}", self.c_clip));
        }
        self.arch.validate()
    }
}

/// `max(1, round(q·K))`, capped at `K`.
pub fn participant_count(clients: usize, q: f64) -> usize {
    ((q * clients as f64).round() as usize).clamp(1, clients.max(1))
}

/// Per-round record of a run. Every vector has one entry per round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    /// Test loss of the global model after each round's aggregation.
    pub test_loss: Vec<f64>,
    /// Participating client ids, ascending.
    pub participants: Vec<Vec<usize>>,
    /// SHA-256 of the global weights (little-endian f64) after each round.
    pub snapshot_digests: Vec<String>,
    /// Largest pre-noise ℓ2 norm among the round's clipped uploads.
    pub max_clipped_norm: Vec<f64>,
}

impl RoundTrace {
    pub fn rounds(&self) -> usize {
        self.test_loss.len()
    }
}

/// Distinct client ids drawn uniformly without replacement, ascending.
pub fn sample_clients<R: Rng + ?Sized>(clients: usize, q: f64, rng: &mut R) -> Vec<usize> {
    let m = participant_count(clients, q);
    let mut ids = index::sample(rng, clients, m).into_vec();
    ids.sort_unstable();
    ids
}

/// Runs `E` local steps from `global` and returns the summed applied steps,
/// i.e. `w^{t,E} - w^{t,0}` accumulated step by step.
///
/// Each step draws `min(B, |shard|)` distinct samples; when the batch covers
/// the whole shard the shard is used in stored order.
pub fn client_update<R: Rng + ?Sized>(
    global: &ModelParams,
    shard: &DataShard,
    cfg: &FedConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if shard.is_empty() {
        return Err(Error::Protocol(format!(
            "client {} has an empty shard",
            shard.client_id
        )));
    }
    let n_params = global.weights.len();
    let mut local = global.clone();
    let mut delta = vec![0.0; n_params];
    let mut step = vec![0.0; n_params];
    let mut opt = MomentumSgd::new(cfg.eta, cfg.momentum, n_params);
    let full_batch = cfg.batch_size >= shard.len();
    for _ in 0..cfg.local_epochs {
        let (_, grad) = if full_batch {
            models::loss_and_grad(&local, &shard.samples)?
        } else {
            let batch: Vec<&Sample> = index::sample(rng, shard.len(), cfg.batch_size)
                .into_iter()
                .map(|i| &shard.samples[i])
                .collect();
            models::loss_and_grad(&local, &batch)?
        };
        opt.step(&mut local.weights, &grad, &mut step);
        for (d, s) in delta.iter_mut().zip(&step) {
            *d -= s;
        }
    }
    Ok(delta)
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn clip_update(delta: &[f64], c_clip: f64, mode: ClipMode) -> Vec<f64> {
    let sq: f64 = delta.iter().map(|x| x * x).sum();
    let factor = match mode {
        ClipMode::SquaredNorm => (sq / c_clip).max(1.0),
        ClipMode::Norm => (sq.sqrt() / c_clip).max(1.0),
    };
    delta.iter().map(|x| x / factor).collect()
}

/// Adds i.i.d. `N(0, σ²)` noise per coordinate; `σ = 0` returns the input unchanged.
pub fn add_noise<R: Rng + ?Sized>(clipped: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    if sigma == 0.0 {
        return clipped.to_vec();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    clipped.iter().map(|x| x + normal.sample(rng)).collect()
}

/// One client's protected upload.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpload {
    pub client_id: usize,
    pub delta: Vec<f64>,
}

/// `w + mean(uploads)`, summing uploads in ascending client-id order.
pub fn aggregate(global: &ModelParams, uploads: &[ClientUpload]) -> Result<ModelParams> {
    if uploads.is_empty() {
        return Err(Error::Protocol("no uploads to aggregate".into()));
    }
    let n = global.weights.len();
    if let Some(u) = uploads.iter().find(|u| u.delta.len() != n) {
        return Err(Error::Shape(format!(
            "client {} uploaded {} values for {n} weights",
            u.client_id,
            u.delta.len()
        )));
    }
    let mut ordered: Vec<&ClientUpload> = uploads.iter().collect();
    ordered.sort_by_key(|u| u.client_id);
    let mut sum = ordered[0].delta.clone();
    for u in &ordered[1..] {
        for (s, d) in sum.iter_mut().zip(&u.delta) {
            *s += d;
        }
    }
    let m = ordered.len() as f64;
    Ok(ModelParams {
        arch: global.arch,
        weights: global
            .weights
            .iter()
            .zip(&sum)
            .map(|(w, s)| w + s / m)
            .collect(),
    })
}

pub fn weights_digest(params: &ModelParams) -> String {
    let mut h = Sha256::new();
    for w in &params.weights {
        h.update(w.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn check_bundle(cfg: &FedConfig, data: &DatasetBundle) -> Result<()> {
    if data.num_clients() != cfg.clients {
        return Err(Error::Config(format!(
            "dataset has {} shards but K = {}",
            data.num_clients(),
            cfg.clients
        )));
    }
    if data.feature_dim != cfg.arch.feature_dim || data.num_classes != cfg.arch.num_classes {
        return Err(Error::Shape(format!(
            "dataset is {}x{} but model expects {}x{}",
            data.feature_dim, data.num_classes, cfg.arch.feature_dim, cfg.arch.num_classes
        )));
    }
    Ok(())
}

/// Runs DP-FedSGD for `cfg.rounds` rounds and records the trace.
pub fn run_dp_fedsgd(cfg: &FedConfig, data: &DatasetBundle) -> Result<RoundTrace> {
    cfg.validate()?;
    check_bundle(cfg, data)?;
    let mut global = models::init_params(cfg.arch, cfg.seed);
    let bound = cfg.clip_mode.norm_bound(cfg.c_clip);
    let mut trace = RoundTrace {
        test_loss: Vec::with_capacity(cfg.rounds),
        participants: Vec::with_capacity(cfg.rounds),
        snapshot_digests: Vec::with_capacity(cfg.rounds),
        max_clipped_norm: Vec::with_capacity(cfg.rounds),
    };
    for round in 0..cfg.rounds as u64 {
        let mut sampler = rng::stream(cfg.seed, &[domain::CLIENT_SAMPLING, round]);
        let chosen = sample_clients(cfg.clients, cfg.sample_ratio, &mut sampler);
        let results: Vec<(ClientUpload, f64)> = chosen
            .par_iter()
            .map(|&k| {
                let mut rng = rng::stream(cfg.seed, &[domain::CLIENT_UPDATE, round, k as u64]);
                let delta = client_update(&global, &data.train_shards[k], cfg, &mut rng)?;
                let clipped = clip_update(&delta, cfg.c_clip, cfg.clip_mode);
                let norm = l2_norm(&clipped);
                debug_assert!(norm <= bound * (1.0 + 1e-12), "clip bound violated");
                let upload = ClientUpload {
                    client_id: k,
                    delta: add_noise(&clipped, cfg.sigma, &mut rng),
                };
                Ok((upload, norm))
            })
            .collect::<Result<_>>()?;
        let max_norm = results.iter().map(|r| r.1).fold(0.0, f64::max);
        let uploads: Vec<ClientUpload> = results.into_iter().map(|r| r.0).collect();
        global = aggregate(&global, &uploads)?;
        trace
            .test_loss
            .push(models::eval_test_loss(&global, &data.test_set)?);
        trace.participants.push(chosen);
        trace.snapshot_digests.push(weights_digest(&global));
        trace.max_clipped_norm.push(max_norm);
    }
    Ok(trace)
}

/// Per-seed traces of one configuration and their element-wise mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSeedTrace {
    /// Seeds in ascending order.
    pub seeds: Vec<u64>,
    pub traces: Vec<RoundTrace>,
    pub mean_loss: Vec<f64>,
}

/// Runs one simulation per seed (in parallel) and averages the test-loss
/// traces. Seeds are sorted first so the mean does not depend on their order.
pub fn multi_seed_run(
    cfg: &FedConfig,
    data: &DatasetBundle,
    seeds: &[u64],
) -> Result<MultiSeedTrace> {
    if seeds.is_empty() {
        return Err(Error::Config("seed list is empty".into()));
    }
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    let traces: Vec<RoundTrace> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = FedConfig {
                seed,
                ..cfg.clone()
            };
            run_dp_fedsgd(&cfg, data)
        })
        .collect::<Result<_>>()?;
    let mut mean_loss = vec![0.0; cfg.rounds];
    for t in &traces {
        for (m, l) in mean_loss.iter_mut().zip(&t.test_loss) {
            *m += l;
        }
    }
    let n = traces.len() as f64;
    for m in &mut mean_loss {
        *m /= n;
    }
    Ok(MultiSeedTrace {
        seeds,
        traces,
        mean_loss,
    })
}

/// Element-wise mean test loss over `seeds`.
pub fn multi_seed_trace(cfg: &FedConfig, data: &DatasetBundle, seeds: &[u64]) -> Result<Vec<f64>> {
    Ok(multi_seed_run(cfg, data, seeds)?.mean_loss)
}

//! Differentially-private federated learning (DPFL) simulation and
//! utility/privacy Pareto analysis.
//!
//! The crate is organised bottom-up:
//!
//! * [`datasets`] loads IDX (MNIST-format) files, generates synthetic blobs and
//!   partitions samples across simulated clients.
//! * [`models`] holds logistic regression and a one-hidden-layer MLP as flat
//!   parameter vectors with analytic gradients.
//! * [`fedsim`] runs DP-FedSGD: client sampling, local SGD, clipping, Gaussian
//!   noise and server averaging, all driven by derived RNG streams.
//! * [`objectives`] computes privacy leakage, utility (empirical and the
//!   simplified bound `1/T + k·σ²/(qK)`) and training efficiency.
//! * [`pareto`] has dominance, non-dominated sorting and the grid driver.
//! * [`theory`] gives closed-form Pareto solutions around the law `k·σ²·T = q·K`.
//! * [`design`] fits `k` from pre-experiment fronts and designs σ for deployment.
//! * [`experiment`], [`report`] and [`cli`] wire everything into the `dpfl` binary.

pub mod cli;
pub mod datasets;
pub mod design;
pub mod error;
pub mod experiment;
pub mod fedsim;
pub mod models;
pub mod objectives;
pub mod pareto;
pub mod report;
pub mod rng;
pub mod svg;
pub mod theory;

pub use error::{Error, Result};

/// Tool version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

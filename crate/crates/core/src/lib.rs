//! Streaming Bayesian deep tensor factorization.
//!
//! Each observed tensor entry is modelled as the output of a small Bayesian
//! MLP applied to the concatenated embeddings of its nodes. Weights carry
//! spike-and-slab priors. Entries arrive in batches; every entry updates the
//! Gaussian posteriors by assumed density filtering (moment matching through
//! derivatives of the log evidence), and after each batch an expectation
//! propagation sweep refines each weight's prior approximation.
//!
//! Module map:
//! - [`tensor`]: shapes, entries, COO files, splits, batching, synthetic data
//! - [`bnn`]: forward pass, back-propagation, output moments
//! - [`posterior`]: the approximate posterior and checkpoints
//! - [`adf`]: per-entry updates and batch processing
//! - [`ep`]: spike-and-slab refinement
//! - [`eval`]: prediction, RMSE/AUC and running evaluation
//! - [`oracle`]: independent reference computations used for verification
//! - [`verify`]: packaged oracle checks

pub mod adf;
pub mod bnn;
pub mod ep;
pub mod error;
pub mod eval;
pub mod oracle;
pub mod posterior;
pub mod rng;
pub mod special;
pub mod tensor;
pub mod verify;

pub use adf::{process_batch, BatchReport, EngineConfig};
pub use bnn::{Activation, NetworkSpec, OutputMoments};
pub use error::{Error, Result};
pub use eval::{auc, predict_entry, rmse, running_eval, MetricSeries, Prediction};
pub use posterior::{GammaPosterior, Hyperparams, ModelState, WeightPosterior};
pub use tensor::{EntryBatch, ObservedEntry, TensorShape, ValueKind};

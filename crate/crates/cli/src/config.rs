//! Run configuration: a JSON document whose keys are mirrored 1:1 by
//! `train` flags. Flags win over the file.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use streamfact_core::{Activation, EngineConfig, Hyperparams, NetworkSpec, TensorShape, ValueKind};

/// Every key is optional in the file; missing keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub shape: Option<Vec<usize>>,
    pub kind: ValueKind,
    /// One entry broadcasts to every mode.
    pub ranks: Vec<usize>,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub batch_size: usize,
    pub rho0: f64,
    pub sigma0_sq: f64,
    pub a0: f64,
    pub b0: f64,
    pub seed: u64,
    pub damping: f64,
    pub refine_every: u64,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub record_timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let engine = EngineConfig::default();
        RunConfig {
            shape: None,
            kind: ValueKind::Continuous,
            ranks: vec![8],
            hidden: vec![50, 50],
            activation: Activation::Relu,
            batch_size: 256,
            rho0: 0.5,
            sigma0_sq: 1.0,
            a0: 1.0,
            b0: 1.0,
            seed: 0,
            damping: engine.damping,
            refine_every: engine.refine_every,
            train: None,
            test: None,
            checkpoint: None,
            metrics: None,
            record_timing: false,
        }
    }
}

/// Flag overlay for [`RunConfig`].
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigFlags {
    /// JSON config file; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Mode sizes, e.g. 50,50,50.
    #[arg(long, value_delimiter = ',')]
    pub shape: Option<Vec<usize>>,
    /// continuous | binary
    #[arg(long)]
    pub kind: Option<ValueKind>,
    /// Embedding rank, one value for all modes or one per mode.
    #[arg(long, alias = "rank", value_delimiter = ',')]
    pub ranks: Option<Vec<usize>>,
    /// Hidden layer widths, e.g. 50,50.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// relu | tanh
    #[arg(long)]
    pub activation: Option<Activation>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Prior slab probability.
    #[arg(long)]
    pub rho0: Option<f64>,
    /// Prior slab variance.
    #[arg(long)]
    pub sigma0_sq: Option<f64>,
    /// Gamma prior shape on the noise precision.
    #[arg(long)]
    pub a0: Option<f64>,
    /// Gamma prior rate on the noise precision.
    #[arg(long)]
    pub b0: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// EP damping in (0, 1].
    #[arg(long)]
    pub damping: Option<f64>,
    /// Run the spike-and-slab refinement every N batches.
    #[arg(long)]
    pub refine_every: Option<u64>,
    /// Training entries (COO text).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Test entries scored after every batch.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Where to write the final checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Where to write the metrics CSV.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Fill the ms column with per-batch wall time.
    #[arg(long)]
    pub record_timing: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// File (if any) then flags.
    pub fn resolve(flags: &ConfigFlags) -> Result<Self> {
        let mut cfg = match &flags.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(flags);
        Ok(cfg)
    }

    pub fn apply(&mut self, f: &ConfigFlags) {
        if let Some(v) = &f.shape {
            self.shape = Some(v.clone());
        }
        if let Some(v) = f.kind {
            self.kind = v;
        }
        if let Some(v) = &f.ranks {
            self.ranks = v.clone();
        }
        if let Some(v) = &f.hidden {
            self.hidden = v.clone();
        }
        if let Some(v) = f.activation {
            self.activation = v;
        }
        if let Some(v) = f.batch_size {
            self.batch_size = v;
        }
        if let Some(v) = f.rho0 {
            self.rho0 = v;
        }
        if let Some(v) = f.sigma0_sq {
            self.sigma0_sq = v;
        }
        if let Some(v) = f.a0 {
            self.a0 = v;
        }
        if let Some(v) = f.b0 {
            self.b0 = v;
        }
        if let Some(v) = f.seed {
            self.seed = v;
        }
        if let Some(v) = f.damping {
            self.damping = v;
        }
        if let Some(v) = f.refine_every {
            self.refine_every = v;
        }
        if let Some(v) = &f.train {
            self.train = Some(v.clone());
        }
        if let Some(v) = &f.test {
            self.test = Some(v.clone());
        }
        if let Some(v) = &f.checkpoint {
            self.checkpoint = Some(v.clone());
        }
        if let Some(v) = &f.metrics {
            self.metrics = Some(v.clone());
        }
        if f.record_timing {
            self.record_timing = true;
        }
    }

    pub fn tensor_shape(&self) -> Result<TensorShape> {
        let dims = self
            .shape
            .clone()
            .ok_or_else(|| streamfact_core::Error::Argument("no tensor shape given (--shape)".into()))?;
        Ok(TensorShape::new(dims)?)
    }

    /// Per-mode ranks after broadcasting a single value.
    pub fn mode_ranks(&self, modes: usize) -> Result<Vec<usize>> {
        match self.ranks.len() {
            1 => Ok(vec![self.ranks[0]; modes]),
            n if n == modes => Ok(self.ranks.clone()),
            n => Err(streamfact_core::Error::Argument(format!(
                "{n} ranks given for a {modes}-mode tensor"
            ))
            .into()),
        }
    }

    pub fn hyperparams(&self, modes: usize) -> Result<Hyperparams> {
        let h = Hyperparams {
            rho0: self.rho0,
            sigma0_sq: self.sigma0_sq,
            a0: self.a0,
            b0: self.b0,
            ranks: self.mode_ranks(modes)?,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn network(&self, ranks: &[usize]) -> Result<NetworkSpec> {
        if !self.activation.is_user_facing() {
            return Err(streamfact_core::Error::Argument("activation must be relu or tanh".into()).into());
        }
        Ok(NetworkSpec::for_ranks(ranks, &self.hidden, self.activation)?)
    }

    pub fn engine(&self) -> Result<EngineConfig> {
        let e = EngineConfig { damping: self.damping, refine_every: self.refine_every, ..EngineConfig::default() };
        e.validate()?;
        Ok(e)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_documented_setup() {
        let c = RunConfig::default();
        assert_eq!(c.ranks, vec![8]);
        assert_eq!(c.hidden, vec![50, 50]);
        assert_eq!(c.batch_size, 256);
        assert_eq!(c.activation, Activation::Relu);
        assert_eq!(c.mode_ranks(3).unwrap(), vec![8, 8, 8]);
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig {
            shape: Some(vec![4, 5]),
            kind: ValueKind::Binary,
            rho0: 0.123456789012345,
            train: Some("a.coo".into()),
            ..RunConfig::default()
        };
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn flags_override_file_values() {
        let mut c = RunConfig { seed: 5, batch_size: 64, ..RunConfig::default() };
        let f = ConfigFlags { seed: Some(9), hidden: Some(vec![3]), ..ConfigFlags::default() };
        c.apply(&f);
        assert_eq!((c.seed, c.batch_size, c.hidden.clone()), (9, 64, vec![3]));
    }

    #[test]
    fn unknown_keys_and_bad_ranks_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sead": 1}"#).is_err());
        let c = RunConfig { ranks: vec![2, 3], ..RunConfig::default() };
        assert!(c.mode_ranks(3).is_err());
        assert!(RunConfig::default().tensor_shape().is_err());
    }

    #[test]
    fn invalid_hyperparameters_surface() {
        let c = RunConfig { rho0: 1.5, ..RunConfig::default() };
        assert!(c.hyperparams(2).is_err());
        let c = RunConfig { damping: 0.0, ..RunConfig::default() };
        assert!(c.engine().is_err());
    }
}

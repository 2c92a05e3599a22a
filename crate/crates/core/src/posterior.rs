//! The factorized approximate posterior and its persistence.
//!
//! Embeddings carry one Gaussian per (mode, node, rank) cell. Every network
//! weight carries a Gaussian posterior, a Bernoulli selector probability and
//! the Gaussian×Bernoulli term that stands in for its spike-and-slab prior.
//! Continuous tensors add a Gamma posterior over the noise precision.
//!
//! Embedding cells can only be changed through [`ModelState::gather_entry`]
//! followed by [`ModelState::scatter_entry`].

use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bnn::NetworkSpec;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose, RngState};
use crate::special::{logit, sigmoid};
use crate::tensor::{TensorShape, ValueKind};

pub const CHECKPOINT_FORMAT: &str = "streamfact-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    /// Prior inclusion probability of each weight.
    pub rho0: f64,
    /// Slab variance.
    pub sigma0_sq: f64,
    /// Gamma shape and rate for the noise precision.
    pub a0: f64,
    pub b0: f64,
    /// Embedding rank of each mode.
    pub ranks: Vec<usize>,
}

impl Hyperparams {
    /// Defaults: `rho0 = 0.5`, `sigma0_sq = 1`, `a0 = b0 = 1`.
    pub fn with_ranks(ranks: Vec<usize>) -> Self {
        Hyperparams { rho0: 0.5, sigma0_sq: 1.0, a0: 1.0, b0: 1.0, ranks }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho0 > 0.0 && self.rho0 < 1.0) {
            return Err(Error::arg(format!("rho0 = {} must lie strictly inside (0, 1)", self.rho0)));
        }
        for (name, v) in [("sigma0_sq", self.sigma0_sq), ("a0", self.a0), ("b0", self.b0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::arg(format!("{name} = {v} must be positive and finite")));
            }
        }
        if self.ranks.is_empty() || self.ranks.contains(&0) {
            return Err(Error::arg("every mode needs a positive rank"));
        }
        Ok(())
    }
}

/// Gaussian posterior table of one mode: `dim × rank`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeTable {
    dim: usize,
    rank: usize,
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl ModeTable {
    fn prior(dim: usize, rank: usize) -> Self {
        ModeTable { dim, rank, mean: vec![0.0; dim * rank], var: vec![1.0; dim * rank] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn node_mean(&self, node: usize) -> &[f64] {
        &self.mean[node * self.rank..(node + 1) * self.rank]
    }

    pub fn node_var(&self, node: usize) -> &[f64] {
        &self.var[node * self.rank..(node + 1) * self.rank]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingPosterior {
    modes: Vec<ModeTable>,
}

impl EmbeddingPosterior {
    pub fn modes(&self) -> &[ModeTable] {
        &self.modes
    }
}

/// Posterior and prior-approximation term of a single weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightPosterior {
    pub mean: f64,
    pub var: f64,
    /// Posterior probability that the weight is in the slab.
    pub selector: f64,
    pub term_mean: f64,
    pub term_var: f64,
    /// The term's Bernoulli parameter is `sigmoid(term_logit)`.
    pub term_logit: f64,
}

impl WeightPosterior {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.mean, self.var, self.selector, self.term_mean, self.term_var, self.term_logit]
            .iter()
            .all(|x| x.is_finite());
        if !finite || !(self.var > 0.0) || !(self.term_var > 0.0) || !(0.0..=1.0).contains(&self.selector) {
            return Err(Error::arg(format!("invalid weight posterior {self:?}")));
        }
        Ok(())
    }
}

/// All weight posteriors, stored column-wise in flat layout order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightTable {
    mean: Vec<f64>,
    var: Vec<f64>,
    selector: Vec<f64>,
    term_mean: Vec<f64>,
    term_var: Vec<f64>,
    term_logit: Vec<f64>,
}

impl WeightTable {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn get(&self, i: usize) -> WeightPosterior {
        WeightPosterior {
            mean: self.mean[i],
            var: self.var[i],
            selector: self.selector[i],
            term_mean: self.term_mean[i],
            term_var: self.term_var[i],
            term_logit: self.term_logit[i],
        }
    }

    pub fn set(&mut self, i: usize, w: WeightPosterior) -> Result<()> {
        if i >= self.len() {
            return Err(Error::Bounds(format!("weight {i} of {}", self.len())));
        }
        w.validate()?;
        self.put(i, w);
        Ok(())
    }

    pub(crate) fn put(&mut self, i: usize, w: WeightPosterior) {
        self.mean[i] = w.mean;
        self.var[i] = w.var;
        self.selector[i] = w.selector;
        self.term_mean[i] = w.term_mean;
        self.term_var[i] = w.term_var;
        self.term_logit[i] = w.term_logit;
    }

    pub fn means(&self) -> &[f64] {
        &self.mean
    }

    pub fn vars(&self) -> &[f64] {
        &self.var
    }

    pub fn selectors(&self) -> &[f64] {
        &self.selector
    }

    pub(crate) fn moments_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.mean, &mut self.var)
    }

    fn validate(&self) -> Result<()> {
        let n = self.mean.len();
        let lens = [self.var.len(), self.selector.len(), self.term_mean.len(), self.term_var.len(), self.term_logit.len()];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::arg("weight table columns differ in length"));
        }
        (0..n).try_for_each(|i| self.get(i).validate())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaPosterior {
    pub a: f64,
    pub b: f64,
}

impl GammaPosterior {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let g = GammaPosterior { a, b };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > 0.0 && self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::arg(format!("invalid Gamma posterior ({}, {})", self.a, self.b)));
        }
        Ok(())
    }

    /// Posterior mean of the precision, `a / b`.
    pub fn mean(&self) -> f64 {
        self.a / self.b
    }

    /// Plug-in noise variance `b / a`.
    pub fn noise_var(&self) -> f64 {
        self.b / self.a
    }
}

/// Running counters of guarded numerical events.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    pub variance_clamps: u64,
    pub skipped_entries: u64,
    pub refine_skips: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelState {
    shape: TensorShape,
    kind: ValueKind,
    network: NetworkSpec,
    hyper: Hyperparams,
    embeddings: EmbeddingPosterior,
    pub(crate) weights: WeightTable,
    pub(crate) gamma: Option<GammaPosterior>,
    pub(crate) entries_seen: u64,
    pub(crate) batches_seen: u64,
    rng: RngState,
    pub(crate) diagnostics: Diagnostics,
}

/// Which embedding cells one entry reads, for writing them back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Locator {
    index: Vec<usize>,
    ranks: Vec<usize>,
}

impl Locator {
    pub fn index(&self) -> &[usize] {
        &self.index
    }

    /// Number of embedding cells covered, `Σ_k r_k`.
    pub fn cell_count(&self) -> usize {
        self.ranks.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatheredInput {
    pub means: Vec<f64>,
    pub vars: Vec<f64>,
    pub locator: Locator,
}

/// Standard normal restricted to `[-bound, bound]`, by rejection.
fn truncated_standard_normal(rng: &mut ChaCha8Rng, bound: f64) -> f64 {
    if bound >= 1.0 {
        loop {
            let x: f64 = rng.sample(StandardNormal);
            if x.abs() <= bound {
                return x;
            }
        }
    }
    // Uniform proposal: accept with probability exp(-x²/2) >= exp(-1/2).
    loop {
        let x = rng.random_range(-bound..=bound);
        if rng.random::<f64>() <= (-0.5 * x * x).exp() {
            return x;
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc<S> {
    format: String,
    version: u32,
    state: S,
}

impl ModelState {
    /// Fresh posterior: standard-normal embeddings, each weight's posterior
    /// equal to its prior term `N(μ⁰, σ₀²)` with `μ⁰` drawn from a standard
    /// normal truncated to `[-σ₀, σ₀]`, term logit 0, selector `ρ₀`.
    pub fn init(
        shape: TensorShape,
        kind: ValueKind,
        network: NetworkSpec,
        hyper: Hyperparams,
        seed: u64,
    ) -> Result<Self> {
        hyper.validate()?;
        if hyper.ranks.len() != shape.mode_count() {
            return Err(Error::arg(format!(
                "{} ranks given for a {}-mode tensor",
                hyper.ranks.len(),
                shape.mode_count()
            )));
        }
        if network.input_dim() != hyper.ranks.iter().sum::<usize>() {
            return Err(Error::arg("network input width must equal the sum of ranks"));
        }
        let mut rng = stream(seed, Purpose::Init);
        let n = network.weight_count();
        let sigma0 = hyper.sigma0_sq.sqrt();
        let term_mean: Vec<f64> = (0..n).map(|_| truncated_standard_normal(&mut rng, sigma0)).collect();
        let selector = sigmoid(logit(hyper.rho0) + 0.0);
        let weights = WeightTable {
            mean: term_mean.clone(),
            var: vec![hyper.sigma0_sq; n],
            selector: vec![selector; n],
            term_mean,
            term_var: vec![hyper.sigma0_sq; n],
            term_logit: vec![0.0; n],
        };
        let embeddings = EmbeddingPosterior {
            modes: shape.dims().iter().zip(&hyper.ranks).map(|(&d, &r)| ModeTable::prior(d, r)).collect(),
        };
        let gamma = match kind {
            ValueKind::Continuous => Some(GammaPosterior::new(hyper.a0, hyper.b0)?),
            ValueKind::Binary => None,
        };
        Ok(ModelState {
            shape,
            kind,
            network,
            hyper,
            embeddings,
            weights,
            gamma,
            entries_seen: 0,
            batches_seen: 0,
            rng: RngState::capture(&rng),
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn shape(&self) -> &TensorShape {
        &self.shape
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
    }

    pub fn network(&self) -> &NetworkSpec {
        &self.network
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn embeddings(&self) -> &EmbeddingPosterior {
        &self.embeddings
    }

    pub fn weights(&self) -> &WeightTable {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut WeightTable {
        &mut self.weights
    }

    pub fn gamma(&self) -> Option<GammaPosterior> {
        self.gamma
    }

    /// Replaces the noise posterior (continuous tensors only).
    pub fn set_gamma(&mut self, g: GammaPosterior) -> Result<()> {
        g.validate()?;
        if self.gamma.is_none() {
            return Err(Error::arg("binary models have no noise posterior"));
        }
        self.gamma = Some(g);
        Ok(())
    }

    pub fn entries_seen(&self) -> u64 {
        self.entries_seen
    }

    pub fn batches_seen(&self) -> u64 {
        self.batches_seen
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn rng(&self) -> ChaCha8Rng {
        self.rng.restore().expect("rng state validated on construction")
    }

    pub fn store_rng(&mut self, rng: &ChaCha8Rng) {
        self.rng = RngState::capture(rng);
    }

    /// Number of stored posterior scalars: six per weight, two per embedding
    /// cell and two for the Gamma posterior.
    pub fn stored_scalar_count(&self) -> usize {
        let cells: usize = self.embeddings.modes.iter().map(|m| m.dim * m.rank).sum();
        6 * self.weights.len() + 2 * cells + if self.gamma.is_some() { 2 } else { 0 }
    }

    /// Concatenates the embedding means and variances of the entry's nodes,
    /// mode 1 first and ascending rank within each mode.
    pub fn gather_entry(&self, index: &[usize]) -> Result<GatheredInput> {
        self.shape.check_index(index)?;
        let v0 = self.network.input_dim();
        let (mut means, mut vars) = (Vec::with_capacity(v0), Vec::with_capacity(v0));
        for (table, &node) in self.embeddings.modes.iter().zip(index) {
            means.extend_from_slice(table.node_mean(node));
            vars.extend_from_slice(table.node_var(node));
        }
        Ok(GatheredInput {
            means,
            vars,
            locator: Locator { index: index.to_vec(), ranks: self.hyper.ranks.clone() },
        })
    }

    /// Writes back the cells described by `locator`. Variances must be
    /// positive and everything finite; nothing is written otherwise.
    pub fn scatter_entry(&mut self, locator: &Locator, means: &[f64], vars: &[f64]) -> Result<()> {
        if locator.ranks != self.hyper.ranks {
            return Err(Error::arg("locator was produced for a different model layout"));
        }
        self.shape
            .check_index(&locator.index)
            .map_err(|e| Error::arg(format!("locator does not fit this state: {e}")))?;
        let v0 = self.network.input_dim();
        if means.len() != v0 || vars.len() != v0 {
            return Err(Error::arg(format!("expected {v0} means and variances")));
        }
        if means.iter().any(|m| !m.is_finite()) || vars.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::arg("scattered means must be finite and variances positive"));
        }
        let mut off = 0;
        for (table, &node) in self.embeddings.modes.iter_mut().zip(&locator.index) {
            let r = table.rank;
            let cells = node * r..(node + 1) * r;
            table.mean[cells.clone()].copy_from_slice(&means[off..off + r]);
            table.var[cells].copy_from_slice(&vars[off..off + r]);
            off += r;
        }
        Ok(())
    }

    /// Checks every structural and numerical invariant.
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.hyper.ranks.len() != self.shape.mode_count()
            || self.network.input_dim() != self.hyper.ranks.iter().sum::<usize>()
        {
            return Err(Error::arg("ranks, shape and network disagree"));
        }
        if self.embeddings.modes.len() != self.shape.mode_count() {
            return Err(Error::arg("one embedding table per mode expected"));
        }
        for ((table, &d), &r) in self.embeddings.modes.iter().zip(self.shape.dims()).zip(&self.hyper.ranks) {
            if table.dim != d || table.rank != r || table.mean.len() != d * r || table.var.len() != d * r {
                return Err(Error::arg("embedding table has the wrong size"));
            }
            if table.mean.iter().any(|m| !m.is_finite()) || table.var.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::arg("embedding table holds invalid moments"));
            }
        }
        if self.weights.len() != self.network.weight_count() {
            return Err(Error::arg("weight table does not match the network"));
        }
        self.weights.validate()?;
        match (self.kind, self.gamma) {
            (ValueKind::Continuous, Some(g)) => g.validate()?,
            (ValueKind::Binary, None) => {}
            _ => return Err(Error::arg("noise posterior must exist exactly for continuous data")),
        }
        if self.rng.restore().is_none() {
            return Err(Error::arg("unreadable rng state"));
        }
        Ok(())
    }

    pub fn save_checkpoint<W: Write>(&self, mut writer: W) -> Result<()> {
        let doc = CheckpointDoc { format: CHECKPOINT_FORMAT.to_string(), version: CHECKPOINT_VERSION, state: self };
        serde_json::to_writer(&mut writer, &doc)?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    pub fn load_checkpoint<R: Read>(reader: R) -> Result<Self> {
        let doc: CheckpointDoc<ModelState> =
            serde_json::from_reader(reader).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if doc.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("not a checkpoint (format '{}')", doc.format)));
        }
        if doc.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                doc.version
            )));
        }
        doc.state.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(doc.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnn::Activation;

    fn small_state(seed: u64, kind: ValueKind) -> ModelState {
        let shape = TensorShape::new(vec![4, 3]).unwrap();
        let hyper = Hyperparams::with_ranks(vec![2, 2]);
        let net = NetworkSpec::for_ranks(&hyper.ranks, &[5], Activation::Relu).unwrap();
        ModelState::init(shape, kind, net, hyper, seed).unwrap()
    }

    #[test]
    fn init_matches_prior_settings() {
        let s = small_state(3, ValueKind::Continuous);
        let w = s.weights();
        assert!(w.vars().iter().all(|&v| v == 1.0));
        assert!(w.means().iter().all(|m| m.abs() <= 1.0));
        assert!(w.selectors().iter().all(|&p| p == 0.5));
        for i in 0..w.len() {
            let wp = w.get(i);
            assert_eq!((wp.term_var, wp.term_logit), (1.0, 0.0));
            assert_eq!(wp.mean, wp.term_mean);
        }
        assert_eq!(s.gamma(), Some(GammaPosterior { a: 1.0, b: 1.0 }));
        assert!(small_state(3, ValueKind::Binary).gamma().is_none());
        s.validate().unwrap();
    }

    #[test]
    fn truncation_respects_small_slab() {
        let shape = TensorShape::new(vec![2]).unwrap();
        let mut hyper = Hyperparams::with_ranks(vec![3]);
        hyper.sigma0_sq = 0.04;
        let net = NetworkSpec::for_ranks(&[3], &[20], Activation::Tanh).unwrap();
        let s = ModelState::init(shape, ValueKind::Binary, net, hyper, 1).unwrap();
        assert!(s.weights().means().iter().all(|m| m.abs() <= 0.2));
        assert!(s.weights().means().iter().any(|m| m.abs() > 0.1));
    }

    #[test]
    fn embeddings_start_at_the_prior_for_any_seed() {
        for seed in [0, 1, 99] {
            let s = small_state(seed, ValueKind::Binary);
            for t in s.embeddings().modes() {
                assert!(t.mean.iter().all(|&m| m == 0.0));
                assert!(t.var.iter().all(|&v| v == 1.0));
            }
        }
    }

    #[test]
    fn init_is_deterministic_in_the_seed() {
        assert_eq!(small_state(8, ValueKind::Continuous), small_state(8, ValueKind::Continuous));
        assert_ne!(small_state(8, ValueKind::Continuous), small_state(9, ValueKind::Continuous));
    }

    #[test]
    fn invalid_hyperparameters_are_rejected() {
        let shape = TensorShape::new(vec![4, 3]).unwrap();
        let net = NetworkSpec::for_ranks(&[2, 2], &[5], Activation::Relu).unwrap();
        for bad in [
            Hyperparams { rho0: 1.0, ..Hyperparams::with_ranks(vec![2, 2]) },
            Hyperparams { rho0: 0.0, ..Hyperparams::with_ranks(vec![2, 2]) },
            Hyperparams { sigma0_sq: 0.0, ..Hyperparams::with_ranks(vec![2, 2]) },
            Hyperparams { b0: -1.0, ..Hyperparams::with_ranks(vec![2, 2]) },
            Hyperparams::with_ranks(vec![2, 1]),
            Hyperparams::with_ranks(vec![4]),
        ] {
            assert!(ModelState::init(shape.clone(), ValueKind::Continuous, net.clone(), bad, 0).is_err());
        }
    }

    #[test]
    fn gather_layout_and_bounds() {
        let s = small_state(1, ValueKind::Binary);
        let g = s.gather_entry(&[0, 0]).unwrap();
        assert_eq!(g.means, vec![0.0; 4]);
        assert_eq!(g.vars, vec![1.0; 4]);
        assert_eq!(g.locator.cell_count(), 4);
        assert!(matches!(s.gather_entry(&[4, 0]), Err(Error::Bounds(_))));
        assert!(s.gather_entry(&[1]).is_err());
    }

    #[test]
    fn scatter_round_trip_touches_only_located_cells() {
        let mut s = small_state(1, ValueKind::Binary);
        let before = s.clone();
        let g = s.gather_entry(&[2, 1]).unwrap();
        s.scatter_entry(&g.locator, &g.means, &g.vars).unwrap();
        assert_eq!(s, before);

        s.scatter_entry(&g.locator, &[1.0, 2.0, 3.0, 4.0], &[0.5, 0.25, 0.125, 2.0]).unwrap();
        let back = s.gather_entry(&[2, 1]).unwrap();
        assert_eq!(back.means, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(back.vars, vec![0.5, 0.25, 0.125, 2.0]);
        // mode-0 node 2 and mode-1 node 1 changed, everything else is intact
        let t0 = &s.embeddings().modes()[0];
        for node in [0, 1, 3] {
            assert_eq!(t0.node_mean(node), before.embeddings().modes()[0].node_mean(node));
        }
        assert_eq!(s.embeddings().modes()[1].node_mean(0), &[0.0, 0.0]);
        assert_eq!(s.weights(), before.weights());
    }

    #[test]
    fn scatter_rejects_nonpositive_variance_and_foreign_locators() {
        let mut s = small_state(1, ValueKind::Binary);
        let g = s.gather_entry(&[0, 0]).unwrap();
        let before = s.clone();
        assert!(s.scatter_entry(&g.locator, &g.means, &[1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(s.scatter_entry(&g.locator, &g.means, &[1.0, -1.0, 1.0, 1.0]).is_err());
        assert!(s.scatter_entry(&g.locator, &g.means[..3], &g.vars[..3]).is_err());
        assert_eq!(s, before);

        let shape = TensorShape::new(vec![4, 3]).unwrap();
        let hyper = Hyperparams::with_ranks(vec![1, 3]);
        let net = NetworkSpec::for_ranks(&hyper.ranks, &[5], Activation::Relu).unwrap();
        let other = ModelState::init(shape, ValueKind::Binary, net, hyper, 0).unwrap();
        let foreign = other.gather_entry(&[0, 0]).unwrap();
        assert!(s.scatter_entry(&foreign.locator, &g.means, &g.vars).is_err());
    }

    #[test]
    fn stored_scalars_are_counted_exactly() {
        let s = small_state(1, ValueKind::Continuous);
        let v = s.network().weight_count();
        assert_eq!(v, 5 * 5 + 6);
        assert_eq!(s.stored_scalar_count(), 6 * v + 2 * (4 * 2 + 3 * 2) + 2);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut s = small_state(5, ValueKind::Continuous);
        let g = s.gather_entry(&[1, 2]).unwrap();
        s.scatter_entry(&g.locator, &[0.1, 1.0 / 3.0, -2e-300, 7.0], &[1e-9, 0.3, 0.7, 1.1]).unwrap();
        let mut buf = Vec::new();
        s.save_checkpoint(&mut buf).unwrap();
        let back = ModelState::load_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, s);

        let mut again = Vec::new();
        small_state(1, ValueKind::Continuous).save_checkpoint(&mut again).unwrap();
        let mut fresh = Vec::new();
        small_state(1, ValueKind::Continuous).save_checkpoint(&mut fresh).unwrap();
        assert_eq!(again, fresh);
    }

    #[test]
    fn truncated_or_mismatched_checkpoints_fail() {
        let mut buf = Vec::new();
        small_state(5, ValueKind::Binary).save_checkpoint(&mut buf).unwrap();
        let half = &buf[..buf.len() / 2];
        assert!(matches!(ModelState::load_checkpoint(half), Err(Error::Checkpoint(_))));

        let text = String::from_utf8(buf.clone()).unwrap();
        let bumped = text.replace("\"version\":1", "\"version\":2");
        assert!(matches!(ModelState::load_checkpoint(bumped.as_bytes()), Err(Error::Checkpoint(_))));

        let broken = text.replacen("\"var\":[1.0", "\"var\":[-1.0", 1);
        assert_ne!(broken, text);
        assert!(ModelState::load_checkpoint(broken.as_bytes()).is_err());
    }
}

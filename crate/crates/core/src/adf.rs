//! Per-entry assumed density filtering.
//!
//! For one entry the network is linearized at the posterior means, giving
//! output moments `(α, β)` and the gradient `g`. The log evidence `log Z` of
//! the entry under those moments is differentiated with respect to `α` and
//! `β`; the chain rule gives `∂logZ/∂μ_j = g_j ∂logZ/∂α` and
//! `∂logZ/∂v_j = g_j² ∂logZ/∂β` (the dependence of `g` on the means is
//! dropped), and each touched Gaussian is moved to
//!
//! ```text
//! μ* = μ + v ∂logZ/∂μ
//! v* = v - v² [(∂logZ/∂μ)² - 2 ∂logZ/∂v]
//! ```

use serde::{Deserialize, Serialize};

use crate::bnn::linearize;
use crate::ep::{refine_all, RefineReport};
use crate::error::{Error, Result};
use crate::posterior::{GammaPosterior, ModelState};
use crate::special::{gauss_ln_pdf, inv_mills, ln_cdf};
use crate::tensor::{EntryBatch, ObservedEntry, ValueKind};

pub const DEFAULT_VAR_FLOOR: f64 = 1e-10;

/// `log Z` of one entry and its partial derivatives in `α` and `β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvidenceResult {
    pub log_z: f64,
    pub dlogz_dalpha: f64,
    pub dlogz_dbeta: f64,
}

impl EvidenceResult {
    fn is_finite(&self) -> bool {
        self.log_z.is_finite() && self.dlogz_dalpha.is_finite() && self.dlogz_dbeta.is_finite()
    }
}

/// Probit evidence `Z = Φ((2y-1) α / sqrt(1+β))`.
pub fn evidence_binary(alpha: f64, beta: f64, y: f64) -> Result<EvidenceResult> {
    if !(beta >= 0.0) {
        return Err(Error::arg(format!("output variance {beta} is negative")));
    }
    ValueKind::Binary.check_value(y)?;
    let sign = 2.0 * y - 1.0;
    let scale = (1.0 + beta).sqrt();
    let z = sign * alpha / scale;
    let r = inv_mills(z);
    Ok(EvidenceResult {
        log_z: ln_cdf(z),
        dlogz_dalpha: sign * r / scale,
        dlogz_dbeta: -r * z / (2.0 * (1.0 + beta)),
    })
}

/// Gaussian evidence `Z = N(y | α, β + b/a)`.
pub fn evidence_continuous(alpha: f64, beta: f64, y: f64, gamma: &GammaPosterior) -> Result<EvidenceResult> {
    if !(beta >= 0.0) {
        return Err(Error::arg(format!("output variance {beta} is negative")));
    }
    let s = beta + gamma.noise_var();
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Numeric(format!("predictive variance {s} is not positive")));
    }
    let r = y - alpha;
    Ok(EvidenceResult {
        log_z: gauss_ln_pdf(y, alpha, s),
        dlogz_dalpha: r / s,
        dlogz_dbeta: -0.5 / s + r * r / (2.0 * s * s),
    })
}

/// `(a + 1/2, b + ((y - α)² + β) / 2)`.
pub fn update_tau(gamma: &GammaPosterior, y: f64, alpha: f64, beta: f64) -> Result<GammaPosterior> {
    GammaPosterior::new(gamma.a + 0.5, gamma.b + 0.5 * ((y - alpha).powi(2) + beta))
        .map_err(|e| Error::Numeric(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    /// Weight of the freshly computed EP term in natural parameters.
    pub damping: f64,
    /// Refine the prior terms after every `refine_every`-th batch.
    pub refine_every: u64,
    /// Variances are never allowed below this.
    pub var_floor: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { damping: 0.5, refine_every: 1, var_floor: DEFAULT_VAR_FLOOR }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::arg(format!("damping {} not in (0, 1]", self.damping)));
        }
        if self.refine_every == 0 {
            return Err(Error::arg("refine_every must be at least 1"));
        }
        if !(self.var_floor > 0.0 && self.var_floor.is_finite()) {
            return Err(Error::arg("variance floor must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryOutcome {
    /// `None` when the entry was skipped for numerical reasons.
    pub log_z: Option<f64>,
    pub clamped: u64,
    pub moments: Option<(f64, f64)>,
}

/// Moment-matching step for a single Gaussian given the two partials.
#[inline]
fn moment_step(mean: f64, var: f64, dmu: f64, dv: f64) -> (f64, f64) {
    (mean + var * dmu, var - var * var * (dmu * dmu - 2.0 * dv))
}

#[inline]
fn guard(var: f64, floor: f64, clamped: &mut u64) -> f64 {
    if var >= floor && var.is_finite() {
        var
    } else {
        *clamped += 1;
        floor
    }
}

fn skip(state: &mut ModelState, why: &str) -> Result<EntryOutcome> {
    log::warn!("skipping entry: {why}");
    state.diagnostics.skipped_entries += 1;
    Ok(EntryOutcome { log_z: None, clamped: 0, moments: None })
}

/// Folds one observed entry into the posterior.
///
/// Numerical failures leave the state unchanged apart from the skip counter.
/// Entries outside the shape or of the wrong kind are errors.
pub fn adf_update_entry(state: &mut ModelState, entry: &ObservedEntry, cfg: &EngineConfig) -> Result<EntryOutcome> {
    let kind = state.kind();
    kind.check_value(entry.value).map_err(|e| Error::arg(format!("entry does not fit a {kind:?} model: {e}")))?;
    let input = state.gather_entry(&entry.index)?;
    let lin = linearize(state.network(), state.weights.means(), state.weights.vars(), &input.means, &input.vars);
    let (moments, grad) = match lin {
        Ok(x) => x,
        Err(e @ Error::Numeric(_)) => return skip(state, &e.to_string()),
        Err(e) => return Err(e),
    };
    let (alpha, beta) = (moments.alpha, moments.beta);
    let ev = match (kind, state.gamma) {
        (ValueKind::Binary, _) => evidence_binary(alpha, beta, entry.value),
        (ValueKind::Continuous, Some(g)) => evidence_continuous(alpha, beta, entry.value, &g),
        (ValueKind::Continuous, None) => return Err(Error::arg("continuous model without a noise posterior")),
    };
    let ev = match ev {
        Ok(ev) if ev.is_finite() => ev,
        Ok(_) => return skip(state, "non-finite evidence"),
        Err(e) => return skip(state, &e.to_string()),
    };

    let g = grad.as_slice();
    let v_count = grad.weights().len();
    let mut clamped = 0;
    let mut new_in_mean = Vec::with_capacity(input.means.len());
    let mut new_in_var = Vec::with_capacity(input.means.len());
    for (j, (&m, &v)) in input.means.iter().zip(&input.vars).enumerate() {
        let gj = g[v_count + j];
        let (m2, v2) = moment_step(m, v, ev.dlogz_dalpha * gj, ev.dlogz_dbeta * gj * gj);
        new_in_mean.push(m2);
        new_in_var.push(guard(v2, cfg.var_floor, &mut clamped));
    }
    let new_w: Vec<(f64, f64)> = state
        .weights
        .means()
        .iter()
        .zip(state.weights.vars())
        .zip(grad.weights())
        .map(|((&m, &v), &gj)| moment_step(m, v, ev.dlogz_dalpha * gj, ev.dlogz_dbeta * gj * gj))
        .collect();
    if new_in_mean.iter().chain(new_w.iter().map(|(m, _)| m)).any(|m| !m.is_finite()) {
        return skip(state, "non-finite updated mean");
    }
    let new_gamma = match state.gamma {
        Some(gm) => match update_tau(&gm, entry.value, alpha, beta) {
            Ok(g2) => Some(g2),
            Err(e) => return skip(state, &e.to_string()),
        },
        None => None,
    };

    state.scatter_entry(&input.locator, &new_in_mean, &new_in_var)?;
    let (means, vars) = state.weights.moments_mut();
    for ((m, v), (m2, v2)) in means.iter_mut().zip(vars.iter_mut()).zip(new_w) {
        *m = m2;
        *v = guard(v2, cfg.var_floor, &mut clamped);
    }
    state.gamma = new_gamma;
    state.entries_seen += 1;
    state.diagnostics.variance_clamps += clamped;
    Ok(EntryOutcome { log_z: Some(ev.log_z), clamped, moments: Some((alpha, beta)) })
}

/// Diagnostics of one processed batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchReport {
    pub ordinal: u64,
    /// Per entry in batch order; `None` for skipped entries.
    pub log_z: Vec<Option<f64>>,
    pub clamped: u64,
    pub skipped: u64,
    /// Embedding cells read and written, counted with multiplicity.
    pub cells_touched: usize,
    /// Present when the prior terms were refined after this batch.
    pub refine: Option<RefineReport>,
}

/// Runs the entries through [`adf_update_entry`] in order and then refines
/// the spike-and-slab terms (every `refine_every` batches). Failing entries
/// are counted and skipped; the batch always completes.
pub fn process_batch(state: &mut ModelState, batch: &EntryBatch, cfg: &EngineConfig) -> Result<BatchReport> {
    cfg.validate()?;
    let cells_per_entry: usize = state.hyper().ranks.iter().sum();
    let mut report = BatchReport {
        ordinal: batch.ordinal,
        log_z: Vec::with_capacity(batch.len()),
        clamped: 0,
        skipped: 0,
        cells_touched: 0,
        refine: None,
    };
    for entry in &batch.entries {
        match adf_update_entry(state, entry, cfg) {
            Ok(out) => {
                report.log_z.push(out.log_z);
                report.clamped += out.clamped;
                if out.log_z.is_some() {
                    report.cells_touched += cells_per_entry;
                } else {
                    report.skipped += 1;
                }
            }
            Err(e) => {
                log::warn!("batch {}: rejected entry {:?}: {e}", batch.ordinal, entry.index);
                state.diagnostics.skipped_entries += 1;
                report.log_z.push(None);
                report.skipped += 1;
            }
        }
    }
    state.batches_seen += 1;
    if state.batches_seen.is_multiple_of(cfg.refine_every) {
        report.refine = Some(refine_all(state, cfg.damping, cfg.var_floor));
    }
    Ok(report)
}

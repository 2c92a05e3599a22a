//! Expectation-propagation refinement of the spike-and-slab prior terms.
//!
//! This is a reconstruction: the cycle below is standard spike-and-slab EP,
//! with damping and the negative-variance guards added as local choices.
//!
//! Each weight's exact prior `s N(w | 0, σ₀²) + (1 - s) δ(w)` with
//! `s ~ Bern(ρ₀)` is represented in the posterior by a Gaussian term
//! `N(w | μ⁰, v⁰)` and a Bernoulli term `Bern(s | sigmoid(ρ))`. After a batch
//! every term is refitted by the usual EP cycle: divide the term out of the
//! posterior to get the cavity, multiply in the exact prior to form the
//! tilted distribution, match its moments and divide the cavity back out.
//! New terms are damped in natural parameters.
//!
//! The selector posterior only ever contains the model prior and the term
//! (the likelihood does not involve `s`), so its cavity is `Bern(ρ₀)` and
//! `logit ρ_post = logit ρ₀ + ρ` throughout.

use serde::{Deserialize, Serialize};

use crate::posterior::{Hyperparams, ModelState, WeightPosterior};
use crate::special::{gauss_ln_pdf, logit, sigmoid};

/// Term logits are kept within this range so `ρ_post` stays inside (0, 1).
pub const TERM_LOGIT_CAP: f64 = 30.0;

/// Normalizer and moments of `N(w | m, v) [p N(w | 0, σ₀²) + (1 - p) δ(w)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedMoments {
    pub z: f64,
    pub mean: f64,
    pub second_moment: f64,
    /// Posterior slab responsibility `r₁`.
    pub slab_prob: f64,
    /// `ln(r₁ / r₀)`, exact even when `r₁` rounds to 0 or 1.
    pub slab_log_odds: f64,
}

pub fn tilted_moments(cavity_mean: f64, cavity_var: f64, slab_prior: f64, slab_var: f64) -> TiltedMoments {
    let ln_slab = slab_prior.ln() + gauss_ln_pdf(0.0, cavity_mean, cavity_var + slab_var);
    let ln_spike = (-slab_prior).ln_1p() + gauss_ln_pdf(0.0, cavity_mean, cavity_var);
    let top = ln_slab.max(ln_spike);
    let ln_z = top + ((ln_slab - top).exp() + (ln_spike - top).exp()).ln();
    let r1 = (ln_slab - ln_z).exp();
    let v_slab = 1.0 / (1.0 / cavity_var + 1.0 / slab_var);
    let m_slab = v_slab * cavity_mean / cavity_var;
    TiltedMoments {
        z: ln_z.exp(),
        mean: r1 * m_slab,
        second_moment: r1 * (v_slab + m_slab * m_slab),
        slab_prob: r1,
        slab_log_odds: ln_slab - ln_spike,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefineOutcome {
    Updated,
    /// The cavity variance was not positive; nothing changed.
    CavitySkipped,
    /// The damped Gaussian term had non-positive precision; the Gaussian
    /// term and posterior were kept and only the selector moved.
    GaussianKept,
}

/// One EP update of a weight's prior terms.
pub fn refine_weight(
    wp: &WeightPosterior,
    hyper: &Hyperparams,
    damping: f64,
    var_floor: f64,
) -> (WeightPosterior, RefineOutcome) {
    // Natural parameters: precision λ and precision-mean η.
    let (lam_post, eta_post) = (1.0 / wp.var, wp.mean / wp.var);
    let (lam_term, eta_term) = (1.0 / wp.term_var, wp.term_mean / wp.term_var);
    let lam_cav = lam_post - lam_term;
    if !(lam_cav > 0.0) || !lam_cav.is_finite() {
        return (*wp, RefineOutcome::CavitySkipped);
    }
    let eta_cav = eta_post - eta_term;
    let (v_cav, m_cav) = (1.0 / lam_cav, eta_cav / lam_cav);
    let prior_logit = logit(hyper.rho0);

    let t = tilted_moments(m_cav, v_cav, hyper.rho0, hyper.sigma0_sq);
    let v_new = (t.second_moment - t.mean * t.mean).max(var_floor);
    let lam_fit = 1.0 / v_new - lam_cav;
    let eta_fit = t.mean / v_new - eta_cav;
    let lam_damped = (1.0 - damping) * lam_term + damping * lam_fit;
    let eta_damped = (1.0 - damping) * eta_term + damping * eta_fit;

    let logit_fit = t.slab_log_odds - prior_logit;
    let term_logit = ((1.0 - damping) * wp.term_logit + damping * logit_fit).clamp(-TERM_LOGIT_CAP, TERM_LOGIT_CAP);
    let selector = sigmoid(prior_logit + term_logit);

    if !(lam_damped > 0.0) || !lam_damped.is_finite() || !eta_damped.is_finite() {
        let out = WeightPosterior { selector, term_logit, ..*wp };
        return (out, RefineOutcome::GaussianKept);
    }
    let lam = lam_cav + lam_damped;
    let var = (1.0 / lam).max(var_floor);
    let out = WeightPosterior {
        mean: (eta_cav + eta_damped) / lam,
        var,
        selector,
        term_mean: eta_damped / lam_damped,
        term_var: 1.0 / lam_damped,
        term_logit,
    };
    (out, RefineOutcome::Updated)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefineReport {
    pub cavity_skipped: usize,
    pub gaussian_kept: usize,
    /// Weights whose selector probability ended below 0.5.
    pub inhibited: usize,
}

/// Refines every weight once. Embeddings and the noise posterior are not
/// touched.
pub fn refine_all(state: &mut ModelState, damping: f64, var_floor: f64) -> RefineReport {
    let hyper = state.hyper().clone();
    let mut report = RefineReport::default();
    for i in 0..state.weights.len() {
        let (wp, outcome) = refine_weight(&state.weights.get(i), &hyper, damping, var_floor);
        match outcome {
            RefineOutcome::Updated => {}
            RefineOutcome::CavitySkipped => report.cavity_skipped += 1,
            RefineOutcome::GaussianKept => report.gaussian_kept += 1,
        }
        if wp.selector < 0.5 {
            report.inhibited += 1;
        }
        state.weights.put(i, wp);
    }
    state.diagnostics.refine_skips += (report.cavity_skipped + report.gaussian_kept) as u64;
    report
}

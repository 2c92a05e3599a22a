//! Packaged oracle checks: each runs the engine against an independent
//! reference over randomized cases and reports the worst discrepancy.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::adf::{adf_update_entry, evidence_binary, evidence_continuous, EngineConfig};
use crate::bnn::{backprop_gradient, forward_mean, output_moments, Activation, NetworkSpec};
use crate::ep::tilted_moments;
use crate::error::Result;
use crate::oracle::{
    conjugate_linear_update, fd_gradient, mc_output_moments, quad_tilted_moments, reference_forward,
    reference_normal_cdf, relative_error, TiltFactor,
};
use crate::posterior::{GammaPosterior, Hyperparams, ModelState, WeightPosterior};
use crate::rng::{stream, Purpose};
use crate::tensor::{ObservedEntry, TensorShape, ValueKind};

/// Outcome of one check. `measured` is the worst case seen; the check
/// passes when `measured <= limit`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub cases: usize,
    pub measured: f64,
    pub limit: f64,
    pub detail: String,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.measured <= self.limit
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: worst {:.3e} (limit {:.1e}) over {} cases{}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.limit,
            self.cases,
            if self.detail.is_empty() { String::new() } else { format!("; {}", self.detail) }
        )
    }
}

/// Case counts per check.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyPlan {
    pub gradient_nets: usize,
    pub moment_nets: usize,
    pub mc_samples: usize,
    pub evidence_points: usize,
    pub conjugate_cases: usize,
    pub ep_cases: usize,
    pub tau_entries: usize,
}

impl VerifyPlan {
    pub fn full() -> Self {
        VerifyPlan {
            gradient_nets: 100,
            moment_nets: 20,
            mc_samples: 1_000_000,
            evidence_points: 2000,
            conjugate_cases: 1000,
            ep_cases: 1000,
            tau_entries: 500,
        }
    }

    pub fn quick() -> Self {
        VerifyPlan {
            gradient_nets: 20,
            moment_nets: 4,
            mc_samples: 200_000,
            evidence_points: 400,
            conjugate_cases: 200,
            ep_cases: 200,
            tau_entries: 100,
        }
    }
}

fn random_widths(rng: &mut ChaCha8Rng, layers: usize, max_width: usize) -> Vec<usize> {
    let mut w: Vec<usize> = (0..layers).map(|_| rng.random_range(1..=max_width)).collect();
    w.push(1);
    w
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect()
}

/// Back-propagated gradients against central differences (step 1e-5) of
/// the reference interpreter, on random tanh networks with 2 or 3 weight
/// layers and widths up to 10.
pub fn check_gradient(nets: usize, seed: u64) -> Result<Check> {
    let mut rng = stream(seed, Purpose::Oracle);
    let mut worst: f64 = 0.0;
    for _ in 0..nets {
        let layers = rng.random_range(2..=3);
        let widths = random_widths(&mut rng, layers, 10);
        let spec = NetworkSpec::new(widths.clone(), Activation::Tanh)?;
        let w = normals(&mut rng, spec.weight_count());
        let x = normals(&mut rng, spec.input_dim());
        let (_, tape) = forward_mean(&spec, &w, &x)?;
        let g = backprop_gradient(&spec, &w, &x, &tape)?;
        let nw = w.len();
        let mut point = w.clone();
        point.extend_from_slice(&x);
        let fd = fd_gradient(|p| reference_forward(&widths, Activation::Tanh, &p[..nw], &p[nw..]), &point, 1e-5);
        for (a, b) in fd.iter().zip(g.as_slice()) {
            worst = worst.max(relative_error(*a, *b));
        }
    }
    Ok(Check {
        name: "gradient vs finite differences",
        cases: nets,
        measured: worst,
        limit: 1e-5,
        detail: String::new(),
    })
}

/// First-order output variance against Monte-Carlo sampling on random
/// 2-layer tanh networks with parameter variances up to 1e-2. The
/// measured value is `|β - var_mc| / max(3 se, 0.15 var_mc)`.
pub fn check_output_moments(nets: usize, samples: usize, seed: u64) -> Result<Check> {
    let mut rng = stream(seed, Purpose::Oracle);
    let mut worst: f64 = 0.0;
    let mut worst_rel: f64 = 0.0;
    for k in 0..nets {
        let widths = random_widths(&mut rng, 2, 8);
        let spec = NetworkSpec::new(widths.clone(), Activation::Tanh)?;
        let n = spec.weight_count() + spec.input_dim();
        let means = normals(&mut rng, n);
        let vars: Vec<f64> = (0..n).map(|_| rng.random_range(1e-4..1e-2)).collect();
        let nw = spec.weight_count();
        let m = output_moments(&spec, &means[..nw], &vars[..nw], &means[nw..], &vars[nw..])?;
        let mc = mc_output_moments(&widths, Activation::Tanh, &means, &vars, samples, seed.wrapping_add(k as u64))?;
        let allowed = (3.0 * mc.var_se).max(0.15 * mc.var);
        worst = worst.max((m.beta - mc.var).abs() / allowed);
        worst_rel = worst_rel.max((m.beta - mc.var).abs() / mc.var);
    }
    Ok(Check {
        name: "output variance vs Monte Carlo",
        cases: nets,
        measured: worst,
        limit: 1.0,
        detail: format!("largest relative gap {worst_rel:.3}"),
    })
}

/// Probit evidence against the reference normal CDF for `z` in [-30, 30]
/// (absolute error of `Z`) and Gaussian evidence partials against central
/// differences (relative error). Reports the larger of the two ratios to
/// their limits 1e-10 and 1e-6.
pub fn check_evidence(points: usize, seed: u64) -> Result<Check> {
    let mut rng = stream(seed, Purpose::Oracle);
    let (mut worst_z, mut worst_fd): (f64, f64) = (0.0, 0.0);
    for i in 0..points {
        let z = -30.0 + 60.0 * i as f64 / (points.max(2) - 1) as f64;
        let beta = rng.random_range(0.0..5.0);
        let y = if rng.random::<bool>() { 1.0 } else { 0.0 };
        let alpha = (2.0 * y - 1.0) * z * (1.0f64 + beta).sqrt();
        let e = evidence_binary(alpha, beta, y)?;
        let reference = reference_normal_cdf((2.0 * y - 1.0) * alpha / (1.0f64 + beta).sqrt());
        if !e.log_z.is_finite() || !e.dlogz_dalpha.is_finite() || !e.dlogz_dbeta.is_finite() {
            worst_z = f64::INFINITY;
        }
        worst_z = worst_z.max((e.log_z.exp() - reference).abs());

        let alpha = rng.random_range(-3.0..3.0);
        let beta = rng.random_range(0.01..3.0);
        let y = rng.random_range(-4.0..4.0);
        let g = GammaPosterior::new(rng.random_range(0.5..10.0), rng.random_range(0.5..10.0))?;
        let e = evidence_continuous(alpha, beta, y, &g)?;
        let fd = fd_gradient(|p| evidence_continuous(p[0], p[1], y, &g).map_or(f64::NAN, |r| r.log_z), &[alpha, beta], 1e-5);
        worst_fd = worst_fd
            .max(relative_error(fd[0], e.dlogz_dalpha))
            .max(relative_error(fd[1], e.dlogz_dbeta));
    }
    Ok(Check {
        name: "evidence vs reference CDF and differences",
        cases: points,
        measured: (worst_z / 1e-10).max(worst_fd / 1e-6),
        limit: 1.0,
        detail: format!("max |Z - Φ| {worst_z:.2e}, max partial error {worst_fd:.2e}"),
    })
}

/// A one-node, rank-1 model with the network `[1, 1]` and identity
/// activation: `α = (w x + b) / √2`. Bias and input get negligible
/// variance so the update of `w` is a scalar linear-Gaussian problem.
fn linear_probe(w: f64, vw: f64, x: f64, noise_var: f64) -> Result<ModelState> {
    let shape = TensorShape::new(vec![1])?;
    let net = NetworkSpec::new(vec![1, 1], Activation::Identity)?;
    let mut s = ModelState::init(shape, ValueKind::Continuous, net, Hyperparams::with_ranks(vec![1]), 0)?;
    let base = WeightPosterior { mean: w, var: vw, selector: 0.5, term_mean: 0.0, term_var: 1.0, term_logit: 0.0 };
    s.weights_mut().set(0, base)?;
    s.weights_mut().set(1, WeightPosterior { mean: 0.0, var: 1e-300, ..base })?;
    let g = s.gather_entry(&[0])?;
    s.scatter_entry(&g.locator, &[x], &[1e-300])?;
    s.set_gamma(GammaPosterior::new(1.0, noise_var)?)?;
    Ok(s)
}

/// ADF on the linear probe against the exact conjugate update.
pub fn check_adf_conjugate(cases: usize, seed: u64) -> Result<Check> {
    let mut rng = stream(seed, Purpose::Oracle);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let (w, vw) = (rng.random_range(-3.0..3.0), rng.random_range(0.01..5.0));
        let x = rng.random_range(-3.0..3.0);
        let y = rng.random_range(-5.0..5.0);
        let noise_var = rng.random_range(0.01..3.0);
        let mut s = linear_probe(w, vw, x, noise_var)?;
        adf_update_entry(&mut s, &ObservedEntry::new(vec![0], y), &EngineConfig::default())?;
        let (m, v) = conjugate_linear_update(w, vw, x / 2f64.sqrt(), y, noise_var);
        let got = s.weights().get(0);
        worst = worst.max((got.mean - m).abs()).max((got.var - v).abs());
    }
    Ok(Check { name: "ADF vs conjugate update", cases, measured: worst, limit: 1e-8, detail: String::new() })
}

/// Closed-form tilted moments of the spike-and-slab factor against
/// quadrature (relative error), plus the symmetric case `r₁ = √2 - 1`.
pub fn check_ep_tilted(cases: usize, seed: u64) -> Result<Check> {
    let mut rng = stream(seed, Purpose::Oracle);
    let mut worst: f64 = 0.0;
    let mut settings = vec![(0.0, 1.0, 0.5, 1.0)];
    for _ in 1..cases {
        settings.push((
            rng.random_range(-4.0..4.0),
            rng.random_range(0.005..4.0),
            rng.random_range(0.02..0.98),
            rng.random_range(0.05..5.0),
        ));
    }
    for &(m, v, p, s2) in &settings {
        let t = tilted_moments(m, v, p, s2);
        let q = quad_tilted_moments(m, v, TiltFactor::SpikeSlab { slab_prob: p, slab_var: s2 })?;
        worst = worst
            .max(relative_error(t.z, q.z))
            .max(relative_error(t.mean, q.mean))
            .max(relative_error(t.second_moment, q.second_moment));
    }
    let sym = tilted_moments(0.0, 1.0, 0.5, 1.0).slab_prob;
    let sym_err = (sym - (2f64.sqrt() - 1.0)).abs();
    Ok(Check {
        name: "EP tilted moments vs quadrature",
        cases,
        measured: worst.max(sym_err),
        limit: 1e-8,
        detail: format!("symmetric r1 = {sym:.5}"),
    })
}

/// Streams continuous entries through a small tanh model. The shape
/// parameter must equal `a₀ + n/2` exactly; every rate increment is compared
/// with `((y - α)² + β) / 2`, where `α` comes from the reference interpreter
/// and `β` from its finite-difference gradient.
pub fn check_tau_recursion(entries: usize, seed: u64) -> Result<Check> {
    let shape = TensorShape::new(vec![6, 5, 4])?;
    let hyper = Hyperparams::with_ranks(vec![2, 2, 2]);
    let net = NetworkSpec::for_ranks(&hyper.ranks, &[5, 5], Activation::Tanh)?;
    let a0 = hyper.a0;
    let mut state = ModelState::init(shape, ValueKind::Continuous, net.clone(), hyper, seed)?;
    let mut rng = stream(seed, Purpose::Oracle);
    let cfg = EngineConfig::default();
    let mut worst: f64 = 0.0;
    let mut shape_exact = true;
    for n in 1..=entries {
        let idx = vec![rng.random_range(0..6), rng.random_range(0..5), rng.random_range(0..4)];
        let y: f64 = rng.random_range(-2.0..2.0);
        let input = state.gather_entry(&idx)?;
        let nw = net.weight_count();
        let mut point = state.weights().means().to_vec();
        point.extend_from_slice(&input.means);
        let f = |p: &[f64]| reference_forward(net.widths(), net.activation(), &p[..nw], &p[nw..]);
        let alpha = f(&point);
        let g = fd_gradient(f, &point, 1e-5);
        let beta: f64 = g
            .iter()
            .zip(state.weights().vars().iter().chain(&input.vars))
            .map(|(g, v)| g * g * v)
            .sum();
        let before = state.gamma().expect("continuous model");
        adf_update_entry(&mut state, &ObservedEntry::new(idx, y), &cfg)?;
        let after = state.gamma().expect("continuous model");
        let expect = 0.5 * ((y - alpha).powi(2) + beta);
        worst = worst.max(relative_error(after.b - before.b, expect));
        shape_exact &= after.a == a0 + n as f64 / 2.0;
    }
    Ok(Check {
        name: "noise precision recursion",
        cases: entries,
        measured: if shape_exact { worst } else { f64::INFINITY },
        limit: 1e-6,
        detail: format!("shape exact: {shape_exact}"),
    })
}

/// All checks in a fixed order.
pub fn run_all(plan: &VerifyPlan, seed: u64) -> Result<Vec<Check>> {
    Ok(vec![
        check_gradient(plan.gradient_nets, seed)?,
        check_output_moments(plan.moment_nets, plan.mc_samples, seed)?,
        check_evidence(plan.evidence_points, seed)?,
        check_adf_conjugate(plan.conjugate_cases, seed)?,
        check_ep_tilted(plan.ep_cases, seed)?,
        check_tau_recursion(plan.tau_entries, seed)?,
    ])
}

//! The one-dimensional variational superquantile (CVaR) inner problem.
//!
//! For a tail mass `δ ∈ (0, 1/2]` and sample values `f₁..f_M`, the upper
//! superquantile has the variational form
//!
//! ```text
//!     φ(β) = β + (δM)⁻¹ Σᵢ max{fᵢ − β, 0}            (Upper)
//!     φ(β) = β − (δM)⁻¹ Σᵢ max{β − fᵢ, 0}            (Lower)
//! ```
//!
//! whose minimizer (Upper) / maximizer (Lower) over β recovers the mean of
//! the worst (resp. best) δ-fraction of values. [`psgd_beta`] solves the β
//! problem by projected stochastic subgradient steps on `[−B, B]` with the
//! averaged iterate as output, and [`sq_estimate`] assembles the surrogate
//! value ψ̃(θ) = φ(β̂) on an independent fresh batch, as required for the
//! estimator to be conditionally unbiased given β̂.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqgError};
use crate::problem::BilevelProblem;
use crate::sampler::GibbsSampleBatch;
use crate::seedstream::{self, role};

/// Which tail of the value distribution the superquantile measures.
///
/// `Upper` (the pessimistic surrogate) averages the worst δ-fraction of
/// upper-level values; `Lower` (the optimistic variant) averages the best
/// δ-fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tail {
    Upper,
    Lower,
}

/// Step-size schedule for the projected subgradient recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepRule {
    /// Constant step η = B/(σ√L) with uniform iterate averaging, where
    /// σ = 1 + δ⁻¹ bounds every stochastic subgradient. The classical
    /// averaged-PSGD rate O(Bσ/√L) holds for this schedule.
    ConstantAveraged,
    /// Decaying steps η_l = B/(σ√(l+1)), same averaging.
    InverseSqrt,
}

/// Configuration of the superquantile inner solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqConfig {
    /// Tail mass δ ∈ (0, 1/2].
    pub delta: f64,
    /// Subgradient iterations L.
    pub inner_iters: usize,
    /// Projection half-width B > 0: iterates stay in [−B, B].
    pub beta_bound: f64,
    /// Starting point β₀, |β₀| ≤ B.
    pub beta_init: f64,
    /// Step-size schedule.
    pub step_rule: StepRule,
    /// Which tail to estimate.
    pub tail: Tail,
}

impl SqConfig {
    /// Defaults: δ = 0.1, L = 200, B = 10, β₀ = 0, constant averaged steps.
    pub fn new(tail: Tail) -> Self {
        SqConfig {
            delta: 0.1,
            inner_iters: 200,
            beta_bound: 10.0,
            beta_init: 0.0,
            step_rule: StepRule::ConstantAveraged,
            tail,
        }
    }

    /// Subgradient magnitude bound σ = 1 + δ⁻¹.
    pub fn sigma(&self) -> f64 {
        1.0 + 1.0 / self.delta
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 0.5) {
            return Err(SqgError::config(format!(
                "delta must lie in (0, 1/2], got {}",
                self.delta
            )));
        }
        if self.inner_iters == 0 {
            return Err(SqgError::invalid("inner_iters must be ≥ 1"));
        }
        if !(self.beta_bound > 0.0) || !self.beta_bound.is_finite() {
            return Err(SqgError::config(format!(
                "beta_bound must be positive and finite, got {}",
                self.beta_bound
            )));
        }
        if !self.beta_init.is_finite() || self.beta_init.abs() > self.beta_bound {
            return Err(SqgError::config(format!(
                "beta_init must satisfy |β₀| ≤ B = {}, got {}",
                self.beta_bound, self.beta_init
            )));
        }
        Ok(())
    }
}

/// The surrogate value at one θ, with the diagnostics needed to judge it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqEstimate {
    /// ψ̃(θ) = φ(β̂) on the fresh batch.
    pub value: f64,
    /// Averaged inner iterate β̂.
    pub beta_hat: f64,
    /// Fresh samples strictly beyond β̂ (above for Upper, below for Lower).
    pub tail_hits: usize,
    /// Fresh-batch size M.
    pub m_used: usize,
}

/// Empirical variational superquantile objective φ(β) over `fvals`.
pub fn phi_value(beta: f64, fvals: &[f64], delta: f64, tail: Tail) -> Result<f64> {
    if fvals.is_empty() {
        return Err(SqgError::invalid("phi_value requires at least one sample"));
    }
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(SqgError::invalid(format!(
            "delta must lie in (0, 1/2], got {delta}"
        )));
    }
    let scale = 1.0 / (delta * fvals.len() as f64);
    let hinge: f64 = match tail {
        Tail::Upper => fvals.iter().map(|&f| (f - beta).max(0.0)).sum(),
        Tail::Lower => fvals.iter().map(|&f| (beta - f).max(0.0)).sum(),
    };
    Ok(match tail {
        Tail::Upper => beta + scale * hinge,
        Tail::Lower => beta - scale * hinge,
    })
}

/// Stochastic subgradient of the per-sample φ term, oriented for *descent*
/// in both tails (the Lower tail's ascent direction is negated so callers
/// always subtract).
///
/// Ties `f_sample = β` take the zero-indicator branch: the sample counts as
/// outside the tail. Any selection from the subdifferential is valid there;
/// the strict inequality is the deterministic choice.
pub fn phi_subgradient(beta: f64, f_sample: f64, delta: f64, tail: Tail) -> f64 {
    match tail {
        Tail::Upper => {
            let in_tail = if f_sample > beta { 1.0 } else { 0.0 };
            1.0 - in_tail / delta
        }
        Tail::Lower => {
            let in_tail = if f_sample < beta { 1.0 } else { 0.0 };
            -(1.0 - in_tail / delta)
        }
    }
}

/// Projected stochastic subgradient descent for β̂.
///
/// `sampler(theta, rng)` must return one fresh value `f(θ, X̃)` per call; it
/// receives the solver's own RNG stream (derived from `seed`) so synthetic
/// oracles and resampling oracles stay reproducible. The recursion is
///
/// ```text
///     β^{l+1} = Proj_{[−B,B]}(β^l − η_l · phi_subgradient(β^l, f_l, δ))
/// ```
///
/// and the returned β̂ is the uniform average of the post-update iterates
/// β¹..β^L. With constant steps the averaged iterate satisfies the usual
/// O(Bσ/√L) suboptimality bound; at a kink of φ the iterates hover within
/// an O(η/δ) band around the minimizer rather than landing on it exactly.
///
/// # Errors
///
/// Invalid configs and sampler failures propagate; `inner_iters = 0` is an
/// invalid-argument error.
pub fn psgd_beta<S>(theta: &[f64], mut sampler: S, config: &SqConfig, seed: u64) -> Result<f64>
where
    S: FnMut(&[f64], &mut ChaCha8Rng) -> Result<f64>,
{
    config.validate()?;
    let mut rng = seedstream::stream(seed, &[role::PSGD]);
    let b = config.beta_bound;
    let sigma = config.sigma();
    let l_total = config.inner_iters;
    let base_step = match config.step_rule {
        StepRule::ConstantAveraged => b / (sigma * (l_total as f64).sqrt()),
        StepRule::InverseSqrt => b / sigma,
    };

    let mut beta = config.beta_init;
    let mut sum = 0.0;
    for l in 0..l_total {
        let f_l = sampler(theta, &mut rng)?;
        if !f_l.is_finite() {
            return Err(SqgError::invalid(format!(
                "sampling oracle returned non-finite value {f_l} at inner iteration {l}"
            )));
        }
        let eta = match config.step_rule {
            StepRule::ConstantAveraged => base_step,
            StepRule::InverseSqrt => base_step / ((l + 1) as f64).sqrt(),
        };
        beta = (beta - eta * phi_subgradient(beta, f_l, config.delta, config.tail)).clamp(-b, b);
        sum += beta;
    }
    Ok(sum / l_total as f64)
}

/// Empirical stand-in for the β-interval half-width of the inner problem.
///
/// The theoretical bound on |β*(θ)| involves Lipschitz constants of f and a
/// Wasserstein-rate constant, none of which are observable, so this returns
/// `max(safety · maxᵢ |f(θ, Xᵢ)|, floor)` over a calibration batch — a
/// practical surrogate: β* is always a δ-quantile of the f-values, hence
/// within the empirical range, and the safety factor absorbs sampling error
/// in the range estimate. The floor keeps B positive when the batch's
/// f-values all vanish.
pub fn calibrate_beta_bound(
    theta: &[f64],
    calib_samples: &GibbsSampleBatch,
    problem: &BilevelProblem,
    safety: f64,
    floor: f64,
) -> Result<f64> {
    if calib_samples.is_empty() {
        return Err(SqgError::invalid(
            "calibrate_beta_bound requires a nonempty calibration batch",
        ));
    }
    if !(safety >= 1.0) || !safety.is_finite() {
        return Err(SqgError::invalid(format!(
            "safety factor must be finite and ≥ 1, got {safety}"
        )));
    }
    if !(floor > 0.0) || !floor.is_finite() {
        return Err(SqgError::invalid(format!(
            "floor must be positive and finite, got {floor}"
        )));
    }
    let max_abs = calib_samples
        .iter_rows()
        .map(|x| problem.f(theta, x).abs())
        .fold(0.0_f64, f64::max);
    if !max_abs.is_finite() {
        return Err(SqgError::invalid(
            "calibration batch produced a non-finite f value",
        ));
    }
    Ok((safety * max_abs).max(floor))
}

/// Assembles ψ̃(θ) = φ(β̂) on a fresh batch, with tail diagnostics.
///
/// `theta` is the evaluation point for f; it is allowed to differ from the
/// batch's sampling θ (batch reuse across nearby query points is an explicit
/// variance-reduction option of the outer loop). Emits a warning when
/// δM < 1 — the tail is then governed by less than one expected order
/// statistic — and when no sample lands in the tail at all.
pub fn sq_estimate(
    theta: &[f64],
    beta_hat: f64,
    fresh: &GibbsSampleBatch,
    delta: f64,
    tail: Tail,
    problem: &BilevelProblem,
) -> Result<SqEstimate> {
    let fvals: Vec<f64> = fresh.iter_rows().map(|x| problem.f(theta, x)).collect();
    let m_used = fvals.len();
    if (delta * m_used as f64) < 1.0 {
        log::warn!(
            "sq_estimate: δM = {:.3} < 1 (δ={delta}, M={m_used}); \
             the tail estimate rests on less than one expected sample",
            delta * m_used as f64
        );
    }
    let value = phi_value(beta_hat, &fvals, delta, tail)?;
    let tail_hits = match tail {
        Tail::Upper => fvals.iter().filter(|&&f| f > beta_hat).count(),
        Tail::Lower => fvals.iter().filter(|&&f| f < beta_hat).count(),
    };
    if tail_hits == 0 {
        log::warn!(
            "sq_estimate: no fresh sample beyond β̂ = {beta_hat:.6} \
             (δ = {delta}, M = {m_used}); δ may be too small for this batch size"
        );
    }
    Ok(SqEstimate {
        value,
        beta_hat,
        tail_hits,
        m_used,
    })
}

/// Exact discrete CVaR of an empirical distribution: the mean of the
/// top-⌈δM⌉ (Upper) or bottom-⌈δM⌉ (Lower) values. This is the closed-form
/// optimum of the variational problem when δM is an integer and brackets it
/// within one order-statistic gap otherwise; exposed for diagnostics and
/// tests that need the β-free ground truth.
pub fn exact_discrete_cvar(fvals: &[f64], delta: f64, tail: Tail) -> Result<f64> {
    if fvals.is_empty() {
        return Err(SqgError::invalid(
            "exact_discrete_cvar requires at least one sample",
        ));
    }
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(SqgError::invalid(format!(
            "delta must lie in (0, 1/2], got {delta}"
        )));
    }
    let m = fvals.len();
    let k = ((delta * m as f64).ceil() as usize).clamp(1, m);
    let mut sorted = fvals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite f value"));
    let slice = match tail {
        Tail::Upper => &sorted[m - k..],
        Tail::Lower => &sorted[..k],
    };
    Ok(slice.iter().sum::<f64>() / k as f64)
}

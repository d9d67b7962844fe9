//! Unadjusted Langevin (Euler–Maruyama) sampling of the lower-level Gibbs
//! measure `μ_θ(x) ∝ exp(−g(θ, x)/λ)`.
//!
//! The chain is the textbook update
//!
//! ```text
//!     x_{k+1} = x_k − h · ∂ₓg(θ, x_k) + √(2 λ h) · ξ_k,       ξ_k ~ N(0, I),
//! ```
//!
//! run as `n_chains` fully independent chains. Each chain owns an RNG stream
//! derived from `(seed, chain index)`, so a batch is bit-identical for a
//! fixed `(seed, config, θ)` no matter how chains are scheduled across
//! threads. Two sampling regimes are supported:
//!
//! * **strict i.i.d.** (`samples_per_chain = 1`): one chain per retained
//!   sample. This is what the outer optimizer uses — its estimator theory
//!   assumes independent samples, and on problems whose solution set is a
//!   manifold the *within*-chain angular mixing is far slower than radial
//!   convergence, so thinning a single chain would produce badly correlated
//!   draws while independent chains inherit uniform coverage from their
//!   isotropic initialization.
//! * **thinned** (`samples_per_chain > 1`): cheaper per sample; adequate for
//!   moment checks on fast-mixing targets.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqgError};
use crate::problem::BilevelProblem;
use crate::seedstream::{self, role};
use crate::vecops;

/// Hard cap on the chain state norm; beyond it the run aborts with a
/// divergence error instead of propagating overflow into downstream math.
pub const DIVERGENCE_NORM: f64 = 1e6;

#[inline]
pub(crate) fn std_normal(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

/// Chain initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LmcInit {
    /// Start every chain at the origin.
    Zero,
    /// Start each chain at `sigma · ξ` with `ξ ~ N(0, I)`, drawn from the
    /// chain's own stream. Isotropic by construction, which is what gives
    /// strict-i.i.d. batches their uniform angular coverage on rotation
    /// invariant targets.
    GaussianScale(f64),
    /// Start chain `c` at `points[c]`. Requires exactly `n_chains` points.
    Explicit(Vec<Vec<f64>>),
}

/// Configuration of one Langevin sampling pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LangevinConfig {
    /// Temperature λ > 0 of the Gibbs measure.
    pub lambda: f64,
    /// Discretization step h > 0.
    pub step_size: f64,
    /// Steps discarded at the start of every chain.
    pub burn_in: usize,
    /// Thinning interval: one sample is retained every `steps_per_sample`
    /// steps after burn-in.
    pub steps_per_sample: usize,
    /// Number of independent chains.
    pub n_chains: usize,
    /// Samples retained per chain; total batch size is
    /// `n_chains · samples_per_chain`.
    pub samples_per_chain: usize,
    /// Chain initialization.
    pub init: LmcInit,
    /// Optional smoothness estimate L̂ of `g(θ, ·)`. When given, the config
    /// enforces the stability requirement `h < 2λ/L̂`; when absent the
    /// check cannot run and validation logs a debug note instead.
    pub smoothness: Option<f64>,
}

impl LangevinConfig {
    /// A config with the crate defaults for everything but the temperature:
    /// `burn_in = 1000`, `steps_per_sample = 10`, `init = GaussianScale(1)`.
    pub fn new(lambda: f64, step_size: f64) -> Self {
        LangevinConfig {
            lambda,
            step_size,
            burn_in: 1000,
            steps_per_sample: 10,
            n_chains: 1,
            samples_per_chain: 1,
            init: LmcInit::GaussianScale(1.0),
            smoothness: None,
        }
    }

    /// Strict-i.i.d. regime: `m` chains, one retained sample each.
    pub fn strict_iid(lambda: f64, step_size: f64, burn_in: usize, m: usize) -> Self {
        LangevinConfig {
            lambda,
            step_size,
            burn_in,
            steps_per_sample: 1,
            n_chains: m,
            samples_per_chain: 1,
            init: LmcInit::GaussianScale(1.0),
            smoothness: None,
        }
    }

    /// Total retained samples `M`.
    pub fn total_samples(&self) -> usize {
        self.n_chains * self.samples_per_chain
    }

    /// Validates ranges and the `h < 2λ/L̂` stability requirement (only
    /// checkable when a smoothness estimate is supplied).
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(SqgError::config(format!(
                "lambda must be positive and finite, got {}",
                self.lambda
            )));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(SqgError::config(format!(
                "step_size must be positive and finite, got {}",
                self.step_size
            )));
        }
        if self.steps_per_sample == 0 {
            return Err(SqgError::config("steps_per_sample must be ≥ 1"));
        }
        if self.n_chains == 0 || self.samples_per_chain == 0 {
            return Err(SqgError::config(
                "n_chains and samples_per_chain must both be ≥ 1",
            ));
        }
        if let LmcInit::GaussianScale(s) = self.init {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(SqgError::config(format!(
                    "GaussianScale sigma must be finite and ≥ 0, got {s}"
                )));
            }
        }
        match self.smoothness {
            Some(l_hat) => {
                if !(l_hat > 0.0) || !l_hat.is_finite() {
                    return Err(SqgError::config(format!(
                        "smoothness estimate must be positive and finite, got {l_hat}"
                    )));
                }
                let cap = 2.0 * self.lambda / l_hat;
                if self.step_size >= cap {
                    return Err(SqgError::config(format!(
                        "step_size h={} violates h < 2λ/L̂ = {:.3e} (λ={}, L̂={}); \
                         reduce h or the smoothness estimate",
                        self.step_size, cap, self.lambda, l_hat
                    )));
                }
            }
            None => {
                log::debug!(
                    "LangevinConfig: no smoothness estimate supplied; \
                     the h < 2λ/L̂ stability check is skipped"
                );
            }
        }
        Ok(())
    }
}

/// An immutable batch of approximate Gibbs samples, with enough provenance
/// (θ, config snapshot, seed lineage) to reproduce or audit it.
#[derive(Debug, Clone)]
pub struct GibbsSampleBatch {
    samples: Vec<f64>, // row-major [n_rows × dim]
    dim: usize,
    theta: Vec<f64>,
    config: LangevinConfig,
    seed: u64,
    /// (chain index, global step index) for every retained row.
    row_origin: Vec<(u32, u32)>,
}

impl GibbsSampleBatch {
    /// Wraps externally produced samples (a replayed CSV dump, a closed-form
    /// fixture) in a batch. Rows must be nonempty, rectangular, and finite.
    /// The config snapshot records the rows as an `Explicit` single-step
    /// batch and the (chain, step) metadata is synthetic: row `i` is chain
    /// `i`, step 0.
    pub fn from_explicit_rows(theta: &[f64], rows: &[Vec<f64>]) -> Result<GibbsSampleBatch> {
        let dim = match rows.first() {
            Some(r) if !r.is_empty() => r.len(),
            _ => {
                return Err(SqgError::invalid(
                    "from_explicit_rows requires at least one nonempty row",
                ))
            }
        };
        if rows.iter().any(|r| r.len() != dim) {
            return Err(SqgError::invalid("from_explicit_rows requires rectangular rows"));
        }
        if rows.iter().any(|r| !vecops::all_finite(r)) {
            return Err(SqgError::invalid("from_explicit_rows requires finite entries"));
        }
        let mut config = LangevinConfig::new(1.0, 1.0);
        config.burn_in = 0;
        config.n_chains = rows.len();
        config.init = LmcInit::Explicit(rows.to_vec());
        Ok(GibbsSampleBatch {
            samples: rows.concat(),
            dim,
            theta: theta.to_vec(),
            config,
            seed: 0,
            row_origin: (0..rows.len()).map(|i| (i as u32, 0)).collect(),
        })
    }

    /// Number of retained samples `M`.
    pub fn len(&self) -> usize {
        self.row_origin.len()
    }

    /// True when the batch holds no samples (unreachable through
    /// [`sample_gibbs`], which validates `M ≥ 1`).
    pub fn is_empty(&self) -> bool {
        self.row_origin.is_empty()
    }

    /// Lower-level dimension d.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sample `i` as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    /// Iterator over all samples.
    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.dim)
    }

    /// The θ this batch was drawn at.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// The config the batch was drawn with.
    pub fn config(&self) -> &LangevinConfig {
        &self.config
    }

    /// Master seed and the chain-index range that consumed it.
    pub fn seed_lineage(&self) -> (u64, std::ops::Range<usize>) {
        (self.seed, 0..self.config.n_chains)
    }

    /// Componentwise sample mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for row in self.iter_rows() {
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        let n = self.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// Sample covariance matrix (denominator M − 1), row-major d×d.
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let mean = self.mean();
        let mut cov = vec![vec![0.0; self.dim]; self.dim];
        for row in self.iter_rows() {
            for i in 0..self.dim {
                let di = row[i] - mean[i];
                for j in i..self.dim {
                    cov[i][j] += di * (row[j] - mean[j]);
                }
            }
        }
        let denom = (self.len().max(2) - 1) as f64;
        for i in 0..self.dim {
            for j in i..self.dim {
                cov[i][j] /= denom;
                cov[j][i] = cov[i][j];
            }
        }
        cov
    }

    /// Writes the batch as CSV with header `chain,step,x_1,...,x_d`
    /// (the debug sample dump).
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        write!(out, "chain,step")?;
        for j in 1..=self.dim {
            write!(out, ",x_{j}")?;
        }
        writeln!(out)?;
        for (i, &(chain, step)) in self.row_origin.iter().enumerate() {
            write!(out, "{chain},{step}")?;
            for v in self.row(i) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// One Langevin step `x − h·grad + √(2λh)·noise`.
///
/// `noise` must be a standard-normal draw of the same dimension as `x`.
/// `lambda = 0` is accepted and degenerates to a plain gradient-descent
/// step (useful for deterministic sanity checks); the full sampler enforces
/// `λ > 0` through [`LangevinConfig::validate`].
///
/// # Errors
///
/// A non-finite `grad` yields [`SqgError::SamplerDivergence`] (without
/// chain/step context, which only the chain driver knows).
pub fn lmc_step(x: &[f64], grad: &[f64], h: f64, lambda: f64, noise: &[f64]) -> Result<Vec<f64>> {
    if x.len() != grad.len() || x.len() != noise.len() {
        return Err(SqgError::invalid(format!(
            "lmc_step dimension mismatch: x={}, grad={}, noise={}",
            x.len(),
            grad.len(),
            noise.len()
        )));
    }
    if !(h >= 0.0) || !(lambda >= 0.0) || !h.is_finite() || !lambda.is_finite() {
        return Err(SqgError::invalid(format!(
            "lmc_step requires finite h ≥ 0 and λ ≥ 0, got h={h}, λ={lambda}"
        )));
    }
    if !vecops::all_finite(grad) {
        return Err(SqgError::SamplerDivergence {
            chain: None,
            step: None,
            message: "non-finite gradient passed to lmc_step".to_string(),
        });
    }
    let scale = (2.0 * lambda * h).sqrt();
    Ok(x.iter()
        .zip(grad)
        .zip(noise)
        .map(|((&xi, &gi), &ni)| xi - h * gi + scale * ni)
        .collect())
}

/// Runs one chain and returns its retained samples with (chain, step) tags.
fn run_chain(
    problem: &BilevelProblem,
    theta: &[f64],
    config: &LangevinConfig,
    seed: u64,
    chain: usize,
) -> Result<(Vec<f64>, Vec<(u32, u32)>)> {
    let d = problem.lower_dim();
    let mut rng = seedstream::stream(seed, &[role::GIBBS_CHAIN, chain as u64]);

    let mut x: Vec<f64> = match &config.init {
        LmcInit::Zero => vec![0.0; d],
        LmcInit::GaussianScale(s) => (0..d).map(|_| s * std_normal(&mut rng)).collect(),
        LmcInit::Explicit(points) => points[chain].clone(),
    };
    let mut grad = vec![0.0; d];
    let h = config.step_size;
    let noise_scale = (2.0 * config.lambda * h).sqrt();

    let mut rows = Vec::with_capacity(config.samples_per_chain * d);
    let mut origin = Vec::with_capacity(config.samples_per_chain);
    let mut step: u32 = 0;

    let advance = |x: &mut Vec<f64>, grad: &mut Vec<f64>, step: &mut u32, n_steps: usize,
                       rng: &mut rand_chacha::ChaCha8Rng|
     -> Result<()> {
        for _ in 0..n_steps {
            problem.grad_x_g_into(theta, x, grad);
            let mut norm2 = 0.0;
            for i in 0..d {
                // Inlined lmc_step, kept allocation-free on the hot path;
                // the single-step composition test pins the equivalence.
                x[i] = x[i] - h * grad[i] + noise_scale * std_normal(rng);
                norm2 += x[i] * x[i];
            }
            *step += 1;
            if !norm2.is_finite() || norm2 > DIVERGENCE_NORM * DIVERGENCE_NORM {
                return Err(SqgError::SamplerDivergence {
                    chain: Some(chain),
                    step: Some(*step as usize),
                    message: if norm2.is_finite() {
                        format!("state norm {:.3e} exceeded {DIVERGENCE_NORM:.0e}", norm2.sqrt())
                    } else {
                        "state became non-finite".to_string()
                    },
                });
            }
        }
        Ok(())
    };

    advance(&mut x, &mut grad, &mut step, config.burn_in, &mut rng)?;
    for _ in 0..config.samples_per_chain {
        advance(&mut x, &mut grad, &mut step, config.steps_per_sample, &mut rng)?;
        rows.extend_from_slice(&x);
        origin.push((chain as u32, step));
    }
    Ok((rows, origin))
}

/// Draws a batch of approximate Gibbs samples at `theta`.
///
/// Chains run in parallel; output is bit-identical for fixed
/// `(seed, config, θ)` regardless of scheduling, because each chain owns the
/// stream derived from `(seed, chain)` and results are assembled in chain
/// order.
///
/// # Errors
///
/// * `Config` / `InvalidArgument` for invalid configs, θ outside the domain,
///   or mismatched `Explicit` initialization.
/// * `SamplerDivergence` identifying chain and step when any chain leaves
///   the guard region or produces non-finite state; the message suggests
///   reducing `h`.
pub fn sample_gibbs(
    problem: &BilevelProblem,
    theta: &[f64],
    config: &LangevinConfig,
    seed: u64,
) -> Result<GibbsSampleBatch> {
    config.validate()?;
    if theta.len() != problem.upper_dim() {
        return Err(SqgError::invalid(format!(
            "theta has dimension {}, problem expects {}",
            theta.len(),
            problem.upper_dim()
        )));
    }
    if !problem.domain().contains(theta, 1e-9) {
        return Err(SqgError::invalid(
            "theta lies outside the problem's upper-level domain",
        ));
    }
    if let LmcInit::Explicit(points) = &config.init {
        if points.len() != config.n_chains {
            return Err(SqgError::config(format!(
                "Explicit init supplies {} points for {} chains",
                points.len(),
                config.n_chains
            )));
        }
        if points.iter().any(|p| p.len() != problem.lower_dim()) {
            return Err(SqgError::config(format!(
                "Explicit init points must have dimension {}",
                problem.lower_dim()
            )));
        }
    }
    let per_chain: Vec<(Vec<f64>, Vec<(u32, u32)>)> = (0..config.n_chains)
        .into_par_iter()
        .map(|chain| run_chain(problem, theta, config, seed, chain))
        .collect::<Result<_>>()?;

    let d = problem.lower_dim();
    let total = config.total_samples();
    let mut samples = Vec::with_capacity(total * d);
    let mut row_origin = Vec::with_capacity(total);
    for (rows, origin) in per_chain {
        samples.extend_from_slice(&rows);
        row_origin.extend_from_slice(&origin);
    }
    Ok(GibbsSampleBatch {
        samples,
        dim: d,
        theta: theta.to_vec(),
        config: config.clone(),
        seed,
        row_origin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::UpperDomain;
    use crate::problem::{BilevelProblemBuilder, Sense};
    use approx::assert_abs_diff_eq;

    /// 1-D quadratic target g(θ, x) = ‖x‖²/2 (θ unused).
    fn quadratic_target(d: usize) -> BilevelProblem {
        let dom = UpperDomain::boxed(vec![-1.0], vec![1.0]).unwrap();
        BilevelProblemBuilder::new("gauss-target", 1, d, dom, Sense::Optimistic)
            .f(|_t, x| x[0])
            .g(|_t, x| 0.5 * x.iter().map(|v| v * v).sum::<f64>())
            .grad_x_g(|_t, x, out| out.copy_from_slice(x))
            .build(3)
            .unwrap()
    }

    #[test]
    fn lmc_step_pure_diffusion() {
        // x=0, grad=0, h=0.01, λ=0.01, noise=e₁ → √(0.0002)·e₁ ≈ 0.014142·e₁.
        let out = lmc_step(&[0.0, 0.0], &[0.0, 0.0], 0.01, 0.01, &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(out[0], 0.0002_f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(out[0], 0.014142, epsilon = 1e-6);
        assert_eq!(out[1], 0.0);
    }

    #[test]
    fn lmc_step_zero_temperature_is_gradient_descent() {
        let out = lmc_step(&[1.0], &[1.0], 0.1, 0.0, &[123.456]).unwrap();
        assert_abs_diff_eq!(out[0], 0.9, epsilon = 1e-15);
    }

    #[test]
    fn lmc_step_rejects_nonfinite_gradient() {
        let err = lmc_step(&[0.0], &[f64::NAN], 0.1, 0.1, &[0.0]).unwrap_err();
        assert!(matches!(err, SqgError::SamplerDivergence { .. }), "got {err:?}");
    }

    #[test]
    fn ar1_variance_recursion_matches_closed_form() {
        // For g(x) = x²/2 the chain is x ← (1−h)x + √(2λh)ξ, whose variance
        // recursion v ← (1−h)²v + 2λh has fixed point 2λh/(1−(1−h)²)
        // = λ/(1−h/2). Iterate the recursion directly to the fixed point.
        let (lambda, h) = (0.01, 0.001);
        let mut v = 0.0;
        for _ in 0..200_000 {
            v = (1.0 - h) * (1.0 - h) * v + 2.0 * lambda * h;
        }
        let closed = lambda / (1.0 - h / 2.0);
        assert_abs_diff_eq!(v, closed, epsilon = 1e-12);
        assert_abs_diff_eq!(closed, 0.0100050, epsilon = 5e-7);
    }

    #[test]
    fn long_run_variance_matches_ar1_stationary_value() {
        // h large enough that the discretization correction 1/(1−h/2) is
        // well outside the statistical tolerance, so the test distinguishes
        // λ/(1−h/2) from a naive λ.
        let problem = quadratic_target(1);
        let (lambda, h) = (0.01, 0.2);
        let config = LangevinConfig {
            lambda,
            step_size: h,
            burn_in: 200,
            steps_per_sample: 25,
            n_chains: 4,
            samples_per_chain: 1500,
            init: LmcInit::Zero,
            smoothness: None,
        };
        let batch = sample_gibbs(&problem, &[0.0], &config, 11).unwrap();
        let var = batch.covariance()[0][0];
        let expected = lambda / (1.0 - h / 2.0); // ≈ 0.011111
        let rel = (var - expected).abs() / expected;
        assert!(
            rel < 0.05,
            "long-run variance {var:.6} differs from AR(1) value {expected:.6} by {rel:.3}"
        );
        // The naive value λ is 10% below the AR(1) value; make sure the run
        // actually resolves the difference.
        assert!((var - lambda).abs() / lambda > 0.05, "var {var:.6} indistinguishable from λ");
    }

    #[test]
    fn single_step_composition_equals_lmc_step() {
        // burn_in=0, steps_per_sample=1, one chain, one sample, init Zero:
        // the retained sample must equal one lmc_step from 0 driven by the
        // chain's own noise stream.
        let problem = quadratic_target(3);
        let config = LangevinConfig {
            lambda: 0.05,
            step_size: 0.02,
            burn_in: 0,
            steps_per_sample: 1,
            n_chains: 1,
            samples_per_chain: 1,
            init: LmcInit::Zero,
            smoothness: None,
        };
        let seed = 99;
        let batch = sample_gibbs(&problem, &[0.0], &config, seed).unwrap();

        let mut rng = seedstream::stream(seed, &[role::GIBBS_CHAIN, 0]);
        let noise: Vec<f64> = (0..3).map(|_| std_normal(&mut rng)).collect();
        let expected = lmc_step(&[0.0; 3], &[0.0; 3], 0.02, 0.05, &noise).unwrap();
        assert_eq!(batch.row(0), expected.as_slice());
    }

    #[test]
    fn batches_are_deterministic_and_schedule_independent() {
        let problem = quadratic_target(2);
        let config = LangevinConfig {
            lambda: 0.01,
            step_size: 0.05,
            burn_in: 50,
            steps_per_sample: 5,
            n_chains: 8,
            samples_per_chain: 4,
            init: LmcInit::GaussianScale(1.0),
            smoothness: None,
        };
        let a = sample_gibbs(&problem, &[0.0], &config, 7).unwrap();
        let b = sample_gibbs(&problem, &[0.0], &config, 7).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.row_origin, b.row_origin);
        let c = sample_gibbs(&problem, &[0.0], &config, 8).unwrap();
        assert_ne!(a.samples, c.samples, "different seeds must differ");
    }

    #[test]
    fn cross_chain_first_coordinate_correlation_is_negligible() {
        let problem = quadratic_target(1);
        let config = LangevinConfig {
            lambda: 0.01,
            step_size: 0.2,
            burn_in: 100,
            steps_per_sample: 10,
            n_chains: 2,
            samples_per_chain: 2000,
            init: LmcInit::Zero,
            smoothness: None,
        };
        let batch = sample_gibbs(&problem, &[0.0], &config, 5).unwrap();
        let m = config.samples_per_chain;
        let (a, b): (Vec<f64>, Vec<f64>) = (
            (0..m).map(|i| batch.row(i)[0]).collect(),
            (m..2 * m).map(|i| batch.row(i)[0]).collect(),
        );
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(&a), mean(&b));
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let (va, vb): (f64, f64) = (
            a.iter().map(|x| (x - ma) * (x - ma)).sum(),
            b.iter().map(|y| (y - mb) * (y - mb)).sum(),
        );
        let corr = cov / (va * vb).sqrt();
        let bound = 3.0 / (m as f64).sqrt();
        assert!(
            corr.abs() <= bound,
            "cross-chain correlation {corr:.4} exceeds ±{bound:.4}"
        );
    }

    #[test]
    fn divergence_is_reported_with_chain_and_step() {
        // Unstable step size on the quadratic target: |1 − h| > 1 blows up
        // geometrically from a nonzero start.
        let problem = quadratic_target(1);
        let config = LangevinConfig {
            lambda: 1.0,
            step_size: 3.0,
            burn_in: 1000,
            steps_per_sample: 1,
            n_chains: 2,
            samples_per_chain: 1,
            init: LmcInit::GaussianScale(1.0),
            smoothness: None,
        };
        let err = sample_gibbs(&problem, &[0.0], &config, 1).unwrap_err();
        match &err {
            SqgError::SamplerDivergence { chain, step, .. } => {
                assert!(chain.is_some() && step.is_some(), "missing context: {err}");
            }
            other => panic!("expected SamplerDivergence, got {other:?}"),
        }
        let msg = err.to_string();
        assert!(msg.contains("reduce the step size"), "no remedy in: {msg}");
    }

    #[test]
    fn smoothness_estimate_gates_the_step_size() {
        let mut config = LangevinConfig::new(0.01, 0.05);
        config.smoothness = Some(1.0); // demands h < 0.02
        let err = config.validate().unwrap_err();
        assert!(matches!(err, SqgError::Config(_)), "got {err:?}");
        config.step_size = 0.019;
        config.validate().unwrap();
    }

    #[test]
    fn explicit_init_must_match_chain_count_and_dim() {
        let problem = quadratic_target(2);
        let mut config = LangevinConfig::new(0.01, 0.01);
        config.n_chains = 2;
        config.init = LmcInit::Explicit(vec![vec![0.0, 0.0]]);
        assert!(sample_gibbs(&problem, &[0.0], &config, 1).is_err());
        config.init = LmcInit::Explicit(vec![vec![0.0], vec![0.0]]);
        assert!(sample_gibbs(&problem, &[0.0], &config, 1).is_err());
    }

    #[test]
    fn theta_outside_domain_is_rejected() {
        let problem = quadratic_target(1);
        let config = LangevinConfig::new(0.01, 0.01);
        let err = sample_gibbs(&problem, &[2.0], &config, 1).unwrap_err();
        assert!(matches!(err, SqgError::InvalidArgument(_)), "got {err:?}");
    }

    #[test]
    fn csv_dump_has_the_documented_header_and_shape() {
        let problem = quadratic_target(2);
        let config = LangevinConfig {
            lambda: 0.01,
            step_size: 0.05,
            burn_in: 3,
            steps_per_sample: 2,
            n_chains: 2,
            samples_per_chain: 2,
            init: LmcInit::Zero,
            smoothness: None,
        };
        let batch = sample_gibbs(&problem, &[0.0], &config, 4).unwrap();
        let mut buf = Vec::new();
        batch.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "chain,step,x_1,x_2");
        assert_eq!(lines.count(), 4);
        // Steps are recorded after burn-in at the thinning interval.
        assert!(text.contains("0,5,") && text.contains("0,7,"), "{text}");
    }
}

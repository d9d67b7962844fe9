//! The bilevel problem container.
//!
//! A [`BilevelProblem`] bundles the two objectives, the lower-level gradient
//! the sampler needs, the upper-level domain, and whatever optional analytic
//! structure an instance can offer (derivatives for the penalty baselines,
//! closed forms for diagnostics). Instances are built through
//! [`BilevelProblemBuilder`], which by default verifies every supplied
//! derivative against central finite differences at registration time —
//! a mis-specified gradient otherwise surfaces as a silently wrong
//! stationary point hours later.

use std::fmt;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{project, UpperDomain};
use crate::error::{Result, SqgError};
use crate::seedstream::{self, role};
use crate::vecops;

/// Which extreme of `f` over the lower-level solution set defines the
/// hyper-objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    /// `F(θ) = max_{x ∈ S(θ)} f(θ, x)` — guard against the worst solution.
    Pessimistic,
    /// `F(θ) = min_{x ∈ S(θ)} f(θ, x)` — cooperate with the best solution.
    Optimistic,
}

impl fmt::Display for Sense {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sense::Pessimistic => write!(out, "pessimistic"),
            Sense::Optimistic => write!(out, "optimistic"),
        }
    }
}

type ScalarFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
type GradInto = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
type VecFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
type DirVecFn = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
type ThetaFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A bilevel instance: upper objective `f(θ, x)`, lower objective `g(θ, x)`,
/// its gradient in `x`, a compact convex domain for θ, and a [`Sense`].
///
/// Cloning is cheap (shared function handles).
#[derive(Clone)]
pub struct BilevelProblem {
    name: String,
    upper_dim: usize,
    lower_dim: usize,
    domain: UpperDomain,
    sense: Sense,
    f: ScalarFn,
    g: ScalarFn,
    grad_x_g: GradInto,
    grad_theta_f: Option<VecFn>,
    grad_x_f: Option<VecFn>,
    grad_theta_g: Option<VecFn>,
    hess_x_g_vec: Option<DirVecFn>,
    mixed_theta_x_g_vec: Option<DirVecFn>,
    closed_form_hyper: Option<ThetaFn>,
    closed_form_lower_value: Option<ThetaFn>,
    theta_star: Option<Vec<f64>>,
}

impl fmt::Debug for BilevelProblem {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        out.debug_struct("BilevelProblem")
            .field("name", &self.name)
            .field("upper_dim", &self.upper_dim)
            .field("lower_dim", &self.lower_dim)
            .field("domain", &self.domain)
            .field("sense", &self.sense)
            .field("has_baseline_grads", &self.has_baseline_grads())
            .field("has_closed_form_hyper", &self.closed_form_hyper.is_some())
            .finish()
    }
}

impl BilevelProblem {
    /// Instance name used in reports and CSV rows.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Upper-level dimension `m`.
    pub fn upper_dim(&self) -> usize {
        self.upper_dim
    }

    /// Lower-level dimension `d`.
    pub fn lower_dim(&self) -> usize {
        self.lower_dim
    }

    /// The feasible set for θ.
    pub fn domain(&self) -> &UpperDomain {
        &self.domain
    }

    /// Pessimistic or optimistic hyper-objective.
    pub fn sense(&self) -> Sense {
        self.sense
    }

    /// Upper objective `f(θ, x)`.
    pub fn f(&self, theta: &[f64], x: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.upper_dim);
        debug_assert_eq!(x.len(), self.lower_dim);
        (self.f)(theta, x)
    }

    /// Lower objective `g(θ, x)`.
    pub fn g(&self, theta: &[f64], x: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.upper_dim);
        debug_assert_eq!(x.len(), self.lower_dim);
        (self.g)(theta, x)
    }

    /// Writes `∂ₓ g(θ, x)` into `out` without allocating. This is the only
    /// callback on the Langevin hot path.
    pub fn grad_x_g_into(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.lower_dim);
        (self.grad_x_g)(theta, x, out)
    }

    /// Allocating convenience wrapper around [`Self::grad_x_g_into`].
    pub fn grad_x_g(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.lower_dim];
        self.grad_x_g_into(theta, x, &mut out);
        out
    }

    /// `∂_θ f(θ, x)` when the instance supplies it.
    pub fn grad_theta_f(&self, theta: &[f64], x: &[f64]) -> Option<Vec<f64>> {
        self.grad_theta_f.as_ref().map(|h| h(theta, x))
    }

    /// `∂ₓ f(θ, x)` when the instance supplies it.
    pub fn grad_x_f(&self, theta: &[f64], x: &[f64]) -> Option<Vec<f64>> {
        self.grad_x_f.as_ref().map(|h| h(theta, x))
    }

    /// `∂_θ g(θ, x)` when the instance supplies it.
    pub fn grad_theta_g(&self, theta: &[f64], x: &[f64]) -> Option<Vec<f64>> {
        self.grad_theta_g.as_ref().map(|h| h(theta, x))
    }

    /// Hessian-vector product `∂²ₓ g(θ, x) · v` when supplied.
    pub fn hess_x_g_vec(&self, theta: &[f64], x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        self.hess_x_g_vec.as_ref().map(|h| h(theta, x, v))
    }

    /// Mixed second derivative `(∂_θ ∂ₓ g(θ, x))ᵀ v` (an m-vector) when
    /// supplied.
    pub fn mixed_theta_x_g_vec(&self, theta: &[f64], x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        self.mixed_theta_x_g_vec.as_ref().map(|h| h(theta, x, v))
    }

    /// Whether the first-order penalty baselines can run on analytic
    /// derivatives alone (all four of `∂_θ f`, `∂ₓ f`, `∂_θ g`, `∂ₓ g`).
    pub fn has_baseline_grads(&self) -> bool {
        self.grad_theta_f.is_some() && self.grad_x_f.is_some() && self.grad_theta_g.is_some()
    }

    /// Closed-form hyper-objective `F(θ)` for diagnostics, when known.
    pub fn hyper_objective(&self, theta: &[f64]) -> Option<f64> {
        self.closed_form_hyper.as_ref().map(|h| h(theta))
    }

    /// Closed-form lower-level optimal value `g*(θ)`, when known.
    pub fn lower_value(&self, theta: &[f64]) -> Option<f64> {
        self.closed_form_lower_value.as_ref().map(|h| h(theta))
    }

    /// A known minimizer of the hyper-objective, when the instance has one.
    pub fn theta_star(&self) -> Option<&[f64]> {
        self.theta_star.as_deref()
    }
}

/// Step-by-step constructor for [`BilevelProblem`]. See module docs.
pub struct BilevelProblemBuilder {
    name: String,
    upper_dim: usize,
    lower_dim: usize,
    domain: UpperDomain,
    sense: Sense,
    f: Option<ScalarFn>,
    g: Option<ScalarFn>,
    grad_x_g: Option<GradInto>,
    grad_theta_f: Option<VecFn>,
    grad_x_f: Option<VecFn>,
    grad_theta_g: Option<VecFn>,
    hess_x_g_vec: Option<DirVecFn>,
    mixed_theta_x_g_vec: Option<DirVecFn>,
    closed_form_hyper: Option<ThetaFn>,
    closed_form_lower_value: Option<ThetaFn>,
    theta_star: Option<Vec<f64>>,
    check_gradients: bool,
}

impl BilevelProblemBuilder {
    /// Starts a builder for an instance with the given dimensions, domain,
    /// and sense.
    pub fn new(
        name: impl Into<String>,
        upper_dim: usize,
        lower_dim: usize,
        domain: UpperDomain,
        sense: Sense,
    ) -> Self {
        BilevelProblemBuilder {
            name: name.into(),
            upper_dim,
            lower_dim,
            domain,
            sense,
            f: None,
            g: None,
            grad_x_g: None,
            grad_theta_f: None,
            grad_x_f: None,
            grad_theta_g: None,
            hess_x_g_vec: None,
            mixed_theta_x_g_vec: None,
            closed_form_hyper: None,
            closed_form_lower_value: None,
            theta_star: None,
            check_gradients: true,
        }
    }

    /// Upper objective (required).
    pub fn f(mut self, h: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.f = Some(Arc::new(h));
        self
    }

    /// Lower objective (required).
    pub fn g(mut self, h: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.g = Some(Arc::new(h));
        self
    }

    /// In-place lower-level gradient `∂ₓ g` (required).
    pub fn grad_x_g(
        mut self,
        h: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.grad_x_g = Some(Arc::new(h));
        self
    }

    /// Analytic `∂_θ f` (optional, enables penalty baselines).
    pub fn grad_theta_f(
        mut self,
        h: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.grad_theta_f = Some(Arc::new(h));
        self
    }

    /// Analytic `∂ₓ f` (optional, enables penalty baselines).
    pub fn grad_x_f(
        mut self,
        h: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.grad_x_f = Some(Arc::new(h));
        self
    }

    /// Analytic `∂_θ g` (optional, enables penalty baselines).
    pub fn grad_theta_g(
        mut self,
        h: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.grad_theta_g = Some(Arc::new(h));
        self
    }

    /// Analytic Hessian-vector product `∂²ₓ g · v` (optional; the
    /// gradient-norm penalty falls back to finite differences without it).
    pub fn hess_x_g_vec(
        mut self,
        h: impl Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.hess_x_g_vec = Some(Arc::new(h));
        self
    }

    /// Analytic mixed product `(∂_θ ∂ₓ g)ᵀ v` (optional; same fallback).
    pub fn mixed_theta_x_g_vec(
        mut self,
        h: impl Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.mixed_theta_x_g_vec = Some(Arc::new(h));
        self
    }

    /// Closed-form hyper-objective for diagnostics (optional).
    pub fn closed_form_hyper(mut self, h: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.closed_form_hyper = Some(Arc::new(h));
        self
    }

    /// Closed-form lower-level optimal value `g*(θ)` (optional; the
    /// value-function penalty baseline uses it directly).
    pub fn closed_form_lower_value(
        mut self,
        h: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.closed_form_lower_value = Some(Arc::new(h));
        self
    }

    /// Known hyper-objective minimizer (optional; enables error reporting).
    pub fn theta_star(mut self, theta: Vec<f64>) -> Self {
        self.theta_star = Some(theta);
        self
    }

    /// Disables the registration-time finite-difference check. Only for
    /// instances whose objectives are nonsmooth on a positive-measure set;
    /// the concrete instances in this crate all keep the check on.
    pub fn skip_gradient_check(mut self) -> Self {
        self.check_gradients = false;
        self
    }

    /// Finalizes the instance. Unless skipped, verifies every supplied
    /// derivative against central finite differences at 8 points drawn from
    /// `seed` (θ projected into the domain, x standard normal), failing with
    /// [`SqgError::GradientCheck`] on relative error above `1e-5`.
    pub fn build(self, seed: u64) -> Result<BilevelProblem> {
        if self.domain.dim() != self.upper_dim {
            return Err(SqgError::config(format!(
                "domain dimension {} does not match upper_dim {}",
                self.domain.dim(),
                self.upper_dim
            )));
        }
        if self.upper_dim == 0 || self.lower_dim == 0 {
            return Err(SqgError::config(
                "upper_dim and lower_dim must both be positive",
            ));
        }
        let problem = BilevelProblem {
            name: self.name,
            upper_dim: self.upper_dim,
            lower_dim: self.lower_dim,
            domain: self.domain,
            sense: self.sense,
            f: self
                .f
                .ok_or_else(|| SqgError::config("missing upper objective f"))?,
            g: self
                .g
                .ok_or_else(|| SqgError::config("missing lower objective g"))?,
            grad_x_g: self
                .grad_x_g
                .ok_or_else(|| SqgError::config("missing lower gradient grad_x_g"))?,
            grad_theta_f: self.grad_theta_f,
            grad_x_f: self.grad_x_f,
            grad_theta_g: self.grad_theta_g,
            hess_x_g_vec: self.hess_x_g_vec,
            mixed_theta_x_g_vec: self.mixed_theta_x_g_vec,
            closed_form_hyper: self.closed_form_hyper,
            closed_form_lower_value: self.closed_form_lower_value,
            theta_star: self.theta_star,
        };
        if self.check_gradients {
            check_gradients(&problem, seed)?;
        }
        Ok(problem)
    }
}

/// Number of random points probed by the registration check.
const CHECK_POINTS: usize = 8;
/// Relative tolerance for analytic-vs-finite-difference agreement.
const CHECK_RTOL: f64 = 1e-5;

fn fd_step(z: f64) -> f64 {
    1e-5 * (1.0 + z.abs())
}

/// Central finite difference of `h` along coordinate `i` of `z`.
fn central_diff(h: &dyn Fn(&[f64]) -> f64, z: &[f64], i: usize) -> f64 {
    let step = fd_step(z[i]);
    let mut hi = z.to_vec();
    let mut lo = z.to_vec();
    hi[i] += step;
    lo[i] -= step;
    (h(&hi) - h(&lo)) / (2.0 * step)
}

fn compare(
    what: &str,
    point: usize,
    analytic: &[f64],
    fd: &[f64],
) -> Result<()> {
    let scale = 1.0 + vecops::norm(analytic);
    let err = vecops::dist(analytic, fd);
    if !(err <= CHECK_RTOL * scale) {
        return Err(SqgError::GradientCheck(format!(
            "{what} disagrees with central differences at probe point {point}: \
             |analytic - fd| = {err:.3e} exceeds {CHECK_RTOL:.0e} * (1 + |analytic|) = {:.3e}",
            CHECK_RTOL * scale
        )));
    }
    Ok(())
}

/// Verifies all supplied derivative callbacks at `CHECK_POINTS` random points.
fn check_gradients(p: &BilevelProblem, seed: u64) -> Result<()> {
    let mut rng = seedstream::stream(seed, &[role::INIT, 0xC4EC]);
    let normal = StandardNormal;
    for point in 0..CHECK_POINTS {
        let raw: Vec<f64> = (0..p.upper_dim).map(|_| normal.sample(&mut rng)).collect();
        let theta = project(p.domain(), &raw)?;
        let x: Vec<f64> = (0..p.lower_dim).map(|_| normal.sample(&mut rng)).collect();

        let analytic = p.grad_x_g(&theta, &x);
        let fd: Vec<f64> = (0..p.lower_dim)
            .map(|i| central_diff(&|z: &[f64]| p.g(&theta, z), &x, i))
            .collect();
        compare("grad_x_g", point, &analytic, &fd)?;

        if let Some(analytic) = p.grad_x_f(&theta, &x) {
            let fd: Vec<f64> = (0..p.lower_dim)
                .map(|i| central_diff(&|z: &[f64]| p.f(&theta, z), &x, i))
                .collect();
            compare("grad_x_f", point, &analytic, &fd)?;
        }
        if let Some(analytic) = p.grad_theta_f(&theta, &x) {
            let fd: Vec<f64> = (0..p.upper_dim)
                .map(|i| central_diff(&|t: &[f64]| p.f(t, &x), &theta, i))
                .collect();
            compare("grad_theta_f", point, &analytic, &fd)?;
        }
        if let Some(analytic) = p.grad_theta_g(&theta, &x) {
            let fd: Vec<f64> = (0..p.upper_dim)
                .map(|i| central_diff(&|t: &[f64]| p.g(t, &x), &theta, i))
                .collect();
            compare("grad_theta_g", point, &analytic, &fd)?;
        }

        // Direction for the second-order products.
        let v: Vec<f64> = (0..p.lower_dim).map(|_| normal.sample(&mut rng)).collect();
        if let Some(analytic) = p.hess_x_g_vec(&theta, &x, &v) {
            // FD of x ↦ ⟨∂ₓg(θ,x), v⟩ gives Hv by symmetry of the Hessian.
            let fd: Vec<f64> = (0..p.lower_dim)
                .map(|i| {
                    central_diff(&|z: &[f64]| vecops::dot(&p.grad_x_g(&theta, z), &v), &x, i)
                })
                .collect();
            compare("hess_x_g_vec", point, &analytic, &fd)?;
        }
        if let Some(analytic) = p.mixed_theta_x_g_vec(&theta, &x, &v) {
            let fd: Vec<f64> = (0..p.upper_dim)
                .map(|i| {
                    central_diff(&|t: &[f64]| vecops::dot(&p.grad_x_g(t, &x), &v), &theta, i)
                })
                .collect();
            compare("mixed_theta_x_g_vec", point, &analytic, &fd)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// g = ½‖x − θ·1‖², f = ‖x‖² — everything analytic.
    fn quadratic_builder() -> BilevelProblemBuilder {
        let dom = UpperDomain::boxed(vec![-2.0], vec![2.0]).unwrap();
        BilevelProblemBuilder::new("quad", 1, 3, dom, Sense::Optimistic)
            .f(|_t, x| x.iter().map(|v| v * v).sum())
            .g(|t, x| 0.5 * x.iter().map(|v| (v - t[0]) * (v - t[0])).sum::<f64>())
            .grad_x_g(|t, x, out| {
                for i in 0..x.len() {
                    out[i] = x[i] - t[0];
                }
            })
    }

    #[test]
    fn builder_accepts_consistent_gradients() {
        let p = quadratic_builder()
            .grad_x_f(|_t, x| x.iter().map(|v| 2.0 * v).collect())
            .grad_theta_g(|t, x| vec![-x.iter().map(|v| v - t[0]).sum::<f64>()])
            .hess_x_g_vec(|_t, _x, v| v.to_vec())
            .mixed_theta_x_g_vec(|_t, _x, v| vec![-v.iter().sum::<f64>()])
            .build(7)
            .unwrap();
        assert_eq!(p.lower_dim(), 3);
        assert!(p.hess_x_g_vec(&[0.0], &[1.0, 2.0, 3.0], &[1.0, 0.0, 0.0]).is_some());
    }

    #[test]
    fn builder_rejects_wrong_gradient() {
        // Deliberately mis-scaled ∂ₓg.
        let dom = UpperDomain::boxed(vec![-2.0], vec![2.0]).unwrap();
        let err = BilevelProblemBuilder::new("bad", 1, 2, dom, Sense::Optimistic)
            .f(|_t, x| x[0] + x[1])
            .g(|t, x| 0.5 * x.iter().map(|v| (v - t[0]) * (v - t[0])).sum::<f64>())
            .grad_x_g(|t, x, out| {
                for i in 0..x.len() {
                    out[i] = 2.0 * (x[i] - t[0]);
                }
            })
            .build(7)
            .unwrap_err();
        assert!(matches!(err, SqgError::GradientCheck(_)), "got {err:?}");
    }

    #[test]
    fn skip_gradient_check_bypasses_the_probe() {
        let dom = UpperDomain::boxed(vec![-2.0], vec![2.0]).unwrap();
        // Same broken gradient as above, but the check is disabled.
        BilevelProblemBuilder::new("bad-unchecked", 1, 2, dom, Sense::Optimistic)
            .f(|_t, x| x[0] + x[1])
            .g(|t, x| 0.5 * x.iter().map(|v| (v - t[0]) * (v - t[0])).sum::<f64>())
            .grad_x_g(|t, x, out| {
                for i in 0..x.len() {
                    out[i] = 2.0 * (x[i] - t[0]);
                }
            })
            .skip_gradient_check()
            .build(7)
            .unwrap();
    }

    #[test]
    fn builder_rejects_missing_pieces_and_bad_dims() {
        let dom = UpperDomain::boxed(vec![-2.0], vec![2.0]).unwrap();
        let err = BilevelProblemBuilder::new("incomplete", 1, 2, dom.clone(), Sense::Optimistic)
            .f(|_t, _x| 0.0)
            .build(7)
            .unwrap_err();
        assert!(matches!(err, SqgError::Config(_)));

        let err = BilevelProblemBuilder::new("mismatched", 2, 2, dom, Sense::Optimistic)
            .f(|_t, _x| 0.0)
            .g(|_t, _x| 0.0)
            .grad_x_g(|_t, _x, out| out.fill(0.0))
            .build(7)
            .unwrap_err();
        assert!(matches!(err, SqgError::Config(_)));
    }
}

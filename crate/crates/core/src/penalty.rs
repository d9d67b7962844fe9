//! First-order penalty baselines.
//!
//! Both methods collapse the bilevel program into a single level and run
//! joint (projected) gradient descent on a penalized objective Φ over
//! (θ, x) ∈ Θ × R^d:
//!
//! * **value penalty** — Φ(θ, x) = f(θ, x) + γ·(g(θ, x) − g*(θ)), where
//!   g*(θ) = min_x g(θ, x) comes from a closed form or an inner descent;
//! * **gradient-norm penalty** — Φ(θ, x) = f(θ, x) + (γ/2)·‖∇ₓg(θ, x)‖².
//!
//! These baselines are cheap and work when the lower level has a unique
//! solution, but on instances whose minimizer set is a manifold they stall:
//! once x is penalty-stationary for the current θ, the θ-gradient of the
//! penalty vanishes *identically*, so every θ is a stationary point of Φ
//! and the iterate freezes wherever the transient left it. The zeroth-order
//! superquantile loop exists precisely to avoid that failure mode; the
//! baselines are here for the head-to-head.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SqgError};
use crate::outer::{BestIterate, OuterAbort, OuterRecord, OuterTrajectory};
use crate::problem::BilevelProblem;
use crate::{domain, vecops};

/// Which penalized objective to descend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PenaltyVariant {
    /// Φ = f + γ·(g − g*).
    ValuePenalty,
    /// Φ = f + (γ/2)·‖∇ₓg‖².
    GradNormPenalty,
}

impl PenaltyVariant {
    /// Stable method tag used in result tables.
    pub fn method_name(self) -> &'static str {
        match self {
            PenaltyVariant::ValuePenalty => "v-pbgd",
            PenaltyVariant::GradNormPenalty => "g-pbgd",
        }
    }
}

/// How the value penalty obtains the lower-level optimal value g*(θ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LowerValueOracle {
    /// Use the closed form registered on the instance.
    ClosedForm,
    /// Estimate g*(θ) by plain gradient descent on g(θ, ·) started from the
    /// current x iterate.
    InnerDescent { steps: usize, step_size: f64 },
}

/// Configuration of one penalty-descent run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    /// Penalty weight γ ≥ 0 (0 turns the penalty off, leaving descent on f).
    pub gamma: f64,
    /// Step size shared by the θ and x updates.
    pub joint_step: f64,
    pub n_iters: usize,
    pub variant: PenaltyVariant,
    /// Only consulted by [`PenaltyVariant::ValuePenalty`].
    pub lower_value_oracle: LowerValueOracle,
    /// When set, each iteration steps x first and then θ with a refreshed
    /// gradient; the default updates both simultaneously from the same
    /// linearization point.
    pub alternating: bool,
}

impl PenaltyConfig {
    pub fn new(variant: PenaltyVariant) -> Self {
        PenaltyConfig {
            gamma: 10.0,
            joint_step: 0.01,
            n_iters: 2000,
            variant,
            lower_value_oracle: LowerValueOracle::ClosedForm,
            alternating: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(SqgError::config(format!(
                "penalty weight gamma must be finite and ≥ 0, got {}",
                self.gamma
            )));
        }
        if !(self.joint_step > 0.0) || !self.joint_step.is_finite() {
            return Err(SqgError::config(format!(
                "joint_step must be positive and finite, got {}",
                self.joint_step
            )));
        }
        if let LowerValueOracle::InnerDescent { steps, step_size } = self.lower_value_oracle {
            if steps == 0 {
                return Err(SqgError::config("inner-descent oracle needs ≥ 1 step"));
            }
            if !(step_size > 0.0) || !step_size.is_finite() {
                return Err(SqgError::config(format!(
                    "inner-descent step_size must be positive and finite, got {step_size}"
                )));
            }
        }
        Ok(())
    }
}

/// Finite-difference step for the gradient-norm penalty fallbacks,
/// centralized so the production path and its tests agree on the scheme.
fn fd_step(scale: f64) -> f64 {
    1e-5 * (1.0 + scale)
}

/// g*(θ) through the configured oracle. Inner descent starts from `x` —
/// during a run that is the current iterate, which tracks the minimizer set
/// and keeps the estimate warm.
fn lower_value_via(
    problem: &BilevelProblem,
    theta: &[f64],
    x: &[f64],
    oracle: LowerValueOracle,
) -> Result<f64> {
    match oracle {
        LowerValueOracle::ClosedForm => problem.lower_value(theta).ok_or_else(|| {
            SqgError::config(
                "value penalty with the ClosedForm oracle requires the instance to register a \
                 closed-form lower value; switch to the InnerDescent oracle otherwise",
            )
        }),
        LowerValueOracle::InnerDescent { steps, step_size } => {
            let mut z = x.to_vec();
            let mut grad = vec![0.0; z.len()];
            for _ in 0..steps {
                problem.grad_x_g_into(theta, &z, &mut grad);
                for (zi, gi) in z.iter_mut().zip(&grad) {
                    *zi -= step_size * gi;
                }
            }
            Ok(problem.g(theta, &z))
        }
    }
}

/// d g*(θ)/dθ by central differences of the configured oracle. For the
/// closed form this is exact to O(h²); for inner descent both displaced
/// evaluations restart from the same x, so the differences see a consistent
/// approximation of g*.
fn lower_value_grad_theta(
    problem: &BilevelProblem,
    theta: &[f64],
    x: &[f64],
    oracle: LowerValueOracle,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; theta.len()];
    let mut probe = theta.to_vec();
    for j in 0..theta.len() {
        let h = 1e-6 * (1.0 + theta[j].abs());
        probe[j] = theta[j] + h;
        let up = lower_value_via(problem, &probe, x, oracle)?;
        probe[j] = theta[j] - h;
        let dn = lower_value_via(problem, &probe, x, oracle)?;
        probe[j] = theta[j];
        out[j] = (up - dn) / (2.0 * h);
    }
    Ok(out)
}

/// Half squared gradient norm q(θ, x) = ½‖∇ₓg(θ, x)‖².
fn half_sq_grad_norm(problem: &BilevelProblem, theta: &[f64], x: &[f64]) -> f64 {
    let g = problem.grad_x_g(theta, x);
    0.5 * vecops::dot(&g, &g)
}

/// The penalized scalar Φ(θ, x) for the configured variant.
pub fn penalty_objective(
    problem: &BilevelProblem,
    theta: &[f64],
    x: &[f64],
    config: &PenaltyConfig,
) -> Result<f64> {
    config.validate()?;
    check_dims(problem, theta, x)?;
    let f = problem.f(theta, x);
    match config.variant {
        PenaltyVariant::ValuePenalty => {
            let gap = problem.g(theta, x)
                - lower_value_via(problem, theta, x, config.lower_value_oracle)?;
            Ok(f + config.gamma * gap)
        }
        PenaltyVariant::GradNormPenalty => {
            Ok(f + config.gamma * half_sq_grad_norm(problem, theta, x))
        }
    }
}

fn check_dims(problem: &BilevelProblem, theta: &[f64], x: &[f64]) -> Result<()> {
    if theta.len() != problem.upper_dim() || x.len() != problem.lower_dim() {
        return Err(SqgError::invalid(format!(
            "penalty evaluation expected dims ({}, {}), got ({}, {})",
            problem.upper_dim(),
            problem.lower_dim(),
            theta.len(),
            x.len()
        )));
    }
    Ok(())
}

/// The assembled joint gradient (∇_θΦ, ∇ₓΦ).
///
/// The gradient-norm variant needs (∂²ₓg)∇ₓg and (∂_θ∇ₓg)∇ₓg; these use the
/// instance's analytic Hessian- and mixed-vector products when registered
/// and otherwise fall back to central differences of q = ½‖∇ₓg‖² with step
/// 1e-5·(1 + ‖·‖).
pub fn penalty_joint_gradient(
    problem: &BilevelProblem,
    theta: &[f64],
    x: &[f64],
    config: &PenaltyConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    config.validate()?;
    check_dims(problem, theta, x)?;
    let missing = |which: &str| {
        SqgError::config(format!(
            "penalty descent needs analytic first-order callbacks; the instance is missing {which}"
        ))
    };
    let grad_theta_f = problem.grad_theta_f(theta, x).ok_or_else(|| missing("grad_theta_f"))?;
    let grad_x_f = problem.grad_x_f(theta, x).ok_or_else(|| missing("grad_x_f"))?;
    let grad_x_g = problem.grad_x_g(theta, x);

    match config.variant {
        PenaltyVariant::ValuePenalty => {
            let grad_theta_g =
                problem.grad_theta_g(theta, x).ok_or_else(|| missing("grad_theta_g"))?;
            let dstar = lower_value_grad_theta(problem, theta, x, config.lower_value_oracle)?;
            let mut gt = grad_theta_f;
            for ((t, g), d) in gt.iter_mut().zip(&grad_theta_g).zip(&dstar) {
                *t += config.gamma * (g - d);
            }
            let mut gx = grad_x_f;
            vecops::scaled_add_assign(&mut gx, config.gamma, &grad_x_g);
            Ok((gt, gx))
        }
        PenaltyVariant::GradNormPenalty => {
            // x-block: ∇ₓq = (∂²ₓg)∇ₓg.
            let hv = match problem.hess_x_g_vec(theta, x, &grad_x_g) {
                Some(hv) => hv,
                None => {
                    let h = fd_step(vecops::norm(x));
                    let mut probe = x.to_vec();
                    let mut out = vec![0.0; x.len()];
                    for (i, o) in out.iter_mut().enumerate() {
                        probe[i] = x[i] + h;
                        let up = half_sq_grad_norm(problem, theta, &probe);
                        probe[i] = x[i] - h;
                        let dn = half_sq_grad_norm(problem, theta, &probe);
                        probe[i] = x[i];
                        *o = (up - dn) / (2.0 * h);
                    }
                    out
                }
            };
            // θ-block: ∇_θq = (∂_θ∇ₓg)∇ₓg.
            let mixed = match problem.mixed_theta_x_g_vec(theta, x, &grad_x_g) {
                Some(mv) => mv,
                None => {
                    let h = fd_step(vecops::norm(theta));
                    let mut probe = theta.to_vec();
                    let mut out = vec![0.0; theta.len()];
                    for (j, o) in out.iter_mut().enumerate() {
                        probe[j] = theta[j] + h;
                        let up = half_sq_grad_norm(problem, &probe, x);
                        probe[j] = theta[j] - h;
                        let dn = half_sq_grad_norm(problem, &probe, x);
                        probe[j] = theta[j];
                        *o = (up - dn) / (2.0 * h);
                    }
                    out
                }
            };
            let mut gt = grad_theta_f;
            vecops::scaled_add_assign(&mut gt, config.gamma, &mixed);
            let mut gx = grad_x_f;
            vecops::scaled_add_assign(&mut gx, config.gamma, &hv);
            Ok((gt, gx))
        }
    }
}

/// Joint penalty descent from (θ₀, x₀): θ takes projected steps on Θ, x
/// unconstrained steps, both with `joint_step`. Returns a trajectory in the
/// same format as the zeroth-order outer loop — `psi_tilde` holds Φ(θ_n, x_n),
/// `gtilde` the θ-block of the penalty gradient, and the selected iterate is
/// the argmin of the recorded Φ values (the method is deterministic, so no
/// re-evaluation pass is needed; `seed` exists for interface parity with the
/// stochastic solvers and is unused).
///
/// # Errors
///
/// Configuration and dimension problems are reported up front as plain
/// errors. A non-finite objective or gradient mid-run aborts with the
/// iteration index and the partial trajectory.
pub fn pbgd_run(
    problem: &BilevelProblem,
    config: &PenaltyConfig,
    theta0: &[f64],
    x0: &[f64],
    _seed: u64,
) -> std::result::Result<OuterTrajectory, Box<OuterAbort>> {
    let fail = |e: SqgError| {
        Box::new(OuterAbort {
            iter: 0,
            cause: e,
            partial: OuterTrajectory::from_parts(
                Vec::new(),
                None,
                problem.theta_star().map(<[f64]>::to_vec),
                problem.upper_dim(),
            ),
        })
    };
    config.validate().map_err(&fail)?;
    check_dims(problem, theta0, x0).map_err(&fail)?;
    if !problem.domain().contains(theta0, 1e-9) {
        return Err(fail(SqgError::invalid(
            "theta0 must lie in the upper-level domain",
        )));
    }
    // Surface missing-callback configuration errors before the loop.
    penalty_joint_gradient(problem, theta0, x0, config).map_err(&fail)?;

    let m = problem.upper_dim();
    let mut theta = theta0.to_vec();
    let mut x = x0.to_vec();
    let mut records: Vec<OuterRecord> = Vec::with_capacity(config.n_iters + 1);

    let abort = |n: usize, msg: String, records: Vec<OuterRecord>| {
        Box::new(OuterAbort {
            iter: n,
            cause: SqgError::DescentDivergence {
                iter: n,
                message: msg,
            },
            partial: OuterTrajectory::from_parts(
                records,
                None,
                problem.theta_star().map(<[f64]>::to_vec),
                m,
            ),
        })
    };

    for n in 0..config.n_iters {
        let start = std::time::Instant::now();
        let phi = penalty_objective(problem, &theta, &x, config).map_err(&fail)?;
        let (gt, gx) = if config.alternating {
            // x first, then θ against the updated x.
            let (_, gx) = penalty_joint_gradient(problem, &theta, &x, config).map_err(&fail)?;
            let mut x_next = x.clone();
            vecops::scaled_add_assign(&mut x_next, -config.joint_step, &gx);
            let (gt, _) =
                penalty_joint_gradient(problem, &theta, &x_next, config).map_err(&fail)?;
            x = x_next;
            (gt, gx)
        } else {
            let (gt, gx) = penalty_joint_gradient(problem, &theta, &x, config).map_err(&fail)?;
            let mut x_next = x.clone();
            vecops::scaled_add_assign(&mut x_next, -config.joint_step, &gx);
            x = x_next;
            (gt, gx)
        };

        if !phi.is_finite() || !vecops::all_finite(&gt) || !vecops::all_finite(&gx) {
            return Err(abort(
                n,
                format!("non-finite objective or gradient at (θ, x) after {n} iterations"),
                records,
            ));
        }

        let gmap =
            domain::gradient_mapping(problem.domain(), &theta, &gt, config.joint_step)
                .map_err(&fail)?;
        records.push(OuterRecord {
            iter: n,
            theta: theta.clone(),
            gtilde: Some(gt.clone()),
            gmap_norm: Some(vecops::norm(&gmap)),
            psi_tilde: phi,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });

        let mut stepped = theta.clone();
        vecops::scaled_add_assign(&mut stepped, -config.joint_step, &gt);
        theta = domain::project(problem.domain(), &stepped).map_err(&fail)?;
        if !vecops::all_finite(&theta) || !vecops::all_finite(&x) {
            return Err(abort(
                n,
                format!("iterate left the finite range after {n} update steps"),
                records,
            ));
        }
    }

    let start = std::time::Instant::now();
    let phi_final = penalty_objective(problem, &theta, &x, config).map_err(&fail)?;
    if !phi_final.is_finite() {
        return Err(abort(
            config.n_iters,
            "final objective evaluation is non-finite".to_string(),
            records,
        ));
    }
    records.push(OuterRecord {
        iter: config.n_iters,
        theta: theta.clone(),
        gtilde: None,
        gmap_norm: None,
        psi_tilde: phi_final,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    });

    let best_idx = records
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.psi_tilde.total_cmp(&b.psi_tilde))
        .map(|(i, _)| i)
        .expect("records always holds the final evaluation");
    let best = BestIterate {
        index: best_idx,
        theta: records[best_idx].theta.clone(),
        value: records[best_idx].psi_tilde,
    };
    Ok(OuterTrajectory::from_parts(
        records,
        Some(best),
        problem.theta_star().map(<[f64]>::to_vec),
        m,
    ))
}

//! Projected stochastic zeroth-order outer loop with minima selection.
//!
//! The hyper-objective F(θ) of a bilevel problem with a non-singleton lower
//! level is typically discontinuous, so no gradient-based outer method
//! applies directly. This loop instead descends the smoothed surrogate
//! ψ̃(θ) — the superquantile of f(θ, X) under the lower-level Gibbs measure,
//! estimated by [`crate::superquantile`] on [`crate::sampler`] batches — via
//! two-point sphere smoothing:
//!
//! ```text
//!     g̃_ρ(θ) = (m / 2ρb_u) Σ_t [ψ̃(θ + ρu_t) − ψ̃(θ − ρu_t)] · u_t ,
//!     θ_{n+1} = Proj_Θ(θ̄_n − η g̃_ρ(θ̄_n)) ,
//! ```
//!
//! with u_t uniform on the unit sphere. Minima *selection* happens at the
//! end: every recorded iterate is re-evaluated at a higher sample budget and
//! the best one is returned, because the surrogate value seen inside the
//! loop is too noisy to pick a winner from directly.

use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{self, InteriorizedDomain};
use crate::error::{Result, SqgError};
use crate::problem::{BilevelProblem, Sense};
use crate::sampler::{sample_gibbs, GibbsSampleBatch, LangevinConfig};
use crate::seedstream::{self, role};
use crate::superquantile::{calibrate_beta_bound, psgd_beta, sq_estimate, SqConfig, Tail};
use crate::vecops;

/// How the loop keeps perturbed queries θ ± ρu inside the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryMode {
    /// Re-center each iterate onto the ρ-interiorized domain Θ_ρ before
    /// perturbing, so every query point is feasible by construction.
    Interiorize,
    /// Perturb from the iterate itself and project each query point onto Θ.
    /// Ablation mode: the two-point identity degrades near the boundary
    /// because the effective perturbation is no longer ±ρu.
    ClampEvaluate,
}

/// Configuration of the outer zeroth-order loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterConfig {
    /// Starting iterate θ₀ (projected onto Θ if it lies outside).
    pub theta0: Vec<f64>,
    /// Outer iterations N. Zero is legal: the trajectory then holds the
    /// single record at θ₀.
    pub n_outer: usize,
    /// Directions b_u per iteration (2·b_u surrogate queries).
    pub batch_directions: usize,
    /// Smoothing radius ρ > 0.
    pub rho: f64,
    /// Outer step size η > 0.
    pub eta: f64,
    /// Inner superquantile solver settings; the tail is overridden from the
    /// problem's sense (Pessimistic → Upper, Optimistic → Lower).
    pub sq: SqConfig,
    /// Gibbs sampler settings. `total_samples()` is the fresh-batch size M;
    /// the solver batch for PSGD is the same kinetics resized to L samples.
    pub langevin: LangevinConfig,
    pub boundary_mode: BoundaryMode,
    /// Share the center batches (drawn once per iteration at θ̄_n) across
    /// all perturbed queries, with f evaluated at each query point on those
    /// shared samples. This reproduces the algorithm exactly as stated —
    /// one sample draw per iteration — at the cost of correlated queries;
    /// the default draws fresh batches at every perturbed point, which is
    /// what the surrogate's definition actually asks for.
    pub reuse_center_batch: bool,
    /// Master seed; every chain, direction, and query derives its own
    /// stream from it.
    pub seed: u64,
    /// Warm-start each query's β₀ from the previous iteration's average β̂
    /// at the same perturbation sign (center queries have their own slot).
    /// Off = the literal algorithm: every inner solve starts at
    /// `sq.beta_init`.
    pub warm_start_beta: bool,
    /// Safety factor for the per-query β-interval calibration (≥ 1).
    pub calib_safety: f64,
    /// Floor for the calibrated β interval half-width (> 0).
    pub calib_floor: f64,
}

impl OuterConfig {
    /// Defaults: N = 500, b_u = 8, ρ = 0.1, η = 0.05, warm starts on,
    /// fresh batches per query, Interiorize, calibration safety 2 floor 1.
    pub fn new(theta0: Vec<f64>, sq: SqConfig, langevin: LangevinConfig) -> Self {
        OuterConfig {
            theta0,
            n_outer: 500,
            batch_directions: 8,
            rho: 0.1,
            eta: 0.05,
            sq,
            langevin,
            boundary_mode: BoundaryMode::Interiorize,
            reuse_center_batch: false,
            seed: 0,
            warm_start_beta: true,
            calib_safety: 2.0,
            calib_floor: 1.0,
        }
    }

    pub fn validate(&self, problem: &BilevelProblem) -> Result<()> {
        if self.theta0.len() != problem.upper_dim() {
            return Err(SqgError::config(format!(
                "theta0 has dimension {}, problem expects {}",
                self.theta0.len(),
                problem.upper_dim()
            )));
        }
        if !vecops::all_finite(&self.theta0) {
            return Err(SqgError::config("theta0 must be finite"));
        }
        if self.batch_directions == 0 {
            return Err(SqgError::config("batch_directions must be ≥ 1"));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(SqgError::config(format!(
                "rho must be positive and finite, got {}",
                self.rho
            )));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(SqgError::config(format!(
                "eta must be positive and finite, got {}",
                self.eta
            )));
        }
        if !(self.calib_safety >= 1.0) {
            return Err(SqgError::config("calib_safety must be ≥ 1"));
        }
        if !(self.calib_floor > 0.0) {
            return Err(SqgError::config("calib_floor must be positive"));
        }
        self.sq.validate()?;
        self.langevin.validate()?;
        if self.boundary_mode == BoundaryMode::Interiorize {
            // Errors here if Θ_ρ is empty.
            domain::interiorize(problem.domain(), self.rho)?;
        }
        Ok(())
    }
}

/// One recorded outer iterate. The final record (at θ_N) has no update
/// attached, so its estimator fields are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub iter: usize,
    pub theta: Vec<f64>,
    /// Two-point gradient estimate g̃_ρ(θ_n); `None` on the final record.
    pub gtilde: Option<Vec<f64>>,
    /// ‖G_Θ(θ_n, g̃_ρ; η)‖; `None` on the final record.
    pub gmap_norm: Option<f64>,
    /// Surrogate value ψ̃ at this iterate (center query).
    pub psi_tilde: f64,
    /// Wall-clock time spent on this iteration, in milliseconds.
    pub wall_ms: f64,
}

/// The iterate selected by the post-hoc re-evaluation pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestIterate {
    /// Index into the trajectory records.
    pub index: usize,
    pub theta: Vec<f64>,
    /// Surrogate objective re-estimated at 4× the fresh-sample budget.
    pub value: f64,
}

/// Full output of one outer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterTrajectory {
    records: Vec<OuterRecord>,
    best: Option<BestIterate>,
    theta_star: Option<Vec<f64>>,
    upper_dim: usize,
}

impl OuterTrajectory {
    /// Assembles a trajectory from outside the zeroth-order loop — the
    /// penalty baselines report their runs in this same format.
    pub(crate) fn from_parts(
        records: Vec<OuterRecord>,
        best: Option<BestIterate>,
        theta_star: Option<Vec<f64>>,
        upper_dim: usize,
    ) -> Self {
        OuterTrajectory {
            records,
            best,
            theta_star,
            upper_dim,
        }
    }

    pub fn records(&self) -> &[OuterRecord] {
        &self.records
    }

    /// The selected iterate. `None` only on aborted runs, whose partial
    /// trajectory never reaches the selection pass.
    pub fn best(&self) -> Option<&BestIterate> {
        self.best.as_ref()
    }

    /// ‖θ̂ − θ*‖ of the selected iterate, when the instance knows θ*.
    pub fn error_vs_theta_star(&self) -> Option<f64> {
        let best = self.best.as_ref()?;
        let star = self.theta_star.as_deref()?;
        Some(vecops::dist(&best.theta, star))
    }

    /// Writes the trajectory CSV:
    /// `iter,theta_1..theta_m,gmap_norm,psi_tilde,wall_ms`, followed by a
    /// summary block `best_iter,best_theta_*,best_value[,error_vs_theta_star]`
    /// (the error column appears when θ* is known).
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        self.write_csv_impl(out, true)
    }

    /// [`Self::write_csv`] with the wall-clock column left empty — timing is
    /// the one run-to-run nondeterministic field, so byte-identical output
    /// checks use this variant.
    pub fn write_csv_without_timing<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        self.write_csv_impl(out, false)
    }

    fn write_csv_impl<W: std::io::Write>(&self, out: &mut W, with_wall: bool) -> Result<()> {
        let m = self.upper_dim;
        write!(out, "iter")?;
        for j in 1..=m {
            write!(out, ",theta_{j}")?;
        }
        writeln!(out, ",gmap_norm,psi_tilde,wall_ms")?;
        for rec in &self.records {
            write!(out, "{}", rec.iter)?;
            for v in &rec.theta {
                write!(out, ",{v}")?;
            }
            match rec.gmap_norm {
                Some(gn) => write!(out, ",{gn}")?,
                None => write!(out, ",")?,
            }
            write!(out, ",{}", rec.psi_tilde)?;
            if with_wall {
                writeln!(out, ",{}", rec.wall_ms)?;
            } else {
                writeln!(out, ",")?;
            }
        }
        if let Some(best) = &self.best {
            write!(out, "best_iter")?;
            for j in 1..=m {
                write!(out, ",best_theta_{j}")?;
            }
            write!(out, ",best_value")?;
            if self.theta_star.is_some() {
                write!(out, ",error_vs_theta_star")?;
            }
            writeln!(out)?;
            write!(out, "{}", best.index)?;
            for v in &best.theta {
                write!(out, ",{v}")?;
            }
            write!(out, ",{}", best.value)?;
            if self.theta_star.is_some() {
                write!(out, ",{}", self.error_vs_theta_star().expect("best and theta_star exist"))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// An aborted outer run: the failure, where it happened, and everything
/// recorded up to that point.
#[derive(Debug)]
pub struct OuterAbort {
    /// Outer iteration at which the run stopped.
    pub iter: usize,
    pub cause: SqgError,
    /// Records completed before the abort; `best` is never set.
    pub partial: OuterTrajectory,
}

impl std::fmt::Display for OuterAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "outer loop aborted at iteration {} after {} completed records: {}",
            self.iter,
            self.partial.records().len(),
            self.cause
        )
    }
}

impl std::error::Error for OuterAbort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.cause)
    }
}

/// Uniform draw from the unit sphere S^{m−1}: normalized standard normal,
/// retried on an exactly-zero draw.
pub fn sample_unit_sphere(m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    assert!(m >= 1, "sphere dimension must be ≥ 1");
    loop {
        let u: Vec<f64> = (0..m).map(|_| crate::sampler::std_normal(rng)).collect();
        let norm = vecops::norm(&u);
        if norm > 0.0 {
            return u.iter().map(|v| v / norm).collect();
        }
    }
}

/// The two-point sphere-smoothing gradient estimator
/// `(m / 2ρb_u) Σ_t (values_plus[t] − values_minus[t]) · directions[t]`.
pub fn two_point_estimator(
    values_plus: &[f64],
    values_minus: &[f64],
    directions: &[Vec<f64>],
    rho: f64,
    m: usize,
) -> Result<Vec<f64>> {
    let b_u = directions.len();
    if b_u == 0 || values_plus.len() != b_u || values_minus.len() != b_u {
        return Err(SqgError::invalid(format!(
            "two_point_estimator length mismatch: plus={}, minus={}, directions={}",
            values_plus.len(),
            values_minus.len(),
            b_u
        )));
    }
    if directions.iter().any(|u| u.len() != m) {
        return Err(SqgError::invalid(format!(
            "two_point_estimator requires every direction to have dimension {m}"
        )));
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(SqgError::invalid(format!(
            "rho must be positive and finite, got {rho}"
        )));
    }
    let scale = m as f64 / (2.0 * rho * b_u as f64);
    let mut g = vec![0.0; m];
    for t in 0..b_u {
        let w = scale * (values_plus[t] - values_minus[t]);
        vecops::scaled_add_assign(&mut g, w, &directions[t]);
    }
    Ok(g)
}

/// Resizes a Langevin config to yield at least `total` samples, preserving
/// its kinetics. Strict-i.i.d. configs stay strict (one chain per sample);
/// thinned configs keep their chain count and extend the per-chain yield.
fn batch_config_for(total: usize, base: &LangevinConfig) -> LangevinConfig {
    let mut cfg = base.clone();
    if base.samples_per_chain == 1 {
        cfg.n_chains = total;
    } else {
        cfg.samples_per_chain = total.div_ceil(base.n_chains);
    }
    cfg
}

/// Everything one surrogate query produces.
struct QueryOutcome {
    value: f64,
    beta_hat: f64,
    /// The fresh batch, when this query drew one itself.
    fresh: Option<GibbsSampleBatch>,
    solve: Option<GibbsSampleBatch>,
}

struct QueryPlan<'a> {
    problem: &'a BilevelProblem,
    sq: SqConfig,
    langevin: &'a LangevinConfig,
    tail: Tail,
    calib_safety: f64,
    calib_floor: f64,
}

impl QueryPlan<'_> {
    /// One full surrogate query: solve batch → calibrate B → PSGD for β̂ →
    /// fresh batch → φ(β̂). `shared` short-circuits both draws with
    /// already-drawn batches (center-batch reuse); `fresh_factor` scales the
    /// fresh budget (the selection pass passes 4).
    #[allow(clippy::too_many_arguments)]
    fn run(
        &self,
        theta_eval: &[f64],
        sample_at: &[f64],
        solve_seed: u64,
        fresh_seed: u64,
        shared: Option<(&GibbsSampleBatch, &GibbsSampleBatch)>,
        warm_beta: Option<f64>,
        fresh_factor: usize,
        keep_batches: bool,
    ) -> Result<QueryOutcome> {
        let l = self.sq.inner_iters;
        let (solve_store, fresh_store) = match shared {
            Some(_) => (None, None),
            None => {
                let solve_cfg = batch_config_for(l, self.langevin);
                let solve = sample_gibbs(self.problem, sample_at, &solve_cfg, solve_seed)?;
                let m_total = self.langevin.total_samples() * fresh_factor;
                let fresh_cfg = batch_config_for(m_total, self.langevin);
                let fresh = sample_gibbs(self.problem, sample_at, &fresh_cfg, fresh_seed)?;
                (Some(solve), Some(fresh))
            }
        };
        let (solve_batch, fresh_batch): (&GibbsSampleBatch, &GibbsSampleBatch) = match shared {
            Some((solve, fresh)) => (solve, fresh),
            None => (
                solve_store.as_ref().expect("drawn above"),
                fresh_store.as_ref().expect("drawn above"),
            ),
        };

        let b = calibrate_beta_bound(
            theta_eval,
            solve_batch,
            self.problem,
            self.calib_safety,
            self.calib_floor,
        )?;
        let mut sq = self.sq.clone();
        sq.tail = self.tail;
        sq.beta_bound = b;
        sq.beta_init = warm_beta.unwrap_or(self.sq.beta_init).clamp(-b, b);

        let n_rows = solve_batch.len();
        let mut row = 0usize;
        let beta_hat = psgd_beta(
            theta_eval,
            |theta, _rng| {
                let v = self.problem.f(theta, solve_batch.row(row % n_rows));
                row += 1;
                Ok(v)
            },
            &sq,
            solve_seed,
        )?;

        let est = sq_estimate(theta_eval, beta_hat, fresh_batch, sq.delta, self.tail, self.problem)?;
        if !est.value.is_finite() {
            return Err(SqgError::invalid(format!(
                "surrogate estimate became non-finite at θ = {theta_eval:?}"
            )));
        }
        let (fresh, solve) = if keep_batches {
            (fresh_store, solve_store)
        } else {
            (None, None)
        };
        Ok(QueryOutcome {
            value: est.value,
            beta_hat,
            fresh,
            solve,
        })
    }
}

/// Runs the projected zeroth-order loop with minima selection.
///
/// Each iteration: interiorize (or keep) the center, draw `b_u` sphere
/// directions, query the surrogate at the 2·b_u perturbed points (in
/// parallel, each on its own derived stream), form the two-point estimate,
/// take the projected step, and record the iterate together with a center
/// surrogate value and the gradient-mapping norm. After the loop every
/// recorded iterate is re-evaluated with a 4× fresh budget and the best
/// (lowest surrogate value — both senses minimize their tail objective) is
/// selected.
///
/// # Errors
///
/// [`OuterAbort`] carries the failing iteration, the underlying error, and
/// the partial trajectory. Divergent sampling and non-finite estimates are
/// the expected abort causes; config validation failures abort at iteration
/// 0 with an empty trajectory.
pub fn pszo_minsel(
    problem: &BilevelProblem,
    config: &OuterConfig,
) -> std::result::Result<OuterTrajectory, Box<OuterAbort>> {
    let m = problem.upper_dim();
    let empty = |cause: SqgError| {
        Box::new(OuterAbort {
            iter: 0,
            cause,
            partial: OuterTrajectory {
                records: Vec::new(),
                best: None,
                theta_star: problem.theta_star().map(<[f64]>::to_vec),
                upper_dim: m,
            },
        })
    };
    if let Err(e) = config.validate(problem) {
        return Err(empty(e));
    }
    let tail = match problem.sense() {
        Sense::Pessimistic => Tail::Upper,
        Sense::Optimistic => Tail::Lower,
    };
    if config.sq.tail != tail {
        log::debug!(
            "outer loop overrides sq.tail to {:?} to match the problem sense",
            tail
        );
    }
    let interior: Option<InteriorizedDomain> = match config.boundary_mode {
        BoundaryMode::Interiorize => {
            match domain::interiorize(problem.domain(), config.rho) {
                Ok(i) => Some(i),
                Err(e) => return Err(empty(e)),
            }
        }
        BoundaryMode::ClampEvaluate => None,
    };
    let plan = QueryPlan {
        problem,
        sq: config.sq.clone(),
        langevin: &config.langevin,
        tail,
        calib_safety: config.calib_safety,
        calib_floor: config.calib_floor,
    };

    let mut theta = match domain::project(problem.domain(), &config.theta0) {
        Ok(t) => t,
        Err(e) => return Err(empty(e)),
    };
    let mut records: Vec<OuterRecord> = Vec::with_capacity(config.n_outer + 1);
    let mut warm: [Option<f64>; 3] = [None, None, None]; // +, −, center
    let warm_of = |warm: &[Option<f64>; 3], slot: usize, on: bool| -> Option<f64> {
        if on {
            warm[slot]
        } else {
            None
        }
    };
    let seed = config.seed;
    let b_u = config.batch_directions;

    let abort = |n: usize, cause: SqgError, records: Vec<OuterRecord>| {
        Box::new(OuterAbort {
            iter: n,
            cause,
            partial: OuterTrajectory {
                records,
                best: None,
                theta_star: problem.theta_star().map(<[f64]>::to_vec),
                upper_dim: m,
            },
        })
    };

    for n in 0..config.n_outer {
        let t_start = Instant::now();
        let theta_bar = match &interior {
            Some(i) => match i.project(&theta) {
                Ok(t) => t,
                Err(e) => return Err(abort(n, e, records)),
            },
            None => theta.clone(),
        };

        // Center query: supplies the recorded ψ̃(θ_n) and, under batch
        // reuse, the shared solve/fresh batches for this iteration.
        let center = plan.run(
            &theta_bar,
            &theta_bar,
            seedstream::derive(seed, &[role::CENTER, n as u64, 0]),
            seedstream::derive(seed, &[role::CENTER, n as u64, 1]),
            None,
            warm_of(&warm, 2, config.warm_start_beta),
            1,
            config.reuse_center_batch,
        );
        let center = match center {
            Ok(c) => c,
            Err(e) => return Err(abort(n, e, records)),
        };
        let shared = if config.reuse_center_batch {
            Some((
                center.solve.as_ref().expect("kept by keep_batches"),
                center.fresh.as_ref().expect("kept by keep_batches"),
            ))
        } else {
            None
        };

        let directions: Vec<Vec<f64>> = (0..b_u)
            .map(|t| {
                let mut rng = seedstream::stream(seed, &[role::DIRECTION, n as u64, t as u64]);
                sample_unit_sphere(m, &mut rng)
            })
            .collect();

        // 2·b_u perturbed queries, schedule-independent: index q encodes
        // (direction t, sign), and every query owns derived streams.
        let query_results: Vec<Result<QueryOutcome>> = (0..2 * b_u)
            .into_par_iter()
            .map(|q| {
                let (t, sign) = (q / 2, q % 2); // sign 0 = plus, 1 = minus
                let s = if sign == 0 { config.rho } else { -config.rho };
                let mut point = theta_bar.clone();
                vecops::scaled_add_assign(&mut point, s, &directions[t]);
                if interior.is_none() {
                    point = domain::project(problem.domain(), &point)?;
                } else {
                    debug_assert!(
                        problem.domain().contains(&point, 1e-9),
                        "interiorized perturbation left the domain"
                    );
                }
                plan.run(
                    &point,
                    &point,
                    seedstream::derive(seed, &[role::QUERY_SOLVE, n as u64, t as u64, sign as u64]),
                    seedstream::derive(seed, &[role::QUERY_FRESH, n as u64, t as u64, sign as u64]),
                    shared,
                    warm_of(&warm, sign, config.warm_start_beta),
                    1,
                    false,
                )
            })
            .collect();

        let mut values_plus = Vec::with_capacity(b_u);
        let mut values_minus = Vec::with_capacity(b_u);
        let mut beta_sums = [0.0_f64; 2];
        for (q, res) in query_results.into_iter().enumerate() {
            match res {
                Ok(out) => {
                    if q % 2 == 0 {
                        values_plus.push(out.value);
                    } else {
                        values_minus.push(out.value);
                    }
                    beta_sums[q % 2] += out.beta_hat;
                }
                Err(e) => return Err(abort(n, e, records)),
            }
        }
        if config.warm_start_beta {
            warm[0] = Some(beta_sums[0] / b_u as f64);
            warm[1] = Some(beta_sums[1] / b_u as f64);
            warm[2] = Some(center.beta_hat);
        }

        let gtilde =
            match two_point_estimator(&values_plus, &values_minus, &directions, config.rho, m) {
                Ok(g) => g,
                Err(e) => return Err(abort(n, e, records)),
            };
        if !vecops::all_finite(&gtilde) {
            return Err(abort(
                n,
                SqgError::invalid("two-point estimate became non-finite"),
                records,
            ));
        }
        // Triangle-inequality sanity cap on the estimator norm.
        let max_gap = values_plus
            .iter()
            .zip(&values_minus)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0_f64, f64::max);
        let cap = m as f64 / (2.0 * config.rho) * max_gap;
        assert!(
            vecops::norm(&gtilde) <= cap + 1e-9,
            "estimator norm {} exceeds its triangle bound {}",
            vecops::norm(&gtilde),
            cap
        );

        let gmap = match domain::gradient_mapping(problem.domain(), &theta, &gtilde, config.eta) {
            Ok(gm) => gm,
            Err(e) => return Err(abort(n, e, records)),
        };
        let mut next = theta_bar.clone();
        vecops::scaled_add_assign(&mut next, -config.eta, &gtilde);
        let next = match domain::project(problem.domain(), &next) {
            Ok(t) => t,
            Err(e) => return Err(abort(n, e, records)),
        };

        records.push(OuterRecord {
            iter: n,
            theta: theta.clone(),
            gtilde: Some(gtilde),
            gmap_norm: Some(vecops::norm(&gmap)),
            psi_tilde: center.value,
            wall_ms: t_start.elapsed().as_secs_f64() * 1e3,
        });
        theta = next;
    }

    // Final iterate: record it with a center query but no update fields.
    let t_start = Instant::now();
    let n = config.n_outer;
    let theta_bar = match &interior {
        Some(i) => match i.project(&theta) {
            Ok(t) => t,
            Err(e) => return Err(abort(n, e, records)),
        },
        None => theta.clone(),
    };
    let center = plan.run(
        &theta_bar,
        &theta_bar,
        seedstream::derive(seed, &[role::CENTER, n as u64, 0]),
        seedstream::derive(seed, &[role::CENTER, n as u64, 1]),
        None,
        warm_of(&warm, 2, config.warm_start_beta),
        1,
        false,
    );
    let center = match center {
        Ok(c) => c,
        Err(e) => return Err(abort(n, e, records)),
    };
    records.push(OuterRecord {
        iter: n,
        theta: theta.clone(),
        gtilde: None,
        gmap_norm: None,
        psi_tilde: center.value,
        wall_ms: t_start.elapsed().as_secs_f64() * 1e3,
    });

    // Minima selection: re-evaluate every recorded iterate at 4× the fresh
    // budget with independent streams and a cold β start, then take the
    // lowest value (ties favor the earliest iterate).
    let reevals: Vec<Result<QueryOutcome>> = records
        .par_iter()
        .map(|rec| {
            plan.run(
                &rec.theta,
                &rec.theta,
                seedstream::derive(seed, &[role::REEVAL, rec.iter as u64, 0]),
                seedstream::derive(seed, &[role::REEVAL, rec.iter as u64, 1]),
                None,
                None,
                4,
                false,
            )
        })
        .collect();
    let mut best: Option<BestIterate> = None;
    for (i, res) in reevals.into_iter().enumerate() {
        let out = match res {
            Ok(o) => o,
            Err(e) => return Err(abort(records[i].iter, e, records)),
        };
        let better = best.as_ref().map_or(true, |b| out.value < b.value);
        if better {
            best = Some(BestIterate {
                index: i,
                theta: records[i].theta.clone(),
                value: out.value,
            });
        }
    }

    Ok(OuterTrajectory {
        records,
        best,
        theta_star: problem.theta_star().map(<[f64]>::to_vec),
        upper_dim: m,
    })
}

/// Gradient-mapping norms ‖G_Θ(θ_n, g̃_ρ(θ_n); η)‖ recomputed from the
/// recorded estimates at a caller-chosen step size η (pass the run's own η
/// to reproduce the recorded values). Records without an estimate — the
/// final iterate — are skipped. The minimum over the sequence is the
/// headline stationarity proxy.
pub fn stationarity_report(
    trajectory: &OuterTrajectory,
    problem: &BilevelProblem,
    eta: f64,
) -> Result<Vec<f64>> {
    if trajectory.records().is_empty() {
        return Err(SqgError::invalid(
            "stationarity_report requires a nonempty trajectory",
        ));
    }
    trajectory
        .records()
        .iter()
        .filter_map(|rec| {
            rec.gtilde.as_ref().map(|g| {
                domain::gradient_mapping(problem.domain(), &rec.theta, g, eta)
                    .map(|gm| vecops::norm(&gm))
            })
        })
        .collect()
}

//! Experiment configuration: the JSON schema consumed by `sqg run`, the
//! per-experiment defaults emitted by `sqg print-defaults`, and structural
//! validation shared by `run` and `validate`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, ensure, Result};
use serde::{Deserialize, Serialize};
use sqg_core::{
    HypercleanSpec, LambdaRule, LangevinConfig, OuterConfig, PenaltyConfig, PenaltyVariant, Sense,
    SqConfig, SweepConfig, Tail,
};

/// The experiment families the harness can dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    /// Single toy instance, optimistic sense: mean best-iterate error.
    ToyOptimistic,
    /// Single toy instance, pessimistic sense.
    ToyPessimistic,
    /// Ambient sweep d ∈ {…} with full intrinsic dimension k = d−1.
    DimSweep,
    /// Ambient sweep at a fixed intrinsic dimension k.
    FixedK,
    /// Surrogate-vs-exact error across a δ ladder with λ tied to δ.
    ApproxSweep,
    /// Sampler moment checks against closed-form / quadrature oracles.
    SamplerCheck,
    /// Synthetic data-weighting pipeline demo (clean data sanity run).
    Hyperclean,
    /// Zeroth-order solver vs the two penalty-descent baselines.
    BaselineCompare,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::ToyOptimistic,
        Experiment::ToyPessimistic,
        Experiment::DimSweep,
        Experiment::FixedK,
        Experiment::ApproxSweep,
        Experiment::SamplerCheck,
        Experiment::Hyperclean,
        Experiment::BaselineCompare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::ToyOptimistic => "ToyOptimistic",
            Experiment::ToyPessimistic => "ToyPessimistic",
            Experiment::DimSweep => "DimSweep",
            Experiment::FixedK => "FixedK",
            Experiment::ApproxSweep => "ApproxSweep",
            Experiment::SamplerCheck => "SamplerCheck",
            Experiment::Hyperclean => "Hyperclean",
            Experiment::BaselineCompare => "BaselineCompare",
        }
    }

    /// Methods reported by this experiment, in summary order.
    pub fn methods(self) -> &'static [&'static str] {
        match self {
            Experiment::ApproxSweep => &["sq-gibbs"],
            Experiment::SamplerCheck => &["lmc"],
            Experiment::BaselineCompare => &["pszo-minsel", "v-pbgd", "g-pbgd"],
            _ => &["pszo-minsel"],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = anyhow::Error;

    /// Case- and separator-insensitive: `DimSweep`, `dim-sweep`, and
    /// `dim_sweep` all parse.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| *c != '-' && *c != '_')
            .flat_map(char::to_lowercase)
            .collect();
        for e in Experiment::ALL {
            if e.name().to_lowercase() == key {
                return Ok(e);
            }
        }
        bail!(
            "unknown experiment {s:?}; expected one of {}",
            Experiment::ALL.map(Experiment::name).join(", ")
        )
    }
}

/// Which bilevel instances the experiment runs on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemParams {
    /// Ambient lower-level dimensions, one setting per entry.
    pub d: Vec<usize>,
    /// Minimizer-manifold dimension; `null` means k = d − 1 per setting.
    pub k: Option<usize>,
    pub sense: Sense,
    /// Dataset shape for the data-weighting demo; ignored elsewhere.
    #[serde(default)]
    pub hyperclean: Option<HypercleanSpec>,
}

/// δ ladder and temperature rule for the approximation sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParams {
    /// Tail levels, each in (0, 1); at least two for a slope.
    pub deltas: Vec<f64>,
    pub rule: LambdaRule,
    /// Per-row sampling budget; `n_seeds` and `seed` are overridden by the
    /// harness (one repetition per configured seed).
    pub config: SweepConfig,
}

/// Solver settings shared across the experiment's settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodParams {
    /// Zeroth-order outer loop (with its nested inner-solver and sampler
    /// settings). `theta0` and `seed` apply as given to the toy instances;
    /// the data-weighting demo starts from the zero vector instead.
    pub outer: OuterConfig,
    /// Penalty-descent settings; required by BaselineCompare (the variant
    /// field is overridden per baseline), ignored elsewhere.
    #[serde(default)]
    pub penalty: Option<PenaltyConfig>,
    /// When set, each setting's fresh-chain count becomes
    /// `max(2, round(sample_budget / d))`, holding the per-query
    /// fresh-sample budget (chains × ambient dimension) fixed across a
    /// sweep instead of the chain count.
    #[serde(default)]
    pub sample_budget: Option<usize>,
    /// Approximation-sweep settings; required by ApproxSweep, ignored
    /// elsewhere.
    #[serde(default)]
    pub sweep: Option<SweepParams>,
}

/// One fully self-describing experiment: everything `sqg run` needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub problem: ProblemParams,
    pub method: MethodParams,
    /// Master seeds, one independent run each; must be distinct.
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    /// Structural checks that need no filesystem access. Numeric limits of
    /// the solvers themselves are re-checked per run by the library and any
    /// violation lands in the per-run status column.
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.seeds.is_empty(), "seeds must be nonempty");
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        ensure!(
            sorted.len() == self.seeds.len(),
            "seeds must be distinct (each run owns its derived streams and output files)"
        );
        ensure!(
            !self.out_dir.as_os_str().is_empty(),
            "out_dir must be a nonempty path"
        );

        let uses_toy = !matches!(
            self.experiment,
            Experiment::SamplerCheck | Experiment::Hyperclean
        );
        if uses_toy {
            ensure!(!self.problem.d.is_empty(), "problem.d must be nonempty");
            for &d in &self.problem.d {
                ensure!(d >= 2, "toy instances need ambient dimension d ≥ 2, got {d}");
                if let Some(k) = self.problem.k {
                    ensure!(
                        (1..d).contains(&k),
                        "intrinsic dimension k = {k} must satisfy 1 ≤ k ≤ d−1 (d = {d})"
                    );
                }
            }
        }

        let o = &self.method.outer;
        ensure!(o.theta0.len() == 1, "toy instances take a scalar θ (theta0 of length 1)");
        ensure!(o.batch_directions >= 1, "outer.batch_directions must be ≥ 1");
        ensure!(o.rho > 0.0 && o.rho.is_finite(), "outer.rho must be positive");
        ensure!(o.eta > 0.0 && o.eta.is_finite(), "outer.eta must be positive");
        ensure!(
            o.sq.delta > 0.0 && o.sq.delta <= 0.5,
            "outer.sq.delta must lie in (0, 0.5], got {}",
            o.sq.delta
        );
        ensure!(
            o.langevin.lambda > 0.0 && o.langevin.step_size > 0.0,
            "outer.langevin needs positive lambda and step_size"
        );
        ensure!(o.langevin.n_chains >= 1, "outer.langevin.n_chains must be ≥ 1");

        match self.experiment {
            Experiment::ApproxSweep => {
                let Some(sweep) = &self.method.sweep else {
                    bail!("ApproxSweep requires method.sweep");
                };
                ensure!(
                    sweep.deltas.len() >= 2,
                    "ApproxSweep needs at least two δ values for a slope"
                );
                for &delta in &sweep.deltas {
                    ensure!(
                        delta > 0.0 && delta < 1.0,
                        "sweep δ must lie in (0, 1), got {delta}"
                    );
                }
                ensure!(
                    self.problem.d.len() == 1,
                    "ApproxSweep runs on a single instance; problem.d must have one entry"
                );
                sweep
                    .config
                    .validate()
                    .map_err(|e| anyhow::anyhow!("method.sweep.config: {e}"))?;
            }
            Experiment::Hyperclean => {
                let Some(spec) = &self.problem.hyperclean else {
                    bail!("Hyperclean requires problem.hyperclean");
                };
                spec.validate()
                    .map_err(|e| anyhow::anyhow!("problem.hyperclean: {e}"))?;
            }
            Experiment::BaselineCompare => {
                let Some(p) = &self.method.penalty else {
                    bail!("BaselineCompare requires method.penalty");
                };
                p.validate()
                    .map_err(|e| anyhow::anyhow!("method.penalty: {e}"))?;
            }
            _ => {}
        }
        Ok(())
    }
}

/// The toy-family outer loop the experiments share: δ = 0.2 tail, 100-chain
/// solver batches, 64 fresh chains at λ = 0.01 with step 0.004 and 750-step
/// burn-in, 4 probe directions, ρ = 0.1, η = 0.05, θ₀ = 1.
fn toy_outer() -> OuterConfig {
    let mut sq = SqConfig::new(Tail::Lower);
    sq.delta = 0.2;
    sq.inner_iters = 100;
    let langevin = LangevinConfig::strict_iid(0.01, 0.004, 750, 64);
    let mut outer = OuterConfig::new(vec![1.0], sq, langevin);
    outer.n_outer = 500;
    outer.batch_directions = 4;
    outer.rho = 0.1;
    outer.eta = 0.05;
    outer
}

/// Complete, runnable defaults for an experiment — what `print-defaults`
/// emits. Budgets are desk-scale: minutes per experiment on one core.
pub fn default_config(experiment: Experiment) -> ExperimentConfig {
    let mut problem = ProblemParams {
        d: vec![2],
        k: Some(1),
        sense: Sense::Optimistic,
        hyperclean: None,
    };
    let mut method = MethodParams {
        outer: toy_outer(),
        penalty: None,
        sample_budget: None,
        sweep: None,
    };
    let mut seeds: Vec<u64> = (0..10).collect();

    match experiment {
        Experiment::ToyOptimistic => {}
        Experiment::ToyPessimistic => {
            problem.d = vec![5, 10];
            problem.k = None;
            problem.sense = Sense::Pessimistic;
            method.outer.n_outer = 400;
        }
        Experiment::DimSweep => {
            problem.d = vec![2, 5, 10, 20];
            problem.k = None;
            method.outer.n_outer = 400;
            method.sample_budget = Some(128);
        }
        Experiment::FixedK => {
            problem.d = vec![5, 10, 20, 30];
            problem.k = Some(1);
            method.outer.n_outer = 400;
            seeds = (0..5).collect();
        }
        Experiment::ApproxSweep => {
            method.sweep = Some(SweepParams {
                deltas: vec![0.2, 0.1, 0.05, 0.025],
                rule: LambdaRule::PowerLaw {
                    coeff: 0.02,
                    exponent: 2.0,
                },
                // Diffuse starts need the default 12-e-fold burn-in; 400
                // samples per row keeps the coldest rung affordable.
                config: SweepConfig {
                    samples: 400,
                    ..SweepConfig::default()
                },
            });
            seeds = (0..5).collect();
        }
        Experiment::SamplerCheck => {
            seeds = vec![42];
        }
        Experiment::Hyperclean => {
            problem.hyperclean = Some(HypercleanSpec {
                n_train: 60,
                n_val: 30,
                n_test: 200,
                pollute_rate: 0.0,
                feature_dim: 5,
                ridge: 1e-2,
                weight_bound: 3.0,
                data_seed: 7,
            });
            // The weighting vector lives in R^60; keep the walk short and
            // the sampler light — the demo checks plumbing, not rates.
            method.outer.n_outer = 40;
            method.outer.batch_directions = 2;
            method.outer.rho = 0.2;
            method.outer.eta = 0.2;
            method.outer.sq.inner_iters = 60;
            method.outer.langevin = LangevinConfig::strict_iid(0.01, 0.002, 600, 32);
            seeds = (0..3).collect();
        }
        Experiment::BaselineCompare => {
            let mut penalty = PenaltyConfig::new(PenaltyVariant::ValuePenalty);
            penalty.n_iters = 400;
            method.penalty = Some(penalty);
        }
    }

    let dir_slug: String = experiment
        .name()
        .chars()
        .flat_map(|c| {
            if c.is_ascii_uppercase() {
                vec!['-', c.to_ascii_lowercase()]
            } else {
                vec![c]
            }
        })
        .skip(1)
        .collect();
    ExperimentConfig {
        experiment,
        problem,
        method,
        seeds,
        out_dir: PathBuf::from("out").join(dir_slug),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_default_config_validates_and_round_trips() {
        for e in Experiment::ALL {
            let cfg = default_config(e);
            cfg.validate().unwrap_or_else(|err| panic!("{e}: {err}"));
            let json = serde_json::to_string_pretty(&cfg).unwrap();
            let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
            assert_eq!(back, cfg, "JSON round-trip changed the {e} config");
        }
    }

    #[test]
    fn experiment_names_parse_flexibly() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert_eq!("dim-sweep".parse::<Experiment>().unwrap(), Experiment::DimSweep);
        assert_eq!("approx_sweep".parse::<Experiment>().unwrap(), Experiment::ApproxSweep);
        assert_eq!("SAMPLERCHECK".parse::<Experiment>().unwrap(), Experiment::SamplerCheck);
        assert!("mnist".parse::<Experiment>().is_err());
    }

    #[test]
    fn validation_rejects_malformed_configs() {
        let mut cfg = default_config(Experiment::ToyOptimistic);
        cfg.seeds.clear();
        assert!(cfg.validate().is_err(), "empty seeds must be rejected");

        let mut cfg = default_config(Experiment::ToyOptimistic);
        cfg.seeds = vec![3, 3];
        assert!(cfg.validate().is_err(), "duplicate seeds must be rejected");

        let mut cfg = default_config(Experiment::DimSweep);
        cfg.problem.k = Some(7);
        assert!(cfg.validate().is_err(), "k ≥ d must be rejected");

        let mut cfg = default_config(Experiment::ApproxSweep);
        cfg.method.sweep = None;
        assert!(cfg.validate().is_err(), "ApproxSweep needs sweep params");

        let mut cfg = default_config(Experiment::BaselineCompare);
        cfg.method.penalty = None;
        assert!(cfg.validate().is_err(), "BaselineCompare needs penalty params");

        let mut cfg = default_config(Experiment::ToyOptimistic);
        cfg.method.outer.sq.delta = 0.7;
        assert!(cfg.validate().is_err(), "tail level above 1/2 must be rejected");
    }
}

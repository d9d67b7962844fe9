//! Concrete bilevel problem instances.
//!
//! * [`make_toy`] — the sphere family: the lower-level solution set is a
//!   k-dimensional sphere whose radius depends on θ, so the hyper-objective
//!   is known in closed form while the minimizer set is genuinely
//!   non-singleton. This is the main benchmark.
//! * [`make_example26`] — a 2-D instance with a circular solution set, used
//!   by the sampler concentration diagnostics.
//! * [`make_quadratic`] — strongly convex lower level with a singleton
//!   solution; the degenerate sanity case every method must handle.
//! * [`make_hyperclean`] — synthetic data hyper-cleaning: a sigmoid-weighted
//!   logistic lower level over a persisted Gaussian-mixture dataset.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::UpperDomain;
use crate::error::{Result, SqgError};
use crate::problem::{BilevelProblem, BilevelProblemBuilder, Sense};
use crate::sampler::std_normal;
use crate::seedstream::{self, role};

/// Build seed for the constructor-time finite-difference gradient checks.
/// Fixed: instance construction is deterministic and side-effect free.
const GRADCHECK_SEED: u64 = 0x70B1;

// ---------------------------------------------------------------------------
// Toy sphere family
// ---------------------------------------------------------------------------

/// Parameters of the sphere-family instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToySpec {
    /// Ambient lower-level dimension d ≥ 2.
    pub d: usize,
    /// Solution-manifold dimension k, with 1 ≤ k ≤ d − 1.
    pub k: usize,
    pub sense: Sense,
}

impl ToySpec {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.k + 1 > self.d {
            return Err(SqgError::invalid(format!(
                "toy spec requires 1 ≤ k ≤ d − 1, got k = {}, d = {}",
                self.k, self.d
            )));
        }
        Ok(())
    }
}

/// The sphere-family instance.
///
/// With r² = Σ_{i ≤ k+1} xᵢ² and s² = Σ_{i > k+1} xᵢ²,
///
/// ```text
///     g(θ, x) = ¼ (r² − θ²)² − ½ r² + ½ s² ,
///     f(θ, x) = 2‖x‖ + ⟨x, u(θ)⟩ ,      u(θ) = (cos θ, sin θ, 0, …) ,
/// ```
///
/// over Θ = [−π, π]. The lower-level minimizers form the k-sphere
/// {r² = 1 + θ², x_{>k+1} = 0} with value g*(θ) = −¼ − θ²/2, and on it the
/// hyper-objective is closed-form: F_min(θ) = √(1+θ²) (optimistic) and
/// F_max(θ) = 3√(1+θ²) (pessimistic), both minimized at θ* = 0.
///
/// The trailing coordinates enter with +½s² rather than −½s²: a −½‖x‖² term
/// across *all* coordinates would make g unbounded below in the directions
/// off the leading block whenever d > k + 1 (no Gibbs measure, divergent
/// sampler), while the sign flip preserves the solution sphere, the lower
/// value, and the hyper-objective exactly. For k = d − 1 there is no
/// trailing block and the formula is the usual one.
pub fn make_toy(spec: ToySpec) -> Result<BilevelProblem> {
    spec.validate()?;
    let (d, k) = (spec.d, spec.k);
    let lead = k + 1;
    let name = format!(
        "toy-d{}-k{}-{}",
        d,
        k,
        match spec.sense {
            Sense::Pessimistic => "pessimistic",
            Sense::Optimistic => "optimistic",
        }
    );
    let domain = UpperDomain::boxed(vec![-std::f64::consts::PI], vec![std::f64::consts::PI])?;

    let r2 = move |x: &[f64]| x[..lead].iter().map(|v| v * v).sum::<f64>();
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();

    let builder = BilevelProblemBuilder::new(&name, 1, d, domain, spec.sense)
        .f(move |t, x| {
            let (c, s) = (t[0].cos(), t[0].sin());
            2.0 * norm(x) + c * x[0] + s * x[1]
        })
        .g(move |t, x| {
            let r2v = r2(x);
            let s2: f64 = x[lead..].iter().map(|v| v * v).sum();
            let gap = r2v - t[0] * t[0];
            0.25 * gap * gap - 0.5 * r2v + 0.5 * s2
        })
        .grad_x_g(move |t, x, out| {
            let w = r2(x) - t[0] * t[0] - 1.0;
            for i in 0..lead {
                out[i] = w * x[i];
            }
            for i in lead..x.len() {
                out[i] = x[i];
            }
        })
        .grad_theta_g(move |t, x| vec![-t[0] * (r2(x) - t[0] * t[0])])
        .grad_x_f(move |t, x| {
            let n = norm(x);
            let (c, s) = (t[0].cos(), t[0].sin());
            let mut out: Vec<f64> = if n > 0.0 {
                x.iter().map(|v| 2.0 * v / n).collect()
            } else {
                // Subgradient selection at the kink ‖x‖ = 0.
                vec![0.0; x.len()]
            };
            out[0] += c;
            out[1] += s;
            out
        })
        .grad_theta_f(move |t, x| vec![-t[0].sin() * x[0] + t[0].cos() * x[1]])
        .hess_x_g_vec(move |t, x, v| {
            let w = r2(x) - t[0] * t[0] - 1.0;
            let xv: f64 = x[..lead].iter().zip(&v[..lead]).map(|(a, b)| a * b).sum();
            let mut out = vec![0.0; x.len()];
            for i in 0..lead {
                out[i] = w * v[i] + 2.0 * xv * x[i];
            }
            for i in lead..x.len() {
                out[i] = v[i];
            }
            out
        })
        .mixed_theta_x_g_vec(move |t, x, v| {
            let xv: f64 = x[..lead].iter().zip(&v[..lead]).map(|(a, b)| a * b).sum();
            vec![-2.0 * t[0] * xv]
        })
        .closed_form_lower_value(|t| -0.25 - 0.5 * t[0] * t[0])
        .theta_star(vec![0.0]);

    let builder = match spec.sense {
        Sense::Optimistic => builder.closed_form_hyper(|t| (1.0 + t[0] * t[0]).sqrt()),
        Sense::Pessimistic => builder.closed_form_hyper(|t| 3.0 * (1.0 + t[0] * t[0]).sqrt()),
    };
    builder.build(GRADCHECK_SEED)
}

/// Quasi-uniform points on the toy instance's solution sphere at `theta`:
/// normalized Gaussian draws on the leading k+1 coordinates scaled to radius
/// √(1+θ²), zeros on the trailing block.
pub fn toy_manifold_points(spec: ToySpec, theta: f64, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let lead = spec.k + 1;
    let radius = (1.0 + theta * theta).sqrt();
    let mut rng = seedstream::stream(seed, &[role::INIT, 0x3A9F]);
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let u: Vec<f64> = (0..lead).map(|_| std_normal(&mut rng)).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let mut x = vec![0.0; spec.d];
        for i in 0..lead {
            x[i] = radius * u[i] / norm;
        }
        points.push(x);
    }
    Ok(points)
}

// ---------------------------------------------------------------------------
// Circular solution set in the plane
// ---------------------------------------------------------------------------

/// 2-D instance with g(θ, x) = ¼(‖x‖² − θ)² − ½‖x‖² over Θ = [0, 1]: the
/// lower-level minimizers form the circle ‖x‖² = θ + 1 (stationarity gives
/// (‖x‖² − θ − 1)·x = 0 and the origin is not a minimizer), with value
/// g*(θ) = −¼ − θ/2. f = ‖x‖ reads out the radius, which is what the
/// sampler concentration diagnostics measure.
pub fn make_example26() -> BilevelProblem {
    let domain = UpperDomain::boxed(vec![0.0], vec![1.0]).expect("static domain");
    BilevelProblemBuilder::new("circle-2d", 1, 2, domain, Sense::Optimistic)
        .f(|_t, x| (x[0] * x[0] + x[1] * x[1]).sqrt())
        .g(|t, x| {
            let n2 = x[0] * x[0] + x[1] * x[1];
            0.25 * (n2 - t[0]) * (n2 - t[0]) - 0.5 * n2
        })
        .grad_x_g(|t, x, out| {
            let w = x[0] * x[0] + x[1] * x[1] - t[0] - 1.0;
            out[0] = w * x[0];
            out[1] = w * x[1];
        })
        .grad_theta_g(|t, x| vec![-0.5 * (x[0] * x[0] + x[1] * x[1] - t[0])])
        .closed_form_lower_value(|t| -0.25 - 0.5 * t[0])
        .build(GRADCHECK_SEED)
        .expect("static instance must build")
}

// ---------------------------------------------------------------------------
// Strongly convex sanity instance
// ---------------------------------------------------------------------------

/// Singleton-solution sanity instance: g(θ, x) = ½‖x − θ·1‖², f = ‖x‖², so
/// S(θ) = {θ·1}, F(θ) = d·θ² for both senses, θ* = 0, Θ = [−2, 2]. Every
/// derivative callback is populated, making this the reference fixture for
/// the penalty baselines.
pub fn make_quadratic(d: usize, sense: Sense) -> BilevelProblem {
    assert!(d >= 1, "lower dimension must be ≥ 1");
    let domain = UpperDomain::boxed(vec![-2.0], vec![2.0]).expect("static domain");
    BilevelProblemBuilder::new(&format!("quadratic-d{d}"), 1, d, domain, sense)
        .f(|_t, x| x.iter().map(|v| v * v).sum())
        .g(|t, x| x.iter().map(|&xi| 0.5 * (xi - t[0]) * (xi - t[0])).sum())
        .grad_x_g(|t, x, out| {
            for (o, &xi) in out.iter_mut().zip(x) {
                *o = xi - t[0];
            }
        })
        .grad_theta_g(|t, x| vec![x.iter().map(|&xi| t[0] - xi).sum()])
        .grad_x_f(|_t, x| x.iter().map(|v| 2.0 * v).collect())
        .grad_theta_f(|_t, _x| vec![0.0])
        .hess_x_g_vec(|_t, _x, v| v.to_vec())
        .mixed_theta_x_g_vec(|_t, _x, v| vec![-v.iter().sum::<f64>()])
        .closed_form_lower_value(|_t| 0.0)
        .closed_form_hyper(move |t| d as f64 * t[0] * t[0])
        .theta_star(vec![0.0])
        .build(GRADCHECK_SEED)
        .expect("static instance must build")
}

// ---------------------------------------------------------------------------
// Synthetic data hyper-cleaning
// ---------------------------------------------------------------------------

/// Parameters of the synthetic hyper-cleaning instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypercleanSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Fraction of training labels flipped, in [0, 1).
    pub pollute_rate: f64,
    /// Feature dimension q (the model adds a bias, so x ∈ R^{q+1}).
    pub feature_dim: usize,
    /// Ridge coefficient η > 0 on the lower level; makes it strongly convex.
    pub ridge: f64,
    /// Radius of the upper-level ball Θ = Ball(0, B_w) over the per-example
    /// weight logits.
    pub weight_bound: f64,
    pub data_seed: u64,
}

impl Default for HypercleanSpec {
    fn default() -> Self {
        HypercleanSpec {
            n_train: 500,
            n_val: 50,
            n_test: 500,
            pollute_rate: 0.2,
            feature_dim: 10,
            ridge: 1e-2,
            weight_bound: 5.0,
            data_seed: 7,
        }
    }
}

impl HypercleanSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(SqgError::config("n_train and n_test must be ≥ 1"));
        }
        if self.n_val < 10 {
            return Err(SqgError::config("n_val must be ≥ 10"));
        }
        if !(0.0..1.0).contains(&self.pollute_rate) {
            return Err(SqgError::config(format!(
                "pollute_rate must lie in [0, 1), got {}",
                self.pollute_rate
            )));
        }
        if self.feature_dim == 0 {
            return Err(SqgError::config("feature_dim must be ≥ 1"));
        }
        if !(self.ridge > 0.0) {
            return Err(SqgError::config("ridge must be positive"));
        }
        if !(self.weight_bound > 0.0) {
            return Err(SqgError::config("weight_bound must be positive"));
        }
        Ok(())
    }
}

/// Paths of the persisted dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFiles {
    /// CSV with header `split,label,feat_1..feat_q`; train labels are the
    /// (possibly flipped) ones the lower level sees.
    pub data_csv: PathBuf,
    /// JSON manifest: spec echo plus flip bookkeeping.
    pub manifest_json: PathBuf,
}

/// One split of the generated data, in memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitData {
    /// Row-major feature matrix, `len = n · feature_dim`.
    pub features: Vec<f64>,
    /// Labels in {−1, +1}.
    pub labels: Vec<f64>,
}

impl SplitData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize, q: usize) -> &[f64] {
        &self.features[i * q..(i + 1) * q]
    }
}

/// The full generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypercleanDataset {
    pub feature_dim: usize,
    pub train: SplitData,
    /// Train labels before pollution (kept for evaluation only; the bilevel
    /// instance never sees them).
    pub train_clean_labels: Vec<f64>,
    pub flipped: Vec<usize>,
    pub val: SplitData,
    pub test: SplitData,
}

/// A hyper-cleaning instance: the bilevel problem, the persisted files, and
/// the in-memory dataset for evaluation.
#[derive(Debug, Clone)]
pub struct HypercleanInstance {
    pub problem: BilevelProblem,
    pub files: DatasetFiles,
    pub dataset: HypercleanDataset,
}

/// Numerically stable σ(t) = 1/(1+e^{−t}).
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable log(1 + e^{−m}) — the logistic loss at margin m.
fn log1p_exp_neg(m: f64) -> f64 {
    if m >= 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// Margin yᵢ·(wᵀφᵢ + b) for weights-plus-bias x.
fn margin(x: &[f64], feat: &[f64], label: f64) -> f64 {
    let q = feat.len();
    let z: f64 = x[..q].iter().zip(feat).map(|(w, p)| w * p).sum::<f64>() + x[q];
    label * z
}

/// Builds the synthetic hyper-cleaning instance and persists the dataset.
///
/// Data: balanced two-class Gaussian mixture with class means ±μ
/// (‖2μ‖ = 3, i.e. ≈ 93% Bayes accuracy), labels in {−1, +1}; a
/// `pollute_rate` fraction of training labels is flipped (binary labels, so
/// "uniform among wrong classes" degenerates to the flip). The bilevel
/// program is
///
/// ```text
///     upper  f(θ, x) = (1/n_val)  Σ_j  log(1 + exp(−y_j · x·φ̃_j))
///     lower  g(θ, x) = (1/n_train) Σ_i σ(θᵢ) · log(1 + exp(−ỹᵢ · x·φ̃ᵢ))
///                      + (η/2)‖x‖²
/// ```
///
/// with φ̃ = (φ, 1), x ∈ R^{q+1}, per-example weights σ(θᵢ), and
/// Θ = Ball(0, B_w). The ridge makes the lower level strongly convex (its
/// solution is a singleton), so this instance exercises the full pipeline —
/// sampling, inner solve, outer loop — rather than minima selection.
pub fn make_hyperclean(spec: &HypercleanSpec, out_dir: &Path) -> Result<HypercleanInstance> {
    spec.validate()?;
    let q = spec.feature_dim;
    let mu: Vec<f64> = vec![1.5 / (q as f64).sqrt(); q];

    let draw_split = |tag: u64, n: usize| -> SplitData {
        let mut rng = seedstream::stream(spec.data_seed, &[role::DATASET, tag]);
        let mut features = Vec::with_capacity(n * q);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let label = if i % 2 == 0 { 1.0 } else { -1.0 };
            for &m in &mu {
                features.push(label * m + std_normal(&mut rng));
            }
            labels.push(label);
        }
        SplitData { features, labels }
    };
    let mut train = draw_split(0, spec.n_train);
    let val = draw_split(1, spec.n_val);
    let test = draw_split(2, spec.n_test);

    let train_clean_labels = train.labels.clone();
    let n_flip = (spec.pollute_rate * spec.n_train as f64).round() as usize;
    let mut order: Vec<usize> = (0..spec.n_train).collect();
    {
        // Fisher–Yates with the dedicated pollution stream.
        use rand::Rng;
        let mut rng = seedstream::stream(spec.data_seed, &[role::DATASET, 3]);
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
    }
    let mut flipped: Vec<usize> = order.into_iter().take(n_flip).collect();
    flipped.sort_unstable();
    for &i in &flipped {
        train.labels[i] = -train.labels[i];
    }

    std::fs::create_dir_all(out_dir)?;
    let data_csv = out_dir.join(format!("hyperclean-{}.csv", spec.data_seed));
    let manifest_json = out_dir.join(format!("hyperclean-{}.manifest.json", spec.data_seed));
    {
        let mut out = std::io::BufWriter::new(std::fs::File::create(&data_csv)?);
        write!(out, "split,label")?;
        for j in 1..=q {
            write!(out, ",feat_{j}")?;
        }
        writeln!(out)?;
        let mut dump = |name: &str, split: &SplitData| -> Result<()> {
            for i in 0..split.len() {
                write!(out, "{name},{}", split.labels[i] as i64)?;
                for v in split.row(i, q) {
                    write!(out, ",{v}")?;
                }
                writeln!(out)?;
            }
            Ok(())
        };
        dump("train", &train)?;
        dump("val", &val)?;
        dump("test", &test)?;
    }
    {
        #[derive(Serialize)]
        struct Manifest<'a> {
            spec: &'a HypercleanSpec,
            n_flipped: usize,
            flipped_train_indices: &'a [usize],
            csv_schema: &'static str,
        }
        let manifest = Manifest {
            spec,
            n_flipped: flipped.len(),
            flipped_train_indices: &flipped,
            csv_schema: "split,label,feat_1..feat_q",
        };
        let mut f = std::fs::File::create(&manifest_json)?;
        serde_json::to_writer_pretty(&mut f, &manifest)
            .map_err(|e| SqgError::config(format!("manifest serialization failed: {e}")))?;
        writeln!(f)?;
    }

    let dataset = HypercleanDataset {
        feature_dim: q,
        train,
        train_clean_labels,
        flipped,
        val,
        test,
    };
    let problem = build_hyperclean_problem(spec, &dataset)?;
    Ok(HypercleanInstance {
        problem,
        files: DatasetFiles {
            data_csv,
            manifest_json,
        },
        dataset,
    })
}

fn build_hyperclean_problem(
    spec: &HypercleanSpec,
    dataset: &HypercleanDataset,
) -> Result<BilevelProblem> {
    let q = dataset.feature_dim;
    let xdim = q + 1;
    let n_train = dataset.train.len();
    let n_val = dataset.val.len();
    let eta = spec.ridge;
    let domain = UpperDomain::ball(vec![0.0; n_train], spec.weight_bound)?;

    let train = std::sync::Arc::new(dataset.train.clone());
    let val = std::sync::Arc::new(dataset.val.clone());

    let tr_g = train.clone();
    let tr_gx = train.clone();
    let tr_gt = train.clone();
    let tr_h = train.clone();
    let tr_m = train.clone();
    let val_f = val.clone();
    let val_gx = val;

    BilevelProblemBuilder::new(
        &format!("hyperclean-n{}-q{}", n_train, q),
        n_train,
        xdim,
        domain,
        Sense::Optimistic,
    )
    .f(move |_t, x| {
        let mut acc = 0.0;
        for i in 0..n_val {
            acc += log1p_exp_neg(margin(x, val_f.row(i, q), val_f.labels[i]));
        }
        acc / n_val as f64
    })
    .g(move |t, x| {
        let mut acc = 0.0;
        for i in 0..n_train {
            acc += sigmoid(t[i]) * log1p_exp_neg(margin(x, tr_g.row(i, q), tr_g.labels[i]));
        }
        acc / n_train as f64 + 0.5 * eta * x.iter().map(|v| v * v).sum::<f64>()
    })
    .grad_x_g(move |t, x, out| {
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = eta * xi;
        }
        let scale = 1.0 / n_train as f64;
        for i in 0..n_train {
            let feat = tr_gx.row(i, q);
            let y = tr_gx.labels[i];
            // d/dz log(1+e^{−yz}) = −y·σ(−yz)
            let c = scale * sigmoid(t[i]) * (-y) * sigmoid(-margin(x, feat, y));
            for j in 0..q {
                out[j] += c * feat[j];
            }
            out[q] += c;
        }
    })
    .grad_theta_g(move |t, x| {
        let scale = 1.0 / n_train as f64;
        (0..n_train)
            .map(|i| {
                let s = sigmoid(t[i]);
                scale
                    * s
                    * (1.0 - s)
                    * log1p_exp_neg(margin(x, tr_gt.row(i, q), tr_gt.labels[i]))
            })
            .collect()
    })
    .grad_x_f(move |_t, x| {
        let mut out = vec![0.0; x.len()];
        let scale = 1.0 / n_val as f64;
        for i in 0..n_val {
            let feat = val_gx.row(i, q);
            let y = val_gx.labels[i];
            let c = scale * (-y) * sigmoid(-margin(x, feat, y));
            for j in 0..q {
                out[j] += c * feat[j];
            }
            out[q] += c;
        }
        out
    })
    .grad_theta_f(move |_t, _x| vec![0.0; n_train])
    .hess_x_g_vec(move |t, x, v| {
        let mut out: Vec<f64> = v.iter().map(|vi| eta * vi).collect();
        let scale = 1.0 / n_train as f64;
        for i in 0..n_train {
            let feat = tr_h.row(i, q);
            let y = tr_h.labels[i];
            let p = sigmoid(-margin(x, feat, y));
            // second derivative of the loss in the margin: p(1−p)
            let fv: f64 = feat.iter().zip(&v[..q]).map(|(a, b)| a * b).sum::<f64>() + v[q];
            let c = scale * sigmoid(t[i]) * p * (1.0 - p) * fv;
            for j in 0..q {
                out[j] += c * feat[j];
            }
            out[q] += c;
        }
        out
    })
    .mixed_theta_x_g_vec(move |t, x, v| {
        let scale = 1.0 / n_train as f64;
        (0..n_train)
            .map(|i| {
                let feat = tr_m.row(i, q);
                let y = tr_m.labels[i];
                let s = sigmoid(t[i]);
                let c = (-y) * sigmoid(-margin(x, feat, y));
                let fv: f64 = feat.iter().zip(&v[..q]).map(|(a, b)| a * b).sum::<f64>() + v[q];
                scale * s * (1.0 - s) * c * fv
            })
            .collect()
    })
    .build(GRADCHECK_SEED)
}

/// Plain ridge-logistic fit by gradient descent: minimizes
/// `(1/n) Σ log(1+exp(−yᵢ·x·φ̃ᵢ)) + (η/2)‖x‖²` over x ∈ R^{q+1}. The
/// single-level oracle the hyper-cleaning demo compares against.
pub fn ridge_logistic_fit(split: &SplitData, q: usize, ridge: f64, iters: usize, step: f64) -> Vec<f64> {
    let n = split.len();
    let mut x = vec![0.0; q + 1];
    let mut grad = vec![0.0; q + 1];
    for _ in 0..iters {
        for (gj, &xj) in grad.iter_mut().zip(&x) {
            *gj = ridge * xj;
        }
        let scale = 1.0 / n as f64;
        for i in 0..n {
            let feat = split.row(i, q);
            let y = split.labels[i];
            let c = scale * (-y) * sigmoid(-margin(&x, feat, y));
            for j in 0..q {
                grad[j] += c * feat[j];
            }
            grad[q] += c;
        }
        for (xj, gj) in x.iter_mut().zip(&grad) {
            *xj -= step * gj;
        }
    }
    x
}

/// Fraction of `split` classified correctly by weights-plus-bias `x`.
pub fn classification_accuracy(x: &[f64], split: &SplitData, q: usize) -> f64 {
    let n = split.len();
    let correct = (0..n)
        .filter(|&i| margin(x, split.row(i, q), split.labels[i]) > 0.0)
        .count();
    correct as f64 / n as f64
}

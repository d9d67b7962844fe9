//! Compact convex upper-level domains and the projected gradient mapping.
//!
//! Only two domain shapes are supported — axis-aligned boxes and Euclidean
//! balls — because both admit exact O(m) projections. Exact projection is
//! load-bearing: the outer loop's stationarity measure and its feasibility
//! guarantee are both stated through `Proj_Θ`, so an approximate projection
//! would silently weaken every downstream claim.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SqgError};
use crate::vecops;

/// A compact convex feasible set for the upper-level variable θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum UpperDomain {
    /// Axis-aligned box `{θ : lo ≤ θ ≤ hi}` (componentwise).
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Euclidean ball `{θ : ‖θ − center‖ ≤ radius}`.
    Ball { center: Vec<f64>, radius: f64 },
}

impl UpperDomain {
    /// Builds a box domain, validating `lo.len() == hi.len()`, finiteness,
    /// and `lo[i] < hi[i]` (degenerate intervals are rejected: they make the
    /// interiorized set empty for every ρ > 0 and are never what an
    /// experiment config intends).
    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(SqgError::invalid(format!(
                "box bounds must be non-empty and equal-length, got lo.len()={} hi.len()={}",
                lo.len(),
                hi.len()
            )));
        }
        if !vecops::all_finite(&lo) || !vecops::all_finite(&hi) {
            return Err(SqgError::invalid("box bounds must be finite"));
        }
        for i in 0..lo.len() {
            if lo[i] >= hi[i] {
                return Err(SqgError::invalid(format!(
                    "box bound {i} is empty or degenerate: lo={} hi={}",
                    lo[i], hi[i]
                )));
            }
        }
        Ok(UpperDomain::Box { lo, hi })
    }

    /// Builds a symmetric box `[-b, b]^m`.
    pub fn symmetric_box(m: usize, b: f64) -> Result<Self> {
        UpperDomain::boxed(vec![-b; m], vec![b; m])
    }

    /// Builds a ball domain, validating finiteness and `radius > 0`.
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(SqgError::invalid("ball center must be non-empty"));
        }
        if !vecops::all_finite(&center) || !radius.is_finite() || radius <= 0.0 {
            return Err(SqgError::invalid(format!(
                "ball requires finite center and radius > 0, got radius={radius}"
            )));
        }
        Ok(UpperDomain::Ball { center, radius })
    }

    /// Ambient dimension `m`.
    pub fn dim(&self) -> usize {
        match self {
            UpperDomain::Box { lo, .. } => lo.len(),
            UpperDomain::Ball { center, .. } => center.len(),
        }
    }

    /// Whether `point` lies in the set, up to an absolute slack `tol ≥ 0`
    /// on the defining constraints.
    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        if point.len() != self.dim() {
            return false;
        }
        match self {
            UpperDomain::Box { lo, hi } => point
                .iter()
                .enumerate()
                .all(|(i, &p)| p >= lo[i] - tol && p <= hi[i] + tol),
            UpperDomain::Ball { center, radius } => {
                vecops::dist(point, center) <= radius + tol
            }
        }
    }
}

/// Euclidean projection of `point` onto `domain`.
///
/// Boxes clamp componentwise; balls rescale the offset from the center when
/// it is too long and leave interior points untouched.
///
/// # Errors
///
/// `InvalidArgument` when `point.len() != domain.dim()` or `point` contains
/// non-finite entries.
pub fn project(domain: &UpperDomain, point: &[f64]) -> Result<Vec<f64>> {
    if point.len() != domain.dim() {
        return Err(SqgError::invalid(format!(
            "projection dimension mismatch: domain has m={}, point has {}",
            domain.dim(),
            point.len()
        )));
    }
    if !vecops::all_finite(point) {
        return Err(SqgError::invalid("cannot project a non-finite point"));
    }
    Ok(match domain {
        UpperDomain::Box { lo, hi } => point
            .iter()
            .enumerate()
            .map(|(i, &p)| p.clamp(lo[i], hi[i]))
            .collect(),
        UpperDomain::Ball { center, radius } => {
            let d = vecops::dist(point, center);
            if d <= *radius {
                point.to_vec()
            } else {
                let scale = radius / d;
                center
                    .iter()
                    .zip(point)
                    .map(|(&c, &p)| c + scale * (p - c))
                    .collect()
            }
        }
    })
}

/// A domain shrunk by a margin ρ, so that every point of the shrunk set keeps
/// a full ρ-ball inside the original set.
///
/// The outer loop evaluates the surrogate at `θ ± ρu` with `‖u‖ = 1`;
/// projecting iterates onto the interiorized set first guarantees those
/// query points stay feasible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteriorizedDomain {
    original: UpperDomain,
    shrunk: UpperDomain,
    rho: f64,
}

impl InteriorizedDomain {
    /// The margin this set was built with.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// The original (unshrunk) domain.
    pub fn original(&self) -> &UpperDomain {
        &self.original
    }

    /// The shrunk domain as a plain [`UpperDomain`].
    pub fn shrunk(&self) -> &UpperDomain {
        &self.shrunk
    }

    /// Projection onto the shrunk set.
    pub fn project(&self, point: &[f64]) -> Result<Vec<f64>> {
        project(&self.shrunk, point)
    }
}

/// Shrinks `domain` by margin `rho`, erroring when the result would be empty.
///
/// * Box `[lo, hi]` → `[lo + ρ, hi − ρ]`; requires `hi[i] − lo[i] > 2ρ` for
///   every coordinate. (A box shrunk by ρ keeps ρ-balls inside because the
///   ∞-ball of radius ρ contains the Euclidean ρ-ball.)
/// * Ball of radius `r` → radius `r − ρ`; requires `r > ρ`.
///
/// # Errors
///
/// `Config` naming ρ and the offending extent when the shrunk set is empty,
/// and `InvalidArgument` for non-finite or negative ρ.
pub fn interiorize(domain: &UpperDomain, rho: f64) -> Result<InteriorizedDomain> {
    if !rho.is_finite() || rho < 0.0 {
        return Err(SqgError::invalid(format!(
            "interiorization margin must be finite and ≥ 0, got rho={rho}"
        )));
    }
    let shrunk = match domain {
        UpperDomain::Box { lo, hi } => {
            for i in 0..lo.len() {
                if hi[i] - lo[i] <= 2.0 * rho {
                    return Err(SqgError::config(format!(
                        "interiorizing by rho={rho} empties the box: coordinate {i} has \
                         extent {} ≤ 2·rho; shrink rho or widen the domain",
                        hi[i] - lo[i]
                    )));
                }
            }
            UpperDomain::Box {
                lo: lo.iter().map(|&l| l + rho).collect(),
                hi: hi.iter().map(|&h| h - rho).collect(),
            }
        }
        UpperDomain::Ball { center, radius } => {
            if *radius <= rho {
                return Err(SqgError::config(format!(
                    "interiorizing by rho={rho} empties the ball: radius {radius} ≤ rho; \
                     shrink rho or widen the domain"
                )));
            }
            UpperDomain::Ball {
                center: center.clone(),
                radius: radius - rho,
            }
        }
    };
    Ok(InteriorizedDomain {
        original: domain.clone(),
        shrunk,
        rho,
    })
}

/// The projected gradient mapping
/// `G_Θ(θ, g; η) = (θ − Proj_Θ(θ − η g)) / η`.
///
/// For unconstrained interior steps this reduces to `g` itself; at the
/// boundary it measures only the realizable part of the step, which is the
/// right stationarity certificate for constrained nonsmooth problems (a
/// point with a small gradient mapping cannot be improved much by one
/// projected step, regardless of how large the raw estimator is).
///
/// # Errors
///
/// `InvalidArgument` when `eta ≤ 0`, on dimension mismatch, or on
/// non-finite inputs.
pub fn gradient_mapping(
    domain: &UpperDomain,
    theta: &[f64],
    g: &[f64],
    eta: f64,
) -> Result<Vec<f64>> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(SqgError::invalid(format!(
            "gradient mapping requires eta > 0, got eta={eta}"
        )));
    }
    if theta.len() != g.len() {
        return Err(SqgError::invalid(format!(
            "gradient mapping dimension mismatch: theta has {}, g has {}",
            theta.len(),
            g.len()
        )));
    }
    let mut stepped = vec![0.0; theta.len()];
    vecops::scaled_add(theta, -eta, g, &mut stepped);
    let projected = project(domain, &stepped)?;
    Ok(theta
        .iter()
        .zip(&projected)
        .map(|(&t, &p)| (t - p) / eta)
        .collect())
}

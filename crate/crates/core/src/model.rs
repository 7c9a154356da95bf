//! Domain types: the full ensemble in `R^d`, its scalar projection along the
//! invariant mean-velocity direction, the migration functional, and the
//! canonical (descending) agent ordering.

use crate::error::{Error, Result};

/// Below this norm of `mean velocity - target` the system counts as
/// degenerate: the mean can never leave the target again and the projected
/// direction is undefined.
pub const DEGENERATE_MEAN_TOL: f64 = 1e-12;

/// Positions and velocities of `n` agents in `d` dimensions plus the shared
/// target velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    dim: usize,
    positions: Vec<Vec<f64>>,
    velocities: Vec<Vec<f64>>,
    target: Vec<f64>,
}

impl Ensemble {
    pub fn new(
        positions: Vec<Vec<f64>>,
        velocities: Vec<Vec<f64>>,
        target: Vec<f64>,
    ) -> Result<Self> {
        let dim = target.len();
        if dim == 0 {
            return Err(Error::invalid_input("dimension must be >= 1"));
        }
        if velocities.is_empty() {
            return Err(Error::invalid_input("at least one agent required"));
        }
        if positions.len() != velocities.len() {
            return Err(Error::invalid_input(format!(
                "{} positions vs {} velocities",
                positions.len(),
                velocities.len()
            )));
        }
        for v in positions.iter().chain(velocities.iter()) {
            if v.len() != dim {
                return Err(Error::invalid_input(format!(
                    "vector of length {} in a {}-dimensional ensemble",
                    v.len(),
                    dim
                )));
            }
        }
        Ok(Ensemble { dim, positions, velocities, target })
    }

    /// Ensemble at the origin with the given velocities, target zero.
    pub fn from_velocities(velocities: Vec<Vec<f64>>) -> Result<Self> {
        let dim = velocities.first().map(Vec::len).unwrap_or(0);
        let n = velocities.len();
        Ensemble::new(vec![vec![0.0; dim]; n], velocities, vec![0.0; dim])
    }

    pub fn n(&self) -> usize {
        self.velocities.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn velocities(&self) -> &[Vec<f64>] {
        &self.velocities
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn mean_velocity(&self) -> Vec<f64> {
        let n = self.n() as f64;
        let mut out = vec![0.0; self.dim];
        for v in &self.velocities {
            for (o, vi) in out.iter_mut().zip(v) {
                *o += vi / n;
            }
        }
        out
    }

    pub(crate) fn with_state(&self, positions: Vec<Vec<f64>>, velocities: Vec<Vec<f64>>) -> Self {
        Ensemble { dim: self.dim, positions, velocities, target: self.target.clone() }
    }
}

/// Scalar projections of the agent velocities along the invariant direction
/// `e = (mean(v) - target) / |mean(v) - target|`, together with the
/// orthogonal residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedState {
    /// `xi_i = <v_i - target, e>`.
    pub xi: Vec<f64>,
    /// Mean of `xi`; equals `|mean(v) - target|`, hence positive.
    pub xibar: f64,
    /// Unit direction of `mean(v) - target`.
    pub e: Vec<f64>,
    /// `w_i = (v_i - target) - xi_i e`, orthogonal to `e`.
    pub w: Vec<Vec<f64>>,
}

impl ProjectedState {
    /// Rebuild agent velocities: `v_i = target + xi_i e + w_i`.
    pub fn reconstruct_velocities(&self, target: &[f64]) -> Vec<Vec<f64>> {
        self.xi
            .iter()
            .zip(&self.w)
            .map(|(&xi, w)| {
                target
                    .iter()
                    .zip(&self.e)
                    .zip(w)
                    .map(|((&t, &e), &w)| t + xi * e + w)
                    .collect()
            })
            .collect()
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Project an ensemble onto the invariant mean-velocity axis.
///
/// Fails with [`Error::DegenerateMean`] when the mean velocity is within
/// [`DEGENERATE_MEAN_TOL`] of the target: in that case the mean is stuck at
/// the target for all time and every velocity decays there on its own.
pub fn project(ensemble: &Ensemble) -> Result<ProjectedState> {
    let vbar = ensemble.mean_velocity();
    let diff: Vec<f64> = vbar.iter().zip(ensemble.target()).map(|(v, t)| v - t).collect();
    let norm = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= DEGENERATE_MEAN_TOL {
        return Err(Error::DegenerateMean { norm, tol: DEGENERATE_MEAN_TOL });
    }
    let e: Vec<f64> = diff.iter().map(|x| x / norm).collect();
    let mut xi = Vec::with_capacity(ensemble.n());
    let mut w = Vec::with_capacity(ensemble.n());
    for v in ensemble.velocities() {
        let rel: Vec<f64> = v.iter().zip(ensemble.target()).map(|(v, t)| v - t).collect();
        let p: f64 = rel.iter().zip(&e).map(|(r, e)| r * e).sum();
        w.push(rel.iter().zip(&e).map(|(r, e)| r - p * e).collect());
        xi.push(p);
    }
    let xibar = mean(&xi);
    Ok(ProjectedState { xi, xibar, e, w })
}

/// The migration functional `(1/N) sum xi_i^2` split into its mean part
/// `xibar^2` and variance part `(1/N) sum (xi_i - xibar)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalSplit {
    pub total: f64,
    pub mean_part: f64,
    pub variance_part: f64,
}

impl FunctionalSplit {
    /// `variance_part / mean_part`, the spread-to-mean ratio that signals
    /// when free evolution is temporarily preferable to control.
    pub fn ratio(&self) -> f64 {
        self.variance_part / self.mean_part
    }
}

pub fn migration_functional(xi: &[f64]) -> FunctionalSplit {
    assert!(!xi.is_empty(), "migration_functional: empty sequence");
    let n = xi.len() as f64;
    let xibar = mean(xi);
    let total = xi.iter().map(|x| x * x).sum::<f64>() / n;
    let variance_part = xi.iter().map(|x| (x - xibar) * (x - xibar)).sum::<f64>() / n;
    FunctionalSplit { total, mean_part: xibar * xibar, variance_part }
}

/// Stable descending sort of the projections. Returns the permutation
/// `perm[k] = original index of the k-th sorted agent`, so controls computed
/// in canonical order map back to the caller's agent numbering.
pub fn canonical_order_xi(xi: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut perm: Vec<usize> = (0..xi.len()).collect();
    perm.sort_by(|&a, &b| xi[b].partial_cmp(&xi[a]).expect("non-finite xi"));
    let sorted = perm.iter().map(|&i| xi[i]).collect();
    (sorted, perm)
}

/// [`canonical_order_xi`] lifted to a full projected state (residuals are
/// permuted alongside the projections).
pub fn canonical_order(state: &ProjectedState) -> (ProjectedState, Vec<usize>) {
    let (xi, perm) = canonical_order_xi(&state.xi);
    let w = perm.iter().map(|&i| state.w[i].clone()).collect();
    (ProjectedState { xi, xibar: state.xibar, e: state.e.clone(), w }, perm)
}

pub fn is_sorted_descending(xi: &[f64]) -> bool {
    xi.windows(2).all(|p| p[0] >= p[1])
}

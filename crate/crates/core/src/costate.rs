//! Backward integration of the adjoint system along a stored trajectory, and
//! the pointwise check that the applied control minimizes the Hamiltonian.

use crate::dynamics::{projected_rhs, rk4, Trajectory};
use crate::model::mean;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostVariant {
    /// Terminal functional: `lambda(T) = (2/N) xi(T)`,
    /// `lambda_i' = (1/N) sum alpha_j lambda_j - lambdabar + lambda_i`.
    FinalCost,
    /// Running functional: `lambda(T) = 0`,
    /// `lambda_i' = lambda_i - (1/N) sum (1-alpha_j) lambda_j - 2 xi_i`.
    IntegralCost,
}

/// Adjoint samples on the trajectory's grid.
#[derive(Debug, Clone)]
pub struct Costate {
    pub variant: CostVariant,
    pub time: Vec<f64>,
    pub lambda: Vec<Vec<f64>>,
}

impl Costate {
    pub fn n_agents(&self) -> usize {
        self.lambda.first().map(Vec::len).unwrap_or(0)
    }
}

fn final_cost_rhs(lambda: &[f64], alpha: &[f64], out: &mut [f64]) {
    let n = lambda.len() as f64;
    let weighted: f64 = lambda.iter().zip(alpha).map(|(l, a)| a * l).sum::<f64>() / n;
    let lbar = mean(lambda);
    for i in 0..lambda.len() {
        out[i] = weighted - lbar + lambda[i];
    }
}

/// Backward RK4 of the final-cost adjoint from `lambda(T) = (2/N) xi(T)`,
/// reusing the trajectory's grid and stored controls (controls are constant
/// per step, so no interpolation happens across switches).
pub fn integrate_costate_final(traj: &Trajectory) -> Costate {
    let len = traj.len();
    let nf = traj.n_agents() as f64;
    let mut lambda = vec![Vec::new(); len];
    lambda[len - 1] = traj.final_xi().iter().map(|x| 2.0 * x / nf).collect();
    for k in (0..len - 1).rev() {
        let h = traj.time[k + 1] - traj.time[k];
        let alpha = &traj.controls[k];
        lambda[k] = rk4(&lambda[k + 1], -h, |l, out| final_cost_rhs(l, alpha, out));
    }
    Costate { variant: CostVariant::FinalCost, time: traj.time.clone(), lambda }
}

/// Backward RK4 of the integral-cost adjoint from `lambda(T) = 0`. The state
/// enters this adjoint's right-hand side, so the pair `(xi, lambda)` is
/// integrated backward jointly from the stored terminal state.
pub fn integrate_costate_integral(traj: &Trajectory) -> Costate {
    let len = traj.len();
    let n = traj.n_agents();
    let nf = n as f64;
    let mut lambda = vec![Vec::new(); len];
    lambda[len - 1] = vec![0.0; n];
    let mut joint: Vec<f64> = traj.final_xi().to_vec();
    joint.extend_from_slice(&lambda[len - 1]);
    for k in (0..len - 1).rev() {
        let h = traj.time[k + 1] - traj.time[k];
        let alpha = traj.controls[k].clone();
        joint = rk4(&joint, -h, |y, out| {
            let (xi, lam) = y.split_at(n);
            let (out_xi, out_lam) = out.split_at_mut(n);
            projected_rhs(xi, &alpha, out_xi);
            let follow: f64 =
                lam.iter().zip(&alpha).map(|(l, a)| (1.0 - a) * l).sum::<f64>() / nf;
            for i in 0..n {
                out_lam[i] = lam[i] - follow - 2.0 * xi[i];
            }
        });
        lambda[k] = joint[n..].to_vec();
    }
    Costate { variant: CostVariant::IntegralCost, time: traj.time.clone(), lambda }
}

/// Outcome of the Hamiltonian-minimization check.
#[derive(Debug, Clone, Copy)]
pub struct PmpReport {
    /// Worst `H(applied) - min H` over the grid; nonpositive-to-tolerance
    /// means the trajectory is consistent with the maximum principle.
    pub max_violation: f64,
    pub worst_time: f64,
    pub samples: usize,
}

impl PmpReport {
    pub fn consistent(&self, tol: f64) -> bool {
        self.max_violation < tol
    }
}

/// Largest value of `sum alpha_i lambda_i` over the admissible set: fill the
/// largest positive multipliers first, one unit each, until the budget runs
/// out.
pub fn best_allocation_value(lambda: &[f64], budget: f64) -> f64 {
    let mut sorted = lambda.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut capacity = budget;
    let mut value = 0.0;
    for l in sorted {
        if l <= 0.0 || capacity <= 0.0 {
            break;
        }
        let take = capacity.min(1.0);
        value += take * l;
        capacity -= take;
    }
    value
}

/// Verify that the stored controls minimize the controllable Hamiltonian
/// term `-xibar sum alpha_i lambda_i` over the admissible set at every
/// sample. Report-only: the caller decides what violation level matters.
pub fn check_pmp_consistency(traj: &Trajectory, costate: &Costate) -> PmpReport {
    assert_eq!(traj.len(), costate.time.len(), "grids must match");
    let mut report = PmpReport { max_violation: f64::NEG_INFINITY, worst_time: 0.0, samples: traj.len() };
    for k in 0..traj.len() {
        let xibar = mean(&traj.xi[k]);
        let lambda = &costate.lambda[k];
        let applied: f64 = traj.controls[k].iter().zip(lambda).map(|(a, l)| a * l).sum();
        let best = best_allocation_value(lambda, traj.budget);
        // H(applied) - H_min = xibar (best - applied)
        let violation = xibar * (best - applied);
        if violation > report.max_violation {
            report.max_violation = violation;
            report.worst_time = traj.time[k];
        }
    }
    report
}

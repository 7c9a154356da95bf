//! Synthesis of control strategies: the greedy instantaneous-decrease rule,
//! optimal two-agent plans for every budget regime, the staged N-agent
//! full-control plan with its switch times, the inactivation-time search,
//! and the integral-cost feedback rule.

use crate::error::{Error, Result};
use crate::model::{canonical_order_xi, is_sorted_descending, mean};
use crate::plan::{ControlPlan, ControlRule, PlanPiece};

/// Greedy rule maximizing the instantaneous decrease of the functional:
/// control the largest positive projections, filling the budget from the
/// top, with ties sharing the marginal allocation equally.
///
/// Exact ties only. The feedback variant used inside simulations is
/// [`instantaneous_control_tol`].
pub fn instantaneous_control(xi: &[f64], budget: f64) -> Result<Vec<f64>> {
    instantaneous_control_tol(xi, budget, 0.0)
}

/// [`instantaneous_control`] with agents within `tie_tol` of the marginal
/// value treated as tied.
pub fn instantaneous_control_tol(xi: &[f64], budget: f64, tie_tol: f64) -> Result<Vec<f64>> {
    let n = xi.len();
    if !(budget > 0.0) || budget > n as f64 + 1e-12 {
        return Err(Error::BudgetOutOfRange { budget, expected: format!("(0, {n}]") });
    }
    let xibar = mean(xi);
    if xibar <= 0.0 {
        return Err(Error::NonPositiveMean { xibar });
    }
    let (sorted, perm) = canonical_order_xi(xi);
    let npos = sorted.iter().filter(|&&x| x > 0.0).count();
    let mut alpha_sorted = vec![0.0; n];
    if npos as f64 <= budget + 1e-12 {
        for a in alpha_sorted.iter_mut().take(npos) {
            *a = 1.0;
        }
    } else {
        // marginal agent is index ceil(budget) (1-based); everyone tied with
        // it shares what is left after the fully controlled prefix
        let mceil = ((budget - 1e-12).ceil() as usize).max(1);
        let marginal = sorted[mceil - 1];
        let mut block_start = mceil - 1;
        while block_start > 0 && sorted[block_start - 1] - marginal <= tie_tol {
            block_start -= 1;
        }
        let mut block_end = mceil - 1;
        while block_end + 1 < n && marginal - sorted[block_end + 1] <= tie_tol {
            block_end += 1;
        }
        for a in alpha_sorted.iter_mut().take(block_start) {
            *a = 1.0;
        }
        let fill = (budget - block_start as f64) / (block_end - block_start + 1) as f64;
        for a in alpha_sorted.iter_mut().take(block_end + 1).skip(block_start) {
            *a = fill.clamp(0.0, 1.0);
        }
    }
    let mut alpha = vec![0.0; n];
    for (k, &orig) in perm.iter().enumerate() {
        alpha[orig] = alpha_sorted[k];
    }
    Ok(alpha)
}

/// Integral-cost optimal feedback: full strength split evenly over the
/// agents within `merge_tol` of the maximal projection.
pub fn integral_cost_control(xi: &[f64], merge_tol: f64) -> Result<Vec<f64>> {
    let xibar = mean(xi);
    if xibar <= 0.0 {
        return Err(Error::NonPositiveMean { xibar });
    }
    let max = xi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let members: Vec<usize> =
        (0..xi.len()).filter(|&i| xi[i] >= max - merge_tol).collect();
    let share = 1.0 / members.len() as f64;
    let mut alpha = vec![0.0; xi.len()];
    for i in members {
        alpha[i] = share;
    }
    Ok(alpha)
}

/// Equal split of the budget over the merged leading block (the agents
/// within `merge_tol` of the maximal projection), capped at one per agent.
pub fn equal_split_merged_block(xi: &[f64], budget: f64, merge_tol: f64) -> Result<Vec<f64>> {
    let xibar = mean(xi);
    if xibar <= 0.0 {
        return Err(Error::NonPositiveMean { xibar });
    }
    let max = xi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let members: Vec<usize> =
        (0..xi.len()).filter(|&i| xi[i] >= max - merge_tol).collect();
    let share = (budget.min(members.len() as f64)) / members.len() as f64;
    let mut alpha = vec![0.0; xi.len()];
    for i in members {
        alpha[i] = share;
    }
    Ok(alpha)
}

/// Which of the two-agent optimal-control regimes an instance falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoAgentCase {
    EqualStart,
    MLe1Long,
    MLe1Short,
    M2BothPositive,
    M2Long,
    M2Short,
    M12TLtT0,
    M12T0T1,
    M12T1T2,
    M12TGeT2,
}

impl TwoAgentCase {
    pub fn id(&self) -> &'static str {
        match self {
            TwoAgentCase::EqualStart => "equal_start",
            TwoAgentCase::MLe1Long => "M_le_1_long",
            TwoAgentCase::MLe1Short => "M_le_1_short",
            TwoAgentCase::M2BothPositive => "M2_both_positive",
            TwoAgentCase::M2Long => "M2_long",
            TwoAgentCase::M2Short => "M2_short",
            TwoAgentCase::M12TLtT0 => "M12_T_lt_t0",
            TwoAgentCase::M12T0T1 => "M12_t0_t1",
            TwoAgentCase::M12T1T2 => "M12_t1_t2",
            TwoAgentCase::M12TGeT2 => "M12_T_ge_t2",
        }
    }

    pub const ALL: [TwoAgentCase; 10] = [
        TwoAgentCase::EqualStart,
        TwoAgentCase::MLe1Long,
        TwoAgentCase::MLe1Short,
        TwoAgentCase::M2BothPositive,
        TwoAgentCase::M2Long,
        TwoAgentCase::M2Short,
        TwoAgentCase::M12TLtT0,
        TwoAgentCase::M12T0T1,
        TwoAgentCase::M12T1T2,
        TwoAgentCase::M12TGeT2,
    ];
}

/// Regime classification of a two-agent instance, with whichever of the
/// switching thresholds are defined for it.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoAgentRegime {
    pub budget: f64,
    pub case_id: TwoAgentCase,
    pub t0: Option<f64>,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub tstar: Option<f64>,
}

fn pieces2(segments: Vec<(f64, f64, [f64; 2])>, budget: f64, horizon: f64) -> ControlPlan {
    let pieces = segments
        .into_iter()
        .filter(|(a, b, _)| b - a > 1e-15)
        .map(|(start, end, alpha)| PlanPiece {
            start,
            end,
            rule: ControlRule::Constant(alpha.to_vec()),
        })
        .collect();
    ControlPlan { budget, horizon, pieces }
}

/// Classify a two-agent instance and emit a concrete optimal plan.
///
/// Requires canonical order `xi0[0] >= xi0[1]` and positive mean.
pub fn two_agent_plan(
    xi0: [f64; 2],
    budget: f64,
    horizon: f64,
) -> Result<(TwoAgentRegime, ControlPlan)> {
    let (x1, x2) = (xi0[0], xi0[1]);
    let xibar = 0.5 * (x1 + x2);
    if xibar <= 0.0 {
        return Err(Error::NonPositiveMean { xibar });
    }
    if x1 < x2 {
        return Err(Error::invalid_input("two_agent_plan requires xi[0] >= xi[1]"));
    }
    if !(budget > 0.0) || budget > 2.0 + 1e-12 {
        return Err(Error::BudgetOutOfRange { budget, expected: "(0, 2]".into() });
    }
    if !(horizon > 0.0) {
        return Err(Error::invalid_input("horizon must be positive"));
    }
    let m = budget.min(2.0);
    let t_final = horizon;

    let mut regime =
        TwoAgentRegime { budget: m, case_id: TwoAgentCase::EqualStart, t0: None, t1: None, t2: None, tstar: None };

    // Equal projections: any plan with full budget that keeps them together;
    // the even split is the canonical representative.
    if x1 == x2 {
        let plan = pieces2(vec![(0.0, t_final, [m / 2.0, m / 2.0])], m, t_final);
        return Ok((regime, plan));
    }

    if m <= 1.0 + 1e-12 {
        // Budget at most one: (m, 0) until the agents meet, then even split.
        let m = m.min(1.0);
        let t0 = 2.0 / (2.0 - m) * ((2.0 - m) / (2.0 * m) * (x1 - x2) / xibar + 1.0).ln();
        regime.t0 = Some(t0);
        if t_final >= t0 {
            regime.case_id = TwoAgentCase::MLe1Long;
            let plan = pieces2(
                vec![(0.0, t0, [m, 0.0]), (t0, t_final, [m / 2.0, m / 2.0])],
                m,
                t_final,
            );
            Ok((regime, plan))
        } else {
            regime.case_id = TwoAgentCase::MLe1Short;
            let (tstar, _) = if (m - 1.0).abs() <= 1e-12 {
                inactivation_time_quartic(xi0, xibar, t_final)
            } else {
                inactivation_time_substrength(xi0, xibar, m, t_final)
            };
            regime.tstar = Some(tstar);
            let plan =
                pieces2(vec![(0.0, tstar, [0.0, 0.0]), (tstar, t_final, [m, 0.0])], m, t_final);
            Ok((regime, plan))
        }
    } else if m >= 2.0 - 1e-12 {
        if x2 > 0.0 {
            regime.case_id = TwoAgentCase::M2BothPositive;
            let plan = pieces2(vec![(0.0, t_final, [1.0, 1.0])], 2.0, t_final);
            return Ok((regime, plan));
        }
        let t0 = 2.0 * (x1 / (2.0 * xibar)).ln();
        regime.t0 = Some(t0);
        if t_final >= t0 {
            // (1,0) until xi_2 reaches zero, then hold it there with (1,1).
            regime.case_id = TwoAgentCase::M2Long;
            let plan =
                pieces2(vec![(0.0, t0, [1.0, 0.0]), (t0, t_final, [1.0, 1.0])], 2.0, t_final);
            Ok((regime, plan))
        } else {
            regime.case_id = TwoAgentCase::M2Short;
            let (tstar, _) = inactivation_time_quartic(xi0, xibar, t_final);
            regime.tstar = Some(tstar);
            let plan =
                pieces2(vec![(0.0, tstar, [0.0, 0.0]), (tstar, t_final, [1.0, 0.0])], 2.0, t_final);
            Ok((regime, plan))
        }
    } else {
        // 1 < m < 2
        let t2 = 2.0 / (2.0 - m) * (x1 / xibar).ln();
        regime.t2 = Some(t2);
        if x2 > 0.0 {
            if t_final < t2 {
                regime.case_id = TwoAgentCase::M12T1T2;
                let plan = pieces2(vec![(0.0, t_final, [1.0, m - 1.0])], m, t_final);
                Ok((regime, plan))
            } else {
                regime.case_id = TwoAgentCase::M12TGeT2;
                let plan = pieces2(
                    vec![(0.0, t2, [1.0, m - 1.0]), (t2, t_final, [m / 2.0, m / 2.0])],
                    m,
                    t_final,
                );
                Ok((regime, plan))
            }
        } else {
            let t0 = 2.0 * (x1 / (2.0 * xibar)).ln();
            let t1 = t0 / (2.0 - m);
            regime.t0 = Some(t0);
            regime.t1 = Some(t1);
            if t_final < t0 {
                regime.case_id = TwoAgentCase::M12TLtT0;
                let (tstar, _) = inactivation_time_quartic(xi0, xibar, t_final);
                regime.tstar = Some(tstar);
                let plan = pieces2(
                    vec![(0.0, tstar, [0.0, 0.0]), (tstar, t_final, [1.0, 0.0])],
                    m,
                    t_final,
                );
                Ok((regime, plan))
            } else if t_final <= t1 {
                // alpha_1 = 1 throughout with the partial second control that
                // brings xi_2 to zero exactly at the final time
                regime.case_id = TwoAgentCase::M12T0T1;
                let a = (1.0 - t0 / t_final).clamp(0.0, m - 1.0);
                let plan = pieces2(vec![(0.0, t_final, [1.0, a])], m, t_final);
                Ok((regime, plan))
            } else if t_final < t2 {
                regime.case_id = TwoAgentCase::M12T1T2;
                let plan = pieces2(vec![(0.0, t_final, [1.0, m - 1.0])], m, t_final);
                Ok((regime, plan))
            } else {
                regime.case_id = TwoAgentCase::M12TGeT2;
                let plan = pieces2(
                    vec![(0.0, t2, [1.0, m - 1.0]), (t2, t_final, [m / 2.0, m / 2.0])],
                    m,
                    t_final,
                );
                Ok((regime, plan))
            }
        }
    }
}

/// Minimize the final functional over the inactivation time for two agents
/// under unit-strength post-inactivation control `(1, 0)`.
///
/// With `X = e^{t*/2}` the final value is the biquadratic
/// `e^{-2T} [ (xi_1 + xibar(X^2-1))^2 + (xi_2 + xibar(X^2-1) + 2 xibar X (e^{T/2}-X))^2 ]`,
/// minimized over `X in [1, e^{T/2}]` through the closed-form roots of its
/// cubic derivative (dense-grid fallback when the cubic is near-degenerate).
/// Returns `(t*, V(T))` with the functional in its `(1/N) sum xi^2` form.
pub fn inactivation_time_quartic(xi0: [f64; 2], xibar0: f64, horizon: f64) -> (f64, f64) {
    assert!(xibar0 > 0.0, "inactivation search requires positive mean");
    let e_half = (horizon / 2.0).exp();
    let b = xibar0;
    let p = xi0[0] - b;
    let q = xi0[1] - b;
    let scale = (-2.0 * horizon).exp();
    let quartic = |x: f64| {
        let t1 = p + b * x * x;
        let t2 = q + 2.0 * b * e_half * x - b * x * x;
        scale * (t1 * t1 + t2 * t2)
    };
    let mut candidates = vec![1.0, e_half];
    let (roots, degenerate) = solve_cubic_real(
        2.0 * b,
        -3.0 * b * e_half,
        (xi0[0] - xi0[1]) + 2.0 * b * e_half * e_half,
        e_half * q,
    );
    if degenerate {
        let grid_n = 100_000;
        let mut best_k: usize = 0;
        let mut best_v = f64::INFINITY;
        for k in 0..=grid_n {
            let x = 1.0 + (e_half - 1.0) * k as f64 / grid_n as f64;
            let v = quartic(x);
            if v < best_v {
                best_v = v;
                best_k = k;
            }
        }
        let lo = 1.0 + (e_half - 1.0) * best_k.saturating_sub(1) as f64 / grid_n as f64;
        let hi = 1.0 + (e_half - 1.0) * (best_k + 1).min(grid_n) as f64 / grid_n as f64;
        let (x, _) = golden_section_min(&quartic, lo, hi, 1e-12);
        candidates.push(x);
    } else {
        candidates.extend(roots.into_iter().filter(|&x| x > 1.0 && x < e_half));
    }
    let mut best = (1.0, quartic(1.0));
    for &x in &candidates {
        let v = quartic(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    (2.0 * best.0.ln(), best.1 / 2.0)
}

/// Inactivation-time search for `m < 1`, where post-inactivation control is
/// `(m, 0)` and the final value is no longer polynomial in `e^{t*/2}`.
/// Coarse scan plus golden-section refinement on the exact closed form.
pub fn inactivation_time_substrength(
    xi0: [f64; 2],
    xibar0: f64,
    budget: f64,
    horizon: f64,
) -> (f64, f64) {
    assert!(xibar0 > 0.0, "inactivation search requires positive mean");
    let objective = |tstar: f64| {
        let grow = f64::exp_m1(tstar) * xibar0;
        let decay_in = (-tstar).exp();
        let x1 = decay_in * (xi0[0] + grow);
        let x2 = decay_in * (xi0[1] + grow);
        let tau = horizon - tstar;
        let c = 1.0 - budget / 2.0;
        let g = crate::dynamics::growth(c, tau);
        let decay = (-tau).exp();
        let f1 = decay * (x1 + (1.0 - budget) * xibar0 * g);
        let f2 = decay * (x2 + xibar0 * g);
        0.5 * (f1 * f1 + f2 * f2)
    };
    let grid = 512;
    let mut best_k: usize = 0;
    let mut best_v = f64::INFINITY;
    for k in 0..=grid {
        let t = horizon * k as f64 / grid as f64;
        let v = objective(t);
        if v < best_v {
            best_v = v;
            best_k = k;
        }
    }
    let lo = horizon * best_k.saturating_sub(1) as f64 / grid as f64;
    let hi = horizon * (best_k + 1).min(grid) as f64 / grid as f64;
    let (t, v) = golden_section_min(&objective, lo, hi, 1e-10);
    if objective(0.0) <= v {
        (0.0, objective(0.0))
    } else {
        (t, v)
    }
}

/// Switch times of the staged full-control plan: `t_1 = 0` and
/// `t_l = N/(N-1) ln( (l-1) (N-1)/N (mean(xi_1..xi_{l-1}) - xi_l)/xibar + 1 )`.
pub fn staged_switch_times(xi0: &[f64], xibar0: f64) -> Result<Vec<f64>> {
    staged_switch_times_budget(xi0, xibar0, 1.0)
}

/// Switch times with total strength `m <= 1` spent on the leading block;
/// reduces to [`staged_switch_times`] at `m = 1`.
pub fn staged_switch_times_budget(xi0: &[f64], xibar0: f64, budget: f64) -> Result<Vec<f64>> {
    let n = xi0.len();
    if xibar0 <= 0.0 {
        return Err(Error::NonPositiveMean { xibar: xibar0 });
    }
    if !is_sorted_descending(xi0) {
        return Err(Error::invalid_input("switch times require canonical (descending) order"));
    }
    if !(budget > 0.0) || budget > 1.0 + 1e-12 {
        return Err(Error::BudgetOutOfRange { budget, expected: "(0, 1]".into() });
    }
    let m = budget.min(1.0);
    let nf = n as f64;
    let mut times = vec![0.0];
    let mut prefix = 0.0;
    for l in 2..=n {
        prefix += xi0[l - 2];
        let partial_mean = prefix / (l - 1) as f64;
        let gap = partial_mean - xi0[l - 1];
        let t_l =
            nf / (nf - m) * ((l - 1) as f64 * (nf - m) / nf * gap / (m * xibar0) + 1.0).ln();
        times.push(t_l);
    }
    Ok(times)
}

/// The staged full-control plan: on `[t_k, t_{k+1})` the leading `k` agents
/// share the whole budget evenly, and once all stages are past the budget is
/// split over everyone.
#[derive(Debug, Clone, PartialEq)]
pub struct StagedPlan {
    /// Theoretical stage times `t_1 = 0 <= t_2 <= ... <= t_N` (not clamped
    /// to the horizon).
    pub switch_times: Vec<f64>,
    pub budget: f64,
    pub horizon: f64,
}

impl StagedPlan {
    pub fn n(&self) -> usize {
        self.switch_times.len()
    }

    /// Leading-block size on each piece of [`Self::to_control_plan`].
    pub fn block_sizes(&self) -> Vec<usize> {
        (1..=self.n())
            .filter(|&k| {
                let start = self.switch_times[k - 1].min(self.horizon);
                let end = if k < self.n() {
                    self.switch_times[k].min(self.horizon)
                } else {
                    self.horizon
                };
                end - start > 1e-15
            })
            .collect()
    }

    /// Materialize as constant pieces tiling `[0, horizon]`.
    pub fn to_control_plan(&self) -> ControlPlan {
        let n = self.n();
        let mut segments = Vec::new();
        for k in 1..=n {
            let start = self.switch_times[k - 1].min(self.horizon);
            let end =
                if k < n { self.switch_times[k].min(self.horizon) } else { self.horizon };
            if end - start > 1e-15 {
                let mut alpha = vec![0.0; n];
                for a in alpha.iter_mut().take(k) {
                    *a = self.budget / k as f64;
                }
                segments.push(PlanPiece { start, end, rule: ControlRule::Constant(alpha) });
            }
        }
        ControlPlan { budget: self.budget, horizon: self.horizon, pieces: segments }
    }
}

/// Staged full-control plan at unit budget.
pub fn full_control_plan(xi0: &[f64], horizon: f64) -> Result<StagedPlan> {
    full_control_plan_budget(xi0, horizon, 1.0)
}

/// Staged plan with total strength `m <= 1`.
pub fn full_control_plan_budget(xi0: &[f64], horizon: f64, budget: f64) -> Result<StagedPlan> {
    if !(horizon > 0.0) {
        return Err(Error::invalid_input("horizon must be positive"));
    }
    let switch_times = staged_switch_times_budget(xi0, mean(xi0), budget)?;
    Ok(StagedPlan { switch_times, budget: budget.min(1.0), horizon })
}

/// Result of the inactivation scan: the minimizing free-evolution time, the
/// functional it achieves, and the full-control (`delta = 0`) value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InactivationScan {
    pub delta: f64,
    pub v_delta: f64,
    pub v_fc: f64,
}

/// Final functional after free evolution on `[0, delta]` followed by the
/// staged full-control plan on `[delta, T]`, evaluated in closed form.
pub fn staged_value_after_inactivation(xi0: &[f64], horizon: f64, delta: f64) -> f64 {
    let n = xi0.len();
    let nf = n as f64;
    let xibar0 = mean(xi0);
    let tau = horizon - delta;
    let decay_in = (-delta).exp();
    let grow_in = xibar0 * f64::exp_m1(delta);
    let shifted: Vec<f64> = xi0.iter().map(|&x| decay_in * (x + grow_in)).collect();

    // largest stage l with t_l(shifted) <= tau; stage times are nondecreasing
    let mut l = 1;
    let mut prefix = shifted[0];
    for cand in 2..=n {
        let partial_mean = prefix / (cand - 1) as f64;
        let gap = partial_mean - shifted[cand - 1];
        let t_cand =
            nf / (nf - 1.0) * ((cand - 1) as f64 * (nf - 1.0) / nf * gap / xibar0 + 1.0).ln();
        if t_cand <= tau {
            l = cand;
        } else {
            break;
        }
        prefix += shifted[cand - 1];
    }

    let lf = l as f64;
    let factor = nf / (nf - 1.0) * xibar0 * f64::exp_m1((nf - 1.0) / nf * tau);
    let decay = (-tau).exp();
    let block0 = shifted.iter().take(l).sum::<f64>() / lf;
    let block_final = decay * (block0 + (lf - 1.0) / lf * factor);
    let mut sum_sq = lf * block_final * block_final;
    for &x in shifted.iter().skip(l) {
        let xf = decay * (x + factor);
        sum_sq += xf * xf;
    }
    sum_sq / nf
}

/// Scan the inactivation time over `[0, T]` on a uniform grid, refine the
/// best bracket by golden section, and report the minimizer. `delta = 0`
/// recovers the plain staged plan, so `v_delta <= v_fc` always.
pub fn inactivation_scan(xi0: &[f64], horizon: f64, grid: usize) -> Result<InactivationScan> {
    let n = xi0.len();
    if n < 2 {
        return Err(Error::invalid_input("inactivation scan needs at least two agents"));
    }
    if grid < 2 {
        return Err(Error::invalid_input("grid must have at least two points"));
    }
    let xibar0 = mean(xi0);
    if xibar0 <= 0.0 {
        return Err(Error::NonPositiveMean { xibar: xibar0 });
    }
    if !is_sorted_descending(xi0) {
        return Err(Error::invalid_input("inactivation scan requires canonical order"));
    }
    if !(horizon > 0.0) {
        return Err(Error::invalid_input("horizon must be positive"));
    }
    let value = |delta: f64| staged_value_after_inactivation(xi0, horizon, delta);
    let v_fc = value(0.0);
    let mut best_k: usize = 0;
    let mut best_v = v_fc;
    for k in 1..grid {
        let delta = horizon * k as f64 / (grid - 1) as f64;
        let v = value(delta);
        if v < best_v {
            best_v = v;
            best_k = k;
        }
    }
    let lo = horizon * best_k.saturating_sub(1) as f64 / (grid - 1) as f64;
    let hi = horizon * (best_k + 1).min(grid - 1) as f64 / (grid - 1) as f64;
    let (refined, v_refined) = golden_section_min(&value, lo, hi, 1e-8);

    let mut best = (0.0, v_fc);
    if best_v < best.1 {
        best = (horizon * best_k as f64 / (grid - 1) as f64, best_v);
    }
    if v_refined < best.1 {
        best = (refined, v_refined);
    }
    Ok(InactivationScan { delta: best.0, v_delta: best.1, v_fc })
}

/// Materialize the scan winner: free evolution on `[0, delta]`, then the
/// staged plan recomputed from the drifted state on `[delta, T]`.
pub fn inactivation_plan(xi0: &[f64], horizon: f64, delta: f64) -> Result<ControlPlan> {
    let n = xi0.len();
    if delta <= 1e-15 {
        return Ok(full_control_plan(xi0, horizon)?.to_control_plan());
    }
    if delta >= horizon {
        return Ok(ControlPlan::zero(n, 1.0, horizon));
    }
    let decay_in = (-delta).exp();
    let grow_in = mean(xi0) * f64::exp_m1(delta);
    let shifted: Vec<f64> = xi0.iter().map(|&x| decay_in * (x + grow_in)).collect();
    let staged = full_control_plan(&shifted, horizon - delta)?.to_control_plan();
    let mut pieces =
        vec![PlanPiece { start: 0.0, end: delta, rule: ControlRule::Constant(vec![0.0; n]) }];
    for piece in staged.pieces {
        pieces.push(PlanPiece { start: piece.start + delta, end: piece.end + delta, rule: piece.rule });
    }
    Ok(ControlPlan { budget: 1.0, horizon, pieces })
}

/// Golden-section minimization on `[lo, hi]` down to an interval of `xtol`.
pub(crate) fn golden_section_min(
    f: &dyn Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    xtol: f64,
) -> (f64, f64) {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    if hi <= lo {
        return (lo, f(lo));
    }
    let mut x1 = hi - INVPHI * (hi - lo);
    let mut x2 = lo + INVPHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > xtol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INVPHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INVPHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Real roots of `a x^3 + b x^2 + c x + d`. The boolean flags a
/// near-degenerate discriminant, where callers should prefer a grid search.
pub(crate) fn solve_cubic_real(a: f64, b: f64, c: f64, d: f64) -> (Vec<f64>, bool) {
    if a.abs() < 1e-300 {
        // quadratic fallback
        if b.abs() < 1e-300 {
            if c.abs() < 1e-300 {
                return (vec![], true);
            }
            return (vec![-d / c], false);
        }
        let disc = c * c - 4.0 * b * d;
        if disc < 0.0 {
            return (vec![], false);
        }
        let s = disc.sqrt();
        return (vec![(-c + s) / (2.0 * b), (-c - s) / (2.0 * b)], false);
    }
    let bn = b / a;
    let cn = c / a;
    let dn = d / a;
    // depressed cubic t^3 + p t + q with x = t - bn/3
    let p = cn - bn * bn / 3.0;
    let q = 2.0 * bn * bn * bn / 27.0 - bn * cn / 3.0 + dn;
    let shift = -bn / 3.0;
    let disc = -4.0 * p * p * p - 27.0 * q * q;
    let scale = (p.abs().max(q.abs()).max(1.0)).powi(3);
    let degenerate = disc.abs() < 1e-12 * scale;
    let mut roots = if disc > 0.0 {
        // three real roots, trigonometric form (p < 0 here)
        let r = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * r)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|k| r * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() + shift)
            .collect::<Vec<f64>>()
    } else {
        let s = (q * q / 4.0 + p * p * p / 27.0).max(0.0).sqrt();
        let u = (-q / 2.0 + s).cbrt();
        let v = (-q / 2.0 - s).cbrt();
        vec![u + v + shift]
    };
    // one Newton polish pass against the original coefficients
    for x in roots.iter_mut() {
        for _ in 0..2 {
            let fx = ((a * *x + b) * *x + c) * *x + d;
            let dfx = (3.0 * a * *x + 2.0 * b) * *x + c;
            if dfx.abs() > 1e-300 {
                *x -= fx / dfx;
            }
        }
    }
    (roots, degenerate)
}

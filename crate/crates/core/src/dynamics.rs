//! Forward integration of the full and projected systems.
//!
//! Between control switches every right-hand side here is linear, so a fixed
//! RK4 step with controls held constant per step (sample-and-hold) is
//! accurate to machine level at the default step. Piece boundaries are
//! snapped onto the grid, and feedback rules get an event-located grid point
//! whenever their output changes inside a step, so bang-bang switches are
//! never smeared. Constant-control pieces also admit an exact exponential
//! closed form, used both as the production evaluator for synthesized plans
//! and as the oracle the integrator is tested against.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::model::{mean, migration_functional, Ensemble};
use crate::plan::{check_admissible, ControlPlan, ControlRule, DEFAULT_MERGE_TOL};
use crate::strategies;

pub const DEFAULT_STEP: f64 = 1e-3;

/// One classical RK4 step of an autonomous system.
pub(crate) fn rk4<F: Fn(&[f64], &mut [f64])>(state: &[f64], h: f64, rhs: F) -> Vec<f64> {
    let n = state.len();
    let mut k1 = vec![0.0; n];
    rhs(state, &mut k1);
    let mut tmp: Vec<f64> = (0..n).map(|i| state[i] + 0.5 * h * k1[i]).collect();
    let mut k2 = vec![0.0; n];
    rhs(&tmp, &mut k2);
    for i in 0..n {
        tmp[i] = state[i] + 0.5 * h * k2[i];
    }
    let mut k3 = vec![0.0; n];
    rhs(&tmp, &mut k3);
    for i in 0..n {
        tmp[i] = state[i] + h * k3[i];
    }
    let mut k4 = vec![0.0; n];
    rhs(&tmp, &mut k4);
    (0..n)
        .map(|i| state[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// xi_i' = -xi_i + (1 - alpha_i) xibar
pub(crate) fn projected_rhs(xi: &[f64], alpha: &[f64], out: &mut [f64]) {
    let xibar = mean(xi);
    for i in 0..xi.len() {
        out[i] = -xi[i] + (1.0 - alpha[i]) * xibar;
    }
}

/// One RK4 step of the projected system with `alpha` frozen.
pub fn step_projected(xi: &[f64], alpha: &[f64], budget: f64, h: f64) -> Result<Vec<f64>> {
    check_admissible(alpha, xi.len(), budget)?;
    if !(h > 0.0) {
        return Err(Error::invalid_input("step must be positive"));
    }
    Ok(rk4(xi, h, |s, out| projected_rhs(s, alpha, out)))
}

/// One RK4 step of the full system `x' = v`, `v' = -(v - V) + (1-alpha)(vbar - V)`.
pub fn step_full(ensemble: &Ensemble, alpha: &[f64], budget: f64, h: f64) -> Result<Ensemble> {
    let n = ensemble.n();
    let d = ensemble.dim();
    check_admissible(alpha, n, budget)?;
    if !(h > 0.0) {
        return Err(Error::invalid_input("step must be positive"));
    }
    let mut state = Vec::with_capacity(2 * n * d);
    for x in ensemble.positions() {
        state.extend_from_slice(x);
    }
    for v in ensemble.velocities() {
        state.extend_from_slice(v);
    }
    let target = ensemble.target().to_vec();
    let next = rk4(&state, h, |s, out| full_rhs(s, alpha, &target, n, d, out));
    let positions = (0..n).map(|i| next[i * d..(i + 1) * d].to_vec()).collect();
    let off = n * d;
    let velocities = (0..n).map(|i| next[off + i * d..off + (i + 1) * d].to_vec()).collect();
    Ok(ensemble.with_state(positions, velocities))
}

fn full_rhs(state: &[f64], alpha: &[f64], target: &[f64], n: usize, d: usize, out: &mut [f64]) {
    let off = n * d;
    // vbar - V
    let mut vbar_rel = vec![0.0; d];
    for i in 0..n {
        for k in 0..d {
            vbar_rel[k] += state[off + i * d + k] / n as f64;
        }
    }
    for k in 0..d {
        vbar_rel[k] -= target[k];
    }
    for i in 0..n {
        for k in 0..d {
            out[i * d + k] = state[off + i * d + k];
            let v_rel = state[off + i * d + k] - target[k];
            out[off + i * d + k] = -v_rel + (1.0 - alpha[i]) * vbar_rel[k];
        }
    }
}

/// A simulated projected trajectory on a (mostly uniform) time grid.
///
/// `controls[k]` is the vector applied on `[time[k], time[k+1])`; the last
/// entry repeats the final applied control so all columns have equal length.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub time: Vec<f64>,
    pub xi: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub functional: Vec<f64>,
    pub budget: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.xi.first().map(Vec::len).unwrap_or(0)
    }

    pub fn final_xi(&self) -> &[f64] {
        self.xi.last().expect("empty trajectory")
    }

    pub fn final_functional(&self) -> f64 {
        *self.functional.last().expect("empty trajectory")
    }

    /// CSV with header `t,xi_1..xi_N,alpha_1..alpha_N,V`, full precision.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let n = self.n_agents();
        let mut header = String::from("t");
        for i in 1..=n {
            header.push_str(&format!(",xi_{i}"));
        }
        for i in 1..=n {
            header.push_str(&format!(",alpha_{i}"));
        }
        header.push_str(",V");
        writeln!(out, "{header}")?;
        for k in 0..self.len() {
            let mut row = fmt_f64(self.time[k]);
            for x in &self.xi[k] {
                row.push(',');
                row.push_str(&fmt_f64(*x));
            }
            for a in &self.controls[k] {
                row.push(',');
                row.push_str(&fmt_f64(*a));
            }
            row.push(',');
            row.push_str(&fmt_f64(self.functional[k]));
            writeln!(out, "{row}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("utf8")
    }

    /// Parse a trajectory produced by [`Trajectory::write_csv`]. The budget
    /// is not part of the file format and must be supplied by the caller.
    pub fn read_csv<R: BufRead>(reader: R, budget: f64) -> Result<Trajectory> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::invalid_input("empty trajectory file"))?
            .map_err(|e| Error::invalid_input(format!("read: {e}")))?;
        let cols: Vec<&str> = header.trim().split(',').collect();
        let n = cols.iter().filter(|c| c.starts_with("xi_")).count();
        if n == 0 || cols.len() != 2 * n + 2 || cols[0] != "t" || cols[cols.len() - 1] != "V" {
            return Err(Error::invalid_input(format!("bad trajectory header '{header}'")));
        }
        let mut traj = Trajectory {
            time: Vec::new(),
            xi: Vec::new(),
            controls: Vec::new(),
            functional: Vec::new(),
            budget,
        };
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::invalid_input(format!("read: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .trim()
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::invalid_input(format!("line {}: {e}", lineno + 2)))?;
            if vals.len() != 2 * n + 2 {
                return Err(Error::invalid_input(format!(
                    "line {}: expected {} values, got {}",
                    lineno + 2,
                    2 * n + 2,
                    vals.len()
                )));
            }
            traj.time.push(vals[0]);
            traj.xi.push(vals[1..=n].to_vec());
            traj.controls.push(vals[n + 1..=2 * n].to_vec());
            traj.functional.push(vals[2 * n + 1]);
        }
        if traj.time.is_empty() {
            return Err(Error::invalid_input("trajectory has no samples"));
        }
        Ok(traj)
    }
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Exact state after `s` time units under constant control: with
/// `A = sum(alpha)` and `c = 1 - A/N`,
/// `xi_i(s) = e^{-s} (xi_i + (1-alpha_i) xibar (e^{cs}-1)/c)`.
pub(crate) fn constant_flow(xi: &[f64], alpha: &[f64], s: f64) -> Vec<f64> {
    let n = xi.len() as f64;
    let total: f64 = alpha.iter().sum();
    let c = 1.0 - total / n;
    let g = growth(c, s);
    let xibar = mean(xi);
    let es = (-s).exp();
    xi.iter().zip(alpha).map(|(&x, &a)| es * (x + (1.0 - a) * xibar * g)).collect()
}

/// `(e^{cs} - 1)/c`, stable for small `c`.
pub(crate) fn growth(c: f64, s: f64) -> f64 {
    if c.abs() < 1e-14 {
        s * (1.0 + 0.5 * c * s)
    } else {
        f64::exp_m1(c * s) / c
    }
}

/// Machine-precision evaluator for a piecewise-constant plan.
#[derive(Debug, Clone)]
pub struct ClosedFormEvaluator {
    starts: Vec<f64>,
    states: Vec<Vec<f64>>,
    alphas: Vec<Vec<f64>>,
    horizon: f64,
}

impl ClosedFormEvaluator {
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let t = t.clamp(0.0, self.horizon);
        // last piece whose start <= t
        let k = match self.starts.binary_search_by(|s| s.partial_cmp(&t).unwrap()) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        constant_flow(&self.states[k], &self.alphas[k], t - self.starts[k])
    }

    pub fn final_state(&self) -> Vec<f64> {
        self.eval(self.horizon)
    }

    pub fn final_functional(&self) -> f64 {
        migration_functional(&self.final_state()).total
    }
}

/// Build the exact evaluator for a plan made of constant pieces only.
pub fn closed_form_piecewise(xi0: &[f64], plan: &ControlPlan) -> Result<ClosedFormEvaluator> {
    plan.validate(xi0.len())?;
    let mut starts = Vec::with_capacity(plan.pieces.len());
    let mut states = Vec::with_capacity(plan.pieces.len());
    let mut alphas = Vec::with_capacity(plan.pieces.len());
    let mut state = xi0.to_vec();
    for piece in &plan.pieces {
        let ControlRule::Constant(alpha) = &piece.rule else {
            return Err(Error::UnsupportedSchedule {
                reason: "closed form requires constant-control pieces".into(),
            });
        };
        starts.push(piece.start);
        states.push(state.clone());
        alphas.push(alpha.clone());
        state = constant_flow(&state, alpha, piece.end - piece.start);
    }
    Ok(ClosedFormEvaluator { starts, states, alphas, horizon: plan.horizon })
}

pub fn simulate(xi0: &[f64], plan: &ControlPlan, h: f64) -> Result<Trajectory> {
    simulate_opts(xi0, plan, h, DEFAULT_MERGE_TOL)
}

/// Integrate the projected system under a plan. Feedback rules are evaluated
/// at each step start; when a rule's output changes within a step the change
/// point is located by bisection on the exact constant-control flow and
/// inserted as a grid point.
pub fn simulate_opts(xi0: &[f64], plan: &ControlPlan, h: f64, merge_tol: f64) -> Result<Trajectory> {
    let n = xi0.len();
    plan.validate(n)?;
    if !(h > 0.0) {
        return Err(Error::invalid_input("step must be positive"));
    }
    let mut traj = Trajectory {
        time: vec![0.0],
        xi: vec![xi0.to_vec()],
        controls: Vec::new(),
        functional: vec![migration_functional(xi0).total],
        budget: plan.budget,
    };
    for piece in &plan.pieces {
        let mut t = piece.start;
        let mut grid_k = 0u64; // nominal grid index within the piece
        while piece.end - t > 1e-12 {
            let state = traj.xi.last().unwrap().clone();
            let alpha = eval_rule(&piece.rule, &state, plan.budget, merge_tol)?;
            check_admissible(&alpha, n, plan.budget)?;

            // next nominal grid point, snapped to the piece end
            let mut t_next = piece.start + (grid_k + 1) as f64 * h;
            if t_next <= t + 1e-12 {
                grid_k += 1;
                t_next = piece.start + (grid_k + 1) as f64 * h;
            }
            if t_next > piece.end - 1e-12 {
                t_next = piece.end;
            }
            let mut hstep = t_next - t;

            if !piece.rule.is_constant() {
                let proposed = constant_flow(&state, &alpha, hstep);
                let next_alpha = eval_rule(&piece.rule, &proposed, plan.budget, merge_tol)?;
                if rule_changed(&alpha, &next_alpha) {
                    let s = bisect_rule_change(
                        &piece.rule,
                        &state,
                        &alpha,
                        hstep,
                        plan.budget,
                        merge_tol,
                    )?;
                    // land a hair past the located event so the new rule
                    // output is strictly in force at the inserted grid point
                    let s = s + 1e-9;
                    if s > 1e-12 && s < hstep {
                        hstep = s;
                    }
                }
            }

            let next = rk4(&state, hstep, |s, out| projected_rhs(s, alpha.as_slice(), out));
            t += hstep;
            if t >= piece.start + (grid_k + 1) as f64 * h - 1e-12 {
                grid_k += 1;
            }
            if next.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteState { time: t });
            }
            traj.functional.push(migration_functional(&next).total);
            traj.controls.push(alpha);
            traj.time.push(t);
            traj.xi.push(next);
        }
    }
    if let Some(last) = traj.controls.last().cloned() {
        traj.controls.push(last);
    } else {
        return Err(Error::invalid_plan("plan produced no steps"));
    }
    Ok(traj)
}

fn rule_changed(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).any(|(x, y)| (x - y).abs() > 1e-12)
}

/// Earliest `s` in `(0, hstep]` at which the rule output differs from its
/// value at the step start, assuming the control stays frozen until then.
fn bisect_rule_change(
    rule: &ControlRule,
    state: &[f64],
    alpha: &[f64],
    hstep: f64,
    budget: f64,
    merge_tol: f64,
) -> Result<f64> {
    let mut lo = 0.0;
    let mut hi = hstep;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let probe = constant_flow(state, alpha, mid);
        let a = eval_rule(rule, &probe, budget, merge_tol)?;
        if rule_changed(alpha, &a) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

pub(crate) fn eval_rule(
    rule: &ControlRule,
    xi: &[f64],
    budget: f64,
    merge_tol: f64,
) -> Result<Vec<f64>> {
    match rule {
        ControlRule::Constant(a) => Ok(a.clone()),
        ControlRule::InstantaneousDecrease => {
            strategies::instantaneous_control_tol(xi, budget, merge_tol)
        }
        ControlRule::IntegralCostArgmax => strategies::integral_cost_control(xi, merge_tol),
        ControlRule::EqualSplitMergedBlock => {
            strategies::equal_split_merged_block(xi, budget, merge_tol)
        }
    }
}

/// A full-ensemble trajectory (positions and velocities per sample).
#[derive(Debug, Clone)]
pub struct FullTrajectory {
    pub time: Vec<f64>,
    pub snapshots: Vec<Ensemble>,
    pub controls: Vec<Vec<f64>>,
}

/// Integrate the full system under a plan. Feedback rules are evaluated on
/// the projection of the current ensemble (sample-and-hold, no event
/// refinement at this level).
pub fn simulate_full(ensemble: &Ensemble, plan: &ControlPlan, h: f64) -> Result<FullTrajectory> {
    let n = ensemble.n();
    plan.validate(n)?;
    if !(h > 0.0) {
        return Err(Error::invalid_input("step must be positive"));
    }
    let mut traj = FullTrajectory {
        time: vec![0.0],
        snapshots: vec![ensemble.clone()],
        controls: Vec::new(),
    };
    for piece in &plan.pieces {
        let len = piece.end - piece.start;
        let nsteps = ((len / h) - 1e-9).ceil().max(1.0) as usize;
        for k in 0..nsteps {
            let t0 = piece.start + k as f64 * h;
            let t1 = if k + 1 == nsteps { piece.end } else { piece.start + (k + 1) as f64 * h };
            let current = traj.snapshots.last().unwrap();
            let alpha = match &piece.rule {
                ControlRule::Constant(a) => a.clone(),
                rule => {
                    let projected = crate::model::project(current)?;
                    eval_rule(rule, &projected.xi, plan.budget, DEFAULT_MERGE_TOL)?
                }
            };
            let next = step_full(current, &alpha, plan.budget, t1 - t0)?;
            if next.velocities().iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteState { time: t1 });
            }
            traj.controls.push(alpha);
            traj.time.push(t1);
            traj.snapshots.push(next);
        }
    }
    if let Some(last) = traj.controls.last().cloned() {
        traj.controls.push(last);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::project;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn consensus_is_fixed_point() {
        let xi = vec![0.8, 0.8, 0.8];
        let next = step_projected(&xi, &[0.0, 0.0, 0.0], 1.0, 0.01).unwrap();
        for (a, b) in xi.iter().zip(&next) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn mean_decay_matches_closed_form() {
        // xibar(h) = xibar(0) e^{-sum(alpha) h / N}
        let xi = vec![1.2, 0.4, -0.3];
        let alpha = vec![0.7, 0.2, 0.1];
        let h = 1e-3;
        let next = step_projected(&xi, &alpha, 3.0, h).unwrap();
        let expected = mean(&xi) * (-(1.0f64) * h / 3.0).exp();
        assert_abs_diff_eq!(mean(&next), expected, epsilon = 1e-12);
    }

    #[test]
    fn rejects_inadmissible() {
        let err = step_projected(&[1.0, 0.0], &[1.0, 0.5], 1.0, 0.1).unwrap_err();
        assert_eq!(err.name(), "InadmissibleControl");
        let err = step_projected(&[1.0, 0.0], &[1.2, 0.0], 2.0, 0.1).unwrap_err();
        assert_eq!(err.name(), "InadmissibleControl");
    }

    #[test]
    fn positivity_persists_over_steps() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.gen_range(2..6);
            let mut xi: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if mean(&xi) <= 0.0 {
                for x in xi.iter_mut() {
                    *x = -*x;
                }
            }
            let alpha: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0 / n as f64)).collect();
            let mut state = xi.clone();
            for _ in 0..200 {
                state = step_projected(&state, &alpha, 1.0, 1e-2).unwrap();
                for (i, &x) in state.iter().enumerate() {
                    if xi[i] >= 0.0 {
                        assert!(x >= -1e-9, "positive projection went negative: {x}");
                    }
                }
            }
        }
    }

    #[test]
    fn full_fixed_point_and_mean_conservation() {
        let v = vec![vec![1.0, 0.5], vec![1.0, 0.5]];
        let ens = Ensemble::new(vec![vec![0.0, 0.0]; 2], v, vec![1.0, 0.5]).unwrap();
        let next = step_full(&ens, &[0.0, 0.0], 1.0, 0.05).unwrap();
        for (a, b) in ens.velocities().iter().zip(next.velocities()) {
            for (x, y) in a.iter().zip(b) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-14);
            }
        }

        // alpha = 0 keeps the mean velocity fixed across a step.
        let ens = Ensemble::from_velocities(vec![vec![1.0, 0.2], vec![-0.4, 0.6]]).unwrap();
        let next = step_full(&ens, &[0.0, 0.0], 2.0, 0.05).unwrap();
        for (a, &b) in ens.mean_velocity().iter().zip(&next.mean_velocity()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_agent_full_control_decay() {
        // One fully controlled agent relaxes to the target at unit rate:
        // v' = -(v - V), so |v - V| shrinks by e^{-h} per step.
        let target = vec![0.25, -0.5];
        let v0 = vec![1.25, -0.5];
        let ens = Ensemble::new(vec![vec![0.0, 0.0]], vec![v0.clone()], target.clone()).unwrap();
        let h = 0.01;
        let next = step_full(&ens, &[1.0], 1.0, h).unwrap();
        let dist0: f64 = v0.iter().zip(&target).map(|(v, t)| (v - t) * (v - t)).sum::<f64>().sqrt();
        let dist: f64 = next.velocities()[0]
            .iter()
            .zip(&target)
            .map(|(v, t)| (v - t) * (v - t))
            .sum::<f64>()
            .sqrt();
        // RK4 local error is O(h^5)
        assert_abs_diff_eq!(dist, dist0 * (-h).exp(), epsilon = 1e-10);
    }

    #[test]
    fn zero_control_matches_closed_form() {
        let xi0 = vec![1.3, 0.4, -0.2, 0.9];
        let t_final = 2.0;
        let plan = ControlPlan::zero(4, 1.0, t_final);
        let traj = simulate(&xi0, &plan, 1e-3).unwrap();
        let xibar0 = mean(&xi0);
        let mut max_err: f64 = 0.0;
        for (k, t) in traj.time.iter().enumerate() {
            for (i, &x) in traj.xi[k].iter().enumerate() {
                let exact = xibar0 + (xi0[i] - xibar0) * (-t).exp();
                max_err = max_err.max((x - exact).abs());
            }
        }
        assert!(max_err < 1e-8, "max deviation {max_err}");
    }

    #[test]
    fn two_agent_crossing_time() {
        // Under (1,0) from (1.5, 0.5): xi_1 = 1.5 e^{-t}, xi_2 = e^{-t}(2e^{t/2} - 1.5),
        // equal at t = 2 ln 1.5.
        let plan = ControlPlan::constant(vec![1.0, 0.0], 1.0, 2.0);
        let traj = simulate(&[1.5, 0.5], &plan, 1e-3).unwrap();
        let mut crossing = None;
        for k in 1..traj.len() {
            let prev = traj.xi[k - 1][0] - traj.xi[k - 1][1];
            let cur = traj.xi[k][0] - traj.xi[k][1];
            if prev > 0.0 && cur <= 0.0 {
                let f = prev / (prev - cur);
                crossing = Some(traj.time[k - 1] + f * (traj.time[k] - traj.time[k - 1]));
                break;
            }
        }
        let t0 = 2.0 * 1.5f64.ln();
        assert_abs_diff_eq!(crossing.expect("no crossing"), t0, epsilon = 1e-6);

        for (k, t) in traj.time.iter().enumerate() {
            assert_abs_diff_eq!(traj.xi[k][0], 1.5 * (-t).exp(), epsilon = 1e-9);
            assert_abs_diff_eq!(
                traj.xi[k][1],
                (-t).exp() * (2.0 * (t / 2.0).exp() - 1.5),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn consensus_stays_consensus_under_equal_split() {
        let xi0 = vec![0.6; 5];
        let plan = ControlPlan::constant(vec![0.2; 5], 1.0, 3.0);
        let traj = simulate(&xi0, &plan, 1e-3).unwrap();
        for state in &traj.xi {
            let spread = state.iter().cloned().fold(f64::MIN, f64::max)
                - state.iter().cloned().fold(f64::MAX, f64::min);
            assert!(spread.abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_leader_formulas() {
        // alpha = (1,0,...,0): xibar(t) = xibar0 e^{-t/N}, xi_1 = xi_1(0) e^{-t},
        // followers xi_j = e^{-t}(xi_j(0) + N/(N-1) xibar0 (e^{(N-1)t/N} - 1)).
        let xi0 = vec![1.0, 0.4, 0.1, -0.3];
        let n = 4.0;
        let t_final = 3.0;
        let mut alpha = vec![0.0; 4];
        alpha[0] = 1.0;
        let plan = ControlPlan::constant(alpha, 1.0, t_final);
        let eval = closed_form_piecewise(&xi0, &plan).unwrap();
        for &t in &[0.3, 1.1, 2.7, t_final] {
            let state = eval.eval(t);
            let xibar0 = mean(&xi0);
            assert_abs_diff_eq!(mean(&state), xibar0 * (-t / n).exp(), epsilon = 1e-13);
            assert_abs_diff_eq!(state[0], xi0[0] * (-t).exp(), epsilon = 1e-13);
            for j in 1..4 {
                let expected = (-t).exp()
                    * (xi0[j] + n / (n - 1.0) * xibar0 * (((n - 1.0) / n * t).exp() - 1.0));
                assert_abs_diff_eq!(state[j], expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn closed_form_rejects_feedback() {
        let plan = ControlPlan::feedback(ControlRule::IntegralCostArgmax, 1.0, 1.0);
        let err = closed_form_piecewise(&[1.0, 0.0], &plan).unwrap_err();
        assert_eq!(err.name(), "UnsupportedSchedule");
    }

    #[test]
    fn rk4_agrees_with_closed_form() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let n = 5;
        let xi0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let alpha: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let budget = n as f64;
        let plan = ControlPlan::constant(alpha, budget, 5.0);
        let traj = simulate(&xi0, &plan, 1e-4).unwrap();
        let eval = closed_form_piecewise(&xi0, &plan).unwrap();
        let mut max_err: f64 = 0.0;
        for (k, &t) in traj.time.iter().enumerate() {
            for (a, b) in traj.xi[k].iter().zip(&eval.eval(t)) {
                max_err = max_err.max((a - b).abs());
            }
        }
        assert!(max_err < 1e-8, "max deviation {max_err}");
    }

    #[test]
    fn projection_commutes_with_dynamics() {
        let vels = vec![
            vec![1.0, 0.3, -0.2],
            vec![0.2, -0.6, 0.4],
            vec![-0.1, 0.5, 0.9],
        ];
        let ens = Ensemble::from_velocities(vels).unwrap();
        let initial = project(&ens).unwrap();
        let plan = ControlPlan::from_constant_pieces(
            vec![
                (0.0, 0.7, vec![1.0, 0.0, 0.0]),
                (0.7, 2.0, vec![0.3, 0.3, 0.3]),
            ],
            1.0,
            2.0,
        );
        let full = simulate_full(&ens, &plan, 1e-3).unwrap();
        let projected = simulate(&initial.xi, &plan, 1e-3).unwrap();
        assert_eq!(full.time.len(), projected.time.len());
        let mut max_err: f64 = 0.0;
        for (k, snap) in full.snapshots.iter().enumerate() {
            let p = project(snap).unwrap();
            for (a, b) in p.xi.iter().zip(&projected.xi[k]) {
                max_err = max_err.max((a - b).abs());
            }
        }
        assert!(max_err < 1e-6, "max deviation {max_err}");
    }

    #[test]
    fn csv_roundtrip() {
        let plan = ControlPlan::constant(vec![1.0, 0.0], 1.0, 0.5);
        let traj = simulate(&[1.5, 0.5], &plan, 0.1).unwrap();
        let text = traj.to_csv_string();
        let back = Trajectory::read_csv(text.as_bytes(), 1.0).unwrap();
        assert_eq!(traj.time, back.time);
        assert_eq!(traj.xi, back.xi);
        assert_eq!(traj.controls, back.controls);
        assert_eq!(traj.functional, back.functional);
        assert_eq!(text, back.to_csv_string());
    }
}

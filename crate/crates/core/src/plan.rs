//! Piecewise control plans: constant control vectors or named state-feedback
//! rules on consecutive time intervals tiling `[0, T]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack applied to the budget constraint `sum(alpha) <= M` when validating
/// controls, absorbing integrator round-off.
pub const ADMISSIBLE_TOL: f64 = 1e-9;

/// Slack on the per-agent bounds `0 <= alpha_i <= 1`.
pub const BOUND_TOL: f64 = 1e-12;

/// Default tolerance under which agents count as merged when a feedback rule
/// splits control over a block. Exact equality is the theoretical notion but
/// is untenable in floating point.
pub const DEFAULT_MERGE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub enum ControlRule {
    /// Fixed control vector, one entry per agent.
    Constant(Vec<f64>),
    /// Greedy rule maximizing the instantaneous decrease of the functional
    /// under the plan budget.
    InstantaneousDecrease,
    /// Full-strength equal split over the agents currently tied at the
    /// maximal projection (integral-cost optimal rule).
    IntegralCostArgmax,
    /// Equal split of the full budget over the merged leading block.
    EqualSplitMergedBlock,
}

impl ControlRule {
    pub fn is_constant(&self) -> bool {
        matches!(self, ControlRule::Constant(_))
    }

    fn tag(&self) -> &'static str {
        match self {
            ControlRule::Constant(_) => "constant",
            ControlRule::InstantaneousDecrease => "instantaneous-decrease",
            ControlRule::IntegralCostArgmax => "integral-cost-argmax",
            ControlRule::EqualSplitMergedBlock => "equal-split-merged-block",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanPiece {
    pub start: f64,
    pub end: f64,
    pub rule: ControlRule,
}

/// A control schedule on `[0, horizon]` under total budget `budget`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPlan {
    pub budget: f64,
    pub horizon: f64,
    pub pieces: Vec<PlanPiece>,
}

impl ControlPlan {
    /// Single constant piece covering the whole horizon.
    pub fn constant(alpha: Vec<f64>, budget: f64, horizon: f64) -> Self {
        ControlPlan {
            budget,
            horizon,
            pieces: vec![PlanPiece { start: 0.0, end: horizon, rule: ControlRule::Constant(alpha) }],
        }
    }

    /// Zero control over the whole horizon (budget still declared so the
    /// admissible set is well defined).
    pub fn zero(n: usize, budget: f64, horizon: f64) -> Self {
        ControlPlan::constant(vec![0.0; n], budget, horizon)
    }

    /// Single feedback piece covering the whole horizon.
    pub fn feedback(rule: ControlRule, budget: f64, horizon: f64) -> Self {
        ControlPlan { budget, horizon, pieces: vec![PlanPiece { start: 0.0, end: horizon, rule }] }
    }

    /// Build from `(start, end, alpha)` triples.
    pub fn from_constant_pieces(pieces: Vec<(f64, f64, Vec<f64>)>, budget: f64, horizon: f64) -> Self {
        ControlPlan {
            budget,
            horizon,
            pieces: pieces
                .into_iter()
                .map(|(start, end, alpha)| PlanPiece { start, end, rule: ControlRule::Constant(alpha) })
                .collect(),
        }
    }

    /// Check the plan tiles `[0, horizon]` with admissible constant pieces
    /// for an `n`-agent system.
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::invalid_plan(format!("horizon {} must be positive", self.horizon)));
        }
        if !(self.budget > 0.0) || self.budget > n as f64 + BOUND_TOL {
            return Err(Error::BudgetOutOfRange {
                budget: self.budget,
                expected: format!("(0, {n}]"),
            });
        }
        if self.pieces.is_empty() {
            return Err(Error::invalid_plan("no pieces"));
        }
        let mut cursor = 0.0;
        for (k, piece) in self.pieces.iter().enumerate() {
            if (piece.start - cursor).abs() > 1e-9 {
                return Err(Error::invalid_plan(format!(
                    "piece {k} starts at {} but previous ends at {cursor} (gap or overlap)",
                    piece.start
                )));
            }
            if piece.end <= piece.start {
                return Err(Error::invalid_plan(format!(
                    "piece {k} has non-positive length [{}, {}]",
                    piece.start, piece.end
                )));
            }
            if let ControlRule::Constant(alpha) = &piece.rule {
                check_admissible(alpha, n, self.budget)?;
            }
            cursor = piece.end;
        }
        if (cursor - self.horizon).abs() > 1e-9 {
            return Err(Error::invalid_plan(format!(
                "pieces end at {cursor}, horizon is {}",
                self.horizon
            )));
        }
        Ok(())
    }

    pub fn is_piecewise_constant(&self) -> bool {
        self.pieces.iter().all(|p| p.rule.is_constant())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PlanRepr::from(self)).expect("plan serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: PlanRepr = serde_json::from_str(text)
            .map_err(|e| Error::invalid_input(format!("plan JSON: {e}")))?;
        repr.try_into()
    }
}

/// Admissibility of a single control vector: `alpha in [0,1]^n`,
/// `sum(alpha) <= budget` (with small numeric slack).
pub fn check_admissible(alpha: &[f64], n: usize, budget: f64) -> Result<()> {
    if alpha.len() != n {
        return Err(Error::InadmissibleControl {
            reason: format!("control has {} entries for {} agents", alpha.len(), n),
        });
    }
    for (i, &a) in alpha.iter().enumerate() {
        if !a.is_finite() || a < -BOUND_TOL || a > 1.0 + BOUND_TOL {
            return Err(Error::InadmissibleControl {
                reason: format!("alpha_{} = {a} outside [0, 1]", i + 1),
            });
        }
    }
    let total: f64 = alpha.iter().sum();
    if total > budget + ADMISSIBLE_TOL {
        return Err(Error::InadmissibleControl {
            reason: format!("sum(alpha) = {total} exceeds budget {budget}"),
        });
    }
    Ok(())
}

// Wire format: {budget, horizon, pieces: [{t0, t1, rule, alpha?}]}.
#[derive(Serialize, Deserialize)]
struct PlanRepr {
    budget: f64,
    horizon: f64,
    pieces: Vec<PieceRepr>,
}

#[derive(Serialize, Deserialize)]
struct PieceRepr {
    t0: f64,
    t1: f64,
    rule: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<Vec<f64>>,
}

impl From<&ControlPlan> for PlanRepr {
    fn from(plan: &ControlPlan) -> Self {
        PlanRepr {
            budget: plan.budget,
            horizon: plan.horizon,
            pieces: plan
                .pieces
                .iter()
                .map(|p| PieceRepr {
                    t0: p.start,
                    t1: p.end,
                    rule: p.rule.tag().to_string(),
                    alpha: match &p.rule {
                        ControlRule::Constant(a) => Some(a.clone()),
                        _ => None,
                    },
                })
                .collect(),
        }
    }
}

impl TryFrom<PlanRepr> for ControlPlan {
    type Error = Error;

    fn try_from(repr: PlanRepr) -> Result<Self> {
        let mut pieces = Vec::with_capacity(repr.pieces.len());
        for p in repr.pieces {
            let rule = match p.rule.as_str() {
                "constant" => ControlRule::Constant(p.alpha.ok_or_else(|| {
                    Error::invalid_input("constant piece without alpha")
                })?),
                "instantaneous-decrease" => ControlRule::InstantaneousDecrease,
                "integral-cost-argmax" => ControlRule::IntegralCostArgmax,
                "equal-split-merged-block" => ControlRule::EqualSplitMergedBlock,
                other => {
                    return Err(Error::invalid_input(format!("unknown rule '{other}'")));
                }
            };
            pieces.push(PlanPiece { start: p.t0, end: p.t1, rule });
        }
        Ok(ControlPlan { budget: repr.budget, horizon: repr.horizon, pieces })
    }
}

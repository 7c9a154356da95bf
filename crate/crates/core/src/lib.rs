//! Control of a velocity-alignment model: a group of agents can each either
//! track a shared target velocity or follow the group mean, with a budget on
//! the total tracking effort. The library provides the scalar reduction of
//! the model along the invariant mean-velocity direction, trajectory
//! integration, synthesis of the optimal control plans for final-time and
//! integral costs, adjoint-based optimality verification, and Monte Carlo
//! experiment harnesses.

pub mod costate;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod model;
pub mod plan;
pub mod strategies;

pub use error::{Error, Result};
pub use model::{
    canonical_order, canonical_order_xi, migration_functional, project, Ensemble, FunctionalSplit,
    ProjectedState,
};
pub use plan::{ControlPlan, ControlRule, PlanPiece};

//! Exact optimal policies, a seeded tabular learner, and comparisons between
//! policies.

mod eval;
mod learn;
mod solve;

use thiserror::Error;

use crate::editability::EditError;
use crate::graph::GraphError;
use crate::task::TaskError;

pub(crate) use eval::reachable_rows;
pub use eval::{
    evaluate, normalized_iqm, reachable_inputs, reward_bounds, rule_overlap, transfer_rules,
    ActionOverlap, EvalReport, OverlapReport,
};
pub use learn::{q_learn, LearnerConfig, QLearner};
pub use solve::{solve_optimal, solve_with, SolverConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Edit(#[from] EditError),
    #[error("joint rule space of {combinations} combinations exceeds the cap of {cap}")]
    JointBudget { combinations: usize, cap: usize },
    #[error("{0}")]
    Config(String),
}

impl From<GraphError> for PlanError {
    fn from(e: GraphError) -> Self {
        PlanError::Task(TaskError::Graph(e))
    }
}

impl PlanError {
    /// Whether the failure is a resource cap rather than a property of the input.
    pub fn is_budget(&self) -> bool {
        match self {
            PlanError::JointBudget { .. } => true,
            PlanError::Task(t) => t.is_budget(),
            _ => false,
        }
    }
}

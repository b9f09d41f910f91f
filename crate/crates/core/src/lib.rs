//! Editability analysis, exact planning and causally aligned curricula for
//! sequential decision tasks with unobserved confounding.
//!
//! A task is a finite structural causal model together with a time-ordered set
//! of actions, each seeing a declared set of input states. Source tasks are
//! copies of the task with some state mechanisms changed. The editability
//! analysis decides which states can be changed so that optimal decision rules
//! learned in the source remain optimal in the target, and the curriculum
//! routines build and train on sequences of such source tasks.

pub mod curriculum;
pub mod document;
pub mod editability;
pub mod fixtures;
pub mod graph;
pub mod planner;
pub mod task;

pub use curriculum::{Curriculum, CurriculumError, Generator, Learner, RunLog};
pub use editability::{EditError, EditabilityQuery, RelevanceGraph, SolubleOrder};
pub use fixtures::{load_fixture, FixtureId};
pub use graph::{CausalDiagram, GraphError, NodeId, NodeRole, SeparationQuery, ValidationReport};
pub use planner::{LearnerConfig, PlanError, SolverConfig};
pub use task::{
    apply_edits, DecisionRule, Edit, ExogenousVar, FiniteDomain, FiniteTask, FunctionBody, Policy,
    Rational, SourceTask, StructuralFunction, TaskBuilder, TaskError,
};

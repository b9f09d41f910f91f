use std::collections::{BTreeMap, BTreeSet};

use super::{
    check_probabilities, ExogenousVar, FiniteTask, Rational, StructuralFunction, TaskError,
};
use crate::graph::{NodeId, NodeRole};

/// A change to the SCM that keeps the causal diagram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Edit {
    /// `V ← value`. The parents stay in the diagram but are ignored.
    SetConstant { node: NodeId, value: Rational },
    /// New mechanism over a subset of the node's current parents.
    ReplaceFunction { function: StructuralFunction },
    /// New distribution for an exogenous variable; touches all its children.
    ReweightExogenous {
        name: NodeId,
        probabilities: Vec<Rational>,
    },
}

impl Edit {
    /// Endogenous nodes whose mechanism changes.
    pub fn targets(&self, task: &FiniteTask) -> BTreeSet<NodeId> {
        match self {
            Edit::SetConstant { node, .. } => BTreeSet::from([node.clone()]),
            Edit::ReplaceFunction { function } => BTreeSet::from([function.output.clone()]),
            Edit::ReweightExogenous { name, .. } => task.exogenous_children(name),
        }
    }
}

/// `T^(j)`: the target with some mechanisms changed. `delta` is the set of
/// changed nodes.
#[derive(Debug, Clone)]
pub struct SourceTask {
    pub task: FiniteTask,
    pub edits: Vec<Edit>,
    pub delta: BTreeSet<NodeId>,
}

fn require_state(task: &FiniteTask, v: &NodeId) -> Result<(), TaskError> {
    match task.diagram().role(v) {
        Some(NodeRole::State) => Ok(()),
        Some(r) => Err(TaskError::Edit(format!(
            "{v} has role {r:?}; only states can be edited"
        ))),
        None => Err(TaskError::Edit(format!("unknown node {v}"))),
    }
}

pub fn apply_edits(task: &FiniteTask, edits: &[Edit]) -> Result<SourceTask, TaskError> {
    task.engine()?;
    let mut functions: BTreeMap<NodeId, StructuralFunction> = task.functions().clone();
    let mut exogenous: Vec<ExogenousVar> = task.exogenous().to_vec();
    let mut delta = BTreeSet::new();
    for edit in edits {
        match edit {
            Edit::SetConstant { node, value } => {
                require_state(task, node)?;
                let domain = task.domain(node).expect("states have domains");
                if domain.index_of(value).is_none() {
                    return Err(TaskError::NotInDomain {
                        node: node.clone(),
                        value: value.to_string(),
                    });
                }
                let parents = functions[node].parents.clone();
                functions.insert(
                    node.clone(),
                    StructuralFunction::constant(node.clone(), parents, value.clone()),
                );
            }
            Edit::ReplaceFunction { function } => {
                let node = &function.output;
                require_state(task, node)?;
                let current: BTreeSet<&NodeId> = task.functions()[node].parents.iter().collect();
                if let Some(extra) = function.parents.iter().find(|p| !current.contains(p)) {
                    return Err(TaskError::Edit(format!(
                        "replacement for {node} adds parent {extra}"
                    )));
                }
                functions.insert(node.clone(), function.clone());
            }
            Edit::ReweightExogenous {
                name,
                probabilities,
            } => {
                let u = exogenous
                    .iter_mut()
                    .find(|u| &u.name == name)
                    .ok_or_else(|| TaskError::Edit(format!("unknown exogenous {name}")))?;
                for child in task.exogenous_children(name) {
                    require_state(task, &child)?;
                }
                let candidate =
                    ExogenousVar::new(name.clone(), u.domain.clone(), probabilities.clone());
                check_probabilities(&candidate).map_err(TaskError::Edit)?;
                *u = candidate;
            }
        }
        delta.extend(edit.targets(task));
    }
    let edited = task.with_parts(functions, exogenous);
    if let Err(e) = edited.engine() {
        return Err(match e {
            TaskError::Invalid(msg) => TaskError::Edit(msg),
            other => other,
        });
    }
    Ok(SourceTask {
        task: edited,
        edits: edits.to_vec(),
        delta,
    })
}

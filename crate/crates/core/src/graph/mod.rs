//! Mixed causal diagrams: directed edges for structural dependence, bidirected
//! edges for unobserved confounding, plus the roles and input sets that turn a
//! diagram into a decision problem.

mod dsep;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub(crate) use dsep::Indexed;

/// Name of a vertex. Ordering is lexicographic on the name, which is also the
/// order every set-valued result is reported in.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(name: impl Into<String>) -> Self {
        NodeId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

impl std::borrow::Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// Convenience for building id sets in tests and fixtures.
pub fn ids<I, S>(names: I) -> BTreeSet<NodeId>
where
    I: IntoIterator<Item = S>,
    S: Into<NodeId>,
{
    names.into_iter().map(Into::into).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    State,
    Action,
    Reward,
    EditIndicator,
    Regime,
}

impl NodeRole {
    /// Auxiliary nodes never carry data; they only exist for independence queries.
    pub fn is_auxiliary(self) -> bool {
        matches!(self, NodeRole::EditIndicator | NodeRole::Regime)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("node `{0}` already exists")]
    DuplicateNode(NodeId),
    #[error("self loop on `{0}`")]
    SelfLoop(NodeId),
    #[error("directed cycle through `{0}`")]
    Cycle(NodeId),
    #[error("node `{node}` has role {role:?}, expected {expected}")]
    WrongRole {
        node: NodeId,
        role: NodeRole,
        expected: &'static str,
    },
    #[error("query sets overlap at `{0}`")]
    OverlappingSets(NodeId),
    #[error("query set `{0}` is empty")]
    EmptySet(&'static str),
    #[error("invalid diagram: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Cycle,
    DanglingEdge,
    Role,
    MissingInputs,
    /// An action is a descendant of a later action.
    FutureActionAncestor,
    /// An input state is a descendant of the action itself or a later action.
    FutureInput,
    Function,
    Confounding,
    Probability,
    PolicySpace,
}

/// Report-style validation result. Violations make the object invalid;
/// warnings are lints only.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub(crate) fn push(&mut self, kind: ViolationKind, message: impl Into<String>) {
        self.violations.push(Violation {
            kind,
            message: message.into(),
        });
    }

    pub(crate) fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

/// A conditional-independence question `(x ⫫ y | z)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeparationQuery {
    pub x: BTreeSet<NodeId>,
    pub y: BTreeSet<NodeId>,
    pub z: BTreeSet<NodeId>,
}

impl SeparationQuery {
    pub fn new(
        x: impl IntoIterator<Item = NodeId>,
        y: impl IntoIterator<Item = NodeId>,
        z: impl IntoIterator<Item = NodeId>,
    ) -> Self {
        SeparationQuery {
            x: x.into_iter().collect(),
            y: y.into_iter().collect(),
            z: z.into_iter().collect(),
        }
    }

    fn check_shape(&self) -> Result<(), GraphError> {
        if self.x.is_empty() {
            return Err(GraphError::EmptySet("x"));
        }
        if self.y.is_empty() {
            return Err(GraphError::EmptySet("y"));
        }
        for v in &self.x {
            if self.y.contains(v) || self.z.contains(v) {
                return Err(GraphError::OverlappingSets(v.clone()));
            }
        }
        if let Some(v) = self.y.intersection(&self.z).next() {
            return Err(GraphError::OverlappingSets(v.clone()));
        }
        Ok(())
    }
}

/// Acyclic directed mixed graph with node roles and per-action input sets.
///
/// Actions are kept in time order; `action_inputs` of the i-th action is its
/// declared input state set `S_i`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CausalDiagram {
    roles: BTreeMap<NodeId, NodeRole>,
    directed: BTreeSet<(NodeId, NodeId)>,
    /// Stored with the smaller endpoint first.
    bidirected: BTreeSet<(NodeId, NodeId)>,
    actions: Vec<(NodeId, Vec<NodeId>)>,
}

impl CausalDiagram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Assemble a diagram without any checking; use [`CausalDiagram::validate`]
    /// to find out what is wrong with it.
    pub fn from_parts(
        roles: BTreeMap<NodeId, NodeRole>,
        directed: impl IntoIterator<Item = (NodeId, NodeId)>,
        bidirected: impl IntoIterator<Item = (NodeId, NodeId)>,
        actions: Vec<(NodeId, Vec<NodeId>)>,
    ) -> Self {
        CausalDiagram {
            roles,
            directed: directed.into_iter().collect(),
            bidirected: bidirected
                .into_iter()
                .map(|(a, b)| if a <= b { (a, b) } else { (b, a) })
                .collect(),
            actions,
        }
    }

    pub fn add_node(&mut self, id: impl Into<NodeId>, role: NodeRole) -> Result<(), GraphError> {
        let id = id.into();
        if self.roles.contains_key(&id) {
            return Err(GraphError::DuplicateNode(id));
        }
        self.roles.insert(id, role);
        Ok(())
    }

    pub fn add_edge(
        &mut self,
        from: impl Into<NodeId>,
        to: impl Into<NodeId>,
    ) -> Result<(), GraphError> {
        let (from, to) = (from.into(), to.into());
        self.require(&from)?;
        self.require(&to)?;
        if from == to {
            return Err(GraphError::SelfLoop(from));
        }
        self.directed.insert((from, to));
        Ok(())
    }

    pub fn add_bidirected(
        &mut self,
        a: impl Into<NodeId>,
        b: impl Into<NodeId>,
    ) -> Result<(), GraphError> {
        let (a, b) = (a.into(), b.into());
        self.require(&a)?;
        self.require(&b)?;
        if a == b {
            return Err(GraphError::SelfLoop(a));
        }
        self.bidirected.insert(if a < b { (a, b) } else { (b, a) });
        Ok(())
    }

    /// Declare (or replace) the input states of an action. Actions are ordered
    /// by first declaration.
    pub fn set_inputs<I, S>(
        &mut self,
        action: impl Into<NodeId>,
        inputs: I,
    ) -> Result<(), GraphError>
    where
        I: IntoIterator<Item = S>,
        S: Into<NodeId>,
    {
        let action = action.into();
        self.require_role(&action, NodeRole::Action, "an action")?;
        let inputs: Vec<NodeId> = inputs.into_iter().map(Into::into).collect();
        for s in &inputs {
            self.require(s)?;
        }
        match self.actions.iter_mut().find(|(a, _)| *a == action) {
            Some(entry) => entry.1 = inputs,
            None => self.actions.push((action, inputs)),
        }
        Ok(())
    }

    pub fn remove_node(&mut self, id: &NodeId) {
        self.roles.remove(id);
        self.directed.retain(|(a, b)| a != id && b != id);
        self.bidirected.retain(|(a, b)| a != id && b != id);
        self.actions.retain(|(a, _)| a != id);
        for (_, inputs) in &mut self.actions {
            inputs.retain(|s| s != id);
        }
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.roles.contains_key(id)
    }

    pub fn role(&self, id: &NodeId) -> Option<NodeRole> {
        self.roles.get(id).copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&NodeId, NodeRole)> {
        self.roles.iter().map(|(k, v)| (k, *v))
    }

    pub fn node_count(&self) -> usize {
        self.roles.len()
    }

    pub fn nodes_with_role(&self, role: NodeRole) -> BTreeSet<NodeId> {
        self.roles
            .iter()
            .filter(|(_, r)| **r == role)
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn directed_edges(&self) -> impl Iterator<Item = &(NodeId, NodeId)> {
        self.directed.iter()
    }

    pub fn bidirected_edges(&self) -> impl Iterator<Item = &(NodeId, NodeId)> {
        self.bidirected.iter()
    }

    pub fn has_edge(&self, from: &NodeId, to: &NodeId) -> bool {
        self.directed.contains(&(from.clone(), to.clone()))
    }

    pub fn has_bidirected(&self, a: &NodeId, b: &NodeId) -> bool {
        let key = if a <= b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        };
        self.bidirected.contains(&key)
    }

    /// Actions in time order.
    pub fn actions(&self) -> Vec<NodeId> {
        self.actions.iter().map(|(a, _)| a.clone()).collect()
    }

    pub fn action_inputs(&self, action: &NodeId) -> Option<&[NodeId]> {
        self.actions
            .iter()
            .find(|(a, _)| a == action)
            .map(|(_, s)| s.as_slice())
    }

    pub(crate) fn action_entries(&self) -> &[(NodeId, Vec<NodeId>)] {
        &self.actions
    }

    pub fn parents(&self, id: &NodeId) -> BTreeSet<NodeId> {
        self.directed
            .iter()
            .filter(|(_, b)| b == id)
            .map(|(a, _)| a.clone())
            .collect()
    }

    pub fn children(&self, id: &NodeId) -> BTreeSet<NodeId> {
        self.directed
            .iter()
            .filter(|(a, _)| a == id)
            .map(|(_, b)| b.clone())
            .collect()
    }

    fn require(&self, id: &NodeId) -> Result<(), GraphError> {
        if self.roles.contains_key(id) {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(id.clone()))
        }
    }

    fn require_role(
        &self,
        id: &NodeId,
        role: NodeRole,
        expected: &'static str,
    ) -> Result<(), GraphError> {
        match self.roles.get(id) {
            None => Err(GraphError::UnknownNode(id.clone())),
            Some(r) if *r == role => Ok(()),
            Some(r) => Err(GraphError::WrongRole {
                node: id.clone(),
                role: *r,
                expected,
            }),
        }
    }

    /// `An(s)`: ancestors including `s` itself.
    pub fn ancestors(&self, s: &BTreeSet<NodeId>) -> Result<BTreeSet<NodeId>, GraphError> {
        self.closure(s, |d, v| d.parents(v))
    }

    /// `De(s)`: descendants including `s` itself.
    pub fn descendants(&self, s: &BTreeSet<NodeId>) -> Result<BTreeSet<NodeId>, GraphError> {
        self.closure(s, |d, v| d.children(v))
    }

    fn closure(
        &self,
        s: &BTreeSet<NodeId>,
        step: impl Fn(&Self, &NodeId) -> BTreeSet<NodeId>,
    ) -> Result<BTreeSet<NodeId>, GraphError> {
        for v in s {
            self.require(v)?;
        }
        let mut out = s.clone();
        let mut queue: VecDeque<NodeId> = s.iter().cloned().collect();
        while let Some(v) = queue.pop_front() {
            for w in step(self, &v) {
                if out.insert(w.clone()) {
                    queue.push_back(w);
                }
            }
        }
        Ok(out)
    }

    /// Deterministic topological order; among ready nodes the smallest name goes first.
    pub fn topological_order(&self) -> Result<Vec<NodeId>, GraphError> {
        let mut indegree: BTreeMap<&NodeId, usize> = self.roles.keys().map(|k| (k, 0)).collect();
        for (a, b) in &self.directed {
            self.require(a)?;
            *indegree
                .get_mut(b)
                .ok_or_else(|| GraphError::UnknownNode(b.clone()))? += 1;
        }
        let mut ready: BTreeSet<&NodeId> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(k, _)| *k)
            .collect();
        let mut order = Vec::with_capacity(self.roles.len());
        while let Some(v) = ready.pop_first() {
            order.push(v.clone());
            for (a, b) in self.directed.range((v.clone(), NodeId::new(""))..) {
                if a != v {
                    break;
                }
                let d = indegree.get_mut(b).expect("checked above");
                *d -= 1;
                if *d == 0 {
                    ready.insert(b);
                }
            }
        }
        if order.len() < self.roles.len() {
            let stuck = indegree
                .iter()
                .find(|(_, d)| **d > 0)
                .map(|(k, _)| (*k).clone())
                .expect("some node must remain");
            return Err(GraphError::Cycle(stuck));
        }
        Ok(order)
    }

    /// Structural checks. Never fails; an empty violation list means valid.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();

        for (a, b) in &self.directed {
            for v in [a, b] {
                if !self.roles.contains_key(v) {
                    report.push(
                        ViolationKind::DanglingEdge,
                        format!("edge {a} -> {b} references unknown node {v}"),
                    );
                }
            }
            if a == b {
                report.push(ViolationKind::Cycle, format!("self loop on {a}"));
            }
        }
        for (a, b) in &self.bidirected {
            for v in [a, b] {
                match self.roles.get(v) {
                    None => report.push(
                        ViolationKind::DanglingEdge,
                        format!("edge {a} <-> {b} references unknown node {v}"),
                    ),
                    Some(r) if r.is_auxiliary() => report.push(
                        ViolationKind::Role,
                        format!("bidirected edge {a} <-> {b} touches auxiliary node {v}"),
                    ),
                    _ => {}
                }
            }
            if a == b {
                report.push(ViolationKind::Role, format!("bidirected self loop on {a}"));
            }
        }
        if report.has(ViolationKind::DanglingEdge) {
            return report;
        }

        for (a, b) in &self.directed {
            if self.roles[b].is_auxiliary() {
                report.push(
                    ViolationKind::Role,
                    format!("auxiliary node {b} must not have parents (edge {a} -> {b})"),
                );
            }
        }

        if let Err(GraphError::Cycle(v)) = self.topological_order() {
            report.push(ViolationKind::Cycle, format!("directed cycle through {v}"));
            return report;
        }

        let declared: BTreeSet<&NodeId> = self.actions.iter().map(|(a, _)| a).collect();
        for (id, role) in &self.roles {
            if *role == NodeRole::Action && !declared.contains(id) {
                report.push(
                    ViolationKind::MissingInputs,
                    format!("action {id} has no declared inputs"),
                );
            }
        }
        for (a, inputs) in &self.actions {
            match self.roles.get(a) {
                Some(NodeRole::Action) => {}
                _ => report.push(
                    ViolationKind::Role,
                    format!("inputs declared for non-action {a}"),
                ),
            }
            for s in inputs {
                match self.roles.get(s) {
                    None => report.push(
                        ViolationKind::DanglingEdge,
                        format!("input {s} of {a} is unknown"),
                    ),
                    Some(r) if r.is_auxiliary() => report.push(
                        ViolationKind::Role,
                        format!("input {s} of {a} is an auxiliary node"),
                    ),
                    _ => {}
                }
            }
        }
        if report.has(ViolationKind::DanglingEdge) {
            return report;
        }

        // Policy-space legality over the time-ordered actions.
        for (i, (action, inputs)) in self.actions.iter().enumerate() {
            let later: BTreeSet<NodeId> = self.actions[i + 1..]
                .iter()
                .map(|(a, _)| a.clone())
                .collect();
            let de_later = self.descendants(&later).unwrap_or_default();
            if de_later.contains(action) {
                report.push(
                    ViolationKind::FutureActionAncestor,
                    format!("action {action} is a descendant of a later action"),
                );
            }
            let mut from_now = later;
            from_now.insert(action.clone());
            let de_now = self.descendants(&from_now).unwrap_or_default();
            for s in inputs {
                if de_now.contains(s) {
                    report.push(
                        ViolationKind::FutureInput,
                        format!(
                            "input {s} of {action} is a descendant of {action} or a later action"
                        ),
                    );
                }
            }
        }

        for y in self.nodes_with_role(NodeRole::Reward) {
            let endogenous_children: Vec<NodeId> = self
                .children(&y)
                .into_iter()
                .filter(|c| !self.roles[c].is_auxiliary())
                .collect();
            if !endogenous_children.is_empty() {
                report.warnings.push(format!(
                    "reward {y} has endogenous children {endogenous_children:?}"
                ));
            }
            let strict = self
                .descendants(&BTreeSet::from([y.clone()]))
                .unwrap_or_default();
            for (a, inputs) in &self.actions {
                for s in inputs {
                    if *s != y && strict.contains(s) {
                        report
                            .warnings
                            .push(format!("input {s} of {a} is downstream of reward {y}"));
                    }
                }
            }
        }
        report
    }

    fn require_valid(&self) -> Result<(), GraphError> {
        let report = self.validate();
        match report.violations.first() {
            None => Ok(()),
            Some(v) => Err(GraphError::Invalid(v.message.clone())),
        }
    }

    /// `G_π`: every action's incoming arrows are replaced by arrows from its
    /// declared inputs. Bidirected edges at actions are incoming arrowheads as
    /// well and are dropped.
    pub fn intervened(&self) -> Result<CausalDiagram, GraphError> {
        self.require_valid()?;
        let mut out = self.clone();
        let actions: BTreeSet<&NodeId> = self.actions.iter().map(|(a, _)| a).collect();
        out.directed.retain(|(_, b)| !actions.contains(b));
        out.bidirected
            .retain(|(a, b)| !actions.contains(a) && !actions.contains(b));
        for (a, inputs) in &self.actions {
            for s in inputs {
                out.directed.insert((s.clone(), a.clone()));
            }
        }
        Ok(out)
    }

    fn fresh_name(&self, stem: &str) -> NodeId {
        let mut candidate = NodeId::new(stem);
        let mut k = 1;
        while self.roles.contains_key(&candidate) {
            candidate = NodeId::new(format!("{stem}_{k}"));
            k += 1;
        }
        candidate
    }

    /// Add one edit indicator pointing at every target.
    pub fn augment_edit_indicators(
        &self,
        targets: &BTreeSet<NodeId>,
    ) -> Result<(CausalDiagram, NodeId), GraphError> {
        if targets.is_empty() {
            return Err(GraphError::EmptySet("targets"));
        }
        for t in targets {
            match self.roles.get(t) {
                None => return Err(GraphError::UnknownNode(t.clone())),
                Some(NodeRole::State) => {}
                Some(r) => {
                    return Err(GraphError::WrongRole {
                        node: t.clone(),
                        role: *r,
                        expected: "a state",
                    })
                }
            }
        }
        let mut out = self.clone();
        let tau = self.fresh_name("tau");
        out.roles.insert(tau.clone(), NodeRole::EditIndicator);
        for t in targets {
            out.directed.insert((tau.clone(), t.clone()));
        }
        Ok((out, tau))
    }

    /// Add a regime node with a single edge into `action`.
    pub fn augment_regime(&self, action: &NodeId) -> Result<(CausalDiagram, NodeId), GraphError> {
        self.require_role(action, NodeRole::Action, "an action")?;
        let mut out = self.clone();
        let regime = self.fresh_name(&format!("pi_{action}"));
        out.roles.insert(regime.clone(), NodeRole::Regime);
        out.directed.insert((regime.clone(), action.clone()));
        Ok((out, regime))
    }

    /// Exact d-separation by reachability; bidirected edges are expanded into
    /// latent common parents internally.
    pub fn d_separated(&self, q: &SeparationQuery) -> Result<bool, GraphError> {
        q.check_shape()?;
        let idx = Indexed::build(self)?;
        let lookup = |s: &BTreeSet<NodeId>| -> Result<Vec<usize>, GraphError> {
            s.iter()
                .map(|v| {
                    idx.index_of(v)
                        .ok_or_else(|| GraphError::UnknownNode(v.clone()))
                })
                .collect()
        };
        Ok(idx.separated(&lookup(&q.x)?, &lookup(&q.y)?, &lookup(&q.z)?))
    }

    /// Like [`CausalDiagram::d_separated`] but tolerant of an empty `y`, which
    /// is vacuously separated.
    pub(crate) fn separated_or_vacuous(
        &self,
        x: &BTreeSet<NodeId>,
        y: &BTreeSet<NodeId>,
        z: &BTreeSet<NodeId>,
    ) -> Result<bool, GraphError> {
        if y.is_empty() {
            return Ok(true);
        }
        self.d_separated(&SeparationQuery {
            x: x.clone(),
            y: y.clone(),
            z: z.clone(),
        })
    }
}

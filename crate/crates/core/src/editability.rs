//! Which states may be edited without breaking the optimality of decision
//! rules, and in which order actions can be optimized.
//!
//! A set `Δ` of states is editable with respect to actions `A` when, after
//! adding one indicator `τ` pointing into every member of `Δ`, each `X ∈ A`
//! has `τ` d-separated from the rewards downstream of `X` given `X` and its
//! inputs, all in the intervened diagram.
//!
//! Every function here accepts either the task diagram or its intervened
//! form; the intervention is applied internally and is idempotent.

use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{CausalDiagram, GraphError, NodeId, NodeRole};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EditError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("the edit set is empty")]
    EmptyDelta,
    #[error("the action set is empty")]
    EmptyActions,
    #[error("`{node}` has role {role:?} and cannot be edited")]
    NotEditable { node: NodeId, role: NodeRole },
    #[error("`{0}` is not an action")]
    NotAnAction(NodeId),
    #[error("task is not soluble: the regime of {j} reaches the rewards of {i}")]
    NotSoluble {
        /// Earlier action whose regime is relevant.
        j: NodeId,
        /// Later action whose rewards it reaches.
        i: NodeId,
        /// 1-based time indices of `j` and `i`.
        witness: (usize, usize),
        /// Strongly connected component of the relevance graph containing both.
        scc: Vec<NodeId>,
    },
    #[error("maximal edit set has {0} members, too many to list")]
    TooMany(usize),
}

/// `(τ ⫫ Y ∩ De(X) | X, S_X)` for every `X` in the action set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditabilityQuery {
    pub delta: BTreeSet<NodeId>,
    pub actions: BTreeSet<NodeId>,
}

fn require_actions(d: &CausalDiagram, actions: &BTreeSet<NodeId>) -> Result<(), EditError> {
    if actions.is_empty() {
        return Err(EditError::EmptyActions);
    }
    for a in actions {
        match d.role(a) {
            Some(NodeRole::Action) => {}
            Some(_) => return Err(EditError::NotAnAction(a.clone())),
            None => return Err(GraphError::UnknownNode(a.clone()).into()),
        }
    }
    Ok(())
}

fn require_editable(d: &CausalDiagram, delta: &BTreeSet<NodeId>) -> Result<(), EditError> {
    for v in delta {
        match d.role(v) {
            Some(NodeRole::State) => {}
            Some(role) => {
                return Err(EditError::NotEditable {
                    node: v.clone(),
                    role,
                })
            }
            None => return Err(GraphError::UnknownNode(v.clone()).into()),
        }
    }
    Ok(())
}

/// Per-action data for repeated independence tests.
struct Targets {
    /// `(X ∪ S_X, rewards downstream of X that are not conditioned on)`.
    per_action: Vec<(BTreeSet<NodeId>, BTreeSet<NodeId>)>,
}

impl Targets {
    fn new(g: &CausalDiagram, actions: &BTreeSet<NodeId>) -> Result<Self, EditError> {
        let rewards = g.nodes_with_role(NodeRole::Reward);
        let mut per_action = Vec::new();
        for a in actions {
            let mut z: BTreeSet<NodeId> =
                g.action_inputs(a).unwrap_or(&[]).iter().cloned().collect();
            z.insert(a.clone());
            let de = g.descendants(&BTreeSet::from([a.clone()]))?;
            let y = rewards
                .iter()
                .filter(|r| de.contains(*r) && !z.contains(*r))
                .cloned()
                .collect();
            per_action.push((z, y));
        }
        Ok(Targets { per_action })
    }

    /// Whether an indicator into `delta` is separated from every action's rewards.
    fn editable(&self, g: &CausalDiagram, delta: &BTreeSet<NodeId>) -> Result<bool, EditError> {
        let (aug, tau) = g.augment_edit_indicators(delta)?;
        let x = BTreeSet::from([tau]);
        for (z, y) in &self.per_action {
            if !aug.separated_or_vacuous(&x, y, z)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Def-5 editability test.
///
/// A published pseudocode variant of this test returns false exactly when the
/// independence holds; that is inverted relative to the definition, and this
/// function follows the definition. An empty `delta` is rejected rather than
/// reported as vacuously editable.
pub fn is_edit(d: &CausalDiagram, q: &EditabilityQuery) -> Result<bool, EditError> {
    if q.delta.is_empty() {
        return Err(EditError::EmptyDelta);
    }
    let g = d.intervened()?;
    require_actions(&g, &q.actions)?;
    require_editable(&g, &q.delta)?;
    Targets::new(&g, &q.actions)?.editable(&g, &q.delta)
}

/// States that may be considered for editing: everything but actions,
/// rewards and auxiliary nodes, sorted by name.
pub fn edit_candidates(d: &CausalDiagram) -> Vec<NodeId> {
    d.nodes_with_role(NodeRole::State).into_iter().collect()
}

/// Maximal editable set, scanning candidates in name order.
pub fn find_max_edit(
    d: &CausalDiagram,
    actions: &BTreeSet<NodeId>,
) -> Result<BTreeSet<NodeId>, EditError> {
    find_max_edit_in_order(d, actions, &edit_candidates(d))
}

/// Greedy scan: add each candidate tentatively and drop it again if the
/// accumulated set stops being editable. The result does not depend on the
/// order of `candidates`.
pub fn find_max_edit_in_order(
    d: &CausalDiagram,
    actions: &BTreeSet<NodeId>,
    candidates: &[NodeId],
) -> Result<BTreeSet<NodeId>, EditError> {
    let g = d.intervened()?;
    require_actions(&g, actions)?;
    let pool: BTreeSet<NodeId> = candidates.iter().cloned().collect();
    require_editable(&g, &pool)?;
    let targets = Targets::new(&g, actions)?;
    let mut delta = BTreeSet::new();
    for v in candidates {
        delta.insert(v.clone());
        if !targets.editable(&g, &delta)? {
            delta.remove(v);
        }
    }
    Ok(delta)
}

/// Maximal editable subset of `pool`; with no pool this is
/// [`find_max_edit`]. May be empty.
pub fn find_edit(
    d: &CausalDiagram,
    actions: &BTreeSet<NodeId>,
    pool: Option<&BTreeSet<NodeId>>,
) -> Result<BTreeSet<NodeId>, EditError> {
    match pool {
        None => find_max_edit(d, actions),
        Some(p) => find_max_edit_in_order(d, actions, &p.iter().cloned().collect::<Vec<_>>()),
    }
}

/// Every nonempty subset of the maximal editable set, by descending bitmask
/// over its sorted members (the first member is the most significant bit).
#[derive(Debug, Clone)]
pub struct ListEdits {
    members: Vec<NodeId>,
    mask: u128,
}

impl Iterator for ListEdits {
    type Item = BTreeSet<NodeId>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.mask == 0 {
            return None;
        }
        let k = self.members.len();
        let set = (0..k)
            .filter(|i| self.mask >> (k - 1 - i) & 1 == 1)
            .map(|i| self.members[i].clone())
            .collect();
        self.mask -= 1;
        Some(set)
    }
}

pub fn list_edits(d: &CausalDiagram, actions: &BTreeSet<NodeId>) -> Result<ListEdits, EditError> {
    let members: Vec<NodeId> = find_max_edit(d, actions)?.into_iter().collect();
    if members.len() > 127 {
        return Err(EditError::TooMany(members.len()));
    }
    let mask = if members.is_empty() {
        0
    } else {
        (1u128 << members.len()) - 1
    };
    Ok(ListEdits { members, mask })
}

/// `π' ⫫̸ Y ∩ De(X) | S_X, X` with a regime node added on `source`.
fn regime_reaches(g: &CausalDiagram, source: &NodeId, target: &NodeId) -> Result<bool, EditError> {
    let (aug, regime) = g.augment_regime(source)?;
    let targets = Targets::new(g, &BTreeSet::from([target.clone()]))?;
    let (z, y) = &targets.per_action[0];
    Ok(!aug.separated_or_vacuous(&BTreeSet::from([regime]), y, z)?)
}

/// Directed graph over actions: `X' → X` when the decision rule of `X'`
/// matters for optimizing `X`. Components are listed in the order they must
/// be optimized (a component comes after everything pointing into it); ties
/// go to the component containing the latest action in time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RelevanceGraph {
    pub actions: Vec<NodeId>,
    pub edges: BTreeSet<(NodeId, NodeId)>,
    pub components: Vec<Vec<NodeId>>,
}

impl RelevanceGraph {
    pub fn is_acyclic(&self) -> bool {
        self.components.iter().all(|c| c.len() == 1)
    }

    pub fn component_of(&self, a: &NodeId) -> Option<&Vec<NodeId>> {
        self.components.iter().find(|c| c.contains(a))
    }
}

pub fn relevance_graph(d: &CausalDiagram) -> Result<RelevanceGraph, EditError> {
    let g = d.intervened()?;
    let actions = g.actions();
    let time: BTreeMap<&NodeId, usize> = actions.iter().enumerate().map(|(i, a)| (a, i)).collect();
    let mut edges = BTreeSet::new();
    for src in &actions {
        for dst in &actions {
            if src != dst && regime_reaches(&g, src, dst)? {
                edges.insert((src.clone(), dst.clone()));
            }
        }
    }

    let mut pg: DiGraph<usize, ()> = DiGraph::new();
    let nodes: Vec<_> = (0..actions.len()).map(|i| pg.add_node(i)).collect();
    for (a, b) in &edges {
        pg.add_edge(nodes[time[a]], nodes[time[b]], ());
    }
    let sccs: Vec<Vec<usize>> = tarjan_scc(&pg)
        .into_iter()
        .map(|c| {
            let mut members: Vec<usize> = c.into_iter().map(|n| pg[n]).collect();
            members.sort_unstable();
            members
        })
        .collect();
    let mut comp_of = vec![0; actions.len()];
    for (k, c) in sccs.iter().enumerate() {
        for &m in c {
            comp_of[m] = k;
        }
    }
    let mut indegree = vec![0usize; sccs.len()];
    let mut succ: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); sccs.len()];
    for (a, b) in &edges {
        let (ca, cb) = (comp_of[time[a]], comp_of[time[b]]);
        if ca != cb && succ[ca].insert(cb) {
            indegree[cb] += 1;
        }
    }
    // Ready components keyed by their latest member, largest first.
    let mut ready: BTreeSet<(usize, usize)> = (0..sccs.len())
        .filter(|&k| indegree[k] == 0)
        .map(|k| (sccs[k][sccs[k].len() - 1], k))
        .collect();
    let mut components = Vec::with_capacity(sccs.len());
    while let Some((_, k)) = ready.pop_last() {
        components.push(sccs[k].iter().map(|&i| actions[i].clone()).collect());
        for &next in &succ[k] {
            indegree[next] -= 1;
            if indegree[next] == 0 {
                ready.insert((sccs[next][sccs[next].len() - 1], next));
            }
        }
    }
    Ok(RelevanceGraph {
        actions,
        edges,
        components,
    })
}

/// Outcome of the direct solubility test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Solubility {
    pub soluble: bool,
    /// 1-based `(j, i)` with `j < i` whose regime test fails, if any.
    pub witness: Option<(usize, usize)>,
}

/// Soluble iff for all `j < i`: `(Y ∩ De(X_i) ⫫ π_j | S_i, X_i)`. Decided
/// from regime tests directly, independently of [`relevance_graph`].
pub fn is_soluble(d: &CausalDiagram) -> Result<Solubility, EditError> {
    let g = d.intervened()?;
    let actions = g.actions();
    for i in 0..actions.len() {
        for j in 0..i {
            if regime_reaches(&g, &actions[j], &actions[i])? {
                return Ok(Solubility {
                    soluble: false,
                    witness: Some((j + 1, i + 1)),
                });
            }
        }
    }
    Ok(Solubility {
        soluble: true,
        witness: None,
    })
}

/// Actions in the order they are optimized; the first entry is solved first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct SolubleOrder(pub Vec<NodeId>);

impl SolubleOrder {
    pub fn position(&self, a: &NodeId) -> Option<usize> {
        self.0.iter().position(|x| x == a)
    }

    pub fn as_slice(&self) -> &[NodeId] {
        &self.0
    }
}

pub fn soluble_order(d: &CausalDiagram) -> Result<SolubleOrder, EditError> {
    let s = is_soluble(d)?;
    let rg = relevance_graph(d)?;
    if let Some((j, i)) = s.witness {
        let (xj, xi) = (rg.actions[j - 1].clone(), rg.actions[i - 1].clone());
        let scc = rg.component_of(&xi).cloned().unwrap_or_default();
        return Err(EditError::NotSoluble {
            j: xj,
            i: xi,
            witness: (j, i),
            scc,
        });
    }
    Ok(SolubleOrder(rg.components.into_iter().flatten().collect()))
}

/// `actions` plus every action that precedes one of them in the order.
pub fn expanded_action_set(
    order: &SolubleOrder,
    actions: &BTreeSet<NodeId>,
) -> Result<BTreeSet<NodeId>, EditError> {
    let mut last = None;
    for a in actions {
        let p = order
            .position(a)
            .ok_or_else(|| EditError::NotAnAction(a.clone()))?;
        last = Some(last.map_or(p, |q: usize| q.max(p)));
    }
    let mut out = actions.clone();
    if let Some(p) = last {
        out.extend(order.0[..p].iter().cloned());
    }
    Ok(out)
}

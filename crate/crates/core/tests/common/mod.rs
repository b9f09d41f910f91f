//! Random instances and brute-force oracles shared by the integration tests.
//! Nothing here calls the library's separation, editability or solver code.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use causal_curriculum::editability::is_soluble;
use causal_curriculum::task::{int, rational};
use causal_curriculum::{
    CausalDiagram, ExogenousVar, FiniteDomain, FiniteTask, NodeId, NodeRole, Policy, Rational,
    StructuralFunction,
};
use num::Zero;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;
pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn n(s: &str) -> NodeId {
    NodeId::from(s)
}

pub fn set(names: &[&str]) -> BTreeSet<NodeId> {
    names.iter().map(|s| n(s)).collect()
}

/// Random mixed graph over `V0..V{k-1}` with every node a state.
pub fn random_admg(r: &mut TestRng, max_nodes: usize) -> CausalDiagram {
    let k = r.random_range(2..=max_nodes);
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(r);
    let p_dir = r.random_range(0.15..0.55);
    let p_bi = r.random_range(0.0..0.3);
    let mut d = CausalDiagram::new();
    for i in 0..k {
        d.add_node(format!("V{i}"), NodeRole::State).unwrap();
    }
    for i in 0..k {
        for j in i + 1..k {
            let (a, b) = (format!("V{}", order[i]), format!("V{}", order[j]));
            if r.random_bool(p_dir) {
                d.add_edge(a.as_str(), b.as_str()).unwrap();
            }
            if r.random_bool(p_bi) {
                d.add_bidirected(a.as_str(), b.as_str()).unwrap();
            }
        }
    }
    d
}

/// Random disjoint `(x, y, z)` over the graph's nodes, `x` and `y` non-empty.
pub fn random_query(
    r: &mut TestRng,
    d: &CausalDiagram,
) -> (BTreeSet<NodeId>, BTreeSet<NodeId>, BTreeSet<NodeId>) {
    let mut nodes: Vec<NodeId> = d.nodes().map(|(v, _)| v.clone()).collect();
    nodes.shuffle(r);
    let nx = 1 + usize::from(nodes.len() > 3 && r.random_bool(0.3));
    let x: BTreeSet<NodeId> = nodes.drain(..nx).collect();
    let ny = 1 + usize::from(nodes.len() > 3 && r.random_bool(0.3));
    let y: BTreeSet<NodeId> = nodes.drain(..ny).collect();
    let nz = r.random_range(0..=nodes.len().min(3));
    let z: BTreeSet<NodeId> = nodes.drain(..nz).collect();
    (x, y, z)
}

/// An edge end: the neighbour and whether the edge has an arrowhead at the
/// current node and at the neighbour.
#[derive(Clone, Copy)]
struct End {
    to: usize,
    head_here: bool,
    head_there: bool,
}

/// Plain mixed graph used by the oracles.
pub struct Mixed {
    pub names: Vec<NodeId>,
    index: BTreeMap<NodeId, usize>,
    directed: Vec<(usize, usize)>,
    adj: Vec<Vec<End>>,
}

impl Mixed {
    pub fn new(
        names: impl IntoIterator<Item = NodeId>,
        directed: impl IntoIterator<Item = (NodeId, NodeId)>,
        bidirected: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Self {
        let names: Vec<NodeId> = names.into_iter().collect();
        let index: BTreeMap<NodeId, usize> = names
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, v)| (v, i))
            .collect();
        let mut adj = vec![Vec::new(); names.len()];
        let mut dir = Vec::new();
        for (a, b) in directed {
            let (i, j) = (index[&a], index[&b]);
            dir.push((i, j));
            adj[i].push(End {
                to: j,
                head_here: false,
                head_there: true,
            });
            adj[j].push(End {
                to: i,
                head_here: true,
                head_there: false,
            });
        }
        for (a, b) in bidirected {
            let (i, j) = (index[&a], index[&b]);
            adj[i].push(End {
                to: j,
                head_here: true,
                head_there: true,
            });
            adj[j].push(End {
                to: i,
                head_here: true,
                head_there: true,
            });
        }
        Mixed {
            names,
            index,
            directed: dir,
            adj,
        }
    }

    pub fn from_diagram(d: &CausalDiagram) -> Self {
        Mixed::new(
            d.nodes().map(|(v, _)| v.clone()),
            d.directed_edges().cloned(),
            d.bidirected_edges().cloned(),
        )
    }

    /// Nodes with a directed path into `z`, including `z`.
    fn ancestors_of(&self, z: &BTreeSet<usize>) -> BTreeSet<usize> {
        let mut out = z.clone();
        loop {
            let before = out.len();
            for &(a, b) in &self.directed {
                if out.contains(&b) {
                    out.insert(a);
                }
            }
            if out.len() == before {
                return out;
            }
        }
    }

    pub fn descendants_of(&self, v: &NodeId) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::from([self.index[v]]);
        loop {
            let before = out.len();
            for &(a, b) in &self.directed {
                if out.contains(&a) {
                    out.insert(b);
                }
            }
            if out.len() == before {
                return out.into_iter().map(|i| self.names[i].clone()).collect();
            }
        }
    }

    /// Every simple path between `x` and `y` is blocked by `z`, found by
    /// enumerating the paths one by one.
    pub fn separated(
        &self,
        x: &BTreeSet<NodeId>,
        y: &BTreeSet<NodeId>,
        z: &BTreeSet<NodeId>,
    ) -> bool {
        let zi: BTreeSet<usize> = z.iter().map(|v| self.index[v]).collect();
        let anc = self.ancestors_of(&zi);
        let yi: BTreeSet<usize> = y.iter().map(|v| self.index[v]).collect();
        for s in x {
            let s = self.index[s];
            let mut visited = vec![false; self.names.len()];
            visited[s] = true;
            if self.active_path_from(s, None, &yi, &zi, &anc, &mut visited) {
                return false;
            }
        }
        true
    }

    /// Depth-first search over simple paths. `arrived` says whether the edge
    /// used to reach `v` has an arrowhead at `v` (`None` at the start).
    fn active_path_from(
        &self,
        v: usize,
        arrived: Option<bool>,
        y: &BTreeSet<usize>,
        z: &BTreeSet<usize>,
        anc: &BTreeSet<usize>,
        visited: &mut [bool],
    ) -> bool {
        if arrived.is_some() && y.contains(&v) {
            return true;
        }
        for e in &self.adj[v] {
            if visited[e.to] {
                continue;
            }
            if let Some(head_in) = arrived {
                let collider = head_in && e.head_here;
                let open = if collider {
                    anc.contains(&v)
                } else {
                    !z.contains(&v)
                };
                if !open {
                    continue;
                }
            }
            visited[e.to] = true;
            let found = self.active_path_from(e.to, Some(e.head_there), y, z, anc, visited);
            visited[e.to] = false;
            if found {
                return true;
            }
        }
        false
    }
}

/// The intervened diagram rebuilt from scratch: action parents become their
/// inputs and nothing else touches an action with an arrowhead.
pub fn oracle_intervened(
    d: &CausalDiagram,
) -> (Vec<NodeId>, Vec<(NodeId, NodeId)>, Vec<(NodeId, NodeId)>) {
    let actions: BTreeSet<NodeId> = d.actions().into_iter().collect();
    let names: Vec<NodeId> = d.nodes().map(|(v, _)| v.clone()).collect();
    let mut directed: Vec<(NodeId, NodeId)> = d
        .directed_edges()
        .filter(|(_, b)| !actions.contains(b))
        .cloned()
        .collect();
    for a in &actions {
        for s in d.action_inputs(a).unwrap() {
            directed.push((s.clone(), a.clone()));
        }
    }
    let bidirected = d
        .bidirected_edges()
        .filter(|(a, b)| !actions.contains(a) && !actions.contains(b))
        .cloned()
        .collect();
    (names, directed, bidirected)
}

/// Editability by explicit path enumeration in the rebuilt intervened
/// diagram with a fresh indicator pointing into `delta`.
pub fn oracle_is_edit(
    d: &CausalDiagram,
    delta: &BTreeSet<NodeId>,
    actions: &BTreeSet<NodeId>,
) -> bool {
    let (mut names, mut directed, bidirected) = oracle_intervened(d);
    let tau = n("__indicator__");
    names.push(tau.clone());
    for v in delta {
        directed.push((tau.clone(), v.clone()));
    }
    let g = Mixed::new(names, directed, bidirected);
    let rewards: BTreeSet<NodeId> = d
        .nodes()
        .filter(|(_, r)| *r == NodeRole::Reward)
        .map(|(v, _)| v.clone())
        .collect();
    for a in actions {
        let mut z: BTreeSet<NodeId> = d.action_inputs(a).unwrap().iter().cloned().collect();
        z.insert(a.clone());
        let de = g.descendants_of(a);
        let y: BTreeSet<NodeId> = rewards
            .iter()
            .filter(|r| de.contains(*r) && !z.contains(*r))
            .cloned()
            .collect();
        if !y.is_empty() && !g.separated(&BTreeSet::from([tau.clone()]), &y, &z) {
            return false;
        }
    }
    true
}

/// All editable subsets of the states, by brute force; returns the maximal
/// ones under inclusion.
pub fn oracle_maximal_edits(
    d: &CausalDiagram,
    actions: &BTreeSet<NodeId>,
) -> Vec<BTreeSet<NodeId>> {
    let states: Vec<NodeId> = d
        .nodes()
        .filter(|(_, r)| *r == NodeRole::State)
        .map(|(v, _)| v.clone())
        .collect();
    assert!(states.len() <= 16, "too many states for brute force");
    let mut editable = vec![BTreeSet::new()];
    for mask in 1u32..(1 << states.len()) {
        let s: BTreeSet<NodeId> = (0..states.len())
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| states[i].clone())
            .collect();
        if oracle_is_edit(d, &s, actions) {
            editable.push(s);
        }
    }
    editable
        .iter()
        .filter(|s| !editable.iter().any(|t| t.len() > s.len() && s.is_subset(t)))
        .cloned()
        .collect()
}

/// Random time-ordered task diagram with at most `max_nodes` nodes: per step
/// some states, one action seeing earlier states, and one reward. Edges only
/// go forward in that order; bidirected edges join non-action nodes.
pub fn random_task_diagram(r: &mut TestRng, max_nodes: usize) -> CausalDiagram {
    loop {
        let steps = r.random_range(1..=3usize);
        let mut order: Vec<(NodeId, NodeRole)> = Vec::new();
        for i in 1..=steps {
            for k in 0..r.random_range(1..=2) {
                order.push((n(&format!("S{i}{}", (b'a' + k) as char)), NodeRole::State));
            }
            order.push((n(&format!("X{i}")), NodeRole::Action));
            order.push((n(&format!("Y{i}")), NodeRole::Reward));
        }
        if order.len() > max_nodes {
            continue;
        }
        let mut d = CausalDiagram::new();
        for (v, role) in &order {
            d.add_node(v.clone(), *role).unwrap();
        }
        let p = r.random_range(0.2..0.6);
        for i in 0..order.len() {
            let (a, ra) = &order[i];
            if *ra == NodeRole::Reward {
                continue;
            }
            for (b, rb) in &order[i + 1..] {
                if *rb != NodeRole::Action && r.random_bool(p) {
                    d.add_edge(a.clone(), b.clone()).unwrap();
                }
            }
        }
        for i in 0..order.len() {
            for j in i + 1..order.len() {
                let (ra, rb) = (order[i].1, order[j].1);
                if ra != NodeRole::Action && rb != NodeRole::Action && r.random_bool(0.12) {
                    d.add_bidirected(order[i].0.clone(), order[j].0.clone())
                        .unwrap();
                }
            }
        }
        for i in 0..order.len() {
            if order[i].1 != NodeRole::Action {
                continue;
            }
            let earlier: Vec<NodeId> = order[..i]
                .iter()
                .filter(|(_, r)| *r == NodeRole::State)
                .map(|(v, _)| v.clone())
                .collect();
            let inputs: Vec<NodeId> = earlier.into_iter().filter(|_| r.random_bool(0.6)).collect();
            for s in &inputs {
                d.add_edge(s.clone(), order[i].0.clone()).unwrap();
            }
            d.set_inputs(order[i].0.clone(), inputs).unwrap();
        }
        if d.validate().is_valid() {
            return d;
        }
    }
}

const PROBS: [(i64, i64); 5] = [(1, 4), (1, 3), (1, 2), (2, 3), (3, 4)];

/// Random finite task with binary states and actions, reward values in
/// `{0, 1, 2}`, random tables over at most three parents, dedicated noise on
/// every state and reward, and occasional shared noise. Retries until the
/// task validates and, if `soluble`, passes the solubility test.
pub fn random_task(r: &mut TestRng, soluble: bool) -> FiniteTask {
    loop {
        let t = random_task_once(r);
        if !t.validate().is_valid() {
            continue;
        }
        if soluble && !is_soluble(t.diagram()).unwrap().soluble {
            continue;
        }
        return t;
    }
}

fn random_task_once(r: &mut TestRng) -> FiniteTask {
    let bin = FiniteDomain::binary();
    let rew = FiniteDomain::new(vec![int(0), int(1), int(2)]);
    let steps = r.random_range(1..=3usize);
    let mut b = FiniteTask::builder();
    // (name, domain, is_state)
    let mut endo: Vec<(NodeId, FiniteDomain, NodeRole)> = Vec::new();
    let mut pending: Vec<(NodeId, FiniteDomain, Vec<(NodeId, FiniteDomain)>)> = Vec::new();
    for i in 1..=steps {
        for k in 0..r.random_range(1..=2u8) {
            let s = n(&format!("S{i}{}", (b'a' + k) as char));
            b.state(s.clone(), bin.clone());
            endo.push((s.clone(), bin.clone(), NodeRole::State));
            pending.push((s, bin.clone(), Vec::new()));
        }
        let x = n(&format!("X{i}"));
        let states: Vec<NodeId> = endo
            .iter()
            .filter(|(_, _, r)| *r == NodeRole::State)
            .map(|(v, _, _)| v.clone())
            .collect();
        let mut inputs: Vec<NodeId> = states
            .iter()
            .filter(|_| r.random_bool(0.5))
            .cloned()
            .collect();
        inputs.truncate(3);
        b.action(x.clone(), bin.clone(), inputs);
        endo.push((x, bin.clone(), NodeRole::Action));
        let y = n(&format!("Y{i}"));
        b.reward(y.clone(), rew.clone());
        pending.push((y.clone(), rew.clone(), Vec::new()));
        endo.push((y, rew.clone(), NodeRole::Reward));
    }
    // Endogenous parents: earlier non-reward nodes.
    let position: BTreeMap<NodeId, usize> = endo
        .iter()
        .enumerate()
        .map(|(i, (v, _, _))| (v.clone(), i))
        .collect();
    for (v, _, parents) in pending.iter_mut() {
        let here = position[v];
        let mut cands: Vec<(NodeId, FiniteDomain)> = endo[..here]
            .iter()
            .filter(|(_, _, role)| *role != NodeRole::Reward)
            .map(|(u, d, _)| (u.clone(), d.clone()))
            .collect();
        cands.shuffle(r);
        let k = r.random_range(0..=cands.len().min(2));
        parents.extend(cands.into_iter().take(k));
    }
    // Noise: one dedicated binary variable each, plus an occasional shared one.
    let mut exo_parents: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for (v, _, _) in &pending {
        let u = n(&format!("U_{v}"));
        let (p, q) = PROBS[r.random_range(0..PROBS.len())];
        b.exogenous(ExogenousVar::bernoulli(u.clone(), rational(p, q)));
        exo_parents.entry(v.clone()).or_default().push(u);
    }
    if pending.len() >= 2 && r.random_bool(0.5) {
        let i = r.random_range(0..pending.len());
        let mut j = r.random_range(0..pending.len());
        while j == i {
            j = r.random_range(0..pending.len());
        }
        let u = n("U_shared");
        b.exogenous(ExogenousVar::bernoulli(u.clone(), rational(1, 2)));
        for k in [i, j] {
            exo_parents.get_mut(&pending[k].0).unwrap().push(u.clone());
        }
    }
    for (v, domain, parents) in pending {
        let mut all: Vec<(NodeId, FiniteDomain)> = parents;
        for u in &exo_parents[&v] {
            all.push((u.clone(), bin.clone()));
        }
        let combos: usize = all.iter().map(|(_, d)| d.len()).product();
        let outs: Vec<Rational> = (0..combos)
            .map(|_| domain.values()[r.random_range(0..domain.len())].clone())
            .collect();
        let doms: Vec<FiniteDomain> = all.iter().map(|(_, d)| d.clone()).collect();
        b.function(StructuralFunction::tabulate(v.clone(), all, move |args| {
            let mut idx = 0;
            for (a, d) in args.iter().zip(&doms) {
                idx = idx * d.len() + d.index_of(a).unwrap();
            }
            outs[idx].clone()
        }));
    }
    b.build()
}

/// Every deterministic policy of the task, when there are at most `cap`.
pub fn all_deterministic_policies(t: &FiniteTask, cap: usize) -> Option<Vec<Policy>> {
    let base = Policy::uniform(t);
    let mut slots = Vec::new();
    let mut total: usize = 1;
    for a in t.actions() {
        let rule = base.rule(&a).unwrap();
        for row in 0..rule.row_count() {
            slots.push((a.clone(), row, rule.values.len()));
            total = total.checked_mul(rule.values.len())?;
            if total > cap {
                return None;
            }
        }
    }
    let mut out = Vec::with_capacity(total);
    for mut code in 0..total {
        let mut p = base.clone();
        for (a, row, k) in &slots {
            p.rule_mut(a).unwrap().set_deterministic(*row, code % k);
            code /= k;
        }
        out.push(p);
    }
    Some(out)
}

/// Exact value of each action value at one input row: the total expected
/// reward given the row when the rule at that row is replaced by the value
/// and everything else follows `policy`.
pub fn row_action_values(
    t: &FiniteTask,
    policy: &Policy,
    action: &NodeId,
    row: usize,
) -> Vec<Option<Rational>> {
    let rule = policy.rule(action).unwrap();
    let tuple = rule.row_tuple(row);
    let inputs = rule.inputs.clone();
    let given: Vec<(NodeId, Rational)> = inputs.iter().cloned().zip(tuple).collect();
    let mut gamma = int(1);
    let mut weights = Vec::new();
    for _ in t.rewards() {
        weights.push(gamma.clone());
        gamma *= t.discount();
    }
    (0..rule.values.len())
        .map(|v| {
            let mut p = policy.clone();
            p.rule_mut(action).unwrap().set_deterministic(row, v);
            let dist = t
                .interventional_distribution(&p, t.rewards(), &given)
                .ok()?;
            let mut total = Rational::zero();
            for (ys, pr) in dist {
                for (y, w) in ys.iter().zip(&weights) {
                    total += y * w * &pr;
                }
            }
            Some(total)
        })
        .collect()
}

/// A fresh random mechanism over the same parents for every node of `delta`.
pub fn random_edits(
    r: &mut TestRng,
    t: &FiniteTask,
    delta: &BTreeSet<NodeId>,
) -> Vec<causal_curriculum::Edit> {
    delta
        .iter()
        .map(|v| {
            let f = t.function(v).expect("state has a mechanism");
            let parents: Vec<(NodeId, FiniteDomain)> = f
                .parents
                .iter()
                .map(|p| {
                    let d = t
                        .domain(p)
                        .cloned()
                        .or_else(|| t.exogenous_var(p).map(|u| u.domain.clone()));
                    (p.clone(), d.expect("parent domain"))
                })
                .collect();
            let domain = t.domain(v).unwrap().clone();
            let combos: usize = parents.iter().map(|(_, d)| d.len()).product();
            let outs: Vec<Rational> = (0..combos)
                .map(|_| domain.values()[r.random_range(0..domain.len())].clone())
                .collect();
            let doms: Vec<FiniteDomain> = parents.iter().map(|(_, d)| d.clone()).collect();
            let function = StructuralFunction::tabulate(v.clone(), parents, move |args| {
                let mut idx = 0;
                for (a, d) in args.iter().zip(&doms) {
                    idx = idx * d.len() + d.index_of(a).unwrap();
                }
                outs[idx].clone()
            });
            causal_curriculum::Edit::ReplaceFunction { function }
        })
        .collect()
}

//! Compiled form of a task: every structural function becomes a dense lookup
//! table over parent value indices, and worlds are enumerated depth-first in
//! topological order, branching on exogenous variables the first time they
//! are needed and on actions according to the policy.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num::{One, Signed, Zero};
use rand::Rng;

use super::{
    check_probabilities, FiniteDomain, FiniteTask, FunctionBody, Policy, Rational, TaskError,
};
use crate::graph::{NodeId, NodeRole, ValidationReport, ViolationKind};

const MAX_TABLE: usize = 1 << 22;

#[derive(Debug, Clone, Copy)]
enum Arg {
    Endo(usize),
    Exo(usize),
}

#[derive(Debug)]
enum Kind {
    Function {
        args: Vec<Arg>,
        strides: Vec<usize>,
        table: Vec<u32>,
    },
    Action(usize),
}

#[derive(Debug)]
struct Exo {
    support: Vec<(usize, Rational)>,
    cumulative: Vec<f64>,
}

#[derive(Debug)]
pub(crate) struct ActionInfo {
    pub node: usize,
    pub inputs: Vec<usize>,
    strides: Vec<usize>,
    pub rows: usize,
}

#[derive(Debug)]
pub(crate) struct Engine {
    names: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    domains: Vec<FiniteDomain>,
    kinds: Vec<Kind>,
    exo: Vec<Exo>,
    exo_before: Vec<Vec<usize>>,
    pub actions: Vec<ActionInfo>,
    rewards: Vec<(usize, Rational)>,
    rewards_f64: Vec<Vec<f64>>,
}

/// Per action, per input row: the support of the decision rule.
#[derive(Debug, Clone)]
pub(crate) struct PolicyTables {
    pub rows: Vec<Vec<Vec<(usize, Rational)>>>,
}

impl PolicyTables {
    /// Deterministic rule `row -> value index` for action `a`.
    pub fn set_deterministic(&mut self, a: usize, choice: &[usize]) {
        self.rows[a] = choice.iter().map(|&v| vec![(v, Rational::one())]).collect();
    }

    pub fn set_row(&mut self, a: usize, row: usize, value: usize) {
        self.rows[a][row] = vec![(value, Rational::one())];
    }
}

pub(crate) fn compile(task: &FiniteTask) -> (ValidationReport, Option<Engine>) {
    let mut report = task.build_report.clone();
    let graph_report = task.diagram.validate();
    report.violations.extend(graph_report.violations);
    report.warnings.extend(graph_report.warnings);
    if !report.is_valid() {
        return (report, None);
    }

    let order = match task.diagram.topological_order() {
        Ok(o) => o,
        Err(e) => {
            report.push(ViolationKind::Cycle, e.to_string());
            return (report, None);
        }
    };
    let index: HashMap<NodeId, usize> = order
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, n)| (n, i))
        .collect();

    let mut domains = Vec::with_capacity(order.len());
    for v in &order {
        match task.domains.get(v) {
            None => report.push(ViolationKind::Function, format!("node {v} has no domain")),
            Some(d) if d.is_empty() => {
                report.push(ViolationKind::Function, format!("domain of {v} is empty"))
            }
            Some(d) if d.has_duplicates() => report.push(
                ViolationKind::Function,
                format!("domain of {v} repeats a value"),
            ),
            Some(_) => {}
        }
        domains.push(
            task.domains
                .get(v)
                .cloned()
                .unwrap_or_else(|| FiniteDomain::new(vec![])),
        );
    }

    let mut exo_index = HashMap::new();
    let mut exo = Vec::new();
    for (k, u) in task.exogenous.iter().enumerate() {
        if index.contains_key(&u.name) || exo_index.insert(u.name.clone(), k).is_some() {
            report.push(
                ViolationKind::Function,
                format!("name {} is used twice", u.name),
            );
        }
        if u.domain.is_empty() || u.domain.has_duplicates() {
            report.push(
                ViolationKind::Probability,
                format!("domain of exogenous {} is empty or repeats a value", u.name),
            );
        }
        if let Err(msg) = check_probabilities(u) {
            report.push(ViolationKind::Probability, msg);
        }
        let support: Vec<(usize, Rational)> = u
            .probabilities
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_positive())
            .map(|(i, p)| (i, p.clone()))
            .collect();
        let mut acc = 0.0;
        let cumulative = support
            .iter()
            .map(|(_, p)| {
                acc += super::to_f64(p);
                acc
            })
            .collect();
        exo.push(Exo {
            support,
            cumulative,
        });
    }

    for out in task.functions.keys() {
        match task.diagram.role(out) {
            None => report.push(
                ViolationKind::Function,
                format!("function for unknown node {out}"),
            ),
            Some(NodeRole::Action) => report.push(
                ViolationKind::Function,
                format!("action {out} must not have a structural function"),
            ),
            _ => {}
        }
    }

    let mut kinds = Vec::with_capacity(order.len());
    let mut used_exo = BTreeSet::new();
    let mut first_use: Vec<Option<usize>> = vec![None; exo.len()];
    let action_pos: HashMap<&NodeId, usize> = task
        .diagram
        .action_entries()
        .iter()
        .enumerate()
        .map(|(i, (a, _))| (a, i))
        .collect();
    for (pos, v) in order.iter().enumerate() {
        if let Some(&a) = action_pos.get(v) {
            kinds.push(Kind::Action(a));
            continue;
        }
        let Some(f) = task.functions.get(v) else {
            report.push(
                ViolationKind::Function,
                format!("node {v} has no structural function"),
            );
            kinds.push(Kind::Function {
                args: vec![],
                strides: vec![],
                table: vec![],
            });
            continue;
        };
        let mut args = Vec::new();
        let mut arg_domains: Vec<&FiniteDomain> = Vec::new();
        let mut seen = BTreeSet::new();
        let mut ok = true;
        for p in &f.parents {
            if !seen.insert(p) {
                report.push(
                    ViolationKind::Function,
                    format!("parent {p} of {v} listed twice"),
                );
                ok = false;
            }
            if let Some(&i) = index.get(p) {
                if task.diagram.role(p).is_some_and(|r| r.is_auxiliary()) {
                    report.push(
                        ViolationKind::Function,
                        format!("parent {p} of {v} is an auxiliary node"),
                    );
                    ok = false;
                }
                args.push(Arg::Endo(i));
                arg_domains.push(&domains[i]);
            } else if let Some(&k) = exo_index.get(p) {
                args.push(Arg::Exo(k));
                arg_domains.push(&task.exogenous[k].domain);
                used_exo.insert(k);
                if first_use[k].is_none_or(|q| q > pos) {
                    first_use[k] = Some(pos);
                }
            } else {
                report.push(
                    ViolationKind::Function,
                    format!("parent {p} of {v} is unknown"),
                );
                ok = false;
            }
        }
        let expected: BTreeSet<NodeId> = task.diagram.parents(v);
        let declared: BTreeSet<NodeId> = f
            .parents
            .iter()
            .filter(|p| index.contains_key(*p))
            .cloned()
            .collect();
        // Edited functions may ignore parents but never gain new ones.
        if !declared.is_subset(&expected) || (expected != declared && !task.edited) {
            report.push(
                ViolationKind::Function,
                format!("parents of {v} disagree with the diagram: {declared:?} vs {expected:?}"),
            );
            ok = false;
        }
        let size: usize = arg_domains.iter().map(|d| d.len()).product();
        if size > MAX_TABLE {
            report.push(
                ViolationKind::Function,
                format!("table for {v} has {size} rows, over the limit"),
            );
            ok = false;
        }
        if !ok {
            kinds.push(Kind::Function {
                args: vec![],
                strides: vec![],
                table: vec![],
            });
            continue;
        }
        match tabulate(v, &f.parents, &f.body, &arg_domains, &domains[pos]) {
            Ok(table) => {
                let strides = strides_for(arg_domains.iter().map(|d| d.len()));
                kinds.push(Kind::Function {
                    args,
                    strides,
                    table,
                });
            }
            Err(msg) => {
                report.push(ViolationKind::Function, msg);
                kinds.push(Kind::Function {
                    args: vec![],
                    strides: vec![],
                    table: vec![],
                });
            }
        }
    }
    for (k, u) in task.exogenous.iter().enumerate() {
        if !used_exo.contains(&k) {
            report
                .warnings
                .push(format!("exogenous {} is not used by any function", u.name));
        }
    }

    // Confounding must be exactly what shared exogenous parents induce.
    let mut shared = BTreeSet::new();
    for k in 0..task.exogenous.len() {
        let children: Vec<NodeId> = task
            .exogenous_children(&task.exogenous[k].name)
            .into_iter()
            .collect();
        for i in 0..children.len() {
            for j in i + 1..children.len() {
                shared.insert((children[i].clone(), children[j].clone()));
            }
        }
    }
    let declared: BTreeSet<(NodeId, NodeId)> = task.diagram.bidirected_edges().cloned().collect();
    if !shared.is_subset(&declared) || (shared != declared && !task.edited) {
        report.push(
            ViolationKind::Confounding,
            "bidirected edges do not match the exogenous variables shared between nodes",
        );
    }

    if !task.discount.is_positive() || task.discount > Rational::one() {
        report.push(
            ViolationKind::Function,
            format!("discount {} is outside (0, 1]", task.discount),
        );
    }
    let reward_roles = task.diagram.nodes_with_role(NodeRole::Reward);
    let listed: BTreeSet<NodeId> = task.rewards.iter().cloned().collect();
    if reward_roles != listed || listed.len() != task.rewards.len() {
        report.push(
            ViolationKind::Role,
            "reward list does not match the reward nodes",
        );
    }

    if !report.is_valid() {
        return (report, None);
    }

    let mut exo_before = vec![Vec::new(); order.len()];
    for (k, p) in first_use.iter().enumerate() {
        if let Some(p) = p {
            exo_before[*p].push(k);
        }
    }

    let actions = task
        .diagram
        .action_entries()
        .iter()
        .map(|(a, inputs)| {
            let inputs: Vec<usize> = inputs.iter().map(|s| index[s]).collect();
            let sizes: Vec<usize> = inputs.iter().map(|&i| domains[i].len()).collect();
            ActionInfo {
                node: index[a],
                rows: sizes.iter().product(),
                strides: strides_for(sizes.into_iter()),
                inputs,
            }
        })
        .collect();

    let mut gamma = Rational::one();
    let mut rewards = Vec::new();
    let mut rewards_f64 = Vec::new();
    for y in &task.rewards {
        let pos = index[y];
        rewards_f64.push(
            domains[pos]
                .values()
                .iter()
                .map(|v| super::to_f64(&(v * &gamma)))
                .collect(),
        );
        rewards.push((pos, gamma.clone()));
        gamma *= &task.discount;
    }

    let engine = Engine {
        names: order,
        index,
        domains,
        kinds,
        exo,
        exo_before,
        actions,
        rewards,
        rewards_f64,
    };
    (report, Some(engine))
}

fn strides_for(sizes: impl DoubleEndedIterator<Item = usize>) -> Vec<usize> {
    let sizes: Vec<usize> = sizes.collect();
    let mut strides = vec![1; sizes.len()];
    for k in (0..sizes.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * sizes[k + 1];
    }
    strides
}

fn tabulate(
    v: &NodeId,
    parents: &[NodeId],
    body: &FunctionBody,
    arg_domains: &[&FiniteDomain],
    out: &FiniteDomain,
) -> Result<Vec<u32>, String> {
    if let FunctionBody::Expr(e) = body {
        let mut vars = Vec::new();
        e.variables(&mut vars);
        if let Some(free) = vars
            .iter()
            .find(|x| !parents.iter().any(|p| p.as_str() == x.as_str()))
        {
            return Err(format!(
                "function of {v} uses `{free}`, which is not a parent"
            ));
        }
    }
    let size: usize = arg_domains.iter().map(|d| d.len()).product();
    let mut table = Vec::with_capacity(size);
    let mut idx = vec![0usize; arg_domains.len()];
    for _ in 0..size {
        let args: Vec<&Rational> = idx
            .iter()
            .zip(arg_domains)
            .map(|(&i, d)| d.value(i))
            .collect();
        let value = match body {
            FunctionBody::Expr(e) => {
                let env: BTreeMap<&str, &Rational> = parents
                    .iter()
                    .map(|p| p.as_str())
                    .zip(args.iter().copied())
                    .collect();
                e.eval(&env).map_err(|m| format!("function of {v}: {m}"))?
            }
            FunctionBody::Table(t) => {
                let key: Vec<Rational> = args.iter().map(|r| (*r).clone()).collect();
                t.get(&key)
                    .cloned()
                    .ok_or_else(|| format!("table of {v} has no row for {}", render(&key)))?
            }
        };
        let i = out
            .index_of(&value)
            .ok_or_else(|| format!("function of {v} produces {value}, outside its domain"))?;
        table.push(i as u32);
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < arg_domains[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(table)
}

pub(crate) fn render(values: &[Rational]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

struct Walk<'a, F> {
    engine: &'a Engine,
    policy: &'a PolicyTables,
    vals: Vec<usize>,
    exo_vals: Vec<usize>,
    leaves: u64,
    budget: u64,
    visit: F,
}

impl<F: FnMut(&[usize], &Rational)> Walk<'_, F> {
    fn step(&mut self, pos: usize, k: usize, weight: &Rational) -> Result<(), TaskError> {
        let e = self.engine;
        if pos == e.names.len() {
            self.leaves += 1;
            if self.leaves > self.budget {
                return Err(TaskError::Budget(self.budget));
            }
            (self.visit)(&self.vals, weight);
            return Ok(());
        }
        if let Some(&u) = e.exo_before[pos].get(k) {
            for (v, p) in &e.exo[u].support {
                self.exo_vals[u] = *v;
                if p.is_one() {
                    self.step(pos, k + 1, weight)?;
                } else {
                    self.step(pos, k + 1, &(weight * p))?;
                }
            }
            return Ok(());
        }
        match &e.kinds[pos] {
            Kind::Function {
                args,
                strides,
                table,
            } => {
                let mut row = 0;
                for (a, s) in args.iter().zip(strides) {
                    row += s * match a {
                        Arg::Endo(i) => self.vals[*i],
                        Arg::Exo(u) => self.exo_vals[*u],
                    };
                }
                self.vals[pos] = table[row] as usize;
                self.step(pos + 1, 0, weight)
            }
            Kind::Action(a) => {
                let row = e.row_of(*a, &self.vals);
                for (v, p) in &self.policy.rows[*a][row] {
                    self.vals[pos] = *v;
                    if p.is_one() {
                        self.step(pos + 1, 0, weight)?;
                    } else {
                        self.step(pos + 1, 0, &(weight * p))?;
                    }
                }
                Ok(())
            }
        }
    }
}

impl Engine {
    pub fn names(&self) -> &[NodeId] {
        &self.names
    }

    pub fn pos(&self, v: &NodeId) -> Option<usize> {
        self.index.get(v).copied()
    }

    pub fn domain_at(&self, pos: usize) -> &FiniteDomain {
        &self.domains[pos]
    }

    pub fn row_of(&self, a: usize, vals: &[usize]) -> usize {
        let info = &self.actions[a];
        info.inputs
            .iter()
            .zip(&info.strides)
            .map(|(&i, s)| s * vals[i])
            .sum()
    }

    pub fn action_domain(&self, a: usize) -> &FiniteDomain {
        &self.domains[self.actions[a].node]
    }

    /// Discounted total reward of a world.
    pub fn reward(&self, vals: &[usize]) -> Rational {
        let mut total = Rational::zero();
        for (pos, g) in &self.rewards {
            let y = self.domains[*pos].value(vals[*pos]);
            if !y.is_zero() {
                total += y * g;
            }
        }
        total
    }

    pub fn reward_f64(&self, k: usize, vals: &[usize]) -> f64 {
        self.rewards_f64[k][vals[self.rewards[k].0]]
    }

    /// Visit every world with positive probability under the policy.
    pub fn enumerate(
        &self,
        policy: &PolicyTables,
        budget: u64,
        visit: impl FnMut(&[usize], &Rational),
    ) -> Result<u64, TaskError> {
        let mut walk = Walk {
            engine: self,
            policy,
            vals: vec![0; self.names.len()],
            exo_vals: vec![0; self.exo.len()],
            leaves: 0,
            budget,
            visit,
        };
        walk.step(0, 0, &Rational::one())?;
        Ok(walk.leaves)
    }

    /// Draw one world. Action rows use the f64 image of the policy.
    pub fn sample<R: Rng>(&self, policy: &PolicyTables, rng: &mut R) -> Vec<usize> {
        self.sample_with(rng, |a, row, rng| {
            let dist = &policy.rows[a][row];
            if dist.len() == 1 {
                return dist[0].0;
            }
            let mut x: f64 = rng.random();
            for (v, p) in dist {
                x -= super::to_f64(p);
                if x < 0.0 {
                    return *v;
                }
            }
            dist.last().map(|d| d.0).unwrap_or(0)
        })
    }

    /// Draw one world with actions chosen by `choose(action, row, rng)`.
    pub fn sample_with<R: Rng>(
        &self,
        rng: &mut R,
        mut choose: impl FnMut(usize, usize, &mut R) -> usize,
    ) -> Vec<usize> {
        let mut vals = vec![0; self.names.len()];
        let mut exo_vals = vec![0; self.exo.len()];
        for pos in 0..self.names.len() {
            for &u in &self.exo_before[pos] {
                let exo = &self.exo[u];
                let x: f64 = rng.random::<f64>() * exo.cumulative.last().copied().unwrap_or(1.0);
                let k = exo
                    .cumulative
                    .iter()
                    .position(|c| x < *c)
                    .unwrap_or(exo.support.len() - 1);
                exo_vals[u] = exo.support[k].0;
            }
            match &self.kinds[pos] {
                Kind::Function {
                    args,
                    strides,
                    table,
                } => {
                    let mut row = 0;
                    for (a, s) in args.iter().zip(strides) {
                        row += s * match a {
                            Arg::Endo(i) => vals[*i],
                            Arg::Exo(u) => exo_vals[*u],
                        };
                    }
                    vals[pos] = table[row] as usize;
                }
                Kind::Action(a) => {
                    let row = self.row_of(*a, &vals);
                    vals[pos] = choose(*a, row, rng);
                }
            }
        }
        vals
    }

    pub fn tables(&self, policy: &Policy) -> Result<PolicyTables, TaskError> {
        let mut rows = Vec::with_capacity(self.actions.len());
        for (a, info) in self.actions.iter().enumerate() {
            let name = &self.names[info.node];
            let rule = policy
                .rule(name)
                .ok_or_else(|| TaskError::Policy(format!("no decision rule for {name}")))?;
            let inputs: Vec<&NodeId> = info.inputs.iter().map(|&i| &self.names[i]).collect();
            if rule.inputs.iter().collect::<Vec<_>>() != inputs {
                return Err(TaskError::Policy(format!(
                    "rule for {name} has inputs {:?}, expected {:?}",
                    rule.inputs, inputs
                )));
            }
            if rule.values != *self.action_domain(a) {
                return Err(TaskError::Policy(format!(
                    "rule for {name} has the wrong action domain"
                )));
            }
            for (k, &i) in info.inputs.iter().enumerate() {
                if rule.input_domains[k] != self.domains[i] {
                    return Err(TaskError::Policy(format!(
                        "rule for {name} has the wrong domain for input {}",
                        self.names[i]
                    )));
                }
            }
            if rule.rows.len() != info.rows {
                return Err(TaskError::Policy(format!(
                    "rule for {name} has {} rows, expected {}",
                    rule.rows.len(),
                    info.rows
                )));
            }
            rows.push(
                rule.rows
                    .iter()
                    .map(|dist| {
                        dist.iter()
                            .enumerate()
                            .filter(|(_, p)| p.is_positive())
                            .map(|(v, p)| (v, p.clone()))
                            .collect()
                    })
                    .collect(),
            );
        }
        Ok(PolicyTables { rows })
    }

    pub fn uniform_tables(&self) -> PolicyTables {
        PolicyTables {
            rows: self
                .actions
                .iter()
                .enumerate()
                .map(|(a, info)| {
                    let n = self.action_domain(a).len();
                    let p = super::rational(1, n as i64);
                    vec![(0..n).map(|v| (v, p.clone())).collect(); info.rows]
                })
                .collect(),
        }
    }
}

//! Finite structural causal models with a policy space and a discounted
//! reward, plus everything needed to evaluate them exactly.

mod edit;
mod engine;
pub mod expr;
mod policy;
mod query;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, OnceLock};

use num::{BigInt, One, Signed, Zero};
use thiserror::Error;

use crate::graph::{CausalDiagram, GraphError, NodeId, NodeRole, ValidationReport, ViolationKind};

pub use edit::{apply_edits, Edit, SourceTask};
pub(crate) use engine::{Engine, PolicyTables};
pub use expr::Expr;
pub use policy::{DecisionRule, Policy, Provenance};
pub use query::{Distribution, Sampler, Trajectory};

/// Exact rational number used for every probability, value and reward.
pub type Rational = num::BigRational;

/// Default cap on enumerated worlds per call.
pub const DEFAULT_BUDGET: u64 = 4_000_000;

/// Parse `"3/4"`, `"-2"` or a decimal such as `"-0.1"` exactly.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().ok()?;
        let q: BigInt = q.trim().parse().ok()?;
        if !q.is_positive() {
            return None;
        }
        return Some(Rational::new(p, q));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let negative = int.starts_with('-');
        let digits = int.trim_start_matches(['-', '+']);
        if frac.is_empty() && digits.is_empty() {
            return None;
        }
        if !frac.chars().all(|c| c.is_ascii_digit()) || !digits.chars().all(|c| c.is_ascii_digit())
        {
            return None;
        }
        let whole: BigInt = if digits.is_empty() {
            BigInt::zero()
        } else {
            digits.parse().ok()?
        };
        let frac_num: BigInt = if frac.is_empty() {
            BigInt::zero()
        } else {
            frac.parse().ok()?
        };
        let scale = num::pow(BigInt::from(10), frac.len());
        let r = Rational::new(whole * &scale + frac_num, scale);
        return Some(if negative { -r } else { r });
    }
    let n: BigInt = s.parse().ok()?;
    Some(Rational::from_integer(n))
}

pub fn rational(p: i64, q: i64) -> Rational {
    Rational::new(BigInt::from(p), BigInt::from(q))
}

pub fn int(p: i64) -> Rational {
    Rational::from_integer(BigInt::from(p))
}

/// Lossy conversion for reporting and for the tabular learner.
pub fn to_f64(r: &Rational) -> f64 {
    use num::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid task: {0}")]
    Invalid(String),
    #[error("edit rejected: {0}")]
    Edit(String),
    #[error("policy does not fit the task: {0}")]
    Policy(String),
    #[error("conditioning event has probability zero")]
    UnsupportedEvent,
    #[error("value {value} is not in the domain of `{node}`")]
    NotInDomain { node: NodeId, value: String },
    #[error("enumeration budget of {0} worlds exceeded")]
    Budget(u64),
    #[error("too large to enumerate: {0}")]
    TooLarge(String),
}

impl TaskError {
    /// Whether the failure is a resource cap rather than a property of the input.
    pub fn is_budget(&self) -> bool {
        matches!(self, TaskError::Budget(_) | TaskError::TooLarge(_))
    }
}

/// Ordered list of distinct values.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FiniteDomain {
    values: Vec<Rational>,
}

impl FiniteDomain {
    pub fn new(values: Vec<Rational>) -> Self {
        FiniteDomain { values }
    }

    /// `{0, 1, ..., n-1}`.
    pub fn range(n: usize) -> Self {
        FiniteDomain {
            values: (0..n as i64).map(int).collect(),
        }
    }

    pub fn binary() -> Self {
        Self::range(2)
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, v: &Rational) -> Option<usize> {
        self.values.iter().position(|x| x == v)
    }

    pub fn value(&self, i: usize) -> &Rational {
        &self.values[i]
    }

    pub(crate) fn has_duplicates(&self) -> bool {
        let set: BTreeSet<&Rational> = self.values.iter().collect();
        set.len() != self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExogenousVar {
    pub name: NodeId,
    pub domain: FiniteDomain,
    pub probabilities: Vec<Rational>,
}

impl ExogenousVar {
    pub fn new(
        name: impl Into<NodeId>,
        domain: FiniteDomain,
        probabilities: Vec<Rational>,
    ) -> Self {
        ExogenousVar {
            name: name.into(),
            domain,
            probabilities,
        }
    }

    /// Binary variable with `P(U = 1) = p`.
    pub fn bernoulli(name: impl Into<NodeId>, p: Rational) -> Self {
        let q = Rational::one() - &p;
        Self::new(name, FiniteDomain::binary(), vec![q, p])
    }

    pub fn uniform(name: impl Into<NodeId>, domain: FiniteDomain) -> Self {
        let n = domain.len() as i64;
        let probabilities = vec![rational(1, n.max(1)); domain.len()];
        Self::new(name, domain, probabilities)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FunctionBody {
    Expr(Expr),
    /// Parent-value tuple (in parent order) to output value.
    Table(BTreeMap<Vec<Rational>, Rational>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuralFunction {
    pub output: NodeId,
    /// Endogenous and exogenous parents, in argument order.
    pub parents: Vec<NodeId>,
    pub body: FunctionBody,
}

impl StructuralFunction {
    pub fn expr(
        output: impl Into<NodeId>,
        parents: &[&str],
        src: &str,
    ) -> Result<Self, expr::ExprError> {
        Ok(StructuralFunction {
            output: output.into(),
            parents: parents.iter().map(|p| NodeId::from(*p)).collect(),
            body: FunctionBody::Expr(Expr::parse(src)?),
        })
    }

    /// Build a table by evaluating `f` on every parent-value combination.
    pub fn tabulate(
        output: impl Into<NodeId>,
        parents: Vec<(NodeId, FiniteDomain)>,
        f: impl Fn(&[Rational]) -> Rational,
    ) -> Self {
        let mut table = BTreeMap::new();
        let mut idx = vec![0usize; parents.len()];
        let total: usize = parents.iter().map(|(_, d)| d.len()).product();
        for _ in 0..total {
            let args: Vec<Rational> = idx
                .iter()
                .zip(&parents)
                .map(|(&i, (_, d))| d.value(i).clone())
                .collect();
            let out = f(&args);
            table.insert(args, out);
            for k in (0..idx.len()).rev() {
                idx[k] += 1;
                if idx[k] < parents[k].1.len() {
                    break;
                }
                idx[k] = 0;
            }
        }
        StructuralFunction {
            output: output.into(),
            parents: parents.into_iter().map(|(p, _)| p).collect(),
            body: FunctionBody::Table(table),
        }
    }

    pub fn constant(output: impl Into<NodeId>, parents: Vec<NodeId>, value: Rational) -> Self {
        StructuralFunction {
            output: output.into(),
            parents,
            body: FunctionBody::Expr(Expr::Const(value)),
        }
    }
}

/// Incremental construction of a [`FiniteTask`]. The diagram is derived:
/// endogenous function parents become directed edges, an exogenous variable
/// shared by two endogenous nodes becomes a bidirected edge, and each action's
/// inputs become its parents.
#[derive(Debug, Clone, Default)]
pub struct TaskBuilder {
    nodes: Vec<(NodeId, NodeRole, FiniteDomain)>,
    exogenous: Vec<ExogenousVar>,
    functions: Vec<StructuralFunction>,
    actions: Vec<(NodeId, Vec<NodeId>)>,
    discount: Option<Rational>,
}

impl TaskBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&mut self, name: impl Into<NodeId>, domain: FiniteDomain) -> &mut Self {
        self.nodes.push((name.into(), NodeRole::State, domain));
        self
    }

    pub fn reward(&mut self, name: impl Into<NodeId>, domain: FiniteDomain) -> &mut Self {
        self.nodes.push((name.into(), NodeRole::Reward, domain));
        self
    }

    /// Actions are ordered in time by the order of these calls.
    pub fn action<I, S>(
        &mut self,
        name: impl Into<NodeId>,
        domain: FiniteDomain,
        inputs: I,
    ) -> &mut Self
    where
        I: IntoIterator<Item = S>,
        S: Into<NodeId>,
    {
        let name = name.into();
        self.nodes.push((name.clone(), NodeRole::Action, domain));
        self.actions
            .push((name, inputs.into_iter().map(Into::into).collect()));
        self
    }

    pub fn exogenous(&mut self, u: ExogenousVar) -> &mut Self {
        self.exogenous.push(u);
        self
    }

    pub fn function(&mut self, f: StructuralFunction) -> &mut Self {
        self.functions.push(f);
        self
    }

    pub fn discount(&mut self, gamma: Rational) -> &mut Self {
        self.discount = Some(gamma);
        self
    }

    pub fn build(&self) -> FiniteTask {
        let mut report = ValidationReport::default();
        let mut roles = BTreeMap::new();
        let mut domains = BTreeMap::new();
        let mut rewards = Vec::new();
        for (name, role, domain) in &self.nodes {
            if roles.insert(name.clone(), *role).is_some() {
                report.push(ViolationKind::Role, format!("node {name} declared twice"));
            }
            domains.insert(name.clone(), domain.clone());
            if *role == NodeRole::Reward {
                rewards.push(name.clone());
            }
        }
        let exo_names: BTreeSet<&NodeId> = self.exogenous.iter().map(|u| &u.name).collect();
        let mut directed = BTreeSet::new();
        let mut exo_children: BTreeMap<&NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for f in &self.functions {
            for p in &f.parents {
                if exo_names.contains(p) {
                    exo_children.entry(p).or_default().insert(f.output.clone());
                } else {
                    directed.insert((p.clone(), f.output.clone()));
                }
            }
        }
        for (a, inputs) in &self.actions {
            for s in inputs {
                directed.insert((s.clone(), a.clone()));
            }
        }
        let mut bidirected = BTreeSet::new();
        for children in exo_children.values() {
            let c: Vec<&NodeId> = children.iter().collect();
            for i in 0..c.len() {
                for j in i + 1..c.len() {
                    bidirected.insert((c[i].clone(), c[j].clone()));
                }
            }
        }
        let diagram = CausalDiagram::from_parts(roles, directed, bidirected, self.actions.clone());
        FiniteTask {
            diagram,
            domains,
            exogenous: self.exogenous.clone(),
            functions: self
                .functions
                .iter()
                .map(|f| (f.output.clone(), f.clone()))
                .collect(),
            rewards,
            discount: self.discount.clone().unwrap_or_else(Rational::one),
            budget: DEFAULT_BUDGET,
            build_report: report,
            edited: false,
            engine: OnceLock::new(),
        }
    }
}

/// A target task: SCM, policy space (the diagram's action inputs) and the
/// reward `Σ γ^(k-1) Y_k` over the rewards in declaration order.
#[derive(Debug, Clone)]
pub struct FiniteTask {
    diagram: CausalDiagram,
    domains: BTreeMap<NodeId, FiniteDomain>,
    exogenous: Vec<ExogenousVar>,
    functions: BTreeMap<NodeId, StructuralFunction>,
    rewards: Vec<NodeId>,
    discount: Rational,
    budget: u64,
    build_report: ValidationReport,
    /// Set on source tasks, whose functions may ignore diagram parents.
    edited: bool,
    engine: OnceLock<Result<Arc<Engine>, TaskError>>,
}

impl FiniteTask {
    pub fn builder() -> TaskBuilder {
        TaskBuilder::new()
    }

    pub fn diagram(&self) -> &CausalDiagram {
        &self.diagram
    }

    pub fn domain(&self, v: &NodeId) -> Option<&FiniteDomain> {
        self.domains.get(v)
    }

    pub fn domains(&self) -> &BTreeMap<NodeId, FiniteDomain> {
        &self.domains
    }

    pub fn exogenous(&self) -> &[ExogenousVar] {
        &self.exogenous
    }

    pub fn exogenous_var(&self, name: &NodeId) -> Option<&ExogenousVar> {
        self.exogenous.iter().find(|u| &u.name == name)
    }

    pub fn functions(&self) -> &BTreeMap<NodeId, StructuralFunction> {
        &self.functions
    }

    pub fn function(&self, v: &NodeId) -> Option<&StructuralFunction> {
        self.functions.get(v)
    }

    pub fn rewards(&self) -> &[NodeId] {
        &self.rewards
    }

    pub fn discount(&self) -> &Rational {
        &self.discount
    }

    /// Actions in time order.
    pub fn actions(&self) -> Vec<NodeId> {
        self.diagram.actions()
    }

    pub fn inputs(&self, action: &NodeId) -> &[NodeId] {
        self.diagram.action_inputs(action).unwrap_or(&[])
    }

    pub fn horizon(&self) -> usize {
        self.diagram.action_entries().len()
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    /// Cap on the number of enumerated worlds in a single evaluation.
    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn set_budget(&mut self, budget: u64) {
        self.budget = budget;
    }

    /// Endogenous children of an exogenous variable.
    pub fn exogenous_children(&self, name: &NodeId) -> BTreeSet<NodeId> {
        self.functions
            .values()
            .filter(|f| f.parents.contains(name))
            .map(|f| f.output.clone())
            .collect()
    }

    /// Exogenous parents feeding only this node.
    pub fn dedicated_exogenous(&self, v: &NodeId) -> Vec<NodeId> {
        let Some(f) = self.functions.get(v) else {
            return Vec::new();
        };
        f.parents
            .iter()
            .filter(|p| self.exogenous_var(p).is_some())
            .filter(|p| self.exogenous_children(p).len() == 1)
            .cloned()
            .collect()
    }

    pub(crate) fn with_parts(
        &self,
        functions: BTreeMap<NodeId, StructuralFunction>,
        exogenous: Vec<ExogenousVar>,
    ) -> FiniteTask {
        FiniteTask {
            diagram: self.diagram.clone(),
            domains: self.domains.clone(),
            exogenous,
            functions,
            rewards: self.rewards.clone(),
            discount: self.discount.clone(),
            budget: self.budget,
            build_report: self.build_report.clone(),
            edited: true,
            engine: OnceLock::new(),
        }
    }

    /// Full consistency check: diagram legality, functions against the
    /// diagram, probability normalisation, domains and discount.
    pub fn validate(&self) -> ValidationReport {
        engine::compile(self).0
    }

    pub(crate) fn engine(&self) -> Result<Arc<Engine>, TaskError> {
        self.engine
            .get_or_init(|| {
                let (report, engine) = engine::compile(self);
                match (report.violations.first(), engine) {
                    (None, Some(e)) => Ok(Arc::new(e)),
                    (Some(v), _) => Err(TaskError::Invalid(v.message.clone())),
                    (None, None) => Err(TaskError::Invalid("task could not be compiled".into())),
                }
            })
            .clone()
    }
}

impl fmt::Display for FiniteTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "task with {} nodes, {} actions, {} rewards",
            self.domains.len(),
            self.horizon(),
            self.rewards.len()
        )
    }
}

pub(crate) fn check_probabilities(u: &ExogenousVar) -> Result<(), String> {
    if u.probabilities.len() != u.domain.len() {
        return Err(format!(
            "exogenous {} has {} probabilities for {} values",
            u.name,
            u.probabilities.len(),
            u.domain.len()
        ));
    }
    if u.probabilities.iter().any(|p| p.is_negative()) {
        return Err(format!("exogenous {} has a negative probability", u.name));
    }
    let total: Rational = u.probabilities.iter().sum();
    if !total.is_one() {
        return Err(format!("probabilities of {} sum to {total}, not 1", u.name));
    }
    Ok(())
}

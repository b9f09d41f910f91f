//! Sequences of source tasks and the loops that train through them.

use std::collections::{BTreeMap, BTreeSet};

use num::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::editability::{
    expanded_action_set, find_max_edit, is_edit, soluble_order, EditError, EditabilityQuery,
};
use crate::graph::NodeId;
use crate::planner::{
    reachable_rows, rule_overlap, solve_optimal, solve_with, transfer_rules, LearnerConfig,
    PlanError, QLearner, SolverConfig,
};
use crate::task::{
    apply_edits, rational, Edit, FiniteTask, Policy, Rational, SourceTask, TaskError,
};

/// Default number of generated source tasks per action in
/// [`causal_curriculum_learning`].
pub const DEFAULT_ROUND_CAP: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CurriculumError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Edit(#[from] EditError),
    #[error("generator edited {node}, outside the editable set")]
    Generator { node: NodeId },
    #[error("source task {index} does not share the target's {what}")]
    Mismatch { index: usize, what: &'static str },
    #[error("inputs of {action} not covered after {rounds} rounds")]
    Coverage { action: NodeId, rounds: usize },
}

impl From<TaskError> for CurriculumError {
    fn from(e: TaskError) -> Self {
        CurriculumError::Plan(e.into())
    }
}

impl CurriculumError {
    pub fn is_budget(&self) -> bool {
        match self {
            CurriculumError::Plan(p) => p.is_budget(),
            CurriculumError::Coverage { .. } => true,
            _ => false,
        }
    }
}

/// Ordered source tasks, each with the actions it is meant to teach.
#[derive(Debug, Clone, Default)]
pub struct Curriculum {
    pub tasks: Vec<SourceTask>,
    pub actions: Vec<BTreeSet<NodeId>>,
}

impl Curriculum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, task: SourceTask, actions: BTreeSet<NodeId>) {
        self.tasks.push(task);
        self.actions.push(actions);
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Every task must keep the target's diagram, policy space and rewards.
    pub fn check(&self, target: &FiniteTask) -> Result<(), CurriculumError> {
        if self.tasks.len() != self.actions.len() {
            return Err(CurriculumError::Mismatch {
                index: self.tasks.len().min(self.actions.len()),
                what: "action-set list",
            });
        }
        let actions: BTreeSet<NodeId> = target.actions().into_iter().collect();
        for (index, (src, declared)) in self.tasks.iter().zip(&self.actions).enumerate() {
            let t = &src.task;
            if t.diagram() != target.diagram() {
                return Err(CurriculumError::Mismatch {
                    index,
                    what: "diagram",
                });
            }
            if t.domains() != target.domains() {
                return Err(CurriculumError::Mismatch {
                    index,
                    what: "policy space",
                });
            }
            if t.rewards() != target.rewards() || t.discount() != target.discount() {
                return Err(CurriculumError::Mismatch {
                    index,
                    what: "reward",
                });
            }
            if !declared.is_subset(&actions) {
                return Err(CurriculumError::Mismatch {
                    index,
                    what: "actions",
                });
            }
        }
        Ok(())
    }
}

/// Produces the edits of one source task. Every edit must stay inside
/// `delta`, and the output must be a function of `(round, seed)`.
pub trait Generator {
    fn generate(
        &self,
        target: &FiniteTask,
        delta: &BTreeSet<NodeId>,
        round: usize,
        seed: u64,
    ) -> Vec<Edit>;
}

impl<F> Generator for F
where
    F: Fn(&FiniteTask, &BTreeSet<NodeId>, usize, u64) -> Vec<Edit>,
{
    fn generate(
        &self,
        target: &FiniteTask,
        delta: &BTreeSet<NodeId>,
        round: usize,
        seed: u64,
    ) -> Vec<Edit> {
        self(target, delta, round, seed)
    }
}

/// Re-randomizes every node of `delta`: exogenous variables feeding only that
/// node get a fresh full-support distribution, other nodes a random constant.
#[derive(Debug, Clone, Copy, Default)]
pub struct Shuffle;

/// Sets every node of `delta` to the first value of its domain.
#[derive(Debug, Clone, Copy, Default)]
pub struct Constant;

/// Never edits anything; every source task equals the target.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoEdits;

fn round_rng(round: usize, seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round as u64);
    rng
}

impl Generator for Shuffle {
    fn generate(
        &self,
        target: &FiniteTask,
        delta: &BTreeSet<NodeId>,
        round: usize,
        seed: u64,
    ) -> Vec<Edit> {
        let mut rng = round_rng(round, seed);
        let mut edits = Vec::new();
        for v in delta {
            let Some(domain) = target.domain(v) else {
                continue;
            };
            let own = target.dedicated_exogenous(v);
            if own.is_empty() {
                let value = domain.values()[rng.random_range(0..domain.len())].clone();
                edits.push(Edit::SetConstant {
                    node: v.clone(),
                    value,
                });
                continue;
            }
            for u in own {
                let n = target.exogenous_var(&u).map_or(0, |x| x.domain.len());
                let weights: Vec<i64> = (0..n).map(|_| rng.random_range(1..10)).collect();
                let total: i64 = weights.iter().sum();
                let probabilities = weights.iter().map(|w| rational(*w, total)).collect();
                edits.push(Edit::ReweightExogenous {
                    name: u,
                    probabilities,
                });
            }
        }
        edits
    }
}

impl Generator for Constant {
    fn generate(
        &self,
        target: &FiniteTask,
        delta: &BTreeSet<NodeId>,
        _round: usize,
        _seed: u64,
    ) -> Vec<Edit> {
        delta
            .iter()
            .filter_map(|v| {
                let value = target.domain(v)?.values().first()?.clone();
                Some(Edit::SetConstant {
                    node: v.clone(),
                    value,
                })
            })
            .collect()
    }
}

impl Generator for NoEdits {
    fn generate(&self, _: &FiniteTask, _: &BTreeSet<NodeId>, _: usize, _: u64) -> Vec<Edit> {
        Vec::new()
    }
}

/// Built-in generators by name: `shuffle`, `constant`, `none`.
pub fn generator_by_name(name: &str) -> Option<Box<dyn Generator>> {
    match name {
        "shuffle" => Some(Box::new(Shuffle)),
        "constant" => Some(Box::new(Constant)),
        "none" => Some(Box::new(NoEdits)),
        _ => None,
    }
}

fn generate_source(
    target: &FiniteTask,
    gen: &dyn Generator,
    delta: &BTreeSet<NodeId>,
    round: usize,
    seed: u64,
) -> Result<SourceTask, CurriculumError> {
    let edits = gen.generate(target, delta, round, seed);
    for e in &edits {
        if let Some(node) = e.targets(target).into_iter().find(|v| !delta.contains(v)) {
            return Err(CurriculumError::Generator { node });
        }
    }
    Ok(apply_edits(target, &edits)?)
}

#[derive(Debug, Clone)]
pub enum Learner {
    /// One exact solve per source task, warm-started from the current policy.
    Exact(SolverConfig),
    /// Tabular learning with tables carried from task to task.
    Tabular(LearnerConfig),
}

#[derive(Debug, Clone)]
pub struct RunEntry {
    pub step: usize,
    /// Index of the source task within the curriculum or generated sequence.
    pub task: usize,
    /// Action the step was generated for, when the loop tracks one.
    pub action: Option<NodeId>,
    pub policy: Policy,
    pub source_value: Rational,
    pub target_value: Rational,
}

#[derive(Debug, Clone)]
pub struct RunLog {
    pub entries: Vec<RunEntry>,
    pub initial_value: Rational,
    pub final_value: Rational,
}

struct Trainer<'a> {
    target: &'a FiniteTask,
    learner: &'a Learner,
    seed: u64,
    policy: Policy,
    tables: Option<QLearner>,
    log: RunLog,
}

impl<'a> Trainer<'a> {
    fn new(
        target: &'a FiniteTask,
        learner: &'a Learner,
        seed: u64,
    ) -> Result<Self, CurriculumError> {
        let policy = Policy::uniform(target);
        let initial = target.expected_reward(&policy)?;
        let tables = match learner {
            Learner::Tabular(_) => Some(QLearner::new(target, &policy)?),
            Learner::Exact(_) => None,
        };
        Ok(Trainer {
            target,
            learner,
            seed,
            policy,
            tables,
            log: RunLog {
                entries: Vec::new(),
                initial_value: initial.clone(),
                final_value: initial,
            },
        })
    }

    fn train(
        &mut self,
        source: &FiniteTask,
        task: usize,
        action: Option<NodeId>,
    ) -> Result<(), CurriculumError> {
        let step = self.log.entries.len();
        self.policy = match (self.learner, self.tables.as_mut()) {
            (Learner::Exact(cfg), _) => solve_with(source, Some(&self.policy), cfg)?,
            (Learner::Tabular(cfg), Some(q)) => {
                let cfg = LearnerConfig {
                    seed: self.seed.wrapping_add(step as u64),
                    ..cfg.clone()
                };
                q.train(source, &cfg)?;
                q.policy()
            }
            (Learner::Tabular(_), None) => unreachable!("tabular trainer owns tables"),
        };
        let target_value = self.target.expected_reward(&self.policy)?;
        self.log.entries.push(RunEntry {
            step,
            task,
            action,
            policy: self.policy.clone(),
            source_value: source.expected_reward(&self.policy)?,
            target_value: target_value.clone(),
        });
        self.log.final_value = target_value;
        Ok(())
    }

    fn finish(self) -> (Policy, RunLog) {
        (self.policy, self.log)
    }
}

/// Train through `c` in order, starting from the uniform policy.
pub fn curriculum_learning(
    target: &FiniteTask,
    c: &Curriculum,
    learner: &Learner,
    seed: u64,
) -> Result<(Policy, RunLog), CurriculumError> {
    c.check(target)?;
    let mut trainer = Trainer::new(target, learner, seed)?;
    for (j, src) in c.tasks.iter().enumerate() {
        trainer.train(&src.task, j, None)?;
    }
    Ok(trainer.finish())
}

/// One source task per prefix of the soluble order: the `k`-th task may
/// edit the maximal set editable with respect to the first `k` actions of
/// the order, and declares those actions.
pub fn find_causal_curriculum(
    target: &FiniteTask,
    gen: &dyn Generator,
    seed: u64,
) -> Result<Curriculum, CurriculumError> {
    let order = soluble_order(target.diagram())?;
    let mut c = Curriculum::new();
    let mut actions = BTreeSet::new();
    for (k, a) in order.as_slice().iter().enumerate() {
        actions.insert(a.clone());
        let delta = find_max_edit(target.diagram(), &actions)?;
        let src = generate_source(target, gen, &delta, k, seed)?;
        c.push(src, actions.clone());
    }
    Ok(c)
}

/// Comparison of one source task's optimal policy against the target's.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskAlignment {
    /// Declared actions whose source-optimal rule is also target-optimal.
    pub invariant: BTreeSet<NodeId>,
    /// Declared actions whose argmax differs on shared inputs, with those
    /// inputs; listed even when the value check rescued the action.
    pub disagreements: BTreeMap<NodeId, Vec<Vec<Rational>>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairAlignment {
    pub from: usize,
    pub to: usize,
    pub expanding: bool,
    /// Invariant in `from` but not in `to`.
    pub lost: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentReport {
    pub optimal_value: Rational,
    pub tasks: Vec<TaskAlignment>,
    pub pairs: Vec<PairAlignment>,
    pub aligned: bool,
}

impl AlignmentReport {
    /// Inputs at which the first lost action's rule disagrees after the
    /// first shrinking step.
    pub fn witness(&self) -> Option<(usize, &NodeId, &[Vec<Rational>])> {
        let p = self.pairs.iter().find(|p| !p.expanding)?;
        let a = p.lost.iter().next()?;
        let rows = self.tasks[p.to]
            .disagreements
            .get(a)
            .map_or(&[][..], |r| r.as_slice());
        Some((p.to, a, rows))
    }
}

/// Whether the invariant optimal rules never shrink along `c`.
///
/// An action counts as invariant in task `j` when it is declared for `j` and
/// the source-optimal rule agrees with the target-optimal rule on every input
/// reachable in both; when the argmax differs somewhere, the source rule is
/// substituted into the target-optimal policy on those inputs and the action
/// still counts if the optimal target value is kept.
pub fn check_causally_aligned(
    target: &FiniteTask,
    c: &Curriculum,
) -> Result<AlignmentReport, CurriculumError> {
    c.check(target)?;
    let star = solve_optimal(target)?;
    let optimal_value = target.expected_reward(&star)?;
    let mut tasks = Vec::new();
    for (src, declared) in c.tasks.iter().zip(&c.actions) {
        let pi = solve_optimal(&src.task)?;
        let overlap = rule_overlap(&pi, &src.task, &star, target)?;
        let mut entry = TaskAlignment {
            invariant: BTreeSet::new(),
            disagreements: BTreeMap::new(),
        };
        for a in declared {
            let o = &overlap.actions[a];
            if o.invariant() {
                entry.invariant.insert(a.clone());
                continue;
            }
            entry.disagreements.insert(a.clone(), o.disagree.clone());
            let swapped =
                transfer_rules(target, &star, &src.task, &pi, &BTreeSet::from([a.clone()]))?;
            if target.expected_reward(&swapped)? == optimal_value {
                entry.invariant.insert(a.clone());
            }
        }
        tasks.push(entry);
    }
    let pairs: Vec<PairAlignment> = tasks
        .windows(2)
        .enumerate()
        .map(|(j, w)| {
            let lost: BTreeSet<NodeId> = w[0]
                .invariant
                .difference(&w[1].invariant)
                .cloned()
                .collect();
            PairAlignment {
                from: j,
                to: j + 1,
                expanding: lost.is_empty(),
                lost,
            }
        })
        .collect();
    let aligned = pairs.iter().all(|p| p.expanding);
    Ok(AlignmentReport {
        optimal_value,
        tasks,
        pairs,
        aligned,
    })
}

/// Train action by action in soluble order. For each action, source tasks
/// editing the maximal set editable with respect to that action and the
/// actions before it are
/// generated and trained on until the inputs the action meets in those tasks
/// cover every input it meets in the target under an optimal policy.
pub fn causal_curriculum_learning(
    target: &FiniteTask,
    gen: &dyn Generator,
    learner: &Learner,
    seed: u64,
    round_cap: usize,
) -> Result<(Policy, RunLog), CurriculumError> {
    let order = soluble_order(target.diagram())?;
    let star = solve_optimal(target)?;
    let needed = reachable_rows(target, &star)?;
    let names = target.actions();
    let mut trainer = Trainer::new(target, learner, seed)?;
    let mut index = 0;
    for a in order.as_slice() {
        let i = names
            .iter()
            .position(|n| n == a)
            .expect("ordered actions are task actions");
        // Editable for `a` and for everything already trained. When the order
        // follows the relevance graph this is the maximal set for `a` alone;
        // unrelated actions placed earlier by the tie-break could otherwise be
        // disturbed.
        let expanded = expanded_action_set(&order, &BTreeSet::from([a.clone()]))?;
        let delta = find_max_edit(target.diagram(), &expanded)?;
        let mut covered = BTreeSet::new();
        let mut rounds = 0;
        while !needed[i].is_subset(&covered) {
            if rounds == round_cap {
                return Err(CurriculumError::Coverage {
                    action: a.clone(),
                    rounds,
                });
            }
            let src = generate_source(target, gen, &delta, index, seed)?;
            trainer.train(&src.task, index, Some(a.clone()))?;
            covered.extend(
                reachable_rows(&src.task, &trainer.policy)?[i]
                    .iter()
                    .copied(),
            );
            rounds += 1;
            index += 1;
        }
    }
    Ok(trainer.finish())
}

/// Fraction of `candidates` whose changed set is not editable with respect to
/// every action. Candidates that change nothing count as aligned.
pub fn misaligned_fraction(
    target: &FiniteTask,
    candidates: &[SourceTask],
) -> Result<Rational, CurriculumError> {
    if candidates.is_empty() {
        return Ok(Rational::zero());
    }
    let actions: BTreeSet<NodeId> = target.actions().into_iter().collect();
    let mut bad = 0i64;
    for src in candidates {
        if src.delta.is_empty() {
            continue;
        }
        let q = EditabilityQuery {
            delta: src.delta.clone(),
            actions: actions.clone(),
        };
        if !is_edit(target.diagram(), &q)? {
            bad += 1;
        }
    }
    Ok(rational(bad, candidates.len() as i64))
}

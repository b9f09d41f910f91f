use std::collections::{BTreeMap, BTreeSet};

use num::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PlanError;
use crate::graph::NodeId;
use crate::task::{FiniteTask, Policy, Rational};

/// Rows of every action's decision rule that occur with positive probability,
/// as row indices, from a single enumeration.
pub(crate) fn reachable_rows(
    task: &FiniteTask,
    policy: &Policy,
) -> Result<Vec<BTreeSet<usize>>, PlanError> {
    let (engine, tables) = task.prepare(policy)?;
    let mut seen = vec![BTreeSet::new(); engine.actions.len()];
    engine.enumerate(&tables, task.budget(), |vals, _| {
        for (a, s) in seen.iter_mut().enumerate() {
            s.insert(engine.row_of(a, vals));
        }
    })?;
    Ok(seen)
}

/// Reachable input tuples of every action, keyed by action.
pub fn reachable_inputs(
    task: &FiniteTask,
    policy: &Policy,
) -> Result<BTreeMap<NodeId, BTreeSet<Vec<Rational>>>, PlanError> {
    let rows = reachable_rows(task, policy)?;
    let mut out = BTreeMap::new();
    for (a, name) in task.actions().iter().enumerate() {
        let rule = policy.rule(name).expect("checked policy");
        out.insert(
            name.clone(),
            rows[a].iter().map(|&r| rule.row_tuple(r)).collect(),
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActionOverlap {
    /// Input tuples reachable under both policies in their tasks.
    pub shared: Vec<Vec<Rational>>,
    /// Shared tuples where the argmax choices differ.
    pub disagree: Vec<Vec<Rational>>,
}

impl ActionOverlap {
    /// Agreement on the whole intersection; vacuous when it is empty.
    pub fn invariant(&self) -> bool {
        self.disagree.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OverlapReport {
    pub actions: BTreeMap<NodeId, ActionOverlap>,
}

impl OverlapReport {
    pub fn invariant_actions(&self) -> BTreeSet<NodeId> {
        self.actions
            .iter()
            .filter(|(_, o)| o.invariant())
            .map(|(a, _)| a.clone())
            .collect()
    }
}

/// Compare the argmax rules of `a` (run in `a_task`) and `b` (run in
/// `b_task`) on the inputs both reach.
pub fn rule_overlap(
    a: &Policy,
    a_task: &FiniteTask,
    b: &Policy,
    b_task: &FiniteTask,
) -> Result<OverlapReport, PlanError> {
    let ra = reachable_rows(a_task, a)?;
    let rb = reachable_rows(b_task, b)?;
    let mut report = OverlapReport::default();
    for (i, name) in a_task.actions().iter().enumerate() {
        let (rule_a, rule_b) = match (a.rule(name), b.rule(name)) {
            (Some(x), Some(y)) => (x, y),
            _ => {
                return Err(PlanError::Config(format!(
                    "both policies need a rule for {name}"
                )))
            }
        };
        let mut entry = ActionOverlap::default();
        for row in ra[i].intersection(&rb[i]) {
            let tuple = rule_a.row_tuple(*row);
            if rule_a.argmax(*row) != rule_b.argmax(*row) {
                entry.disagree.push(tuple.clone());
            }
            entry.shared.push(tuple);
        }
        report.actions.insert(name.clone(), entry);
    }
    Ok(report)
}

/// `target_policy` with the rules of `actions` replaced by `source_policy`'s
/// on the inputs reachable both in the source (under `source_policy`) and in
/// the target (under `target_policy`).
pub fn transfer_rules(
    target: &FiniteTask,
    target_policy: &Policy,
    source: &FiniteTask,
    source_policy: &Policy,
    actions: &BTreeSet<NodeId>,
) -> Result<Policy, PlanError> {
    let rt = reachable_rows(target, target_policy)?;
    let rs = reachable_rows(source, source_policy)?;
    let mut out = target_policy.clone();
    for (i, name) in target.actions().iter().enumerate() {
        if !actions.contains(name) {
            continue;
        }
        let src = source_policy.rule(name).expect("checked policy").clone();
        let rule = out.rule_mut(name).expect("checked policy");
        for row in rt[i].intersection(&rs[i]) {
            rule.rows[*row] = src.rows[*row].clone();
        }
    }
    Ok(out)
}

/// Interquartile mean rescaled to `[0, 1]` by `(x - lower) / (upper - lower)`.
///
/// Drops `⌊n/4⌋` values from each end of the sorted list and averages the
/// rest, which is the usual middle-half mean when `n` is divisible by 4.
pub fn normalized_iqm(
    values: &[Rational],
    lower: &Rational,
    upper: &Rational,
) -> Result<Rational, PlanError> {
    if lower >= upper {
        return Err(PlanError::Config(format!(
            "bounds [{lower}, {upper}] are degenerate"
        )));
    }
    if values.is_empty() {
        return Err(PlanError::Config("no values to average".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort();
    let cut = sorted.len() / 4;
    let middle = &sorted[cut..sorted.len() - cut];
    let mut total = Rational::zero();
    for x in middle {
        total += x - lower;
    }
    Ok(total / (Rational::from_integer((middle.len() as i64).into()) * (upper - lower)))
}

/// Smallest and largest total discounted reward allowed by the reward domains.
pub fn reward_bounds(task: &FiniteTask) -> (Rational, Rational) {
    let mut lo = Rational::zero();
    let mut hi = Rational::zero();
    let mut g = Rational::one();
    for y in task.rewards() {
        let d = task.domain(y).expect("rewards have domains").values();
        lo += d.iter().min().expect("non-empty domain") * &g;
        hi += d.iter().max().expect("non-empty domain") * &g;
        g *= task.discount();
    }
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalReport {
    pub expected_reward: Rational,
    /// Comparison with a reference policy on inputs both reach.
    pub overlap: Option<OverlapReport>,
    /// Normalized IQM of sampled returns, scaled by [`reward_bounds`].
    pub normalized_iqm: Option<Rational>,
    pub samples: usize,
}

/// Exact value of `policy`, optionally compared with `reference` and
/// summarized over `samples` seeded episodes.
pub fn evaluate(
    task: &FiniteTask,
    policy: &Policy,
    reference: Option<&Policy>,
    samples: usize,
    seed: u64,
) -> Result<EvalReport, PlanError> {
    let expected_reward = task.expected_reward(policy)?;
    let overlap = match reference {
        Some(r) => Some(rule_overlap(policy, task, r, task)?),
        None => None,
    };
    let normalized_iqm = if samples == 0 {
        None
    } else {
        let sampler = task.sampler(policy)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let returns: Vec<Rational> = (0..samples)
            .map(|_| sampler.sample(&mut rng).reward)
            .collect();
        let (lo, hi) = reward_bounds(task);
        if lo == hi {
            None
        } else {
            Some(normalized_iqm(&returns, &lo, &hi)?)
        }
    };
    Ok(EvalReport {
        expected_reward,
        overlap,
        normalized_iqm,
        samples,
    })
}

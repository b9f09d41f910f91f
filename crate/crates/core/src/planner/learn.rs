use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PlanError;
use crate::graph::NodeId;
use crate::task::{rational, to_f64, FiniteTask, Policy, Provenance, Rational};

const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LearnerConfig {
    pub episodes: u64,
    pub learning_rate: Rational,
    pub exploration: Rational,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            episodes: 100_000,
            learning_rate: rational(1, 10),
            exploration: rational(1, 10),
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn with_seed(seed: u64) -> Self {
        LearnerConfig {
            seed,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<(), PlanError> {
        let unit = |r: &Rational| *r > rational(0, 1) && *r <= rational(1, 1);
        if !unit(&self.learning_rate) || !unit(&self.exploration) {
            return Err(PlanError::Config("rates must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Tabular action values over every action's `(input row, value)` pairs.
///
/// Each episode is sampled with ε-greedy actions; afterwards every action
/// moves its value toward the discounted sum of the rewards downstream of it
/// (a Monte-Carlo backup). The `k`-th update of a cell within one call to
/// [`QLearner::train`] uses step `α / (1 + α (k - 1))`, which starts at the
/// configured rate and settles like a running mean. Values persist across
/// calls, so a learner can move through a curriculum; step counts restart
/// with each call.
#[derive(Debug, Clone)]
pub struct QLearner {
    actions: Vec<NodeId>,
    q: Vec<Vec<Vec<f64>>>,
    visited: Vec<Vec<bool>>,
    base: Policy,
}

impl QLearner {
    pub fn new(task: &FiniteTask, init: &Policy) -> Result<Self, PlanError> {
        init.check(task)?;
        let engine = task.engine()?;
        let q = engine
            .actions
            .iter()
            .enumerate()
            .map(|(a, info)| vec![vec![0.0; engine.action_domain(a).len()]; info.rows])
            .collect();
        let visited = engine
            .actions
            .iter()
            .map(|info| vec![false; info.rows])
            .collect();
        Ok(QLearner {
            actions: task.actions(),
            q,
            visited,
            base: init.clone(),
        })
    }

    /// First value within rounding distance of the maximum, so actions whose
    /// estimates differ only by floating-point noise tie the way the exact
    /// solver breaks ties.
    fn greedy(values: &[f64]) -> usize {
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = TIE_TOLERANCE * max.abs().max(1.0);
        values.iter().position(|v| *v >= max - tol).unwrap_or(0)
    }

    /// Run `cfg.episodes` episodes in `task`, which must share the policy
    /// space the learner was created for.
    pub fn train(&mut self, task: &FiniteTask, cfg: &LearnerConfig) -> Result<(), PlanError> {
        cfg.check()?;
        if task.actions() != self.actions {
            return Err(PlanError::Config("task has a different action set".into()));
        }
        let engine = task.engine()?;
        if engine
            .actions
            .iter()
            .zip(&self.q)
            .any(|(info, q)| info.rows != q.len())
        {
            return Err(PlanError::Config(
                "task has a different policy space".into(),
            ));
        }
        let g = task.diagram().intervened()?;
        let rewards = task.rewards();
        let downstream: Vec<Vec<usize>> = self
            .actions
            .iter()
            .map(|a| {
                let de = g
                    .descendants(&BTreeSet::from([a.clone()]))
                    .unwrap_or_default();
                (0..rewards.len())
                    .filter(|&k| de.contains(&rewards[k]))
                    .collect()
            })
            .collect();
        let alpha = to_f64(&cfg.learning_rate);
        let eps = to_f64(&cfg.exploration);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut rows = vec![0usize; self.actions.len()];
        let mut counts: Vec<Vec<Vec<u32>>> = self
            .q
            .iter()
            .map(|a| a.iter().map(|r| vec![0; r.len()]).collect())
            .collect();
        for _ in 0..cfg.episodes {
            let q = &self.q;
            let vals = engine.sample_with(&mut rng, |a, row, rng| {
                rows[a] = row;
                let n = q[a][row].len();
                if rng.random::<f64>() < eps {
                    rng.random_range(0..n)
                } else {
                    Self::greedy(&q[a][row])
                }
            });
            for (a, info) in engine.actions.iter().enumerate() {
                let target: f64 = downstream[a]
                    .iter()
                    .map(|&k| engine.reward_f64(k, &vals))
                    .sum();
                let x = vals[info.node];
                let k = &mut counts[a][rows[a]][x];
                *k += 1;
                let step = alpha / (1.0 + alpha * f64::from(*k - 1));
                let cell = &mut self.q[a][rows[a]][x];
                *cell += step * (target - *cell);
                self.visited[a][rows[a]] = true;
            }
        }
        Ok(())
    }

    /// Greedy policy; rows never visited keep the initial rule.
    pub fn policy(&self) -> Policy {
        let mut p = self.base.clone();
        for (a, name) in self.actions.iter().enumerate() {
            let rule = p
                .rule_mut(name)
                .expect("initial policy covers every action");
            for row in 0..self.q[a].len() {
                if self.visited[a][row] {
                    rule.set_deterministic(row, Self::greedy(&self.q[a][row]));
                }
            }
        }
        p.provenance = Provenance::Learned;
        p
    }

    pub fn values(&self, action: usize, row: usize) -> &[f64] {
        &self.q[action][row]
    }
}

/// Train from `init` for `cfg.episodes` episodes and extract the greedy policy.
pub fn q_learn(task: &FiniteTask, cfg: &LearnerConfig, init: &Policy) -> Result<Policy, PlanError> {
    let mut learner = QLearner::new(task, init)?;
    learner.train(task, cfg)?;
    Ok(learner.policy())
}

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Engine, FiniteTask, Policy, PolicyTables, Rational, TaskError};
use crate::graph::{GraphError, NodeId};

/// Exact joint distribution over query tuples (in query order).
pub type Distribution = BTreeMap<Vec<Rational>, Rational>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub values: BTreeMap<NodeId, Rational>,
    pub reward: Rational,
}

impl FiniteTask {
    pub(crate) fn prepare(
        &self,
        policy: &Policy,
    ) -> Result<(Arc<Engine>, PolicyTables), TaskError> {
        policy.check(self)?;
        let engine = self.engine()?;
        let tables = engine.tables(policy)?;
        Ok((engine, tables))
    }

    fn positions(engine: &Engine, nodes: &[NodeId]) -> Result<Vec<usize>, TaskError> {
        nodes
            .iter()
            .map(|v| {
                engine
                    .pos(v)
                    .ok_or_else(|| GraphError::UnknownNode(v.clone()).into())
            })
            .collect()
    }

    /// `P(query | given; do(π))`, exact. Fails with
    /// [`TaskError::UnsupportedEvent`] when `given` has probability zero.
    pub fn interventional_distribution(
        &self,
        policy: &Policy,
        query: &[NodeId],
        given: &[(NodeId, Rational)],
    ) -> Result<Distribution, TaskError> {
        let (engine, tables) = self.prepare(policy)?;
        let qpos = Self::positions(&engine, query)?;
        let mut evidence = Vec::with_capacity(given.len());
        for (v, value) in given {
            let pos = engine
                .pos(v)
                .ok_or_else(|| GraphError::UnknownNode(v.clone()))?;
            let idx =
                engine
                    .domain_at(pos)
                    .index_of(value)
                    .ok_or_else(|| TaskError::NotInDomain {
                        node: v.clone(),
                        value: value.to_string(),
                    })?;
            evidence.push((pos, idx));
        }
        let mut joint: BTreeMap<Vec<usize>, Rational> = BTreeMap::new();
        let mut mass = Rational::zero();
        engine.enumerate(&tables, self.budget(), |vals, w| {
            if evidence.iter().all(|&(p, i)| vals[p] == i) {
                mass += w;
                *joint
                    .entry(qpos.iter().map(|&p| vals[p]).collect())
                    .or_insert_with(Rational::zero) += w;
            }
        })?;
        if mass.is_zero() {
            return Err(TaskError::UnsupportedEvent);
        }
        Ok(joint
            .into_iter()
            .map(|(k, p)| {
                let key = k
                    .iter()
                    .zip(&qpos)
                    .map(|(&i, &pos)| engine.domain_at(pos).value(i).clone())
                    .collect();
                (key, p / &mass)
            })
            .collect())
    }

    /// `E[Σ γ^(k-1) Y_k; do(π)]`.
    pub fn expected_reward(&self, policy: &Policy) -> Result<Rational, TaskError> {
        let (engine, tables) = self.prepare(policy)?;
        self.expected_reward_tables(&engine, &tables)
    }

    pub(crate) fn expected_reward_tables(
        &self,
        engine: &Engine,
        tables: &PolicyTables,
    ) -> Result<Rational, TaskError> {
        let mut total = Rational::zero();
        engine.enumerate(tables, self.budget(), |vals, w| {
            let r = engine.reward(vals);
            if !r.is_zero() {
                total += r * w;
            }
        })?;
        Ok(total)
    }

    /// Support of the joint distribution of `s` under `do(π)`.
    pub fn reachable_values(
        &self,
        policy: &Policy,
        s: &[NodeId],
    ) -> Result<BTreeSet<Vec<Rational>>, TaskError> {
        let (engine, tables) = self.prepare(policy)?;
        let pos = Self::positions(&engine, s)?;
        let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
        engine.enumerate(&tables, self.budget(), |vals, _| {
            seen.insert(pos.iter().map(|&p| vals[p]).collect());
        })?;
        Ok(seen
            .into_iter()
            .map(|k| {
                k.iter()
                    .zip(&pos)
                    .map(|(&i, &p)| engine.domain_at(p).value(i).clone())
                    .collect()
            })
            .collect())
    }

    /// One episode drawn with a ChaCha8 generator seeded by `seed`.
    pub fn sample_episode(&self, policy: &Policy, seed: u64) -> Result<Trajectory, TaskError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_episode_with(policy, &mut rng)
    }

    pub fn sample_episode_with<R: rand::Rng>(
        &self,
        policy: &Policy,
        rng: &mut R,
    ) -> Result<Trajectory, TaskError> {
        let (engine, tables) = self.prepare(policy)?;
        let vals = engine.sample(&tables, rng);
        Ok(Trajectory {
            values: engine
                .names()
                .iter()
                .enumerate()
                .map(|(p, n)| (n.clone(), engine.domain_at(p).value(vals[p]).clone()))
                .collect(),
            reward: engine.reward(&vals),
        })
    }
}

/// Reusable episode sampler for one task and policy.
pub struct Sampler {
    engine: Arc<Engine>,
    tables: PolicyTables,
}

impl Sampler {
    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> Trajectory {
        let vals = self.engine.sample(&self.tables, rng);
        Trajectory {
            values: self
                .engine
                .names()
                .iter()
                .enumerate()
                .map(|(p, n)| (n.clone(), self.engine.domain_at(p).value(vals[p]).clone()))
                .collect(),
            reward: self.engine.reward(&vals),
        }
    }
}

impl FiniteTask {
    pub fn sampler(&self, policy: &Policy) -> Result<Sampler, TaskError> {
        let (engine, tables) = self.prepare(policy)?;
        Ok(Sampler { engine, tables })
    }
}

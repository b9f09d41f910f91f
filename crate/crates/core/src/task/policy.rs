use std::collections::BTreeMap;

use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use super::{FiniteDomain, FiniteTask, Rational, TaskError};
use crate::graph::NodeId;

/// `π_i(X_i | S_i)` as a dense table. Rows enumerate input tuples in mixed
/// radix over the input domains, first input most significant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionRule {
    pub inputs: Vec<NodeId>,
    pub input_domains: Vec<FiniteDomain>,
    pub values: FiniteDomain,
    pub rows: Vec<Vec<Rational>>,
}

impl DecisionRule {
    pub fn uniform(
        inputs: Vec<NodeId>,
        input_domains: Vec<FiniteDomain>,
        values: FiniteDomain,
    ) -> Self {
        let n: usize = input_domains.iter().map(|d| d.len()).product();
        let p = super::rational(1, values.len().max(1) as i64);
        DecisionRule {
            rows: vec![vec![p; values.len()]; n],
            inputs,
            input_domains,
            values,
        }
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn row_index(&self, tuple: &[Rational]) -> Option<usize> {
        if tuple.len() != self.inputs.len() {
            return None;
        }
        let mut row = 0;
        for (v, d) in tuple.iter().zip(&self.input_domains) {
            row = row * d.len() + d.index_of(v)?;
        }
        Some(row)
    }

    pub fn row_tuple(&self, mut row: usize) -> Vec<Rational> {
        let mut out = vec![Rational::zero(); self.inputs.len()];
        for k in (0..self.inputs.len()).rev() {
            let d = &self.input_domains[k];
            out[k] = d.value(row % d.len()).clone();
            row /= d.len();
        }
        out
    }

    /// Most likely value index, ties to the first in domain order.
    pub fn argmax(&self, row: usize) -> usize {
        let dist = &self.rows[row];
        let mut best = 0;
        for (i, p) in dist.iter().enumerate() {
            if *p > dist[best] {
                best = i;
            }
        }
        best
    }

    pub fn set_deterministic(&mut self, row: usize, value: usize) {
        let n = self.values.len();
        self.rows[row] = (0..n)
            .map(|i| {
                if i == value {
                    Rational::one()
                } else {
                    Rational::zero()
                }
            })
            .collect();
    }

    pub fn is_deterministic(&self) -> bool {
        self.rows.iter().all(|r| r.iter().any(|p| p.is_one()))
    }

    fn check(&self, action: &NodeId) -> Result<(), TaskError> {
        let n: usize = self.input_domains.iter().map(|d| d.len()).product();
        if self.rows.len() != n || self.inputs.len() != self.input_domains.len() {
            return Err(TaskError::Policy(format!(
                "rule for {action} has a malformed row set"
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.values.len() {
                return Err(TaskError::Policy(format!(
                    "row {i} of {action} has the wrong width"
                )));
            }
            if row.iter().any(|p| p.is_negative()) {
                return Err(TaskError::Policy(format!(
                    "row {i} of {action} has a negative entry"
                )));
            }
            if !row.iter().sum::<Rational>().is_one() {
                return Err(TaskError::Policy(format!(
                    "row {i} of {action} does not sum to 1"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    Given,
    Exact,
    Learned,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Policy {
    rules: BTreeMap<NodeId, DecisionRule>,
    pub provenance: Provenance,
}

impl Policy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn uniform(task: &FiniteTask) -> Self {
        let mut p = Policy::new();
        for a in task.actions() {
            p.rules.insert(a.clone(), Self::blank_rule(task, &a));
        }
        p
    }

    fn blank_rule(task: &FiniteTask, a: &NodeId) -> DecisionRule {
        let inputs = task.inputs(a).to_vec();
        let domains = inputs
            .iter()
            .map(|s| {
                task.domain(s)
                    .cloned()
                    .unwrap_or_else(|| FiniteDomain::new(vec![]))
            })
            .collect();
        let values = task
            .domain(a)
            .cloned()
            .unwrap_or_else(|| FiniteDomain::new(vec![]));
        DecisionRule::uniform(inputs, domains, values)
    }

    /// Deterministic policy from `f(action, input values) -> action value`.
    pub fn deterministic(
        task: &FiniteTask,
        f: impl Fn(&NodeId, &[Rational]) -> Rational,
    ) -> Result<Self, TaskError> {
        let mut p = Policy::new();
        for a in task.actions() {
            let mut rule = Self::blank_rule(task, &a);
            for row in 0..rule.row_count() {
                let value = f(&a, &rule.row_tuple(row));
                let i = rule
                    .values
                    .index_of(&value)
                    .ok_or_else(|| TaskError::NotInDomain {
                        node: a.clone(),
                        value: value.to_string(),
                    })?;
                rule.set_deterministic(row, i);
            }
            p.rules.insert(a, rule);
        }
        Ok(p)
    }

    pub fn rule(&self, action: &NodeId) -> Option<&DecisionRule> {
        self.rules.get(action)
    }

    pub fn rule_mut(&mut self, action: &NodeId) -> Option<&mut DecisionRule> {
        self.rules.get_mut(action)
    }

    pub fn set_rule(&mut self, action: NodeId, rule: DecisionRule) {
        self.rules.insert(action, rule);
    }

    pub fn rules(&self) -> impl Iterator<Item = (&NodeId, &DecisionRule)> {
        self.rules.iter()
    }

    /// Deterministic choice of `action` at an input tuple, by argmax.
    pub fn choice(&self, action: &NodeId, tuple: &[Rational]) -> Option<&Rational> {
        let rule = self.rules.get(action)?;
        let row = rule.row_index(tuple)?;
        Some(rule.values.value(rule.argmax(row)))
    }

    /// Shape and normalisation check against a task.
    pub fn check(&self, task: &FiniteTask) -> Result<(), TaskError> {
        for a in task.actions() {
            let rule = self
                .rules
                .get(&a)
                .ok_or_else(|| TaskError::Policy(format!("no decision rule for {a}")))?;
            rule.check(&a)?;
        }
        task.engine()?.tables(self)?;
        Ok(())
    }
}

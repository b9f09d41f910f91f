use num::Zero;

use super::PlanError;
use crate::editability::relevance_graph;
use crate::task::{Engine, FiniteTask, Policy, PolicyTables, Provenance, Rational};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverConfig {
    /// Cap on joint deterministic rules enumerated for one strongly connected
    /// component of the relevance graph.
    pub max_joint: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { max_joint: 4096 }
    }
}

/// Exact optimal policy with the default configuration and no warm start.
pub fn solve_optimal(task: &FiniteTask) -> Result<Policy, PlanError> {
    solve_with(task, None, &SolverConfig::default())
}

/// Exact optimal policy.
///
/// Actions are optimized component by component in relevance order. A single
/// action picks, per input row, the value maximizing the expected reward
/// given that row, with already-solved actions fixed and unsolved ones
/// uniform; ties go to the first value in domain order. A component with
/// several actions is solved by trying every joint deterministic rule over
/// its reachable rows, completing the rest of the order for each, and keeping
/// the first best. Rows that cannot occur keep `init`'s rule, or the first
/// value when there is no `init`.
pub fn solve_with(
    task: &FiniteTask,
    init: Option<&Policy>,
    cfg: &SolverConfig,
) -> Result<Policy, PlanError> {
    let engine = task.engine()?;
    if let Some(p) = init {
        p.check(task)?;
    }
    let rg = relevance_graph(task.diagram())?;
    let names = task.actions();
    let components: Vec<Vec<usize>> = rg
        .components
        .iter()
        .map(|c| {
            c.iter()
                .map(|a| names.iter().position(|n| n == a).expect("action"))
                .collect()
        })
        .collect();
    let fallback = match init {
        Some(p) => engine.tables(p)?,
        None => {
            let mut t = engine.uniform_tables();
            for a in 0..names.len() {
                t.set_deterministic(a, &vec![0; engine.actions[a].rows]);
            }
            t
        }
    };
    let solver = Solver {
        task,
        engine: &engine,
        components: &components,
        fallback: &fallback,
        cfg,
    };
    let tables = solver.solve_from(0, engine.uniform_tables())?;
    let mut policy = Policy::uniform(task);
    for (a, name) in names.iter().enumerate() {
        let rule = policy
            .rule_mut(name)
            .expect("uniform policy has every action");
        for (row, dist) in tables.rows[a].iter().enumerate() {
            let n = rule.values.len();
            let mut probs = vec![Rational::zero(); n];
            for (v, p) in dist {
                probs[*v] = p.clone();
            }
            rule.rows[row] = probs;
        }
    }
    policy.provenance = Provenance::Exact;
    Ok(policy)
}

struct Solver<'a> {
    task: &'a FiniteTask,
    engine: &'a Engine,
    components: &'a [Vec<usize>],
    fallback: &'a PolicyTables,
    cfg: &'a SolverConfig,
}

impl Solver<'_> {
    fn solve_from(
        &self,
        start: usize,
        mut tables: PolicyTables,
    ) -> Result<PolicyTables, PlanError> {
        for k in start..self.components.len() {
            let comp = &self.components[k];
            if comp.len() == 1 {
                self.solve_single(comp[0], &mut tables)?;
            } else {
                return self.solve_joint(k, tables);
            }
        }
        Ok(tables)
    }

    fn solve_single(&self, a: usize, tables: &mut PolicyTables) -> Result<(), PlanError> {
        let info = &self.engine.actions[a];
        let n = self.engine.action_domain(a).len();
        tables.rows[a] = self.engine.uniform_tables().rows[a].clone();
        let mut weight = vec![Rational::zero(); info.rows];
        let mut gain = vec![vec![Rational::zero(); n]; info.rows];
        self.engine
            .enumerate(tables, self.task.budget(), |vals, w| {
                let row = self.engine.row_of(a, vals);
                let x = vals[info.node];
                weight[row] += w;
                let r = self.engine.reward(vals);
                if !r.is_zero() {
                    gain[row][x] += r * w;
                }
            })?;
        // Under a uniform rule every value gets the same share of a row's
        // weight, so comparing accumulated gains compares conditional means.
        for row in 0..info.rows {
            if weight[row].is_zero() {
                tables.rows[a][row] = self.fallback.rows[a][row].clone();
                continue;
            }
            let mut best = 0;
            for x in 1..n {
                if gain[row][x] > gain[row][best] {
                    best = x;
                }
            }
            tables.set_row(a, row, best);
        }
        Ok(())
    }

    fn solve_joint(&self, k: usize, mut tables: PolicyTables) -> Result<PolicyTables, PlanError> {
        let comp = &self.components[k];
        for &a in comp {
            tables.rows[a] = self.engine.uniform_tables().rows[a].clone();
        }
        let mut reachable: Vec<Vec<bool>> = comp
            .iter()
            .map(|&a| vec![false; self.engine.actions[a].rows])
            .collect();
        self.engine
            .enumerate(&tables, self.task.budget(), |vals, _| {
                for (m, &a) in comp.iter().enumerate() {
                    reachable[m][self.engine.row_of(a, vals)] = true;
                }
            })?;
        // One slot per (action, reachable row); the odometer runs over slots.
        let mut slots = Vec::new();
        let mut combos: usize = 1;
        for (m, &a) in comp.iter().enumerate() {
            for (row, &r) in reachable[m].iter().enumerate() {
                if r {
                    let n = self.engine.action_domain(a).len();
                    combos = combos.saturating_mul(n);
                    slots.push((a, row, n));
                } else {
                    tables.rows[a][row] = self.fallback.rows[a][row].clone();
                }
            }
        }
        if combos > self.cfg.max_joint {
            return Err(PlanError::JointBudget {
                combinations: combos,
                cap: self.cfg.max_joint,
            });
        }
        let mut digits = vec![0usize; slots.len()];
        let mut best: Option<(Rational, PolicyTables)> = None;
        loop {
            let mut candidate = tables.clone();
            for (&(a, row, _), &v) in slots.iter().zip(&digits) {
                candidate.set_row(a, row, v);
            }
            let solved = self.solve_from(k + 1, candidate)?;
            let value = self.task.expected_reward_tables(self.engine, &solved)?;
            if best.as_ref().is_none_or(|(b, _)| value > *b) {
                best = Some((value, solved));
            }
            // Last slot varies fastest, so earlier slots keep small values longest.
            let mut i = slots.len();
            loop {
                if i == 0 {
                    return Ok(best.expect("at least one combination").1);
                }
                i -= 1;
                digits[i] += 1;
                if digits[i] < slots[i].2 {
                    break;
                }
                digits[i] = 0;
            }
        }
    }
}

//! JSON documents for tasks, policies, curricula and run reports.
//!
//! Output is canonical: object keys are sorted, rationals are written in
//! lowest terms as strings such as `"3/4"`, and lists with no inherent order
//! are sorted by name. Emitting the same value twice gives the same bytes.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::curriculum::{AlignmentReport, Curriculum, RunLog};
use crate::graph::{NodeId, NodeRole};
use crate::planner::OverlapReport;
use crate::task::{
    apply_edits, parse_rational, DecisionRule, Edit, ExogenousVar, Expr, FiniteDomain, FiniteTask,
    FunctionBody, Policy, Provenance, Rational, StructuralFunction, TaskBuilder,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DocumentError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> DocumentError {
    DocumentError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

fn syntax(e: serde_json::Error) -> DocumentError {
    let text = e.to_string();
    let message = match text.rsplit_once(" at line ") {
        Some((m, _)) => m.to_string(),
        None => text,
    };
    DocumentError::Syntax {
        line: e.line(),
        column: e.column(),
        message,
    }
}

/// Pretty JSON with a trailing newline. `serde_json`'s default map keeps keys
/// sorted.
pub fn to_canonical_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values always serialize");
    s.push('\n');
    s
}

pub fn rational_str(r: &Rational) -> String {
    r.to_string()
}

fn rationals(rs: &[Rational]) -> Value {
    Value::Array(rs.iter().map(|r| Value::String(rational_str(r))).collect())
}

fn parse_r(path: &str, s: &str) -> Result<Rational, DocumentError> {
    parse_rational(s).ok_or_else(|| schema(path, format!("`{s}` is not a rational p/q with q > 0")))
}

fn parse_rs(path: &str, ss: &[String]) -> Result<Vec<Rational>, DocumentError> {
    ss.iter()
        .enumerate()
        .map(|(i, s)| parse_r(&format!("{path}[{i}]"), s))
        .collect()
}

fn parse_domain(path: &str, ss: &[String]) -> Result<FiniteDomain, DocumentError> {
    let d = FiniteDomain::new(parse_rs(path, ss)?);
    if d.is_empty() {
        return Err(schema(path, "domain is empty"));
    }
    if d.has_duplicates() {
        return Err(schema(path, "domain repeats a value"));
    }
    Ok(d)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVariable {
    name: String,
    domain: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExogenous {
    name: String,
    domain: Vec<String>,
    probabilities: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRow {
    args: Vec<String>,
    value: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFunction {
    output: String,
    parents: Vec<String>,
    #[serde(default)]
    expr: Option<String>,
    #[serde(default)]
    table: Option<Vec<RawRow>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAction {
    name: String,
    inputs: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    variables: Vec<RawVariable>,
    #[serde(default)]
    exogenous: Vec<RawExogenous>,
    #[serde(default)]
    confounders: Vec<[String; 2]>,
    functions: Vec<RawFunction>,
    actions: Vec<RawAction>,
    rewards: Vec<String>,
    #[serde(default)]
    discount: Option<String>,
    #[serde(default)]
    horizon: Option<usize>,
}

fn raw_function(path: &str, f: &RawFunction) -> Result<StructuralFunction, DocumentError> {
    let body = match (&f.expr, &f.table) {
        (Some(src), None) => FunctionBody::Expr(
            Expr::parse(src).map_err(|e| schema(format!("{path}.expr"), e.to_string()))?,
        ),
        (None, Some(rows)) => {
            let mut table = BTreeMap::new();
            for (i, row) in rows.iter().enumerate() {
                let p = format!("{path}.table[{i}]");
                if row.args.len() != f.parents.len() {
                    return Err(schema(
                        &p,
                        format!("{} args for {} parents", row.args.len(), f.parents.len()),
                    ));
                }
                let args = parse_rs(&format!("{p}.args"), &row.args)?;
                let value = parse_r(&format!("{p}.value"), &row.value)?;
                if table.insert(args, value).is_some() {
                    return Err(schema(&p, "duplicate row"));
                }
            }
            FunctionBody::Table(table)
        }
        _ => {
            return Err(schema(
                path,
                "exactly one of `expr` and `table` is required",
            ))
        }
    };
    Ok(StructuralFunction {
        output: NodeId::from(f.output.as_str()),
        parents: f.parents.iter().map(|p| NodeId::from(p.as_str())).collect(),
        body,
    })
}

/// Parse and fully validate a task document.
pub fn parse_task(text: &str) -> Result<FiniteTask, DocumentError> {
    let raw: RawTask = serde_json::from_str(text).map_err(syntax)?;
    let task = build_from_raw(&raw)?;
    let report = task.validate();
    if let Some(v) = report.violations.first() {
        return Err(schema("$", v.message.clone()));
    }
    check_confounders(&raw, &task)?;
    Ok(task)
}

/// Parse a task document without the semantic checks, so that
/// [`FiniteTask::validate`] can report every problem at once.
pub fn parse_task_unvalidated(text: &str) -> Result<FiniteTask, DocumentError> {
    let raw: RawTask = serde_json::from_str(text).map_err(syntax)?;
    build_from_raw(&raw)
}

fn build_from_raw(raw: &RawTask) -> Result<FiniteTask, DocumentError> {
    let mut domains = BTreeMap::new();
    for (i, v) in raw.variables.iter().enumerate() {
        let d = parse_domain(&format!("variables[{i}].domain"), &v.domain)?;
        if domains.insert(v.name.as_str(), d).is_some() {
            return Err(schema(
                format!("variables[{i}].name"),
                format!("`{}` declared twice", v.name),
            ));
        }
    }
    let action_names: BTreeSet<&str> = raw.actions.iter().map(|a| a.name.as_str()).collect();
    let reward_names: BTreeSet<&str> = raw.rewards.iter().map(String::as_str).collect();
    for (i, a) in raw.actions.iter().enumerate() {
        if !domains.contains_key(a.name.as_str()) {
            return Err(schema(
                format!("actions[{i}].name"),
                format!("`{}` is not a declared variable", a.name),
            ));
        }
    }
    for (i, y) in raw.rewards.iter().enumerate() {
        if !domains.contains_key(y.as_str()) {
            return Err(schema(
                format!("rewards[{i}]"),
                format!("`{y}` is not a declared variable"),
            ));
        }
        if action_names.contains(y.as_str()) {
            return Err(schema(
                format!("rewards[{i}]"),
                format!("`{y}` is also an action"),
            ));
        }
    }
    if let Some(h) = raw.horizon {
        if h != raw.actions.len() {
            return Err(schema(
                "horizon",
                format!("{h} does not match {} actions", raw.actions.len()),
            ));
        }
    }
    let mut b = TaskBuilder::new();
    for v in &raw.variables {
        let name = v.name.as_str();
        if !reward_names.contains(name) && !action_names.contains(name) {
            b.state(name, domains[name].clone());
        }
    }
    // Reward order sets the discount exponents.
    for y in &raw.rewards {
        b.reward(y.as_str(), domains[y.as_str()].clone());
    }
    for a in &raw.actions {
        b.action(
            a.name.as_str(),
            domains[a.name.as_str()].clone(),
            a.inputs.iter().map(String::as_str),
        );
    }
    for (i, u) in raw.exogenous.iter().enumerate() {
        let p = format!("exogenous[{i}]");
        let domain = parse_domain(&format!("{p}.domain"), &u.domain)?;
        let probabilities = parse_rs(&format!("{p}.probabilities"), &u.probabilities)?;
        b.exogenous(ExogenousVar::new(u.name.as_str(), domain, probabilities));
    }
    for (i, f) in raw.functions.iter().enumerate() {
        b.function(raw_function(&format!("functions[{i}]"), f)?);
    }
    if let Some(g) = &raw.discount {
        b.discount(parse_r("discount", g)?);
    }
    Ok(b.build())
}

fn check_confounders(raw: &RawTask, task: &FiniteTask) -> Result<(), DocumentError> {
    let declared: BTreeSet<(NodeId, NodeId)> = raw
        .confounders
        .iter()
        .map(|[a, b]| {
            let (a, b) = (NodeId::from(a.as_str()), NodeId::from(b.as_str()));
            if a <= b {
                (a, b)
            } else {
                (b, a)
            }
        })
        .collect();
    let derived: BTreeSet<(NodeId, NodeId)> = task.diagram().bidirected_edges().cloned().collect();
    if declared != derived {
        let missing: Vec<String> = derived
            .difference(&declared)
            .map(|(a, b)| format!("{a}<->{b}"))
            .collect();
        let extra: Vec<String> = declared
            .difference(&derived)
            .map(|(a, b)| format!("{a}<->{b}"))
            .collect();
        return Err(schema(
            "confounders",
            format!(
                "pairs must be exactly those sharing an exogenous parent (missing: [{}], unexpected: [{}])",
                missing.join(", "),
                extra.join(", ")
            ),
        ));
    }
    Ok(())
}

fn function_value(f: &StructuralFunction) -> Value {
    let mut m = Map::new();
    m.insert("output".into(), json!(f.output));
    m.insert("parents".into(), json!(f.parents));
    match &f.body {
        FunctionBody::Expr(e) => {
            m.insert("expr".into(), Value::String(e.to_string()));
        }
        FunctionBody::Table(t) => {
            let rows = t
                .iter()
                .map(|(args, v)| json!({"args": rationals(args), "value": rational_str(v)}))
                .collect();
            m.insert("table".into(), Value::Array(rows));
        }
    }
    Value::Object(m)
}

/// Task document as a JSON value.
///
/// The diagram is not written; parsing derives it from the functions, so a
/// source task whose edits dropped parents comes back with those edges
/// removed.
pub fn task_value(t: &FiniteTask) -> Value {
    let d = t.diagram();
    let variables: Vec<Value> = t
        .domains()
        .iter()
        .map(|(name, dom)| json!({"name": name, "domain": rationals(dom.values())}))
        .collect();
    let mut exo: Vec<&ExogenousVar> = t.exogenous().iter().collect();
    exo.sort_by(|a, b| a.name.cmp(&b.name));
    let exogenous: Vec<Value> = exo
        .iter()
        .map(|u| {
            json!({
                "name": u.name,
                "domain": rationals(u.domain.values()),
                "probabilities": rationals(&u.probabilities),
            })
        })
        .collect();
    let confounders: Vec<Value> = d.bidirected_edges().map(|(a, b)| json!([a, b])).collect();
    let functions: Vec<Value> = t.functions().values().map(function_value).collect();
    let actions: Vec<Value> = t
        .actions()
        .iter()
        .map(|a| json!({"name": a, "inputs": t.inputs(a)}))
        .collect();
    json!({
        "variables": variables,
        "exogenous": exogenous,
        "confounders": confounders,
        "functions": functions,
        "actions": actions,
        "rewards": t.rewards(),
        "discount": rational_str(t.discount()),
        "horizon": t.horizon(),
    })
}

pub fn emit_task(t: &FiniteTask) -> String {
    to_canonical_string(&task_value(t))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicyRow {
    input: Vec<String>,
    probabilities: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    inputs: Vec<String>,
    values: Vec<String>,
    rows: Vec<RawPolicyRow>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    #[serde(default)]
    provenance: Provenance,
    rules: BTreeMap<String, RawRule>,
}

/// Policy document: per action, its inputs, its values, and one row per input
/// tuple in domain order giving the probability of each value.
pub fn policy_value(p: &Policy) -> Value {
    let mut rules = Map::new();
    for (a, rule) in p.rules() {
        let rows: Vec<Value> = (0..rule.row_count())
            .map(|r| json!({"input": rationals(&rule.row_tuple(r)), "probabilities": rationals(&rule.rows[r])}))
            .collect();
        rules.insert(
            a.to_string(),
            json!({"inputs": rule.inputs, "values": rationals(rule.values.values()), "rows": rows}),
        );
    }
    json!({"provenance": p.provenance, "rules": rules})
}

pub fn emit_policy(p: &Policy) -> String {
    to_canonical_string(&policy_value(p))
}

/// Parse a policy for `task`. Rows may be listed in any order but every input
/// tuple must appear exactly once.
pub fn parse_policy(text: &str, task: &FiniteTask) -> Result<Policy, DocumentError> {
    let raw: RawPolicy = serde_json::from_str(text).map_err(syntax)?;
    let mut p = Policy::uniform(task);
    p.provenance = raw.provenance;
    for a in task.actions() {
        let path = format!("rules.{a}");
        let r = raw
            .rules
            .get(a.as_str())
            .ok_or_else(|| schema(&path, "missing decision rule"))?;
        let rule: &mut DecisionRule = p.rule_mut(&a).expect("uniform policy covers every action");
        let inputs: Vec<NodeId> = r.inputs.iter().map(|s| NodeId::from(s.as_str())).collect();
        if inputs != rule.inputs {
            return Err(schema(
                format!("{path}.inputs"),
                "inputs differ from the task's",
            ));
        }
        if parse_rs(&format!("{path}.values"), &r.values)? != rule.values.values() {
            return Err(schema(
                format!("{path}.values"),
                "values differ from the action's domain",
            ));
        }
        let mut seen = vec![false; rule.row_count()];
        for (i, row) in r.rows.iter().enumerate() {
            let rp = format!("{path}.rows[{i}]");
            let tuple = parse_rs(&format!("{rp}.input"), &row.input)?;
            let idx = rule
                .row_index(&tuple)
                .ok_or_else(|| schema(format!("{rp}.input"), "not a tuple of input values"))?;
            if std::mem::replace(&mut seen[idx], true) {
                return Err(schema(&rp, "duplicate input tuple"));
            }
            let probs = parse_rs(&format!("{rp}.probabilities"), &row.probabilities)?;
            if probs.len() != rule.values.len() {
                return Err(schema(
                    format!("{rp}.probabilities"),
                    "one probability per value is required",
                ));
            }
            rule.rows[idx] = probs;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            let t: Vec<String> = rule.row_tuple(missing).iter().map(rational_str).collect();
            return Err(schema(
                format!("{path}.rows"),
                format!("no row for input ({})", t.join(", ")),
            ));
        }
    }
    if let Some(extra) = raw
        .rules
        .keys()
        .find(|k| task.diagram().role(&NodeId::from(k.as_str())) != Some(NodeRole::Action))
    {
        return Err(schema(
            format!("rules.{extra}"),
            "not an action of the task",
        ));
    }
    p.check(task).map_err(|e| schema("rules", e.to_string()))?;
    Ok(p)
}

fn edit_value(e: &Edit) -> Value {
    match e {
        Edit::SetConstant { node, value } => {
            json!({"kind": "set_constant", "node": node, "value": rational_str(value)})
        }
        Edit::ReplaceFunction { function } => {
            json!({"kind": "replace_function", "function": function_value(function)})
        }
        Edit::ReweightExogenous {
            name,
            probabilities,
        } => {
            json!({"kind": "reweight_exogenous", "name": name, "probabilities": rationals(probabilities)})
        }
    }
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawEdit {
    SetConstant {
        node: String,
        value: String,
    },
    ReplaceFunction {
        function: RawFunction,
    },
    ReweightExogenous {
        name: String,
        probabilities: Vec<String>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStage {
    actions: Vec<String>,
    #[allow(dead_code)]
    #[serde(default)]
    delta: Vec<String>,
    edits: Vec<RawEdit>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCurriculum {
    tasks: Vec<RawStage>,
}

/// Curriculum document: per source task, its declared actions, the set of
/// changed nodes and the edits producing it from the target.
pub fn curriculum_value(c: &Curriculum) -> Value {
    let tasks: Vec<Value> = c
        .tasks
        .iter()
        .zip(&c.actions)
        .map(|(s, a)| {
            json!({
                "actions": a,
                "delta": s.delta,
                "edits": s.edits.iter().map(edit_value).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({"tasks": tasks})
}

pub fn emit_curriculum(c: &Curriculum) -> String {
    to_canonical_string(&curriculum_value(c))
}

/// Rebuild a curriculum by applying each stage's edits to `target`.
pub fn parse_curriculum(text: &str, target: &FiniteTask) -> Result<Curriculum, DocumentError> {
    let raw: RawCurriculum = serde_json::from_str(text).map_err(syntax)?;
    let mut c = Curriculum::new();
    for (j, stage) in raw.tasks.iter().enumerate() {
        let mut edits = Vec::new();
        for (k, e) in stage.edits.iter().enumerate() {
            let p = format!("tasks[{j}].edits[{k}]");
            edits.push(match e {
                RawEdit::SetConstant { node, value } => Edit::SetConstant {
                    node: node.as_str().into(),
                    value: parse_r(&format!("{p}.value"), value)?,
                },
                RawEdit::ReplaceFunction { function } => Edit::ReplaceFunction {
                    function: raw_function(&format!("{p}.function"), function)?,
                },
                RawEdit::ReweightExogenous {
                    name,
                    probabilities,
                } => Edit::ReweightExogenous {
                    name: name.as_str().into(),
                    probabilities: parse_rs(&format!("{p}.probabilities"), probabilities)?,
                },
            });
        }
        let src = apply_edits(target, &edits)
            .map_err(|e| schema(format!("tasks[{j}].edits"), e.to_string()))?;
        c.push(
            src,
            stage
                .actions
                .iter()
                .map(|a| NodeId::from(a.as_str()))
                .collect(),
        );
    }
    c.check(target)
        .map_err(|e| schema("tasks", e.to_string()))?;
    Ok(c)
}

pub fn run_log_value(log: &RunLog) -> Value {
    let entries: Vec<Value> = log
        .entries
        .iter()
        .map(|e| {
            json!({
                "step": e.step,
                "task": e.task,
                "action": e.action,
                "source_value": rational_str(&e.source_value),
                "target_value": rational_str(&e.target_value),
                "policy": policy_value(&e.policy),
            })
        })
        .collect();
    json!({
        "entries": entries,
        "initial_value": rational_str(&log.initial_value),
        "final_value": rational_str(&log.final_value),
    })
}

fn tuples(ts: &[Vec<Rational>]) -> Value {
    Value::Array(ts.iter().map(|t| rationals(t)).collect())
}

pub fn alignment_value(r: &AlignmentReport) -> Value {
    let tasks: Vec<Value> = r
        .tasks
        .iter()
        .map(|t| {
            let dis: Map<String, Value> = t
                .disagreements
                .iter()
                .map(|(a, rows)| (a.to_string(), tuples(rows)))
                .collect();
            json!({"invariant": t.invariant, "disagreements": dis})
        })
        .collect();
    let pairs: Vec<Value> = r
        .pairs
        .iter()
        .map(|p| json!({"from": p.from, "to": p.to, "expanding": p.expanding, "lost": p.lost}))
        .collect();
    let witness = r.witness().map(
        |(task, action, rows)| json!({"task": task, "action": action, "inputs": tuples(rows)}),
    );
    json!({
        "aligned": r.aligned,
        "optimal_value": rational_str(&r.optimal_value),
        "tasks": tasks,
        "pairs": pairs,
        "witness": witness,
    })
}

pub fn overlap_value(r: &OverlapReport) -> Value {
    let actions: Map<String, Value> = r
        .actions
        .iter()
        .map(|(a, o)| {
            (
                a.to_string(),
                json!({"invariant": o.invariant(), "shared": tuples(&o.shared), "disagree": tuples(&o.disagree)}),
            )
        })
        .collect();
    Value::Object(actions)
}

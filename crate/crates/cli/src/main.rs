//! `ccl`: command-line front end. Every subcommand prints one JSON report on
//! standard output.
//!
//! Exit codes: 0 success, 1 usage error, 2 analysis error, 3 budget exceeded.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use causal_curriculum::curriculum::{
    causal_curriculum_learning, check_causally_aligned, curriculum_learning,
    find_causal_curriculum, generator_by_name, Learner, DEFAULT_ROUND_CAP,
};
use causal_curriculum::document::{
    alignment_value, emit_curriculum, emit_policy, emit_task, overlap_value, parse_curriculum,
    parse_policy, parse_task, parse_task_unvalidated, policy_value, rational_str, run_log_value,
    to_canonical_string,
};
use causal_curriculum::editability::{
    find_max_edit, is_edit, is_soluble, list_edits, relevance_graph, EditError, EditabilityQuery,
};
use causal_curriculum::planner::{evaluate, normalized_iqm, LearnerConfig, SolverConfig};
use causal_curriculum::task::parse_rational;
use causal_curriculum::{load_fixture, FiniteTask, FixtureId, NodeId, Rational, SeparationQuery};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

const BUDGET_VAR: &str = "CAUSAL_CURRICULUM_BUDGET";
const CURRICULUM_FILE: &str = "curriculum.json";

#[derive(Parser)]
#[command(
    name = "ccl",
    version,
    about = "Editability analysis and causally aligned curricula"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a task document and list every violation.
    Validate { spec: String },
    /// d-separation of two node sets given a third.
    Dsep {
        spec: String,
        #[arg(long, value_delimiter = ',')]
        x: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        y: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        z: Vec<String>,
        /// Query the diagram with actions fed only by their inputs.
        #[arg(long)]
        intervened: bool,
    },
    /// Whether a set of states is editable with respect to some actions.
    IsEdit {
        spec: String,
        #[arg(long, value_delimiter = ',', required = true)]
        delta: Vec<String>,
        /// Defaults to every action.
        #[arg(long, value_delimiter = ',')]
        actions: Vec<String>,
    },
    /// The maximal editable set.
    MaxEdit {
        spec: String,
        #[arg(long, value_delimiter = ',')]
        actions: Vec<String>,
    },
    /// All non-empty editable sets, largest first.
    ListEdits {
        spec: String,
        #[arg(long, value_delimiter = ',')]
        actions: Vec<String>,
        #[arg(long, default_value_t = 1024)]
        limit: usize,
    },
    /// Solubility test with a witness pair on failure.
    Soluble { spec: String },
    /// Relevance graph over actions and its components in solving order.
    Relevance { spec: String },
    /// Build a causally aligned curriculum and write it to a directory.
    Curriculum {
        spec: String,
        #[arg(long, default_value = "shuffle")]
        gen: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train through a curriculum directory, or through generated source
    /// tasks action by action when no directory is given.
    Train {
        spec: String,
        #[arg(long)]
        curriculum: Option<PathBuf>,
        #[arg(long, default_value = "shuffle")]
        gen: String,
        #[arg(long, value_enum, default_value_t = Mode::Exact)]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        episodes: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_ROUND_CAP)]
        rounds: usize,
        /// Also report whether the curriculum is causally aligned.
        #[arg(long)]
        check: bool,
        /// Write the final policy here.
        #[arg(long)]
        policy_out: Option<PathBuf>,
    },
    /// Exact value of a policy file.
    Eval {
        spec: String,
        #[arg(long)]
        policy: PathBuf,
        /// Compare decision rules against this policy.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Sampled episodes for the normalized IQM.
        #[arg(long, default_value_t = 0)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Normalized interquartile mean of a list of values.
    Report {
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        iqm: Vec<String>,
        #[arg(long, allow_hyphen_values = true)]
        min: String,
        #[arg(long, allow_hyphen_values = true)]
        max: String,
    },
    /// Describe a built-in task, or print its document with --emit.
    Fixture {
        id: String,
        #[arg(long)]
        emit: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Tabular,
}

enum Failure {
    Usage(String),
    Analysis(Value),
    Budget(String),
}

type Outcome = Result<Output, Failure>;

enum Output {
    Json(Value),
    Raw(String),
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn analysis(msg: impl ToString) -> Failure {
    Failure::Analysis(json!({"error": msg.to_string()}))
}

fn from_edit(e: EditError) -> Failure {
    match e {
        EditError::NotSoluble { j, i, witness, scc } => Failure::Analysis(json!({
            "error": format!("task is not soluble: the regime of {j} reaches the rewards of {i}"),
            "soluble": false,
            "witness": {"j": witness.0, "i": witness.1},
            "scc": scc,
        })),
        other => analysis(other),
    }
}

trait IntoFailure<T> {
    fn or_fail(self) -> Result<T, Failure>;
}

impl<T> IntoFailure<T> for Result<T, causal_curriculum::TaskError> {
    fn or_fail(self) -> Result<T, Failure> {
        self.map_err(|e| {
            if e.is_budget() {
                Failure::Budget(e.to_string())
            } else {
                analysis(e)
            }
        })
    }
}

impl<T> IntoFailure<T> for Result<T, causal_curriculum::PlanError> {
    fn or_fail(self) -> Result<T, Failure> {
        self.map_err(|e| match e {
            causal_curriculum::PlanError::Edit(e) => from_edit(e),
            e if e.is_budget() => Failure::Budget(e.to_string()),
            e => analysis(e),
        })
    }
}

impl<T> IntoFailure<T> for Result<T, causal_curriculum::CurriculumError> {
    fn or_fail(self) -> Result<T, Failure> {
        self.map_err(|e| match e {
            causal_curriculum::CurriculumError::Edit(e) => from_edit(e),
            causal_curriculum::CurriculumError::Plan(causal_curriculum::PlanError::Edit(e)) => {
                from_edit(e)
            }
            e if e.is_budget() => Failure::Budget(e.to_string()),
            e => analysis(e),
        })
    }
}

impl<T> IntoFailure<T> for Result<T, EditError> {
    fn or_fail(self) -> Result<T, Failure> {
        self.map_err(from_edit)
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn budget() -> Result<Option<u64>, Failure> {
    match std::env::var(BUDGET_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .ok()
            .filter(|b: &u64| *b > 0)
            .map(Some)
            .ok_or_else(|| {
                usage(format!(
                    "{BUDGET_VAR} must be a positive integer, got `{v}`"
                ))
            }),
        Err(_) => Ok(None),
    }
}

fn fixture_id(s: &str) -> Result<FixtureId, Failure> {
    s.parse().map_err(|e: String| usage(e))
}

/// `fixture:<id>` or a path to a task document.
fn load_spec(spec: &str, validated: bool) -> Result<FiniteTask, Failure> {
    let mut task = match spec.strip_prefix("fixture:") {
        Some(id) => load_fixture(fixture_id(id)?).or_fail()?,
        None => {
            let text = read(Path::new(spec))?;
            let parsed = if validated {
                parse_task(&text)
            } else {
                parse_task_unvalidated(&text)
            };
            parsed.map_err(analysis)?
        }
    };
    if let Some(b) = budget()? {
        task.set_budget(b);
    }
    Ok(task)
}

fn node_set(names: &[String]) -> BTreeSet<NodeId> {
    names
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| NodeId::from(s.as_str()))
        .collect()
}

fn actions_or_all(task: &FiniteTask, names: &[String]) -> BTreeSet<NodeId> {
    let set = node_set(names);
    if set.is_empty() {
        task.actions().into_iter().collect()
    } else {
        set
    }
}

fn rational_arg(name: &str, s: &str) -> Result<Rational, Failure> {
    parse_rational(s).ok_or_else(|| usage(format!("--{name}: `{s}` is not a rational")))
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Validate { spec } => {
            let task = load_spec(&spec, false)?;
            let report = task.validate();
            let value = json!({"valid": report.is_valid(), "violations": report.violations, "warnings": report.warnings});
            if report.is_valid() {
                Ok(Output::Json(value))
            } else {
                Err(Failure::Analysis(value))
            }
        }
        Command::Dsep {
            spec,
            x,
            y,
            z,
            intervened,
        } => {
            let task = load_spec(&spec, true)?;
            let d = if intervened {
                task.diagram().intervened().map_err(analysis)?
            } else {
                task.diagram().clone()
            };
            let q = SeparationQuery::new(node_set(&x), node_set(&y), node_set(&z));
            let separated = d.d_separated(&q).map_err(analysis)?;
            Ok(Output::Json(
                json!({"separated": separated, "x": q.x, "y": q.y, "z": q.z}),
            ))
        }
        Command::IsEdit {
            spec,
            delta,
            actions,
        } => {
            let task = load_spec(&spec, true)?;
            let q = EditabilityQuery {
                delta: node_set(&delta),
                actions: actions_or_all(&task, &actions),
            };
            let editable = is_edit(task.diagram(), &q).or_fail()?;
            Ok(Output::Json(
                json!({"editable": editable, "delta": q.delta, "actions": q.actions}),
            ))
        }
        Command::MaxEdit { spec, actions } => {
            let task = load_spec(&spec, true)?;
            let actions = actions_or_all(&task, &actions);
            let set = find_max_edit(task.diagram(), &actions).or_fail()?;
            Ok(Output::Json(json!({"max_edit": set, "actions": actions})))
        }
        Command::ListEdits {
            spec,
            actions,
            limit,
        } => {
            let task = load_spec(&spec, true)?;
            let actions = actions_or_all(&task, &actions);
            let mut iter = list_edits(task.diagram(), &actions).or_fail()?;
            let sets: Vec<BTreeSet<NodeId>> = iter.by_ref().take(limit).collect();
            let truncated = iter.next().is_some();
            Ok(Output::Json(
                json!({"edit_sets": sets, "count": sets.len(), "truncated": truncated}),
            ))
        }
        Command::Soluble { spec } => {
            let task = load_spec(&spec, true)?;
            let s = is_soluble(task.diagram()).or_fail()?;
            let witness = s.witness.map(|(j, i)| json!({"j": j, "i": i}));
            Ok(Output::Json(
                json!({"soluble": s.soluble, "witness": witness}),
            ))
        }
        Command::Relevance { spec } => {
            let task = load_spec(&spec, true)?;
            let rg = relevance_graph(task.diagram()).or_fail()?;
            let edges: Vec<Value> = rg.edges.iter().map(|(a, b)| json!([a, b])).collect();
            Ok(Output::Json(json!({
                "actions": rg.actions,
                "edges": edges,
                "components": rg.components,
                "acyclic": rg.is_acyclic(),
            })))
        }
        Command::Curriculum {
            spec,
            gen,
            seed,
            out,
        } => {
            let task = load_spec(&spec, true)?;
            let g = generator_by_name(&gen)
                .ok_or_else(|| usage(format!("unknown generator `{gen}`")))?;
            let c = find_causal_curriculum(&task, g.as_ref(), seed).or_fail()?;
            fs::create_dir_all(&out)
                .map_err(|e| usage(format!("cannot create {}: {e}", out.display())))?;
            let path = out.join(CURRICULUM_FILE);
            fs::write(&path, emit_curriculum(&c))
                .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
            let deltas: Vec<&BTreeSet<NodeId>> = c.tasks.iter().map(|s| &s.delta).collect();
            Ok(Output::Json(json!({
                "tasks": c.len(),
                "actions": c.actions,
                "deltas": deltas,
                "path": path.display().to_string(),
            })))
        }
        Command::Train {
            spec,
            curriculum,
            gen,
            mode,
            seed,
            episodes,
            rounds,
            check,
            policy_out,
        } => {
            let task = load_spec(&spec, true)?;
            let learner = match mode {
                Mode::Exact => Learner::Exact(SolverConfig::default()),
                Mode::Tabular => {
                    let mut cfg = LearnerConfig::with_seed(seed);
                    if let Some(n) = episodes {
                        cfg.episodes = n;
                    }
                    Learner::Tabular(cfg)
                }
            };
            let mut value = json!({});
            let (policy, log) = match curriculum {
                Some(dir) => {
                    let c = parse_curriculum(&read(&dir.join(CURRICULUM_FILE))?, &task)
                        .map_err(analysis)?;
                    if check {
                        let report = check_causally_aligned(&task, &c).or_fail()?;
                        value["alignment"] = alignment_value(&report);
                    }
                    curriculum_learning(&task, &c, &learner, seed).or_fail()?
                }
                None => {
                    let g = generator_by_name(&gen)
                        .ok_or_else(|| usage(format!("unknown generator `{gen}`")))?;
                    causal_curriculum_learning(&task, g.as_ref(), &learner, seed, rounds)
                        .or_fail()?
                }
            };
            if let Some(path) = policy_out {
                fs::write(&path, emit_policy(&policy))
                    .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
            }
            value["log"] = run_log_value(&log);
            value["policy"] = policy_value(&policy);
            Ok(Output::Json(value))
        }
        Command::Eval {
            spec,
            policy,
            reference,
            samples,
            seed,
        } => {
            let task = load_spec(&spec, true)?;
            let p = parse_policy(&read(&policy)?, &task).map_err(analysis)?;
            let r = match reference {
                Some(path) => Some(parse_policy(&read(&path)?, &task).map_err(analysis)?),
                None => None,
            };
            let report = evaluate(&task, &p, r.as_ref(), samples, seed).or_fail()?;
            Ok(Output::Json(json!({
                "expected_reward": rational_str(&report.expected_reward),
                "overlap": report.overlap.as_ref().map(overlap_value),
                "normalized_iqm": report.normalized_iqm.as_ref().map(rational_str),
                "samples": report.samples,
            })))
        }
        Command::Report { iqm, min, max } => {
            let values = iqm
                .iter()
                .map(|s| rational_arg("iqm", s))
                .collect::<Result<Vec<_>, _>>()?;
            let (lo, hi) = (rational_arg("min", &min)?, rational_arg("max", &max)?);
            let v = normalized_iqm(&values, &lo, &hi).or_fail()?;
            Ok(Output::Json(
                json!({"normalized_iqm": rational_str(&v), "n": values.len()}),
            ))
        }
        Command::Fixture { id, emit } => {
            let fid = fixture_id(&id)?;
            let task = load_fixture(fid).or_fail()?;
            if emit {
                return Ok(Output::Raw(emit_task(&task)));
            }
            Ok(Output::Json(json!({
                "id": fid.to_string(),
                "nodes": task.domains().len(),
                "actions": task.actions(),
                "rewards": task.rewards(),
                "horizon": task.horizon(),
            })))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(Output::Json(v)) => {
            print!("{}", to_canonical_string(&v));
            ExitCode::SUCCESS
        }
        Ok(Output::Raw(s)) => {
            print!("{s}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            print!(
                "{}",
                to_canonical_string(&json!({"error": msg, "kind": "usage"}))
            );
            ExitCode::from(1)
        }
        Err(Failure::Analysis(mut v)) => {
            if let Some(msg) = v.get("error").and_then(Value::as_str) {
                eprintln!("error: {msg}");
            }
            v["kind"] = json!("analysis");
            print!("{}", to_canonical_string(&v));
            ExitCode::from(2)
        }
        Err(Failure::Budget(msg)) => {
            eprintln!("error: {msg}");
            print!(
                "{}",
                to_canonical_string(&json!({"error": msg, "kind": "budget"}))
            );
            ExitCode::from(3)
        }
    }
}

//! One check per acceptance criterion. Each prints a PASS/FAIL line; the test
//! fails if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::io::Write;

use causal_curriculum::curriculum::{
    causal_curriculum_learning, check_causally_aligned, curriculum_learning,
    find_causal_curriculum, Shuffle, DEFAULT_ROUND_CAP,
};
use causal_curriculum::editability::{
    find_max_edit, find_max_edit_in_order, is_edit, is_soluble, relevance_graph,
};
use causal_curriculum::fixtures::{
    example1_color_fixing_curriculum, example1_sokoban_chain, example2_overwriting_curriculum,
    example2_two_stage, mini_colored_sokoban, BOX_NEXT_TO_GOAL, PUSH, YELLOW,
};
use causal_curriculum::planner::{normalized_iqm, q_learn, solve_optimal, transfer_rules};
use causal_curriculum::task::{int, rational};
use causal_curriculum::{
    apply_edits, Edit, EditabilityQuery, FiniteTask, Learner, LearnerConfig, NodeId, NodeRole,
    Policy, Rational, SeparationQuery, SolverConfig,
};
use common::*;
use num::Zero;
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn expectation(dist: &causal_curriculum::task::Distribution) -> Rational {
    let mut total = Rational::zero();
    for (k, p) in dist {
        total += &k[0] * p;
    }
    total
}

fn all_actions(t: &FiniteTask) -> BTreeSet<NodeId> {
    t.actions().into_iter().collect()
}

fn value(t: &FiniteTask, p: &Policy) -> Rational {
    t.expected_reward(p).unwrap()
}

fn example1_numbers() -> Outcome {
    let t = example1_sokoban_chain();
    let push = Policy::deterministic(&t, |_, _| int(PUSH)).unwrap();
    let given = [(n("B1"), int(BOX_NEXT_TO_GOAL)), (n("C1"), int(YELLOW))];
    let target = expectation(
        &t.interventional_distribution(&push, &[n("Y1")], &given)
            .unwrap(),
    );
    ensure!(target == int(10), "target value {target}, expected 10");
    let src = apply_edits(
        &t,
        &[Edit::SetConstant {
            node: n("C1"),
            value: int(YELLOW),
        }],
    )
    .unwrap();
    let source = expectation(
        &src.task
            .interventional_distribution(&push, &[n("Y1")], &given[..1])
            .unwrap(),
    );
    ensure!(source == int(-5), "source value {source}, expected -5");
    Ok(format!("target {target}, source {source}"))
}

fn example2_numbers() -> Outcome {
    let t = example2_two_stage();
    let c = example2_overwriting_curriculum(&t).unwrap();
    let (_, log) =
        curriculum_learning(&t, &c, &Learner::Exact(SolverConfig::default()), 0).unwrap();
    let values: Vec<Rational> = log.entries.iter().map(|e| e.target_value.clone()).collect();
    ensure!(
        values == vec![rational(11, 20), rational(1, 2)],
        "curriculum target values {values:?}"
    );
    // Written out by hand: π1 is X1 = ¬H, X2 = 1; π2 always plays 0.
    let pi1 = Policy::deterministic(&t, |a, s| {
        if a.as_str() == "X1" {
            int(1) - &s[0]
        } else {
            int(1)
        }
    })
    .unwrap();
    let pi2 = Policy::deterministic(&t, |_, _| int(0)).unwrap();
    ensure!(
        value(&t, &pi1) == rational(11, 20),
        "π1 value {}",
        value(&t, &pi1)
    );
    ensure!(
        value(&t, &pi2) == rational(1, 2),
        "π2 value {}",
        value(&t, &pi2)
    );
    let star = value(&t, &solve_optimal(&t).unwrap());
    let best = all_deterministic_policies(&t, 64)
        .unwrap()
        .iter()
        .map(|p| value(&t, p))
        .max()
        .unwrap();
    ensure!(
        star == rational(19, 20) && best == star,
        "solver {star}, enumeration {best}"
    );
    let report = check_causally_aligned(&t, &c).unwrap();
    ensure!(
        !report.aligned && report.pairs.iter().any(|p| !p.lost.is_empty()),
        "no overwriting detected"
    );
    Ok(format!("11/20 -> 1/2 (overwriting), optimum {star}"))
}

fn editability_ground_truth() -> Outcome {
    let t = example1_sokoban_chain();
    let d = t.diagram();
    let all = all_actions(&t);
    for (delta, expected) in [
        (set(&["L1", "B1"]), true),
        (set(&["C1", "C2", "C3"]), false),
    ] {
        let got = is_edit(
            d,
            &EditabilityQuery {
                delta: delta.clone(),
                actions: all.clone(),
            },
        )
        .unwrap();
        ensure!(got == expected, "is_edit({delta:?}) = {got}");
        ensure!(
            oracle_is_edit(d, &delta, &all) == expected,
            "oracle disagrees on {delta:?}"
        );
    }
    let cases = [
        (all.clone(), set(&["B1", "L1"])),
        (
            set(&["X3"]),
            set(&["B1", "B2", "B3", "C1", "C2", "L1", "L2", "L3"]),
        ),
    ];
    for (actions, expected) in cases {
        let got = find_max_edit(d, &actions).unwrap();
        ensure!(got == expected, "find_max_edit({actions:?}) = {got:?}");
        let oracle = oracle_maximal_edits(d, &actions);
        ensure!(
            oracle == vec![expected.clone()],
            "brute force gives {oracle:?}"
        );
    }
    Ok("pinned values agree with brute-force path enumeration".into())
}

fn max_edit_uniqueness() -> Outcome {
    let mut r = rng(4);
    let cases = 1000;
    for case in 0..cases {
        let d = random_task_diagram(&mut r, 10);
        let actions: Vec<NodeId> = d.actions();
        let mut chosen: BTreeSet<NodeId> = actions
            .iter()
            .filter(|_| r.random_bool(0.5))
            .cloned()
            .collect();
        if chosen.is_empty() {
            chosen.insert(actions[r.random_range(0..actions.len())].clone());
        }
        let reference = find_max_edit(&d, &chosen).unwrap();
        let mut candidates: Vec<NodeId> = d.nodes_with_role(NodeRole::State).into_iter().collect();
        for _ in 0..3 {
            candidates.shuffle(&mut r);
            let got = find_max_edit_in_order(&d, &chosen, &candidates).unwrap();
            ensure!(
                got == reference,
                "case {case}: order {candidates:?} gives {got:?}, not {reference:?}"
            );
        }
        for s in candidates.iter().filter(|s| !reference.contains(*s)) {
            let mut bigger = reference.clone();
            bigger.insert(s.clone());
            let q = EditabilityQuery {
                delta: bigger,
                actions: chosen.clone(),
            };
            ensure!(
                !is_edit(&d, &q).unwrap(),
                "case {case}: adding {s} keeps the set editable"
            );
        }
    }
    Ok(format!("{cases} random diagrams"))
}

fn dsep_oracle() -> Outcome {
    let mut r = rng(5);
    let cases = 1000;
    let mut separated = 0;
    for case in 0..cases {
        let d = random_admg(&mut r, 8);
        let (x, y, z) = random_query(&mut r, &d);
        let got = d
            .d_separated(&SeparationQuery::new(x.clone(), y.clone(), z.clone()))
            .unwrap();
        let oracle = Mixed::from_diagram(&d).separated(&x, &y, &z);
        ensure!(
            got == oracle,
            "case {case}: {x:?} vs {y:?} given {z:?}: got {got}, oracle {oracle}"
        );
        separated += usize::from(got);
    }
    Ok(format!("{cases} queries, {separated} separated"))
}

/// Solve a source task editing `delta`, transfer its rules for `actions`
/// into the target optimum and compare values.
fn transfer_keeps_optimum(
    t: &FiniteTask,
    star: &Policy,
    best: &Rational,
    edits: &[Edit],
    actions: &BTreeSet<NodeId>,
) -> Result<(), String> {
    let src = apply_edits(t, edits).map_err(|e| e.to_string())?;
    let pi = solve_optimal(&src.task).map_err(|e| e.to_string())?;
    let moved = transfer_rules(t, star, &src.task, &pi, actions).map_err(|e| e.to_string())?;
    let v = value(t, &moved);
    ensure!(
        v == *best,
        "editing {:?} for {actions:?}: value {v}, optimum {best}",
        src.delta
    );
    Ok(())
}

fn transfer_property() -> Outcome {
    let mut r = rng(6);
    let fixtures = [
        example1_sokoban_chain(),
        example2_two_stage(),
        mini_colored_sokoban(3, 3),
    ];
    let mut checks = 0;
    for t in &fixtures {
        let star = solve_optimal(t).unwrap();
        let best = value(t, &star);
        for a in t.actions() {
            let actions = BTreeSet::from([a]);
            let delta = find_max_edit(t.diagram(), &actions).unwrap();
            if delta.is_empty() {
                continue;
            }
            for _ in 0..2 {
                transfer_keeps_optimum(
                    t,
                    &star,
                    &best,
                    &random_edits(&mut r, t, &delta),
                    &actions,
                )?;
                checks += 1;
            }
        }
    }
    let tasks = 100;
    for case in 0..tasks {
        let t = random_task(&mut r, true);
        let star = solve_optimal(&t).unwrap();
        let best = value(&t, &star);
        let mut sets = vec![all_actions(&t)];
        sets.extend(t.actions().into_iter().map(|a| BTreeSet::from([a])));
        for actions in sets {
            let delta: Vec<NodeId> = find_max_edit(t.diagram(), &actions)
                .unwrap()
                .into_iter()
                .collect();
            if delta.is_empty() {
                continue;
            }
            // Every nonempty subset of the maximal set is editable: try the
            // whole set and a few random subsets.
            let full = (1u32 << delta.len()) - 1;
            let masks = [full, r.random_range(1..=full), r.random_range(1..=full)];
            for mask in masks {
                let sub: BTreeSet<NodeId> = (0..delta.len())
                    .filter(|i| mask >> i & 1 == 1)
                    .map(|i| delta[i].clone())
                    .collect();
                transfer_keeps_optimum(&t, &star, &best, &random_edits(&mut r, &t, &sub), &actions)
                    .map_err(|e| format!("random task {case}: {e}"))?;
                checks += 1;
            }
        }
    }
    Ok(format!(
        "{} fixtures and {tasks} random tasks, {checks} transfers",
        fixtures.len()
    ))
}

fn solubility() -> Outcome {
    ensure!(
        is_soluble(example1_sokoban_chain().diagram())
            .unwrap()
            .soluble,
        "Sokoban chain not soluble"
    );
    let t2 = example2_two_stage();
    let s = is_soluble(t2.diagram()).unwrap();
    ensure!(
        !s.soluble && s.witness == Some((1, 2)),
        "two-stage task: {s:?}"
    );
    let rg = relevance_graph(t2.diagram()).unwrap();
    ensure!(
        rg.components == vec![vec![n("X1"), n("X2")]],
        "components {:?}",
        rg.components
    );
    Ok("Sokoban soluble; two-stage task has one component {X1, X2}".into())
}

fn generated_curricula_align() -> Outcome {
    let mut r = rng(8);
    let mut tasks: Vec<FiniteTask> = vec![example1_sokoban_chain(), mini_colored_sokoban(3, 3)];
    let random = 50;
    for _ in 0..random {
        tasks.push(random_task(&mut r, true));
    }
    for (i, t) in tasks.iter().enumerate() {
        let seed = r.random();
        let c = find_causal_curriculum(t, &Shuffle, seed).unwrap();
        for w in c.actions.windows(2) {
            ensure!(
                w[0].is_subset(&w[1]),
                "task {i}: action sets {:?} then {:?}",
                w[0],
                w[1]
            );
        }
        let report = check_causally_aligned(t, &c).unwrap();
        ensure!(
            report.aligned,
            "task {i} (seed {seed}): {:?}",
            report.witness()
        );
    }
    Ok(format!("2 fixtures and {random} random tasks"))
}

fn end_to_end_learning() -> Outcome {
    let t = example1_sokoban_chain();
    let best = value(&t, &solve_optimal(&t).unwrap());
    let exact = Learner::Exact(SolverConfig::default());
    let (pi, log) = causal_curriculum_learning(&t, &Shuffle, &exact, 3, DEFAULT_ROUND_CAP).unwrap();
    ensure!(
        value(&t, &pi) == best && log.final_value == best,
        "causal curriculum reached {}",
        log.final_value
    );
    let c = example1_color_fixing_curriculum(&t).unwrap();
    let (pi, log) = curriculum_learning(&t, &c, &exact, 3).unwrap();
    let never = Policy::deterministic(&t, |_, _| int(0)).unwrap();
    ensure!(
        value(&t, &never) == rational(-3, 10),
        "never-push value {}",
        value(&t, &never)
    );
    ensure!(
        value(&t, &pi) == rational(-3, 10),
        "colour fixing reached {}",
        log.final_value
    );
    Ok(format!("causal curriculum {best}, colour fixing -3/10"))
}

fn iqm() -> Outcome {
    let v: Vec<Rational> = (0..4).map(int).collect();
    let got = normalized_iqm(&v, &int(0), &int(3)).unwrap();
    ensure!(got == rational(1, 2), "iqm {got}");
    let up = normalized_iqm(&vec![int(7); 5], &int(-2), &int(7)).unwrap();
    let down = normalized_iqm(&vec![int(-2); 5], &int(-2), &int(7)).unwrap();
    ensure!(
        up == int(1) && down == int(0),
        "bounds give {up} and {down}"
    );
    Ok("1/2; upper -> 1, lower -> 0".into())
}

/// Learned argmax on every row reachable under the optimum must be one of
/// the values that attain the best conditional return at that row.
fn learner_cross_check() -> Outcome {
    let mut checked = 0;
    for t in [example1_sokoban_chain(), example2_two_stage()] {
        let star = solve_optimal(&t).unwrap();
        let cfg = LearnerConfig {
            episodes: 100_000,
            ..LearnerConfig::with_seed(11)
        };
        let learned = q_learn(&t, &cfg, &Policy::uniform(&t)).unwrap();
        let reach = causal_curriculum::planner::reachable_inputs(&t, &star).unwrap();
        for a in t.actions() {
            let rule = star.rule(&a).unwrap();
            for tuple in &reach[&a] {
                let row = rule.row_index(tuple).unwrap();
                let values = row_action_values(&t, &star, &a, row);
                let top = values.iter().flatten().max().unwrap();
                let choice = learned.rule(&a).unwrap().argmax(row);
                ensure!(
                    values[choice].as_ref() == Some(top),
                    "{a} at {tuple:?}: learned {choice}, values {values:?}"
                );
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} reachable rows"))
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("example 1 values", example1_numbers),
        ("example 2 values and overwriting", example2_numbers),
        ("editability ground truth", editability_ground_truth),
        (
            "maximal edit set is unique and maximal",
            max_edit_uniqueness,
        ),
        ("d-separation matches path enumeration", dsep_oracle),
        (
            "transferred rules keep the optimal value",
            transfer_property,
        ),
        ("solubility", solubility),
        ("generated curricula are aligned", generated_curricula_align),
        ("end-to-end learning", end_to_end_learning),
        ("normalized IQM", iqm),
        ("tabular learner matches the solver", learner_cross_check),
    ];
    let outcomes: Vec<Outcome> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria.iter().map(|(_, f)| s.spawn(f)).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err("panicked".into())))
            .collect()
    });
    // Written to the process stdout directly so the lines survive output
    // capture and show up in a plain `cargo test` log.
    let mut out = std::io::stdout().lock();
    let mut failed = 0;
    for (i, ((name, _), outcome)) in criteria.iter().zip(&outcomes).enumerate() {
        match outcome {
            Ok(detail) => writeln!(out, "criterion {:>2} PASS  {name}: {detail}", i + 1).unwrap(),
            Err(why) => {
                failed += 1;
                writeln!(out, "criterion {:>2} FAIL  {name}: {why}", i + 1).unwrap();
            }
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}

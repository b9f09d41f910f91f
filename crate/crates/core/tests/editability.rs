mod common;

use std::collections::BTreeSet;

use causal_curriculum::curriculum::misaligned_fraction;
use causal_curriculum::editability::{
    expanded_action_set, find_edit, find_max_edit, is_edit, is_soluble, list_edits,
    relevance_graph, soluble_order,
};
use causal_curriculum::fixtures::{example1_sokoban_chain, example2_two_stage, mini_button_maze};
use causal_curriculum::task::{int, rational};
use causal_curriculum::{
    apply_edits, CausalDiagram, Edit, EditError, EditabilityQuery, NodeId, NodeRole,
};
use common::*;
use proptest::prelude::*;

fn edit(d: &CausalDiagram, delta: &[&str], actions: &[&str]) -> bool {
    is_edit(
        d,
        &EditabilityQuery {
            delta: set(delta),
            actions: set(actions),
        },
    )
    .unwrap()
}

#[test]
fn sokoban_indicator_separations() {
    let t = example1_sokoban_chain();
    let g = t.diagram().intervened().unwrap();
    let z = set(&["X1", "L1", "B1", "C1"]);
    let y = set(&["Y1", "Y2", "Y3"]);
    for (targets, expected) in [
        (set(&["L1", "B1"]), true),
        (set(&["C1", "C2", "C3"]), false),
    ] {
        let (aug, tau) = g.augment_edit_indicators(&targets).unwrap();
        let q = causal_curriculum::SeparationQuery::new([tau], y.clone(), z.clone());
        assert_eq!(aug.d_separated(&q).unwrap(), expected, "{targets:?}");
    }
}

#[test]
fn two_stage_editability() {
    let t = example2_two_stage();
    let d = t.diagram();
    assert!(edit(d, &["H"], &["X1"]));
    assert!(!edit(d, &["H"], &["X2"]));
    assert_eq!(find_max_edit(d, &set(&["X1"])).unwrap(), set(&["H"]));
    assert_eq!(
        list_edits(d, &set(&["X1"])).unwrap().collect::<Vec<_>>(),
        vec![set(&["H"])]
    );
    // Z is not editable for X2 by the separation criterion: the indicator
    // reaches Y2 through Z <- X1 <- H -> Y2 once Z is conditioned on.
    assert!(!edit(d, &["Z"], &["X2"]));
    assert!(!oracle_is_edit(d, &set(&["Z"]), &set(&["X2"])));
    assert_eq!(find_max_edit(d, &set(&["X2"])).unwrap(), BTreeSet::new());
    assert_eq!(
        oracle_maximal_edits(d, &set(&["X2"])),
        vec![BTreeSet::new()]
    );
    assert_eq!(
        find_edit(d, &set(&["X2"]), Some(&set(&["H", "Z"]))).unwrap(),
        BTreeSet::new()
    );
}

#[test]
fn find_edit_respects_the_pool() {
    let t = example1_sokoban_chain();
    let d = t.diagram();
    let all = set(&["X1", "X2", "X3"]);
    assert_eq!(
        find_edit(d, &all, Some(&set(&["C1", "L1"]))).unwrap(),
        set(&["L1"])
    );
    assert_eq!(
        find_edit(d, &all, Some(&BTreeSet::new())).unwrap(),
        BTreeSet::new()
    );
    assert_eq!(find_edit(d, &all, None).unwrap(), set(&["B1", "L1"]));
}

#[test]
fn list_edits_enumerates_subsets_by_descending_mask() {
    let t = example1_sokoban_chain();
    let got: Vec<_> = list_edits(t.diagram(), &set(&["X1", "X2", "X3"]))
        .unwrap()
        .collect();
    assert_eq!(got, vec![set(&["B1", "L1"]), set(&["B1"]), set(&["L1"])]);
    let wide: Vec<_> = list_edits(t.diagram(), &set(&["X3"])).unwrap().collect();
    assert_eq!(wide.len(), (1 << 8) - 1);
    assert_eq!(wide.iter().collect::<BTreeSet<_>>().len(), wide.len());
    for s in &wide {
        assert!(is_edit(
            t.diagram(),
            &EditabilityQuery {
                delta: s.clone(),
                actions: set(&["X3"])
            }
        )
        .unwrap());
    }
}

#[test]
fn degenerate_queries_are_errors() {
    let t = example1_sokoban_chain();
    let d = t.diagram();
    let empty = EditabilityQuery {
        delta: BTreeSet::new(),
        actions: set(&["X1"]),
    };
    assert_eq!(is_edit(d, &empty), Err(EditError::EmptyDelta));
    let no_actions = EditabilityQuery {
        delta: set(&["L1"]),
        actions: BTreeSet::new(),
    };
    assert_eq!(is_edit(d, &no_actions), Err(EditError::EmptyActions));
    let reward = EditabilityQuery {
        delta: set(&["Y1"]),
        actions: set(&["X1"]),
    };
    assert!(matches!(
        is_edit(d, &reward),
        Err(EditError::NotEditable { .. })
    ));
    let not_action = EditabilityQuery {
        delta: set(&["L1"]),
        actions: set(&["L2"]),
    };
    assert!(matches!(
        is_edit(d, &not_action),
        Err(EditError::NotAnAction(_))
    ));
}

#[test]
fn relevance_graphs_and_orders() {
    let t = example1_sokoban_chain();
    let rg = relevance_graph(t.diagram()).unwrap();
    let edges: BTreeSet<(NodeId, NodeId)> = [("X3", "X2"), ("X3", "X1"), ("X2", "X1")]
        .iter()
        .map(|(a, b)| (n(a), n(b)))
        .collect();
    assert_eq!(rg.edges, edges);
    assert!(rg.is_acyclic());
    let order = soluble_order(t.diagram()).unwrap();
    assert_eq!(order.as_slice(), &[n("X3"), n("X2"), n("X1")]);
    assert_eq!(
        expanded_action_set(&order, &set(&["X1"])).unwrap(),
        set(&["X1", "X2", "X3"])
    );
    assert_eq!(
        expanded_action_set(&order, &set(&["X3"])).unwrap(),
        set(&["X3"])
    );

    let t2 = example2_two_stage();
    let rg = relevance_graph(t2.diagram()).unwrap();
    assert_eq!(
        rg.edges,
        [("X1", "X2"), ("X2", "X1")]
            .iter()
            .map(|(a, b)| (n(a), n(b)))
            .collect()
    );
    assert!(matches!(
        soluble_order(t2.diagram()),
        Err(EditError::NotSoluble { .. })
    ));

    let maze = mini_button_maze(3, 3);
    assert!(!is_soluble(maze.diagram()).unwrap().soluble);
}

#[test]
fn single_action_tasks_are_soluble() {
    let mut d = CausalDiagram::new();
    d.add_node("S", NodeRole::State).unwrap();
    d.add_node("X", NodeRole::Action).unwrap();
    d.add_node("Y", NodeRole::Reward).unwrap();
    d.add_edge("S", "X").unwrap();
    d.add_edge("X", "Y").unwrap();
    d.set_inputs("X", ["S"]).unwrap();
    assert!(is_soluble(&d).unwrap().soluble);
    assert!(relevance_graph(&d).unwrap().edges.is_empty());
    assert_eq!(soluble_order(&d).unwrap().as_slice(), &[n("X")]);
}

/// Solubility decided by regime tests must agree with the relevance graph
/// having no cycles.
#[test]
fn solubility_agrees_with_relevance_cycles() {
    let mut r = rng(31);
    for _ in 0..300 {
        let d = random_task_diagram(&mut r, 10);
        let direct = is_soluble(&d).unwrap().soluble;
        let rg = relevance_graph(&d).unwrap();
        assert_eq!(direct, rg.is_acyclic(), "{d:?}");
        assert_eq!(direct, soluble_order(&d).is_ok());
    }
}

#[test]
fn misaligned_fraction_of_sokoban_singletons() {
    let t = example1_sokoban_chain();
    let all: BTreeSet<NodeId> = t.actions().into_iter().collect();
    let names = ["L1", "B1", "C1", "L2", "B2", "C2", "L3", "B3"];
    let candidates: Vec<_> = names
        .iter()
        .map(|v| {
            apply_edits(
                &t,
                &[Edit::SetConstant {
                    node: n(v),
                    value: int(0),
                }],
            )
            .unwrap()
        })
        .collect();
    let bad = names
        .iter()
        .filter(|v| !oracle_is_edit(t.diagram(), &set(&[v]), &all))
        .count();
    assert_eq!(bad, 6);
    assert_eq!(
        misaligned_fraction(&t, &candidates).unwrap(),
        rational(6, 8)
    );
    assert_eq!(misaligned_fraction(&t, &[]).unwrap(), int(0));
    let good = apply_edits(
        &t,
        &[
            Edit::SetConstant {
                node: n("L1"),
                value: int(0),
            },
            Edit::SetConstant {
                node: n("B1"),
                value: int(1),
            },
        ],
    )
    .unwrap();
    assert_eq!(
        misaligned_fraction(&t, &[good.clone(), good]).unwrap(),
        int(0)
    );
}

#[test]
fn editability_matches_brute_force_on_random_diagrams() {
    let mut r = rng(32);
    for _ in 0..150 {
        let d = random_task_diagram(&mut r, 10);
        for a in d.actions() {
            let actions = BTreeSet::from([a]);
            let max = find_max_edit(&d, &actions).unwrap();
            assert_eq!(oracle_maximal_edits(&d, &actions), vec![max]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    /// In a soluble task, a set editable for one action stays editable for
    /// every action that must be solved before it (a relevance-graph
    /// ancestor).
    #[test]
    fn editability_extends_to_earlier_solved_actions(seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = random_task_diagram(&mut r, 10);
        prop_assume!(is_soluble(&d).unwrap().soluble);
        let rg = relevance_graph(&d).unwrap();
        for a in d.actions() {
            let delta = find_max_edit(&d, &BTreeSet::from([a.clone()])).unwrap();
            if delta.is_empty() {
                continue;
            }
            let mut before = BTreeSet::from([a.clone()]);
            loop {
                let grown: BTreeSet<NodeId> =
                    rg.edges.iter().filter(|(_, to)| before.contains(to)).map(|(from, _)| from.clone()).collect();
                let size = before.len();
                before.extend(grown);
                if before.len() == size {
                    break;
                }
            }
            for earlier in &before {
                let q = EditabilityQuery { delta: delta.clone(), actions: BTreeSet::from([earlier.clone()]) };
                prop_assert!(is_edit(&d, &q).unwrap(), "{:?} for {} but not {}", delta, a, earlier);
            }
        }
    }

    #[test]
    fn subsets_of_editable_sets_are_editable(seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = random_task_diagram(&mut r, 10);
        let actions: BTreeSet<NodeId> = d.actions().into_iter().collect();
        let listed: Vec<_> = list_edits(&d, &actions).unwrap().collect();
        let k = find_max_edit(&d, &actions).unwrap().len();
        prop_assert_eq!(listed.len(), (1usize << k) - 1);
        for s in listed {
            let q = EditabilityQuery { delta: s, actions: actions.clone() };
            prop_assert!(is_edit(&d, &q).unwrap());
        }
    }
}

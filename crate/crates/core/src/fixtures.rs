//! Built-in tasks: the three-step colored Sokoban chain, the two-stage
//! overwriting example, and small grid versions of Colored Sokoban and
//! Button Maze.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num::Zero;

use crate::curriculum::Curriculum;
use crate::graph::NodeId;
use crate::task::{
    apply_edits, int, rational, Edit, ExogenousVar, FiniteDomain, FiniteTask, Rational,
    StructuralFunction, TaskError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureId {
    Example1SokobanChain,
    Example2TwoStage,
    MiniColoredSokoban { grid: usize, horizon: usize },
    MiniButtonMaze { grid: usize, horizon: usize },
}

impl FromStr for FixtureId {
    type Err = String;

    /// Accepts `example1`, `example2` (or their long names) and
    /// `mini_colored_sokoban:<grid>:<horizon>` / `mini_button_maze:<grid>:<horizon>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let dims = |rest: &[&str]| -> Result<(usize, usize), String> {
            match rest {
                [g, h] => Ok((
                    g.parse().map_err(|_| format!("bad grid size `{g}`"))?,
                    h.parse().map_err(|_| format!("bad horizon `{h}`"))?,
                )),
                _ => Err(format!("fixture `{s}` needs <grid>:<horizon>")),
            }
        };
        match parts[0] {
            "example1" | "example1_sokoban_chain" if parts.len() == 1 => {
                Ok(FixtureId::Example1SokobanChain)
            }
            "example2" | "example2_two_stage" if parts.len() == 1 => {
                Ok(FixtureId::Example2TwoStage)
            }
            "mini_colored_sokoban" => {
                let (grid, horizon) = dims(&parts[1..])?;
                Ok(FixtureId::MiniColoredSokoban { grid, horizon })
            }
            "mini_button_maze" => {
                let (grid, horizon) = dims(&parts[1..])?;
                Ok(FixtureId::MiniButtonMaze { grid, horizon })
            }
            _ => Err(format!("unknown fixture `{s}`")),
        }
    }
}

impl fmt::Display for FixtureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FixtureId::Example1SokobanChain => f.write_str("example1_sokoban_chain"),
            FixtureId::Example2TwoStage => f.write_str("example2_two_stage"),
            FixtureId::MiniColoredSokoban { grid, horizon } => {
                write!(f, "mini_colored_sokoban:{grid}:{horizon}")
            }
            FixtureId::MiniButtonMaze { grid, horizon } => {
                write!(f, "mini_button_maze:{grid}:{horizon}")
            }
        }
    }
}

pub const MAX_GRID: usize = 6;
pub const MAX_HORIZON: usize = 8;

pub fn load_fixture(id: FixtureId) -> Result<FiniteTask, TaskError> {
    let task = match id {
        FixtureId::Example1SokobanChain => example1_sokoban_chain(),
        FixtureId::Example2TwoStage => example2_two_stage(),
        FixtureId::MiniColoredSokoban { grid, horizon } => {
            check_grid(grid, horizon)?;
            mini_colored_sokoban(grid, horizon)
        }
        FixtureId::MiniButtonMaze { grid, horizon } => {
            check_grid(grid, horizon)?;
            mini_button_maze(grid, horizon)
        }
    };
    task.engine()?;
    Ok(task)
}

fn check_grid(grid: usize, horizon: usize) -> Result<(), TaskError> {
    if grid < 2 || horizon == 0 {
        return Err(TaskError::Invalid(format!(
            "grid {grid} with horizon {horizon} is degenerate"
        )));
    }
    if grid > MAX_GRID || horizon > MAX_HORIZON {
        return Err(TaskError::TooLarge(format!(
            "grid {grid} with horizon {horizon} (limits are {MAX_GRID} and {MAX_HORIZON})"
        )));
    }
    Ok(())
}

fn id(s: impl Into<String>) -> NodeId {
    NodeId::new(s)
}

fn is(v: &Rational, k: i64) -> bool {
    *v == int(k)
}

/// Box positions in the chain version of Colored Sokoban.
pub const BOX_FAR: i64 = 0;
pub const BOX_NEXT_TO_GOAL: i64 = 1;
pub const BOX_IN_GOAL: i64 = 2;
pub const MOVE: i64 = 0;
pub const PUSH: i64 = 1;
pub const YELLOW: i64 = 0;
pub const BLUE: i64 = 1;

/// Three-step Colored Sokoban reduced to a chain.
///
/// `B_i` is the box position (far, next to goal, in goal), `L_i` a two-valued
/// agent location that flips on moves, `C_i = U_i` the box color with
/// `P(U_i = 1) = 3/4`, and `X_i` is move (0) or push (1). Pushing advances the
/// box; pushing it into the goal pays 10 if `U_i = 0` and -10 otherwise, every
/// other step costs 1/10.
pub fn example1_sokoban_chain() -> FiniteTask {
    let steps = 3;
    let loc = FiniteDomain::range(2);
    let pos = FiniteDomain::range(3);
    let bin = FiniteDomain::binary();
    let reward = FiniteDomain::new(vec![int(-10), rational(-1, 10), int(10)]);
    let mut b = FiniteTask::builder();
    b.exogenous(ExogenousVar::uniform("U_L1", loc.clone()));
    b.exogenous(ExogenousVar::uniform("U_B1", FiniteDomain::range(2)));
    b.function(StructuralFunction::expr("L1", &["U_L1"], "U_L1").expect("static expression"));
    b.function(StructuralFunction::expr("B1", &["U_B1"], "U_B1").expect("static expression"));
    for i in 1..=steps {
        let (l, bx, c, x, y, u) = (
            format!("L{i}"),
            format!("B{i}"),
            format!("C{i}"),
            format!("X{i}"),
            format!("Y{i}"),
            format!("U{i}"),
        );
        b.state(l.as_str(), loc.clone());
        b.state(bx.as_str(), pos.clone());
        b.state(c.as_str(), bin.clone());
        b.exogenous(ExogenousVar::bernoulli(u.as_str(), rational(3, 4)));
        b.function(
            StructuralFunction::expr(c.as_str(), &[u.as_str()], &u).expect("static expression"),
        );
        b.action(
            x.as_str(),
            bin.clone(),
            [l.as_str(), bx.as_str(), c.as_str()],
        );
        b.reward(y.as_str(), reward.clone());
        b.function(StructuralFunction::tabulate(
            y.as_str(),
            vec![
                (id(&bx), pos.clone()),
                (id(&x), bin.clone()),
                (id(&u), bin.clone()),
            ],
            |a| {
                if is(&a[0], BOX_NEXT_TO_GOAL) && is(&a[1], PUSH) {
                    if a[2].is_zero() {
                        int(10)
                    } else {
                        int(-10)
                    }
                } else {
                    rational(-1, 10)
                }
            },
        ));
        if i < steps {
            b.function(StructuralFunction::tabulate(
                format!("L{}", i + 1),
                vec![(id(&l), loc.clone()), (id(&x), bin.clone())],
                |a| {
                    if is(&a[1], PUSH) {
                        int(1)
                    } else {
                        int(1) - &a[0]
                    }
                },
            ));
            b.function(StructuralFunction::tabulate(
                format!("B{}", i + 1),
                vec![(id(&bx), pos.clone()), (id(&x), bin.clone())],
                |a| {
                    if is(&a[1], PUSH) && !is(&a[0], BOX_IN_GOAL) {
                        &a[0] + int(1)
                    } else {
                        a[0].clone()
                    }
                },
            ));
        }
    }
    b.build()
}

/// Two-stage task where training on two individually reasonable source tasks
/// in sequence overwrites a good rule:
/// `H = U_H`, `Z = ¬X1 ⊕ U_Z`, `Y1 = 0.5·(H ⊕ X1)`, `Y2 = (¬H ⊕ X2) ∧ Z`,
/// `P(U_H = 1) = 1/10`, `P(U_Z = 1) = 1/2`; `X1` sees `H`, `X2` sees `Z`.
pub fn example2_two_stage() -> FiniteTask {
    let bin = FiniteDomain::binary();
    let mut b = FiniteTask::builder();
    b.exogenous(ExogenousVar::bernoulli("U_H", rational(1, 10)));
    b.exogenous(ExogenousVar::bernoulli("U_Z", rational(1, 2)));
    b.state("H", bin.clone());
    b.state("Z", bin.clone());
    b.action("X1", bin.clone(), ["H"]);
    b.action("X2", bin.clone(), ["Z"]);
    b.reward("Y1", FiniteDomain::new(vec![int(0), rational(1, 2)]));
    b.reward("Y2", bin);
    for f in [
        StructuralFunction::expr("H", &["U_H"], "U_H"),
        StructuralFunction::expr("Z", &["X1", "U_Z"], "¬X1 ⊕ U_Z"),
        StructuralFunction::expr("Y1", &["H", "X1"], "0.5*(H ⊕ X1)"),
        StructuralFunction::expr("Y2", &["H", "X2", "Z"], "¬H ⊕ X2 ∧ Z"),
    ] {
        b.function(f.expect("static expression"));
    }
    b.build()
}

/// `[T1, T2]` for the two-stage task, declaring `{X1}` and `{X2}`: `T1`
/// raises `P(U_H = 1)` to 9/10, `T2` replaces `Z` by `¬X1`.
pub fn example2_overwriting_curriculum(target: &FiniteTask) -> Result<Curriculum, TaskError> {
    let t1 = apply_edits(
        target,
        &[Edit::ReweightExogenous {
            name: id("U_H"),
            probabilities: vec![rational(1, 10), rational(9, 10)],
        }],
    )?;
    let z = StructuralFunction::expr("Z", &["X1"], "¬X1")
        .map_err(|e| TaskError::Invalid(e.to_string()))?;
    let t2 = apply_edits(target, &[Edit::ReplaceFunction { function: z }])?;
    let mut c = Curriculum::new();
    c.push(t1, BTreeSet::from([id("X1")]));
    c.push(t2, BTreeSet::from([id("X2")]));
    Ok(c)
}

/// Two source tasks for the Sokoban chain that fix every box color, first to
/// yellow and then to blue, each declaring all actions.
pub fn example1_color_fixing_curriculum(target: &FiniteTask) -> Result<Curriculum, TaskError> {
    let actions: BTreeSet<NodeId> = target.actions().into_iter().collect();
    let colors: Vec<NodeId> = target
        .diagram()
        .nodes()
        .filter(|(v, _)| v.as_str().starts_with('C'))
        .map(|(v, _)| v.clone())
        .collect();
    let mut c = Curriculum::new();
    for color in [YELLOW, BLUE] {
        let edits: Vec<Edit> = colors
            .iter()
            .map(|v| Edit::SetConstant {
                node: v.clone(),
                value: int(color),
            })
            .collect();
        c.push(apply_edits(target, &edits)?, actions.clone());
    }
    Ok(c)
}

/// Grid moves: north, south, east, west, then push.
pub const NORTH: i64 = 0;
pub const SOUTH: i64 = 1;
pub const EAST: i64 = 2;
pub const WEST: i64 = 3;
pub const GRID_PUSH: i64 = 4;

fn step(grid: usize, cell: usize, dir: i64) -> Option<usize> {
    let (r, c) = (cell / grid, cell % grid);
    match dir {
        NORTH if r > 0 => Some(cell - grid),
        SOUTH if r + 1 < grid => Some(cell + grid),
        EAST if c + 1 < grid => Some(cell + 1),
        WEST if c > 0 => Some(cell - 1),
        _ => None,
    }
}

/// Direction from `from` to an orthogonally adjacent `to`.
fn direction(grid: usize, from: usize, to: usize) -> Option<i64> {
    [NORTH, SOUTH, EAST, WEST]
        .into_iter()
        .find(|&d| step(grid, from, d) == Some(to))
}

fn idx(v: &Rational) -> usize {
    v.to_integer().try_into().expect("cell index")
}

/// `(agent', box', box entered goal)` for one grid Sokoban step. The box is
/// stuck once it reaches the goal.
fn sokoban_step(
    grid: usize,
    goal: usize,
    agent: usize,
    boxc: usize,
    action: i64,
) -> (usize, usize, bool) {
    if action == GRID_PUSH {
        if boxc == goal {
            return (agent, boxc, false);
        }
        if let Some(d) = direction(grid, agent, boxc) {
            if let Some(next) = step(grid, boxc, d) {
                return (boxc, next, next == goal);
            }
        }
        return (agent, boxc, false);
    }
    match step(grid, agent, action) {
        Some(next) if next != boxc => (next, boxc, false),
        _ => (agent, boxc, false),
    }
}

fn point_mass(name: &str, domain: &FiniteDomain, at: usize) -> ExogenousVar {
    let probabilities = (0..domain.len())
        .map(|i| if i == at { int(1) } else { int(0) })
        .collect();
    ExogenousVar::new(name, domain.clone(), probabilities)
}

/// Colored Sokoban on a `grid × grid` board, locations as cell indices
/// (row-major, row 0 at the top). The agent starts bottom-left, the box one
/// cell diagonally inside from the top-right goal. Pushing the box into the
/// goal pays 10 if `U_i = 0` and -10 otherwise; every other step costs 1/10.
/// `C_i = U_i` with `P(U_i = 1) = 3/4`.
pub fn mini_colored_sokoban(grid: usize, horizon: usize) -> FiniteTask {
    let cells = FiniteDomain::range(grid * grid);
    let moves = FiniteDomain::range(5);
    let bin = FiniteDomain::binary();
    let reward = FiniteDomain::new(vec![int(-10), rational(-1, 10), int(10)]);
    let goal = grid - 1;
    let agent0 = (grid - 1) * grid;
    let box0 = if grid > 2 { grid + grid - 2 } else { grid };
    let mut b = FiniteTask::builder();
    b.exogenous(point_mass("U_L1", &cells, agent0));
    b.exogenous(point_mass("U_B1", &cells, box0));
    b.function(StructuralFunction::expr("L1", &["U_L1"], "U_L1").expect("static expression"));
    b.function(StructuralFunction::expr("B1", &["U_B1"], "U_B1").expect("static expression"));
    for i in 1..=horizon {
        let (l, bx, c, x, y, u) = (
            format!("L{i}"),
            format!("B{i}"),
            format!("C{i}"),
            format!("X{i}"),
            format!("Y{i}"),
            format!("U{i}"),
        );
        b.state(l.as_str(), cells.clone());
        b.state(bx.as_str(), cells.clone());
        b.state(c.as_str(), bin.clone());
        b.exogenous(ExogenousVar::bernoulli(u.as_str(), rational(3, 4)));
        b.function(
            StructuralFunction::expr(c.as_str(), &[u.as_str()], &u).expect("static expression"),
        );
        b.action(
            x.as_str(),
            moves.clone(),
            [l.as_str(), bx.as_str(), c.as_str()],
        );
        b.reward(y.as_str(), reward.clone());
        let args = vec![
            (id(&l), cells.clone()),
            (id(&bx), cells.clone()),
            (id(&x), moves.clone()),
        ];
        let mut yargs = args.clone();
        yargs.push((id(&u), bin.clone()));
        b.function(StructuralFunction::tabulate(y.as_str(), yargs, |a| {
            let action = a[2].to_integer().try_into().unwrap_or(0);
            let (_, _, scored) = sokoban_step(grid, goal, idx(&a[0]), idx(&a[1]), action);
            match (scored, a[3].is_zero()) {
                (true, true) => int(10),
                (true, false) => int(-10),
                _ => rational(-1, 10),
            }
        }));
        if i < horizon {
            b.function(StructuralFunction::tabulate(
                format!("L{}", i + 1),
                args.clone(),
                |a| {
                    let action = a[2].to_integer().try_into().unwrap_or(0);
                    int(sokoban_step(grid, goal, idx(&a[0]), idx(&a[1]), action).0 as i64)
                },
            ));
            b.function(StructuralFunction::tabulate(
                format!("B{}", i + 1),
                args,
                |a| {
                    let action = a[2].to_integer().try_into().unwrap_or(0);
                    int(sokoban_step(grid, goal, idx(&a[0]), idx(&a[1]), action).1 as i64)
                },
            ));
        }
    }
    b.build()
}

/// Button Maze on a `grid × grid` board. The agent starts bottom-left; the
/// button sits bottom-right and the goal top-right. `B_i` is the button state,
/// toggled by pushing while standing on the button. The goal color is
/// `C_i = U_i` before the button is pushed and `C_i = U_C` after, with
/// `P(U_i = 1) = 1/2` and `P(U_C = 1) = 1/5`. Stepping onto the goal pays 1 if
/// `U_C = 1` and -1 otherwise and ends the episode (later rewards are 0);
/// otherwise a step costs 1/10 if the agent did not move since the previous
/// step and 1/100 if it did.
pub fn mini_button_maze(grid: usize, horizon: usize) -> FiniteTask {
    let cells = FiniteDomain::range(grid * grid);
    let moves = FiniteDomain::range(5);
    let bin = FiniteDomain::binary();
    let reward = FiniteDomain::new(vec![
        int(-1),
        rational(-1, 10),
        rational(-1, 100),
        int(0),
        int(1),
    ]);
    let goal = grid - 1;
    let button = grid * grid - 1;
    let agent0 = (grid - 1) * grid;
    let mut b = FiniteTask::builder();
    b.exogenous(point_mass("U_L1", &cells, agent0));
    b.exogenous(point_mass("U_B1", &bin, 0));
    b.exogenous(ExogenousVar::bernoulli("U_C", rational(1, 5)));
    b.function(StructuralFunction::expr("L1", &["U_L1"], "U_L1").expect("static expression"));
    b.function(StructuralFunction::expr("B1", &["U_B1"], "U_B1").expect("static expression"));
    let walk = move |agent: usize, action: i64| -> usize {
        if agent == goal || action == GRID_PUSH {
            agent
        } else {
            step(grid, agent, action).unwrap_or(agent)
        }
    };
    for i in 1..=horizon {
        let (l, bt, c, x, y, u) = (
            format!("L{i}"),
            format!("B{i}"),
            format!("C{i}"),
            format!("X{i}"),
            format!("Y{i}"),
            format!("U{i}"),
        );
        b.state(l.as_str(), cells.clone());
        b.state(bt.as_str(), bin.clone());
        b.state(c.as_str(), bin.clone());
        b.exogenous(ExogenousVar::bernoulli(u.as_str(), rational(1, 2)));
        b.function(
            StructuralFunction::expr(
                c.as_str(),
                &[bt.as_str(), u.as_str(), "U_C"],
                &format!("if {bt} then U_C else {u}"),
            )
            .expect("static expression"),
        );
        b.action(
            x.as_str(),
            moves.clone(),
            [l.as_str(), bt.as_str(), c.as_str()],
        );
        b.reward(y.as_str(), reward.clone());
        let mut yargs = vec![
            (id(&l), cells.clone()),
            (id(&x), moves.clone()),
            (id("U_C"), bin.clone()),
        ];
        if i > 1 {
            yargs.push((id(format!("L{}", i - 1)), cells.clone()));
        }
        b.function(StructuralFunction::tabulate(y.as_str(), yargs, |a| {
            let agent = idx(&a[0]);
            let action = a[1].to_integer().try_into().unwrap_or(0);
            if agent == goal {
                int(0)
            } else if walk(agent, action) == goal {
                if a[2].is_zero() {
                    int(-1)
                } else {
                    int(1)
                }
            } else if a.len() == 4 && a[3] == a[0] {
                rational(-1, 10)
            } else {
                rational(-1, 100)
            }
        }));
        if i < horizon {
            b.function(StructuralFunction::tabulate(
                format!("L{}", i + 1),
                vec![(id(&l), cells.clone()), (id(&x), moves.clone())],
                |a| int(walk(idx(&a[0]), a[1].to_integer().try_into().unwrap_or(0)) as i64),
            ));
            b.function(StructuralFunction::tabulate(
                format!("B{}", i + 1),
                vec![
                    (id(&bt), bin.clone()),
                    (id(&l), cells.clone()),
                    (id(&x), moves.clone()),
                ],
                |a| {
                    let pressed = idx(&a[1]) == button && is(&a[2], GRID_PUSH);
                    if pressed {
                        int(1) - &a[0]
                    } else {
                        a[0].clone()
                    }
                },
            ));
        }
    }
    b.build()
}

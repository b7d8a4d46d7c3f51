//! Small reference games shared by the tests and the CLI.

use crate::model::{Branch, GameSpec, SojournLaw};

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|m| format!("{prefix}{m}")).collect()
}

fn exp1(to: usize, prob: f64) -> Branch {
    Branch {
        to,
        prob,
        law: SojournLaw::Exponential { rate: 1.0 },
    }
}

/// Two types, one state, 2×2 actions, every payoff equal to `c0`.
pub fn constant_cost(c0: f64) -> GameSpec {
    GameSpec::from_fn(
        labels("k", 2),
        labels("s", 1),
        labels("a", 2),
        labels("b", 2),
        1.0,
        vec![0.5, 0.5],
        |_, _, _, _| c0,
        |_, _, _| vec![exp1(0, 1.0)],
    )
}

/// Aumann-Maschler style payoffs: type 1 rewards `(a1,b1)`, type 2 rewards `(a2,b2)`.
fn am_cost(k: usize, a: usize, b: usize) -> f64 {
    if a == k && b == k {
        1.0
    } else {
        0.0
    }
}

const SECOND_STATE_COST: [[[f64; 2]; 2]; 2] = [[[0.6, 0.2], [0.3, 0.9]], [[0.4, 0.8], [0.7, 0.1]]];

/// Two types, one state, 2×2 actions, Exponential(1) sojourns, α = 1.
pub fn desk_one_state() -> GameSpec {
    GameSpec::from_fn(
        labels("k", 2),
        labels("s", 1),
        labels("a", 2),
        labels("b", 2),
        1.0,
        vec![0.5, 0.5],
        |k, _, a, b| 0.25 * SECOND_STATE_COST[k][a][b] + 0.75 * am_cost(k, a, b),
        |_, _, _| vec![exp1(0, 1.0)],
    )
}

const STAY: [[[f64; 2]; 2]; 2] = [[[0.7, 0.3], [0.5, 0.6]], [[0.4, 0.8], [0.6, 0.2]]];

/// The default two-type, two-state, 2×2 instance with Exponential(1)
/// sojourns and α = 1.
pub fn desk_two_state() -> GameSpec {
    GameSpec::from_fn(
        labels("k", 2),
        labels("s", 2),
        labels("a", 2),
        labels("b", 2),
        1.0,
        vec![0.5, 0.5],
        |k, i, a, b| if i == 0 { am_cost(k, a, b) } else { SECOND_STATE_COST[k][a][b] },
        |i, a, b| {
            let stay = STAY[i][a][b];
            vec![exp1(i, stay), exp1(1 - i, 1.0 - stay)]
        },
    )
}

/// Type `k` earns reward only by playing action `k`, whatever Player 2 does,
/// so revealing the type costs nothing.
pub fn revealing() -> GameSpec {
    GameSpec::from_fn(
        labels("k", 2),
        labels("s", 1),
        labels("a", 2),
        labels("b", 2),
        1.0,
        vec![0.5, 0.5],
        |k, _, a, b| if a == k { 0.8 + 0.2 * b as f64 } else { 0.0 },
        |_, _, _| vec![exp1(0, 1.0)],
    )
}

/// Keeps type `k` of `spec` only, giving a complete-information game.
pub fn single_type(spec: &GameSpec, k: usize) -> GameSpec {
    let dims = spec.dims();
    GameSpec::from_fn(
        vec![spec.types[k].clone()],
        spec.states.clone(),
        spec.actions_p1.clone(),
        spec.actions_p2.clone(),
        spec.alpha,
        vec![1.0],
        |_, i, a, b| spec.cost(k, i, a, b),
        |i, a, b| {
            debug_assert!(i < dims.states);
            spec.branches(i, a, b).to_vec()
        },
    )
}

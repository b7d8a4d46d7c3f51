//! Independent checks: exact finite-horizon evaluation of history-dependent
//! policies, the brute-force horizon value over deterministic policies,
//! best-response dynamic programs against the engines, and a
//! complete-information Shapley solver.
//!
//! Histories are flat sequences `[i0, a0, b0, i1, a1, b1, ..., i_d]`.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{posterior_update, Belief, StageMixP1};
use crate::error::{Error, Result};
use crate::lp::{solve_matrix_game, MatrixGameSolution};
use crate::model::{Assumption1Certificate, Dims, DiscountedAggregates, GameSpec};
use crate::sim::{InformedEngine, Step, UninformedEngine};
use crate::value::error_budget;

/// Default cap on brute-force payoff-matrix entries.
pub const DEFAULT_ENUMERATION_LIMIT: f64 = 1e5;
/// Default cap on `(|A||B||S|)^N` for best-response trees.
pub const DEFAULT_BR_BUDGET: f64 = 1e6;

/// Player 1's view of a history-dependent policy.
pub trait P1PolicyView: Sync {
    fn depth(&self) -> usize;
    fn prob(&self, k: usize, history: &[usize], a: usize) -> Result<f64>;
}

/// Player 2's view of a history-dependent policy.
pub trait P2PolicyView: Sync {
    fn depth(&self) -> usize;
    fn prob(&self, history: &[usize], b: usize) -> Result<f64>;
}

/// Randomised policy tabulated over histories up to `depth`. Player 2 tables
/// use type index 0 throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehavioralPolicyTable {
    pub depth: usize,
    rows: HashMap<(usize, Vec<usize>), Vec<f64>>,
}

impl BehavioralPolicyTable {
    pub fn new(depth: usize) -> Self {
        BehavioralPolicyTable {
            depth,
            rows: HashMap::new(),
        }
    }

    /// Fills every history from `i0` up to `depth` with `f(k, h)`, for `types` types.
    pub fn from_fn(
        dims: &Dims,
        i0: usize,
        depth: usize,
        types: usize,
        mut f: impl FnMut(usize, &[usize]) -> Vec<f64>,
    ) -> Self {
        let mut table = Self::new(depth);
        for h in enumerate_histories(dims, i0, depth) {
            for k in 0..types {
                let mix = f(k, &h);
                table.set(k, h.clone(), mix);
            }
        }
        table
    }

    pub fn set(&mut self, k: usize, history: Vec<usize>, mix: Vec<f64>) {
        self.rows.insert((k, history), mix);
    }

    fn row(&self, k: usize, history: &[usize]) -> Result<&[f64]> {
        self.rows
            .get(&(k, history.to_vec()))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Protocol(format!("policy table has no row for history {history:?}")))
    }
}

impl P1PolicyView for BehavioralPolicyTable {
    fn depth(&self) -> usize {
        self.depth
    }

    fn prob(&self, k: usize, history: &[usize], a: usize) -> Result<f64> {
        Ok(self.row(k, history)?[a])
    }
}

impl P2PolicyView for BehavioralPolicyTable {
    fn depth(&self) -> usize {
        self.depth
    }

    fn prob(&self, history: &[usize], b: usize) -> Result<f64> {
        Ok(self.row(0, history)?[b])
    }
}

/// One action per `(type, history)`, stored against a shared history index.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicPolicy {
    pub depth: usize,
    index: Arc<HashMap<Vec<usize>, usize>>,
    choice: Vec<usize>,
}

impl DeterministicPolicy {
    fn pick(&self, k: usize, history: &[usize]) -> Result<usize> {
        let h = self
            .index
            .get(history)
            .ok_or_else(|| Error::Protocol(format!("deterministic policy has no entry for {history:?}")))?;
        Ok(self.choice[k * self.index.len() + h])
    }
}

impl P1PolicyView for DeterministicPolicy {
    fn depth(&self) -> usize {
        self.depth
    }

    fn prob(&self, k: usize, history: &[usize], a: usize) -> Result<f64> {
        Ok(if self.pick(k, history)? == a { 1.0 } else { 0.0 })
    }
}

impl P2PolicyView for DeterministicPolicy {
    fn depth(&self) -> usize {
        self.depth
    }

    fn prob(&self, history: &[usize], b: usize) -> Result<f64> {
        Ok(if self.pick(0, history)? == b { 1.0 } else { 0.0 })
    }
}

/// All histories from `i0` with at most `depth` completed epochs, shortest first.
pub fn enumerate_histories(dims: &Dims, i0: usize, depth: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![i0]];
    let mut frontier = vec![vec![i0]];
    for _ in 0..depth {
        let mut next = Vec::new();
        for h in &frontier {
            for a in 0..dims.actions_p1 {
                for b in 0..dims.actions_p2 {
                    for j in 0..dims.states {
                        let mut g = h.clone();
                        g.extend([a, b, j]);
                        next.push(g);
                    }
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Exact `V_n(p, i, π, σ)`: `n + 1` stages, no continuation after the last.
pub fn eval_finite_horizon(
    p: &Belief,
    i: usize,
    pi: &dyn P1PolicyView,
    sigma: &dyn P2PolicyView,
    n: usize,
    agg: &DiscountedAggregates,
    spec: &GameSpec,
) -> Result<f64> {
    let available = pi.depth().min(sigma.depth());
    if available < n {
        return Err(Error::DepthExceeded { requested: n, available });
    }
    let mut h = vec![i];
    eval_node(p, &mut h, 0, n, pi, sigma, agg, spec)
}

#[allow(clippy::too_many_arguments)]
fn eval_node(
    p: &Belief,
    h: &mut Vec<usize>,
    d: usize,
    n: usize,
    pi: &dyn P1PolicyView,
    sigma: &dyn P2PolicyView,
    agg: &DiscountedAggregates,
    spec: &GameSpec,
) -> Result<f64> {
    let dims = spec.dims();
    let i = *h.last().unwrap();
    let mut mu = Vec::with_capacity(dims.types);
    for k in 0..dims.types {
        let row: Result<Vec<f64>> = (0..dims.actions_p1).map(|a| pi.prob(k, h, a)).collect();
        mu.push(row?);
    }
    let mu = StageMixP1(mu);
    let nu: Vec<f64> = (0..dims.actions_p2).map(|b| sigma.prob(h, b)).collect::<Result<_>>()?;
    let mut total = 0.0;
    for a in 0..dims.actions_p1 {
        let pa: f64 = (0..dims.types).map(|k| p.0[k] * mu.prob(k, a)).sum();
        if pa == 0.0 {
            continue;
        }
        let post = posterior_update(p, &mu, a).belief;
        for (b, &nb) in nu.iter().enumerate() {
            if nb == 0.0 {
                continue;
            }
            let stage: f64 = (0..dims.types)
                .map(|k| p.0[k] * mu.prob(k, a) * spec.cost(k, i, a, b))
                .sum::<f64>()
                * agg.m(i, a, b);
            total += nb * stage;
            if d < n {
                for j in 0..dims.states {
                    let q = agg.qhat(i, a, b, j);
                    if q == 0.0 {
                        continue;
                    }
                    h.extend([a, b, j]);
                    let child = eval_node(&post, h, d + 1, n, pi, sigma, agg, spec);
                    h.truncate(h.len() - 3);
                    total += nb * pa * q * child?;
                }
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteValue {
    pub value: f64,
    pub p1_policies: f64,
    pub p2_policies: f64,
    pub row_mix: Vec<f64>,
    pub col_mix: Vec<f64>,
}

/// Policy counts `(|A|^{K|H|}, |B|^{|H|})` for horizon `n` from one start state.
pub fn policy_counts(dims: &Dims, n: usize) -> (f64, f64) {
    let per_epoch = (dims.actions_p1 * dims.actions_p2 * dims.states) as f64;
    let histories: f64 = (0..=n).map(|d| per_epoch.powi(d as i32)).sum();
    (
        (dims.actions_p1 as f64).powf(dims.types as f64 * histories),
        (dims.actions_p2 as f64).powf(histories),
    )
}

/// `V*_n(p, i)` as the value of the matrix game between all deterministic
/// horizon-`n` policies.
pub fn brute_value(
    p: &Belief,
    i: usize,
    n: usize,
    spec: &GameSpec,
    agg: &DiscountedAggregates,
    limit: f64,
) -> Result<BruteValue> {
    let dims = spec.dims();
    let (p1_policies, p2_policies) = policy_counts(&dims, n);
    if !(p1_policies * p2_policies <= limit) {
        return Err(Error::EnumerationTooLarge {
            p1_policies,
            p2_policies,
            limit,
        });
    }
    let histories = enumerate_histories(&dims, i, n);
    let index: Arc<HashMap<Vec<usize>, usize>> =
        Arc::new(histories.iter().cloned().enumerate().map(|(n, h)| (h, n)).collect());
    let decode = |code: usize, slots: usize, radix: usize| -> Vec<usize> {
        let mut rest = code;
        (0..slots)
            .map(|_| {
                let c = rest % radix;
                rest /= radix;
                c
            })
            .collect()
    };
    let p1: Vec<DeterministicPolicy> = (0..p1_policies as usize)
        .map(|code| DeterministicPolicy {
            depth: n,
            index: index.clone(),
            choice: decode(code, dims.types * histories.len(), dims.actions_p1),
        })
        .collect();
    let p2: Vec<DeterministicPolicy> = (0..p2_policies as usize)
        .map(|code| DeterministicPolicy {
            depth: n,
            index: index.clone(),
            choice: decode(code, histories.len(), dims.actions_p2),
        })
        .collect();
    let matrix: Vec<Vec<f64>> = p1
        .par_iter()
        .map(|row| {
            p2.iter()
                .map(|col| eval_finite_horizon(p, i, row, col, n, agg, spec))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let game = solve_matrix_game(&matrix)?;
    Ok(BruteValue {
        value: game.value,
        p1_policies,
        p2_policies,
        row_mix: game.row_mix,
        col_mix: game.col_mix,
    })
}

/// Truncated best-response value with its a-priori tail: the untruncated
/// value lies in `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub horizon: usize,
    pub nodes: usize,
}

fn check_budget(dims: &Dims, n: usize, budget: f64) -> Result<()> {
    let nodes = ((dims.actions_p1 * dims.actions_p2 * dims.states) as f64).powi(n as i32);
    if nodes > budget {
        return Err(Error::BudgetExceeded { nodes, budget });
    }
    Ok(())
}

/// Player 2's best response to an informed engine started at `p`; the
/// bracket contains `inf_σ V(p, i, π, σ)`.
#[allow(clippy::too_many_arguments)]
pub fn best_response_p2<E: InformedEngine>(
    engine: &E,
    p: &Belief,
    i: usize,
    n: usize,
    spec: &GameSpec,
    agg: &DiscountedAggregates,
    cert: &Assumption1Certificate,
    budget: f64,
) -> Result<Bracket> {
    let dims = spec.dims();
    check_budget(&dims, n, budget)?;
    let mut memo = HashMap::new();
    let lo = br2_node(engine, &p.0, i, 0, n, spec, agg, &mut memo)?;
    Ok(Bracket {
        lo,
        hi: lo + error_budget(n, cert, spec.cstar(), spec.alpha),
        horizon: n,
        nodes: memo.len(),
    })
}

type Br2Key = (usize, usize, Vec<u64>, Vec<u64>);

/// Minimal expected cost from a node carrying unnormalised type weights.
#[allow(clippy::too_many_arguments)]
fn br2_node<E: InformedEngine>(
    engine: &E,
    weights: &[f64],
    i: usize,
    d: usize,
    n: usize,
    spec: &GameSpec,
    agg: &DiscountedAggregates,
    memo: &mut HashMap<Br2Key, f64>,
) -> Result<f64> {
    let key = (d, i, engine.memo_key(), weights.iter().map(|w| w.to_bits()).collect());
    if let Some(v) = memo.get(&key) {
        return Ok(*v);
    }
    let dims = spec.dims();
    let mut decided = engine.clone();
    let mu = decided.decide(i)?;
    let mut best = f64::INFINITY;
    for b in 0..dims.actions_p2 {
        let mut v = 0.0;
        for a in 0..dims.actions_p1 {
            let child: Vec<f64> = (0..dims.types).map(|k| weights[k] * mu.prob(k, a)).collect();
            if child.iter().all(|&w| w == 0.0) {
                continue;
            }
            v += (0..dims.types).map(|k| child[k] * spec.cost(k, i, a, b)).sum::<f64>() * agg.m(i, a, b);
            if d < n {
                for j in 0..dims.states {
                    let q = agg.qhat(i, a, b, j);
                    if q == 0.0 {
                        continue;
                    }
                    let mut next = decided.clone();
                    next.observe(&Step { state: i, a, b, next: j })?;
                    v += q * br2_node(&next, &child, j, d + 1, n, spec, agg, memo)?;
                }
            }
        }
        best = best.min(v);
    }
    memo.insert(key, best);
    Ok(best)
}

/// Player 1's best response to an uninformed engine; the bracket contains
/// `sup_π V(p, i, π, σ)`.
#[allow(clippy::too_many_arguments)]
pub fn best_response_p1<E: UninformedEngine>(
    engine: &E,
    p: &Belief,
    i: usize,
    n: usize,
    spec: &GameSpec,
    agg: &DiscountedAggregates,
    cert: &Assumption1Certificate,
    budget: f64,
) -> Result<Bracket> {
    let dims = spec.dims();
    check_budget(&dims, n, budget)?;
    let mut memo = HashMap::new();
    let mut lo = 0.0;
    for k in 0..dims.types {
        if p.0[k] > 0.0 {
            lo += p.0[k] * br1_node(engine, k, i, 0, n, spec, agg, &mut memo)?;
        }
    }
    Ok(Bracket {
        lo,
        hi: lo + error_budget(n, cert, spec.cstar(), spec.alpha),
        horizon: n,
        nodes: memo.len(),
    })
}

#[allow(clippy::too_many_arguments)]
fn br1_node<E: UninformedEngine>(
    engine: &E,
    k: usize,
    i: usize,
    d: usize,
    n: usize,
    spec: &GameSpec,
    agg: &DiscountedAggregates,
    memo: &mut HashMap<(usize, usize, usize, Vec<u64>), f64>,
) -> Result<f64> {
    let key = (k, d, i, engine.memo_key());
    if let Some(v) = memo.get(&key) {
        return Ok(*v);
    }
    let dims = spec.dims();
    let mut decided = engine.clone();
    let nu = decided.decide(i)?;
    let mut best = f64::NEG_INFINITY;
    for a in 0..dims.actions_p1 {
        let mut v = 0.0;
        for b in 0..dims.actions_p2 {
            let nb = nu.0[b];
            if nb == 0.0 {
                continue;
            }
            let mut inner = spec.cost(k, i, a, b) * agg.m(i, a, b);
            if d < n {
                for j in 0..dims.states {
                    let q = agg.qhat(i, a, b, j);
                    if q == 0.0 {
                        continue;
                    }
                    let mut next = decided.clone();
                    next.observe(&Step { state: i, a, b, next: j })?;
                    inner += q * br1_node(&next, k, j, d + 1, n, spec, agg, memo)?;
                }
            }
            v += nb * inner;
        }
        best = best.max(v);
    }
    memo.insert(key, best);
    Ok(best)
}

/// Complete-information stage game of type `k` at state `i` against the
/// continuation values `cont`.
pub fn shapley_stage(
    spec: &GameSpec,
    agg: &DiscountedAggregates,
    k: usize,
    i: usize,
    cont: &[f64],
) -> Result<MatrixGameSolution> {
    let dims = spec.dims();
    let matrix: Vec<Vec<f64>> = (0..dims.actions_p1)
        .map(|a| {
            (0..dims.actions_p2)
                .map(|b| {
                    spec.cost(k, i, a, b) * agg.m(i, a, b)
                        + (0..dims.states).map(|j| agg.qhat(i, a, b, j) * cont[j]).sum::<f64>()
                })
                .collect()
        })
        .collect();
    solve_matrix_game(&matrix)
}

/// Complete-information horizon value `V_n` of type `k` by backward induction.
pub fn shapley_finite(spec: &GameSpec, agg: &DiscountedAggregates, k: usize, n: usize) -> Result<Vec<f64>> {
    let states = spec.dims().states;
    let mut v = vec![0.0; states];
    for _ in 0..=n {
        v = (0..states)
            .map(|i| shapley_stage(spec, agg, k, i, &v).map(|g| g.value))
            .collect::<Result<_>>()?;
    }
    Ok(v)
}

/// Complete-information discounted value of type `k`, iterated until the
/// contraction bound certifies accuracy `tol`.
pub fn shapley_value(spec: &GameSpec, agg: &DiscountedAggregates, k: usize, tol: f64) -> Result<Vec<f64>> {
    let states = spec.dims().states;
    let rho = agg.beta_bound;
    if rho >= 1.0 {
        return Err(Error::CertificationFailed);
    }
    let mut v = vec![0.0; states];
    for _ in 0..100_000 {
        let next: Vec<f64> = (0..states)
            .map(|i| shapley_stage(spec, agg, k, i, &v).map(|g| g.value))
            .collect::<Result<_>>()?;
        let change = next.iter().zip(&v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        v = next;
        if change * rho / (1.0 - rho) <= tol {
            return Ok(v);
        }
    }
    Err(Error::IterationBudgetExceeded(100_000))
}

//! Concave cut envelopes on the belief simplex, the one-stage LP backup,
//! and value iteration from the zero function.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{conditional_from, posterior_update, simplex_grid, Belief, JointMix, StageMixP1, StageMixP2};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpSolution, LpStatus, Relation};
use crate::model::{Assumption1Certificate, DiscountedAggregates, GameSpec};

/// Cuts closer than this in max-norm are merged.
pub const CUT_MERGE_TOL: f64 = 1e-12;

/// Per-state concave function `V(p, j) = min_g ⟨g, p⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcaveEnvelope {
    types: usize,
    cuts: Vec<Vec<Vec<f64>>>,
}

impl ConcaveEnvelope {
    /// The zero function: one zero cut per state.
    pub fn zero(types: usize, states: usize) -> Self {
        ConcaveEnvelope {
            types,
            cuts: vec![vec![vec![0.0; types]]; states],
        }
    }

    pub fn from_cuts(types: usize, cuts: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        for (j, list) in cuts.iter().enumerate() {
            if list.is_empty() {
                return Err(Error::Document(format!("state {j} has no cuts")));
            }
            if list.iter().any(|g| g.len() != types || g.iter().any(|x| !x.is_finite())) {
                return Err(Error::Document(format!("state {j} has a malformed cut")));
            }
        }
        Ok(ConcaveEnvelope { types, cuts })
    }

    pub fn types(&self) -> usize {
        self.types
    }

    pub fn states(&self) -> usize {
        self.cuts.len()
    }

    pub fn cuts(&self, j: usize) -> &[Vec<f64>] {
        &self.cuts[j]
    }

    pub fn total_cuts(&self) -> usize {
        self.cuts.iter().map(Vec::len).sum()
    }

    pub fn eval(&self, p: &Belief, j: usize) -> f64 {
        envelope_eval(self, p, j)
    }

    /// Adds `g` to state `j` unless an equal cut is already present.
    pub fn push_cut(&mut self, j: usize, g: Vec<f64>) -> bool {
        let dup = self.cuts[j]
            .iter()
            .any(|h| h.iter().zip(&g).all(|(x, y)| (x - y).abs() <= CUT_MERGE_TOL));
        if !dup {
            self.cuts[j].push(g);
        }
        !dup
    }

    /// Drops cuts that are never the strict minimum anywhere on the simplex.
    pub fn prune_dominated(&mut self) -> Result<usize> {
        let mut removed = 0;
        for j in 0..self.states() {
            let mut n = 0;
            while n < self.cuts[j].len() && self.cuts[j].len() > 1 {
                if cut_is_redundant(&self.cuts[j], n)? {
                    self.cuts[j].remove(n);
                    removed += 1;
                } else {
                    n += 1;
                }
            }
        }
        Ok(removed)
    }
}

/// `max_{p ∈ Δ} min_{h ≠ g} ⟨h − g, p⟩ ≤ 0` means `g` can be dropped.
fn cut_is_redundant(cuts: &[Vec<f64>], n: usize) -> Result<bool> {
    let types = cuts[n].len();
    let mut lp = LinearProgram::new();
    let p: Vec<usize> = (0..types).map(|_| lp.add_nonneg(0.0)).collect();
    let s = lp.add_free(1.0);
    lp.add_row(p.iter().map(|&v| (v, 1.0)).collect(), Relation::Eq, 1.0);
    for (m, h) in cuts.iter().enumerate() {
        if m == n {
            continue;
        }
        let mut coeffs = vec![(s, 1.0)];
        coeffs.extend((0..types).map(|k| (p[k], cuts[n][k] - h[k])));
        lp.add_row(coeffs, Relation::Le, 0.0);
    }
    let sol = solve_lp(&lp)?;
    Ok(sol.status == LpStatus::Optimal && sol.objective <= 1e-12)
}

pub fn envelope_eval(env: &ConcaveEnvelope, p: &Belief, j: usize) -> f64 {
    perspective_eval(env, p.as_slice(), j)
}

/// `min_g ⟨g, v⟩` for a nonnegative, not necessarily normalised `v`.
pub fn perspective_eval(env: &ConcaveEnvelope, v: &[f64], j: usize) -> f64 {
    env.cuts[j]
        .iter()
        .map(|g| g.iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// One solved stage: its saddle point plus a supergradient cut of the
/// backed-up function at `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSaddle {
    pub value: f64,
    pub phi_star: JointMix,
    pub mu_star: StageMixP1,
    pub nu_star: StageMixP2,
    pub cut: Vec<f64>,
}

/// How the type marginal of `φ` is pinned in a stage LP.
pub(crate) enum MassRows<'a> {
    /// `Σ_a φ(k,a) = p_k` for every type.
    PerType(&'a [f64]),
    /// `Σ_{k,a} φ(k,a) = 1`, with `−z_k/α` charged on type `k`'s mass.
    Penalised(&'a [f64]),
}

/// Column and row layout of a stage LP.
pub(crate) struct StageLp {
    pub lp: LinearProgram,
    pub actions: usize,
    pub states: usize,
    pub types: usize,
    pub mass_rows: usize,
    /// `(a, j, cut index)` for every cut row, in row order.
    pub cut_rows: Vec<(usize, usize, usize)>,
    pub payoff_start: usize,
    pub t: usize,
}

impl StageLp {
    pub fn phi(&self, k: usize, a: usize) -> usize {
        k * self.actions + a
    }

    pub fn w(&self, a: usize, j: usize) -> usize {
        self.types * self.actions + a * self.states + j
    }
}

pub(crate) fn build_stage_lp(
    i: usize,
    prev: &ConcaveEnvelope,
    agg: &DiscountedAggregates,
    spec: &GameSpec,
    mass: MassRows,
) -> StageLp {
    let dims = spec.dims();
    let (nk, na, nb, ns) = (dims.types, dims.actions_p1, dims.actions_p2, dims.states);
    let mut lp = LinearProgram::new();
    for _ in 0..nk * na {
        lp.add_nonneg(0.0);
    }
    for _ in 0..na * ns {
        lp.add_free(0.0);
    }
    let t = lp.add_free(1.0);
    let mut layout = StageLp {
        lp,
        actions: na,
        states: ns,
        types: nk,
        mass_rows: 0,
        cut_rows: Vec::new(),
        payoff_start: 0,
        t,
    };
    match mass {
        MassRows::PerType(p) => {
            for (k, &pk) in p.iter().enumerate() {
                let coeffs = (0..na).map(|a| (layout.phi(k, a), 1.0)).collect();
                layout.lp.add_row(coeffs, Relation::Eq, pk);
            }
            layout.mass_rows = nk;
        }
        MassRows::Penalised(_) => {
            let coeffs = (0..nk).flat_map(|k| (0..na).map(move |a| (k * na + a, 1.0))).collect();
            layout.lp.add_row(coeffs, Relation::Eq, 1.0);
            layout.mass_rows = 1;
        }
    }
    for a in 0..na {
        for j in 0..ns {
            for (n, g) in prev.cuts(j).iter().enumerate() {
                let mut coeffs = vec![(layout.w(a, j), 1.0)];
                for k in 0..nk {
                    if g[k] != 0.0 {
                        coeffs.push((layout.phi(k, a), -g[k]));
                    }
                }
                layout.lp.add_row(coeffs, Relation::Le, 0.0);
                layout.cut_rows.push((a, j, n));
            }
        }
    }
    layout.payoff_start = layout.lp.rows.len();
    let penalty = match mass {
        MassRows::Penalised(z) => Some(z),
        MassRows::PerType(_) => None,
    };
    for b in 0..nb {
        let mut coeffs = vec![(t, 1.0)];
        for k in 0..nk {
            for a in 0..na {
                let mut stage = spec.cost(k, i, a, b) * agg.m(i, a, b);
                if let Some(z) = penalty {
                    stage -= z[k] / spec.alpha;
                }
                if stage != 0.0 {
                    coeffs.push((layout.phi(k, a), -stage));
                }
            }
        }
        for a in 0..na {
            for j in 0..ns {
                let q = agg.qhat(i, a, b, j);
                if q != 0.0 {
                    coeffs.push((layout.w(a, j), -q));
                }
            }
        }
        layout.lp.add_row(coeffs, Relation::Le, 0.0);
    }
    layout
}

pub(crate) fn solve_stage(layout: &StageLp) -> Result<LpSolution> {
    let sol = solve_lp(&layout.lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::NumericalFailure(format!("stage LP returned {:?}", sol.status)));
    }
    Ok(sol)
}

pub(crate) fn normalise_mix(raw: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total > 0.0 {
        clipped.into_iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / raw.len() as f64; raw.len()]
    }
}

/// One application of the Shapley operator at `(p, i)`, with its saddle.
pub fn stage_backup(
    p: &Belief,
    i: usize,
    prev: &ConcaveEnvelope,
    agg: &DiscountedAggregates,
    spec: &GameSpec,
) -> Result<StageSaddle> {
    let layout = build_stage_lp(i, prev, agg, spec, MassRows::PerType(p.as_slice()));
    let sol = solve_stage(&layout)?;
    let dims = spec.dims();
    let mut phi = vec![0.0; dims.types * dims.actions_p1];
    for k in 0..dims.types {
        for a in 0..dims.actions_p1 {
            phi[k * dims.actions_p1 + a] = sol.x[layout.phi(k, a)].max(0.0);
        }
    }
    let phi_star = JointMix {
        types: dims.types,
        actions: dims.actions_p1,
        phi,
    };
    let (_, mu_star) = conditional_from(&phi_star);
    let nu = normalise_mix(&sol.duals[layout.payoff_start..layout.payoff_start + dims.actions_p2]);
    Ok(StageSaddle {
        value: sol.x[layout.t],
        phi_star,
        mu_star,
        nu_star: StageMixP2(nu),
        cut: sol.duals[..dims.types].to_vec(),
    })
}

/// `T^{μ,ν} V (p, i)` evaluated straight from its definition.
pub fn stage_operator(
    p: &Belief,
    i: usize,
    mu: &StageMixP1,
    nu: &StageMixP2,
    env: &ConcaveEnvelope,
    agg: &DiscountedAggregates,
    spec: &GameSpec,
) -> f64 {
    let dims = spec.dims();
    let mut total = 0.0;
    for a in 0..dims.actions_p1 {
        let pa: f64 = (0..dims.types).map(|k| p.0[k] * mu.prob(k, a)).sum();
        let post = posterior_update(p, mu, a);
        for b in 0..dims.actions_p2 {
            let nb = nu.0[b];
            if nb == 0.0 {
                continue;
            }
            let stage: f64 = (0..dims.types)
                .map(|k| p.0[k] * mu.prob(k, a) * spec.cost(k, i, a, b))
                .sum::<f64>()
                * agg.m(i, a, b);
            let cont = if post.on_support {
                (0..dims.states)
                    .map(|j| agg.qhat(i, a, b, j) * env.eval(&post.belief, j))
                    .sum::<f64>()
                    * pa
            } else {
                0.0
            };
            total += nb * (stage + cont);
        }
    }
    total
}

/// `c* β^{n+1} / α`: reward an `n`-th iterate can miss.
pub fn error_budget(n: usize, cert: &Assumption1Certificate, cstar: f64, alpha: f64) -> f64 {
    cstar * cert.beta.powi(n as i32 + 1) / alpha
}

/// Smallest final iterate index for which the a-priori budget falls below `stop_tol`.
pub fn required_index(stop_tol: f64, alpha: f64, cstar: f64, beta: f64) -> usize {
    if cstar <= 0.0 || beta <= 0.0 {
        return 1;
    }
    ((alpha * stop_tol / cstar).ln().abs() / beta.ln().abs()).ceil() as usize + 1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub mesh: usize,
    pub stop_tol: f64,
    pub max_iterations: usize,
    pub prune_dominated: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            mesh: 50,
            stop_tol: 1e-4,
            max_iterations: 10_000,
            prune_dominated: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub envelopes: ConcaveEnvelope,
    pub mesh: usize,
    /// Number of backups performed; the final iterate has index `iterations - 1`.
    pub iterations: usize,
    pub beta: f64,
    /// `c* β^{n+1}/α` for the final index `n`.
    pub tail_bound: f64,
    pub last_change: f64,
    pub stop_tol: f64,
    pub alpha: f64,
    pub cstar: f64,
    pub grid: Vec<Belief>,
    /// `history[n][i][g]`: value of iterate `n` at state `i`, grid point `g`.
    pub history: Vec<Vec<Vec<f64>>>,
}

impl SolveReport {
    pub fn value(&self, p: &Belief, i: usize) -> f64 {
        self.envelopes.eval(p, i)
    }
}

/// Backs up every grid point of every state against `prev`.
pub fn backup_all(
    grid: &[Belief],
    prev: &ConcaveEnvelope,
    agg: &DiscountedAggregates,
    spec: &GameSpec,
) -> Result<Vec<Vec<StageSaddle>>> {
    let states = spec.dims().states;
    let jobs: Vec<(usize, usize)> = (0..states).flat_map(|i| (0..grid.len()).map(move |g| (i, g))).collect();
    let solved: Vec<Result<StageSaddle>> = jobs
        .par_iter()
        .map(|&(i, g)| stage_backup(&grid[g], i, prev, agg, spec))
        .collect();
    let mut out: Vec<Vec<StageSaddle>> = (0..states).map(|_| Vec::with_capacity(grid.len())).collect();
    for (&(i, _), s) in jobs.iter().zip(solved) {
        out[i].push(s?);
    }
    Ok(out)
}

pub fn value_iterate(
    spec: &GameSpec,
    agg: &DiscountedAggregates,
    cert: &Assumption1Certificate,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    if opts.mesh == 0 || !(opts.stop_tol > 0.0) {
        return Err(Error::NumericalFailure("mesh must be positive and the stopping tolerance positive".into()));
    }
    let dims = spec.dims();
    let grid = simplex_grid(dims.types, opts.mesh);
    let cstar = spec.cstar();
    let needed = required_index(opts.stop_tol, spec.alpha, cstar, cert.beta);
    let threshold = opts.stop_tol * (1.0 - cert.beta);

    let mut env = ConcaveEnvelope::zero(dims.types, dims.states);
    let mut history: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut last_change = f64::INFINITY;
    for n in 0..opts.max_iterations {
        let saddles = backup_all(&grid, &env, agg, spec)?;
        let mut next = ConcaveEnvelope {
            types: dims.types,
            cuts: vec![Vec::new(); dims.states],
        };
        let mut values = Vec::with_capacity(dims.states);
        for (i, row) in saddles.into_iter().enumerate() {
            values.push(row.iter().map(|s| s.value).collect::<Vec<f64>>());
            for s in row {
                next.push_cut(i, s.cut);
            }
        }
        if opts.prune_dominated {
            next.prune_dominated()?;
        }
        last_change = match history.last() {
            Some(prev) => sup_change(prev, &values),
            None => values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())),
        };
        history.push(values);
        env = next;
        if last_change <= threshold && n >= needed {
            return Ok(SolveReport {
                envelopes: env,
                mesh: opts.mesh,
                iterations: n + 1,
                beta: cert.beta,
                tail_bound: error_budget(n, cert, cstar, spec.alpha),
                last_change,
                stop_tol: opts.stop_tol,
                alpha: spec.alpha,
                cstar,
                grid,
                history,
            });
        }
    }
    let _ = last_change;
    Err(Error::IterationBudgetExceeded(opts.max_iterations))
}

fn sup_change(prev: &[Vec<f64>], next: &[Vec<f64>]) -> f64 {
    prev.iter()
        .flatten()
        .zip(next.iter().flatten())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::simplex_grid;
    use crate::fixtures;
    use crate::lp::solve_matrix_game;
    use crate::model::{certify_assumption1, default_delta_candidates, discounted_aggregates};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_cut_env() -> ConcaveEnvelope {
        ConcaveEnvelope::from_cuts(2, vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]]).unwrap()
    }

    fn random_simplex(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..dim).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / s).collect()
    }

    #[test]
    fn envelope_examples() {
        let flat = ConcaveEnvelope::from_cuts(2, vec![vec![vec![1.0, 1.0]]]).unwrap();
        assert_eq!(flat.eval(&Belief::new(vec![0.3, 0.7]), 0), 1.0);
        let env = two_cut_env();
        assert_eq!(env.eval(&Belief::uniform(2), 0), 0.5);
        assert_eq!(env.eval(&Belief::vertex(2, 0), 0), 0.0);
        assert_eq!(env.eval(&Belief::vertex(2, 1), 0), 0.0);
    }

    #[test]
    fn perspective_examples() {
        let env = two_cut_env();
        assert_eq!(perspective_eval(&env, &[0.0, 0.0], 0), 0.0);
        let p = Belief::new(vec![0.3, 0.7]);
        let v2: Vec<f64> = p.0.iter().map(|x| 2.0 * x).collect();
        assert!((perspective_eval(&env, &v2, 0) - 2.0 * env.eval(&p, 0)).abs() < 1e-15);
        assert!((perspective_eval(&env, &[0.15, 0.175], 0) - 0.15).abs() < 1e-15);
    }

    #[test]
    fn cut_merging_and_pruning() {
        let mut env = two_cut_env();
        assert!(!env.push_cut(0, vec![1.0, 0.0 + 1e-13]));
        assert!(env.push_cut(0, vec![2.0, 2.0]));
        assert_eq!(env.cuts(0).len(), 3);
        assert_eq!(env.prune_dominated().unwrap(), 1);
        assert_eq!(env.cuts(0), two_cut_env().cuts(0));
    }

    #[test]
    fn constant_cost_backup_is_half_c0() {
        let spec = fixtures::constant_cost(0.8);
        let agg = discounted_aggregates(&spec);
        let prev = ConcaveEnvelope::zero(2, 1);
        for p in [0.0, 0.3, 1.0] {
            let s = stage_backup(&Belief::new(vec![p, 1.0 - p]), 0, &prev, &agg, &spec).unwrap();
            assert!((s.value - 0.4).abs() < 1e-12);
        }
    }

    /// Horizon-zero value by enumerating per-type pure action profiles.
    fn horizon_zero_oracle(spec: &GameSpec, agg: &DiscountedAggregates, p: &[f64], i: usize) -> f64 {
        let dims = spec.dims();
        let profiles = dims.actions_p1.pow(dims.types as u32);
        let matrix: Vec<Vec<f64>> = (0..profiles)
            .map(|code| {
                let acts: Vec<usize> =
                    (0..dims.types).map(|k| code / dims.actions_p1.pow(k as u32) % dims.actions_p1).collect();
                (0..dims.actions_p2)
                    .map(|b| (0..dims.types).map(|k| p[k] * spec.cost(k, i, acts[k], b) * agg.m(i, acts[k], b)).sum())
                    .collect()
            })
            .collect();
        solve_matrix_game(&matrix).unwrap().value
    }

    #[test]
    fn horizon_zero_matches_profile_matrix_game() {
        let spec = fixtures::desk_two_state();
        let agg = discounted_aggregates(&spec);
        let prev = ConcaveEnvelope::zero(2, 2);
        for i in 0..2 {
            for p in simplex_grid(2, 10) {
                let s = stage_backup(&p, i, &prev, &agg, &spec).unwrap();
                let oracle = horizon_zero_oracle(&spec, &agg, p.as_slice(), i);
                assert!((s.value - oracle).abs() < 1e-9, "p={:?} i={i}: {} vs {oracle}", p.0, s.value);
            }
        }
    }

    #[test]
    fn vertex_backup_is_complete_information_backup() {
        let spec = fixtures::desk_two_state();
        let agg = discounted_aggregates(&spec);
        let prev = ConcaveEnvelope::from_cuts(
            2,
            vec![vec![vec![0.3, 1.1], vec![0.9, 0.2]], vec![vec![0.5, 0.7]]],
        )
        .unwrap();
        for k in 0..2 {
            let p = Belief::vertex(2, k);
            for i in 0..2 {
                let matrix: Vec<Vec<f64>> = (0..2)
                    .map(|a| {
                        (0..2)
                            .map(|b| {
                                spec.cost(k, i, a, b) * agg.m(i, a, b)
                                    + (0..2).map(|j| agg.qhat(i, a, b, j) * prev.eval(&p, j)).sum::<f64>()
                            })
                            .collect()
                    })
                    .collect();
                let expect = solve_matrix_game(&matrix).unwrap().value;
                let s = stage_backup(&p, i, &prev, &agg, &spec).unwrap();
                assert!((s.value - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn saddle_and_cut_certificates() {
        let spec = fixtures::desk_two_state();
        let agg = discounted_aggregates(&spec);
        let grid = simplex_grid(2, 6);
        let mut prev = ConcaveEnvelope::zero(2, 2);
        for _ in 0..3 {
            let saddles = backup_all(&grid, &prev, &agg, &spec).unwrap();
            let mut next = ConcaveEnvelope { types: 2, cuts: vec![Vec::new(); 2] };
            for (i, row) in saddles.into_iter().enumerate() {
                for s in row {
                    next.push_cut(i, s.cut);
                }
            }
            prev = next;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..4 {
            let p = Belief::new(random_simplex(&mut rng, 2));
            let i = trial % 2;
            let s = stage_backup(&p, i, &prev, &agg, &spec).unwrap();
            assert!(s.phi_star.phi.iter().all(|&x| x >= 0.0));
            for k in 0..2 {
                let mass: f64 = (0..2).map(|a| s.phi_star.get(k, a)).sum();
                assert!((mass - p.0[k]).abs() < 1e-9);
            }
            assert!((s.nu_star.0.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            let at_p: f64 = s.cut.iter().zip(&p.0).map(|(g, x)| g * x).sum();
            assert!((at_p - s.value).abs() < 1e-8);
            for _ in 0..50 {
                let nu = StageMixP2(random_simplex(&mut rng, 2));
                assert!(stage_operator(&p, i, &s.mu_star, &nu, &prev, &agg, &spec) >= s.value - 1e-6);
                let mu = StageMixP1((0..2).map(|_| random_simplex(&mut rng, 2)).collect());
                assert!(stage_operator(&p, i, &mu, &s.nu_star, &prev, &agg, &spec) <= s.value + 1e-6);
            }
            for _ in 0..100 {
                let q = Belief::new(random_simplex(&mut rng, 2));
                let at_q: f64 = s.cut.iter().zip(&q.0).map(|(g, x)| g * x).sum();
                assert!(at_q >= stage_backup(&q, i, &prev, &agg, &spec).unwrap().value - 1e-6);
            }
        }
    }

    #[test]
    fn error_budget_examples() {
        let cert = |beta| Assumption1Certificate { delta: 1.0, epsilon: 0.5, beta, worst_pair: (0, 0, 0) };
        assert!((error_budget(0, &cert(0.5), 1.0, 1.0) - 0.5).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for n in 0..200 {
            let e = error_budget(n, &cert(0.9), 1.0, 1.0);
            assert!(e < prev);
            prev = e;
        }
        assert!(prev < 1e-8);
        // 4 β^11 with the certified β = 1 - e^{-0.2}(1 - e^{-0.1}), evaluated independently.
        let beta = 1.0 - (-0.2f64).exp() * (1.0 - (-0.1f64).exp());
        assert!((error_budget(10, &cert(beta), 2.0, 0.5) - 1.638903).abs() < 1e-6);
    }

    #[test]
    fn constant_cost_iteration_reaches_c0_over_alpha() {
        let spec = fixtures::constant_cost(0.7);
        let agg = discounted_aggregates(&spec);
        let cert = certify_assumption1(&spec, &default_delta_candidates(&spec)).unwrap();
        let opts = SolveOptions { mesh: 10, ..SolveOptions::default() };
        let rep = value_iterate(&spec, &agg, &cert, &opts).unwrap();
        for p in &rep.grid {
            assert!((rep.value(p, 0) - 0.7).abs() < 1e-4);
        }
        assert!(rep.iterations >= required_index(1e-4, 1.0, 0.7, cert.beta) + 1);
        for w in rep.history.windows(2) {
            for (a, b) in w[0].iter().flatten().zip(w[1].iter().flatten()) {
                assert!(b >= &(a - 1e-8));
            }
        }
    }

    #[test]
    fn iteration_cap_is_reported() {
        let spec = fixtures::desk_one_state();
        let agg = discounted_aggregates(&spec);
        let cert = certify_assumption1(&spec, &default_delta_candidates(&spec)).unwrap();
        let opts = SolveOptions { mesh: 4, max_iterations: 3, ..SolveOptions::default() };
        assert!(matches!(value_iterate(&spec, &agg, &cert, &opts), Err(Error::IterationBudgetExceeded(3))));
    }
}

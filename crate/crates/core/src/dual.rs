//! The dual game: conjugation between the value envelope `V` and the dual
//! value `U(z, i) = max_p V(p, i) − ⟨p, z⟩/α`, the dual stage operator, and
//! the uninformed player's policy engine.
//!
//! Continuation vectors are indexed by Player 1's action as well as the next
//! state, because the posterior after a stage depends on both. Player 2 sees
//! the action, so this is still a policy over public histories.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::belief::{Belief, StageMixP2};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, solve_matrix_game, LinearProgram, LpStatus, Relation};
use crate::model::{DiscountedAggregates, GameSpec};
use crate::sim::{Step, UninformedEngine};
use crate::tol::TOL;
use crate::value::{build_stage_lp, normalise_mix, solve_stage, stage_backup, ConcaveEnvelope, MassRows};

/// Memo tables round `z` to this grid.
pub const MEMO_QUANTUM: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualVector(pub Vec<f64>);

impl DualVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Whether every entry lies in `[0, c*]`.
    pub fn in_box(&self, cstar: f64) -> bool {
        self.0.iter().all(|&x| x.is_finite() && (0.0..=cstar).contains(&x))
    }
}

fn quantize(z: &[f64]) -> Vec<i64> {
    z.iter().map(|x| (x / MEMO_QUANTUM).round() as i64).collect()
}

/// Lazy, memoised evaluation of `U(z, i)` from a solved envelope.
#[derive(Debug)]
pub struct DualValueOracle {
    env: Arc<ConcaveEnvelope>,
    alpha: f64,
    cstar: f64,
    memo: RwLock<HashMap<(usize, Vec<i64>), f64>>,
}

impl DualValueOracle {
    pub fn new(env: Arc<ConcaveEnvelope>, alpha: f64, cstar: f64) -> Self {
        DualValueOracle {
            env,
            alpha,
            cstar,
            memo: RwLock::new(HashMap::new()),
        }
    }

    pub fn envelope(&self) -> &ConcaveEnvelope {
        &self.env
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn cstar(&self) -> f64 {
        self.cstar
    }

    pub fn memo_len(&self) -> usize {
        self.memo.read().unwrap().len()
    }

    pub fn conjugate(&self, z: &[f64], i: usize) -> Result<f64> {
        let key = (i, quantize(z));
        if let Some(v) = self.memo.read().unwrap().get(&key) {
            return Ok(*v);
        }
        let (v, _) = self.conjugate_argmax(z, i)?;
        Ok(*self.memo.write().unwrap().entry(key).or_insert(v))
    }

    /// `U(z, i)` together with a maximising belief; not memoised.
    pub fn conjugate_argmax(&self, z: &[f64], i: usize) -> Result<(f64, Belief)> {
        let types = self.env.types();
        let mut lp = LinearProgram::new();
        let p: Vec<usize> = (0..types).map(|_| lp.add_nonneg(0.0)).collect();
        let t = lp.add_free(1.0);
        lp.add_row(p.iter().map(|&v| (v, 1.0)).collect(), Relation::Eq, 1.0);
        for g in self.env.cuts(i) {
            let mut coeffs = vec![(t, 1.0)];
            coeffs.extend((0..types).map(|k| (p[k], z[k] / self.alpha - g[k])));
            lp.add_row(coeffs, Relation::Le, 0.0);
        }
        let sol = solve_lp(&lp)?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::NumericalFailure(format!("conjugate LP returned {:?}", sol.status)));
        }
        let belief = crate::value::normalise_mix(&sol.x[..types]);
        Ok((sol.x[t], Belief::new(belief)))
    }
}

pub fn conjugate_eval(oracle: &DualValueOracle, z: &DualVector, i: usize) -> Result<f64> {
    oracle.conjugate(z.as_slice(), i)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoverConfig {
    pub grid_points: usize,
    pub min_step: f64,
}

impl Default for RecoverConfig {
    fn default() -> Self {
        RecoverConfig {
            grid_points: 33,
            min_step: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recovered {
    pub value: f64,
    pub z: DualVector,
    pub evaluations: usize,
}

const GRID_LIMIT: usize = 1_000_000;

/// `min_{z ∈ [0,c*]^K} U(z, i) + ⟨p, z⟩/α` and its minimiser.
///
/// The search starts from the scaled active cut at `p`, which attains the
/// minimum whenever it fits in the box, then scans a coordinate grid and
/// refines by coordinate descent. Only strict improvements are accepted, so
/// ties go to the earliest candidate.
pub fn recover_value(oracle: &DualValueOracle, p: &Belief, i: usize, cfg: &RecoverConfig) -> Result<Recovered> {
    let types = p.dim();
    let (alpha, cstar) = (oracle.alpha, oracle.cstar);
    let mut evaluations = 0usize;
    let mut f = |z: &[f64]| -> Result<f64> {
        evaluations += 1;
        let lin: f64 = p.0.iter().zip(z).map(|(a, b)| a * b).sum();
        Ok(oracle.conjugate(z, i)? + lin / alpha)
    };

    let active = oracle
        .env
        .cuts(i)
        .iter()
        .map(|g| (g.iter().zip(&p.0).map(|(a, b)| a * b).sum::<f64>(), g))
        .fold(None, |best: Option<(f64, &Vec<f64>)>, (v, g)| match best {
            Some((bv, _)) if bv <= v => best,
            _ => Some((v, g)),
        })
        .map(|(_, g)| g.clone())
        .unwrap_or_else(|| vec![0.0; types]);
    let mut best_z = into_box(active.iter().map(|g| alpha * g).collect(), cstar);
    let mut best = f(&best_z)?;

    let g = cfg.grid_points.max(2);
    let total = g.checked_pow(types as u32).filter(|&n| n <= GRID_LIMIT);
    let Some(total) = total else {
        return Err(Error::SearchBudgetExceeded(GRID_LIMIT));
    };
    let spacing = cstar / (g - 1) as f64;
    let mut z = vec![0.0; types];
    for code in 0..total {
        let mut rest = code;
        for k in (0..types).rev() {
            z[k] = spacing * (rest % g) as f64;
            rest /= g;
        }
        let v = f(&z)?;
        if v < best - 1e-12 {
            best = v;
            best_z.copy_from_slice(&z);
        }
    }

    let mut step = spacing / 2.0;
    while cstar > 0.0 && step >= cfg.min_step {
        let mut improved = false;
        for k in 0..types {
            for dir in [-1.0, 1.0] {
                let mut cand = best_z.clone();
                cand[k] = (cand[k] + dir * step).clamp(0.0, cstar);
                if cand[k] == best_z[k] {
                    continue;
                }
                let v = f(&cand)?;
                if v < best - 1e-15 {
                    best = v;
                    best_z = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    Ok(Recovered {
        value: best,
        z: DualVector(best_z),
        evaluations,
    })
}

/// Shifts `v` so its smallest entry is zero, then clips to `[0, c*]`.
fn into_box(mut v: Vec<f64>, cstar: f64) -> Vec<f64> {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    for x in v.iter_mut() {
        *x = (*x - lo).clamp(0.0, cstar);
    }
    v
}

/// Continuation dual vectors `w(a, j) ∈ [0, c*]^K`.
///
/// With `shared` set, one vector per next state serves every action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WField {
    pub actions: usize,
    pub states: usize,
    pub types: usize,
    pub shared: bool,
    w: Vec<Vec<f64>>,
}

impl WField {
    pub fn zero(actions: usize, states: usize, types: usize, shared: bool) -> Self {
        WField {
            actions,
            states,
            types,
            shared,
            w: vec![vec![0.0; types]; actions * states],
        }
    }

    pub fn get(&self, a: usize, j: usize) -> &[f64] {
        &self.w[a * self.states + j]
    }

    pub fn set(&mut self, a: usize, j: usize, v: Vec<f64>) {
        if self.shared {
            for b in 0..self.actions {
                self.w[b * self.states + j] = v.clone();
            }
        } else {
            self.w[a * self.states + j] = v;
        }
    }

    /// Number of free scalar coordinates.
    pub fn coords(&self) -> usize {
        if self.shared {
            self.states * self.types
        } else {
            self.actions * self.states * self.types
        }
    }

    fn coord(&self, c: usize) -> (usize, usize, usize) {
        let k = c % self.types;
        let rest = c / self.types;
        if self.shared {
            (0, rest, k)
        } else {
            (rest / self.states, rest % self.states, k)
        }
    }

    fn coord_value(&self, c: usize) -> f64 {
        let (a, j, k) = self.coord(c);
        self.get(a, j)[k]
    }

    fn with_coord(&self, c: usize, value: f64) -> WField {
        let (a, j, k) = self.coord(c);
        let mut out = self.clone();
        let mut v = out.get(a, j).to_vec();
        v[k] = value;
        out.set(a, j, v);
        out
    }

    pub fn in_box(&self, cstar: f64) -> bool {
        self.w.iter().flatten().all(|&x| (0.0..=cstar).contains(&x))
    }
}

/// Payoff matrix of the dual stage game; rows `(k, a)` flattened as
/// `k * |A| + a`, columns `b`.
pub fn gamma_matrix(
    i: usize,
    z: &[f64],
    w: &WField,
    oracle: &DualValueOracle,
    agg: &DiscountedAggregates,
    spec: &GameSpec,
) -> Result<Vec<Vec<f64>>> {
    let dims = spec.dims();
    let alpha = spec.alpha;
    let mut cont = vec![0.0; dims.actions_p1 * dims.states];
    for a in 0..dims.actions_p1 {
        for j in 0..dims.states {
            cont[a * dims.states + j] = oracle.conjugate(w.get(a, j), j)?;
        }
    }
    let mut m = vec![vec![0.0; dims.actions_p2]; dims.types * dims.actions_p1];
    for k in 0..dims.types {
        for a in 0..dims.actions_p1 {
            for b in 0..dims.actions_p2 {
                let mut v = spec.cost(k, i, a, b) * agg.m(i, a, b) - z[k] / alpha;
                for j in 0..dims.states {
                    v += agg.qhat(i, a, b, j) * (cont[a * dims.states + j] + w.get(a, j)[k] / alpha);
                }
                m[k * dims.actions_p1 + a][b] = v;
            }
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualSearchConfig {
    pub grid_points: usize,
    pub min_step_fraction: f64,
    pub max_evaluations: usize,
    pub shared_across_actions: bool,
    /// Searching stops once the stage value is within this of the LP bound.
    pub accept_gap: f64,
}

impl Default for DualSearchConfig {
    fn default() -> Self {
        DualSearchConfig {
            grid_points: 9,
            min_step_fraction: 1e-3,
            max_evaluations: 100_000,
            shared_across_actions: false,
            accept_gap: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualStageSolution {
    pub w: WField,
    pub nu: StageMixP2,
    pub val: f64,
    /// `max_φ min_ν` of the stage with exact continuation; never above `val`.
    pub lower: f64,
    /// Reported accuracy of `val` as an estimate of `U(z, i)`.
    pub tol: f64,
    pub evaluations: usize,
}

/// Solves the dual stage at `(i, z)`: continuation vectors `w*`, Player 2's
/// mix `ν*` and the stage value.
pub fn dual_stage_solve(
    i: usize,
    z: &[f64],
    oracle: &DualValueOracle,
    agg: &DiscountedAggregates,
    spec: &GameSpec,
    cfg: &DualSearchConfig,
) -> Result<DualStageSolution> {
    let dims = spec.dims();
    let (alpha, cstar) = (spec.alpha, oracle.cstar);
    let env = oracle.envelope();
    let layout = build_stage_lp(i, env, agg, spec, MassRows::Penalised(z));
    let sol = solve_stage(&layout)?;
    let lower = sol.x[layout.t];

    // Warm start from the cut multipliers: their weighted cut average is a
    // supergradient at the stage posterior, and scaled by α it makes the
    // continuation exact.
    let mut w = WField::zero(dims.actions_p1, dims.states, dims.types, cfg.shared_across_actions);
    let action_groups: Vec<Vec<usize>> = if cfg.shared_across_actions {
        vec![(0..dims.actions_p1).collect()]
    } else {
        (0..dims.actions_p1).map(|a| vec![a]).collect()
    };
    for group in &action_groups {
        for j in 0..dims.states {
            let mut weight = 0.0;
            let mut avg = vec![0.0; dims.types];
            for (r, &(a, jj, n)) in layout.cut_rows.iter().enumerate() {
                if jj != j || !group.contains(&a) {
                    continue;
                }
                let lam = sol.duals[layout.mass_rows + r].max(0.0);
                if lam > 0.0 {
                    weight += lam;
                    for (acc, g) in avg.iter_mut().zip(&env.cuts(j)[n]) {
                        *acc += lam * g;
                    }
                }
            }
            let gbar = if weight > 1e-12 {
                avg.iter().map(|x| x / weight).collect()
            } else {
                let mut col = vec![0.0; dims.types];
                for &a in group {
                    for (k, c) in col.iter_mut().enumerate() {
                        *c += sol.x[layout.phi(k, a)].max(0.0);
                    }
                }
                if col.iter().sum::<f64>() <= 0.0 {
                    col = vec![1.0; dims.types];
                }
                active_cut(env, j, &col)
            };
            w.set(group[0], j, into_box(gbar.iter().map(|g| alpha * g).collect(), cstar));
        }
    }

    let mut evaluations = 0usize;
    let mut eval = |w: &WField| -> Result<(f64, Vec<f64>)> {
        evaluations += 1;
        if evaluations > cfg.max_evaluations {
            return Err(Error::SearchBudgetExceeded(cfg.max_evaluations));
        }
        let game = solve_matrix_game(&gamma_matrix(i, z, w, oracle, agg, spec)?)?;
        Ok((game.value, game.col_mix))
    };
    let (mut val, mut nu) = eval(&w)?;

    if val - lower > cfg.accept_gap && cstar > 0.0 {
        let g = cfg.grid_points.max(2);
        let levels: Vec<f64> = (0..g).map(|n| cstar * n as f64 / (g - 1) as f64).collect();
        for c in 0..w.coords() {
            for &lv in &levels {
                if lv == w.coord_value(c) {
                    continue;
                }
                let cand = w.with_coord(c, lv);
                let (v, mix) = eval(&cand)?;
                if v < val - 1e-9 {
                    (w, val, nu) = (cand, v, mix);
                }
            }
        }
        let mut step = cstar / (g - 1) as f64 / 2.0;
        let floor = cstar * cfg.min_step_fraction;
        while step >= floor && val - lower > cfg.accept_gap {
            let mut improved = false;
            for c in 0..w.coords() {
                for dir in [-1.0, 1.0] {
                    let cur = w.coord_value(c);
                    let next = (cur + dir * step).clamp(0.0, cstar);
                    if next == cur {
                        continue;
                    }
                    let cand = w.with_coord(c, next);
                    let (v, mix) = eval(&cand)?;
                    if v < val - 1e-9 {
                        (w, val, nu) = (cand, v, mix);
                        improved = true;
                    }
                }
            }
            if !improved {
                step /= 2.0;
            }
        }
    }
    // `lower` is the conjugate of the backed-up envelope, so its distance to
    // U is bracketed by the envelope's one-step residual at the maximisers
    // of the two conjugates.
    let mut marginal = vec![0.0; dims.types];
    for (k, m) in marginal.iter_mut().enumerate() {
        for a in 0..dims.actions_p1 {
            *m += sol.x[layout.phi(k, a)].max(0.0);
        }
    }
    let (_, p_star) = oracle.conjugate_argmax(z, i)?;
    let mut residual = 0.0f64;
    for q in [p_star, Belief::new(normalise_mix(&marginal))] {
        let backed = stage_backup(&q, i, env, agg, spec)?.value;
        residual = residual.max((backed - env.eval(&q, i)).abs());
    }
    Ok(DualStageSolution {
        w,
        nu: StageMixP2(nu),
        val,
        lower,
        tol: (val - lower).abs() + residual + 10.0 * TOL.duality_gap,
        evaluations,
    })
}

/// The cut of state `j` minimal along direction `v`; earliest on ties.
fn active_cut(env: &ConcaveEnvelope, j: usize, v: &[f64]) -> Vec<f64> {
    let mut best: Option<(f64, &Vec<f64>)> = None;
    for g in env.cuts(j) {
        let val: f64 = g.iter().zip(v).map(|(a, b)| a * b).sum();
        if best.is_none_or(|(bv, _)| val < bv) {
            best = Some((val, g));
        }
    }
    best.map(|(_, g)| g.clone()).unwrap_or_else(|| vec![0.0; v.len()])
}

/// The starting dual vector for play from `(p, i0)`.
pub fn p2_init(oracle: &DualValueOracle, p: &Belief, i0: usize, cfg: &RecoverConfig) -> Result<DualVector> {
    Ok(recover_value(oracle, p, i0, cfg)?.z)
}

/// Shared dual-stage cache; stage solutions depend only on `(i, ζ)`.
#[derive(Debug)]
pub struct P2Policy {
    oracle: Arc<DualValueOracle>,
    spec: Arc<GameSpec>,
    agg: Arc<DiscountedAggregates>,
    cfg: DualSearchConfig,
    cache: Mutex<HashMap<(usize, Vec<u64>), Arc<DualStageSolution>>>,
}

impl P2Policy {
    pub fn new(
        oracle: Arc<DualValueOracle>,
        spec: Arc<GameSpec>,
        agg: Arc<DiscountedAggregates>,
        cfg: DualSearchConfig,
    ) -> Self {
        P2Policy {
            oracle,
            spec,
            agg,
            cfg,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn oracle(&self) -> &DualValueOracle {
        &self.oracle
    }

    pub fn config(&self) -> &DualSearchConfig {
        &self.cfg
    }

    pub fn stage(&self, i: usize, zeta: &[f64]) -> Result<Arc<DualStageSolution>> {
        let key = (i, zeta.iter().map(|x| x.to_bits()).collect::<Vec<u64>>());
        if let Some(s) = self.cache.lock().unwrap().get(&key) {
            return Ok(s.clone());
        }
        let s = Arc::new(dual_stage_solve(i, zeta, &self.oracle, &self.agg, &self.spec, &self.cfg)?);
        Ok(self.cache.lock().unwrap().entry(key).or_insert(s).clone())
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().unwrap().len()
    }

    /// Largest reported stage tolerance among cached solutions.
    pub fn max_stage_tol(&self) -> f64 {
        self.cache.lock().unwrap().values().map(|s| s.tol).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P2TraceRecord {
    pub n: usize,
    pub state: usize,
    pub zeta: Vec<f64>,
    pub nu: Vec<f64>,
    pub val: f64,
    /// `w*(a, j)` in row-major `(a, j)` order.
    pub w: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct P2Engine {
    policy: Arc<P2Policy>,
    zeta: Vec<f64>,
    epoch: usize,
    pending: Option<(usize, Arc<DualStageSolution>)>,
    trace: Option<Vec<P2TraceRecord>>,
}

impl P2Engine {
    pub fn new(policy: Arc<P2Policy>, zeta: DualVector) -> Self {
        P2Engine {
            policy,
            zeta: zeta.0,
            epoch: 0,
            pending: None,
            trace: None,
        }
    }

    /// Starts at `p2_init(p, i0)`.
    pub fn start(policy: Arc<P2Policy>, p: &Belief, i0: usize, cfg: &RecoverConfig) -> Result<Self> {
        let z = p2_init(&policy.oracle, p, i0, cfg)?;
        Ok(Self::new(policy, z))
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn trace(&self) -> &[P2TraceRecord] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn zeta(&self) -> DualVector {
        DualVector(self.zeta.clone())
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn decide_stage(&mut self, i: usize) -> Result<Arc<DualStageSolution>> {
        let s = self.policy.stage(i, &self.zeta)?;
        if let Some(trace) = &mut self.trace {
            let w = &s.w;
            trace.push(P2TraceRecord {
                n: self.epoch,
                state: i,
                zeta: self.zeta.clone(),
                nu: s.nu.0.clone(),
                val: s.val,
                w: (0..w.actions)
                    .flat_map(|a| (0..w.states).map(move |j| w.get(a, j).to_vec()))
                    .collect(),
            });
        }
        self.pending = Some((i, s.clone()));
        Ok(s)
    }

    pub fn decide(&mut self, i: usize) -> Result<StageMixP2> {
        Ok(self.decide_stage(i)?.nu.clone())
    }

    /// Moves to `ζ = w*(a, j)` after Player 1 played `a` and the game moved to `j`.
    pub fn observe(&mut self, a: usize, j: usize) -> Result<DualVector> {
        let Some((_, s)) = self.pending.take() else {
            return Err(Error::Protocol(format!("observe at epoch {} without a decision", self.epoch)));
        };
        if a >= s.w.actions || j >= s.w.states {
            return Err(Error::Protocol(format!("observation ({a}, {j}) out of range")));
        }
        self.zeta = s.w.get(a, j).to_vec();
        self.epoch += 1;
        Ok(self.zeta())
    }
}

impl UninformedEngine for P2Engine {
    fn decide(&mut self, i: usize) -> Result<StageMixP2> {
        P2Engine::decide(self, i)
    }

    fn observe(&mut self, step: &Step) -> Result<()> {
        if let Some((state, _)) = &self.pending {
            if *state != step.state {
                return Err(Error::Protocol(format!("decided at state {state} but observed state {}", step.state)));
            }
        }
        P2Engine::observe(self, step.a, step.next).map(|_| ())
    }

    fn memo_key(&self) -> Vec<u64> {
        self.zeta.iter().map(|x| x.to_bits()).collect()
    }
}

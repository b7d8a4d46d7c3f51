//! The game tuple and the discounted kernel aggregates derived from it.
//!
//! Sojourn-time laws are restricted to four closed-form families so that
//! every Laplace transform and CDF used downstream is exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol::TOL;

/// Holding-time distribution of one transition branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SojournLaw {
    Exponential { rate: f64 },
    Deterministic { delay: f64 },
    Uniform { lo: f64, hi: f64 },
    Discrete { atoms: Vec<Atom> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub t: f64,
    pub weight: f64,
}

impl SojournLaw {
    pub fn discrete(atoms: &[(f64, f64)]) -> Self {
        SojournLaw::Discrete {
            atoms: atoms.iter().map(|&(t, weight)| Atom { t, weight }).collect(),
        }
    }

    /// Returns a description of every broken invariant of the law.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            SojournLaw::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    out.push(format!("exponential rate must be positive and finite, got {rate}"));
                }
            }
            SojournLaw::Deterministic { delay } => {
                if !(delay.is_finite() && *delay >= 0.0) {
                    out.push(format!("deterministic delay must be nonnegative and finite, got {delay}"));
                }
            }
            SojournLaw::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && *lo >= 0.0 && lo < hi) {
                    out.push(format!("uniform bounds must satisfy 0 <= lo < hi, got [{lo}, {hi}]"));
                }
            }
            SojournLaw::Discrete { atoms } => {
                if atoms.is_empty() {
                    out.push("discrete law needs at least one atom".to_string());
                }
                let mut total = 0.0;
                for (m, atom) in atoms.iter().enumerate() {
                    if !(atom.t.is_finite() && atom.t >= 0.0) {
                        out.push(format!("atom {m} time must be nonnegative, got {}", atom.t));
                    }
                    if !(atom.weight.is_finite() && atom.weight > 0.0) {
                        out.push(format!("atom {m} weight must be positive, got {}", atom.weight));
                    }
                    if m > 0 && atom.t <= atoms[m - 1].t {
                        out.push(format!("atom times must be strictly increasing at atom {m}"));
                    }
                    total += atom.weight;
                }
                if !atoms.is_empty() && (total - 1.0).abs() > TOL.input_probability {
                    out.push(format!("atom weights sum to {total}, expected 1"));
                }
            }
        }
        out
    }
}

/// Closed-form `∫ e^{-αt} F(dt)` for a sojourn law.
pub fn laplace_point(law: &SojournLaw, alpha: f64) -> f64 {
    match law {
        SojournLaw::Exponential { rate } => rate / (rate + alpha),
        SojournLaw::Deterministic { delay } => (-alpha * delay).exp(),
        SojournLaw::Uniform { lo, hi } => {
            let x = alpha * (hi - lo);
            let spread = if x == 0.0 { 1.0 } else { -(-x).exp_m1() / x };
            (-alpha * lo).exp() * spread
        }
        SojournLaw::Discrete { atoms } => atoms
            .iter()
            .map(|atom| atom.weight * (-alpha * atom.t).exp())
            .sum(),
    }
}

/// Right-continuous CDF of a sojourn law.
pub fn cdf_point(law: &SojournLaw, t: f64) -> f64 {
    match law {
        SojournLaw::Exponential { rate } => {
            if t <= 0.0 {
                0.0
            } else {
                -(-rate * t).exp_m1()
            }
        }
        SojournLaw::Deterministic { delay } => {
            if t >= *delay {
                1.0
            } else {
                0.0
            }
        }
        SojournLaw::Uniform { lo, hi } => ((t - lo) / (hi - lo)).clamp(0.0, 1.0),
        SojournLaw::Discrete { atoms } => atoms
            .iter()
            .take_while(|atom| atom.t <= t)
            .map(|atom| atom.weight)
            .sum::<f64>()
            .min(1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub to: usize,
    pub prob: f64,
    pub law: SojournLaw,
}

/// Cardinalities of the finite sets `K`, `S`, `A`, `B` plus flat indexing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub types: usize,
    pub states: usize,
    pub actions_p1: usize,
    pub actions_p2: usize,
}

impl Dims {
    #[inline]
    pub fn iab(&self, i: usize, a: usize, b: usize) -> usize {
        (i * self.actions_p1 + a) * self.actions_p2 + b
    }

    #[inline]
    pub fn kiab(&self, k: usize, i: usize, a: usize, b: usize) -> usize {
        k * self.states * self.actions_p1 * self.actions_p2 + self.iab(i, a, b)
    }

    #[inline]
    pub fn iabj(&self, i: usize, a: usize, b: usize, j: usize) -> usize {
        self.iab(i, a, b) * self.states + j
    }

    pub fn triples(&self) -> usize {
        self.states * self.actions_p1 * self.actions_p2
    }
}

/// The full game tuple `(K, S, A, B, p, Q, c, α)`.
///
/// Costs are a reward rate for Player 1 and a cost rate for Player 2. The
/// kernel is stored in factored form, one branch list per `(i, a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    pub types: Vec<String>,
    pub states: Vec<String>,
    pub actions_p1: Vec<String>,
    pub actions_p2: Vec<String>,
    pub alpha: f64,
    pub initial_belief: Vec<f64>,
    cost: Vec<f64>,
    transitions: Vec<Vec<Branch>>,
}

impl GameSpec {
    /// Builds a spec from labels plus cost and kernel generators.
    #[allow(clippy::too_many_arguments)]
    pub fn from_fn(
        types: Vec<String>,
        states: Vec<String>,
        actions_p1: Vec<String>,
        actions_p2: Vec<String>,
        alpha: f64,
        initial_belief: Vec<f64>,
        mut cost: impl FnMut(usize, usize, usize, usize) -> f64,
        mut kernel: impl FnMut(usize, usize, usize) -> Vec<Branch>,
    ) -> Self {
        let dims = Dims {
            types: types.len(),
            states: states.len(),
            actions_p1: actions_p1.len(),
            actions_p2: actions_p2.len(),
        };
        let mut costs = vec![0.0; dims.types * dims.triples()];
        let mut transitions = vec![Vec::new(); dims.triples()];
        for i in 0..dims.states {
            for a in 0..dims.actions_p1 {
                for b in 0..dims.actions_p2 {
                    for k in 0..dims.types {
                        costs[dims.kiab(k, i, a, b)] = cost(k, i, a, b);
                    }
                    transitions[dims.iab(i, a, b)] = kernel(i, a, b);
                }
            }
        }
        GameSpec {
            types,
            states,
            actions_p1,
            actions_p2,
            alpha,
            initial_belief,
            cost: costs,
            transitions,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            types: self.types.len(),
            states: self.states.len(),
            actions_p1: self.actions_p1.len(),
            actions_p2: self.actions_p2.len(),
        }
    }

    #[inline]
    pub fn cost(&self, k: usize, i: usize, a: usize, b: usize) -> f64 {
        self.cost[self.dims().kiab(k, i, a, b)]
    }

    pub fn set_cost(&mut self, k: usize, i: usize, a: usize, b: usize, value: f64) {
        let idx = self.dims().kiab(k, i, a, b);
        self.cost[idx] = value;
    }

    pub fn branches(&self, i: usize, a: usize, b: usize) -> &[Branch] {
        &self.transitions[self.dims().iab(i, a, b)]
    }

    pub fn branches_mut(&mut self, i: usize, a: usize, b: usize) -> &mut Vec<Branch> {
        let idx = self.dims().iab(i, a, b);
        &mut self.transitions[idx]
    }

    /// `c* = max c(k,i,a,b)`.
    pub fn cstar(&self) -> f64 {
        self.cost.iter().cloned().fold(0.0, f64::max)
    }

    /// `D(t | i,a,b) = Σ_j P(j|i,a,b) F_j(t)` with renormalised branch weights.
    pub fn sojourn_cdf(&self, i: usize, a: usize, b: usize, t: f64) -> f64 {
        let branches = self.branches(i, a, b);
        let total: f64 = branches.iter().map(|br| br.prob).sum();
        branches
            .iter()
            .map(|br| br.prob / total * cdf_point(&br.law, t))
            .sum()
    }

    /// Renormalised branch probabilities for `(i,a,b)`.
    pub fn branch_probs(&self, i: usize, a: usize, b: usize) -> Vec<f64> {
        let branches = self.branches(i, a, b);
        let total: f64 = branches.iter().map(|br| br.prob).sum();
        branches.iter().map(|br| br.prob / total).collect()
    }
}

/// One broken invariant, addressed by a path into the spec.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn violation(out: &mut Vec<Violation>, path: impl Into<String>, message: impl Into<String>) {
    out.push(Violation {
        path: path.into(),
        message: message.into(),
    });
}

/// Every invariant violation of `spec`; an empty list means valid.
pub fn validate_spec(spec: &GameSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let dims = spec.dims();
    for (name, len) in [
        ("types", dims.types),
        ("states", dims.states),
        ("actions_p1", dims.actions_p1),
        ("actions_p2", dims.actions_p2),
    ] {
        if len == 0 {
            violation(&mut out, name, "must be nonempty");
        }
    }
    if !(spec.alpha.is_finite() && spec.alpha > 0.0) {
        violation(&mut out, "alpha", format!("must be positive and finite, got {}", spec.alpha));
    }

    if spec.initial_belief.len() != dims.types {
        violation(
            &mut out,
            "initial_belief",
            format!("has {} entries for {} types", spec.initial_belief.len(), dims.types),
        );
    } else {
        for (k, &pk) in spec.initial_belief.iter().enumerate() {
            if !(pk.is_finite() && pk >= 0.0) {
                violation(&mut out, format!("initial_belief[{k}]"), format!("must be nonnegative, got {pk}"));
            }
        }
        let total: f64 = spec.initial_belief.iter().sum();
        if (total - 1.0).abs() > TOL.input_probability {
            violation(&mut out, "initial_belief", format!("sums to {total}, expected 1"));
        }
    }

    for i in 0..dims.states {
        for a in 0..dims.actions_p1 {
            for b in 0..dims.actions_p2 {
                for k in 0..dims.types {
                    let c = spec.cost(k, i, a, b);
                    if !(c.is_finite() && c >= 0.0) {
                        violation(
                            &mut out,
                            format!(
                                "cost[{}][{}][{}][{}]",
                                spec.types[k], spec.states[i], spec.actions_p1[a], spec.actions_p2[b]
                            ),
                            format!("must be nonnegative and finite, got {c}"),
                        );
                    }
                }
                let triple = format!(
                    "transitions[{},{},{}]",
                    spec.states[i], spec.actions_p1[a], spec.actions_p2[b]
                );
                let branches = spec.branches(i, a, b);
                if branches.is_empty() {
                    violation(&mut out, triple, "no branches defined");
                    continue;
                }
                let mut total = 0.0;
                for (n, br) in branches.iter().enumerate() {
                    if br.to >= dims.states {
                        violation(&mut out, format!("{triple}.branches[{n}].to"), "state index out of range");
                    }
                    if !(br.prob.is_finite() && br.prob >= 0.0) {
                        violation(
                            &mut out,
                            format!("{triple}.branches[{n}].prob"),
                            format!("must be nonnegative, got {}", br.prob),
                        );
                    }
                    total += br.prob;
                    for msg in br.law.check() {
                        violation(&mut out, format!("{triple}.branches[{n}].sojourn"), msg);
                    }
                }
                if (total - 1.0).abs() > TOL.input_probability {
                    violation(&mut out, triple, format!("branch probabilities sum to {total}, expected 1"));
                }
            }
        }
    }
    out
}

/// Per-`(i,a,b)` stage weight `m` and discounted kernel `q̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedAggregates {
    pub dims: Dims,
    /// Indexed by [`Dims::iabj`].
    pub qhat: Vec<f64>,
    /// Indexed by [`Dims::iab`].
    pub m: Vec<f64>,
    pub beta_bound: f64,
}

impl DiscountedAggregates {
    #[inline]
    pub fn qhat(&self, i: usize, a: usize, b: usize, j: usize) -> f64 {
        self.qhat[self.dims.iabj(i, a, b, j)]
    }

    #[inline]
    pub fn m(&self, i: usize, a: usize, b: usize) -> f64 {
        self.m[self.dims.iab(i, a, b)]
    }

    /// `Σ_j q̂(i,a,b,j)`.
    pub fn discount_mass(&self, i: usize, a: usize, b: usize) -> f64 {
        (0..self.dims.states).map(|j| self.qhat(i, a, b, j)).sum()
    }
}

pub fn discounted_aggregates(spec: &GameSpec) -> DiscountedAggregates {
    let dims = spec.dims();
    let mut qhat = vec![0.0; dims.triples() * dims.states];
    let mut m = vec![0.0; dims.triples()];
    let mut beta_bound: f64 = 0.0;
    for i in 0..dims.states {
        for a in 0..dims.actions_p1 {
            for b in 0..dims.actions_p2 {
                let probs = spec.branch_probs(i, a, b);
                let mut mass = 0.0;
                for (br, prob) in spec.branches(i, a, b).iter().zip(probs) {
                    let q = prob * laplace_point(&br.law, spec.alpha);
                    qhat[dims.iabj(i, a, b, br.to)] += q;
                    mass += q;
                }
                m[dims.iab(i, a, b)] = (1.0 - mass) / spec.alpha;
                beta_bound = beta_bound.max(mass);
            }
        }
    }
    DiscountedAggregates {
        dims,
        qhat,
        m,
        beta_bound,
    }
}

/// Witness `(δ, ε)` that no `(i,a,b)` finishes its sojourn by `δ` with
/// probability above `1 − ε`, and the resulting per-stage discount bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assumption1Certificate {
    pub delta: f64,
    pub epsilon: f64,
    pub beta: f64,
    /// `(i, a, b)` attaining `max D(δ | i,a,b)`.
    pub worst_pair: (usize, usize, usize),
}

/// Log grid on `[1e-3, 10]` plus every positive atom time and delay halved.
pub fn default_delta_candidates(spec: &GameSpec) -> Vec<f64> {
    let points = 60;
    let (lo, hi) = (1e-3f64.ln(), 10f64.ln());
    let mut out: Vec<f64> = (0..points)
        .map(|n| (lo + (hi - lo) * n as f64 / (points - 1) as f64).exp())
        .collect();
    let dims = spec.dims();
    for idx in 0..dims.triples() {
        for br in &spec.transitions[idx] {
            match &br.law {
                SojournLaw::Deterministic { delay } if *delay > 0.0 => out.push(delay / 2.0),
                SojournLaw::Discrete { atoms } => {
                    out.extend(atoms.iter().filter(|at| at.t > 0.0).map(|at| at.t / 2.0))
                }
                _ => {}
            }
        }
    }
    out.sort_by(|x, y| x.total_cmp(y));
    out.dedup();
    out
}

pub fn certify_assumption1(spec: &GameSpec, delta_candidates: &[f64]) -> Result<Assumption1Certificate> {
    let dims = spec.dims();
    let mut best: Option<Assumption1Certificate> = None;
    for &delta in delta_candidates {
        if !(delta.is_finite() && delta > 0.0) {
            continue;
        }
        let mut worst = (0, 0, 0);
        let mut worst_d = f64::NEG_INFINITY;
        for i in 0..dims.states {
            for a in 0..dims.actions_p1 {
                for b in 0..dims.actions_p2 {
                    let d = spec.sojourn_cdf(i, a, b, delta);
                    if d > worst_d {
                        worst_d = d;
                        worst = (i, a, b);
                    }
                }
            }
        }
        let epsilon = 1.0 - worst_d;
        if epsilon <= 0.0 {
            continue;
        }
        let beta = 1.0 - epsilon * (1.0 - (-spec.alpha * delta).exp());
        if best.is_none_or(|c| beta < c.beta) {
            best = Some(Assumption1Certificate {
                delta,
                epsilon,
                beta,
                worst_pair: worst,
            });
        }
    }
    best.ok_or(Error::CertificationFailed)
}

//! Belief-simplex arithmetic: the Bayes operator, the joint-mix
//! reparameterisation `φ(k,a) = p_k μ^{(k)}(a)`, and simplex grids.

use serde::{Deserialize, Serialize};

/// A probability vector over the game types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief(pub Vec<f64>);

impl Belief {
    pub fn new(p: Vec<f64>) -> Self {
        Belief(p)
    }

    pub fn uniform(dim: usize) -> Self {
        Belief(vec![1.0 / dim as f64; dim])
    }

    pub fn vertex(dim: usize, k: usize) -> Self {
        let mut p = vec![0.0; dim];
        p[k] = 1.0;
        Belief(p)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.0.iter().all(|&x| x >= -tol && x.is_finite())
            && (self.0.iter().sum::<f64>() - 1.0).abs() <= tol
    }

    pub fn l1_distance(&self, other: &Belief) -> f64 {
        self.0.iter().zip(&other.0).map(|(x, y)| (x - y).abs()).sum()
    }

    /// Hashable bit pattern, used for memo tables keyed on exact beliefs.
    pub fn key(&self) -> Vec<u64> {
        self.0.iter().map(|x| x.to_bits()).collect()
    }
}

/// Result of a Bayes update; `on_support` is false when the observed action
/// had zero probability and the prior was returned unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub belief: Belief,
    pub on_support: bool,
}

/// Player 1's stage profile `μ^{(k)}(·|i)` for a fixed state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMixP1(pub Vec<Vec<f64>>);

impl StageMixP1 {
    pub fn uniform(types: usize, actions: usize) -> Self {
        StageMixP1(vec![vec![1.0 / actions as f64; actions]; types])
    }

    /// Same mix for every type.
    pub fn non_revealing(mix: Vec<f64>, types: usize) -> Self {
        StageMixP1(vec![mix; types])
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.0[k]
    }

    pub fn prob(&self, k: usize, a: usize) -> f64 {
        self.0[k][a]
    }

    pub fn actions(&self) -> usize {
        self.0.first().map_or(0, Vec::len)
    }
}

/// Player 2's stage mix `ν(·|i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMixP2(pub Vec<f64>);

impl StageMixP2 {
    pub fn uniform(actions: usize) -> Self {
        StageMixP2(vec![1.0 / actions as f64; actions])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Joint mass `φ(k,a)` over `K × A`, stored row-major by type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointMix {
    pub types: usize,
    pub actions: usize,
    pub phi: Vec<f64>,
}

impl JointMix {
    #[inline]
    pub fn get(&self, k: usize, a: usize) -> f64 {
        self.phi[k * self.actions + a]
    }

    /// The unnormalised column `φ(·, a)`.
    pub fn column(&self, a: usize) -> Vec<f64> {
        (0..self.types).map(|k| self.get(k, a)).collect()
    }

    pub fn total(&self) -> f64 {
        self.phi.iter().sum()
    }
}

/// `Λ_{μ,a}(p)`.
pub fn posterior_update(p: &Belief, mu: &StageMixP1, a: usize) -> Posterior {
    let weights: Vec<f64> = p.0.iter().enumerate().map(|(k, pk)| pk * mu.prob(k, a)).collect();
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        Posterior {
            belief: Belief(weights.into_iter().map(|w| w / total).collect()),
            on_support: true,
        }
    } else {
        Posterior {
            belief: p.clone(),
            on_support: false,
        }
    }
}

/// `χ_a(φ)`: the type conditional of column `a`; uniform when the column is empty.
pub fn chi(phi: &JointMix, a: usize) -> Posterior {
    let col = phi.column(a);
    let total: f64 = col.iter().sum();
    if total > 0.0 {
        Posterior {
            belief: Belief(col.into_iter().map(|x| x / total).collect()),
            on_support: true,
        }
    } else {
        Posterior {
            belief: Belief::uniform(phi.types),
            on_support: false,
        }
    }
}

pub fn joint_from(p: &Belief, mu: &StageMixP1) -> JointMix {
    let types = p.dim();
    let actions = mu.actions();
    let mut phi = Vec::with_capacity(types * actions);
    for k in 0..types {
        for a in 0..actions {
            phi.push(p.0[k] * mu.prob(k, a));
        }
    }
    JointMix { types, actions, phi }
}

/// Type marginal and per-type conditional of `φ`; types with no mass get the
/// uniform action mix.
pub fn conditional_from(phi: &JointMix) -> (Belief, StageMixP1) {
    let mut p = Vec::with_capacity(phi.types);
    let mut mu = Vec::with_capacity(phi.types);
    for k in 0..phi.types {
        let row = &phi.phi[k * phi.actions..(k + 1) * phi.actions];
        let mass: f64 = row.iter().sum();
        p.push(mass);
        if mass > 0.0 {
            mu.push(row.iter().map(|x| x / mass).collect());
        } else {
            mu.push(vec![1.0 / phi.actions as f64; phi.actions]);
        }
    }
    (Belief(p), StageMixP1(mu))
}

/// Every point of `Δ(K)` with coordinates in `{0, 1/m, ..., 1}`, in
/// lexicographic order of the integer numerators.
pub fn simplex_grid(dim: usize, mesh: usize) -> Vec<Belief> {
    assert!(dim >= 1 && mesh >= 1);
    let mut out = Vec::new();
    let mut counts = vec![0usize; dim];
    fill_grid(0, mesh, &mut counts, mesh, &mut out);
    out
}

fn fill_grid(pos: usize, remaining: usize, counts: &mut Vec<usize>, mesh: usize, out: &mut Vec<Belief>) {
    let dim = counts.len();
    if pos == dim - 1 {
        counts[pos] = remaining;
        out.push(Belief(counts.iter().map(|&c| c as f64 / mesh as f64).collect()));
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        fill_grid(pos + 1, remaining - c, counts, mesh, out);
    }
}

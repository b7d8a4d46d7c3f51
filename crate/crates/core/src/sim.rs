//! Seeded trajectory simulation of the game under a pair of engines.
//!
//! Every episode draws from its own ChaCha8 stream, selected by the episode
//! index, so a `(seed, episode)` pair fixes the trajectory regardless of
//! how episodes are scheduled across threads.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{StageMixP1, StageMixP2};
use crate::error::{Error, Result};
use crate::model::{GameSpec, SojournLaw};

/// One realised epoch as seen by both players: state, both actions, next state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub a: usize,
    pub b: usize,
    pub next: usize,
}

/// A Player 1 policy driven by the public history. The realised type stays
/// with the caller; `decide` returns the whole per-type profile.
pub trait InformedEngine: Clone + Send {
    fn decide(&mut self, i: usize) -> Result<StageMixP1>;
    fn observe(&mut self, step: &Step) -> Result<()>;
    /// Exact identity of the Markov state, for memo tables.
    fn memo_key(&self) -> Vec<u64>;
}

pub trait UninformedEngine: Clone + Send {
    fn decide(&mut self, i: usize) -> Result<StageMixP2>;
    fn observe(&mut self, step: &Step) -> Result<()>;
    fn memo_key(&self) -> Vec<u64>;
}

/// Plays the same profile in every state.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedP1(pub StageMixP1);

impl InformedEngine for FixedP1 {
    fn decide(&mut self, _i: usize) -> Result<StageMixP1> {
        Ok(self.0.clone())
    }

    fn observe(&mut self, _step: &Step) -> Result<()> {
        Ok(())
    }

    fn memo_key(&self) -> Vec<u64> {
        Vec::new()
    }
}

/// Plays the same mix in every state.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedP2(pub StageMixP2);

impl UninformedEngine for FixedP2 {
    fn decide(&mut self, _i: usize) -> Result<StageMixP2> {
        Ok(self.0.clone())
    }

    fn observe(&mut self, _step: &Step) -> Result<()> {
        Ok(())
    }

    fn memo_key(&self) -> Vec<u64> {
        Vec::new()
    }
}

pub fn sample_sojourn<R: Rng + ?Sized>(law: &SojournLaw, rng: &mut R) -> f64 {
    match law {
        SojournLaw::Exponential { rate } => -(1.0 - rng.gen::<f64>()).ln() / rate,
        SojournLaw::Deterministic { delay } => *delay,
        SojournLaw::Uniform { lo, hi } => lo + rng.gen::<f64>() * (hi - lo),
        SojournLaw::Discrete { atoms } => {
            let weights: Vec<f64> = atoms.iter().map(|at| at.weight).collect();
            atoms[sample_index(&weights, rng)].t
        }
    }
}

/// Inverse-CDF draw from nonnegative weights; the sum need not be exactly 1.
pub fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (n, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = n;
        if u < acc {
            return n;
        }
    }
    last
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub max_epochs: usize,
    /// Stop once `c* e^{−αT}/α` drops below this.
    pub residual: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation {
            max_epochs: 100_000,
            residual: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub kappa: usize,
    /// Decision epochs `T_0 = 0, T_1, ...`, one more entry than actions.
    pub times: Vec<f64>,
    pub states: Vec<usize>,
    pub actions_p1: Vec<usize>,
    pub actions_p2: Vec<usize>,
    pub payoff: f64,
    pub epochs: usize,
    /// Upper bound on the reward omitted by truncation.
    pub residual: f64,
}

/// Plays one episode from state `i0`; `kappa` overrides the type draw.
#[allow(clippy::too_many_arguments)]
pub fn simulate_episode<P: InformedEngine, Q: UninformedEngine, R: Rng + ?Sized>(
    spec: &GameSpec,
    p1: &mut P,
    p2: &mut Q,
    rng: &mut R,
    trunc: &Truncation,
    i0: usize,
    kappa: Option<usize>,
) -> Result<TrajectoryRecord> {
    let dims = spec.dims();
    if trunc.max_epochs == 0 || i0 >= dims.states {
        return Err(Error::Protocol("episode needs a positive epoch cap and a valid start state".into()));
    }
    let kappa = kappa.unwrap_or_else(|| sample_index(&spec.initial_belief, rng));
    let alpha = spec.alpha;
    let cstar = spec.cstar();
    let mut rec = TrajectoryRecord {
        kappa,
        times: vec![0.0],
        states: vec![i0],
        actions_p1: Vec::new(),
        actions_p2: Vec::new(),
        payoff: 0.0,
        epochs: 0,
        residual: cstar / alpha,
    };
    let mut t = 0.0f64;
    let mut i = i0;
    while rec.residual >= trunc.residual && rec.epochs < trunc.max_epochs {
        let mu = p1.decide(i)?;
        let nu = p2.decide(i)?;
        let a = sample_index(mu.row(kappa), rng);
        let b = sample_index(nu.as_slice(), rng);
        let branches = spec.branches(i, a, b);
        let probs = spec.branch_probs(i, a, b);
        let br = &branches[sample_index(&probs, rng)];
        let tau = sample_sojourn(&br.law, rng);
        let next_t = t + tau;
        rec.payoff += spec.cost(kappa, i, a, b) * ((-alpha * t).exp() - (-alpha * next_t).exp()) / alpha;
        let step = Step {
            state: i,
            a,
            b,
            next: br.to,
        };
        p1.observe(&step)?;
        p2.observe(&step)?;
        rec.actions_p1.push(a);
        rec.actions_p2.push(b);
        rec.times.push(next_t);
        rec.states.push(br.to);
        rec.epochs += 1;
        t = next_t;
        i = br.to;
        rec.residual = cstar * (-alpha * t).exp() / alpha;
    }
    Ok(rec)
}

/// The generator for episode `episode` under `seed`.
pub fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub episodes: usize,
    pub mean: f64,
    pub stderr: f64,
    pub max_residual: f64,
    pub mean_epochs: f64,
}

/// Runs every episode from fresh engine copies and returns the records in episode order.
#[allow(clippy::too_many_arguments)]
pub fn simulate_many<P: InformedEngine + Sync, Q: UninformedEngine + Sync>(
    spec: &GameSpec,
    p1: &P,
    p2: &Q,
    episodes: usize,
    seed: u64,
    trunc: &Truncation,
    i0: usize,
    kappa: Option<usize>,
) -> Result<Vec<TrajectoryRecord>> {
    (0..episodes)
        .into_par_iter()
        .map(|e| {
            let mut rng = episode_rng(seed, e as u64);
            simulate_episode(spec, &mut p1.clone(), &mut p2.clone(), &mut rng, trunc, i0, kappa)
        })
        .collect()
}

pub fn summarize(records: &[TrajectoryRecord]) -> MonteCarloSummary {
    let n = records.len() as f64;
    let mean = records.iter().map(|r| r.payoff).sum::<f64>() / n;
    let var = if records.len() > 1 {
        records.iter().map(|r| (r.payoff - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    MonteCarloSummary {
        episodes: records.len(),
        mean,
        stderr: (var / n).sqrt(),
        max_residual: records.iter().map(|r| r.residual).fold(0.0, f64::max),
        mean_epochs: records.iter().map(|r| r.epochs as f64).sum::<f64>() / n,
    }
}

#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_value<P: InformedEngine + Sync, Q: UninformedEngine + Sync>(
    spec: &GameSpec,
    p1: &P,
    p2: &Q,
    episodes: usize,
    seed: u64,
    trunc: &Truncation,
    i0: usize,
    kappa: Option<usize>,
) -> Result<MonteCarloSummary> {
    if episodes < 2 {
        return Err(Error::Protocol("Monte Carlo needs at least two episodes".into()));
    }
    let records = simulate_many(spec, p1, p2, episodes, seed, trunc, i0, kappa)?;
    Ok(summarize(&records))
}

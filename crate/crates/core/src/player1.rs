//! The informed player's policy: solve the stage saddle at the current
//! public belief, play the realised type's row, then update the belief by
//! Bayes' rule on the observed action.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::belief::{posterior_update, Belief, StageMixP1};
use crate::error::{Error, Result};
use crate::model::{DiscountedAggregates, GameSpec};
use crate::sim::{InformedEngine, Step};
use crate::value::{stage_backup, ConcaveEnvelope, StageSaddle};

/// Shared stage-saddle cache over a solved envelope. Saddles are pure
/// functions of `(i, q)`, so engines for different episodes can share one.
#[derive(Debug)]
pub struct P1Policy {
    spec: Arc<GameSpec>,
    agg: Arc<DiscountedAggregates>,
    env: Arc<ConcaveEnvelope>,
    cache: Mutex<HashMap<(usize, Vec<u64>), Arc<StageSaddle>>>,
}

impl P1Policy {
    pub fn new(spec: Arc<GameSpec>, agg: Arc<DiscountedAggregates>, env: Arc<ConcaveEnvelope>) -> Self {
        P1Policy {
            spec,
            agg,
            env,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn spec(&self) -> &GameSpec {
        &self.spec
    }

    pub fn saddle(&self, q: &Belief, i: usize) -> Result<Arc<StageSaddle>> {
        let key = (i, q.key());
        if let Some(s) = self.cache.lock().unwrap().get(&key) {
            return Ok(s.clone());
        }
        let s = Arc::new(stage_backup(q, i, &self.env, &self.agg, &self.spec)?);
        Ok(self.cache.lock().unwrap().entry(key).or_insert(s).clone())
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().unwrap().len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P1TraceRecord {
    pub n: usize,
    pub state: usize,
    pub belief: Vec<f64>,
    pub mu: Vec<Vec<f64>>,
    pub value: f64,
    pub action: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct P1Engine {
    policy: Arc<P1Policy>,
    belief: Belief,
    epoch: usize,
    pending: Option<(usize, Arc<StageSaddle>)>,
    trace: Option<Vec<P1TraceRecord>>,
}

impl P1Engine {
    pub fn new(policy: Arc<P1Policy>, initial: Belief) -> Self {
        P1Engine {
            policy,
            belief: initial,
            epoch: 0,
            pending: None,
            trace: None,
        }
    }

    /// Starts from the spec's prior.
    pub fn from_prior(policy: Arc<P1Policy>) -> Self {
        let p = Belief::new(policy.spec.initial_belief.clone());
        Self::new(policy, p)
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn trace(&self) -> &[P1TraceRecord] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Stage saddle at the current belief; its `mu_star` is the profile played.
    pub fn decide_saddle(&mut self, i: usize) -> Result<Arc<StageSaddle>> {
        let s = self.policy.saddle(&self.belief, i)?;
        if let Some(trace) = &mut self.trace {
            trace.push(P1TraceRecord {
                n: self.epoch,
                state: i,
                belief: self.belief.0.clone(),
                mu: s.mu_star.0.clone(),
                value: s.value,
                action: None,
            });
        }
        self.pending = Some((i, s.clone()));
        Ok(s)
    }

    pub fn decide(&mut self, i: usize) -> Result<StageMixP1> {
        Ok(self.decide_saddle(i)?.mu_star.clone())
    }

    /// Bayes update on Player 1's action at state `i`.
    pub fn observe(&mut self, i: usize, a: usize) -> Result<Belief> {
        let Some((state, s)) = self.pending.take() else {
            return Err(Error::Protocol(format!("observe at epoch {} without a decision", self.epoch)));
        };
        if state != i {
            return Err(Error::Protocol(format!("decided at state {state} but observed state {i}")));
        }
        if a >= s.mu_star.actions() {
            return Err(Error::Protocol(format!("action {a} out of range")));
        }
        self.belief = posterior_update(&self.belief, &s.mu_star, a).belief;
        if let Some(last) = self.trace.as_mut().and_then(|t| t.last_mut()) {
            last.action = Some(a);
        }
        self.epoch += 1;
        Ok(self.belief.clone())
    }
}

impl InformedEngine for P1Engine {
    fn decide(&mut self, i: usize) -> Result<StageMixP1> {
        P1Engine::decide(self, i)
    }

    fn observe(&mut self, step: &Step) -> Result<()> {
        P1Engine::observe(self, step.state, step.a).map(|_| ())
    }

    fn memo_key(&self) -> Vec<u64> {
        self.belief.key()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::discounted_aggregates;

    fn engine_for(spec: GameSpec, env: ConcaveEnvelope, p: Vec<f64>) -> P1Engine {
        let agg = discounted_aggregates(&spec);
        let policy = P1Policy::new(Arc::new(spec), Arc::new(agg), Arc::new(env));
        P1Engine::new(Arc::new(policy), Belief::new(p))
    }

    #[test]
    fn type_independent_costs_give_belief_independent_values() {
        let spec = fixtures::constant_cost(0.9);
        let env = ConcaveEnvelope::from_cuts(2, vec![vec![vec![0.9, 0.9]]]).unwrap();
        let mut e1 = engine_for(spec.clone(), env.clone(), vec![0.3, 0.7]);
        let mut e2 = engine_for(spec, env, vec![0.7, 0.3]);
        let v1 = e1.decide_saddle(0).unwrap().value;
        let v2 = e2.decide_saddle(0).unwrap().value;
        assert!((v1 - v2).abs() < 1e-8);
    }

    #[test]
    fn observe_requires_a_decision() {
        let spec = fixtures::desk_one_state();
        let mut e = engine_for(spec, ConcaveEnvelope::zero(2, 1), vec![0.5, 0.5]);
        assert!(matches!(e.observe(0, 0), Err(Error::Protocol(_))));
        e.decide(0).unwrap();
        e.observe(0, 0).unwrap();
        assert!(matches!(e.observe(0, 0), Err(Error::Protocol(_))));
    }

    #[test]
    fn non_revealing_play_keeps_the_belief() {
        let spec = fixtures::constant_cost(1.0);
        let mut e = engine_for(spec, ConcaveEnvelope::zero(2, 1), vec![0.3, 0.7]);
        let mu = e.decide(0).unwrap();
        if (mu.prob(0, 0) - mu.prob(1, 0)).abs() < 1e-12 {
            assert_eq!(e.observe(0, 0).unwrap(), Belief::new(vec![0.3, 0.7]));
        }
    }

    #[test]
    fn beliefs_follow_the_product_form() {
        let spec = fixtures::desk_two_state();
        let env = ConcaveEnvelope::from_cuts(
            2,
            vec![vec![vec![0.2, 1.4], vec![1.1, 0.3]], vec![vec![0.9, 0.4], vec![0.5, 0.8]]],
        )
        .unwrap();
        let p = vec![0.35, 0.65];
        let mut e = engine_for(spec, env, p.clone());
        let mut weights = p.clone();
        let path = [(0usize, 0usize), (1, 1), (0, 1), (1, 0)];
        for &(i, a) in &path {
            let mu = e.decide(i).unwrap();
            let pa: f64 = (0..2).map(|k| e.belief().0[k] * mu.prob(k, a)).sum();
            if pa == 0.0 {
                break;
            }
            for k in 0..2 {
                weights[k] *= mu.prob(k, a);
            }
            let q = e.observe(i, a).unwrap();
            let total: f64 = weights.iter().sum();
            for k in 0..2 {
                assert!((q.0[k] - weights[k] / total).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn trace_records_decisions_and_actions() {
        let spec = fixtures::desk_one_state();
        let mut e = engine_for(spec, ConcaveEnvelope::zero(2, 1), vec![0.5, 0.5]).with_trace();
        e.decide(0).unwrap();
        e.observe(0, 1).unwrap();
        e.decide(0).unwrap();
        assert_eq!(e.trace().len(), 2);
        assert_eq!(e.trace()[0].action, Some(1));
        assert_eq!(e.trace()[1].action, None);
    }
}

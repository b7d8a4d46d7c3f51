//! Game documents and solution files in JSON; value tables in CSV.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::belief::Belief;
use crate::error::{Error, Result};
use crate::model::{Branch, GameSpec, SojournLaw};
use crate::value::{ConcaveEnvelope, SolveReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameDocument {
    pub types: Vec<String>,
    pub states: Vec<String>,
    pub actions_p1: Vec<String>,
    pub actions_p2: Vec<String>,
    pub alpha: f64,
    pub initial_belief: Vec<f64>,
    /// `cost[k][i][a][b]`, ordered by the label lists.
    pub cost: Vec<Vec<Vec<Vec<f64>>>>,
    pub transitions: Vec<TransitionDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionDoc {
    pub from: String,
    pub a1: String,
    pub a2: String,
    pub branches: Vec<BranchDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchDoc {
    pub to: String,
    pub prob: f64,
    pub sojourn: SojournLaw,
}

fn resolver<'a>(what: &'a str, labels: &'a [String]) -> Result<impl Fn(&str) -> Result<usize> + 'a> {
    let mut map = HashMap::new();
    for (n, l) in labels.iter().enumerate() {
        if map.insert(l.as_str(), n).is_some() {
            return Err(Error::Document(format!("duplicate {what} label {l:?}")));
        }
    }
    Ok(move |l: &str| {
        map.get(l)
            .copied()
            .ok_or_else(|| Error::Document(format!("unknown {what} label {l:?}")))
    })
}

/// Resolves labels and builds the spec. Structural mistakes (unknown
/// labels, ragged cost arrays, repeated triples) are document errors;
/// value-level problems are left for [`crate::model::validate_spec`].
pub fn document_to_spec(doc: &GameDocument) -> Result<GameSpec> {
    let state = resolver("state", &doc.states)?;
    let act1 = resolver("Player 1 action", &doc.actions_p1)?;
    let act2 = resolver("Player 2 action", &doc.actions_p2)?;
    let _types = resolver("type", &doc.types)?;
    let (nk, ns, na, nb) = (doc.types.len(), doc.states.len(), doc.actions_p1.len(), doc.actions_p2.len());
    if doc.cost.len() != nk
        || doc.cost.iter().any(|c| {
            c.len() != ns || c.iter().any(|ci| ci.len() != na || ci.iter().any(|row| row.len() != nb))
        })
    {
        return Err(Error::Document(format!("cost must be a {nk}x{ns}x{na}x{nb} array")));
    }
    let mut kernel: HashMap<(usize, usize, usize), Vec<Branch>> = HashMap::new();
    for t in &doc.transitions {
        let key = (state(&t.from)?, act1(&t.a1)?, act2(&t.a2)?);
        let branches = t
            .branches
            .iter()
            .map(|b| {
                Ok(Branch {
                    to: state(&b.to)?,
                    prob: b.prob,
                    law: b.sojourn.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if kernel.insert(key, branches).is_some() {
            return Err(Error::Document(format!(
                "transition ({}, {}, {}) listed twice",
                t.from, t.a1, t.a2
            )));
        }
    }
    Ok(GameSpec::from_fn(
        doc.types.clone(),
        doc.states.clone(),
        doc.actions_p1.clone(),
        doc.actions_p2.clone(),
        doc.alpha,
        doc.initial_belief.clone(),
        |k, i, a, b| doc.cost[k][i][a][b],
        |i, a, b| kernel.remove(&(i, a, b)).unwrap_or_default(),
    ))
}

pub fn spec_to_document(spec: &GameSpec) -> GameDocument {
    let d = spec.dims();
    let cost = (0..d.types)
        .map(|k| {
            (0..d.states)
                .map(|i| {
                    (0..d.actions_p1)
                        .map(|a| (0..d.actions_p2).map(|b| spec.cost(k, i, a, b)).collect())
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut transitions = Vec::new();
    for i in 0..d.states {
        for a in 0..d.actions_p1 {
            for b in 0..d.actions_p2 {
                transitions.push(TransitionDoc {
                    from: spec.states[i].clone(),
                    a1: spec.actions_p1[a].clone(),
                    a2: spec.actions_p2[b].clone(),
                    branches: spec
                        .branches(i, a, b)
                        .iter()
                        .map(|br| BranchDoc {
                            to: spec.states[br.to].clone(),
                            prob: br.prob,
                            sojourn: br.law.clone(),
                        })
                        .collect(),
                });
            }
        }
    }
    GameDocument {
        types: spec.types.clone(),
        states: spec.states.clone(),
        actions_p1: spec.actions_p1.clone(),
        actions_p2: spec.actions_p2.clone(),
        alpha: spec.alpha,
        initial_belief: spec.initial_belief.clone(),
        cost,
        transitions,
    }
}

pub fn parse_spec(text: &str) -> Result<GameSpec> {
    let doc: GameDocument = serde_json::from_str(text).map_err(|e| Error::Document(e.to_string()))?;
    document_to_spec(&doc)
}

pub fn load_spec(path: &Path) -> Result<GameSpec> {
    parse_spec(&std::fs::read_to_string(path)?)
}

pub fn spec_to_json(spec: &GameSpec) -> String {
    serde_json::to_string_pretty(&spec_to_document(spec)).expect("game documents always serialise")
}

/// SHA-256 of the canonical compact JSON encoding, as lowercase hex.
pub fn spec_digest(spec: &GameSpec) -> String {
    let canonical = serde_json::to_vec(&spec_to_document(spec)).expect("game documents always serialise");
    Sha256::digest(&canonical).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub spec_digest: String,
    pub mesh: usize,
    pub iterations: usize,
    pub beta: f64,
    pub tail_bound: f64,
    pub last_change: f64,
    pub stop_tol: f64,
    pub alpha: f64,
    pub cstar: f64,
    /// `cuts[state][n]` is one gradient vector over types.
    pub cuts: Vec<Vec<Vec<f64>>>,
}

impl SolutionFile {
    pub fn from_report(spec: &GameSpec, report: &SolveReport) -> Self {
        let env = &report.envelopes;
        SolutionFile {
            spec_digest: spec_digest(spec),
            mesh: report.mesh,
            iterations: report.iterations,
            beta: report.beta,
            tail_bound: report.tail_bound,
            last_change: report.last_change,
            stop_tol: report.stop_tol,
            alpha: report.alpha,
            cstar: report.cstar,
            cuts: (0..env.states()).map(|j| env.cuts(j).to_vec()).collect(),
        }
    }

    pub fn envelope(&self, types: usize) -> Result<ConcaveEnvelope> {
        ConcaveEnvelope::from_cuts(types, self.cuts.clone())
    }

    /// Fails unless the solution was produced for exactly this spec.
    pub fn check_digest(&self, spec: &GameSpec) -> Result<()> {
        let digest = spec_digest(spec);
        if digest != self.spec_digest {
            return Err(Error::Document(format!(
                "solution was computed for spec {} but this spec hashes to {}",
                self.spec_digest, digest
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Document(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// `belief,state,value` rows with belief coordinates joined by `;`.
pub fn values_csv(env: &ConcaveEnvelope, spec: &GameSpec, grid: &[Belief]) -> String {
    let mut out = String::from("belief,state,value\n");
    for i in 0..env.states() {
        for p in grid {
            let coords: Vec<String> = p.0.iter().map(|x| format!("{x}")).collect();
            let _ = writeln!(out, "{},{},{}", coords.join(";"), spec.states[i], env.eval(p, i));
        }
    }
    out
}

//! Evidential reasoning: per-node posteriors as prior odds times a product
//! of likelihood ratios, one per observed finding.
//!
//! Each node is scored independently against "not this node", with
//! P(finding | not node) approximated by the finding's leak. Log-LRs are
//! summed in finding-id order so the result does not depend on the order
//! in which evidence arrived.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidence::{EvidenceState, FindingState};
use crate::model::{FindingIx, KnowledgeBase, NodeIx, NodeKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReasonError {
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("unknown finding {0:?}")]
    UnknownFinding(String),
    #[error("node {0:?} has no prior")]
    MissingPrior(String),
    #[error("context attribute names must be non-empty")]
    EmptyAttribute,
}

impl ReasonError {
    pub fn code(&self) -> &'static str {
        match self {
            ReasonError::UnknownNode(_) => "UNKNOWN_NODE",
            ReasonError::UnknownFinding(_) => "UNKNOWN_FINDING",
            ReasonError::MissingPrior(_) => "MISSING_PRIOR",
            ReasonError::EmptyAttribute => "EMPTY_ATTRIBUTE",
        }
    }
}

/// Observed states indexed by [`FindingIx`].
pub type Observations = Vec<Option<FindingState>>;

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary Shannon entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * p.ln();
    }
    if p < 1.0 {
        h -= (1.0 - p) * (1.0 - p).ln();
    }
    h
}

pub fn index_evidence(kb: &KnowledgeBase, evidence: &EvidenceState) -> Result<Observations, ReasonError> {
    let mut obs = vec![None; kb.findings().len()];
    for (id, state) in &evidence.finding_states {
        let f = kb
            .finding_ix(id)
            .ok_or_else(|| ReasonError::UnknownFinding(id.clone()))?;
        obs[f.0] = Some(*state);
    }
    if evidence.context.keys().any(|k| k.trim().is_empty()) {
        return Err(ReasonError::EmptyAttribute);
    }
    Ok(obs)
}

fn node_ix(kb: &KnowledgeBase, id: &str) -> Result<NodeIx, ReasonError> {
    kb.node_ix(id).ok_or_else(|| ReasonError::UnknownNode(id.to_string()))
}

pub(crate) fn lr_ix(kb: &KnowledgeBase, node: NodeIx, finding: FindingIx, state: FindingState) -> f64 {
    match kb.sensitivity(node, finding) {
        None => 1.0,
        Some(s) => {
            let l = kb.finding(finding).leak;
            match state {
                FindingState::Present => s / l,
                FindingState::Absent => (1.0 - s) / (1.0 - l),
            }
        }
    }
}

pub(crate) fn log_odds_ix(kb: &KnowledgeBase, node: NodeIx, obs: &[Option<FindingState>]) -> Option<f64> {
    let entry = kb.node(node);
    let mut lo = logit(entry.prior?);
    for &f in entry.links.keys() {
        if let Some(state) = obs[f.0] {
            lo += lr_ix(kb, node, f, state).ln();
        }
    }
    Some(lo)
}

pub fn likelihood_ratio(
    kb: &KnowledgeBase,
    node: &str,
    finding: &str,
    state: FindingState,
) -> Result<f64, ReasonError> {
    let n = node_ix(kb, node)?;
    let f = kb
        .finding_ix(finding)
        .ok_or_else(|| ReasonError::UnknownFinding(finding.to_string()))?;
    Ok(lr_ix(kb, n, f, state))
}

/// Posterior log-odds of `node` given the evidence.
pub fn posterior_log_odds(
    kb: &KnowledgeBase,
    node: &str,
    evidence: &EvidenceState,
) -> Result<f64, ReasonError> {
    let n = node_ix(kb, node)?;
    let obs = index_evidence(kb, evidence)?;
    log_odds_ix(kb, n, &obs).ok_or_else(|| ReasonError::MissingPrior(node.to_string()))
}

pub fn posterior(kb: &KnowledgeBase, node: &str, evidence: &EvidenceState) -> Result<f64, ReasonError> {
    posterior_log_odds(kb, node, evidence).map(logistic)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PosteriorTable {
    pub entries: BTreeMap<String, f64>,
}

impl PosteriorTable {
    pub fn get(&self, node: &str) -> Option<f64> {
        self.entries.get(node).copied()
    }
}

/// Posteriors for every node that carries a prior.
pub fn posterior_table(kb: &KnowledgeBase, evidence: &EvidenceState) -> Result<PosteriorTable, ReasonError> {
    let obs = index_evidence(kb, evidence)?;
    let entries = (0..kb.nodes().len())
        .filter_map(|i| {
            let n = NodeIx(i);
            log_odds_ix(kb, n, &obs).map(|lo| (kb.node(n).id.clone(), logistic(lo)))
        })
        .collect();
    Ok(PosteriorTable { entries })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedNode {
    pub node_id: String,
    pub posterior: f64,
}

/// Disorders ordered by posterior, highest first, ties by id.
pub fn rank_disorders(kb: &KnowledgeBase, table: &PosteriorTable) -> Vec<RankedNode> {
    let mut ranked: Vec<RankedNode> = kb
        .disorders()
        .iter()
        .filter_map(|&d| {
            let id = &kb.node(d).id;
            table.get(id).map(|p| RankedNode {
                node_id: id.clone(),
                posterior: p,
            })
        })
        .collect();
    sort_ranking(&mut ranked);
    ranked
}

pub(crate) fn sort_ranking(ranked: &mut [RankedNode]) {
    ranked.sort_by(|a, b| {
        b.posterior
            .total_cmp(&a.posterior)
            .then_with(|| a.node_id.cmp(&b.node_id))
    });
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationEntry {
    pub finding_id: String,
    pub state: FindingState,
    pub likelihood_ratio: f64,
    pub log_lr: f64,
}

/// Per-finding contributions to a node's posterior, largest |log LR| first.
///
/// `logit(prior) + sum(log_lr)` equals [`posterior_log_odds`].
pub fn explain(
    kb: &KnowledgeBase,
    node: &str,
    evidence: &EvidenceState,
) -> Result<Vec<ExplanationEntry>, ReasonError> {
    let n = node_ix(kb, node)?;
    index_evidence(kb, evidence)?;
    if kb.node(n).prior.is_none() {
        return Err(ReasonError::MissingPrior(node.to_string()));
    }
    let mut entries: Vec<ExplanationEntry> = evidence
        .finding_states
        .iter()
        .map(|(id, &state)| {
            let f = kb.finding_ix(id).expect("checked by index_evidence");
            let lr = lr_ix(kb, n, f, state);
            ExplanationEntry {
                finding_id: id.clone(),
                state,
                likelihood_ratio: lr,
                log_lr: lr.ln(),
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        b.log_lr
            .abs()
            .total_cmp(&a.log_lr.abs())
            .then_with(|| a.finding_id.cmp(&b.finding_id))
    });
    Ok(entries)
}

/// Clamped prior of a node, or `MissingPrior`.
pub fn prior(kb: &KnowledgeBase, node: &str) -> Result<f64, ReasonError> {
    let n = node_ix(kb, node)?;
    kb.node(n)
        .prior
        .ok_or_else(|| ReasonError::MissingPrior(node.to_string()))
}

pub fn is_disorder(kb: &KnowledgeBase, node: &str) -> bool {
    kb.node_ix(node)
        .map(|n| kb.node(n).kind == NodeKind::Disorder)
        .unwrap_or(false)
}

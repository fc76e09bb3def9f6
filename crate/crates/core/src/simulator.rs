//! Synthetic ground truth under a noisy-OR world, and agreement of the
//! engine against it.
//!
//! The world model is deliberately richer than the engine's: disorders
//! co-occur independently and every present cause can produce a finding.
//! Agreement numbers therefore measure the gap between the two models.
//!
//! # Stream derivation
//!
//! Case `i` of a run seeded with `seed` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` with its stream set to `i`. Each case
//! owns an independent stream, so any prefix or subset of a case list can be
//! regenerated on its own and generation order does not matter.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ConfigOverrides;
use crate::cycle::{run_auto, start_session, Resolution, SessionError};
use crate::evidence::{EvidenceState, FindingState, Scalar};
use crate::model::{to_sorted_json, KnowledgeBase};

pub const MAX_REJECTIONS: u32 = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("no case with a present disorder after {0} attempts")]
    GenerationStuck(u32),
    #[error("n_cases must be at least 1")]
    NoCases,
    #[error("case {case_id}: {message}")]
    BadCase { case_id: String, message: String },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

impl SimError {
    pub fn code(&self) -> &'static str {
        match self {
            SimError::GenerationStuck(_) => "GENERATION_STUCK",
            SimError::NoCases => "INPUT_EMPTY",
            SimError::BadCase { .. } => "BAD_CASE",
            SimError::Session(e) => e.code(),
            SimError::Format { .. } => "FORMAT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub true_disorders: BTreeSet<String>,
    pub finding_states: BTreeMap<String, FindingState>,
    #[serde(default)]
    pub context: BTreeMap<String, Scalar>,
}

impl CaseRecord {
    /// Checks that the case refers only to the module's disorders and
    /// findings and answers every finding.
    pub fn check(&self, kb: &KnowledgeBase) -> Result<(), SimError> {
        let bad = |message: String| SimError::BadCase {
            case_id: self.case_id.clone(),
            message,
        };
        for d in &self.true_disorders {
            if !crate::reasoning::is_disorder(kb, d) {
                return Err(bad(format!("{d:?} is not a disorder of the module")));
            }
        }
        for f in self.finding_states.keys() {
            if kb.finding_ix(f).is_none() {
                return Err(bad(format!("unknown finding {f:?}")));
            }
        }
        if let Some(missing) = kb
            .findings()
            .iter()
            .find(|f| !self.finding_states.contains_key(&f.id))
        {
            return Err(bad(format!("finding {:?} has no recorded state", missing.id)));
        }
        Ok(())
    }

    pub fn answer(&self, finding: &str) -> FindingState {
        self.finding_states
            .get(finding)
            .copied()
            .unwrap_or(FindingState::Absent)
    }

    pub fn initial_evidence(&self) -> EvidenceState {
        EvidenceState {
            finding_states: BTreeMap::new(),
            context: self.context.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    pub n_cases: usize,
    pub require_nonempty: bool,
}

impl GenConfig {
    pub fn new(seed: u64, n_cases: usize) -> Self {
        Self {
            seed,
            n_cases,
            require_nonempty: true,
        }
    }
}

pub fn case_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Present-probability of a finding given the present disorders:
/// `1 - (1 - leak) * prod(1 - s)` over present linked disorders.
pub fn noisy_or_probability(kb: &KnowledgeBase, finding: &str, present: &BTreeSet<String>) -> Option<f64> {
    let f = kb.finding_ix(finding)?;
    let def = kb.finding(f);
    let mut absent = 1.0 - def.leak;
    for &d in kb.disorders() {
        if present.contains(&kb.node(d).id) {
            if let Some(s) = kb.sensitivity(d, f) {
                absent *= 1.0 - s;
            }
        }
    }
    Some(1.0 - absent)
}

pub fn sample_case<R: Rng>(
    kb: &KnowledgeBase,
    rng: &mut R,
    case_id: String,
    require_nonempty: bool,
) -> Result<CaseRecord, SimError> {
    let mut attempts = 0;
    let true_disorders = loop {
        attempts += 1;
        let drawn: BTreeSet<String> = kb
            .disorders()
            .iter()
            .filter_map(|&d| {
                let node = kb.node(d);
                let p = node.prior.expect("disorders carry priors");
                rng.gen_bool(p).then(|| node.id.clone())
            })
            .collect();
        if !require_nonempty || !drawn.is_empty() {
            break drawn;
        }
        if attempts >= MAX_REJECTIONS {
            return Err(SimError::GenerationStuck(attempts));
        }
    };

    let mut finding_states = BTreeMap::new();
    for f in kb.findings() {
        let p = noisy_or_probability(kb, &f.id, &true_disorders).expect("finding exists");
        let state = if rng.gen_bool(p) {
            FindingState::Present
        } else {
            FindingState::Absent
        };
        finding_states.insert(f.id.clone(), state);
    }
    Ok(CaseRecord {
        case_id,
        true_disorders,
        finding_states,
        context: BTreeMap::new(),
    })
}

pub fn case_id(index: usize) -> String {
    format!("case-{index:06}")
}

pub fn generate(kb: &KnowledgeBase, config: &GenConfig) -> Result<Vec<CaseRecord>, SimError> {
    if config.n_cases == 0 {
        return Err(SimError::NoCases);
    }
    (0..config.n_cases)
        .into_par_iter()
        .map(|i| {
            let mut rng = case_rng(config.seed, i as u64);
            sample_case(kb, &mut rng, case_id(i), config.require_nonempty)
        })
        .collect()
}

/// Case set as JSON Lines with sorted keys.
pub fn write_jsonl(cases: &[CaseRecord]) -> String {
    let mut out = String::new();
    for c in cases {
        out.push_str(&to_sorted_json(c));
        out.push('\n');
    }
    out
}

pub fn read_jsonl(text: &str) -> Result<Vec<CaseRecord>, SimError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| SimError::Format {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case_id: String,
    pub top: Option<String>,
    pub agrees: bool,
    pub confirmed_true: usize,
    pub true_count: usize,
    pub steps: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// Always "synthetic-noisy-or": the gold standard is simulated.
    pub protocol: String,
    pub n_cases: usize,
    pub top1_agreement: f64,
    pub confirmed_recall: f64,
    pub mean_steps: f64,
}

/// Runs the automatic cycle on one case with the case's findings as oracle.
pub fn replay_case(
    kb: &Arc<KnowledgeBase>,
    case: &CaseRecord,
    overrides: &ConfigOverrides,
) -> Result<CaseOutcome, SimError> {
    let session = start_session(kb.clone(), overrides, case.initial_evidence())?;
    let t = run_auto(session, |f| case.answer(f))?;
    let top = t.session.top_disorder();
    let confirmed_true = case
        .true_disorders
        .iter()
        .filter(|d| t.session.resolution(d) == Some(Resolution::Confirmed))
        .count();
    Ok(CaseOutcome {
        case_id: case.case_id.clone(),
        agrees: top.as_ref().is_some_and(|d| case.true_disorders.contains(d)),
        top,
        confirmed_true,
        true_count: case.true_disorders.len(),
        steps: t.session.step_count(),
    })
}

pub fn evaluate_cases(
    kb: &Arc<KnowledgeBase>,
    cases: &[CaseRecord],
    overrides: &ConfigOverrides,
) -> Result<Vec<CaseOutcome>, SimError> {
    for c in cases {
        c.check(kb)?;
    }
    cases
        .par_iter()
        .map(|c| replay_case(kb, c, overrides))
        .collect()
}

pub fn evaluate(
    kb: &Arc<KnowledgeBase>,
    cases: &[CaseRecord],
    overrides: &ConfigOverrides,
) -> Result<AgreementReport, SimError> {
    let outcomes = evaluate_cases(kb, cases, overrides)?;
    Ok(summarize(&outcomes))
}

pub fn summarize(outcomes: &[CaseOutcome]) -> AgreementReport {
    let n = outcomes.len();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let agree = outcomes.iter().filter(|o| o.agrees).count();
    let confirmed: usize = outcomes.iter().map(|o| o.confirmed_true).sum();
    let truths: usize = outcomes.iter().map(|o| o.true_count).sum();
    let steps: u64 = outcomes.iter().map(|o| o.steps as u64).sum();
    AgreementReport {
        protocol: "synthetic-noisy-or".into(),
        n_cases: n,
        top1_agreement: ratio(agree, n),
        confirmed_recall: ratio(confirmed, truths),
        mean_steps: if n == 0 { 0.0 } else { steps as f64 / n as f64 },
    }
}

//! Multiplicative-deviation sensitivity analysis.
//!
//! Each targeted probability `p` becomes `clamp(lambda * p)`, the cases are
//! replayed through the automatic cycle, and we count how often the top
//! ranked disorder differs from the unperturbed run. Posterior values are
//! expected to move; only argmax stability is measured.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ConfigOverrides;
use crate::model::{clamp_probability, KnowledgeBase, ReKoModule};
use crate::simulator::{replay_case, CaseRecord, SimError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensitivityError {
    #[error("empty input: {0}")]
    InputEmpty(&'static str),
    #[error("lambda must be positive and finite, got {0}")]
    BadLambda(f64),
    #[error("perturbed module failed validation: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl SensitivityError {
    pub fn code(&self) -> &'static str {
        match self {
            SensitivityError::InputEmpty(_) => "INPUT_EMPTY",
            SensitivityError::BadLambda(_) => "BAD_LAMBDA",
            SensitivityError::Invalid(_) => "INVALID_MODULE",
            SensitivityError::Sim(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbTarget {
    Priors,
    Sensitivities,
    Leaks,
    All,
}

impl std::str::FromStr for PerturbTarget {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "priors" => Ok(Self::Priors),
            "sensitivities" => Ok(Self::Sensitivities),
            "leaks" => Ok(Self::Leaks),
            "all" => Ok(Self::All),
            other => Err(format!("unknown perturbation target {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub target: PerturbTarget,
    pub lambda: f64,
}

fn scale(p: f64, lambda: f64) -> f64 {
    clamp_probability((lambda * p).min(1.0)).unwrap_or(p)
}

/// Scales the targeted probabilities by `lambda`, clamping into the legal
/// band. `lambda == 1` returns the module unchanged.
pub fn perturb_module(module: &ReKoModule, spec: PerturbationSpec) -> Result<ReKoModule, SensitivityError> {
    if !(spec.lambda > 0.0 && spec.lambda.is_finite()) {
        return Err(SensitivityError::BadLambda(spec.lambda));
    }
    let mut out = module.clone();
    if spec.lambda == 1.0 {
        return Ok(out);
    }
    let (priors, sens, leaks) = match spec.target {
        PerturbTarget::Priors => (true, false, false),
        PerturbTarget::Sensitivities => (false, true, false),
        PerturbTarget::Leaks => (false, false, true),
        PerturbTarget::All => (true, true, true),
    };
    if priors {
        for n in &mut out.nodes {
            if let Some(p) = n.prior.as_mut() {
                *p = scale(*p, spec.lambda);
            }
        }
    }
    if sens {
        for l in &mut out.links {
            l.sensitivity = scale(l.sensitivity, spec.lambda);
        }
    }
    if leaks {
        for f in &mut out.findings {
            f.leak = scale(f.leak, spec.lambda);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub lambda: f64,
    pub cases_total: usize,
    pub top1_unchanged_count: usize,
    pub fraction_unchanged: f64,
    pub flipped_case_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub target: PerturbTarget,
    pub grid: Vec<f64>,
    pub per_lambda: Vec<LambdaRow>,
}

pub fn stability_sweep(
    kb: &Arc<KnowledgeBase>,
    cases: &[CaseRecord],
    grid: &[f64],
    target: PerturbTarget,
    overrides: &ConfigOverrides,
) -> Result<StabilityReport, SensitivityError> {
    if grid.is_empty() {
        return Err(SensitivityError::InputEmpty("lambda grid"));
    }
    if cases.is_empty() {
        return Err(SensitivityError::InputEmpty("case list"));
    }
    for c in cases {
        c.check(kb)?;
    }
    let baseline: Vec<Option<String>> = cases
        .par_iter()
        .map(|c| replay_case(kb, c, overrides).map(|o| o.top))
        .collect::<Result<_, _>>()?;

    let mut per_lambda = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let perturbed = perturb_module(kb.module(), PerturbationSpec { target, lambda })?;
        let pkb = Arc::new(
            KnowledgeBase::new(perturbed).map_err(|e| SensitivityError::Invalid(e.0.to_string()))?,
        );
        let tops: Vec<Option<String>> = cases
            .par_iter()
            .map(|c| replay_case(&pkb, c, overrides).map(|o| o.top))
            .collect::<Result<_, _>>()?;
        let flipped_case_ids: Vec<String> = cases
            .iter()
            .zip(tops.iter().zip(&baseline))
            .filter(|(_, (a, b))| a != b)
            .map(|(c, _)| c.case_id.clone())
            .collect();
        let unchanged = cases.len() - flipped_case_ids.len();
        per_lambda.push(LambdaRow {
            lambda,
            cases_total: cases.len(),
            top1_unchanged_count: unchanged,
            fraction_unchanged: unchanged as f64 / cases.len() as f64,
            flipped_case_ids,
        });
    }
    Ok(StabilityReport {
        target,
        grid: grid.to_vec(),
        per_lambda,
    })
}

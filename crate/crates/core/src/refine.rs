//! Updating authored probabilities from recorded cases.
//!
//! Each authored value is treated as `n0` pseudo-observations and blended
//! with the observed counts:
//!
//! ```text
//! sensitivity' = (n0 * s  + #{node present, finding present}) / (n0 + #{node present})
//! leak'        = (n0 * l  + #{no linked node present, finding present}) / (n0 + #{no linked node present})
//! prior'       = (n0 * pi + #{node present}) / (n0 + #cases)
//! ```
//!
//! A category counts as present when any disorder below it is present.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidence::FindingState;
use crate::model::{clamp_probability, KnowledgeBase, NodeIx, ReKoModule, PROB_FLOOR};
use crate::simulator::{CaseRecord, SimError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RefineError {
    #[error("equivalent sample size must be finite and non-negative, got {0}")]
    BadEquivalentSample(f64),
    #[error(transparent)]
    Case(#[from] SimError),
}

impl RefineError {
    pub fn code(&self) -> &'static str {
        match self {
            RefineError::BadEquivalentSample(_) => "BAD_N0",
            RefineError::Case(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementConfig {
    pub equivalent_sample: f64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            equivalent_sample: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParameterKind {
    Prior,
    Sensitivity,
    Leak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterUpdate {
    pub kind: ParameterKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finding: Option<String>,
    pub before: f64,
    pub after: f64,
    /// Cases counted in the numerator.
    pub hits: usize,
    /// Cases counted in the denominator.
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub equivalent_sample: f64,
    pub n_cases: usize,
    pub parameters_updated: usize,
    pub max_abs_delta: f64,
    pub updates: Vec<ParameterUpdate>,
    pub warnings: Vec<String>,
}

/// Pseudo-count blend of an authored probability with observed counts.
/// `None` when there is no weight at all (`n0 == 0` and no trials).
pub fn blend(authored: f64, n0: f64, hits: usize, trials: usize) -> Option<f64> {
    let denom = n0 + trials as f64;
    if denom == 0.0 {
        return None;
    }
    Some((n0 * authored + hits as f64) / denom)
}

fn clamp(p: f64) -> f64 {
    clamp_probability(p.clamp(0.0, 1.0)).unwrap_or(PROB_FLOOR)
}

pub fn refine_probabilities(
    kb: &KnowledgeBase,
    cases: &[CaseRecord],
    config: &RefinementConfig,
) -> Result<(ReKoModule, RefinementReport), RefineError> {
    let n0 = config.equivalent_sample;
    if !(n0 >= 0.0 && n0.is_finite()) {
        return Err(RefineError::BadEquivalentSample(n0));
    }
    for c in cases {
        c.check(kb)?;
    }

    // presence[case][node]
    let presence: Vec<Vec<bool>> = cases
        .iter()
        .map(|c| {
            (0..kb.nodes().len())
                .map(|i| {
                    kb.descendant_disorders(NodeIx(i))
                        .iter()
                        .any(|&d| c.true_disorders.contains(&kb.node(d).id))
                })
                .collect()
        })
        .collect();

    let mut module = kb.module().clone();
    let mut updates = Vec::new();
    let mut warnings = Vec::new();

    let mut record = |kind: ParameterKind,
                      node: Option<&str>,
                      finding: Option<&str>,
                      value: &mut f64,
                      authored: f64,
                      hits: usize,
                      trials: usize,
                      warnings: &mut Vec<String>| {
        let before = *value;
        let after = match blend(authored, n0, hits, trials) {
            Some(p) => clamp(p),
            None => {
                warnings.push(format!(
                    "{kind:?} of {} left unchanged: no pseudo-count weight and no qualifying cases",
                    node.or(finding).unwrap_or("?")
                ));
                before
            }
        };
        *value = after;
        updates.push(ParameterUpdate {
            kind,
            node: node.map(str::to_string),
            finding: finding.map(str::to_string),
            before,
            after,
            hits,
            trials,
        });
    };

    for n in &mut module.nodes {
        let Some(prior) = n.prior.as_mut() else {
            continue;
        };
        let ix = kb.node_ix(&n.id).expect("compiled node");
        let authored = kb.node(ix).prior.expect("prior present");
        let hits = presence.iter().filter(|p| p[ix.0]).count();
        record(
            ParameterKind::Prior,
            Some(&n.id),
            None,
            prior,
            authored,
            hits,
            cases.len(),
            &mut warnings,
        );
    }

    for l in &mut module.links {
        let nix = kb.node_ix(&l.node_id).expect("compiled node");
        let fix = kb.finding_ix(&l.finding_id).expect("compiled finding");
        let authored = kb.sensitivity(nix, fix).expect("compiled link");
        let mut trials = 0;
        let mut hits = 0;
        for (c, p) in cases.iter().zip(&presence) {
            if p[nix.0] {
                trials += 1;
                if c.answer(&l.finding_id) == FindingState::Present {
                    hits += 1;
                }
            }
        }
        record(
            ParameterKind::Sensitivity,
            Some(&l.node_id),
            Some(&l.finding_id),
            &mut l.sensitivity,
            authored,
            hits,
            trials,
            &mut warnings,
        );
    }

    for f in &mut module.findings {
        let fix = kb.finding_ix(&f.id).expect("compiled finding");
        let linked: BTreeSet<NodeIx> = kb.finding(fix).linked_nodes.iter().copied().collect();
        let authored = kb.finding(fix).leak;
        let mut trials = 0;
        let mut hits = 0;
        for (c, p) in cases.iter().zip(&presence) {
            if linked.iter().all(|n| !p[n.0]) {
                trials += 1;
                if c.answer(&f.id) == FindingState::Present {
                    hits += 1;
                }
            }
        }
        record(
            ParameterKind::Leak,
            None,
            Some(&f.id),
            &mut f.leak,
            authored,
            hits,
            trials,
            &mut warnings,
        );
    }

    let parameters_updated = updates.iter().filter(|u| u.after != u.before).count();
    let max_abs_delta = updates
        .iter()
        .map(|u| (u.after - u.before).abs())
        .fold(0.0, f64::max);
    let report = RefinementReport {
        equivalent_sample: n0,
        n_cases: cases.len(),
        parameters_updated,
        max_abs_delta,
        updates,
        warnings,
    };
    Ok((module, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;
    use std::collections::BTreeMap;

    fn kb() -> KnowledgeBase {
        KnowledgeBase::load(
            br#"{
            "reko_version": "1.0", "id": "m", "name": "M", "version": "1", "domain": "t",
            "nodes": [
                {"id": "cat", "name": "C", "kind": "category"},
                {"id": "d", "name": "D", "kind": "disorder", "parent": "cat", "prior": 0.2},
                {"id": "e", "name": "E", "kind": "disorder", "parent": "cat", "prior": 0.1}
            ],
            "findings": [
                {"id": "f", "name": "F", "cost": 1, "leak": 0.1},
                {"id": "g", "name": "G", "cost": 1, "leak": 0.05}
            ],
            "links": [
                {"node": "d", "finding": "f", "sensitivity": 0.5},
                {"node": "e", "finding": "g", "sensitivity": 0.9}
            ]
        }"#,
        )
        .unwrap()
    }

    fn case(i: usize, d: bool, f: bool) -> CaseRecord {
        let st = |b: bool| if b { FindingState::Present } else { FindingState::Absent };
        CaseRecord {
            case_id: format!("c{i}"),
            true_disorders: if d { ["d".to_string()].into() } else { BTreeSet::new() },
            finding_states: BTreeMap::from([("f".into(), st(f)), ("g".into(), FindingState::Absent)]),
            context: BTreeMap::new(),
        }
    }

    /// 100 cases, d present in 40, f present in 30 of those.
    fn counted() -> Vec<CaseRecord> {
        (0..100).map(|i| case(i, i < 40, i < 30)).collect()
    }

    fn find(report: &RefinementReport, kind: ParameterKind, key: &str) -> ParameterUpdate {
        report
            .updates
            .iter()
            .find(|u| u.kind == kind && (u.node.as_deref() == Some(key) || u.finding.as_deref() == Some(key)))
            .cloned()
            .unwrap()
    }

    #[test]
    fn empty_data_leaves_module_unchanged() {
        let k = kb();
        let (m, r) = refine_probabilities(&k, &[], &RefinementConfig::default()).unwrap();
        assert_eq!(m, *k.module());
        assert_eq!(r.max_abs_delta, 0.0);
        assert_eq!(r.parameters_updated, 0);
    }

    #[test]
    fn zero_pseudo_count_is_empirical() {
        let k = kb();
        let cfg = RefinementConfig { equivalent_sample: 0.0 };
        let (m, r) = refine_probabilities(&k, &counted(), &cfg).unwrap();
        assert_eq!(m.links[0].sensitivity, 0.75);
        assert_eq!(find(&r, ParameterKind::Prior, "d").after, 0.4);
        // e never present: its sensitivity stays put with a warning
        assert_eq!(find(&r, ParameterKind::Sensitivity, "e").after, 0.9);
        assert!(!r.warnings.is_empty());
        assert!(validate(&m).is_clean());
    }

    #[test]
    fn leak_counts_only_cases_without_linked_causes() {
        let k = kb();
        let mut cases = counted();
        // f present in 6 of the 60 cases without d
        for c in cases.iter_mut().skip(40).take(6) {
            c.finding_states.insert("f".into(), FindingState::Present);
        }
        let cfg = RefinementConfig { equivalent_sample: 0.0 };
        let (_, r) = refine_probabilities(&k, &cases, &cfg).unwrap();
        let leak = find(&r, ParameterKind::Leak, "f");
        assert_eq!((leak.hits, leak.trials), (6, 60));
        assert_eq!(leak.after, 0.1);
    }

    #[test]
    fn pseudo_count_blends() {
        let k = kb();
        let cfg = RefinementConfig { equivalent_sample: 10.0 };
        let (_, r) = refine_probabilities(&k, &counted(), &cfg).unwrap();
        let s = find(&r, ParameterKind::Sensitivity, "d").after;
        assert!((s - (10.0 * 0.5 + 30.0) / 50.0).abs() < 1e-15);
    }

    #[test]
    fn category_presence_uses_descendants() {
        let mut m = kb().module().clone();
        m.nodes[0].prior = Some(0.3);
        m.links.push(crate::model::Link {
            node_id: "cat".into(),
            finding_id: "g".into(),
            sensitivity: 0.4,
        });
        let k = KnowledgeBase::new(m).unwrap();
        let cfg = RefinementConfig { equivalent_sample: 0.0 };
        let (_, r) = refine_probabilities(&k, &counted(), &cfg).unwrap();
        let u = r
            .updates
            .iter()
            .find(|u| u.kind == ParameterKind::Sensitivity && u.node.as_deref() == Some("cat"))
            .unwrap();
        assert_eq!(u.trials, 40);
        assert_eq!(find(&r, ParameterKind::Prior, "cat").after, 0.4);
    }

    #[test]
    fn negative_pseudo_count_rejected() {
        let cfg = RefinementConfig { equivalent_sample: -1.0 };
        assert_eq!(refine_probabilities(&kb(), &[], &cfg).unwrap_err().code(), "BAD_N0");
    }
}

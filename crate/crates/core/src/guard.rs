//! Post-inference sanity checks.
//!
//! Constraints encode knowledge that lives outside the probabilistic model
//! ("this disorder is impossible for this patient"). They are run over a
//! ranked differential and may only remove or annotate entries; posteriors
//! and relative order are never touched.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::evidence::{EvidenceState, FindingState, Scalar};
use crate::model::KnowledgeBase;
use crate::reasoning::RankedNode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Veto,
    Warn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    pub fn as_str(self) -> &'static str {
        match self {
            CompareOp::Eq => "eq",
            CompareOp::Ne => "ne",
            CompareOp::Lt => "lt",
            CompareOp::Le => "le",
            CompareOp::Gt => "gt",
            CompareOp::Ge => "ge",
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CompareOp::Eq | CompareOp::Ne)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextPredicate {
    pub attribute: String,
    pub op: CompareOp,
    pub value: Scalar,
}

impl ContextPredicate {
    /// `None` when the attribute is missing or the comparison is ill-typed.
    pub fn evaluate(&self, evidence: &EvidenceState) -> Option<bool> {
        let actual = evidence.context.get(&self.attribute)?;
        match self.op {
            CompareOp::Eq => Some(scalar_eq(actual, &self.value)),
            CompareOp::Ne => Some(!scalar_eq(actual, &self.value)),
            op => {
                let a = actual.as_number()?;
                let b = self.value.as_number()?;
                Some(match op {
                    CompareOp::Lt => a < b,
                    CompareOp::Le => a <= b,
                    CompareOp::Gt => a > b,
                    CompareOp::Ge => a >= b,
                    CompareOp::Eq | CompareOp::Ne => unreachable!(),
                })
            }
        }
    }
}

fn scalar_eq(a: &Scalar, b: &Scalar) -> bool {
    match (a, b) {
        (Scalar::Bool(x), Scalar::Bool(y)) => x == y,
        (Scalar::Number(x), Scalar::Number(y)) => x == y,
        (Scalar::Text(x), Scalar::Text(y)) => x == y,
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConstraintRule {
    /// Fires when the context predicate holds.
    Excludes { when: ContextPredicate },
    /// Fires when `finding` is observed in the opposite of `state`.
    Requires { finding: String, state: FindingState },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub id: String,
    #[serde(rename = "node")]
    pub subject_node: String,
    pub severity: Severity,
    pub message: String,
    #[serde(flatten)]
    pub rule: ConstraintRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub constraint_id: String,
    pub node_id: String,
    pub outcome: Severity,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardOutcome {
    /// The input ranking minus vetoed nodes, order preserved.
    pub ranking: Vec<RankedNode>,
    pub verdicts: Vec<Verdict>,
}

impl GuardOutcome {
    pub fn vetoed(&self) -> BTreeSet<&str> {
        self.verdicts
            .iter()
            .filter(|v| v.outcome == Severity::Veto)
            .map(|v| v.node_id.as_str())
            .collect()
    }
}

pub const UNEVALUABLE: &str = "UNEVALUABLE";

/// Runs the module's constraints, in id order, over a ranked differential.
pub fn check_differential(
    kb: &KnowledgeBase,
    evidence: &EvidenceState,
    ranked: &[RankedNode],
) -> GuardOutcome {
    let present: BTreeSet<&str> = ranked.iter().map(|r| r.node_id.as_str()).collect();
    let mut verdicts = Vec::new();
    let mut vetoed = BTreeSet::new();

    for c in kb.constraints() {
        if !present.contains(c.subject_node.as_str()) {
            continue;
        }
        let fired = match &c.rule {
            ConstraintRule::Excludes { when } => match when.evaluate(evidence) {
                Some(hit) => hit,
                None => {
                    verdicts.push(Verdict {
                        constraint_id: c.id.clone(),
                        node_id: c.subject_node.clone(),
                        outcome: Severity::Warn,
                        message: format!(
                            "{UNEVALUABLE}: cannot evaluate {} {} {} against the case context; constraint skipped",
                            when.attribute,
                            when.op.as_str(),
                            when.value
                        ),
                    });
                    continue;
                }
            },
            ConstraintRule::Requires { finding, state } => {
                evidence.state(finding) == Some(state.opposite())
            }
        };
        if fired {
            if c.severity == Severity::Veto {
                vetoed.insert(c.subject_node.as_str());
            }
            verdicts.push(Verdict {
                constraint_id: c.id.clone(),
                node_id: c.subject_node.clone(),
                outcome: c.severity,
                message: c.message.clone(),
            });
        }
    }

    let ranking = ranked
        .iter()
        .filter(|r| !vetoed.contains(r.node_id.as_str()))
        .cloned()
        .collect();
    GuardOutcome { ranking, verdicts }
}

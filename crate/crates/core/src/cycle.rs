//! The diagnostic cycle: evidence in, hypotheses generated top-down over
//! the taxonomy, a goal chosen, and the next finding recommended by
//! expected entropy reduction per unit cost.
//!
//! Active and resolved sets are recomputed from the full evidence after
//! every ingest, so the session state after a set of observations does not
//! depend on the order they were entered in.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ConfigOverrides, EngineConfig};
use crate::evidence::{EvidenceState, FindingState};
use crate::model::{FindingIx, KnowledgeBase, NodeIx, NodeKind};
use crate::reasoning::{
    binary_entropy, index_evidence, log_odds_ix, logistic, logit, sort_ranking, Observations,
    RankedNode, ReasonError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Reference(#[from] ReasonError),
    #[error("finding {0:?} has already been observed")]
    AlreadyObserved(String),
    #[error("session has terminated")]
    Terminated,
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::Config(_) => "CONFIG_ERROR",
            SessionError::Reference(r) => r.code(),
            SessionError::AlreadyObserved(_) => "ALREADY_OBSERVED",
            SessionError::Terminated => "TERMINATED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    Confirmed,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalMode {
    Confirm,
    Explore,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    pub node_id: String,
    pub mode: GoalMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub finding_id: String,
    /// Expected entropy reduction over active hypotheses, in nats.
    pub gain: f64,
    pub cost: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoneReason {
    AllResolved,
    NoInformativeFindings,
    BudgetExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum StepStatus {
    Continue,
    Done(DoneReason),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionChange {
    pub node_id: String,
    pub from: Option<Resolution>,
    pub to: Option<Resolution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum StepKind {
    Started {
        module_id: String,
        module_version: String,
        config: EngineConfig,
        evidence: EvidenceState,
    },
    FindingIngested {
        finding_id: String,
        state: FindingState,
        step: u32,
    },
    HypothesesChanged {
        added: Vec<String>,
        removed: Vec<String>,
        active: Vec<String>,
    },
    GoalChanged {
        goal: Option<Goal>,
    },
    Recommended {
        recommendations: Vec<Recommendation>,
    },
    Resolved {
        changes: Vec<ResolutionChange>,
    },
    Terminated {
        reason: DoneReason,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub sequence: u64,
    #[serde(flatten)]
    pub kind: StepKind,
}

/// One live diagnostic episode over an immutable knowledge base.
#[derive(Debug, Clone)]
pub struct Session {
    kb: Arc<KnowledgeBase>,
    config: EngineConfig,
    evidence: EvidenceState,
    observed: Observations,
    log_odds: Vec<Option<f64>>,
    active: BTreeSet<NodeIx>,
    resolved: BTreeMap<NodeIx, Resolution>,
    goal: Option<Goal>,
    step_log: Vec<StepEvent>,
    step_count: u32,
    ever_activated: bool,
    terminated: Option<DoneReason>,
}

/// The serializable view of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub module_id: String,
    pub module_version: String,
    pub config: EngineConfig,
    pub evidence: EvidenceState,
    pub posteriors: BTreeMap<String, f64>,
    pub active: Vec<String>,
    pub resolved: BTreeMap<String, Resolution>,
    pub goal: Option<Goal>,
    pub step_count: u32,
    pub terminated: Option<DoneReason>,
    pub step_log: Vec<StepEvent>,
}

pub fn start_session(
    kb: Arc<KnowledgeBase>,
    overrides: &ConfigOverrides,
    initial: EvidenceState,
) -> Result<Session, SessionError> {
    let config = EngineConfig::resolve(kb.config_overrides(), overrides)?;
    let observed = index_evidence(&kb, &initial)?;
    let mut session = Session {
        log_odds: vec![None; kb.nodes().len()],
        kb,
        config,
        evidence: initial,
        observed,
        active: BTreeSet::new(),
        resolved: BTreeMap::new(),
        goal: None,
        step_log: Vec::new(),
        step_count: 0,
        ever_activated: false,
        terminated: None,
    };
    session.log(StepKind::Started {
        module_id: session.kb.id().to_string(),
        module_version: session.kb.version().to_string(),
        config: session.config,
        evidence: session.evidence.clone(),
    });
    session.refresh();
    Ok(session)
}

impl Session {
    pub fn knowledge_base(&self) -> &Arc<KnowledgeBase> {
        &self.kb
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn evidence(&self) -> &EvidenceState {
        &self.evidence
    }

    pub fn step_count(&self) -> u32 {
        self.step_count
    }

    pub fn step_log(&self) -> &[StepEvent] {
        &self.step_log
    }

    pub fn goal(&self) -> Option<&Goal> {
        self.goal.as_ref()
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated.is_some()
    }

    pub fn active(&self) -> Vec<String> {
        self.active.iter().map(|&n| self.kb.node(n).id.clone()).collect()
    }

    pub fn is_active(&self, node: &str) -> bool {
        self.kb.node_ix(node).is_some_and(|n| self.active.contains(&n))
    }

    pub fn resolved(&self) -> BTreeMap<String, Resolution> {
        self.resolved
            .iter()
            .map(|(&n, &r)| (self.kb.node(n).id.clone(), r))
            .collect()
    }

    pub fn resolution(&self, node: &str) -> Option<Resolution> {
        self.kb.node_ix(node).and_then(|n| self.resolved.get(&n).copied())
    }

    pub fn posterior(&self, node: &str) -> Option<f64> {
        self.kb
            .node_ix(node)
            .and_then(|n| self.log_odds[n.0])
            .map(logistic)
    }

    /// Posteriors for every node with a prior.
    pub fn posteriors(&self) -> BTreeMap<String, f64> {
        self.log_odds
            .iter()
            .enumerate()
            .filter_map(|(i, lo)| lo.map(|lo| (self.kb.node(NodeIx(i)).id.clone(), logistic(lo))))
            .collect()
    }

    /// Disorders ranked by posterior, highest first, ties by id.
    pub fn ranking(&self) -> Vec<RankedNode> {
        let mut ranked: Vec<RankedNode> = self
            .kb
            .disorders()
            .iter()
            .filter_map(|&d| {
                self.log_odds[d.0].map(|lo| RankedNode {
                    node_id: self.kb.node(d).id.clone(),
                    posterior: logistic(lo),
                })
            })
            .collect();
        sort_ranking(&mut ranked);
        ranked
    }

    pub fn top_disorder(&self) -> Option<String> {
        self.ranking().into_iter().next().map(|r| r.node_id)
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            module_id: self.kb.id().to_string(),
            module_version: self.kb.version().to_string(),
            config: self.config,
            evidence: self.evidence.clone(),
            posteriors: self.posteriors(),
            active: self.active(),
            resolved: self.resolved(),
            goal: self.goal.clone(),
            step_count: self.step_count,
            terminated: self.terminated,
            step_log: self.step_log.clone(),
        }
    }

    fn log(&mut self, kind: StepKind) {
        let sequence = self.step_log.len() as u64;
        self.step_log.push(StepEvent { sequence, kind });
    }

    fn ensure_live(&self) -> Result<(), SessionError> {
        if self.terminated.is_some() {
            Err(SessionError::Terminated)
        } else {
            Ok(())
        }
    }

    fn finding_ix(&self, id: &str) -> Result<FindingIx, SessionError> {
        self.kb
            .finding_ix(id)
            .ok_or_else(|| SessionError::Reference(ReasonError::UnknownFinding(id.to_string())))
    }

    /// Recomputes posteriors, hypotheses, resolutions and goal from the
    /// current evidence, logging whatever changed.
    fn refresh(&mut self) {
        for i in 0..self.kb.nodes().len() {
            self.log_odds[i] = log_odds_ix(&self.kb, NodeIx(i), &self.observed);
        }
        let (active, resolved) = self.generate();

        let added: Vec<String> = active
            .difference(&self.active)
            .map(|&n| self.kb.node(n).id.clone())
            .collect();
        let removed: Vec<String> = self
            .active
            .difference(&active)
            .map(|&n| self.kb.node(n).id.clone())
            .collect();
        if !added.is_empty() || !removed.is_empty() {
            self.active = active;
            let active = self.active();
            self.log(StepKind::HypothesesChanged {
                added,
                removed,
                active,
            });
        }
        if !self.active.is_empty() {
            self.ever_activated = true;
        }

        let touched: BTreeSet<NodeIx> = resolved.keys().chain(self.resolved.keys()).copied().collect();
        let changes: Vec<ResolutionChange> = touched
            .into_iter()
            .filter_map(|n| {
                let from = self.resolved.get(&n).copied();
                let to = resolved.get(&n).copied();
                (from != to).then(|| ResolutionChange {
                    node_id: self.kb.node(n).id.clone(),
                    from,
                    to,
                })
            })
            .collect();
        if !changes.is_empty() {
            self.resolved = resolved;
            self.log(StepKind::Resolved { changes });
        }

        let goal = self.compute_goal();
        if goal != self.goal {
            self.goal = goal.clone();
            self.log(StepKind::GoalChanged { goal });
        }
    }

    fn generate(&self) -> (BTreeSet<NodeIx>, BTreeMap<NodeIx, Resolution>) {
        let cfg = &self.config;
        let mut active = BTreeSet::new();
        let mut resolved = BTreeMap::new();
        let mut queue: VecDeque<NodeIx> = self.kb.roots().iter().copied().collect();

        while let Some(n) = queue.pop_front() {
            let node = self.kb.node(n);
            let p = self.log_odds[n.0].map(logistic);
            let triggered = node
                .triggers
                .iter()
                .any(|&(f, state)| self.observed[f.0] == Some(state));
            let expanded = node.is_link_free_category()
                || p.is_some_and(|p| p >= cfg.tau_expand)
                || triggered;

            match node.kind {
                NodeKind::Category => {
                    if expanded {
                        queue.extend(node.children.iter().copied());
                    }
                }
                NodeKind::Disorder => {
                    let p = p.expect("validated disorders carry priors");
                    let lo = self.log_odds[n.0].unwrap();
                    let prior_lo = logit(node.prior.unwrap());
                    if p >= cfg.tau_confirm {
                        resolved.insert(n, Resolution::Confirmed);
                    } else if p <= cfg.tau_reject && lo < prior_lo && !triggered {
                        resolved.insert(n, Resolution::Rejected);
                    } else if expanded {
                        active.insert(n);
                    }
                }
            }
        }
        (active, resolved)
    }

    fn compute_goal(&self) -> Option<Goal> {
        // BTreeSet iterates in id order, so a strict comparison keeps the
        // smallest id on ties.
        let mut best: Option<(NodeIx, f64)> = None;
        for &n in &self.active {
            let p = logistic(self.log_odds[n.0].unwrap());
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((n, p));
            }
        }
        best.map(|(n, p)| Goal {
            node_id: self.kb.node(n).id.clone(),
            mode: if p >= 0.5 {
                GoalMode::Confirm
            } else {
                GoalMode::Explore
            },
        })
    }

    /// Regenerates the active set from the current evidence.
    pub fn generate_hypotheses(&mut self) -> Vec<String> {
        self.refresh();
        self.active()
    }

    /// The current goal, recomputed.
    pub fn set_goal(&mut self) -> Option<Goal> {
        self.refresh();
        self.goal.clone()
    }

    fn gain_ix(&self, f: FindingIx) -> f64 {
        let leak = self.kb.finding(f).leak;
        let mut gain = 0.0;
        for &d in &self.active {
            let Some(s) = self.kb.sensitivity(d, f) else {
                continue;
            };
            if s == leak {
                continue;
            }
            let p = logistic(self.log_odds[d.0].unwrap());
            let p_present = p * s + (1.0 - p) * leak;
            let p_absent = p * (1.0 - s) + (1.0 - p) * (1.0 - leak);
            let post_present = p * s / p_present;
            let post_absent = p * (1.0 - s) / p_absent;
            gain += binary_entropy(p)
                - p_present * binary_entropy(post_present)
                - p_absent * binary_entropy(post_absent);
        }
        gain.max(0.0)
    }

    /// Expected entropy reduction, summed over active hypotheses, from
    /// observing `finding`.
    pub fn expected_gain(&self, finding: &str) -> Result<f64, SessionError> {
        let f = self.finding_ix(finding)?;
        if self.observed[f.0].is_some() {
            return Err(SessionError::AlreadyObserved(finding.to_string()));
        }
        Ok(self.gain_ix(f))
    }

    fn candidate_pool(&self) -> BTreeSet<FindingIx> {
        let sources: Vec<NodeIx> = if self.config.goal_gated_acquisition {
            self.goal
                .as_ref()
                .and_then(|g| self.kb.node_ix(&g.node_id))
                .into_iter()
                .collect()
        } else {
            self.active.iter().copied().collect()
        };
        sources
            .into_iter()
            .flat_map(|n| self.kb.node(n).links.keys().copied())
            .filter(|f| self.observed[f.0].is_none())
            .collect()
    }

    /// Top `k` unknown findings by gain / cost without logging anything.
    pub fn rank_candidates(&self, k: usize) -> Vec<Recommendation> {
        let mut recs: Vec<Recommendation> = self
            .candidate_pool()
            .into_iter()
            .map(|f| {
                let def = self.kb.finding(f);
                let gain = self.gain_ix(f);
                Recommendation {
                    finding_id: def.id.clone(),
                    gain,
                    cost: def.cost,
                    score: gain / def.cost,
                }
            })
            .filter(|r| r.score >= self.config.epsilon_gain)
            .collect();
        recs.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.finding_id.cmp(&b.finding_id))
        });
        recs.truncate(k);
        recs
    }

    /// [`Self::rank_candidates`], recorded in the step log.
    pub fn recommend(&mut self, k: usize) -> Result<Vec<Recommendation>, SessionError> {
        self.ensure_live()?;
        let recs = self.rank_candidates(k);
        self.log(StepKind::Recommended {
            recommendations: recs.clone(),
        });
        Ok(recs)
    }

    pub fn ingest_finding(&mut self, finding: &str, state: FindingState) -> Result<(), SessionError> {
        self.ensure_live()?;
        let f = self.finding_ix(finding)?;
        if self.observed[f.0].is_some() {
            return Err(SessionError::AlreadyObserved(finding.to_string()));
        }
        self.observed[f.0] = Some(state);
        self.evidence.finding_states.insert(finding.to_string(), state);
        self.step_count += 1;
        self.log(StepKind::FindingIngested {
            finding_id: finding.to_string(),
            state,
            step: self.step_count,
        });
        self.refresh();
        Ok(())
    }

    pub fn step_status(&self) -> StepStatus {
        if self.active.is_empty() {
            return if !self.resolved.is_empty() || !self.ever_activated {
                StepStatus::Done(DoneReason::AllResolved)
            } else {
                StepStatus::Done(DoneReason::NoInformativeFindings)
            };
        }
        if self.step_count >= self.config.max_steps {
            return StepStatus::Done(DoneReason::BudgetExhausted);
        }
        if self.rank_candidates(1).is_empty() {
            return StepStatus::Done(DoneReason::NoInformativeFindings);
        }
        StepStatus::Continue
    }

    /// Closes the session. Further mutations fail with `Terminated`.
    pub fn terminate(&mut self, reason: DoneReason) {
        if self.terminated.is_none() {
            self.terminated = Some(reason);
            self.log(StepKind::Terminated { reason });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub recommendation: Recommendation,
    pub answer: FindingState,
}

#[derive(Debug, Clone)]
pub struct Transcript {
    pub session: Session,
    pub exchanges: Vec<Exchange>,
    pub reason: DoneReason,
}

impl Transcript {
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct View<'a> {
            session: SessionSnapshot,
            exchanges: &'a [Exchange],
            reason: DoneReason,
        }
        crate::model::to_sorted_json(&View {
            session: self.session.snapshot(),
            exchanges: &self.exchanges,
            reason: self.reason,
        })
    }
}

/// Takes the top recommendation, asks `oracle`, ingests the answer, and
/// repeats until the session reports `Done`.
pub fn run_auto<F>(mut session: Session, mut oracle: F) -> Result<Transcript, SessionError>
where
    F: FnMut(&str) -> FindingState,
{
    session.ensure_live()?;
    let mut exchanges = Vec::new();
    let reason = loop {
        if let StepStatus::Done(reason) = session.step_status() {
            break reason;
        }
        let Some(rec) = session.recommend(1)?.into_iter().next() else {
            break DoneReason::NoInformativeFindings;
        };
        let answer = oracle(&rec.finding_id);
        session.ingest_finding(&rec.finding_id, answer)?;
        exchanges.push(Exchange {
            recommendation: rec,
            answer,
        });
    };
    session.terminate(reason);
    Ok(Transcript {
        session,
        exchanges,
        reason,
    })
}

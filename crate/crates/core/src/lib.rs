//! Reusable knowledge (ReKo) modules and a generic sequential diagnosis
//! engine that runs over them.
//!
//! The knowledge lives in data ([`model::ReKoModule`]); everything else in
//! this crate is domain-agnostic machinery:
//!
//! - [`reasoning`]: posteriors and per-finding explanations
//! - [`cycle`]: hypothesis generation, goal setting, information acquisition
//! - [`guard`]: sanity checks that can veto a diagnosis
//! - [`sensitivity`]: robustness of diagnoses to perturbed probabilities
//! - [`simulator`]: synthetic ground-truth cases and agreement measurement
//! - [`refine`]: blending authored probabilities with case data

pub mod config;
pub mod cycle;
pub mod evidence;
pub mod guard;
pub mod model;
pub mod reasoning;
pub mod refine;
pub mod sensitivity;
pub mod simulator;

pub use config::{ConfigOverrides, EngineConfig};
pub use cycle::{run_auto, start_session, Recommendation, Session, StepStatus};
pub use evidence::{EvidenceState, FindingState, Scalar};
pub use model::{parse_module, validate, KnowledgeBase, ReKoModule, ValidationReport};

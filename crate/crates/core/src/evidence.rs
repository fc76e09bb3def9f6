use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// An observed finding state. Findings not present in an [`EvidenceState`]
/// are unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FindingState {
    Present,
    Absent,
}

impl FindingState {
    pub fn as_str(self) -> &'static str {
        match self {
            FindingState::Present => "present",
            FindingState::Absent => "absent",
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            FindingState::Present => FindingState::Absent,
            FindingState::Absent => FindingState::Present,
        }
    }
}

impl fmt::Display for FindingState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FindingState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "present" | "+" | "yes" | "y" => Ok(FindingState::Present),
            "absent" | "-" | "no" | "n" => Ok(FindingState::Absent),
            other => Err(format!("unknown finding state {other:?}")),
        }
    }
}

/// A context attribute value: string, number or boolean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Bool(bool),
    Number(f64),
    Text(String),
}

impl Scalar {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Scalar::Number(n) => Some(*n),
            _ => None,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Bool(b) => write!(f, "{b}"),
            Scalar::Number(n) => write!(f, "{n}"),
            Scalar::Text(s) => write!(f, "{s:?}"),
        }
    }
}

/// Everything known about one case.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvidenceState {
    #[serde(default)]
    pub finding_states: BTreeMap<String, FindingState>,
    #[serde(default)]
    pub context: BTreeMap<String, Scalar>,
}

impl EvidenceState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_finding(mut self, id: impl Into<String>, state: FindingState) -> Self {
        self.finding_states.insert(id.into(), state);
        self
    }

    pub fn with_context(mut self, name: impl Into<String>, value: Scalar) -> Self {
        self.context.insert(name.into(), value);
        self
    }

    pub fn state(&self, finding: &str) -> Option<FindingState> {
        self.finding_states.get(finding).copied()
    }
}

//! Engine thresholds and their layered overrides.
//!
//! Resolution order is: built-in defaults, then the module's `config`
//! block, then the caller's overrides. The merged result must satisfy
//! `0 < tau_reject < tau_expand < tau_confirm < 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid engine configuration: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Posterior at or above which a node is expanded (categories) or
    /// activated (disorders).
    pub tau_expand: f64,
    pub tau_confirm: f64,
    pub tau_reject: f64,
    /// Recommendations scoring below this are dropped.
    pub epsilon_gain: f64,
    pub max_steps: u32,
    /// When set, only findings linked to the current goal are candidates.
    pub goal_gated_acquisition: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            tau_expand: 0.10,
            tau_confirm: 0.95,
            tau_reject: 0.01,
            epsilon_gain: 1e-4,
            max_steps: 50,
            goal_gated_acquisition: false,
        }
    }
}

/// A partial [`EngineConfig`]; absent fields inherit from the layer below.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_expand: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_confirm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_reject: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_gated_acquisition: Option<bool>,
}

impl ConfigOverrides {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

impl EngineConfig {
    pub fn with_overrides(mut self, o: &ConfigOverrides) -> Self {
        if let Some(v) = o.tau_expand {
            self.tau_expand = v;
        }
        if let Some(v) = o.tau_confirm {
            self.tau_confirm = v;
        }
        if let Some(v) = o.tau_reject {
            self.tau_reject = v;
        }
        if let Some(v) = o.epsilon_gain {
            self.epsilon_gain = v;
        }
        if let Some(v) = o.max_steps {
            self.max_steps = v;
        }
        if let Some(v) = o.goal_gated_acquisition {
            self.goal_gated_acquisition = v;
        }
        self
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let ordered = 0.0 < self.tau_reject
            && self.tau_reject < self.tau_expand
            && self.tau_expand < self.tau_confirm
            && self.tau_confirm < 1.0;
        if !ordered {
            return Err(ConfigError(format!(
                "thresholds must satisfy 0 < tau_reject ({}) < tau_expand ({}) < tau_confirm ({}) < 1",
                self.tau_reject, self.tau_expand, self.tau_confirm
            )));
        }
        if !(self.epsilon_gain > 0.0 && self.epsilon_gain.is_finite()) {
            return Err(ConfigError(format!(
                "epsilon_gain must be positive, got {}",
                self.epsilon_gain
            )));
        }
        if self.max_steps < 1 {
            return Err(ConfigError("max_steps must be at least 1".into()));
        }
        Ok(())
    }

    /// Defaults, then module overrides, then caller overrides.
    pub fn resolve(
        module: Option<&ConfigOverrides>,
        caller: &ConfigOverrides,
    ) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        if let Some(m) = module {
            cfg = cfg.with_overrides(m);
        }
        cfg = cfg.with_overrides(caller);
        cfg.check()?;
        Ok(cfg)
    }
}

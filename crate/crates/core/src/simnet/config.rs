use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentId;
use crate::Tick;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{name} must lie in [0, 1], got {value}")]
    Probability { name: &'static str, value: f64 },
    #[error("delay range ({0}, {1}) must satisfy 1 <= min <= max")]
    DelayRange(Tick, Tick),
    #[error("delta must be at least 1")]
    ZeroDelta,
    #[error("omission interval for {from}->{to} ends before it starts")]
    Omission { from: AgentId, to: AgentId },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crash {
    pub agent: AgentId,
    pub tick: Tick,
}

/// Drops every message on the directed channel `from -> to` sent in
/// `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Omission {
    pub from: AgentId,
    pub to: AgentId,
    pub start: Tick,
    pub end: Tick,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub gst: Tick,
    pub delta: Tick,
    pub drop_rate: f64,
    pub dup_rate: f64,
    /// Inclusive delay bounds before GST.
    pub delay_range: (Tick, Tick),
    pub seed: u64,
    /// Messages per tick per agent; `None` is unlimited.
    pub rate_cap: Option<u32>,
    pub fault_schedule: Vec<Crash>,
    /// Restarts of crashed agents; volatile state is lost on restart.
    pub recoveries: Vec<Crash>,
    pub omissions: Vec<Omission>,
    /// Longest run of drops tolerated per (channel, message id) before a
    /// copy is forced through.
    pub fair_loss_bound: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            gst: 0,
            delta: 5,
            drop_rate: 0.0,
            dup_rate: 0.0,
            delay_range: (1, 5),
            seed: 0,
            rate_cap: None,
            fault_schedule: Vec::new(),
            recoveries: Vec::new(),
            omissions: Vec::new(),
            fair_loss_bound: 20,
        }
    }
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<SimConfig, ConfigError> {
        let config: SimConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [("drop_rate", self.drop_rate), ("dup_rate", self.dup_rate)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::Probability { name, value });
            }
        }
        let (lo, hi) = self.delay_range;
        if lo == 0 || lo > hi {
            return Err(ConfigError::DelayRange(lo, hi));
        }
        if self.delta == 0 {
            return Err(ConfigError::ZeroDelta);
        }
        if let Some(o) = self.omissions.iter().find(|o| o.end < o.start) {
            return Err(ConfigError::Omission { from: o.from, to: o.to });
        }
        Ok(())
    }

    pub fn crash_tick(&self, agent: AgentId) -> Option<Tick> {
        self.fault_schedule
            .iter()
            .filter(|c| c.agent == agent)
            .map(|c| c.tick)
            .min()
    }

    pub(crate) fn omitted(&self, from: AgentId, to: AgentId, now: Tick) -> bool {
        self.omissions
            .iter()
            .any(|o| o.from == from && o.to == to && (o.start..o.end).contains(&now))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip_and_defaults() {
        let c = SimConfig::from_json(r#"{"gst": 50, "drop_rate": 0.03, "seed": 9}"#).unwrap();
        assert_eq!(c.gst, 50);
        assert_eq!(c.delta, 5);
        assert_eq!(c.fair_loss_bound, 20);
        let back = SimConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(
            SimConfig::from_json(r#"{"drop_rate": 1.5}"#),
            Err(ConfigError::Probability { .. })
        ));
        assert!(matches!(
            SimConfig::from_json(r#"{"delay_range": [0, 3]}"#),
            Err(ConfigError::DelayRange(0, 3))
        ));
        assert!(SimConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }
}

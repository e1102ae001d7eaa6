//! Resource budgets and per-action consumption.
//!
//! Quantities are non-negative rationals with a fixed denominator of 1000
//! ([`Amount`]), so accounting is exact and independent of charge order.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::wire::{self, Message, WireError};
use crate::Tick;

const SCALE: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResourceError {
    #[error("cost {cost} exceeds remaining budget {remaining}")]
    InfeasibleCharge {
        cost: ResourceVector,
        remaining: ResourceVector,
    },
    #[error("invalid amount {0}: must be finite and non-negative")]
    InvalidAmount(f64),
}

/// A non-negative quantity in thousandths of a unit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Amount(u64);

impl Amount {
    pub const ZERO: Amount = Amount(0);
    pub const MAX: Amount = Amount(u64::MAX);

    pub const fn units(n: u64) -> Amount {
        Amount(n * SCALE)
    }

    pub const fn millis(n: u64) -> Amount {
        Amount(n)
    }

    pub fn from_f64(x: f64) -> Result<Amount, ResourceError> {
        if !x.is_finite() || x < 0.0 || x * SCALE as f64 > u64::MAX as f64 {
            return Err(ResourceError::InvalidAmount(x));
        }
        Ok(Amount((x * SCALE as f64).round() as u64))
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }

    pub fn as_millis(self) -> u64 {
        self.0
    }

    pub fn checked_sub(self, rhs: Amount) -> Option<Amount> {
        self.0.checked_sub(rhs.0).map(Amount)
    }

    pub fn saturating_add(self, rhs: Amount) -> Amount {
        Amount(self.0.saturating_add(rhs.0))
    }

    /// `self * n`, saturating.
    pub fn times(self, n: u64) -> Amount {
        Amount(self.0.saturating_mul(n))
    }
}

impl Add for Amount {
    type Output = Amount;
    fn add(self, rhs: Amount) -> Amount {
        self.saturating_add(rhs)
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_multiple_of(SCALE) {
            write!(f, "{}", self.0 / SCALE)
        } else {
            write!(f, "{}.{:03}", self.0 / SCALE, self.0 % SCALE)
        }
    }
}

impl Serialize for Amount {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Amount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let x = f64::deserialize(d)?;
        Amount::from_f64(x).map_err(serde::de::Error::custom)
    }
}

/// (memory, bandwidth, cpu, energy). Memory and bandwidth are bytes, cpu and
/// energy abstract units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResourceVector {
    pub memory: Amount,
    pub bandwidth: Amount,
    pub cpu: Amount,
    pub energy: Amount,
}

impl ResourceVector {
    pub const ZERO: ResourceVector = ResourceVector {
        memory: Amount::ZERO,
        bandwidth: Amount::ZERO,
        cpu: Amount::ZERO,
        energy: Amount::ZERO,
    };

    /// Whole units per component.
    pub const fn units(memory: u64, bandwidth: u64, cpu: u64, energy: u64) -> Self {
        Self {
            memory: Amount::units(memory),
            bandwidth: Amount::units(bandwidth),
            cpu: Amount::units(cpu),
            energy: Amount::units(energy),
        }
    }

    pub fn uniform(a: Amount) -> Self {
        Self {
            memory: a,
            bandwidth: a,
            cpu: a,
            energy: a,
        }
    }

    pub fn components(&self) -> [Amount; 4] {
        [self.memory, self.bandwidth, self.cpu, self.energy]
    }

    /// Component-wise `self <= other`.
    pub fn fits_within(&self, other: &ResourceVector) -> bool {
        self.components().iter().zip(other.components()).all(|(a, b)| *a <= b)
    }

    pub fn checked_sub(&self, rhs: &ResourceVector) -> Option<ResourceVector> {
        Some(ResourceVector {
            memory: self.memory.checked_sub(rhs.memory)?,
            bandwidth: self.bandwidth.checked_sub(rhs.bandwidth)?,
            cpu: self.cpu.checked_sub(rhs.cpu)?,
            energy: self.energy.checked_sub(rhs.energy)?,
        })
    }

    pub fn times(&self, n: u64) -> ResourceVector {
        ResourceVector {
            memory: self.memory.times(n),
            bandwidth: self.bandwidth.times(n),
            cpu: self.cpu.times(n),
            energy: self.energy.times(n),
        }
    }

    pub fn memory_only(&self) -> ResourceVector {
        ResourceVector {
            memory: self.memory,
            ..ResourceVector::ZERO
        }
    }

    /// Component-wise minimum.
    pub fn min(&self, other: &ResourceVector) -> ResourceVector {
        ResourceVector {
            memory: self.memory.min(other.memory),
            bandwidth: self.bandwidth.min(other.bandwidth),
            cpu: self.cpu.min(other.cpu),
            energy: self.energy.min(other.energy),
        }
    }
}

impl Add for ResourceVector {
    type Output = ResourceVector;
    fn add(self, rhs: ResourceVector) -> ResourceVector {
        ResourceVector {
            memory: self.memory + rhs.memory,
            bandwidth: self.bandwidth + rhs.bandwidth,
            cpu: self.cpu + rhs.cpu,
            energy: self.energy + rhs.energy,
        }
    }
}

impl AddAssign for ResourceVector {
    fn add_assign(&mut self, rhs: ResourceVector) {
        *self = *self + rhs;
    }
}

impl fmt::Display for ResourceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(m={}, b={}, c={}, e={})",
            self.memory, self.bandwidth, self.cpu, self.energy
        )
    }
}

/// Limits `(M, B, C, E)` and what is left of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceBudget {
    limit: ResourceVector,
    remaining: ResourceVector,
}

impl ResourceBudget {
    pub fn new(limit: ResourceVector) -> Self {
        Self {
            limit,
            remaining: limit,
        }
    }

    /// Effectively unbounded; useful where accounting is not under test.
    pub fn unlimited() -> Self {
        Self::new(ResourceVector::uniform(Amount::MAX))
    }

    pub fn limit(&self) -> &ResourceVector {
        &self.limit
    }

    pub fn remaining(&self) -> &ResourceVector {
        &self.remaining
    }

    pub fn feasible(&self, cost: &ResourceVector) -> bool {
        cost.fits_within(&self.remaining)
    }

    /// Subtracts `cost`, or leaves the budget untouched if it does not fit.
    pub fn charge(&mut self, cost: &ResourceVector) -> Result<(), ResourceError> {
        match self.remaining.checked_sub(cost) {
            Some(rest) => {
                self.remaining = rest;
                Ok(())
            }
            None => Err(ResourceError::InfeasibleCharge {
                cost: *cost,
                remaining: self.remaining,
            }),
        }
    }

    /// Returns transient resources (buffer memory). Never exceeds the limit.
    pub fn refund(&mut self, amount: &ResourceVector) {
        self.remaining = (self.remaining + *amount).min(&self.limit);
    }
}

/// Affine per-message cost: a constant plus a per-byte coefficient per
/// component, applied to the wire size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    #[serde(default = "one")]
    pub per_byte_bandwidth: Amount,
    #[serde(default)]
    pub per_byte_cpu: Amount,
    #[serde(default)]
    pub per_message_cpu: Amount,
    #[serde(default)]
    pub per_byte_energy: Amount,
    #[serde(default)]
    pub per_message_energy: Amount,
    /// Buffer bytes held per wire byte while a message is queued.
    #[serde(default)]
    pub buffer_memory: Amount,
}

fn one() -> Amount {
    Amount::units(1)
}

impl Default for CostModel {
    /// Bandwidth is charged one unit per wire byte; everything else is free.
    fn default() -> Self {
        Self {
            per_byte_bandwidth: Amount::units(1),
            ..Self::zero()
        }
    }
}

impl CostModel {
    pub fn zero() -> Self {
        Self {
            per_byte_bandwidth: Amount::ZERO,
            per_byte_cpu: Amount::ZERO,
            per_message_cpu: Amount::ZERO,
            per_byte_energy: Amount::ZERO,
            per_message_energy: Amount::ZERO,
            buffer_memory: Amount::ZERO,
        }
    }

    /// Cost of moving a message of `size` wire bytes.
    pub fn cost_of_size(&self, size: usize) -> ResourceVector {
        let n = size as u64;
        ResourceVector {
            memory: self.buffer_memory.times(n),
            bandwidth: self.per_byte_bandwidth.times(n),
            cpu: self.per_message_cpu + self.per_byte_cpu.times(n),
            energy: self.per_message_energy + self.per_byte_energy.times(n),
        }
    }

    pub fn from_json(text: &str) -> Result<CostModel, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// The consumption `ρ` of sending or receiving `m`.
pub fn consumption(model: &CostModel, m: &Message) -> Result<ResourceVector, WireError> {
    Ok(model.cost_of_size(wire::wire_size(m)?))
}

/// One agent action in a resource trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageSample {
    pub tick: Tick,
    pub cost: ResourceVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub used: f64,
    pub limit: f64,
    pub slack: f64,
    pub ok: bool,
}

impl BoundCheck {
    fn new(used: Amount, limit: Amount) -> Self {
        Self {
            used: used.as_f64(),
            limit: limit.as_f64(),
            slack: limit.as_f64() - used.as_f64(),
            ok: used <= limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeReport {
    /// Ticks in the window `[0, horizon]`.
    pub window_ticks: u64,
    pub bandwidth: BoundCheck,
    pub memory: BoundCheck,
    pub cpu: BoundCheck,
    pub energy: BoundCheck,
    pub max_actions_per_tick: u64,
    pub rate_cap: u64,
    pub rate_ok: bool,
}

impl CumulativeReport {
    pub fn all_ok(&self) -> bool {
        self.bandwidth.ok && self.memory.ok && self.cpu.ok && self.energy.ok && self.rate_ok
    }
}

/// Checks the linear cumulative bounds over `[0, horizon]`:
/// `Bandwidth(T) <= B*T`, `Memory(T) <= M`, `CPU(T) <= C*T`, `Energy(T) <= E*T`.
///
/// `rates` holds B, C and E as per-tick rates and M as a level. Memory in the
/// trace is transient buffer space, so the memory check uses the peak sum of
/// memory held within a single tick.
pub fn cumulative_bound_check(
    trace: &[UsageSample],
    rates: &ResourceVector,
    horizon: Tick,
    rate_cap: u64,
) -> CumulativeReport {
    let window = horizon + 1;
    let mut total = ResourceVector::ZERO;
    let mut per_tick: BTreeMap<Tick, (Amount, u64)> = BTreeMap::new();
    for s in trace.iter().filter(|s| s.tick <= horizon) {
        total += s.cost;
        let e = per_tick.entry(s.tick).or_default();
        e.0 = e.0 + s.cost.memory;
        e.1 += 1;
    }
    let peak_memory = per_tick.values().map(|e| e.0).max().unwrap_or_default();
    let max_rate = per_tick.values().map(|e| e.1).max().unwrap_or(0);
    CumulativeReport {
        window_ticks: window,
        bandwidth: BoundCheck::new(total.bandwidth, rates.bandwidth.times(window)),
        memory: BoundCheck::new(peak_memory, rates.memory),
        cpu: BoundCheck::new(total.cpu, rates.cpu.times(window)),
        energy: BoundCheck::new(total.energy, rates.energy.times(window)),
        max_actions_per_tick: max_rate,
        rate_cap,
        rate_ok: max_rate <= rate_cap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{OptionType, Verb};

    #[test]
    fn default_model_charges_wire_bytes_as_bandwidth() {
        let c = consumption(&CostModel::default(), &Message::new(Verb::Ping)).unwrap();
        assert_eq!(c, ResourceVector::units(0, 11, 0, 0));
    }

    #[test]
    fn zero_model_is_free() {
        let m = Message::new(Verb::Tell).with_payload(vec![1; 100]);
        assert_eq!(consumption(&CostModel::zero(), &m).unwrap(), ResourceVector::ZERO);
    }

    #[test]
    fn affine_components() {
        let model = CostModel {
            per_byte_bandwidth: Amount::units(1),
            per_byte_cpu: Amount::millis(500),
            per_message_cpu: Amount::units(10),
            per_byte_energy: Amount::units(2),
            per_message_energy: Amount::units(1),
            buffer_memory: Amount::units(1),
        };
        let c = model.cost_of_size(11);
        assert_eq!(c.memory, Amount::units(11));
        assert_eq!(c.bandwidth, Amount::units(11));
        assert_eq!(c.cpu, Amount::millis(15_500));
        assert_eq!(c.energy, Amount::units(23));
    }

    #[test]
    fn adding_payload_never_costs_less() {
        let model = CostModel {
            per_byte_cpu: Amount::millis(250),
            buffer_memory: Amount::units(1),
            ..CostModel::default()
        };
        let m1 = Message::new(Verb::Tell).with_option(OptionType::CID, vec![0, 1]);
        let m2 = m1.clone().with_payload(b"p(1)".to_vec());
        let c1 = consumption(&model, &m1).unwrap();
        let c2 = consumption(&model, &m2).unwrap();
        assert!(c1.fits_within(&c2));
    }

    #[test]
    fn feasibility_is_non_strict() {
        let b = ResourceBudget::new(ResourceVector::units(100, 100, 100, 100));
        assert!(b.feasible(&ResourceVector::units(0, 11, 1, 1)));
        assert!(b.feasible(&ResourceVector::units(100, 100, 100, 100)));
        let empty = ResourceBudget::new(ResourceVector::ZERO);
        assert!(!empty.feasible(&ResourceVector::units(0, 11, 0, 0)));
    }

    #[test]
    fn charge_subtracts_and_refuses_overdraft() {
        let mut b = ResourceBudget::new(ResourceVector::units(10, 20, 30, 40));
        b.charge(&ResourceVector::units(1, 2, 3, 4)).unwrap();
        assert_eq!(*b.remaining(), ResourceVector::units(9, 18, 27, 36));
        let before = b.clone();
        let err = b.charge(&ResourceVector::units(0, 19, 0, 0)).unwrap_err();
        assert!(matches!(err, ResourceError::InfeasibleCharge { .. }));
        assert_eq!(b, before);
    }

    #[test]
    fn refund_is_capped_at_limit() {
        let mut b = ResourceBudget::new(ResourceVector::units(10, 0, 0, 0));
        b.charge(&ResourceVector::units(4, 0, 0, 0)).unwrap();
        b.refund(&ResourceVector::units(9, 0, 0, 0));
        assert_eq!(*b.remaining(), *b.limit());
    }

    #[test]
    fn cost_model_json_defaults_and_rejects_negative() {
        let m = CostModel::from_json("{}").unwrap();
        assert_eq!(m, CostModel::default());
        let m = CostModel::from_json(r#"{"per_byte_cpu": 0.5, "per_message_energy": 2}"#).unwrap();
        assert_eq!(m.per_byte_cpu, Amount::millis(500));
        assert_eq!(m.per_message_energy, Amount::units(2));
        assert!(CostModel::from_json(r#"{"per_byte_cpu": -1}"#).is_err());
        assert!(CostModel::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn cumulative_empty_trace_has_full_slack() {
        let rates = ResourceVector::units(100, 50, 10, 10);
        let r = cumulative_bound_check(&[], &rates, 9, 4);
        assert!(r.all_ok());
        assert_eq!(r.window_ticks, 10);
        assert_eq!(r.bandwidth.slack, 500.0);
        assert_eq!(r.memory.slack, 100.0);
    }

    #[test]
    fn cumulative_flags_bandwidth_overrun() {
        let rates = ResourceVector::units(100, 10, 10, 10);
        let trace: Vec<_> = (0..5)
            .map(|t| UsageSample {
                tick: t,
                cost: ResourceVector::units(0, 30, 0, 0),
            })
            .collect();
        // 150 bytes over 5 ticks against B*T = 50.
        let r = cumulative_bound_check(&trace, &rates, 4, 4);
        assert!(!r.bandwidth.ok);
        assert!(r.memory.ok && r.cpu.ok && r.energy.ok && r.rate_ok);
        assert_eq!(r.bandwidth.slack, -100.0);
    }
}

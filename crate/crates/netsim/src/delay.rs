//! Iteration-unit delay schedules for mailbox traffic.
//!
//! A message posted while the receiver is at local iteration `s` with a drawn
//! delay `d ≥ 1` becomes deliverable once the receiver reaches `s + d − 1`.
//! Its age when consumed at iteration `t` is `τ = t − s + 1`, so the zero
//! schedule (`d = 1`) gives `τ = 1` and `fixed(d)` gives `τ = d`.

use rand::Rng;
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DelayModel {
    #[default]
    Zero,
    Fixed(u64),
    Uniform {
        lo: u64,
        hi: u64,
    },
    /// `table[sender][receiver]`.
    PerLink(Vec<Vec<u64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DelaySchedule {
    #[serde(default)]
    pub model: DelayModel,
    #[serde(default)]
    pub seed: u64,
}

impl DelaySchedule {
    pub fn zero() -> Self {
        DelaySchedule::default()
    }

    pub fn fixed(d: u64) -> Self {
        DelaySchedule { model: DelayModel::Fixed(d), seed: 0 }
    }

    pub fn uniform(lo: u64, hi: u64, seed: u64) -> Self {
        DelaySchedule { model: DelayModel::Uniform { lo, hi }, seed }
    }

    pub fn validate(&self, size: usize) -> Result<(), String> {
        match &self.model {
            DelayModel::Uniform { lo, hi } if lo > hi => Err(format!("uniform delay bounds reversed: {lo} > {hi}")),
            DelayModel::PerLink(t) if t.len() != size || t.iter().any(|r| r.len() != size) => {
                Err(format!("per-link delay table must be {size} × {size}"))
            }
            _ => Ok(()),
        }
    }

    /// Largest delay the schedule can draw.
    pub fn bound(&self) -> u64 {
        match &self.model {
            DelayModel::Zero => 1,
            DelayModel::Fixed(d) => (*d).max(1),
            DelayModel::Uniform { hi, .. } => (*hi).max(1),
            DelayModel::PerLink(t) => t.iter().flatten().copied().max().unwrap_or(1).max(1),
        }
    }
}

/// Stateful sampler; draws are consumed in send order.
#[derive(Debug, Clone)]
pub struct DelaySampler {
    model: DelayModel,
    rng: SplitMix64,
}

impl DelaySampler {
    pub fn new(schedule: &DelaySchedule) -> Self {
        DelaySampler {
            model: schedule.model.clone(),
            rng: SplitMix64::seed_from_u64(schedule.seed),
        }
    }

    pub fn draw(&mut self, sender: usize, receiver: usize) -> u64 {
        let d = match &self.model {
            DelayModel::Zero => 1,
            DelayModel::Fixed(d) => *d,
            DelayModel::Uniform { lo, hi } => self.rng.random_range(*lo..=*hi),
            DelayModel::PerLink(t) => t[sender][receiver],
        };
        d.max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_seeded_and_bounded() {
        let s = DelaySchedule::uniform(1, 3, 42);
        let mut a = DelaySampler::new(&s);
        let mut b = DelaySampler::new(&s);
        let xs: Vec<u64> = (0..200).map(|_| a.draw(0, 1)).collect();
        let ys: Vec<u64> = (0..200).map(|_| b.draw(0, 1)).collect();
        assert_eq!(xs, ys);
        assert!(xs.iter().all(|d| (1..=3).contains(d)));
        assert!((1..=3).all(|d| xs.contains(&d)));
    }

    #[test]
    fn zero_and_fixed_zero_draw_one() {
        assert_eq!(DelaySampler::new(&DelaySchedule::zero()).draw(0, 1), 1);
        assert_eq!(DelaySampler::new(&DelaySchedule::fixed(0)).draw(0, 1), 1);
        assert_eq!(DelaySampler::new(&DelaySchedule::fixed(3)).draw(1, 0), 3);
    }

    #[test]
    fn validation() {
        assert!(DelaySchedule { model: DelayModel::PerLink(vec![vec![1]]), seed: 0 }.validate(2).is_err());
        assert!(DelaySchedule::uniform(3, 1, 0).validate(2).is_err());
        assert_eq!(DelaySchedule::uniform(1, 3, 0).bound(), 3);
    }
}

//! Pieces shared by the reversible-jump samplers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal probabilities of the three move types.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoveProbs {
    pub birth: f64,
    pub death: f64,
    pub update: f64,
}

impl Default for MoveProbs {
    fn default() -> Self {
        MoveProbs { birth: 0.3, death: 0.3, update: 0.4 }
    }
}

impl MoveProbs {
    pub fn validate(&self) -> Result<()> {
        let all = [self.birth, self.death, self.update];
        if all.iter().any(|p| !(0.0..=1.0).contains(p)) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "move probabilities {all:?} must lie in [0, 1] and sum to 1"
            )));
        }
        if self.birth > 0.0 && self.death == 0.0 || self.death > 0.0 && self.birth == 0.0 {
            return Err(Error::Config("birth and death must be both enabled or both disabled".into()));
        }
        Ok(())
    }

    /// Probability of proposing a birth from a state with `k` components.
    pub fn birth_at(&self, k: usize, k_max: usize) -> f64 {
        if k >= k_max {
            0.0
        } else {
            self.birth
        }
    }

    /// Probability of proposing a death from a state with `k` components.
    pub fn death_at(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.death
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Birth,
    Death,
    Update,
}

impl Move {
    /// Picks a move given a uniform draw `u`; moves that are impossible in
    /// the current state fold into `Update`.
    pub fn select(u: f64, probs: &MoveProbs, k: usize, k_max: usize) -> Move {
        let b = probs.birth_at(k, k_max);
        let d = probs.death_at(k);
        if u < b {
            Move::Birth
        } else if u < b + d {
            Move::Death
        } else {
            Move::Update
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counter {
    pub proposed: u64,
    pub accepted: u64,
}

impl Counter {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Acceptance counts per move type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveStats {
    pub birth: Counter,
    pub death: Counter,
    pub update: Counter,
    pub hyper: Counter,
}

/// Metropolis-Hastings accept/reject on a log ratio.
pub fn mh_accept<R: rand::Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

/// Reflects `x` into `[lo, hi]`.
pub fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    if !x.is_finite() {
        return lo + 0.5 * w;
    }
    // fold into one period of length 2w, then mirror
    x = (x - lo).rem_euclid(2.0 * w);
    if x > w {
        x = 2.0 * w - x;
    }
    lo + x
}

/// `ln P(X ≤ k_max)` for `X ~ Poisson(rate)`.
pub fn ln_poisson_cdf(k_max: usize, rate: f64) -> f64 {
    if rate == 0.0 {
        return 0.0;
    }
    let ln_rate = rate.ln();
    let terms: Vec<f64> = (0..=k_max)
        .map(|j| j as f64 * ln_rate - crate::model::ln_factorial(j))
        .collect();
    crate::model::log_sum_exp(&terms) - rate
}

/// `ln p(k | Λ)` for a Poisson prior truncated to `0..=k_max`.
pub fn ln_truncated_poisson(k: usize, rate: f64, k_max: usize) -> f64 {
    if k > k_max {
        return f64::NEG_INFINITY;
    }
    let ln_pmf = if k == 0 {
        -rate
    } else {
        k as f64 * rate.ln() - rate - crate::model::ln_factorial(k)
    };
    ln_pmf - ln_poisson_cdf(k_max, rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reflection() {
        assert_relative_eq!(reflect(-0.1, 0.0, 1.0), 0.1);
        assert_relative_eq!(reflect(1.3, 0.0, 1.0), 0.7);
        assert_relative_eq!(reflect(2.2, 0.0, 1.0), 0.2, epsilon = 1e-12);
        assert_relative_eq!(reflect(0.4, 0.0, 1.0), 0.4);
    }

    #[test]
    fn truncated_poisson_normalizes() {
        let total: f64 = (0..=5).map(|k| ln_truncated_poisson(k, 2.5, 5).exp()).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        assert_eq!(ln_truncated_poisson(6, 2.5, 5), f64::NEG_INFINITY);
    }

    #[test]
    fn move_selection_respects_bounds() {
        let p = MoveProbs::default();
        assert_eq!(Move::select(0.5, &p, 0, 10), Move::Update);
        assert_eq!(Move::select(0.1, &p, 10, 10), Move::Death);
        assert_eq!(Move::select(0.5, &p, 10, 10), Move::Update);
        assert_eq!(Move::select(0.1, &p, 3, 10), Move::Birth);
        assert_eq!(Move::select(0.4, &p, 3, 10), Move::Death);
        assert!(MoveProbs { birth: 0.5, death: 0.5, update: 0.5 }.validate().is_err());
        assert!(MoveProbs { birth: 0.5, death: 0.0, update: 0.5 }.validate().is_err());
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Step-size rule `t ↦ η_t` for `t ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    /// `η_t = 2 / (μ (t + t0))`
    InverseTime { mu: f64, t0: f64 },
    /// `η_t = η₁ t^(−θ)`
    Polynomial { eta1: f64, theta: f64 },
    Constant { eta: f64 },
}

impl StepSchedule {
    /// Inverse-time schedule with `t0 = max(⌈4β/μ⌉, 1)`, which keeps `η_t ≤ 1/(2β)`.
    pub fn inverse_time_for(mu: f64, beta: f64) -> Self {
        let t0 = (4.0 * beta / mu).ceil().max(1.0);
        StepSchedule::InverseTime { mu, t0 }
    }

    /// `η_t = c / (t + 1)`, i.e. inverse time with `μ = 2/c`, `t0 = 1`.
    pub fn harmonic(c: f64) -> Self {
        StepSchedule::InverseTime { mu: 2.0 / c, t0: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::InverseTime { mu, t0 } => mu.is_finite() && mu > 0.0 && t0.is_finite() && t0 >= 1.0,
            StepSchedule::Polynomial { eta1, theta } => {
                eta1.is_finite() && eta1 > 0.0 && theta > 0.0 && theta < 1.0
            }
            StepSchedule::Constant { eta } => eta.is_finite() && eta >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid step schedule {self:?}")))
        }
    }

    pub fn step_f64(&self, t: usize) -> f64 {
        debug_assert!(t >= 1, "steps are indexed from 1");
        let t = t as f64;
        match *self {
            StepSchedule::InverseTime { mu, t0 } => 2.0 / (mu * (t + t0)),
            StepSchedule::Polynomial { eta1, theta } => eta1 * t.powf(-theta),
            StepSchedule::Constant { eta } => eta,
        }
    }

    pub fn step<T: Scalar>(&self, t: usize) -> T {
        T::of(self.step_f64(t))
    }

    /// Largest step over all `t ≥ 1`; every rule here is non-increasing.
    pub fn max_step(&self) -> f64 {
        self.step_f64(1)
    }
}

/// `η_t` for the given schedule.
pub fn step_size(schedule: &StepSchedule, t: usize) -> f64 {
    schedule.step_f64(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn formulas() {
        assert_relative_eq!(step_size(&StepSchedule::InverseTime { mu: 2.0, t0: 1.0 }, 1), 0.5);
        assert_relative_eq!(step_size(&StepSchedule::Polynomial { eta1: 0.1, theta: 0.5 }, 4), 0.05);
        assert_eq!(step_size(&StepSchedule::Constant { eta: 0.3 }, 99), 0.3);
    }

    #[test]
    fn inverse_time_respects_smoothness_cap() {
        let s = StepSchedule::inverse_time_for(1.0, 1.0);
        assert_eq!(s, StepSchedule::InverseTime { mu: 1.0, t0: 4.0 });
        for t in 1..10_000 {
            assert!(s.step_f64(t) <= 0.5);
        }
        assert_relative_eq!(s.step_f64(1), 0.4);
    }

    #[test]
    fn harmonic_matches_c_over_t_plus_one() {
        let s = StepSchedule::harmonic(1.0);
        for t in 1..50 {
            assert_relative_eq!(s.step_f64(t), 1.0 / (t as f64 + 1.0), epsilon = 1e-15);
        }
    }

    #[test]
    fn validation() {
        assert!(StepSchedule::InverseTime { mu: 0.0, t0: 1.0 }.validate().is_err());
        assert!(StepSchedule::InverseTime { mu: 1.0, t0: 0.5 }.validate().is_err());
        assert!(StepSchedule::Polynomial { eta1: 0.1, theta: 1.0 }.validate().is_err());
        assert!(StepSchedule::Constant { eta: 0.0 }.validate().is_ok());
    }
}

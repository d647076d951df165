use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step-size schedule indexed by the 1-based global iteration `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    /// `eta_t = numerator / (mu * (t + a))` with `a = max(a_factor * kappa, tau)`.
    /// Output averaging weights iterates by `p_t = (t + a)^2`.
    Theory {
        mu: f64,
        kappa: f64,
        tau: usize,
        numerator: f64,
        a_factor: f64,
    },
    /// `eta_t = eta0 * (1 - decay)^(t - 1)`.
    Geometric { eta0: f64, decay: f64 },
    Constant { eta: f64 },
}

impl LrSchedule {
    /// Strongly convex schedule with the default constants (16, 128).
    pub fn theory(mu: f64, kappa: f64, tau: usize) -> Self {
        LrSchedule::Theory {
            mu,
            kappa,
            tau,
            numerator: 16.0,
            a_factor: 128.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LrSchedule::Theory {
                mu,
                kappa,
                tau,
                numerator,
                a_factor,
            } => mu > 0.0 && kappa >= 1.0 && tau >= 1 && numerator > 0.0 && a_factor >= 0.0,
            LrSchedule::Geometric { eta0, decay } => eta0 > 0.0 && (0.0..1.0).contains(&decay),
            LrSchedule::Constant { eta } => eta > 0.0,
        };
        if ok && self.eta(1).is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid learning-rate schedule {self:?}")))
        }
    }

    /// Offset `a`; zero for the experimental schedules.
    pub fn offset(&self) -> f64 {
        match *self {
            LrSchedule::Theory {
                kappa, tau, a_factor, ..
            } => (a_factor * kappa).max(tau as f64),
            _ => 0.0,
        }
    }

    pub fn eta(&self, t: usize) -> f64 {
        match *self {
            LrSchedule::Theory { mu, numerator, .. } => numerator / (mu * (t as f64 + self.offset())),
            LrSchedule::Geometric { eta0, decay } => eta0 * (1.0 - decay).powi(t as i32 - 1),
            LrSchedule::Constant { eta } => eta,
        }
    }

    /// Output-averaging weight `p_t`.
    pub fn weight(&self, t: usize) -> f64 {
        match self {
            LrSchedule::Theory { .. } => (t as f64 + self.offset()).powi(2),
            _ => 1.0,
        }
    }

    pub fn uses_weighted_output(&self) -> bool {
        matches!(self, LrSchedule::Theory { .. })
    }
}

/// Running `sum(p_t x_t) / sum(p_t)`.
///
/// Kept as an incrementally updated mean, so a constant sequence averages to
/// itself exactly.
#[derive(Debug, Clone, Default)]
pub struct WeightedAverage {
    total_weight: f64,
    mean: Vec<f64>,
}

impl WeightedAverage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn add(&mut self, weight: f64, x: &[f64]) -> Result<()> {
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::invalid(format!("averaging weight must be > 0, got {weight}")));
        }
        if self.total_weight == 0.0 {
            self.mean = x.to_vec();
        } else {
            if self.mean.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.mean.len(),
                    got: x.len(),
                });
            }
            let frac = weight / (self.total_weight + weight);
            for (m, v) in self.mean.iter_mut().zip(x) {
                *m += frac * (v - *m);
            }
        }
        self.total_weight += weight;
        Ok(())
    }

    pub fn finalize(&self) -> Result<crate::numkit::ParamVector> {
        if self.total_weight == 0.0 {
            return Err(Error::invalid("weighted average of no terms"));
        }
        crate::numkit::ParamVector::new(self.mean.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theory_schedule_constants() {
        let s = LrSchedule::theory(0.5, 2.0, 10);
        assert_eq!(s.offset(), 256.0);
        assert_eq!(s.eta(4), 16.0 / (0.5 * 260.0));
        assert_eq!(s.weight(4), 260.0 * 260.0);
        // tau dominates when kappa is small
        assert_eq!(LrSchedule::theory(1.0, 1.0, 500).offset(), 500.0);
    }

    #[test]
    fn geometric_decays_one_percent() {
        let s = LrSchedule::Geometric { eta0: 0.1, decay: 0.01 };
        assert_eq!(s.eta(1), 0.1);
        assert!((s.eta(2) - 0.099).abs() < 1e-15);
        assert_eq!(s.weight(7), 1.0);
    }

    #[test]
    fn schedules_positive_nonincreasing() {
        for s in [
            LrSchedule::theory(0.01, 300.0, 10),
            LrSchedule::Geometric { eta0: 0.1, decay: 0.01 },
            LrSchedule::Constant { eta: 0.05 },
        ] {
            s.validate().unwrap();
            let mut prev = f64::INFINITY;
            for t in 1..5000 {
                let e = s.eta(t);
                assert!(e > 0.0 && e <= prev);
                prev = e;
            }
        }
    }

    #[test]
    fn invalid_schedules() {
        assert!(LrSchedule::theory(0.0, 1.0, 1).validate().is_err());
        assert!(LrSchedule::Constant { eta: -1.0 }.validate().is_err());
        assert!(LrSchedule::Geometric { eta0: 0.1, decay: 1.0 }.validate().is_err());
    }

    #[test]
    fn constant_sequence_exact() {
        let s = LrSchedule::theory(0.1, 37.0, 10);
        let x = [0.1, -3.7, 1e-9, 123.456];
        let mut avg = WeightedAverage::new();
        for t in 1..=500 {
            avg.add(s.weight(t), &x).unwrap();
        }
        assert_eq!(avg.finalize().unwrap().as_slice(), &x);
    }

    #[test]
    fn weighted_mean_matches_definition() {
        let mut avg = WeightedAverage::new();
        avg.add(1.0, &[0.0]).unwrap();
        avg.add(3.0, &[4.0]).unwrap();
        assert!((avg.finalize().unwrap().as_slice()[0] - 3.0).abs() < 1e-15);
        assert!(WeightedAverage::new().finalize().is_err());
        assert!(avg.add(0.0, &[1.0]).is_err());
    }
}

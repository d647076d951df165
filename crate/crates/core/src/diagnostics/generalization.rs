//! Closed-form quantities from the mixed-model generalization bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs of the generalization bound for one client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationInputs {
    pub alpha: f64,
    /// Empirical risk of the global hypothesis on the pooled sample.
    pub global_emp_risk: f64,
    /// Distribution divergence between the mixture and client `i`.
    pub l1_div: f64,
    /// True risk of the client's optimal local hypothesis.
    pub local_opt_risk: f64,
    pub d_vc: f64,
    pub delta_conf: f64,
    pub m_total: f64,
    pub m_local: f64,
    pub c: f64,
    /// Bound on the loss.
    pub b: f64,
    /// Lipschitz constant of the loss.
    pub g: f64,
    pub lambda_s: f64,
}

impl GeneralizationInputs {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("global_emp_risk", self.global_emp_risk),
            ("l1_div", self.l1_div),
            ("local_opt_risk", self.local_opt_risk),
            ("d_vc", self.d_vc),
            ("c", self.c),
            ("b", self.b),
            ("g", self.g),
            ("lambda_s", self.lambda_s),
        ];
        for (name, x) in named {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {x}")));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha={} outside [0, 1]", self.alpha)));
        }
        if !(self.delta_conf > 0.0 && self.delta_conf < 1.0) {
            return Err(Error::invalid(format!("delta_conf={} outside (0, 1)", self.delta_conf)));
        }
        if !(self.m_local >= 1.0 && self.m_total >= self.m_local && self.m_total.is_finite()) {
            return Err(Error::invalid(format!(
                "need m_total >= m_local >= 1, got m_total={} m_local={}",
                self.m_total, self.m_local
            )));
        }
        Ok(())
    }

    fn complexity(&self, m: f64) -> f64 {
        ((self.d_vc + (1.0 / self.delta_conf).ln()) / m).sqrt()
    }

    /// Risk term carried by the global model.
    pub fn a_term(&self) -> f64 {
        self.global_emp_risk + self.b * self.l1_div + self.c * self.complexity(self.m_total)
    }

    /// Risk term carried by the local model.
    pub fn b_term(&self) -> f64 {
        self.local_opt_risk + 2.0 * self.c * self.complexity(self.m_local) + self.g * self.lambda_s
    }
}

/// The mixing weight that minimizes [`theorem1_bound`]: `A / (A + B)`.
pub fn optimal_alpha(inputs: &GeneralizationInputs) -> Result<f64> {
    inputs.validate()?;
    let a = inputs.a_term();
    let b = inputs.b_term();
    if a + b == 0.0 {
        return Err(Error::invalid("optimal alpha undefined: both risk terms are zero"));
    }
    Ok(a / (a + b))
}

/// `2 (1 - alpha)^2 A + 2 alpha^2 B` at `inputs.alpha`.
pub fn theorem1_bound(inputs: &GeneralizationInputs) -> Result<f64> {
    inputs.validate()?;
    let a = inputs.alpha;
    Ok(2.0 * (1.0 - a).powi(2) * inputs.a_term() + 2.0 * a * a * inputs.b_term())
}

/// Bound on the risk of the personalized model minus that of the local ERM
/// model. Negative values favour personalization.
pub fn corollary1_gap(inputs: &GeneralizationInputs, c2: f64) -> Result<f64> {
    inputs.validate()?;
    if !(c2 > 0.0) || !c2.is_finite() {
        return Err(Error::invalid(format!("c2 must be positive, got {c2}")));
    }
    let a2 = 2.0 * inputs.alpha * inputs.alpha;
    Ok((a2 - 1.0) * inputs.local_opt_risk
        + (a2 * inputs.c - c2) * inputs.complexity(inputs.m_local)
        + a2 * inputs.g * inputs.lambda_s
        + 2.0 * (1.0 - inputs.alpha).powi(2) * inputs.a_term())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn base() -> GeneralizationInputs {
        GeneralizationInputs {
            alpha: 0.5,
            global_emp_risk: 0.2,
            l1_div: 0.3,
            local_opt_risk: 0.1,
            d_vc: 10.0,
            delta_conf: 0.05,
            m_total: 10_000.0,
            m_local: 100.0,
            c: 1.0,
            b: 1.0,
            g: 1.0,
            lambda_s: 0.4,
        }
    }

    /// Inputs whose A and B terms are exactly the given values.
    fn with_terms(a: f64, b: f64) -> GeneralizationInputs {
        GeneralizationInputs {
            global_emp_risk: a,
            l1_div: 0.0,
            local_opt_risk: b,
            c: 0.0,
            lambda_s: 0.0,
            ..base()
        }
    }

    #[test]
    fn alpha_star_examples() {
        assert_eq!(optimal_alpha(&with_terms(0.7, 0.7)).unwrap(), 0.5);
        assert!((optimal_alpha(&with_terms(99.0, 1.0)).unwrap() - 0.99).abs() < 1e-15);
        assert_eq!(optimal_alpha(&with_terms(0.0, 3.0)).unwrap(), 0.0);
        assert!(optimal_alpha(&with_terms(0.0, 0.0)).is_err());
    }

    #[test]
    fn bound_endpoints() {
        let mut x = base();
        x.alpha = 0.0;
        assert!((theorem1_bound(&x).unwrap() - 2.0 * x.a_term()).abs() < 1e-15);
        x.alpha = 1.0;
        assert!((theorem1_bound(&x).unwrap() - 2.0 * x.b_term()).abs() < 1e-15);
    }

    #[test]
    fn gap_sign_and_cancellation() {
        let mut x = with_terms(0.0, 0.5);
        x.alpha = 0.1;
        x.c = 1.0;
        x.lambda_s = 0.2;
        assert!(corollary1_gap(&x, 1.0).unwrap() < 0.0);

        // With C > 0 the A term cannot vanish, so only the local terms cancel.
        let mut y = with_terms(0.0, 0.3);
        y.alpha = std::f64::consts::FRAC_1_SQRT_2;
        y.c = 1.0;
        let c2 = 2.0 * y.alpha * y.alpha * y.c;
        let rest = 2.0 * (1.0 - y.alpha).powi(2) * y.a_term();
        let local = (2.0 * y.alpha * y.alpha - 1.0) * y.local_opt_risk;
        assert!((corollary1_gap(&y, c2).unwrap() - rest - local).abs() < 1e-15);
        y.m_total = 1e300;
        y.local_opt_risk = 0.0;
        assert!(corollary1_gap(&y, c2).unwrap().abs() < 1e-15);
    }

    #[test]
    fn gap_grows_with_divergence() {
        let x = base();
        let mut y = base();
        y.l1_div += 0.5;
        assert!(corollary1_gap(&y, 1.0).unwrap() > corollary1_gap(&x, 1.0).unwrap());
    }

    #[test]
    fn alpha_star_monotonicity() {
        let x = base();
        let a0 = optimal_alpha(&x).unwrap();
        let bump = |f: fn(&mut GeneralizationInputs)| {
            let mut y = base();
            f(&mut y);
            optimal_alpha(&y).unwrap()
        };
        assert!(bump(|y| y.l1_div += 0.1) > a0);
        assert!(bump(|y| y.global_emp_risk += 0.1) > a0);
        assert!(bump(|y| y.local_opt_risk += 0.1) < a0);
        assert!(bump(|y| y.lambda_s += 0.1) < a0);
    }

    #[test]
    fn invalid_inputs() {
        let mut x = base();
        x.delta_conf = 1.0;
        assert!(theorem1_bound(&x).is_err());
        let mut x = base();
        x.m_local = 2.0 * x.m_total;
        assert!(optimal_alpha(&x).is_err());
        let mut x = base();
        x.alpha = -0.1;
        assert!(theorem1_bound(&x).is_err());
        assert!(corollary1_gap(&base(), 0.0).is_err());
    }
}

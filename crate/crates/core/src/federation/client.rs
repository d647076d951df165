use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numkit::{dot, mix, ParamVector, RngStream};

use super::schedule::WeightedAverage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    Fixed,
    Adaptive,
}

/// One participant: local model `v`, local copy `w_local` of the global
/// model, and mixing weight `alpha` in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub v: ParamVector,
    pub w_local: ParamVector,
    alpha: f64,
    pub alpha_mode: AlphaMode,
    pub rng: RngStream,
    pub out_acc_v: WeightedAverage,
    pub step_count: usize,
}

impl ClientState {
    pub fn new(id: usize, init: ParamVector, alpha: f64, alpha_mode: AlphaMode, rng: RngStream) -> Self {
        Self {
            id,
            v: init.clone(),
            w_local: init,
            alpha: alpha.clamp(0.0, 1.0),
            alpha_mode,
            rng,
            out_acc_v: WeightedAverage::new(),
            step_count: 0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `alpha * v + (1 - alpha) * w_local`.
    pub fn personalized(&self) -> Result<ParamVector> {
        mix(self.alpha, &self.v, &self.w_local)
    }

    /// One step on the local copy of the global model and on the local model,
    /// with both gradients taken on the same minibatch (`grad` closes over it):
    ///
    /// ```text
    /// w_local <- w_local - eta * grad(w_local)
    /// v       <- v - eta * alpha * grad(alpha * v + (1 - alpha) * w_local)
    /// ```
    ///
    /// With `chain_rule == false` the factor `alpha` on the `v` step is dropped.
    pub fn local_step<G>(&mut self, eta: f64, chain_rule: bool, grad: G) -> Result<()>
    where
        G: Fn(&ParamVector) -> Result<ParamVector>,
    {
        let g_w = grad(&self.w_local)?;
        let g_bar = grad(&self.personalized()?)?;
        let v_scale = if chain_rule { eta * self.alpha } else { eta };
        self.w_local.axpy_assign(-eta, &g_w)?;
        self.v.axpy_assign(-v_scale, &g_bar)?;
        self.step_count += 1;
        Ok(())
    }

    /// Projected gradient step on the mixing weight:
    /// `alpha <- clip(alpha - eta * <v - w_local, grad(v_bar)>, 0, 1)`.
    pub fn update_alpha<G>(&mut self, eta: f64, grad: G) -> Result<()>
    where
        G: Fn(&ParamVector) -> Result<ParamVector>,
    {
        let g_bar = grad(&self.personalized()?)?;
        let diff = self.v.sub(&self.w_local)?;
        let corr = dot(&diff, &g_bar)?;
        self.set_alpha(self.alpha - eta * corr);
        Ok(())
    }

    pub(crate) fn set_alpha(&mut self, alpha: f64) {
        self.alpha = if alpha.is_nan() { self.alpha } else { alpha.clamp(0.0, 1.0) };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    fn client(v: &[f64], w: &[f64], alpha: f64) -> ClientState {
        let mut c = ClientState::new(0, pv(w), alpha, AlphaMode::Adaptive, RngStream::new(0, 0));
        c.v = pv(v);
        c
    }

    /// f(x) = x^2 / 2 coordinate-wise
    fn half_square(p: &ParamVector) -> Result<ParamVector> {
        Ok(p.clone())
    }

    #[test]
    fn hand_evaluated_step() {
        let mut c = client(&[2.0], &[2.0], 0.5);
        c.local_step(0.1, true, half_square).unwrap();
        assert!((c.v.as_slice()[0] - 1.9).abs() < 1e-15);
        assert!((c.w_local.as_slice()[0] - 1.8).abs() < 1e-15);
        assert_eq!(c.step_count, 1);
    }

    #[test]
    fn alpha_zero_freezes_v() {
        let mut c = client(&[3.0, -1.0], &[0.5, 0.5], 0.0);
        c.local_step(0.3, true, half_square).unwrap();
        assert_eq!(c.v, pv(&[3.0, -1.0]));
        assert_eq!(c.personalized().unwrap(), c.w_local);
    }

    #[test]
    fn alpha_one_is_plain_sgd_on_v() {
        let mut c = client(&[3.0, -1.0], &[0.5, 0.5], 1.0);
        c.local_step(0.25, true, half_square).unwrap();
        assert_eq!(c.v, pv(&[3.0 - 0.25 * 3.0, -1.0 + 0.25]));
        assert_eq!(c.personalized().unwrap(), c.v);
    }

    #[test]
    fn chain_rule_off_uses_full_gradient() {
        let mut c = client(&[2.0], &[2.0], 0.5);
        c.local_step(0.1, false, half_square).unwrap();
        assert!((c.v.as_slice()[0] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn alpha_unchanged_when_models_agree() {
        let mut c = client(&[1.0, 2.0], &[1.0, 2.0], 0.3);
        c.update_alpha(0.5, half_square).unwrap();
        assert_eq!(c.alpha(), 0.3);
    }

    #[test]
    fn alpha_hand_evaluated() {
        // v_bar = (0.5, 0); gradient of (x - c)^2 / 2 with c = (-0.5, 0) is (1, 0)
        let mut c = client(&[1.0, 0.0], &[0.0, 0.0], 0.5);
        c.update_alpha(0.1, |p| p.sub(&pv(&[-0.5, 0.0]))).unwrap();
        assert!((c.alpha() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn alpha_projected_to_zero() {
        // correlation <v - w, g> = 1 with alpha 0.05, eta 0.1 -> -0.05 -> 0
        let mut c = client(&[1.0], &[0.0], 0.05);
        c.update_alpha(0.1, |_| Ok(pv(&[1.0]))).unwrap();
        assert_eq!(c.alpha(), 0.0);
        let mut c = client(&[1.0], &[0.0], 0.95);
        c.update_alpha(1.0, |_| Ok(pv(&[-1.0]))).unwrap();
        assert_eq!(c.alpha(), 1.0);
    }
}

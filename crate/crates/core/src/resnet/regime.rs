use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Initialization scales, norm caps and the learning-rate ratio of the
/// analyzed training regime.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeParams {
    pub sigma_w: f64,
    pub sigma_v: f64,
    pub tau_w: f64,
    pub tau_v: f64,
}

impl RegimeParams {
    /// `σ_w = m^{-1/8}`, `σ_v = m^{1/8}`, `τ_w = m^{0.05}`, `τ_v = m^{-1/16}`.
    pub fn defaults(m: usize) -> Self {
        let m = m as f64;
        Self {
            sigma_w: m.powf(-0.125),
            sigma_v: m.powf(0.125),
            tau_w: m.powf(0.05),
            tau_v: m.powf(-0.0625),
        }
    }

    /// `η_v / η_w = τ_v² / τ_w²`.
    pub fn lr_ratio(&self) -> f64 {
        (self.tau_v / self.tau_w).powi(2)
    }

    /// Checks `τ_w ≥ 1`, `τ_w ∈ [m^{1/8+0.001} σ_w, m^{1/8−0.001} σ_w^{1/4}]`
    /// and `τ_v ∈ [σ_v (k/m)^{3/8}, σ_v]`.
    pub fn check(&self, m: usize, k: usize) -> Result<()> {
        let mf = m as f64;
        let w_lo = mf.powf(0.125 + 0.001) * self.sigma_w;
        let w_hi = mf.powf(0.125 - 0.001) * self.sigma_w.powf(0.25);
        let v_lo = self.sigma_v * (k as f64 / mf).powf(0.375);
        let v_hi = self.sigma_v;
        if self.tau_w < 1.0 || self.tau_w < w_lo || self.tau_w > w_hi {
            return Err(Error::Config(format!(
                "tau_w = {} outside [{w_lo}, {w_hi}] (or below 1) at m = {m}",
                self.tau_w
            )));
        }
        if self.tau_v < v_lo || self.tau_v > v_hi {
            return Err(Error::Config(format!(
                "tau_v = {} outside [{v_lo}, {v_hi}] at m = {m}",
                self.tau_v
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_satisfy_regime_over_width_range() {
        for e in 12..=20 {
            let m = 1usize << e;
            for k in [1, 2, 15] {
                RegimeParams::defaults(m).check(m, k).unwrap();
            }
        }
    }

    #[test]
    fn out_of_range_caps_are_rejected() {
        let m = 1 << 14;
        let mut p = RegimeParams::defaults(m);
        p.tau_v = 2.0 * p.sigma_v;
        assert!(p.check(m, 2).is_err());
        let mut p = RegimeParams::defaults(m);
        p.tau_w = 0.5;
        assert!(p.check(m, 2).is_err());
    }

    #[test]
    fn lr_ratio_matches_caps() {
        let p = RegimeParams::defaults(4096);
        assert!((p.lr_ratio() - 4096f64.powf(-0.225)).abs() < 1e-12);
    }
}

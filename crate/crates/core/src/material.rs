//! Stiffness and mass-density interpolation laws.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smooth tanh step on `[0, 1]` with threshold `eta` and sharpness `beta`,
/// normalized so that it maps 0 to 0 and 1 to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeavisideStep {
    eta: f64,
    beta: f64,
    offset: f64,
    denom: f64,
}

impl HeavisideStep {
    pub fn new(eta: f64, beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Parameter(format!("sharpness must be > 0, got {beta}")));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Parameter(format!("threshold must lie in [0, 1], got {eta}")));
        }
        let offset = (beta * eta).tanh();
        let denom = offset + (beta * (1.0 - eta)).tanh();
        Ok(Self { eta, beta, offset, denom })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn value(&self, v: f64) -> f64 {
        (self.offset + (self.beta * (v - self.eta)).tanh()) / self.denom
    }

    pub fn derivative(&self, v: f64) -> f64 {
        let t = (self.beta * (v - self.eta)).tanh();
        self.beta * (1.0 - t * t) / self.denom
    }
}

pub fn heaviside(v: f64, eta: f64, beta: f64) -> Result<f64> {
    Ok(HeavisideStep::new(eta, beta)?.value(v))
}

pub fn heaviside_deriv(v: f64, eta: f64, beta: f64) -> Result<f64> {
    Ok(HeavisideStep::new(eta, beta)?.derivative(v))
}

/// Modified SIMP: `E(x) = E_void + (E_solid - E_void) x^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimpModel {
    pub e_solid: f64,
    pub e_void: f64,
    pub penalty: f64,
}

impl Default for SimpModel {
    fn default() -> Self {
        Self { e_solid: 210e9, e_void: 210e9 * 1e-6, penalty: 3.0 }
    }
}

impl SimpModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.e_void > 0.0 && self.e_void < self.e_solid) {
            return Err(Error::Parameter(format!(
                "need 0 < E_void < E_solid, got {} and {}",
                self.e_void, self.e_solid
            )));
        }
        if !(self.penalty >= 1.0) {
            return Err(Error::Parameter(format!("SIMP penalty must be >= 1, got {}", self.penalty)));
        }
        Ok(())
    }

    pub fn young_modulus(&self, xbar: f64) -> f64 {
        self.e_void + (self.e_solid - self.e_void) * xbar.powf(self.penalty)
    }

    pub fn young_modulus_deriv(&self, xbar: f64) -> f64 {
        self.penalty * (self.e_solid - self.e_void) * xbar.powf(self.penalty - 1.0)
    }
}

/// Mass density `gamma(x) = gamma_s (chi + (1 - chi) H(x; eta_g, beta_g))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassDensityModel {
    gamma_solid: f64,
    contrast: f64,
    step: HeavisideStep,
}

impl MassDensityModel {
    pub fn new(gamma_solid: f64, contrast: f64, eta_g: f64, beta_g: f64) -> Result<Self> {
        if !(gamma_solid > 0.0) {
            return Err(Error::Parameter(format!("solid mass density must be > 0, got {gamma_solid}")));
        }
        if !(0.0..1.0).contains(&contrast) {
            return Err(Error::Parameter(format!("mass density contrast must lie in [0, 1), got {contrast}")));
        }
        if eta_g >= 1.0 {
            return Err(Error::Parameter(format!("eta_gamma must lie in [0, 1), got {eta_g}")));
        }
        Ok(Self { gamma_solid, contrast, step: HeavisideStep::new(eta_g, beta_g)? })
    }

    pub fn gamma_solid(&self) -> f64 {
        self.gamma_solid
    }

    pub fn contrast(&self) -> f64 {
        self.contrast
    }

    pub fn step(&self) -> &HeavisideStep {
        &self.step
    }

    pub fn mass_density(&self, xbar: f64) -> f64 {
        self.gamma_solid * (self.contrast + (1.0 - self.contrast) * self.step.value(xbar))
    }

    pub fn mass_density_deriv(&self, xbar: f64) -> f64 {
        self.gamma_solid * (1.0 - self.contrast) * self.step.derivative(xbar)
    }

    /// Advisory checks on the `{eta_gamma, beta_gamma}` choice for a volume bound
    /// `vf_star` and SIMP penalty `p`. Returns human-readable warnings.
    pub fn recommendation_warnings(&self, vf_star: f64, penalty: f64) -> Vec<String> {
        let mut w = Vec::new();
        let limit = vf_star.powf(penalty);
        if self.step.eta() > limit {
            w.push(format!("eta_gamma = {} exceeds (V_f*)^p = {limit:.4}; designs may disconnect", self.step.eta()));
        }
        if !(5.0..=20.0).contains(&self.step.beta()) {
            w.push(format!("beta_gamma = {} is outside the usual range [5, 20]", self.step.beta()));
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn central_fd(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn heaviside_endpoints() {
        assert_eq!(heaviside(0.0, 0.1, 12.0).unwrap(), 0.0);
        for (eta, beta) in [(0.1, 12.0), (0.01, 8.0), (0.25, 20.0), (0.5, 256.0)] {
            assert_eq!(heaviside(1.0, eta, beta).unwrap(), 1.0);
        }
    }

    #[test]
    fn heaviside_reference_value() {
        // tanh(1.2) / (tanh(1.2) + tanh(10.8))
        let expected = 1.2f64.tanh() / (1.2f64.tanh() + 10.8f64.tanh());
        let got = heaviside(0.1, 0.1, 12.0).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.4546).abs() < 1e-4);
    }

    #[test]
    fn heaviside_rejects_bad_beta() {
        assert!(matches!(heaviside(0.5, 0.1, 0.0), Err(Error::Parameter(_))));
        assert!(heaviside(0.5, 0.1, -1.0).is_err());
        assert!(heaviside_deriv(0.5, 0.1, f64::NAN).is_err());
    }

    #[test]
    fn derivative_peaks_at_threshold() {
        let step = HeavisideStep::new(0.2, 8.0).unwrap();
        let argmax = (0..=10_000)
            .map(|i| i as f64 / 10_000.0)
            .max_by(|a, b| step.derivative(*a).total_cmp(&step.derivative(*b)))
            .unwrap();
        assert!((argmax - 0.2).abs() < 1e-12);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let step = HeavisideStep::new(0.2, 8.0).unwrap();
        for v in [0.05, 0.3, 0.9] {
            let fd = central_fd(|x| step.value(x), v, 1e-6);
            assert!(rel(step.derivative(v), fd) < 1e-6, "v = {v}");
        }
    }

    #[test]
    fn derivative_integrates_to_one() {
        // composite Simpson on a fine grid
        let step = HeavisideStep::new(0.2, 8.0).unwrap();
        let n = 20_000;
        let h = 1.0 / n as f64;
        let mut s = step.derivative(0.0) + step.derivative(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * step.derivative(i as f64 * h);
        }
        let integral = s * h / 3.0;
        assert!((integral - 1.0).abs() < 1e-8);
    }

    #[test]
    fn simp_values() {
        let simp = SimpModel::default();
        assert_eq!(simp.young_modulus(1.0), 210e9);
        assert_eq!(simp.young_modulus(0.0), 210e3);
        let mid = 210e3 + (210e9 - 210e3) * 0.125;
        assert!(rel(simp.young_modulus(0.5), mid) < 1e-15);
        assert!(rel(simp.young_modulus(0.5), 2.6250e10) < 1e-4);
        simp.validate().unwrap();
        assert!(SimpModel { penalty: 0.5, ..simp }.validate().is_err());
        assert!(SimpModel { e_void: 0.0, ..simp }.validate().is_err());
    }

    #[test]
    fn mass_density_values() {
        let m = MassDensityModel::new(7850.0, 1e-9, 0.1, 12.0).unwrap();
        assert_eq!(m.mass_density(1.0), 7850.0);
        assert!(rel(m.mass_density(0.0), 7.85e-6) < 1e-12);
        assert!((m.mass_density(0.1) - 3568.0).abs() < 1.0);
    }

    #[test]
    fn recommendation_warnings() {
        let ok = MassDensityModel::new(7850.0, 1e-9, 0.01, 8.0).unwrap();
        assert!(ok.recommendation_warnings(0.25, 3.0).is_empty());
        let bad = MassDensityModel::new(7850.0, 1e-9, 0.1, 30.0).unwrap();
        assert_eq!(bad.recommendation_warnings(0.25, 3.0).len(), 2);
    }

    #[test]
    fn simplified_form() {
        for beta in [6.0, 8.0, 12.0, 20.0] {
            let m = MassDensityModel::new(7850.0, 0.0, 0.0, beta).unwrap();
            for i in 0..=20 {
                let x = i as f64 / 20.0;
                let expected = 7850.0 * (beta * x).tanh() / beta.tanh();
                assert!((m.mass_density(x) - expected).abs() <= 1e-15 * 7850.0);
            }
        }
    }

    proptest! {
        #[test]
        fn laws_are_monotone(beta_g in 1.0f64..64.0, eta_g in 0.0f64..0.5, p in 1.0f64..5.0,
                             a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let m = MassDensityModel::new(7850.0, 1e-9, eta_g, beta_g).unwrap();
            let s = SimpModel { penalty: p, ..SimpModel::default() };
            prop_assert!(m.mass_density(lo) <= m.mass_density(hi));
            prop_assert!(s.young_modulus(lo) <= s.young_modulus(hi));
        }

        #[test]
        fn endpoints_exact(beta_g in 1.0f64..64.0, eta_g in 0.0f64..0.5) {
            let m = MassDensityModel::new(7850.0, 1e-9, eta_g, beta_g).unwrap();
            prop_assert_eq!(m.mass_density(1.0), 7850.0);
            prop_assert!((m.mass_density(0.0) - 7850.0 * 1e-9).abs() <= 1e-18);
            let s = SimpModel::default();
            prop_assert_eq!(s.young_modulus(0.0), s.e_void);
            prop_assert_eq!(s.young_modulus(1.0), s.e_solid);
        }

        #[test]
        fn derivatives_match_fd(beta_g in 1.0f64..20.0, eta_g in 0.0f64..0.5, x in 0.01f64..0.99) {
            // far in the tails the slope drops below the difference quotient's round-off
            prop_assume!(beta_g * (x - eta_g).abs() <= 5.0);
            let m = MassDensityModel::new(7850.0, 1e-9, eta_g, beta_g).unwrap();
            let s = SimpModel::default();
            let h = 1e-6;
            let fd_m = central_fd(|v| m.mass_density(v), x, h);
            let fd_e = central_fd(|v| s.young_modulus(v), x, h);
            prop_assert!(rel(m.mass_density_deriv(x), fd_m) < 1e-5);
            prop_assert!(rel(s.young_modulus_deriv(x), fd_e) < 1e-5);
        }
    }
}

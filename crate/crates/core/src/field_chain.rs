//! Design field `x`, filtered field `x_tilde = P x` and projected physical
//! field `x_bar = H(x_tilde)`, plus the reverse-mode map of gradients back to `x`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::material::HeavisideStep;
use crate::mesh::{ElementRegion, Mesh};
use crate::sparse::CsrMatrix;

/// Projection threshold of the physical field.
pub const PROJECTION_ETA: f64 = 0.5;

/// Row-stochastic linear-hat density filter.
#[derive(Debug, Clone)]
pub struct FilterOperator {
    matrix: CsrMatrix,
    transpose: CsrMatrix,
    radius: f64,
}

impl FilterOperator {
    /// Weights `v_j max(0, 1 - |z_i - z_j| / r)` normalized per row. Rows near the
    /// boundary are renormalized over the truncated neighbourhood.
    pub fn build(mesh: &Mesh, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Parameter(format!("filter radius must be > 0, got {radius}")));
        }
        let h = mesh.element_size();
        let diag = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        if radius < 0.5 * diag {
            log::warn!("filter radius {radius} is below half the element diagonal; the filter is the identity");
        }
        let dim = mesh.dim();
        let nel = mesh.nel();
        let mut reach = [0usize; 3];
        for a in 0..dim {
            reach[a] = (radius / h[a]).ceil() as usize;
        }
        let v = mesh.elem_volume();
        let rows: Vec<Vec<(u32, f64)>> = (0..mesh.num_elements())
            .into_par_iter()
            .map(|e| {
                let [i, j, k] = mesh.element_ijk(e);
                let ze = mesh.centroid(e);
                let lo = |c: usize, a: usize| c.saturating_sub(reach[a]);
                let hi = |c: usize, a: usize| (c + reach[a]).min(nel[a] - 1);
                let mut row = Vec::new();
                for kk in lo(k, 2)..=hi(k, 2) {
                    for jj in lo(j, 1)..=hi(j, 1) {
                        for ii in lo(i, 0)..=hi(i, 0) {
                            let n = mesh.element_index(ii, jj, kk);
                            let zn = mesh.centroid(n);
                            let d = (0..3).map(|a| (ze[a] - zn[a]).powi(2)).sum::<f64>().sqrt();
                            let w = 1.0 - d / radius;
                            if w > 0.0 {
                                row.push((n as u32, v * w));
                            }
                        }
                    }
                }
                let total: f64 = row.iter().map(|(_, w)| w).sum();
                for (_, w) in row.iter_mut() {
                    *w /= total;
                }
                row
            })
            .collect();
        let matrix = CsrMatrix::from_rows(mesh.num_elements(), rows);
        let transpose = matrix.transpose();
        Ok(Self { matrix, transpose, radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(x)
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        self.transpose.mul_vec(y)
    }
}

/// Share of entries strictly between 0.05 and 0.95.
pub fn gray_fraction(x_bar: &[f64]) -> f64 {
    if x_bar.is_empty() {
        return 0.0;
    }
    x_bar.iter().filter(|&&v| v > 0.05 && v < 0.95).count() as f64 / x_bar.len() as f64
}

/// `H(x_tilde; beta, 0.5)` applied elementwise.
pub fn project(x_tilde: &[f64], beta: f64) -> Result<Vec<f64>> {
    let step = HeavisideStep::new(PROJECTION_ETA, beta)?;
    Ok(x_tilde.iter().map(|&v| step.value(v)).collect())
}

/// Iteration-driven sharpness schedule: `beta` starts at `initial` and is
/// multiplied by `factor` every `interval` iterations until it reaches `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Continuation {
    pub initial: f64,
    pub factor: f64,
    pub interval: usize,
    pub max: f64,
}

impl Default for Continuation {
    fn default() -> Self {
        Self { initial: 1.0, factor: 2.0, interval: 25, max: 256.0 }
    }
}

impl Continuation {
    /// Sharpness for the 1-based `iteration`.
    pub fn beta_at(&self, iteration: usize) -> f64 {
        let steps = iteration.saturating_sub(1) / self.interval.max(1);
        (self.initial * self.factor.powi(steps as i32)).min(self.max)
    }
}

pub fn continuation_step(iteration: usize) -> f64 {
    Continuation::default().beta_at(iteration)
}

#[derive(Debug, Clone)]
pub struct FieldChain {
    pub x: Vec<f64>,
    pub x_tilde: Vec<f64>,
    pub x_bar: Vec<f64>,
    beta: f64,
    regions: Vec<ElementRegion>,
}

impl FieldChain {
    /// Uniform design `x = initial` with non-design elements pinned.
    pub fn new(mesh: &Mesh, initial: f64) -> Self {
        let regions = mesh.regions().to_vec();
        let n = regions.len();
        let mut chain =
            Self { x: vec![initial; n], x_tilde: vec![initial; n], x_bar: vec![initial; n], beta: 1.0, regions };
        chain.pin_design();
        chain
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn regions(&self) -> &[ElementRegion] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    fn pin_value(r: ElementRegion) -> Option<f64> {
        match r {
            ElementRegion::Design => None,
            ElementRegion::Void => Some(0.0),
            ElementRegion::Solid => Some(1.0),
        }
    }

    fn pin_design(&mut self) {
        for (x, &r) in self.x.iter_mut().zip(&self.regions) {
            if let Some(v) = Self::pin_value(r) {
                *x = v;
            }
        }
    }

    /// Replaces the design field (pinned entries are re-pinned).
    pub fn set_design(&mut self, x: &[f64]) {
        self.x.copy_from_slice(x);
        self.pin_design();
    }

    /// Recomputes `x_tilde` and `x_bar` from `x` at sharpness `beta`.
    pub fn update(&mut self, filter: &FilterOperator, beta: f64) -> Result<()> {
        let step = HeavisideStep::new(PROJECTION_ETA, beta)?;
        self.beta = beta;
        self.x_tilde = filter.apply(&self.x);
        self.x_bar = self
            .x_tilde
            .par_iter()
            .zip(&self.regions)
            .map(|(&t, &r)| Self::pin_value(r).unwrap_or_else(|| step.value(t)))
            .collect();
        Ok(())
    }

    /// `df/dx = P^T (df/dx_bar * dx_bar/dx_tilde)`; entries of pinned elements are zero.
    pub fn chain_gradient(&self, filter: &FilterOperator, d_f_d_xbar: &[f64]) -> Vec<f64> {
        let step = HeavisideStep::new(PROJECTION_ETA, self.beta).expect("beta validated in update");
        let scaled: Vec<f64> = d_f_d_xbar
            .par_iter()
            .zip(&self.x_tilde)
            .zip(&self.regions)
            .map(|((&g, &t), &r)| if r == ElementRegion::Design { g * step.derivative(t) } else { 0.0 })
            .collect();
        let mut out = filter.apply_transpose(&scaled);
        for (g, &r) in out.iter_mut().zip(&self.regions) {
            if r != ElementRegion::Design {
                *g = 0.0;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoxRegion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mesh2(nx: usize, ny: usize) -> Mesh {
        Mesh::build(2, &[nx, ny], &[nx as f64, ny as f64], 1.0, &[], &[]).unwrap()
    }

    #[test]
    fn rows_sum_to_one_and_constants_survive() {
        let m = Mesh::build(2, &[20, 10], &[2.0, 1.0], 0.01, &[], &[]).unwrap();
        let f = FilterOperator::build(&m, 2.5 * 0.1).unwrap();
        for i in 0..m.num_elements() {
            let (_, vals) = f.matrix().row(i);
            assert!((vals.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(vals.iter().all(|&v| v > 0.0));
        }
        let y = f.apply(&vec![0.37; m.num_elements()]);
        assert!(y.iter().all(|v| (v - 0.37).abs() < 1e-14));
    }

    #[test]
    fn small_radius_gives_identity() {
        let m = mesh2(6, 4);
        let f = FilterOperator::build(&m, 0.9).unwrap();
        for i in 0..m.num_elements() {
            assert_eq!(f.matrix().row(i), (&[i as u32][..], &[1.0][..]));
        }
    }

    #[test]
    fn three_collinear_elements() {
        let m = mesh2(3, 1);
        let f = FilterOperator::build(&m, 1.5).unwrap();
        // brute-force weights w = max(0, 1 - d / r), unit volumes
        let w = |d: f64| f64::max(0.0, 1.0 - d / 1.5);
        let raw = [w(1.0), w(0.0), w(1.0)];
        let total: f64 = raw.iter().sum();
        let (cols, vals) = f.matrix().row(1);
        assert_eq!(cols, &[0, 1, 2]);
        for (v, r) in vals.iter().zip(raw) {
            assert!((v - r / total).abs() < 1e-15);
        }
        assert!((vals[0] - 0.2).abs() < 1e-15 && (vals[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn support_matches_distance_criterion() {
        let m = Mesh::build(3, &[5, 4, 3], &[1.0, 0.8, 0.6], 1.0, &[], &[]).unwrap();
        let r = 0.35;
        let f = FilterOperator::build(&m, r).unwrap();
        for i in 0..m.num_elements() {
            let zi = m.centroid(i);
            for j in 0..m.num_elements() {
                let zj = m.centroid(j);
                let d = (0..3).map(|a| (zi[a] - zj[a]).powi(2)).sum::<f64>().sqrt();
                assert_eq!(f.matrix().get(i, j) > 0.0, d < r, "({i},{j})");
            }
        }
    }

    #[test]
    fn unnormalized_weights_are_symmetric() {
        let m = mesh2(7, 5);
        let f = FilterOperator::build(&m, 2.3).unwrap();
        // row sums before normalization, recovered from any self weight (w(0) = v)
        let norm: Vec<f64> = (0..m.num_elements()).map(|i| m.elem_volume() / f.matrix().get(i, i)).collect();
        for i in 0..m.num_elements() {
            for j in 0..m.num_elements() {
                let a = f.matrix().get(i, j) * norm[i];
                let b = f.matrix().get(j, i) * norm[j];
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_values() {
        for beta in [1.0, 4.0, 64.0, 256.0] {
            let p = project(&[0.0, 0.5, 1.0], beta).unwrap();
            assert_eq!(p[0], 0.0);
            assert!((p[1] - 0.5).abs() < 1e-15);
            assert_eq!(p[2], 1.0);
        }
        let p = project(&[0.7], 256.0).unwrap()[0];
        assert!(1.0 - p < 1e-15);
    }

    #[test]
    fn projection_is_monotone() {
        for beta in [1.0, 2.0, 16.0, 256.0] {
            let xs: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
            let p = project(&xs, beta).unwrap();
            assert!(p.windows(2).all(|w| w[1] >= w[0]));
            assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn continuation_schedule() {
        assert_eq!(continuation_step(1), 1.0);
        assert_eq!(continuation_step(25), 1.0);
        assert_eq!(continuation_step(26), 2.0);
        assert_eq!(continuation_step(51), 4.0);
        assert_eq!(continuation_step(226), 256.0);
        assert_eq!(continuation_step(250), 256.0);
        assert_eq!(continuation_step(10_000), 256.0);
    }

    #[test]
    fn single_element_chain_slope() {
        let m = mesh2(1, 1);
        let f = FilterOperator::build(&m, 1.5).unwrap();
        let mut c = FieldChain::new(&m, 0.5);
        c.update(&f, 1.0).unwrap();
        let g = c.chain_gradient(&f, &[1.0]);
        let expected = 1.0 / (2.0 * 0.5f64.tanh());
        assert!((g[0] - expected).abs() < 1e-14);
        assert!((g[0] - 1.08198).abs() < 1e-5);
    }

    #[test]
    fn identity_filter_reduces_to_scalar_rule() {
        let m = mesh2(4, 3);
        let f = FilterOperator::build(&m, 0.5).unwrap();
        let mut c = FieldChain::new(&m, 0.5);
        c.update(&f, 1.0).unwrap();
        let step = HeavisideStep::new(0.5, 1.0).unwrap();
        let g = c.chain_gradient(&f, &[2.0; 12]);
        assert!(g.iter().all(|v| (v - 2.0 * step.derivative(0.5)).abs() < 1e-15));
    }

    fn random_chain(m: &Mesh, f: &FilterOperator, beta: f64, rng: &mut ChaCha8Rng) -> FieldChain {
        let mut c = FieldChain::new(m, 0.5);
        let x: Vec<f64> = (0..m.num_elements()).map(|_| rng.random_range(0.05..0.95)).collect();
        c.set_design(&x);
        c.update(f, beta).unwrap();
        c
    }

    #[test]
    fn chain_matches_dense_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let void = BoxRegion::new(&[0.0, 0.0], &[1.0, 2.0]);
        for (nx, ny) in [(5, 5), (4, 3), (1, 5)] {
            let m = Mesh::build(2, &[nx, ny], &[nx as f64, ny as f64], 1.0, std::slice::from_ref(&void), &[]).unwrap();
            let f = FilterOperator::build(&m, 1.8).unwrap();
            for beta in [1.0, 8.0] {
                let c = random_chain(&m, &f, beta, &mut rng);
                let n = m.num_elements();
                let step = HeavisideStep::new(0.5, beta).unwrap();
                let p = f.matrix().to_dense();
                // J[e][i] = d x_bar_e / d x_i, zero for pinned e or pinned i
                let design = |e: usize| m.region(e) == ElementRegion::Design;
                let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let got = c.chain_gradient(&f, &g);
                for i in 0..n {
                    let mut expected = 0.0;
                    for e in 0..n {
                        if design(e) && design(i) {
                            expected += g[e] * step.derivative(c.x_tilde[e]) * p[e][i];
                        }
                    }
                    assert!((got[i] - expected).abs() <= 1e-10 * expected.abs().max(1e-12));
                }
            }
        }
    }

    #[test]
    fn chain_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = Mesh::build(2, &[6, 4], &[1.5, 1.0], 0.01, &[], &[]).unwrap();
        let f = FilterOperator::build(&m, 1.5 * 0.25).unwrap();
        let c = random_chain(&m, &f, 4.0, &mut rng);
        let objective = |x: &[f64]| {
            let mut cc = c.clone();
            cc.set_design(x);
            cc.update(&f, 4.0).unwrap();
            cc.x_bar.iter().map(|v| v * v).sum::<f64>()
        };
        let df_dxbar: Vec<f64> = c.x_bar.iter().map(|v| 2.0 * v).collect();
        let grad = c.chain_gradient(&f, &df_dxbar);
        let h = 1e-6;
        for i in 0..m.num_elements() {
            let mut xp = c.x.clone();
            let mut xm = c.x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (objective(&xp) - objective(&xm)) / (2.0 * h);
            assert!((grad[i] - fd).abs() / fd.abs() < 1e-6, "element {i}: {} vs {fd}", grad[i]);
        }
    }

    #[test]
    fn pinned_elements_stay_pinned() {
        let void = BoxRegion::new(&[0.0, 0.0], &[2.0, 1.0]);
        let solid = BoxRegion::new(&[4.0, 2.0], &[6.0, 4.0]);
        let m = Mesh::build(2, &[6, 4], &[6.0, 4.0], 1.0, &[void], &[solid]).unwrap();
        let f = FilterOperator::build(&m, 2.5).unwrap();
        let mut c = FieldChain::new(&m, 0.3);
        c.set_design(&[0.6; 24]);
        c.update(&f, 8.0).unwrap();
        for e in m.nondesign_void() {
            assert_eq!((c.x[e], c.x_bar[e]), (0.0, 0.0));
        }
        for e in m.nondesign_solid() {
            assert_eq!((c.x[e], c.x_bar[e]), (1.0, 1.0));
        }
        let g = c.chain_gradient(&f, &[1.0; 24]);
        for e in m.nondesign_void().into_iter().chain(m.nondesign_solid()) {
            assert_eq!(g[e], 0.0);
        }
        assert!(c.x_tilde.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

//! Adjoint gradient of the self-weight compliance and the constraint gradients.
//!
//! With the adjoint vector chosen as `-2u`, the derivative of
//! `f0 = (F_g + kappa F_ext)^T u` with respect to `x_bar_e` is
//! `-u_e^T (dE/dx_bar) ke0 u_e + 2 u_e^T (dgamma/dx_bar) L_g V_e`.

use rayon::prelude::*;

use crate::fem::{ElementKernel, FeState};
use crate::field_chain::{FieldChain, FilterOperator};
use crate::material::{MassDensityModel, SimpModel};
use crate::mesh::Mesh;

/// Gradients with respect to the design field `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub d_f0_dx: Vec<f64>,
    pub d_g1_dx: Vec<f64>,
    pub d_g2_dx: Vec<f64>,
}

impl GradientBundle {
    /// Maps gradients with respect to `x_bar` back through the field chain.
    pub fn from_physical(
        chain: &FieldChain,
        filter: &FilterOperator,
        d_f0: &[f64],
        d_g1: &[f64],
        d_g2: &[f64],
    ) -> Self {
        Self {
            d_f0_dx: chain.chain_gradient(filter, d_f0),
            d_g1_dx: chain.chain_gradient(filter, d_g1),
            d_g2_dx: chain.chain_gradient(filter, d_g2),
        }
    }
}

fn element_values(mesh: &Mesh, u: &[f64], e: usize, out: &mut [f64]) {
    for (o, &d) in out.iter_mut().zip(mesh.element_dofs(e)) {
        *o = u[d];
    }
}

/// Stiffness and load parts of `d f0 / d x_bar`, returned separately.
pub fn objective_gradient_parts(
    mesh: &Mesh,
    kernel: &ElementKernel,
    state: &FeState,
    simp: &SimpModel,
    mass: &MassDensityModel,
    x_bar: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let ve = mesh.elem_volume();
    let lg = kernel.lg();
    let nd = kernel.ndof();
    (0..mesh.num_elements())
        .into_par_iter()
        .map_init(
            || vec![0.0; nd],
            |ue, e| {
                element_values(mesh, &state.displacement, e, ue);
                let stiff = -simp.young_modulus_deriv(x_bar[e]) * kernel.energy(ue);
                let lu: f64 = lg.iter().zip(ue.iter()).map(|(l, u)| l * u).sum();
                let load = 2.0 * mass.mass_density_deriv(x_bar[e]) * ve * lu;
                (stiff, load)
            },
        )
        .unzip()
}

/// `d f0 / d x_bar`.
pub fn objective_gradient(
    mesh: &Mesh,
    kernel: &ElementKernel,
    state: &FeState,
    simp: &SimpModel,
    mass: &MassDensityModel,
    x_bar: &[f64],
) -> Vec<f64> {
    let (s, l) = objective_gradient_parts(mesh, kernel, state, simp, mass, x_bar);
    s.into_iter().zip(l).map(|(a, b)| a + b).collect()
}

/// Volume constraint `sum x_bar / V* - 1 <= 0` with `V*` in element counts.
pub fn g1_value_and_gradient(x_bar: &[f64], v_star: f64) -> (f64, Vec<f64>) {
    let value = x_bar.iter().sum::<f64>() / v_star - 1.0;
    (value, vec![1.0 / v_star; x_bar.len()])
}

/// Minimum-mass constraint `(m_max - sum V_e gamma_e) / m_max <= 0`.
pub fn g2_value_and_gradient(mesh: &Mesh, mass: &MassDensityModel, x_bar: &[f64], m_max: f64) -> (f64, Vec<f64>) {
    let ve = mesh.elem_volume();
    let total: f64 = x_bar.iter().map(|&x| ve * mass.mass_density(x)).sum();
    let grad = x_bar.iter().map(|&x| -ve * mass.mass_density_deriv(x) / m_max).collect();
    ((m_max - total) / m_max, grad)
}

/// `m_max = V gamma_s V_f*`.
pub fn max_mass(mesh: &Mesh, mass: &MassDensityModel, vf_star: f64) -> f64 {
    mesh.domain_volume() * mass.gamma_solid() * vf_star
}

//! Finite element analysis: reference kernels, assembly of the reduced
//! stiffness operator and the design-dependent gravity load, and the solve.

mod assembly;
mod kernel;
mod solver;

pub use assembly::DofLayout;
pub use kernel::ElementKernel;
pub use solver::{
    set_direct_parallelism, DirectSolver, LinearSolver, PcgSolver, SolveStats, SolverKind, SolverSettings,
};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, ResolvedBoundary};
use crate::sparse::CsrMatrix;

/// Gravitational acceleration along the last axis (m/s^2).
pub const GRAVITY: f64 = -9.81;

/// Result of one analysis at a fixed physical field.
#[derive(Debug, Clone)]
pub struct FeState {
    pub f_gravity: Vec<f64>,
    /// Unscaled external load.
    pub f_external: Vec<f64>,
    pub kappa: f64,
    pub displacement: Vec<f64>,
    pub stats: SolveStats,
}

impl FeState {
    pub fn compliance(&self) -> f64 {
        compliance(&self.displacement, &self.f_gravity, &self.f_external, self.kappa)
    }

    pub fn max_displacement(&self) -> f64 {
        self.displacement.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `(F_g + kappa F_ext)^T u`.
pub fn compliance(u: &[f64], f_gravity: &[f64], f_external: &[f64], kappa: f64) -> f64 {
    u.iter().zip(f_gravity).zip(f_external).map(|((u, g), e)| u * (g + kappa * e)).sum()
}

/// Everything about the discretized problem that does not change with the design.
pub struct FeModel {
    kernel: ElementKernel,
    layout: DofLayout,
    stiffness: CsrMatrix,
    solver: LinearSolver,
    f_external: Vec<f64>,
}

impl FeModel {
    pub fn new(mesh: &Mesh, boundary: &ResolvedBoundary, nu: f64, settings: &SolverSettings) -> Result<Self> {
        let kernel = ElementKernel::new(mesh.dim(), mesh.element_size(), nu, mesh.thickness(), GRAVITY)?;
        if boundary.fixed_dofs.is_empty() {
            return Err(Error::Config("no degree of freedom is fixed".into()));
        }
        let layout = DofLayout::new(mesh, &boundary.fixed_dofs);
        let stiffness = layout.stiffness_pattern(mesh);
        let solver = LinearSolver::new(&stiffness, mesh.dim(), settings)?;
        let f_external = boundary.dense_external_load(mesh.num_dofs());
        Ok(Self { kernel, layout, stiffness, solver, f_external })
    }

    pub fn kernel(&self) -> &ElementKernel {
        &self.kernel
    }

    pub fn layout(&self) -> &DofLayout {
        &self.layout
    }

    /// Reduced stiffness operator from the last `analyze` call.
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn f_external(&self) -> &[f64] {
        &self.f_external
    }

    pub fn assemble_gravity(&self, mesh: &Mesh, gamma: &[f64]) -> Vec<f64> {
        self.layout.assemble_gravity(mesh, &self.kernel, gamma)
    }

    pub fn assemble_stiffness(&mut self, mesh: &Mesh, young: &[f64]) {
        self.layout.assemble_stiffness(mesh, &self.kernel, young, &mut self.stiffness);
    }

    /// Solves `K(young) u = F_g(gamma) + kappa F_ext` for per-element moduli
    /// and mass densities.
    pub fn analyze(&mut self, mesh: &Mesh, young: &[f64], gamma: &[f64], kappa: f64) -> Result<FeState> {
        self.assemble_stiffness(mesh, young);
        let f_gravity = self.assemble_gravity(mesh, gamma);
        let rhs_full: Vec<f64> = f_gravity.iter().zip(&self.f_external).map(|(g, e)| g + kappa * e).collect();
        let rhs = self.layout.reduce(&rhs_full);
        let (u, stats) = self.solver.solve(&self.stiffness, &rhs)?;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Analysis("non-finite displacement".into()));
        }
        Ok(FeState {
            displacement: self.layout.expand(&u, mesh.num_dofs()),
            f_gravity,
            f_external: self.f_external.clone(),
            kappa,
            stats,
        })
    }
}

//! Benchmark definitions as data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{SolverSettings, GRAVITY};
use crate::material::{MassDensityModel, SimpModel};
use crate::mesh::{
    Axis, BoundarySpec, BoxRegion, Mesh, NodeSelector, PointLoad, ResolvedBoundary, Support, SymmetryFace,
};
use crate::optimizer::{Materials, Optimizer, OptimizerConfig};

pub const BUILTIN_NAMES: [&str; 8] =
    ["arch2d_coarse", "arch2d_fine", "arch2d_400", "mbb_half", "tower2d", "house_arch", "arch3d", "tower3d"];

/// How the `magnitude` of each point load is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LoadRule {
    /// Newtons.
    #[default]
    Absolute,
    /// Multiple of `V gamma_s V_f* |g|`, the weight of the permitted material.
    MaxSelfWeight,
    /// Multiple of `V gamma_s |g|`, the weight of the fully solid domain.
    TotalSelfWeight,
}

/// Portion of a symmetric structure that is modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    Full,
    Half,
    Quarter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialParams {
    pub e_solid: f64,
    /// `E_void / E_solid`.
    pub e_contrast: f64,
    pub penalty: f64,
    pub gamma_solid: f64,
    /// `gamma_void / gamma_solid`.
    pub gamma_contrast: f64,
    pub nu: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self { e_solid: 210e9, e_contrast: 1e-6, penalty: 3.0, gamma_solid: 7850.0, gamma_contrast: 1e-9, nu: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub name: String,
    pub dim: usize,
    /// Modelled domain lengths (m).
    pub lengths: Vec<f64>,
    pub nel: Vec<usize>,
    #[serde(default = "default_thickness")]
    pub thickness: f64,
    pub vf_star: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default)]
    pub load_rule: LoadRule,
    /// Filter radius in units of the largest element edge.
    pub filter_multiplier: f64,
    pub eta_gamma: f64,
    pub beta_gamma: f64,
    pub move_limit: f64,
    #[serde(default = "default_true")]
    pub g2_enabled: bool,
    #[serde(default)]
    pub reduction: Reduction,
    pub boundary: BoundarySpec,
    #[serde(default)]
    pub void_regions: Vec<BoxRegion>,
    #[serde(default)]
    pub solid_regions: Vec<BoxRegion>,
    #[serde(default)]
    pub material: MaterialParams,
}

fn default_thickness() -> f64 {
    0.01
}

fn default_true() -> bool {
    true
}

/// Everything needed to start an optimization run.
pub struct BuiltProblem {
    pub mesh: Mesh,
    pub boundary: ResolvedBoundary,
    pub materials: Materials,
    pub filter_radius: f64,
    pub config: OptimizerConfig,
    pub warnings: Vec<String>,
}

impl BuiltProblem {
    pub fn into_optimizer(self, solver: &SolverSettings) -> Result<Optimizer> {
        Optimizer::new(self.mesh, &self.boundary, self.materials, self.filter_radius, solver, self.config)
    }
}

fn fixed(nodes: NodeSelector, dim: usize) -> Support {
    Support { nodes, fix: [Axis::X, Axis::Y, Axis::Z][..dim].to_vec() }
}

fn arch2d(name: &str, nx: usize, ny: usize) -> ProblemSpec {
    ProblemSpec {
        name: name.into(),
        dim: 2,
        lengths: vec![2.0, 1.0],
        nel: vec![nx, ny],
        thickness: 0.01,
        vf_star: 0.25,
        kappa: 0.0,
        load_rule: LoadRule::Absolute,
        filter_multiplier: 2.5,
        eta_gamma: 0.01,
        beta_gamma: 8.0,
        move_limit: 0.1,
        g2_enabled: true,
        reduction: Reduction::Full,
        boundary: BoundarySpec {
            supports: vec![fixed(NodeSelector::point(&[0.0, 0.0]), 2), fixed(NodeSelector::point(&[2.0, 0.0]), 2)],
            ..Default::default()
        },
        void_regions: vec![],
        solid_regions: vec![],
        material: MaterialParams::default(),
    }
}

impl ProblemSpec {
    /// One of [`BUILTIN_NAMES`].
    pub fn builtin(name: &str) -> Result<Self> {
        let spec = match name {
            "arch2d_coarse" => arch2d(name, 100, 50),
            "arch2d_fine" => arch2d(name, 200, 100),
            "arch2d_400" => ProblemSpec {
                vf_star: 0.4,
                eta_gamma: 0.1,
                move_limit: 0.05,
                filter_multiplier: 3.5,
                ..arch2d(name, 400, 200)
            },
            "mbb_half" => ProblemSpec {
                kappa: 1.0,
                load_rule: LoadRule::MaxSelfWeight,
                filter_multiplier: 3.0,
                move_limit: 0.05,
                reduction: Reduction::Half,
                boundary: BoundarySpec {
                    supports: vec![Support { nodes: NodeSelector::point(&[2.0, 0.0]), fix: vec![Axis::Y] }],
                    loads: vec![PointLoad {
                        nodes: NodeSelector::point(&[0.0, 1.0]),
                        direction: vec![0.0, -1.0],
                        magnitude: 1.0,
                    }],
                    symmetry: vec![SymmetryFace { axis: Axis::X, at: 0.0 }],
                },
                ..arch2d(name, 320, 160)
            },
            "tower2d" => ProblemSpec {
                lengths: vec![0.5, 2.5],
                kappa: 1.0,
                load_rule: LoadRule::MaxSelfWeight,
                filter_multiplier: 5.6,
                move_limit: 0.05,
                reduction: Reduction::Half,
                boundary: BoundarySpec {
                    supports: vec![fixed(NodeSelector::point(&[0.5, 0.0]), 2)],
                    loads: vec![PointLoad {
                        nodes: NodeSelector::point(&[0.0, 2.5]),
                        direction: vec![0.0, -1.0],
                        magnitude: 1.0,
                    }],
                    symmetry: vec![SymmetryFace { axis: Axis::X, at: 0.0 }],
                },
                ..arch2d(name, 110, 550)
            },
            "house_arch" => ProblemSpec {
                lengths: vec![2.0, 2.0],
                vf_star: 0.4,
                filter_multiplier: 3.6,
                move_limit: 0.05,
                boundary: BoundarySpec {
                    supports: vec![
                        fixed(NodeSelector::plane(Axis::Y, 0.0).with(Axis::X, 0.0, 0.125), 2),
                        fixed(NodeSelector::plane(Axis::Y, 0.0).with(Axis::X, 1.875, 2.0), 2),
                    ],
                    ..Default::default()
                },
                void_regions: vec![BoxRegion::new(&[0.125, 0.0], &[1.875, 1.0])],
                ..arch2d(name, 240, 240)
            },
            "arch3d" => ProblemSpec {
                dim: 3,
                lengths: vec![1.0, 1.0, 1.0],
                nel: vec![50, 50, 50],
                vf_star: 0.35,
                filter_multiplier: 4.8,
                eta_gamma: 0.04,
                beta_gamma: 12.0,
                move_limit: 0.05,
                reduction: Reduction::Half,
                boundary: BoundarySpec {
                    supports: vec![fixed(NodeSelector::plane(Axis::X, 1.0).with(Axis::Z, 0.0, 0.0), 3)],
                    symmetry: vec![SymmetryFace { axis: Axis::X, at: 0.0 }],
                    ..Default::default()
                },
                ..arch2d(name, 1, 1)
            },
            "tower3d" => ProblemSpec {
                dim: 3,
                lengths: vec![0.5, 0.5, 2.5],
                nel: vec![40, 40, 200],
                vf_star: 0.1,
                kappa: 1.0,
                load_rule: LoadRule::MaxSelfWeight,
                filter_multiplier: 2.0 * 3f64.sqrt(),
                eta_gamma: 0.001,
                beta_gamma: 8.0,
                move_limit: 0.05,
                reduction: Reduction::Quarter,
                boundary: BoundarySpec {
                    supports: vec![
                        fixed(NodeSelector::plane(Axis::Z, 0.0).with(Axis::X, 0.5, 0.5), 3),
                        fixed(NodeSelector::plane(Axis::Z, 0.0).with(Axis::Y, 0.5, 0.5), 3),
                    ],
                    loads: vec![PointLoad {
                        nodes: NodeSelector::point(&[0.0, 0.0, 2.5]),
                        direction: vec![0.0, 0.0, -1.0],
                        magnitude: 1.0,
                    }],
                    symmetry: vec![SymmetryFace { axis: Axis::X, at: 0.0 }, SymmetryFace { axis: Axis::Y, at: 0.0 }],
                },
                ..arch2d(name, 1, 1)
            },
            _ => {
                return Err(Error::Config(format!(
                    "unknown problem '{name}', expected one of: {}",
                    BUILTIN_NAMES.join(", ")
                )))
            }
        };
        Ok(spec)
    }

    /// Modelled domain volume (m^3).
    pub fn domain_volume(&self) -> f64 {
        let v: f64 = self.lengths.iter().product();
        if self.dim == 2 {
            v * self.thickness
        } else {
            v
        }
    }

    /// Newtons per unit `magnitude` of a point load.
    pub fn load_unit(&self) -> f64 {
        let weight = self.domain_volume() * self.material.gamma_solid * GRAVITY.abs();
        match self.load_rule {
            LoadRule::Absolute => 1.0,
            LoadRule::MaxSelfWeight => weight * self.vf_star,
            LoadRule::TotalSelfWeight => weight,
        }
    }

    pub fn simp(&self) -> SimpModel {
        let m = &self.material;
        SimpModel { e_solid: m.e_solid, e_void: m.e_solid * m.e_contrast, penalty: m.penalty }
    }

    pub fn mass_model(&self) -> Result<MassDensityModel> {
        let m = &self.material;
        MassDensityModel::new(m.gamma_solid, m.gamma_contrast, self.eta_gamma, self.beta_gamma)
    }

    /// Hard checks as errors; advisory parameter checks returned as warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        if !(self.vf_star > 0.0 && self.vf_star < 1.0) {
            return Err(Error::Config(format!("vf_star must lie in (0, 1), got {}", self.vf_star)));
        }
        if !(self.filter_multiplier >= 1.0) {
            return Err(Error::Config(format!("filter_multiplier must be >= 1, got {}", self.filter_multiplier)));
        }
        if !(self.move_limit > 0.0 && self.move_limit <= 1.0) {
            return Err(Error::Config(format!("move_limit must lie in (0, 1], got {}", self.move_limit)));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::Config(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        let symmetry_faces = match self.reduction {
            Reduction::Full => 0,
            Reduction::Half => 1,
            Reduction::Quarter => 2,
        };
        if self.boundary.symmetry.len() != symmetry_faces {
            return Err(Error::Config(format!(
                "reduction {:?} expects {symmetry_faces} symmetry faces, found {}",
                self.reduction,
                self.boundary.symmetry.len()
            )));
        }
        let unit = self.load_unit();
        if !unit.is_finite() {
            return Err(Error::Config("external load magnitude is not finite".into()));
        }
        self.simp().validate()?;
        let mass = self.mass_model()?;
        Ok(mass.recommendation_warnings(self.vf_star, self.material.penalty))
    }

    pub fn build(&self) -> Result<BuiltProblem> {
        let warnings = self.validate()?;
        for w in &warnings {
            log::warn!("{}: {w}", self.name);
        }
        let mesh =
            Mesh::build(self.dim, &self.nel, &self.lengths, self.thickness, &self.void_regions, &self.solid_regions)?;
        let mut boundary = self.boundary.clone();
        let unit = self.load_unit();
        for l in &mut boundary.loads {
            l.magnitude *= unit;
        }
        let boundary = boundary.resolve(&mesh)?;
        let materials = Materials { simp: self.simp(), mass: self.mass_model()?, nu: self.material.nu };
        let filter_radius = self.filter_multiplier * mesh.max_element_edge();
        let config = OptimizerConfig {
            vf_star: self.vf_star,
            kappa: self.kappa,
            g2_enabled: self.g2_enabled,
            mma: crate::mma::MmaSettings { move_limit: self.move_limit, ..Default::default() },
            ..Default::default()
        };
        Ok(BuiltProblem { mesh, boundary, materials, filter_radius, config, warnings })
    }
}

//! Outer optimization loop: continuation, analysis, gradients and the MMA update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{FeModel, FeState, SolverSettings};
use crate::field_chain::{Continuation, FieldChain, FilterOperator};
use crate::material::{MassDensityModel, SimpModel};
use crate::mesh::{ElementRegion, Mesh, ResolvedBoundary};
use crate::mma::{Mma, MmaSettings};
use crate::sensitivity::{self, GradientBundle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub n_iter: usize,
    /// Permitted volume fraction `V_f*`; also the initial design.
    pub vf_star: f64,
    pub kappa: f64,
    pub g2_enabled: bool,
    pub continuation: Continuation,
    pub mma: MmaSettings,
    /// Factor applied to the objective before it reaches MMA.
    pub objective_scale: f64,
    /// Divide the objective by its current value as well, so MMA always sees
    /// `objective_scale` whatever the compliance magnitude.
    pub normalize_objective: bool,
    /// Stop early once the largest design change drops below this value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub change_tolerance: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            n_iter: 250,
            vf_star: 0.25,
            kappa: 0.0,
            g2_enabled: true,
            continuation: Continuation::default(),
            mma: MmaSettings::default(),
            objective_scale: 10.0,
            normalize_objective: true,
            change_tolerance: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.vf_star > 0.0 && self.vf_star < 1.0) {
            return Err(Error::Parameter(format!("V_f* must lie in (0, 1), got {}", self.vf_star)));
        }
        if self.n_iter == 0 {
            return Err(Error::Parameter("iteration budget must be >= 1".into()));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::Parameter(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        if !(self.objective_scale > 0.0) {
            return Err(Error::Parameter("objective scale must be > 0".into()));
        }
        let c = &self.continuation;
        if !(c.initial >= 1.0 && c.factor >= 1.0 && c.max >= c.initial && c.interval >= 1) {
            return Err(Error::Parameter(format!("invalid continuation schedule {c:?}")));
        }
        self.mma.validate()
    }
}

/// Material laws and Poisson's ratio.
#[derive(Debug, Clone, Copy)]
pub struct Materials {
    pub simp: SimpModel,
    pub mass: MassDensityModel,
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Compliance in N m, unscaled.
    pub f0: f64,
    pub vol_frac: f64,
    pub g1: f64,
    pub g2: f64,
    pub beta: f64,
    /// Largest design change of the update that produced this iterate.
    pub max_change: f64,
    pub max_displacement: f64,
    pub solver_iterations: usize,
    pub solver_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub records: Vec<IterationRecord>,
}

impl RunHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub chain: FieldChain,
    pub history: RunHistory,
}

/// Responses and gradients at one design.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub state: FeState,
    pub f0: f64,
    pub g1: f64,
    pub g2: f64,
    pub gradients: GradientBundle,
}

pub struct Optimizer {
    mesh: Mesh,
    filter: FilterOperator,
    fe: FeModel,
    materials: Materials,
    config: OptimizerConfig,
    v_star: f64,
    m_max: f64,
}

impl Optimizer {
    pub fn new(
        mesh: Mesh,
        boundary: &ResolvedBoundary,
        materials: Materials,
        filter_radius: f64,
        solver: &SolverSettings,
        config: OptimizerConfig,
    ) -> Result<Self> {
        config.validate()?;
        materials.simp.validate()?;
        let filter = FilterOperator::build(&mesh, filter_radius)?;
        let fe = FeModel::new(&mesh, boundary, materials.nu, solver)?;
        let v_star = config.vf_star * mesh.num_elements() as f64;
        let m_max = sensitivity::max_mass(&mesh, &materials.mass, config.vf_star);
        Ok(Self { mesh, filter, fe, materials, config, v_star, m_max })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn filter(&self) -> &FilterOperator {
        &self.filter
    }

    pub fn fe(&self) -> &FeModel {
        &self.fe
    }

    pub fn materials(&self) -> &Materials {
        &self.materials
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Uniform design at `V_f*`, projected at the first continuation step.
    pub fn initial_chain(&self) -> Result<FieldChain> {
        let mut chain = FieldChain::new(&self.mesh, self.config.vf_star);
        chain.update(&self.filter, self.config.continuation.beta_at(1))?;
        Ok(chain)
    }

    /// Analysis and chain-mapped gradients at the current physical field.
    pub fn evaluate(&mut self, chain: &FieldChain) -> Result<Evaluation> {
        let Materials { simp, mass, .. } = self.materials;
        let xb = &chain.x_bar;
        let young: Vec<f64> = xb.iter().map(|&x| simp.young_modulus(x)).collect();
        let gamma: Vec<f64> = xb.iter().map(|&x| mass.mass_density(x)).collect();
        let state = self.fe.analyze(&self.mesh, &young, &gamma, self.config.kappa)?;
        let f0 = state.compliance();
        if !f0.is_finite() {
            return Err(Error::Analysis("non-finite compliance".into()));
        }
        let d_f0 = sensitivity::objective_gradient(&self.mesh, self.fe.kernel(), &state, &simp, &mass, xb);
        let (g1, d_g1) = sensitivity::g1_value_and_gradient(xb, self.v_star);
        let (g2, d_g2) = sensitivity::g2_value_and_gradient(&self.mesh, &mass, xb, self.m_max);
        let gradients = GradientBundle::from_physical(chain, &self.filter, &d_f0, &d_g1, &d_g2);
        Ok(Evaluation { state, f0, g1, g2, gradients })
    }

    pub fn run(&mut self) -> Result<RunOutcome> {
        self.run_with(|_, _| {})
    }

    /// Runs the full iteration budget; `observer` sees every record together
    /// with the field it was evaluated at.
    pub fn run_with(&mut self, mut observer: impl FnMut(&IterationRecord, &FieldChain)) -> Result<RunOutcome> {
        let design: Vec<usize> =
            (0..self.mesh.num_elements()).filter(|&e| self.mesh.region(e) == ElementRegion::Design).collect();
        if design.is_empty() {
            return Err(Error::Config("no design elements".into()));
        }
        let m = if self.config.g2_enabled { 2 } else { 1 };
        let mut mma = Mma::new(design.len(), m, self.config.mma)?;
        let mut chain = FieldChain::new(&self.mesh, self.config.vf_star);
        let mut history = RunHistory::default();
        let mut max_change = 0.0;
        let nel = self.mesh.num_elements() as f64;

        for k in 1..=self.config.n_iter {
            let beta = self.config.continuation.beta_at(k);
            chain.update(&self.filter, beta).map_err(|e| e.at(k))?;
            let eval = self.evaluate(&chain).map_err(|e| e.at(k))?;
            let record = IterationRecord {
                iter: k,
                f0: eval.f0,
                vol_frac: chain.x_bar.iter().sum::<f64>() / nel,
                g1: eval.g1,
                g2: eval.g2,
                beta,
                max_change,
                max_displacement: eval.state.max_displacement(),
                solver_iterations: eval.state.stats.iterations,
                solver_residual: eval.state.stats.relative_residual,
            };
            log::debug!(
                "it {k:4} f0 {:.4e} vf {:.4} g1 {:+.3e} g2 {:+.3e} beta {beta} change {max_change:.3e}",
                record.f0,
                record.vol_frac,
                record.g1,
                record.g2
            );
            history.records.push(record);
            observer(&record, &chain);
            if k == self.config.n_iter {
                break;
            }
            if let Some(tol) = self.config.change_tolerance {
                if k > 1 && max_change < tol {
                    break;
                }
            }

            let scale = if self.config.normalize_objective {
                self.config.objective_scale / eval.f0
            } else {
                self.config.objective_scale
            };
            let gr = &eval.gradients;
            let mut x: Vec<f64> = design.iter().map(|&e| chain.x[e]).collect();
            let df0: Vec<f64> = design.iter().map(|&e| scale * gr.d_f0_dx[e]).collect();
            let mut g = vec![eval.g1];
            let mut dg = vec![design.iter().map(|&e| gr.d_g1_dx[e]).collect::<Vec<f64>>()];
            if self.config.g2_enabled {
                g.push(eval.g2);
                dg.push(design.iter().map(|&e| gr.d_g2_dx[e]).collect());
            }
            let before = x.clone();
            mma.update(&mut x, &df0, &g, &dg).map_err(|e| e.at(k))?;
            max_change = x.iter().zip(&before).fold(0.0, |a, (n, o)| f64::max(a, (n - o).abs()));
            let mut full = chain.x.clone();
            for (&e, &v) in design.iter().zip(&x) {
                full[e] = v;
            }
            chain.set_design(&full);
        }
        Ok(RunOutcome { chain, history })
    }
}

/// Largest relative deviation between adjoint and central-difference
/// gradients, per response `[f0, g1, g2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_rel_error: [f64; 3],
    pub checked: usize,
}

impl Optimizer {
    /// Compares the chain-mapped gradients at design `x` and fixed `beta`
    /// against central differences with step `step` on every design entry.
    /// Entries below `1e-6` of the largest gradient magnitude are compared
    /// against that floor instead of their own size.
    pub fn check_gradients(&mut self, x: &[f64], beta: f64, step: f64) -> Result<GradientCheck> {
        let mut chain = FieldChain::new(&self.mesh, self.config.vf_star);
        chain.set_design(x);
        chain.update(&self.filter, beta)?;
        let base = self.evaluate(&chain)?;
        let grads = [&base.gradients.d_f0_dx, &base.gradients.d_g1_dx, &base.gradients.d_g2_dx];
        let floors: Vec<f64> = grads.iter().map(|g| 1e-6 * g.iter().fold(0.0, |a: f64, v| a.max(v.abs()))).collect();
        let mut worst = [0.0f64; 3];
        let mut checked = 0;
        for e in 0..self.mesh.num_elements() {
            if self.mesh.region(e) != ElementRegion::Design {
                continue;
            }
            let mut values = [[0.0; 3]; 2];
            for (slot, sign) in [1.0, -1.0].into_iter().enumerate() {
                let mut xp = chain.x.clone();
                xp[e] += sign * step;
                let mut c = chain.clone();
                c.set_design(&xp);
                c.update(&self.filter, beta)?;
                let ev = self.evaluate(&c)?;
                values[slot] = [ev.f0, ev.g1, ev.g2];
            }
            for r in 0..3 {
                let fd = (values[0][r] - values[1][r]) / (2.0 * step);
                let an = grads[r][e];
                let denom = an.abs().max(floors[r]);
                if denom > 0.0 {
                    worst[r] = worst[r].max((fd - an).abs() / denom);
                }
            }
            checked += 1;
        }
        Ok(GradientCheck { max_rel_error: worst, checked })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Axis, BoundarySpec, NodeSelector, Support};

    fn small_arch(config: OptimizerConfig) -> Optimizer {
        let mesh = Mesh::build(2, &[24, 12], &[2.0, 1.0], 0.01, &[], &[]).unwrap();
        let both = vec![Axis::X, Axis::Y];
        let bc = BoundarySpec {
            supports: vec![
                Support { nodes: NodeSelector::point(&[0.0, 0.0]), fix: both.clone() },
                Support { nodes: NodeSelector::point(&[2.0, 0.0]), fix: both },
            ],
            ..Default::default()
        }
        .resolve(&mesh)
        .unwrap();
        let materials = Materials {
            simp: SimpModel::default(),
            mass: MassDensityModel::new(7850.0, 1e-9, 0.01, 8.0).unwrap(),
            nu: 0.3,
        };
        let radius = 2.5 * mesh.max_element_edge();
        Optimizer::new(mesh, &bc, materials, radius, &SolverSettings::default(), config).unwrap()
    }

    #[test]
    fn history_and_schedule() {
        let config = OptimizerConfig { n_iter: 30, ..Default::default() };
        let mut opt = small_arch(config);
        let mut seen = 0;
        let out = opt.run_with(|_, _| seen += 1).unwrap();
        assert_eq!(out.history.len(), 30);
        assert_eq!(seen, 30);
        for r in &out.history.records {
            assert_eq!(r.beta, crate::field_chain::continuation_step(r.iter));
            assert!((0.0..=1.0).contains(&r.vol_frac));
            assert!(r.f0.is_finite() && r.f0 > 0.0);
            assert!(r.max_change <= 0.1 + 1e-12);
        }
        // returned field is the one behind the last record
        let vf = out.chain.x_bar.iter().sum::<f64>() / 288.0;
        assert_eq!(vf, out.history.last().unwrap().vol_frac);
    }

    #[test]
    fn serial_runs_are_bitwise_identical() {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let config = OptimizerConfig { n_iter: 12, ..Default::default() };
        let a = pool.install(|| small_arch(config.clone()).run().unwrap());
        let b = pool.install(|| small_arch(config.clone()).run().unwrap());
        assert_eq!(a.history, b.history);
        assert_eq!(a.chain.x, b.chain.x);
    }

    #[test]
    fn gradient_check_on_small_mesh() {
        let mut opt = small_arch(OptimizerConfig { kappa: 0.0, ..Default::default() });
        let x: Vec<f64> = (0..288).map(|e| 0.2 + 0.6 * ((e * 37 % 101) as f64 / 100.0)).collect();
        // solve round-off dominates central differences below this step at 24x12
        let check = opt.check_gradients(&x, 2.0, 1e-4).unwrap();
        assert_eq!(check.checked, 288);
        for err in check.max_rel_error {
            assert!(err < 1e-4, "{check:?}");
        }
    }

    #[test]
    fn early_exit_on_small_change() {
        let config = OptimizerConfig { n_iter: 200, change_tolerance: Some(0.5), ..Default::default() };
        let out = small_arch(config).run().unwrap();
        assert_eq!(out.history.len(), 2);
    }

    #[test]
    fn rejects_bad_config() {
        for config in [
            OptimizerConfig { vf_star: 1.0, ..Default::default() },
            OptimizerConfig { n_iter: 0, ..Default::default() },
            OptimizerConfig { kappa: -1.0, ..Default::default() },
        ] {
            assert!(config.validate().is_err());
        }
    }
}

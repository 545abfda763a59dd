//! Problem checks plus gradient and property checks on a coarse copy.

use gravtop_core::fem::{ElementKernel, FeModel, SolverSettings, GRAVITY};
use gravtop_core::{FilterOperator, ProblemSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::CliError;

const GRADIENT_TOL: f64 = 1e-4;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failures += 1;
        }
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn coarse(spec: &ProblemSpec, scale: usize) -> ProblemSpec {
    let nel = if spec.dim == 2 {
        // about 24 elements with the problem's aspect ratio
        let ratio = spec.lengths[0] / spec.lengths[1];
        let ny = ((24.0 / ratio).sqrt().round() as usize).max(2);
        vec![((ny as f64 * ratio).round() as usize).max(2), ny]
    } else {
        let base = spec.lengths.iter().cloned().fold(f64::INFINITY, f64::min);
        spec.lengths.iter().map(|l| ((3.0 * l / base).round() as usize).clamp(3, 12)).collect()
    };
    let nel = nel.iter().zip(&spec.nel).map(|(&n, &full)| (n * scale).min(full)).collect();
    ProblemSpec { nel, void_regions: vec![], solid_regions: vec![], ..spec.clone() }
}

/// Smallest coarse copy whose supports and loads still land on nodes.
fn coarse_built(spec: &ProblemSpec) -> Result<(ProblemSpec, gravtop_core::BuiltProblem), CliError> {
    for scale in [1, 2, 4, 8] {
        let small = coarse(spec, scale);
        if let Ok(built) = small.build() {
            return Ok((small, built));
        }
    }
    let built = spec.build()?;
    Ok((spec.clone(), built))
}

pub fn execute(config: &RunConfig) -> Result<(), CliError> {
    let spec = config.resolve_problem()?;
    let mut report = Report { failures: 0 };
    let warnings = spec.validate()?;
    report.line("problem", true, format!("{} ({}D, nel {:?}) is well formed", spec.name, spec.dim, spec.nel));
    for w in &warnings {
        println!("WARN {}: {w}", spec.name);
    }

    let kernel = ElementKernel::new(2, [1.0, 1.0, 0.0], 0.3, 1.0, GRAVITY)?;
    let k00 = kernel.ke0_at(0, 0);
    report.line("q4_reference_entry", (k00 - 0.494505).abs() <= 1e-6, format!("K00 = {k00:.7}"));

    let (small, built) = coarse_built(&spec)?;
    let mesh = &built.mesh;
    let fe = FeModel::new(mesh, &built.boundary, spec.material.nu, &SolverSettings::default())?;
    let gamma = vec![spec.material.gamma_solid; mesh.num_elements()];
    let fg = fe.assemble_gravity(mesh, &gamma);
    let total: f64 = fg.iter().skip(spec.dim - 1).step_by(spec.dim).sum();
    let expected = mesh.domain_volume() * spec.material.gamma_solid * GRAVITY;
    report.line(
        "gravity_total",
        ((total - expected) / expected).abs() <= 1e-9,
        format!("{total:.6} N against {expected:.6} N"),
    );

    let filter = FilterOperator::build(mesh, built.filter_radius)?;
    let worst = (0..mesh.num_elements())
        .map(|i| (filter.matrix().row(i).1.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    report.line("filter_rows", worst <= 1e-12, format!("max |row sum - 1| = {worst:.2e}"));

    let mut optimizer = built.into_optimizer(&SolverSettings::default())?;
    let n = optimizer.mesh().num_elements();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = [0.0f64; 3];
    for _ in 0..3 {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
        let check = optimizer.check_gradients(&x, 2.0, 1e-6)?;
        for (w, e) in worst.iter_mut().zip(check.max_rel_error) {
            *w = w.max(e);
        }
    }
    for (name, err) in ["gradient_f0", "gradient_g1", "gradient_g2"].iter().zip(worst) {
        report.line(name, err <= GRADIENT_TOL, format!("max relative error {err:.2e} on nel {:?}", small.nel));
    }

    if report.failures > 0 {
        return Err(CliError::Check(format!("{} check(s) failed", report.failures)));
    }
    Ok(())
}

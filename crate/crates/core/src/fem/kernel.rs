//! Reference element matrices for bilinear quadrilaterals and trilinear hexahedra.

use crate::error::{Error, Result};

const GAUSS: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

/// Natural coordinates of the element nodes, counter-clockwise per face,
/// bottom face first.
const CORNERS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

/// Unit-modulus element stiffness and the lumped gravity stencil.
#[derive(Debug, Clone)]
pub struct ElementKernel {
    dim: usize,
    /// Row-major `ndof x ndof`.
    ke0: Vec<f64>,
    lg: Vec<f64>,
    nu: f64,
}

impl ElementKernel {
    /// `h` holds the element edge lengths; `thickness` is used in 2D only.
    /// `g` is the signed gravitational acceleration along the last axis.
    pub fn new(dim: usize, h: [f64; 3], nu: f64, thickness: f64, g: f64) -> Result<Self> {
        if !(nu > 0.0 && nu < 0.5) {
            return Err(Error::Parameter(format!("Poisson's ratio must lie in (0, 0.5), got {nu}")));
        }
        let ke0 = match dim {
            2 => quad_stiffness(h[0], h[1], nu, thickness),
            3 => hex_stiffness(h, nu),
            _ => return Err(Error::Config(format!("dimension must be 2 or 3, got {dim}"))),
        };
        let nen = 1 << dim;
        let mut lg = vec![0.0; nen * dim];
        for a in 0..nen {
            lg[a * dim + dim - 1] = g / nen as f64;
        }
        Ok(Self { dim, ke0, lg, nu })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn ndof(&self) -> usize {
        self.lg.len()
    }

    pub fn ke0(&self) -> &[f64] {
        &self.ke0
    }

    pub fn ke0_at(&self, a: usize, b: usize) -> f64 {
        self.ke0[a * self.ndof() + b]
    }

    /// Lumped gravity stencil `L_g`.
    pub fn lg(&self) -> &[f64] {
        &self.lg
    }

    /// `u_e^T ke0 u_e`.
    pub fn energy(&self, ue: &[f64]) -> f64 {
        let n = self.ndof();
        let mut s = 0.0;
        for a in 0..n {
            let row = &self.ke0[a * n..(a + 1) * n];
            s += ue[a] * row.iter().zip(ue).map(|(k, u)| k * u).sum::<f64>();
        }
        s
    }
}

fn quad_stiffness(hx: f64, hy: f64, nu: f64, t: f64) -> Vec<f64> {
    let c = 1.0 / (1.0 - nu * nu);
    let d = [[c, c * nu, 0.0], [c * nu, c, 0.0], [0.0, 0.0, c * (1.0 - nu) / 2.0]];
    let det = hx * hy / 4.0;
    let mut ke = vec![0.0; 64];
    for &xi in &GAUSS {
        for &eta in &GAUSS {
            let mut b = [[0.0; 8]; 3];
            for (a, p) in CORNERS.iter().take(4).enumerate() {
                let dx = p[0] * (1.0 + p[1] * eta) / 4.0 * 2.0 / hx;
                let dy = p[1] * (1.0 + p[0] * xi) / 4.0 * 2.0 / hy;
                b[0][2 * a] = dx;
                b[1][2 * a + 1] = dy;
                b[2][2 * a] = dy;
                b[2][2 * a + 1] = dx;
            }
            accumulate(&mut ke, &b, &d, det * t);
        }
    }
    ke
}

fn hex_stiffness(h: [f64; 3], nu: f64) -> Vec<f64> {
    let lam = nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = 1.0 / (2.0 * (1.0 + nu));
    let mut d = [[0.0; 6]; 6];
    for i in 0..3 {
        for j in 0..3 {
            d[i][j] = lam;
        }
        d[i][i] = lam + 2.0 * mu;
        d[i + 3][i + 3] = mu;
    }
    let det = h[0] * h[1] * h[2] / 8.0;
    let mut ke = vec![0.0; 24 * 24];
    for &xi in &GAUSS {
        for &eta in &GAUSS {
            for &zeta in &GAUSS {
                let q = [xi, eta, zeta];
                let mut b = [[0.0; 24]; 6];
                for (a, p) in CORNERS.iter().enumerate() {
                    let f = |k: usize| 1.0 + p[k] * q[k];
                    let dx = p[0] * f(1) * f(2) / 8.0 * 2.0 / h[0];
                    let dy = p[1] * f(0) * f(2) / 8.0 * 2.0 / h[1];
                    let dz = p[2] * f(0) * f(1) / 8.0 * 2.0 / h[2];
                    let c = 3 * a;
                    b[0][c] = dx;
                    b[1][c + 1] = dy;
                    b[2][c + 2] = dz;
                    b[3][c] = dy;
                    b[3][c + 1] = dx;
                    b[4][c + 1] = dz;
                    b[4][c + 2] = dy;
                    b[5][c] = dz;
                    b[5][c + 2] = dx;
                }
                accumulate(&mut ke, &b, &d, det);
            }
        }
    }
    ke
}

/// `ke += w B^T D B`.
fn accumulate<const R: usize, const N: usize>(ke: &mut [f64], b: &[[f64; N]; R], d: &[[f64; R]; R], w: f64) {
    let mut db = [[0.0; N]; R];
    for i in 0..R {
        for k in 0..R {
            if d[i][k] != 0.0 {
                for j in 0..N {
                    db[i][j] += d[i][k] * b[k][j];
                }
            }
        }
    }
    for a in 0..N {
        for c in 0..N {
            let mut s = 0.0;
            for i in 0..R {
                s += b[i][a] * db[i][c];
            }
            ke[a * N + c] += w * s;
        }
    }
}

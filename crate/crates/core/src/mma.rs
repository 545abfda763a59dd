//! Method of Moving Asymptotes for problems of the form
//!
//! ```text
//! min f0(x)  s.t.  f_i(x) <= 0,  i = 1..m,   xmin <= x <= xmax
//! ```
//!
//! Each outer iteration builds the convex separable approximation around the
//! current point and solves it with a primal-dual interior-point method on the
//! extended problem with artificial variables `y_i` (cost `c y + d y^2 / 2`) and
//! `z` (cost `a0 z`), which keeps the subproblem feasible even when the
//! constraints are not.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmaSettings {
    /// Absolute move limit as a fraction of the variable range.
    pub move_limit: f64,
    pub asyinit: f64,
    pub asyincr: f64,
    pub asydecr: f64,
    pub albefa: f64,
    pub raa0: f64,
    pub epsimin: f64,
    pub a0: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for MmaSettings {
    fn default() -> Self {
        Self {
            move_limit: 0.1,
            asyinit: 0.5,
            asyincr: 1.2,
            asydecr: 0.7,
            albefa: 0.1,
            raa0: 1e-5,
            epsimin: 1e-7,
            a0: 1.0,
            c: 1000.0,
            d: 1.0,
        }
    }
}

impl MmaSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.move_limit > 0.0
            && self.asyinit > 0.0
            && self.asyincr >= 1.0
            && self.asydecr > 0.0
            && self.asydecr <= 1.0
            && self.albefa > 0.0
            && self.albefa < 1.0
            && self.raa0 > 0.0
            && self.epsimin > 0.0
            && self.a0 > 0.0
            && self.c >= 0.0
            && self.d >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid MMA settings {self:?}")))
        }
    }
}

/// Asymptote memory and the two previous iterates.
#[derive(Debug, Clone)]
pub struct Mma {
    m: usize,
    settings: MmaSettings,
    xmin: f64,
    xmax: f64,
    low: Vec<f64>,
    upp: Vec<f64>,
    xold1: Vec<f64>,
    xold2: Vec<f64>,
    iteration: usize,
}

impl Mma {
    /// `n` variables on `[0, 1]` and `m` constraints.
    pub fn new(n: usize, m: usize, settings: MmaSettings) -> Result<Self> {
        Self::with_bounds(n, m, 0.0, 1.0, settings)
    }

    pub fn with_bounds(n: usize, m: usize, xmin: f64, xmax: f64, settings: MmaSettings) -> Result<Self> {
        settings.validate()?;
        if m == 0 {
            return Err(Error::Parameter("MMA needs at least one constraint".into()));
        }
        if !(xmin < xmax) {
            return Err(Error::Parameter(format!("empty variable range [{xmin}, {xmax}]")));
        }
        Ok(Self {
            m,
            settings,
            xmin,
            xmax,
            low: vec![xmin; n],
            upp: vec![xmax; n],
            xold1: Vec::new(),
            xold2: Vec::new(),
            iteration: 0,
        })
    }

    pub fn settings(&self) -> &MmaSettings {
        &self.settings
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn asymptotes(&self) -> (&[f64], &[f64]) {
        (&self.low, &self.upp)
    }

    /// Replaces `x` by the minimizer of the approximating subproblem. `g`
    /// holds the constraint values and `dg[i]` the gradient of constraint `i`.
    pub fn update(&mut self, x: &mut [f64], df0: &[f64], g: &[f64], dg: &[Vec<f64>]) -> Result<()> {
        let n = x.len();
        let m = self.m;
        if df0.len() != n || g.len() != m || dg.len() != m || dg.iter().any(|r| r.len() != n) {
            return Err(Error::Optimizer("MMA input dimensions do not match".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(x) || !finite(df0) || !finite(g) || !dg.iter().all(|r| finite(r)) {
            return Err(Error::Optimizer("non-finite value passed to MMA".into()));
        }
        let s = self.settings;
        let range = self.xmax - self.xmin;
        self.iteration += 1;

        if self.iteration < 3 {
            for j in 0..n {
                self.low[j] = x[j] - s.asyinit * range;
                self.upp[j] = x[j] + s.asyinit * range;
            }
        } else {
            for j in 0..n {
                let zzz = (x[j] - self.xold1[j]) * (self.xold1[j] - self.xold2[j]);
                let factor = if zzz > 0.0 {
                    s.asyincr
                } else if zzz < 0.0 {
                    s.asydecr
                } else {
                    1.0
                };
                let low = x[j] - factor * (self.xold1[j] - self.low[j]);
                let upp = x[j] + factor * (self.upp[j] - self.xold1[j]);
                self.low[j] = low.clamp(x[j] - 10.0 * range, x[j] - 0.01 * range);
                self.upp[j] = upp.clamp(x[j] + 0.01 * range, x[j] + 10.0 * range);
            }
        }

        let mut sub = Subproblem {
            n,
            m,
            low: self.low.clone(),
            upp: self.upp.clone(),
            alfa: vec![0.0; n],
            beta: vec![0.0; n],
            p0: vec![0.0; n],
            q0: vec![0.0; n],
            p: vec![vec![0.0; n]; m],
            q: vec![vec![0.0; n]; m],
            b: vec![0.0; m],
            a0: s.a0,
            c: s.c,
            d: s.d,
        };
        let raa = s.raa0 / range.max(1e-5);
        for j in 0..n {
            let (xj, low, upp) = (x[j], self.low[j], self.upp[j]);
            sub.alfa[j] = (low + s.albefa * (xj - low)).max(xj - s.move_limit * range).max(self.xmin);
            sub.beta[j] = (upp - s.albefa * (upp - xj)).min(xj + s.move_limit * range).min(self.xmax);
            let ux2 = (upp - xj).powi(2);
            let xl2 = (xj - low).powi(2);
            let (p0, q0) = (df0[j].max(0.0), (-df0[j]).max(0.0));
            let pq0 = 0.001 * (p0 + q0) + raa;
            sub.p0[j] = (p0 + pq0) * ux2;
            sub.q0[j] = (q0 + pq0) * xl2;
            for i in 0..m {
                let (pi, qi) = (dg[i][j].max(0.0), (-dg[i][j]).max(0.0));
                let pq = 0.001 * (pi + qi) + raa;
                sub.p[i][j] = (pi + pq) * ux2;
                sub.q[i][j] = (qi + pq) * xl2;
            }
        }
        for i in 0..m {
            let mut bi = -g[i];
            for j in 0..n {
                bi += sub.p[i][j] / (self.upp[j] - x[j]) + sub.q[i][j] / (x[j] - self.low[j]);
            }
            sub.b[i] = bi;
        }

        let xnew = sub.solve(s.epsimin)?;
        self.xold2 = std::mem::replace(&mut self.xold1, x.to_vec());
        x.copy_from_slice(&xnew);
        Ok(())
    }
}

struct Subproblem {
    n: usize,
    m: usize,
    low: Vec<f64>,
    upp: Vec<f64>,
    alfa: Vec<f64>,
    beta: Vec<f64>,
    p0: Vec<f64>,
    q0: Vec<f64>,
    p: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    b: Vec<f64>,
    a0: f64,
    c: f64,
    d: f64,
}

/// Primal and dual variables of the interior-point iteration.
#[derive(Clone)]
struct Point {
    x: Vec<f64>,
    y: Vec<f64>,
    z: f64,
    lam: Vec<f64>,
    xsi: Vec<f64>,
    eta: Vec<f64>,
    mu: Vec<f64>,
    zet: f64,
    s: Vec<f64>,
}

impl Subproblem {
    /// `sum_i lam_i p_ij` and the same for `q`, plus `p0`, `q0`.
    fn plam_qlam(&self, lam: &[f64], j: usize) -> (f64, f64) {
        let mut pl = self.p0[j];
        let mut ql = self.q0[j];
        for i in 0..self.m {
            pl += lam[i] * self.p[i][j];
            ql += lam[i] * self.q[i][j];
        }
        (pl, ql)
    }

    fn gvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|i| {
                (0..self.n).map(|j| self.p[i][j] / (self.upp[j] - x[j]) + self.q[i][j] / (x[j] - self.low[j])).sum()
            })
            .collect()
    }

    /// Perturbed KKT residual; `a` (the linear `z` coupling) is zero.
    fn residual(&self, pt: &Point, epsi: f64) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        let mut r = Vec::with_capacity(3 * n + 4 * m + 2);
        for j in 0..n {
            let (pl, ql) = self.plam_qlam(&pt.lam, j);
            let dpsidx = pl / (self.upp[j] - pt.x[j]).powi(2) - ql / (pt.x[j] - self.low[j]).powi(2);
            r.push(dpsidx - pt.xsi[j] + pt.eta[j]);
        }
        for i in 0..m {
            r.push(self.c + self.d * pt.y[i] - pt.mu[i] - pt.lam[i]);
        }
        r.push(self.a0 - pt.zet);
        let gvec = self.gvec(&pt.x);
        for i in 0..m {
            r.push(gvec[i] - pt.y[i] + pt.s[i] - self.b[i]);
        }
        for j in 0..n {
            r.push(pt.xsi[j] * (pt.x[j] - self.alfa[j]) - epsi);
        }
        for j in 0..n {
            r.push(pt.eta[j] * (self.beta[j] - pt.x[j]) - epsi);
        }
        for i in 0..m {
            r.push(pt.mu[i] * pt.y[i] - epsi);
        }
        r.push(pt.zet * pt.z - epsi);
        for i in 0..m {
            r.push(pt.lam[i] * pt.s[i] - epsi);
        }
        r
    }

    fn solve(&self, epsimin: f64) -> Result<Vec<f64>> {
        let (n, m) = (self.n, self.m);
        let mut pt = Point {
            x: (0..n).map(|j| 0.5 * (self.alfa[j] + self.beta[j])).collect(),
            y: vec![1.0; m],
            z: 1.0,
            lam: vec![1.0; m],
            xsi: (0..n).map(|j| (1.0 / (0.5 * (self.beta[j] - self.alfa[j]))).max(1.0)).collect(),
            eta: (0..n).map(|j| (1.0 / (0.5 * (self.beta[j] - self.alfa[j]))).max(1.0)).collect(),
            mu: vec![(0.5 * self.c).max(1.0); m],
            zet: 1.0,
            s: vec![1.0; m],
        };
        let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let maxabs = |r: &[f64]| r.iter().fold(0.0f64, |a, v| a.max(v.abs()));

        let mut epsi = 1.0;
        while epsi > epsimin {
            let res = self.residual(&pt, epsi);
            let mut resnorm = norm(&res);
            let mut resmax = maxabs(&res);
            let mut inner = 0;
            while resmax > 0.9 * epsi && inner < 200 {
                inner += 1;
                let dir = self.newton_direction(&pt, epsi)?;
                let mut steg = self.max_step(&pt, &dir);
                let old = pt.clone();
                let mut resnew = 2.0 * resnorm;
                let mut tries = 0;
                let mut newres = Vec::new();
                while resnew > resnorm && tries < 50 {
                    tries += 1;
                    pt = old.clone();
                    pt.axpy(steg, &dir);
                    newres = self.residual(&pt, epsi);
                    resnew = norm(&newres);
                    steg /= 2.0;
                }
                resnorm = resnew;
                resmax = maxabs(&newres);
            }
            epsi *= 0.1;
        }
        if pt.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Optimizer("MMA subproblem diverged".into()));
        }
        Ok(pt.x)
    }

    fn newton_direction(&self, pt: &Point, epsi: f64) -> Result<Point> {
        let (n, m) = (self.n, self.m);
        let mut delx = vec![0.0; n];
        let mut diagx = vec![0.0; n];
        // gg[i][j] = d g_i / d x_j of the approximation
        let mut gg = vec![vec![0.0; n]; m];
        for j in 0..n {
            let ux1 = self.upp[j] - pt.x[j];
            let xl1 = pt.x[j] - self.low[j];
            let (ux2, xl2) = (ux1 * ux1, xl1 * xl1);
            let (pl, ql) = self.plam_qlam(&pt.lam, j);
            let dpsidx = pl / ux2 - ql / xl2;
            let xa = pt.x[j] - self.alfa[j];
            let bx = self.beta[j] - pt.x[j];
            delx[j] = dpsidx - epsi / xa + epsi / bx;
            diagx[j] = 2.0 * (pl / (ux2 * ux1) + ql / (xl2 * xl1)) + pt.xsi[j] / xa + pt.eta[j] / bx;
            for i in 0..m {
                gg[i][j] = self.p[i][j] / ux2 - self.q[i][j] / xl2;
            }
        }
        let gvec = self.gvec(&pt.x);
        let dely: Vec<f64> = (0..m).map(|i| self.c + self.d * pt.y[i] - pt.lam[i] - epsi / pt.y[i]).collect();
        let delz = self.a0 - epsi / pt.z;
        let dellam: Vec<f64> = (0..m).map(|i| gvec[i] - pt.y[i] - self.b[i] + epsi / pt.lam[i]).collect();
        let diagy: Vec<f64> = (0..m).map(|i| self.d + pt.mu[i] / pt.y[i]).collect();

        // Reduced (m + 1) x (m + 1) system in (dlam, dz).
        let size = m + 1;
        let mut a = vec![vec![0.0; size]; size];
        let mut rhs = vec![0.0; size];
        for i in 0..m {
            rhs[i] = dellam[i] + dely[i] / diagy[i] - (0..n).map(|j| gg[i][j] * delx[j] / diagx[j]).sum::<f64>();
            for k in 0..m {
                a[i][k] = (0..n).map(|j| gg[i][j] * gg[k][j] / diagx[j]).sum();
            }
            a[i][i] += pt.s[i] / pt.lam[i] + 1.0 / diagy[i];
        }
        a[m][m] = -pt.zet / pt.z;
        rhs[m] = delz;
        let sol = solve_dense(a, rhs).ok_or_else(|| Error::Optimizer("singular MMA Newton system".into()))?;
        let dlam = sol[..m].to_vec();
        let dz = sol[m];

        let dx: Vec<f64> =
            (0..n).map(|j| (-delx[j] - (0..m).map(|i| gg[i][j] * dlam[i]).sum::<f64>()) / diagx[j]).collect();
        let dy: Vec<f64> = (0..m).map(|i| (-dely[i] + dlam[i]) / diagy[i]).collect();
        let dxsi: Vec<f64> = (0..n)
            .map(|j| {
                let xa = pt.x[j] - self.alfa[j];
                -pt.xsi[j] + epsi / xa - pt.xsi[j] * dx[j] / xa
            })
            .collect();
        let deta: Vec<f64> = (0..n)
            .map(|j| {
                let bx = self.beta[j] - pt.x[j];
                -pt.eta[j] + epsi / bx + pt.eta[j] * dx[j] / bx
            })
            .collect();
        let dmu: Vec<f64> = (0..m).map(|i| -pt.mu[i] + epsi / pt.y[i] - pt.mu[i] * dy[i] / pt.y[i]).collect();
        let dzet = -pt.zet + epsi / pt.z - pt.zet * dz / pt.z;
        let ds: Vec<f64> = (0..m).map(|i| -pt.s[i] + epsi / pt.lam[i] - pt.s[i] * dlam[i] / pt.lam[i]).collect();
        Ok(Point { x: dx, y: dy, z: dz, lam: dlam, xsi: dxsi, eta: deta, mu: dmu, zet: dzet, s: ds })
    }

    /// Largest step (capped at 1) keeping every positive variable positive
    /// and `x` strictly inside `(alfa, beta)`, with a 1% margin.
    fn max_step(&self, pt: &Point, d: &Point) -> f64 {
        let mut stm: f64 = 1.0;
        let mut ratio = |v: f64, dv: f64| stm = stm.max(-1.01 * dv / v);
        for i in 0..self.m {
            ratio(pt.y[i], d.y[i]);
            ratio(pt.lam[i], d.lam[i]);
            ratio(pt.mu[i], d.mu[i]);
            ratio(pt.s[i], d.s[i]);
        }
        ratio(pt.z, d.z);
        ratio(pt.zet, d.zet);
        for j in 0..self.n {
            ratio(pt.xsi[j], d.xsi[j]);
            ratio(pt.eta[j], d.eta[j]);
            ratio(pt.x[j] - self.alfa[j], d.x[j]);
            ratio(self.beta[j] - pt.x[j], -d.x[j]);
        }
        1.0 / stm
    }
}

impl Point {
    fn axpy(&mut self, t: f64, d: &Point) {
        let add = |a: &mut [f64], b: &[f64]| a.iter_mut().zip(b).for_each(|(a, b)| *a += t * b);
        add(&mut self.x, &d.x);
        add(&mut self.y, &d.y);
        add(&mut self.lam, &d.lam);
        add(&mut self.xsi, &d.xsi);
        add(&mut self.eta, &d.eta);
        add(&mut self.mu, &d.mu);
        add(&mut self.s, &d.s);
        self.z += t * d.z;
        self.zet += t * d.zet;
    }
}

/// Gaussian elimination with partial pivoting for the small dual system.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c] == 0.0 || !a[piv][c].is_finite() {
            return None;
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_bound_constraint() {
        // min (x - 1)^2  s.t.  x - 0.5 <= 0
        let mut mma = Mma::new(1, 1, MmaSettings::default()).unwrap();
        let mut x = vec![0.2];
        for _ in 0..50 {
            let df0 = vec![2.0 * (x[0] - 1.0)];
            let g = [x[0] - 0.5];
            mma.update(&mut x, &df0, &g, &[vec![1.0]]).unwrap();
        }
        assert!((x[0] - 0.5).abs() < 1e-6, "{}", x[0]);
    }

    #[test]
    fn first_step_stops_at_move_limit() {
        // min sum (x_i - 0.3)^2 with an inactive constraint
        let n = 4;
        let mut mma = Mma::new(n, 1, MmaSettings { move_limit: 0.1, ..Default::default() }).unwrap();
        let mut x = vec![0.9; n];
        let df0: Vec<f64> = x.iter().map(|v| 2.0 * (v - 0.3)).collect();
        let g = x.iter().sum::<f64>() / n as f64 - 2.0;
        mma.update(&mut x, &df0, &[g], &[vec![1.0 / n as f64; n]]).unwrap();
        for v in x {
            assert!((v - 0.8).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn reciprocal_constraint_toy() {
        // min x1 + x2  s.t.  1/x1 + 1/x2 - 4 <= 0  on [0.1, 1]^2
        let mut mma = Mma::with_bounds(2, 1, 0.1, 1.0, MmaSettings::default()).unwrap();
        let mut x = vec![0.9, 0.7];
        for _ in 0..100 {
            let g = 1.0 / x[0] + 1.0 / x[1] - 4.0;
            let dg = vec![-1.0 / (x[0] * x[0]), -1.0 / (x[1] * x[1])];
            mma.update(&mut x, &[1.0, 1.0], &[g], &[dg]).unwrap();
        }
        assert!((x[0] - 0.5).abs() < 1e-4 && (x[1] - 0.5).abs() < 1e-4, "{x:?}");
    }

    #[test]
    fn iterates_respect_bounds_and_moves() {
        let n = 30;
        let mut mma = Mma::new(n, 2, MmaSettings { move_limit: 0.05, ..Default::default() }).unwrap();
        let mut x: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) / n as f64).collect();
        for _ in 0..40 {
            let prev = x.clone();
            // min -sum w_j x_j  s.t.  mean(x) <= 0.4,  x_0 >= 0.2
            let df0: Vec<f64> = (0..n).map(|j| -(1.0 + (j % 7) as f64)).collect();
            let mean = x.iter().sum::<f64>() / n as f64;
            let mut dg1 = vec![0.0; n];
            dg1[0] = -1.0;
            let g = [mean - 0.4, 0.2 - x[0]];
            mma.update(&mut x, &df0, &g, &[vec![1.0 / n as f64; n], dg1]).unwrap();
            for (a, b) in x.iter().zip(&prev) {
                assert!((0.0..=1.0).contains(a));
                assert!((a - b).abs() <= 0.05 + 1e-12);
            }
        }
        let mean = x.iter().sum::<f64>() / n as f64;
        assert!(mean <= 0.4 + 1e-4);
        assert!(x[0] >= 0.2 - 1e-4);
    }

    #[test]
    fn infeasible_start_is_restored() {
        // start far outside the feasible set: mean(x) <= 0.2
        let n = 10;
        let mut mma = Mma::new(n, 1, MmaSettings::default()).unwrap();
        let mut x = vec![0.95; n];
        for _ in 0..60 {
            let mean = x.iter().sum::<f64>() / n as f64;
            mma.update(&mut x, &vec![-1.0; n], &[mean / 0.2 - 1.0], &[vec![1.0 / (0.2 * n as f64); n]]).unwrap();
        }
        let mean = x.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.2).abs() < 1e-4, "{mean}");
    }

    #[test]
    fn rejects_nan() {
        let mut mma = Mma::new(2, 1, MmaSettings::default()).unwrap();
        let mut x = vec![0.5, 0.5];
        let r = mma.update(&mut x, &[f64::NAN, 0.0], &[0.0], &[vec![1.0, 1.0]]);
        assert!(matches!(r, Err(Error::Optimizer(_))));
        assert!(Mma::new(2, 0, MmaSettings::default()).is_err());
    }
}

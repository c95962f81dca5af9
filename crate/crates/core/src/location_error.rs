//! Row-stochastic error matrix between true and reported grid points.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::policy::RelayPolicy;
use crate::scenario::{Coord, GridScenario};

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMatrix {
    n: usize,
    /// Row-major, `e[i*n + j]` = Pr[report x_j | truth x_i].
    e: Vec<f64>,
    pub sigma_m: f64,
    pub bias: Coord,
}

impl ErrorMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.e[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.e[i * self.n..(i + 1) * self.n]
    }

    /// Builds from explicit rows, renormalising each to sum 1.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut e = Vec::with_capacity(n * n);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != n {
                return Err(Error::Dimension { what: "error matrix row", expected: n, got: r.len() });
            }
            let s: f64 = r.iter().sum();
            if r.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !(s > 0.0) {
                return Err(Error::domain(format!("error matrix row {} is not a distribution", i + 1)));
            }
            e.extend(r.iter().map(|v| v / s));
        }
        Ok(ErrorMatrix { n, e, sigma_m: f64::NAN, bias: Coord::default() })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("i,j,prob\n");
        for i in 0..self.n {
            for j in 0..self.n {
                let v = self.get(i, j);
                if v != 0.0 {
                    let _ = writeln!(s, "{},{},{}", i + 1, j + 1, v);
                }
            }
        }
        s
    }
}

pub fn identity_error(n2: usize) -> ErrorMatrix {
    let mut e = vec![0.0; n2 * n2];
    for i in 0..n2 {
        e[i * n2 + i] = 1.0;
    }
    ErrorMatrix { n: n2, e, sigma_m: 0.0, bias: Coord::default() }
}

/// Isotropic Gaussian around `x_i + bias` evaluated at the grid points, rows renormalised.
pub fn gaussian_error(scn: &GridScenario, sigma_m: f64, bias: Coord) -> Result<ErrorMatrix> {
    if !(sigma_m.is_finite() && sigma_m >= 0.0) {
        return Err(Error::domain(format!("sigma must be >= 0, got {sigma_m}")));
    }
    let n = scn.n_points();
    let pts: Vec<Coord> = (0..n).map(|i| scn.coord(i)).collect();
    let mut e = vec![0.0; n * n];
    if sigma_m == 0.0 {
        for (i, x) in pts.iter().enumerate() {
            let j = scn.snap_clamped(Coord::new(x.x + bias.x, x.y + bias.y));
            e[i * n + j] = 1.0;
        }
    } else {
        let inv = 1.0 / (2.0 * sigma_m * sigma_m);
        let mut logd = vec![0.0; n];
        for (i, x) in pts.iter().enumerate() {
            let mean = Coord::new(x.x + bias.x, x.y + bias.y);
            for (j, y) in pts.iter().enumerate() {
                let dx = y.x - mean.x;
                let dy = y.y - mean.y;
                logd[j] = -(dx * dx + dy * dy) * inv;
            }
            // Log-sum-exp keeps far-away rows from underflowing to zero.
            let top = logd.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let row = &mut e[i * n..(i + 1) * n];
            let mut s = 0.0;
            for (r, l) in row.iter_mut().zip(&logd) {
                *r = (l - top).exp();
                s += *r;
            }
            assert!(s >= 1.0, "error matrix row {i} has no mass");
            for r in row.iter_mut() {
                *r /= s;
            }
        }
    }
    Ok(ErrorMatrix { n, e, sigma_m, bias })
}

/// Probability that the report of each true point falls where the policy picks `option`.
pub fn fold_option(e: &ErrorMatrix, policy: &RelayPolicy, option: u16) -> Result<Vec<f64>> {
    if policy.len() != e.n {
        return Err(Error::Dimension { what: "policy length", expected: e.n, got: policy.len() });
    }
    let sel: Vec<usize> = (0..e.n).filter(|&j| policy.decisions[j] == option).collect();
    Ok((0..e.n)
        .map(|i| {
            let r = e.row(i);
            sel.iter().map(|&j| r[j]).sum::<f64>().clamp(0.0, 1.0)
        })
        .collect())
}

/// `(w_R, w_D)` per true grid point; any relay decision counts as R.
pub fn fold_policy(e: &ErrorMatrix, policy: &RelayPolicy) -> Result<(Vec<f64>, Vec<f64>)> {
    let w_d = fold_option(e, policy, 0)?;
    let w_r: Vec<f64> = w_d.iter().map(|d| 1.0 - d).collect();
    Ok((w_r, w_d))
}

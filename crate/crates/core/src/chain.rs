//! Joint mobility × information-forwarding generator and its steady state.
//!
//! Flat index of `(m, s)` is `m * L + s` (both 0-based). Mobility arcs keep
//! `s` and forwarding arcs keep `m`; the τ-arcs at grid point `m` are scaled
//! by that point's weights `w_D(m)`, `w_R(m)`.

use crate::ctmc::{stationary, Generator};
use crate::error::{Error, Result};
use crate::info_forwarding::{state_sets, InfoForwardTemplate};
use crate::mobility::MobilityModel;

#[derive(Debug, Clone)]
pub struct FullChain {
    pub q: Generator,
    pub n_points: usize,
    pub l: usize,
}

impl FullChain {
    pub fn n_states(&self) -> usize {
        self.n_points * self.l
    }

    pub fn flat(&self, m: usize, s: usize) -> usize {
        m * self.l + s
    }

    pub fn split(&self, k: usize) -> (usize, usize) {
        (k / self.l, k % self.l)
    }
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub p: Vec<f64>,
    /// ‖p·Q‖∞.
    pub residual: f64,
    pub l: usize,
}

impl SteadyState {
    /// Probability of each grid point, summed over forwarding states.
    pub fn grid_marginal(&self) -> Vec<f64> {
        self.p.chunks(self.l).map(|c| c.iter().sum()).collect()
    }

    /// Per grid point, the mass on the given forwarding states.
    pub fn mass_on(&self, states: &[usize]) -> Vec<f64> {
        self.p.chunks(self.l).map(|c| states.iter().map(|&s| c[s]).sum()).collect()
    }

    /// Per grid point, mass with AP view R.
    pub fn r_view_mass(&self, tmpl: &InfoForwardTemplate) -> Vec<f64> {
        self.mass_on(&state_sets(tmpl).1)
    }
}

fn check_weights(n: usize, w_r: &[f64], w_d: &[f64]) -> Result<()> {
    for (what, w) in [("w_R length", w_r), ("w_D length", w_d)] {
        if w.len() != n {
            return Err(Error::Dimension { what, expected: n, got: w.len() });
        }
    }
    for m in 0..n {
        let ok = |v: f64| (-1e-12..=1.0 + 1e-12).contains(&v);
        if !ok(w_r[m]) || !ok(w_d[m]) || (w_r[m] + w_d[m] - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "weights at grid point {} must lie in [0,1] and sum to 1, got w_R={} w_D={}",
                m + 1,
                w_r[m],
                w_d[m]
            )));
        }
    }
    Ok(())
}

pub fn assemble(mob: &MobilityModel, tmpl: &InfoForwardTemplate, w_r: &[f64], w_d: &[f64]) -> Result<FullChain> {
    assemble_with(mob, |_| tmpl, w_r, w_d)
}

/// Like [`assemble`] but with a possibly different forwarding template per grid point.
/// All templates must have the same queue capacity.
pub fn assemble_with<'a>(
    mob: &MobilityModel,
    tmpl_at: impl Fn(usize) -> &'a InfoForwardTemplate,
    w_r: &[f64],
    w_d: &[f64],
) -> Result<FullChain> {
    let n = mob.n_points();
    check_weights(n, w_r, w_d)?;
    let l = tmpl_at(0).len();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n * l);
    for m in 0..n {
        let tmpl = tmpl_at(m);
        if tmpl.len() != l {
            return Err(Error::Dimension { what: "forwarding template size", expected: l, got: tmpl.len() });
        }
        let mob_arcs: Vec<(usize, f64)> = mob.q_mob.row(m).filter(|&(j, _)| j != m).collect();
        let info = tmpl.instantiate(w_d[m].clamp(0.0, 1.0), w_r[m].clamp(0.0, 1.0));
        for (s, arcs) in info.into_iter().enumerate() {
            let mut row = Vec::with_capacity(arcs.len() + mob_arcs.len());
            row.extend(mob_arcs.iter().map(|&(j, v)| (j * l + s, v)));
            row.extend(arcs.into_iter().map(|(t, v)| (m * l + t, v)));
            rows.push(row);
        }
    }
    Ok(FullChain { q: Generator::from_offdiagonal_rows(rows)?, n_points: n, l })
}

pub fn solve_steady_state(chain: &FullChain) -> Result<SteadyState> {
    let p = stationary(&chain.q)?;
    let residual = chain.q.left_residual(&p);
    Ok(SteadyState { p, residual, l: chain.l })
}

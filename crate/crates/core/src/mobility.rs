//! Random walk of the mobile node on the grid as a CTMC.

use std::fmt::Write as _;

use crate::ctmc::{stationary, Generator};
use crate::error::{Error, Result};
use crate::scenario::GridScenario;

#[derive(Debug, Clone)]
pub struct MobilityModel {
    pub q_mob: Generator,
    /// Total leaving rate of every state, speed / spacing.
    pub mu_m: f64,
    pub p_mob: Vec<f64>,
}

impl MobilityModel {
    pub fn n_points(&self) -> usize {
        self.p_mob.len()
    }

    /// `row,col,rate` lines (1-based states) for the off-diagonal entries.
    pub fn dump_coo(&self) -> String {
        let mut s = String::from("row,col,rate\n");
        for i in 0..self.q_mob.n() {
            for (j, v) in self.q_mob.row(i) {
                if i != j {
                    let _ = writeln!(s, "{},{},{}", i + 1, j + 1, v);
                }
            }
        }
        s
    }
}

/// Open-grid model; walls in `scn` are ignored.
pub fn build_open_grid(scn: &GridScenario, avg_speed_mps: f64) -> Result<MobilityModel> {
    build(scn, avg_speed_mps, |i| scn.grid_neighbours(i))
}

/// Model honouring the scenario's blocked edges.
pub fn build_walled_grid(scn: &GridScenario, avg_speed_mps: f64) -> Result<MobilityModel> {
    build(scn, avg_speed_mps, |i| scn.open_neighbours(i))
}

fn build(scn: &GridScenario, speed: f64, neighbours: impl Fn(usize) -> Vec<usize>) -> Result<MobilityModel> {
    if !(speed.is_finite() && speed > 0.0) {
        return Err(Error::domain(format!("average speed must be > 0, got {speed}")));
    }
    scn.validate()?;
    let n = scn.n_points();
    let mu_m = speed / scn.spacing_m;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let nb = neighbours(i);
        if nb.is_empty() {
            return Err(Error::Disconnected { state: i + 1 });
        }
        let r = mu_m / nb.len() as f64;
        rows.push(nb.into_iter().map(|j| (j, r)).collect());
    }
    let q_mob = Generator::from_offdiagonal_rows(rows)?;
    let classes = q_mob.closed_classes();
    if classes.len() != 1 || classes[0].len() != n {
        let reached = &classes[0];
        let state = (0..n).find(|s| reached.binary_search(s).is_err()).unwrap_or(0);
        return Err(Error::Disconnected { state: state + 1 });
    }
    let p_mob = stationary(&q_mob)?;
    Ok(MobilityModel { q_mob, mu_m, p_mob })
}

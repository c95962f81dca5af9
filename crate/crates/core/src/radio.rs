//! Path loss and a parametric WLAN link model producing throughput tables.
//!
//! Frame success is a logistic curve in SNR around each rate's threshold.
//! The Ricean K factor controls the steepness: strong line-of-sight (large K)
//! approaches the base `logistic_scale_db`, Rayleigh fading (K = 0) doubles it.

use crate::error::{Error, Result};
use crate::scenario::{Coord, GridScenario, MobilityRole};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEntry {
    pub phy_rate_mbps: f64,
    pub snr_threshold_db: f64,
    pub overhead_us: f64,
}

/// How the fallback (secondary) rate of a relay hop is picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SecondaryRule {
    #[default]
    MostRobust,
    NextLower,
    SameAsPrimary,
}

impl SecondaryRule {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "most_robust" => Some(SecondaryRule::MostRobust),
            "next_lower" => Some(SecondaryRule::NextLower),
            "same_as_primary" => Some(SecondaryRule::SameAsPrimary),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SecondaryRule::MostRobust => "most_robust",
            SecondaryRule::NextLower => "next_lower",
            SecondaryRule::SameAsPrimary => "same_as_primary",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkModelParams {
    pub pl_d0_db: f64,
    pub d0_m: f64,
    pub n_exp: f64,
    pub tx_power_dbm: f64,
    pub noise_floor_dbm: f64,
    pub ricean_k: f64,
    pub b_msdu_bytes: u32,
    pub logistic_scale_db: f64,
    pub secondary: SecondaryRule,
    pub rate_table: Vec<RateEntry>,
}

/// The eight OFDM rates with their SNR thresholds and per-attempt overhead.
pub fn default_rate_table() -> Vec<RateEntry> {
    [(6.0, 5.0), (9.0, 6.0), (12.0, 8.0), (18.0, 10.0), (24.0, 13.0), (36.0, 17.0), (48.0, 21.0), (54.0, 22.0)]
        .into_iter()
        .map(|(r, t)| RateEntry {
            phy_rate_mbps: r,
            snr_threshold_db: t,
            // Preamble, SIFS, ACK and backoff; the ACK part shrinks with rate.
            overhead_us: ((180.0 + 272.0 / r) * 10.0_f64).round() / 10.0,
        })
        .collect()
}

impl Default for LinkModelParams {
    fn default() -> Self {
        LinkModelParams {
            pl_d0_db: 46.7,
            d0_m: 1.0,
            n_exp: 2.9,
            tx_power_dbm: 5.0,
            noise_floor_dbm: -95.0,
            ricean_k: 6.0,
            b_msdu_bytes: 1500,
            logistic_scale_db: 1.0,
            secondary: SecondaryRule::MostRobust,
            rate_table: default_rate_table(),
        }
    }
}

impl LinkModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d0_m > 0.0 && self.n_exp > 0.0) {
            return Err(Error::domain("d0_m and path_loss_exponent must be > 0"));
        }
        if !(self.ricean_k >= 0.0 && self.logistic_scale_db > 0.0) {
            return Err(Error::domain("ricean_k must be >= 0 and logistic_scale_db > 0"));
        }
        if self.b_msdu_bytes == 0 {
            return Err(Error::domain("b_msdu_bytes must be > 0"));
        }
        if self.rate_table.is_empty() {
            return Err(Error::domain("rate table is empty"));
        }
        for e in &self.rate_table {
            if !(e.phy_rate_mbps > 0.0 && e.overhead_us >= 0.0 && e.snr_threshold_db.is_finite()) {
                return Err(Error::domain(format!("invalid rate entry {e:?}")));
            }
        }
        for w in self.rate_table.windows(2) {
            if !(w[1].phy_rate_mbps > w[0].phy_rate_mbps && w[1].snr_threshold_db > w[0].snr_threshold_db) {
                return Err(Error::domain("rate table must be sorted by rate with strictly increasing thresholds"));
            }
        }
        Ok(())
    }

    fn payload_bits(&self) -> f64 {
        8.0 * self.b_msdu_bytes as f64
    }

    fn effective_scale_db(&self) -> f64 {
        self.logistic_scale_db * (1.0 + 1.0 / (self.ricean_k + 1.0))
    }

    pub fn snr_db(&self, pl_db: f64) -> f64 {
        self.tx_power_dbm - pl_db - self.noise_floor_dbm
    }
}

pub fn path_loss_db(params: &LinkModelParams, d_m: f64) -> Result<f64> {
    if !(d_m > 0.0) {
        return Err(Error::domain(format!("distance must be > 0, got {d_m}")));
    }
    Ok(params.pl_d0_db + 10.0 * params.n_exp * (d_m / params.d0_m).log10())
}

/// Success probability and mean attempt duration (seconds) of one frame at a rate.
pub fn link_success(params: &LinkModelParams, pl_db: f64, rate_index: usize) -> (f64, f64) {
    let e = params.rate_table[rate_index];
    let z = (params.snr_db(pl_db) - e.snr_threshold_db) / params.effective_scale_db();
    let p = if z.is_nan() { 0.0 } else { 1.0 / (1.0 + (-z).exp()) };
    let t = params.payload_bits() / (e.phy_rate_mbps * 1e6) + e.overhead_us * 1e-6;
    (p.clamp(0.0, 1.0), t)
}

fn goodput_mbps(params: &LinkModelParams, pl_db: f64, r: usize) -> f64 {
    let (p, t) = link_success(params, pl_db, r);
    p * params.payload_bits() / t / 1e6
}

/// Rate index maximising single-hop goodput; ties go to the more robust rate.
pub fn best_rate(params: &LinkModelParams, pl_db: f64) -> usize {
    let mut best = 0;
    let mut best_v = goodput_mbps(params, pl_db, 0);
    for r in 1..params.rate_table.len() {
        let v = goodput_mbps(params, pl_db, r);
        if v > best_v {
            best = r;
            best_v = v;
        }
    }
    best
}

pub fn direct_throughput(params: &LinkModelParams, pl_db: f64) -> f64 {
    goodput_mbps(params, pl_db, best_rate(params, pl_db))
}

fn secondary_rate(params: &LinkModelParams, primary: usize) -> usize {
    match params.secondary {
        SecondaryRule::MostRobust => 0,
        SecondaryRule::NextLower => primary.saturating_sub(1),
        SecondaryRule::SameAsPrimary => primary,
    }
}

/// Two-hop throughput with one primary-rate attempt and one secondary-rate attempt per hop.
///
/// The primary rates of the two hops are chosen together to maximise the
/// two-hop value, which keeps the result monotone in each hop's path loss.
pub fn relay_throughput(params: &LinkModelParams, pl1_db: f64, pl2_db: f64) -> f64 {
    let nr = params.rate_table.len();
    let hop = |pl: f64| -> Vec<(f64, f64)> { (0..nr).map(|r| link_success(params, pl, r)).collect() };
    let h1 = hop(pl1_db);
    let h2 = hop(pl2_db);
    let mut best = 0.0_f64;
    for a in 0..nr {
        let sa = secondary_rate(params, a);
        for b in 0..nr {
            let sb = secondary_rate(params, b);
            let num = h1[a].0 * h2[b].0 + h1[sa].0 * h2[sb].0;
            let den = h1[a].1 + h2[b].1 + h1[sa].1 + h2[sb].1;
            best = best.max(num / den);
        }
    }
    best * params.payload_bits() / 1e6
}

/// Per-grid-point expected throughput: `t_direct` and one vector per relay.
#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputTableSet {
    pub t_direct: Vec<f64>,
    pub t_relay: Vec<Vec<f64>>,
}

impl ThroughputTableSet {
    pub fn new(t_direct: Vec<f64>, t_relay: Vec<Vec<f64>>) -> Result<Self> {
        if t_relay.is_empty() {
            return Err(Error::domain("at least one relay table is required"));
        }
        for t in &t_relay {
            if t.len() != t_direct.len() {
                return Err(Error::Dimension { what: "relay table length", expected: t_direct.len(), got: t.len() });
            }
        }
        if t_direct.iter().chain(t_relay.iter().flatten()).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::domain("throughput values must be finite and >= 0"));
        }
        Ok(ThroughputTableSet { t_direct, t_relay })
    }

    pub fn n_points(&self) -> usize {
        self.t_direct.len()
    }

    /// Number of relay options K.
    pub fn relays(&self) -> usize {
        self.t_relay.len()
    }

    /// T_n(m) with n = 0 for direct.
    pub fn t(&self, option: usize, m: usize) -> f64 {
        if option == 0 {
            self.t_direct[m]
        } else {
            self.t_relay[option - 1][m]
        }
    }
}

fn pl_between(params: &LinkModelParams, a: Coord, b: Coord) -> f64 {
    // Closer than the reference distance is treated as at the reference distance.
    path_loss_db(params, a.dist(b).max(params.d0_m)).expect("distance clamped to d0 > 0")
}

/// Throughput tables for a scenario without a measured map.
pub fn build_tables(grid: &GridScenario, params: &LinkModelParams, relays: usize) -> Result<ThroughputTableSet> {
    params.validate()?;
    let n = grid.n_points();
    let ap = grid.ap_coord;
    match grid.mobility_role {
        MobilityRole::MobileRelay => {
            if relays == 0 {
                return Err(Error::domain("mobile-relay scenario needs at least one relay"));
            }
            let s_dir = direct_throughput(params, pl_between(params, ap, grid.dest_coord));
            let rel: Vec<f64> = (0..n)
                .map(|m| {
                    let x = grid.coord(m);
                    relay_throughput(params, pl_between(params, ap, x), pl_between(params, x, grid.dest_coord))
                })
                .collect();
            ThroughputTableSet::new(vec![s_dir; n], vec![rel; relays])
        }
        MobilityRole::MobileDestination => {
            if grid.relay_coords.is_empty() {
                return Err(Error::domain("mobile-destination scenario needs static relay coordinates"));
            }
            let dir = (0..n).map(|m| direct_throughput(params, pl_between(params, ap, grid.coord(m)))).collect();
            let rel = grid
                .relay_coords
                .iter()
                .map(|&r| {
                    (0..n).map(|m| relay_throughput(params, pl_between(params, ap, r), pl_between(params, r, grid.coord(m)))).collect()
                })
                .collect();
            ThroughputTableSet::new(dir, rel)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single_rate(rate: f64, thr: f64, overhead: f64) -> LinkModelParams {
        LinkModelParams {
            rate_table: vec![RateEntry { phy_rate_mbps: rate, snr_threshold_db: thr, overhead_us: overhead }],
            ..LinkModelParams::default()
        }
    }

    #[test]
    fn path_loss_reference_points() {
        let p = LinkModelParams::default();
        assert_relative_eq!(path_loss_db(&p, p.d0_m).unwrap(), p.pl_d0_db, epsilon = 1e-12);
        assert_relative_eq!(path_loss_db(&p, 10.0 * p.d0_m).unwrap(), p.pl_d0_db + 29.0, epsilon = 1e-12);
        assert!(path_loss_db(&p, 0.0).is_err());
        assert_eq!(p.n_exp, 2.9);
    }

    #[test]
    fn logistic_midpoint_and_saturation() {
        let p = LinkModelParams::default();
        let thr = p.rate_table[3].snr_threshold_db;
        let pl_at = |snr: f64| p.tx_power_dbm - p.noise_floor_dbm - snr;
        assert_relative_eq!(link_success(&p, pl_at(thr), 3).0, 0.5, epsilon = 1e-12);
        assert!(link_success(&p, pl_at(thr + 20.0), 3).0 >= 0.999);
        assert!(link_success(&p, f64::INFINITY, 3).0 == 0.0);
    }

    #[test]
    fn attempt_duration() {
        let p = single_rate(6.0, 5.0, 0.0);
        assert_relative_eq!(link_success(&p, 0.0, 0).1, 2.0e-3, epsilon = 1e-15);
    }

    #[test]
    fn direct_single_rate_equals_phy_rate() {
        let p = single_rate(6.0, -1000.0, 0.0);
        assert_relative_eq!(direct_throughput(&p, 0.0), 6.0, epsilon = 1e-9);
        assert!(direct_throughput(&LinkModelParams::default(), f64::INFINITY) < 1e-9);
    }

    #[test]
    fn direct_monotone_in_path_loss() {
        let p = LinkModelParams::default();
        let mut last = f64::INFINITY;
        for i in 0..400 {
            let v = direct_throughput(&p, 40.0 + 0.25 * i as f64);
            assert!(v <= last + 1e-12);
            last = v;
        }
    }

    #[test]
    fn relay_perfect_hops_give_half_rate() {
        let p = LinkModelParams { secondary: SecondaryRule::SameAsPrimary, ..single_rate(6.0, -1000.0, 0.0) };
        assert_relative_eq!(relay_throughput(&p, 0.0, 0.0), 3.0, epsilon = 1e-9);
        assert!(relay_throughput(&p, f64::INFINITY, 0.0) < 1e-12);
    }

    #[test]
    fn relay_symmetric_and_monotone() {
        let p = LinkModelParams::default();
        for (a, b) in [(60.0, 80.0), (70.0, 95.0), (85.0, 86.0)] {
            assert_relative_eq!(relay_throughput(&p, a, b), relay_throughput(&p, b, a), epsilon = 1e-12);
        }
        let mut last = f64::INFINITY;
        for i in 0..200 {
            let v = relay_throughput(&p, 60.0 + 0.25 * i as f64, 70.0);
            assert!(v <= last + 1e-12);
            last = v;
        }
    }

    #[test]
    fn rate_table_validation() {
        let mut p = LinkModelParams::default();
        assert!(p.validate().is_ok());
        p.rate_table.swap(0, 1);
        assert!(p.validate().is_err());
    }

    #[test]
    fn mobile_relay_tables() {
        let g = GridScenario::new(10, 10, 8.0, Coord::new(4.0, 4.0), Coord::new(16.0, 40.0), Coord::new(64.0, 40.0)).unwrap();
        let p = LinkModelParams::default();
        let t = build_tables(&g, &p, 1).unwrap();
        assert!(t.t_direct.iter().all(|&v| v == t.t_direct[0]));
        let rmax = p.rate_table.last().unwrap().phy_rate_mbps;
        assert!(t.t_relay[0].iter().all(|&v| v <= rmax / 2.0 + 1e-9));
        let best = (0..100).max_by(|&a, &b| t.t_relay[0][a].total_cmp(&t.t_relay[0][b])).unwrap();
        let c = g.coord(best);
        assert!(c.x > 16.0 && c.x < 64.0 && (c.y - 40.0).abs() <= 4.0, "argmax at {c}");
    }
}

//! Throughput metrics of a policy from steady states and throughput tables.

use crate::chain::SteadyState;
use crate::error::{Error, Result};
use crate::info_forwarding::{state_sets, InfoForwardTemplate};
use crate::policy::RelayPolicy;
use crate::radio::ThroughputTableSet;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricReport {
    pub s_ideal: f64,
    pub s_loc: f64,
    pub s_dir: f64,
    pub s_rel: f64,
    pub s_lost: f64,
    pub s_lost_prime: f64,
    pub lost_fraction: f64,
    pub relay_fraction: f64,
}

impl MetricReport {
    /// Assembles a report; `s_ideal_pi` is the policy's throughput under perfect information.
    pub fn new(p_mob: &[f64], tables: &ThroughputTableSet, policy: &RelayPolicy, s_loc: f64, s_ideal_pi: f64) -> Self {
        let ideal = s_ideal(p_mob, tables);
        let lost = s_lost(ideal, s_loc);
        MetricReport {
            s_ideal: ideal,
            s_loc,
            s_dir: s_fixed(p_mob, tables, 0),
            s_rel: s_rel(p_mob, tables),
            s_lost: lost,
            s_lost_prime: s_lost_prime(s_ideal_pi, s_loc),
            lost_fraction: if ideal > 0.0 { lost / ideal } else { 0.0 },
            relay_fraction: policy.relay_fraction(),
        }
    }

    pub const CSV_FIELDS: &'static str = "s_ideal,s_loc,s_dir,s_rel,s_lost,s_lost_prime,lost_fraction,relay_fraction";

    pub fn csv_values(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.s_ideal, self.s_loc, self.s_dir, self.s_rel, self.s_lost, self.s_lost_prime, self.lost_fraction, self.relay_fraction
        )
    }
}

fn check_len(p_mob: &[f64], tables: &ThroughputTableSet) {
    assert_eq!(p_mob.len(), tables.n_points(), "p_mob and throughput tables disagree in size");
}

/// Σ_m p_mob(m) · max_n T_n(m).
pub fn s_ideal(p_mob: &[f64], tables: &ThroughputTableSet) -> f64 {
    check_len(p_mob, tables);
    (0..p_mob.len())
        .map(|m| {
            let best = (0..=tables.relays()).map(|n| tables.t(n, m)).fold(0.0, f64::max);
            p_mob[m] * best
        })
        .sum()
}

/// Throughput of always using `option` (0 = direct).
pub fn s_fixed(p_mob: &[f64], tables: &ThroughputTableSet, option: usize) -> f64 {
    check_len(p_mob, tables);
    p_mob.iter().enumerate().map(|(m, p)| p * tables.t(option, m)).sum()
}

/// Best always-relay throughput over the relay options.
pub fn s_rel(p_mob: &[f64], tables: &ThroughputTableSet) -> f64 {
    (1..=tables.relays()).map(|r| s_fixed(p_mob, tables, r)).fold(0.0, f64::max)
}

/// Σ_m p_mob(m) · T_{π(m)}(m): the policy applied to true positions.
pub fn s_ideal_policy(p_mob: &[f64], tables: &ThroughputTableSet, policy: &RelayPolicy) -> f64 {
    check_len(p_mob, tables);
    p_mob.iter().enumerate().map(|(m, p)| p * tables.t(policy.decisions[m] as usize, m)).sum()
}

/// Σ over grid points of the D-view mass times T_D plus the R-view mass times T_R.
pub fn s_loc(steady: &SteadyState, tables: &ThroughputTableSet, tmpl: &InfoForwardTemplate) -> Result<f64> {
    if tables.relays() != 1 {
        return Err(Error::Unsupported("view-based s_loc needs exactly one relay option".into()));
    }
    let (d, r) = state_sets(tmpl);
    let pd = steady.mass_on(&d);
    let pr = steady.mass_on(&r);
    if pd.len() != tables.n_points() {
        return Err(Error::Dimension { what: "steady state grid points", expected: tables.n_points(), got: pd.len() });
    }
    Ok((0..pd.len()).map(|m| pd[m] * tables.t_direct[m] + pr[m] * tables.t_relay[0][m]).sum())
}

pub fn s_lost(s_ideal: f64, s_loc: f64) -> f64 {
    s_ideal - s_loc
}

pub fn s_lost_prime(s_ideal_pi: f64, s_loc_pi: f64) -> f64 {
    s_ideal_pi - s_loc_pi
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tabs(d: Vec<f64>, r: Vec<f64>) -> ThroughputTableSet {
        ThroughputTableSet::new(d, vec![r]).unwrap()
    }

    #[test]
    fn ideal_hand_value() {
        let t = tabs(vec![1.0, 3.0], vec![2.0, 1.0]);
        assert!((s_ideal(&[0.5, 0.5], &t) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn ideal_reductions() {
        let p = [0.2, 0.3, 0.5];
        let t = tabs(vec![1.0, 2.0, 3.0], vec![0.0; 3]);
        assert_eq!(s_ideal(&p, &t), s_fixed(&p, &t, 0));
        let t = tabs(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]);
        assert_eq!(s_ideal(&p, &t), s_fixed(&p, &t, 0));
        assert_eq!(s_ideal(&p, &t), s_rel(&p, &t));
    }

    #[test]
    fn report_fields() {
        let p = [0.5, 0.5];
        let t = tabs(vec![1.0, 3.0], vec![2.0, 1.0]);
        let pol = RelayPolicy::new(vec![1, 0]);
        let ideal_pi = s_ideal_policy(&p, &t, &pol);
        assert_eq!(ideal_pi, 2.5);
        let r = MetricReport::new(&p, &t, &pol, 2.0, ideal_pi);
        assert_eq!(r.s_lost, 0.5);
        assert_eq!(r.lost_fraction, 0.2);
        assert_eq!(r.relay_fraction, 0.5);
        assert_eq!(r.s_dir, 2.0);
        assert_eq!(r.s_rel, 1.5);
        // The inverse policy under perfect information is worse than its own ideal.
        let inv = pol.inverse().unwrap();
        assert_eq!(s_ideal_policy(&p, &t, &inv), 1.0);
        assert!(s_lost_prime(1.0, 2.0) < 0.0);
    }
}

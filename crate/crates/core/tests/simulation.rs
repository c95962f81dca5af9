mod common;

use common::{max_abs_diff, Small};
use locrelay::metrics::s_ideal_policy;
use locrelay::montecarlo::{estimate_conditional, simulate, SimConfig, UpdateTimer};
use locrelay::{PolicyKind, ScenarioModel};

fn cfg(model: &ScenarioModel, duration_s: f64, interval_s: f64, reps: usize) -> SimConfig {
    SimConfig { duration_s, warmup_s: 50.0, data_tx_interval_s: interval_s, replications: reps, seed: 5, ..SimConfig::from_scenario(model) }
}

#[test]
fn fresh_reports_reach_the_ideal_of_the_policy() {
    let m = ScenarioModel::build(Small { tau: 200.0, mu: 1e5, speed: 1.0, ..Small::default() }.scenario()).unwrap();
    let pol = m.policy(&PolicyKind::Standard).unwrap();
    let sim = simulate(&m, &pol, &cfg(&m, 4000.0, 0.5, 8)).unwrap();
    let ideal = s_ideal_policy(&m.mobility.p_mob, &m.tables, &pol);
    assert!((sim.mean - ideal).abs() / ideal < 0.005, "sim {} ideal {ideal}", sim.mean);
}

#[test]
fn occupancy_follows_mobility_steady_state() {
    let m = ScenarioModel::build(Small { speed: 4.0, ..Small::default() }.scenario()).unwrap();
    let sim = simulate(&m, &m.policy(&PolicyKind::AlwaysDirect).unwrap(), &cfg(&m, 20_000.0, 5.0, 8)).unwrap();
    let occ = sim.occupancy();
    assert!(max_abs_diff(&occ, &m.mobility.p_mob) < 0.01, "{occ:?} vs {:?}", m.mobility.p_mob);
}

#[test]
fn huge_error_makes_rows_match_occupancy() {
    let m = ScenarioModel::build(Small { sigma: 1e4, tau: 5.0, ..Small::default() }.scenario()).unwrap();
    let est = estimate_conditional(&m, &cfg(&m, 20_000.0, 0.5, 8), 5_000).unwrap();
    for i in (0..9).filter(|&i| !est.undersampled[i]) {
        let row = est.matrix.row(i).unwrap();
        let tv: f64 = row.iter().zip(&m.mobility.p_mob).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
        assert!(tv < 0.03, "row {i} tv {tv}");
    }
}

#[test]
fn periodic_updates_keep_queue_within_capacity() {
    let m = ScenarioModel::build(Small { tau: 3.0, mu: 2.0, queue: 1, ..Small::default() }.scenario()).unwrap();
    let c = SimConfig { update_timer: UpdateTimer::Periodic, ..cfg(&m, 2000.0, 1.0, 2) };
    let sim = simulate(&m, &m.policy(&PolicyKind::Standard).unwrap(), &c).unwrap();
    assert!(sim.replications.iter().all(|r| r.max_queue <= 1));
    assert!(sim.dropped() > 0);
}

#[test]
fn seeds_reproduce_results() {
    let m = ScenarioModel::build(Small { sigma: 4.0, ..Small::default() }.scenario()).unwrap();
    let pol = m.policy(&PolicyKind::Standard).unwrap();
    let a = simulate(&m, &pol, &cfg(&m, 1000.0, 1.0, 4)).unwrap();
    let b = simulate(&m, &pol, &cfg(&m, 1000.0, 1.0, 4)).unwrap();
    assert_eq!(a.mean, b.mean);
    assert_eq!(a.joint, b.joint);
}

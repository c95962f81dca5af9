mod common;

use approx::assert_abs_diff_eq;
use common::{dense_stationary, max_abs_diff, Small};
use locrelay::chain::{assemble, solve_steady_state};
use locrelay::ctmc::{stationary, Generator};
use locrelay::info_forwarding::{build_template, state_sets};
use locrelay::mobility::{build_open_grid, build_walled_grid};
use locrelay::scenario::{BlockedEdge, Coord, GridScenario, StateIndex};
use locrelay::{PolicyKind, ScenarioModel};
use proptest::prelude::*;

fn grid(nx: usize, ny: usize) -> GridScenario {
    let far = 5.0 + 10.0 * (nx - 1) as f64;
    GridScenario::new(nx, ny, 10.0, Coord::new(5.0, 5.0), Coord::new(5.0, 5.0), Coord::new(far, 5.0)).unwrap()
}

#[test]
fn two_point_chain_matches_dense_null_space() {
    let mob = build_open_grid(&grid(2, 1), 3.0).unwrap();
    let tmpl = build_template(1, 0.7, 4.0, 0.0).unwrap();
    assert_eq!(tmpl.len(), 6);
    let chain = assemble(&mob, &tmpl, &[0.25, 0.9], &[0.75, 0.1]).unwrap();
    assert_eq!(chain.n_states(), 12);
    let ss = solve_steady_state(&chain).unwrap();
    let oracle = dense_stationary(&chain.q);
    assert!(max_abs_diff(&ss.p, &oracle) < 1e-12, "{:?} vs {:?}", ss.p, oracle);
    assert!(ss.residual < 1e-14);
}

#[test]
fn lossy_walled_chain_matches_dense_null_space() {
    let mut g = grid(3, 3);
    g.walls = vec![BlockedEdge::new(StateIndex(1), StateIndex(2)), BlockedEdge::new(StateIndex(5), StateIndex(8))];
    let mob = build_walled_grid(&g, 1.5).unwrap();
    let tmpl = build_template(2, 0.4, 6.0, 0.2).unwrap();
    let w_r: Vec<f64> = (0..9).map(|m| (m as f64 * 0.37).fract()).collect();
    let w_d: Vec<f64> = w_r.iter().map(|w| 1.0 - w).collect();
    let chain = assemble(&mob, &tmpl, &w_r, &w_d).unwrap();
    let ss = solve_steady_state(&chain).unwrap();
    assert!(max_abs_diff(&ss.p, &dense_stationary(&chain.q)) < 1e-11);
}

#[test]
fn stationary_is_invariant_to_time_scaling() {
    let base = Small { speed: 1.3, tau: 0.6, mu: 9.0, ..Small::default() };
    let scaled = Small { speed: 13.0, tau: 6.0, mu: 90.0, ..base.clone() };
    let a = ScenarioModel::build(base.scenario()).unwrap();
    let b = ScenarioModel::build(scaled.scenario()).unwrap();
    let pol = a.policy(&PolicyKind::Standard).unwrap();
    let (_, sa) = a.s_loc_chain(&pol).unwrap();
    let (_, sb) = b.s_loc_chain(&pol).unwrap();
    assert!(max_abs_diff(&sa.p, &sb.p) < 1e-12);
}

#[test]
fn marginals_match_mobility_and_forwarding_alone() {
    let mob = build_open_grid(&grid(4, 3), 2.0).unwrap();
    let tmpl = build_template(2, 0.8, 3.0, 0.1).unwrap();
    let (w_r, w_d) = (0.3, 0.7);
    let chain = assemble(&mob, &tmpl, &[w_r; 12], &[w_d; 12]).unwrap();
    let ss = solve_steady_state(&chain).unwrap();
    assert!(max_abs_diff(&ss.grid_marginal(), &mob.p_mob) < 1e-12);

    // Constant weights decouple the forwarding states from the position.
    let alone = Generator::from_offdiagonal_rows(tmpl.instantiate(w_d, w_r)).unwrap();
    let p_info = stationary(&alone).unwrap();
    let mut info = vec![0.0; tmpl.len()];
    for (k, v) in ss.p.iter().enumerate() {
        info[k % tmpl.len()] += v;
    }
    assert!(max_abs_diff(&info, &p_info) < 1e-12);

    let (_, r) = state_sets(&tmpl);
    let r_mass: f64 = r.iter().map(|&s| p_info[s]).sum();
    assert_abs_diff_eq!(r_mass, w_r, epsilon = 1e-12);
}

#[test]
fn fixed_policies_reduce_to_fixed_throughput() {
    for sigma in [0.0, 6.0] {
        let m = ScenarioModel::build(Small { sigma, ..Small::default() }.scenario()).unwrap();
        let d = m.evaluate(&PolicyKind::AlwaysDirect).unwrap().report;
        let r = m.evaluate(&PolicyKind::AlwaysRelay).unwrap().report;
        assert_abs_diff_eq!(d.s_loc, d.s_dir, epsilon = 1e-12);
        assert_abs_diff_eq!(r.s_loc, r.s_rel, epsilon = 1e-12);
    }
}

#[test]
fn perfect_information_limit_approaches_ideal() {
    let m = ScenarioModel::build(Small { tau: 1e4, mu: 1e7, ..Small::default() }.scenario()).unwrap();
    let r = m.evaluate(&PolicyKind::Standard).unwrap().report;
    assert!(r.lost_fraction < 1e-3, "lost fraction {}", r.lost_fraction);
}

fn arb_generator() -> impl Strategy<Value = Vec<Vec<(usize, f64)>>> {
    (2usize..7).prop_flat_map(|n| {
        prop::collection::vec(prop::collection::vec(0.01f64..5.0, n), n).prop_map(move |rates| {
            rates.into_iter().enumerate().map(|(i, row)| row.into_iter().enumerate().filter(|&(j, _)| j != i).collect()).collect()
        })
    })
}

proptest! {
    #[test]
    fn banded_solver_agrees_with_svd(rows in arb_generator()) {
        let q = Generator::from_offdiagonal_rows(rows).unwrap();
        let p = stationary(&q).unwrap();
        prop_assert!(max_abs_diff(&p, &dense_stationary(&q)) < 1e-10);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each, and
//! exits non-zero if any failed or ran over its time budget.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{shipped, Small};
use locrelay::analysis::{
    benefit_sigma_limit, parse_values, required_tau, required_tau_for_benefit, run_sweep, SearchOptions, SweepParam, SweepSpec, TauSearch,
};
use locrelay::info_forwarding::state_count;
use locrelay::montecarlo::{estimate_conditional, simulate, SimConfig};
use locrelay::policy::{optimize_mobile_destination, RelayPolicy};
use locrelay::radio::ThroughputTableSet;
use locrelay::scenario::{Coord, Scenario};
use locrelay::{load_scenario, MetricReport, PolicyKind, ScenarioModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenario_a() -> Scenario {
    load_scenario(shipped("scenario_a.scn")).expect("scenario A loads")
}

fn model(s: Scenario) -> Result<ScenarioModel, String> {
    ScenarioModel::build(s).map_err(|e| e.to_string())
}

fn report(m: &ScenarioModel, kind: PolicyKind) -> Result<MetricReport, String> {
    m.evaluate(&kind).map(|e| e.report).map_err(|e| e.to_string())
}

fn state_counts() -> Outcome {
    let counts: Vec<usize> = (1..=3).map(state_count).collect();
    ensure(counts == [6, 14, 30], || format!("template sizes {counts:?}"))?;
    let m = model(scenario_a())?;
    ensure(m.n_states() == 1400, || format!("full chain has {} states", m.n_states()))?;
    Ok("6/14/30 template states, 1400 full-chain states".into())
}

fn steady_state_correctness() -> Outcome {
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    let mut slowest = Duration::ZERO;
    for name in ["scenario_a.scn", "scenario_b.scn", "indoor_147.scn"] {
        let t0 = Instant::now();
        let m = model(load_scenario(shipped(name)).map_err(|e| e.to_string())?)?;
        let pol = m.policy(&PolicyKind::Standard).map_err(|e| e.to_string())?;
        let (_, ss) = m.s_loc_chain(&pol).map_err(|e| e.to_string())?;
        slowest = slowest.max(t0.elapsed());
        let sum_err = (ss.p.iter().sum::<f64>() - 1.0).abs();
        let marg = common::max_abs_diff(&ss.grid_marginal(), &m.mobility.p_mob);
        ensure(ss.residual <= 1e-10, || format!("{name}: residual {:e}", ss.residual))?;
        ensure(sum_err <= 1e-12, || format!("{name}: |sum p - 1| = {sum_err:e}"))?;
        ensure(marg <= 1e-10, || format!("{name}: marginal error {marg:e}"))?;
        ensure(t0.elapsed() <= Duration::from_secs(10), || format!("{name}: took {:?}", t0.elapsed()))?;
        worst = (worst.0.max(ss.residual), worst.1.max(sum_err), worst.2.max(marg));
    }
    Ok(format!(
        "3 scenarios, max residual {:.1e}, max |sum-1| {:.1e}, max marginal err {:.1e}, slowest {:.2?}",
        worst.0, worst.1, worst.2, slowest
    ))
}

fn special_policy_identities() -> Outcome {
    let base = scenario_a();
    let mut worst = 0.0f64;
    let mut cases = 0;
    for tau in [0.05, 0.2, 1.0] {
        for sigma in [0.0, 5.0, 15.0] {
            for speed in [0.5, 1.0, 5.0] {
                let mut s = base.clone();
                s.updates.tau_hz = tau;
                s.location_error.sigma_m = sigma;
                s.mobility.speed_mps = speed;
                let m = model(s)?;
                let d = report(&m, PolicyKind::AlwaysDirect)?;
                let r = report(&m, PolicyKind::AlwaysRelay)?;
                let err = (d.s_loc - d.s_dir).abs().max((r.s_loc - r.s_rel).abs());
                ensure(err <= 1e-10, || format!("tau={tau} sigma={sigma} v={speed}: error {err:e}"))?;
                worst = worst.max(err);
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} settings, max deviation {worst:.1e}"))
}

fn exact_optimality_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for trial in 0..5 {
        let small = Small {
            role: "mobile_destination",
            speed: rng.random_range(0.5..8.0),
            tau: rng.random_range(0.05..3.0),
            mu: rng.random_range(2.0..50.0),
            sigma: rng.random_range(0.0..12.0),
            ..Small::default()
        };
        let t_d: Vec<f64> = (0..9).map(|_| rng.random_range(0.2..4.0)).collect();
        let t_r: Vec<f64> = (0..9).map(|_| rng.random_range(0.2..4.0)).collect();
        let tables = ThroughputTableSet::new(t_d, vec![t_r]).map_err(|e| e.to_string())?;
        let m = ScenarioModel::with_tables(small.scenario(), tables).map_err(|e| e.to_string())?;
        let c = m.conditional().map_err(|e| e.to_string())?;
        let opt = optimize_mobile_destination(c, &m.tables).map_err(|e| e.to_string())?;
        let s_opt = m.s_loc_chain(&opt).map_err(|e| e.to_string())?.0;
        let mut best = f64::NEG_INFINITY;
        for bits in 0u32..512 {
            let p = RelayPolicy::new((0..9).map(|k| ((bits >> k) & 1) as u16).collect());
            best = best.max(m.s_loc_chain(&p).map_err(|e| e.to_string())?.0);
        }
        let gap = best - s_opt;
        ensure(gap.abs() <= 1e-9, || format!("trial {trial} ({small:?}): enumeration {best} vs optimiser {s_opt}"))?;
        worst = worst.max(gap.abs());
    }
    Ok(format!("5 random 3x3 scenarios x 512 policies, max gap {worst:.1e}"))
}

fn conditional_probability_oracle() -> Outcome {
    let small = Small { queue: 1, tau: 1.0, mu: 20.0, speed: 2.0, sigma: 4.0, ..Small::default() };
    let m = model(small.scenario())?;
    let analytic = m.conditional().map_err(|e| e.to_string())?;
    let reps = 20;
    let interval = 0.5;
    let warmup = 100.0;
    let per_rep = 1_000_000 / reps;
    let cfg = SimConfig {
        duration_s: warmup + interval * per_rep as f64,
        warmup_s: warmup,
        data_tx_interval_s: interval,
        replications: reps,
        seed: 99,
        ..SimConfig::from_scenario(&m)
    };
    let est = estimate_conditional(&m, &cfg, 1_000).map_err(|e| e.to_string())?;
    let samples: u64 = est.row_counts.iter().sum();
    ensure(samples >= 1_000_000, || format!("only {samples} samples"))?;
    let rows: Vec<usize> = (0..9).filter(|&i| !est.undersampled[i]).collect();
    ensure(rows.len() == 9, || format!("undersampled rows: {:?}", est.undersampled))?;
    let tv = analytic.max_row_tv(&est.matrix, rows.into_iter());
    ensure(tv <= 0.02, || format!("max row TV {tv}"))?;
    Ok(format!("{samples} samples, max row TV {tv:.4}"))
}

fn model_vs_simulation() -> Outcome {
    let mut details = Vec::new();
    for sigma in [0.0, 5.0, 10.0] {
        let mut s = scenario_a();
        s.grid.nx = 5;
        s.grid.ny = 5;
        s.grid.spacing_m = 16.0;
        s.grid.origin = Coord::new(8.0, 8.0);
        s.location_error.sigma_m = sigma;
        let m = model(s)?;
        let e = m.evaluate(&PolicyKind::Standard).map_err(|e| e.to_string())?;
        let cfg = SimConfig { replications: 40, ..SimConfig::from_scenario(&m) };
        let sim = simulate(&m, &e.policy, &cfg).map_err(|e| e.to_string())?;
        let model_v = e.report.s_loc;
        let rel = (sim.mean - model_v).abs() / model_v;
        ensure(rel <= 0.02, || format!("sigma={sigma}: sim {} vs model {model_v} ({:.2}%)", sim.mean, 100.0 * rel))?;
        ensure((sim.mean - model_v).abs() <= sim.half_width, || {
            format!("sigma={sigma}: CI {} +- {} misses model {model_v}", sim.mean, sim.half_width)
        })?;
        details.push(format!("sigma={sigma}: {:.4}+-{:.4} vs {:.4}", sim.mean, sim.half_width, model_v));
    }
    Ok(details.join("; "))
}

fn sigma_sweep_rows(base: &Scenario, policies: Vec<PolicyKind>) -> Result<Vec<(f64, PolicyKind, MetricReport)>, String> {
    let spec = SweepSpec { param: SweepParam::SigmaM, values: parse_values("0:2.5:20").map_err(|e| e.to_string())?, policies };
    run_sweep(base, None, &spec)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|r| r.outcome.map(|(_, rep)| (r.value, r.policy, rep)))
        .collect()
}

fn lost_fraction_sweep() -> Outcome {
    let rows = sigma_sweep_rows(&scenario_a(), vec![PolicyKind::Standard, PolicyKind::Optimized])?;
    let mut last = (0.0, 0.0);
    for pair in rows.chunks(2) {
        let (sigma, std_lf, opt_lf) = (pair[0].0, pair[0].2.lost_fraction, pair[1].2.lost_fraction);
        ensure(opt_lf <= std_lf + 1e-12, || format!("sigma={sigma}: optimized {opt_lf} > standard {std_lf}"))?;
        last = (std_lf, opt_lf);
    }
    let improvement = (last.0 - last.1) / last.0;
    ensure(improvement >= 0.10, || {
        format!("at sigma=20 lost fraction {:.4} -> {:.4}, only {:.1}% better", last.0, last.1, 100.0 * improvement)
    })?;
    Ok(format!("opt <= std at all 9 sigmas; at sigma=20 lost fraction {:.3} -> {:.3} ({:.0}% better)", last.0, last.1, 100.0 * improvement))
}

fn converges_to_all_direct() -> Outcome {
    let mut notes = Vec::new();
    let mut reached = false;
    for tau in [1.0 / 5.0, 1.0 / 25.0] {
        let mut s = scenario_a();
        s.mobility.speed_mps = 5.0;
        s.updates.tau_hz = tau;
        let rows = sigma_sweep_rows(&s, vec![PolicyKind::Optimized])?;
        match rows.iter().find(|r| r.2.relay_fraction == 0.0) {
            Some(r) => {
                reached = true;
                notes.push(format!("tau={tau}: all-direct from sigma={}", r.0));
            }
            None => notes.push(format!("tau={tau}: never all-direct")),
        }
    }
    ensure(reached, || notes.join("; "))?;
    Ok(notes.join("; "))
}

fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

fn tau_shape_checks() -> Outcome {
    let base = scenario_a();
    let opts = SearchOptions::default();
    let speeds = [1.0, 2.0, 3.0, 4.0, 5.0];
    let mut taus = Vec::new();
    for v in speeds {
        match required_tau(&base, None, 0.05, v, &opts).map_err(|e| e.to_string())? {
            TauSearch::Found(t) => taus.push(t),
            TauSearch::Unreachable => return Err(format!("target unreachable at v={v}")),
        }
    }
    ensure(taus.windows(2).all(|w| w[1] >= w[0]), || format!("required tau not monotone: {taus:?}"))?;
    let r2 = r_squared(&speeds, &taus);
    ensure(r2 >= 0.95, || format!("R^2 {r2} for {taus:?}"))?;

    let limit = |kind: PolicyKind| -> Result<f64, String> {
        benefit_sigma_limit(&base, None, 1.05, &kind, opts.tau_max, 40.0, 0.1)
            .map_err(|e| e.to_string())?
            .ok_or_else(|| format!("{} never reaches the benefit", kind.name()))
    };
    let s_std = limit(PolicyKind::Standard)?;
    let s_opt = limit(PolicyKind::Optimized)?;
    ensure(s_std < 40.0, || "standard policy reaches the benefit at every sigma".into())?;
    let beyond = (s_std + 1.0).min(40.0);
    let r = required_tau_for_benefit(&base, None, 1.05, beyond, &PolicyKind::Standard, &opts).map_err(|e| e.to_string())?;
    ensure(r == TauSearch::Unreachable, || format!("standard reaches benefit at sigma={beyond}: {r}"))?;
    ensure(s_opt >= s_std, || format!("sigma* optimized {s_opt} < standard {s_std}"))?;
    Ok(format!(
        "required tau {:?} (R^2 {r2:.4}); sigma* std {s_std:.2} m, opt {s_opt:.2} m",
        taus.iter().map(|t| (t * 1e4).round() / 1e4).collect::<Vec<_>>()
    ))
}

fn indoor_case_study() -> Outcome {
    let m = model(load_scenario(shipped("indoor_147.scn")).map_err(|e| e.to_string())?)?;
    let d = report(&m, PolicyKind::AlwaysDirect)?.s_loc;
    let r = report(&m, PolicyKind::AlwaysRelay)?.s_loc;
    let s = report(&m, PolicyKind::Standard)?.s_loc;
    let h = report(&m, PolicyKind::Heuristic)?.s_loc;
    let o = report(&m, PolicyKind::Optimized)?.s_loc;
    ensure(o >= 1.1 * d.max(r), || format!("optimized {o} vs direct {d}, relay {r}"))?;
    ensure(o > s, || format!("optimized {o} not above standard {s}"))?;
    Ok(format!(
        "s_loc direct {d:.3}, relay {r:.3}, heuristic {h:.3}, standard {s:.3}, optimized {o:.3} ({:.0}% over best fixed)",
        100.0 * (o / d.max(r) - 1.0)
    ))
}

type Criterion = (&'static str, fn() -> Outcome, u64);

fn main() {
    let criteria: [Criterion; 10] = [
        ("state-count law", state_counts, 1),
        ("steady-state correctness", steady_state_correctness, 30),
        ("special-policy identities", special_policy_identities, 600),
        ("exact optimality oracle", exact_optimality_oracle, 300),
        ("conditional-probability oracle", conditional_probability_oracle, 120),
        ("model vs simulation", model_vs_simulation, 600),
        ("lost fraction over sigma", lost_fraction_sweep, 1800),
        ("convergence to all-direct", converges_to_all_direct, 1800),
        ("required-tau shape", tau_shape_checks, 1800),
        ("indoor case study", indoor_case_study, 600),
    ];
    let mut failed = 0;
    for (k, (name, run, budget_s)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let took = t0.elapsed();
        let outcome = match outcome {
            Ok(_) if took > Duration::from_secs(*budget_s) => Err(format!("over time budget of {budget_s} s")),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name} [{took:.2?}]: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name} [{took:.2?}]: {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

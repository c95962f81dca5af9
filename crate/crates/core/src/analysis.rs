//! Parameter sweeps, inverse searches over the update rate, and policy diffs.

use std::fmt::Write as _;

use log::{debug, warn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::model::{PolicyKind, ScenarioModel};
use crate::policy::{PolicyRegistry, RelayPolicy};
use crate::radio::ThroughputTableSet;
use crate::scenario::{Coord, GridScenario, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    SigmaM,
    SpeedMps,
    TauHz,
}

impl SweepParam {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sigma" | "sigma_m" => Some(SweepParam::SigmaM),
            "speed" | "speed_mps" => Some(SweepParam::SpeedMps),
            "tau" | "tau_hz" => Some(SweepParam::TauHz),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::SigmaM => "sigma_m",
            SweepParam::SpeedMps => "speed_mps",
            SweepParam::TauHz => "tau_hz",
        }
    }

    pub fn apply(self, scn: &Scenario, value: f64) -> Result<Scenario> {
        let mut s = scn.clone();
        match self {
            SweepParam::SigmaM => s.location_error.sigma_m = value,
            SweepParam::SpeedMps => s.mobility.speed_mps = value,
            SweepParam::TauHz => s.updates.tau_hz = value,
        }
        s.validate()?;
        Ok(s)
    }
}

/// Parses `start:step:stop` (inclusive) or a comma-separated list.
pub fn parse_values(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::domain(format!("cannot parse value list {spec:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    let vals = if parts.len() == 3 {
        let nums: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        let (a, step, b) = (nums[0], nums[1], nums[2]);
        if !(step > 0.0 && b >= a && a.is_finite() && b.is_finite()) {
            return Err(bad());
        }
        let count = ((b - a) / step + 1e-9).floor() as usize + 1;
        if count > 100_000 {
            return Err(bad());
        }
        (0..count).map(|k| a + step * k as f64).collect()
    } else if parts.len() == 1 {
        spec.split(',').map(|p| p.trim().parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>().map_err(|_| bad())?
    } else {
        return Err(bad());
    };
    if vals.is_empty() || vals.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok(vals)
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub policies: Vec<PolicyKind>,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub policy: PolicyKind,
    /// Policy and metrics, or the error message of a failed cell.
    pub outcome: std::result::Result<(RelayPolicy, MetricReport), String>,
    pub policy_id: Option<usize>,
}

/// Builds a model for a scenario variant, reusing fixed tables when given.
pub fn build_model(scn: Scenario, tables: Option<&ThroughputTableSet>) -> Result<ScenarioModel> {
    match tables {
        Some(t) => ScenarioModel::with_tables(scn, t.clone()),
        None => ScenarioModel::build(scn),
    }
}

/// Evaluates every (value, policy) cell; rows come out ordered by value, then policy.
pub fn run_sweep(base: &Scenario, tables: Option<&ThroughputTableSet>, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.values.is_empty() || spec.policies.is_empty() {
        return Err(Error::domain("sweep needs at least one value and one policy"));
    }
    for &v in &spec.values {
        spec.param.apply(base, v)?;
    }
    let per_value: Vec<Vec<SweepRow>> = spec
        .values
        .par_iter()
        .map(|&value| {
            let model = spec.param.apply(base, value).and_then(|s| build_model(s, tables));
            spec.policies
                .iter()
                .map(|kind| {
                    let outcome = model
                        .as_ref()
                        .map_err(|e| e.to_string())
                        .and_then(|m| m.evaluate(kind).map(|e| (e.policy, e.report)).map_err(|e| e.to_string()));
                    if let Err(e) = &outcome {
                        warn!("sweep cell {}={} policy {} failed: {e}", spec.param.name(), value, kind.name());
                    }
                    SweepRow { param: spec.param, value, policy: kind.clone(), outcome, policy_id: None }
                })
                .collect()
        })
        .collect();
    let mut rows: Vec<SweepRow> = per_value.into_iter().flatten().collect();
    let n = base.grid.n_points();
    let mut reg = PolicyRegistry::with_all_direct(n);
    for r in &mut rows {
        if let Ok((p, _)) = &r.outcome {
            r.policy_id = Some(reg.id(p));
        }
    }
    Ok(rows)
}

pub const SWEEP_HEADER: &str =
    "param_name,param_value,policy,policy_id,s_ideal,s_loc,s_dir,s_rel,s_lost,s_lost_prime,lost_fraction,relay_fraction";

/// Sweep CSV; failed cells keep their key columns and leave the rest empty.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = write!(s, "{},{},{},", r.param.name(), r.value, r.policy.name());
        match (&r.outcome, r.policy_id) {
            (Ok((_, rep)), Some(id)) => {
                let _ = writeln!(s, "{id},{}", rep.csv_values());
            }
            _ => s.push_str(",,,,,,,,\n"),
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauSearch {
    Found(f64),
    Unreachable,
}

impl std::fmt::Display for TauSearch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TauSearch::Found(t) => write!(f, "{t}"),
            TauSearch::Unreachable => f.write_str("unreachable"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub tau_min: f64,
    pub tau_max: f64,
    /// Relative width at which bisection stops.
    pub rel_tol: f64,
    /// Points of the log-spaced pre-sweep.
    pub grid_points: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { tau_min: 1e-3, tau_max: 1e3, rel_tol: 0.01, grid_points: 13 }
    }
}

/// Smallest τ in the range where `ok(τ)` holds, assuming `ok` flips once from
/// false to true as τ grows. `score` must be non-decreasing in τ; the pre-sweep
/// checks that and reports a violation.
fn search_tau(opts: &SearchOptions, score: impl Fn(f64) -> Result<f64>, ok: impl Fn(f64) -> bool) -> Result<TauSearch> {
    if !(opts.tau_min > 0.0 && opts.tau_max > opts.tau_min && opts.rel_tol > 0.0 && opts.grid_points >= 2) {
        return Err(Error::domain("invalid tau search range"));
    }
    let (lmin, lmax) = (opts.tau_min.ln(), opts.tau_max.ln());
    let taus: Vec<f64> = (0..opts.grid_points).map(|k| (lmin + (lmax - lmin) * k as f64 / (opts.grid_points - 1) as f64).exp()).collect();
    let scores = taus.iter().map(|&t| score(t)).collect::<Result<Vec<f64>>>()?;
    debug!("tau pre-sweep: {:?}", taus.iter().zip(&scores).collect::<Vec<_>>());
    for k in 1..scores.len() {
        let tol = 1e-9 * scores[k - 1].abs().max(1.0);
        if scores[k] < scores[k - 1] - tol {
            return Err(Error::NonMonotone(format!(
                "objective drops from {} at tau={} to {} at tau={}",
                scores[k - 1],
                taus[k - 1],
                scores[k],
                taus[k]
            )));
        }
    }
    let Some(first) = scores.iter().position(|&s| ok(s)) else {
        return Ok(TauSearch::Unreachable);
    };
    if first == 0 {
        return Ok(TauSearch::Found(opts.tau_min));
    }
    let (mut lo, mut hi) = (taus[first - 1], taus[first]);
    while hi / lo > 1.0 + opts.rel_tol {
        let mid = (lo * hi).sqrt();
        if ok(score(mid)?) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(TauSearch::Found(hi))
}

/// Smallest τ with lost fraction of the standard policy ≤ `target`, at σ = 0.
pub fn required_tau(
    base: &Scenario,
    tables: Option<&ThroughputTableSet>,
    target: f64,
    speed_mps: f64,
    opts: &SearchOptions,
) -> Result<TauSearch> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::domain(format!("target lost fraction must lie in (0, 1], got {target}")));
    }
    let mut scn = SweepParam::SpeedMps.apply(base, speed_mps)?;
    scn.location_error.sigma_m = 0.0;
    let tables = match tables {
        Some(t) => t.clone(),
        None => ScenarioModel::build(scn.clone())?.tables,
    };
    // Score is the negated lost fraction so that it grows with τ.
    let score = |tau: f64| -> Result<f64> {
        let m = ScenarioModel::with_tables(SweepParam::TauHz.apply(&scn, tau)?, tables.clone())?;
        Ok(-m.evaluate(&PolicyKind::Standard)?.report.lost_fraction)
    };
    search_tau(opts, score, |s| -s <= target)
}

/// Benefit ratio S_loc / max(S_dir, S_rel) of a policy kind.
pub fn benefit_ratio(model: &ScenarioModel, kind: &PolicyKind) -> Result<f64> {
    let r = model.evaluate(kind)?.report;
    let best_fixed = r.s_dir.max(r.s_rel);
    if best_fixed <= 0.0 {
        return Err(Error::Numeric("both fixed policies have zero throughput".into()));
    }
    Ok(r.s_loc / best_fixed)
}

/// Smallest τ with benefit ratio above `gamma_benefit` at the given σ.
pub fn required_tau_for_benefit(
    base: &Scenario,
    tables: Option<&ThroughputTableSet>,
    gamma_benefit: f64,
    sigma_m: f64,
    kind: &PolicyKind,
    opts: &SearchOptions,
) -> Result<TauSearch> {
    if !(gamma_benefit > 1.0) {
        return Err(Error::domain(format!("benefit threshold must exceed 1, got {gamma_benefit}")));
    }
    let scn = SweepParam::SigmaM.apply(base, sigma_m)?;
    let tables = match tables {
        Some(t) => t.clone(),
        None => ScenarioModel::build(scn.clone())?.tables,
    };
    let score = |tau: f64| -> Result<f64> {
        let m = ScenarioModel::with_tables(SweepParam::TauHz.apply(&scn, tau)?, tables.clone())?;
        benefit_ratio(&m, kind)
    };
    search_tau(opts, score, |s| s > gamma_benefit)
}

/// Largest σ in `[0, sigma_hi]` at which the benefit is still reachable with τ = `tau_max`,
/// to within `sigma_tol`. `None` when not even σ = 0 reaches it.
pub fn benefit_sigma_limit(
    base: &Scenario,
    tables: Option<&ThroughputTableSet>,
    gamma_benefit: f64,
    kind: &PolicyKind,
    tau_max: f64,
    sigma_hi: f64,
    sigma_tol: f64,
) -> Result<Option<f64>> {
    let tables = match tables {
        Some(t) => t.clone(),
        None => ScenarioModel::build(base.clone())?.tables,
    };
    let at_tau = SweepParam::TauHz.apply(base, tau_max)?;
    let reachable = |sigma: f64| -> Result<bool> {
        let m = ScenarioModel::with_tables(SweepParam::SigmaM.apply(&at_tau, sigma)?, tables.clone())?;
        Ok(benefit_ratio(&m, kind)? > gamma_benefit)
    };
    if !reachable(0.0)? {
        return Ok(None);
    }
    if reachable(sigma_hi)? {
        return Ok(Some(sigma_hi));
    }
    let (mut lo, mut hi) = (0.0, sigma_hi);
    while hi - lo > sigma_tol {
        let mid = 0.5 * (lo + hi);
        if reachable(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Change {
    Added,
    Removed,
    Reassigned,
}

impl Change {
    pub fn as_str(self) -> &'static str {
        match self {
            Change::Added => "added",
            Change::Removed => "removed",
            Change::Reassigned => "reassigned",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffEntry {
    /// 0-based grid point.
    pub m: usize,
    pub coord: Coord,
    pub change: Change,
}

/// Relay points gained, lost, or moved to another relay going from `a` to `b`.
pub fn policy_diff(grid: &GridScenario, a: &RelayPolicy, b: &RelayPolicy) -> Result<Vec<DiffEntry>> {
    for p in [a, b] {
        if p.len() != grid.n_points() {
            return Err(Error::Dimension { what: "policy length", expected: grid.n_points(), got: p.len() });
        }
    }
    Ok((0..grid.n_points())
        .filter_map(|m| {
            let change = match (a.decisions[m], b.decisions[m]) {
                (x, y) if x == y => return None,
                (0, _) => Change::Added,
                (_, 0) => Change::Removed,
                _ => Change::Reassigned,
            };
            Some(DiffEntry { m, coord: grid.coord(m), change })
        })
        .collect())
}

pub fn diff_csv(entries: &[DiffEntry]) -> String {
    let mut s = String::from("m,x,y,change\n");
    for e in entries {
        let _ = writeln!(s, "{},{},{},{}", e.m + 1, e.coord.x, e.coord.y, e.change.as_str());
    }
    s
}

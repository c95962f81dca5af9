//! Discrete-event simulation of the real system, used to cross-check the chain.
//!
//! The mobile node jumps between grid points, generates position reports,
//! queues them for the AP, and the AP picks a transmission mode from the last
//! delivered report at every data-transmission epoch. Throughput samples are
//! `T_{π(belief)}(true position)` at those epochs.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::model::ScenarioModel;
use crate::policy::{ConditionalMatrix, RelayPolicy};
use crate::scenario::Coord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateTimer {
    /// Poisson update stream with rate τ, as in the chain.
    #[default]
    Exponential,
    /// One update every 1/τ seconds with a random phase.
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportMode {
    /// Draw the reported grid point from the error-matrix row of the true point.
    #[default]
    ErrorMatrix,
    /// Add continuous Gaussian noise to the true coordinate and snap to the grid.
    ContinuousSnap,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub duration_s: f64,
    pub warmup_s: f64,
    pub seed: u64,
    pub data_tx_interval_s: f64,
    pub replications: usize,
    pub update_timer: UpdateTimer,
    pub report_mode: ReportMode,
    /// Record the event trace of the first replication.
    pub trace: bool,
}

impl SimConfig {
    pub fn from_scenario(model: &ScenarioModel) -> Self {
        let s = &model.scenario.simulation;
        SimConfig {
            duration_s: s.duration_s,
            warmup_s: s.warmup_s,
            seed: s.seed,
            data_tx_interval_s: s.data_tx_interval_s,
            replications: s.replications,
            update_timer: UpdateTimer::Exponential,
            report_mode: ReportMode::ErrorMatrix,
            trace: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.warmup_s >= 0.0 && self.duration_s > self.warmup_s && self.duration_s.is_finite()) {
            return Err(Error::domain("simulation needs duration > warmup >= 0"));
        }
        if !(self.data_tx_interval_s > 0.0) {
            return Err(Error::domain("data transmission interval must be > 0"));
        }
        if self.replications < 1 {
            return Err(Error::domain("at least one replication is required"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Move,
    Generate,
    Drop,
    Deliver,
    Lose,
    Decide,
}

impl EventKind {
    fn as_str(self) -> &'static str {
        match self {
            EventKind::Move => "move",
            EventKind::Generate => "generate",
            EventKind::Drop => "drop",
            EventKind::Deliver => "deliver",
            EventKind::Lose => "lose",
            EventKind::Decide => "decide",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub t_s: f64,
    pub event: EventKind,
    /// 0-based true grid point.
    pub state_m: usize,
    /// 0-based believed grid point.
    pub ap_view_m: usize,
    pub queue_len: usize,
}

pub fn trace_csv(events: &[TraceEvent]) -> String {
    let mut s = String::from("t_s,event,state_m,ap_view_m,queue_len\n");
    for e in events {
        let _ = writeln!(s, "{},{},{},{},{}", e.t_s, e.event.as_str(), e.state_m + 1, e.ap_view_m + 1, e.queue_len);
    }
    s
}

#[derive(Debug, Clone)]
pub struct ReplicationStats {
    pub mean_throughput: f64,
    pub samples: u64,
    /// `joint[i*n + j]` counts samples with belief x_i and truth x_j.
    pub joint: Vec<u64>,
    /// Time spent at each grid point after warm-up.
    pub occupancy_s: Vec<f64>,
    pub generated: u64,
    pub dropped: u64,
    pub lost: u64,
    pub max_queue: usize,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub mean: f64,
    /// Half-width of the 95% confidence interval across replications.
    pub half_width: f64,
    pub replications: Vec<ReplicationStats>,
    /// Pooled `joint` over replications.
    pub joint: Vec<u64>,
    pub n_points: usize,
    pub trace: Vec<TraceEvent>,
}

impl SimResult {
    pub fn samples(&self) -> u64 {
        self.replications.iter().map(|r| r.samples).sum()
    }

    pub fn dropped(&self) -> u64 {
        self.replications.iter().map(|r| r.dropped).sum()
    }

    /// Fraction of post-warm-up time at each grid point, pooled.
    pub fn occupancy(&self) -> Vec<f64> {
        let mut occ = vec![0.0; self.n_points];
        for r in &self.replications {
            for (o, v) in occ.iter_mut().zip(&r.occupancy_s) {
                *o += v;
            }
        }
        let tot: f64 = occ.iter().sum();
        occ.iter().map(|v| v / tot).collect()
    }
}

struct World<'a> {
    model: &'a ScenarioModel,
    policy: &'a RelayPolicy,
    neighbours: Vec<Vec<usize>>,
    /// Cumulative error-matrix rows.
    cum_e: Vec<Vec<f64>>,
    cfg: &'a SimConfig,
}

impl World<'_> {
    fn report(&self, rng: &mut ChaCha8Rng, x: usize) -> usize {
        match self.cfg.report_mode {
            ReportMode::ErrorMatrix => {
                let row = &self.cum_e[x];
                let u: f64 = rng.random::<f64>() * row[row.len() - 1];
                row.partition_point(|&c| c <= u).min(row.len() - 1)
            }
            ReportMode::ContinuousSnap => {
                let err = &self.model.scenario.location_error;
                let g = &self.model.scenario.grid;
                let c = g.coord(x);
                let (dx, dy) = if err.sigma_m > 0.0 {
                    let nd = Normal::new(0.0, err.sigma_m).expect("sigma is finite and > 0");
                    (nd.sample(rng), nd.sample(rng))
                } else {
                    (0.0, 0.0)
                };
                g.snap_clamped(Coord::new(c.x + err.bias.x + dx, c.y + err.bias.y + dy))
            }
        }
    }

    fn run(&self, rep: usize) -> (ReplicationStats, Vec<TraceEvent>) {
        let cfg = self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(rep as u64);
        let n = self.model.n_points();
        let u = &self.model.scenario.updates;
        let exp = |rate: f64| Exp::new(rate).expect("rates are positive");
        let mob = exp(self.model.mobility.mu_m);
        let srv = exp(u.mu_hz);
        let upd = exp(u.tau_hz);
        let tables = &self.model.tables;
        let record = cfg.trace && rep == 0;
        let mut trace = Vec::new();

        let mut x = rng.random_range(0..n);
        let mut belief = x;
        let mut queue: VecDeque<usize> = VecDeque::with_capacity(u.queue_size);
        let mut t: f64 = 0.0;
        let mut t_mob = mob.sample(&mut rng);
        let mut t_upd = match cfg.update_timer {
            UpdateTimer::Exponential => upd.sample(&mut rng),
            UpdateTimer::Periodic => rng.random::<f64>() / u.tau_hz,
        };
        let mut t_srv = f64::INFINITY;
        let mut t_dec = cfg.warmup_s;
        let mut st = ReplicationStats {
            mean_throughput: 0.0,
            samples: 0,
            joint: vec![0; n * n],
            occupancy_s: vec![0.0; n],
            generated: 0,
            dropped: 0,
            lost: 0,
            max_queue: 0,
        };
        let mut sum = 0.0;
        loop {
            let next = t_mob.min(t_upd).min(t_srv).min(t_dec);
            if next >= cfg.duration_s {
                st.occupancy_s[x] += cfg.duration_s - t.max(cfg.warmup_s);
                break;
            }
            if next > cfg.warmup_s {
                st.occupancy_s[x] += next - t.max(cfg.warmup_s);
            }
            t = next;
            let kind = if next == t_dec {
                let opt = self.policy.decisions[belief] as usize;
                sum += tables.t(opt, x);
                st.samples += 1;
                st.joint[belief * n + x] += 1;
                t_dec += cfg.data_tx_interval_s;
                EventKind::Decide
            } else if next == t_mob {
                let nb = &self.neighbours[x];
                x = nb[rng.random_range(0..nb.len())];
                t_mob = t + mob.sample(&mut rng);
                EventKind::Move
            } else if next == t_upd {
                t_upd = match cfg.update_timer {
                    UpdateTimer::Exponential => t + upd.sample(&mut rng),
                    UpdateTimer::Periodic => t + 1.0 / u.tau_hz,
                };
                if t > cfg.warmup_s {
                    st.generated += 1;
                }
                if queue.len() < u.queue_size {
                    let r = self.report(&mut rng, x);
                    queue.push_back(r);
                    st.max_queue = st.max_queue.max(queue.len());
                    if queue.len() == 1 {
                        t_srv = t + srv.sample(&mut rng);
                    }
                    EventKind::Generate
                } else {
                    if t > cfg.warmup_s {
                        st.dropped += 1;
                    }
                    EventKind::Drop
                }
            } else {
                let head = queue.pop_front().expect("service only runs with a non-empty queue");
                let delivered = u.p_loss == 0.0 || rng.random::<f64>() >= u.p_loss;
                t_srv = if queue.is_empty() { f64::INFINITY } else { t + srv.sample(&mut rng) };
                if delivered {
                    belief = head;
                    EventKind::Deliver
                } else {
                    if t > cfg.warmup_s {
                        st.lost += 1;
                    }
                    EventKind::Lose
                }
            };
            if record {
                trace.push(TraceEvent { t_s: t, event: kind, state_m: x, ap_view_m: belief, queue_len: queue.len() });
            }
        }
        st.mean_throughput = if st.samples > 0 { sum / st.samples as f64 } else { f64::NAN };
        (st, trace)
    }
}

/// Runs the replications (in parallel) and aggregates them in replication order.
pub fn simulate(model: &ScenarioModel, policy: &RelayPolicy, cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let n = model.n_points();
    if policy.len() != n {
        return Err(Error::Dimension { what: "policy length", expected: n, got: policy.len() });
    }
    if policy.max_option() as usize > model.tables.relays() {
        return Err(Error::domain("policy refers to a relay that does not exist"));
    }
    let world = World {
        model,
        policy,
        neighbours: (0..n).map(|i| model.scenario.grid.open_neighbours(i)).collect(),
        cum_e: (0..n)
            .map(|i| {
                let mut acc = 0.0;
                model
                    .error
                    .row(i)
                    .iter()
                    .map(|v| {
                        acc += v;
                        acc
                    })
                    .collect()
            })
            .collect(),
        cfg,
    };
    let runs: Vec<(ReplicationStats, Vec<TraceEvent>)> = (0..cfg.replications).into_par_iter().map(|r| world.run(r)).collect();
    let means: Vec<f64> = runs.iter().map(|r| r.0.mean_throughput).collect();
    if means.iter().any(|m| !m.is_finite()) {
        return Err(Error::domain("a replication recorded no decision epochs; lengthen duration_s"));
    }
    let k = means.len() as f64;
    let mean = means.iter().sum::<f64>() / k;
    let half_width = if means.len() > 1 {
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0);
        let t = StudentsT::new(0.0, 1.0, k - 1.0).expect("df >= 1").inverse_cdf(0.975);
        t * (var / k).sqrt()
    } else {
        f64::INFINITY
    };
    let mut joint = vec![0u64; n * n];
    let mut trace = Vec::new();
    let mut reps = Vec::with_capacity(runs.len());
    for (st, tr) in runs {
        for (a, b) in joint.iter_mut().zip(&st.joint) {
            *a += b;
        }
        if !tr.is_empty() {
            trace = tr;
        }
        reps.push(st);
    }
    Ok(SimResult { mean, half_width, replications: reps, joint, n_points: n, trace })
}

/// Empirical Pr[X | X̂] from the sampled (belief, truth) pairs.
#[derive(Debug, Clone)]
pub struct EmpiricalConditional {
    pub matrix: ConditionalMatrix,
    pub row_counts: Vec<u64>,
    /// Rows with fewer samples than requested; exclude them from comparisons.
    pub undersampled: Vec<bool>,
}

pub fn estimate_conditional(model: &ScenarioModel, cfg: &SimConfig, min_row_samples: u64) -> Result<EmpiricalConditional> {
    // The policy only affects the throughput samples, not the sampled pairs.
    let res = simulate(model, &RelayPolicy::all_direct(model.n_points()), cfg)?;
    let n = res.n_points;
    let total = res.samples().max(1) as f64;
    let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| res.joint[i * n + j] as f64 / total).collect()).collect();
    let row_counts: Vec<u64> = (0..n).map(|i| res.joint[i * n..(i + 1) * n].iter().sum()).collect();
    Ok(EmpiricalConditional {
        matrix: ConditionalMatrix::from_joint(rows)?,
        undersampled: row_counts.iter().map(|&c| c < min_row_samples).collect(),
        row_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    fn small_model() -> ScenarioModel {
        let text = "
[grid]
nx = 3
ny = 2
spacing_m = 8
[nodes]
ap_x_m = 4
ap_y_m = 4
dest_x_m = 20
dest_y_m = 12
[mobility]
speed_mps = 4
[updates]
tau_hz = 1
queue_size = 1
p_loss = 0.2
[location_error]
sigma_m = 4
[simulation]
duration_s = 2000
warmup_s = 100
replications = 3
data_tx_interval_s = 1
";
        ScenarioModel::build(Scenario::parse_str(text, "mc", None).unwrap()).unwrap()
    }

    #[test]
    fn same_seed_same_trace() {
        let m = small_model();
        let mut cfg = SimConfig::from_scenario(&m);
        cfg.trace = true;
        let p = RelayPolicy::all_relay(m.n_points());
        let a = simulate(&m, &p, &cfg).unwrap();
        let b = simulate(&m, &p, &cfg).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.mean, b.mean);
        assert!(!a.trace.is_empty());
        cfg.seed += 1;
        assert_ne!(simulate(&m, &p, &cfg).unwrap().mean, a.mean);
    }

    #[test]
    fn queue_respects_capacity() {
        let m = small_model();
        let cfg = SimConfig::from_scenario(&m);
        let r = simulate(&m, &RelayPolicy::all_direct(m.n_points()), &cfg).unwrap();
        assert!(r.replications.iter().all(|s| s.max_queue <= 1));
        assert!(r.replications.iter().all(|s| s.generated > 0));
        assert_eq!(r.samples(), 3 * 1900);
    }

    #[test]
    fn always_direct_is_constant_here() {
        let m = small_model();
        let cfg = SimConfig::from_scenario(&m);
        let r = simulate(&m, &RelayPolicy::all_direct(m.n_points()), &cfg).unwrap();
        // Mobile relay: the direct link does not depend on position.
        assert!((r.mean - m.tables.t_direct[0]).abs() < 1e-12);
    }

    #[test]
    fn trace_csv_header() {
        let e = TraceEvent { t_s: 1.5, event: EventKind::Deliver, state_m: 0, ap_view_m: 2, queue_len: 0 };
        assert_eq!(trace_csv(&[e]), "t_s,event,state_m,ap_view_m,queue_len\n1.5,deliver,1,3,0\n");
    }

    #[test]
    fn rejects_bad_config() {
        let m = small_model();
        let mut cfg = SimConfig::from_scenario(&m);
        cfg.warmup_s = cfg.duration_s;
        assert!(simulate(&m, &RelayPolicy::all_direct(6), &cfg).is_err());
    }
}

//! `locrelay` command-line tool.
//!
//! Every subcommand computes all of its outputs in memory first and only then
//! writes them, so a failing run leaves no files behind. Exit codes: 0 success,
//! 1 usage error, 2 invalid input, 3 numerical failure.

mod output;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use locrelay::analysis::{
    diff_csv, parse_values, policy_diff, required_tau, required_tau_for_benefit, run_sweep, sweep_csv, SearchOptions, SweepParam, SweepSpec,
};
use locrelay::montecarlo::{simulate, trace_csv, ReportMode, SimConfig, UpdateTimer};
use locrelay::policy::RelayPolicy;
use locrelay::{load_scenario, MetricReport, PolicyKind, ScenarioModel};

use output::Outputs;

#[derive(Parser, Debug)]
#[command(name = "locrelay", version, about = "Location-based relay selection under mobility and stale location reports")]
struct Cli {
    /// Worker threads for chain solves, sweep cells and replications.
    #[arg(long, global = true, env = "LOCRELAY_JOBS", value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,

    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate one policy and write its metric report.
    Solve(SolveArgs),
    /// Compute the optimal policy and its decision tables.
    Optimize(OptimizeArgs),
    /// Evaluate policies over a range of one parameter.
    Sweep(SweepArgs),
    /// Smallest update rate keeping the standard policy's lost fraction under a target, per speed.
    RequiredTau(RequiredTauArgs),
    /// Smallest update rate at which a policy beats both fixed policies by a factor, per location error.
    BenefitTau(BenefitTauArgs),
    /// Run the Monte Carlo simulator for one policy.
    Simulate(SimulateArgs),
    /// Compare two policy files point by point.
    Diff(DiffArgs),
    /// Check a scenario (and optionally a policy file) without computing anything else.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct ScenarioArg {
    /// Scenario file.
    #[arg(long, value_name = "PATH")]
    scenario: PathBuf,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// standard, inverse, optimized, always-direct, always-relay, heuristic or file:PATH.
    #[arg(long, default_value = "standard", value_parser = parse_policy)]
    policy: PolicyKind,
    /// Metric report CSV; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Per-grid-point steady-state summary CSV.
    #[arg(long, value_name = "PATH")]
    steady_out: Option<PathBuf>,
    /// Mobility generator as `row,col,rate`.
    #[arg(long, value_name = "PATH")]
    dump_mobility: Option<PathBuf>,
    /// Forwarding-chain arcs as `from,to,const,coef_wD,coef_wR`.
    #[arg(long, value_name = "PATH")]
    dump_template: Option<PathBuf>,
    /// Location-error matrix as `i,j,prob`.
    #[arg(long, value_name = "PATH")]
    dump_error: Option<PathBuf>,
    /// Throughput tables in the map CSV format.
    #[arg(long, value_name = "PATH")]
    dump_map: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Policy CSV `m,decision`; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Decision tables CSV `r,m,gamma_mbps`.
    #[arg(long, value_name = "PATH")]
    gamma_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// sigma, speed or tau.
    #[arg(long, value_parser = parse_sweep_param)]
    param: SweepParam,
    /// `start:step:stop` or a comma-separated list.
    #[arg(long)]
    values: String,
    /// Comma-separated policy names.
    #[arg(long, default_value = "standard,optimized", value_delimiter = ',', value_parser = parse_policy)]
    policies: Vec<PolicyKind>,
    /// Output CSV; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SearchArgs {
    /// Lower end of the searched update-rate range, in Hz.
    #[arg(long, default_value_t = 1e-3)]
    tau_min: f64,
    /// Upper end of the searched update-rate range, in Hz.
    #[arg(long, default_value_t = 1e3)]
    tau_max: f64,
    /// Relative bracket width at which bisection stops.
    #[arg(long, default_value_t = 0.01)]
    rel_tol: f64,
}

impl SearchArgs {
    fn options(&self) -> SearchOptions {
        SearchOptions { tau_min: self.tau_min, tau_max: self.tau_max, rel_tol: self.rel_tol, ..SearchOptions::default() }
    }
}

#[derive(Args, Debug)]
struct RequiredTauArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Largest acceptable lost fraction.
    #[arg(long)]
    target: f64,
    /// Comma-separated speeds in m/s.
    #[arg(long)]
    speeds: String,
    #[command(flatten)]
    search: SearchArgs,
    /// Output CSV; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenefitTauArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Required ratio of s_loc to the better fixed policy (> 1).
    #[arg(long, default_value_t = 1.05)]
    gamma: f64,
    /// Location errors in m: `start:step:stop` or a comma-separated list.
    #[arg(long)]
    sigmas: String,
    /// Comma-separated policy names.
    #[arg(long, default_value = "standard,optimized", value_delimiter = ',', value_parser = parse_policy)]
    policies: Vec<PolicyKind>,
    #[command(flatten)]
    search: SearchArgs,
    /// Output CSV; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TimerArg {
    Exponential,
    Periodic,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReportArg {
    ErrorMatrix,
    ContinuousSnap,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// standard, inverse, optimized, always-direct, always-relay, heuristic or file:PATH.
    #[arg(long, default_value = "standard", value_parser = parse_policy)]
    policy: PolicyKind,
    /// Base seed; replication r uses stream r. Defaults to the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Independent replications; defaults to the scenario's value.
    #[arg(long)]
    replications: Option<usize>,
    /// Simulated time per replication, including warm-up.
    #[arg(long, value_name = "SECONDS")]
    duration: Option<f64>,
    /// Initial time excluded from the statistics.
    #[arg(long, value_name = "SECONDS")]
    warmup: Option<f64>,
    /// Time between decision epochs.
    #[arg(long, value_name = "SECONDS")]
    interval: Option<f64>,
    /// Exponential inter-update times (as in the chain) or a fixed period.
    #[arg(long, value_enum, default_value_t = TimerArg::Exponential)]
    timer: TimerArg,
    /// How reported positions are drawn from the true one.
    #[arg(long, value_enum, default_value_t = ReportArg::ErrorMatrix)]
    report_mode: ReportArg,
    /// Event trace of the first replication.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Output CSV; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DiffArgs {
    /// Reference policy CSV.
    a: PathBuf,
    /// Policy CSV compared against the reference.
    b: PathBuf,
    /// Scenario used for coordinates and size checks; without it x and y stay empty.
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,
    /// Output CSV; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Policy CSV to check against the scenario.
    #[arg(long, value_name = "PATH")]
    policy_file: Option<PathBuf>,
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    PolicyKind::parse(s).ok_or_else(|| {
        format!("unknown policy {s:?}; use standard, inverse, optimized, always-direct, always-relay, heuristic or file:PATH")
    })
}

fn parse_sweep_param(s: &str) -> Result<SweepParam, String> {
    SweepParam::parse(s).ok_or_else(|| format!("unknown sweep parameter {s:?}; use sigma, speed or tau"))
}

enum Failure {
    Usage(String),
    Model(locrelay::Error),
    Write(String),
}

impl From<locrelay::Error> for Failure {
    fn from(e: locrelay::Error) -> Self {
        Failure::Model(e)
    }
}

type CmdResult = Result<Outputs, Failure>;

fn build_model(path: &Path) -> Result<ScenarioModel, Failure> {
    Ok(ScenarioModel::build(load_scenario(path)?)?)
}

fn report_csv(scenario: &str, rows: &[(String, MetricReport)]) -> String {
    let mut s = format!("scenario,policy,{}\n", MetricReport::CSV_FIELDS);
    for (policy, r) in rows {
        let _ = writeln!(s, "{scenario},{policy},{}", r.csv_values());
    }
    s
}

fn cmd_solve(a: &SolveArgs) -> CmdResult {
    let m = build_model(&a.scenario.scenario)?;
    let eval = m.evaluate(&a.policy)?;
    let mut out = Outputs::default();
    out.add(a.out.clone(), report_csv(&m.scenario.name, &[(a.policy.name(), eval.report)]));
    if let Some(path) = &a.steady_out {
        let ss =
            eval.steady.as_ref().ok_or_else(|| locrelay::Error::Unsupported("no chain steady state for several mobile relays".into()))?;
        let r = ss.r_view_mass(&m.template);
        let g = ss.grid_marginal();
        let mut s = String::from("m,x_m,y_m,p_mob,p_view_d,p_view_r\n");
        for i in 0..m.n_points() {
            let c = m.scenario.grid.coord(i);
            let _ = writeln!(s, "{},{},{},{},{},{}", i + 1, c.x, c.y, g[i], g[i] - r[i], r[i]);
        }
        out.add(Some(path.clone()), s);
    }
    if let Some(p) = &a.dump_mobility {
        out.add(Some(p.clone()), m.mobility.dump_coo());
    }
    if let Some(p) = &a.dump_template {
        out.add(Some(p.clone()), m.template.dump());
    }
    if let Some(p) = &a.dump_error {
        out.add(Some(p.clone()), m.error.to_csv());
    }
    if let Some(p) = &a.dump_map {
        out.add(Some(p.clone()), locrelay::scenario::throughput_map_csv(&m.scenario.grid, &m.tables));
    }
    Ok(out)
}

fn cmd_optimize(a: &OptimizeArgs) -> CmdResult {
    let m = build_model(&a.scenario.scenario)?;
    let opt = m.optimize()?;
    let mut out = Outputs::default();
    out.add(a.out.clone(), opt.policy.to_csv());
    if let Some(p) = &a.gamma_out {
        out.add(Some(p.clone()), opt.tables.to_csv());
    }
    Ok(out)
}

fn cmd_sweep(a: &SweepArgs) -> CmdResult {
    let values = parse_values(&a.values).map_err(|e| Failure::Usage(e.to_string()))?;
    let base = load_scenario(&a.scenario.scenario)?;
    let spec = SweepSpec { param: a.param, values, policies: a.policies.clone() };
    let rows = run_sweep(&base, None, &spec)?;
    if let [first, ..] = rows.as_slice() {
        if let (Err(msg), true) = (&first.outcome, rows.iter().all(|r| r.outcome.is_err())) {
            return Err(Failure::Model(locrelay::Error::Numeric(format!("every sweep cell failed; first: {msg}"))));
        }
    }
    let mut out = Outputs::default();
    out.add(a.out.clone(), sweep_csv(&rows));
    Ok(out)
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, Failure> {
    parse_values(s).map_err(|_| Failure::Usage(format!("cannot parse {what} {s:?}")))
}

fn cmd_required_tau(a: &RequiredTauArgs) -> CmdResult {
    let speeds = parse_list(&a.speeds, "--speeds")?;
    let base = load_scenario(&a.scenario.scenario)?;
    let opts = a.search.options();
    let mut s = String::from("speed_mps,target_lost_fraction,required_tau_hz\n");
    for v in speeds {
        let r = required_tau(&base, None, a.target, v, &opts)?;
        let _ = writeln!(s, "{v},{},{r}", a.target);
    }
    let mut out = Outputs::default();
    out.add(a.out.clone(), s);
    Ok(out)
}

fn cmd_benefit_tau(a: &BenefitTauArgs) -> CmdResult {
    let sigmas = parse_list(&a.sigmas, "--sigmas")?;
    let base = load_scenario(&a.scenario.scenario)?;
    let tables = ScenarioModel::build(base.clone())?.tables;
    let opts = a.search.options();
    let mut s = String::from("sigma_m,policy,gamma,required_tau_hz\n");
    for sigma in sigmas {
        for kind in &a.policies {
            let r = required_tau_for_benefit(&base, Some(&tables), a.gamma, sigma, kind, &opts)?;
            let _ = writeln!(s, "{sigma},{},{},{r}", kind.name(), a.gamma);
        }
    }
    let mut out = Outputs::default();
    out.add(a.out.clone(), s);
    Ok(out)
}

fn cmd_simulate(a: &SimulateArgs) -> CmdResult {
    let m = build_model(&a.scenario.scenario)?;
    let eval = m.evaluate(&a.policy)?;
    let base = SimConfig::from_scenario(&m);
    let cfg = SimConfig {
        seed: a.seed.unwrap_or(base.seed),
        replications: a.replications.unwrap_or(base.replications),
        duration_s: a.duration.unwrap_or(base.duration_s),
        warmup_s: a.warmup.unwrap_or(base.warmup_s),
        data_tx_interval_s: a.interval.unwrap_or(base.data_tx_interval_s),
        update_timer: match a.timer {
            TimerArg::Exponential => UpdateTimer::Exponential,
            TimerArg::Periodic => UpdateTimer::Periodic,
        },
        report_mode: match a.report_mode {
            ReportArg::ErrorMatrix => ReportMode::ErrorMatrix,
            ReportArg::ContinuousSnap => ReportMode::ContinuousSnap,
        },
        trace: a.trace.is_some(),
    };
    let sim = simulate(&m, &eval.policy, &cfg)?;
    let mut s = String::from("scenario,policy,replications,samples,mean_mbps,ci95_half_width_mbps,model_s_loc_mbps,dropped_updates\n");
    let _ = writeln!(
        s,
        "{},{},{},{},{},{},{},{}",
        m.scenario.name,
        a.policy.name(),
        cfg.replications,
        sim.samples(),
        sim.mean,
        sim.half_width,
        eval.report.s_loc,
        sim.dropped()
    );
    let mut out = Outputs::default();
    out.add(a.out.clone(), s);
    if let Some(p) = &a.trace {
        out.add(Some(p.clone()), trace_csv(&sim.trace));
    }
    Ok(out)
}

fn read_policy(path: &Path, n2: Option<usize>, k: Option<usize>) -> Result<RelayPolicy, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| locrelay::Error::Io { path: path.to_path_buf(), source: e })?;
    // Without a scenario the file itself defines the size; any decision value is allowed.
    let n2 = n2.unwrap_or_else(|| text.lines().skip(1).filter(|l| !l.trim().is_empty()).count());
    Ok(RelayPolicy::parse_csv(&text, &path.display().to_string(), n2, k.unwrap_or(u16::MAX as usize))?)
}

fn cmd_diff(a: &DiffArgs) -> CmdResult {
    let csv = match &a.scenario {
        Some(p) => {
            let s = load_scenario(p)?;
            let (n, k) = (s.grid.n_points(), s.relay_count());
            let pa = read_policy(&a.a, Some(n), Some(k))?;
            let pb = read_policy(&a.b, Some(n), Some(k))?;
            diff_csv(&policy_diff(&s.grid, &pa, &pb)?)
        }
        None => {
            let pa = read_policy(&a.a, None, None)?;
            let pb = read_policy(&a.b, Some(pa.len()), None)?;
            let mut s = String::from("m,x,y,change\n");
            for (m, (x, y)) in pa.decisions.iter().zip(&pb.decisions).enumerate() {
                let change = match (*x, *y) {
                    (x, y) if x == y => continue,
                    (0, _) => "added",
                    (_, 0) => "removed",
                    _ => "reassigned",
                };
                let _ = writeln!(s, "{},,,{change}", m + 1);
            }
            s
        }
    };
    let mut out = Outputs::default();
    out.add(a.out.clone(), csv);
    Ok(out)
}

fn cmd_validate(a: &ValidateArgs) -> CmdResult {
    let m = build_model(&a.scenario.scenario)?;
    let mut s = format!(
        "ok: {} ({} grid points, {} forwarding states, {} chain states, {} relay option(s), {} walls)\n",
        m.scenario.name,
        m.n_points(),
        m.template.len(),
        m.n_states(),
        m.tables.relays(),
        m.scenario.grid.walls.len()
    );
    if let Some(p) = &a.policy_file {
        let pol = read_policy(p, Some(m.n_points()), Some(m.tables.relays()))?;
        let _ = writeln!(
            s,
            "ok: policy {} relays at {} of {} points",
            p.display(),
            pol.decisions.iter().filter(|&&d| d > 0).count(),
            pol.len()
        );
    }
    let mut out = Outputs::default();
    out.add(None, s);
    Ok(out)
}

fn run(cli: &Cli) -> CmdResult {
    match &cli.cmd {
        Command::Solve(a) => cmd_solve(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::RequiredTau(a) => cmd_required_tau(a),
        Command::BenefitTau(a) => cmd_benefit_tau(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Diff(a) => cmd_diff(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let result = run(&cli).and_then(|out| out.commit().map_err(Failure::Write));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Write(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Model(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}

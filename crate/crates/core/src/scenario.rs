//! Grid geography, node placement, and the scenario file format.
//!
//! Grid points are enumerated row-major from the lowest (x, y) corner: state
//! `m` (1-based) sits at column `(m-1) % nx`, row `(m-1) / nx`. Every other
//! module indexes vectors and matrices with this enumeration (0-based
//! internally, 1-based in files).

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::radio::{LinkModelParams, RateEntry, SecondaryRule, ThroughputTableSet};

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Coord {
    pub x: f64,
    pub y: f64,
}

impl Coord {
    pub const fn new(x: f64, y: f64) -> Self {
        Coord { x, y }
    }

    pub fn dist(self, other: Coord) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// 1-based grid point number, as used in files and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateIndex(pub usize);

impl StateIndex {
    pub fn from_zero_based(i: usize) -> Self {
        StateIndex(i + 1)
    }

    pub fn zero_based(self) -> usize {
        self.0 - 1
    }
}

impl fmt::Display for StateIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MobilityRole {
    /// The candidate relay(s) move; AP and destination are static.
    #[default]
    MobileRelay,
    /// The destination moves; relays are static.
    MobileDestination,
}

impl MobilityRole {
    fn as_str(self) -> &'static str {
        match self {
            MobilityRole::MobileRelay => "mobile_relay",
            MobilityRole::MobileDestination => "mobile_destination",
        }
    }
}

/// A movement between two grid-adjacent states that is forbidden in both directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockedEdge {
    pub a: StateIndex,
    pub b: StateIndex,
}

impl BlockedEdge {
    /// Orders the endpoints so equal walls compare equal.
    pub fn new(a: StateIndex, b: StateIndex) -> Self {
        if a <= b {
            BlockedEdge { a, b }
        } else {
            BlockedEdge { a: b, b: a }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridScenario {
    pub nx: usize,
    pub ny: usize,
    pub spacing_m: f64,
    /// Coordinate of grid point 1.
    pub origin: Coord,
    pub ap_coord: Coord,
    pub dest_coord: Coord,
    /// Static relays (mobile-destination mode only).
    pub relay_coords: Vec<Coord>,
    pub mobility_role: MobilityRole,
    pub walls: Vec<BlockedEdge>,
}

impl GridScenario {
    /// Open grid with no walls, no static relays, in mobile-relay mode.
    pub fn new(nx: usize, ny: usize, spacing_m: f64, origin: Coord, ap: Coord, dest: Coord) -> Result<Self> {
        let g = GridScenario {
            nx,
            ny,
            spacing_m,
            origin,
            ap_coord: ap,
            dest_coord: dest,
            relay_coords: Vec::new(),
            mobility_role: MobilityRole::MobileRelay,
            walls: Vec::new(),
        };
        g.validate()?;
        Ok(g)
    }

    /// Number of grid points, N² in the model.
    pub fn n_points(&self) -> usize {
        self.nx * self.ny
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nx * self.ny < 2 {
            return Err(Error::domain(format!("grid must have at least 2 points, got {}x{}", self.nx, self.ny)));
        }
        if !(self.spacing_m.is_finite() && self.spacing_m > 0.0) {
            return Err(Error::domain(format!("spacing_m must be > 0, got {}", self.spacing_m)));
        }
        for (name, c) in [("ap", self.ap_coord), ("dest", self.dest_coord)] {
            if !self.in_bounding_box(c) {
                return Err(Error::domain(format!("{name} coordinate {c} lies outside the grid bounding box")));
            }
        }
        for w in &self.walls {
            let n = self.n_points();
            if w.a.0 == 0 || w.a.0 > n || w.b.0 == 0 || w.b.0 > n {
                return Err(Error::domain(format!("wall {}-{} references a state outside 1..={n}", w.a, w.b)));
            }
            if !self.adjacent(w.a.zero_based(), w.b.zero_based()) {
                return Err(Error::domain(format!("wall {}-{} joins states that are not grid neighbours", w.a, w.b)));
            }
        }
        Ok(())
    }

    fn in_bounding_box(&self, c: Coord) -> bool {
        let max = self.corner_max();
        c.x >= self.origin.x && c.x <= max.x && c.y >= self.origin.y && c.y <= max.y
    }

    fn corner_max(&self) -> Coord {
        Coord::new(self.origin.x + self.spacing_m * (self.nx - 1) as f64, self.origin.y + self.spacing_m * (self.ny - 1) as f64)
    }

    /// (column, row) of a 0-based index.
    pub fn col_row(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    /// Coordinate of a 0-based grid index. Panics when out of range.
    pub fn coord(&self, idx: usize) -> Coord {
        assert!(idx < self.n_points(), "grid index {idx} out of range");
        let (c, r) = self.col_row(idx);
        Coord::new(self.origin.x + self.spacing_m * c as f64, self.origin.y + self.spacing_m * r as f64)
    }

    pub fn index_to_coord(&self, m: StateIndex) -> Result<Coord> {
        if m.0 == 0 || m.0 > self.n_points() {
            return Err(Error::domain(format!("state index {m} outside 1..={}", self.n_points())));
        }
        Ok(self.coord(m.zero_based()))
    }

    /// Nearest grid point; exact midpoints go to the lower index.
    pub fn coord_to_index(&self, p: Coord) -> Result<StateIndex> {
        let fx = (p.x - self.origin.x) / self.spacing_m;
        let fy = (p.y - self.origin.y) / self.spacing_m;
        let inside = |f: f64, n: usize| f.is_finite() && f >= -0.5 && f <= n as f64 - 0.5;
        if !inside(fx, self.nx) || !inside(fy, self.ny) {
            return Err(Error::domain(format!("point {p} lies outside the grid area")));
        }
        // ceil(f - 0.5) rounds half down.
        let col = ((fx - 0.5).ceil().max(0.0) as usize).min(self.nx - 1);
        let row = ((fy - 0.5).ceil().max(0.0) as usize).min(self.ny - 1);
        Ok(StateIndex::from_zero_based(row * self.nx + col))
    }

    /// Nearest grid point after clamping into the grid area.
    pub fn snap_clamped(&self, p: Coord) -> usize {
        let max = self.corner_max();
        let c = Coord::new(p.x.clamp(self.origin.x, max.x), p.y.clamp(self.origin.y, max.y));
        self.coord_to_index(c).expect("clamped point lies inside the grid").zero_based()
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        let (ca, ra) = self.col_row(a);
        let (cb, rb) = self.col_row(b);
        ca.abs_diff(cb) + ra.abs_diff(rb) == 1
    }

    /// 4-neighbourhood of a 0-based index, in ascending index order, walls ignored.
    pub fn grid_neighbours(&self, idx: usize) -> Vec<usize> {
        let (c, r) = self.col_row(idx);
        let mut out = Vec::with_capacity(4);
        if r > 0 {
            out.push(idx - self.nx);
        }
        if c > 0 {
            out.push(idx - 1);
        }
        if c + 1 < self.nx {
            out.push(idx + 1);
        }
        if r + 1 < self.ny {
            out.push(idx + self.nx);
        }
        out
    }

    /// Neighbours that are not separated by a wall.
    pub fn open_neighbours(&self, idx: usize) -> Vec<usize> {
        let blocked: BTreeSet<BlockedEdge> = self.walls.iter().copied().collect();
        let me = StateIndex::from_zero_based(idx);
        self.grid_neighbours(idx)
            .into_iter()
            .filter(|&j| !blocked.contains(&BlockedEdge::new(me, StateIndex::from_zero_based(j))))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityParams {
    pub speed_mps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateParams {
    pub tau_hz: f64,
    pub mu_hz: f64,
    pub p_loss: f64,
    pub queue_size: usize,
}

impl Default for UpdateParams {
    fn default() -> Self {
        UpdateParams { tau_hz: 0.2, mu_hz: DEFAULT_MU_HZ, p_loss: 0.0, queue_size: 2 }
    }
}

/// Location-update service rate for a 28-byte update frame: 1/(0.3748 ms).
pub const DEFAULT_MU_HZ: f64 = 1.0 / 0.3748e-3;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocationErrorParams {
    pub sigma_m: f64,
    pub bias: Coord,
}

/// Room-level heuristic policy rectangle (closed, in meters).
#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicRect {
    pub corner_lo: Coord,
    pub corner_hi: Coord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationParams {
    pub data_tx_interval_s: f64,
    pub duration_s: f64,
    pub warmup_s: f64,
    pub replications: usize,
    pub seed: u64,
}

impl Default for SimulationParams {
    fn default() -> Self {
        SimulationParams { data_tx_interval_s: 25.0, duration_s: 1.0e4, warmup_s: 500.0, replications: 20, seed: 1 }
    }
}

/// A fully populated scenario: geography plus every module's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub grid: GridScenario,
    /// Number of mobile relays K in mobile-relay mode.
    pub mobile_relays: usize,
    pub mobility: MobilityParams,
    pub updates: UpdateParams,
    pub location_error: LocationErrorParams,
    pub radio: LinkModelParams,
    pub heuristic: Option<HeuristicRect>,
    pub simulation: SimulationParams,
    /// Measured throughput map; when present the radio model is bypassed.
    pub throughput_map: Option<PathBuf>,
}

impl Scenario {
    /// Number of relay options K.
    pub fn relay_count(&self) -> usize {
        match self.grid.mobility_role {
            MobilityRole::MobileRelay => self.mobile_relays,
            MobilityRole::MobileDestination => self.grid.relay_coords.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let u = &self.updates;
        if !(self.mobility.speed_mps.is_finite() && self.mobility.speed_mps > 0.0) {
            return Err(Error::domain("speed_mps must be > 0"));
        }
        if !(u.tau_hz.is_finite() && u.tau_hz > 0.0) {
            return Err(Error::domain("tau_hz must be > 0"));
        }
        if !(u.mu_hz.is_finite() && u.mu_hz > 0.0) {
            return Err(Error::domain("mu_hz must be > 0"));
        }
        if !(0.0..1.0).contains(&u.p_loss) {
            return Err(Error::domain("p_loss must lie in [0, 1)"));
        }
        if u.queue_size < 1 {
            return Err(Error::domain("queue_size must be >= 1"));
        }
        if !(self.location_error.sigma_m.is_finite() && self.location_error.sigma_m >= 0.0) {
            return Err(Error::domain("sigma_m must be >= 0"));
        }
        if self.relay_count() == 0 {
            return Err(Error::domain("scenario needs at least one relay option"));
        }
        self.radio.validate()?;
        let s = &self.simulation;
        if !(s.duration_s > s.warmup_s && s.warmup_s >= 0.0) {
            return Err(Error::domain("simulation needs duration_s > warmup_s >= 0"));
        }
        if !(s.data_tx_interval_s > 0.0) {
            return Err(Error::domain("data_tx_interval_s must be > 0"));
        }
        if s.replications < 1 {
            return Err(Error::domain("replications must be >= 1"));
        }
        Ok(())
    }

    /// Serialises back into the sectioned key=value format.
    pub fn to_config_string(&self) -> String {
        let g = &self.grid;
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "\n[grid]");
        let _ = writeln!(s, "nx = {}\nny = {}\nspacing_m = {}", g.nx, g.ny, g.spacing_m);
        let _ = writeln!(s, "origin_x_m = {}\norigin_y_m = {}", g.origin.x, g.origin.y);
        let _ = writeln!(s, "\n[nodes]");
        let _ = writeln!(s, "mobility_role = {}", g.mobility_role.as_str());
        let _ = writeln!(s, "ap_x_m = {}\nap_y_m = {}", g.ap_coord.x, g.ap_coord.y);
        let _ = writeln!(s, "dest_x_m = {}\ndest_y_m = {}", g.dest_coord.x, g.dest_coord.y);
        let _ = writeln!(s, "mobile_relays = {}", self.mobile_relays);
        for r in &g.relay_coords {
            let _ = writeln!(s, "relay_m = {},{}", r.x, r.y);
        }
        let _ = writeln!(s, "\n[mobility]\nspeed_mps = {}", self.mobility.speed_mps);
        let u = &self.updates;
        let _ =
            writeln!(s, "\n[updates]\ntau_hz = {}\nmu_hz = {}\np_loss = {}\nqueue_size = {}", u.tau_hz, u.mu_hz, u.p_loss, u.queue_size);
        let e = &self.location_error;
        let _ = writeln!(s, "\n[location_error]\nsigma_m = {}\nbias_x_m = {}\nbias_y_m = {}", e.sigma_m, e.bias.x, e.bias.y);
        let r = &self.radio;
        let _ = writeln!(s, "\n[radio]");
        let _ = writeln!(s, "pl_d0_db = {}\nd0_m = {}\npath_loss_exponent = {}", r.pl_d0_db, r.d0_m, r.n_exp);
        let _ = writeln!(s, "tx_power_dbm = {}\nnoise_floor_dbm = {}", r.tx_power_dbm, r.noise_floor_dbm);
        let _ = writeln!(s, "ricean_k = {}\nb_msdu_bytes = {}", r.ricean_k, r.b_msdu_bytes);
        let _ = writeln!(s, "logistic_scale_db = {}", r.logistic_scale_db);
        let _ = writeln!(s, "secondary_rate = {}", r.secondary.as_str());
        for e in &r.rate_table {
            let _ = writeln!(s, "rate = {},{},{}", e.phy_rate_mbps, e.snr_threshold_db, e.overhead_us);
        }
        if !g.walls.is_empty() {
            let _ = writeln!(s, "\n[walls]");
            for w in &g.walls {
                let _ = writeln!(s, "edge = {}-{}", w.a, w.b);
            }
        }
        if let Some(h) = &self.heuristic {
            let _ = writeln!(
                s,
                "\n[policy]\nheuristic_lo_m = {},{}\nheuristic_hi_m = {},{}",
                h.corner_lo.x, h.corner_lo.y, h.corner_hi.x, h.corner_hi.y
            );
        }
        let sim = &self.simulation;
        let _ = writeln!(
            s,
            "\n[simulation]\ndata_tx_interval_s = {}\nduration_s = {}\nwarmup_s = {}\nreplications = {}\nseed = {}",
            sim.data_tx_interval_s, sim.duration_s, sim.warmup_s, sim.replications, sim.seed
        );
        if let Some(p) = &self.throughput_map {
            let _ = writeln!(s, "\n[throughput_map]\npath = {}", p.display());
        }
        s
    }

    /// Parses scenario text. Relative map paths are resolved against `base_dir`.
    pub fn parse_str(text: &str, source_name: &str, base_dir: Option<&Path>) -> Result<Self> {
        parse::parse(text, source_name, base_dir)
    }
}

/// Reads and validates a scenario file, applying defaults to omitted fields.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scenario::parse_str(&text, &path.display().to_string(), path.parent())
}

/// Reads a throughput-map CSV (`m,x_m,y_m,t_direct_mbps,t_relay1_mbps[,...]`).
pub fn load_throughput_map(path: impl AsRef<Path>, grid: &GridScenario) -> Result<ThroughputTableSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_throughput_map(&text, &path.display().to_string(), grid)
}

pub fn parse_throughput_map(text: &str, source_name: &str, grid: &GridScenario) -> Result<ThroughputTableSet> {
    let perr = |line: usize, msg: String| Error::Parse { source_name: source_name.to_string(), line, msg };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| perr(1, e.to_string()))?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 5 || names[..4] != ["m", "x_m", "y_m", "t_direct_mbps"] {
        return Err(perr(1, "header must start with m,x_m,y_m,t_direct_mbps,t_relay1_mbps".into()));
    }
    for (k, name) in names[4..].iter().enumerate() {
        if *name != format!("t_relay{}_mbps", k + 1) {
            return Err(perr(1, format!("unexpected column {name:?}, expected t_relay{}_mbps", k + 1)));
        }
    }
    let n = grid.n_points();
    let k = names.len() - 4;
    let mut direct = vec![f64::NAN; n];
    let mut relay = vec![vec![f64::NAN; n]; k];
    let mut seen = vec![false; n];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| perr(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != names.len() {
            return Err(perr(line, format!("expected {} columns, found {}", names.len(), rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|_| perr(line, format!("column {} is not a number: {:?}", names[i], &rec[i])))
        };
        let m: usize = rec[0].parse().map_err(|_| perr(line, format!("bad grid index {:?}", &rec[0])))?;
        if m == 0 || m > n {
            return Err(perr(line, format!("grid index {m} outside 1..={n}")));
        }
        if seen[m - 1] {
            return Err(perr(line, format!("duplicate grid index {m}")));
        }
        seen[m - 1] = true;
        let at = Coord::new(num(1)?, num(2)?);
        match grid.coord_to_index(at) {
            Ok(snapped) if snapped.0 == m => {}
            _ => return Err(perr(line, format!("coordinate {at} does not belong to grid point {m}"))),
        }
        let mut vals = Vec::with_capacity(k + 1);
        for (i, name) in names.iter().enumerate().skip(3) {
            let v = num(i)?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(perr(line, format!("throughput in {name} must be finite and >= 0, got {v}")));
            }
            vals.push(v);
        }
        direct[m - 1] = vals[0];
        for r in 0..k {
            relay[r][m - 1] = vals[r + 1];
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(perr(0, format!("grid point {} missing from map", missing + 1)));
    }
    ThroughputTableSet::new(direct, relay)
}

/// Writes a throughput map in the ingestion CSV format.
pub fn throughput_map_csv(grid: &GridScenario, tables: &ThroughputTableSet) -> String {
    let mut s = String::from("m,x_m,y_m,t_direct_mbps");
    for r in 0..tables.t_relay.len() {
        let _ = write!(s, ",t_relay{}_mbps", r + 1);
    }
    s.push('\n');
    for i in 0..grid.n_points() {
        let c = grid.coord(i);
        let _ = write!(s, "{},{},{},{}", i + 1, c.x, c.y, tables.t_direct[i]);
        for t in &tables.t_relay {
            let _ = write!(s, ",{}", t[i]);
        }
        s.push('\n');
    }
    s
}

mod parse {
    use super::*;

    struct Entry {
        section: String,
        key: String,
        value: String,
        line: usize,
        used: bool,
    }

    struct Doc<'a> {
        src: &'a str,
        entries: Vec<Entry>,
    }

    const SECTIONS: &[&str] =
        &["", "grid", "nodes", "mobility", "updates", "location_error", "radio", "walls", "throughput_map", "policy", "simulation"];

    impl<'a> Doc<'a> {
        fn invalid(&self, field: String, line: usize, msg: impl Into<String>) -> Error {
            Error::Invalid { source_name: self.src.to_string(), field, line, msg: msg.into() }
        }

        fn take_all(&mut self, section: &str, key: &str) -> Vec<(String, usize)> {
            self.entries
                .iter_mut()
                .filter(|e| e.section == section && e.key == key)
                .map(|e| {
                    e.used = true;
                    (e.value.clone(), e.line)
                })
                .collect()
        }

        fn take(&mut self, section: &str, key: &str) -> Result<Option<(String, usize)>> {
            let mut all = self.take_all(section, key);
            if all.len() > 1 {
                let line = all[1].1;
                return Err(self.invalid(format!("[{section}] {key}"), line, "key given more than once"));
            }
            Ok(all.pop())
        }

        fn parsed<T: std::str::FromStr>(&mut self, section: &str, key: &str) -> Result<Option<(T, usize)>> {
            match self.take(section, key)? {
                None => Ok(None),
                Some((v, line)) => v
                    .parse::<T>()
                    .map(|x| Some((x, line)))
                    .map_err(|_| self.invalid(format!("[{section}] {key}"), line, format!("cannot parse {v:?}"))),
            }
        }

        fn opt<T: std::str::FromStr>(&mut self, section: &str, key: &str, default: T) -> Result<T> {
            Ok(self.parsed(section, key)?.map_or(default, |(v, _)| v))
        }

        fn req<T: std::str::FromStr>(&mut self, section: &'static str, key: &'static str) -> Result<(T, usize)> {
            self.parsed(section, key)?.ok_or_else(|| Error::MissingField { source_name: self.src.to_string(), section, key })
        }
    }

    fn pair(v: &str) -> Option<(f64, f64)> {
        let (a, b) = v.split_once(',')?;
        Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
    }

    pub(super) fn parse(text: &str, src: &str, base_dir: Option<&Path>) -> Result<Scenario> {
        let mut doc = Doc { src, entries: Vec::new() };
        let perr = |line: usize, msg: String| Error::Parse { source_name: src.to_string(), line, msg };
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.split('#').next().unwrap_or("").trim();
            if t.is_empty() {
                continue;
            }
            if let Some(rest) = t.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| perr(line, format!("unterminated section header {t:?}")))?.trim();
                if !SECTIONS.contains(&name) || name.is_empty() {
                    return Err(perr(line, format!("unknown section [{name}]")));
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = t.split_once('=').ok_or_else(|| perr(line, format!("expected key = value, found {t:?}")))?;
            let key = k.trim();
            if key.is_empty() || key.chars().any(|c| c.is_ascii_uppercase() || c.is_whitespace()) {
                return Err(perr(line, format!("keys must be lowercase words, found {key:?}")));
            }
            doc.entries.push(Entry { section: section.clone(), key: key.to_string(), value: v.trim().to_string(), line, used: false });
        }

        let name = doc.take("", "name")?.map_or_else(|| src.to_string(), |(v, _)| v);

        // [grid]
        let (nx, _) = doc.req::<usize>("grid", "nx")?;
        let (ny, _) = doc.req::<usize>("grid", "ny")?;
        let (spacing_m, spacing_line) = doc.req::<f64>("grid", "spacing_m")?;
        if !(spacing_m > 0.0 && spacing_m.is_finite()) {
            return Err(doc.invalid("[grid] spacing_m".into(), spacing_line, "must be > 0"));
        }
        let origin = Coord::new(doc.opt("grid", "origin_x_m", spacing_m / 2.0)?, doc.opt("grid", "origin_y_m", spacing_m / 2.0)?);

        // [nodes]
        let role = match doc.take("nodes", "mobility_role")? {
            None => MobilityRole::MobileRelay,
            Some((v, line)) => match v.as_str() {
                "mobile_relay" => MobilityRole::MobileRelay,
                "mobile_destination" => MobilityRole::MobileDestination,
                _ => return Err(doc.invalid("[nodes] mobility_role".into(), line, "expected mobile_relay or mobile_destination")),
            },
        };
        let ap = Coord::new(doc.req("nodes", "ap_x_m")?.0, doc.req("nodes", "ap_y_m")?.0);
        let dest = Coord::new(doc.req("nodes", "dest_x_m")?.0, doc.req("nodes", "dest_y_m")?.0);
        let mobile_relays = doc.opt("nodes", "mobile_relays", 1usize)?;
        let mut relay_coords = Vec::new();
        for (v, line) in doc.take_all("nodes", "relay_m") {
            let (x, y) = pair(&v).ok_or_else(|| doc.invalid("[nodes] relay_m".into(), line, "expected x,y"))?;
            relay_coords.push(Coord::new(x, y));
        }

        // [walls]
        let mut walls = Vec::new();
        for (v, line) in doc.take_all("walls", "edge") {
            for tok in v.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()) {
                let parsed =
                    tok.split_once('-').and_then(|(a, b)| Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?)));
                let (a, b) = parsed.ok_or_else(|| doc.invalid("[walls] edge".into(), line, format!("bad edge {tok:?}")))?;
                walls.push((BlockedEdge::new(StateIndex(a), StateIndex(b)), line));
            }
        }

        let grid = GridScenario {
            nx,
            ny,
            spacing_m,
            origin,
            ap_coord: ap,
            dest_coord: dest,
            relay_coords,
            mobility_role: role,
            walls: walls.iter().map(|(w, _)| *w).collect(),
        };
        if let Err(e) = grid.validate() {
            // Point at the offending wall line when it is a wall problem.
            let line = walls
                .iter()
                .find(|(w, _)| {
                    let g = GridScenario { walls: vec![*w], ..grid.clone() };
                    g.validate().is_err()
                })
                .map_or(0, |(_, l)| *l);
            return Err(doc.invalid("[grid]/[nodes]/[walls]".into(), line, e.to_string()));
        }

        // [mobility]
        let (speed_mps, speed_line) = doc.req::<f64>("mobility", "speed_mps")?;
        if !(speed_mps > 0.0 && speed_mps.is_finite()) {
            return Err(doc.invalid("[mobility] speed_mps".into(), speed_line, "must be > 0"));
        }

        // [updates]
        let d = UpdateParams::default();
        let (tau_hz, tau_line) = doc.req::<f64>("updates", "tau_hz")?;
        let updates = UpdateParams {
            tau_hz,
            mu_hz: doc.opt("updates", "mu_hz", d.mu_hz)?,
            p_loss: doc.opt("updates", "p_loss", d.p_loss)?,
            queue_size: doc.opt("updates", "queue_size", d.queue_size)?,
        };
        if !(tau_hz > 0.0 && tau_hz.is_finite()) {
            return Err(doc.invalid("[updates] tau_hz".into(), tau_line, "must be > 0"));
        }

        // [location_error]
        let location_error = LocationErrorParams {
            sigma_m: doc.opt("location_error", "sigma_m", 0.0)?,
            bias: Coord::new(doc.opt("location_error", "bias_x_m", 0.0)?, doc.opt("location_error", "bias_y_m", 0.0)?),
        };

        // [radio]
        let dr = LinkModelParams::default();
        let secondary = match doc.take("radio", "secondary_rate")? {
            None => dr.secondary,
            Some((v, line)) => SecondaryRule::parse(&v)
                .ok_or_else(|| doc.invalid("[radio] secondary_rate".into(), line, "expected most_robust, next_lower or same_as_primary"))?,
        };
        let mut rate_table = Vec::new();
        for (v, line) in doc.take_all("radio", "rate") {
            let parts: Vec<Option<f64>> = v.split(',').map(|p| p.trim().parse::<f64>().ok()).collect();
            match parts.as_slice() {
                [Some(r), Some(t), Some(o)] => rate_table.push(RateEntry { phy_rate_mbps: *r, snr_threshold_db: *t, overhead_us: *o }),
                _ => return Err(doc.invalid("[radio] rate".into(), line, "expected mbps,snr_db,overhead_us")),
            }
        }
        let radio = LinkModelParams {
            pl_d0_db: doc.opt("radio", "pl_d0_db", dr.pl_d0_db)?,
            d0_m: doc.opt("radio", "d0_m", dr.d0_m)?,
            n_exp: doc.opt("radio", "path_loss_exponent", dr.n_exp)?,
            tx_power_dbm: doc.opt("radio", "tx_power_dbm", dr.tx_power_dbm)?,
            noise_floor_dbm: doc.opt("radio", "noise_floor_dbm", dr.noise_floor_dbm)?,
            ricean_k: doc.opt("radio", "ricean_k", dr.ricean_k)?,
            b_msdu_bytes: doc.opt("radio", "b_msdu_bytes", dr.b_msdu_bytes)?,
            logistic_scale_db: doc.opt("radio", "logistic_scale_db", dr.logistic_scale_db)?,
            secondary,
            rate_table: if rate_table.is_empty() { dr.rate_table } else { rate_table },
        };

        // [policy]
        let lo = doc.take("policy", "heuristic_lo_m")?;
        let hi = doc.take("policy", "heuristic_hi_m")?;
        let heuristic = match (lo, hi) {
            (None, None) => None,
            (Some((a, la)), Some((b, lb))) => {
                let (x0, y0) = pair(&a).ok_or_else(|| doc.invalid("[policy] heuristic_lo_m".into(), la, "expected x,y"))?;
                let (x1, y1) = pair(&b).ok_or_else(|| doc.invalid("[policy] heuristic_hi_m".into(), lb, "expected x,y"))?;
                Some(HeuristicRect { corner_lo: Coord::new(x0, y0), corner_hi: Coord::new(x1, y1) })
            }
            (Some((_, line)), None) | (None, Some((_, line))) => {
                return Err(doc.invalid("[policy] heuristic_lo_m/heuristic_hi_m".into(), line, "both corners are required"))
            }
        };

        // [simulation]
        let ds = SimulationParams::default();
        let simulation = SimulationParams {
            data_tx_interval_s: doc.opt("simulation", "data_tx_interval_s", ds.data_tx_interval_s)?,
            duration_s: doc.opt("simulation", "duration_s", ds.duration_s)?,
            warmup_s: doc.opt("simulation", "warmup_s", ds.warmup_s)?,
            replications: doc.opt("simulation", "replications", ds.replications)?,
            seed: doc.opt("simulation", "seed", ds.seed)?,
        };

        // [throughput_map]
        let throughput_map = doc.take("throughput_map", "path")?.map(|(v, _)| {
            let p = PathBuf::from(v);
            match base_dir {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            }
        });

        if let Some(e) = doc.entries.iter().find(|e| !e.used) {
            let field = if e.section.is_empty() { e.key.clone() } else { format!("[{}] {}", e.section, e.key) };
            return Err(doc.invalid(field, e.line, "unknown key"));
        }

        let scn = Scenario {
            name,
            grid,
            mobile_relays,
            mobility: MobilityParams { speed_mps },
            updates,
            location_error,
            radio,
            heuristic,
            simulation,
            throughput_map,
        };
        scn.validate().map_err(|e| doc.invalid("scenario".into(), 0, e.to_string()))?;
        Ok(scn)
    }
}

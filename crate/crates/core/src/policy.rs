//! Relay policies, conditional location probabilities, and policy optimisation.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::chain::{assemble, solve_steady_state};
use crate::error::{Error, Result};
use crate::info_forwarding::InfoForwardTemplate;
use crate::location_error::{fold_policy, ErrorMatrix};
use crate::mobility::MobilityModel;
use crate::radio::ThroughputTableSet;
use crate::scenario::{Coord, GridScenario};

/// Believed positions with at most this much probability are unsupported.
pub const SUPPORT_EPS: f64 = 1e-12;

/// Decision per believed grid point: 0 = direct, r ≥ 1 = relay r.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RelayPolicy {
    pub decisions: Vec<u16>,
}

impl RelayPolicy {
    pub fn new(decisions: Vec<u16>) -> Self {
        RelayPolicy { decisions }
    }

    pub fn all_direct(n2: usize) -> Self {
        Self::fixed(n2, 0)
    }

    pub fn all_relay(n2: usize) -> Self {
        Self::fixed(n2, 1)
    }

    pub fn fixed(n2: usize, option: u16) -> Self {
        RelayPolicy::new(vec![option; n2])
    }

    /// Relay (option 1) at the 0-based point `i` only.
    pub fn singleton(i: usize, n2: usize) -> Self {
        assert!(i < n2, "singleton index {i} out of range for {n2} points");
        let mut d = vec![0; n2];
        d[i] = 1;
        RelayPolicy::new(d)
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn max_option(&self) -> u16 {
        self.decisions.iter().copied().max().unwrap_or(0)
    }

    /// Share of grid points that do not transmit directly.
    pub fn relay_fraction(&self) -> f64 {
        if self.decisions.is_empty() {
            return 0.0;
        }
        self.decisions.iter().filter(|&&d| d != 0).count() as f64 / self.len() as f64
    }

    pub fn inverse(&self) -> Result<Self> {
        if self.max_option() > 1 {
            return Err(Error::Unsupported("inverse is defined for single-relay policies only".into()));
        }
        Ok(RelayPolicy::new(self.decisions.iter().map(|&d| 1 - d).collect()))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("m,decision\n");
        for (i, d) in self.decisions.iter().enumerate() {
            let _ = writeln!(s, "{},{}", i + 1, d);
        }
        s
    }

    /// Parses `m,decision` rows covering 1..=n2 exactly once, decisions in 0..=k.
    pub fn parse_csv(text: &str, source_name: &str, n2: usize, k: usize) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse { source_name: source_name.to_string(), line, msg };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| perr(1, e.to_string()))?;
        if header.iter().collect::<Vec<_>>() != ["m", "decision"] {
            return Err(perr(1, "header must be m,decision".into()));
        }
        let mut out: Vec<Option<u16>> = vec![None; n2];
        for rec in rdr.records() {
            let rec = rec.map_err(|e| perr(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let m: usize = rec[0].parse().map_err(|_| perr(line, format!("bad grid index {:?}", &rec[0])))?;
            let d: u16 = rec[1].parse().map_err(|_| perr(line, format!("bad decision {:?}", &rec[1])))?;
            if m == 0 || m > n2 {
                return Err(perr(line, format!("grid index {m} outside 1..={n2}")));
            }
            if d as usize > k {
                return Err(perr(line, format!("decision {d} exceeds relay count {k}")));
            }
            if out[m - 1].replace(d).is_some() {
                return Err(perr(line, format!("duplicate grid index {m}")));
            }
        }
        let decisions = out
            .into_iter()
            .enumerate()
            .map(|(i, d)| d.ok_or_else(|| perr(0, format!("grid point {} missing", i + 1))))
            .collect::<Result<_>>()?;
        Ok(RelayPolicy::new(decisions))
    }
}

/// Per-point best option; ties go to direct, then to the lowest relay index.
pub fn standard_policy(tables: &ThroughputTableSet) -> RelayPolicy {
    RelayPolicy::new((0..tables.n_points()).map(|m| argmax_option(|n| tables.t(n, m), tables.relays())).collect())
}

fn argmax_option(value: impl Fn(usize) -> f64, k: usize) -> u16 {
    let mut best = 0;
    let mut best_v = value(0);
    for n in 1..=k {
        let v = value(n);
        if v > best_v {
            best = n;
            best_v = v;
        }
    }
    best as u16
}

pub fn inverse_policy(p: &RelayPolicy) -> Result<RelayPolicy> {
    p.inverse()
}

/// Relay 1 inside the closed rectangle, direct elsewhere.
pub fn heuristic_rect_policy(scn: &GridScenario, lo: Coord, hi: Coord) -> Result<RelayPolicy> {
    let max = scn.coord(scn.n_points() - 1);
    let inside_grid = |c: Coord| c.x >= scn.origin.x && c.x <= max.x && c.y >= scn.origin.y && c.y <= max.y;
    if !inside_grid(lo) || !inside_grid(hi) || lo.x > hi.x || lo.y > hi.y {
        return Err(Error::domain(format!("heuristic rectangle {lo}-{hi} is not within the grid")));
    }
    let tol = 1e-9 * scn.spacing_m;
    Ok(RelayPolicy::new(
        (0..scn.n_points())
            .map(|m| {
                let c = scn.coord(m);
                let inside = c.x >= lo.x - tol && c.x <= hi.x + tol && c.y >= lo.y - tol && c.y <= hi.y + tol;
                inside as u16
            })
            .collect(),
    ))
}

pub fn singleton_policy(i: usize, n2: usize) -> RelayPolicy {
    RelayPolicy::singleton(i, n2)
}

/// Pr[X = x_j | X̂ = x_i] with the joint probabilities it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMatrix {
    n: usize,
    /// `joint[i*n + j]` = Pr[X̂ = x_i, X = x_j].
    joint: Vec<f64>,
    /// Pr[X̂ = x_i].
    pub support: Vec<f64>,
}

impl ConditionalMatrix {
    /// Builds from joint rows (believed point i, true point j).
    pub fn from_joint(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut joint = Vec::with_capacity(n * n);
        for r in &rows {
            if r.len() != n {
                return Err(Error::Dimension { what: "joint row length", expected: n, got: r.len() });
            }
            if r.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::domain("joint probabilities must be finite and >= 0"));
            }
            joint.extend_from_slice(r);
        }
        let support = rows.iter().map(|r| r.iter().sum()).collect();
        Ok(ConditionalMatrix { n, joint, support })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn joint(&self, i: usize, j: usize) -> f64 {
        self.joint[i * self.n + j]
    }

    pub fn joint_row(&self, i: usize) -> &[f64] {
        &self.joint[i * self.n..(i + 1) * self.n]
    }

    pub fn is_supported(&self, i: usize) -> bool {
        self.support[i] > SUPPORT_EPS
    }

    /// Conditional row, or `None` for an unsupported belief.
    pub fn row(&self, i: usize) -> Option<Vec<f64>> {
        self.is_supported(i).then(|| self.joint_row(i).iter().map(|v| v / self.support[i]).collect())
    }

    /// E[T(X) | X̂ = x_i] for a per-point table, `None` when unsupported.
    pub fn expect(&self, i: usize, t: &[f64]) -> Option<f64> {
        self.is_supported(i).then(|| self.joint_row(i).iter().zip(t).map(|(p, v)| p * v).sum::<f64>() / self.support[i])
    }

    /// Σ_{i,j} joint(i,j) · T_{π(i)}(j): mean throughput of a policy for a single mobile node.
    pub fn policy_throughput(&self, policy: &RelayPolicy, tables: &ThroughputTableSet) -> f64 {
        (0..self.n)
            .map(|i| {
                let opt = policy.decisions[i] as usize;
                self.joint_row(i).iter().enumerate().map(|(j, p)| p * tables.t(opt, j)).sum::<f64>()
            })
            .sum()
    }

    /// Scales every joint entry; argmax decisions must not change.
    pub fn scaled(&self, factor: f64) -> Self {
        ConditionalMatrix {
            n: self.n,
            joint: self.joint.iter().map(|v| v * factor).collect(),
            support: self.support.iter().map(|v| v * factor).collect(),
        }
    }

    /// Joint of a node with perfect, instantaneous reports.
    pub fn perfect(p_mob: &[f64]) -> Self {
        let n = p_mob.len();
        let mut joint = vec![0.0; n * n];
        for (i, p) in p_mob.iter().enumerate() {
            joint[i * n + i] = *p;
        }
        ConditionalMatrix { n, joint, support: p_mob.to_vec() }
    }

    /// Maximum row total-variation distance over rows supported in both.
    pub fn max_row_tv(&self, other: &ConditionalMatrix, rows: impl Iterator<Item = usize>) -> f64 {
        rows.filter_map(|i| Some((self.row(i)?, other.row(i)?)))
            .map(|(a, b)| 0.5 * a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Probes Pr[X | X̂] with one chain solve per believed grid point (in parallel).
pub fn conditional_matrix(mob: &MobilityModel, tmpl: &InfoForwardTemplate, err: &ErrorMatrix) -> Result<ConditionalMatrix> {
    let n = mob.n_points();
    if err.n() != n {
        return Err(Error::Dimension { what: "error matrix size", expected: n, got: err.n() });
    }
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let (w_r, w_d) = fold_policy(err, &RelayPolicy::singleton(i, n))?;
            let ss = solve_steady_state(&assemble(mob, tmpl, &w_r, &w_d)?)?;
            Ok(ss.r_view_mass(tmpl))
        })
        .collect::<Result<Vec<_>>>()?;
    ConditionalMatrix::from_joint(rows)
}

/// Per believed point, the option with the highest conditional mean throughput.
pub fn optimize_mobile_destination(c: &ConditionalMatrix, tables: &ThroughputTableSet) -> Result<RelayPolicy> {
    if c.n() != tables.n_points() {
        return Err(Error::Dimension { what: "conditional matrix size", expected: tables.n_points(), got: c.n() });
    }
    let k = tables.relays();
    let cols: Vec<&[f64]> = (0..=k).map(|n| if n == 0 { &tables.t_direct[..] } else { &tables.t_relay[n - 1][..] }).collect();
    Ok(RelayPolicy::new(
        (0..c.n())
            .map(|i| {
                if c.is_supported(i) {
                    // The joint row differs from the conditional one by a positive factor.
                    let row = c.joint_row(i);
                    argmax_option(|n| row.iter().zip(cols[n]).map(|(p, t)| p * t).sum(), k)
                } else {
                    argmax_option(|n| tables.t(n, i), k)
                }
            })
            .collect(),
    ))
}

/// Expected throughput per option and believed point: `gamma[r][i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputDecisionTables {
    pub gamma: Vec<Vec<f64>>,
}

impl ThroughputDecisionTables {
    /// Option for the believed grid points of relays 1..K (0-based indices).
    pub fn select(&self, beliefs: &[usize]) -> usize {
        assert_eq!(beliefs.len() + 1, self.gamma.len(), "one belief per relay");
        let direct = self.gamma[0][beliefs.first().copied().unwrap_or(0)];
        let mut best = 0;
        let mut best_v = direct;
        for (r, &b) in beliefs.iter().enumerate() {
            let v = self.gamma[r + 1][b];
            if v > best_v {
                best = r + 1;
                best_v = v;
            }
        }
        best
    }

    /// The decision a lone relay 1 would get at each believed point.
    pub fn single_relay_policy(&self) -> RelayPolicy {
        RelayPolicy::new((0..self.gamma[0].len()).map(|i| (self.gamma[1][i] > self.gamma[0][i]) as u16).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,m,gamma_mbps\n");
        for (r, g) in self.gamma.iter().enumerate() {
            for (m, v) in g.iter().enumerate() {
                let _ = writeln!(s, "{},{},{}", r, m + 1, v);
            }
        }
        s
    }
}

/// Decision tables for K mobile relays, one conditional matrix per relay.
pub fn optimize_mobile_relay(c_per_relay: &[ConditionalMatrix], tables: &ThroughputTableSet) -> Result<ThroughputDecisionTables> {
    if c_per_relay.len() != tables.relays() {
        return Err(Error::Dimension { what: "conditional matrices per relay", expected: tables.relays(), got: c_per_relay.len() });
    }
    let n = tables.n_points();
    let mut gamma = vec![tables.t_direct.clone()];
    for (r, c) in c_per_relay.iter().enumerate() {
        if c.n() != n {
            return Err(Error::Dimension { what: "conditional matrix size", expected: n, got: c.n() });
        }
        let t = &tables.t_relay[r];
        gamma.push((0..n).map(|i| c.expect(i, t).unwrap_or(t[i])).collect());
    }
    Ok(ThroughputDecisionTables { gamma })
}

/// Mean throughput when K independent mobile relays share one joint (X̂, X) law,
/// option r is picked by `argmax(scores[0], scores[r][b_r])` and yields `T_r` at
/// the relay's true position; direct throughput must not depend on position.
pub fn multi_relay_throughput(c: &ConditionalMatrix, scores: &[Vec<f64>], tables: &ThroughputTableSet) -> f64 {
    let k = tables.relays();
    assert_eq!(scores.len(), k + 1);
    let n = c.n();
    let direct = tables.t_direct[0];
    let s0 = scores[0][0];
    // Marginal law of each relay's belief.
    let w: Vec<f64> = c.support.iter().map(|s| s.max(0.0)).collect();
    let total: f64 = w.iter().sum();
    let w: Vec<f64> = w.iter().map(|v| v / total).collect();
    let gain: Vec<Vec<f64>> = (1..=k)
        .map(|r| {
            (0..n)
                .map(|i| {
                    let row = c.joint_row(i);
                    if c.support[i] > 0.0 {
                        row.iter().zip(&tables.t_relay[r - 1]).map(|(p, t)| p * t).sum::<f64>() / c.support[i]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    // Pr[score_k(b) < s] and Pr[score_k(b) <= s] for each relay k.
    let below = |kk: usize, s: f64, strict: bool| -> f64 {
        (0..n).filter(|&b| if strict { scores[kk][b] < s } else { scores[kk][b] <= s }).map(|b| w[b]).sum()
    };
    let mut total_tp = 0.0;
    let mut p_direct = 1.0;
    for kk in 1..=k {
        p_direct *= below(kk, s0, false);
    }
    total_tp += p_direct * direct;
    for r in 1..=k {
        for b in 0..n {
            let s = scores[r][b];
            if w[b] == 0.0 || !(s > s0) {
                continue;
            }
            let mut p = w[b];
            for kk in 1..=k {
                if kk == r {
                    continue;
                }
                // Lower relay indices win ties.
                p *= below(kk, s, kk < r);
            }
            total_tp += p * gain[r - 1][b];
        }
    }
    total_tp
}

/// Assigns consecutive IDs to policies in order of first appearance.
#[derive(Debug, Clone, Default)]
pub struct PolicyRegistry {
    ids: HashMap<RelayPolicy, usize>,
}

impl PolicyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry where the all-direct policy already holds ID 1.
    pub fn with_all_direct(n2: usize) -> Self {
        let mut r = Self::new();
        r.id(&RelayPolicy::all_direct(n2));
        r
    }

    pub fn id(&mut self, p: &RelayPolicy) -> usize {
        let next = self.ids.len() + 1;
        *self.ids.entry(p.clone()).or_insert(next)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn policy_id(registry: &mut PolicyRegistry, p: &RelayPolicy) -> usize {
    registry.id(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tabs(d: Vec<f64>, r: Vec<Vec<f64>>) -> ThroughputTableSet {
        ThroughputTableSet::new(d, r).unwrap()
    }

    #[test]
    fn standard_prefers_direct_on_ties() {
        let t = tabs(vec![1.0, 2.0, 3.0], vec![vec![1.0, 2.5, 3.0]]);
        assert_eq!(standard_policy(&t).decisions, vec![0, 1, 0]);
        let t = tabs(vec![1.0, 1.0], vec![vec![2.0, 3.0], vec![2.0, 4.0]]);
        assert_eq!(standard_policy(&t).decisions, vec![1, 2]);
        let t = tabs(vec![1.0; 3], vec![vec![0.0; 3]]);
        assert_eq!(standard_policy(&t), RelayPolicy::all_direct(3));
    }

    #[test]
    fn inverse_is_involution() {
        let p = RelayPolicy::new(vec![0, 1, 1, 0]);
        assert_eq!(p.inverse().unwrap().inverse().unwrap(), p);
        assert_eq!(RelayPolicy::all_direct(3).inverse().unwrap(), RelayPolicy::all_relay(3));
        assert!(RelayPolicy::new(vec![2, 0]).inverse().is_err());
    }

    #[test]
    fn singleton_shape() {
        let p = singleton_policy(0, 4);
        assert_eq!(p.decisions, vec![1, 0, 0, 0]);
        assert_eq!(p.decisions.iter().map(|&d| d as usize).sum::<usize>(), 1);
        assert_ne!(singleton_policy(1, 4), p);
    }

    #[test]
    fn heuristic_rectangle() {
        let g = GridScenario::new(3, 3, 1.0, Coord::new(1.0, 1.0), Coord::new(1.0, 1.0), Coord::new(3.0, 3.0)).unwrap();
        let one = heuristic_rect_policy(&g, Coord::new(2.0, 2.0), Coord::new(2.0, 2.0)).unwrap();
        assert_eq!(one, singleton_policy(4, 9));
        let all = heuristic_rect_policy(&g, Coord::new(1.0, 1.0), Coord::new(3.0, 3.0)).unwrap();
        assert_eq!(all, RelayPolicy::all_relay(9));
        assert!(heuristic_rect_policy(&g, Coord::new(0.0, 1.0), Coord::new(2.0, 2.0)).is_err());
    }

    #[test]
    fn registry_ids() {
        let mut r = PolicyRegistry::with_all_direct(3);
        assert_eq!(r.id(&RelayPolicy::all_direct(3)), 1);
        assert_eq!(r.id(&RelayPolicy::all_relay(3)), 2);
        assert_eq!(r.id(&RelayPolicy::all_relay(3)), 2);
        assert_eq!(r.id(&singleton_policy(1, 3)), 3);
    }

    #[test]
    fn policy_csv_round_trip() {
        let p = RelayPolicy::new(vec![0, 2, 1]);
        assert_eq!(RelayPolicy::parse_csv(&p.to_csv(), "p", 3, 2).unwrap(), p);
        assert!(RelayPolicy::parse_csv(&p.to_csv(), "p", 3, 1).is_err());
        assert!(RelayPolicy::parse_csv("m,decision\n1,0\n1,1\n", "p", 2, 1).is_err());
        assert!(RelayPolicy::parse_csv("m,decision\n1,0\n", "p", 2, 1).is_err());
    }

    #[test]
    fn identity_conditional_gives_standard() {
        let t = tabs(vec![2.0, 2.0, 2.0], vec![vec![1.0, 3.0, 2.0]]);
        let c = ConditionalMatrix::perfect(&[0.2, 0.5, 0.3]);
        assert_eq!(optimize_mobile_destination(&c, &t).unwrap(), standard_policy(&t));
        let g = optimize_mobile_relay(std::slice::from_ref(&c), &t).unwrap();
        assert_eq!(g.gamma[1], t.t_relay[0]);
        assert_eq!(g.single_relay_policy(), standard_policy(&t));
    }

    #[test]
    fn uninformative_beliefs_give_constant_policy() {
        let p = [0.2, 0.5, 0.3];
        let rows = (0..3).map(|_| p.iter().map(|v| v / 3.0).collect()).collect();
        let c = ConditionalMatrix::from_joint(rows).unwrap();
        let t = tabs(vec![2.0, 2.0, 2.0], vec![vec![1.0, 3.0, 2.0]]);
        // Relay mean 0.2 + 1.5 + 0.6 = 2.3 > 2.
        assert_eq!(optimize_mobile_destination(&c, &t).unwrap(), RelayPolicy::all_relay(3));
        assert_eq!(optimize_mobile_destination(&c.scaled(1e-6), &t).unwrap(), optimize_mobile_destination(&c, &t).unwrap());
    }

    #[test]
    fn unsupported_rows_fall_back_to_standard() {
        let rows = vec![vec![0.5, 0.5], vec![0.0, 0.0]];
        let c = ConditionalMatrix::from_joint(rows).unwrap();
        assert!(c.row(1).is_none());
        let t = tabs(vec![1.0, 1.0], vec![vec![0.0, 5.0]]);
        assert_eq!(optimize_mobile_destination(&c, &t).unwrap().decisions, vec![1, 1]);
    }

    #[test]
    fn two_relays_select_matches_joint_enumeration() {
        // 2x2 grid, two independent relays sharing the same joint law.
        let joint =
            vec![vec![0.20, 0.03, 0.02, 0.00], vec![0.04, 0.15, 0.01, 0.05], vec![0.01, 0.02, 0.18, 0.04], vec![0.00, 0.05, 0.03, 0.17]];
        let c = ConditionalMatrix::from_joint(joint.clone()).unwrap();
        let t = tabs(vec![1.0; 4], vec![vec![0.2, 2.5, 0.9, 1.8], vec![3.0, 0.1, 1.2, 0.4]]);
        let g = optimize_mobile_relay(&[c.clone(), c.clone()], &t).unwrap();
        // Brute force over (b1, x1, b2, x2).
        let mut brute = 0.0;
        for b1 in 0..4 {
            for b2 in 0..4 {
                let r = g.select(&[b1, b2]);
                for x1 in 0..4 {
                    for x2 in 0..4 {
                        let p = joint[b1][x1] * joint[b2][x2];
                        let tp = match r {
                            0 => 1.0,
                            1 => t.t_relay[0][x1],
                            _ => t.t_relay[1][x2],
                        };
                        brute += p * tp;
                    }
                }
            }
        }
        let fast = multi_relay_throughput(&c, &g.gamma, &t);
        assert!((brute - fast).abs() < 1e-12, "{brute} vs {fast}");
        // The gamma rule is the best among a few alternatives.
        let std_scores = vec![t.t_direct.clone(), t.t_relay[0].clone(), t.t_relay[1].clone()];
        assert!(multi_relay_throughput(&c, &std_scores, &t) <= fast + 1e-12);
    }
}

//! A scenario with all derived model parts, and policy evaluation on it.

use std::path::PathBuf;
use std::sync::OnceLock;

use crate::chain::{assemble, solve_steady_state, SteadyState};
use crate::error::{Error, Result};
use crate::info_forwarding::{build_template, InfoForwardTemplate};
use crate::location_error::{fold_policy, gaussian_error, ErrorMatrix};
use crate::metrics::{self, MetricReport};
use crate::mobility::{build_walled_grid, MobilityModel};
use crate::policy::{
    conditional_matrix, heuristic_rect_policy, multi_relay_throughput, optimize_mobile_destination, optimize_mobile_relay, standard_policy,
    ConditionalMatrix, RelayPolicy, ThroughputDecisionTables,
};
use crate::radio::{build_tables, ThroughputTableSet};
use crate::scenario::{load_throughput_map, MobilityRole, Scenario};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Standard,
    Inverse,
    Optimized,
    AlwaysDirect,
    AlwaysRelay,
    Heuristic,
    File(PathBuf),
}

impl PolicyKind {
    /// Accepts `standard`, `inverse`, `optimized`, `always-direct`, `always-relay`,
    /// `heuristic` (underscores also allowed) and `file:PATH`.
    pub fn parse(s: &str) -> Option<Self> {
        if let Some(p) = s.strip_prefix("file:") {
            return (!p.is_empty()).then(|| PolicyKind::File(PathBuf::from(p)));
        }
        Some(match s.replace('_', "-").as_str() {
            "standard" => PolicyKind::Standard,
            "inverse" => PolicyKind::Inverse,
            "optimized" => PolicyKind::Optimized,
            "always-direct" => PolicyKind::AlwaysDirect,
            "always-relay" => PolicyKind::AlwaysRelay,
            "heuristic" => PolicyKind::Heuristic,
            _ => return None,
        })
    }

    /// Name used in CSV output.
    pub fn name(&self) -> String {
        match self {
            PolicyKind::Standard => "standard".into(),
            PolicyKind::Inverse => "inverse".into(),
            PolicyKind::Optimized => "optimized".into(),
            PolicyKind::AlwaysDirect => "always_direct".into(),
            PolicyKind::AlwaysRelay => "always_relay".into(),
            PolicyKind::Heuristic => "heuristic".into(),
            PolicyKind::File(p) => format!("file:{}", p.display()),
        }
    }
}

/// Result of the optimiser: the per-point policy and the decision tables.
#[derive(Debug, Clone)]
pub struct Optimized {
    pub policy: RelayPolicy,
    pub tables: ThroughputDecisionTables,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub policy: RelayPolicy,
    pub report: MetricReport,
    /// Chain steady state when the view-based evaluation was used.
    pub steady: Option<SteadyState>,
}

#[derive(Debug)]
pub struct ScenarioModel {
    pub scenario: Scenario,
    pub mobility: MobilityModel,
    pub template: InfoForwardTemplate,
    pub error: ErrorMatrix,
    pub tables: ThroughputTableSet,
    conditional: OnceLock<ConditionalMatrix>,
}

impl ScenarioModel {
    /// Builds every model part; tables come from the map file when one is configured.
    pub fn build(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let tables = match &scenario.throughput_map {
            Some(path) => {
                let t = load_throughput_map(path, &scenario.grid)?;
                if t.relays() != scenario.relay_count() {
                    return Err(Error::Invalid {
                        source_name: path.display().to_string(),
                        field: "relay columns".into(),
                        line: 1,
                        msg: format!("map has {} relay columns, scenario has {} relays", t.relays(), scenario.relay_count()),
                    });
                }
                t
            }
            None => build_tables(&scenario.grid, &scenario.radio, scenario.relay_count())?,
        };
        Self::with_tables(scenario, tables)
    }

    /// Builds with explicit throughput tables, ignoring radio and map settings.
    pub fn with_tables(scenario: Scenario, tables: ThroughputTableSet) -> Result<Self> {
        scenario.validate()?;
        let g = &scenario.grid;
        if tables.n_points() != g.n_points() {
            return Err(Error::Dimension { what: "throughput table length", expected: g.n_points(), got: tables.n_points() });
        }
        let mobility = build_walled_grid(g, scenario.mobility.speed_mps)?;
        let u = &scenario.updates;
        let template = build_template(u.queue_size, u.tau_hz, u.mu_hz, u.p_loss)?;
        let error = gaussian_error(g, scenario.location_error.sigma_m, scenario.location_error.bias)?;
        Ok(ScenarioModel { scenario, mobility, template, error, tables, conditional: OnceLock::new() })
    }

    pub fn n_points(&self) -> usize {
        self.mobility.n_points()
    }

    pub fn n_states(&self) -> usize {
        self.n_points() * self.template.len()
    }

    fn multi_mobile_relays(&self) -> bool {
        self.scenario.grid.mobility_role == MobilityRole::MobileRelay && self.tables.relays() > 1
    }

    /// Joint law of (believed, true) position, computed once and cached.
    pub fn conditional(&self) -> Result<&ConditionalMatrix> {
        if let Some(c) = self.conditional.get() {
            return Ok(c);
        }
        let c = conditional_matrix(&self.mobility, &self.template, &self.error)?;
        Ok(self.conditional.get_or_init(|| c))
    }

    pub fn optimize(&self) -> Result<Optimized> {
        let c = self.conditional()?;
        match self.scenario.grid.mobility_role {
            MobilityRole::MobileRelay => {
                let per_relay = vec![c.clone(); self.tables.relays()];
                let tables = optimize_mobile_relay(&per_relay, &self.tables)?;
                let policy =
                    if self.tables.relays() == 1 { optimize_mobile_destination(c, &self.tables)? } else { tables.single_relay_policy() };
                Ok(Optimized { policy, tables })
            }
            MobilityRole::MobileDestination => {
                let policy = optimize_mobile_destination(c, &self.tables)?;
                let gamma = (0..=self.tables.relays())
                    .map(|r| {
                        let t = if r == 0 { &self.tables.t_direct } else { &self.tables.t_relay[r - 1] };
                        (0..self.n_points()).map(|i| c.expect(i, t).unwrap_or(t[i])).collect()
                    })
                    .collect();
                Ok(Optimized { policy, tables: ThroughputDecisionTables { gamma } })
            }
        }
    }

    pub fn policy(&self, kind: &PolicyKind) -> Result<RelayPolicy> {
        let n = self.n_points();
        match kind {
            PolicyKind::Standard => Ok(standard_policy(&self.tables)),
            PolicyKind::Inverse => standard_policy(&self.tables).inverse(),
            PolicyKind::Optimized => Ok(self.optimize()?.policy),
            PolicyKind::AlwaysDirect => Ok(RelayPolicy::all_direct(n)),
            PolicyKind::AlwaysRelay => Ok(RelayPolicy::all_relay(n)),
            PolicyKind::Heuristic => {
                let h = self
                    .scenario
                    .heuristic
                    .as_ref()
                    .ok_or_else(|| Error::domain("heuristic policy requested but the scenario defines no [policy] rectangle"))?;
                heuristic_rect_policy(&self.scenario.grid, h.corner_lo, h.corner_hi)
            }
            PolicyKind::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                RelayPolicy::parse_csv(&text, &path.display().to_string(), n, self.tables.relays())
            }
        }
    }

    /// s_loc of a single-relay policy through the chain's AP-view states.
    pub fn s_loc_chain(&self, policy: &RelayPolicy) -> Result<(f64, SteadyState)> {
        let (w_r, w_d) = fold_policy(&self.error, policy)?;
        let ss = solve_steady_state(&assemble(&self.mobility, &self.template, &w_r, &w_d)?)?;
        let s = metrics::s_loc(&ss, &self.tables, &self.template)?;
        Ok((s, ss))
    }

    /// Metrics for an explicit per-point policy.
    pub fn evaluate_policy(&self, policy: &RelayPolicy) -> Result<Evaluation> {
        if policy.len() != self.n_points() {
            return Err(Error::Dimension { what: "policy length", expected: self.n_points(), got: policy.len() });
        }
        if policy.max_option() as usize > self.tables.relays() {
            return Err(Error::domain(format!("policy uses relay {} but only {} exist", policy.max_option(), self.tables.relays())));
        }
        let p_mob = &self.mobility.p_mob;
        let ideal_pi = metrics::s_ideal_policy(p_mob, &self.tables, policy);
        let (s_loc, steady) = if self.tables.relays() == 1 {
            let (s, ss) = self.s_loc_chain(policy)?;
            (s, Some(ss))
        } else if self.multi_mobile_relays() {
            return Err(Error::Unsupported(
                "a per-point policy does not define selection among several mobile relays; use a policy kind".into(),
            ));
        } else {
            (self.conditional()?.policy_throughput(policy, &self.tables), None)
        };
        Ok(Evaluation { policy: policy.clone(), report: MetricReport::new(p_mob, &self.tables, policy, s_loc, ideal_pi), steady })
    }

    pub fn evaluate(&self, kind: &PolicyKind) -> Result<Evaluation> {
        if !self.multi_mobile_relays() {
            return self.evaluate_policy(&self.policy(kind)?);
        }
        // Several mobile relays: selection compares per-relay scores of the believed positions.
        let p_mob = &self.mobility.p_mob;
        let n = self.n_points();
        let t = &self.tables;
        let fixed = |opt: usize| {
            let s = metrics::s_fixed(p_mob, t, opt);
            let policy = RelayPolicy::fixed(n, opt as u16);
            Ok(Evaluation { report: MetricReport::new(p_mob, t, &policy, s, s), policy, steady: None })
        };
        let (scores, policy) = match kind {
            PolicyKind::AlwaysDirect => return fixed(0),
            PolicyKind::AlwaysRelay => return fixed(1),
            PolicyKind::Standard => {
                let mut s = vec![t.t_direct.clone()];
                s.extend(t.t_relay.iter().cloned());
                let policy = RelayPolicy::new((0..n).map(|m| (t.t_relay[0][m] > t.t_direct[m]) as u16).collect());
                (s, policy)
            }
            PolicyKind::Optimized => {
                let o = self.optimize()?;
                (o.tables.gamma, o.policy)
            }
            other => return Err(Error::Unsupported(format!("policy {} is not defined for several mobile relays", other.name()))),
        };
        let s_loc = multi_relay_throughput(self.conditional()?, &scores, t);
        let ideal_pi = multi_relay_throughput(&ConditionalMatrix::perfect(p_mob), &scores, t);
        Ok(Evaluation { report: MetricReport::new(p_mob, t, &policy, s_loc, ideal_pi), policy, steady: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_kind_names() {
        for s in ["standard", "inverse", "optimized", "always-direct", "always-relay", "heuristic"] {
            let k = PolicyKind::parse(s).unwrap();
            assert_eq!(PolicyKind::parse(&k.name()), Some(k));
        }
        assert_eq!(PolicyKind::parse("file:a.csv"), Some(PolicyKind::File("a.csv".into())));
        assert_eq!(PolicyKind::parse("file:"), None);
        assert_eq!(PolicyKind::parse("best"), None);
    }
}

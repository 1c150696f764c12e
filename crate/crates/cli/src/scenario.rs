//! Scenario files: JSON description of a channel, a scheme and what to run on it.

use std::collections::BTreeMap;

use relaystab_core::optimizer::{default_w_grid, log_ratio_weights, OptimizerOptions, RegionSweepConfig};
use relaystab_core::simulator::{DEFAULT_BLOCKS, DEFAULT_HORIZON, DEFAULT_WARMUP};
use relaystab_core::{ChannelVariances, DemandVector, LinkProbabilities, PhyParams, Policy, Scheme};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub power: f64,
    pub rate: f64,
    /// `"s1-d"`, `"s1-r"`, `"r-d"`, ...
    pub variances: BTreeMap<String, f64>,
}

impl ChannelSpec {
    pub fn links(&self) -> CliResult<LinkProbabilities<f64>> {
        let phy = PhyParams::new(self.power, self.rate)?;
        let var = ChannelVariances::from_keyed(self.variances.iter().map(|(k, &v)| (k.as_str(), v)))?;
        Ok(LinkProbabilities::compute(&phy, &var)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub w: Vec<f64>,
    /// Omitted for CCMA.
    #[serde(default)]
    pub action: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSpec {
    pub w: Vec<f64>,
    pub weights: Vec<f64>,
    /// Also run the grid oracle (two sources at most).
    #[serde(default)]
    pub oracle: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    #[serde(default)]
    pub w_grid: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub weights: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub oracle: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub region: Option<RegionSpec>,
    /// Demand vectors at which delays are predicted (and simulated when `sim` is set).
    #[serde(default)]
    pub demand_grid: Option<Vec<Vec<f64>>>,
}

fn default_horizon() -> u64 {
    DEFAULT_HORIZON
}

fn default_warmup() -> u64 {
    DEFAULT_WARMUP
}

fn default_blocks() -> usize {
    DEFAULT_BLOCKS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_warmup")]
    pub warmup: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dominant_mode: bool,
    /// One-based source indices.
    #[serde(default)]
    pub saturated: Vec<usize>,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub channel: ChannelSpec,
    pub scheme: Scheme,
    #[serde(default)]
    pub policy: Option<PolicySpec>,
    #[serde(default)]
    pub optimize: Option<OptimizeSpec>,
    #[serde(default)]
    pub demand: Option<Vec<f64>>,
    #[serde(default)]
    pub sweeps: SweepSpec,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
    #[serde(default)]
    pub sim: Option<SimSpec>,
}

/// A scenario after its channel has been evaluated and its references checked.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub scenario: Scenario,
    pub links: LinkProbabilities<f64>,
}

impl Resolved {
    pub fn num_sources(&self) -> usize {
        self.links.num_sources()
    }

    pub fn demand(&self) -> CliResult<DemandVector<f64>> {
        match &self.scenario.demand {
            Some(d) => Ok(DemandVector::new(d.clone())?),
            None => Ok(DemandVector::zeros(self.num_sources())),
        }
    }

    /// The fixed policy, when the scenario gives one.
    pub fn fixed_policy(&self) -> CliResult<Option<Policy<f64>>> {
        let Some(p) = &self.scenario.policy else { return Ok(None) };
        let scheme = self.scenario.scheme;
        let policy = match (scheme, &p.action) {
            (Scheme::Ccma, None) => Policy::ccma(&self.links, p.w.clone())?,
            (Scheme::Ccma, Some(_)) => {
                return Err(CliError::Validation("policy.action must be omitted for CCMA".into()));
            }
            (_, Some(a)) => Policy::new(scheme, a.clone(), p.w.clone())?,
            (_, None) => Policy::idle_only(scheme, &self.links, p.w.clone())?,
        };
        Ok(Some(policy))
    }

    pub fn region_config(&self) -> Option<RegionSweepConfig> {
        self.scenario.sweeps.region.as_ref().map(|r| RegionSweepConfig {
            w_grid: r.w_grid.clone().unwrap_or_else(default_w_grid),
            weights: r.weights.clone().unwrap_or_else(|| log_ratio_weights(21, 3.0)),
            oracle: r.oracle,
            options: self.scenario.optimizer,
        })
    }
}

/// Parses scenario JSON. Errors carry the line and column of the offending token.
pub fn parse(text: &str, origin: &str) -> CliResult<Scenario> {
    serde_json::from_str(text)
        .map_err(|e| CliError::Validation(format!("{origin}:{}:{}: {e}", e.line(), e.column())))
}

fn check_len(what: &str, v: &[f64], m: usize) -> CliResult<()> {
    if v.len() != m {
        return Err(CliError::Validation(format!("{what} has {} entries, channel has {m} sources", v.len())));
    }
    Ok(())
}

/// Validates cross references and evaluates the channel.
pub fn resolve(scenario: Scenario) -> CliResult<Resolved> {
    let links = scenario.channel.links()?;
    let m = links.num_sources();
    match (&scenario.policy, &scenario.optimize) {
        (Some(_), Some(_)) => {
            return Err(CliError::Validation("give either `policy` or `optimize`, not both".into()));
        }
        (None, None) => return Err(CliError::Validation("one of `policy` or `optimize` is required".into())),
        _ => {}
    }
    if let Some(o) = &scenario.optimize {
        check_len("optimize.w", &o.w, m)?;
        check_len("optimize.weights", &o.weights, m)?;
        if o.weights.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(CliError::Validation("optimize.weights must lie in [0, 1]".into()));
        }
        if o.oracle && m > 2 {
            return Err(CliError::Validation(format!("grid oracle supports at most 2 sources, scenario has {m}")));
        }
    }
    if let Some(d) = &scenario.demand {
        check_len("demand", d, m)?;
    }
    if let Some(grid) = &scenario.sweeps.demand_grid {
        for d in grid {
            check_len("demand_grid entry", d, m)?;
            DemandVector::new(d.clone())?;
        }
    }
    if let Some(sim) = &scenario.sim {
        if let Some(&s) = sim.saturated.iter().find(|&&s| s == 0 || s > m) {
            return Err(CliError::Validation(format!("sim.saturated index {s} outside 1..={m}")));
        }
    }
    scenario.optimizer.validate()?;
    let out = Resolved { scenario, links };
    out.fixed_policy()?;
    if let Some(r) = out.region_config() {
        r.validate(m)?;
    }
    out.demand()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "t",
        "channel": {"power": 10, "rate": 1, "variances": {"s1-d": 0.5, "s1-r": 0.9, "r-d": 0.8}},
        "scheme": "SBC",
        "policy": {"w": [1.0], "action": [[0.2]]}
    }"#;

    #[test]
    fn minimal_resolves() {
        let r = resolve(parse(MINIMAL, "t.json").unwrap()).unwrap();
        assert_eq!(r.num_sources(), 1);
        assert!(r.fixed_policy().unwrap().is_some());
    }

    #[test]
    fn parse_error_has_position() {
        let e = parse("{\n  \"name\": 3\n}", "bad.json").unwrap_err();
        assert!(e.to_string().starts_with("bad.json:2:"), "{e}");
    }

    #[test]
    fn malformed_key_is_named() {
        let text = MINIMAL.replace("\"s1-r\"", "\"s1-x\"");
        let e = resolve(parse(&text, "t.json").unwrap()).unwrap_err();
        assert!(e.to_string().contains("s1-x"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn policy_and_optimize_are_exclusive() {
        let text = MINIMAL.replace(
            "\"policy\": {\"w\": [1.0], \"action\": [[0.2]]}",
            "\"policy\": {\"w\": [1.0], \"action\": [[0.2]]}, \"optimize\": {\"w\": [1.0], \"weights\": [1.0]}",
        );
        assert!(resolve(parse(&text, "t.json").unwrap()).is_err());
    }
}

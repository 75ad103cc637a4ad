use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{DdqnConfig, QTableConfig};
use crate::error::{Error, Result};
use crate::policy::Portfolio;
use crate::portfolio::{binomial, make_portfolio, search_optimal_portfolio, FamilyKind};
use crate::sim::Backend;

/// Largest number of candidate portfolios searched when a config asks for
/// the optimal family.
pub const DEFAULT_SEARCH_CAP: u128 = 200_000_000;

/// A named family of size `k`, or explicit radii.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<usize>>,
}

impl PortfolioSpec {
    pub fn family(kind: FamilyKind, k: usize) -> Self {
        PortfolioSpec {
            family: Some(kind),
            k: Some(k),
            radii: None,
        }
    }

    pub fn explicit(radii: Vec<usize>) -> Self {
        PortfolioSpec {
            family: None,
            k: None,
            radii: Some(radii),
        }
    }

    pub fn resolve(&self, n: usize, jobs: usize) -> Result<Portfolio> {
        match (&self.family, self.k, &self.radii) {
            (None, None, Some(radii)) => Portfolio::new(n, radii.clone()),
            (Some(FamilyKind::Optimal), Some(k), None) => {
                if !FamilyKind::Optimal.defined(k, n) {
                    return Err(Error::FamilyUndefined {
                        family: FamilyKind::Optimal.name().into(),
                        k,
                        n,
                    });
                }
                let count = binomial(n as u64 - 1, k as u64 - 1);
                if count > DEFAULT_SEARCH_CAP {
                    return Err(Error::EnumerationTooLarge {
                        count,
                        cap: DEFAULT_SEARCH_CAP,
                    });
                }
                Ok(search_optimal_portfolio(k, n, jobs)?.0)
            }
            (Some(kind), Some(k), None) => make_portfolio(*kind, k, n),
            _ => Err(Error::invalid(
                "a portfolio is given either by `family` and `k` or by `radii`",
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentConfig {
    Tabular(QTableConfig),
    Ddqn(DdqnConfig),
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig::Ddqn(DdqnConfig::default())
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            AgentConfig::Tabular(c) => c.validate(),
            AgentConfig::Ddqn(c) => c.validate(),
        }
    }
}

fn default_eval_period() -> u64 {
    2000
}

fn default_eval_runs() -> usize {
    50
}

fn default_final_runs() -> usize {
    2000
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_tau() -> f64 {
    0.0025
}

fn default_checkpoint_period() -> u64 {
    100_000
}

/// One training experiment, read from and written to TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub portfolio: PortfolioSpec,
    #[serde(default)]
    pub agent: AgentConfig,
    /// Environment steps; defaults to 10^6 for `n <= 50` and 1.4 * 10^6 above.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    #[serde(default = "default_eval_period")]
    pub eval_period: u64,
    #[serde(default = "default_eval_runs")]
    pub eval_runs: usize,
    #[serde(default = "default_final_runs")]
    pub final_runs: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Hit threshold in units of the optimal runtime's standard deviation.
    #[serde(default = "default_tau")]
    pub hit_tau: f64,
    /// Use a sampled standard deviation of the optimal policy instead of the exact one.
    #[serde(default)]
    pub empirical_optimal_std: bool,
    #[serde(default)]
    pub backend: Backend,
    /// Episode step limit; defaults to `ceil(0.8 n^2)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<u64>,
    /// Write a resumable checkpoint every this many steps (0 disables).
    #[serde(default = "default_checkpoint_period")]
    pub checkpoint_period: u64,
}

impl ExperimentConfig {
    pub fn new(n: usize, portfolio: PortfolioSpec, agent: AgentConfig) -> Self {
        ExperimentConfig {
            n,
            portfolio,
            agent,
            budget: None,
            eval_period: default_eval_period(),
            eval_runs: default_eval_runs(),
            final_runs: default_final_runs(),
            seeds: default_seeds(),
            hit_tau: default_tau(),
            empirical_optimal_std: false,
            backend: Backend::default(),
            cutoff: None,
            checkpoint_period: default_checkpoint_period(),
        }
    }

    pub fn budget(&self) -> u64 {
        self.budget.unwrap_or(if self.n <= 50 { 1_000_000 } else { 1_400_000 })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n must be positive"));
        }
        if self.eval_period == 0 || self.eval_runs == 0 || self.final_runs == 0 {
            return Err(Error::invalid("evaluation period and run counts must be positive"));
        }
        let budget = self.budget();
        if budget != 0 && budget < self.eval_period {
            return Err(Error::invalid(format!(
                "budget {budget} is shorter than the evaluation period {}",
                self.eval_period
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        if !(self.hit_tau >= 0.0 && self.hit_tau.is_finite()) {
            return Err(Error::invalid("hit_tau must be a finite non-negative number"));
        }
        if self.cutoff == Some(0) {
            return Err(Error::invalid("cutoff must be positive"));
        }
        self.agent.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut c = ExperimentConfig::new(
            50,
            PortfolioSpec::family(FamilyKind::EvenlySpread, 3),
            AgentConfig::default(),
        );
        c.seeds = vec![1, 2, 3];
        c.cutoff = Some(1234);
        let text = c.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn minimal_toml_uses_defaults() {
        let text = "n = 20\n[portfolio]\nradii = [1, 2, 6]\n[agent]\nkind = \"tabular\"\nalpha = 0.3\n";
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(c.budget(), 1_000_000);
        assert_eq!(c.eval_period, 2000);
        assert_eq!(c.eval_runs, 50);
        assert_eq!(c.final_runs, 2000);
        match &c.agent {
            AgentConfig::Tabular(t) => assert_eq!(t.alpha, 0.3),
            other => panic!("unexpected agent {other:?}"),
        }
        assert_eq!(c.portfolio.resolve(20, 1).unwrap().radii(), &[1, 2, 6]);
        let big = ExperimentConfig { n: 100, ..c };
        assert_eq!(big.budget(), 1_400_000);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml_str("n = 20\n[portfolio]\nradii = [1]\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml_str("n = 20\nbudget = 10\n[portfolio]\nradii = [1]\n").is_err());
        assert!(ExperimentConfig::from_toml_str("n = 20\nbudget = 0\n[portfolio]\nradii = [1]\n").is_ok());
        let spec = PortfolioSpec {
            family: Some(FamilyKind::PowersOf2),
            k: None,
            radii: None,
        };
        assert!(spec.resolve(50, 1).is_err());
    }

    #[test]
    fn family_names_in_toml() {
        let text = "n = 50\n[portfolio]\nfamily = \"powers_of_2\"\nk = 3\n";
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(c.portfolio.resolve(50, 1).unwrap().radii(), &[1, 2, 4]);
        let opt = PortfolioSpec::family(FamilyKind::Optimal, 3);
        assert_eq!(opt.resolve(50, 1).unwrap().radii(), &[1, 2, 6]);
    }
}

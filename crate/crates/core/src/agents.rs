//! Stochastic population: who provides, who requests, and how likely each
//! account is to act in a given period.

use std::collections::BTreeSet;
use std::fmt;
use std::io;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{Address, Period};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("invalid population config: {0}")]
    BadConfig(String),
    #[error("{0} is not a requester")]
    NotRequester(Address),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Provider,
    Requester,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Provider => "provider",
            Role::Requester => "requester",
        })
    }
}

/// How raw normal draws are mapped into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Normalization {
    /// `(x - min) / (max - min)` over the whole sample.
    #[default]
    MinMax,
    /// `clamp(x - mu + 0.5, 0, 1)`.
    Clamp,
    /// `clamp(0.5 + (x - mu) / (6 sigma), 0, 1)`: ±3σ spans the unit interval.
    AffineSigma,
}

impl FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min-max" | "minmax" => Ok(Normalization::MinMax),
            "clamp" => Ok(Normalization::Clamp),
            "affine-sigma" => Ok(Normalization::AffineSigma),
            _ => Err(format!("unknown normalization `{s}`")),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::MinMax => "min-max",
            Normalization::Clamp => "clamp",
            Normalization::AffineSigma => "affine-sigma",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub n_accounts: usize,
    pub mu: f64,
    pub sigma: f64,
    pub decay: f64,
    pub max_providers: usize,
    pub provider_prob_min: f64,
    pub provider_prob_max: f64,
    pub update_multiplier: f64,
    pub normalization: Normalization,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            n_accounts: 1000,
            mu: 0.0,
            sigma: 0.1,
            decay: 0.75,
            max_providers: 1,
            provider_prob_min: 0.01,
            provider_prob_max: 0.05,
            update_multiplier: 5.0,
            normalization: Normalization::MinMax,
        }
    }
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |msg: String| Err(AgentError::BadConfig(msg));
        if self.n_accounts <= self.max_providers {
            return bad(format!(
                "accounts ({}) must exceed max providers ({})",
                self.n_accounts, self.max_providers
            ));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !self.mu.is_finite() {
            return bad("mu must be finite".into());
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return bad(format!("decay must lie in (0, 1), got {}", self.decay));
        }
        if !(0.0..=1.0).contains(&self.provider_prob_min)
            || !(0.0..=1.0).contains(&self.provider_prob_max)
            || self.provider_prob_min > self.provider_prob_max
        {
            return bad(format!(
                "provider probabilities need 0 <= min <= max <= 1, got [{}, {}]",
                self.provider_prob_min, self.provider_prob_max
            ));
        }
        if !(self.update_multiplier >= 0.0 && self.update_multiplier.is_finite()) {
            return bad(format!(
                "update multiplier must be non-negative, got {}",
                self.update_multiplier
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub address: Address,
    pub role: Role,
    /// Publish probability for providers, request probability for requesters.
    pub base_prob: f64,
    pub current_prob: f64,
    pub renewals: u32,
    pub last_action_period: Option<Period>,
    pub datasets_held: BTreeSet<Address>,
}

impl AgentProfile {
    pub fn new(address: Address, role: Role, base_prob: f64) -> Self {
        AgentProfile {
            address,
            role,
            base_prob,
            current_prob: base_prob,
            renewals: 0,
            last_action_period: None,
            datasets_held: BTreeSet::new(),
        }
    }

    /// Per-period update probability of a provider with a published dataset.
    pub fn update_prob(&self, multiplier: f64) -> f64 {
        (self.base_prob * multiplier).min(1.0)
    }

    /// Called after each renewal: `current = base * decay^renewals`.
    pub fn decay_renewal_prob(&mut self, decay: f64) -> Result<(), AgentError> {
        if self.role != Role::Requester {
            return Err(AgentError::NotRequester(self.address));
        }
        self.renewals += 1;
        self.current_prob = self.base_prob * decay.powi(self.renewals as i32);
        Ok(())
    }
}

fn normalize(samples: &[f64], cfg: &PopulationConfig) -> Vec<f64> {
    match cfg.normalization {
        Normalization::MinMax => {
            let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
            let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = max - min;
            samples
                .iter()
                .map(|x| if span > 0.0 { (x - min) / span } else { 0.5 })
                .collect()
        }
        Normalization::Clamp => samples
            .iter()
            .map(|x| (x - cfg.mu + 0.5).clamp(0.0, 1.0))
            .collect(),
        Normalization::AffineSigma => samples
            .iter()
            .map(|x| (0.5 + (x - cfg.mu) / (6.0 * cfg.sigma)).clamp(0.0, 1.0))
            .collect(),
    }
}

/// Draws the population for `accounts` (one profile per account, same order).
///
/// Draw order: one `Normal(mu, sigma)` sample per account, then one
/// `Uniform(min, max)` sample per provider. The first `max_providers`
/// accounts become providers; their uniform draw replaces the normalized one.
pub fn generate_population<R: Rng + ?Sized>(
    cfg: &PopulationConfig,
    accounts: &[Address],
    rng: &mut R,
) -> Result<Vec<AgentProfile>, AgentError> {
    cfg.validate()?;
    if accounts.len() != cfg.n_accounts {
        return Err(AgentError::BadConfig(format!(
            "expected {} accounts, got {}",
            cfg.n_accounts,
            accounts.len()
        )));
    }
    let normal =
        Normal::new(cfg.mu, cfg.sigma).map_err(|e| AgentError::BadConfig(e.to_string()))?;
    let raw: Vec<f64> = (0..cfg.n_accounts).map(|_| normal.sample(rng)).collect();
    let probs = normalize(&raw, cfg);

    let provider_dist = Uniform::new_inclusive(cfg.provider_prob_min, cfg.provider_prob_max)
        .map_err(|e| AgentError::BadConfig(e.to_string()))?;
    let mut out = Vec::with_capacity(cfg.n_accounts);
    for (i, (&addr, &p)) in accounts.iter().zip(&probs).enumerate() {
        if i < cfg.max_providers {
            out.push(AgentProfile::new(
                addr,
                Role::Provider,
                provider_dist.sample(rng),
            ));
        } else {
            out.push(AgentProfile::new(addr, Role::Requester, p));
        }
    }
    Ok(out)
}

/// Population dump: `address,role,baseProb`.
pub fn write_population_csv<W: io::Write>(population: &[AgentProfile], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["address", "role", "baseProb"])?;
    for a in population {
        w.write_record([
            a.address.to_string(),
            a.role.to_string(),
            a.base_prob.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn accounts(n: usize) -> Vec<Address> {
        (1..=n as u64).map(Address::from_id).collect()
    }

    fn population(seed: u64) -> Vec<AgentProfile> {
        let cfg = PopulationConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        generate_population(&cfg, &accounts(cfg.n_accounts), &mut rng).unwrap()
    }

    #[test]
    fn defaults_have_mean_near_half() {
        // a single seed swings with its extremes, so pool twenty
        let reqs: Vec<f64> = (0..20)
            .flat_map(population)
            .filter(|a| a.role == Role::Requester)
            .map(|a| a.base_prob)
            .collect();
        let mean = reqs.iter().sum::<f64>() / reqs.len() as f64;
        assert!((mean - 0.5).abs() <= 0.02, "mean {mean}");
    }

    #[test]
    fn min_max_spans_unit_interval() {
        let cfg = PopulationConfig::default();
        let raw = [-0.3, 0.1, 0.2, 0.05];
        let p = normalize(&raw, &cfg);
        assert_eq!(p.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(p.iter().copied().fold(f64::NEG_INFINITY, f64::max), 1.0);
    }

    #[test]
    fn providers_first_and_bounded() {
        let cfg = PopulationConfig {
            max_providers: 10,
            ..Default::default()
        };
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pop = generate_population(&cfg, &accounts(1000), &mut rng).unwrap();
            assert_eq!(pop.len(), 1000);
            for (i, a) in pop.iter().enumerate() {
                if i < 10 {
                    assert_eq!(a.role, Role::Provider);
                    assert!((0.01..=0.05).contains(&a.base_prob));
                } else {
                    assert_eq!(a.role, Role::Requester);
                    assert!((0.0..=1.0).contains(&a.base_prob));
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(population(42), population(42));
        assert_ne!(population(42), population(43));
    }

    #[test]
    fn decay_fifteen_renewals() {
        let mut a = AgentProfile::new(Address::from_id(2), Role::Requester, 0.5);
        for _ in 0..15 {
            a.decay_renewal_prob(0.75).unwrap();
        }
        assert!((a.current_prob - 0.5 * 0.75f64.powi(15)).abs() < 1e-12);
        assert!((a.current_prob * 100.0 - 0.668).abs() < 5e-4);
    }

    #[test]
    fn decay_identity_and_zero_base() {
        let a = AgentProfile::new(Address::from_id(2), Role::Requester, 0.3);
        assert_eq!(a.current_prob, a.base_prob);
        let mut z = AgentProfile::new(Address::from_id(3), Role::Requester, 0.0);
        for _ in 0..5 {
            z.decay_renewal_prob(0.75).unwrap();
        }
        assert_eq!(z.current_prob, 0.0);
    }

    #[test]
    fn decay_strictly_decreases() {
        let mut a = AgentProfile::new(Address::from_id(2), Role::Requester, 0.9);
        let mut prev = a.current_prob;
        for _ in 0..30 {
            a.decay_renewal_prob(0.75).unwrap();
            assert!(a.current_prob < prev);
            prev = a.current_prob;
        }
    }

    #[test]
    fn providers_do_not_decay() {
        let mut p = AgentProfile::new(Address::from_id(1), Role::Provider, 0.03);
        assert_eq!(
            p.decay_renewal_prob(0.75),
            Err(AgentError::NotRequester(Address::from_id(1)))
        );
        assert!((p.update_prob(5.0) - 0.15).abs() < 1e-12);
        assert_eq!(
            AgentProfile::new(Address::from_id(1), Role::Provider, 0.5).update_prob(5.0),
            1.0
        );
    }

    #[test]
    fn bad_configs() {
        let base = PopulationConfig::default();
        let cases = [
            PopulationConfig {
                n_accounts: 1,
                ..base.clone()
            },
            PopulationConfig {
                sigma: 0.0,
                ..base.clone()
            },
            PopulationConfig {
                decay: 1.0,
                ..base.clone()
            },
            PopulationConfig {
                decay: 0.0,
                ..base.clone()
            },
            PopulationConfig {
                provider_prob_min: 0.2,
                provider_prob_max: 0.1,
                ..base.clone()
            },
        ];
        for cfg in cases {
            assert!(
                matches!(cfg.validate(), Err(AgentError::BadConfig(_))),
                "{cfg:?}"
            );
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(generate_population(&base, &accounts(10), &mut rng).is_err());
    }

    #[test]
    fn other_normalizations_stay_in_range() {
        for normalization in [Normalization::Clamp, Normalization::AffineSigma] {
            let cfg = PopulationConfig {
                normalization,
                ..Default::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let pop = generate_population(&cfg, &accounts(1000), &mut rng).unwrap();
            let reqs: Vec<f64> = pop[1..].iter().map(|a| a.base_prob).collect();
            assert!(reqs.iter().all(|p| (0.0..=1.0).contains(p)));
            let mean = reqs.iter().sum::<f64>() / reqs.len() as f64;
            assert!((mean - 0.5).abs() < 0.03);
        }
    }
}

//! The period loop.
//!
//! Each period checks, in order: publish, update, request, renew. The run
//! stops as soon as `action_ticker` actions have happened, possibly in the
//! middle of a period.
//!
//! All randomness comes from one `ChaCha8Rng` seeded with `seed`. Draw order:
//! population (see [`generate_population`]), then per period
//!
//! 1. the publish roll of the provider in line (skipped for the forced
//!    first publication in period 0),
//! 2. one update roll per published provider, in publication order,
//!    starting the period after publication,
//! 3. the request roll of the requester in line, followed by a dataset pick
//!    if the roll succeeds,
//! 4. one renew roll per eligible token, in token-id order.
//!
//! Rolls never depend on money, so runs that differ only in scenario,
//! margin or fractions take exactly the same actions.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{generate_population, AgentError, AgentProfile, PopulationConfig, Role};
use crate::chain::{
    Address, ChainState, Function, Gas, GasSchedule, Period, PriceModel, TxReceipt, Wei,
    WEI_PER_ETH,
};
use crate::dataset::{ContractSnapshot, DatasetContract, DatasetTerms, Scenario};
use crate::market::{Event, MarketError, Marketplace};
use crate::registry::{LicenseType, Registry};
use crate::token::{AccessToken, PaymentKind, TokenId};

/// License every simulated requester holds and every dataset requires.
pub const SIM_LICENSE: LicenseType = LicenseType(1);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{kind} by {actor} failed in period {period}: {source}")]
    Contract {
        period: Period,
        kind: ActionKind,
        actor: Address,
        source: MarketError,
    },
    #[error("setup failed: {0}")]
    Setup(MarketError),
    #[error("no progress: {actions} of {target} actions after {periods} periods")]
    Stalled {
        periods: Period,
        actions: usize,
        target: usize,
    },
}

impl From<AgentError> for EngineError {
    fn from(e: AgentError) -> Self {
        EngineError::Config(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub scenario: Scenario,
    pub action_ticker: usize,
    pub access_fraction_pct: u32,
    pub renew_fraction_pct: u32,
    pub profit_margin_pct: u32,
    pub population: PopulationConfig,
    pub price: PriceModel,
    pub schedule: GasSchedule,
    pub prefund_wei: Wei,
    pub seed: u64,
    /// Safety bound on run length.
    pub max_periods: Period,
}

impl SimConfig {
    /// Defaults for `scenario`: 500 actions, 5% fractions, margin 100
    /// (200 in the profit scenario), 1000 accounts at 100 ETH.
    pub fn new(scenario: Scenario) -> Self {
        SimConfig {
            scenario,
            action_ticker: 500,
            access_fraction_pct: 5,
            renew_fraction_pct: 5,
            profit_margin_pct: default_margin(scenario),
            population: PopulationConfig::default(),
            price: PriceModel::default(),
            schedule: GasSchedule::default(),
            prefund_wei: 100 * WEI_PER_ETH,
            seed: 0,
            max_periods: 1_000_000,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn terms(&self) -> DatasetTerms {
        DatasetTerms::new(SIM_LICENSE, self.scenario)
            .with_margin(self.profit_margin_pct)
            .with_fractions(self.access_fraction_pct, self.renew_fraction_pct)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.action_ticker == 0 {
            return Err(EngineError::Config(
                "action ticker must be at least 1".into(),
            ));
        }
        match self.scenario {
            Scenario::Profit if self.profit_margin_pct <= 100 => {
                return Err(EngineError::Config(format!(
                    "scenario 3 needs a profit margin above 100%, got {}%",
                    self.profit_margin_pct
                )))
            }
            Scenario::NoCompensation | Scenario::CostCompensation
                if self.profit_margin_pct != 100 =>
            {
                return Err(EngineError::Config(format!(
                    "scenario {} runs at a 100% margin, got {}%",
                    self.scenario, self.profit_margin_pct
                )))
            }
            _ => {}
        }
        self.terms()
            .validate()
            .map_err(|e| EngineError::Config(e.to_string()))?;
        self.population.validate()?;
        Ok(())
    }
}

pub fn default_margin(scenario: Scenario) -> u32 {
    match scenario {
        Scenario::Profit => 200,
        _ => 100,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    Publish,
    Update,
    Request,
    Renew,
}

impl ActionKind {
    pub const ALL: [ActionKind; 4] = [
        ActionKind::Publish,
        ActionKind::Update,
        ActionKind::Request,
        ActionKind::Renew,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::Publish => "publish",
            ActionKind::Update => "update",
            ActionKind::Request => "request",
            ActionKind::Renew => "renew",
        }
    }

    pub fn role(self) -> Role {
        match self {
            ActionKind::Publish | ActionKind::Update => Role::Provider,
            ActionKind::Request | ActionKind::Renew => Role::Requester,
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub index: usize,
    pub period: Period,
    pub kind: ActionKind,
    pub actor: Address,
    pub dataset: Address,
    /// Ledger indices of the transactions behind this action.
    pub tx_indices: Vec<usize>,
    pub gas_used: Gas,
    pub tx_gas_fee_wei: Wei,
    pub payment_wei: Wei,
    /// Running cost of `dataset` right after the action.
    pub current_cost_after_wei: Wei,
}

impl ActionRecord {
    pub fn total_wei(&self) -> Wei {
        self.tx_gas_fee_wei + self.payment_wei
    }

    pub fn usd_total(&self, price: &PriceModel) -> f64 {
        price.wei_to_usd(self.total_wei())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodStats {
    pub period: Period,
    pub current_cost_wei: Wei,
    pub provider_cost_wei: Wei,
    pub provider_earnings_wei: Wei,
    pub profit_wei: i128,
    pub active_requesters: usize,
    pub actions_this_period: usize,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub config: SimConfig,
    pub records: Vec<ActionRecord>,
    pub series: Vec<PeriodStats>,
    pub contract_series: Vec<ContractSnapshot>,
    pub final_contracts: Vec<DatasetContract>,
    pub final_tokens: Vec<AccessToken>,
    pub population: Vec<AgentProfile>,
    pub tx_log: Vec<TxReceipt>,
    pub genesis: Vec<(Address, Wei)>,
    pub final_balances: Vec<(Address, Wei)>,
    pub events: Vec<Event>,
    pub registry: Registry,
    pub authority: Address,
}

impl SimResult {
    pub fn periods(&self) -> usize {
        self.series.len()
    }

    pub fn count(&self, kind: ActionKind) -> usize {
        self.records.iter().filter(|r| r.kind == kind).count()
    }

    pub fn final_profit_wei(&self) -> i128 {
        self.series.last().map_or(0, |s| s.profit_wei)
    }
}

/// First period whose profit is non-negative.
pub fn break_even_period(result: &SimResult) -> Option<Period> {
    result
        .series
        .iter()
        .find(|s| s.profit_wei >= 0)
        .map(|s| s.period)
}

struct Publication {
    provider: usize,
    dataset: Address,
    period: Period,
}

struct Simulation {
    cfg: SimConfig,
    rng: ChaCha8Rng,
    market: Marketplace,
    authority: Address,
    profiles: Vec<AgentProfile>,
    providers: Vec<usize>,
    requesters: Vec<usize>,
    next_provider: usize,
    next_requester: usize,
    published: Vec<Publication>,
    holders: BTreeMap<TokenId, usize>,
    records: Vec<ActionRecord>,
    series: Vec<PeriodStats>,
    contract_series: Vec<ContractSnapshot>,
    period: Period,
    period_actions: usize,
}

impl Simulation {
    fn setup(cfg: SimConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut chain = ChainState::new(cfg.schedule.clone(), cfg.price);
        let accounts = chain.create_accounts(cfg.population.n_accounts, cfg.prefund_wei);
        let profiles = generate_population(&cfg.population, &accounts, &mut rng)?;

        // the registry authority is funded with exactly what onboarding costs
        let fee = |f: Function| {
            chain
                .quote_fee(f, 0)
                .map(|(_, w)| w)
                .map_err(|e| EngineError::Setup(e.into()))
        };
        let n_providers = cfg.population.max_providers as Wei;
        let n_users = (cfg.population.n_accounts - cfg.population.max_providers) as Wei;
        let onboarding = fee(Function::RegistryDeployment)?
            + n_providers * fee(Function::NewDataProvider)?
            + n_users * fee(Function::RegisterNewUser)?;
        let authority = chain.create_accounts(1, onboarding)[0];
        let (registry, _) =
            Registry::deploy(&mut chain, authority).map_err(|e| EngineError::Setup(e.into()))?;
        let mut market = Marketplace::new(chain, registry);

        let mut providers = Vec::new();
        let mut requesters = Vec::new();
        for (i, p) in profiles.iter().enumerate() {
            match p.role {
                Role::Provider => {
                    market
                        .register_provider(authority, p.address)
                        .map_err(EngineError::Setup)?;
                    providers.push(i);
                }
                Role::Requester => {
                    market
                        .register_user(authority, p.address, SIM_LICENSE)
                        .map_err(EngineError::Setup)?;
                    requesters.push(i);
                }
            }
        }

        Ok(Simulation {
            cfg,
            rng,
            market,
            authority,
            profiles,
            providers,
            requesters,
            next_provider: 0,
            next_requester: 0,
            published: Vec::new(),
            holders: BTreeMap::new(),
            records: Vec::new(),
            series: Vec::new(),
            contract_series: Vec::new(),
            period: 0,
            period_actions: 0,
        })
    }

    fn budget_left(&self) -> bool {
        self.records.len() < self.cfg.action_ticker
    }

    fn roll(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }

    fn fail(&self, kind: ActionKind, actor: Address) -> impl Fn(MarketError) -> EngineError {
        let period = self.period;
        move |source| EngineError::Contract {
            period,
            kind,
            actor,
            source,
        }
    }

    fn record(
        &mut self,
        kind: ActionKind,
        actor: Address,
        dataset: Address,
        receipts: &[TxReceipt],
    ) {
        self.records.push(ActionRecord {
            index: self.records.len(),
            period: self.period,
            kind,
            actor,
            dataset,
            tx_indices: receipts.iter().map(|r| r.index).collect(),
            gas_used: receipts.iter().map(|r| r.gas_used).sum(),
            tx_gas_fee_wei: receipts.iter().map(|r| r.gas_fee_wei).sum(),
            payment_wei: receipts.iter().map(|r| r.value_wei).sum(),
            current_cost_after_wei: self
                .market
                .dataset(dataset)
                .map_or(0, |c| c.current_cost_wei),
        });
        self.period_actions += 1;
    }

    fn run(mut self) -> Result<SimResult, EngineError> {
        loop {
            if self.period > self.cfg.max_periods {
                return Err(EngineError::Stalled {
                    periods: self.period,
                    actions: self.records.len(),
                    target: self.cfg.action_ticker,
                });
            }
            self.market.set_period(self.period);
            self.period_actions = 0;
            self.step_publish()?;
            self.step_update()?;
            self.step_request()?;
            self.step_renew()?;
            self.snapshot();
            if !self.budget_left() {
                break;
            }
            self.period += 1;
        }
        Ok(self.finish())
    }

    fn step_publish(&mut self) -> Result<(), EngineError> {
        let Some(&pi) = self.providers.get(self.next_provider) else {
            return Ok(());
        };
        if !self.budget_left() {
            return Ok(());
        }
        let forced = self.period == 0 && self.next_provider == 0;
        if !forced && !self.roll(self.profiles[pi].base_prob) {
            return Ok(());
        }
        let actor = self.profiles[pi].address;
        let link = format!("data://{}/{}", actor, self.next_provider + 1);
        let terms = self.cfg.terms();
        let fail = self.fail(ActionKind::Publish, actor);
        let (dataset, receipts) = self
            .market
            .deploy_and_publish(actor, link, terms)
            .map_err(&fail)?;
        // parameter setters run once here and belong to the publish action
        let registry = self.market.registry().address();
        let mut receipts = receipts.to_vec();
        receipts.push(
            self.market
                .set_registry_address(actor, dataset, registry)
                .map_err(&fail)?,
        );
        receipts.push(
            self.market
                .set_profit_margin(actor, dataset, terms.profit_margin_pct)
                .map_err(&fail)?,
        );
        receipts.push(
            self.market
                .set_multis(
                    actor,
                    dataset,
                    terms.access_fraction_pct,
                    terms.renew_fraction_pct,
                )
                .map_err(&fail)?,
        );
        self.record(ActionKind::Publish, actor, dataset, &receipts);
        self.profiles[pi].last_action_period = Some(self.period);
        self.published.push(Publication {
            provider: pi,
            dataset,
            period: self.period,
        });
        self.next_provider += 1;
        Ok(())
    }

    fn step_update(&mut self) -> Result<(), EngineError> {
        for i in 0..self.published.len() {
            if !self.budget_left() {
                return Ok(());
            }
            let Publication {
                provider,
                dataset,
                period,
            } = self.published[i];
            if period >= self.period {
                continue;
            }
            let p = self.profiles[provider].update_prob(self.cfg.population.update_multiplier);
            if !self.roll(p) {
                continue;
            }
            let actor = self.profiles[provider].address;
            let receipt = self
                .market
                .update_data(actor, dataset)
                .map_err(self.fail(ActionKind::Update, actor))?;
            self.record(ActionKind::Update, actor, dataset, &[receipt]);
            self.profiles[provider].last_action_period = Some(self.period);
        }
        Ok(())
    }

    fn step_request(&mut self) -> Result<(), EngineError> {
        let Some(&ri) = self.requesters.get(self.next_requester) else {
            return Ok(());
        };
        let catalog = self.market.catalog();
        if catalog.is_empty() || !self.budget_left() {
            return Ok(());
        }
        if !self.roll(self.profiles[ri].current_prob) {
            return Ok(());
        }
        let dataset = catalog[self.rng.random_range(0..catalog.len())];
        let actor = self.profiles[ri].address;
        let quote = self
            .market
            .quote_payment(dataset, PaymentKind::Access)
            .map_err(self.fail(ActionKind::Request, actor))?;
        let (token, receipt) = self
            .market
            .request_access(actor, dataset, quote.current_expected_cost_wei)
            .map_err(self.fail(ActionKind::Request, actor))?;
        self.record(ActionKind::Request, actor, dataset, &[receipt]);
        let profile = &mut self.profiles[ri];
        profile.last_action_period = Some(self.period);
        profile.datasets_held.insert(dataset);
        self.holders.insert(token, ri);
        self.next_requester += 1;
        Ok(())
    }

    fn step_renew(&mut self) -> Result<(), EngineError> {
        let held: Vec<(TokenId, usize)> = self.holders.iter().map(|(t, r)| (*t, *r)).collect();
        for (id, ri) in held {
            if !self.budget_left() {
                return Ok(());
            }
            let Some(token) = self.market.token(id) else {
                continue;
            };
            if token.burned || !token.is_expired(self.period) {
                continue;
            }
            let (dataset, compliant) = (token.dataset, token.compliance);
            let profile = &self.profiles[ri];
            let cooled = profile
                .last_action_period
                .is_none_or(|last| self.period - last >= 2);
            let (actor, p) = (profile.address, profile.current_prob);
            if !cooled || !self.roll(p) {
                continue;
            }
            if !compliant {
                self.market
                    .confirm_compliance(actor, dataset)
                    .map_err(self.fail(ActionKind::Renew, actor))?;
            }
            let quote = self
                .market
                .quote_payment(dataset, PaymentKind::Renewal)
                .map_err(self.fail(ActionKind::Renew, actor))?;
            let (_, receipt) = self
                .market
                .renew_access_time(actor, dataset, quote.current_expected_cost_wei)
                .map_err(self.fail(ActionKind::Renew, actor))?;
            self.record(ActionKind::Renew, actor, dataset, &[receipt]);
            let decay = self.cfg.population.decay;
            let profile = &mut self.profiles[ri];
            profile.decay_renewal_prob(decay)?;
            profile.last_action_period = Some(self.period);
        }
        Ok(())
    }

    fn snapshot(&mut self) {
        let mut stats = PeriodStats {
            period: self.period,
            current_cost_wei: 0,
            provider_cost_wei: 0,
            provider_earnings_wei: 0,
            profit_wei: 0,
            active_requesters: 0,
            actions_this_period: self.period_actions,
        };
        for c in self.market.datasets() {
            stats.current_cost_wei += c.current_cost_wei;
            stats.provider_cost_wei += c.provider_cost_wei;
            stats.provider_earnings_wei += c.provider_earnings_wei;
            stats.active_requesters += c.active_tokens.len();
            self.contract_series
                .push(ContractSnapshot::of(self.period, c));
        }
        stats.profit_wei = stats.provider_earnings_wei as i128 - stats.provider_cost_wei as i128;
        self.series.push(stats);
    }

    fn finish(self) -> SimResult {
        let chain = self.market.chain();
        SimResult {
            records: self.records,
            series: self.series,
            contract_series: self.contract_series,
            final_contracts: self.market.datasets().cloned().collect(),
            final_tokens: self.market.tokens().to_vec(),
            population: self.profiles,
            tx_log: chain.log().to_vec(),
            genesis: chain.genesis().to_vec(),
            final_balances: chain.balances(),
            events: self.market.events().to_vec(),
            registry: self.market.registry().clone(),
            authority: self.authority,
            config: self.cfg,
        }
    }
}

/// Runs one simulation to completion.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimResult, EngineError> {
    Simulation::setup(cfg.clone())?.run()
}

/// Independent runs on up to `jobs` threads. The output order matches the
/// input order whatever the completion order.
pub fn sweep(cfgs: &[SimConfig], jobs: usize) -> Vec<Result<SimResult, EngineError>> {
    if cfgs.is_empty() {
        return Vec::new();
    }
    if jobs <= 1 {
        return cfgs.iter().map(run_simulation).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| cfgs.par_iter().map(run_simulation).collect()),
        Err(_) => cfgs.iter().map(run_simulation).collect(),
    }
}

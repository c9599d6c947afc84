//! Per-dataset contract: publishing, updates, license changes, destruction
//! and the running-cost bookkeeping behind the three cost scenarios.
//!
//! Every transaction the owner sends to the contract accrues
//! `gasUsed * gasPrice * profitMargin / 100` to the running cost
//! (`current_cost_wei`). Requester payments draw it back down. With a margin
//! of 100 the provider at most recovers its gas spend; above 100 the surplus
//! is profit.

use std::collections::BTreeSet;
use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chain::{Address, ChainError, Function, Gas, Period, TxReceipt, Wei};
use crate::market::{Event, MarketError, Marketplace};
use crate::registry::LicenseType;
use crate::token::{BurnCause, TokenId};

/// Cost allocation scenario, fixed at publication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Requesters pay only their own gas.
    NoCompensation,
    /// Requesters cover the provider's costs.
    CostCompensation,
    /// Requesters cover costs times a profit margin above 100%.
    Profit,
}

impl Scenario {
    pub fn number(self) -> u8 {
        match self {
            Scenario::NoCompensation => 1,
            Scenario::CostCompensation => 2,
            Scenario::Profit => 3,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Scenario::NoCompensation),
            2 => Some(Scenario::CostCompensation),
            3 => Some(Scenario::Profit),
            _ => None,
        }
    }

    pub fn charges_requesters(self) -> bool {
        self != Scenario::NoCompensation
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim()
            .parse::<u8>()
            .ok()
            .and_then(Scenario::from_number)
            .ok_or_else(|| format!("scenario must be 1, 2 or 3, got `{s}`"))
    }
}

/// Parameters a provider fixes at deployment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetTerms {
    pub license: LicenseType,
    pub scenario: Scenario,
    pub profit_margin_pct: u32,
    pub access_fraction_pct: u32,
    pub renew_fraction_pct: u32,
}

impl DatasetTerms {
    pub fn new(license: LicenseType, scenario: Scenario) -> Self {
        DatasetTerms {
            license,
            scenario,
            profit_margin_pct: if scenario == Scenario::Profit {
                200
            } else {
                100
            },
            access_fraction_pct: 5,
            renew_fraction_pct: 5,
        }
    }

    pub fn with_margin(mut self, pct: u32) -> Self {
        self.profit_margin_pct = pct;
        self
    }

    pub fn with_fractions(mut self, access_pct: u32, renew_pct: u32) -> Self {
        self.access_fraction_pct = access_pct;
        self.renew_fraction_pct = renew_pct;
        self
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        check_margin(self.profit_margin_pct)?;
        check_fraction("accessFractionPct", self.access_fraction_pct)?;
        check_fraction("renewFractionPct", self.renew_fraction_pct)
    }
}

fn check_margin(pct: u32) -> Result<(), MarketError> {
    if pct < 100 {
        return Err(MarketError::OutOfRange {
            name: "profitMarginPct",
            value: pct.into(),
        });
    }
    Ok(())
}

fn check_fraction(name: &'static str, pct: u32) -> Result<(), MarketError> {
    if pct == 0 || pct > 100 {
        return Err(MarketError::OutOfRange {
            name,
            value: pct.into(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetContract {
    pub address: Address,
    pub owner: Address,
    pub link: String,
    pub meta_version: u32,
    pub license_changes: u32,
    pub required_license: LicenseType,
    pub scenario: Scenario,
    pub profit_margin_pct: u32,
    pub access_fraction_pct: u32,
    pub renew_fraction_pct: u32,
    pub price_wei: Wei,
    pub registry_address: Address,
    pub current_cost_wei: Wei,
    /// Lifetime gas the owner spent on this contract.
    pub provider_cost_wei: Wei,
    /// Lifetime payments received from requesters.
    pub provider_earnings_wei: Wei,
    /// Sum of all accruals, i.e. the most the provider can ever earn.
    pub accrued_wei: Wei,
    /// Mirrors the ledger balance of `address`.
    pub balance_wei: Wei,
    pub active_tokens: BTreeSet<TokenId>,
    pub published: bool,
    pub destroyed: bool,
    pub deployed_period: Period,
}

impl DatasetContract {
    /// Adds one owner-paid transaction to the running cost.
    pub fn accrue_cost(&mut self, gas_used: Gas, gas_price_wei: Wei) {
        let fee = Wei::from(gas_used) * gas_price_wei;
        let accrual = fee * Wei::from(self.profit_margin_pct) / 100;
        self.current_cost_wei += accrual;
        self.accrued_wei += accrual;
        self.provider_cost_wei += fee;
    }

    /// Earnings minus costs, in wei.
    pub fn profit_wei(&self) -> i128 {
        self.provider_earnings_wei as i128 - self.provider_cost_wei as i128
    }

    /// True once `destroy` has wiped the contract.
    pub fn is_zeroed(&self) -> bool {
        self.destroyed
            && self.owner.is_null()
            && self.link.is_empty()
            && self.meta_version == 0
            && self.license_changes == 0
            && self.required_license == LicenseType(0)
            && self.profit_margin_pct == 0
            && self.access_fraction_pct == 0
            && self.renew_fraction_pct == 0
            && self.price_wei == 0
            && self.registry_address.is_null()
            && self.current_cost_wei == 0
            && self.provider_cost_wei == 0
            && self.provider_earnings_wei == 0
            && self.accrued_wei == 0
            && self.balance_wei == 0
            && self.active_tokens.is_empty()
            && !self.published
    }

    fn zero(&mut self) {
        self.owner = Address::NULL;
        self.link.clear();
        self.meta_version = 0;
        self.license_changes = 0;
        self.required_license = LicenseType(0);
        self.profit_margin_pct = 0;
        self.access_fraction_pct = 0;
        self.renew_fraction_pct = 0;
        self.price_wei = 0;
        self.registry_address = Address::NULL;
        self.current_cost_wei = 0;
        self.provider_cost_wei = 0;
        self.provider_earnings_wei = 0;
        self.accrued_wei = 0;
        self.balance_wei = 0;
        self.active_tokens.clear();
        self.published = false;
        self.destroyed = true;
    }
}

impl Marketplace {
    /// Shared guard for every owner operation.
    fn owner_guard(
        &self,
        caller: Address,
        dataset: Address,
    ) -> Result<&DatasetContract, MarketError> {
        let c = self.contract(dataset)?;
        if c.destroyed {
            return Err(MarketError::Destroyed(dataset));
        }
        if c.owner != caller {
            return Err(MarketError::NotOwner(caller));
        }
        if !self.registry.check_provider(caller) {
            return Err(MarketError::NotProvider(caller));
        }
        Ok(c)
    }

    /// Sends an owner-paid transaction to `dataset` and accrues its gas.
    fn owner_tx(
        &mut self,
        owner: Address,
        dataset: Address,
        function: Function,
        extra_gas: Gas,
    ) -> Result<TxReceipt, MarketError> {
        let receipt = self
            .chain
            .execute(owner, function, extra_gas, 0, Some(dataset))?;
        let price = self.chain.price().gas_price_wei;
        self.contract_mut(dataset)?
            .accrue_cost(receipt.gas_used, price);
        Ok(receipt)
    }

    /// Deploys an unpublished dataset contract.
    pub fn deploy(
        &mut self,
        provider: Address,
        link: impl Into<String>,
        terms: DatasetTerms,
    ) -> Result<(Address, TxReceipt), MarketError> {
        if !self.registry.check_provider(provider) {
            return Err(MarketError::NotProvider(provider));
        }
        terms.validate()?;
        let receipt = self
            .chain
            .execute(provider, Function::Deployment, 0, 0, None)?;
        let address = self.chain.create_contract_account();
        let mut contract = DatasetContract {
            address,
            owner: provider,
            link: link.into(),
            meta_version: 0,
            license_changes: 0,
            required_license: terms.license,
            scenario: terms.scenario,
            profit_margin_pct: terms.profit_margin_pct,
            access_fraction_pct: terms.access_fraction_pct,
            renew_fraction_pct: terms.renew_fraction_pct,
            price_wei: 0,
            registry_address: self.registry.address(),
            current_cost_wei: 0,
            provider_cost_wei: 0,
            provider_earnings_wei: 0,
            accrued_wei: 0,
            balance_wei: 0,
            active_tokens: BTreeSet::new(),
            published: false,
            destroyed: false,
            deployed_period: self.chain.period(),
        };
        contract.accrue_cost(receipt.gas_used, self.chain.price().gas_price_wei);
        self.datasets.insert(address, contract);
        Ok((address, receipt))
    }

    pub fn publish_data(
        &mut self,
        owner: Address,
        dataset: Address,
    ) -> Result<TxReceipt, MarketError> {
        if self.owner_guard(owner, dataset)?.published {
            return Err(MarketError::AlreadyPublished(dataset));
        }
        let receipt = self.owner_tx(owner, dataset, Function::PublishData, 0)?;
        self.contract_mut(dataset)?.published = true;
        Ok(receipt)
    }

    /// Deployment plus publication; the provider's initial investment.
    /// Fails without side effects unless both transactions are affordable.
    pub fn deploy_and_publish(
        &mut self,
        provider: Address,
        link: impl Into<String>,
        terms: DatasetTerms,
    ) -> Result<(Address, [TxReceipt; 2]), MarketError> {
        if !self.registry.check_provider(provider) {
            return Err(MarketError::NotProvider(provider));
        }
        terms.validate()?;
        let (_, deploy_fee) = self.chain.quote_fee(Function::Deployment, 0)?;
        let (_, publish_fee) = self.chain.quote_fee(Function::PublishData, 0)?;
        let available = self
            .chain
            .balance(provider)
            .ok_or(ChainError::UnknownAccount(provider))?;
        if available < deploy_fee + publish_fee {
            return Err(ChainError::InsufficientFunds {
                caller: provider,
                needed: deploy_fee + publish_fee,
                available,
            }
            .into());
        }
        let (address, deployed) = self.deploy(provider, link, terms)?;
        let published = self.publish_data(provider, address)?;
        Ok((address, [deployed, published]))
    }

    /// Meta-information update. Costs grow with the number of active
    /// tokens, and every holder must re-confirm compliance afterwards.
    pub fn update_data(
        &mut self,
        owner: Address,
        dataset: Address,
    ) -> Result<TxReceipt, MarketError> {
        let c = self.owner_guard(owner, dataset)?;
        if !c.published {
            return Err(MarketError::NotPublished(dataset));
        }
        let holders = c.active_tokens.len() as Gas;
        let extra = holders * self.chain.schedule().per_requester_update_gas;
        let receipt = self.owner_tx(owner, dataset, Function::UpdateData, extra)?;
        let c = self.datasets.get_mut(&dataset).expect("guarded");
        c.meta_version += 1;
        let notified: Vec<TokenId> = c.active_tokens.iter().copied().collect();
        let meta_version = c.meta_version;
        for id in &notified {
            self.tokens.set_compliance(*id, false);
        }
        self.events.push(Event::DataUpdated {
            period: self.chain.period(),
            dataset,
            meta_version,
            notified,
        });
        Ok(receipt)
    }

    /// Changes the required license and burns every token that no longer
    /// matches it. Returns the burned token ids.
    pub fn set_license(
        &mut self,
        owner: Address,
        dataset: Address,
        license: LicenseType,
    ) -> Result<(TxReceipt, Vec<TokenId>), MarketError> {
        self.owner_guard(owner, dataset)?;
        let receipt = self.owner_tx(owner, dataset, Function::SetLicense, 0)?;
        let c = self.datasets.get_mut(&dataset).expect("guarded");
        let from = c.required_license;
        c.required_license = license;
        c.license_changes += 1;
        let stale: Vec<TokenId> = c
            .active_tokens
            .iter()
            .copied()
            .filter(|id| self.tokens.get(*id).is_some_and(|t| t.license != license))
            .collect();
        self.events.push(Event::LicenseChanged {
            period: self.chain.period(),
            dataset,
            from,
            to: license,
        });
        for id in &stale {
            self.burn_token(*id, BurnCause::LicenseChange)?;
        }
        Ok((receipt, stale))
    }

    pub fn set_profit_margin(
        &mut self,
        owner: Address,
        dataset: Address,
        pct: u32,
    ) -> Result<TxReceipt, MarketError> {
        let previous = self.owner_guard(owner, dataset)?.profit_margin_pct;
        check_margin(pct)?;
        // the new margin already applies to this call's own gas
        self.contract_mut(dataset)?.profit_margin_pct = pct;
        let result = self.owner_tx(owner, dataset, Function::SetProfitMargin, 0);
        if result.is_err() {
            self.contract_mut(dataset)?.profit_margin_pct = previous;
        }
        result
    }

    pub fn set_multis(
        &mut self,
        owner: Address,
        dataset: Address,
        access_pct: u32,
        renew_pct: u32,
    ) -> Result<TxReceipt, MarketError> {
        self.owner_guard(owner, dataset)?;
        check_fraction("accessFractionPct", access_pct)?;
        check_fraction("renewFractionPct", renew_pct)?;
        let receipt = self.owner_tx(owner, dataset, Function::SetMultis, 0)?;
        let c = self.contract_mut(dataset)?;
        c.access_fraction_pct = access_pct;
        c.renew_fraction_pct = renew_pct;
        Ok(receipt)
    }

    /// Stores a list price. Kept for completeness; no scenario reads it.
    pub fn set_price(
        &mut self,
        owner: Address,
        dataset: Address,
        price: Wei,
    ) -> Result<TxReceipt, MarketError> {
        self.owner_guard(owner, dataset)?;
        let receipt = self.owner_tx(owner, dataset, Function::SetPrice, 0)?;
        self.contract_mut(dataset)?.price_wei = price;
        Ok(receipt)
    }

    /// Records a registry address. The marketplace hosts a single registry,
    /// so gateway checks always consult it.
    pub fn set_registry_address(
        &mut self,
        owner: Address,
        dataset: Address,
        registry: Address,
    ) -> Result<TxReceipt, MarketError> {
        self.owner_guard(owner, dataset)?;
        let receipt = self.owner_tx(owner, dataset, Function::SetRegistryAddress, 0)?;
        self.contract_mut(dataset)?.registry_address = registry;
        Ok(receipt)
    }

    /// Moves the whole contract balance to the owner.
    pub fn withdraw(
        &mut self,
        owner: Address,
        dataset: Address,
    ) -> Result<(TxReceipt, Wei), MarketError> {
        self.owner_guard(owner, dataset)?;
        let receipt = self.owner_tx(owner, dataset, Function::Withdraw, 0)?;
        let amount = self.contract(dataset)?.balance_wei;
        if amount > 0 {
            self.chain.payout(dataset, owner, amount)?;
        }
        self.contract_mut(dataset)?.balance_wei = 0;
        Ok((receipt, amount))
    }

    /// Self-destruction: the balance goes to the owner, every field is
    /// zeroed and the dataset leaves the catalog. Live tokens are not
    /// refunded.
    pub fn destroy(&mut self, owner: Address, dataset: Address) -> Result<TxReceipt, MarketError> {
        let c = self.contract(dataset)?;
        if c.destroyed {
            return Err(MarketError::AlreadyDestroyed(dataset));
        }
        self.owner_guard(owner, dataset)?;
        let receipt = self
            .chain
            .execute(owner, Function::Destroy, 0, 0, Some(dataset))?;
        let refunded = self.contract(dataset)?.balance_wei;
        if refunded > 0 {
            self.chain.payout(dataset, owner, refunded)?;
        }
        self.contract_mut(dataset)?.zero();
        self.events.push(Event::ContractDestroyed {
            period: self.chain.period(),
            dataset,
            refunded,
        });
        Ok(receipt)
    }
}

/// Per-period contract snapshot, also the row type of `contracts.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractSnapshot {
    pub period: Period,
    pub contract: Address,
    pub current_cost_wei: Wei,
    pub provider_cost_wei: Wei,
    pub provider_earnings_wei: Wei,
    pub active_tokens: usize,
    pub meta_version: u32,
}

impl ContractSnapshot {
    pub fn of(period: Period, c: &DatasetContract) -> Self {
        ContractSnapshot {
            period,
            contract: c.address,
            current_cost_wei: c.current_cost_wei,
            provider_cost_wei: c.provider_cost_wei,
            provider_earnings_wei: c.provider_earnings_wei,
            active_tokens: c.active_tokens.len(),
            meta_version: c.meta_version,
        }
    }
}

pub fn write_contract_snapshots_csv<W: io::Write>(
    rows: &[ContractSnapshot],
    out: W,
) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record([
        "period",
        "contract",
        "currentCostWei",
        "providerCostWei",
        "providerEarningsWei",
        "activeTokens",
        "metaVersion",
    ])?;
    for r in rows {
        w.write_record([
            r.period.to_string(),
            r.contract.to_string(),
            r.current_cost_wei.to_string(),
            r.provider_cost_wei.to_string(),
            r.provider_earnings_wei.to_string(),
            r.active_tokens.to_string(),
            r.meta_version.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

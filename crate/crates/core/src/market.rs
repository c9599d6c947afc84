//! The marketplace: one ledger, one registry, any number of dataset
//! contracts and the shared token list. Dataset-owner operations live in
//! [`crate::dataset`], requester operations in [`crate::token`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{Address, ChainError, ChainState, Period, TxReceipt, Wei};
use crate::dataset::DatasetContract;
use crate::registry::{LicenseType, Registry, RegistryError};
use crate::token::{AccessToken, BurnCause, TokenBook, TokenId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarketError {
    #[error("no dataset contract at {0}")]
    UnknownDataset(Address),
    #[error("{0} is not a registered data provider")]
    NotProvider(Address),
    #[error("{0} does not own this contract")]
    NotOwner(Address),
    #[error("dataset {0} is not published")]
    NotPublished(Address),
    #[error("dataset {0} is already published")]
    AlreadyPublished(Address),
    #[error("contract {0} has been destroyed")]
    Destroyed(Address),
    #[error("contract {0} is already destroyed")]
    AlreadyDestroyed(Address),
    #[error("{name} = {value} is out of range")]
    OutOfRange { name: &'static str, value: u64 },
    #[error("{user} already holds a live token for {dataset}")]
    DuplicateToken { dataset: Address, user: Address },
    #[error("{user} does not hold license {required}")]
    LicenseMismatch {
        user: Address,
        required: LicenseType,
    },
    #[error("payment of {offered} wei is below the quote of {required} wei")]
    InsufficientPayment { required: Wei, offered: Wei },
    #[error("payment of {offered} wei exceeds the quote of {required} wei")]
    Overpayment { required: Wei, offered: Wei },
    #[error("{user} holds no live token for {dataset}")]
    NoToken { dataset: Address, user: Address },
    #[error("{user} must confirm compliance with the latest update first")]
    ComplianceRequired { user: Address },
    #[error("access expired at period {until} (now {period})")]
    Expired { until: Period, period: Period },
    #[error("unknown token {0}")]
    UnknownToken(TokenId),
    #[error("token {0} is already burned")]
    AlreadyBurned(TokenId),
    #[error("{0} may not act on this token")]
    NotTokenHolder(Address),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

/// Audit trail and holder notifications.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    DataUpdated {
        period: Period,
        dataset: Address,
        meta_version: u32,
        notified: Vec<TokenId>,
    },
    LicenseChanged {
        period: Period,
        dataset: Address,
        from: LicenseType,
        to: LicenseType,
    },
    ComplianceConfirmed {
        period: Period,
        dataset: Address,
        user: Address,
        token: TokenId,
    },
    TokenBurned {
        period: Period,
        token: TokenId,
        dataset: Address,
        holder: Address,
        cause: BurnCause,
        remaining: Period,
    },
    ContractDestroyed {
        period: Period,
        dataset: Address,
        refunded: Wei,
    },
}

#[derive(Debug, Clone)]
pub struct Marketplace {
    pub(crate) chain: ChainState,
    pub(crate) registry: Registry,
    pub(crate) datasets: BTreeMap<Address, DatasetContract>,
    pub(crate) tokens: TokenBook,
    pub(crate) events: Vec<Event>,
}

impl Marketplace {
    pub fn new(chain: ChainState, registry: Registry) -> Self {
        Marketplace {
            chain,
            registry,
            datasets: BTreeMap::new(),
            tokens: TokenBook::default(),
            events: Vec::new(),
        }
    }

    pub fn chain(&self) -> &ChainState {
        &self.chain
    }

    /// Direct ledger access, e.g. for funding or external transactions.
    pub fn chain_mut(&mut self) -> &mut ChainState {
        &mut self.chain
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn period(&self) -> Period {
        self.chain.period()
    }

    pub fn set_period(&mut self, period: Period) {
        self.chain.set_period(period);
    }

    pub fn register_user(
        &mut self,
        caller: Address,
        user: Address,
        license: LicenseType,
    ) -> Result<TxReceipt, MarketError> {
        Ok(self
            .registry
            .register_new_user(&mut self.chain, caller, user, license)?)
    }

    pub fn register_provider(
        &mut self,
        caller: Address,
        provider: Address,
    ) -> Result<TxReceipt, MarketError> {
        Ok(self
            .registry
            .new_data_provider(&mut self.chain, caller, provider)?)
    }

    pub fn update_user_license(
        &mut self,
        caller: Address,
        user: Address,
        license: LicenseType,
    ) -> Result<TxReceipt, MarketError> {
        Ok(self
            .registry
            .update_user_license(&mut self.chain, caller, user, license)?)
    }

    pub fn dataset(&self, addr: Address) -> Option<&DatasetContract> {
        self.datasets.get(&addr)
    }

    pub fn datasets(&self) -> impl Iterator<Item = &DatasetContract> {
        self.datasets.values()
    }

    /// Published, non-destroyed datasets in address order.
    pub fn catalog(&self) -> Vec<Address> {
        self.datasets
            .values()
            .filter(|c| c.published && !c.destroyed)
            .map(|c| c.address)
            .collect()
    }

    pub fn tokens(&self) -> &TokenBook {
        &self.tokens
    }

    pub fn token(&self, id: TokenId) -> Option<&AccessToken> {
        self.tokens.get(id)
    }

    pub fn live_token(&self, dataset: Address, user: Address) -> Option<&AccessToken> {
        self.tokens
            .live_for(dataset, user)
            .and_then(|id| self.tokens.get(id))
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub(crate) fn contract(&self, dataset: Address) -> Result<&DatasetContract, MarketError> {
        self.datasets
            .get(&dataset)
            .ok_or(MarketError::UnknownDataset(dataset))
    }

    pub(crate) fn contract_mut(
        &mut self,
        dataset: Address,
    ) -> Result<&mut DatasetContract, MarketError> {
        self.datasets
            .get_mut(&dataset)
            .ok_or(MarketError::UnknownDataset(dataset))
    }
}

//! Agent-based simulator of blockchain data-sharing incentives.
//!
//! Dataset contracts, a user registry and access tokens run as plain state
//! machines over a gas-metered mock ledger ([`chain`]). A seeded population
//! of providers and requesters ([`agents`]) drives them period by period
//! ([`engine`]), and [`reporting`] turns a run into CSV tables and a
//! summary.

pub mod agents;
pub mod chain;
pub mod dataset;
pub mod engine;
pub mod market;
pub mod registry;
pub mod reporting;
pub mod token;

#[cfg(test)]
mod testutil;

pub use agents::{AgentProfile, PopulationConfig, Role};
pub use chain::{Address, ChainState, Function, GasSchedule, Period, PriceModel, TxReceipt, Wei};
pub use dataset::{DatasetContract, DatasetTerms, Scenario};
pub use engine::{break_even_period, run_simulation, sweep, ActionKind, SimConfig, SimResult};
pub use market::{MarketError, Marketplace};
pub use registry::{LicenseType, Registry};
pub use token::{AccessToken, PaymentKind, PaymentQuote, TokenId};

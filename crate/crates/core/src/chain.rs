//! Mock ledger: accounts, integer wei balances, a fixed gas schedule and
//! metered transaction execution.
//!
//! Every fee is paid to a miner sink account, so the sum of all balances
//! never changes after genesis. USD figures are derived on demand from wei
//! and never stored.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest Ether denomination. All money in the simulator is held in wei.
pub type Wei = u128;
/// Gas units.
pub type Gas = u64;
/// Discrete simulation time step (roughly one week).
pub type Period = u32;

pub const WEI_PER_ETH: Wei = 1_000_000_000_000_000_000;
pub const WEI_PER_GWEI: Wei = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("insufficient funds for {caller}: needed {needed} wei, available {available} wei")]
    InsufficientFunds {
        caller: Address,
        needed: Wei,
        available: Wei,
    },
    #[error("function `{0}` has no entry in the gas schedule")]
    UnknownFunction(Function),
    #[error("no account at address {0}")]
    UnknownAccount(Address),
}

/// Account identifier. Id 0 is the null address and never holds an account.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Address(u64);

impl Address {
    pub const NULL: Address = Address(0);

    pub fn from_id(id: u64) -> Self {
        Address(id)
    }

    pub fn id(self) -> u64 {
        self.0
    }

    pub fn is_null(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:040x}", self.0)
    }
}

/// Contract functions known to the gas schedule.
///
/// The first nine are dataset-contract functions, the `Registry*`/`*User`/
/// `*Provider` variants belong to the registry contract. `ContractPayout`
/// tags internal transfers out of a contract balance; it is never metered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Function {
    Deployment,
    PublishData,
    UpdateData,
    AddDataRequester,
    RenewToken,
    SetLicense,
    SetRegistryAddress,
    SetProfitMargin,
    SetPrice,
    SetMultis,
    Withdraw,
    Destroy,
    RegistryDeployment,
    NewDataProvider,
    RegisterNewUser,
    UpdateUserLicense,
    CheckProvider,
    CheckUser,
    ContractPayout,
}

impl Function {
    pub const ALL: [Function; 19] = [
        Function::Deployment,
        Function::PublishData,
        Function::UpdateData,
        Function::AddDataRequester,
        Function::RenewToken,
        Function::SetLicense,
        Function::SetRegistryAddress,
        Function::SetProfitMargin,
        Function::SetPrice,
        Function::SetMultis,
        Function::Withdraw,
        Function::Destroy,
        Function::RegistryDeployment,
        Function::NewDataProvider,
        Function::RegisterNewUser,
        Function::UpdateUserLicense,
        Function::CheckProvider,
        Function::CheckUser,
        Function::ContractPayout,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Function::Deployment => "deployment",
            Function::PublishData => "publishData",
            Function::UpdateData => "updateData",
            Function::AddDataRequester => "addDataRequester",
            Function::RenewToken => "renewToken",
            Function::SetLicense => "setLicense",
            Function::SetRegistryAddress => "setRegistryAddress",
            Function::SetProfitMargin => "setProfitMargin",
            Function::SetPrice => "setPrice",
            Function::SetMultis => "setMultis",
            Function::Withdraw => "withdraw",
            Function::Destroy => "destroy",
            Function::RegistryDeployment => "registryDeployment",
            Function::NewDataProvider => "newDataProvider",
            Function::RegisterNewUser => "registerNewUser",
            Function::UpdateUserLicense => "updateUserLicense",
            Function::CheckProvider => "checkProvider",
            Function::CheckUser => "checkUser",
            Function::ContractPayout => "contractPayout",
        }
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Function {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Function::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown function `{s}`"))
    }
}

/// Gas cost of one function. `transaction` is what gets charged; `execution`
/// is kept as metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GasEntry {
    pub transaction: Gas,
    pub execution: Gas,
}

impl GasEntry {
    pub const fn new(transaction: Gas, execution: Gas) -> Self {
        GasEntry {
            transaction,
            execution,
        }
    }
}

/// Default per-requester surcharge on `updateData`, in gas. Solves
/// `(updateCost(60) - updateCost(0)) / 60` from the $5.40 and $64.30
/// endpoints at 72 Gwei and $1716.52/ETH.
pub const DEFAULT_PER_REQUESTER_UPDATE_GAS: Gas = 7_943;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GasSchedule {
    entries: BTreeMap<Function, GasEntry>,
    pub per_requester_update_gas: Gas,
}

impl Default for GasSchedule {
    fn default() -> Self {
        use Function::*;
        let entries = [
            // dataset contract
            (Deployment, GasEntry::new(6_724_230, 5_118_378)),
            (PublishData, GasEntry::new(95_560, 72_560)),
            (UpdateData, GasEntry::new(43_799, 20_863)),
            (AddDataRequester, GasEntry::new(475_067, 453_411)),
            (RenewToken, GasEntry::new(45_211, 23_747)),
            (SetLicense, GasEntry::new(39_339, 37_075)),
            (SetRegistryAddress, GasEntry::new(37_131, 14_515)),
            (SetProfitMargin, GasEntry::new(35_091, 13_627)),
            (SetPrice, GasEntry::new(31_062, 9_406)),
            // not tabulated: setMultis mirrors setProfitMargin, withdraw and
            // destroy use the 21k intrinsic cost plus a value call / selfdestruct
            (SetMultis, GasEntry::new(35_091, 13_627)),
            (Withdraw, GasEntry::new(30_000, 9_000)),
            (Destroy, GasEntry::new(26_000, 5_000)),
            // registry contract
            (RegistryDeployment, GasEntry::new(621_087, 432_315)),
            (NewDataProvider, GasEntry::new(44_855, 22_175)),
            (RegisterNewUser, GasEntry::new(45_669, 22_797)),
            (UpdateUserLicense, GasEntry::new(27_732, 6_268)),
            (CheckProvider, GasEntry::new(23_991, 1_311)),
            (CheckUser, GasEntry::new(23_877, 1_197)),
        ]
        .into_iter()
        .collect();
        GasSchedule {
            entries,
            per_requester_update_gas: DEFAULT_PER_REQUESTER_UPDATE_GAS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("gas entry for `{0}` must be strictly positive")]
    NonPositive(String),
    #[error("`{0}` is an internal transfer and cannot be metered")]
    Unmeterable(Function),
}

impl GasSchedule {
    /// A schedule with no function entries.
    pub fn empty(per_requester_update_gas: Gas) -> Self {
        GasSchedule {
            entries: BTreeMap::new(),
            per_requester_update_gas,
        }
    }

    pub fn get(&self, function: Function) -> Option<GasEntry> {
        self.entries.get(&function).copied()
    }

    pub fn transaction_gas(&self, function: Function) -> Option<Gas> {
        self.get(function).map(|e| e.transaction)
    }

    pub fn set(&mut self, function: Function, entry: GasEntry) -> Result<(), ScheduleError> {
        if function == Function::ContractPayout {
            return Err(ScheduleError::Unmeterable(function));
        }
        if entry.transaction == 0 {
            return Err(ScheduleError::NonPositive(function.to_string()));
        }
        self.entries.insert(function, entry);
        Ok(())
    }

    pub fn set_per_requester_update_gas(&mut self, gas: Gas) -> Result<(), ScheduleError> {
        if gas == 0 {
            return Err(ScheduleError::NonPositive("perRequesterUpdateGas".into()));
        }
        self.per_requester_update_gas = gas;
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = (Function, GasEntry)> + '_ {
        self.entries.iter().map(|(f, e)| (*f, *e))
    }
}

/// Gas price and exchange rate, both fixed for a run.
///
/// The exchange rate is held in US cents per ETH so that wei → cents is an
/// exact integer computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceModel {
    pub gas_price_wei: Wei,
    pub eth_usd_cents: u64,
}

impl Default for PriceModel {
    fn default() -> Self {
        PriceModel {
            gas_price_wei: 72 * WEI_PER_GWEI,
            eth_usd_cents: 171_652,
        }
    }
}

impl PriceModel {
    /// Builds a price model from a gas price in Gwei and a USD/ETH rate.
    /// Returns `None` unless both round to strictly positive values.
    pub fn from_gwei(gas_price_gwei: f64, eth_usd: f64) -> Option<Self> {
        if !gas_price_gwei.is_finite() || !eth_usd.is_finite() {
            return None;
        }
        let gas_price_wei = (gas_price_gwei * WEI_PER_GWEI as f64).round();
        let eth_usd_cents = (eth_usd * 100.0).round();
        if gas_price_wei < 1.0 || eth_usd_cents < 1.0 {
            return None;
        }
        Some(PriceModel {
            gas_price_wei: gas_price_wei as Wei,
            eth_usd_cents: eth_usd_cents as u64,
        })
    }

    pub fn gas_price_gwei(&self) -> f64 {
        self.gas_price_wei as f64 / WEI_PER_GWEI as f64
    }

    pub fn eth_usd(&self) -> f64 {
        self.eth_usd_cents as f64 / 100.0
    }

    pub fn fee(&self, gas: Gas) -> Wei {
        Wei::from(gas) * self.gas_price_wei
    }

    /// USD value as a float, for analytics.
    pub fn wei_to_usd(&self, amount: Wei) -> f64 {
        amount as f64 * self.eth_usd_cents as f64 / (WEI_PER_ETH as f64 * 100.0)
    }

    /// USD value in cents, rounded half-up. Exact integer arithmetic.
    pub fn wei_to_cents(&self, amount: Wei) -> u128 {
        (amount * u128::from(self.eth_usd_cents) + WEI_PER_ETH / 2) / WEI_PER_ETH
    }

    /// Signed variant of [`PriceModel::wei_to_cents`] (half away from zero).
    pub fn signed_wei_to_cents(&self, amount: i128) -> i128 {
        let cents = self.wei_to_cents(amount.unsigned_abs()) as i128;
        if amount < 0 {
            -cents
        } else {
            cents
        }
    }
}

/// Formats cents as a plain decimal dollar amount, e.g. `-12.05`.
pub fn format_cents(cents: i128) -> String {
    let sign = if cents < 0 { "-" } else { "" };
    let abs = cents.unsigned_abs();
    format!("{sign}{}.{:02}", abs / 100, abs % 100)
}

/// Formats wei as ETH with all 18 decimals, trailing zeros trimmed.
pub fn format_eth(amount: Wei) -> String {
    let whole = amount / WEI_PER_ETH;
    let frac = amount % WEI_PER_ETH;
    if frac == 0 {
        return whole.to_string();
    }
    let digits = format!("{frac:018}");
    format!("{whole}.{}", digits.trim_end_matches('0'))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxReceipt {
    pub index: usize,
    pub period: Period,
    pub caller: Address,
    pub function: Function,
    pub gas_used: Gas,
    pub gas_fee_wei: Wei,
    pub value_wei: Wei,
    pub recipient: Option<Address>,
}

impl TxReceipt {
    pub fn total_wei(&self) -> Wei {
        self.gas_fee_wei + self.value_wei
    }

    pub fn usd_cost(&self, price: &PriceModel) -> f64 {
        price.wei_to_usd(self.gas_fee_wei)
    }
}

/// The ledger. Confined to a single simulation run.
#[derive(Debug, Clone)]
pub struct ChainState {
    // indexed by address id; slot 0 is the null address
    balances: Vec<Option<Wei>>,
    miner: Address,
    schedule: GasSchedule,
    price: PriceModel,
    log: Vec<TxReceipt>,
    genesis: Vec<(Address, Wei)>,
    total_supply: Wei,
    period: Period,
}

impl ChainState {
    /// Creates a ledger holding only the miner sink (balance 0).
    pub fn new(schedule: GasSchedule, price: PriceModel) -> Self {
        let mut chain = ChainState {
            balances: vec![None],
            miner: Address::NULL,
            schedule,
            price,
            log: Vec::new(),
            genesis: Vec::new(),
            total_supply: 0,
            period: 0,
        };
        chain.miner = chain.alloc(0);
        chain
    }

    fn alloc(&mut self, balance: Wei) -> Address {
        let addr = Address(self.balances.len() as u64);
        self.balances.push(Some(balance));
        self.genesis.push((addr, balance));
        self.total_supply += balance;
        addr
    }

    /// Creates `n` accounts, each holding `prefund` wei.
    pub fn create_accounts(&mut self, n: usize, prefund: Wei) -> Vec<Address> {
        (0..n).map(|_| self.alloc(prefund)).collect()
    }

    /// Creates a zero-balance account for a contract.
    pub fn create_contract_account(&mut self) -> Address {
        self.alloc(0)
    }

    pub fn miner(&self) -> Address {
        self.miner
    }

    pub fn schedule(&self) -> &GasSchedule {
        &self.schedule
    }

    pub fn price(&self) -> &PriceModel {
        &self.price
    }

    pub fn period(&self) -> Period {
        self.period
    }

    pub fn set_period(&mut self, period: Period) {
        self.period = period;
    }

    pub fn exists(&self, addr: Address) -> bool {
        self.balance(addr).is_some()
    }

    pub fn balance(&self, addr: Address) -> Option<Wei> {
        self.balances.get(addr.0 as usize).copied().flatten()
    }

    /// Balances of every account in creation order, miner sink included.
    pub fn balances(&self) -> Vec<(Address, Wei)> {
        self.balances
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.map(|b| (Address(i as u64), b)))
            .collect()
    }

    /// Initial allocation of every account, in creation order.
    pub fn genesis(&self) -> &[(Address, Wei)] {
        &self.genesis
    }

    pub fn total_supply(&self) -> Wei {
        self.total_supply
    }

    pub fn total_balance(&self) -> Wei {
        self.balances.iter().flatten().sum()
    }

    pub fn log(&self) -> &[TxReceipt] {
        &self.log
    }

    /// Fee for calling `function` with `extra_gas` on top of its schedule entry.
    pub fn quote_fee(&self, function: Function, extra_gas: Gas) -> Result<(Gas, Wei), ChainError> {
        let base = self
            .schedule
            .transaction_gas(function)
            .ok_or(ChainError::UnknownFunction(function))?;
        let gas = base + extra_gas;
        Ok((gas, self.price.fee(gas)))
    }

    fn require(&self, addr: Address) -> Result<Wei, ChainError> {
        if addr.is_null() {
            return Err(ChainError::UnknownAccount(addr));
        }
        self.balance(addr).ok_or(ChainError::UnknownAccount(addr))
    }

    fn credit(&mut self, addr: Address, amount: Wei) {
        if let Some(Some(b)) = self.balances.get_mut(addr.0 as usize) {
            *b += amount;
        }
    }

    fn debit(&mut self, addr: Address, amount: Wei) {
        if let Some(Some(b)) = self.balances.get_mut(addr.0 as usize) {
            *b -= amount;
        }
    }

    /// Executes a metered transaction. Either everything is applied or
    /// nothing is: on error no balance changes and no gas is consumed.
    pub fn execute(
        &mut self,
        caller: Address,
        function: Function,
        extra_gas: Gas,
        value: Wei,
        recipient: Option<Address>,
    ) -> Result<TxReceipt, ChainError> {
        let (gas_used, fee) = self.quote_fee(function, extra_gas)?;
        let available = self.require(caller)?;
        if let Some(to) = recipient {
            self.require(to)?;
        }
        let needed = fee + value;
        if available < needed {
            return Err(ChainError::InsufficientFunds {
                caller,
                needed,
                available,
            });
        }
        self.debit(caller, needed);
        self.credit(self.miner, fee);
        if let Some(to) = recipient {
            self.credit(to, value);
        } else {
            // value without a recipient is burned into the sink
            self.credit(self.miner, value);
        }
        Ok(self.push(caller, function, gas_used, fee, value, recipient))
    }

    /// Unmetered transfer out of a contract account, used for withdrawals
    /// and self-destruction.
    pub fn payout(
        &mut self,
        from: Address,
        to: Address,
        amount: Wei,
    ) -> Result<TxReceipt, ChainError> {
        let available = self.require(from)?;
        self.require(to)?;
        if available < amount {
            return Err(ChainError::InsufficientFunds {
                caller: from,
                needed: amount,
                available,
            });
        }
        self.debit(from, amount);
        self.credit(to, amount);
        Ok(self.push(from, Function::ContractPayout, 0, 0, amount, Some(to)))
    }

    fn push(
        &mut self,
        caller: Address,
        function: Function,
        gas_used: Gas,
        gas_fee_wei: Wei,
        value_wei: Wei,
        recipient: Option<Address>,
    ) -> TxReceipt {
        let receipt = TxReceipt {
            index: self.log.len(),
            period: self.period,
            caller,
            function,
            gas_used,
            gas_fee_wei,
            value_wei,
            recipient,
        };
        self.log.push(receipt.clone());
        receipt
    }
}

/// Writes a transaction log as CSV:
/// `index,period,caller,function,gasUsed,gasFeeWei,valueWei,recipient,usdCost`.
pub fn write_tx_log_csv<W: io::Write>(
    receipts: &[TxReceipt],
    price: &PriceModel,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record([
        "index",
        "period",
        "caller",
        "function",
        "gasUsed",
        "gasFeeWei",
        "valueWei",
        "recipient",
        "usdCost",
    ])?;
    for r in receipts {
        w.write_record([
            r.index.to_string(),
            r.period.to_string(),
            r.caller.to_string(),
            r.function.to_string(),
            r.gas_used.to_string(),
            r.gas_fee_wei.to_string(),
            r.value_wei.to_string(),
            r.recipient.map(|a| a.to_string()).unwrap_or_default(),
            format_cents(price.wei_to_cents(r.gas_fee_wei) as i128),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> ChainState {
        ChainState::new(GasSchedule::default(), PriceModel::default())
    }

    #[test]
    fn accounts_are_prefunded() {
        let mut c = chain();
        let accts = c.create_accounts(1000, 100 * WEI_PER_ETH);
        assert_eq!(accts.len(), 1000);
        assert!(accts
            .iter()
            .all(|a| c.balance(*a) == Some(100 * WEI_PER_ETH)));
        assert_eq!(c.balance(c.miner()), Some(0));
        let mut sorted = accts.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), 1000);
    }

    #[test]
    fn zero_prefund_and_total_value() {
        let mut c = chain();
        let a = c.create_accounts(1, 0);
        assert_eq!(c.balance(a[0]), Some(0));

        let mut c = chain();
        c.create_accounts(3, 5 * WEI_PER_ETH);
        assert_eq!(c.total_balance(), 15 * WEI_PER_ETH);
        assert_eq!(c.total_supply(), 15 * WEI_PER_ETH);
    }

    #[test]
    fn null_address_holds_nothing() {
        let c = chain();
        assert!(!c.exists(Address::NULL));
        assert_eq!(Address::NULL.to_string(), format!("0x{}", "0".repeat(40)));
    }

    #[test]
    fn deployment_fee_matches_table() {
        let mut c = chain();
        let p = c.create_accounts(1, 100 * WEI_PER_ETH)[0];
        let r = c.execute(p, Function::Deployment, 0, 0, None).unwrap();
        assert_eq!(r.gas_used, 6_724_230);
        assert_eq!(r.gas_fee_wei, 484_144_560_000_000_000);
        assert!((r.usd_cost(c.price()) - 831.03).abs() <= 0.02);
        assert_eq!(c.balance(c.miner()), Some(r.gas_fee_wei));
    }

    #[test]
    fn add_data_requester_fee() {
        let mut c = chain();
        let p = c.create_accounts(1, WEI_PER_ETH)[0];
        let r = c
            .execute(p, Function::AddDataRequester, 0, 0, None)
            .unwrap();
        assert_eq!(r.gas_fee_wei, 34_204_824_000_000_000);
        assert_eq!(c.price().wei_to_cents(r.gas_fee_wei), 5871);
    }

    #[test]
    fn insufficient_funds_is_atomic() {
        let mut c = chain();
        let p = c.create_accounts(1, WEI_PER_ETH / 10)[0];
        let q = c.create_accounts(1, 0)[0];
        let err = c.execute(p, Function::Deployment, 0, 0, None).unwrap_err();
        assert!(matches!(err, ChainError::InsufficientFunds { .. }));
        // fee affordable but fee + value is not
        let err = c
            .execute(p, Function::UpdateData, 0, WEI_PER_ETH / 10, Some(q))
            .unwrap_err();
        assert!(matches!(err, ChainError::InsufficientFunds { .. }));
        assert_eq!(c.balance(p), Some(WEI_PER_ETH / 10));
        assert_eq!(c.balance(q), Some(0));
        assert!(c.log().is_empty());
    }

    #[test]
    fn unknown_function_is_rejected() {
        let mut c = ChainState::new(GasSchedule::empty(1), PriceModel::default());
        let p = c.create_accounts(1, WEI_PER_ETH)[0];
        assert_eq!(
            c.execute(p, Function::UpdateData, 0, 0, None),
            Err(ChainError::UnknownFunction(Function::UpdateData))
        );
        assert_eq!(
            c.execute(p, Function::ContractPayout, 0, 0, None)
                .unwrap_err(),
            ChainError::UnknownFunction(Function::ContractPayout)
        );
    }

    #[test]
    fn value_transfer_and_payout_conserve() {
        let mut c = chain();
        let a = c.create_accounts(2, 10 * WEI_PER_ETH);
        let contract = c.create_contract_account();
        c.execute(
            a[0],
            Function::AddDataRequester,
            0,
            WEI_PER_ETH,
            Some(contract),
        )
        .unwrap();
        assert_eq!(c.balance(contract), Some(WEI_PER_ETH));
        c.payout(contract, a[1], WEI_PER_ETH).unwrap();
        assert_eq!(c.balance(contract), Some(0));
        assert_eq!(c.total_balance(), c.total_supply());
        assert_eq!(c.log().len(), 2);
        assert_eq!(c.log()[1].function, Function::ContractPayout);
    }

    #[test]
    fn usd_conversion() {
        let p = PriceModel::default();
        assert_eq!(p.wei_to_cents(0), 0);
        assert_eq!(format_cents(p.wei_to_cents(0) as i128), "0.00");
        // 0.48414 ETH x 1716.52 = 831.036...
        let oracle = (48_414u128 * 171_652 + 50_000) / 100_000;
        assert_eq!(p.wei_to_cents(484_140_000_000_000_000), oracle);
        assert!((oracle as i128 - 83_103).abs() <= 2);
        let registry = p.wei_to_cents(44_720_000_000_000_000) as i128;
        assert!((registry - 7_676).abs() <= 2);
        assert_eq!(format_cents(-1205), "-12.05");
        assert_eq!(
            p.signed_wei_to_cents(-484_140_000_000_000_000),
            -(oracle as i128)
        );
    }

    #[test]
    fn price_model_from_floats() {
        let p = PriceModel::from_gwei(72.0, 1716.52).unwrap();
        assert_eq!(p, PriceModel::default());
        assert!(PriceModel::from_gwei(0.0, 1716.52).is_none());
        assert!(PriceModel::from_gwei(72.0, -1.0).is_none());
    }

    #[test]
    fn schedule_rejects_zero_gas() {
        let mut s = GasSchedule::default();
        assert!(s.set(Function::UpdateData, GasEntry::new(0, 0)).is_err());
        assert!(s
            .set(Function::ContractPayout, GasEntry::new(1, 1))
            .is_err());
        assert!(s.set_per_requester_update_gas(0).is_err());
        assert!(s.entries().all(|(_, e)| e.transaction > 0));
    }

    #[test]
    fn function_names_round_trip() {
        for f in Function::ALL {
            assert_eq!(f.name().parse::<Function>(), Ok(f));
        }
        assert!("selfDestruct".parse::<Function>().is_err());
    }

    #[test]
    fn eth_formatting() {
        assert_eq!(format_eth(484_144_560_000_000_000), "0.48414456");
        assert_eq!(format_eth(3 * WEI_PER_ETH), "3");
    }

    #[test]
    fn tx_log_csv_layout() {
        let mut c = chain();
        let p = c.create_accounts(1, WEI_PER_ETH)[0];
        c.execute(p, Function::UpdateData, 0, 0, None).unwrap();
        let mut buf = Vec::new();
        write_tx_log_csv(c.log(), c.price(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("index,period,caller,function,gasUsed,gasFeeWei,valueWei,recipient,usdCost")
        );
        assert_eq!(
            lines.next().unwrap(),
            format!("0,0,{p},updateData,43799,3153528000000000,0,,5.41")
        );
        assert!(!text.contains('\r'));
    }
}

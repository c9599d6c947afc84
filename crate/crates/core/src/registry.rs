//! Gateway contract mapping addresses to verified roles and licenses.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{Address, ChainError, ChainState, Function, TxReceipt};

/// License class a user holds or a dataset requires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LicenseType(pub u16);

impl fmt::Display for LicenseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("{0} is not the registry authority")]
    NotAuthority(Address),
    #[error("{0} is already registered")]
    AlreadyRegistered(Address),
    #[error("{0} is not registered")]
    NotRegistered(Address),
    #[error("the null address cannot be registered")]
    NullAddress,
    #[error(transparent)]
    Chain(#[from] ChainError),
}

#[derive(Debug, Clone)]
pub struct Registry {
    address: Address,
    authority: Address,
    users: BTreeMap<Address, LicenseType>,
    providers: BTreeSet<Address>,
}

impl Registry {
    /// Deploys the registry; the deployer becomes the authority and pays.
    pub fn deploy(
        chain: &mut ChainState,
        authority: Address,
    ) -> Result<(Self, TxReceipt), RegistryError> {
        let receipt = chain.execute(authority, Function::RegistryDeployment, 0, 0, None)?;
        let address = chain.create_contract_account();
        Ok((
            Registry {
                address,
                authority,
                users: BTreeMap::new(),
                providers: BTreeSet::new(),
            },
            receipt,
        ))
    }

    pub fn address(&self) -> Address {
        self.address
    }

    pub fn authority(&self) -> Address {
        self.authority
    }

    fn authorize(&self, caller: Address, target: Address) -> Result<(), RegistryError> {
        if caller != self.authority {
            return Err(RegistryError::NotAuthority(caller));
        }
        if target.is_null() {
            return Err(RegistryError::NullAddress);
        }
        Ok(())
    }

    pub fn register_new_user(
        &mut self,
        chain: &mut ChainState,
        caller: Address,
        user: Address,
        license: LicenseType,
    ) -> Result<TxReceipt, RegistryError> {
        self.authorize(caller, user)?;
        if self.users.contains_key(&user) {
            return Err(RegistryError::AlreadyRegistered(user));
        }
        let receipt = chain.execute(caller, Function::RegisterNewUser, 0, 0, Some(self.address))?;
        self.users.insert(user, license);
        Ok(receipt)
    }

    pub fn new_data_provider(
        &mut self,
        chain: &mut ChainState,
        caller: Address,
        provider: Address,
    ) -> Result<TxReceipt, RegistryError> {
        self.authorize(caller, provider)?;
        if self.providers.contains(&provider) {
            return Err(RegistryError::AlreadyRegistered(provider));
        }
        let receipt = chain.execute(caller, Function::NewDataProvider, 0, 0, Some(self.address))?;
        self.providers.insert(provider);
        Ok(receipt)
    }

    pub fn update_user_license(
        &mut self,
        chain: &mut ChainState,
        caller: Address,
        user: Address,
        license: LicenseType,
    ) -> Result<TxReceipt, RegistryError> {
        self.authorize(caller, user)?;
        if !self.users.contains_key(&user) {
            return Err(RegistryError::NotRegistered(user));
        }
        let receipt = chain.execute(
            caller,
            Function::UpdateUserLicense,
            0,
            0,
            Some(self.address),
        )?;
        self.users.insert(user, license);
        Ok(receipt)
    }

    /// Free read used by other contracts.
    pub fn check_user(&self, user: Address, license: LicenseType) -> bool {
        self.users.get(&user) == Some(&license)
    }

    pub fn check_provider(&self, addr: Address) -> bool {
        self.providers.contains(&addr)
    }

    pub fn license_of(&self, user: Address) -> Option<LicenseType> {
        self.users.get(&user).copied()
    }

    /// `checkUser` issued as a standalone external transaction.
    pub fn check_user_metered(
        &self,
        chain: &mut ChainState,
        caller: Address,
        user: Address,
        license: LicenseType,
    ) -> Result<(bool, TxReceipt), RegistryError> {
        let receipt = chain.execute(caller, Function::CheckUser, 0, 0, Some(self.address))?;
        Ok((self.check_user(user, license), receipt))
    }

    /// `checkProvider` issued as a standalone external transaction.
    pub fn check_provider_metered(
        &self,
        chain: &mut ChainState,
        caller: Address,
        addr: Address,
    ) -> Result<(bool, TxReceipt), RegistryError> {
        let receipt = chain.execute(caller, Function::CheckProvider, 0, 0, Some(self.address))?;
        Ok((self.check_provider(addr), receipt))
    }

    pub fn users(&self) -> impl Iterator<Item = (Address, LicenseType)> + '_ {
        self.users.iter().map(|(a, l)| (*a, *l))
    }

    pub fn providers(&self) -> impl Iterator<Item = Address> + '_ {
        self.providers.iter().copied()
    }

    /// Snapshot as CSV: `address,role,license`. Provider rows carry an empty
    /// license; an address registered both ways yields two rows.
    pub fn write_snapshot_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["address", "role", "license"])?;
        for p in &self.providers {
            w.write_record([p.to_string(), "provider".into(), String::new()])?;
        }
        for (u, l) in &self.users {
            w.write_record([u.to_string(), "user".into(), l.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{GasSchedule, PriceModel, WEI_PER_ETH};

    const L1: LicenseType = LicenseType(1);
    const L2: LicenseType = LicenseType(2);

    fn setup() -> (ChainState, Registry, Vec<Address>) {
        let mut chain = ChainState::new(GasSchedule::default(), PriceModel::default());
        let accts = chain.create_accounts(4, 100 * WEI_PER_ETH);
        let (reg, _) = Registry::deploy(&mut chain, accts[0]).unwrap();
        (chain, reg, accts)
    }

    #[test]
    fn register_and_check_user() {
        let (mut chain, mut reg, a) = setup();
        let r = reg.register_new_user(&mut chain, a[0], a[1], L1).unwrap();
        assert!(reg.check_user(a[1], L1));
        assert!(!reg.check_user(a[1], L2));
        assert_eq!(r.gas_used, 45_669);
        assert_eq!(chain.price().wei_to_cents(r.gas_fee_wei), 564);
        assert_eq!(
            reg.register_new_user(&mut chain, a[0], a[1], L1),
            Err(RegistryError::AlreadyRegistered(a[1]))
        );
    }

    #[test]
    fn only_authority_mutates() {
        let (mut chain, mut reg, a) = setup();
        assert_eq!(
            reg.register_new_user(&mut chain, a[1], a[2], L1),
            Err(RegistryError::NotAuthority(a[1]))
        );
        assert_eq!(
            reg.new_data_provider(&mut chain, a[2], a[2]),
            Err(RegistryError::NotAuthority(a[2]))
        );
        assert_eq!(
            reg.update_user_license(&mut chain, a[3], a[2], L1),
            Err(RegistryError::NotAuthority(a[3]))
        );
        assert!(!reg.check_user(a[2], L1));
    }

    #[test]
    fn provider_registration() {
        let (mut chain, mut reg, a) = setup();
        let r = reg.new_data_provider(&mut chain, a[0], a[1]).unwrap();
        assert!(reg.check_provider(a[1]));
        assert!(!reg.check_provider(a[2]));
        assert!(!reg.check_provider(Address::NULL));
        assert_eq!(chain.price().wei_to_cents(r.gas_fee_wei), 554);
        assert_eq!(
            reg.new_data_provider(&mut chain, a[0], a[1]),
            Err(RegistryError::AlreadyRegistered(a[1]))
        );
        // an address may hold both roles
        reg.register_new_user(&mut chain, a[0], a[1], L1).unwrap();
        assert!(reg.check_provider(a[1]) && reg.check_user(a[1], L1));
    }

    #[test]
    fn license_update() {
        let (mut chain, mut reg, a) = setup();
        assert_eq!(
            reg.update_user_license(&mut chain, a[0], a[1], L2),
            Err(RegistryError::NotRegistered(a[1]))
        );
        reg.register_new_user(&mut chain, a[0], a[1], L1).unwrap();
        let r = reg.update_user_license(&mut chain, a[0], a[1], L2).unwrap();
        assert!(reg.check_user(a[1], L2));
        assert!(!reg.check_user(a[1], L1));
        assert_eq!(chain.price().wei_to_cents(r.gas_fee_wei), 343);
    }

    #[test]
    fn null_address_rejected() {
        let (mut chain, mut reg, a) = setup();
        assert_eq!(
            reg.register_new_user(&mut chain, a[0], Address::NULL, L1),
            Err(RegistryError::NullAddress)
        );
        assert!(!reg.check_user(Address::NULL, L1));
    }

    #[test]
    fn metered_checks_charge_table_gas() {
        let (mut chain, mut reg, a) = setup();
        reg.register_new_user(&mut chain, a[0], a[1], L1).unwrap();
        let (ok, r) = reg.check_user_metered(&mut chain, a[2], a[1], L1).unwrap();
        assert!(ok);
        assert_eq!(r.gas_used, 23_877);
        let (ok, r) = reg.check_provider_metered(&mut chain, a[2], a[1]).unwrap();
        assert!(!ok);
        assert_eq!(r.gas_used, 23_991);
        // free reads leave the log alone
        let before = chain.log().len();
        reg.check_user(a[1], L1);
        assert_eq!(chain.log().len(), before);
    }

    #[test]
    fn snapshot_csv() {
        let (mut chain, mut reg, a) = setup();
        reg.new_data_provider(&mut chain, a[0], a[1]).unwrap();
        reg.register_new_user(&mut chain, a[0], a[2], L2).unwrap();
        let mut buf = Vec::new();
        reg.write_snapshot_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            format!(
                "address,role,license\n{},provider,\n{},user,L2\n",
                a[1], a[2]
            )
        );
    }
}

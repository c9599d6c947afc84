use crate::chain::{Address, ChainState, GasSchedule, PriceModel, WEI_PER_ETH};
use crate::dataset::{DatasetTerms, Scenario};
use crate::market::Marketplace;
use crate::registry::{LicenseType, Registry};

pub const L1: LicenseType = LicenseType(1);
pub const L2: LicenseType = LicenseType(2);

pub struct Fixture {
    pub market: Marketplace,
    pub authority: Address,
    pub provider: Address,
    pub requesters: Vec<Address>,
    /// Funded, but never registered.
    pub outsider: Address,
}

/// One registered provider and `n` requesters holding `L1`, 100 ETH each.
pub fn fixture(n: usize) -> Fixture {
    let mut chain = ChainState::new(GasSchedule::default(), PriceModel::default());
    let authority = chain.create_accounts(1, 100 * WEI_PER_ETH)[0];
    let provider = chain.create_accounts(1, 100 * WEI_PER_ETH)[0];
    let requesters = chain.create_accounts(n, 100 * WEI_PER_ETH);
    let outsider = chain.create_accounts(1, 100 * WEI_PER_ETH)[0];
    let (registry, _) = Registry::deploy(&mut chain, authority).unwrap();
    let mut market = Marketplace::new(chain, registry);
    market.register_provider(authority, provider).unwrap();
    for r in &requesters {
        market.register_user(authority, *r, L1).unwrap();
    }
    Fixture {
        market,
        authority,
        provider,
        requesters,
        outsider,
    }
}

impl Fixture {
    pub fn publish(&mut self, scenario: Scenario) -> Address {
        self.publish_with(DatasetTerms::new(L1, scenario))
    }

    pub fn publish_with(&mut self, terms: DatasetTerms) -> Address {
        self.market
            .deploy_and_publish(self.provider, "data://test", terms)
            .unwrap()
            .0
    }

    /// Requests access paying exactly the quote.
    pub fn request(&mut self, requester: Address, dataset: Address) -> crate::token::TokenId {
        let q = self
            .market
            .quote_payment(dataset, crate::token::PaymentKind::Access)
            .unwrap();
        self.market
            .request_access(requester, dataset, q.current_expected_cost_wei)
            .unwrap()
            .0
    }
}

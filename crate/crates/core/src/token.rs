//! Access tokens: an adapted ERC-721 list where each entry binds a
//! requester (`user`) to a dataset for a limited number of periods.
//!
//! The minting provider is the token `owner`; only it may transfer
//! ownership. Users can read the link, renew, confirm compliance and burn,
//! nothing else.

use std::collections::BTreeMap;
use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};

use crate::chain::{Address, Function, Period, TxReceipt, Wei};
use crate::dataset::DatasetContract;
use crate::market::{Event, MarketError, Marketplace};
use crate::registry::LicenseType;

/// Periods of access granted by a request or a renewal.
pub const ACCESS_PERIODS: Period = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenId(pub u64);

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PaymentKind {
    Access,
    Renewal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BurnCause {
    /// The requester gave up access (and deleted their copy).
    Relinquished,
    /// The dataset's required license changed.
    LicenseChange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessToken {
    pub id: TokenId,
    pub dataset: Address,
    pub owner: Address,
    /// Current user; the null address once burned.
    pub user: Address,
    /// The requester the token was minted for. Never changes.
    pub holder: Address,
    pub license: LicenseType,
    pub minted_period: Period,
    pub access_until: Period,
    pub compliance: bool,
    pub burned: bool,
    pub remaining_at_burn: Period,
    pub burn_cause: Option<BurnCause>,
}

impl AccessToken {
    pub fn is_expired(&self, period: Period) -> bool {
        period >= self.access_until
    }
}

/// Quote shown to a requester before and after paying.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentQuote {
    pub current_expected_cost_wei: Wei,
    pub next_expected_cost_wei: Wei,
}

fn fraction_ceil(amount: Wei, pct: u32) -> Wei {
    (amount * Wei::from(pct)).div_ceil(100)
}

impl DatasetContract {
    /// Payment due for the next access request or renewal. Pure read.
    pub fn quote_payment(&self, kind: PaymentKind) -> Result<PaymentQuote, MarketError> {
        if self.destroyed {
            return Err(MarketError::Destroyed(self.address));
        }
        if !self.published {
            return Err(MarketError::NotPublished(self.address));
        }
        if !self.scenario.charges_requesters() {
            return Ok(PaymentQuote {
                current_expected_cost_wei: 0,
                next_expected_cost_wei: 0,
            });
        }
        let pct = match kind {
            PaymentKind::Access => self.access_fraction_pct,
            PaymentKind::Renewal => self.renew_fraction_pct,
        };
        let now = fraction_ceil(self.current_cost_wei, pct);
        let next = fraction_ceil(self.current_cost_wei - now, pct);
        Ok(PaymentQuote {
            current_expected_cost_wei: now,
            next_expected_cost_wei: next,
        })
    }

    fn apply_payment(&mut self, payment: Wei) {
        self.current_cost_wei = self.current_cost_wei.saturating_sub(payment);
        self.provider_earnings_wei += payment;
        self.balance_wei += payment;
    }
}

/// Every token ever minted, indexed by id, plus the live (dataset, user)
/// index that enforces one live token per pair.
#[derive(Debug, Clone, Default)]
pub struct TokenBook {
    tokens: Vec<AccessToken>,
    live: BTreeMap<(Address, Address), TokenId>,
}

impl TokenBook {
    pub fn get(&self, id: TokenId) -> Option<&AccessToken> {
        id.0.checked_sub(1)
            .and_then(|i| self.tokens.get(i as usize))
    }

    fn get_mut(&mut self, id: TokenId) -> Option<&mut AccessToken> {
        id.0.checked_sub(1)
            .and_then(|i| self.tokens.get_mut(i as usize))
    }

    pub fn iter(&self) -> impl Iterator<Item = &AccessToken> {
        self.tokens.iter()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn live_for(&self, dataset: Address, user: Address) -> Option<TokenId> {
        self.live.get(&(dataset, user)).copied()
    }

    pub fn live_count(&self) -> usize {
        self.live.len()
    }

    fn mint(&mut self, mut token: AccessToken) -> TokenId {
        let id = TokenId(self.tokens.len() as u64 + 1);
        token.id = id;
        self.live.insert((token.dataset, token.user), id);
        self.tokens.push(token);
        id
    }

    pub(crate) fn set_compliance(&mut self, id: TokenId, value: bool) {
        if let Some(t) = self.get_mut(id) {
            t.compliance = value;
        }
    }

    pub fn to_vec(&self) -> Vec<AccessToken> {
        self.tokens.clone()
    }
}

impl Marketplace {
    pub fn quote_payment(
        &self,
        dataset: Address,
        kind: PaymentKind,
    ) -> Result<PaymentQuote, MarketError> {
        self.contract(dataset)?.quote_payment(kind)
    }

    /// Gateway for every requester operation on a live contract.
    fn requester_guard(&self, dataset: Address) -> Result<&DatasetContract, MarketError> {
        let c = self.contract(dataset)?;
        if c.destroyed {
            return Err(MarketError::Destroyed(dataset));
        }
        if !c.published {
            return Err(MarketError::NotPublished(dataset));
        }
        Ok(c)
    }

    fn license_guard(&self, requester: Address, c: &DatasetContract) -> Result<(), MarketError> {
        if !self.registry.check_user(requester, c.required_license) {
            return Err(MarketError::LicenseMismatch {
                user: requester,
                required: c.required_license,
            });
        }
        Ok(())
    }

    fn live_guard(&self, requester: Address, dataset: Address) -> Result<TokenId, MarketError> {
        self.tokens
            .live_for(dataset, requester)
            .ok_or(MarketError::NoToken {
                dataset,
                user: requester,
            })
    }

    fn check_value(required: Wei, offered: Wei) -> Result<(), MarketError> {
        if offered < required {
            return Err(MarketError::InsufficientPayment { required, offered });
        }
        if offered > required {
            return Err(MarketError::Overpayment { required, offered });
        }
        Ok(())
    }

    /// Requests access. `value` must equal the access quote exactly
    /// (zero in the no-compensation scenario).
    pub fn request_access(
        &mut self,
        requester: Address,
        dataset: Address,
        value: Wei,
    ) -> Result<(TokenId, TxReceipt), MarketError> {
        let c = self.requester_guard(dataset)?;
        if self.tokens.live_for(dataset, requester).is_some() {
            return Err(MarketError::DuplicateToken {
                dataset,
                user: requester,
            });
        }
        self.license_guard(requester, c)?;
        let quote = c.quote_payment(PaymentKind::Access)?;
        Self::check_value(quote.current_expected_cost_wei, value)?;
        let (owner, license) = (c.owner, c.required_license);

        let receipt = self.chain.execute(
            requester,
            Function::AddDataRequester,
            0,
            value,
            Some(dataset),
        )?;
        let period = self.chain.period();
        let id = self.tokens.mint(AccessToken {
            id: TokenId(0),
            dataset,
            owner,
            user: requester,
            holder: requester,
            license,
            minted_period: period,
            access_until: period + ACCESS_PERIODS,
            compliance: true,
            burned: false,
            remaining_at_burn: 0,
            burn_cause: None,
        });
        let c = self.contract_mut(dataset)?;
        c.apply_payment(value);
        c.active_tokens.insert(id);
        Ok((id, receipt))
    }

    /// Extends access by [`ACCESS_PERIODS`] from `max(now, accessUntil)`.
    pub fn renew_access_time(
        &mut self,
        requester: Address,
        dataset: Address,
        value: Wei,
    ) -> Result<(TokenId, TxReceipt), MarketError> {
        let c = self.requester_guard(dataset)?;
        let id = self.live_guard(requester, dataset)?;
        self.license_guard(requester, c)?;
        let token = self.tokens.get(id).expect("live token");
        if !token.compliance {
            return Err(MarketError::ComplianceRequired { user: requester });
        }
        let quote = c.quote_payment(PaymentKind::Renewal)?;
        Self::check_value(quote.current_expected_cost_wei, value)?;

        let receipt =
            self.chain
                .execute(requester, Function::RenewToken, 0, value, Some(dataset))?;
        let period = self.chain.period();
        let token = self.tokens.get_mut(id).expect("live token");
        token.access_until = token.access_until.max(period) + ACCESS_PERIODS;
        self.contract_mut(dataset)?.apply_payment(value);
        Ok((id, receipt))
    }

    /// Marks the requester compliant with every update so far. Unmetered.
    pub fn confirm_compliance(
        &mut self,
        requester: Address,
        dataset: Address,
    ) -> Result<TokenId, MarketError> {
        let c = self.requester_guard(dataset)?;
        let id = self.live_guard(requester, dataset)?;
        self.license_guard(requester, c)?;
        self.tokens.set_compliance(id, true);
        self.events.push(Event::ComplianceConfirmed {
            period: self.chain.period(),
            dataset,
            user: requester,
            token: id,
        });
        Ok(id)
    }

    pub fn get_link(&self, requester: Address, dataset: Address) -> Result<&str, MarketError> {
        let c = self.requester_guard(dataset)?;
        let id = self.live_guard(requester, dataset)?;
        let token = self.tokens.get(id).expect("live token");
        let period = self.chain.period();
        if token.is_expired(period) {
            return Err(MarketError::Expired {
                until: token.access_until,
                period,
            });
        }
        self.license_guard(requester, c)?;
        Ok(&c.link)
    }

    /// Requester-initiated burn.
    pub fn burn(&mut self, requester: Address, id: TokenId) -> Result<(), MarketError> {
        let token = self.tokens.get(id).ok_or(MarketError::UnknownToken(id))?;
        if token.burned {
            return Err(MarketError::AlreadyBurned(id));
        }
        if token.user != requester {
            return Err(MarketError::NotTokenHolder(requester));
        }
        let c = self.contract(token.dataset)?;
        if c.destroyed {
            return Err(MarketError::Destroyed(c.address));
        }
        self.burn_token(id, BurnCause::Relinquished)
    }

    pub(crate) fn burn_token(&mut self, id: TokenId, cause: BurnCause) -> Result<(), MarketError> {
        let period = self.chain.period();
        let token = self
            .tokens
            .get_mut(id)
            .ok_or(MarketError::UnknownToken(id))?;
        if token.burned {
            return Err(MarketError::AlreadyBurned(id));
        }
        let holder = token.user;
        let dataset = token.dataset;
        token.remaining_at_burn = token.access_until.saturating_sub(period);
        token.user = Address::NULL;
        token.burned = true;
        token.burn_cause = Some(cause);
        token.compliance = cause == BurnCause::Relinquished;
        let remaining = token.remaining_at_burn;
        self.tokens.live.remove(&(dataset, holder));
        if let Some(c) = self.datasets.get_mut(&dataset) {
            c.active_tokens.remove(&id);
        }
        self.events.push(Event::TokenBurned {
            period,
            token: id,
            dataset,
            holder,
            cause,
            remaining,
        });
        Ok(())
    }

    /// Ownership transfer. Only the current owner may transfer; users never can.
    pub fn transfer_token(
        &mut self,
        caller: Address,
        id: TokenId,
        to: Address,
    ) -> Result<(), MarketError> {
        let token = self
            .tokens
            .get_mut(id)
            .ok_or(MarketError::UnknownToken(id))?;
        if token.burned {
            return Err(MarketError::AlreadyBurned(id));
        }
        if caller != token.owner || to.is_null() {
            return Err(MarketError::NotTokenHolder(caller));
        }
        token.owner = to;
        Ok(())
    }
}

/// Token table: `tokenId,dataset,user,mintedPeriod,accessUntil,compliance,burned,remainingAtBurn`.
pub fn write_tokens_csv<W: io::Write>(tokens: &[AccessToken], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record([
        "tokenId",
        "dataset",
        "user",
        "mintedPeriod",
        "accessUntil",
        "compliance",
        "burned",
        "remainingAtBurn",
    ])?;
    for t in tokens {
        w.write_record([
            t.id.to_string(),
            t.dataset.to_string(),
            t.user.to_string(),
            t.minted_period.to_string(),
            t.access_until.to_string(),
            t.compliance.to_string(),
            t.burned.to_string(),
            t.remaining_at_burn.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

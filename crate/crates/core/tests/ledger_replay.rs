use std::collections::HashMap;

use incentiveledger::reporting::{replay_ledger, summarize};
use incentiveledger::{
    run_simulation, ActionKind, Address, ChainState, Function, Role, Scenario, SimConfig,
    SimResult, Wei,
};

fn run(scenario: Scenario, seed: u64, accounts: usize, actions: usize) -> SimResult {
    let mut cfg = SimConfig::new(scenario).with_seed(seed);
    cfg.population.n_accounts = accounts;
    cfg.action_ticker = actions;
    run_simulation(&cfg).unwrap()
}

/// Re-executes every receipt on a fresh ledger built from genesis.
fn reexecute(r: &SimResult) -> ChainState {
    let mut chain = ChainState::new(r.config.schedule.clone(), r.config.price);
    for (addr, balance) in r.genesis.iter().skip(1) {
        let created = chain.create_accounts(1, *balance)[0];
        assert_eq!(created, *addr);
    }
    for tx in &r.tx_log {
        chain.set_period(tx.period);
        let again = if tx.function == Function::ContractPayout {
            chain
                .payout(tx.caller, tx.recipient.unwrap(), tx.value_wei)
                .unwrap()
        } else {
            let base = r.config.schedule.transaction_gas(tx.function).unwrap();
            chain
                .execute(
                    tx.caller,
                    tx.function,
                    tx.gas_used - base,
                    tx.value_wei,
                    tx.recipient,
                )
                .unwrap()
        };
        assert_eq!(&again, tx);
    }
    chain
}

/// Plain map arithmetic over the log, sharing no code with the ledger.
fn hand_balances(r: &SimResult) -> HashMap<Address, Wei> {
    let miner = r.genesis[0].0;
    let mut b: HashMap<Address, Wei> = r.genesis.iter().copied().collect();
    for tx in &r.tx_log {
        *b.get_mut(&tx.caller).unwrap() -= tx.gas_fee_wei + tx.value_wei;
        *b.get_mut(&miner).unwrap() += tx.gas_fee_wei;
        *b.get_mut(&tx.recipient.unwrap_or(miner)).unwrap() += tx.value_wei;
    }
    b
}

#[test]
fn fresh_ledger_reproduces_final_balances() {
    for scenario in [
        Scenario::NoCompensation,
        Scenario::CostCompensation,
        Scenario::Profit,
    ] {
        for seed in 0..3 {
            let r = run(scenario, seed, 200, 200);
            let chain = reexecute(&r);
            assert_eq!(chain.balances(), r.final_balances);
            assert_eq!(chain.total_balance(), chain.total_supply());
        }
    }
}

#[test]
fn hand_replay_agrees_with_both_replays() {
    let r = run(Scenario::Profit, 11, 300, 300);
    let hand = hand_balances(&r);
    let replay = replay_ledger(&r.genesis, &r.tx_log, r.genesis[0].0).unwrap();
    for (addr, bal) in &r.final_balances {
        assert_eq!(hand[addr], *bal);
        assert_eq!(replay[addr], *bal);
    }
}

#[test]
fn fees_and_payments_split_into_provider_and_requester_spend() {
    let r = run(Scenario::CostCompensation, 5, 300, 300);
    let summary = summarize(&r).unwrap();
    let records: Wei = r
        .records
        .iter()
        .map(|a| a.tx_gas_fee_wei + a.payment_wei)
        .sum();
    let provider_gas: Wei = r
        .records
        .iter()
        .filter(|a| a.kind.role() == Role::Provider)
        .map(|a| a.tx_gas_fee_wei)
        .sum();
    assert_eq!(provider_gas, summary.provider_cost_wei);
    assert_eq!(
        records,
        summary.provider_cost_wei + summary.requester_spend_wei
    );

    // every action transaction is in the log exactly once
    let mut seen = vec![false; r.tx_log.len()];
    for a in &r.records {
        for i in &a.tx_indices {
            assert!(!seen[*i]);
            seen[*i] = true;
        }
    }
    // the rest is onboarding by the registry authority
    for (i, tx) in r.tx_log.iter().enumerate() {
        if !seen[i] {
            assert_eq!(tx.caller, r.authority);
        }
    }
}

#[test]
fn authority_spends_exactly_its_funding() {
    let r = run(Scenario::CostCompensation, 2, 150, 50);
    let funded = r.genesis.iter().find(|(a, _)| *a == r.authority).unwrap().1;
    let left = r
        .final_balances
        .iter()
        .find(|(a, _)| *a == r.authority)
        .unwrap()
        .1;
    assert!(funded > 0);
    assert_eq!(left, 0);
}

#[test]
fn payments_reach_the_contract() {
    let r = run(Scenario::Profit, 8, 200, 200);
    let paid: Wei = r
        .records
        .iter()
        .filter(|a| matches!(a.kind, ActionKind::Request | ActionKind::Renew))
        .map(|a| a.payment_wei)
        .sum();
    let contracts: Wei = r
        .final_contracts
        .iter()
        .map(|c| {
            r.final_balances
                .iter()
                .find(|(a, _)| *a == c.address)
                .unwrap()
                .1
        })
        .sum();
    assert_eq!(paid, contracts);
    for c in &r.final_contracts {
        let on_chain = r
            .final_balances
            .iter()
            .find(|(a, _)| *a == c.address)
            .unwrap()
            .1;
        assert_eq!(c.balance_wei, on_chain);
    }
}

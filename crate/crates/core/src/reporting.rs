//! Turns a [`SimResult`] into CSV tables and a run summary.
//!
//! Wei is authoritative everywhere; USD columns are derived and carry two
//! decimals. Every function here is a pure function of the result.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{write_population_csv, Role};
use crate::chain::{
    format_cents, write_tx_log_csv, Address, Function, Period, PriceModel, TxReceipt, Wei,
};
use crate::dataset::write_contract_snapshots_csv;
use crate::engine::{break_even_period, ActionKind, SimResult};
use crate::token::write_tokens_csv;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("summary does not reconcile with the ledger: {0}")]
    ReconciliationFailure(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("in-memory writer cannot fail");
    String::from_utf8(bytes).expect("csv output is utf-8")
}

fn usd(price: &PriceModel, wei: Wei) -> String {
    format_cents(price.wei_to_cents(wei) as i128)
}

fn usd_signed(price: &PriceModel, wei: i128) -> String {
    format_cents(price.signed_wei_to_cents(wei))
}

/// `index,period,kind,actor,dataset,gasUsed,txGasFeeWei,paymentWei,currentCostAfterWei,usdTotal`
pub fn actions_csv(r: &SimResult) -> String {
    let price = &r.config.price;
    let mut w = writer();
    w.write_record([
        "index",
        "period",
        "kind",
        "actor",
        "dataset",
        "gasUsed",
        "txGasFeeWei",
        "paymentWei",
        "currentCostAfterWei",
        "usdTotal",
    ])
    .unwrap();
    for a in &r.records {
        w.write_record([
            a.index.to_string(),
            a.period.to_string(),
            a.kind.to_string(),
            a.actor.to_string(),
            a.dataset.to_string(),
            a.gas_used.to_string(),
            a.tx_gas_fee_wei.to_string(),
            a.payment_wei.to_string(),
            a.current_cost_after_wei.to_string(),
            usd(price, a.total_wei()),
        ])
        .unwrap();
    }
    finish(w)
}

pub fn periods_csv(r: &SimResult) -> String {
    let mut w = writer();
    w.write_record([
        "period",
        "currentCostWei",
        "providerCostWei",
        "providerEarningsWei",
        "profitWei",
        "activeRequesters",
        "actionsThisPeriod",
    ])
    .unwrap();
    for s in &r.series {
        w.write_record([
            s.period.to_string(),
            s.current_cost_wei.to_string(),
            s.provider_cost_wei.to_string(),
            s.provider_earnings_wei.to_string(),
            s.profit_wei.to_string(),
            s.active_requesters.to_string(),
            s.actions_this_period.to_string(),
        ])
        .unwrap();
    }
    finish(w)
}

/// Profit over time: `period,scenario,profitWei,profitUsd`.
pub fn profit_series_csv(r: &SimResult) -> String {
    let price = &r.config.price;
    let mut w = writer();
    w.write_record(["period", "scenario", "profitWei", "profitUsd"])
        .unwrap();
    for s in &r.series {
        w.write_record([
            s.period.to_string(),
            r.config.scenario.to_string(),
            s.profit_wei.to_string(),
            usd_signed(price, s.profit_wei),
        ])
        .unwrap();
    }
    finish(w)
}

/// Running cost with the individual transactions overlaid.
///
/// `cost` rows give the running cost at the end of each period; `tx` rows
/// give each action with the running cost right after it, so updates show
/// up as upward jumps. Columns: `series,period,index,kind,currentCostWei,paymentWei,usd`.
pub fn cost_overlay_csv(r: &SimResult) -> String {
    let price = &r.config.price;
    let mut w = writer();
    w.write_record([
        "series",
        "period",
        "index",
        "kind",
        "currentCostWei",
        "paymentWei",
        "usd",
    ])
    .unwrap();
    for s in &r.series {
        w.write_record([
            "cost".to_string(),
            s.period.to_string(),
            String::new(),
            String::new(),
            s.current_cost_wei.to_string(),
            String::new(),
            usd(price, s.current_cost_wei),
        ])
        .unwrap();
    }
    for a in &r.records {
        w.write_record([
            "tx".to_string(),
            a.period.to_string(),
            a.index.to_string(),
            a.kind.to_string(),
            a.current_cost_after_wei.to_string(),
            a.payment_wei.to_string(),
            usd(price, a.total_wei()),
        ])
        .unwrap();
    }
    finish(w)
}

/// Base gas vs additional payment, per requester action kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub kind: ActionKind,
    pub count: usize,
    pub base_wei: Wei,
    pub additional_wei: Wei,
}

impl CostBreakdown {
    pub fn mean_base_usd(&self, price: &PriceModel) -> f64 {
        mean(price.wei_to_usd(self.base_wei), self.count)
    }

    pub fn mean_additional_usd(&self, price: &PriceModel) -> f64 {
        mean(price.wei_to_usd(self.additional_wei), self.count)
    }
}

fn mean(total: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

pub fn requester_cost_breakdown(r: &SimResult) -> Vec<CostBreakdown> {
    [ActionKind::Request, ActionKind::Renew]
        .into_iter()
        .map(|kind| {
            let rows = r.records.iter().filter(|a| a.kind == kind);
            let mut b = CostBreakdown {
                kind,
                count: 0,
                base_wei: 0,
                additional_wei: 0,
            };
            for a in rows {
                b.count += 1;
                b.base_wei += a.tx_gas_fee_wei;
                b.additional_wei += a.payment_wei;
            }
            b
        })
        .collect()
}

pub fn requester_cost_breakdown_csv(r: &SimResult) -> String {
    let price = &r.config.price;
    let mut w = writer();
    w.write_record([
        "kind",
        "count",
        "baseWei",
        "additionalWei",
        "meanBaseUsd",
        "meanAdditionalUsd",
    ])
    .unwrap();
    for b in requester_cost_breakdown(r) {
        w.write_record([
            b.kind.to_string(),
            b.count.to_string(),
            b.base_wei.to_string(),
            b.additional_wei.to_string(),
            format!("{:.2}", b.mean_base_usd(price)),
            format!("{:.2}", b.mean_additional_usd(price)),
        ])
        .unwrap();
    }
    finish(w)
}

/// Total spend (gas plus payments) per requester, highest first, ties by address.
pub fn requester_totals(r: &SimResult) -> Vec<(Address, Wei)> {
    let mut totals: BTreeMap<Address, Wei> = BTreeMap::new();
    for a in r
        .records
        .iter()
        .filter(|a| a.kind.role() == Role::Requester)
    {
        *totals.entry(a.actor).or_default() += a.total_wei();
    }
    let mut v: Vec<_> = totals.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v
}

/// Total gas spend per provider, from the contracts' own bookkeeping.
pub fn provider_totals(r: &SimResult) -> Vec<(Address, Wei)> {
    let mut totals: BTreeMap<Address, Wei> = BTreeMap::new();
    for c in &r.final_contracts {
        *totals.entry(c.owner).or_default() += c.provider_cost_wei;
    }
    totals.into_iter().collect()
}

/// Provider totals next to the `k` biggest-spending requesters:
/// `rank,role,address,totalWei,totalUsd`.
pub fn top_requesters_vs_provider_csv(r: &SimResult, k: usize) -> String {
    let price = &r.config.price;
    let mut w = writer();
    w.write_record(["rank", "role", "address", "totalWei", "totalUsd"])
        .unwrap();
    for (addr, total) in provider_totals(r) {
        w.write_record([
            "0".to_string(),
            "provider".into(),
            addr.to_string(),
            total.to_string(),
            usd(price, total),
        ])
        .unwrap();
    }
    for (i, (addr, total)) in requester_totals(r).into_iter().take(k).enumerate() {
        w.write_record([
            (i + 1).to_string(),
            "requester".into(),
            addr.to_string(),
            total.to_string(),
            usd(price, total),
        ])
        .unwrap();
    }
    finish(w)
}

/// Five-number summary of per-action USD cost, for log-scale box plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostDistribution {
    pub role: Role,
    pub kind: ActionKind,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn cost_distribution_by_action(r: &SimResult) -> Vec<CostDistribution> {
    let price = &r.config.price;
    ActionKind::ALL
        .into_iter()
        .filter_map(|kind| {
            let mut v: Vec<f64> = r
                .records
                .iter()
                .filter(|a| a.kind == kind)
                .map(|a| a.usd_total(price))
                .collect();
            if v.is_empty() {
                return None;
            }
            v.sort_by(f64::total_cmp);
            Some(CostDistribution {
                role: kind.role(),
                kind,
                count: v.len(),
                min: v[0],
                q1: quantile(&v, 0.25),
                median: quantile(&v, 0.5),
                q3: quantile(&v, 0.75),
                max: v[v.len() - 1],
            })
        })
        .collect()
}

pub fn cost_distribution_csv(r: &SimResult) -> String {
    let mut w = writer();
    w.write_record([
        "role",
        "kind",
        "count",
        "minUsd",
        "q1Usd",
        "medianUsd",
        "q3Usd",
        "maxUsd",
    ])
    .unwrap();
    for d in cost_distribution_by_action(r) {
        w.write_record([
            d.role.to_string(),
            d.kind.to_string(),
            d.count.to_string(),
            format!("{:.2}", d.min),
            format!("{:.2}", d.q1),
            format!("{:.2}", d.median),
            format!("{:.2}", d.q3),
            format!("{:.2}", d.max),
        ])
        .unwrap();
    }
    finish(w)
}

/// Rebuilds balances from genesis and the transaction log alone.
///
/// Kept deliberately separate from the ledger implementation so the two
/// can check each other.
pub fn replay_ledger(
    genesis: &[(Address, Wei)],
    log: &[TxReceipt],
    miner: Address,
) -> Result<BTreeMap<Address, Wei>, String> {
    let mut balances: BTreeMap<Address, Wei> = genesis.iter().copied().collect();
    for tx in log {
        let debit = tx.gas_fee_wei + tx.value_wei;
        let from = balances
            .get_mut(&tx.caller)
            .ok_or_else(|| format!("tx {}: unknown caller {}", tx.index, tx.caller))?;
        *from = from
            .checked_sub(debit)
            .ok_or_else(|| format!("tx {}: {} overdrawn", tx.index, tx.caller))?;
        *balances
            .get_mut(&miner)
            .ok_or_else(|| "miner sink missing from genesis".to_string())? += tx.gas_fee_wei;
        let to = tx.recipient.unwrap_or(miner);
        *balances
            .get_mut(&to)
            .ok_or_else(|| format!("tx {}: unknown recipient {to}", tx.index))? += tx.value_wei;
    }
    Ok(balances)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub scenario: u8,
    pub total_actions: usize,
    pub periods: usize,
    pub publishes: usize,
    pub updates: usize,
    pub requests: usize,
    pub renewals: usize,
    pub requesters: usize,
    pub provider_cost_wei: Wei,
    pub provider_earnings_wei: Wei,
    pub profit_wei: i128,
    pub current_cost_wei: Wei,
    pub requester_spend_wei: Wei,
    pub break_even_period: Option<Period>,
    pub top_requesters: Vec<(Address, Wei)>,
    #[serde(skip)]
    price: PriceModel,
}

impl RunSummary {
    pub fn count(&self, kind: ActionKind) -> usize {
        match kind {
            ActionKind::Publish => self.publishes,
            ActionKind::Update => self.updates,
            ActionKind::Request => self.requests,
            ActionKind::Renew => self.renewals,
        }
    }

    /// Actions of `kind` per simulated period.
    pub fn frequency(&self, kind: ActionKind) -> f64 {
        if self.periods == 0 {
            0.0
        } else {
            self.count(kind) as f64 / self.periods as f64
        }
    }

    pub fn provider_cost_usd(&self) -> f64 {
        self.price.wei_to_usd(self.provider_cost_wei)
    }

    pub fn provider_earnings_usd(&self) -> f64 {
        self.price.wei_to_usd(self.provider_earnings_wei)
    }

    pub fn to_text(&self) -> String {
        let p = &self.price;
        let mut s = String::new();
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "scenario: {}", self.scenario);
        let _ = writeln!(
            s,
            "actions: {} over {} periods",
            self.total_actions, self.periods
        );
        for kind in ActionKind::ALL {
            let _ = writeln!(
                s,
                "  {:<8} {:>5}  ({:.2}/period)",
                kind.name(),
                self.count(kind),
                self.frequency(kind)
            );
        }
        let _ = writeln!(s, "requesters: {}", self.requesters);
        let _ = writeln!(s, "provider cost: ${}", usd(p, self.provider_cost_wei));
        let _ = writeln!(
            s,
            "provider earnings: ${}",
            usd(p, self.provider_earnings_wei)
        );
        let _ = writeln!(s, "profit: ${}", usd_signed(p, self.profit_wei));
        let _ = writeln!(
            s,
            "outstanding running cost: ${}",
            usd(p, self.current_cost_wei)
        );
        let _ = writeln!(s, "requester spend: ${}", usd(p, self.requester_spend_wei));
        let _ = writeln!(
            s,
            "break-even period: {}",
            self.break_even_period
                .map_or_else(|| "none".to_string(), |b| b.to_string())
        );
        for (i, (addr, total)) in self.top_requesters.iter().enumerate() {
            let _ = writeln!(s, "top requester {}: {} ${}", i + 1, addr, usd(p, *total));
        }
        s
    }

    /// One `key,value` row per statistic.
    pub fn to_csv(&self) -> String {
        let p = &self.price;
        let mut w = writer();
        w.write_record(["key", "value"]).unwrap();
        let mut row = |k: &str, v: String| w.write_record([k, &v]).unwrap();
        row("seed", self.seed.to_string());
        row("scenario", self.scenario.to_string());
        row("totalActions", self.total_actions.to_string());
        row("periods", self.periods.to_string());
        for kind in ActionKind::ALL {
            row(
                &format!("{}Count", kind.name()),
                self.count(kind).to_string(),
            );
            row(
                &format!("{}Frequency", kind.name()),
                format!("{:.4}", self.frequency(kind)),
            );
        }
        row("requesters", self.requesters.to_string());
        row("providerCostWei", self.provider_cost_wei.to_string());
        row("providerCostUsd", usd(p, self.provider_cost_wei));
        row(
            "providerEarningsWei",
            self.provider_earnings_wei.to_string(),
        );
        row("providerEarningsUsd", usd(p, self.provider_earnings_wei));
        row("profitWei", self.profit_wei.to_string());
        row("currentCostWei", self.current_cost_wei.to_string());
        row("requesterSpendWei", self.requester_spend_wei.to_string());
        row(
            "breakEvenPeriod",
            self.break_even_period
                .map(|b| b.to_string())
                .unwrap_or_default(),
        );
        for (i, (addr, total)) in self.top_requesters.iter().enumerate() {
            row(&format!("topRequester{}", i + 1), format!("{addr}:{total}"));
        }
        finish(w)
    }
}

fn reconcile(ok: bool, what: impl FnOnce() -> String) -> Result<(), ReportError> {
    if ok {
        Ok(())
    } else {
        Err(ReportError::ReconciliationFailure(what()))
    }
}

/// Summary statistics, cross-checked against an independent replay of the
/// transaction log.
pub fn summarize(r: &SimResult) -> Result<RunSummary, ReportError> {
    let miner = r
        .genesis
        .first()
        .map(|(a, _)| *a)
        .ok_or_else(|| ReportError::ReconciliationFailure("empty genesis".into()))?;
    let replayed =
        replay_ledger(&r.genesis, &r.tx_log, miner).map_err(ReportError::ReconciliationFailure)?;
    for (addr, bal) in &r.final_balances {
        let got = replayed.get(addr).copied().unwrap_or_default();
        reconcile(got == *bal, || {
            format!("{addr}: ledger {bal}, replay {got}")
        })?;
    }
    reconcile(replayed.len() == r.final_balances.len(), || {
        "account sets differ".into()
    })?;
    let supply: Wei = r.genesis.iter().map(|(_, b)| b).sum();
    let total: Wei = replayed.values().sum();
    reconcile(supply == total, || {
        format!("supply {supply} != total {total}")
    })?;

    for a in &r.records {
        let txs: Vec<&TxReceipt> = a
            .tx_indices
            .iter()
            .filter_map(|i| r.tx_log.get(*i))
            .collect();
        reconcile(txs.len() == a.tx_indices.len(), || {
            format!("action {} points past the log", a.index)
        })?;
        let fee: Wei = txs.iter().map(|t| t.gas_fee_wei).sum();
        let paid: Wei = txs.iter().map(|t| t.value_wei).sum();
        let same_actor = txs.iter().all(|t| t.caller == a.actor);
        reconcile(
            fee == a.tx_gas_fee_wei && paid == a.payment_wei && same_actor,
            || format!("action {} disagrees with its transactions", a.index),
        )?;
    }

    let payments: Wei = r.records.iter().map(|a| a.payment_wei).sum();
    let earnings: Wei = r
        .final_contracts
        .iter()
        .map(|c| c.provider_earnings_wei)
        .sum();
    reconcile(payments == earnings, || {
        format!("payments {payments} != earnings {earnings}")
    })?;

    // owner-paid gas on dataset contracts, straight from the log
    let owners: BTreeMap<Address, Address> = r
        .final_contracts
        .iter()
        .map(|c| (c.address, c.owner))
        .collect();
    let provider_cost: Wei = r.final_contracts.iter().map(|c| c.provider_cost_wei).sum();
    let logged_cost: Wei = r
        .tx_log
        .iter()
        .filter(|t| match t.recipient {
            Some(to) => {
                owners.get(&to) == Some(&t.caller) && t.function != Function::ContractPayout
            }
            None => t.function == Function::Deployment && owners.values().any(|o| *o == t.caller),
        })
        .map(|t| t.gas_fee_wei)
        .sum();
    reconcile(logged_cost == provider_cost, || {
        format!("provider cost {provider_cost} != logged {logged_cost}")
    })?;

    let last = r.series.last();
    let current_cost: Wei = r.final_contracts.iter().map(|c| c.current_cost_wei).sum();
    if let Some(last) = last {
        reconcile(
            last.provider_cost_wei == provider_cost
                && last.provider_earnings_wei == earnings
                && last.current_cost_wei == current_cost,
            || "final period stats disagree with contract state".into(),
        )?;
    }

    let requester_totals = requester_totals(r);
    let requester_spend: Wei = requester_totals.iter().map(|(_, t)| t).sum();
    let logged_spend: Wei = r
        .records
        .iter()
        .filter(|a| a.kind.role() == Role::Requester)
        .flat_map(|a| a.tx_indices.iter())
        .map(|i| r.tx_log[*i].total_wei())
        .sum();
    reconcile(requester_spend == logged_spend, || {
        "requester spend mismatch".into()
    })?;

    Ok(RunSummary {
        seed: r.config.seed,
        scenario: r.config.scenario.number(),
        total_actions: r.records.len(),
        periods: r.periods(),
        publishes: r.count(ActionKind::Publish),
        updates: r.count(ActionKind::Update),
        requests: r.count(ActionKind::Request),
        renewals: r.count(ActionKind::Renew),
        requesters: requester_totals.len(),
        provider_cost_wei: provider_cost,
        provider_earnings_wei: earnings,
        profit_wei: earnings as i128 - provider_cost as i128,
        current_cost_wei: current_cost,
        requester_spend_wei: requester_spend,
        break_even_period: break_even_period(r),
        top_requesters: requester_totals.into_iter().take(3).collect(),
        price: r.config.price,
    })
}

fn write(dir: &Path, name: &str, content: impl AsRef<[u8]>) -> Result<(), ReportError> {
    fs::write(dir.join(name), content)?;
    Ok(())
}

fn to_string<F>(f: F) -> Result<String, ReportError>
where
    F: FnOnce(&mut Vec<u8>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Writes the full report set for one run into `<out>/run-<seed>/` and
/// returns that directory.
pub fn write_run_report(r: &SimResult, out: &Path) -> Result<PathBuf, ReportError> {
    let summary = summarize(r)?;
    let dir = out.join(format!("run-{}", r.config.seed));
    fs::create_dir_all(&dir)?;
    write(&dir, "actions.csv", actions_csv(r))?;
    write(&dir, "periods.csv", periods_csv(r))?;
    write(
        &dir,
        "tokens.csv",
        to_string(|b| write_tokens_csv(&r.final_tokens, b))?,
    )?;
    write(
        &dir,
        "contracts.csv",
        to_string(|b| write_contract_snapshots_csv(&r.contract_series, b))?,
    )?;
    write(
        &dir,
        "transactions.csv",
        to_string(|b| write_tx_log_csv(&r.tx_log, &r.config.price, b))?,
    )?;
    write(
        &dir,
        "population.csv",
        to_string(|b| write_population_csv(&r.population, b))?,
    )?;
    write(
        &dir,
        "registry.csv",
        to_string(|b| r.registry.write_snapshot_csv(b))?,
    )?;
    write(&dir, "profit.csv", profit_series_csv(r))?;
    write(&dir, "cost_overlay.csv", cost_overlay_csv(r))?;
    write(&dir, "requester_costs.csv", requester_cost_breakdown_csv(r))?;
    write(
        &dir,
        "top_requesters.csv",
        top_requesters_vs_provider_csv(r, 3),
    )?;
    write(&dir, "cost_distribution.csv", cost_distribution_csv(r))?;
    write(&dir, "summary.csv", summary.to_csv())?;
    write(&dir, "summary.txt", summary.to_text())?;
    Ok(dir)
}

/// One row per run of a sweep: `cell,seed,scenario,accessFractionPct,profitMarginPct,breakEvenPeriod,periods,providerCostWei,profitWei`.
pub fn break_even_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a SimResult)>) -> String {
    let mut w = writer();
    w.write_record([
        "cell",
        "seed",
        "scenario",
        "accessFractionPct",
        "profitMarginPct",
        "breakEvenPeriod",
        "periods",
        "providerCostWei",
        "profitWei",
    ])
    .unwrap();
    for (cell, r) in rows {
        let last = r.series.last();
        w.write_record([
            cell.to_string(),
            r.config.seed.to_string(),
            r.config.scenario.to_string(),
            r.config.access_fraction_pct.to_string(),
            r.config.profit_margin_pct.to_string(),
            break_even_period(r)
                .map(|b| b.to_string())
                .unwrap_or_default(),
            r.periods().to_string(),
            last.map_or(0, |s| s.provider_cost_wei).to_string(),
            last.map_or(0, |s| s.profit_wei).to_string(),
        ])
        .unwrap();
    }
    finish(w)
}

//! `incentiveledger` command-line front end.
//!
//! `run` simulates one or more seeds and writes a full report per run,
//! `sweep` does the same over a grid of fractions and margins and adds an
//! aggregate `break_even.csv`, `gas` prints the effective gas schedule.
//!
//! Settings come from flags, then from the `--config` file, then from the
//! built-in defaults. The merged result is written back as `config.toml`
//! at the top of the output tree.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use incentiveledger::chain::GasEntry;
use incentiveledger::engine::{default_margin, EngineError};
use incentiveledger::reporting::{break_even_csv, summarize, write_run_report};
use incentiveledger::{
    break_even_period, sweep, Function, GasSchedule, Period, PriceModel, Scenario, SimConfig,
    SimResult,
};
use serde::{Deserialize, Serialize};

const OUT_ENV: &str = "INCENTIVELEDGER_OUT";
const DEFAULT_OUT: &str = "out";

#[derive(Parser, Debug)]
#[command(
    name = "incentiveledger",
    version,
    about = "Simulate incentive schemes for on-chain data sharing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one simulation per seed and write a report for each.
    Run(Settings),
    /// Run every cell of a fraction x margin grid over a range of seeds.
    Sweep(Settings),
    /// Print the gas schedule priced in ETH and USD.
    Gas(PriceArgs),
}

/// Every setting shared by `run` and `sweep`. Field names double as the
/// keys of the config file.
#[derive(Args, Debug, Default, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct Settings {
    /// Cost allocation scenario.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    scenario: Option<u8>,
    /// Seed of the first run.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds to run.
    #[arg(long)]
    seeds: Option<u64>,
    /// Actions per run.
    #[arg(long)]
    actions: Option<usize>,
    /// Accounts in the population.
    #[arg(long)]
    accounts: Option<usize>,
    /// Share of the running cost charged on a request, in percent.
    #[arg(long)]
    access_fraction: Option<u32>,
    /// Share of the running cost charged on a renewal, in percent.
    #[arg(long)]
    renew_fraction: Option<u32>,
    /// Profit margin in percent (100 in scenarios 1 and 2).
    #[arg(long)]
    profit_margin: Option<u32>,
    #[arg(long)]
    gas_price_gwei: Option<f64>,
    /// Exchange rate in USD per ETH.
    #[arg(long)]
    eth_usd: Option<f64>,
    #[arg(long)]
    max_providers: Option<usize>,
    #[arg(long)]
    provider_prob_max: Option<f64>,
    #[arg(long)]
    update_multiplier: Option<f64>,
    /// Renewal probability decay factor.
    #[arg(long)]
    decay: Option<f64>,
    /// Output directory (falls back to $INCENTIVELEDGER_OUT, then `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat TOML file with the same keys as the long flags.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// TOML file of gas overrides, `functionName = gas`.
    #[arg(long)]
    gas_table: Option<PathBuf>,
    /// Sweep only: fractions as `1,5,10` or `A..B:STEP`. Sets both the
    /// access and the renew fraction.
    #[arg(long)]
    fractions: Option<String>,
    /// Sweep only: profit margins as `150,200` or `A..B:STEP`.
    #[arg(long)]
    margins: Option<String>,
}

#[derive(Args, Debug)]
struct PriceArgs {
    #[arg(long)]
    gas_price_gwei: Option<f64>,
    #[arg(long)]
    eth_usd: Option<f64>,
    #[arg(long)]
    gas_table: Option<PathBuf>,
}

/// Effective configuration, echoed into the output tree. Loading it back
/// with `--config` reproduces the same runs.
#[derive(Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct Effective {
    scenario: u8,
    seed: u64,
    seeds: u64,
    actions: usize,
    accounts: usize,
    access_fraction: u32,
    renew_fraction: u32,
    profit_margin: u32,
    gas_price_gwei: f64,
    eth_usd: f64,
    max_providers: usize,
    provider_prob_max: f64,
    update_multiplier: f64,
    decay: f64,
    out: PathBuf,
    jobs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    gas_table: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fractions: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    margins: Option<String>,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

struct Plan {
    base: SimConfig,
    seeds: Vec<u64>,
    out: PathBuf,
    jobs: usize,
    fractions: Option<Vec<u32>>,
    margins: Option<Vec<u32>>,
    effective: Effective,
}

impl Settings {
    fn overlay(self, file: Settings) -> Settings {
        macro_rules! pick {
            ($($f:ident),*) => { Settings { $($f: self.$f.or(file.$f),)* config: self.config } };
        }
        pick!(
            scenario,
            seed,
            seeds,
            actions,
            accounts,
            access_fraction,
            renew_fraction,
            profit_margin,
            gas_price_gwei,
            eth_usd,
            max_providers,
            provider_prob_max,
            update_multiplier,
            decay,
            out,
            jobs,
            gas_table,
            fractions,
            margins
        )
    }
}

fn load_config(path: &Path) -> Result<Settings, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Reads a flat TOML table of `functionName = gas` or
/// `functionName = { transaction = .., execution = .. }` on top of the
/// default schedule. `perRequesterUpdateGas` sets the update surcharge.
fn load_gas_table(path: &Path) -> Result<GasSchedule, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let mut schedule = GasSchedule::default();
    let bad = |key: &str, why: &str| usage(format!("{}: `{key}` {why}", path.display()));
    let gas = |key: &str, v: &toml::Value| -> Result<u64, Failure> {
        v.as_integer()
            .and_then(|n| u64::try_from(n).ok())
            .ok_or_else(|| bad(key, "must be a non-negative integer"))
    };
    for (key, value) in &table {
        if key == "perRequesterUpdateGas" {
            schedule
                .set_per_requester_update_gas(gas(key, value)?)
                .map_err(|e| usage(e.to_string()))?;
            continue;
        }
        let function: Function = key.parse().map_err(usage)?;
        let entry = match value {
            toml::Value::Table(t) => {
                let transaction = t
                    .get("transaction")
                    .ok_or_else(|| bad(key, "lacks `transaction`"))?;
                let transaction = gas(key, transaction)?;
                let execution = match t.get("execution") {
                    Some(v) => gas(key, v)?,
                    None => transaction,
                };
                GasEntry::new(transaction, execution)
            }
            v => {
                let transaction = gas(key, v)?;
                let execution = schedule.get(function).map_or(transaction, |e| e.execution);
                GasEntry::new(transaction, execution)
            }
        };
        schedule
            .set(function, entry)
            .map_err(|e| usage(e.to_string()))?;
    }
    Ok(schedule)
}

fn price_model(gwei: f64, eth_usd: f64) -> Result<PriceModel, Failure> {
    PriceModel::from_gwei(gwei, eth_usd).ok_or_else(|| {
        usage(format!(
            "gas price {gwei} Gwei and rate {eth_usd} USD/ETH must be positive"
        ))
    })
}

/// Parses `1,5,10`, a single value, `A..B` or `A..B:STEP` (inclusive).
fn parse_grid(text: &str) -> Result<Vec<u32>, String> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let num = |s: &str| {
        s.trim()
            .parse::<u32>()
            .map_err(|_| format!("`{s}` is not a whole number"))
    };
    if let Some((lo, rest)) = text.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (num(hi)?, num(step)?),
            None => (num(rest)?, 1),
        };
        if step == 0 {
            return Err("grid step must be positive".into());
        }
        return Ok((num(lo)?..=hi).step_by(step as usize).collect());
    }
    text.split(',').map(num).collect()
}

fn plan(flags: Settings, sweeping: bool) -> Result<Plan, Failure> {
    let file = match &flags.config {
        Some(path) => load_config(path)?,
        None => Settings::default(),
    };
    let s = flags.overlay(file);
    if !sweeping && (s.fractions.is_some() || s.margins.is_some()) {
        return Err(usage("`fractions` and `margins` only apply to `sweep`"));
    }

    let scenario = match s.scenario {
        Some(n) => Scenario::from_number(n)
            .ok_or_else(|| usage(format!("scenario must be 1, 2 or 3, got {n}")))?,
        None => Scenario::Profit,
    };
    let mut base = SimConfig::new(scenario);
    let defaults = base.clone();
    base.seed = s.seed.unwrap_or(0);
    base.action_ticker = s.actions.unwrap_or(defaults.action_ticker);
    base.access_fraction_pct = s.access_fraction.unwrap_or(defaults.access_fraction_pct);
    base.renew_fraction_pct = s.renew_fraction.unwrap_or(defaults.renew_fraction_pct);
    base.profit_margin_pct = s.profit_margin.unwrap_or(default_margin(scenario));
    let pop = &mut base.population;
    pop.n_accounts = s.accounts.unwrap_or(pop.n_accounts);
    pop.max_providers = s.max_providers.unwrap_or(pop.max_providers);
    pop.provider_prob_max = s.provider_prob_max.unwrap_or(pop.provider_prob_max);
    pop.update_multiplier = s.update_multiplier.unwrap_or(pop.update_multiplier);
    pop.decay = s.decay.unwrap_or(pop.decay);
    let gwei = s.gas_price_gwei.unwrap_or(defaults.price.gas_price_gwei());
    let eth_usd = s.eth_usd.unwrap_or(defaults.price.eth_usd());
    base.price = price_model(gwei, eth_usd)?;
    if let Some(path) = &s.gas_table {
        base.schedule = load_gas_table(path)?;
    }

    let count = s.seeds.unwrap_or(1);
    if count == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    let seeds: Vec<u64> = (0..count).map(|i| base.seed.wrapping_add(i)).collect();
    let grid = |grid_text: &Option<String>, what: &str| -> Result<Option<Vec<u32>>, Failure> {
        match grid_text {
            None => Ok(None),
            Some(text) => {
                let values = parse_grid(text).map_err(|e| usage(format!("--{what}: {e}")))?;
                if values.is_empty() {
                    return Err(usage(format!("--{what} `{text}` is an empty grid")));
                }
                Ok(Some(values))
            }
        }
    };
    let fractions = grid(&s.fractions, "fractions")?;
    let margins = grid(&s.margins, "margins")?;
    if !sweeping {
        base.validate().map_err(|e| usage(e.to_string()))?;
    }

    let out = s
        .out
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let jobs = s.jobs.unwrap_or(1).max(1);
    let effective = Effective {
        scenario: scenario.number(),
        seed: base.seed,
        seeds: count,
        actions: base.action_ticker,
        accounts: base.population.n_accounts,
        access_fraction: base.access_fraction_pct,
        renew_fraction: base.renew_fraction_pct,
        profit_margin: base.profit_margin_pct,
        gas_price_gwei: base.price.gas_price_gwei(),
        eth_usd: base.price.eth_usd(),
        max_providers: base.population.max_providers,
        provider_prob_max: base.population.provider_prob_max,
        update_multiplier: base.population.update_multiplier,
        decay: base.population.decay,
        out: out.clone(),
        jobs,
        gas_table: s.gas_table,
        fractions: s.fractions,
        margins: s.margins,
    };
    Ok(Plan {
        base,
        seeds,
        out,
        jobs,
        fractions,
        margins,
        effective,
    })
}

fn write_config(plan: &Plan) -> anyhow::Result<()> {
    fs::create_dir_all(&plan.out).with_context(|| format!("creating {}", plan.out.display()))?;
    let text = toml::to_string(&plan.effective).context("serializing the effective config")?;
    let path = plan.out.join("config.toml");
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn show_period(p: Option<Period>) -> String {
    p.map_or_else(|| "never".into(), |p| p.to_string())
}

fn runtime(results: Vec<Result<SimResult, EngineError>>) -> Result<Vec<SimResult>, Failure> {
    results
        .into_iter()
        .map(|r| r.map_err(|e| Failure::Runtime(e.into())))
        .collect()
}

/// Reconciles and writes one run, returning a one-line digest.
fn report(r: &SimResult, dir: &Path) -> anyhow::Result<String> {
    let summary = summarize(r).with_context(|| format!("run {}", r.config.seed))?;
    let path =
        write_run_report(r, dir).with_context(|| format!("writing run {}", r.config.seed))?;
    Ok(format!(
        "seed {}: {} actions in {} periods, provider cost ${:.2}, break-even {} -> {}",
        r.config.seed,
        r.records.len(),
        r.periods(),
        summary.provider_cost_usd(),
        show_period(break_even_period(r)),
        path.display()
    ))
}

fn run_cmd(flags: Settings) -> Result<(), Failure> {
    let plan = plan(flags, false)?;
    let cfgs: Vec<SimConfig> = plan
        .seeds
        .iter()
        .map(|&s| plan.base.clone().with_seed(s))
        .collect();
    let results = runtime(sweep(&cfgs, plan.jobs))?;
    write_config(&plan)?;
    for r in &results {
        println!("{}", report(r, &plan.out)?);
    }
    Ok(())
}

fn median(mut v: Vec<Option<Period>>) -> String {
    v.sort_by_key(|p| p.unwrap_or(Period::MAX));
    let key = |p: Option<Period>| p.map(f64::from).unwrap_or(f64::INFINITY);
    let n = v.len();
    let m = if n % 2 == 1 {
        key(v[n / 2])
    } else {
        (key(v[n / 2 - 1]) + key(v[n / 2])) / 2.0
    };
    if m.is_finite() {
        format!("{m}")
    } else {
        "never".into()
    }
}

fn sweep_cmd(flags: Settings) -> Result<(), Failure> {
    let plan = plan(flags, true)?;
    let fractions = plan
        .fractions
        .clone()
        .unwrap_or_else(|| vec![plan.base.access_fraction_pct]);
    let margins = plan
        .margins
        .clone()
        .unwrap_or_else(|| vec![plan.base.profit_margin_pct]);

    let mut cells = Vec::new();
    for &f in &fractions {
        for &m in &margins {
            let mut cfg = plan.base.clone();
            cfg.access_fraction_pct = f;
            cfg.renew_fraction_pct = f;
            cfg.profit_margin_pct = m;
            cfg.validate()
                .map_err(|e| usage(format!("cell f{f} m{m}: {e}")))?;
            cells.push((format!("f{f:03}-m{m:03}"), cfg));
        }
    }
    let cfgs: Vec<SimConfig> = cells
        .iter()
        .flat_map(|(_, cfg)| plan.seeds.iter().map(|&s| cfg.clone().with_seed(s)))
        .collect();
    let results = runtime(sweep(&cfgs, plan.jobs))?;
    write_config(&plan)?;

    let per_cell = plan.seeds.len();
    let mut rows = Vec::with_capacity(results.len());
    for ((name, _), chunk) in cells.iter().zip(results.chunks(per_cell)) {
        let dir = plan.out.join(name);
        for r in chunk {
            report(r, &dir)?;
            rows.push((name.as_str(), r));
        }
        let be: Vec<_> = chunk.iter().map(break_even_period).collect();
        let hits = be.iter().filter(|b| b.is_some()).count();
        println!(
            "{name}: {} runs, {hits} broke even, median break-even {}",
            chunk.len(),
            median(be)
        );
    }
    let path = plan.out.join("break_even.csv");
    fs::write(&path, break_even_csv(rows))
        .with_context(|| format!("writing {}", path.display()))?;
    println!("{} runs -> {}", results.len(), path.display());
    Ok(())
}

fn gas_cmd(args: PriceArgs) -> Result<(), Failure> {
    let defaults = PriceModel::default();
    let price = price_model(
        args.gas_price_gwei.unwrap_or(defaults.gas_price_gwei()),
        args.eth_usd.unwrap_or(defaults.eth_usd()),
    )?;
    let schedule = match &args.gas_table {
        Some(path) => load_gas_table(path)?,
        None => GasSchedule::default(),
    };
    let mut text = format!(
        "{:<20} {:>12} {:>12} {:>10}\n",
        "function", "gas", "ether", "usd"
    );
    for (f, e) in schedule.entries() {
        let fee = price.fee(e.transaction);
        text += &format!(
            "{:<20} {:>12} {:>12.5} {:>10.2}\n",
            f.name(),
            e.transaction,
            fee as f64 / 1e18,
            price.wei_to_cents(fee) as f64 / 100.0
        );
    }
    text += &format!(
        "per-requester update surcharge: {} gas\n",
        schedule.per_requester_update_gas
    );
    // a closed pipe (`| head`) is not an error worth reporting
    let _ = io::stdout().write_all(text.as_bytes());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(s) => run_cmd(s),
        Command::Sweep(s) => sweep_cmd(s),
        Command::Gas(a) => gas_cmd(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

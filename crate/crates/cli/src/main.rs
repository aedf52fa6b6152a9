//! Command-line front end: run scenario episodes and sweeps, evaluate the
//! distribution directly from flags, and build commitment digests for
//! fixtures. Failures exit nonzero and print `error: <category>: <message>`
//! with a stable category slug.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stablepool_core::{
    commitment_digest, compute_distribution, export_report, run_episode, Amount, DistributionInput,
    InvestorId, Scenario, SimError,
};

#[derive(Parser)]
#[command(name = "stablepool", version, about = "Collateral-pool stablecoin simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one end-to-end episode from a scenario file
    Simulate(RunArgs),
    /// Generate the pool-vs-hold comparison curve and its threshold
    Sweep(RunArgs),
    /// Evaluate one distribution from flags
    Distribute(DistributeArgs),
    /// Print the commitment digest for (amount, nonce, investor id)
    HashCommit(HashCommitArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file
    #[arg(long)]
    scenario: PathBuf,

    /// Override the scenario's seed
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory for episode.csv, curve.csv and manifest.json
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct DistributeArgs {
    /// Fill amount in ETH; repeat once per investor
    #[arg(long = "fill", required = true, allow_hyphen_values = true)]
    fills: Vec<f64>,

    /// Pool total limit in ETH
    #[arg(long)]
    limit: f64,

    /// Cumulated amount to distribute, value units (negative for a loss)
    #[arg(long, allow_hyphen_values = true)]
    amount: f64,
}

#[derive(Args)]
struct HashCommitArgs {
    /// Contribution in ETH
    #[arg(long)]
    amount: f64,

    /// 32-byte nonce as 64 hex characters (default: all zeros)
    #[arg(long)]
    nonce: Option<String>,

    /// Investor id
    #[arg(long)]
    id: String,
}

struct CliError {
    category: &'static str,
    message: String,
}

impl CliError {
    fn new(category: &'static str, message: impl Into<String>) -> Self {
        CliError {
            category,
            message: message.into(),
        }
    }
}

impl From<SimError> for CliError {
    fn from(err: SimError) -> Self {
        CliError {
            category: err.category(),
            message: err.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args, false),
        Command::Sweep(args) => simulate(args, true),
        Command::Distribute(args) => distribute(args),
        Command::HashCommit(args) => hash_commit(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}: {}", err.category, err.message);
            ExitCode::FAILURE
        }
    }
}

fn load_scenario(args: &RunArgs) -> Result<Scenario, CliError> {
    let json = fs::read_to_string(&args.scenario)
        .map_err(|e| CliError::new("io", format!("{}: {e}", args.scenario.display())))?;
    let mut scenario = Scenario::from_json(&json)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

fn simulate(args: RunArgs, require_sweep: bool) -> Result<(), CliError> {
    let scenario = load_scenario(&args)?;
    if require_sweep && scenario.sweep.is_none() {
        return Err(SimError::NoSweepConfigured.into());
    }
    let outcome = run_episode(&scenario)?;
    let report = &outcome.report;
    let written = export_report(report, &args.out)?;

    println!("scenario : {}", scenario.name);
    println!("seed     : {}", report.seed);
    println!("price    : {} -> {}", report.price_start, report.price_end);
    println!("margin   : {} value units", report.margin);
    println!("peg held : {}", report.peg_held);
    if let Some(shortfall) = report.shortfall {
        println!("shortfall: {shortfall} value units");
    }
    if let Some(threshold) = report.threshold {
        println!("threshold: {threshold} ETH");
    } else if require_sweep {
        println!("threshold: none (no crossing on the sweep domain)");
    }
    println!();
    println!(
        "{:<10} {:>10} {:>12} {:>12} {:>12} {:>12}  slashed",
        "investor", "filled", "fraction", "pool_pnl", "hold_pnl", "advantage"
    );
    for row in &report.rows {
        println!(
            "{:<10} {:>10.4} {:>12.6} {:>12.6} {:>12.6} {:>12.6}  {}",
            row.investor_id.to_string(),
            row.filled,
            row.fraction,
            row.pool_pnl,
            row.hold_pnl,
            row.advantage,
            row.slashed
        );
    }
    println!();
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn distribute(args: DistributeArgs) -> Result<(), CliError> {
    let fills: Vec<(InvestorId, f64)> = args
        .fills
        .iter()
        .enumerate()
        .map(|(i, &f)| (InvestorId::from(format!("investor-{i}")), f))
        .collect();
    let input = DistributionInput::new(fills, args.limit, args.amount)
        .map_err(|e| CliError::new(e.category(), e.to_string()))?;
    let dist = compute_distribution(&input)
        .map_err(|e| CliError::new(e.category(), e.to_string()))?;

    println!(
        "{:<12} {:>10} {:>14} {:>12} {:>14}",
        "investor", "filled", "raw_incentive", "fraction", "final"
    );
    for ((id, fill), share) in input.fills().iter().zip(&dist.per_investor) {
        println!(
            "{:<12} {:>10} {:>14.6e} {:>12.6} {:>14.6}",
            id.to_string(),
            fill,
            share.raw_incentive,
            share.fraction,
            share.final_incentive
        );
    }
    println!("lsum = {:e}", dist.lsum);
    Ok(())
}

fn parse_nonce(hex: &str) -> Result<[u8; 32], CliError> {
    let hex = hex.trim();
    if hex.len() != 64 || !hex.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(CliError::new(
            "domain",
            format!("nonce must be 64 hex characters, got {:?}", hex),
        ));
    }
    let mut nonce = [0u8; 32];
    for (i, byte) in nonce.iter_mut().enumerate() {
        *byte = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).expect("validated hex");
    }
    Ok(nonce)
}

fn hash_commit(args: HashCommitArgs) -> Result<(), CliError> {
    if !(args.amount.is_finite() && args.amount > 0.0) {
        return Err(CliError::new(
            "domain",
            format!("amount must be positive, got {}", args.amount),
        ));
    }
    let nonce = match &args.nonce {
        Some(hex) => parse_nonce(hex)?,
        None => [0u8; 32],
    };
    let amount = Amount::from_units(args.amount);
    let digest = commitment_digest(amount, &nonce, &InvestorId::from(args.id.as_str()));
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    println!("{hex}");
    Ok(())
}

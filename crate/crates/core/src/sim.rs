//! Scenario-driven episodes: one pool round backing one issuance batch,
//! played against a price path, with per-investor outcomes compared to the
//! hold-the-ETH baseline. Also generates the pool-vs-hold comparison curve
//! and its break-even threshold, and exports everything as CSV plus a
//! reproducibility manifest.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::incentive::{
    compute_distribution, find_threshold, DistributionInput, IncentiveError, ThresholdQuery,
};
use crate::ledger::{LedgerConfig, LedgerError, LedgerState, Redemption};
use crate::market::{decide_fill, AgentPolicy, MarketError, PriceGenerator, PricePath};
use crate::money::{Amount, Eth, Price, SignedAmount, Value};
use crate::pool::{commitment_digest, Nonce, PoolError, PoolState};
use crate::InvestorId;

/// Name of the seeded generator wired through the harness; recorded in the
/// manifest so stochastic runs stay attributable.
const GENERATOR_NAME: &str = "chacha20 (rand_chacha) + rand_distr StandardNormal";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpisodeStep {
    Validate,
    OpenPool,
    Commit,
    CloseCommits,
    Reveal,
    Activate,
    Mint,
    PriceLookup,
    Redeem,
    Sweep,
}

impl fmt::Display for EpisodeStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EpisodeStep::Validate => "validate",
            EpisodeStep::OpenPool => "open-pool",
            EpisodeStep::Commit => "commit",
            EpisodeStep::CloseCommits => "close-commits",
            EpisodeStep::Reveal => "reveal",
            EpisodeStep::Activate => "activate",
            EpisodeStep::Mint => "mint",
            EpisodeStep::PriceLookup => "price-lookup",
            EpisodeStep::Redeem => "redeem",
            EpisodeStep::Sweep => "sweep",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("episode step {step}: {source}")]
    Pool {
        step: EpisodeStep,
        #[source]
        source: PoolError,
    },
    #[error("episode step {step}: {source}")]
    Ledger {
        step: EpisodeStep,
        #[source]
        source: LedgerError,
    },
    #[error("episode step {step}: {source}")]
    Market {
        step: EpisodeStep,
        #[source]
        source: MarketError,
    },
    #[error("episode step {step}: {source}")]
    Incentive {
        step: EpisodeStep,
        #[source]
        source: IncentiveError,
    },
    #[error("every agent abstained; the pool has no commitments")]
    NoParticipants,
    #[error("scenario has no sweep section")]
    NoSweepConfigured,
    #[error("ETH conservation violated: {0}")]
    ConservationViolated(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    pub fn category(&self) -> &'static str {
        match self {
            SimError::InvalidScenario(_) => "scenario",
            SimError::Parse(_) => "scenario-parse",
            SimError::Pool { source, .. } => source.category(),
            SimError::Ledger { source, .. } => source.category(),
            SimError::Market { source, .. } => source.category(),
            SimError::Incentive { source, .. } => source.category(),
            SimError::NoParticipants => "no-participants",
            SimError::NoSweepConfigured => "no-sweep-configured",
            SimError::ConservationViolated(_) => "conservation",
            SimError::Io { .. } => "io",
        }
    }
}

/// Declarative scenario. Amount fields are decimal ETH.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub pool: PoolSpec,
    pub agents: Vec<AgentSpec>,
    pub user: UserSpec,
    pub price: PriceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub total_limit: f64,
    pub min_fill: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum AgentSpec {
    MaxFill { budget: f64 },
    FixedFraction { budget: f64, fraction: f64 },
    UniformRandom { budget: f64, seed: u64 },
}

impl AgentSpec {
    fn to_policy(self) -> AgentPolicy {
        match self {
            AgentSpec::MaxFill { budget } => AgentPolicy::MaxFill {
                budget: Amount::from_units(budget),
            },
            AgentSpec::FixedFraction { budget, fraction } => AgentPolicy::FixedFraction {
                budget: Amount::from_units(budget),
                fraction,
            },
            AgentSpec::UniformRandom { budget, seed } => AgentPolicy::UniformRandom {
                budget: Amount::from_units(budget),
                seed,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserSpec {
    pub collateral_eth: f64,
    pub mint_tick: u64,
    pub redeem_tick: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceSpec {
    #[serde(flatten)]
    pub generator: PriceGenerator,
    pub horizon: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub fill_lo: f64,
    pub fill_hi: f64,
    pub steps: u32,
}

impl Scenario {
    pub fn from_json(json: &str) -> Result<Self, SimError> {
        let scenario: Scenario = serde_json::from_str(json)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidScenario(msg));
        let positive = |value: f64, what: &str| -> Result<(), SimError> {
            if value.is_finite() && value > 0.0 {
                Ok(())
            } else {
                Err(SimError::InvalidScenario(format!(
                    "{what} must be positive and finite, got {value}"
                )))
            }
        };
        positive(self.pool.total_limit, "pool.total_limit")?;
        positive(self.pool.min_fill, "pool.min_fill")?;
        if self.pool.min_fill > self.pool.total_limit {
            return bad("pool.min_fill exceeds pool.total_limit".into());
        }
        if self.agents.is_empty() {
            return bad("at least one agent is required".into());
        }
        for (i, agent) in self.agents.iter().enumerate() {
            match *agent {
                AgentSpec::MaxFill { budget }
                | AgentSpec::UniformRandom { budget, .. } => {
                    positive(budget, &format!("agents[{i}].budget"))?;
                }
                AgentSpec::FixedFraction { budget, fraction } => {
                    positive(budget, &format!("agents[{i}].budget"))?;
                    if !(fraction.is_finite() && fraction > 0.0 && fraction <= 1.0) {
                        return bad(format!(
                            "agents[{i}].fraction must be in (0, 1], got {fraction}"
                        ));
                    }
                }
            }
        }
        positive(self.user.collateral_eth, "user.collateral_eth")?;
        if self.user.mint_tick >= self.user.redeem_tick {
            return bad(format!(
                "mint_tick {} must precede redeem_tick {}",
                self.user.mint_tick, self.user.redeem_tick
            ));
        }
        if self.user.redeem_tick > self.price.horizon {
            return bad(format!(
                "redeem_tick {} exceeds price horizon {}",
                self.user.redeem_tick, self.price.horizon
            ));
        }
        if let Some(sweep) = &self.sweep {
            positive(sweep.fill_lo, "sweep.fill_lo")?;
            positive(sweep.fill_hi, "sweep.fill_hi")?;
            if sweep.steps < 2 {
                return bad("sweep.steps must be at least 2".into());
            }
            if sweep.fill_lo < self.pool.min_fill {
                return bad(format!(
                    "sweep.fill_lo {} is below pool.min_fill {}",
                    sweep.fill_lo, self.pool.min_fill
                ));
            }
            if sweep.fill_lo >= sweep.fill_hi {
                return bad("sweep.fill_lo must be strictly below sweep.fill_hi".into());
            }
        }
        Ok(())
    }
}

/// One investor's outcome row; exactly the episode.csv column set.
#[derive(Clone, Debug, PartialEq)]
pub struct InvestorRow {
    pub investor_id: InvestorId,
    /// ETH contributed.
    pub filled: f64,
    /// Gain fraction from the distribution.
    pub fraction: f64,
    /// Realized pool P&L in value units (integer settlement, as units).
    pub pool_pnl: f64,
    /// Holding the same ETH over the same window.
    pub hold_pnl: f64,
    /// pool_pnl - hold_pnl, computed from the two columns exactly.
    pub advantage: f64,
    pub slashed: bool,
}

/// One (fill, pool, hold) sample of the comparison curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub fill: f64,
    pub pool_pnl: f64,
    pub hold_pnl: f64,
}

/// Exact wei flows of an episode; conservation is checked on these.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct EthAccounting {
    pub user_collateral_wei: u128,
    pub investor_principal_wei: u128,
    pub user_payout_wei: u128,
    pub investor_payout_wei: u128,
    pub dust_wei: u128,
}

/// Outcome table of one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeReport {
    pub scenario: Scenario,
    pub seed: u64,
    pub price_start: f64,
    pub price_end: f64,
    /// Margin distributed at settlement, value units.
    pub margin: f64,
    /// Rows ordered by investor id.
    pub rows: Vec<InvestorRow>,
    pub peg_held: bool,
    pub threshold: Option<f64>,
    /// Insolvency shortfall in value units, when the pool could not cover.
    pub shortfall: Option<f64>,
    pub curve: Option<Vec<CurvePoint>>,
    pub accounting: EthAccounting,
}

/// Episode result: the report plus the final states the report was built
/// from, for inspection and auditing.
#[derive(Clone, Debug)]
pub struct EpisodeOutcome {
    pub report: EpisodeReport,
    pub ledger: LedgerState,
    pub pool: PoolState,
    pub redemption: Redemption,
}

fn agent_id(index: usize) -> InvestorId {
    InvestorId::from(format!("agent-{index:02}"))
}

/// Fill decisions for every agent, in order, against shrinking capacity.
/// Zero-fill agents abstain and are skipped.
fn decide_fills(scenario: &Scenario) -> Vec<(InvestorId, Amount<Eth>)> {
    let min_fill = Amount::from_units(scenario.pool.min_fill);
    let mut remaining = Amount::from_units(scenario.pool.total_limit);
    let mut fills = Vec::new();
    for (i, spec) in scenario.agents.iter().enumerate() {
        let fill = decide_fill(&spec.to_policy(), remaining, min_fill);
        if fill.is_zero() {
            continue;
        }
        remaining = remaining - fill;
        fills.push((agent_id(i), fill));
    }
    fills
}

/// Run one episode end to end: open the pool, commit/reveal the agents,
/// activate, mint the user's batch, advance the price, redeem and settle.
pub fn run_episode(scenario: &Scenario) -> Result<EpisodeOutcome, SimError> {
    scenario.validate()?;
    let path = PricePath::new(scenario.price.generator.clone(), scenario.price.horizon)
        .map_err(|source| SimError::Market {
            step: EpisodeStep::Validate,
            source,
        })?;

    let total_limit = Amount::from_units(scenario.pool.total_limit);
    let min_fill = Amount::from_units(scenario.pool.min_fill);
    let mut pool = PoolState::open(total_limit, min_fill).map_err(|source| SimError::Pool {
        step: EpisodeStep::OpenPool,
        source,
    })?;

    // Commitments: nonces drawn from the scenario seed, in agent order.
    let mut rng = ChaCha20Rng::seed_from_u64(scenario.seed);
    let fills = decide_fills(scenario);
    if fills.is_empty() {
        return Err(SimError::NoParticipants);
    }
    let mut secrets: Vec<(InvestorId, Amount<Eth>, Nonce)> = Vec::with_capacity(fills.len());
    for (id, fill) in &fills {
        let nonce: Nonce = rng.gen();
        let digest = commitment_digest(*fill, &nonce, id);
        pool = pool
            .commit(id.clone(), digest)
            .map_err(|source| SimError::Pool {
                step: EpisodeStep::Commit,
                source,
            })?;
        secrets.push((id.clone(), *fill, nonce));
    }
    pool = pool.close_commits().map_err(|source| SimError::Pool {
        step: EpisodeStep::CloseCommits,
        source,
    })?;
    for (id, fill, nonce) in secrets {
        pool = pool
            .reveal(id, fill, nonce)
            .map_err(|source| SimError::Pool {
                step: EpisodeStep::Reveal,
                source,
            })?;
    }
    pool = pool.activate().map_err(|source| SimError::Pool {
        step: EpisodeStep::Activate,
        source,
    })?;

    let price_at = |tick: u64| {
        path.price_at(tick).map_err(|source| SimError::Market {
            step: EpisodeStep::PriceLookup,
            source,
        })
    };
    let price_start = price_at(scenario.user.mint_tick)?;
    let price_end = price_at(scenario.user.redeem_tick)?;
    let mint_price = Price::new(price_start).expect("validated path price");
    let redeem_price = Price::new(price_end).expect("validated path price");

    let collateral = Amount::from_units(scenario.user.collateral_eth);
    let ledger = LedgerState::new(LedgerConfig::default());
    let (ledger, batch) = ledger
        .mint("user", collateral, mint_price, pool)
        .map_err(|source| SimError::Ledger {
            step: EpisodeStep::Mint,
            source,
        })?;
    let (ledger, redemption) = ledger
        .redeem(&batch.batch_id, redeem_price)
        .map_err(|source| SimError::Ledger {
            step: EpisodeStep::Redeem,
            source,
        })?;

    let settled = redemption.pool.clone();
    let report = build_report(scenario, &redemption, &settled, price_start, price_end)?;
    verify_conservation(&report.accounting)?;

    Ok(EpisodeOutcome {
        report,
        ledger,
        pool: settled,
        redemption,
    })
}

fn build_report(
    scenario: &Scenario,
    redemption: &Redemption,
    pool: &PoolState,
    price_start: f64,
    price_end: f64,
) -> Result<EpisodeReport, SimError> {
    let settlement = pool.settlement().expect("pool settled at redemption");
    let principals = pool.revealed_fills();

    // Fractions are not part of the settlement report; recompute them from
    // the same revealed fills.
    let input = DistributionInput::new(
        principals
            .iter()
            .map(|(id, amt)| (id.clone(), amt.to_units()))
            .collect(),
        pool.total_limit().to_units(),
        settlement.margin.to_units(),
    )
    .map_err(|source| SimError::Incentive {
        step: EpisodeStep::Redeem,
        source,
    })?;
    let dist = compute_distribution(&input).map_err(|source| SimError::Incentive {
        step: EpisodeStep::Redeem,
        source,
    })?;

    let mut rows = Vec::with_capacity(principals.len());
    for ((id, principal), (share, inv)) in principals
        .iter()
        .zip(dist.per_investor.iter().zip(&settlement.per_investor))
    {
        let filled = principal.to_units();
        let pool_pnl = inv.reward_or_loss.to_units();
        let hold_pnl = filled * (price_end - price_start);
        rows.push(InvestorRow {
            investor_id: id.clone(),
            filled,
            fraction: share.fraction,
            pool_pnl,
            hold_pnl,
            advantage: pool_pnl - hold_pnl,
            slashed: inv.slashed,
        });
    }

    let (curve, threshold) = match &scenario.sweep {
        Some(_) => {
            let (curve, threshold) = sweep_curve(scenario, settlement.margin, price_start, price_end)?;
            (Some(curve), threshold)
        }
        None => (None, None),
    };

    let accounting = EthAccounting {
        user_collateral_wei: Amount::<Eth>::from_units(scenario.user.collateral_eth).base_units(),
        investor_principal_wei: principals.iter().map(|(_, p)| p.base_units()).sum(),
        user_payout_wei: redemption.user_receives.base_units(),
        investor_payout_wei: redemption
            .investor_payouts
            .iter()
            .map(|(_, p)| p.base_units())
            .sum(),
        dust_wei: redemption.dust_accrued.base_units(),
    };

    Ok(EpisodeReport {
        scenario: scenario.clone(),
        seed: scenario.seed,
        price_start,
        price_end,
        margin: settlement.margin.to_units(),
        rows,
        peg_held: redemption.peg_held,
        threshold,
        shortfall: redemption.shortfall.map(|s| s.to_units()),
        curve,
        accounting,
    })
}

fn verify_conservation(acc: &EthAccounting) -> Result<(), SimError> {
    let eth_in = acc.user_collateral_wei + acc.investor_principal_wei;
    let eth_out = acc.user_payout_wei + acc.investor_payout_wei + acc.dust_wei;
    if eth_in != eth_out {
        return Err(SimError::ConservationViolated(format!(
            "{eth_in} wei in, {eth_out} wei out"
        )));
    }
    Ok(())
}

/// Margin the scenario's batch will settle on, independent of pool fills.
fn scenario_margin(scenario: &Scenario, price_start: f64, price_end: f64) -> SignedAmount<Value> {
    let collateral = Amount::<Eth>::from_units(scenario.user.collateral_eth);
    let mint = Price::new(price_start).expect("positive path price");
    let redeem = Price::new(price_end).expect("positive path price");
    let face: SignedAmount<Value> = SignedAmount::from_base_units(
        crate::money::stable_face_floor(collateral, mint).base_units() as i128,
    );
    let value: SignedAmount<Value> = crate::money::eth_value_floor(collateral, redeem).into();
    value - face
}

fn sweep_curve(
    scenario: &Scenario,
    margin: SignedAmount<Value>,
    price_start: f64,
    price_end: f64,
) -> Result<(Vec<CurvePoint>, Option<f64>), SimError> {
    let sweep = scenario.sweep.as_ref().ok_or(SimError::NoSweepConfigured)?;
    let background: Vec<f64> = decide_fills(scenario)
        .iter()
        .map(|(_, amt)| amt.to_units())
        .collect();
    let margin_units = margin.to_units();
    let total_limit = scenario.pool.total_limit;

    let incentive_err = |source| SimError::Incentive {
        step: EpisodeStep::Sweep,
        source,
    };

    let probe = InvestorId::from("probe");
    let steps = sweep.steps as usize;
    let mut curve = Vec::with_capacity(steps);
    for k in 0..steps {
        let fill = if k == steps - 1 {
            sweep.fill_hi
        } else {
            sweep.fill_lo + (sweep.fill_hi - sweep.fill_lo) * k as f64 / (steps - 1) as f64
        };
        let mut fills: Vec<(InvestorId, f64)> = background
            .iter()
            .enumerate()
            .map(|(i, &f)| (InvestorId::from(format!("bg-{i}")), f))
            .collect();
        fills.push((probe.clone(), fill));
        let input = DistributionInput::new(fills, total_limit, margin_units)
            .map_err(incentive_err)?;
        let dist = compute_distribution(&input).map_err(incentive_err)?;
        let pool_pnl = dist.per_investor.last().expect("probe present").final_incentive;
        curve.push(CurvePoint {
            fill,
            pool_pnl,
            hold_pnl: fill * (price_end - price_start),
        });
    }

    let threshold = find_threshold(&ThresholdQuery {
        background_fills: background,
        total_limit,
        price_start,
        price_end,
        margin: margin_units,
        search_domain: (sweep.fill_lo, sweep.fill_hi),
    })
    .map_err(incentive_err)?;

    Ok((curve, threshold))
}

/// Generate the comparison curve and break-even threshold for a scenario with
/// a sweep section, without running the full episode.
pub fn run_sweep(scenario: &Scenario) -> Result<(Vec<CurvePoint>, Option<f64>), SimError> {
    scenario.validate()?;
    if scenario.sweep.is_none() {
        return Err(SimError::NoSweepConfigured);
    }
    let path = PricePath::new(scenario.price.generator.clone(), scenario.price.horizon)
        .map_err(|source| SimError::Market {
            step: EpisodeStep::Validate,
            source,
        })?;
    let price_at = |tick: u64| {
        path.price_at(tick).map_err(|source| SimError::Market {
            step: EpisodeStep::PriceLookup,
            source,
        })
    };
    let price_start = price_at(scenario.user.mint_tick)?;
    let price_end = price_at(scenario.user.redeem_tick)?;
    let margin = scenario_margin(scenario, price_start, price_end);
    sweep_curve(scenario, margin, price_start, price_end)
}

fn write_file(path: &Path, contents: &str) -> Result<(), SimError> {
    let mut file = fs::File::create(path).map_err(|source| SimError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(contents.as_bytes())
        .map_err(|source| SimError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Write episode.csv, curve.csv (when a sweep ran), and manifest.json into
/// the directory. Returns the written paths.
pub fn export_report(report: &EpisodeReport, directory: &Path) -> Result<Vec<PathBuf>, SimError> {
    fs::create_dir_all(directory).map_err(|source| SimError::Io {
        path: directory.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();

    let mut episode = String::from(
        "investor_id,filled,fraction,pool_pnl,hold_pnl,advantage,slashed\n",
    );
    for row in &report.rows {
        episode.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.investor_id,
            row.filled,
            row.fraction,
            row.pool_pnl,
            row.hold_pnl,
            row.advantage,
            row.slashed
        ));
    }
    let episode_path = directory.join("episode.csv");
    write_file(&episode_path, &episode)?;
    written.push(episode_path);

    if let Some(curve) = &report.curve {
        let mut csv = String::from("fill,pool_pnl,hold_pnl\n");
        for point in curve {
            csv.push_str(&format!(
                "{},{},{}\n",
                point.fill, point.pool_pnl, point.hold_pnl
            ));
        }
        let curve_path = directory.join("curve.csv");
        write_file(&curve_path, &csv)?;
        written.push(curve_path);
    }

    let manifest = serde_json::json!({
        "scenario": report.scenario,
        "seed": report.seed,
        "generator": GENERATOR_NAME,
        "artifact_version": env!("CARGO_PKG_VERSION"),
        "threshold": report.threshold,
        "peg_held": report.peg_held,
    });
    let manifest_path = directory.join("manifest.json");
    write_file(
        &manifest_path,
        &format!("{}\n", serde_json::to_string_pretty(&manifest).expect("serializable")),
    )?;
    written.push(manifest_path);

    Ok(written)
}

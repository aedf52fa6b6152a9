//! Library and deterministic simulator for a stablecoin whose volatility is
//! absorbed by a crowdfunded third-party collateral pool.
//!
//! Users mint stablecoins 1:1 against ETH collateral; an external pool of
//! investors, filled through a commit-reveal game, backs each issuance batch
//! and takes the margin (collateral value minus stable face) at redemption —
//! profit or loss. Rewards scale exponentially with the portion filled, which
//! creates a break-even fill threshold against simply holding the ETH; the
//! simulator reproduces that comparison as data.
//!
//! Modules map to the moving parts:
//!
//! - [`incentive`]: the exponential distribution engine and threshold solver,
//!   generic over the float type via [`num::Real`];
//! - [`pool`]: the commit-reveal pool round and its settlement;
//! - [`ledger`]: 1:1 issuance, redemption, and peg accounting in exact
//!   base-unit integers;
//! - [`market`]: seeded price paths and fill policies;
//! - [`sim`]: scenario-driven episodes, sweeps, and CSV/manifest export.

use std::borrow::Borrow;
use std::fmt;

use serde::{Deserialize, Serialize};

pub mod incentive;
pub mod ledger;
pub mod market;
pub mod money;
pub mod num;
pub mod pool;
pub mod sim;

/// Opaque investor identity.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InvestorId(String);

impl InvestorId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for InvestorId {
    fn from(s: &str) -> Self {
        InvestorId(s.to_string())
    }
}

impl From<String> for InvestorId {
    fn from(s: String) -> Self {
        InvestorId(s)
    }
}

impl Borrow<str> for InvestorId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for InvestorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

// Concrete f64 aliases for the scalar-generic engine types.
pub type DistributionInput = incentive::DistributionInput<f64>;
pub type DistributionResult = incentive::DistributionResult<f64>;
pub type InvestorShare = incentive::InvestorShare<f64>;
pub type ThresholdQuery = incentive::ThresholdQuery<f64>;

pub use incentive::{
    compute_distribution, compute_distribution_naive, compute_incentive, find_threshold,
    hold_baseline, pool_return, IncentiveError,
};
pub use ledger::{
    compute_margin, IssuanceBatch, LedgerConfig, LedgerError, LedgerState, Redemption,
};
pub use market::{decide_fill, next_price, AgentPolicy, MarketError, PriceGenerator, PricePath};
pub use money::{
    eth_value_floor, stable_face_floor, value_to_eth_floor, Amount, Eth, Price, SignedAmount,
    Stable, Value,
};
pub use pool::{
    commitment_digest, CommitRecord, CommitmentDigest, Nonce, PoolError, PoolPhase, PoolState,
    SettlementReport,
};
pub use sim::{
    export_report, run_episode, run_sweep, EpisodeOutcome, EpisodeReport, Scenario, SimError,
};

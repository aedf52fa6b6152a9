//! Issuance and redemption ledger.
//!
//! Users deposit ETH and receive stablecoins at face (1:1 at the mint price,
//! no overcollateralization); one pool round backs one issuance batch. At
//! redemption the user is paid ETH worth the stable face at the current
//! price, the margin (current collateral value minus face) is settled through
//! the backing pool, and any uncoverable residual is logged as a peg event.
//!
//! All conversions floor to base units. Wei that flooring leaves unassigned
//! accrues to a dust account so ETH conservation holds exactly:
//! collateral in + principal in = user payout + investor payouts + dust.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::money::{
    eth_value_floor, stable_face_floor, value_to_eth_floor, Amount, Eth, Price, SignedAmount,
    Stable, Value,
};
use crate::pool::{PoolError, PoolPhase, PoolState};
use crate::InvestorId;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("collateral must be positive")]
    ZeroCollateral,
    #[error("mint would issue zero stablecoins (dust collateral)")]
    DustMint,
    #[error("backing pool is {0:?}, not Active")]
    InactivePool(PoolPhase),
    #[error("pool backing {backing:?} is below the required {required:?}")]
    InsufficientBacking { backing: Amount<Eth>, required: Amount<Eth> },
    #[error("unknown batch {0}")]
    UnknownBatch(String),
    #[error("batch {0} was already redeemed")]
    AlreadyRedeemed(String),
    #[error(transparent)]
    Pool(#[from] PoolError),
}

impl LedgerError {
    pub fn category(&self) -> &'static str {
        match self {
            LedgerError::ZeroCollateral => "domain",
            LedgerError::DustMint => "dust-mint",
            LedgerError::InactivePool(_) => "inactive-pool",
            LedgerError::InsufficientBacking { .. } => "insufficient-backing",
            LedgerError::UnknownBatch(_) => "unknown-batch",
            LedgerError::AlreadyRedeemed(_) => "already-redeemed",
            LedgerError::Pool(e) => e.category(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchStatus {
    Outstanding,
    Redeemed,
}

/// One issuance: a user's collateral, the stable face issued against it, and
/// the pool round backing it.
#[derive(Clone, Debug, PartialEq)]
pub struct IssuanceBatch {
    pub batch_id: String,
    pub user_id: String,
    pub collateral_eth: Amount<Eth>,
    pub stable_issued: Amount<Stable>,
    pub price_at_mint: Price,
    pub backing_pool: PoolState,
    pub status: BatchStatus,
}

/// Ledger configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LedgerConfig {
    /// Required pool backing as a multiple of user collateral.
    pub backing_ratio: f64,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        LedgerConfig { backing_ratio: 1.0 }
    }
}

/// A redemption whose combined collateral and pool coverage missed face value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PegEvent {
    pub tick: u64,
    pub batch_id: String,
    pub shortfall: Amount<Value>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LedgerEventKind {
    Mint,
    Redeem,
}

impl LedgerEventKind {
    fn as_str(self) -> &'static str {
        match self {
            LedgerEventKind::Mint => "mint",
            LedgerEventKind::Redeem => "redeem",
        }
    }
}

/// One row of the exportable event log.
#[derive(Clone, Debug, PartialEq)]
pub struct LedgerEvent {
    pub tick: u64,
    pub event_type: LedgerEventKind,
    pub batch_id: String,
    pub user_id: String,
    pub eth_base_units: u128,
    pub stable_base_units: u128,
    pub price: Price,
    pub margin_value_units: Option<i128>,
    pub peg_held: Option<bool>,
}

/// Everything a redemption produced, beyond the new ledger state.
#[derive(Clone, Debug, PartialEq)]
pub struct Redemption {
    pub batch_id: String,
    /// ETH paid to the redeeming user.
    pub user_receives: Amount<Eth>,
    pub margin: SignedAmount<Value>,
    pub peg_held: bool,
    /// The backing pool, settled.
    pub pool: PoolState,
    /// Total ETH each investor walks away with (principal minus slash plus
    /// any reward paid in ETH), in investor-id order.
    pub investor_payouts: Vec<(InvestorId, Amount<Eth>)>,
    /// Wei retained by the ledger from floor rounding in this redemption.
    pub dust_accrued: Amount<Eth>,
    pub shortfall: Option<Amount<Value>>,
}

/// The ledger is an immutable value; mint and redeem consume it and return
/// the successor state.
#[derive(Clone, Debug, PartialEq)]
pub struct LedgerState {
    config: LedgerConfig,
    batches: BTreeMap<String, IssuanceBatch>,
    total_outstanding: Amount<Stable>,
    total_collateral: Amount<Eth>,
    peg_events: Vec<PegEvent>,
    dust: Amount<Eth>,
    events: Vec<LedgerEvent>,
    clock: u64,
    next_batch: u64,
}

impl LedgerState {
    pub fn new(config: LedgerConfig) -> Self {
        LedgerState {
            config,
            batches: BTreeMap::new(),
            total_outstanding: Amount::ZERO,
            total_collateral: Amount::ZERO,
            peg_events: Vec::new(),
            dust: Amount::ZERO,
            events: Vec::new(),
            clock: 0,
            next_batch: 0,
        }
    }

    pub fn batch(&self, batch_id: &str) -> Option<&IssuanceBatch> {
        self.batches.get(batch_id)
    }

    pub fn total_outstanding(&self) -> Amount<Stable> {
        self.total_outstanding
    }

    pub fn total_collateral(&self) -> Amount<Eth> {
        self.total_collateral
    }

    pub fn peg_events(&self) -> &[PegEvent] {
        &self.peg_events
    }

    pub fn dust(&self) -> Amount<Eth> {
        self.dust
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    /// Issue stablecoins against collateral at the given price, backed by an
    /// active pool. The pool is parked inside the batch until redemption.
    pub fn mint(
        mut self,
        user_id: &str,
        collateral_eth: Amount<Eth>,
        price: Price,
        pool: PoolState,
    ) -> Result<(Self, IssuanceBatch), LedgerError> {
        if collateral_eth.is_zero() {
            return Err(LedgerError::ZeroCollateral);
        }
        if pool.phase() != PoolPhase::Active {
            return Err(LedgerError::InactivePool(pool.phase()));
        }
        let required = required_backing(collateral_eth, self.config.backing_ratio);
        if pool.revealed_total() < required {
            return Err(LedgerError::InsufficientBacking {
                backing: pool.revealed_total(),
                required,
            });
        }
        let stable_issued = stable_face_floor(collateral_eth, price);
        if stable_issued.is_zero() {
            return Err(LedgerError::DustMint);
        }

        self.clock += 1;
        self.next_batch += 1;
        let batch_id = format!("batch-{:04}", self.next_batch);
        let batch = IssuanceBatch {
            batch_id: batch_id.clone(),
            user_id: user_id.to_string(),
            collateral_eth,
            stable_issued,
            price_at_mint: price,
            backing_pool: pool,
            status: BatchStatus::Outstanding,
        };
        self.total_outstanding = self.total_outstanding + stable_issued;
        self.total_collateral = self.total_collateral + collateral_eth;
        self.events.push(LedgerEvent {
            tick: self.clock,
            event_type: LedgerEventKind::Mint,
            batch_id: batch_id.clone(),
            user_id: user_id.to_string(),
            eth_base_units: collateral_eth.base_units(),
            stable_base_units: stable_issued.base_units(),
            price,
            margin_value_units: None,
            peg_held: None,
        });
        self.batches.insert(batch_id, batch.clone());
        Ok((self, batch))
    }

    /// Redeem a batch at the current price: pay the user face value in ETH,
    /// settle the backing pool on the margin, and route leftover collateral
    /// (positive margin) or slashed principal (negative margin) accordingly.
    pub fn redeem(
        mut self,
        batch_id: &str,
        current_price: Price,
    ) -> Result<(Self, Redemption), LedgerError> {
        let batch = self
            .batches
            .get(batch_id)
            .ok_or_else(|| LedgerError::UnknownBatch(batch_id.to_string()))?;
        if batch.status == BatchStatus::Redeemed {
            return Err(LedgerError::AlreadyRedeemed(batch_id.to_string()));
        }
        let margin = compute_margin(batch, current_price)?;
        let collateral = batch.collateral_eth;
        let stable = batch.stable_issued;

        let mut batch = self.batches.remove(batch_id).expect("present");
        let pool = std::mem::replace(
            &mut batch.backing_pool,
            // Placeholder until the settled pool is stored back below.
            PoolState::open(Amount::from_base_units(1), Amount::from_base_units(1)).expect("valid"),
        );
        let pool = pool.settle(margin, current_price)?;
        let report = pool.settlement().expect("settled").clone();

        let face_target = value_to_eth_floor(stable.face_value(), current_price);
        let principals: Vec<(InvestorId, Amount<Eth>)> = pool.revealed_fills();
        let coverage: Amount<Eth> = report
            .per_investor
            .iter()
            .zip(&principals)
            .map(|(inv, (_, principal))| *principal - inv.principal_returned)
            .sum();

        let user_receives;
        let mut investor_payouts = Vec::with_capacity(principals.len());
        let mut dust_accrued = Amount::ZERO;
        let peg_held = !report.insolvent;

        if !margin.is_negative() {
            // Leftover collateral above face backs the rewards, paid in ETH
            // at the settlement price.
            user_receives = face_target;
            let leftover = collateral - user_receives;
            let mut rewards_paid = Amount::ZERO;
            for (inv, (id, principal)) in report.per_investor.iter().zip(&principals) {
                let reward_eth = value_to_eth_floor(
                    Amount::from_base_units(inv.reward_or_loss.base_units() as u128),
                    current_price,
                );
                rewards_paid = rewards_paid + reward_eth;
                investor_payouts.push((id.clone(), *principal + reward_eth));
            }
            dust_accrued = leftover - rewards_paid;
        } else if peg_held {
            // Slashed principal tops the user up to face value.
            user_receives = face_target.min(collateral + coverage);
            for (inv, (id, _)) in report.per_investor.iter().zip(&principals) {
                investor_payouts.push((id.clone(), inv.principal_returned));
            }
            dust_accrued = (collateral + coverage) - user_receives;
        } else {
            // Insolvent: the user takes all collateral plus all coverage.
            user_receives = collateral + coverage;
            for (inv, (id, _)) in report.per_investor.iter().zip(&principals) {
                debug_assert!(inv.principal_returned.is_zero());
                investor_payouts.push((id.clone(), inv.principal_returned));
            }
        }

        self.clock += 1;
        let shortfall = if report.insolvent {
            self.peg_events.push(PegEvent {
                tick: self.clock,
                batch_id: batch_id.to_string(),
                shortfall: report.shortfall,
            });
            Some(report.shortfall)
        } else {
            None
        };

        self.total_outstanding = self.total_outstanding - stable;
        self.total_collateral = self.total_collateral - collateral;
        self.dust = self.dust + dust_accrued;
        self.events.push(LedgerEvent {
            tick: self.clock,
            event_type: LedgerEventKind::Redeem,
            batch_id: batch_id.to_string(),
            user_id: batch.user_id.clone(),
            eth_base_units: user_receives.base_units(),
            stable_base_units: stable.base_units(),
            price: current_price,
            margin_value_units: Some(margin.base_units()),
            peg_held: Some(peg_held),
        });

        batch.status = BatchStatus::Redeemed;
        batch.backing_pool = pool.clone();
        self.batches.insert(batch_id.to_string(), batch);

        let redemption = Redemption {
            batch_id: batch_id.to_string(),
            user_receives,
            margin,
            peg_held,
            pool,
            investor_payouts,
            dust_accrued,
            shortfall,
        };

        debug_assert!(redemption_conserves_eth(collateral, &redemption, &principals));
        Ok((self, redemption))
    }

    /// Event log as CSV, columns:
    /// tick,event_type,batch_id,user_id,eth_base_units,stable_base_units,price,margin_value_units,peg_held
    pub fn event_log_csv(&self) -> String {
        let mut out = String::from(
            "tick,event_type,batch_id,user_id,eth_base_units,stable_base_units,price,margin_value_units,peg_held\n",
        );
        for ev in &self.events {
            let margin = ev
                .margin_value_units
                .map(|m| m.to_string())
                .unwrap_or_default();
            let peg = ev.peg_held.map(|p| p.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                ev.tick,
                ev.event_type.as_str(),
                ev.batch_id,
                ev.user_id,
                ev.eth_base_units,
                ev.stable_base_units,
                ev.price,
                margin,
                peg
            ));
        }
        out
    }
}

/// Pool backing required for a mint: ratio × collateral, rounded up so the
/// check never passes on less than the exact requirement.
fn required_backing(collateral: Amount<Eth>, ratio: f64) -> Amount<Eth> {
    use num_bigint::ToBigInt;
    use num_rational::BigRational;
    use num_traits::ToPrimitive;
    let exact = BigRational::from_float(ratio).expect("finite ratio")
        * collateral.base_units().to_bigint().unwrap();
    Amount::from_base_units(exact.ceil().to_integer().to_u128().expect("backing in range"))
}

/// Margin of an outstanding batch at the current price:
/// collateral value minus the stable face, in value units (may be negative).
pub fn compute_margin(
    batch: &IssuanceBatch,
    current_price: Price,
) -> Result<SignedAmount<Value>, LedgerError> {
    if batch.status == BatchStatus::Redeemed {
        return Err(LedgerError::AlreadyRedeemed(batch.batch_id.clone()));
    }
    let value: SignedAmount<Value> = eth_value_floor(batch.collateral_eth, current_price).into();
    let face: SignedAmount<Value> = batch.stable_issued.face_value().into();
    Ok(value - face)
}

fn redemption_conserves_eth(
    collateral: Amount<Eth>,
    redemption: &Redemption,
    principals: &[(InvestorId, Amount<Eth>)],
) -> bool {
    let eth_in = collateral.base_units()
        + principals.iter().map(|(_, p)| p.base_units()).sum::<u128>();
    let eth_out = redemption.user_receives.base_units()
        + redemption
            .investor_payouts
            .iter()
            .map(|(_, p)| p.base_units())
            .sum::<u128>()
        + redemption.dust_accrued.base_units();
    eth_in == eth_out
}

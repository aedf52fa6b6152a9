//! One collateral-pool round as an immutable state machine.
//!
//! Contributions are gathered under a commit-reveal scheme: investors first
//! publish a SHA-256 digest binding them to a hidden amount, then disclose
//! (amount, nonce) once everyone has committed. Amounts are hidden until the
//! reveal phase, which is what makes filling the pool a competitive game.
//!
//! The commitment preimage is bit-exact:
//! `SHA-256(amount as 16-byte big-endian base units ‖ nonce as 32 raw bytes ‖
//! investor id as UTF-8, no terminator)`.
//!
//! At settlement the margin is distributed over the revealed fills with the
//! incentive engine; a negative margin is deducted from principals, capped at
//! each investor's principal valued at the settlement price. Per-investor
//! integer shares come from largest-remainder apportionment so the value ledger
//! sums exactly; when aggregate caps cannot cover the loss the round is
//! insolvent and the residual shortfall is recorded.

use std::collections::BTreeMap;

use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::incentive::{compute_distribution, DistributionInput, IncentiveError};
use crate::money::{
    apportion_largest_remainder, apportion_with_caps, eth_value_floor, value_to_eth_floor, Amount,
    Eth, Price, SignedAmount, Value,
};
use crate::InvestorId;

pub type CommitmentDigest = [u8; 32];
pub type Nonce = [u8; 32];

/// Lifecycle of a pool round. Transitions only move forward:
/// Open → Committing → Revealing → Active → Settled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolPhase {
    Open,
    Committing,
    Revealing,
    Active,
    Settled,
}

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("total limit must be positive")]
    ZeroLimit,
    #[error("minimum fill must be positive and at most the total limit")]
    BadMinFill,
    #[error("operation requires phase {expected:?} but the pool is {actual:?}")]
    WrongPhase { expected: PoolPhase, actual: PoolPhase },
    #[error("investor {0} already committed")]
    DuplicateCommit(InvestorId),
    #[error("cannot close commitments on an empty pool")]
    EmptyPool,
    #[error("no commitment from investor {0}")]
    UnknownInvestor(InvestorId),
    #[error("investor {0} already revealed")]
    AlreadyRevealed(InvestorId),
    #[error("commitment from investor {0} was voided by an earlier failed reveal")]
    CommitmentVoided(InvestorId),
    #[error("reveal from investor {id} does not match its commitment digest")]
    DigestMismatch {
        id: InvestorId,
        /// Successor state with the commitment voided and excluded.
        state: Box<PoolState>,
    },
    #[error("revealed amount {amount:?} is below the minimum fill {min_fill:?}")]
    BelowMinFill { amount: Amount<Eth>, min_fill: Amount<Eth> },
    #[error("reveal of {amount:?} would push the pool past its limit {limit:?}")]
    Overfill { amount: Amount<Eth>, limit: Amount<Eth> },
    #[error("cannot activate a pool with no valid reveals")]
    NoReveals,
    #[error(transparent)]
    Distribution(#[from] IncentiveError),
}

impl PoolError {
    pub fn category(&self) -> &'static str {
        match self {
            PoolError::ZeroLimit | PoolError::BadMinFill => "domain",
            PoolError::WrongPhase { .. } => "wrong-phase",
            PoolError::DuplicateCommit(_) => "duplicate-commit",
            PoolError::EmptyPool => "empty-pool",
            PoolError::UnknownInvestor(_) => "unknown-investor",
            PoolError::AlreadyRevealed(_) => "already-revealed",
            PoolError::CommitmentVoided(_) => "commitment-voided",
            PoolError::DigestMismatch { .. } => "digest-mismatch",
            PoolError::BelowMinFill { .. } => "below-min-fill",
            PoolError::Overfill { .. } => "overfill",
            PoolError::NoReveals => "no-reveals",
            PoolError::Distribution(e) => e.category(),
        }
    }
}

/// A disclosed contribution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reveal {
    pub amount: Amount<Eth>,
    pub nonce: Nonce,
}

/// One investor's commitment and, after the reveal phase, its disclosure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitRecord {
    pub digest: CommitmentDigest,
    pub revealed: Option<Reveal>,
    /// Set when a reveal contradicted the digest; the record is excluded.
    pub voided: bool,
}

/// Settlement outcome for one investor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvestorSettlement {
    pub investor_id: InvestorId,
    /// Principal handed back, in wei: revealed amount minus any slash.
    pub principal_returned: Amount<Eth>,
    /// Share of the margin (value units); negative when losses were deducted.
    pub reward_or_loss: SignedAmount<Value>,
    /// True when the loss consumed the full settlement-price value of the
    /// principal.
    pub slashed: bool,
}

/// Outcome of settling a round.
#[derive(Clone, Debug, PartialEq)]
pub struct SettlementReport {
    pub margin: SignedAmount<Value>,
    pub settlement_price: Price,
    /// Ordered by investor id.
    pub per_investor: Vec<InvestorSettlement>,
    /// True when the aggregate principal value could not absorb the loss.
    pub insolvent: bool,
    /// `|margin| - Σ caps` when insolvent, zero otherwise.
    pub shortfall: Amount<Value>,
}

/// State of one pool round. Operations consume the state and return the
/// successor, so values can be shared freely across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolState {
    phase: PoolPhase,
    total_limit: Amount<Eth>,
    min_fill: Amount<Eth>,
    commits: BTreeMap<InvestorId, CommitRecord>,
    revealed_total: Amount<Eth>,
    settlement: Option<SettlementReport>,
    /// Logical operation counter; phase entries are stamped with it.
    clock: u64,
    phase_log: Vec<(PoolPhase, u64)>,
}

/// Bit-exact commitment digest over (amount, nonce, investor id).
pub fn commitment_digest(amount: Amount<Eth>, nonce: &Nonce, investor_id: &InvestorId) -> CommitmentDigest {
    let mut hasher = Sha256::new();
    hasher.update(amount.base_units().to_be_bytes());
    hasher.update(nonce);
    hasher.update(investor_id.as_str().as_bytes());
    hasher.finalize().into()
}

impl PoolState {
    /// Open a round: the pool immediately starts accepting commitments.
    pub fn open(total_limit: Amount<Eth>, min_fill: Amount<Eth>) -> Result<Self, PoolError> {
        if total_limit.is_zero() {
            return Err(PoolError::ZeroLimit);
        }
        if min_fill.is_zero() || min_fill > total_limit {
            return Err(PoolError::BadMinFill);
        }
        Ok(PoolState {
            phase: PoolPhase::Committing,
            total_limit,
            min_fill,
            commits: BTreeMap::new(),
            revealed_total: Amount::ZERO,
            settlement: None,
            clock: 0,
            phase_log: vec![(PoolPhase::Open, 0), (PoolPhase::Committing, 0)],
        })
    }

    pub fn phase(&self) -> PoolPhase {
        self.phase
    }

    pub fn total_limit(&self) -> Amount<Eth> {
        self.total_limit
    }

    pub fn min_fill(&self) -> Amount<Eth> {
        self.min_fill
    }

    pub fn revealed_total(&self) -> Amount<Eth> {
        self.revealed_total
    }

    pub fn commits(&self) -> &BTreeMap<InvestorId, CommitRecord> {
        &self.commits
    }

    pub fn settlement(&self) -> Option<&SettlementReport> {
        self.settlement.as_ref()
    }

    pub fn phase_log(&self) -> &[(PoolPhase, u64)] {
        &self.phase_log
    }

    /// Revealed (investor, amount) pairs in investor-id order.
    pub fn revealed_fills(&self) -> Vec<(InvestorId, Amount<Eth>)> {
        self.commits
            .iter()
            .filter_map(|(id, rec)| rec.revealed.as_ref().map(|r| (id.clone(), r.amount)))
            .collect()
    }

    fn expect_phase(&self, expected: PoolPhase) -> Result<(), PoolError> {
        if self.phase == expected {
            Ok(())
        } else {
            Err(PoolError::WrongPhase {
                expected,
                actual: self.phase,
            })
        }
    }

    fn enter_phase(&mut self, phase: PoolPhase) {
        self.clock += 1;
        self.phase = phase;
        self.phase_log.push((phase, self.clock));
    }

    /// Record a commitment. Only the digest is stored; the amount stays hidden.
    pub fn commit(mut self, investor_id: InvestorId, digest: CommitmentDigest) -> Result<Self, PoolError> {
        self.expect_phase(PoolPhase::Committing)?;
        if self.commits.contains_key(&investor_id) {
            return Err(PoolError::DuplicateCommit(investor_id));
        }
        self.clock += 1;
        self.commits.insert(
            investor_id,
            CommitRecord {
                digest,
                revealed: None,
                voided: false,
            },
        );
        Ok(self)
    }

    /// Stop accepting commitments and move to the reveal phase.
    pub fn close_commits(mut self) -> Result<Self, PoolError> {
        self.expect_phase(PoolPhase::Committing)?;
        if self.commits.is_empty() {
            return Err(PoolError::EmptyPool);
        }
        self.enter_phase(PoolPhase::Revealing);
        Ok(self)
    }

    /// Disclose a committed amount. A reveal that contradicts the stored
    /// digest voids the commitment; the error carries the voided successor
    /// state.
    pub fn reveal(
        mut self,
        investor_id: InvestorId,
        amount: Amount<Eth>,
        nonce: Nonce,
    ) -> Result<Self, PoolError> {
        self.expect_phase(PoolPhase::Revealing)?;
        let record = self
            .commits
            .get(&investor_id)
            .ok_or_else(|| PoolError::UnknownInvestor(investor_id.clone()))?;
        if record.voided {
            return Err(PoolError::CommitmentVoided(investor_id));
        }
        if record.revealed.is_some() {
            return Err(PoolError::AlreadyRevealed(investor_id));
        }
        if commitment_digest(amount, &nonce, &investor_id) != record.digest {
            self.clock += 1;
            self.commits.get_mut(&investor_id).expect("present").voided = true;
            return Err(PoolError::DigestMismatch {
                id: investor_id,
                state: Box::new(self),
            });
        }
        if amount < self.min_fill {
            return Err(PoolError::BelowMinFill {
                amount,
                min_fill: self.min_fill,
            });
        }
        let new_total = self
            .revealed_total
            .checked_add(amount)
            .ok_or(PoolError::Overfill { amount, limit: self.total_limit })?;
        if new_total > self.total_limit {
            return Err(PoolError::Overfill {
                amount,
                limit: self.total_limit,
            });
        }
        self.clock += 1;
        self.revealed_total = new_total;
        self.commits.get_mut(&investor_id).expect("present").revealed = Some(Reveal { amount, nonce });
        Ok(self)
    }

    /// Enter the active backing period. Unrevealed and voided commitments are
    /// dropped from the round.
    pub fn activate(mut self) -> Result<Self, PoolError> {
        self.expect_phase(PoolPhase::Revealing)?;
        self.commits.retain(|_, rec| rec.revealed.is_some() && !rec.voided);
        if self.commits.is_empty() {
            return Err(PoolError::NoReveals);
        }
        self.enter_phase(PoolPhase::Active);
        Ok(self)
    }

    /// Settle the round: distribute a positive margin as rewards, deduct a
    /// negative margin from principals (each capped at the settlement-price
    /// value of the principal), and report insolvency when the caps cannot
    /// cover the loss.
    pub fn settle(
        mut self,
        margin: SignedAmount<Value>,
        settlement_price: Price,
    ) -> Result<Self, PoolError> {
        self.expect_phase(PoolPhase::Active)?;
        let fills = self.revealed_fills();

        let input = DistributionInput::new(
            fills
                .iter()
                .map(|(id, amt)| (id.clone(), amt.to_units()))
                .collect(),
            self.total_limit.to_units(),
            margin.to_units(),
        )?;
        let fractions: Vec<f64> = compute_distribution(&input)?.fractions();

        let mut per_investor = Vec::with_capacity(fills.len());
        let mut insolvent = false;
        let mut shortfall = Amount::ZERO;

        if margin.is_negative() {
            let loss_total = margin.magnitude().base_units();
            let caps: Vec<u128> = fills
                .iter()
                .map(|(_, amt)| eth_value_floor(*amt, settlement_price).base_units())
                .collect();
            let losses = apportion_with_caps(loss_total, &fractions, &caps);
            let covered: u128 = losses.iter().sum();
            if covered < loss_total {
                insolvent = true;
                shortfall = Amount::from_base_units(loss_total - covered);
            }
            for ((id, principal), (&loss, &cap)) in fills.iter().zip(losses.iter().zip(&caps)) {
                let slashed = cap > 0 && loss == cap;
                let slash_wei = if slashed {
                    *principal
                } else {
                    value_to_eth_floor(Amount::from_base_units(loss), settlement_price)
                };
                per_investor.push(InvestorSettlement {
                    investor_id: id.clone(),
                    principal_returned: *principal - slash_wei,
                    reward_or_loss: SignedAmount::from_base_units(-(loss as i128)),
                    slashed,
                });
            }
        } else {
            let rewards = apportion_largest_remainder(margin.base_units() as u128, &fractions);
            for ((id, principal), &reward) in fills.iter().zip(&rewards) {
                per_investor.push(InvestorSettlement {
                    investor_id: id.clone(),
                    principal_returned: *principal,
                    reward_or_loss: SignedAmount::from_base_units(reward as i128),
                    slashed: false,
                });
            }
        }

        self.settlement = Some(SettlementReport {
            margin,
            settlement_price,
            per_investor,
            insolvent,
            shortfall,
        });
        self.enter_phase(PoolPhase::Settled);
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> InvestorId {
        InvestorId::from(s)
    }

    fn eth(units: f64) -> Amount<Eth> {
        Amount::from_units(units)
    }

    fn committed_pool(fills: &[(&str, f64)]) -> (PoolState, Vec<(InvestorId, Amount<Eth>, Nonce)>) {
        let mut pool = PoolState::open(eth(100.0), eth(1.0)).unwrap();
        let mut secrets = Vec::new();
        for (k, (name, units)) in fills.iter().enumerate() {
            let investor = id(name);
            let amount = eth(*units);
            let nonce = [k as u8 + 1; 32];
            let digest = commitment_digest(amount, &nonce, &investor);
            pool = pool.commit(investor.clone(), digest).unwrap();
            secrets.push((investor, amount, nonce));
        }
        (pool, secrets)
    }

    fn active_pool(fills: &[(&str, f64)], limit: f64) -> PoolState {
        let (pool, secrets) = committed_pool(fills);
        let mut pool = pool.close_commits().unwrap();
        for (investor, amount, nonce) in secrets {
            pool = pool.reveal(investor, amount, nonce).unwrap();
        }
        let mut pool = pool.activate().unwrap();
        pool.total_limit = eth(limit);
        pool
    }

    // Frozen vector from an independent SHA-256 evaluation of
    // 5e18 as 16-byte BE || 32 zero bytes || "a".
    #[test]
    fn commitment_digest_matches_frozen_vector() {
        let digest = commitment_digest(eth(5.0), &[0u8; 32], &id("a"));
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(
            hex,
            "48d159af70416e046dfca57d0555335b9d2570f3fa9089390e774327b31bc3d3"
        );
    }

    #[test]
    fn open_validates_limits() {
        let pool = PoolState::open(eth(100.0), eth(1.0)).unwrap();
        assert_eq!(pool.phase(), PoolPhase::Committing);
        assert!(pool.revealed_total().is_zero());

        assert!(matches!(
            PoolState::open(Amount::ZERO, Amount::ZERO),
            Err(PoolError::ZeroLimit)
        ));
        assert!(matches!(
            PoolState::open(eth(10.0), eth(20.0)),
            Err(PoolError::BadMinFill)
        ));
    }

    #[test]
    fn commit_records_digest_only() {
        let (pool, _) = committed_pool(&[("a", 5.0)]);
        assert_eq!(pool.commits().len(), 1);
        assert!(pool.commits()[&id("a")].revealed.is_none());
    }

    #[test]
    fn duplicate_commit_rejected() {
        let (pool, _) = committed_pool(&[("a", 5.0)]);
        let err = pool.commit(id("a"), [9u8; 32]).unwrap_err();
        assert!(matches!(err, PoolError::DuplicateCommit(_)));
    }

    #[test]
    fn commit_needs_committing_phase() {
        let pool = active_pool(&[("a", 5.0)], 100.0);
        assert!(matches!(
            pool.commit(id("late"), [0u8; 32]),
            Err(PoolError::WrongPhase { .. })
        ));
    }

    #[test]
    fn close_commits_transitions_or_rejects() {
        let (pool, _) = committed_pool(&[("a", 2.0), ("b", 3.0)]);
        let pool = pool.close_commits().unwrap();
        assert_eq!(pool.phase(), PoolPhase::Revealing);
        assert!(matches!(pool.close_commits(), Err(PoolError::WrongPhase { .. })));

        let empty = PoolState::open(eth(10.0), eth(1.0)).unwrap();
        assert!(matches!(empty.close_commits(), Err(PoolError::EmptyPool)));
    }

    #[test]
    fn valid_reveal_accumulates_total() {
        let (pool, secrets) = committed_pool(&[("a", 5.0)]);
        let (investor, amount, nonce) = secrets.into_iter().next().unwrap();
        let pool = pool.close_commits().unwrap();
        let pool = pool.reveal(investor, amount, nonce).unwrap();
        assert_eq!(pool.revealed_total(), eth(5.0));
    }

    #[test]
    fn wrong_nonce_voids_the_commitment() {
        let (pool, secrets) = committed_pool(&[("a", 5.0)]);
        let (investor, amount, _) = secrets.into_iter().next().unwrap();
        let pool = pool.close_commits().unwrap();
        let err = pool.reveal(investor.clone(), amount, [0xAB; 32]).unwrap_err();
        let state = match err {
            PoolError::DigestMismatch { id: who, state } => {
                assert_eq!(who, investor);
                *state
            }
            other => panic!("expected digest mismatch, got {other:?}"),
        };
        assert!(state.commits()[&investor].voided);
        // A later honest reveal is still excluded.
        let (_, amount, nonce) = committed_pool(&[("a", 5.0)]).1.into_iter().next().unwrap();
        assert!(matches!(
            state.reveal(investor, amount, nonce),
            Err(PoolError::CommitmentVoided(_))
        ));
    }

    #[test]
    fn reveal_edge_rejections() {
        // Overfill: limit 100, fills 60 + 50.
        let (pool, secrets) = committed_pool(&[("a", 60.0), ("b", 50.0)]);
        let mut pool = pool.close_commits().unwrap();
        let mut it = secrets.into_iter();
        let (a, amt_a, nonce_a) = it.next().unwrap();
        let (b, amt_b, nonce_b) = it.next().unwrap();
        pool = pool.reveal(a, amt_a, nonce_a).unwrap();
        assert!(matches!(
            pool.clone().reveal(b.clone(), amt_b, nonce_b),
            Err(PoolError::Overfill { .. })
        ));

        // Below min fill.
        let investor = id("tiny");
        let amount = eth(0.5);
        let nonce = [7u8; 32];
        let digest = commitment_digest(amount, &nonce, &investor);
        let small = PoolState::open(eth(10.0), eth(1.0))
            .unwrap()
            .commit(investor.clone(), digest)
            .unwrap()
            .close_commits()
            .unwrap();
        assert!(matches!(
            small.reveal(investor, amount, nonce),
            Err(PoolError::BelowMinFill { .. })
        ));

        // Unknown investor.
        let (pool, _) = committed_pool(&[("a", 5.0)]);
        let pool = pool.close_commits().unwrap();
        assert!(matches!(
            pool.reveal(id("ghost"), eth(1.0), [0u8; 32]),
            Err(PoolError::UnknownInvestor(_))
        ));
    }

    #[test]
    fn activate_drops_unrevealed() {
        let (pool, secrets) = committed_pool(&[("a", 2.0), ("b", 3.0), ("c", 4.0)]);
        let mut pool = pool.close_commits().unwrap();
        for (investor, amount, nonce) in secrets.into_iter().take(2) {
            pool = pool.reveal(investor, amount, nonce).unwrap();
        }
        let pool = pool.activate().unwrap();
        assert_eq!(pool.phase(), PoolPhase::Active);
        assert_eq!(pool.commits().len(), 2);
        assert!(matches!(pool.activate(), Err(PoolError::WrongPhase { .. })));
    }

    #[test]
    fn activate_requires_a_reveal() {
        let (pool, _) = committed_pool(&[("a", 2.0)]);
        let pool = pool.close_commits().unwrap();
        assert!(matches!(pool.activate(), Err(PoolError::NoReveals)));
    }

    fn micro(units: i64) -> SignedAmount<Value> {
        SignedAmount::from_base_units(units as i128 * 1_000_000)
    }

    #[test]
    fn settle_zero_margin_returns_principals() {
        let pool = active_pool(&[("a", 2.0), ("b", 3.0)], 5.0);
        let pool = pool.settle(micro(0), Price::new(100.0).unwrap()).unwrap();
        assert_eq!(pool.phase(), PoolPhase::Settled);
        let report = pool.settlement.as_ref().unwrap();
        assert!(!report.insolvent);
        for inv in &report.per_investor {
            assert_eq!(inv.reward_or_loss, SignedAmount::ZERO);
            assert!(!inv.slashed);
        }
        assert_eq!(report.per_investor[0].principal_returned, eth(2.0));
        assert_eq!(report.per_investor[1].principal_returned, eth(3.0));
    }

    #[test]
    fn settle_positive_margin_matches_frozen_distribution() {
        // Fills {2, 3}, T = 5, margin +10 value units. Frozen quotas from the
        // exact oracle: 3555950.17 / 6444049.83 micro.
        let pool = active_pool(&[("a", 2.0), ("b", 3.0)], 5.0);
        let pool = pool.settle(micro(10), Price::new(100.0).unwrap()).unwrap();
        let report = pool.settlement.as_ref().unwrap();
        assert_eq!(report.per_investor[0].reward_or_loss.base_units(), 3_555_950);
        assert_eq!(report.per_investor[1].reward_or_loss.base_units(), 6_444_050);
        let total: i128 = report
            .per_investor
            .iter()
            .map(|i| i.reward_or_loss.base_units())
            .sum();
        assert_eq!(total, 10_000_000);
    }

    #[test]
    fn settle_caps_one_investor_and_redistributes() {
        // Fills {1, 9}, T = 10, price 100: caps are 100 and 900 value units.
        // A 950-unit loss overruns the large investor's cap; the residual
        // lands on the small investor, and the round stays solvent.
        let pool = active_pool(&[("a", 1.0), ("b", 9.0)], 10.0);
        let pool = pool.settle(micro(-950), Price::new(100.0).unwrap()).unwrap();
        let report = pool.settlement.as_ref().unwrap();
        assert!(!report.insolvent);
        assert_eq!(report.shortfall.base_units(), 0);
        assert_eq!(report.per_investor[0].reward_or_loss.base_units(), -50_000_000);
        assert_eq!(report.per_investor[1].reward_or_loss.base_units(), -900_000_000);
        assert!(!report.per_investor[0].slashed);
        assert!(report.per_investor[1].slashed);
        // Full slash for b; a gives up the ETH worth its 50-unit share.
        assert!(report.per_investor[1].principal_returned.is_zero());
        assert_eq!(
            report.per_investor[0].principal_returned,
            eth(1.0) - eth(0.5)
        );
        let total: i128 = report
            .per_investor
            .iter()
            .map(|i| i.reward_or_loss.base_units())
            .sum();
        assert_eq!(total, -950_000_000);
    }

    #[test]
    fn settle_insolvent_round_slashes_everyone() {
        // Caps at price 100 are 200 and 300 value units; a 600-unit loss
        // leaves a 100-unit shortfall.
        let pool = active_pool(&[("a", 2.0), ("b", 3.0)], 5.0);
        let pool = pool.settle(micro(-600), Price::new(100.0).unwrap()).unwrap();
        let report = pool.settlement.as_ref().unwrap();
        assert!(report.insolvent);
        assert_eq!(report.shortfall.base_units(), 100_000_000);
        for inv in &report.per_investor {
            assert!(inv.slashed);
            assert!(inv.principal_returned.is_zero());
        }
        assert_eq!(report.per_investor[0].reward_or_loss.base_units(), -200_000_000);
        assert_eq!(report.per_investor[1].reward_or_loss.base_units(), -300_000_000);
    }

    #[test]
    fn settle_requires_active_phase() {
        let (pool, _) = committed_pool(&[("a", 2.0)]);
        assert!(matches!(
            pool.settle(micro(0), Price::new(100.0).unwrap()),
            Err(PoolError::WrongPhase { .. })
        ));
    }

    #[test]
    fn eth_conservation_at_settlement() {
        let pool = active_pool(&[("a", 2.0), ("b", 3.0)], 5.0);
        let revealed = pool.revealed_total();
        let pool = pool.settle(micro(-120), Price::new(90.0).unwrap()).unwrap();
        let report = pool.settlement.as_ref().unwrap();
        let returned: Amount<Eth> = report.per_investor.iter().map(|i| i.principal_returned).sum();
        let slashed = revealed - returned;
        assert_eq!(returned + slashed, revealed);
        // Partial losses: slash value within one micro unit of each loss.
        for inv in &report.per_investor {
            assert!(!inv.slashed);
        }
    }

    #[test]
    fn phase_log_is_monotone() {
        let pool = active_pool(&[("a", 2.0)], 2.0);
        let pool = pool.settle(micro(0), Price::new(100.0).unwrap()).unwrap();
        let log = pool.phase_log();
        let order = [
            PoolPhase::Open,
            PoolPhase::Committing,
            PoolPhase::Revealing,
            PoolPhase::Active,
            PoolPhase::Settled,
        ];
        assert_eq!(log.iter().map(|(p, _)| *p).collect::<Vec<_>>(), order);
        assert!(log.windows(2).all(|w| w[0].1 <= w[1].1));
    }
}

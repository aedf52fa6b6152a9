//! The collateral-pool incentive distribution engine.
//!
//! Each investor's intermediary incentive is `e^(filled - T) / filled`, where
//! `T` is the pool's total limit. Gain fractions are the incentives normalized
//! by their sum, and the distributed return is `fraction * A` for a cumulated
//! margin `A` (which may be negative for losses).
//!
//! For realistic limits (hundreds of ETH) every `e^(filled - T)` underflows to
//! zero in double precision and the naive ratio degenerates to 0/0, so the
//! fractions are computed in log space with a max-shifted exponential sum. The
//! common factor `e^(-T)` cancels in the ratio, making the two forms
//! mathematically identical wherever the naive form is representable. The
//! naive evaluation is kept as a diagnostic route.
//!
//! Also here: the hold-the-asset baseline and the solver locating the fill
//! amount where pool participation and simply holding break even.

use thiserror::Error;

use crate::num::{approx_f64, real, Real};
use crate::InvestorId;

/// Exponent guard: `e^x` overflows f64 just above x = 709.
const MAX_EXPONENT: f64 = 700.0;

/// Grid size for the threshold pre-scan.
const THRESHOLD_GRID: usize = 256;
/// Bisection refinement budget.
const THRESHOLD_MAX_ITER: usize = 200;
/// Absolute tolerance (value units) on the pool-vs-hold difference at the root.
const THRESHOLD_TOL: f64 = 1e-9;

/// Relative headroom when checking Σ fills ≤ T, absorbing base-unit-to-float
/// conversion rounding from upstream integer state.
const OVERFILL_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum IncentiveError {
    #[error("fills must be non-empty")]
    EmptyFills,
    #[error("fill amounts must be positive, got {0}")]
    NonPositiveFill(f64),
    #[error("total limit must be positive, got {0}")]
    NonPositiveLimit(f64),
    #[error("fills sum to {sum} which exceeds the total limit {limit}")]
    Overfilled { sum: f64, limit: f64 },
    #[error("exponent {0} overflows the incentive curve")]
    ExponentOverflow(f64),
    #[error("no investor with fill {0} in the distribution input")]
    FillNotFound(f64),
    #[error("every raw incentive underflowed to zero in the naive evaluation")]
    NaiveUnderflow,
    #[error("invested amount must be positive, got {0}")]
    NonPositiveInvestment(f64),
    #[error("prices must be positive, got {0}")]
    NonPositivePrice(f64),
    #[error("search domain [{lo}, {hi}] is invalid: {reason}")]
    InvalidSearchDomain { lo: f64, hi: f64, reason: &'static str },
}

impl IncentiveError {
    /// Stable machine-readable category for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            IncentiveError::EmptyFills
            | IncentiveError::NonPositiveFill(_)
            | IncentiveError::NonPositiveLimit(_)
            | IncentiveError::Overfilled { .. }
            | IncentiveError::NonPositiveInvestment(_)
            | IncentiveError::NonPositivePrice(_)
            | IncentiveError::InvalidSearchDomain { .. } => "domain",
            IncentiveError::ExponentOverflow(_) => "overflow",
            IncentiveError::FillNotFound(_) => "not-found",
            IncentiveError::NaiveUnderflow => "underflow",
        }
    }
}

/// Validated input to a distribution: who filled how much (ETH), the pool's
/// total limit `T` (ETH), and the cumulated amount `A` to distribute (value
/// units, negative for a loss).
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionInput<R: Real> {
    fills: Vec<(InvestorId, R)>,
    total_limit: R,
    cumulated_amount: R,
}

impl<R: Real> DistributionInput<R> {
    pub fn new(
        fills: Vec<(InvestorId, R)>,
        total_limit: R,
        cumulated_amount: R,
    ) -> Result<Self, IncentiveError> {
        if fills.is_empty() {
            return Err(IncentiveError::EmptyFills);
        }
        if total_limit <= R::zero() || !total_limit.is_finite() {
            return Err(IncentiveError::NonPositiveLimit(approx_f64(total_limit)));
        }
        let mut sum = R::zero();
        for (_, f) in &fills {
            if *f <= R::zero() || !f.is_finite() {
                return Err(IncentiveError::NonPositiveFill(approx_f64(*f)));
            }
            sum += *f;
        }
        if sum > total_limit * (R::one() + real(OVERFILL_SLACK)) {
            return Err(IncentiveError::Overfilled {
                sum: approx_f64(sum),
                limit: approx_f64(total_limit),
            });
        }
        Ok(DistributionInput {
            fills,
            total_limit,
            cumulated_amount,
        })
    }

    pub fn fills(&self) -> &[(InvestorId, R)] {
        &self.fills
    }

    pub fn total_limit(&self) -> R {
        self.total_limit
    }

    pub fn cumulated_amount(&self) -> R {
        self.cumulated_amount
    }
}

/// One investor's slice of a distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct InvestorShare<R: Real> {
    pub investor_id: InvestorId,
    /// The intermediary incentive `e^(filled - T) / filled`, evaluated
    /// directly; underflows to zero for deeply negative exponents.
    pub raw_incentive: R,
    /// Normalized gain fraction in [0, 1].
    pub fraction: R,
    /// `fraction * A`, the investor's share of the cumulated amount.
    pub final_incentive: R,
}

/// Result of a distribution, ordered as the input fills.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionResult<R: Real> {
    pub per_investor: Vec<InvestorShare<R>>,
    /// Sum of the raw incentives; may underflow to zero where the fractions
    /// (computed in log space) remain well-defined.
    pub lsum: R,
}

impl<R: Real> DistributionResult<R> {
    pub fn fractions(&self) -> Vec<R> {
        self.per_investor.iter().map(|s| s.fraction).collect()
    }
}

/// The intermediary incentive of one investor: `e^(filled - T) / filled`.
pub fn compute_incentive<R: Real>(filled: R, total_limit: R) -> Result<R, IncentiveError> {
    if filled <= R::zero() || !filled.is_finite() {
        return Err(IncentiveError::NonPositiveFill(approx_f64(filled)));
    }
    if total_limit <= R::zero() || !total_limit.is_finite() {
        return Err(IncentiveError::NonPositiveLimit(approx_f64(total_limit)));
    }
    let exponent = filled - total_limit;
    if exponent > real(MAX_EXPONENT) {
        return Err(IncentiveError::ExponentOverflow(approx_f64(exponent)));
    }
    Ok(exponent.exp() / filled)
}

/// Log of the intermediary incentive: `(filled - T) - ln(filled)`.
#[inline]
fn log_incentive<R: Real>(filled: R, total_limit: R) -> R {
    (filled - total_limit) - filled.ln()
}

/// Order-independent sum: accumulating in sorted order makes permuting the
/// fills permute the results bit-identically.
fn symmetric_sum<R: Real>(values: &[R]) -> R {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite summands"));
    sorted.into_iter().sum()
}

/// Distribute the cumulated amount across the fills.
///
/// Fractions come from the log-space form; raw incentives and their sum are
/// reported from the direct evaluation and may underflow independently.
pub fn compute_distribution<R: Real>(
    input: &DistributionInput<R>,
) -> Result<DistributionResult<R>, IncentiveError> {
    let t = input.total_limit;
    let logs: Vec<R> = input.fills.iter().map(|(_, f)| log_incentive(*f, t)).collect();
    let max_log = logs
        .iter()
        .copied()
        .fold(R::neg_infinity(), |a, b| if b > a { b } else { a });
    let shifted: Vec<R> = logs.iter().map(|&l| (l - max_log).exp()).collect();
    let shifted_sum = symmetric_sum(&shifted);

    let mut per_investor = Vec::with_capacity(input.fills.len());
    let mut raws = Vec::with_capacity(input.fills.len());
    for (k, (id, f)) in input.fills.iter().enumerate() {
        let raw = compute_incentive(*f, t)?;
        raws.push(raw);
        let fraction = shifted[k] / shifted_sum;
        per_investor.push(InvestorShare {
            investor_id: id.clone(),
            raw_incentive: raw,
            fraction,
            final_incentive: fraction * input.cumulated_amount,
        });
    }
    Ok(DistributionResult {
        per_investor,
        lsum: symmetric_sum(&raws),
    })
}

/// Diagnostic route: evaluate the distribution directly, without the
/// log-space normalization. Errors when every raw incentive underflows.
pub fn compute_distribution_naive<R: Real>(
    input: &DistributionInput<R>,
) -> Result<DistributionResult<R>, IncentiveError> {
    let t = input.total_limit;
    let raws: Vec<R> = input
        .fills
        .iter()
        .map(|(_, f)| compute_incentive(*f, t))
        .collect::<Result<_, _>>()?;
    let lsum = symmetric_sum(&raws);
    if lsum == R::zero() {
        return Err(IncentiveError::NaiveUnderflow);
    }
    let per_investor = input
        .fills
        .iter()
        .zip(&raws)
        .map(|((id, _), &raw)| {
            let fraction = raw / lsum;
            InvestorShare {
                investor_id: id.clone(),
                raw_incentive: raw,
                fraction,
                final_incentive: fraction * input.cumulated_amount,
            }
        })
        .collect();
    Ok(DistributionResult { per_investor, lsum })
}

/// Total P&L of the investor whose fill is `filled`, excluding the returned
/// principal: their `final_incentive` share of the cumulated amount.
pub fn pool_return<R: Real>(filled: R, input: &DistributionInput<R>) -> Result<R, IncentiveError> {
    let dist = compute_distribution(input)?;
    input
        .fills
        .iter()
        .position(|(_, f)| *f == filled)
        .map(|k| dist.per_investor[k].final_incentive)
        .ok_or(IncentiveError::FillNotFound(approx_f64(filled)))
}

/// P&L of holding the same ETH outside the pool: `invested * (end - start)`.
pub fn hold_baseline<R: Real>(
    invested: R,
    price_start: R,
    price_end: R,
) -> Result<R, IncentiveError> {
    if invested <= R::zero() || !invested.is_finite() {
        return Err(IncentiveError::NonPositiveInvestment(approx_f64(invested)));
    }
    for p in [price_start, price_end] {
        if p <= R::zero() || !p.is_finite() {
            return Err(IncentiveError::NonPositivePrice(approx_f64(p)));
        }
    }
    Ok(invested * (price_end - price_start))
}

/// Query for the fill amount where a marginal investor's pool P&L crosses the
/// hold baseline, with the other investors' contributions fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdQuery<R: Real> {
    pub background_fills: Vec<R>,
    pub total_limit: R,
    pub price_start: R,
    pub price_end: R,
    /// Cumulated amount distributed at settlement, value units.
    pub margin: R,
    /// Closed search interval for the marginal fill, ETH. The low edge must
    /// be at least 1 ETH (the monotone region of the incentive curve).
    pub search_domain: (R, R),
}

impl<R: Real> ThresholdQuery<R> {
    fn validate(&self) -> Result<(), IncentiveError> {
        let (lo, hi) = self.search_domain;
        let as_domain = |reason| IncentiveError::InvalidSearchDomain {
            lo: approx_f64(lo),
            hi: approx_f64(hi),
            reason,
        };
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(as_domain("bounds must be finite"));
        }
        if lo < R::one() {
            return Err(as_domain("low edge below 1 ETH"));
        }
        if lo >= hi {
            return Err(as_domain("low edge must be strictly below high edge"));
        }
        let mut background_sum = R::zero();
        for &f in &self.background_fills {
            if f <= R::zero() || !f.is_finite() {
                return Err(IncentiveError::NonPositiveFill(approx_f64(f)));
            }
            background_sum += f;
        }
        if hi > self.total_limit - background_sum {
            return Err(as_domain("high edge exceeds remaining pool capacity"));
        }
        for p in [self.price_start, self.price_end] {
            if p <= R::zero() || !p.is_finite() {
                return Err(IncentiveError::NonPositivePrice(approx_f64(p)));
            }
        }
        Ok(())
    }
}

/// Locate the smallest fill in the search domain where the marginal
/// investor's pool return equals the hold baseline: a 256-point grid scan for
/// a sign change, then bisection to within 1e-9 value units.
/// Returns `None` when the difference never changes sign on the domain.
pub fn find_threshold<R: Real>(query: &ThresholdQuery<R>) -> Result<Option<R>, IncentiveError> {
    query.validate()?;
    let (lo, hi) = query.search_domain;

    let probe = InvestorId::from("probe");
    let advantage = |x: R| -> Result<R, IncentiveError> {
        let mut fills: Vec<(InvestorId, R)> = query
            .background_fills
            .iter()
            .enumerate()
            .map(|(i, &f)| (InvestorId::from(format!("bg-{i}")), f))
            .collect();
        fills.push((probe.clone(), x));
        let input = DistributionInput::new(fills, query.total_limit, query.margin)?;
        let pool = pool_return(x, &input)?;
        let hold = hold_baseline(x, query.price_start, query.price_end)?;
        Ok(pool - hold)
    };

    let n = real::<R>((THRESHOLD_GRID - 1) as f64);
    let step = (hi - lo) / n;
    let mut xs = Vec::with_capacity(THRESHOLD_GRID);
    let mut gs = Vec::with_capacity(THRESHOLD_GRID);
    for k in 0..THRESHOLD_GRID {
        let x = if k == THRESHOLD_GRID - 1 {
            hi
        } else {
            lo + step * real::<R>(k as f64)
        };
        xs.push(x);
        gs.push(advantage(x)?);
    }
    // An identically zero difference has no sign change to locate.
    if gs.iter().all(|g| *g == R::zero()) {
        return Ok(None);
    }
    for k in 0..THRESHOLD_GRID {
        if gs[k] == R::zero() {
            // Exact root on the grid of a non-trivial difference.
            return Ok(Some(xs[k]));
        }
        if k > 0 && (gs[k] > R::zero()) != (gs[k - 1] > R::zero()) {
            // Bracketed: bisect [xs[k-1], xs[k]].
            let tol = real::<R>(THRESHOLD_TOL);
            let mut a = xs[k - 1];
            let mut b = xs[k];
            let mut ga = gs[k - 1];
            let mut mid = (a + b) / real::<R>(2.0);
            for _ in 0..THRESHOLD_MAX_ITER {
                mid = (a + b) / real::<R>(2.0);
                let gm = advantage(mid)?;
                if gm.abs() <= tol {
                    break;
                }
                if (gm > R::zero()) == (ga > R::zero()) {
                    a = mid;
                    ga = gm;
                } else {
                    b = mid;
                }
            }
            return Ok(Some(mid));
        }
    }
    Ok(None)
}

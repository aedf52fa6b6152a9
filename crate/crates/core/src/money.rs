//! Exact base-unit money arithmetic.
//!
//! All settlement-critical quantities are unsigned 128-bit integers of base
//! units, tagged at the type level with their currency so cross-currency
//! arithmetic cannot compile. ETH is held in wei (10^-18 ETH); STABLE and
//! VALUE are held in micro units (10^-6). Conversions between ETH and value
//! go through an explicit price and floor to base units, computed in exact
//! rational arithmetic so results are bit-reproducible.

use std::cmp::Ordering;
use std::fmt;
use std::marker::PhantomData;

use num_bigint::{BigInt, ToBigInt};
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Marker trait for currency tags.
pub trait Currency: Copy + Clone + fmt::Debug + PartialEq + Eq + 'static {
    const SYMBOL: &'static str;
    /// Base units per whole unit (10^decimals).
    const UNITS_PER_WHOLE: u128;
}

/// The collateral asset, held in wei.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Eth;
/// The issued stablecoin, held in micro units.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stable;
/// Abstract value units (the stablecoin's target), held in micro units.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Value;

impl Currency for Eth {
    const SYMBOL: &'static str = "ETH";
    const UNITS_PER_WHOLE: u128 = 1_000_000_000_000_000_000;
}
impl Currency for Stable {
    const SYMBOL: &'static str = "STABLE";
    const UNITS_PER_WHOLE: u128 = 1_000_000;
}
impl Currency for Value {
    const SYMBOL: &'static str = "VALUE";
    const UNITS_PER_WHOLE: u128 = 1_000_000;
}

#[derive(Debug, Error, PartialEq)]
pub enum MoneyError {
    #[error("price must be positive and finite (got {0})")]
    InvalidPrice(f64),
    #[error("amount overflows 128-bit base units")]
    Overflow,
}

/// An unsigned quantity of a single currency, in base units.
pub struct Amount<C: Currency> {
    base: u128,
    _currency: PhantomData<C>,
}

// PhantomData defeats derive; implement the usual value traits by hand.
impl<C: Currency> Clone for Amount<C> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<C: Currency> Copy for Amount<C> {}
impl<C: Currency> PartialEq for Amount<C> {
    fn eq(&self, other: &Self) -> bool {
        self.base == other.base
    }
}
impl<C: Currency> Eq for Amount<C> {}
impl<C: Currency> PartialOrd for Amount<C> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<C: Currency> Ord for Amount<C> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.base.cmp(&other.base)
    }
}
impl<C: Currency> fmt::Debug for Amount<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.base, C::SYMBOL)
    }
}
impl<C: Currency> fmt::Display for Amount<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.to_units(), C::SYMBOL)
    }
}

impl<C: Currency> Amount<C> {
    pub const ZERO: Amount<C> = Amount {
        base: 0,
        _currency: PhantomData,
    };

    pub fn from_base_units(base: u128) -> Self {
        Amount {
            base,
            _currency: PhantomData,
        }
    }

    /// Whole units, rounded to nearest base unit. Intended for configuration
    /// literals (scenario files, CLI flags); settlement conversions floor.
    pub fn from_units(units: f64) -> Self {
        assert!(
            units.is_finite() && units >= 0.0,
            "amount literal must be finite and non-negative, got {units}"
        );
        let exact = BigRational::from_float(units).expect("finite float")
            * BigInt::from(C::UNITS_PER_WHOLE);
        let rounded = exact.round().to_integer();
        Amount::from_base_units(rounded.to_u128().expect("amount literal in range"))
    }

    pub fn base_units(self) -> u128 {
        self.base
    }

    /// Lossy f64 view in whole units, for reports and weighting math.
    pub fn to_units(self) -> f64 {
        self.base as f64 / C::UNITS_PER_WHOLE as f64
    }

    pub fn is_zero(self) -> bool {
        self.base == 0
    }

    pub fn checked_add(self, rhs: Self) -> Option<Self> {
        self.base.checked_add(rhs.base).map(Self::from_base_units)
    }

    pub fn checked_sub(self, rhs: Self) -> Option<Self> {
        self.base.checked_sub(rhs.base).map(Self::from_base_units)
    }

    pub fn saturating_sub(self, rhs: Self) -> Self {
        Self::from_base_units(self.base.saturating_sub(rhs.base))
    }
}

impl<C: Currency> std::ops::Add for Amount<C> {
    type Output = Amount<C>;
    fn add(self, rhs: Self) -> Self {
        self.checked_add(rhs).expect("amount addition overflow")
    }
}

impl<C: Currency> std::ops::Sub for Amount<C> {
    type Output = Amount<C>;
    fn sub(self, rhs: Self) -> Self {
        self.checked_sub(rhs).expect("amount subtraction underflow")
    }
}

impl<C: Currency> std::iter::Sum for Amount<C> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Amount::ZERO, |a, b| a + b)
    }
}

impl Amount<Stable> {
    /// Face value of stablecoins: 1 STABLE is defined to be worth 1 VALUE.
    pub fn face_value(self) -> Amount<Value> {
        Amount::from_base_units(self.base)
    }
}

/// A signed quantity of a single currency, in base units. Used for margins
/// and per-investor P&L, which may run negative.
pub struct SignedAmount<C: Currency> {
    base: i128,
    _currency: PhantomData<C>,
}

impl<C: Currency> Clone for SignedAmount<C> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<C: Currency> Copy for SignedAmount<C> {}
impl<C: Currency> PartialEq for SignedAmount<C> {
    fn eq(&self, other: &Self) -> bool {
        self.base == other.base
    }
}
impl<C: Currency> Eq for SignedAmount<C> {}
impl<C: Currency> PartialOrd for SignedAmount<C> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<C: Currency> Ord for SignedAmount<C> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.base.cmp(&other.base)
    }
}
impl<C: Currency> fmt::Debug for SignedAmount<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.base, C::SYMBOL)
    }
}
impl<C: Currency> fmt::Display for SignedAmount<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.to_units(), C::SYMBOL)
    }
}

impl<C: Currency> SignedAmount<C> {
    pub const ZERO: SignedAmount<C> = SignedAmount {
        base: 0,
        _currency: PhantomData,
    };

    pub fn from_base_units(base: i128) -> Self {
        SignedAmount {
            base,
            _currency: PhantomData,
        }
    }

    pub fn base_units(self) -> i128 {
        self.base
    }

    pub fn to_units(self) -> f64 {
        self.base as f64 / C::UNITS_PER_WHOLE as f64
    }

    pub fn is_negative(self) -> bool {
        self.base < 0
    }

    /// Magnitude as an unsigned amount.
    pub fn magnitude(self) -> Amount<C> {
        Amount::from_base_units(self.base.unsigned_abs())
    }
}

impl<C: Currency> From<Amount<C>> for SignedAmount<C> {
    fn from(a: Amount<C>) -> Self {
        SignedAmount::from_base_units(a.base as i128)
    }
}

impl<C: Currency> std::ops::Sub for SignedAmount<C> {
    type Output = SignedAmount<C>;
    fn sub(self, rhs: Self) -> Self {
        SignedAmount::from_base_units(self.base.checked_sub(rhs.base).expect("signed underflow"))
    }
}

impl<C: Currency> std::ops::Add for SignedAmount<C> {
    type Output = SignedAmount<C>;
    fn add(self, rhs: Self) -> Self {
        SignedAmount::from_base_units(self.base.checked_add(rhs.base).expect("signed overflow"))
    }
}

impl<C: Currency> std::iter::Sum for SignedAmount<C> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(SignedAmount::ZERO, |a, b| a + b)
    }
}

/// A validated VALUE-per-ETH market price.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Price(f64);

impl Price {
    pub fn new(value: f64) -> Result<Self, MoneyError> {
        if value.is_finite() && value > 0.0 {
            Ok(Price(value))
        } else {
            Err(MoneyError::InvalidPrice(value))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// Exact rational view of the price (every finite f64 is rational).
    fn rational(self) -> BigRational {
        BigRational::from_float(self.0).expect("price is finite")
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

// VALUE micro per wei carries a factor 10^6 / 10^18 = 10^-12.
const WEI_PER_MICRO_SCALE: u128 = 1_000_000_000_000;

fn floor_to_u128(r: &BigRational) -> u128 {
    let f = r.floor().to_integer();
    debug_assert!(!f.is_negative());
    f.to_u128().expect("conversion result exceeds u128")
}

/// Market value of an ETH quantity, floored to micro units:
/// floor(wei * price / 10^12).
pub fn eth_value_floor(eth: Amount<Eth>, price: Price) -> Amount<Value> {
    let r = price.rational() * eth.base_units().to_bigint().unwrap()
        / WEI_PER_MICRO_SCALE.to_bigint().unwrap();
    Amount::from_base_units(floor_to_u128(&r))
}

/// Stablecoin face issued against collateral at the mint price, floored:
/// same arithmetic as [`eth_value_floor`], tagged STABLE.
pub fn stable_face_floor(eth: Amount<Eth>, price: Price) -> Amount<Stable> {
    Amount::from_base_units(eth_value_floor(eth, price).base_units())
}

/// ETH quantity worth a given value at a price, floored to wei:
/// floor(micro * 10^12 / price).
pub fn value_to_eth_floor(v: Amount<Value>, price: Price) -> Amount<Eth> {
    let r = BigRational::from_integer(v.base_units().to_bigint().unwrap())
        * WEI_PER_MICRO_SCALE.to_bigint().unwrap()
        / price.rational();
    Amount::from_base_units(floor_to_u128(&r))
}

/// Largest-remainder apportionment: split `total` into integer shares
/// proportional to `weights`, summing to `total` exactly. Ties on the
/// fractional part break toward the lower index.
pub fn apportion_largest_remainder(total: u128, weights: &[f64]) -> Vec<u128> {
    assert!(!weights.is_empty(), "apportionment needs at least one weight");
    let wsum: f64 = weights.iter().sum();
    assert!(
        wsum > 0.0 && wsum.is_finite(),
        "apportionment weights must sum to a positive finite value"
    );
    let mut shares: Vec<u128> = Vec::with_capacity(weights.len());
    let mut fracs: Vec<(usize, f64)> = Vec::with_capacity(weights.len());
    let mut assigned: u128 = 0;
    for (i, &w) in weights.iter().enumerate() {
        let quota = (w / wsum) * total as f64;
        let floor = quota.floor().max(0.0).min(total as f64) as u128;
        shares.push(floor);
        fracs.push((i, quota - floor as f64));
        assigned += floor;
    }
    if assigned <= total {
        let mut remainder = total - assigned;
        fracs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for (i, _) in fracs {
            if remainder == 0 {
                break;
            }
            shares[i] += 1;
            remainder -= 1;
        }
    } else {
        // Float quota error overshot; trim from the smallest fractional parts.
        let mut excess = assigned - total;
        fracs.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        for (i, _) in fracs {
            if excess == 0 {
                break;
            }
            let take = shares[i].min(excess);
            shares[i] -= take;
            excess -= take;
        }
    }
    debug_assert_eq!(shares.iter().sum::<u128>(), total);
    shares
}

/// Capped waterfall apportionment: like [`apportion_largest_remainder`] but no
/// share may exceed its cap; overflow above a cap is redistributed among the
/// uncapped weights. Returns shares summing to min(total, Σ caps); when
/// `total ≥ Σ caps` every share equals its cap.
pub fn apportion_with_caps(total: u128, weights: &[f64], caps: &[u128]) -> Vec<u128> {
    assert_eq!(weights.len(), caps.len());
    let cap_sum: u128 = caps.iter().sum();
    if total >= cap_sum {
        return caps.to_vec();
    }
    let mut shares = vec![0u128; weights.len()];
    let mut active: Vec<usize> = (0..weights.len()).collect();
    let mut remaining = total;
    while remaining > 0 && !active.is_empty() {
        let w: Vec<f64> = active.iter().map(|&i| weights[i]).collect();
        if w.iter().sum::<f64>() <= 0.0 {
            // Zero-weight remainder: hand out unit-by-unit up to caps.
            for &i in &active {
                let room = caps[i] - shares[i];
                let take = room.min(remaining);
                shares[i] += take;
                remaining -= take;
                if remaining == 0 {
                    break;
                }
            }
            break;
        }
        let split = apportion_largest_remainder(remaining, &w);
        let mut newly_capped = false;
        let mut next_active = Vec::with_capacity(active.len());
        for (k, &i) in active.iter().enumerate() {
            let proposed = shares[i] + split[k];
            if proposed >= caps[i] {
                remaining -= caps[i] - shares[i];
                shares[i] = caps[i];
                newly_capped = true;
            } else {
                next_active.push(i);
            }
        }
        if !newly_capped {
            // Nobody hit a cap: the split stands and we are done.
            for (k, &i) in active.iter().enumerate() {
                shares[i] += split[k];
            }
            remaining = 0;
        }
        active = next_active;
    }
    debug_assert_eq!(shares.iter().sum::<u128>(), total.min(cap_sum));
    shares
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn amount_literals_are_exact() {
        assert_eq!(Amount::<Eth>::from_units(2.0).base_units(), 2_000_000_000_000_000_000);
        assert_eq!(Amount::<Eth>::from_units(0.5).base_units(), 500_000_000_000_000_000);
        assert_eq!(Amount::<Stable>::from_units(200.0).base_units(), 200_000_000);
    }

    #[test]
    fn eth_value_floors_exactly() {
        let two_eth = Amount::<Eth>::from_units(2.0);
        let p = Price::new(100.0).unwrap();
        assert_eq!(eth_value_floor(two_eth, p).base_units(), 200_000_000);

        // 1 wei at price 100 is below one micro unit.
        let wei = Amount::<Eth>::from_base_units(1);
        assert_eq!(eth_value_floor(wei, p).base_units(), 0);
    }

    #[test]
    fn value_to_eth_floors_exactly() {
        // 200 STABLE face redeemed at price 150: 200/150 ETH floored at wei.
        let face = Amount::<Value>::from_base_units(200_000_000);
        let p = Price::new(150.0).unwrap();
        assert_eq!(value_to_eth_floor(face, p).base_units(), 1_333_333_333_333_333_333);
    }

    #[test]
    fn price_rejects_non_positive() {
        assert!(Price::new(0.0).is_err());
        assert!(Price::new(-1.0).is_err());
        assert!(Price::new(f64::NAN).is_err());
    }

    #[test]
    fn largest_remainder_conserves_total() {
        let shares = apportion_largest_remainder(50_000_000, &[0.3555950173551955, 0.6444049826448045]);
        assert_eq!(shares.iter().sum::<u128>(), 50_000_000);
        assert_eq!(shares, vec![17_779_751, 32_220_249]);
    }

    #[test]
    fn capped_waterfall_redistributes() {
        // One cap binds; the residual lands on the other investor.
        let shares = apportion_with_caps(100, &[0.1, 0.9], &[5, 1_000]);
        assert_eq!(shares, vec![5, 95]);

        // Aggregate caps insufficient: everyone at cap.
        let shares = apportion_with_caps(600_000_000, &[0.4, 0.6], &[200_000_000, 300_000_000]);
        assert_eq!(shares, vec![200_000_000, 300_000_000]);
    }

    #[test]
    fn face_value_retags_one_to_one() {
        let s = Amount::<Stable>::from_base_units(123);
        assert_eq!(s.face_value().base_units(), 123);
    }
}

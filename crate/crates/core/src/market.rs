//! Deterministic price paths and strategic fill policies.
//!
//! Prices come either from an explicit table or from seeded geometric
//! Brownian motion; identical seed and parameters reproduce the path
//! bit-exactly. Agents decide fill amounts knowing only the pool's limits and
//! their own budget, which is what keeps contributions anonymous.

use num_bigint::ToBigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::{Amount, Eth};

#[derive(Debug, Error, PartialEq)]
pub enum MarketError {
    #[error("price table must be non-empty, start at tick 0, and be strictly increasing in tick")]
    BadPriceTable,
    #[error("prices must be positive and finite (got {0})")]
    BadPrice(f64),
    #[error("GBM start must be positive and volatility non-negative")]
    BadGbmParams,
    #[error("tick {tick} exceeds the path horizon {horizon}")]
    HorizonExceeded { tick: u64, horizon: u64 },
}

impl MarketError {
    pub fn category(&self) -> &'static str {
        match self {
            MarketError::HorizonExceeded { .. } => "horizon-exceeded",
            _ => "domain",
        }
    }
}

/// How a price path is generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriceGenerator {
    /// Explicit (tick, price) table; the price holds until the next entry.
    Deterministic { points: Vec<(u64, f64)> },
    /// Log-normal stepping: S' = S * exp(drift + volatility * Z), one step
    /// per tick, Z standard normal from the seeded generator. `drift` is the
    /// per-tick log drift (no lognormal mean correction).
    Gbm {
        start: f64,
        drift: f64,
        volatility: f64,
        seed: u64,
    },
}

/// A fully materialized price path over `0..=horizon`.
#[derive(Clone, Debug, PartialEq)]
pub struct PricePath {
    generator: PriceGenerator,
    horizon: u64,
    series: Vec<f64>,
}

impl PricePath {
    pub fn new(generator: PriceGenerator, horizon: u64) -> Result<Self, MarketError> {
        let series = match &generator {
            PriceGenerator::Deterministic { points } => {
                if points.is_empty()
                    || points[0].0 != 0
                    || points.windows(2).any(|w| w[0].0 >= w[1].0)
                    || points.iter().any(|&(t, _)| t > horizon)
                {
                    return Err(MarketError::BadPriceTable);
                }
                for &(_, p) in points {
                    if !(p.is_finite() && p > 0.0) {
                        return Err(MarketError::BadPrice(p));
                    }
                }
                let mut series = Vec::with_capacity(horizon as usize + 1);
                let mut next = 0usize;
                let mut current = points[0].1;
                for tick in 0..=horizon {
                    while next < points.len() && points[next].0 == tick {
                        current = points[next].1;
                        next += 1;
                    }
                    series.push(current);
                }
                series
            }
            PriceGenerator::Gbm {
                start,
                drift,
                volatility,
                seed,
            } => {
                if !(start.is_finite() && *start > 0.0)
                    || !(volatility.is_finite() && *volatility >= 0.0)
                    || !drift.is_finite()
                {
                    return Err(MarketError::BadGbmParams);
                }
                let mut rng = ChaCha20Rng::seed_from_u64(*seed);
                let mut series = Vec::with_capacity(horizon as usize + 1);
                let mut price = *start;
                series.push(price);
                for _ in 0..horizon {
                    let z: f64 = rng.sample(StandardNormal);
                    price *= (drift + volatility * z).exp();
                    if !(price.is_finite() && price > 0.0) {
                        return Err(MarketError::BadPrice(price));
                    }
                    series.push(price);
                }
                series
            }
        };
        Ok(PricePath {
            generator,
            horizon,
            series,
        })
    }

    pub fn generator(&self) -> &PriceGenerator {
        &self.generator
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn price_at(&self, tick: u64) -> Result<f64, MarketError> {
        if tick > self.horizon {
            return Err(MarketError::HorizonExceeded {
                tick,
                horizon: self.horizon,
            });
        }
        Ok(self.series[tick as usize])
    }
}

/// Price at a tick; errors past the horizon.
pub fn next_price(path: &PricePath, tick: u64) -> Result<f64, MarketError> {
    path.price_at(tick)
}

/// How an investor sizes a contribution. Policies see only the remaining
/// capacity, the minimum fill, and their own budget.
#[derive(Clone, Debug, PartialEq)]
pub enum AgentPolicy {
    /// Fill as much as budget and capacity allow.
    MaxFill { budget: Amount<Eth> },
    /// Fill a fixed fraction of budget, clamped to the pool's bounds.
    FixedFraction { budget: Amount<Eth>, fraction: f64 },
    /// Seeded uniform fill between the minimum and what is affordable.
    UniformRandom { budget: Amount<Eth>, seed: u64 },
}

impl AgentPolicy {
    pub fn budget(&self) -> Amount<Eth> {
        match self {
            AgentPolicy::MaxFill { budget }
            | AgentPolicy::FixedFraction { budget, .. }
            | AgentPolicy::UniformRandom { budget, .. } => *budget,
        }
    }
}

/// Decide a fill amount. Zero means the agent abstains (capacity below the
/// minimum fill, or budget too small to participate).
pub fn decide_fill(
    policy: &AgentPolicy,
    remaining_capacity: Amount<Eth>,
    min_fill: Amount<Eth>,
) -> Amount<Eth> {
    if remaining_capacity < min_fill {
        return Amount::ZERO;
    }
    let fill = match policy {
        AgentPolicy::MaxFill { budget } => (*budget).min(remaining_capacity),
        AgentPolicy::FixedFraction { budget, fraction } => {
            let raw = fraction_of(*budget, *fraction);
            raw.max(min_fill).min(remaining_capacity).min(*budget)
        }
        AgentPolicy::UniformRandom { budget, seed } => {
            let hi = (*budget).min(remaining_capacity);
            if hi < min_fill {
                return Amount::ZERO;
            }
            let mut rng = ChaCha20Rng::seed_from_u64(*seed);
            let units = rng.gen_range(min_fill.base_units()..=hi.base_units());
            Amount::from_base_units(units)
        }
    };
    if fill < min_fill {
        Amount::ZERO
    } else {
        fill
    }
}

/// floor(fraction × budget) in base units, exact in rational arithmetic.
fn fraction_of(budget: Amount<Eth>, fraction: f64) -> Amount<Eth> {
    assert!(
        fraction.is_finite() && (0.0..=1.0).contains(&fraction),
        "fill fraction must be in [0, 1], got {fraction}"
    );
    let exact = BigRational::from_float(fraction).expect("finite fraction")
        * budget.base_units().to_bigint().unwrap();
    Amount::from_base_units(exact.floor().to_integer().to_u128().expect("in range"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eth(units: f64) -> Amount<Eth> {
        Amount::from_units(units)
    }

    #[test]
    fn deterministic_table_lookup() {
        let path = PricePath::new(
            PriceGenerator::Deterministic {
                points: vec![(0, 100.0), (1, 110.0)],
            },
            3,
        )
        .unwrap();
        assert_eq!(path.price_at(0).unwrap(), 100.0);
        assert_eq!(path.price_at(1).unwrap(), 110.0);
        // Price holds between entries.
        assert_eq!(path.price_at(3).unwrap(), 110.0);
        assert!(matches!(
            path.price_at(4),
            Err(MarketError::HorizonExceeded { .. })
        ));
    }

    #[test]
    fn bad_tables_rejected() {
        assert!(PricePath::new(PriceGenerator::Deterministic { points: vec![] }, 3).is_err());
        assert!(PricePath::new(
            PriceGenerator::Deterministic { points: vec![(1, 100.0)] },
            3
        )
        .is_err());
        assert!(PricePath::new(
            PriceGenerator::Deterministic { points: vec![(0, -5.0)] },
            3
        )
        .is_err());
    }

    #[test]
    fn degenerate_gbm_is_constant() {
        let path = PricePath::new(
            PriceGenerator::Gbm {
                start: 100.0,
                drift: 0.0,
                volatility: 0.0,
                seed: 7,
            },
            10,
        )
        .unwrap();
        for tick in 0..=10 {
            assert_eq!(path.price_at(tick).unwrap(), 100.0);
        }
    }

    #[test]
    fn driftful_gbm_grows_exponentially() {
        let d = 0.05;
        let path = PricePath::new(
            PriceGenerator::Gbm {
                start: 100.0,
                drift: d,
                volatility: 0.0,
                seed: 7,
            },
            8,
        )
        .unwrap();
        for tick in 0..=8u64 {
            let expected = 100.0 * (d * tick as f64).exp();
            let got = path.price_at(tick).unwrap();
            assert!((got - expected).abs() < 1e-9 * expected);
        }
    }

    #[test]
    fn identical_seeds_reproduce_paths() {
        let make = || {
            PricePath::new(
                PriceGenerator::Gbm {
                    start: 100.0,
                    drift: 0.01,
                    volatility: 0.1,
                    seed: 42,
                },
                64,
            )
            .unwrap()
        };
        assert_eq!(make().series, make().series);
    }

    #[test]
    fn max_fill_clamps_to_capacity_and_budget() {
        let policy = AgentPolicy::MaxFill { budget: eth(10.0) };
        assert_eq!(decide_fill(&policy, eth(7.0), eth(1.0)), eth(7.0));
        let policy = AgentPolicy::MaxFill { budget: eth(3.0) };
        assert_eq!(decide_fill(&policy, eth(7.0), eth(1.0)), eth(3.0));
    }

    #[test]
    fn abstains_below_minimum() {
        let policy = AgentPolicy::MaxFill { budget: eth(10.0) };
        assert_eq!(decide_fill(&policy, eth(0.5), eth(1.0)), Amount::ZERO);
        // Budget below the minimum fill also abstains.
        let policy = AgentPolicy::MaxFill { budget: eth(0.5) };
        assert_eq!(decide_fill(&policy, eth(7.0), eth(1.0)), Amount::ZERO);
    }

    #[test]
    fn fixed_fraction_clamps_into_bounds() {
        let policy = AgentPolicy::FixedFraction {
            budget: eth(10.0),
            fraction: 0.25,
        };
        assert_eq!(decide_fill(&policy, eth(7.0), eth(1.0)), eth(2.5));
        // Clamped up to the minimum fill.
        let policy = AgentPolicy::FixedFraction {
            budget: eth(10.0),
            fraction: 0.01,
        };
        assert_eq!(decide_fill(&policy, eth(7.0), eth(1.0)), eth(1.0));
        // Clamped down to remaining capacity.
        let policy = AgentPolicy::FixedFraction {
            budget: eth(10.0),
            fraction: 1.0,
        };
        assert_eq!(decide_fill(&policy, eth(4.0), eth(1.0)), eth(4.0));
    }

    #[test]
    fn uniform_random_is_seeded_and_bounded() {
        let policy = AgentPolicy::UniformRandom {
            budget: eth(10.0),
            seed: 11,
        };
        let a = decide_fill(&policy, eth(7.0), eth(1.0));
        let b = decide_fill(&policy, eth(7.0), eth(1.0));
        assert_eq!(a, b);
        assert!(a >= eth(1.0) && a <= eth(7.0));
    }
}

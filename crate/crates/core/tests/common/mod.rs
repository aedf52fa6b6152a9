//! Shared test support: a high-precision fixed-point evaluation of the
//! distribution formulas, independent of the library's log-space route, plus
//! scenario builders.
//!
//! Numbers are `BigInt` mantissas with [`SHIFT`] fractional bits (~308
//! decimal digits). `exp` uses range reduction to r ≤ 1/16, a positive-term
//! Taylor sum (no cancellation), and repeated squaring; negative arguments go
//! through one reciprocal. Every operation truncates at most one ulp at
//! 2^-SHIFT, leaving hundreds of guard bits for the 1e-9-relative
//! comparisons the tests make.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

pub const SHIFT: u32 = 1536;

#[derive(Clone, Debug)]
pub struct Fx(BigInt);

impl Fx {
    pub fn one() -> Fx {
        Fx(BigInt::one() << SHIFT)
    }

    pub fn from_f64(x: f64) -> Fx {
        assert!(x.is_finite());
        let r = BigRational::from_float(x).expect("finite");
        let scaled = r * (BigInt::one() << SHIFT);
        // Exact for normal-range inputs: the lowest set bit of any value the
        // tests feed in sits far above 2^-SHIFT.
        assert!(scaled.is_integer(), "f64 should embed exactly at this scale");
        Fx(scaled.to_integer())
    }

    pub fn to_f64(&self) -> f64 {
        BigRational::new(self.0.clone(), BigInt::one() << SHIFT)
            .to_f64()
            .expect("fixed-point converts")
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn add(&self, other: &Fx) -> Fx {
        Fx(&self.0 + &other.0)
    }

    pub fn mul(&self, other: &Fx) -> Fx {
        Fx((&self.0 * &other.0) >> SHIFT)
    }

    pub fn div(&self, other: &Fx) -> Fx {
        assert!(!other.0.is_zero());
        Fx((&self.0 << SHIFT) / &other.0)
    }

    fn div_u32(&self, d: u32) -> Fx {
        Fx(&self.0 / BigInt::from(d))
    }

    fn shr(&self, bits: u32) -> Fx {
        Fx(&self.0 >> bits)
    }

    fn recip(&self) -> Fx {
        assert!(!self.0.is_zero());
        Fx((BigInt::one() << (2 * SHIFT as usize)) / &self.0)
    }
}

/// e^x in fixed point, for |x| up to roughly 700 (and well past the f64
/// underflow boundary on the negative side).
pub fn exp_fx(x: f64) -> Fx {
    assert!(x.is_finite());
    if x == 0.0 {
        return Fx::one();
    }
    let negative = x < 0.0;
    let a = x.abs();
    // Reduce so the Taylor argument is at most 1/16.
    let mut k = 0u32;
    while a / f64::powi(2.0, k as i32) > 0.0625 {
        k += 1;
    }
    let r = Fx::from_f64(a).shr(k);

    let mut term = Fx::one();
    let mut sum = Fx::one();
    let mut j = 1u32;
    loop {
        term = term.mul(&r).div_u32(j);
        if term.is_zero() {
            break;
        }
        sum = sum.add(&term);
        j += 1;
    }
    for _ in 0..k {
        sum = sum.mul(&sum);
    }
    if negative {
        sum.recip()
    } else {
        sum
    }
}

/// One investor's slice from the direct high-precision evaluation.
#[derive(Clone, Debug)]
#[allow(dead_code)] // not every test binary reads every field
pub struct OracleShare {
    pub raw_incentive: f64,
    pub fraction: f64,
    pub final_incentive: f64,
}

/// Direct evaluation of the distribution formulas: incentive e^(f-T)/f per
/// fill, normalized by the sum, times the cumulated amount. No log-space
/// shift anywhere.
pub fn oracle_distribution(fills: &[f64], total_limit: f64, amount: f64) -> Vec<OracleShare> {
    assert!(!fills.is_empty());
    let incentives: Vec<Fx> = fills
        .iter()
        .map(|&f| {
            assert!(f > 0.0);
            exp_fx(f - total_limit).div(&Fx::from_f64(f))
        })
        .collect();
    let lsum = incentives
        .iter()
        .fold(Fx(BigInt::zero()), |acc, inc| acc.add(inc));
    let amount_fx = Fx::from_f64(amount);
    incentives
        .iter()
        .map(|inc| {
            let fraction = inc.div(&lsum);
            OracleShare {
                raw_incentive: inc.to_f64(),
                fraction: fraction.to_f64(),
                final_incentive: fraction.mul(&amount_fx).to_f64(),
            }
        })
        .collect()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

#[allow(dead_code)]
pub fn assert_close(got: f64, want: f64, rel: f64, what: &str) {
    assert!(
        rel_err(got, want) <= rel,
        "{what}: got {got}, want {want} (rel err {})",
        rel_err(got, want)
    );
}

#[cfg(test)]
mod sanity {
    use super::*;

    #[test]
    fn exp_matches_f64_in_easy_range() {
        for x in [-20.0, -3.0, -0.5, 0.0, 0.25, 1.0, 5.0, 30.0] {
            let got = exp_fx(x).to_f64();
            let want = x.exp();
            assert!(rel_err(got, want) < 1e-14, "exp({x}): {got} vs {want}");
        }
    }

    #[test]
    fn exp_reaches_past_f64_underflow() {
        // e^-750 is zero in f64 but finite in fixed point.
        let v = exp_fx(-750.0);
        assert!(!v.is_zero());
        let ratio = v.div(&exp_fx(-749.0)).to_f64();
        assert!(rel_err(ratio, (-1.0f64).exp()) < 1e-12);
    }

    #[test]
    fn oracle_normalizes() {
        let shares = oracle_distribution(&[2.0, 3.0], 5.0, 10.0);
        let total: f64 = shares.iter().map(|s| s.fraction).sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!(rel_err(shares[0].fraction, 0.3555950173551955) < 1e-14);
    }
}

//! Exact rational scalars and small combinatorial helpers.
//!
//! Everything in this crate computes over arbitrary-precision rationals;
//! there is no floating point anywhere.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Rat = BigRational;

pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> Rat {
    Rat::from(BigInt::from(n))
}

pub fn rat_zero() -> Rat {
    Rat::zero()
}

pub fn rat_one() -> Rat {
    Rat::one()
}

/// Binomial coefficient C(a, k) for arbitrary integer `a` and k >= 0.
///
/// For negative `a` this is the coefficient in the binomial series,
/// C(a, k) = a(a-1)...(a-k+1)/k!, which is what the (L-1)-basis
/// conversion of Laurent monomials L^a needs.
pub fn binom(a: i64, k: u32) -> Rat {
    let mut num = Rat::one();
    for j in 0..k as i64 {
        num *= Rat::from(BigInt::from(a - j));
    }
    num / factorial(k)
}

pub fn factorial(k: u32) -> Rat {
    let mut f = BigInt::one();
    for j in 2..=k as u64 {
        f *= BigInt::from(j);
    }
    Rat::from(f)
}

/// Exact integer power with negative exponents allowed (base must be nonzero
/// for negative exponents).
pub fn rat_pow(base: &Rat, exp: i64) -> Rat {
    if exp == 0 {
        return Rat::one();
    }
    let p = base.pow(exp.unsigned_abs() as i32);
    if exp < 0 {
        p.recip()
    } else {
        p
    }
}

/// Renders a rational as `n` or `n/d` (used by the deterministic text forms).
pub fn rat_display(r: &Rat) -> String {
    if r.denom().is_one() {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parses `n` or `n/d`.
pub fn rat_parse(s: &str) -> Option<Rat> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        Some(Rat::new(n, d))
    } else {
        let n: BigInt = s.parse().ok()?;
        Some(Rat::from(n))
    }
}

pub fn rat_abs(r: &Rat) -> Rat {
    r.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binom_positive_and_negative() {
        assert_eq!(binom(4, 2), rat_int(6));
        assert_eq!(binom(0, 0), rat_int(1));
        assert_eq!(binom(3, 5), rat_int(0));
        // (1+x)^{-1} = 1 - x + x^2 - ...
        assert_eq!(binom(-1, 0), rat_int(1));
        assert_eq!(binom(-1, 1), rat_int(-1));
        assert_eq!(binom(-1, 2), rat_int(1));
        assert_eq!(binom(-2, 2), rat_int(3));
    }

    #[test]
    fn parse_round_trip() {
        for s in ["3", "-7/2", "0", "22/7"] {
            let r = rat_parse(s).unwrap();
            assert_eq!(rat_display(&r), s);
        }
        assert!(rat_parse("1/0").is_none());
    }

    #[test]
    fn pow_negative() {
        assert_eq!(rat_pow(&rat(2, 3), -2), rat(9, 4));
    }
}

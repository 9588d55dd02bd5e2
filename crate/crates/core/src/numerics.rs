//! Exact arithmetic kernel.
//!
//! [`ExactRational`] carries every probability and moment in the crate.
//! [`BaseMAdic`] is the gcd-free representation `mantissa / m^e` used on the
//! hot paths: every value produced by the dice recursions has a denominator
//! dividing a power of the face count. [`Enclosure`] is a certified
//! `[lower, upper]` pair of exact rationals.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Pow, Signed, ToPrimitive, Zero};

use crate::{Error, Result};

pub type ExactRational = BigRational;

/// Default number of fractional digits rendered for certified values.
pub const DEFAULT_DIGITS: usize = 1100;

pub fn ratio(num: i64, den: i64) -> ExactRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn integer(n: impl Into<BigInt>) -> ExactRational {
    BigRational::from_integer(n.into())
}

pub fn pow10(e: usize) -> BigInt {
    BigInt::from(10u32).pow(e)
}

/// `(num/den)^e`, exact.
pub fn pow_ratio(num: i64, den: i64, e: u64) -> ExactRational {
    assert!(den > 0, "denominator must be positive");
    let base = ratio(num, den);
    let e = u32::try_from(e).expect("exponent fits in u32");
    Pow::pow(base, e)
}

/// Truncates `x` toward zero to `digits` fractional digits.
pub fn to_decimal(x: &ExactRational, digits: usize) -> String {
    let scaled = (x.numer().abs() * pow10(digits)) / x.denom();
    let mut body = scaled.to_str_radix(10);
    if body.len() <= digits {
        body = format!("{}{}", "0".repeat(digits + 1 - body.len()), body);
    }
    let split = body.len() - digits;
    let sign = if x.is_negative() && !scaled.is_zero() {
        "-"
    } else {
        ""
    };
    if digits == 0 {
        format!("{sign}{body}")
    } else {
        format!("{sign}{}.{}", &body[..split], &body[split..])
    }
}

/// Renders `x` as `d.ddd…e±k` with `significant` digits, truncated toward zero.
pub fn to_scientific(x: &ExactRational, significant: usize) -> String {
    assert!(significant >= 1);
    if x.is_zero() {
        return format!("0.{}e+0", "0".repeat(significant - 1));
    }
    let num = x.numer().abs();
    let den = x.denom().clone();
    let k = decimal_exponent(&num, &den);
    // digits = floor(|x| * 10^(significant - 1 - k))
    let shift = significant as i64 - 1 - k;
    let digits = if shift >= 0 {
        (num * pow10(shift as usize)) / den
    } else {
        num / (den * pow10((-shift) as usize))
    };
    let s = digits.to_str_radix(10);
    let sign = if x.is_negative() { "-" } else { "" };
    let exp_sign = if k < 0 { '-' } else { '+' };
    if s.len() == 1 {
        format!("{sign}{s}e{exp_sign}{}", k.abs())
    } else {
        format!("{sign}{}.{}e{exp_sign}{}", &s[..1], &s[1..], k.abs())
    }
}

/// The `k` with `10^k <= num/den < 10^(k+1)`, for positive `num/den`.
fn decimal_exponent(num: &BigInt, den: &BigInt) -> i64 {
    let bits = num.bits() as f64 - den.bits() as f64;
    let mut k = (bits * std::f64::consts::LOG10_2).floor() as i64;
    let ge_pow = |k: i64| -> bool {
        if k >= 0 {
            num >= &(den * pow10(k as usize))
        } else {
            num * pow10((-k) as usize) >= *den
        }
    };
    while !ge_pow(k) {
        k -= 1;
    }
    while ge_pow(k + 1) {
        k += 1;
    }
    k
}

/// Formats as `p/q`, or `p` for integers.
pub fn format_rational(x: &ExactRational) -> String {
    if x.denom().is_one() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

pub fn parse_rational(s: &str) -> Option<ExactRational> {
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().ok()?;
            let q: BigInt = q.trim().parse().ok()?;
            if q.is_zero() {
                return None;
            }
            Some(BigRational::new(p, q))
        }
        None => s.parse::<BigInt>().ok().map(BigRational::from_integer),
    }
}

/// Smallest integer `>= x`.
pub fn ceil_to_integer(x: &ExactRational) -> BigInt {
    x.ceil().to_integer()
}

/// A certified enclosure `lower <= value <= upper` with exact endpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enclosure {
    lower: ExactRational,
    upper: ExactRational,
}

/// The digits two endpoints agree on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgreedPrefix {
    /// Number of agreed fractional digits.
    pub count: usize,
    /// Agreed digit string; empty when even the integer parts differ.
    pub digits: String,
}

impl Enclosure {
    pub fn new(lower: ExactRational, upper: ExactRational) -> Result<Self> {
        if lower > upper {
            return Err(Error::InvalidEnclosure);
        }
        Ok(Self { lower, upper })
    }

    pub fn point(x: ExactRational) -> Self {
        Self {
            lower: x.clone(),
            upper: x,
        }
    }

    pub fn lower(&self) -> &ExactRational {
        &self.lower
    }

    pub fn upper(&self) -> &ExactRational {
        &self.upper
    }

    pub fn width(&self) -> ExactRational {
        &self.upper - &self.lower
    }

    pub fn contains(&self, x: &ExactRational) -> bool {
        &self.lower <= x && x <= &self.upper
    }

    pub fn agreed_prefix(&self, max_digits: usize) -> AgreedPrefix {
        agreed_prefix(self, max_digits)
    }
}

/// Longest common prefix of the truncated expansions of both endpoints.
///
/// Truncation is monotone, so every value inside the enclosure shares the
/// returned prefix. The count is capped at `max_digits`.
pub fn agreed_prefix(e: &Enclosure, max_digits: usize) -> AgreedPrefix {
    let lo = to_decimal(&e.lower, max_digits);
    let hi = to_decimal(&e.upper, max_digits);
    let common: String = lo
        .chars()
        .zip(hi.chars())
        .take_while(|(a, b)| a == b)
        .map(|(a, _)| a)
        .collect();
    match common.find('.') {
        Some(dot) => {
            let count = common.len() - dot - 1;
            let digits = if count == 0 {
                common[..dot].to_string()
            } else {
                common
            };
            AgreedPrefix { count, digits }
        }
        None if max_digits == 0 && lo == hi => AgreedPrefix {
            count: 0,
            digits: lo,
        },
        None => AgreedPrefix {
            count: 0,
            digits: String::new(),
        },
    }
}

impl fmt::Display for Enclosure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}, {}]",
            format_rational(&self.lower),
            format_rational(&self.upper)
        )
    }
}

/// Exact value `mantissa / base^exponent`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseMAdic {
    mantissa: BigInt,
    exponent: u64,
    base: u32,
}

impl BaseMAdic {
    pub fn new(mantissa: BigInt, exponent: u64, base: u32) -> Result<Self> {
        if base < 2 {
            return Err(Error::InvalidFaces(base));
        }
        Ok(Self {
            mantissa,
            exponent,
            base,
        })
    }

    pub fn from_integer(n: impl Into<BigInt>, base: u32) -> Result<Self> {
        Self::new(n.into(), 0, base)
    }

    pub fn zero(base: u32) -> Result<Self> {
        Self::new(BigInt::zero(), 0, base)
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.mantissa
    }

    pub fn exponent(&self) -> u64 {
        self.exponent
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    /// Exact conversion when `x`'s reduced denominator divides a power of `base`.
    pub fn from_rational(x: &ExactRational, base: u32) -> Option<Self> {
        if base < 2 {
            return None;
        }
        let den = x.denom().magnitude();
        let b = BigUint::from(base);
        let mut e = 0u64;
        let mut power = BigUint::one();
        while !(&power % den).is_zero() {
            // each multiplication by base must make progress on den's factors
            if e > den.bits() {
                return None;
            }
            power *= &b;
            e += 1;
        }
        let scale = BigInt::from_biguint(Sign::Plus, power / den);
        Some(Self {
            mantissa: x.numer() * scale,
            exponent: e,
            base,
        })
    }

    /// Mantissa rescaled to a larger exponent `e`, i.e. `value * base^e`.
    pub fn mantissa_at(&self, e: u64) -> BigInt {
        assert!(e >= self.exponent, "cannot rescale to a smaller exponent");
        let shift = e - self.exponent;
        if shift == 0 {
            self.mantissa.clone()
        } else {
            &self.mantissa * base_pow(self.base, shift)
        }
    }

    fn check_base(&self, other: &Self) {
        assert_eq!(self.base, other.base, "mixed bases in base-m arithmetic");
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check_base(other);
        let e = self.exponent.max(other.exponent);
        Self {
            mantissa: self.mantissa_at(e) + other.mantissa_at(e),
            exponent: e,
            base: self.base,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.check_base(other);
        let e = self.exponent.max(other.exponent);
        Self {
            mantissa: self.mantissa_at(e) - other.mantissa_at(e),
            exponent: e,
            base: self.base,
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.check_base(other);
        Self {
            mantissa: &self.mantissa * &other.mantissa,
            exponent: self.exponent + other.exponent,
            base: self.base,
        }
    }

    pub fn mul_int(&self, k: &BigInt) -> Self {
        Self {
            mantissa: &self.mantissa * k,
            exponent: self.exponent,
            base: self.base,
        }
    }

    /// `value / base`, which only bumps the exponent.
    pub fn div_by_base(&self) -> Self {
        Self {
            mantissa: self.mantissa.clone(),
            exponent: self.exponent + 1,
            base: self.base,
        }
    }

    /// Strips factors of `base` from the mantissa while the exponent allows.
    pub fn normalize(mut self) -> Self {
        let b = BigInt::from(self.base);
        while self.exponent > 0 && !self.mantissa.is_zero() {
            let (q, r) = self.mantissa.div_rem(&b);
            if !r.is_zero() {
                break;
            }
            self.mantissa = q;
            self.exponent -= 1;
        }
        if self.mantissa.is_zero() {
            self.exponent = 0;
        }
        self
    }

    /// Lossless conversion; reduction only divides out the primes of `base`.
    pub fn to_rational(&self) -> ExactRational {
        reduce_base_power(&self.mantissa, self.exponent, self.base)
    }

    pub fn cmp_value(&self, other: &Self) -> Ordering {
        self.check_base(other);
        let e = self.exponent.max(other.exponent);
        self.mantissa_at(e).cmp(&other.mantissa_at(e))
    }
}

pub(crate) fn base_pow(base: u32, e: u64) -> BigInt {
    let e = u32::try_from(e).expect("exponent fits in u32");
    BigInt::from(base).pow(e)
}

/// Reduced form of `mantissa / (base^exponent * 1)` without a general gcd.
pub(crate) fn reduce_base_power(mantissa: &BigInt, exponent: u64, base: u32) -> ExactRational {
    if mantissa.is_zero() {
        return BigRational::zero();
    }
    let mut num = mantissa.clone();
    let mut den = BigInt::one();
    for (p, mult) in prime_factors(base) {
        let cap = mult * exponent;
        let v = if p == 2 {
            let tz = num.magnitude().trailing_zeros().unwrap_or(0);
            let v = tz.min(cap);
            num >>= v;
            v
        } else {
            strip_prime(&mut num, p, cap)
        };
        let remaining = u32::try_from(cap - v).expect("exponent fits in u32");
        den *= BigInt::from(p).pow(remaining);
    }
    BigRational::new_raw(num, den)
}

fn strip_prime(num: &mut BigInt, p: u32, cap: u64) -> u64 {
    let bp = BigInt::from(p);
    let mut v = 0;
    while v < cap {
        let (q, r) = num.div_rem(&bp);
        if !r.is_zero() {
            break;
        }
        *num = q;
        v += 1;
    }
    v
}

pub(crate) fn prime_factors(mut n: u32) -> Vec<(u32, u64)> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        let mut mult = 0;
        while n.is_multiple_of(p) {
            n /= p;
            mult += 1;
        }
        if mult > 0 {
            out.push((p, mult));
        }
        p += 1;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

/// Lossy conversion for reporting.
pub fn to_f64(x: &ExactRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decimal_examples() {
        assert_eq!(to_decimal(&ratio(7, 36), 4), "0.1944");
        assert_eq!(to_decimal(&ratio(49, 36), 6), "1.361111");
        assert_eq!(to_decimal(&ratio(127, 1296), 8), "0.09799382");
        assert_eq!(to_decimal(&ratio(-7, 36), 4), "-0.1944");
        assert_eq!(to_decimal(&ratio(-1, 10000), 2), "0.00");
        assert_eq!(to_decimal(&ratio(5, 1), 0), "5");
        assert_eq!(to_decimal(&ratio(1, 1000), 3), "0.001");
    }

    #[test]
    fn long_division_oracle_for_landing_value() {
        // schoolbook long division of 127 by 1296, digit by digit
        let (mut rem, mut digits) = (127u64, String::new());
        for _ in 0..8 {
            rem *= 10;
            digits.push(char::from_digit((rem / 1296) as u32, 10).unwrap());
            rem %= 1296;
        }
        assert_eq!(format!("0.{digits}"), to_decimal(&ratio(127, 1296), 8));
    }

    #[test]
    fn scientific_rendering() {
        assert_eq!(to_scientific(&ratio(7, 36), 4), "1.944e-1");
        assert_eq!(to_scientific(&ratio(12345, 1), 3), "1.23e+4");
        assert_eq!(to_scientific(&ratio(1, 1000), 1), "1e-3");
        assert_eq!(to_scientific(&ratio(-3, 1), 2), "-3.0e+0");
        let tiny = BigRational::new(BigInt::from(323565235u64), pow10(1040));
        assert_eq!(to_scientific(&tiny, 9), "3.23565235e-1032");
    }

    #[test]
    fn agreed_prefix_examples() {
        let third = Enclosure::point(ratio(1, 3));
        let p = third.agreed_prefix(12);
        assert_eq!(p.count, 12);
        assert_eq!(p.digits, "0.333333333333");

        let e = Enclosure::new(ratio(1230, 10000), ratio(1239, 10000)).unwrap();
        assert_eq!(
            e.agreed_prefix(10),
            AgreedPrefix {
                count: 3,
                digits: "0.123".into()
            }
        );

        let e = Enclosure::new(ratio(21, 10), ratio(29, 10)).unwrap();
        assert_eq!(e.agreed_prefix(5).digits, "2");
        let e = Enclosure::new(ratio(95, 10), ratio(105, 10)).unwrap();
        assert_eq!(e.agreed_prefix(5).digits, "");
        assert!(Enclosure::new(ratio(2, 1), ratio(1, 1)).is_err());
    }

    #[test]
    fn pow_ratio_examples() {
        assert_eq!(pow_ratio(5, 6, 0), ratio(1, 1));
        assert_eq!(pow_ratio(5, 6, 4), ratio(625, 1296));
        // repeated-squaring oracle on integers
        let (mut num, mut den) = (BigInt::one(), BigInt::one());
        let (mut bn, mut bd, mut e) = (BigInt::from(5), BigInt::from(6), 168u32);
        while e > 0 {
            if e & 1 == 1 {
                num *= &bn;
                den *= &bd;
            }
            bn = &bn * &bn;
            bd = &bd * &bd;
            e >>= 1;
        }
        let r = pow_ratio(5, 6, 168);
        assert_eq!(r, BigRational::new(num, den));
        assert_eq!(r.denom().to_string().len(), 131);
    }

    #[test]
    fn rational_text_round_trip() {
        let x = ratio(-49, 36);
        assert_eq!(parse_rational(&format_rational(&x)), Some(x));
        assert_eq!(parse_rational("412"), Some(ratio(412, 1)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("x"), None);
    }

    #[test]
    fn madic_basics() {
        let a = BaseMAdic::new(BigInt::from(49), 2, 6).unwrap();
        assert_eq!(a.to_rational(), ratio(49, 36));
        let b = BaseMAdic::new(BigInt::from(72), 3, 6).unwrap().normalize();
        assert_eq!((b.mantissa().clone(), b.exponent()), (BigInt::from(2), 1));
        assert_eq!(b.to_rational(), ratio(1, 3));
        assert!(BaseMAdic::new(BigInt::one(), 0, 1).is_err());
        assert_eq!(
            BaseMAdic::from_rational(&ratio(1, 3), 6)
                .unwrap()
                .to_rational(),
            ratio(1, 3)
        );
        assert!(BaseMAdic::from_rational(&ratio(1, 5), 6).is_none());
        assert_eq!(prime_factors(12), vec![(2, 2), (3, 1)]);
    }

    proptest! {
        #[test]
        fn decimal_truncation_round_trip(n in -10_000_000i64..10_000_000, d in 1i64..100_000, digits in 1usize..30) {
            let x = ratio(n, d);
            let s = to_decimal(&x, digits);
            let back = parse_decimal(&s);
            let diff = (&x - &back).abs();
            prop_assert!(diff < BigRational::new(BigInt::one(), pow10(digits)));
            prop_assert!(back.abs() <= x.abs());
        }

        #[test]
        fn madic_rational_round_trip(m in -1_000_000_000i64..1_000_000_000, e in 0u64..40, base in 2u32..13) {
            let v = BaseMAdic::new(BigInt::from(m), e, base).unwrap();
            let r = v.to_rational();
            prop_assert_eq!(&r, &BigRational::new(BigInt::from(m), base_pow(base, e)));
            let back = BaseMAdic::from_rational(&r, base).unwrap();
            prop_assert_eq!(back.to_rational(), r);
            prop_assert_eq!(v.clone().normalize().to_rational(), v.to_rational());
        }

        #[test]
        fn madic_arithmetic_matches_rationals(
            a in -1_000_000i64..1_000_000, ea in 0u64..12,
            b in -1_000_000i64..1_000_000, eb in 0u64..12,
            base in 2u32..9,
        ) {
            let x = BaseMAdic::new(BigInt::from(a), ea, base).unwrap();
            let y = BaseMAdic::new(BigInt::from(b), eb, base).unwrap();
            let (xr, yr) = (x.to_rational(), y.to_rational());
            prop_assert_eq!(x.add(&y).to_rational(), &xr + &yr);
            prop_assert_eq!(x.sub(&y).to_rational(), &xr - &yr);
            prop_assert_eq!(x.mul(&y).to_rational(), &xr * &yr);
            prop_assert_eq!(x.div_by_base().to_rational(), &xr / integer(base));
            prop_assert_eq!(x.cmp_value(&y), xr.cmp(&yr));
        }
    }

    fn parse_decimal(s: &str) -> ExactRational {
        let neg = s.starts_with('-');
        let s = s.trim_start_matches('-');
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        let v = BigRational::new(
            format!("{int}{frac}").parse::<BigInt>().unwrap(),
            pow10(frac.len()),
        );
        if neg {
            -v
        } else {
            v
        }
    }
}

//! Landing probabilities and certified boundary constants.
//!
//! The boundary constant for order `k` at cutoff `N` is
//!
//! ```text
//! U_k = Σ_{p ∈ A, p >= N} (p - N)^k ((m-1)/m)^π(N, p-1)
//! ```
//!
//! split at `X` into an exact finite sum and a tail. For the primes the tail
//! is majorised by a sum over all integers `j > X` in which the count
//! `π(N, j-1)` is replaced by an integer lower bound from the explicit
//! Rosser–Schoenfeld inequalities
//!
//! ```text
//! π(x) > x / ln x      (x >= 17)
//! π(x) < 1.25506 x / ln x   (x > 1)
//! ```
//!
//! with every logarithm enclosed by a truncated series plus an explicit
//! remainder. The sum is taken term by term until the terms drop below a
//! threshold and closed with a geometric majorant whose ratio is proved to
//! be nonincreasing.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Pow, ToPrimitive, Zero};

use crate::numerics::{integer, pow10, reduce_base_power, ExactRational};
use crate::targets::{isqrt, TargetKind};
use crate::{Error, Exec, ProcessSpec, Result, TargetSet};

/// Exact forward landing probabilities `LP_s(n)` and the auxiliary `r_s(n)`.
#[derive(Debug, Clone)]
pub struct LandingProfile {
    pub start: u64,
    pub horizon: u64,
    pub faces: u32,
    // numerators over faces^(n - start)
    lp: Vec<BigInt>,
    r: Vec<BigInt>,
}

impl LandingProfile {
    fn index(&self, n: u64) -> Option<usize> {
        (n >= self.start && n <= self.horizon).then(|| (n - self.start) as usize)
    }

    /// `LP_s(n)`; zero below the start, `None` beyond the horizon.
    pub fn lp(&self, n: u64) -> Option<ExactRational> {
        if n < self.start {
            return Some(BigRational::zero());
        }
        let i = self.index(n)?;
        Some(reduce_base_power(&self.lp[i], n - self.start, self.faces))
    }

    /// `r_s(n)`: like `LP_s(n)` but zero at target elements above the start.
    pub fn r(&self, n: u64) -> Option<ExactRational> {
        if n < self.start {
            return Some(BigRational::zero());
        }
        let i = self.index(n)?;
        Some(reduce_base_power(&self.r[i], n - self.start, self.faces))
    }

    /// `(n, LP_s(n))` for `n` in `start..=horizon`.
    pub fn iter(&self) -> impl Iterator<Item = (u64, ExactRational)> + '_ {
        (self.start..=self.horizon).map(|n| (n, self.lp(n).expect("in range")))
    }
}

/// Forward recursion `LP_s(n) = (1/m) Σ_i r_s(n - i)` for `s <= n <= n_max`.
pub fn landing_profile(spec: &ProcessSpec, n_max: u64) -> Result<LandingProfile> {
    let s = spec.start;
    let m = spec.die_faces as usize;
    let big_m = BigInt::from(spec.die_faces);
    if n_max >= s {
        spec.target.contains(n_max)?;
    }
    let len = n_max.saturating_sub(s) as usize + usize::from(n_max >= s);
    let mut lp: Vec<BigInt> = Vec::with_capacity(len);
    let mut r: Vec<BigInt> = Vec::with_capacity(len);
    for idx in 0..len {
        let n = s + idx as u64;
        if idx == 0 {
            lp.push(BigInt::one());
            r.push(BigInt::one());
            continue;
        }
        // Σ_{i=1..m} m^(i-1) R(n-i), Horner from the farthest predecessor
        let reach = m.min(idx);
        let mut acc = r[idx - reach].clone();
        for i in (1..reach).rev() {
            acc *= &big_m;
            acc += &r[idx - i];
        }
        let hit = spec.target.contains(n)?;
        r.push(if hit { BigInt::zero() } else { acc.clone() });
        lp.push(acc);
    }
    Ok(LandingProfile {
        start: s,
        horizon: n_max,
        faces: spec.die_faces,
        lp,
        r,
    })
}

fn miss_ratio(faces: u32) -> ExactRational {
    BigRational::new(BigInt::from(faces - 1), BigInt::from(faces))
}

fn miss_power(faces: u32, e: u64) -> ExactRational {
    Pow::pow(
        miss_ratio(faces),
        u32::try_from(e).expect("exponent fits in u32"),
    )
}

/// `((m-1)/m)^π(s, n-1)`, an upper bound on `LP_s(n)`.
pub fn lp_upper_bound(spec: &ProcessSpec, s: u64, n: u64) -> Result<ExactRational> {
    let count = if n == 0 {
        0
    } else {
        spec.target.count_between(s, n - 1)?
    };
    Ok(miss_power(spec.die_faces, count))
}

/// `Σ_E coeff_E · ((m-1)/m)^E` from integer coefficients grouped by exponent.
fn sum_by_exponent(faces: u32, groups: &BTreeMap<u64, BigInt>) -> ExactRational {
    let Some((&top, _)) = groups.last_key_value() else {
        return BigRational::zero();
    };
    // running power (m-1)^E · m^(top-E), stepped with one exact division by m
    let m = BigInt::from(faces);
    let mm1 = BigInt::from(faces - 1);
    let first = *groups.keys().next().expect("non-empty");
    let mut pw: BigInt = Pow::pow(&mm1, u32::try_from(first).expect("fits"))
        * Pow::pow(&m, u32::try_from(top - first).expect("fits"));
    let mut e = first;
    let mut acc = BigInt::zero();
    for (&target, coeff) in groups {
        while e < target {
            pw = pw * &mm1 / &m;
            e += 1;
        }
        acc += coeff * &pw;
    }
    reduce_base_power(&acc, top, faces)
}

fn finite_sum_with_base(
    target: &TargetSet,
    faces: u32,
    cutoff: u64,
    split: u64,
    order: u32,
    count_base: u64,
    exec: Exec,
) -> Result<ExactRational> {
    let elements = target.elements_in_range(cutoff, split)?;
    if elements.is_empty() {
        return Ok(BigRational::zero());
    }
    const CHUNK: usize = 512;
    let chunks: Vec<&[u64]> = elements.chunks(CHUNK).collect();
    let partial = exec.map(&chunks, |chunk| -> Result<BTreeMap<u64, BigInt>> {
        let mut groups: BTreeMap<u64, BigInt> = BTreeMap::new();
        for &p in *chunk {
            let c = if p == 0 {
                0
            } else {
                target.count_between(count_base, p - 1)?
            };
            let w: BigInt = Pow::pow(BigInt::from(p - cutoff), order);
            *groups.entry(c).or_default() += w;
        }
        Ok(groups)
    });
    let mut groups: BTreeMap<u64, BigInt> = BTreeMap::new();
    for g in partial {
        for (e, c) in g? {
            *groups.entry(e).or_default() += c;
        }
    }
    Ok(sum_by_exponent(faces, &groups))
}

/// `Σ_{p ∈ A, N <= p <= X} (p - N)^k ((m-1)/m)^π(N, p-1)`, exact.
pub fn finite_bound_sum(
    spec: &ProcessSpec,
    cutoff: u64,
    split: u64,
    order: u32,
    exec: Exec,
) -> Result<ExactRational> {
    finite_sum_with_base(
        &spec.target,
        spec.die_faces,
        cutoff,
        split,
        order,
        cutoff,
        exec,
    )
}

#[derive(Debug, Clone)]
pub struct TailBoundParams {
    /// Split point `X` between the finite sum and the tail.
    pub split_point: u64,
    /// Constant in `π(x) < c·x/ln x`.
    pub pnt_upper_constant: ExactRational,
    /// `π(x) > x/ln x` holds from here on.
    pub pnt_lower_validity: u64,
    /// Direct summation stops at the first term below this.
    pub truncation_threshold: ExactRational,
    /// Fractional bits of the logarithm enclosures.
    pub ln_precision_bits: u32,
}

impl Default for TailBoundParams {
    fn default() -> Self {
        Self {
            split_point: 100_003,
            pnt_upper_constant: BigRational::new(BigInt::from(125_506), BigInt::from(100_000)),
            pnt_lower_validity: 17,
            truncation_threshold: BigRational::new(BigInt::one(), pow10(80)),
            ln_precision_bits: 160,
        }
    }
}

/// Fixed-point enclosures of natural logarithms of integers.
#[derive(Debug, Clone)]
pub struct LnBounds {
    bits: u32,
    ln2: (BigInt, BigInt),
}

impl LnBounds {
    pub fn new(bits: u32) -> Self {
        let ln2 = atanh_bounds(&BigInt::one(), &BigInt::from(3), bits);
        Self {
            bits,
            ln2: (&ln2.0 << 1, &ln2.1 << 1),
        }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// `(lo, hi)` with `lo / 2^bits <= ln y <= hi / 2^bits`.
    pub fn ln(&self, y: u64) -> (BigInt, BigInt) {
        assert!(y >= 1, "logarithm of zero");
        let a = 63 - u64::from(y.leading_zeros());
        let pa = 1u64 << a;
        // ln y = a ln 2 + 2 atanh((y - 2^a) / (y + 2^a))
        let (lo, hi) = atanh_bounds(&BigInt::from(y - pa), &BigInt::from(y + pa), self.bits);
        let a = BigInt::from(a);
        (&a * &self.ln2.0 + (lo << 1), &a * &self.ln2.1 + (hi << 1))
    }

    pub fn ln_rational(&self, y: u64) -> (ExactRational, ExactRational) {
        let (lo, hi) = self.ln(y);
        let den = BigInt::one() << self.bits;
        (BigRational::new(lo, den.clone()), BigRational::new(hi, den))
    }
}

/// Bounds on `atanh(p/q) * 2^bits` for `0 <= p/q <= 1/3`.
///
/// Each series term is floored, so the partial sum is a lower bound; the
/// upper bound adds one unit per term plus the ceiling of the remainder
/// `z^(2K+1) / ((2K+1)(1 - z^2))`.
fn atanh_bounds(p: &BigInt, q: &BigInt, bits: u32) -> (BigInt, BigInt) {
    if p.is_zero() {
        return (BigInt::zero(), BigInt::zero());
    }
    assert!(BigInt::from(3) * p <= *q, "argument above 1/3");
    let scale = BigInt::one() << bits;
    // z <= 1/3, so z^(2K+1) <= 2^-(bits+2) once 2K+1 >= (bits+2)/log2(3)
    let terms = (u64::from(bits) + 2) * 1000 / 1584 / 2 + 2;
    let (p2, q2) = (p * p, q * q);
    let (mut pn, mut qn) = (p.clone(), q.clone());
    let mut lo = BigInt::zero();
    for n in 0..terms {
        let d = BigInt::from(2 * n + 1);
        lo += (&pn * &scale) / (&qn * &d);
        pn *= &p2;
        qn *= &q2;
    }
    // remainder after `terms` terms, with pn/qn = z^(2·terms+1)
    let d = BigInt::from(2 * terms + 1);
    let rem = (&pn * &scale * &q2).div_ceil(&(&qn * &d * (&q2 - &p2)));
    let hi = &lo + BigInt::from(terms) + rem;
    (lo, hi)
}

/// Integer-sum majorant of the prime tail.
///
/// For `j > X` the summand `(j - N)^k ((m-1)/m)^π(B, j-1)` is bounded above
/// by [`TailMajorant::term`], where the exponent is the integer lower bound
/// `floor((j-1)/ln(j-1) - c·B/ln B) + 1` (clamped at zero) of `π(B, j-1)`.
/// `B` is the counting base, normally the cutoff.
#[derive(Debug, Clone)]
pub struct TailMajorant {
    faces: u32,
    cutoff: u64,
    order: u32,
    validity: u64,
    ln: LnBounds,
    // upper bound on c·B/ln B as num/den
    count_num: BigInt,
    count_den: BigInt,
}

impl TailMajorant {
    pub fn new(
        faces: u32,
        cutoff: u64,
        count_base: u64,
        order: u32,
        params: &TailBoundParams,
    ) -> Result<Self> {
        if count_base < 2 {
            return Err(Error::InvalidConfig(
                "tail bounds need a cutoff above 1".into(),
            ));
        }
        let ln = LnBounds::new(params.ln_precision_bits);
        let (ln_lo, _) = ln.ln(count_base);
        let c = &params.pnt_upper_constant;
        let scale = BigInt::one() << ln.bits;
        let count_num = c.numer() * BigInt::from(count_base) * scale;
        let count_den = c.denom() * ln_lo;
        Ok(Self {
            faces,
            cutoff,
            order,
            validity: params.pnt_lower_validity,
            ln,
            count_num,
            count_den,
        })
    }

    /// Upper bound on `π(count_base)` as an exact rational.
    pub fn count_upper(&self) -> ExactRational {
        BigRational::new(self.count_num.clone(), self.count_den.clone())
    }

    /// Certified integer lower bound on `π(count_base, j-1)`.
    pub fn exponent(&self, j: u64) -> u64 {
        let y = j - 1;
        assert!(
            y >= self.validity,
            "prime lower bound needs j-1 >= {}",
            self.validity
        );
        let (_, ln_hi) = self.ln.ln(y);
        let scale = BigInt::one() << self.ln.bits;
        // y/ln_hi - count, as a single fraction
        let num = BigInt::from(y) * &scale * &self.count_den - &self.count_num * &ln_hi;
        let den = ln_hi * &self.count_den;
        let r: BigInt = num.div_floor(&den);
        // π is an integer strictly above the real lower bound
        let e: BigInt = r + 1;
        if e.sign() == num_bigint::Sign::Minus {
            0
        } else {
            e.to_u64().expect("exponent fits in u64")
        }
    }

    fn weight(&self, j: u64) -> BigInt {
        Pow::pow(BigInt::from(j - self.cutoff), self.order)
    }

    /// `(j - N)^k ((m-1)/m)^exponent(j)`.
    pub fn term(&self, j: u64) -> ExactRational {
        integer(self.weight(j)) * miss_power(self.faces, self.exponent(j))
    }
}

/// Certified bound on the prime tail beyond the split point.
#[derive(Debug, Clone)]
pub struct TailBound {
    /// Total: `direct + closure`.
    pub value: ExactRational,
    /// Exact sum of majorant terms for `X < j <= truncated_at`.
    pub direct: ExactRational,
    /// Bound on all majorant terms beyond `truncated_at`.
    pub closure: ExactRational,
    pub direct_terms: u64,
    pub truncated_at: u64,
    /// Geometric ratio proved for the closure.
    pub closure_ratio: ExactRational,
}

/// Upper bound on `Σ_{p prime, p > X} (p - N)^k ((m-1)/m)^π(N, p-1)`.
pub fn tail_bound(
    faces: u32,
    cutoff: u64,
    split: u64,
    order: u32,
    params: &TailBoundParams,
    exec: Exec,
) -> Result<TailBound> {
    tail_with_base(faces, cutoff, split, order, cutoff, params, exec)
}

fn tail_with_base(
    faces: u32,
    cutoff: u64,
    split: u64,
    order: u32,
    count_base: u64,
    params: &TailBoundParams,
    exec: Exec,
) -> Result<TailBound> {
    if faces < 2 {
        return Err(Error::InvalidFaces(faces));
    }
    if split < params.pnt_lower_validity + 1 || split < cutoff {
        return Err(Error::InvalidConfig(format!(
            "split point {split} must be at least {} and not below the cutoff {cutoff}",
            params.pnt_lower_validity + 1
        )));
    }
    let maj = TailMajorant::new(faces, cutoff, count_base, order, params)?;
    let mm1 = BigInt::from(faces - 1);
    let m = BigInt::from(faces);
    let thr = &params.truncation_threshold;
    // term(j) < thr  <=>  w (m-1)^E thr_den < thr_num m^E
    let below = |w: &BigInt, e: u64| -> bool {
        let e = u32::try_from(e).expect("fits");
        w * Pow::pow(&mm1, e) * thr.denom() < thr.numer() * Pow::pow(&m, e)
    };
    // envelope comparison of plateau-leading terms
    let less = |w1: &BigInt, e1: u64, w0: &BigInt, e0: u64| -> bool {
        // w1 (m-1)^e1 / m^e1 < w0 (m-1)^e0 / m^e0
        let (e0, e1) = (
            u32::try_from(e0).expect("fits"),
            u32::try_from(e1).expect("fits"),
        );
        w1 * Pow::pow(&mm1, e1) * Pow::pow(&m, e0) < w0 * Pow::pow(&mm1, e0) * Pow::pow(&m, e1)
    };

    let first = split + 1;
    if maj.exponent(first) == 0 {
        return Err(Error::MonotonicityViolation { split });
    }
    const BATCH: usize = 2048;
    const MAX_TERMS: u64 = 100_000_000;
    let mut groups: BTreeMap<u64, BigInt> = BTreeMap::new();
    let mut envelope: Option<(BigInt, u64)> = None;
    let mut j = first;
    let truncated_at = 'outer: loop {
        let exps = exec.map_range(BATCH, |i| maj.exponent(j + i as u64));
        for (i, &e) in exps.iter().enumerate() {
            let jj = j + i as u64;
            let w = maj.weight(jj);
            *groups.entry(e).or_default() += &w;
            let new_plateau = envelope.as_ref().is_none_or(|(_, pe)| *pe != e);
            if new_plateau {
                if let Some((pw, pe)) = &envelope {
                    if !less(&w, e, pw, *pe) {
                        return Err(Error::MonotonicityViolation { split });
                    }
                }
                let stop = below(&w, e);
                envelope = Some((w, e));
                if stop {
                    break 'outer jj;
                }
            }
        }
        j += BATCH as u64;
        if j - first > MAX_TERMS {
            return Err(Error::MonotonicityViolation { split });
        }
    };
    let direct = sum_by_exponent(faces, &groups);
    let direct_terms = truncated_at - split;
    let (closure, closure_ratio) = closure_bound(&maj, truncated_at)?;
    Ok(TailBound {
        value: &direct + &closure,
        direct,
        closure,
        direct_terms,
        truncated_at,
        closure_ratio,
    })
}

/// Bound on `Σ_{j > last} term(j)`.
///
/// With `s = isqrt(last)`, `a = s^2` and `y = j - 1 >= a`, concavity of the
/// logarithm gives `ln y <= sqrt(y/a) ln a` (for `ln a >= 2`), hence
/// `y/ln y >= s·sqrt(y)/ln a`. Grouping `y` by `t = isqrt(y)` (at most
/// `2t+1` values, each with `j - N <= (t+1)^2`) bounds the remainder by
/// `Σ_{t >= s} g(t)` with
///
/// ```text
/// g(t) = (2t+1) (t+1)^(2k) ((m-1)/m)^(w t - c)
/// ```
///
/// where `w = floor(s/ln a)` and `c = ceil(count) - 1`. The ratio
/// `g(t+1)/g(t)` is nonincreasing in `t`, so its value at `t = s` bounds
/// every later ratio and the sum is at most `g(s)/(1 - ratio)`.
fn closure_bound(maj: &TailMajorant, last: u64) -> Result<(ExactRational, ExactRational)> {
    let s = isqrt(last);
    let a = s * s;
    let scale = BigInt::one() << maj.ln.bits;
    let (_, ln_a_hi) = maj.ln.ln(a);
    let e2 = BigInt::from(2) * &scale;
    if a < maj.validity || ln_a_hi < e2 {
        return Err(Error::InvalidConfig(format!(
            "tail closure needs a larger truncation point than {last}"
        )));
    }
    let w = (BigInt::from(s) * &scale) / &ln_a_hi;
    let c = maj.count_num.div_ceil(&maj.count_den) - 1;
    let exponent_at = |t: u64| -> BigInt { &w * BigInt::from(t) - &c };
    let e_s = exponent_at(s);
    let e_s = match e_s.to_u64() {
        Some(v) if v > 0 => v,
        _ => {
            return Err(Error::RatioNotContracting {
                ratio: format!("exponent {e_s} at t = {s}"),
            })
        }
    };
    let k = maj.order;
    let g = |t: u64, e: u64| -> ExactRational {
        integer(BigInt::from(2 * t + 1) * Pow::pow(BigInt::from(t + 1), 2 * k))
            * miss_power(maj.faces, e)
    };
    let w_u = w.to_u64().expect("slope fits in u64");
    let ratio = BigRational::new(BigInt::from(2 * s + 3), BigInt::from(2 * s + 1))
        * Pow::pow(
            BigRational::new(BigInt::from(s + 2), BigInt::from(s + 1)),
            2 * k,
        )
        * miss_power(maj.faces, w_u);
    if ratio >= BigRational::one() {
        return Err(Error::RatioNotContracting {
            ratio: crate::numerics::to_scientific(&ratio, 6),
        });
    }
    let closure = g(s, e_s) / (BigRational::one() - &ratio);
    Ok((closure, ratio))
}

/// Certified integer `U_k` with `E[τ_{N+i}^k] <= U_k` for `1 <= i <= m`.
#[derive(Debug, Clone)]
pub struct BoundaryCertificate {
    pub order: u32,
    pub cutoff: u64,
    pub faces: u32,
    pub split: u64,
    pub value: BigInt,
    pub finite: ExactRational,
    pub tail: TailBound,
    /// Base of the prime counts; `N + m` when a prime lies in `(N, N+m]`.
    pub count_base: u64,
    pub notes: Vec<String>,
}

impl BoundaryCertificate {
    pub fn value_rational(&self) -> ExactRational {
        integer(self.value.clone())
    }
}

/// Smallest integer above the finite sum plus the certified tail.
pub fn boundary_bound(
    spec: &ProcessSpec,
    cutoff: u64,
    order: u32,
    params: &TailBoundParams,
    exec: Exec,
) -> Result<BoundaryCertificate> {
    if spec.target.kind() != TargetKind::Primes {
        return Err(Error::UnsupportedTarget(spec.target.label().to_string()));
    }
    if order == 0 {
        return Err(Error::InvalidConfig("order must be at least 1".into()));
    }
    let faces = spec.die_faces;
    let split = params.split_point;
    let top = cutoff + u64::from(faces);
    if split < top {
        return Err(Error::InvalidConfig(format!(
            "split point {split} must be at least cutoff + faces = {top}"
        )));
    }
    let target = spec.target.grown(split);
    let mut notes = Vec::new();
    let near = target.elements_in_range(cutoff + 1, top)?;
    let count_base = if near.is_empty() {
        cutoff
    } else {
        notes.push(format!(
            "target elements {near:?} lie in ({cutoff}, {top}]; prime counts start at {top} so the bound covers every boundary state"
        ));
        top
    };
    let (finite, tail) = exec.join(
        || finite_sum_with_base(&target, faces, cutoff, split, order, count_base, exec),
        || tail_with_base(faces, cutoff, split, order, count_base, params, exec),
    );
    let (finite, tail) = (finite?, tail?);
    let value = (&finite + &tail.value).ceil().to_integer();
    Ok(BoundaryCertificate {
        order,
        cutoff,
        faces,
        split,
        value,
        finite,
        tail,
        count_base,
        notes,
    })
}

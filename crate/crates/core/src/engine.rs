//! Truncated backward dynamic programming for hitting-time moments.
//!
//! For a cutoff `N` and boundary constants `B_j`, the pass fixes
//! `E[τ_t^j] = B_j` for `t > N`, zero on target states, and otherwise
//!
//! ```text
//! E[τ_s^j] = (1/m) Σ_{i=1..m} Σ_{j'=0..j} C(j, j') E[τ_{s+i}^{j'}]
//! ```
//!
//! with `E[τ^0] = 1`. The survival probability `SP_N(s)` is carried in the
//! same pass with boundary 1 and no inhomogeneous term.
//!
//! In exact mode every value at state `s` has denominator `c·m^(N+m-s)` for a
//! fixed integer `c` (the lcm of the boundary denominators), so the pass
//! works on integer numerators only: each step is a Horner evaluation with
//! small multipliers and never runs a gcd.

use std::collections::VecDeque;
use std::ops::RangeInclusive;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::numerics::{integer, reduce_base_power, BaseMAdic, Enclosure, ExactRational};
use crate::{Error, Exec, ProcessSpec, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Arithmetic {
    /// Exact rationals; the only certified mode.
    #[default]
    Exact,
    /// Truncating fixed point with `precision_bits` fractional bits. Rounding
    /// error is not tracked, so results are estimates only.
    Approximate { precision_bits: u32 },
}

#[derive(Debug, Clone)]
pub struct CutoffConfig {
    pub cutoff: u64,
    /// Boundary value for orders `1..=k`; `k` is the length.
    pub boundaries: Vec<ExactRational>,
    /// Keep every state `start..=N+m`. At `N = 72000` this is several GB.
    pub keep_full_table: bool,
    pub arithmetic: Arithmetic,
    pub exec: Exec,
}

impl CutoffConfig {
    pub fn new(cutoff: u64, boundaries: Vec<ExactRational>) -> Self {
        Self {
            cutoff,
            boundaries,
            keep_full_table: false,
            arithmetic: Arithmetic::Exact,
            exec: Exec::default(),
        }
    }

    /// Order-1 configuration with boundary `b`.
    pub fn first_order(cutoff: u64, b: ExactRational) -> Self {
        Self::new(cutoff, vec![b])
    }

    pub fn max_order(&self) -> usize {
        self.boundaries.len()
    }

    pub fn with_full_table(mut self) -> Self {
        self.keep_full_table = true;
        self
    }

    pub fn with_arithmetic(mut self, arithmetic: Arithmetic) -> Self {
        self.arithmetic = arithmetic;
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }
}

#[derive(Debug, Clone)]
enum Denominators {
    /// Row values are `numerator / (scale * faces^(top - state))`.
    BasePower { faces: u32, top: u64, scale: BigInt },
    /// Row values are `numerator / 2^bits`.
    Binary { bits: u32 },
}

impl Denominators {
    fn value(&self, state: u64, numerator: &BigInt, scaled: bool) -> ExactRational {
        match self {
            Denominators::BasePower { faces, top, scale } => {
                let v = reduce_base_power(numerator, top - state, *faces);
                if scaled && !scale.is_one() {
                    v / integer(scale.clone())
                } else {
                    v
                }
            }
            Denominators::Binary { bits } => {
                BigRational::new(numerator.clone(), BigInt::one() << *bits)
            }
        }
    }
}

/// Retained per-state values from a pass.
#[derive(Debug, Clone)]
pub struct Profile {
    denominators: Denominators,
    rows: Vec<ProfileRow>,
}

#[derive(Debug, Clone)]
struct ProfileRow {
    state: u64,
    moments: Vec<BigInt>,
    survival: BigInt,
}

impl Profile {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Retained states, ascending.
    pub fn states(&self) -> impl Iterator<Item = u64> + '_ {
        self.rows.iter().map(|r| r.state)
    }

    fn row(&self, state: u64) -> Option<&ProfileRow> {
        let first = self.rows.first()?.state;
        self.rows.get(state.checked_sub(first)? as usize)
    }

    /// `E_{N,B}[τ_state^order]`, if the state was retained.
    pub fn moment(&self, state: u64, order: usize) -> Option<ExactRational> {
        let row = self.row(state)?;
        let num = row.moments.get(order.checked_sub(1)?)?;
        Some(self.denominators.value(state, num, true))
    }

    /// `SP_N(state)`, if the state was retained.
    pub fn survival(&self, state: u64) -> Option<ExactRational> {
        let row = self.row(state)?;
        Some(self.denominators.value(state, &row.survival, false))
    }
}

/// Output of one truncated pass.
#[derive(Debug, Clone)]
pub struct DPResult {
    pub start: u64,
    pub cutoff: u64,
    pub faces: u32,
    /// `E_{N,B_j}[τ_start^j]` for `j = 1..=k`.
    pub moments: Vec<ExactRational>,
    /// `SP_N(start)`.
    pub survival: ExactRational,
    /// False for approximate arithmetic.
    pub certified: bool,
    pub profile: Option<Profile>,
    madic: Option<(Vec<BaseMAdic>, BaseMAdic)>,
}

impl DPResult {
    pub fn moment(&self, order: usize) -> &ExactRational {
        &self.moments[order - 1]
    }

    /// Values at the start state in base-`m` form, available in exact mode
    /// when all boundaries are integers.
    pub fn madic(&self) -> Option<(&[BaseMAdic], &BaseMAdic)> {
        self.madic.as_ref().map(|(m, s)| (m.as_slice(), s))
    }
}

struct StateValues {
    moments: Vec<BigInt>,
    /// `Σ_{j'=1..j} C(j, j') moments[j'-1]` for each `j`.
    shifted: Vec<BigInt>,
    survival: BigInt,
}

impl StateValues {
    fn new(moments: Vec<BigInt>, survival: BigInt, binom: &[Vec<BigInt>]) -> Self {
        let k = moments.len();
        let shifted = (1..=k)
            .map(|j| {
                (1..=j).fold(BigInt::zero(), |acc, jp| {
                    let c = &binom[j][jp];
                    if c.is_one() {
                        acc + &moments[jp - 1]
                    } else {
                        acc + c * &moments[jp - 1]
                    }
                })
            })
            .collect();
        Self {
            moments,
            shifted,
            survival,
        }
    }

    fn absorbed(k: usize) -> Self {
        Self {
            moments: vec![BigInt::zero(); k],
            shifted: vec![BigInt::zero(); k],
            survival: BigInt::zero(),
        }
    }
}

fn binomials(k: usize) -> Vec<Vec<BigInt>> {
    let mut rows = vec![vec![BigInt::one()]];
    for n in 1..=k {
        let prev = &rows[n - 1];
        let mut row = vec![BigInt::one(); n + 1];
        for i in 1..n {
            row[i] = &prev[i - 1] + &prev[i];
        }
        rows.push(row);
    }
    rows
}

struct PassOutput {
    moments: Vec<BigInt>,
    survival: BigInt,
    denominators: Denominators,
    rows: Vec<ProfileRow>,
}

/// Lcm of the boundary denominators.
fn boundary_scale(boundaries: &[ExactRational]) -> BigInt {
    boundaries
        .iter()
        .fold(BigInt::one(), |acc, b| acc.lcm(b.denom()))
}

fn run_pass(
    spec: &ProcessSpec,
    cfg: &CutoffConfig,
    retain: Option<RangeInclusive<u64>>,
) -> Result<PassOutput> {
    let m = spec.die_faces;
    let mu = m as usize;
    let n = cfg.cutoff;
    let start = spec.start;
    let top = n + u64::from(m);
    let k = cfg.max_order();
    let binom = binomials(k);
    let keep = |s: u64| retain.as_ref().is_some_and(|r| r.contains(&s));

    let (mut unit, one_survival, boundary_nums, denominators): (BigInt, BigInt, Vec<BigInt>, _) =
        match cfg.arithmetic {
            Arithmetic::Exact => {
                let scale = boundary_scale(&cfg.boundaries);
                let nums = cfg
                    .boundaries
                    .iter()
                    .map(|b| b.numer() * (&scale / b.denom()))
                    .collect();
                (
                    scale.clone(),
                    BigInt::one(),
                    nums,
                    Denominators::BasePower {
                        faces: m,
                        top,
                        scale,
                    },
                )
            }
            Arithmetic::Approximate { precision_bits } => {
                let one = BigInt::one() << precision_bits;
                let nums = cfg
                    .boundaries
                    .iter()
                    .map(|b| (b.numer() * &one).div_floor(b.denom()))
                    .collect();
                (
                    one.clone(),
                    one,
                    nums,
                    Denominators::Binary {
                        bits: precision_bits,
                    },
                )
            }
        };
    let exact = matches!(cfg.arithmetic, Arithmetic::Exact);
    let big_m = BigInt::from(m);

    // boundary states top..=n+1; in exact mode numerators carry m^(top - t)
    let mut window: VecDeque<StateValues> = VecDeque::with_capacity(mu + 1);
    let mut rows: Vec<ProfileRow> = Vec::new();
    let mut survival_unit = one_survival;
    for t in (n + 1..=top).rev() {
        let moments: Vec<BigInt> = boundary_nums
            .iter()
            .map(|b| if exact { b * &survival_unit } else { b.clone() })
            .collect();
        let sv = StateValues::new(moments, survival_unit.clone(), &binom);
        if keep(t) {
            rows.push(ProfileRow {
                state: t,
                moments: sv.moments.clone(),
                survival: sv.survival.clone(),
            });
        }
        window.push_back(sv);
        if exact {
            survival_unit *= &big_m;
            unit *= &big_m;
        }
    }
    // window[0] holds top; reorder so window[i] holds s+1+i
    window.make_contiguous().reverse();

    let combine = |terms: &mut dyn Iterator<Item = &BigInt>| -> BigInt {
        if exact {
            // Σ m^(i-1) x_{s+i}, Horner from the far end
            let xs: Vec<&BigInt> = terms.collect();
            let mut acc = xs[mu - 1].clone();
            for x in xs[..mu - 1].iter().rev() {
                acc *= &big_m;
                acc += *x;
            }
            acc
        } else {
            let sum: BigInt = terms.sum();
            sum.div_floor(&big_m)
        }
    };

    for s in (start..=n).rev() {
        let sv = if spec.target.contains(s)? {
            StateValues::absorbed(k)
        } else {
            let compute = |task: usize| -> BigInt {
                if task == 0 {
                    combine(&mut window.iter().map(|w| &w.survival))
                } else {
                    combine(&mut window.iter().map(|w| &w.shifted[task - 1])) + &unit
                }
            };
            let mut vals = if cfg.exec.is_parallel() && k >= 2 {
                cfg.exec.map_range(k + 1, compute)
            } else {
                (0..=k).map(compute).collect()
            };
            let survival = vals.remove(0);
            StateValues::new(vals, survival, &binom)
        };
        if keep(s) {
            rows.push(ProfileRow {
                state: s,
                moments: sv.moments.clone(),
                survival: sv.survival.clone(),
            });
        }
        window.pop_back();
        window.push_front(sv);
        if exact && s > start {
            unit *= &big_m;
        }
    }

    rows.reverse();
    let first = window.pop_front().expect("window is never empty");
    Ok(PassOutput {
        moments: first.moments,
        survival: first.survival,
        denominators,
        rows,
    })
}

fn validate(spec: &ProcessSpec, cfg: &CutoffConfig) -> Result<()> {
    if cfg.cutoff < spec.start {
        return Err(Error::CutoffTooSmall {
            cutoff: cfg.cutoff,
            start: spec.start,
        });
    }
    if cfg.cutoff == 0 {
        return Err(Error::InvalidConfig("cutoff must be at least 1".into()));
    }
    if let Some(b) = cfg.boundaries.iter().find(|b| b.is_negative()) {
        return Err(Error::InvalidConfig(format!(
            "boundary values must be nonnegative, got {b}"
        )));
    }
    // surface a short sieve before doing any work
    spec.target.contains(cfg.cutoff)?;
    Ok(())
}

/// Truncated moments `E_{N,B_j}[τ^j]` and `SP_N` at `spec.start`.
pub fn truncated_moments(spec: &ProcessSpec, cfg: &CutoffConfig) -> Result<DPResult> {
    validate(spec, cfg)?;
    let top = cfg.cutoff + u64::from(spec.die_faces);
    let retain = cfg.keep_full_table.then_some(spec.start..=top);
    finish(spec, cfg, run_pass(spec, cfg, retain)?)
}

fn finish(spec: &ProcessSpec, cfg: &CutoffConfig, out: PassOutput) -> Result<DPResult> {
    let start = spec.start;
    let moments: Vec<ExactRational> = out
        .moments
        .iter()
        .map(|v| out.denominators.value(start, v, true))
        .collect();
    let survival = out.denominators.value(start, &out.survival, false);
    let madic = match &out.denominators {
        Denominators::BasePower { faces, top, scale } if scale.is_one() => {
            let e = top - start;
            let mk = |v: BigInt| BaseMAdic::new(v, e, *faces);
            Some((
                out.moments
                    .into_iter()
                    .map(mk)
                    .collect::<Result<Vec<_>>>()?,
                mk(out.survival)?,
            ))
        }
        _ => None,
    };
    let profile = (!out.rows.is_empty()).then(|| Profile {
        denominators: out.denominators.clone(),
        rows: out.rows,
    });
    Ok(DPResult {
        start,
        cutoff: cfg.cutoff,
        faces: spec.die_faces,
        moments,
        survival,
        certified: matches!(cfg.arithmetic, Arithmetic::Exact),
        profile,
        madic,
    })
}

/// `SP_N(start)`: probability of passing `N` without touching the target set.
pub fn survival_probability(spec: &ProcessSpec, cutoff: u64) -> Result<ExactRational> {
    if spec.start > cutoff {
        return Ok(BigRational::one());
    }
    let cfg = CutoffConfig::new(cutoff, Vec::new());
    Ok(truncated_moments(spec, &cfg)?.survival)
}

/// `E_{N,0}[τ] + B·SP_N`, which equals `E_{N,B}[τ]`.
pub fn structure_compose(
    e0: &ExactRational,
    survival: &ExactRational,
    b: &ExactRational,
) -> ExactRational {
    e0 + b * survival
}

/// `E_{N,B}[τ_s]` for `s` in `s_lo..=s_hi`.
pub fn expectation_profile(
    spec: &ProcessSpec,
    cutoff: u64,
    b: &ExactRational,
    s_lo: u64,
    s_hi: u64,
) -> Result<Vec<(u64, ExactRational)>> {
    let top = cutoff + u64::from(spec.die_faces);
    if s_hi > top || s_lo > s_hi {
        return Err(Error::InvalidConfig(format!(
            "profile range {s_lo}..={s_hi} must lie within 0..={top}"
        )));
    }
    let start = s_lo.min(cutoff);
    let spec = spec.with_start(start);
    let cfg = CutoffConfig::first_order(cutoff, b.clone());
    validate(&spec, &cfg)?;
    let out = run_pass(&spec, &cfg, Some(s_lo..=s_hi))?;
    let dp = finish(&spec, &cfg, out)?;
    let profile = dp.profile.expect("retained range is non-empty");
    Ok((s_lo..=s_hi)
        .map(|s| (s, profile.moment(s, 1).expect("state retained")))
        .collect())
}

/// Per-order boundary constants `L_j < U_j` bracketing `E[τ_{N+i}^j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderBounds {
    pub lower: ExactRational,
    pub upper: ExactRational,
}

impl OrderBounds {
    pub fn new(lower: ExactRational, upper: ExactRational) -> Self {
        Self { lower, upper }
    }

    pub fn from_ints(lower: i64, upper: i64) -> Self {
        Self::new(integer(lower), integer(upper))
    }
}

#[derive(Debug, Clone, Default)]
pub struct EncloseOptions {
    /// Warn when `SP_N(0)·(U_1 - L_1)` exceeds this.
    pub width_budget: Option<ExactRational>,
    pub exec: Exec,
}

/// Certified raw and central moment enclosures.
#[derive(Debug, Clone)]
pub struct MomentReport {
    pub cutoff: u64,
    pub faces: u32,
    pub start: u64,
    /// Raw moments, orders `1..=k`.
    pub raw: Vec<Enclosure>,
    /// Central moments, orders `2..=k`.
    pub central: Vec<Enclosure>,
    pub bounds: Vec<OrderBounds>,
    pub survival: ExactRational,
    pub raw_widths: Vec<ExactRational>,
    pub central_widths: Vec<ExactRational>,
    pub warnings: Vec<String>,
}

impl MomentReport {
    pub fn order(&self) -> usize {
        self.raw.len()
    }

    pub fn mean(&self) -> &Enclosure {
        &self.raw[0]
    }

    pub fn raw_moment(&self, order: usize) -> &Enclosure {
        &self.raw[order - 1]
    }

    /// Central moment of order `>= 2`.
    pub fn central_moment(&self, order: usize) -> &Enclosure {
        &self.central[order - 2]
    }

    /// Width bound `SP_N(0)·(U_1 - L_1)` for the mean.
    pub fn mean_width_bound(&self) -> ExactRational {
        &self.survival * (&self.bounds[0].upper - &self.bounds[0].lower)
    }
}

/// Arithmetic needed by the interval evaluation of central moments.
trait Scalar: Clone {
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn mul_int(&self, k: &BigInt) -> Self;
    fn one_like(&self) -> Self;
    fn to_exact(&self) -> ExactRational;
}

impl Scalar for ExactRational {
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn mul_int(&self, k: &BigInt) -> Self {
        self * integer(k.clone())
    }
    fn one_like(&self) -> Self {
        BigRational::one()
    }
    fn to_exact(&self) -> ExactRational {
        self.clone()
    }
}

impl Scalar for BaseMAdic {
    fn add(&self, other: &Self) -> Self {
        BaseMAdic::add(self, other)
    }
    fn sub(&self, other: &Self) -> Self {
        BaseMAdic::sub(self, other)
    }
    fn mul(&self, other: &Self) -> Self {
        BaseMAdic::mul(self, other)
    }
    fn mul_int(&self, k: &BigInt) -> Self {
        BaseMAdic::mul_int(self, k)
    }
    fn one_like(&self) -> Self {
        BaseMAdic::from_integer(1, self.base()).expect("valid base")
    }
    fn to_exact(&self) -> ExactRational {
        self.to_rational()
    }
}

/// Interval evaluation of `E[(τ-μ)^k] = Σ_i C(k,i)(-μ)^(k-i) E[τ^i]` for
/// nonnegative raw intervals; `raw[i]` holds order `i+1`. Each monomial takes
/// the endpoint product matching the sign of its coefficient.
fn central_interval<T: Scalar>(k: usize, raw: &[(T, T)]) -> (T, T) {
    let binom = binomials(k);
    let (mu_lo, mu_hi) = &raw[0];
    let pow = |x: &T, e: usize| (0..e).fold(x.one_like(), |acc, _| acc.mul(x));
    // orders 0 and 1 merge into a single μ^k term with coefficient (-1)^(k-1)(k-1)
    let mut terms: Vec<(BigInt, usize, Option<usize>)> = Vec::new();
    let lead = BigInt::from(k as i64 - 1) * if k.is_multiple_of(2) { -1 } else { 1 };
    terms.push((lead, k, None));
    for (i, c) in binom[k].iter().enumerate().skip(2) {
        let sign = if (k - i).is_multiple_of(2) { 1 } else { -1 };
        terms.push((c.clone() * sign, k - i, Some(i)));
    }
    let mut lo: Option<T> = None;
    let mut hi: Option<T> = None;
    for (coef, mu_power, raw_order) in terms {
        let (small, large) = match raw_order {
            Some(i) => (
                pow(mu_lo, mu_power).mul(&raw[i - 1].0),
                pow(mu_hi, mu_power).mul(&raw[i - 1].1),
            ),
            None => (pow(mu_lo, mu_power), pow(mu_hi, mu_power)),
        };
        let (tl, th) = if coef.is_negative() {
            (large.mul_int(&coef), small.mul_int(&coef))
        } else {
            (small.mul_int(&coef), large.mul_int(&coef))
        };
        lo = Some(match lo {
            Some(acc) => acc.add(&tl),
            None => tl,
        });
        hi = Some(match hi {
            Some(acc) => acc.add(&th),
            None => th,
        });
    }
    (lo.expect("k >= 2"), hi.expect("k >= 2"))
}

fn build_central<T: Scalar>(raw: &[(T, T)]) -> Vec<(ExactRational, ExactRational, ExactRational)> {
    (2..=raw.len())
        .map(|k| {
            let (lo, hi) = central_interval(k, &raw[..k]);
            let width = hi.sub(&lo).to_exact();
            let (mut lo, hi) = (lo.to_exact(), hi.to_exact());
            // even central moments are nonnegative
            if k % 2 == 0 && lo.is_negative() {
                lo = BigRational::zero();
            }
            (lo, hi, width)
        })
        .collect()
}

/// Certified enclosures of raw moments `1..=k` and central moments `2..=k`.
///
/// Order 1 alone uses a single pass and the structure identity. Higher
/// orders run an all-lower and an all-upper pass (concurrently when
/// parallel); the coupled system is monotone in every boundary value since
/// all recursion coefficients are nonnegative.
pub fn enclose_moments(
    spec: &ProcessSpec,
    cutoff: u64,
    bounds: &[OrderBounds],
    opts: &EncloseOptions,
) -> Result<MomentReport> {
    if bounds.is_empty() {
        return Err(Error::InvalidConfig(
            "at least one order is required".into(),
        ));
    }
    for (j, b) in bounds.iter().enumerate() {
        if b.lower.is_negative() || b.lower >= b.upper {
            return Err(Error::InvalidBounds {
                order: j + 1,
                lower: b.lower.to_string(),
                upper: b.upper.to_string(),
            });
        }
    }
    let k = bounds.len();
    let lowers: Vec<ExactRational> = bounds.iter().map(|b| b.lower.clone()).collect();
    let uppers: Vec<ExactRational> = bounds.iter().map(|b| b.upper.clone()).collect();

    let (raw_pairs, survival, raw_widths, central): (Vec<(ExactRational, ExactRational)>, _, _, _) =
        if k == 1 {
            let cfg = CutoffConfig::first_order(cutoff, BigRational::zero()).with_exec(opts.exec);
            let dp = truncated_moments(spec, &cfg)?;
            let e0 = &dp.moments[0];
            let lo = structure_compose(e0, &dp.survival, &lowers[0]);
            let hi = structure_compose(e0, &dp.survival, &uppers[0]);
            let width = &dp.survival * (&uppers[0] - &lowers[0]);
            (vec![(lo, hi)], dp.survival, vec![width], Vec::new())
        } else {
            let lower_cfg = CutoffConfig::new(cutoff, lowers.clone()).with_exec(opts.exec);
            let upper_cfg = CutoffConfig::new(cutoff, uppers.clone()).with_exec(opts.exec);
            let (lo_dp, hi_dp) = opts.exec.join(
                || truncated_moments(spec, &lower_cfg),
                || truncated_moments(spec, &upper_cfg),
            );
            let (lo_dp, hi_dp) = (lo_dp?, hi_dp?);
            match (lo_dp.madic(), hi_dp.madic()) {
                (Some((lo_m, _)), Some((hi_m, _))) => {
                    let pairs: Vec<(BaseMAdic, BaseMAdic)> =
                        lo_m.iter().cloned().zip(hi_m.iter().cloned()).collect();
                    let widths = pairs.iter().map(|(l, h)| h.sub(l).to_rational()).collect();
                    let central = build_central(&pairs);
                    let raw = lo_dp
                        .moments
                        .iter()
                        .cloned()
                        .zip(hi_dp.moments.iter().cloned())
                        .collect();
                    (raw, lo_dp.survival.clone(), widths, central)
                }
                _ => {
                    let pairs: Vec<(ExactRational, ExactRational)> = lo_dp
                        .moments
                        .iter()
                        .cloned()
                        .zip(hi_dp.moments.iter().cloned())
                        .collect();
                    let widths = pairs.iter().map(|(l, h)| h - l).collect();
                    let central = build_central(&pairs);
                    (pairs, lo_dp.survival.clone(), widths, central)
                }
            }
        };

    let raw = raw_pairs
        .into_iter()
        .map(|(lo, hi)| Enclosure::new(lo, hi))
        .collect::<Result<Vec<_>>>()?;
    let mut central_widths = Vec::new();
    let central = central
        .into_iter()
        .map(|(lo, hi, w)| {
            central_widths.push(w);
            Enclosure::new(lo, hi)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = MomentReport {
        cutoff,
        faces: spec.die_faces,
        start: spec.start,
        raw,
        central,
        bounds: bounds.to_vec(),
        survival,
        raw_widths,
        central_widths,
        warnings: Vec::new(),
    };
    if let Some(budget) = &opts.width_budget {
        let w = report.mean_width_bound();
        if &w > budget {
            report.warnings.push(format!(
                "survival times boundary gap ({:.3e}) exceeds the width budget ({:.3e}); \
                 the enclosure of E[τ] is not tight",
                crate::numerics::to_f64(&w),
                crate::numerics::to_f64(budget)
            ));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ratio;
    use crate::TargetSet;
    use proptest::prelude::*;

    fn primes6() -> ProcessSpec {
        ProcessSpec::six_sided_primes(2000)
    }

    /// Plain rational recursion over the whole state range, no scaling tricks.
    fn naive_expectation(spec: &ProcessSpec, n: u64, b: &ExactRational) -> Vec<ExactRational> {
        let m = spec.die_faces as u64;
        let top = n + m;
        let mut e = vec![BigRational::zero(); (top + 1) as usize];
        for s in (0..=top).rev() {
            e[s as usize] = if s > n {
                b.clone()
            } else if spec.target.contains(s).unwrap() {
                BigRational::zero()
            } else {
                let sum: ExactRational = (1..=m).map(|i| e[(s + i) as usize].clone()).sum();
                BigRational::one() + sum / integer(m)
            };
        }
        e
    }

    fn naive_survival(spec: &ProcessSpec, n: u64) -> Vec<ExactRational> {
        let m = spec.die_faces as u64;
        let top = n + m;
        let mut v = vec![BigRational::zero(); (top + 1) as usize];
        for s in (0..=top).rev() {
            v[s as usize] = if s > n {
                BigRational::one()
            } else if spec.target.contains(s).unwrap() {
                BigRational::zero()
            } else {
                (1..=m)
                    .map(|i| v[(s + i) as usize].clone())
                    .sum::<ExactRational>()
                    / integer(m)
            };
        }
        v
    }

    #[test]
    fn small_cutoff_examples() {
        let spec = primes6();
        let dp = truncated_moments(&spec, &CutoffConfig::first_order(4, ratio(0, 1))).unwrap();
        assert_eq!(dp.moments[0], ratio(49, 36));
        assert_eq!(dp.survival, ratio(11, 18));
        assert_eq!(naive_expectation(&spec, 4, &ratio(0, 1))[0], ratio(49, 36));
        assert_eq!(naive_survival(&spec, 4)[0], ratio(11, 18));

        let with_b = truncated_moments(&spec, &CutoffConfig::first_order(4, ratio(6, 1))).unwrap();
        assert_eq!(with_b.moments[0], ratio(181, 36));
        assert_eq!(
            structure_compose(&ratio(49, 36), &ratio(11, 18), &ratio(6, 1)),
            ratio(181, 36)
        );
        assert_eq!(survival_probability(&spec, 4).unwrap(), ratio(11, 18));
    }

    #[test]
    fn absorbing_start_is_zero() {
        let spec = primes6().with_start(2);
        for n in [2, 10, 500] {
            let cfg = CutoffConfig::new(n, vec![integer(5), integer(7), integer(9)]);
            let dp = truncated_moments(&spec, &cfg).unwrap();
            assert!(dp.moments.iter().all(|v| v.is_zero()));
            assert!(dp.survival.is_zero());
        }
    }

    #[test]
    fn survival_beyond_cutoff_is_one() {
        let spec = primes6().with_start(30);
        assert_eq!(survival_probability(&spec, 20).unwrap(), BigRational::one());
        assert!(matches!(
            truncated_moments(&spec, &CutoffConfig::first_order(20, integer(0))),
            Err(Error::CutoffTooSmall { .. })
        ));
    }

    #[test]
    fn sieve_too_short_is_reported() {
        let spec = ProcessSpec::six_sided_primes(100);
        assert!(matches!(
            truncated_moments(&spec, &CutoffConfig::first_order(500, integer(0))),
            Err(Error::QueryBeyondLimit { .. })
        ));
    }

    #[test]
    fn empty_set_survives_surely() {
        let spec = ProcessSpec::new(6, TargetSet::explicit(vec![]).unwrap(), 0).unwrap();
        let dp = truncated_moments(&spec, &CutoffConfig::first_order(30, integer(0))).unwrap();
        assert_eq!(dp.survival, BigRational::one());
        assert_eq!(dp.moments[0], naive_expectation(&spec, 30, &integer(0))[0]);
        assert!(dp.moments[0] > integer(8));
    }

    #[test]
    fn binomial_recursion_matches_explicit_forms() {
        // explicit order 2..4 coefficient forms for a six-sided die, on
        // states drawn from a full table
        let spec = primes6();
        let cfg = CutoffConfig::new(
            150,
            vec![integer(3), integer(20), integer(100), integer(700)],
        )
        .with_full_table();
        let dp = truncated_moments(&spec, &cfg).unwrap();
        let p = dp.profile.as_ref().unwrap();
        let sum = |s: u64, j: usize| -> ExactRational {
            (1..=6).map(|i| p.moment(s + i, j).unwrap()).sum()
        };
        for s in (0..=150u64).filter(|&s| !spec.target.contains(s).unwrap()) {
            let (s1, s2, s3, s4) = (sum(s, 1), sum(s, 2), sum(s, 3), sum(s, 4));
            let one = BigRational::one();
            assert_eq!(p.moment(s, 1).unwrap(), &one + &s1 / integer(6));
            assert_eq!(
                p.moment(s, 2).unwrap(),
                &one + &s1 / integer(3) + &s2 / integer(6)
            );
            assert_eq!(
                p.moment(s, 3).unwrap(),
                &one + &s1 / integer(2) + &s2 / integer(2) + &s3 / integer(6)
            );
            assert_eq!(
                p.moment(s, 4).unwrap(),
                &one + &s1 * ratio(2, 3) + &s2 + &s3 * ratio(2, 3) + &s4 / integer(6)
            );
        }
    }

    #[test]
    fn rational_boundaries_use_common_scale() {
        let spec = primes6();
        let b = ratio(7, 3);
        let dp = truncated_moments(&spec, &CutoffConfig::first_order(60, b.clone())).unwrap();
        assert_eq!(dp.moments[0], naive_expectation(&spec, 60, &b)[0]);
        assert!(dp.madic().is_none());
    }

    #[test]
    fn approximate_mode_is_close_but_uncertified() {
        let spec = primes6();
        let exact = truncated_moments(&spec, &CutoffConfig::first_order(300, integer(0))).unwrap();
        let approx = truncated_moments(
            &spec,
            &CutoffConfig::first_order(300, integer(0)).with_arithmetic(Arithmetic::Approximate {
                precision_bits: 128,
            }),
        )
        .unwrap();
        assert!(!approx.certified && exact.certified);
        let err = (&exact.moments[0] - &approx.moments[0]).abs();
        assert!(err < BigRational::new(BigInt::one(), BigInt::one() << 100));
        let err = (&exact.survival - &approx.survival).abs();
        assert!(err < BigRational::new(BigInt::one(), BigInt::one() << 100));
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let spec = primes6();
        let b = vec![integer(3), integer(40), integer(900)];
        let seq = truncated_moments(
            &spec,
            &CutoffConfig::new(400, b.clone()).with_exec(Exec::Sequential),
        )
        .unwrap();
        let par =
            truncated_moments(&spec, &CutoffConfig::new(400, b).with_exec(Exec::Parallel)).unwrap();
        assert_eq!(seq.moments, par.moments);
        assert_eq!(seq.survival, par.survival);
    }

    #[test]
    fn profile_window_matches_naive() {
        let spec = primes6();
        let prof = expectation_profile(&spec, 200, &integer(20), 150, 206).unwrap();
        let naive = naive_expectation(&spec, 200, &integer(20));
        assert_eq!(prof.len(), 57);
        for (s, v) in &prof {
            assert_eq!(v, &naive[*s as usize], "state {s}");
        }
        assert!(expectation_profile(&spec, 200, &integer(0), 150, 207).is_err());
    }

    #[test]
    fn monotone_in_cutoff() {
        let spec = primes6();
        let mut prev: Option<(ExactRational, ExactRational)> = None;
        for n in 10..=200 {
            let dp = truncated_moments(&spec, &CutoffConfig::first_order(n, integer(0))).unwrap();
            if let Some((e, sp)) = &prev {
                assert!(&dp.moments[0] >= e, "E_N,0 decreased at N = {n}");
                assert!(&dp.survival <= sp, "SP_N increased at N = {n}");
            }
            prev = Some((dp.moments[0].clone(), dp.survival.clone()));
        }
    }

    #[test]
    fn enclosure_small_cases() {
        let spec = primes6();
        let r = enclose_moments(
            &spec,
            4,
            &[OrderBounds::from_ints(0, 412)],
            &EncloseOptions::default(),
        )
        .unwrap();
        assert_eq!(r.mean().lower(), &ratio(49, 36));
        assert_eq!(r.mean().width(), ratio(412 * 11, 18));
        assert!(enclose_moments(
            &spec,
            4,
            &[OrderBounds::from_ints(5, 5)],
            &EncloseOptions::default()
        )
        .is_err());
        assert!(enclose_moments(
            &spec,
            4,
            &[OrderBounds::from_ints(-1, 5)],
            &EncloseOptions::default()
        )
        .is_err());

        let opts = EncloseOptions {
            width_budget: Some(ratio(1, 1000)),
            ..Default::default()
        };
        let r = enclose_moments(&spec, 20, &[OrderBounds::from_ints(0, 412)], &opts).unwrap();
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn central_moments_match_formulas() {
        let spec = ProcessSpec::six_sided_primes(5000);
        let bounds = [
            OrderBounds::from_ints(0, 60),
            OrderBounds::from_ints(0, 5000),
            OrderBounds::from_ints(0, 500_000),
            OrderBounds::from_ints(0, 60_000_000),
        ];
        let r = enclose_moments(&spec, 300, &bounds, &EncloseOptions::default()).unwrap();
        let lo = |j: usize| r.raw_moment(j).lower().clone();
        let hi = |j: usize| r.raw_moment(j).upper().clone();
        let var = r.central_moment(2);
        assert_eq!(var.lower(), &(lo(2) - hi(1) * hi(1)));
        assert_eq!(var.upper(), &(hi(2) - lo(1) * lo(1)));
        let third = r.central_moment(3);
        assert_eq!(
            third.lower(),
            &(lo(3) - integer(3) * hi(1) * hi(2) + integer(2) * lo(1).pow(3))
        );
        assert_eq!(
            third.upper(),
            &(hi(3) - integer(3) * lo(1) * lo(2) + integer(2) * hi(1).pow(3))
        );
        let fourth = r.central_moment(4);
        let f_lo = lo(4) - integer(4) * hi(1) * hi(3) + integer(6) * lo(1).pow(2) * lo(2)
            - integer(3) * hi(1).pow(4);
        let f_hi = hi(4) - integer(4) * lo(1) * lo(3) + integer(6) * hi(1).pow(2) * hi(2)
            - integer(3) * lo(1).pow(4);
        assert_eq!(fourth.lower(), &f_lo);
        assert_eq!(fourth.upper(), &f_hi);
        for (w, e) in r.central_widths.iter().zip(&r.central) {
            assert_eq!(w, &e.width());
        }
        // Jensen on the certified endpoints
        assert!(hi(2) >= lo(1) * lo(1));
        assert!(var.lower() >= &BigRational::zero());
        // the order-1 value of the upper pass matches the structure identity
        let one = enclose_moments(&spec, 300, &bounds[..1], &EncloseOptions::default()).unwrap();
        assert_eq!(one.mean(), r.mean());
    }

    #[test]
    fn rational_bounds_take_the_generic_path() {
        let spec = primes6();
        let bounds = [
            OrderBounds::new(ratio(1, 2), ratio(121, 3)),
            OrderBounds::new(ratio(1, 7), integer(3000)),
        ];
        let r = enclose_moments(&spec, 120, &bounds, &EncloseOptions::default()).unwrap();
        let lo = truncated_moments(
            &spec,
            &CutoffConfig::new(120, vec![ratio(1, 2), ratio(1, 7)]),
        )
        .unwrap();
        assert_eq!(r.raw_moment(2).lower(), lo.moment(2));
        assert!(r.central_moment(2).width() >= BigRational::zero());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn structure_identity_holds_exactly(n in 1u64..=200, bn in 0i64..5000, bd in 1i64..50) {
            let spec = primes6();
            let b = ratio(bn, bd);
            let top = n + 6;
            let zero = truncated_moments(&spec, &CutoffConfig::first_order(n, integer(0)).with_full_table()).unwrap();
            let with_b = truncated_moments(&spec, &CutoffConfig::first_order(n, b.clone()).with_full_table()).unwrap();
            let (pz, pb) = (zero.profile.unwrap(), with_b.profile.unwrap());
            for s in 0..=top {
                let lhs = pb.moment(s, 1).unwrap();
                let rhs = structure_compose(&pz.moment(s, 1).unwrap(), &pz.survival(s).unwrap(), &b);
                prop_assert_eq!(lhs, rhs, "state {}", s);
            }
        }

        #[test]
        fn boundaries_order_strictly(n in 10u64..150, gap in 1i64..100) {
            let spec = primes6();
            let lo = truncated_moments(&spec, &CutoffConfig::new(n, vec![integer(1), integer(1), integer(1)])).unwrap();
            let hi = truncated_moments(&spec, &CutoffConfig::new(n, vec![integer(1 + gap), integer(1 + gap), integer(1 + gap)])).unwrap();
            prop_assert!(lo.survival > BigRational::zero());
            for j in 1..=3 {
                prop_assert!(lo.moment(j) < hi.moment(j));
            }
        }
    }
}

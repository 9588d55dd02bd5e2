//! Independent ground truth: an exact solver for sets that force
//! absorption, exhaustive path enumeration, and seeded simulation.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{integer, ExactRational};
use crate::{Error, Exec, ProcessSpec, Result};

/// Largest `n - start` accepted by [`enumerate_paths`].
pub const MAX_ENUMERATION_DISTANCE: u64 = 25;
pub const DEFAULT_MAX_ROLLS: u64 = 10_000;
const CHUNK_TRIALS: u64 = 1 << 16;

/// Exact moments of τ for every start `s <= block_start`.
#[derive(Debug, Clone)]
pub struct SmallSolution {
    pub faces: u32,
    pub block_start: u64,
    // moments[s][k - 1]
    moments: Vec<Vec<ExactRational>>,
}

impl SmallSolution {
    pub fn moment(&self, start: u64, order: usize) -> Option<&ExactRational> {
        self.moments.get(start as usize)?.get(order.checked_sub(1)?)
    }

    pub fn max_order(&self) -> usize {
        self.moments.first().map_or(0, Vec::len)
    }
}

/// First `a` with `{a, .., a+m-1} ⊆ A` and `a + m - 1 <= horizon`.
pub fn absorbing_block(spec: &ProcessSpec, horizon: u64) -> Result<u64> {
    let m = u64::from(spec.die_faces);
    let mut run = 0u64;
    for n in 1..=horizon {
        if spec.target.contains(n)? {
            run += 1;
            if run == m {
                return Ok(n + 1 - m);
            }
        } else {
            run = 0;
        }
    }
    Err(Error::NoAbsorbingBlock {
        faces: spec.die_faces,
        horizon,
    })
}

/// Exact `E[τ_s^k]` for `0 <= s <= a` and `1 <= k <= max_order`, where `a`
/// starts the first absorbing block.
///
/// Probability mass is pushed forward roll by roll and the mass absorbed at
/// each roll gives the exact distribution of τ, which is finite because no
/// walk can step over the block.
pub fn exact_small_solver(
    spec: &ProcessSpec,
    horizon: u64,
    max_order: usize,
) -> Result<SmallSolution> {
    let a = absorbing_block(spec, horizon)?;
    let m = spec.die_faces as usize;
    let top = (a as usize) + m;
    let hits: Vec<bool> = (0..=top as u64)
        .map(|n| spec.target.contains(n))
        .collect::<Result<_>>()?;
    let mut moments = Vec::with_capacity(a as usize + 1);
    for s in 0..=a as usize {
        if hits[s] {
            moments.push(vec![BigRational::zero(); max_order]);
            continue;
        }
        // mass numerators over m^t
        let mut mass = vec![BigInt::zero(); top + 1];
        mass[s] = BigInt::one();
        let mut acc = vec![BigRational::zero(); max_order];
        let mut t: u64 = 0;
        let mut denom = BigInt::one();
        loop {
            t += 1;
            denom *= spec.die_faces;
            let mut next = vec![BigInt::zero(); top + 1];
            let mut alive = false;
            for (pos, w) in mass.iter().enumerate() {
                if w.is_zero() {
                    continue;
                }
                for d in 1..=m {
                    next[pos + d] += w;
                }
            }
            let mut absorbed = BigInt::zero();
            for (pos, w) in next.iter_mut().enumerate() {
                if w.is_zero() {
                    continue;
                }
                if hits[pos] {
                    absorbed += &*w;
                    *w = BigInt::zero();
                } else {
                    alive = true;
                }
            }
            if !absorbed.is_zero() {
                let p = BigRational::new(absorbed, denom.clone());
                let mut tk = BigInt::one();
                for slot in acc.iter_mut() {
                    tk *= t;
                    *slot += &p * integer(tk.clone());
                }
            }
            if !alive {
                break;
            }
            mass = next;
        }
        moments.push(acc);
    }
    Ok(SmallSolution {
        faces: spec.die_faces,
        block_start: a,
        moments,
    })
}

/// `LP_start(n)` by walking every composition of `n - start` into parts
/// `1..=m` whose intermediate partial sums avoid the target.
pub fn enumerate_paths(spec: &ProcessSpec, n: u64) -> Result<ExactRational> {
    let s = spec.start;
    if n < s {
        return Ok(BigRational::zero());
    }
    let distance = n - s;
    if distance > MAX_ENUMERATION_DISTANCE {
        return Err(Error::HorizonTooLarge {
            distance,
            limit: MAX_ENUMERATION_DISTANCE,
        });
    }
    let blocked: Vec<bool> = (s..=n)
        .map(|x| spec.target.contains(x))
        .collect::<Result<_>>()?;
    let mut counts = vec![0u64; distance as usize + 1];
    fn walk(pos: usize, len: usize, goal: usize, m: usize, blocked: &[bool], counts: &mut [u64]) {
        if pos == goal {
            counts[len] += 1;
            return;
        }
        if pos > 0 && blocked[pos] {
            return;
        }
        for d in 1..=m.min(goal - pos) {
            walk(pos + d, len + 1, goal, m, blocked, counts);
        }
    }
    walk(
        0,
        0,
        distance as usize,
        spec.die_faces as usize,
        &blocked,
        &mut counts,
    );
    let m = BigInt::from(spec.die_faces);
    let mut total = BigRational::zero();
    let mut den = BigInt::one();
    for c in counts {
        if c > 0 {
            total += BigRational::new(BigInt::from(c), den.clone());
        }
        den *= &m;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub trials: u64,
    pub completed: u64,
    pub censored: u64,
    /// Fraction of walks that hit the target within `max_rolls`.
    pub hit_fraction: f64,
    pub mean: f64,
    pub variance: f64,
    pub third_central: f64,
    pub fourth_central: f64,
    /// Sample raw moments `E[τ^k]`, `k = 1..=4`.
    pub raw_moments: [f64; 4],
    pub seed: u64,
    pub faces: u32,
    pub max_rolls: u64,
}

impl SimStats {
    /// Standard error of the sample mean.
    pub fn mean_std_error(&self) -> f64 {
        (self.variance / self.completed as f64).sqrt()
    }

    /// Large-sample standard error of the sample variance.
    pub fn variance_std_error(&self) -> f64 {
        ((self.fourth_central - self.variance * self.variance) / self.completed as f64).sqrt()
    }

    pub fn mean_z(&self, expected: f64) -> f64 {
        (self.mean - expected) / self.mean_std_error()
    }

    pub fn variance_z(&self, expected: f64) -> f64 {
        (self.variance - expected) / self.variance_std_error()
    }
}

/// Uniform roll in `1..=m` without modulo bias.
fn roll(rng: &mut ChaCha8Rng, m: u32) -> u64 {
    let span = 1u64 << 32;
    let limit = span - span % u64::from(m);
    loop {
        let x = u64::from(rng.gen::<u32>());
        if x < limit {
            return x % u64::from(m) + 1;
        }
    }
}

#[derive(Default)]
struct Sums {
    completed: u64,
    powers: [u128; 4],
}

/// Seeded simulation of τ.
///
/// Trials are split into fixed chunks of 65536; chunk `c` draws from ChaCha8
/// seeded with `seed` on stream `c`, so the result does not depend on the
/// thread count. Walks still running after `max_rolls` rolls are censored
/// and left out of the moments.
pub fn monte_carlo(
    spec: &ProcessSpec,
    trials: u64,
    seed: u64,
    max_rolls: u64,
    exec: Exec,
) -> Result<SimStats> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    if max_rolls == 0 {
        return Err(Error::InvalidConfig("max_rolls must be at least 1".into()));
    }
    let m = spec.die_faces;
    let reach = spec.start + max_rolls * u64::from(m);
    let target = spec.target.grown(reach);
    // probe once so later lookups cannot fail
    target.contains(reach)?;
    let chunks = trials.div_ceil(CHUNK_TRIALS) as usize;
    let partial = exec.map_range(chunks, |c| -> Result<Sums> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let lo = c as u64 * CHUNK_TRIALS;
        let n = CHUNK_TRIALS.min(trials - lo);
        let mut sums = Sums::default();
        for _ in 0..n {
            let mut pos = spec.start;
            let mut hit = None;
            for t in 1..=max_rolls {
                pos += roll(&mut rng, m);
                if target.contains(pos)? {
                    hit = Some(t);
                    break;
                }
            }
            if let Some(t) = hit {
                sums.completed += 1;
                let t = u128::from(t);
                let mut p = 1u128;
                for slot in sums.powers.iter_mut() {
                    p *= t;
                    *slot += p;
                }
            }
        }
        Ok(sums)
    });
    let mut total = Sums::default();
    for s in partial {
        let s = s?;
        total.completed += s.completed;
        for (a, b) in total.powers.iter_mut().zip(s.powers) {
            *a += b;
        }
    }
    Ok(summarize(total, trials, seed, m, max_rolls))
}

fn summarize(sums: Sums, trials: u64, seed: u64, faces: u32, max_rolls: u64) -> SimStats {
    let n = sums.completed;
    let mut raw = [0.0; 4];
    let (mut mean, mut var, mut c3, mut c4) = (0.0, 0.0, 0.0, 0.0);
    if n > 0 {
        // central moments from exact power sums, then one rounding each
        let r: Vec<ExactRational> = sums
            .powers
            .iter()
            .map(|&p| BigRational::new(BigInt::from(p), BigInt::from(n)))
            .collect();
        let mu = &r[0];
        let mu2 = mu * mu;
        let v = &r[1] - &mu2;
        let t3 = &r[2] - integer(3) * mu * &r[1] + integer(2) * mu * &mu2;
        let t4 =
            &r[3] - integer(4) * mu * &r[2] + integer(6) * &mu2 * &r[1] - integer(3) * &mu2 * &mu2;
        let f = |x: &ExactRational| x.to_f64().unwrap_or(f64::NAN);
        for (slot, x) in raw.iter_mut().zip(&r) {
            *slot = f(x);
        }
        mean = f(mu);
        var = f(&v);
        c3 = f(&t3);
        c4 = f(&t4);
    }
    SimStats {
        trials,
        completed: n,
        censored: trials - n,
        hit_fraction: n as f64 / trials as f64,
        mean,
        variance: var,
        third_central: c3,
        fourth_central: c4,
        raw_moments: raw,
        seed,
        faces,
        max_rolls,
    }
}

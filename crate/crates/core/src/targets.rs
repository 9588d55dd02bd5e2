//! Target sets and the dice process that hunts for them.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::{Error, Result};

/// Growth headroom applied when a prime table is created for a cutoff.
pub const DEFAULT_LIMIT_FACES_MULTIPLE: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Primes,
    Squares,
    Fibonacci,
    Explicit,
}

/// Bit-packed sieve with a per-word cumulative count, so `π(n)` is a table
/// lookup plus one popcount.
#[derive(Debug)]
struct PrimeTable {
    limit: u64,
    bits: Vec<u64>,
    prefix: Vec<u64>,
}

impl PrimeTable {
    fn new(limit: u64) -> Self {
        let words = (limit / 64 + 1) as usize;
        let mut bits = vec![!0u64; words];
        let clear = |bits: &mut Vec<u64>, i: u64| bits[(i / 64) as usize] &= !(1u64 << (i % 64));
        clear(&mut bits, 0);
        if limit >= 1 {
            clear(&mut bits, 1);
        }
        let mut p = 2u64;
        while p * p <= limit {
            if bits[(p / 64) as usize] >> (p % 64) & 1 == 1 {
                let mut q = p * p;
                while q <= limit {
                    clear(&mut bits, q);
                    q += p;
                }
            }
            p += 1;
        }
        // drop bits beyond the limit in the last word
        let tail = limit % 64;
        if tail < 63 {
            bits[words - 1] &= (1u64 << (tail + 1)) - 1;
        }
        let mut prefix = Vec::with_capacity(words);
        let mut acc = 0u64;
        for w in &bits {
            prefix.push(acc);
            acc += u64::from(w.count_ones());
        }
        Self {
            limit,
            bits,
            prefix,
        }
    }

    fn contains(&self, n: u64) -> bool {
        self.bits[(n / 64) as usize] >> (n % 64) & 1 == 1
    }

    /// Number of primes `<= n`.
    fn count_upto(&self, n: u64) -> u64 {
        let w = (n / 64) as usize;
        let r = n % 64;
        let mask = if r == 63 { !0 } else { (1u64 << (r + 1)) - 1 };
        self.prefix[w] + u64::from((self.bits[w] & mask).count_ones())
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Primes(Arc<PrimeTable>),
    Squares,
    Sorted(Arc<Vec<u64>>),
}

/// A set `A` of positive integers with membership and range counting.
///
/// Values are immutable; growing the prime sieve returns a new set.
#[derive(Debug, Clone)]
pub struct TargetSet {
    kind: TargetKind,
    label: String,
    repr: Repr,
}

impl TargetSet {
    /// Primes with a sieve covering `0..=limit`.
    pub fn primes(limit: u64) -> Self {
        Self {
            kind: TargetKind::Primes,
            label: "primes".into(),
            repr: Repr::Primes(Arc::new(PrimeTable::new(limit.max(2)))),
        }
    }

    /// Positive perfect squares.
    pub fn squares() -> Self {
        Self {
            kind: TargetKind::Squares,
            label: "squares".into(),
            repr: Repr::Squares,
        }
    }

    /// Distinct positive Fibonacci numbers 1, 2, 3, 5, 8, ...
    pub fn fibonacci() -> Self {
        let mut v = vec![1u64, 2];
        while let Some(next) = v[v.len() - 1].checked_add(v[v.len() - 2]) {
            v.push(next);
        }
        Self {
            kind: TargetKind::Fibonacci,
            label: "fibonacci".into(),
            repr: Repr::Sorted(Arc::new(v)),
        }
    }

    /// An explicit finite set; elements must be positive and strictly ascending.
    pub fn explicit(elements: Vec<u64>) -> Result<Self> {
        let path = Path::new("<explicit>");
        for (i, w) in elements.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::NonAscending {
                    path: path.into(),
                    line: i + 2,
                    previous: w[0],
                    value: w[1],
                });
            }
        }
        if elements.first() == Some(&0) {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                content: "0".into(),
            });
        }
        Ok(Self {
            kind: TargetKind::Explicit,
            label: "explicit".into(),
            repr: Repr::Sorted(Arc::new(elements)),
        })
    }

    /// Reads one base-10 integer per line; `#` starts a comment.
    pub fn load_explicit(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.into(),
            source,
        })?;
        let mut elements: Vec<u64> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let value: u64 = match content.parse() {
                Ok(v) if v > 0 => v,
                _ => {
                    return Err(Error::Parse {
                        path: path.into(),
                        line,
                        content: content.into(),
                    })
                }
            };
            if let Some(&previous) = elements.last() {
                if value <= previous {
                    return Err(Error::NonAscending {
                        path: path.into(),
                        line,
                        previous,
                        value,
                    });
                }
            }
            elements.push(value);
        }
        Ok(Self {
            kind: TargetKind::Explicit,
            label: format!("file:{}", path.display()),
            repr: Repr::Sorted(Arc::new(elements)),
        })
    }

    pub fn kind(&self) -> TargetKind {
        self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Largest `n` for which queries are guaranteed to be answerable.
    pub fn sieve_limit(&self) -> u64 {
        match &self.repr {
            Repr::Primes(t) => t.limit,
            Repr::Squares | Repr::Sorted(_) => u64::MAX,
        }
    }

    /// Returns a set answerable up to at least `n` (a new sieve if needed).
    pub fn grown(&self, n: u64) -> Self {
        match &self.repr {
            Repr::Primes(t) if t.limit < n => {
                let limit = n.max(t.limit.saturating_mul(2));
                Self {
                    repr: Repr::Primes(Arc::new(PrimeTable::new(limit))),
                    ..self.clone()
                }
            }
            _ => self.clone(),
        }
    }

    fn check(&self, n: u64) -> Result<()> {
        let limit = self.sieve_limit();
        if n > limit {
            Err(Error::QueryBeyondLimit { n, limit })
        } else {
            Ok(())
        }
    }

    pub fn contains(&self, n: u64) -> Result<bool> {
        self.check(n)?;
        Ok(match &self.repr {
            Repr::Primes(t) => t.contains(n),
            Repr::Squares => n > 0 && isqrt(n).pow(2) == n,
            Repr::Sorted(v) => v.binary_search(&n).is_ok(),
        })
    }

    /// Number of elements `<= n`.
    fn count_upto(&self, n: u64) -> u64 {
        match &self.repr {
            Repr::Primes(t) => t.count_upto(n),
            Repr::Squares => isqrt(n),
            Repr::Sorted(v) => v.partition_point(|&e| e <= n) as u64,
        }
    }

    /// `|{e in A : s < e <= n}|`, zero when `n <= s`.
    pub fn count_between(&self, s: u64, n: u64) -> Result<u64> {
        self.check(n)?;
        if n <= s {
            return Ok(0);
        }
        Ok(self.count_upto(n) - self.count_upto(s))
    }

    /// All elements `e` with `lo <= e <= hi`, ascending.
    pub fn elements_in_range(&self, lo: u64, hi: u64) -> Result<Vec<u64>> {
        self.check(hi)?;
        if hi < lo {
            return Ok(Vec::new());
        }
        Ok(match &self.repr {
            Repr::Primes(t) => (lo..=hi).filter(|&n| t.contains(n)).collect(),
            Repr::Squares => {
                let first = isqrt(lo.saturating_sub(1)) + 1;
                (first.max(1)..=isqrt(hi)).map(|r| r * r).collect()
            }
            Repr::Sorted(v) => {
                let a = v.partition_point(|&e| e < lo);
                let b = v.partition_point(|&e| e <= hi);
                v[a..b].to_vec()
            }
        })
    }
}

impl fmt::Display for TargetSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

pub(crate) fn isqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1).checked_mul(r + 1).is_some_and(|sq| sq <= n) {
        r += 1;
    }
    r
}

/// A fair `die_faces`-sided die rolled from `start` until the sum hits `target`.
#[derive(Debug, Clone)]
pub struct ProcessSpec {
    pub die_faces: u32,
    pub target: TargetSet,
    pub start: u64,
}

impl ProcessSpec {
    pub fn new(die_faces: u32, target: TargetSet, start: u64) -> Result<Self> {
        if die_faces < 2 {
            return Err(Error::InvalidFaces(die_faces));
        }
        Ok(Self {
            die_faces,
            target,
            start,
        })
    }

    /// The classic question: a six-sided die started at zero, hunting primes.
    pub fn six_sided_primes(limit: u64) -> Self {
        Self {
            die_faces: 6,
            target: TargetSet::primes(limit),
            start: 0,
        }
    }

    pub fn with_start(&self, start: u64) -> Self {
        Self {
            start,
            ..self.clone()
        }
    }

    pub fn with_target(&self, target: TargetSet) -> Self {
        Self {
            target,
            ..self.clone()
        }
    }
}

/// Heuristic ratio for Fibonacci targets: a far-away element is missed with
/// probability `(m-1)/(m+1)` and consecutive gaps grow by `φ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FibonacciRatio {
    pub faces: u32,
    pub ratio: f64,
    /// Conjecturally infinite expectation.
    pub divergent: bool,
}

pub fn fibonacci_ratio(faces: u32) -> Result<FibonacciRatio> {
    if faces < 2 {
        return Err(Error::InvalidFaces(faces));
    }
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let m = f64::from(faces);
    let ratio = (m - 1.0) / (m + 1.0) * phi;
    Ok(FibonacciRatio {
        faces,
        ratio,
        divergent: ratio > 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trial_division(n: u64) -> bool {
        n >= 2
            && (2..)
                .take_while(|d| d * d <= n)
                .all(|d| !n.is_multiple_of(d))
    }

    #[test]
    fn prime_examples() {
        let p = TargetSet::primes(100_000);
        assert!(p.contains(2).unwrap());
        assert!(!p.contains(72_000).unwrap());
        assert_eq!(p.count_between(5, 3).unwrap(), 0);
        assert_eq!(p.count_between(0, 10).unwrap(), 4);
        assert_eq!(p.count_between(0, 1000).unwrap(), 168);
        assert_eq!(p.elements_in_range(8, 12).unwrap(), vec![11]);
        assert!(matches!(
            p.contains(100_001),
            Err(Error::QueryBeyondLimit { .. })
        ));
        assert!(p.grown(200_000).contains(199_999).unwrap());
    }

    #[test]
    fn sieve_matches_trial_division() {
        let p = TargetSet::primes(100_000);
        let mut count = 0;
        for n in 0..=100_000 {
            let expect = trial_division(n);
            assert_eq!(p.contains(n).unwrap(), expect, "n = {n}");
            count += u64::from(expect);
            assert_eq!(p.count_between(0, n).unwrap(), count);
        }
        assert_eq!(count, 9592);
    }

    #[test]
    fn primes_above_72000() {
        let p = TargetSet::primes(72_100);
        let expect: Vec<u64> = (72_001..=72_100).filter(|&n| trial_division(n)).collect();
        assert_eq!(p.elements_in_range(72_001, 72_100).unwrap(), expect);
        assert_eq!(expect[0], 72_019);
    }

    #[test]
    fn explicit_sets() {
        let e = TargetSet::explicit(vec![2, 3, 4, 5, 6, 7]).unwrap();
        assert!(e.contains(5).unwrap());
        assert!(!e.contains(8).unwrap());
        let e = TargetSet::explicit(vec![10, 20]).unwrap();
        assert_eq!(e.elements_in_range(0, 15).unwrap(), vec![10]);
        assert!(TargetSet::explicit(vec![5, 3]).is_err());
        assert!(TargetSet::explicit(vec![3, 3]).is_err());
    }

    #[test]
    fn load_explicit_files() {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, body: &str| {
            let p = dir.path().join(name);
            fs::write(&p, body).unwrap();
            p
        };
        let ok = TargetSet::load_explicit(write("ok.txt", "2\n3\n5\n")).unwrap();
        assert_eq!(ok.elements_in_range(0, 100).unwrap(), vec![2, 3, 5]);

        let commented =
            TargetSet::load_explicit(write("c.txt", "# header\n2  # two\n\n 7\n")).unwrap();
        assert_eq!(commented.elements_in_range(0, 100).unwrap(), vec![2, 7]);

        match TargetSet::load_explicit(write("bad.txt", "5\n3\n")) {
            Err(Error::NonAscending { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match TargetSet::load_explicit(write("dup.txt", "5\n5\n")) {
            Err(Error::NonAscending { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match TargetSet::load_explicit(write("junk.txt", "1\n2\nx\n")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let empty = TargetSet::load_explicit(write("empty.txt", "")).unwrap();
        assert_eq!(empty.count_between(0, 1_000_000).unwrap(), 0);
        assert!(TargetSet::load_explicit(dir.path().join("missing.txt")).is_err());
    }

    #[test]
    fn squares_and_fibonacci() {
        let sq = TargetSet::squares();
        assert_eq!(
            sq.elements_in_range(1, 50).unwrap(),
            vec![1, 4, 9, 16, 25, 36, 49]
        );
        assert_eq!(sq.count_between(4, 49).unwrap(), 5);
        assert!(!sq.contains(0).unwrap());
        let fib = TargetSet::fibonacci();
        assert_eq!(
            fib.elements_in_range(0, 40).unwrap(),
            vec![1, 2, 3, 5, 8, 13, 21, 34]
        );
    }

    #[test]
    fn fibonacci_ratio_examples() {
        let six = fibonacci_ratio(6).unwrap();
        assert!((six.ratio - 1.1557).abs() < 1e-4 && six.divergent);
        let four = fibonacci_ratio(4).unwrap();
        assert!((four.ratio - 0.9708).abs() < 1e-4 && !four.divergent);
        let two = fibonacci_ratio(2).unwrap();
        assert!((two.ratio - 0.5393).abs() < 1e-4 && !two.divergent);
        assert!(fibonacci_ratio(1).is_err());
    }

    proptest! {
        #[test]
        fn count_matches_membership(s in 0u64..3000, len in 0u64..2000, seed in any::<u64>()) {
            let n = s + len;
            let explicit: Vec<u64> = (1..5000u64).filter(|x| (x ^ seed) % 7 < 2).collect();
            for set in [TargetSet::primes(5000), TargetSet::squares(), TargetSet::fibonacci(),
                        TargetSet::explicit(explicit.clone()).unwrap()] {
                let direct = ((s + 1)..=n).filter(|&i| set.contains(i).unwrap()).count() as u64;
                prop_assert_eq!(set.count_between(s, n).unwrap(), direct);
                let lo = s + 1;
                prop_assert_eq!(set.elements_in_range(lo, n).unwrap().len() as u64,
                                set.count_between(lo - 1, n).unwrap());
            }
        }
    }
}

//! The `dicehit` command line.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 when a computation fails.

use std::ffi::OsString;
use std::io::Write;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use num_traits::Zero;
use serde_json::{json, Value};

use crate::engine::{
    enclose_moments, expectation_profile, survival_probability, truncated_moments, Arithmetic,
    CutoffConfig, EncloseOptions, OrderBounds,
};
use crate::numerics::{
    format_rational, integer, parse_rational, to_decimal, to_scientific, Enclosure, ExactRational,
    DEFAULT_DIGITS,
};
use crate::oracle::{monte_carlo, DEFAULT_MAX_ROLLS};
use crate::tailbound::{boundary_bound, landing_profile, BoundaryCertificate, TailBoundParams};
use crate::targets::{fibonacci_ratio, TargetKind};
use crate::{Error, Exec, ProcessSpec, TargetSet};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_COMPUTE: i32 = 2;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Compute(#[from] Error),
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "dicehit",
    version,
    about = "Certified moments of dice-sum hitting times"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certified enclosure of E[τ].
    Expect(ExpectArgs),
    /// Raw and central moment enclosures up to --order.
    Moments(ExpectArgs),
    /// Survival probability SP_N(start).
    Survival(SurvivalArgs),
    /// Landing probabilities LP_start(n).
    Landing(LandingArgs),
    /// Certified boundary constant U_k for the primes.
    Bound(BoundArgs),
    /// E_{N,B}[τ_s] over a range of start states.
    Profile(ProfileArgs),
    /// Monte Carlo estimate of the moments of τ.
    Simulate(SimulateArgs),
    /// Growth ratio heuristic for Fibonacci targets.
    FibRatio(FibArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Plain,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exact,
    Float,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// primes, squares, fibonacci or file:<path>
    #[arg(long, default_value = "primes")]
    pub target: String,
    #[arg(long, default_value_t = 6)]
    pub faces: u32,
    #[arg(long, default_value_t = 0)]
    pub start: u64,
    #[arg(long, value_enum, default_value_t = Format::Plain)]
    pub format: Format,
    /// Run every parallel loop on the calling thread.
    #[arg(long)]
    pub sequential: bool,
}

impl Common {
    fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ExpectArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub cutoff: u64,
    /// `auto`, or `L,U` once per order.
    #[arg(long = "bound", default_value = "auto")]
    pub bounds: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_DIGITS)]
    pub digits: usize,
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    pub mode: Mode,
    #[arg(long, default_value_t = 512)]
    pub precision_bits: u32,
    /// Warn when the width bound of the mean exceeds this rational.
    #[arg(long)]
    pub width_budget: Option<String>,
    /// Split point of the tail certificate used by `auto`.
    #[arg(long, default_value_t = 100_003)]
    pub split: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SurvivalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub cutoff: u64,
    /// Significant digits.
    #[arg(long, default_value_t = 20)]
    pub digits: usize,
}

#[derive(Debug, Clone, Args)]
pub struct LandingArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 40)]
    pub max: u64,
    #[arg(long, default_value_t = 20)]
    pub digits: usize,
}

#[derive(Debug, Clone, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub cutoff: u64,
    #[arg(long, default_value_t = 1)]
    pub order: u32,
    #[arg(long, default_value_t = 100_003)]
    pub split: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub cutoff: u64,
    #[arg(long)]
    pub from: u64,
    #[arg(long)]
    pub to: u64,
    /// Boundary value B, as an integer or `p/q`.
    #[arg(long, default_value = "0")]
    pub boundary: String,
    #[arg(long, default_value_t = 20)]
    pub digits: usize,
    /// Also print each value as an exact rational.
    #[arg(long)]
    pub rational: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 1_000_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_ROLLS)]
    pub max_rolls: u64,
}

#[derive(Debug, Clone, Args)]
pub struct FibArgs {
    #[arg(long, default_value_t = 6)]
    pub faces: u32,
    #[arg(long, value_enum, default_value_t = Format::Plain)]
    pub format: Format,
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(&cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                CliError::Usage(_) => EXIT_USAGE,
                _ => EXIT_COMPUTE,
            }
        }
    }
}

fn dispatch(cmd: &Command, out: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Command::Expect(a) => cmd_expect(a, out),
        Command::Moments(a) => cmd_moments(a, out),
        Command::Survival(a) => cmd_survival(a, out),
        Command::Landing(a) => cmd_landing(a, out),
        Command::Bound(a) => cmd_bound(a, out),
        Command::Profile(a) => cmd_profile(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::FibRatio(a) => cmd_fib_ratio(a, out),
    }
}

fn build_spec(common: &Common, limit: u64) -> CliResult<ProcessSpec> {
    let target = match common.target.as_str() {
        "primes" => TargetSet::primes(limit.max(2)),
        "squares" => TargetSet::squares(),
        "fibonacci" => TargetSet::fibonacci(),
        other => match other.strip_prefix("file:") {
            Some(path) if !path.is_empty() => TargetSet::load_explicit(path)?,
            _ => {
                return Err(CliError::Usage(format!(
                    "unknown target {other:?}; expected primes, squares, fibonacci or file:<path>"
                )))
            }
        },
    };
    if common.faces < 2 {
        return Err(CliError::Usage(format!(
            "--faces must be at least 2, got {}",
            common.faces
        )));
    }
    Ok(ProcessSpec::new(common.faces, target, common.start)?)
}

fn parse_bound_pair(text: &str) -> CliResult<(BigInt, BigInt)> {
    let usage = || CliError::Usage(format!("bound {text:?} must look like L,U with integers"));
    let (l, u) = text.split_once(',').ok_or_else(usage)?;
    let l: BigInt = l.trim().parse().map_err(|_| usage())?;
    let u: BigInt = u.trim().parse().map_err(|_| usage())?;
    Ok((l, u))
}

type BoundPair = (BigInt, BigInt);

/// Boundary constants per order, with certificates for `auto`.
fn resolve_bounds(
    spec: &ProcessSpec,
    args: &ExpectArgs,
    order: usize,
) -> CliResult<(Vec<BoundPair>, Vec<BoundaryCertificate>)> {
    let auto = args.bounds.len() == 1 && args.bounds[0] == "auto";
    if !auto {
        if args.bounds.iter().any(|b| b == "auto") {
            return Err(CliError::Usage(
                "auto cannot be mixed with explicit bounds".into(),
            ));
        }
        if args.bounds.len() < order {
            return Err(CliError::Usage(format!(
                "{order} orders need {order} --bound values, got {}",
                args.bounds.len()
            )));
        }
        let pairs = args
            .bounds
            .iter()
            .take(order)
            .map(|b| parse_bound_pair(b))
            .collect::<CliResult<Vec<_>>>()?;
        return Ok((pairs, Vec::new()));
    }
    if spec.target.kind() != TargetKind::Primes {
        return Err(CliError::Usage(
            "--bound auto needs the primes target; pass L,U explicitly".into(),
        ));
    }
    let params = TailBoundParams {
        split_point: args.split,
        ..TailBoundParams::default()
    };
    let exec = args.common.exec();
    let certs = exec.map_range(order, |k| {
        boundary_bound(spec, args.cutoff, k as u32 + 1, &params, exec)
    });
    let certs = certs.into_iter().collect::<crate::Result<Vec<_>>>()?;
    let pairs = certs
        .iter()
        .map(|c| (BigInt::zero(), c.value.clone()))
        .collect();
    Ok((pairs, certs))
}

fn order_bounds(pairs: &[(BigInt, BigInt)]) -> Vec<OrderBounds> {
    pairs
        .iter()
        .map(|(l, u)| OrderBounds::new(integer(l.clone()), integer(u.clone())))
        .collect()
}

fn enclosure_json(e: &Enclosure, digits: usize) -> Value {
    let prefix = e.agreed_prefix(digits);
    json!({
        "lower": format_rational(e.lower()),
        "upper": format_rational(e.upper()),
        "agreed_digits": prefix.count,
        "value_prefix": prefix.digits,
        "width": to_scientific(&e.width(), 6),
    })
}

/// JSON number when it fits in 64 bits, string otherwise.
fn int_json(x: &BigInt) -> Value {
    use num_traits::ToPrimitive;
    match x.to_i64() {
        Some(v) => json!(v),
        None => json!(x.to_string()),
    }
}

fn sci(x: &ExactRational) -> String {
    to_scientific(x, 10)
}

fn cmd_expect(args: &ExpectArgs, out: &mut dyn Write) -> CliResult<()> {
    run_moments(args, 1, out, true)
}

fn cmd_moments(args: &ExpectArgs, out: &mut dyn Write) -> CliResult<()> {
    if args.order == 0 {
        return Err(CliError::Usage("--order must be at least 1".into()));
    }
    run_moments(args, args.order, out, false)
}

fn run_moments(
    args: &ExpectArgs,
    order: usize,
    out: &mut dyn Write,
    single: bool,
) -> CliResult<()> {
    let clock = Instant::now();
    let spec = build_spec(&args.common, args.cutoff + u64::from(args.common.faces))?;
    let (pairs, certs) = resolve_bounds(&spec, args, order)?;
    if args.mode == Mode::Float {
        return float_moments(&spec, args, &pairs, out);
    }
    let width_budget = match &args.width_budget {
        Some(t) => Some(
            parse_rational(t)
                .ok_or_else(|| CliError::Usage(format!("cannot parse width budget {t:?}")))?,
        ),
        None => None,
    };
    let opts = EncloseOptions {
        width_budget,
        exec: args.common.exec(),
    };
    let report = enclose_moments(&spec, args.cutoff, &order_bounds(&pairs), &opts)?;
    let elapsed_ms = clock.elapsed().as_millis() as u64;
    let bounds_used: Vec<Value> = pairs
        .iter()
        .map(|(l, u)| json!([int_json(l), int_json(u)]))
        .collect();
    let notes: Vec<&String> = certs.iter().flat_map(|c| &c.notes).collect();
    let label = spec.target.label().to_string();

    if single {
        let mean = report.mean();
        let prefix = mean.agreed_prefix(args.digits);
        match args.common.format {
            Format::Json => {
                let flat: Vec<Value> = pairs
                    .iter()
                    .flat_map(|(l, u)| [l, u])
                    .map(int_json)
                    .collect();
                let v = json!({
                    "target": label,
                    "faces": spec.die_faces,
                    "cutoff": args.cutoff,
                    "order": 1,
                    "lower": format_rational(mean.lower()),
                    "upper": format_rational(mean.upper()),
                    "agreed_digits": prefix.count,
                    "value_prefix": prefix.digits,
                    "survival": format_rational(&report.survival),
                    "bounds_used": flat,
                    "width": to_scientific(&mean.width(), 6),
                    "warnings": report.warnings,
                    "notes": notes,
                    "elapsed_ms": elapsed_ms,
                });
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&v).expect("serializable")
                )?;
            }
            Format::Csv => {
                writeln!(
                    out,
                    "order,agreed_digits,value_prefix,width,survival,lower_bound,upper_bound"
                )?;
                writeln!(
                    out,
                    "1,{},{},{},{},{},{}",
                    prefix.count,
                    prefix.digits,
                    sci(&mean.width()),
                    sci(&report.survival),
                    pairs[0].0,
                    pairs[0].1
                )?;
            }
            Format::Plain => {
                writeln!(out, "E[tau] = {}", prefix.digits)?;
                writeln!(out, "agreed digits: {}", prefix.count)?;
                writeln!(out, "width: {}", sci(&mean.width()))?;
                writeln!(
                    out,
                    "survival SP_N({}): {}",
                    spec.start,
                    sci(&report.survival)
                )?;
                writeln!(out, "bounds: L = {}, U = {}", pairs[0].0, pairs[0].1)?;
                for w in report.warnings.iter().chain(notes.iter().copied()) {
                    writeln!(out, "note: {w}")?;
                }
                writeln!(out, "elapsed: {elapsed_ms} ms")?;
            }
        }
        return Ok(());
    }

    match args.common.format {
        Format::Json => {
            let raw: Vec<Value> = report
                .raw
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let mut v = enclosure_json(e, args.digits);
                    v["order"] = json!(i + 1);
                    v
                })
                .collect();
            let central: Vec<Value> = report
                .central
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let mut v = enclosure_json(e, args.digits);
                    v["order"] = json!(i + 2);
                    v
                })
                .collect();
            let v = json!({
                "target": label,
                "faces": spec.die_faces,
                "cutoff": args.cutoff,
                "order": order,
                "raw": raw,
                "central": central,
                "survival": format_rational(&report.survival),
                "bounds_used": bounds_used,
                "warnings": report.warnings,
                "notes": notes,
                "elapsed_ms": elapsed_ms,
            });
            writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&v).expect("serializable")
            )?;
        }
        Format::Csv => {
            writeln!(out, "kind,order,agreed_digits,value_prefix,width")?;
            for (i, e) in report.raw.iter().enumerate() {
                let p = e.agreed_prefix(args.digits);
                writeln!(
                    out,
                    "raw,{},{},{},{}",
                    i + 1,
                    p.count,
                    p.digits,
                    sci(&e.width())
                )?;
            }
            for (i, e) in report.central.iter().enumerate() {
                let p = e.agreed_prefix(args.digits);
                writeln!(
                    out,
                    "central,{},{},{},{}",
                    i + 2,
                    p.count,
                    p.digits,
                    sci(&e.width())
                )?;
            }
        }
        Format::Plain => {
            for (i, e) in report.raw.iter().enumerate() {
                let p = e.agreed_prefix(args.digits);
                writeln!(
                    out,
                    "E[tau^{}] = {} ({} digits, width {})",
                    i + 1,
                    p.digits,
                    p.count,
                    sci(&e.width())
                )?;
            }
            let names = ["variance", "third central moment", "fourth central moment"];
            for (i, e) in report.central.iter().enumerate() {
                let p = e.agreed_prefix(args.digits);
                let name = names
                    .get(i)
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| format!("central moment {}", i + 2));
                writeln!(
                    out,
                    "{name} = {} ({} digits, width {})",
                    p.digits,
                    p.count,
                    sci(&e.width())
                )?;
            }
            writeln!(
                out,
                "survival SP_N({}): {}",
                spec.start,
                sci(&report.survival)
            )?;
            for (i, (l, u)) in pairs.iter().enumerate() {
                writeln!(out, "bounds order {}: L = {l}, U = {u}", i + 1)?;
            }
            for w in report.warnings.iter().chain(notes.iter().copied()) {
                writeln!(out, "note: {w}")?;
            }
            writeln!(out, "elapsed: {elapsed_ms} ms")?;
        }
    }
    Ok(())
}

/// Fixed-point estimates of both ends; rounding error is not bounded.
fn float_moments(
    spec: &ProcessSpec,
    args: &ExpectArgs,
    pairs: &[(BigInt, BigInt)],
    out: &mut dyn Write,
) -> CliResult<()> {
    let arithmetic = Arithmetic::Approximate {
        precision_bits: args.precision_bits,
    };
    let side = |pick: fn(&(BigInt, BigInt)) -> &BigInt| {
        let b = pairs.iter().map(|p| integer(pick(p).clone())).collect();
        let cfg = CutoffConfig::new(args.cutoff, b)
            .with_arithmetic(arithmetic)
            .with_exec(args.common.exec());
        truncated_moments(spec, &cfg)
    };
    let lo = side(|p| &p.0)?;
    let hi = side(|p| &p.1)?;
    let digits = (args.precision_bits as usize * 3 / 10)
        .saturating_sub(5)
        .min(args.digits);
    let rows: Vec<(usize, String, String)> = (1..=pairs.len())
        .map(|k| {
            (
                k,
                to_decimal(lo.moment(k), digits),
                to_decimal(hi.moment(k), digits),
            )
        })
        .collect();
    match args.common.format {
        Format::Json => {
            let v = json!({
                "target": spec.target.label(),
                "faces": spec.die_faces,
                "cutoff": args.cutoff,
                "certified": false,
                "precision_bits": args.precision_bits,
                "raw": rows.iter().map(|(k, l, u)| json!({"order": k, "lower_estimate": l, "upper_estimate": u})).collect::<Vec<_>>(),
            });
            writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&v).expect("serializable")
            )?;
        }
        Format::Csv => {
            writeln!(out, "order,lower_estimate,upper_estimate")?;
            for (k, l, u) in rows {
                writeln!(out, "{k},{l},{u}")?;
            }
        }
        Format::Plain => {
            writeln!(
                out,
                "approximate ({} bits, not certified)",
                args.precision_bits
            )?;
            for (k, l, u) in rows {
                writeln!(out, "E[tau^{k}] in [{l}, {u}]")?;
            }
        }
    }
    Ok(())
}

fn cmd_survival(args: &SurvivalArgs, out: &mut dyn Write) -> CliResult<()> {
    if args.digits == 0 {
        return Err(CliError::Usage("--digits must be at least 1".into()));
    }
    let spec = build_spec(&args.common, args.cutoff + u64::from(args.common.faces))?;
    let sp = survival_probability(&spec, args.cutoff)?;
    let text = to_scientific(&sp, args.digits);
    match args.common.format {
        Format::Json => {
            let v = json!({
                "target": spec.target.label(),
                "faces": spec.die_faces,
                "cutoff": args.cutoff,
                "start": spec.start,
                "survival": format_rational(&sp),
                "scientific": text,
            });
            writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&v).expect("serializable")
            )?;
        }
        Format::Csv => {
            writeln!(out, "cutoff,start,survival")?;
            writeln!(out, "{},{},{text}", args.cutoff, spec.start)?;
        }
        Format::Plain => writeln!(out, "SP_{}({}) = {text}", args.cutoff, spec.start)?,
    }
    Ok(())
}

fn cmd_landing(args: &LandingArgs, out: &mut dyn Write) -> CliResult<()> {
    let spec = build_spec(&args.common, args.max + 1)?;
    if args.max <= spec.start {
        return Err(CliError::Usage(format!(
            "--max must exceed the start state {}",
            spec.start
        )));
    }
    let lp = landing_profile(&spec, args.max)?;
    // rows for the first `max - start` states after the start
    let rows: Vec<(u64, ExactRational)> = lp.iter().skip(1).collect();
    match args.common.format {
        Format::Json => {
            let v: Vec<Value> = rows
                .iter()
                .map(|(n, x)| json!({"n": n, "lp": format_rational(x), "decimal": to_decimal(x, args.digits)}))
                .collect();
            writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&v).expect("serializable")
            )?;
        }
        Format::Csv | Format::Plain => {
            writeln!(out, "n,lp_rational,lp_decimal")?;
            for (n, x) in rows {
                writeln!(
                    out,
                    "{n},{},{}",
                    format_rational(&x),
                    to_decimal(&x, args.digits)
                )?;
            }
        }
    }
    Ok(())
}

fn cmd_bound(args: &BoundArgs, out: &mut dyn Write) -> CliResult<()> {
    let spec = build_spec(&args.common, args.split + 1)?;
    if spec.target.kind() != TargetKind::Primes {
        return Err(CliError::Usage(
            "boundary certificates need the primes target".into(),
        ));
    }
    if args.order == 0 {
        return Err(CliError::Usage("--order must be at least 1".into()));
    }
    let params = TailBoundParams {
        split_point: args.split,
        ..TailBoundParams::default()
    };
    let cert = boundary_bound(&spec, args.cutoff, args.order, &params, args.common.exec())?;
    let finite = to_decimal(&cert.finite, 8);
    let tail = to_scientific(&cert.tail.value, 4);
    match args.common.format {
        Format::Json => {
            let v = json!({
                "target": spec.target.label(),
                "faces": spec.die_faces,
                "cutoff": args.cutoff,
                "order": args.order,
                "split": args.split,
                "value": cert.value.to_string(),
                "finite_part": format_rational(&cert.finite),
                "finite_decimal": finite,
                "tail": format_rational(&cert.tail.value),
                "tail_scientific": tail,
                "tail_direct_terms": cert.tail.direct_terms,
                "count_base": cert.count_base,
                "notes": cert.notes,
            });
            writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&v).expect("serializable")
            )?;
        }
        Format::Csv => {
            writeln!(out, "order,value,finite_part,tail")?;
            writeln!(out, "{},{},{finite},{tail}", args.order, cert.value)?;
        }
        Format::Plain => {
            writeln!(
                out,
                "U = {} (finite part {finite}..., tail <= {tail})",
                cert.value
            )?;
            for n in &cert.notes {
                writeln!(out, "note: {n}")?;
            }
        }
    }
    Ok(())
}

fn cmd_profile(args: &ProfileArgs, out: &mut dyn Write) -> CliResult<()> {
    if args.from > args.to {
        return Err(CliError::Usage("--from must not exceed --to".into()));
    }
    let b = parse_rational(&args.boundary)
        .ok_or_else(|| CliError::Usage(format!("cannot parse boundary {:?}", args.boundary)))?;
    let spec = build_spec(&args.common, args.cutoff + u64::from(args.common.faces))?;
    let rows = expectation_profile(&spec, args.cutoff, &b, args.from, args.to)?;
    match args.common.format {
        Format::Json => {
            let v: Vec<Value> = rows
                .iter()
                .map(|(s, x)| {
                    let mut v = json!({"s": s, "decimal": to_decimal(x, args.digits)});
                    if args.rational {
                        v["rational"] = json!(format_rational(x));
                    }
                    v
                })
                .collect();
            writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&v).expect("serializable")
            )?;
        }
        Format::Csv | Format::Plain => {
            if args.rational {
                writeln!(out, "s,decimal,rational")?;
            } else {
                writeln!(out, "s,decimal")?;
            }
            for (s, x) in rows {
                if args.rational {
                    writeln!(
                        out,
                        "{s},{},{}",
                        to_decimal(&x, args.digits),
                        format_rational(&x)
                    )?;
                } else {
                    writeln!(out, "{s},{}", to_decimal(&x, args.digits))?;
                }
            }
        }
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> CliResult<()> {
    let spec = build_spec(&args.common, args.common.start + 64)?;
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let stats = monte_carlo(
        &spec,
        args.trials,
        args.seed,
        args.max_rolls,
        args.common.exec(),
    )?;
    match args.common.format {
        Format::Json => {
            writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&stats).expect("serializable")
            )?;
        }
        Format::Csv => {
            writeln!(
                out,
                "trials,completed,censored,mean,variance,third_central,fourth_central,seed"
            )?;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                stats.trials,
                stats.completed,
                stats.censored,
                stats.mean,
                stats.variance,
                stats.third_central,
                stats.fourth_central,
                stats.seed
            )?;
        }
        Format::Plain => {
            writeln!(
                out,
                "trials: {} (censored {})",
                stats.trials, stats.censored
            )?;
            writeln!(
                out,
                "mean: {:.6} +/- {:.6}",
                stats.mean,
                stats.mean_std_error()
            )?;
            writeln!(out, "variance: {:.6}", stats.variance)?;
            writeln!(out, "third central: {:.4}", stats.third_central)?;
            writeln!(out, "fourth central: {:.4}", stats.fourth_central)?;
            writeln!(out, "seed: {}", stats.seed)?;
        }
    }
    Ok(())
}

fn cmd_fib_ratio(args: &FibArgs, out: &mut dyn Write) -> CliResult<()> {
    let r = fibonacci_ratio(args.faces).map_err(|e| CliError::Usage(e.to_string()))?;
    match args.format {
        Format::Json => {
            let v = json!({"faces": r.faces, "ratio": r.ratio, "divergent": r.divergent});
            writeln!(out, "{v}")?;
        }
        Format::Csv => {
            writeln!(out, "faces,ratio,divergent")?;
            writeln!(out, "{},{},{}", r.faces, r.ratio, r.divergent)?;
        }
        Format::Plain => {
            let verdict = if r.divergent { "diverges" } else { "converges" };
            writeln!(
                out,
                "m = {}: ratio {:.6}, expectation {verdict}",
                r.faces, r.ratio
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("dicehit").chain(args.iter().copied());
        let code = run(argv, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn small_expect_plain() {
        let (code, out, _) = call(&["expect", "--cutoff", "4", "--bound", "0,412"]);
        assert_eq!(code, 0);
        assert!(out.contains("agreed digits: 0"));
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(call(&["expect"]).0, EXIT_USAGE);
        assert_eq!(call(&["nonsense"]).0, EXIT_USAGE);
        assert_eq!(
            call(&["expect", "--cutoff", "10", "--target", "squares"]).0,
            EXIT_USAGE
        );
        assert_eq!(
            call(&["expect", "--cutoff", "10", "--bound", "1"]).0,
            EXIT_USAGE
        );
        assert_eq!(call(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn computation_errors_exit_two() {
        let (code, _, err) = call(&["expect", "--cutoff", "10", "--bound", "5,1"]);
        assert_eq!(code, EXIT_COMPUTE);
        assert!(err.contains("invalid bounds"));
    }

    #[test]
    fn fib_ratio_output() {
        let (code, out, _) = call(&["fib-ratio", "--faces", "6"]);
        assert_eq!(code, 0);
        assert!(out.contains("1.155"));
        assert!(out.contains("diverges"));
    }
}

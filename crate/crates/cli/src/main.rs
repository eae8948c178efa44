//! `lab`: command line front end for the bohrlab experiments and tools.
//!
//! Exit codes: 0 pass, 1 refuted, 2 inconclusive, 3 invalid input,
//! 4 failed precondition, 5 verification failure, 6 search exhausted or not
//! combinable, 7 i/o.

use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use bohrlab::arith::{self, rat, Rational};
use bohrlab::bohr::{sqrt_set_enumerate, BohrHammingBall, Frequency, IntSet};
use bohrlab::certificates::{
    build_band_witness, combine_certificates, dilate_certificate, evens_certificate, rotation_certificate,
    search_min_m, square_certificate, verify_certificate, Certificate, DensityTarget,
};
use bohrlab::harmonic::CoefficientTable;
use bohrlab::irrational::Surd;
use bohrlab::joinings::{ideal_affine_joining, uniformize_over_joining};
use bohrlab::lab::{self, ExperimentConfig, ExperimentKind, Outcome};
use bohrlab::torus::{ApproxHammingBall, TorusPoint};
use bohrlab::weyl::{self, WeylSystem, Weight};
use bohrlab::{exec, LabError, Strategy};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "lab", version, about = "Exact finite models for recurrence experiments on tori")]
struct Cli {
    /// Run the kernels sequentially.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON configuration.
    Run {
        config: PathBuf,
        /// Overrides the configuration's output directory.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Overrides the configuration's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the experiments `run` accepts.
    ListExperiments,
    /// Bohr-Hamming sets.
    #[command(subcommand)]
    Bohr(BohrCmd),
    /// Weyl system averages.
    #[command(subcommand)]
    Weyl(WeylCmd),
    /// Three-term forms on finite groups.
    #[command(subcommand)]
    Roth(RothCmd),
    /// Nonrecurrence certificates.
    #[command(subcommand)]
    Cert(CertCmd),
}

#[derive(Subcommand)]
enum BohrCmd {
    /// Enumerate BH cap [1, N], or sqrt(BH) cap [1, N] with --sqrt.
    Enum(BohrEnum),
}

#[derive(Args)]
struct BohrEnum {
    /// Ball dimension; defaults to the number of frequencies.
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    eps: String,
    /// Comma separated frequencies (`p/q`, `sqrt(2)`, `golden`, ...). Defaults
    /// to square roots of the first r primes.
    #[arg(long, value_delimiter = ',')]
    freq: Vec<String>,
    /// Comma separated ball center; defaults to 0.
    #[arg(long, value_delimiter = ',')]
    center: Vec<String>,
    #[arg(long = "N")]
    n: u64,
    #[arg(long)]
    sqrt: bool,
    #[arg(long, default_value_t = 1_000_000_007)]
    max_q: u64,
    /// Write the set JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum WeylCmd {
    /// Trace of the weighted triple average against its L3 closed form.
    Avg(WeylAvg),
}

#[derive(Args)]
struct WeylAvg {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<String>,
    /// Frequencies of the weight; no weight (g = 1) when absent.
    #[arg(long = "freq-beta", value_delimiter = ',')]
    freq_beta: Vec<String>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Ball radius.
    #[arg(long, alias = "eps", default_value = "1/4")]
    eta: String,
    #[arg(long, default_value_t = 1)]
    ell: u64,
    #[arg(long = "N")]
    n: u64,
    #[arg(long, default_value_t = 12)]
    points: usize,
    #[arg(long, default_value_t = 1_000_000_007)]
    max_q: u64,
    /// Coefficient table of f on T^2d: JSON list of `{n, re, im}`.
    #[arg(long)]
    f: PathBuf,
    /// Write the CSV trace here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum RothCmd {
    /// Random trials of the quotient gap bound.
    Check {
        #[arg(long)]
        q: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BuildKind {
    Evens,
    Rotation,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Paper,
    Product,
}

impl From<TargetArg> for DensityTarget {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Paper => DensityTarget::Paper,
            TargetArg::Product => DensityTarget::Product,
        }
    }
}

#[derive(Subcommand)]
enum CertCmd {
    /// Verify a certificate file exhaustively.
    Verify { file: PathBuf },
    /// Build a certificate.
    Build {
        #[arg(long, value_enum)]
        kind: BuildKind,
        #[arg(long = "N")]
        n: u64,
        /// Density claim for `evens`.
        #[arg(long, default_value = "1/2")]
        delta: String,
        /// Free coordinates of the ball (rotation).
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Band density target (rotation).
        #[arg(long, default_value = "1/4")]
        eta: String,
        #[arg(long, default_value_t = 64)]
        r_max: usize,
        /// Frequencies (rotation); defaults to square roots of primes.
        #[arg(long, value_delimiter = ',')]
        freq: Vec<String>,
        #[arg(long, default_value_t = 1_000_003)]
        max_q: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Combine two certificates into one for `S1 cup m S2`.
    Combine {
        first: PathBuf,
        second: PathBuf,
        #[arg(long)]
        m: u64,
        #[arg(long, value_enum, default_value = "paper")]
        target: TargetArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Smallest m for which two certificates combine.
    SearchM {
        first: PathBuf,
        second: PathBuf,
        #[arg(long, default_value_t = 100)]
        m_max: u64,
        #[arg(long, value_enum, default_value = "paper")]
        target: TargetArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certificate for the squares of S.
    Square {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Certificate for m S.
    Dilate {
        file: PathBuf,
        #[arg(long)]
        m: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 3 } else { 0 });
        }
    };
    if let Some(n) = std::env::var("LAB_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        exec::init_threads(n);
    }
    let strategy = if cli.sequential { Strategy::Sequential } else { Strategy::Parallel };
    match dispatch(cli.command, strategy) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(error_code(&e))
        }
    }
}

fn error_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<LabError>() {
        Some(l) => lab_code(l),
        None => 3,
    }
}

fn lab_code(e: &LabError) -> u8 {
    match e {
        LabError::InvalidInput(_)
        | LabError::DimMismatch { .. }
        | LabError::UnsupportedModulus { .. }
        | LabError::Parse(_) => 3,
        LabError::Precondition(_) | LabError::EmptyDomain(_) | LabError::Degenerate(_) | LabError::NotAnnihilable(_) => 4,
        LabError::Verification(_) => 5,
        LabError::NotCombinable { .. } | LabError::Exhausted(_) => 6,
        LabError::Io(_) => 7,
        LabError::Stage { source, .. } => lab_code(source),
    }
}

fn outcome_code(o: Outcome) -> u8 {
    match o {
        Outcome::Pass => 0,
        Outcome::Refuted => 1,
        Outcome::Inconclusive => 2,
    }
}

fn dispatch(cmd: Command, strategy: Strategy) -> Result<u8> {
    match cmd {
        Command::Run { config, output, seed } => run(&config, output, seed, strategy),
        Command::ListExperiments => {
            for k in ExperimentKind::ALL {
                println!("{:<18} {}", k.name(), k.summary());
            }
            Ok(0)
        }
        Command::Bohr(BohrCmd::Enum(a)) => bohr_enum(a, strategy),
        Command::Weyl(WeylCmd::Avg(a)) => weyl_avg(a, strategy),
        Command::Roth(RothCmd::Check {
            q,
            d,
            trials,
            seed,
            out,
        }) => {
            let rows = bohrlab::roth::gap_trials(q, d, trials, seed, strategy)?;
            emit(out.as_deref(), bohrlab::roth::trials_csv(&rows).as_bytes())?;
            let bad = rows.iter().filter(|r| !r.report.ok).count();
            eprintln!("{} trials, {bad} violations", rows.len());
            Ok(if bad == 0 { 0 } else { 1 })
        }
        Command::Cert(c) => cert(c, strategy),
    }
}

fn run(path: &Path, output: Option<PathBuf>, seed: Option<u64>, strategy: Strategy) -> Result<u8> {
    let mut config = ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
    if output.is_some() {
        config.output = output;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    if strategy == Strategy::Sequential {
        config.strategy = strategy;
    }
    let report = lab::run(&config)?;
    println!("{}: {:?} in {} ms", report.experiment.name(), report.outcome, report.wall_clock_ms);
    for c in &report.checks {
        let mark = if c.passed { "ok  " } else { "FAIL" };
        let kind = if c.exact { "exact" } else { "empirical" };
        println!("  {mark} [{kind}] {} (margin {:.3e})", c.name, c.margin);
    }
    for n in &report.notes {
        println!("  note: {n}");
    }
    if let Some(dir) = &config.output {
        println!("report written to {}", dir.display());
    } else {
        println!("{}", serde_json::to_string_pretty(&report.metrics)?);
    }
    Ok(outcome_code(report.outcome))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => lab::write_atomic(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn surds(items: &[String]) -> Result<Vec<Surd>> {
    Ok(items.iter().map(|s| Surd::parse(s)).collect::<bohrlab::Result<_>>()?)
}

fn prime_roots(r: usize) -> Vec<Surd> {
    (2u64..)
        .filter(|&n| (2..n).take_while(|d| d * d <= n).all(|d| n % d != 0))
        .take(r)
        .map(Surd::sqrt)
        .collect()
}

fn frequency(items: &[Surd], max_q: u64) -> Result<Frequency> {
    if items.iter().all(Surd::is_rational) {
        let p = TorusPoint::new(items.iter().map(Surd::rational_part).collect())?;
        Ok(Frequency::from_point(&p, false)?)
    } else {
        Ok(Frequency::from_surds(items, max_q)?)
    }
}

fn parse_rat(s: &str) -> Result<Rational> {
    Ok(arith::parse_rational(s)?)
}

fn bohr_enum(a: BohrEnum, strategy: Strategy) -> Result<u8> {
    let beta = if a.freq.is_empty() {
        let Some(r) = a.r else { bail!("give --freq or --r") };
        prime_roots(r)
    } else {
        surds(&a.freq)?
    };
    if let Some(r) = a.r {
        if r != beta.len() {
            return Err(LabError::DimMismatch { expected: r, got: beta.len() }.into());
        }
    }
    let freq = frequency(&beta, a.max_q)?;
    let r = freq.dim();
    let center = if a.center.is_empty() {
        TorusPoint::zero(r)
    } else {
        let c: Vec<&str> = a.center.iter().map(String::as_str).collect();
        TorusPoint::parse(&c)?
    };
    let ball = ApproxHammingBall::new(center, a.k, parse_rat(&a.eps)?)?;
    let bh = BohrHammingBall::new(freq, ball)?;
    let set = if a.sqrt {
        sqrt_set_enumerate(&bh, a.n, strategy)?.set
    } else {
        let n = i64::try_from(a.n).context("N too large")?;
        IntSet::new(a.n, (1..=n).filter(|&i| bh.contains_i64(i)).collect())
    };
    eprintln!("{} elements in [1, {}]", set.len(), a.n);
    let mut json = serde_json::to_vec(&set)?;
    json.push(b'\n');
    emit(a.out.as_deref(), &json)?;
    Ok(0)
}

fn weyl_avg(a: WeylAvg, strategy: Strategy) -> Result<u8> {
    let alpha = surds(&a.alpha)?;
    if alpha.is_empty() {
        bail!("--alpha is required");
    }
    if let Some(d) = a.d {
        if d != alpha.len() {
            return Err(LabError::DimMismatch { expected: d, got: alpha.len() }.into());
        }
    }
    let text = std::fs::read_to_string(&a.f).with_context(|| format!("reading {}", a.f.display()))?;
    let f: CoefficientTable = serde_json::from_str(&text).map_err(LabError::from)?;
    let w = WeylSystem::new(frequency(&alpha, a.max_q)?);
    let weight = if a.freq_beta.is_empty() {
        Weight::One
    } else {
        let beta = surds(&a.freq_beta)?;
        if let Some(r) = a.r {
            if r != beta.len() {
                return Err(LabError::DimMismatch { expected: r, got: beta.len() }.into());
            }
        }
        let half: Vec<Surd> = alpha.iter().map(|x| x.scale(&rat(1, 2))).collect();
        let ell2 = i64::try_from(a.ell * a.ell).context("ell too large")?;
        let scaled: Vec<Surd> = beta.iter().map(|b| b.scale_int(ell2)).collect();
        let gamma = ideal_affine_joining(&half, &scaled).map_err(LabError::at_stage("joining"))?;
        let ball = ApproxHammingBall::new(TorusPoint::zero(beta.len()), a.k, parse_rat(&a.eta)?)?;
        let (g, rep) = uniformize_over_joining(&f, &ball, &gamma).map_err(LabError::at_stage("uniformize"))?;
        eprintln!(
            "cylinder on {:?}, residual {:.3e} (bound {:.3e})",
            g.indices(),
            rep.max_coefficient,
            rep.bound
        );
        Weight::cylinder(frequency(&beta, a.max_q)?, g, a.ell)?
    };
    let trace = weyl::weighted_average(&w, &f, &weight, &weyl::ladder(a.n, a.points.max(1)), strategy)?;
    eprintln!("model: {}", trace.meta.model);
    emit(a.out.as_deref(), trace.to_csv().as_bytes())?;
    Ok(0)
}

fn read_cert(path: &Path) -> Result<Certificate> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Certificate::read_from(BufReader::new(f)).map_err(LabError::at_stage(&path.display().to_string()))?)
}

fn write_cert(path: &Path, c: &Certificate) -> Result<()> {
    lab::write_atomic(path, &c.to_bytes())?;
    eprintln!(
        "wrote {}: N = {}, |S| = {}, |B| = {}",
        path.display(),
        c.n,
        c.s.len(),
        c.b.count()
    );
    Ok(())
}

fn cert(cmd: CertCmd, strategy: Strategy) -> Result<u8> {
    match cmd {
        CertCmd::Verify { file } => {
            let c = read_cert(&file)?;
            let v = verify_certificate(&c, strategy);
            println!("{v}");
            Ok(if v.valid { 0 } else { 5 })
        }
        CertCmd::Build {
            kind,
            n,
            delta,
            k,
            eta,
            r_max,
            freq,
            max_q,
            out,
        } => {
            let c = match kind {
                BuildKind::Evens => evens_certificate(n, parse_rat(&delta)?, strategy)?,
                BuildKind::Rotation => {
                    let band = build_band_witness(k, &parse_rat(&eta)?, r_max)?;
                    let beta = if freq.is_empty() { prime_roots(band.witness.r) } else { surds(&freq)? };
                    let f = frequency(&beta, max_q)?;
                    eprintln!(
                        "band witness r = {}, t = {}, a = {}, measure {}",
                        band.witness.r,
                        band.witness.t,
                        arith::format_rational(&band.witness.a),
                        arith::format_rational(&band.measure)
                    );
                    rotation_certificate(&band.witness, &band.ball, &f, n, strategy)?
                }
            };
            write_cert(&out, &c)?;
            Ok(0)
        }
        CertCmd::Combine {
            first,
            second,
            m,
            target,
            out,
        } => {
            let c = combine_certificates(&read_cert(&first)?, &read_cert(&second)?, m, target.into(), strategy)?;
            write_cert(&out, &c)?;
            Ok(0)
        }
        CertCmd::SearchM {
            first,
            second,
            m_max,
            target,
            out,
        } => {
            let res = search_min_m(&read_cert(&first)?, &read_cert(&second)?, m_max, target.into(), strategy)?;
            for f in &res.failures {
                let kind = if f.proven { "proven" } else { "no witness" };
                println!("m = {}: {kind}: {}", f.m, f.reason);
            }
            println!("m = {}", res.m);
            if let Some(p) = out {
                write_cert(&p, &res.certificate)?;
            }
            Ok(0)
        }
        CertCmd::Square { file, out } => {
            let c = square_certificate(&read_cert(&file)?, None, strategy)?;
            write_cert(&out, &c)?;
            Ok(0)
        }
        CertCmd::Dilate { file, m, out } => {
            let c = dilate_certificate(&read_cert(&file)?, m, strategy)?;
            write_cert(&out, &c)?;
            Ok(0)
        }
    }
}

//! Command-line front end: parses flat `key = value` configs, orchestrates
//! convergence studies, and writes report artifacts.
//!
//! Subcommands:
//!   run               convergence study along the configured axis
//!   truncation-study  noise-truncation study (forces study.axis)
//!   check-model       verify the structural conditions on the coefficients
//!   dump-noise        sample one Brownian increment tree to disk
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver/runtime error,
//! 4 order assertion failure.

mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use monospde::coefficients::check_assumptions;
use monospde::experiments::{strong_error_study, truncation_study, ErrorReport};
use monospde::noise::{dump_tree, sample_tree, QWienerSpec};
use monospde::Error as LibError;

use config::{AxisKind, RunConfig};

/// CLI-level failure, tagged with the process exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
    Assertion(String),
}

impl Failure {
    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Runtime(m) | Failure::Assertion(m) => m,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
            Failure::Assertion(_) => 4,
        }
    }
}

impl From<LibError> for Failure {
    fn from(e: LibError) -> Self {
        match e {
            LibError::Config(_) | LibError::InvalidArgument(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(format!("i/o error: {e}"))
    }
}

#[derive(Parser)]
#[command(
    name = "monospde",
    version,
    about = "Strong-convergence studies for implicit Euler and Milstein discretizations of monotone SPDEs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured convergence study and write reports
    Run(CommonArgs),
    /// Run a noise-truncation study (forces study.axis = noise-truncation)
    TruncationStudy(CommonArgs),
    /// Check the structural conditions on the drift and diffusion
    CheckModel(CommonArgs),
    /// Sample one Brownian increment tree and write it to noise.qwt
    DumpNoise(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to a `key = value` config file (defaults fill missing keys)
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Inline override, applied after --config (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Output directory (overrides out.dir)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Master seed (overrides study.seed)
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads, 0 = machine parallelism (overrides study.threads)
    #[arg(long, value_name = "N")]
    threads: Option<usize>,

    /// Fail with exit code 4 unless the fitted slope is EXPECTED±TOL
    #[arg(long = "assert-order", value_name = "EXPECTED±TOL")]
    assert_order: Option<String>,

    /// Resolve and print the effective config and plan, compute nothing
    #[arg(long)]
    dry_run: bool,
}

impl CommonArgs {
    /// Defaults, then config file, then --set pairs, then dedicated flags.
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| {
                Failure::Config(format!("cannot read config file {}: {e}", path.display()))
            })?;
            cfg.apply_text(&text)?;
        }
        for pair in &self.set {
            cfg.apply_override(pair)?;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(threads) = self.threads {
            cfg.threads = threads;
        }
        Ok(cfg)
    }
}

/// Parses `EXPECTED±TOL` (also accepting the ASCII spelling `EXPECTED+-TOL`).
fn parse_assert_order(text: &str) -> Result<(f64, f64), Failure> {
    let (lhs, rhs) = text
        .split_once('±')
        .or_else(|| text.split_once("+-"))
        .ok_or_else(|| {
            Failure::Config(format!(
                "--assert-order expects EXPECTED±TOL (e.g. 0.5±0.15), got `{text}`"
            ))
        })?;
    let expected: f64 = lhs.trim().parse().map_err(|_| {
        Failure::Config(format!("--assert-order: expected a number before ±, got `{lhs}`"))
    })?;
    let tol: f64 = rhs.trim().parse().map_err(|_| {
        Failure::Config(format!("--assert-order: expected a number after ±, got `{rhs}`"))
    })?;
    if !(tol >= 0.0) || !expected.is_finite() {
        return Err(Failure::Config(format!(
            "--assert-order: tolerance must be nonnegative and the target finite, got `{text}`"
        )));
    }
    Ok((expected, tol))
}

/// Human-readable study summary: measured orders next to the theory-expected
/// exponent for the configured axis and scheme.
fn render_summary(cfg: &RunConfig, report: &ErrorReport, elapsed_secs: f64) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "study:        {} / {}", report.axis, report.scheme);
    let _ = writeln!(
        s,
        "resolutions:  {}",
        report.resolutions.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(" ")
    );
    let _ = writeln!(
        s,
        "rms errors:   {}",
        report.errors.iter().map(|e| format!("{e:.6e}")).collect::<Vec<_>>().join(" ")
    );
    let _ = writeln!(
        s,
        "std errors:   {}",
        report.std_errors.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(" ")
    );
    let _ = writeln!(
        s,
        "fitted order: {:.4} (r2 {:.5})",
        report.fit.slope, report.fit.r2
    );
    let (expected, label) = cfg.expected_order();
    let _ = writeln!(s, "expected:     {expected} ({label}; reported, not enforced)");
    let _ = writeln!(
        s,
        "samples:      {} requested, {} failed",
        report.provenance.samples,
        report.provenance.failed_samples.len()
    );
    let _ = writeln!(s, "seed:         {}", report.provenance.master_seed);
    let _ = writeln!(s, "elapsed:      {elapsed_secs:.1} s");
    s
}

/// Per-sample error rows for external plotting: one row per surviving sample
/// per tested resolution.
fn render_raw_csv(report: &ErrorReport) -> String {
    let mut s = String::from("resolution,sample,sup_error\n");
    for (i, row) in report.raw_errors.iter().enumerate() {
        for (j, err) in row.iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", report.resolutions[i], j, err));
        }
    }
    s
}

fn cmd_run(args: &CommonArgs, force_truncation: bool) -> Result<(), Failure> {
    let mut cfg = args.resolve()?;
    if force_truncation {
        cfg.axis = AxisKind::NoiseTruncation;
    } else if cfg.axis == AxisKind::NoiseTruncation {
        return Err(Failure::Config(
            "config key `study.axis`: noise-truncation studies run under the \
             truncation-study subcommand"
                .into(),
        ));
    }
    let plan = cfg.build_plan()?;

    if args.dry_run {
        print!("{}", cfg.echo());
        println!("# resolved plan");
        println!(
            "# {} study, {} scheme, {} resolutions, {} samples, seed {}",
            cfg.axis.name(),
            plan.scheme.name(),
            cfg.resolutions.len(),
            plan.samples,
            plan.master_seed
        );
        println!("# dry run: nothing computed, nothing written");
        return Ok(());
    }

    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("config.txt"), cfg.echo())?;

    let started = Instant::now();
    let report = if force_truncation {
        truncation_study(&plan)?
    } else {
        strong_error_study(&plan)?
    };
    let elapsed = started.elapsed().as_secs_f64();

    fs::write(cfg.out_dir.join("report.json"), report.to_json())?;
    if cfg.write_csv {
        fs::write(cfg.out_dir.join("report.csv"), report.to_csv())?;
    }
    if cfg.write_raw {
        fs::write(cfg.out_dir.join("raw_errors.csv"), render_raw_csv(&report))?;
    }
    let summary = render_summary(&cfg, &report, elapsed);
    fs::write(cfg.out_dir.join("summary.txt"), &summary)?;
    print!("{summary}");

    if let Some(spec) = &args.assert_order {
        let (expected, tol) = parse_assert_order(spec)?;
        let slope = report.fit.slope;
        if (slope - expected).abs() > tol {
            return Err(Failure::Assertion(format!(
                "fitted order {slope:.4} is outside the asserted range {expected} ± {tol}"
            )));
        }
        println!("order assertion passed: {slope:.4} within {expected} ± {tol}");
    }
    Ok(())
}

fn cmd_check_model(args: &CommonArgs) -> Result<(), Failure> {
    let cfg = args.resolve()?;
    if args.dry_run {
        print!("{}", cfg.echo());
        println!("# dry run: nothing computed");
        return Ok(());
    }
    // Deliberately skips the study-level validation: the point of this
    // subcommand is to report on structurally suspect models (for example a
    // polynomial drift with positive leading coefficient), so the checker
    // gets the model even when a study would refuse it.
    let model = cfg.build_model_for_check()?;
    let report = check_assumptions(&model.drift, &model.diffusion, |_| {});
    println!("{report}");
    Ok(())
}

fn cmd_dump_noise(args: &CommonArgs) -> Result<(), Failure> {
    let cfg = args.resolve()?;
    cfg.validate()?;

    let ratio = cfg.t_final / cfg.tau;
    let coarse_steps = ratio.round();
    if coarse_steps < 1.0 || (ratio - coarse_steps).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Failure::Config(format!(
            "config keys `scheme.tau` / `scheme.t-final`: step size {} does not divide \
             the horizon {} into whole steps",
            cfg.tau, cfg.t_final
        )));
    }
    let finest_steps = (coarse_steps as usize)
        .checked_shl(cfg.noise_levels as u32 - 1)
        .ok_or_else(|| {
            Failure::Config("config key `noise.levels`: refinement overflows the step count".into())
        })?;

    let path = cfg.out_dir.join("noise.qwt");
    if args.dry_run {
        print!("{}", cfg.echo());
        println!(
            "# would sample {} modes, {} levels (coarsest {} steps of tau = {}), sample {} -> {}",
            cfg.noise_modes,
            cfg.noise_levels,
            coarse_steps as usize,
            cfg.tau,
            cfg.noise_sample,
            path.display()
        );
        println!("# dry run: nothing computed, nothing written");
        return Ok(());
    }

    let spec = QWienerSpec::with_decay(cfg.noise_modes, cfg.noise_beta)?;
    let tree = sample_tree(
        &spec,
        cfg.t_final,
        finest_steps,
        cfg.noise_levels,
        cfg.seed,
        cfg.noise_sample,
    )?;
    fs::create_dir_all(&cfg.out_dir)?;
    let mut file = fs::File::create(&path)?;
    dump_tree(&tree, &mut file)?;
    println!(
        "wrote {} ({} modes, {} levels, coarsest {} steps of tau = {}, sample {}, seed {})",
        path.display(),
        cfg.noise_modes,
        cfg.noise_levels,
        coarse_steps as usize,
        cfg.tau,
        cfg.noise_sample,
        cfg.seed
    );
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run(args) => cmd_run(args, false),
        Command::TruncationStudy(args) => cmd_run(args, true),
        Command::CheckModel(args) => cmd_check_model(args),
        Command::DumpNoise(args) => cmd_dump_noise(args),
    }
}

fn main() -> ExitCode {
    // Die quietly when a downstream pipe (head, grep, ...) closes early
    // instead of panicking on the broken-pipe write error.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assert_order_grammar() {
        assert_eq!(parse_assert_order("0.5±0.15").unwrap(), (0.5, 0.15));
        assert_eq!(parse_assert_order("1.0+-0.2").unwrap(), (1.0, 0.2));
        assert_eq!(parse_assert_order(" 2 ± 0 ").unwrap(), (2.0, 0.0));
        assert!(parse_assert_order("0.5").is_err());
        assert!(parse_assert_order("a±b").is_err());
        assert!(parse_assert_order("0.5±-0.1").is_err());
    }

    #[test]
    fn failure_exit_codes() {
        assert_eq!(Failure::Config("x".into()).exit_code(), 2);
        assert_eq!(Failure::Runtime("x".into()).exit_code(), 3);
        assert_eq!(Failure::Assertion("x".into()).exit_code(), 4);
    }

    #[test]
    fn lib_errors_map_to_exit_classes() {
        let cfg_err: Failure = LibError::Config("bad".into()).into();
        assert_eq!(cfg_err.exit_code(), 2);
        let num_err: Failure = LibError::Numeric("overflow".into()).into();
        assert_eq!(num_err.exit_code(), 3);
    }

    #[test]
    fn raw_csv_has_one_row_per_sample() {
        let json = r#"{
            "axis": "temporal", "scheme": "euler",
            "resolutions": [0.25, 0.125],
            "errors": [0.2, 0.1],
            "std_errors": [0.01, 0.005],
            "fit": {"slope": 1.0, "intercept": 0.0, "r2": 1.0},
            "raw_errors": [[0.21, 0.19], [0.11, 0.09]],
            "provenance": {
                "master_seed": 1, "samples": 2, "failed_samples": [],
                "config_digest": "00", "created_unix": 0, "version": "0"
            }
        }"#;
        let report = ErrorReport::from_json(json).expect("parse");
        let csv = render_raw_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "resolution,sample,sup_error");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "0.25,0,0.21");
        assert_eq!(lines[4], "0.125,1,0.09");
    }
}

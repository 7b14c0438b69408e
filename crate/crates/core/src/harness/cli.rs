//! Command-line entry point.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::harness::acceptance::run_suite;
use crate::harness::io::{
    format_summary, moments_of_rows, plot_series, read_rows, rows_of, write_plot,
};
use crate::harness::{
    parse_spec, resolve_seed, write_rows, write_summary, ExperimentSpec, SpecError, SEED_ENV,
};
use crate::oracle::{
    check_negative_correlation, exact_current_distribution, mean_positive_walk, walker_truncation,
};
use crate::stats::ensemble::run_ensemble;
use crate::stats::TheoryConstants;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "sseplab",
    version,
    about = "Symmetric simple exclusion simulator and verification lab"
)]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct SpecArgs {
    /// Experiment spec (`key = value` lines).
    #[arg(long)]
    spec: PathBuf,

    /// Output directory (overrides `output_dir` of the spec).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Check {
    Negcorr,
    Current,
    Walker,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Suite {
    Acceptance,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the ensemble and write rows.csv and summary.csv.
    Simulate(SpecArgs),
    /// Run an exact oracle check.
    Oracle {
        #[arg(long, value_enum)]
        check: Check,
        #[arg(long, default_value_t = 4)]
        sites: usize,
        #[arg(long, default_value_t = 1.0)]
        time: f64,
        /// Density for `--check current`.
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance suite and print PASS/FAIL per criterion.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::Acceptance)]
        suite: Suite,
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// Compare rows.csv in the output directory with the limit theory.
    Report(SpecArgs),
}

/// Failure of a command, mapped to an exit code.
#[derive(Debug)]
enum CliError {
    Usage(String),
    Internal(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Spec(s) => CliError::Usage(s.to_string()),
            Error::InvalidDensity(..) | Error::StateSpaceTooLarge { .. } => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn load_spec(args: &SpecArgs) -> Result<ExperimentSpec, CliError> {
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.spec.display())))?;
    let mut spec = parse_spec(&text)?;
    spec.seed = resolve_seed(spec.seed, std::env::var(SEED_ENV).ok().as_deref())?;
    if let Some(out) = &args.out {
        spec.output_dir = Some(out.clone());
    }
    Ok(spec)
}

fn out_dir(spec: &ExperimentSpec) -> Result<PathBuf, CliError> {
    let dir = spec
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Internal(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn io_err(path: &Path) -> impl Fn(Error) -> CliError + '_ {
    move |e| CliError::Internal(format!("{}: {e}", path.display()))
}

fn simulate(args: &SpecArgs) -> Result<i32, CliError> {
    let spec = load_spec(args)?;
    let summary = run_ensemble(&spec)?;
    let dir = out_dir(&spec)?;
    let rows_path = dir.join("rows.csv");
    write_rows(&rows_of(&summary), &rows_path).map_err(io_err(&rows_path))?;
    let summary_path = dir.join("summary.csv");
    write_summary(&summary, &summary_path).map_err(io_err(&summary_path))?;
    println!(
        "simulated {} replicates (half width {}, {} resampled) -> {}",
        summary.replicates(),
        summary.half_width,
        summary.resampled(),
        dir.display()
    );
    Ok(EXIT_OK)
}

fn oracle(
    check: Check,
    sites: usize,
    time: f64,
    rho: f64,
    out: Option<&Path>,
) -> Result<i32, CliError> {
    if !(time >= 0.0 && time.is_finite()) {
        return Err(CliError::Usage(format!(
            "--time {time} must be a nonnegative number"
        )));
    }
    let write = |name: &str, text: String| -> Result<(), CliError> {
        if let Some(dir) = out {
            fs::create_dir_all(dir).map_err(|e| CliError::Internal(e.to_string()))?;
            fs::write(dir.join(name), text).map_err(|e| CliError::Internal(e.to_string()))?;
        }
        Ok(())
    };
    match check {
        Check::Negcorr => {
            let rep = check_negative_correlation(sites, time, 1e-12)?;
            let mut csv = Vec::new();
            rep.write_csv(&mut csv)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            write("negcorr.csv", String::from_utf8(csv).expect("ascii csv"))?;
            println!(
                "negative correlation on {sites} sites at t={time}: max violation {:.3e} ({})",
                rep.max_violation,
                if rep.holds() { "holds" } else { "VIOLATED" }
            );
            Ok(if rep.holds() { EXIT_OK } else { EXIT_FAIL })
        }
        Check::Current => {
            if !(0.0..=1.0).contains(&rho) {
                return Err(CliError::Usage(format!("--rho {rho} outside [0, 1]")));
            }
            let pmf = exact_current_distribution(sites, rho, time)?;
            let mut csv = String::from("j,probability\n");
            for (i, p) in pmf.probs.iter().enumerate() {
                let j = pmf.min + i as i64;
                csv.push_str(&format!("{j},{p:.17e}\n"));
                println!("P(J = {j:>2}) = {p:.12}");
            }
            write("current_pmf.csv", csv)?;
            Ok(EXIT_OK)
        }
        Check::Walker => {
            let mean = mean_positive_walk(time, walker_truncation(time))?;
            let th = TheoryConstants::new(0.5);
            println!(
                "E[K({time})] = {mean:.12}; sqrt(t) = {:.12}; sqrt(t)/sqrt(2 pi) = {:.12}",
                time.sqrt(),
                th.k_limit * time.sqrt()
            );
            write(
                "walker.csv",
                format!(
                    "t,mean_k,sqrt_t,limit\n{time:.17e},{mean:.17e},{:.17e},{:.17e}\n",
                    time.sqrt(),
                    th.k_limit * time.sqrt()
                ),
            )?;
            Ok(if mean <= time.sqrt() {
                EXIT_OK
            } else {
                EXIT_FAIL
            })
        }
    }
}

fn verify(args: &SpecArgs) -> Result<i32, CliError> {
    let spec = load_spec(args)?;
    let report = run_suite(&spec)?;
    for c in &report.criteria {
        println!("{c}");
    }
    if let Some(dir) = &spec.output_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::Internal(e.to_string()))?;
        fs::write(dir.join("acceptance.csv"), report.to_csv())
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    Ok(if report.passed() { EXIT_OK } else { EXIT_FAIL })
}

fn report(args: &SpecArgs) -> Result<i32, CliError> {
    let spec = load_spec(args)?;
    let dir = out_dir(&spec)?;
    let rows_path = dir.join("rows.csv");
    let rows = read_rows(&rows_path).map_err(io_err(&rows_path))?;
    if rows.is_empty() {
        return Err(CliError::Usage(format!(
            "{} holds no rows",
            rows_path.display()
        )));
    }
    let moments = moments_of_rows(&rows);
    fs::write(dir.join("summary.csv"), format_summary(&moments))
        .map_err(|e| CliError::Internal(e.to_string()))?;
    println!(
        "{:<8} {:>10} {:>14} {:>12} {:>14} {:>8}",
        "series", "t", "value", "se", "theory", "ratio"
    );
    for series in plot_series(&moments, spec.rho) {
        let path = dir.join(format!("plot_{}.csv", series.name));
        write_plot(&series, &path).map_err(io_err(&path))?;
        for (t, v, se, th) in &series.points {
            let ratio = if *th != 0.0 {
                format!("{:.4}", v / th)
            } else {
                "-".into()
            };
            println!(
                "{:<8} {t:>10.4} {v:>14.6} {se:>12.6} {th:>14.6} {ratio:>8}",
                series.name
            );
        }
    }
    Ok(EXIT_OK)
}

/// Runs the command line `argv` (program name first) and returns the exit
/// code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return EXIT_USAGE;
        }
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_INTERNAL;
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Oracle {
            check,
            sites,
            time,
            rho,
            out,
        } => oracle(*check, *sites, *time, *rho, out.as_deref()),
        Command::Verify {
            suite: Suite::Acceptance,
            spec,
        } => verify(spec),
        Command::Report(args) => report(args),
    });
    match result {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INTERNAL
        }
    }
}

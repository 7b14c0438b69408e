//! Experiment specs, result files, the command line and the acceptance
//! suite.

pub mod acceptance;
pub mod cli;
pub mod io;

use std::fmt;
use std::path::PathBuf;

pub use cli::run_cli;
pub use io::{read_rows, write_rows, write_summary, ResultRow};

/// Environment variable that overrides the seed of a spec.
pub const SEED_ENV: &str = "SSEPLAB_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Simulate,
    Oracle,
    Verify,
    Report,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "simulate" => Ok(Mode::Simulate),
            "oracle" => Ok(Mode::Oracle),
            "verify" => Ok(Mode::Verify),
            "report" => Ok(Mode::Report),
            _ => Err(format!("unknown mode `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub rho: f64,
    /// Time dilation; observables are read at `lambda * t` for `t` in the grid.
    pub lambda: f64,
    pub t_grid: Vec<f64>,
    pub replicates: u64,
    pub seed: u64,
    pub window_delta: f64,
    pub retain_paths: bool,
    pub output_dir: Option<PathBuf>,
}

pub const DEFAULT_GRID: [f64; 5] = [0.0625, 0.125, 0.25, 0.5, 1.0];

impl ExperimentSpec {
    /// Spec with the default grid, `N = 1000` and `delta = 1e-9`.
    pub fn new(rho: f64, lambda: f64, seed: u64) -> Self {
        ExperimentSpec {
            mode: Mode::Simulate,
            rho,
            lambda,
            t_grid: DEFAULT_GRID.to_vec(),
            replicates: 1000,
            seed,
            window_delta: 1e-9,
            retain_paths: false,
            output_dir: None,
        }
    }

    /// The shipped desk-scale configuration.
    pub fn desk() -> Self {
        let mut s = ExperimentSpec::new(0.5, 256.0, 20240501);
        s.replicates = 4000;
        s
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let bad = |key: &str, message: String| Err(SpecError::new(0, key, message));
        if !(0.0..=1.0).contains(&self.rho) {
            return bad("rho", format!("{} is outside [0, 1]", self.rho));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda", format!("{} is not positive", self.lambda));
        }
        if self.t_grid.is_empty() {
            return bad("t_grid", "grid is empty".into());
        }
        if self.t_grid.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return bad("t_grid", "grid points must lie in (0, 1]".into());
        }
        if self.t_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("t_grid", "grid must be strictly increasing".into());
        }
        if self.replicates == 0 {
            return bad("replicates", "need at least one replicate".into());
        }
        if !(self.window_delta > 0.0 && self.window_delta < 1.0) {
            return bad(
                "window_delta",
                format!("{} is outside (0, 1)", self.window_delta),
            );
        }
        Ok(())
    }

    /// `lambda * max(t_grid)`.
    pub fn horizon(&self) -> f64 {
        self.lambda * self.t_grid.iter().copied().fold(0.0, f64::max)
    }

    /// Absolute observation times `lambda * t`.
    pub fn grid_times(&self) -> Vec<f64> {
        self.t_grid.iter().map(|t| self.lambda * t).collect()
    }
}

/// A spec problem; `line` is 0 when it does not come from a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecError {
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl SpecError {
    fn new(line: usize, key: &str, message: impl Into<String>) -> Self {
        SpecError {
            line,
            key: key.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: ", self.line)?;
        }
        if self.key.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "`{}`: {}", self.key, self.message)
        }
    }
}

impl std::error::Error for SpecError {}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, SpecError>
where
    T::Err: fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| SpecError::new(line, key, format!("cannot parse `{v}`: {e}")))
}

/// Parses flat `key = value` text. Blank lines and `#` comments are
/// ignored; `rho`, `lambda` and `seed` are required.
pub fn parse_spec(text: &str) -> Result<ExperimentSpec, SpecError> {
    let mut spec = ExperimentSpec::new(f64::NAN, f64::NAN, 0);
    let mut seen: Vec<(String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| {
            SpecError::new(line, "", format!("expected `key = value`, got `{content}`"))
        })?;
        let (key, value) = (key.trim(), value.trim());
        if let Some((_, first)) = seen.iter().find(|(k, _)| k == key) {
            return Err(SpecError::new(
                line,
                key,
                format!("duplicate key, first set on line {first}"),
            ));
        }
        seen.push((key.to_string(), line));
        match key {
            "mode" => {
                spec.mode = value
                    .parse()
                    .map_err(|e: String| SpecError::new(line, key, e))?
            }
            "rho" => {
                spec.rho = parse_value(line, key, value)?;
                if !(0.0..=1.0).contains(&spec.rho) {
                    return Err(SpecError::new(
                        line,
                        key,
                        format!("{value} is outside [0, 1]"),
                    ));
                }
            }
            "lambda" => {
                spec.lambda = parse_value(line, key, value)?;
                if !(spec.lambda > 0.0 && spec.lambda.is_finite()) {
                    return Err(SpecError::new(
                        line,
                        key,
                        format!("{value} is not positive"),
                    ));
                }
            }
            "t_grid" => {
                spec.t_grid = value
                    .split(',')
                    .map(|v| parse_value(line, key, v.trim()))
                    .collect::<Result<_, _>>()?;
            }
            "replicates" => spec.replicates = parse_value(line, key, value)?,
            "seed" => spec.seed = parse_value(line, key, value)?,
            "window_delta" => spec.window_delta = parse_value(line, key, value)?,
            "retain_paths" => spec.retain_paths = parse_value(line, key, value)?,
            "output_dir" => spec.output_dir = Some(PathBuf::from(value)),
            _ => return Err(SpecError::new(line, key, "unknown key")),
        }
    }
    for required in ["rho", "lambda", "seed"] {
        if !seen.iter().any(|(k, _)| k == required) {
            return Err(SpecError::new(
                text.lines().count() + 1,
                required,
                "missing required key",
            ));
        }
    }
    spec.validate().map_err(|mut e| {
        e.line = seen
            .iter()
            .find(|(k, _)| *k == e.key)
            .map_or(0, |(_, l)| *l);
        e
    })?;
    Ok(spec)
}

/// Seed after applying the environment override.
pub fn resolve_seed(spec_seed: u64, env: Option<&str>) -> Result<u64, SpecError> {
    match env {
        None => Ok(spec_seed),
        Some(v) => v
            .trim()
            .parse()
            .map_err(|e| SpecError::new(0, SEED_ENV, format!("cannot parse `{v}`: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_filled() {
        let s = parse_spec("rho = 0.5\nlambda = 256\nseed = 7").unwrap();
        assert_eq!(s.rho, 0.5);
        assert_eq!(s.lambda, 256.0);
        assert_eq!(s.seed, 7);
        assert_eq!(s.replicates, 1000);
        assert_eq!(s.window_delta, 1e-9);
        assert!(!s.retain_paths);
        assert_eq!(s.t_grid, DEFAULT_GRID.to_vec());
        assert_eq!(s.horizon(), 256.0);
    }

    #[test]
    fn range_error_names_key_and_line() {
        let e = parse_spec("# comment\nrho = 1.5\nlambda = 1\nseed = 1").unwrap_err();
        assert_eq!(e.line, 2);
        assert_eq!(e.key, "rho");
        assert!(e.to_string().contains("line 2") && e.to_string().contains("rho"));
    }

    #[test]
    fn grid_parsing() {
        let s =
            parse_spec("rho = 0.5\nlambda = 4\nseed = 1\nt_grid = 0.25, 0.5, 1.0 # three").unwrap();
        assert_eq!(s.t_grid, vec![0.25, 0.5, 1.0]);
        assert_eq!(s.grid_times(), vec![1.0, 2.0, 4.0]);
        let e = parse_spec("rho = 0.5\nlambda = 4\nseed = 1\nt_grid = 0.5, 0.25").unwrap_err();
        assert_eq!((e.line, e.key.as_str()), (4, "t_grid"));
        let e = parse_spec("rho = 0.5\nlambda = 4\nseed = 1\nt_grid = 0, 1").unwrap_err();
        assert_eq!(e.line, 4);
    }

    #[test]
    fn missing_unknown_and_malformed() {
        let e = parse_spec("rho = 0.5\nlambda = 4").unwrap_err();
        assert_eq!(e.key, "seed");
        let e = parse_spec("rho = 0.5\nfoo = 1").unwrap_err();
        assert_eq!((e.line, e.key.as_str()), (2, "foo"));
        let e = parse_spec("rho 0.5").unwrap_err();
        assert_eq!(e.line, 1);
        let e = parse_spec("seed = -3").unwrap_err();
        assert_eq!(e.key, "seed");
        let e = parse_spec("rho = 0.5\nrho = 0.4").unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse_spec("rho = 0.5\nlambda = 1\nseed = 1\nwindow_delta = 2").unwrap_err();
        assert_eq!((e.line, e.key.as_str()), (4, "window_delta"));
        let e = parse_spec("rho = 0.5\nlambda = 1\nseed = 1\nreplicates = 0").unwrap_err();
        assert_eq!(e.line, 4);
    }

    #[test]
    fn all_keys() {
        let s = parse_spec(
            "mode = verify\nrho = 0.25\nlambda = 64\nseed = 3\nreplicates = 12\nwindow_delta = 1e-6\nretain_paths = true\noutput_dir = out",
        )
        .unwrap();
        assert_eq!(s.mode, Mode::Verify);
        assert_eq!(s.replicates, 12);
        assert!(s.retain_paths);
        assert_eq!(s.output_dir, Some(PathBuf::from("out")));
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(5, None).unwrap(), 5);
        assert_eq!(resolve_seed(5, Some("11")).unwrap(), 11);
        assert!(resolve_seed(5, Some("x")).is_err());
    }

    #[test]
    fn desk_spec() {
        let s = ExperimentSpec::desk();
        s.validate().unwrap();
        assert_eq!(s.grid_times(), vec![16.0, 32.0, 64.0, 128.0, 256.0]);
    }
}

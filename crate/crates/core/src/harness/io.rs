//! CSV result files.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::stats::ensemble::{EnsembleSummary, Observable};
use crate::stats::{MomentAccumulator, TheoryConstants};

pub const ROWS_HEADER: &str = "replicate,t,J,X,K,M,A,resampled";
pub const SUMMARY_HEADER: &str =
    "t,observable,count,mean,se_mean,variance,se_variance,central4,central6";
pub const PLOT_HEADER: &str = "t,value,se,theory";

/// One replicate at one grid time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultRow {
    pub replicate: u64,
    pub t: f64,
    pub j: i64,
    pub x: i64,
    pub k: u64,
    pub m: f64,
    pub a: f64,
    pub resampled: bool,
}

impl ResultRow {
    pub fn value(&self, obs: Observable) -> f64 {
        match obs {
            Observable::J => self.j as f64,
            Observable::X => self.x as f64,
            Observable::K => self.k as f64,
            Observable::M => self.m,
            Observable::A => self.a,
        }
    }
}

/// Rows of `summary` ordered by replicate, then time.
pub fn rows_of(summary: &EnsembleSummary) -> Vec<ResultRow> {
    summary
        .records
        .iter()
        .flat_map(|r| {
            r.rows.iter().map(move |o| ResultRow {
                replicate: r.replicate,
                t: o.t,
                j: o.j,
                x: o.x,
                k: o.k,
                m: o.m,
                a: o.a,
                resampled: r.resamples > 0,
            })
        })
        .collect()
}

pub fn format_rows(rows: &[ResultRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(ROWS_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{:.16e},{},{},{},{:.16e},{:.16e},{}",
            r.replicate, r.t, r.j, r.x, r.k, r.m, r.a, r.resampled as u8
        )
        .expect("writing to a String");
    }
    out
}

pub fn write_rows(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(format_rows(rows).as_bytes())?;
    w.flush()?;
    Ok(())
}

fn bad_row(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Io(std::io::Error::new(
        std::io::ErrorKind::InvalidData,
        format!("rows.csv line {line}: {msg}"),
    ))
}

fn field<T: std::str::FromStr>(line: usize, name: &str, v: Option<&str>) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let v = v.ok_or_else(|| bad_row(line, format!("missing column {name}")))?;
    v.parse()
        .map_err(|e| bad_row(line, format!("{name} = `{v}`: {e}")))
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if i == 0 {
            if line != ROWS_HEADER {
                return Err(bad_row(n, format!("expected header `{ROWS_HEADER}`")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut f = line.split(',');
        let row = ResultRow {
            replicate: field(n, "replicate", f.next())?,
            t: field(n, "t", f.next())?,
            j: field(n, "J", f.next())?,
            x: field(n, "X", f.next())?,
            k: field(n, "K", f.next())?,
            m: field(n, "M", f.next())?,
            a: field(n, "A", f.next())?,
            resampled: field::<u8>(n, "resampled", f.next())? != 0,
        };
        if f.next().is_some() {
            return Err(bad_row(n, "too many columns"));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Per-time accumulators of every observable, rebuilt from rows.
pub fn moments_of_rows(rows: &[ResultRow]) -> Vec<(f64, [MomentAccumulator; 5])> {
    let mut times: Vec<f64> = rows.iter().map(|r| r.t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
        .iter()
        .map(|&t| {
            let mut acc = [MomentAccumulator::new(); 5];
            for r in rows.iter().filter(|r| r.t == t) {
                for obs in Observable::ALL {
                    acc[obs.index()].push(r.value(obs));
                }
            }
            (t, acc)
        })
        .collect()
}

pub fn format_summary(moments: &[(f64, [MomentAccumulator; 5])]) -> String {
    let mut out = String::new();
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for (t, acc) in moments {
        for obs in Observable::ALL {
            let a = &acc[obs.index()];
            writeln!(
                out,
                "{:.16e},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                t,
                obs.name(),
                a.count(),
                a.mean(),
                a.se_mean(),
                a.variance(),
                a.se_variance(),
                a.central_moment(4),
                a.central_moment(6)
            )
            .expect("writing to a String");
        }
    }
    out
}

pub fn write_summary(summary: &EnsembleSummary, path: &Path) -> Result<()> {
    let moments: Vec<(f64, [MomentAccumulator; 5])> = summary
        .grid
        .iter()
        .copied()
        .zip(summary.moments.iter().copied())
        .collect();
    fs::write(path, format_summary(&moments))?;
    Ok(())
}

/// One plot series: `(t, value, se, theory)` points.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub name: &'static str,
    pub points: Vec<(f64, f64, f64, f64)>,
}

/// Empirical curves next to their limits: `Var J`, `Var X`, `mean K`,
/// `mean J`.
pub fn plot_series(moments: &[(f64, [MomentAccumulator; 5])], rho: f64) -> Vec<PlotSeries> {
    let th = TheoryConstants::new(rho);
    let series = |name, obs: Observable, variance: bool, theory: &dyn Fn(f64) -> f64| PlotSeries {
        name,
        points: moments
            .iter()
            .map(|(t, acc)| {
                let a = &acc[obs.index()];
                if variance {
                    (*t, a.variance(), a.se_variance(), theory(*t))
                } else {
                    (*t, a.mean(), a.se_mean(), theory(*t))
                }
            })
            .collect(),
    };
    vec![
        series("var_J", Observable::J, true, &|t| th.sigma2_j * t.sqrt()),
        series("var_X", Observable::X, true, &|t| th.sigma2_x * t.sqrt()),
        series("mean_K", Observable::K, false, &|t| th.k_limit * t.sqrt()),
        series("mean_J", Observable::J, false, &|_| 0.0),
    ]
}

pub fn write_plot(series: &PlotSeries, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(PLOT_HEADER);
    out.push('\n');
    for (t, v, se, th) in &series.points {
        writeln!(out, "{t:.16e},{v:.16e},{se:.16e},{th:.16e}").expect("writing to a String");
    }
    fs::write(path, out)?;
    Ok(())
}

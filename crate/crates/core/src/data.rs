//! Target functions, sampling, and CSV dataset files.
//!
//! CSV layout: a header row of `x,y` (real), `x,re,im` (complex) or `x`
//! (locations only), then one sample per line. Values are written in the
//! shortest form that parses back to the identical `f64`.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ComplexDataset, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sine {
    pub amplitude: f64,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub terms: Vec<Sine>,
}

/// A target function on a closed domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetSpec {
    /// `10(sin x + sin 3x)` on `[-π, 0]`,
    /// `10(sin 23x + sin 137x + sin 203x)` on `(0, π]`.
    TwoPiece,
    /// `Σ a sin(ωx)` on `domain`.
    Sines { domain: [f64; 2], terms: Vec<Sine> },
    /// Pieces tiling the domain. Each piece owns its right end point
    /// (`(lo, hi]`); the first piece also owns the left end of the domain.
    Piecewise { pieces: Vec<Piece> },
}

fn sine_sum(terms: &[Sine], x: f64) -> f64 {
    terms
        .iter()
        .map(|t| t.amplitude * (t.frequency * x).sin())
        .sum()
}

fn two_piece_pieces() -> Vec<Piece> {
    let s = |a, f| Sine {
        amplitude: a,
        frequency: f,
    };
    vec![
        Piece {
            lo: -PI,
            hi: 0.0,
            terms: vec![s(10.0, 1.0), s(10.0, 3.0)],
        },
        Piece {
            lo: 0.0,
            hi: PI,
            terms: vec![s(10.0, 23.0), s(10.0, 137.0), s(10.0, 203.0)],
        },
    ]
}

impl TargetSpec {
    pub fn domain(&self) -> (f64, f64) {
        match self {
            TargetSpec::TwoPiece => (-PI, PI),
            TargetSpec::Sines { domain, .. } => (domain[0], domain[1]),
            TargetSpec::Piecewise { pieces } => (
                pieces.first().map_or(f64::NAN, |p| p.lo),
                pieces.last().map_or(f64::NAN, |p| p.hi),
            ),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_terms = |terms: &[Sine]| -> Result<()> {
            if terms
                .iter()
                .any(|t| !t.amplitude.is_finite() || !t.frequency.is_finite())
            {
                return Err(Error::Config("sine terms must be finite".into()));
            }
            Ok(())
        };
        match self {
            TargetSpec::TwoPiece => Ok(()),
            TargetSpec::Sines { domain, terms } => {
                if !(domain[0] < domain[1]) || !domain.iter().all(|d| d.is_finite()) {
                    return Err(Error::Config(format!("bad target domain {domain:?}")));
                }
                check_terms(terms)
            }
            TargetSpec::Piecewise { pieces } => {
                if pieces.is_empty() {
                    return Err(Error::Config("piecewise target has no pieces".into()));
                }
                for p in pieces {
                    if !(p.lo < p.hi) || !p.lo.is_finite() || !p.hi.is_finite() {
                        return Err(Error::Config(format!(
                            "bad piece interval [{}, {}]",
                            p.lo, p.hi
                        )));
                    }
                    check_terms(&p.terms)?;
                }
                if let Some(w) = pieces.windows(2).find(|w| w[0].hi != w[1].lo) {
                    return Err(Error::Config(format!(
                        "pieces must tile the domain: {} is followed by {}",
                        w[0].hi, w[1].lo
                    )));
                }
                Ok(())
            }
        }
    }
}

fn eval_pieces(pieces: &[Piece], x: f64) -> f64 {
    // first piece whose right end is at or beyond x
    let i = pieces.partition_point(|p| p.hi < x).min(pieces.len() - 1);
    sine_sum(&pieces[i].terms, x)
}

/// Evaluates the target at `x`, which must lie in the domain.
pub fn eval_target(spec: &TargetSpec, x: f64) -> Result<f64> {
    let (lo, hi) = spec.domain();
    if !(x >= lo && x <= hi) {
        return Err(Error::InvalidInput(format!(
            "x = {x} lies outside the target domain [{lo}, {hi}]"
        )));
    }
    Ok(match spec {
        TargetSpec::TwoPiece => eval_pieces(&two_piece_pieces(), x),
        TargetSpec::Sines { terms, .. } => sine_sum(terms, x),
        TargetSpec::Piecewise { pieces } => eval_pieces(pieces, x),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SamplingSpec {
    /// `count` equispaced points including both domain ends.
    Grid { count: usize },
    /// `count` equispaced points on `[lo, hi)`, the natural grid of a periodic DFT.
    PeriodicGrid { count: usize },
    /// `count` independent uniform draws, sorted; duplicates are redrawn.
    Random {
        count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

impl SamplingSpec {
    pub fn count(&self) -> usize {
        match *self {
            SamplingSpec::Grid { count }
            | SamplingSpec::PeriodicGrid { count }
            | SamplingSpec::Random { count, .. } => count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count() < 2 {
            return Err(Error::Config(format!(
                "sample count must be at least 2, got {}",
                self.count()
            )));
        }
        Ok(())
    }
}

/// Sample locations on `[lo, hi]`, strictly increasing.
pub fn sample_locations(lo: f64, hi: f64, s: &SamplingSpec) -> Result<Vec<f64>> {
    s.validate()?;
    let n = s.count();
    let xs = match *s {
        SamplingSpec::Grid { .. } => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
        SamplingSpec::PeriodicGrid { .. } => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / n as f64)
            .collect(),
        SamplingSpec::Random { seed, .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
            let dist = Uniform::new_inclusive(lo, hi);
            let mut xs: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
            loop {
                xs.sort_by(f64::total_cmp);
                let mut redraw = false;
                for i in 1..xs.len() {
                    if xs[i] == xs[i - 1] {
                        xs[i] = dist.sample(&mut rng);
                        redraw = true;
                    }
                }
                if !redraw {
                    break xs;
                }
            }
        }
    };
    Ok(xs)
}

/// Samples the target, sorted by `x`.
pub fn sample(spec: &TargetSpec, s: &SamplingSpec) -> Result<Dataset> {
    spec.validate()?;
    let (lo, hi) = spec.domain();
    let xs = sample_locations(lo, hi, s)?;
    let ys = xs
        .iter()
        .map(|&x| eval_target(spec, x))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(xs, ys)
}

/// Contents of a dataset CSV file, by header layout.
#[derive(Debug, Clone, PartialEq)]
pub enum CsvData {
    Points(Vec<f64>),
    Real(Dataset),
    Complex(ComplexDataset),
}

/// Reads any of the three CSV layouts.
pub fn read_csv(path: &Path) -> Result<CsvData> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let width = match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["x"] => 1,
        ["x", "y"] => 2,
        ["x", "re", "im"] => 3,
        _ => {
            return Err(Error::parse(
                path,
                1,
                format!(
                    "expected header `x`, `x,y` or `x,re,im`, found `{}`",
                    header.join(",")
                ),
            ))
        }
    };
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); width];
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != width {
            return Err(Error::parse(
                path,
                line,
                format!("expected {width} columns, found {}", record.len()),
            ));
        }
        for (col, cell) in columns.iter_mut().zip(record.iter()) {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::parse(path, line, format!("`{cell}` is not a number")))?;
            col.push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(Error::parse(path, 1, "no data rows"));
    }
    let mut columns = columns.into_iter();
    let xs = columns.next().unwrap();
    let wrap = |e: Error| Error::InvalidInput(format!("{}: {e}", path.display()));
    Ok(match width {
        1 => {
            if let Some(i) = xs.iter().position(|x| !x.is_finite()) {
                return Err(Error::parse(path, i + 2, "non-finite x"));
            }
            CsvData::Points(xs)
        }
        2 => CsvData::Real(Dataset::new(xs, columns.next().unwrap()).map_err(wrap)?),
        _ => {
            let re = columns.next().unwrap();
            let im = columns.next().unwrap();
            let ys = re
                .into_iter()
                .zip(im)
                .map(|(a, b)| Complex64::new(a, b))
                .collect();
            CsvData::Complex(Dataset::new(xs, ys).map_err(wrap)?)
        }
    })
}

/// Writes a header and rows of numbers in round-trip precision.
pub fn write_columns<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator,
    I::Item: AsRef<[f64]>,
{
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::InvalidInput(format!("{}: {other:?}", path.display())),
    };
    let mut writer = csv::Writer::from_path(path).map_err(io)?;
    writer.write_record(header).map_err(io)?;
    for row in rows {
        writer
            .write_record(row.as_ref().iter().map(|v| format!("{v:?}")))
            .map_err(io)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn save_csv(data: &Dataset, path: &Path) -> Result<()> {
    write_columns(path, &["x", "y"], data.iter().map(|(x, y)| [x, y]))
}

pub fn save_complex_csv(data: &ComplexDataset, path: &Path) -> Result<()> {
    write_columns(
        path,
        &["x", "re", "im"],
        data.iter().map(|(x, y)| [x, y.re, y.im]),
    )
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    match read_csv(path)? {
        CsvData::Real(d) => Ok(d),
        _ => Err(Error::parse(path, 1, "expected header `x,y`")),
    }
}

pub fn load_complex_csv(path: &Path) -> Result<ComplexDataset> {
    match read_csv(path)? {
        CsvData::Complex(d) => Ok(d),
        _ => Err(Error::parse(path, 1, "expected header `x,re,im`")),
    }
}

//! Discrete approximations of the unitary Fourier transform
//! `F[f](k) = (2π)^{-1/2} ∫ f(x) e^{-ikx} dx`, the loss spectrum, the
//! F-principle convergence probe, and a per-cluster frequency detector.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dataset::{ComplexDataset, Dataset};
use crate::error::{Error, Result};
use crate::kernels::{write_band_table, Band};
use crate::net::{Network, TrainConfig, Trainer};

/// Relative tolerance on grid spacing for [`dft`].
const UNIFORM_TOL: f64 = 1e-6;

/// Samples of the transform on `k_m = m Δk`, `m = -⌊N/2⌋ .. ⌈N/2⌉ - 1`
/// (ascending), of data on the grid `x_n = x0 + n Δx`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
    pub x0: f64,
    pub dx: f64,
    /// Number of leading samples that came from data; the rest are zero padding.
    pub samples: usize,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn dk(&self) -> f64 {
        2.0 * PI / (self.len() as f64 * self.dx)
    }

    /// `Σ |F(k_m)|² Δk`, equal to `Σ |f(x_n)|² Δx` (Parseval).
    pub fn energy(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.dk()
    }

    /// Fraction of the energy at `|k| <= radius`.
    pub fn energy_fraction_within(&self, radius: f64) -> f64 {
        let inside: f64 = self
            .frequencies
            .iter()
            .zip(&self.amplitudes)
            .filter(|(k, _)| k.abs() <= radius)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        inside * self.dk() / self.energy()
    }

    /// Frequency of the largest magnitude.
    pub fn peak(&self) -> f64 {
        let i = (0..self.len())
            .max_by(|&a, &b| {
                self.amplitudes[a]
                    .norm()
                    .total_cmp(&self.amplitudes[b].norm())
            })
            .unwrap_or(0);
        self.frequencies[i]
    }

    /// Inverse transform back to the (unpadded) sample grid.
    pub fn inverse(&self) -> ComplexDataset {
        let n = self.len();
        let half = n / 2;
        // undo the ascending order and the e^{-ik x0} factor
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (idx, (&k, &a)) in self.frequencies.iter().zip(&self.amplitudes).enumerate() {
            let m = (idx + n - half) % n;
            buf[m] = a * Complex64::from_polar(1.0, k * self.x0);
        }
        FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
        let scale = self.dk() / (2.0 * PI).sqrt();
        let xs = (0..self.samples)
            .map(|i| self.x0 + i as f64 * self.dx)
            .collect();
        let ys = buf[..self.samples].iter().map(|v| v * scale).collect();
        Dataset::new(xs, ys).expect("non-empty grid")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::data::write_columns(
            path,
            &["k", "re", "im", "abs"],
            self.frequencies
                .iter()
                .zip(&self.amplitudes)
                .map(|(&k, a)| [k, a.re, a.im, a.norm()]),
        )
    }
}

/// Grid spacing of uniformly spaced `xs`, or an error.
pub fn uniform_spacing(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::InvalidInput(
            "a DFT needs at least two samples".into(),
        ));
    }
    let dx = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
    let uniform = dx > 0.0
        && xs
            .iter()
            .enumerate()
            .all(|(i, &x)| (x - (xs[0] + i as f64 * dx)).abs() <= UNIFORM_TOL * dx);
    if !uniform {
        return Err(Error::InvalidInput(
            "samples are not on a uniform grid; resample them first (e.g. with detect's local fit)"
                .into(),
        ));
    }
    Ok(dx)
}

/// Unitary DFT of uniformly sampled data.
pub fn dft<T: Copy + Into<Complex64>>(data: &Dataset<T>) -> Result<Spectrum> {
    dft_padded(data, 1)
}

/// As [`dft`], after zero-extending the data to `factor` times its length,
/// which samples the same continuous transform `factor` times more finely.
pub fn dft_padded<T: Copy + Into<Complex64>>(data: &Dataset<T>, factor: usize) -> Result<Spectrum> {
    if factor == 0 {
        return Err(Error::InvalidInput(
            "padding factor must be positive".into(),
        ));
    }
    let dx = uniform_spacing(data.xs())?;
    let x0 = data.xs()[0];
    let samples = data.len();
    let n = samples * factor;
    let mut buf: Vec<Complex64> = data.ys().iter().map(|&y| y.into()).collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let dk = 2.0 * PI / (n as f64 * dx);
    let scale = dx / (2.0 * PI).sqrt();
    let mut frequencies = Vec::with_capacity(n);
    let mut amplitudes = Vec::with_capacity(n);
    for idx in 0..n {
        let m = idx as i64 - half as i64;
        let k = m as f64 * dk;
        let bin = (idx + n - half) % n;
        frequencies.push(k);
        amplitudes.push(buf[bin] * Complex64::from_polar(scale, -k * x0));
    }
    Ok(Spectrum {
        frequencies,
        amplitudes,
        x0,
        dx,
        samples,
    })
}

/// `F[f](k)` at one frequency by a left Riemann sum over sorted samples (the
/// last sample reuses the previous spacing). On a uniform grid this is exactly
/// the [`dft`] sum, so grid frequencies stay orthogonal.
pub fn transform_at(xs: &[f64], ys: &[f64], k: f64) -> Complex64 {
    let n = xs.len();
    let mut sum = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let w = if i + 1 < n {
            xs[i + 1] - xs[i]
        } else if n > 1 {
            xs[i] - xs[i - 1]
        } else {
            1.0
        };
        sum += Complex64::from_polar(w * ys[i], -k * xs[i]);
    }
    sum / (2.0 * PI).sqrt()
}

/// Spectrum `D(k)` of the pointwise error `T(x_i) - f(x_i)`.
pub fn loss_spectrum(net: &Network, target: &Dataset) -> Result<Spectrum> {
    let diff: Vec<f64> = net
        .predict(target.xs())
        .iter()
        .zip(target.ys())
        .map(|(p, y)| p - y)
        .collect();
    dft(&target.with_values(diff)?)
}

/// Per-epoch relative spectral error `|D(k)| / |F[f](k)|` at the probe frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTable {
    pub probes: Vec<f64>,
    /// Values before the first epoch.
    pub initial: Vec<f64>,
    /// One row per epoch, one column per probe.
    pub rows: Vec<Vec<f64>>,
}

impl ProbeTable {
    /// First epoch (1-based) at which the probe's error is at most half its
    /// initial value.
    pub fn halving_epoch(&self, probe: usize) -> Option<usize> {
        let start = self.initial[probe];
        self.rows
            .iter()
            .position(|r| r[probe] <= 0.5 * start)
            .map(|e| e + 1)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let names: Vec<String> = std::iter::once("epoch".to_string())
            .chain(self.probes.iter().map(|k| format!("D({k:?})")))
            .collect();
        let header: Vec<&str> = names.iter().map(String::as_str).collect();
        let rows = std::iter::once(&self.initial)
            .chain(&self.rows)
            .enumerate()
            .map(|(e, r)| {
                std::iter::once(e as f64)
                    .chain(r.iter().copied())
                    .collect::<Vec<_>>()
            });
        crate::data::write_columns(path, &header, rows)
    }
}

/// Trains `net` on `target`, recording the relative error spectrum at `probes`
/// after every epoch.
pub fn convergence_probe(
    target: &Dataset,
    probes: &[f64],
    net: Network,
    cfg: &TrainConfig,
) -> Result<ProbeTable> {
    if probes.is_empty() {
        return Err(Error::Config("no probe frequencies given".into()));
    }
    let xs = target.xs();
    let scale: f64 = {
        // |F(k)| is at most (2π)^{-1/2} ∫|f|
        let abs: Vec<f64> = target.ys().iter().map(|y| y.abs()).collect();
        transform_at(xs, &abs, 0.0).re
    };
    let reference: Vec<f64> = probes
        .iter()
        .map(|&k| transform_at(xs, target.ys(), k).norm())
        .collect();
    for (&k, &r) in probes.iter().zip(&reference) {
        if !(r > 1e-6 * scale) {
            return Err(Error::Config(format!(
                "probe frequency {k} has (near) zero magnitude in the target spectrum"
            )));
        }
    }
    let measure = |net: &Network| -> Vec<f64> {
        let diff: Vec<f64> = net
            .predict(xs)
            .iter()
            .zip(target.ys())
            .map(|(p, y)| p - y)
            .collect();
        probes
            .iter()
            .zip(&reference)
            .map(|(&k, &r)| transform_at(xs, &diff, k).norm() / r)
            .collect()
    };
    let initial = measure(&net);
    let mut trainer = Trainer::new(net, cfg);
    let mut rows = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        trainer.run_epoch(target)?;
        rows.push(measure(trainer.network()));
    }
    Ok(ProbeTable {
        probes: probes.to_vec(),
        initial,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    /// Peaks below this fraction of a cluster's largest magnitude are ignored.
    pub threshold: f64,
    /// Width Δk of the band suggested around each peak.
    pub band_width: f64,
    /// Zero-padding factor for the per-cluster DFT.
    pub padding: usize,
    /// Clusters with fewer samples are skipped.
    pub min_points: usize,
    /// Samples used by each local least-squares fit.
    pub fit_points: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            threshold: 0.05,
            band_width: 5.0,
            padding: 4,
            min_points: 16,
            fit_points: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub frequency: f64,
    pub magnitude: f64,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    /// Non-negative peak frequencies, largest magnitude first.
    pub peaks: Vec<Peak>,
    /// Suggested intervals, symmetric about zero, sorted and disjoint.
    pub bands: Vec<(f64, f64)>,
    /// Unpadded DFT bin width of each analysed cluster (NaN if skipped).
    pub bin_widths: Vec<f64>,
    pub warnings: Vec<String>,
}

impl FrequencyReport {
    /// The suggested bands as a band table for `make_bands`/`parse_band_table`.
    pub fn band_table(&self) -> Result<String> {
        let bands = self
            .bands
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| Band::characteristic(i as i64, lo, hi))
            .collect::<Result<Vec<_>>>()?;
        Ok(write_band_table(&bands))
    }
}

/// Quadratic least-squares fit through the `m` samples nearest `g`, evaluated at `g`.
fn local_fit(xs: &[f64], ys: &[f64], g: f64, m: usize) -> f64 {
    let n = xs.len();
    let m = m.min(n);
    let centre = xs.partition_point(|&x| x < g);
    let mut lo = centre.saturating_sub(m / 2);
    if lo + m > n {
        lo = n - m;
    }
    let (xw, yw) = (&xs[lo..lo + m], &ys[lo..lo + m]);
    let h = (xw[m - 1] - xw[0]).max(f64::MIN_POSITIVE);
    // normal equations in the scaled variable t = (x - g)/h
    let mut a = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    for (&x, &y) in xw.iter().zip(yw) {
        let t = (x - g) / h;
        let p = [1.0, t, t * t];
        for r in 0..3 {
            b[r] += p[r] * y;
            for c in 0..3 {
                a[r][c] += p[r] * p[c];
            }
        }
    }
    let deg = if m >= 3 { 3 } else { m };
    solve(&mut a, &mut b, deg).map_or(yw[0], |c| c[0])
}

/// Gaussian elimination with partial pivoting on the leading `n × n` block.
fn solve(a: &mut [[f64; 3]; 3], b: &mut [f64; 3], n: usize) -> Option<[f64; 3]> {
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

struct ClusterResult {
    peaks: Vec<Peak>,
    bin_width: f64,
}

fn analyse_cluster(
    xs: &[f64],
    ys: &[f64],
    cluster: usize,
    floor: f64,
    cfg: &DetectConfig,
) -> ClusterResult {
    let n = xs.len();
    let (lo, hi) = (xs[0], xs[n - 1]);
    let dx = (hi - lo) / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|i| lo + i as f64 * dx).collect();
    let mut values: Vec<f64> = grid
        .iter()
        .map(|&g| local_fit(xs, ys, g, cfg.fit_points))
        .collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    for (i, v) in values.iter_mut().enumerate() {
        let hann = 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
        *v = (*v - mean) * hann;
    }
    let spectrum =
        dft_padded(&Dataset::new(grid, values).expect("grid"), cfg.padding).expect("uniform grid");
    let bin_width = 2.0 * PI / (n as f64 * dx);
    let mags: Vec<f64> = spectrum.amplitudes.iter().map(|a| a.norm()).collect();
    let zero = spectrum.len() / 2;
    let max = mags[zero..].iter().copied().fold(0.0, f64::max);
    let mut peaks = Vec::new();
    if max <= floor {
        return ClusterResult { peaks, bin_width };
    }
    let dk = spectrum.dk();
    for i in zero..mags.len() {
        let left = if i > 0 { mags[i - 1] } else { 0.0 };
        let right = mags.get(i + 1).copied().unwrap_or(0.0);
        let m = mags[i];
        if m >= cfg.threshold * max && m >= left && m > right {
            // parabolic refinement of the peak position
            let denom = left - 2.0 * m + right;
            let offset = if i > zero && denom < 0.0 {
                0.5 * (left - right) / denom
            } else {
                0.0
            };
            peaks.push(Peak {
                frequency: (spectrum.frequencies[i] + offset * dk).max(0.0),
                magnitude: m,
                cluster,
            });
        }
    }
    ClusterResult { peaks, bin_width }
}

/// Splits the x-range into `n_clusters` equal windows, finds the spectral peaks
/// of each window, and merges them into suggested bands.
pub fn detect_frequencies(
    data: &Dataset,
    n_clusters: usize,
    cfg: &DetectConfig,
) -> Result<FrequencyReport> {
    if n_clusters == 0 {
        return Err(Error::InvalidInput("need at least one cluster".into()));
    }
    if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) || !(cfg.band_width > 0.0) || cfg.padding == 0
    {
        return Err(Error::Config("invalid detection settings".into()));
    }
    let data = data.clone().into_sorted()?;
    let (xs, ys) = (data.xs(), data.ys());
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    let width = (hi - lo) / n_clusters as f64;
    let amplitude = ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    let bounds: Vec<(usize, usize)> = (0..n_clusters)
        .map(|c| {
            let a = lo + c as f64 * width;
            let start = xs.partition_point(|&x| x < a);
            let end = if c + 1 == n_clusters {
                xs.len()
            } else {
                xs.partition_point(|&x| x < a + width)
            };
            (start, end)
        })
        .collect();
    let mut warnings = Vec::new();
    let results: Vec<Option<ClusterResult>> = bounds
        .par_iter()
        .enumerate()
        .map(|(c, &(s, e))| {
            if e - s < cfg.min_points.max(4) {
                return None;
            }
            // transform magnitudes of a full-amplitude signal scale like amplitude·length
            let floor = 1e-9 * amplitude * (xs[e - 1] - xs[s]);
            Some(analyse_cluster(&xs[s..e], &ys[s..e], c, floor, cfg))
        })
        .collect();
    let mut peaks = Vec::new();
    let mut bin_widths = Vec::new();
    for (c, r) in results.into_iter().enumerate() {
        match r {
            Some(r) => {
                bin_widths.push(r.bin_width);
                peaks.extend(r.peaks);
            }
            None => {
                bin_widths.push(f64::NAN);
                warnings.push(format!(
                    "cluster {c} has {} samples (< {}); skipped",
                    bounds[c].1 - bounds[c].0,
                    cfg.min_points
                ));
            }
        }
    }
    peaks.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude));

    let half = 0.5 * cfg.band_width;
    let mut intervals: Vec<(f64, f64)> = peaks
        .iter()
        .flat_map(|p| {
            [
                (p.frequency - half, p.frequency + half),
                (-p.frequency - half, -p.frequency + half),
            ]
        })
        .collect();
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut bands: Vec<(f64, f64)> = Vec::new();
    for (a, b) in intervals {
        match bands.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => bands.push((a, b)),
        }
    }
    Ok(FrequencyReport {
        peaks,
        bands,
        bin_widths,
        warnings,
    })
}

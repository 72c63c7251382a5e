//! Band extraction by x-space convolution and phase shifting to baseband.
//!
//! For a band window `φ_j` the band-limited part of sampled data `r` is
//!
//! ```text
//! r_j(x) = ∫ K_j(x - s) r(s) ds,    K_j(u) = (2π)^{-1/2} φ_j^∨(u) = (2π)^{-1} ∫ φ_j(k) e^{iku} dk
//! ```
//!
//! discretised over the samples inside `(x - δ, x + δ)`. Multiplying the result by
//! `e^{-iωx}` moves the band from around `ω` to around zero.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ComplexDataset, Dataset};
use crate::error::{Error, Result};
use crate::kernels::{Band, KernelKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrature {
    /// Equal weights `2δ / N_s` over the `N_s` samples in the window.
    MonteCarlo,
    /// Trapezoidal weights on the sorted samples in the window.
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvolutionPlan {
    /// Window half-width δ. `None` derives it from the kernel's decay envelope.
    pub half_width: Option<f64>,
    /// Relative kernel magnitude at which the automatic δ cuts off.
    pub tolerance: f64,
    pub quadrature: Quadrature,
    /// Windows holding fewer samples than this produce zero.
    pub min_points: usize,
}

impl Default for ConvolutionPlan {
    fn default() -> Self {
        Self {
            half_width: None,
            tolerance: 1e-3,
            quadrature: Quadrature::Trapezoid,
            min_points: 8,
        }
    }
}

impl ConvolutionPlan {
    pub fn validate(&self) -> Result<()> {
        if let Some(d) = self.half_width {
            if !(d > 0.0) {
                return Err(Error::Config(format!(
                    "convolution half-width must be positive, got {d}"
                )));
            }
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::Config(format!(
                "kernel tolerance must lie in (0, 1), got {}",
                self.tolerance
            )));
        }
        if self.min_points < 2 {
            return Err(Error::Config(
                "minimum window population must be at least 2".into(),
            ));
        }
        Ok(())
    }

    pub fn half_width_for(&self, band: &Band) -> f64 {
        self.half_width
            .unwrap_or_else(|| band.kernel.envelope_radius(self.tolerance))
    }
}

/// Output of [`extract_band`].
#[derive(Debug, Clone, PartialEq)]
pub struct BandData {
    pub data: ComplexDataset,
    /// Points whose window held fewer than `min_points` samples (set to zero).
    pub sparse_windows: usize,
    pub half_width: f64,
}

/// Separable form of `K(x - s)`: `K(u) = scale · e^{icu} · sinc(hu)^p`.
struct KernelParts {
    center: f64,
    half: f64,
    power: i32,
    scale: f64,
}

impl KernelParts {
    fn new(band: &Band) -> Self {
        let (half, power, amplitude) = match band.kind() {
            KernelKind::Characteristic => (0.5 * (band.hi - band.lo), 1, band.hi - band.lo),
            KernelKind::Bspline { order } => {
                (0.5 * band.kernel.width(), order as i32, band.kernel.width())
            }
        };
        Self {
            center: 0.5 * (band.lo + band.hi),
            half,
            power,
            scale: amplitude / (2.0 * PI),
        }
    }
}

/// Band-limited part of `residual` selected by `band`, at every sample location.
pub fn extract_band(residual: &Dataset, band: &Band, plan: &ConvolutionPlan) -> Result<BandData> {
    plan.validate()?;
    if !residual.is_sorted() {
        return Err(Error::InvalidInput(
            "band extraction needs samples sorted by x".into(),
        ));
    }
    let delta = plan.half_width_for(band);
    let xs = residual.xs();
    let n = xs.len();
    let k = KernelParts::new(band);

    // per-sample factors of the separable kernel
    let phase: Vec<(f64, f64)> = xs.iter().map(|&x| (k.center * x).sin_cos()).collect();
    let wave: Vec<(f64, f64)> = xs.iter().map(|&x| (k.half * x).sin_cos()).collect();
    let ys = residual.ys();

    let trap_weight = |s: usize, lo: usize, hi: usize| -> f64 {
        let left = if s > lo { xs[s] - xs[s - 1] } else { 0.0 };
        let right = if s + 1 < hi { xs[s + 1] - xs[s] } else { 0.0 };
        0.5 * (left + right)
    };
    let global: Vec<f64> = (0..n).map(|s| trap_weight(s, 0, n)).collect();

    let results: Vec<Option<Complex64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = xs[i];
            let lo = xs.partition_point(|&s| x - s >= delta);
            let hi = xs.partition_point(|&s| s - x < delta);
            let count = hi - lo;
            if count < plan.min_points {
                return None;
            }
            let (hs_i, hc_i) = wave[i];
            let mut acc_re = 0.0;
            let mut acc_im = 0.0;
            let mut term = |s: usize, weight: f64| {
                let u = x - xs[s];
                let (hs_s, hc_s) = wave[s];
                let t = k.half * u;
                let sinc = if t.abs() < 1e-8 {
                    1.0
                } else {
                    (hs_i * hc_s - hc_i * hs_s) / t
                };
                let v = sinc.powi(k.power) * weight * ys[s];
                let (ps, pc) = phase[s];
                acc_re += pc * v;
                acc_im -= ps * v;
            };
            match plan.quadrature {
                Quadrature::MonteCarlo => {
                    let w = 2.0 * delta / count as f64;
                    for s in lo..hi {
                        term(s, w);
                    }
                }
                Quadrature::Trapezoid => {
                    term(lo, trap_weight(lo, lo, hi));
                    for s in lo + 1..hi.saturating_sub(1) {
                        term(s, global[s]);
                    }
                    if hi - 1 > lo {
                        term(hi - 1, trap_weight(hi - 1, lo, hi));
                    }
                }
            }
            let (ps, pc) = phase[i];
            Some(Complex64::new(pc, ps) * Complex64::new(acc_re, acc_im) * k.scale)
        })
        .collect();

    let sparse_windows = results.iter().filter(|r| r.is_none()).count();
    let values = results.into_iter().map(|r| r.unwrap_or_default()).collect();
    Ok(BandData {
        data: residual.with_values(values)?,
        sparse_windows,
        half_width: delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftDirection {
    /// Multiply by `e^{-iωx}`: content near `ω` moves to zero.
    ToBaseband,
    /// Multiply by `e^{iωx}`: the inverse.
    FromBaseband,
}

pub fn phase_shift(data: &ComplexDataset, omega: f64, direction: ShiftDirection) -> ComplexDataset {
    if omega == 0.0 {
        return data.clone();
    }
    let sign = match direction {
        ShiftDirection::ToBaseband => -1.0,
        ShiftDirection::FromBaseband => 1.0,
    };
    let ys = data
        .iter()
        .map(|(x, y)| y * Complex64::from_polar(1.0, sign * omega * x))
        .collect();
    data.with_values(ys).expect("same length")
}

/// Real and imaginary parts as two real datasets on the same locations.
pub fn split_complex(data: &ComplexDataset) -> (Dataset, Dataset) {
    let re = data.ys().iter().map(|z| z.re).collect();
    let im = data.ys().iter().map(|z| z.im).collect();
    (
        data.with_values(re).expect("same length"),
        data.with_values(im).expect("same length"),
    )
}

pub fn join_complex(re: &Dataset, im: &Dataset) -> Result<ComplexDataset> {
    if re.xs() != im.xs() {
        return Err(Error::Shape(
            "real and imaginary parts sampled at different x".into(),
        ));
    }
    let ys = re
        .ys()
        .iter()
        .zip(im.ys())
        .map(|(&a, &b)| Complex64::new(a, b))
        .collect();
    re.with_values(ys)
}

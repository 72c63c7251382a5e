//! Frequency windows and their inverse Fourier transforms.
//!
//! A window `φ_j(k)` selects part of a spectrum; its inverse transform
//! `φ_j^∨(x) = (2π)^{-1/2} ∫ φ_j(k) e^{ikx} dk` is the x-space selection kernel.
//! Two families are provided:
//!
//! * characteristic windows `χ_[a,b)(k)`, whose kernels decay like `1/|x|`;
//! * centred cardinal B-splines `B_m(k/Δk - j + m/2)`, which sum to one over all
//!   integer `j` and whose kernels decay like `|x|^{-m}`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SMALL_ARG: f64 = 1e-8;

fn inv_sqrt_2pi() -> f64 {
    1.0 / (2.0 * PI).sqrt()
}

/// `sin(t)/t`, with the removable singularity filled in.
#[inline]
pub(crate) fn sinc(t: f64) -> f64 {
    if t.abs() < SMALL_ARG {
        1.0
    } else {
        t.sin() / t
    }
}

/// Cardinal B-spline `B_m(k)`: `B_1 = χ_[0,1)`, `B_m = B_{m-1} * χ_[0,1]`.
///
/// Supported on `[0, m]`. Evaluated with the de Boor style recurrence
/// `B_m(t) = (t B_{m-1}(t) + (m - t) B_{m-1}(t - 1)) / (m - 1)`.
pub fn bspline(m: usize, k: f64) -> f64 {
    assert!(m >= 1, "B-spline order must be at least 1");
    if !(0.0..m as f64).contains(&k) {
        return 0.0;
    }
    let mut vals: Vec<f64> = (0..m)
        .map(|i| {
            if (0.0..1.0).contains(&(k - i as f64)) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    for order in 2..=m {
        let denom = (order - 1) as f64;
        for i in 0..=(m - order) {
            let t = k - i as f64;
            vals[i] = (t * vals[i] + (order as f64 - t) * vals[i + 1]) / denom;
        }
    }
    vals[0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum KernelKind {
    Characteristic,
    Bspline { order: usize },
}

impl KernelKind {
    pub const CUBIC: KernelKind = KernelKind::Bspline { order: 4 };

    pub fn token(&self) -> String {
        match self {
            KernelKind::Characteristic => "chi".into(),
            KernelKind::Bspline { order } => format!("bspline{order}"),
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        if token == "chi" {
            return Some(KernelKind::Characteristic);
        }
        let order = token.strip_prefix("bspline")?.parse().ok()?;
        (order >= 1).then_some(KernelKind::Bspline { order })
    }
}

/// A window family with frequency width `Δk`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionKernel {
    kind: KernelKind,
    width: f64,
}

impl SelectionKernel {
    pub fn new(kind: KernelKind, width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::Config(format!(
                "kernel width must be positive, got {width}"
            )));
        }
        if let KernelKind::Bspline { order } = kind {
            if order == 0 {
                return Err(Error::Config("B-spline order must be at least 1".into()));
            }
        }
        Ok(Self { kind, width })
    }

    pub fn characteristic(width: f64) -> Result<Self> {
        Self::new(KernelKind::Characteristic, width)
    }

    pub fn cubic(width: f64) -> Result<Self> {
        Self::new(KernelKind::CUBIC, width)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// Frequency interval of the `j`-th mesh translate.
    ///
    /// Characteristic: `[jΔk, (j+1)Δk]`. B-spline of order m: `[(j - m/2)Δk, (j + m/2)Δk]`.
    pub fn support(&self, j: i64) -> (f64, f64) {
        let j = j as f64;
        match self.kind {
            KernelKind::Characteristic => (j * self.width, (j + 1.0) * self.width),
            KernelKind::Bspline { order } => {
                let half = order as f64 / 2.0;
                ((j - half) * self.width, (j + half) * self.width)
            }
        }
    }

    /// `φ_j(k) = φ(k/Δk - j)` with `φ = χ_[0,1)` or `φ(u) = B_m(u + m/2)`.
    pub fn phi_k(&self, j: i64, k: f64) -> f64 {
        let u = k / self.width - j as f64;
        match self.kind {
            KernelKind::Characteristic => {
                if (0.0..1.0).contains(&u) {
                    1.0
                } else {
                    0.0
                }
            }
            KernelKind::Bspline { order } => bspline(order, u + order as f64 / 2.0),
        }
    }

    /// Inverse Fourier transform of `φ_j`.
    pub fn phi_x(&self, j: i64, x: f64) -> Complex64 {
        let (lo, hi) = self.support(j);
        window_inverse(self.kind, self.width, lo, hi, x)
    }

    /// Radius beyond which `|φ^∨(x)| / |φ^∨(0)|` stays below `tol`, from the
    /// decay envelope `(2 / (Δk |x|))^p` (`p = 1` characteristic, `p = m` spline).
    pub fn envelope_radius(&self, tol: f64) -> f64 {
        let power = match self.kind {
            KernelKind::Characteristic => 1.0,
            KernelKind::Bspline { order } => order as f64,
        };
        2.0 / (self.width * tol.powf(1.0 / power))
    }
}

fn window_inverse(kind: KernelKind, width: f64, lo: f64, hi: f64, x: f64) -> Complex64 {
    let center = 0.5 * (lo + hi);
    let phase = Complex64::from_polar(1.0, center * x);
    let magnitude = match kind {
        KernelKind::Characteristic => (hi - lo) * sinc(0.5 * (hi - lo) * x),
        KernelKind::Bspline { order } => width * sinc(0.5 * width * x).powi(order as i32),
    };
    phase * (magnitude * inv_sqrt_2pi())
}

/// One frequency band: a window over `[lo, hi]` and the frequency `shift`
/// used to move it to baseband.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub index: i64,
    pub shift: f64,
    pub kernel: SelectionKernel,
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    /// `χ_[lo,hi)` shifted by its midpoint.
    pub fn characteristic(index: i64, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!(
                "degenerate band interval [{lo}, {hi}]"
            )));
        }
        Ok(Self {
            index,
            shift: 0.5 * (lo + hi),
            kernel: SelectionKernel::characteristic(hi - lo)?,
            lo,
            hi,
        })
    }

    /// The `j`-th translate of a mesh, shifted by `ω_j = jΔk`.
    pub fn mesh(kernel: SelectionKernel, j: i64) -> Self {
        let (lo, hi) = kernel.support(j);
        Self {
            index: j,
            shift: j as f64 * kernel.width(),
            kernel,
            lo,
            hi,
        }
    }

    pub fn kind(&self) -> KernelKind {
        self.kernel.kind()
    }

    pub fn phi_k(&self, k: f64) -> f64 {
        match self.kernel.kind() {
            KernelKind::Characteristic => {
                if k >= self.lo && k < self.hi {
                    1.0
                } else {
                    0.0
                }
            }
            KernelKind::Bspline { order } => {
                let center = 0.5 * (self.lo + self.hi);
                bspline(
                    order,
                    (k - center) / self.kernel.width() + order as f64 / 2.0,
                )
            }
        }
    }

    pub fn phi_x(&self, x: f64) -> Complex64 {
        window_inverse(self.kernel.kind(), self.kernel.width(), self.lo, self.hi, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum BandLayout {
    /// Translates `j` of one kernel covering `[-mΔk, mΔk]`, boundary splines included.
    Mesh {
        m: usize,
        width: f64,
        #[serde(default = "default_mesh_kind")]
        kernel: KernelKind,
    },
    /// One characteristic band per interval, shifted by its midpoint.
    Explicit { intervals: Vec<(f64, f64)> },
}

fn default_mesh_kind() -> KernelKind {
    KernelKind::CUBIC
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BandSet {
    pub bands: Vec<Band>,
    pub warnings: Vec<String>,
}

pub fn make_bands(layout: &BandLayout) -> Result<BandSet> {
    match layout {
        BandLayout::Mesh { m, width, kernel } => {
            if *m == 0 {
                return Err(Error::Config("mesh needs m >= 1".into()));
            }
            let kernel = SelectionKernel::new(*kernel, *width)?;
            let m = *m as i64;
            let range = match kernel.kind() {
                KernelKind::Characteristic => -m..m,
                KernelKind::Bspline { order } => {
                    // every translate whose open support meets (-m, m) in units of Δk
                    let half = order as f64 / 2.0;
                    let first = (-(m as f64) - half).floor() as i64 + 1;
                    let last = ((m as f64) + half).ceil() as i64 - 1;
                    first..last + 1
                }
            };
            Ok(BandSet {
                bands: range.map(|j| Band::mesh(kernel, j)).collect(),
                warnings: Vec::new(),
            })
        }
        BandLayout::Explicit { intervals } => {
            let bands = intervals
                .iter()
                .enumerate()
                .map(|(i, &(lo, hi))| Band::characteristic(i as i64, lo, hi))
                .collect::<Result<Vec<_>>>()?;
            let mut warnings = Vec::new();
            for (i, a) in bands.iter().enumerate() {
                for b in &bands[i + 1..] {
                    if a.lo < b.hi && b.lo < a.hi {
                        warnings.push(format!(
                            "bands {} [{}, {}] and {} [{}, {}] overlap; windows no longer sum to one",
                            a.index, a.lo, a.hi, b.index, b.lo, b.hi
                        ));
                    }
                }
            }
            Ok(BandSet { bands, warnings })
        }
    }
}

/// Plain-text band table, one band per line: `index kind omega lo hi`.
pub fn write_band_table(bands: &[Band]) -> String {
    let mut out = String::from("# index kind omega lo hi\n");
    for b in bands {
        let _ = writeln!(
            out,
            "{} {} {:?} {:?} {:?}",
            b.index,
            b.kind().token(),
            b.shift,
            b.lo,
            b.hi
        );
    }
    out
}

pub fn parse_band_table(text: &str, path: &Path) -> Result<Vec<Band>> {
    let mut bands = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::parse(path, n + 1, msg);
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(err(format!("expected 5 fields, got {}", fields.len())));
        }
        let index: i64 = fields[0]
            .parse()
            .map_err(|e| err(format!("bad index `{}`: {e}", fields[0])))?;
        let kind = KernelKind::from_token(fields[1])
            .ok_or_else(|| err(format!("unknown kernel kind `{}`", fields[1])))?;
        let mut nums = [0.0; 3];
        for (slot, tok) in nums.iter_mut().zip(&fields[2..]) {
            *slot = tok
                .parse()
                .map_err(|e| err(format!("bad number `{tok}`: {e}")))?;
        }
        let [shift, lo, hi] = nums;
        if !(lo < hi) {
            return Err(err(format!("degenerate interval [{lo}, {hi}]")));
        }
        let width = match kind {
            KernelKind::Characteristic => hi - lo,
            KernelKind::Bspline { order } => (hi - lo) / order as f64,
        };
        let kernel = SelectionKernel::new(kind, width).map_err(|e| err(e.to_string()))?;
        bands.push(Band {
            index,
            shift,
            kernel,
            lo,
            hi,
        });
    }
    Ok(bands)
}

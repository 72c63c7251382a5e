//! Paired samples `(x_i, y_i)` with real or complex targets.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Samples of a 1-D function. `ys` is `f64` for ordinary data and [`Complex64`]
/// for band-extracted data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T = f64> {
    xs: Vec<f64>,
    ys: Vec<T>,
    sorted: bool,
}

pub type ComplexDataset = Dataset<Complex64>;

impl<T: Copy> Dataset<T> {
    /// Builds a dataset, rejecting empty or mismatched inputs and non-finite
    /// sample locations. The sorted flag is set when `xs` is strictly increasing.
    pub fn new(xs: Vec<f64>, ys: Vec<T>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::InvalidInput(format!(
                "{} sample locations but {} values",
                xs.len(),
                ys.len()
            )));
        }
        if xs.is_empty() {
            return Err(Error::InvalidInput("dataset is empty".into()));
        }
        if let Some(i) = xs.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite x at index {i}")));
        }
        let sorted = xs.windows(2).all(|w| w[0] < w[1]);
        Ok(Self { xs, ys, sorted })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[T] {
        &self.ys
    }

    /// Whether `xs` is strictly increasing.
    pub fn is_sorted(&self) -> bool {
        self.sorted
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, T)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    /// Same sample locations, new values.
    pub fn with_values<U: Copy>(&self, ys: Vec<U>) -> Result<Dataset<U>> {
        if ys.len() != self.xs.len() {
            return Err(Error::Shape(format!(
                "expected {} values, got {}",
                self.xs.len(),
                ys.len()
            )));
        }
        Ok(Dataset {
            xs: self.xs.clone(),
            ys,
            sorted: self.sorted,
        })
    }

    /// Sorts by `x`. Fails if two samples share a location.
    pub fn into_sorted(self) -> Result<Self> {
        if self.sorted {
            return Ok(self);
        }
        let mut pairs: Vec<(f64, T)> = self.xs.into_iter().zip(self.ys).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (xs, ys): (Vec<f64>, Vec<T>) = pairs.into_iter().unzip();
        let out = Self::new(xs, ys)?;
        if !out.sorted {
            return Err(Error::InvalidInput("duplicate sample locations".into()));
        }
        Ok(out)
    }
}

impl Dataset<f64> {
    /// `(x_i, f(x_i))` for every `x_i`.
    pub fn from_fn(xs: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let ys = xs.iter().map(|&x| f(x)).collect();
        Self::new(xs, ys)
    }
}

/// Relative L2 error `||pred - truth|| / ||truth||`.
///
/// Falls back to the absolute norm when `truth` is identically zero.
pub fn relative_l2(pred: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(pred.len(), truth.len());
    let num: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    let den: f64 = truth.iter().map(|t| t * t).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

pub fn mean_squared_error(pred: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(pred.len(), truth.len());
    assert!(!pred.is_empty());
    pred.iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64
}

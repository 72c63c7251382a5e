//! The PhaseDNN orchestrator: base fit, residual, per-band extraction, shift and
//! twin-network training, additive assembly and recursion.
//!
//! A trained band pair `(T_re, T_im)` approximates the shifted band
//! `r_j(x) e^{-iω_j x}`, so its contribution to the model is
//! `Re[e^{iω_j x} (T_re(x) + i T_im(x))] = T_re cos ω_j x − T_im sin ω_j x`.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bands::{extract_band, phase_shift, split_complex, ConvolutionPlan, ShiftDirection};
use crate::dataset::{mean_squared_error, relative_l2, Dataset};
use crate::error::{Error, Result};
use crate::kernels::{parse_band_table, write_band_table, Band};
use crate::net::{train, AdamConfig, LayerSpec, Network, TrainConfig, TrainReport};

/// Network shape and epoch budget for one role (base or band).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSettings {
    pub widths: LayerSpec,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// `epochs = 0` skips base training; the base is then identically zero.
    pub base: NetSettings,
    pub band: NetSettings,
    pub adam: AdamConfig,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub bands: Vec<Band>,
    pub convolution: ConvolutionPlan,
    pub rounds: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        self.convolution.validate()
    }

    fn train_config(&self, epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: self.batch_size,
            adam: self.adam,
            seed,
        }
    }
}

/// Which network of a run a seed belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetRole {
    Base,
    BandReal { round: usize, slot: usize },
    BandImag { round: usize, slot: usize },
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic seed for a network, independent of scheduling order.
/// Returns `(initialisation seed, shuffling seed)`.
pub fn derive_seeds(seed: u64, role: NetRole) -> (u64, u64) {
    let tags: [u64; 3] = match role {
        NetRole::Base => [0, 0, 0],
        NetRole::BandReal { round, slot } => [1 + round as u64, slot as u64, 0],
        NetRole::BandImag { round, slot } => [1 + round as u64, slot as u64, 1],
    };
    let h = tags.iter().fold(splitmix(seed), |h, &t| splitmix(h ^ t));
    (splitmix(h ^ 0x1), splitmix(h ^ 0x2))
}

/// One trained band: the window and its real/imaginary networks.
#[derive(Debug, Clone, PartialEq)]
pub struct BandTerm {
    pub band: Band,
    pub round: usize,
    pub real: Network,
    pub imag: Network,
}

impl BandTerm {
    /// `e^{iωx} (T_re(x) + i T_im(x))`.
    pub fn value(&self, x: f64) -> Complex64 {
        Complex64::from_polar(1.0, self.band.shift * x)
            * Complex64::new(self.real.forward(x), self.imag.forward(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDnnModel {
    pub base: Network,
    pub terms: Vec<BandTerm>,
    pub rounds: usize,
}

impl PhaseDnnModel {
    pub fn base_only(base: Network) -> Self {
        Self {
            base,
            terms: Vec::new(),
            rounds: 0,
        }
    }

    /// `base(x) + Σ e^{iω_j x} (T_re(x) + i T_im(x))` over all terms.
    pub fn evaluate_complex(&self, x: f64) -> Complex64 {
        self.terms
            .iter()
            .fold(Complex64::new(self.base.forward(x), 0.0), |acc, t| {
                acc + t.value(x)
            })
    }

    /// Real part of the assembled sum.
    pub fn evaluate(&self, x: f64) -> f64 {
        self.evaluate_complex(x).re
    }

    /// Imaginary part discarded by [`evaluate`](Self::evaluate).
    pub fn imaginary_residue(&self, x: f64) -> f64 {
        self.evaluate_complex(x).im
    }

    pub fn predict(&self, xs: &[f64]) -> Vec<f64> {
        xs.par_iter().map(|&x| self.evaluate(x)).collect()
    }

    /// Writes `manifest.txt`, `bands.txt` and one text file per network.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = format!("phasednn-bundle 1\nrounds {}\nbase base.net\n", self.rounds);
        self.base.save(dir.join("base.net"))?;
        for (i, t) in self.terms.iter().enumerate() {
            let re = format!("band-{i:03}-re.net");
            let im = format!("band-{i:03}-im.net");
            t.real.save(dir.join(&re))?;
            t.imag.save(dir.join(&im))?;
            let _ = writeln!(manifest, "term {} {re} {im}", t.round);
        }
        let bands: Vec<Band> = self.terms.iter().map(|t| t.band).collect();
        write_file(&dir.join("bands.txt"), &write_band_table(&bands))?;
        write_file(&dir.join("manifest.txt"), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.txt");
        let text =
            std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let bands_path = dir.join("bands.txt");
        let band_text =
            std::fs::read_to_string(&bands_path).map_err(|e| Error::io(&bands_path, e))?;
        let bands = parse_band_table(&band_text, &bands_path)?;
        let mut lines = text.lines().enumerate();
        let err = |line: usize, msg: &str| Error::parse(&manifest_path, line + 1, msg);
        match lines.next() {
            Some((_, "phasednn-bundle 1")) => {}
            _ => return Err(err(0, "expected `phasednn-bundle 1`")),
        }
        let mut rounds = None;
        let mut base = None;
        let mut terms = Vec::new();
        for (n, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[..] {
                [] => {}
                ["rounds", r] => rounds = Some(r.parse().map_err(|_| err(n, "bad round count"))?),
                ["base", file] => base = Some(Network::load(dir.join(file))?),
                ["term", round, re, im] => {
                    let band = *bands
                        .get(terms.len())
                        .ok_or_else(|| err(n, "more terms than rows in bands.txt"))?;
                    terms.push(BandTerm {
                        band,
                        round: round.parse().map_err(|_| err(n, "bad round"))?,
                        real: Network::load(dir.join(re))?,
                        imag: Network::load(dir.join(im))?,
                    });
                }
                _ => return Err(err(n, "unrecognised manifest line")),
            }
        }
        if terms.len() != bands.len() {
            return Err(Error::InvalidInput(format!(
                "{}: {} bands but {} terms",
                dir.display(),
                bands.len(),
                terms.len()
            )));
        }
        Ok(Self {
            base: base.ok_or_else(|| err(0, "no base network"))?,
            terms,
            rounds: rounds.ok_or_else(|| err(0, "no round count"))?,
        })
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Trains the base network for `cfg.base.epochs`; zero epochs give the zero network.
pub fn train_base(data: &Dataset, cfg: &RunConfig) -> Result<(Network, TrainReport)> {
    let spec = cfg.base.widths.clone();
    if cfg.base.epochs == 0 {
        return Ok((
            Network::zeros(spec),
            TrainReport {
                losses: Vec::new(),
                seconds: 0.0,
                epochs: 0,
            },
        ));
    }
    let (init, shuffle) = derive_seeds(cfg.seed, NetRole::Base);
    let mut net = Network::seeded(spec, init);
    let report = train(&mut net, data, &cfg.train_config(cfg.base.epochs, shuffle))?;
    Ok((net, report))
}

/// `r_i = y_i − evaluate(model, x_i)`.
pub fn residual(data: &Dataset, model: &PhaseDnnModel) -> Dataset {
    let pred = model.predict(data.xs());
    let r = data.ys().iter().zip(&pred).map(|(y, p)| y - p).collect();
    data.with_values(r).expect("same length")
}

/// Result of training one band.
#[derive(Debug, Clone)]
pub struct BandOutcome {
    pub term: BandTerm,
    pub conv_seconds: f64,
    pub real: TrainReport,
    pub imag: TrainReport,
    pub sparse_windows: usize,
}

/// Extract → shift to baseband → split → train the two networks concurrently.
pub fn train_band(
    residual: &Dataset,
    band: &Band,
    cfg: &RunConfig,
    round: usize,
    slot: usize,
) -> Result<BandOutcome> {
    let start = Instant::now();
    let extracted = extract_band(residual, band, &cfg.convolution)?;
    let shifted = phase_shift(&extracted.data, band.shift, ShiftDirection::ToBaseband);
    let (re_data, im_data) = split_complex(&shifted);
    let conv_seconds = start.elapsed().as_secs_f64();

    let fit = |data: &Dataset, role: NetRole| -> Result<(Network, TrainReport)> {
        let (init, shuffle) = derive_seeds(cfg.seed, role);
        let mut net = Network::seeded(cfg.band.widths.clone(), init);
        let report = train(&mut net, data, &cfg.train_config(cfg.band.epochs, shuffle))?;
        Ok((net, report))
    };
    let (re, im) = rayon::join(
        || fit(&re_data, NetRole::BandReal { round, slot }),
        || fit(&im_data, NetRole::BandImag { round, slot }),
    );
    let (real, real_report) = re?;
    let (imag, imag_report) = im?;
    Ok(BandOutcome {
        term: BandTerm {
            band: *band,
            round,
            real,
            imag,
        },
        conv_seconds,
        real: real_report,
        imag: imag_report,
        sparse_windows: extracted.sparse_windows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub mse: f64,
    pub rel_l2: f64,
}

impl ErrorMetrics {
    pub fn of(pred: &[f64], truth: &[f64]) -> Self {
        Self {
            mse: mean_squared_error(pred, truth),
            rel_l2: relative_l2(pred, truth),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub round: usize,
    pub index: i64,
    pub kernel: String,
    pub lo: f64,
    pub hi: f64,
    pub shift: f64,
    pub conv_seconds: f64,
    /// Sum of the two networks' training times.
    pub train_seconds: f64,
    pub real_loss: Option<f64>,
    pub imag_loss: Option<f64>,
    pub sparse_windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseRow {
    pub epochs: usize,
    pub train_seconds: f64,
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub conv_seconds: f64,
    pub train_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub round: usize,
    /// Relative L2 norm of the training residual before and after the round.
    pub residual_before: f64,
    pub residual_after: f64,
}

/// Timing and error statistics of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub status: String,
    pub base: BaseRow,
    pub bands: Vec<BandRow>,
    /// Base training plus every band row.
    pub totals: Totals,
    pub rounds: Vec<RoundRow>,
    pub train: Option<ErrorMetrics>,
    pub test: Option<ErrorMetrics>,
    /// Mean |imaginary residue| over the training points divided by mean |f|.
    pub imaginary_residue: Option<f64>,
    pub wall_seconds: f64,
}

impl RunReport {
    fn new(base: BaseRow) -> Self {
        Self {
            status: "running".into(),
            totals: Totals {
                conv_seconds: 0.0,
                train_seconds: base.train_seconds,
            },
            base,
            bands: Vec::new(),
            rounds: Vec::new(),
            train: None,
            test: None,
            imaginary_residue: None,
            wall_seconds: 0.0,
        }
    }

    fn push_band(&mut self, row: BandRow) {
        self.totals.conv_seconds += row.conv_seconds;
        self.totals.train_seconds += row.train_seconds;
        self.bands.push(row);
    }

    /// Plain-text table: one row per network with timings and final losses.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>5} {:>6} {:>9} {:>9} {:>9} {:>10} {:>10} {:>12} {:>12}",
            "round", "band", "lo", "hi", "omega", "conv(s)", "train(s)", "loss(re)", "loss(im)"
        );
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4e}"));
        let _ = writeln!(
            out,
            "{:>5} {:>6} {:>9} {:>9} {:>9} {:>10} {:>10.3} {:>12} {:>12}",
            "-",
            "base",
            "-",
            "-",
            "-",
            "-",
            self.base.train_seconds,
            opt(self.base.loss),
            "-"
        );
        for b in &self.bands {
            let _ = writeln!(
                out,
                "{:>5} {:>6} {:>9.3} {:>9.3} {:>9.3} {:>10.3} {:>10.3} {:>12} {:>12}",
                b.round,
                b.index,
                b.lo,
                b.hi,
                b.shift,
                b.conv_seconds,
                b.train_seconds,
                opt(b.real_loss),
                opt(b.imag_loss)
            );
        }
        let _ = writeln!(
            out,
            "{:>5} {:>6} {:>9} {:>9} {:>9} {:>10.3} {:>10.3}",
            "", "total", "", "", "", self.totals.conv_seconds, self.totals.train_seconds
        );
        for (name, m) in [("training", self.train), ("test", self.test)] {
            if let Some(m) = m {
                let _ = writeln!(
                    out,
                    "{name} error: relative L2 {:.5}, MSE {:.5e}",
                    m.rel_l2, m.mse
                );
            }
        }
        if let Some(r) = self.imaginary_residue {
            let _ = writeln!(out, "imaginary residue (mean |Im| / mean |f|): {r:.3e}");
        }
        let _ = writeln!(out, "status: {}", self.status);
        out
    }
}

/// A failed run: the error and the report up to the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: Box<RunReport>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for RunFailure {}

fn imaginary_ratio(model: &PhaseDnnModel, data: &Dataset) -> f64 {
    // evaluate in parallel but sum in order, so the result is independent of the worker count
    let parts: Vec<f64> = data
        .xs()
        .par_iter()
        .map(|&x| model.imaginary_residue(x).abs())
        .collect();
    let im: f64 = parts.iter().sum();
    let f: f64 = data.ys().iter().map(|y| y.abs()).sum();
    if f > 0.0 {
        im / f
    } else {
        im / data.len() as f64
    }
}

/// The full PhaseDNN flow on sorted training data, with optional test data.
pub fn run(
    data: &Dataset,
    test: Option<&Dataset>,
    cfg: &RunConfig,
) -> std::result::Result<(PhaseDnnModel, RunReport), RunFailure> {
    let wall = Instant::now();
    let fail = |error: Error, mut report: RunReport| {
        report.status = format!("failed: {error}");
        report.wall_seconds = wall.elapsed().as_secs_f64();
        RunFailure {
            error,
            partial: Box::new(report),
        }
    };
    let empty = RunReport::new(BaseRow {
        epochs: cfg.base.epochs,
        train_seconds: 0.0,
        loss: None,
    });
    if let Err(e) = cfg.validate() {
        return Err(fail(e, empty));
    }
    if !data.is_sorted() {
        return Err(fail(
            Error::InvalidInput("training data must be sorted by x".into()),
            empty,
        ));
    }
    let (base, base_report) = match train_base(data, cfg) {
        Ok(r) => r,
        Err(e) => return Err(fail(e, empty)),
    };
    let mut report = RunReport::new(BaseRow {
        epochs: cfg.base.epochs,
        train_seconds: base_report.seconds,
        loss: base_report.final_loss(),
    });
    let mut model = PhaseDnnModel::base_only(base);
    let l2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm = |r: &Dataset| l2(r.ys()) / l2(data.ys());
    for round in 0..cfg.rounds {
        let before = residual(data, &model);
        let outcomes: Vec<Result<BandOutcome>> = cfg
            .bands
            .par_iter()
            .enumerate()
            .map(|(slot, band)| train_band(&before, band, cfg, round, slot))
            .collect();
        let mut failure = None;
        for outcome in outcomes {
            match outcome {
                Ok(o) => {
                    report.push_band(BandRow {
                        round,
                        index: o.term.band.index,
                        kernel: o.term.band.kind().token(),
                        lo: o.term.band.lo,
                        hi: o.term.band.hi,
                        shift: o.term.band.shift,
                        conv_seconds: o.conv_seconds,
                        train_seconds: o.real.seconds + o.imag.seconds,
                        real_loss: o.real.final_loss(),
                        imag_loss: o.imag.final_loss(),
                        sparse_windows: o.sparse_windows,
                    });
                    model.terms.push(o.term);
                }
                Err(e) => {
                    failure.get_or_insert(e);
                }
            }
        }
        if let Some(e) = failure {
            return Err(fail(e, report));
        }
        model.rounds = round + 1;
        let after = residual(data, &model);
        report.rounds.push(RoundRow {
            round,
            residual_before: norm(&before),
            residual_after: norm(&after),
        });
    }
    report.train = Some(ErrorMetrics::of(&model.predict(data.xs()), data.ys()));
    report.test = test.map(|t| ErrorMetrics::of(&model.predict(t.xs()), t.ys()));
    report.imaginary_residue = Some(imaginary_ratio(&model, data));
    report.status = "complete".into();
    report.wall_seconds = wall.elapsed().as_secs_f64();
    Ok((model, report))
}

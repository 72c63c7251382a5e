//! Commands behind the `phasednn` binary: `train`, `eval`, `baseline`, `probe`
//! and `detect`. Each returns its result or a [`CliError`] carrying the exit
//! code (2 for configuration/input problems, 3 for numerical failure).

pub mod config;

use std::path::{Path, PathBuf};

use phasednn::data::{read_csv, sample, save_csv, write_columns, CsvData};
use phasednn::model::{
    derive_seeds, run, BaseRow, ErrorMetrics, NetRole, PhaseDnnModel, RunReport, Totals,
};
use phasednn::net::{train as train_net, Network, TrainConfig};
use phasednn::spectral::{
    convergence_probe, detect_frequencies, DetectConfig, FrequencyReport, ProbeTable,
};
use phasednn::{Dataset, Error};
use serde::{Deserialize, Serialize};

pub use config::ExperimentConfig;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable that sets the worker count when `--workers` is absent.
pub const WORKERS_ENV: &str = "PHASEDNN_WORKERS";

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_input_error() {
                EXIT_INPUT
            } else {
                EXIT_NUMERICAL
            },
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Runs `f` on a pool of `workers` threads (all cores when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(CliError {
                code: EXIT_INPUT,
                message: "worker count must be positive".into(),
            });
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError {
        code: EXIT_INPUT,
        message: format!("cannot start worker pool: {e}"),
    })?;
    Ok(pool.install(f))
}

/// The JSON document written by `train` and `baseline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub format: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub notes: Vec<String>,
    pub report: RunReport,
}

impl ReportDocument {
    fn new(
        command: &str,
        config: &ExperimentConfig,
        notes: Vec<String>,
        report: RunReport,
    ) -> Self {
        Self {
            format: "phasednn-run-report".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: config.seed,
            config: config.clone(),
            notes,
            report,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Writes `report.json` and `report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        write_text(&dir.join("report.json"), &self.to_json())?;
        let mut text = format!(
            "phasednn {} ({}), seed {}\n",
            self.command, self.version, self.seed
        );
        for n in &self.notes {
            text.push_str(&format!("note: {n}\n"));
        }
        text.push_str(&self.report.to_table());
        write_text(&dir.join("report.txt"), &text)
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| {
        Error::Io {
            path: dir.to_path_buf(),
            source: e,
        }
        .into()
    })
}

/// Config plus the data it describes.
struct Prepared {
    config: ExperimentConfig,
    train: Dataset,
    test: Option<Dataset>,
}

fn prepare(config_path: &Path, seed: Option<u64>) -> CliResult<Prepared> {
    let config = ExperimentConfig::load(config_path)?.resolve(seed)?;
    let train = sample(&config.target, &config.train_data)?;
    let test = match &config.test_data {
        Some(s) => Some(sample(&config.target, s)?),
        None => None,
    };
    Ok(Prepared {
        config,
        train,
        test,
    })
}

fn save_inputs(dir: &Path, p: &Prepared) -> CliResult<()> {
    create_dir(dir)?;
    let echo = toml::to_string(&p.config).map_err(|e| CliError {
        code: EXIT_INPUT,
        message: format!("cannot serialize config: {e}"),
    })?;
    write_text(&dir.join("config.toml"), &echo)?;
    save_csv(&p.train, &dir.join("train.csv"))?;
    if let Some(t) = &p.test {
        save_csv(t, &dir.join("test.csv"))?;
    }
    Ok(())
}

/// `train`: the PhaseDNN run described by the config. Writes the model bundle,
/// the data, the resolved config and the report into `out`.
pub fn cmd_train(config_path: &Path, out: &Path, seed: Option<u64>) -> CliResult<ReportDocument> {
    let p = prepare(config_path, seed)?;
    let (_, warnings) = p.config.bands()?;
    save_inputs(out, &p)?;
    let cfg = p.config.run_config()?;
    match run(&p.train, p.test.as_ref(), &cfg) {
        Ok((model, report)) => {
            model.save(out)?;
            let doc = ReportDocument::new("train", &p.config, warnings, report);
            doc.write(out)?;
            Ok(doc)
        }
        Err(failure) => {
            let doc = ReportDocument::new("train", &p.config, warnings, *failure.partial);
            doc.write(out)?;
            Err(failure.error.into())
        }
    }
}

/// `baseline`: one network on the raw data, reported in the `train` layout.
pub fn cmd_baseline(
    config_path: &Path,
    out: &Path,
    seed: Option<u64>,
) -> CliResult<ReportDocument> {
    let p = prepare(config_path, seed)?;
    let base = p.config.baseline.clone().ok_or_else(|| CliError {
        code: EXIT_INPUT,
        message: format!("{}: no [baseline] section", config_path.display()),
    })?;
    save_inputs(out, &p)?;
    let phase_params: usize = {
        let cfg = p.config.run_config()?;
        p.config.base.widths.param_count() * usize::from(p.config.base.epochs > 0)
            + 2 * cfg.bands.len() * cfg.rounds * p.config.band_net.widths.param_count()
    };
    let phase_epochs = {
        let cfg = p.config.run_config()?;
        p.config.base.epochs + 2 * cfg.bands.len() * cfg.rounds * p.config.band_net.epochs
    };
    let notes = vec![format!(
        "monolithic baseline: {} parameters, {} epochs; the PhaseDNN run of this config uses {} parameters and {} network-epochs in total (equal-epoch, not equal-wall-clock, budget)",
        base.widths.param_count(),
        base.epochs,
        phase_params,
        phase_epochs
    )];
    let (init, shuffle) = derive_seeds(p.config.seed, NetRole::Base);
    let mut net = Network::seeded(base.widths.clone(), init);
    let tcfg = TrainConfig {
        epochs: base.epochs,
        batch_size: p.config.optimizer.batch_size,
        adam: p.config.optimizer.adam(),
        seed: shuffle,
    };
    let start = std::time::Instant::now();
    let result = train_net(&mut net, &p.train, &tcfg);
    let mut report = RunReport {
        status: "complete".into(),
        base: BaseRow {
            epochs: base.epochs,
            train_seconds: 0.0,
            loss: None,
        },
        bands: Vec::new(),
        totals: Totals {
            conv_seconds: 0.0,
            train_seconds: 0.0,
        },
        rounds: Vec::new(),
        train: None,
        test: None,
        imaginary_residue: None,
        wall_seconds: 0.0,
    };
    match result {
        Ok(tr) => {
            report.base.train_seconds = tr.seconds;
            report.base.loss = tr.final_loss();
            report.totals.train_seconds = tr.seconds;
            let model = PhaseDnnModel::base_only(net);
            report.train = Some(ErrorMetrics::of(&model.predict(p.train.xs()), p.train.ys()));
            report.test = p
                .test
                .as_ref()
                .map(|t| ErrorMetrics::of(&model.predict(t.xs()), t.ys()));
            report.imaginary_residue = Some(0.0);
            report.wall_seconds = start.elapsed().as_secs_f64();
            model.save(out)?;
            let doc = ReportDocument::new("baseline", &p.config, notes, report);
            doc.write(out)?;
            Ok(doc)
        }
        Err(e) => {
            report.status = format!("failed: {e}");
            report.wall_seconds = start.elapsed().as_secs_f64();
            ReportDocument::new("baseline", &p.config, notes, report).write(out)?;
            Err(e.into())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub count: usize,
    /// Present when the input had a `y` column.
    pub metrics: Option<ErrorMetrics>,
}

/// `eval`: predictions of a saved bundle at the locations of `input`.
/// Writes `x,prediction` or, when the input has truth values,
/// `x,prediction,truth,error`.
pub fn cmd_eval(bundle: &Path, input: &Path, out: &Path) -> CliResult<EvalSummary> {
    let model = PhaseDnnModel::load(bundle)?;
    let (xs, truth) = match read_csv(input)? {
        CsvData::Points(xs) => (xs, None),
        CsvData::Real(d) => (d.xs().to_vec(), Some(d.ys().to_vec())),
        CsvData::Complex(_) => {
            return Err(CliError {
                code: EXIT_INPUT,
                message: format!("{}: expected `x` or `x,y` columns", input.display()),
            })
        }
    };
    let pred = model.predict(&xs);
    let metrics = match &truth {
        Some(t) => {
            write_columns(
                out,
                &["x", "prediction", "truth", "error"],
                xs.iter()
                    .zip(&pred)
                    .zip(t)
                    .map(|((&x, &p), &y)| [x, p, y, p - y]),
            )?;
            Some(ErrorMetrics::of(&pred, t))
        }
        None => {
            write_columns(
                out,
                &["x", "prediction"],
                xs.iter().zip(&pred).map(|(&x, &p)| [x, p]),
            )?;
            None
        }
    };
    Ok(EvalSummary {
        count: xs.len(),
        metrics,
    })
}

/// `probe`: the F-principle convergence probe on the config's target and
/// training samples. Writes `probe.csv` into `out`.
pub fn cmd_probe(config_path: &Path, out: &Path, seed: Option<u64>) -> CliResult<ProbeTable> {
    let p = prepare(config_path, seed)?;
    let probe = p.config.probe.clone().ok_or_else(|| CliError {
        code: EXIT_INPUT,
        message: format!("{}: no [probe] section", config_path.display()),
    })?;
    let opt = probe.optimizer.unwrap_or(p.config.optimizer);
    let (init, shuffle) = derive_seeds(p.config.seed, NetRole::Base);
    let cfg = TrainConfig {
        epochs: probe.epochs,
        batch_size: opt.batch_size,
        adam: opt.adam(),
        seed: shuffle,
    };
    let table = convergence_probe(
        &p.train,
        &probe.frequencies,
        Network::seeded(probe.widths.clone(), init),
        &cfg,
    )?;
    create_dir(out)?;
    table.write_csv(&out.join("probe.csv"))?;
    Ok(table)
}

/// `detect`: per-cluster frequency detection on a CSV of samples. Writes the
/// suggested bands as a band table, with warnings as `#` comment lines.
pub fn cmd_detect(
    input: &Path,
    clusters: usize,
    config_path: Option<&Path>,
    out: Option<&Path>,
) -> CliResult<(FrequencyReport, String)> {
    let data = match read_csv(input)? {
        CsvData::Real(d) => d,
        _ => {
            return Err(CliError {
                code: EXIT_INPUT,
                message: format!("{}: expected `x,y` columns", input.display()),
            })
        }
    };
    let settings = match config_path {
        Some(p) => ExperimentConfig::load(p)?.detect.unwrap_or_default(),
        None => DetectConfig::default(),
    };
    let report = detect_frequencies(&data, clusters, &settings)?;
    let mut text = String::new();
    for w in &report.warnings {
        text.push_str(&format!("# warning: {w}\n"));
    }
    for p in &report.peaks {
        text.push_str(&format!(
            "# peak k={:?} magnitude={:?} cluster={}\n",
            p.frequency, p.magnitude, p.cluster
        ));
    }
    text.push_str(&report.band_table()?);
    if let Some(path) = out {
        write_text(path, &text)?;
    }
    Ok((report, text))
}

/// Default output directory for commands that write several files.
pub fn default_out() -> PathBuf {
    PathBuf::from("phasednn-out")
}

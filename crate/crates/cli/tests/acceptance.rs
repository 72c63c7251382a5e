//! Acceptance checks C1-C8. Each test prints one `[acceptance] Cn ... PASS|FAIL`
//! line to stderr and fails when its criterion does.
//!
//! C4 and C5 run the full two-piece experiment from `configs/paper-sec4.toml`;
//! their bundles and reports are kept under the cargo test tmpdir.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use phasednn::bands::{extract_band, phase_shift, ConvolutionPlan, ShiftDirection};
use phasednn::data::{sample, SamplingSpec, TargetSpec};
use phasednn::dataset::relative_l2;
use phasednn::kernels::{bspline, make_bands, Band, BandLayout, KernelKind};
use phasednn::model::{run, NetSettings, RunConfig};
use phasednn::net::{gradient, mse_loss, AdamConfig, LayerSpec, Network};
use phasednn::spectral::{detect_frequencies, dft, dft_padded, DetectConfig, Spectrum};
use phasednn::{ComplexDataset, Dataset};
use phasednn_cli::{cmd_baseline, cmd_probe, cmd_train, ReportDocument};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: &str, what: &str, ok: bool, detail: String, elapsed: Duration) {
    // written to the raw handle so the line shows without --nocapture
    let _ = writeln!(
        std::io::stderr(),
        "[acceptance] {id} {what}: {detail} [{:.1} s] ... {}",
        elapsed.as_secs_f64(),
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "{id} {what}: {detail}");
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn work_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR"))
        .join("acceptance")
        .join(name)
}

#[test]
fn c1_partition_of_unity() {
    let start = Instant::now();
    let set = make_bands(&BandLayout::Mesh {
        m: 10,
        width: 5.0,
        kernel: KernelKind::CUBIC,
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let worst = (0..10_000)
        .map(|_| {
            let k: f64 = rng.gen_range(-50.0..=50.0);
            (set.bands.iter().map(|b| b.phi_k(k)).sum::<f64>() - 1.0).abs()
        })
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    report(
        "C1",
        "cubic mesh partition of unity (m=10, width 5)",
        worst < 1e-12 && elapsed < Duration::from_secs(1),
        format!(
            "{} bands, max |sum - 1| = {worst:.2e} (< 1e-12)",
            set.bands.len()
        ),
        elapsed,
    );
}

/// `B_m` on the grid `i h`, `i = 0..=m/h`, by repeated convolution with the
/// unit box: `B_{m+1}(x) = ∫_{x-1}^{x} B_m`.
fn bspline_by_convolution(m: usize, h: f64) -> Vec<f64> {
    let per_unit = (1.0 / h).round() as usize;
    let n = m * per_unit + 1;
    // B_1 is a step, whose running integral a left sum gets exactly
    let mut b: Vec<f64> = (0..n)
        .map(|i| if i < per_unit { 1.0 } else { 0.0 })
        .collect();
    for order in 1..m {
        let mut cumulative = vec![0.0; n];
        for i in 1..n {
            cumulative[i] = if order == 1 {
                cumulative[i - 1] + h * b[i - 1]
            } else {
                cumulative[i - 1] + 0.5 * h * (b[i - 1] + b[i])
            };
        }
        b = (0..n)
            .map(|i| {
                cumulative[i]
                    - if i >= per_unit {
                        cumulative[i - per_unit]
                    } else {
                        0.0
                    }
            })
            .collect();
    }
    b
}

#[test]
fn c2_bspline_matches_convolution_oracle() {
    let start = Instant::now();
    let h = 1e-4;
    let oracle = bspline_by_convolution(4, h);
    let worst = oracle
        .iter()
        .enumerate()
        .map(|(i, &o)| (bspline(4, i as f64 * h) - o).abs())
        .fold(0.0, f64::max);
    let at = |k: f64| oracle[(k / h).round() as usize];
    let exact = [(2.0, 2.0 / 3.0), (1.0, 1.0 / 6.0), (3.0, 1.0 / 6.0)];
    let exact_err = exact
        .iter()
        .map(|&(k, v)| (bspline(4, k) - v).abs().max((at(k) - v).abs()))
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    report(
        "C2",
        "cubic B-spline vs recursive convolution",
        worst < 1e-6 && exact_err < 1e-6 && elapsed < Duration::from_secs(10),
        format!(
            "max grid error {worst:.2e} (< 1e-6), error at k=1,2,3 vs 1/6, 2/3, 1/6: {exact_err:.2e}"
        ),
        elapsed,
    );
}

/// Keeps the DFT bins with `k` in `[lo, hi]` and transforms back.
fn fft_band_pass(data: &Dataset, lo: f64, hi: f64) -> ComplexDataset {
    let spectrum = dft(data).unwrap();
    let amplitudes = spectrum
        .frequencies
        .iter()
        .zip(&spectrum.amplitudes)
        .map(|(&k, &a)| {
            if (lo..=hi).contains(&k) {
                a
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    Spectrum {
        amplitudes,
        ..spectrum
    }
    .inverse()
}

#[test]
fn c3_band_extraction_matches_fft_oracle() {
    let start = Instant::now();
    let n = 8192;
    let xs: Vec<f64> = (0..n)
        .map(|i| -PI + 2.0 * PI * i as f64 / n as f64)
        .collect();
    let data = Dataset::from_fn(xs, |x| (23.0 * x).sin() + (3.0 * x).sin()).unwrap();
    let band = Band::characteristic(0, 20.0, 25.0).unwrap();
    let extracted = extract_band(&data, &band, &ConvolutionPlan::default())
        .unwrap()
        .data;
    let oracle = fft_band_pass(&data, 20.0, 25.0);
    let diff: f64 = extracted
        .ys()
        .iter()
        .zip(oracle.ys())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let rel = diff / oracle.ys().iter().map(|b| b.norm_sqr()).sum::<f64>().sqrt();
    let shifted = phase_shift(&extracted, band.shift, ShiftDirection::ToBaseband);
    let fraction = dft_padded(&shifted, 4).unwrap().energy_fraction_within(5.0);
    let elapsed = start.elapsed();
    report(
        "C3",
        "band [20,25] extraction of sin 23x + sin 3x",
        rel < 0.05 && fraction >= 0.99 && elapsed < Duration::from_secs(10),
        format!(
            "relative L2 vs FFT band-pass {rel:.4} (< 0.05), shifted energy in |k|<=5 {:.2}% (>= 99%)",
            100.0 * fraction
        ),
        elapsed,
    );
}

struct Sec4 {
    doc: ReportDocument,
    test: Dataset,
    prediction: Vec<f64>,
    elapsed: Duration,
}

/// The PhaseDNN run of `paper-sec4.toml`, shared by C4 and C5.
fn sec4() -> &'static Sec4 {
    static RUN: OnceLock<Sec4> = OnceLock::new();
    RUN.get_or_init(|| {
        let out = work_dir("sec4");
        let start = Instant::now();
        let doc =
            cmd_train(&configs().join("paper-sec4.toml"), &out, None).expect("training completes");
        let elapsed = start.elapsed();
        let test = phasednn::data::load_csv(&out.join("test.csv")).unwrap();
        let model = phasednn::model::PhaseDnnModel::load(&out).unwrap();
        let prediction = model.predict(test.xs());
        Sec4 {
            doc,
            test,
            prediction,
            elapsed,
        }
    })
}

/// Largest DFT magnitude within one unit of `±k`.
fn peak_near(s: &Spectrum, k: f64) -> f64 {
    s.frequencies
        .iter()
        .zip(&s.amplitudes)
        .filter(|(f, _)| (f.abs() - k).abs() <= 1.0)
        .map(|(_, a)| a.norm())
        .fold(0.0, f64::max)
}

#[test]
fn c4_two_piece_experiment() {
    let run = sec4();
    let test_err = run.doc.report.test.expect("test metrics").rel_l2;
    let truth = dft_padded(&run.test, 8).unwrap();
    let pred = dft_padded(&run.test.with_values(run.prediction.clone()).unwrap(), 8).unwrap();
    let mut ratios = Vec::new();
    for k in [1.0, 3.0, 23.0, 137.0, 203.0] {
        ratios.push((k, peak_near(&pred, k) / peak_near(&truth, k)));
    }
    let peaks_ok = ratios.iter().all(|&(_, r)| (r - 1.0).abs() <= 0.2);
    let detail = format!(
        "test relative L2 {test_err:.4} (< 0.15); peak ratios {} (each within 20%)",
        ratios
            .iter()
            .map(|(k, r)| format!("k={k}: {r:.3}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    report(
        "C4",
        "two-piece experiment, 8 bands",
        test_err < 0.15 && peaks_ok && run.elapsed < Duration::from_secs(30 * 60),
        detail,
        run.elapsed,
    );
}

#[test]
fn c5_single_network_comparison() {
    let start = Instant::now();
    let doc = cmd_baseline(
        &configs().join("paper-sec4.toml"),
        &work_dir("sec4-baseline"),
        None,
    )
    .expect("baseline training completes");
    let elapsed = start.elapsed();
    let baseline = doc.report.test.expect("test metrics").rel_l2;
    let phase = sec4().doc.report.test.expect("test metrics").rel_l2;
    report(
        "C5",
        "single network, same parameter and epoch budget",
        baseline >= 5.0 * phase && elapsed < Duration::from_secs(15 * 60),
        format!(
            "baseline test relative L2 {baseline:.4} vs PhaseDNN {phase:.4}: ratio {:.2} (>= 5)",
            baseline / phase
        ),
        elapsed,
    );
}

#[test]
fn c6_low_frequency_converges_first() {
    let start = Instant::now();
    let config = configs().join("fprinciple-probe.toml");
    let mut outcomes = Vec::new();
    for seed in 1..=5u64 {
        let table = cmd_probe(&config, &work_dir(&format!("probe-{seed}")), Some(seed)).unwrap();
        let low = table.halving_epoch(0);
        let high = table.halving_epoch(1);
        let ok = match (low, high) {
            (Some(l), Some(h)) => l <= h,
            (Some(_), None) => true,
            _ => false,
        };
        outcomes.push((seed, low, high, ok));
    }
    let passed = outcomes.iter().filter(|o| o.3).count();
    let elapsed = start.elapsed();
    report(
        "C6",
        "F-principle probe on sin x + sin 5x",
        passed >= 4 && elapsed < Duration::from_secs(5 * 60),
        format!(
            "{passed}/5 seeds halve |D(1)| no later than |D(5)| (>= 4); halving epochs {}",
            outcomes
                .iter()
                .map(|(s, l, h, _)| format!("seed {s}: {l:?}/{h:?}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
        elapsed,
    );
}

#[test]
fn c7_detection_covers_target_frequencies() {
    let start = Instant::now();
    let data = sample(
        &TargetSpec::TwoPiece,
        &SamplingSpec::Random {
            count: 10_000,
            seed: Some(2019),
        },
    )
    .unwrap();
    let found = detect_frequencies(&data, 8, &DetectConfig::default()).unwrap();
    let bin = found
        .bin_widths
        .iter()
        .copied()
        .filter(|w| w.is_finite())
        .fold(0.0, f64::max);
    let missing: Vec<f64> = [1.0, 3.0, 23.0, 137.0, 203.0]
        .into_iter()
        .filter(|&k| {
            !found
                .bands
                .iter()
                .any(|&(lo, hi)| lo - bin <= k && k <= hi + bin)
        })
        .collect();
    let elapsed = start.elapsed();
    report(
        "C7",
        "frequency detection with 8 clusters",
        missing.is_empty() && elapsed < Duration::from_secs(30),
        format!(
            "bands {:?}, bin width {bin:.2}, uncovered {missing:?}",
            found.bands
        ),
        elapsed,
    );
}

fn max_rel(a: &[Complex64], b: &[Complex64]) -> f64 {
    let scale = b.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
        / scale
}

#[test]
fn c8_property_suites() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = Vec::new();

    // gradient against central differences
    let mut worst_grad: f64 = 0.0;
    for trial in 0..20 {
        let hidden = rng.gen_range(1..6);
        let spec = LayerSpec::new(vec![1, hidden, hidden, 1]).unwrap();
        let net = Network::seeded(spec, trial);
        let xs: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let ys: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let data = Dataset::new(xs.clone(), ys.clone()).unwrap();
        let g = gradient(&net, &xs, &ys).unwrap();
        for i in 0..net.params().len() {
            let mut plus = net.clone();
            plus.params_mut()[i] += 1e-6;
            let mut minus = net.clone();
            minus.params_mut()[i] -= 1e-6;
            let fd = (mse_loss(&plus, &data) - mse_loss(&minus, &data)) / 2e-6;
            let an = g.values()[i];
            let err = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-4);
            worst_grad = worst_grad.max(err);
        }
    }
    if worst_grad > 1e-4 {
        failures.push(format!("gradient {worst_grad:.2e}"));
    }

    // extraction is linear; the two shifts are inverse
    let xs: Vec<f64> = (0..600)
        .map(|i| -PI + 2.0 * PI * i as f64 / 600.0)
        .collect();
    let f = Dataset::from_fn(xs.clone(), |x| (7.0 * x).sin() + 0.3 * x).unwrap();
    let g = Dataset::from_fn(xs.clone(), |x| (12.0 * x).cos() * x).unwrap();
    let (a, b) = (1.7, -0.6);
    let combo = Dataset::from_fn(xs.clone(), |x| {
        a * ((7.0 * x).sin() + 0.3 * x) + b * ((12.0 * x).cos() * x)
    })
    .unwrap();
    let band = Band::mesh(phasednn::kernels::SelectionKernel::cubic(5.0).unwrap(), 2);
    let plan = ConvolutionPlan::default();
    let ef = extract_band(&f, &band, &plan).unwrap().data;
    let eg = extract_band(&g, &band, &plan).unwrap().data;
    let ec = extract_band(&combo, &band, &plan).unwrap().data;
    let expected: Vec<Complex64> = ef
        .ys()
        .iter()
        .zip(eg.ys())
        .map(|(p, q)| a * p + b * q)
        .collect();
    let linearity = max_rel(ec.ys(), &expected);
    if linearity > 1e-10 {
        failures.push(format!("linearity {linearity:.2e}"));
    }
    let back = phase_shift(
        &phase_shift(&ec, 13.0, ShiftDirection::ToBaseband),
        13.0,
        ShiftDirection::FromBaseband,
    );
    let shift = max_rel(back.ys(), ec.ys());
    if shift > 1e-12 {
        failures.push(format!("shift inverse {shift:.2e}"));
    }

    // Parseval and transform round trip
    let spectrum = dft(&f).unwrap();
    let dx = xs[1] - xs[0];
    let direct: f64 = f.ys().iter().map(|y| y * y).sum::<f64>() * dx;
    let parseval = (spectrum.energy() - direct).abs() / direct;
    if parseval > 1e-10 {
        failures.push(format!("Parseval {parseval:.2e}"));
    }
    let original: Vec<Complex64> = f.ys().iter().map(|&y| y.into()).collect();
    let round_trip = max_rel(spectrum.inverse().ys(), &original);
    if round_trip > 1e-10 {
        failures.push(format!("round trip {round_trip:.2e}"));
    }

    // a run is identical on one and on four workers, and repeatable
    let data = Dataset::from_fn(xs.clone(), |x| x.sin() + (23.0 * x).sin()).unwrap();
    let net = |epochs| NetSettings {
        widths: LayerSpec::new(vec![1, 8, 8, 1]).unwrap(),
        epochs,
    };
    let cfg = RunConfig {
        base: net(2),
        band: net(2),
        adam: AdamConfig::default(),
        batch_size: Some(32),
        bands: make_bands(&BandLayout::Mesh {
            m: 5,
            width: 5.0,
            kernel: KernelKind::CUBIC,
        })
        .unwrap()
        .bands,
        convolution: plan,
        rounds: 2,
        seed: 42,
    };
    let pool = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
    };
    let (m1, r1) = pool(1).install(|| run(&data, Some(&data), &cfg)).unwrap();
    let (m4, r4) = pool(4).install(|| run(&data, Some(&data), &cfg)).unwrap();
    let (m4b, _) = pool(4).install(|| run(&data, Some(&data), &cfg)).unwrap();
    if m1 != m4 || m4 != m4b || r1.train != r4.train || r1.imaginary_residue != r4.imaginary_residue
    {
        failures.push("parallel run differs from serial run".into());
    }
    let prediction = m1.predict(&xs);
    if relative_l2(&prediction, data.ys()) != r1.train.unwrap().rel_l2 {
        failures.push("reported training error does not match the model".into());
    }

    let elapsed = start.elapsed();
    report(
        "C8",
        "property suites (gradient, linearity, shift, Parseval, round trip, determinism)",
        failures.is_empty() && elapsed < Duration::from_secs(5 * 60),
        if failures.is_empty() {
            format!(
                "gradient {worst_grad:.1e}, linearity {linearity:.1e}, shift {shift:.1e}, Parseval {parseval:.1e}, round trip {round_trip:.1e}, 1 vs 4 workers identical"
            )
        } else {
            failures.join("; ")
        },
        elapsed,
    );
}

use std::f64::consts::PI;

use phasednn::bands::{ConvolutionPlan, Quadrature};
use phasednn::kernels::{make_bands, BandLayout, KernelKind};
use phasednn::model::{residual, run, NetSettings, RunConfig};
use phasednn::net::{AdamConfig, LayerSpec};
use phasednn::Dataset;

fn fixture() -> Dataset {
    let xs = (0..800)
        .map(|i| -PI + 2.0 * PI * (i as f64 + 0.5) / 800.0)
        .collect();
    Dataset::from_fn(xs, |x| x.sin() + (23.0 * x).sin()).unwrap()
}

fn config(seed: u64) -> RunConfig {
    let net = NetSettings {
        widths: LayerSpec::new(vec![1, 20, 20, 1]).unwrap(),
        epochs: 20,
    };
    RunConfig {
        base: net.clone(),
        band: net,
        adam: AdamConfig {
            learning_rate: 2e-3,
            ..AdamConfig::default()
        },
        batch_size: Some(32),
        bands: make_bands(&BandLayout::Mesh {
            m: 5,
            width: 5.0,
            kernel: KernelKind::CUBIC,
        })
        .unwrap()
        .bands,
        convolution: ConvolutionPlan {
            quadrature: Quadrature::Trapezoid,
            ..ConvolutionPlan::default()
        },
        rounds: 2,
        seed,
    }
}

#[test]
fn second_round_does_not_increase_the_residual() {
    let data = fixture();
    for seed in [1, 2, 3] {
        let (model, report) = run(&data, None, &config(seed)).unwrap();
        assert_eq!(model.rounds, 2);
        let [first, second] = &report.rounds[..] else {
            panic!("expected two rounds, got {:?}", report.rounds)
        };
        assert_eq!(first.residual_after, second.residual_before);
        assert!(
            second.residual_after <= first.residual_after,
            "seed {seed}: {} -> {}",
            first.residual_after,
            second.residual_after
        );
        assert!(
            first.residual_after < first.residual_before,
            "seed {seed}: round 1 did not help"
        );

        // the model plus its residual reproduces the data
        let r = residual(&data, &model);
        let prediction = model.predict(data.xs());
        for ((p, e), y) in prediction.iter().zip(r.ys()).zip(data.ys()) {
            assert!((p + e - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}

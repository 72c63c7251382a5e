//! Dense feed-forward tanh networks with scalar input and output.
//!
//! A network with widths `[1, n1, .., nL, 1]` computes
//!
//! ```text
//! T(x) = Θ^L ∘ σ ∘ Θ^{L-1} ∘ σ ∘ … ∘ σ ∘ Θ^0 (x),   Θ^l(a) = W^l a + b^l,   σ = tanh
//! ```
//!
//! All parameters live in one flat buffer, layer by layer, each layer storing
//! its weight matrix row-major with shape `(out, in)` followed by its bias.
//! Gradients and Adam moments share that layout.
//!
//! # Text format
//!
//! ```text
//! phasednn-network 1
//! widths 1 40 40 1
//! layer 0 40 1
//! <40 lines, each with 1 weight>
//! bias <40 values>
//! layer 1 40 40
//! ...
//! ```
//!
//! Values are written in Rust's shortest round-trip notation, so a save/load
//! cycle reproduces every `f64` bit for bit.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

const FORMAT_HEADER: &str = "phasednn-network 1";

/// Layer widths `[1, n1, .., nL, 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct LayerSpec {
    widths: Vec<usize>,
}

impl LayerSpec {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 3 {
            return Err(Error::Config(format!(
                "need input, output and at least one hidden layer, got widths {widths:?}"
            )));
        }
        if widths[0] != 1 || widths[widths.len() - 1] != 1 {
            return Err(Error::Config(format!(
                "first and last width must be 1, got {widths:?}"
            )));
        }
        if widths.contains(&0) {
            return Err(Error::Config(format!("zero-width layer in {widths:?}")));
        }
        Ok(Self { widths })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Number of affine maps (hidden layers + 1).
    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    fn max_width(&self) -> usize {
        self.widths.iter().copied().max().unwrap_or(1)
    }
}

impl TryFrom<Vec<usize>> for LayerSpec {
    type Error = Error;

    fn try_from(widths: Vec<usize>) -> Result<Self> {
        Self::new(widths)
    }
}

impl From<LayerSpec> for Vec<usize> {
    fn from(spec: LayerSpec) -> Self {
        spec.widths
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slot {
    inputs: usize,
    outputs: usize,
    weights: usize,
    bias: usize,
}

fn layout(spec: &LayerSpec) -> Vec<Slot> {
    let mut offset = 0;
    spec.widths
        .windows(2)
        .map(|w| {
            let slot = Slot {
                inputs: w[0],
                outputs: w[1],
                weights: offset,
                bias: offset + w[0] * w[1],
            };
            offset = slot.bias + w[1];
            slot
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: LayerSpec,
    slots: Vec<Slot>,
    params: Vec<f64>,
}

impl Network {
    /// All weights and biases zero; evaluates to 0 everywhere.
    pub fn zeros(spec: LayerSpec) -> Self {
        let slots = layout(&spec);
        let params = vec![0.0; spec.param_count()];
        Self {
            spec,
            slots,
            params,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(spec: LayerSpec, rng: &mut R) -> Self {
        let mut net = Self::zeros(spec);
        for slot in net.slots.clone() {
            let limit = (6.0 / (slot.inputs + slot.outputs) as f64).sqrt();
            for w in &mut net.params[slot.weights..slot.bias] {
                *w = rng.gen_range(-limit..limit);
            }
        }
        net
    }

    pub fn seeded(spec: LayerSpec, seed: u64) -> Self {
        Self::glorot(spec, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn from_params(spec: LayerSpec, params: Vec<f64>) -> Result<Self> {
        if params.len() != spec.param_count() {
            return Err(Error::Shape(format!(
                "spec {:?} needs {} parameters, got {}",
                spec.widths(),
                spec.param_count(),
                params.len()
            )));
        }
        let slots = layout(&spec);
        Ok(Self {
            spec,
            slots,
            params,
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Row-major `(out, in)` weight matrix of layer `l`.
    pub fn weights(&self, l: usize) -> &[f64] {
        let s = self.slots[l];
        &self.params[s.weights..s.bias]
    }

    pub fn weights_mut(&mut self, l: usize) -> &mut [f64] {
        let s = self.slots[l];
        &mut self.params[s.weights..s.bias]
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        let s = self.slots[l];
        &self.params[s.bias..s.bias + s.outputs]
    }

    pub fn bias_mut(&mut self, l: usize) -> &mut [f64] {
        let s = self.slots[l];
        &mut self.params[s.bias..s.bias + s.outputs]
    }

    pub fn forward(&self, x: f64) -> f64 {
        let width = self.spec.max_width();
        let mut a = vec![0.0; width];
        let mut b = vec![0.0; width];
        self.forward_with(x, &mut a, &mut b)
    }

    fn forward_with(&self, x: f64, a: &mut [f64], b: &mut [f64]) -> f64 {
        a[0] = x;
        let last = self.slots.len() - 1;
        let (mut cur, mut next) = (a, b);
        for (l, s) in self.slots.iter().enumerate() {
            let w = &self.params[s.weights..s.bias];
            let bias = &self.params[s.bias..s.bias + s.outputs];
            let input = &cur[..s.inputs];
            for (o, out) in next[..s.outputs].iter_mut().enumerate() {
                let z = bias[o] + dot(&w[o * s.inputs..(o + 1) * s.inputs], input);
                *out = if l < last { z.tanh() } else { z };
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    /// Evaluates the network at every point of `xs`.
    pub fn predict(&self, xs: &[f64]) -> Vec<f64> {
        let width = self.spec.max_width();
        let mut a = vec![0.0; width];
        let mut b = vec![0.0; width];
        xs.iter()
            .map(|&x| self.forward_with(x, &mut a, &mut b))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_HEADER}");
        let widths: Vec<String> = self.spec.widths.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(out, "widths {}", widths.join(" "));
        for (l, s) in self.slots.iter().enumerate() {
            let _ = writeln!(out, "layer {l} {} {}", s.outputs, s.inputs);
            for row in self.weights(l).chunks(s.inputs) {
                let _ = writeln!(out, "{}", join_f64(row));
            }
            let _ = writeln!(out, "bias {}", join_f64(self.bias(l)));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(self.to_text().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), path)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::read(text.as_bytes(), Path::new("<memory>"))
    }

    fn read<R: BufRead>(reader: R, path: &Path) -> Result<Self> {
        let mut lines = reader
            .lines()
            .enumerate()
            .map(|(i, l)| l.map(|l| (i + 1, l)).map_err(|e| Error::io(path, e)));
        let mut next = |what: &str| -> Result<(usize, String)> {
            lines.next().unwrap_or_else(|| {
                Err(Error::parse(
                    path,
                    0,
                    format!("unexpected end of file, expected {what}"),
                ))
            })
        };

        let (n, header) = next("header")?;
        if header.trim() != FORMAT_HEADER {
            return Err(Error::parse(path, n, format!("expected `{FORMAT_HEADER}`")));
        }
        let (n, line) = next("widths")?;
        let widths = match line.split_whitespace().collect::<Vec<_>>().split_first() {
            Some((&"widths", rest)) => rest
                .iter()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(path, n, e.to_string()))?,
            _ => return Err(Error::parse(path, n, "expected `widths ...`")),
        };
        let spec = LayerSpec::new(widths).map_err(|e| Error::parse(path, n, e.to_string()))?;
        let mut net = Network::zeros(spec);

        for l in 0..net.slots.len() {
            let s = net.slots[l];
            let (n, line) = next("layer header")?;
            let expected = format!("layer {l} {} {}", s.outputs, s.inputs);
            if line.split_whitespace().collect::<Vec<_>>().join(" ") != expected {
                return Err(Error::parse(path, n, format!("expected `{expected}`")));
            }
            for row in 0..s.outputs {
                let (n, line) = next("weight row")?;
                let values = parse_f64s(&line, path, n)?;
                if values.len() != s.inputs {
                    return Err(Error::parse(
                        path,
                        n,
                        format!("expected {} weights, got {}", s.inputs, values.len()),
                    ));
                }
                net.weights_mut(l)[row * s.inputs..(row + 1) * s.inputs].copy_from_slice(&values);
            }
            let (n, line) = next("bias")?;
            let rest = line
                .strip_prefix("bias")
                .ok_or_else(|| Error::parse(path, n, "expected `bias ...`"))?;
            let values = parse_f64s(rest, path, n)?;
            if values.len() != s.outputs {
                return Err(Error::parse(
                    path,
                    n,
                    format!("expected {} biases, got {}", s.outputs, values.len()),
                ));
            }
            net.bias_mut(l).copy_from_slice(&values);
        }
        Ok(net)
    }
}

fn join_f64(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
    parts.join(" ")
}

fn parse_f64s(line: &str, path: &Path, n: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::parse(path, n, format!("bad number `{t}`: {e}")))
        })
        .collect()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        sum += x * y;
    }
    sum
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Mean squared error of `net` over `data`.
pub fn mse_loss(net: &Network, data: &Dataset) -> f64 {
    let preds = net.predict(data.xs());
    preds
        .iter()
        .zip(data.ys())
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / data.len() as f64
}

/// Gradient of the batch MSE, laid out like [`Network::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    values: Vec<f64>,
}

impl Gradient {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            values: vec![0.0; net.params.len()],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Scratch buffers for batched forward/backward passes.
#[derive(Debug, Default)]
struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Workspace {
    fn prepare(&mut self, spec: &LayerSpec, batch: usize) {
        let widths = spec.widths();
        self.acts.resize_with(widths.len(), Vec::new);
        for (a, &w) in self.acts.iter_mut().zip(widths) {
            a.resize(batch * w, 0.0);
        }
        let max = spec.max_width();
        self.delta.resize(batch * max, 0.0);
        self.delta_prev.resize(batch * max, 0.0);
    }
}

/// Writes the gradient of the batch MSE into `grad` and returns the batch loss.
fn loss_and_gradient(
    net: &Network,
    xs: &[f64],
    ys: &[f64],
    grad: &mut Gradient,
    ws: &mut Workspace,
) -> f64 {
    let batch = xs.len();
    ws.prepare(&net.spec, batch);
    let last = net.slots.len() - 1;

    ws.acts[0].copy_from_slice(xs);
    for (l, s) in net.slots.iter().enumerate() {
        let w = &net.params[s.weights..s.bias];
        let bias = &net.params[s.bias..s.bias + s.outputs];
        let (lower, upper) = ws.acts.split_at_mut(l + 1);
        let input = &lower[l];
        let output = &mut upper[0];
        for smp in 0..batch {
            let a = &input[smp * s.inputs..(smp + 1) * s.inputs];
            let z = &mut output[smp * s.outputs..(smp + 1) * s.outputs];
            for (o, zo) in z.iter_mut().enumerate() {
                let v = bias[o] + dot(&w[o * s.inputs..(o + 1) * s.inputs], a);
                *zo = if l < last { v.tanh() } else { v };
            }
        }
    }

    let scale = 2.0 / batch as f64;
    let mut loss = 0.0;
    let out = &ws.acts[last + 1];
    for smp in 0..batch {
        let r = out[smp] - ys[smp];
        loss += r * r;
        ws.delta[smp] = scale * r;
    }
    loss /= batch as f64;

    grad.values.iter_mut().for_each(|g| *g = 0.0);
    for l in (0..=last).rev() {
        let s = net.slots[l];
        let w = &net.params[s.weights..s.bias];
        let input = &ws.acts[l];
        let (gw, gb) = grad.values[s.weights..s.bias + s.outputs].split_at_mut(s.bias - s.weights);
        if l > 0 {
            ws.delta_prev[..batch * s.inputs]
                .iter_mut()
                .for_each(|d| *d = 0.0);
        }
        for smp in 0..batch {
            let a = &input[smp * s.inputs..(smp + 1) * s.inputs];
            for o in 0..s.outputs {
                let d = ws.delta[smp * s.outputs + o];
                gb[o] += d;
                axpy(d, a, &mut gw[o * s.inputs..(o + 1) * s.inputs]);
                if l > 0 {
                    axpy(
                        d,
                        &w[o * s.inputs..(o + 1) * s.inputs],
                        &mut ws.delta_prev[smp * s.inputs..(smp + 1) * s.inputs],
                    );
                }
            }
        }
        if l > 0 {
            for (d, a) in ws.delta_prev[..batch * s.inputs]
                .iter_mut()
                .zip(&input[..batch * s.inputs])
            {
                *d *= 1.0 - a * a;
            }
            std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
        }
    }
    loss
}

/// Exact gradient of the MSE over the batch `(xs, ys)`.
pub fn gradient(net: &Network, xs: &[f64], ys: &[f64]) -> Result<Gradient> {
    if xs.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!(
            "{} inputs, {} targets",
            xs.len(),
            ys.len()
        )));
    }
    let mut grad = Gradient::zeros_like(net);
    loss_and_gradient(net, xs, ys, &mut grad, &mut Workspace::default());
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, param_count: usize) -> Self {
        Self {
            config,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn for_network(config: AdamConfig, net: &Network) -> Self {
        Self::new(config, net.params.len())
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }
}

/// One bias-corrected Adam update of `net` in place.
pub fn adam_step(net: &mut Network, state: &mut AdamState, grad: &Gradient) -> Result<()> {
    let n = net.params.len();
    if grad.values.len() != n || state.m.len() != n {
        return Err(Error::Shape(format!(
            "network has {n} parameters, gradient {}, optimizer state {}",
            grad.values.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((p, g), m), v) in net
        .params
        .iter_mut()
        .zip(&grad.values)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub adam: AdamConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Sample-weighted mean of the batch losses seen during each epoch.
    pub losses: Vec<f64>,
    pub seconds: f64,
    pub epochs: usize,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}

/// Owns a network while it is being trained, one epoch at a time.
pub struct Trainer {
    net: Network,
    state: AdamState,
    batch_size: Option<usize>,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    grad: Gradient,
    ws: Workspace,
    bx: Vec<f64>,
    by: Vec<f64>,
    epoch: usize,
}

impl Trainer {
    pub fn new(net: Network, config: &TrainConfig) -> Self {
        let state = AdamState::for_network(config.adam, &net);
        let grad = Gradient::zeros_like(&net);
        Self {
            net,
            state,
            batch_size: config.batch_size,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            order: Vec::new(),
            grad,
            ws: Workspace::default(),
            bx: Vec::new(),
            by: Vec::new(),
            epoch: 0,
        }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn into_network(self) -> Network {
        self.net
    }

    pub fn epochs_completed(&self) -> usize {
        self.epoch
    }

    /// Runs one pass over `data` and returns the epoch's mean batch loss.
    pub fn run_epoch(&mut self, data: &Dataset) -> Result<f64> {
        let n = data.len();
        let batch = self.batch_size.unwrap_or(n).clamp(1, n);
        if self.order.len() != n {
            self.order = (0..n).collect();
        }
        if batch < n {
            self.order.shuffle(&mut self.rng);
        }
        let mut total = 0.0;
        for chunk in self.order.chunks(batch) {
            self.bx.clear();
            self.by.clear();
            for &i in chunk {
                self.bx.push(data.xs()[i]);
                self.by.push(data.ys()[i]);
            }
            let loss =
                loss_and_gradient(&self.net, &self.bx, &self.by, &mut self.grad, &mut self.ws);
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    epoch: self.epoch + 1,
                    loss,
                });
            }
            total += loss * chunk.len() as f64;
            adam_step(&mut self.net, &mut self.state, &self.grad)?;
        }
        self.epoch += 1;
        Ok(total / n as f64)
    }
}

/// Trains `net` for `config.epochs` passes over `data`.
///
/// On failure `net` is left untouched.
pub fn train(net: &mut Network, data: &Dataset, config: &TrainConfig) -> Result<TrainReport> {
    let start = Instant::now();
    let mut trainer = Trainer::new(net.clone(), config);
    let mut losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        losses.push(trainer.run_epoch(data)?);
    }
    *net = trainer.into_network();
    Ok(TrainReport {
        losses,
        seconds: start.elapsed().as_secs_f64(),
        epochs: config.epochs,
    })
}

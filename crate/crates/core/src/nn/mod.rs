//! Small trainable networks with exact manual backpropagation.
//!
//! All models keep their parameters in one flat vector. Layers are laid out
//! in forward order, each as `weights` followed by `bias`:
//!
//! * dense: weights `[out][in]`, bias `[out]`
//! * conv: weights `[out_ch][in_ch][k][k]`, bias `[out_ch]` (stride 1, same padding)
//!
//! Batches are row-major `n x input_len`; image inputs are `[channel][row][col]`.

pub mod checkpoint;
mod gemm;
pub mod loss;
pub mod optim;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_finite, OatError, Result};
use crate::numerics::RngState;
use gemm::{gemm, View};

pub use loss::{sample_loss, sample_loss_value, LossKind, Target, Term};
pub use checkpoint::{decode_model, describe, encode_model, parse_descriptor};
pub use optim::{lr_at, sgd_step, Sgd, TrainConfig};

/// Input geometry. Flat inputs use `channels = len, height = width = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InputShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl InputShape {
    pub fn image(channels: usize, height: usize, width: usize) -> Self {
        InputShape { channels, height, width }
    }

    pub fn flat(len: usize) -> Self {
        InputShape { channels: len, height: 1, width: 1 }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Layer widths of the small CNN:
/// conv(conv1) -> relu -> avgpool2 -> conv(conv2) -> relu -> avgpool2 -> fc -> relu -> fc(c).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CnnSpec {
    pub conv1: usize,
    pub conv2: usize,
    pub kernel: usize,
    pub fc: usize,
}

impl Default for CnnSpec {
    fn default() -> Self {
        CnnSpec { conv1: 16, conv2: 32, kernel: 3, fc: 128 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Logistic,
    Mlp { hidden: Vec<usize> },
    CnnSmall(CnnSpec),
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Mlp { .. } => "mlp",
            ModelKind::CnnSmall(_) => "cnn-small",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input: InputShape,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn logistic(input: InputShape, num_classes: usize) -> Self {
        ModelSpec { kind: ModelKind::Logistic, input, num_classes }
    }

    pub fn mlp(input: InputShape, hidden: Vec<usize>, num_classes: usize) -> Self {
        ModelSpec { kind: ModelKind::Mlp { hidden }, input, num_classes }
    }

    pub fn cnn_small(input: InputShape, cnn: CnnSpec, num_classes: usize) -> Self {
        ModelSpec { kind: ModelKind::CnnSmall(cnn), input, num_classes }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(OatError::invalid("a model needs at least two classes"));
        }
        if self.input.is_empty() {
            return Err(OatError::invalid("input shape is empty"));
        }
        match &self.kind {
            ModelKind::Logistic => {}
            ModelKind::Mlp { hidden } => {
                if hidden.contains(&0) {
                    return Err(OatError::invalid("mlp hidden widths must be positive"));
                }
            }
            ModelKind::CnnSmall(c) => {
                if c.conv1 == 0 || c.conv2 == 0 || c.fc == 0 {
                    return Err(OatError::invalid("cnn widths must be positive"));
                }
                if c.kernel % 2 == 0 {
                    return Err(OatError::invalid("cnn kernel must be odd for same padding"));
                }
                if !self.input.height.is_multiple_of(4) || !self.input.width.is_multiple_of(4) || self.input.height == 0 {
                    return Err(OatError::invalid("cnn-small needs height and width divisible by 4"));
                }
            }
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.input.len()
    }

    pub fn param_count(&self) -> usize {
        plan(self).1
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Layer {
    Dense { input: usize, output: usize, w: usize, b: usize },
    Conv { cin: usize, cout: usize, k: usize, h: usize, wd: usize, w: usize, b: usize },
    Relu { size: usize },
    AvgPool { c: usize, h: usize, wd: usize },
}

impl Layer {
    fn out_size(&self) -> usize {
        match *self {
            Layer::Dense { output, .. } => output,
            Layer::Conv { cout, h, wd, .. } => cout * h * wd,
            Layer::Relu { size } => size,
            Layer::AvgPool { c, h, wd } => c * (h / 2) * (wd / 2),
        }
    }
}

fn push_dense(layers: &mut Vec<Layer>, off: &mut usize, input: usize, output: usize) {
    layers.push(Layer::Dense { input, output, w: *off, b: *off + input * output });
    *off += input * output + output;
}

fn push_conv(layers: &mut Vec<Layer>, off: &mut usize, cin: usize, cout: usize, k: usize, h: usize, wd: usize) {
    layers.push(Layer::Conv { cin, cout, k, h, wd, w: *off, b: *off + cout * cin * k * k });
    *off += cout * cin * k * k + cout;
}

fn plan(spec: &ModelSpec) -> (Vec<Layer>, usize) {
    let mut layers = Vec::new();
    let mut off = 0usize;
    let c = spec.num_classes;
    let n_in = spec.input.len();
    match &spec.kind {
        ModelKind::Logistic => push_dense(&mut layers, &mut off, n_in, c),
        ModelKind::Mlp { hidden } => {
            let mut prev = n_in;
            for &h in hidden {
                push_dense(&mut layers, &mut off, prev, h);
                layers.push(Layer::Relu { size: h });
                prev = h;
            }
            push_dense(&mut layers, &mut off, prev, c);
        }
        ModelKind::CnnSmall(cnn) => {
            let (ch, h, wd) = (spec.input.channels, spec.input.height, spec.input.width);
            let k = cnn.kernel;
            push_conv(&mut layers, &mut off, ch, cnn.conv1, k, h, wd);
            layers.push(Layer::Relu { size: cnn.conv1 * h * wd });
            layers.push(Layer::AvgPool { c: cnn.conv1, h, wd });
            push_conv(&mut layers, &mut off, cnn.conv1, cnn.conv2, k, h / 2, wd / 2);
            layers.push(Layer::Relu { size: cnn.conv2 * (h / 2) * (wd / 2) });
            layers.push(Layer::AvgPool { c: cnn.conv2, h: h / 2, wd: wd / 2 });
            let flat = cnn.conv2 * (h / 4) * (wd / 4);
            push_dense(&mut layers, &mut off, flat, cnn.fc);
            layers.push(Layer::Relu { size: cnn.fc });
            push_dense(&mut layers, &mut off, cnn.fc, c);
        }
    }
    (layers, off)
}

/// Which gradients [`Model::weighted_loss_and_grads`] computes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradMode {
    /// Parameter and input gradients.
    Full,
    /// Input gradients only (attacks).
    InputOnly,
}

/// Output of a loss/gradient evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrads {
    /// Weighted batch loss `sum_i weight_i * L_i`.
    pub loss: f64,
    /// Unweighted per-sample losses `L_i`.
    pub per_sample: Vec<f64>,
    /// Row-major `n x c` logits at the evaluated inputs.
    pub logits: Vec<f64>,
    /// dloss/dtheta (empty for [`GradMode::InputOnly`]).
    pub param_grads: Vec<f64>,
    /// dloss/dinputs, shaped like the inputs.
    pub input_grads: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    params: Vec<f64>,
    layers: Vec<Layer>,
}

/// Saved activations of one forward pass.
struct Trace {
    n: usize,
    /// acts[0] is the input, acts[i + 1] the output of layer i.
    acts: Vec<Vec<f64>>,
    /// im2col buffers of conv layers (empty for other layers).
    cols: Vec<Vec<f64>>,
}

/// Builds a model with He-scaled Gaussian weights and zero biases.
pub fn build_model(spec: &ModelSpec, rng: &mut RngState) -> Result<Model> {
    let mut model = Model::zeros(spec)?;
    for layer in model.layers.clone() {
        match layer {
            Layer::Dense { input, output, w, .. } => {
                let std = libm::sqrt(2.0 / input as f64);
                for p in &mut model.params[w..w + input * output] {
                    *p = std * rng.normal();
                }
            }
            Layer::Conv { cin, cout, k, w, .. } => {
                let fan_in = cin * k * k;
                let std = libm::sqrt(2.0 / fan_in as f64);
                for p in &mut model.params[w..w + cout * fan_in] {
                    *p = std * rng.normal();
                }
            }
            _ => {}
        }
    }
    Ok(model)
}

impl Model {
    /// All-zero parameters.
    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let (layers, count) = plan(spec);
        Ok(Model { spec: spec.clone(), params: vec![0.0; count], layers })
    }

    pub fn from_params(spec: &ModelSpec, params: Vec<f64>) -> Result<Self> {
        let mut m = Model::zeros(spec)?;
        if params.len() != m.params.len() {
            return Err(OatError::ShapeMismatch { expected: m.params.len(), got: params.len() });
        }
        check_finite("model parameters", &params)?;
        m.params = params;
        Ok(m)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    pub fn input_len(&self) -> usize {
        self.spec.input.len()
    }

    fn batch_len(&self, inputs: &[f64]) -> Result<usize> {
        let d = self.input_len();
        if !inputs.len().is_multiple_of(d) {
            return Err(OatError::ShapeMismatch { expected: d, got: inputs.len() % d });
        }
        Ok(inputs.len() / d)
    }

    /// Row-major `n x c` logits.
    pub fn forward(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let trace = self.run_forward(inputs, false)?;
        Ok(trace.acts.into_iter().last().unwrap_or_default())
    }

    /// Argmax of each logit row, ties toward the lowest index.
    pub fn predict(&self, inputs: &[f64]) -> Result<Vec<usize>> {
        let logits = self.forward(inputs)?;
        Ok(logits.chunks(self.num_classes()).map(argmax).collect())
    }

    /// Signs of every ReLU pre-activation for the batch, in layer order.
    /// Two parameter/input settings with equal patterns lie in the same
    /// linear region of the network.
    pub fn activation_pattern(&self, inputs: &[f64]) -> Result<Vec<bool>> {
        let trace = self.run_forward(inputs, false)?;
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if let Layer::Relu { .. } = layer {
                out.extend(trace.acts[i].iter().map(|&v| v > 0.0));
            }
        }
        Ok(out)
    }

    fn run_forward(&self, inputs: &[f64], keep_cols: bool) -> Result<Trace> {
        let n = self.batch_len(inputs)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut cols = Vec::with_capacity(self.layers.len());
        acts.push(inputs.to_vec());
        for layer in &self.layers {
            let x = acts.last().unwrap();
            let mut col_buf = Vec::new();
            let y = match *layer {
                Layer::Dense { input, output, w, b } => {
                    let mut y = vec![0.0; n * output];
                    for row in y.chunks_mut(output) {
                        row.copy_from_slice(&self.params[b..b + output]);
                    }
                    gemm(1.0, View::rm(x, n, input), View::rm_t(&self.params[w..w + input * output], input, output), 1.0, &mut y);
                    y
                }
                Layer::Conv { cin, cout, k, h, wd, w, b } => {
                    let kk = cin * k * k;
                    let p = h * wd;
                    let np = n * p;
                    let mut cols = vec![0.0; kk * np];
                    for s in 0..n {
                        im2col(&x[s * cin * p..(s + 1) * cin * p], cin, h, wd, k, &mut cols[s * p..], np);
                    }
                    let mut out = vec![0.0; cout * np];
                    gemm(1.0, View::rm(&self.params[w..w + cout * kk], cout, kk), View::rm(&cols, kk, np), 0.0, &mut out);
                    let mut y = vec![0.0; n * cout * p];
                    for (oc, row) in out.chunks(np).enumerate() {
                        let bias = self.params[b + oc];
                        for (s, src) in row.chunks(p).enumerate() {
                            for (d, &v) in y[(s * cout + oc) * p..][..p].iter_mut().zip(src) {
                                *d = v + bias;
                            }
                        }
                    }
                    if keep_cols {
                        col_buf = cols;
                    }
                    y
                }
                Layer::Relu { .. } => x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
                Layer::AvgPool { c, h, wd } => {
                    let (ho, wo) = (h / 2, wd / 2);
                    let mut y = vec![0.0; n * c * ho * wo];
                    for (plane_in, plane_out) in x.chunks(h * wd).zip(y.chunks_mut(ho * wo)) {
                        for i in 0..ho {
                            let r0 = &plane_in[2 * i * wd..(2 * i + 1) * wd];
                            let r1 = &plane_in[(2 * i + 1) * wd..(2 * i + 2) * wd];
                            for j in 0..wo {
                                plane_out[i * wo + j] = 0.25 * (r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1]);
                            }
                        }
                    }
                    y
                }
            };
            debug_assert_eq!(y.len(), n * layer.out_size());
            acts.push(y);
            cols.push(col_buf);
        }
        Ok(Trace { n, acts, cols })
    }

    /// Batch-mean loss of `kind` with its parameter and input gradients.
    pub fn loss_and_grads(&self, inputs: &[f64], targets: &[Target], kind: LossKind) -> Result<LossGrads> {
        let n = targets.len();
        let w = if n == 0 { 0.0 } else { 1.0 / n as f64 };
        let terms: Vec<Term> = targets.iter().map(|t| Term::new(kind, t.clone(), w)).collect();
        self.weighted_loss_and_grads(inputs, &terms, GradMode::Full)
    }

    /// Evaluates `sum_i terms[i].weight * L_i` and its gradients.
    pub fn weighted_loss_and_grads(&self, inputs: &[f64], terms: &[Term], mode: GradMode) -> Result<LossGrads> {
        let n = self.batch_len(inputs)?;
        if n != terms.len() {
            return Err(OatError::ShapeMismatch { expected: n, got: terms.len() });
        }
        let trace = self.run_forward(inputs, true)?;
        let c = self.num_classes();
        let logits = trace.acts.last().unwrap().clone();
        let mut dlogits = vec![0.0; n * c];
        let mut per_sample = Vec::with_capacity(n);
        let mut loss = 0.0;
        for (i, term) in terms.iter().enumerate() {
            let g = &mut dlogits[i * c..(i + 1) * c];
            let l = sample_loss(term.kind, &logits[i * c..(i + 1) * c], &term.target, g)?;
            g.iter_mut().for_each(|v| *v *= term.weight);
            loss += term.weight * l;
            per_sample.push(l);
        }
        let (param_grads, input_grads) = self.backward(&trace, dlogits, mode);
        Ok(LossGrads { loss, per_sample, logits, param_grads, input_grads })
    }

    /// Per-sample losses only (no gradients).
    pub fn sample_losses(&self, inputs: &[f64], terms: &[Term]) -> Result<Vec<f64>> {
        let n = self.batch_len(inputs)?;
        if n != terms.len() {
            return Err(OatError::ShapeMismatch { expected: n, got: terms.len() });
        }
        let logits = self.forward(inputs)?;
        let c = self.num_classes();
        terms
            .iter()
            .zip(logits.chunks(c))
            .map(|(t, z)| sample_loss_value(t.kind, z, &t.target))
            .collect()
    }

    fn backward(&self, trace: &Trace, top: Vec<f64>, mode: GradMode) -> (Vec<f64>, Vec<f64>) {
        let n = trace.n;
        let full = mode == GradMode::Full;
        let mut pg = if full { vec![0.0; self.params.len()] } else { Vec::new() };
        let mut delta = top;
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.acts[li];
            delta = match *layer {
                Layer::Dense { input, output, w, b } => {
                    if full {
                        gemm(1.0, View::rm_t(&delta, output, n), View::rm(x, n, input), 1.0, &mut pg[w..w + input * output]);
                        for row in delta.chunks(output) {
                            for (g, d) in pg[b..b + output].iter_mut().zip(row) {
                                *g += d;
                            }
                        }
                    }
                    let mut dx = vec![0.0; n * input];
                    gemm(1.0, View::rm(&delta, n, output), View::rm(&self.params[w..w + input * output], output, input), 0.0, &mut dx);
                    dx
                }
                Layer::Conv { cin, cout, k, h, wd, w, b } => {
                    let kk = cin * k * k;
                    let p = h * wd;
                    let np = n * p;
                    let mut dout = vec![0.0; cout * np];
                    for (s, ds) in delta.chunks(cout * p).enumerate() {
                        for (oc, src) in ds.chunks(p).enumerate() {
                            dout[oc * np + s * p..][..p].copy_from_slice(src);
                        }
                    }
                    if full {
                        gemm(1.0, View::rm(&dout, cout, np), View::rm_t(&trace.cols[li], np, kk), 1.0, &mut pg[w..w + cout * kk]);
                        for (oc, row) in dout.chunks(np).enumerate() {
                            pg[b + oc] += row.iter().sum::<f64>();
                        }
                    }
                    let mut dcols = vec![0.0; kk * np];
                    gemm(1.0, View::rm_t(&self.params[w..w + cout * kk], kk, cout), View::rm(&dout, cout, np), 0.0, &mut dcols);
                    let mut dx = vec![0.0; n * cin * p];
                    for s in 0..n {
                        col2im(&dcols[s * p..], cin, h, wd, k, &mut dx[s * cin * p..(s + 1) * cin * p], np);
                    }
                    dx
                }
                Layer::Relu { .. } => {
                    for (d, &v) in delta.iter_mut().zip(x.iter()) {
                        if v <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    delta
                }
                Layer::AvgPool { c, h, wd } => {
                    let (ho, wo) = (h / 2, wd / 2);
                    let mut dx = vec![0.0; n * c * h * wd];
                    for (plane_out, plane_in) in delta.chunks(ho * wo).zip(dx.chunks_mut(h * wd)) {
                        for i in 0..ho {
                            for j in 0..wo {
                                let g = 0.25 * plane_out[i * wo + j];
                                plane_in[2 * i * wd + 2 * j] = g;
                                plane_in[2 * i * wd + 2 * j + 1] = g;
                                plane_in[(2 * i + 1) * wd + 2 * j] = g;
                                plane_in[(2 * i + 1) * wd + 2 * j + 1] = g;
                            }
                        }
                    }
                    dx
                }
            };
        }
        (pg, delta)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Unfolds `[cin][h][w]` into the `cin*k*k` rows (stride `ld`) of a column
/// matrix, `h*w` entries per row, with zero padding.
fn im2col(x: &[f64], cin: usize, h: usize, w: usize, k: usize, col: &mut [f64], ld: usize) {
    let pad = (k / 2) as isize;
    let p = h * w;
    for c in 0..cin {
        let plane = &x[c * p..(c + 1) * p];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((c * k + ky) * k + kx) * ld..][..p];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for i in 0..h {
                    let si = i as isize + dy;
                    let out = &mut row[i * w..(i + 1) * w];
                    if si < 0 || si >= h as isize {
                        out.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &plane[si as usize * w..(si as usize + 1) * w];
                    for (j, o) in out.iter_mut().enumerate() {
                        let sj = j as isize + dx;
                        *o = if sj < 0 || sj >= w as isize { 0.0 } else { src[sj as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates the column rows back into `[cin][h][w]`.
fn col2im(col: &[f64], cin: usize, h: usize, w: usize, k: usize, x: &mut [f64], ld: usize) {
    let pad = (k / 2) as isize;
    let p = h * w;
    for c in 0..cin {
        let plane = &mut x[c * p..(c + 1) * p];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((c * k + ky) * k + kx) * ld..][..p];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for i in 0..h {
                    let si = i as isize + dy;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[si as usize * w..(si as usize + 1) * w];
                    for j in 0..w {
                        let sj = j as isize + dx;
                        if sj >= 0 && sj < w as isize {
                            dst[sj as usize] += row[i * w + j];
                        }
                    }
                }
            }
        }
    }
}

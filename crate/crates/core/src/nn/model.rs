//! Model architecture description and the forward/backward interpreter.
//!
//! A [`ModelSpec`] is a static description of a small feed-forward network;
//! the weights live outside the spec in a flat [`ParamVector`]. The
//! interpreter walks the layer list, slicing per-layer weights out of the
//! flat vector, which keeps every model operation a pure function of
//! `(spec, params, batch)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::params::ParamVector;
use crate::rng;

/// One layer of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// Fully connected layer with bias; weights row-major `(out, in)`.
    Dense { outputs: usize },
    /// Element-wise `max(x, 0)`.
    Relu,
    /// 3x3 convolution, stride 1, zero padding 1, with bias.
    Conv3x3 { out_channels: usize },
    /// 2x2 average pooling, stride 2. Requires even spatial dims.
    AvgPool2,
    /// Logical reshape from image to flat; no-op on the data buffer.
    Flatten,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Image { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Shape {
    fn size(&self) -> usize {
        match *self {
            Shape::Image { c, h, w } => c * h * w,
            Shape::Flat(n) => n,
        }
    }
}

/// Built-in architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Two-hidden-layer dense network (256 and 64 units, ReLU).
    Dense,
    /// Four convolutional blocks followed by a two-layer projection head.
    Conv,
}

impl ModelKind {
    pub fn spec(self, num_classes: usize) -> ModelSpec {
        match self {
            ModelKind::Dense => ModelSpec::dense_default(num_classes),
            ModelKind::Conv => ModelSpec::small_conv(num_classes),
        }
    }
}

/// Architecture description: input shape, layer stack, class count.
///
/// The parameter count and per-layer offsets are derived once at
/// construction, so a given spec always addresses a flat parameter vector
/// the same way.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    input_shape: (usize, usize, usize),
    layers: Vec<LayerSpec>,
    num_classes: usize,
    shapes: Vec<Shape>,
    offsets: Vec<usize>,
    param_count: usize,
}

impl ModelSpec {
    pub fn new(
        input_shape: (usize, usize, usize),
        layers: Vec<LayerSpec>,
        num_classes: usize,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config("num_classes must be >= 2".into()));
        }
        let (c, h, w) = input_shape;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Config("input shape dims must be positive".into()));
        }
        let mut shape = Shape::Image { c, h, w };
        let mut shapes = Vec::with_capacity(layers.len());
        let mut offsets = Vec::with_capacity(layers.len());
        let mut count = 0usize;
        for (idx, layer) in layers.iter().enumerate() {
            offsets.push(count);
            match *layer {
                LayerSpec::Dense { outputs } => {
                    let inputs = match shape {
                        Shape::Flat(n) => n,
                        Shape::Image { .. } => {
                            return Err(Error::Config(format!(
                                "layer {idx}: dense requires flat input (insert flatten)"
                            )))
                        }
                    };
                    if outputs == 0 {
                        return Err(Error::Config(format!("layer {idx}: dense outputs = 0")));
                    }
                    count += outputs * inputs + outputs;
                    shape = Shape::Flat(outputs);
                }
                LayerSpec::Relu => {}
                LayerSpec::Conv3x3 { out_channels } => {
                    let (ic, ih, iw) = match shape {
                        Shape::Image { c, h, w } => (c, h, w),
                        Shape::Flat(_) => {
                            return Err(Error::Config(format!(
                                "layer {idx}: conv requires image input"
                            )))
                        }
                    };
                    if out_channels == 0 {
                        return Err(Error::Config(format!("layer {idx}: conv channels = 0")));
                    }
                    count += out_channels * ic * 9 + out_channels;
                    shape = Shape::Image {
                        c: out_channels,
                        h: ih,
                        w: iw,
                    };
                }
                LayerSpec::AvgPool2 => {
                    let (ic, ih, iw) = match shape {
                        Shape::Image { c, h, w } => (c, h, w),
                        Shape::Flat(_) => {
                            return Err(Error::Config(format!(
                                "layer {idx}: pool requires image input"
                            )))
                        }
                    };
                    if ih % 2 != 0 || iw % 2 != 0 {
                        return Err(Error::Config(format!(
                            "layer {idx}: pool requires even spatial dims, got {ih}x{iw}"
                        )));
                    }
                    shape = Shape::Image {
                        c: ic,
                        h: ih / 2,
                        w: iw / 2,
                    };
                }
                LayerSpec::Flatten => {
                    shape = Shape::Flat(shape.size());
                }
            }
            shapes.push(shape);
        }
        match shape {
            Shape::Flat(n) if n == num_classes => {}
            _ => {
                return Err(Error::Config(format!(
                    "network output shape {shape:?} does not match num_classes {num_classes}"
                )))
            }
        }
        Ok(ModelSpec {
            input_shape,
            layers,
            num_classes,
            shapes,
            offsets,
            param_count: count,
        })
    }

    /// Default architecture: flatten, dense 256, ReLU, dense 64, ReLU,
    /// dense `num_classes`, over 1x16x16 inputs.
    pub fn dense_default(num_classes: usize) -> ModelSpec {
        ModelSpec::new(
            (1, 16, 16),
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { outputs: 256 },
                LayerSpec::Relu,
                LayerSpec::Dense { outputs: 64 },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    outputs: num_classes,
                },
            ],
            num_classes,
        )
        .expect("default dense spec is valid")
    }

    /// Reduced convolutional architecture: four 3x3 conv blocks and a
    /// two-layer head, over 1x16x16 inputs.
    pub fn small_conv(num_classes: usize) -> ModelSpec {
        ModelSpec::new(
            (1, 16, 16),
            vec![
                LayerSpec::Conv3x3 { out_channels: 8 },
                LayerSpec::Relu,
                LayerSpec::AvgPool2,
                LayerSpec::Conv3x3 { out_channels: 16 },
                LayerSpec::Relu,
                LayerSpec::AvgPool2,
                LayerSpec::Conv3x3 { out_channels: 16 },
                LayerSpec::Relu,
                LayerSpec::Conv3x3 { out_channels: 16 },
                LayerSpec::Relu,
                LayerSpec::AvgPool2,
                LayerSpec::Flatten,
                LayerSpec::Dense { outputs: 64 },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    outputs: num_classes,
                },
            ],
            num_classes,
        )
        .expect("small conv spec is valid")
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn input_dim(&self) -> usize {
        let (c, h, w) = self.input_shape;
        c * h * w
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// Glorot-uniform weights, zero biases, drawn from the experiment seed.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = rng::stream(seed, "init", 0, 0);
        let mut values = vec![0.0; self.param_count];
        let mut shape_in = Shape::Image {
            c: self.input_shape.0,
            h: self.input_shape.1,
            w: self.input_shape.2,
        };
        for (idx, layer) in self.layers.iter().enumerate() {
            let off = self.offsets[idx];
            match *layer {
                LayerSpec::Dense { outputs } => {
                    let inputs = shape_in.size();
                    let bound = (6.0 / (inputs + outputs) as f64).sqrt();
                    for v in values[off..off + outputs * inputs].iter_mut() {
                        *v = rng.gen_range(-bound..bound);
                    }
                    // biases stay zero
                }
                LayerSpec::Conv3x3 { out_channels } => {
                    let ic = match shape_in {
                        Shape::Image { c, .. } => c,
                        Shape::Flat(_) => unreachable!("validated at construction"),
                    };
                    let fan_in = ic * 9;
                    let fan_out = out_channels * 9;
                    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    for v in values[off..off + out_channels * ic * 9].iter_mut() {
                        *v = rng.gen_range(-bound..bound);
                    }
                }
                _ => {}
            }
            shape_in = self.shapes[idx];
        }
        ParamVector::new(values)
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.len() != self.param_count {
            return Err(Error::Config(format!(
                "parameter vector length {} does not match spec ({})",
                params.len(),
                self.param_count
            )));
        }
        Ok(())
    }
}

/// Activations entering each layer plus the final output.
pub(crate) struct ForwardTrace {
    /// `acts[i]` is the input to layer `i`; `acts[last]` is the output.
    pub acts: Vec<Vec<f64>>,
}

pub(crate) fn run_forward(
    spec: &ModelSpec,
    params: &ParamVector,
    inputs: &[f64],
    n: usize,
    keep_trace: bool,
) -> Result<ForwardTrace> {
    spec.check_params(params)?;
    if inputs.len() != n * spec.input_dim() {
        return Err(Error::Config(format!(
            "batch size mismatch: {} values for {} samples of dim {}",
            inputs.len(),
            n,
            spec.input_dim()
        )));
    }
    let p = params.as_slice();
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(spec.layers.len() + 1);
    let mut current = inputs.to_vec();
    let mut shape = Shape::Image {
        c: spec.input_shape.0,
        h: spec.input_shape.1,
        w: spec.input_shape.2,
    };
    for (idx, layer) in spec.layers.iter().enumerate() {
        let off = spec.offsets[idx];
        let next = match *layer {
            LayerSpec::Dense { outputs } => {
                let inputs_dim = shape.size();
                let weights = &p[off..off + outputs * inputs_dim];
                let bias = &p[off + outputs * inputs_dim..off + outputs * inputs_dim + outputs];
                dense_forward(&current, n, inputs_dim, outputs, weights, bias)
            }
            LayerSpec::Relu => current.iter().map(|v| v.max(0.0)).collect(),
            LayerSpec::Conv3x3 { out_channels } => {
                let (ic, h, w) = match shape {
                    Shape::Image { c, h, w } => (c, h, w),
                    Shape::Flat(_) => unreachable!("validated at construction"),
                };
                let weights = &p[off..off + out_channels * ic * 9];
                let bias = &p[off + out_channels * ic * 9..off + out_channels * ic * 9 + out_channels];
                conv_forward(&current, n, ic, h, w, out_channels, weights, bias)
            }
            LayerSpec::AvgPool2 => {
                let (c, h, w) = match shape {
                    Shape::Image { c, h, w } => (c, h, w),
                    Shape::Flat(_) => unreachable!("validated at construction"),
                };
                pool_forward(&current, n, c, h, w)
            }
            LayerSpec::Flatten => current.clone(),
        };
        if keep_trace {
            acts.push(std::mem::replace(&mut current, next));
        } else {
            current = next;
        }
        shape = spec.shapes[idx];
    }
    acts.push(current);
    Ok(ForwardTrace { acts })
}

/// Backward pass: takes `d(loss)/d(logits)` and returns the full parameter
/// gradient. `trace` must come from `run_forward` with `keep_trace = true`.
pub(crate) fn run_backward(
    spec: &ModelSpec,
    params: &ParamVector,
    trace: &ForwardTrace,
    n: usize,
    dlogits: Vec<f64>,
) -> ParamVector {
    let p = params.as_slice();
    let mut grad = vec![0.0; spec.param_count];
    let mut dcur = dlogits;
    let mut shape_in = Shape::Image {
        c: spec.input_shape.0,
        h: spec.input_shape.1,
        w: spec.input_shape.2,
    };
    // Input shape of each layer, in order.
    let in_shapes: Vec<Shape> = spec
        .layers
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let s = shape_in;
            shape_in = spec.shapes[i];
            s
        })
        .collect();
    for idx in (0..spec.layers.len()).rev() {
        let off = spec.offsets[idx];
        let x = &trace.acts[idx];
        dcur = match spec.layers[idx] {
            LayerSpec::Dense { outputs } => {
                let inputs_dim = in_shapes[idx].size();
                let weights = &p[off..off + outputs * inputs_dim];
                let (gw, gb) = (
                    off..off + outputs * inputs_dim,
                    off + outputs * inputs_dim..off + outputs * inputs_dim + outputs,
                );
                dense_backward(
                    x,
                    &dcur,
                    n,
                    inputs_dim,
                    outputs,
                    weights,
                    &mut grad[gw.start..gb.end],
                )
            }
            LayerSpec::Relu => dcur
                .iter()
                .zip(x.iter())
                .map(|(d, v)| if *v > 0.0 { *d } else { 0.0 })
                .collect(),
            LayerSpec::Conv3x3 { out_channels } => {
                let (ic, h, w) = match in_shapes[idx] {
                    Shape::Image { c, h, w } => (c, h, w),
                    Shape::Flat(_) => unreachable!("validated at construction"),
                };
                let wlen = out_channels * ic * 9;
                let weights = &p[off..off + wlen];
                conv_backward(
                    x,
                    &dcur,
                    n,
                    ic,
                    h,
                    w,
                    out_channels,
                    weights,
                    &mut grad[off..off + wlen + out_channels],
                )
            }
            LayerSpec::AvgPool2 => {
                let (c, h, w) = match in_shapes[idx] {
                    Shape::Image { c, h, w } => (c, h, w),
                    Shape::Flat(_) => unreachable!("validated at construction"),
                };
                pool_backward(&dcur, n, c, h, w)
            }
            LayerSpec::Flatten => dcur,
        };
    }
    ParamVector::new(grad)
}

fn dense_forward(
    x: &[f64],
    n: usize,
    inputs: usize,
    outputs: usize,
    weights: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let mut y = vec![0.0; n * outputs];
    for s in 0..n {
        let row = &x[s * inputs..(s + 1) * inputs];
        let out = &mut y[s * outputs..(s + 1) * outputs];
        for (o, yo) in out.iter_mut().enumerate() {
            let wrow = &weights[o * inputs..(o + 1) * inputs];
            let mut acc = bias[o];
            for (wv, xv) in wrow.iter().zip(row.iter()) {
                acc += wv * xv;
            }
            *yo = acc;
        }
    }
    y
}

/// Writes `[dW | db]` into `gout` and returns dX.
fn dense_backward(
    x: &[f64],
    dy: &[f64],
    n: usize,
    inputs: usize,
    outputs: usize,
    weights: &[f64],
    gout: &mut [f64],
) -> Vec<f64> {
    let (gw, gb) = gout.split_at_mut(outputs * inputs);
    let mut dx = vec![0.0; n * inputs];
    for s in 0..n {
        let xrow = &x[s * inputs..(s + 1) * inputs];
        let dyrow = &dy[s * outputs..(s + 1) * outputs];
        let dxrow = &mut dx[s * inputs..(s + 1) * inputs];
        for o in 0..outputs {
            let d = dyrow[o];
            if d == 0.0 {
                continue;
            }
            gb[o] += d;
            let gwrow = &mut gw[o * inputs..(o + 1) * inputs];
            let wrow = &weights[o * inputs..(o + 1) * inputs];
            for i in 0..inputs {
                gwrow[i] += d * xrow[i];
                dxrow[i] += d * wrow[i];
            }
        }
    }
    dx
}

fn conv_forward(
    x: &[f64],
    n: usize,
    ic: usize,
    h: usize,
    w: usize,
    oc: usize,
    weights: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let mut y = vec![0.0; n * oc * h * w];
    let plane = h * w;
    for s in 0..n {
        let xs = &x[s * ic * plane..(s + 1) * ic * plane];
        let ys = &mut y[s * oc * plane..(s + 1) * oc * plane];
        for o in 0..oc {
            let yplane = &mut ys[o * plane..(o + 1) * plane];
            for v in yplane.iter_mut() {
                *v = bias[o];
            }
            for c in 0..ic {
                let xplane = &xs[c * plane..(c + 1) * plane];
                let k = &weights[(o * ic + c) * 9..(o * ic + c) * 9 + 9];
                for i in 0..h {
                    for j in 0..w {
                        let mut acc = 0.0;
                        for di in 0..3usize {
                            let ii = i as isize + di as isize - 1;
                            if ii < 0 || ii >= h as isize {
                                continue;
                            }
                            for dj in 0..3usize {
                                let jj = j as isize + dj as isize - 1;
                                if jj < 0 || jj >= w as isize {
                                    continue;
                                }
                                acc += k[di * 3 + dj] * xplane[ii as usize * w + jj as usize];
                            }
                        }
                        yplane[i * w + j] += acc;
                    }
                }
            }
        }
    }
    y
}

/// Writes `[dW | db]` into `gout` and returns dX.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    dy: &[f64],
    n: usize,
    ic: usize,
    h: usize,
    w: usize,
    oc: usize,
    weights: &[f64],
    gout: &mut [f64],
) -> Vec<f64> {
    let plane = h * w;
    let (gw, gb) = gout.split_at_mut(oc * ic * 9);
    let mut dx = vec![0.0; n * ic * plane];
    for s in 0..n {
        let xs = &x[s * ic * plane..(s + 1) * ic * plane];
        let dys = &dy[s * oc * plane..(s + 1) * oc * plane];
        let dxs = &mut dx[s * ic * plane..(s + 1) * ic * plane];
        for o in 0..oc {
            let dplane = &dys[o * plane..(o + 1) * plane];
            for d in dplane.iter() {
                gb[o] += d;
            }
            for c in 0..ic {
                let xplane = &xs[c * plane..(c + 1) * plane];
                let dxplane = &mut dxs[c * plane..(c + 1) * plane];
                let k = &weights[(o * ic + c) * 9..(o * ic + c) * 9 + 9];
                let gk = &mut gw[(o * ic + c) * 9..(o * ic + c) * 9 + 9];
                for i in 0..h {
                    for j in 0..w {
                        let d = dplane[i * w + j];
                        if d == 0.0 {
                            continue;
                        }
                        for di in 0..3usize {
                            let ii = i as isize + di as isize - 1;
                            if ii < 0 || ii >= h as isize {
                                continue;
                            }
                            for dj in 0..3usize {
                                let jj = j as isize + dj as isize - 1;
                                if jj < 0 || jj >= w as isize {
                                    continue;
                                }
                                let xi = ii as usize * w + jj as usize;
                                gk[di * 3 + dj] += d * xplane[xi];
                                dxplane[xi] += d * k[di * 3 + dj];
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

fn pool_forward(x: &[f64], n: usize, c: usize, h: usize, w: usize) -> Vec<f64> {
    let oh = h / 2;
    let ow = w / 2;
    let mut y = vec![0.0; n * c * oh * ow];
    for s in 0..n {
        for ch in 0..c {
            let xplane = &x[(s * c + ch) * h * w..(s * c + ch + 1) * h * w];
            let yplane = &mut y[(s * c + ch) * oh * ow..(s * c + ch + 1) * oh * ow];
            for i in 0..oh {
                for j in 0..ow {
                    let base = 2 * i * w + 2 * j;
                    yplane[i * ow + j] =
                        0.25 * (xplane[base] + xplane[base + 1] + xplane[base + w] + xplane[base + w + 1]);
                }
            }
        }
    }
    y
}

fn pool_backward(dy: &[f64], n: usize, c: usize, h: usize, w: usize) -> Vec<f64> {
    let oh = h / 2;
    let ow = w / 2;
    let mut dx = vec![0.0; n * c * h * w];
    for s in 0..n {
        for ch in 0..c {
            let dyplane = &dy[(s * c + ch) * oh * ow..(s * c + ch + 1) * oh * ow];
            let dxplane = &mut dx[(s * c + ch) * h * w..(s * c + ch + 1) * h * w];
            for i in 0..oh {
                for j in 0..ow {
                    let d = 0.25 * dyplane[i * ow + j];
                    let base = 2 * i * w + 2 * j;
                    dxplane[base] += d;
                    dxplane[base + 1] += d;
                    dxplane[base + w] += d;
                    dxplane[base + w + 1] += d;
                }
            }
        }
    }
    dx
}

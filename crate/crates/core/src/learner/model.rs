//! A three-layer fully convolutional segmenter with hand-written backprop:
//! `conv3x3 -> ReLU -> conv3x3 -> ReLU -> conv1x1 -> softmax(2)`,
//! zero "same" padding throughout.
//!
//! All kernels are generic over the float type so the same code runs in
//! `f32` for training and in `f64` for gradient checking.

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Raster;

/// Channel-major (`C x H x W`) image.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<F>,
}

impl<F: Float> Tensor<F> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![F::zero(); channels * height * width],
        }
    }

    /// From a row-major, channel-interleaved raster.
    pub fn from_raster(r: &Raster) -> Self {
        let (c, h, w) = (r.channels(), r.height(), r.width());
        let mut data = vec![F::zero(); c * h * w];
        for (px, vals) in r.values().chunks_exact(c).enumerate() {
            for (ch, &v) in vals.iter().enumerate() {
                data[ch * h * w + px] = F::from(v).unwrap();
            }
        }
        Self {
            channels: c,
            height: h,
            width: w,
            data,
        }
    }

    pub fn plane(&self, c: usize) -> &[F] {
        let hw = self.height * self.width;
        &self.data[c * hw..(c + 1) * hw]
    }

    pub fn cast<G: Float>(&self) -> Tensor<G> {
        Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| G::from(v).unwrap()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
}

impl LayerSpec {
    pub fn weight_len(&self) -> usize {
        self.c_out * self.c_in * self.kernel * self.kernel
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.c_out
    }
}

/// Layer shapes; parameters are packed per layer as weights
/// `[c_out][c_in][k][k]` followed by biases `[c_out]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub layers: Vec<LayerSpec>,
}

impl Layout {
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_len).sum()
    }

    /// `(weight range, bias range)` of every layer.
    pub fn ranges(&self) -> Vec<(std::ops::Range<usize>, std::ops::Range<usize>)> {
        let mut off = 0;
        self.layers
            .iter()
            .map(|l| {
                let w = off..off + l.weight_len();
                let b = w.end..w.end + l.c_out;
                off = b.end;
                (w, b)
            })
            .collect()
    }
}

/// Flat `f32` parameter state tied to a [`Layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub layout: Layout,
    pub data: Vec<f32>,
}

impl ParamVector {
    pub fn new(layout: Layout, data: Vec<f32>) -> Result<Self> {
        if data.len() != layout.param_count() {
            return Err(Error::shape(
                format!("{} parameters", layout.param_count()),
                format!("{} parameters", data.len()),
            ));
        }
        Ok(Self { layout, data })
    }

    pub fn zeros(layout: Layout) -> Self {
        let n = layout.param_count();
        Self {
            layout,
            data: vec![0.0; n],
        }
    }

    /// Per-layer `(weights, biases)` slices.
    pub fn unflatten(&self) -> Vec<(&[f32], &[f32])> {
        self.layout
            .ranges()
            .into_iter()
            .map(|(w, b)| (&self.data[w], &self.data[b]))
            .collect()
    }

    pub fn flatten(layout: Layout, layers: &[(&[f32], &[f32])]) -> Result<Self> {
        let data: Vec<f32> = layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect();
        Self::new(layout, data)
    }

    pub fn check_layout(&self, other: &ParamVector) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::shape(
                format!("layout {:?}", self.layout),
                format!("layout {:?}", other.layout),
            ));
        }
        Ok(())
    }

    /// Order-sensitive FNV-1a over the raw bits, for cheap equality checks.
    pub fn checksum(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        for v in &self.data {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_channels: usize,
    /// Base widths of the two hidden layers before the multiplier.
    pub hidden: [usize; 2],
    pub width_multiplier: f64,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_channels: 5,
            hidden: [16, 32],
            width_multiplier: 1.0,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn layout(&self) -> Layout {
        let scale = |c: usize| ((c as f64 * self.width_multiplier).round() as usize).max(1);
        let (h1, h2) = (scale(self.hidden[0]), scale(self.hidden[1]));
        Layout {
            layers: vec![
                LayerSpec {
                    c_in: self.input_channels,
                    c_out: h1,
                    kernel: 3,
                },
                LayerSpec {
                    c_in: h1,
                    c_out: h2,
                    kernel: 3,
                },
                LayerSpec {
                    c_in: h2,
                    c_out: 2,
                    kernel: 1,
                },
            ],
        }
    }

    /// He-style initialization: weights uniform in `±sqrt(6 / fan_in)`,
    /// biases zero.
    pub fn init_params(&self) -> ParamVector {
        let layout = self.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(self.init_seed);
        let mut data = Vec::with_capacity(layout.param_count());
        for l in &layout.layers {
            let fan_in = (l.c_in * l.kernel * l.kernel) as f64;
            let bound = (6.0 / fan_in).sqrt();
            for _ in 0..l.weight_len() {
                data.push(rng.gen_range(-bound..bound) as f32);
            }
            data.extend(std::iter::repeat(0.0f32).take(l.c_out));
        }
        ParamVector { layout, data }
    }
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Activations<F> {
    /// Input to each layer; `inputs[0]` is the image.
    pub inputs: Vec<Vec<F>>,
    /// Softmax probabilities, `[2][H*W]` (background, foreground).
    pub probs: Vec<F>,
    pub height: usize,
    pub width: usize,
}

impl<F: Float> Activations<F> {
    pub fn foreground(&self) -> &[F] {
        let hw = self.height * self.width;
        &self.probs[hw..2 * hw]
    }
}

fn conv_forward<F: Float>(
    input: &[F],
    spec: &LayerSpec,
    weights: &[F],
    bias: &[F],
    h: usize,
    w: usize,
) -> Vec<F> {
    let hw = h * w;
    let r = (spec.kernel / 2) as isize;
    let k = spec.kernel;
    let mut out = vec![F::zero(); spec.c_out * hw];
    for o in 0..spec.c_out {
        let out_o = &mut out[o * hw..(o + 1) * hw];
        out_o.iter_mut().for_each(|v| *v = bias[o]);
        for i in 0..spec.c_in {
            let in_i = &input[i * hw..(i + 1) * hw];
            for ky in 0..k {
                let dy = ky as isize - r;
                let (y0, y1) = (
                    (-dy).max(0) as usize,
                    (h as isize - dy).min(h as isize) as usize,
                );
                for kx in 0..k {
                    let dx = kx as isize - r;
                    let wv = weights[((o * spec.c_in + i) * k + ky) * k + kx];
                    let (x0, x1) = (
                        (-dx).max(0) as usize,
                        (w as isize - dx).min(w as isize) as usize,
                    );
                    let len = x1 - x0;
                    for y in y0..y1 {
                        let src = ((y as isize + dy) as usize) * w + (x0 as isize + dx) as usize;
                        let dst = y * w + x0;
                        let orow = &mut out_o[dst..dst + len];
                        let irow = &in_i[src..src + len];
                        for (a, &b) in orow.iter_mut().zip(irow) {
                            *a = *a + wv * b;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients; returns the input gradient when
/// `need_input_grad`.
#[allow(clippy::too_many_arguments)]
fn conv_backward<F: Float>(
    input: &[F],
    grad_out: &[F],
    spec: &LayerSpec,
    weights: &[F],
    grad_w: &mut [F],
    grad_b: &mut [F],
    h: usize,
    w: usize,
    need_input_grad: bool,
) -> Option<Vec<F>> {
    let hw = h * w;
    let r = (spec.kernel / 2) as isize;
    let k = spec.kernel;
    let mut grad_in = need_input_grad.then(|| vec![F::zero(); spec.c_in * hw]);
    for o in 0..spec.c_out {
        let go = &grad_out[o * hw..(o + 1) * hw];
        grad_b[o] = grad_b[o] + go.iter().fold(F::zero(), |s, &v| s + v);
        for i in 0..spec.c_in {
            let in_i = &input[i * hw..(i + 1) * hw];
            for ky in 0..k {
                let dy = ky as isize - r;
                let (y0, y1) = (
                    (-dy).max(0) as usize,
                    (h as isize - dy).min(h as isize) as usize,
                );
                for kx in 0..k {
                    let dx = kx as isize - r;
                    let widx = ((o * spec.c_in + i) * k + ky) * k + kx;
                    let wv = weights[widx];
                    let (x0, x1) = (
                        (-dx).max(0) as usize,
                        (w as isize - dx).min(w as isize) as usize,
                    );
                    let len = x1 - x0;
                    let mut acc = F::zero();
                    for y in y0..y1 {
                        let src = ((y as isize + dy) as usize) * w + (x0 as isize + dx) as usize;
                        let dst = y * w + x0;
                        let grow = &go[dst..dst + len];
                        let irow = &in_i[src..src + len];
                        acc = acc
                            + grow
                                .iter()
                                .zip(irow)
                                .fold(F::zero(), |s, (&g, &x)| s + g * x);
                        if let Some(gi) = grad_in.as_mut() {
                            let gi_row = &mut gi[i * hw + src..i * hw + src + len];
                            for (a, &g) in gi_row.iter_mut().zip(grow) {
                                *a = *a + wv * g;
                            }
                        }
                    }
                    grad_w[widx] = grad_w[widx] + acc;
                }
            }
        }
    }
    grad_in
}

/// Forward pass with cached activations.
pub fn forward_cached<F: Float>(
    layout: &Layout,
    params: &[F],
    image: &Tensor<F>,
) -> Result<Activations<F>> {
    let first = layout
        .layers
        .first()
        .ok_or_else(|| Error::Config("empty layout".into()))?;
    if image.channels != first.c_in {
        return Err(Error::shape(
            format!("{} input channels", first.c_in),
            format!("{} channels", image.channels),
        ));
    }
    if params.len() != layout.param_count() {
        return Err(Error::shape(
            format!("{} parameters", layout.param_count()),
            format!("{} parameters", params.len()),
        ));
    }
    let (h, w) = (image.height, image.width);
    let hw = h * w;
    let ranges = layout.ranges();
    let mut inputs = vec![image.data.clone()];
    let last = layout.layers.len() - 1;
    let mut logits = Vec::new();
    for (li, (spec, (wr, br))) in layout.layers.iter().zip(&ranges).enumerate() {
        let mut out = conv_forward(
            &inputs[li],
            spec,
            &params[wr.clone()],
            &params[br.clone()],
            h,
            w,
        );
        if li < last {
            out.iter_mut().for_each(|v| *v = v.max(F::zero()));
            inputs.push(out);
        } else {
            logits = out;
        }
    }
    // two-class softmax
    let mut probs = vec![F::zero(); 2 * hw];
    for p in 0..hw {
        let (z0, z1) = (logits[p], logits[hw + p]);
        let m = z0.max(z1);
        let (e0, e1) = ((z0 - m).exp(), (z1 - m).exp());
        let s = e0 + e1;
        probs[p] = e0 / s;
        probs[hw + p] = e1 / s;
    }
    Ok(Activations {
        inputs,
        probs,
        height: h,
        width: w,
    })
}

/// Per-pixel class probabilities as a 2-channel raster
/// (channel 0 background, channel 1 foreground).
pub fn forward(params: &ParamVector, image: &Raster) -> Result<Raster> {
    let t = Tensor::<f32>::from_raster(image);
    let act = forward_cached(&params.layout, &params.data, &t)?;
    let hw = t.height * t.width;
    let mut values = Vec::with_capacity(2 * hw);
    for p in 0..hw {
        values.push(act.probs[p]);
        values.push(act.probs[hw + p]);
    }
    Raster::new(t.width, t.height, 2, values)
}

/// Foreground probability map of one image.
pub fn foreground_prob(params: &ParamVector, image: &Tensor<f32>) -> Result<Raster> {
    let act = forward_cached(&params.layout, &params.data, image)?;
    Raster::new(image.width, image.height, 1, act.foreground().to_vec())
}

/// Backpropagate `d loss / d logits` (`[2][H*W]`) into `grad`.
pub fn backward<F: Float>(
    layout: &Layout,
    params: &[F],
    act: &Activations<F>,
    grad_logits: Vec<F>,
    grad: &mut [F],
) {
    let (h, w) = (act.height, act.width);
    let ranges = layout.ranges();
    let mut g = grad_logits;
    for li in (0..layout.layers.len()).rev() {
        let spec = &layout.layers[li];
        let (wr, br) = &ranges[li];
        let (gw_all, gb_all) = grad.split_at_mut(br.start);
        let gi = conv_backward(
            &act.inputs[li],
            &g,
            spec,
            &params[wr.clone()],
            &mut gw_all[wr.clone()],
            &mut gb_all[..spec.c_out],
            h,
            w,
            li > 0,
        );
        if let Some(mut gi) = gi {
            // ReLU: the cached input of layer li is the rectified output of li-1
            for (gv, &a) in gi.iter_mut().zip(&act.inputs[li]) {
                if a <= F::zero() {
                    *gv = F::zero();
                }
            }
            g = gi;
        }
    }
}

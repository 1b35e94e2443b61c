//! VGG-19 convolutional trunk (conv + ReLU + 2x2 max-pool), forward to the
//! deepest requested ReLU and backward to the input pixels.
//!
//! Only gradients with respect to the input are computed; the weights are
//! frozen. Convolutions run as im2col followed by a matrix product.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Output channels of the 16 convolutions, in order.
const CHANNELS: [usize; 16] = [
    64, 64, 128, 128, 256, 256, 256, 256, 512, 512, 512, 512, 512, 512, 512, 512,
];
/// Block (1-based) of each convolution; a max-pool precedes the first conv of
/// every block after the first.
const BLOCK: [usize; 16] = [1, 1, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5];

pub const CONV_COUNT: usize = 16;

/// A named rectifier output, `relu{block}_{index}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Layer(usize);

impl Layer {
    pub const RELU1_1: Layer = Layer(0);
    pub const RELU2_1: Layer = Layer(2);
    pub const RELU3_1: Layer = Layer(4);
    pub const RELU4_1: Layer = Layer(8);

    /// Layer after the convolution at position `conv` (0-based).
    pub fn from_conv_index(conv: usize) -> Result<Self> {
        if conv < CONV_COUNT {
            Ok(Layer(conv))
        } else {
            Err(Error::Config(format!("VGG-19 has no convolution {conv}")))
        }
    }

    pub fn conv_index(self) -> usize {
        self.0
    }

    pub fn block(self) -> usize {
        BLOCK[self.0]
    }

    /// Number of the convolution within its block, 1-based.
    pub fn position(self) -> usize {
        self.0 - BLOCK.iter().position(|&b| b == self.block()).unwrap() + 1
    }

    /// Channel count of the architecture at this layer.
    pub fn channels(self) -> usize {
        CHANNELS[self.0]
    }

    /// Spatial `(height, width)` of this layer's activation for an input of
    /// `(height, width)`.
    pub fn spatial_extent(self, height: usize, width: usize) -> (usize, usize) {
        let pools = self.block() - 1;
        (height >> pools, width >> pools)
    }

    pub fn name(self) -> String {
        format!("relu{}_{}", self.block(), self.position())
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "relu{}_{}", self.block(), self.position())
    }
}

impl FromStr for Layer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown layer name {s:?}"));
        let rest = s.strip_prefix("relu").ok_or_else(bad)?;
        let (b, i) = rest.split_once('_').ok_or_else(bad)?;
        let b: usize = b.parse().map_err(|_| bad())?;
        let i: usize = i.parse().map_err(|_| bad())?;
        let first = BLOCK.iter().position(|&x| x == b).ok_or_else(bad)?;
        let count = BLOCK.iter().filter(|&&x| x == b).count();
        if i == 0 || i > count {
            return Err(bad());
        }
        Ok(Layer(first + i - 1))
    }
}

/// 3x3 convolution, stride 1, zero padding 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    in_channels: usize,
    out_channels: usize,
    /// `out x in x 3 x 3`, row-major.
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != out_channels * in_channels * 9 || bias.len() != out_channels {
            return Err(Error::Config(format!(
                "conv {in_channels}->{out_channels} needs {} weights and {out_channels} biases, got {} and {}",
                out_channels * in_channels * 9,
                weight.len(),
                bias.len()
            )));
        }
        if weight.iter().chain(&bias).any(|w| !w.is_finite()) {
            return Err(Error::Config("non-finite network weight".into()));
        }
        Ok(Self {
            in_channels,
            out_channels,
            weight,
            bias,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn forward_relu(&self, input: &Tensor, col: &mut Vec<f64>) -> Tensor {
        let (h, w) = (input.height(), input.width());
        let hw = h * w;
        let k = self.in_channels * 9;
        im2col(input, col);
        let mut out = Tensor::zeros(self.out_channels, h, w);
        for (o, &b) in self.bias.iter().enumerate() {
            out.plane_mut(o).fill(b);
        }
        // SAFETY: buffers are exactly out x k, k x hw and out x hw, row-major.
        unsafe {
            matrixmultiply::dgemm(
                self.out_channels,
                k,
                hw,
                1.0,
                self.weight.as_ptr(),
                k as isize,
                1,
                col.as_ptr(),
                hw as isize,
                1,
                1.0,
                out.data_mut().as_mut_ptr(),
                hw as isize,
                1,
            );
        }
        for v in out.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        out
    }

    /// Input gradient from the gradient at the (pre-activation) output.
    fn backward_input(&self, grad_out: &Tensor, col: &mut Vec<f64>) -> Tensor {
        let (h, w) = (grad_out.height(), grad_out.width());
        let hw = h * w;
        let k = self.in_channels * 9;
        col.clear();
        col.resize(k * hw, 0.0);
        // SAFETY: weight read transposed (k x out), grad out x hw, col k x hw.
        unsafe {
            matrixmultiply::dgemm(
                k,
                self.out_channels,
                hw,
                1.0,
                self.weight.as_ptr(),
                1,
                k as isize,
                grad_out.data().as_ptr(),
                hw as isize,
                1,
                0.0,
                col.as_mut_ptr(),
                hw as isize,
                1,
            );
        }
        col2im(col, self.in_channels, h, w)
    }
}

fn im2col(input: &Tensor, col: &mut Vec<f64>) {
    let (c, h, w) = (input.channels(), input.height(), input.width());
    let hw = h * w;
    col.clear();
    col.resize(c * 9 * hw, 0.0);
    for ci in 0..c {
        let plane = input.plane(ci);
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let iy = y as isize + ky as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    match kx {
                        0 => dst[1..].copy_from_slice(&src[..w - 1]),
                        1 => dst.copy_from_slice(src),
                        _ => dst[..w - 1].copy_from_slice(&src[1..]),
                    }
                }
            }
        }
    }
}

fn col2im(col: &[f64], c: usize, h: usize, w: usize) -> Tensor {
    let hw = h * w;
    let mut out = Tensor::zeros(c, h, w);
    for ci in 0..c {
        let plane = out.plane_mut(ci);
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let iy = y as isize + ky as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..][..w];
                    let src = &row[y * w..][..w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&src[1..]).for_each(|(d, s)| *d += s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d += s),
                        _ => dst[1..].iter_mut().zip(&src[..w - 1]).for_each(|(d, s)| *d += s),
                    }
                }
            }
        }
    }
    out
}

/// 2x2 max-pool with stride 2 (odd trailing rows/columns dropped). Returns
/// the pooled tensor and the flat input index of every maximum.
fn max_pool(input: &Tensor) -> (Tensor, Vec<u32>) {
    let (c, h, w) = (input.channels(), input.height(), input.width());
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(c, oh, ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        let plane = input.plane(ci);
        let dst = out.plane_mut(ci);
        for y in 0..oh {
            for x in 0..ow {
                let mut best = (y * 2) * w + x * 2;
                for cand in [(y * 2) * w + x * 2 + 1, (y * 2 + 1) * w + x * 2, (y * 2 + 1) * w + x * 2 + 1] {
                    if plane[cand] > plane[best] {
                        best = cand;
                    }
                }
                dst[y * ow + x] = plane[best];
                arg.push((ci * h * w + best) as u32);
            }
        }
    }
    (out, arg)
}

/// Maps an RGB image in `[0, 1]` to the network's input space:
/// `(pixel * scale - mean) / std` per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Preprocess {
    pub scale: f64,
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Preprocess {
    /// Per-channel mean subtraction on `[0, 255]` pixels.
    pub const MEAN_SUBTRACTION: Preprocess = Preprocess {
        scale: 255.0,
        mean: [123.68, 116.779, 103.939],
        std: [1.0, 1.0, 1.0],
    };

    /// Normalization used by ImageNet-trained models that expect `[0, 1]` input.
    pub const IMAGENET_UNIT: Preprocess = Preprocess {
        scale: 1.0,
        mean: [0.485, 0.456, 0.406],
        std: [0.229, 0.224, 0.225],
    };

    fn apply(&self, image: &Tensor) -> Tensor {
        let mut out = image.clone();
        for ch in 0..3 {
            let (s, m, sd) = (self.scale, self.mean[ch], self.std[ch]);
            for v in out.plane_mut(ch) {
                *v = (*v * s - m) / sd;
            }
        }
        out
    }

    fn backward(&self, grad: &mut Tensor) {
        for ch in 0..3 {
            let k = self.scale / self.std[ch];
            for v in grad.plane_mut(ch) {
                *v *= k;
            }
        }
    }
}

impl Default for Preprocess {
    fn default() -> Self {
        Self::MEAN_SUBTRACTION
    }
}

/// Argmax indices of a pool plus the channels, height and width of its input.
type PoolArgmax = (Vec<u32>, usize, usize, usize);

/// Activations kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    taps: Vec<Layer>,
    /// ReLU output of every convolution up to the deepest tap.
    relu: Vec<Tensor>,
    /// Argmax of the pool feeding convolution `j`, if any.
    pools: Vec<Option<PoolArgmax>>,
    input_shape: (usize, usize),
}

impl Trace {
    pub fn taps(&self) -> &[Layer] {
        &self.taps
    }

    /// Activation at a tapped layer.
    pub fn activation(&self, layer: Layer) -> Option<&Tensor> {
        self.taps.contains(&layer).then(|| &self.relu[layer.conv_index()])
    }
}

/// The convolutional trunk of VGG-19 with frozen weights, possibly truncated
/// after the deepest layer anyone asks for.
#[derive(Clone, Debug, PartialEq)]
pub struct Vgg19 {
    convs: Vec<Conv2d>,
    preprocess: Preprocess,
}

impl Vgg19 {
    /// Checks the convolution shapes against the architecture.
    pub fn new(convs: Vec<Conv2d>, preprocess: Preprocess) -> Result<Self> {
        if convs.is_empty() || convs.len() > CONV_COUNT {
            return Err(Error::Config(format!(
                "expected 1 to {CONV_COUNT} convolutions, got {}",
                convs.len()
            )));
        }
        let mut expected_in = 3;
        for (j, conv) in convs.iter().enumerate() {
            if conv.in_channels != expected_in || conv.out_channels != CHANNELS[j] {
                return Err(Error::Config(format!(
                    "convolution {j} is {}->{}, VGG-19 expects {expected_in}->{}",
                    conv.in_channels, conv.out_channels, CHANNELS[j]
                )));
            }
            expected_in = CHANNELS[j];
        }
        Ok(Self { convs, preprocess })
    }

    /// Deterministic He-normal weights and zero biases through `deepest`.
    ///
    /// Each convolution draws from its own stream, so a deeper network
    /// shares its prefix with a shallower one built from the same seed.
    pub fn seeded(seed: u64, deepest: Layer) -> Self {
        let mut convs = Vec::with_capacity(deepest.conv_index() + 1);
        let mut in_ch = 3;
        for (j, &out_ch) in CHANNELS.iter().enumerate().take(deepest.conv_index() + 1) {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, j as u64));
            let std = libm::sqrt(2.0 / (in_ch * 9) as f64);
            let normal = Normal::new(0.0, std).expect("positive deviation");
            let weight = (0..out_ch * in_ch * 9).map(|_| normal.sample(&mut rng)).collect();
            convs.push(Conv2d {
                in_channels: in_ch,
                out_channels: out_ch,
                weight,
                bias: vec![0.0; out_ch],
            });
            in_ch = out_ch;
        }
        Self {
            convs,
            preprocess: Preprocess::default(),
        }
    }

    pub fn convs(&self) -> &[Conv2d] {
        &self.convs
    }

    pub fn preprocess(&self) -> &Preprocess {
        &self.preprocess
    }

    pub fn set_preprocess(&mut self, preprocess: Preprocess) {
        self.preprocess = preprocess;
    }

    /// Deepest layer this network can produce.
    pub fn deepest(&self) -> Layer {
        Layer(self.convs.len() - 1)
    }

    /// Channel count at `layer`, read from the loaded weights.
    pub fn channels(&self, layer: Layer) -> Result<usize> {
        self.convs
            .get(layer.conv_index())
            .map(|c| c.out_channels)
            .ok_or_else(|| Error::Config(format!("weights stop before {layer}")))
    }

    /// Runs the trunk on a 3-channel image in `[0, 1]`, keeping what the
    /// backward pass needs.
    pub fn forward(&self, image: &Tensor, taps: &[Layer]) -> Result<Trace> {
        if image.channels() != 3 {
            return Err(Error::Domain(format!(
                "network input needs 3 channels, got {}",
                image.channels()
            )));
        }
        let deepest = taps
            .iter()
            .copied()
            .max()
            .ok_or_else(|| Error::Config("no layers requested".into()))?;
        if deepest.conv_index() >= self.convs.len() {
            return Err(Error::Config(format!("weights stop before {deepest}")));
        }
        let pools_needed = deepest.block() - 1;
        if image.height() >> pools_needed == 0 || image.width() >> pools_needed == 0 {
            return Err(Error::Domain(format!(
                "{}x{} image is too small for {deepest}",
                image.width(),
                image.height()
            )));
        }
        let mut col = Vec::new();
        let mut relu: Vec<Tensor> = Vec::with_capacity(deepest.conv_index() + 1);
        let mut pools = Vec::with_capacity(deepest.conv_index() + 1);
        let input = self.preprocess.apply(image);
        for (j, conv) in self.convs.iter().enumerate().take(deepest.conv_index() + 1) {
            let out = if j == 0 {
                pools.push(None);
                conv.forward_relu(&input, &mut col)
            } else if BLOCK[j] != BLOCK[j - 1] {
                let prev = &relu[j - 1];
                let (pooled, arg) = max_pool(prev);
                pools.push(Some((arg, prev.channels(), prev.height(), prev.width())));
                conv.forward_relu(&pooled, &mut col)
            } else {
                pools.push(None);
                conv.forward_relu(&relu[j - 1], &mut col)
            };
            relu.push(out);
        }
        Ok(Trace {
            taps: taps.to_vec(),
            relu,
            pools,
            input_shape: (image.height(), image.width()),
        })
    }

    /// Gradient with respect to the `[0, 1]` input image, given the gradient
    /// at each tapped activation (same order as `trace.taps()`).
    pub fn backward(&self, trace: &Trace, tap_grads: &[Tensor]) -> Result<Tensor> {
        if tap_grads.len() != trace.taps.len() {
            return Err(Error::Domain("one gradient per tapped layer required".into()));
        }
        for (layer, g) in trace.taps.iter().zip(tap_grads) {
            if !g.same_shape(&trace.relu[layer.conv_index()]) {
                return Err(Error::Domain(format!("gradient shape mismatch at {layer}")));
            }
        }
        let mut col = Vec::new();
        let last = trace.relu.len() - 1;
        let mut g = Tensor::zeros(
            trace.relu[last].channels(),
            trace.relu[last].height(),
            trace.relu[last].width(),
        );
        for j in (0..=last).rev() {
            for (layer, tg) in trace.taps.iter().zip(tap_grads) {
                if layer.conv_index() == j {
                    g.data_mut().iter_mut().zip(tg.data()).for_each(|(a, b)| *a += b);
                }
            }
            for (gv, &a) in g.data_mut().iter_mut().zip(trace.relu[j].data()) {
                if a <= 0.0 {
                    *gv = 0.0;
                }
            }
            let gin = self.convs[j].backward_input(&g, &mut col);
            g = match &trace.pools[j] {
                Some((arg, c, h, w)) => {
                    let mut up = Tensor::zeros(*c, *h, *w);
                    let dst = up.data_mut();
                    for (&idx, &gv) in arg.iter().zip(gin.data()) {
                        dst[idx as usize] += gv;
                    }
                    up
                }
                None => gin,
            };
        }
        debug_assert_eq!((g.height(), g.width()), trace.input_shape);
        self.preprocess.backward(&mut g);
        Ok(g)
    }
}

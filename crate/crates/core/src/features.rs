//! Style representation: network activations at named layers, their Gram
//! matrices, density guidance masks, and style-image tiling.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{domain, Error, Result};
use crate::fields::area_downsample;
use crate::tensor::Tensor;
use crate::vgg::{Layer, Trace, Vgg19};

/// A layer's activation, `C_l x H_l x W_l`.
pub type FeatureMap = Tensor;

/// Activations at a set of layers, in request order.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStack {
    entries: Vec<(Layer, FeatureMap)>,
}

impl FeatureStack {
    pub fn new(entries: Vec<(Layer, FeatureMap)>) -> Self {
        Self { entries }
    }

    pub(crate) fn from_trace(trace: &Trace) -> Self {
        Self {
            entries: trace
                .taps()
                .iter()
                .map(|&l| (l, trace.activation(l).expect("tapped").clone()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn layers(&self) -> impl Iterator<Item = Layer> + '_ {
        self.entries.iter().map(|(l, _)| *l)
    }

    pub fn get(&self, layer: Layer) -> Option<&FeatureMap> {
        self.entries.iter().find(|(l, _)| *l == layer).map(|(_, f)| f)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Layer, &FeatureMap)> {
        self.entries.iter().map(|(l, f)| (*l, f))
    }
}

fn dedup_layers(layers: &[Layer]) -> Result<Vec<Layer>> {
    if layers.is_empty() {
        return Err(Error::Config("no feature layers selected".into()));
    }
    let mut out: Vec<Layer> = Vec::with_capacity(layers.len());
    for &l in layers {
        if out.contains(&l) {
            return Err(Error::Config(format!("layer {l} requested twice")));
        }
        out.push(l);
    }
    Ok(out)
}

/// Activations of `image` at exactly `layers`. Grayscale images are
/// replicated to three channels first.
pub fn extract_features(net: &Vgg19, image: &Tensor, layers: &[Layer]) -> Result<FeatureStack> {
    let layers = dedup_layers(layers)?;
    let trace = net.forward(&image.to_rgb()?, &layers)?;
    Ok(FeatureStack::from_trace(&trace))
}

/// Channel correlation matrix `F F^T / N` of a `C x N` activation.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    size: usize,
    data: Vec<f64>,
}

impl GramMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }
}

/// Gram matrix of a feature map, normalized by its pixel count.
pub fn gram(f: &FeatureMap) -> GramMatrix {
    gram_normalized(f, f.spatial() as f64)
}

/// `F F^T / norm`; a zero `norm` gives the zero matrix.
pub(crate) fn gram_normalized(f: &FeatureMap, norm: f64) -> GramMatrix {
    let (c, n) = (f.channels(), f.spatial());
    let mut data = vec![0.0; c * c];
    if norm == 0.0 {
        return GramMatrix { size: c, data };
    }
    // SAFETY: F is c x n row-major, read transposed as n x c; output c x c.
    unsafe {
        matrixmultiply::dgemm(
            c,
            n,
            c,
            1.0 / norm,
            f.data().as_ptr(),
            n as isize,
            1,
            f.data().as_ptr(),
            1,
            n as isize,
            0.0,
            data.as_mut_ptr(),
            c as isize,
            1,
        );
    }
    GramMatrix { size: c, data }
}

/// Gradient with respect to `f` of `sum(grad_gram * gram_normalized(f, norm))`
/// for a symmetric `grad_gram`: `2 grad_gram F / norm`.
pub(crate) fn gram_vjp_symmetric(f: &FeatureMap, grad_gram: &[f64], norm: f64) -> FeatureMap {
    let (c, n) = (f.channels(), f.spatial());
    let mut out = Tensor::zeros(c, f.height(), f.width());
    if norm == 0.0 {
        return out;
    }
    // SAFETY: grad_gram c x c, F c x n, out c x n, all row-major.
    unsafe {
        matrixmultiply::dgemm(
            c,
            c,
            n,
            2.0 / norm,
            grad_gram.as_ptr(),
            c as isize,
            1,
            f.data().as_ptr(),
            n as isize,
            1,
            0.0,
            out.data_mut().as_mut_ptr(),
            n as isize,
            1,
        );
    }
    out
}

/// Per-layer soft masks restricting style statistics to occupied pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct GuidanceMaskPyramid {
    masks: Vec<(Layer, Tensor)>,
}

impl GuidanceMaskPyramid {
    /// Sum of squared mask values at `layer`, the effective pixel count
    /// of guided features.
    pub fn energy(&self, layer: Layer) -> Option<f64> {
        self.get(layer).map(|m| m.data().iter().map(|t| t * t).sum())
    }

    pub fn get(&self, layer: Layer) -> Option<&Tensor> {
        self.masks.iter().find(|(l, _)| *l == layer).map(|(_, m)| m)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Layer, &Tensor)> {
        self.masks.iter().map(|(l, m)| (*l, m))
    }

    /// Replaces every mask value with `value` (for ablations and tests).
    pub fn filled(&self, value: f64) -> Self {
        Self {
            masks: self
                .masks
                .iter()
                .map(|(l, m)| (*l, m.map(|_| value)))
                .collect(),
        }
    }
}

/// Area-averages a single-channel density image (already projected to the
/// stylization image extent) down to each layer's activation extent and
/// clamps the result into `[0, 1]`.
pub fn build_mask_pyramid(density_image: &Tensor, layers: &[Layer]) -> Result<GuidanceMaskPyramid> {
    if density_image.channels() != 1 {
        return Err(domain("guidance masks come from a single-channel density image"));
    }
    let (h, w) = (density_image.height(), density_image.width());
    let masks = dedup_layers(layers)?
        .into_iter()
        .map(|l| {
            let (lh, lw) = l.spatial_extent(h, w);
            if lh == 0 || lw == 0 {
                return Err(domain(format!("{w}x{h} image is too small for {l}")));
            }
            let mut data = area_downsample(density_image.data(), [w, h, 1], [lw, lh, 1]);
            for v in &mut data {
                *v = v.clamp(0.0, 1.0);
            }
            Ok((l, Tensor::new(1, lh, lw, data)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GuidanceMaskPyramid { masks })
}

/// Multiplies every channel of `f` elementwise by the mask `t`.
pub fn guide_features(f: &FeatureMap, t: &Tensor) -> Result<FeatureMap> {
    if t.channels() != 1 || t.height() != f.height() || t.width() != f.width() {
        return Err(domain(format!(
            "mask {}x{} does not match features {}x{}",
            t.width(),
            t.height(),
            f.width(),
            f.height()
        )));
    }
    let mut out = f.clone();
    for c in 0..f.channels() {
        out.plane_mut(c)
            .iter_mut()
            .zip(t.data())
            .for_each(|(v, m)| *v *= m);
    }
    Ok(out)
}

/// Replicates the style image `level x level` times so extracted features
/// describe proportionally smaller structures.
pub fn tile_style(image: &Tensor, level: usize) -> Result<Tensor> {
    if level == 0 {
        return Err(domain("tiling level must be at least 1"));
    }
    if level == 1 {
        return Ok(image.clone());
    }
    let (c, h, w) = (image.channels(), image.height(), image.width());
    let (th, tw) = (h * level, w * level);
    let mut data = Vec::with_capacity(c * th * tw);
    for ch in 0..c {
        let plane = image.plane(ch);
        for y in 0..th {
            let row = &plane[(y % h) * w..][..w];
            for _ in 0..level {
                data.extend_from_slice(row);
            }
        }
    }
    Tensor::new(c, th, tw, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_of_orthonormal_rows() {
        // two pixels, two channels: F[c][n] = identity
        let f = Tensor::new(2, 1, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let g = gram(&f);
        assert_eq!(g.data(), &[0.5, 0.0, 0.0, 0.5]);
        assert!(gram(&Tensor::zeros(3, 2, 2)).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gram_matches_loops() {
        // 5 pixels x 3 channels
        let f = Tensor::new(3, 1, 5, (0..15).map(|i| (i as f64 * 1.3).sin()).collect()).unwrap();
        let g = gram(&f);
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for n in 0..5 {
                    acc += f.at(i, 0, n) * f.at(j, 0, n);
                }
                assert!((g.at(i, j) - acc / 5.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn guide_features_cases() {
        let f = Tensor::new(2, 2, 2, (1..=8).map(f64::from).collect()).unwrap();
        let ones = Tensor::new(1, 2, 2, vec![1.0; 4]).unwrap();
        assert_eq!(guide_features(&f, &ones).unwrap(), f);
        let zeros = Tensor::zeros(1, 2, 2);
        let g = guide_features(&f, &zeros).unwrap();
        assert!(gram(&g).data().iter().all(|&v| v == 0.0));
        let t = Tensor::new(1, 2, 2, vec![0.5, 0.0, 1.0, 0.25]).unwrap();
        let g = guide_features(&f, &t).unwrap();
        for c in 0..2 {
            for p in 0..4 {
                assert!((g.at(c, p / 2, p % 2) - f.at(c, p / 2, p % 2) * t.data()[p]).abs() < 1e-12);
            }
        }
        assert!(guide_features(&f, &Tensor::zeros(1, 3, 2)).is_err());
    }

    #[test]
    fn masks_follow_layer_extents() {
        let img = Tensor::new(1, 8, 8, vec![1.0; 64]).unwrap();
        let p = build_mask_pyramid(&img, &[Layer::RELU1_1, Layer::RELU2_1, Layer::RELU3_1]).unwrap();
        let sizes: Vec<(usize, usize)> = p.iter().map(|(_, m)| (m.height(), m.width())).collect();
        assert_eq!(sizes, vec![(8, 8), (4, 4), (2, 2)]);
        assert!(p.iter().all(|(_, m)| m.data().iter().all(|&v| v == 1.0)));
        let p = build_mask_pyramid(&Tensor::zeros(1, 8, 8), &[Layer::RELU2_1]).unwrap();
        assert!(p.get(Layer::RELU2_1).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tiling() {
        let img = Tensor::new(3, 2, 3, (0..18).map(f64::from).collect()).unwrap();
        assert_eq!(tile_style(&img, 1).unwrap(), img);
        assert!(tile_style(&img, 0).is_err());
        let t = tile_style(&img, 2).unwrap();
        assert_eq!((t.height(), t.width()), (4, 6));
        for c in 0..3 {
            for y in 0..4 {
                for x in 0..6 {
                    assert_eq!(t.at(c, y, x), img.at(c, y % 2, x % 3));
                }
            }
        }
        let t = tile_style(&img, 3).unwrap();
        for y in 0..2 {
            for x in 0..3 {
                assert_eq!(t.at(1, y, x), img.at(1, y, x));
            }
        }
    }
}

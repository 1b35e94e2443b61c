//! Content and Gram style losses, and the shape and color objectives that
//! push them through transport, rendering and the network.
//!
//! Squared differences are averaged over elements rather than summed, so
//! learning rates do not depend on resolution or channel count.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{domain, Error, Result};
use crate::features::{
    gram, gram_normalized, gram_vjp_symmetric, guide_features, build_mask_pyramid, FeatureStack, GramMatrix,
    GuidanceMaskPyramid,
};
use crate::fields::{ColorField, ScalarField, VectorField};
use crate::render::{
    render_color, render_color_vjp, render_grayscale, render_grayscale_vjp, RenderSettings,
    ViewAngle,
};
use crate::tensor::Tensor;
use crate::transport::{advect, advect_vjp};
use crate::vgg::{Layer, Vgg19};

/// Content weight `alpha`, style weight `beta` and per-layer style weights.
#[derive(Clone, Debug, PartialEq)]
pub struct LossWeights {
    alpha: f64,
    beta: f64,
    layer_weights: Vec<f64>,
}

impl LossWeights {
    /// `layer_weights` are normalized to sum to one.
    pub fn new(alpha: f64, beta: f64, layer_weights: Vec<f64>) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite() && alpha >= 0.0 && beta >= 0.0) {
            return Err(Error::Config("alpha and beta must be finite and non-negative".into()));
        }
        if alpha == 0.0 && beta == 0.0 {
            return Err(Error::Config("alpha and beta cannot both be zero".into()));
        }
        let sum: f64 = layer_weights.iter().sum();
        if layer_weights.is_empty()
            || layer_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || sum <= 0.0
        {
            return Err(Error::Config("layer weights must be non-negative with a positive sum".into()));
        }
        Ok(Self {
            alpha,
            beta,
            layer_weights: layer_weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    /// Style only (`alpha = 0`, `beta = 1`), equal layer weights.
    pub fn style_only(layers: usize) -> Self {
        Self::new(0.0, 1.0, vec![1.0; layers.max(1)]).expect("valid default weights")
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn layer_weights(&self) -> &[f64] {
        &self.layer_weights
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(self.alpha, beta, self.layer_weights.clone())
    }
}

/// Gram matrices of a style image at the selected layers.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleTarget {
    layers: Vec<Layer>,
    grams: Vec<GramMatrix>,
}

impl StyleTarget {
    pub fn from_features(features: &FeatureStack) -> Self {
        Self {
            layers: features.layers().collect(),
            grams: features.iter().map(|(_, f)| gram(f)).collect(),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn grams(&self) -> &[GramMatrix] {
        &self.grams
    }
}

fn check_layers(a: &FeatureStack, layers: &[Layer]) -> Result<()> {
    if !a.layers().eq(layers.iter().copied()) {
        return Err(domain("feature stacks cover different layers"));
    }
    Ok(())
}

/// Sum over layers of the mean squared activation difference.
pub fn content_loss(f_i: &FeatureStack, f_c: &FeatureStack) -> Result<f64> {
    Ok(content_loss_with_grad(f_i, f_c)?.0)
}

fn content_loss_with_grad(f_i: &FeatureStack, f_c: &FeatureStack) -> Result<(f64, Vec<Tensor>)> {
    check_layers(f_i, &f_c.layers().collect::<Vec<_>>())?;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(f_i.len());
    for ((layer, a), (_, b)) in f_i.iter().zip(f_c.iter()) {
        if !a.same_shape(b) {
            return Err(domain(format!("content features differ in shape at {layer}")));
        }
        let n = a.data().len() as f64;
        let mut g = Tensor::zeros(a.channels(), a.height(), a.width());
        let mut sum = 0.0;
        for ((gv, x), y) in g.data_mut().iter_mut().zip(a.data()).zip(b.data()) {
            let diff = x - y;
            sum += diff * diff;
            *gv = 2.0 * diff / n;
        }
        loss += sum / n;
        grads.push(g);
    }
    Ok((loss, grads))
}

/// `beta * sum_l w_l * mean((G(T_l o F_I) - G(F_S))^2)`. Masks, when given,
/// apply to the synthesized image's features only, and the guided Gram is
/// normalized by the mask energy `sum(T_l^2)` instead of the pixel count so
/// that a partly covered image is compared per covered pixel.
pub fn style_loss(
    f_i: &FeatureStack,
    f_s: &FeatureStack,
    masks: Option<&GuidanceMaskPyramid>,
    weights: &LossWeights,
) -> Result<f64> {
    for ((l, a), (_, b)) in f_i.iter().zip(f_s.iter()) {
        if a.channels() != b.channels() {
            return Err(domain(format!("style features differ in channels at {l}")));
        }
    }
    Ok(style_loss_with_grad(f_i, &StyleTarget::from_features(f_s), masks, weights)?.0)
}

/// Style loss against precomputed Gram matrices, with the gradient with
/// respect to each (unmasked) feature map of `f_i`.
pub fn style_loss_with_grad(
    f_i: &FeatureStack,
    target: &StyleTarget,
    masks: Option<&GuidanceMaskPyramid>,
    weights: &LossWeights,
) -> Result<(f64, Vec<Tensor>)> {
    check_layers(f_i, target.layers())?;
    if weights.layer_weights().len() != target.layers().len() {
        return Err(Error::Config(format!(
            "{} layer weights for {} layers",
            weights.layer_weights().len(),
            target.layers().len()
        )));
    }
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(f_i.len());
    for (((layer, f), s), &w) in f_i
        .iter()
        .zip(target.grams())
        .zip(weights.layer_weights())
    {
        if f.channels() != s.size() {
            return Err(domain(format!("style features differ in channels at {layer}")));
        }
        let mask = match masks {
            Some(m) => Some(m.get(layer).ok_or_else(|| domain(format!("no mask for {layer}")))?),
            None => None,
        };
        let guided;
        let (f_hat, norm) = match mask {
            Some(t) => {
                guided = guide_features(f, t)?;
                (&guided, t.data().iter().map(|x| x * x).sum::<f64>())
            }
            None => (f, f.spatial() as f64),
        };
        let g = gram_normalized(f_hat, norm);
        let count = (s.size() * s.size()) as f64;
        let scale = weights.beta() * w;
        let mut sum = 0.0;
        let mut dg = vec![0.0; g.data().len()];
        for ((d, a), b) in dg.iter_mut().zip(g.data()).zip(s.data()) {
            let diff = a - b;
            sum += diff * diff;
            *d = scale * 2.0 * diff / count;
        }
        loss += scale * sum / count;
        let mut df = gram_vjp_symmetric(f_hat, &dg, norm);
        if let Some(t) = mask {
            df = guide_features(&df, t)?;
        }
        grads.push(df);
    }
    Ok((loss, grads))
}

/// Result of one objective evaluation.
#[derive(Clone, Debug)]
pub struct Evaluation {
    /// View-weighted mean loss.
    pub loss: f64,
    pub per_view: Vec<f64>,
    /// Gradient with respect to the optimized values.
    pub gradient: Vec<f64>,
    /// The image rendered for each view.
    pub images: Vec<Tensor>,
}

/// Everything an objective needs besides the optimized field.
#[derive(Clone, Copy, Debug)]
pub struct Objective<'a> {
    pub net: &'a Vgg19,
    pub style: &'a StyleTarget,
    /// Content features for `alpha > 0`; ignored otherwise.
    pub content: Option<&'a FeatureStack>,
    pub views: &'a [ViewAngle],
    /// Unweighted mean over views when `None`.
    pub view_weights: Option<&'a [f64]>,
    pub weights: &'a LossWeights,
    pub settings: &'a RenderSettings,
}

impl Objective<'_> {
    fn check(&self) -> Result<()> {
        if self.views.is_empty() {
            return Err(domain("at least one view is required"));
        }
        if let Some(w) = self.view_weights {
            if w.len() != self.views.len() || w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::Config("view weights must match views, be non-negative and sum above zero".into()));
            }
        }
        Ok(())
    }

    fn view_weight(&self, i: usize) -> f64 {
        match self.view_weights {
            Some(w) => w[i] / w.iter().sum::<f64>(),
            None => 1.0 / self.views.len() as f64,
        }
    }

    /// Loss of one rendered image and its gradient (same channel count).
    pub fn image_loss(
        &self,
        image: &Tensor,
        masks: Option<&GuidanceMaskPyramid>,
    ) -> Result<(f64, Tensor)> {
        let layers = self.style.layers();
        let rgb = image.to_rgb()?;
        let trace = self.net.forward(&rgb, layers)?;
        let feats = FeatureStack::from_trace(&trace);
        let (mut loss, mut grads) = style_loss_with_grad(&feats, self.style, masks, self.weights)?;
        if self.weights.alpha() > 0.0 {
            if let Some(content) = self.content {
                let (c, cg) = content_loss_with_grad(&feats, content)?;
                loss += self.weights.alpha() * c;
                for (g, h) in grads.iter_mut().zip(cg) {
                    g.data_mut()
                        .iter_mut()
                        .zip(h.data())
                        .for_each(|(a, b)| *a += self.weights.alpha() * b);
                }
            }
        }
        let g_rgb = self.net.backward(&trace, &grads)?;
        let grad = if image.channels() == 1 {
            let n = g_rgb.spatial();
            let data = (0..n)
                .map(|i| g_rgb.data()[i] + g_rgb.data()[n + i] + g_rgb.data()[2 * n + i])
                .collect();
            Tensor::new(1, image.height(), image.width(), data)?
        } else {
            g_rgb
        };
        Ok((loss, grad))
    }

    /// Shape objective at velocity `v` and its gradient with respect to `v`.
    pub fn shape(&self, d: &ScalarField, v: &VectorField, dt: f64) -> Result<Evaluation> {
        self.check()?;
        let advected = advect(d, v, dt)?;
        let mut grad_d = vec![0.0; d.dims().cells()];
        let mut per_view = Vec::with_capacity(self.views.len());
        let mut images = Vec::with_capacity(self.views.len());
        let mut loss = 0.0;
        for (i, &view) in self.views.iter().enumerate() {
            let w = self.view_weight(i);
            let img = render_grayscale(&advected, view, self.settings)?;
            let (l, g) = self.image_loss(&img, None)?;
            per_view.push(l);
            loss += w * l;
            if w > 0.0 {
                let g = g.map(|x| x * w);
                let gd = render_grayscale_vjp(&advected, view, self.settings, &g)?;
                grad_d.iter_mut().zip(gd).for_each(|(a, b)| *a += b);
            }
            images.push(img);
        }
        let (_, gradient) = advect_vjp(d, v, dt, &grad_d)?;
        Ok(Evaluation {
            loss,
            per_view,
            gradient,
            images,
        })
    }

    /// Guided color objective at `c` and its gradient with respect to `c`.
    /// `masks[i]` guides view `i`.
    pub fn color(
        &self,
        d_star: &ScalarField,
        c: &ColorField,
        masks: &[GuidanceMaskPyramid],
    ) -> Result<Evaluation> {
        self.check()?;
        if masks.len() != self.views.len() {
            return Err(domain("one mask pyramid per view required"));
        }
        let mut gradient = vec![0.0; c.values().len()];
        let mut per_view = Vec::with_capacity(self.views.len());
        let mut images = Vec::with_capacity(self.views.len());
        let mut loss = 0.0;
        for (i, &view) in self.views.iter().enumerate() {
            let w = self.view_weight(i);
            let img = render_color(d_star, c, view, self.settings)?;
            let (l, g) = self.image_loss(&img, Some(&masks[i]))?;
            per_view.push(l);
            loss += w * l;
            if w > 0.0 {
                let g = g.map(|x| x * w);
                let gc = render_color_vjp(d_star, c, view, self.settings, &g)?;
                gradient.iter_mut().zip(gc).for_each(|(a, b)| *a += b);
            }
            images.push(img);
        }
        Ok(Evaluation {
            loss,
            per_view,
            gradient,
            images,
        })
    }
}

/// Guidance masks for every view, from the grayscale render of `d_star`.
pub fn view_masks(
    d_star: &ScalarField,
    views: &[ViewAngle],
    settings: &RenderSettings,
    layers: &[Layer],
) -> Result<Vec<GuidanceMaskPyramid>> {
    views
        .iter()
        .map(|&v| build_mask_pyramid(&render_grayscale(d_star, v, settings)?, layers))
        .collect()
}

/// Mean over views of the style loss of the grayscale render of
/// `advect(d, v)` against `style`.
pub fn shape_objective(
    net: &Vgg19,
    d: &ScalarField,
    v: &VectorField,
    style: &FeatureStack,
    views: &[ViewAngle],
    weights: &LossWeights,
    settings: &RenderSettings,
) -> Result<f64> {
    let target = StyleTarget::from_features(style);
    let objective = Objective {
        net,
        style: &target,
        content: None,
        views,
        view_weights: None,
        weights,
        settings,
    };
    Ok(objective.shape(d, v, 1.0)?.loss)
}

/// Mean over views of the guided style loss of the color render of
/// `(d_star, c)`, with masks built from `d_star`.
pub fn color_objective(
    net: &Vgg19,
    d_star: &ScalarField,
    c: &ColorField,
    style: &FeatureStack,
    views: &[ViewAngle],
    weights: &LossWeights,
    settings: &RenderSettings,
) -> Result<f64> {
    let target = StyleTarget::from_features(style);
    let masks = view_masks(d_star, views, settings, target.layers())?;
    let objective = Objective {
        net,
        style: &target,
        content: None,
        views,
        view_weights: None,
        weights,
        settings,
    };
    Ok(objective.color(d_star, c, &masks)?.loss)
}

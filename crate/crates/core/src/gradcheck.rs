//! Finite-difference checks of every hand-written adjoint on small random
//! problems, shared by the test suites and the command line tool.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::features::extract_features;
use crate::fields::{ColorField, Dims, ScalarField, VectorField};
use crate::losses::{view_masks, LossWeights, Objective, StyleTarget};
use crate::render::{render_color, render_color_vjp, render_grayscale, render_grayscale_vjp, RenderSettings, ViewAngle};
use crate::tensor::Tensor;
use crate::transport::{advect, advect_vjp};
use crate::vgg::{Layer, Vgg19};

/// Outcome of one suite.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub name: String,
    /// Components compared.
    pub checked: usize,
    pub max_relative_error: f64,
    pub tolerance: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_relative_error < self.tolerance
    }
}

/// Step for the renderer and transport suites.
pub const STEP: f64 = 1e-3;

/// Step for suites through the network. Pixels are scaled by 255 before
/// the first convolution, so larger steps cross ReLU and pooling kinks.
pub const NETWORK_STEP: f64 = 1e-5;

/// Gradients smaller than this are skipped.
const FLOOR: f64 = 1e-6;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Compares `grad[i]` with central differences of `f` for every index in
/// `indices` whose gradient exceeds the floor.
fn compare(
    name: &str,
    x: &[f64],
    grad: &[f64],
    indices: impl IntoIterator<Item = usize>,
    h: f64,
    tolerance: f64,
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<GradCheck> {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut probe = x.to_vec();
    for i in indices {
        if grad[i].abs() <= FLOOR {
            continue;
        }
        probe[i] = x[i] + h;
        let plus = f(&probe)?;
        probe[i] = x[i] - h;
        let minus = f(&probe)?;
        probe[i] = x[i];
        worst = worst.max(rel_err(grad[i], (plus - minus) / (2.0 * h)));
        checked += 1;
    }
    Ok(GradCheck {
        name: name.into(),
        checked,
        max_relative_error: worst,
        tolerance,
    })
}

/// The largest-magnitude `count` gradient components.
fn strongest(grad: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..grad.len()).collect();
    order.sort_by(|&a, &b| grad[b].abs().total_cmp(&grad[a].abs()));
    order.truncate(count);
    order
}

/// Grayscale render with respect to density on a 6³ grid.
pub fn render_grayscale_suite(seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = Dims::xyz(6, 6, 6);
    let values = uniform(&mut rng, dims.cells(), 0.0, 1.0);
    let settings = RenderSettings { steps: 24, ..RenderSettings::default() };
    let view = ViewAngle::new(0.4)?;
    let probe = Tensor::new(1, 6, 6, uniform(&mut rng, 36, -1.0, 1.0))?;
    let d = ScalarField::new(dims, values.clone())?;
    let grad = render_grayscale_vjp(&d, view, &settings, &probe)?;
    compare("render_grayscale d", &values, &grad, 0..values.len(), STEP, 1e-3, |x| {
        Ok(dot(render_grayscale(&ScalarField::new(dims, x.to_vec())?, view, &settings)?.data(), probe.data()))
    })
}

/// Color render with respect to color on a 6³ grid, density fixed.
pub fn render_color_suite(seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = Dims::xyz(6, 6, 6);
    let d = ScalarField::new(dims, uniform(&mut rng, dims.cells(), 0.0, 1.0))?;
    let values = uniform(&mut rng, dims.cells() * 3, 0.1, 0.9);
    let settings = RenderSettings { steps: 24, ..RenderSettings::default() };
    let view = ViewAngle::new(1.1)?;
    let probe = Tensor::new(3, 6, 6, uniform(&mut rng, 108, -1.0, 1.0))?;
    let grad = render_color_vjp(&d, &ColorField::new(dims, values.clone())?, view, &settings, &probe)?;
    compare("render_color c", &values, &grad, 0..values.len(), STEP, 1e-3, |x| {
        Ok(dot(render_color(&d, &ColorField::new(dims, x.to_vec())?, view, &settings)?.data(), probe.data()))
    })
}

/// Advection with respect to velocity on a 6² grid. Velocities have
/// fractional parts in [0.2, 0.8] so departure points stay off the
/// interpolation kinks at cell centers.
pub fn advection_suite(seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = Dims::xy(6, 6);
    let d = ScalarField::new(dims, uniform(&mut rng, 36, 0.0, 1.0))?;
    let values: Vec<f64> = (0..72)
        .map(|_| rng.random_range(-2..2) as f64 + rng.random_range(0.2..0.8))
        .collect();
    let probe = uniform(&mut rng, 36, -1.0, 1.0);
    let (_, grad) = advect_vjp(&d, &VectorField::new(dims, values.clone())?, 1.0, &probe)?;
    compare("advect v", &values, &grad, 0..values.len(), STEP, 1e-3, |x| {
        Ok(dot(advect(&d, &VectorField::new(dims, x.to_vec())?, 1.0)?.values(), &probe))
    })
}

fn style_target(net: &Vgg19, rng: &mut ChaCha8Rng, layers: &[Layer]) -> Result<StyleTarget> {
    let style = Tensor::new(3, 16, 16, uniform(rng, 3 * 256, 0.0, 1.0))?;
    Ok(StyleTarget::from_features(&extract_features(net, &style, layers)?))
}

/// Shape objective with respect to velocity on an 8² grid, at the ten
/// strongest gradient components.
pub fn shape_objective_suite(net: &Vgg19, seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = [Layer::RELU2_1, Layer::RELU3_1];
    let target = style_target(net, &mut rng, &layers)?;
    let dims = Dims::xy(8, 8);
    let d = ScalarField::from_fn(dims, |p| libm::exp(-((p[0] - 4.0) * (p[0] - 4.0) + (p[1] - 4.0) * (p[1] - 4.0)) / 6.0));
    let values: Vec<f64> = (0..128)
        .map(|_| rng.random_range(-1..1) as f64 + rng.random_range(0.25..0.75))
        .collect();
    let weights = LossWeights::style_only(layers.len());
    let settings = RenderSettings::default();
    let objective = Objective {
        net,
        style: &target,
        content: None,
        views: &[ViewAngle::FRONT],
        view_weights: None,
        weights: &weights,
        settings: &settings,
    };
    let grad = objective.shape(&d, &VectorField::new(dims, values.clone())?, 1.0)?.gradient;
    compare("shape objective v", &values, &grad, strongest(&grad, 10), NETWORK_STEP, 1e-2, |x| {
        Ok(objective.shape(&d, &VectorField::new(dims, x.to_vec())?, 1.0)?.loss)
    })
}

/// Guided color objective with respect to color on a 16² grid, at the ten
/// strongest gradient components.
pub fn color_objective_suite(net: &Vgg19, seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = [Layer::RELU2_1, Layer::RELU3_1];
    let target = style_target(net, &mut rng, &layers)?;
    let dims = Dims::xy(16, 16);
    let d = ScalarField::from_fn(dims, |p| {
        (1.0 - ((p[0] - 8.0) * (p[0] - 8.0) + (p[1] - 8.0) * (p[1] - 8.0)) / 40.0).max(0.0)
    });
    let values = uniform(&mut rng, dims.cells() * 3, 0.1, 0.9);
    let weights = LossWeights::style_only(layers.len());
    let settings = RenderSettings::default();
    let views = [ViewAngle::FRONT];
    let masks = view_masks(&d, &views, &settings, &layers)?;
    let objective = Objective {
        net,
        style: &target,
        content: None,
        views: &views,
        view_weights: None,
        weights: &weights,
        settings: &settings,
    };
    let grad = objective.color(&d, &ColorField::new(dims, values.clone())?, &masks)?.gradient;
    compare("color objective c", &values, &grad, strongest(&grad, 10), NETWORK_STEP, 1e-2, |x| {
        Ok(objective.color(&d, &ColorField::new(dims, x.to_vec())?, &masks)?.loss)
    })
}

/// Network input gradient of a random linear functional of the relu2_1 and
/// relu3_1 activations, at ten random pixels of a 64² image.
pub fn features_suite(net: &Vgg19, seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = [Layer::RELU2_1, Layer::RELU3_1];
    let values = uniform(&mut rng, 3 * 64 * 64, 0.0, 1.0);
    let image = Tensor::new(3, 64, 64, values.clone())?;
    let trace = net.forward(&image, &layers)?;
    let mut probes = Vec::with_capacity(layers.len());
    for &l in &layers {
        let a = trace.activation(l).expect("tapped layer");
        probes.push(Tensor::new(a.channels(), a.height(), a.width(), uniform(&mut rng, a.data().len(), -1.0, 1.0))?);
    }
    let grad = net.backward(&trace, &probes)?.into_data();
    let pixels: Vec<usize> = (0..10).map(|_| rng.random_range(0..values.len())).collect();
    compare("features image", &values, &grad, pixels, NETWORK_STEP, 1e-2, |x| {
        let feats = extract_features(net, &Tensor::new(3, 64, 64, x.to_vec())?, &layers)?;
        Ok(feats.iter().zip(&probes).map(|((_, a), p)| dot(a.data(), p.data())).sum())
    })
}

/// Every suite, in a fixed order.
pub fn run_all(net: &Vgg19, seed: u64) -> Result<Vec<GradCheck>> {
    Ok(vec![
        render_grayscale_suite(seed)?,
        render_color_suite(seed.wrapping_add(1))?,
        advection_suite(seed.wrapping_add(2))?,
        shape_objective_suite(net, seed.wrapping_add(3))?,
        color_objective_suite(net, seed.wrapping_add(4))?,
        features_suite(net, seed.wrapping_add(5))?,
    ])
}

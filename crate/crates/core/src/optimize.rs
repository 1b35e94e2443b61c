//! The two-pass stylization pipeline.
//!
//! The shape pass optimizes a velocity field that transports the input
//! density toward the style; the color pass then optimizes an RGB field on
//! the transported density, which stays fixed. Sequences run the shape pass
//! per frame, blend the velocities over a temporal window, and run the color
//! pass frame by frame.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::adam::{Adam, AdamParams};
use crate::derive_seed;
use crate::error::{domain, Error, Pass, Result};
use crate::features::extract_features;
use crate::features::tile_style;
use crate::fields::{white_noise, ColorField, Dims, ScalarField, VectorField};
use crate::losses::{view_masks, Evaluation, LossWeights, Objective, StyleTarget};
use crate::render::{RenderSettings, ViewAngle};
use crate::tensor::Tensor;
use crate::transport::{advect, advect_color, align_window, TemporalWindow};
use crate::vgg::{Layer, Vgg19};

#[derive(Clone, Debug, PartialEq)]
pub struct StylizationConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub layers: Vec<Layer>,
    pub views: Vec<ViewAngle>,
    /// Unweighted mean over views when `None`.
    pub view_weights: Option<Vec<f64>>,
    pub window: TemporalWindow,
    /// Style image tiling level, 1 = untiled.
    pub tiles: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub render: RenderSettings,
    /// Transport time step in frames.
    pub dt: f64,
    pub adam: AdamParams,
    /// The color pass optimizes `color * color_scale` (export units), so the
    /// learning rate is in those units.
    pub color_scale: f64,
}

impl StylizationConfig {
    /// 300 iterations at learning rate 0.5 on `relu2_1` and `relu3_1`.
    pub fn for_2d() -> Self {
        let layers = vec![Layer::RELU2_1, Layer::RELU3_1];
        Self {
            iterations: 300,
            learning_rate: 0.5,
            weights: LossWeights::style_only(layers.len()),
            layers,
            views: vec![ViewAngle::FRONT],
            view_weights: None,
            window: TemporalWindow::default(),
            tiles: 1,
            seed: 0,
            render: RenderSettings::default(),
            dt: 1.0,
            adam: AdamParams::default(),
            color_scale: 255.0,
        }
    }

    /// As [`StylizationConfig::for_2d`] with learning rate 1.0.
    pub fn for_3d() -> Self {
        Self {
            learning_rate: 1.0,
            ..Self::for_2d()
        }
    }

    pub fn for_dims(dims: Dims) -> Self {
        if dims.is_3d() {
            Self::for_3d()
        } else {
            Self::for_2d()
        }
    }

    pub fn validate(&self, dims: Dims) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::Config("no feature layers selected".into()));
        }
        if self.weights.layer_weights().len() != self.layers.len() {
            return Err(Error::Config(format!(
                "{} layer weights for {} layers",
                self.weights.layer_weights().len(),
                self.layers.len()
            )));
        }
        if self.views.is_empty() {
            return Err(Error::Config("at least one view is required".into()));
        }
        if !dims.is_3d() && self.views.iter().any(|v| v.theta() != 0.0) {
            return Err(Error::Config("2D stylization only supports the front view".into()));
        }
        if self.tiles == 0 {
            return Err(Error::Config("tiling level must be at least 1".into()));
        }
        if !self.dt.is_finite() {
            return Err(Error::Config("non-finite time step".into()));
        }
        if !(self.color_scale.is_finite() && self.color_scale > 0.0) {
            return Err(Error::Config("color scale must be positive".into()));
        }
        self.render.validate()
    }

    fn objective<'a>(&'a self, net: &'a Vgg19, style: &'a StyleTarget) -> Objective<'a> {
        Objective {
            net,
            style,
            content: None,
            views: &self.views,
            view_weights: self.view_weights.as_deref(),
            weights: &self.weights,
            settings: &self.render,
        }
    }
}

/// Style Gram targets for both passes. The shape pass matches the
/// luminance of the (tiled) style image, since its renders are grayscale.
#[derive(Clone, Debug)]
pub struct StyleTargets {
    pub shape: StyleTarget,
    pub color: StyleTarget,
}

impl StyleTargets {
    pub fn new(net: &Vgg19, style: &Tensor, config: &StylizationConfig) -> Result<Self> {
        let tiled = tile_style(&style.to_rgb()?, config.tiles)?;
        let shape = StyleTarget::from_features(&extract_features(
            net,
            &tiled.to_luma_rgb()?,
            &config.layers,
        )?);
        let color = StyleTarget::from_features(&extract_features(net, &tiled, &config.layers)?);
        Ok(Self { shape, color })
    }
}

/// Losses recorded at every iterate of one pass: entry `i` is the loss
/// before step `i`, the last entry the loss of the returned parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LossHistory {
    pub pass: Pass,
    pub total: Vec<f64>,
    pub per_view: Vec<Vec<f64>>,
}

impl LossHistory {
    fn new(pass: Pass) -> Self {
        Self {
            pass,
            total: Vec::new(),
            per_view: Vec::new(),
        }
    }

    pub fn initial(&self) -> f64 {
        self.total[0]
    }

    pub fn last(&self) -> f64 {
        *self.total.last().unwrap()
    }

    pub fn best(&self) -> f64 {
        self.total.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Running minimum of the loss.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.total
            .iter()
            .map(|&l| {
                best = best.min(l);
                best
            })
            .collect()
    }
}

/// One iteration's state, passed to an [`Observer`].
#[derive(Debug)]
pub struct Progress<'a> {
    pub frame: usize,
    pub pass: Pass,
    pub iteration: usize,
    pub loss: f64,
    pub per_view: &'a [f64],
    /// Rendered image of each view at this iterate.
    pub images: &'a [Tensor],
}

/// Progress hook for logging and checkpointing.
pub trait Observer {
    fn on_iteration(&mut self, _progress: &Progress<'_>) {}
}

impl Observer for () {}

fn run_adam(
    pass: Pass,
    frame: usize,
    params: &mut [f64],
    config: &StylizationConfig,
    observer: &mut dyn Observer,
    mut evaluate: impl FnMut(&[f64]) -> Result<Evaluation>,
    project: impl Fn(&mut [f64]),
) -> Result<LossHistory> {
    let mut adam = Adam::new(params.len(), config.learning_rate, config.adam);
    let mut history = LossHistory::new(pass);
    let mut last_good = params.to_vec();
    for iteration in 0..=config.iterations {
        let eval = evaluate(params)?;
        if !eval.loss.is_finite() || eval.gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                pass,
                frame,
                iteration,
                snapshot: last_good,
            });
        }
        last_good.copy_from_slice(params);
        history.total.push(eval.loss);
        history.per_view.push(eval.per_view.clone());
        observer.on_iteration(&Progress {
            frame,
            pass,
            iteration,
            loss: eval.loss,
            per_view: &eval.per_view,
            images: &eval.images,
        });
        if iteration < config.iterations {
            adam.step(params, &eval.gradient);
            project(params);
        }
    }
    Ok(history)
}

#[derive(Clone, Debug)]
pub struct ShapeResult {
    pub velocity: VectorField,
    /// `advect(d, velocity)`.
    pub density: ScalarField,
    pub history: LossHistory,
}

/// Shape pass against precomputed targets; the velocity starts at zero.
pub fn shape_pass(
    net: &Vgg19,
    d: &ScalarField,
    target: &StyleTarget,
    config: &StylizationConfig,
    frame: usize,
    observer: &mut dyn Observer,
) -> Result<ShapeResult> {
    config.validate(d.dims())?;
    let dims = d.dims();
    let objective = config.objective(net, target);
    let mut params = vec![0.0; dims.cells() * dims.rank()];
    let history = run_adam(
        Pass::Shape,
        frame,
        &mut params,
        config,
        observer,
        |p| objective.shape(d, &VectorField::new(dims, p.to_vec())?, config.dt),
        |_| {},
    )?;
    let velocity = VectorField::new(dims, params)?;
    let density = advect(d, &velocity, config.dt)?;
    Ok(ShapeResult {
        velocity,
        density,
        history,
    })
}

/// Stylizes the shape of `d`: returns the optimized velocity and the
/// transported density.
pub fn stylize_shape(
    net: &Vgg19,
    d: &ScalarField,
    style: &Tensor,
    config: &StylizationConfig,
    observer: &mut dyn Observer,
) -> Result<ShapeResult> {
    let targets = StyleTargets::new(net, style, config)?;
    shape_pass(net, d, &targets.shape, config, 0, observer)
}

/// Starting point of the color pass.
#[derive(Clone, Debug, PartialEq)]
pub enum ColorInit {
    /// Density times seeded white noise, in all three channels.
    Noise,
    /// The density itself in all three channels.
    Density,
    /// A given color field; cells left black where the density is non-zero
    /// fall back to noise.
    Warm(ColorField),
}

fn initial_color(d_star: &ScalarField, init: &ColorInit, seed: u64) -> Result<ColorField> {
    let noisy = || -> Result<ColorField> {
        ColorField::gray(&d_star.multiply(&white_noise(d_star.dims(), seed))?)
    };
    match init {
        ColorInit::Noise => noisy(),
        ColorInit::Density => ColorField::gray(d_star),
        ColorInit::Warm(c) => {
            if c.dims() != d_star.dims() {
                return Err(domain("warm-start color extents differ from the density"));
            }
            let fallback = noisy()?;
            let mut values = c.values().to_vec();
            for (i, &d) in d_star.values().iter().enumerate() {
                let rgb = &mut values[i * 3..i * 3 + 3];
                if d > 0.0 && rgb.iter().all(|&x| x == 0.0) {
                    rgb.copy_from_slice(&fallback.values()[i * 3..i * 3 + 3]);
                }
            }
            ColorField::clamped(d_star.dims(), values)
        }
    }
}

#[derive(Clone, Debug)]
pub struct ColorResult {
    pub color: ColorField,
    pub history: LossHistory,
}

/// Color pass against precomputed targets. `d_star` is never modified; the
/// final color is zeroed wherever `d_star` is zero.
pub fn color_pass(
    net: &Vgg19,
    d_star: &ScalarField,
    target: &StyleTarget,
    config: &StylizationConfig,
    frame: usize,
    init: &ColorInit,
    observer: &mut dyn Observer,
) -> Result<ColorResult> {
    config.validate(d_star.dims())?;
    let dims = d_star.dims();
    let scale = config.color_scale;
    let objective = config.objective(net, target);
    let masks = view_masks(d_star, &config.views, &config.render, &config.layers)?;
    let start = initial_color(d_star, init, derive_seed(config.seed, frame as u64))?;
    let mut params: Vec<f64> = start.values().iter().map(|c| c * scale).collect();
    let history = run_adam(
        Pass::Color,
        frame,
        &mut params,
        config,
        observer,
        |p| {
            let c = ColorField::clamped(dims, p.iter().map(|x| x / scale).collect())?;
            let mut eval = objective.color(d_star, &c, &masks)?;
            eval.gradient.iter_mut().for_each(|g| *g /= scale);
            Ok(eval)
        },
        |p| p.iter_mut().for_each(|x| *x = x.clamp(0.0, scale)),
    )?;
    let mut color = ColorField::clamped(dims, params.iter().map(|x| x / scale).collect())?;
    color.mask_by_density(d_star)?;
    Ok(ColorResult { color, history })
}

/// Paints the stylized density `d_star` with the colors of `style`.
pub fn stylize_color(
    net: &Vgg19,
    d_star: &ScalarField,
    style: &Tensor,
    config: &StylizationConfig,
    init: &ColorInit,
    observer: &mut dyn Observer,
) -> Result<ColorResult> {
    let targets = StyleTargets::new(net, style, config)?;
    color_pass(net, d_star, &targets.color, config, 0, init, observer)
}

#[derive(Clone, Debug)]
pub struct StylizedFrame {
    pub d_star: ScalarField,
    pub v_star: VectorField,
    pub color: ColorField,
    pub shape_history: LossHistory,
    pub color_history: LossHistory,
}

fn check_sequence(frames: &[ScalarField], input_velocities: &[VectorField]) -> Result<()> {
    if frames.is_empty() {
        return Err(domain("empty frame sequence"));
    }
    if frames.len() != input_velocities.len() {
        return Err(domain(format!(
            "{} frames but {} input velocities",
            frames.len(),
            input_velocities.len()
        )));
    }
    let dims = frames[0].dims();
    if frames.iter().any(|f| f.dims() != dims) || input_velocities.iter().any(|v| v.dims() != dims) {
        return Err(domain("sequence frames must share extents"));
    }
    Ok(())
}

/// Everything after the per-frame shape passes: window alignment,
/// transport, and the color passes. With a window larger than one, each
/// frame's color starts from the previous frame's color carried along the
/// input flow; otherwise frames are independent.
pub fn finish_sequence(
    net: &Vgg19,
    frames: &[ScalarField],
    input_velocities: &[VectorField],
    shapes: Vec<ShapeResult>,
    targets: &StyleTargets,
    config: &StylizationConfig,
    observer: &mut dyn Observer,
) -> Result<Vec<StylizedFrame>> {
    check_sequence(frames, input_velocities)?;
    if shapes.len() != frames.len() {
        return Err(domain("one shape result per frame required"));
    }
    let window = if config.window.size() > frames.len() {
        TemporalWindow::new(frames.len())?
    } else {
        config.window.clone()
    };
    let raw: Vec<VectorField> = shapes.iter().map(|s| s.velocity.clone()).collect();
    let aligned = align_window(&raw, input_velocities, &window)?;
    let mut out: Vec<StylizedFrame> = Vec::with_capacity(frames.len());
    for (t, (shape, v_star)) in shapes.into_iter().zip(aligned).enumerate() {
        let d_star = advect(&frames[t], &v_star, config.dt)?;
        let init = match out.last() {
            Some(prev) if window.size() > 1 => {
                ColorInit::Warm(advect_color(&prev.color, &input_velocities[t - 1], 1.0)?)
            }
            _ => ColorInit::Noise,
        };
        let color = color_pass(net, &d_star, &targets.color, config, t, &init, observer)?;
        out.push(StylizedFrame {
            d_star,
            v_star,
            color: color.color,
            shape_history: shape.history,
            color_history: color.history,
        });
    }
    Ok(out)
}

/// Stylizes a density sequence. `input_velocities[t]` carries frame `t`
/// to frame `t + 1`.
pub fn stylize_sequence(
    net: &Vgg19,
    frames: &[ScalarField],
    input_velocities: &[VectorField],
    style: &Tensor,
    config: &StylizationConfig,
    observer: &mut dyn Observer,
) -> Result<Vec<StylizedFrame>> {
    check_sequence(frames, input_velocities)?;
    let targets = StyleTargets::new(net, style, config)?;
    let shapes = frames
        .iter()
        .enumerate()
        .map(|(t, d)| shape_pass(net, d, &targets.shape, config, t, observer))
        .collect::<Result<Vec<_>>>()?;
    finish_sequence(net, frames, input_velocities, shapes, &targets, config, observer)
}

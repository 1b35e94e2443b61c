//! Differentiable orthographic emission-absorption rendering.
//!
//! Each pixel of a 3D render marches one ray through the whole grid depth
//! (the camera looks along +z after rotating the volume about the vertical
//! y axis). The traversal is `r_max` long in optical units and split into
//! `steps` segments of length `dr`. Density is taken constant on a segment,
//! so the segment's emission integrates exactly:
//!
//! ```text
//! I += T * (1 - exp(-gamma * d * dr)) / gamma,   T *= exp(-gamma * d * dr)
//! ```
//!
//! which reduces to `I += T * d * dr` as gamma goes to zero. Color renders
//! weight every segment by the color sampled at the same point.
//!
//! 2D grids are not ray marched: the image is the density (or color times
//! density) itself, with image row 0 holding the top row `y = ny - 1`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use crate::error::{domain, Result};
use crate::fields::{ColorField, Dims, Position, ScalarField, Stencil};
use crate::tensor::Tensor;

/// Rendered images are plain tensors with 1 (grayscale) or 3 (RGB) channels.
pub type RenderedImage = Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct RenderSettings {
    /// Transmittance factor: how much light is absorbed per unit density.
    pub gamma: f64,
    /// Ray-march segments per ray.
    pub steps: usize,
    /// Optical length of a ray crossing the whole grid depth.
    pub r_max: f64,
    /// Output `(width, height)`; defaults to the grid's x/y face.
    pub resolution: Option<(usize, usize)>,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            steps: 64,
            r_max: 1.0,
            resolution: None,
        }
    }
}

impl RenderSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(domain(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.steps < 2 {
            return Err(domain(format!("at least 2 ray-march steps required, got {}", self.steps)));
        }
        if !(self.r_max.is_finite() && self.r_max > 0.0) {
            return Err(domain(format!("r_max must be positive, got {}", self.r_max)));
        }
        if let Some((w, h)) = self.resolution {
            if w == 0 || h == 0 {
                return Err(domain("zero image resolution"));
            }
        }
        Ok(())
    }

    /// `(width, height)` of renders of a grid with `dims`.
    pub fn image_size(&self, dims: Dims) -> (usize, usize) {
        if dims.is_3d() {
            self.resolution.unwrap_or((dims.nx(), dims.ny()))
        } else {
            (dims.nx(), dims.ny())
        }
    }
}

/// Camera rotation about the vertical axis, normalized into `[0, 2pi)`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ViewAngle(f64);

impl ViewAngle {
    pub const FRONT: ViewAngle = ViewAngle(0.0);

    pub fn new(theta: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(domain("non-finite view angle"));
        }
        let r = theta % TAU;
        let t = if r < 0.0 { r + TAU } else { r };
        Ok(Self(if t >= TAU { 0.0 } else { t }))
    }

    pub fn theta(self) -> f64 {
        self.0
    }

    fn is_identity(self) -> bool {
        self.0 == 0.0
    }
}

/// Maps camera-frame positions to grid positions for one view.
#[derive(Clone, Copy)]
struct Rotation {
    cos: f64,
    sin: f64,
    cx: f64,
    cz: f64,
}

impl Rotation {
    fn new(dims: Dims, view: ViewAngle) -> Self {
        let (cos, sin) = if view.is_identity() {
            (1.0, 0.0)
        } else {
            (libm::cos(view.theta()), libm::sin(view.theta()))
        };
        Self {
            cos,
            sin,
            cx: dims.nx() as f64 / 2.0,
            cz: dims.nz() as f64 / 2.0,
        }
    }

    #[inline]
    fn apply(&self, p: Position) -> Position {
        let rx = p[0] - self.cx;
        let rz = p[2] - self.cz;
        [
            self.cx + self.cos * rx - self.sin * rz,
            p[1],
            self.cz + self.sin * rx + self.cos * rz,
        ]
    }
}

/// Ray geometry for one 3D render.
struct Camera {
    dims: Dims,
    rot: Rotation,
    width: usize,
    height: usize,
    steps: usize,
    dr: f64,
    gamma: f64,
}

impl Camera {
    fn new(dims: Dims, view: ViewAngle, settings: &RenderSettings) -> Self {
        let (width, height) = settings.image_size(dims);
        Self {
            dims,
            rot: Rotation::new(dims, view),
            width,
            height,
            steps: settings.steps,
            dr: settings.r_max / settings.steps as f64,
            gamma: settings.gamma,
        }
    }

    #[inline]
    fn stencil(&self, pixel: usize, step: usize) -> Stencil {
        let (row, col) = (pixel / self.width, pixel % self.width);
        let x = (col as f64 + 0.5) * self.dims.nx() as f64 / self.width as f64;
        let y = self.dims.ny() as f64 - (row as f64 + 0.5) * self.dims.ny() as f64 / self.height as f64;
        let z = (step as f64 + 0.5) * self.dims.nz() as f64 / self.steps as f64;
        Stencil::new(&self.dims, self.rot.apply([x, y, z]))
    }

    /// `(T * f, e)` for one segment of density `s`.
    #[inline]
    fn segment(&self, s: f64) -> (f64, f64) {
        let a = -self.gamma * s * self.dr;
        (-libm::expm1(a) / self.gamma, libm::exp(a))
    }
}

fn check_density(d: &ScalarField) -> Result<()> {
    if d.values().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(domain("non-finite density"))
    }
}

fn check_settings(dims: Dims, settings: &RenderSettings) -> Result<()> {
    settings.validate()?;
    if !dims.is_3d() {
        if let Some(res) = settings.resolution {
            if res != (dims.nx(), dims.ny()) {
                return Err(domain("2D renders use the grid resolution"));
            }
        }
    }
    Ok(())
}

fn check_view_2d(dims: Dims, view: ViewAngle) -> Result<()> {
    if !dims.is_3d() && !view.is_identity() {
        return Err(domain("2D fields only have the front view"));
    }
    Ok(())
}

/// Grid index of image pixel `(row, col)` for a 2D field.
#[inline]
fn flat_index(dims: Dims, pixel: usize) -> usize {
    let (row, col) = (pixel / dims.nx(), pixel % dims.nx());
    dims.index(col, dims.ny() - 1 - row, 0)
}

/// Grayscale intensity image of `d` seen from `view`.
pub fn render_grayscale(
    d: &ScalarField,
    view: ViewAngle,
    settings: &RenderSettings,
) -> Result<RenderedImage> {
    let dims = d.dims();
    check_settings(dims, settings)?;
    check_view_2d(dims, view)?;
    check_density(d)?;
    if !dims.is_3d() {
        let data = (0..dims.cells()).map(|p| d.values()[flat_index(dims, p)]).collect();
        return Tensor::new(1, dims.ny(), dims.nx(), data);
    }
    let cam = Camera::new(dims, view, settings);
    let mut img = Tensor::zeros(1, cam.height, cam.width);
    for (pixel, out) in img.data_mut().iter_mut().enumerate() {
        let mut t = 1.0;
        let mut acc = 0.0;
        for k in 0..cam.steps {
            let s = cam.stencil(pixel, k).apply(d.values(), 1, 0);
            let (f, e) = cam.segment(s);
            acc += t * f;
            t *= e;
        }
        *out = acc;
    }
    Ok(img)
}

/// Gradient of `sum(grad_image * render_grayscale(d))` with respect to `d`.
pub fn render_grayscale_vjp(
    d: &ScalarField,
    view: ViewAngle,
    settings: &RenderSettings,
    grad_image: &Tensor,
) -> Result<Vec<f64>> {
    let dims = d.dims();
    check_settings(dims, settings)?;
    check_view_2d(dims, view)?;
    let (w, h) = settings.image_size(dims);
    if grad_image.channels() != 1 || grad_image.width() != w || grad_image.height() != h {
        return Err(domain("image gradient shape does not match the render"));
    }
    let mut grad = vec![0.0; dims.cells()];
    if !dims.is_3d() {
        for (p, g) in grad_image.data().iter().enumerate() {
            grad[flat_index(dims, p)] += g;
        }
        return Ok(grad);
    }
    let cam = Camera::new(dims, view, settings);
    let (gamma, dr) = (cam.gamma, cam.dr);
    let mut stencils = Vec::with_capacity(cam.steps);
    for (pixel, &g) in grad_image.data().iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        stencils.clear();
        let mut t = 1.0;
        let mut total = 0.0;
        for k in 0..cam.steps {
            let st = cam.stencil(pixel, k);
            let (f, e) = cam.segment(st.apply(d.values(), 1, 0));
            total += t * f;
            t *= e;
            stencils.push(st);
        }
        // dI/ds_k = T_k * dr * e_k - gamma * dr * (emission behind segment k)
        let mut t = 1.0;
        let mut front = 0.0;
        for st in &stencils {
            let (f, e) = cam.segment(st.apply(d.values(), 1, 0));
            front += t * f;
            let behind = total - front;
            let ds = t * dr * e - gamma * dr * behind;
            st.scatter(&mut grad, 1, 0, g * ds);
            t *= e;
        }
    }
    Ok(grad)
}

fn check_color(d: &ScalarField, c: &ColorField) -> Result<()> {
    if d.dims() != c.dims() {
        return Err(domain(format!(
            "density extents {:?} do not match color extents {:?}",
            d.dims().extents(),
            c.dims().extents()
        )));
    }
    Ok(())
}

/// RGB emission image of color `c` carried by density `d`, values in the
/// renderer's native range (not export-scaled).
pub fn render_color(
    d: &ScalarField,
    c: &ColorField,
    view: ViewAngle,
    settings: &RenderSettings,
) -> Result<RenderedImage> {
    let dims = d.dims();
    check_color(d, c)?;
    check_settings(dims, settings)?;
    check_view_2d(dims, view)?;
    check_density(d)?;
    if !dims.is_3d() {
        let n = dims.cells();
        let mut img = Tensor::zeros(3, dims.ny(), dims.nx());
        let out = img.data_mut();
        for p in 0..n {
            let i = flat_index(dims, p);
            let rgb = c.at(i);
            let dv = d.values()[i];
            for ch in 0..3 {
                out[ch * n + p] = rgb[ch] * dv;
            }
        }
        return Ok(img);
    }
    let cam = Camera::new(dims, view, settings);
    let n = cam.width * cam.height;
    let mut img = Tensor::zeros(3, cam.height, cam.width);
    let out = img.data_mut();
    for pixel in 0..n {
        let mut t = 1.0;
        let mut acc = [0.0; 3];
        for k in 0..cam.steps {
            let st = cam.stencil(pixel, k);
            let (f, e) = cam.segment(st.apply(d.values(), 1, 0));
            let tf = t * f;
            for (ch, a) in acc.iter_mut().enumerate() {
                *a += tf * st.apply(c.values(), 3, ch);
            }
            t *= e;
        }
        for ch in 0..3 {
            out[ch * n + pixel] = acc[ch];
        }
    }
    Ok(img)
}

/// Gradient of `sum(grad_image * render_color(d, c))` with respect to the
/// color values (interleaved RGB per cell); `d` is held constant.
pub fn render_color_vjp(
    d: &ScalarField,
    c: &ColorField,
    view: ViewAngle,
    settings: &RenderSettings,
    grad_image: &Tensor,
) -> Result<Vec<f64>> {
    let dims = d.dims();
    check_color(d, c)?;
    check_settings(dims, settings)?;
    check_view_2d(dims, view)?;
    let (w, h) = settings.image_size(dims);
    if grad_image.channels() != 3 || grad_image.width() != w || grad_image.height() != h {
        return Err(domain("image gradient shape does not match the render"));
    }
    let n = w * h;
    let g = grad_image.data();
    let mut grad = vec![0.0; dims.cells() * 3];
    if !dims.is_3d() {
        for p in 0..n {
            let i = flat_index(dims, p);
            let dv = d.values()[i];
            for ch in 0..3 {
                grad[i * 3 + ch] += g[ch * n + p] * dv;
            }
        }
        return Ok(grad);
    }
    let cam = Camera::new(dims, view, settings);
    for pixel in 0..n {
        let gp = [g[pixel], g[n + pixel], g[2 * n + pixel]];
        if gp == [0.0; 3] {
            continue;
        }
        let mut t = 1.0;
        for k in 0..cam.steps {
            let st = cam.stencil(pixel, k);
            let (f, e) = cam.segment(st.apply(d.values(), 1, 0));
            let tf = t * f;
            for (ch, &gc) in gp.iter().enumerate() {
                st.scatter(&mut grad, 3, ch, gc * tf);
            }
            t *= e;
        }
    }
    Ok(grad)
}

/// Resamples a 3D field into the camera frame of `view` (rotation about the
/// vertical axis through the grid center). The front view is the identity.
pub fn rotate_view(d: &ScalarField, view: ViewAngle) -> Result<ScalarField> {
    let dims = d.dims();
    if !dims.is_3d() {
        if view.is_identity() {
            return Ok(d.clone());
        }
        return Err(domain("cannot rotate a 2D field"));
    }
    if view.is_identity() {
        return Ok(d.clone());
    }
    let rot = Rotation::new(dims, view);
    let values = (0..dims.cells())
        .map(|i| {
            Stencil::new(&dims, rot.apply(dims.center(i)))
                .apply(d.values(), 1, 0)
                .max(0.0)
        })
        .collect();
    ScalarField::new(dims, values)
}

//! Semi-Lagrangian transport of densities, colors and velocities, and the
//! windowed alignment of per-frame stylization velocities.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{domain, Result};
use crate::fields::{ColorField, Dims, ScalarField, Stencil, VectorField};

fn check_transport(dims: Dims, v: &VectorField, dt: f64) -> Result<()> {
    if dims != v.dims() {
        return Err(domain(format!(
            "field extents {:?} do not match velocity extents {:?}",
            dims.extents(),
            v.dims().extents()
        )));
    }
    if !dt.is_finite() {
        return Err(domain("non-finite time step"));
    }
    Ok(())
}

#[inline]
fn backtrace(dims: &Dims, v: &VectorField, index: usize, dt: f64) -> Stencil {
    let c = dims.center(index);
    let u = v.at(index);
    Stencil::new(dims, [c[0] - dt * u[0], c[1] - dt * u[1], c[2] - dt * u[2]])
}

/// Semi-Lagrangian step on an interleaved multi-channel array.
pub(crate) fn advect_raw(data: &[f64], channels: usize, v: &VectorField, dt: f64) -> Vec<f64> {
    let dims = v.dims();
    let mut out = vec![0.0; data.len()];
    for i in 0..dims.cells() {
        let s = backtrace(&dims, v, i, dt);
        for ch in 0..channels {
            out[i * channels + ch] = s.apply(data, channels, ch);
        }
    }
    out
}

/// Transports `d` along `v` for `dt` frames: each output cell samples `d`
/// at its backtraced position `x - dt * v(x)`.
pub fn advect(d: &ScalarField, v: &VectorField, dt: f64) -> Result<ScalarField> {
    check_transport(d.dims(), v, dt)?;
    Ok(ScalarField::from_raw(
        d.dims(),
        advect_raw(d.values(), 1, v, dt),
    ))
}

/// Vector-Jacobian product of [`advect`]: given `dL/d(out)`, returns
/// `(dL/dd, dL/dv)` with `dL/dv` interleaved like the velocity values.
pub fn advect_vjp(
    d: &ScalarField,
    v: &VectorField,
    dt: f64,
    grad_out: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_transport(d.dims(), v, dt)?;
    let dims = d.dims();
    if grad_out.len() != dims.cells() {
        return Err(domain("gradient length does not match the field"));
    }
    let rank = dims.rank();
    let mut grad_d = vec![0.0; dims.cells()];
    let mut grad_v = vec![0.0; dims.cells() * rank];
    for (i, &g) in grad_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let s = backtrace(&dims, v, i, dt);
        let (_, dpos) = s.apply_with_gradient(d.values(), 1, 0);
        for a in 0..rank {
            grad_v[i * rank + a] = -dt * g * dpos[a];
        }
        s.scatter(&mut grad_d, 1, 0, g);
    }
    Ok((grad_d, grad_v))
}

/// [`advect`] applied to each color channel independently.
pub fn advect_color(c: &ColorField, v: &VectorField, dt: f64) -> Result<ColorField> {
    check_transport(c.dims(), v, dt)?;
    ColorField::clamped(c.dims(), advect_raw(c.values(), 3, v, dt))
}

/// Transports every component of a velocity field along another.
pub fn advect_velocity(w: &VectorField, v: &VectorField, dt: f64) -> Result<VectorField> {
    check_transport(w.dims(), v, dt)?;
    Ok(VectorField::from_raw(
        w.dims(),
        advect_raw(w.values(), w.components(), v, dt),
    ))
}

/// Number of frames whose stylization velocities are blended into each frame.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalWindow {
    size: usize,
    weights: Option<Vec<f64>>,
}

impl TemporalWindow {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(domain("temporal window size must be at least 1"));
        }
        Ok(Self {
            size,
            weights: None,
        })
    }

    /// Per-offset weights, earliest frame first. Uniform when unset.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.size {
            return Err(domain(format!(
                "{} window weights for a window of {}",
                weights.len(),
                self.size
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(domain("window weights must be non-negative with a positive sum"));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Frame offsets covered relative to the center frame, e.g. `-1..=1` for 3.
    pub fn offsets(&self) -> core::ops::RangeInclusive<isize> {
        let lo = -(((self.size - 1) / 2) as isize);
        lo..=lo + self.size as isize - 1
    }

    fn weight(&self, slot: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[slot])
    }
}

impl Default for TemporalWindow {
    fn default() -> Self {
        Self {
            size: 1,
            weights: None,
        }
    }
}

/// Blends each frame's stylization velocity with its window neighbours,
/// carrying each neighbour to the target frame by repeated single-frame
/// advection along the input flow. `input_velocities[t]` moves frame `t` to
/// frame `t + 1`. Frames near the ends average over the neighbours that exist.
pub fn align_window(
    stylization_velocities: &[VectorField],
    input_velocities: &[VectorField],
    window: &TemporalWindow,
) -> Result<Vec<VectorField>> {
    let n = stylization_velocities.len();
    if n != input_velocities.len() {
        return Err(domain(format!(
            "{n} stylization velocities but {} input velocities",
            input_velocities.len()
        )));
    }
    if n < window.size() {
        return Err(domain(format!(
            "window of {} needs at least as many frames, got {n}",
            window.size()
        )));
    }
    if window.size() == 1 {
        return Ok(stylization_velocities.to_vec());
    }
    let dims = stylization_velocities[0].dims();
    if stylization_velocities
        .iter()
        .chain(input_velocities)
        .any(|v| v.dims() != dims)
    {
        return Err(domain("velocity sequences must share extents"));
    }

    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let mut acc = vec![0.0; stylization_velocities[t].values().len()];
        let mut total = 0.0;
        for (slot, off) in window.offsets().enumerate() {
            let s = t as isize + off;
            if s < 0 || s >= n as isize {
                continue;
            }
            let s = s as usize;
            let w = window.weight(slot);
            if w == 0.0 {
                continue;
            }
            let mut carried = stylization_velocities[s].clone();
            if s < t {
                for u in &input_velocities[s..t] {
                    carried = advect_velocity(&carried, u, 1.0)?;
                }
            } else {
                for u in input_velocities[t..s].iter().rev() {
                    carried = advect_velocity(&carried, u, -1.0)?;
                }
            }
            for (a, c) in acc.iter_mut().zip(carried.values()) {
                *a += w * c;
            }
            total += w;
        }
        for a in &mut acc {
            *a /= total;
        }
        out.push(VectorField::from_raw(dims, acc));
    }
    Ok(out)
}

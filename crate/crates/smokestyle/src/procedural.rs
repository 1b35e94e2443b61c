//! Procedural density sequences with their advecting velocities.

use std::f64::consts::TAU;
use std::str::FromStr;

use smokestyle_core::{advect, derive_seed, Dims, ScalarField, VectorField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmokeKind {
    /// Gaussian blob rising at a constant half cell per frame.
    Blob,
    /// Density emitted near the floor, carried up by a swaying buoyant flow.
    Plume,
}

impl FromStr for SmokeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "blob" => Ok(Self::Blob),
            "plume" => Ok(Self::Plume),
            _ => Err(format!("unknown smoke kind {s:?} (blob or plume)")),
        }
    }
}

/// `velocities[t]` carries `densities[t]` toward frame `t + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmokeSequence {
    pub densities: Vec<ScalarField>,
    pub velocities: Vec<VectorField>,
}

const RISE: f64 = 0.5;

fn unit(seed: u64, index: u64) -> f64 {
    (derive_seed(seed, index) >> 11) as f64 / (1u64 << 53) as f64
}

fn center(dims: Dims) -> [f64; 3] {
    [dims.nx() as f64 / 2.0, dims.ny() as f64 / 2.0, dims.nz() as f64 / 2.0]
}

fn gaussian(dims: Dims, c: [f64; 3], sigma: f64) -> ScalarField {
    ScalarField::from_fn(dims, |p| {
        let mut r2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
        if dims.is_3d() {
            r2 += (p[2] - c[2]).powi(2);
        }
        let v = (-r2 / (2.0 * sigma * sigma)).exp();
        if v < 1e-3 { 0.0 } else { v }
    })
}

fn min_extent(dims: Dims) -> f64 {
    dims.extents().iter().copied().min().unwrap_or(1) as f64
}

fn blob(dims: Dims, frames: usize) -> SmokeSequence {
    let sigma = min_extent(dims) / 6.0;
    let c = center(dims);
    let moving = frames > 1;
    let rise = if moving { RISE } else { 0.0 };
    let velocity = VectorField::from_fn(dims, |_| [0.0, rise, 0.0]);
    SmokeSequence {
        densities: (0..frames)
            .map(|t| gaussian(dims, [c[0], c[1] + rise * t as f64, c[2]], sigma))
            .collect(),
        velocities: vec![velocity; frames],
    }
}

fn plume_velocity(dims: Dims, seed: u64, t: usize) -> VectorField {
    let amp = 0.3 + 0.3 * unit(seed, 3 * t as u64);
    let phase_x = TAU * unit(seed, 3 * t as u64 + 1);
    let phase_z = TAU * unit(seed, 3 * t as u64 + 2);
    let k = TAU / dims.ny() as f64;
    let is_3d = dims.is_3d();
    // Each horizontal component depends only on height, so the flow is
    // divergence-free and transport neither compresses nor dilutes.
    VectorField::from_fn(dims, |p| {
        let z = if is_3d { amp * (k * p[1] + phase_z).sin() } else { 0.0 };
        [amp * (k * p[1] + phase_x).sin(), 1.0, z]
    })
}

fn plume(dims: Dims, frames: usize, seed: u64) -> SmokeSequence {
    let c = center(dims);
    let source = gaussian(dims, [c[0], 0.2 * dims.ny() as f64, c[2]], min_extent(dims) / 12.0);
    let mut densities = vec![source.clone()];
    let mut velocities = Vec::with_capacity(frames);
    for t in 0..frames {
        let v = plume_velocity(dims, seed, t);
        if t + 1 < frames {
            let carried = advect(&densities[t], &v, 1.0).expect("matching extents");
            let next = carried
                .values()
                .iter()
                .zip(source.values())
                .map(|(a, s)| (a + s).min(1.0))
                .collect();
            densities.push(ScalarField::new(dims, next).expect("finite, non-negative"));
        }
        velocities.push(v);
    }
    SmokeSequence { densities, velocities }
}

/// Deterministic smoke: `frames` densities in `[0, 1]` and the velocities
/// that advect them. A single blob frame is a static centered Gaussian.
pub fn make_procedural_smoke(kind: SmokeKind, dims: Dims, frames: usize, seed: u64) -> SmokeSequence {
    let frames = frames.max(1);
    match kind {
        SmokeKind::Blob => blob(dims, frames),
        SmokeKind::Plume => plume(dims, frames, seed),
    }
}

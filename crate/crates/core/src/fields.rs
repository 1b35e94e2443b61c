//! Dense cell-centered grids for density, velocity and color.
//!
//! Cell `(i, j, k)` sits at position `(i + 0.5, j + 0.5, k + 0.5)` in cell
//! units. Values are stored x-fastest, then y, then z; multi-channel fields
//! interleave their channels per cell. Sampling is linear (bilinear on 2D
//! grids, trilinear on 3D grids) with clamp-to-edge boundaries.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Result};

/// A position in cell units. 2D grids ignore the third coordinate.
pub type Position = [f64; 3];

/// Extents of a 2D or 3D grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    rank: usize,
    extents: [usize; 3],
}

impl Dims {
    pub fn new(extents: &[usize]) -> Result<Self> {
        if extents.len() != 2 && extents.len() != 3 {
            return Err(domain(format!(
                "grids have rank 2 or 3, got {}",
                extents.len()
            )));
        }
        if extents.contains(&0) {
            return Err(domain(format!("zero extent in {extents:?}")));
        }
        let mut e = [1; 3];
        e[..extents.len()].copy_from_slice(extents);
        Ok(Self {
            rank: extents.len(),
            extents: e,
        })
    }

    /// Panics on a zero extent.
    pub fn xy(nx: usize, ny: usize) -> Self {
        Self::new(&[nx, ny]).expect("non-zero 2D extents")
    }

    /// Panics on a zero extent.
    pub fn xyz(nx: usize, ny: usize, nz: usize) -> Self {
        Self::new(&[nx, ny, nz]).expect("non-zero 3D extents")
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_3d(&self) -> bool {
        self.rank == 3
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents[..self.rank]
    }

    /// Extents padded to three axes with 1.
    pub fn padded(&self) -> [usize; 3] {
        self.extents
    }

    pub fn nx(&self) -> usize {
        self.extents[0]
    }

    pub fn ny(&self) -> usize {
        self.extents[1]
    }

    pub fn nz(&self) -> usize {
        self.extents[2]
    }

    pub fn cells(&self) -> usize {
        self.extents.iter().product()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.extents[0] * (y + self.extents[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let nx = self.extents[0];
        let ny = self.extents[1];
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    /// Center of cell `index` in cell units.
    #[inline]
    pub fn center(&self, index: usize) -> Position {
        let [x, y, z] = self.coords(index);
        let z = if self.rank == 3 { z as f64 + 0.5 } else { 0.5 };
        [x as f64 + 0.5, y as f64 + 0.5, z]
    }
}

/// Linear interpolation weights for one sample position, with the derivative
/// of every weight with respect to the position.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Stencil {
    pub idx: [usize; 8],
    pub w: [f64; 8],
    pub dw: [[f64; 3]; 8],
}

#[inline]
fn axis_weights(p: f64, n: usize) -> ([usize; 2], [f64; 2]) {
    let p = p - 0.5;
    let i0 = libm::floor(p);
    let f = p - i0;
    let clamp = |i: f64| -> usize {
        if i < 0.0 {
            0
        } else if i >= (n - 1) as f64 {
            n - 1
        } else {
            i as usize
        }
    };
    ([clamp(i0), clamp(i0 + 1.0)], [1.0 - f, f])
}

impl Stencil {
    /// `pos` must be finite.
    #[inline]
    pub(crate) fn new(dims: &Dims, pos: Position) -> Self {
        let [nx, ny, nz] = dims.extents;
        let (ix, wx) = axis_weights(pos[0], nx);
        let (iy, wy) = axis_weights(pos[1], ny);
        let (iz, wz) = if dims.rank == 3 {
            axis_weights(pos[2], nz)
        } else {
            ([0, 0], [1.0, 0.0])
        };
        let dz = if dims.rank == 3 { [-1.0, 1.0] } else { [0.0, 0.0] };
        let mut s = Stencil {
            idx: [0; 8],
            w: [0.0; 8],
            dw: [[0.0; 3]; 8],
        };
        let sign = [-1.0, 1.0];
        for c in 0..8 {
            let (a, b, k) = (c & 1, (c >> 1) & 1, c >> 2);
            s.idx[c] = dims.index(ix[a], iy[b], iz[k]);
            s.w[c] = wx[a] * wy[b] * wz[k];
            s.dw[c] = [
                sign[a] * wy[b] * wz[k],
                wx[a] * sign[b] * wz[k],
                wx[a] * wy[b] * dz[k],
            ];
        }
        s
    }

    #[inline]
    pub(crate) fn apply(&self, data: &[f64], channels: usize, channel: usize) -> f64 {
        let mut acc = 0.0;
        for c in 0..8 {
            acc += self.w[c] * data[self.idx[c] * channels + channel];
        }
        acc
    }

    /// Value and positional gradient of one channel.
    #[inline]
    pub(crate) fn apply_with_gradient(
        &self,
        data: &[f64],
        channels: usize,
        channel: usize,
    ) -> (f64, [f64; 3]) {
        let mut acc = 0.0;
        let mut g = [0.0; 3];
        for c in 0..8 {
            let v = data[self.idx[c] * channels + channel];
            acc += self.w[c] * v;
            g[0] += self.dw[c][0] * v;
            g[1] += self.dw[c][1] * v;
            g[2] += self.dw[c][2] * v;
        }
        (acc, g)
    }

    /// Adjoint of [`Stencil::apply`].
    #[inline]
    pub(crate) fn scatter(&self, grad: &mut [f64], channels: usize, channel: usize, g: f64) {
        for c in 0..8 {
            grad[self.idx[c] * channels + channel] += self.w[c] * g;
        }
    }
}

fn check_position(pos: Position) -> Result<()> {
    if pos.iter().all(|p| p.is_finite()) {
        Ok(())
    } else {
        Err(domain(format!("non-finite sample position {pos:?}")))
    }
}

fn check_len(dims: &Dims, channels: usize, len: usize) -> Result<()> {
    if dims.cells() * channels != len {
        return Err(domain(format!(
            "{} values for {} cells with {channels} channel(s)",
            len,
            dims.cells()
        )));
    }
    Ok(())
}

/// Non-negative density per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    dims: Dims,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(dims: Dims, values: Vec<f64>) -> Result<Self> {
        check_len(&dims, 1, values.len())?;
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(domain(format!("density value {v} is not a finite non-negative number")));
        }
        Ok(Self { dims, values })
    }

    pub(crate) fn from_raw(dims: Dims, values: Vec<f64>) -> Self {
        debug_assert_eq!(dims.cells(), values.len());
        Self { dims, values }
    }

    pub fn zeros(dims: Dims) -> Self {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: Dims, value: f64) -> Self {
        assert!(value.is_finite() && value >= 0.0);
        Self {
            dims,
            values: vec![value; dims.cells()],
        }
    }

    /// Builds a field from cell-center positions. Negative outputs are clamped to zero.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(Position) -> f64) -> Self {
        let values = (0..dims.cells())
            .map(|i| {
                let v = f(dims.center(i));
                if v.is_finite() {
                    v.max(0.0)
                } else {
                    0.0
                }
            })
            .collect();
        Self { dims, values }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.dims.index(x, y, z)]
    }

    pub fn sample(&self, pos: Position) -> Result<f64> {
        check_position(pos)?;
        Ok(Stencil::new(&self.dims, pos).apply(&self.values, 1, 0))
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Pointwise product, used to modulate a density by noise.
    pub fn multiply(&self, other: &ScalarField) -> Result<ScalarField> {
        if self.dims != other.dims {
            return Err(domain("pointwise product of fields with different dims"));
        }
        Ok(Self::from_raw(
            self.dims,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        ))
    }

    pub fn scaled(&self, k: f64) -> Result<ScalarField> {
        Self::new(self.dims, self.values.iter().map(|v| v * k).collect())
    }
}

/// Per-cell velocity in cells per frame, one component per spatial axis.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    dims: Dims,
    values: Vec<f64>,
}

impl VectorField {
    pub fn new(dims: Dims, values: Vec<f64>) -> Result<Self> {
        check_len(&dims, dims.rank(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(domain("non-finite velocity component"));
        }
        Ok(Self { dims, values })
    }

    pub(crate) fn from_raw(dims: Dims, values: Vec<f64>) -> Self {
        debug_assert_eq!(dims.cells() * dims.rank(), values.len());
        Self { dims, values }
    }

    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            values: vec![0.0; dims.cells() * dims.rank()],
        }
    }

    /// Builds a field from cell-center positions; only the first `rank`
    /// components of each returned vector are kept.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(Position) -> [f64; 3]) -> Self {
        let rank = dims.rank();
        let mut values = Vec::with_capacity(dims.cells() * rank);
        for i in 0..dims.cells() {
            let v = f(dims.center(i));
            values.extend_from_slice(&v[..rank]);
        }
        Self { dims, values }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn components(&self) -> usize {
        self.dims.rank()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Velocity stored at cell `index`, zero-padded to three components.
    pub fn at(&self, index: usize) -> [f64; 3] {
        let rank = self.dims.rank();
        let mut out = [0.0; 3];
        out[..rank].copy_from_slice(&self.values[index * rank..(index + 1) * rank]);
        out
    }

    pub fn sample(&self, pos: Position) -> Result<[f64; 3]> {
        check_position(pos)?;
        let s = Stencil::new(&self.dims, pos);
        let rank = self.dims.rank();
        let mut out = [0.0; 3];
        for (a, o) in out.iter_mut().enumerate().take(rank) {
            *o = s.apply(&self.values, rank, a);
        }
        Ok(out)
    }

    pub fn max_magnitude(&self) -> f64 {
        let rank = self.dims.rank();
        self.values
            .chunks(rank)
            .map(|c| libm::sqrt(c.iter().map(|x| x * x).sum()))
            .fold(0.0, f64::max)
    }
}

/// Per-cell RGB emission in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorField {
    dims: Dims,
    values: Vec<f64>,
}

impl ColorField {
    pub const CHANNELS: usize = 3;

    pub fn new(dims: Dims, values: Vec<f64>) -> Result<Self> {
        check_len(&dims, 3, values.len())?;
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
            return Err(domain(format!("color value {v} outside [0, 1]")));
        }
        Ok(Self { dims, values })
    }

    /// Clamps every value into `[0, 1]`; NaN becomes 0.
    pub fn clamped(dims: Dims, mut values: Vec<f64>) -> Result<Self> {
        check_len(&dims, 3, values.len())?;
        for v in &mut values {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Ok(Self { dims, values })
    }

    pub fn filled(dims: Dims, rgb: [f64; 3]) -> Result<Self> {
        let mut values = Vec::with_capacity(dims.cells() * 3);
        for _ in 0..dims.cells() {
            values.extend_from_slice(&rgb);
        }
        Self::new(dims, values)
    }

    /// The same scalar replicated into all three channels.
    pub fn gray(field: &ScalarField) -> Result<Self> {
        let mut values = Vec::with_capacity(field.values.len() * 3);
        for &v in &field.values {
            values.extend_from_slice(&[v, v, v]);
        }
        Self::clamped(field.dims, values)
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(Position) -> [f64; 3]) -> Result<Self> {
        let mut values = Vec::with_capacity(dims.cells() * 3);
        for i in 0..dims.cells() {
            values.extend_from_slice(&f(dims.center(i)));
        }
        Self::clamped(dims, values)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, index: usize) -> [f64; 3] {
        [
            self.values[index * 3],
            self.values[index * 3 + 1],
            self.values[index * 3 + 2],
        ]
    }

    pub fn channel(&self, channel: usize) -> ScalarField {
        assert!(channel < 3);
        ScalarField::from_raw(
            self.dims,
            self.values.iter().skip(channel).step_by(3).copied().collect(),
        )
    }

    pub fn sample(&self, pos: Position) -> Result<[f64; 3]> {
        check_position(pos)?;
        let s = Stencil::new(&self.dims, pos);
        Ok([
            s.apply(&self.values, 3, 0),
            s.apply(&self.values, 3, 1),
            s.apply(&self.values, 3, 2),
        ])
    }

    /// Zeroes the color of every cell whose density is exactly zero.
    pub fn mask_by_density(&mut self, density: &ScalarField) -> Result<()> {
        if density.dims != self.dims {
            return Err(domain("color and density dims differ"));
        }
        for (rgb, &d) in self.values.chunks_mut(3).zip(&density.values) {
            if d == 0.0 {
                rgb.fill(0.0);
            }
        }
        Ok(())
    }
}

/// Per-axis area-overlap weights mapping `n_in` cells onto `n_out` cells.
fn area_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let a = o as f64 * scale;
            let b = (o + 1) as f64 * scale;
            let first = libm::floor(a) as usize;
            let last = (libm::ceil(b) as usize).min(n_in);
            (first..last)
                .filter_map(|i| {
                    let overlap = b.min((i + 1) as f64) - a.max(i as f64);
                    (overlap > 1e-12).then_some((i, overlap / scale))
                })
                .collect()
        })
        .collect()
}

/// Area-averaged resampling of a single-channel x-fastest array.
pub(crate) fn area_downsample(data: &[f64], from: [usize; 3], to: [usize; 3]) -> Vec<f64> {
    let mut cur = data.to_vec();
    let mut ext = from;
    for axis in 0..3 {
        if ext[axis] == to[axis] {
            continue;
        }
        let weights = area_weights(ext[axis], to[axis]);
        let mut next_ext = ext;
        next_ext[axis] = to[axis];
        let mut next = vec![0.0; next_ext.iter().product()];
        for z in 0..next_ext[2] {
            for y in 0..next_ext[1] {
                for x in 0..next_ext[0] {
                    let o = [x, y, z];
                    let mut acc = 0.0;
                    for &(i, w) in &weights[o[axis]] {
                        let mut src = o;
                        src[axis] = i;
                        acc += w * cur[src[0] + ext[0] * (src[1] + ext[1] * src[2])];
                    }
                    next[x + next_ext[0] * (y + next_ext[1] * z)] = acc;
                }
            }
        }
        cur = next;
        ext = next_ext;
    }
    cur
}

/// Area/volume-averaged reduction to `target` extents.
pub fn downsample(field: &ScalarField, target: Dims) -> Result<ScalarField> {
    let dims = field.dims();
    if target.rank() != dims.rank() {
        return Err(domain("downsample target rank differs from the field's"));
    }
    if target
        .extents()
        .iter()
        .zip(dims.extents())
        .any(|(t, n)| t > n)
    {
        return Err(domain(format!(
            "downsample target {:?} exceeds field extents {:?}",
            target.extents(),
            dims.extents()
        )));
    }
    let mut values = area_downsample(field.values(), dims.padded(), target.padded());
    for v in &mut values {
        *v = v.max(0.0);
    }
    Ok(ScalarField::from_raw(target, values))
}

/// I.i.d. uniform samples in `[0, 1)`, deterministic in `seed`.
pub fn white_noise(dims: Dims, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..dims.cells()).map(|_| rng.random::<f64>()).collect();
    ScalarField::from_raw(dims, values)
}

//! `VOLF` volumes: little-endian; magic `VOLF`, `u32` version 1, `u32`
//! rank, one `u32` extent per axis, `u32` channel count, then `f32` values
//! with the channel varying fastest, then x, then y, then z.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use smokestyle_core::{ColorField, Dims, ScalarField, VectorField};

const MAGIC: &[u8; 4] = b"VOLF";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum VolfError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a VOLF file")]
    Magic,
    #[error("unsupported VOLF version {0}")]
    Version(u32),
    #[error("malformed VOLF header: {0}")]
    Header(String),
    #[error("volume has {found} channels, expected {expected}")]
    Channels { expected: usize, found: usize },
    #[error("invalid field values: {0}")]
    Values(#[from] smokestyle_core::Error),
}

/// A grid of `f32` tuples, exactly as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub dims: Dims,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Volume {
    pub fn new(dims: Dims, channels: usize, data: Vec<f32>) -> Result<Self, VolfError> {
        if channels == 0 || data.len() != dims.cells() * channels {
            return Err(VolfError::Header(format!(
                "{} values for {} cells of {channels} channels",
                data.len(),
                dims.cells()
            )));
        }
        Ok(Self { dims, channels, data })
    }

    fn from_f64(dims: Dims, channels: usize, values: &[f64]) -> Self {
        Self {
            dims,
            channels,
            data: values.iter().map(|&v| v as f32).collect(),
        }
    }

    fn values(&self, expected: usize) -> Result<Vec<f64>, VolfError> {
        if self.channels != expected {
            return Err(VolfError::Channels {
                expected,
                found: self.channels,
            });
        }
        Ok(self.data.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn into_scalar(self) -> Result<ScalarField, VolfError> {
        Ok(ScalarField::new(self.dims, self.values(1)?)?)
    }

    pub fn into_vector(self) -> Result<VectorField, VolfError> {
        Ok(VectorField::new(self.dims, self.values(self.dims.rank())?)?)
    }

    pub fn into_color(self) -> Result<ColorField, VolfError> {
        Ok(ColorField::new(self.dims, self.values(3)?)?)
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        w.write_all(MAGIC)?;
        let header = [VERSION, self.dims.rank() as u32]
            .into_iter()
            .chain(self.dims.extents().iter().map(|&e| e as u32))
            .chain([self.channels as u32]);
        for v in header {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, VolfError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(VolfError::Magic);
        }
        let mut u32_le = || -> io::Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let version = u32_le()?;
        if version != VERSION {
            return Err(VolfError::Version(version));
        }
        let rank = u32_le()? as usize;
        if !(2..=3).contains(&rank) {
            return Err(VolfError::Header(format!("rank {rank}")));
        }
        let extents = (0..rank).map(|_| u32_le().map(|e| e as usize)).collect::<io::Result<Vec<_>>>()?;
        let dims = Dims::new(&extents).map_err(|e| VolfError::Header(e.to_string()))?;
        let channels = u32_le()? as usize;
        let len = dims
            .cells()
            .checked_mul(channels)
            .filter(|&n| n > 0 && n <= (1 << 31))
            .ok_or_else(|| VolfError::Header(format!("{channels} channels over {} cells", dims.cells())))?;
        let mut bytes = vec![0u8; len * 4];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(VolfError::Header("trailing bytes after the values".into()));
        }
        Ok(Self { dims, channels, data })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VolfError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

impl From<&ScalarField> for Volume {
    fn from(f: &ScalarField) -> Self {
        Self::from_f64(f.dims(), 1, f.values())
    }
}

impl From<&VectorField> for Volume {
    fn from(f: &VectorField) -> Self {
        Self::from_f64(f.dims(), f.components(), f.values())
    }
}

impl From<&ColorField> for Volume {
    fn from(f: &ColorField) -> Self {
        Self::from_f64(f.dims(), 3, f.values())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let v = Volume::new(Dims::xy(2, 1), 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut bytes = Vec::new();
        v.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"VOLF");
        let words: Vec<u32> = bytes[4..24].chunks(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        assert_eq!(words, vec![1, 2, 2, 1, 3]);
        assert_eq!(bytes.len(), 24 + 6 * 4);
        assert_eq!(f32::from_le_bytes(bytes[28..32].try_into().unwrap()), 2.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(Volume::read_from(&b"VOLX"[..]), Err(VolfError::Magic)));
        let mut bytes = Vec::new();
        Volume::new(Dims::xy(1, 1), 1, vec![0.5]).unwrap().write_to(&mut bytes).unwrap();
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 2;
        assert!(matches!(Volume::read_from(&wrong_version[..]), Err(VolfError::Version(2))));
        assert!(Volume::read_from(&bytes[..bytes.len() - 1]).is_err());
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(Volume::read_from(&trailing[..]).is_err());
        let v = Volume::read_from(&bytes[..]).unwrap();
        assert!(matches!(v.into_color(), Err(VolfError::Channels { expected: 3, found: 1 })));
        assert!(Volume::new(Dims::xy(2, 2), 1, vec![0.0; 3]).is_err());
    }
}

//! `VGGW` weight files for the VGG-19 convolution trunk.
//!
//! Little-endian: magic `VGGW`, `u32` version 1, `f32` input scale, three
//! `f32` channel means, three `f32` channel deviations, `u32` convolution
//! count, then per convolution `u32` in-channels, `u32` out-channels,
//! `f32` weights (`out x in x 3 x 3`) and `f32` biases. The file may hold
//! any prefix of the sixteen convolutions.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use smokestyle_core::{Conv2d, Layer, Preprocess, Vgg19};

/// Environment variable naming a `VGGW` file with pretrained weights.
pub const WEIGHTS_ENV: &str = "SMOKESTYLE_VGG19_WEIGHTS";

/// Seed of the random-feature network used when no weights are configured.
pub const FALLBACK_SEED: u64 = 0;

const MAGIC: &[u8; 4] = b"VGGW";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum WeightsError {
    #[error("weights file {0} does not exist")]
    Missing(PathBuf),
    #[error("weights file {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed weights: {0}")]
    Format(String),
}

/// Where the network's weights came from.
#[derive(Clone, Debug, PartialEq)]
pub enum NetworkSource {
    File(PathBuf),
    Seeded(u64),
}

impl std::fmt::Display for NetworkSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::File(p) => write!(f, "weights from {}", p.display()),
            Self::Seeded(s) => write!(f, "seeded random weights (seed {s}); set {WEIGHTS_ENV} for pretrained ones"),
        }
    }
}

pub fn write_vggw(net: &Vgg19, mut w: impl Write) -> io::Result<()> {
    let p = net.preprocess();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [p.scale].iter().chain(&p.mean).chain(&p.std) {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    w.write_all(&(net.convs().len() as u32).to_le_bytes())?;
    for conv in net.convs() {
        w.write_all(&(conv.in_channels() as u32).to_le_bytes())?;
        w.write_all(&(conv.out_channels() as u32).to_le_bytes())?;
        for v in conv.weight().iter().chain(conv.bias()) {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_f32s(r: &mut impl Read, n: usize) -> io::Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect())
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads convolutions up to and including `deepest`; the rest of the file
/// is not read.
pub fn read_vggw(mut r: impl Read, deepest: Layer) -> Result<Vgg19, WeightsError> {
    let format = |e: io::Error| WeightsError::Format(e.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(format)?;
    if &magic != MAGIC {
        return Err(WeightsError::Format("not a VGGW file".into()));
    }
    let version = read_u32(&mut r).map_err(format)?;
    if version != VERSION {
        return Err(WeightsError::Format(format!("unsupported version {version}")));
    }
    let head = read_f32s(&mut r, 7).map_err(format)?;
    let preprocess = Preprocess {
        scale: head[0],
        mean: [head[1], head[2], head[3]],
        std: [head[4], head[5], head[6]],
    };
    let count = read_u32(&mut r).map_err(format)? as usize;
    let needed = deepest.conv_index() + 1;
    if count < needed {
        return Err(WeightsError::Format(format!(
            "{count} convolutions stored, {deepest} needs {needed}"
        )));
    }
    let mut convs = Vec::with_capacity(needed);
    for _ in 0..needed {
        let cin = read_u32(&mut r).map_err(format)? as usize;
        let cout = read_u32(&mut r).map_err(format)? as usize;
        if cin > 4096 || cout > 4096 {
            return Err(WeightsError::Format(format!("implausible convolution {cin}->{cout}")));
        }
        let weight = read_f32s(&mut r, cout * cin * 9).map_err(format)?;
        let bias = read_f32s(&mut r, cout).map_err(format)?;
        convs.push(Conv2d::new(cin, cout, weight, bias).map_err(|e| WeightsError::Format(e.to_string()))?);
    }
    Vgg19::new(convs, preprocess).map_err(|e| WeightsError::Format(e.to_string()))
}

pub fn load_vggw(path: &Path, deepest: Layer) -> Result<Vgg19, WeightsError> {
    let file = File::open(path).map_err(|source| {
        if source.kind() == io::ErrorKind::NotFound {
            WeightsError::Missing(path.to_path_buf())
        } else {
            WeightsError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })?;
    read_vggw(BufReader::new(file), deepest)
}

pub fn save_vggw(net: &Vgg19, path: &Path) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_vggw(net, &mut w)?;
    w.flush()
}

/// The network for `deepest`: from the file named by [`WEIGHTS_ENV`] when
/// set (a missing file is an error), otherwise seeded random weights.
pub fn load_network(deepest: Layer) -> Result<(Vgg19, NetworkSource), WeightsError> {
    match std::env::var_os(WEIGHTS_ENV).filter(|v| !v.is_empty()) {
        Some(path) => {
            let path = PathBuf::from(path);
            Ok((load_vggw(&path, deepest)?, NetworkSource::File(path)))
        }
        None => Ok((Vgg19::seeded(FALLBACK_SEED, deepest), NetworkSource::Seeded(FALLBACK_SEED))),
    }
}

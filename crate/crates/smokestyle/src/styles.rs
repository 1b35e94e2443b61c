//! Style image sources: a PNG path or a procedural `builtin:` image.

use std::f64::consts::TAU;
use std::path::Path;

use smokestyle_core::Tensor;

/// Side length of procedural style images.
pub const BUILTIN_SIZE: usize = 128;

pub const BUILTIN_NAMES: [&str; 4] = ["fire", "ocean", "stripes", "strokes"];

fn from_fn(n: usize, f: impl Fn(f64, f64) -> [f64; 3]) -> Tensor {
    let mut data = vec![0.0; 3 * n * n];
    for y in 0..n {
        for x in 0..n {
            let rgb = f(x as f64, y as f64);
            for c in 0..3 {
                data[c * n * n + y * n + x] = rgb[c].clamp(0.0, 1.0);
            }
        }
    }
    Tensor::new(3, n, n, data).expect("square image")
}

/// Procedural style `name` at `n x n` pixels, or `None` for an unknown name.
pub fn builtin(name: &str, n: usize) -> Option<Tensor> {
    let img = match name {
        // Saturated red-orange-yellow flames over a dark base.
        "fire" => from_fn(n, |x, y| {
            let s = ((x * 0.7).sin() * (y * 0.5).cos() * 0.5 + 0.5).powi(2);
            [1.0, 0.2 + 0.6 * s, 0.05 * s]
        }),
        // Deep blue waves with cyan crests.
        "ocean" => from_fn(n, |x, y| {
            let s = ((x * 0.9 + y * 0.45).sin() * (y * 0.3).cos()).max(0.0);
            [0.1 * s, 0.4 * s, s]
        }),
        // Diagonal bands of pure hues.
        "stripes" => from_fn(n, |x, y| {
            match ((x as usize + y as usize / 2) / 4) % 3 {
                0 => [1.0, 0.1, 0.1],
                1 => [0.1, 0.9, 0.2],
                _ => [0.1, 0.2, 1.0],
            }
        }),
        // Short oriented strokes whose angle drifts across the image.
        "strokes" => from_fn(n, |x, y| {
            let a = 0.6 + 0.8 * (x / n as f64 * TAU).sin();
            let u = x * a.cos() + y * a.sin();
            let v = -x * a.sin() + y * a.cos();
            let s = ((u * 0.8).sin() * 0.5 + 0.5) * ((v * 0.15).sin().abs());
            [0.9 * s, 0.6 * s + 0.1, 0.2 + 0.3 * s]
        }),
        _ => return None,
    };
    Some(img)
}

#[derive(Debug, thiserror::Error)]
pub enum StyleError {
    #[error("unknown builtin style {0:?}; available: fire, ocean, stripes, strokes")]
    UnknownBuiltin(String),
    #[error("style image {path}: {source}")]
    Image {
        path: String,
        source: image::ImageError,
    },
}

/// `builtin:<name>` or a PNG path (relative paths resolve against `base`).
pub fn load_style(style: &str, base: &Path) -> Result<Tensor, StyleError> {
    if let Some(name) = style.strip_prefix("builtin:") {
        return builtin(name, BUILTIN_SIZE).ok_or_else(|| StyleError::UnknownBuiltin(name.into()));
    }
    let path = base.join(style);
    crate::imageio::load_rgb(&path).map_err(|source| StyleError::Image {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_rgb_in_range() {
        for name in BUILTIN_NAMES {
            let t = builtin(name, 32).unwrap();
            assert_eq!((t.channels(), t.height(), t.width()), (3, 32, 32));
            assert!(t.min_value() >= 0.0 && t.max_value() <= 1.0);
            assert!(t.plane(0) != t.plane(2), "{name} is not gray");
        }
        assert!(builtin("nope", 8).is_none());
    }

    #[test]
    fn specs_resolve() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_style("builtin:fire", dir.path()).is_ok());
        assert!(matches!(load_style("builtin:x", dir.path()), Err(StyleError::UnknownBuiltin(_))));
        assert!(matches!(load_style("missing.png", dir.path()), Err(StyleError::Image { .. })));
    }
}

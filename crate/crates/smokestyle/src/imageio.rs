//! 8-bit PNG export and style image loading.

use std::path::Path;

use image::{GrayImage, ImageError, RgbImage};
use smokestyle_core::Tensor;

/// `[0, 1]` to `[0, 255]`, clamped and rounded.
pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a 1- or 3-channel image with values in `[0, 1]`.
pub fn save_png(image: &Tensor, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let (w, h) = (image.width() as u32, image.height() as u32);
    match image.channels() {
        1 => GrayImage::from_fn(w, h, |x, y| image::Luma([to_u8(image.at(0, y as usize, x as usize))])).save(path),
        3 => RgbImage::from_fn(w, h, |x, y| {
            image::Rgb([0, 1, 2].map(|c| to_u8(image.at(c, y as usize, x as usize))))
        })
        .save(path),
        n => Err(ImageError::Parameter(image::error::ParameterError::from_kind(
            image::error::ParameterErrorKind::Generic(format!("cannot export a {n}-channel image")),
        ))),
    }
}

/// Loads any PNG as RGB in `[0, 1]`.
pub fn load_rgb(path: impl AsRef<Path>) -> Result<Tensor, ImageError> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0; 3 * w * h];
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            data[c * w * h + y as usize * w + x as usize] = f64::from(p.0[c]) / 255.0;
        }
    }
    Ok(Tensor::new(3, h, w, data).expect("consistent image size"))
}

/// Lays equally sized images out on a grid, `rows[r][c]`, with a `gap`
/// pixel black border. Grayscale panels are replicated to RGB.
pub fn contact_sheet(rows: &[Vec<Tensor>], gap: usize) -> Tensor {
    let (ph, pw) = rows
        .iter()
        .flatten()
        .next()
        .map_or((0, 0), |t| (t.height(), t.width()));
    let ncols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let (h, w) = (rows.len() * (ph + gap) + gap, ncols * (pw + gap) + gap);
    let mut data = vec![0.0; 3 * h * w];
    for (r, row) in rows.iter().enumerate() {
        for (c, panel) in row.iter().enumerate() {
            let panel = panel.to_rgb().expect("1- or 3-channel panel");
            let (y0, x0) = (gap + r * (ph + gap), gap + c * (pw + gap));
            for ch in 0..3 {
                for y in 0..ph.min(panel.height()) {
                    for x in 0..pw.min(panel.width()) {
                        data[ch * h * w + (y0 + y) * w + x0 + x] = panel.at(ch, y, x);
                    }
                }
            }
        }
    }
    Tensor::new(3, h, w, data).expect("consistent sheet size")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Tensor::new(3, 2, 3, (0..18).map(|i| i as f64 / 17.0).collect()).unwrap();
        let path = dir.path().join("a.png");
        save_png(&img, &path).unwrap();
        let back = load_rgb(&path).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        let gray = Tensor::new(1, 2, 2, vec![0.0, 1.0, 2.0, -1.0]).unwrap();
        save_png(&gray, dir.path().join("g.png")).unwrap();
        let back = load_rgb(dir.path().join("g.png")).unwrap();
        assert_eq!(back.plane(0), &[0.0, 1.0, 1.0, 0.0]);
        assert!(save_png(&Tensor::zeros(2, 2, 2), dir.path().join("x.png")).is_err());
    }

    #[test]
    fn sheet_layout() {
        let a = Tensor::new(1, 2, 2, vec![1.0; 4]).unwrap();
        let b = Tensor::new(3, 2, 2, vec![0.5; 12]).unwrap();
        let sheet = contact_sheet(&[vec![a.clone(), a], vec![b.clone(), b]], 1);
        assert_eq!((sheet.height(), sheet.width()), (7, 7));
        assert_eq!(sheet.at(0, 1, 1), 1.0);
        assert_eq!(sheet.at(2, 4, 4), 0.5);
        assert_eq!(sheet.at(0, 3, 3), 0.0);
    }
}

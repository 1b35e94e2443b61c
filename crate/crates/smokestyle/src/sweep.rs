//! Renders of one volume at several transmittance factors, grayscale and
//! colored, laid out as a two-row contact sheet.

use smokestyle_core::{render_color, render_grayscale, ColorField, RenderSettings, Result, ScalarField, Tensor, ViewAngle};

use crate::imageio::contact_sheet;

pub const GAMMAS: [f64; 4] = [0.001, 0.1, 0.5, 1.0];

#[derive(Clone, Debug)]
pub struct GammaSweep {
    pub gammas: Vec<f64>,
    pub gray: Vec<Tensor>,
    pub color: Vec<Tensor>,
}

/// Warm at the bottom, cool at the top, so color transport is visible.
pub fn height_gradient(d: &ScalarField) -> ColorField {
    let ny = d.dims().ny() as f64;
    ColorField::from_fn(d.dims(), |p| {
        let t = p[1] / ny;
        [1.0 - 0.7 * t, 0.45, 0.25 + 0.7 * t]
    })
    .expect("colors in range")
}

pub fn gamma_sweep(
    d: &ScalarField,
    c: &ColorField,
    view: ViewAngle,
    settings: &RenderSettings,
    gammas: &[f64],
) -> Result<GammaSweep> {
    let mut gray = Vec::with_capacity(gammas.len());
    let mut color = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let s = RenderSettings { gamma, ..settings.clone() };
        gray.push(render_grayscale(d, view, &s)?);
        color.push(render_color(d, c, view, &s)?);
    }
    Ok(GammaSweep {
        gammas: gammas.to_vec(),
        gray,
        color,
    })
}

impl GammaSweep {
    /// Grayscale renders on the first row, colored on the second, one
    /// column per transmittance factor.
    pub fn sheet(&self) -> Tensor {
        contact_sheet(&[self.gray.clone(), self.color.clone()], 2)
    }

    /// Whether every pixel of both rows is non-increasing along the sweep,
    /// assuming increasing factors.
    pub fn non_increasing(&self) -> bool {
        let mono = |row: &[Tensor]| {
            row.windows(2)
                .all(|w| w[1].data().iter().zip(w[0].data()).all(|(b, a)| b <= a))
        };
        mono(&self.gray) && mono(&self.color)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use smokestyle_core::Dims;

    #[test]
    fn sweep_darkens_and_tiles() {
        let dims = Dims::xyz(8, 8, 8);
        let d = ScalarField::from_fn(dims, |p| (-((p[0] - 4.0).powi(2) + (p[1] - 4.0).powi(2) + (p[2] - 4.0).powi(2)) / 6.0).exp());
        let s = gamma_sweep(&d, &height_gradient(&d), ViewAngle::FRONT, &RenderSettings::default(), &GAMMAS).unwrap();
        assert!(s.non_increasing());
        let sheet = s.sheet();
        assert_eq!((sheet.channels(), sheet.height(), sheet.width()), (3, 2 * 10 + 2, 4 * 10 + 2));
    }
}

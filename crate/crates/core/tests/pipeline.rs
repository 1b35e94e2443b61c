//! End-to-end contracts of the shape pass, the color pass and sequences.

use smokestyle_core::adam::{Adam, AdamParams};
use smokestyle_core::*;

fn blob(dims: Dims, sigma: f64) -> ScalarField {
    let (cx, cy) = (dims.nx() as f64 / 2.0, dims.ny() as f64 / 2.0);
    ScalarField::from_fn(dims, |p| {
        let v = (-((p[0] - cx).powi(2) + (p[1] - cy).powi(2)) / (2.0 * sigma * sigma)).exp();
        if v < 1e-3 { 0.0 } else { v }
    })
}

/// Saturated warm stripes.
fn fire(n: usize) -> Tensor {
    let mut data = vec![0.0; 3 * n * n];
    for y in 0..n {
        for x in 0..n {
            let s = ((x as f64 * 0.7).sin() * (y as f64 * 0.5).cos() * 0.5 + 0.5).powi(2);
            let i = y * n + x;
            data[i] = 1.0;
            data[n * n + i] = 0.2 + 0.6 * s;
            data[2 * n * n + i] = 0.05 * s;
        }
    }
    Tensor::new(3, n, n, data).unwrap()
}

fn quick(iterations: usize) -> StylizationConfig {
    StylizationConfig {
        iterations,
        seed: 5,
        ..StylizationConfig::for_2d()
    }
}

fn net() -> Vgg19 {
    Vgg19::seeded(0, Layer::RELU3_1)
}

fn assert_color_contract(d_before: &ScalarField, d_after: &ScalarField, color: &ColorField) {
    assert_eq!(d_before.values(), d_after.values());
    for (i, &d) in d_after.values().iter().enumerate() {
        if d == 0.0 {
            assert_eq!(color.at(i), [0.0; 3], "cell {i}");
        }
    }
}

#[test]
fn zero_iterations_are_rejected() {
    let d = blob(Dims::xy(16, 16), 3.0);
    let err = stylize_shape(&net(), &d, &fire(16), &quick(0), &mut ()).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn one_iteration_is_one_adam_step() {
    let net = net();
    let dims = Dims::xy(16, 16);
    let d = blob(dims, 3.0);
    let config = quick(1);
    let style = fire(16);
    let result = stylize_shape(&net, &d, &style, &config, &mut ()).unwrap();

    let targets = StyleTargets::new(&net, &style, &config).unwrap();
    let objective = Objective {
        net: &net,
        style: &targets.shape,
        content: None,
        views: &config.views,
        view_weights: None,
        weights: &config.weights,
        settings: &config.render,
    };
    let grad = objective.shape(&d, &VectorField::zeros(dims), 1.0).unwrap().gradient;
    let mut v = vec![0.0; grad.len()];
    Adam::new(v.len(), config.learning_rate, AdamParams::default()).step(&mut v, &grad);
    assert_eq!(result.velocity.values(), &v[..]);
    assert_eq!(result.density, advect(&d, &result.velocity, 1.0).unwrap());
    assert_eq!(result.history.total.len(), 2);
}

#[test]
fn empty_density_stays_empty() {
    let dims = Dims::xy(16, 16);
    let d = ScalarField::zeros(dims);
    let net = net();
    let config = quick(3);
    let shape = stylize_shape(&net, &d, &fire(16), &config, &mut ()).unwrap();
    assert!(shape.velocity.values().iter().all(|&v| v == 0.0));
    assert!(shape.density.values().iter().all(|&v| v == 0.0));
    let color = stylize_color(&net, &shape.density, &fire(16), &config, &ColorInit::Noise, &mut ()).unwrap();
    assert!(color.color.values().iter().all(|&v| v == 0.0));
}

#[test]
fn color_pass_is_deterministic_and_masked() {
    let net = net();
    let d_star = blob(Dims::xy(24, 24), 4.0);
    let before = d_star.clone();
    let config = quick(5);
    let a = stylize_color(&net, &d_star, &fire(24), &config, &ColorInit::Noise, &mut ()).unwrap();
    let b = stylize_color(&net, &d_star, &fire(24), &config, &ColorInit::Noise, &mut ()).unwrap();
    assert_eq!(a.color, b.color);
    assert_eq!(a.history, b.history);
    assert_color_contract(&before, &d_star, &a.color);
    assert!(d_star.values().contains(&0.0));
    let other = stylize_color(&net, &d_star, &fire(24), &StylizationConfig { seed: 6, ..config }, &ColorInit::Noise, &mut ())
        .unwrap();
    assert_ne!(a.color, other.color);
}

fn channel_means(color: &ColorField, d: &ScalarField) -> [f64; 3] {
    let mut m = [0.0; 3];
    let mut n = 0.0;
    for (i, &dv) in d.values().iter().enumerate() {
        if dv > 0.0 {
            let c = color.at(i);
            (0..3).for_each(|k| m[k] += c[k]);
            n += 1.0;
        }
    }
    m.map(|v| v / n)
}

#[test]
fn blob_with_saturated_style() {
    let net = net();
    let d = blob(Dims::xy(64, 64), 64.0 / 6.0);
    let config = StylizationConfig::for_2d();
    let style = fire(64);
    let shape = stylize_shape(&net, &d, &style, &config, &mut ()).unwrap();
    let h = &shape.history;
    assert!(h.last() <= 0.5 * h.initial(), "shape ratio {}", h.last() / h.initial());
    assert!(h.best_so_far().windows(2).all(|w| w[1] <= w[0]));

    let d_star = shape.density.clone();
    let color = stylize_color(&net, &shape.density, &style, &config, &ColorInit::Noise, &mut ()).unwrap();
    let h = &color.history;
    assert!(h.last() <= 0.5 * h.initial(), "color ratio {}", h.last() / h.initial());
    let m = channel_means(&color.color, &d_star);
    let spread = m.iter().cloned().fold(f64::MIN, f64::max) - m.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread > 0.02, "channel means {m:?}");
    assert_color_contract(&d_star, &shape.density, &color.color);
}

#[test]
fn single_frame_sequence_is_the_composition() {
    let net = net();
    let dims = Dims::xy(16, 16);
    let d = blob(dims, 3.0);
    let config = StylizationConfig {
        window: TemporalWindow::new(3).unwrap(),
        ..quick(4)
    };
    let frames = stylize_sequence(&net, std::slice::from_ref(&d), &[VectorField::zeros(dims)], &fire(16), &config, &mut ()).unwrap();
    let shape = stylize_shape(&net, &d, &fire(16), &config, &mut ()).unwrap();
    let color = stylize_color(&net, &shape.density, &fire(16), &config, &ColorInit::Noise, &mut ()).unwrap();
    assert_eq!(frames.len(), 1);
    assert_eq!(frames[0].v_star, shape.velocity);
    assert_eq!(frames[0].d_star, shape.density);
    assert_eq!(frames[0].color, color.color);
}

#[test]
fn repeated_static_frames_share_their_shape() {
    let net = net();
    let dims = Dims::xy(16, 16);
    let d = blob(dims, 3.0);
    let frames = vec![d.clone(), d.clone(), d];
    let vels = vec![VectorField::zeros(dims); 3];
    let config = quick(3);
    let out = stylize_sequence(&net, &frames, &vels, &fire(16), &config, &mut ()).unwrap();
    for f in &out[1..] {
        assert_eq!(f.d_star, out[0].d_star);
        assert_eq!(f.v_star, out[0].v_star);
        assert_eq!(f.shape_history, out[0].shape_history);
    }
    // Color noise is seeded per frame, so colors differ between frames but
    // not between runs.
    let again = stylize_sequence(&net, &frames, &vels, &fire(16), &config, &mut ()).unwrap();
    for (a, b) in out.iter().zip(&again) {
        assert_eq!(a.color, b.color);
    }
    assert!(stylize_sequence(&net, &frames, &vels[..2], &fire(16), &config, &mut ()).is_err());
}

#[test]
fn window_carries_color_along_the_flow() {
    let net = net();
    let dims = Dims::xy(32, 32);
    let d0 = blob(dims, 5.0);
    let flow = VectorField::from_fn(dims, |_| [1.0, 0.0, 0.0]);
    let d1 = advect(&d0, &flow, 1.0).unwrap();
    let frames = [d0, d1];
    let vels = [flow.clone(), flow.clone()];
    let difference = |window: usize| {
        let config = StylizationConfig {
            window: TemporalWindow::new(window).unwrap(),
            ..quick(30)
        };
        let out = stylize_sequence(&net, &frames, &vels, &fire(32), &config, &mut ()).unwrap();
        let carried = advect_color(&out[0].color, &flow, 1.0).unwrap();
        let n = carried.values().len() as f64;
        carried.values().iter().zip(out[1].color.values()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n
    };
    let (narrow, wide) = (difference(1), difference(3));
    assert!(wide < narrow, "window 3: {wide}, window 1: {narrow}");
}

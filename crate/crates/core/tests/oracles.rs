//! Brute-force and analytic oracles for fields, transport, features and losses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smokestyle_core::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_tensor(r: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor {
    Tensor::new(c, h, w, (0..c * h * w).map(|_| r.random::<f64>()).collect()).unwrap()
}

fn gaussian(dims: Dims, sigma: f64) -> ScalarField {
    let (cx, cy) = (dims.nx() as f64 / 2.0, dims.ny() as f64 / 2.0);
    ScalarField::from_fn(dims, |p| (-((p[0] - cx).powi(2) + (p[1] - cy).powi(2)) / (2.0 * sigma * sigma)).exp())
}

fn block_mean(data: &[f64], w: usize, x0: usize, y0: usize, bw: usize, bh: usize) -> f64 {
    let mut sum = 0.0;
    for y in y0..y0 + bh {
        for x in x0..x0 + bw {
            sum += data[y * w + x];
        }
    }
    sum / (bw * bh) as f64
}

#[test]
fn downsample_matches_block_means() {
    let mut r = rng(1);
    let vals: Vec<f64> = (0..256).map(|_| r.random::<f64>()).collect();
    let d = ScalarField::new(Dims::xy(16, 16), vals.clone()).unwrap();
    let out = downsample(&d, Dims::xy(4, 4)).unwrap();
    for by in 0..4 {
        for bx in 0..4 {
            let expect = block_mean(&vals, 16, bx * 4, by * 4, 4, 4);
            assert!((out.get(bx, by, 0) - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn noise_statistics() {
    let dims = Dims::xy(64, 64);
    let a = white_noise(dims, 11);
    assert_eq!(a, white_noise(dims, 11));
    let b = white_noise(dims, 12);
    assert!(a.values().iter().zip(b.values()).any(|(x, y)| x != y));
    let mean = a.total() / dims.cells() as f64;
    assert!((mean - 0.5).abs() < 0.05, "mean {mean}");
    assert!(a.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn advection_round_trip_dissipates_little() {
    let dims = Dims::xy(32, 32);
    let d = gaussian(dims, 4.0);
    let v = VectorField::from_fn(dims, |p| {
        let a = p[1] / 32.0 * std::f64::consts::TAU;
        [0.6 * a.cos(), 0.6 * a.sin(), 0.0]
    });
    assert!(v.max_magnitude() <= 1.0);
    let forward = advect(&d, &v, 1.0).unwrap();
    let back = advect(&forward, &v, -1.0).unwrap();
    let l1: f64 = back.values().iter().zip(d.values()).map(|(a, b)| (a - b).abs()).sum();
    assert!(l1 / d.total() < 0.05, "relative L1 {}", l1 / d.total());
    let loss = 1.0 - forward.total() / d.total();
    assert!(loss <= 0.10, "mass loss {loss}");
}

#[test]
fn masks_of_half_plane_match_block_means() {
    let (w, h) = (16, 16);
    let img: Vec<f64> = (0..w * h).map(|i| if i % w < 7 { 1.0 } else { 0.0 }).collect();
    let layers = [Layer::RELU1_1, Layer::RELU2_1, Layer::RELU3_1];
    let masks = build_mask_pyramid(&Tensor::new(1, h, w, img.clone()).unwrap(), &layers).unwrap();
    for (l, m) in masks.iter() {
        let f = 1 << (l.block() - 1);
        for y in 0..m.height() {
            for x in 0..m.width() {
                let expect = block_mean(&img, w, x * f, y * f, f, f);
                assert!((m.at(0, y, x) - expect).abs() < 1e-12, "{l} ({x},{y})");
            }
        }
    }
    let ones = build_mask_pyramid(&Tensor::new(1, h, w, vec![1.0; w * h]).unwrap(), &layers).unwrap();
    assert!(ones.iter().all(|(_, m)| m.data().iter().all(|&v| v == 1.0)));
}

#[test]
fn guided_features_match_per_pixel_products() {
    let mut r = rng(2);
    let f = random_tensor(&mut r, 4, 5, 6);
    let t = random_tensor(&mut r, 1, 5, 6);
    let g = guide_features(&f, &t).unwrap();
    for c in 0..4 {
        for y in 0..5 {
            for x in 0..6 {
                assert!((g.at(c, y, x) - f.at(c, y, x) * t.at(0, y, x)).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn features_have_documented_channel_counts() {
    let net = Vgg19::seeded(3, Layer::RELU3_1);
    let mut r = rng(3);
    let img = random_tensor(&mut r, 3, 32, 32);
    let layers = [Layer::RELU2_1, Layer::RELU3_1];
    let a = extract_features(&net, &img, &layers).unwrap();
    assert_eq!(a.len(), 2);
    let shapes: Vec<_> = a.iter().map(|(l, f)| (l.name(), f.channels(), f.height())).collect();
    assert_eq!(shapes, vec![("relu2_1".to_string(), 128, 16), ("relu3_1".to_string(), 256, 8)]);
    assert!(a.iter().all(|(_, f)| f.data().iter().all(|&v| v >= 0.0)));
    assert_eq!(a, extract_features(&net, &img.clone(), &layers).unwrap());
    let gray = random_tensor(&mut r, 1, 32, 32);
    assert_eq!(
        extract_features(&net, &gray, &layers).unwrap(),
        extract_features(&net, &gray.to_rgb().unwrap(), &layers).unwrap()
    );
}

#[test]
fn content_loss_oracles() {
    let mut r = rng(4);
    let f = random_tensor(&mut r, 3, 4, 5);
    let shifted = f.map(|v| v + 1.0);
    let a = FeatureStack::new(vec![(Layer::RELU2_1, shifted)]);
    let b = FeatureStack::new(vec![(Layer::RELU2_1, f)]);
    assert!((content_loss(&a, &b).unwrap() - 1.0).abs() < 1e-12);

    let layers = [Layer::RELU1_1, Layer::RELU2_1];
    let fi: Vec<Tensor> = (0..2).map(|_| random_tensor(&mut r, 3, 4, 4)).collect();
    let fc: Vec<Tensor> = (0..2).map(|_| random_tensor(&mut r, 3, 4, 4)).collect();
    let mut expect = 0.0;
    for (x, y) in fi.iter().zip(&fc) {
        let mut s = 0.0;
        for i in 0..x.data().len() {
            s += (x.data()[i] - y.data()[i]).powi(2);
        }
        expect += s / x.data().len() as f64;
    }
    let si = FeatureStack::new(layers.iter().copied().zip(fi).collect());
    let sc = FeatureStack::new(layers.iter().copied().zip(fc).collect());
    assert!((content_loss(&si, &sc).unwrap() - expect).abs() < 1e-6);
}

fn loop_gram(f: &Tensor, norm: f64) -> Vec<f64> {
    let c = f.channels();
    let mut g = vec![0.0; c * c];
    for i in 0..c {
        for j in 0..c {
            for y in 0..f.height() {
                for x in 0..f.width() {
                    g[i * c + j] += f.at(i, y, x) * f.at(j, y, x);
                }
            }
            g[i * c + j] /= norm;
        }
    }
    g
}

#[test]
fn style_loss_oracles() {
    let mut r = rng(5);
    let layers = [Layer::RELU1_1, Layer::RELU2_1];
    let fi: Vec<Tensor> = vec![random_tensor(&mut r, 3, 8, 8), random_tensor(&mut r, 5, 4, 4)];
    let fs: Vec<Tensor> = vec![random_tensor(&mut r, 3, 6, 6), random_tensor(&mut r, 5, 3, 3)];
    let weights = LossWeights::new(0.0, 2.5, vec![1.0, 3.0]).unwrap();
    let si = FeatureStack::new(layers.iter().copied().zip(fi.clone()).collect());
    let ss = FeatureStack::new(layers.iter().copied().zip(fs.clone()).collect());

    let mut expect = 0.0;
    for l in 0..2 {
        let gi = loop_gram(&fi[l], fi[l].spatial() as f64);
        let gs = loop_gram(&fs[l], fs[l].spatial() as f64);
        let mse: f64 = gi.iter().zip(&gs).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / gi.len() as f64;
        expect += weights.layer_weights()[l] * mse;
    }
    let got = style_loss(&si, &ss, None, &weights).unwrap();
    assert!((got - 2.5 * expect).abs() < 1e-6 * expect.max(1.0));

    // Guided features are compared per unit of mask energy.
    let mask_img = random_tensor(&mut r, 1, 8, 8);
    let masks = build_mask_pyramid(&mask_img, &layers).unwrap();
    let mut expect = 0.0;
    for (l, &layer) in layers.iter().enumerate() {
        let t = masks.get(layer).unwrap();
        let guided = guide_features(&fi[l], t).unwrap();
        let energy: f64 = t.data().iter().map(|v| v * v).sum();
        let gi = loop_gram(&guided, energy);
        let gs = loop_gram(&fs[l], fs[l].spatial() as f64);
        let mse: f64 = gi.iter().zip(&gs).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / gi.len() as f64;
        expect += weights.layer_weights()[l] * mse;
    }
    let got = style_loss(&si, &ss, Some(&masks), &weights).unwrap();
    assert!((got - 2.5 * expect).abs() < 1e-6 * expect.max(1.0));

    // Zero masks: the image side contributes a zero Gram.
    let zeros = build_mask_pyramid(&Tensor::zeros(1, 8, 8), &layers).unwrap();
    let mut expect = 0.0;
    for (f, w) in fs.iter().zip(weights.layer_weights()) {
        let gs = loop_gram(f, f.spatial() as f64);
        expect += w * gs.iter().map(|v| v * v).sum::<f64>() / gs.len() as f64;
    }
    let got = style_loss(&si, &ss, Some(&zeros), &weights).unwrap();
    assert!((got - 2.5 * expect).abs() < 1e-9 * expect);
    assert_eq!(style_loss(&si, &si, None, &weights).unwrap(), 0.0);
}

struct Setup {
    net: Vgg19,
    style: FeatureStack,
    weights: LossWeights,
    settings: RenderSettings,
}

fn setup(seed: u64) -> Setup {
    let net = Vgg19::seeded(seed, Layer::RELU3_1);
    let mut r = rng(seed);
    let img = random_tensor(&mut r, 3, 16, 16);
    Setup {
        style: extract_features(&net, &img, &[Layer::RELU2_1, Layer::RELU3_1]).unwrap(),
        net,
        weights: LossWeights::style_only(2),
        settings: RenderSettings::default(),
    }
}

#[test]
fn shape_objective_averages_views() {
    let s = setup(6);
    let dims = Dims::xyz(8, 8, 8);
    let c = 4.0;
    let d = ScalarField::from_fn(dims, |p| (-((p[0] - c).powi(2) + (p[1] - 3.0).powi(2) + (p[2] - 5.0).powi(2)) / 4.0).exp());
    let v = VectorField::from_fn(dims, |p| [0.3 * (p[1] * 0.7).sin(), 0.2, -0.1 * p[0] / 8.0]);
    let eval = |views: &[ViewAngle]| shape_objective(&s.net, &d, &v, &s.style, views, &s.weights, &s.settings).unwrap();
    let front = ViewAngle::FRONT;
    let side = ViewAngle::new(std::f64::consts::FRAC_PI_2).unwrap();
    let single = eval(&[front]);
    assert_eq!(eval(&[front, front]), single);
    let both = eval(&[front, side]);
    let mean = 0.5 * (single + eval(&[side]));
    assert!((both - mean).abs() < 1e-12 * mean);
    assert!(single > 0.0);
}

#[test]
fn shape_objective_of_empty_density_has_zero_gradient() {
    let s = setup(7);
    let dims = Dims::xy(16, 16);
    let target = StyleTarget::from_features(&s.style);
    let objective = Objective {
        net: &s.net,
        style: &target,
        content: None,
        views: &[ViewAngle::FRONT],
        view_weights: None,
        weights: &s.weights,
        settings: &s.settings,
    };
    let v = VectorField::from_fn(dims, |p| [p[0].sin(), p[1].cos(), 0.0]);
    let eval = objective.shape(&ScalarField::zeros(dims), &v, 1.0).unwrap();
    assert!(eval.gradient.iter().all(|&g| g == 0.0));
}

#[test]
fn color_objective_compositions() {
    let s = setup(8);
    let dims = Dims::xy(16, 16);
    let d = gaussian(dims, 3.0);
    let c = ColorField::from_fn(dims, |p| [p[0] / 16.0, p[1] / 16.0, 0.5]).unwrap();
    let views = [ViewAngle::FRONT];
    let single = color_objective(&s.net, &d, &c, &s.style, &views, &s.weights, &s.settings).unwrap();
    let twice = color_objective(&s.net, &d, &c, &s.style, &[views[0]; 2], &s.weights, &s.settings).unwrap();
    assert_eq!(single, twice);

    // The same value through explicit render, masks, features and loss.
    let img = render_color(&d, &c, views[0], &s.settings).unwrap();
    let layers = [Layer::RELU2_1, Layer::RELU3_1];
    let masks = build_mask_pyramid(&render_grayscale(&d, views[0], &s.settings).unwrap(), &layers).unwrap();
    let feats = extract_features(&s.net, &img, &layers).unwrap();
    let direct = style_loss(&feats, &s.style, Some(&masks), &s.weights).unwrap();
    assert!((single - direct).abs() < 1e-12 * direct);
}

#[test]
fn empty_density_makes_color_irrelevant() {
    let s = setup(9);
    let dims = Dims::xy(16, 16);
    let d = ScalarField::zeros(dims);
    let target = StyleTarget::from_features(&s.style);
    let views = [ViewAngle::FRONT];
    let masks = view_masks(&d, &views, &s.settings, target.layers()).unwrap();
    let objective = Objective {
        net: &s.net,
        style: &target,
        content: None,
        views: &views,
        view_weights: None,
        weights: &s.weights,
        settings: &s.settings,
    };
    let a = objective.color(&d, &ColorField::filled(dims, [0.2, 0.9, 0.4]).unwrap(), &masks).unwrap();
    let b = objective.color(&d, &ColorField::from_fn(dims, |p| [p[0] / 16.0, 0.0, 1.0]).unwrap(), &masks).unwrap();
    assert_eq!(a.loss, b.loss);
    assert!(a.gradient.iter().all(|&g| g == 0.0));
}

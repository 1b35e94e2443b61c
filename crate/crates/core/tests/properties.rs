use nalgebra::DMatrix;
use proptest::prelude::*;
use smokestyle_core::*;

fn values(len: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, len)
}

fn stack(layers: &[(Layer, usize, usize)], data: &[f64]) -> FeatureStack {
    let mut offset = 0;
    FeatureStack::new(
        layers
            .iter()
            .map(|&(l, c, hw)| {
                let n = c * hw * hw;
                let t = Tensor::new(c, hw, hw, data[offset..offset + n].to_vec()).unwrap();
                offset += n;
                (l, t)
            })
            .collect(),
    )
}

// Two small layers whose extents match the mask pyramid of an 8x8 image.
const LAYERS: [(Layer, usize, usize); 2] = [(Layer::RELU1_1, 3, 8), (Layer::RELU2_1, 4, 4)];
const STACK_LEN: usize = 3 * 64 + 4 * 16;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sampling_is_exact_at_cell_centers(vals in values(4 * 3 * 5 * 3, 0.0, 1.0), idx in 0usize..60) {
        let dims = Dims::xyz(4, 3, 5);
        let d = ScalarField::new(dims, vals[..60].to_vec()).unwrap();
        let v = VectorField::new(dims, vals[..180].to_vec()).unwrap();
        let c = ColorField::new(dims, vals[..180].to_vec()).unwrap();
        let p = dims.center(idx);
        prop_assert_eq!(d.sample(p).unwrap(), d.values()[idx]);
        prop_assert_eq!(v.sample(p).unwrap(), v.at(idx));
        prop_assert_eq!(c.sample(p).unwrap(), c.at(idx));
    }

    #[test]
    fn downsampling_composes(vals in values(16 * 16, 0.0, 1.0)) {
        let d = ScalarField::new(Dims::xy(16, 16), vals).unwrap();
        let once = downsample(&d, Dims::xy(4, 4)).unwrap();
        let twice = downsample(&downsample(&d, Dims::xy(8, 8)).unwrap(), Dims::xy(4, 4)).unwrap();
        for (a, b) in once.values().iter().zip(twice.values()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn downsampling_composes_in_3d(vals in values(8 * 8 * 8, 0.0, 1.0)) {
        let d = ScalarField::new(Dims::xyz(8, 8, 8), vals).unwrap();
        let once = downsample(&d, Dims::xyz(2, 2, 2)).unwrap();
        let twice = downsample(&downsample(&d, Dims::xyz(4, 4, 4)).unwrap(), Dims::xyz(2, 2, 2)).unwrap();
        for (a, b) in once.values().iter().zip(twice.values()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn downsampling_is_linear(vals in values(12 * 10, 0.0, 1.0), k in 0.0f64..20.0) {
        let d = ScalarField::new(Dims::xy(12, 10), vals).unwrap();
        let target = Dims::xy(5, 3);
        let a = downsample(&d.scaled(k).unwrap(), target).unwrap();
        let b = downsample(&d, target).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - k * y).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_fields_survive_advection(
        value in 0.0f64..5.0,
        vel in values(2 * 7 * 6, -3.0, 3.0),
        dt in -2.0f64..2.0,
    ) {
        let dims = Dims::xy(7, 6);
        let d = ScalarField::filled(dims, value);
        let v = VectorField::new(dims, vel).unwrap();
        let out = advect(&d, &v, dt).unwrap();
        prop_assert!(out.values().iter().all(|x| (x - value).abs() < 1e-6));
    }

    #[test]
    fn gram_is_symmetric_and_psd(c in 1usize..7, hw in 1usize..6, vals in values(6 * 5 * 5, -3.0, 3.0)) {
        let f = Tensor::new(c, hw, hw, vals[..c * hw * hw].to_vec()).unwrap();
        let g = gram(&f);
        for i in 0..c {
            for j in 0..c {
                prop_assert!((g.at(i, j) - g.at(j, i)).abs() < 1e-6);
            }
        }
        let m = DMatrix::from_row_slice(c, c, g.data());
        let smallest = m.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(smallest >= -1e-6);
    }

    #[test]
    fn losses_are_non_negative_and_vanish_on_identical_inputs(
        a in values(STACK_LEN, 0.0, 2.0),
        b in values(STACK_LEN, 0.0, 2.0),
        mask in values(64, 0.0, 1.0),
    ) {
        let (fa, fb) = (stack(&LAYERS, &a), stack(&LAYERS, &b));
        let w = LossWeights::new(0.0, 1.0, vec![0.3, 0.7]).unwrap();
        let masks = build_mask_pyramid(&Tensor::new(1, 8, 8, mask).unwrap(), &[Layer::RELU1_1, Layer::RELU2_1]).unwrap();
        prop_assert!(content_loss(&fa, &fb).unwrap() >= 0.0);
        prop_assert!(style_loss(&fa, &fb, None, &w).unwrap() >= 0.0);
        prop_assert!(style_loss(&fa, &fb, Some(&masks), &w).unwrap() >= 0.0);
        prop_assert_eq!(content_loss(&fa, &fa).unwrap(), 0.0);
        prop_assert_eq!(style_loss(&fa, &fa, None, &w).unwrap(), 0.0);
    }

    #[test]
    fn style_loss_is_linear_in_beta(
        a in values(STACK_LEN, 0.0, 2.0),
        b in values(STACK_LEN, 0.0, 2.0),
        k in 0.01f64..100.0,
    ) {
        let (fa, fb) = (stack(&LAYERS, &a), stack(&LAYERS, &b));
        let w = LossWeights::new(0.0, 1.0, vec![1.0, 2.0]).unwrap();
        let base = style_loss(&fa, &fb, None, &w).unwrap();
        let scaled = style_loss(&fa, &fb, None, &w.with_beta(k).unwrap()).unwrap();
        prop_assert!((scaled - k * base).abs() <= 1e-9 * scaled.abs().max(1.0));
    }

    #[test]
    fn all_ones_masks_match_unguided_loss(a in values(STACK_LEN, 0.0, 2.0), b in values(STACK_LEN, 0.0, 2.0)) {
        let (fa, fb) = (stack(&LAYERS, &a), stack(&LAYERS, &b));
        let w = LossWeights::style_only(2);
        let ones = build_mask_pyramid(&Tensor::new(1, 8, 8, vec![1.0; 64]).unwrap(), &[Layer::RELU1_1, Layer::RELU2_1]).unwrap();
        prop_assert_eq!(
            style_loss(&fa, &fb, Some(&ones), &w).unwrap(),
            style_loss(&fa, &fb, None, &w).unwrap()
        );
    }

    #[test]
    fn renders_darken_as_gamma_grows(vals in values(5 * 5 * 5, 0.0, 1.0)) {
        let mut vals = vals;
        vals[62] = 0.5;
        let d = ScalarField::new(Dims::xyz(5, 5, 5), vals).unwrap();
        let mut prev: Option<Tensor> = None;
        for gamma in [0.001, 0.1, 0.5, 1.0] {
            let settings = RenderSettings { gamma, ..RenderSettings::default() };
            let img = render_grayscale(&d, ViewAngle::FRONT, &settings).unwrap();
            if let Some(p) = &prev {
                prop_assert!(img.data().iter().zip(p.data()).all(|(a, b)| a <= b));
            }
            prev = Some(img);
        }
    }
}

use proptest::prelude::*;
use smokestyle::volf::Volume;
use smokestyle_core::{Dims, ScalarField, VectorField};

fn extents() -> impl Strategy<Value = Vec<usize>> {
    prop_oneof![prop::collection::vec(1usize..9, 2), prop::collection::vec(1usize..6, 3)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raw_bits_survive_a_round_trip(ext in extents(), channels in 1usize..4, bits in prop::collection::vec(any::<u32>(), 16)) {
        let dims = Dims::new(&ext).unwrap();
        let n = dims.cells() * channels;
        let data: Vec<f32> = bits.iter().cycle().take(n).map(|&b| f32::from_bits(b)).collect();
        let v = Volume::new(dims, channels, data).unwrap();
        let mut buf = Vec::new();
        v.write_to(&mut buf).unwrap();
        let back = Volume::read_from(&buf[..]).unwrap();
        prop_assert_eq!(back.dims, v.dims);
        prop_assert_eq!(back.channels, v.channels);
        let same = back.data.iter().zip(&v.data).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
    }

    #[test]
    fn fields_survive_a_file_round_trip(ext in extents(), vals in prop::collection::vec(-4.0f32..4.0, 5 * 5 * 5 * 3)) {
        let dims = Dims::new(&ext).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let scalar = ScalarField::new(dims, vals[..dims.cells()].iter().map(|&v| f64::from(v.abs())).collect()).unwrap();
        let path = dir.path().join("d.volf");
        Volume::from(&scalar).save(&path).unwrap();
        prop_assert_eq!(Volume::load(&path).unwrap().into_scalar().unwrap(), scalar);

        let n = dims.cells() * dims.rank();
        let vel = VectorField::new(dims, vals[..n].iter().map(|&v| f64::from(v)).collect()).unwrap();
        Volume::from(&vel).save(&path).unwrap();
        prop_assert_eq!(Volume::load(&path).unwrap().into_vector().unwrap(), vel);
    }
}

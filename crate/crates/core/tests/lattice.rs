use lattice_ldp::lattice::{
    apply_diff, apply_laplacian, diff_energy, read_binary, read_csv, tail_mass, weighted_norm_sq, write_binary, write_csv, Direction,
    LatticeShape, StateVector, Weight,
};
use proptest::prelude::*;

fn shape_and_states() -> impl Strategy<Value = (LatticeShape, Vec<f64>, Vec<f64>)> {
    (1usize..=2, 0usize..=6).prop_flat_map(|(dim, radius)| {
        let shape = LatticeShape::new(dim, radius).unwrap();
        let n = shape.site_count();
        (
            Just(shape),
            prop::collection::vec(-10.0f64..10.0, n),
            prop::collection::vec(-10.0f64..10.0, n),
        )
    })
}

proptest! {
    #[test]
    fn difference_operators_are_adjoint((shape, u, v) in shape_and_states()) {
        let u = StateVector::from_values(shape, u).unwrap();
        let v = StateVector::from_values(shape, v).unwrap();
        for axis in 0..shape.dim() {
            let bu = apply_diff(&u, axis, Direction::Forward).unwrap();
            let bsv = apply_diff(&v, axis, Direction::Backward).unwrap();
            let scale = 1.0 + bu.norm() * v.norm();
            prop_assert!((bu.dot(&v) - u.dot(&bsv)).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn laplacian_energy_identity((shape, u, _v) in shape_and_states()) {
        let u = StateVector::from_values(shape, u).unwrap();
        let energy: f64 = (0..shape.dim()).map(|j| diff_energy(&u, j).unwrap()).sum();
        let au = apply_laplacian(&u).dot(&u);
        prop_assert!((au - energy).abs() <= 1e-12 * au.abs().max(1.0));
        prop_assert!(au >= 0.0);
    }

    #[test]
    fn laplacian_is_symmetric((shape, u, v) in shape_and_states()) {
        let u = StateVector::from_values(shape, u).unwrap();
        let v = StateVector::from_values(shape, v).unwrap();
        let (l, r) = (apply_laplacian(&u).dot(&v), u.dot(&apply_laplacian(&v)));
        prop_assert!((l - r).abs() <= 1e-12 * (1.0 + l.abs()));
    }
}

#[test]
fn sites_are_lexicographic() {
    let shape = LatticeShape::new(2, 1).unwrap();
    let sites: Vec<Vec<i64>> = shape.sites().collect();
    assert_eq!(sites[0], vec![-1, -1]);
    assert_eq!(sites[1], vec![-1, 0]);
    assert_eq!(sites[3], vec![0, -1]);
    assert_eq!(sites[8], vec![1, 1]);
    for (k, s) in sites.iter().enumerate() {
        assert_eq!(shape.index(s), Some(k));
    }
    assert_eq!(shape.index(&[2, 0]), None);
}

#[test]
fn weights_grow_with_distance() {
    let shape = LatticeShape::new(2, 3).unwrap();
    let u = StateVector::basis(shape, &[3, 3]).unwrap();
    let r2 = 18.0;
    assert!((weighted_norm_sq(&u, Weight::Kappa) - (1.0 + r2)).abs() < 1e-12);
    assert!((weighted_norm_sq(&u, Weight::KappaDelta(0.5)) - (1.0 + 0.25 * r2)).abs() < 1e-12);
    assert_eq!(weighted_norm_sq(&u, Weight::Standard), 1.0);
}

#[test]
fn tail_mass_counts_outer_sites() {
    let shape = LatticeShape::new(1, 4).unwrap();
    let u = StateVector::from_fn(shape, |i| i[0] as f64);
    assert_eq!(tail_mass(&u, 3), 9.0 + 16.0 + 9.0 + 16.0);
    assert_eq!(tail_mass(&u, 0), u.norm_sq());
    assert_eq!(tail_mass(&u, 5), 0.0);
}

#[test]
fn csv_and_binary_round_trip() {
    let shape = LatticeShape::new(2, 2).unwrap();
    let u = StateVector::from_fn(shape, |i| 0.1 * i[0] as f64 - 1.0 / (3.0 + i[1] as f64));
    let mut buf = Vec::new();
    write_csv(&u, &mut buf).unwrap();
    assert_eq!(read_csv(shape, buf.as_slice()).unwrap(), u);
    let mut bin = Vec::new();
    write_binary(&u, &mut bin).unwrap();
    assert_eq!(read_binary(shape, bin.as_slice()).unwrap(), u);
    assert!(read_binary(LatticeShape::new(2, 1).unwrap(), bin.as_slice()).is_err());
}

//! Difference operators, the zero-padded Laplacian and the weighted norms.

use lattice_ldp::lattice::{apply_diff, apply_laplacian, diff_energy, weighted_norm, Direction, LatticeShape, StateVector, Weight};

fn main() -> lattice_ldp::Result<()> {
    let shape = LatticeShape::new(2, 3)?;
    println!("N = {}, M = {}, {} sites", shape.dim(), shape.radius(), shape.site_count());

    let u = StateVector::from_fn(shape, |i| (-0.3 * (i[0] * i[0] + i[1] * i[1]) as f64).exp());
    let v = StateVector::from_fn(shape, |i| (i[0] - 2 * i[1]) as f64 / 7.0);

    for axis in 0..shape.dim() {
        let lhs = apply_diff(&u, axis, Direction::Forward)?.dot(&v);
        let rhs = u.dot(&apply_diff(&v, axis, Direction::Backward)?);
        println!("axis {axis}: (B u, v) = {lhs:+.15}  (u, B* v) = {rhs:+.15}");
    }

    let energy: f64 = (0..shape.dim()).map(|j| diff_energy(&u, j)).sum::<lattice_ldp::Result<f64>>()?;
    println!("(Au, u) = {:.15}, sum of squared differences = {energy:.15}", apply_laplacian(&u).dot(&u));

    for (name, w) in [("plain", Weight::Standard), ("kappa", Weight::Kappa), ("kappa_0.25", Weight::KappaDelta(0.25))] {
        println!("|v|_{name} = {:.6}", weighted_norm(&v, w));
    }
    Ok(())
}

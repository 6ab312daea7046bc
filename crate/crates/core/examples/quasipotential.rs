//! Quasipotential of a one-site cubic system against its closed form 3v² + v⁴/2.

use lattice_ldp::lattice::{LatticeShape, StateVector};
use lattice_ldp::model::{DiffusionKind, DiffusionSpec, ModelParams, NonlinearitySpec};
use lattice_ldp::rate::{quasipotential, QuasipotentialOptions};
use lattice_ldp::verify::onesite_quasipotential_oracle;

fn main() -> lattice_ldp::Result<()> {
    let shape = LatticeShape::new(1, 0)?;
    let p = ModelParams {
        lambda: 1.0,
        gamma: 0.0,
        g: StateVector::zeros(shape),
        f: NonlinearitySpec::Cubic,
        sigma: DiffusionSpec {
            kind: DiffusionKind::ConstantDiagonal,
            a: StateVector::from_fn(shape, |_| 1.0),
        },
        epsilon: 0.1,
    };
    let opts = QuasipotentialOptions::default();
    println!("horizons {:?}", opts.horizons_for(&p));
    for v in [0.5, 1.0] {
        let target = StateVector::from_values(shape, vec![v])?;
        let q = quasipotential(&p, &target, &opts)?;
        let exact = onesite_quasipotential_oracle(&p, v)?;
        println!("v = {v}: V = {:.6}, quadrature {exact:.6}, closed form {:.6}", q.value, 3.0 * v * v + 0.5 * v.powi(4));
        for r in &q.per_horizon {
            println!("    T = {:5.2}  delta = {:.4}  action = {:.6}  converged = {}", r.horizon, r.delta, r.action, r.converged);
        }
    }
    Ok(())
}

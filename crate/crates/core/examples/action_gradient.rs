//! The penalized action, its adjoint gradient against a finite difference,
//! and the minimizer for one fixed horizon.

use lattice_ldp::lattice::{LatticeShape, StateVector};
use lattice_ldp::model::{DiffusionKind, DiffusionSpec, ModelParams, NonlinearitySpec};
use lattice_ldp::rate::{minimize_action, objective_and_gradient, ActionOptions, ControlPath};

fn main() -> lattice_ldp::Result<()> {
    let shape = LatticeShape::new(1, 2)?;
    let p = ModelParams {
        lambda: 1.0,
        gamma: 0.0,
        g: StateVector::zeros(shape),
        f: NonlinearitySpec::Cubic,
        sigma: DiffusionSpec {
            kind: DiffusionKind::ConstantDiagonal,
            a: StateVector::from_fn(shape, |i| 1.0 / (1.0 + i[0].abs() as f64)),
        },
        epsilon: 0.1,
    };
    let u0 = StateVector::zeros(shape);
    let v = StateVector::from_fn(shape, |i| if i[0] == 0 { 0.8 } else { 0.2 });

    let h = ControlPath::from_fn(shape, 1.0, 20, |t| StateVector::from_fn(shape, |i| (t + i[0] as f64).sin()));
    let mu = 0.5;
    let (value, grad) = objective_and_gradient(&p, &u0, &h, &v, mu, 1)?;
    let (k, site, step) = (7, 1, 1e-6);
    let bump = |d: f64| -> lattice_ldp::Result<f64> {
        let mut values = h.values().to_vec();
        values[k].values_mut()[site] += d;
        Ok(objective_and_gradient(&p, &u0, &ControlPath::new(1.0, values)?, &v, mu, 1)?.0)
    };
    let fd = (bump(step)? - bump(-step)?) / (2.0 * step);
    println!("objective {value:.8}");
    println!("dJ/dh[{k}][{site}]: adjoint {:.10}, central difference {fd:.10}", grad.values()[k].values()[site]);

    let r = minimize_action(&p, &u0, &v, 2.0, 0.0, &ActionOptions::default())?;
    println!(
        "minimum action over [0, 2]: {:.6} (converged {}, {} iterations, gap {:.1e})",
        r.action, r.converged, r.iterations, r.terminal_gap
    );
    Ok(())
}

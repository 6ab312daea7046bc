//! A stochastic path on a two-dimensional box and the ensemble second moment.

use lattice_ldp::bounds::second_moment_bound;
use lattice_ldp::lattice::{LatticeShape, StateVector};
use lattice_ldp::mcstats::estimate_moments;
use lattice_ldp::model::{DiffusionKind, DiffusionSpec, ModelParams, NonlinearitySpec};
use lattice_ldp::simulate::{simulate_path, Scheme, SimConfig};

fn main() -> lattice_ldp::Result<()> {
    let shape = LatticeShape::new(2, 4)?;
    let decay = |c: f64| StateVector::from_fn(shape, |i| c / (1.0 + (i[0] * i[0] + i[1] * i[1]) as f64));
    let p = ModelParams {
        lambda: 1.0,
        gamma: 0.0,
        g: decay(0.5),
        f: NonlinearitySpec::Cubic,
        sigma: DiffusionSpec {
            kind: DiffusionKind::NormalizedDiagonal,
            a: decay(1.0),
        },
        epsilon: 0.2,
    };
    let u0 = decay(2.0);
    let cfg = SimConfig::new(0.01, 5.0, Scheme::default_for(&p))
        .with_paths(400)
        .with_seed(7)
        .with_stride(100);
    println!("scheme {:?}, dt_max {:.4}", cfg.scheme, p.dt_max());

    let path = simulate_path(&p, &u0, &cfg, None, 0)?;
    for (t, u) in path.times.iter().zip(&path.states) {
        println!("path 0  t = {t:4.1}  |u| = {:.5}  u(0,0) = {:+.5}", u.norm(), u.get(&[0, 0]));
    }

    let s = estimate_moments(&p, &u0, &cfg, &[3])?;
    for (i, t) in s.times.iter().enumerate() {
        println!(
            "t = {t:4.1}  E|u|^2 = {:.5} ± {:.5}  tail(|i|>=3) = {:.2e}  bound = {:.4}",
            s.mean_norm_sq[i],
            s.se_norm_sq[i],
            s.tail_mean[i][0],
            second_moment_bound(&p, u0.norm_sq(), *t)
        );
    }
    Ok(())
}

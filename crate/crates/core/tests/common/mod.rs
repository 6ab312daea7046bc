#![allow(dead_code, clippy::too_many_arguments)]

use lattice_ldp::lattice::{LatticeShape, StateVector};
use lattice_ldp::model::{DiffusionKind, DiffusionSpec, ModelParams, NonlinearitySpec};
use lattice_ldp::rate::{objective_and_gradient, ControlPath};

/// `c (1 + |i|)^{−p}` on the box.
pub fn power_decay(shape: LatticeShape, c: f64, p: f64) -> StateVector {
    StateVector::from_fn(shape, |i| {
        let r = i.iter().map(|x| (x * x) as f64).sum::<f64>().sqrt();
        c * (1.0 + r).powf(-p)
    })
}

pub fn model(
    dim: usize,
    radius: usize,
    lambda: f64,
    f: NonlinearitySpec,
    kind: DiffusionKind,
    a: impl Fn(LatticeShape) -> StateVector,
    g: impl Fn(LatticeShape) -> StateVector,
    epsilon: f64,
) -> ModelParams {
    let shape = LatticeShape::new(dim, radius).unwrap();
    ModelParams {
        lambda,
        gamma: 0.0,
        g: g(shape),
        f,
        sigma: DiffusionSpec { kind, a: a(shape) },
        epsilon,
    }
}

/// λ = 1, f = 0, a₀ = 1, g = 0 on one site.
pub fn linear_onesite(epsilon: f64) -> ModelParams {
    model(1, 0, 1.0, NonlinearitySpec::Zero, DiffusionKind::ConstantDiagonal, |s| StateVector::from_fn(s, |_| 1.0), StateVector::zeros, epsilon)
}

/// λ = 1, f(s) = s³, a₀ = 1, g = 0 on one site.
pub fn cubic_onesite(epsilon: f64) -> ModelParams {
    model(1, 0, 1.0, NonlinearitySpec::Cubic, DiffusionKind::ConstantDiagonal, |s| StateVector::from_fn(s, |_| 1.0), StateVector::zeros, epsilon)
}

/// Linear instance on `N = 1, M = 4` with power-decay noise and forcing.
pub fn linear_chain(epsilon: f64) -> ModelParams {
    model(
        1,
        4,
        1.0,
        NonlinearitySpec::Zero,
        DiffusionKind::ConstantDiagonal,
        |s| power_decay(s, 1.0, 2.0),
        |s| power_decay(s, 0.5, 2.0),
        epsilon,
    )
}

/// Central finite differences of the penalized objective in every control entry.
pub fn fd_gradient(p: &ModelParams, u0: &StateVector, h: &ControlPath, v: &StateVector, mu: f64, step: f64) -> Vec<f64> {
    let shape = h.shape();
    let mut out = Vec::new();
    for k in 0..h.n_steps() {
        for i in 0..shape.site_count() {
            let perturbed = |delta: f64| {
                let values = h
                    .values()
                    .iter()
                    .enumerate()
                    .map(|(kk, x)| {
                        let mut x = x.clone();
                        if kk == k {
                            x.values_mut()[i] += delta;
                        }
                        x
                    })
                    .collect();
                let hp = ControlPath::new(h.t_end(), values).unwrap();
                objective_and_gradient(p, u0, &hp, v, mu, 1).unwrap().0
            };
            out.push((perturbed(step) - perturbed(-step)) / (2.0 * step));
        }
    }
    out
}

/// Max over entries of `|a − b| / max(|b|, floor)`.
pub fn max_rel_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(floor))
        .fold(0.0, f64::max)
}

/// `K = λI + A` as a dense matrix, built column by column.
pub fn stiffness(p: &ModelParams) -> nalgebra::DMatrix<f64> {
    let shape = p.shape();
    let n = shape.site_count();
    let mut k = nalgebra::DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = StateVector::zeros(shape);
        e.values_mut()[j] = 1.0;
        let col = lattice_ldp::lattice::apply_laplacian(&e);
        for i in 0..n {
            k[(i, j)] = col.values()[i] + if i == j { p.lambda } else { 0.0 };
        }
    }
    k
}

/// Solution of `u' = −Ku + b` at time `t` by eigendecomposition of `K`.
pub fn linear_solution(p: &ModelParams, u0: &StateVector, b: &StateVector, t: f64) -> StateVector {
    let eig = stiffness(p).symmetric_eigen();
    let q = &eig.eigenvectors;
    let x0 = q.transpose() * nalgebra::DVector::from_column_slice(u0.values());
    let bt = q.transpose() * nalgebra::DVector::from_column_slice(b.values());
    let y = nalgebra::DVector::from_iterator(
        x0.len(),
        (0..x0.len()).map(|i| {
            let k = eig.eigenvalues[i];
            let e = (-k * t).exp();
            e * x0[i] + (1.0 - e) / k * bt[i]
        }),
    );
    StateVector::from_values(u0.shape(), (q * y).as_slice().to_vec()).unwrap()
}

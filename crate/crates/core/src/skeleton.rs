//! Deterministic solvers: the noise-free limit `u' = −λu − Au − f(u) + g`,
//! the controlled skeleton `u' = −λu − Au − f(u) + g + σ(u)h(t)`, and the
//! unique equilibrium under `λ > γ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{dot, StateVector};
use crate::model::ModelParams;
use crate::rate::ControlPath;
use crate::simulate::{self, ControlLookup, Scheme, Stepper, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Classical fourth-order Runge–Kutta.
    Rk4,
    /// The stochastic scheme's one-step map with the noise switched off.
    Explicit(Scheme),
}

/// Right-hand side `F(u, h) = drift(u) + σ(u)h`.
pub(crate) fn rhs_into(p: &ModelParams, u: &[f64], h: Option<&[f64]>, out: &mut [f64]) {
    p.drift_into(u, out, 1.0);
    if let Some(h) = h {
        p.add_sigma_apply(dot(u, u).sqrt(), h, 1.0, out);
    }
}

pub(crate) struct Rk4 {
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl Rk4 {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            stage: vec![0.0; n],
        }
    }

    pub(crate) fn step(&mut self, p: &ModelParams, u: &mut [f64], h: Option<&[f64]>, dt: f64) {
        let [k1, k2, k3, k4] = &mut self.k;
        let stage = &mut self.stage;
        rhs_into(p, u, h, k1);
        for ((s, x), k) in stage.iter_mut().zip(u.iter()).zip(k1.iter()) {
            *s = x + 0.5 * dt * k;
        }
        rhs_into(p, stage, h, k2);
        for ((s, x), k) in stage.iter_mut().zip(u.iter()).zip(k2.iter()) {
            *s = x + 0.5 * dt * k;
        }
        rhs_into(p, stage, h, k3);
        for ((s, x), k) in stage.iter_mut().zip(u.iter()).zip(k3.iter()) {
            *s = x + dt * k;
        }
        rhs_into(p, stage, h, k4);
        for (i, x) in u.iter_mut().enumerate() {
            *x += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

fn integrate(
    p: &ModelParams,
    u0: &StateVector,
    t_end: f64,
    dt: f64,
    control: Option<&ControlPath>,
    integrator: Integrator,
    save_stride: usize,
) -> Result<Trajectory> {
    p.check_shape(u0)?;
    let n_steps = simulate::step_count(t_end, dt)?;
    let lookup = control.map(|c| ControlLookup::new(c, dt, t_end)).transpose()?;
    let n = u0.values().len();
    let mut rk4 = Rk4::new(n);
    let scheme = match integrator {
        Integrator::Explicit(s) => s,
        Integrator::Rk4 => Scheme::EulerMaruyama,
    };
    let mut explicit = Stepper::new(p, scheme, dt);
    let mut u = u0.values().to_vec();
    let mut times = vec![0.0];
    let mut states = vec![u0.clone()];
    for step in 0..n_steps {
        let h = lookup.as_ref().map(|l| l.at_step(step));
        match integrator {
            Integrator::Rk4 => rk4.step(p, &mut u, h, dt),
            Integrator::Explicit(_) => explicit.step(&mut u, h, None),
        }
        let done = step + 1;
        if done % save_stride == 0 || done == n_steps {
            if !u.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    step: done,
                    time: done as f64 * dt,
                });
            }
            times.push(done as f64 * dt);
            states.push(StateVector::from_raw(u0.shape(), u.clone()));
        }
    }
    Ok(Trajectory {
        times,
        states,
        seed: 0,
        path_index: 0,
    })
}

/// Fourth-order solution of the noise-free system, saved at every step.
pub fn solve_limit(p: &ModelParams, u0: &StateVector, t_end: f64, dt: f64) -> Result<Trajectory> {
    solve_limit_with(p, u0, t_end, dt, Integrator::Rk4, 1)
}

pub fn solve_limit_with(
    p: &ModelParams,
    u0: &StateVector,
    t_end: f64,
    dt: f64,
    integrator: Integrator,
    save_stride: usize,
) -> Result<Trajectory> {
    integrate(p, u0, t_end, dt, None, integrator, save_stride.max(1))
}

/// Checks that `dt` subdivides the control grid and returns the substep count.
pub(crate) fn substeps(h: &ControlPath, dt: f64) -> Result<usize> {
    let ratio = h.dt() / dt;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * n {
        return Err(Error::GridMismatch(format!(
            "dt = {dt} does not divide the control spacing {}",
            h.dt()
        )));
    }
    Ok(n as usize)
}

/// Fourth-order solution of the controlled skeleton on `[0, T]`, `T` being
/// the control horizon. `dt` must divide the control spacing.
pub fn solve_controlled(p: &ModelParams, u0: &StateVector, h: &ControlPath, dt: f64) -> Result<Trajectory> {
    solve_controlled_with(p, u0, h, dt, Integrator::Rk4, 1)
}

pub fn solve_controlled_with(
    p: &ModelParams,
    u0: &StateVector,
    h: &ControlPath,
    dt: f64,
    integrator: Integrator,
    save_stride: usize,
) -> Result<Trajectory> {
    p.check_shape(u0)?;
    if h.shape() != u0.shape() {
        return Err(Error::ShapeMismatch {
            expected: u0.shape().site_count(),
            actual: h.shape().site_count(),
        });
    }
    substeps(h, dt)?;
    integrate(p, u0, h.t_end(), dt, Some(h), integrator, save_stride.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumOptions {
    /// Integration horizon before Newton polishing.
    pub t_relax: f64,
    pub max_newton: usize,
    pub tol: f64,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            t_relax: 200.0,
            max_newton: 50,
            tol: 1e-10,
        }
    }
}

/// The unique zero of the drift when `λ > γ`.
pub fn find_equilibrium(p: &ModelParams) -> Result<StateVector> {
    find_equilibrium_with(p, &EquilibriumOptions::default())
}

pub fn find_equilibrium_with(p: &ModelParams, opts: &EquilibriumOptions) -> Result<StateVector> {
    if !p.strong_dissipativity() {
        return Err(Error::Hypothesis(format!(
            "lambda > gamma (lambda = {}, gamma = {})",
            p.lambda, p.gamma
        )));
    }
    let n = p.shape().site_count();
    let residual = |u: &[f64], out: &mut [f64]| p.drift_into(u, out, 1.0);
    let norm = |v: &[f64]| dot(v, v).sqrt();

    // Relax towards the attractor.
    let dt = p.dt_max().min(0.01);
    let steps = (opts.t_relax / dt).ceil() as usize;
    let mut rk4 = Rk4::new(n);
    let mut u = vec![0.0; n];
    let mut r = vec![0.0; n];
    for step in 0..steps {
        if step % 100 == 0 {
            residual(&u, &mut r);
            if norm(&r) < 1e-8 {
                break;
            }
        }
        rk4.step(p, &mut u, None, dt);
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                step: step + 1,
                time: (step + 1) as f64 * dt,
            });
        }
    }

    // Newton polish; −J = λI + A + diag(f'(u)) is symmetric positive definite
    // for λ > γ, so each linear solve is conjugate gradients on finite-difference
    // Jacobian-vector products.
    let mut trial = vec![0.0; n];
    let mut trial_r = vec![0.0; n];
    residual(&u, &mut r);
    let mut res_norm = norm(&r);
    for _ in 0..opts.max_newton {
        if res_norm <= opts.tol {
            return Ok(StateVector::from_raw(p.shape(), u));
        }
        let delta = cg_solve(
            |v, out| neg_jacobian_vec(p, &u, v, out),
            &r,
            1e-13,
            4 * n + 50,
        );
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            for i in 0..n {
                trial[i] = u[i] + alpha * delta[i];
            }
            residual(&trial, &mut trial_r);
            let trial_norm = norm(&trial_r);
            if trial_norm < res_norm {
                u.copy_from_slice(&trial);
                r.copy_from_slice(&trial_r);
                res_norm = trial_norm;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if res_norm <= opts.tol {
        Ok(StateVector::from_raw(p.shape(), u))
    } else {
        Err(Error::NoEquilibrium {
            residual: res_norm,
            newton_steps: opts.max_newton,
        })
    }
}

/// `out ≈ −J(u) v` by a central difference of the drift.
fn neg_jacobian_vec(p: &ModelParams, u: &[f64], v: &[f64], out: &mut [f64]) {
    let n = u.len();
    let v_norm = dot(v, v).sqrt();
    if v_norm == 0.0 {
        out.fill(0.0);
        return;
    }
    let h = 1e-6 * (1.0 + dot(u, u).sqrt()) / v_norm;
    let plus: Vec<f64> = (0..n).map(|i| u[i] + h * v[i]).collect();
    let minus: Vec<f64> = (0..n).map(|i| u[i] - h * v[i]).collect();
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    p.drift_into(&plus, &mut fp, 1.0);
    p.drift_into(&minus, &mut fm, 1.0);
    for i in 0..n {
        out[i] = -(fp[i] - fm[i]) / (2.0 * h);
    }
}

/// Conjugate gradients for an SPD operator given as a closure.
pub(crate) fn cg_solve(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut d = r.clone();
    let mut ad = vec![0.0; n];
    let b_norm = dot(b, b).sqrt();
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        if rr.sqrt() <= rel_tol * b_norm {
            break;
        }
        apply(&d, &mut ad);
        let dad = dot(&d, &ad);
        if dad <= 0.0 {
            break;
        }
        let alpha = rr / dad;
        for i in 0..n {
            x[i] += alpha * d[i];
            r[i] -= alpha * ad[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            d[i] = r[i] + beta * d[i];
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds;
    use crate::lattice::LatticeShape;
    use crate::model::{drift_eval, DiffusionKind, DiffusionSpec, NonlinearitySpec};

    fn params(dim: usize, radius: usize, f: NonlinearitySpec) -> ModelParams {
        let shape = LatticeShape::new(dim, radius).unwrap();
        ModelParams {
            lambda: 1.0,
            gamma: 0.0,
            g: StateVector::zeros(shape),
            f,
            sigma: DiffusionSpec {
                kind: DiffusionKind::NormalizedDiagonal,
                a: StateVector::from_fn(shape, |i| 1.0 / (1.0 + i.iter().map(|x| x * x).sum::<i64>() as f64)),
            },
            epsilon: 0.5,
        }
    }

    fn bump(shape: LatticeShape) -> StateVector {
        StateVector::from_fn(shape, |i| (-(i.iter().map(|x| x * x).sum::<i64>() as f64) / 4.0).exp())
    }

    #[test]
    fn free_decay_respects_exponential_bound() {
        let p = params(1, 6, NonlinearitySpec::Zero);
        let u0 = bump(p.shape());
        let traj = solve_limit(&p, &u0, 5.0, 0.01).unwrap();
        for (t, u) in traj.times.iter().zip(&traj.states) {
            assert!(u.norm() <= (-p.lambda * t).exp() * u0.norm() * (1.0 + 1e-8));
        }
    }

    #[test]
    fn zero_control_matches_limit_exactly() {
        let mut p = params(2, 2, NonlinearitySpec::Cubic);
        p.g = bump(p.shape()).scaled(0.3);
        let u0 = bump(p.shape()).scaled(-0.5);
        let h = ControlPath::zeros(p.shape(), 2.0, 20);
        let a = solve_controlled(&p, &u0, &h, 0.025).unwrap();
        let b = solve_limit(&p, &u0, 2.0, 0.025).unwrap();
        assert_eq!(a.states.len(), b.states.len());
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!(x.distance(y) <= 1e-12);
        }
    }

    #[test]
    fn control_grid_mismatch() {
        let p = params(1, 1, NonlinearitySpec::Zero);
        let h = ControlPath::zeros(p.shape(), 1.0, 10);
        let u0 = StateVector::zeros(p.shape());
        assert!(matches!(solve_controlled(&p, &u0, &h, 0.03), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn equilibrium_is_zero_without_forcing() {
        for f in [NonlinearitySpec::Zero, NonlinearitySpec::Cubic] {
            let p = params(1, 3, f);
            assert_eq!(find_equilibrium(&p).unwrap().norm(), 0.0);
        }
    }

    #[test]
    fn single_site_cubic_equilibrium_matches_bisection() {
        let mut p = params(1, 0, NonlinearitySpec::Cubic);
        p.g = StateVector::from_values(p.shape(), vec![2.0]).unwrap();
        let u = find_equilibrium(&p).unwrap();
        // Root of 3u + u³ = 2 by bisection.
        let (mut lo, mut hi) = (0.0f64, 2.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 3.0 * mid + mid.powi(3) < 2.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((u.values()[0] - lo).abs() < 1e-10);
        assert!(drift_eval(&p, &u).unwrap().norm() <= 1e-10);
        assert!(u.norm_sq() <= bounds::attractor_bound(&p));
    }

    #[test]
    fn equilibrium_needs_strong_dissipativity() {
        let mut p = params(1, 1, NonlinearitySpec::Cubic);
        p.gamma = 1.0;
        assert!(matches!(find_equilibrium(&p), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn lattice_equilibrium_is_a_fixed_point() {
        let mut p = params(2, 3, NonlinearitySpec::Cubic);
        p.g = bump(p.shape()).scaled(3.0);
        let u_star = find_equilibrium(&p).unwrap();
        assert!(drift_eval(&p, &u_star).unwrap().norm() <= 1e-10);
        assert!(u_star.norm_sq() <= bounds::attractor_bound(&p));
        let traj = solve_limit(&p, &u_star, 10.0, 0.05).unwrap();
        assert!(traj.states.iter().all(|u| u.distance(&u_star) <= 1e-8));
    }

    #[test]
    fn cg_solves_small_spd_system() {
        let a = [[4.0, 1.0], [1.0, 3.0]];
        let x = cg_solve(
            |v, out| {
                out[0] = a[0][0] * v[0] + a[0][1] * v[1];
                out[1] = a[1][0] * v[0] + a[1][1] * v[1];
            },
            &[1.0, 2.0],
            1e-14,
            10,
        );
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-14 && (x[1] - 7.0 / 11.0).abs() < 1e-14);
    }
}

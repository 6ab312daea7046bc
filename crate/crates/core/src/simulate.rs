//! Explicit stochastic time stepping.
//!
//! One step of the scheme is
//!
//! ```text
//! u_{n+1} = u_n + Δt [−λu_n − Au_n − f(u_n)/τ_n + g + σ(u_n) h(t_n)] + √ε σ(u_n) ΔW_n
//! ```
//!
//! with `τ_n = 1` for Euler–Maruyama and `τ_n = 1 + Δt ‖f(u_n)‖` for the
//! tamed variant. `ΔW_n` has one independent `N(0, Δt)` entry per retained
//! site, drawn from [`crate::rng`] so that a path depends only on its key.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::StateVector;
use crate::model::ModelParams;
use crate::rate::ControlPath;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
    TamedEuler,
}

impl Scheme {
    /// Tamed stepping whenever the nonlinearity is present.
    pub fn default_for(p: &ModelParams) -> Self {
        if p.f.is_zero() {
            Scheme::EulerMaruyama
        } else {
            Scheme::TamedEuler
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub n_paths: usize,
    pub base_seed: u64,
    pub scheme: Scheme,
    /// Keep every `save_stride`-th state (the initial state is always kept).
    pub save_stride: usize,
}

impl SimConfig {
    pub fn new(dt: f64, t_end: f64, scheme: Scheme) -> Self {
        Self {
            dt,
            t_end,
            n_paths: 1,
            base_seed: 0,
            scheme,
            save_stride: 1,
        }
    }

    pub fn with_paths(mut self, n_paths: usize) -> Self {
        self.n_paths = n_paths;
        self
    }

    pub fn with_seed(mut self, base_seed: u64) -> Self {
        self.base_seed = base_seed;
        self
    }

    pub fn with_stride(mut self, save_stride: usize) -> Self {
        self.save_stride = save_stride;
        self
    }

    /// `t_end / dt`, which must be an integer to within `1e-9`.
    pub fn n_steps(&self) -> Result<usize> {
        step_count(self.t_end, self.dt)
    }

    pub fn validate(&self, p: &ModelParams) -> Result<()> {
        let mut errors = Vec::new();
        if !(self.dt > 0.0) {
            errors.push(format!("dt = {} must be positive", self.dt));
        } else if self.dt > p.dt_max() * (1.0 + 1e-12) {
            errors.push(format!(
                "dt = {} exceeds dt_max = 0.5/(lambda + 4N) = {}",
                self.dt,
                p.dt_max()
            ));
        }
        if !(self.t_end > 0.0) {
            errors.push(format!("t_end = {} must be positive", self.t_end));
        }
        if self.n_paths == 0 {
            errors.push("paths must be positive".into());
        }
        if self.save_stride == 0 {
            errors.push("save_stride must be positive".into());
        }
        if errors.is_empty() {
            if let Err(e) = self.n_steps() {
                errors.push(e.to_string());
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errors))
        }
    }

    /// Times at which states are saved.
    pub fn save_times(&self) -> Result<Vec<f64>> {
        let n = self.n_steps()?;
        Ok(saved_steps(n, self.save_stride)
            .map(|k| k as f64 * self.dt)
            .collect())
    }
}

pub(crate) fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    let ratio = t_end / dt;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::GridMismatch(format!(
            "t_end = {t_end} is not an integer multiple of dt = {dt}"
        )));
    }
    Ok(n as usize)
}

/// Steps kept with a given stride; the final step is always included.
pub(crate) fn saved_steps(n_steps: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..=n_steps).filter(move |&k| k % stride == 0 || k == n_steps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub seed: u64,
    pub path_index: u64,
}

impl Trajectory {
    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn norms_sq(&self) -> Vec<f64> {
        self.states.iter().map(StateVector::norm_sq).collect()
    }
}

/// Piecewise-constant control lookup on the stepping grid.
pub(crate) struct ControlLookup<'a> {
    control: &'a ControlPath,
    steps_per_interval: f64,
}

impl<'a> ControlLookup<'a> {
    pub(crate) fn new(control: &'a ControlPath, dt: f64, t_end: f64) -> Result<Self> {
        if control.t_end() < t_end * (1.0 - 1e-12) {
            return Err(Error::GridMismatch(format!(
                "control defined on [0, {}] but the run needs [0, {t_end}]",
                control.t_end()
            )));
        }
        Ok(Self {
            control,
            steps_per_interval: control.dt() / dt,
        })
    }

    #[inline]
    pub(crate) fn at_step(&self, step: usize) -> &'a [f64] {
        let k = ((step as f64 + 1e-9) / self.steps_per_interval).floor() as usize;
        self.control.values()[k.min(self.control.n_steps() - 1)].values()
    }
}

/// Scratch space for explicit steps.
pub(crate) struct Stepper<'a> {
    p: &'a ModelParams,
    scheme: Scheme,
    dt: f64,
    drift: Vec<f64>,
    noise: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(p: &'a ModelParams, scheme: Scheme, dt: f64) -> Self {
        let n = p.shape().site_count();
        Self {
            p,
            scheme,
            dt,
            drift: vec![0.0; n],
            noise: vec![0.0; n],
        }
    }

    /// Advances `u` in place. `noise` carries `(base_seed, path_index, step)`.
    #[inline]
    pub(crate) fn step(&mut self, u: &mut [f64], control: Option<&[f64]>, noise: Option<(u64, u64, u64)>) {
        let p = self.p;
        let dt = self.dt;
        let taming = match self.scheme {
            Scheme::EulerMaruyama => 1.0,
            Scheme::TamedEuler => 1.0 + dt * p.nonlinearity_norm(u),
        };
        let needs_norm = control.is_some() || (noise.is_some() && p.epsilon > 0.0);
        let u_norm = if needs_norm { crate::lattice::dot(u, u).sqrt() } else { 0.0 };
        p.drift_into(u, &mut self.drift, taming);
        if let Some(h) = control {
            p.add_sigma_apply(u_norm, h, 1.0, &mut self.drift);
        }
        match noise {
            Some((seed, path, step)) if p.epsilon > 0.0 => {
                rng::fill_standard_normals(seed, path, step, &mut self.noise);
                let scale = (p.epsilon * dt).sqrt() * p.sigma.prefactor(u_norm);
                for (((x, d), z), a) in u
                    .iter_mut()
                    .zip(&self.drift)
                    .zip(&self.noise)
                    .zip(p.sigma.a.values())
                {
                    *x += dt * d + scale * a * z;
                }
            }
            _ => {
                for (x, d) in u.iter_mut().zip(&self.drift) {
                    *x += dt * d;
                }
            }
        }
    }
}

/// Runs one path and calls `on_save(save_index, time, state)` at every saved step.
pub(crate) fn run_path(
    p: &ModelParams,
    u0: &StateVector,
    cfg: &SimConfig,
    control: Option<&ControlPath>,
    path_index: u64,
    stochastic: bool,
    mut on_save: impl FnMut(usize, f64, &[f64]),
) -> Result<()> {
    p.check_shape(u0)?;
    let n_steps = cfg.n_steps()?;
    let lookup = control
        .map(|c| ControlLookup::new(c, cfg.dt, cfg.t_end))
        .transpose()?;
    let mut stepper = Stepper::new(p, cfg.scheme, cfg.dt);
    let mut u = u0.values().to_vec();
    let mut saved = 0;
    on_save(saved, 0.0, &u);
    for step in 0..n_steps {
        let h = lookup.as_ref().map(|l| l.at_step(step));
        let noise = stochastic.then_some((cfg.base_seed, path_index, step as u64));
        stepper.step(&mut u, h, noise);
        let done = step + 1;
        if done % cfg.save_stride == 0 || done == n_steps {
            if !u.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    step: done,
                    time: done as f64 * cfg.dt,
                });
            }
            saved += 1;
            on_save(saved, done as f64 * cfg.dt, &u);
        }
    }
    Ok(())
}

/// One trajectory of the (optionally controlled) stochastic system.
pub fn simulate_path(
    p: &ModelParams,
    u0: &StateVector,
    cfg: &SimConfig,
    control: Option<&ControlPath>,
    path_index: u64,
) -> Result<Trajectory> {
    cfg.validate(p)?;
    let shape = u0.shape();
    let mut times = Vec::new();
    let mut states = Vec::new();
    run_path(p, u0, cfg, control, path_index, true, |_, t, u| {
        times.push(t);
        states.push(StateVector::from_raw(shape, u.to_vec()));
    })?;
    states[0] = u0.clone();
    Ok(Trajectory {
        times,
        states,
        seed: cfg.base_seed,
        path_index,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledPaths {
    pub a: Trajectory,
    pub b: Trajectory,
    /// `‖u_a(t) − u_b(t)‖²` at each saved time.
    pub diff_sq: Vec<f64>,
}

/// Two paths driven by identical noise increments.
pub fn simulate_coupled(
    p: &ModelParams,
    u0_a: &StateVector,
    u0_b: &StateVector,
    cfg: &SimConfig,
    path_index: u64,
) -> Result<CoupledPaths> {
    u0_a.ensure_same_shape(u0_b)?;
    let a = simulate_path(p, u0_a, cfg, None, path_index)?;
    let b = simulate_path(p, u0_b, cfg, None, path_index)?;
    let diff_sq = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| {
            let d = x.distance(y);
            d * d
        })
        .collect();
    Ok(CoupledPaths { a, b, diff_sq })
}

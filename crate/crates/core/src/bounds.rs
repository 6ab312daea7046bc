//! Closed-form right-hand sides of the moment, contraction and tail bounds
//! the verification harness compares against.

use crate::error::{Error, Result};
use crate::lattice::{self, StateVector, Weight};
use crate::model::ModelParams;
use crate::rate::ControlPath;

/// `E‖u^ε(t)‖² ≤ e^{−λt} E‖u₀‖² + λ^{−2}‖g‖² + λ^{−1}L_σ²`.
pub fn second_moment_bound(p: &ModelParams, u0_norm_sq: f64, t: f64) -> f64 {
    let l = p.l_sigma();
    (-p.lambda * t).exp() * u0_norm_sq + p.g.norm_sq() / (p.lambda * p.lambda) + l * l / p.lambda
}

/// `E‖u^ε(t) − u(t)‖² ≤ ε γ^{−1} L_σ² e^{γt}`; needs `γ > 0`.
pub fn small_noise_bound(p: &ModelParams, t: f64) -> Result<f64> {
    if !(p.gamma > 0.0) {
        return Err(Error::Hypothesis(format!(
            "gamma > 0 (the bound divides by gamma; got gamma = {})",
            p.gamma
        )));
    }
    let l = p.l_sigma();
    Ok(p.epsilon / p.gamma * l * l * (p.gamma * t).exp())
}

/// `‖u_h(t)‖² ≤ e^{−λt}‖u₀‖² + 2λ^{−2}‖g‖² + 2λ^{−1}L_σ² ∫₀ᵗ ‖h‖²`.
pub fn controlled_energy_bound(p: &ModelParams, u0_norm_sq: f64, control_l2_sq: f64, t: f64) -> f64 {
    let l = p.l_sigma();
    (-p.lambda * t).exp() * u0_norm_sq
        + 2.0 * p.g.norm_sq() / (p.lambda * p.lambda)
        + 2.0 * l * l / p.lambda * control_l2_sq
}

/// `E‖u^ε(t, u₀₁) − u^ε(t, u₀₂)‖² ≤ e^{−(λ−γ)t} ‖u₀₁ − u₀₂‖²`, valid for
/// `λ > γ` and `ε < (λ − γ) L_σ^{−2}`.
pub fn contraction_bound(p: &ModelParams, d0_sq: f64, t: f64) -> f64 {
    (-(p.lambda - p.gamma) * t).exp() * d0_sq
}

/// Noise intensities below this value make the stochastic flow contract.
pub fn uniqueness_epsilon(p: &ModelParams) -> f64 {
    let l = p.l_sigma();
    if l == 0.0 {
        f64::INFINITY
    } else {
        (p.lambda - p.gamma) / (l * l)
    }
}

/// `sup_{v ∈ attractor} ‖v‖² ≤ 2λ^{−2}‖g‖²`.
pub fn attractor_bound(p: &ModelParams) -> f64 {
    2.0 * p.g.norm_sq() / (p.lambda * p.lambda)
}

/// Natural log of `e^{−t} e^{(δ/ε)‖κ_δ u₀‖²} + λ e^{(2+ε^{−1})λ^{−1}}`.
pub fn log_exp_moment_bound(p: &ModelParams, delta: f64, u0: &StateVector, t: f64) -> f64 {
    let eps = p.epsilon;
    let initial = -t + delta / eps * lattice::weighted_norm_sq(u0, Weight::KappaDelta(delta));
    let stationary = p.lambda.ln() + (2.0 + 1.0 / eps) / p.lambda;
    log_add_exp(initial, stationary)
}

/// Natural log of the probability bound
/// `P(‖u^ε(t)‖_κ > R) ≤ e^{−R²δ³/ε} [e^{−t} e^{(δ/ε)‖κ_δ u₀‖²} + λ e^{(2+ε^{−1})λ^{−1}}]`.
pub fn log_weighted_ball_escape_bound(
    p: &ModelParams,
    delta: f64,
    u0: &StateVector,
    radius: f64,
    t: f64,
) -> f64 {
    log_exp_moment_bound(p, delta, u0, t) - radius * radius * delta.powi(3) / p.epsilon
}

pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Squared-distance bound between two controlled solutions started at
/// distance `sqrt(d0_sq)`, for `λ > γ`:
///
/// ```text
/// ‖u_{h₁}(t) − u_{h₂}(t)‖² ≤ e^{−∫₀ᵗ c} d₀² + 2(λ−γ)^{−1}L_σ² ∫₀ᵗ e^{−∫ₛᵗ c} ‖h₁ − h₂‖² ds,
/// c(r) = λ − γ − 2(λ−γ)^{−1} L_σ² ‖h₁(r)‖².
/// ```
///
/// Both controls must share a grid. Returns the bound at every grid node.
pub fn control_continuity_bound(
    p: &ModelParams,
    d0_sq: f64,
    h1: &ControlPath,
    h2: &ControlPath,
) -> Result<Vec<f64>> {
    if !p.strong_dissipativity() {
        return Err(Error::Hypothesis("lambda > gamma".into()));
    }
    h1.ensure_same_grid(h2)?;
    let gap = p.lambda - p.gamma;
    let l = p.l_sigma();
    let k = 2.0 * l * l / gap;
    let tau = h1.dt();
    let mut out = Vec::with_capacity(h1.n_steps() + 1);
    let mut bound = d0_sq;
    out.push(bound);
    for (a, b) in h1.values().iter().zip(h2.values()) {
        let rate = gap - k * a.norm_sq();
        let q = a.distance(b).powi(2);
        let decay = (-rate * tau).exp();
        let forcing = if (rate * tau).abs() < 1e-12 {
            q * tau
        } else {
            q * (1.0 - decay) / rate
        };
        bound = decay * bound + k * forcing;
        out.push(bound);
    }
    Ok(out)
}

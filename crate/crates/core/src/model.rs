//! Drift, nonlinearity and diffusion of the lattice system
//!
//! ```text
//! du + (λu + Au + f(u)) dt = g dt + √ε σ(u) dW
//! ```
//!
//! together with a validator for the structural hypotheses the bounds in
//! [`crate::verify`] rely on: the one-sided condition on `f`, boundedness and
//! Lipschitz continuity of `σ` in the weighted space, and `λ > γ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{self, LatticeShape, StateVector, Weight};

/// One scalar nonlinearity applied at every site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "coeffs", rename_all = "snake_case")]
pub enum NonlinearitySpec {
    Zero,
    /// `f(s) = s³`
    Cubic,
    /// `f(s) = s³ − γ' s`
    CubicShifted(f64),
    /// `f(s) = Σ_k c_k s^{2k+1}`
    OddPolynomial(Vec<f64>),
}

impl NonlinearitySpec {
    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Cubic => s * s * s,
            Self::CubicShifted(shift) => s * s * s - shift * s,
            Self::OddPolynomial(c) => {
                let s2 = s * s;
                c.iter().rev().fold(0.0, |acc, &ck| acc * s2 + ck) * s
            }
        }
    }

    #[inline]
    pub fn derivative(&self, s: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Cubic => 3.0 * s * s,
            Self::CubicShifted(shift) => 3.0 * s * s - shift,
            Self::OddPolynomial(c) => {
                let s2 = s * s;
                c.iter()
                    .enumerate()
                    .rev()
                    .fold(0.0, |acc, (k, &ck)| acc * s2 + (2 * k + 1) as f64 * ck)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Zero => true,
            Self::OddPolynomial(c) => c.iter().all(|&ck| ck == 0.0),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionKind {
    /// `σ(u)v = (1 + ‖u‖)^{-1} Σ a_i v_i e_i`
    NormalizedDiagonal,
    /// `σ(u)v = Σ a_i v_i e_i`
    ConstantDiagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSpec {
    pub kind: DiffusionKind,
    pub a: StateVector,
}

impl DiffusionSpec {
    /// Scalar factor multiplying `a ⊙ v`.
    #[inline]
    pub fn prefactor(&self, u_norm: f64) -> f64 {
        match self.kind {
            DiffusionKind::NormalizedDiagonal => 1.0 / (1.0 + u_norm),
            DiffusionKind::ConstantDiagonal => 1.0,
        }
    }

    /// Derivative of the prefactor with respect to `‖u‖`.
    #[inline]
    pub(crate) fn prefactor_slope(&self, u_norm: f64) -> f64 {
        match self.kind {
            DiffusionKind::NormalizedDiagonal => -1.0 / ((1.0 + u_norm) * (1.0 + u_norm)),
            DiffusionKind::ConstantDiagonal => 0.0,
        }
    }

    /// `L_σ = ‖a‖_{ℓ²_κ}`.
    pub fn lipschitz_bound(&self) -> f64 {
        lattice::weighted_norm(&self.a, Weight::Kappa)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: f64,
    /// One-sided bound `f' ≥ −γ`.
    pub gamma: f64,
    pub g: StateVector,
    pub f: NonlinearitySpec,
    pub sigma: DiffusionSpec,
    pub epsilon: f64,
}

impl ModelParams {
    pub fn shape(&self) -> LatticeShape {
        self.g.shape()
    }

    pub fn l_sigma(&self) -> f64 {
        self.sigma.lipschitz_bound()
    }

    /// `λ > γ`.
    pub fn strong_dissipativity(&self) -> bool {
        self.lambda > self.gamma
    }

    /// Largest explicit step allowed, `0.5 / (λ + 4N)`.
    pub fn dt_max(&self) -> f64 {
        0.5 / (self.lambda + 4.0 * self.shape().dim() as f64)
    }

    /// Same parameters at a different noise intensity.
    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }

    pub(crate) fn check_shape(&self, u: &StateVector) -> Result<()> {
        if u.shape() != self.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape().site_count(),
                actual: u.shape().site_count(),
            });
        }
        Ok(())
    }

    /// `out = −λu − Au − f(u)/taming + g`; `taming` is 1 for the plain drift.
    pub(crate) fn drift_into(&self, u: &[f64], out: &mut [f64], taming: f64) {
        lattice::laplacian_into(&self.shape(), u, out);
        for ((o, &v), &gi) in out.iter_mut().zip(u).zip(self.g.values()) {
            *o = -self.lambda * v - *o - self.f.value(v) / taming + gi;
        }
    }

    /// `‖f(u)‖` for the tamed scheme.
    pub(crate) fn nonlinearity_norm(&self, u: &[f64]) -> f64 {
        if self.f.is_zero() {
            return 0.0;
        }
        u.iter()
            .map(|&v| {
                let fv = self.f.value(v);
                fv * fv
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `out += c · σ(u) v` for the diagonal families.
    pub(crate) fn add_sigma_apply(&self, u_norm: f64, v: &[f64], c: f64, out: &mut [f64]) {
        let pre = c * self.sigma.prefactor(u_norm);
        for ((o, &vi), &ai) in out.iter_mut().zip(v).zip(self.sigma.a.values()) {
            *o += pre * ai * vi;
        }
    }
}

/// `−λu − Au − f(u) + g`.
pub fn drift_eval(p: &ModelParams, u: &StateVector) -> Result<StateVector> {
    p.check_shape(u)?;
    let mut out = vec![0.0; u.values().len()];
    p.drift_into(u.values(), &mut out, 1.0);
    Ok(StateVector::from_raw(u.shape(), out))
}

/// `σ(u) v`.
pub fn sigma_apply(p: &ModelParams, u: &StateVector, v: &StateVector) -> Result<StateVector> {
    p.check_shape(u)?;
    p.check_shape(v)?;
    let mut out = vec![0.0; v.values().len()];
    p.add_sigma_apply(u.norm(), v.values(), 1.0, &mut out);
    Ok(StateVector::from_raw(u.shape(), out))
}

/// Hilbert–Schmidt norm of `σ(u)` into `ℓ²` or, when `weighted`, into `ℓ²_κ`.
pub fn sigma_hs_norm(p: &ModelParams, u: &StateVector, weighted: bool) -> f64 {
    let weight = if weighted { Weight::Kappa } else { Weight::Standard };
    lattice::weighted_norm(&p.sigma.a, weight) * p.sigma.prefactor(u.norm())
}

/// Hilbert–Schmidt norm of `1_{|·|≥k} σ(u)`.
pub fn sigma_tail_norm(p: &ModelParams, u: &StateVector, k: usize) -> f64 {
    lattice::tail_mass(&p.sigma.a, k).sqrt() * p.sigma.prefactor(u.norm())
}

/// Grid on which the nonlinearity conditions are certified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    pub tol: f64,
}

impl Default for ValidationGrid {
    fn default() -> Self {
        Self {
            lo: -10.0,
            hi: 10.0,
            step: 1e-3,
            tol: 1e-8,
        }
    }
}

impl ValidationGrid {
    fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let n = ((self.hi - self.lo) / self.step).round() as usize;
        (0..=n).map(move |k| self.lo + k as f64 * self.step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// Grid point exhibiting the worst violation, when one exists.
    pub witness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub conditions: Vec<ConditionResult>,
    pub strong_dissipativity: bool,
    pub l_sigma: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<String> {
        self.conditions
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            Err(Error::InvalidConfig(self.failures()))
        }
    }
}

fn condition(name: &str, passed: bool, detail: String, witness: Option<f64>) -> ConditionResult {
    ConditionResult {
        name: name.into(),
        passed,
        detail,
        witness,
    }
}

pub fn validate_params(p: &ModelParams, grid: &ValidationGrid) -> ValidationReport {
    let mut conditions = Vec::new();

    let f0 = p.f.value(0.0);
    conditions.push(condition(
        "nonlinearity f(0) = 0",
        f0 == 0.0,
        format!("f(0) = {f0}"),
        None,
    ));

    // Worst violations of f(s)s ≥ 0 and f'(s) ≥ −γ over the grid.
    let mut sign_worst: Option<(f64, f64)> = None;
    let mut slope_worst: Option<(f64, f64)> = None;
    let h = grid.step;
    for s in grid.points() {
        let fs = p.f.value(s) * s;
        if fs < -grid.tol && sign_worst.is_none_or(|(_, w)| fs < w) {
            sign_worst = Some((s, fs));
        }
        let slope = (p.f.value(s + h) - p.f.value(s - h)) / (2.0 * h);
        if slope < -p.gamma - grid.tol && slope_worst.is_none_or(|(_, w)| slope < w) {
            slope_worst = Some((s, slope));
        }
    }
    conditions.push(match sign_worst {
        None => condition(
            "sign condition f(s)s >= 0",
            true,
            format!("holds on [{}, {}]", grid.lo, grid.hi),
            None,
        ),
        Some((s, v)) => condition(
            "sign condition f(s)s >= 0",
            false,
            format!("f(s)s = {v:.6} < 0 at witness s = {s:.6}"),
            Some(s),
        ),
    });
    conditions.push(match slope_worst {
        None => condition(
            "one-sided slope f'(s) >= -gamma",
            true,
            format!("holds on [{}, {}] with gamma = {}", grid.lo, grid.hi, p.gamma),
            None,
        ),
        Some((s, v)) => condition(
            "one-sided slope f'(s) >= -gamma",
            false,
            format!("f'(s) = {v:.6} < -gamma = {} at witness s = {s:.6}", -p.gamma),
            Some(s),
        ),
    });

    let l_sigma = p.l_sigma();
    conditions.push(condition(
        "noise constant L_sigma finite",
        l_sigma.is_finite(),
        format!("L_sigma = ||a||_kappa = {l_sigma}"),
        None,
    ));
    conditions.push(condition(
        "lambda > 0",
        p.lambda > 0.0,
        format!("lambda = {}", p.lambda),
        None,
    ));
    conditions.push(condition(
        "gamma >= 0",
        p.gamma >= 0.0,
        format!("gamma = {}", p.gamma),
        None,
    ));
    conditions.push(condition(
        "epsilon in [0, 1]",
        (0.0..=1.0).contains(&p.epsilon),
        format!("epsilon = {}", p.epsilon),
        None,
    ));
    let finite_g = p.g.is_finite() && lattice::weighted_norm(&p.g, Weight::Kappa).is_finite();
    conditions.push(condition(
        "g finite",
        finite_g,
        format!("||g|| = {}", p.g.norm()),
        None,
    ));

    ValidationReport {
        conditions,
        strong_dissipativity: p.strong_dissipativity(),
        l_sigma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(dim: usize, radius: usize, f: NonlinearitySpec, kind: DiffusionKind) -> ModelParams {
        let shape = LatticeShape::new(dim, radius).unwrap();
        ModelParams {
            lambda: 1.0,
            gamma: 0.0,
            g: StateVector::zeros(shape),
            f,
            sigma: DiffusionSpec {
                kind,
                a: StateVector::basis(shape, &vec![0; dim]).unwrap(),
            },
            epsilon: 0.5,
        }
    }

    #[test]
    fn drift_of_unit_vector() {
        let p = params(1, 3, NonlinearitySpec::Zero, DiffusionKind::ConstantDiagonal);
        let d = drift_eval(&p, &StateVector::basis(p.shape(), &[0]).unwrap()).unwrap();
        assert_eq!(d.get(&[0]), -3.0);
        assert_eq!(d.get(&[1]), 1.0);
        assert_eq!(d.get(&[-1]), 1.0);
        assert_eq!(d.get(&[2]), 0.0);
    }

    #[test]
    fn drift_at_zero_is_g() {
        let mut p = params(2, 2, NonlinearitySpec::Cubic, DiffusionKind::NormalizedDiagonal);
        p.g = StateVector::from_fn(p.shape(), |i| 1.0 / (1.0 + (i[0] * i[0] + i[1] * i[1]) as f64));
        let d = drift_eval(&p, &StateVector::zeros(p.shape())).unwrap();
        assert_eq!(d, p.g);
    }

    #[test]
    fn single_site_cubic_drift() {
        let p = params(1, 0, NonlinearitySpec::Cubic, DiffusionKind::ConstantDiagonal);
        let u = StateVector::from_values(p.shape(), vec![2.0]).unwrap();
        // λu = 2, Au = 2N·u = 4 on the lone site, u³ = 8.
        assert_eq!(drift_eval(&p, &u).unwrap().values(), &[-14.0]);
    }

    #[test]
    fn drift_rejects_shape_mismatch() {
        let p = params(1, 2, NonlinearitySpec::Zero, DiffusionKind::ConstantDiagonal);
        let u = StateVector::zeros(LatticeShape::new(1, 3).unwrap());
        assert!(matches!(drift_eval(&p, &u), Err(Error::ShapeMismatch { .. })));
        assert!(sigma_apply(&p, &u, &u).is_err());
    }

    #[test]
    fn normalized_sigma_halves_at_unit_norm() {
        let p = params(1, 2, NonlinearitySpec::Zero, DiffusionKind::NormalizedDiagonal);
        let u = StateVector::basis(p.shape(), &[1]).unwrap();
        let v = StateVector::from_fn(p.shape(), |i| 3.0 + i[0] as f64);
        let out = sigma_apply(&p, &u, &v).unwrap();
        assert_eq!(out.get(&[0]), 1.5);
        assert_eq!(out.norm(), 1.5);
        assert_eq!(sigma_apply(&p, &u, &StateVector::zeros(p.shape())).unwrap().norm(), 0.0);
    }

    #[test]
    fn constant_sigma_is_diagonal_multiplication() {
        let mut p = params(1, 4, NonlinearitySpec::Zero, DiffusionKind::ConstantDiagonal);
        p.sigma.a = StateVector::from_fn(p.shape(), |i| 1.0 / (1.0 + (i[0] * i[0]) as f64));
        let out = sigma_apply(&p, &StateVector::zeros(p.shape()), &StateVector::basis(p.shape(), &[3]).unwrap()).unwrap();
        assert_eq!(out.get(&[3]), 0.1);
        assert_eq!(out.norm(), 0.1);
    }

    #[test]
    fn hs_norms() {
        let mut p = params(1, 3, NonlinearitySpec::Zero, DiffusionKind::NormalizedDiagonal);
        p.sigma.a = StateVector::from_fn(p.shape(), |i| 0.5 + 0.1 * i[0] as f64);
        let a_norm = p.sigma.a.norm();
        assert!((sigma_hs_norm(&p, &StateVector::zeros(p.shape()), false) - a_norm).abs() < 1e-15);
        let u = StateVector::basis(p.shape(), &[2]).unwrap().scaled(3.0);
        assert!((sigma_hs_norm(&p, &u, false) - a_norm / 4.0).abs() < 1e-15);
        assert!(sigma_hs_norm(&p, &u, true) <= p.l_sigma());
    }

    #[test]
    fn validation_accepts_cubic() {
        let p = params(1, 1, NonlinearitySpec::Cubic, DiffusionKind::NormalizedDiagonal);
        let report = validate_params(&p, &ValidationGrid::default());
        assert!(report.passed(), "{:?}", report.failures());
    }

    #[test]
    fn validation_rejects_shifted_cubic_sign() {
        let p = params(1, 1, NonlinearitySpec::CubicShifted(1.0), DiffusionKind::ConstantDiagonal);
        assert!((p.f.value(0.5) * 0.5 + 0.1875).abs() < 1e-15);
        let report = validate_params(&p, &ValidationGrid::default());
        let sign = report.conditions.iter().find(|c| c.name == "sign condition f(s)s >= 0").unwrap();
        assert!(!sign.passed);
        let w = sign.witness.unwrap();
        assert!(p.f.value(w) * w < 0.0 && w.abs() < 1.0);
        // γ = 0 is also too small for f'(0) = −1.
        assert!(report.failures().iter().any(|f| f.contains("f'(s)")));
    }

    #[test]
    fn validation_rejects_epsilon_out_of_range() {
        let mut p = params(1, 0, NonlinearitySpec::Zero, DiffusionKind::ConstantDiagonal);
        p.epsilon = 1.5;
        let failures = validate_params(&p, &ValidationGrid::default()).failures();
        assert_eq!(failures.len(), 1);
        assert!(failures[0].contains("epsilon"));
    }

    #[test]
    fn odd_polynomial_matches_cubic() {
        let poly = NonlinearitySpec::OddPolynomial(vec![0.0, 1.0]);
        for s in [-2.0, -0.3, 0.0, 0.7, 5.0] {
            approx::assert_relative_eq!(poly.value(s), NonlinearitySpec::Cubic.value(s), max_relative = 1e-14);
            approx::assert_relative_eq!(poly.derivative(s), NonlinearitySpec::Cubic.derivative(s), max_relative = 1e-14);
        }
        let quintic = NonlinearitySpec::OddPolynomial(vec![2.0, 0.0, 1.0]);
        assert_eq!(quintic.value(2.0), 4.0 + 32.0);
        assert_eq!(quintic.derivative(2.0), 2.0 + 5.0 * 16.0);
    }

    proptest! {
        #[test]
        fn sigma_is_linear_in_v(
            a in prop::collection::vec(-1.0f64..1.0, 5),
            u in prop::collection::vec(-2.0f64..2.0, 5),
            v1 in prop::collection::vec(-2.0f64..2.0, 5),
            v2 in prop::collection::vec(-2.0f64..2.0, 5),
            alpha in -3.0f64..3.0, beta in -3.0f64..3.0,
        ) {
            let mut p = params(1, 2, NonlinearitySpec::Zero, DiffusionKind::NormalizedDiagonal);
            let shape = p.shape();
            p.sigma.a = StateVector::from_values(shape, a).unwrap();
            let u = StateVector::from_values(shape, u).unwrap();
            let v1 = StateVector::from_values(shape, v1).unwrap();
            let v2 = StateVector::from_values(shape, v2).unwrap();
            let combo = v1.scaled(alpha).add_scaled(beta, &v2);
            let lhs = sigma_apply(&p, &u, &combo).unwrap();
            let rhs = sigma_apply(&p, &u, &v1).unwrap().scaled(alpha)
                .add_scaled(beta, &sigma_apply(&p, &u, &v2).unwrap());
            prop_assert!(lhs.distance(&rhs) <= 1e-12 * (1.0 + combo.norm()));
        }

        #[test]
        fn normalized_sigma_is_lipschitz(
            u1 in prop::collection::vec(-3.0f64..3.0, 5),
            u2 in prop::collection::vec(-3.0f64..3.0, 5),
        ) {
            let mut p = params(1, 2, NonlinearitySpec::Zero, DiffusionKind::NormalizedDiagonal);
            let shape = p.shape();
            p.sigma.a = StateVector::from_fn(shape, |i| 1.0 / (1.0 + i[0].abs() as f64).powi(2));
            let u1 = StateVector::from_values(shape, u1).unwrap();
            let u2 = StateVector::from_values(shape, u2).unwrap();
            // For diagonal operators differing by a scalar factor the HS distance is
            // ‖a‖·|c(u₁) − c(u₂)|.
            let hs_dist = p.sigma.a.norm()
                * (p.sigma.prefactor(u1.norm()) - p.sigma.prefactor(u2.norm())).abs();
            prop_assert!(hs_dist <= p.sigma.a.norm() * u1.distance(&u2) + 1e-12);
        }

        #[test]
        fn sigma_tail_is_monotone(u in prop::collection::vec(-3.0f64..3.0, 9)) {
            let mut p = params(1, 4, NonlinearitySpec::Zero, DiffusionKind::NormalizedDiagonal);
            let shape = p.shape();
            p.sigma.a = StateVector::from_fn(shape, |i| 1.0 / (1.0 + i[0].abs() as f64));
            let u = StateVector::from_values(shape, u).unwrap();
            let tails: Vec<f64> = (0..6).map(|k| sigma_tail_norm(&p, &u, k)).collect();
            prop_assert!(tails.windows(2).all(|w| w[1] <= w[0]));
            prop_assert_eq!(tails[5], 0.0);
            prop_assert!(tails[0] <= sigma_hs_norm(&p, &u, false) + 1e-15);
        }
    }
}

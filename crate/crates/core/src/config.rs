//! Plain-text run configuration.
//!
//! One `key = value` pair per line; `#` starts a comment. Recognized keys:
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `dim`, `radius` | lattice `N` and box radius `M` | required |
//! | `lambda`, `gamma`, `epsilon` | model constants | `lambda` required, `gamma = 0`, `epsilon = 0.1` |
//! | `f.kind` | `zero`, `cubic`, `cubic_shifted`, `odd_polynomial` | `zero` |
//! | `f.coeffs` | comma list: the shift, or `c_k` multiplying `s^{2k+1}` | empty |
//! | `sigma.kind` | `normalized_diagonal` or `constant_diagonal` | `normalized_diagonal` |
//! | `sigma.a_profile`, `g_profile`, `u0_profile` | profiles, see below | `a` required, others `zero` |
//! | `dt`, `t_end`, `paths`, `seed`, `save_stride` | simulation | `dt_max/5`, `10`, `1000`, `0`, `1` |
//! | `scheme` | `euler_maruyama`, `tamed_euler`, `auto` | `auto` |
//! | `rate.horizon`, `rate.delta`, `rate.control_dt` | action minimization | `1`, `0`, `0.01` |
//! | `rate.horizons`, `rate.target_profile` | quasipotential horizons and target | default set, none |
//! | `invariant.burn_in`, `invariant.thin`, `invariant.radii` | invariant sampling | `10/(λ−γ)`, `1/(λ−γ)`, none |
//! | `check.*` | fields of [`CheckOptions`] | see there |
//!
//! Profiles: `zero`, `constant(c)`, `single_site(i1, …, iN, value)` and
//! `power_decay(c, p)` meaning `c (1 + |i|)^{−p}`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeShape, StateVector};
use crate::mcstats::InvariantOptions;
use crate::model::{validate_params, DiffusionKind, DiffusionSpec, ModelParams, NonlinearitySpec, ValidationGrid, ValidationReport};
use crate::rate::ActionOptions;
use crate::simulate::{Scheme, SimConfig};
use crate::verify::CheckOptions;

/// Named generator of a lattice field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    Zero,
    Constant(f64),
    SingleSite(Vec<i64>, f64),
    PowerDecay { c: f64, p: f64 },
}

impl Profile {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let text = text.trim();
        if let Ok(c) = text.parse::<f64>() {
            return Ok(Profile::Constant(c));
        }
        let (name, args) = match text.find('(') {
            Some(open) if text.ends_with(')') => (&text[..open], &text[open + 1..text.len() - 1]),
            _ if text == "zero" => return Ok(Profile::Zero),
            _ => return Err(format!("unrecognized profile `{text}`")),
        };
        let nums: Vec<f64> = if args.trim().is_empty() {
            Vec::new()
        } else {
            args.split(',')
                .map(|a| a.trim().parse::<f64>().map_err(|_| format!("bad number `{}` in `{text}`", a.trim())))
                .collect::<std::result::Result<_, _>>()?
        };
        match (name.trim(), nums.as_slice()) {
            ("zero", []) => Ok(Profile::Zero),
            ("constant", [c]) => Ok(Profile::Constant(*c)),
            ("power_decay", [c, p]) => Ok(Profile::PowerDecay { c: *c, p: *p }),
            ("single_site", [site @ .., value]) if !site.is_empty() => {
                if site.iter().any(|x| x.fract() != 0.0) {
                    return Err(format!("site indices must be integers in `{text}`"));
                }
                Ok(Profile::SingleSite(site.iter().map(|&x| x as i64).collect(), *value))
            }
            _ => Err(format!("unrecognized profile `{text}`")),
        }
    }

    pub fn build(&self, shape: LatticeShape) -> std::result::Result<StateVector, String> {
        match self {
            Profile::Zero => Ok(StateVector::zeros(shape)),
            Profile::Constant(c) => Ok(StateVector::from_fn(shape, |_| *c)),
            Profile::PowerDecay { c, p } => Ok(StateVector::from_fn(shape, |i| {
                let r = i.iter().map(|x| (x * x) as f64).sum::<f64>().sqrt();
                c * (1.0 + r).powf(-p)
            })),
            Profile::SingleSite(site, value) => {
                if site.len() != shape.dim() {
                    return Err(format!("single_site needs {} indices, got {}", shape.dim(), site.len()));
                }
                let mut v = StateVector::basis(shape, site).ok_or_else(|| format!("site {site:?} is outside the box"))?;
                v.values_mut().iter_mut().for_each(|x| *x *= value);
                Ok(v)
            }
        }
    }
}

/// Everything a run needs, parsed and validated.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    pub u0: StateVector,
    pub sim: SimConfig,
    pub action: ActionOptions,
    pub rate_horizon: f64,
    pub rate_delta: f64,
    pub horizons: Vec<f64>,
    pub target: Option<StateVector>,
    pub invariant: InvariantOptions,
    pub check: CheckOptions,
    /// Key-value pairs as read, for the manifest.
    pub entries: BTreeMap<String, String>,
    pub validation: ValidationReport,
}

const KEYS: &[&str] = &[
    "dim",
    "radius",
    "lambda",
    "gamma",
    "epsilon",
    "f.kind",
    "f.coeffs",
    "sigma.kind",
    "sigma.a_profile",
    "g_profile",
    "u0_profile",
    "dt",
    "t_end",
    "paths",
    "seed",
    "scheme",
    "save_stride",
    "rate.horizon",
    "rate.delta",
    "rate.control_dt",
    "rate.horizons",
    "rate.target_profile",
    "invariant.burn_in",
    "invariant.thin",
    "invariant.radii",
    "check.epsilons",
    "check.u0_b_profile",
    "check.tail_k",
    "check.tail_ratio",
    "check.radii",
    "check.z",
    "check.s1",
    "check.s2",
    "check.level",
    "check.trend_tol",
    "check.control_budget",
    "check.invariant_replicas",
    "check.invariant_time",
    "check.invariant_thin",
];

/// Splits the text into pairs. Syntax errors carry their line number.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: n + 1,
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Parse {
                line: n + 1,
                message: format!("unknown key `{key}`"),
            });
        }
        if out.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(Error::Parse {
                line: n + 1,
                message: format!("duplicate key `{key}`"),
            });
        }
    }
    Ok(out)
}

/// Typed access to the pairs, collecting every semantic error.
struct Reader<'a> {
    entries: &'a BTreeMap<String, String>,
    errors: Vec<String>,
}

impl Reader<'_> {
    fn get<T: std::str::FromStr>(&mut self, key: &str) -> Option<T> {
        let raw = self.entries.get(key)?;
        match raw.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                self.errors.push(format!("{key}: cannot parse `{raw}`"));
                None
            }
        }
    }

    fn required<T: std::str::FromStr>(&mut self, key: &str) -> Option<T> {
        if !self.entries.contains_key(key) {
            self.errors.push(format!("{key}: missing required key"));
            return None;
        }
        self.get(key)
    }

    fn list(&mut self, key: &str) -> Option<Vec<f64>> {
        let raw = self.entries.get(key)?;
        let parsed: std::result::Result<Vec<f64>, _> = raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect();
        match parsed {
            Ok(v) => Some(v),
            Err(_) => {
                self.errors.push(format!("{key}: expected a comma-separated list of numbers, got `{raw}`"));
                None
            }
        }
    }

    fn profile(&mut self, key: &str, shape: Option<LatticeShape>) -> Option<StateVector> {
        let raw = self.entries.get(key)?;
        let built = Profile::parse(raw).and_then(|p| match shape {
            Some(s) => p.build(s),
            None => Err("lattice shape unknown".into()),
        });
        match built {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors.push(format!("{key}: {e}"));
                None
            }
        }
    }
}

/// Parses `text` into a run configuration and validates the model.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let entries = parse_entries(text)?;
    let mut r = Reader {
        entries: &entries,
        errors: Vec::new(),
    };

    let dim: Option<usize> = r.required("dim");
    let radius: Option<usize> = r.required("radius");
    let shape = match (dim, radius) {
        (Some(d), Some(m)) => match LatticeShape::new(d, m) {
            Ok(s) => Some(s),
            Err(e) => {
                r.errors.push(format!("dim/radius: {e}"));
                None
            }
        },
        _ => None,
    };
    let lambda: Option<f64> = r.required("lambda");
    let gamma: f64 = r.get("gamma").unwrap_or(0.0);
    let epsilon: f64 = r.get("epsilon").unwrap_or(0.1);
    let coeffs = r.list("f.coeffs").unwrap_or_default();
    let f = match r.entries.get("f.kind").map(String::as_str).unwrap_or("zero") {
        "zero" => Some(NonlinearitySpec::Zero),
        "cubic" => Some(NonlinearitySpec::Cubic),
        "cubic_shifted" => match coeffs.as_slice() {
            [c] => Some(NonlinearitySpec::CubicShifted(*c)),
            _ => {
                r.errors.push("f.coeffs: cubic_shifted takes exactly one coefficient".into());
                None
            }
        },
        "odd_polynomial" => Some(NonlinearitySpec::OddPolynomial(coeffs.clone())),
        other => {
            r.errors.push(format!("f.kind: unknown nonlinearity `{other}`"));
            None
        }
    };
    let kind = match r.entries.get("sigma.kind").map(String::as_str).unwrap_or("normalized_diagonal") {
        "normalized_diagonal" => Some(DiffusionKind::NormalizedDiagonal),
        "constant_diagonal" => Some(DiffusionKind::ConstantDiagonal),
        other => {
            r.errors.push(format!("sigma.kind: unknown diffusion `{other}`"));
            None
        }
    };
    if !r.entries.contains_key("sigma.a_profile") {
        r.errors.push("sigma.a_profile: missing required key".into());
    }
    let a = r.profile("sigma.a_profile", shape);
    let g = if r.entries.contains_key("g_profile") {
        r.profile("g_profile", shape)
    } else {
        shape.map(StateVector::zeros)
    };
    let u0 = if r.entries.contains_key("u0_profile") {
        r.profile("u0_profile", shape)
    } else {
        shape.map(StateVector::zeros)
    };
    let target = r.profile("rate.target_profile", shape);
    let u0_b = r.profile("check.u0_b_profile", shape);

    let t_end: f64 = r.get("t_end").unwrap_or(10.0);
    let n_paths: usize = r.get("paths").unwrap_or(1000);
    let seed: u64 = r.get("seed").unwrap_or(0);
    let save_stride: usize = r.get("save_stride").unwrap_or(1);
    let scheme_name = r.entries.get("scheme").cloned().unwrap_or_else(|| "auto".into());
    let dt: Option<f64> = r.get("dt");

    let mut action = ActionOptions::default();
    if let Some(v) = r.get("rate.control_dt") {
        action.control_dt = v;
    }
    action.seed = seed;
    let rate_horizon: f64 = r.get("rate.horizon").unwrap_or(1.0);
    let rate_delta: f64 = r.get("rate.delta").unwrap_or(0.0);
    let horizons = r.list("rate.horizons").unwrap_or_default();

    let invariant = InvariantOptions {
        burn_in: r.get("invariant.burn_in"),
        thin: r.get("invariant.thin"),
        radii: r.list("invariant.radii").unwrap_or_default(),
        ..InvariantOptions::default()
    };

    let defaults = CheckOptions::default();
    let check = CheckOptions {
        epsilons: r.list("check.epsilons"),
        u0_b,
        tail_k: r.get("check.tail_k"),
        tail_ratio: r.get("check.tail_ratio").unwrap_or(defaults.tail_ratio),
        radii: r.list("check.radii"),
        z: r.get("check.z").unwrap_or(defaults.z),
        s1: r.get("check.s1").unwrap_or(defaults.s1),
        s2: r.get("check.s2").unwrap_or(defaults.s2),
        level: r.get("check.level").unwrap_or(defaults.level),
        trend_tol: r.get("check.trend_tol").unwrap_or(defaults.trend_tol),
        control_budget: r.get("check.control_budget").unwrap_or(defaults.control_budget),
        invariant_replicas: r.get("check.invariant_replicas").unwrap_or(defaults.invariant_replicas),
        invariant_time: r.get("check.invariant_time"),
        invariant_thin: r.get("check.invariant_thin"),
    };

    let mut errors = r.errors;
    let (Some(lambda), Some(f), Some(kind), Some(a), Some(g), Some(u0)) = (lambda, f, kind, a, g, u0) else {
        return Err(Error::InvalidConfig(errors));
    };
    let params = ModelParams {
        lambda,
        gamma,
        g,
        f,
        sigma: DiffusionSpec { kind, a },
        epsilon,
    };
    let validation = validate_params(&params, &ValidationGrid::default());
    errors.extend(validation.failures());

    let scheme = match scheme_name.as_str() {
        "auto" => Scheme::default_for(&params),
        "euler_maruyama" => Scheme::EulerMaruyama,
        "tamed_euler" => Scheme::TamedEuler,
        other => {
            errors.push(format!("scheme: unknown scheme `{other}`"));
            Scheme::EulerMaruyama
        }
    };
    let dt = dt.unwrap_or_else(|| {
        // Largest divisor of t_end not above dt_max/5.
        let target = params.dt_max() / 5.0;
        t_end / (t_end / target).ceil()
    });
    let sim = SimConfig {
        dt,
        t_end,
        n_paths,
        base_seed: seed,
        scheme,
        save_stride,
    };
    if errors.is_empty() {
        if let Err(e) = sim.validate(&params) {
            errors.push(e.to_string());
        }
    }
    if !errors.is_empty() {
        return Err(Error::InvalidConfig(errors));
    }
    Ok(RunConfig {
        params,
        u0,
        sim,
        action,
        rate_horizon,
        rate_delta,
        horizons,
        target,
        invariant,
        check,
        entries,
        validation,
    })
}

/// Reads and validates a configuration file.
pub fn validate_config(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "dim = 1\nradius = 8\nlambda = 1\nf.kind = zero\nsigma.kind = constant_diagonal\nsigma.a_profile = power_decay(1, 2)\n";

    #[test]
    fn minimal_config_passes() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.params.shape().site_count(), 17);
        assert!(cfg.validation.passed());
        assert!(cfg.params.l_sigma() > 1.0);
        assert!(cfg.sim.dt <= cfg.params.dt_max());
    }

    #[test]
    fn missing_lambda_names_the_key() {
        let text = MINIMAL.replace("lambda = 1\n", "");
        match parse_config(&text) {
            Err(Error::InvalidConfig(errs)) => {
                assert_eq!(errs.len(), 1);
                assert!(errs[0].starts_with("lambda"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_line() {
        let text = format!("{MINIMAL}# fine\nthis is not a pair\n");
        match parse_config(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 8),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shifted_cubic_is_rejected_with_witness() {
        let text = MINIMAL.replace("f.kind = zero", "f.kind = cubic_shifted\nf.coeffs = 1");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("sign condition f(s)s >= 0"), "{err}");
        assert!(err.contains("witness"), "{err}");
    }

    #[test]
    fn epsilon_out_of_range() {
        let text = format!("{MINIMAL}epsilon = 2\n");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("epsilon"), "{err}");
    }

    #[test]
    fn profiles() {
        let shape = LatticeShape::new(2, 1).unwrap();
        let v = Profile::parse("single_site(0, -1, 2.5)").unwrap().build(shape).unwrap();
        assert_eq!(v.get(&[0, -1]), 2.5);
        assert_eq!(v.norm_sq(), 6.25);
        assert!(Profile::parse("single_site(3, 0, 1)").unwrap().build(shape).is_err());
        assert!(Profile::parse("wobble(1)").is_err());
        let pd = Profile::parse("power_decay(2, 1)").unwrap().build(shape).unwrap();
        assert!((pd.get(&[1, 1]) - 2.0 / (1.0 + 2f64.sqrt())).abs() < 1e-15);
    }
}

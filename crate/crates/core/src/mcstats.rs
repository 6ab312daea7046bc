//! Monte Carlo estimators over ensembles of simulated paths.
//!
//! Paths are processed in fixed chunks of [`CHUNK`] consecutive indices.
//! Each chunk folds its paths sequentially and the chunk results are merged
//! in index order, so every estimate is bit-identical for any worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds;
use crate::error::{Error, Result};
use crate::lattice::{self, StateVector, Weight};
use crate::model::ModelParams;
use crate::simulate::{run_path, SimConfig, Trajectory};

pub(crate) const CHUNK: u64 = 64;

/// Mean and sum of squared deviations, mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64 / n as f64);
        self.n = n;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Runs `per_path` over `0..n_paths` in parallel and merges chunk results in order.
pub(crate) fn fold_paths<A, I, F, M>(n_paths: usize, init: I, per_path: F, merge: M) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, u64) -> Result<()> + Sync,
    M: Fn(&mut A, A),
{
    let n = n_paths as u64;
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            for k in c * CHUNK..((c + 1) * CHUNK).min(n) {
                per_path(&mut acc, k)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut iter = parts.into_iter();
    let mut total = iter.next().unwrap_or_else(&init);
    for part in iter {
        merge(&mut total, part);
    }
    Ok(total)
}

fn path_error(cfg: &SimConfig, path_index: u64, e: Error) -> Error {
    Error::Path {
        base_seed: cfg.base_seed,
        path_index,
        source: Box::new(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    pub n_paths: usize,
    pub mean_norm_sq: Vec<f64>,
    pub se_norm_sq: Vec<f64>,
    pub tail_ks: Vec<usize>,
    /// `E Σ_{|i|≥k} |u_i|²`, indexed `[time][k]`.
    pub tail_mean: Vec<Vec<f64>>,
    pub tail_se: Vec<Vec<f64>>,
    /// Per-site ensemble mean, indexed by time.
    pub site_mean: Vec<StateVector>,
    /// Per-site ensemble variance, indexed by time.
    pub site_var: Vec<StateVector>,
}

struct MomentAcc {
    norm: Vec<RunningStats>,
    tails: Vec<Vec<RunningStats>>,
    sites: Vec<Vec<RunningStats>>,
}

/// Ensemble means of `‖u(t)‖²`, tail masses and site values at every saved time.
pub fn estimate_moments(p: &ModelParams, u0: &StateVector, cfg: &SimConfig, k_list: &[usize]) -> Result<EnsembleSummary> {
    cfg.validate(p)?;
    p.check_shape(u0)?;
    let times = cfg.save_times()?;
    let n_times = times.len();
    let n_sites = u0.values().len();
    let shape = u0.shape();
    let init = || MomentAcc {
        norm: vec![RunningStats::default(); n_times],
        tails: vec![vec![RunningStats::default(); k_list.len()]; n_times],
        sites: vec![vec![RunningStats::default(); n_sites]; n_times],
    };
    let acc = fold_paths(
        cfg.n_paths,
        init,
        |acc, path| {
            run_path(p, u0, cfg, None, path, true, |idx, _, u| {
                acc.norm[idx].push(lattice::dot(u, u));
                let state = StateVector::from_raw(shape, u.to_vec());
                for (slot, &k) in acc.tails[idx].iter_mut().zip(k_list) {
                    slot.push(lattice::tail_mass(&state, k));
                }
                for (slot, &x) in acc.sites[idx].iter_mut().zip(u) {
                    slot.push(x);
                }
            })
            .map_err(|e| path_error(cfg, path, e))
        },
        |a, b| {
            for (x, y) in a.norm.iter_mut().zip(&b.norm) {
                x.merge(y);
            }
            for (xs, ys) in a.tails.iter_mut().zip(&b.tails) {
                for (x, y) in xs.iter_mut().zip(ys) {
                    x.merge(y);
                }
            }
            for (xs, ys) in a.sites.iter_mut().zip(&b.sites) {
                for (x, y) in xs.iter_mut().zip(ys) {
                    x.merge(y);
                }
            }
        },
    )?;
    Ok(EnsembleSummary {
        times,
        n_paths: cfg.n_paths,
        mean_norm_sq: acc.norm.iter().map(|s| s.mean).collect(),
        se_norm_sq: acc.norm.iter().map(RunningStats::std_error).collect(),
        tail_ks: k_list.to_vec(),
        tail_mean: acc.tails.iter().map(|r| r.iter().map(|s| s.mean).collect()).collect(),
        tail_se: acc.tails.iter().map(|r| r.iter().map(RunningStats::std_error).collect()).collect(),
        site_mean: acc
            .sites
            .iter()
            .map(|r| StateVector::from_raw(shape, r.iter().map(|s| s.mean).collect()))
            .collect(),
        site_var: acc
            .sites
            .iter()
            .map(|r| StateVector::from_raw(shape, r.iter().map(RunningStats::variance).collect()))
            .collect(),
    })
}

/// Streaming `log Σ e^{x}` and `log Σ e^{2x}` with a shared shift.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LogSumExp {
    n: u64,
    shift: f64,
    s1: f64,
    s2: f64,
    overflow: bool,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            n: 0,
            shift: f64::NEG_INFINITY,
            s1: 0.0,
            s2: 0.0,
            overflow: false,
        }
    }
}

impl LogSumExp {
    fn push(&mut self, x: f64) {
        self.n += 1;
        if !x.is_finite() {
            self.overflow = true;
            return;
        }
        if x > self.shift {
            let r = (self.shift - x).exp();
            self.s1 *= r;
            self.s2 *= r * r;
            self.shift = x;
        }
        let e = (x - self.shift).exp();
        self.s1 += e;
        self.s2 += e * e;
    }

    fn merge(&mut self, other: &LogSumExp) {
        self.overflow |= other.overflow;
        if other.n == 0 {
            return;
        }
        let shift = self.shift.max(other.shift);
        let ra = (self.shift - shift).exp();
        let rb = (other.shift - shift).exp();
        self.s1 = self.s1 * ra + other.s1 * rb;
        self.s2 = self.s2 * ra * ra + other.s2 * rb * rb;
        self.shift = shift;
        self.n += other.n;
    }

    fn log_mean(&self) -> f64 {
        self.shift + (self.s1 / self.n as f64).ln()
    }

    /// Standard error of the mean divided by the mean (delta method).
    fn log_std_error(&self) -> f64 {
        let n = self.n as f64;
        if self.n < 2 {
            return 0.0;
        }
        let m1 = self.s1 / n;
        let m2 = self.s2 / n;
        let var = (m2 - m1 * m1).max(0.0) * n / (n - 1.0);
        (var / n).sqrt() / m1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentEstimate {
    pub time: f64,
    /// `ln` of the empirical mean of `exp((δ/ε)‖κ_δ u(t)‖²)`.
    pub log_mean: f64,
    pub log_std_error: f64,
    pub log_bound: f64,
    pub exceeds_bound: bool,
    pub overflow: bool,
}

fn save_indices(cfg: &SimConfig, t_list: &[f64]) -> Result<Vec<usize>> {
    let times = cfg.save_times()?;
    t_list
        .iter()
        .map(|&t| {
            let (idx, dist) = times
                .iter()
                .enumerate()
                .map(|(i, s)| (i, (s - t).abs()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty save grid");
            if dist > 0.5 * cfg.dt * cfg.save_stride as f64 {
                Err(Error::GridMismatch(format!("time {t} is not on the saved grid")))
            } else {
                Ok(idx)
            }
        })
        .collect()
}

/// `E exp((δ/ε)‖κ_δ u(t)‖²)` at each time in `t_list`, in log space.
pub fn estimate_exp_weighted_moment(
    p: &ModelParams,
    u0: &StateVector,
    cfg: &SimConfig,
    delta: f64,
    t_list: &[f64],
) -> Result<Vec<ExpMomentEstimate>> {
    cfg.validate(p)?;
    p.check_shape(u0)?;
    if !(p.epsilon > 0.0) {
        return Err(Error::Hypothesis("epsilon > 0 (the exponent divides by epsilon)".into()));
    }
    let indices = save_indices(cfg, t_list)?;
    let weights = lattice::weight_profile(&u0.shape(), Weight::KappaDelta(delta));
    let scale = delta / p.epsilon;
    let n_times = cfg.save_times()?.len();
    let acc = fold_paths(
        cfg.n_paths,
        || vec![LogSumExp::default(); n_times],
        |acc, path| {
            run_path(p, u0, cfg, None, path, true, |idx, _, u| {
                let w: f64 = u.iter().zip(&weights).map(|(x, w)| w * x * x).sum();
                acc[idx].push(scale * w);
            })
            .map_err(|e| path_error(cfg, path, e))
        },
        |a, b| {
            for (x, y) in a.iter_mut().zip(&b) {
                x.merge(y);
            }
        },
    )?;
    Ok(t_list
        .iter()
        .zip(indices)
        .map(|(&t, idx)| {
            let a = &acc[idx];
            let log_mean = if a.overflow { f64::INFINITY } else { a.log_mean() };
            let log_bound = bounds::log_exp_moment_bound(p, delta, u0, t);
            ExpMomentEstimate {
                time: t,
                log_mean,
                log_std_error: if a.overflow { f64::NAN } else { a.log_std_error() },
                log_bound,
                exceeds_bound: log_mean > log_bound,
                overflow: a.overflow,
            }
        })
        .collect())
}

/// Largest `δ = 2^{−m}`, `m ≥ 1`, with
/// `δ < min{1, λ/(1 + 2‖g‖²_κ), L_σ^{−2}}` and `(L_σ² + 3Nδ)δ < λ/4`.
pub fn choose_delta(p: &ModelParams) -> f64 {
    let l2 = p.l_sigma().powi(2);
    let g_k = lattice::weighted_norm_sq(&p.g, Weight::Kappa);
    let dim = p.shape().dim() as f64;
    let cap = 1f64
        .min(p.lambda / (1.0 + 2.0 * g_k))
        .min(if l2 > 0.0 { 1.0 / l2 } else { f64::INFINITY });
    let mut delta = 0.5;
    while !(delta < cap && (l2 + 3.0 * dim * delta) * delta < 0.25 * p.lambda) {
        delta *= 0.5;
    }
    delta
}

#[derive(Debug, Clone, PartialEq)]
pub enum BallEvent {
    /// `‖u(T) − center‖ ≤ radius`.
    Terminal { center: StateVector, radius: f64 },
    /// `max_t ‖u(t) − reference(t)‖ ≤ radius` over saved times.
    Tube { reference: Trajectory, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionEstimate {
    pub hits: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Wilson score interval at `z` standard deviations.
pub fn wilson_interval(hits: u64, trials: u64, z: f64) -> ProportionEstimate {
    let n = trials as f64;
    let phat = if trials == 0 { 0.0 } else { hits as f64 / n };
    let (lower, upper) = if trials == 0 {
        (0.0, 1.0)
    } else {
        let z2 = z * z;
        let denom = 1.0 + z2 / n;
        let centre = (phat + z2 / (2.0 * n)) / denom;
        let half = z / denom * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt();
        ((centre - half).max(0.0), (centre + half).min(1.0))
    };
    ProportionEstimate {
        hits,
        trials,
        estimate: phat,
        lower,
        upper,
    }
}

/// Fraction of paths realizing `event`, with a 95% Wilson interval.
///
/// Tube events are only checked at saved times.
pub fn estimate_ball_probability(p: &ModelParams, u0: &StateVector, cfg: &SimConfig, event: &BallEvent) -> Result<ProportionEstimate> {
    cfg.validate(p)?;
    p.check_shape(u0)?;
    let n_times = cfg.save_times()?.len();
    let radius = match event {
        BallEvent::Terminal { center, radius } => {
            p.check_shape(center)?;
            *radius
        }
        BallEvent::Tube { reference, radius } => {
            if reference.states.len() != n_times {
                return Err(Error::GridMismatch(format!(
                    "reference has {} states, the run saves {n_times}",
                    reference.states.len()
                )));
            }
            *radius
        }
    };
    if !(radius > 0.0) {
        return Err(Error::InvalidConfig(vec![format!("ball radius must be positive, got {radius}")]));
    }
    let r2 = radius * radius;
    let hits = fold_paths(
        cfg.n_paths,
        || 0u64,
        |acc, path| {
            let mut inside = true;
            run_path(p, u0, cfg, None, path, true, |idx, _, u| {
                let center = match event {
                    BallEvent::Terminal { center, .. } if idx + 1 == n_times => center.values(),
                    BallEvent::Terminal { .. } => return,
                    BallEvent::Tube { reference, .. } => reference.states[idx].values(),
                };
                let d2: f64 = u.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                inside &= d2 <= r2;
            })
            .map_err(|e| path_error(cfg, path, e))?;
            *acc += inside as u64;
            Ok(())
        },
        |a, b| *a += b,
    )?;
    Ok(wilson_interval(hits, cfg.n_paths as u64, 1.96))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantOptions {
    /// Time discarded at the start of each replica; default `10/(λ − γ)`.
    pub burn_in: Option<f64>,
    /// Time between kept samples; default `1/(λ − γ)`.
    pub thin: Option<f64>,
    pub start: Option<StateVector>,
    /// Radii `R` for the fractions outside `B_{ℓ²_κ}(0, R)`.
    pub radii: Vec<f64>,
    pub histogram_bins: usize,
    pub keep_samples: bool,
    /// Batches per replica for the standard error of the mean.
    pub batches: usize,
}

impl Default for InvariantOptions {
    fn default() -> Self {
        Self {
            burn_in: None,
            thin: None,
            start: None,
            radii: Vec::new(),
            histogram_bins: 50,
            keep_samples: false,
            batches: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantSample {
    pub n_samples: usize,
    pub burn_in: f64,
    pub thin: f64,
    pub mean: StateVector,
    /// Batch-means standard error of each site mean.
    pub mean_std_error: StateVector,
    pub variance: StateVector,
    pub radii: Vec<f64>,
    pub outside: Vec<ProportionEstimate>,
    /// Equal-width bins of `‖u‖_{ℓ²_κ}` on `[0, histogram_max]`.
    pub histogram: Vec<u64>,
    pub histogram_max: f64,
    pub samples: Option<Vec<StateVector>>,
}

struct Replica {
    samples: Vec<Vec<f64>>,
    weighted: Vec<f64>,
}

pub(crate) struct InvariantPlan {
    u0: StateVector,
    run_cfg: SimConfig,
    burn_steps: usize,
    thin_steps: usize,
    pub(crate) burn_in: f64,
    pub(crate) thin: f64,
}

pub(crate) fn invariant_plan(p: &ModelParams, cfg: &SimConfig, opts: &InvariantOptions) -> Result<InvariantPlan> {
    if !p.strong_dissipativity() {
        return Err(Error::Hypothesis(format!(
            "lambda > gamma (lambda = {}, gamma = {})",
            p.lambda, p.gamma
        )));
    }
    if p.epsilon > 0.0 && !(p.epsilon < bounds::uniqueness_epsilon(p)) {
        return Err(Error::Hypothesis(format!(
            "epsilon < (lambda - gamma) / L_sigma^2 = {}",
            bounds::uniqueness_epsilon(p)
        )));
    }
    cfg.validate(p)?;
    let u0 = opts.start.clone().unwrap_or_else(|| StateVector::zeros(p.shape()));
    p.check_shape(&u0)?;
    let rate = p.lambda - p.gamma;
    let burn_in = opts.burn_in.unwrap_or(10.0 / rate);
    let thin = opts.thin.unwrap_or(1.0 / rate);
    let n_steps = cfg.n_steps()?;
    if n_steps as u64 >= 1 << 32 {
        return Err(Error::InvalidConfig(vec!["replica longer than 2^32 steps".into()]));
    }
    let burn_steps = (burn_in / cfg.dt).round() as usize;
    let thin_steps = ((thin / cfg.dt).round() as usize).max(1);
    if burn_steps >= n_steps {
        return Err(Error::InvalidConfig(vec![format!(
            "t_end = {} leaves no samples after a burn-in of {burn_in}",
            cfg.t_end
        )]));
    }
    Ok(InvariantPlan {
        u0,
        run_cfg: SimConfig {
            save_stride: 1,
            ..cfg.clone()
        },
        burn_steps,
        thin_steps,
        burn_in,
        thin,
    })
}

/// Runs the replicas of `plan` concurrently, folding every kept sample
/// into a per-replica accumulator. Accumulators come back in replica order.
pub(crate) fn fold_invariant<A, I, F>(p: &ModelParams, plan: &InvariantPlan, init: I, observe: F) -> Result<Vec<A>>
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, &[f64]) + Sync,
{
    let cfg = &plan.run_cfg;
    (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|r| {
            let mut acc = init();
            run_path(p, &plan.u0, cfg, None, r, true, |idx, _, u| {
                if idx > plan.burn_steps && (idx - plan.burn_steps).is_multiple_of(plan.thin_steps) {
                    observe(&mut acc, u);
                }
            })
            .map_err(|e| path_error(cfg, r, e))?;
            Ok(acc)
        })
        .collect()
}

/// Long-run samples of the stationary law.
///
/// `cfg.n_paths` independent replicas of length `cfg.t_end` run concurrently
/// with path indices `0..n_paths`; each discards `burn_in` and keeps a state
/// every `thin` time units.
pub fn sample_invariant(p: &ModelParams, cfg: &SimConfig, opts: &InvariantOptions) -> Result<InvariantSample> {
    let plan = invariant_plan(p, cfg, opts)?;
    let shape = p.shape();
    let weights = lattice::weight_profile(&shape, Weight::Kappa);
    let replicas = fold_invariant(
        p,
        &plan,
        || Replica {
            samples: Vec::new(),
            weighted: Vec::new(),
        },
        |rep, u| {
            rep.samples.push(u.to_vec());
            rep.weighted
                .push(u.iter().zip(&weights).map(|(x, w)| w * x * x).sum::<f64>().sqrt());
        },
    )?;
    let (burn_in, thin) = (plan.burn_in, plan.thin);

    let n_sites = shape.site_count();
    let mut site = vec![RunningStats::default(); n_sites];
    let mut batch_means = vec![RunningStats::default(); n_sites];
    let batches = opts.batches.max(1);
    for rep in &replicas {
        let per_batch = rep.samples.len() / batches;
        for (b, chunk) in rep.samples.chunks(per_batch.max(1)).enumerate() {
            let full = per_batch > 0 && b < batches;
            let mut local = vec![RunningStats::default(); n_sites];
            for s in chunk {
                for (acc, &x) in local.iter_mut().zip(s) {
                    acc.push(x);
                }
            }
            for i in 0..n_sites {
                site[i].merge(&local[i]);
                if full {
                    batch_means[i].push(local[i].mean);
                }
            }
        }
    }
    let weighted: Vec<f64> = replicas.iter().flat_map(|r| r.weighted.iter().copied()).collect();
    let n_samples = weighted.len();
    let outside = opts
        .radii
        .iter()
        .map(|&r| wilson_interval(weighted.iter().filter(|&&w| w > r).count() as u64, n_samples as u64, 1.96))
        .collect();
    let histogram_max = weighted.iter().copied().fold(0.0, f64::max);
    let bins = opts.histogram_bins.max(1);
    let mut histogram = vec![0u64; bins];
    for &w in &weighted {
        let b = if histogram_max > 0.0 {
            ((w / histogram_max * bins as f64) as usize).min(bins - 1)
        } else {
            0
        };
        histogram[b] += 1;
    }
    Ok(InvariantSample {
        n_samples,
        burn_in,
        thin,
        mean: StateVector::from_raw(shape, site.iter().map(|s| s.mean).collect()),
        mean_std_error: StateVector::from_raw(shape, batch_means.iter().map(RunningStats::std_error).collect()),
        variance: StateVector::from_raw(shape, site.iter().map(RunningStats::variance).collect()),
        radii: opts.radii.clone(),
        outside,
        histogram,
        histogram_max,
        samples: opts.keep_samples.then(|| {
            replicas
                .into_iter()
                .flat_map(|r| r.samples)
                .map(|v| StateVector::from_raw(shape, v))
                .collect()
        }),
    })
}

/// Mean of a correlated series with a batch-means standard error.
pub fn batch_means(values: &[f64], batches: usize) -> RunningStats {
    let per = values.len() / batches.max(1);
    let mut out = RunningStats::default();
    if per == 0 {
        values.iter().for_each(|&v| out.push(v));
        return out;
    }
    for chunk in values.chunks_exact(per).take(batches) {
        out.push(chunk.iter().sum::<f64>() / per as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeShape;
    use crate::model::{DiffusionKind, DiffusionSpec, NonlinearitySpec};
    use crate::simulate::Scheme;
    use crate::skeleton::solve_limit_with;

    fn one_site(epsilon: f64) -> ModelParams {
        let shape = LatticeShape::new(1, 0).unwrap();
        ModelParams {
            lambda: 1.0,
            gamma: 0.0,
            g: StateVector::zeros(shape),
            f: NonlinearitySpec::Zero,
            sigma: DiffusionSpec {
                kind: DiffusionKind::ConstantDiagonal,
                a: StateVector::from_values(shape, vec![1.0]).unwrap(),
            },
            epsilon,
        }
    }

    #[test]
    fn running_stats_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 * 0.3 - 1.0).collect();
        let mut whole = RunningStats::default();
        xs.iter().for_each(|&x| whole.push(x));
        let mut a = RunningStats::default();
        let mut b = RunningStats::default();
        xs[..37].iter().for_each(|&x| a.push(x));
        xs[37..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert!((a.mean - whole.mean).abs() < 1e-14);
        assert!((a.variance() - whole.variance()).abs() < 1e-13);
    }

    #[test]
    fn zero_noise_ensemble_is_the_deterministic_path() {
        let mut p = one_site(0.0);
        p.f = NonlinearitySpec::Cubic;
        let u0 = StateVector::from_values(p.shape(), vec![1.5]).unwrap();
        let cfg = SimConfig::new(0.01, 1.0, Scheme::TamedEuler).with_paths(10).with_stride(10);
        let s = estimate_moments(&p, &u0, &cfg, &[0]).unwrap();
        let det = solve_limit_with(&p, &u0, 1.0, 0.01, crate::skeleton::Integrator::Explicit(Scheme::TamedEuler), 10).unwrap();
        for (m, x) in s.mean_norm_sq.iter().zip(det.norms_sq()) {
            assert_eq!(*m, x);
        }
        assert!(s.se_norm_sq.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn ou_mean_matches_closed_form() {
        let p = one_site(1.0);
        let u0 = StateVector::from_values(p.shape(), vec![2.0]).unwrap();
        let cfg = SimConfig::new(0.001, 0.5, Scheme::EulerMaruyama).with_paths(4000).with_seed(5).with_stride(500);
        let s = estimate_moments(&p, &u0, &cfg, &[]).unwrap();
        let mean = s.site_mean.last().unwrap().values()[0];
        let se = (s.site_var.last().unwrap().values()[0] / 4000.0).sqrt();
        let exact = 2.0 * (-1.5f64).exp();
        assert!((mean - exact).abs() < 3.0 * se, "{mean} vs {exact} (se {se})");
    }

    #[test]
    fn standard_errors_halve_with_four_times_the_paths() {
        let p = one_site(1.0);
        let u0 = StateVector::zeros(p.shape());
        let cfg = SimConfig::new(0.01, 1.0, Scheme::EulerMaruyama).with_stride(100).with_seed(2);
        let small = estimate_moments(&p, &u0, &cfg.clone().with_paths(2000), &[]).unwrap();
        let large = estimate_moments(&p, &u0, &cfg.with_paths(8000), &[]).unwrap();
        let ratio = small.se_norm_sq[1] / large.se_norm_sq[1];
        assert!((ratio / 2.0 - 1.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn delta_grid_examples() {
        let p = one_site(1.0);
        assert_eq!(choose_delta(&p), 0.125);
        let mut big = p.clone();
        big.sigma.a = StateVector::from_values(p.shape(), vec![10.0]).unwrap();
        let d = choose_delta(&big);
        assert!(d < 0.01);
        assert!((100.0 + 3.0 * d) * d < 0.25);
        assert!((100.0 + 6.0 * d) * 2.0 * d >= 0.25);
    }

    #[test]
    fn exp_moment_of_the_zero_path_is_one() {
        let mut p = one_site(0.5);
        p.sigma.a = StateVector::zeros(p.shape());
        let u0 = StateVector::zeros(p.shape());
        let cfg = SimConfig::new(0.01, 1.0, Scheme::EulerMaruyama).with_paths(8);
        let est = estimate_exp_weighted_moment(&p, &u0, &cfg, 0.125, &[0.5, 1.0]).unwrap();
        for e in est {
            assert_eq!(e.log_mean, 0.0);
            assert!(!e.exceeds_bound && !e.overflow);
        }
    }

    #[test]
    fn smaller_delta_gives_smaller_moment() {
        let p = one_site(1.0);
        let u0 = StateVector::from_values(p.shape(), vec![0.5]).unwrap();
        let cfg = SimConfig::new(0.01, 2.0, Scheme::EulerMaruyama).with_paths(500).with_stride(50);
        let a = estimate_exp_weighted_moment(&p, &u0, &cfg, 0.125, &[2.0]).unwrap();
        let b = estimate_exp_weighted_moment(&p, &u0, &cfg, 0.0625, &[2.0]).unwrap();
        assert!(b[0].log_mean <= a[0].log_mean);
    }

    #[test]
    fn huge_ball_always_hit() {
        let p = one_site(1.0);
        let u0 = StateVector::zeros(p.shape());
        let cfg = SimConfig::new(0.01, 1.0, Scheme::EulerMaruyama).with_paths(100);
        let ev = BallEvent::Terminal {
            center: u0.clone(),
            radius: 1e6,
        };
        assert_eq!(estimate_ball_probability(&p, &u0, &cfg, &ev).unwrap().estimate, 1.0);
    }

    #[test]
    fn invariant_sampling_needs_uniqueness_regime() {
        let mut p = one_site(1.0);
        p.sigma.a = StateVector::from_values(p.shape(), vec![2.0]).unwrap();
        let cfg = SimConfig::new(0.01, 50.0, Scheme::EulerMaruyama);
        assert!(matches!(
            sample_invariant(&p, &cfg, &InvariantOptions::default()),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn noiseless_invariant_samples_sit_at_the_equilibrium() {
        let mut p = one_site(0.0);
        p.f = NonlinearitySpec::Cubic;
        p.g = StateVector::from_values(p.shape(), vec![2.0]).unwrap();
        let cfg = SimConfig::new(0.01, 40.0, Scheme::EulerMaruyama);
        let s = sample_invariant(&p, &cfg, &InvariantOptions::default()).unwrap();
        let u_star = crate::skeleton::find_equilibrium(&p).unwrap();
        assert!((s.mean.values()[0] - u_star.values()[0]).abs() < 1e-6);
        assert!(s.variance.values()[0] < 1e-12);
    }
}

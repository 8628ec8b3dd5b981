//! Annealed and quenched limit-theorem experiments.

use std::io::Write;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{sigma_hat, velocity_hat, CovarianceEstimate};
use crate::lattice_env::{Environment, SharedEnvironment};
use crate::model::ModelSpec;
use crate::regeneration::RenewalBlock;
use crate::rng::derive_seed;
use crate::stats::{ks_statistic, mean, pearson, spearman, variance, KsResult, Spearman};
use crate::walk::{eps_coin, run_walk, Mode, Walker};

/// Polygonal interpolation of `k/n -> (X_k - k v) / sqrt(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledPath {
    n: u64,
    d: usize,
    /// Grid values, `d` per grid point.
    values: Vec<f64>,
}

impl ScaledPath {
    /// `positions` holds `X_0, X_1, ...` flattened, `d` coordinates each.
    pub fn new(n: u64, v: &[f64], positions: &[i64]) -> Self {
        let d = v.len();
        assert!(d > 0 && positions.len().is_multiple_of(d), "positions must hold whole sites");
        let scale = (n as f64).sqrt();
        let values = positions
            .chunks_exact(d)
            .enumerate()
            .flat_map(|(k, x)| x.iter().zip(v).map(move |(xi, vi)| (*xi as f64 - k as f64 * vi) / scale))
            .collect();
        ScaledPath { n, d, values }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn grid_len(&self) -> usize {
        self.values.len() / self.d
    }

    /// Time of the last grid point.
    pub fn horizon(&self) -> f64 {
        (self.grid_len() - 1) as f64 / self.n as f64
    }

    pub fn grid(&self, k: usize) -> &[f64] {
        &self.values[k * self.d..(k + 1) * self.d]
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        assert!(t >= 0.0 && t <= self.horizon() + 1e-12, "t = {t} outside the path");
        let s = t * self.n as f64;
        let k = (s.floor() as usize).min(self.grid_len() - 1);
        let frac = s - k as f64;
        if frac == 0.0 || k + 1 == self.grid_len() {
            return self.grid(k).to_vec();
        }
        self.grid(k)
            .iter()
            .zip(self.grid(k + 1))
            .map(|(a, b)| a + frac * (b - a))
            .collect()
    }

    /// `sup_{t <= horizon} |u(t)|`; piecewise linear, so grid points and the
    /// end point suffice.
    pub fn sup_norm(&self, horizon: f64) -> f64 {
        let last = ((horizon * self.n as f64).floor() as usize).min(self.grid_len() - 1);
        let mut m = (0..=last).map(|k| norm(self.grid(k))).fold(0.0, f64::max);
        m = m.max(norm(&self.eval(horizon)));
        m
    }

    /// `sup_{t <= horizon} |u(t) - u'(t)|`, uncapped.
    pub fn sup_distance(&self, other: &ScaledPath, horizon: f64) -> f64 {
        assert_eq!(self.n, other.n);
        let last = ((horizon * self.n as f64).floor() as usize)
            .min(self.grid_len() - 1)
            .min(other.grid_len() - 1);
        let diff = |a: &[f64], b: &[f64]| norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>());
        let mut m = (0..=last)
            .map(|k| diff(self.grid(k), other.grid(k)))
            .fold(0.0, f64::max);
        m = m.max(diff(&self.eval(horizon), &other.eval(horizon)));
        m
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Functional {
    /// `clamp(a . u(T), -c, c)`.
    ClippedProjection {
        direction: Vec<f64>,
        clip: f64,
        horizon: f64,
    },
    /// `min(sup_{t <= T} |u(t)|, c)`.
    ClippedSupNorm { clip: f64, horizon: f64 },
    Constant { value: f64 },
}

impl Functional {
    pub fn projection(direction: Vec<f64>) -> Self {
        Functional::ClippedProjection {
            direction,
            clip: 3.0,
            horizon: 1.0,
        }
    }

    pub fn sup_norm() -> Self {
        Functional::ClippedSupNorm {
            clip: 3.0,
            horizon: 1.0,
        }
    }

    pub fn horizon(&self) -> f64 {
        match self {
            Functional::ClippedProjection { horizon, .. } | Functional::ClippedSupNorm { horizon, .. } => *horizon,
            Functional::Constant { .. } => 0.0,
        }
    }

    pub fn bound(&self) -> f64 {
        match self {
            Functional::ClippedProjection { clip, .. } | Functional::ClippedSupNorm { clip, .. } => *clip,
            Functional::Constant { value } => value.abs(),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Functional::ClippedProjection { direction, .. } => norm(direction).max(1.0),
            Functional::ClippedSupNorm { .. } => 1.0,
            Functional::Constant { .. } => 0.0,
        }
    }

    pub fn eval(&self, path: &ScaledPath) -> f64 {
        match self {
            Functional::ClippedProjection {
                direction,
                clip,
                horizon,
            } => {
                let u = path.eval(*horizon);
                direction
                    .iter()
                    .zip(&u)
                    .map(|(a, x)| a * x)
                    .sum::<f64>()
                    .clamp(-clip, *clip)
            }
            Functional::ClippedSupNorm { clip, horizon } => path.sup_norm(*horizon).min(*clip),
            Functional::Constant { value } => *value,
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        match self {
            Functional::ClippedProjection {
                direction,
                clip,
                horizon,
            } => {
                if direction.len() != d {
                    return Err(Error::Config(format!(
                        "direction has {} entries, model dimension is {d}",
                        direction.len()
                    )));
                }
                check_clip_horizon(*clip, *horizon)
            }
            Functional::ClippedSupNorm { clip, horizon } => check_clip_horizon(*clip, *horizon),
            Functional::Constant { value } if value.is_finite() => Ok(()),
            Functional::Constant { value } => Err(Error::Config(format!("constant {value}"))),
        }
    }
}

fn check_clip_horizon(clip: f64, horizon: f64) -> Result<()> {
    if !(clip > 0.0 && clip.is_finite() && horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("clip {clip} and horizon {horizon} must be positive")));
    }
    Ok(())
}

/// Unit vectors `+e_i` and `-e_i` with their labels.
pub fn axis_directions(d: usize) -> Vec<(String, Vec<f64>)> {
    let mut out = Vec::new();
    for i in 0..d {
        for (sign, label) in [(1.0, "+"), (-1.0, "-")] {
            let mut a = vec![0.0; d];
            a[i] = sign;
            out.push((format!("{label}e{}", i + 1), a));
        }
    }
    out
}

/// Centering and scaling taken from an independent run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub v: Vec<f64>,
    pub v_se: Vec<f64>,
    pub sigma: CovarianceEstimate,
    pub steps: u64,
}

/// Pools the blocks of `walks` annealed walks totalling about `total_steps`.
pub fn calibrate(spec: &ModelSpec, seed: u64, total_steps: u64, walks: u64) -> Result<Calibration> {
    let walks = walks.max(1);
    let per = total_steps.div_ceil(walks);
    let cal_seed = derive_seed(seed, "calibration", &[]);
    let blocks: Vec<Vec<RenewalBlock>> = (0..walks)
        .into_par_iter()
        .map(|w| run_walk(spec, cal_seed, w, per, Mode::AnnealedLazy, None).map(|r| r.blocks()))
        .collect::<Result<_>>()?;
    let blocks: Vec<RenewalBlock> = blocks.into_iter().flatten().collect();
    let v = velocity_hat(&blocks)?;
    let sigma = sigma_hat(&blocks, &v.v_hat)?;
    Ok(Calibration {
        v: v.v_hat,
        v_se: v.se,
        sigma,
        steps: per * walks,
    })
}

fn standardizers(calib: &Calibration, directions: &[Vec<f64>]) -> Result<Vec<f64>> {
    directions
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let q = calib.sigma.quadratic_form(a);
            if q > 0.0 && q.is_finite() {
                Ok(q.sqrt())
            } else {
                Err(Error::DegenerateDirection { index: i, value: q })
            }
        })
        .collect()
}

/// For each direction `a`: `a . (X_n - n v) / sqrt(n a'Sa)` over independent
/// annealed replicas.
pub fn annealed_ensemble(
    spec: &ModelSpec,
    seed: u64,
    n: u64,
    replicas: usize,
    directions: &[Vec<f64>],
    calib: &Calibration,
) -> Result<Vec<Vec<f64>>> {
    let scales = standardizers(calib, directions)?;
    let run_seed = derive_seed(seed, "annealed", &[]);
    let ends: Vec<Vec<i64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| run_walk(spec, run_seed, r, n, Mode::AnnealedLazy, None).map(|w| w.final_position))
        .collect::<Result<_>>()?;
    let root_n = (n as f64).sqrt();
    Ok(directions
        .iter()
        .zip(&scales)
        .map(|(a, s)| {
            ends.iter()
                .map(|x| {
                    let c: f64 = a
                        .iter()
                        .zip(x)
                        .zip(&calib.v)
                        .map(|((ai, xi), vi)| ai * (*xi as f64 - n as f64 * vi))
                        .sum();
                    c / (root_n * s)
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsRow {
    pub label: String,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

pub fn ks_rows(labels: &[String], samples: &[Vec<f64>]) -> Result<Vec<KsRow>> {
    labels
        .iter()
        .zip(samples)
        .map(|(l, s)| {
            let KsResult { statistic, p_value, n } = ks_statistic(s)?;
            Ok(KsRow {
                label: l.clone(),
                statistic,
                p_value,
                n,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub t1: f64,
    pub t2: f64,
    /// Mean over replicas of `y_t1^2 / t1 - y_t2^2 / t2`, in standard errors.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub replicas: usize,
    pub times: Vec<f64>,
    /// Mean of `y_t^2` (about zero, so an unremoved drift shows up).
    pub second_moment: Vec<f64>,
    pub ratio: Vec<f64>,
    pub linearity: Vec<PairComparison>,
    pub linearity_pass: bool,
    /// `corr(y_{t_{i+1}} - y_{t_i}, y_{t_i})` for consecutive times.
    pub increment_correlation: Vec<f64>,
    pub correlation_band: f64,
    pub decorrelation_pass: bool,
    pub pass: bool,
}

/// Checks on `samples[r][i] = y_{times[i]}` for replica `r`: second moment
/// proportional to `t`, increments uncorrelated with the past.
pub fn functional_checks_from_samples(times: &[f64], samples: &[Vec<f64>]) -> Result<FunctionalReport> {
    let r = samples.len();
    if r < 3 {
        return Err(Error::InsufficientData {
            what: "functional-check replicas",
            needed: 3,
            got: r,
        });
    }
    if times.len() < 2 || times.windows(2).any(|w| w[0] >= w[1]) || times[0] <= 0.0 {
        return Err(Error::Config("times must be increasing and positive, at least two".into()));
    }
    let col = |i: usize| samples.iter().map(|s| s[i]).collect::<Vec<f64>>();
    let second_moment: Vec<f64> = (0..times.len())
        .map(|i| mean(&col(i).iter().map(|y| y * y).collect::<Vec<_>>()))
        .collect();
    let ratio: Vec<f64> = second_moment.iter().zip(times).map(|(m, t)| m / t).collect();
    let mut linearity = Vec::new();
    for i in 0..times.len() {
        for j in i + 1..times.len() {
            let diffs: Vec<f64> = samples
                .iter()
                .map(|s| s[i] * s[i] / times[i] - s[j] * s[j] / times[j])
                .collect();
            let se = (variance(&diffs) / r as f64).sqrt();
            let m = mean(&diffs);
            let z = if se > 0.0 { m / se } else if m == 0.0 { 0.0 } else { f64::INFINITY };
            linearity.push(PairComparison {
                t1: times[i],
                t2: times[j],
                z,
            });
        }
    }
    let linearity_pass = linearity.iter().all(|p| p.z.abs() <= 3.0);
    let correlation_band = 3.0 / (r as f64).sqrt();
    let increment_correlation: Vec<f64> = (0..times.len() - 1)
        .map(|i| {
            let past = col(i);
            let inc: Vec<f64> = samples.iter().map(|s| s[i + 1] - s[i]).collect();
            pearson(&inc, &past)
        })
        .collect();
    let decorrelation_pass = increment_correlation.iter().all(|c| c.abs() <= correlation_band);
    Ok(FunctionalReport {
        replicas: r,
        times: times.to_vec(),
        second_moment,
        ratio,
        linearity,
        linearity_pass,
        increment_correlation,
        correlation_band,
        decorrelation_pass,
        pass: linearity_pass && decorrelation_pass,
    })
}

/// `y_t = a . B^n_t / sqrt(a'Sa)` at `times` over annealed replicas.
pub fn functional_checks(
    spec: &ModelSpec,
    seed: u64,
    n: u64,
    replicas: usize,
    times: &[f64],
    direction: &[f64],
    calib: &Calibration,
) -> Result<FunctionalReport> {
    let scale = standardizers(calib, &[direction.to_vec()])?[0];
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let steps = (t_max * n as f64).ceil() as u64;
    let run_seed = derive_seed(seed, "functional", &[]);
    let samples: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let env = crate::lattice_env::LazyEnvironment::new(
                spec,
                crate::rng::sequential_rng(run_seed, "annealed-env", &[r]),
            );
            let w = Walker::new(spec, env, crate::walk::coin_seed(run_seed), r)?;
            let (pos, _) = record_path(w, steps)?;
            let path = ScaledPath::new(n, &calib.v, &pos);
            Ok(times
                .iter()
                .map(|&t| {
                    let u = path.eval(t);
                    direction.iter().zip(&u).map(|(a, x)| a * x).sum::<f64>() / scale
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    functional_checks_from_samples(times, &samples)
}

/// Positions `X_0..X_steps` (flattened) and the coins `eps_1..eps_steps`.
pub fn record_path<E: Environment>(mut w: Walker<'_, E>, steps: u64) -> Result<(Vec<i64>, Vec<bool>)> {
    let d = w.position().len();
    let mut pos = Vec::with_capacity((steps as usize + 1) * d);
    let mut eps = Vec::with_capacity(steps as usize);
    pos.extend_from_slice(w.position());
    for _ in 0..steps {
        eps.push(w.step()?.eps);
        pos.extend_from_slice(w.position());
    }
    Ok((pos, eps))
}

fn quenched_functional(
    spec: &ModelSpec,
    env_seed: u64,
    coin_seed: u64,
    walk_id: u64,
    n: u64,
    f: &Functional,
    v: &[f64],
) -> Result<f64> {
    let steps = (f.horizon() * n as f64).ceil() as u64;
    let w = Walker::new(spec, SharedEnvironment::new(spec, env_seed), coin_seed, walk_id)?;
    let (pos, _) = record_path(w, steps)?;
    Ok(f.eval(&ScaledPath::new(n, v, &pos)))
}

pub fn scale_for(b: f64, m: u32) -> u64 {
    b.powi(m as i32).floor() as u64
}

fn check_b(b: f64) -> Result<()> {
    if !(b > 1.0 && b <= 2.0) {
        return Err(Error::Config(format!("b = {b} outside (1, 2]")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub m: u32,
    pub n: u64,
    /// Across-environment variance of the estimated quenched means.
    pub var_raw: f64,
    /// Mean within-environment variance divided by the walks per environment.
    pub noise_floor: f64,
    pub var_corrected: f64,
    /// Jackknife (leave one environment out) standard error of `var_corrected`.
    pub se: f64,
}

fn corrected_variance(means: &[f64], within: &[f64], walks: usize) -> (f64, f64, f64) {
    let raw = variance(means);
    let floor = mean(within) / walks as f64;
    (raw, floor, raw - floor)
}

/// Variance over environments of `E_omega[F(B^n)]` along `n = floor(b^m)`.
#[allow(clippy::too_many_arguments)]
pub fn quenched_variance_curve(
    spec: &ModelSpec,
    seed: u64,
    b: f64,
    m_range: RangeInclusive<u32>,
    env_replicas: usize,
    walk_replicas: usize,
    f: &Functional,
    v: &[f64],
) -> Result<Vec<VarianceRow>> {
    check_b(b)?;
    f.validate(spec.dimension())?;
    for (what, got) in [("environment replicas", env_replicas), ("walk replicas", walk_replicas)] {
        if got < 2 {
            return Err(Error::InsufficientData { what, needed: 2, got });
        }
    }
    let mut rows = Vec::new();
    for m in m_range {
        let n = scale_for(b, m);
        let per_env: Vec<(f64, f64)> = (0..env_replicas as u64)
            .into_par_iter()
            .map(|e| {
                let env_seed = derive_seed(seed, "variance-env", &[m as u64, e]);
                let coins = derive_seed(seed, "variance-coins", &[m as u64, e]);
                let vals: Vec<f64> = (0..walk_replicas as u64)
                    .map(|w| quenched_functional(spec, env_seed, coins, w, n, f, v))
                    .collect::<Result<_>>()?;
                Ok((mean(&vals), variance(&vals)))
            })
            .collect::<Result<_>>()?;
        let means: Vec<f64> = per_env.iter().map(|p| p.0).collect();
        let within: Vec<f64> = per_env.iter().map(|p| p.1).collect();
        let (var_raw, noise_floor, var_corrected) = corrected_variance(&means, &within, walk_replicas);
        let se = if env_replicas > 2 {
            let k = env_replicas;
            let loo: Vec<f64> = (0..k)
                .map(|i| {
                    let ms: Vec<f64> = means.iter().enumerate().filter(|(j, _)| *j != i).map(|p| *p.1).collect();
                    let ws: Vec<f64> = within.iter().enumerate().filter(|(j, _)| *j != i).map(|p| *p.1).collect();
                    corrected_variance(&ms, &ws, walk_replicas).2
                })
                .collect();
            let lm = mean(&loo);
            ((k as f64 - 1.0) / k as f64 * loo.iter().map(|x| (x - lm).powi(2)).sum::<f64>()).sqrt()
        } else {
            f64::NAN
        };
        rows.push(VarianceRow {
            m,
            n,
            var_raw,
            noise_floor,
            var_corrected,
            se: if se.is_nan() { 0.0 } else { se },
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub m: u32,
    pub n: u64,
    pub pairs: usize,
    /// Paired estimate of `E[F1 F2 | same environment] - E[F1 F2 | independent environments]`.
    pub delta: f64,
    pub se: f64,
    /// Same estimator with the shared environment replaced by an independent one.
    pub control: f64,
    pub control_se: f64,
    /// Plain means of `F1 F2` with one and with two environments.
    pub same_mean: f64,
    pub independent_mean: f64,
}

/// Covariance gap between walker pairs in one environment and in independent
/// ones. Walker `i` keeps its coins across environments, so with environments
/// `E, E', E'', E'''` the term
///
/// ```text
/// (F1(E) - F1(E'')) (F2(E) - F2(E'))
/// ```
///
/// has mean exactly `Delta_m`; the control replaces the second `E` by `E'''`
/// and has mean 0.
#[allow(clippy::too_many_arguments)]
pub fn delta_m(
    spec: &ModelSpec,
    seed: u64,
    b: f64,
    m: u32,
    pairs: usize,
    f: &Functional,
    v: &[f64],
) -> Result<DeltaRow> {
    check_b(b)?;
    f.validate(spec.dimension())?;
    if pairs < 2 {
        return Err(Error::InsufficientData {
            what: "walker pairs",
            needed: 2,
            got: pairs,
        });
    }
    let n = scale_for(b, m);
    let terms: Vec<[f64; 4]> = (0..pairs as u64)
        .into_par_iter()
        .map(|i| {
            let env = |k: u64| derive_seed(seed, "delta-env", &[m as u64, i, k]);
            let coins = derive_seed(seed, "delta-coins", &[m as u64, i]);
            let g = |walker: u64, k: u64| quenched_functional(spec, env(k), coins, walker, n, f, v);
            let f1_e = g(0, 0)?;
            let f2_e = g(1, 0)?;
            let f2_e1 = g(1, 1)?;
            let f1_e2 = g(0, 2)?;
            let f2_e3 = g(1, 3)?;
            Ok([
                (f1_e - f1_e2) * (f2_e - f2_e1),
                (f1_e - f1_e2) * (f2_e3 - f2_e1),
                f1_e * f2_e,
                f1_e2 * f2_e1,
            ])
        })
        .collect::<Result<_>>()?;
    let col = |j: usize| terms.iter().map(|t| t[j]).collect::<Vec<_>>();
    let se = |x: &[f64]| (variance(x) / x.len() as f64).sqrt();
    let (d, c) = (col(0), col(1));
    Ok(DeltaRow {
        m,
        n,
        pairs,
        delta: mean(&d),
        se: se(&d),
        control: mean(&c),
        control_se: se(&c),
        same_mean: mean(&col(2)),
        independent_mean: mean(&col(3)),
    })
}

/// Spearman correlation of `(m, delta_m)` points, pooled over seeds.
pub fn trend_test(rows: &[DeltaRow]) -> Result<Spearman> {
    let ms: Vec<f64> = rows.iter().map(|r| r.m as f64).collect();
    let ds: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    spearman(&ms, &ds)
}

/// Smallest `s >= L` with both coin streams equal to 1 on `s-L+1..=s`.
/// `eps1(u)`, `eps2(u)` are queried for `u = 1, 2, ...` up to `horizon`.
pub fn joint_run_time<F1, F2>(mut eps1: F1, mut eps2: F2, l: u64, horizon: u64) -> Result<u64>
where
    F1: FnMut(u64) -> bool,
    F2: FnMut(u64) -> bool,
{
    if l == 0 {
        return Err(Error::Config("run length must be at least 1".into()));
    }
    let mut run = 0;
    for u in 1..=horizon {
        if eps1(u) && eps2(u) {
            run += 1;
            if run >= l {
                return Ok(u);
            }
        } else {
            run = 0;
        }
    }
    Err(Error::Horizon { scanned: horizon })
}

/// `joint_run_time` on two explicit streams, `streams[k][u-1] = eps_u`.
pub fn joint_run_time_streams(a: &[bool], b: &[bool], l: u64) -> Result<u64> {
    let h = a.len().min(b.len()) as u64;
    joint_run_time(|u| a[u as usize - 1], |u| b[u as usize - 1], l, h)
}

/// `joint_run_time` on the coin streams of two walkers.
pub fn joint_run_time_walkers(coin_seed: u64, ids: (u64, u64), epsilon: f64, l: u64, horizon: u64) -> Result<u64> {
    joint_run_time(
        |u| eps_coin(coin_seed, ids.0, u, epsilon),
        |u| eps_coin(coin_seed, ids.1, u, epsilon),
        l,
        horizon,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoinSharing {
    Independent,
    /// Both walkers use one coin stream: in one environment the paths coincide.
    Identical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionReport {
    pub pairs: usize,
    pub n: u64,
    pub run_length: u64,
    /// Fraction of pairs whose site sets visited on `[beta, n]` are disjoint.
    pub probability: f64,
    pub se: f64,
    pub mean_beta: f64,
}

pub const MIN_INTERSECTION_PAIRS: usize = 100;

/// Walker pairs in one environment: do the ranges after the joint run time meet?
pub fn intersection_diagnostic(
    spec: &ModelSpec,
    seed: u64,
    pairs: usize,
    n: u64,
    l: u64,
    coins: CoinSharing,
) -> Result<IntersectionReport> {
    if pairs < MIN_INTERSECTION_PAIRS {
        return Err(Error::InsufficientData {
            what: "intersection pairs",
            needed: MIN_INTERSECTION_PAIRS,
            got: pairs,
        });
    }
    let d = spec.dimension();
    let outcomes: Vec<(bool, u64)> = (0..pairs as u64)
        .into_par_iter()
        .map(|i| {
            let env_seed = derive_seed(seed, "intersection-env", &[i]);
            let coin_seed = derive_seed(seed, "intersection-coins", &[i]);
            let ids = match coins {
                CoinSharing::Independent => (0, 1),
                CoinSharing::Identical => (0, 0),
            };
            let path = |id: u64| {
                let w = Walker::new(spec, SharedEnvironment::new(spec, env_seed), coin_seed, id)?;
                record_path(w, n)
            };
            let (p1, e1) = path(ids.0)?;
            let (p2, e2) = path(ids.1)?;
            let beta = joint_run_time_streams(&e1, &e2, l)?;
            let range = |p: &[i64]| {
                p[beta as usize * d..]
                    .chunks_exact(d)
                    .map(|x| x.to_vec())
                    .collect::<std::collections::HashSet<_>>()
            };
            let (r1, r2) = (range(&p1), range(&p2));
            Ok((r1.is_disjoint(&r2), beta))
        })
        .collect::<Result<_>>()?;
    let k = outcomes.iter().filter(|o| o.0).count() as f64;
    let p = k / pairs as f64;
    Ok(IntersectionReport {
        pairs,
        n,
        run_length: l,
        probability: p,
        se: (p * (1.0 - p) / pairs as f64).sqrt(),
        mean_beta: outcomes.iter().map(|o| o.1 as f64).sum::<f64>() / pairs as f64,
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

pub fn write_clt_samples_csv<W: Write>(w: W, labels: &[String], samples: &[Vec<f64>]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["direction", "replica", "value"]).map_err(csv_err)?;
    for (l, s) in labels.iter().zip(samples) {
        for (r, x) in s.iter().enumerate() {
            wr.write_record([l.clone(), r.to_string(), x.to_string()]).map_err(csv_err)?;
        }
    }
    wr.flush().map_err(|e| Error::Config(e.to_string()))
}

pub fn write_variance_curve_csv<W: Write>(w: W, rows: &[VarianceRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["m", "n", "var_raw", "var_corrected", "se", "noise_floor"])
        .map_err(csv_err)?;
    for r in rows {
        wr.write_record([
            r.m.to_string(),
            r.n.to_string(),
            r.var_raw.to_string(),
            r.var_corrected.to_string(),
            r.se.to_string(),
            r.noise_floor.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| Error::Config(e.to_string()))
}

pub fn write_delta_csv<W: Write>(w: W, rows: &[DeltaRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["m", "n", "delta", "se", "control", "control_se", "same_mean", "independent_mean"])
        .map_err(csv_err)?;
    for r in rows {
        wr.write_record([
            r.m.to_string(),
            r.n.to_string(),
            r.delta.to_string(),
            r.se.to_string(),
            r.control.to_string(),
            r.control_se.to_string(),
            r.same_mean.to_string(),
            r.independent_mean.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rng::{RandomTag, StreamLabel};
    use crate::stats::normal_quantile;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn grid_values_match_definition() {
        let pos = [0i64, 0, 1, 0, 1, 1, 2, 1, 2, 2];
        let v = [0.3, -0.2];
        let p = ScaledPath::new(4, &v, &pos);
        for k in 0..5 {
            for c in 0..2 {
                let expect = (pos[2 * k + c] as f64 - k as f64 * v[c]) / 2.0;
                assert!((p.eval(k as f64 / 4.0)[c] - expect).abs() <= 1e-12);
            }
        }
        let mid = p.eval(0.375);
        for c in 0..2 {
            assert_abs_diff_eq!(mid[c], 0.5 * (p.grid(1)[c] + p.grid(2)[c]), epsilon = 1e-12);
        }
        assert_eq!(p.horizon(), 1.0);
    }

    #[test]
    fn functional_values() {
        let pos = [0i64, 1, 2, 3, 4, 5, 6, 7, 8];
        let p = ScaledPath::new(4, &[0.0], &pos);
        let proj = Functional::projection(vec![1.0]);
        assert_eq!(proj.eval(&p), 2.0);
        let proj_t = Functional::ClippedProjection {
            direction: vec![-1.0],
            clip: 3.0,
            horizon: 2.0,
        };
        assert_eq!(proj_t.eval(&p), -3.0);
        assert_eq!(Functional::sup_norm().eval(&p), 2.0);
        let half = Functional::ClippedSupNorm { clip: 3.0, horizon: 0.625 };
        assert_abs_diff_eq!(half.eval(&p), 1.25, epsilon = 1e-12);
        assert_eq!(Functional::Constant { value: 1.5 }.eval(&p), 1.5);
    }

    fn random_path(seed: u64, n: u64, d: usize) -> ScaledPath {
        let mut pos = vec![0i64; d];
        let mut all = pos.clone();
        for t in 0..n {
            let u = RandomTag::walker(seed, StreamLabel::Step, 0, t).uniform();
            let mv = (u * (2 * d + 1) as f64) as usize;
            if let Some((c, s)) = crate::model::move_displacement(mv) {
                pos[c] += s;
            }
            all.extend_from_slice(&pos);
        }
        ScaledPath::new(n, &vec![0.05; d], &all)
    }

    proptest! {
        #[test]
        fn functionals_bounded_and_lipschitz(s1 in 0u64..10_000, s2 in 0u64..10_000, a in prop::collection::vec(-2.0f64..2.0, 2), clip in 0.1f64..4.0) {
            let (p, q) = (random_path(s1, 64, 2), random_path(s2, 64, 2));
            let fs = [
                Functional::ClippedProjection { direction: a.clone(), clip, horizon: 1.0 },
                Functional::ClippedSupNorm { clip, horizon: 1.0 },
                Functional::ClippedSupNorm { clip, horizon: 0.4 },
            ];
            for f in &fs {
                prop_assert!(f.eval(&p).abs() <= f.bound());
                let gap = (f.eval(&p) - f.eval(&q)).abs();
                prop_assert!(gap <= f.lipschitz() * p.sup_distance(&q, f.horizon()) + 1e-12);
            }
        }
    }

    #[test]
    fn joint_run_examples() {
        let ones = [true; 5];
        assert_eq!(joint_run_time_streams(&ones, &ones, 3).unwrap(), 3);
        let b = [true, false, true, true, true];
        assert_eq!(joint_run_time_streams(&ones, &b, 3).unwrap(), 5);
        assert_eq!(
            joint_run_time_streams(&b, &b, 4),
            Err(Error::Horizon { scanned: 5 })
        );
        assert!(joint_run_time_streams(&b, &b, 0).is_err());
    }

    /// Exact mean waiting time for `l` consecutive successes of probability
    /// `p`, by solving the run-length chain backwards.
    fn expected_wait(p: f64, l: usize) -> f64 {
        // h[k] = expected remaining time from run length k; h[l] = 0
        // h[k] = 1 + p h[k+1] + (1-p) h[0]; write h[k] = a_k + b_k h[0]
        let (mut a, mut b) = (0.0, 0.0);
        for _ in 0..l {
            a = 1.0 + p * a;
            b = p * b + (1.0 - p);
        }
        a / (1.0 - b)
    }

    #[test]
    fn mean_joint_run_time_matches_chain() {
        let (eps, l) = (0.9, 4u64);
        let n = 20_000u64;
        let betas: Vec<f64> = (0..n)
            .map(|i| joint_run_time_walkers(7 + i, (0, 1), eps, l, 1 << 20).unwrap() as f64)
            .collect();
        let exact = expected_wait(eps * eps, l as usize);
        assert_abs_diff_eq!(exact, (0.81f64.powi(-4) - 1.0) / 0.19, epsilon = 1e-9);
        let se = (variance(&betas) / n as f64).sqrt();
        assert!((mean(&betas) - exact).abs() <= 3.0 * se, "{} vs {exact}", mean(&betas));
    }

    #[test]
    fn brownian_control_passes() {
        let times = [0.25, 0.5, 1.0];
        let r = 4000u64;
        let samples: Vec<Vec<f64>> = (0..r)
            .map(|i| {
                let mut w = 0.0;
                let mut prev = 0.0f64;
                times
                    .iter()
                    .enumerate()
                    .map(|(k, &t)| {
                        let u = RandomTag::walker(11, StreamLabel::Step, i, k as u64).uniform();
                        w += (t - prev).sqrt() * normal_quantile(u.max(1e-300));
                        prev = t;
                        w
                    })
                    .collect()
            })
            .collect();
        let rep = functional_checks_from_samples(&times, &samples).unwrap();
        assert!(rep.pass, "{rep:?}");
        let drifted: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| s.iter().zip(&times).map(|(y, t)| y + 2.0 * t).collect())
            .collect();
        let rep = functional_checks_from_samples(&times, &drifted).unwrap();
        assert!(!rep.linearity_pass);
    }

    #[test]
    fn constant_functional_has_no_variance_or_gap() {
        let spec = fixtures::f1();
        let f = Functional::Constant { value: 0.7 };
        let rows = quenched_variance_curve(&spec, 1, 2.0, 2..=3, 3, 2, &f, &[0.0]).unwrap();
        for r in rows {
            assert_eq!((r.var_raw, r.var_corrected, r.se), (0.0, 0.0, 0.0));
        }
        let d = delta_m(&spec, 1, 2.0, 3, 5, &f, &[0.0]).unwrap();
        assert_eq!((d.delta, d.control), (0.0, 0.0));
    }

    #[test]
    fn minimal_runs_are_finite() {
        let spec = fixtures::f1();
        let f = Functional::projection(vec![1.0]);
        let rows = quenched_variance_curve(&spec, 2, 2.0, 3..=4, 2, 2, &f, &[0.0]).unwrap();
        assert!(rows.iter().all(|r| r.var_raw.is_finite() && r.var_corrected.is_finite() && r.se.is_finite()));
        assert!(quenched_variance_curve(&spec, 2, 2.0, 3..=4, 1, 2, &f, &[0.0]).is_err());
        assert!(quenched_variance_curve(&spec, 2, 2.5, 3..=4, 2, 2, &f, &[0.0]).is_err());
        assert!(delta_m(&spec, 2, 2.0, 3, 1, &f, &[0.0]).is_err());
    }

    #[test]
    fn identical_coins_always_intersect() {
        let rep = intersection_diagnostic(&fixtures::f1_2d(), 3, 100, 200, 3, CoinSharing::Identical).unwrap();
        assert_eq!(rep.probability, 0.0);
        assert!(intersection_diagnostic(&fixtures::f1(), 3, 99, 200, 3, CoinSharing::Independent).is_err());
    }

    #[test]
    fn one_dimensional_ranges_meet() {
        let rep = intersection_diagnostic(&fixtures::f1(), 4, 200, 500, 3, CoinSharing::Independent).unwrap();
        assert!(rep.probability < 0.05, "{rep:?}");
    }

    #[test]
    fn degenerate_direction_rejected() {
        let calib = Calibration {
            v: vec![0.0],
            v_se: vec![0.0],
            sigma: CovarianceEstimate {
                sigma_hat: vec![vec![0.0]],
                n_blocks: 2,
                cholesky_ok: false,
                min_eigenvalue: 0.0,
            },
            steps: 0,
        };
        assert!(matches!(
            annealed_ensemble(&fixtures::f1(), 1, 4, 10, &[vec![1.0]], &calib),
            Err(Error::DegenerateDirection { index: 0, .. })
        ));
    }

    #[test]
    fn csv_headers() {
        let mut buf = Vec::new();
        write_clt_samples_csv(&mut buf, &["+e1".into()], &[vec![0.5, -1.25]]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "direction,replica,value\n+e1,0,0.5\n+e1,1,-1.25\n");
        let mut buf = Vec::new();
        write_variance_curve_csv(&mut buf, &[]).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("m,n,var_raw,var_corrected,se"));
        let mut buf = Vec::new();
        write_delta_csv(&mut buf, &[]).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("m,n,delta,se"));
    }

    #[test]
    fn axis_labels() {
        let dirs = axis_directions(2);
        let labels: Vec<_> = dirs.iter().map(|d| d.0.as_str()).collect();
        assert_eq!(labels, ["+e1", "-e1", "+e2", "-e2"]);
        assert_eq!(dirs[3].1, vec![0.0, -1.0]);
    }
}

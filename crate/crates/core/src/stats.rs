//! Test statistics used by the diagnostics: Kolmogorov-Smirnov, chi-square,
//! Spearman rank correlation, autocorrelation.

use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};
use statrs::function::erf::{erf_inv, erfc};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_quantile(p: f64) -> f64 {
    let x = std::f64::consts::SQRT_2 * erf_inv(2.0 * p - 1.0);
    if !x.is_finite() {
        return x;
    }
    // one Newton step against the cdf
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    x - (normal_cdf(x) - p) / pdf
}

/// Survival function of the Kolmogorov distribution, `P(K > x)`.
///
/// Uses the theta-function form below 1.18 (fast convergence near 0) and the
/// alternating series above it.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut sum = 0.0;
        for k in 1..=100u32 {
            let j = (2 * k - 1) as f64;
            let term = (-j * j * pi2 / (8.0 * x * x)).exp();
            sum += term;
            if k >= 20 && term < 1e-16 * sum {
                break;
            }
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * sum).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for k in 1..=100u32 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * x * x).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if k >= 20 && term < 1e-16 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample KS test against the standard normal, asymptotic p-value.
pub fn ks_statistic(samples: &[f64]) -> Result<KsResult> {
    const MIN: usize = 50;
    if samples.len() < MIN {
        return Err(Error::InsufficientData {
            what: "KS samples",
            needed: MIN,
            got: samples.len(),
        });
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max);
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_sf(n.sqrt() * d),
        n: xs.len(),
    })
}

/// Two-sample KS test with the asymptotic p-value. Ties are handled by
/// evaluating both empirical CDFs after each distinct value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData {
            what: "two-sample KS",
            needed: 1,
            got: a.len().min(b.len()),
        });
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = xs[i].min(ys[j]);
        while i < n && xs[i] <= v {
            i += 1;
        }
        while j < m && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = (n as f64 * m as f64 / (n + m) as f64).sqrt();
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_sf(en * d),
        n: n + m,
    })
}

fn chi_square_p(stat: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    ChiSquared::new(df as f64).expect("df > 0").sf(stat)
}

/// Goodness of fit of `counts` to `probs`. Cells with expected count below 5
/// are pooled. Returns `(statistic, p)`.
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> (f64, f64) {
    let total: u64 = counts.iter().sum();
    let n = total as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut pooled_o, mut pooled_e) = (0.0, 0.0);
    for (&o, &p) in counts.iter().zip(probs) {
        let e = n * p;
        if e == 0.0 && o > 0 {
            return (f64::INFINITY, 0.0);
        }
        if e < 5.0 {
            pooled_o += o as f64;
            pooled_e += e;
        } else {
            cells.push((o as f64, e));
        }
    }
    if pooled_e > 0.0 {
        cells.push((pooled_o, pooled_e));
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    (stat, chi_square_p(stat, cells.len().saturating_sub(1)))
}

/// Two-sample homogeneity test on aligned histograms. Cells whose smaller
/// expected count is below 5 are pooled. Returns `(statistic, p)`.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> (f64, f64) {
    let na: f64 = a.iter().sum::<u64>() as f64;
    let nb: f64 = b.iter().sum::<u64>() as f64;
    let n = na + nb;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut pa, mut pb) = (0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let t = (x + y) as f64;
        if t == 0.0 {
            continue;
        }
        if t * na.min(nb) / n < 5.0 {
            pa += x as f64;
            pb += y as f64;
        } else {
            cells.push((x as f64, y as f64));
        }
    }
    if pa + pb > 0.0 {
        cells.push((pa, pb));
    }
    let stat: f64 = cells
        .iter()
        .map(|&(x, y)| {
            let t = x + y;
            let (ea, eb) = (t * na / n, t * nb / n);
            (x - ea).powi(2) / ea + (y - eb).powi(2) / eb
        })
        .sum();
    (stat, chi_square_p(stat, cells.len().saturating_sub(1)))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance, computed on data shifted by the first value
/// (exactly zero for constant input).
pub fn variance(xs: &[f64]) -> f64 {
    let k = xs[0];
    let n = xs.len() as f64;
    let (s, s2) = xs
        .iter()
        .fold((0.0, 0.0), |(s, s2), x| (s + (x - k), s2 + (x - k) * (x - k)));
    ((s2 - s * s / n) / (n - 1.0)).max(0.0)
}

/// Lag-`k` sample autocorrelation.
pub fn autocorrelation(xs: &[f64], lag: usize) -> f64 {
    let n = xs.len();
    if lag >= n {
        return 0.0;
    }
    let m = mean(xs);
    let denom: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let num: f64 = (0..n - lag).map(|i| (xs[i] - m) * (xs[i + lag] - m)).sum();
    num / denom
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Average ranks, 1-based.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub rho: f64,
    /// One-sided p-value for the alternative `rho < 0`.
    pub p_negative: f64,
    pub n: usize,
}

/// Spearman rank correlation; the p-value uses the Student-t approximation.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<Spearman> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::InsufficientData {
            what: "Spearman pairs",
            needed: 3,
            got: xs.len().min(ys.len()),
        });
    }
    let rho = pearson(&ranks(xs), &ranks(ys));
    let n = xs.len();
    let df = (n - 2) as f64;
    let p_negative = if rho <= -1.0 {
        0.0
    } else if rho >= 1.0 {
        1.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        StudentsT::new(0.0, 1.0, df).expect("df > 0").cdf(t)
    };
    Ok(Spearman { rho, p_negative, n })
}

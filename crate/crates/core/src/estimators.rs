//! Renewal estimators of the velocity and the diffusion matrix.
//!
//! With blocks `(dtau_i, dx_i)`, `i = 1..N`:
//!
//! ```text
//! v      = sum dx / sum dtau
//! se_j   = sqrt(var_i(dx_ij - v_j dtau_i) / N) / mean(dtau)        (delta method)
//! Sigma  = cov_i(dx_i - dtau_i v) / mean(dtau)                     (N - 1 normalisation)
//! ```

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::regeneration::{block_series, RenewalBlock};
use crate::stats::{autocorrelation, ks_two_sample, mean, variance};
use crate::walk::{run_walk, Mode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    pub v_hat: Vec<f64>,
    pub se: Vec<f64>,
    pub n_blocks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub sigma_hat: Vec<Vec<f64>>,
    pub n_blocks: usize,
    pub cholesky_ok: bool,
    pub min_eigenvalue: f64,
}

impl CovarianceEstimate {
    /// `a' Sigma a`.
    pub fn quadratic_form(&self, a: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, row) in self.sigma_hat.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                s += a[i] * x * a[j];
            }
        }
        s
    }
}

fn need_blocks(blocks: &[RenewalBlock], needed: usize) -> Result<usize> {
    if blocks.len() < needed {
        return Err(Error::InsufficientData {
            what: "renewal blocks",
            needed,
            got: blocks.len(),
        });
    }
    Ok(blocks[0].dx.len())
}

pub fn velocity_hat(blocks: &[RenewalBlock]) -> Result<DriftEstimate> {
    let d = need_blocks(blocks, 2)?;
    let n = blocks.len() as f64;
    let total_tau: f64 = blocks.iter().map(|b| b.dtau as f64).sum();
    let mean_tau = total_tau / n;
    let mut v_hat = Vec::with_capacity(d);
    let mut se = Vec::with_capacity(d);
    for c in 0..d {
        let v = blocks.iter().map(|b| b.dx[c] as f64).sum::<f64>() / total_tau;
        let r: Vec<f64> = blocks
            .iter()
            .map(|b| b.dx[c] as f64 - v * b.dtau as f64)
            .collect();
        v_hat.push(v);
        se.push((variance(&r) / n).sqrt() / mean_tau);
    }
    Ok(DriftEstimate {
        v_hat,
        se,
        n_blocks: blocks.len(),
    })
}

pub fn sigma_hat(blocks: &[RenewalBlock], v: &[f64]) -> Result<CovarianceEstimate> {
    let d = need_blocks(blocks, 2)?;
    if v.len() != d {
        return Err(Error::Config(format!("velocity has {} entries, blocks have {d}", v.len())));
    }
    let n = blocks.len();
    let mean_tau = blocks.iter().map(|b| b.dtau as f64).sum::<f64>() / n as f64;
    let resid: Vec<Vec<f64>> = blocks
        .iter()
        .map(|b| (0..d).map(|c| b.dx[c] as f64 - b.dtau as f64 * v[c]).collect())
        .collect();
    let centre: Vec<f64> = (0..d)
        .map(|c| resid.iter().map(|r| r[c]).sum::<f64>() / n as f64)
        .collect();
    let mut s = DMatrix::<f64>::zeros(d, d);
    for r in &resid {
        for i in 0..d {
            for j in i..d {
                s[(i, j)] += (r[i] - centre[i]) * (r[j] - centre[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let x = s[(i, j)] / (n as f64 - 1.0) / mean_tau;
            s[(i, j)] = x;
            s[(j, i)] = x;
        }
    }
    let cholesky_ok = s.clone().cholesky().is_some();
    let min_eigenvalue = SymmetricEigen::new(s.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(CovarianceEstimate {
        sigma_hat: (0..d).map(|i| (0..d).map(|j| s[(i, j)]).collect()).collect(),
        n_blocks: n,
        cholesky_ok,
        min_eigenvalue,
    })
}

pub const MIN_DIAGNOSTIC_BLOCKS: usize = 1000;
pub const MAX_LAG: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesDiagnostic {
    pub name: String,
    /// Autocorrelations at lags `1..=MAX_LAG`.
    pub acf: Vec<f64>,
    pub acf_pass: bool,
    /// Two-sample KS p-value, first half against second half.
    pub halves_ks_p: f64,
    pub halves_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IidReport {
    pub n_blocks: usize,
    /// `3 / sqrt(N)`.
    pub band: f64,
    pub series: Vec<SeriesDiagnostic>,
    pub pass: bool,
}

pub fn block_iid_diagnostics(blocks: &[RenewalBlock]) -> Result<IidReport> {
    need_blocks(blocks, MIN_DIAGNOSTIC_BLOCKS)?;
    let n = blocks.len();
    let band = 3.0 / (n as f64).sqrt();
    let mut series = Vec::new();
    for (k, xs) in block_series(blocks).into_iter().enumerate() {
        let acf: Vec<f64> = (1..=MAX_LAG).map(|l| autocorrelation(&xs, l)).collect();
        let (a, b) = xs.split_at(n / 2);
        let halves_ks_p = ks_two_sample(a, b)?.p_value;
        series.push(SeriesDiagnostic {
            name: if k == 0 { "dtau".into() } else { format!("dx_{k}") },
            acf_pass: acf.iter().all(|r| r.abs() <= band),
            acf,
            halves_ks_p,
            halves_pass: halves_ks_p > 0.01,
        });
    }
    let pass = series.iter().all(|s| s.acf_pass && s.halves_pass);
    Ok(IidReport {
        n_blocks: n,
        band,
        series,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SllnReport {
    pub n: u64,
    pub replicas: usize,
    /// Mean over replicas of `X_n / n`.
    pub mean_displacement_rate: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub renewal: DriftEstimate,
    /// `|mean - v_hat| / sqrt(se_mean^2 + se_v^2)` per coordinate.
    pub discrepancy: Vec<f64>,
    pub pass: bool,
}

/// Annealed walks of `n` steps: endpoint rate against the pooled renewal estimate.
pub fn slln_check(spec: &ModelSpec, seed: u64, n: u64, replicas: usize) -> Result<SllnReport> {
    if replicas < 2 {
        return Err(Error::InsufficientData {
            what: "SLLN replicas",
            needed: 2,
            got: replicas,
        });
    }
    let runs: Vec<_> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| run_walk(spec, seed, r, n, Mode::AnnealedLazy, None))
        .collect::<Result<_>>()?;
    let d = spec.dimension();
    let blocks: Vec<RenewalBlock> = runs.iter().flat_map(|r| r.blocks()).collect();
    let renewal = velocity_hat(&blocks)?;
    let mut mean_rate = Vec::new();
    let mut mean_se = Vec::new();
    let mut discrepancy = Vec::new();
    for c in 0..d {
        let rates: Vec<f64> = runs
            .iter()
            .map(|r| r.final_position[c] as f64 / n as f64)
            .collect();
        let m = mean(&rates);
        let se = (variance(&rates) / replicas as f64).sqrt();
        let combined = (se * se + renewal.se[c] * renewal.se[c]).sqrt();
        mean_rate.push(m);
        mean_se.push(se);
        discrepancy.push((m - renewal.v_hat[c]).abs() / combined);
    }
    let pass = discrepancy.iter().all(|z| *z <= 3.0);
    Ok(SllnReport {
        n,
        replicas,
        mean_displacement_rate: mean_rate,
        mean_se,
        renewal,
        discrepancy,
        pass,
    })
}

/// Contents of `estimates.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub v_hat: Vec<f64>,
    pub se: Vec<f64>,
    pub sigma_hat: Vec<Vec<f64>>,
    pub cholesky_ok: bool,
    pub n_blocks: usize,
    pub diagnostics: Option<IidReport>,
}

pub fn estimate_all(blocks: &[RenewalBlock]) -> Result<Estimates> {
    let v = velocity_hat(blocks)?;
    let s = sigma_hat(blocks, &v.v_hat)?;
    let diagnostics = if blocks.len() >= MIN_DIAGNOSTIC_BLOCKS {
        Some(block_iid_diagnostics(blocks)?)
    } else {
        None
    };
    Ok(Estimates {
        v_hat: v.v_hat,
        se: v.se,
        sigma_hat: s.sigma_hat,
        cholesky_ok: s.cholesky_ok,
        n_blocks: v.n_blocks,
        diagnostics,
    })
}

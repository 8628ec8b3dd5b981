//! Problem instances: the finite environment state space, the residual kernel,
//! the deterministic kernel `q`, and the analytic gates on `(d, kappa, epsilon)`.
//!
//! Moves are indexed `0 = stay`, `2c + 1 = +e_c`, `2c + 2 = -e_c` for the
//! zero-based coordinate `c`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for exact algebraic identities.
pub const EXACT_TOL: f64 = 1e-12;
/// Tolerance for linear-solve residuals.
pub const SOLVE_TOL: f64 = 1e-10;

/// Number of moves in `d` dimensions.
pub fn n_moves(d: usize) -> usize {
    2 * d + 1
}

/// Displacement of move `index`: `None` for stay, else `(coordinate, +1 | -1)`.
#[inline]
pub fn move_displacement(index: usize) -> Option<(usize, i64)> {
    if index == 0 {
        None
    } else {
        let c = (index - 1) / 2;
        Some((c, if index % 2 == 1 { 1 } else { -1 }))
    }
}

/// A probability vector over the `2d + 1` nearest-neighbour moves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocalLaw(Vec<f64>);

impl LocalLaw {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 3 || probs.len().is_multiple_of(2) {
            return Err(Error::InvalidModel(format!(
                "local law must have 2d+1 entries, got {}",
                probs.len()
            )));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::InvalidModel(format!(
                "local law entry {i} is {p}, must be a finite non-negative number"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > EXACT_TOL {
            return Err(Error::InvalidModel(format!(
                "local law sums to {sum}, not 1"
            )));
        }
        Ok(LocalLaw(probs))
    }

    pub fn dimension(&self) -> usize {
        (self.0.len() - 1) / 2
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    /// First moment `sum_y y * p(y)`.
    pub fn drift(&self) -> Vec<f64> {
        (0..self.dimension())
            .map(|c| self.0[2 * c + 1] - self.0[2 * c + 2])
            .collect()
    }

    /// Second-moment matrix `sum_y y y^T p(y)` (diagonal for nearest-neighbour moves).
    pub fn second_moment(&self) -> Vec<Vec<f64>> {
        let d = self.dimension();
        let mut m = vec![vec![0.0; d]; d];
        for (c, row) in m.iter_mut().enumerate() {
            row[c] = self.0[2 * c + 1] + self.0[2 * c + 2];
        }
        m
    }
}

/// Row-stochastic square matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    n: usize,
    data: Vec<f64>,
}

impl StochasticMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidModel("empty matrix".into()));
        }
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidModel(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            check_probability_vector(row, &format!("row {i}"))?;
            data.extend_from_slice(row);
        }
        Ok(StochasticMatrix { n, data })
    }

    pub(crate) fn from_raw(n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        StochasticMatrix { n, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        StochasticMatrix { n, data }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn mul(&self, other: &StochasticMatrix) -> StochasticMatrix {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    data[i * n + j] += a * other.data[k * n + j];
                }
            }
            // keep rows on the simplex; rounding otherwise compounds under repeated squaring
            let row = &mut data[i * n..(i + 1) * n];
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
        StochasticMatrix { n, data }
    }

    /// Row vector times matrix.
    pub fn left_apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for j in 0..n {
                out[j] += vi * self.data[i * n + j];
            }
        }
        out
    }

    /// Largest deviation of a row sum from 1.
    pub fn row_sum_error(&self) -> f64 {
        (0..self.n)
            .map(|i| (self.row(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn check_probability_vector(v: &[f64], what: &str) -> Result<()> {
    if let Some((j, p)) = v.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
        return Err(Error::InvalidModel(format!(
            "{what}: entry {j} is {p}, must be finite and non-negative"
        )));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > EXACT_TOL {
        return Err(Error::InvalidModel(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

fn stationarity_residual(pi: &[f64], k: &StochasticMatrix) -> f64 {
    k.left_apply(pi)
        .iter()
        .zip(pi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Solves `pi K = pi`, `sum pi = 1` by LU on the transposed system with the
/// last balance equation replaced by the normalisation.
pub fn stationary_distribution(k: &StochasticMatrix) -> Result<Vec<f64>> {
    let n = k.size();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = k.get(j, i) - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidModel("stationary distribution is not unique".into()))?;
    let pi: Vec<f64> = pi.iter().map(|&p| if p.abs() < 1e-15 { 0.0 } else { p }).collect();
    if pi.iter().any(|&p| p < -SOLVE_TOL) || stationarity_residual(&pi, k) > SOLVE_TOL {
        return Err(Error::InvalidModel(
            "stationary distribution is not unique".into(),
        ));
    }
    Ok(pi.into_iter().map(|p| p.max(0.0)).collect())
}

/// `K = kappa * 1 pi + (1 - kappa) * K~`.
pub fn build_k(kappa: f64, pi: &[f64], ktilde: &StochasticMatrix) -> Result<StochasticMatrix> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::Domain(format!("kappa = {kappa} outside [0, 1]")));
    }
    let n = ktilde.size();
    if pi.len() != n {
        return Err(Error::InvalidModel(format!(
            "pi has {} entries, kernel has {n} states",
            pi.len()
        )));
    }
    check_probability_vector(pi, "pi")?;
    if ktilde.row_sum_error() > EXACT_TOL {
        let bad = (0..n)
            .find(|&i| (ktilde.row(i).iter().sum::<f64>() - 1.0).abs() > EXACT_TOL)
            .unwrap_or(0);
        return Err(Error::InvalidModel(format!("ktilde row {bad} is not stochastic")));
    }
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            data.push(kappa * pi[j] + (1.0 - kappa) * ktilde.get(i, j));
        }
    }
    Ok(StochasticMatrix::from_raw(n, data))
}

/// On-disk model description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub dimension: usize,
    pub kappa: f64,
    pub epsilon: f64,
    pub q: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub ktilde: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<f64>>,
}

/// A structurally valid problem instance. Assumptions are checked separately
/// by [`validate_assumptions`].
#[derive(Debug, Clone)]
pub struct ModelSpec {
    d: usize,
    states: Vec<LocalLaw>,
    ktilde: StochasticMatrix,
    pi: Vec<f64>,
    kappa: f64,
    epsilon: f64,
    q: LocalLaw,
}

impl ModelSpec {
    pub fn new(
        d: usize,
        states: Vec<LocalLaw>,
        ktilde: StochasticMatrix,
        pi: Option<Vec<f64>>,
        kappa: f64,
        epsilon: f64,
        q: LocalLaw,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidModel("dimension must be at least 1".into()));
        }
        if !(kappa > 0.0 && kappa <= 1.0) {
            return Err(Error::InvalidModel(format!("kappa = {kappa} outside (0, 1]")));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidModel(format!(
                "epsilon = {epsilon} outside (0, 1)"
            )));
        }
        if q.dimension() != d {
            return Err(Error::InvalidModel(format!(
                "q has {} entries, expected {}",
                q.probs().len(),
                n_moves(d)
            )));
        }
        if states.is_empty() {
            return Err(Error::InvalidModel("state space is empty".into()));
        }
        if let Some(i) = states.iter().position(|s| s.dimension() != d) {
            return Err(Error::InvalidModel(format!(
                "state {i} has {} entries, expected {}",
                states[i].probs().len(),
                n_moves(d)
            )));
        }
        if ktilde.size() != states.len() {
            return Err(Error::InvalidModel(format!(
                "ktilde is {0}x{0} but there are {1} states",
                ktilde.size(),
                states.len()
            )));
        }
        let pi = match pi {
            Some(pi) => {
                if pi.len() != states.len() {
                    return Err(Error::InvalidModel(format!(
                        "pi has {} entries, expected {}",
                        pi.len(),
                        states.len()
                    )));
                }
                check_probability_vector(&pi, "pi")?;
                pi
            }
            None => stationary_distribution(&ktilde)?,
        };
        let residual = stationarity_residual(&pi, &ktilde);
        if residual > SOLVE_TOL {
            return Err(Error::InvalidModel(format!(
                "pi is not stationary for ktilde (residual {residual:e})"
            )));
        }
        Ok(ModelSpec {
            d,
            states,
            ktilde,
            pi,
            kappa,
            epsilon,
            q,
        })
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        let q = LocalLaw::new(file.q).map_err(|e| prefix(e, "q"))?;
        let states = file
            .states
            .into_iter()
            .enumerate()
            .map(|(i, s)| LocalLaw::new(s).map_err(|e| prefix(e, &format!("states[{i}]"))))
            .collect::<Result<Vec<_>>>()?;
        let ktilde = StochasticMatrix::from_rows(&file.ktilde).map_err(|e| prefix(e, "ktilde"))?;
        ModelSpec::new(
            file.dimension,
            states,
            ktilde,
            file.pi,
            file.kappa,
            file.epsilon,
            q,
        )
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, ModelLoadError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelLoadError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        ModelSpec::from_file(file).map_err(ModelLoadError::Model)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            dimension: self.d,
            kappa: self.kappa,
            epsilon: self.epsilon,
            q: self.q.probs().to_vec(),
            states: self.states.iter().map(|s| s.probs().to_vec()).collect(),
            ktilde: self.ktilde.rows(),
            pi: Some(self.pi.clone()),
        }
    }

    pub fn dimension(&self) -> usize {
        self.d
    }
    pub fn states(&self) -> &[LocalLaw] {
        &self.states
    }
    pub fn n_states(&self) -> usize {
        self.states.len()
    }
    pub fn ktilde(&self) -> &StochasticMatrix {
        &self.ktilde
    }
    pub fn pi(&self) -> &[f64] {
        &self.pi
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn q(&self) -> &LocalLaw {
        &self.q
    }

    /// The full environment kernel `K`.
    pub fn k(&self) -> StochasticMatrix {
        build_k(self.kappa, &self.pi, &self.ktilde).expect("validated at construction")
    }

    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        ModelSpec::new(
            self.d,
            self.states.clone(),
            self.ktilde.clone(),
            Some(self.pi.clone()),
            kappa,
            self.epsilon,
            self.q.clone(),
        )
    }

    /// Returns `self` if every assumption passes, otherwise an error naming the failures.
    pub fn ensure_valid(&self) -> Result<&Self> {
        let report = validate_assumptions(self);
        if report.all_pass {
            Ok(self)
        } else {
            Err(Error::InvalidModel(format!(
                "assumptions failed: {}",
                report.failures().join(", ")
            )))
        }
    }
}

fn prefix(e: Error, what: &str) -> Error {
    match e {
        Error::InvalidModel(m) => Error::InvalidModel(format!("{what}: {m}")),
        other => other,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelLoadError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Model(Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub pass: bool,
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub a1_minorization: CheckResult,
    pub a2_ellipticity: CheckResult,
    pub a3_kappa_epsilon: CheckResult,
    pub q_nondegenerate: CheckResult,
    pub stationarity: CheckResult,
    pub all_pass: bool,
}

impl ValidationReport {
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.a1_minorization.pass {
            out.push("A1");
        }
        if !self.a2_ellipticity.pass {
            out.push("A2");
        }
        if !self.a3_kappa_epsilon.pass {
            out.push("A3");
        }
        if !self.q_nondegenerate.pass {
            out.push("q-nondegenerate");
        }
        if !self.stationarity.pass {
            out.push("stationarity");
        }
        out
    }
}

pub fn validate_assumptions(spec: &ModelSpec) -> ValidationReport {
    let k = spec.k();
    let n = spec.n_states();
    let mut a1 = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            a1 = a1.min(k.get(i, j) - spec.kappa * spec.pi[j]);
        }
    }
    let a1_minorization = CheckResult {
        pass: a1 >= -EXACT_TOL,
        margin: a1,
        detail: "min_ij K_ij - kappa*pi_j".into(),
    };

    let (mut a2, mut worst) = (f64::INFINITY, (0, 0));
    for (si, s) in spec.states.iter().enumerate() {
        for (y, (&sp, &qp)) in s.probs().iter().zip(spec.q.probs()).enumerate() {
            let m = sp - spec.epsilon * qp;
            if m < a2 {
                a2 = m;
                worst = (si, y);
            }
        }
    }
    let a2_ellipticity = CheckResult {
        pass: a2 >= -EXACT_TOL,
        margin: a2,
        detail: format!(
            "min over states/moves of s(y) - eps*q(y), attained at state {} move {}",
            worst.0, worst.1
        ),
    };

    let a3 = spec.kappa + spec.epsilon * spec.epsilon - 1.0;
    let a3_kappa_epsilon = CheckResult {
        pass: a3 > 0.0,
        margin: a3,
        detail: "kappa + eps^2 - 1".into(),
    };

    let qn = q_nondegenerate(&spec.q);
    let q_nondegenerate_check = CheckResult {
        pass: qn,
        margin: 1.0 - characteristic_modulus_scan(&spec.q, 16),
        detail: "q(stay) > 0 and q(+e_i) + q(-e_i) > 0 for all i; margin is 1 - max |phi| on a 16^d torus grid"
            .into(),
    };

    let st = stationarity_residual(&spec.pi, &spec.ktilde)
        .max(stationarity_residual(&spec.pi, &k));
    let stationarity = CheckResult {
        pass: st <= SOLVE_TOL,
        margin: SOLVE_TOL - st,
        detail: format!("max(|pi K~ - pi|, |pi K - pi|) = {st:e}"),
    };

    let all_pass = a1_minorization.pass
        && a2_ellipticity.pass
        && a3_kappa_epsilon.pass
        && q_nondegenerate_check.pass
        && stationarity.pass;
    ValidationReport {
        a1_minorization,
        a2_ellipticity,
        a3_kappa_epsilon,
        q_nondegenerate: q_nondegenerate_check,
        stationarity,
        all_pass,
    }
}

/// Structural aperiodicity criterion: mass on stay and on every axis.
pub fn q_nondegenerate(q: &LocalLaw) -> bool {
    let p = q.probs();
    p[0] > 0.0 && (0..q.dimension()).all(|c| p[2 * c + 1] + p[2 * c + 2] > 0.0)
}

/// `|sum_y q(y) e^{i l.y}|` at a torus point `l`.
pub fn characteristic_modulus(q: &LocalLaw, l: &[f64]) -> f64 {
    let p = q.probs();
    let (mut re, mut im) = (p[0], 0.0);
    for (c, &lc) in l.iter().enumerate() {
        let (s, co) = lc.sin_cos();
        re += (p[2 * c + 1] + p[2 * c + 2]) * co;
        im += (p[2 * c + 1] - p[2 * c + 2]) * s;
    }
    re.hypot(im)
}

/// Maximum of the characteristic-function modulus over the grid
/// `{-pi + 2 pi k / m}^d` minus the origin. Diagnostic only; cost is `m^d`.
pub fn characteristic_modulus_scan(q: &LocalLaw, per_axis: usize) -> f64 {
    let d = q.dimension();
    let per_axis = per_axis.max(2);
    let total = per_axis.checked_pow(d as u32).unwrap_or(usize::MAX).min(1 << 20);
    let step = 2.0 * std::f64::consts::PI / per_axis as f64;
    let mut l = vec![0.0; d];
    let mut best: f64 = 0.0;
    for idx in 0..total {
        let mut r = idx;
        for lc in l.iter_mut() {
            *lc = -std::f64::consts::PI + step * (r % per_axis) as f64 + step;
            r /= per_axis;
        }
        if l.iter().all(|&x| x.abs() < 1e-12) {
            continue;
        }
        best = best.max(characteristic_modulus(q, &l));
    }
    best
}

/// `log(1 - kappa) / log(eps)`.
pub fn gamma_exponent(kappa: f64, epsilon: f64) -> Result<f64> {
    if kappa == 1.0 {
        return Err(Error::InfiniteExponent);
    }
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::Domain(format!("kappa = {kappa} outside (0, 1)")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon = {epsilon} outside (0, 1)")));
    }
    Ok((1.0 - kappa).ln() / epsilon.ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchedCondition {
    pub holds: bool,
    pub dimension: usize,
    pub gamma: f64,
    /// `gamma > 6`.
    pub gamma_above_six: bool,
    /// `2 gamma (d-1) / (gamma (d-3) - 2 (d-1))`, absent when the denominator is non-positive.
    pub term_ratio: Option<f64>,
    /// `8 (d-1) / (gamma (d-3))`, absent when `d <= 3`.
    pub term_tail: Option<f64>,
    /// Right-hand side of the dimension inequality.
    pub rhs: Option<f64>,
}

pub fn quenched_condition(d: usize, kappa: f64, epsilon: f64) -> Result<QuenchedCondition> {
    if d == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    let gamma = gamma_exponent(kappa, epsilon)?;
    let df = d as f64;
    let denom = gamma * (df - 3.0) - 2.0 * (df - 1.0);
    let term_ratio = (denom > 0.0).then(|| 2.0 * gamma * (df - 1.0) / denom);
    let term_tail = (df > 3.0).then(|| 8.0 * (df - 1.0) / (gamma * (df - 3.0)));
    let gamma_above_six = gamma > 6.0;
    let rhs = match (term_ratio, term_tail, gamma_above_six) {
        (Some(a), Some(b), true) => Some(1.0 + (4.0 + a + b) / (1.0 - 6.0 / gamma)),
        _ => None,
    };
    Ok(QuenchedCondition {
        holds: rhs.is_some_and(|r| df > r),
        dimension: d,
        gamma,
        gamma_above_six,
        term_ratio,
        term_tail,
        rhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuenchedConstants {
    pub theta: f64,
    pub theta_prime: f64,
    pub theta_double_prime: f64,
    pub mu: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl QuenchedConstants {
    /// Names of the violated inequalities, in system order.
    pub fn violations(&self, d: usize) -> Vec<&'static str> {
        let df = d as f64;
        let QuenchedConstants {
            theta: t,
            theta_prime: t1,
            theta_double_prime: t2,
            mu,
            alpha: a,
            gamma: g,
        } = *self;
        let checks: [(&'static str, bool); 8] = [
            ("0 < theta < 1", 0.0 < t && t < 1.0),
            ("2/gamma < theta' < theta/2", 2.0 / g < t1 && t1 < t / 2.0),
            ("theta > 2(theta' + 1/(d-1))", t > 2.0 * (t1 + 1.0 / (df - 1.0))),
            ("theta'' < theta'", t2 < t1),
            ("(theta' - theta'') gamma > 1", (t1 - t2) * g > 1.0),
            ("0 < mu < 1/2", 0.0 < mu && mu < 0.5),
            (
                "1/2 > alpha > (1/theta' + 1)/gamma",
                a < 0.5 && a > (1.0 / t1 + 1.0) / g,
            ),
            (
                "theta''(d - 5 - 2 alpha d + 2 alpha) > 1",
                t2 * (df - 5.0 - 2.0 * a * df + 2.0 * a) > 1.0,
            ),
        ];
        checks
            .into_iter()
            .filter(|(_, ok)| !ok)
            .map(|(name, _)| name)
            .collect()
    }
}

/// Finds exponents satisfying the quenched constants system.
///
/// Starts from the boundary point `theta' = (d-3)/(2(d-1))`,
/// `theta'' = theta' - 1/gamma`, `alpha = (1 + 1/theta')/gamma`, `theta = 1`
/// and moves inward by `delta` on a geometric grid `10^-1 .. 10^-14`.
/// Every constraint except the last is tight at that point, and the last
/// constraint's left side is maximised there, so if no grid point works
/// the system has no solution at all.
pub fn find_constants(d: usize, gamma: f64) -> Result<QuenchedConstants> {
    if !(gamma > 6.0) {
        return Err(Error::Infeasible {
            constraint: format!("gamma = {gamma} <= 6"),
        });
    }
    if d <= 3 {
        return Err(Error::Infeasible {
            constraint: format!("d = {d} <= 3 leaves no room for theta'"),
        });
    }
    let df = d as f64;
    let theta_prime0 = (df - 3.0) / (2.0 * (df - 1.0));
    let mut last = "";
    for k in 1..=14 {
        let delta = 10f64.powi(-k);
        let theta_prime = theta_prime0 - delta;
        let candidate = QuenchedConstants {
            theta: 1.0 - delta,
            theta_prime,
            theta_double_prime: theta_prime - 1.0 / gamma - delta,
            mu: 0.25,
            alpha: (1.0 / theta_prime + 1.0) / gamma + delta,
            gamma,
        };
        match candidate.violations(d).first() {
            None => return Ok(candidate),
            Some(v) => last = v,
        }
    }
    Err(Error::Infeasible {
        constraint: last.to_string(),
    })
}

/// Mean local law `sum_k pi_k s_k` and its drift.
pub fn mean_local_law(spec: &ModelSpec) -> (LocalLaw, Vec<f64>) {
    let mut m = vec![0.0; n_moves(spec.d)];
    for (s, &w) in spec.states.iter().zip(&spec.pi) {
        for (acc, &p) in m.iter_mut().zip(s.probs()) {
            *acc += w * p;
        }
    }
    let law = LocalLaw(m);
    let drift = law.drift();
    (law, drift)
}

//! Correlation analysis and lasso-penalized logistic regression.
//!
//! The lasso objective is `(1/n) Σ log-loss + λ Σ |β_j|` with an unpenalized
//! intercept, minimized by iteratively reweighted least squares where each
//! quadratic subproblem is solved by cyclic coordinate descent with
//! soft-thresholding.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::{Flag, PatientRecord, Sex};

/// Binary predictors after `age`, in column order.
pub const FLAG_PREDICTORS: [Flag; 11] = [
    Flag::Obesity,
    Flag::Diabetes,
    Flag::Copd,
    Flag::Asthma,
    Flag::Immunosuppression,
    Flag::Hypertension,
    Flag::Cardiovascular,
    Flag::ChronicKidney,
    Flag::OtherComorbidity,
    Flag::Pneumonia,
    Flag::Intubated,
];

pub const OUTCOME: &str = "outcome";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SexFilter {
    Male,
    Female,
    Both,
}

impl SexFilter {
    fn keeps(self, sex: Sex) -> bool {
        match self {
            SexFilter::Male => sex == Sex::Male,
            SexFilter::Female => sex == Sex::Female,
            SexFilter::Both => true,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SexFilter::Male => "male",
            SexFilter::Female => "female",
            SexFilter::Both => "both",
        }
    }
}

impl std::str::FromStr for SexFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "male" => Ok(SexFilter::Male),
            "female" => Ok(SexFilter::Female),
            "both" => Ok(SexFilter::Both),
            _ => Err(Error::Config(format!("unknown sex filter {s:?}"))),
        }
    }
}

/// Predictor matrix with a 0/1 outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub names: Vec<String>,
    pub x: Array2<f64>,
    pub y: Array1<f64>,
}

impl DesignMatrix {
    pub fn new(names: Vec<String>, x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        if x.ncols() != names.len() || x.nrows() != y.len() {
            return Err(Error::Contract(format!(
                "design shape {}x{} does not match {} names and {} outcomes",
                x.nrows(),
                x.ncols(),
                names.len(),
                y.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Contract("design matrix has non-finite entries".into()));
        }
        Ok(DesignMatrix { names, x, y })
    }

    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn cols(&self) -> usize {
        self.x.ncols()
    }

    fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        DesignMatrix {
            names: self.names.clone(),
            x: self.x.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
        }
    }
}

pub fn predictor_names(include_intubated: bool) -> Vec<String> {
    std::iter::once("age")
        .chain(
            FLAG_PREDICTORS
                .iter()
                .filter(|f| include_intubated || **f != Flag::Intubated)
                .map(|f| f.name()),
        )
        .map(String::from)
        .collect()
}

pub fn build_design(records: &[PatientRecord], sex: SexFilter, include_intubated: bool) -> Result<DesignMatrix> {
    let flags: Vec<Flag> = FLAG_PREDICTORS
        .iter()
        .copied()
        .filter(|f| include_intubated || *f != Flag::Intubated)
        .collect();
    let kept: Vec<&PatientRecord> = records.iter().filter(|r| sex.keeps(r.sex)).collect();
    if kept.is_empty() {
        return Err(Error::Model(format!("no records left after sex filter {}", sex.name())));
    }
    let p = flags.len() + 1;
    let mut x = Array2::zeros((kept.len(), p));
    let mut y = Array1::zeros(kept.len());
    for (i, r) in kept.iter().enumerate() {
        x[[i, 0]] = r.age as f64;
        for (j, f) in flags.iter().enumerate() {
            x[[i, j + 1]] = if r.has(*f) { 1.0 } else { 0.0 };
        }
        y[i] = if r.is_deceased() { 1.0 } else { 0.0 };
    }
    DesignMatrix::new(predictor_names(include_intubated), x, y)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Columns left out for having zero variance.
    pub excluded: Vec<String>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        Some(self.values[i][j])
    }
}

/// Running means and co-moments (Welford), one pass over the rows.
struct CoMoments {
    n: f64,
    mean: Vec<f64>,
    c: Vec<Vec<f64>>,
}

impl CoMoments {
    fn new(p: usize) -> Self {
        CoMoments {
            n: 0.0,
            mean: vec![0.0; p],
            c: vec![vec![0.0; p]; p],
        }
    }

    fn push(&mut self, row: &[f64]) {
        self.n += 1.0;
        let before: Vec<f64> = row.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&before) {
            *m += d / self.n;
        }
        for i in 0..row.len() {
            let after_i = row[i] - self.mean[i];
            for (c, b) in self.c[i].iter_mut().zip(&before).skip(i) {
                *c += after_i * b;
            }
        }
    }
}

/// Pearson correlations over the predictors and the outcome (last column).
pub fn correlation_matrix(d: &DesignMatrix) -> Result<CorrelationMatrix> {
    let p = d.cols() + 1;
    let mut acc = CoMoments::new(p);
    let mut row = vec![0.0; p];
    for (xi, yi) in d.x.outer_iter().zip(d.y.iter()) {
        for (slot, v) in row.iter_mut().zip(xi.iter()) {
            *slot = *v;
        }
        row[p - 1] = *yi;
        acc.push(&row);
    }
    let all_names: Vec<String> = d.names.iter().cloned().chain([OUTCOME.to_string()]).collect();
    let (mut keep, mut excluded) = (Vec::new(), Vec::new());
    for (i, name) in all_names.iter().enumerate() {
        if acc.c[i][i] > 0.0 {
            keep.push(i);
        } else {
            log::warn!("excluding zero-variance column {name} from correlations");
            excluded.push(name.clone());
        }
    }
    let k = keep.len();
    let mut values = vec![vec![0.0; k]; k];
    for a in 0..k {
        values[a][a] = 1.0;
        for b in a + 1..k {
            let (i, j) = (keep[a], keep[b]);
            let r = (acc.c[i][j] / (acc.c[i][i].sqrt() * acc.c[j][j].sqrt())).clamp(-1.0, 1.0);
            values[a][b] = r;
            values[b][a] = r;
        }
    }
    Ok(CorrelationMatrix {
        names: keep.iter().map(|i| all_names[*i].clone()).collect(),
        values,
        excluded,
    })
}

/// Seeded split, stratified by outcome. Each class contributes its share of
/// test rows by largest remainder, so class proportions hold within one row.
pub fn split(d: &DesignMatrix, test_fraction: f64, seed: u64) -> Result<(DesignMatrix, DesignMatrix)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Contract(format!("test fraction {test_fraction} is not in (0, 1)")));
    }
    let n = d.rows();
    let classes: [Vec<usize>; 2] = [
        (0..n).filter(|i| d.y[*i] < 0.5).collect(),
        (0..n).filter(|i| d.y[*i] >= 0.5).collect(),
    ];
    let total = (n as f64 * test_fraction).round() as usize;
    let exact: Vec<f64> = classes.iter().map(|c| c.len() as f64 * test_fraction).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = vec![0, 1];
    order.sort_by(|a, b| (exact[*b] - exact[*b].floor()).total_cmp(&(exact[*a] - exact[*a].floor())).then(a.cmp(b)));
    let mut left = total.saturating_sub(quota.iter().sum());
    for c in order.iter().cycle().take(4) {
        if left == 0 {
            break;
        }
        if quota[*c] < classes[*c].len() {
            quota[*c] += 1;
            left -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_rows = Vec::new();
    let mut train_rows = Vec::new();
    for (members, q) in classes.iter().zip(&quota) {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        test_rows.extend_from_slice(&shuffled[..*q]);
        train_rows.extend_from_slice(&shuffled[*q..]);
    }
    if test_rows.is_empty() || train_rows.is_empty() {
        return Err(Error::Model(format!(
            "split of {n} rows at fraction {test_fraction} leaves one side empty"
        )));
    }
    test_rows.sort_unstable();
    train_rows.sort_unstable();
    Ok((d.select_rows(&train_rows), d.select_rows(&test_rows)))
}

/// Column centers and scales (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    pub fn fit(d: &DesignMatrix) -> Result<Self> {
        let n = d.rows() as f64;
        let mut means = Vec::with_capacity(d.cols());
        let mut scales = Vec::with_capacity(d.cols());
        for (j, col) in d.x.axis_iter(Axis(1)).enumerate() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if var <= 0.0 {
                return Err(Error::Model(format!("column {} has zero variance", d.names[j])));
            }
            means.push(mean);
            scales.push(var.sqrt());
        }
        Ok(Standardization { means, scales })
    }

    pub fn apply(&self, d: &DesignMatrix) -> DesignMatrix {
        let mut x = d.x.clone();
        for (j, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| (v - self.means[j]) / self.scales[j]);
        }
        DesignMatrix {
            names: d.names.clone(),
            x,
            y: d.y.clone(),
        }
    }

    pub fn invert(&self, d: &DesignMatrix) -> DesignMatrix {
        let mut x = d.x.clone();
        for (j, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| v * self.scales[j] + self.means[j]);
        }
        DesignMatrix {
            names: d.names.clone(),
            x,
            y: d.y.clone(),
        }
    }

    /// Maps a fit on standardized columns back to original units.
    pub fn original_coefficients(&self, intercept: f64, beta: &[f64]) -> (f64, Vec<f64>) {
        let coefs: Vec<f64> = beta.iter().zip(&self.scales).map(|(b, s)| b / s).collect();
        let shift: f64 = coefs.iter().zip(&self.means).map(|(c, m)| c * m).sum();
        (intercept - shift, coefs)
    }
}

/// Standardizes both sides with the training parameters.
pub fn standardize(train: &DesignMatrix, test: &DesignMatrix) -> Result<(DesignMatrix, DesignMatrix, Standardization)> {
    let params = Standardization::fit(train)?;
    Ok((params.apply(train), params.apply(test), params))
}

pub fn unstandardize(d: &DesignMatrix, params: &Standardization) -> DesignMatrix {
    params.invert(d)
}

/// Smallest λ whose lasso solution has every penalized coefficient at zero.
pub fn lambda_max(d: &DesignMatrix) -> f64 {
    let n = d.rows() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let ybar = d.y.sum() / n;
    let centered = d.y.mapv(|v| v - ybar);
    d.x.axis_iter(Axis(1))
        .map(|col| (col.dot(&centered) / n).abs())
        .fold(0.0, f64::max)
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Mean log-loss and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    pub d_intercept: f64,
    pub d_beta: Array1<f64>,
}

pub fn log_loss_gradient(d: &DesignMatrix, intercept: f64, beta: ArrayView1<'_, f64>) -> LossGradient {
    let n = d.rows() as f64;
    let eta = d.x.dot(&beta) + intercept;
    let loss = eta.iter().zip(d.y.iter()).map(|(e, y)| softplus(*e) - y * e).sum::<f64>() / n;
    let resid: Array1<f64> = eta.iter().zip(d.y.iter()).map(|(e, y)| sigmoid(*e) - y).collect();
    LossGradient {
        loss,
        d_intercept: resid.sum() / n,
        d_beta: d.x.t().dot(&resid) / n,
    }
}

fn penalized_objective(d: &DesignMatrix, intercept: f64, beta: &Array1<f64>, lambda: f64) -> f64 {
    let n = d.rows() as f64;
    let eta = d.x.dot(beta) + intercept;
    let loss = eta.iter().zip(d.y.iter()).map(|(e, y)| softplus(*e) - y * e).sum::<f64>() / n;
    loss + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

fn soft_threshold(a: f64, t: f64) -> f64 {
    if a > t {
        a - t
    } else if a < -t {
        a + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LassoFit {
    pub names: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    /// Penalized objective after each outer iteration, starting point first.
    #[serde(skip)]
    pub history: Vec<f64>,
}

impl LassoFit {
    pub fn l1_norm(&self) -> f64 {
        self.coefficients.iter().map(|b| b.abs()).sum()
    }

    pub fn predict(&self, row: ArrayView1<'_, f64>) -> f64 {
        sigmoid(self.intercept + row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum::<f64>())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LassoOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            tol: 1e-7,
            max_iter: 10_000,
        }
    }
}

const MIN_WEIGHT: f64 = 1e-5;

/// Fits the lasso at one λ, optionally starting from a previous fit.
pub fn fit_lasso_logistic(
    train: &DesignMatrix,
    lambda: f64,
    opts: LassoOptions,
    warm: Option<&LassoFit>,
) -> Result<LassoFit> {
    if !(lambda >= 0.0) {
        return Err(Error::Contract(format!("lambda must be non-negative, got {lambda}")));
    }
    let (n, p) = (train.rows(), train.cols());
    if n == 0 {
        return Err(Error::Model("cannot fit on zero rows".into()));
    }
    let nf = n as f64;
    let ybar = train.y.sum() / nf;
    let null_intercept = (ybar / (1.0 - ybar)).ln();

    if lambda >= lambda_max(train) {
        let beta = Array1::zeros(p);
        let objective = penalized_objective(train, null_intercept, &beta, lambda);
        return Ok(LassoFit {
            names: train.names.clone(),
            intercept: null_intercept,
            coefficients: vec![0.0; p],
            lambda,
            converged: true,
            iterations: 0,
            objective,
            history: vec![objective],
        });
    }
    if !null_intercept.is_finite() {
        return Err(Error::Model("outcome is constant; only the null model exists".into()));
    }

    let (mut b0, mut beta) = match warm {
        Some(w) if w.coefficients.len() == p => (w.intercept, Array1::from(w.coefficients.clone())),
        _ => (null_intercept, Array1::zeros(p)),
    };
    let mut obj = penalized_objective(train, b0, &beta, lambda);
    let mut history = vec![obj];
    let mut converged = false;
    let mut iterations = 0;
    let inner_tol = opts.tol * 0.1;
    let inner_cap = 10_000;
    let cols: Vec<ArrayView1<f64>> = train.x.axis_iter(Axis(1)).collect();

    while iterations < opts.max_iter {
        iterations += 1;
        let eta = train.x.dot(&beta) + b0;
        let prob = eta.mapv(sigmoid);
        let w = prob.mapv(|q| (q * (1.0 - q)).max(MIN_WEIGHT));
        // weighted working residual w·(z − η) = y − p
        let mut u: Array1<f64> = &train.y - &prob;
        let wsum = w.sum();
        let xwx: Vec<f64> = cols.iter().map(|c| c.iter().zip(w.iter()).map(|(x, w)| w * x * x).sum::<f64>() / nf).collect();

        let (mut nb0, mut nbeta) = (b0, beta.clone());
        for _ in 0..inner_cap {
            let mut delta_max: f64 = 0.0;
            let shift = u.sum() / wsum;
            if shift != 0.0 {
                nb0 += shift;
                u.zip_mut_with(&w, |ui, wi| *ui -= wi * shift);
                delta_max = delta_max.max(shift.abs());
            }
            for j in 0..p {
                if xwx[j] <= 0.0 {
                    continue;
                }
                let grad = cols[j].dot(&u) / nf;
                let new = soft_threshold(grad + xwx[j] * nbeta[j], lambda) / xwx[j];
                let step = new - nbeta[j];
                if step != 0.0 {
                    ndarray::Zip::from(&mut u).and(&w).and(&cols[j]).for_each(|ui, wi, xi| *ui -= wi * xi * step);
                    nbeta[j] = new;
                    delta_max = delta_max.max(step.abs());
                }
            }
            if delta_max < inner_tol {
                break;
            }
        }

        // step-halving keeps the true objective from increasing
        let (db0, dbeta) = (nb0 - b0, &nbeta - &beta);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cb0 = b0 + t * db0;
            let cbeta = &beta + &(&dbeta * t);
            let cobj = penalized_objective(train, cb0, &cbeta, lambda);
            if cobj <= obj {
                accepted = Some((cb0, cbeta, cobj, t));
                break;
            }
            t *= 0.5;
        }
        let Some((cb0, cbeta, cobj, t)) = accepted else {
            converged = true;
            history.push(obj);
            break;
        };
        let change = (t * db0.abs()).max(dbeta.iter().map(|v| (t * v).abs()).fold(0.0, f64::max));
        b0 = cb0;
        beta = cbeta;
        obj = cobj;
        history.push(obj);
        if change < opts.tol {
            converged = true;
            break;
        }
    }

    Ok(LassoFit {
        names: train.names.clone(),
        intercept: b0,
        coefficients: beta.to_vec(),
        lambda,
        converged,
        iterations,
        objective: obj,
        history,
    })
}

/// Largest KKT violation of a fit, in units of the gradient.
pub fn kkt_violation(d: &DesignMatrix, fit: &LassoFit) -> f64 {
    let g = log_loss_gradient(d, fit.intercept, ArrayView1::from(&fit.coefficients));
    let mut worst = g.d_intercept.abs();
    for (gj, bj) in g.d_beta.iter().zip(&fit.coefficients) {
        // gradient of the loss is −(1/n) xᵀ(y − p̂)
        let score = -gj;
        let v = if *bj == 0.0 {
            (score.abs() - fit.lambda).max(0.0)
        } else {
            (score - fit.lambda * bj.signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// `count` log-spaced values from `hi` down to `hi / ratio`.
pub fn lambda_grid(hi: f64, count: usize, ratio: f64) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![hi],
        _ => (0..count)
            .map(|i| hi * (1.0 / ratio).powf(i as f64 / (count - 1) as f64))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub log_loss: f64,
    pub accuracy: f64,
    pub true_positive: u64,
    pub false_positive: u64,
    pub true_negative: u64,
    pub false_negative: u64,
}

pub fn evaluate(fit: &LassoFit, test: &DesignMatrix) -> Evaluation {
    let n = test.rows();
    let mut e = Evaluation {
        log_loss: 0.0,
        accuracy: 0.0,
        true_positive: 0,
        false_positive: 0,
        true_negative: 0,
        false_negative: 0,
    };
    if n == 0 {
        return e;
    }
    let mut loss = 0.0;
    for (row, y) in test.x.outer_iter().zip(test.y.iter()) {
        let eta = fit.intercept + row.iter().zip(&fit.coefficients).map(|(x, b)| x * b).sum::<f64>();
        loss += softplus(eta) - y * eta;
        let positive = eta >= 0.0;
        match (positive, *y >= 0.5) {
            (true, true) => e.true_positive += 1,
            (true, false) => e.false_positive += 1,
            (false, false) => e.true_negative += 1,
            (false, true) => e.false_negative += 1,
        }
    }
    e.log_loss = loss / n as f64;
    e.accuracy = (e.true_positive + e.true_negative) as f64 / n as f64;
    e
}

/// Predictors with `|β| > threshold`, largest magnitude first.
pub fn select_features(fit: &LassoFit, threshold: f64) -> Vec<String> {
    let mut picked: Vec<(usize, f64)> = fit
        .coefficients
        .iter()
        .enumerate()
        .filter(|(_, b)| b.abs() > threshold)
        .map(|(j, b)| (j, b.abs()))
        .collect();
    picked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    picked.into_iter().map(|(j, _)| fit.names[j].clone()).collect()
}

/// Mean test log-loss and its standard error.
pub fn test_loss(fit: &LassoFit, test: &DesignMatrix) -> (f64, f64) {
    let losses: Vec<f64> = test
        .x
        .outer_iter()
        .zip(test.y.iter())
        .map(|(row, y)| {
            let eta = fit.intercept + row.iter().zip(&fit.coefficients).map(|(x, b)| x * b).sum::<f64>();
            softplus(eta) - y * eta
        })
        .collect();
    let n = losses.len() as f64;
    if losses.is_empty() {
        return (0.0, 0.0);
    }
    let mean = losses.iter().sum::<f64>() / n;
    let var = if n > 1.0 {
        losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, (var / n).sqrt())
}

/// How a λ is picked from the grid by test log-loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// Lowest test loss.
    MinLoss,
    /// Largest λ whose test loss is within one standard error of the lowest.
    OneStandardError,
}

impl std::str::FromStr for LambdaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min_loss" => Ok(LambdaRule::MinLoss),
            "one_standard_error" | "1se" => Ok(LambdaRule::OneStandardError),
            _ => Err(Error::Config(format!("unknown lambda rule {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    pub fits: Vec<LassoFit>,
    pub test_losses: Vec<f64>,
    pub test_loss_se: Vec<f64>,
    /// Grid index of the lowest test loss.
    pub min_loss: usize,
    /// Grid index chosen by the rule.
    pub best: usize,
}

impl LassoPath {
    pub fn best_fit(&self) -> &LassoFit {
        &self.fits[self.best]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathOptions {
    pub grid_size: usize,
    /// λ_max / λ_min.
    pub ratio: f64,
    pub rule: LambdaRule,
    pub lasso: LassoOptions,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions {
            grid_size: 20,
            ratio: 1000.0,
            rule: LambdaRule::OneStandardError,
            lasso: LassoOptions::default(),
        }
    }
}

/// Fits the grid from λ_max downward with warm starts and picks a λ by test
/// log-loss under `opts.rule`. Grid points that did not converge are never
/// chosen.
pub fn lasso_path(train: &DesignMatrix, test: &DesignMatrix, opts: PathOptions) -> Result<LassoPath> {
    if opts.grid_size == 0 {
        return Err(Error::Config("lambda grid needs at least one point".into()));
    }
    let lambdas = lambda_grid(lambda_max(train), opts.grid_size, opts.ratio);
    let mut fits: Vec<LassoFit> = Vec::with_capacity(lambdas.len());
    for lambda in &lambdas {
        let fit = fit_lasso_logistic(train, *lambda, opts.lasso, fits.last())?;
        fits.push(fit);
    }
    let (test_losses, test_loss_se): (Vec<f64>, Vec<f64>) = fits.iter().map(|f| test_loss(f, test)).unzip();
    let min_loss = (0..fits.len())
        .filter(|i| fits[*i].converged)
        .min_by(|a, b| test_losses[*a].total_cmp(&test_losses[*b]).then(a.cmp(b)))
        .ok_or_else(|| Error::Model("lasso did not converge at any grid point".into()))?;
    let best = match opts.rule {
        LambdaRule::MinLoss => min_loss,
        LambdaRule::OneStandardError => {
            let limit = test_losses[min_loss] + test_loss_se[min_loss];
            (0..=min_loss)
                .find(|i| fits[*i].converged && test_losses[*i] <= limit)
                .unwrap_or(min_loss)
        }
    };
    Ok(LassoPath {
        lambdas,
        fits,
        test_losses,
        test_loss_se,
        min_loss,
        best,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub standardized: f64,
    pub original: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortReport {
    pub sex: SexFilter,
    pub rows: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub correlation: CorrelationMatrix,
    pub lambdas: Vec<f64>,
    pub test_losses: Vec<f64>,
    pub converged: Vec<bool>,
    pub chosen_lambda: f64,
    pub intercept: f64,
    pub intercept_original: f64,
    pub coefficients: Vec<Coefficient>,
    pub selected: Vec<String>,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatsOptions {
    pub test_fraction: f64,
    pub seed: u64,
    pub include_intubated: bool,
    pub selection_threshold: f64,
    pub path: PathOptions,
}

impl Default for StatsOptions {
    fn default() -> Self {
        StatsOptions {
            test_fraction: 0.2,
            seed: 2020,
            include_intubated: true,
            selection_threshold: 0.0,
            path: PathOptions::default(),
        }
    }
}

/// Correlations, split, lasso path and selection for one sex cohort.
pub fn analyze_cohort(records: &[PatientRecord], sex: SexFilter, opts: &StatsOptions) -> Result<CohortReport> {
    let design = build_design(records, sex, opts.include_intubated)?;
    let correlation = correlation_matrix(&design)?;
    let (train, test) = split(&design, opts.test_fraction, opts.seed)?;
    let (train, test, params) = standardize(&train, &test)?;
    let path = lasso_path(&train, &test, opts.path)?;
    let fit = path.best_fit();
    let (intercept_original, original) = params.original_coefficients(fit.intercept, &fit.coefficients);
    let coefficients = fit
        .names
        .iter()
        .zip(&fit.coefficients)
        .zip(&original)
        .map(|((name, s), o)| Coefficient {
            name: name.clone(),
            standardized: *s,
            original: *o,
        })
        .collect();
    Ok(CohortReport {
        sex,
        rows: design.rows(),
        train_rows: train.rows(),
        test_rows: test.rows(),
        correlation,
        converged: path.fits.iter().map(|f| f.converged).collect(),
        chosen_lambda: fit.lambda,
        intercept: fit.intercept,
        intercept_original,
        coefficients,
        selected: select_features(fit, opts.selection_threshold),
        evaluation: evaluate(fit, &test),
        lambdas: path.lambdas.clone(),
        test_losses: path.test_losses.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn design(x: Array2<f64>, y: Array1<f64>) -> DesignMatrix {
        let names = (0..x.ncols()).map(|j| format!("x{j}")).collect();
        DesignMatrix::new(names, x, y).unwrap()
    }

    #[test]
    fn predictor_order() {
        let names = predictor_names(true);
        assert_eq!(names.len(), 12);
        assert_eq!(names[0], "age");
        assert_eq!(names[1], "obesity");
        assert_eq!(names[11], "intubated");
        assert_eq!(predictor_names(false).len(), 11);
    }

    #[test]
    fn correlation_of_copies_and_opposites() {
        let d = design(array![[0.0, 1.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]], array![0.0, 1.0, 1.0, 0.0]);
        let c = correlation_matrix(&d).unwrap();
        assert_eq!(c.get("x0", "x1"), Some(-1.0));
        assert_eq!(c.get("x0", OUTCOME), Some(1.0));
        assert_eq!(c.get("x1", "x1"), Some(1.0));
    }

    #[test]
    fn zero_variance_column_is_excluded() {
        let d = design(array![[1.0, 3.0], [1.0, 4.0], [1.0, 5.0]], array![0.0, 1.0, 1.0]);
        let c = correlation_matrix(&d).unwrap();
        assert_eq!(c.excluded, vec!["x0".to_string()]);
        assert_eq!(c.names, vec!["x1".to_string(), OUTCOME.to_string()]);
    }

    #[test]
    fn stratified_split_counts() {
        let x = Array2::from_shape_fn((10, 1), |(i, _)| i as f64);
        let y = Array1::from_shape_fn(10, |i| if i < 5 { 1.0 } else { 0.0 });
        let (train, test) = split(&design(x, y), 0.2, 7).unwrap();
        assert_eq!((train.rows(), test.rows()), (8, 2));
        assert_eq!(test.y.sum(), 1.0);
    }

    #[test]
    fn split_is_repeatable_and_rejects_bad_fraction() {
        let x = Array2::from_shape_fn((100, 1), |(i, _)| i as f64);
        let y = Array1::from_shape_fn(100, |i| (i % 3 == 0) as u8 as f64);
        let d = design(x, y);
        let a = split(&d, 0.2, 7).unwrap();
        let b = split(&d, 0.2, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.0.rows(), a.1.rows()), (80, 20));
        assert!(split(&d, 0.0, 7).is_err());
        assert!(split(&d, 1.0, 7).is_err());
    }

    #[test]
    fn lambda_max_by_hand() {
        // y centered: (-0.5, 0.5, -0.5, 0.5); x·yc = 2, / n = 0.5
        let d = design(array![[-1.0], [1.0], [-1.0], [1.0]], array![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(lambda_max(&d), 0.5);
        let constant = design(array![[-1.0], [1.0]], array![1.0, 1.0]);
        assert_eq!(lambda_max(&constant), 0.0);
    }

    #[test]
    fn null_model_above_lambda_max() {
        let d = design(
            array![[-1.0, 0.5], [1.0, -0.5], [-1.0, 1.0], [1.0, -1.0], [0.5, 0.0]],
            array![0.0, 1.0, 0.0, 1.0, 1.0],
        );
        let fit = fit_lasso_logistic(&d, lambda_max(&d), LassoOptions::default(), None).unwrap();
        assert!(fit.coefficients.iter().all(|b| *b == 0.0));
        assert!((fit.intercept - (0.6f64 / 0.4).ln()).abs() < 1e-12);
    }

    #[test]
    fn select_by_magnitude() {
        let fit = LassoFit {
            names: vec!["a".into(), "b".into(), "c".into()],
            intercept: 0.0,
            coefficients: vec![0.5, 0.0, -0.2],
            lambda: 0.1,
            converged: true,
            iterations: 1,
            objective: 0.0,
            history: vec![],
        };
        assert_eq!(select_features(&fit, 0.1), vec!["a".to_string(), "c".to_string()]);
        let zero = LassoFit {
            coefficients: vec![0.0; 3],
            ..fit
        };
        assert!(select_features(&zero, 0.0).is_empty());
    }

    #[test]
    fn standardize_round_trip() {
        let d = design(array![[1.0, 10.0], [2.0, 30.0], [4.0, 20.0]], array![0.0, 1.0, 0.0]);
        let (s, _, params) = standardize(&d, &d).unwrap();
        for col in s.x.axis_iter(Axis(1)) {
            assert!(col.sum().abs() < 1e-12);
            assert!((col.mapv(|v| v * v).sum() / 3.0 - 1.0).abs() < 1e-12);
        }
        let back = unstandardize(&s, &params);
        for (a, b) in back.x.iter().zip(d.x.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_variance_standardize_names_column() {
        let d = design(array![[1.0, 2.0], [1.0, 3.0]], array![0.0, 1.0]);
        let err = Standardization::fit(&d).unwrap_err();
        assert!(err.to_string().contains("x0"));
    }

    #[test]
    fn lambda_grid_endpoints() {
        let g = lambda_grid(2.0, 20, 1000.0);
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], 2.0);
        assert!((g[19] - 0.002).abs() < 1e-15);
    }
}

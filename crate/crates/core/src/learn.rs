//! Linear SVM trained by SMO (pairwise multiclass) and multinomial logistic
//! regression.

use std::collections::BTreeMap;

use base64::Engine;
use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::L1Label;
use crate::error::{Error, Result};
use crate::matrix::Design;

/// Per-feature z-scoring fitted on training rows.
///
/// Population standard deviation is used, so the transformed training matrix
/// has unit variance exactly. Zero-variance features are only centred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Array2<f64>) -> Standardizer {
        let n = x.nrows().max(1) as f64;
        let mean: Vec<f64> = x.axis_iter(Axis(1)).map(|c| c.sum() / n).collect();
        let std = x
            .axis_iter(Axis(1))
            .zip(&mean)
            .map(|(c, m)| (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt())
            .collect();
        Standardizer { mean, std }
    }

    /// No-op standardizer; used for sparse count features, where centring
    /// would destroy sparsity.
    pub fn identity(dim: usize) -> Standardizer {
        Standardizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_identity(&self) -> bool {
        self.mean.iter().all(|&m| m == 0.0) && self.std.iter().all(|&s| s == 1.0)
    }

    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v -= m;
                if *s > 0.0 {
                    *v /= s;
                }
            }
        }
        out
    }

    pub fn transform_design(&self, x: &Design) -> Design {
        match x {
            Design::Dense(m) => Design::Dense(self.transform(m)),
            Design::Sparse(m) => {
                if self.is_identity() {
                    Design::Sparse(m.clone())
                } else {
                    Design::Dense(self.transform(&m.to_dense()))
                }
            }
        }
    }

    pub fn select(&self, cols: &[usize]) -> Standardizer {
        Standardizer {
            mean: cols.iter().map(|&c| self.mean[c]).collect(),
            std: cols.iter().map(|&c| self.std[c]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoParams {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SmoParams {
    fn default() -> Self {
        SmoParams {
            c: 1.0,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

/// Linear two-class SVM: `f(x) = w.x + b`, positive side is label `+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub w: Vec<f64>,
    pub b: f64,
    pub c: f64,
    pub tol: f64,
    pub alphas: Vec<f64>,
    pub iterations: usize,
}

impl BinarySvm {
    pub fn decision(&self, x: &Design, i: usize) -> f64 {
        x.row_dot(i, &self.w) + self.b
    }
}

/// Dual objective after every SMO step, `sum(a) - a'Qa/2`.
#[derive(Debug, Clone, Default)]
pub struct SmoTrace {
    pub objective: Vec<f64>,
}

/// Trains a linear SVM on labels in `{-1, +1}`.
pub fn train_smo_binary(x: &Design, y: &[f64], params: &SmoParams) -> Result<BinarySvm> {
    train_smo_binary_traced(x, y, params, None)
}

/// As [`train_smo_binary`], optionally recording the dual objective.
///
/// Working-set selection is the maximal violating pair over the gradient
/// (first index wins ties, scanning in row order). Stops when the violation
/// gap `m(a) - M(a)` drops below `tol`; `b` is then the mean over free
/// vectors, or the midpoint of the feasible interval if none are free.
pub fn train_smo_binary_traced(
    x: &Design,
    y: &[f64],
    params: &SmoParams,
    trace: Option<&mut SmoTrace>,
) -> Result<BinarySvm> {
    let n = x.n_rows();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: y.len(),
        });
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::Data("SVM labels must be -1 or +1".into()));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::Data("SVM training needs both classes present".into()));
    }
    if !(params.c > 0.0) || !(params.tol > 0.0) {
        return Err(Error::Config("SVM needs C > 0 and tol > 0".into()));
    }
    let kernel = Gram::new(x);
    Ok(solve_smo(&kernel, &(0..n).collect::<Vec<_>>(), x, y, params, trace))
}

/// Linear kernel values between rows of a design.
struct Gram {
    k: Array2<f64>,
}

impl Gram {
    fn new(x: &Design) -> Gram {
        let k = match x {
            Design::Dense(m) => m.dot(&m.t()),
            Design::Sparse(s) => {
                let n = s.n_rows();
                let rows: Vec<Vec<f64>> = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let mut dense = vec![0.0; s.n_cols];
                        for (c, v) in s.row(i) {
                            dense[c] = v;
                        }
                        (0..n).map(|j| s.row(j).map(|(c, v)| v * dense[c]).sum()).collect()
                    })
                    .collect();
                Array2::from_shape_vec((n, n), rows.concat()).expect("square gram")
            }
        };
        Gram { k }
    }
}

/// SMO on the rows `idx` of `x`; `gram` holds the kernel among those rows.
fn solve_smo(
    gram: &Gram,
    idx: &[usize],
    x: &Design,
    y: &[f64],
    params: &SmoParams,
    mut trace: Option<&mut SmoTrace>,
) -> BinarySvm {
    const TAU: f64 = 1e-12;
    let n = idx.len();
    let c = params.c;
    let k = |a: usize, b: usize| gram.k[[a, b]];
    let mut alpha = vec![0.0; n];
    // Gradient of (1/2) a'Qa - e'a with Q_ij = y_i y_j K_ij.
    let mut g = vec![-1.0; n];
    let mut iterations = 0;

    let objective = |alpha: &[f64], g: &[f64]| {
        // a'Qa = a'(g + e)
        let s: f64 = alpha.iter().sum();
        let q: f64 = alpha.iter().zip(g).map(|(a, gi)| a * (gi + 1.0)).sum();
        s - 0.5 * q
    };
    if let Some(t) = trace.as_deref_mut() {
        t.objective.push(0.0);
    }

    while iterations < params.max_iter {
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            let up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            if up && -y[t] * g[t] > g_max {
                g_max = -y[t] * g[t];
                i = t;
            }
        }
        let mut j = usize::MAX;
        for t in 0..n {
            let low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
            if low && -y[t] * g[t] < g_min {
                g_min = -y[t] * g[t];
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max - g_min < params.tol {
            break;
        }
        iterations += 1;

        let (yi, yj) = (y[i], y[j]);
        let qij = yi * yj * k(i, j);
        let (qii, qjj) = (k(i, i), k(j, j));
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if yi != yj {
            let quad = (qii + qjj + 2.0 * qij).max(TAU);
            let delta = (-g[i] - g[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (qii + qjj - 2.0 * qij).max(TAU);
            let delta = (g[i] - g[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            g[t] += y[t] * (yi * k(t, i) * di + yj * k(t, j) * dj);
        }
        if let Some(tr) = trace.as_deref_mut() {
            tr.objective.push(objective(&alpha, &g));
        }
    }

    // Offset from the KKT conditions.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_n) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * g[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_sum += yg;
            free_n += 1;
        }
    }
    let rho = if free_n > 0 {
        free_sum / free_n as f64
    } else {
        (ub + lb) / 2.0
    };

    let mut w = vec![0.0; x.n_cols()];
    for t in 0..n {
        if alpha[t] != 0.0 {
            x.row_axpy(idx[t], alpha[t] * y[t], &mut w);
        }
    }
    BinarySvm {
        w,
        b: -rho,
        c,
        tol: params.tol,
        alphas: alpha,
        iterations,
    }
}

/// One-vs-one linear SVMs over classes in canonical order.
///
/// Machine `(a, b)` with `a < b` treats `a` as the positive class.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassSvm {
    pub classes: Vec<L1Label>,
    pub pairs: Vec<(usize, usize)>,
    pub machines: Vec<BinarySvm>,
}

pub fn train_multiclass_svm(
    x: &Design,
    y: &[L1Label],
    classes: &[L1Label],
    params: &SmoParams,
) -> Result<MulticlassSvm> {
    if y.len() != x.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            actual: y.len(),
        });
    }
    let mut classes = classes.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Data("multiclass SVM needs at least two classes".into()));
    }
    let mut members: BTreeMap<L1Label, Vec<usize>> = classes.iter().map(|&c| (c, Vec::new())).collect();
    for (i, l) in y.iter().enumerate() {
        members
            .get_mut(l)
            .ok_or_else(|| Error::Data(format!("label {l} is not among the model classes")))?
            .push(i);
    }
    if let Some((l, _)) = members.iter().find(|(_, m)| m.is_empty()) {
        return Err(Error::Data(format!("class {l} has no training instances")));
    }

    let pairs: Vec<(usize, usize)> = (0..classes.len())
        .flat_map(|a| (a + 1..classes.len()).map(move |b| (a, b)))
        .collect();
    let machines = pairs
        .par_iter()
        .map(|&(a, b)| {
            let mut idx: Vec<usize> = members[&classes[a]]
                .iter()
                .chain(&members[&classes[b]])
                .copied()
                .collect();
            idx.sort_unstable();
            let yy: Vec<f64> = idx
                .iter()
                .map(|&i| if y[i] == classes[a] { 1.0 } else { -1.0 })
                .collect();
            let gram = Gram::new(&x.select_rows(&idx));
            solve_smo(&gram, &idx, x, &yy, params, None)
        })
        .collect();
    Ok(MulticlassSvm {
        classes,
        pairs,
        machines,
    })
}

impl MulticlassSvm {
    /// Vote counts per class for row `i`.
    pub fn votes(&self, x: &Design, i: usize) -> Vec<usize> {
        let mut v = vec![0; self.classes.len()];
        for (&(a, b), m) in self.pairs.iter().zip(&self.machines) {
            if m.decision(x, i) >= 0.0 {
                v[a] += 1;
            } else {
                v[b] += 1;
            }
        }
        v
    }

    pub fn predict(&self, x: &Design) -> Vec<L1Label> {
        (0..x.n_rows())
            .into_par_iter()
            .map(|i| self.classes[argmax_first(&self.votes(x, i))])
            .collect()
    }
}

/// First index of the maximum.
fn argmax_first<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlrParams {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for MlrParams {
    fn default() -> Self {
        MlrParams {
            l2: 1e-6,
            max_iter: 500,
            tol: 1e-8,
        }
    }
}

/// Softmax regression. `weights` is feature-major: `weights[f * K + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlrModel {
    pub classes: Vec<L1Label>,
    pub n_features: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub l2: f64,
    /// Objective after every accepted step, starting with the initial point.
    pub loss_trace: Vec<f64>,
    pub converged: bool,
}

impl MlrModel {
    fn zeros(classes: Vec<L1Label>, n_features: usize, l2: f64) -> MlrModel {
        let k = classes.len();
        MlrModel {
            classes,
            n_features,
            weights: vec![0.0; n_features * k],
            bias: vec![0.0; k],
            l2,
            loss_trace: Vec::new(),
            converged: false,
        }
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn predict_proba(&self, x: &Design) -> Array2<f64> {
        let k = self.classes.len();
        let rows: Vec<Vec<f64>> = (0..x.n_rows())
            .into_par_iter()
            .map(|i| {
                let mut s = scores(x, i, &self.weights, &self.bias, k);
                softmax_in_place(&mut s);
                s
            })
            .collect();
        Array2::from_shape_vec((x.n_rows(), k), rows.concat()).expect("rows have k entries")
    }

    pub fn predict(&self, x: &Design) -> Vec<L1Label> {
        self.predict_proba(x)
            .rows()
            .into_iter()
            .map(|r| self.classes[argmax_first(r.as_slice().expect("standard layout"))])
            .collect()
    }
}

fn scores(x: &Design, i: usize, w: &[f64], b: &[f64], k: usize) -> Vec<f64> {
    let mut s = b.to_vec();
    let mut add = |c: usize, v: f64| {
        for (sk, wk) in s.iter_mut().zip(&w[c * k..(c + 1) * k]) {
            *sk += v * wk;
        }
    };
    match x {
        Design::Dense(m) => m.row(i).iter().enumerate().for_each(|(c, &v)| add(c, v)),
        Design::Sparse(m) => m.row(i).for_each(|(c, v)| add(c, v)),
    }
    s
}

fn softmax_in_place(s: &mut [f64]) -> f64 {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in s.iter_mut() {
        *v = (*v - max).exp();
        z += *v;
    }
    for v in s.iter_mut() {
        *v /= z;
    }
    max + z.ln()
}

/// Mean cross-entropy plus `(l2/2)|W|^2` (bias unpenalised) and its gradient.
///
/// `params` is `W` (feature-major, `d * K`) followed by the `K` biases;
/// `targets` are class positions in `0..K`.
pub fn mlr_objective(x: &Design, targets: &[usize], k: usize, l2: f64, params: &[f64]) -> (f64, Vec<f64>) {
    let d = x.n_cols();
    let n = x.n_rows();
    let (w, b) = params.split_at(d * k);
    const CHUNK: usize = 256;
    let partial: Vec<(f64, Vec<f64>)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut loss = 0.0;
            let mut grad = vec![0.0; d * k + k];
            for i in chunk * CHUNK..((chunk + 1) * CHUNK).min(n) {
                let mut p = scores(x, i, w, b, k);
                let lse = {
                    let raw = p[targets[i]];
                    let lse = softmax_in_place(&mut p);
                    lse - raw
                };
                loss += lse;
                p[targets[i]] -= 1.0;
                let mut add = |c: usize, v: f64| {
                    for (g, r) in grad[c * k..(c + 1) * k].iter_mut().zip(&p) {
                        *g += v * r;
                    }
                };
                match x {
                    Design::Dense(m) => m.row(i).iter().enumerate().for_each(|(c, &v)| add(c, v)),
                    Design::Sparse(m) => m.row(i).for_each(|(c, v)| add(c, v)),
                }
                for (g, r) in grad[d * k..].iter_mut().zip(&p) {
                    *g += r;
                }
            }
            (loss, grad)
        })
        .collect();

    let inv_n = 1.0 / n.max(1) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; d * k + k];
    for (l, g) in partial {
        loss += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    loss *= inv_n;
    for g in grad.iter_mut() {
        *g *= inv_n;
    }
    loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    for (g, wv) in grad[..d * k].iter_mut().zip(w) {
        *g += l2 * wv;
    }
    (loss, grad)
}

/// Trains softmax regression from zero with L-BFGS (memory 10) and an
/// Armijo backtracking line search. Stops when the gradient's max-norm is
/// below `tol`, after `max_iter` steps, or when no step decreases the loss.
pub fn train_mlr(x: &Design, y: &[L1Label], classes: &[L1Label], params: &MlrParams) -> Result<MlrModel> {
    if y.len() != x.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            actual: y.len(),
        });
    }
    let mut classes = classes.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Data("MLR needs at least two classes".into()));
    }
    if !(params.l2 >= 0.0) {
        return Err(Error::Config("MLR l2 must be non-negative".into()));
    }
    let pos: BTreeMap<L1Label, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let targets = y
        .iter()
        .map(|l| {
            pos.get(l)
                .copied()
                .ok_or_else(|| Error::Data(format!("label {l} is not among the model classes")))
        })
        .collect::<Result<Vec<_>>>()?;

    let k = classes.len();
    let d = x.n_cols();
    let mut model = MlrModel::zeros(classes, d, params.l2);
    let mut theta = vec![0.0; d * k + k];
    let f = |t: &[f64]| mlr_objective(x, &targets, k, params.l2, t);
    let (mut loss, mut grad) = f(&theta);
    model.loss_trace.push(loss);

    let mut hist: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> = Default::default();
    const MEMORY: usize = 10;
    for _ in 0..params.max_iter {
        if inf_norm(&grad) < params.tol {
            model.converged = true;
            break;
        }
        // Two-loop recursion.
        let mut q = grad.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, yv, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            axpy(-a, yv, &mut q);
            alphas.push(a);
        }
        let gamma = hist
            .back()
            .map_or(1.0 / norm(&grad).max(1e-300), |(s, yv, _)| dot(s, yv) / dot(yv, yv));
        for v in q.iter_mut() {
            *v *= gamma;
        }
        for ((s, yv, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let bcoef = rho * dot(yv, &q);
            axpy(a - bcoef, s, &mut q);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            hist.clear();
            dir = grad.iter().map(|v| -v / norm(&grad).max(1e-300)).collect();
            slope = dot(&grad, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            let (l, g) = f(&cand);
            if l.is_finite() && l <= loss + 1e-4 * step * slope {
                accepted = Some((cand, l, g));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, l, g)) = accepted else {
            log::debug!("MLR line search failed at loss {loss}");
            break;
        };
        let s: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * norm(&s) * norm(&yv) {
            if hist.len() == MEMORY {
                hist.pop_front();
            }
            hist.push_back((s, yv, 1.0 / sy));
        }
        theta = cand;
        loss = l;
        grad = g;
        model.loss_trace.push(loss);
    }
    if !model.converged && inf_norm(&grad) < params.tol {
        model.converged = true;
    }
    model.weights = theta[..d * k].to_vec();
    model.bias = theta[d * k..].to_vec();
    Ok(model)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    SvmSmo,
    Mlr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Svm(MulticlassSvm),
    Mlr(MlrModel),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub config_hash: String,
    pub seed: u64,
    pub training_class_counts: BTreeMap<L1Label, usize>,
}

/// Standardizer, optional column mask and classifier, applied in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub n_features: usize,
    pub standardizer: Standardizer,
    pub mask: Option<Vec<usize>>,
    pub classifier: Classifier,
    pub config: serde_json::Value,
    pub metadata: ModelMetadata,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<L1Label>,
    /// Class probabilities (MLR only), columns in `classes` order.
    pub scores: Option<Array2<f64>>,
    pub classes: Vec<L1Label>,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self.classifier {
            Classifier::Svm(_) => ModelKind::SvmSmo,
            Classifier::Mlr(_) => ModelKind::Mlr,
        }
    }

    pub fn classes(&self) -> &[L1Label] {
        match &self.classifier {
            Classifier::Svm(m) => &m.classes,
            Classifier::Mlr(m) => &m.classes,
        }
    }

    /// Applies standardizer and mask to raw features.
    pub fn prepare(&self, x: &Design) -> Result<Design> {
        if x.n_cols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: x.n_cols(),
            });
        }
        let z = self.standardizer.transform_design(x);
        Ok(match &self.mask {
            Some(cols) => z.select_cols(cols),
            None => z,
        })
    }

    pub fn predict(&self, x: &Design) -> Result<Prediction> {
        let z = self.prepare(x)?;
        Ok(match &self.classifier {
            Classifier::Svm(m) => Prediction {
                labels: m.predict(&z),
                scores: None,
                classes: m.classes.clone(),
            },
            Classifier::Mlr(m) => {
                let p = m.predict_proba(&z);
                let labels = p
                    .rows()
                    .into_iter()
                    .map(|r| m.classes[argmax_first(r.as_slice().expect("standard layout"))])
                    .collect();
                Prediction {
                    labels,
                    scores: Some(p),
                    classes: m.classes.clone(),
                }
            }
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let (weights, dim) = match &self.classifier {
            Classifier::Svm(m) => {
                let d = m.machines.first().map_or(0, |s| s.w.len());
                let mut v = Vec::with_capacity(m.machines.len() * (d + 1));
                for s in &m.machines {
                    v.extend_from_slice(&s.w);
                    v.push(s.b);
                }
                (v, d)
            }
            Classifier::Mlr(m) => {
                let mut v = m.weights.clone();
                v.extend_from_slice(&m.bias);
                (v, m.n_features)
            }
        };
        let env = Envelope {
            format: FORMAT_TAG.to_string(),
            kind: self.kind(),
            classes: self.classes().to_vec(),
            n_features: self.n_features,
            classifier_dim: dim,
            config: self.config.clone(),
            standardizer: EncodedStandardizer {
                mean: encode_f64(&self.standardizer.mean),
                std: encode_f64(&self.standardizer.std),
            },
            mask: self.mask.clone(),
            weights: encode_f64(&weights),
            hyper: match &self.classifier {
                Classifier::Svm(m) => m.machines.first().map_or(0.0, |s| s.c),
                Classifier::Mlr(m) => m.l2,
            },
            metadata: self.metadata.clone(),
        };
        Ok(serde_json::to_string_pretty(&env)?)
    }

    pub fn from_json(text: &str) -> Result<TrainedModel> {
        let env: Envelope = serde_json::from_str(text)?;
        if env.format != FORMAT_TAG {
            return Err(Error::Data(format!("unsupported model format `{}`", env.format)));
        }
        let standardizer = Standardizer {
            mean: decode_f64(&env.standardizer.mean)?,
            std: decode_f64(&env.standardizer.std)?,
        };
        let weights = decode_f64(&env.weights)?;
        let d = env.classifier_dim;
        let k = env.classes.len();
        let bad = || Error::Data("model weights do not match declared dimensions".into());
        let classifier = match env.kind {
            ModelKind::SvmSmo => {
                let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect();
                if weights.len() != pairs.len() * (d + 1) {
                    return Err(bad());
                }
                let machines = weights
                    .chunks(d + 1)
                    .map(|c| BinarySvm {
                        w: c[..d].to_vec(),
                        b: c[d],
                        c: env.hyper,
                        tol: 0.0,
                        alphas: Vec::new(),
                        iterations: 0,
                    })
                    .collect();
                Classifier::Svm(MulticlassSvm {
                    classes: env.classes,
                    pairs,
                    machines,
                })
            }
            ModelKind::Mlr => {
                if weights.len() != d * k + k {
                    return Err(bad());
                }
                let mut m = MlrModel::zeros(env.classes, d, env.hyper);
                m.weights = weights[..d * k].to_vec();
                m.bias = weights[d * k..].to_vec();
                m.converged = true;
                Classifier::Mlr(m)
            }
        };
        let expected = env.mask.as_ref().map_or(env.n_features, Vec::len);
        if standardizer.dim() != env.n_features || expected != d {
            return Err(bad());
        }
        Ok(TrainedModel {
            n_features: env.n_features,
            standardizer,
            mask: env.mask,
            classifier,
            config: env.config,
            metadata: env.metadata,
        })
    }
}

const FORMAT_TAG: &str = "accent-id-model/1";

#[derive(Serialize, Deserialize)]
struct EncodedStandardizer {
    mean: String,
    std: String,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    kind: ModelKind,
    classes: Vec<L1Label>,
    n_features: usize,
    classifier_dim: usize,
    config: serde_json::Value,
    standardizer: EncodedStandardizer,
    mask: Option<Vec<usize>>,
    weights: String,
    /// C for SVM, l2 for MLR.
    hyper: f64,
    metadata: ModelMetadata,
}

fn encode_f64(v: &[f64]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

fn decode_f64(s: &str) -> Result<Vec<f64>> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(s)
        .map_err(|e| Error::Serde(e.to_string()))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Serde("weight payload is not a whole number of f64".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

//! Classification heads, error rates, transductive cross-validation,
//! multi-split benchmarks and the transductive risk bound.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Deserialize;

use crate::data::{rng_stream, sample_labeled_split, stream, Dataset, SplitPlan};
use crate::eigen;
use crate::error::{Error, Result};
use crate::kernels::{KernelMatrix, KernelSpec};
use crate::model::{fit_model, FitConfig, Head, Method, S2Level};

/// Soft-margin penalty standing in for a hard margin.
pub const SVM_PENALTY: f64 = 1e6;
const SVM_TOL: f64 = 1e-10;
const SVM_TAU: f64 = 1e-12;

/// `sign(f − b)` times an orientation, with the threshold chosen to
/// minimise labeled errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdHead {
    pub threshold: f64,
    /// +1 predicts the positive class above the threshold, −1 below.
    pub orientation: i8,
    pub training_errors: usize,
}

impl ThresholdHead {
    /// Candidates are −∞, midpoints between consecutive distinct values,
    /// and +∞. Ties: larger margin to the nearest labeled value (∞ for the
    /// sentinels), then orientation +1, then the lower threshold.
    pub fn fit(f: &[f64], t: &[i8]) -> Result<Self> {
        if f.is_empty() || f.len() != t.len() {
            return Err(Error::InvalidArgument("threshold head needs matching, nonempty values and labels".into()));
        }
        if f.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("function values"));
        }
        let mut sorted = f.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let mut candidates = vec![f64::NEG_INFINITY];
        candidates.extend(sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        candidates.push(f64::INFINITY);

        let mut best: Option<(usize, f64, ThresholdHead)> = None;
        for orientation in [1i8, -1] {
            for &b in &candidates {
                let head = ThresholdHead {
                    threshold: b,
                    orientation,
                    training_errors: 0,
                };
                let errors = f.iter().zip(t).filter(|(&x, &y)| head.classify(x) != y).count();
                let margin = if b.is_finite() {
                    f.iter().map(|x| (x - b).abs()).fold(f64::INFINITY, f64::min)
                } else {
                    f64::INFINITY
                };
                let better = match &best {
                    None => true,
                    Some((e, mg, _)) => errors < *e || (errors == *e && margin > *mg),
                };
                if better {
                    best = Some((errors, margin, ThresholdHead { training_errors: errors, ..head }));
                }
            }
        }
        Ok(best.expect("at least two candidates").2)
    }

    pub fn classify(&self, f: f64) -> i8 {
        let side = if f > self.threshold { 1 } else { -1 };
        side * self.orientation
    }
}

/// Linear classifier `sign(wᵀφ + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    pub w: DVector<f64>,
    pub b: f64,
    /// Set when only one class was present; every point gets this label.
    pub constant: Option<i8>,
    pub iterations: usize,
}

impl LinearSvm {
    pub fn from_parts(w: DVector<f64>, b: f64) -> Self {
        LinearSvm {
            w,
            b,
            constant: None,
            iterations: 0,
        }
    }

    pub fn constant(label: i8, dim: usize) -> Self {
        LinearSvm {
            w: DVector::zeros(dim),
            b: label as f64,
            constant: Some(label),
            iterations: 0,
        }
    }

    /// Maximum-margin hyperplane (soft margin with penalty [`SVM_PENALTY`]
    /// when the data are not separable), by SMO with second-order working
    /// set selection on the dual.
    pub fn fit(x: &DMatrix<f64>, t: &[i8]) -> Result<Self> {
        let n = x.nrows();
        if n != t.len() || n == 0 {
            return Err(Error::InvalidArgument("SVM needs matching, nonempty features and labels".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("SVM features"));
        }
        let has_pos = t.contains(&1);
        let has_neg = t.contains(&-1);
        if !(has_pos && has_neg) {
            return Ok(Self::constant(if has_pos { 1 } else { -1 }, x.ncols()));
        }
        let y: Vec<f64> = t.iter().map(|&v| v as f64).collect();
        let gram = x * x.transpose();
        let q = |i: usize, j: usize| y[i] * y[j] * gram[(i, j)];
        let c = SVM_PENALTY;
        let mut a = vec![0.0; n];
        let mut g = vec![-1.0; n];
        let upper = |a: f64| a >= c;
        let lower = |a: f64| a <= 0.0;
        let max_iter = 100_000 * n.max(10);
        let mut iter = 0;
        while iter < max_iter {
            let mut gmax = f64::NEG_INFINITY;
            let mut i_sel = None;
            for s in 0..n {
                let v = if y[s] > 0.0 {
                    (!upper(a[s])).then_some(-g[s])
                } else {
                    (!lower(a[s])).then_some(g[s])
                };
                if let Some(v) = v {
                    if v >= gmax {
                        gmax = v;
                        i_sel = Some(s);
                    }
                }
            }
            let Some(i) = i_sel else { break };
            let mut gmax2 = f64::NEG_INFINITY;
            let mut j_sel = None;
            let mut obj_min = f64::INFINITY;
            for s in 0..n {
                let (eligible, gd, g2, quad) = if y[s] > 0.0 {
                    (!lower(a[s]), gmax + g[s], g[s], gram[(i, i)] + gram[(s, s)] - 2.0 * y[i] * q(i, s))
                } else {
                    (!upper(a[s]), gmax - g[s], -g[s], gram[(i, i)] + gram[(s, s)] + 2.0 * y[i] * q(i, s))
                };
                if !eligible {
                    continue;
                }
                gmax2 = gmax2.max(g2);
                if gd > 0.0 {
                    let obj = -gd * gd / if quad > 0.0 { quad } else { SVM_TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = Some(s);
                    }
                }
            }
            if gmax + gmax2 < SVM_TOL {
                break;
            }
            let Some(j) = j_sel else { break };
            iter += 1;
            let (old_i, old_j) = (a[i], a[j]);
            if y[i] != y[j] {
                let mut quad = gram[(i, i)] + gram[(j, j)] + 2.0 * q(i, j);
                if quad <= 0.0 {
                    quad = SVM_TAU;
                }
                let delta = (-g[i] - g[j]) / quad;
                let diff = a[i] - a[j];
                a[i] += delta;
                a[j] += delta;
                if diff > 0.0 {
                    if a[j] < 0.0 {
                        a[j] = 0.0;
                        a[i] = diff;
                    }
                } else if a[i] < 0.0 {
                    a[i] = 0.0;
                    a[j] = -diff;
                }
                if diff > 0.0 {
                    if a[i] > c {
                        a[i] = c;
                        a[j] = c - diff;
                    }
                } else if a[j] > c {
                    a[j] = c;
                    a[i] = c + diff;
                }
            } else {
                let mut quad = gram[(i, i)] + gram[(j, j)] - 2.0 * q(i, j);
                if quad <= 0.0 {
                    quad = SVM_TAU;
                }
                let delta = (g[i] - g[j]) / quad;
                let sum = a[i] + a[j];
                a[i] -= delta;
                a[j] += delta;
                if sum > c {
                    if a[i] > c {
                        a[i] = c;
                        a[j] = sum - c;
                    }
                } else if a[j] < 0.0 {
                    a[j] = 0.0;
                    a[i] = sum;
                }
                if sum > c {
                    if a[j] > c {
                        a[j] = c;
                        a[i] = sum - c;
                    }
                } else if a[i] < 0.0 {
                    a[i] = 0.0;
                    a[j] = sum;
                }
            }
            let (di, dj) = (a[i] - old_i, a[j] - old_j);
            for (s, gs) in g.iter_mut().enumerate() {
                *gs += q(i, s) * di + q(j, s) * dj;
            }
        }
        if iter >= max_iter {
            log::warn!("SMO stopped after {max_iter} iterations");
        }
        let mut w = DVector::zeros(x.ncols());
        for s in 0..n {
            if a[s] > 0.0 {
                w += x.row(s).transpose() * (a[s] * y[s]);
            }
        }
        // offset from free support vectors, else the middle of the feasible interval
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free, mut sum_free) = (0usize, 0.0);
        for s in 0..n {
            let yg = y[s] * g[s];
            if upper(a[s]) {
                if y[s] < 0.0 {
                    ub = ub.min(yg)
                } else {
                    lb = lb.max(yg)
                }
            } else if lower(a[s]) {
                if y[s] > 0.0 {
                    ub = ub.min(yg)
                } else {
                    lb = lb.max(yg)
                }
            } else {
                free += 1;
                sum_free += yg;
            }
        }
        let rho = if free > 0 { sum_free / free as f64 } else { 0.5 * (ub + lb) };
        Ok(LinearSvm {
            w,
            b: -rho,
            constant: None,
            iterations: iter,
        })
    }

    pub fn decision(&self, phi: &[f64]) -> f64 {
        if let Some(label) = self.constant {
            return label as f64;
        }
        self.w.iter().zip(phi).map(|(w, p)| w * p).sum::<f64>() + self.b
    }

    pub fn classify(&self, phi: &[f64]) -> i8 {
        if self.decision(phi) >= 0.0 {
            1
        } else {
            -1
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedHead {
    Threshold(ThresholdHead),
    Svm(LinearSvm),
}

impl FittedHead {
    /// Fits on labeled features (rows = labeled points). The threshold head
    /// reads the first column only.
    pub fn fit(head: Head, features: &DMatrix<f64>, t: &[i8]) -> Result<Self> {
        if features.ncols() == 0 {
            return Err(Error::InvalidArgument("no features for the head".into()));
        }
        match head {
            Head::Threshold => {
                let f: Vec<f64> = features.column(0).iter().copied().collect();
                ThresholdHead::fit(&f, t).map(FittedHead::Threshold)
            }
            Head::Svm10 => LinearSvm::fit(features, t).map(FittedHead::Svm),
        }
    }

    /// Signed decision values; positive means class +1.
    pub fn decision_rows(&self, features: &DMatrix<f64>) -> Vec<f64> {
        (0..features.nrows())
            .map(|i| match self {
                FittedHead::Threshold(h) => h.orientation as f64 * (features[(i, 0)] - h.threshold),
                FittedHead::Svm(s) => {
                    let row: Vec<f64> = features.row(i).iter().copied().collect();
                    s.decision(&row)
                }
            })
            .collect()
    }

    pub fn classify_rows(&self, features: &DMatrix<f64>) -> Vec<i8> {
        (0..features.nrows())
            .map(|i| {
                let row: Vec<f64> = features.row(i).iter().copied().collect();
                match self {
                    FittedHead::Threshold(h) => h.classify(row[0]),
                    FittedHead::Svm(s) => s.classify(&row),
                }
            })
            .collect()
    }
}

/// Fraction of positions where `predictions` and `truth` differ.
pub fn transductive_error(predictions: &[i8], truth: &[i8]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} truth values",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("no points to evaluate".into()));
    }
    let wrong = predictions.iter().zip(truth).filter(|(p, t)| p != t).count();
    Ok(wrong as f64 / truth.len() as f64)
}

/// Error over the unlabeled points of `dataset`, given predictions for all points.
pub fn unlabeled_error(dataset: &Dataset, predictions: &[i8]) -> Result<f64> {
    let truth = dataset
        .truth()
        .ok_or_else(|| Error::InvalidArgument("dataset has no ground truth".into()))?;
    if predictions.len() != dataset.len() {
        return Err(Error::DimensionMismatch("one prediction per point expected".into()));
    }
    let idx = dataset.unlabeled_indices();
    let p: Vec<i8> = idx.iter().map(|&i| predictions[i]).collect();
    let t: Vec<i8> = idx.iter().map(|&i| truth[i]).collect();
    transductive_error(&p, &t)
}

/// Supervised baseline: label of the nearest labeled point (ties to the
/// lower index), for every point.
pub fn one_nn_predict(dataset: &Dataset) -> Result<Vec<i8>> {
    let labeled = dataset.labeled_indices();
    if labeled.is_empty() {
        return Err(Error::NoLabels);
    }
    let x = &dataset.points;
    Ok((0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::INFINITY, 0usize);
            for &j in labeled {
                let d: f64 = x.row(i).iter().zip(x.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 {
                    best = (d, j);
                }
            }
            dataset.labels()[best.1]
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum S2Scale {
    Absolute,
    Normalized,
}

fn default_scale() -> S2Scale {
    S2Scale::Normalized
}

fn default_heads() -> Vec<Head> {
    vec![Head::Threshold]
}

fn default_true() -> bool {
    true
}

/// Candidate values for model selection, read from a versioned TOML file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamGrid {
    pub version: u32,
    /// `gaussian`, `diffusion`, `mixed` or `lpinv`.
    pub kernel: String,
    #[serde(default)]
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub tau: Vec<f64>,
    #[serde(default)]
    pub w: Vec<f64>,
    #[serde(default)]
    pub knn: Vec<usize>,
    #[serde(default)]
    pub c: Vec<f64>,
    #[serde(default)]
    pub s2: Vec<f64>,
    #[serde(default = "default_scale")]
    pub s2_scale: S2Scale,
    pub method: Vec<Method>,
    #[serde(default = "default_heads")]
    pub head: Vec<Head>,
    #[serde(default = "default_true")]
    pub centered: bool,
}

pub const GRID_VERSION: u32 = 1;

impl ParamGrid {
    pub fn parse(text: &str) -> Result<Self> {
        let grid: ParamGrid = toml::from_str(text).map_err(|e| Error::Format(format!("grid file: {e}")))?;
        if grid.version != GRID_VERSION {
            return Err(Error::Format(format!(
                "grid version {} not supported (expected {GRID_VERSION})",
                grid.version
            )));
        }
        Ok(grid)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn kernels(&self) -> Result<Vec<KernelSpec>> {
        fn need<T>(v: &[T], name: &str, kind: &str) -> Result<()> {
            if v.is_empty() {
                Err(Error::InvalidArgument(format!("{kind} grid needs at least one {name}")))
            } else {
                Ok(())
            }
        }
        let kind = self.kernel.as_str();
        let mut out = Vec::new();
        match kind {
            "gaussian" => {
                need(&self.gamma, "gamma", kind)?;
                out.extend(self.gamma.iter().map(|&gamma| KernelSpec::Gaussian { gamma }));
            }
            "diffusion" => {
                need(&self.tau, "tau", kind)?;
                need(&self.knn, "knn", kind)?;
                for &knn in &self.knn {
                    out.extend(self.tau.iter().map(|&tau| KernelSpec::Diffusion { tau, knn }));
                }
            }
            "mixed" => {
                need(&self.gamma, "gamma", kind)?;
                need(&self.tau, "tau", kind)?;
                need(&self.w, "w", kind)?;
                need(&self.knn, "knn", kind)?;
                for &knn in &self.knn {
                    for &gamma in &self.gamma {
                        for &tau in &self.tau {
                            out.extend(self.w.iter().map(|&w| KernelSpec::Mixed { gamma, tau, w, knn }));
                        }
                    }
                }
            }
            "lpinv" => {
                need(&self.knn, "knn", kind)?;
                out.extend(self.knn.iter().map(|&knn| KernelSpec::LaplacianPinv { knn }));
            }
            other => return Err(Error::InvalidArgument(format!("unknown grid kernel {other:?}"))),
        }
        for k in &out {
            k.validate()?;
        }
        Ok(out)
    }

    /// All configurations; parameters a method ignores are not expanded.
    pub fn expand(&self) -> Result<Vec<FitConfig>> {
        if self.method.is_empty() || self.head.is_empty() {
            return Err(Error::InvalidArgument("grid needs at least one method and head".into()));
        }
        let level = |v: f64| match self.s2_scale {
            S2Scale::Absolute => S2Level::Absolute(v),
            S2Scale::Normalized => S2Level::Normalized(v),
        };
        let mut out = Vec::new();
        for kernel in self.kernels()? {
            for &method in &self.method {
                let (cs, s2s): (Vec<f64>, Vec<f64>) = match method {
                    Method::Kpca => (vec![0.0], vec![1.0]),
                    Method::Mv => (self.c.clone(), vec![1.0]),
                    Method::Ls | Method::Lr => (self.c.clone(), self.s2.clone()),
                };
                if cs.is_empty() || s2s.is_empty() {
                    return Err(Error::InvalidArgument(format!("{method} grid needs values for c (and s2)")));
                }
                for &head in &self.head {
                    for &c in &cs {
                        for &s2 in &s2s {
                            out.push(FitConfig {
                                kernel: kernel.clone(),
                                method,
                                head,
                                c,
                                s2: level(s2),
                                centered: self.centered || method == Method::Mv,
                            });
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Kernels keyed by their spec, built once per dataset.
#[derive(Debug, Clone, Default)]
pub struct KernelCache {
    map: HashMap<String, Arc<KernelMatrix>>,
}

impl KernelCache {
    pub fn build(points: &DMatrix<f64>, configs: &[FitConfig]) -> Result<Self> {
        let mut specs: Vec<KernelSpec> = Vec::new();
        for c in configs {
            if !specs.contains(&c.kernel) {
                specs.push(c.kernel.clone());
            }
        }
        let built = specs
            .iter()
            .map(|s| KernelMatrix::build(s, points).map(|k| (s.to_string(), Arc::new(k))))
            .collect::<Result<Vec<_>>>()?;
        Ok(KernelCache {
            map: built.into_iter().collect(),
        })
    }

    pub fn insert(&mut self, kernel: KernelMatrix) {
        self.map.insert(kernel.spec().to_string(), Arc::new(kernel));
    }

    pub fn get(&self, spec: &KernelSpec) -> Result<&KernelMatrix> {
        self.map
            .get(&spec.to_string())
            .map(|k| k.as_ref())
            .ok_or_else(|| Error::InvalidArgument(format!("kernel {spec} not in cache")))
    }
}

#[derive(Debug, Clone)]
pub struct CvRow {
    pub config: FitConfig,
    /// Per-fold validation error; `∞` marks a failed fit.
    pub fold_errors: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Mean hinge loss of held-out decision values scaled by their spread
    /// over all points; breaks ties in the error.
    pub hinge: f64,
}

#[derive(Debug, Clone)]
pub struct CvReport {
    pub rows: Vec<CvRow>,
    /// Index of the selected row.
    pub best: usize,
}

impl CvReport {
    pub fn best(&self) -> &CvRow {
        &self.rows[self.best]
    }
}

fn gamma_of(spec: &KernelSpec) -> f64 {
    match *spec {
        KernelSpec::Gaussian { gamma } | KernelSpec::Mixed { gamma, .. } => gamma,
        _ => 0.0,
    }
}

fn tau_w_knn(spec: &KernelSpec) -> (f64, f64, usize) {
    match *spec {
        KernelSpec::Diffusion { tau, knn } => (tau, 0.0, knn),
        KernelSpec::Mixed { tau, w, knn, .. } => (tau, w, knn),
        KernelSpec::LaplacianPinv { knn } => (0.0, 0.0, knn),
        _ => (0.0, 0.0, 0),
    }
}

/// Total order used for selection: error, scaled hinge loss, then c, γ,
/// s², τ, w, knn, method, head, centering.
fn selection_order(a: &CvRow, b: &CvRow) -> Ordering {
    let (ta, wa, ka) = tau_w_knn(&a.config.kernel);
    let (tb, wb, kb) = tau_w_knn(&b.config.kernel);
    a.mean
        .total_cmp(&b.mean)
        .then(a.hinge.total_cmp(&b.hinge))
        .then(a.config.c.total_cmp(&b.config.c))
        .then(gamma_of(&a.config.kernel).total_cmp(&gamma_of(&b.config.kernel)))
        .then(a.config.s2.value().total_cmp(&b.config.s2.value()))
        .then(ta.total_cmp(&tb))
        .then(wa.total_cmp(&wb))
        .then(ka.cmp(&kb))
        .then(a.config.method.cmp(&b.config.method))
        .then(a.config.head.cmp(&b.config.head))
        .then(a.config.centered.cmp(&b.config.centered))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 || !mean.is_finite() {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Fits on `dataset` with `hidden` labels removed and returns the error and
/// the scaled hinge loss on the hidden points.
fn fold_error(kernel: &KernelMatrix, dataset: &Dataset, cfg: &FitConfig, hidden: &[usize]) -> (f64, f64) {
    let train = dataset.hide_labels(hidden);
    match fit_model(kernel, &train, cfg) {
        Ok(model) => {
            let dec = model.head.decision_rows(&model.features(kernel));
            let pred = model.head.classify_rows(&model.features(kernel));
            let (_, spread) = mean_std(&dec);
            let wrong = hidden.iter().filter(|&&i| pred[i] != dataset.labels()[i]).count();
            let hinge: f64 = hidden
                .iter()
                .map(|&i| {
                    let d = dataset.labels()[i] as f64 * dec[i];
                    let margin = if spread > 0.0 { d / spread } else { d.signum() };
                    (1.0 - margin).max(0.0)
                })
                .sum();
            let n = hidden.len() as f64;
            (wrong as f64 / n, hinge / n)
        }
        Err(e) => {
            log::warn!("fit failed for {cfg}: {e}");
            (f64::INFINITY, f64::INFINITY)
        }
    }
}

/// Transductive cross-validation with precomputed kernels: each fold's
/// labels are hidden (the points stay in the problem) and predicted.
pub fn cross_validate_with(dataset: &Dataset, configs: &[FitConfig], kernels: &KernelCache, plan: &SplitPlan) -> Result<CvReport> {
    if configs.is_empty() {
        return Err(Error::InvalidArgument("empty parameter grid".into()));
    }
    for c in configs {
        kernels.get(&c.kernel)?;
    }
    let folds = plan.folds();
    let tasks: Vec<(usize, usize)> = (0..configs.len()).flat_map(|c| (0..folds.len()).map(move |f| (c, f))).collect();
    let scores: Vec<(f64, f64)> = tasks
        .par_iter()
        .map(|&(c, f)| {
            let kernel = kernels.get(&configs[c].kernel).expect("checked above");
            fold_error(kernel, dataset, &configs[c], &folds[f])
        })
        .collect();
    let rows: Vec<CvRow> = configs
        .iter()
        .enumerate()
        .map(|(c, cfg)| {
            let block = &scores[c * folds.len()..(c + 1) * folds.len()];
            let fold_errors: Vec<f64> = block.iter().map(|s| s.0).collect();
            let (mean, std) = mean_std(&fold_errors);
            let hinge = block.iter().map(|s| s.1).sum::<f64>() / folds.len() as f64;
            CvRow {
                config: cfg.clone(),
                fold_errors,
                mean,
                std,
                hinge,
            }
        })
        .collect();
    let best = (0..rows.len())
        .min_by(|&a, &b| selection_order(&rows[a], &rows[b]))
        .expect("nonempty");
    Ok(CvReport { rows, best })
}

/// k-fold transductive cross-validation over the labeled points.
pub fn cross_validate(dataset: &Dataset, configs: &[FitConfig], folds: usize, seed: u64) -> Result<CvReport> {
    let plan = SplitPlan::new(dataset, folds, seed)?;
    let kernels = KernelCache::build(&dataset.points, configs)?;
    cross_validate_with(dataset, configs, &kernels, &plan)
}

/// Leave-one-out selection (one fold per labeled point).
pub fn loo_select(dataset: &Dataset, configs: &[FitConfig]) -> Result<CvReport> {
    let plan = SplitPlan::leave_one_out(dataset)?;
    let kernels = KernelCache::build(&dataset.points, configs)?;
    cross_validate_with(dataset, configs, &kernels, &plan)
}

/// Writes config columns, per-fold errors, mean and std.
pub fn write_cv_csv<W: Write>(report: &CvReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let folds = report.rows.first().map_or(0, |r| r.fold_errors.len());
    let mut header: Vec<String> = ["method", "kernel", "head", "c", "s2", "centered"].iter().map(|s| s.to_string()).collect();
    header.extend((0..folds).map(|f| format!("fold{f}")));
    header.extend(["mean".to_string(), "std".to_string(), "hinge".to_string(), "selected".to_string()]);
    w.write_record(&header)?;
    for (i, row) in report.rows.iter().enumerate() {
        let mut rec = vec![
            row.config.method.to_string(),
            row.config.kernel.to_string(),
            row.config.head.to_string(),
            format!("{}", row.config.c),
            row.config.s2.to_string(),
            row.config.centered.to_string(),
        ];
        rec.extend(row.fold_errors.iter().map(|e| format!("{e}")));
        rec.extend([
            format!("{}", row.mean),
            format!("{}", row.std),
            format!("{}", row.hinge),
            (i == report.best).to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// A benchmark entry: a fixed configuration, or a grid selected per split
/// by cross-validation.
#[derive(Debug, Clone)]
pub struct BenchMethod {
    pub name: String,
    pub configs: Vec<FitConfig>,
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub name: String,
    pub errors: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub labels: usize,
}

/// Name of the supervised baseline row.
pub const BASELINE_NAME: &str = "1nn";

/// For each split, draws `labels` labeled points (both classes present)
/// from the ground truth, runs every method and the 1-NN baseline, and
/// records the error on the remaining points.
pub fn run_bench(dataset: &Dataset, methods: &[BenchMethod], splits: usize, labels: usize, folds: usize, seed: u64) -> Result<BenchReport> {
    let truth = dataset
        .truth()
        .ok_or_else(|| Error::InvalidArgument("benchmark needs ground truth".into()))?
        .to_vec();
    if splits == 0 {
        return Err(Error::InvalidArgument("need at least one split".into()));
    }
    let all: Vec<FitConfig> = methods.iter().flat_map(|m| m.configs.iter().cloned()).collect();
    let kernels = KernelCache::build(&dataset.points, &all)?;
    let mut rng = rng_stream(seed, stream::SPLITS);
    let mut errors = vec![Vec::with_capacity(splits); methods.len() + 1];
    for split in 0..splits {
        let idx = sample_labeled_split(&truth, labels, &mut rng)?;
        let ds = dataset.relabel_from_truth(&idx)?;
        for (mi, method) in methods.iter().enumerate() {
            let cfg = match method.configs.len() {
                0 => return Err(Error::InvalidArgument(format!("method {} has no configurations", method.name))),
                1 => method.configs[0].clone(),
                _ => {
                    let plan = SplitPlan::new(&ds, folds.min(ds.labeled_indices().len()), seed.wrapping_add(split as u64))?;
                    cross_validate_with(&ds, &method.configs, &kernels, &plan)?.best().config.clone()
                }
            };
            let kernel = kernels.get(&cfg.kernel)?;
            let model = fit_model(kernel, &ds, &cfg)?;
            let err = unlabeled_error(&ds, &model.predict_training(kernel))?;
            log::info!("split {split}: {} error {err:.4} ({cfg})", method.name);
            errors[mi].push(err);
        }
        let err = unlabeled_error(&ds, &one_nn_predict(&ds)?)?;
        log::info!("split {split}: {BASELINE_NAME} error {err:.4}");
        errors[methods.len()].push(err);
    }
    let names = methods.iter().map(|m| m.name.clone()).chain(std::iter::once(BASELINE_NAME.to_string()));
    let rows = names
        .zip(errors)
        .map(|(name, errors)| {
            let (mean, std) = mean_std(&errors);
            BenchRow { name, errors, mean, std }
        })
        .collect();
    Ok(BenchReport { rows, labels })
}

/// `method,mean,std,split0,...` with errors in percent.
pub fn write_bench_csv<W: Write>(report: &BenchReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let splits = report.rows.first().map_or(0, |r| r.errors.len());
    let mut header = vec!["method".to_string(), "mean".to_string(), "std".to_string()];
    header.extend((0..splits).map(|s| format!("split{s}")));
    w.write_record(&header)?;
    for row in &report.rows {
        let mut rec = vec![row.name.clone(), format!("{}", 100.0 * row.mean), format!("{}", 100.0 * row.std)];
        rec.extend(row.errors.iter().map(|e| format!("{}", 100.0 * e)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `√(32 ln(4e) / 3)`.
pub fn risk_constant() -> f64 {
    (32.0 * (4.0f64.ln() + 1.0) / 3.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskBoundInput {
    /// Empirical risk on the labeled points, in [0, 1].
    pub empirical_risk: f64,
    /// Rank of the quadratic form defining the hypothesis class.
    pub q: usize,
    /// Constraint level s² (squared function-value units).
    pub s2: f64,
    pub l: usize,
    pub n: usize,
    /// Confidence parameter δ in (0, 1).
    pub delta: f64,
}

fn check_common(empirical: f64, l: usize, n: usize, delta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&empirical) {
        return Err(Error::InvalidArgument("empirical risk must lie in [0, 1]".into()));
    }
    if l == 0 || n == 0 {
        return Err(Error::InvalidArgument("need l ≥ 1 and n ≥ 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument("δ must lie in (0, 1)".into()));
    }
    Ok(())
}

/// `c·r·√min(l, n) + √(2r ln(1/δ))` with `r = 1/l + 1/n`.
fn slack_terms(l: usize, n: usize, delta: f64) -> f64 {
    let r = 1.0 / l as f64 + 1.0 / n as f64;
    risk_constant() * r * (l.min(n) as f64).sqrt() + (2.0 * r * (1.0 / delta).ln()).sqrt()
}

/// `R_l + √(2qs²/(ln)) + c·r·√min(l, n) + √(2r ln(1/δ))`.
pub fn risk_bound(input: &RiskBoundInput) -> Result<f64> {
    check_common(input.empirical_risk, input.l, input.n, input.delta)?;
    if !(input.s2 >= 0.0 && input.s2.is_finite()) {
        return Err(Error::InvalidArgument("s² must be finite and ≥ 0".into()));
    }
    let ln = input.l as f64 * input.n as f64;
    Ok(input.empirical_risk + (2.0 * input.q as f64 * input.s2 / ln).sqrt() + slack_terms(input.l, input.n, input.delta))
}

/// General form with a coefficient-norm bound μ:
/// `R_l + √(2μ²‖K‖²_F/(ln)) + c·r·√min(l, n) + √(2r ln(1/δ))`.
pub fn risk_bound_general(empirical_risk: f64, mu: f64, k_frobenius: f64, l: usize, n: usize, delta: f64) -> Result<f64> {
    check_common(empirical_risk, l, n, delta)?;
    if !(mu >= 0.0 && k_frobenius >= 0.0) {
        return Err(Error::InvalidArgument("μ and ‖K‖ must be ≥ 0".into()));
    }
    let ln = l as f64 * n as f64;
    Ok(empirical_risk + (2.0 * mu * mu * k_frobenius * k_frobenius / ln).sqrt() + slack_terms(l, n, delta))
}

/// Number of eigenvalues of the symmetric `a` above `tol·max|λ|`.
pub fn numerical_rank(a: &DMatrix<f64>, tol: f64) -> Result<usize> {
    let e = eigen::symmetric_eig(a)?;
    let max = e.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return Ok(0);
    }
    Ok(e.values.iter().filter(|v| v.abs() > tol * max).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_two_moons;

    #[test]
    fn threshold_basic() {
        let h = ThresholdHead::fit(&[-1.0, 1.0], &[-1, 1]).unwrap();
        assert_eq!(h.threshold, 0.0);
        assert_eq!(h.orientation, 1);
        assert_eq!(h.training_errors, 0);
        let all_pos = ThresholdHead::fit(&[0.3, -2.0, 5.0], &[1, 1, 1]).unwrap();
        assert_eq!(all_pos.threshold, f64::NEG_INFINITY);
        let all_neg = ThresholdHead::fit(&[0.3, -2.0], &[-1, -1]).unwrap();
        assert_eq!(all_neg.threshold, f64::INFINITY);
        assert_eq!(all_neg.classify(1e300), -1);
    }

    #[test]
    fn threshold_prefers_wider_gap() {
        // both 0.5 and 2.5 separate; the gap around 2.5 is wider
        let h = ThresholdHead::fit(&[0.0, 1.0, 4.0], &[-1, -1, 1]).unwrap();
        assert_eq!(h.threshold, 2.5);
        let flipped = ThresholdHead::fit(&[0.0, 1.0, 4.0], &[1, 1, -1]).unwrap();
        assert_eq!(flipped.orientation, -1);
        assert_eq!(flipped.training_errors, 0);
    }

    #[test]
    fn svm_two_points() {
        let x = DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]);
        let s = LinearSvm::fit(&x, &[-1, 1]).unwrap();
        assert!((s.w[0] - 1.0).abs() < 1e-9);
        assert!(s.b.abs() < 1e-9);
    }

    #[test]
    fn svm_one_class_constant() {
        let x = DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]);
        let s = LinearSvm::fit(&x, &[1, 1]).unwrap();
        assert_eq!(s.constant, Some(1));
        assert_eq!(s.classify(&[-100.0]), 1);
    }

    #[test]
    fn svm_nonseparable_still_classifies() {
        let x = DMatrix::from_row_slice(4, 1, &[-2.0, -1.0, 1.0, 0.5]);
        let s = LinearSvm::fit(&x, &[-1, 1, 1, -1]).unwrap();
        assert!(s.w.iter().all(|v| v.is_finite()) && s.b.is_finite());
    }

    #[test]
    fn error_rates() {
        assert_eq!(transductive_error(&[1, -1], &[1, -1]).unwrap(), 0.0);
        assert_eq!(transductive_error(&[1, -1], &[-1, 1]).unwrap(), 1.0);
        assert_eq!(transductive_error(&[1, 1, -1, -1], &[1, -1, 1, -1]).unwrap(), 0.5);
        assert!(transductive_error(&[1], &[1, 1]).is_err());
    }

    #[test]
    fn risk_constant_value() {
        let c = risk_constant();
        assert!((c - 5.0449).abs() < 1e-3 && c < 5.05);
    }

    #[test]
    fn risk_bound_term_dropout() {
        let input = RiskBoundInput {
            empirical_risk: 0.0,
            q: 0,
            s2: 123.0,
            l: 10,
            n: 40,
            delta: 0.1,
        };
        let r: f64 = 0.1 + 0.025;
        let expect = risk_constant() * r * 10f64.sqrt() + (2.0 * r * 10f64.ln()).sqrt();
        assert!((risk_bound(&input).unwrap() - expect).abs() < 1e-14);
        assert!(risk_bound(&RiskBoundInput { delta: 1.0, ..input }).is_err());
    }

    #[test]
    fn rank() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-12, 3.0, 0.0]));
        assert_eq!(numerical_rank(&a, 1e-10).unwrap(), 2);
    }

    #[test]
    fn grid_expansion() {
        let text = r#"
            version = 1
            kernel = "gaussian"
            gamma = [1, 2]
            c = [1.0, 10.0]
            s2 = [0.5]
            method = ["kpca", "mv", "ls"]
            head = ["threshold"]
        "#;
        let grid = ParamGrid::parse(text).unwrap();
        let configs = grid.expand().unwrap();
        // per γ: 1 kpca + 2 mv + 2 ls
        assert_eq!(configs.len(), 10);
        assert!(ParamGrid::parse("version = 2\nkernel = \"gaussian\"\nmethod = []").is_err());
        assert!(ParamGrid::parse("version = 1\nkernel = \"gaussian\"\nmethod = [\"ls\"]\nbogus = 1").is_err());
    }

    fn ls_cfg(gamma: f64, c: f64) -> FitConfig {
        FitConfig {
            kernel: KernelSpec::Gaussian { gamma },
            method: Method::Ls,
            head: Head::Threshold,
            c,
            s2: S2Level::Normalized(0.5),
            centered: true,
        }
    }

    #[test]
    fn cv_single_and_duplicate() {
        let d = gen_two_moons(60, 0.1, 4, 2).unwrap();
        let single = cross_validate(&d, &[ls_cfg(2.0, 1.0)], 4, 1).unwrap();
        assert_eq!(single.best, 0);
        let dup = cross_validate(&d, &[ls_cfg(2.0, 1.0), ls_cfg(2.0, 1.0)], 4, 1).unwrap();
        assert_eq!(dup.rows[0].fold_errors, dup.rows[1].fold_errors);
        assert!(cross_validate(&d, &[], 4, 1).is_err());
    }

    #[test]
    fn cv_independent_of_grid_order() {
        let d = gen_two_moons(60, 0.15, 4, 3).unwrap();
        let grid = vec![ls_cfg(0.5, 1.0), ls_cfg(2.0, 10.0), ls_cfg(8.0, 1.0), ls_cfg(2.0, 1.0)];
        let mut rev = grid.clone();
        rev.reverse();
        let a = cross_validate(&d, &grid, 4, 5).unwrap();
        let b = cross_validate(&d, &rev, 4, 5).unwrap();
        assert_eq!(a.best().config, b.best().config);
        let mut buf = Vec::new();
        write_cv_csv(&a, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }

    #[test]
    fn one_nn_on_labeled_points_is_exact() {
        let d = gen_two_moons(40, 0.1, 3, 2).unwrap();
        let pred = one_nn_predict(&d).unwrap();
        for &i in d.labeled_indices() {
            assert_eq!(pred[i], d.labels()[i]);
        }
    }
}

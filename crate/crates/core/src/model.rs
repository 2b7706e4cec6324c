//! Method configuration, the end-to-end fit (solver plus classification
//! head), and the plain-text model format.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::data::{groups_from_labels, Dataset};
use crate::error::{Error, Result};
use crate::eval::{FittedHead, LinearSvm, ThresholdHead};
use crate::kernels::{KernelMatrix, KernelSpec};
use crate::kpca::{kpca_fit, mvkpca_fit, SolutionFunction};
use crate::lrkpca::{lrkpca_fit, LrConfig, TraceRow};
use crate::lskpca::{lskpca_fit, normalized_s2, LsConfig};

const MAGIC: &str = "sskpca-model 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Kpca,
    Mv,
    Ls,
    Lr,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Kpca => "kpca",
            Method::Mv => "mv",
            Method::Ls => "ls",
            Method::Lr => "lr",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kpca" => Ok(Method::Kpca),
            "mv" => Ok(Method::Mv),
            "ls" => Ok(Method::Ls),
            "lr" => Ok(Method::Lr),
            _ => Err(Error::InvalidArgument(format!("unknown method {s:?} (kpca, mv, ls, lr)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Threshold on the first eigenfunction.
    Threshold,
    /// Linear SVM on up to ten eigenfunction values.
    Svm10,
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Head::Threshold => "threshold",
            Head::Svm10 => "svm10",
        })
    }
}

impl FromStr for Head {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(Head::Threshold),
            "svm10" => Ok(Head::Svm10),
            _ => Err(Error::InvalidArgument(format!("unknown head {s:?} (threshold, svm10)"))),
        }
    }
}

/// Variance level, either absolute or as `ρ` in `s² = ρ·m·mean(t²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum S2Level {
    Absolute(f64),
    Normalized(f64),
}

impl S2Level {
    pub fn resolve(&self, dataset: &Dataset) -> Result<f64> {
        match *self {
            S2Level::Absolute(v) => Ok(v),
            S2Level::Normalized(rho) => normalized_s2(rho, dataset),
        }
    }

    /// The raw number, used for ordering configurations.
    pub fn value(&self) -> f64 {
        match *self {
            S2Level::Absolute(v) | S2Level::Normalized(v) => v,
        }
    }
}

impl fmt::Display for S2Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            S2Level::Absolute(v) => write!(f, "{v}"),
            S2Level::Normalized(v) => write!(f, "rho:{v}"),
        }
    }
}

/// Everything needed to fit one model on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub kernel: KernelSpec,
    pub method: Method,
    pub head: Head,
    /// Loss weight (LS/LR) or within-group penalty (MV); unused by KPCA.
    pub c: f64,
    /// Unused by KPCA and MV.
    pub s2: S2Level,
    pub centered: bool,
}

impl FitConfig {
    /// Number of eigenfunctions the head consumes.
    pub fn components(&self) -> usize {
        match (self.method, self.head) {
            (Method::Kpca | Method::Mv, Head::Svm10) => 10,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidArgument(format!("c must be finite and ≥ 0, got {}", self.c)));
        }
        if matches!(self.method, Method::Ls | Method::Lr) && !(self.s2.value() > 0.0) {
            return Err(Error::InvalidArgument("s² must be positive".into()));
        }
        if self.method == Method::Mv && !self.centered {
            return Err(Error::InvalidArgument("MV-KPCA uses the centered variance".into()));
        }
        Ok(())
    }
}

impl fmt::Display for FitConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] head={} c={} s2={} {}",
            self.method,
            self.kernel,
            self.head,
            self.c,
            self.s2,
            if self.centered { "centered" } else { "uncentered" }
        )
    }
}

/// A fitted function set with its classification head.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub config: FitConfig,
    pub functions: Vec<SolutionFunction>,
    pub eigenvalues: Vec<f64>,
    pub head: FittedHead,
    /// Resolved variance level (LS/LR).
    pub s2: Option<f64>,
    pub zeta: Option<f64>,
    pub objective: Option<f64>,
    pub train_hash: String,
    /// LR iterations, when applicable.
    pub iterations: Option<usize>,
    /// LR objective trace; empty for the other methods and for loaded models.
    pub trace: Vec<TraceRow>,
}

impl FittedModel {
    /// Function values at the training points, one column per function.
    pub fn features(&self, kernel: &KernelMatrix) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = self.functions.iter().map(|f| f.training_values(kernel)).collect();
        DMatrix::from_columns(&cols)
    }

    /// Function values at new points (closed-form kernels only).
    pub fn features_at(&self, kernel: &KernelMatrix, queries: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let cols = self
            .functions
            .iter()
            .map(|f| f.predict_many(kernel, queries))
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_columns(&cols))
    }

    /// Predicted labels for every training point.
    pub fn predict_training(&self, kernel: &KernelMatrix) -> Vec<i8> {
        self.head.classify_rows(&self.features(kernel))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let line = |out: &mut String, s: String| {
            out.push_str(&s);
            out.push('\n');
        };
        line(&mut out, MAGIC.to_string());
        line(&mut out, format!("method {}", self.config.method));
        line(&mut out, format!("kernel {}", self.config.kernel));
        line(&mut out, format!("train-hash {}", self.train_hash));
        line(&mut out, format!("centered {}", self.config.centered));
        line(&mut out, format!("head-kind {}", self.config.head));
        line(&mut out, format!("c {}", self.config.c));
        match self.config.s2 {
            S2Level::Absolute(v) => line(&mut out, format!("s2-level absolute {v}")),
            S2Level::Normalized(v) => line(&mut out, format!("s2-level normalized {v}")),
        }
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x}"));
        line(&mut out, format!("s2 {}", opt(self.s2)));
        line(&mut out, format!("zeta {}", opt(self.zeta)));
        line(&mut out, format!("objective {}", opt(self.objective)));
        line(&mut out, format!("iterations {}", self.iterations.map_or("none".to_string(), |i| i.to_string())));
        line(&mut out, format!("head {}", self.head.to_text()));
        line(&mut out, format!("eigenvalues {}", join(&self.eigenvalues)));
        line(&mut out, format!("components {}", self.functions.len()));
        for f in &self.functions {
            line(&mut out, format!("mean {}", f.centering_mean));
            line(&mut out, format!("alpha {}", join(f.alpha.as_slice())));
        }
        out
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ")
}

/// Fits `cfg` on `dataset` using a kernel built on the same points.
pub fn fit_model(kernel: &KernelMatrix, dataset: &Dataset, cfg: &FitConfig) -> Result<FittedModel> {
    cfg.validate()?;
    if kernel.len() != dataset.len() {
        return Err(Error::DimensionMismatch("kernel and dataset sizes differ".into()));
    }
    if dataset.labeled_indices().is_empty() {
        return Err(Error::NoLabels);
    }
    let mut trace = Vec::new();
    let (functions, eigenvalues, s2, zeta, objective, iterations) = match cfg.method {
        Method::Kpca => {
            let basis = kpca_fit(kernel, cfg.centered, cfg.components())?;
            (basis.functions, basis.eigenvalues, None, None, None, None)
        }
        Method::Mv => {
            let groups = groups_from_labels(dataset)?;
            let basis = mvkpca_fit(kernel, &groups, cfg.c, cfg.components())?;
            (basis.functions, basis.eigenvalues, None, None, None, None)
        }
        Method::Ls => {
            let s2 = cfg.s2.resolve(dataset)?;
            let ls = LsConfig {
                c: cfg.c,
                s2,
                centered: cfg.centered,
            };
            let fit = lskpca_fit(kernel, dataset, &ls)?;
            (
                vec![fit.function],
                vec![fit.solution.zeta],
                Some(s2),
                Some(fit.solution.zeta),
                Some(fit.solution.objective),
                None,
            )
        }
        Method::Lr => {
            let s2 = cfg.s2.resolve(dataset)?;
            let mut lr = LrConfig::new(cfg.c, s2);
            lr.centered = cfg.centered;
            let fit = lrkpca_fit(kernel, dataset, &lr)?;
            trace = fit.trace;
            (
                vec![fit.function],
                vec![fit.solution.zeta],
                Some(s2),
                Some(fit.solution.zeta),
                Some(fit.objective),
                Some(fit.iterations),
            )
        }
    };
    let cols: Vec<DVector<f64>> = functions.iter().map(|f| f.training_values(kernel)).collect();
    let features = DMatrix::from_columns(&cols);
    let labeled = features.select_rows(dataset.labeled_indices());
    let t: Vec<i8> = dataset.labeled_indices().iter().map(|&i| dataset.labels()[i]).collect();
    let head = FittedHead::fit(cfg.head, &labeled, &t)?;
    Ok(FittedModel {
        config: cfg.clone(),
        functions,
        eigenvalues,
        head,
        s2,
        zeta,
        objective,
        train_hash: dataset.points_hash(),
        iterations,
        trace,
    })
}

/// A parsed model file, not yet attached to training data.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub config: FitConfig,
    pub train_hash: String,
    pub s2: Option<f64>,
    pub zeta: Option<f64>,
    pub objective: Option<f64>,
    pub iterations: Option<usize>,
    pub head: FittedHead,
    pub eigenvalues: Vec<f64>,
    pub means: Vec<f64>,
    pub alphas: Vec<DVector<f64>>,
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| fmt_err(format!("bad number {s:?}")))
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s == "none" {
        Ok(None)
    } else {
        parse_f64(s).map(Some)
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace().map(parse_f64).collect()
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(fmt_err("not a model file (bad first line)"));
        }
        let mut next = |key: &str| -> Result<String> {
            let l = lines.next().ok_or_else(|| fmt_err(format!("missing {key}")))?;
            match l.split_once(' ') {
                Some((k, v)) if k == key => Ok(v.to_string()),
                None if l == key => Ok(String::new()),
                _ => Err(fmt_err(format!("expected {key}, found {l:?}"))),
            }
        };
        let method: Method = next("method")?.parse()?;
        let kernel = KernelSpec::parse(&next("kernel")?)?;
        let train_hash = next("train-hash")?;
        let centered = match next("centered")?.as_str() {
            "true" => true,
            "false" => false,
            other => return Err(fmt_err(format!("bad centered flag {other:?}"))),
        };
        let head_kind: Head = next("head-kind")?.parse()?;
        let c = parse_f64(&next("c")?)?;
        let level = next("s2-level")?;
        let s2_level = match level.split_once(' ') {
            Some(("absolute", v)) => S2Level::Absolute(parse_f64(v)?),
            Some(("normalized", v)) => S2Level::Normalized(parse_f64(v)?),
            _ => return Err(fmt_err(format!("bad s2-level {level:?}"))),
        };
        let s2 = parse_opt(&next("s2")?)?;
        let zeta = parse_opt(&next("zeta")?)?;
        let objective = parse_opt(&next("objective")?)?;
        let iterations = match next("iterations")?.as_str() {
            "none" => None,
            v => Some(v.parse().map_err(|_| fmt_err("bad iteration count"))?),
        };
        let head = FittedHead::parse(&next("head")?)?;
        let eigenvalues = parse_list(&next("eigenvalues")?)?;
        let count: usize = next("components")?.parse().map_err(|_| fmt_err("bad component count"))?;
        let mut means = Vec::with_capacity(count);
        let mut alphas = Vec::with_capacity(count);
        for _ in 0..count {
            means.push(parse_f64(&next("mean")?)?);
            alphas.push(DVector::from_vec(parse_list(&next("alpha")?)?));
        }
        if alphas.windows(2).any(|w| w[0].len() != w[1].len()) {
            return Err(fmt_err("coefficient vectors differ in length"));
        }
        Ok(ModelFile {
            config: FitConfig {
                kernel,
                method,
                head: head_kind,
                c,
                s2: s2_level,
                centered,
            },
            train_hash,
            s2,
            zeta,
            objective,
            iterations,
            head,
            eigenvalues,
            means,
            alphas,
        })
    }

    /// Binds the coefficients to the kernel built on the training data.
    pub fn into_fitted(self, kernel: &KernelMatrix, train_hash: &str) -> Result<FittedModel> {
        if train_hash != self.train_hash {
            return Err(Error::InvalidArgument("training data does not match the model's training hash".into()));
        }
        if kernel.spec() != &self.config.kernel {
            return Err(Error::InvalidArgument("kernel does not match the model's kernel spec".into()));
        }
        if self.alphas.iter().any(|a| a.len() != kernel.len()) {
            return Err(Error::DimensionMismatch("coefficient count differs from training size".into()));
        }
        let functions = self
            .alphas
            .into_iter()
            .zip(self.means)
            .map(|(a, m)| SolutionFunction::new(a, kernel, m))
            .collect();
        Ok(FittedModel {
            config: self.config,
            functions,
            eigenvalues: self.eigenvalues,
            head: self.head,
            s2: self.s2,
            zeta: self.zeta,
            objective: self.objective,
            train_hash: self.train_hash,
            iterations: self.iterations,
            trace: Vec::new(),
        })
    }
}

impl FittedHead {
    pub fn to_text(&self) -> String {
        match self {
            FittedHead::Threshold(h) => format!("threshold {} {}", h.orientation, h.threshold),
            FittedHead::Svm(s) => match s.constant {
                Some(label) => format!("constant {label}"),
                None => format!("svm {} {}", s.b, join(s.w.as_slice())),
            },
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut parts = text.split_whitespace();
        match parts.next() {
            Some("threshold") => {
                let orientation: i8 = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .filter(|o| *o == 1 || *o == -1)
                    .ok_or_else(|| fmt_err("bad threshold orientation"))?;
                let threshold = parse_f64(parts.next().ok_or_else(|| fmt_err("missing threshold"))?)?;
                Ok(FittedHead::Threshold(ThresholdHead {
                    threshold,
                    orientation,
                    training_errors: 0,
                }))
            }
            Some("svm") => {
                let b = parse_f64(parts.next().ok_or_else(|| fmt_err("missing svm offset"))?)?;
                let w: Vec<f64> = parts.map(parse_f64).collect::<Result<_>>()?;
                Ok(FittedHead::Svm(LinearSvm::from_parts(DVector::from_vec(w), b)))
            }
            Some("constant") => {
                let label: i8 = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .filter(|o| *o == 1 || *o == -1)
                    .ok_or_else(|| fmt_err("bad constant label"))?;
                Ok(FittedHead::Svm(LinearSvm::constant(label, 0)))
            }
            _ => Err(fmt_err(format!("unknown head {text:?}"))),
        }
    }
}

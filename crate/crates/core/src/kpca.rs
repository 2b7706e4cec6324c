//! Kernel PCA and within-group-variance-penalised KPCA as generalised
//! eigenproblems, plus the fitted function type shared by all methods.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::data::GroupSet;
use crate::eigen::{self, Pencil};
use crate::error::{Error, Result};
use crate::kernels::{KernelMatrix, KernelSpec, VarianceOperator};

/// `f(x) = Σᵢ αᵢ k(xᵢ, x) − centering_mean`.
#[derive(Debug, Clone)]
pub struct SolutionFunction {
    pub alpha: DVector<f64>,
    pub spec: KernelSpec,
    /// Subtracted from every evaluation; the training mean of `Kα` for
    /// centered KPCA-type fits, zero otherwise.
    pub centering_mean: f64,
    points: Option<Arc<DMatrix<f64>>>,
}

impl SolutionFunction {
    pub fn new(alpha: DVector<f64>, kernel: &KernelMatrix, centering_mean: f64) -> Self {
        SolutionFunction {
            alpha,
            spec: kernel.spec().clone(),
            centering_mean,
            points: kernel.shared_points(),
        }
    }

    /// Function with the mean of its training values as offset.
    pub fn centered(alpha: DVector<f64>, kernel: &KernelMatrix) -> Self {
        let mean = if alpha.is_empty() { 0.0 } else { (kernel.matrix() * &alpha).mean() };
        Self::new(alpha, kernel, mean)
    }

    /// Values at the training points: `Kα − centering_mean`.
    pub fn training_values(&self, kernel: &KernelMatrix) -> DVector<f64> {
        (kernel.matrix() * &self.alpha).add_scalar(-self.centering_mean)
    }

    /// Values at arbitrary points (rows of `queries`); needs a kernel with a
    /// closed form off the training set.
    pub fn predict_many(&self, kernel: &KernelMatrix, queries: &DMatrix<f64>) -> Result<DVector<f64>> {
        if kernel.len() != self.alpha.len() {
            return Err(Error::DimensionMismatch("kernel size differs from coefficient count".into()));
        }
        let cross = kernel.cross(queries)?;
        Ok((cross.transpose() * &self.alpha).add_scalar(-self.centering_mean))
    }

    /// Value at a single point, using the training points captured at fit time.
    pub fn predict(&self, x: &DVector<f64>) -> Result<f64> {
        let points = self
            .points
            .as_deref()
            .ok_or_else(|| Error::Unsupported("function has no training points attached".into()))?;
        let gamma = match self.spec {
            KernelSpec::Gaussian { gamma } => gamma,
            _ => return Err(Error::Unsupported(format!("{} kernels cannot predict off the training set", self.spec.kind()))),
        };
        if x.len() != points.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "point has {} features, training data {}",
                x.len(),
                points.ncols()
            )));
        }
        let mut sum = 0.0;
        for i in 0..points.nrows() {
            let d2: f64 = points.row(i).iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            sum += self.alpha[i] * (-gamma * d2).exp();
        }
        Ok(sum - self.centering_mean)
    }
}

/// Top-k eigenfunctions with their eigenvalues, descending.
#[derive(Debug, Clone)]
pub struct EigenfunctionBasis {
    pub functions: Vec<SolutionFunction>,
    pub eigenvalues: Vec<f64>,
}

impl EigenfunctionBasis {
    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// Training values, one column per eigenfunction.
    pub fn training_values(&self, kernel: &KernelMatrix) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = self.functions.iter().map(|f| f.training_values(kernel)).collect();
        DMatrix::from_columns(&cols)
    }
}

/// Top-k maximisers of `αᵀPα / αᵀBα` (P from `factor`), rescaled to
/// `αᵀBα = 1`.
fn top_rayleigh(kernel: &KernelMatrix, factor: DMatrix<f64>, b: DMatrix<f64>, centered: bool, k: usize) -> Result<EigenfunctionBasis> {
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one eigenfunction".into()));
    }
    let pencil = Pencil::from_gram_factor(factor, b)?;
    let pairs = pencil.top(k)?;
    let mut functions = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for pair in pairs {
        let norm = pencil.b_form(&pair.vector);
        if !(norm > 0.0) {
            return Err(Error::Degenerate("eigenfunction norm"));
        }
        let alpha = pair.vector / norm.sqrt();
        functions.push(if centered {
            SolutionFunction::centered(alpha, kernel)
        } else {
            SolutionFunction::new(alpha, kernel, 0.0)
        });
        eigenvalues.push(pair.value);
    }
    Ok(EigenfunctionBasis { functions, eigenvalues })
}

/// Kernel PCA: maximise the (centered or uncentered) variance of the
/// function values subject to `αᵀKα = 1`.
pub fn kpca_fit(kernel: &KernelMatrix, centered: bool, k: usize) -> Result<EigenfunctionBasis> {
    let op = VarianceOperator::new(kernel.matrix(), centered)?;
    top_rayleigh(kernel, op.factor().clone(), kernel.matrix().clone(), centered, k)
}

/// `K + c·Σᵢ Kᵢᵀ(I − E)Kᵢ` with `Kᵢ` the rows of `K` in group `i`.
pub fn mv_constraint_matrix(k: &DMatrix<f64>, groups: &GroupSet, c: f64) -> Result<DMatrix<f64>> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("penalty c must be finite and ≥ 0, got {c}")));
    }
    let mut out = k.clone();
    if c == 0.0 {
        return Ok(out);
    }
    for g in groups.groups() {
        if g.iter().any(|&i| i >= k.nrows()) {
            return Err(Error::InvalidArgument("group index out of range".into()));
        }
        let mut rows = k.select_rows(g);
        for mut col in rows.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        out += rows.transpose() * rows * c;
    }
    eigen::symmetrize(&mut out);
    Ok(out)
}

/// MV-KPCA: maximise centered variance relative to
/// `αᵀ(K + c·Σᵢ Kᵢᵀ(I − E)Kᵢ)α`, normalised so that this form equals 1.
pub fn mvkpca_fit(kernel: &KernelMatrix, groups: &GroupSet, c: f64, k: usize) -> Result<EigenfunctionBasis> {
    let b = mv_constraint_matrix(kernel.matrix(), groups, c)?;
    let op = VarianceOperator::centered(kernel.matrix())?;
    top_rayleigh(kernel, op.factor().clone(), b, true, k)
}

/// Sum over groups of the squared deviations of `f` from each group mean.
pub fn within_group_variance(f: &DVector<f64>, groups: &GroupSet) -> f64 {
    groups
        .groups()
        .iter()
        .map(|g| {
            let mean = g.iter().map(|&i| f[i]).sum::<f64>() / g.len() as f64;
            g.iter().map(|&i| (f[i] - mean).powi(2)).sum::<f64>()
        })
        .sum()
}

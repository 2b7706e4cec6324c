//! Least-squares KPCA: minimise `αᵀKα + c‖K_𝓛α − t‖²` subject to a fixed
//! variance `αᵀPα = s²` of the function values.

use nalgebra::{DMatrix, DVector};

use crate::cqp::{self, CqpProblem, CqpSolution};
use crate::data::Dataset;
use crate::eigen;
use crate::error::{Error, Result};
use crate::kernels::{laplacian_pinv, Graph, KernelMatrix, VarianceOperator};
use crate::kpca::SolutionFunction;

/// Number of tenfold jitter increases tried when `C` fails to factor.
const JITTER_ESCALATIONS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct LsConfig {
    /// Weight of the labeled squared loss.
    pub c: f64,
    /// Variance level of the constraint.
    pub s2: f64,
    /// Centered (`Kᵀ(I − E)K`) or uncentered (`KᵀK`) variance.
    pub centered: bool,
}

impl LsConfig {
    /// Centered configuration.
    pub fn new(c: f64, s2: f64) -> Self {
        LsConfig { c, s2, centered: true }
    }

    pub fn uncentered(c: f64, s2: f64) -> Self {
        LsConfig { c, s2, centered: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidArgument(format!("c must be finite and ≥ 0, got {}", self.c)));
        }
        if !(self.s2 > 0.0 && self.s2.is_finite()) {
            return Err(Error::InvalidArgument(format!("s² must be finite and > 0, got {}", self.s2)));
        }
        Ok(())
    }
}

/// `s² = ρ·m·mean(t²)`: a variance level that transfers across dataset sizes.
pub fn normalized_s2(rho: f64, dataset: &Dataset) -> Result<f64> {
    let t = dataset.targets();
    if t.is_empty() {
        return Err(Error::NoLabels);
    }
    Ok(rho * dataset.len() as f64 * t.norm_squared() / t.len() as f64)
}

#[derive(Debug, Clone)]
pub struct LsFit {
    pub function: SolutionFunction,
    pub solution: CqpSolution,
    pub config: LsConfig,
    /// Ridge that was added to `K` inside `C`.
    pub jitter: f64,
}

/// Labeled rows of `K` and the labels, in labeled-index order.
pub(crate) fn labeled_block(kernel: &KernelMatrix, dataset: &Dataset) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if kernel.len() != dataset.len() {
        return Err(Error::DimensionMismatch(format!(
            "kernel is {}×{}, dataset has {} points",
            kernel.len(),
            kernel.len(),
            dataset.len()
        )));
    }
    if dataset.labeled_indices().is_empty() {
        return Err(Error::NoLabels);
    }
    Ok((kernel.matrix().select_rows(dataset.labeled_indices()), dataset.targets()))
}

/// `K + jitter·I + c·K_𝓛ᵀ diag(weights) K_𝓛`.
pub(crate) fn weighted_c(k: &DMatrix<f64>, jitter: f64, k_l: &DMatrix<f64>, weights: &DVector<f64>, c: f64) -> DMatrix<f64> {
    let scaled = DMatrix::from_fn(k_l.nrows(), k_l.ncols(), |i, j| k_l[(i, j)] * weights[i] * c);
    let mut out = k + k_l.transpose() * scaled;
    for i in 0..out.nrows() {
        out[(i, i)] += jitter;
    }
    eigen::symmetrize(&mut out);
    out
}

/// The instance `(C, b, P, s²)` with `C = K + cK_𝓛ᵀK_𝓛`, `b = cK_𝓛ᵀt`.
pub fn ls_problem(kernel: &KernelMatrix, dataset: &Dataset, cfg: &LsConfig) -> Result<CqpProblem> {
    ls_problem_with_jitter(kernel, dataset, cfg, kernel.jitter())
}

fn ls_problem_with_jitter(kernel: &KernelMatrix, dataset: &Dataset, cfg: &LsConfig, jitter: f64) -> Result<CqpProblem> {
    cfg.validate()?;
    let (k_l, t) = labeled_block(kernel, dataset)?;
    let ones = DVector::from_element(t.len(), 1.0);
    let c = weighted_c(kernel.matrix(), jitter, &k_l, &ones, cfg.c);
    let b = k_l.transpose() * &t * cfg.c;
    let p = VarianceOperator::new(kernel.matrix(), cfg.centered)?.into_matrix();
    CqpProblem::new(c, b, p, cfg.s2)
}

/// Solves `problem_for(jitter)`, raising the ridge tenfold while `C` does
/// not factor.
pub(crate) fn solve_with_jitter<F>(base: f64, mut problem_for: F) -> Result<(CqpSolution, f64)>
where
    F: FnMut(f64) -> Result<CqpProblem>,
{
    let mut jitter = base;
    for attempt in 0..=JITTER_ESCALATIONS {
        let problem = problem_for(jitter)?;
        match cqp::solve_secular(&problem) {
            Err(Error::NotPositiveDefinite(_)) if attempt < JITTER_ESCALATIONS => {
                let next = if jitter > 0.0 { jitter * 10.0 } else { 1e-12 * problem.c.trace().abs().max(1.0) };
                log::debug!("C not positive definite with jitter {jitter:e}; retrying with {next:e}");
                jitter = next;
            }
            other => return other.map(|s| (s, jitter)),
        }
    }
    Err(Error::NotPositiveDefinite("C"))
}

/// Globally optimal LS-KPCA solution.
pub fn lskpca_fit(kernel: &KernelMatrix, dataset: &Dataset, cfg: &LsConfig) -> Result<LsFit> {
    cfg.validate()?;
    labeled_block(kernel, dataset)?;
    let (solution, jitter) = solve_with_jitter(kernel.jitter(), |j| ls_problem_with_jitter(kernel, dataset, cfg, j))?;
    let function = SolutionFunction::new(solution.alpha.clone(), kernel, 0.0);
    Ok(LsFit {
        function,
        solution,
        config: cfg.clone(),
        jitter,
    })
}

/// LS-KPCA with `K = L⁺` of a connected graph and the uncentered
/// constraint. The function values are orthogonal to the constant vector.
pub fn sgt_special_case(graph: &Graph, dataset: &Dataset, cfg: &LsConfig) -> Result<LsFit> {
    if cfg.centered {
        return Err(Error::InvalidArgument("the graph-transducer case uses the uncentered constraint".into()));
    }
    let kernel = laplacian_pinv(graph)?;
    lskpca_fit(&kernel, dataset, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_two_moons;
    use crate::kernels::{build_graph, gaussian_kernel};

    #[test]
    fn satisfies_constraint() {
        let d = gen_two_moons(60, 0.1, 3, 2).unwrap();
        let k = gaussian_kernel(&d.points, 2.0).unwrap();
        for cfg in [LsConfig::new(10.0, 5.0), LsConfig::uncentered(1.0, 30.0)] {
            let fit = lskpca_fit(&k, &d, &cfg).unwrap();
            let op = VarianceOperator::new(k.matrix(), cfg.centered).unwrap();
            let v = op.form(&fit.function.alpha);
            assert!((v - cfg.s2).abs() <= 1e-8 * cfg.s2, "{v}");
        }
    }

    #[test]
    fn label_flip_negates_solution() {
        let d = gen_two_moons(40, 0.1, 3, 4).unwrap();
        let flipped_labels: Vec<i8> = d.labels().iter().map(|&l| -l).collect();
        let flipped = Dataset::new(d.points.clone(), flipped_labels).unwrap();
        let k = gaussian_kernel(&d.points, 1.0).unwrap();
        let cfg = LsConfig::new(5.0, 8.0);
        let a = lskpca_fit(&k, &d, &cfg).unwrap().function.alpha;
        let b = lskpca_fit(&k, &flipped, &cfg).unwrap().function.alpha;
        assert!((a + b).norm() <= 1e-9 * 1f64.max(lskpca_fit(&k, &d, &cfg).unwrap().function.alpha.norm()));
    }

    #[test]
    fn needs_labels() {
        let d = gen_two_moons(20, 0.1, 0, 1).unwrap();
        let k = gaussian_kernel(&d.points, 1.0).unwrap();
        assert!(matches!(lskpca_fit(&k, &d, &LsConfig::new(1.0, 1.0)), Err(Error::NoLabels)));
        let d1 = gen_two_moons(20, 0.1, 1, 1).unwrap();
        assert!(lskpca_fit(&k, &d1, &LsConfig::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn sgt_balanced() {
        let d = gen_two_moons(50, 0.1, 3, 6).unwrap();
        let g = build_graph(&d.points, 5).unwrap();
        let fit = sgt_special_case(&g, &d, &LsConfig::uncentered(10.0, 50.0)).unwrap();
        let k = laplacian_pinv(&g).unwrap();
        let f = fit.function.training_values(&k);
        assert!(f.sum().abs() <= 1e-8 * f.norm());
        assert!(sgt_special_case(&g, &d, &LsConfig::new(10.0, 50.0)).is_err());
    }

    #[test]
    fn normalized_level() {
        let d = gen_two_moons(40, 0.1, 2, 1).unwrap();
        assert_eq!(normalized_s2(0.5, &d).unwrap(), 20.0);
    }
}

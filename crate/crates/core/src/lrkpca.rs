//! LR-KPCA: iteratively reweighted LS-KPCA realising a sigmoid loss on the
//! labeled points, with a proximal term that is increased until the
//! monitored objective strictly decreases.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::cqp::{CqpProblem, CqpSolution};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{KernelMatrix, VarianceOperator};
use crate::kpca::SolutionFunction;
use crate::lskpca::{labeled_block, lskpca_fit, solve_with_jitter, weighted_c, LsConfig};

/// Clipping range of `z` before it is divided by.
pub const Z_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LrConfig {
    pub c: f64,
    pub s2: f64,
    pub centered: bool,
    pub max_iterations: usize,
    /// Stop once `‖αₙ₊₁ − αₙ‖ / ‖αₙ‖` falls below this.
    pub tol: f64,
    /// First proximal weight; `None` means `1e-4·trace(K)/m`.
    pub lambda0: Option<f64>,
    pub growth: f64,
    pub max_escalations: usize,
}

impl LrConfig {
    pub fn new(c: f64, s2: f64) -> Self {
        LrConfig {
            c,
            s2,
            centered: true,
            max_iterations: 50,
            tol: 1e-8,
            lambda0: None,
            growth: 10.0,
            max_escalations: 12,
        }
    }

    pub fn ls(&self) -> LsConfig {
        LsConfig {
            c: self.c,
            s2: self.s2,
            centered: self.centered,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ls().validate()?;
        if !(self.growth > 1.0) {
            return Err(Error::InvalidArgument("proximal growth factor must exceed 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("convergence tolerance must be positive".into()));
        }
        if let Some(l) = self.lambda0 {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidArgument("λ₀ must be finite and positive".into()));
            }
        }
        Ok(())
    }
}

/// Per-point weights and working responses of one reweighting step.
#[derive(Debug, Clone)]
pub struct Reweight {
    pub z: DVector<f64>,
    pub r: DVector<f64>,
    pub s: DVector<f64>,
}

/// `1/(1 + e^{−x})` without overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `zᵢ = σ(tᵢgᵢ)`, `rᵢ = zᵢ(1 − zᵢ)`, `sᵢ = gᵢ − (zᵢ − tᵢ)(1 − zᵢ)/zᵢ`.
pub fn reweight(g: &DVector<f64>, t: &DVector<f64>) -> Reweight {
    let z = g.zip_map(t, |g, t| sigmoid(t * g).clamp(Z_CLIP, 1.0 - Z_CLIP));
    let r = z.map(|z| z * (1.0 - z));
    let s = DVector::from_fn(g.len(), |i, _| g[i] - (z[i] - t[i]) * (1.0 - z[i]) / z[i]);
    Reweight { z, r, s }
}

/// `αᵀKα + c·Σᵢ σ(−tᵢgᵢ)` with `g = K_𝓛α`.
pub fn lr_objective(alpha: &DVector<f64>, k: &DMatrix<f64>, k_l: &DMatrix<f64>, t: &DVector<f64>, c: f64) -> f64 {
    let g = k_l * alpha;
    let loss: f64 = g.iter().zip(t.iter()).map(|(&g, &t)| sigmoid(-t * g)).sum();
    alpha.dot(&(k * alpha)) + c * loss
}

/// Gradient of the loss term `c·Σᵢ σ(−tᵢgᵢ)` with respect to α:
/// `−c·K_𝓛ᵀ(t ∘ z ∘ (1 − z))`.
pub fn lr_loss_gradient(alpha: &DVector<f64>, k_l: &DMatrix<f64>, t: &DVector<f64>, c: f64) -> DVector<f64> {
    let g = k_l * alpha;
    let w = DVector::from_fn(g.len(), |i, _| {
        let z = sigmoid(t[i] * g[i]);
        -t[i] * z * (1.0 - z)
    });
    k_l.transpose() * w * c
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub lambda: f64,
    /// Relative step `‖αₙ₊₁ − αₙ‖ / ‖αₙ‖`.
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct LrFit {
    pub function: SolutionFunction,
    pub solution: CqpSolution,
    /// Row 0 is the LS-KPCA start; one row per accepted step after it.
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub converged: bool,
    /// The escalation limit was reached without an improving step.
    pub stalled: bool,
    pub objective: f64,
}

/// Iteratively reweighted fit, started from LS-KPCA with the same `(c, s²)`.
pub fn lrkpca_fit(kernel: &KernelMatrix, dataset: &Dataset, cfg: &LrConfig) -> Result<LrFit> {
    cfg.validate()?;
    let (k_l, t) = labeled_block(kernel, dataset)?;
    let k = kernel.matrix();
    let m = kernel.len();
    let p = VarianceOperator::new(k, cfg.centered)?.into_matrix();
    let lambda0 = cfg.lambda0.unwrap_or(1e-4 * k.trace().abs() / m as f64).max(f64::MIN_POSITIVE);

    let start = lskpca_fit(kernel, dataset, &cfg.ls())?;
    let mut jitter = start.jitter;
    let mut solution = start.solution;
    let mut alpha = solution.alpha.clone();
    let mut objective = lr_objective(&alpha, k, &k_l, &t, cfg.c);
    let mut trace = vec![TraceRow {
        iteration: 0,
        objective,
        lambda: 0.0,
        step: 0.0,
    }];
    let mut converged = false;
    let mut stalled = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let rw = reweight(&(&k_l * &alpha), &t);
        let rs = rw.r.component_mul(&rw.s);
        let b_base = k_l.transpose() * rs * cfg.c;
        let alpha_norm = alpha.norm().max(f64::MIN_POSITIVE);
        let mut lambda = lambda0;
        let mut accepted = None;
        for _ in 0..=cfg.max_escalations {
            let (cand, used_jitter) = solve_with_jitter(jitter, |j| {
                let c = weighted_c(k, j + lambda, &k_l, &rw.r, cfg.c);
                let b = &b_base + &alpha * lambda;
                CqpProblem::new(c, b, p.clone(), cfg.s2)
            })?;
            jitter = used_jitter;
            let step = (&cand.alpha - &alpha).norm() / alpha_norm;
            let cand_obj = lr_objective(&cand.alpha, k, &k_l, &t, cfg.c);
            if cand_obj < objective {
                accepted = Some((cand, cand_obj, step, lambda));
                break;
            }
            if step < cfg.tol {
                // no measurable move left: stationary
                converged = true;
                break;
            }
            lambda *= cfg.growth;
        }
        match accepted {
            Some((cand, cand_obj, step, lambda)) => {
                alpha = cand.alpha.clone();
                solution = cand;
                objective = cand_obj;
                trace.push(TraceRow {
                    iteration: iterations,
                    objective,
                    lambda,
                    step,
                });
                if step < cfg.tol {
                    converged = true;
                }
            }
            None if !converged => {
                stalled = true;
                log::warn!("proximal escalation limit reached at iteration {iterations}; returning best iterate");
            }
            None => {}
        }
        if converged || stalled {
            break;
        }
    }

    let function = SolutionFunction::new(alpha, kernel, 0.0);
    Ok(LrFit {
        function,
        solution,
        trace,
        iterations,
        converged,
        stalled,
        objective,
    })
}

/// Writes `iteration,objective,lambda,step` rows.
pub fn write_trace_csv<W: Write>(trace: &[TraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iteration", "objective", "lambda", "step"])?;
    for row in trace {
        w.write_record(&[
            row.iteration.to_string(),
            format!("{}", row.objective),
            format!("{}", row.lambda),
            format!("{}", row.step),
        ])?;
    }
    w.flush()?;
    Ok(())
}

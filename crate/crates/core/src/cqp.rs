//! Globally optimal solution of the non-convex quadratic program
//!
//! ```text
//! minimise αᵀCα − 2bᵀα   subject to   αᵀPα = s²
//! ```
//!
//! with `C` positive definite and `P` positive semi-definite.
//!
//! Stationarity gives `α(ζ) = (C − ζP)⁻¹ b`. For `ζ` below the left edge `δ`
//! of the pencil `(C, P)` the secular function `f(ζ) = α(ζ)ᵀPα(ζ) − s²` is
//! nondecreasing, tends to `−s²` as `ζ → −∞`, and the global minimiser is at
//! its unique root left of `δ`. Each evaluation of `f` costs one Cholesky
//! factorisation of `C − ζP`; the root is found with Brent's method.
//!
//! Directions in the null space of `P` are invisible to the constraint, and
//! `(C − ζP)⁻¹ b` already minimises the objective over them.
//!
//! When `b` has no component along the critical pencil vector `u` the
//! secular function stays bounded up to `δ` and may never reach zero (the
//! hard case). The solution is then `ζ⋆ = δ` with the minimum-norm solution
//! of the singular system plus the multiple of `u` that meets the constraint.

use nalgebra::{DMatrix, DVector};

use crate::eigen::{self, check_finite, check_square, Cholesky, WhitenedPencil};
use crate::error::{Error, Result};
use crate::roots::{self, Tolerance};

/// Relative size of `b` along the critical subspace below which the hard
/// case is considered.
pub const HARD_CASE_TOL: f64 = 1e-10;
/// Eigenvalues within this relative distance of the extreme one are treated
/// as a single (possibly multiple) critical eigenvalue.
const CLUSTER_TOL: f64 = 1e-10;
const MAX_DOUBLINGS: usize = 200;
const MAX_BRENT_ITERATIONS: usize = 200;
/// Largest problem the 2m-eigenproblem oracle accepts.
pub const ORACLE_MAX_DIM: usize = 200;

#[derive(Debug, Clone)]
pub struct CqpProblem {
    pub c: DMatrix<f64>,
    pub b: DVector<f64>,
    pub p: DMatrix<f64>,
    pub s2: f64,
}

impl CqpProblem {
    pub fn new(c: DMatrix<f64>, b: DVector<f64>, p: DMatrix<f64>, s2: f64) -> Result<Self> {
        let problem = CqpProblem { c, b, p, s2 };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        check_square(&self.c, "C")?;
        check_square(&self.p, "P")?;
        let m = self.c.nrows();
        if self.p.nrows() != m || self.b.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "C is {m}×{m}, P is {}×{}, b has length {}",
                self.p.nrows(),
                self.p.ncols(),
                self.b.len()
            )));
        }
        check_finite(&self.c, "C")?;
        check_finite(&self.p, "P")?;
        if self.b.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("b"));
        }
        if !(self.s2 > 0.0) || !self.s2.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "constraint level s² must be positive, got {}",
                self.s2
            )));
        }
        for (mat, name) in [(&self.c, "C"), (&self.p, "P")] {
            if eigen::asymmetry(mat) > 1e-8 {
                return Err(Error::InvalidArgument(format!("{name} is not symmetric")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// `αᵀCα − 2bᵀα`.
    pub fn objective(&self, alpha: &DVector<f64>) -> f64 {
        alpha.dot(&(&self.c * alpha)) - 2.0 * self.b.dot(alpha)
    }

    /// `αᵀPα`.
    pub fn constraint_value(&self, alpha: &DVector<f64>) -> f64 {
        alpha.dot(&(&self.p * alpha))
    }

    /// `‖(C − ζP)α − b‖`.
    pub fn kkt_residual(&self, alpha: &DVector<f64>, zeta: f64) -> f64 {
        (&self.c * alpha - &self.p * alpha * zeta - &self.b).norm()
    }
}

#[derive(Debug, Clone)]
pub struct CqpSolution {
    pub alpha: DVector<f64>,
    /// Lagrange multiplier ζ⋆.
    pub zeta: f64,
    pub objective: f64,
    pub hard_case: bool,
    /// `|αᵀPα − s²| / s²`.
    pub residual: f64,
    /// Left edge δ of the pencil `(C, P)`.
    pub delta: f64,
    /// Number of secular-function evaluations.
    pub evaluations: usize,
}

fn finish(problem: &CqpProblem, alpha: DVector<f64>, zeta: f64, delta: f64, hard_case: bool, evaluations: usize) -> CqpSolution {
    let residual = (problem.constraint_value(&alpha) - problem.s2).abs() / problem.s2;
    let objective = problem.objective(&alpha);
    CqpSolution {
        alpha,
        zeta,
        objective,
        hard_case,
        residual,
        delta,
        evaluations,
    }
}

fn secular_alpha(problem: &CqpProblem, zeta: f64) -> Result<(DVector<f64>, f64)> {
    let shifted = &problem.c - &problem.p * zeta;
    let chol = Cholesky::new(&shifted).ok_or(Error::OutsideSecularDomain { zeta })?;
    let alpha = chol.solve(&problem.b);
    let value = problem.constraint_value(&alpha) - problem.s2;
    Ok((alpha, value))
}

/// `f(ζ) = α(ζ)ᵀPα(ζ) − s²` with `α(ζ) = (C − ζP)⁻¹b`, defined for ζ < δ.
pub fn secular_value(problem: &CqpProblem, zeta: f64) -> Result<f64> {
    problem.validate()?;
    if !zeta.is_finite() {
        return Err(Error::NonFinite("ζ"));
    }
    secular_alpha(problem, zeta).map(|(_, v)| v)
}

/// Root of a nondecreasing secular function on `(−∞, δ)`.
///
/// `f` returns `Err(OutsideSecularDomain)` where it cannot be evaluated
/// (numerically at or beyond the pole). `initial_gap` is the distance left of
/// `δ` where `f` is expected to be nonnegative.
fn locate_root<F>(mut f: F, delta: f64, initial_gap: f64, s2: f64) -> Result<roots::Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    let scale = delta.abs().max(1.0);
    let mut gap = if initial_gap.is_finite() && initial_gap > 0.0 {
        initial_gap
    } else {
        1e-3 * scale
    };
    let mut hi: Option<(f64, f64)> = None;
    let mut lo: Option<(f64, f64)> = None;
    for _ in 0..MAX_DOUBLINGS {
        let z = delta - gap;
        match f(z) {
            Ok(v) if v >= 0.0 => {
                hi = Some((z, v));
                break;
            }
            Ok(v) => {
                lo = Some((z, v));
                gap *= 0.5;
                if gap <= f64::EPSILON * scale {
                    break;
                }
            }
            Err(Error::OutsideSecularDomain { .. }) => gap *= 2.0,
            Err(e) => return Err(e),
        }
    }
    let (hi_z, hi_v) = hi.ok_or_else(|| {
        Error::IllConditioned(format!(
            "secular function could not be evaluated at a positive value left of δ = {delta}"
        ))
    })?;
    if hi_v == 0.0 {
        return Ok(roots::Root { x: hi_z, fx: hi_v, iterations: 0 });
    }
    let (lo_z, lo_v) = match lo {
        Some(pair) => pair,
        None => {
            let mut d = scale.max(2.0 * (delta - hi_z));
            let mut found = None;
            for _ in 0..MAX_DOUBLINGS {
                let z = delta - d;
                match f(z) {
                    Ok(v) if v < 0.0 => {
                        found = Some((z, v));
                        break;
                    }
                    Ok(_) | Err(Error::OutsideSecularDomain { .. }) => d *= 2.0,
                    Err(e) => return Err(e),
                }
            }
            found.ok_or_else(|| {
                Error::IllConditioned(format!(
                    "bracket expansion exceeded {MAX_DOUBLINGS} doublings"
                ))
            })?
        }
    };
    let tol = Tolerance {
        x_abs: f64::EPSILON * scale,
        x_rel: 0.0,
        f_abs: 1e-13 * s2,
        max_iter: MAX_BRENT_ITERATIONS,
    };
    roots::brent(f, lo_z, lo_v, hi_z, hi_v, tol)
}

/// Secular data of a problem in whitened coordinates `w`, where
/// `αᵀCα = ‖w‖²`, `αᵀPα = Σ qᵢwᵢ²` and `bᵀα = βᵀw`.
struct Spectral<'a> {
    q: &'a DVector<f64>,
    beta: DVector<f64>,
    critical: Vec<usize>,
    beta_critical: f64,
}

impl<'a> Spectral<'a> {
    fn new(q: &'a DVector<f64>, beta: DVector<f64>) -> Self {
        let n = q.len();
        let q_max = q[n - 1];
        let critical: Vec<usize> = (0..n).filter(|&i| q[i] >= q_max * (1.0 - CLUSTER_TOL)).collect();
        let beta_critical = critical.iter().map(|&i| beta[i] * beta[i]).sum::<f64>().sqrt();
        Spectral {
            q,
            beta,
            critical,
            beta_critical,
        }
    }

    fn q_max(&self) -> f64 {
        self.q[self.q.len() - 1]
    }

    fn is_critical(&self, i: usize) -> bool {
        self.critical.contains(&i)
    }

    fn hard_case_candidate(&self) -> bool {
        let norm = self.beta.norm();
        norm == 0.0 || self.beta_critical <= HARD_CASE_TOL * norm
    }

    /// Constraint value of the non-critical components at ζ = δ.
    fn noncritical_at_edge(&self) -> f64 {
        let delta = 1.0 / self.q_max();
        (0..self.q.len())
            .filter(|&i| !self.is_critical(i))
            .map(|i| {
                let w = self.beta[i] / (1.0 - delta * self.q[i]);
                self.q[i] * w * w
            })
            .sum()
    }

    /// Hard-case coordinates: non-critical components at ζ = δ plus the
    /// nonnegative multiple of the top critical direction meeting `s²`.
    fn hard_case_coordinates(&self, s2: f64) -> DVector<f64> {
        let n = self.q.len();
        let delta = 1.0 / self.q_max();
        let mut w = DVector::zeros(n);
        for i in 0..n {
            if !self.is_critical(i) {
                w[i] = self.beta[i] / (1.0 - delta * self.q[i]);
            }
        }
        let rest = (s2 - self.noncritical_at_edge()).max(0.0);
        w[n - 1] = (rest / self.q_max()).sqrt();
        w
    }
}

/// Global minimiser via Brent's method on the implicit secular function.
pub fn solve_secular(problem: &CqpProblem) -> Result<CqpSolution> {
    problem.validate()?;
    let wp = WhitenedPencil::new(&problem.c, &problem.p)?;
    let delta = wp.delta();
    let spectral = Spectral::new(&wp.q, wp.whiten(&problem.b));
    let s = problem.s2.sqrt();

    let initial_gap = if spectral.hard_case_candidate() {
        if spectral.noncritical_at_edge() <= problem.s2 {
            let w = spectral.hard_case_coordinates(problem.s2);
            let alpha = wp.unwhiten(&w);
            return Ok(finish(problem, alpha, delta, delta, true, 0));
        }
        // Bounded at the pole but already above s²: the root is left of δ.
        f64::NAN
    } else {
        // |uᵀb| / s with uᵀPu = 1 over the critical subspace.
        spectral.beta_critical / spectral.q_max().sqrt() / s
    };

    let mut evaluations = 0usize;
    let root = locate_root(
        |z| {
            evaluations += 1;
            secular_alpha(problem, z).map(|(_, v)| v)
        },
        delta,
        initial_gap,
        problem.s2,
    )?;
    log::debug!("secular root ζ = {} (f = {:e}) after {} Brent steps", root.x, root.fx, root.iterations);
    let (alpha, _) = secular_alpha(problem, root.x)?;
    evaluations += 1;
    let sol = finish(problem, alpha, root.x, delta, false, evaluations);
    if sol.residual > 1e-8 {
        log::warn!(
            "secular solve left constraint residual {:.3e} (ζ = {}, δ = {})",
            sol.residual,
            sol.zeta,
            delta
        );
    }
    Ok(sol)
}

/// Cholesky of `C` on the null space of `P`, with `C_NR` and `b_N`.
type NullSolve = (Cholesky, DMatrix<f64>, DVector<f64>);

/// Reference solver through the 2m×2m eigenproblem.
///
/// The null space of `P` is first eliminated by a Schur complement (the
/// constraint does not see it), the remaining coordinates are whitened by
/// `P`, and ζ⋆ is the smallest real eigenvalue of
/// `[[G, −I], [−hhᵀ/s², G]]`. Only intended as a test oracle: the
/// unsymmetric eigenproblem is poorly conditioned at scale.
pub fn solve_eig_oracle(problem: &CqpProblem) -> Result<CqpSolution> {
    problem.validate()?;
    let m = problem.dim();
    if m > ORACLE_MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "oracle limited to m ≤ {ORACLE_MAX_DIM}, got {m}"
        )));
    }
    let ep = eigen::symmetric_eig(&problem.p)?;
    let p_max = ep.max_value();
    if !(p_max > 0.0) {
        return Err(Error::Degenerate("P"));
    }
    let range: Vec<usize> = (0..m).filter(|&i| ep.values[i] > eigen::DEFAULT_RANGE_TOLERANCE * p_max).collect();
    let null: Vec<usize> = (0..m).filter(|i| !range.contains(i)).collect();
    let vr = ep.vectors.select_columns(&range);
    let vn = ep.vectors.select_columns(&null);
    let r = range.len();

    let c_rr = vr.transpose() * &problem.c * &vr;
    let b_r = vr.transpose() * &problem.b;
    let (schur, g_r, null_solve): (DMatrix<f64>, DVector<f64>, Option<NullSolve>) =
        if null.is_empty() {
            (c_rr, b_r, None)
        } else {
            let c_nn = vn.transpose() * &problem.c * &vn;
            let c_nr = vn.transpose() * &problem.c * &vr;
            let b_n = vn.transpose() * &problem.b;
            let chol = Cholesky::new(&c_nn).ok_or(Error::NotPositiveDefinite("C on the null space of P"))?;
            let mut cinv_cnr = DMatrix::zeros(null.len(), r);
            for j in 0..r {
                cinv_cnr.set_column(j, &chol.solve(&c_nr.column(j).into_owned()));
            }
            let cinv_bn = chol.solve(&b_n);
            let schur = &c_rr - c_nr.transpose() * &cinv_cnr;
            let g = &b_r - c_nr.transpose() * &cinv_bn;
            (schur, g, Some((chol, c_nr, b_n)))
        };

    let inv_sqrt_p: Vec<f64> = range.iter().map(|&i| 1.0 / ep.values[i].sqrt()).collect();
    let mut g = DMatrix::from_fn(r, r, |i, j| schur[(i, j)] * inv_sqrt_p[i] * inv_sqrt_p[j]);
    eigen::symmetrize(&mut g);
    let h = DVector::from_fn(r, |i, _| g_r[i] * inv_sqrt_p[i]);

    let mut block = DMatrix::zeros(2 * r, 2 * r);
    block.view_mut((0, 0), (r, r)).copy_from(&g);
    block.view_mut((r, r), (r, r)).copy_from(&g);
    for i in 0..r {
        block[(i, r + i)] = -1.0;
    }
    let hh = &h * h.transpose() / problem.s2;
    block.view_mut((r, 0), (r, r)).copy_from(&(-hh));

    let schur_form = nalgebra::Schur::try_new(block, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Eigen("unsymmetric Schur iteration did not converge".into()))?;
    let eigs = schur_form.complex_eigenvalues();
    let scale = g.amax().max(1.0);
    let zeta = eigs
        .iter()
        .filter(|z| z.im.abs() <= 1e-9 * scale)
        .map(|z| z.re)
        .fold(f64::INFINITY, f64::min);

    let eg = eigen::symmetric_eig(&g)?;
    let edge = eg.values[0];
    if !zeta.is_finite() || zeta > edge + 1e-8 * edge.abs().max(1.0) {
        return Err(Error::NoConvergence(format!(
            "no real eigenvalue at or below δ = {edge} in the oracle pencil"
        )));
    }

    let gap_tol = 1e-8 * edge.abs().max(1.0);
    if edge - zeta > gap_tol {
        let shifted = &problem.c - &problem.p * zeta;
        let alpha = shifted
            .lu()
            .solve(&problem.b)
            .ok_or_else(|| Error::IllConditioned("C − ζ⋆P is singular".into()))?;
        return Ok(finish(problem, alpha, zeta, edge, false, 0));
    }

    // ζ⋆ at the edge: assemble in whitened range coordinates.
    let h_hat = eg.vectors.transpose() * &h;
    let mut z_hat = DVector::zeros(r);
    let mut used = 0.0;
    for i in 0..r {
        let d = eg.values[i] - edge;
        if d > gap_tol {
            z_hat[i] = h_hat[i] / d;
            used += z_hat[i] * z_hat[i];
        }
    }
    z_hat[0] = (problem.s2 - used).max(0.0).sqrt();
    let z = &eg.vectors * z_hat;
    let x_r = DVector::from_fn(r, |i, _| z[i] * inv_sqrt_p[i]);
    let mut alpha = &vr * &x_r;
    if let Some((chol, c_nr, b_n)) = null_solve {
        let y = chol.solve(&(b_n - c_nr * &x_r));
        alpha += &vn * y;
    }
    Ok(finish(problem, alpha, edge, edge, true, 0))
}

/// Uncentered LS-KPCA posed in function values `f = Kα`:
///
/// ```text
/// minimise fᵀK⁻¹f + c‖f_𝓛 − t‖²   subject to   fᵀf = s²
/// ```
#[derive(Debug, Clone)]
pub struct ExplicitProblem {
    /// Invertible kernel matrix (any jitter already applied).
    pub k: DMatrix<f64>,
    pub labeled: Vec<usize>,
    pub targets: DVector<f64>,
    pub c: f64,
    pub s2: f64,
}

/// Largest condition number of `K` accepted by [`solve_uncentered_explicit`].
pub const MAX_KERNEL_CONDITION: f64 = 1e12;

impl ExplicitProblem {
    /// The equivalent α-space problem (`C = K + cK_𝓛ᵀK_𝓛`, `b = cK_𝓛ᵀt`,
    /// `P = KᵀK`).
    pub fn alpha_space(&self) -> Result<CqpProblem> {
        let k_l = self.k.select_rows(&self.labeled);
        let mut c = &self.k + k_l.transpose() * &k_l * self.c;
        eigen::symmetrize(&mut c);
        let b = k_l.transpose() * &self.targets * self.c;
        let mut p = self.k.transpose() * &self.k;
        eigen::symmetrize(&mut p);
        CqpProblem::new(c, b, p, self.s2)
    }
}

/// Solves the uncentered problem in `f` with the explicit secular equation
/// `Σ ĝᵢ² / (λᵢ − ζ)² = s²` over the eigenbasis of `G = K⁻¹ + cS_𝓛ᵀS_𝓛`,
/// then returns `α = K⁻¹f`.
pub fn solve_uncentered_explicit(problem: &ExplicitProblem) -> Result<CqpSolution> {
    check_square(&problem.k, "K")?;
    check_finite(&problem.k, "K")?;
    let m = problem.k.nrows();
    if problem.labeled.len() != problem.targets.len() {
        return Err(Error::DimensionMismatch("labeled indices and targets differ in length".into()));
    }
    if problem.labeled.iter().any(|&i| i >= m) {
        return Err(Error::InvalidArgument("labeled index out of range".into()));
    }
    if !(problem.s2 > 0.0) || !(problem.c >= 0.0) {
        return Err(Error::InvalidArgument("need s² > 0 and c ≥ 0".into()));
    }
    let ek = eigen::symmetric_eig(&problem.k)?;
    let (k_min, k_max) = (ek.values[0], ek.values[m - 1]);
    if !(k_min > 0.0) || k_max / k_min > MAX_KERNEL_CONDITION {
        return Err(Error::IllConditioned(format!(
            "kernel condition estimate {:.3e} exceeds {MAX_KERNEL_CONDITION:e}",
            k_max / k_min
        )));
    }
    let k_inv = ek.reconstruct_with(|x| 1.0 / x);
    let mut g = k_inv.clone();
    let mut rhs = DVector::zeros(m);
    for (&i, &t) in problem.labeled.iter().zip(problem.targets.iter()) {
        g[(i, i)] += problem.c;
        rhs[i] += problem.c * t;
    }
    let eg = eigen::symmetric_eig(&g)?;
    let lambda = &eg.values;
    let g_hat = eg.vectors.transpose() * &rhs;
    let edge = lambda[0];

    // Spectral form with q = 1/λ so the edge logic matches the implicit path.
    let q_desc: DVector<f64> = DVector::from_fn(m, |i, _| 1.0 / lambda[m - 1 - i]);
    let beta_desc: DVector<f64> = DVector::from_fn(m, |i, _| g_hat[m - 1 - i] / lambda[m - 1 - i].sqrt());
    let spectral = Spectral::new(&q_desc, beta_desc);

    let to_f = |w_desc: &DVector<f64>| -> DVector<f64> {
        // w = √λ f̂ in the eigenbasis of G
        let f_hat = DVector::from_fn(m, |i, _| w_desc[m - 1 - i] / lambda[i].sqrt());
        &eg.vectors * f_hat
    };
    let finish_f = |f: DVector<f64>, zeta: f64, hard: bool, evals: usize| -> CqpSolution {
        let alpha = &k_inv * &f;
        let fl = DVector::from_fn(problem.labeled.len(), |i, _| f[problem.labeled[i]]);
        let objective = f.dot(&alpha) + problem.c * fl.norm_squared() - 2.0 * problem.c * fl.dot(&problem.targets);
        let residual = (f.norm_squared() - problem.s2).abs() / problem.s2;
        CqpSolution {
            alpha,
            zeta,
            objective,
            hard_case: hard,
            residual,
            delta: edge,
            evaluations: evals,
        }
    };

    let initial_gap = if spectral.hard_case_candidate() {
        if spectral.noncritical_at_edge() <= problem.s2 {
            let w = spectral.hard_case_coordinates(problem.s2);
            return Ok(finish_f(to_f(&w), edge, true, 0));
        }
        f64::NAN
    } else {
        // ĝ along the edge eigenvector, over s
        spectral.beta_critical * edge.sqrt() / problem.s2.sqrt()
    };

    let mut evaluations = 0usize;
    let secular = |z: f64| -> Result<f64> {
        if z >= edge {
            return Err(Error::OutsideSecularDomain { zeta: z });
        }
        Ok((0..m).map(|i| (g_hat[i] / (lambda[i] - z)).powi(2)).sum::<f64>() - problem.s2)
    };
    let root = locate_root(
        |z| {
            evaluations += 1;
            secular(z)
        },
        edge,
        initial_gap,
        problem.s2,
    )?;
    let zeta = root.x;
    let f_hat = DVector::from_fn(m, |i, _| g_hat[i] / (lambda[i] - zeta));
    let f = &eg.vectors * f_hat;
    Ok(finish_f(f, zeta, false, evaluations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(m: usize, i: usize) -> DVector<f64> {
        let mut e = DVector::zeros(m);
        e[i] = 1.0;
        e
    }

    fn random_instance(m: usize, seed: u64) -> CqpProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let c = &a * a.transpose() + DMatrix::identity(m, m);
        let f = DMatrix::from_fn(m, m - 1, |_, _| rng.random_range(-1.0..1.0));
        let p = &f * f.transpose();
        let b = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        CqpProblem::new(c, b, p, rng.random_range(0.5..5.0)).unwrap()
    }

    #[test]
    fn hand_instance() {
        let m = 4;
        let prob = CqpProblem::new(DMatrix::identity(m, m), unit(m, 0), DMatrix::identity(m, m), 4.0).unwrap();
        assert!(secular_value(&prob, 0.5).unwrap().abs() < 1e-14);
        let sol = solve_secular(&prob).unwrap();
        assert!((sol.zeta - 0.5).abs() < 1e-12);
        assert!((&sol.alpha - unit(m, 0) * 2.0).norm() < 1e-12);
        assert!(!sol.hard_case);
        let oracle = solve_eig_oracle(&prob).unwrap();
        assert!((oracle.zeta - 0.5).abs() < 1e-10);
    }

    #[test]
    fn zero_b_gives_constant_secular() {
        let mut prob = random_instance(5, 1);
        prob.b.fill(0.0);
        for z in [-3.0, -0.1, 0.0] {
            assert!((secular_value(&prob, z).unwrap() + prob.s2).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_b_is_hard_case() {
        let mut prob = random_instance(6, 2);
        prob.b.fill(0.0);
        let sol = solve_secular(&prob).unwrap();
        assert!(sol.hard_case);
        let edge = eigen::pencil_left_edge(&prob.c, &prob.p).unwrap();
        assert!((sol.zeta - edge.delta).abs() < 1e-12 * edge.delta);
        assert!((&sol.alpha - &edge.u * prob.s2.sqrt()).norm() < 1e-9 * sol.alpha.norm());
        assert!(sol.residual < 1e-10);
    }

    #[test]
    fn outside_domain_is_an_error() {
        let prob = CqpProblem::new(DMatrix::identity(3, 3), unit(3, 0), DMatrix::identity(3, 3), 1.0).unwrap();
        assert!(matches!(secular_value(&prob, 1.5), Err(Error::OutsideSecularDomain { .. })));
    }

    #[test]
    fn invalid_problems_rejected() {
        let c = DMatrix::identity(2, 2);
        assert!(CqpProblem::new(c.clone(), unit(2, 0), c.clone(), 0.0).is_err());
        assert!(CqpProblem::new(c.clone(), unit(3, 0), c.clone(), 1.0).is_err());
        let mut nan = c.clone();
        nan[(0, 0)] = f64::NAN;
        assert!(CqpProblem::new(nan, unit(2, 0), c, 1.0).is_err());
    }

    #[test]
    fn secular_strictly_increasing_on_grid() {
        let prob = random_instance(6, 3);
        let edge = eigen::pencil_left_edge(&prob.c, &prob.p).unwrap();
        let lo = edge.delta - 10.0 * edge.delta.abs().max(1.0);
        let hi = edge.delta * (1.0 - 1e-6);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..50 {
            let z = lo + (hi - lo) * i as f64 / 49.0;
            let v = secular_value(&prob, z).unwrap();
            assert!(v > prev, "not increasing at ζ = {z}");
            prev = v;
        }
    }

    #[test]
    fn matches_oracle_and_kkt() {
        for seed in 0..10 {
            let prob = random_instance(5 + seed as usize, 100 + seed);
            let sol = solve_secular(&prob).unwrap();
            let oracle = solve_eig_oracle(&prob).unwrap();
            let rel = (&sol.alpha - &oracle.alpha).norm() / oracle.alpha.norm();
            assert!(rel < 1e-6, "seed {seed}: rel diff {rel}");
            assert!(sol.residual <= 1e-8);
            assert!(sol.zeta < sol.delta);
            let kkt = prob.kkt_residual(&sol.alpha, sol.zeta);
            assert!(kkt <= 1e-8 * (prob.c.norm() + sol.zeta.abs() * prob.p.norm()) * sol.alpha.norm());
        }
    }

    #[test]
    fn explicit_zero_c_is_hard_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let k = &a * a.transpose() + DMatrix::identity(5, 5);
        let prob = ExplicitProblem {
            k,
            labeled: vec![0, 2],
            targets: DVector::from_vec(vec![1.0, -1.0]),
            c: 0.0,
            s2: 3.0,
        };
        let sol = solve_uncentered_explicit(&prob).unwrap();
        assert!(sol.hard_case);
        assert!(sol.residual < 1e-10);
    }

    #[test]
    fn explicit_rejects_singular_kernel() {
        let prob = ExplicitProblem {
            k: DMatrix::from_element(3, 3, 1.0),
            labeled: vec![0],
            targets: DVector::from_vec(vec![1.0]),
            c: 1.0,
            s2: 1.0,
        };
        assert!(matches!(solve_uncentered_explicit(&prob), Err(Error::IllConditioned(_))));
    }
}

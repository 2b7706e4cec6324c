//! Dense symmetric and symmetric-definite generalised eigensolvers.
//!
//! Matrices are `nalgebra` values throughout the crate; the O(m³) kernels
//! (Cholesky, triangular solves, symmetric eigendecomposition) run on `faer`
//! through zero-copy column-major views.
//!
//! Generalised problems `A v = μ B v` with a positive semi-definite `B` are
//! solved by whitening on the numerical range of `B`: with `B = V Λ Vᵀ` and
//! `W = V_r Λ_r^{-1/2}` over the eigenvalues above a relative cutoff, the
//! pencil reduces to the ordinary symmetric problem `Wᵀ A W y = μ y` and
//! `v = W y`.

use faer::linalg::triangular_solve;
use faer::{MatMut, MatRef, Par, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative cutoff below which eigenvalues of a pencil's right-hand matrix are
/// treated as part of its null space.
pub const DEFAULT_RANGE_TOLERANCE: f64 = 1e-10;

fn view(a: &DMatrix<f64>) -> MatRef<'_, f64> {
    MatRef::from_column_major_slice(a.as_slice(), a.nrows(), a.ncols())
}

fn view_mut(a: &mut DMatrix<f64>) -> MatMut<'_, f64> {
    let (r, c) = a.shape();
    MatMut::from_column_major_slice_mut(a.as_mut_slice(), r, c)
}

fn from_faer(a: MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

pub(crate) fn check_finite(a: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn check_square(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.nrows() == a.ncols() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {}×{}",
            a.nrows(),
            a.ncols()
        )))
    }
}

/// Largest absolute asymmetry `|a_ij − a_ji|` relative to the max-abs entry.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let n = a.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}

/// `(A + Aᵀ) / 2`, in place.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Flip `v` so that its largest-magnitude entry is positive (first one on ties).
pub fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.neg_mut();
    }
}

/// An eigenvalue with its unit-norm eigenvector.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: DVector<f64>,
}

/// Full spectrum of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors as columns, sign-fixed.
    pub vectors: DMatrix<f64>,
}

impl SymmetricEigen {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn pair(&self, i: usize) -> EigenPair {
        EigenPair {
            value: self.values[i],
            vector: self.vectors.column(i).into_owned(),
        }
    }

    /// Eigenpairs in ascending order of eigenvalue.
    pub fn pairs(&self) -> impl Iterator<Item = EigenPair> + '_ {
        (0..self.len()).map(|i| self.pair(i))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `U f(Λ) Uᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.vectors.nrows(), self.len(), |i, j| {
            self.vectors[(i, j)] * f(self.values[j])
        });
        let mut out = &scaled * self.vectors.transpose();
        symmetrize(&mut out);
        out
    }
}

/// Eigendecomposition of a symmetric matrix. Only the lower triangle is read.
pub fn symmetric_eig(a: &DMatrix<f64>) -> Result<SymmetricEigen> {
    check_square(a, "matrix")?;
    check_finite(a, "symmetric eigenproblem input")?;
    let n = a.nrows();
    if n == 0 {
        return Ok(SymmetricEigen {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let evd = view(a)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let values = DVector::from_fn(n, |i, _| s[i]);
    let mut vectors = from_faer(evd.U());
    for j in 0..n {
        let mut col = vectors.column(j).into_owned();
        fix_sign(&mut col);
        vectors.set_column(j, &col);
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Cholesky factorisation `A = L Lᵀ` of a symmetric positive definite matrix.
pub struct Cholesky {
    llt: faer::linalg::solvers::Llt<f64>,
}

impl Cholesky {
    /// Returns `None` when `a` is not numerically positive definite.
    pub fn new(a: &DMatrix<f64>) -> Option<Self> {
        if a.nrows() != a.ncols() || a.iter().any(|x| !x.is_finite()) {
            return None;
        }
        view(a).llt(Side::Lower).ok().map(|llt| Cholesky { llt })
    }

    pub fn dim(&self) -> usize {
        self.llt.L().nrows()
    }

    /// `A⁻¹ b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        DVector::from_column_slice(x.as_slice())
    }

    /// `X ← L⁻¹ X`.
    pub fn solve_lower_in_place(&self, x: &mut DMatrix<f64>) {
        triangular_solve::solve_lower_triangular_in_place(self.llt.L(), view_mut(x), Par::Seq);
    }

    /// `X ← L⁻ᵀ X`.
    pub fn solve_upper_in_place(&self, x: &mut DMatrix<f64>) {
        triangular_solve::solve_upper_triangular_in_place(
            self.llt.L().transpose(),
            view_mut(x),
            Par::Seq,
        );
    }

    /// `log det A`.
    pub fn log_det(&self) -> f64 {
        let l = self.llt.L();
        (0..l.nrows()).map(|i| 2.0 * l[(i, i)].ln()).sum()
    }
}

/// Left-hand matrix of a pencil, either explicit or as a Gram factor `A = FᵀF`.
///
/// The factored form lets the whitened matrix be formed as `(F W)ᵀ (F W)`,
/// which keeps directions where both `A` and `B` are tiny accurate.
#[derive(Debug, Clone)]
enum LeftMatrix {
    Dense(DMatrix<f64>),
    Gram(DMatrix<f64>),
}

/// A symmetric-definite pencil `A v = μ B v` restricted to the range of `B`.
#[derive(Debug, Clone)]
pub struct Pencil {
    a: LeftMatrix,
    b: DMatrix<f64>,
    range_tolerance: f64,
}

impl Pencil {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        check_square(&a, "pencil A")?;
        check_square(&b, "pencil B")?;
        if a.nrows() != b.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "pencil A is {}×{}, B is {}×{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        check_finite(&a, "pencil A")?;
        check_finite(&b, "pencil B")?;
        Ok(Pencil {
            a: LeftMatrix::Dense(a),
            b,
            range_tolerance: DEFAULT_RANGE_TOLERANCE,
        })
    }

    /// Pencil with `A = FᵀF`.
    pub fn from_gram_factor(f: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        check_square(&b, "pencil B")?;
        if f.ncols() != b.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "Gram factor has {} columns, B is {}×{}",
                f.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        check_finite(&f, "pencil Gram factor")?;
        check_finite(&b, "pencil B")?;
        Ok(Pencil {
            a: LeftMatrix::Gram(f),
            b,
            range_tolerance: DEFAULT_RANGE_TOLERANCE,
        })
    }

    pub fn with_range_tolerance(mut self, tol: f64) -> Self {
        self.range_tolerance = tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    /// The `k` largest generalised eigenpairs over the range of `B`, in
    /// descending order. Vectors have unit 2-norm and fixed sign.
    pub fn top(&self, k: usize) -> Result<Vec<EigenPair>> {
        let eb = symmetric_eig(&self.b)?;
        let b_max = eb.max_value();
        if !(b_max > 0.0) {
            return Err(Error::Degenerate("pencil B"));
        }
        let cutoff = self.range_tolerance * b_max;
        let kept: Vec<usize> = (0..eb.len()).filter(|&i| eb.values[i] > cutoff).collect();
        let r = kept.len();
        if k > r {
            return Err(Error::InvalidArgument(format!(
                "requested {k} eigenpairs but the range of B has dimension {r}"
            )));
        }
        let m = self.dim();
        let w = DMatrix::from_fn(m, r, |i, j| {
            let c = kept[j];
            eb.vectors[(i, c)] / eb.values[c].sqrt()
        });
        let mut reduced = match &self.a {
            LeftMatrix::Dense(a) => w.transpose() * (a * &w),
            LeftMatrix::Gram(f) => {
                let fw = f * &w;
                fw.transpose() * fw
            }
        };
        symmetrize(&mut reduced);
        let er = symmetric_eig(&reduced)?;
        let mut out = Vec::with_capacity(k);
        for idx in (r - k..r).rev() {
            let mut v = &w * er.vectors.column(idx);
            let norm = v.norm();
            if norm == 0.0 {
                return Err(Error::Degenerate("generalised eigenvector"));
            }
            v /= norm;
            fix_sign(&mut v);
            out.push(EigenPair {
                value: er.values[idx],
                vector: v,
            });
        }
        Ok(out)
    }

    /// `vᵀ A v`.
    pub fn a_form(&self, v: &DVector<f64>) -> f64 {
        match &self.a {
            LeftMatrix::Dense(a) => v.dot(&(a * v)),
            LeftMatrix::Gram(f) => (f * v).norm_squared(),
        }
    }

    /// `vᵀ B v`.
    pub fn b_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.b * v))
    }
}

/// Maximiser of the Rayleigh quotient `vᵀAv / vᵀBv` over the range of `B`.
pub fn generalized_eig_max(pencil: &Pencil) -> Result<EigenPair> {
    Ok(pencil.top(1)?.remove(0))
}

/// A positive definite `C` and positive semi-definite `P` whitened by the
/// Cholesky factor of `C`: `Q = L⁻¹ P L⁻ᵀ = V diag(q) Vᵀ`.
///
/// In the coordinates `w = Vᵀ Lᵀ α` the quadratic forms become `αᵀCα = ‖w‖²`
/// and `αᵀPα = Σ qᵢ wᵢ²`, and `C − ζP` is singular exactly at `ζ = 1/qᵢ`.
pub struct WhitenedPencil {
    chol: Cholesky,
    /// Eigenvalues of `Q`, ascending, clamped at zero.
    pub q: DVector<f64>,
    /// Eigenvectors of `Q`.
    pub basis: DMatrix<f64>,
}

impl WhitenedPencil {
    pub fn new(c: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<Self> {
        check_square(c, "C")?;
        check_square(p, "P")?;
        if c.nrows() != p.nrows() {
            return Err(Error::DimensionMismatch("C and P differ in size".into()));
        }
        check_finite(p, "P")?;
        let chol = Cholesky::new(c).ok_or(Error::NotPositiveDefinite("C"))?;
        // Q = L⁻¹ (L⁻¹ P)ᵀ uses the symmetry of P.
        let mut x = p.clone();
        chol.solve_lower_in_place(&mut x);
        let mut q = x.transpose();
        chol.solve_lower_in_place(&mut q);
        symmetrize(&mut q);
        let eq = symmetric_eig(&q)?;
        let q_values = eq.values.map(|v| v.max(0.0));
        if !(q_values.max() > 0.0) {
            return Err(Error::Degenerate("P"));
        }
        Ok(WhitenedPencil {
            chol,
            q: q_values,
            basis: eq.vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn q_max(&self) -> f64 {
        self.q[self.q.len() - 1]
    }

    /// Smallest ζ > 0 at which `C − ζP` becomes singular.
    pub fn delta(&self) -> f64 {
        1.0 / self.q_max()
    }

    /// `Vᵀ L⁻¹ b`.
    pub fn whiten(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
        self.chol.solve_lower_in_place(&mut x);
        self.basis.transpose() * DVector::from_column_slice(x.as_slice())
    }

    /// Maps whitened coordinates back: `α = L⁻ᵀ V w`.
    pub fn unwhiten(&self, w: &DVector<f64>) -> DVector<f64> {
        let y = &self.basis * w;
        let mut x = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
        self.chol.solve_upper_in_place(&mut x);
        DVector::from_column_slice(x.as_slice())
    }

    /// Edge vector `u` with `uᵀPu = 1` for the eigenvalue `q_max`.
    pub fn edge_vector(&self) -> DVector<f64> {
        let n = self.dim();
        let mut e = DVector::zeros(n);
        e[n - 1] = 1.0 / self.q_max().sqrt();
        let mut u = self.unwhiten(&e);
        fix_sign(&mut u);
        u
    }
}

/// Left edge of the definite region of `C − ζP`.
#[derive(Debug, Clone)]
pub struct PencilEdge {
    /// Smallest ζ > 0 with `det(C − ζP) = 0`.
    pub delta: f64,
    /// Null vector of `C − δP`, normalised so that `uᵀPu = 1`.
    pub u: DVector<f64>,
}

/// `δ = 1/μ_max` of `P v = μ C v`, together with its vector.
pub fn pencil_left_edge(c: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<PencilEdge> {
    let wp = WhitenedPencil::new(c, p)?;
    Ok(PencilEdge {
        delta: wp.delta(),
        u: wp.edge_vector(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(m, m) * 0.5
    }

    #[test]
    fn identity_spectrum() {
        let e = symmetric_eig(&DMatrix::identity(4, 4)).unwrap();
        assert!(e.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn diagonal_sorted_ascending() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let e = symmetric_eig(&a).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn random_residual_and_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = DMatrix::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
        let a = &b + b.transpose();
        let e = symmetric_eig(&a).unwrap();
        let resid = &a * &e.vectors - &e.vectors * DMatrix::from_diagonal(&e.values);
        assert!(resid.amax() <= 1e-10);
        let rec = e.reconstruct_with(|x| x);
        assert!((rec - &a).norm() <= 1e-10 * a.norm());
        let gram = e.vectors.transpose() * &e.vectors;
        assert!((gram - DMatrix::identity(8, 8)).amax() < 1e-12);
    }

    #[test]
    fn non_finite_rejected() {
        let mut a = DMatrix::identity(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(symmetric_eig(&a), Err(Error::NonFinite(_))));
    }

    #[test]
    fn sign_convention() {
        let mut v = DVector::from_vec(vec![0.1, -0.9, 0.3]);
        fix_sign(&mut v);
        assert!(v[1] > 0.0);
    }

    #[test]
    fn identity_pencil() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_spd(5, &mut rng);
        let top = generalized_eig_max(&Pencil::new(a.clone(), a).unwrap()).unwrap();
        assert!((top.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn diagonal_pencil() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let top = generalized_eig_max(&Pencil::new(a, DMatrix::identity(2, 2)).unwrap()).unwrap();
        assert!((top.value - 2.0).abs() < 1e-14);
        assert!((top.vector[0] - 1.0).abs() < 1e-14 && top.vector[1].abs() < 1e-14);
    }

    #[test]
    fn zero_b_is_degenerate() {
        let p = Pencil::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(p.top(1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn pencil_residual_on_definite_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_spd(6, &mut rng);
        let b = random_spd(6, &mut rng);
        let pencil = Pencil::new(a.clone(), b.clone()).unwrap();
        for pair in pencil.top(3).unwrap() {
            let r = &a * &pair.vector - &b * &pair.vector * pair.value;
            assert!(r.norm() <= 1e-8 * (a.norm() + pair.value.abs() * b.norm()));
            assert!((pair.vector.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gram_factor_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let b = random_spd(6, &mut rng);
        let dense = Pencil::new(f.transpose() * &f, b.clone()).unwrap().top(2).unwrap();
        let gram = Pencil::from_gram_factor(f, b).unwrap().top(2).unwrap();
        for (x, y) in dense.iter().zip(&gram) {
            assert!((x.value - y.value).abs() < 1e-10 * x.value.abs().max(1.0));
            assert!((&x.vector - &y.vector).norm() < 1e-8);
        }
    }

    #[test]
    fn cholesky_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_spd(7, &mut rng);
        let b = DVector::from_fn(7, |_, _| rng.random_range(-1.0..1.0));
        let chol = Cholesky::new(&a).unwrap();
        assert!((&a * chol.solve(&b) - &b).norm() < 1e-12);
        assert!(Cholesky::new(&-a).is_none());
    }

    #[test]
    fn left_edge_isotropic() {
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.5, 2.0]));
        let edge = pencil_left_edge(&c, &DMatrix::identity(3, 3)).unwrap();
        assert!((edge.delta - 1.5).abs() < 1e-14);
        let e2 = pencil_left_edge(&(DMatrix::identity(3, 3) * 2.0), &DMatrix::identity(3, 3)).unwrap();
        assert!((e2.delta - 2.0).abs() < 1e-14);
    }

    #[test]
    fn left_edge_zero_p() {
        let r = pencil_left_edge(&DMatrix::identity(3, 3), &DMatrix::zeros(3, 3));
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }
}

//! Kernel matrices: Gaussian, graph diffusion, their convex mixture and the
//! pseudo-inverse of a normalised graph Laplacian. Also the variance
//! operators that define the constraint quadratic form.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::eigen::{self, check_finite, check_square};
use crate::error::{Error, Result};

/// Eigenvalues of `L` below this fraction of `λ_max(L)` count as zero.
pub const CONNECTIVITY_TOL: f64 = 1e-9;
/// Default ridge factor relative to `trace(K)/m`.
pub const DEFAULT_JITTER_FACTOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// `exp(−γ‖x − y‖²)`.
    Gaussian { gamma: f64 },
    /// `exp(−τL)` of the normalised Laplacian of a kNN graph.
    Diffusion { tau: f64, knn: usize },
    /// `w·K_γ + (1 − w)·exp(−τL)`.
    Mixed { gamma: f64, tau: f64, w: f64, knn: usize },
    /// `L⁺` of the normalised Laplacian of a kNN graph.
    LaplacianPinv { knn: usize },
    /// A matrix supplied directly; cannot be evaluated off the training set.
    Precomputed,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        match *self {
            KernelSpec::Gaussian { gamma } if !(gamma >= 0.0 && gamma.is_finite()) => bad("γ must be finite and ≥ 0"),
            KernelSpec::Diffusion { tau, .. } if !(tau >= 0.0 && tau.is_finite()) => bad("τ must be finite and ≥ 0"),
            KernelSpec::Mixed { gamma, tau, w, .. } => {
                if !(gamma >= 0.0 && gamma.is_finite() && tau >= 0.0 && tau.is_finite()) {
                    bad("mixed kernel needs finite γ ≥ 0 and τ ≥ 0")
                } else if !(0.0..=1.0).contains(&w) {
                    bad("mixture weight w must lie in [0, 1]")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }?;
        match *self {
            KernelSpec::Diffusion { knn, .. } | KernelSpec::Mixed { knn, .. } | KernelSpec::LaplacianPinv { knn } if knn == 0 => {
                bad("knn must be ≥ 1")
            }
            _ => Ok(()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            KernelSpec::Gaussian { .. } => "gaussian",
            KernelSpec::Diffusion { .. } => "diffusion",
            KernelSpec::Mixed { .. } => "mixed",
            KernelSpec::LaplacianPinv { .. } => "lpinv",
            KernelSpec::Precomputed => "precomputed",
        }
    }

    /// Parses the format produced by `Display`, e.g. `mixed gamma=2 tau=1 w=0.5 knn=10`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut parts = text.split_whitespace();
        let kind = parts.next().ok_or_else(|| Error::Format("empty kernel spec".into()))?;
        let mut gamma = None;
        let mut tau = None;
        let mut w = None;
        let mut knn = None;
        for kv in parts {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("kernel parameter {kv:?} lacks '='")))?;
            let num = |v: &str| v.parse::<f64>().map_err(|_| Error::Format(format!("bad number {v:?} for {k}")));
            match k {
                "gamma" => gamma = Some(num(v)?),
                "tau" => tau = Some(num(v)?),
                "w" => w = Some(num(v)?),
                "knn" => knn = Some(v.parse::<usize>().map_err(|_| Error::Format(format!("bad knn {v:?}")))?),
                _ => return Err(Error::Format(format!("unknown kernel parameter {k:?}"))),
            }
        }
        let need = |x: Option<f64>, name: &str| x.ok_or_else(|| Error::Format(format!("{kind} kernel needs {name}")));
        let need_knn = || knn.ok_or_else(|| Error::Format(format!("{kind} kernel needs knn")));
        let spec = match kind {
            "gaussian" => KernelSpec::Gaussian { gamma: need(gamma, "gamma")? },
            "diffusion" => KernelSpec::Diffusion {
                tau: need(tau, "tau")?,
                knn: need_knn()?,
            },
            "mixed" => KernelSpec::Mixed {
                gamma: need(gamma, "gamma")?,
                tau: need(tau, "tau")?,
                w: need(w, "w")?,
                knn: need_knn()?,
            },
            "lpinv" => KernelSpec::LaplacianPinv { knn: need_knn()? },
            "precomputed" => KernelSpec::Precomputed,
            other => return Err(Error::Format(format!("unknown kernel kind {other:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Gaussian { gamma } => write!(f, "gaussian gamma={gamma}"),
            KernelSpec::Diffusion { tau, knn } => write!(f, "diffusion tau={tau} knn={knn}"),
            KernelSpec::Mixed { gamma, tau, w, knn } => write!(f, "mixed gamma={gamma} tau={tau} w={w} knn={knn}"),
            KernelSpec::LaplacianPinv { knn } => write!(f, "lpinv knn={knn}"),
            KernelSpec::Precomputed => write!(f, "precomputed"),
        }
    }
}

/// Rows of `points` as contiguous vectors.
fn rows(points: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..points.nrows()).map(|i| points.row(i).iter().copied().collect()).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Pairwise squared Euclidean distances; every entry is computed
/// independently, so the result does not depend on thread scheduling.
pub fn squared_distances(points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_finite(points, "points")?;
    let r = rows(points);
    let m = r.len();
    let mut out = DMatrix::zeros(m, m);
    out.as_mut_slice().par_chunks_mut(m.max(1)).enumerate().for_each(|(j, col)| {
        for (i, v) in col.iter_mut().enumerate() {
            *v = sq_dist(&r[i], &r[j]);
        }
    });
    Ok(out)
}

/// `K_ij = exp(−γ‖xᵢ − x_j‖²)`.
pub fn gaussian_kernel(points: &DMatrix<f64>, gamma: f64) -> Result<KernelMatrix> {
    KernelSpec::Gaussian { gamma }.validate()?;
    let d2 = squared_distances(points)?;
    let k = d2.map(|d| (-gamma * d).exp());
    Ok(KernelMatrix::new_unchecked(
        k,
        KernelSpec::Gaussian { gamma },
        Some(Arc::new(points.clone())),
    ))
}

/// Weighted graph with its symmetric normalisation and Laplacian.
#[derive(Debug, Clone)]
pub struct Graph {
    /// Edge weights, symmetric, zero diagonal.
    pub w: DMatrix<f64>,
    /// `diag(We)^{−1/2} W diag(We)^{−1/2}`.
    pub s: DMatrix<f64>,
    /// `diag(Se) − S`.
    pub l: DMatrix<f64>,
}

impl Graph {
    /// Builds `S` and `L` from explicit weights.
    pub fn from_weights(w: DMatrix<f64>) -> Result<Self> {
        check_square(&w, "W")?;
        check_finite(&w, "W")?;
        let m = w.nrows();
        for i in 0..m {
            if w[(i, i)] != 0.0 {
                return Err(Error::InvalidArgument(format!("W has nonzero diagonal at {i}")));
            }
            for j in 0..i {
                if w[(i, j)] != w[(j, i)] || w[(i, j)] < 0.0 {
                    return Err(Error::InvalidArgument("W must be symmetric and nonnegative".into()));
                }
            }
        }
        let degree: Vec<f64> = (0..m).map(|i| w.row(i).sum()).collect();
        if let Some(i) = degree.iter().position(|&d| d <= 0.0) {
            return Err(Error::IsolatedVertex(i));
        }
        let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
        let s = DMatrix::from_fn(m, m, |i, j| w[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
        let mut l = -&s;
        for i in 0..m {
            l[(i, i)] += s.row(i).sum();
        }
        eigen::symmetrize(&mut l);
        Ok(Graph { w, s, l })
    }

    pub fn len(&self) -> usize {
        self.w.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.w.nrows() == 0
    }
}

/// Symmetrised (union) kNN graph with weights `exp(−d²/σ²)`, where `σ²` is
/// the mean squared distance over connected pairs. Neighbour ties are
/// broken by index.
pub fn build_graph(points: &DMatrix<f64>, knn: usize) -> Result<Graph> {
    let m = points.nrows();
    if knn == 0 || knn >= m {
        return Err(Error::InvalidArgument(format!("need 1 ≤ knn < m = {m}, got {knn}")));
    }
    let d2 = squared_distances(points)?;
    let mut adj = vec![false; m * m];
    for i in 0..m {
        let mut order: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| d2[(i, a)].total_cmp(&d2[(i, b)]).then(a.cmp(&b)));
        for &j in &order[..knn] {
            adj[i * m + j] = true;
            adj[j * m + i] = true;
        }
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..m {
        for j in 0..i {
            if adj[i * m + j] {
                total += d2[(i, j)];
                pairs += 1;
            }
        }
    }
    let sigma2 = total / pairs as f64;
    let w = DMatrix::from_fn(m, m, |i, j| {
        if i == j || !adj[i * m + j] {
            0.0
        } else if sigma2 > 0.0 {
            (-d2[(i, j)] / sigma2).exp()
        } else {
            1.0
        }
    });
    Graph::from_weights(w)
}

/// `exp(−τL)` through the eigendecomposition of `L` (eigenvalues clamped at 0).
pub fn diffusion_kernel(graph: &Graph, tau: f64) -> Result<KernelMatrix> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument("τ must be finite and ≥ 0".into()));
    }
    let m = graph.len();
    let k = if tau == 0.0 {
        DMatrix::identity(m, m)
    } else {
        let e = eigen::symmetric_eig(&graph.l)?;
        let mut k = e.reconstruct_with(|x| (-tau * x.max(0.0)).exp());
        eigen::symmetrize(&mut k);
        k
    };
    Ok(KernelMatrix::new_unchecked(k, KernelSpec::Precomputed, None))
}

/// `w·K_γ + (1 − w)·K_diff`.
pub fn mixed_kernel(k_gamma: &KernelMatrix, k_diff: &KernelMatrix, w: f64) -> Result<KernelMatrix> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::InvalidArgument(format!("mixture weight {w} outside [0, 1]")));
    }
    if k_gamma.len() != k_diff.len() {
        return Err(Error::DimensionMismatch(format!(
            "kernel sizes {} and {}",
            k_gamma.len(),
            k_diff.len()
        )));
    }
    let k = k_gamma.matrix() * w + k_diff.matrix() * (1.0 - w);
    Ok(KernelMatrix::new_unchecked(k, KernelSpec::Precomputed, None))
}

/// Moore–Penrose pseudo-inverse of `L` for a connected graph.
pub fn laplacian_pinv(graph: &Graph) -> Result<KernelMatrix> {
    let e = eigen::symmetric_eig(&graph.l)?;
    let lmax = e.max_value();
    let tol = CONNECTIVITY_TOL * lmax;
    let zeros = e.values.iter().filter(|&&x| x < tol).count();
    if zeros > 1 || lmax <= 0.0 {
        return Err(Error::Disconnected(zeros));
    }
    let mut k = e.reconstruct_with(|x| if x < tol { 0.0 } else { 1.0 / x });
    eigen::symmetrize(&mut k);
    Ok(KernelMatrix::new_unchecked(k, KernelSpec::Precomputed, None))
}

/// Symmetric kernel matrix with the spec (and, where available, the
/// training points) that produced it.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    k: DMatrix<f64>,
    spec: KernelSpec,
    points: Option<Arc<DMatrix<f64>>>,
    jitter: f64,
}

impl KernelMatrix {
    fn new_unchecked(k: DMatrix<f64>, spec: KernelSpec, points: Option<Arc<DMatrix<f64>>>) -> Self {
        let m = k.nrows().max(1);
        let jitter = DEFAULT_JITTER_FACTOR * k.trace().abs() / m as f64;
        KernelMatrix { k, spec, points, jitter }
    }

    /// Builds the kernel described by `spec` on `points`.
    pub fn build(spec: &KernelSpec, points: &DMatrix<f64>) -> Result<Self> {
        spec.validate()?;
        let shared = Some(Arc::new(points.clone()));
        let k = match *spec {
            KernelSpec::Gaussian { gamma } => return gaussian_kernel(points, gamma),
            KernelSpec::Diffusion { tau, knn } => diffusion_kernel(&build_graph(points, knn)?, tau)?.k,
            KernelSpec::Mixed { gamma, tau, w, knn } => {
                let kg = gaussian_kernel(points, gamma)?;
                let kd = diffusion_kernel(&build_graph(points, knn)?, tau)?;
                mixed_kernel(&kg, &kd, w)?.k
            }
            KernelSpec::LaplacianPinv { knn } => laplacian_pinv(&build_graph(points, knn)?)?.k,
            KernelSpec::Precomputed => {
                return Err(Error::InvalidArgument("a precomputed kernel cannot be built from points".into()))
            }
        };
        Ok(Self::new_unchecked(k, spec.clone(), shared))
    }

    /// Wraps an explicit matrix after checking symmetry and finiteness.
    pub fn from_matrix(k: DMatrix<f64>) -> Result<Self> {
        check_square(&k, "K")?;
        check_finite(&k, "K")?;
        if eigen::asymmetry(&k) > 1e-12 {
            return Err(Error::InvalidArgument("kernel matrix is not symmetric".into()));
        }
        Ok(Self::new_unchecked(k, KernelSpec::Precomputed, None))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn len(&self) -> usize {
        self.k.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.k.nrows() == 0
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn points(&self) -> Option<&DMatrix<f64>> {
        self.points.as_deref()
    }

    pub(crate) fn shared_points(&self) -> Option<Arc<DMatrix<f64>>> {
        self.points.clone()
    }

    /// Ridge added where an inverse of `K` is needed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn with_jitter(mut self, jitter: f64) -> Result<Self> {
        if !(jitter >= 0.0 && jitter.is_finite()) {
            return Err(Error::InvalidArgument(format!("jitter must be finite and ≥ 0, got {jitter}")));
        }
        self.jitter = jitter;
        Ok(self)
    }

    /// `K + jitter·I`.
    pub fn jittered(&self) -> DMatrix<f64> {
        let mut k = self.k.clone();
        for i in 0..k.nrows() {
            k[(i, i)] += self.jitter;
        }
        k
    }

    /// Smallest eigenvalue, or an error if it is below `−1e-8·‖K‖`.
    pub fn check_psd(&self) -> Result<f64> {
        let e = eigen::symmetric_eig(&self.k)?;
        let min = e.values[0];
        if min < -1e-8 * self.k.norm() {
            return Err(Error::NotPositiveDefinite("kernel matrix"));
        }
        Ok(min)
    }

    /// `k(xᵢ, q)` for every training point `xᵢ` (rows) and query `q`
    /// (columns). Only closed-form kernels can be evaluated off the
    /// training set.
    pub fn cross(&self, queries: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let points = self
            .points
            .as_deref()
            .ok_or_else(|| Error::Unsupported("kernel has no training points attached".into()))?;
        let gamma = match self.spec {
            KernelSpec::Gaussian { gamma } => gamma,
            _ => {
                return Err(Error::Unsupported(format!(
                    "{} kernels are defined on the training graph only",
                    self.spec.kind()
                )))
            }
        };
        if queries.ncols() != points.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "query has {} features, training data {}",
                queries.ncols(),
                points.ncols()
            )));
        }
        check_finite(queries, "query points")?;
        let train = rows(points);
        let q = rows(queries);
        let m = train.len();
        let mut out = DMatrix::zeros(m, q.len());
        out.as_mut_slice().par_chunks_mut(m.max(1)).enumerate().for_each(|(j, col)| {
            for (i, v) in col.iter_mut().enumerate() {
                *v = (-gamma * sq_dist(&train[i], &q[j])).exp();
            }
        });
        Ok(out)
    }
}

const CACHE_MAGIC: &[u8; 8] = b"SSKPCAK1";

/// Writes `K` row-major after a header of (magic, m, dataset hash, spec).
pub fn save_cache(kernel: &KernelMatrix, dataset_hash: &str, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let spec = kernel.spec.to_string();
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&(kernel.len() as u64).to_le_bytes())?;
    for text in [dataset_hash, spec.as_str()] {
        w.write_all(&(text.len() as u32).to_le_bytes())?;
        w.write_all(text.as_bytes())?;
    }
    for i in 0..kernel.len() {
        for j in 0..kernel.len() {
            w.write_all(&kernel.k[(i, j)].to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a cached kernel if the file exists and its key matches.
pub fn load_cache(path: &Path, dataset_hash: &str, spec: &KernelSpec, points: &DMatrix<f64>) -> Result<Option<KernelMatrix>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Format(format!("{} is not a kernel cache", path.display())));
    }
    let mut u64b = [0u8; 8];
    r.read_exact(&mut u64b)?;
    let m = u64::from_le_bytes(u64b) as usize;
    let read_text = |r: &mut BufReader<File>| -> Result<String> {
        let mut lenb = [0u8; 4];
        r.read_exact(&mut lenb)?;
        let mut buf = vec![0u8; u32::from_le_bytes(lenb) as usize];
        r.read_exact(&mut buf)?;
        String::from_utf8(buf).map_err(|_| Error::Format("cache header is not UTF-8".into()))
    };
    let hash = read_text(&mut r)?;
    let spec_text = read_text(&mut r)?;
    if hash != dataset_hash || KernelSpec::parse(&spec_text)? != *spec || m != points.nrows() {
        return Ok(None);
    }
    let mut data = vec![0u8; m * m * 8];
    r.read_exact(&mut data)?;
    let k = DMatrix::from_fn(m, m, |i, j| {
        let o = (i * m + j) * 8;
        f64::from_le_bytes(data[o..o + 8].try_into().expect("8 bytes"))
    });
    Ok(Some(KernelMatrix::new_unchecked(k, spec.clone(), Some(Arc::new(points.clone())))))
}

/// The constraint form: centered `Kᵀ(I − E_m)K` or uncentered `KᵀK`,
/// kept together with its factor `F` (`P = FᵀF`).
#[derive(Debug, Clone)]
pub struct VarianceOperator {
    pub centered: bool,
    p: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl VarianceOperator {
    pub fn new(k: &DMatrix<f64>, centered: bool) -> Result<Self> {
        check_square(k, "K")?;
        let mut factor = k.clone();
        if centered {
            for mut col in factor.column_iter_mut() {
                let mean = col.mean();
                col.add_scalar_mut(-mean);
            }
        }
        let mut p = factor.transpose() * &factor;
        eigen::symmetrize(&mut p);
        Ok(VarianceOperator { centered, p, factor })
    }

    pub fn centered(k: &DMatrix<f64>) -> Result<Self> {
        Self::new(k, true)
    }

    pub fn uncentered(k: &DMatrix<f64>) -> Result<Self> {
        Self::new(k, false)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.p
    }

    /// `F` with `P = FᵀF`: `(I − E_m)K` or `K`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// `αᵀPα` evaluated as `‖Fα‖²`.
    pub fn form(&self, alpha: &DVector<f64>) -> f64 {
        (&self.factor * alpha).norm_squared()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(m: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn gaussian_basics() {
        let x = random_points(9, 3, 1);
        let k = gaussian_kernel(&x, 1.7).unwrap();
        assert!(k.matrix().diagonal().iter().all(|&v| v == 1.0));
        assert_eq!(eigen::asymmetry(k.matrix()), 0.0);
        let ones = gaussian_kernel(&x, 0.0).unwrap();
        assert!(ones.matrix().iter().all(|&v| v == 1.0));
        let two = DMatrix::from_row_slice(2, 1, &[0.0, 2f64.ln().sqrt()]);
        let k2 = gaussian_kernel(&two, 1.0).unwrap();
        assert!((k2.matrix()[(0, 1)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gaussian_rejects_nan() {
        let mut x = random_points(3, 2, 2);
        x[(1, 1)] = f64::NAN;
        assert!(gaussian_kernel(&x, 1.0).is_err());
        assert!(gaussian_kernel(&random_points(3, 2, 2), -1.0).is_err());
    }

    #[test]
    fn collinear_knn_graph() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let g = build_graph(&x, 1).unwrap();
        // ties go to the lower index: 1 picks 0, 0 and 2 pick 1
        let deg = |i: usize| (0..3).filter(|&j| g.w[(i, j)] > 0.0).count();
        assert_eq!(deg(1), 2);
        assert!(g.w.diagonal().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_psd_and_annihilates_ones() {
        let g = build_graph(&random_points(30, 2, 3), 4).unwrap();
        let e = eigen::symmetric_eig(&g.l).unwrap();
        assert!(e.values[0] >= -1e-10);
        let le = &g.l * DVector::from_element(30, 1.0);
        assert!(le.amax() < 1e-12);
    }

    #[test]
    fn knn_must_be_below_m() {
        assert!(build_graph(&random_points(4, 2, 1), 4).is_err());
        assert!(build_graph(&random_points(4, 2, 1), 0).is_err());
    }

    #[test]
    fn isolated_vertex_reported() {
        let mut w = DMatrix::zeros(3, 3);
        w[(0, 1)] = 1.0;
        w[(1, 0)] = 1.0;
        assert!(matches!(Graph::from_weights(w), Err(Error::IsolatedVertex(2))));
    }

    fn two_node() -> Graph {
        Graph::from_weights(DMatrix::from_row_slice(2, 2, &[0.0, 0.3, 0.3, 0.0])).unwrap()
    }

    #[test]
    fn diffusion_two_node_closed_form() {
        // L = [[1, −1], [−1, 1]] with eigenvalues 0 and 2
        let g = two_node();
        let tau = 0.7;
        let k = diffusion_kernel(&g, tau).unwrap();
        let a = (1.0 + (-2.0 * tau).exp()) / 2.0;
        let b = (1.0 - (-2.0 * tau).exp()) / 2.0;
        let expect = DMatrix::from_row_slice(2, 2, &[a, b, b, a]);
        assert!((k.matrix() - expect).amax() < 1e-12);
        assert_eq!(diffusion_kernel(&g, 0.0).unwrap().matrix(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn diffusion_spectrum_in_unit_interval() {
        let g = build_graph(&random_points(25, 3, 4), 3).unwrap();
        let k = diffusion_kernel(&g, 1.3).unwrap();
        let e = eigen::symmetric_eig(k.matrix()).unwrap();
        assert!(e.values[0] > 0.0 && e.max_value() <= 1.0 + 1e-12);
    }

    #[test]
    fn pinv_two_node_and_axioms() {
        let k = laplacian_pinv(&two_node()).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]);
        assert!((k.matrix() - expect).amax() < 1e-12);

        let g = build_graph(&random_points(20, 2, 5), 4).unwrap();
        let kp = laplacian_pinv(&g).unwrap();
        let kk = kp.matrix();
        assert!((kk * &g.l * kk - kk).amax() < 1e-9 * kk.amax());
        let e = eigen::symmetric_eig(&g.l).unwrap();
        let u0 = e.vectors.column(0).into_owned();
        assert!((kk * u0).norm() < 1e-9 * kk.norm());
    }

    #[test]
    fn pinv_rejects_disconnected() {
        let mut w = DMatrix::zeros(4, 4);
        for (i, j) in [(0, 1), (2, 3)] {
            w[(i, j)] = 1.0;
            w[(j, i)] = 1.0;
        }
        let g = Graph::from_weights(w).unwrap();
        assert!(matches!(laplacian_pinv(&g), Err(Error::Disconnected(2))));
    }

    #[test]
    fn mixed_endpoints_and_average() {
        let x = random_points(12, 2, 6);
        let kg = gaussian_kernel(&x, 2.0).unwrap();
        let kd = diffusion_kernel(&build_graph(&x, 3).unwrap(), 0.5).unwrap();
        assert_eq!(mixed_kernel(&kg, &kd, 1.0).unwrap().matrix(), kg.matrix());
        assert_eq!(mixed_kernel(&kg, &kd, 0.0).unwrap().matrix(), kd.matrix());
        let a = KernelMatrix::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]))).unwrap();
        let b = KernelMatrix::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 1.0]))).unwrap();
        let e = eigen::symmetric_eig(mixed_kernel(&a, &b, 0.5).unwrap().matrix()).unwrap();
        assert_eq!(e.values.as_slice(), &[2.0, 3.0]);
        assert!(mixed_kernel(&kg, &kd, 1.5).is_err());
    }

    #[test]
    fn build_by_spec() {
        let x = random_points(15, 2, 7);
        for spec in [
            KernelSpec::Gaussian { gamma: 1.0 },
            KernelSpec::Diffusion { tau: 0.3, knn: 3 },
            KernelSpec::Mixed {
                gamma: 1.0,
                tau: 0.3,
                w: 0.4,
                knn: 3,
            },
            KernelSpec::LaplacianPinv { knn: 4 },
        ] {
            let k = KernelMatrix::build(&spec, &x).unwrap();
            assert_eq!(k.spec(), &spec);
            assert!(eigen::asymmetry(k.matrix()) <= 1e-12);
            k.check_psd().unwrap();
            assert_eq!(KernelSpec::parse(&spec.to_string()).unwrap(), spec);
        }
        assert!(KernelSpec::parse("gaussian").is_err());
        assert!(KernelSpec::parse("mixed gamma=1 tau=1 w=2 knn=3").is_err());
    }

    #[test]
    fn cross_kernel_matches_training_columns() {
        let x = random_points(10, 3, 8);
        let k = gaussian_kernel(&x, 0.8).unwrap();
        let cross = k.cross(&x).unwrap();
        assert!((cross - k.matrix()).amax() < 1e-15);
        let kd = KernelMatrix::build(&KernelSpec::Diffusion { tau: 1.0, knn: 3 }, &x).unwrap();
        assert!(matches!(kd.cross(&x), Err(Error::Unsupported(_))));
    }

    #[test]
    fn variance_operators() {
        let x = random_points(7, 2, 9);
        let k = gaussian_kernel(&x, 1.0).unwrap();
        let kk = k.matrix();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let alpha = DVector::from_fn(7, |_, _| rng.random_range(-1.0..1.0));
        let f = kk * &alpha;
        let mean = f.mean();
        let direct: f64 = f.iter().map(|v| (v - mean).powi(2)).sum();
        let pc = VarianceOperator::centered(kk).unwrap();
        assert!((alpha.dot(&(pc.matrix() * &alpha)) - direct).abs() < 1e-12 * direct.max(1.0));
        assert!((pc.form(&alpha) - direct).abs() < 1e-12 * direct.max(1.0));

        // α with Kα constant has zero centered variance
        let chol = eigen::Cholesky::new(kk).unwrap();
        let a_const = chol.solve(&DVector::from_element(7, 2.0));
        assert!(a_const.dot(&(pc.matrix() * &a_const)) <= 1e-10 * pc.matrix().norm() * a_const.norm_squared());

        let pu = VarianceOperator::uncentered(kk).unwrap();
        let ek = eigen::symmetric_eig(kk).unwrap();
        let ep = eigen::symmetric_eig(pu.matrix()).unwrap();
        for i in 0..7 {
            assert!((ep.values[i] - ek.values[i].powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let x = random_points(6, 2, 11);
        let spec = KernelSpec::Gaussian { gamma: 0.5 };
        let k = KernelMatrix::build(&spec, &x).unwrap();
        let path = dir.path().join("k.bin");
        save_cache(&k, "abc", &path).unwrap();
        let back = load_cache(&path, "abc", &spec, &x).unwrap().unwrap();
        assert_eq!(back.matrix(), k.matrix());
        assert!(load_cache(&path, "other", &spec, &x).unwrap().is_none());
        assert!(load_cache(&dir.path().join("missing"), "abc", &spec, &x).unwrap().is_none());
    }
}

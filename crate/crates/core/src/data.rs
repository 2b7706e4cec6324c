//! Datasets with partial ±1 labels, CSV ingestion, synthetic generators and
//! fold assignment.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Named random substreams derived from one seed.
pub mod stream {
    pub const GENERATOR: u64 = 1;
    pub const LABELS: u64 = 2;
    pub const SPLITS: u64 = 3;
    pub const FOLDS: u64 = 4;
}

/// Deterministic generator for `(seed, stream)`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Points with labels in {−1, 0, +1}; 0 marks an unlabeled point.
///
/// `truth` optionally carries the full ±1 ground truth used for
/// evaluation; solvers never read it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub points: DMatrix<f64>,
    labels: Vec<i8>,
    labeled: Vec<usize>,
    truth: Option<Vec<i8>>,
}

fn check_label(value: i8) -> Result<()> {
    if matches!(value, -1..=1) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("label {value} not in {{-1, 0, 1}}")))
    }
}

impl Dataset {
    pub fn new(points: DMatrix<f64>, labels: Vec<i8>) -> Result<Self> {
        if points.ncols() == 0 {
            return Err(Error::InvalidArgument("points need at least one feature".into()));
        }
        if points.nrows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} points but {} labels",
                points.nrows(),
                labels.len()
            )));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("points"));
        }
        for &l in &labels {
            check_label(l)?;
        }
        let labeled = (0..labels.len()).filter(|&i| labels[i] != 0).collect();
        Ok(Dataset {
            points,
            labels,
            labeled,
            truth: None,
        })
    }

    /// Attaches ground truth; every entry must be ±1 and agree with the
    /// observed labels.
    pub fn with_truth(mut self, truth: Vec<i8>) -> Result<Self> {
        if truth.len() != self.len() {
            return Err(Error::DimensionMismatch("truth length differs from point count".into()));
        }
        for (i, (&t, &l)) in truth.iter().zip(&self.labels).enumerate() {
            if t != 1 && t != -1 {
                return Err(Error::InvalidArgument(format!("truth at row {i} is {t}, expected ±1")));
            }
            if l != 0 && l != t {
                return Err(Error::InvalidArgument(format!("label at row {i} contradicts truth")));
            }
        }
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    /// Indices of labeled points, ascending.
    pub fn labeled_indices(&self) -> &[usize] {
        &self.labeled
    }

    pub fn unlabeled_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == 0).collect()
    }

    /// Labels of the labeled points as reals, in [`Self::labeled_indices`] order.
    pub fn targets(&self) -> DVector<f64> {
        DVector::from_iterator(self.labeled.len(), self.labeled.iter().map(|&i| self.labels[i] as f64))
    }

    pub fn truth(&self) -> Option<&[i8]> {
        self.truth.as_deref()
    }

    pub fn point(&self, i: usize) -> DVector<f64> {
        self.points.row(i).transpose()
    }

    /// Copy with the given points' labels set to 0 (points are kept).
    pub fn hide_labels(&self, indices: &[usize]) -> Dataset {
        let mut labels = self.labels.clone();
        for &i in indices {
            labels[i] = 0;
        }
        let labeled = (0..labels.len()).filter(|&i| labels[i] != 0).collect();
        Dataset {
            points: self.points.clone(),
            labels,
            labeled,
            truth: self.truth.clone(),
        }
    }

    /// Copy whose labels are `truth` on `indices` and 0 elsewhere.
    pub fn relabel_from_truth(&self, indices: &[usize]) -> Result<Dataset> {
        let truth = self.truth.as_ref().ok_or_else(|| Error::InvalidArgument("dataset has no truth".into()))?;
        let mut labels = vec![0i8; self.len()];
        for &i in indices {
            if i >= labels.len() {
                return Err(Error::InvalidArgument(format!("index {i} out of range")));
            }
            labels[i] = truth[i];
        }
        let ds = Dataset::new(self.points.clone(), labels)?;
        ds.with_truth(truth.clone())
    }

    /// SHA-256 over the shape and bit patterns of the points (labels
    /// excluded), as lowercase hex.
    pub fn points_hash(&self) -> String {
        hash_points(&self.points)
    }
}

pub fn hash_points(points: &DMatrix<f64>) -> String {
    let mut h = Sha256::new();
    h.update((points.nrows() as u64).to_le_bytes());
    h.update((points.ncols() as u64).to_le_bytes());
    for i in 0..points.nrows() {
        for j in 0..points.ncols() {
            h.update(points[(i, j)].to_bits().to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Disjoint index groups over `[0, m)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSet {
    groups: Vec<Vec<usize>>,
}

impl GroupSet {
    pub fn new(groups: Vec<Vec<usize>>, m: usize) -> Result<Self> {
        let mut seen = vec![false; m];
        for g in &groups {
            if g.is_empty() {
                return Err(Error::InvalidArgument("empty group".into()));
            }
            for &i in g {
                if i >= m {
                    return Err(Error::InvalidArgument(format!("group index {i} out of range for m = {m}")));
                }
                if seen[i] {
                    return Err(Error::InvalidArgument(format!("index {i} appears in two groups")));
                }
                seen[i] = true;
            }
        }
        Ok(GroupSet { groups })
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// One group per label value present (−1 before +1), each holding the
/// labeled indices of that class.
pub fn groups_from_labels(d: &Dataset) -> Result<GroupSet> {
    if d.labeled_indices().is_empty() {
        return Err(Error::NoLabels);
    }
    let mut by_label: BTreeMap<i8, Vec<usize>> = BTreeMap::new();
    for &i in d.labeled_indices() {
        by_label.entry(d.labels()[i]).or_default().push(i);
    }
    GroupSet::new(by_label.into_values().collect(), d.len())
}

/// Assignment of labeled indices to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub seed: u64,
    folds: Vec<Vec<usize>>,
}

impl SplitPlan {
    /// Stratified folds: each class is shuffled, then classes are dealt
    /// round-robin in turn so fold sizes differ by at most one.
    pub fn new(d: &Dataset, folds: usize, seed: u64) -> Result<Self> {
        let labeled = d.labeled_indices();
        if folds == 0 || folds > labeled.len() {
            return Err(Error::InvalidArgument(format!(
                "need 1 ≤ folds ≤ {} labeled points, got {folds}",
                labeled.len()
            )));
        }
        let mut rng = rng_stream(seed, stream::FOLDS);
        let mut order = Vec::with_capacity(labeled.len());
        for class in [-1i8, 1] {
            let mut members: Vec<usize> = labeled.iter().copied().filter(|&i| d.labels()[i] == class).collect();
            members.shuffle(&mut rng);
            order.extend(members);
        }
        let mut out = vec![Vec::new(); folds];
        for (k, i) in order.into_iter().enumerate() {
            out[k % folds].push(i);
        }
        for f in &mut out {
            f.sort_unstable();
        }
        Ok(SplitPlan { seed, folds: out })
    }

    /// One fold per labeled point.
    pub fn leave_one_out(d: &Dataset) -> Result<Self> {
        Self::new(d, d.labeled_indices().len(), 0)
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }
}

/// Options for [`load_csv`]. Columns are zero-based.
#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    /// Label column; defaults to the last column.
    pub label_column: Option<usize>,
    /// Ground-truth column; defaults to a header column named `truth`.
    pub truth_column: Option<usize>,
}

fn parse_label(s: &str, row: usize, column: usize, path: &str) -> Result<i8> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
        path: path.into(),
        row,
        column,
        message: format!("label {s:?} is not a number"),
    })?;
    if v == 1.0 || v == 0.0 || v == -1.0 {
        Ok(v as i8)
    } else {
        Err(Error::Parse {
            path: path.into(),
            row,
            column,
            message: format!("label {s:?} not in {{-1, 0, 1}}"),
        })
    }
}

/// Reads a dataset from CSV text. A first row with any non-numeric field
/// is taken as a header.
pub fn read_csv<R: Read>(reader: R, opts: &CsvOptions, name: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = Vec::new();
    for rec in rdr.records() {
        records.push(rec?);
    }
    if records.is_empty() {
        return Err(Error::Parse {
            path: name.into(),
            row: 0,
            column: 0,
            message: "empty file".into(),
        });
    }
    let first_numeric = records[0].iter().all(|f| f.parse::<f64>().is_ok());
    let header = if first_numeric { None } else { Some(records.remove(0)) };
    let row_offset = if header.is_some() { 2 } else { 1 };
    let arity = records.first().map(|r| r.len()).unwrap_or(0);
    if arity < 2 {
        return Err(Error::Parse {
            path: name.into(),
            row: row_offset,
            column: 0,
            message: "need at least one feature column and a label column".into(),
        });
    }
    let label_col = opts.label_column.unwrap_or(arity - 1);
    let truth_col = opts.truth_column.or_else(|| {
        header
            .as_ref()
            .and_then(|h| h.iter().position(|f| f.eq_ignore_ascii_case("truth")))
    });
    if label_col >= arity || truth_col.is_some_and(|t| t >= arity || t == label_col) {
        return Err(Error::InvalidArgument("label/truth column out of range".into()));
    }
    let feature_cols: Vec<usize> = (0..arity).filter(|&j| j != label_col && Some(j) != truth_col).collect();
    let m = records.len();
    let d = feature_cols.len();
    let mut points = DMatrix::zeros(m, d);
    let mut labels = Vec::with_capacity(m);
    let mut truth = truth_col.map(|_| Vec::with_capacity(m));
    for (i, rec) in records.iter().enumerate() {
        let row = i + row_offset;
        if rec.len() != arity {
            return Err(Error::Parse {
                path: name.into(),
                row,
                column: rec.len(),
                message: format!("expected {arity} fields, found {}", rec.len()),
            });
        }
        for (k, &j) in feature_cols.iter().enumerate() {
            let v: f64 = rec[j].parse().map_err(|_| Error::Parse {
                path: name.into(),
                row,
                column: j,
                message: format!("{:?} is not a number", &rec[j]),
            })?;
            points[(i, k)] = v;
        }
        labels.push(parse_label(&rec[label_col], row, label_col, name)?);
        if let (Some(t), Some(col)) = (truth.as_mut(), truth_col) {
            t.push(parse_label(&rec[col], row, col, name)?);
        }
    }
    let ds = Dataset::new(points, labels)?;
    match truth {
        Some(t) => ds.with_truth(t),
        None => Ok(ds),
    }
}

pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let file = File::open(path)?;
    read_csv(file, opts, &path.display().to_string())
}

/// Writes `x0..x{d-1}[,truth],label` with a header. Values use the
/// shortest representation that parses back to the same bits.
pub fn write_csv<W: Write>(d: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..d.dim()).map(|j| format!("x{j}")).collect();
    if d.truth.is_some() {
        header.push("truth".into());
    }
    header.push("label".into());
    w.write_record(&header)?;
    for i in 0..d.len() {
        let mut row: Vec<String> = (0..d.dim()).map(|j| format!("{}", d.points[(i, j)])).collect();
        if let Some(t) = &d.truth {
            row.push(t[i].to_string());
        }
        row.push(d.labels[i].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(d: &Dataset, path: &Path) -> Result<()> {
    write_csv(d, File::create(path)?)
}

/// Indices of `per_class` points of each truth class, uniformly at random.
fn sample_per_class(truth: &[i8], per_class: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(2 * per_class);
    for class in [1i8, -1] {
        let members: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == class).collect();
        chosen.extend(members.choose_multiple(rng, per_class).copied());
    }
    chosen.sort_unstable();
    chosen
}

/// `count` indices uniformly at random, redrawn until both classes occur.
pub fn sample_labeled_split(truth: &[i8], count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let has_pos = truth.contains(&1);
    let has_neg = truth.contains(&-1);
    if count < 2 || count > truth.len() || !has_pos || !has_neg {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {count} labels covering both classes from {} points",
            truth.len()
        )));
    }
    let all: Vec<usize> = (0..truth.len()).collect();
    loop {
        let mut pick: Vec<usize> = all.choose_multiple(rng, count).copied().collect();
        let pos = pick.iter().any(|&i| truth[i] == 1);
        let neg = pick.iter().any(|&i| truth[i] == -1);
        if pos && neg {
            pick.sort_unstable();
            return Ok(pick);
        }
    }
}

fn check_balanced(m: usize, labeled_per_class: usize) -> Result<()> {
    if m == 0 || !m.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("point count must be even and positive, got {m}")));
    }
    if labeled_per_class > m / 2 {
        return Err(Error::InvalidArgument(format!(
            "{labeled_per_class} labels per class exceeds class size {}",
            m / 2
        )));
    }
    Ok(())
}

fn labeled_dataset(points: DMatrix<f64>, truth: Vec<i8>, labeled_per_class: usize, seed: u64) -> Result<Dataset> {
    let mut rng = rng_stream(seed, stream::LABELS);
    let chosen = sample_per_class(&truth, labeled_per_class, &mut rng);
    let mut labels = vec![0i8; truth.len()];
    for i in chosen {
        labels[i] = truth[i];
    }
    Dataset::new(points, labels)?.with_truth(truth)
}

/// Two interleaved half circles: class +1 on `(cos θ, sin θ)`, class −1 on
/// `(cos θ + 0.5, −sin θ − 0.25)`, θ evenly spaced over `[0, π]`, plus
/// isotropic Gaussian noise. The first `m/2` rows are class +1.
pub fn gen_two_moons(m: usize, noise: f64, labeled_per_class: usize, seed: u64) -> Result<Dataset> {
    check_balanced(m, labeled_per_class)?;
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(Error::InvalidArgument(format!("noise must be ≥ 0, got {noise}")));
    }
    let half = m / 2;
    let mut points = DMatrix::zeros(m, 2);
    let mut truth = vec![0i8; m];
    let step = if half > 1 { std::f64::consts::PI / (half - 1) as f64 } else { 0.0 };
    for k in 0..half {
        let theta = k as f64 * step;
        points[(k, 0)] = theta.cos();
        points[(k, 1)] = theta.sin();
        truth[k] = 1;
        points[(half + k, 0)] = theta.cos() + 0.5;
        points[(half + k, 1)] = -theta.sin() - 0.25;
        truth[half + k] = -1;
    }
    if noise > 0.0 {
        let mut rng = rng_stream(seed, stream::GENERATOR);
        let normal = Normal::new(0.0, noise).expect("valid normal");
        for x in points.iter_mut() {
            *x += normal.sample(&mut rng);
        }
    }
    labeled_dataset(points, truth, labeled_per_class, seed)
}

/// Two unit-variance isotropic Gaussians in `dims` dimensions with means
/// `±(separation/2)·1/√dims`, so the mean distance is `separation`. The
/// first `m/2` rows are class +1.
pub fn gen_two_gaussians(m: usize, separation: f64, dims: usize, labeled_per_class: usize, seed: u64) -> Result<Dataset> {
    check_balanced(m, labeled_per_class)?;
    if dims == 0 {
        return Err(Error::InvalidArgument("dims must be ≥ 1".into()));
    }
    if !(separation >= 0.0) || !separation.is_finite() {
        return Err(Error::InvalidArgument(format!("separation must be ≥ 0, got {separation}")));
    }
    let half = m / 2;
    let shift = separation / 2.0 / (dims as f64).sqrt();
    let mut rng = rng_stream(seed, stream::GENERATOR);
    let mut points = DMatrix::zeros(m, dims);
    let mut truth = vec![0i8; m];
    for i in 0..m {
        let (sign, label) = if i < half { (1.0, 1) } else { (-1.0, -1) };
        truth[i] = label;
        for j in 0..dims {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            points[(i, j)] = sign * shift + z;
        }
    }
    labeled_dataset(points, truth, labeled_per_class, seed)
}

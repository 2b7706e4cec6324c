//! Command-line driver: `gen`, `fit`, `predict`, `cv`, `bench`, `bound`.
//!
//! Exit codes: 0 on success, 2 on usage errors (including incompatible
//! parameters), 1 on numerical or I/O failures.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use crate::data::{gen_two_gaussians, gen_two_moons, load_csv, write_csv, CsvOptions, Dataset};
use crate::error::{Error, Result};
use crate::eval::{
    self, cross_validate, loo_select, risk_bound, risk_bound_general, run_bench, write_bench_csv, write_cv_csv, BenchMethod,
    ParamGrid, RiskBoundInput,
};
use crate::kernels::{load_cache, save_cache, KernelMatrix, KernelSpec};
use crate::lrkpca::write_trace_csv;
use crate::model::{fit_model, FitConfig, FittedModel, Head, Method, ModelFile, S2Level};

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "SSKPCA_THREADS";

#[derive(Debug, Parser)]
#[command(name = "sskpca", version, about = "Semi-supervised kernel PCA (MV, LS and LR variants)")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset as CSV.
    Gen(GenArgs),
    /// Fit a model and write it with training-set predictions.
    Fit(FitArgs),
    /// Apply a saved model to points.
    Predict(PredictArgs),
    /// Select a configuration by transductive cross-validation.
    Cv(CvArgs),
    /// Multi-split benchmark: mean and std error per method.
    Bench(BenchArgs),
    /// Evaluate the transductive risk bound.
    Bound(BoundArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Two moons with this many points.
    #[arg(long, value_name = "M", conflicts_with = "two_gaussians")]
    pub two_moons: Option<usize>,
    /// Two overlapping Gaussians with this many points.
    #[arg(long, value_name = "M")]
    pub two_gaussians: Option<usize>,
    /// Noise standard deviation (two moons).
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    /// Mean distance (two Gaussians).
    #[arg(long, default_value_t = 2.5)]
    pub separation: f64,
    /// Dimensionality (two Gaussians).
    #[arg(long, default_value_t = 241)]
    pub dims: usize,
    /// Labeled points per class.
    #[arg(long, default_value_t = 4)]
    pub labels: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelKind {
    Gaussian,
    Diffusion,
    Mixed,
    Lpinv,
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    #[arg(long, value_enum, default_value_t = KernelKind::Gaussian)]
    pub kernel: KernelKind,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Weight of the Gaussian part of a mixed kernel.
    #[arg(long = "mix-w")]
    pub mix_w: Option<f64>,
    #[arg(long)]
    pub knn: Option<usize>,
}

impl KernelArgs {
    pub fn spec(&self) -> Result<KernelSpec> {
        let need = |v: Option<f64>, flag: &str| {
            v.ok_or_else(|| Error::InvalidArgument(format!("--kernel {:?} needs --{flag}", self.kernel)))
        };
        let need_knn = || {
            self.knn
                .ok_or_else(|| Error::InvalidArgument(format!("--kernel {:?} needs --knn", self.kernel)))
        };
        let spec = match self.kernel {
            KernelKind::Gaussian => KernelSpec::Gaussian { gamma: need(self.gamma, "gamma")? },
            KernelKind::Diffusion => KernelSpec::Diffusion {
                tau: need(self.tau, "tau")?,
                knn: need_knn()?,
            },
            KernelKind::Mixed => KernelSpec::Mixed {
                gamma: need(self.gamma, "gamma")?,
                tau: need(self.tau, "tau")?,
                w: need(self.mix_w, "mix-w")?,
                knn: need_knn()?,
            },
            KernelKind::Lpinv => KernelSpec::LaplacianPinv { knn: need_knn()? },
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Args)]
pub struct CsvArgs {
    /// Zero-based label column (default: last).
    #[arg(long)]
    pub label_column: Option<usize>,
    /// Zero-based ground-truth column (default: a header column named `truth`).
    #[arg(long)]
    pub truth_column: Option<usize>,
}

impl CsvArgs {
    fn options(&self) -> CsvOptions {
        CsvOptions {
            label_column: self.label_column,
            truth_column: self.truth_column,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset CSV.
    pub data: PathBuf,
    #[arg(long, default_value = "ls")]
    pub method: Method,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Loss weight (LS/LR) or within-group penalty (MV).
    #[arg(long)]
    pub c: Option<f64>,
    /// Absolute variance level.
    #[arg(long, conflicts_with = "rho")]
    pub s2: Option<f64>,
    /// Normalised variance level: s² = ρ·m·mean(t²).
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, conflicts_with = "uncentered")]
    pub centered: bool,
    #[arg(long)]
    pub uncentered: bool,
    /// MV-KPCA groups are the label classes (the only supported source).
    #[arg(long)]
    pub groups_from_labels: bool,
    #[arg(long, default_value = "threshold")]
    pub head: Head,
    #[command(flatten)]
    pub csv: CsvArgs,
    /// Directory for cached kernel matrices.
    #[arg(long)]
    pub kernel_cache: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Query CSV in the dataset format; its label column is ignored.
    pub query: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// The CSV the model was fitted on.
    #[arg(long)]
    pub train: PathBuf,
    #[command(flatten)]
    pub csv: CsvArgs,
    /// Output CSV (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    pub data: PathBuf,
    /// Grid file (TOML).
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Leave-one-out instead of k folds.
    #[arg(long, conflicts_with = "folds")]
    pub loo: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub csv: CsvArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Synthetic {
    #[value(name = "g241c-like")]
    G241cLike,
    #[value(name = "two-moons")]
    TwoMoons,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Dataset CSV with a ground-truth column.
    #[arg(conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub synthetic: Option<Synthetic>,
    /// Points of the synthetic dataset.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long, default_value_t = 2.5)]
    pub separation: f64,
    #[arg(long, default_value_t = 241)]
    pub dims: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 12)]
    pub splits: usize,
    /// Labeled points per split.
    #[arg(long, default_value_t = 100)]
    pub labels: usize,
    /// Grid file per method row (repeatable); single-configuration grids
    /// are used as fixed settings, larger ones are selected by CV.
    #[arg(long, required = true)]
    pub grid: Vec<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub csv: CsvArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long, default_value_t = 0.0)]
    pub empirical_risk: f64,
    /// Rank of the hypothesis quadratic form.
    #[arg(long, required_unless_present = "mu")]
    pub q: Option<usize>,
    #[arg(long, required_unless_present = "mu")]
    pub s2: Option<f64>,
    /// Coefficient-norm bound for the general form.
    #[arg(long, requires = "k_fro")]
    pub mu: Option<f64>,
    /// Frobenius norm of the kernel matrix (general form).
    #[arg(long)]
    pub k_fro: Option<f64>,
    #[arg(long)]
    pub l: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run_gen(args: &GenArgs) -> Result<()> {
    let d = match (args.two_moons, args.two_gaussians) {
        (Some(m), None) => gen_two_moons(m, args.noise, args.labels, args.seed)?,
        (None, Some(m)) => gen_two_gaussians(m, args.separation, args.dims, args.labels, args.seed)?,
        _ => return Err(usage("choose exactly one of --two-moons or --two-gaussians")),
    };
    let mut w = output(args.out.as_deref())?;
    write_csv(&d, &mut w)?;
    w.flush()?;
    Ok(())
}

fn fit_config(args: &FitArgs) -> Result<FitConfig> {
    let kernel = args.kernel.spec()?;
    let c = match args.method {
        Method::Kpca => args.c.unwrap_or(0.0),
        _ => args.c.ok_or_else(|| usage(format!("--method {} needs --c", args.method)))?,
    };
    let s2 = match (args.s2, args.rho) {
        (Some(v), None) => S2Level::Absolute(v),
        (None, Some(r)) => S2Level::Normalized(r),
        (None, None) if matches!(args.method, Method::Kpca | Method::Mv) => S2Level::Normalized(1.0),
        _ => return Err(usage(format!("--method {} needs --s2 or --rho", args.method))),
    };
    if args.method == Method::Mv && args.uncentered {
        return Err(usage("MV-KPCA uses the centered variance"));
    }
    let cfg = FitConfig {
        kernel,
        method: args.method,
        head: args.head,
        c,
        s2,
        centered: !args.uncentered,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn cache_file(dir: &Path, hash: &str, spec: &KernelSpec) -> PathBuf {
    let tag: String = spec
        .to_string()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    dir.join(format!("{}-{tag}.kernel", &hash[..16]))
}

fn kernel_for(d: &Dataset, spec: &KernelSpec, cache: Option<&Path>) -> Result<KernelMatrix> {
    let Some(dir) = cache else {
        return KernelMatrix::build(spec, &d.points);
    };
    let hash = d.points_hash();
    let path = cache_file(dir, &hash, spec);
    if let Some(k) = load_cache(&path, &hash, spec, &d.points)? {
        log::info!("kernel loaded from {}", path.display());
        return Ok(k);
    }
    let k = KernelMatrix::build(spec, &d.points)?;
    create_dir(dir)?;
    save_cache(&k, &hash, &path)?;
    Ok(k)
}

fn write_predictions(path: Option<&Path>, values: &DMatrix<f64>, labels: &[i8]) -> Result<()> {
    let mut w = csv::Writer::from_writer(output(path)?);
    w.write_record(["index", "f", "label"])?;
    for (i, label) in labels.iter().enumerate() {
        w.write_record(&[i.to_string(), format!("{}", values[(i, 0)]), label.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn run_fit(args: &FitArgs) -> Result<()> {
    let cfg = fit_config(args)?;
    let d = load_csv(&args.data, &args.csv.options())?;
    let kernel = kernel_for(&d, &cfg.kernel, args.kernel_cache.as_deref())?;
    let model = fit_model(&kernel, &d, &cfg)?;
    create_dir(&args.out)?;
    fs::write(args.out.join("model.txt"), model.to_text())?;
    let features = model.features(&kernel);
    let labels = model.head.classify_rows(&features);
    write_predictions(Some(&args.out.join("predictions.csv")), &features, &labels)?;
    if cfg.method == Method::Lr {
        write_trace_csv(&model.trace, BufWriter::new(File::create(args.out.join("trace.csv"))?))?;
    }
    if d.truth().is_some() && !d.unlabeled_indices().is_empty() {
        let err = eval::unlabeled_error(&d, &labels)?;
        println!("transductive error: {:.4}", err);
    }
    println!("model written to {}", args.out.join("model.txt").display());
    Ok(())
}

fn run_predict(args: &PredictArgs) -> Result<()> {
    let file = ModelFile::parse(&fs::read_to_string(&args.model)?)?;
    let opts = args.csv.options();
    let train = load_csv(&args.train, &opts)?;
    let train_hash = train.points_hash();
    let kernel = KernelMatrix::build(&file.config.kernel, &train.points)?;
    let model: FittedModel = file.into_fitted(&kernel, &train_hash)?;
    let query = load_csv(&args.query, &opts)?;
    let features = if query.points_hash() == train_hash {
        model.features(&kernel)
    } else {
        model.features_at(&kernel, &query.points)?
    };
    let labels = model.head.classify_rows(&features);
    write_predictions(args.out.as_deref(), &features, &labels)
}

fn run_cv(args: &CvArgs) -> Result<()> {
    let grid = ParamGrid::load(&args.grid)?;
    let configs = grid.expand()?;
    let d = load_csv(&args.data, &args.csv.options())?;
    let report = if args.loo {
        loo_select(&d, &configs)?
    } else {
        cross_validate(&d, &configs, args.folds, args.seed)?
    };
    create_dir(&args.out)?;
    write_cv_csv(&report, BufWriter::new(File::create(args.out.join("cv.csv"))?))?;
    let best = report.best();
    fs::write(args.out.join("chosen.txt"), format!("{}\n", best.config))?;
    println!("selected: {} (cv error {:.4} ± {:.4})", best.config, best.mean, best.std);
    Ok(())
}

fn run_bench_cmd(args: &BenchArgs) -> Result<()> {
    let d = match (&args.data, args.synthetic) {
        (Some(path), None) => load_csv(path, &args.csv.options())?,
        (None, Some(Synthetic::G241cLike)) => {
            gen_two_gaussians(args.points.unwrap_or(1500), args.separation, args.dims, 0, args.seed)?
        }
        (None, Some(Synthetic::TwoMoons)) => gen_two_moons(args.points.unwrap_or(200), args.noise, 0, args.seed)?,
        _ => return Err(usage("give a dataset CSV or --synthetic")),
    };
    let mut methods = Vec::new();
    for path in &args.grid {
        let configs = ParamGrid::load(path)?.expand()?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().to_string()).unwrap_or_default();
        let name = format!("{}:{stem}", configs[0].method);
        methods.push(BenchMethod { name, configs });
    }
    let report = run_bench(&d, &methods, args.splits, args.labels, args.folds, args.seed)?;
    create_dir(&args.out)?;
    write_bench_csv(&report, BufWriter::new(File::create(args.out.join("bench.csv"))?))?;
    println!("{:<28} {:>16}", "method", "error % (std)");
    for row in &report.rows {
        println!("{:<28} {:>8.2} ({:.2})", row.name, 100.0 * row.mean, 100.0 * row.std);
    }
    Ok(())
}

fn run_bound(args: &BoundArgs) -> Result<()> {
    let value = match (args.mu, args.k_fro) {
        (Some(mu), Some(k)) => risk_bound_general(args.empirical_risk, mu, k, args.l, args.n, args.delta)?,
        _ => risk_bound(&RiskBoundInput {
            empirical_risk: args.empirical_risk,
            q: args.q.ok_or_else(|| usage("--q is required"))?,
            s2: args.s2.ok_or_else(|| usage("--s2 is required"))?,
            l: args.l,
            n: args.n,
            delta: args.delta,
        })?,
    };
    println!("{value}");
    Ok(())
}

fn configure_threads() {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not set thread count: {e}");
                }
            }
            _ => log::warn!("ignoring {THREADS_ENV}={v:?}"),
        }
    }
}

/// Exit code for an error: 2 for usage problems, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::Unsupported(_) => 2,
        _ => 1,
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => run_gen(a),
        Command::Fit(a) => run_fit(a),
        Command::Predict(a) => run_predict(a),
        Command::Cv(a) => run_cv(a),
        Command::Bench(a) => run_bench_cmd(a),
        Command::Bound(a) => run_bound(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    configure_threads();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verify_cli() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(main_with_args(["sskpca", "frobnicate"]), 2);
        assert_eq!(main_with_args(["sskpca", "gen"]), 2);
        assert_eq!(main_with_args(["sskpca", "bound", "--l", "0", "--n", "3", "--q", "1", "--s2", "1"]), 2);
    }

    #[test]
    fn kernel_flags_required() {
        let args = KernelArgs {
            kernel: KernelKind::Mixed,
            gamma: Some(1.0),
            tau: None,
            mix_w: Some(0.5),
            knn: Some(3),
        };
        assert!(matches!(args.spec(), Err(Error::InvalidArgument(_))));
    }
}

//! `klda` command line.
//!
//! Exit codes: 0 on success, 2 for usage problems (bad flags, invalid
//! combinations, missing input files), 1 for failures at run time.

use std::ffi::OsString;
use std::fmt;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::batch::FeatureBatch;
use crate::classify::{
    DiscriminantModel, EnsembleModel, IncrementalClassifier, KldaEnsembleLearner, LdaLearner, Ridge,
};
use crate::codec::{read_file, write_atomic};
use crate::error::KldaError;
use crate::featstore::{validate_manifest, DatasetManifest, Dtype, TEST_SPLIT, TRAIN_SPLIT};
use crate::harness::{
    accuracy, average_runs, build_stream, run_cil, sweep, synth_gaussians, synth_rings,
    GaussianSpec, Method, MethodConfig, RingSpec, RunReport, RunSummary, SweepGrid,
};
use crate::rff::{DEFAULT_SIGMA, DEFAULT_TRANSFORM_DIM};

/// Directory searched for relative manifest and model paths that do not
/// exist relative to the working directory.
pub const DATA_DIR_ENV: &str = "KLDA_DATA_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "klda",
    version,
    about = "Kernel LDA for class-incremental learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a manifest and the feature files it names.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Replay the class-incremental stream and report final accuracy.
    Train(TrainArgs),
    /// Score an exported model on a dataset's test split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// L2-normalize raw features, as at export time.
        #[arg(long)]
        normalize: bool,
        #[arg(long, default_value = "eval_report.json")]
        out: PathBuf,
    },
    /// Grid over D and sigma, one CSV row per run.
    Sweep(SweepArgs),
    /// Write a synthetic dataset with manifest.
    Synth {
        #[arg(long, value_enum)]
        kind: SynthKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = DtypeArg::F32)]
        dtype: DtypeArg,
    },
    /// Fit on the full training split and save the model.
    Export {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthKind {
    Rings,
    Gaussians,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DtypeArg {
    F32,
    F64,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// Random feature dimension D.
    #[arg(long = "dim", default_value_t = DEFAULT_TRANSFORM_DIM)]
    transform_dim: usize,
    /// RBF bandwidth.
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    /// Ridge relative to trace(Sigma)/D.
    #[arg(long, default_value_t = crate::classify::DEFAULT_RELATIVE_RIDGE)]
    ridge: f64,
    /// Ensemble size E (KLDA-E only, default 5).
    #[arg(long)]
    ensemble: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// L2-normalize raw features before the feature map.
    #[arg(long)]
    normalize: bool,
}

impl ModelArgs {
    fn config(&self) -> MethodConfig {
        let mut c = MethodConfig::new(self.method)
            .with_rff(self.transform_dim, self.sigma)
            .with_ridge(self.ridge)
            .with_seed(self.seed);
        if let Some(e) = self.ensemble {
            c = c.with_ensemble_size(e);
        }
        c.normalize_input = self.normalize;
        c
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Number of tasks T.
    #[arg(long, default_value_t = 10)]
    tasks: usize,
    /// Run r uses class-order and projector seed `seed + r`.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_parser = parse_method, default_value = "klda")]
    method: Method,
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    sigmas: Vec<f64>,
    #[arg(long, default_value_t = crate::classify::DEFAULT_RELATIVE_RIDGE)]
    ridge: f64,
    #[arg(long)]
    ensemble: Option<usize>,
    #[arg(long, default_value_t = 10)]
    tasks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    normalize: bool,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: KldaError| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Config,
    Load,
    Validate,
    Train,
    Eval,
    Sweep,
    Synth,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Validate => "validate",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Sweep => "sweep",
            Stage::Synth => "synth",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug)]
struct Failure {
    stage: Stage,
    message: String,
    usage: bool,
}

impl Failure {
    fn new(stage: Stage, err: KldaError) -> Self {
        let usage = is_usage_error(&err);
        Self {
            stage,
            message: err.to_string(),
            usage,
        }
    }

    fn usage(stage: Stage, message: impl Into<String>) -> Self {
        Self {
            stage,
            message: message.into(),
            usage: true,
        }
    }

    fn runtime(stage: Stage, message: impl Into<String>) -> Self {
        Self {
            stage,
            message: message.into(),
            usage: false,
        }
    }

    fn exit_code(&self) -> i32 {
        if self.usage {
            2
        } else {
            1
        }
    }
}

fn is_usage_error(err: &KldaError) -> bool {
    match err {
        KldaError::Config(_) => true,
        KldaError::Io { source, .. } => source.kind() == ErrorKind::NotFound,
        _ => false,
    }
}

trait StageExt<T> {
    fn at(self, stage: Stage) -> Result<T, Failure>;
}

impl<T> StageExt<T> for crate::Result<T> {
    fn at(self, stage: Stage) -> Result<T, Failure> {
        self.map_err(|e| Failure::new(stage, e))
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("klda: {} failed: {}", f.stage, f.message);
            f.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Validate { manifest } => cmd_validate(&manifest),
        Command::Train(args) => cmd_train(&args),
        Command::Eval {
            model,
            manifest,
            normalize,
            out,
        } => cmd_eval(&model, &manifest, normalize, &out),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Synth {
            kind,
            out,
            seed,
            dtype,
        } => cmd_synth(kind, &out, seed, dtype),
        Command::Export { model, out } => cmd_export(&model, &out),
    }
}

/// Falls back to `$KLDA_DATA_DIR/<path>` for relative paths missing here.
fn resolve_input(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    path.to_path_buf()
}

fn load_manifest(path: &Path) -> Result<DatasetManifest, Failure> {
    let path = resolve_input(path);
    if !path.exists() {
        return Err(Failure::usage(
            Stage::Load,
            format!("manifest {} not found", path.display()),
        ));
    }
    DatasetManifest::load(&path).at(Stage::Load)
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::runtime(Stage::Write, e.to_string()))?;
    write_atomic(path, text.as_bytes()).at(Stage::Write)
}

fn cmd_validate(manifest: &Path) -> Result<(), Failure> {
    let m = load_manifest(manifest)?;
    let violations = validate_manifest(&m);
    if violations.is_empty() {
        println!(
            "{}: ok ({} classes, {} splits)",
            m.dataset,
            m.num_classes,
            m.splits.len()
        );
        return Ok(());
    }
    for v in &violations {
        println!("{}: {v}", m.dataset);
    }
    Err(Failure::runtime(
        Stage::Validate,
        format!("{} problem(s) in {}", violations.len(), m.dataset),
    ))
}

#[derive(Serialize)]
struct TrainOutput<'a> {
    summary: Option<&'a RunSummary>,
    runs: &'a [RunReport],
}

fn cmd_train(args: &TrainArgs) -> Result<(), Failure> {
    if args.tasks == 0 {
        return Err(Failure::usage(Stage::Config, "--tasks must be at least 1"));
    }
    if args.repeats == 0 {
        return Err(Failure::usage(
            Stage::Config,
            "--repeats must be at least 1",
        ));
    }
    let config = args.model.config();
    config.validate().at(Stage::Config)?;
    let manifest = load_manifest(&args.model.manifest)?;

    let mut reports = Vec::with_capacity(args.repeats);
    for r in 0..args.repeats as u64 {
        let seed = args.model.seed.wrapping_add(r);
        let stream = build_stream(&manifest, args.tasks, seed).at(Stage::Load)?;
        let report = run_cil(&stream, &config.clone().with_seed(seed)).at(Stage::Train)?;
        reports.push(report);
    }
    let failed = reports
        .iter()
        .find(|r| !r.complete)
        .map(|r| r.error.clone().unwrap_or_else(|| "incomplete run".into()));
    let summary = if failed.is_none() {
        Some(average_runs(&reports).at(Stage::Train)?)
    } else {
        None
    };
    write_json(
        &args.out,
        &TrainOutput {
            summary: summary.as_ref(),
            runs: &reports,
        },
    )?;
    match (summary, failed) {
        (Some(s), _) => {
            println!("{s}");
            Ok(())
        }
        (None, Some(msg)) => Err(Failure::runtime(Stage::Train, msg)),
        (None, None) => unreachable!("summary is computed whenever no run failed"),
    }
}

/// Either file kind an `export` can produce.
enum SavedModel {
    Linear(DiscriminantModel),
    Kernel(EnsembleModel),
}

impl SavedModel {
    fn load(path: &Path) -> crate::Result<Self> {
        let bytes = read_file(path)?;
        match bytes.get(..4) {
            Some(b"KMDL") => Ok(SavedModel::Linear(DiscriminantModel::from_bytes(&bytes)?)),
            _ => Ok(SavedModel::Kernel(EnsembleModel::from_bytes(&bytes)?)),
        }
    }

    fn method(&self) -> Method {
        match self {
            SavedModel::Linear(_) => Method::Lda,
            SavedModel::Kernel(e) if e.len() == 1 => Method::Klda,
            SavedModel::Kernel(_) => Method::KldaEnsemble,
        }
    }

    fn predict(&self, raw: &FeatureBatch) -> crate::Result<Vec<crate::ClassId>> {
        match self {
            SavedModel::Linear(m) => m.predict(raw),
            SavedModel::Kernel(e) => e.predict(raw),
        }
    }
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    method: Method,
    dataset: &'a str,
    model: String,
    test_rows: usize,
    accuracy: f64,
}

fn cmd_eval(model: &Path, manifest: &Path, normalize: bool, out: &Path) -> Result<(), Failure> {
    let model_path = resolve_input(model);
    if !model_path.exists() {
        return Err(Failure::usage(
            Stage::Load,
            format!("model {} not found", model_path.display()),
        ));
    }
    let saved = SavedModel::load(&model_path).at(Stage::Load)?;
    let m = load_manifest(manifest)?;
    let mut test = m.load_split(TEST_SPLIT).at(Stage::Load)?;
    if normalize {
        test = test.l2_normalized();
    }
    let predicted = saved.predict(&test).at(Stage::Eval)?;
    let acc = accuracy(&predicted, test.labels());
    write_json(
        out,
        &EvalOutput {
            method: saved.method(),
            dataset: &m.dataset,
            model: model_path.display().to_string(),
            test_rows: test.nrows(),
            accuracy: acc,
        },
    )?;
    println!(
        "{} {} accuracy {:.2}",
        saved.method(),
        m.dataset,
        100.0 * acc
    );
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    if args.tasks == 0 {
        return Err(Failure::usage(Stage::Config, "--tasks must be at least 1"));
    }
    if args.repeats == 0 || args.jobs == 0 {
        return Err(Failure::usage(
            Stage::Config,
            "--repeats and --jobs must be at least 1",
        ));
    }
    if !args.method.uses_rff() {
        return Err(Failure::usage(
            Stage::Config,
            format!(
                "sweep varies D and sigma, which {} does not use",
                args.method
            ),
        ));
    }
    let mut base = MethodConfig::new(args.method)
        .with_ridge(args.ridge)
        .with_seed(args.seed);
    if let Some(e) = args.ensemble {
        base = base.with_ensemble_size(e);
    }
    base.normalize_input = args.normalize;
    base.validate().at(Stage::Config)?;
    let grid = SweepGrid {
        transform_dims: args.dims.clone(),
        sigmas: args.sigmas.clone(),
    };
    for (d, s) in grid.cells() {
        base.clone().with_rff(d, s).validate().at(Stage::Config)?;
    }
    let manifest = load_manifest(&args.manifest)?;
    let stream = build_stream(&manifest, args.tasks, args.seed).at(Stage::Load)?;
    let table = sweep(&grid, &stream, &base, args.repeats, args.jobs).at(Stage::Sweep)?;
    write_atomic(&args.out, table.to_csv().as_bytes()).at(Stage::Write)?;
    let cells = table.cells();
    let best = cells
        .iter()
        .filter_map(|c| c.mean_accuracy.map(|a| (c, a)))
        .fold(
            None::<(&crate::harness::SweepCell, f64)>,
            |acc, (c, a)| match acc {
                Some((_, b)) if b >= a => acc,
                _ => Some((c, a)),
            },
        );
    let failures: usize = cells.iter().map(|c| c.failures).sum();
    match best {
        Some((c, a)) => println!(
            "{} {} best D={} sigma={:e} mean accuracy {:.2} ({} cells, {} failed runs)",
            args.method,
            manifest.dataset,
            c.transform_dim,
            c.sigma,
            100.0 * a,
            cells.len(),
            failures
        ),
        None => {
            return Err(Failure::runtime(
                Stage::Sweep,
                format!("all {} runs failed", table.rows.len()),
            ))
        }
    }
    Ok(())
}

fn cmd_synth(kind: SynthKind, out: &Path, seed: u64, dtype: DtypeArg) -> Result<(), Failure> {
    let data = match kind {
        SynthKind::Rings => synth_rings(&RingSpec {
            seed,
            ..RingSpec::default()
        }),
        SynthKind::Gaussians => synth_gaussians(&GaussianSpec {
            seed,
            ..GaussianSpec::default()
        }),
    }
    .at(Stage::Synth)?;
    let dtype = match dtype {
        DtypeArg::F32 => Dtype::F32,
        DtypeArg::F64 => Dtype::F64,
    };
    let manifest = data.write(out, dtype, seed).at(Stage::Write)?;
    println!(
        "{}: {} classes, {} train / {} test rows written to {}",
        manifest.dataset,
        manifest.num_classes,
        manifest.splits[TRAIN_SPLIT].rows,
        manifest.splits[TEST_SPLIT].rows,
        out.display()
    );
    Ok(())
}

fn cmd_export(args: &ModelArgs, out: &Path) -> Result<(), Failure> {
    let config = args.config();
    config.validate().at(Stage::Config)?;
    if config.method == Method::Ncm {
        return Err(Failure::usage(
            Stage::Config,
            "export supports lda, klda and klda-e",
        ));
    }
    let manifest = load_manifest(&args.manifest)?;
    let train = manifest.load_split(TRAIN_SPLIT).at(Stage::Load)?;
    let classes = train.split_by_class();
    let dim = train.width();
    let ridge = Ridge::Relative(config.ridge);
    let bytes = match config.method {
        Method::Lda => {
            let mut learner = LdaLearner::new(dim, ridge).at(Stage::Config)?;
            for (&c, batch) in &classes {
                learner.learn_class(c, batch).at(Stage::Train)?;
            }
            learner.model().at(Stage::Train)?.to_bytes()
        }
        _ => {
            let size = config.ensemble_size;
            let mut learner = KldaEnsembleLearner::new(
                config.rff_config(dim),
                size,
                ridge,
                config.normalize_input,
            )
            .at(Stage::Config)?;
            for (&c, batch) in &classes {
                learner.learn_class(c, batch).at(Stage::Train)?;
            }
            learner.export().at(Stage::Train)?.to_bytes()
        }
    };
    write_atomic(out, &bytes).at(Stage::Write)?;
    println!(
        "{} {} exported ({} classes) to {}",
        config.method,
        manifest.dataset,
        classes.len(),
        out.display()
    );
    Ok(())
}

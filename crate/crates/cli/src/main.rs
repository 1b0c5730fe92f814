//! Command-line front end: datasets, benchmark sweeps, energy predictors
//! and reports.
//!
//! Exit status: 0 on success, 1 on a usage error, 2 on a runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use edgebench::datasets::{
    generate_synthetic, ingest_images, read_dataset_csv, standardize, write_dataset_csv, SyntheticSpec,
};
use edgebench::harness::{load_records, run_matrix, Algorithm, MatrixSpec, Phase, RunStatus, SpecProvider};
use edgebench::predictor::{
    design_matrix, encode, fit_model, kfold_cv, random_search, EncodeRow, EncodingSchema, FittedModel,
    ForestParams, ModelSpec, ParamGrid, PredictorFile, FEATURE_NAMES,
};
use edgebench::report::{grouped_report, write_plot_data, write_report_csv, Prediction};
use edgebench::{Error, Result};

#[derive(Parser)]
#[command(name = "edgebench", version, about = "Energy benchmarking of image classifiers and energy prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create, ingest or standardize datasets (CSV: id,label,h,w,c,p0..;
    /// a dataset is named after its file stem)
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Run experiment matrices
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Fit an energy predictor on a records CSV
    Fit(FitArgs),
    /// Predict energy for records or for one configuration
    Predict(PredictArgs),
    /// Score a model on held-out records; prints a JSON report
    Evaluate(EvaluateArgs),
    /// Print the feature importances of a random-forest model
    Importance(ImportanceArgs),
    /// Summaries and plot-data series from a records CSV
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Generate a synthetic dataset
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 300)]
        n_images: usize,
        #[arg(long, default_value_t = 28)]
        resolution: usize,
        #[arg(long, default_value_t = 1)]
        channels: usize,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        /// Target fraction of zero pixels in [0, 1)
        #[arg(long, default_value_t = 0.5)]
        sparsity: f64,
        #[arg(long, default_value_t = 1.0)]
        separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Read a directory with one subdirectory of images per class
    Ingest {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        resolution: usize,
        #[arg(long)]
        grayscale: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write nested, class-balanced size subsets at several resolutions
    Standardize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "300,600,900,1200,1500")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "17,22,28")]
        resolutions: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory receiving `<name>-<size>-<resolution>.csv`
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Execute every (configuration, repetition) of a TOML matrix spec
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Keep rows already in the output file and skip their runs
        #[arg(long)]
        resume: bool,
        /// Override the spec's output path
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Rf,
    Gp,
    Ols,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_enum)]
    model: ModelKind,
    /// Records CSV; failed rows are ignored
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trees in the forest
    #[arg(long)]
    n_trees: Option<usize>,
    /// Randomized search over a built-in forest grid with this many samples
    #[arg(long)]
    search: Option<usize>,
    /// Report k-fold cross validation of the chosen settings
    #[arg(long)]
    cv: Option<usize>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Records CSV to predict; otherwise describe one configuration
    #[arg(long = "in", conflicts_with_all = ["algorithm", "phase"])]
    input: Option<PathBuf>,
    /// Output CSV for `--in` (default: stdout)
    #[arg(long, requires = "input")]
    out: Option<PathBuf>,
    #[arg(long, required_unless_present = "input")]
    algorithm: Option<String>,
    #[arg(long, required_unless_present = "input")]
    phase: Option<String>,
    #[arg(long, default_value_t = 28)]
    resolution: usize,
    #[arg(long, default_value_t = 300)]
    n_images: usize,
    #[arg(long, default_value_t = 10)]
    n_classes: usize,
    #[arg(long, default_value_t = 1)]
    channels: usize,
    #[arg(long)]
    color: bool,
    #[arg(long, default_value = "rpi3")]
    device: String,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    /// Also write the grouped rows as CSV
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ImportanceArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Directory receiving energy_vs_size.csv and energy_vs_resolution.csv
    #[arg(long)]
    plot_data: Option<PathBuf>,
}

fn default_grid() -> ParamGrid {
    ParamGrid {
        n_trees: vec![50, 100, 200, 400, 800],
        max_features: vec![None, Some(2), Some(5), Some(14)],
        max_depth: vec![Some(10), Some(30), Some(90), None],
        bootstrap: vec![true, false],
        min_samples_leaf: vec![1, 2, 4],
        min_samples_split: vec![2, 5, 10],
    }
}

/// `println!` that reports a closed stdout as an error instead of panicking.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        writeln!(std::io::stdout().lock(), $($arg)*).map_err(|e| Error::io("<stdout>", e))?
    }};
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    out!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn dataset(cmd: DatasetCmd) -> Result<()> {
    match cmd {
        DatasetCmd::Gen {
            out,
            n_images,
            resolution,
            channels,
            classes,
            sparsity,
            separation,
            seed,
        } => {
            let ds = generate_synthetic(&SyntheticSpec {
                n_images,
                resolution,
                channels,
                n_classes: classes,
                sparsity,
                class_separation: separation,
                seed,
            })?;
            write_dataset_csv(&ds, &out)?;
            out!("wrote {} images to {}", ds.len(), out.display());
        }
        DatasetCmd::Ingest {
            dir,
            resolution,
            grayscale,
            out,
        } => {
            let ds = ingest_images(&dir, resolution, grayscale)?;
            write_dataset_csv(&ds, &out)?;
            out!("wrote {} images in {} classes to {}", ds.len(), ds.n_classes, out.display());
        }
        DatasetCmd::Standardize {
            input,
            sizes,
            resolutions,
            seed,
            out_dir,
        } => {
            let base = read_dataset_csv(&input)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            for v in standardize(&base, &sizes, &resolutions, seed)? {
                let path = out_dir.join(format!("{}.csv", v.name));
                write_dataset_csv(&v, &path)?;
                out!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn bench(cmd: BenchCmd) -> Result<()> {
    let BenchCmd::Run { config, resume, out } = cmd;
    let mut spec = MatrixSpec::load(&config)?;
    if let Some(out) = out {
        spec.output = out;
    }
    let provider = SpecProvider::from_spec(&spec);
    let s = run_matrix(&spec, &provider, resume)?;
    out!(
        "{} runs executed, {} skipped, {} failed; records in {}",
        s.executed,
        s.skipped,
        s.failures.len(),
        spec.output.display()
    );
    for f in &s.failures {
        eprintln!(
            "failed: {} {} {} n={} r={} rep={}: {}",
            f.config.algorithm, f.config.phase, f.config.dataset, f.config.n_images, f.config.resolution, f.rep, f.message
        );
    }
    Ok(())
}

fn fit(args: FitArgs) -> Result<()> {
    let records = load_records(&args.input)?;
    let schema = EncodingSchema::default();
    let (x, y, unseen) = design_matrix::<f64>(&schema, &records)?;
    if unseen > 0 {
        log::warn!("{unseen} training row(s) hold levels outside the encoding schema");
    }
    let spec = match args.model {
        ModelKind::Ols => ModelSpec::Ols,
        ModelKind::Gp => ModelSpec::gp(),
        ModelKind::Rf => {
            let mut params = ForestParams {
                seed: args.seed,
                ..Default::default()
            };
            if let Some(n) = args.n_trees {
                params.n_trees = n;
            }
            if let Some(n_iter) = args.search {
                let k = args.cv.unwrap_or(10).min(x.rows());
                let r = random_search(&x, &y, &default_grid(), n_iter, k, args.seed)?;
                eprintln!("search best mean R^2 {:?}: {:?}", r.best_score, r.best);
                params = r.best;
            }
            ModelSpec::forest(params)
        }
    };
    if let Some(k) = args.cv {
        let r = kfold_cv(&x, &y, k, &spec, args.seed)?;
        print_json(&serde_json::json!({
            "cv_folds": k,
            "mean_r_squared": r.mean_r_squared,
            "std_r_squared": r.std_r_squared,
            "pooled_r_squared": r.pooled_r_squared,
            "mean_rmse": r.mean_rmse,
            "std_rmse": r.std_rmse,
        }))?;
    }
    let model = fit_model(&x, &y, &spec)?;
    PredictorFile::new(schema, model).save(&args.out)?;
    out!("fitted {} on {} rows; model in {}", spec_name(&spec), y.len(), args.out.display());
    Ok(())
}

fn spec_name(spec: &ModelSpec<f64>) -> &'static str {
    match spec {
        ModelSpec::Ols => "ols",
        ModelSpec::Gp { .. } => "gp",
        ModelSpec::Forest { .. } => "rf",
    }
}

fn predictions(file: &PredictorFile, path: &Path) -> Result<(Vec<edgebench::harness::MeasurementRecord>, Vec<Prediction>)> {
    let records: Vec<_> = load_records(path)?
        .into_iter()
        .filter(|r| r.status == RunStatus::Ok)
        .collect();
    let preds = records
        .iter()
        .map(|r| {
            let (energy_j, _) = file.predict_row(&EncodeRow::from(&r.config))?;
            Ok(Prediction {
                config: r.config.clone(),
                rep: r.rep,
                energy_j,
            })
        })
        .collect::<Result<_>>()?;
    Ok((records, preds))
}

fn predict(args: PredictArgs) -> Result<()> {
    let file = PredictorFile::load(&args.model)?;
    if let Some(input) = args.input {
        let (records, preds) = predictions(&file, &input)?;
        let sink: Box<dyn std::io::Write> = match &args.out {
            Some(p) => Box::new(std::fs::File::create(p).map_err(|e| Error::io(p, e))?),
            None => Box::new(std::io::stdout()),
        };
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["algorithm", "phase", "dataset", "n_images", "resolution", "rep", "energy_j", "predicted_j"])?;
        for (r, p) in records.iter().zip(&preds) {
            let c = &r.config;
            w.write_record([
                c.algorithm.to_string(),
                c.phase.to_string(),
                c.dataset.clone(),
                c.n_images.to_string(),
                c.resolution.to_string(),
                r.rep.to_string(),
                r.energy_j.to_string(),
                p.energy_j.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<predictions>", e))?;
        return Ok(());
    }
    let algorithm: Algorithm = args.algorithm.as_deref().unwrap_or_default().parse()?;
    let phase: Phase = args.phase.as_deref().unwrap_or_default().parse()?;
    let row = EncodeRow {
        resolution: args.resolution,
        n_images: args.n_images,
        n_classes: args.n_classes,
        phase,
        color: args.color,
        channels: args.channels,
        algorithm,
        device: &args.device,
    };
    let (energy_j, encoded) = file.predict_row(&row)?;
    let variance = file.model.variance(&encode(&file.schema, &row).features.to_scalars())?;
    print_json(&serde_json::json!({
        "model": file.model.kind(),
        "energy_j": energy_j,
        "variance": variance,
        "features": encoded.features.0,
        "unseen": encoded.unseen,
    }))
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let file = PredictorFile::load(&args.model)?;
    let (records, preds) = predictions(&file, &args.input)?;
    let report = grouped_report(&records, &preds)?;
    if let Some(out) = &args.out {
        write_report_csv(&report, out)?;
    }
    let rows: Vec<_> = report
        .rows
        .iter()
        .map(|r| {
            serde_json::json!({
                "algorithm": r.algorithm,
                "phase": r.phase,
                "dataset": r.dataset,
                "n": r.n,
                "rmse": r.rmse,
                "range": r.range,
                "nrmse": r.nrmse,
                "r_squared": r.r_squared,
            })
        })
        .collect();
    print_json(&serde_json::json!({
        "model": file.model.kind(),
        "n": report.total.n,
        "r_squared": report.total.r_squared,
        "rmse": report.total.rmse,
        "range": report.total.range,
        "nrmse": report.total.nrmse,
        "groups": rows,
    }))
}

fn importance(args: ImportanceArgs) -> Result<()> {
    let file = PredictorFile::load(&args.model)?;
    let FittedModel::Forest(forest) = &file.model else {
        return Err(Error::InvalidInput(format!(
            "feature importance needs a random-forest model, got {}",
            file.model.kind()
        )));
    };
    let imp = forest.feature_importance();
    if let Some(w) = &imp.warning {
        eprintln!("warning: {w}");
    }
    for (name, w) in FEATURE_NAMES.iter().zip(&imp.weights) {
        out!("{name}\t{w:.6}");
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let records = load_records(&args.input)?;
    let ok = records.iter().filter(|r| r.status == RunStatus::Ok).count();
    out!("{} records ({} ok, {} failed)", records.len(), ok, records.len() - ok);
    if let Some(dir) = args.plot_data {
        for p in write_plot_data(&records, &dir)? {
            out!("{}", p.display());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Dataset(c) => dataset(c),
        Command::Bench(c) => bench(c),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Importance(a) => importance(a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // a reader closing the pipe early is not a failure
        Err(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

//! Command-line interface.
//!
//! Exit codes: 0 success, 1 usage, 2 data or input problems, 3 numerical failures.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::{Array2, Axis};

use crate::batch::{batch_ksir, subsample_indices, MAX_BASIS};
use crate::bench::{self, BenchConfig, Setting};
use crate::data::{self, CsvStream, NamedMatrix};
use crate::eigensolver::{EtaSchedule, PencilOrder};
use crate::error::{OksirError, Result};
use crate::evaluation::{direction_match, kernel_regression_cv, DEFAULT_BANDWIDTH_GRID, DEFAULT_FOLDS};
use crate::kernel::{KernelConfig, KernelFamily, DEFAULT_SIGMA};
use crate::model::{OksirConfig, OksirModel, DEFAULT_SEED};
use crate::persist::{self, AnyModel, BatchModel};
use crate::simgen::{CovarianceSampling, SimConfig, SimModel, SimStream};
use crate::slicing::{SliceConfig, DEFAULT_SLICES};

pub const EXIT_USAGE: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "oksir", version, about = "Streaming kernel sliced inverse regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a simulated data set as CSV (y, x1..xp, v1, v2).
    Simulate(SimulateArgs),
    /// Stream a CSV through the online estimator and save the model.
    Fit(FitArgs),
    /// Map inputs to their estimated summary statistics with a saved model.
    Transform(TransformArgs),
    /// Fit the dense offline estimator and save it.
    Batch(BatchArgs),
    /// Run replicated simulation studies.
    Benchmark(BenchmarkArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderArg {
    BetweenOverTotal,
    TotalOverBetween,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplingArg {
    Cholesky,
    Recursive,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    /// Kernel family: additive_gaussian or gaussian_rbf.
    #[arg(long, default_value = "additive_gaussian")]
    pub kernel: KernelFamily,
    /// Kernel window width.
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: f64,
}

impl KernelArgs {
    fn config(&self) -> Result<KernelConfig> {
        KernelConfig::new(self.kernel, self.sigma)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// linear_ratio or sine_product.
    #[arg(long)]
    pub model: SimModel,
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SamplingArg::Cholesky)]
    pub sampling: SamplingArg,
    #[arg(long, default_value = "-")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input CSV (`-` for standard input).
    #[arg(default_value = "-")]
    pub input: String,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// ALD threshold (default: 1% of k(x, x) of the first sample).
    #[arg(long, allow_negative_numbers = true)]
    pub nu: Option<f64>,
    /// Number of directions.
    #[arg(long = "dim", default_value_t = 2)]
    pub dim: usize,
    /// Number of slices.
    #[arg(long, default_value_t = DEFAULT_SLICES)]
    pub slices: usize,
    /// Explicit comma-separated cut-points; skips the warm-up buffer.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub cutpoints: Option<Vec<f64>>,
    /// `inverse-t` or `inverse-t-then-fixed:<t0>:<eta>`.
    #[arg(long, default_value = "inverse-t-then-fixed:100:0.01")]
    pub eta_schedule: EtaSchedule,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub center: Switch,
    #[arg(long, value_enum, default_value_t = OrderArg::BetweenOverTotal)]
    pub pencil_order: OrderArg,
    /// Skip malformed rows with a warning instead of failing.
    #[arg(long)]
    pub lenient: bool,
    /// Progress line every this many steps (0: never).
    #[arg(long, default_value_t = 1000)]
    pub log_every: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Input CSV; a leading `y` and trailing `v<k>` columns are ignored.
    #[arg(default_value = "-")]
    pub input: String,
    #[arg(long, default_value = "-")]
    pub out: String,
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    #[arg(default_value = "-")]
    pub input: String,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long = "dim", default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = DEFAULT_SLICES)]
    pub slices: usize,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub cutpoints: Option<Vec<f64>>,
    /// Ridge (default: 1e-8 · tr(Kᶜ)/n).
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Training sets larger than this are subsampled.
    #[arg(long, default_value_t = MAX_BASIS)]
    pub max_basis: usize,
    /// Seed of the subsample.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub lenient: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// table1 or table3.
    #[arg(long)]
    pub setting: Setting,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, allow_negative_numbers = true)]
    pub nu: Option<f64>,
    #[arg(long, default_value = "inverse-t-then-fixed:100:0.01")]
    pub eta_schedule: EtaSchedule,
    /// Per-replication results CSV.
    #[arg(long)]
    pub out: Option<String>,
    /// Write zero fit times so result files are reproducible.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predictions CSV (one column per estimated statistic).
    #[arg(long)]
    pub pred: String,
    /// Truth CSV: `v<k>` columns are matched against the predictions, a `y` column is
    /// regressed on them.
    #[arg(long)]
    pub truth: String,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    pub folds: usize,
    /// Seed of the fold assignment.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Transform(a) => transform(a),
        Command::Batch(a) => batch(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Evaluate(a) => evaluate(a),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = SimConfig::new(a.model, a.p, a.n, a.seed);
    cfg.sampling = match a.sampling {
        SamplingArg::Cholesky => CovarianceSampling::Cholesky,
        SamplingArg::Recursive => CovarianceSampling::Recursive,
    };
    let stream = SimStream::new(cfg)?;
    let mut w = csv::Writer::from_writer(data::create_output(&a.out)?);
    let mut header = vec!["y".to_string()];
    header.extend(data::names("x", a.p));
    header.extend(data::names("v", 2));
    w.write_record(&header).map_err(data::csv_io)?;
    for s in stream {
        let mut rec = Vec::with_capacity(a.p + 3);
        rec.push(s.y.to_string());
        rec.extend(s.x.iter().map(f64::to_string));
        rec.push(s.v1.to_string());
        rec.push(s.v2.to_string());
        w.write_record(&rec).map_err(data::csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn warn_row(e: &OksirError) {
    eprintln!("warning: skipped row: {e}");
}

fn fit(a: FitArgs) -> Result<()> {
    let mut cfg = OksirConfig::new(a.dim);
    cfg.kernel = a.kernel.config()?;
    cfg.nu = a.nu;
    cfg.num_slices = a.slices;
    cfg.cutpoints = a.cutpoints;
    cfg.eta_schedule = a.eta_schedule;
    cfg.seed = a.seed;
    cfg.center = a.center == Switch::On;
    cfg.pencil_order = match a.pencil_order {
        OrderArg::BetweenOverTotal => PencilOrder::BetweenOverTotal,
        OrderArg::TotalOverBetween => PencilOrder::TotalOverBetween,
    };
    let mut model = OksirModel::new(cfg)?;
    let mut stream = CsvStream::new(data::open_input(&a.input)?, a.lenient)?;
    if !stream.layout().has_y {
        return Err(OksirError::Data {
            line: 1,
            message: "fit needs a leading `y` column".into(),
        });
    }
    let mut log = Progress::new(a.log_every);
    let mut warn = warn_row;
    while let Some(row) = stream.next_row(&mut warn) {
        let row = row?;
        let y = row.y.expect("layout has y");
        let reports = model.partial_fit(&row.x, y).map_err(|e| match e {
            OksirError::Input(msg) => OksirError::Data { line: row.line, message: msg },
            other => other,
        })?;
        log.record(&model, reports.len());
    }
    let reports = model.flush_warmup()?;
    log.record(&model, reports.len());
    if model.dictionary().is_none() {
        return Err(OksirError::Data {
            line: 1,
            message: "input has no data rows".into(),
        });
    }
    log.finish(&model);
    if stream.skipped() > 0 {
        eprintln!("skipped {} malformed rows", stream.skipped());
    }
    persist::save(&model, &a.out)
}

/// Periodic `t=<n> dict=<m> step_ms=<x>` lines on standard error; `step_ms` averages
/// over the steps since the previous line.
struct Progress {
    every: u64,
    steps: u64,
    since: u64,
    clock: Instant,
}

impl Progress {
    fn new(every: u64) -> Self {
        Progress {
            every,
            steps: 0,
            since: 0,
            clock: Instant::now(),
        }
    }

    fn record(&mut self, model: &OksirModel, steps: usize) {
        for _ in 0..steps {
            self.steps += 1;
            self.since += 1;
            if self.every > 0 && self.steps % self.every == 0 {
                self.emit(model);
            }
        }
    }

    fn emit(&mut self, model: &OksirModel) {
        let ms = self.clock.elapsed().as_secs_f64() * 1e3 / self.since.max(1) as f64;
        eprintln!("t={} dict={} step_ms={ms:.4}", self.steps, model.dict_size());
        self.since = 0;
        self.clock = Instant::now();
    }

    fn finish(&mut self, model: &OksirModel) {
        if self.every > 0 && self.since > 0 {
            self.emit(model);
        }
    }
}

fn transform(a: TransformArgs) -> Result<()> {
    let model = AnyModel::load(&a.model)?;
    let table = data::read_table_path(&a.input, a.lenient, &mut warn_row)?;
    let out = model.transform(table.x.view())?;
    data::write_matrix(&mut *data::create_output(&a.out)?, &data::names("v", model.d()), &out)
}

fn batch(a: BatchArgs) -> Result<()> {
    let kernel = a.kernel.config()?;
    let table = data::read_table_path(&a.input, a.lenient, &mut warn_row)?;
    let y = table.y.ok_or_else(|| OksirError::Data {
        line: 1,
        message: "batch needs a leading `y` column".into(),
    })?;
    let idx = subsample_indices(table.x.nrows(), a.max_basis, a.seed);
    if idx.len() < table.x.nrows() {
        eprintln!("using a subsample of {} out of {} rows", idx.len(), table.x.nrows());
    }
    let x = table.x.select(Axis(0), &idx);
    let y = y.select(Axis(0), &idx);
    let slices = a.cutpoints.map(SliceConfig::new).transpose()?;
    let result = batch_ksir(x.view(), y.view(), a.slices, a.dim, &kernel, a.ridge, slices.as_ref())?;
    let text = persist::batch_to_json(&BatchModel { result, train_x: x })?;
    std::fs::write(&a.out, text)?;
    Ok(())
}

fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let mut cfg = BenchConfig::new(a.setting, a.reps, a.seed);
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(p) = a.p {
        cfg.p = p;
    }
    cfg.model.nu = a.nu;
    cfg.model.eta_schedule = a.eta_schedule;
    cfg.timing = !a.no_timing;
    let rows = bench::run(&cfg)?;
    if let Some(path) = &a.out {
        bench::write_csv(&mut *data::create_output(path)?, &rows)?;
    }
    if a.out.as_deref() != Some("-") {
        print!("{}", bench::format_summary(&bench::summarize(&rows)));
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let pred = data::read_numeric(data::open_input(&a.pred)?)?;
    let truth = data::read_numeric(data::open_input(&a.truth)?)?;
    let rows = evaluate_tables(&pred, &truth, a.folds, a.seed)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "metric,value")?;
    for (name, v) in rows {
        writeln!(out, "{name},{v}")?;
    }
    Ok(())
}

/// Metric rows for `evaluate`: matched correlations against `v<k>` truth columns and the
/// cross-validated regression error of a `y` column.
pub fn evaluate_tables(pred: &NamedMatrix, truth: &NamedMatrix, folds: usize, seed: u64) -> Result<Vec<(String, f64)>> {
    crate::error::check_dims("prediction rows", truth.values.nrows(), pred.values.nrows())?;
    let truth_cols: Vec<usize> = truth
        .names
        .iter()
        .enumerate()
        .filter(|(_, n)| {
            let n = n.to_ascii_lowercase();
            n.len() > 1 && n.starts_with('v') && n[1..].chars().all(|c| c.is_ascii_digit())
        })
        .map(|(i, _)| i)
        .collect();
    let y_col = truth.column_index("y");
    if truth_cols.is_empty() && y_col.is_none() {
        return Err(OksirError::input("truth file has neither `v<k>` nor `y` columns"));
    }
    let mut rows = Vec::new();
    if !truth_cols.is_empty() {
        let v: Array2<f64> = truth.values.select(Axis(1), &truth_cols);
        let cors = direction_match(pred.values.view(), v.view())?;
        for (i, c) in cors.into_iter().enumerate() {
            rows.push((format!("cor{}", i + 1), c));
        }
    }
    if let Some(j) = y_col {
        let err = kernel_regression_cv(pred.values.view(), truth.values.column(j), folds, &DEFAULT_BANDWIDTH_GRID, seed)?;
        rows.push(("cv_error".to_string(), err));
    }
    Ok(rows)
}

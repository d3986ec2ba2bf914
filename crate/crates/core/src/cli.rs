//! Command-line surface: dataset ingestion, model fitting, distances,
//! chunk classification, cross-validated evaluation, and the built-in
//! oracle suites.
//!
//! Every command emits machine-readable records, one per line, in JSON
//! (default) or CSV, and is bitwise reproducible for a fixed `--seed`.
//! Exit codes: 0 success, 1 self-test failure, 2 usage or input error,
//! 3 computation failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::classify::{
    classify_chunk, evaluate, ClassModelSet, EvalProtocol, EvalReport, Method,
};
use crate::dataset::{read_delimited, Dataset, ReadOptions};
use crate::error::{Error, Result};
use crate::gmm::{fit, CovarianceType, FitConfig};
use crate::model_io::{load_model_from_path, save_model_to_path};
use crate::selftest::{run_suite, Fault, Suite, SuiteConfig};
use crate::transport::{build_cost_matrix_with, solve_transport, CostConvention};

// ---------------------------------------------------------------------------
// Output records
// ---------------------------------------------------------------------------

/// Encoding for output records. Both are line-oriented: one record per line.
#[derive(Debug, Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// One JSON object per line; keys in emission order, `record` first.
    Json,
    /// Comma-separated rows; a header row precedes each block of records
    /// sharing a kind, with `record` as the first column.
    Csv,
}

/// A single typed field value inside a [`Record`].
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Integer(i64),
    Number(f64),
    Text(String),
    Bool(bool),
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Number(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Integer(v as i64)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Integer(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_owned())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

/// One output line: a record kind plus ordered named fields.
///
/// All values are scalars so the same record renders as a JSON object or as
/// a CSV row. Non-finite numbers are rendered as text (`"NaN"`, `"inf"`);
/// no command emits them in normal operation.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub kind: String,
    pub fields: Vec<(String, Value)>,
}

impl Record {
    pub fn new(kind: &str) -> Self {
        Record {
            kind: kind.to_owned(),
            fields: Vec::new(),
        }
    }

    /// Appends a field (builder style).
    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.fields.push((key.to_owned(), value.into()));
        self
    }

    /// Fields as a map, for order-insensitive comparison.
    pub fn field_map(&self) -> BTreeMap<&str, &Value> {
        self.fields.iter().map(|(k, v)| (k.as_str(), v)).collect()
    }

    fn to_json_line(&self) -> String {
        let mut line = String::from("{\"record\":");
        line.push_str(&json_string(&self.kind));
        for (key, value) in &self.fields {
            line.push(',');
            line.push_str(&json_string(key));
            line.push(':');
            match value {
                Value::Integer(v) => line.push_str(&v.to_string()),
                Value::Number(v) if v.is_finite() => {
                    line.push_str(
                        &serde_json::Number::from_f64(*v)
                            .expect("finite f64 converts")
                            .to_string(),
                    );
                }
                Value::Number(v) => line.push_str(&json_string(&format!("{v:?}"))),
                Value::Text(v) => line.push_str(&json_string(v)),
                Value::Bool(v) => line.push_str(if *v { "true" } else { "false" }),
            }
        }
        line.push('}');
        line
    }

    fn csv_cells(&self) -> Vec<String> {
        let mut cells = vec![self.kind.clone()];
        for (_, value) in &self.fields {
            cells.push(match value {
                Value::Integer(v) => v.to_string(),
                // Debug keeps a decimal point or exponent on every finite
                // float, so the reader can tell 1.0 from the integer 1.
                Value::Number(v) => format!("{v:?}"),
                Value::Text(v) => v.clone(),
                Value::Bool(v) => v.to_string(),
            });
        }
        cells
    }

    fn csv_header(&self) -> Vec<String> {
        let mut cells = vec!["record".to_owned()];
        cells.extend(self.fields.iter().map(|(k, _)| k.clone()));
        cells
    }
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

/// Streams records to a sink, one line each, in the chosen format.
///
/// In CSV mode a header row is written before the first record and again
/// whenever the record kind (or field set) changes.
pub struct RecordWriter<W: Write> {
    format: Format,
    sink: W,
    current_header: Option<Vec<String>>,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(format: Format, sink: W) -> Self {
        RecordWriter {
            format,
            sink,
            current_header: None,
        }
    }

    pub fn write(&mut self, record: &Record) -> Result<()> {
        match self.format {
            Format::Json => {
                writeln!(self.sink, "{}", record.to_json_line())?;
            }
            Format::Csv => {
                let header = record.csv_header();
                if self.current_header.as_ref() != Some(&header) {
                    self.write_csv_row(&header)?;
                    self.current_header = Some(header);
                }
                self.write_csv_row(&record.csv_cells())?;
            }
        }
        Ok(())
    }

    fn write_csv_row(&mut self, cells: &[String]) -> Result<()> {
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        writer.write_record(cells).map_err(csv_io_error)?;
        let line = writer.into_inner().map_err(|e| Error::InvalidArgument {
            detail: format!("csv buffer flush failed: {e}"),
        })?;
        self.sink.write_all(&line)?;
        Ok(())
    }

    pub fn finish(&mut self) -> Result<()> {
        self.sink.flush()?;
        Ok(())
    }
}

fn csv_io_error(e: csv::Error) -> Error {
    Error::InvalidArgument {
        detail: format!("csv write failed: {e}"),
    }
}

/// Parses text produced by [`RecordWriter`] back into records.
///
/// The inverse of record emission up to CSV's type erasure: a CSV cell is
/// read back as an integer if it is all digits, as a number if it parses as
/// a float with a decimal point or exponent, as a boolean if it is `true`
/// or `false`, and as text otherwise. JSON lines round-trip exactly; field
/// order within a JSON record follows the document.
pub fn parse_records(text: &str, format: Format) -> Result<Vec<Record>> {
    match format {
        Format::Json => text.lines().map(parse_json_record).collect(),
        Format::Csv => parse_csv_records(text),
    }
}

/// A JSON object as an ordered list of `(key, value)` pairs. The default
/// object representation sorts keys; records preserve emission order.
struct OrderedObject(Vec<(String, serde_json::Value)>);

impl<'de> serde::Deserialize<'de> for OrderedObject {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        struct PairVisitor;

        impl<'de> serde::de::Visitor<'de> for PairVisitor {
            type Value = OrderedObject;

            fn expecting(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str("a JSON object")
            }

            fn visit_map<A: serde::de::MapAccess<'de>>(
                self,
                mut access: A,
            ) -> std::result::Result<OrderedObject, A::Error> {
                let mut fields = Vec::new();
                while let Some(entry) = access.next_entry()? {
                    fields.push(entry);
                }
                Ok(OrderedObject(fields))
            }
        }

        deserializer.deserialize_map(PairVisitor)
    }
}

fn parse_json_record(line: &str) -> Result<Record> {
    let OrderedObject(entries) =
        serde_json::from_str(line).map_err(|e| Error::InvalidArgument {
            detail: format!("record line is not a JSON object: {e}"),
        })?;
    let mut kind = None;
    let mut fields = Vec::new();
    for (key, value) in entries {
        if key == "record" {
            match value {
                serde_json::Value::String(s) => kind = Some(s),
                other => {
                    return Err(Error::InvalidArgument {
                        detail: format!("record kind must be a string, got {other}"),
                    })
                }
            }
            continue;
        }
        let parsed = match value {
            serde_json::Value::Bool(b) => Value::Bool(b),
            serde_json::Value::String(s) => Value::Text(s),
            serde_json::Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Value::Integer(i)
                } else {
                    Value::Number(n.as_f64().ok_or_else(|| Error::InvalidArgument {
                        detail: format!("number {n} does not fit in f64"),
                    })?)
                }
            }
            other => {
                return Err(Error::InvalidArgument {
                    detail: format!("field {key:?} holds a non-scalar value: {other}"),
                })
            }
        };
        fields.push((key, parsed));
    }
    let kind = kind.ok_or_else(|| Error::InvalidArgument {
        detail: "record line has no \"record\" field".into(),
    })?;
    Ok(Record { kind, fields })
}

fn parse_csv_records(text: &str) -> Result<Vec<Record>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut header: Option<Vec<String>> = None;
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::InvalidArgument {
            detail: format!("record line is not valid CSV: {e}"),
        })?;
        let cells: Vec<&str> = row.iter().collect();
        if cells.first() == Some(&"record") {
            header = Some(cells.iter().map(|c| c.to_string()).collect());
            continue;
        }
        let header = header.as_ref().ok_or_else(|| Error::InvalidArgument {
            detail: "csv records must start with a header row".into(),
        })?;
        if cells.len() != header.len() {
            return Err(Error::InvalidArgument {
                detail: format!(
                    "csv row has {} cells but the current header names {}",
                    cells.len(),
                    header.len()
                ),
            });
        }
        let mut record = Record::new(cells[0]);
        for (key, cell) in header.iter().skip(1).zip(cells.iter().skip(1)) {
            record.fields.push((key.clone(), infer_csv_value(cell)));
        }
        records.push(record);
    }
    Ok(records)
}

fn infer_csv_value(cell: &str) -> Value {
    if cell == "true" {
        return Value::Bool(true);
    }
    if cell == "false" {
        return Value::Bool(false);
    }
    let digits = cell.strip_prefix('-').unwrap_or(cell);
    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
        if let Ok(i) = cell.parse::<i64>() {
            return Value::Integer(i);
        }
    }
    if cell.contains(['.', 'e', 'E']) {
        if let Ok(f) = cell.parse::<f64>() {
            return Value::Number(f);
        }
    }
    Value::Text(cell.to_owned())
}

// ---------------------------------------------------------------------------
// Argument grammar
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(
    name = "gmmot",
    version,
    about = "Gaussian mixture summaries of datasets, transport distances between them, \
             and chunk classification built on those distances"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a mixture to a delimited numeric table and write the model file.
    Fit(FitCmd),
    /// Compute the transport distance between two model files.
    Dist(DistCmd),
    /// Label each chunk of a table with the nearest class model.
    Classify(ClassifyCmd),
    /// Cross-validate chunk classification on a labeled table.
    Eval(EvalCmd),
    /// Run the built-in oracle suites and report per-suite verdicts.
    Selftest(SelftestCmd),
}

/// Flags shared by every command that fits mixtures.
#[derive(Debug, Args)]
struct FitFlags {
    /// Number of mixture components.
    #[arg(long, default_value_t = 1)]
    n_components: usize,

    /// Covariance structure: full or diag.
    #[arg(long, default_value = "full")]
    covariance: CovarianceType,

    /// Ridge added to covariance diagonals (default: scaled to the data).
    #[arg(long)]
    reg_eps: Option<f64>,

    /// Convergence threshold on the mean log-likelihood gain per iteration.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,

    /// Iteration cap per restart.
    #[arg(long, default_value_t = 200)]
    max_iter: usize,

    /// Independent initializations; the best final log-likelihood wins.
    #[arg(long, default_value_t = 3)]
    restarts: usize,

    /// Root random seed; every stage derives a named sub-seed from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl FitFlags {
    fn to_config(&self) -> FitConfig {
        FitConfig {
            n_components: self.n_components,
            covariance_type: self.covariance,
            reg_eps: self.reg_eps,
            tol: self.tol,
            max_iter: self.max_iter,
            n_restarts: self.restarts,
            seed: self.seed,
        }
    }
}

/// Flags shared by every command that reads a delimited table.
#[derive(Debug, Args)]
struct TableFlags {
    /// Header name of the label column.
    #[arg(long, default_value = "label")]
    label_column: String,

    /// Header name of the chunk-id column.
    #[arg(long, default_value = "chunk")]
    chunk_column: String,
}

impl TableFlags {
    fn to_options(&self) -> ReadOptions {
        ReadOptions {
            label_column: self.label_column.clone(),
            chunk_column: self.chunk_column.clone(),
        }
    }
}

/// Record encoding, shared by every command.
#[derive(Debug, Args)]
struct FormatFlag {
    /// Record encoding for standard output (and --output files).
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct FitCmd {
    /// Input table (.csv, .tsv, or .tab; header row required).
    input: PathBuf,

    /// Where to write the fitted model file.
    #[arg(long, required = true)]
    output: PathBuf,

    #[command(flatten)]
    fit: FitFlags,

    #[command(flatten)]
    table: TableFlags,

    #[command(flatten)]
    format: FormatFlag,

    /// Also emit the per-iteration log-likelihood trace.
    #[arg(long)]
    verbose: bool,
}

#[derive(Debug, Args)]
struct DistCmd {
    /// First model file.
    model_a: PathBuf,

    /// Second model file.
    model_b: PathBuf,

    /// Component-pair cost: squared (metric-consistent) or linear.
    #[arg(long, default_value = "squared")]
    cost: CostConvention,

    /// Write records here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,

    #[command(flatten)]
    format: FormatFlag,

    /// Also emit the cost matrix and the optimal plan, cell by cell.
    #[arg(long)]
    verbose: bool,
}

#[derive(Debug, Args)]
struct ClassifyCmd {
    /// Directory of class model files (one .json per label, named by label).
    models: PathBuf,

    /// Table of chunk rows; the chunk column groups rows into chunks.
    chunks: PathBuf,

    /// Component-pair cost: squared or linear.
    #[arg(long, default_value = "squared")]
    cost: CostConvention,

    /// Write records here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,

    #[command(flatten)]
    fit: FitFlags,

    #[command(flatten)]
    table: TableFlags,

    #[command(flatten)]
    format: FormatFlag,

    /// Accepted for symmetry with the other commands; adds nothing here.
    #[arg(long)]
    verbose: bool,
}

#[derive(Debug, Args)]
struct EvalCmd {
    /// Labeled table; the label column is required.
    input: PathBuf,

    /// Rows per chunk when carving each fold into chunks.
    #[arg(long, default_value_t = 100)]
    chunk_size: usize,

    /// Folds per repetition.
    #[arg(long, default_value_t = 2)]
    folds: usize,

    /// Independent repetitions of the fold split.
    #[arg(long, default_value_t = 5)]
    repetitions: usize,

    /// Methods to evaluate (comma-separated).
    #[arg(long, value_delimiter = ',', default_values_t = Method::ALL)]
    methods: Vec<Method>,

    /// Neighbor count for the nearest-neighbor baseline.
    #[arg(long, default_value_t = 5)]
    knn_neighbors: usize,

    /// Component-pair cost: squared or linear.
    #[arg(long, default_value = "squared")]
    cost: CostConvention,

    /// Sweep one protocol axis and emit a plot-ready table instead of the
    /// per-fold report: one (method, x, mean, std) record per method per
    /// sweep value.
    #[arg(long, value_enum, requires = "sweep_values")]
    sweep: Option<SweepAxis>,

    /// Values for the sweep axis (comma-separated).
    #[arg(long, value_delimiter = ',', requires = "sweep")]
    sweep_values: Vec<usize>,

    /// Write records here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,

    #[command(flatten)]
    fit: FitFlags,

    #[command(flatten)]
    table: TableFlags,

    #[command(flatten)]
    format: FormatFlag,

    /// Accepted for symmetry with the other commands; adds nothing here.
    #[arg(long)]
    verbose: bool,
}

/// Protocol axis a sweep can vary.
#[derive(Debug, Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SweepAxis {
    ChunkSize,
    NComponents,
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepAxis::ChunkSize => write!(f, "chunk_size"),
            SweepAxis::NComponents => write!(f, "n_components"),
        }
    }
}

#[derive(Debug, Args)]
struct SelftestCmd {
    /// Suites to run (comma-separated).
    #[arg(long, value_delimiter = ',', default_values_t = Suite::ALL)]
    suites: Vec<Suite>,

    /// Root random seed for instance generation.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Component-pair cost convention under test.
    #[arg(long, default_value = "squared")]
    cost: CostConvention,

    /// Negative-control hook: deliberately mis-report the transport
    /// objective so the metric suite must fail.
    #[arg(long, hide = true)]
    fault_squared_objective: bool,

    /// Write records here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,

    #[command(flatten)]
    format: FormatFlag,

    /// Accepted for symmetry with the other commands; adds nothing here.
    #[arg(long)]
    verbose: bool,
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

/// Parses `args` (including the program name) and runs the command.
///
/// Returns the process exit code: 0 success, 1 self-test failure, 2 usage
/// or input error, 3 computation failure. Errors are printed to stderr;
/// records go to stdout or `--output`.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        // A closed stdout (e.g. piping into `head`) is not a failure of the
        // command itself; exit quietly the way line-oriented tools do.
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

/// Exit code for a failed command: 3 for failures of the numerical core on
/// valid inputs, 2 for everything the caller can fix (bad flags, malformed
/// files, mismatched shapes).
pub fn exit_code_for(error: &Error) -> i32 {
    match error {
        Error::DegenerateComponent { .. }
        | Error::EmptyComponent { .. }
        | Error::NumericalStall { .. }
        | Error::InfeasibleMarginals { .. } => 3,
        _ => 2,
    }
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Fit(cmd) => with_writer(None, cmd.format.format, |w| cmd_fit(&cmd, w)),
        Command::Dist(cmd) => {
            with_writer(cmd.output.clone(), cmd.format.format, |w| cmd_dist(&cmd, w))
        }
        Command::Classify(cmd) => with_writer(cmd.output.clone(), cmd.format.format, |w| {
            cmd_classify(&cmd, w)
        }),
        Command::Eval(cmd) => {
            with_writer(cmd.output.clone(), cmd.format.format, |w| cmd_eval(&cmd, w))
        }
        Command::Selftest(cmd) => with_writer(cmd.output.clone(), cmd.format.format, |w| {
            cmd_selftest(&cmd, w)
        }),
    }
}

fn with_writer<F>(output: Option<PathBuf>, format: Format, body: F) -> Result<i32>
where
    F: FnOnce(&mut RecordWriter<Box<dyn Write>>) -> Result<i32>,
{
    let sink: Box<dyn Write> = match output {
        Some(path) => Box::new(std::fs::File::create(path)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut writer = RecordWriter::new(format, sink);
    let code = body(&mut writer)?;
    writer.finish()?;
    Ok(code)
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_fit(cmd: &FitCmd, writer: &mut RecordWriter<Box<dyn Write>>) -> Result<i32> {
    let dataset = read_delimited(&cmd.input, &cmd.table.to_options())?;
    let config = cmd.fit.to_config();
    let (model, report) = fit(dataset.data(), &config)?;
    save_model_to_path(&model, &cmd.output)?;
    if cmd.verbose {
        for (iteration, ll) in report.log_likelihood_trace.iter().enumerate() {
            writer.write(
                &Record::new("ll_trace")
                    .with("iteration", iteration)
                    .with("log_likelihood", *ll),
            )?;
        }
    }
    writer.write(
        &Record::new("fit")
            .with("input", path_text(&cmd.input))
            .with("rows", dataset.n_rows())
            .with("columns", dataset.n_features())
            .with("n_components", model.n_components())
            .with("covariance", config.covariance_type.to_string())
            .with("log_likelihood", report.final_log_likelihood())
            .with("iterations", report.iterations)
            .with("converged", report.converged)
            .with("restarts_used", report.restarts_used)
            .with("model", path_text(&cmd.output)),
    )?;
    Ok(0)
}

fn cmd_dist(cmd: &DistCmd, writer: &mut RecordWriter<Box<dyn Write>>) -> Result<i32> {
    let model_a = load_model_from_path(&cmd.model_a)?;
    let model_b = load_model_from_path(&cmd.model_b)?;
    let cost = build_cost_matrix_with(&model_a, &model_b, cmd.cost)?;
    let (plan, _) = solve_transport(model_a.weights(), model_b.weights(), &cost)?;
    let distance = match cmd.cost {
        CostConvention::Squared => plan.objective().max(0.0).sqrt(),
        CostConvention::Linear => plan.objective(),
    };
    if cmd.verbose {
        for i in 0..model_a.n_components() {
            for j in 0..model_b.n_components() {
                writer.write(
                    &Record::new("cost_cell")
                        .with("row", i)
                        .with("col", j)
                        .with("cost", cost.values()[(i, j)]),
                )?;
            }
        }
        for i in 0..model_a.n_components() {
            for j in 0..model_b.n_components() {
                writer.write(
                    &Record::new("plan_cell")
                        .with("row", i)
                        .with("col", j)
                        .with("flow", plan.flows()[(i, j)]),
                )?;
            }
        }
    }
    writer.write(
        &Record::new("distance")
            .with("model_a", path_text(&cmd.model_a))
            .with("model_b", path_text(&cmd.model_b))
            .with("components_a", model_a.n_components())
            .with("components_b", model_b.n_components())
            .with("cost", cmd.cost.to_string())
            .with("objective", plan.objective())
            .with("distance", distance),
    )?;
    Ok(0)
}

/// Loads every `.json` file in `dir` as a class model keyed by file stem.
fn load_model_directory(dir: &Path) -> Result<BTreeMap<String, crate::gmm::Gmm>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|entry| entry.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.sort();
    let mut models = BTreeMap::new();
    for path in paths {
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        models.insert(stem.to_owned(), load_model_from_path(&path)?);
    }
    if models.is_empty() {
        return Err(Error::InvalidArgument {
            detail: format!("no .json model files in {}", dir.display()),
        });
    }
    Ok(models)
}

fn cmd_classify(cmd: &ClassifyCmd, writer: &mut RecordWriter<Box<dyn Write>>) -> Result<i32> {
    let config = cmd.fit.to_config();
    let models = ClassModelSet::from_models(load_model_directory(&cmd.models)?, config.clone())?;
    let dataset = read_delimited(&cmd.chunks, &cmd.table.to_options())?;
    let chunks = dataset.into_chunks()?;
    let mut succeeded = 0usize;
    for chunk in &chunks {
        match classify_chunk(&models, chunk, &config, cmd.cost) {
            Ok(result) => {
                succeeded += 1;
                let mut record = Record::new("match")
                    .with("chunk_id", result.chunk_id)
                    .with("predicted_label", result.predicted_label)
                    .with("margin", result.runner_up_margin);
                for (label, distance) in &result.distance_row {
                    record = record.with(&format!("dist_{label}"), *distance);
                }
                writer.write(&record)?;
            }
            Err(e) => {
                writer.write(
                    &Record::new("chunk_error")
                        .with("chunk_id", chunk.id())
                        .with("message", e.to_string()),
                )?;
            }
        }
    }
    Ok(if succeeded > 0 { 0 } else { 3 })
}

fn eval_inputs(cmd: &EvalCmd) -> Result<(Dataset, Vec<String>)> {
    let dataset = read_delimited(&cmd.input, &cmd.table.to_options())?;
    let labels = match dataset.labels() {
        Some(labels) => labels.to_vec(),
        None => {
            return Err(Error::InvalidConfig {
                detail: format!(
                    "evaluation needs labels, but {} has no column named {:?}",
                    cmd.input.display(),
                    cmd.table.label_column
                ),
            })
        }
    };
    Ok((dataset, labels))
}

fn cmd_eval(cmd: &EvalCmd, writer: &mut RecordWriter<Box<dyn Write>>) -> Result<i32> {
    let (dataset, labels) = eval_inputs(cmd)?;
    let config = cmd.fit.to_config();
    let protocol = EvalProtocol {
        folds: cmd.folds,
        repetitions: cmd.repetitions,
        chunk_size: cmd.chunk_size,
        seed: cmd.fit.seed,
        knn_neighbors: cmd.knn_neighbors,
        convention: cmd.cost,
    };
    match cmd.sweep {
        None => {
            let report = evaluate(dataset.data(), &labels, &protocol, &config, &cmd.methods)?;
            write_eval_report(&report, writer)?;
        }
        Some(axis) => {
            for &x in &cmd.sweep_values {
                let (protocol, config) = match axis {
                    SweepAxis::ChunkSize => (
                        EvalProtocol {
                            chunk_size: x,
                            ..protocol.clone()
                        },
                        config.clone(),
                    ),
                    SweepAxis::NComponents => (
                        protocol.clone(),
                        FitConfig {
                            n_components: x,
                            ..config.clone()
                        },
                    ),
                };
                let report = evaluate(dataset.data(), &labels, &protocol, &config, &cmd.methods)?;
                for summary in &report.summaries {
                    writer.write(
                        &Record::new("sweep_point")
                            .with("method", summary.method.to_string())
                            .with("axis", axis.to_string())
                            .with("x", x)
                            .with("mean", summary.mean_accuracy)
                            .with("std", summary.std_accuracy),
                    )?;
                }
            }
        }
    }
    Ok(0)
}

fn write_eval_report(
    report: &EvalReport,
    writer: &mut RecordWriter<Box<dyn Write>>,
) -> Result<()> {
    for row in &report.rows {
        writer.write(
            &Record::new("eval_row")
                .with("method", row.method.to_string())
                .with("repetition", row.repetition)
                .with("fold", row.fold)
                .with("n_chunks", row.n_chunks)
                .with("accuracy", row.accuracy),
        )?;
    }
    for summary in &report.summaries {
        writer.write(
            &Record::new("method_summary")
                .with("method", summary.method.to_string())
                .with("runs", summary.runs)
                .with("mean_accuracy", summary.mean_accuracy)
                .with("std_accuracy", summary.std_accuracy),
        )?;
    }
    for failure in &report.failures {
        writer.write(
            &Record::new("chunk_failure")
                .with("chunk_id", failure.chunk_id.clone())
                .with("message", failure.message.clone()),
        )?;
    }
    Ok(())
}

fn cmd_selftest(cmd: &SelftestCmd, writer: &mut RecordWriter<Box<dyn Write>>) -> Result<i32> {
    let config = SuiteConfig {
        seed: cmd.seed,
        convention: cmd.cost,
        fault: cmd
            .fault_squared_objective
            .then_some(Fault::ReportSquaredObjective),
        ..SuiteConfig::default()
    };
    let mut failed = 0usize;
    for &suite in &cmd.suites {
        let outcome = run_suite(suite, &config)?;
        if !outcome.pass {
            failed += 1;
        }
        writer.write(
            &Record::new("suite")
                .with("suite", outcome.suite.to_string())
                .with("pass", outcome.pass)
                .with("cases", outcome.cases)
                .with("failures", outcome.failures)
                .with("worst", outcome.worst)
                .with("detail", outcome.detail),
        )?;
    }
    writer.write(
        &Record::new("selftest_summary")
            .with("suites_run", cmd.suites.len())
            .with("suites_failed", failed)
            .with("pass", failed == 0),
    )?;
    Ok(if failed == 0 { 0 } else { 1 })
}

fn path_text(path: &Path) -> String {
    path.display().to_string()
}

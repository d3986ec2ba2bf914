//! Process-level tests of the command-line binary: exit codes, record
//! output in both formats, round-tripping, and bitwise reproducibility.

use std::path::{Path, PathBuf};
use std::process::Output;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gmmot::cli::{parse_records, Format, Record, Value};
use gmmot::{load_model_from_path, save_model_to_path, Gaussian, Gmm};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_gmmot")
}

fn run(args: &[&str]) -> Output {
    std::process::Command::new(binary())
        .args(args)
        .output()
        .expect("binary launches")
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("stdout is utf-8")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).expect("stderr is utf-8")
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("process exits normally")
}

fn records_of(output: &Output) -> Vec<Record> {
    parse_records(&stdout_of(output), Format::Json).expect("stdout parses as records")
}

fn number(record: &Record, key: &str) -> f64 {
    match record.field_map().get(key) {
        Some(Value::Number(v)) => *v,
        Some(Value::Integer(v)) => *v as f64,
        other => panic!("field {key} is {other:?}, not numeric"),
    }
}

fn text<'a>(record: &'a Record, key: &str) -> &'a str {
    match record.field_map().get(key) {
        Some(Value::Text(v)) => v.as_str(),
        other => panic!("field {key} is {other:?}, not text"),
    }
}

/// Two far-apart 2-D blobs, 60 rows each, with label and chunk columns.
fn write_blob_table(path: &Path, with_roles: bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut lines = vec![if with_roles {
        "x,y,label,chunk".to_owned()
    } else {
        "x,y".to_owned()
    }];
    for (label, center) in [("a", -5.0), ("b", 5.0)] {
        for row in 0..60 {
            let x = center + rng.random::<f64>() - 0.5;
            let y = center + rng.random::<f64>() - 0.5;
            if with_roles {
                lines.push(format!("{x},{y},{label},{label}{}", row / 20));
            } else {
                lines.push(format!("{x},{y}"));
            }
        }
    }
    std::fs::write(path, lines.join("\n") + "\n").expect("table written");
}

fn isotropic_model(dim: usize, center: f64) -> Gmm {
    let mean = DVector::from_element(dim, center);
    let cov = DMatrix::identity(dim, dim);
    Gmm::new(
        vec![1.0],
        vec![Gaussian::new(mean, cov).expect("identity covariance is valid")],
    )
    .expect("single unit weight")
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().expect("temp dir created");
        let root = dir.path().to_owned();
        Workspace { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

#[test]
fn fit_recovers_the_two_blobs() {
    let ws = Workspace::new();
    write_blob_table(&ws.path("blobs.csv"), true);
    let output = run(&[
        "fit",
        &ws.arg("blobs.csv"),
        "--output",
        &ws.arg("model.json"),
        "--n-components",
        "2",
        "--seed",
        "5",
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr_of(&output));
    let records = records_of(&output);
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].kind, "fit");
    assert_eq!(number(&records[0], "rows"), 120.0);
    assert_eq!(number(&records[0], "n_components"), 2.0);

    let model = load_model_from_path(&ws.path("model.json")).expect("model file parses");
    let mut centers: Vec<f64> = model.components().iter().map(|g| g.mean()[0]).collect();
    centers.sort_by(f64::total_cmp);
    // Blob centers sit at -5 and 5 with U(-0.5, 0.5) noise; component means
    // must land within that noise scale of the true centers.
    assert!((centers[0] + 5.0).abs() < 0.5, "low center {}", centers[0]);
    assert!((centers[1] - 5.0).abs() < 0.5, "high center {}", centers[1]);
}

#[test]
fn fit_on_an_empty_file_names_the_file() {
    let ws = Workspace::new();
    std::fs::write(ws.path("empty.csv"), "").expect("file written");
    let output = run(&["fit", &ws.arg("empty.csv"), "--output", &ws.arg("m.json")]);
    assert_eq!(exit_code(&output), 2);
    assert!(
        stderr_of(&output).contains("empty.csv"),
        "stderr must name the file: {}",
        stderr_of(&output)
    );
}

#[test]
fn fit_rejects_zero_components() {
    let ws = Workspace::new();
    write_blob_table(&ws.path("blobs.csv"), true);
    let output = run(&[
        "fit",
        &ws.arg("blobs.csv"),
        "--output",
        &ws.arg("m.json"),
        "--n-components",
        "0",
    ]);
    assert_eq!(exit_code(&output), 2);
    assert!(stderr_of(&output).contains("n_components"));
}

#[test]
fn fit_reports_a_parse_error_with_file_and_line() {
    let ws = Workspace::new();
    std::fs::write(ws.path("bad.csv"), "x,y\n1.0,2.0\n1.0,oops\n").expect("file written");
    let output = run(&["fit", &ws.arg("bad.csv"), "--output", &ws.arg("m.json")]);
    assert_eq!(exit_code(&output), 2);
    let stderr = stderr_of(&output);
    assert!(stderr.contains("bad.csv:3"), "stderr: {stderr}");
}

// ---------------------------------------------------------------------------
// dist
// ---------------------------------------------------------------------------

#[test]
fn dist_of_a_model_with_itself_is_zero() {
    let ws = Workspace::new();
    write_blob_table(&ws.path("blobs.csv"), true);
    let fit = run(&[
        "fit",
        &ws.arg("blobs.csv"),
        "--output",
        &ws.arg("model.json"),
        "--n-components",
        "2",
    ]);
    assert_eq!(exit_code(&fit), 0);
    let output = run(&["dist", &ws.arg("model.json"), &ws.arg("model.json")]);
    assert_eq!(exit_code(&output), 0);
    let records = records_of(&output);
    assert_eq!(records.len(), 1);
    assert_eq!(number(&records[0], "distance"), 0.0);
    assert_eq!(number(&records[0], "objective"), 0.0);
}

#[test]
fn dist_one_versus_two_components_gives_three() {
    let ws = Workspace::new();
    let one = isotropic_model(1, 0.0);
    let two = Gmm::new(
        vec![0.5, 0.5],
        vec![
            Gaussian::new(DVector::from_element(1, 3.0), DMatrix::identity(1, 1)).unwrap(),
            Gaussian::new(DVector::from_element(1, 3.0), DMatrix::identity(1, 1)).unwrap(),
        ],
    )
    .unwrap();
    save_model_to_path(&one, &ws.path("one.json")).unwrap();
    save_model_to_path(&two, &ws.path("two.json")).unwrap();

    let output = run(&["dist", &ws.arg("one.json"), &ws.arg("two.json")]);
    assert_eq!(exit_code(&output), 0);
    let records = records_of(&output);
    // Both component pairs cost exactly 9 under the squared convention, so
    // the objective is 9 and the distance its square root.
    assert!((number(&records[0], "distance") - 3.0).abs() < 1e-12);

    let linear = run(&[
        "dist",
        &ws.arg("one.json"),
        &ws.arg("two.json"),
        "--cost",
        "linear",
    ]);
    let linear_records = records_of(&linear);
    assert!((number(&linear_records[0], "distance") - 3.0).abs() < 1e-12);
    assert_eq!(text(&linear_records[0], "cost"), "linear");
}

#[test]
fn dist_rejects_mismatched_dimensions() {
    let ws = Workspace::new();
    save_model_to_path(&isotropic_model(1, 0.0), &ws.path("one.json")).unwrap();
    save_model_to_path(&isotropic_model(2, 0.0), &ws.path("two.json")).unwrap();
    let output = run(&["dist", &ws.arg("one.json"), &ws.arg("two.json")]);
    assert_eq!(exit_code(&output), 2);
    assert!(stderr_of(&output).contains("dimension mismatch"));
}

#[test]
fn dist_rejects_a_malformed_model_file() {
    let ws = Workspace::new();
    std::fs::write(ws.path("junk.json"), "{ not a model }").unwrap();
    save_model_to_path(&isotropic_model(1, 0.0), &ws.path("one.json")).unwrap();
    let output = run(&["dist", &ws.arg("junk.json"), &ws.arg("one.json")]);
    assert_eq!(exit_code(&output), 2);
}

#[test]
fn dist_verbose_emits_the_full_plan_and_cost_matrix() {
    let ws = Workspace::new();
    save_model_to_path(&isotropic_model(1, 0.0), &ws.path("a.json")).unwrap();
    let two = Gmm::new(
        vec![0.25, 0.75],
        vec![
            Gaussian::new(DVector::from_element(1, 1.0), DMatrix::identity(1, 1)).unwrap(),
            Gaussian::new(DVector::from_element(1, 4.0), DMatrix::identity(1, 1)).unwrap(),
        ],
    )
    .unwrap();
    save_model_to_path(&two, &ws.path("b.json")).unwrap();
    let output = run(&["dist", &ws.arg("a.json"), &ws.arg("b.json"), "--verbose"]);
    assert_eq!(exit_code(&output), 0);
    let records = records_of(&output);
    let costs: Vec<&Record> = records.iter().filter(|r| r.kind == "cost_cell").collect();
    let flows: Vec<&Record> = records.iter().filter(|r| r.kind == "plan_cell").collect();
    assert_eq!(costs.len(), 2);
    assert_eq!(flows.len(), 2);
    assert_eq!(number(costs[0], "cost"), 1.0);
    assert_eq!(number(costs[1], "cost"), 16.0);
    assert_eq!(number(flows[0], "flow"), 0.25);
    assert_eq!(number(flows[1], "flow"), 0.75);
    let total = records.iter().find(|r| r.kind == "distance").unwrap();
    assert!((number(total, "objective") - (0.25 + 12.0)).abs() < 1e-12);
}

// ---------------------------------------------------------------------------
// classify
// ---------------------------------------------------------------------------

/// Writes `low.json` and `high.json` class models into `dir`.
fn write_class_models(ws: &Workspace, dir: &str) {
    let models = ws.path(dir);
    std::fs::create_dir(&models).expect("models dir created");
    save_model_to_path(&isotropic_model(2, -5.0), &models.join("low.json")).unwrap();
    save_model_to_path(&isotropic_model(2, 5.0), &models.join("high.json")).unwrap();
}

#[test]
fn classify_assigns_chunks_to_the_generating_class() {
    let ws = Workspace::new();
    write_class_models(&ws, "models");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut lines = vec!["x,y,chunk".to_owned()];
    for chunk in 0..4 {
        for _ in 0..25 {
            let x = 5.0 + rng.random::<f64>() - 0.5;
            let y = 5.0 + rng.random::<f64>() - 0.5;
            lines.push(format!("{x},{y},u{chunk}"));
        }
    }
    std::fs::write(ws.path("chunks.csv"), lines.join("\n") + "\n").unwrap();

    let output = run(&["classify", &ws.arg("models"), &ws.arg("chunks.csv")]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr_of(&output));
    let records = records_of(&output);
    assert_eq!(records.len(), 4);
    for record in &records {
        assert_eq!(record.kind, "match");
        assert_eq!(text(record, "predicted_label"), "high");
        assert!(number(record, "margin") > 0.0);
        assert!(number(record, "dist_high") < number(record, "dist_low"));
    }
    // Chunk ids come out sorted.
    let ids: Vec<&str> = records.iter().map(|r| text(r, "chunk_id")).collect();
    assert_eq!(ids, ["u0", "u1", "u2", "u3"]);
}

#[test]
fn classify_handles_a_single_row_chunk() {
    let ws = Workspace::new();
    write_class_models(&ws, "models");
    std::fs::write(ws.path("chunk.csv"), "x,y,chunk\n-4.9,-5.1,only\n").unwrap();
    let output = run(&[
        "classify",
        &ws.arg("models"),
        &ws.arg("chunk.csv"),
        "--n-components",
        "1",
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr_of(&output));
    let records = records_of(&output);
    assert_eq!(records.len(), 1);
    assert_eq!(text(&records[0], "predicted_label"), "low");
}

#[test]
fn classify_rejects_an_unknown_chunk_column() {
    let ws = Workspace::new();
    write_class_models(&ws, "models");
    std::fs::write(ws.path("chunk.csv"), "x,y\n1.0,2.0\n").unwrap();
    let output = run(&[
        "classify",
        &ws.arg("models"),
        &ws.arg("chunk.csv"),
        "--chunk-column",
        "nope",
    ]);
    assert_eq!(exit_code(&output), 2);
    assert!(
        stderr_of(&output).contains("chunk column"),
        "stderr: {}",
        stderr_of(&output)
    );
}

#[test]
fn classify_exits_three_when_every_chunk_fails() {
    let ws = Workspace::new();
    write_class_models(&ws, "models");
    // Rows alternate between (1000, 1000) and (-1000, -1000): the chunk
    // covariance comes out exactly [[1e6, 1e6], [1e6, 1e6]] in floats, and
    // a ridge of 1e-12 is below one ulp at that scale, so adding it changes
    // nothing. The factorization meets an exactly-zero pivot and the chunk
    // fit fails deterministically.
    let mut lines = vec!["x,y,chunk".to_owned()];
    for row in 0..16 {
        let sign = if row % 2 == 0 { 1.0 } else { -1.0 };
        lines.push(format!("{},{},flat", sign * 1000.0, sign * 1000.0));
    }
    std::fs::write(ws.path("chunks.csv"), lines.join("\n") + "\n").unwrap();

    let output = run(&[
        "classify",
        &ws.arg("models"),
        &ws.arg("chunks.csv"),
        "--reg-eps",
        "1e-12",
    ]);
    assert_eq!(exit_code(&output), 3, "stderr: {}", stderr_of(&output));
    let records = records_of(&output);
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].kind, "chunk_error");
    assert_eq!(text(&records[0], "chunk_id"), "flat");
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[test]
fn eval_emits_ten_rows_per_method_and_summaries() {
    let ws = Workspace::new();
    write_blob_table(&ws.path("blobs.csv"), true);
    let output = run(&[
        "eval",
        &ws.arg("blobs.csv"),
        "--chunk-size",
        "10",
        "--repetitions",
        "5",
        "--folds",
        "2",
        "--seed",
        "9",
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr_of(&output));
    let records = records_of(&output);
    let rows: Vec<&Record> = records.iter().filter(|r| r.kind == "eval_row").collect();
    let summaries: Vec<&Record> = records
        .iter()
        .filter(|r| r.kind == "method_summary")
        .collect();
    assert_eq!(rows.len(), 30, "3 methods x 5 repetitions x 2 folds");
    assert_eq!(summaries.len(), 3);
    for method in ["gmm_wasserstein", "gmm_l2_baseline", "knn_baseline"] {
        assert_eq!(
            rows.iter().filter(|r| text(r, "method") == method).count(),
            10,
            "10 rows for {method}"
        );
    }
    // The blobs are separated by 10 sigma; every method must be perfect.
    for summary in &summaries {
        assert_eq!(number(summary, "mean_accuracy"), 1.0);
    }
}

#[test]
fn eval_with_one_method_reports_only_that_method() {
    let ws = Workspace::new();
    write_blob_table(&ws.path("blobs.csv"), true);
    let output = run(&[
        "eval",
        &ws.arg("blobs.csv"),
        "--chunk-size",
        "10",
        "--methods",
        "gmm_wasserstein",
    ]);
    assert_eq!(exit_code(&output), 0);
    let records = records_of(&output);
    assert!(records
        .iter()
        .filter(|r| r.kind == "eval_row" || r.kind == "method_summary")
        .all(|r| text(r, "method") == "gmm_wasserstein"));
    assert_eq!(
        records.iter().filter(|r| r.kind == "eval_row").count(),
        10
    );
}

#[test]
fn eval_requires_a_label_column() {
    let ws = Workspace::new();
    write_blob_table(&ws.path("plain.csv"), false);
    let output = run(&["eval", &ws.arg("plain.csv")]);
    assert_eq!(exit_code(&output), 2);
    assert!(stderr_of(&output).contains("label"));
}

#[test]
fn eval_sweep_emits_the_long_format_plot_table() {
    let ws = Workspace::new();
    write_blob_table(&ws.path("blobs.csv"), true);
    let output = run(&[
        "eval",
        &ws.arg("blobs.csv"),
        "--repetitions",
        "2",
        "--methods",
        "gmm_wasserstein,gmm_l2_baseline",
        "--sweep",
        "chunk-size",
        "--sweep-values",
        "10,15,20",
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr_of(&output));
    let records = records_of(&output);
    assert_eq!(records.len(), 6, "2 methods x 3 sweep values");
    for record in &records {
        assert_eq!(record.kind, "sweep_point");
        assert_eq!(text(record, "axis"), "chunk_size");
        assert!(record.field_map().contains_key("mean"));
        assert!(record.field_map().contains_key("std"));
    }
    let xs: Vec<f64> = records
        .iter()
        .filter(|r| text(r, "method") == "gmm_wasserstein")
        .map(|r| number(r, "x"))
        .collect();
    assert_eq!(xs, [10.0, 15.0, 20.0]);

    let sweep_flag_alone = run(&["eval", &ws.arg("blobs.csv"), "--sweep", "chunk-size"]);
    assert_eq!(exit_code(&sweep_flag_alone), 2, "sweep needs values");
}

#[test]
fn eval_writes_the_report_to_the_output_file() {
    let ws = Workspace::new();
    write_blob_table(&ws.path("blobs.csv"), true);
    let output = run(&[
        "eval",
        &ws.arg("blobs.csv"),
        "--chunk-size",
        "10",
        "--repetitions",
        "1",
        "--methods",
        "knn_baseline",
        "--output",
        &ws.arg("report.json"),
    ]);
    assert_eq!(exit_code(&output), 0);
    assert!(stdout_of(&output).is_empty());
    let written = std::fs::read_to_string(ws.path("report.json")).unwrap();
    let records = parse_records(&written, Format::Json).unwrap();
    assert_eq!(records.iter().filter(|r| r.kind == "eval_row").count(), 2);
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

#[test]
fn selftest_passes_by_default() {
    let output = run(&["selftest"]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr_of(&output));
    let records = records_of(&output);
    let suites: Vec<&Record> = records.iter().filter(|r| r.kind == "suite").collect();
    assert_eq!(suites.len(), 4);
    assert!(suites
        .iter()
        .all(|r| r.field_map()["pass"] == &Value::Bool(true)));
    let summary = records.iter().find(|r| r.kind == "selftest_summary").unwrap();
    assert_eq!(summary.field_map()["pass"], &Value::Bool(true));
}

#[test]
fn selftest_suites_flag_selects_a_single_suite() {
    let output = run(&["selftest", "--suites", "duality"]);
    assert_eq!(exit_code(&output), 0);
    let records = records_of(&output);
    let suites: Vec<&Record> = records.iter().filter(|r| r.kind == "suite").collect();
    assert_eq!(suites.len(), 1);
    assert_eq!(text(suites[0], "suite"), "duality");
}

#[test]
fn selftest_rejects_an_unknown_suite() {
    let output = run(&["selftest", "--suites", "nope"]);
    assert_eq!(exit_code(&output), 2);
}

#[test]
fn injected_fault_fails_the_metric_suite() {
    let output = run(&[
        "selftest",
        "--suites",
        "metric",
        "--seed",
        "3",
        "--fault-squared-objective",
    ]);
    assert_eq!(exit_code(&output), 1);
    let records = records_of(&output);
    let suite = records.iter().find(|r| r.kind == "suite").unwrap();
    assert_eq!(suite.field_map()["pass"], &Value::Bool(false));
    assert!(number(suite, "failures") > 0.0);
}

// ---------------------------------------------------------------------------
// cross-cutting: reproducibility, round-trips, help
// ---------------------------------------------------------------------------

#[test]
fn same_seed_gives_byte_identical_output() {
    let ws = Workspace::new();
    write_blob_table(&ws.path("blobs.csv"), true);
    let args = [
        "eval",
        &ws.arg("blobs.csv"),
        "--chunk-size",
        "10",
        "--repetitions",
        "3",
        "--seed",
        "42",
    ];
    let first = run(&args);
    let second = run(&args);
    assert_eq!(exit_code(&first), 0);
    assert_eq!(first.stdout, second.stdout);

    let selftest_first = run(&["selftest", "--suites", "transport,metric", "--seed", "7"]);
    let selftest_second = run(&["selftest", "--suites", "transport,metric", "--seed", "7"]);
    assert_eq!(selftest_first.stdout, selftest_second.stdout);
}

#[test]
fn outputs_round_trip_in_both_formats() {
    let ws = Workspace::new();
    write_blob_table(&ws.path("blobs.csv"), true);
    for format in ["json", "csv"] {
        let output = run(&[
            "eval",
            &ws.arg("blobs.csv"),
            "--chunk-size",
            "10",
            "--repetitions",
            "2",
            "--format",
            format,
        ]);
        assert_eq!(exit_code(&output), 0);
        let text = stdout_of(&output);
        let parsed = parse_records(
            &text,
            if format == "json" { Format::Json } else { Format::Csv },
        )
        .expect("output parses");
        assert_eq!(
            parsed.iter().filter(|r| r.kind == "eval_row").count(),
            12,
            "3 methods x 2 repetitions x 2 folds"
        );
        // Every record carries the same fields its block header promised,
        // and numeric fields survive the round trip as numbers.
        for record in parsed.iter().filter(|r| r.kind == "eval_row") {
            assert!(matches!(
                record.field_map()["accuracy"],
                Value::Number(_) | Value::Integer(_)
            ));
        }
    }
}

#[test]
fn csv_format_prefixes_blocks_with_headers() {
    let output = run(&["selftest", "--suites", "metric", "--format", "csv"]);
    assert_eq!(exit_code(&output), 0);
    let text = stdout_of(&output);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "record,suite,pass,cases,failures,worst,detail"
    );
    assert!(lines.next().unwrap().starts_with("suite,metric,true,"));
    assert_eq!(
        lines.next().unwrap(),
        "record,suites_run,suites_failed,pass"
    );
    assert_eq!(lines.next().unwrap(), "selftest_summary,1,0,true");
}

#[test]
fn help_and_version_succeed() {
    let help = run(&["--help"]);
    assert_eq!(exit_code(&help), 0);
    for subcommand in ["fit", "dist", "classify", "eval", "selftest"] {
        assert!(
            stdout_of(&help).contains(subcommand),
            "help lists {subcommand}"
        );
    }
    let version = run(&["--version"]);
    assert_eq!(exit_code(&version), 0);
    let none = run(&[]);
    assert_eq!(exit_code(&none), 2);
}

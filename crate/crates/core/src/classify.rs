//! Chunk classification: label a block of rows by the nearest fitted class
//! mixture, plus the cross-validation harness and the two reference
//! baselines used to benchmark it.
//!
//! Training rows are split by label and one mixture is fitted per class. A
//! test chunk — a group of rows known to share one (unknown) label — gets
//! its own small mixture, and the predicted label is the class whose model
//! is closest in the mixture-level Wasserstein distance. Ties at the argmin
//! go to the lexicographically smallest label so results never depend on
//! iteration order.
//!
//! The baselines are deliberately simple stand-ins, not tuned competitors:
//! `gmm_l2_baseline` compares only the mixtures' barycenter means (blind to
//! shape by construction), and `knn_baseline` pools majority votes of each
//! chunk row's nearest training rows.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{fit, FitConfig, Gmm};
use crate::seeds::sub_seed;
use crate::transport::{gmm_wasserstein_with, CostConvention};

/// A block of rows that share one label (possibly unknown).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledChunk {
    id: String,
    label: Option<String>,
    data: DMatrix<f64>,
}

impl LabeledChunk {
    /// Validates that the chunk is nonempty with finite entries.
    pub fn new(id: String, label: Option<String>, data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::EmptySamples {
                context: format!("chunk {id:?}"),
            });
        }
        for row in 0..data.nrows() {
            for col in 0..data.ncols() {
                let value = data[(row, col)];
                if !value.is_finite() {
                    return Err(Error::NonFiniteData { row, col, value });
                }
            }
        }
        Ok(Self { id, label, data })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }
}

/// One fitted mixture per class label, all sharing a dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassModelSet {
    models: BTreeMap<String, Gmm>,
    config: FitConfig,
}

impl ClassModelSet {
    /// Wraps pre-fitted models (e.g. loaded from files). The map must be
    /// nonempty and dimensionally consistent.
    pub fn from_models(models: BTreeMap<String, Gmm>, config: FitConfig) -> Result<Self> {
        let mut dims = models.values().map(Gmm::dim);
        let Some(first) = dims.next() else {
            return Err(Error::EmptyTrainingSet);
        };
        if let Some(other) = dims.find(|&d| d != first) {
            return Err(Error::DimensionMismatch {
                context: "class model dimensions",
                left: first,
                right: other,
            });
        }
        Ok(Self { models, config })
    }

    pub fn models(&self) -> &BTreeMap<String, Gmm> {
        &self.models
    }

    pub fn config(&self) -> &FitConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.models.values().next().map_or(0, Gmm::dim)
    }
}

/// The outcome of classifying one chunk: the winning label, the full row of
/// distances, and how far behind the runner-up was.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub chunk_id: String,
    pub predicted_label: String,
    pub distance_row: BTreeMap<String, f64>,
    pub runner_up_margin: f64,
}

/// Fits one mixture per distinct label, each on that label's rows only,
/// using `config` unchanged — so a single-label input produces exactly the
/// model a plain fit on the full data would.
pub fn fit_class_models(
    data: &DMatrix<f64>,
    labels: &[String],
    config: &FitConfig,
) -> Result<ClassModelSet> {
    if labels.len() != data.nrows() {
        return Err(Error::DimensionMismatch {
            context: "rows vs labels",
            left: data.nrows(),
            right: labels.len(),
        });
    }
    if data.nrows() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (row, label) in labels.iter().enumerate() {
        by_label.entry(label).or_default().push(row);
    }
    let mut models = BTreeMap::new();
    for (label, rows) in by_label {
        if rows.len() < config.n_components {
            return Err(Error::LabelTooSmall {
                label: label.to_string(),
                rows: rows.len(),
                needed: config.n_components,
            });
        }
        let subset = data.select_rows(rows.iter());
        let (model, _) = fit(&subset, config)?;
        models.insert(label.to_string(), model);
    }
    ClassModelSet::from_models(models, config.clone())
}

/// Component count for a chunk-level mixture: small chunks cannot support
/// the full class-model size, so cap at one component per 8 rows, floor 1.
pub fn chunk_component_count(requested: usize, chunk_rows: usize) -> usize {
    requested.min(chunk_rows / 8).max(1)
}

/// Labels one chunk: fits a mixture to the chunk (component count capped by
/// [`chunk_component_count`], same seed and remaining config), computes the
/// distance to every class model, and returns the argmin with the full
/// distance row. Ties break to the lexicographically smallest label.
pub fn classify_chunk(
    models: &ClassModelSet,
    chunk: &LabeledChunk,
    config: &FitConfig,
    convention: CostConvention,
) -> Result<MatchResult> {
    if chunk.data.ncols() != models.dim() {
        return Err(Error::DimensionMismatch {
            context: "chunk dimension vs class models",
            left: chunk.data.ncols(),
            right: models.dim(),
        });
    }
    let chunk_config = FitConfig {
        n_components: chunk_component_count(config.n_components, chunk.data.nrows()),
        ..config.clone()
    };
    let (chunk_model, _) = fit(&chunk.data, &chunk_config)?;
    let mut distance_row = BTreeMap::new();
    for (label, model) in &models.models {
        let (distance, _) = gmm_wasserstein_with(model, &chunk_model, convention)?;
        distance_row.insert(label.clone(), distance);
    }
    let (predicted_label, runner_up_margin) = argmin_row(&distance_row);
    Ok(MatchResult {
        chunk_id: chunk.id.clone(),
        predicted_label,
        distance_row,
        runner_up_margin,
    })
}

/// Winning label (smallest distance, ties to the lexicographically first
/// label) and the margin to the runner-up (0 with a single candidate).
fn argmin_row(distance_row: &BTreeMap<String, f64>) -> (String, f64) {
    let mut best: Option<(&String, f64)> = None;
    let mut runner_up = f64::INFINITY;
    for (label, &distance) in distance_row {
        match best {
            None => best = Some((label, distance)),
            Some((_, best_distance)) if distance < best_distance => {
                runner_up = best_distance;
                best = Some((label, distance));
            }
            Some(_) => runner_up = runner_up.min(distance),
        }
    }
    let (label, best_distance) = best.expect("distance row is never empty");
    let margin = if runner_up.is_finite() {
        (runner_up - best_distance).max(0.0)
    } else {
        0.0
    };
    (label.clone(), margin)
}

/// Euclidean distance between the two mixtures' barycenter means. Blind to
/// covariances and to any structure beyond the overall mean — two mixtures
/// with equal barycenters but different spreads sit at distance zero.
pub fn gmm_l2_baseline(p: &Gmm, q: &Gmm) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            context: "mixture dimensions",
            left: p.dim(),
            right: q.dim(),
        });
    }
    Ok((p.barycenter_mean() - q.barycenter_mean()).norm())
}

/// Nearest-neighbor baseline: each chunk row votes with its `k_neighbors`
/// nearest training rows (Euclidean), and the chunk label is the majority
/// over all pooled votes. Neighbor ties break by training-row order, label
/// ties by lexicographic order.
pub fn knn_baseline(
    train: &DMatrix<f64>,
    train_labels: &[String],
    chunk: &DMatrix<f64>,
    k_neighbors: usize,
) -> Result<String> {
    if train.nrows() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if train_labels.len() != train.nrows() {
        return Err(Error::DimensionMismatch {
            context: "training rows vs labels",
            left: train.nrows(),
            right: train_labels.len(),
        });
    }
    if k_neighbors == 0 {
        return Err(Error::InvalidConfig {
            detail: "k_neighbors must be at least 1".into(),
        });
    }
    if chunk.ncols() != train.ncols() {
        return Err(Error::DimensionMismatch {
            context: "chunk dimension vs training rows",
            left: chunk.ncols(),
            right: train.ncols(),
        });
    }
    let k = k_neighbors.min(train.nrows());
    let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
    let mut distances: Vec<(f64, usize)> = Vec::with_capacity(train.nrows());
    for chunk_row in 0..chunk.nrows() {
        distances.clear();
        for train_row in 0..train.nrows() {
            let mut squared = 0.0;
            for col in 0..train.ncols() {
                let delta = chunk[(chunk_row, col)] - train[(train_row, col)];
                squared += delta * delta;
            }
            distances.push((squared, train_row));
        }
        distances
            .sort_unstable_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.cmp(&y.1)));
        for &(_, train_row) in distances.iter().take(k) {
            *votes.entry(&train_labels[train_row]).or_insert(0) += 1;
        }
    }
    let (winner, _) = votes
        .iter()
        .max_by(|x, y| x.1.cmp(y.1).then_with(|| y.0.cmp(x.0)))
        .expect("at least one vote was cast");
    Ok(winner.to_string())
}

/// A distance-based classification method evaluated by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GmmWasserstein,
    GmmL2Baseline,
    KnnBaseline,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::GmmWasserstein, Method::GmmL2Baseline, Method::KnnBaseline];
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Method::GmmWasserstein => "gmm_wasserstein",
            Method::GmmL2Baseline => "gmm_l2_baseline",
            Method::KnnBaseline => "knn_baseline",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gmm_wasserstein" => Ok(Method::GmmWasserstein),
            "gmm_l2_baseline" => Ok(Method::GmmL2Baseline),
            "knn_baseline" => Ok(Method::KnnBaseline),
            other => Err(Error::InvalidConfig {
                detail: format!(
                    "unknown method {other:?} (expected gmm_wasserstein, gmm_l2_baseline, or knn_baseline)"
                ),
            }),
        }
    }
}

/// Cross-validation protocol: `repetitions` independent stratified
/// `folds`-fold splits, test halves cut into same-label chunks of
/// `chunk_size` rows (a nonempty remainder keeps its own, smaller chunk).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalProtocol {
    pub folds: usize,
    pub repetitions: usize,
    pub chunk_size: usize,
    pub seed: u64,
    pub knn_neighbors: usize,
    pub convention: CostConvention,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            folds: 2,
            repetitions: 5,
            chunk_size: 100,
            seed: 0,
            knn_neighbors: 5,
            convention: CostConvention::Squared,
        }
    }
}

/// Accuracy of one method on one (repetition, fold) test half. `n_chunks`
/// counts the chunks the method actually classified; chunks whose model fit
/// failed are excluded (and reported in the failure list). `accuracy` is 0
/// when no chunk succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: Method,
    pub repetition: usize,
    pub fold: usize,
    pub n_chunks: usize,
    pub accuracy: f64,
}

/// Mean ± sample standard deviation of a method's accuracy across all
/// (repetition, fold) runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

/// A chunk that could not be classified, with the error that stopped it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkFailure {
    pub chunk_id: String,
    pub message: String,
}

/// Full evaluation output: one row per method × repetition × fold, one
/// summary per method, and every per-chunk failure encountered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub summaries: Vec<MethodSummary>,
    pub failures: Vec<ChunkFailure>,
}

/// Runs the repeated stratified cross-validation. Every method sees the
/// same splits, the same class models, and the same chunk models, so the
/// comparison isolates the distance function. Per-chunk fit failures are
/// recorded and skipped; structural problems (a label smaller than the fold
/// count, inconsistent inputs) abort with an error.
pub fn evaluate(
    data: &DMatrix<f64>,
    labels: &[String],
    protocol: &EvalProtocol,
    config: &FitConfig,
    methods: &[Method],
) -> Result<EvalReport> {
    if labels.len() != data.nrows() {
        return Err(Error::DimensionMismatch {
            context: "rows vs labels",
            left: data.nrows(),
            right: labels.len(),
        });
    }
    if data.nrows() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if protocol.folds < 2 {
        return Err(Error::InvalidConfig {
            detail: format!("folds must be at least 2, got {}", protocol.folds),
        });
    }
    if protocol.repetitions == 0 {
        return Err(Error::InvalidConfig {
            detail: "repetitions must be at least 1".into(),
        });
    }
    if protocol.chunk_size < config.n_components {
        return Err(Error::InvalidConfig {
            detail: format!(
                "chunk_size {} is smaller than n_components {}",
                protocol.chunk_size, config.n_components
            ),
        });
    }
    if methods.is_empty() {
        return Err(Error::InvalidConfig {
            detail: "at least one method is required".into(),
        });
    }
    let mut selected: Vec<Method> = Vec::new();
    for &method in methods {
        if !selected.contains(&method) {
            selected.push(method);
        }
    }

    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (row, label) in labels.iter().enumerate() {
        by_label.entry(label).or_default().push(row);
    }
    for (label, rows) in &by_label {
        if rows.len() < protocol.folds {
            return Err(Error::LabelTooSmall {
                label: label.to_string(),
                rows: rows.len(),
                needed: protocol.folds,
            });
        }
    }

    let needs_chunk_models = selected
        .iter()
        .any(|m| matches!(m, Method::GmmWasserstein | Method::GmmL2Baseline));
    let mut rows_out: Vec<EvalRow> = Vec::new();
    let mut failures: Vec<ChunkFailure> = Vec::new();

    for repetition in 0..protocol.repetitions {
        // One shuffle per repetition; fold membership is dealt per label so
        // every class appears in every fold.
        let mut rng =
            ChaCha8Rng::seed_from_u64(sub_seed(protocol.seed, "folds", repetition as u64));
        let mut fold_assignment: BTreeMap<&str, Vec<Vec<usize>>> = BTreeMap::new();
        for (label, rows) in &by_label {
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut rng);
            let parts = (0..protocol.folds)
                .map(|f| {
                    let start = f * shuffled.len() / protocol.folds;
                    let end = (f + 1) * shuffled.len() / protocol.folds;
                    let mut part = shuffled[start..end].to_vec();
                    part.sort_unstable();
                    part
                })
                .collect();
            fold_assignment.insert(label, parts);
        }

        for fold in 0..protocol.folds {
            let mut train_indices: Vec<usize> = Vec::new();
            for parts in fold_assignment.values() {
                for (f, part) in parts.iter().enumerate() {
                    if f != fold {
                        train_indices.extend_from_slice(part);
                    }
                }
            }
            train_indices.sort_unstable();
            let train = data.select_rows(train_indices.iter());
            let train_labels: Vec<String> =
                train_indices.iter().map(|&i| labels[i].clone()).collect();
            let class_models = if needs_chunk_models {
                Some(fit_class_models(&train, &train_labels, config)?)
            } else {
                None
            };

            let mut chunks: Vec<LabeledChunk> = Vec::new();
            for (label, parts) in &fold_assignment {
                for (index, chunk_rows) in parts[fold].chunks(protocol.chunk_size).enumerate() {
                    let chunk_data = data.select_rows(chunk_rows.iter());
                    chunks.push(LabeledChunk::new(
                        format!("rep{repetition}-fold{fold}-{label}-{index}"),
                        Some(label.to_string()),
                        chunk_data,
                    )?);
                }
            }

            // Chunk models are fitted once and shared by both mixture-based
            // methods; `None` marks a failed fit (already reported).
            let chunk_models: Vec<Option<Gmm>> = if class_models.is_some() {
                chunks
                    .iter()
                    .map(|chunk| {
                        let chunk_config = FitConfig {
                            n_components: chunk_component_count(
                                config.n_components,
                                chunk.data.nrows(),
                            ),
                            ..config.clone()
                        };
                        match fit(&chunk.data, &chunk_config) {
                            Ok((model, _)) => Some(model),
                            Err(err) => {
                                failures.push(ChunkFailure {
                                    chunk_id: chunk.id.clone(),
                                    message: err.to_string(),
                                });
                                None
                            }
                        }
                    })
                    .collect()
            } else {
                vec![None; chunks.len()]
            };

            for &method in &selected {
                let mut attempted = 0;
                let mut correct = 0;
                for (chunk, chunk_model) in chunks.iter().zip(&chunk_models) {
                    let truth = chunk.label().expect("evaluation chunks carry labels");
                    let predicted = match method {
                        Method::GmmWasserstein | Method::GmmL2Baseline => {
                            let Some(chunk_model) = chunk_model else {
                                continue;
                            };
                            let models = class_models
                                .as_ref()
                                .expect("class models exist for mixture methods");
                            let mut distance_row = BTreeMap::new();
                            for (label, model) in models.models() {
                                let distance = match method {
                                    Method::GmmWasserstein => {
                                        gmm_wasserstein_with(
                                            model,
                                            chunk_model,
                                            protocol.convention,
                                        )?
                                        .0
                                    }
                                    _ => gmm_l2_baseline(model, chunk_model)?,
                                };
                                distance_row.insert(label.clone(), distance);
                            }
                            argmin_row(&distance_row).0
                        }
                        Method::KnnBaseline => knn_baseline(
                            &train,
                            &train_labels,
                            chunk.data(),
                            protocol.knn_neighbors,
                        )?,
                    };
                    attempted += 1;
                    if predicted == truth {
                        correct += 1;
                    }
                }
                let accuracy = if attempted > 0 {
                    correct as f64 / attempted as f64
                } else {
                    0.0
                };
                rows_out.push(EvalRow {
                    method,
                    repetition,
                    fold,
                    n_chunks: attempted,
                    accuracy,
                });
            }
        }
    }

    rows_out.sort_by(|x, y| {
        x.method
            .to_string()
            .cmp(&y.method.to_string())
            .then(x.repetition.cmp(&y.repetition))
            .then(x.fold.cmp(&y.fold))
    });
    let mut summaries = Vec::new();
    for &method in &selected {
        let values: Vec<f64> = rows_out
            .iter()
            .filter(|row| row.method == method)
            .map(|row| row.accuracy)
            .collect();
        summaries.push(MethodSummary {
            method,
            runs: values.len(),
            mean_accuracy: mean(&values),
            std_accuracy: sample_std(&values),
        });
    }
    summaries.sort_by_key(|s| s.method.to_string());
    Ok(EvalReport {
        rows: rows_out,
        summaries,
        failures,
    })
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

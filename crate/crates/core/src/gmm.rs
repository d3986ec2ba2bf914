//! Gaussian mixture models and EM fitting.
//!
//! A mixture is a weighted sum of Gaussians; fitting alternates between
//! responsibility computation (posterior over components per observation,
//! done in log space) and the closed-form weighted-moment update. Each
//! M-step adds `reg_eps` to every covariance diagonal so small or degenerate
//! inputs never produce singular components. Component counts can be chosen
//! by a BIC sweep.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::Gaussian;
use crate::seeds::sub_seed;

const LN_2PI: f64 = 1.8378770664093453; // ln(2π)

/// Covariance structure fitted per component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceType {
    /// Unconstrained symmetric PSD covariance.
    Full,
    /// Off-diagonal entries forced to zero.
    Diagonal,
}

impl std::fmt::Display for CovarianceType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CovarianceType::Full => write!(f, "full"),
            CovarianceType::Diagonal => write!(f, "diagonal"),
        }
    }
}

impl std::str::FromStr for CovarianceType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(CovarianceType::Full),
            "diag" | "diagonal" => Ok(CovarianceType::Diagonal),
            other => Err(Error::InvalidConfig {
                detail: format!("unknown covariance type {other:?} (expected full or diag)"),
            }),
        }
    }
}

/// A Gaussian mixture: weights on the probability simplex plus one Gaussian
/// per component, all sharing the same dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Gmm {
    weights: Vec<f64>,
    components: Vec<Gaussian>,
    covariance_type: CovarianceType,
}

impl Gmm {
    /// Builds a mixture with full covariances. See
    /// [`Gmm::with_covariance_type`] for the validation rules.
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        Self::with_covariance_type(weights, components, CovarianceType::Full)
    }

    /// Builds a mixture, validating that weights and components line up, all
    /// components share one dimension, every weight lies in [0,1], and the
    /// weights sum to 1 within 1e-12.
    ///
    /// The covariance type is carried as metadata (it records how the model
    /// was fitted and survives serialization); it does not re-constrain the
    /// given covariances.
    pub fn with_covariance_type(
        weights: Vec<f64>,
        components: Vec<Gaussian>,
        covariance_type: CovarianceType,
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidMixture {
                detail: "a mixture needs at least one component".into(),
            });
        }
        if weights.len() != components.len() {
            return Err(Error::InvalidMixture {
                detail: format!(
                    "{} weights for {} components",
                    weights.len(),
                    components.len()
                ),
            });
        }
        let dim = components[0].dim();
        for (index, component) in components.iter().enumerate() {
            if component.dim() != dim {
                return Err(Error::InvalidMixture {
                    detail: format!(
                        "component {index} has dimension {} but component 0 has {dim}",
                        component.dim()
                    ),
                });
            }
        }
        let mut total = 0.0;
        for (index, weight) in weights.iter().enumerate() {
            if !weight.is_finite() || *weight < 0.0 || *weight > 1.0 {
                return Err(Error::InvalidMixture {
                    detail: format!("weight {index} is {weight}, outside [0, 1]"),
                });
            }
            total += weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMixture {
                detail: format!("weights sum to {total}, not 1"),
            });
        }
        Ok(Self {
            weights,
            components,
            covariance_type,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }

    pub fn covariance_type(&self) -> CovarianceType {
        self.covariance_type
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    /// Mixture mean `Σ w_i · mu_i`.
    pub fn barycenter_mean(&self) -> DVector<f64> {
        let mut mean = DVector::zeros(self.dim());
        for (weight, component) in self.weights.iter().zip(&self.components) {
            mean += component.mean() * *weight;
        }
        mean
    }

    /// Draws `count` i.i.d. rows: a component index from the weights, then a
    /// normal draw from that component. Deterministic given the seed.
    pub fn sample(&self, count: usize, seed: u64) -> Result<DMatrix<f64>> {
        if count == 0 {
            return Err(Error::InvalidArgument {
                detail: "sample count must be at least 1".into(),
            });
        }
        let d = self.dim();
        // Eigendecomposition-based root so singular (clamped) covariances
        // still sample correctly where Cholesky would fail.
        let roots: Vec<DMatrix<f64>> = self
            .components
            .iter()
            .map(|g| crate::gaussian::spd_sqrt(g.cov()).map(|r| r.sqrt))
            .collect::<Result<_>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = DMatrix::zeros(count, d);
        for row in 0..count {
            let u: f64 = rng.random();
            let comp = pick_weighted(&self.weights, u);
            let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let x = self.components[comp].mean() + &roots[comp] * z;
            out.set_row(row, &x.transpose());
        }
        Ok(out)
    }
}

/// Index of the weight bin containing `u ∈ [0, 1)` under the cumulative sum.
fn pick_weighted(weights: &[f64], u: f64) -> usize {
    let mut cumulative = 0.0;
    for (index, weight) in weights.iter().enumerate() {
        cumulative += weight;
        if u < cumulative {
            return index;
        }
    }
    weights.len() - 1
}

/// Posterior component probabilities, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    values: DMatrix<f64>,
}

impl Responsibilities {
    /// Validates entries in [0,1] and row sums within 1e-10 of 1.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        for row in 0..values.nrows() {
            let mut sum = 0.0;
            for col in 0..values.ncols() {
                let v = values[(row, col)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidArgument {
                        detail: format!("responsibility ({row},{col}) = {v}, outside [0, 1]"),
                    });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidArgument {
                    detail: format!("responsibility row {row} sums to {sum}"),
                });
            }
        }
        Ok(Self { values })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_observations(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_components(&self) -> usize {
        self.values.ncols()
    }
}

/// What happened during a fit: the log-likelihood after initialization and
/// after every EM iteration (of the winning restart), whether the stop
/// condition was reached, and how many restarts ran.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub restarts_used: usize,
}

impl FitReport {
    /// Log-likelihood of the returned model.
    pub fn final_log_likelihood(&self) -> f64 {
        *self
            .log_likelihood_trace
            .last()
            .expect("trace always holds the initialization entry")
    }
}

/// Fit settings. `reg_eps = None` resolves to `1e-6 ×` the mean per-column
/// variance of the data being fitted (floored at 1e-12 for constant data).
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub n_components: usize,
    pub covariance_type: CovarianceType,
    pub reg_eps: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub n_restarts: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_components: 1,
            covariance_type: CovarianceType::Full,
            reg_eps: None,
            tol: 1e-6,
            max_iter: 200,
            n_restarts: 3,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn with_components(n_components: usize) -> Self {
        Self {
            n_components,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_components == 0 {
            return Err(Error::InvalidConfig {
                detail: "n_components must be at least 1".into(),
            });
        }
        if let Some(eps) = self.reg_eps {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::InvalidConfig {
                    detail: format!("reg_eps must be a positive real, got {eps}"),
                });
            }
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidConfig {
                detail: format!("tol must be a positive real, got {}", self.tol),
            });
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig {
                detail: "max_iter must be at least 1".into(),
            });
        }
        if self.n_restarts == 0 {
            return Err(Error::InvalidConfig {
                detail: "n_restarts must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// Regularization actually applied to `data`: the explicit value if set,
    /// otherwise 1e-6 × mean per-column variance.
    pub fn resolve_reg_eps(&self, data: &DMatrix<f64>) -> f64 {
        if let Some(eps) = self.reg_eps {
            return eps;
        }
        let (_, cov) = sample_moments(data);
        let mean_variance = cov.trace() / cov.nrows() as f64;
        (1e-6 * mean_variance).max(1e-12)
    }
}

/// One row of the model-selection table produced by
/// [`select_n_components`].
#[derive(Debug, Clone, PartialEq)]
pub struct BicRow {
    pub n_components: usize,
    pub params: usize,
    pub log_likelihood: f64,
    pub bic: f64,
}

/// Per-component quantities for density evaluation: Cholesky factor of the
/// covariance and the log normalization constant.
struct ComponentDensity {
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl ComponentDensity {
    fn new(index: usize, component: &Gaussian) -> Result<Self> {
        let chol = Cholesky::new(component.cov().clone())
            .ok_or(Error::DegenerateComponent { component: index })?;
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
        let d = component.dim() as f64;
        Ok(Self {
            mean: component.mean().clone_owned(),
            chol,
            log_norm: -0.5 * (d * LN_2PI + log_det),
        })
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        let diff = x - &self.mean;
        let solved = self.chol.solve(&diff);
        self.log_norm - 0.5 * diff.dot(&solved)
    }
}

fn validate_data(data: &DMatrix<f64>) -> Result<()> {
    if data.nrows() == 0 || data.ncols() == 0 {
        return Err(Error::InvalidArgument {
            detail: "data must have at least one row and one column".into(),
        });
    }
    for col in 0..data.ncols() {
        for row in 0..data.nrows() {
            let value = data[(row, col)];
            if !value.is_finite() {
                return Err(Error::NonFiniteData { row, col, value });
            }
        }
    }
    Ok(())
}

fn check_model_data(model: &Gmm, data: &DMatrix<f64>) -> Result<()> {
    validate_data(data)?;
    if model.dim() != data.ncols() {
        return Err(Error::DimensionMismatch {
            context: "model dimension vs data columns",
            left: model.dim(),
            right: data.ncols(),
        });
    }
    Ok(())
}

/// `log(w_i) + log N(x_j | component i)` for every observation j and
/// component i; one row per observation.
fn log_weighted_densities(model: &Gmm, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let densities: Vec<ComponentDensity> = model
        .components()
        .iter()
        .enumerate()
        .map(|(i, g)| ComponentDensity::new(i, g))
        .collect::<Result<_>>()?;
    let log_weights: Vec<f64> = model.weights().iter().map(|w| w.ln()).collect();
    let mut out = DMatrix::zeros(data.nrows(), model.n_components());
    let mut x = DVector::zeros(data.ncols());
    for row in 0..data.nrows() {
        for (col, value) in x.iter_mut().enumerate() {
            *value = data[(row, col)];
        }
        for (comp, density) in densities.iter().enumerate() {
            out[(row, comp)] = log_weights[comp] + density.log_density(&x);
        }
    }
    Ok(out)
}

/// Max-shifted log-sum-exp over one matrix row.
fn row_log_sum_exp(m: &DMatrix<f64>, row: usize) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for col in 0..m.ncols() {
        max = max.max(m[(row, col)]);
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    for col in 0..m.ncols() {
        sum += (m[(row, col)] - max).exp();
    }
    max + sum.ln()
}

/// Data log-likelihood `Σ_j log Σ_i w_i N(x_j | mu_i, S_i)`, each inner sum
/// computed with a max-shifted log-sum-exp.
pub fn log_likelihood(model: &Gmm, data: &DMatrix<f64>) -> Result<f64> {
    check_model_data(model, data)?;
    let logs = log_weighted_densities(model, data)?;
    let mut total = 0.0;
    for row in 0..logs.nrows() {
        total += row_log_sum_exp(&logs, row);
    }
    Ok(total)
}

/// Posterior over components for every observation, computed in log space
/// and exponentiated after normalization.
pub fn e_step(model: &Gmm, data: &DMatrix<f64>) -> Result<Responsibilities> {
    check_model_data(model, data)?;
    let mut logs = log_weighted_densities(model, data)?;
    for row in 0..logs.nrows() {
        let lse = row_log_sum_exp(&logs, row);
        for col in 0..logs.ncols() {
            logs[(row, col)] = (logs[(row, col)] - lse).exp();
        }
    }
    Ok(Responsibilities { values: logs })
}

/// Closed-form maximizer of the expected complete-data log-likelihood:
/// weights from responsibility mass, means and covariances from weighted
/// moments, plus `reg_eps` on every covariance diagonal (off-diagonals are
/// zeroed first for diagonal fits).
pub fn m_step(resp: &Responsibilities, data: &DMatrix<f64>, config: &FitConfig) -> Result<Gmm> {
    validate_data(data)?;
    config.validate()?;
    if resp.n_observations() != data.nrows() {
        return Err(Error::DimensionMismatch {
            context: "responsibility rows vs data rows",
            left: resp.n_observations(),
            right: data.nrows(),
        });
    }
    if resp.n_components() != config.n_components {
        return Err(Error::DimensionMismatch {
            context: "responsibility columns vs configured components",
            left: resp.n_components(),
            right: config.n_components,
        });
    }
    let k = data.nrows();
    let d = data.ncols();
    let n = config.n_components;
    let reg = config.resolve_reg_eps(data);
    let gamma = resp.matrix();

    let mut totals = vec![0.0_f64; n];
    for comp in 0..n {
        for row in 0..k {
            totals[comp] += gamma[(row, comp)];
        }
        if totals[comp] < 1e-300 {
            return Err(Error::EmptyComponent {
                component: comp,
                total: totals[comp],
            });
        }
    }
    let weight_norm: f64 = totals.iter().sum();

    let mut weights = Vec::with_capacity(n);
    let mut components = Vec::with_capacity(n);
    for comp in 0..n {
        weights.push(totals[comp] / weight_norm);

        let mut mean = DVector::zeros(d);
        for row in 0..k {
            let g = gamma[(row, comp)];
            for col in 0..d {
                mean[col] += g * data[(row, col)];
            }
        }
        mean /= totals[comp];

        let mut scatter = DMatrix::zeros(d, d);
        let mut diff = DVector::zeros(d);
        for row in 0..k {
            let g = gamma[(row, comp)];
            for col in 0..d {
                diff[col] = data[(row, col)] - mean[col];
            }
            scatter.syger(g, &diff, &diff, 1.0);
        }
        scatter /= totals[comp];
        // syger touched only the lower triangle; mirror it.
        scatter.fill_upper_triangle_with_lower_triangle();

        if config.covariance_type == CovarianceType::Diagonal {
            let diag = DVector::from_iterator(d, scatter.diagonal().iter().copied());
            scatter = DMatrix::from_diagonal(&diag);
        }
        for i in 0..d {
            scatter[(i, i)] += reg;
        }
        components.push(Gaussian::new(mean, scatter)?);
    }
    Gmm::with_covariance_type(weights, components, config.covariance_type)
}

/// Sample mean and population covariance (divisor k) of the rows.
fn sample_moments(data: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let k = data.nrows();
    let d = data.ncols();
    let mut mean = DVector::zeros(d);
    for row in 0..k {
        for col in 0..d {
            mean[col] += data[(row, col)];
        }
    }
    mean /= k as f64;
    let mut cov = DMatrix::zeros(d, d);
    let mut diff = DVector::zeros(d);
    for row in 0..k {
        for col in 0..d {
            diff[col] = data[(row, col)] - mean[col];
        }
        cov.syger(1.0, &diff, &diff, 1.0);
    }
    cov /= k as f64;
    cov.fill_upper_triangle_with_lower_triangle();
    (mean, cov)
}

/// k-means++-style seeding: first mean uniform over rows, later means drawn
/// with probability proportional to squared distance from the chosen set.
fn seed_means(data: &DMatrix<f64>, n: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let k = data.nrows();
    let row_vec = |index: usize| data.row(index).transpose();
    let mut chosen = vec![rng.random_range(0..k)];
    let mut dist2: Vec<f64> = (0..k)
        .map(|j| (row_vec(j) - row_vec(chosen[0])).norm_squared())
        .collect();
    while chosen.len() < n {
        let total: f64 = dist2.iter().sum();
        let next = if total > 0.0 && total.is_finite() {
            let mut u: f64 = rng.random::<f64>() * total;
            let mut picked = k - 1;
            for (j, d2) in dist2.iter().enumerate() {
                u -= d2;
                if u <= 0.0 {
                    picked = j;
                    break;
                }
            }
            picked
        } else {
            // All remaining rows coincide with a chosen mean (duplicates or
            // n > distinct points); cycle through rows deterministically.
            chosen[chosen.len() - 1] % k
        };
        chosen.push(next);
        for (j, d2) in dist2.iter_mut().enumerate() {
            *d2 = d2.min((row_vec(j) - row_vec(next)).norm_squared());
        }
    }
    chosen.into_iter().map(row_vec).collect()
}

fn initial_model(
    data: &DMatrix<f64>,
    config: &FitConfig,
    global_cov: &DMatrix<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Gmm> {
    let n = config.n_components;
    let means = seed_means(data, n, rng);
    let weights = vec![1.0 / n as f64; n];
    let components = means
        .into_iter()
        .map(|mean| Gaussian::new(mean, global_cov.clone()))
        .collect::<Result<Vec<_>>>()?;
    Gmm::with_covariance_type(weights, components, config.covariance_type)
}

/// Replaces a dead component: mean at the datum with lowest mixture density,
/// covariance reset to the global covariance, weight reset to 1/n (all
/// weights renormalized).
fn reseed_component(
    model: &Gmm,
    data: &DMatrix<f64>,
    component: usize,
    global_cov: &DMatrix<f64>,
) -> Result<Gmm> {
    let logs = log_weighted_densities(model, data)?;
    let mut worst_row = 0;
    let mut worst_value = f64::INFINITY;
    for row in 0..logs.nrows() {
        let value = row_log_sum_exp(&logs, row);
        if value < worst_value {
            worst_value = value;
            worst_row = row;
        }
    }
    let n = model.n_components();
    let mut weights = model.weights().to_vec();
    let mut components = model.components().to_vec();
    weights[component] = 1.0 / n as f64;
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    components[component] = Gaussian::new(data.row(worst_row).transpose(), global_cov.clone())?;
    Gmm::with_covariance_type(weights, components, model.covariance_type())
}

/// One EM iteration with dead-component recovery: if the M-step reports an
/// empty component, that component is re-seeded and the iteration retried.
fn em_iterate(
    model: &Gmm,
    data: &DMatrix<f64>,
    config: &FitConfig,
    global_cov: &DMatrix<f64>,
) -> Result<Gmm> {
    let mut current = model.clone();
    let mut reseeds = 0;
    loop {
        let resp = e_step(&current, data)?;
        match m_step(&resp, data, config) {
            Ok(next) => return Ok(next),
            Err(Error::EmptyComponent { component, .. }) if reseeds < config.n_components => {
                current = reseed_component(&current, data, component, global_cov)?;
                reseeds += 1;
            }
            Err(err) => return Err(err),
        }
    }
}

/// Fits a mixture by EM from `n_restarts` seeded initializations and keeps
/// the restart with the highest final log-likelihood (ties go to the earlier
/// restart). The trace in the report starts with the initialization
/// log-likelihood, then one entry per iteration.
pub fn fit(data: &DMatrix<f64>, config: &FitConfig) -> Result<(Gmm, FitReport)> {
    config.validate()?;
    validate_data(data)?;
    if data.nrows() < config.n_components {
        return Err(Error::TooFewObservations {
            observations: data.nrows(),
            components: config.n_components,
        });
    }
    let reg = config.resolve_reg_eps(data);
    let (_, mut global_cov) = sample_moments(data);
    // Seed covariances must live in the fitted family: a diagonal fit whose
    // initial components carried the full sample covariance would start the
    // trace outside the family, and the first M-step's projection into it
    // could lower the likelihood. Ascent is only guaranteed within one family.
    if config.covariance_type == CovarianceType::Diagonal {
        let diag = DVector::from_iterator(
            global_cov.nrows(),
            global_cov.diagonal().iter().copied(),
        );
        global_cov = DMatrix::from_diagonal(&diag);
    }
    for i in 0..global_cov.nrows() {
        global_cov[(i, i)] += reg;
    }

    let mut best: Option<(Gmm, FitReport)> = None;
    for restart in 0..config.n_restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, "init", restart as u64));
        let mut model = initial_model(data, config, &global_cov, &mut rng)?;
        let mut trace = vec![log_likelihood(&model, data)?];
        let mut converged = false;
        for _ in 0..config.max_iter {
            model = em_iterate(&model, data, config, &global_cov)?;
            let ll = log_likelihood(&model, data)?;
            let previous = *trace.last().expect("trace is nonempty");
            trace.push(ll);
            if (ll - previous).abs() / (1.0 + ll.abs()) < config.tol {
                converged = true;
                break;
            }
        }
        let report = FitReport {
            iterations: trace.len() - 1,
            converged,
            restarts_used: config.n_restarts,
            log_likelihood_trace: trace,
        };
        let better = match &best {
            None => true,
            Some((_, incumbent)) => {
                report.final_log_likelihood() > incumbent.final_log_likelihood()
            }
        };
        if better {
            best = Some((model, report));
        }
    }
    Ok(best.expect("n_restarts >= 1 guarantees at least one candidate"))
}

/// Fits every candidate component count and returns the model minimizing
/// `BIC = −2·LL + params·ln(k)`, together with the chosen count and the full
/// score table (one row per candidate, in the given order). Ties prefer the
/// smaller count.
pub fn select_n_components(
    data: &DMatrix<f64>,
    candidates: &[usize],
    config: &FitConfig,
) -> Result<(Gmm, usize, Vec<BicRow>)> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument {
            detail: "candidate list must be nonempty".into(),
        });
    }
    let k = data.nrows() as f64;
    let d = data.ncols();
    let mut table = Vec::with_capacity(candidates.len());
    let mut best: Option<(Gmm, usize, f64)> = None;
    for &n in candidates {
        let candidate_config = FitConfig {
            n_components: n,
            ..config.clone()
        };
        let (model, report) = fit(data, &candidate_config)?;
        let ll = report.final_log_likelihood();
        let cov_params = match config.covariance_type {
            CovarianceType::Full => n * d * (d + 1) / 2,
            CovarianceType::Diagonal => n * d,
        };
        let params = (n - 1) + n * d + cov_params;
        let bic = -2.0 * ll + params as f64 * k.ln();
        table.push(BicRow {
            n_components: n,
            params,
            log_likelihood: ll,
            bic,
        });
        let better = match &best {
            None => true,
            Some((_, best_n, best_bic)) => {
                bic < *best_bic || (bic == *best_bic && n < *best_n)
            }
        };
        if better {
            best = Some((model, n, bic));
        }
    }
    let (model, chosen, _) = best.expect("candidates is nonempty");
    Ok((model, chosen, table))
}

//! Oracle suites: independent checks the library runs against itself.
//!
//! Each suite verifies one mathematical contract through a route that shares
//! as little code as possible with the implementation under test:
//!
//! - `transport`: the simplex objective against brute-force enumeration of
//!   every basic solution (spanning-tree bases solved by leaf peeling).
//! - `duality`: dual feasibility, complementary slackness, and the
//!   primal−dual gap on the same instances, plus the all-zero dual as a
//!   known-feasible point (costs are nonnegative).
//! - `metric`: symmetry, identity, and the triangle inequality of the
//!   mixture distance under the squared-cost convention.
//! - `sampling`: the closed-form Gaussian distance against the empirical
//!   distance of large sorted samples.
//!
//! The `Fault` hook deliberately mis-reports the squared objective as the
//! distance (squared costs without the final square root); the metric suite
//! must catch it, which keeps the suite itself honest.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gaussian::{symmetrize, Gaussian};
use crate::gmm::Gmm;
use crate::seeds::sub_seed;
use crate::transport::{
    build_cost_matrix, gmm_wasserstein_with, solve_transport, verify_duality, CostConvention,
    CostMatrix, DualSolution,
};
use crate::wasserstein1d::{
    bootstrap_se, empirical_wn, gaussian_w2_squared_1d, EmpiricalDistribution,
};

/// One oracle suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Transport,
    Duality,
    Metric,
    Sampling,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Transport, Suite::Duality, Suite::Metric, Suite::Sampling];
}

impl std::fmt::Display for Suite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Suite::Transport => "transport",
            Suite::Duality => "duality",
            Suite::Metric => "metric",
            Suite::Sampling => "sampling",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transport" => Ok(Suite::Transport),
            "duality" => Ok(Suite::Duality),
            "metric" => Ok(Suite::Metric),
            "sampling" => Ok(Suite::Sampling),
            other => Err(Error::InvalidConfig {
                detail: format!(
                    "unknown suite {other:?} (expected transport, duality, metric, or sampling)"
                ),
            }),
        }
    }
}

/// Test-only defect injection, wired through the CLI behind a hidden flag.
/// `ReportSquaredObjective` keeps squared costs but skips the final square
/// root, which silently breaks the triangle inequality — the metric suite
/// must fail under it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    ReportSquaredObjective,
}

/// Instance counts and tolerance context for the suites. Defaults are the
/// reduced counts used by the CLI; the acceptance harness turns them up.
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub seed: u64,
    pub transport_instances: usize,
    pub transport_max_size: usize,
    pub metric_triples: usize,
    pub sampling_pairs: usize,
    pub sampling_count: usize,
    pub bootstrap_resamples: usize,
    pub convention: CostConvention,
    pub fault: Option<Fault>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            transport_instances: 60,
            transport_max_size: 4,
            metric_triples: 30,
            sampling_pairs: 10,
            sampling_count: 20_000,
            bootstrap_resamples: 32,
            convention: CostConvention::Squared,
            fault: None,
        }
    }
}

/// Result of one suite run. `samples` collects the raw numeric outputs in a
/// fixed order so two runs with the same seed can be compared bit for bit.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub suite: Suite,
    pub pass: bool,
    pub cases: usize,
    pub failures: usize,
    pub worst: f64,
    pub detail: String,
    pub samples: Vec<f64>,
}

/// Runs the given suites in order.
pub fn run_selftest(suites: &[Suite], config: &SuiteConfig) -> Result<Vec<SuiteOutcome>> {
    suites.iter().map(|&suite| run_suite(suite, config)).collect()
}

/// Runs a single suite.
pub fn run_suite(suite: Suite, config: &SuiteConfig) -> Result<SuiteOutcome> {
    match suite {
        Suite::Transport => run_transport_suite(config),
        Suite::Duality => run_duality_suite(config),
        Suite::Metric => run_metric_suite(config),
        Suite::Sampling => run_sampling_suite(config),
    }
}

/// Weights strictly inside the probability simplex (normalized exponentials).
pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut weights: Vec<f64> = (0..n)
        .map(|_| -(rng.random::<f64>().max(1e-12).ln()))
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    weights
}

/// A random transportation instance: simplex weights on both sides, costs
/// uniform in [0, 10).
pub fn random_transport_instance(
    rng: &mut ChaCha8Rng,
    max_n: usize,
    max_m: usize,
) -> (Vec<f64>, Vec<f64>, CostMatrix) {
    let n = 1 + rng.random_range(0..max_n);
    let m = 1 + rng.random_range(0..max_m);
    let a = random_simplex(rng, n);
    let b = random_simplex(rng, m);
    let cost = CostMatrix::from_matrix(DMatrix::from_fn(n, m, |_, _| rng.random::<f64>() * 10.0))
        .expect("uniform [0, 10) costs are finite and nonnegative");
    (a, b, cost)
}

/// A random mixture: simplex weights, means uniform in [−spread, spread]^d,
/// covariances A·Aᵀ + I/4 for Gaussian A (eigenvalues bounded away from 0).
pub fn random_gmm(rng: &mut ChaCha8Rng, dim: usize, n_components: usize, spread: f64) -> Gmm {
    let weights = random_simplex(rng, n_components);
    let components = (0..n_components)
        .map(|_| {
            let mean =
                DVector::from_fn(dim, |_, _| spread * (2.0 * rng.random::<f64>() - 1.0));
            let factor = DMatrix::from_fn(dim, dim, |_, _| {
                0.7 * rng.sample::<f64, _>(StandardNormal)
            });
            let cov = symmetrize(&(&factor * factor.transpose() + DMatrix::identity(dim, dim) * 0.25));
            Gaussian::new(mean, cov).expect("constructed covariance is symmetric positive definite")
        })
        .collect();
    Gmm::new(weights, components).expect("normalized weights and matching dimensions")
}

/// Exhaustive transportation oracle: enumerates every choice of n+m−1 cells,
/// solves the unique flow on each spanning tree by leaf peeling, and returns
/// the best feasible objective. `None` only if no basis is feasible, which a
/// balanced instance never produces. Exponential — keep n·m small.
pub fn brute_force_transport(a: &[f64], b: &[f64], cost: &CostMatrix) -> Option<f64> {
    let n = a.len();
    let m = b.len();
    let total = n * m;
    let basis_size = n + m - 1;
    let cells: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .collect();
    let mut chosen: Vec<usize> = (0..basis_size).collect();
    let mut best: Option<f64> = None;
    loop {
        let subset: Vec<(usize, usize)> = chosen.iter().map(|&c| cells[c]).collect();
        if let Some(objective) = solve_tree_basis(a, b, cost, &subset) {
            best = Some(match best {
                Some(current) => current.min(objective),
                None => objective,
            });
        }
        if !next_combination(&mut chosen, total) {
            break;
        }
    }
    best
}

/// Solves the flow forced by a candidate basis via leaf peeling. Returns the
/// objective if the cells form a spanning tree carrying a feasible flow
/// (nonnegative to 1e-12, marginal residuals within 1e-9), `None` otherwise.
fn solve_tree_basis(
    a: &[f64],
    b: &[f64],
    cost: &CostMatrix,
    subset: &[(usize, usize)],
) -> Option<f64> {
    let n = a.len();
    let m = b.len();
    // Nodes 0..n are rows, n..n+m columns; every edge drains both endpoints.
    let mut residual: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n + m];
    let mut degree = vec![0usize; n + m];
    for (index, &(i, j)) in subset.iter().enumerate() {
        adjacency[i].push(index);
        adjacency[n + j].push(index);
        degree[i] += 1;
        degree[n + j] += 1;
    }
    let mut alive = vec![true; subset.len()];
    let mut flows = vec![0.0; subset.len()];
    let mut stack: Vec<usize> = (0..n + m).filter(|&node| degree[node] == 1).collect();
    let mut consumed = 0;
    while let Some(node) = stack.pop() {
        if degree[node] != 1 {
            continue;
        }
        let edge = *adjacency[node].iter().find(|&&e| alive[e])?;
        let (i, j) = subset[edge];
        let other = if node == i { n + j } else { i };
        let flow = residual[node];
        flows[edge] = flow;
        residual[node] = 0.0;
        residual[other] -= flow;
        alive[edge] = false;
        degree[node] -= 1;
        degree[other] -= 1;
        consumed += 1;
        if degree[other] == 1 {
            stack.push(other);
        }
    }
    if consumed != subset.len() {
        return None; // contains a cycle, so it is not a basis
    }
    if residual.iter().any(|r| r.abs() > 1e-9) {
        return None;
    }
    if flows.iter().any(|f| *f < -1e-12) {
        return None;
    }
    let objective = subset
        .iter()
        .zip(&flows)
        .map(|(&(i, j), f)| f * cost.values()[(i, j)])
        .sum();
    Some(objective)
}

/// Advances `idx` to the next k-combination of 0..total in lexicographic
/// order; false when exhausted.
fn next_combination(idx: &mut [usize], total: usize) -> bool {
    let k = idx.len();
    let mut pos = k;
    while pos > 0 {
        pos -= 1;
        if idx[pos] < total - k + pos {
            idx[pos] += 1;
            for later in pos + 1..k {
                idx[later] = idx[later - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn run_transport_suite(config: &SuiteConfig) -> Result<SuiteOutcome> {
    let mut failures = 0;
    let mut worst = 0.0_f64;
    let mut detail = String::new();
    let mut samples = Vec::with_capacity(config.transport_instances);
    for instance in 0..config.transport_instances {
        let mut rng =
            ChaCha8Rng::seed_from_u64(sub_seed(config.seed, "transport", instance as u64));
        let (a, b, cost) =
            random_transport_instance(&mut rng, config.transport_max_size, config.transport_max_size);
        let (plan, dual) = solve_transport(&a, &b, &cost)?;
        samples.push(plan.objective());
        let oracle = brute_force_transport(&a, &b, &cost).ok_or(Error::InfeasibleMarginals {
            detail: "oracle found no feasible basis on a balanced instance".into(),
        })?;
        let relative = (plan.objective() - oracle).abs() / (1.0 + oracle.abs());
        worst = worst.max(relative);
        let report = verify_duality(&plan, &dual, &a, &b, &cost);
        if relative > 1e-9 || !report.slackness_ok {
            failures += 1;
            if detail.is_empty() {
                detail = format!(
                    "instance {instance}: simplex {} vs oracle {oracle}, slackness {}",
                    plan.objective(),
                    report.max_slackness_violation
                );
            }
        }
    }
    Ok(SuiteOutcome {
        suite: Suite::Transport,
        pass: failures == 0,
        cases: config.transport_instances,
        failures,
        worst,
        detail: if detail.is_empty() {
            format!("worst relative objective error {worst:.3e}")
        } else {
            detail
        },
        samples,
    })
}

fn run_duality_suite(config: &SuiteConfig) -> Result<SuiteOutcome> {
    let mut failures = 0;
    let mut worst = 0.0_f64;
    let mut detail = String::new();
    let mut samples = Vec::with_capacity(config.transport_instances);
    for instance in 0..config.transport_instances {
        // Same stage name as the transport suite: duality is certified on
        // exactly the instances whose objectives were proven optimal there.
        let mut rng =
            ChaCha8Rng::seed_from_u64(sub_seed(config.seed, "transport", instance as u64));
        let (a, b, cost) =
            random_transport_instance(&mut rng, config.transport_max_size, config.transport_max_size);
        let (plan, dual) = solve_transport(&a, &b, &cost)?;
        let report = verify_duality(&plan, &dual, &a, &b, &cost);
        samples.push(report.dual_objective);
        let gap = (report.primal_objective - report.dual_objective).abs()
            / (1.0 + report.primal_objective.abs());
        worst = worst.max(gap);
        let zero = DualSolution {
            alpha: vec![0.0; a.len()],
            beta: vec![0.0; b.len()],
        };
        let zero_report = verify_duality(&plan, &zero, &a, &b, &cost);
        let ok = report.dual_feasible
            && report.gap_ok
            && zero_report.dual_feasible
            && zero_report.dual_objective <= zero_report.primal_objective + 1e-12;
        if !ok {
            failures += 1;
            if detail.is_empty() {
                detail = format!("instance {instance}: {report}");
            }
        }
    }
    Ok(SuiteOutcome {
        suite: Suite::Duality,
        pass: failures == 0,
        cases: config.transport_instances,
        failures,
        worst,
        detail: if detail.is_empty() {
            format!("worst relative duality gap {worst:.3e}")
        } else {
            detail
        },
        samples,
    })
}

/// Mixture distance with the fault hook applied. The injected fault reports
/// the squared-cost objective without taking the square root.
fn faultable_distance(
    p: &Gmm,
    q: &Gmm,
    convention: CostConvention,
    fault: Option<Fault>,
) -> Result<f64> {
    match fault {
        Some(Fault::ReportSquaredObjective) => {
            let cost = build_cost_matrix(p, q)?;
            let (plan, _) = solve_transport(p.weights(), q.weights(), &cost)?;
            Ok(plan.objective())
        }
        None => gmm_wasserstein_with(p, q, convention).map(|(distance, _)| distance),
    }
}

fn run_metric_suite(config: &SuiteConfig) -> Result<SuiteOutcome> {
    let mut failures = 0;
    let mut worst = 0.0_f64;
    let mut detail = String::new();
    let mut samples = Vec::with_capacity(3 * config.metric_triples);
    for triple in 0..config.metric_triples {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, "metric", triple as u64));
        let dim = 1 + rng.random_range(0..4);
        let mixture = |rng: &mut ChaCha8Rng| {
            let n = 1 + rng.random_range(0..3);
            random_gmm(rng, dim, n, 4.0)
        };
        let p = mixture(&mut rng);
        let q = mixture(&mut rng);
        let r = mixture(&mut rng);
        let d_pq = faultable_distance(&p, &q, config.convention, config.fault)?;
        let d_qp = faultable_distance(&q, &p, config.convention, config.fault)?;
        let d_qr = faultable_distance(&q, &r, config.convention, config.fault)?;
        let d_pr = faultable_distance(&p, &r, config.convention, config.fault)?;
        let d_pp = faultable_distance(&p, &p, config.convention, config.fault)?;
        samples.push(d_pq);
        samples.push(d_qr);
        samples.push(d_pr);

        let symmetry = (d_pq - d_qp).abs() / d_pq.abs().max(1.0);
        let identity = d_pp;
        let triangle = d_pr - (d_pq + d_qr);
        let triangle_allowance = 1e-7 * (1.0 + d_pq + d_qr);
        worst = worst.max(triangle);
        let ok = symmetry <= 1e-9 && identity <= 1e-7 && triangle <= triangle_allowance;
        if !ok {
            failures += 1;
            if detail.is_empty() {
                detail = format!(
                    "triple {triple}: symmetry {symmetry:.3e}, identity {identity:.3e}, triangle excess {triangle:.3e}"
                );
            }
        }
    }
    Ok(SuiteOutcome {
        suite: Suite::Metric,
        pass: failures == 0,
        cases: config.metric_triples,
        failures,
        worst,
        detail: if detail.is_empty() {
            format!("worst triangle slack used {worst:.3e}")
        } else {
            detail
        },
        samples,
    })
}

fn run_sampling_suite(config: &SuiteConfig) -> Result<SuiteOutcome> {
    let mut failures = 0;
    let mut worst = 0.0_f64;
    let mut detail = String::new();
    let mut samples = Vec::with_capacity(2 * config.sampling_pairs);
    for pair in 0..config.sampling_pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, "sampling", pair as u64));
        let mean1 = -5.0 + 10.0 * rng.random::<f64>();
        let mean2 = -5.0 + 10.0 * rng.random::<f64>();
        let std1 = 0.2 + 2.8 * rng.random::<f64>();
        let std2 = 0.2 + 2.8 * rng.random::<f64>();
        let exact = gaussian_w2_squared_1d(mean1, std1, mean2, std2).sqrt();
        let draw = |rng: &mut ChaCha8Rng, mean: f64, std: f64| -> Result<EmpiricalDistribution> {
            EmpiricalDistribution::from_samples(
                (0..config.sampling_count)
                    .map(|_| mean + std * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            )
        };
        let x = draw(&mut rng, mean1, std1)?;
        let y = draw(&mut rng, mean2, std2)?;
        let empirical = empirical_wn(&x, &y, 2)?;
        let se = bootstrap_se(
            &x,
            &y,
            2,
            config.bootstrap_resamples,
            sub_seed(config.seed, "sampling-boot", pair as u64),
        )?;
        samples.push(exact);
        samples.push(empirical);
        let gap = (empirical - exact).abs();
        let allowance = (0.02 * exact).max(3.0 * se);
        worst = worst.max(gap - allowance);
        if gap > allowance {
            failures += 1;
            if detail.is_empty() {
                detail = format!(
                    "pair {pair}: exact {exact:.6}, empirical {empirical:.6}, allowance {allowance:.6}"
                );
            }
        }
    }
    Ok(SuiteOutcome {
        suite: Suite::Sampling,
        pass: failures == 0,
        cases: config.sampling_pairs,
        failures,
        worst,
        detail: if detail.is_empty() {
            format!("worst margin beyond allowance {worst:.3e}")
        } else {
            detail
        },
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn quick_config() -> SuiteConfig {
        SuiteConfig {
            transport_instances: 12,
            metric_triples: 10,
            sampling_pairs: 4,
            sampling_count: 5_000,
            ..SuiteConfig::default()
        }
    }

    #[test]
    fn brute_force_agrees_with_hand_instance() {
        let cost = CostMatrix::from_matrix(dmatrix![1.0, 2.0; 3.0, 1.0]).unwrap();
        let oracle = brute_force_transport(&[0.7, 0.3], &[0.4, 0.6], &cost).unwrap();
        assert!((oracle - 1.3).abs() < 1e-12, "{oracle}");
    }

    #[test]
    fn brute_force_handles_one_by_one() {
        let cost = CostMatrix::from_matrix(dmatrix![4.2]).unwrap();
        let oracle = brute_force_transport(&[1.0], &[1.0], &cost).unwrap();
        assert_eq!(oracle, 4.2);
    }

    #[test]
    fn random_mixtures_are_well_formed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let g = random_gmm(&mut rng, 3, 2, 4.0);
            assert_eq!(g.dim(), 3);
            assert_eq!(g.n_components(), 2);
            let total: f64 = g.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn all_suites_pass_at_reduced_counts() {
        let outcomes = run_selftest(&Suite::ALL, &quick_config()).unwrap();
        assert_eq!(outcomes.len(), 4);
        for outcome in &outcomes {
            assert!(
                outcome.pass,
                "suite {} failed: {}",
                outcome.suite, outcome.detail
            );
            assert_eq!(outcome.failures, 0);
        }
    }

    #[test]
    fn injected_fault_breaks_the_metric_suite() {
        // Squared "distances" violate the triangle inequality only on triples
        // whose middle mixture sits at an obtuse angle, so a short run can
        // miss it by luck. Seed 3 at 30 triples produces four violations, the
        // worst with excess ≈ 22.6 — far beyond any tolerance.
        let config = SuiteConfig {
            seed: 3,
            metric_triples: 30,
            fault: Some(Fault::ReportSquaredObjective),
            ..quick_config()
        };
        let outcome = run_suite(Suite::Metric, &config).unwrap();
        assert!(
            !outcome.pass,
            "squared-objective fault must violate the triangle inequality: {}",
            outcome.detail
        );
        assert!(outcome.worst > 1.0, "worst excess {}", outcome.worst);
    }

    #[test]
    fn suite_runs_are_bitwise_deterministic() {
        let config = quick_config();
        for suite in Suite::ALL {
            let first = run_suite(suite, &config).unwrap();
            let second = run_suite(suite, &config).unwrap();
            let first_bits: Vec<u64> = first.samples.iter().map(|v| v.to_bits()).collect();
            let second_bits: Vec<u64> = second.samples.iter().map(|v| v.to_bits()).collect();
            assert_eq!(first_bits, second_bits, "suite {suite}");
        }
    }

    #[test]
    fn suite_names_round_trip() {
        for suite in Suite::ALL {
            let name = suite.to_string();
            assert_eq!(name.parse::<Suite>().unwrap(), suite);
        }
        assert!("bogus".parse::<Suite>().is_err());
    }
}

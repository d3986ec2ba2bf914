//! Multivariate Gaussians and the closed-form squared 2-Wasserstein distance
//! between two of them.
//!
//! The distance between N(mu1, S1) and N(mu2, S2) is
//!
//! ```text
//! W2² = ‖mu1 − mu2‖² + tr(S1 + S2 − 2·(S1^½ S2 S1^½)^½)
//! ```
//!
//! where M^½ is the symmetric PSD square root. Everything here works on the
//! squared distance; callers take square roots at the end so no precision is
//! lost where squared values are consumed directly (transport costs).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance for symmetry checks: entries must agree up to
/// `SYMMETRY_RTOL · max(1, max |entry|)`.
const SYMMETRY_RTOL: f64 = 1e-12;

/// Eigenvalues of a PSD matrix may dip below zero by round-off. Values in
/// `[−PSD_FLOOR_RTOL · trace/d, 0)` are clamped to zero; anything lower is an
/// error.
const PSD_FLOOR_RTOL: f64 = 1e-10;

/// A multivariate normal distribution with a symmetric PSD covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl Gaussian {
    /// Builds a Gaussian after validating shape, finiteness, symmetry, and
    /// positive semi-definiteness of the covariance.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::InvalidArgument {
                detail: "Gaussian dimension must be at least 1".into(),
            });
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch {
                context: "mean length vs covariance side",
                left: d,
                right: cov.nrows().max(cov.ncols()),
            });
        }
        for (row, value) in mean.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFiniteData {
                    row,
                    col: 0,
                    value: *value,
                });
            }
        }
        for col in 0..d {
            for row in 0..d {
                let value = cov[(row, col)];
                if !value.is_finite() {
                    return Err(Error::NonFiniteData { row, col, value });
                }
            }
        }
        check_symmetric(&cov)?;
        // Validate PSD-ness with the same floor spd_sqrt uses, so any
        // covariance that constructs here can also be rooted later.
        let eigenvalues = nalgebra::SymmetricEigen::new(cov.clone()).eigenvalues;
        let floor = psd_floor(&cov);
        for value in eigenvalues.iter() {
            if *value < -floor {
                return Err(Error::NotPsd {
                    eigenvalue: *value,
                    floor: -floor,
                });
            }
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

/// Result of [`spd_sqrt`]: the symmetric PSD square root plus how many
/// eigenvalues had to be clamped up to zero.
#[derive(Debug, Clone)]
pub struct SpdSqrtResult {
    pub sqrt: DMatrix<f64>,
    pub clamped_count: usize,
}

/// Symmetric PSD square root via spectral decomposition.
///
/// Eigenvalues in `[−1e-10·trace/d, 0)` are treated as round-off and clamped
/// to zero (counted in the result); eigenvalues below that floor mean the
/// input was not PSD to begin with.
pub fn spd_sqrt(m: &DMatrix<f64>) -> Result<SpdSqrtResult> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            context: "matrix must be square",
            left: m.nrows(),
            right: m.ncols(),
        });
    }
    check_symmetric(m)?;
    let eigen = nalgebra::SymmetricEigen::new(m.clone());
    let floor = psd_floor(m);
    let mut clamped_count = 0;
    let mut root_values = eigen.eigenvalues.clone();
    for value in root_values.iter_mut() {
        if *value < -floor {
            return Err(Error::NotPsd {
                eigenvalue: *value,
                floor: -floor,
            });
        }
        if *value < 0.0 {
            *value = 0.0;
            clamped_count += 1;
        }
        *value = value.sqrt();
    }
    let scaled = &eigen.eigenvectors * DMatrix::from_diagonal(&root_values);
    let sqrt = &scaled * eigen.eigenvectors.transpose();
    // Round-off can leave the product slightly asymmetric; restore symmetry
    // exactly so downstream symmetry checks never trip.
    let sqrt = symmetrize(&sqrt);
    Ok(SpdSqrtResult {
        sqrt,
        clamped_count,
    })
}

/// Squared 2-Wasserstein distance between two Gaussians.
///
/// Clamped to `[0, ∞)`: for nearly identical inputs the trace term can go
/// negative by round-off.
pub fn gaussian_w2_squared(g1: &Gaussian, g2: &Gaussian) -> Result<f64> {
    if g1.dim() != g2.dim() {
        return Err(Error::DimensionMismatch {
            context: "Gaussian dimensions",
            left: g1.dim(),
            right: g2.dim(),
        });
    }
    if g1 == g2 {
        // Exactly equal parameters have distance exactly zero; the general
        // route would return the eigendecomposition's round-off (~1e-14)
        // instead, which matters to callers comparing a model against itself.
        return Ok(0.0);
    }
    let mean_term = (g1.mean() - g2.mean()).norm_squared();
    let root1 = spd_sqrt(g1.cov())?.sqrt;
    let inner = symmetrize(&(&root1 * g2.cov() * &root1));
    let cross = spd_sqrt(&inner)?.sqrt;
    let trace_term = g1.cov().trace() + g2.cov().trace() - 2.0 * cross.trace();
    Ok((mean_term + trace_term).max(0.0))
}

/// `(m + mᵀ) / 2`.
pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn psd_floor(m: &DMatrix<f64>) -> f64 {
    let d = m.nrows().max(1) as f64;
    PSD_FLOOR_RTOL * m.trace().abs() / d
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let scale = m.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let tol = SYMMETRY_RTOL * scale;
    for col in 0..m.ncols() {
        for row in (col + 1)..m.nrows() {
            let delta = (m[(row, col)] - m[(col, row)]).abs();
            if delta > tol {
                return Err(Error::NotSymmetric {
                    row,
                    col,
                    delta,
                    tol,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_spd(rng: &mut ChaCha8Rng, d: usize, ridge: f64) -> DMatrix<f64> {
        let b: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
        &b * b.transpose() + DMatrix::identity(d, d) * ridge
    }

    fn random_gaussian(rng: &mut ChaCha8Rng, d: usize) -> Gaussian {
        let mean = DVector::from_fn(d, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            3.0 * z
        });
        Gaussian::new(mean, random_spd(rng, d, 0.1)).unwrap()
    }

    #[test]
    fn sqrt_of_identity_is_identity() {
        let result = spd_sqrt(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(result.clamped_count, 0);
        assert!((&result.sqrt - DMatrix::identity(3, 3)).abs().max() < 1e-14);
    }

    #[test]
    fn sqrt_of_diagonal_is_elementwise() {
        let result = spd_sqrt(&dmatrix![4.0, 0.0; 0.0, 9.0]).unwrap();
        assert!((&result.sqrt - dmatrix![2.0, 0.0; 0.0, 3.0]).abs().max() < 1e-12);
    }

    #[test]
    fn sqrt_reconstructs_random_spd_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let a = random_spd(&mut rng, 4, 0.0);
            let s = spd_sqrt(&a).unwrap().sqrt;
            let rel = ((&s * &s) - &a).norm() / a.norm();
            assert!(rel <= 1e-8, "relative reconstruction error {rel}");
        }
    }

    #[test]
    fn sqrt_clamps_roundoff_negatives() {
        // Symmetric PSD up to round-off: one eigenvalue is exactly the
        // negative of the floor times a hair under 1.
        let trace = 2.0;
        let eps = -0.5 * PSD_FLOOR_RTOL * trace / 2.0;
        let m = dmatrix![2.0 + eps, 0.0; 0.0, eps];
        let result = spd_sqrt(&m).unwrap();
        assert_eq!(result.clamped_count, 1);
        assert_eq!(result.sqrt[(1, 1)], 0.0);
    }

    #[test]
    fn sqrt_rejects_genuinely_indefinite_input() {
        let err = spd_sqrt(&dmatrix![1.0, 0.0; 0.0, -0.5]).unwrap_err();
        assert!(matches!(err, Error::NotPsd { .. }), "got {err:?}");
    }

    #[test]
    fn sqrt_rejects_asymmetric_input() {
        let err = spd_sqrt(&dmatrix![1.0, 0.5; 0.1, 1.0]).unwrap_err();
        assert!(matches!(err, Error::NotSymmetric { .. }), "got {err:?}");
    }

    #[test]
    fn w2_of_identical_gaussians_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [1usize, 2, 5] {
            let g = random_gaussian(&mut rng, d);
            let value = gaussian_w2_squared(&g, &g).unwrap();
            assert!(value <= 1e-9 * (1.0 + g.cov().trace()), "value {value}");
        }
    }

    #[test]
    fn w2_with_equal_covariances_is_mean_distance() {
        let cov = dmatrix![2.0, 0.3; 0.3, 1.0];
        let g1 = Gaussian::new(dvector![0.0, 0.0], cov.clone()).unwrap();
        let g2 = Gaussian::new(dvector![3.0, -4.0], cov).unwrap();
        let value = gaussian_w2_squared(&g1, &g2).unwrap();
        assert!((value - 25.0).abs() < 1e-10, "value {value}");
    }

    #[test]
    fn w2_matches_scalar_formula_in_one_dimension() {
        let g1 = Gaussian::new(dvector![1.5], dmatrix![4.0]).unwrap();
        let g2 = Gaussian::new(dvector![-0.5], dmatrix![9.0]).unwrap();
        // (m1 − m2)² + (s1 − s2)² = 4 + 1
        let value = gaussian_w2_squared(&g1, &g2).unwrap();
        assert!((value - 5.0).abs() < 1e-12, "value {value}");
    }

    #[test]
    fn w2_diagonal_case_sums_per_axis_terms() {
        let g1 = Gaussian::new(dvector![0.0, 0.0], dmatrix![1.0, 0.0; 0.0, 4.0]).unwrap();
        let g2 = Gaussian::new(dvector![0.0, 0.0], dmatrix![9.0, 0.0; 0.0, 1.0]).unwrap();
        // per-axis (s1 − s2)²: (1 − 3)² + (2 − 1)² = 5
        let value = gaussian_w2_squared(&g1, &g2).unwrap();
        assert!((value - 5.0).abs() < 1e-12, "value {value}");
    }

    #[test]
    fn w2_is_symmetric_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let d = 1 + (rng.next_u32() as usize) % 8;
            let g1 = random_gaussian(&mut rng, d);
            let g2 = random_gaussian(&mut rng, d);
            let ab = gaussian_w2_squared(&g1, &g2).unwrap();
            let ba = gaussian_w2_squared(&g2, &g1).unwrap();
            assert!(
                (ab - ba).abs() <= 1e-9 * ab.abs().max(1.0),
                "asymmetry {ab} vs {ba} at d={d}"
            );
        }
    }

    #[test]
    fn w2_is_translation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let g1 = random_gaussian(&mut rng, 3);
        let g2 = random_gaussian(&mut rng, 3);
        let shift = dvector![10.0, -20.0, 5.0];
        let h1 = Gaussian::new(g1.mean() + &shift, g1.cov().clone()).unwrap();
        let h2 = Gaussian::new(g2.mean() + &shift, g2.cov().clone()).unwrap();
        let before = gaussian_w2_squared(&g1, &g2).unwrap();
        let after = gaussian_w2_squared(&h1, &h2).unwrap();
        assert!(
            (before - after).abs() <= 1e-12 * before.max(1.0),
            "{before} vs {after}"
        );
    }

    #[test]
    fn w2_dominates_mean_separation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let g1 = random_gaussian(&mut rng, 4);
            let g2 = random_gaussian(&mut rng, 4);
            let value = gaussian_w2_squared(&g1, &g2).unwrap();
            let mean_sep = (g1.mean() - g2.mean()).norm_squared();
            assert!(value >= mean_sep - 1e-9, "{value} < {mean_sep}");
        }
    }

    #[test]
    fn w2_rejects_mismatched_dimensions() {
        let g1 = Gaussian::new(dvector![0.0], dmatrix![1.0]).unwrap();
        let g2 = Gaussian::new(dvector![0.0, 0.0], DMatrix::identity(2, 2)).unwrap();
        let err = gaussian_w2_squared(&g1, &g2).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn gaussian_constructor_rejects_bad_covariances() {
        assert!(matches!(
            Gaussian::new(dvector![0.0, 0.0], dmatrix![1.0, 0.9; 0.2, 1.0]),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(matches!(
            Gaussian::new(dvector![0.0, 0.0], dmatrix![1.0, 0.0; 0.0, -1.0]),
            Err(Error::NotPsd { .. })
        ));
        assert!(matches!(
            Gaussian::new(dvector![0.0], dmatrix![f64::NAN]),
            Err(Error::NonFiniteData { .. })
        ));
    }
}

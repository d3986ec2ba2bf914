//! Model file format: save and load fitted mixtures.
//!
//! Models are UTF-8 JSON with this shape:
//!
//! ```text
//! {
//!   "dim": 2,
//!   "covariance_type": "full",          // or "diagonal"
//!   "weights": [0.5, 0.5],
//!   "components": [
//!     {"mean": [m_1, ..., m_d], "cov": [c_11, c_12, ..., c_dd]},  // cov row-major, d·d entries
//!     ...
//!   ]
//! }
//! ```
//!
//! Every real is written in scientific notation with 18 significant digits,
//! more than the 17 needed to reproduce an f64 exactly, so save→load is
//! bit-identical. Loading validates the mixture invariants (weights on the
//! simplex, symmetric PSD covariances, consistent dimensions) and rejects
//! unknown fields and covariance types.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::Gaussian;
use crate::gmm::{CovarianceType, Gmm};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    dim: usize,
    covariance_type: CovarianceType,
    weights: Vec<f64>,
    components: Vec<ComponentFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentFile {
    mean: Vec<f64>,
    cov: Vec<f64>,
}

/// JSON formatter that writes every f64 with 18 significant digits so values
/// survive a round trip bit-for-bit.
struct FullPrecisionFloats;

impl serde_json::ser::Formatter for FullPrecisionFloats {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.17e}")
    }
}

/// Serializes a mixture to the JSON model format.
pub fn save_model(model: &Gmm) -> Vec<u8> {
    let file = ModelFile {
        dim: model.dim(),
        covariance_type: model.covariance_type(),
        weights: model.weights().to_vec(),
        components: model
            .components()
            .iter()
            .map(|g| ComponentFile {
                mean: g.mean().iter().copied().collect(),
                cov: g.cov().transpose().iter().copied().collect(),
            })
            .collect(),
    };
    let mut out = Vec::new();
    let mut serializer = serde_json::Serializer::with_formatter(&mut out, FullPrecisionFloats);
    file.serialize(&mut serializer)
        .expect("in-memory JSON serialization cannot fail");
    out.push(b'\n');
    out
}

/// Parses and validates a mixture from the JSON model format.
pub fn load_model(bytes: &[u8]) -> Result<Gmm> {
    let file: ModelFile = serde_json::from_slice(bytes).map_err(|err| Error::MalformedModel {
        detail: err.to_string(),
    })?;
    if file.dim == 0 {
        return Err(Error::MalformedModel {
            detail: "dim must be at least 1".into(),
        });
    }
    let mut components = Vec::with_capacity(file.components.len());
    for (index, component) in file.components.iter().enumerate() {
        if component.mean.len() != file.dim {
            return Err(Error::MalformedModel {
                detail: format!(
                    "component {index}: mean has {} entries, expected dim = {}",
                    component.mean.len(),
                    file.dim
                ),
            });
        }
        if component.cov.len() != file.dim * file.dim {
            return Err(Error::MalformedModel {
                detail: format!(
                    "component {index}: cov has {} entries, expected dim² = {}",
                    component.cov.len(),
                    file.dim * file.dim
                ),
            });
        }
        let mean = DVector::from_column_slice(&component.mean);
        let cov = DMatrix::from_row_slice(file.dim, file.dim, &component.cov);
        components.push(
            Gaussian::new(mean, cov).map_err(|err| Error::MalformedModel {
                detail: format!("component {index}: {err}"),
            })?,
        );
    }
    Gmm::with_covariance_type(file.weights, components, file.covariance_type).map_err(|err| {
        Error::MalformedModel {
            detail: err.to_string(),
        }
    })
}

/// [`save_model`] straight to a file.
pub fn save_model_to_path(model: &Gmm, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(&save_model(model))?;
    Ok(())
}

/// [`load_model`] straight from a file.
pub fn load_model_from_path(path: &Path) -> Result<Gmm> {
    let bytes = std::fs::read(path)?;
    load_model(&bytes)
}

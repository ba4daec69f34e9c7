//! Gaussian density estimator over per-timestep feature vectors.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_shape, Aggregation, DetectorModel, ScoreSeries};
use crate::data::WindowBatch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GdeMode {
    #[default]
    Diagonal,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GdeConfig {
    #[serde(default)]
    pub mode: GdeMode,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub aggregation: Aggregation,
}

fn default_epsilon() -> f64 {
    1e-6
}

impl Default for GdeConfig {
    fn default() -> Self {
        Self {
            mode: GdeMode::Diagonal,
            epsilon: default_epsilon(),
            aggregation: Aggregation::MaxOverTime,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdeModel {
    pub mode: GdeMode,
    pub n_features: usize,
    pub epsilon: f64,
    pub mean: Vec<f64>,
    /// Diagonal of the (regularised) covariance.
    pub variance: Vec<f64>,
    /// Lower Cholesky factor of `cov + eps I`, row-major; full mode only.
    pub cholesky: Option<Vec<f64>>,
    pub log_det: f64,
    pub aggregation: Aggregation,
    pub fitted_on: String,
}

/// Fit on every timestep of every training window.
pub fn fit_gde(train: &WindowBatch, config: &GdeConfig) -> Result<DetectorModel> {
    if !(config.epsilon > 0.0 && config.epsilon.is_finite()) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let d = train.n_features();
    let rows = train.data().len() / d.max(1);
    if rows < 2 {
        return Err(Error::InvalidArgument(format!(
            "density fit needs at least 2 rows, got {rows}"
        )));
    }
    let data = train.data();
    let n = rows as f64;
    let mut mean = vec![0.0; d];
    for r in data.chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let (variance, cholesky, log_det) = match config.mode {
        GdeMode::Diagonal => {
            let mut var = vec![0.0; d];
            for r in data.chunks_exact(d) {
                for j in 0..d {
                    let c = r[j] - mean[j];
                    var[j] += c * c;
                }
            }
            var.iter_mut().for_each(|v| *v = *v / n + config.epsilon);
            let log_det = var.iter().map(|v| v.ln()).sum();
            (var, None, log_det)
        }
        GdeMode::Full => {
            let mut cov = DMatrix::<f64>::zeros(d, d);
            for r in data.chunks_exact(d) {
                let c = DVector::from_iterator(d, r.iter().zip(&mean).map(|(v, m)| v - m));
                cov.syger(1.0, &c, &c, 1.0);
            }
            cov.fill_upper_triangle_with_lower_triangle();
            cov /= n;
            for j in 0..d {
                cov[(j, j)] += config.epsilon;
            }
            let var = (0..d).map(|j| cov[(j, j)]).collect();
            let chol = cov
                .cholesky()
                .ok_or_else(|| Error::InvalidArgument("covariance is not positive definite".into()))?;
            let l = chol.l();
            let log_det = 2.0 * (0..d).map(|j| l[(j, j)].ln()).sum::<f64>();
            (var, Some(l.transpose().as_slice().to_vec()), log_det)
        }
    };

    Ok(DetectorModel::Gde(GdeModel {
        mode: config.mode,
        n_features: d,
        epsilon: config.epsilon,
        mean,
        variance,
        cholesky,
        log_det,
        aggregation: config.aggregation,
        fitted_on: train.fingerprint(),
    }))
}

impl GdeModel {
    fn lower(&self) -> Option<DMatrix<f64>> {
        self.cholesky
            .as_ref()
            .map(|c| DMatrix::from_row_slice(self.n_features, self.n_features, c))
    }

    fn nll_with(&self, x: &[f64], lower: Option<&DMatrix<f64>>) -> f64 {
        let d = self.n_features as f64;
        let quad = match lower {
            None => x
                .iter()
                .zip(&self.mean)
                .zip(&self.variance)
                .map(|((v, m), s)| (v - m) * (v - m) / s)
                .sum::<f64>(),
            Some(l) => {
                let c = DVector::from_iterator(x.len(), x.iter().zip(&self.mean).map(|(v, m)| v - m));
                let z = l
                    .solve_lower_triangular(&c)
                    .expect("cholesky factor has a positive diagonal");
                z.norm_squared()
            }
        };
        0.5 * (d * (2.0 * PI).ln() + self.log_det + quad)
    }

    /// Negative log-likelihood of one feature vector.
    pub fn nll(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(self.nll_with(x, self.lower().as_ref()))
    }

    /// Per-timestep NLL, `B x W` row-major.
    pub fn timestep_scores(&self, batch: &WindowBatch) -> Result<Vec<f64>> {
        check_shape(batch, self.n_features, None)?;
        let lower = self.lower();
        Ok(batch
            .data()
            .par_chunks_exact(self.n_features)
            .map(|row| self.nll_with(row, lower.as_ref()))
            .collect())
    }

    pub fn score(&self, batch: &WindowBatch) -> Result<ScoreSeries> {
        let per_t = self.timestep_scores(batch)?;
        let scores = per_t
            .chunks_exact(batch.window_length())
            .map(|w| self.aggregation.reduce(w))
            .collect();
        ScoreSeries::new(batch.window_starts().to_vec(), scores, self.aggregation)
    }
}

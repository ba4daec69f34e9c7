//! Two-layer linear autoencoder over flattened windows.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_shape, Aggregation, DetectorModel, ScoreGranularity, ScoreSeries};
use crate::data::WindowBatch;
use crate::error::{Error, Result};

const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlprecConfig {
    pub hidden: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub granularity: ScoreGranularity,
    #[serde(default)]
    pub aggregation: Aggregation,
}

fn default_epochs() -> usize {
    200
}

fn default_learning_rate() -> f64 {
    0.1
}

impl MlprecConfig {
    pub fn new(hidden: usize) -> Self {
        Self {
            hidden,
            epochs: default_epochs(),
            learning_rate: default_learning_rate(),
            seed: 0,
            granularity: ScoreGranularity::PerWindow,
            aggregation: Aggregation::MaxOverTime,
        }
    }
}

/// Fitted autoencoder `x -> dec * (enc * x + b1) + b2` with `x` the
/// flattened `W * d` window. Matrices are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlprecModel {
    pub window_length: usize,
    pub n_features: usize,
    pub hidden: usize,
    pub encoder: Vec<f64>,
    pub encoder_bias: Vec<f64>,
    pub decoder: Vec<f64>,
    pub decoder_bias: Vec<f64>,
    pub loss_history: Vec<f64>,
    pub final_loss: f64,
    pub final_learning_rate: f64,
    pub granularity: ScoreGranularity,
    pub aggregation: Aggregation,
    pub seed: u64,
    pub fitted_on: String,
}

struct Params {
    enc: DMatrix<f64>,
    b1: DVector<f64>,
    dec: DMatrix<f64>,
    b2: DVector<f64>,
}

impl Params {
    fn step(&self, g: &Params, lr: f64) -> Params {
        Params {
            enc: &self.enc - &g.enc * lr,
            b1: &self.b1 - &g.b1 * lr,
            dec: &self.dec - &g.dec * lr,
            b2: &self.b2 - &g.b2 * lr,
        }
    }
}

/// Rows of `x` are samples. Returns `(hidden, reconstruction)`.
fn forward(p: &Params, x: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut z = x * p.enc.transpose();
    for mut row in z.row_iter_mut() {
        row += p.b1.transpose();
    }
    let mut y = &z * p.dec.transpose();
    for mut row in y.row_iter_mut() {
        row += p.b2.transpose();
    }
    (z, y)
}

fn loss(p: &Params, x: &DMatrix<f64>) -> f64 {
    let (_, y) = forward(p, x);
    (y - x).norm_squared() / (x.nrows() * x.ncols()) as f64
}

fn gradients(p: &Params, x: &DMatrix<f64>) -> Params {
    let (z, y) = forward(p, x);
    let g = (y - x) * (2.0 / (x.nrows() * x.ncols()) as f64);
    let dec = g.transpose() * &z;
    let b2 = DVector::from_iterator(g.ncols(), g.column_iter().map(|c| c.sum()));
    let dz = &g * &p.dec;
    let enc = dz.transpose() * x;
    let b1 = DVector::from_iterator(dz.ncols(), dz.column_iter().map(|c| c.sum()));
    Params { enc, b1, dec, b2 }
}

fn flatten(batch: &WindowBatch) -> DMatrix<f64> {
    DMatrix::from_row_slice(batch.len(), batch.window_size(), batch.data())
}

/// Fit by full-batch gradient descent with backtracking: a step that would
/// raise the loss is retried at half the rate, an accepted step grows the
/// rate by 5%. Initialised as the orthogonal projection onto a random
/// `hidden`-dimensional subspace through the training mean.
pub fn fit_mlprec(train: &WindowBatch, config: &MlprecConfig) -> Result<DetectorModel> {
    if config.hidden == 0 {
        return Err(Error::InvalidArgument("hidden width must be at least 1".into()));
    }
    if train.is_empty() {
        return Err(Error::Empty("no training windows".into()));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }
    let x = flatten(train);
    let dim = x.ncols();
    let h = config.hidden;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k = h.min(dim);
    let gauss = DMatrix::from_fn(dim, k, |_, _| StandardNormal.sample(&mut rng));
    let q = gauss.qr().q();
    let mut dec = DMatrix::zeros(dim, h);
    dec.columns_mut(0, k).copy_from(&q.columns(0, k));
    let enc = dec.transpose();
    let mean = DVector::from_iterator(dim, x.column_iter().map(|c| c.mean()));
    let b1 = -(&enc * &mean);
    let mut params = Params { enc, b1, dec, b2: mean };

    let mut lr = config.learning_rate;
    let mut current = loss(&params, &x);
    if !current.is_finite() {
        return Err(Error::Diverged {
            epoch: 0,
            learning_rate: lr,
        });
    }
    let mut history = vec![current];
    for epoch in 1..=config.epochs {
        let grad = gradients(&params, &x);
        let mut accepted = false;
        let mut any_finite = false;
        let start_lr = lr;
        for _ in 0..MAX_BACKTRACKS {
            let candidate = params.step(&grad, lr);
            let l = loss(&candidate, &x);
            any_finite |= l.is_finite();
            if l.is_finite() && l <= current {
                params = candidate;
                current = l;
                lr *= 1.05;
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        if !any_finite {
            return Err(Error::Diverged {
                epoch,
                learning_rate: start_lr,
            });
        }
        if !accepted {
            // No descent direction left at machine precision.
            lr = start_lr;
            break;
        }
        history.push(current);
    }

    Ok(DetectorModel::Mlprec(MlprecModel {
        window_length: train.window_length(),
        n_features: train.n_features(),
        hidden: h,
        encoder: params.enc.transpose().as_slice().to_vec(),
        encoder_bias: params.b1.as_slice().to_vec(),
        decoder: params.dec.transpose().as_slice().to_vec(),
        decoder_bias: params.b2.as_slice().to_vec(),
        loss_history: history,
        final_loss: current,
        final_learning_rate: lr,
        granularity: config.granularity,
        aggregation: config.aggregation,
        seed: config.seed,
        fitted_on: train.fingerprint(),
    }))
}

impl MlprecModel {
    fn params(&self) -> Params {
        let dim = self.window_length * self.n_features;
        Params {
            enc: DMatrix::from_row_slice(self.hidden, dim, &self.encoder),
            b1: DVector::from_column_slice(&self.encoder_bias),
            dec: DMatrix::from_row_slice(dim, self.hidden, &self.decoder),
            b2: DVector::from_column_slice(&self.decoder_bias),
        }
    }

    /// Squared reconstruction error per element, `B x (W * d)`.
    pub fn squared_errors(&self, batch: &WindowBatch) -> Result<DMatrix<f64>> {
        check_shape(batch, self.n_features, Some(self.window_length))?;
        let x = flatten(batch);
        let (_, y) = forward(&self.params(), &x);
        Ok((y - x).map(|e| e * e))
    }

    pub fn score(&self, batch: &WindowBatch) -> Result<ScoreSeries> {
        let err = self.squared_errors(batch)?;
        let d = self.n_features;
        let w = self.window_length;
        let rows: Vec<Vec<f64>> = (0..batch.len()).map(|b| err.row(b).iter().copied().collect()).collect();
        let scores: Vec<f64> = rows
            .par_iter()
            .map(|row| match self.granularity {
                ScoreGranularity::PerWindow => row.iter().sum::<f64>() / row.len() as f64,
                ScoreGranularity::PerTimestep => {
                    let per_t: Vec<f64> = (0..w)
                        .map(|t| row[t * d..(t + 1) * d].iter().sum::<f64>() / d as f64)
                        .collect();
                    self.aggregation.reduce(&per_t)
                }
            })
            .collect();
        ScoreSeries::new(batch.window_starts().to_vec(), scores, self.aggregation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::data::{make_windows, TimeSeriesDataset};

    fn batch_from(values: Vec<f64>, n: usize, d: usize, w: usize) -> WindowBatch {
        let ts = (0..n as i64).map(|i| i * 1000).collect();
        let names = (0..d).map(|i| format!("c{i}")).collect();
        let ds = TimeSeriesDataset::new(ts, values, names, vec![], Split::Train, Some(1000)).unwrap();
        make_windows(&[ds], w, 1).unwrap()
    }

    fn random_batch(seed: u64, n: usize, d: usize, w: usize) -> WindowBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        batch_from(v, n, d, w)
    }

    fn unwrap(m: DetectorModel) -> MlprecModel {
        match m {
            DetectorModel::Mlprec(m) => m,
            _ => unreachable!(),
        }
    }

    #[test]
    fn full_width_reaches_identity() {
        let b = random_batch(1, 60, 3, 4);
        let mut cfg = MlprecConfig::new(12);
        cfg.epochs = 20;
        let m = unwrap(fit_mlprec(&b, &cfg).unwrap());
        assert!(m.final_loss < 1e-6, "{}", m.final_loss);
    }

    #[test]
    fn loss_is_non_increasing() {
        let b = random_batch(2, 80, 3, 5);
        let mut cfg = MlprecConfig::new(3);
        cfg.epochs = 100;
        cfg.learning_rate = 5.0;
        let m = unwrap(fit_mlprec(&b, &cfg).unwrap());
        for pair in m.loss_history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-6);
        }
        assert_eq!(*m.loss_history.last().unwrap(), m.final_loss);
    }

    #[test]
    fn rank_one_data_is_learned() {
        // every window a scalar multiple of one pattern
        let (n, d) = (50, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pattern: Vec<f64> = (0..d * 4).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut data = Vec::new();
        let mut starts = Vec::new();
        for b in 0..n {
            let a: f64 = StandardNormal.sample(&mut rng);
            data.extend(pattern.iter().map(|p| a * p));
            starts.push(b as i64);
        }
        let batch = WindowBatch::from_parts(
            data,
            4,
            d,
            1,
            starts.clone(),
            starts.clone(),
            (0..n).collect(),
            vec![false; n],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let mut cfg = MlprecConfig::new(1);
        cfg.epochs = 500;
        let m = unwrap(fit_mlprec(&batch, &cfg).unwrap());
        assert!(m.final_loss < 1e-4, "{}", m.final_loss);
    }

    #[test]
    fn svd_oracle_bound() {
        // true rank 2 plus small noise; compare with the truncated-SVD residual
        let (n, dim, r) = (120, 8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut draw = |rows, cols, scale: f64| {
            DMatrix::from_fn(rows, cols, |_, _| {
                let v: f64 = StandardNormal.sample(&mut rng);
                scale * v
            })
        };
        let basis = draw(r, dim, 1.0);
        let coef = draw(n, r, 1.0);
        let noise = draw(n, dim, 0.01);
        let x = coef * basis + noise;
        let batch = WindowBatch::from_parts(
            x.transpose().as_slice().to_vec(),
            2,
            4,
            1,
            (0..n as i64).collect(),
            (0..n as i64).collect(),
            (0..n).collect(),
            vec![false; n],
            (0..4).map(|i| i.to_string()).collect(),
        )
        .unwrap();
        let mean = DVector::from_iterator(dim, x.column_iter().map(|c| c.mean()));
        let mut centred = x.clone();
        for mut row in centred.row_iter_mut() {
            row -= mean.transpose();
        }
        let sv = centred.svd(false, false).singular_values;
        let mut s: Vec<f64> = sv.iter().copied().collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let residual: f64 = s[r..].iter().map(|v| v * v).sum::<f64>() / (n * dim) as f64;

        let mut cfg = MlprecConfig::new(r);
        cfg.epochs = 400;
        let m = unwrap(fit_mlprec(&batch, &cfg).unwrap());
        assert!(m.final_loss < 10.0 * residual, "{} vs {}", m.final_loss, residual);
    }

    #[test]
    fn fit_is_deterministic() {
        let b = random_batch(3, 40, 2, 3);
        let mut cfg = MlprecConfig::new(2);
        cfg.epochs = 30;
        cfg.seed = 17;
        assert_eq!(fit_mlprec(&b, &cfg).unwrap(), fit_mlprec(&b, &cfg).unwrap());
    }

    #[test]
    fn scores_and_granularity() {
        let b = random_batch(4, 40, 2, 3);
        let mut cfg = MlprecConfig::new(6);
        cfg.epochs = 10;
        let m = unwrap(fit_mlprec(&b, &cfg).unwrap());
        let s = m.score(&b).unwrap();
        assert!(s.scores().iter().all(|&v| v < 1e-9));

        let mut cfg = MlprecConfig::new(1);
        cfg.epochs = 10;
        cfg.granularity = ScoreGranularity::PerTimestep;
        let m = unwrap(fit_mlprec(&b, &cfg).unwrap());
        let mut spiked = b.data().to_vec();
        spiked[3] += 50.0;
        let sb = b.with_data(spiked).unwrap();
        let max_s = m.score(&sb).unwrap();
        let mut mean_m = m.clone();
        mean_m.aggregation = Aggregation::MeanOverTime;
        let mean_s = mean_m.score(&sb).unwrap();
        for (a, b) in max_s.scores().iter().zip(mean_s.scores()) {
            assert!(a >= b);
        }
    }

    #[test]
    fn scores_are_order_invariant() {
        let b = random_batch(6, 30, 2, 3);
        let mut cfg = MlprecConfig::new(1);
        cfg.epochs = 10;
        let m = unwrap(fit_mlprec(&b, &cfg).unwrap());
        let s = m.score(&b).unwrap();
        let idx: Vec<usize> = (0..b.len()).rev().collect();
        let s2 = m.score(&b.select(&idx)).unwrap();
        for (i, &j) in idx.iter().enumerate() {
            assert_eq!(s2.scores()[i], s.scores()[j]);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let b = random_batch(7, 30, 2, 3);
        let m = fit_mlprec(&b, &MlprecConfig::new(1)).unwrap();
        let other = random_batch(7, 30, 3, 3);
        assert!(matches!(m.score(&other), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn nan_input_diverges() {
        let mut v = vec![0.0; 20];
        v[5] = f64::NAN;
        let b = batch_from(v, 10, 2, 2);
        assert!(matches!(
            fit_mlprec(&b, &MlprecConfig::new(1)),
            Err(Error::Diverged { .. })
        ));
    }
}

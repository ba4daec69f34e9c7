use serde::{Deserialize, Serialize};

use super::dataset::{Split, TimeSeriesDataset};
use crate::error::{Error, Result};

/// Per-feature location and scale fitted on the training split.
///
/// `std` is the population standard deviation. Columns with zero spread are
/// flagged in `degenerate` and normalised with divisor 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl NormStats {
    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn degenerate_columns(&self) -> Vec<usize> {
        self.degenerate
            .iter()
            .enumerate()
            .filter_map(|(i, &d)| d.then_some(i))
            .collect()
    }
}

pub fn fit_normalizer(train: &TimeSeriesDataset) -> Result<NormStats> {
    if train.split() != Split::Train {
        return Err(Error::InvalidArgument(format!(
            "normaliser must be fit on the train split, got {:?}",
            train.split()
        )));
    }
    let d = train.n_features();
    let mut mean = vec![0.0; d];
    let mut std = vec![0.0; d];
    for c in 0..d {
        let col: Vec<f64> = (0..train.len())
            .map(|r| train.value(r, c))
            .filter(|v| !v.is_nan())
            .collect();
        if col.is_empty() {
            return Err(Error::ColumnFullyMissing(train.feature_names()[c].clone()));
        }
        let n = col.len() as f64;
        let m = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        mean[c] = m;
        std[c] = var.sqrt();
    }
    let degenerate = std.iter().map(|&s| s == 0.0).collect();
    Ok(NormStats { mean, std, degenerate })
}

pub fn apply_normalizer(ds: &TimeSeriesDataset, stats: &NormStats) -> Result<TimeSeriesDataset> {
    let d = ds.n_features();
    if stats.n_features() != d {
        return Err(Error::DimensionMismatch {
            expected: stats.n_features(),
            got: d,
        });
    }
    let divisor: Vec<f64> = stats
        .std
        .iter()
        .zip(&stats.degenerate)
        .map(|(&s, &deg)| if deg { 1.0 } else { s })
        .collect();
    let values = ds
        .values()
        .chunks(d)
        .flat_map(|row| {
            row.iter()
                .enumerate()
                .map(|(c, &v)| (v - stats.mean[c]) / divisor[c])
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(ds.with_values(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn train(cols: usize, vals: Vec<f64>) -> TimeSeriesDataset {
        let t = vals.len() / cols;
        TimeSeriesDataset::new(
            (0..t as i64).collect(),
            vals,
            (0..cols).map(|c| format!("c{c}")).collect(),
            vec![],
            Split::Train,
            None,
        )
        .unwrap()
    }

    #[test]
    fn centers_simple_column() {
        let ds = train(1, vec![1.0, 2.0, 3.0]);
        let stats = fit_normalizer(&ds).unwrap();
        assert_eq!(stats.mean, vec![2.0]);
        assert!((stats.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let out = apply_normalizer(&ds, &stats).unwrap();
        assert!(out.values().iter().sum::<f64>().abs() < 1e-12);
        assert_eq!(out.values()[1], 0.0);
    }

    #[test]
    fn constant_column_is_degenerate() {
        let ds = train(2, vec![5.0, 1.0, 5.0, 2.0, 5.0, 3.0]);
        let stats = fit_normalizer(&ds).unwrap();
        assert_eq!(stats.degenerate, vec![true, false]);
        let out = apply_normalizer(&ds, &stats).unwrap();
        assert!(out.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_non_train_and_mismatch() {
        let ds = train(1, vec![1.0, 2.0]);
        assert!(fit_normalizer(&ds.with_split(Split::Test)).is_err());
        let stats = fit_normalizer(&ds).unwrap();
        let wide = train(2, vec![1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            apply_normalizer(&wide, &stats),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn refit_after_normalisation_is_standard(vals in prop::collection::vec(-1e3f64..1e3, 6..200)) {
            let cols = 3;
            let n = vals.len() / cols * cols;
            let ds = train(cols, vals[..n].to_vec());
            let stats = fit_normalizer(&ds).unwrap();
            let refit = fit_normalizer(&apply_normalizer(&ds, &stats).unwrap()).unwrap();
            for c in 0..cols {
                prop_assert!(refit.mean[c].abs() < 1e-9);
                if !stats.degenerate[c] && stats.std[c] > 1e-6 {
                    prop_assert!((refit.std[c] - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}

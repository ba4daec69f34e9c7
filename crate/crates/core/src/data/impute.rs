use super::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};

/// Replace each missing cell with the most recent observed value in its
/// column. Leading gaps take the column's first observed value.
pub fn impute_forward_fill(ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
    let d = ds.n_features();
    let t = ds.len();
    let mut values = ds.values().to_vec();
    for c in 0..d {
        let first = (0..t)
            .map(|r| values[r * d + c])
            .find(|v| !v.is_nan())
            .ok_or_else(|| Error::ColumnFullyMissing(ds.feature_names()[c].clone()))?;
        let mut last = first;
        for r in 0..t {
            let cell = &mut values[r * d + c];
            if cell.is_nan() {
                *cell = last;
            } else {
                last = *cell;
            }
        }
    }
    Ok(ds.with_values(values))
}

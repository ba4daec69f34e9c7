use super::dataset::{Interval, TimeSeriesDataset, Timestamp};
use super::impute::impute_forward_fill;
use super::ingest::intervals_from_points;
use crate::error::{Error, Result};

/// Resample onto a uniform grid `t0, t0 + step, ...` up to the last input
/// timestamp. Each output row is the mean of the observed input cells in
/// `[g, g + step)`; empty buckets are forward-filled. An output row is
/// labelled when its bucket overlaps a label interval.
pub fn resample_uniform(ds: &TimeSeriesDataset, step: i64) -> Result<TimeSeriesDataset> {
    if step <= 0 {
        return Err(Error::InvalidArgument(format!(
            "resample interval must be positive, got {step} ms"
        )));
    }
    let ts = ds.timestamps();
    let (Some(&t0), Some(&tn)) = (ts.first(), ts.last()) else {
        return Err(Error::Empty("cannot resample an empty dataset".into()));
    };
    let min_spacing = ts.windows(2).map(|w| w[1] - w[0]).min();
    if let Some(min_spacing) = min_spacing {
        if min_spacing > 0 && step < min_spacing {
            return Err(Error::InvalidArgument(format!(
                "resample interval {step} ms is below the minimum input spacing {min_spacing} ms; upsampling is not supported"
            )));
        }
    }

    let d = ds.n_features();
    let n_out = ((tn - t0) / step) as usize + 1;
    let mut sums = vec![0.0; n_out * d];
    let mut counts = vec![0u32; n_out * d];
    for (r, &t) in ts.iter().enumerate() {
        let k = ((t - t0) / step) as usize;
        for (c, &v) in ds.row(r).iter().enumerate() {
            if !v.is_nan() {
                let i = k * d + c;
                sums[i] = if counts[i] == 0 { v } else { sums[i] + v };
                counts[i] += 1;
            }
        }
    }
    let values: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| if n == 0 { f64::NAN } else { s / n as f64 })
        .collect();
    let grid: Vec<Timestamp> = (0..n_out as i64).map(|k| t0 + k * step).collect();
    let labels: Vec<bool> = grid
        .iter()
        .map(|&g| {
            let bucket_end = g + step - 1;
            ds.label_intervals().iter().any(|iv| {
                iv.overlaps(&Interval {
                    start: g,
                    end: bucket_end,
                })
            })
        })
        .collect();
    let intervals = intervals_from_points(&grid, &labels);
    let out = TimeSeriesDataset::new(
        grid,
        values,
        ds.feature_names().to_vec(),
        intervals,
        ds.split(),
        Some(step),
    )?;
    if out.values().iter().any(|v| v.is_nan()) {
        impute_forward_fill(&out)
    } else {
        Ok(out)
    }
}

use super::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};

/// Split into contiguous runs wherever consecutive timestamps differ by more
/// than `gap_threshold` milliseconds. Label intervals are clipped per run.
pub fn segment_by_gaps(ds: &TimeSeriesDataset, gap_threshold: i64) -> Result<Vec<TimeSeriesDataset>> {
    if gap_threshold <= 0 {
        return Err(Error::InvalidArgument("gap threshold must be positive".into()));
    }
    let ts = ds.timestamps();
    let mut cuts = vec![0];
    cuts.extend(
        ts.windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] - w[0] > gap_threshold)
            .map(|(i, _)| i + 1),
    );
    cuts.push(ts.len());
    cuts.windows(2)
        .filter(|c| c[1] > c[0])
        .map(|c| ds.slice_rows(c[0], c[1]))
        .collect()
}

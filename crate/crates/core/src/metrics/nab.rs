use serde::{Deserialize, Serialize};

use crate::data::Timestamp;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NabMode {
    /// `[cp - tol, cp + tol]`
    #[default]
    Symmetric,
    /// `[cp, cp + tol]`
    PostOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NabStats {
    pub changepoints_total: usize,
    pub detected_within_tolerance: usize,
    /// Positive decisions falling outside every tolerance window.
    pub false_alarms: usize,
}

/// Credit each changepoint at most once when a positive decision lands in
/// its tolerance window; positives outside all windows are false alarms.
pub fn nab_tolerance_score(
    changepoints: &[Timestamp],
    times: &[Timestamp],
    detections: &[bool],
    tolerance: i64,
    mode: NabMode,
) -> Result<NabStats> {
    if tolerance <= 0 {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tolerance} ms"
        )));
    }
    if times.len() != detections.len() {
        return Err(Error::InvalidArgument(
            "detection times and flags differ in length".into(),
        ));
    }
    let window = |cp: Timestamp| match mode {
        NabMode::Symmetric => (cp - tolerance, cp + tolerance),
        NabMode::PostOnly => (cp, cp + tolerance),
    };
    let positives: Vec<Timestamp> = times
        .iter()
        .zip(detections)
        .filter_map(|(&t, &d)| d.then_some(t))
        .collect();
    let detected = changepoints
        .iter()
        .filter(|&&cp| {
            let (lo, hi) = window(cp);
            positives.iter().any(|&t| lo <= t && t <= hi)
        })
        .count();
    let false_alarms = positives
        .iter()
        .filter(|&&t| {
            !changepoints.iter().any(|&cp| {
                let (lo, hi) = window(cp);
                lo <= t && t <= hi
            })
        })
        .count();
    Ok(NabStats {
        changepoints_total: changepoints.len(),
        detected_within_tolerance: detected,
        false_alarms,
    })
}

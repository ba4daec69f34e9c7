use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::{derive_seed, splitmix64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum MaskOrigin {
    Random { seed: u64, fraction: f64 },
    Explicit,
    ImportanceRanked,
}

/// Set of zeroed channels out of `d_total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMask {
    zeroed: BTreeSet<usize>,
    d_total: usize,
    origin: MaskOrigin,
}

/// `round_half_even(fraction * d)`, at least one channel when `fraction > 0`.
pub fn channel_count_for_fraction(fraction: f64, d: usize) -> usize {
    if fraction <= 0.0 || d == 0 {
        return 0;
    }
    let k = (fraction * d as f64).round_ties_even() as usize;
    k.clamp(1, d)
}

impl ChannelMask {
    pub fn empty(d_total: usize) -> Self {
        Self {
            zeroed: BTreeSet::new(),
            d_total,
            origin: MaskOrigin::Explicit,
        }
    }

    pub fn explicit(channels: impl IntoIterator<Item = usize>, d_total: usize) -> Result<Self> {
        Self::with_origin(channels, d_total, MaskOrigin::Explicit)
    }

    pub fn with_origin(channels: impl IntoIterator<Item = usize>, d_total: usize, origin: MaskOrigin) -> Result<Self> {
        let zeroed: BTreeSet<usize> = channels.into_iter().collect();
        if let Some(&bad) = zeroed.iter().find(|&&c| c >= d_total) {
            return Err(Error::InvalidArgument(format!(
                "channel index {bad} out of range for {d_total} channels"
            )));
        }
        Ok(Self {
            zeroed,
            d_total,
            origin,
        })
    }

    /// Seeded random mask of `channel_count_for_fraction(fraction, d)`
    /// channels. Each channel gets a counter-based key from
    /// `(seed, d, channel)`; the smallest keys are zeroed.
    pub fn random(seed: u64, fraction: f64, d_total: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidArgument(format!(
                "mask fraction {fraction} outside [0, 1]"
            )));
        }
        let k = channel_count_for_fraction(fraction, d_total);
        let base = derive_seed(seed, 0x6D61_736B, d_total as u64);
        let mut keyed: Vec<(u64, usize)> = (0..d_total)
            .map(|c| (splitmix64(base.wrapping_add(c as u64)), c))
            .collect();
        keyed.sort_unstable();
        Ok(Self {
            zeroed: keyed.into_iter().take(k).map(|(_, c)| c).collect(),
            d_total,
            origin: MaskOrigin::Random { seed, fraction },
        })
    }

    pub fn zeroed(&self) -> &BTreeSet<usize> {
        &self.zeroed
    }

    pub fn d_total(&self) -> usize {
        self.d_total
    }

    pub fn origin(&self) -> &MaskOrigin {
        &self.origin
    }

    pub fn len(&self) -> usize {
        self.zeroed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeroed.is_empty()
    }

    pub fn contains(&self, c: usize) -> bool {
        self.zeroed.contains(&c)
    }
}

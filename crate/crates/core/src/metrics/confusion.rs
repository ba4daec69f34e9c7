use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// A rate with a flag marking the `0/0` case (reported as 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub value: f64,
    pub degenerate: bool,
}

impl Rate {
    fn ratio(num: u64, den: u64) -> Self {
        if den == 0 {
            Rate {
                value: 0.0,
                degenerate: true,
            }
        } else {
            Rate {
                value: num as f64 / den as f64,
                degenerate: false,
            }
        }
    }
}

pub fn confusion(labels: &[bool], decisions: &[bool]) -> Result<ConfusionCounts> {
    if labels.len() != decisions.len() {
        return Err(Error::InvalidArgument(format!(
            "{} labels but {} decisions",
            labels.len(),
            decisions.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&l, &d) in labels.iter().zip(decisions) {
        match (l, d) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// `2 TP / (2 TP + FP + FN)`.
pub fn f1(c: &ConfusionCounts) -> Rate {
    Rate::ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_)
}

pub fn precision(c: &ConfusionCounts) -> Rate {
    Rate::ratio(c.tp, c.tp + c.fp)
}

pub fn recall(c: &ConfusionCounts) -> Rate {
    Rate::ratio(c.tp, c.tp + c.fn_)
}

pub fn accuracy(c: &ConfusionCounts) -> Rate {
    Rate::ratio(c.tp + c.tn, c.total())
}

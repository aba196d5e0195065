//! Chronological train/valid/test split.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::bars::TradingDayData;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<NaiveDate>,
    pub valid: Vec<NaiveDate>,
    pub test: Vec<NaiveDate>,
}

impl DatasetSplit {
    pub fn partition(&self, name: &str) -> Result<&[NaiveDate]> {
        match name {
            "train" => Ok(&self.train),
            "valid" => Ok(&self.valid),
            "test" => Ok(&self.test),
            other => Err(Error::validation(format!("unknown split {other}"))),
        }
    }
}

/// Partition the dataset's dates at the two boundary dates: train is
/// strictly before the first boundary, valid is [first, second), test is
/// everything from the second boundary on. All three partitions must be
/// non-empty and boundaries must be strictly increasing and inside range.
pub fn split_dataset(dataset: &[TradingDayData], boundaries: &[NaiveDate]) -> Result<DatasetSplit> {
    if boundaries.len() != 2 {
        return Err(Error::validation(format!(
            "expected 2 boundary dates, got {}",
            boundaries.len()
        )));
    }
    if boundaries[0] >= boundaries[1] {
        return Err(Error::validation("boundaries must be strictly increasing"));
    }
    let mut dates: Vec<NaiveDate> = dataset.iter().map(|d| d.date).collect();
    dates.sort();
    dates.dedup();
    if dates.is_empty() {
        return Err(Error::validation("empty dataset"));
    }
    let (first, last) = (dates[0], *dates.last().unwrap());
    for b in boundaries {
        if *b <= first || *b > last {
            return Err(Error::validation(format!(
                "boundary {b} outside dataset range ({first} .. {last})"
            )));
        }
    }
    let split = DatasetSplit {
        train: dates.iter().copied().filter(|d| *d < boundaries[0]).collect(),
        valid: dates
            .iter()
            .copied()
            .filter(|d| *d >= boundaries[0] && *d < boundaries[1])
            .collect(),
        test: dates.iter().copied().filter(|d| *d >= boundaries[1]).collect(),
    };
    if split.train.is_empty() || split.valid.is_empty() || split.test.is_empty() {
        return Err(Error::validation("every partition must be non-empty"));
    }
    Ok(split)
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::ConvQaDataset;
use crate::dialog::Dialog;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStatistics {
    pub num_dialogs: usize,
    /// Mean utterances per dialog.
    pub mean_turns: f64,
    /// Utterance count → number of dialogs.
    pub turn_histogram: BTreeMap<usize, usize>,
}

impl DatasetStatistics {
    /// Mean turns rounded to two decimals, as reported in tables.
    pub fn mean_turns_2dp(&self) -> String {
        format!("{:.2}", self.mean_turns)
    }
}

pub fn dialog_statistics(dialogs: &[Dialog]) -> Result<DatasetStatistics> {
    if dialogs.is_empty() {
        return Err(Error::invalid("statistics of an empty dataset are undefined"));
    }
    let mut turn_histogram = BTreeMap::new();
    let mut total = 0usize;
    for d in dialogs {
        *turn_histogram.entry(d.len()).or_insert(0) += 1;
        total += d.len();
    }
    Ok(DatasetStatistics {
        num_dialogs: dialogs.len(),
        mean_turns: total as f64 / dialogs.len() as f64,
        turn_histogram,
    })
}

pub fn dataset_statistics(ds: &ConvQaDataset) -> Result<DatasetStatistics> {
    dialog_statistics(&ds.dialogs)
}

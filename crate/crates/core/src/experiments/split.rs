use std::ops::Range;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dataset::{GridDataset, PixelTimeSet};
use crate::error::{Error, Result};

/// Inclusive calendar window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        DateWindow { start, end }
    }

    /// Day-index range inside `dataset`; the window must lie in the record.
    pub fn days(&self, dataset: &GridDataset) -> Result<Range<usize>> {
        let (Some(a), Some(b)) = (dataset.day_index(self.start), dataset.day_index(self.end)) else {
            return Err(Error::InvalidSplit(format!(
                "window {}..={} outside the record {}..={}",
                self.start,
                self.end,
                dataset.start_date,
                dataset.date(dataset.n_days.saturating_sub(1))
            )));
        };
        if b < a {
            return Err(Error::InvalidSplit(format!("window end {} before start {}", self.end, self.start)));
        }
        Ok(a..b + 1)
    }

    pub fn overlaps(&self, other: &DateWindow) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

fn default_stride() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitSpec {
    /// Same pixels, disjoint time windows.
    Temporal { train: DateWindow, test: DateWindow },
    /// One training pixel per stride × stride patch; every other pixel tests.
    SpatialSubsample {
        #[serde(default = "default_stride")]
        stride: usize,
        #[serde(default)]
        offset: [usize; 2],
        window: DateWindow,
    },
    /// Train on pixels whose region label is listed, test on the rest.
    RegionalHoldout { train_regions: Vec<String>, window: DateWindow },
}

impl SplitSpec {
    pub fn describe(&self) -> String {
        match self {
            SplitSpec::Temporal { train, test } => {
                format!("temporal train {}..{} test {}..{}", train.start, train.end, test.start, test.end)
            }
            SplitSpec::SpatialSubsample { stride, offset, window } => format!(
                "spatial stride {stride} offset ({}, {}) {}..{}",
                offset[0], offset[1], window.start, window.end
            ),
            SplitSpec::RegionalHoldout { train_regions, window } => format!(
                "regional train [{}] {}..{}",
                train_regions.join(","),
                window.start,
                window.end
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: PixelTimeSet,
    pub test: PixelTimeSet,
}

impl Split {
    /// True when no (pixel, day) pair is in both sets.
    pub fn is_disjoint(&self) -> bool {
        let days_overlap = self.train.days.start < self.test.days.end && self.test.days.start < self.train.days.end;
        !days_overlap || !self.train.pixels.iter().any(|p| self.test.pixels.contains(p))
    }
}

pub fn make_split(dataset: &GridDataset, spec: &SplitSpec) -> Result<Split> {
    let all: Vec<usize> = (0..dataset.pixels.len()).collect();
    let split = match spec {
        SplitSpec::Temporal { train, test } => {
            if train.overlaps(test) {
                return Err(Error::InvalidSplit("temporal train and test windows overlap".into()));
            }
            Split {
                train: PixelTimeSet::new(all.clone(), train.days(dataset)?),
                test: PixelTimeSet::new(all, test.days(dataset)?),
            }
        }
        SplitSpec::SpatialSubsample { stride, offset, window } => {
            if *stride < 2 {
                return Err(Error::InvalidSplit(format!("stride must be at least 2, got {stride}")));
            }
            if offset[0] >= *stride || offset[1] >= *stride {
                return Err(Error::InvalidSplit("offset must lie inside the patch".into()));
            }
            let days = window.days(dataset)?;
            let (train, test): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&p| {
                let px = &dataset.pixels[p];
                px.row % stride == offset[0] && px.col % stride == offset[1]
            });
            Split {
                train: PixelTimeSet::new(train, days.clone()),
                test: PixelTimeSet::new(test, days),
            }
        }
        SplitSpec::RegionalHoldout { train_regions, window } => {
            if train_regions.is_empty() {
                return Err(Error::InvalidSplit("no training regions".into()));
            }
            let known = dataset.regions();
            if let Some(r) = train_regions.iter().find(|r| !known.contains(r)) {
                return Err(Error::InvalidSplit(format!("region {r:?} not present in the dataset")));
            }
            let days = window.days(dataset)?;
            let (train, test): (Vec<usize>, Vec<usize>) = all
                .iter()
                .partition(|&&p| dataset.pixels[p].region.as_ref().is_some_and(|r| train_regions.contains(r)));
            Split {
                train: PixelTimeSet::new(train, days.clone()),
                test: PixelTimeSet::new(test, days),
            }
        }
    };
    if split.train.is_empty() {
        return Err(Error::InvalidSplit("empty training set".into()));
    }
    if split.test.is_empty() {
        return Err(Error::InvalidSplit("empty test set".into()));
    }
    Ok(split)
}

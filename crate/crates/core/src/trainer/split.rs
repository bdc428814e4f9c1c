use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datapipe::BatteryRecord;
use crate::error::{Error, Result};

const VAL_FRACTION: f64 = 0.20;
const TEST_FRACTION: f64 = 0.16;

/// Partition sizes plus the shuffle seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl SplitSpec {
    /// 64/20/16 proportions, rounded, every part non-empty. A corpus of 124
    /// gives 79/25/20.
    pub fn for_size(n: usize, seed: u64) -> Result<Self> {
        if n < 3 {
            return Err(Error::Data(format!(
                "splitting needs at least 3 batteries, got {n}"
            )));
        }
        let n_val = ((n as f64 * VAL_FRACTION).round() as usize).max(1);
        let n_test = ((n as f64 * TEST_FRACTION).round() as usize).max(1);
        let n_train = n - n_val - n_test;
        Ok(Self {
            n_train,
            n_val,
            n_test,
            seed,
        })
    }

    pub fn total(&self) -> usize {
        self.n_train + self.n_val + self.n_test
    }
}

/// Battery ids of each partition, each list sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Train,
    Val,
    Test,
}

impl Part {
    pub const ALL: [Part; 3] = [Part::Train, Part::Val, Part::Test];

    pub fn name(self) -> &'static str {
        match self {
            Part::Train => "train",
            Part::Val => "val",
            Part::Test => "test",
        }
    }
}

impl std::str::FromStr for Part {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Part::Train),
            "val" | "validation" => Ok(Part::Val),
            "test" => Ok(Part::Test),
            other => Err(Error::InvalidConfig(format!("unknown split {other:?}"))),
        }
    }
}

impl Split {
    pub fn ids(&self, part: Part) -> &[String] {
        match part {
            Part::Train => &self.train,
            Part::Val => &self.val,
            Part::Test => &self.test,
        }
    }

    /// The records of one partition, in the partition's id order.
    pub fn select(&self, records: &[BatteryRecord], part: Part) -> Result<Vec<BatteryRecord>> {
        self.ids(part)
            .iter()
            .map(|id| {
                records
                    .iter()
                    .find(|r| &r.id == id)
                    .cloned()
                    .ok_or_else(|| {
                        Error::Data(format!("battery {id} from the split is not in the dataset"))
                    })
            })
            .collect()
    }
}

/// Seeded shuffle of the id-sorted batteries, cut into train/val/test. The
/// result does not depend on the order of `records`.
pub fn split(records: &[BatteryRecord], spec: &SplitSpec) -> Result<Split> {
    if records.len() < 3 {
        return Err(Error::Data(format!(
            "splitting needs at least 3 batteries, got {}",
            records.len()
        )));
    }
    if spec.total() != records.len() || spec.n_train == 0 || spec.n_val == 0 || spec.n_test == 0 {
        return Err(Error::InvalidConfig(format!(
            "split sizes {}/{}/{} do not partition {} batteries",
            spec.n_train,
            spec.n_val,
            spec.n_test,
            records.len()
        )));
    }
    let mut ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    ids.sort();
    let unique: HashSet<&String> = ids.iter().collect();
    if unique.len() != ids.len() {
        return Err(Error::Data("duplicate battery ids".into()));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut test = ids.split_off(spec.n_train + spec.n_val);
    let mut val = ids.split_off(spec.n_train);
    let mut train = ids;
    train.sort();
    val.sort();
    test.sort();
    Ok(Split {
        seed: spec.seed,
        train,
        val,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(n: usize) -> Vec<BatteryRecord> {
        (0..n)
            .map(|i| BatteryRecord {
                id: format!("b{i:03}"),
                nominal_capacity: 1.1,
                cycle_life: Some(500),
                cycles: vec![],
            })
            .collect()
    }

    #[test]
    fn sizes_for_124_batteries() {
        let s = SplitSpec::for_size(124, 0).unwrap();
        assert_eq!((s.n_train, s.n_val, s.n_test), (79, 25, 20));
    }

    #[test]
    fn small_sizes_are_non_empty() {
        for n in 3..40 {
            let s = SplitSpec::for_size(n, 0).unwrap();
            assert_eq!(s.total(), n);
            assert!(
                s.n_train >= 1 && s.n_val >= 1 && s.n_test >= 1,
                "{n}: {s:?}"
            );
        }
        assert!(SplitSpec::for_size(2, 0).is_err());
    }

    #[test]
    fn partition_is_exhaustive_disjoint_and_seeded() {
        let recs = records(124);
        let spec = SplitSpec::for_size(124, 9).unwrap();
        let a = split(&recs, &spec).unwrap();
        assert_eq!(a, split(&recs, &spec).unwrap());
        let mut all: Vec<&String> = Part::ALL.iter().flat_map(|&p| a.ids(p)).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 124);
        let other = split(&recs, &SplitSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(a, other);
        let mut rev = recs.clone();
        rev.reverse();
        assert_eq!(a, split(&rev, &spec).unwrap());
    }

    #[test]
    fn too_few_records() {
        let spec = SplitSpec {
            n_train: 1,
            n_val: 1,
            n_test: 0,
            seed: 0,
        };
        assert!(split(&records(2), &spec).is_err());
    }
}

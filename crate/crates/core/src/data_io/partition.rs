use rand::seq::SliceRandom;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng;

/// Stream id reserved for the partition shuffle.
const SHUFFLE_STREAM: u64 = 0x5041_5254;

/// An `M x L` split of a parent dataset, by example position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partitioning {
    partitions: Vec<Vec<usize>>,
    dropped: Vec<usize>,
    seed: u64,
}

impl Partitioning {
    /// Builds a partitioning from explicit index lists (all of equal length).
    pub fn from_lists(partitions: Vec<Vec<usize>>, parent_len: usize, seed: u64) -> Result<Self> {
        let Some(first) = partitions.first() else {
            return Err(Error::invalid("at least one partition is required"));
        };
        let l = first.len();
        let mut seen = vec![false; parent_len];
        for list in &partitions {
            if list.len() != l {
                return Err(Error::contract("partitions must all have the same length"));
            }
            for &i in list {
                if i >= parent_len || seen[i] {
                    return Err(Error::contract(format!(
                        "index {i} is out of range or listed twice"
                    )));
                }
                seen[i] = true;
            }
        }
        let dropped = (0..parent_len).filter(|&i| !seen[i]).collect();
        Ok(Self {
            partitions,
            dropped,
            seed,
        })
    }

    pub fn num_partitions(&self) -> usize {
        self.partitions.len()
    }

    /// Examples per partition (`L`).
    pub fn partition_size(&self) -> usize {
        self.partitions[0].len()
    }

    /// `M * L`.
    pub fn total(&self) -> usize {
        self.num_partitions() * self.partition_size()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn partitions(&self) -> &[Vec<usize>] {
        &self.partitions
    }

    pub fn indices(&self, m: usize) -> &[usize] {
        &self.partitions[m]
    }

    /// Parent indices left out because `n` was not a multiple of `M`.
    pub fn dropped(&self) -> &[usize] {
        &self.dropped
    }

    /// Parent position of example `(m, l)`.
    pub fn global_index(&self, m: usize, l: usize) -> usize {
        self.partitions[m][l]
    }

    /// Parent position of the last example of the last partition.
    pub fn last_index(&self) -> usize {
        *self.partitions.last().and_then(|p| p.last()).expect("nonempty")
    }

    pub fn subset(&self, dataset: &LabeledDataset, m: usize) -> LabeledDataset {
        dataset.subset(&self.partitions[m])
    }

    /// The partitioned sample `S_1 ∪ ... ∪ S_M`, in partition order.
    pub fn union(&self, dataset: &LabeledDataset) -> LabeledDataset {
        let all: Vec<usize> = self.partitions.iter().flatten().copied().collect();
        dataset.subset(&all)
    }
}

/// Shuffles example positions (Fisher-Yates on a seeded ChaCha stream) and
/// deals them into `m` lists of `floor(n / m)`. The remainder is dropped
/// and reported through [`Partitioning::dropped`].
pub fn partition(dataset: &LabeledDataset, m: usize, seed: u64) -> Result<Partitioning> {
    let n = dataset.len();
    if m == 0 {
        return Err(Error::invalid("number of partitions must be at least 1"));
    }
    if m > n {
        return Err(Error::invalid(format!(
            "cannot split {n} examples into {m} partitions"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, SHUFFLE_STREAM));
    let l = n / m;
    let partitions = order[..m * l].chunks(l).map(|c| c.to_vec()).collect();
    let mut dropped = order[m * l..].to_vec();
    dropped.sort_unstable();
    Ok(Partitioning {
        partitions,
        dropped,
        seed,
    })
}

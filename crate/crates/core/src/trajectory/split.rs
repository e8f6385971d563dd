use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use super::generate::Trajectory;
use crate::error::{Error, Result};
use crate::seed::{self, Domain};

/// Trajectories partitioned by group so no group straddles two splits.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Split {
    pub train: Vec<Trajectory>,
    pub val: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
}

pub fn group_ids(trajs: &[Trajectory]) -> BTreeSet<usize> {
    trajs.iter().map(|t| t.group_id).collect()
}

impl Split {
    pub fn train_groups(&self) -> BTreeSet<usize> {
        group_ids(&self.train)
    }
    pub fn val_groups(&self) -> BTreeSet<usize> {
        group_ids(&self.val)
    }
    pub fn test_groups(&self) -> BTreeSet<usize> {
        group_ids(&self.test)
    }

    pub fn is_disjoint(&self) -> bool {
        let (a, b, c) = (self.train_groups(), self.val_groups(), self.test_groups());
        a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c)
    }
}

/// Shuffles the distinct group ids with a seeded stream and deals them into
/// train/validation/test in proportion to `ratios`.
pub fn split_groups(trajs: &[Trajectory], ratios: [f64; 3], seed: u64) -> Result<Split> {
    if ratios.iter().any(|&r| !(r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios must be positive and sum to 1, got {ratios:?}"
        )));
    }
    let mut groups: Vec<usize> = group_ids(trajs).into_iter().collect();
    let n = groups.len();
    if n < 3 {
        return Err(Error::Config(format!("{n} trajectory groups cannot fill 3 splits")));
    }
    groups.shuffle(&mut seed::rng(seed, Domain::Split, &[]));

    let mut n_train = ((ratios[0] * n as f64).round() as usize).clamp(1, n - 2);
    let mut n_val = ((ratios[1] * n as f64).round() as usize).max(1);
    if n_train + n_val > n - 1 {
        n_val = (n - 1 - n_train).max(1);
        n_train = n - 1 - n_val;
    }
    let train: BTreeSet<usize> = groups[..n_train].iter().copied().collect();
    let val: BTreeSet<usize> = groups[n_train..n_train + n_val].iter().copied().collect();

    let mut split = Split::default();
    for t in trajs {
        if train.contains(&t.group_id) {
            split.train.push(t.clone());
        } else if val.contains(&t.group_id) {
            split.val.push(t.clone());
        } else {
            split.test.push(t.clone());
        }
    }
    Ok(split)
}

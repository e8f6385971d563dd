use std::collections::BTreeSet;

use crate::channel::Point;
use crate::error::{Error, Result};
use crate::trajectory::SequenceSample;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Percentile by linear interpolation between order statistics at
/// zero-based rank `(n − 1)·q/100`.
pub fn percentile(errors: &[f64], q: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::Domain("percentile of an empty set".into()));
    }
    if !(q > 0.0 && q < 100.0) {
        return Err(Error::Domain(format!("percentile {q} not in (0, 100)")));
    }
    let mut v = errors.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (v.len() - 1) as f64 * q / 100.0;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Ok(v[lo] + (rank - lo as f64) * (v[hi] - v[lo]))
}

/// Naive predictor: the last observed position.
pub fn persistence_baseline(observed: &[Point]) -> Result<Point> {
    observed
        .last()
        .copied()
        .ok_or_else(|| Error::Domain("empty observation window".into()))
}

/// Refuses any test sample whose group was used for training.
pub fn check_split_hygiene(test: &[SequenceSample], train_groups: &BTreeSet<usize>) -> Result<()> {
    if test.is_empty() {
        return Err(Error::Config("empty test set".into()));
    }
    match test.iter().find(|s| train_groups.contains(&s.group_id)) {
        Some(s) => Err(Error::Config(format!(
            "test sample from trajectory {} belongs to training group {}",
            s.traj_id, s.group_id
        ))),
        None => Ok(()),
    }
}

/// Average and 95th-percentile of per-sample errors.
pub fn summarize(errors: &[f64]) -> Result<(f64, f64)> {
    if errors.is_empty() {
        return Err(Error::Config("no errors to summarize".into()));
    }
    Ok((mean(errors), percentile(errors, 95.0)?))
}

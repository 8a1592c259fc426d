use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    #[serde(default)]
    pub stratified: bool,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            train_fraction: 0.8,
            seed,
            stratified: false,
        }
    }
}

/// Sorted train and test row indices that partition `0..n_rows`.
///
/// The train side gets `round(train_fraction * n_rows)` rows. Stratified
/// mode allocates that total across classes by largest remainder, so each
/// class is within one row of its proportional share.
pub fn split(n_rows: usize, spec: &SplitSpec, labels: Option<&[String]>) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must be in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    if n_rows < 5 {
        return Err(Error::InvalidInput(format!("need at least 5 rows to split, got {n_rows}")));
    }
    let n_train = (spec.train_fraction * n_rows as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut train = if spec.stratified {
        let labels = labels.ok_or_else(|| Error::InvalidInput("stratified split needs labels".into()))?;
        if labels.len() != n_rows {
            return Err(Error::InvalidInput("label count differs from row count".into()));
        }
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, l) in labels.iter().enumerate() {
            groups.entry(l.as_str()).or_default().push(i);
        }
        if let Some((l, _)) = groups.iter().find(|(_, rows)| rows.len() < 2) {
            return Err(Error::InvalidInput(format!("class `{l}` has fewer than 2 rows")));
        }
        let shares: Vec<f64> = groups
            .values()
            .map(|rows| rows.len() as f64 * n_train as f64 / n_rows as f64)
            .collect();
        let mut quota: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
        let mut order: Vec<usize> = (0..shares.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = shares[a] - shares[a].floor();
            let rb = shares[b] - shares[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let mut left = n_train - quota.iter().sum::<usize>();
        for &g in order.iter().cycle() {
            if left == 0 {
                break;
            }
            quota[g] += 1;
            left -= 1;
        }
        let mut train = Vec::with_capacity(n_train);
        for (rows, q) in groups.into_values().zip(quota) {
            let mut rows = rows;
            rows.shuffle(&mut rng);
            train.extend_from_slice(&rows[..q]);
        }
        train
    } else {
        let mut rows: Vec<usize> = (0..n_rows).collect();
        rows.shuffle(&mut rng);
        rows.truncate(n_train);
        rows
    };
    train.sort_unstable();
    let mut in_train = vec![false; n_rows];
    for &i in &train {
        in_train[i] = true;
    }
    let test = (0..n_rows).filter(|&i| !in_train[i]).collect();
    Ok((train, test))
}

//! Per-voter feature subset selection: the fixed 0/1 subset-connection
//! layer of each voter, chosen either as the largest-variance transformed
//! features (every voter identical) or by Smart Random Selection, a
//! sequential draw without replacement where a feature's probability is
//! proportional to its variance among the features still available.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::derive_rng;

/// One voter's selected feature indices, distinct and sorted ascending.
/// Equivalent to an n x N matrix with a single 1 per row and zero biases;
/// the voter consumes the selected features in index order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubsetMask {
    indices: Vec<usize>,
}

impl SubsetMask {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        SubsetMask { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub(crate) fn validate(&self, dim: usize) -> Result<()> {
        if self.indices.is_empty() {
            return Err(Error::validation("subset mask", "empty"));
        }
        if self.indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation(
                "subset mask",
                "indices must be strictly ascending",
            ));
        }
        if *self.indices.last().unwrap() >= dim {
            return Err(Error::validation(
                "subset mask",
                format!("index out of range for {dim} features"),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Every voter sees all transformed features (and no PCA is involved
    /// upstream); subset_size is ignored.
    All,
    /// Every voter gets the same top-variance subset.
    LargestVariance,
    /// Smart Random Selection with an independent stream per voter.
    Srs,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub mode: SelectionMode,
    pub subset_size: usize,
    pub num_voters: usize,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            mode: SelectionMode::All,
            subset_size: 20,
            num_voters: 1,
            seed: 0,
        }
    }
}

fn check_args(n: usize, variances: &[f64]) -> Result<()> {
    if n == 0 || n > variances.len() {
        return Err(Error::validation(
            "subset size",
            format!("need 1 <= n <= {}, got {n}", variances.len()),
        ));
    }
    if variances.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::validation(
            "variances",
            "must be finite and nonnegative",
        ));
    }
    Ok(())
}

/// Indices of the `n` largest variances; ties broken toward the lower
/// index, result sorted ascending.
pub fn select_largest(n: usize, variances: &[f64]) -> Result<Vec<usize>> {
    check_args(n, variances)?;
    let mut order: Vec<usize> = (0..variances.len()).collect();
    order.sort_by(|&a, &b| variances[b].partial_cmp(&variances[a]).unwrap().then(a.cmp(&b)));
    let mut picked: Vec<usize> = order[..n].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Smart Random Selection: draw `n` distinct indices sequentially, each
/// step picking index i from the remaining set T with probability
/// var[i] / sum of var over T. When every remaining variance is zero the
/// draw falls back to uniform (the proportional rule is 0/0 there); a
/// zero-variance feature is never picked while a positive one remains.
pub fn srs_select<R: Rng>(n: usize, variances: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    check_args(n, variances)?;
    let mut remaining: Vec<usize> = (0..variances.len()).collect();
    let mut selected = Vec::with_capacity(n);
    for _ in 0..n {
        let total: f64 = remaining.iter().map(|&i| variances[i]).sum();
        let pos = if total > 0.0 {
            let u = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut hit = None;
            for (pos, &i) in remaining.iter().enumerate() {
                acc += variances[i];
                if u < acc {
                    hit = Some(pos);
                    break;
                }
            }
            // Float-tail guard: fall back to the last positive-variance item.
            hit.unwrap_or_else(|| {
                remaining
                    .iter()
                    .rposition(|&i| variances[i] > 0.0)
                    .expect("total > 0 implies a positive entry")
            })
        } else {
            rng.gen_range(0..remaining.len())
        };
        selected.push(remaining.remove(pos));
    }
    selected.sort_unstable();
    Ok(selected)
}

/// Build the per-voter masks for a selection config. Deterministic in
/// `cfg.seed`; SRS voters use independent derived streams, so growing the
/// ensemble never changes earlier voters' subsets.
pub fn build_masks(cfg: &SelectionConfig, variances: &[f64]) -> Result<Vec<SubsetMask>> {
    if cfg.num_voters == 0 {
        return Err(Error::Config("num_voters must be >= 1".into()));
    }
    let dim = variances.len();
    match cfg.mode {
        SelectionMode::All => {
            let all = SubsetMask::new((0..dim).collect());
            Ok(vec![all; cfg.num_voters])
        }
        SelectionMode::LargestVariance => {
            let mask = SubsetMask::new(select_largest(cfg.subset_size, variances)?);
            Ok(vec![mask; cfg.num_voters])
        }
        SelectionMode::Srs => (0..cfg.num_voters)
            .map(|v| {
                let mut rng = derive_rng(cfg.seed, "subset/srs", v as u64);
                Ok(SubsetMask::new(srs_select(
                    cfg.subset_size,
                    variances,
                    &mut rng,
                )?))
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn largest_variance_oracles() {
        assert_eq!(select_largest(2, &[5.0, 1.0, 3.0]).unwrap(), [0, 2]);
        assert_eq!(select_largest(1, &[2.0, 2.0, 1.0]).unwrap(), [0]);
        assert_eq!(select_largest(3, &[1.0, 2.0, 3.0]).unwrap(), [0, 1, 2]);
        assert!(select_largest(4, &[1.0, 2.0, 3.0]).is_err());
        assert!(select_largest(0, &[1.0]).is_err());
    }

    #[test]
    fn srs_takes_everything_when_n_equals_dim() {
        let mut rng = derive_rng(1, "test", 0);
        let picked = srs_select(4, &[0.0, 3.0, 1.0, 0.0], &mut rng).unwrap();
        assert_eq!(picked, [0, 1, 2, 3]);
    }

    #[test]
    fn srs_first_draw_frequencies_follow_variances() {
        let variances = [5.0, 3.0, 1.5, 0.4, 0.1];
        let total: f64 = variances.iter().sum();
        let mut rng = derive_rng(99, "test/srs-freq", 0);
        let mut counts = [0usize; 5];
        let trials = 10_000;
        for _ in 0..trials {
            let picked = srs_select(1, &variances, &mut rng).unwrap();
            counts[picked[0]] += 1;
        }
        for (i, &v) in variances.iter().enumerate() {
            let share = v / total;
            if share >= 0.05 {
                let freq = counts[i] as f64 / trials as f64;
                let rel = (freq - share).abs() / share;
                assert!(rel < 0.05, "feature {i}: freq {freq} vs share {share}");
            }
        }
    }

    #[test]
    fn srs_pair_probability_matches_hand_enumeration() {
        // var = [2,1,1], n = 2: P({0,1}) = (2/4)(1/2) + (1/4)(2/3) = 5/12.
        let mut rng = derive_rng(7, "test/srs-pair", 0);
        let trials = 50_000;
        let mut hits = 0;
        for _ in 0..trials {
            if srs_select(2, &[2.0, 1.0, 1.0], &mut rng).unwrap() == [0, 1] {
                hits += 1;
            }
        }
        let p = hits as f64 / trials as f64;
        assert!((p - 5.0 / 12.0).abs() <= 0.02, "P = {p}");
    }

    #[test]
    fn zero_variance_features_wait_their_turn() {
        let variances = [0.0, 2.0, 0.0, 1.0];
        let mut rng = derive_rng(3, "test/srs-zero", 0);
        for _ in 0..500 {
            let two = srs_select(2, &variances, &mut rng).unwrap();
            assert_eq!(two, [1, 3]);
            // With n = 3 the third pick must use the uniform fallback.
            let three = srs_select(3, &variances, &mut rng).unwrap();
            assert!(three.contains(&1) && three.contains(&3));
        }
    }

    #[test]
    fn masks_modes_and_voter_stability() {
        let variances: Vec<f64> = (0..30).map(|i| 1.0 + (i as f64 * 0.7).sin().abs()).collect();

        let all = build_masks(
            &SelectionConfig {
                mode: SelectionMode::All,
                subset_size: 5,
                num_voters: 3,
                seed: 1,
            },
            &variances,
        )
        .unwrap();
        assert_eq!(all.len(), 3);
        assert!(all.iter().all(|m| m.indices() == (0..30).collect::<Vec<_>>()));

        let lv = build_masks(
            &SelectionConfig {
                mode: SelectionMode::LargestVariance,
                subset_size: 5,
                num_voters: 4,
                seed: 1,
            },
            &variances,
        )
        .unwrap();
        assert!(lv.windows(2).all(|w| w[0] == w[1]));

        let cfg = SelectionConfig {
            mode: SelectionMode::Srs,
            subset_size: 5,
            num_voters: 10,
            seed: 42,
        };
        let srs = build_masks(&cfg, &variances).unwrap();
        let distinct: std::collections::HashSet<_> = srs.iter().collect();
        assert!(distinct.len() >= 2, "SRS masks should differ across voters");
        // Deterministic, and earlier voters unaffected by ensemble growth.
        assert_eq!(build_masks(&cfg, &variances).unwrap(), srs);
        let bigger = build_masks(
            &SelectionConfig {
                num_voters: 20,
                ..cfg
            },
            &variances,
        )
        .unwrap();
        assert_eq!(&bigger[..10], &srs[..]);
    }

    #[test]
    fn mask_validation_catches_corruption() {
        assert!(SubsetMask::new(vec![0, 2, 1]).validate(30).is_ok());
        assert!(SubsetMask::new(vec![3, 3]).validate(30).is_err());
        assert!(SubsetMask::new(vec![40]).validate(30).is_err());
        assert!(SubsetMask::new(vec![]).validate(30).is_err());
    }

    #[test]
    fn srs_distribution_is_reproducible_across_runs() {
        // Frozen draw sequence: any change to the SRS sampling order or the
        // stream derivation shows up here.
        let variances = [4.0, 2.0, 1.0, 1.0, 0.5];
        let mut rng = derive_rng(1234, "test/srs-frozen", 0);
        let mut picks: HashMap<Vec<usize>, usize> = HashMap::new();
        for _ in 0..8 {
            *picks
                .entry(srs_select(2, &variances, &mut rng).unwrap())
                .or_default() += 1;
        }
        let total: usize = picks.values().sum();
        assert_eq!(total, 8);
        assert!(picks.keys().all(|k| k.len() == 2 && k[0] < k[1]));
    }
}

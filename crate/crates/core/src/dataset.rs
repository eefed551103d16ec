//! Train/validation/test partitioning and feature normalization.
//!
//! Samples are split per design: a deterministic shuffle keyed by
//! (seed, design id), then floor(train_frac * n) samples to training,
//! floor(valid_frac * n) to validation, the remainder to that design's test
//! set. Holdout designs contribute all samples to testing. Training and
//! validation sets are pooled across designs; test sets stay per-design.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Sample;
use crate::seeding::derive_rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub valid_frac: f64,
    pub test_frac: f64,
    /// Designs whose samples all go to testing (cross-design generalization).
    pub holdout_designs: Vec<String>,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.2,
            valid_frac: 0.2,
            test_frac: 0.6,
            holdout_designs: Vec::new(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub train: Vec<Sample>,
    pub valid: Vec<Sample>,
    pub tests: BTreeMap<String, Vec<Sample>>,
}

/// Per-feature mean and population standard deviation, fitted on training
/// samples only. Constructible solely through [`fit_norm`] (and model
/// deserialization), so validation/test data can never leak into the stats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl NormStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() {
            return Err(Error::Dimension(format!(
                "norm stats mean/std lengths differ: {} vs {}",
                self.mean.len(),
                self.std.len()
            )));
        }
        if self
            .mean
            .iter()
            .chain(self.std.iter())
            .any(|v| !v.is_finite())
            || self.std.iter().any(|&s| s < 0.0)
        {
            return Err(Error::validation("norm stats", "non-finite or negative"));
        }
        Ok(())
    }
}

/// Partition samples according to `spec`. Deterministic in (samples, spec).
pub fn split(samples: &[Sample], spec: &SplitSpec) -> Result<SplitResult> {
    let frac_sum = spec.train_frac + spec.valid_frac + spec.test_frac;
    if (frac_sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions sum to {frac_sum}, expected 1"
        )));
    }
    if [spec.train_frac, spec.valid_frac, spec.test_frac]
        .iter()
        .any(|f| !(0.0..=1.0).contains(f))
    {
        return Err(Error::Config("split fractions must be in [0,1]".into()));
    }

    // Group per design, keeping first-appearance order for pooling.
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, s) in samples.iter().enumerate() {
        groups
            .entry(s.design_id.as_str())
            .or_insert_with(|| {
                order.push(s.design_id.as_str());
                Vec::new()
            })
            .push(i);
    }

    let mut result = SplitResult {
        train: Vec::new(),
        valid: Vec::new(),
        tests: BTreeMap::new(),
    };
    for design in order {
        let mut idx = groups.remove(design).expect("grouped");
        let test_bucket = result.tests.entry(design.to_string()).or_default();
        if spec.holdout_designs.iter().any(|d| d == design) {
            test_bucket.extend(idx.iter().map(|&i| samples[i].clone()));
            continue;
        }
        let mut rng = derive_rng(spec.seed, &format!("split/{design}"), 0);
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_train = (spec.train_frac * n as f64).floor() as usize;
        let n_valid = (spec.valid_frac * n as f64).floor() as usize;
        result
            .train
            .extend(idx[..n_train].iter().map(|&i| samples[i].clone()));
        result
            .valid
            .extend(idx[n_train..n_train + n_valid].iter().map(|&i| samples[i].clone()));
        test_bucket.extend(idx[n_train + n_valid..].iter().map(|&i| samples[i].clone()));
    }
    Ok(result)
}

/// Fit per-feature mean and population std over training samples.
pub fn fit_norm(train: &[Sample]) -> Result<NormStats> {
    let first = train
        .first()
        .ok_or_else(|| Error::validation("training set", "empty"))?;
    let dim = first.features.len();
    let n = train.len() as f64;
    let mut mean = vec![0.0f64; dim];
    for s in train {
        if s.features.len() != dim {
            return Err(Error::Dimension(format!(
                "feature length {} != {}",
                s.features.len(),
                dim
            )));
        }
        for (m, &v) in mean.iter_mut().zip(&s.features.values) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0f64; dim];
    for s in train {
        for ((vr, &m), &v) in var.iter_mut().zip(&mean).zip(&s.features.values) {
            let d = v - m;
            *vr += d * d;
        }
    }
    let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
    Ok(NormStats { mean, std })
}

/// Normalize samples with training statistics: (x - mean) / std, with
/// zero-variance columns mapped to 0. Rows of the result are samples.
pub fn apply_norm(stats: &NormStats, samples: &[Sample]) -> Result<DMatrix<f64>> {
    let dim = stats.dim();
    let mut out = DMatrix::zeros(samples.len(), dim);
    for (i, s) in samples.iter().enumerate() {
        if s.features.len() != dim {
            return Err(Error::Dimension(format!(
                "sample feature length {} != norm stats dimension {dim}",
                s.features.len()
            )));
        }
        for (j, &v) in s.features.values.iter().enumerate() {
            out[(i, j)] = if stats.std[j] == 0.0 {
                0.0
            } else {
                (v - stats.mean[j]) / stats.std[j]
            };
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Split manifests: exact split reuse across runs.

type SampleKey = (String, usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<SampleKey>,
    pub valid: Vec<SampleKey>,
    pub tests: BTreeMap<String, Vec<SampleKey>>,
}

fn key_of(s: &Sample) -> SampleKey {
    (s.design_id.clone(), s.col, s.row)
}

impl SplitManifest {
    pub fn from_result(result: &SplitResult) -> Self {
        SplitManifest {
            train: result.train.iter().map(key_of).collect(),
            valid: result.valid.iter().map(key_of).collect(),
            tests: result
                .tests
                .iter()
                .map(|(d, ss)| (d.clone(), ss.iter().map(key_of).collect()))
                .collect(),
        }
    }
}

pub fn write_manifest(manifest: &SplitManifest) -> Vec<u8> {
    let value = serde_json::to_value(manifest).expect("serializable");
    let mut bytes = serde_json::to_vec(&value).expect("serializable");
    bytes.push(b'\n');
    bytes
}

pub fn parse_manifest(bytes: &[u8]) -> Result<SplitManifest> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

/// Reassemble a split from its manifest. Every key must resolve to a sample;
/// samples not listed in the manifest are ignored.
pub fn apply_manifest(samples: &[Sample], manifest: &SplitManifest) -> Result<SplitResult> {
    let by_key: HashMap<SampleKey, &Sample> =
        samples.iter().map(|s| (key_of(s), s)).collect();
    let resolve = |keys: &[SampleKey]| -> Result<Vec<Sample>> {
        keys.iter()
            .map(|k| {
                by_key.get(k).map(|&s| s.clone()).ok_or_else(|| {
                    Error::validation(
                        format!("sample ({}, {}, {})", k.0, k.1, k.2),
                        "listed in manifest but absent from sample input",
                    )
                })
            })
            .collect()
    };
    Ok(SplitResult {
        train: resolve(&manifest.train)?,
        valid: resolve(&manifest.valid)?,
        tests: manifest
            .tests
            .iter()
            .map(|(d, keys)| Ok((d.clone(), resolve(keys)?)))
            .collect::<Result<_>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use rand::Rng;

    fn mk(design: &str, col: usize, row: usize, features: Vec<f64>) -> Sample {
        Sample {
            design_id: design.into(),
            col,
            row,
            features: FeatureVector { values: features },
            label: false,
        }
    }

    fn design(name: &str, n: usize) -> Vec<Sample> {
        (0..n).map(|i| mk(name, i % 100, i / 100, vec![i as f64])).collect()
    }

    #[test]
    fn split_counts_match_published_rows() {
        let samples = design("des_perf_1", 5476);
        let r = split(&samples, &SplitSpec::default()).unwrap();
        assert_eq!(r.train.len(), 1095);
        assert_eq!(r.valid.len(), 1095);
        assert_eq!(r.tests["des_perf_1"].len(), 3286);

        let holdout = design("fft_b", 6506);
        let spec = SplitSpec {
            holdout_designs: vec!["fft_b".into()],
            ..SplitSpec::default()
        };
        let r = split(&holdout, &spec).unwrap();
        assert_eq!((r.train.len(), r.valid.len()), (0, 0));
        assert_eq!(r.tests["fft_b"].len(), 6506);

        let ten = design("t", 10);
        let r = split(&ten, &SplitSpec::default()).unwrap();
        assert_eq!(
            (r.train.len(), r.valid.len(), r.tests["t"].len()),
            (2, 2, 6)
        );
    }

    #[test]
    fn split_is_deterministic_disjoint_and_conserving() {
        let mut samples = design("a", 103);
        samples.extend(design("b", 57));
        let spec = SplitSpec {
            seed: 9,
            ..SplitSpec::default()
        };
        let r1 = split(&samples, &spec).unwrap();
        let r2 = split(&samples, &spec).unwrap();
        assert_eq!(r1, r2);

        let mut seen = std::collections::HashSet::new();
        let all = r1
            .train
            .iter()
            .chain(&r1.valid)
            .chain(r1.tests.values().flatten());
        let mut count = 0;
        for s in all {
            assert!(seen.insert((s.design_id.clone(), s.col, s.row)));
            count += 1;
        }
        assert_eq!(count, samples.len());

        // A different seed shuffles differently.
        let r3 = split(&samples, &SplitSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(r1.train, r3.train);
    }

    #[test]
    fn bad_fractions_are_rejected() {
        let spec = SplitSpec {
            train_frac: 0.5,
            valid_frac: 0.5,
            test_frac: 0.5,
            ..SplitSpec::default()
        };
        assert!(matches!(
            split(&design("d", 4), &spec),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn norm_stats_oracles() {
        let train = vec![mk("d", 0, 0, vec![1.0, 5.0]), mk("d", 1, 0, vec![3.0, 5.0])];
        let stats = fit_norm(&train).unwrap();
        assert_eq!(stats.mean(), &[2.0, 5.0]);
        assert_eq!(stats.std(), &[1.0, 0.0]); // population std; constant -> 0

        let x = apply_norm(&stats, &train).unwrap();
        assert_eq!(x[(0, 0)], -1.0);
        assert_eq!(x[(1, 0)], 1.0);
        // Zero-variance column maps to 0 for any input value.
        let probe = vec![mk("d", 2, 0, vec![2.0, 99.0])];
        let y = apply_norm(&stats, &probe).unwrap();
        assert_eq!((y[(0, 0)], y[(0, 1)]), (0.0, 0.0));

        assert!(fit_norm(&[]).is_err());
    }

    #[test]
    fn normalized_training_columns_have_zero_mean_unit_std() {
        let mut rng = crate::seeding::derive_rng(4, "test/norm", 0);
        let train: Vec<Sample> = (0..100)
            .map(|i| {
                mk(
                    "d",
                    i,
                    0,
                    (0..20).map(|_| rng.gen_range(-3.0..9.0)).collect(),
                )
            })
            .collect();
        let stats = fit_norm(&train).unwrap();
        let x = apply_norm(&stats, &train).unwrap();
        for j in 0..20 {
            let col = x.column(j);
            let mean = col.sum() / 100.0;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 100.0;
            assert!(mean.abs() < 1e-9, "column {j} mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-9, "column {j} std");
        }
    }

    #[test]
    fn validation_normalized_with_train_stats_differs_from_self_norm() {
        let mut rng = crate::seeding::derive_rng(8, "test/norm2", 0);
        let train: Vec<Sample> = (0..50)
            .map(|i| mk("d", i, 0, vec![rng.gen_range(0.0..1.0)]))
            .collect();
        let valid: Vec<Sample> = (0..50)
            .map(|i| mk("d", i, 1, vec![rng.gen_range(5.0..9.0)]))
            .collect();
        let with_train = apply_norm(&fit_norm(&train).unwrap(), &valid).unwrap();
        let with_self = apply_norm(&fit_norm(&valid).unwrap(), &valid).unwrap();
        assert_ne!(with_train, with_self);
    }

    #[test]
    fn manifest_roundtrip_reproduces_split() {
        let mut samples = design("a", 41);
        samples.extend(design("b", 13));
        let spec = SplitSpec {
            holdout_designs: vec!["b".into()],
            seed: 3,
            ..SplitSpec::default()
        };
        let r = split(&samples, &spec).unwrap();
        let manifest = SplitManifest::from_result(&r);
        let bytes = write_manifest(&manifest);
        assert_eq!(bytes, write_manifest(&parse_manifest(&bytes).unwrap()));
        let rebuilt = apply_manifest(&samples, &parse_manifest(&bytes).unwrap()).unwrap();
        assert_eq!(rebuilt, r);

        // A manifest key with no matching sample is an error.
        let mut broken = manifest.clone();
        broken.train.push(("ghost".into(), 0, 0));
        assert!(apply_manifest(&samples, &broken).is_err());
    }
}

//! The full soft-voting ensemble: normalization, a fixed PCA transform,
//! per-voter subset-connection masks, independently trained voter networks,
//! and a constant-sum voting layer. Includes JSON model serialization.
//!
//! Every stage before the voters is fitted once on the training set and then
//! frozen; voters share no trainable parameters, so they train as `m`
//! independent jobs and the result is identical whether they run
//! sequentially or concurrently.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{apply_norm, fit_norm, NormStats};
use crate::error::{Error, Result};
use crate::features::Sample;
use crate::layout::{canonical_json, deserialize_doc};
use crate::pca::{pca_fit, pca_transform, PcaModel};
use crate::seeding::derive_rng;
use crate::subset::{build_masks, SelectionConfig, SubsetMask};
use crate::voter::{sigmoid, train_voter, LossConfig, VoterHyper, VoterNet};

/// Format version of serialized model files.
pub const MODEL_VERSION: u32 = 1;

/// Full training configuration for an ensemble run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub selection: SelectionConfig,
    pub loss: LossConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            epochs: 50,
            batch_size: 32,
            hidden: 20,
            selection: SelectionConfig::default(),
            loss: LossConfig::default(),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub config: TrainConfig,
    pub feature_dim: usize,
    pub train_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub norm: NormStats,
    pub pca: PcaModel,
    pub masks: Vec<SubsetMask>,
    pub voters: Vec<VoterNet>,
    pub meta: ModelMeta,
}

impl EnsembleModel {
    pub fn num_voters(&self) -> usize {
        self.voters.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.norm.dim()
    }

    fn validate(&self) -> Result<()> {
        if self.voters.is_empty() || self.voters.len() != self.masks.len() {
            return Err(Error::validation(
                "model",
                format!(
                    "{} voters for {} masks",
                    self.voters.len(),
                    self.masks.len()
                ),
            ));
        }
        self.norm.validate()?;
        if self.norm.dim() != self.pca.dim() {
            return Err(Error::Dimension(format!(
                "norm dim {} != pca dim {}",
                self.norm.dim(),
                self.pca.dim()
            )));
        }
        for (i, (mask, voter)) in self.masks.iter().zip(&self.voters).enumerate() {
            mask.validate(self.pca.dim())?;
            voter.validate()?;
            if voter.input_dim() != mask.len() {
                return Err(Error::Dimension(format!(
                    "voter {i} expects {} inputs but its mask selects {}",
                    voter.input_dim(),
                    mask.len()
                )));
            }
        }
        if self.meta.feature_dim != self.norm.dim() {
            return Err(Error::validation(
                "model",
                "meta.feature_dim disagrees with normalization stats",
            ));
        }
        Ok(())
    }
}

/// Gather the masked columns of `t` (samples x features) into a
/// voter-input matrix with one sample per column.
fn gather_masked(t: &DMatrix<f64>, mask: &SubsetMask) -> DMatrix<f64> {
    let n = t.nrows();
    let mut xt = DMatrix::zeros(mask.len(), n);
    for (out, &feat) in mask.indices().iter().enumerate() {
        for s in 0..n {
            xt[(out, s)] = t[(s, feat)];
        }
    }
    xt
}

/// Batched voter output probabilities, one sample per column of `xt`.
fn voter_probs(voter: &VoterNet, xt: &DMatrix<f64>) -> Vec<f64> {
    let mut z1 = &voter.w1 * xt;
    for mut col in z1.column_iter_mut() {
        col += &voter.b1;
    }
    let h = z1.map(|v| v.max(0.0));
    let z2 = h.tr_mul(&voter.w2).add_scalar(voter.b2);
    z2.iter().map(|&z| sigmoid(z)).collect()
}

/// Train the full ensemble: fit normalization on the training samples, fit
/// PCA on the normalized features, build the subset masks from the PCA
/// variances, then train every voter on its masked transformed features
/// against the same labels. Deterministic in `cfg.seed` and
/// `cfg.selection.seed`.
pub fn train(train_samples: &[Sample], cfg: &TrainConfig) -> Result<EnsembleModel> {
    if train_samples.len() < 2 {
        return Err(Error::validation(
            "training set",
            "need at least 2 samples",
        ));
    }
    let norm = fit_norm(train_samples)?;
    let x = apply_norm(&norm, train_samples)?;
    let pca = pca_fit(&x)?;
    let t = pca_transform(&pca, &x)?;
    let masks = build_masks(&cfg.selection, pca.variances())?;
    let labels: Vec<f64> = train_samples.iter().map(|s| f64::from(s.label)).collect();
    let hyper = VoterHyper {
        hidden: cfg.hidden,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        loss: cfg.loss,
    };

    let voters: Vec<VoterNet> = masks
        .par_iter()
        .enumerate()
        .map(|(i, mask)| {
            let xt = gather_masked(&t, mask);
            let mut rng = derive_rng(cfg.seed, "ensemble/voter", i as u64);
            let (net, losses) = train_voter(&xt, &labels, &hyper, &mut rng)?;
            log::debug!("voter {i}: per-epoch mean loss {losses:?}");
            Ok(net)
        })
        .collect::<Result<Vec<_>>>()?;
    log::info!(
        "trained {} voters on {} samples ({} features)",
        voters.len(),
        train_samples.len(),
        norm.dim()
    );

    let model = EnsembleModel {
        meta: ModelMeta {
            config: cfg.clone(),
            feature_dim: norm.dim(),
            train_samples: train_samples.len(),
        },
        norm,
        pca,
        masks,
        voters,
    };
    model.validate()?;
    Ok(model)
}

/// Soft-voting score per sample: the sum of the voter probabilities, in
/// [0, m]. Voters are summed in index order.
pub fn predict(model: &EnsembleModel, samples: &[Sample]) -> Result<Vec<f64>> {
    let x = apply_norm(&model.norm, samples)?;
    let t = pca_transform(&model.pca, &x)?;
    let mut scores = vec![0.0; samples.len()];
    for (mask, voter) in model.masks.iter().zip(&model.voters) {
        let xt = gather_masked(&t, mask);
        for (score, p) in scores.iter_mut().zip(voter_probs(voter, &xt)) {
            *score += p;
        }
    }
    Ok(scores)
}

/// Threshold classification: positive iff score is strictly greater than
/// the threshold.
pub fn classify(scores: &[f64], threshold: f64) -> Vec<bool> {
    scores.iter().map(|&s| s > threshold).collect()
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    version: u32,
    norm: NormStats,
    pca: PcaModel,
    masks: Vec<Vec<usize>>,
    voters: Vec<VoterNet>,
    meta: ModelMeta,
}

/// Serialize a model to canonical JSON bytes.
pub fn save_model(model: &EnsembleModel) -> Vec<u8> {
    let doc = ModelDoc {
        version: MODEL_VERSION,
        norm: model.norm.clone(),
        pca: model.pca.clone(),
        masks: model
            .masks
            .iter()
            .map(|m| m.indices().to_vec())
            .collect(),
        voters: model.voters.clone(),
        meta: model.meta.clone(),
    };
    canonical_json(&doc)
}

/// Parse and fully validate a serialized model. `load_model(save_model(m))`
/// reproduces `m` exactly, including every prediction bit.
pub fn load_model(bytes: &[u8]) -> Result<EnsembleModel> {
    let doc: ModelDoc = deserialize_doc(bytes)?;
    if doc.version != MODEL_VERSION {
        return Err(Error::Config(format!(
            "unsupported model version {} (expected {MODEL_VERSION})",
            doc.version
        )));
    }
    let model = EnsembleModel {
        norm: doc.norm,
        pca: doc.pca,
        masks: doc.masks.into_iter().map(SubsetMask::new).collect(),
        voters: doc.voters,
        meta: doc.meta,
    };
    model.validate()?;
    Ok(model)
}

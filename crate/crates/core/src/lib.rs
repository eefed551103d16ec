//! Core library for DRC hotspot prediction on g-cell grids.
//!
//! Pipeline stages, in dependency order: layout data model and JSON
//! interchange ([`layout`]), synthetic layout generation ([`synth`]),
//! window feature extraction ([`features`]), dataset splitting and
//! normalization ([`dataset`]), PCA ([`pca`]), feature-subset selection
//! ([`subset`]), voter networks ([`voter`]), the soft-voting ensemble
//! ([`ensemble`]), a random-forest baseline ([`forest`]), and
//! threshold-independent evaluation ([`metrics`]).

pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod forest;
pub mod geom;
pub mod layout;
pub mod metrics;
pub mod pca;
pub mod seeding;
pub mod subset;
pub mod synth;
pub mod voter;

pub use error::{Error, Result};

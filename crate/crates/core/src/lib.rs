//! Projection of contextual word embeddings onto stereotype-content
//! dimensions, direction-prediction evaluation, group bias profiles and
//! their SVG renderings.
//!
//! The usual pipeline: load a [`StereotypeDictionary`] and an
//! [`EmbeddingStore`], build a [`PolarSpace`] from the seed poles, then
//! either [`predict_directions`] against the extended dictionary or
//! [`build_profile`] for two populations of names or terms.

pub mod dictionary;
pub mod error;
pub mod evaluation;
pub mod polar;
pub mod profile;
pub mod render;
pub mod stats;
pub mod store;
pub mod synth;

pub use dictionary::{
    pole_overlap, pole_terms, Axis, DictionaryEntry, Dimension, DimensionScheme, Direction, SchemeId,
    StereotypeDictionary, Tier,
};
pub use error::{Error, Result};
pub use evaluation::{accuracy, predict_directions, AccuracyReport, AccuracyRow, Cutoff, EvaluationOptions, PredictionSet};
pub use polar::{build_pole, build_sense_embedding, build_space, project_term, PolarProjection, PolarSpace, Solver};
pub use profile::{
    build_profile, layer_sweep, template_contexts, GroupComparison, GroupsFile, LayerBiasCurve, LayerSweep,
    PopulationKind, Profile, ProfileOptions, SweepEvaluation,
};
pub use render::{render_layer_curves, render_profile, ChartStyle, ProfileChartSpec};
pub use stats::{welch_t_test, TTest, TTestKind};
pub use store::{write_store, ContextFilter, ContextSource, EmbeddingRecord, EmbeddingStore, LayerSelector, StoreHeader};
pub use synth::SynthSpec;

/// Version string embedded in every output artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

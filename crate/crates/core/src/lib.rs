//! Convolutional and convolutional-recurrent models for predicting protein
//! binding intensities of DNA probes, with everything needed to reproduce the
//! surrounding pipeline: probe encoding, PBM data handling, training with
//! RMSProp and grid search, ranking metrics, synthetic benchmark generators,
//! and a deterministic experiment runner.

pub mod autodiff;
pub mod data;
pub mod encoding;
pub mod error;
pub mod experiment;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod seeding;
pub mod synth;
pub mod tensor;
pub mod train;

pub use autodiff::{grad_check, zero_grads, Padding, Tape, Variable};
pub use encoding::{decode, one_hot, DnaSequence, BASE_ORDER};
pub use data::{
    best_window_score, fit_array_stats, fit_stats, generate_synthetic, generate_weighted,
    load_pbm, normalize, normalize_self_fit, positive_labels, robust_threshold, write_tsv,
    FormatHints, LoadReport, NormKind, NormStats, PbmArray, Probe, SyntheticSpec,
};
pub use error::{Error, Result};
pub use experiment::{
    array_sha256, cell_summaries, materialize_arrays, run_experiment, write_json,
    write_rank_chart_csv, write_roc_csv, write_scatter_csv, CellSummary, DataSource,
    ExperimentResult, ExperimentSpec, GridChoice, ModelOutcome, Provenance,
};
pub use metrics::{
    average_ranks, rank_chart, roc, scatter_with_regression, spearman, tpr_at_fpr, RankChart,
    RocCurve, ScatterFit,
};
pub use model::{Checkpoint, Model, ModelKind, ModelSpec};
pub use synth::{
    make_positional_dataset, multi_motif_dataset, positional_intensity, positional_weight,
    PositionEffect,
};
pub use tensor::Tensor;
pub use train::{
    encode_set, full_grid, grid_search, grid_search_serial, mse, reduced_grid, rmsprop_step,
    split_train_val, train, CellResult, EncodedSet, GridOutcome, HyperParams, RmsPropState,
    TrainReport,
};

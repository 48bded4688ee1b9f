//! Synthetic data, training, evaluation, matching, configuration, and the
//! file formats behind the command-line tools.

pub mod config;
pub mod dataset;
pub mod eval;
pub mod model;
pub mod synth;
pub mod train;

use thiserror::Error;

use crate::diffcore::{ParameterStore, Tape};
use crate::got::{got_forward, MatchMode, MatchSet};
use crate::mesh::TriangleMesh;

pub use config::{ConfigError, TrainConfig};
pub use dataset::{load_dataset, pair_file_names, save_pair};
pub use eval::{evaluate, pair_metrics, EvalReport, PairReport};
pub use model::{prepare_shape, shape_features, Model, PreparedShape, Rotation};
pub use synth::{
    base_mesh, generate_synthetic_pair, BaseShape, DeformParams, ShapePairSample, SynthError,
    SynthProvenance,
};
pub use train::{train, LogEntry, TrainOutcome, TrainingLog};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("mesh error: {0}")]
    Mesh(#[from] crate::mesh::MeshError),
    #[error("graph error: {0}")]
    Hier(#[from] crate::hiergraph::HierError),
    #[error("transport error: {0}")]
    Got(#[from] crate::got::GotError),
    #[error("synthesis error: {0}")]
    Synth(#[from] synth::SynthError),
    #[error("config error: {0}")]
    Config(#[from] config::ConfigError),
    #[error("checkpoint error: {0}")]
    Checkpoint(#[from] crate::diffcore::CheckpointError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("no correspondence entry for vertex {0}")]
    MissingCorrespondence(usize),
    #[error("no usable pairs in {0}")]
    EmptyDataset(String),
    #[error("correspondence file {path} is malformed at line {line}")]
    BadCorrespondenceFile { path: String, line: usize },
    #[error("non-finite loss at epoch {epoch}, sample {sample}: L_D={l_d} L_M={l_m} L_R={l_r}")]
    NonFiniteLoss { epoch: usize, sample: usize, l_d: f64, l_m: f64, l_r: f64 },
}

/// Output of [`match_pair`]: the matches plus both prepared shapes with
/// descriptors and node features filled in for inspection or dumping.
pub struct MatchOutcome {
    pub matches: MatchSet,
    pub source: PreparedShape,
    pub target: PreparedShape,
}

/// Match two meshes with trained parameters and extract matches in the
/// requested mode.
pub fn match_pair(
    store: &ParameterStore,
    cfg: &TrainConfig,
    mesh_a: &TriangleMesh,
    mesh_b: &TriangleMesh,
    mode: MatchMode,
) -> Result<MatchOutcome, PipelineError> {
    let model = Model::from_config(cfg);
    model.expect(store)?;
    let mut a = prepare_shape(mesh_a, cfg)?;
    let mut b = prepare_shape(mesh_b, cfg)?;
    let mut tape = Tape::new();
    let fa = shape_features(&mut tape, store, &model, &a, &Rotation::IDENTITY);
    let fb = shape_features(&mut tape, store, &model, &b, &Rotation::IDENTITY);
    let got_cfg = crate::got::GotConfig { match_mode: mode, ..cfg.got_config() };
    let got = got_forward(
        &mut tape,
        store,
        &a.shape_graph,
        fa.features,
        &b.shape_graph,
        fb.features,
        &model.gru,
        &got_cfg,
    )?;
    a.shape_graph.descriptors = Some(tape.to_matrix(fa.descriptors));
    a.shape_graph.node_features = Some(tape.to_matrix(fa.features));
    b.shape_graph.descriptors = Some(tape.to_matrix(fb.descriptors));
    b.shape_graph.node_features = Some(tape.to_matrix(fb.features));
    Ok(MatchOutcome { matches: got.matches, source: a, target: b })
}

//! Coarse correspondence between deformable triangle meshes.

pub mod descriptor;
pub mod diffcore;
pub mod got;
pub mod hiergraph;
pub mod losses;
pub mod mesh;
pub mod pipeline;

pub use diffcore::{DenseMatrix, Gradients, ParameterStore, Tape, Tensor};
pub use got::{MatchMode, MatchSet, NodeConfidence, TransportPlan};
pub use hiergraph::{BipartiteGeodesicMatrix, LocalGraph, ShapeGraph};
pub use mesh::{MeshGraph, TriangleMesh};
pub use pipeline::{EvalReport, ShapePairSample, TrainConfig};

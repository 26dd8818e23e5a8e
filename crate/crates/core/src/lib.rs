//! Brain-body co-optimization of 2D voxel soft robots.
//!
//! A mass-spring simulator, global and modular MLP controllers, an
//! age-fitness Pareto evolutionary loop and the experiment procedures built
//! on top of them.

pub mod checkpoint;
pub mod config;
pub mod control;
pub mod error;
pub mod evolution;
pub mod experiments;
pub mod logs;
pub mod morphology;
pub mod physics;
pub mod sensing;
pub mod walker;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use control::{ActionAssignment, ControllerGenome, ControllerKind, MlpParams};
pub use error::{Error, Result};
pub use evolution::{
    EvolutionConfig, GenerationLog, Individual, MutationKind, RunArtifacts, TrainingMode,
};
pub use experiments::{FixedMorphologyCatalog, TransferConfig, TransferSample};
pub use morphology::{Cell, Material, MorphologyGenome};
pub use physics::{PhysicsConfig, SimWorld, Vec2};
pub use sensing::ObservationConfig;
pub use walker::{EpisodeConfig, EpisodeResult, EvalSettings};

//! Synthetic planar-biped data generator and analytic oracle.
//!
//! Records are produced by inverse dynamics from prescribed smooth
//! trajectories, so every tick satisfies the joint-space force balance by
//! construction. A forward-integration mode exists only for the
//! energy-conservation oracle.

mod biped;
mod contact;
mod dataset;
mod dual;
mod trajectory;

pub use biped::{BipedModel, Side, SimError, BIPED_N};
pub use contact::{contact_force, ContactParams, FootwearPreset};
pub use dataset::{
    emit_dataset, feature_bounds, force_stats, generate_session, load_split, record_residual,
    session_seed, BipedModelMeta, DataError, DatasetMeta, DatasetRecord, EmitReport, GenConfig,
    LoadedSplit, SessionData, SessionMeta, Split,
};
pub use dual::{AutoDiffable, Dual, SimScalar};
pub use trajectory::{sample_trajectory, MotionMode, Trajectory};

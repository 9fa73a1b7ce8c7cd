//! Volume-to-scene pipeline: NIfTI-1 volumes in, layered watertight surface
//! scenes out.
//!
//! The stages are usable on their own: [`volume`] for I/O and reslicing,
//! [`registration`] for rigid alignment, [`segmentation`] for region growing
//! and morphology, [`meshing`] for isosurfaces, [`scene`] for export, and
//! [`pipeline`] to run them all from a declarative config.

pub mod filter;
pub mod grid;
pub mod meshing;
pub mod phantom;
pub mod pipeline;
pub mod registration;
pub mod scene;
pub mod segmentation;
pub mod transform;
pub mod volume;

pub use grid::{Grid, GridId};
pub use meshing::{MeshError, MeshingConfig, SurfaceMesh};
pub use pipeline::{PipelineConfig, PipelineError};
pub use registration::{Metric, Registration, RegistrationConfig, RegistrationError};
pub use scene::{LayerEntry, MeshFormat, SceneError, SceneManifest};
pub use segmentation::{Connectivity, GrowthStage, LabelMask, SeedSet, SegmentationError};
pub use transform::{RigidTransform, TransformError};
pub use volume::{Interpolation, VolumeError, VoxelVolume};

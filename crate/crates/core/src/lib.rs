//! Template-mesh deformation from multimodal observations.
//!
//! A conditional coupling flow displaces the vertices of an object's template
//! mesh, conditioned on an embedding fused from point clouds, depth images
//! and robot wrench readings. The crate also carries the training losses,
//! evaluation metrics, a synthetic poke/drop data generator and the
//! training/evaluation harness that ties them together.
//!
//! Module map:
//!
//! * [`mesh`]: triangle meshes, point clouds, IO, primitives, sampling,
//!   normalization and voxel volumes.
//! * [`spatial`]: bounding-volume hierarchy used for nearest queries.
//! * [`metrics`]: point-face and ROI losses with analytic gradients,
//!   chamfer distance and volumetric Jaccard index.
//! * [`nn`]: tensors, a reverse-mode tape, layers, attention, Adam and
//!   checkpoints.
//! * [`flow`]: the conditional coupling flow acting on vertices.
//! * [`encoders`]: modality encoders and history-buffer attention fusion.
//! * [`synth`]: synthetic sequences, sensor models, stiffness estimation,
//!   stream alignment and contact curation.
//! * [`pipeline`]: dataset split, training, evaluation, inference and
//!   benchmarking.
//! * [`cli`]: the `flexmesh` command-line entry point.

#[cfg(feature = "mimalloc")]
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

pub mod cli;
pub mod encoders;
pub mod flow;
pub mod mesh;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod spatial;
pub mod synth;

pub use mesh::{PointCloud, SampledPoints, TriangleMesh, Vec3};

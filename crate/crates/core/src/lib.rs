//! Rotation-invariant point cloud features built on spherical voxel
//! convolution and sparse point correlation.

pub mod error;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod resample;
pub mod so3;
pub mod sprin;
pub mod voxelizer;

pub use error::{Error, Result};
pub use geometry::{EulerZYZ, RotationMatrix, SphericalPoint, Vec3};
pub use io::{Cloud, Tensor, TensorArchive};
pub use pipeline::{Descriptor, NetworkConfig, PipelineKind, Weights};
pub use resample::{trilinear_sample, FeatureMatrix};
pub use voxelizer::{voxelize, SamplingConfig, SamplingMode, SphericalGrid};

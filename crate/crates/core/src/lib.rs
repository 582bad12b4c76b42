#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Injective flow networks: bijective flow blocks interleaved with injective
//! dimension-raising layers, their layer-wise range projection, embedding-gap
//! and Wasserstein-2 diagnostics, and a layerwise training harness.

pub mod error;
pub mod expansive;
pub mod experiments;
pub mod flows;
pub mod geometry;
pub mod linalg;
pub mod metrics;
pub mod network;
pub mod projection;
pub mod training;

pub use error::{Error, Result};
pub use expansive::{validate_injectivity, ExpansiveLayer, InjectivityReport};
pub use flows::{AutoregressiveLayer, CouplingLayer, FlowBlock, FlowLayer};
pub use geometry::{CompactSampleSet, ManifoldTarget, SamplingLaw};
pub use metrics::{directed_supinf, EmbeddingGapEstimate, EmpiricalMeasure};
pub use network::{InjectiveNetwork, Stage};
pub use projection::{project_to_range, ProjectionResult};

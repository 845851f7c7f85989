//! Quality-aware mixture-of-experts regression over three modalities, with
//! feature-space degradation, heteroscedastic training and grid evaluation
//! across noise intensity and missing rate.

pub mod degradation;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod model;
pub mod numerics;
pub mod synthdata;
pub mod training;
mod util;

pub use degradation::{DegradationSpec, MissMask, ProtocolKind, ReferenceStats};
pub use error::{Error, Result};
pub use evaluation::{GridResult, GridSpec, MetricsRecord};
pub use model::{Checkpoint, ForwardTrace, ModelConfig, ModelParams, Variant};
pub use numerics::{Matrix, SeededRng, Vector};
pub use synthdata::{Dataset, DatasetSpec, Modality, ModalitySet, Sample, Split};
pub use training::{Gradients, LossReport, TrainConfig, TrainMode};

//! Ready-made measurement models with closed-form reference results.

pub mod detector;
pub mod polarization;
pub mod qpc;

pub use detector::{
    detector_context, gaussian_cv, pointer_conditioned_average, pointer_conditioned_oracle, pointer_cv,
    DetectorContext, DetectorModel, Grid, PointerDistribution,
};
pub use polarization::{polarization_conditioned_oracle, polarization_context};
pub use qpc::{qpc_conditioned_oracle, qpc_cv, qpc_full_pipeline, QpcParams};

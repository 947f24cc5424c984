//! Raw per-encounter EHR rows to one labelled example per patient.

mod pipeline;
mod raw;
mod types;

pub use pipeline::{
    build_example, ewma_impute, filter_min_history, missing_ratio, present_ratio, run_pipeline, run_pipeline_raw,
    PipelineReport, StageCounts, MIN_HISTORY,
};
pub use raw::{Assembled, RawCohort, RawPatient};
pub use types::{
    is_t2dm_code, is_valid_icd10, Encounter, ExamplePoint, Gender, ImputationConfig, PatientRecord, T2DM_PREFIX,
    VITAL_ATTRIBUTES,
};

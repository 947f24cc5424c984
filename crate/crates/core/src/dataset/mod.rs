//! Class balancing, fold construction, feature encoding and demographic
//! grouping.

mod encode;
mod folds;
mod groups;

pub use encode::{
    encode, EncodedExample, Encoder, FeatureSchema, Standardizer, Vocabulary, DEFAULT_MAX_SEQUENCE_LENGTH, PAD,
    UNK,
};
pub use folds::{undersample_folds, FoldPlan, FoldSplit, NUM_FOLDS};
pub use groups::{age_bucket, group_by, DemographicAxis, DemographicGroup, AGE_BUCKETS};

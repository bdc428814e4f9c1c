//! Loading, cleaning, reducing and labelling battery cycling records.

pub mod clean;
pub mod features;
pub mod io;
pub mod labels;
pub mod rank;
pub mod record;
pub mod reduce;

pub use clean::{clean_cycle, clean_record, remove_outliers, OutlierConfig};
pub use features::{
    build_features, raw_features, select_features, select_top, FeatureSelection, FeatureTensor,
    NormStats, PipelineOptions,
};
pub use io::{load_dataset, parse_battery, save_dataset, write_atomic, FORMAT_VERSION};
pub use labels::{compute_cycle_life, make_labels, END_OF_LIFE_FRACTION, GOOD_THRESHOLD};
pub use rank::{
    attribute_deltas, pearson, rank_attributes, rank_from_deltas, tier_of, AttributeScore,
    DeltaTable,
};
pub use record::{Attribute, BatteryRecord, CycleData, Reduction, Task, Variable, N_ATTRIBUTES};
pub use reduce::{attribute_matrix, reduce_cycle, summarize, AttributeMatrix, Summary};

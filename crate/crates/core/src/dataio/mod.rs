//! Expression matrices: CSV and Matrix Market input, library-size
//! normalization, highly-variable-gene selection, QC filtering,
//! batch-stratified splitting and a synthetic count generator.

mod dataset;
mod preprocess;
mod synth;

pub use dataset::{read_mtx, ExpressionDataset, MtxPaths, PreprocessState};
pub use preprocess::{
    column_variances, scale_rows, DEFAULT_MIN_COUNTS, DEFAULT_MIN_GENES, DEFAULT_N_TOP, DEFAULT_TARGET_SUM,
};
pub use synth::{synthesize, SynthConfig, DISPERSION};

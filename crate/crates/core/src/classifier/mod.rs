//! User-facing classifier: preprocessing, fitting with basis-size selection,
//! prediction and model persistence.

mod fit;
mod model;
mod preprocess;

pub use fit::{select_and_fit, select_basis, FitConfig, FitOutcome};
pub use model::{
    boundary_count, decide, FitSettings, FittedModel, ModelParts, Prediction, SelectionReport,
    SelectionRow, MODEL_FORMAT, MODEL_VERSION,
};
pub use preprocess::{PreprocessMap, CLAMP};

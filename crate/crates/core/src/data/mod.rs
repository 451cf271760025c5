//! Slides as bags of patch features: the binary slide format, dataset
//! manifests and cross-validation fold planning.

mod folds;
mod manifest;
mod slide;

pub use folds::{build_folds, plan_folds, Fold, FoldMode, FoldPlan};
pub use manifest::{Manifest, ManifestEntry, MANIFEST_HEADER};
pub use slide::{load_slide, save_slide, GridCoord, Label, SlideRecord, PATCH_SIZE, SLIDE_MAGIC, SLIDE_VERSION};
pub(crate) use slide::{check_magic, read_array};

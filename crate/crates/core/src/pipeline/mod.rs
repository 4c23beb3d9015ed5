//! Normalization, augmentation and batch corpus generation.

pub mod augment;
pub mod batch;
pub mod sdn;

pub use augment::{augment, AugmentConfig};
pub use batch::{batch_synthesize, BatchRequest, CorpusManifest};
pub use sdn::{apply_sdn, fit_sdn_profile, SdnProfile};

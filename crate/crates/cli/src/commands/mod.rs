pub mod diagnostics;
pub mod evaluate;
pub mod features;
pub mod learn;
pub mod synth;
pub mod track;

use std::path::Path;

use velocam::dataset::{load_dataset, LoadedManifest};
use velocam::Error;

pub(crate) fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Error::InvalidArgument(msg.into()).into()
}

/// Every manifest of a dataset; an empty dataset is invalid.
pub(crate) fn dataset(path: &Path) -> anyhow::Result<Vec<LoadedManifest>> {
    let manifests = load_dataset(path)?;
    if manifests.is_empty() {
        return Err(invalid(format!("{} lists no sequences", path.display())));
    }
    Ok(manifests)
}

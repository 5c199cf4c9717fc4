//! Conditional anomaly detection over patient records: segmentation into
//! patient instances, per-action calibrated models, alert scoring, and the
//! analysis of reviewed alerts.

pub mod alert;
pub mod evaluation;
pub mod features;
pub mod learner;
pub mod matrix;
pub mod pipeline;
pub mod record;
pub mod selection;
pub mod synth;
pub mod time;

use sha2::{Digest, Sha256};

/// Lowercase hex of the first 16 bytes (or fewer) of `bytes`.
pub fn hex16(bytes: &[u8]) -> String {
    bytes.iter().take(16).map(|b| format!("{b:02x}")).collect()
}

/// Short content hash used for fingerprints and config hashes.
pub fn digest(bytes: &[u8]) -> String {
    hex16(&Sha256::digest(bytes))
}

//! Audio input, log-mel features, and the feature/manifest file formats.

mod features;
mod manifest;
mod mel;
mod wav;

pub use features::{read_features, write_features, FeatureSequence, FEATURE_MAGIC, FRAME_SHIFT_S};
pub use manifest::{
    duration_filter, read_manifest, write_manifest, ManifestRecord, Split, MAX_DURATION_S,
    MIN_DURATION_S,
};
pub use mel::{
    compute_logmel, hann_window, hz_to_mel, mel_center_frequencies, mel_filterbank, mel_to_hz,
    LogMel, MelConfig,
};
pub use wav::{read_wav, write_wav, WaveForm, SAMPLE_RATE};

//! Trial recordings: storage, band limiting and synthetic generation.

pub mod filter;
pub mod synth;
pub mod trial;

pub use filter::bandpass_and_resample;
pub use synth::{generate_synthetic, BandBoost, ClassProfile, SyntheticSpec};
pub use trial::{load_trial, save_trial, TrialRecording};

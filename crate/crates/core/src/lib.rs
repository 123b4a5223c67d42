//! EEG emotion recognition.
//!
//! The pipeline runs raw multichannel trials through short-time spectral
//! analysis into band-power (PSD) and differential-entropy (DE) features and
//! their asymmetry variants, smooths feature sequences with a moving average
//! or a fitted linear dynamical system, optionally reduces dimension with PCA
//! or MRMR, and classifies windows with a graph-regularized ELM, k-NN or
//! logistic regression. [`eval`] runs the pipeline under k-fold,
//! cross-session and leave-one-subject-out protocols.

pub mod classify;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod layout;
pub mod persist;
pub mod reduction;
pub mod smoothing;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};
pub use ingest::{SyntheticSpec, TrialRecording};
pub use layout::{ChannelLayout, PairTable};
pub use spectral::{Band, BandTable, Spectrogram};
pub use tensor::{ColumnDescriptor, FeatureKind, FeatureTensor, TrialMeta};

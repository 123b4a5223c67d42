//! Shared inputs for the pipeline benchmarks.

use eegemo::features::extract;
use eegemo::ingest::generate_synthetic;
use eegemo::{BandTable, ChannelLayout, FeatureKind, FeatureTensor, SyntheticSpec, TrialRecording};

/// Synthetic three-class trials, `per_class` of each, `seconds` long.
pub fn trials(per_class: usize, seconds: f64) -> Vec<TrialRecording> {
    let mut spec = SyntheticSpec::three_class_default(11);
    spec.trials_per_class = per_class;
    spec.duration_seconds = seconds;
    generate_synthetic(&spec).expect("valid spec")
}

pub fn de(trials: &[TrialRecording]) -> Vec<FeatureTensor> {
    let layout = ChannelLayout::cap62();
    let bands = BandTable::five_band();
    trials
        .iter()
        .map(|t| extract(t, FeatureKind::De, &bands, &layout, 1.0).expect("extract"))
        .collect()
}

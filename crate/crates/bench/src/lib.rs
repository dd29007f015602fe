//! Fixtures shared by the kernel benchmarks.

use footid_core::codec::{compress_with, Compression, INPUT_RATE_HZ};
use footid_core::events::DetectorConfig;
use footid_core::harness::walk_events;
use footid_core::signal::{decimate, generate_walk, synthetic_profiles, TimeSeries};
use footid_core::{CodecConfig, CompressedEvent};

/// Detected 8 kHz footfall events from one seeded synthetic walk.
pub fn walk_fixture(seed: u64) -> Vec<TimeSeries> {
    let profile = &synthetic_profiles(4, seed, 20.0)[0];
    let (signal, _) = generate_walk(profile, 10.0, INPUT_RATE_HZ, seed).expect("walk");
    walk_events(&signal, &DetectorConfig::default())
        .expect("events")
        .into_iter()
        .map(|(_, ev)| ev)
        .collect()
}

/// First event of the fixture walk, decimated to 1 kHz.
pub fn decimated_event(seed: u64) -> Vec<f64> {
    decimate(&walk_fixture(seed)[0], 8).expect("decimate").into_samples()
}

/// A compressed event from the fixture walk.
pub fn compressed_event(seed: u64) -> CompressedEvent {
    walk_fixture(seed)
        .iter()
        .find_map(|ev| match compress_with(ev, &CodecConfig::default()).ok()? {
            Compression::Accepted { event, .. } => Some(event),
            Compression::Discarded { .. } => None,
        })
        .expect("an accepted event")
}

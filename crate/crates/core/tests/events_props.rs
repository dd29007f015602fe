use footid_core::events::{detect_events, extract_events, slice_event, DetectorConfig};
use footid_core::signal::{generate_noise, generate_walk, synthetic_profiles, SyntheticPersonProfile, MAX_EVENT_WIDTH_S, MIN_EVENT_WIDTH_S};
use proptest::prelude::*;

const RATE: f64 = 8000.0;

#[test]
fn pure_noise_yields_no_events() {
    let floor = SyntheticPersonProfile::noise_floor_for_snr(20.0);
    let clean = (0..100u64)
        .filter(|&seed| {
            let noise = generate_noise(floor, 10.0, RATE, seed).unwrap();
            extract_events(&noise, &DetectorConfig::default()).unwrap().is_empty()
        })
        .count();
    assert!(clean >= 95, "{clean}/100 noise records had no accepted event");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn windows_are_ordered_disjoint_and_gated(profile_seed in any::<u64>(), walk_seed in any::<u64>(), snr in 10.0f64..30.0) {
        let profile = &synthetic_profiles(1, profile_seed, snr)[0];
        let (signal, _) = generate_walk(profile, 5.0, RATE, walk_seed).unwrap();
        let detection = detect_events(&signal, &DetectorConfig::default()).unwrap();
        for w in detection.accepted.windows(2) {
            prop_assert!(w[0].end_index <= w[1].start_index);
        }
        for (w, _) in detection.all() {
            prop_assert!(w.start_index < w.end_index && w.end_index <= signal.len());
        }
        for w in &detection.accepted {
            let width = w.width_s(RATE);
            prop_assert!((MIN_EVENT_WIDTH_S - 1e-9..=MAX_EVENT_WIDTH_S + 1e-9).contains(&width), "{}", width);
            prop_assert_eq!(slice_event(&signal, w).unwrap().len(), w.len());
        }
        prop_assert_eq!(extract_events(&signal, &DetectorConfig::default()).unwrap(), detection.accepted);
    }

    #[test]
    fn detection_is_deterministic(seed in any::<u64>()) {
        let profile = &synthetic_profiles(1, 3, 20.0)[0];
        let (signal, _) = generate_walk(profile, 4.0, RATE, seed).unwrap();
        let cfg = DetectorConfig::default();
        prop_assert_eq!(detect_events(&signal, &cfg).unwrap(), detect_events(&signal, &cfg).unwrap());
    }
}

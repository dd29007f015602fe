//! Sampled signals, multi-stage decimation and the synthetic footfall generator.
//!
//! The generator stands in for recorded geophone walks: every footstep is a
//! short burst built from a random sparse set of Gaussian-windowed sinusoids,
//! the same atom family the compression dictionary uses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Shortest accepted footfall width in seconds.
pub const MIN_EVENT_WIDTH_S: f64 = 0.144;
/// Longest accepted footfall width in seconds.
pub const MAX_EVENT_WIDTH_S: f64 = 0.437;

/// Number of 2 Hz bands covering 0-250 Hz.
pub const BAND_COUNT: usize = 125;
/// Width of one spectral band in Hz.
pub const BAND_WIDTH_HZ: f64 = 2.0;

/// Taps of every anti-alias stage.
pub const DECIMATION_TAPS: usize = 63;
/// Anti-alias cutoff as a fraction of the output sample rate.
pub const DECIMATION_CUTOFF: f64 = 0.45;

/// RMS amplitude of a synthetic footstep before jitter.
pub const BURST_RMS: f64 = 0.1;

/// Uniformly sampled real-valued signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    samples: Vec<f64>,
    sample_rate_hz: f64,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return invalid(format!("sample rate must be positive, got {sample_rate_hz}"));
        }
        if samples.is_empty() {
            return invalid("time series must contain at least one sample");
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return invalid("time series contains non-finite samples");
        }
        Ok(Self { samples, sample_rate_hz })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    /// Returns a copy with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|x| x * gain).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

pub(crate) fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

pub(crate) fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Relative L2 distance `||a - b|| / ||b||`.
pub fn relative_l2_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm = l2(b);
    if norm == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / norm
    }
}

fn prime_factors(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        while n.is_multiple_of(p) {
            out.push(p);
            n /= p;
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Hamming-windowed sinc low-pass with `cutoff` in cycles per sample, unit DC gain.
pub(crate) fn lowpass_taps(cutoff: f64, taps: usize) -> Vec<f64> {
    let mid = (taps - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..taps)
        .map(|k| {
            let x = k as f64 - mid;
            let sinc = if x == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * std::f64::consts::PI * cutoff * x).sin() / (std::f64::consts::PI * x)
            };
            let w = 0.54 - 0.46 * (2.0 * std::f64::consts::PI * k as f64 / (taps - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

fn decimate_stage(x: &[f64], factor: usize) -> Vec<f64> {
    let taps = lowpass_taps(DECIMATION_CUTOFF / factor as f64, DECIMATION_TAPS);
    let half = DECIMATION_TAPS / 2;
    let n = x.len();
    // Odd reflection at both ends keeps linear trends intact through the filter.
    let at = |i: isize| -> f64 {
        if i < 0 {
            2.0 * x[0] - x[(-i) as usize]
        } else if i as usize >= n {
            let k = i as usize - (n - 1);
            2.0 * x[n - 1] - x[n - 1 - k]
        } else {
            x[i as usize]
        }
    };
    (0..n / factor)
        .map(|m| {
            let centre = (m * factor) as isize;
            taps.iter()
                .enumerate()
                .map(|(k, h)| h * at(centre + k as isize - half as isize))
                .sum()
        })
        .collect()
}

/// Low-pass filters and subsamples `signal` by `factor`.
///
/// The factor is split into prime stages applied largest first; each stage runs a
/// 63-tap Hamming windowed-sinc with its cutoff at 0.45 of that stage's output rate,
/// so the final cutoff sits at 0.45 of the output rate (225 Hz for 500 Hz output).
pub fn decimate(signal: &TimeSeries, factor: usize) -> Result<TimeSeries> {
    if factor == 0 {
        return invalid("decimation factor must be at least 1");
    }
    if signal.len() < factor {
        return invalid(format!(
            "signal of {} samples is shorter than the decimation factor {factor}",
            signal.len()
        ));
    }
    if factor == 1 {
        return Ok(signal.clone());
    }
    let mut stages = prime_factors(factor);
    stages.reverse();
    let mut data = signal.samples.clone();
    let mut rate = signal.sample_rate_hz;
    for stage in stages {
        if data.len() < DECIMATION_TAPS {
            return invalid(format!(
                "{} samples at {rate} Hz is shorter than the {DECIMATION_TAPS}-tap filter warm-up",
                data.len()
            ));
        }
        data = decimate_stage(&data, stage);
        rate /= stage as f64;
    }
    TimeSeries::new(data, rate)
}

/// Parameters of one synthetic walker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPersonProfile {
    pub person_id: u32,
    /// Relative energy per 2 Hz band over 0-250 Hz.
    pub band_weights: Vec<f64>,
    pub cadence_mean_s: f64,
    pub cadence_std_s: f64,
    pub footstep_duration_mean_s: f64,
    pub footstep_duration_std_s: f64,
    pub amplitude_jitter: f64,
    pub noise_floor: f64,
}

impl SyntheticPersonProfile {
    pub fn validate(&self) -> Result<()> {
        if self.band_weights.len() != BAND_COUNT {
            return invalid(format!(
                "band_weights must have {BAND_COUNT} entries, got {}",
                self.band_weights.len()
            ));
        }
        if self.band_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return invalid("band weights must be finite and non-negative");
        }
        if self.band_weights.iter().sum::<f64>() <= 0.0 {
            return invalid("band weights sum to zero");
        }
        for (name, v) in [
            ("cadence_mean_s", self.cadence_mean_s),
            ("cadence_std_s", self.cadence_std_s),
            ("footstep_duration_mean_s", self.footstep_duration_mean_s),
            ("footstep_duration_std_s", self.footstep_duration_std_s),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be positive"));
            }
        }
        if !(self.amplitude_jitter >= 0.0 && self.noise_floor >= 0.0) {
            return invalid("amplitude_jitter and noise_floor must be non-negative");
        }
        Ok(())
    }

    /// Band weights scaled to sum to one.
    pub fn normalized_band_weights(&self) -> Vec<f64> {
        let total: f64 = self.band_weights.iter().sum();
        self.band_weights.iter().map(|w| w / total).collect()
    }

    /// Noise floor giving `snr_db` relative to the nominal footstep RMS.
    pub fn noise_floor_for_snr(snr_db: f64) -> f64 {
        BURST_RMS / 10f64.powf(snr_db / 20.0)
    }
}

/// Highest frequency in synthetic footfalls. At the longest event width the
/// dictionary's top modulation corresponds to about 91 Hz.
pub const SYNTHETIC_MAX_HZ: f64 = 80.0;

/// A family of distinguishable walkers.
///
/// Each walker gets two spectral peaks between 10 and 65 Hz, its own cadence and
/// footstep duration. `snr_db` sets the noise floor of every profile.
pub fn synthetic_profiles(count: usize, seed: u64, snr_db: f64) -> Vec<SyntheticPersonProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_9a17);
    (0..count)
        .map(|i| {
            let peaks: Vec<(f64, f64, f64)> = (0..2)
                .map(|_| {
                    (
                        rng.gen_range(10.0..65.0),
                        rng.gen_range(4.0..12.0),
                        rng.gen_range(0.4..1.0),
                    )
                })
                .collect();
            let band_weights = (0..BAND_COUNT)
                .map(|k| {
                    let f = BAND_WIDTH_HZ * k as f64 + 1.0;
                    let bumps: f64 = peaks
                        .iter()
                        .map(|(c, w, a)| a * (-(f - c) * (f - c) / (2.0 * w * w)).exp())
                        .sum();
                    // Nothing above SYNTHETIC_MAX_HZ, with a weak floor below it.
                    if f < SYNTHETIC_MAX_HZ { bumps + 0.01 } else { 0.0 }
                })
                .collect();
            SyntheticPersonProfile {
                person_id: i as u32,
                band_weights,
                cadence_mean_s: rng.gen_range(0.5..0.8),
                cadence_std_s: rng.gen_range(0.02..0.05),
                footstep_duration_mean_s: rng.gen_range(0.20..0.32),
                footstep_duration_std_s: rng.gen_range(0.015..0.03),
                amplitude_jitter: 0.3,
                noise_floor: SyntheticPersonProfile::noise_floor_for_snr(snr_db),
            }
        })
        .collect()
}

/// Ground truth for one generated footstep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footstep {
    pub onset_s: f64,
    pub duration_s: f64,
    pub person_id: u32,
}

/// Silence kept between the end of one footstep and the next onset.
const MIN_GAP_S: f64 = 0.1;
const LEAD_IN_S: f64 = 0.3;
const MAX_LEAD_JITTER_S: f64 = 0.5;
const ATOM_SIGMA: f64 = 0.5;

/// One footstep burst of `n` samples spanning `duration_s`.
fn footstep_burst(
    rng: &mut ChaCha8Rng,
    bands: &WeightedIndex<f64>,
    n: usize,
    duration_s: f64,
    amplitude: f64,
) -> Vec<f64> {
    let atoms = rng.gen_range(8..=25);
    let mut burst = vec![0.0; n];
    let denom = (n.max(2) - 1) as f64;
    for _ in 0..atoms {
        let tau: f64 = rng.gen_range(0.0..0.5);
        let band = bands.sample(rng);
        let freq = BAND_WIDTH_HZ * (band as f64 + rng.gen_range(0.0..1.0));
        let omega = 2.0 * std::f64::consts::PI * freq * duration_s;
        let use_sine = rng.gen_bool(0.5);
        let coef = rng.gen_range(0.5..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        for (i, v) in burst.iter_mut().enumerate() {
            let t = i as f64 / denom;
            let env = (-(t - tau) * (t - tau) / (ATOM_SIGMA * ATOM_SIGMA)).exp();
            let carrier = if use_sine { (omega * t).sin() } else { (omega * t).cos() };
            *v += coef * env * carrier;
        }
    }
    let r = rms(&burst);
    if r > 0.0 {
        burst.iter_mut().for_each(|v| *v *= amplitude / r);
    }
    burst
}

/// Generates a walk of `duration_s` seconds for `profile`.
///
/// Returns the signal and the ground-truth footsteps. Footsteps never overlap and
/// every burst ends inside the signal; the output is a pure function of the seed.
pub fn generate_walk(
    profile: &SyntheticPersonProfile,
    duration_s: f64,
    sample_rate_hz: f64,
    rng_seed: u64,
) -> Result<(TimeSeries, Vec<Footstep>)> {
    profile.validate()?;
    if !(duration_s > 0.0 && sample_rate_hz > 0.0) {
        return invalid("duration and sample rate must be positive");
    }
    let n_total = (duration_s * sample_rate_hz).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let bands = WeightedIndex::new(profile.normalized_band_weights())
        .map_err(|e| Error::InvalidArgument(format!("band weights: {e}")))?;
    let cadence = Normal::new(profile.cadence_mean_s, profile.cadence_std_s)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let width = Normal::new(profile.footstep_duration_mean_s, profile.footstep_duration_std_s)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");

    let mut samples = vec![0.0; n_total];
    let mut footsteps = Vec::new();
    let mut onset = LEAD_IN_S + rng.gen_range(0.0..profile.cadence_mean_s.min(MAX_LEAD_JITTER_S));
    loop {
        let d = width.sample(&mut rng).clamp(MIN_EVENT_WIDTH_S, MAX_EVENT_WIDTH_S);
        let start = (onset * sample_rate_hz).round() as usize;
        let n = (d * sample_rate_hz).round() as usize;
        if start + n + (0.05 * sample_rate_hz) as usize > n_total {
            break;
        }
        let amplitude = BURST_RMS * (profile.amplitude_jitter * gauss.sample(&mut rng)).exp();
        let burst = footstep_burst(&mut rng, &bands, n, d, amplitude);
        samples[start..start + n].iter_mut().zip(&burst).for_each(|(s, b)| *s += b);
        footsteps.push(Footstep {
            onset_s: start as f64 / sample_rate_hz,
            duration_s: n as f64 / sample_rate_hz,
            person_id: profile.person_id,
        });
        onset += cadence.sample(&mut rng).max(d + MIN_GAP_S);
    }
    if footsteps.is_empty() {
        return Err(Error::EmptyWalk(format!(
            "{duration_s} s is too short for a footstep at cadence {} s",
            profile.cadence_mean_s
        )));
    }
    if profile.noise_floor > 0.0 {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(rng_seed ^ 0x9e37_79b9_7f4a_7c15);
        for s in samples.iter_mut() {
            *s += profile.noise_floor * gauss.sample(&mut noise_rng);
        }
    }
    Ok((TimeSeries::new(samples, sample_rate_hz)?, footsteps))
}

/// White Gaussian noise with standard deviation `noise_floor`: a walk with no footsteps.
pub fn generate_noise(noise_floor: f64, duration_s: f64, sample_rate_hz: f64, rng_seed: u64) -> Result<TimeSeries> {
    if !(noise_floor >= 0.0 && duration_s > 0.0 && sample_rate_hz > 0.0) {
        return invalid("noise floor must be non-negative, duration and rate positive");
    }
    let n = (duration_s * sample_rate_hz).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ 0x9e37_79b9_7f4a_7c15);
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    let samples = (0..n).map(|_| noise_floor * gauss.sample(&mut rng)).collect();
    TimeSeries::new(samples, sample_rate_hz)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: f64, n: usize) -> TimeSeries {
        let x = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate).sin())
            .collect();
        TimeSeries::new(x, rate).unwrap()
    }

    fn profile() -> SyntheticPersonProfile {
        synthetic_profiles(1, 3, 20.0).remove(0)
    }

    #[test]
    fn decimate_identity() {
        let s = sine(50.0, 8000.0, 500);
        assert_eq!(decimate(&s, 1).unwrap(), s);
    }

    #[test]
    fn decimate_rate_and_length() {
        let s = sine(50.0, 8000.0, 2000);
        let d = decimate(&s, 8).unwrap();
        assert_eq!(d.len(), 250);
        assert_eq!(d.sample_rate_hz(), 1000.0);
        let d = decimate(&sine(5.0, 8000.0, 2005), 16).unwrap();
        assert_eq!(d.len(), 125);
    }

    #[test]
    fn decimate_rejects_out_of_band_tone() {
        // Oracle: RMS of the output computed directly against the input RMS.
        let s = sine(300.0, 8000.0, 16000);
        let d = decimate(&s, 16).unwrap();
        assert_eq!(d.sample_rate_hz(), 500.0);
        assert!(d.rms() < 0.05 * s.rms(), "rms ratio {}", d.rms() / s.rms());
    }

    #[test]
    fn decimate_keeps_passband_tone() {
        let s = sine(40.0, 8000.0, 16000);
        let d = decimate(&s, 16).unwrap();
        assert!((d.rms() / s.rms() - 1.0).abs() < 0.01);
    }

    #[test]
    fn decimate_errors() {
        let s = sine(50.0, 8000.0, 40);
        assert!(matches!(decimate(&s, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(decimate(&s, 41), Err(Error::InvalidArgument(_))));
        // 40 samples cannot warm up a 63-tap stage.
        assert!(matches!(decimate(&s, 2), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn decimate_composes() {
        let s = sine(3.0, 8000.0, 8000);
        for (a, b) in [(2, 4), (4, 2), (2, 8), (4, 4)] {
            let direct = decimate(&s, a * b).unwrap();
            let nested = decimate(&decimate(&s, a).unwrap(), b).unwrap();
            let err = relative_l2_error(nested.samples(), direct.samples());
            assert!(err < 1e-6, "{a}x{b}: {err}");
        }
    }

    #[test]
    fn time_series_validation() {
        assert!(TimeSeries::new(vec![], 10.0).is_err());
        assert!(TimeSeries::new(vec![1.0], 0.0).is_err());
        assert!(TimeSeries::new(vec![f64::NAN], 1.0).is_err());
    }

    #[test]
    fn walk_onset_count() {
        let mut p = profile();
        p.cadence_mean_s = 0.6;
        p.cadence_std_s = 0.03;
        let (sig, steps) = generate_walk(&p, 10.0, 8000.0, 11).unwrap();
        assert_eq!(sig.len(), 80000);
        assert!((12..=20).contains(&steps.len()), "{} onsets", steps.len());
    }

    #[test]
    fn walk_silent_outside_single_footstep() {
        let mut p = profile();
        p.noise_floor = 0.0;
        p.cadence_mean_s = 5.0;
        p.cadence_std_s = 0.01;
        let (sig, steps) = generate_walk(&p, 1.5, 8000.0, 5).unwrap();
        assert_eq!(steps.len(), 1);
        let start = (steps[0].onset_s * 8000.0).round() as usize;
        let end = start + (steps[0].duration_s * 8000.0).round() as usize;
        for (i, v) in sig.samples().iter().enumerate() {
            if i < start || i >= end {
                assert_eq!(*v, 0.0, "sample {i}");
            }
        }
        assert!(sig.samples()[start..end].iter().any(|v| *v != 0.0));
    }

    #[test]
    fn walk_is_deterministic() {
        let p = profile();
        let (a, sa) = generate_walk(&p, 4.0, 8000.0, 99).unwrap();
        let (b, sb) = generate_walk(&p, 4.0, 8000.0, 99).unwrap();
        assert_eq!(sa, sb);
        assert!(a.samples().iter().zip(b.samples()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn walk_too_short() {
        let p = profile();
        assert!(matches!(generate_walk(&p, 0.4, 8000.0, 1), Err(Error::EmptyWalk(_))));
    }

    #[test]
    fn onsets_increasing_and_separated() {
        for seed in 0..20 {
            let p = synthetic_profiles(4, seed, 20.0).remove((seed % 4) as usize);
            let (_, steps) = generate_walk(&p, 8.0, 1000.0, seed).unwrap();
            for w in steps.windows(2) {
                assert!(w[1].onset_s - w[0].onset_s >= MIN_EVENT_WIDTH_S);
            }
        }
    }
}

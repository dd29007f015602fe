//! Time, envelope and band-energy features of a footfall event.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::signal::{TimeSeries, BAND_COUNT, BAND_WIDTH_HZ};

/// 3 time moments, 4 envelope moments, 125 bands, cadence, duration.
pub const FEATURE_COUNT: usize = 3 + 4 + BAND_COUNT + 1 + 1;
const CADENCE_COLUMN: usize = 3 + 4 + BAND_COUNT;
/// Upper edge of the band features.
pub const BAND_LIMIT_HZ: f64 = BAND_COUNT as f64 * BAND_WIDTH_HZ;

/// Features of one footstep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// std, skewness, kurtosis of the samples.
    pub time_stats: [f64; 3],
    /// mean, std, skewness, kurtosis of the analytic-signal envelope.
    pub hilbert_stats: [f64; 4],
    /// Relative energy per 2 Hz band over 0-250 Hz.
    pub band_energies: Vec<f64>,
    /// Gap to the previous onset; `None` for the first footstep of a walk.
    pub cadence_s: Option<f64>,
    pub duration_samples: usize,
}

impl FeatureVector {
    /// All 134 values in column order. A missing cadence is NaN.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(FEATURE_COUNT);
        v.extend_from_slice(&self.time_stats);
        v.extend_from_slice(&self.hilbert_stats);
        v.extend_from_slice(&self.band_energies);
        v.push(self.cadence_s.unwrap_or(f64::NAN));
        v.push(self.duration_samples as f64);
        v
    }
}

/// Column names for samples aggregated over `f_count` footsteps.
pub fn feature_columns(f_count: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["time_std", "time_skewness", "time_kurtosis"]
        .into_iter()
        .chain(["env_mean", "env_std", "env_skewness", "env_kurtosis"])
        .map(String::from)
        .collect();
    for k in 0..BAND_COUNT {
        let lo = (k as f64 * BAND_WIDTH_HZ) as usize;
        cols.push(format!("band_{lo:03}_{:03}", lo + BAND_WIDTH_HZ as usize));
    }
    if f_count > 1 {
        cols.push("cadence_s".into());
    }
    cols.push("duration_samples".into());
    cols
}

/// SHA-256 over the comma-joined column names, hex encoded.
pub fn column_hash(columns: &[String]) -> String {
    let digest = Sha256::digest(columns.join(",").as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Mean, std, skewness and kurtosis with the biased (population) moments.
fn moments(x: &[f64]) -> Option<[f64; 4]> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let peak = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    // rounding noise on a constant input is not variance
    if !(m2 > (1e-12 * peak).powi(2)) {
        return None;
    }
    Some([mean, m2.sqrt(), m3 / m2.powf(1.5), m4 / (m2 * m2)])
}

fn fft(planner: &mut FftPlanner<f64>, buf: &mut [Complex<f64>], inverse: bool) {
    let plan: Arc<dyn rustfft::Fft<f64>> = if inverse {
        planner.plan_fft_inverse(buf.len())
    } else {
        planner.plan_fft_forward(buf.len())
    };
    plan.process(buf);
}

/// Magnitude of the analytic signal, via the FFT on the event zero-padded to a power of two.
pub fn hilbert_envelope(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let size = n.next_power_of_two().max(2);
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(size, Complex::new(0.0, 0.0));
    fft(&mut planner, &mut buf, false);
    let half = size / 2;
    for (k, c) in buf.iter_mut().enumerate() {
        let h = match k {
            0 => 1.0,
            k if k == half => 1.0,
            k if k < half => 2.0,
            _ => 0.0,
        };
        *c *= h / size as f64;
    }
    fft(&mut planner, &mut buf, true);
    buf[..n].iter().map(|c| c.norm()).collect()
}

/// Relative energy per band below `limit_hz`; bands above it are zero.
///
/// DFT bin `k` covers `[k df, (k+1) df)` and its energy is split over the bands it
/// overlaps in proportion to the overlap.
pub fn band_energies(x: &[f64], sample_rate_hz: f64, limit_hz: f64) -> Result<Vec<f64>> {
    let n = x.len();
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft(&mut planner, &mut buf, false);
    let df = sample_rate_hz / n as f64;
    let limit = limit_hz.min(BAND_LIMIT_HZ);
    let mut bands = vec![0.0; BAND_COUNT];
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1) {
        let lo = k as f64 * df;
        if lo >= limit {
            break;
        }
        // one-sided power: interior bins stand for two conjugate bins
        let mirrored = k != 0 && 2 * k != n;
        let power = c.norm_sqr() * if mirrored { 2.0 } else { 1.0 };
        let hi = (lo + df).min(limit);
        let first = (lo / BAND_WIDTH_HZ) as usize;
        let mut band = first;
        while band < BAND_COUNT {
            let b_lo = band as f64 * BAND_WIDTH_HZ;
            if b_lo >= hi {
                break;
            }
            let overlap = (b_lo + BAND_WIDTH_HZ).min(hi) - b_lo.max(lo);
            if overlap > 0.0 {
                bands[band] += power * overlap / df;
            }
            band += 1;
        }
    }
    let total: f64 = bands.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateEvent("no energy below the band limit".into()));
    }
    bands.iter_mut().for_each(|b| *b /= total);
    Ok(bands)
}

/// Band limit used at `sample_rate_hz`: 250 Hz, or 90% of Nyquist when that is lower.
pub fn band_limit_for(sample_rate_hz: f64) -> f64 {
    BAND_LIMIT_HZ.min(0.45 * sample_rate_hz)
}

/// Features of one event. `prev_onset_s` is `None` for the first footstep of a walk.
pub fn extract_features(event: &TimeSeries, prev_onset_s: Option<f64>, onset_s: f64) -> Result<FeatureVector> {
    if event.is_empty() {
        return invalid("empty event");
    }
    let x = event.samples();
    let [_, std, skew, kurt] = moments(x)
        .ok_or_else(|| Error::DegenerateEvent("zero-variance event".into()))?;
    let envelope = hilbert_envelope(x);
    let hilbert_stats = moments(&envelope)
        .ok_or_else(|| Error::DegenerateEvent("zero-variance envelope".into()))?;
    let band_energies = band_energies(x, event.sample_rate_hz(), band_limit_for(event.sample_rate_hz()))?;
    Ok(FeatureVector {
        time_stats: [std, skew, kurt],
        hilbert_stats,
        band_energies,
        cadence_s: prev_onset_s.map(|p| onset_s - p),
        duration_samples: x.len(),
    })
}

/// Mean features of F consecutive footsteps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedSample {
    /// `feature_columns(f_count)` order: no cadence column when F = 1.
    pub features: Vec<f64>,
    pub f_count: usize,
    pub label: Option<u32>,
}

/// Element-wise mean of `footsteps`; cadence averages the defined entries and is dropped for F = 1.
pub fn aggregate_sample(footsteps: &[FeatureVector], f_count: usize, label: Option<u32>) -> Result<AggregatedSample> {
    if footsteps.is_empty() || f_count == 0 {
        return invalid("aggregation needs at least one footstep");
    }
    if footsteps.len() != f_count {
        return invalid(format!("expected {f_count} footsteps, got {}", footsteps.len()));
    }
    let n = f_count as f64;
    let mut mean = vec![0.0; FEATURE_COUNT];
    for fv in footsteps {
        for (m, v) in mean.iter_mut().zip(fv.to_vec()) {
            *m += v / n;
        }
    }
    if f_count == 1 {
        mean.remove(CADENCE_COLUMN);
    } else {
        let cadences: Vec<f64> = footsteps.iter().filter_map(|f| f.cadence_s).collect();
        if cadences.is_empty() {
            return invalid("no footstep in the sample has a cadence");
        }
        mean[CADENCE_COLUMN] = cadences.iter().sum::<f64>() / cadences.len() as f64;
    }
    Ok(AggregatedSample { features: mean, f_count, label })
}

/// Splits one walk's footsteps into non-overlapping runs of F and aggregates each.
/// A trailing run shorter than F is dropped.
pub fn aggregate_walk(footsteps: &[FeatureVector], f_count: usize, label: Option<u32>) -> Result<Vec<AggregatedSample>> {
    if f_count == 0 {
        return invalid("f_count must be at least 1");
    }
    footsteps
        .chunks_exact(f_count)
        .map(|chunk| aggregate_sample(chunk, f_count, label))
        .collect()
}

//! Adaptive-threshold footfall event extraction.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::signal::{TimeSeries, MAX_EVENT_WIDTH_S, MIN_EVENT_WIDTH_S};

/// Short-time-energy detector parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub frame_s: f64,
    pub hop_s: f64,
    /// Multiplier on the rolling standard deviation.
    pub k_sigma: f64,
    pub baseline_window_s: f64,
    pub hangover_frames: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { frame_s: 0.025, hop_s: 0.010, k_sigma: 3.0, baseline_window_s: 2.0, hangover_frames: 3 }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hop_s > 0.0 && self.frame_s > self.hop_s) {
            return invalid(format!(
                "need frame_s > hop_s > 0, got frame {} hop {}",
                self.frame_s, self.hop_s
            ));
        }
        if !(self.k_sigma > 0.0 && self.k_sigma.is_finite()) {
            return invalid(format!("k_sigma must be positive, got {}", self.k_sigma));
        }
        if !(self.baseline_window_s >= self.frame_s) {
            return invalid("baseline window must hold at least one frame");
        }
        Ok(())
    }
}

/// A detected event: samples `start_index..end_index` of the source signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventWindow {
    pub start_index: usize,
    pub end_index: usize,
    pub onset_time_s: f64,
}

impl EventWindow {
    pub fn new(start_index: usize, end_index: usize, sample_rate_hz: f64) -> Self {
        Self { start_index, end_index, onset_time_s: start_index as f64 / sample_rate_hz }
    }

    pub fn len(&self) -> usize {
        self.end_index - self.start_index
    }

    pub fn is_empty(&self) -> bool {
        self.end_index <= self.start_index
    }

    pub fn width_s(&self, sample_rate_hz: f64) -> f64 {
        self.len() as f64 / sample_rate_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Shorter than the minimum footfall width: noise.
    TooNarrow,
    /// Longer than the maximum width: merged footfalls.
    TooWide,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::TooNarrow => "too_narrow",
            RejectReason::TooWide => "too_wide",
        })
    }
}

/// Everything the detector found, in time order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Detection {
    pub accepted: Vec<EventWindow>,
    pub rejected: Vec<(EventWindow, RejectReason)>,
}

impl Detection {
    /// All candidate windows in time order, with the reason for rejected ones.
    pub fn all(&self) -> Vec<(EventWindow, Option<RejectReason>)> {
        let mut out: Vec<_> = self
            .accepted
            .iter()
            .map(|w| (*w, None))
            .chain(self.rejected.iter().map(|(w, r)| (*w, Some(*r))))
            .collect();
        out.sort_by_key(|(w, _)| w.start_index);
        out
    }
}

/// Accepted events only.
pub fn extract_events(signal: &TimeSeries, config: &DetectorConfig) -> Result<Vec<EventWindow>> {
    Ok(detect_events(signal, config)?.accepted)
}

/// Runs the detector and returns accepted and width-rejected windows.
///
/// Frame energies are compared against `mean + k_sigma * std` of the most recent
/// `baseline_window_s` worth of quiet frames. The baseline is seeded from the
/// first window with an iterative clip started at the quietest quartile, so a
/// walk that begins with footsteps does not poison it.
pub fn detect_events(signal: &TimeSeries, config: &DetectorConfig) -> Result<Detection> {
    config.validate()?;
    let rate = signal.sample_rate_hz();
    let x = signal.samples();
    let baseline_samples = (config.baseline_window_s * rate).round() as usize;
    if x.len() < baseline_samples {
        return invalid(format!(
            "signal of {} samples is shorter than the {} s baseline window",
            x.len(),
            config.baseline_window_s
        ));
    }
    let frame = ((config.frame_s * rate).round() as usize).max(2);
    let hop = ((config.hop_s * rate).round() as usize).clamp(1, frame - 1);
    let energies = frame_energies(x, frame, hop);
    if energies.is_empty() {
        return Ok(Detection::default());
    }
    let ring_len = ((baseline_samples.saturating_sub(frame)) / hop + 1).clamp(2, energies.len().max(2));
    let mut baseline = Baseline::seed(&energies[..ring_len.min(energies.len())], ring_len, config.k_sigma);

    // Frame ranges of raw detections.
    let mut raw: Vec<(usize, usize)> = Vec::new();
    let mut open: Option<OpenEvent> = None;
    for (k, &e) in energies.iter().enumerate() {
        let active = e > baseline.threshold(config.k_sigma);
        match (&mut open, active) {
            (None, true) => open = Some(OpenEvent::new(k)),
            (Some(ev), true) => ev.active(k),
            (Some(ev), false) => {
                ev.quiet_run += 1;
                if ev.quiet_run > config.hangover_frames {
                    raw.push(open.take().expect("open event").frames());
                    baseline.push(e);
                }
            }
            (None, false) => baseline.push(e),
        }
    }
    if let Some(ev) = open {
        raw.push(ev.frames());
    }

    let mut windows: Vec<(usize, usize)> = raw
        .into_iter()
        .map(|(first, last)| {
            let start = (first * hop + frame).saturating_sub(hop);
            let end = ((last + 1) * hop).min(x.len());
            (snap_start(x, start, frame), snap_end(x, end.max(start + 1), frame))
        })
        .collect();
    windows.sort_unstable();

    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(windows.len());
    for (s, e) in windows {
        match merged.last_mut() {
            Some(prev) if s <= prev.1 => prev.1 = prev.1.max(e),
            _ => merged.push((s, e)),
        }
    }

    let mut out = Detection::default();
    for (s, e) in merged {
        let w = EventWindow::new(s, e, rate);
        let width = w.width_s(rate);
        // Small slack so widths that round to the bound are not rejected.
        if width < MIN_EVENT_WIDTH_S - 1e-9 {
            out.rejected.push((w, RejectReason::TooNarrow));
        } else if width > MAX_EVENT_WIDTH_S + 1e-9 {
            out.rejected.push((w, RejectReason::TooWide));
        } else {
            out.accepted.push(w);
        }
    }
    Ok(out)
}

/// Active runs shorter than this at the head of an event are treated as noise
/// that the hangover happened to bridge into the footfall.
const ONSET_RUN_FRAMES: usize = 3;

struct OpenEvent {
    /// Start frame of the first run long enough to count as an onset.
    onset: Option<usize>,
    first: usize,
    run_start: usize,
    last: usize,
    quiet_run: usize,
}

impl OpenEvent {
    fn new(k: usize) -> Self {
        let mut ev = Self { onset: None, first: k, run_start: k, last: k, quiet_run: 0 };
        ev.check_run();
        ev
    }

    fn active(&mut self, k: usize) {
        if k != self.last + 1 {
            self.run_start = k;
        }
        self.last = k;
        self.quiet_run = 0;
        self.check_run();
    }

    fn check_run(&mut self) {
        if self.onset.is_none() && self.last + 1 - self.run_start >= ONSET_RUN_FRAMES {
            self.onset = Some(self.run_start);
        }
    }

    fn frames(&self) -> (usize, usize) {
        (self.onset.unwrap_or(self.first), self.last)
    }
}

fn frame_energies(x: &[f64], frame: usize, hop: usize) -> Vec<f64> {
    if x.len() < frame {
        return Vec::new();
    }
    (0..=(x.len() - frame) / hop)
        .map(|k| x[k * hop..k * hop + frame].iter().map(|v| v * v).sum())
        .collect()
}

fn crossing(x: &[f64], i: usize) -> bool {
    x[i] == 0.0 || x[i - 1] == 0.0 || (x[i] > 0.0) != (x[i - 1] > 0.0)
}

/// Moves `start` back to the nearest zero crossing at most `reach` samples earlier.
fn snap_start(x: &[f64], start: usize, reach: usize) -> usize {
    let lo = start.saturating_sub(reach).max(1);
    (lo..=start.min(x.len() - 1)).rev().find(|&i| crossing(x, i)).map_or(start, |i| i - 1)
}

/// Moves the exclusive `end` forward to the nearest zero crossing within `reach`.
fn snap_end(x: &[f64], end: usize, reach: usize) -> usize {
    let end = end.min(x.len());
    let hi = (end + reach).min(x.len() - 1);
    (end.max(1)..=hi).find(|&i| crossing(x, i)).unwrap_or(end)
}

/// Rolling mean/std of the most recent quiet frames.
struct Baseline {
    ring: VecDeque<f64>,
    capacity: usize,
    sum: f64,
    sum_sq: f64,
}

impl Baseline {
    fn seed(first: &[f64], capacity: usize, k_sigma: f64) -> Self {
        let mut sorted = first.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut kept: Vec<f64> = sorted[..sorted.len().div_ceil(4)].to_vec();
        for _ in 0..20 {
            let (m, s) = mean_std(&kept);
            let next: Vec<f64> = sorted.iter().copied().filter(|&e| e <= m + k_sigma * s).collect();
            if next.len() == kept.len() {
                break;
            }
            kept = next;
        }
        let mut b = Self { ring: VecDeque::with_capacity(capacity), capacity, sum: 0.0, sum_sq: 0.0 };
        // Keep time order among the retained frames.
        let limit = kept.last().copied().unwrap_or(0.0);
        for &e in first.iter().filter(|&&e| e <= limit) {
            b.push(e);
        }
        b
    }

    fn push(&mut self, e: f64) {
        if self.ring.len() == self.capacity {
            let old = self.ring.pop_front().expect("non-empty ring");
            self.sum -= old;
            self.sum_sq -= old * old;
        }
        self.ring.push_back(e);
        self.sum += e;
        self.sum_sq += e * e;
    }

    fn threshold(&self, k_sigma: f64) -> f64 {
        let n = self.ring.len() as f64;
        if n == 0.0 {
            return 0.0;
        }
        let mean = self.sum / n;
        let var = (self.sum_sq / n - mean * mean).max(0.0);
        mean + k_sigma * var.sqrt()
    }
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// The samples of `window`, at the source rate.
pub fn slice_event(signal: &TimeSeries, window: &EventWindow) -> Result<TimeSeries> {
    if window.start_index >= window.end_index || window.end_index > signal.len() {
        return invalid(format!(
            "window {}..{} outside signal of {} samples",
            window.start_index,
            window.end_index,
            signal.len()
        ));
    }
    TimeSeries::new(
        signal.samples()[window.start_index..window.end_index].to_vec(),
        signal.sample_rate_hz(),
    )
}

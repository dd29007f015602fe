//! DS8BP compression, decompression, the DS16 baseline and the datagram format.
//!
//! Datagram layout (little-endian), `10 M + 2` bytes:
//!
//! ```text
//! [u16 L][M x u16 atom index][M x f64 coefficient]
//! ```

use serde::{Deserialize, Serialize};

use crate::dictionary::{cached_dictionary, AtomMatrix, ATOMS_PER_SHIFT};
use crate::error::{invalid, Error, Result};
use crate::signal::{decimate, TimeSeries, MAX_EVENT_WIDTH_S, MIN_EVENT_WIDTH_S};
use crate::sparse::{project_least_squares, select_atoms_by_energy, solve_lasso, LassoConfig};

/// Sample rate the codec expects on input.
pub const INPUT_RATE_HZ: f64 = 8000.0;
/// Decimation before sparse coding (8 kHz to 1 kHz).
pub const DS8BP_FACTOR: usize = 8;
/// Decimation of the DS16 baseline (8 kHz to 500 Hz).
pub const DS16_FACTOR: usize = 16;
/// Link rate used for airtime figures.
pub const LINK_RATE_BPS: f64 = 80_000.0;
/// Bytes per DS16 sample on the wire.
pub const DS16_BYTES_PER_SAMPLE: usize = 8;
pub const DEFAULT_ENERGY_FRACTION: f64 = 0.99;

/// What the gate bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// `l_gc <= M <= h_gc`.
    #[default]
    AtomCount,
    /// `l_gc <= L / M <= h_gc`.
    CompressionFactor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    pub l_gc: usize,
    pub h_gc: usize,
    pub mode: GateMode,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { l_gc: 5, h_gc: 40, mode: GateMode::AtomCount }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l_gc == 0 || self.l_gc > self.h_gc {
            return invalid(format!("need 0 < l_gc <= h_gc, got {} and {}", self.l_gc, self.h_gc));
        }
        Ok(())
    }

    /// `None` if an event of length `length_l` with `m` atoms passes.
    pub fn check(&self, length_l: usize, m: usize) -> Option<DiscardReason> {
        if m == 0 {
            return Some(DiscardReason::TooFewAtoms);
        }
        match self.mode {
            GateMode::AtomCount if m < self.l_gc => Some(DiscardReason::TooFewAtoms),
            GateMode::AtomCount if m > self.h_gc => Some(DiscardReason::TooManyAtoms),
            GateMode::CompressionFactor => {
                let factor = length_l as f64 / m as f64;
                if factor < self.l_gc as f64 {
                    Some(DiscardReason::TooManyAtoms)
                } else if factor > self.h_gc as f64 {
                    Some(DiscardReason::TooFewAtoms)
                } else {
                    None
                }
            }
            GateMode::AtomCount => None,
        }
    }
}

/// One compressed footfall: `coefficients[k]` weighs raw dictionary column
/// `atom_indices[k]` of the length-`length_l` dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedEvent {
    coefficients: Vec<f64>,
    atom_indices: Vec<usize>,
    length_l: usize,
}

impl CompressedEvent {
    pub fn new(coefficients: Vec<f64>, atom_indices: Vec<usize>, length_l: usize) -> Result<Self> {
        if coefficients.len() != atom_indices.len() {
            return Err(Error::CorruptEvent(format!(
                "{} coefficients for {} atom indices",
                coefficients.len(),
                atom_indices.len()
            )));
        }
        if coefficients.is_empty() {
            return Err(Error::CorruptEvent("event has no atoms".into()));
        }
        if length_l < 2 {
            return Err(Error::CorruptEvent(format!("length {length_l} below 2")));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::CorruptEvent("non-finite coefficient".into()));
        }
        let num_atoms = ATOMS_PER_SHIFT * length_l;
        let mut seen = std::collections::HashSet::with_capacity(atom_indices.len());
        for &j in &atom_indices {
            if j >= num_atoms {
                return Err(Error::CorruptEvent(format!("atom index {j} outside [0, {num_atoms})")));
            }
            if !seen.insert(j) {
                return Err(Error::CorruptEvent(format!("duplicate atom index {j}")));
            }
        }
        Ok(Self { coefficients, atom_indices, length_l })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn atom_indices(&self) -> &[usize] {
        &self.atom_indices
    }

    pub fn length_l(&self) -> usize {
        self.length_l
    }

    /// Number of atoms `M`.
    pub fn num_atoms(&self) -> usize {
        self.coefficients.len()
    }

    pub fn compression_factor(&self) -> f64 {
        self.length_l as f64 / self.num_atoms() as f64
    }

    pub fn datagram_len(&self) -> usize {
        datagram_len(self.num_atoms())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    /// More atoms than the gate allows: treated as noise.
    TooManyAtoms,
    /// Fewer atoms than the gate allows: not recoverable.
    TooFewAtoms,
    /// The sparse solver did not converge.
    Solver,
}

impl std::fmt::Display for DiscardReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DiscardReason::TooManyAtoms => "too_many_atoms",
            DiscardReason::TooFewAtoms => "too_few_atoms",
            DiscardReason::Solver => "solver",
        })
    }
}

/// Per-event diagnostics, filled for accepted and discarded events alike.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionStats {
    pub length_l: usize,
    /// Atoms left after energy selection (0 if the solver gave up first).
    pub selected_atoms: usize,
    /// Non-zeros in the LASSO solution.
    pub lasso_support: usize,
    pub lasso_sweeps: usize,
    pub converged: bool,
    /// Least squares fell back to a rank-truncated solve.
    pub rank_truncated: bool,
    /// `||D_I c - s|| / ||s||` after projection; NaN when not projected.
    pub relative_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Compression {
    Accepted { event: CompressedEvent, stats: CompressionStats },
    Discarded { reason: DiscardReason, stats: CompressionStats },
}

impl Compression {
    pub fn event(&self) -> Option<&CompressedEvent> {
        match self {
            Compression::Accepted { event, .. } => Some(event),
            Compression::Discarded { .. } => None,
        }
    }

    pub fn stats(&self) -> &CompressionStats {
        match self {
            Compression::Accepted { stats, .. } | Compression::Discarded { stats, .. } => stats,
        }
    }

    pub fn discard_reason(&self) -> Option<DiscardReason> {
        match self {
            Compression::Accepted { .. } => None,
            Compression::Discarded { reason, .. } => Some(*reason),
        }
    }
}

/// Everything that controls DS8BP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecConfig {
    pub gates: GateConfig,
    pub lasso: LassoConfig,
    pub energy_fraction: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            gates: GateConfig::default(),
            lasso: LassoConfig::default(),
            energy_fraction: DEFAULT_ENERGY_FRACTION,
        }
    }
}

/// DS8BP with the default energy fraction.
pub fn compress_ds8bp(event: &TimeSeries, gates: &GateConfig, lasso: &LassoConfig) -> Result<Compression> {
    compress_with(
        event,
        &CodecConfig { gates: *gates, lasso: *lasso, energy_fraction: DEFAULT_ENERGY_FRACTION },
    )
}

/// Decimate by 8, sparse-code over the Gabor dictionary, keep the atoms that
/// carry most of the coefficient energy, gate on their count and re-fit them by
/// least squares.
pub fn compress_with(event: &TimeSeries, config: &CodecConfig) -> Result<Compression> {
    config.gates.validate()?;
    config.lasso.validate()?;
    if event.sample_rate_hz() != INPUT_RATE_HZ {
        return invalid(format!(
            "DS8BP expects {INPUT_RATE_HZ} Hz input, got {} Hz",
            event.sample_rate_hz()
        ));
    }
    let width = event.duration_s();
    if !(MIN_EVENT_WIDTH_S - 1e-9..=MAX_EVENT_WIDTH_S + 1e-9).contains(&width) {
        return invalid(format!(
            "event width {width:.4} s outside [{MIN_EVENT_WIDTH_S}, {MAX_EVENT_WIDTH_S}] s"
        ));
    }
    let ds = decimate(event, DS8BP_FACTOR)?;
    compress_downsampled(ds.samples(), config)
}

/// The sparse-coding half of DS8BP on an already decimated event.
pub fn compress_downsampled(ds: &[f64], config: &CodecConfig) -> Result<Compression> {
    let length_l = ds.len();
    let mut stats = CompressionStats {
        length_l,
        selected_atoms: 0,
        lasso_support: 0,
        lasso_sweeps: 0,
        converged: false,
        rank_truncated: false,
        relative_residual: f64::NAN,
    };
    let scale = ds.iter().map(|v| v * v).sum::<f64>().sqrt();
    if scale == 0.0 {
        return Ok(Compression::Discarded { reason: DiscardReason::TooFewAtoms, stats });
    }
    let dictionary = cached_dictionary(length_l)?;
    // The penalty is relative, so solving on the unit-norm target gives the same
    // support and keeps the tolerances scale free.
    let unit: Vec<f64> = ds.iter().map(|v| v / scale).collect();
    let code = solve_lasso(dictionary.as_ref(), &unit, &config.lasso)?;
    stats.lasso_support = code.len();
    stats.lasso_sweeps = code.sweeps;
    stats.converged = code.converged;
    if !code.converged {
        return Ok(Compression::Discarded { reason: DiscardReason::Solver, stats });
    }
    if code.is_empty() {
        return Ok(Compression::Discarded { reason: DiscardReason::TooFewAtoms, stats });
    }
    let indices = select_atoms_by_energy(&code, length_l, config.energy_fraction)?;
    stats.selected_atoms = indices.len();
    if let Some(reason) = config.gates.check(length_l, indices.len()) {
        return Ok(Compression::Discarded { reason, stats });
    }
    let selected = dictionary.select_columns(&indices)?;
    let projection = project_least_squares(&selected, ds)?;
    stats.rank_truncated = projection.rank_truncated;
    stats.relative_residual = projection.residual_l2 / scale;
    let event = CompressedEvent::new(projection.coefficients, indices, length_l)?;
    Ok(Compression::Accepted { event, stats })
}

/// Rebuilds the 1 kHz event as `D_I * coefficients`.
pub fn decompress(event: &CompressedEvent) -> Result<TimeSeries> {
    let dictionary = cached_dictionary(event.length_l)?;
    let mut out = vec![0.0; event.length_l];
    for (&j, &c) in event.atom_indices.iter().zip(&event.coefficients) {
        if j >= dictionary.cols() {
            return Err(Error::CorruptEvent(format!("atom index {j} outside dictionary")));
        }
        if c != 0.0 {
            out.iter_mut().zip(dictionary.column(j)).for_each(|(o, a)| *o += c * a);
        }
    }
    TimeSeries::new(out, INPUT_RATE_HZ / DS8BP_FACTOR as f64)
}

/// The DS16 baseline: plain decimation to 500 Hz.
pub fn compress_ds16(event: &TimeSeries) -> Result<TimeSeries> {
    decimate(event, DS16_FACTOR)
}

/// `10 M + 2`.
pub fn datagram_len(num_atoms: usize) -> usize {
    10 * num_atoms + 2
}

/// Seconds on an 80 kbps link for `bytes`.
pub fn airtime_s(bytes: usize) -> f64 {
    bytes as f64 * 8.0 / LINK_RATE_BPS
}

/// Airtime of a DS16 event sent as raw 64-bit samples.
pub fn ds16_airtime_s(samples: usize) -> f64 {
    airtime_s(samples * DS16_BYTES_PER_SAMPLE)
}

pub fn encode_datagram(event: &CompressedEvent) -> Result<Vec<u8>> {
    let l = u16::try_from(event.length_l)
        .map_err(|_| Error::EncodingOverflow(format!("length {} exceeds u16", event.length_l)))?;
    let mut out = Vec::with_capacity(event.datagram_len());
    out.extend_from_slice(&l.to_le_bytes());
    for &j in &event.atom_indices {
        let j = u16::try_from(j)
            .map_err(|_| Error::EncodingOverflow(format!("atom index {j} exceeds u16")))?;
        out.extend_from_slice(&j.to_le_bytes());
    }
    for &c in &event.coefficients {
        out.extend_from_slice(&c.to_le_bytes());
    }
    debug_assert_eq!(out.len(), event.datagram_len());
    Ok(out)
}

pub fn decode_datagram(bytes: &[u8]) -> Result<CompressedEvent> {
    if bytes.len() < 12 || bytes.len() % 10 != 2 {
        return Err(Error::MalformedDatagram(format!(
            "length {} is not 10 M + 2 with M >= 1",
            bytes.len()
        )));
    }
    let m = (bytes.len() - 2) / 10;
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let length_l = u16_at(0) as usize;
    let indices = (0..m).map(|k| u16_at(2 + 2 * k) as usize).collect();
    let base = 2 + 2 * m;
    let coefficients = (0..m)
        .map(|k| {
            let at = base + 8 * k;
            f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"))
        })
        .collect();
    CompressedEvent::new(coefficients, indices, length_l)
}

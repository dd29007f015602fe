//! Experiment sweeps over a synthetic multi-person corpus.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{cross_validate, ClassifierKind, CvReport, Hyperparams};
use crate::codec::{compress_downsampled, compress_ds16, decompress, CodecConfig, Compression, DS8BP_FACTOR, INPUT_RATE_HZ};
use crate::error::{invalid, Error, Result};
use crate::events::{extract_events, slice_event, DetectorConfig};
use crate::features::{aggregate_walk, extract_features, AggregatedSample, FeatureVector};
use crate::signal::{decimate, generate_walk, synthetic_profiles, SyntheticPersonProfile, TimeSeries};

/// Reference accuracies of the RBF SVM on the original (private) corpus, by footsteps per sample.
pub const REFERENCE_SVM_RBF_ACCURACY: [(usize, f64); 3] = [(1, 71.2), (5, 90.4), (10, 95.3)];
/// Reference compression factor mean and std on the original corpus.
pub const REFERENCE_COMPRESSION_FACTOR: (f64, f64) = (13.54, 4.68);
/// Reference mean atom count and airtime (s) on the original corpus.
pub const REFERENCE_MEAN_ATOMS: f64 = 18.51;
pub const REFERENCE_MEAN_AIRTIME_S: f64 = 0.01871;

/// Stable per-component seed: the first 8 bytes of SHA-256 over the master seed and the name.
pub fn derive_seed(seed: u64, component: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(component.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub profiles: usize,
    pub footsteps_per_profile: usize,
    pub walk_duration_s: f64,
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self { profiles: 8, footsteps_per_profile: 2000, walk_duration_s: 10.0, snr_db: 20.0, seed: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkSpec {
    pub profile: usize,
    pub seed: u64,
}

/// A seeded set of walkers and the walks to generate for each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub profiles: Vec<SyntheticPersonProfile>,
    pub walks: Vec<WalkSpec>,
}

/// Walk start-up time before the first footstep, as generated.
const EXPECTED_LEAD_S: f64 = 0.55;

impl Corpus {
    pub fn new(config: &CorpusConfig) -> Result<Self> {
        if config.profiles < 2 || config.footsteps_per_profile == 0 {
            return invalid("corpus needs at least 2 profiles and 1 footstep per profile");
        }
        let profiles = synthetic_profiles(config.profiles, derive_seed(config.seed, "profiles"), config.snr_db);
        let mut walks = Vec::new();
        for (p, profile) in profiles.iter().enumerate() {
            let per_walk = ((config.walk_duration_s - EXPECTED_LEAD_S) / profile.cadence_mean_s).floor().max(1.0);
            let count = (config.footsteps_per_profile as f64 / per_walk).ceil() as usize;
            for w in 0..count {
                walks.push(WalkSpec { profile: p, seed: derive_seed(config.seed, &format!("walk/{p}/{w}")) });
            }
        }
        Ok(Corpus { config: config.clone(), profiles, walks })
    }

    /// The 8 kHz walk signal.
    pub fn signal(&self, walk: &WalkSpec) -> Result<TimeSeries> {
        let (signal, _) = generate_walk(&self.profiles[walk.profile], self.config.walk_duration_s, INPUT_RATE_HZ, walk.seed)?;
        Ok(signal)
    }

    pub fn label(&self, walk: &WalkSpec) -> u32 {
        self.profiles[walk.profile].person_id
    }

    /// Walks keeping only the first `per_profile` of each profile.
    pub fn subset(&self, per_profile: usize) -> Vec<WalkSpec> {
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        self.walks
            .iter()
            .filter(|w| {
                let n = seen.entry(w.profile).or_default();
                *n += 1;
                *n <= per_profile
            })
            .copied()
            .collect()
    }
}

/// How events reach the feature extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodecArm {
    /// Raw 8 kHz events.
    Nc,
    /// Decimated to 500 Hz.
    Ds16,
    /// Compressed and rebuilt at 1 kHz; discarded events never arrive.
    Ds8bp,
}

impl CodecArm {
    pub const ALL: [CodecArm; 3] = [Self::Nc, Self::Ds16, Self::Ds8bp];

    pub fn name(self) -> &'static str {
        match self {
            Self::Nc => "NC",
            Self::Ds16 => "DS16",
            Self::Ds8bp => "DS8BP",
        }
    }
}

/// Footstep features of one walk, in onset order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkFeatures {
    pub label: u32,
    pub footsteps: Vec<FeatureVector>,
}

/// Non-overlapping F-footstep samples from every walk.
pub fn build_samples(walks: &[WalkFeatures], f_count: usize) -> Result<Vec<AggregatedSample>> {
    let mut out = Vec::new();
    for w in walks {
        out.extend(aggregate_walk(&w.footsteps, f_count, Some(w.label))?);
    }
    Ok(out)
}

/// Features for events given as (onset, samples); cadence runs from one delivered event to the next.
/// Events whose features are undefined are skipped.
pub fn features_for_events(events: &[(f64, TimeSeries)]) -> Vec<FeatureVector> {
    let mut out = Vec::with_capacity(events.len());
    let mut prev = None;
    for (onset, ev) in events {
        match extract_features(ev, prev, *onset) {
            Ok(fv) => {
                out.push(fv);
                prev = Some(*onset);
            }
            Err(e) => log::debug!("skipping event at {onset:.3} s: {e}"),
        }
    }
    out
}

/// Events of `signal` as (onset, event).
pub fn walk_events(signal: &TimeSeries, detector: &DetectorConfig) -> Result<Vec<(f64, TimeSeries)>> {
    extract_events(signal, detector)?
        .iter()
        .map(|w| Ok((w.onset_time_s, slice_event(signal, w)?)))
        .collect()
}

/// Compression statistics gathered while building DS8BP features.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CodecTally {
    pub events: usize,
    pub accepted: usize,
    pub discarded: BTreeMap<String, usize>,
    /// (L, M) of every accepted event.
    pub accepted_shapes: Vec<(usize, usize)>,
}

/// Per-walk features at `rate_hz` through `arm`.
///
/// Events are always detected on the walk at `rate_hz`; the codec arms expect 8 kHz.
pub fn corpus_features(
    corpus: &Corpus,
    walks: &[WalkSpec],
    rate_hz: f64,
    arm: CodecArm,
    detector: &DetectorConfig,
    codec: &CodecConfig,
) -> Result<(Vec<WalkFeatures>, CodecTally)> {
    if arm != CodecArm::Nc && rate_hz != INPUT_RATE_HZ {
        return invalid("codec arms run on 8 kHz events");
    }
    let factor = check_rate(rate_hz)?;
    let mut tally = CodecTally::default();
    let mut per_walk: Vec<Vec<(f64, TimeSeries)>> = Vec::with_capacity(walks.len());
    for walk in walks {
        let events = arm_events(&corpus.signal(walk)?, factor, arm, detector)?;
        tally.events += events.len();
        per_walk.push(events);
    }
    if arm == CodecArm::Ds8bp {
        per_walk = ds8bp_round_trip(per_walk, codec, &mut tally)?;
    } else {
        tally.accepted = tally.events;
    }
    let features = walks
        .iter()
        .zip(&per_walk)
        .map(|(w, events)| WalkFeatures { label: corpus.label(w), footsteps: features_for_events(events) })
        .collect();
    Ok((features, tally))
}

/// Detected events of `signal` after decimating by `factor`, prepared for `arm`.
/// DS8BP events come back decimated to 1 kHz but not yet coded.
fn arm_events(signal: &TimeSeries, factor: usize, arm: CodecArm, detector: &DetectorConfig) -> Result<Vec<(f64, TimeSeries)>> {
    let events = if factor > 1 {
        walk_events(&decimate(signal, factor)?, detector)?
    } else {
        walk_events(signal, detector)?
    };
    match arm {
        CodecArm::Nc => Ok(events),
        CodecArm::Ds16 => events.into_iter().map(|(t, ev)| Ok((t, compress_ds16(&ev)?))).collect(),
        CodecArm::Ds8bp => events.into_iter().map(|(t, ev)| Ok((t, decimate(&ev, DS8BP_FACTOR)?))).collect(),
    }
}

/// Footstep features of one recorded signal, detected at `rate_hz` and passed through `arm`.
pub fn signal_features(
    signal: &TimeSeries,
    rate_hz: f64,
    arm: CodecArm,
    detector: &DetectorConfig,
    codec: &CodecConfig,
) -> Result<(Vec<FeatureVector>, CodecTally)> {
    let input = signal.sample_rate_hz();
    if arm != CodecArm::Nc && (input != INPUT_RATE_HZ || rate_hz != INPUT_RATE_HZ) {
        return invalid("codec arms run on 8 kHz events");
    }
    let factor = if rate_hz == input { 1 } else if input == INPUT_RATE_HZ { check_rate(rate_hz)? } else {
        return invalid(format!("can only resample 8 kHz input, got {input} Hz"));
    };
    let events = arm_events(signal, factor, arm, detector)?;
    let mut tally = CodecTally { events: events.len(), ..Default::default() };
    let events = if arm == CodecArm::Ds8bp {
        ds8bp_round_trip(vec![events], codec, &mut tally)?.remove(0)
    } else {
        tally.accepted = tally.events;
        events
    };
    Ok((features_for_events(&events), tally))
}

/// Compresses every decimated event and keeps the rebuilt accepted ones.
/// Events are coded in order of length so consecutive events share a dictionary.
fn ds8bp_round_trip(
    per_walk: Vec<Vec<(f64, TimeSeries)>>,
    codec: &CodecConfig,
    tally: &mut CodecTally,
) -> Result<Vec<Vec<(f64, TimeSeries)>>> {
    let mut order: Vec<(usize, usize)> = per_walk
        .iter()
        .enumerate()
        .flat_map(|(w, evs)| (0..evs.len()).map(move |e| (w, e)))
        .collect();
    order.sort_by_key(|&(w, e)| (per_walk[w][e].1.len(), w, e));
    let mut rebuilt: Vec<Vec<Option<TimeSeries>>> = per_walk.iter().map(|evs| vec![None; evs.len()]).collect();
    for (w, e) in order {
        match compress_downsampled(per_walk[w][e].1.samples(), codec)? {
            Compression::Accepted { event, .. } => {
                tally.accepted += 1;
                tally.accepted_shapes.push((event.length_l(), event.num_atoms()));
                rebuilt[w][e] = Some(decompress(&event)?);
            }
            Compression::Discarded { reason, .. } => {
                *tally.discarded.entry(reason.to_string()).or_default() += 1;
            }
        }
    }
    Ok(per_walk
        .into_iter()
        .zip(rebuilt)
        .map(|(evs, out)| {
            evs.into_iter()
                .zip(out)
                .filter_map(|((t, _), r)| r.map(|r| (t, r)))
                .collect()
        })
        .collect())
}

/// Decimation factor from 8 kHz to `rate_hz`.
pub fn check_rate(rate_hz: f64) -> Result<usize> {
    if rate_hz < 250.0 {
        return invalid(format!("sampling rate {rate_hz} Hz is below 250 Hz"));
    }
    let factor = INPUT_RATE_HZ / rate_hz;
    if factor.fract() != 0.0 {
        return invalid(format!("sampling rate {rate_hz} Hz does not divide {INPUT_RATE_HZ} Hz"));
    }
    Ok(factor as usize)
}

/// Everything one sweep depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub corpus: CorpusConfig,
    pub detector: DetectorConfig,
    pub codec: CodecConfig,
    pub folds: usize,
    pub seed: u64,
    pub kinds: Vec<ClassifierKind>,
    pub f_values: Vec<usize>,
    pub rates_hz: Vec<f64>,
    /// F used by the sampling and codec sweeps.
    pub sweep_f: usize,
    /// Walks per profile that go through the codec sweep; `None` uses all.
    pub codec_walks_per_profile: Option<usize>,
    /// Walks per profile timed for EDT and FET.
    pub timing_walks_per_profile: usize,
    pub timing_runs: usize,
    pub hyperparams: BTreeMap<ClassifierKind, Hyperparams>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig::default(),
            detector: DetectorConfig::default(),
            codec: CodecConfig::default(),
            folds: 5,
            seed: 1,
            kinds: ClassifierKind::ALL.to_vec(),
            f_values: vec![1, 3, 5, 7],
            rates_hz: vec![8000.0, 4000.0, 2000.0, 1000.0, 500.0],
            sweep_f: 1,
            codec_walks_per_profile: Some(36),
            timing_walks_per_profile: 2,
            timing_runs: 5,
            hyperparams: ClassifierKind::ALL.into_iter().map(|k| (k, Hyperparams::default_for(k))).collect(),
        }
    }
}

impl HarnessConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: HarnessConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        self.codec.gates.validate()?;
        self.codec.lasso.validate()?;
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if self.kinds.is_empty() || self.f_values.is_empty() || self.rates_hz.is_empty() {
            return Err(Error::Config("kinds, f_values and rates_hz must be non-empty".into()));
        }
        if self.f_values.contains(&0) || self.sweep_f == 0 {
            return Err(Error::Config("footstep counts must be positive".into()));
        }
        for &r in &self.rates_hz {
            check_rate(r)?;
        }
        for kind in &self.kinds {
            self.hyperparams(*kind).validate()?;
        }
        Ok(())
    }

    pub fn hyperparams(&self, kind: ClassifierKind) -> Hyperparams {
        self.hyperparams.get(&kind).cloned().unwrap_or_else(|| Hyperparams::default_for(kind))
    }

    /// SHA-256 over the serialized configuration, hex encoded.
    pub fn fingerprint(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn codec_walks(&self, corpus: &Corpus) -> Vec<WalkSpec> {
        match self.codec_walks_per_profile {
            Some(n) => corpus.subset(n),
            None => corpus.walks.clone(),
        }
    }
}

/// One cross-validated cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub kind: ClassifierKind,
    pub f_count: usize,
    pub samples: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub f1_mean: f64,
    pub note: Option<String>,
}

fn cv_cell(samples: &[AggregatedSample], kind: ClassifierKind, f_count: usize, cfg: &HarnessConfig) -> Result<Cell> {
    let seed = derive_seed(cfg.seed, &format!("cv/{kind}/{f_count}"));
    let per_class = samples.iter().fold(BTreeMap::<u32, usize>::new(), |mut m, s| {
        *m.entry(s.label.unwrap_or(u32::MAX)).or_default() += 1;
        m
    });
    if samples.len() < cfg.folds || per_class.len() < 2 || per_class.values().any(|&n| n < 2) {
        return Ok(Cell {
            kind,
            f_count,
            samples: samples.len(),
            accuracy_mean: f64::NAN,
            accuracy_std: f64::NAN,
            f1_mean: f64::NAN,
            note: Some("too few samples".into()),
        });
    }
    let report: CvReport = cross_validate(samples, kind, &cfg.hyperparams(kind), cfg.folds, seed)?;
    Ok(Cell {
        kind,
        f_count,
        samples: samples.len(),
        accuracy_mean: report.accuracy_mean,
        accuracy_std: report.accuracy_std,
        f1_mean: report.f1_mean,
        note: None,
    })
}

/// Accuracy per (kind, F).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootstepsTable {
    pub fingerprint: String,
    pub cells: Vec<Cell>,
}

impl FootstepsTable {
    pub fn accuracy(&self, kind: ClassifierKind, f_count: usize) -> Option<f64> {
        self.cells.iter().find(|c| c.kind == kind && c.f_count == f_count).map(|c| c.accuracy_mean)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# config {}\nkind,f,samples,accuracy_mean,accuracy_std,f1_mean,note\n", self.fingerprint);
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{:.6},{:.6},{:.6},{}",
                c.kind, c.f_count, c.samples, c.accuracy_mean, c.accuracy_std, c.f1_mean,
                c.note.as_deref().unwrap_or("")
            );
        }
        s
    }
}

/// Cross-validated accuracy for every kind and F over precomputed walk features.
pub fn sweep_footsteps(walks: &[WalkFeatures], kinds: &[ClassifierKind], f_values: &[usize], cfg: &HarnessConfig) -> Result<FootstepsTable> {
    let mut cells = Vec::new();
    for &f in f_values {
        let samples = build_samples(walks, f)?;
        for &kind in kinds {
            let cell = cv_cell(&samples, kind, f, cfg)?;
            log::info!("footsteps F={f} {kind}: {:.4} over {} samples", cell.accuracy_mean, cell.samples);
            cells.push(cell);
        }
    }
    Ok(FootstepsTable { fingerprint: cfg.fingerprint(), cells })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingRow {
    pub rate_hz: f64,
    pub events: usize,
    /// Median extraction time per event, seconds.
    pub edt_s: f64,
    /// Median feature extraction time per sample, seconds.
    pub fet_s: f64,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingTable {
    pub fingerprint: String,
    pub rows: Vec<SamplingRow>,
}

impl SamplingTable {
    pub fn accuracy(&self, rate_hz: f64, kind: ClassifierKind) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.rate_hz == rate_hz)
            .and_then(|r| r.cells.iter().find(|c| c.kind == kind))
            .map(|c| c.accuracy_mean)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# config {}\nrate_hz,kind,f,samples,accuracy_mean,accuracy_std,edt_s,fet_s\n", self.fingerprint);
        for r in &self.rows {
            for c in &r.cells {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{:.6},{:.6},{:.9},{:.9}",
                    r.rate_hz, c.kind, c.f_count, c.samples, c.accuracy_mean, c.accuracy_std, r.edt_s, r.fet_s
                );
            }
        }
        s
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// EDT and FET at `rate_hz`: median over `runs` timed passes after one warm-up.
pub fn time_rate(signals: &[TimeSeries], detector: &DetectorConfig, runs: usize) -> Result<(f64, f64)> {
    let mut edt = Vec::with_capacity(runs);
    let mut fet = Vec::with_capacity(runs);
    for run in 0..=runs {
        let mut events = Vec::new();
        let t0 = Instant::now();
        for s in signals {
            events.push(walk_events(s, detector)?);
        }
        let extract = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let footsteps: usize = events.iter().map(|e| features_for_events(e).len()).sum();
        let feat = t1.elapsed().as_secs_f64();
        let count: usize = events.iter().map(Vec::len).sum();
        if run > 0 {
            edt.push(extract / count.max(1) as f64);
            fet.push(feat / footsteps.max(1) as f64);
        }
    }
    Ok((median(edt), median(fet)))
}

/// Accuracy, EDT and FET after decimating the 8 kHz corpus to each rate.
pub fn sweep_sampling(corpus: &Corpus, cfg: &HarnessConfig) -> Result<SamplingTable> {
    let timing_walks = corpus.subset(cfg.timing_walks_per_profile);
    let mut rows = Vec::new();
    for &rate in &cfg.rates_hz {
        let factor = check_rate(rate)?;
        let (walks, tally) = corpus_features(corpus, &corpus.walks, rate, CodecArm::Nc, &cfg.detector, &cfg.codec)?;
        let samples = build_samples(&walks, cfg.sweep_f)?;
        let cells = cfg
            .kinds
            .iter()
            .map(|&k| cv_cell(&samples, k, cfg.sweep_f, cfg))
            .collect::<Result<Vec<_>>>()?;
        let signals = timing_walks
            .iter()
            .map(|w| {
                let s = corpus.signal(w)?;
                if factor > 1 { decimate(&s, factor) } else { Ok(s) }
            })
            .collect::<Result<Vec<_>>>()?;
        let (edt_s, fet_s) = time_rate(&signals, &cfg.detector, cfg.timing_runs)?;
        log::info!("sampling {rate} Hz: {} events, EDT {edt_s:.2e} s, FET {fet_s:.2e} s", tally.events);
        rows.push(SamplingRow { rate_hz: rate, events: tally.events, edt_s, fet_s, cells });
    }
    Ok(SamplingTable { fingerprint: cfg.fingerprint(), rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecRow {
    pub codec: CodecArm,
    pub tally: CodecTally,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecTable {
    pub fingerprint: String,
    pub rows: Vec<CodecRow>,
}

impl CodecTable {
    pub fn accuracy(&self, codec: CodecArm, kind: ClassifierKind, f_count: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.codec == codec)
            .and_then(|r| r.cells.iter().find(|c| c.kind == kind && c.f_count == f_count))
            .map(|c| c.accuracy_mean)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# config {}\ncodec,kind,f,samples,accuracy_mean,accuracy_std,events,delivered\n", self.fingerprint);
        for r in &self.rows {
            for c in &r.cells {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{:.6},{:.6},{},{}",
                    r.codec.name(), c.kind, c.f_count, c.samples, c.accuracy_mean, c.accuracy_std,
                    r.tally.events, r.tally.accepted
                );
            }
        }
        s
    }
}

/// The classification stack on raw, DS16 and DS8BP-rebuilt events of the codec subset.
pub fn compare_codecs(corpus: &Corpus, kinds: &[ClassifierKind], f_values: &[usize], cfg: &HarnessConfig) -> Result<CodecTable> {
    let walks = cfg.codec_walks(corpus);
    let mut rows = Vec::new();
    for arm in CodecArm::ALL {
        let (features, tally) = corpus_features(corpus, &walks, INPUT_RATE_HZ, arm, &cfg.detector, &cfg.codec)?;
        let mut cells = Vec::new();
        for &f in f_values {
            let samples = build_samples(&features, f)?;
            for &kind in kinds {
                cells.push(cv_cell(&samples, kind, f, cfg)?);
            }
        }
        log::info!("codec {}: {}/{} events delivered", arm.name(), tally.accepted, tally.events);
        rows.push(CodecRow { codec: arm, tally, cells });
    }
    Ok(CodecTable { fingerprint: cfg.fingerprint(), rows })
}

/// Distribution of L/M over accepted events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionHistogram {
    pub fingerprint: String,
    pub factors: Vec<f64>,
    pub atoms: Vec<usize>,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub std: f64,
    pub events: usize,
    pub discarded: BTreeMap<String, usize>,
}

impl CompressionHistogram {
    pub fn from_tally(tally: &CodecTally, bin_width: f64, fingerprint: String) -> Self {
        let factors: Vec<f64> = tally.accepted_shapes.iter().map(|&(l, m)| l as f64 / m as f64).collect();
        let atoms = tally.accepted_shapes.iter().map(|&(_, m)| m).collect();
        let n = factors.len().max(1) as f64;
        let mean = factors.iter().sum::<f64>() / n;
        let std = (factors.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / n).sqrt();
        let top = factors.iter().copied().fold(0.0, f64::max);
        let bins = ((top / bin_width).floor() as usize + 1).max(1);
        let mut counts = vec![0; bins];
        for f in &factors {
            counts[((f / bin_width).floor() as usize).min(bins - 1)] += 1;
        }
        CompressionHistogram {
            fingerprint,
            bin_edges: (0..=bins).map(|i| i as f64 * bin_width).collect(),
            counts,
            factors,
            atoms,
            mean,
            std,
            events: tally.events,
            discarded: tally.discarded.clone(),
        }
    }

    pub fn mean_atoms(&self) -> f64 {
        self.atoms.iter().sum::<usize>() as f64 / self.atoms.len().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# config {}\nbin_lo,bin_hi,count\n", self.fingerprint);
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", self.bin_edges[i], self.bin_edges[i + 1], c);
        }
        s
    }
}

/// Compression factors of the codec subset.
pub fn histogram_compression(corpus: &Corpus, cfg: &HarnessConfig) -> Result<CompressionHistogram> {
    let walks = cfg.codec_walks(corpus);
    let (_, tally) = corpus_features(corpus, &walks, INPUT_RATE_HZ, CodecArm::Ds8bp, &cfg.detector, &cfg.codec)?;
    Ok(CompressionHistogram::from_tally(&tally, 1.0, cfg.fingerprint()))
}

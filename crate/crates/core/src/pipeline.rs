//! In-process Thing / Fog / Cloud simulator.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::{train, ClassifierKind, ClassifierModel};
use crate::codec::{airtime_s, compress_with, decode_datagram, decompress, encode_datagram, CodecConfig, Compression, DiscardReason, LINK_RATE_BPS};
use crate::error::{invalid, Error, Result};
use crate::events::{extract_events, slice_event, DetectorConfig};
use crate::features::{aggregate_sample, extract_features, FeatureVector};
use crate::harness::{build_samples, corpus_features, derive_seed, CodecArm, Corpus, CorpusConfig};
use crate::signal::{generate_walk, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub data_rate_bps: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        Self { data_rate_bps: LINK_RATE_BPS }
    }
}

impl LinkModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.data_rate_bps > 0.0 && self.data_rate_bps.is_finite()) {
            return invalid("data_rate_bps must be positive");
        }
        Ok(())
    }

    pub fn airtime_s(&self, bytes: usize) -> f64 {
        if self.data_rate_bps == LINK_RATE_BPS {
            airtime_s(bytes)
        } else {
            bytes as f64 * 8.0 / self.data_rate_bps
        }
    }
}

/// One datagram on its way from a Thing to its Fog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkFrame {
    pub subzone_id: String,
    /// Event onset in the Thing's clock, seconds. Carried next to the payload.
    pub onset_s: f64,
    pub payload: Vec<u8>,
    pub airtime_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ThingOutput {
    pub frames: Vec<LinkFrame>,
    pub discarded: Vec<(f64, DiscardReason)>,
}

/// Extracts, compresses and encodes every event of one capture window.
/// `time_offset_s` shifts onsets into the Thing's running clock.
pub fn run_thing(
    subzone_id: &str,
    signal: &TimeSeries,
    time_offset_s: f64,
    detector: &DetectorConfig,
    codec: &CodecConfig,
    link: &LinkModel,
) -> Result<ThingOutput> {
    link.validate()?;
    let mut out = ThingOutput::default();
    for window in extract_events(signal, detector)? {
        let onset = time_offset_s + window.onset_time_s;
        match compress_with(&slice_event(signal, &window)?, codec)? {
            Compression::Accepted { event, .. } => {
                let payload = encode_datagram(&event)?;
                out.frames.push(LinkFrame {
                    subzone_id: subzone_id.to_string(),
                    onset_s: onset,
                    airtime_s: link.airtime_s(payload.len()),
                    payload,
                });
            }
            Compression::Discarded { reason, .. } => {
                log::debug!("{subzone_id}: event at {onset:.3} s discarded ({reason})");
                out.discarded.push((onset, reason));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationRecord {
    /// Onset of the last footstep in the sample, seconds.
    pub timestamp: f64,
    pub zone_id: String,
    pub subzone_id: String,
    pub predicted_person: u32,
    pub confidence: f64,
    pub f_count: usize,
}

impl IdentificationRecord {
    /// Identity used when merging stores.
    pub fn key(&self) -> (String, String, u64) {
        (self.zone_id.clone(), self.subzone_id.clone(), self.timestamp.to_bits())
    }
}

#[derive(Debug, Default, Clone)]
struct ThingState {
    prev_onset: Option<f64>,
    buffer: Vec<FeatureVector>,
}

/// Decodes, rebuilds and classifies the datagrams of one zone.
/// Footsteps are buffered per Thing until F of them are available.
#[derive(Debug)]
pub struct FogNode<'m> {
    pub zone_id: String,
    model: &'m ClassifierModel,
    f_count: usize,
    things: BTreeMap<String, ThingState>,
    pub skipped: usize,
}

impl<'m> FogNode<'m> {
    pub fn new(zone_id: &str, model: &'m ClassifierModel, f_count: usize) -> Result<Self> {
        if f_count == 0 {
            return invalid("f_count must be at least 1");
        }
        if model.f_count != f_count {
            return invalid(format!("model was trained on F = {}, fog runs F = {f_count}", model.f_count));
        }
        Ok(FogNode { zone_id: zone_id.to_string(), model, f_count, things: BTreeMap::new(), skipped: 0 })
    }

    /// Handles one frame; returns a record when it completes a sample.
    /// Malformed frames are logged and skipped.
    pub fn receive(&mut self, frame: &LinkFrame) -> Result<Option<IdentificationRecord>> {
        let footstep = decode_datagram(&frame.payload).and_then(|ev| decompress(&ev)).and_then(|ev| {
            let state = self.things.get(&frame.subzone_id);
            extract_features(&ev, state.and_then(|s| s.prev_onset), frame.onset_s)
        });
        let footstep = match footstep {
            Ok(f) => f,
            Err(e @ (Error::MalformedDatagram(_) | Error::CorruptEvent(_) | Error::DegenerateEvent(_))) => {
                log::warn!("{}/{}: skipping frame at {:.3} s: {e}", self.zone_id, frame.subzone_id, frame.onset_s);
                self.skipped += 1;
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        let state = self.things.entry(frame.subzone_id.clone()).or_default();
        state.prev_onset = Some(frame.onset_s);
        state.buffer.push(footstep);
        if state.buffer.len() < self.f_count {
            return Ok(None);
        }
        let sample = aggregate_sample(&std::mem::take(&mut state.buffer), self.f_count, None)?;
        let (label, confidence) = self.model.predict_sample(&sample)?;
        Ok(Some(IdentificationRecord {
            timestamp: frame.onset_s,
            zone_id: self.zone_id.clone(),
            subzone_id: frame.subzone_id.clone(),
            predicted_person: label,
            confidence,
            f_count: self.f_count,
        }))
    }

    /// Footsteps held for each Thing.
    pub fn pending(&self) -> BTreeMap<String, usize> {
        self.things.iter().map(|(k, s)| (k.clone(), s.buffer.len())).collect()
    }
}

/// Runs a fresh Fog over an ordered frame stream.
pub fn run_fog(zone_id: &str, frames: &[LinkFrame], model: &ClassifierModel, f_count: usize) -> Result<Vec<IdentificationRecord>> {
    let mut fog = FogNode::new(zone_id, model, f_count)?;
    let mut out = Vec::new();
    for frame in frames {
        out.extend(fog.receive(frame)?);
    }
    Ok(out)
}

/// Append-only newline-delimited JSON record file.
#[derive(Debug, Clone)]
pub struct RecordStore {
    path: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct StoreLine {
    seq: u64,
    record: IdentificationRecord,
}

impl RecordStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        RecordStore { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// All records in append order; a missing file is an empty store.
    pub fn read(&self) -> Result<Vec<IdentificationRecord>> {
        let file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut out = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str::<StoreLine>(&line)?.record);
        }
        Ok(out)
    }

    pub fn append(&self, records: &[IdentificationRecord]) -> Result<()> {
        let start = self.read()?.len() as u64;
        let mut file = OpenOptions::new().create(true).append(true).open(&self.path)?;
        for (i, record) in records.iter().enumerate() {
            let line = StoreLine { seq: start + i as u64, record: record.clone() };
            writeln!(file, "{}", serde_json::to_string(&line)?)?;
        }
        Ok(())
    }
}

/// Adds every fog record missing from `cloud`; returns how many were added.
pub fn merge_records(fogs: &[Vec<IdentificationRecord>], cloud: &mut Vec<IdentificationRecord>) -> usize {
    let mut seen: BTreeSet<_> = cloud.iter().map(IdentificationRecord::key).collect();
    let before = cloud.len();
    for record in fogs.iter().flatten() {
        if seen.insert(record.key()) {
            cloud.push(record.clone());
        }
    }
    cloud.len() - before
}

#[derive(Debug, Default)]
pub struct SyncReport {
    pub added: usize,
    pub failed: Vec<(PathBuf, String)>,
}

/// Copies new fog records into the cloud store. Unreadable fog stores are listed and skipped.
pub fn sync_cloud(fogs: &[RecordStore], cloud: &RecordStore) -> Result<SyncReport> {
    let mut report = SyncReport::default();
    let mut readable = Vec::new();
    for fog in fogs {
        match fog.read() {
            Ok(r) => readable.push(r),
            Err(e) => report.failed.push((fog.path.clone(), e.to_string())),
        }
    }
    let mut merged = cloud.read()?;
    let before = merged.len();
    report.added = merge_records(&readable, &mut merged);
    cloud.append(&merged[before..])?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneConfig {
    pub id: String,
    pub subzones: Vec<String>,
}

/// The simulated deployment: zones, sub-zones, capture windows and the walker in each sub-zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub seed: u64,
    pub window_s: f64,
    pub windows: usize,
    pub f_count: usize,
    pub kind: ClassifierKind,
    pub corpus: CorpusConfig,
    pub detector: DetectorConfig,
    pub codec: CodecConfig,
    pub link: LinkModel,
    pub zones: Vec<ZoneConfig>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            seed: 1,
            window_s: 10.0,
            windows: 3,
            f_count: 3,
            kind: ClassifierKind::Logistic,
            corpus: CorpusConfig { footsteps_per_profile: 300, ..CorpusConfig::default() },
            detector: DetectorConfig::default(),
            codec: CodecConfig::default(),
            link: LinkModel::default(),
            zones: vec![
                ZoneConfig { id: "Z-1".into(), subzones: vec!["S-1".into(), "S-2".into()] },
                ZoneConfig { id: "Z-2".into(), subzones: vec!["S-1".into(), "S-2".into()] },
            ],
        }
    }
}

impl SimulationConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimulationConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.zones.is_empty() {
            return Err(Error::Config("topology has no zones".into()));
        }
        let mut zone_ids = BTreeSet::new();
        for z in &self.zones {
            if !zone_ids.insert(&z.id) {
                return Err(Error::Config(format!("duplicate zone {}", z.id)));
            }
            let mut subs = BTreeSet::new();
            if z.subzones.is_empty() {
                return Err(Error::Config(format!("zone {} has no sub-zones", z.id)));
            }
            for s in &z.subzones {
                if !subs.insert(s) {
                    return Err(Error::Config(format!("duplicate sub-zone {s} in zone {}", z.id)));
                }
            }
        }
        if !(self.window_s > 0.0) || self.windows == 0 || self.f_count == 0 {
            return Err(Error::Config("window_s, windows and f_count must be positive".into()));
        }
        self.link.validate()
    }

    /// Walker assigned to each (zone, sub-zone), cycling through the corpus profiles.
    pub fn walkers(&self) -> Vec<(String, String, usize)> {
        let mut out = Vec::new();
        for z in &self.zones {
            for s in &z.subzones {
                out.push((z.id.clone(), s.clone(), out.len() % self.corpus.profiles));
            }
        }
        out
    }
}

/// Trains the model the Fogs use on the configured corpus, passed through DS8BP like the live path.
pub fn train_fog_model(cfg: &SimulationConfig) -> Result<ClassifierModel> {
    let corpus = Corpus::new(&cfg.corpus)?;
    let (walks, _) = corpus_features(&corpus, &corpus.walks, crate::codec::INPUT_RATE_HZ, CodecArm::Ds8bp, &cfg.detector, &cfg.codec)?;
    let samples = build_samples(&walks, cfg.f_count)?;
    train(&samples, cfg.kind, &crate::classify::Hyperparams::default_for(cfg.kind), derive_seed(cfg.seed, "fog-model"))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ZoneSummary {
    pub zone_id: String,
    pub frames: usize,
    pub discarded: usize,
    pub skipped: usize,
    pub records: usize,
    pub mean_airtime_s: f64,
    /// Records naming the walker actually in that sub-zone.
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub zones: Vec<ZoneSummary>,
    pub cloud_records: usize,
}

/// The 8 kHz capture of one Thing in one window.
pub fn capture(cfg: &SimulationConfig, corpus: &Corpus, zone: &str, subzone: &str, profile: usize, window: usize) -> Result<TimeSeries> {
    let seed = derive_seed(cfg.seed, &format!("thing/{zone}/{subzone}/{window}"));
    let (signal, _) = generate_walk(&corpus.profiles[profile], cfg.window_s, crate::codec::INPUT_RATE_HZ, seed)?;
    Ok(signal)
}

/// Runs every window through every Thing and Fog, writes one store per Fog under
/// `out_dir`, then syncs them into `cloud.ndjson`.
pub fn simulate(cfg: &SimulationConfig, model: &ClassifierModel, out_dir: &Path) -> Result<SimulationReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let corpus = Corpus::new(&cfg.corpus)?;
    let walkers = cfg.walkers();
    let mut stores = Vec::new();
    let mut zones = Vec::new();
    for zone in &cfg.zones {
        let mut fog = FogNode::new(&zone.id, model, cfg.f_count)?;
        let store = RecordStore::new(out_dir.join(format!("fog-{}.ndjson", zone.id)));
        let mut summary = ZoneSummary { zone_id: zone.id.clone(), ..Default::default() };
        let mut airtime = 0.0;
        let truth: BTreeMap<&str, u32> = walkers
            .iter()
            .filter(|(z, _, _)| *z == zone.id)
            .map(|(_, s, p)| (s.as_str(), corpus.profiles[*p].person_id))
            .collect();
        for window in 0..cfg.windows {
            let offset = window as f64 * cfg.window_s;
            for (z, s, p) in walkers.iter().filter(|(z, _, _)| *z == zone.id) {
                let signal = capture(cfg, &corpus, z, s, *p, window)?;
                let out = run_thing(s, &signal, offset, &cfg.detector, &cfg.codec, &cfg.link)?;
                summary.discarded += out.discarded.len();
                let mut records = Vec::new();
                for frame in &out.frames {
                    summary.frames += 1;
                    airtime += frame.airtime_s;
                    records.extend(fog.receive(frame)?);
                }
                summary.correct += records.iter().filter(|r| truth.get(r.subzone_id.as_str()) == Some(&r.predicted_person)).count();
                summary.records += records.len();
                store.append(&records)?;
            }
        }
        summary.skipped = fog.skipped;
        summary.mean_airtime_s = airtime / summary.frames.max(1) as f64;
        zones.push(summary);
        stores.push(store);
    }
    let cloud = RecordStore::new(out_dir.join("cloud.ndjson"));
    let report = sync_cloud(&stores, &cloud)?;
    if !report.failed.is_empty() {
        log::warn!("cloud sync skipped {} fog store(s)", report.failed.len());
    }
    Ok(SimulationReport { zones, cloud_records: cloud.read()?.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(zone: &str, sub: &str, t: f64) -> IdentificationRecord {
        IdentificationRecord {
            timestamp: t,
            zone_id: zone.into(),
            subzone_id: sub.into(),
            predicted_person: 1,
            confidence: 0.5,
            f_count: 1,
        }
    }

    #[test]
    fn merge_is_idempotent_union() {
        let a = vec![record("Z-1", "S-1", 1.0), record("Z-1", "S-2", 1.0)];
        let b = vec![record("Z-2", "S-1", 1.0)];
        let mut cloud = Vec::new();
        assert_eq!(merge_records(&[a.clone(), b.clone()], &mut cloud), 3);
        assert_eq!(merge_records(&[a, b], &mut cloud), 0);
        assert_eq!(cloud.len(), 3);
    }

    #[test]
    fn store_round_trip_and_sync() {
        let dir = tempfile::tempdir().unwrap();
        let fog = RecordStore::new(dir.path().join("fog.ndjson"));
        let cloud = RecordStore::new(dir.path().join("cloud.ndjson"));
        let recs = vec![record("Z-1", "S-1", 0.25), record("Z-1", "S-1", 0.75)];
        fog.append(&recs).unwrap();
        assert_eq!(fog.read().unwrap(), recs);
        assert_eq!(sync_cloud(std::slice::from_ref(&fog), &cloud).unwrap().added, 2);
        let first = std::fs::read(cloud.path()).unwrap();
        assert_eq!(sync_cloud(std::slice::from_ref(&fog), &cloud).unwrap().added, 0);
        assert_eq!(std::fs::read(cloud.path()).unwrap(), first);
    }

    #[test]
    fn unreadable_fog_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("bad.ndjson"), "not json\n").unwrap();
        let good = RecordStore::new(dir.path().join("good.ndjson"));
        good.append(&[record("Z-1", "S-1", 1.0)]).unwrap();
        let report = sync_cloud(
            &[RecordStore::new(dir.path().join("bad.ndjson")), good],
            &RecordStore::new(dir.path().join("cloud.ndjson")),
        )
        .unwrap();
        assert_eq!(report.added, 1);
        assert_eq!(report.failed.len(), 1);
    }

    #[test]
    fn silent_thing_emits_nothing() {
        let silent = TimeSeries::new(vec![0.0; 80_000], 8000.0).unwrap();
        let out = run_thing("S-1", &silent, 0.0, &DetectorConfig::default(), &CodecConfig::default(), &LinkModel::default()).unwrap();
        assert!(out.frames.is_empty() && out.discarded.is_empty());
    }

    #[test]
    fn shipped_topology_has_two_zones() {
        let cfg = SimulationConfig::from_toml(include_str!("../../../configs/topology.toml")).unwrap();
        assert_eq!(cfg.zones.iter().map(|z| z.id.as_str()).collect::<Vec<_>>(), ["Z-1", "Z-2"]);
    }

    #[test]
    fn topology_validation() {
        let text = r#"
            window_s = 5.0
            [[zones]]
            id = "Z-1"
            subzones = ["S-1", "S-1"]
        "#;
        assert!(matches!(SimulationConfig::from_toml(text), Err(Error::Config(_))));
        let ok = SimulationConfig::from_toml("[[zones]]\nid = \"Z-1\"\nsubzones = [\"S-1\"]\n").unwrap();
        assert_eq!(ok.walkers(), vec![("Z-1".to_string(), "S-1".to_string(), 0)]);
    }
}

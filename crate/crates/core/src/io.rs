//! File formats: WAV signals, CSV tables, datagram files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::events::{Detection, EventWindow};
use crate::features::{feature_columns, AggregatedSample};
use crate::signal::{Footstep, TimeSeries};

/// Writes a mono 32-bit float WAV. The sample rate is rounded to whole hertz.
pub fn write_wav(path: &Path, signal: &TimeSeries) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate_hz().round() as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in signal.samples() {
        writer.write_sample(s as f32)?;
    }
    writer.finalize()?;
    Ok(())
}

/// Reads a mono WAV. Integer samples are scaled to [-1, 1).
pub fn read_wav(path: &Path) -> Result<TimeSeries> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::InvalidInput(format!("{}: expected mono, got {} channels", path.display(), spec.channels)));
    }
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().map(|s| s.map(f64::from)).collect::<std::result::Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    TimeSeries::new(samples, f64::from(spec.sample_rate))
}

pub fn write_ground_truth(path: &Path, footsteps: &[Footstep]) -> Result<()> {
    let mut s = String::from("onset_s,duration_s,person_id\n");
    for f in footsteps {
        let _ = writeln!(s, "{},{},{}", f.onset_s, f.duration_s, f.person_id);
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn parse<T: std::str::FromStr>(field: Option<&str>, line: usize, what: &str) -> Result<T> {
    field
        .and_then(|f| f.trim().parse().ok())
        .ok_or_else(|| Error::InvalidInput(format!("line {}: bad or missing {what}", line + 1)))
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<Footstep>> {
    let text = std::fs::read_to_string(path)?;
    data_lines(&text)
        .map(|(i, line)| {
            let mut f = line.split(',');
            Ok(Footstep {
                onset_s: parse(f.next(), i, "onset_s")?,
                duration_s: parse(f.next(), i, "duration_s")?,
                person_id: parse(f.next(), i, "person_id")?,
            })
        })
        .collect()
}

/// One row per detected window in time order. Times are seconds from the
/// start of the signal; `reject_reason` is empty for accepted windows.
pub fn events_csv(detection: &Detection, sample_rate_hz: f64) -> String {
    let mut s = String::from("start_s,end_s,width_s,accepted,reject_reason\n");
    let mut row = |w: &EventWindow, reason: Option<String>| {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            w.start_index as f64 / sample_rate_hz,
            w.end_index as f64 / sample_rate_hz,
            w.width_s(sample_rate_hz),
            reason.is_none(),
            reason.unwrap_or_default()
        );
    };
    for (w, reason) in detection.all() {
        row(&w, reason.map(|r| r.to_string()));
    }
    s
}

/// Accepted windows from an events CSV, mapped back to sample indices at `sample_rate_hz`.
pub fn read_events_csv(path: &Path, sample_rate_hz: f64) -> Result<Vec<EventWindow>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in data_lines(&text) {
        let f: Vec<&str> = line.split(',').collect();
        if !parse::<bool>(f.get(3).copied(), i, "accepted")? {
            continue;
        }
        let start: f64 = parse(f.first().copied(), i, "start_s")?;
        let end: f64 = parse(f.get(1).copied(), i, "end_s")?;
        out.push(EventWindow::new(
            (start * sample_rate_hz).round() as usize,
            (end * sample_rate_hz).round() as usize,
            sample_rate_hz,
        ));
    }
    Ok(out)
}

/// Header is `label,f_count,<feature columns>`; an unlabeled sample has an empty label.
pub fn samples_csv(samples: &[AggregatedSample]) -> Result<String> {
    let f_count = samples.first().map_or(1, |s| s.f_count);
    let cols = feature_columns(f_count);
    let mut s = format!("label,f_count,{}\n", cols.join(","));
    for sample in samples {
        if sample.f_count != f_count || sample.features.len() != cols.len() {
            return Err(Error::InvalidInput("samples mix footstep counts".into()));
        }
        let label = sample.label.map(|l| l.to_string()).unwrap_or_default();
        let values: Vec<String> = sample.features.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{label},{f_count},{}", values.join(","));
    }
    Ok(s)
}

pub fn write_samples_csv(path: &Path, samples: &[AggregatedSample]) -> Result<()> {
    std::fs::write(path, samples_csv(samples)?)?;
    Ok(())
}

/// Reads a file written by `write_samples_csv`, checking the header against the column order.
pub fn read_samples_csv(path: &Path) -> Result<Vec<AggregatedSample>> {
    let text = std::fs::read_to_string(path)?;
    let header = text.lines().next().ok_or_else(|| Error::InvalidInput("empty feature file".into()))?;
    let names: Vec<&str> = header.split(',').collect();
    if names.len() < 3 || names[0] != "label" || names[1] != "f_count" {
        return Err(Error::InvalidInput("feature file header must start with label,f_count".into()));
    }
    let f_count = if names.contains(&"cadence_s") { 2 } else { 1 };
    if names[2..] != feature_columns(f_count).iter().map(String::as_str).collect::<Vec<_>>()[..] {
        return Err(Error::InvalidInput("feature columns do not match this build".into()));
    }
    let mut out = Vec::new();
    for (i, line) in data_lines(&text) {
        let mut f = line.split(',');
        let label = match f.next().map(str::trim) {
            Some("") | None => None,
            Some(l) => Some(l.parse().map_err(|_| Error::InvalidInput(format!("line {}: bad label", i + 1)))?),
        };
        let f_count: usize = parse(f.next(), i, "f_count")?;
        let features = f.map(|v| parse(Some(v), i, "feature")).collect::<Result<Vec<f64>>>()?;
        if features.len() != names.len() - 2 {
            return Err(Error::InvalidInput(format!("line {}: expected {} features", i + 1, names.len() - 2)));
        }
        out.push(AggregatedSample { features, f_count, label });
    }
    Ok(out)
}

/// Datagram as space-separated hex bytes, 16 per line.
pub fn hex_dump(bytes: &[u8]) -> String {
    bytes
        .chunks(16)
        .map(|c| c.iter().map(|b| format!("{b:02x}")).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parses `hex_dump` output; whitespace is ignored.
pub fn parse_hex(text: &str) -> Result<Vec<u8>> {
    let digits: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if !digits.len().is_multiple_of(2) {
        return Err(Error::MalformedDatagram("odd number of hex digits".into()));
    }
    (0..digits.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&digits[i..i + 2], 16).map_err(|e| Error::MalformedDatagram(e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip_is_f32_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let sig = TimeSeries::new(vec![0.0, 0.25, -0.5, 0.125], 8000.0).unwrap();
        write_wav(&p, &sig).unwrap();
        assert_eq!(read_wav(&p).unwrap(), sig);
    }

    #[test]
    fn samples_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        let n = feature_columns(3).len();
        let samples = vec![
            AggregatedSample { features: (0..n).map(|i| i as f64 * 0.1).collect(), f_count: 3, label: Some(2) },
            AggregatedSample { features: vec![1.0 / 3.0; n], f_count: 3, label: None },
        ];
        write_samples_csv(&p, &samples).unwrap();
        assert_eq!(read_samples_csv(&p).unwrap(), samples);
    }

    #[test]
    fn hex_round_trip() {
        let bytes: Vec<u8> = (0..=40).collect();
        assert_eq!(parse_hex(&hex_dump(&bytes)).unwrap(), bytes);
        assert!(parse_hex("abc").is_err());
    }

    #[test]
    fn events_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("events.csv");
        let detection = Detection {
            accepted: vec![EventWindow::new(800, 2400, 8000.0)],
            rejected: vec![(EventWindow::new(5000, 5200, 8000.0), crate::events::RejectReason::TooNarrow)],
        };
        std::fs::write(&p, events_csv(&detection, 8000.0)).unwrap();
        assert_eq!(read_events_csv(&p, 8000.0).unwrap(), detection.accepted);
    }

    #[test]
    fn ground_truth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.csv");
        let steps = vec![Footstep { onset_s: 0.5, duration_s: 0.25, person_id: 3 }];
        write_ground_truth(&p, &steps).unwrap();
        assert_eq!(read_ground_truth(&p).unwrap(), steps);
    }
}

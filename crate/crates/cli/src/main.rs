use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use footid_core::classify::{cross_validate, evaluate, learning_curve, train, ClassifierKind, ClassifierModel};
use footid_core::codec::{compress_ds16, compress_with, decode_datagram, decompress, encode_datagram, Compression};
use footid_core::dictionary::{describe_atom, AtomKind, GaborDictionary};
use footid_core::events::{detect_events, slice_event};
use footid_core::features::aggregate_walk;
use footid_core::harness::{
    check_rate, compare_codecs, corpus_features, derive_seed, histogram_compression, signal_features, sweep_footsteps,
    sweep_sampling, CodecArm, Corpus, HarnessConfig,
};
use footid_core::io;
use footid_core::pipeline::{simulate, train_fog_model, SimulationConfig};
use footid_core::signal::{decimate, generate_walk, synthetic_profiles, TimeSeries};
use footid_core::{AggregatedSample, AtomMatrix};

#[derive(Parser)]
#[command(name = "footid", version, about = "Footfall identification from seismic signals")]
struct Cli {
    /// Root seed; every component seed is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config: a topology for `simulate`, otherwise detector/codec/classifier/sweep settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Sampling rate in Hz (generation rate for gen-walk, detection rate elsewhere).
    #[arg(long, global = true)]
    sample_rate: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Arm {
    Nc,
    Ds16,
    Ds8bp,
}

impl From<Arm> for CodecArm {
    fn from(a: Arm) -> Self {
        match a {
            Arm::Nc => CodecArm::Nc,
            Arm::Ds16 => CodecArm::Ds16,
            Arm::Ds8bp => CodecArm::Ds8bp,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic walk (walk.wav) and its ground truth (ground_truth.csv).
    GenWalk {
        #[arg(long, default_value_t = 0)]
        profile: usize,
        #[arg(long, default_value_t = 8)]
        profiles: usize,
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[arg(long, default_value_t = 20.0)]
        snr: f64,
    },
    /// Detect footfall events; writes events.csv and, with --save-events, one WAV per accepted event.
    Extract {
        input: PathBuf,
        #[arg(long)]
        save_events: bool,
    },
    /// DS8BP-compress 8 kHz event WAVs into datagrams.
    Compress {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Write hex dumps instead of raw binary.
        #[arg(long)]
        hex: bool,
    },
    /// Rebuild 1 kHz events from datagrams (raw, or hex when the extension is .hex).
    Decompress {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Decimate 8 kHz event WAVs to 500 Hz.
    Ds16 {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Per-footstep features aggregated over F footsteps, written to features.csv.
    Features {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        f_count: usize,
        #[arg(long)]
        label: Option<u32>,
        #[arg(long, value_enum, default_value = "nc")]
        codec: Arm,
        /// Output file name inside --out.
        #[arg(long, default_value = "features.csv")]
        name: String,
    },
    /// Train a classifier on feature CSVs; writes model.json.
    Train {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "rbf-approx")]
        kind: ClassifierKind,
    },
    /// Predict the person behind every sample; writes predictions.csv.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    CrossValidate {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "rbf-approx")]
        kind: ClassifierKind,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Held-out accuracy against training-set size per person; writes learning_curve.csv.
    LearningCurve {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "rbf-approx")]
        kind: ClassifierKind,
        #[arg(long, value_delimiter = ',', default_value = "5,10,20,40,80")]
        sizes: Vec<usize>,
    },
    /// Run a Thing/Fog/Cloud topology over generated walks.
    Simulate,
    /// Sweeps over the synthetic corpus.
    Bench {
        #[command(subcommand)]
        sweep: Sweep,
    },
    /// Dump dictionary atoms as CSV (one column per atom).
    Atoms {
        #[arg(long)]
        length: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        indices: Vec<usize>,
    },
}

#[derive(Subcommand, Clone, Copy)]
enum Sweep {
    Footsteps,
    Sampling,
    Codecs,
    Histogram,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    match &cli.command {
        Command::Simulate => return run_simulate(cli),
        Command::Bench { sweep } => return run_bench(cli, *sweep),
        _ => {}
    }
    let cfg = harness_config(cli)?;
    let seed = cli.seed.unwrap_or(cfg.seed);
    match &cli.command {
        Command::GenWalk { profile, profiles, duration, snr } => {
            let all = synthetic_profiles(*profiles, derive_seed(seed, "profiles"), *snr);
            let p = all.get(*profile).with_context(|| format!("profile {profile} out of range (0..{profiles})"))?;
            let rate = cli.sample_rate.unwrap_or(8000.0);
            let (signal, steps) = generate_walk(p, *duration, rate, derive_seed(seed, &format!("gen-walk/{profile}")))?;
            io::write_wav(&cli.out.join("walk.wav"), &signal)?;
            io::write_ground_truth(&cli.out.join("ground_truth.csv"), &steps)?;
            println!("walk.wav: {duration} s at {rate} Hz, person {}, {} footsteps", p.person_id, steps.len());
        }
        Command::Extract { input, save_events } => {
            let signal = read_at_rate(input, cli.sample_rate)?;
            let detection = detect_events(&signal, &cfg.detector)?;
            let rate = signal.sample_rate_hz();
            std::fs::write(cli.out.join("events.csv"), io::events_csv(&detection, rate))?;
            if *save_events {
                for (i, w) in detection.accepted.iter().enumerate() {
                    io::write_wav(&cli.out.join(format!("event_{i:03}.wav")), &slice_event(&signal, w)?)?;
                }
            }
            println!("{} accepted, {} rejected", detection.accepted.len(), detection.rejected.len());
        }
        Command::Compress { inputs, hex } => {
            for input in inputs {
                let event = io::read_wav(input)?;
                match compress_with(&event, &cfg.codec).with_context(|| input.display().to_string())? {
                    Compression::Accepted { event, .. } => {
                        let bytes = encode_datagram(&event)?;
                        let path = cli.out.join(format!("{}.{}", stem(input), if *hex { "hex" } else { "dgm" }));
                        if *hex {
                            std::fs::write(&path, io::hex_dump(&bytes) + "\n")?;
                        } else {
                            std::fs::write(&path, &bytes)?;
                        }
                        println!(
                            "{}: L={} M={} factor={:.2} bytes={}",
                            input.display(),
                            event.length_l(),
                            event.num_atoms(),
                            event.compression_factor(),
                            bytes.len()
                        );
                    }
                    Compression::Discarded { reason, .. } => println!("{}: discarded ({reason})", input.display()),
                }
            }
        }
        Command::Decompress { inputs } => {
            for input in inputs {
                let raw = std::fs::read(input).with_context(|| input.display().to_string())?;
                let bytes = if input.extension().is_some_and(|e| e == "hex") {
                    io::parse_hex(&String::from_utf8_lossy(&raw))?
                } else {
                    raw
                };
                let rebuilt = decompress(&decode_datagram(&bytes).with_context(|| input.display().to_string())?)?;
                io::write_wav(&cli.out.join(format!("{}.rec.wav", stem(input))), &rebuilt)?;
                println!("{}: {} samples at 1000 Hz", input.display(), rebuilt.len());
            }
        }
        Command::Ds16 { inputs } => {
            for input in inputs {
                let ds = compress_ds16(&io::read_wav(input)?)?;
                io::write_wav(&cli.out.join(format!("{}.ds16.wav", stem(input))), &ds)?;
                println!("{}: {} samples at 500 Hz", input.display(), ds.len());
            }
        }
        Command::Features { inputs, f_count, label, codec, name } => {
            let mut samples = Vec::new();
            for input in inputs {
                let signal = io::read_wav(input)?;
                let rate = cli.sample_rate.unwrap_or(signal.sample_rate_hz());
                let (footsteps, tally) = signal_features(&signal, rate, (*codec).into(), &cfg.detector, &cfg.codec)
                    .with_context(|| input.display().to_string())?;
                let got = aggregate_walk(&footsteps, *f_count, *label)?;
                println!(
                    "{}: {} events, {} delivered, {} footsteps, {} samples",
                    input.display(),
                    tally.events,
                    tally.accepted,
                    footsteps.len(),
                    got.len()
                );
                samples.extend(got);
            }
            if samples.is_empty() {
                bail!("no complete {f_count}-footstep samples");
            }
            io::write_samples_csv(&cli.out.join(name), &samples)?;
        }
        Command::Train { inputs, kind } => {
            let samples = read_samples(inputs)?;
            let model = train(&samples, *kind, &cfg.hyperparams(*kind), derive_seed(seed, "train"))?;
            model.save(&cli.out.join("model.json"))?;
            println!("model.json: {kind}, {} classes, {} samples, F={}", model.labels.len(), samples.len(), model.f_count);
        }
        Command::Predict { model, inputs } => {
            let model = ClassifierModel::load(model).with_context(|| model.display().to_string())?;
            let samples = read_samples(inputs)?;
            let mut csv = String::from("label,predicted,confidence\n");
            for s in &samples {
                let (p, c) = model.predict_sample(s)?;
                csv.push_str(&format!("{},{p},{c}\n", s.label.map(|l| l.to_string()).unwrap_or_default()));
            }
            std::fs::write(cli.out.join("predictions.csv"), csv)?;
            if samples.iter().all(|s| s.label.is_some()) {
                println!("accuracy {:.4} over {} samples", evaluate(&model, &samples)?.accuracy, samples.len());
            } else {
                println!("{} predictions", samples.len());
            }
        }
        Command::CrossValidate { inputs, kind, folds } => {
            let samples = read_samples(inputs)?;
            let folds = folds.unwrap_or(cfg.folds);
            let r = cross_validate(&samples, *kind, &cfg.hyperparams(*kind), folds, derive_seed(seed, "cross-validate"))?;
            println!(
                "{kind} {folds}-fold: accuracy {:.4} +/- {:.4}, macro F1 {:.4} +/- {:.4}",
                r.accuracy_mean, r.accuracy_std, r.f1_mean, r.f1_std
            );
        }
        Command::LearningCurve { inputs, kind, sizes } => {
            let samples = read_samples(inputs)?;
            let curve = learning_curve(&samples, *kind, &cfg.hyperparams(*kind), sizes, derive_seed(seed, "learning-curve"))?;
            let mut csv = String::from("train_per_person,accuracy\n");
            for (n, acc) in &curve {
                csv.push_str(&format!("{n},{acc}\n"));
                println!("{n:>5} per person: {acc:.4}");
            }
            std::fs::write(cli.out.join("learning_curve.csv"), csv)?;
        }
        Command::Atoms { length, indices } => {
            let d = GaborDictionary::generate(*length)?;
            let mut csv = String::from("t");
            for &j in indices {
                let (tau, kind) = describe_atom(*length, j).with_context(|| format!("atom {j} out of range"))?;
                let kind = match kind {
                    AtomKind::Gaussian => "gauss".to_string(),
                    AtomKind::Cosine { omega } => format!("cos{omega}"),
                    AtomKind::Sine { omega } => format!("sin{omega}"),
                };
                csv.push_str(&format!(",atom_{j}_{kind}_tau{tau:.4}"));
            }
            csv.push('\n');
            for i in 0..*length {
                csv.push_str(&(i as f64 / (*length - 1).max(1) as f64).to_string());
                for &j in indices {
                    csv.push_str(&format!(",{}", d.column(j)[i]));
                }
                csv.push('\n');
            }
            std::fs::write(cli.out.join("atoms.csv"), csv)?;
            println!("atoms.csv: {} atoms of length {length}", indices.len());
        }
        Command::Simulate | Command::Bench { .. } => unreachable!(),
    }
    Ok(())
}

fn harness_config(cli: &Cli) -> Result<HarnessConfig> {
    let mut cfg = match &cli.config {
        Some(p) => HarnessConfig::from_toml(&read_text(p)?).with_context(|| p.display().to_string())?,
        None => HarnessConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.corpus.seed = seed;
    }
    Ok(cfg)
}

fn run_simulate(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => SimulationConfig::from_toml(&read_text(p)?).with_context(|| p.display().to_string())?,
        None => SimulationConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.corpus.seed = seed;
    }
    let model = train_fog_model(&cfg)?;
    model.save(&cli.out.join("model.json"))?;
    let report = simulate(&cfg, &model, &cli.out)?;
    for z in &report.zones {
        println!(
            "zone {}: {} frames, {} discarded, {} skipped, {} records ({} correct), mean airtime {:.2} ms",
            z.zone_id,
            z.frames,
            z.discarded,
            z.skipped,
            z.records,
            z.correct,
            1e3 * z.mean_airtime_s
        );
    }
    println!("cloud: {} records", report.cloud_records);
    Ok(())
}

fn run_bench(cli: &Cli, sweep: Sweep) -> Result<()> {
    let mut cfg = harness_config(cli)?;
    if let Some(rate) = cli.sample_rate {
        check_rate(rate)?;
        cfg.rates_hz = vec![8000.0, rate];
    }
    let corpus = Corpus::new(&cfg.corpus)?;
    let (name, csv) = match sweep {
        Sweep::Footsteps => {
            let (walks, _) = corpus_features(&corpus, &corpus.walks, 8000.0, CodecArm::Nc, &cfg.detector, &cfg.codec)?;
            let t = sweep_footsteps(&walks, &cfg.kinds, &cfg.f_values, &cfg)?;
            for c in &t.cells {
                println!("{:<11} F={:<2} accuracy {:.4} +/- {:.4} ({} samples)", c.kind, c.f_count, c.accuracy_mean, c.accuracy_std, c.samples);
            }
            ("footsteps.csv", t.to_csv())
        }
        Sweep::Sampling => {
            let t = sweep_sampling(&corpus, &cfg)?;
            for r in &t.rows {
                println!("{:>5} Hz: EDT {:.3e} s, FET {:.3e} s", r.rate_hz, r.edt_s, r.fet_s);
                for c in &r.cells {
                    println!("         {:<11} accuracy {:.4}", c.kind, c.accuracy_mean);
                }
            }
            ("sampling.csv", t.to_csv())
        }
        Sweep::Codecs => {
            let t = compare_codecs(&corpus, &cfg.kinds, &[cfg.sweep_f], &cfg)?;
            for r in &t.rows {
                for c in &r.cells {
                    println!("{:<5} {:<11} F={} accuracy {:.4}", r.codec.name(), c.kind, c.f_count, c.accuracy_mean);
                }
            }
            ("codecs.csv", t.to_csv())
        }
        Sweep::Histogram => {
            let h = histogram_compression(&corpus, &cfg)?;
            println!(
                "{} events, {} accepted, factor {:.2} +/- {:.2}, mean atoms {:.2}, discarded {:?}",
                h.events,
                h.factors.len(),
                h.mean,
                h.std,
                h.mean_atoms(),
                h.discarded
            );
            ("histogram.csv", h.to_csv())
        }
    };
    std::fs::write(cli.out.join(name), csv)?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_at_rate(path: &Path, rate: Option<f64>) -> Result<TimeSeries> {
    let signal = io::read_wav(path).with_context(|| path.display().to_string())?;
    match rate {
        Some(r) if r != signal.sample_rate_hz() => {
            if signal.sample_rate_hz() != 8000.0 {
                bail!("can only resample 8 kHz input, got {} Hz", signal.sample_rate_hz());
            }
            Ok(decimate(&signal, check_rate(r)?)?)
        }
        _ => Ok(signal),
    }
}

fn read_samples(paths: &[PathBuf]) -> Result<Vec<AggregatedSample>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(io::read_samples_csv(p).with_context(|| p.display().to_string())?);
    }
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "event".into())
}

//! Acceptance checks, one line per criterion. Runs without the libtest harness so
//! the lines are printed whether or not a check passes.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use footid_core::classify::{evaluate, logistic_loss_grad, train, ClassifierKind, Hyperparams, Metrics};
use footid_core::codec::{
    airtime_s, compress_ds8bp, datagram_len, decode_datagram, decompress, encode_datagram, CompressedEvent, Compression,
    GateConfig,
};
use footid_core::dictionary::{atom_value, describe_atom, DenseAtoms, GaborDictionary};
use footid_core::events::{extract_events, DetectorConfig};
use footid_core::features::{aggregate_sample, extract_features, feature_columns, FEATURE_COUNT};
use footid_core::harness::{
    compare_codecs, corpus_features, sweep_footsteps, sweep_sampling, CodecArm, CodecTable, Corpus,
    FootstepsTable, HarnessConfig, SamplingTable,
    REFERENCE_MEAN_AIRTIME_S, REFERENCE_MEAN_ATOMS,
};
use footid_core::pipeline::{merge_records, run_fog, run_thing, sync_cloud, IdentificationRecord, LinkModel, RecordStore};
use footid_core::signal::{
    decimate, generate_noise, generate_walk, relative_l2_error, synthetic_profiles, SyntheticPersonProfile, TimeSeries,
    MAX_EVENT_WIDTH_S, MIN_EVENT_WIDTH_S,
};
use footid_core::sparse::{solve_lasso, solve_lasso_with_lambda};
use footid_core::{AggregatedSample, AtomMatrix, CodecConfig, LassoConfig};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if ok { Ok(()) } else { Err(msg.into()) }
}

fn within(limit: Duration, start: Instant, what: &str) -> std::result::Result<(), String> {
    let took = start.elapsed();
    ensure(took <= limit, format!("{what} took {took:.1?}, limit {limit:?}"))
}

/// 8 kHz event built from `count` atoms of the length-`l` dictionary plus white noise
/// at `snr_db`, sampled so that decimation by 8 lands on the dictionary grid.
fn atom_event(rng: &mut ChaCha8Rng, l: usize, count: usize, snr_db: f64) -> TimeSeries {
    let n = 8 * l;
    let mut x = vec![0.0; n];
    // keep carriers below about 100 Hz, like footfalls
    let max_m = ((2.0 * std::f64::consts::PI * 100.0 * (l - 1) as f64 / 1000.0) / 5.0).floor() as usize;
    for _ in 0..count {
        let shift = rng.gen_range(0..l);
        let m = rng.gen_range(0..=max_m.min(50));
        let within = if m == 0 { 0 } else { 2 * m - rng.gen_range(0..2) };
        let (tau, kind) = describe_atom(l, shift * 101 + within).expect("valid atom");
        let c = rng.gen_range(0.5..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        for (i, v) in x.iter_mut().enumerate() {
            *v += c * atom_value(kind, i as f64 / (8.0 * (l - 1) as f64), tau);
        }
    }
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let g = Normal::new(0.0, rms / 10f64.powf(snr_db / 20.0)).unwrap();
    x.iter_mut().for_each(|v| *v += g.sample(rng));
    TimeSeries::new(x, 8000.0).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut accepted, mut worst) = (0, 0.0f64);
    let total = 200;
    for _ in 0..total {
        let l = rng.gen_range(150..=430);
        let ev = atom_event(&mut rng, l, 12, 20.0);
        let ds = decimate(&ev, 8).map_err(|e| e.to_string())?;
        match compress_ds8bp(&ev, &GateConfig::default(), &LassoConfig::default()).map_err(|e| e.to_string())? {
            Compression::Accepted { event, .. } => {
                accepted += 1;
                let rebuilt = decompress(&event).map_err(|e| e.to_string())?;
                worst = worst.max(relative_l2_error(rebuilt.samples(), ds.samples()));
            }
            Compression::Discarded { .. } => {}
        }
    }
    let rate = accepted as f64 / total as f64;
    ensure(worst <= 0.1, format!("worst relative error {worst:.4} > 0.1"))?;
    ensure(rate >= 0.9, format!("acceptance rate {rate:.3} < 0.9"))?;
    within(Duration::from_secs(120), start, "round trip")?;
    Ok(format!("{accepted}/{total} accepted, worst error {worst:.4}, {:.1?}", start.elapsed()))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..1000 {
        let l = rng.gen_range(2..=648);
        let m = rng.gen_range(1..=40usize.min(101 * l));
        let mut idx = BTreeSet::new();
        while idx.len() < m {
            idx.insert(rng.gen_range(0..101 * l));
        }
        let coefs: Vec<f64> = (0..m)
            .map(|_| loop {
                let v = f64::from_bits(rng.gen());
                if v.is_finite() {
                    break v;
                }
            })
            .collect();
        let ev = CompressedEvent::new(coefs, idx.into_iter().collect(), l).map_err(|e| e.to_string())?;
        let bytes = encode_datagram(&ev).map_err(|e| e.to_string())?;
        ensure(bytes.len() == 10 * m + 2, format!("case {case}: {} bytes for M = {m}", bytes.len()))?;
        let back = decode_datagram(&bytes).map_err(|e| e.to_string())?;
        let same = back.length_l() == ev.length_l()
            && back.atom_indices() == ev.atom_indices()
            && back.coefficients().iter().zip(ev.coefficients()).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, format!("case {case}: decode(encode(e)) differs"))?;
    }
    Ok("1000 random events bit-exact, all 10M+2 bytes".into())
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_closed = 0.0f64;
    for _ in 0..20 {
        let n = rng.gen_range(4..30);
        let q = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).qr().q();
        let atoms = DenseAtoms::from_matrix(&q);
        let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let lambda = rng.gen_range(0.0..1.0);
        let cfg = LassoConfig { tol: 1e-12, max_iters: 10_000, ..Default::default() };
        let code = solve_lasso_with_lambda(&atoms, &s, lambda, &cfg).map_err(|e| e.to_string())?;
        for j in 0..n {
            let c: f64 = atoms.column(j).iter().zip(&s).map(|(a, b)| a * b).sum();
            let expect = c.signum() * (c.abs() - lambda).max(0.0);
            worst_closed = worst_closed.max((code.coefficients.get(&j).copied().unwrap_or(0.0) - expect).abs());
        }
    }
    ensure(worst_closed <= 1e-8, format!("soft-threshold mismatch {worst_closed:e}"))?;

    let mut worst_kkt = 0.0f64;
    for p in 0..50 {
        let l = rng.gen_range(20..=160);
        let d = GaborDictionary::generate(l).map_err(|e| e.to_string())?;
        let s: Vec<f64> = (0..l).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cfg = LassoConfig { lambda_rel: rng.gen_range(0.02..0.3), ..Default::default() };
        let code = solve_lasso(&d, &s, &cfg).map_err(|e| e.to_string())?;
        ensure(code.converged, format!("problem {p} did not converge"))?;
        for w in code.objective_trace.windows(2) {
            ensure(w[1] <= w[0] * (1.0 + 1e-12), format!("problem {p}: objective rose {} -> {}", w[0], w[1]))?;
        }
        let rec = code.reconstruct(&d);
        let r: Vec<f64> = s.iter().zip(&rec).map(|(a, b)| a - b).collect();
        for j in 0..d.cols() {
            let corr = d.column(j).iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / d.column_norm(j);
            let violation = match code.coefficients.get(&j) {
                Some(x) => (corr - code.lambda * x.signum()).abs(),
                None => (corr.abs() - code.lambda).max(0.0),
            };
            worst_kkt = worst_kkt.max(violation);
        }
    }
    let bound = 10.0 * LassoConfig::default().tol;
    ensure(worst_kkt <= bound, format!("KKT residual {worst_kkt:e} > {bound:e}"))?;
    Ok(format!("closed form within {worst_closed:.1e}, 50 problems monotone, KKT residual {worst_kkt:.1e}"))
}

fn burst_record(rng: &mut ChaCha8Rng, width_s: f64) -> (TimeSeries, usize, usize) {
    let floor = SyntheticPersonProfile::noise_floor_for_snr(20.0);
    let mut x = generate_noise(floor, 6.0, 8000.0, rng.gen()).unwrap().into_samples();
    let start = rng.gen_range(16_000..24_000);
    let len = (width_s * 8000.0) as usize;
    let f = rng.gen_range(15.0..70.0);
    let taper = 80.0;
    for i in 0..len {
        let edge = ((i as f64 / taper).min((len - i) as f64 / taper)).min(1.0);
        x[start + i] += 0.3 * edge * (2.0 * std::f64::consts::PI * f * i as f64 / 8000.0).sin();
    }
    (TimeSeries::new(x, 8000.0).unwrap(), start, start + len)
}

fn criterion_4() -> Outcome {
    let det = DetectorConfig::default();
    let profiles = synthetic_profiles(8, 11, 20.0);
    let (mut truth, mut hit) = (0usize, 0usize);
    for (p, profile) in profiles.iter().enumerate() {
        for w in 0..5u64 {
            let (signal, steps) = generate_walk(profile, 10.0, 8000.0, 1000 + 10 * p as u64 + w).map_err(|e| e.to_string())?;
            let events = extract_events(&signal, &det).map_err(|e| e.to_string())?;
            for e in &events {
                let width = e.width_s(8000.0);
                ensure(
                    (MIN_EVENT_WIDTH_S - 1e-9..=MAX_EVENT_WIDTH_S + 1e-9).contains(&width),
                    format!("accepted event of width {width:.4} s"),
                )?;
            }
            truth += steps.len();
            hit += steps
                .iter()
                .filter(|s| events.iter().any(|e| (e.onset_time_s - s.onset_s).abs() <= 0.020))
                .count();
        }
    }
    let recall = hit as f64 / truth as f64;
    ensure(recall >= 0.9, format!("onset recall {recall:.3} < 0.9"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut rejected = 0;
    for trial in 0..50 {
        let width = if trial % 2 == 0 { rng.gen_range(0.04..0.12) } else { rng.gen_range(0.50..0.90) };
        let (signal, a, b) = burst_record(&mut rng, width);
        let events = extract_events(&signal, &det).map_err(|e| e.to_string())?;
        if !events.iter().any(|e| e.start_index < b && a < e.end_index) {
            rejected += 1;
        }
    }
    ensure(rejected == 50, format!("{rejected}/50 width-violating bursts rejected"))?;
    Ok(format!("onsets {hit}/{truth} within 20 ms ({:.1}%), all accepted widths gated, 50/50 bursts rejected", 100.0 * recall))
}

fn tone(freq: f64, rate: f64, secs: f64, cos: bool) -> TimeSeries {
    let n = (rate * secs).round() as usize;
    let x = (0..n)
        .map(|i| {
            let p = 2.0 * std::f64::consts::PI * freq * i as f64 / rate;
            if cos { p.cos() } else { p.sin() }
        })
        .collect();
    TimeSeries::new(x, rate).unwrap()
}

fn criterion_5() -> Outcome {
    let mut min_share = 1.0f64;
    for (freq, rate) in [(10.0, 500.0), (37.0, 1000.0), (64.0, 8000.0), (150.0, 1000.0)] {
        let f = extract_features(&tone(freq, rate, 1.0, false), None, 0.0).map_err(|e| e.to_string())?;
        let band = (freq / 2.0).floor() as usize;
        min_share = min_share.min(f.band_energies[band]);
    }
    ensure(min_share >= 0.95, format!("tone band share {min_share:.4} < 0.95"))?;

    let f = extract_features(&tone(50.0, 500.0, 1.0, true), None, 0.0).map_err(|e| e.to_string())?;
    let flat = f.hilbert_stats[1] / f.hilbert_stats[0];
    ensure(flat <= 0.05, format!("envelope std/mean {flat:.4} > 0.05"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ev = TimeSeries::new((0..300).map(|_| rng.gen_range(-1.0..1.0)).collect(), 1000.0).unwrap();
    let a = extract_features(&ev, Some(0.2), 0.9).map_err(|e| e.to_string())?.to_vec();
    let b = extract_features(&ev.scaled(3.5), Some(0.2), 0.9).map_err(|e| e.to_string())?.to_vec();
    let scale_free: Vec<usize> = (0..FEATURE_COUNT).filter(|i| ![0, 3, 4].contains(i)).collect();
    for &i in &scale_free {
        ensure((a[i] - b[i]).abs() <= 1e-9 * a[i].abs().max(1.0), format!("feature {i} changed under scaling"))?;
    }
    for i in [0, 3, 4] {
        ensure((b[i] - 3.5 * a[i]).abs() <= 1e-9 * b[i].abs(), format!("feature {i} did not scale"))?;
    }

    ensure(FEATURE_COUNT == 134 && feature_columns(2).len() == 134, "feature vector is not 134 long")?;
    let fv = extract_features(&ev, Some(0.2), 0.9).map_err(|e| e.to_string())?;
    let one = aggregate_sample(&[fv], 1, None).map_err(|e| e.to_string())?;
    ensure(one.features.len() == 133 && !feature_columns(1).iter().any(|c| c == "cadence_s"), "F=1 keeps cadence")?;
    Ok(format!("tone share >= {min_share:.4}, envelope std/mean {flat:.4}, 131 scale-free features fixed, 134/133 columns"))
}

fn blobs(per: usize, noise: f64, seed: u64) -> Vec<AggregatedSample> {
    let centers = [[0.0, 0.0, 2.0], [6.0, 0.0, -2.0], [0.0, 6.0, 0.0]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Normal::new(0.0, noise).unwrap();
    centers
        .iter()
        .enumerate()
        .flat_map(|(k, c)| {
            (0..per)
                .map(|_| AggregatedSample {
                    features: c.iter().map(|v| v + g.sample(&mut rng)).collect(),
                    f_count: 1,
                    label: Some(k as u32),
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn criterion_6() -> Outcome {
    let train_set = blobs(80, 0.8, 1);
    let test_set = blobs(50, 0.8, 2);
    let mut accs = Vec::new();
    for kind in ClassifierKind::ALL {
        let model = train(&train_set, kind, &Hyperparams::default_for(kind), 3).map_err(|e| e.to_string())?;
        let acc = evaluate(&model, &test_set).map_err(|e| e.to_string())?.accuracy;
        ensure(acc >= 0.95, format!("{kind} held-out accuracy {acc:.3}"))?;
        accs.push(format!("{kind} {acc:.3}"));
    }

    let xs = [[0.5, -1.0, 2.0], [1.5, 0.3, -0.7], [-0.2, 0.8, 0.1], [2.0, -0.5, 0.9], [-1.1, -0.4, 0.6]];
    let rows: Vec<&[f64]> = xs.iter().map(|r| r.as_slice()).collect();
    let y = [1.0, -1.0, 1.0, -1.0, 1.0];
    let (w, b, l2, h) = ([0.3, -0.2, 0.5], 0.1, 0.05, 1e-6);
    let (_, dw, db) = logistic_loss_grad(&w, b, &rows, &y, l2);
    let mut worst = 0.0f64;
    for j in 0..4 {
        let (mut wp, mut wm, mut bp, mut bm) = (w, w, b, b);
        if j < 3 {
            wp[j] += h;
            wm[j] -= h;
        } else {
            bp += h;
            bm -= h;
        }
        let fd = (logistic_loss_grad(&wp, bp, &rows, &y, l2).0 - logistic_loss_grad(&wm, bm, &rows, &y, l2).0) / (2.0 * h);
        let an = if j < 3 { dw[j] } else { db };
        worst = worst.max((fd - an).abs() / an.abs().max(1e-12));
    }
    ensure(worst <= 1e-4, format!("gradient relative error {worst:e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let pairs: Vec<(u32, u32)> = (0..rng.gen_range(1..300)).map(|_| (rng.gen_range(0..6), rng.gen_range(0..6))).collect();
        let m = Metrics::from_pairs(&pairs).map_err(|e| e.to_string())?;
        let correct = pairs.iter().filter(|(p, a)| p == a).count();
        ensure(m.accuracy == correct as f64 / pairs.len() as f64, "accuracy differs from counting")?;
        for (i, &li) in m.labels.iter().enumerate() {
            for (j, &lj) in m.labels.iter().enumerate() {
                let n = pairs.iter().filter(|&&(p, a)| p == li && a == lj).count();
                ensure(m.confusion[i][j] == n, "confusion differs from counting")?;
            }
            let tp = m.confusion[i][i];
            let pred = pairs.iter().filter(|&&(p, _)| p == li).count();
            let act = pairs.iter().filter(|&&(_, a)| a == li).count();
            ensure(m.precision[i] == if pred == 0 { 0.0 } else { tp as f64 / pred as f64 }, "precision differs")?;
            ensure(m.recall[i] == if act == 0 { 0.0 } else { tp as f64 / act as f64 }, "recall differs")?;
        }
    }

    let model = train(&train_set, ClassifierKind::Logistic, &Hyperparams::default_for(ClassifierKind::Logistic), 3)
        .map_err(|e| e.to_string())?;
    for j in 0..3 {
        let mean = train_set.iter().map(|s| s.features[j]).sum::<f64>() / train_set.len() as f64;
        ensure((model.normalizer.mean[j] - mean).abs() < 1e-12, "normalizer mean is not the training mean")?;
    }
    let probe = &test_set[7];
    let alone = model.predict_sample(probe).map_err(|e| e.to_string())?;
    let mut crowd = blobs(200, 25.0, 9);
    crowd.push(probe.clone());
    evaluate(&model, &crowd).map_err(|e| e.to_string())?;
    ensure(model.predict_sample(probe).map_err(|e| e.to_string())? == alone, "prediction moved with test data")?;
    Ok(format!("{}; gradient error {worst:.1e}; metrics match counting; no test-set leakage", accs.join(", ")))
}

/// Tables from the criterion 7 sweeps, reused by later checks.
struct Sweeps {
    footsteps: FootstepsTable,
    sampling: SamplingTable,
    codecs: CodecTable,
}

fn criterion_7(out: &mut Option<Sweeps>) -> Outcome {
    let start = Instant::now();
    let cfg = HarnessConfig { rates_hz: vec![8000.0, 500.0], f_values: vec![1, 7], ..Default::default() };
    let corpus = Corpus::new(&cfg.corpus).map_err(|e| e.to_string())?;
    let (walks, _) = corpus_features(&corpus, &corpus.walks, 8000.0, CodecArm::Nc, &cfg.detector, &cfg.codec)
        .map_err(|e| e.to_string())?;
    let footsteps = sweep_footsteps(&walks, &cfg.kinds, &cfg.f_values, &cfg).map_err(|e| e.to_string())?;
    let sampling = sweep_sampling(&corpus, &cfg).map_err(|e| e.to_string())?;
    let codecs = compare_codecs(&corpus, &cfg.kinds, &[1], &cfg).map_err(|e| e.to_string())?;

    let mut notes = Vec::new();
    let mut failures = Vec::new();
    for kind in ClassifierKind::ALL {
        let (a1, a7) = (footsteps.accuracy(kind, 1).unwrap(), footsteps.accuracy(kind, 7).unwrap());
        let (s8k, s500) = (sampling.accuracy(8000.0, kind).unwrap(), sampling.accuracy(500.0, kind).unwrap());
        let (ds16, ds8bp) = (
            codecs.accuracy(CodecArm::Ds16, kind, 1).unwrap(),
            codecs.accuracy(CodecArm::Ds8bp, kind, 1).unwrap(),
        );
        notes.push(format!(
            "{kind}: F1 {:.1} F7 {:.1} | 8k {:.1} 500 {:.1} | DS16 {:.1} DS8BP {:.1}",
            100.0 * a1, 100.0 * a7, 100.0 * s8k, 100.0 * s500, 100.0 * ds16, 100.0 * ds8bp
        ));
        if !(a7 > a1) {
            failures.push(format!("{kind}: F=7 not above F=1"));
        }
        if (s500 - s8k).abs() > 0.05 {
            failures.push(format!("{kind}: 500 Hz off 8 kHz by {:.1} points", 100.0 * (s500 - s8k)));
        }
        if ds8bp < ds16 - 0.01 {
            failures.push(format!("{kind}: DS8BP {:.1} below DS16 {:.1} - 1", 100.0 * ds8bp, 100.0 * ds16));
        }
    }
    let fet = |rate: f64| sampling.rows.iter().find(|r| r.rate_hz == rate).map(|r| r.fet_s).unwrap_or(f64::NAN);
    notes.push(format!("FET 8k {:.2e} s, 500 Hz {:.2e} s", fet(8000.0), fet(500.0)));
    if start.elapsed() > Duration::from_secs(15 * 60) {
        failures.push(format!("sweep took {:.0?}", start.elapsed()));
    }
    notes.push(format!("{:.0?}", start.elapsed()));
    *out = Some(Sweeps { footsteps, sampling, codecs });
    if failures.is_empty() { Ok(notes.join("; ")) } else { Err(format!("{} [{}]", failures.join("; "), notes.join("; "))) }
}

fn criterion_8() -> Outcome {
    let det = DetectorConfig::default();
    let codec = CodecConfig::default();
    let corpus = Corpus::new(&footid_core::harness::CorpusConfig { profiles: 4, footsteps_per_profile: 80, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let (walks, _) = corpus_features(&corpus, &corpus.walks, 8000.0, CodecArm::Nc, &det, &codec).map_err(|e| e.to_string())?;
    let f_count = 2;
    let samples = footid_core::harness::build_samples(&walks, f_count).map_err(|e| e.to_string())?;
    let model = train(&samples, ClassifierKind::RbfApprox, &Hyperparams::default_for(ClassifierKind::RbfApprox), 1)
        .map_err(|e| e.to_string())?;
    let mut compared = 0;
    for seed in 0..5u64 {
        let (signal, _) = generate_walk(&corpus.profiles[seed as usize % 4], 10.0, 8000.0, 500 + seed).map_err(|e| e.to_string())?;
        let frames = run_thing("S-1", &signal, 0.0, &det, &codec, &LinkModel::default()).map_err(|e| e.to_string())?.frames;
        let records = run_fog("Z-1", &frames, &model, f_count).map_err(|e| e.to_string())?;
        // offline: the same module calls, no link
        let mut expect = Vec::new();
        let mut prev = None;
        let mut buffer = Vec::new();
        for w in extract_events(&signal, &det).map_err(|e| e.to_string())? {
            let ev = footid_core::events::slice_event(&signal, &w).map_err(|e| e.to_string())?;
            if let Compression::Accepted { event, .. } = footid_core::codec::compress_with(&ev, &codec).map_err(|e| e.to_string())? {
                let rebuilt = decompress(&event).map_err(|e| e.to_string())?;
                buffer.push(extract_features(&rebuilt, prev, w.onset_time_s).map_err(|e| e.to_string())?);
                prev = Some(w.onset_time_s);
                if buffer.len() == f_count {
                    let s = aggregate_sample(&std::mem::take(&mut buffer), f_count, None).map_err(|e| e.to_string())?;
                    let (label, conf) = model.predict_sample(&s).map_err(|e| e.to_string())?;
                    expect.push((w.onset_time_s, label, conf));
                }
            }
        }
        ensure(records.len() == expect.len(), format!("walk {seed}: {} records vs {} offline", records.len(), expect.len()))?;
        for (r, (t, label, conf)) in records.iter().zip(&expect) {
            ensure(
                r.timestamp == *t && r.predicted_person == *label && (r.confidence - conf).abs() <= 1e-12,
                format!("walk {seed}: record at {t:.3} s differs"),
            )?;
            compared += 1;
        }
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for pair in 0..100 {
        let mut make = |zone: &str| -> Vec<IdentificationRecord> {
            let mut seen = BTreeSet::new();
            (0..rng.gen_range(0..25))
                .map(|_| IdentificationRecord {
                    timestamp: rng.gen_range(0..60) as f64 * 0.5,
                    zone_id: zone.into(),
                    subzone_id: format!("S-{}", rng.gen_range(0..3)),
                    predicted_person: rng.gen_range(0..8),
                    confidence: rng.gen(),
                    f_count: 1,
                })
                .filter(|r| seen.insert(r.key()))
                .collect()
        };
        let (a, b) = (make("Z-1"), make("Z-2"));
        let fa = RecordStore::new(dir.path().join(format!("a{pair}.ndjson")));
        let fb = RecordStore::new(dir.path().join(format!("b{pair}.ndjson")));
        let cloud = RecordStore::new(dir.path().join(format!("c{pair}.ndjson")));
        fa.append(&a).map_err(|e| e.to_string())?;
        fb.append(&b).map_err(|e| e.to_string())?;
        sync_cloud(&[fa.clone(), fb.clone()], &cloud).map_err(|e| e.to_string())?;
        let once = std::fs::read(cloud.path()).map_err(|e| e.to_string())?;
        sync_cloud(&[fa, fb], &cloud).map_err(|e| e.to_string())?;
        ensure(std::fs::read(cloud.path()).map_err(|e| e.to_string())? == once, format!("pair {pair}: second sync changed the cloud"))?;
        let mut expect = Vec::new();
        merge_records(&[a, b], &mut expect);
        let got: BTreeSet<_> = cloud.read().map_err(|e| e.to_string())?.iter().map(IdentificationRecord::key).collect();
        let want: BTreeSet<_> = expect.iter().map(IdentificationRecord::key).collect();
        ensure(got == want && got.len() == expect.len(), format!("pair {pair}: cloud is not the union"))?;
    }
    Ok(format!("5 walks, {compared} records identical to offline; 100 store pairs synced to their exact union, idempotent"))
}

fn criterion_9(sweeps: Option<&Sweeps>) -> Outcome {
    let tally = sweeps
        .and_then(|s| s.codecs.rows.iter().find(|r| r.codec == CodecArm::Ds8bp))
        .map(|r| &r.tally)
        .ok_or("no DS8BP tally from the corpus sweep")?;
    let ms: Vec<usize> = tally.accepted_shapes.iter().map(|&(_, m)| m).collect();
    ensure(!ms.is_empty(), "no accepted events")?;
    let mean_airtime = ms.iter().map(|&m| airtime_s(datagram_len(m))).sum::<f64>() / ms.len() as f64;
    let mean_m = ms.iter().sum::<usize>() as f64 / ms.len() as f64;
    let formula = (10.0 * mean_m + 2.0) * 8.0 / 80_000.0;
    ensure((mean_airtime - formula).abs() <= 1e-12 * formula, format!("mean airtime {mean_airtime} vs formula {formula}"))?;
    ensure(datagram_len(18) == 182 && (airtime_s(182) - 0.0182).abs() < 1e-15, "M = 18 is not 182 bytes / 18.2 ms")?;
    let reference = (10.0 * REFERENCE_MEAN_ATOMS + 2.0) * 8.0 / 80_000.0;
    ensure((reference - REFERENCE_MEAN_AIRTIME_S).abs() < 5e-7, format!("M = 18.51 gives {reference} s, not 18.71 ms"))?;
    Ok(format!(
        "{} events, mean M {mean_m:.2}, mean airtime {:.3} ms = formula; M = 18.51 -> {:.2} ms",
        ms.len(),
        1e3 * mean_airtime,
        1e3 * reference
    ))
}

/// NC and DS16 agree within 2 points at F=1.
fn nc_vs_ds16(sweeps: Option<&Sweeps>) -> Outcome {
    let t = &sweeps.ok_or("no codec sweep")?.codecs;
    let mut notes = Vec::new();
    for kind in ClassifierKind::ALL {
        let (nc, ds16) = (t.accuracy(CodecArm::Nc, kind, 1).unwrap(), t.accuracy(CodecArm::Ds16, kind, 1).unwrap());
        ensure((nc - ds16).abs() <= 0.02, format!("{kind}: NC {:.1} vs DS16 {:.1}", 100.0 * nc, 100.0 * ds16))?;
        notes.push(format!("{kind} {:+.1}", 100.0 * (ds16 - nc)));
    }
    Ok(format!("DS16 - NC: {}", notes.join(", ")))
}

/// FET drops at 500 Hz, and the 8 kHz row is the F=1 baseline.
fn sampling_examples(sweeps: Option<&Sweeps>) -> Outcome {
    let s = sweeps.ok_or("no sampling sweep")?;
    let row = |r: f64| s.sampling.rows.iter().find(|x| x.rate_hz == r).ok_or("missing rate");
    let (hi, lo) = (row(8000.0)?, row(500.0)?);
    ensure(lo.fet_s < hi.fet_s, format!("FET 500 Hz {:.2e} s not below 8 kHz {:.2e} s", lo.fet_s, hi.fet_s))?;
    for kind in ClassifierKind::ALL {
        ensure(s.sampling.accuracy(8000.0, kind) == s.footsteps.accuracy(kind, 1), format!("{kind}: 8 kHz row differs from F=1"))?;
    }
    Ok(format!("FET -{:.0}% at 500 Hz; 8 kHz row equals the F=1 baseline", 100.0 * (1.0 - lo.fet_s / hi.fet_s)))
}

fn run(n: usize, name: &str, f: impl FnOnce() -> Outcome, failed: &mut usize) {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    match outcome {
        Ok(detail) => println!("acceptance {n} {name}: PASS ({detail})"),
        Err(detail) => {
            *failed += 1;
            println!("acceptance {n} {name}: FAIL ({detail})");
        }
    }
}

fn check(name: &str, f: impl FnOnce() -> Outcome, failed: &mut usize) {
    match f() {
        Ok(detail) => println!("sweep check {name}: PASS ({detail})"),
        Err(detail) => {
            *failed += 1;
            println!("sweep check {name}: FAIL ({detail})");
        }
    }
}

fn main() {
    let mut failed = 0;
    let mut sweeps = None;
    run(1, "codec round-trip", criterion_1, &mut failed);
    run(2, "datagram bit-exactness", criterion_2, &mut failed);
    run(3, "lasso correctness", criterion_3, &mut failed);
    run(4, "event extraction", criterion_4, &mut failed);
    run(5, "feature suite", criterion_5, &mut failed);
    run(6, "classifier suite", criterion_6, &mut failed);
    run(7, "direction of the sweeps", || criterion_7(&mut sweeps), &mut failed);
    run(8, "pipeline equivalence", criterion_8, &mut failed);
    run(9, "airtime arithmetic", || criterion_9(sweeps.as_ref()), &mut failed);
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    let mut extra = 0;
    check("NC vs DS16", || nc_vs_ds16(sweeps.as_ref()), &mut extra);
    check("sampling sweep", || sampling_examples(sweeps.as_ref()), &mut extra);
    failed += extra;
    if failed > 0 {
        std::process::exit(1);
    }
}

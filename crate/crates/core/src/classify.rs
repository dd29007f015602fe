//! One-vs-rest linear classifiers and a random-Fourier-feature RBF approximation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::features::{column_hash, feature_columns, AggregatedSample};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    Logistic,
    LinearSvm,
    RbfApprox,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [Self::Logistic, Self::LinearSvm, Self::RbfApprox];

    pub fn name(self) -> &'static str {
        match self {
            Self::Logistic => "logistic",
            Self::LinearSvm => "linear-svm",
            Self::RbfApprox => "rbf-approx",
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown classifier kind {s:?}")))
    }
}

/// Training knobs. `l2` applies to logistic regression, `c` to both SVM kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub c: f64,
    pub gamma: f64,
    pub rff_dim: usize,
    pub rff_seed: u64,
}

impl Hyperparams {
    pub fn default_for(kind: ClassifierKind) -> Self {
        let base = Hyperparams {
            learning_rate: 0.05,
            epochs: 40,
            l2: 1e-4,
            c: 10.0,
            gamma: 0.001,
            rff_dim: 512,
            rff_seed: 7,
        };
        match kind {
            ClassifierKind::Logistic => base,
            ClassifierKind::LinearSvm => Hyperparams { learning_rate: 0.01, ..base },
            // the random features have unit norm on average, normalized inputs about sqrt(134)
            ClassifierKind::RbfApprox => Hyperparams { learning_rate: 1.0, c: 100.0, ..base },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return invalid("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return invalid("epochs must be at least 1");
        }
        if !(self.l2 >= 0.0 && self.c > 0.0 && self.gamma > 0.0) {
            return invalid("l2 must be non-negative, c and gamma positive");
        }
        if self.rff_dim == 0 {
            return invalid("rff_dim must be at least 1");
        }
        Ok(())
    }
}

/// Training-set mean and std per kept feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub input_dim: usize,
    /// Indices of the features that had variance on the training set.
    pub kept: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub dropped: Vec<usize>,
}

impl Normalizer {
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).ok_or_else(|| Error::InvalidInput("no rows".into()))?;
        let n = rows.len() as f64;
        let (mut kept, mut mean, mut std, mut dropped) = (vec![], vec![], vec![], vec![]);
        for j in 0..dim {
            let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - m) * (r[j] - m)).sum::<f64>() / n;
            let s = var.sqrt();
            if s > 1e-12 * m.abs().max(1e-300) && s > 0.0 {
                kept.push(j);
                mean.push(m);
                std.push(s);
            } else {
                dropped.push(j);
            }
        }
        if kept.is_empty() {
            return Err(Error::DegenerateTraining("every feature is constant".into()));
        }
        Ok(Normalizer { input_dim: dim, kept, mean, std, dropped })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::InvalidInput(format!(
                "feature dimension {} does not match the model's {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(self
            .kept
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&j, (m, s))| (x[j] - m) / s)
            .collect())
    }

    pub fn output_dim(&self) -> usize {
        self.kept.len()
    }
}

/// Seeded random cosine features z(x) = sqrt(2/D) cos(Wx + b), W ~ N(0, 2 gamma), b ~ U(0, 2 pi).
#[derive(Debug, Clone)]
struct RandomFeatures {
    dim: usize,
    w: Vec<f64>,
    b: Vec<f64>,
    input_dim: usize,
}

impl RandomFeatures {
    fn new(input_dim: usize, dim: usize, gamma: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, (2.0 * gamma).sqrt()).expect("positive gamma");
        let w = (0..dim * input_dim).map(|_| normal.sample(&mut rng)).collect();
        let b = (0..dim).map(|_| rng.gen_range(0.0..2.0 * std::f64::consts::PI)).collect();
        RandomFeatures { dim, w, b, input_dim }
    }

    fn map(&self, x: &[f64]) -> Vec<f64> {
        let scale = (2.0 / self.dim as f64).sqrt();
        self.w
            .chunks_exact(self.input_dim)
            .zip(&self.b)
            .map(|(row, b)| scale * (dot(row, x) + b).cos())
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A trained one-vs-rest model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub format_version: u32,
    pub kind: ClassifierKind,
    pub hyperparams: Hyperparams,
    pub labels: Vec<u32>,
    pub normalizer: Normalizer,
    /// One row per label, over normalized features or random features.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    /// Footsteps per sample the model was trained on.
    pub f_count: usize,
    pub column_hash: String,
    #[serde(skip)]
    rff: Option<RandomFeatures>,
}

impl PartialEq for ClassifierModel {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.hyperparams == other.hyperparams
            && self.labels == other.labels
            && self.normalizer == other.normalizer
            && self.weights == other.weights
            && self.biases == other.biases
            && self.f_count == other.f_count
            && self.column_hash == other.column_hash
    }
}

/// Column names for a `dim`-wide sample: the feature columns when they fit, else x0, x1, ...
fn columns_for(dim: usize, f_count: usize) -> Vec<String> {
    let cols = feature_columns(f_count);
    if cols.len() == dim {
        cols
    } else {
        (0..dim).map(|i| format!("x{i}")).collect()
    }
}

impl ClassifierModel {
    fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature".into()));
        }
        let z = self.normalizer.apply(x)?;
        Ok(match &self.rff {
            Some(rff) => rff.map(&z),
            None => z,
        })
    }

    /// Raw one-vs-rest scores, one per label.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.embed(x)?;
        Ok(self.weights.iter().zip(&self.biases).map(|(w, b)| dot(w, &z) + b).collect())
    }

    /// Predicted label and softmax confidence over the scores.
    pub fn predict(&self, x: &[f64]) -> Result<(u32, f64)> {
        let scores = self.scores(x)?;
        let (best, _) = argmax(&scores);
        Ok((self.labels[best], softmax(&scores)[best]))
    }

    pub fn predict_sample(&self, sample: &AggregatedSample) -> Result<(u32, f64)> {
        self.predict(&sample.features)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut model: ClassifierModel = serde_json::from_str(text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFormat(format!("unsupported format version {}", model.format_version)));
        }
        let expect = column_hash(&columns_for(model.normalizer.input_dim, model.f_count));
        if model.column_hash != expect {
            return Err(Error::ModelFormat("feature column hash does not match this build".into()));
        }
        let k = model.labels.len();
        let width = match model.kind {
            ClassifierKind::RbfApprox => model.hyperparams.rff_dim,
            _ => model.normalizer.output_dim(),
        };
        if model.weights.len() != k || model.biases.len() != k || model.weights.iter().any(|w| w.len() != width) {
            return Err(Error::ModelFormat("weight shapes do not match labels and features".into()));
        }
        if model.kind == ClassifierKind::RbfApprox {
            let hp = &model.hyperparams;
            model.rff = Some(RandomFeatures::new(model.normalizer.output_dim(), hp.rff_dim, hp.gamma, hp.rff_seed));
        }
        Ok(model)
    }
}

fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, s)| if s > best.1 { (i, s) } else { best })
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(-m)) without overflow.
fn log_loss(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// Binary regularized cross-entropy and its gradient:
/// `(1/n) sum log(1 + exp(-y (w.x + b))) + l2/2 |w|^2`, labels in {-1, +1}.
/// Returns (loss, dw, db).
pub fn logistic_loss_grad(w: &[f64], b: f64, rows: &[&[f64]], y: &[f64], l2: f64) -> (f64, Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mut loss = 0.5 * l2 * dot(w, w);
    let mut dw: Vec<f64> = w.iter().map(|v| l2 * v).collect();
    let mut db = 0.0;
    for (x, &yi) in rows.iter().zip(y) {
        let m = yi * (dot(w, x) + b);
        loss += log_loss(m) / n;
        let g = -yi * sigmoid(-m) / n;
        dw.iter_mut().zip(x.iter()).for_each(|(d, xi)| *d += g * xi);
        db += g;
    }
    (loss, dw, db)
}

/// Mean hinge loss of one binary classifier.
pub fn hinge_loss(w: &[f64], b: f64, rows: &[&[f64]], y: &[f64]) -> f64 {
    rows.iter().zip(y).map(|(x, yi)| (1.0 - yi * (dot(w, x) + b)).max(0.0)).sum::<f64>() / rows.len() as f64
}

/// Trains one binary classifier with shuffled per-sample stochastic gradient steps.
/// Returns the mean of the end-of-epoch iterates over the second half of training.
fn train_binary(kind: ClassifierKind, rows: &[Vec<f64>], y: &[f64], hp: &Hyperparams, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
    let dim = rows[0].len();
    let n = rows.len();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let reg = match kind {
        ClassifierKind::Logistic => hp.l2,
        _ => 1.0 / (hp.c * n as f64),
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0.0;
    let average_from = hp.epochs / 2;
    let mut w_avg = vec![0.0; dim];
    let mut b_avg = 0.0;
    for epoch in 0..hp.epochs {
        order.shuffle(rng);
        for &i in &order {
            let eta = hp.learning_rate / (1.0 + hp.learning_rate * reg * t + t / (10.0 * n as f64));
            t += 1.0;
            let x = &rows[i];
            let s = dot(&w, x) + b;
            let g = match kind {
                ClassifierKind::Logistic => y[i] * sigmoid(-y[i] * s),
                _ if y[i] * s < 1.0 => y[i],
                _ => 0.0,
            };
            let shrink = 1.0 - eta * reg;
            if g != 0.0 {
                w.iter_mut().zip(x).for_each(|(wj, xj)| *wj = shrink * *wj + eta * g * xj);
                b += eta * g;
            } else if shrink != 1.0 {
                w.iter_mut().for_each(|wj| *wj *= shrink);
            }
        }
        if epoch >= average_from {
            w_avg.iter_mut().zip(&w).for_each(|(a, v)| *a += v);
            b_avg += b;
        }
    }
    let k = (hp.epochs - average_from) as f64;
    (w_avg.into_iter().map(|v| v / k).collect(), b_avg / k)
}

fn check_rows(samples: &[AggregatedSample]) -> Result<(usize, usize)> {
    let first = samples.first().ok_or_else(|| Error::InvalidInput("no samples".into()))?;
    let dim = first.features.len();
    let f_count = first.f_count;
    for s in samples {
        if s.features.len() != dim {
            return Err(Error::InvalidInput("samples have differing feature dimensions".into()));
        }
        if s.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("NaN or infinite feature".into()));
        }
        if s.label.is_none() {
            return Err(Error::InvalidInput("training sample without a label".into()));
        }
    }
    Ok((dim, f_count))
}

/// Fits the normalizer and one binary classifier per label. Deterministic given `seed`.
pub fn train(samples: &[AggregatedSample], kind: ClassifierKind, hp: &Hyperparams, seed: u64) -> Result<ClassifierModel> {
    hp.validate()?;
    let (dim, f_count) = check_rows(samples)?;
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for s in samples {
        *counts.entry(s.label.expect("checked")).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(Error::DegenerateTraining(format!("{} class(es); need at least 2", counts.len())));
    }
    if let Some((label, n)) = counts.iter().find(|(_, n)| **n < 2) {
        return Err(Error::DegenerateTraining(format!("class {label} has {n} sample(s); need at least 2")));
    }
    let labels: Vec<u32> = counts.keys().copied().collect();
    // SGD visits samples in a seeded order over this canonical one, so the
    // model does not depend on how the caller ordered its samples.
    let mut canonical: Vec<&AggregatedSample> = samples.iter().collect();
    canonical.sort_by(|a, b| a.label.cmp(&b.label).then_with(|| lexicographic(&a.features, &b.features)));
    let samples = canonical;
    let raw: Vec<&[f64]> = samples.iter().map(|s| s.features.as_slice()).collect();
    let normalizer = Normalizer::fit(&raw)?;
    let rff = (kind == ClassifierKind::RbfApprox)
        .then(|| RandomFeatures::new(normalizer.output_dim(), hp.rff_dim, hp.gamma, hp.rff_seed));
    let rows: Vec<Vec<f64>> = raw
        .iter()
        .map(|x| {
            let z = normalizer.apply(x).expect("fitted on these rows");
            match &rff {
                Some(r) => r.map(&z),
                None => z,
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(labels.len());
    let mut biases = Vec::with_capacity(labels.len());
    for &label in &labels {
        let y: Vec<f64> = samples.iter().map(|s| if s.label == Some(label) { 1.0 } else { -1.0 }).collect();
        let (w, b) = train_binary(kind, &rows, &y, hp, &mut rng);
        weights.push(w);
        biases.push(b);
    }
    Ok(ClassifierModel {
        format_version: MODEL_FORMAT_VERSION,
        kind,
        hyperparams: hp.clone(),
        labels,
        normalizer,
        weights,
        biases,
        f_count,
        column_hash: column_hash(&columns_for(dim, f_count)),
        rff,
    })
}

/// Accuracy, per-class precision/recall/F1 and the confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub labels: Vec<u32>,
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    /// `confusion[predicted][actual]`, indexed like `labels`.
    pub confusion: Vec<Vec<usize>>,
}

impl Metrics {
    /// Metrics from (predicted, actual) pairs. Labels are the union of both sides.
    pub fn from_pairs(pairs: &[(u32, u32)]) -> Result<Self> {
        if pairs.is_empty() {
            return invalid("no samples to evaluate");
        }
        let labels: Vec<u32> = pairs
            .iter()
            .flat_map(|&(p, a)| [p, a])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: BTreeMap<u32, usize> = labels.iter().enumerate().map(|(i, l)| (*l, i)).collect();
        let k = labels.len();
        let mut confusion = vec![vec![0usize; k]; k];
        for &(p, a) in pairs {
            confusion[index[&p]][index[&a]] += 1;
        }
        let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision: Vec<f64> = (0..k).map(|i| ratio(confusion[i][i], confusion[i].iter().sum())).collect();
        let recall: Vec<f64> = (0..k)
            .map(|i| ratio(confusion[i][i], confusion.iter().map(|row| row[i]).sum()))
            .collect();
        let f1 = precision
            .iter()
            .zip(&recall)
            .map(|(p, r)| if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 })
            .collect();
        Ok(Metrics {
            labels,
            accuracy: ratio(correct, pairs.len()),
            precision,
            recall,
            f1,
            confusion,
        })
    }

    pub fn macro_precision(&self) -> f64 {
        mean(&self.precision)
    }

    pub fn macro_recall(&self) -> f64 {
        mean(&self.recall)
    }

    pub fn macro_f1(&self) -> f64 {
        mean(&self.f1)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = mean(v);
    (m, (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len().max(1) as f64).sqrt())
}

pub fn evaluate(model: &ClassifierModel, samples: &[AggregatedSample]) -> Result<Metrics> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples to evaluate".into()));
    }
    let pairs = samples
        .iter()
        .map(|s| {
            let actual = s.label.ok_or_else(|| Error::InvalidInput("evaluation sample without a label".into()))?;
            Ok((model.predict_sample(s)?.0, actual))
        })
        .collect::<Result<Vec<_>>>()?;
    Metrics::from_pairs(&pairs)
}

/// Per-fold metrics with mean and std over folds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<Metrics>,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub precision_mean: f64,
    pub precision_std: f64,
    pub recall_mean: f64,
    pub recall_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

impl CvReport {
    fn from_folds(folds: Vec<Metrics>) -> Self {
        let stat = |f: &dyn Fn(&Metrics) -> f64| mean_std(&folds.iter().map(f).collect::<Vec<_>>());
        let (accuracy_mean, accuracy_std) = stat(&|m| m.accuracy);
        let (precision_mean, precision_std) = stat(&|m| m.macro_precision());
        let (recall_mean, recall_std) = stat(&|m| m.macro_recall());
        let (f1_mean, f1_std) = stat(&|m| m.macro_f1());
        CvReport {
            folds,
            accuracy_mean,
            accuracy_std,
            precision_mean,
            precision_std,
            recall_mean,
            recall_std,
            f1_mean,
            f1_std,
        }
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// Per-class sample indices in a canonical order (by label, then by feature values),
/// shuffled with `seed`. Independent of the input order.
fn shuffled_by_class(samples: &[AggregatedSample], seed: u64) -> Result<BTreeMap<u32, Vec<usize>>> {
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        let label = s.label.ok_or_else(|| Error::InvalidInput("sample without a label".into()))?;
        by_class.entry(label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for idx in by_class.values_mut() {
        idx.sort_by(|&a, &b| lexicographic(&samples[a].features, &samples[b].features));
        idx.shuffle(&mut rng);
    }
    Ok(by_class)
}

/// Stratified fold assignment: each class is dealt round-robin, continuing where the
/// previous class stopped, so fold sizes differ by at most one.
pub fn stratified_folds(samples: &[AggregatedSample], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > samples.len() {
        return invalid(format!("folds must be in 2..={}, got {folds}", samples.len()));
    }
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for idx in shuffled_by_class(samples, seed)?.into_values() {
        for i in idx {
            out[next % folds].push(i);
            next += 1;
        }
    }
    Ok(out)
}

fn pick(samples: &[AggregatedSample], idx: &[usize]) -> Vec<AggregatedSample> {
    idx.iter().map(|&i| samples[i].clone()).collect()
}

/// Stratified k-fold cross-validation; each fold fits its own normalizer.
pub fn cross_validate(
    samples: &[AggregatedSample],
    kind: ClassifierKind,
    hp: &Hyperparams,
    folds: usize,
    seed: u64,
) -> Result<CvReport> {
    check_rows(samples)?;
    let assignment = stratified_folds(samples, folds, seed)?;
    let mut metrics = Vec::with_capacity(folds);
    for (f, test_idx) in assignment.iter().enumerate() {
        let train_idx: Vec<usize> = assignment
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        let model = train(&pick(samples, &train_idx), kind, hp, seed.wrapping_add(f as u64))?;
        metrics.push(evaluate(&model, &pick(samples, test_idx))?);
    }
    Ok(CvReport::from_folds(metrics))
}

/// Fraction of each class held out by `learning_curve`.
pub const HOLDOUT_FRACTION: f64 = 0.2;

/// Fixed held-out indices (the first fifth of every class after the seeded shuffle)
/// and the remaining per-class training pools, in shuffled order.
pub fn holdout_split(samples: &[AggregatedSample], seed: u64) -> Result<(Vec<usize>, Vec<Vec<usize>>)> {
    let mut held = Vec::new();
    let mut pools = Vec::new();
    for idx in shuffled_by_class(samples, seed)?.into_values() {
        if idx.len() < 2 {
            return Err(Error::DegenerateTraining("every class needs 2 samples to hold one out".into()));
        }
        let n_held = ((idx.len() as f64 * HOLDOUT_FRACTION).round() as usize).clamp(1, idx.len() - 1);
        held.extend_from_slice(&idx[..n_held]);
        pools.push(idx[n_held..].to_vec());
    }
    Ok((held, pools))
}

/// Held-out accuracy after training on `size` samples per class, for each distinct size.
pub fn learning_curve(
    samples: &[AggregatedSample],
    kind: ClassifierKind,
    hp: &Hyperparams,
    train_sizes: &[usize],
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    check_rows(samples)?;
    let (held, pools) = holdout_split(samples, seed)?;
    let pool_min = pools.iter().map(|p| p.len()).min().unwrap_or(0);
    let sizes: BTreeSet<usize> = train_sizes.iter().copied().collect();
    if let Some(&too_big) = sizes.iter().find(|&&s| s > pool_min || s == 0) {
        return invalid(format!("train size {too_big} outside 1..={pool_min} samples per class"));
    }
    let held = pick(samples, &held);
    sizes
        .into_iter()
        .map(|size| {
            let idx: Vec<usize> = pools.iter().flat_map(|p| p[..size].iter().copied()).collect();
            let model = train(&pick(samples, &idx), kind, hp, seed)?;
            Ok((size, evaluate(&model, &held)?.accuracy))
        })
        .collect()
}

//! Over-complete Gabor dictionary.
//!
//! For a length `L` the dictionary has `101 * L` columns: for every shift `tau` on
//! the grid `{0, 1/(L-1), ..., 1}` one pure Gaussian atom followed by a cosine and a
//! sine atom for each `omega` in `{5, 10, ..., 250}`. Atoms are stored raw (not
//! unit-normalised); their norms are cached for the solver.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Result};

/// Width of the Gaussian envelope on the normalised time axis.
pub const SIGMA: f64 = 0.5;
/// Spacing and count of the modulation frequencies.
pub const OMEGA_STEP: f64 = 5.0;
pub const OMEGA_COUNT: usize = 50;
/// Columns generated per shift: one Gaussian plus a cosine/sine pair per omega.
pub const ATOMS_PER_SHIFT: usize = 1 + 2 * OMEGA_COUNT;

/// Column access for anything the sparse solver can run against.
pub trait AtomMatrix {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn column(&self, j: usize) -> &[f64];

    fn column_norm(&self, j: usize) -> f64 {
        self.column(j).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cheap pre-check before an exact coherence test; `false` means the two
    /// columns are known not to be nearly collinear.
    fn may_be_coherent(&self, _a: usize, _b: usize) -> bool {
        true
    }

    /// Writes `column(j) . r` for every column into `out`.
    fn correlate(&self, r: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate().take(self.cols()) {
            *o = crate::sparse::dot(self.column(j), r);
        }
    }
}

/// Column-major dense matrix implementing [`AtomMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenseAtoms {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseAtoms {
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return invalid("columns have different lengths");
        }
        Ok(Self { rows, cols: columns.len(), data: columns.concat() })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { rows: n, cols: n, data }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self { rows: m.nrows(), cols: m.ncols(), data: m.as_slice().to_vec() }
    }
}

impl AtomMatrix for DenseAtoms {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }
}

/// Shape of one dictionary column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AtomKind {
    Gaussian,
    Cosine { omega: f64 },
    Sine { omega: f64 },
}

/// Value of an atom centred at `tau` at normalised time `t`.
pub fn atom_value(kind: AtomKind, t: f64, tau: f64) -> f64 {
    let envelope = (-(t - tau) * (t - tau) / (SIGMA * SIGMA)).exp();
    match kind {
        AtomKind::Gaussian => envelope,
        AtomKind::Cosine { omega } => envelope * (omega * t).cos(),
        AtomKind::Sine { omega } => envelope * (omega * t).sin(),
    }
}

/// The modulation frequencies `5, 10, ..., 250`.
pub fn omegas() -> Vec<f64> {
    (1..=OMEGA_COUNT).map(|m| OMEGA_STEP * m as f64).collect()
}

fn grid(length_l: usize) -> Vec<f64> {
    (0..length_l).map(|i| i as f64 / (length_l - 1) as f64).collect()
}

/// Over-complete Gabor dictionary for one signal length.
///
/// Columns are materialised on first access and kept; a sparse solve only ever
/// touches a small fraction of the `101 L` atoms.
pub struct GaborDictionary {
    length_l: usize,
    grid: Vec<f64>,
    /// Carrier rows in within-block column order: 1, cos, sin, cos, sin, ...
    carriers: Vec<Vec<f64>>,
    columns: Vec<OnceLock<Box<[f64]>>>,
    column_norms: Vec<f64>,
    conv: Convolver,
}

impl std::fmt::Debug for GaborDictionary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaborDictionary")
            .field("length_l", &self.length_l)
            .field("num_atoms", &self.num_atoms())
            .finish()
    }
}

/// Circular convolution with the Gaussian envelope, used for `D^T r`.
///
/// Every atom is the envelope centred on a grid point times a carrier that only
/// depends on absolute time, so one column block per carrier is a convolution
/// of `r * carrier` with the (symmetric) envelope. Cosine and sine carriers of
/// the same omega share one complex transform.
struct Convolver {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Transform of the wrapped envelope, already divided by `size`.
    kernel_hat: Vec<f64>,
    /// `exp(i omega t)` on the grid, one row per omega.
    phasors: Vec<Vec<Complex64>>,
}

/// Smallest 5-smooth integer `>= n`.
fn fft_size(n: usize) -> usize {
    (n..)
        .find(|&m| {
            let mut m = m;
            for p in [2, 3, 5] {
                while m % p == 0 {
                    m /= p;
                }
            }
            m == 1
        })
        .expect("unbounded search")
}

impl Convolver {
    fn new(t: &[f64]) -> Self {
        let l = t.len();
        let size = fft_size(2 * l - 1);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let step = 1.0 / (l - 1) as f64;
        let mut h = vec![Complex64::new(0.0, 0.0); size];
        for d in 0..l {
            let x = d as f64 * step;
            let g = (-x * x / (SIGMA * SIGMA)).exp();
            h[d].re = g;
            if d > 0 {
                h[size - d].re = g;
            }
        }
        forward.process(&mut h);
        let kernel_hat = h.iter().map(|c| c.re / size as f64).collect();
        let phasors = omegas()
            .iter()
            .map(|w| t.iter().map(|ti| Complex64::from_polar(1.0, w * ti)).collect())
            .collect();
        Self { size, forward, inverse, kernel_hat, phasors }
    }

    fn correlate(&self, r: &[f64], out: &mut [f64]) {
        let l = r.len();
        let zero = Complex64::new(0.0, 0.0);
        let mut buf = vec![zero; self.size];
        let mut scratch =
            vec![zero; self.forward.get_inplace_scratch_len().max(self.inverse.get_inplace_scratch_len())];
        let mut run = |buf: &mut [Complex64]| {
            self.forward.process_with_scratch(buf, &mut scratch);
            buf.iter_mut().zip(&self.kernel_hat).for_each(|(b, k)| *b *= *k);
            self.inverse.process_with_scratch(buf, &mut scratch);
        };

        for (b, &x) in buf.iter_mut().zip(r) {
            *b = Complex64::new(x, 0.0);
        }
        run(&mut buf);
        for k in 0..l {
            out[k * ATOMS_PER_SHIFT] = buf[k].re;
        }
        for (m, phasor) in self.phasors.iter().enumerate() {
            buf[..l].iter_mut().zip(phasor.iter().zip(r)).for_each(|(b, (p, &x))| *b = p * x);
            buf[l..].iter_mut().for_each(|b| *b = zero);
            run(&mut buf);
            for k in 0..l {
                out[k * ATOMS_PER_SHIFT + 2 * m + 1] = buf[k].re;
                out[k * ATOMS_PER_SHIFT + 2 * m + 2] = buf[k].im;
            }
        }
    }
}

impl GaborDictionary {
    pub fn generate(length_l: usize) -> Result<Self> {
        if length_l < 2 {
            return invalid(format!("dictionary length must be at least 2, got {length_l}"));
        }
        let t = grid(length_l);
        let mut carriers = vec![vec![1.0; length_l]];
        for w in omegas() {
            carriers.push(t.iter().map(|ti| (w * ti).cos()).collect());
            carriers.push(t.iter().map(|ti| (w * ti).sin()).collect());
        }

        // ||atom(k, c)||^2 = sum_i env(i - k)^2 c(i)^2, a Toeplitz product per carrier.
        let step = 1.0 / (length_l - 1) as f64;
        let env_sq: Vec<f64> = (0..2 * length_l - 1)
            .map(|i| {
                let d = (i as f64 - (length_l - 1) as f64) * step;
                (-2.0 * d * d / (SIGMA * SIGMA)).exp()
            })
            .collect();
        let carriers_sq: Vec<Vec<f64>> =
            carriers.iter().map(|c| c.iter().map(|v| v * v).collect()).collect();
        let mut column_norms = vec![0.0; ATOMS_PER_SHIFT * length_l];
        for k in 0..length_l {
            let window = &env_sq[length_l - 1 - k..2 * length_l - 1 - k];
            for (c, sq) in carriers_sq.iter().enumerate() {
                column_norms[k * ATOMS_PER_SHIFT + c] = crate::sparse::dot(window, sq).sqrt();
            }
        }
        let conv = Convolver::new(&t);
        let columns = (0..ATOMS_PER_SHIFT * length_l).map(|_| OnceLock::new()).collect();
        Ok(Self { length_l, grid: t, carriers, columns, column_norms, conv })
    }

    fn build_column(&self, j: usize) -> Box<[f64]> {
        let tau = self.grid[j / ATOMS_PER_SHIFT];
        let carrier = &self.carriers[j % ATOMS_PER_SHIFT];
        self.grid
            .iter()
            .zip(carrier)
            .map(|(&ti, c)| atom_value(AtomKind::Gaussian, ti, tau) * c)
            .collect()
    }

    pub fn length_l(&self) -> usize {
        self.length_l
    }

    pub fn num_atoms(&self) -> usize {
        ATOMS_PER_SHIFT * self.length_l
    }

    pub fn sigma(&self) -> f64 {
        SIGMA
    }

    pub fn column_norms(&self) -> &[f64] {
        &self.column_norms
    }

    /// Shift and shape of column `index`.
    pub fn describe(&self, index: usize) -> Option<(f64, AtomKind)> {
        describe_atom(self.length_l, index)
    }

    /// Copies the requested columns, in order, into an `L x M` matrix.
    pub fn select_columns(&self, indices: &[usize]) -> Result<DMatrix<f64>> {
        check_indices(indices, self.num_atoms())?;
        let mut data = Vec::with_capacity(indices.len() * self.length_l);
        for &j in indices {
            data.extend_from_slice(self.column(j));
        }
        Ok(DMatrix::from_vec(self.length_l, indices.len(), data))
    }

    /// The full dictionary as a matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut data = Vec::with_capacity(self.num_atoms() * self.length_l);
        for j in 0..self.num_atoms() {
            data.extend_from_slice(self.column(j));
        }
        DMatrix::from_vec(self.length_l, self.num_atoms(), data)
    }
}

impl AtomMatrix for GaborDictionary {
    fn rows(&self) -> usize {
        self.length_l
    }
    fn cols(&self) -> usize {
        self.num_atoms()
    }
    fn column(&self, j: usize) -> &[f64] {
        self.columns[j].get_or_init(|| self.build_column(j))
    }
    fn column_norm(&self, j: usize) -> f64 {
        self.column_norms[j]
    }

    fn correlate(&self, r: &[f64], out: &mut [f64]) {
        self.conv.correlate(r, out);
    }

    fn may_be_coherent(&self, a: usize, b: usize) -> bool {
        // Atoms with different carriers are far from collinear unless their
        // frequencies are adjacent.
        (a % ATOMS_PER_SHIFT).abs_diff(b % ATOMS_PER_SHIFT) <= 2
    }
}

/// Shift and shape of column `index` of the length-`length_l` dictionary.
pub fn describe_atom(length_l: usize, index: usize) -> Option<(f64, AtomKind)> {
    if length_l < 2 || index >= ATOMS_PER_SHIFT * length_l {
        return None;
    }
    let tau = (index / ATOMS_PER_SHIFT) as f64 / (length_l - 1) as f64;
    let within = index % ATOMS_PER_SHIFT;
    let kind = if within == 0 {
        AtomKind::Gaussian
    } else {
        let omega = OMEGA_STEP * within.div_ceil(2) as f64;
        if within % 2 == 1 {
            AtomKind::Cosine { omega }
        } else {
            AtomKind::Sine { omega }
        }
    };
    Some((tau, kind))
}

pub(crate) fn check_indices(indices: &[usize], num_atoms: usize) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(indices.len());
    for &j in indices {
        if j >= num_atoms {
            return invalid(format!("atom index {j} outside [0, {num_atoms})"));
        }
        if !seen.insert(j) {
            return invalid(format!("duplicate atom index {j}"));
        }
    }
    Ok(())
}

/// Bounded cache of dictionaries keyed by length.
///
/// Each length is generated at most once while it stays resident, even under
/// concurrent requests; the least recently used length is evicted first.
pub struct DictionaryCache {
    capacity: usize,
    inner: Mutex<CacheInner>,
}

type Slot = Arc<OnceLock<Arc<GaborDictionary>>>;

#[derive(Default)]
struct CacheInner {
    slots: HashMap<usize, Slot>,
    recency: VecDeque<usize>,
}

impl DictionaryCache {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), inner: Mutex::new(CacheInner::default()) }
    }

    pub fn get(&self, length_l: usize) -> Result<Arc<GaborDictionary>> {
        if length_l < 2 {
            return invalid(format!("dictionary length must be at least 2, got {length_l}"));
        }
        let slot = {
            let mut inner = self.inner.lock().expect("dictionary cache poisoned");
            let slot = inner.slots.entry(length_l).or_default().clone();
            inner.recency.retain(|l| *l != length_l);
            inner.recency.push_back(length_l);
            while inner.recency.len() > self.capacity {
                if let Some(old) = inner.recency.pop_front() {
                    inner.slots.remove(&old);
                }
            }
            slot
        };
        Ok(slot
            .get_or_init(|| {
                Arc::new(GaborDictionary::generate(length_l).expect("length validated above"))
            })
            .clone())
    }

    pub fn resident(&self) -> Vec<usize> {
        let inner = self.inner.lock().expect("dictionary cache poisoned");
        inner.recency.iter().copied().collect()
    }
}

/// Process-wide cache used by the codec.
pub fn cached_dictionary(length_l: usize) -> Result<Arc<GaborDictionary>> {
    static CACHE: OnceLock<DictionaryCache> = OnceLock::new();
    CACHE.get_or_init(|| DictionaryCache::new(4)).get(length_l)
}

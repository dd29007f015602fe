//! LASSO sparse coding over an [`AtomMatrix`], energy-based atom selection and
//! least-squares re-projection onto the selected atoms.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dictionary::AtomMatrix;
use crate::error::{invalid, Error, Result};

/// Candidates examined per working-set slot in one growth round.
const MAX_SCAN_PER_PICK: usize = 16;
/// Fewest atoms added to the working set per outer iteration.
const MIN_GROWTH: usize = 32;
/// Candidates more coherent than this with an atom picked in the same round wait
/// for a later round.
const MAX_PICK_COHERENCE: f64 = 0.95;

/// Condition number above which the projection switches to a rank-truncated solve.
pub const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoConfig {
    /// Penalty as a fraction of `max_j |a_j^T s|` over unit-norm atoms.
    pub lambda_rel: f64,
    /// Budget of coordinate-descent sweeps.
    pub max_iters: usize,
    /// Largest coefficient change (unit-norm atoms) still counted as converged.
    pub tol: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self { lambda_rel: 0.05, max_iters: 2000, tol: 1e-6 }
    }
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_rel > 0.0 && self.lambda_rel < 1.0) {
            return invalid(format!("lambda_rel must lie in (0, 1), got {}", self.lambda_rel));
        }
        if !(self.tol > 0.0) {
            return invalid("tol must be positive");
        }
        if self.max_iters == 0 {
            return invalid("max_iters must be positive");
        }
        Ok(())
    }
}

/// Sparse LASSO solution in raw-atom units.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    /// Non-zero coefficients keyed by atom index.
    pub coefficients: BTreeMap<usize, f64>,
    pub residual_l2: f64,
    /// Absolute penalty used on the unit-norm problem.
    pub lambda: f64,
    pub converged: bool,
    pub sweeps: usize,
    /// Objective of the unit-norm problem after every sweep.
    pub objective_trace: Vec<f64>,
}

impl SparseCode {
    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    /// `D x` for the stored coefficients.
    pub fn reconstruct<A: AtomMatrix + ?Sized>(&self, atoms: &A) -> Vec<f64> {
        let mut out = vec![0.0; atoms.rows()];
        for (&j, &x) in &self.coefficients {
            axpy(x, atoms.column(j), &mut out);
        }
        out
    }
}

/// Dot product with independent partial sums so the loop vectorises.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let xa = &a[c * 8..c * 8 + 8];
        let xb = &b[c * 8..c * 8 + 8];
        for i in 0..8 {
            acc[i] += xa[i] * xb[i];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 8..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

#[inline]
fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

/// Solves `min 1/2 ||D x - s||^2 + lambda ||x||_1` with
/// `lambda = lambda_rel * max_j |a_j^T s|` on unit-norm atoms `a_j`.
pub fn solve_lasso<A: AtomMatrix + ?Sized>(
    atoms: &A,
    target: &[f64],
    config: &LassoConfig,
) -> Result<SparseCode> {
    config.validate()?;
    check_target(atoms, target)?;
    let mut corr = vec![0.0; atoms.cols()];
    atoms.correlate(target, &mut corr);
    let lambda_max = corr
        .iter()
        .enumerate()
        .filter_map(|(j, c)| {
            let n = atoms.column_norm(j);
            (n > 0.0).then(|| (c / n).abs())
        })
        .fold(0.0, f64::max);
    solve_lasso_with_lambda(atoms, target, config.lambda_rel * lambda_max, config)
}

fn check_target<A: AtomMatrix + ?Sized>(atoms: &A, target: &[f64]) -> Result<()> {
    if target.len() != atoms.rows() {
        return invalid(format!(
            "target length {} does not match dictionary length {}",
            target.len(),
            atoms.rows()
        ));
    }
    if target.iter().any(|v| !v.is_finite()) {
        return invalid("target contains non-finite values");
    }
    Ok(())
}

/// Same problem with an absolute penalty; `lambda_rel` in `config` is ignored.
///
/// Cyclic coordinate descent on a working set: a full correlation pass picks the
/// worst KKT violators among the zero coefficients, the working set is swept
/// (with an exact feature-sign solve every few sweeps) until no coefficient moves by
/// `tol`, and the outer loop stops once no zero coefficient violates its KKT
/// condition by more than `10 * tol`.
pub fn solve_lasso_with_lambda<A: AtomMatrix + ?Sized>(
    atoms: &A,
    target: &[f64],
    lambda: f64,
    config: &LassoConfig,
) -> Result<SparseCode> {
    check_target(atoms, target)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return invalid(format!("lambda must be non-negative, got {lambda}"));
    }
    let cols = atoms.cols();
    let norms: Vec<f64> = (0..cols).map(|j| atoms.column_norm(j)).collect();
    let kkt_tol = 10.0 * config.tol;

    let mut z = vec![0.0f64; cols];
    let mut residual = target.to_vec();
    let mut support: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut sweeps = 0;
    let mut converged = false;
    let mut inner_settled = true;
    let mut violations: Vec<(usize, f64)> = Vec::with_capacity(cols);
    let mut corr = vec![0.0; cols];

    loop {
        violations.clear();
        let mut worst = 0.0f64;
        atoms.correlate(&residual, &mut corr);
        for j in 0..cols {
            if norms[j] == 0.0 || z[j] != 0.0 {
                continue;
            }
            let v = (corr[j] / norms[j]).abs() - lambda;
            worst = worst.max(v);
            if v > 0.0 {
                violations.push((j, v));
            }
        }
        if worst <= kkt_tol && inner_settled {
            converged = true;
            break;
        }
        if sweeps >= config.max_iters {
            break;
        }

        // Grow the working set with the worst violators, skipping candidates that
        // are nearly collinear with one already picked this round: neighbouring
        // shifts are near-duplicates and sweeping them together stalls.
        let grow = (2 * support.len()).max(MIN_GROWTH);
        let by_violation = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        let scan = violations.len().min(MAX_SCAN_PER_PICK * grow);
        if scan < violations.len() {
            violations.select_nth_unstable_by(scan, by_violation);
            violations.truncate(scan);
        }
        violations.sort_unstable_by(by_violation);
        let mut picked: Vec<usize> = Vec::with_capacity(grow);
        for &(j, _) in violations.iter() {
            if picked.len() == grow {
                break;
            }
            let cj = atoms.column(j);
            let redundant = picked.iter().any(|&p| {
                atoms.may_be_coherent(j, p)
                    && (dot(cj, atoms.column(p)) / (norms[j] * norms[p])).abs() > MAX_PICK_COHERENCE
            });
            if !redundant {
                picked.push(j);
            }
        }
        let mut working: Vec<usize> = support.clone();
        working.extend(picked);
        working.sort_unstable();
        working.dedup();

        let mut round_sweeps = 0;
        loop {
            let mut max_change = 0.0f64;
            for &j in &working {
                let col = atoms.column(j);
                let g = dot(col, &residual) / norms[j];
                let updated = soft_threshold(z[j] + g, lambda);
                let delta = updated - z[j];
                if delta != 0.0 {
                    axpy(-delta / norms[j], col, &mut residual);
                    z[j] = updated;
                    max_change = max_change.max(delta.abs());
                }
            }
            sweeps += 1;
            round_sweeps += 1;
            trace.push(objective(&residual, &z, &working, lambda));
            inner_settled = max_change < config.tol;
            if inner_settled || sweeps >= config.max_iters {
                break;
            }
            if round_sweeps % SWEEPS_BEFORE_EXACT == 0 {
                sweeps += feature_sign(
                    atoms,
                    &norms,
                    target,
                    lambda,
                    &working,
                    &mut z,
                    &mut residual,
                    &mut trace,
                    config.max_iters - sweeps,
                );
            }
        }
        support = working.into_iter().filter(|&j| z[j] != 0.0).collect();
    }

    let coefficients = support
        .iter()
        .filter(|&&j| z[j] != 0.0 && z[j].is_finite())
        .map(|&j| (j, z[j] / norms[j]))
        .collect();
    Ok(SparseCode {
        coefficients,
        residual_l2: dot(&residual, &residual).sqrt(),
        lambda,
        converged,
        sweeps,
        objective_trace: trace,
    })
}

/// Coordinate sweeps on a fresh working set before it is solved exactly.
const SWEEPS_BEFORE_EXACT: usize = 8;

/// Solves the LASSO restricted to `working` exactly by feature-sign search,
/// warm-started from the current coefficients.
///
/// Each step activates the worst violating zero coefficient, moves towards the
/// minimiser of the smooth part with the active signs fixed, and line-searches
/// over the zero crossings on the way. Near-duplicate atoms make the active Gram
/// singular; then the step is taken in its range space, or along a null
/// direction until a redundant coefficient reaches zero. Every accepted step
/// lowers the objective and is appended to `trace`. Returns the number of steps.
#[allow(clippy::too_many_arguments)]
fn feature_sign<A: AtomMatrix + ?Sized>(
    atoms: &A,
    norms: &[f64],
    target: &[f64],
    lambda: f64,
    working: &[usize],
    z: &mut [f64],
    residual: &mut Vec<f64>,
    trace: &mut Vec<f64>,
    budget: usize,
) -> usize {
    let k = working.len();
    let cols: Vec<Vec<f64>> = working
        .iter()
        .map(|&j| atoms.column(j).iter().map(|v| v / norms[j]).collect())
        .collect();
    let gram = DMatrix::from_fn(k, k, |a, b| dot(&cols[a], &cols[b]));
    let corr = DVector::from_fn(k, |a, _| dot(&cols[a], target));
    let offset = 0.5 * dot(target, target);
    let eval = |x: &DVector<f64>| -> f64 {
        offset + 0.5 * x.dot(&(&gram * x)) - corr.dot(x)
            + lambda * x.iter().map(|v| v.abs()).sum::<f64>()
    };
    let mut x = DVector::from_fn(k, |a, _| z[working[a]]);
    let mut current = eval(&x);
    let mut steps = 0;

    'outer: while steps < budget {
        let grad = &gram * &x - &corr;
        let mut active: Vec<usize> = (0..k).filter(|&a| x[a] != 0.0).collect();
        let entering = (0..k)
            .filter(|&a| x[a] == 0.0)
            .map(|a| (a, grad[a].abs()))
            .filter(|&(_, g)| g > lambda)
            .max_by(|p, q| p.1.total_cmp(&q.1));
        let mut signs: Vec<f64> = active.iter().map(|&a| x[a].signum()).collect();
        if let Some((a, _)) = entering {
            active.push(a);
            signs.push(-grad[a].signum());
        }
        if active.is_empty() {
            break;
        }
        loop {
            if steps >= budget {
                break 'outer;
            }
            let m = active.len();
            let sub = DMatrix::from_fn(m, m, |p, q| gram[(active[p], active[q])]);
            let rhs = DVector::from_fn(m, |p, _| corr[active[p]] - lambda * signs[p]);
            let start = DVector::from_fn(m, |p, _| x[active[p]]);
            let mut accepted = None;
            for robust in [false, true] {
                let Some(step) = sign_fixed_step(&sub, &rhs, &start, robust) else {
                    continue;
                };
                if let Some((f, trial)) = line_search(&step, &start, &active, &x, &eval) {
                    if f < current {
                        accepted = Some((f, trial, step));
                        break;
                    }
                }
            }
            let Some((f, trial, step)) = accepted else {
                break 'outer;
            };
            x = trial;
            current = f;
            steps += 1;
            trace.push(current);
            let reached_goal = match &step {
                Step::Goal(goal) => active.iter().enumerate().all(|(p, &a)| x[a] == goal[p]),
                Step::Ray(_) => false,
            };
            active.retain(|&a| x[a] != 0.0);
            signs = active.iter().map(|&a| x[a].signum()).collect();
            if reached_goal || active.is_empty() {
                break;
            }
        }
    }

    let mut r = target.to_vec();
    for (a, &j) in working.iter().enumerate() {
        z[j] = x[a];
        if x[a] != 0.0 {
            axpy(-x[a], &cols[a], &mut r);
        }
    }
    *residual = r;
    steps
}

/// Relative eigenvalue below which the active Gram is treated as singular.
const GRAM_RCOND: f64 = 1e-10;

enum Step {
    /// Minimiser of the sign-fixed quadratic.
    Goal(DVector<f64>),
    /// Null direction of the Gram along which the sign-fixed objective falls.
    Ray(DVector<f64>),
}

/// Target of one feature-sign step for `0.5 x'Gx - rhs'x` from `start`.
///
/// The fast path is a Cholesky solve; `robust` uses an eigendecomposition so a
/// singular `G` still gives the closest minimiser, or a descent ray when `rhs`
/// has a component in the null space.
fn sign_fixed_step(g: &DMatrix<f64>, rhs: &DVector<f64>, start: &DVector<f64>, robust: bool) -> Option<Step> {
    if !robust {
        let chol = g.clone().cholesky()?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
        if !(lo * lo > GRAM_RCOND * hi * hi) {
            return None;
        }
        let goal = chol.solve(rhs);
        return goal.iter().all(|v| v.is_finite()).then_some(Step::Goal(goal));
    }
    let eig = g.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let beta = eig.eigenvectors.transpose() * rhs;
    let coords = eig.eigenvectors.transpose() * start;
    let null: Vec<usize> =
        (0..g.nrows()).filter(|&i| eig.eigenvalues[i] <= GRAM_RCOND * top).collect();
    let null_pull: f64 = null.iter().map(|&i| beta[i] * beta[i]).sum();
    if null_pull > 1e-24 * (1.0 + rhs.norm_squared()) {
        let mut ray = DVector::zeros(g.nrows());
        for &i in &null {
            ray += eig.eigenvectors.column(i) * beta[i];
        }
        return Some(Step::Ray(ray));
    }
    let mut goal = start.clone();
    for i in 0..g.nrows() {
        if !null.contains(&i) {
            let delta = beta[i] / eig.eigenvalues[i] - coords[i];
            goal += eig.eigenvectors.column(i) * delta;
        }
    }
    goal.iter().all(|v| v.is_finite()).then_some(Step::Goal(goal))
}

/// Best point on the step among its zero crossings (and the goal itself).
fn line_search(
    step: &Step,
    start: &DVector<f64>,
    active: &[usize],
    x: &DVector<f64>,
    eval: &impl Fn(&DVector<f64>) -> f64,
) -> Option<(f64, DVector<f64>)> {
    let m = active.len();
    let direction = match step {
        Step::Goal(goal) => goal - start,
        Step::Ray(ray) => ray.clone(),
    };
    // (t, coordinate that reaches zero at t)
    let mut candidates: Vec<(f64, Option<usize>)> = (0..m)
        .filter(|&p| start[p] != 0.0 && start[p] * direction[p] < 0.0)
        .map(|p| (-start[p] / direction[p], Some(p)))
        .filter(|&(t, _)| t > 0.0 && t.is_finite())
        .collect();
    match step {
        Step::Goal(_) => {
            candidates.retain(|&(t, _)| t < 1.0);
            candidates.push((1.0, None));
        }
        Step::Ray(_) => {
            // Only the first crossing: beyond it the signs are no longer fixed.
            let first = candidates.iter().copied().min_by(|a, b| a.0.total_cmp(&b.0));
            candidates = first.into_iter().collect();
        }
    }
    let mut best: Option<(f64, DVector<f64>)> = None;
    for &(t, hits) in &candidates {
        let mut trial = x.clone();
        for p in 0..m {
            trial[active[p]] = if Some(p) == hits { 0.0 } else { start[p] + t * direction[p] };
        }
        if let (Step::Goal(goal), None) = (step, hits) {
            for p in 0..m {
                trial[active[p]] = goal[p];
            }
        }
        let f = eval(&trial);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, trial));
        }
    }
    best
}

fn objective(residual: &[f64], z: &[f64], touched: &[usize], lambda: f64) -> f64 {
    // Every non-zero coordinate is in the current working set.
    0.5 * dot(residual, residual) + lambda * touched.iter().map(|&j| z[j].abs()).sum::<f64>()
}

/// Objective `1/2 ||D x - s||^2 + lambda * sum |x_j| * ||d_j||` of a code, evaluated
/// in the unit-norm parametrisation the solver minimises.
pub fn lasso_objective<A: AtomMatrix + ?Sized>(atoms: &A, target: &[f64], code: &SparseCode) -> f64 {
    let rec = code.reconstruct(atoms);
    let r: f64 = rec.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
    let l1: f64 = code.coefficients.iter().map(|(&j, x)| x.abs() * atoms.column_norm(j)).sum();
    0.5 * r + code.lambda * l1
}

/// Picks the atoms holding `energy_fraction` of the squared-coefficient energy.
///
/// Coefficients are ranked by decreasing squared magnitude (ties by lower index),
/// the ranking is cut to at most `length_l - 1` entries, and the shortest prefix
/// whose cumulative energy reaches `energy_fraction` of the total is returned.
///
/// The pseudocode this follows writes the stop rule as "largest i with
/// cumulative sum < 1"; taken literally that keeps every truncated entry, so the
/// cut is read as a cumulative-energy threshold instead.
pub fn select_atoms_by_energy(
    code: &SparseCode,
    length_l: usize,
    energy_fraction: f64,
) -> Result<Vec<usize>> {
    if !(energy_fraction > 0.0 && energy_fraction <= 1.0) {
        return invalid(format!("energy_fraction must lie in (0, 1], got {energy_fraction}"));
    }
    if code.is_empty() {
        return Err(Error::EmptyCode);
    }
    let mut ranked: Vec<(usize, f64)> =
        code.coefficients.iter().map(|(&j, &x)| (j, x * x)).collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let total: f64 = ranked.iter().map(|r| r.1).sum();
    ranked.truncate(length_l.saturating_sub(1).max(1));

    let mut cumulative = 0.0;
    let mut selected = Vec::new();
    for (j, e) in ranked {
        selected.push(j);
        cumulative += e;
        if cumulative / total >= energy_fraction - 1e-12 {
            break;
        }
    }
    Ok(selected)
}

/// Least-squares coefficients of `target` on the columns of `selected`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coefficients: Vec<f64>,
    pub residual_l2: f64,
    pub condition_number: f64,
    /// True when the columns were too ill-conditioned and a rank-truncated
    /// minimum-norm solution was used instead.
    pub rank_truncated: bool,
}

/// Pseudoinverse projection `selected^+ * target`.
pub fn project_least_squares(selected: &DMatrix<f64>, target: &[f64]) -> Result<Projection> {
    let (rows, cols) = selected.shape();
    if target.len() != rows {
        return invalid(format!("target length {} does not match {rows} rows", target.len()));
    }
    if cols > rows {
        return invalid(format!("{cols} atoms exceed signal length {rows}"));
    }
    let b = DVector::from_column_slice(target);
    if cols == 0 {
        return Ok(Projection {
            coefficients: Vec::new(),
            residual_l2: b.norm(),
            condition_number: 1.0,
            rank_truncated: false,
        });
    }
    let svd = selected.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    let condition_number = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    let rank_truncated = !(condition_number <= MAX_CONDITION);
    let eps = if rank_truncated { s_max / MAX_CONDITION } else { 0.0 };
    let x = svd.solve(&b, eps).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let residual_l2 = (selected * &x - &b).norm();
    if rank_truncated {
        log::debug!("projection rank-truncated, condition number {condition_number:e}");
    }
    Ok(Projection {
        coefficients: x.iter().copied().collect(),
        residual_l2,
        condition_number,
        rank_truncated,
    })
}

//! Comparative-advantage filters for one year's country × industry matrix.
//!
//! Two routes produce a binary specialization matrix:
//!
//! - Balassa RCA, where the expected value of a cell is the product of its
//!   margins over the grand total;
//! - ICA, where the expected value comes from the discrete bipartite weighted
//!   configuration model (BiWCM). Each cell weight is geometric,
//!   `P(W = w) = (1 - p) p^w` with `p = x_c y_i`, and the multipliers are fitted
//!   so that expected row and column strengths equal the observed ones.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real matrix with country row labels and industry column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    rows: Vec<String>,
    cols: Vec<String>,
    values: DMatrix<f64>,
}

/// One year's observed labour matrix `L[c, i]`.
pub type WeightedMatrix = LabeledMatrix;

impl LabeledMatrix {
    /// Builds a matrix from row-major data; entries must be finite and non-negative.
    pub fn from_row_major(rows: Vec<String>, cols: Vec<String>, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows.len() * cols.len() {
            return Err(Error::invalid(format!(
                "matrix data has {} entries, expected {}×{}",
                data.len(),
                rows.len(),
                cols.len()
            )));
        }
        let values = DMatrix::from_row_slice(rows.len(), cols.len(), &data);
        Self::new(rows, cols, values)
    }

    pub fn new(rows: Vec<String>, cols: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != rows.len() || values.ncols() != cols.len() {
            return Err(Error::invalid("matrix shape does not match its labels"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("matrix entry {v} is not a finite non-negative number")));
        }
        for (labels, what) in [(&rows, "row"), (&cols, "column")] {
            let mut sorted: Vec<&String> = labels.iter().collect();
            sorted.sort();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!("duplicate {what} label")));
            }
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> &[String] {
        &self.rows
    }

    pub fn cols(&self) -> &[String] {
        &self.cols
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[(r, c)]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.values.row_iter().map(|r| r.sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        self.values.column_iter().map(|c| c.sum()).collect()
    }

    /// Entries rounded half-to-even, as required by the discrete null model.
    pub fn rounded(&self) -> Self {
        Self {
            rows: self.rows.clone(),
            cols: self.cols.clone(),
            values: self.values.map(f64::round_ties_even),
        }
    }

    /// Removes rows and columns with zero sum, repeating until none remain.
    /// Returns the reduced matrix and the dropped row and column labels.
    pub fn drop_empty(&self) -> (Self, Vec<String>, Vec<String>) {
        let mut keep_r: Vec<usize> = (0..self.nrows()).collect();
        let mut keep_c: Vec<usize> = (0..self.ncols()).collect();
        loop {
            let r2: Vec<usize> = keep_r
                .iter()
                .copied()
                .filter(|&r| keep_c.iter().any(|&c| self.values[(r, c)] > 0.0))
                .collect();
            let c2: Vec<usize> = keep_c
                .iter()
                .copied()
                .filter(|&c| r2.iter().any(|&r| self.values[(r, c)] > 0.0))
                .collect();
            let stable = r2.len() == keep_r.len() && c2.len() == keep_c.len();
            keep_r = r2;
            keep_c = c2;
            if stable {
                break;
            }
        }
        let dropped_r = (0..self.nrows())
            .filter(|r| !keep_r.contains(r))
            .map(|r| self.rows[r].clone())
            .collect();
        let dropped_c = (0..self.ncols())
            .filter(|c| !keep_c.contains(c))
            .map(|c| self.cols[c].clone())
            .collect();
        let values = DMatrix::from_fn(keep_r.len(), keep_c.len(), |r, c| {
            self.values[(keep_r[r], keep_c[c])]
        });
        let reduced = Self {
            rows: keep_r.iter().map(|&r| self.rows[r].clone()).collect(),
            cols: keep_c.iter().map(|&c| self.cols[c].clone()).collect(),
            values,
        };
        (reduced, dropped_r, dropped_c)
    }

    fn check_margins(&self) -> Result<()> {
        if let Some(r) = self.row_sums().iter().position(|&s| s <= 0.0) {
            return Err(Error::ZeroMargin(format!("row {}", self.rows[r])));
        }
        if let Some(c) = self.col_sums().iter().position(|&s| s <= 0.0) {
            return Err(Error::ZeroMargin(format!("column {}", self.cols[c])));
        }
        Ok(())
    }

    pub(crate) fn with_values(&self, values: DMatrix<f64>) -> Self {
        Self {
            rows: self.rows.clone(),
            cols: self.cols.clone(),
            values,
        }
    }
}

/// How a binary matrix was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Rca { threshold: f64 },
    IcaRatio { threshold: f64 },
    IcaPvalue { alpha: f64 },
    /// Read back from a file without provenance metadata.
    External,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Rca { threshold } => write!(f, "rca>{threshold}"),
            Provenance::IcaRatio { threshold } => write!(f, "ica-ratio>{threshold}"),
            Provenance::IcaPvalue { alpha } => write!(f, "ica-pvalue-bh<={alpha}"),
            Provenance::External => write!(f, "external"),
        }
    }
}

/// Binary country × industry specialization matrix `M[c, i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecializationMatrix {
    rows: Vec<String>,
    cols: Vec<String>,
    entries: DMatrix<u8>,
    provenance: Provenance,
}

impl SpecializationMatrix {
    pub fn new(
        rows: Vec<String>,
        cols: Vec<String>,
        entries: DMatrix<u8>,
        provenance: Provenance,
    ) -> Result<Self> {
        if entries.nrows() != rows.len() || entries.ncols() != cols.len() {
            return Err(Error::invalid("matrix shape does not match its labels"));
        }
        if entries.iter().any(|&e| e > 1) {
            return Err(Error::invalid("specialization entries must be 0 or 1"));
        }
        Ok(Self {
            rows,
            cols,
            entries,
            provenance,
        })
    }

    pub fn rows(&self) -> &[String] {
        &self.rows
    }

    pub fn cols(&self) -> &[String] {
        &self.cols
    }

    pub fn entries(&self) -> &DMatrix<u8> {
        &self.entries
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.entries[(r, c)] == 1
    }

    /// Diversification of each row.
    pub fn row_sums(&self) -> Vec<usize> {
        self.entries
            .row_iter()
            .map(|r| r.iter().map(|&e| e as usize).sum())
            .collect()
    }

    /// Ubiquity of each column.
    pub fn col_sums(&self) -> Vec<usize> {
        self.entries
            .column_iter()
            .map(|c| c.iter().map(|&e| e as usize).sum())
            .collect()
    }

    /// Removes all-zero rows and columns (repeating until stable).
    pub fn drop_empty(&self) -> (Self, Vec<String>, Vec<String>) {
        let as_real = LabeledMatrix {
            rows: self.rows.clone(),
            cols: self.cols.clone(),
            values: self.entries.map(f64::from),
        };
        let (reduced, dr, dc) = as_real.drop_empty();
        let m = Self {
            rows: reduced.rows,
            cols: reduced.cols,
            entries: reduced.values.map(|v| v as u8),
            provenance: self.provenance,
        };
        (m, dr, dc)
    }
}

/// Balassa revealed comparative advantage:
/// `RCA[c,i] = (L[c,i] / Σ_i' L[c,i']) / (Σ_c' L[c',i] / Σ L)`.
pub fn compute_rca(l: &WeightedMatrix) -> Result<LabeledMatrix> {
    l.check_margins()?;
    let rs = l.row_sums();
    let cs = l.col_sums();
    let total: f64 = rs.iter().sum();
    let values = DMatrix::from_fn(l.nrows(), l.ncols(), |r, c| {
        (l.values[(r, c)] / rs[r]) / (cs[c] / total)
    });
    Ok(l.with_values(values))
}

/// `M = 1` where `RCA > threshold` (strict).
pub fn binarize_rca(rca: &LabeledMatrix, threshold: f64) -> SpecializationMatrix {
    SpecializationMatrix {
        rows: rca.rows.clone(),
        cols: rca.cols.clone(),
        entries: rca.values.map(|v| u8::from(v > threshold)),
        provenance: Provenance::Rca { threshold },
    }
}

/// Which solver stage produced the final multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStage {
    FixedPoint,
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiwcmDiagnostics {
    pub iterations: usize,
    pub fixed_point_iterations: usize,
    pub newton_iterations: usize,
    pub stage: SolverStage,
    /// `max_k |E[s_k] - s_k|` over all row and column strengths.
    pub max_abs_residual: f64,
    /// `max_k |E[s_k] - s_k| / s_k`.
    pub max_rel_residual: f64,
}

/// Fitted discrete BiWCM for one year.
///
/// Multipliers are reported in the balanced gauge `mean(ln x) = mean(ln y)`;
/// only the products `x_c y_i` are identified.
#[derive(Debug, Clone)]
pub struct BiwcmSolution {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    log_x: Vec<f64>,
    log_y: Vec<f64>,
    /// The integer-rounded matrix the model was fitted to.
    pub observed: DMatrix<f64>,
    pub expected: DMatrix<f64>,
    pub pvalues: DMatrix<f64>,
    pub diagnostics: BiwcmDiagnostics,
}

impl BiwcmSolution {
    /// `ln(x_c y_i)`, always negative.
    pub fn log_prob(&self, r: usize, c: usize) -> f64 {
        self.log_x[r] + self.log_y[c]
    }

    /// Geometric parameter `x_c y_i`.
    pub fn prob(&self, r: usize, c: usize) -> f64 {
        self.log_prob(r, c).exp()
    }

    pub fn expected_matrix(&self) -> LabeledMatrix {
        LabeledMatrix {
            rows: self.rows.clone(),
            cols: self.cols.clone(),
            values: self.expected.clone(),
        }
    }

    pub fn pvalue_matrix(&self) -> LabeledMatrix {
        LabeledMatrix {
            rows: self.rows.clone(),
            cols: self.cols.clone(),
            values: self.pvalues.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiwcmOptions {
    /// Convergence threshold on `|E[s_k] - s_k| / max(1, s_k)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BiwcmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100_000,
        }
    }
}

const FIXED_POINT_BUDGET: usize = 1_000;

/// Expected geometric weight `p / (1 - p)` from `ln p < 0`.
fn mean_weight(log_p: f64) -> f64 {
    1.0 / (-log_p).exp_m1()
}

struct Strengths {
    rows: Vec<f64>,
    cols: Vec<f64>,
}

struct State {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl State {
    fn feasible(&self) -> bool {
        let ma = self.a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mb = self.b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ma + mb < 0.0
    }

    fn expected(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.a.len(), self.b.len(), |r, c| mean_weight(self.a[r] + self.b[c]))
    }

    /// Row then column residuals `E[s] - s`.
    fn residuals(&self, s: &Strengths) -> Vec<f64> {
        let e = self.expected();
        let mut out: Vec<f64> = e.row_iter().zip(&s.rows).map(|(r, t)| r.sum() - t).collect();
        out.extend(e.column_iter().zip(&s.cols).map(|(c, t)| c.sum() - t));
        out
    }

    fn objective(&self, s: &Strengths) -> f64 {
        let mut f = -self.a.iter().zip(&s.rows).map(|(a, t)| a * t).sum::<f64>()
            - self.b.iter().zip(&s.cols).map(|(b, t)| b * t).sum::<f64>();
        for &a in &self.a {
            for &b in &self.b {
                f -= (-(a + b).exp_m1()).ln();
            }
        }
        f
    }
}

fn scaled_max(res: &[f64], s: &Strengths) -> f64 {
    res.iter()
        .zip(s.rows.iter().chain(&s.cols))
        .map(|(r, t)| r.abs() / t.max(1.0))
        .fold(0.0, f64::max)
}

/// Fits the discrete BiWCM to the half-to-even rounded weights of `l`.
///
/// Damped fixed-point sweeps on the strength equations run first; if they do
/// not reach `tol`, a Newton solve on the (convex) dual objective finishes
/// the job.
pub fn fit_biwcm(l: &WeightedMatrix, opts: &BiwcmOptions) -> Result<BiwcmSolution> {
    if l.nrows() < 2 || l.ncols() < 2 {
        return Err(Error::invalid(format!(
            "degenerate {}×{} matrix; the null model needs at least 2 rows and 2 columns",
            l.nrows(),
            l.ncols()
        )));
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::invalid("tolerance must be positive and max_iter non-zero"));
    }
    let observed = l.values.map(f64::round_ties_even);
    let rounded = l.with_values(observed.clone());
    rounded.check_margins()?;
    let s = Strengths {
        rows: rounded.row_sums(),
        cols: rounded.col_sums(),
    };
    let total: f64 = s.rows.iter().sum();

    let half_log_total = 0.5 * total.ln();
    let mut st = State {
        a: s.rows.iter().map(|v| v.ln() - half_log_total).collect(),
        b: s.cols.iter().map(|v| v.ln() - half_log_total).collect(),
    };
    let cap = 0.9f64.ln();
    let top = st.a.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        + st.b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top > cap {
        let shift = 0.5 * (top - cap);
        st.a.iter_mut().for_each(|a| *a -= shift);
        st.b.iter_mut().for_each(|b| *b -= shift);
    }

    let mut res = st.residuals(&s);
    let mut err = scaled_max(&res, &s);
    let mut fp_iters = 0;
    let mut newton_iters = 0;
    let mut stage = SolverStage::FixedPoint;

    while err > opts.tol && fp_iters < FIXED_POINT_BUDGET.min(opts.max_iter) {
        fixed_point_sweep(&mut st, &s);
        fp_iters += 1;
        res = st.residuals(&s);
        err = scaled_max(&res, &s);
    }

    if err > opts.tol {
        stage = SolverStage::Newton;
        while err > opts.tol && fp_iters + newton_iters < opts.max_iter {
            newton_iters += 1;
            if !newton_step(&mut st, &s, &res) {
                break;
            }
            res = st.residuals(&s);
            err = scaled_max(&res, &s);
        }
        if err > opts.tol {
            return Err(Error::NoConvergence {
                iterations: fp_iters + newton_iters,
                residual: err,
            });
        }
    }

    // A few extra Newton steps while they still pay off; quadratic
    // convergence takes the residual to rounding level almost for free.
    let mut abs_err = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    for _ in 0..3 {
        let before = State {
            a: st.a.clone(),
            b: st.b.clone(),
        };
        if !newton_step(&mut st, &s, &res) {
            st = before;
            break;
        }
        let r2 = st.residuals(&s);
        let e2 = r2.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        if e2 < 0.5 * abs_err {
            res = r2;
            abs_err = e2;
        } else {
            if e2 > abs_err {
                st = before;
            } else {
                res = r2;
                abs_err = e2;
            }
            break;
        }
    }

    let shift = 0.5 * (mean(&st.b) - mean(&st.a));
    st.a.iter_mut().for_each(|a| *a += shift);
    st.b.iter_mut().for_each(|b| *b -= shift);

    let expected = st.expected();
    let pvalues = DMatrix::from_fn(observed.nrows(), observed.ncols(), |r, c| {
        survival(st.a[r] + st.b[c], observed[(r, c)])
    });
    let max_rel = res
        .iter()
        .zip(s.rows.iter().chain(&s.cols))
        .map(|(r, t)| r.abs() / t)
        .fold(0.0, f64::max);

    Ok(BiwcmSolution {
        rows: l.rows.clone(),
        cols: l.cols.clone(),
        x: st.a.iter().map(|a| a.exp()).collect(),
        y: st.b.iter().map(|b| b.exp()).collect(),
        log_x: st.a,
        log_y: st.b,
        observed,
        expected,
        pvalues,
        diagnostics: BiwcmDiagnostics {
            iterations: fp_iters + newton_iters,
            fixed_point_iterations: fp_iters,
            newton_iterations: newton_iters,
            stage,
            max_abs_residual: abs_err,
            max_rel_residual: max_rel,
        },
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// One Gauss–Seidel sweep of `ln x_c += ln(s_c / E[s_c])`, then the same for
/// columns, each move capped at half the distance to the `x_c y_i < 1` boundary.
fn fixed_point_sweep(st: &mut State, s: &Strengths) {
    let max_b = st.b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for (r, a) in st.a.iter_mut().enumerate() {
        let e: f64 = st.b.iter().map(|&b| mean_weight(*a + b)).sum();
        let target = *a + (s.rows[r] / e).ln();
        let bound = -max_b;
        *a = if target < bound { target.min(*a + 0.5 * (bound - *a)) } else { *a + 0.5 * (bound - *a) };
    }
    let max_a = st.a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for (c, b) in st.b.iter_mut().enumerate() {
        let e: f64 = st.a.iter().map(|&a| mean_weight(a + *b)).sum();
        let target = *b + (s.cols[c] / e).ln();
        let bound = -max_a;
        *b = if target < bound { target.min(*b + 0.5 * (bound - *b)) } else { *b + 0.5 * (bound - *b) };
    }
}

/// Damped Newton step on the dual objective. Returns false if no acceptable
/// step length was found.
fn newton_step(st: &mut State, s: &Strengths, res: &[f64]) -> bool {
    let (m, n) = (st.a.len(), st.b.len());
    let dim = m + n;
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for r in 0..m {
        for c in 0..n {
            let e = mean_weight(st.a[r] + st.b[c]);
            let w = e * (1.0 + e);
            h[(r, r)] += w;
            h[(m + c, m + c)] += w;
            h[(r, m + c)] += w;
            h[(m + c, r)] += w;
        }
    }
    // The Hessian is singular along the gauge direction (1,…,1,-1,…,-1); the
    // gradient is orthogonal to it, so adding v vᵀ leaves the step unchanged.
    let scale = (0..dim).map(|k| h[(k, k)]).sum::<f64>() / dim as f64;
    let v = DVector::from_fn(dim, |k, _| if k < m { 1.0 } else { -1.0 });
    h += (&v * v.transpose()) * (scale / dim as f64);
    let g = DVector::from_column_slice(res);
    let Some(chol) = h.cholesky() else {
        return false;
    };
    let delta = chol.solve(&(-&g));

    let f0 = st.objective(s);
    let slope = g.dot(&delta);
    let r0 = scaled_max(res, s);
    let mut t = 1.0;
    for _ in 0..60 {
        let trial = State {
            a: st.a.iter().enumerate().map(|(r, a)| a + t * delta[r]).collect(),
            b: st.b.iter().enumerate().map(|(c, b)| b + t * delta[m + c]).collect(),
        };
        if trial.feasible() {
            let armijo = trial.objective(s) <= f0 + 1e-4 * t * slope;
            if armijo || scaled_max(&trial.residuals(s), s) < 0.5 * r0 {
                *st = trial;
                return true;
            }
        }
        t *= 0.5;
    }
    false
}

/// `P(W >= w)` for a geometric weight with `ln p = log_p`: `p^w`.
fn survival(log_p: f64, w: f64) -> f64 {
    if w <= 0.0 {
        1.0
    } else {
        (w * log_p).exp()
    }
}

/// Upper-tail p-values `P(W >= L[c,i]) = (x_c y_i)^L[c,i]` of the rounded
/// observed weights under a fitted model.
pub fn pvalues(solution: &BiwcmSolution, l: &WeightedMatrix) -> Result<LabeledMatrix> {
    if l.nrows() != solution.rows.len() || l.ncols() != solution.cols.len() {
        return Err(Error::invalid("matrix shape does not match the fitted model"));
    }
    let mut out = DMatrix::zeros(l.nrows(), l.ncols());
    for r in 0..l.nrows() {
        for c in 0..l.ncols() {
            let lp = solution.log_prob(r, c);
            if !(lp < 0.0) {
                return Err(Error::invalid(format!(
                    "invalid geometric parameter x*y = {} at ({}, {})",
                    lp.exp(),
                    solution.rows[r],
                    solution.cols[c]
                )));
            }
            out[(r, c)] = survival(lp, l.values[(r, c)].round_ties_even());
        }
    }
    Ok(l.with_values(out))
}

/// Randomized (mid-distribution) p-value `P(W > w) + u P(W = w)` for
/// `u ~ U(0, 1)`; exactly uniform under the null.
pub fn randomized_pvalue(prob: f64, w: u64, u: f64) -> f64 {
    let tail_ge = prob.powf(w as f64);
    let tail_gt = tail_ge * prob;
    tail_gt + u * (tail_ge - tail_gt)
}

/// Draws one weight matrix from the fitted ensemble.
pub fn sample_biwcm<R: Rng + ?Sized>(solution: &BiwcmSolution, rng: &mut R) -> DMatrix<u64> {
    let (m, n) = (solution.rows.len(), solution.cols.len());
    DMatrix::from_fn(m, n, |r, c| {
        let p = solution.prob(r, c);
        Geometric::new(1.0 - p)
            .expect("0 < 1 - p <= 1 for a valid solution")
            .sample(rng)
    })
}

/// Benjamini–Hochberg adjusted p-values, in input order.
pub fn benjamini_hochberg(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p[i].total_cmp(&p[j]).then(i.cmp(&j)));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &idx) in order.iter().enumerate().rev() {
        let v = (p[idx] * m as f64 / (rank + 1) as f64).min(1.0);
        running = running.min(v);
        adjusted[idx] = running;
    }
    adjusted
}

/// How observed weights are compared with the null model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum IcaMode {
    /// `M = 1` where `L / E[L] > threshold`.
    Ratio { threshold: f64 },
    /// `M = 1` where the BH-adjusted p-value is at most `alpha` and `L >= 1`.
    Pvalue { alpha: f64 },
}

impl Default for IcaMode {
    fn default() -> Self {
        IcaMode::Ratio { threshold: 1.0 }
    }
}

/// Inferred comparative advantage matrix.
pub fn build_ica_matrix(
    l: &WeightedMatrix,
    solution: &BiwcmSolution,
    mode: IcaMode,
) -> Result<SpecializationMatrix> {
    if l.nrows() != solution.rows.len() || l.ncols() != solution.cols.len() {
        return Err(Error::invalid("matrix shape does not match the fitted model"));
    }
    let obs = l.values.map(f64::round_ties_even);
    let (entries, provenance) = match mode {
        IcaMode::Ratio { threshold } => (
            DMatrix::from_fn(obs.nrows(), obs.ncols(), |r, c| {
                u8::from(obs[(r, c)] / solution.expected[(r, c)] > threshold)
            }),
            Provenance::IcaRatio { threshold },
        ),
        IcaMode::Pvalue { alpha } => {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(Error::invalid(format!("alpha must lie in (0, 1], got {alpha}")));
            }
            let p = pvalues(solution, l)?;
            // column-major, like nalgebra's storage
            let adj = benjamini_hochberg(p.values.as_slice());
            let adj = DMatrix::from_column_slice(obs.nrows(), obs.ncols(), &adj);
            (
                DMatrix::from_fn(obs.nrows(), obs.ncols(), |r, c| {
                    u8::from(obs[(r, c)] >= 1.0 && adj[(r, c)] <= alpha)
                }),
                Provenance::IcaPvalue { alpha },
            )
        }
    };
    Ok(SpecializationMatrix {
        rows: l.rows.clone(),
        cols: l.cols.clone(),
        entries,
        provenance,
    })
}

//! Fitness–complexity fixed point with a dummy-country anchor.
//!
//! Each step computes `F~_c = Σ_i M_ci Q_i`, normalizes it, then
//! `Q~_i = 1 / Σ_c M_ci / F_c` and normalizes that. The map is invariant to
//! rescaling, so a fully diversified dummy row is appended and every score is
//! divided by the dummy's fitness, which pins a common scale across years.

use serde::{Deserialize, Serialize};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::null_model::SpecializationMatrix;

/// Reserved row label of the dummy country.
pub const DUMMY_COUNTRY: &str = "__DUMMY__";

/// Values below this are reported as underflowing instead of being clamped.
pub const SCORE_FLOOR: f64 = 1e-300;

/// Appends an all-ones row labelled [`DUMMY_COUNTRY`].
pub fn add_dummy_row(m: &SpecializationMatrix) -> Result<SpecializationMatrix> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::invalid("cannot augment an empty matrix"));
    }
    if m.rows().iter().any(|r| r == DUMMY_COUNTRY) {
        return Err(Error::invalid(format!(
            "row label {DUMMY_COUNTRY} is reserved and already present"
        )));
    }
    let (nr, nc) = (m.nrows(), m.ncols());
    let entries = DMatrix::from_fn(nr + 1, nc, |r, c| if r < nr { m.entries()[(r, c)] } else { 1 });
    let mut rows = m.rows().to_vec();
    rows.push(DUMMY_COUNTRY.to_string());
    SpecializationMatrix::new(rows, m.cols().to_vec(), entries, m.provenance())
}

/// Per-step normalization of the intermediate iterates. The reported scores
/// are always mean-normalized before anchoring, so this only affects the
/// floating-point path, not the result.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Mean,
    Max,
    Sum,
}

impl Normalization {
    fn apply(self, v: &mut [f64]) {
        let d = match self {
            Normalization::Mean => v.iter().sum::<f64>() / v.len() as f64,
            Normalization::Max => v.iter().copied().fold(0.0, f64::max),
            Normalization::Sum => v.iter().sum::<f64>(),
        };
        v.iter_mut().for_each(|x| *x /= d);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfcOptions {
    pub max_iter: usize,
    /// Threshold on the max absolute change of log-scores between iterates.
    pub tol: f64,
    pub normalization: Normalization,
    pub initial_fitness: f64,
    pub initial_complexity: f64,
}

impl Default for EfcOptions {
    fn default() -> Self {
        Self {
            max_iter: 5_000,
            tol: 1e-9,
            normalization: Normalization::Mean,
            initial_fitness: 1.0,
            initial_complexity: 1.0,
        }
    }
}

/// Dummy-anchored scores of one year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityScores {
    pub year: i32,
    /// Includes the dummy row, whose fitness is exactly 1.
    pub countries: Vec<String>,
    pub fitness: Vec<f64>,
    pub industries: Vec<String>,
    pub complexity: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Last max |Δ ln score| between consecutive iterates.
    pub log_change: f64,
    /// Whether the rank orderings were unchanged in the last step.
    pub ranks_stable: bool,
    /// Rows or columns whose score would have dropped below [`SCORE_FLOOR`].
    pub underflow: Vec<String>,
}

impl ComplexityScores {
    pub fn fitness_of(&self, country: &str) -> Option<f64> {
        self.countries.iter().position(|c| c == country).map(|k| self.fitness[k])
    }

    pub fn complexity_of(&self, industry: &str) -> Option<f64> {
        self.industries.iter().position(|c| c == industry).map(|k| self.complexity[k])
    }

    /// `(country, fitness)` pairs without the dummy.
    pub fn country_fitness(&self) -> impl Iterator<Item = (&str, f64)> {
        self.countries
            .iter()
            .zip(&self.fitness)
            .filter(|(c, _)| c.as_str() != DUMMY_COUNTRY)
            .map(|(c, f)| (c.as_str(), *f))
    }
}

fn order(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    idx
}

fn max_log_change(old: &[f64], new: &[f64]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(a, b)| (b.ln() - a.ln()).abs())
        .fold(0.0, f64::max)
}

/// Iterates the fitness–complexity map on a dummy-augmented matrix, then
/// anchors the dummy's fitness to 1.
pub fn run_efc(m: &SpecializationMatrix, year: i32, opts: &EfcOptions) -> Result<ComplexityScores> {
    let dummy = m
        .rows()
        .iter()
        .position(|r| r == DUMMY_COUNTRY)
        .ok_or_else(|| Error::invalid("matrix has no dummy row; call add_dummy_row first"))?;
    if let Some(r) = m.row_sums().iter().position(|&s| s == 0) {
        return Err(Error::ZeroMargin(format!("country {} has no specialization", m.rows()[r])));
    }
    if let Some(c) = m.col_sums().iter().position(|&s| s == 0) {
        return Err(Error::ZeroMargin(format!("industry {} has no specialized country", m.cols()[c])));
    }
    if !(opts.initial_fitness > 0.0 && opts.initial_complexity > 0.0) {
        return Err(Error::invalid("initial scores must be positive"));
    }

    let (nr, nc) = (m.nrows(), m.ncols());
    let links: Vec<Vec<usize>> = (0..nr)
        .map(|r| (0..nc).filter(|&c| m.get(r, c)).collect())
        .collect();
    let holders: Vec<Vec<usize>> = (0..nc)
        .map(|c| (0..nr).filter(|&r| m.get(r, c)).collect())
        .collect();

    // F^(0) is overwritten before first use: each step starts from Q.
    let mut fit = vec![opts.initial_fitness; nr];
    let mut cpx = vec![opts.initial_complexity; nc];
    let mut iterations = 0;
    let mut log_change = f64::INFINITY;
    let mut ranks_stable = false;
    let mut converged = false;
    let mut underflow = Vec::new();

    while iterations < opts.max_iter {
        let mut f_new: Vec<f64> = links.iter().map(|l| l.iter().map(|&c| cpx[c]).sum()).collect();
        opts.normalization.apply(&mut f_new);
        let mut q_new: Vec<f64> = holders
            .iter()
            .map(|h| 1.0 / h.iter().map(|&r| 1.0 / f_new[r]).sum::<f64>())
            .collect();
        opts.normalization.apply(&mut q_new);

        let low: Vec<String> = f_new
            .iter()
            .zip(m.rows())
            .chain(q_new.iter().zip(m.cols()))
            .filter(|(v, _)| !(**v >= SCORE_FLOOR) || !v.is_finite())
            .map(|(_, l)| l.clone())
            .collect();
        if !low.is_empty() {
            underflow = low;
            log::warn!("fitness-complexity scores underflow for year {year}: {underflow:?}");
            break;
        }

        iterations += 1;
        let first = iterations == 1;
        log_change = if first {
            f64::INFINITY
        } else {
            max_log_change(&fit, &f_new).max(max_log_change(&cpx, &q_new))
        };
        ranks_stable = !first && order(&fit) == order(&f_new) && order(&cpx) == order(&q_new);
        fit = f_new;
        cpx = q_new;
        if ranks_stable && log_change < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "fitness-complexity did not converge for year {year} after {iterations} iterations (Δln = {log_change:e})"
        );
    }

    Normalization::Mean.apply(&mut fit);
    Normalization::Mean.apply(&mut cpx);
    let anchor = fit[dummy];
    fit.iter_mut().for_each(|f| *f /= anchor);
    cpx.iter_mut().for_each(|q| *q /= anchor);
    fit[dummy] = 1.0;

    Ok(ComplexityScores {
        year,
        countries: m.rows().to_vec(),
        fitness: fit,
        industries: m.cols().to_vec(),
        complexity: cpx,
        iterations,
        converged,
        log_change,
        ranks_stable,
        underflow,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub year: i32,
    pub country: String,
    pub fitness: f64,
    pub rank: usize,
}

/// Per-year fitness ranks, sorted by year then rank then country code.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub entries: Vec<RankEntry>,
}

/// Competition ("1224") ranking by descending fitness; ties share a rank and
/// are listed in country-code order. The dummy is excluded.
pub fn rank_fitness(scores: &[ComplexityScores]) -> RankTable {
    let mut entries = Vec::new();
    let mut by_year: Vec<&ComplexityScores> = scores.iter().collect();
    by_year.sort_by_key(|s| s.year);
    for s in by_year {
        let mut rows: Vec<(&str, f64)> = s.country_fitness().collect();
        rows.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        let mut rank = 0;
        for (k, (country, fitness)) in rows.iter().enumerate() {
            if k == 0 || *fitness != rows[k - 1].1 {
                rank = k + 1;
            }
            entries.push(RankEntry {
                year: s.year,
                country: country.to_string(),
                fitness: *fitness,
                rank,
            });
        }
    }
    RankTable { entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::null_model::Provenance;

    fn spec(rows: usize, cols: usize, data: &[u8]) -> SpecializationMatrix {
        SpecializationMatrix::new(
            (0..rows).map(|k| format!("c{}", k + 1)).collect(),
            (0..cols).map(|k| format!("i{}", k + 1)).collect(),
            DMatrix::from_row_slice(rows, cols, data),
            Provenance::External,
        )
        .unwrap()
    }

    #[test]
    fn dummy_row_definition() {
        let m = spec(2, 3, &[1, 0, 0, 0, 1, 0]);
        let d = add_dummy_row(&m).unwrap();
        assert_eq!(d.nrows(), 3);
        assert_eq!(d.rows()[2], DUMMY_COUNTRY);
        assert!((0..3).all(|c| d.get(2, c)));
        let before = m.col_sums();
        let after = d.col_sums();
        assert!(before.iter().zip(&after).all(|(b, a)| a - b == 1));
        assert!(add_dummy_row(&d).is_err());
    }

    #[test]
    fn single_cell_matrix_is_fully_symmetric() {
        let d = add_dummy_row(&spec(1, 1, &[1])).unwrap();
        let s = run_efc(&d, 2010, &EfcOptions::default()).unwrap();
        assert_eq!(s.fitness, vec![1.0, 1.0]);
        assert_eq!(s.complexity, vec![1.0]);
        assert!(s.converged);
    }

    #[test]
    fn requires_dummy_and_non_empty_margins() {
        let m = spec(2, 2, &[1, 0, 1, 0]);
        assert!(run_efc(&m, 2010, &EfcOptions::default()).is_err());
        let d = add_dummy_row(&spec(2, 2, &[1, 1, 0, 0])).unwrap();
        let err = run_efc(&d, 2010, &EfcOptions::default()).unwrap_err();
        assert!(err.to_string().contains("c2"), "{err}");
    }

    #[test]
    fn dominating_rows_have_higher_fitness() {
        let d = add_dummy_row(&spec(3, 4, &[1, 1, 1, 0, 1, 1, 0, 0, 0, 1, 0, 1])).unwrap();
        let s = run_efc(&d, 2010, &EfcOptions::default()).unwrap();
        // c1 ⊇ c2
        assert!(s.fitness[0] >= s.fitness[1]);
        assert_eq!(s.fitness[3], 1.0);
    }

    #[test]
    fn ranking_rules() {
        let mk = |f: Vec<f64>| ComplexityScores {
            year: 2010,
            countries: vec!["A".into(), "B".into(), "C".into()],
            fitness: f,
            industries: vec![],
            complexity: vec![],
            iterations: 0,
            converged: true,
            log_change: 0.0,
            ranks_stable: true,
            underflow: vec![],
        };
        let t = rank_fitness(&[mk(vec![2.0, 1.0, 0.5])]);
        let ranks: Vec<(&str, usize)> = t.entries.iter().map(|e| (e.country.as_str(), e.rank)).collect();
        assert_eq!(ranks, [("A", 1), ("B", 2), ("C", 3)]);
        let t = rank_fitness(&[mk(vec![1.0, 1.0, 0.5])]);
        let ranks: Vec<(&str, usize)> = t.entries.iter().map(|e| (e.country.as_str(), e.rank)).collect();
        assert_eq!(ranks, [("A", 1), ("B", 1), ("C", 3)]);
        let scaled = rank_fitness(&[mk(vec![7.0, 7.0, 3.5])]);
        assert!(scaled.entries.iter().zip(&t.entries).all(|(a, b)| a.rank == b.rank && a.country == b.country));
    }

    #[test]
    fn ranking_excludes_dummy() {
        let d = add_dummy_row(&spec(2, 2, &[1, 1, 1, 0])).unwrap();
        let s = run_efc(&d, 2011, &EfcOptions::default()).unwrap();
        let t = rank_fitness(&[s]);
        assert_eq!(t.entries.len(), 2);
        assert!(t.entries.iter().all(|e| e.country != DUMMY_COUNTRY && e.year == 2011));
    }
}

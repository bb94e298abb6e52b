//! Labour-weighted fitness and its within/between decomposition.
//!
//! With industry labour shares `θ` and an industry measure `Q` (complexity, or
//! entropy for the baseline), `LWF_t = Σ_i θ_it Q_it` and
//!
//! ```text
//! LWF_t - LWF_{t-k} = Σ_i θ_{i,t-k} (Q_it - Q_{i,t-k})   within
//!                   + Σ_i Q_it (θ_it - θ_{i,t-k})         between
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data_model::EmploymentPanel;
use crate::efc::ComplexityScores;
use crate::error::{Error, Result};
use crate::null_model::WeightedMatrix;

/// Industry employment shares of one country-year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabourShares {
    pub country: String,
    pub year: i32,
    pub industries: Vec<String>,
    pub shares: Vec<f64>,
}

impl LabourShares {
    /// Shares from raw labels and counts (not necessarily normalized).
    pub fn from_counts(
        country: impl Into<String>,
        year: i32,
        industries: Vec<String>,
        counts: &[f64],
    ) -> Result<Self> {
        let country = country.into();
        if industries.len() != counts.len() {
            return Err(Error::invalid("industry labels and counts differ in length"));
        }
        if counts.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(format!("invalid employment for ({country}, {year})")));
        }
        let total: f64 = counts.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroMargin(format!("total employment of ({country}, {year}) is zero")));
        }
        Ok(Self {
            country,
            year,
            industries,
            shares: counts.iter().map(|v| v / total).collect(),
        })
    }
}

/// `θ_i = L_ci / Σ_i' L_ci'` for one country-year of a gap-free panel.
pub fn labour_shares(panel: &EmploymentPanel, country: &str, year: i32) -> Result<LabourShares> {
    let c = panel
        .country_index(country)
        .ok_or_else(|| Error::UnknownLabels(vec![country.to_string()]))?;
    let y = panel
        .year_index(year)
        .ok_or_else(|| Error::UnknownLabels(vec![year.to_string()]))?;
    let mut counts = Vec::with_capacity(panel.industries().len());
    for (i, ind) in panel.industries().iter().enumerate() {
        counts.push(panel.get(c, i, y).ok_or_else(|| {
            Error::invalid(format!("missing employment for ({country}, {ind}, {year})"))
        })?);
    }
    LabourShares::from_counts(country, year, panel.industries().to_vec(), &counts)
}

/// A per-industry measure (complexity or entropy) for one year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndustryScores {
    pub year: i32,
    pub industries: Vec<String>,
    pub values: Vec<f64>,
}

impl IndustryScores {
    fn as_map(&self) -> BTreeMap<&str, f64> {
        self.industries.iter().map(|s| s.as_str()).zip(self.values.iter().copied()).collect()
    }

    fn min(&self) -> Option<f64> {
        self.values.iter().copied().reduce(f64::min)
    }
}

impl From<&ComplexityScores> for IndustryScores {
    fn from(s: &ComplexityScores) -> Self {
        Self {
            year: s.year,
            industries: s.industries.clone(),
            values: s.complexity.clone(),
        }
    }
}

/// Per-industry Shannon entropy `S_i` of one year.
pub type IndustryEntropy = IndustryScores;

/// Which industry measure a decomposition uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Measure {
    /// Fitness–complexity `Q`.
    #[serde(rename = "Q")]
    Complexity,
    /// Shannon entropy `S` (labour-weighted entropy baseline).
    #[serde(rename = "S")]
    Entropy,
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Measure::Complexity => "Q",
            Measure::Entropy => "S",
        })
    }
}

impl std::str::FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Q" | "q" => Ok(Measure::Complexity),
            "S" | "s" => Ok(Measure::Entropy),
            other => Err(Error::invalid(format!("unknown measure `{other}`"))),
        }
    }
}

/// One window of the decomposition for one country.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRecord {
    pub country: String,
    pub t0: i32,
    pub t1: i32,
    pub k: i32,
    /// `LWF_t1 - LWF_t0`, computed directly from the two levels.
    pub dlwf: f64,
    pub within: f64,
    pub between: f64,
    pub measure: Measure,
    /// Industries whose measure was missing in a period and filled with that
    /// period's minimum.
    pub imputed: usize,
}

/// Values on a common industry axis: `θ` zero-filled, the measure filled
/// with its minimum.
fn align_measure(labels: &[&str], scores: &IndustryScores, imputed: &mut usize) -> Result<Vec<f64>> {
    let map = scores.as_map();
    let floor = scores
        .min()
        .ok_or_else(|| Error::invalid(format!("no industry scores for year {}", scores.year)))?;
    Ok(labels
        .iter()
        .map(|l| {
            map.get(l).copied().unwrap_or_else(|| {
                *imputed += 1;
                floor
            })
        })
        .collect())
}

fn align_shares(labels: &[&str], theta: &LabourShares) -> Vec<f64> {
    let map: BTreeMap<&str, f64> = theta
        .industries
        .iter()
        .map(|s| s.as_str())
        .zip(theta.shares.iter().copied())
        .collect();
    labels.iter().map(|l| map.get(l).copied().unwrap_or(0.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `LWF = Σ_i θ_i Q_i` over the union of industries.
pub fn lwf(theta: &LabourShares, scores: &IndustryScores) -> Result<f64> {
    let labels: BTreeSet<&str> = theta
        .industries
        .iter()
        .chain(&scores.industries)
        .map(|s| s.as_str())
        .collect();
    let labels: Vec<&str> = labels.into_iter().collect();
    let mut imputed = 0;
    let q = align_measure(&labels, scores, &mut imputed)?;
    Ok(dot(&align_shares(&labels, theta), &q))
}

fn decompose_with(
    theta0: &LabourShares,
    theta1: &LabourShares,
    m0: &IndustryScores,
    m1: &IndustryScores,
    measure: Measure,
) -> Result<DecompositionRecord> {
    if theta0.country != theta1.country {
        return Err(Error::invalid(format!(
            "shares belong to different countries ({} vs {})",
            theta0.country, theta1.country
        )));
    }
    if theta0.year >= theta1.year {
        return Err(Error::invalid(format!(
            "window must run forward in time, got {} -> {}",
            theta0.year, theta1.year
        )));
    }
    let labels: BTreeSet<&str> = theta0
        .industries
        .iter()
        .chain(&theta1.industries)
        .chain(&m0.industries)
        .chain(&m1.industries)
        .map(|s| s.as_str())
        .collect();
    let labels: Vec<&str> = labels.into_iter().collect();
    let mut imputed = 0;
    let q0 = align_measure(&labels, m0, &mut imputed)?;
    let q1 = align_measure(&labels, m1, &mut imputed)?;
    let th0 = align_shares(&labels, theta0);
    let th1 = align_shares(&labels, theta1);

    let within = th0.iter().zip(q1.iter().zip(&q0)).map(|(t, (a, b))| t * (a - b)).sum();
    let between = q1.iter().zip(th1.iter().zip(&th0)).map(|(q, (a, b))| q * (a - b)).sum();
    Ok(DecompositionRecord {
        country: theta1.country.clone(),
        t0: theta0.year,
        t1: theta1.year,
        k: theta1.year - theta0.year,
        dlwf: dot(&th1, &q1) - dot(&th0, &q0),
        within,
        between,
        measure,
        imputed,
    })
}

/// Within/between decomposition of the change in labour-weighted fitness.
pub fn decompose(
    theta0: &LabourShares,
    theta1: &LabourShares,
    q0: &IndustryScores,
    q1: &IndustryScores,
) -> Result<DecompositionRecord> {
    decompose_with(theta0, theta1, q0, q1, Measure::Complexity)
}

/// Same decomposition with industry entropy in place of complexity.
pub fn decompose_entropy(
    theta0: &LabourShares,
    theta1: &LabourShares,
    s0: &IndustryEntropy,
    s1: &IndustryEntropy,
) -> Result<DecompositionRecord> {
    decompose_with(theta0, theta1, s0, s1, Measure::Entropy)
}

/// Distribution whose entropy defines `S_i`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyBasis {
    /// `p_c ∝ L_ci`: the industry's employment spread across countries.
    #[default]
    Employment,
    /// `p_c ∝ θ_ci`: the same spread after normalizing each country to unit
    /// employment, so large countries do not dominate.
    LabourShare,
}

/// `S_i = -Σ_c p_c ln p_c` per industry (natural log, `0 ln 0 = 0`).
pub fn industry_entropy(l: &WeightedMatrix, year: i32, basis: EntropyBasis) -> Result<IndustryEntropy> {
    let weights = match basis {
        EntropyBasis::Employment => l.values().clone(),
        EntropyBasis::LabourShare => {
            let rs = l.row_sums();
            if let Some(r) = rs.iter().position(|&s| s <= 0.0) {
                return Err(Error::ZeroMargin(format!("row {}", l.rows()[r])));
            }
            let mut w = l.values().clone();
            for (r, mut row) in w.row_iter_mut().enumerate() {
                row /= rs[r];
            }
            w
        }
    };
    let mut values = Vec::with_capacity(l.ncols());
    for (c, col) in weights.column_iter().enumerate() {
        let total = col.sum();
        if !(total > 0.0) {
            return Err(Error::ZeroMargin(format!("column {}", l.cols()[c])));
        }
        let s: f64 = col
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| {
                let p = v / total;
                -p * p.ln()
            })
            .sum();
        values.push(s.max(0.0));
    }
    Ok(IndustryScores {
        year,
        industries: l.cols().to_vec(),
        values,
    })
}

/// Decomposes every country over every window `(t - k, t)` with both years
/// present in `scores`.
pub fn decompose_panel(
    panel: &EmploymentPanel,
    scores: &BTreeMap<i32, IndustryScores>,
    k: i32,
    measure: Measure,
) -> Result<Vec<DecompositionRecord>> {
    if k < 1 {
        return Err(Error::invalid(format!("window length k must be >= 1, got {k}")));
    }
    let mut out = Vec::new();
    for country in panel.countries() {
        for (&t1, s1) in scores {
            let Some(s0) = scores.get(&(t1 - k)) else {
                continue;
            };
            let th0 = labour_shares(panel, country, t1 - k)?;
            let th1 = labour_shares(panel, country, t1)?;
            out.push(decompose_with(&th0, &th1, s0, s1, measure)?);
        }
    }
    Ok(out)
}

//! Gap filling for country–industry employment series.
//!
//! Every strategy except the global linear fit interpolates internal gaps
//! linearly and differs only in how it extends the series past the first
//! and last observation:
//!
//! | id | edges |
//! |----|-------|
//! | 1 | nearest observed value held constant |
//! | 2 | growth rate of the step next to the edge, compounded |
//! | 3 | mean growth rate of the interpolated span, applied linearly in the horizon |
//! | 4 | nearest growth rate between two *observed* adjacent years, compounded |
//! | 5 | mean of the last (up to) three growth rates, compounded |
//! | 6 | no interpolation: ordinary least-squares line through all observations |
//! | 7 | least-squares line through all observations, edges only |
//!
//! Outputs are floored at zero. A growth rate out of a zero level is
//! undefined; such edges fall back to the constant rule.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::EmploymentPanel;
use crate::error::{Error, Result};

/// Masking fractions of the default validation design.
pub const DEFAULT_FRACTIONS: [f64; 5] = [0.09, 0.14, 0.19, 0.24, 0.50];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Strategy {
    ConstantEdges = 1,
    ClosestGrowth = 2,
    AverageGrowth = 3,
    FilledGrowth = 4,
    RollingGrowth = 5,
    LinearFit = 6,
    LinearFitEdges = 7,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::ConstantEdges,
        Strategy::ClosestGrowth,
        Strategy::AverageGrowth,
        Strategy::FilledGrowth,
        Strategy::RollingGrowth,
        Strategy::LinearFit,
        Strategy::LinearFitEdges,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Strategy {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|s| s.id() == v)
            .ok_or_else(|| Error::invalid(format!("reconstruction strategy must be 1-7, got {v}")))
    }
}

impl From<Strategy> for u8 {
    fn from(s: Strategy) -> u8 {
        s.id()
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

/// One country–industry employment series.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    years: Vec<i32>,
    values: Vec<Option<f64>>,
}

impl Series {
    pub fn new(years: Vec<i32>, values: Vec<Option<f64>>) -> Result<Self> {
        if years.len() < 2 {
            return Err(Error::invalid("a series needs at least two years"));
        }
        if years.len() != values.len() {
            return Err(Error::invalid("years and values differ in length"));
        }
        if years.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("series years must be strictly increasing"));
        }
        if let Some(v) = values.iter().flatten().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("invalid series value {v}")));
        }
        Ok(Self { years, values })
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn n_missing(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Present values, or `None` if any is missing.
    pub fn complete(&self) -> Option<Vec<f64>> {
        self.values.iter().copied().collect()
    }
}

/// Least-squares line `a + b x` through the points; `b = 0` for a single point.
fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return (my, 0.0);
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

fn growth(prev: f64, next: f64) -> Option<f64> {
    (prev > 0.0).then(|| next / prev)
}

/// Extends an interpolated span past its last element by `horizon` steps.
/// `span` is ordered towards the edge being filled; `observed` flags which
/// span entries were observed rather than interpolated.
fn extend_edge(strategy: Strategy, span: &[f64], observed: &[bool], horizon: usize) -> Vec<f64> {
    let last = *span.last().expect("non-empty span");
    let n = span.len();
    let compound = |g: Option<f64>| -> Vec<f64> {
        match g {
            Some(g) => (1..=horizon).map(|h| last * g.powi(h as i32)).collect(),
            None => vec![last; horizon],
        }
    };
    match strategy {
        Strategy::ConstantEdges => vec![last; horizon],
        Strategy::ClosestGrowth => compound(if n >= 2 { growth(span[n - 2], last) } else { None }),
        Strategy::AverageGrowth => {
            let rates: Vec<f64> = span
                .windows(2)
                .filter_map(|w| growth(w[0], w[1]).map(|g| g - 1.0))
                .collect();
            if rates.is_empty() {
                return vec![last; horizon];
            }
            let r = rates.iter().sum::<f64>() / rates.len() as f64;
            (1..=horizon).map(|h| last * (1.0 + r * h as f64)).collect()
        }
        Strategy::FilledGrowth => {
            let g = (1..n)
                .rev()
                .find(|&t| observed[t] && observed[t - 1])
                .and_then(|t| growth(span[t - 1], span[t]));
            compound(g)
        }
        Strategy::RollingGrowth => {
            if n < 2 {
                return vec![last; horizon];
            }
            let window = &span[n.saturating_sub(4)..];
            let rates: Option<Vec<f64>> = window.windows(2).map(|w| growth(w[0], w[1])).collect();
            compound(rates.map(|r| r.iter().sum::<f64>() / r.len() as f64))
        }
        Strategy::LinearFit | Strategy::LinearFitEdges => {
            unreachable!("linear-fit edges are handled with absolute years")
        }
    }
}

/// Fills every gap of `s` with the given strategy.
///
/// A series without any observation is rejected as excluded; a single
/// observation is held constant across the whole series.
pub fn reconstruct_series(s: &Series, strategy: Strategy) -> Result<Series> {
    let present: Vec<usize> = (0..s.values.len()).filter(|&t| s.values[t].is_some()).collect();
    let (Some(&first), Some(&last)) = (present.first(), present.last()) else {
        return Err(Error::Excluded("series has no observed value".into()));
    };
    let obs = |t: usize| s.values[t].expect("present index");
    let n = s.values.len();

    if present.len() == 1 {
        return Ok(Series {
            years: s.years.clone(),
            values: vec![Some(obs(first)); n],
        });
    }

    let points: Vec<(f64, f64)> = present.iter().map(|&t| (s.years[t] as f64, obs(t))).collect();
    if strategy == Strategy::LinearFit {
        let (a, b) = linear_fit(&points);
        return Ok(Series {
            years: s.years.clone(),
            values: s.years.iter().map(|&y| Some((a + b * y as f64).max(0.0))).collect(),
        });
    }

    let mut out: Vec<f64> = vec![0.0; n];
    for w in present.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let (x0, x1) = (s.years[t0] as f64, s.years[t1] as f64);
        let (v0, v1) = (obs(t0), obs(t1));
        out[t0] = v0;
        for (t, slot) in out.iter_mut().enumerate().take(t1).skip(t0 + 1) {
            let x = s.years[t] as f64;
            *slot = v0 + (v1 - v0) * (x - x0) / (x1 - x0);
        }
    }
    out[last] = obs(last);

    let observed: Vec<bool> = s.values.iter().map(Option::is_some).collect();
    if strategy == Strategy::LinearFitEdges {
        let (a, b) = linear_fit(&points);
        for t in (0..first).chain(last + 1..n) {
            out[t] = a + b * s.years[t] as f64;
        }
    } else {
        if last + 1 < n {
            let ext = extend_edge(strategy, &out[first..=last], &observed[first..=last], n - last - 1);
            out[last + 1..].copy_from_slice(&ext);
        }
        if first > 0 {
            let span: Vec<f64> = out[first..=last].iter().rev().copied().collect();
            let mask: Vec<bool> = observed[first..=last].iter().rev().copied().collect();
            let ext = extend_edge(strategy, &span, &mask, first);
            for (h, v) in ext.into_iter().enumerate() {
                out[first - 1 - h] = v;
            }
        }
    }

    Ok(Series {
        years: s.years.clone(),
        values: out.into_iter().map(|v| Some(v.max(0.0))).collect(),
    })
}

/// Fills every series of a panel. Series without any observation are set to
/// zero and returned in the exclusion list.
pub fn reconstruct_panel(
    panel: &EmploymentPanel,
    strategy: Strategy,
) -> Result<(EmploymentPanel, Vec<(String, String)>)> {
    let mut filled = panel.clone();
    let mut excluded = Vec::new();
    let years = panel.years().to_vec();
    if years.len() < 2 {
        return Err(Error::invalid("reconstruction needs at least two years"));
    }
    for c in 0..panel.countries().len() {
        for i in 0..panel.industries().len() {
            let raw = panel.series(c, i);
            if raw.iter().all(Option::is_some) {
                continue;
            }
            let series = Series::new(years.clone(), raw.to_vec())?;
            match reconstruct_series(&series, strategy) {
                Ok(s) => filled.set_series(c, i, s.values())?,
                Err(Error::Excluded(_)) => {
                    filled.set_series(c, i, &vec![Some(0.0); years.len()])?;
                    excluded.push((panel.countries()[c].clone(), panel.industries()[i].clone()));
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok((filled, excluded))
}

/// Fully observed series used as ground truth for validation.
#[derive(Debug, Clone, PartialEq)]
pub struct CompleteSeries {
    years: Vec<i32>,
    keys: Vec<(String, String)>,
    values: Vec<Vec<f64>>,
}

impl CompleteSeries {
    pub fn new(years: Vec<i32>, keys: Vec<(String, String)>, values: Vec<Vec<f64>>) -> Result<Self> {
        if keys.len() != values.len() {
            return Err(Error::invalid("keys and series differ in length"));
        }
        for v in &values {
            Series::new(years.clone(), v.iter().copied().map(Some).collect())?;
        }
        Ok(Self { years, keys, values })
    }

    /// The fully observed country–industry series of a panel.
    pub fn from_panel(panel: &EmploymentPanel) -> Self {
        let mut keys = Vec::new();
        let mut values = Vec::new();
        for (c, country) in panel.countries().iter().enumerate() {
            for (i, industry) in panel.industries().iter().enumerate() {
                if let Some(v) = panel.series(c, i).iter().copied().collect::<Option<Vec<f64>>>() {
                    keys.push((country.clone(), industry.clone()));
                    values.push(v);
                }
            }
        }
        Self {
            years: panel.years().to_vec(),
            keys,
            values,
        }
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn keys(&self) -> &[(String, String)] {
        &self.keys
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn n_cells(&self) -> usize {
        self.values.len() * self.years.len()
    }
}

/// Masked cells as `(series index, year index)`.
pub type MaskSet = BTreeSet<(usize, usize)>;

/// Hides `round(na_fraction × cells)` cells uniformly at random, never
/// emptying a series. Deterministic for a given seed.
pub fn mask_random(data: &CompleteSeries, na_fraction: f64, seed: u64) -> Result<(Vec<Series>, MaskSet)> {
    if !(0.0..=1.0).contains(&na_fraction) {
        return Err(Error::invalid(format!("na_fraction must lie in [0, 1], got {na_fraction}")));
    }
    let t = data.years.len();
    let total = data.n_cells();
    let target = (na_fraction * total as f64).round() as usize;
    let capacity = data.values.len() * t.saturating_sub(1);
    if target > capacity {
        return Err(Error::invalid(format!(
            "cannot mask {target} of {total} cells without emptying a series (at most {capacity})"
        )));
    }

    let mut order: Vec<usize> = (0..total).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut per_series = vec![0usize; data.values.len()];
    let mut mask = MaskSet::new();
    for cell in order {
        if mask.len() == target {
            break;
        }
        let (s, y) = (cell / t, cell % t);
        // a draw that would empty its series is rejected and redrawn
        if per_series[s] + 1 >= t {
            continue;
        }
        per_series[s] += 1;
        mask.insert((s, y));
    }

    let masked = data
        .values
        .iter()
        .enumerate()
        .map(|(s, v)| {
            let vals = v
                .iter()
                .enumerate()
                .map(|(y, &x)| (!mask.contains(&(s, y))).then_some(x))
                .collect();
            Series::new(data.years.clone(), vals)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((masked, mask))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeRow {
    pub strategy: Strategy,
    pub fraction: f64,
    pub seed: u64,
    pub mae: f64,
    pub n_masked: usize,
    /// Series whose reconstruction failed and were left out of the MAE.
    pub n_excluded: usize,
}

/// Mean absolute reconstruction error per strategy, fraction and seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MaeReport {
    pub rows: Vec<MaeRow>,
}

impl MaeReport {
    pub fn get(&self, strategy: Strategy, fraction: f64, seed: u64) -> Option<&MaeRow> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.fraction == fraction && r.seed == seed)
    }

    /// Mean MAE over seeds, per strategy and fraction.
    pub fn mean_mae(&self, strategy: Strategy, fraction: f64) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.strategy == strategy && r.fraction == fraction)
            .map(|r| r.mae)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// `strategy,fraction,seed,mae,n_masked`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,fraction,seed,mae,n_masked\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.strategy, r.fraction, r.seed, r.mae, r.n_masked
            ));
        }
        out
    }
}

fn mae_for(data: &CompleteSeries, masked: &[Series], mask: &MaskSet, strategy: Strategy) -> (f64, usize) {
    let mut excluded = 0;
    let mut filled: Vec<Option<Vec<f64>>> = Vec::with_capacity(masked.len());
    for s in masked {
        if s.n_missing() == 0 {
            filled.push(None);
            continue;
        }
        match reconstruct_series(s, strategy) {
            Ok(r) => filled.push(r.complete()),
            Err(_) => {
                excluded += 1;
                filled.push(None);
            }
        }
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for &(s, y) in mask {
        if let Some(f) = &filled[s] {
            sum += (f[y] - data.values[s][y]).abs();
            count += 1;
        }
    }
    let mae = if count == 0 { 0.0 } else { sum / count as f64 };
    (mae, excluded)
}

/// Masks the complete series at every fraction and seed and scores all seven
/// strategies on the hidden cells.
pub fn evaluate_strategies(data: &CompleteSeries, fractions: &[f64], seeds: &[u64]) -> Result<MaeReport> {
    if fractions.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("at least one fraction and one seed are required"));
    }
    let jobs: Vec<(f64, u64)> = fractions
        .iter()
        .flat_map(|&f| seeds.iter().map(move |&s| (f, s)))
        .collect();
    let blocks = jobs
        .par_iter()
        .map(|&(fraction, seed)| {
            let (masked, mask) = mask_random(data, fraction, seed)?;
            Ok(Strategy::ALL
                .iter()
                .map(|&strategy| {
                    let (mae, n_excluded) = mae_for(data, &masked, &mask, strategy);
                    MaeRow {
                        strategy,
                        fraction,
                        seed,
                        mae,
                        n_masked: mask.len(),
                        n_excluded,
                    }
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<MaeRow> = blocks.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        a.strategy
            .cmp(&b.strategy)
            .then(a.fraction.total_cmp(&b.fraction))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(MaeReport { rows })
}

//! Two-way fixed-effects OLS with clustered covariance.
//!
//! Country and year intercepts are absorbed by alternating projections
//! until the largest change falls below [`FitOptions::demean_tol`]; slopes
//! come from OLS on the demeaned data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::outcomes::PanelRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterScheme {
    Country,
    Year,
    /// `V_country + V_year − V_country×year`.
    Twoway,
    /// One cluster per country×year cell.
    Intersection,
}

impl ClusterScheme {
    pub fn label(self) -> &'static str {
        match self {
            ClusterScheme::Country => "clustered by country",
            ClusterScheme::Year => "clustered by year",
            ClusterScheme::Twoway => "two-way clustered by country and year",
            ClusterScheme::Intersection => "clustered by country-year cell",
        }
    }
}

impl fmt::Display for ClusterScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClusterScheme::Country => "country",
            ClusterScheme::Year => "year",
            ClusterScheme::Twoway => "twoway",
            ClusterScheme::Intersection => "intersection",
        })
    }
}

impl FromStr for ClusterScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "country" => Ok(ClusterScheme::Country),
            "year" => Ok(ClusterScheme::Year),
            "twoway" => Ok(ClusterScheme::Twoway),
            "intersection" | "country-year" | "country_year" => Ok(ClusterScheme::Intersection),
            other => Err(Error::invalid(format!("unknown cluster scheme `{other}`"))),
        }
    }
}

/// Reference distribution for significance stars.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Inference {
    #[default]
    Normal,
    /// Student t with `min(G) − 1` degrees of freedom.
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub demean_tol: f64,
    pub max_sweeps: usize,
    pub inference: Inference,
    /// Multiplies the decomposition regressors before fitting.
    pub scale: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            demean_tol: 1e-10,
            max_sweeps: 10_000,
            inference: Inference::Normal,
            scale: 1.0,
        }
    }
}

/// Variables that `FitOptions::scale` applies to.
pub const DECOMPOSITION_TERMS: [&str; 6] = ["between", "within", "dlwf", "between_s", "within_s", "dlws"];

pub const CONTROLS: [&str; 4] = ["log_pop", "log_gdppc", "rd_gdp", "exports_gdp"];

pub const OUTCOMES: [&str; 6] = ["g", "g_pct", "r91", "r51", "r95", "labshare"];

/// Display label of a panel variable.
pub fn term_label(name: &str) -> &str {
    match name {
        "between" => "Between",
        "within" => "Within",
        "dlwf" => "Delta LWF",
        "between_s" => "Between (Entropy)",
        "within_s" => "Within (Entropy)",
        "dlws" => "Delta LWS",
        "log_pop" => "log(Population)",
        "log_gdppc" => "log(GDP per capita)",
        "rd_gdp" => "R&D (% GDP)",
        "exports_gdp" => "Exports (% GDP)",
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub outcome: String,
    /// Model column, `1`–`4` for the standard table.
    pub model: String,
    pub regressors: Vec<String>,
    pub controls: Vec<String>,
    pub cluster: ClusterScheme,
}

impl RegressionSpec {
    pub fn new(outcome: &str, model: &str, regressors: &[&str], controls: &[&str], cluster: ClusterScheme) -> Result<Self> {
        let spec = Self {
            outcome: outcome.to_string(),
            model: model.to_string(),
            regressors: regressors.iter().map(|s| s.to_string()).collect(),
            controls: controls.iter().map(|s| s.to_string()).collect(),
            cluster,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.regressors.is_empty() {
            return Err(Error::invalid("a regression needs at least one regressor"));
        }
        let has = |n: &str| self.regressors.iter().chain(&self.controls).any(|r| r == n);
        for (total, parts) in [("dlwf", ["between", "within"]), ("dlws", ["between_s", "within_s"])] {
            if has(total) && parts.iter().any(|p| has(p)) {
                return Err(Error::invalid(format!(
                    "{total} is the sum of {} and {}; it cannot enter together with either",
                    parts[0], parts[1]
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for v in std::iter::once(&self.outcome).chain(&self.regressors).chain(&self.controls) {
            if !seen.insert(v) {
                return Err(Error::invalid(format!("variable `{v}` appears twice in the specification")));
            }
        }
        Ok(())
    }

    pub fn terms(&self) -> Vec<String> {
        self.regressors.iter().chain(&self.controls).cloned().collect()
    }
}

/// The four standard columns: between | within | ΔLWF | between + within,
/// each with the four controls. `entropy` swaps in the entropy terms.
pub fn model_specs(outcome: &str, entropy: bool, cluster: ClusterScheme) -> Result<Vec<RegressionSpec>> {
    let (b, w, d) = if entropy {
        ("between_s", "within_s", "dlws")
    } else {
        ("between", "within", "dlwf")
    };
    let columns: [&[&str]; 4] = [&[b], &[w], &[d], &[b, w]];
    columns
        .iter()
        .enumerate()
        .map(|(k, regs)| RegressionSpec::new(outcome, &(k + 1).to_string(), regs, &CONTROLS, cluster))
        .collect()
}

/// Outcome, slopes and group memberships of a complete-case sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub countries: Vec<String>,
    pub years: Vec<i32>,
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
}

impl Design {
    pub fn new(names: Vec<String>, countries: Vec<String>, years: Vec<i32>, y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if countries.len() != n || years.len() != n || x.nrows() != n || x.ncols() != names.len() {
            return Err(Error::invalid("design dimensions disagree"));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("design contains non-finite values"));
        }
        Ok(Self { names, countries, years, y, x })
    }

    /// Casewise-complete rows for the model's variables.
    pub fn from_rows(rows: &[PanelRow], spec: &RegressionSpec, scale: f64) -> Result<Self> {
        spec.validate()?;
        let terms = spec.terms();
        let mut y = Vec::new();
        let mut x = Vec::new();
        let mut countries = Vec::new();
        let mut years = Vec::new();
        let mut seen = BTreeSet::new();
        'rows: for r in rows {
            let Some(yv) = r.get(&spec.outcome)? else { continue };
            let mut xs = Vec::with_capacity(terms.len());
            for t in &terms {
                let Some(v) = r.get(t)? else { continue 'rows };
                xs.push(if DECOMPOSITION_TERMS.contains(&t.as_str()) { v * scale } else { v });
            }
            if !seen.insert((r.country.clone(), r.year)) {
                return Err(Error::DuplicateKey(format!("panel row ({}, {})", r.country, r.year)));
            }
            y.push(yv);
            x.extend(xs);
            countries.push(r.country.clone());
            years.push(r.year);
        }
        let n = y.len();
        Self::new(
            terms,
            countries,
            years,
            DVector::from_vec(y),
            DMatrix::from_row_slice(n, x.len().checked_div(n).unwrap_or(0), &x),
        )
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn groups(&self) -> (Vec<usize>, usize, Vec<usize>, usize) {
        let cmap: BTreeMap<&str, usize> = self
            .countries
            .iter()
            .map(|c| c.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(k, c)| (c, k))
            .collect();
        let ymap: BTreeMap<i32, usize> = self
            .years
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(k, y)| (y, k))
            .collect();
        (
            self.countries.iter().map(|c| cmap[c.as_str()]).collect(),
            cmap.len(),
            self.years.iter().map(|y| ymap[y]).collect(),
            ymap.len(),
        )
    }
}

/// Subtracts group means by alternating over the two groupings. Returns the
/// number of sweeps used.
pub fn demean_twoway(
    v: &mut DVector<f64>,
    g1: &[usize],
    n1: usize,
    g2: &[usize],
    n2: usize,
    tol: f64,
    max_sweeps: usize,
) -> Result<usize> {
    let mut c1 = vec![0usize; n1];
    let mut c2 = vec![0usize; n2];
    for (&a, &b) in g1.iter().zip(g2) {
        c1[a] += 1;
        c2[b] += 1;
    }
    let scale = v.amax().max(1.0);
    let sweep_one = |v: &mut DVector<f64>, g: &[usize], counts: &[usize]| -> f64 {
        let mut sums = vec![0.0; counts.len()];
        for (k, &gi) in g.iter().enumerate() {
            sums[gi] += v[k];
        }
        let means: Vec<f64> = sums.iter().zip(counts).map(|(s, &c)| s / c as f64).collect();
        for (k, &gi) in g.iter().enumerate() {
            v[k] -= means[gi];
        }
        means.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    };
    for sweep in 1..=max_sweeps {
        let d1 = sweep_one(v, g1, &c1);
        let d2 = sweep_one(v, g2, &c2);
        if d1.max(d2) <= tol * scale {
            return Ok(sweep);
        }
    }
    Err(Error::NoConvergence {
        iterations: max_sweeps,
        residual: f64::NAN,
    })
}

/// Names the columns that are linear combinations of earlier ones, together
/// with the earlier columns involved.
fn collinear_columns(x: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let k = x.ncols();
    let mut basis: Vec<(usize, DVector<f64>)> = Vec::new();
    let mut bad = BTreeSet::new();
    for j in 0..k {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut r = col.clone();
        let mut involved = Vec::new();
        for (i, q) in &basis {
            let c = q.dot(&r);
            if c.abs() > 1e-12 * norm.max(f64::MIN_POSITIVE) {
                involved.push(*i);
            }
            r -= q * c;
        }
        if r.norm() <= 1e-9 * norm.max(1.0) {
            bad.insert(j);
            bad.extend(involved);
        } else {
            let rn = r.norm();
            basis.push((j, r / rn));
        }
    }
    bad.into_iter().map(|j| names[j].clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub term: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub coefficients: Vec<Coefficient>,
    pub covariance: Vec<Vec<f64>>,
    pub cluster: ClusterScheme,
    pub r2: f64,
    pub within_r2: f64,
    pub n: usize,
    /// `N − K − (G_country − 1) − (G_year − 1) − 1`.
    pub df_resid: i64,
    pub n_countries: usize,
    pub n_years: usize,
    pub sweeps: usize,
    /// Negative eigenvalues clipped to restore positive semi-definiteness.
    pub negative_eigenvalues: usize,
    pub psd_repaired: bool,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl RegressionResult {
    pub fn coefficient(&self, term: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.term == term)
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.estimate).collect()
    }
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

/// OLS pieces on demeaned data.
struct Fit {
    beta: DVector<f64>,
    xtx_inv: DMatrix<f64>,
    xd: DMatrix<f64>,
    resid: DVector<f64>,
}

fn ols(xd: DMatrix<f64>, yd: &DVector<f64>, names: &[String]) -> Result<Fit> {
    let bad = collinear_columns(&xd, names);
    if !bad.is_empty() {
        return Err(Error::RankDeficient(bad));
    }
    let xtx = xd.transpose() * &xd;
    let chol = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::RankDeficient(names.to_vec()))?;
    let beta = chol.solve(&(xd.transpose() * yd));
    let xtx_inv = chol.inverse();
    let resid = yd - &xd * &beta;
    Ok(Fit { beta, xtx_inv, xd, resid })
}

/// `(X'X)⁻¹ (Σ_g s_g s_g') (X'X)⁻¹ · G/(G−1)·(N−1)/(N−K)`.
fn cluster_component(fit: &Fit, groups: &[usize]) -> Result<(DMatrix<f64>, usize)> {
    let n = fit.resid.len();
    let k = fit.beta.len();
    let g_count = groups.iter().copied().max().map_or(0, |m| m + 1);
    let mut scores = DMatrix::<f64>::zeros(g_count, k);
    for obs in 0..n {
        let e = fit.resid[obs];
        for j in 0..k {
            scores[(groups[obs], j)] += fit.xd[(obs, j)] * e;
        }
    }
    let used = (0..g_count).filter(|&g| groups.contains(&g)).count();
    if used < 2 {
        return Err(Error::invalid(format!("clustered covariance needs at least 2 clusters, got {used}")));
    }
    if n <= k {
        return Err(Error::invalid("clustered covariance needs N > K"));
    }
    let meat = scores.transpose() * &scores;
    let g = used as f64;
    let c = g / (g - 1.0) * (n as f64 - 1.0) / (n as f64 - k as f64);
    Ok((&fit.xtx_inv * meat * &fit.xtx_inv * c, used))
}

fn intersection_groups(cg: &[usize], tg: &[usize], nt: usize) -> Vec<usize> {
    let ids: BTreeSet<usize> = cg.iter().zip(tg).map(|(c, t)| c * nt + t).collect();
    let map: BTreeMap<usize, usize> = ids.into_iter().enumerate().map(|(k, id)| (id, k)).collect();
    cg.iter().zip(tg).map(|(c, t)| map[&(c * nt + t)]).collect()
}

/// Clips negative eigenvalues; returns the repaired matrix and how many were
/// clipped.
fn repair_psd(v: DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let sym = (&v + v.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let neg = eig.eigenvalues.iter().filter(|&&l| l < 0.0).count();
    if neg == 0 {
        return (sym, 0);
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    ((&rebuilt + rebuilt.transpose()) * 0.5, neg)
}

/// Heteroskedasticity-robust covariance with the `N/(N−K)` correction.
pub fn hc1_covariance(design: &Design, opts: &FitOptions) -> Result<DMatrix<f64>> {
    let fit = demeaned_fit(design, opts)?.0;
    let (n, k) = (fit.xd.nrows(), fit.xd.ncols());
    if n <= k {
        return Err(Error::invalid("robust covariance needs N > K"));
    }
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for obs in 0..n {
        let row = fit.xd.row(obs).transpose();
        meat += &row * row.transpose() * fit.resid[obs].powi(2);
    }
    Ok(&fit.xtx_inv * meat * &fit.xtx_inv * (n as f64 / (n - k) as f64))
}

fn demeaned_fit(design: &Design, opts: &FitOptions) -> Result<(Fit, usize, DVector<f64>)> {
    let (cg, nc, tg, nt) = design.groups();
    let mut yd = design.y.clone();
    let mut sweeps = demean_twoway(&mut yd, &cg, nc, &tg, nt, opts.demean_tol, opts.max_sweeps)?;
    let mut xd = design.x.clone();
    for j in 0..xd.ncols() {
        let mut col = xd.column(j).into_owned();
        sweeps = sweeps.max(demean_twoway(&mut col, &cg, nc, &tg, nt, opts.demean_tol, opts.max_sweeps)?);
        xd.set_column(j, &col);
    }
    Ok((ols(xd, &yd, &design.names)?, sweeps, yd))
}

/// Covariance of `fit` under a clustering scheme, plus the smallest
/// cluster count used.
fn covariance(fit: &Fit, design: &Design, scheme: ClusterScheme) -> Result<(DMatrix<f64>, usize)> {
    let (cg, _, tg, nt) = design.groups();
    Ok(match scheme {
        ClusterScheme::Country => cluster_component(fit, &cg)?,
        ClusterScheme::Year => cluster_component(fit, &tg)?,
        ClusterScheme::Intersection => cluster_component(fit, &intersection_groups(&cg, &tg, nt))?,
        ClusterScheme::Twoway => {
            let (vc, gc) = cluster_component(fit, &cg)?;
            let (vt, gt) = cluster_component(fit, &tg)?;
            let (vct, _) = cluster_component(fit, &intersection_groups(&cg, &tg, nt))?;
            (vc + vt - vct, gc.min(gt))
        }
    })
}

/// Fits a prepared design.
pub fn fit_design(design: &Design, cluster: ClusterScheme, opts: &FitOptions) -> Result<RegressionResult> {
    let n = design.n();
    let k = design.x.ncols();
    if k == 0 {
        return Err(Error::invalid("a regression needs at least one regressor"));
    }
    let (_, nc, _, nt) = design.groups();
    let df = n as i64 - k as i64 - nc as i64 - nt as i64 + 1;
    if df <= 0 {
        return Err(Error::invalid(format!(
            "{n} observations cannot identify {k} slopes plus {nc} country and {nt} year effects"
        )));
    }
    let mut warnings = Vec::new();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &design.countries {
        *counts.entry(c).or_default() += 1;
    }
    for (c, _) in counts.iter().filter(|(_, &n)| n == 1) {
        let msg = format!("country {c} has a single observation");
        log::debug!("{msg}");
        warnings.push(msg);
    }

    let (fit, sweeps, yd) = demeaned_fit(design, opts)?;
    let (raw_cov, min_g) = covariance(&fit, design, cluster)?;
    let (cov, negative) = repair_psd(raw_cov);
    if negative > 0 {
        let msg = format!("covariance had {negative} negative eigenvalue(s); clipped to zero");
        log::debug!("{msg}");
        warnings.push(msg);
    }

    let ssr = fit.resid.norm_squared();
    let ymean = design.y.mean();
    let sst = design.y.iter().map(|v| (v - ymean).powi(2)).sum::<f64>();
    let sst_within = yd.norm_squared();
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { f64::NAN };
    let within_r2 = if sst_within > 0.0 { 1.0 - ssr / sst_within } else { f64::NAN };

    let cdf = |z: f64| -> f64 {
        match opts.inference {
            Inference::Normal => Normal::standard().cdf(z),
            Inference::T => StudentsT::new(0.0, 1.0, (min_g.max(2) - 1) as f64)
                .expect("positive degrees of freedom")
                .cdf(z),
        }
    };
    let coefficients = (0..k)
        .map(|j| {
            let se = cov[(j, j)].max(0.0).sqrt();
            let z = fit.beta[j] / se;
            let p = if se > 0.0 { 2.0 * (1.0 - cdf(z.abs())) } else { f64::NAN };
            Coefficient {
                term: design.names[j].clone(),
                estimate: fit.beta[j],
                se,
                z,
                p_value: p,
                stars: stars(p).to_string(),
            }
        })
        .collect();
    Ok(RegressionResult {
        coefficients,
        covariance: (0..k).map(|i| (0..k).map(|j| cov[(i, j)]).collect()).collect(),
        cluster,
        r2,
        within_r2,
        n,
        df_resid: df,
        n_countries: nc,
        n_years: nt,
        sweeps,
        negative_eigenvalues: negative,
        psd_repaired: negative > 0,
        warnings,
        residuals: fit.resid.iter().copied().collect(),
    })
}

/// Two-way fixed-effects OLS of the model on its complete cases.
pub fn fit_twoway_fe(rows: &[PanelRow], spec: &RegressionSpec, opts: &FitOptions) -> Result<RegressionResult> {
    let design = Design::from_rows(rows, spec, opts.scale)?;
    if design.n() == 0 {
        return Err(Error::invalid(format!("no complete rows for outcome `{}`", spec.outcome)));
    }
    fit_design(&design, spec.cluster, opts)
}

/// Refit without one country; errors if the country is not in the panel.
pub fn fit_excluding(rows: &[PanelRow], spec: &RegressionSpec, country: &str, opts: &FitOptions) -> Result<RegressionResult> {
    if !rows.iter().any(|r| r.country == country) {
        return Err(Error::UnknownLabels(vec![country.to_string()]));
    }
    let kept: Vec<PanelRow> = rows.iter().filter(|r| r.country != country).cloned().collect();
    fit_twoway_fe(&kept, spec, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooResult {
    pub excluded: String,
    pub term: String,
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub stars: String,
    pub significant: Option<bool>,
    pub n: Option<usize>,
    pub error: Option<String>,
}

/// One refit per country, in country order. A failing refit is recorded and
/// the sweep continues.
pub fn leave_one_out(rows: &[PanelRow], spec: &RegressionSpec, term: &str, opts: &FitOptions) -> Result<Vec<LooResult>> {
    if !spec.terms().iter().any(|t| t == term) {
        return Err(Error::invalid(format!("term `{term}` is not in the specification")));
    }
    let countries: Vec<&str> = rows
        .iter()
        .map(|r| r.country.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if countries.len() < 3 {
        return Err(Error::invalid(format!(
            "leave-one-out needs at least 3 countries, got {}",
            countries.len()
        )));
    }
    Ok(countries
        .par_iter()
        .map(|&c| match fit_excluding(rows, spec, c, opts) {
            Ok(res) => {
                let coef = res.coefficient(term).expect("term in spec");
                LooResult {
                    excluded: c.to_string(),
                    term: term.to_string(),
                    estimate: Some(coef.estimate),
                    se: Some(coef.se),
                    stars: coef.stars.clone(),
                    significant: Some(coef.p_value < 0.1),
                    n: Some(res.n),
                    error: None,
                }
            }
            Err(e) => {
                log::warn!("leave-one-out without {c} failed: {e}");
                LooResult {
                    excluded: c.to_string(),
                    term: term.to_string(),
                    estimate: None,
                    se: None,
                    stars: String::new(),
                    significant: None,
                    n: None,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect())
}

/// One coefficient cell of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub outcome: String,
    pub model: String,
    pub term: String,
    pub label: String,
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub stars: String,
    pub n: Option<usize>,
    pub r2: Option<f64>,
    pub within_r2: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<TableRow>,
    /// Failed cells as `(outcome, model, message)`.
    pub failures: Vec<(String, String, String)>,
    /// Warnings of the successful fits, prefixed with outcome, model and
    /// regressors.
    pub warnings: Vec<String>,
}

/// Fits every spec and lays out one row per coefficient, in spec order.
pub fn run_table(rows: &[PanelRow], specs: &[RegressionSpec], opts: &FitOptions) -> Result<ResultsTable> {
    if specs.is_empty() {
        return Err(Error::invalid("empty specification set"));
    }
    let fits: Vec<Result<RegressionResult>> = specs.par_iter().map(|s| fit_twoway_fe(rows, s, opts)).collect();
    let mut table = ResultsTable::default();
    for (spec, fit) in specs.iter().zip(fits) {
        match fit {
            Ok(res) => {
                for w in &res.warnings {
                    table.warnings.push(format!(
                        "{} model {} ({}): {w}",
                        spec.outcome,
                        spec.model,
                        spec.regressors.join(" + ")
                    ));
                }
                for c in &res.coefficients {
                    table.rows.push(TableRow {
                        outcome: spec.outcome.clone(),
                        model: spec.model.clone(),
                        term: c.term.clone(),
                        label: term_label(&c.term).to_string(),
                        estimate: Some(c.estimate),
                        se: Some(c.se),
                        stars: c.stars.clone(),
                        n: Some(res.n),
                        r2: Some(res.r2),
                        within_r2: Some(res.within_r2),
                    });
                }
            }
            Err(e) => {
                log::warn!("{} model {} failed: {e}", spec.outcome, spec.model);
                table.failures.push((spec.outcome.clone(), spec.model.clone(), e.to_string()));
                for t in spec.terms() {
                    table.rows.push(TableRow {
                        outcome: spec.outcome.clone(),
                        model: spec.model.clone(),
                        label: term_label(&t).to_string(),
                        term: t,
                        estimate: None,
                        se: None,
                        stars: String::new(),
                        n: None,
                        r2: None,
                        within_r2: None,
                    });
                }
            }
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn balanced(nc: usize, nt: usize, f: impl Fn(usize, usize) -> (f64, f64)) -> Design {
        let mut y = Vec::new();
        let mut x = Vec::new();
        let mut cs = Vec::new();
        let mut ts = Vec::new();
        for c in 0..nc {
            for t in 0..nt {
                let (yy, xx) = f(c, t);
                y.push(yy);
                x.push(xx);
                cs.push(format!("C{c:02}"));
                ts.push(2000 + t as i32);
            }
        }
        let n = y.len();
        Design::new(vec!["x".into()], cs, ts, DVector::from_vec(y), DMatrix::from_vec(n, 1, x)).unwrap()
    }

    #[test]
    fn exact_recovery() {
        let d = balanced(6, 5, |c, t| {
            let x = ((c * 7 + t * 3) % 11) as f64 + 0.1 * (c * t) as f64;
            (2.0 * x + c as f64 * 1.5 - t as f64 * 0.7, x)
        });
        let r = fit_design(&d, ClusterScheme::Twoway, &FitOptions::default()).unwrap();
        assert!((r.coefficients[0].estimate - 2.0).abs() < 1e-10);
        assert!((r.within_r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fe_absorbed_regressor_is_rank_deficient() {
        let d = balanced(4, 4, |c, t| (c as f64 + t as f64, c as f64 * 2.0 - t as f64));
        match fit_design(&d, ClusterScheme::Country, &FitOptions::default()) {
            Err(Error::RankDeficient(cols)) => assert_eq!(cols, vec!["x".to_string()]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn collinear_columns_are_named() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
        let mut m = DMatrix::<f64>::zeros(10, 3);
        for i in 0..10 {
            m[(i, 0)] = x[i];
            m[(i, 1)] = x[10 + i];
            m[(i, 2)] = x[i] + 2.0 * x[10 + i];
        }
        let names: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        assert_eq!(collinear_columns(&m, &names), names);
    }

    #[test]
    fn singleton_clusters_match_hc1() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = balanced(8, 6, |_, _| (0.0, 0.0));
        let x = DMatrix::from_fn(48, 2, |_, _| rng.random::<f64>());
        let y = DVector::from_fn(48, |i, _| x[(i, 0)] - x[(i, 1)] + rng.random::<f64>());
        let d = Design::new(vec!["a".into(), "b".into()], d.countries, d.years, y, x).unwrap();
        let opts = FitOptions::default();
        let r = fit_design(&d, ClusterScheme::Intersection, &opts).unwrap();
        let hc1 = hc1_covariance(&d, &opts).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((r.covariance[i][j] - hc1[(i, j)]).abs() < 1e-14 * hc1[(i, i)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn single_cluster_is_an_error() {
        let d = balanced(1, 6, |_, t| (t as f64, (t * t) as f64));
        assert!(fit_design(&d, ClusterScheme::Country, &FitOptions::default()).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(RegressionSpec::new("g", "x", &[], &[], ClusterScheme::Twoway).is_err());
        assert!(RegressionSpec::new("g", "x", &["between", "dlwf"], &[], ClusterScheme::Twoway).is_err());
        assert!(RegressionSpec::new("g", "x", &["within"], &["dlwf"], ClusterScheme::Twoway).is_err());
        assert!(RegressionSpec::new("g", "x", &["between", "within"], &[], ClusterScheme::Twoway).is_ok());
        let specs = model_specs("g", false, ClusterScheme::Twoway).unwrap();
        let regs: Vec<Vec<String>> = specs.iter().map(|s| s.regressors.clone()).collect();
        assert_eq!(
            regs,
            vec![vec!["between"], vec!["within"], vec!["dlwf"], vec!["between", "within"]]
        );
        let ent = model_specs("r91", true, ClusterScheme::Twoway).unwrap();
        let labels: BTreeSet<&str> = ent.iter().flat_map(|s| s.regressors.iter()).map(|t| term_label(t)).collect();
        assert!(labels.contains("Between (Entropy)") && labels.contains("Within (Entropy)"));
        assert!(run_table(&[], &[], &FitOptions::default()).is_err());
        assert_eq!("twoway".parse::<ClusterScheme>().unwrap(), ClusterScheme::Twoway);
    }

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(0.005), "***");
        assert_eq!(stars(0.03), "**");
        assert_eq!(stars(0.07), "*");
        assert_eq!(stars(0.2), "");
    }
}

//! Outcome variables and the country-year regression panel.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data_model::{write_file, CountryYear, MacroPanel, WagePanel};
use crate::error::{Error, Result};
use crate::structural::{DecompositionRecord, Measure};

/// Labour shares outside this band are kept but reported.
pub const LABSHARE_BAND: (f64, f64) = (0.0, 2.0);

/// A computed series with the warnings raised while building it.
#[derive(Debug, Clone, PartialEq)]
pub struct Derived<T> {
    pub values: BTreeMap<CountryYear, T>,
    pub warnings: Vec<String>,
}

impl<T> Default for Derived<T> {
    fn default() -> Self {
        Self {
            values: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }
}

/// `g_{c,t} = emprate_{c,t} / emprate_{c,t-1}`. The first year of a country
/// and any year without a usable predecessor is absent.
pub fn employment_growth(macro_panel: &MacroPanel) -> Derived<f64> {
    let mut out = Derived::default();
    for ((country, year), rec) in &macro_panel.records {
        let Some(now) = rec.emprate else { continue };
        let Some(prev) = macro_panel.get(country, year - 1).and_then(|r| r.emprate) else {
            continue;
        };
        if prev == 0.0 {
            let msg = format!("employment growth for ({country}, {year}): zero employment rate in {}", year - 1);
            log::warn!("{msg}");
            out.warnings.push(msg);
            continue;
        }
        out.values.insert((country.clone(), *year), now / prev);
    }
    out
}

/// Decile ratios of one country-year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WageRatios {
    pub r91: f64,
    pub r51: f64,
    pub r95: f64,
}

impl WageRatios {
    /// `r51 = d5/d1`, `r95 = d9/d5`, `r91 = r51·r95` so that the identity is
    /// exact in floating point.
    pub fn from_deciles(d1: f64, d5: f64, d9: f64) -> Result<Self> {
        if !(d1 > 0.0 && d1 <= d5 && d5 <= d9 && d9.is_finite()) {
            return Err(Error::invalid(format!(
                "deciles must satisfy 0 < d1 <= d5 <= d9, got ({d1}, {d5}, {d9})"
            )));
        }
        let r51 = d5 / d1;
        let r95 = d9 / d5;
        Ok(Self { r91: r51 * r95, r51, r95 })
    }
}

/// Ratios for every complete country-year; incomplete ones are absent.
pub fn wage_ratios(wages: &WagePanel) -> Derived<WageRatios> {
    let mut out = Derived::default();
    for (key, rec) in &wages.records {
        let (Some(d1), Some(d5), Some(d9)) = (rec.d1, rec.d5, rec.d9) else {
            continue;
        };
        match WageRatios::from_deciles(d1, d5, d9) {
            Ok(r) => {
                out.values.insert(key.clone(), r);
            }
            Err(e) => {
                let msg = format!("wage ratios for ({}, {}): {e}", key.0, key.1);
                log::warn!("{msg}");
                out.warnings.push(msg);
            }
        }
    }
    out
}

/// `compensation / GVA`. Non-positive GVA gives a missing value; values
/// outside [`LABSHARE_BAND`] are kept with a warning.
pub fn labour_share(macro_panel: &MacroPanel) -> Derived<f64> {
    let mut out = Derived::default();
    for ((country, year), rec) in &macro_panel.records {
        let (Some(comp), Some(gva)) = (rec.compensation, rec.gva) else {
            continue;
        };
        if gva <= 0.0 {
            let msg = format!("labour share for ({country}, {year}): GVA {gva} <= 0, left missing");
            log::warn!("{msg}");
            out.warnings.push(msg);
            continue;
        }
        let s = comp / gva;
        if !(s > LABSHARE_BAND.0 && s < LABSHARE_BAND.1) {
            let msg = format!("labour share for ({country}, {year}) is {s}, outside (0, 2)");
            log::warn!("{msg}");
            out.warnings.push(msg);
        }
        out.values.insert((country.clone(), *year), s);
    }
    out
}

/// One country-year of the regression panel. Missing values are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub country: String,
    pub year: i32,
    /// Employment-rate ratio.
    pub g: Option<f64>,
    /// `(g - 1)·100`.
    pub g_pct: Option<f64>,
    pub r91: Option<f64>,
    pub r51: Option<f64>,
    pub r95: Option<f64>,
    pub labshare: Option<f64>,
    pub between: Option<f64>,
    pub within: Option<f64>,
    pub dlwf: Option<f64>,
    pub between_s: Option<f64>,
    pub within_s: Option<f64>,
    pub dlws: Option<f64>,
    pub log_pop: Option<f64>,
    pub log_gdppc: Option<f64>,
    pub rd_gdp: Option<f64>,
    pub exports_gdp: Option<f64>,
}

/// Column names of the panel CSV after `country,year`.
pub const PANEL_VARIABLES: [&str; 16] = [
    "g",
    "g_pct",
    "r91",
    "r51",
    "r95",
    "labshare",
    "between",
    "within",
    "dlwf",
    "between_s",
    "within_s",
    "dlws",
    "log_pop",
    "log_gdppc",
    "rd_gdp",
    "exports_gdp",
];

impl PanelRow {
    fn empty(country: &str, year: i32) -> Self {
        Self {
            country: country.to_string(),
            year,
            g: None,
            g_pct: None,
            r91: None,
            r51: None,
            r95: None,
            labshare: None,
            between: None,
            within: None,
            dlwf: None,
            between_s: None,
            within_s: None,
            dlws: None,
            log_pop: None,
            log_gdppc: None,
            rd_gdp: None,
            exports_gdp: None,
        }
    }

    /// Variable by CSV column name; errors on an unknown name.
    pub fn get(&self, name: &str) -> Result<Option<f64>> {
        Ok(match name {
            "g" => self.g,
            "g_pct" => self.g_pct,
            "r91" => self.r91,
            "r51" => self.r51,
            "r95" => self.r95,
            "labshare" => self.labshare,
            "between" => self.between,
            "within" => self.within,
            "dlwf" => self.dlwf,
            "between_s" => self.between_s,
            "within_s" => self.within_s,
            "dlws" => self.dlws,
            "log_pop" => self.log_pop,
            "log_gdppc" => self.log_gdppc,
            "rd_gdp" => self.rd_gdp,
            "exports_gdp" => self.exports_gdp,
            other => return Err(Error::invalid(format!("unknown panel variable `{other}`"))),
        })
    }
}

/// The assembled panel and what was lost on the way.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssembledPanel {
    pub rows: Vec<PanelRow>,
    pub warnings: Vec<String>,
}

fn decomposition_map(
    records: &[DecompositionRecord],
    measure: Measure,
) -> Result<BTreeMap<CountryYear, (f64, f64, f64)>> {
    let mut out = BTreeMap::new();
    for r in records {
        if r.k != 1 || r.measure != measure {
            return Err(Error::invalid(format!(
                "panel assembly needs k = 1 {measure} decompositions, got k = {} {} for {}",
                r.k, r.measure, r.country
            )));
        }
        if out.insert((r.country.clone(), r.t1), (r.between, r.within, r.dlwf)).is_some() {
            return Err(Error::DuplicateKey(format!("decomposition ({}, {})", r.country, r.t1)));
        }
    }
    Ok(out)
}

/// Inner join of the k = 1 complexity decomposition with the macro panel on
/// `(country, year)`. Regressors are taken from `year - lag`. Entropy terms,
/// wage ratios and outcomes are attached where available.
pub fn assemble_panel(
    decomposition: &[DecompositionRecord],
    entropy: Option<&[DecompositionRecord]>,
    macro_panel: &MacroPanel,
    wages: &WagePanel,
    lag: i32,
) -> Result<AssembledPanel> {
    if lag < 0 {
        return Err(Error::invalid(format!("lag must be >= 0, got {lag}")));
    }
    let q = decomposition_map(decomposition, Measure::Complexity)?;
    let s = match entropy {
        Some(e) => decomposition_map(e, Measure::Entropy)?,
        None => BTreeMap::new(),
    };
    let growth = employment_growth(macro_panel);
    let ratios = wage_ratios(wages);
    let share = labour_share(macro_panel);

    let keys: BTreeSet<&CountryYear> = macro_panel
        .records
        .keys()
        .filter(|(c, y)| q.contains_key(&(c.clone(), y - lag)))
        .collect();
    if keys.is_empty() {
        return Err(Error::invalid("panel join is empty: no country-year in both decomposition and macro data"));
    }

    let mut warnings = growth.warnings;
    warnings.extend(ratios.warnings);
    warnings.extend(share.warnings);

    let mut rows = Vec::with_capacity(keys.len());
    for key in keys {
        let (country, year) = (key.0.as_str(), key.1);
        let src = (key.0.clone(), year - lag);
        let rec = &macro_panel.records[key];
        let mut row = PanelRow::empty(country, year);
        let (b, w, d) = q[&src];
        (row.between, row.within, row.dlwf) = (Some(b), Some(w), Some(d));
        if let Some(&(b, w, d)) = s.get(&src) {
            (row.between_s, row.within_s, row.dlws) = (Some(b), Some(w), Some(d));
        }
        row.g = growth.values.get(key).copied();
        row.g_pct = row.g.map(|g| (g - 1.0) * 100.0);
        if let Some(r) = ratios.values.get(key) {
            (row.r91, row.r51, row.r95) = (Some(r.r91), Some(r.r51), Some(r.r95));
        }
        row.labshare = share.values.get(key).copied();
        row.log_pop = rec.population.map(f64::ln);
        row.log_gdppc = rec.gdppc.filter(|v| *v > 0.0).map(f64::ln);
        row.rd_gdp = rec.rd_gdp;
        row.exports_gdp = rec.exports_gdp;
        rows.push(row);
    }
    log::info!("assembled panel with {} rows", rows.len());
    Ok(AssembledPanel { rows, warnings })
}

/// Writes the panel as CSV with header `country,year,` + [`PANEL_VARIABLES`].
pub fn write_panel_rows(rows: &[PanelRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    if rows.is_empty() {
        let mut header = vec!["country", "year"];
        header.extend(PANEL_VARIABLES);
        w.write_record(header).map_err(|e| Error::csv(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    write_file(path, &bytes)
}

pub fn read_panel_rows(path: &Path) -> Result<Vec<PanelRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut rows = Vec::new();
    for (k, rec) in rdr.deserialize().enumerate() {
        let row: PanelRow = rec.map_err(|e| Error::Row {
            path: path.to_path_buf(),
            line: k as u64 + 2,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

//! Panel ingestion and validation.
//!
//! All inputs are long ("tidy") UTF-8 CSV files with a header row. An empty
//! value field marks a missing observation; a key that never appears in the
//! file is missing as well.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::null_model::WeightedMatrix;

/// Column names of the employment CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmploymentColumns {
    pub country: String,
    pub industry: String,
    pub year: String,
    pub employment: String,
}

impl Default for EmploymentColumns {
    fn default() -> Self {
        Self {
            country: "country".into(),
            industry: "industry".into(),
            year: "year".into(),
            employment: "employment".into(),
        }
    }
}

/// Column names of the macro-indicator CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacroColumns {
    pub country: String,
    pub year: String,
    pub indicator: String,
    pub value: String,
}

impl Default for MacroColumns {
    fn default() -> Self {
        Self {
            country: "country".into(),
            year: "year".into(),
            indicator: "indicator".into(),
            value: "value".into(),
        }
    }
}

/// Column names of the wage-decile CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WageColumns {
    pub country: String,
    pub year: String,
    pub decile: String,
    pub wage: String,
}

impl Default for WageColumns {
    fn default() -> Self {
        Self {
            country: "country".into(),
            year: "year".into(),
            decile: "decile".into(),
            wage: "wage".into(),
        }
    }
}

/// Country × industry × year employment counts.
///
/// Values are stored country-major, then industry, then year, so the time
/// series of one country–industry pair is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct EmploymentPanel {
    countries: Vec<String>,
    industries: Vec<String>,
    years: Vec<i32>,
    values: Vec<Option<f64>>,
}

impl EmploymentPanel {
    /// Builds a panel from axis labels and a dense value array.
    ///
    /// Labels must be strictly increasing (sorted and unique) and every
    /// present value finite and non-negative.
    pub fn new(
        countries: Vec<String>,
        industries: Vec<String>,
        years: Vec<i32>,
        values: Vec<Option<f64>>,
    ) -> Result<Self> {
        check_strictly_sorted(&countries, "country")?;
        check_strictly_sorted(&industries, "industry")?;
        check_strictly_sorted(&years, "year")?;
        if countries.is_empty() || industries.is_empty() || years.is_empty() {
            return Err(Error::invalid("panel axes must be non-empty"));
        }
        let expected = countries.len() * industries.len() * years.len();
        if values.len() != expected {
            return Err(Error::invalid(format!(
                "panel has {} values, expected {expected}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().flatten().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("invalid employment value {v}")));
        }
        Ok(Self {
            countries,
            industries,
            years,
            values,
        })
    }

    /// Assembles a panel from `(country, industry, year, value)` records.
    /// Axes are the sorted union of the labels seen; absent keys are missing.
    pub fn from_records<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String, i32, Option<f64>)>,
    {
        let mut cells = BTreeMap::new();
        for (c, i, y, v) in records {
            let key = (c, i, y);
            if cells.contains_key(&key) {
                return Err(Error::DuplicateKey(format!("({}, {}, {})", key.0, key.1, key.2)));
            }
            cells.insert(key, v);
        }
        Self::from_cells(cells)
    }

    fn from_cells(cells: BTreeMap<(String, String, i32), Option<f64>>) -> Result<Self> {
        let countries: BTreeSet<&String> = cells.keys().map(|k| &k.0).collect();
        let industries: BTreeSet<&String> = cells.keys().map(|k| &k.1).collect();
        let years: BTreeSet<i32> = cells.keys().map(|k| k.2).collect();
        let countries: Vec<String> = countries.into_iter().cloned().collect();
        let industries: Vec<String> = industries.into_iter().cloned().collect();
        let years: Vec<i32> = years.into_iter().collect();

        let mut values = vec![None; countries.len() * industries.len() * years.len()];
        let (ni, ny) = (industries.len(), years.len());
        for ((c, i, y), v) in &cells {
            let ci = countries.binary_search(c).expect("label from keys");
            let ii = industries.binary_search(i).expect("label from keys");
            let yi = years.binary_search(y).expect("label from keys");
            values[(ci * ni + ii) * ny + yi] = *v;
        }
        Self::new(countries, industries, years, values)
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn industries(&self) -> &[String] {
        &self.industries
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    fn offset(&self, c: usize, i: usize) -> usize {
        (c * self.industries.len() + i) * self.years.len()
    }

    /// Value by positional indices.
    pub fn get(&self, c: usize, i: usize, y: usize) -> Option<f64> {
        self.values[self.offset(c, i) + y]
    }

    /// Value by labels; `None` if any label is unknown, `Some(None)` if missing.
    pub fn lookup(&self, country: &str, industry: &str, year: i32) -> Option<Option<f64>> {
        let c = self.country_index(country)?;
        let i = self.industries.binary_search_by(|l| l.as_str().cmp(industry)).ok()?;
        let y = self.years.binary_search(&year).ok()?;
        Some(self.get(c, i, y))
    }

    pub fn country_index(&self, country: &str) -> Option<usize> {
        self.countries.binary_search_by(|l| l.as_str().cmp(country)).ok()
    }

    pub fn year_index(&self, year: i32) -> Option<usize> {
        self.years.binary_search(&year).ok()
    }

    /// Time series of one country–industry pair.
    pub fn series(&self, c: usize, i: usize) -> &[Option<f64>] {
        let start = self.offset(c, i);
        &self.values[start..start + self.years.len()]
    }

    /// Replaces one series. Values must be finite and non-negative.
    pub fn set_series(&mut self, c: usize, i: usize, values: &[Option<f64>]) -> Result<()> {
        if values.len() != self.years.len() {
            return Err(Error::invalid("series length does not match the year axis"));
        }
        if let Some(v) = values.iter().flatten().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("invalid employment value {v}")));
        }
        let start = self.offset(c, i);
        self.values[start..start + values.len()].copy_from_slice(values);
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.values.len()
    }

    pub fn n_missing(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    pub fn n_present(&self) -> usize {
        self.n_cells() - self.n_missing()
    }

    /// Enforces the minimum analysable size: two countries, industries and years.
    pub fn check_dimensions(&self) -> Result<()> {
        if self.countries.len() < 2 || self.industries.len() < 2 || self.years.len() < 2 {
            return Err(Error::invalid(format!(
                "panel is {}×{}×{}; at least 2 countries, 2 industries and 2 years are required",
                self.countries.len(),
                self.industries.len(),
                self.years.len()
            )));
        }
        Ok(())
    }

    /// Country × industry matrix of one year. Fails on missing cells.
    pub fn year_matrix(&self, year: i32) -> Result<WeightedMatrix> {
        let y = self
            .year_index(year)
            .ok_or_else(|| Error::UnknownLabels(vec![year.to_string()]))?;
        let (nc, ni) = (self.countries.len(), self.industries.len());
        let mut data = Vec::with_capacity(nc * ni);
        for c in 0..nc {
            for i in 0..ni {
                let v = self.get(c, i, y).ok_or_else(|| {
                    Error::invalid(format!(
                        "missing employment for ({}, {}, {year}); reconstruct the panel first",
                        self.countries[c], self.industries[i]
                    ))
                })?;
                data.push(v);
            }
        }
        WeightedMatrix::from_row_major(self.countries.clone(), self.industries.clone(), data)
    }
}

fn check_strictly_sorted<T: PartialOrd + std::fmt::Debug>(labels: &[T], what: &str) -> Result<()> {
    if let Some(w) = labels.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::invalid(format!(
            "{what} labels must be sorted and unique (found {:?} before {:?})",
            w[0], w[1]
        )));
    }
    Ok(())
}

struct CsvInput {
    path: std::path::PathBuf,
    reader: csv::Reader<File>,
}

impl CsvInput {
    fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        Ok(Self {
            path: path.to_path_buf(),
            reader,
        })
    }

    fn columns<const N: usize>(&mut self, names: [&str; N]) -> Result<[usize; N]> {
        let headers = self
            .reader
            .headers()
            .map_err(|e| Error::csv(&self.path, e))?
            .clone();
        let mut out = [0usize; N];
        for (slot, name) in out.iter_mut().zip(names) {
            *slot = headers.iter().position(|h| h == name).ok_or_else(|| Error::Row {
                path: self.path.clone(),
                line: 1,
                message: format!("missing column `{name}`"),
            })?;
        }
        Ok(out)
    }

    fn rows(&mut self) -> impl Iterator<Item = Result<(u64, csv::StringRecord)>> + '_ {
        let path = self.path.clone();
        self.reader.records().map(move |r| {
            let rec = r.map_err(|e| Error::csv(&path, e))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            Ok((line, rec))
        })
    }

    fn row_error(&self, line: u64, message: impl Into<String>) -> Error {
        Error::Row {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }
}

fn field(rec: &csv::StringRecord, idx: usize) -> &str {
    rec.get(idx).unwrap_or("")
}

fn parse_year(s: &str) -> std::result::Result<i32, String> {
    s.parse::<i32>().map_err(|_| format!("invalid year `{s}`"))
}

fn parse_optional_number(s: &str) -> std::result::Result<Option<f64>, String> {
    if s.is_empty() {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(format!("invalid number `{s}`")),
    }
}

fn non_empty_label(s: &str, what: &str) -> std::result::Result<String, String> {
    if s.is_empty() {
        Err(format!("empty {what} code"))
    } else {
        Ok(s.to_string())
    }
}

/// Reads a long-format employment CSV.
pub fn load_employment_panel(path: &Path, columns: &EmploymentColumns) -> Result<EmploymentPanel> {
    let mut input = CsvInput::open(path)?;
    let [ci, ii, yi, vi] = input.columns([
        columns.country.as_str(),
        columns.industry.as_str(),
        columns.year.as_str(),
        columns.employment.as_str(),
    ])?;

    let mut cells = BTreeMap::new();
    let rows: Vec<_> = input.rows().collect::<Result<_>>()?;
    for (line, rec) in rows {
        let parsed = (|| {
            let c = non_empty_label(field(&rec, ci), "country")?;
            let i = non_empty_label(field(&rec, ii), "industry")?;
            let y = parse_year(field(&rec, yi))?;
            let v = parse_optional_number(field(&rec, vi))?;
            if let Some(v) = v {
                if v < 0.0 {
                    return Err(format!("negative employment {v}"));
                }
            }
            Ok((c, i, y, v))
        })();
        let (c, i, y, v) = parsed.map_err(|m| input.row_error(line, m))?;
        let key = (c, i, y);
        if cells.contains_key(&key) {
            return Err(Error::DuplicateKey(format!("({}, {}, {}) at line {line}", key.0, key.1, key.2)));
        }
        cells.insert(key, v);
    }
    if cells.is_empty() {
        return Err(input.row_error(1, "no data rows"));
    }
    EmploymentPanel::from_cells(cells)
}

/// Writes the panel in the canonical long format, one row per cell, missing
/// cells as empty fields.
pub fn write_panel(panel: &EmploymentPanel, path: &Path) -> Result<()> {
    let mut out = String::from("country,industry,year,employment\n");
    for (c, country) in panel.countries.iter().enumerate() {
        for (i, industry) in panel.industries.iter().enumerate() {
            for (y, year) in panel.years.iter().enumerate() {
                match panel.get(c, i, y) {
                    Some(v) => out.push_str(&format!("{country},{industry},{year},{v}\n")),
                    None => out.push_str(&format!("{country},{industry},{year},\n")),
                }
            }
        }
    }
    write_file(path, out.as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Slices a panel to a country subset and an inclusive year range.
///
/// Every requested country must exist, and the range must contain at least
/// one panel year.
pub fn restrict_sample<S: AsRef<str>>(
    panel: &EmploymentPanel,
    countries: &[S],
    years: RangeInclusive<i32>,
) -> Result<EmploymentPanel> {
    if years.is_empty() {
        return Err(Error::invalid(format!(
            "empty year range {}..={}",
            years.start(),
            years.end()
        )));
    }
    let unknown: Vec<String> = countries
        .iter()
        .map(|c| c.as_ref())
        .filter(|c| panel.country_index(c).is_none())
        .map(String::from)
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownLabels(unknown));
    }
    let mut keep_c: Vec<usize> = countries
        .iter()
        .filter_map(|c| panel.country_index(c.as_ref()))
        .collect();
    keep_c.sort_unstable();
    keep_c.dedup();
    if keep_c.is_empty() {
        return Err(Error::invalid("no countries requested"));
    }
    let keep_y: Vec<usize> = (0..panel.years.len())
        .filter(|&y| years.contains(&panel.years[y]))
        .collect();
    if keep_y.is_empty() {
        return Err(Error::invalid(format!(
            "year range {}..={} contains no panel year",
            years.start(),
            years.end()
        )));
    }

    let mut values = Vec::with_capacity(keep_c.len() * panel.industries.len() * keep_y.len());
    for &c in &keep_c {
        for i in 0..panel.industries.len() {
            let s = panel.series(c, i);
            values.extend(keep_y.iter().map(|&y| s[y]));
        }
    }
    EmploymentPanel::new(
        keep_c.iter().map(|&c| panel.countries[c].clone()).collect(),
        panel.industries.clone(),
        keep_y.iter().map(|&y| panel.years[y]).collect(),
        values,
    )
}

/// Macro indicators recognised in the `indicator` column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indicator {
    Population,
    Gdppc,
    Compensation,
    Gva,
    Emprate,
    RdGdp,
    ExportsGdp,
}

impl Indicator {
    pub const ALL: [Indicator; 7] = [
        Indicator::Population,
        Indicator::Gdppc,
        Indicator::Compensation,
        Indicator::Gva,
        Indicator::Emprate,
        Indicator::RdGdp,
        Indicator::ExportsGdp,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Indicator::Population => "population",
            Indicator::Gdppc => "gdppc",
            Indicator::Compensation => "compensation",
            Indicator::Gva => "gva",
            Indicator::Emprate => "emprate",
            Indicator::RdGdp => "rd_gdp",
            Indicator::ExportsGdp => "exports_gdp",
        }
    }

    fn check(self, v: f64) -> std::result::Result<(), String> {
        match self {
            Indicator::Population if v <= 0.0 => Err(format!("population must be > 0, got {v}")),
            Indicator::Gdppc | Indicator::Compensation | Indicator::Gva if v < 0.0 => {
                Err(format!("{} must be >= 0, got {v}", self.code()))
            }
            Indicator::Emprate | Indicator::RdGdp | Indicator::ExportsGdp
                if !(0.0..=200.0).contains(&v) =>
            {
                Err(format!("{} must lie in [0, 200], got {v}", self.code()))
            }
            _ => Ok(()),
        }
    }
}

impl std::str::FromStr for Indicator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Indicator::ALL
            .into_iter()
            .find(|i| i.code() == s)
            .ok_or_else(|| format!("unknown indicator `{s}`"))
    }
}

/// Macro indicators of one country-year. `None` marks a missing value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MacroRecord {
    pub population: Option<f64>,
    pub gdppc: Option<f64>,
    pub compensation: Option<f64>,
    pub gva: Option<f64>,
    pub emprate: Option<f64>,
    pub rd_gdp: Option<f64>,
    pub exports_gdp: Option<f64>,
}

impl MacroRecord {
    pub fn get(&self, ind: Indicator) -> Option<f64> {
        *self.slot(ind)
    }

    fn slot(&self, ind: Indicator) -> &Option<f64> {
        match ind {
            Indicator::Population => &self.population,
            Indicator::Gdppc => &self.gdppc,
            Indicator::Compensation => &self.compensation,
            Indicator::Gva => &self.gva,
            Indicator::Emprate => &self.emprate,
            Indicator::RdGdp => &self.rd_gdp,
            Indicator::ExportsGdp => &self.exports_gdp,
        }
    }

    fn slot_mut(&mut self, ind: Indicator) -> &mut Option<f64> {
        match ind {
            Indicator::Population => &mut self.population,
            Indicator::Gdppc => &mut self.gdppc,
            Indicator::Compensation => &mut self.compensation,
            Indicator::Gva => &mut self.gva,
            Indicator::Emprate => &mut self.emprate,
            Indicator::RdGdp => &mut self.rd_gdp,
            Indicator::ExportsGdp => &mut self.exports_gdp,
        }
    }

    pub fn set(&mut self, ind: Indicator, v: Option<f64>) {
        *self.slot_mut(ind) = v;
    }

    pub fn is_complete(&self) -> bool {
        Indicator::ALL.iter().all(|&i| self.get(i).is_some())
    }
}

pub type CountryYear = (String, i32);

/// Country-year macro indicators.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MacroPanel {
    pub records: BTreeMap<CountryYear, MacroRecord>,
}

impl MacroPanel {
    pub fn get(&self, country: &str, year: i32) -> Option<&MacroRecord> {
        self.records.get(&(country.to_string(), year))
    }

    /// Keys of records lacking at least one indicator.
    pub fn incomplete(&self) -> Vec<&CountryYear> {
        self.records
            .iter()
            .filter(|(_, r)| !r.is_complete())
            .map(|(k, _)| k)
            .collect()
    }

    pub fn restrict<S: AsRef<str>>(&self, countries: &[S], years: &RangeInclusive<i32>) -> Self {
        let keep: BTreeSet<&str> = countries.iter().map(|c| c.as_ref()).collect();
        Self {
            records: self
                .records
                .iter()
                .filter(|((c, y), _)| keep.contains(c.as_str()) && years.contains(y))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        }
    }
}

/// Reads `country,year,indicator,value` rows.
pub fn load_macro_panel(path: &Path, columns: &MacroColumns) -> Result<MacroPanel> {
    let mut input = CsvInput::open(path)?;
    let [ci, yi, ii, vi] = input.columns([
        columns.country.as_str(),
        columns.year.as_str(),
        columns.indicator.as_str(),
        columns.value.as_str(),
    ])?;
    let mut seen = BTreeSet::new();
    let mut panel = MacroPanel::default();
    let rows: Vec<_> = input.rows().collect::<Result<_>>()?;
    for (line, rec) in rows {
        let parsed = (|| -> std::result::Result<_, String> {
            let c = non_empty_label(field(&rec, ci), "country")?;
            let y = parse_year(field(&rec, yi))?;
            let ind: Indicator = field(&rec, ii).parse()?;
            let v = parse_optional_number(field(&rec, vi))?;
            if let Some(v) = v {
                ind.check(v)?;
            }
            Ok((c, y, ind, v))
        })();
        let (c, y, ind, v) = parsed.map_err(|m| input.row_error(line, m))?;
        if !seen.insert((c.clone(), y, ind)) {
            return Err(Error::DuplicateKey(format!("({c}, {y}, {}) at line {line}", ind.code())));
        }
        panel.records.entry((c, y)).or_default().set(ind, v);
    }
    for (k, _) in panel.records.iter().filter(|(_, r)| !r.is_complete()) {
        log::warn!("macro record ({}, {}) is incomplete", k.0, k.1);
    }
    Ok(panel)
}

/// Average labour income at the first, fifth and ninth deciles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WageRecord {
    pub d1: Option<f64>,
    pub d5: Option<f64>,
    pub d9: Option<f64>,
}

impl WageRecord {
    pub fn is_complete(&self) -> bool {
        self.d1.is_some() && self.d5.is_some() && self.d9.is_some()
    }

    fn check_order(&self) -> std::result::Result<(), String> {
        let present: Vec<(u8, f64)> = [(1, self.d1), (5, self.d5), (9, self.d9)]
            .into_iter()
            .filter_map(|(d, v)| v.map(|v| (d, v)))
            .collect();
        for w in present.windows(2) {
            if w[0].1 > w[1].1 {
                return Err(format!(
                    "decile ordering violated: d{} = {} > d{} = {}",
                    w[0].0, w[0].1, w[1].0, w[1].1
                ));
            }
        }
        Ok(())
    }
}

/// Country-year wage deciles.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WagePanel {
    pub records: BTreeMap<CountryYear, WageRecord>,
}

impl WagePanel {
    pub fn get(&self, country: &str, year: i32) -> Option<&WageRecord> {
        self.records.get(&(country.to_string(), year))
    }

    pub fn incomplete(&self) -> Vec<&CountryYear> {
        self.records
            .iter()
            .filter(|(_, r)| !r.is_complete())
            .map(|(k, _)| k)
            .collect()
    }

    pub fn restrict<S: AsRef<str>>(&self, countries: &[S], years: &RangeInclusive<i32>) -> Self {
        let keep: BTreeSet<&str> = countries.iter().map(|c| c.as_ref()).collect();
        Self {
            records: self
                .records
                .iter()
                .filter(|((c, y), _)| keep.contains(c.as_str()) && years.contains(y))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        }
    }
}

/// Reads `country,year,decile,wage` rows with deciles restricted to 1, 5, 9.
pub fn load_wage_panel(path: &Path, columns: &WageColumns) -> Result<WagePanel> {
    let mut input = CsvInput::open(path)?;
    let [ci, yi, di, wi] = input.columns([
        columns.country.as_str(),
        columns.year.as_str(),
        columns.decile.as_str(),
        columns.wage.as_str(),
    ])?;
    let mut seen = BTreeSet::new();
    let mut panel = WagePanel::default();
    let rows: Vec<_> = input.rows().collect::<Result<_>>()?;
    for (line, rec) in rows {
        let parsed = (|| {
            let c = non_empty_label(field(&rec, ci), "country")?;
            let y = parse_year(field(&rec, yi))?;
            let d: u8 = match field(&rec, di) {
                "1" => 1,
                "5" => 5,
                "9" => 9,
                other => return Err(format!("decile must be 1, 5 or 9, got `{other}`")),
            };
            let w = parse_optional_number(field(&rec, wi))?;
            if let Some(w) = w {
                if w <= 0.0 {
                    return Err(format!("wage must be > 0, got {w}"));
                }
            }
            Ok((c, y, d, w))
        })();
        let (c, y, d, w) = parsed.map_err(|m| input.row_error(line, m))?;
        if !seen.insert((c.clone(), y, d)) {
            return Err(Error::DuplicateKey(format!("({c}, {y}, d{d}) at line {line}")));
        }
        let rec = panel.records.entry((c, y)).or_default();
        match d {
            1 => rec.d1 = w,
            5 => rec.d5 = w,
            _ => rec.d9 = w,
        }
    }
    for ((c, y), r) in &panel.records {
        r.check_order()
            .map_err(|m| Error::invalid(format!("wages for ({c}, {y}): {m}")))?;
        if !r.is_complete() {
            log::warn!("wage record ({c}, {y}) is incomplete");
        }
    }
    Ok(panel)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    const FOUR_ROWS: &str = "country,industry,year,employment\n\
        AT,C10,2010,5\nAT,C10,2011,6\nBE,C10,2010,7\nBE,C10,2011,8\n";

    #[test]
    fn complete_file_has_no_missing_cells() {
        let f = write_tmp(FOUR_ROWS);
        let p = load_employment_panel(f.path(), &EmploymentColumns::default()).unwrap();
        assert_eq!(p.countries(), ["AT", "BE"]);
        assert_eq!(p.years(), [2010, 2011]);
        assert_eq!(p.n_missing(), 0);
        assert_eq!(p.lookup("BE", "C10", 2011), Some(Some(8.0)));
    }

    #[test]
    fn empty_field_is_a_missing_cell() {
        let f = write_tmp(&FOUR_ROWS.replace("BE,C10,2010,7", "BE,C10,2010,"));
        let p = load_employment_panel(f.path(), &EmploymentColumns::default()).unwrap();
        assert_eq!(p.n_missing(), 1);
        assert_eq!(p.lookup("BE", "C10", 2010), Some(None));
    }

    #[test]
    fn negative_employment_names_the_row() {
        let f = write_tmp(&FOUR_ROWS.replace("AT,C10,2011,6", "AT,C10,2011,-3"));
        let err = load_employment_panel(f.path(), &EmploymentColumns::default()).unwrap_err();
        match err {
            Error::Row { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("negative"), "{message}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn malformed_and_duplicate_rows_are_rejected() {
        let f = write_tmp(&FOUR_ROWS.replace("AT,C10,2011,6", "AT,C10,20x1,6"));
        assert!(matches!(
            load_employment_panel(f.path(), &EmploymentColumns::default()),
            Err(Error::Row { line: 3, .. })
        ));
        let f = write_tmp(&format!("{FOUR_ROWS}AT,C10,2010,9\n"));
        let err = load_employment_panel(f.path(), &EmploymentColumns::default()).unwrap_err();
        assert!(matches!(&err, Error::DuplicateKey(k) if k.contains("AT, C10, 2010")), "{err}");
    }

    #[test]
    fn custom_column_mapping() {
        let f = write_tmp("geo,nace,time,emp\nAT,C10,2010,1\n");
        let cols = EmploymentColumns {
            country: "geo".into(),
            industry: "nace".into(),
            year: "time".into(),
            employment: "emp".into(),
        };
        let p = load_employment_panel(f.path(), &cols).unwrap();
        assert_eq!(p.n_present(), 1);
        assert!(load_employment_panel(f.path(), &EmploymentColumns::default()).is_err());
    }

    #[test]
    fn dimension_check() {
        let f = write_tmp(FOUR_ROWS);
        let p = load_employment_panel(f.path(), &EmploymentColumns::default()).unwrap();
        assert!(p.check_dimensions().is_err());
    }

    fn three_country_panel() -> EmploymentPanel {
        let mut recs = Vec::new();
        for c in ["AT", "BE", "CZ"] {
            for i in ["C10", "C11"] {
                for y in 2010..=2012 {
                    recs.push((c.to_string(), i.to_string(), y, Some((y - 2000) as f64)));
                }
            }
        }
        EmploymentPanel::from_records(recs).unwrap()
    }

    #[test]
    fn restrict_countries_and_years() {
        let p = three_country_panel();
        let r = restrict_sample(&p, &["BE", "AT"], 2010..=2012).unwrap();
        assert_eq!(r.countries(), ["AT", "BE"]);
        assert_eq!(r.years(), [2010, 2011, 2012]);
        let full = restrict_sample(&p, p.countries(), 2000..=2100).unwrap();
        assert_eq!(full, p);
        let twice = restrict_sample(&r, &["BE", "AT"], 2011..=2012).unwrap();
        assert_eq!(twice, restrict_sample(&twice, &["BE", "AT"], 2011..=2012).unwrap());
        assert_eq!(twice.lookup("AT", "C11", 2012), Some(Some(12.0)));
    }

    #[test]
    #[allow(clippy::reversed_empty_ranges)]
    fn restrict_errors() {
        let p = three_country_panel();
        assert!(restrict_sample(&p, &["AT"], 2012..=2010).is_err());
        assert!(restrict_sample(&p, &["AT"], 1990..=1995).is_err());
        let err = restrict_sample(&p, &["AT", "XX"], 2010..=2012).unwrap_err();
        assert!(matches!(err, Error::UnknownLabels(ref l) if l == &["XX"]));
    }

    #[test]
    fn macro_panel_loading() {
        let mut rows = String::from("country,year,indicator,value\n");
        for y in [2010, 2011] {
            for ind in Indicator::ALL {
                rows.push_str(&format!("AT,{y},{},1.5\n", ind.code()));
            }
        }
        let f = write_tmp(&rows);
        let m = load_macro_panel(f.path(), &MacroColumns::default()).unwrap();
        assert_eq!(m.records.len(), 2);
        assert!(m.incomplete().is_empty());

        let f = write_tmp(&rows.replace("AT,2011,gva,1.5", "AT,2011,gva,"));
        let m = load_macro_panel(f.path(), &MacroColumns::default()).unwrap();
        assert_eq!(m.records.len(), 2);
        assert_eq!(m.incomplete(), vec![&("AT".to_string(), 2011)]);
        assert_eq!(m.get("AT", 2011).unwrap().gva, None);

        let f = write_tmp(&rows.replace("AT,2010,population,1.5", "AT,2010,population,0"));
        assert!(matches!(
            load_macro_panel(f.path(), &MacroColumns::default()),
            Err(Error::Row { line: 2, .. })
        ));
        let f = write_tmp(&rows.replace("AT,2010,rd_gdp,1.5", "AT,2010,rd_gdp,250"));
        assert!(load_macro_panel(f.path(), &MacroColumns::default()).is_err());
        let f = write_tmp(&rows.replace("rd_gdp", "rnd"));
        assert!(load_macro_panel(f.path(), &MacroColumns::default()).is_err());
    }

    fn wage_file(d1: &str, d5: &str, d9: &str) -> tempfile::NamedTempFile {
        write_tmp(&format!(
            "country,year,decile,wage\nAT,2010,1,{d1}\nAT,2010,5,{d5}\nAT,2010,9,{d9}\n"
        ))
    }

    #[test]
    fn wage_panel_loading() {
        let f = wage_file("10", "20", "30");
        let w = load_wage_panel(f.path(), &WageColumns::default()).unwrap();
        let r = w.get("AT", 2010).unwrap();
        assert_eq!((r.d1, r.d5, r.d9), (Some(10.0), Some(20.0), Some(30.0)));

        let f = wage_file("30", "20", "10");
        let err = load_wage_panel(f.path(), &WageColumns::default()).unwrap_err();
        assert!(err.to_string().contains("AT, 2010"), "{err}");

        let f = wage_file("10", "", "30");
        let w = load_wage_panel(f.path(), &WageColumns::default()).unwrap();
        assert_eq!(w.incomplete().len(), 1);

        let f = write_tmp("country,year,decile,wage\nAT,2010,3,10\n");
        assert!(load_wage_panel(f.path(), &WageColumns::default()).is_err());
    }
}

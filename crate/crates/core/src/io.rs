//! CSV formats for stage outputs.
//!
//! Floats are written with the shortest representation that parses back to
//! the same value, so every file round-trips exactly.

use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::data_model::{write_file, Indicator, MacroPanel, WagePanel};
use crate::efc::{ComplexityScores, RankEntry, RankTable};
use crate::error::{Error, Result};
use crate::null_model::{LabeledMatrix, Provenance, SpecializationMatrix};
use crate::reconstruct::{MaeReport, MaeRow};
use crate::structural::DecompositionRecord;

fn matrix_csv<T: ToString>(rows: &[String], cols: &[String], get: impl Fn(usize, usize) -> T) -> String {
    let mut out = String::from("country");
    for c in cols {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (r, label) in rows.iter().enumerate() {
        out.push_str(label);
        for c in 0..cols.len() {
            out.push(',');
            out.push_str(&get(r, c).to_string());
        }
        out.push('\n');
    }
    out
}

/// Header `country,<columns>`, one row per country.
pub fn write_matrix(m: &LabeledMatrix, path: &Path) -> Result<()> {
    write_file(path, matrix_csv(m.rows(), m.cols(), |r, c| m.get(r, c)).as_bytes())
}

pub fn write_specialization(m: &SpecializationMatrix, path: &Path) -> Result<()> {
    write_file(path, matrix_csv(m.rows(), m.cols(), |r, c| m.entries()[(r, c)]).as_bytes())
}

type MatrixCells = (Vec<String>, Vec<String>, Vec<Vec<String>>);

fn read_matrix_cells(path: &Path) -> Result<MatrixCells> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let header = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    if header.get(0) != Some("country") || header.len() < 2 {
        return Err(Error::Row {
            path: path.to_path_buf(),
            line: 1,
            message: "expected header `country,<columns>`".into(),
        });
    }
    let cols: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        rows.push(rec[0].to_string());
        cells.push(rec.iter().skip(1).map(String::from).collect());
    }
    Ok((rows, cols, cells))
}

fn parse_cell<T: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Row {
        path: path.to_path_buf(),
        line: line as u64 + 2,
        message: format!("cannot parse `{s}`"),
    })
}

pub fn read_matrix(path: &Path) -> Result<LabeledMatrix> {
    let (rows, cols, cells) = read_matrix_cells(path)?;
    let mut data = Vec::with_capacity(rows.len() * cols.len());
    for (r, row) in cells.iter().enumerate() {
        for s in row {
            data.push(parse_cell::<f64>(path, r, s)?);
        }
    }
    LabeledMatrix::from_row_major(rows, cols, data)
}

/// Reads a 0/1 matrix. The file carries no provenance, so it is
/// [`Provenance::External`].
pub fn read_specialization(path: &Path) -> Result<SpecializationMatrix> {
    let (rows, cols, cells) = read_matrix_cells(path)?;
    let mut data = Vec::with_capacity(rows.len() * cols.len());
    for (r, row) in cells.iter().enumerate() {
        for s in row {
            data.push(parse_cell::<u8>(path, r, s)?);
        }
    }
    let entries = DMatrix::from_row_slice(rows.len(), cols.len(), &data);
    SpecializationMatrix::new(rows, cols, entries, Provenance::External)
}

/// File name of one year's scores.
pub fn scores_file_name(year: i32) -> String {
    format!("scores_{year}.csv")
}

/// A `country,fitness` block (dummy included) followed by an
/// `industry,complexity` block.
pub fn write_scores(s: &ComplexityScores, path: &Path) -> Result<()> {
    let mut out = String::from("country,fitness\n");
    for (c, f) in s.countries.iter().zip(&s.fitness) {
        out.push_str(&format!("{c},{f}\n"));
    }
    out.push_str("industry,complexity\n");
    for (i, q) in s.industries.iter().zip(&s.complexity) {
        out.push_str(&format!("{i},{q}\n"));
    }
    write_file(path, out.as_bytes())
}

/// Reads scores written by [`write_scores`]. Solver diagnostics are not
/// stored, so the result reports zero iterations and convergence.
pub fn read_scores(path: &Path, year: i32) -> Result<ComplexityScores> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, message: String| Error::Row {
        path: path.to_path_buf(),
        line: line as u64 + 1,
        message,
    };
    match lines.next() {
        Some((_, "country,fitness")) => {}
        _ => return Err(bad(0, "expected header `country,fitness`".into())),
    }
    let mut s = ComplexityScores {
        year,
        countries: Vec::new(),
        fitness: Vec::new(),
        industries: Vec::new(),
        complexity: Vec::new(),
        iterations: 0,
        converged: true,
        log_change: 0.0,
        ranks_stable: true,
        underflow: Vec::new(),
    };
    let mut in_industries = false;
    for (k, line) in lines {
        if line.is_empty() {
            continue;
        }
        if line == "industry,complexity" {
            in_industries = true;
            continue;
        }
        let (label, value) = line
            .split_once(',')
            .ok_or_else(|| bad(k, format!("expected `label,value`, got `{line}`")))?;
        let v: f64 = value.parse().map_err(|_| bad(k, format!("cannot parse `{value}`")))?;
        if in_industries {
            s.industries.push(label.to_string());
            s.complexity.push(v);
        } else {
            s.countries.push(label.to_string());
            s.fitness.push(v);
        }
    }
    if !in_industries {
        return Err(bad(0, "missing `industry,complexity` block".into()));
    }
    Ok(s)
}

/// Years with a `scores_{Y}.csv` file in `dir`, ascending.
pub fn score_years(dir: &Path) -> Result<Vec<i32>> {
    let mut years = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let name = entry.map_err(|e| Error::io(dir, e))?.file_name();
        let name = name.to_string_lossy();
        if let Some(y) = name
            .strip_prefix("scores_")
            .and_then(|r| r.strip_suffix(".csv"))
            .and_then(|y| y.parse().ok())
        {
            years.push(y);
        }
    }
    years.sort_unstable();
    Ok(years)
}

pub fn read_scores_dir(dir: &Path) -> Result<Vec<ComplexityScores>> {
    let years = score_years(dir)?;
    if years.is_empty() {
        return Err(Error::invalid(format!("no scores_<year>.csv files in {}", dir.display())));
    }
    years
        .into_iter()
        .map(|y| read_scores(&dir.join(scores_file_name(y)), y))
        .collect()
}

/// CSV text of the records, or of `header` alone when there are none.
pub fn records_to_string<T: Serialize>(records: &[T], header: &[&str]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::invalid(e.to_string());
    if records.is_empty() && !header.is_empty() {
        w.write_record(header).map_err(err)?;
    }
    for r in records {
        w.serialize(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

/// Serializes records with a header row.
pub fn write_records<T: Serialize>(records: &[T], header: &[&str], path: &Path) -> Result<()> {
    write_file(path, records_to_string(records, header)?.as_bytes())
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    rdr.deserialize()
        .enumerate()
        .map(|(k, r)| {
            r.map_err(|e| Error::Row {
                path: path.to_path_buf(),
                line: k as u64 + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

pub const RANK_HEADER: [&str; 4] = ["year", "country", "fitness", "rank"];
pub const DECOMP_HEADER: [&str; 9] = [
    "country", "t0", "t1", "k", "dlwf", "within", "between", "measure", "imputed",
];

pub fn write_ranks(t: &RankTable, path: &Path) -> Result<()> {
    write_records(&t.entries, &RANK_HEADER, path)
}

pub fn read_ranks(path: &Path) -> Result<RankTable> {
    Ok(RankTable {
        entries: read_records::<RankEntry>(path)?,
    })
}

pub fn write_decomposition(records: &[DecompositionRecord], path: &Path) -> Result<()> {
    write_records(records, &DECOMP_HEADER, path)
}

pub fn read_decomposition(path: &Path) -> Result<Vec<DecompositionRecord>> {
    read_records(path)
}

/// `strategy,fraction,seed,mae,n_masked`
pub fn write_mae(report: &MaeReport, path: &Path) -> Result<()> {
    write_file(path, report.to_csv().as_bytes())
}

pub fn read_mae(path: &Path) -> Result<MaeReport> {
    #[derive(serde::Deserialize)]
    struct Row {
        strategy: u8,
        fraction: f64,
        seed: u64,
        mae: f64,
        n_masked: usize,
    }
    let rows = read_records::<Row>(path)?
        .into_iter()
        .map(|r| {
            Ok(MaeRow {
                strategy: r.strategy.try_into()?,
                fraction: r.fraction,
                seed: r.seed,
                mae: r.mae,
                n_masked: r.n_masked,
                n_excluded: 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MaeReport { rows })
}

/// Long format `country,year,indicator,value`; missing values are skipped.
pub fn write_macro_panel(p: &MacroPanel, path: &Path) -> Result<()> {
    let mut out = String::from("country,year,indicator,value\n");
    for ((c, y), rec) in &p.records {
        for ind in Indicator::ALL {
            if let Some(v) = rec.get(ind) {
                out.push_str(&format!("{c},{y},{},{v}\n", ind.code()));
            }
        }
    }
    write_file(path, out.as_bytes())
}

/// Long format `country,year,decile,wage`; missing deciles are skipped.
pub fn write_wage_panel(p: &WagePanel, path: &Path) -> Result<()> {
    let mut out = String::from("country,year,decile,wage\n");
    for ((c, y), rec) in &p.records {
        for (d, v) in [(1, rec.d1), (5, rec.d5), (9, rec.d9)] {
            if let Some(v) = v {
                out.push_str(&format!("{c},{y},{d},{v}\n"));
            }
        }
    }
    write_file(path, out.as_bytes())
}

//! Declarative end-to-end runs.
//!
//! A TOML file names the inputs and every analytic choice; [`run_pipeline`]
//! executes the stages in order and writes a manifest with the SHA-256 of the
//! configuration, the inputs and every output. The manifest holds no
//! timestamps or absolute paths, so identical inputs give identical bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data_model::{
    load_employment_panel, load_macro_panel, load_wage_panel, restrict_sample, write_file, write_panel,
    EmploymentColumns, EmploymentPanel, MacroColumns, WageColumns,
};
use crate::econometrics::{
    leave_one_out, model_specs, run_table, ClusterScheme, FitOptions, Inference, OUTCOMES,
};
use crate::efc::{add_dummy_row, rank_fitness, run_efc, ComplexityScores, EfcOptions, Normalization};
use crate::error::{Error, Result};
use crate::io;
use crate::null_model::{build_ica_matrix, fit_biwcm, BiwcmOptions, IcaMode, SolverStage};
use crate::outcomes::{assemble_panel, write_panel_rows};
use crate::reconstruct::{evaluate_strategies, reconstruct_panel, CompleteSeries, Strategy, DEFAULT_FRACTIONS};
use crate::structural::{decompose_panel, industry_entropy, DecompositionRecord, EntropyBasis, IndustryScores, Measure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub employment: PathBuf,
    #[serde(rename = "macro")]
    pub macro_data: PathBuf,
    pub wages: PathBuf,
    #[serde(default)]
    pub employment_columns: Option<EmploymentColumns>,
    #[serde(default)]
    pub macro_columns: Option<MacroColumns>,
    #[serde(default)]
    pub wage_columns: Option<WageColumns>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    /// All panel countries when absent.
    pub countries: Option<Vec<String>>,
    pub first_year: Option<i32>,
    pub last_year: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionConfig {
    pub strategy: u8,
    /// Run the masked-MAE comparison of all strategies.
    pub validate: bool,
    pub fractions: Vec<f64>,
    /// Validation seeds are `seed, seed + 1, …`.
    pub n_seeds: u64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            strategy: 1,
            validate: true,
            fractions: DEFAULT_FRACTIONS.to_vec(),
            n_seeds: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IcaModeName {
    #[default]
    Ratio,
    Pvalue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcaConfig {
    pub mode: IcaModeName,
    pub threshold: f64,
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IcaConfig {
    fn default() -> Self {
        let b = BiwcmOptions::default();
        Self {
            mode: IcaModeName::Ratio,
            threshold: 1.0,
            alpha: 0.05,
            tol: b.tol,
            max_iter: b.max_iter,
        }
    }
}

impl IcaConfig {
    pub fn mode(&self) -> IcaMode {
        match self.mode {
            IcaModeName::Ratio => IcaMode::Ratio {
                threshold: self.threshold,
            },
            IcaModeName::Pvalue => IcaMode::Pvalue { alpha: self.alpha },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfcConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub normalization: Normalization,
}

impl Default for EfcConfig {
    fn default() -> Self {
        let o = EfcOptions::default();
        Self {
            tol: o.tol,
            max_iter: o.max_iter,
            normalization: o.normalization,
        }
    }
}

impl EfcConfig {
    pub fn options(&self) -> EfcOptions {
        EfcOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            normalization: self.normalization,
            ..EfcOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecompositionConfig {
    pub k: Vec<i32>,
    pub entropy_basis: EntropyBasis,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        Self {
            k: vec![1],
            entropy_basis: EntropyBasis::Employment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionConfig {
    pub outcomes: Vec<String>,
    pub cluster: ClusterScheme,
    pub inference: Inference,
    pub scale: f64,
    pub lag: i32,
    /// Outcome of the leave-one-out sweep on the between term.
    pub loo_outcome: String,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            outcomes: ["g_pct", "r91", "r51", "r95", "labshare"].map(String::from).to_vec(),
            cluster: ClusterScheme::Twoway,
            inference: Inference::Normal,
            scale: 1.0,
            lag: 0,
            loo_outcome: "g_pct".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub inputs: Inputs,
    #[serde(default)]
    pub sample: SampleConfig,
    #[serde(default)]
    pub reconstruction: ReconstructionConfig,
    #[serde(default)]
    pub ica: IcaConfig,
    #[serde(default)]
    pub efc: EfcConfig,
    #[serde(default)]
    pub decomposition: DecompositionConfig,
    #[serde(default)]
    pub regression: RegressionConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        Strategy::try_from(self.reconstruction.strategy).map_err(|e| Error::Config(e.to_string()))?;
        if self.reconstruction.validate && (self.reconstruction.fractions.is_empty() || self.reconstruction.n_seeds == 0) {
            return Err(Error::Config("validation needs at least one fraction and one seed".into()));
        }
        if !(self.ica.alpha > 0.0 && self.ica.alpha <= 1.0) {
            return Err(Error::Config(format!("ica.alpha must lie in (0, 1], got {}", self.ica.alpha)));
        }
        if !self.decomposition.k.contains(&1) || self.decomposition.k.iter().any(|&k| k < 1) {
            return Err(Error::Config("decomposition.k must contain 1 and only positive windows".into()));
        }
        for o in self.regression.outcomes.iter().chain([&self.regression.loo_outcome]) {
            if !OUTCOMES.contains(&o.as_str()) {
                return Err(Error::Config(format!("unknown outcome `{o}`")));
            }
        }
        if self.regression.outcomes.is_empty() {
            return Err(Error::Config("regression.outcomes is empty".into()));
        }
        if let (Some(a), Some(b)) = (self.sample.first_year, self.sample.last_year) {
            if a > b {
                return Err(Error::Config(format!("sample years {a}..={b} are empty")));
            }
        }
        Ok(())
    }

    /// Reads a config file and resolves input paths against its directory.
    /// Every input must exist.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_toml(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for p in [&cfg.inputs.employment, &cfg.inputs.macro_data, &cfg.inputs.wages] {
            let full = base.join(p);
            if !full.is_file() {
                return Err(Error::Config(format!("input file {} does not exist", full.display())));
            }
        }
        Ok((cfg, base))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub outputs: Vec<FileHash>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub inputs: Vec<FileHash>,
    pub stages: Vec<StageRecord>,
    pub status: String,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn outputs(&self) -> impl Iterator<Item = &FileHash> {
        self.stages.iter().flat_map(|s| &s.outputs)
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn rel(path: &Path, base: &Path) -> String {
    path.strip_prefix(base)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Collects outputs and warnings of the stage being run.
struct StageCtx<'a> {
    out_dir: &'a Path,
    outputs: Vec<PathBuf>,
    warnings: Vec<String>,
}

impl StageCtx<'_> {
    fn path(&mut self, rel: &str) -> PathBuf {
        let p = self.out_dir.join(rel);
        self.outputs.push(p.clone());
        p
    }

    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }
}

struct Runner<'a> {
    out_dir: &'a Path,
    manifest: RunManifest,
}

impl Runner<'_> {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut StageCtx) -> Result<T>) -> Result<T> {
        log::info!("stage {name}");
        let mut ctx = StageCtx {
            out_dir: self.out_dir,
            outputs: Vec::new(),
            warnings: Vec::new(),
        };
        let result = f(&mut ctx);
        let mut outputs = Vec::new();
        for p in ctx.outputs.iter().filter(|p| p.is_file()) {
            outputs.push(FileHash {
                path: rel(p, self.out_dir),
                sha256: sha256_file(p)?,
            });
        }
        self.manifest.stages.push(StageRecord {
            name: name.to_string(),
            outputs,
            warnings: ctx.warnings,
        });
        match result {
            Ok(v) => Ok(v),
            Err(e) => {
                self.manifest.status = "failed".into();
                self.manifest.failed_stage = Some(name.to_string());
                self.manifest.error = Some(e.to_string());
                self.write_manifest()?;
                Err(Error::Stage {
                    stage: name.to_string(),
                    source: Box::new(e),
                })
            }
        }
    }

    fn write_manifest(&self) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.manifest).map_err(|e| Error::invalid(e.to_string()))?;
        text.push('\n');
        write_file(&self.out_dir.join(MANIFEST_FILE), text.as_bytes())
    }
}

/// Per-year BiWCM fit summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaYear {
    pub year: i32,
    pub stage: String,
    pub iterations: usize,
    pub max_rel_residual: f64,
    pub links: usize,
    pub dropped_countries: usize,
    pub dropped_industries: usize,
    /// How employment was made integer before fitting.
    pub weights: String,
    pub tol: f64,
    pub max_iter: usize,
}

/// Per-year fitness–complexity summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfcYear {
    pub year: i32,
    pub iterations: usize,
    pub converged: bool,
    pub log_change: f64,
    pub underflow: usize,
    pub tol: f64,
    pub max_iter: usize,
}

/// Complexity decompositions for every window in `ks`, followed by the
/// entropy decompositions when `entropy` is set.
pub fn decompose_all(
    panel: &EmploymentPanel,
    scores: &[ComplexityScores],
    ks: &[i32],
    entropy: Option<EntropyBasis>,
) -> Result<Vec<DecompositionRecord>> {
    let q: BTreeMap<i32, IndustryScores> = scores.iter().map(|s| (s.year, IndustryScores::from(s))).collect();
    let mut out = Vec::new();
    for &k in ks {
        out.extend(decompose_panel(panel, &q, k, Measure::Complexity)?);
    }
    if let Some(basis) = entropy {
        let s = q
            .keys()
            .map(|&y| Ok((y, industry_entropy(&panel.year_matrix(y)?, y, basis)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        for &k in ks {
            out.extend(decompose_panel(panel, &s, k, Measure::Entropy)?);
        }
    }
    Ok(out)
}

/// Runs every stage and writes the manifest to `out_dir/manifest.json`.
pub fn run_pipeline(config_path: &Path, out_dir: &Path) -> Result<RunManifest> {
    let (cfg, base) = RunConfig::load(config_path)?;
    let mut inputs = Vec::new();
    for p in [&cfg.inputs.employment, &cfg.inputs.macro_data, &cfg.inputs.wages] {
        inputs.push(FileHash {
            path: rel(p, Path::new("")),
            sha256: sha256_file(&base.join(p))?,
        });
    }
    let mut run = Runner {
        out_dir,
        manifest: RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_file(config_path)?,
            seed: cfg.seed,
            inputs,
            stages: Vec::new(),
            status: "running".into(),
            failed_stage: None,
            error: None,
        },
    };

    let (raw, macro_panel, wages) = run.stage("ingest", |ctx| {
        let raw = load_employment_panel(
            &base.join(&cfg.inputs.employment),
            &cfg.inputs.employment_columns.clone().unwrap_or_default(),
        )?;
        let countries = cfg.sample.countries.clone().unwrap_or_else(|| raw.countries().to_vec());
        let first = cfg.sample.first_year.unwrap_or(raw.years()[0]);
        let last = cfg.sample.last_year.unwrap_or(*raw.years().last().expect("non-empty years"));
        let panel = restrict_sample(&raw, &countries, first..=last)?;
        panel.check_dimensions()?;
        let macro_panel = load_macro_panel(
            &base.join(&cfg.inputs.macro_data),
            &cfg.inputs.macro_columns.clone().unwrap_or_default(),
        )?
        .restrict(&countries, &(first..=last));
        let wages = load_wage_panel(
            &base.join(&cfg.inputs.wages),
            &cfg.inputs.wage_columns.clone().unwrap_or_default(),
        )?
        .restrict(&countries, &(first..=last));
        for (c, y) in macro_panel.incomplete() {
            ctx.warn(format!("macro record ({c}, {y}) is incomplete"));
        }
        for (c, y) in wages.incomplete() {
            ctx.warn(format!("wage record ({c}, {y}) is incomplete"));
        }
        ctx.warn(format!("{} of {} employment cells missing", panel.n_missing(), panel.n_cells()));
        Ok((panel, macro_panel, wages))
    })?;

    let panel = run.stage("reconstruct", |ctx| {
        let strategy = Strategy::try_from(cfg.reconstruction.strategy)?;
        let (filled, excluded) = reconstruct_panel(&raw, strategy)?;
        for (c, i) in &excluded {
            ctx.warn(format!("series ({c}, {i}) has no observation; set to zero"));
        }
        write_panel(&filled, &ctx.path("reconstructed.csv"))?;
        if cfg.reconstruction.validate {
            let complete = CompleteSeries::from_panel(&raw);
            if complete.values().is_empty() {
                ctx.warn("no fully observed series; reconstruction validation skipped".into());
            } else {
                let seeds: Vec<u64> = (0..cfg.reconstruction.n_seeds).map(|k| cfg.seed.wrapping_add(k)).collect();
                let report = evaluate_strategies(&complete, &cfg.reconstruction.fractions, &seeds)?;
                io::write_mae(&report, &ctx.path("mae.csv"))?;
            }
        }
        Ok(filled)
    })?;

    let years: Vec<i32> = panel.years().to_vec();
    let ica = run.stage("ica", |ctx| {
        let opts = BiwcmOptions {
            tol: cfg.ica.tol,
            max_iter: cfg.ica.max_iter,
        };
        let mode = cfg.ica.mode();
        let fits = years
            .par_iter()
            .map(|&y| -> Result<_> {
                let l = panel.year_matrix(y)?.rounded();
                let (l, dr, dc) = l.drop_empty();
                let sol = fit_biwcm(&l, &opts).map_err(|e| Error::invalid(format!("year {y}: {e}")))?;
                let m = build_ica_matrix(&l, &sol, mode)?;
                Ok((y, l, sol, m, dr, dc))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut summary = Vec::new();
        let mut matrices = Vec::new();
        for (y, _l, sol, m, dr, dc) in fits {
            if !dr.is_empty() || !dc.is_empty() {
                ctx.warn(format!("year {y}: dropped empty rows {dr:?} and columns {dc:?} before fitting"));
            }
            io::write_specialization(&m, &ctx.path(&format!("matrices/ica_{y}.csv")))?;
            io::write_matrix(&sol.pvalue_matrix(), &ctx.path(&format!("matrices/pvalues_{y}.csv")))?;
            let d = &sol.diagnostics;
            summary.push(IcaYear {
                year: y,
                stage: match d.stage {
                    SolverStage::FixedPoint => "fixed_point".into(),
                    SolverStage::Newton => "newton".into(),
                },
                iterations: d.iterations,
                max_rel_residual: d.max_rel_residual,
                links: m.entries().iter().map(|&e| e as usize).sum(),
                dropped_countries: dr.len(),
                dropped_industries: dc.len(),
                weights: "rounded_half_even".into(),
                tol: opts.tol,
                max_iter: opts.max_iter,
            });
            matrices.push((y, m));
        }
        io::write_records(&summary, &[], &ctx.path("biwcm.csv"))?;
        Ok(matrices)
    })?;

    let scores = run.stage("efc", |ctx| {
        let opts = cfg.efc.options();
        let mut scores = Vec::new();
        let mut summary = Vec::new();
        for (y, m) in &ica {
            let (m, dr, dc) = m.drop_empty();
            if !dr.is_empty() || !dc.is_empty() {
                ctx.warn(format!("year {y}: no specialization for countries {dr:?} or industries {dc:?}"));
            }
            let s = run_efc(&add_dummy_row(&m)?, *y, &opts)?;
            if !s.converged {
                ctx.warn(format!(
                    "year {y}: fitness-complexity stopped after {} iterations (max |Δln| = {:e})",
                    s.iterations, s.log_change
                ));
            }
            if !s.underflow.is_empty() {
                ctx.warn(format!("year {y}: scores below floor for {:?}", s.underflow));
            }
            io::write_scores(&s, &ctx.path(&format!("scores/{}", io::scores_file_name(*y))))?;
            summary.push(EfcYear {
                year: *y,
                iterations: s.iterations,
                converged: s.converged,
                log_change: s.log_change,
                underflow: s.underflow.len(),
                tol: opts.tol,
                max_iter: opts.max_iter,
            });
            scores.push(s);
        }
        io::write_records(&summary, &[], &ctx.path("efc.csv"))?;
        io::write_ranks(&rank_fitness(&scores), &ctx.path("ranks.csv"))?;
        Ok(scores)
    })?;

    let decomposition = run.stage("decompose", |ctx| {
        let records = decompose_all(&panel, &scores, &cfg.decomposition.k, Some(cfg.decomposition.entropy_basis))?;
        let imputed: usize = records.iter().map(|r| r.imputed).sum();
        if imputed > 0 {
            ctx.warn(format!("{imputed} industry scores imputed with the period minimum"));
        }
        io::write_decomposition(&records, &ctx.path("decomp.csv"))?;
        Ok(records)
    })?;

    let rows = run.stage("panel", |ctx| {
        let pick = |m: Measure| -> Vec<DecompositionRecord> {
            decomposition.iter().filter(|r| r.k == 1 && r.measure == m).cloned().collect()
        };
        let entropy = pick(Measure::Entropy);
        let assembled = assemble_panel(&pick(Measure::Complexity), Some(&entropy), &macro_panel, &wages, cfg.regression.lag)?;
        for w in assembled.warnings {
            ctx.warn(w);
        }
        write_panel_rows(&assembled.rows, &ctx.path("panel.csv"))?;
        Ok(assembled.rows)
    })?;

    run.stage("regress", |ctx| {
        let opts = FitOptions {
            inference: cfg.regression.inference,
            scale: cfg.regression.scale,
            ..FitOptions::default()
        };
        let mut specs = Vec::new();
        for o in &cfg.regression.outcomes {
            specs.extend(model_specs(o, false, cfg.regression.cluster)?);
            specs.extend(model_specs(o, true, cfg.regression.cluster)?);
        }
        let table = run_table(&rows, &specs, &opts)?;
        for (o, m, e) in &table.failures {
            ctx.warn(format!("{o} model {m} failed: {e}"));
        }
        for w in table.warnings {
            ctx.warn(w);
        }
        io::write_records(&table.rows, &[], &ctx.path("tables/regressions.csv"))?;
        let spec = model_specs(&cfg.regression.loo_outcome, false, cfg.regression.cluster)?.remove(0);
        let loo = leave_one_out(&rows, &spec, "between", &opts)?;
        io::write_records(&loo, &[], &ctx.path("loo.csv"))?;
        Ok(())
    })?;

    run.stage("plots", |ctx| {
        let last = *years.last().expect("non-empty years");
        for p in emit_plot_data(out_dir, last)? {
            ctx.outputs.push(p);
        }
        Ok(())
    })?;

    run.manifest.status = "complete".into();
    run.write_manifest()?;
    Ok(run.manifest)
}

fn require(out_dir: &Path, rel: &str, stage: &str) -> Result<PathBuf> {
    let p = out_dir.join(rel);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::Stage {
            stage: stage.to_string(),
            source: Box::new(Error::invalid(format!("missing output {}", p.display()))),
        })
    }
}

#[derive(Debug, Serialize)]
struct PvalueCell {
    year: i32,
    country: String,
    industry: String,
    pvalue: f64,
    ica: u8,
    country_order: usize,
    industry_order: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct LooPoint {
    excluded: String,
    estimate: Option<f64>,
    se: Option<f64>,
    lower: Option<f64>,
    upper: Option<f64>,
    stars: String,
}

/// Writes the data behind the specialization-matrix, ranking,
/// decomposition and leave-one-out figures to `out_dir/plots/`.
pub fn emit_plot_data(out_dir: &Path, year: i32) -> Result<Vec<PathBuf>> {
    let plots = out_dir.join("plots");
    let scores = io::read_scores(&require(out_dir, &format!("scores/{}", io::scores_file_name(year)), "efc")?, year)?;
    let pv = io::read_matrix(&require(out_dir, &format!("matrices/pvalues_{year}.csv"), "ica")?)?;
    let ica = io::read_specialization(&require(out_dir, &format!("matrices/ica_{year}.csv"), "ica")?)?;
    let ranks = io::read_ranks(&require(out_dir, "ranks.csv", "efc")?)?;
    let decomp = io::read_decomposition(&require(out_dir, "decomp.csv", "decompose")?)?;
    let loo: Vec<crate::econometrics::LooResult> = io::read_records(&require(out_dir, "loo.csv", "regress")?)?;

    let mut countries: Vec<(usize, Option<f64>)> =
        (0..pv.nrows()).map(|r| (r, scores.fitness_of(&pv.rows()[r]))).collect();
    countries.sort_by(|a, b| match (a.1, b.1) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(pv.rows()[a.0].cmp(&pv.rows()[b.0])),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => pv.rows()[a.0].cmp(&pv.rows()[b.0]),
    });
    let mut industries: Vec<(usize, Option<f64>)> =
        (0..pv.ncols()).map(|c| (c, scores.complexity_of(&pv.cols()[c]))).collect();
    industries.sort_by(|a, b| match (a.1, b.1) {
        (Some(x), Some(y)) => x.total_cmp(&y).then(pv.cols()[a.0].cmp(&pv.cols()[b.0])),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => pv.cols()[a.0].cmp(&pv.cols()[b.0]),
    });
    let ica_at = |c: &str, i: &str| -> u8 {
        let r = ica.rows().iter().position(|x| x == c);
        let k = ica.cols().iter().position(|x| x == i);
        match (r, k) {
            (Some(r), Some(k)) => ica.entries()[(r, k)],
            _ => 0,
        }
    };
    let mut cells = Vec::new();
    for (co, &(r, _)) in countries.iter().enumerate() {
        for (io_, &(c, _)) in industries.iter().enumerate() {
            cells.push(PvalueCell {
                year,
                country: pv.rows()[r].clone(),
                industry: pv.cols()[c].clone(),
                pvalue: pv.get(r, c),
                ica: ica_at(&pv.rows()[r], &pv.cols()[c]),
                country_order: co + 1,
                industry_order: io_ + 1,
            });
        }
    }

    let files = [
        plots.join("biwcm_pvalues.csv"),
        plots.join("fitness_rankings.csv"),
        plots.join("lwf_decomposition.csv"),
        plots.join("leave_one_out.csv"),
    ];
    io::write_records(&cells, &[], &files[0])?;
    io::write_ranks(&ranks, &files[1])?;
    let lwf: Vec<&DecompositionRecord> = decomp
        .iter()
        .filter(|r| r.k == 1 && r.measure == Measure::Complexity)
        .collect();
    io::write_records(&lwf, &io::DECOMP_HEADER, &files[2])?;
    let points: Vec<LooPoint> = loo
        .into_iter()
        .map(|l| LooPoint {
            lower: l.estimate.zip(l.se).map(|(e, s)| e - 1.96 * s),
            upper: l.estimate.zip(l.se).map(|(e, s)| e + 1.96 * s),
            excluded: l.excluded,
            estimate: l.estimate,
            se: l.se,
            stars: l.stars,
        })
        .collect();
    io::write_records(&points, &[], &files[3])?;
    Ok(files.to_vec())
}

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lwf::data_model::{load_employment_panel, load_macro_panel, load_wage_panel, write_panel};
use lwf::econometrics::{
    fit_twoway_fe, leave_one_out, model_specs, run_table, ClusterScheme, FitOptions, Inference, RegressionSpec,
};
use lwf::efc::{add_dummy_row, rank_fitness, run_efc, EfcOptions, Normalization};
use lwf::io;
use lwf::null_model::{build_ica_matrix, fit_biwcm, BiwcmOptions, IcaMode};
use lwf::outcomes::{assemble_panel, read_panel_rows, write_panel_rows};
use lwf::pipeline::{decompose_all, run_pipeline};
use lwf::reconstruct::{evaluate_strategies, reconstruct_panel, CompleteSeries, Strategy, DEFAULT_FRACTIONS};
use lwf::structural::{EntropyBasis, Measure};

#[derive(Parser)]
#[command(name = "lwf", version, about = "Labour-weighted economic complexity toolkit")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fill gaps in an employment panel.
    Reconstruct {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=7))]
        strategy: u8,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score all seven strategies on randomly masked complete series.
    ValidateReconstruction {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_FRACTIONS.to_vec())]
        fractions: Vec<f64>,
        /// Seeds are `seed, seed + 1, …`.
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        n_seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the BiWCM to one year and write the inferred specialization matrix.
    Ica {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        year: i32,
        #[arg(long, value_enum, default_value_t = Mode::Ratio)]
        mode: Mode,
        #[arg(long, default_value_t = 1.0)]
        threshold: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the link p-values.
        #[arg(long)]
        pvals: Option<PathBuf>,
    },
    /// Dummy-anchored fitness and complexity of a binary matrix.
    Efc {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        year: i32,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 5000)]
        max_iter: usize,
        #[arg(long, value_enum, default_value_t = Norm::Mean)]
        normalization: Norm,
        #[arg(long)]
        out: PathBuf,
    },
    /// Yearly fitness rankings from a directory of `scores_<year>.csv`.
    Ranks {
        #[arg(long)]
        scores_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Within/between decomposition of labour-weighted fitness and entropy.
    Decompose {
        #[arg(long, value_delimiter = ',', default_value = "1")]
        k: Vec<i32>,
        #[arg(long)]
        scores_dir: PathBuf,
        /// Gap-free employment panel.
        #[arg(long)]
        panel: PathBuf,
        #[arg(long, value_enum, default_value_t = Basis::Employment)]
        entropy_basis: Basis,
        /// Skip the entropy decomposition.
        #[arg(long)]
        no_entropy: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assemble the country-year regression panel.
    Panel {
        #[arg(long)]
        decomp: PathBuf,
        #[arg(long = "macro")]
        macro_data: PathBuf,
        #[arg(long)]
        wages: PathBuf,
        /// Take regressors from `year - lag`.
        #[arg(long, default_value_t = 0)]
        lag: i32,
        #[arg(long)]
        out: PathBuf,
    },
    /// One fixed-effects regression.
    Regress(RegressArgs),
    /// The four-column table for each outcome, complexity and entropy.
    Table {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "g_pct,r91,r51,r95,labshare")]
        outcomes: Vec<String>,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leave-one-country-out refits of one model.
    Loo {
        #[command(flatten)]
        args: RegressArgs,
        #[arg(long, default_value = "between")]
        term: String,
    },
    /// End-to-end runs from a configuration file.
    Pipeline {
        #[command(subcommand)]
        action: PipelineAction,
    },
    /// Write the synthetic demo dataset and its run configuration.
    DemoData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = lwf::demo::DEMO_SEED)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum PipelineAction {
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_enum, default_value_t = Cluster::Twoway)]
    cluster: Cluster,
    /// Student t reference distribution instead of the normal.
    #[arg(long)]
    t_dist: bool,
    /// Multiply decomposition regressors by this factor.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
}

impl FitArgs {
    fn options(&self) -> FitOptions {
        FitOptions {
            inference: if self.t_dist { Inference::T } else { Inference::Normal },
            scale: self.scale,
            ..FitOptions::default()
        }
    }
}

#[derive(Args)]
struct RegressArgs {
    #[arg(long)]
    panel: PathBuf,
    #[arg(long)]
    outcome: String,
    /// 1 between, 2 within, 3 ΔLWF, 4 between + within.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=4))]
    model: u8,
    /// Use the entropy terms instead of complexity.
    #[arg(long)]
    entropy: bool,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RegressArgs {
    fn spec(&self) -> Result<RegressionSpec> {
        let mut specs = model_specs(&self.outcome, self.entropy, self.fit.cluster.into())?;
        Ok(specs.remove(self.model as usize - 1))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Ratio,
    Pvalue,
}

#[derive(Clone, Copy, ValueEnum)]
enum Norm {
    Mean,
    Max,
    Sum,
}

#[derive(Clone, Copy, ValueEnum)]
enum Basis {
    Employment,
    LabourShare,
}

#[derive(Clone, Copy, ValueEnum)]
enum Cluster {
    Country,
    Year,
    Twoway,
    Intersection,
}

impl From<Cluster> for ClusterScheme {
    fn from(c: Cluster) -> Self {
        match c {
            Cluster::Country => ClusterScheme::Country,
            Cluster::Year => ClusterScheme::Year,
            Cluster::Twoway => ClusterScheme::Twoway,
            Cluster::Intersection => ClusterScheme::Intersection,
        }
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Reconstruct { panel, strategy, out } => {
            let p = load_employment_panel(&panel, &Default::default())?;
            let (filled, excluded) = reconstruct_panel(&p, Strategy::try_from(strategy)?)?;
            for (c, i) in &excluded {
                log::warn!("series ({c}, {i}) has no observation; set to zero");
            }
            write_panel(&filled, &out)?;
            eprintln!("filled {} cells, {} series excluded", p.n_missing(), excluded.len());
        }
        Command::ValidateReconstruction { panel, fractions, seed, n_seeds, out } => {
            let p = load_employment_panel(&panel, &Default::default())?;
            let complete = CompleteSeries::from_panel(&p);
            if complete.values().is_empty() {
                bail!("the panel has no fully observed series");
            }
            let seeds: Vec<u64> = (0..n_seeds).map(|k| seed.wrapping_add(k)).collect();
            let report = evaluate_strategies(&complete, &fractions, &seeds)?;
            io::write_mae(&report, &out)?;
        }
        Command::Ica { panel, year, mode, threshold, alpha, out, pvals } => {
            let p = load_employment_panel(&panel, &Default::default())?;
            let (l, dr, dc) = p.year_matrix(year)?.rounded().drop_empty();
            if !dr.is_empty() || !dc.is_empty() {
                log::warn!("dropped empty rows {dr:?} and columns {dc:?}");
            }
            let sol = fit_biwcm(&l, &BiwcmOptions::default())?;
            let mode = match mode {
                Mode::Ratio => IcaMode::Ratio { threshold },
                Mode::Pvalue => IcaMode::Pvalue { alpha },
            };
            io::write_specialization(&build_ica_matrix(&l, &sol, mode)?, &out)?;
            if let Some(pv) = pvals {
                io::write_matrix(&sol.pvalue_matrix(), &pv)?;
            }
        }
        Command::Efc { matrix, year, tol, max_iter, normalization, out } => {
            let m = io::read_specialization(&matrix)?;
            let (m, dr, dc) = m.drop_empty();
            if !dr.is_empty() || !dc.is_empty() {
                log::warn!("dropped empty rows {dr:?} and columns {dc:?}");
            }
            let opts = EfcOptions {
                tol,
                max_iter,
                normalization: match normalization {
                    Norm::Mean => Normalization::Mean,
                    Norm::Max => Normalization::Max,
                    Norm::Sum => Normalization::Sum,
                },
                ..EfcOptions::default()
            };
            let s = run_efc(&add_dummy_row(&m)?, year, &opts)?;
            if !s.converged {
                log::warn!("stopped after {} iterations (max |Δln| = {:e})", s.iterations, s.log_change);
            }
            io::write_scores(&s, &out)?;
        }
        Command::Ranks { scores_dir, out } => {
            io::write_ranks(&rank_fitness(&io::read_scores_dir(&scores_dir)?), &out)?;
        }
        Command::Decompose { k, scores_dir, panel, entropy_basis, no_entropy, out } => {
            let p = load_employment_panel(&panel, &Default::default())?;
            let scores = io::read_scores_dir(&scores_dir)?;
            let basis = match entropy_basis {
                Basis::Employment => EntropyBasis::Employment,
                Basis::LabourShare => EntropyBasis::LabourShare,
            };
            let records = decompose_all(&p, &scores, &k, (!no_entropy).then_some(basis))?;
            io::write_decomposition(&records, &out)?;
        }
        Command::Panel { decomp, macro_data, wages, lag, out } => {
            let records = io::read_decomposition(&decomp)?;
            let pick = |m: Measure| records.iter().filter(|r| r.k == 1 && r.measure == m).cloned().collect::<Vec<_>>();
            let entropy = pick(Measure::Entropy);
            let assembled = assemble_panel(
                &pick(Measure::Complexity),
                (!entropy.is_empty()).then_some(entropy.as_slice()),
                &load_macro_panel(&macro_data, &Default::default())?,
                &load_wage_panel(&wages, &Default::default())?,
                lag,
            )?;
            write_panel_rows(&assembled.rows, &out)?;
            eprintln!("{} panel rows", assembled.rows.len());
        }
        Command::Regress(args) => {
            let rows = read_panel_rows(&args.panel)?;
            let spec = args.spec()?;
            let res = fit_twoway_fe(&rows, &spec, &args.fit.options())?;
            let mut text = String::from("term,estimate,se,stars,n,r2,within_r2\n");
            for c in &res.coefficients {
                text.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    c.term, c.estimate, c.se, c.stars, res.n, res.r2, res.within_r2
                ));
            }
            for w in &res.warnings {
                log::warn!("{w}");
            }
            write_or_print(args.out.as_deref(), &text)?;
        }
        Command::Table { panel, outcomes, fit, out } => {
            let rows = read_panel_rows(&panel)?;
            let mut specs = Vec::new();
            for o in &outcomes {
                specs.extend(model_specs(o, false, fit.cluster.into())?);
                specs.extend(model_specs(o, true, fit.cluster.into())?);
            }
            let table = run_table(&rows, &specs, &fit.options())?;
            for (o, m, e) in &table.failures {
                log::warn!("{o} model {m} failed: {e}");
            }
            for w in &table.warnings {
                log::warn!("{w}");
            }
            let text = io::records_to_string(&table.rows, &[])?;
            write_or_print(out.as_deref(), &text)?;
        }
        Command::Loo { args, term } => {
            let rows = read_panel_rows(&args.panel)?;
            let results = leave_one_out(&rows, &args.spec()?, &term, &args.fit.options())?;
            let text = io::records_to_string(&results, &[])?;
            write_or_print(args.out.as_deref(), &text)?;
        }
        Command::Pipeline {
            action: PipelineAction::Run { config, out_dir },
        } => {
            let manifest = run_pipeline(&config, &out_dir)?;
            let warnings: usize = manifest.stages.iter().map(|s| s.warnings.len()).sum();
            eprintln!(
                "pipeline complete: {} outputs, {warnings} warnings, manifest at {}",
                manifest.outputs().count(),
                out_dir.join(lwf::pipeline::MANIFEST_FILE).display()
            );
        }
        Command::DemoData { out, seed } => {
            for f in lwf::demo::write_demo(&out, seed)? {
                eprintln!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    run(cli)
}

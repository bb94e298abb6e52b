//! Deterministic synthetic dataset: 5 countries × 12 industries × 9 years.
//!
//! Country capability and industry sophistication interact so that capable
//! countries hold relatively more employment in sophisticated industries,
//! which gives a roughly nested specialization pattern. A few cells are left
//! missing, one series is entirely missing and one wage decile is absent.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data_model::{EmploymentPanel, MacroPanel, MacroRecord, WagePanel, WageRecord};
use crate::error::Result;
use crate::io::{write_macro_panel, write_wage_panel};

pub const DEMO_SEED: u64 = 20_180_101;
pub const DEMO_COUNTRIES: [&str; 5] = ["XA", "XB", "XC", "XD", "XE"];
pub const DEMO_INDUSTRIES: [&str; 12] = [
    "C10", "C13", "C16", "C17", "C20", "C21", "C22", "C24", "C25", "C26", "C27", "C28",
];
pub const DEMO_YEARS: std::ops::RangeInclusive<i32> = 2010..=2018;

#[derive(Debug, Clone, PartialEq)]
pub struct DemoData {
    pub employment: EmploymentPanel,
    pub macro_panel: MacroPanel,
    pub wages: WagePanel,
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (v * s).round() / s
}

pub fn generate(seed: u64) -> DemoData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.06).expect("valid sd");
    let years: Vec<i32> = DEMO_YEARS.collect();
    let nc = DEMO_COUNTRIES.len();
    let ni = DEMO_INDUSTRIES.len();
    let nt = years.len();

    let capability = [1.6, 1.2, 0.9, 0.55, 0.25];
    let drift = [0.01, 0.03, -0.02, 0.04, 0.015];
    let size = [4.0e5, 2.5e5, 3.0e5, 1.2e5, 0.8e5];
    let sophistication: Vec<f64> = (0..ni).map(|i| i as f64 / (ni - 1) as f64).collect();
    let weight: Vec<f64> = (0..ni).map(|_| rng.random_range(0.5..1.5)).collect();

    let mut values = vec![None; nc * ni * nt];
    for c in 0..nc {
        for i in 0..ni {
            let mut level = 0.0;
            for t in 0..nt {
                level += noise.sample(&mut rng);
                let a = capability[c] + drift[c] * t as f64;
                let share = weight[i] * (2.2 * (a - 0.8) * (sophistication[i] - 0.5)).exp();
                let v = (size[c] / ni as f64 * share * f64::exp(level)).round();
                values[(c * ni + i) * nt + t] = Some(v);
            }
        }
    }
    for c in 0..nc {
        for i in 0..ni {
            for t in 0..nt {
                if rng.random::<f64>() < 0.05 {
                    values[(c * ni + i) * nt + t] = None;
                }
            }
        }
    }
    let (gone_c, gone_i) = (4, 5);
    for t in 0..nt {
        values[(gone_c * ni + gone_i) * nt + t] = None;
    }
    let employment = EmploymentPanel::new(
        DEMO_COUNTRIES.iter().map(|s| s.to_string()).collect(),
        DEMO_INDUSTRIES.iter().map(|s| s.to_string()).collect(),
        years.clone(),
        values,
    )
    .expect("demo panel is valid");

    let mut macro_panel = MacroPanel::default();
    let mut wages = WagePanel::default();
    for (c, country) in DEMO_COUNTRIES.iter().enumerate() {
        let mut pop = size[c] * rng.random_range(40.0..60.0);
        let mut gdppc = 15_000.0 + 12_000.0 * capability[c];
        let mut emprate: f64 = rng.random_range(58.0..74.0);
        let mut d1 = rng.random_range(700.0..1400.0);
        for &year in &years {
            pop *= 1.0 + rng.random_range(-0.004..0.012);
            gdppc *= 1.0 + rng.random_range(-0.01..0.035);
            emprate = (emprate + rng.random_range(-1.2..1.5)).clamp(40.0, 90.0);
            d1 *= 1.0 + rng.random_range(-0.01..0.03);
            let gva = pop * gdppc * 0.88;
            let compensation = gva * rng.random_range(0.48..0.64);
            macro_panel.records.insert(
                (country.to_string(), year),
                MacroRecord {
                    population: Some(pop.round()),
                    gdppc: Some(round_to(gdppc, 2)),
                    compensation: Some(round_to(compensation / 1e6, 3)),
                    gva: Some(round_to(gva / 1e6, 3)),
                    emprate: Some(round_to(emprate, 2)),
                    rd_gdp: Some(round_to(0.6 + 1.4 * capability[c] + rng.random_range(-0.1..0.1), 3)),
                    exports_gdp: Some(round_to(rng.random_range(30.0..80.0), 2)),
                },
            );
            let d5 = d1 * rng.random_range(1.6..2.2);
            let d9 = d5 * rng.random_range(1.7..2.5);
            wages.records.insert(
                (country.to_string(), year),
                WageRecord {
                    d1: Some(round_to(d1, 2)),
                    d5: Some(round_to(d5, 2)),
                    d9: Some(round_to(d9, 2)),
                },
            );
        }
    }
    wages
        .records
        .get_mut(&(DEMO_COUNTRIES[2].to_string(), 2014))
        .expect("demo key")
        .d5 = None;

    DemoData {
        employment,
        macro_panel,
        wages,
    }
}

/// Pipeline configuration for the demo files in the same directory.
pub fn demo_config(seed: u64) -> String {
    format!(
        r#"# Synthetic demo run. Paths are relative to this file.
seed = {seed}

[inputs]
employment = "employment.csv"
macro = "macro.csv"
wages = "wages.csv"

[sample]
first_year = 2010
last_year = 2018

[reconstruction]
strategy = 1
validate = true
fractions = [0.09, 0.14, 0.19, 0.24, 0.5]
n_seeds = 3

[ica]
mode = "ratio"
threshold = 1.0
alpha = 0.05

[efc]
tol = 1e-9
max_iter = 5000
normalization = "mean"

[decomposition]
k = [1, 2]
entropy_basis = "employment"

[regression]
outcomes = ["g_pct", "r91", "r51", "r95", "labshare"]
cluster = "twoway"
inference = "normal"
scale = 1.0
lag = 0
loo_outcome = "g_pct"
"#
    )
}

/// Writes `employment.csv`, `macro.csv`, `wages.csv` and `run.toml`.
pub fn write_demo(dir: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    let data = generate(seed);
    let files = [
        dir.join("employment.csv"),
        dir.join("macro.csv"),
        dir.join("wages.csv"),
        dir.join("run.toml"),
    ];
    crate::data_model::write_panel(&data.employment, &files[0])?;
    write_macro_panel(&data.macro_panel, &files[1])?;
    write_wage_panel(&data.wages, &files[2])?;
    crate::data_model::write_file(&files[3], demo_config(seed).as_bytes())?;
    Ok(files.to_vec())
}

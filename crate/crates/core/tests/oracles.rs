mod common;

use lwf::econometrics::{
    fit_design, fit_excluding, fit_twoway_fe, leave_one_out, model_specs, run_table, ClusterScheme, Design, FitOptions,
    RegressionSpec,
};
use lwf::efc::{add_dummy_row, run_efc, EfcOptions};
use lwf::null_model::{build_ica_matrix, fit_biwcm, BiwcmOptions, IcaMode, Provenance, SpecializationMatrix};
use lwf::outcomes::PanelRow;
use lwf::reconstruct::{evaluate_strategies, mask_random, CompleteSeries, Strategy};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use common::*;

#[test]
fn two_by_two_expectation_matches_root_finder() {
    let l = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 1.0]);
    let sol = fit_biwcm(&weighted(&l), &BiwcmOptions::default()).unwrap();
    let (x, y) = biwcm_root(&l);
    for r in 0..2 {
        for c in 0..2 {
            let p = x[r] * y[c];
            let e = p / (1.0 - p);
            assert!((sol.expected[(r, c)] - e).abs() <= 1e-8, "E[{r},{c}]");
        }
    }
    let m = build_ica_matrix(&weighted(&l), &sol, IcaMode::Ratio { threshold: 1.0 }).unwrap();
    for r in 0..2 {
        for c in 0..2 {
            let p = x[r] * y[c];
            assert_eq!(m.get(r, c), l[(r, c)] > p / (1.0 - p), "flag at ({r}, {c})");
        }
    }
}

#[test]
fn multipliers_match_root_finder_on_rectangular_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..5 {
        let (m, n) = (rng.random_range(2..6), rng.random_range(2..7));
        let l = DMatrix::from_fn(m, n, |_, _| rng.random_range(1..25) as f64);
        let sol = fit_biwcm(&weighted(&l), &BiwcmOptions::default()).unwrap();
        let (x, y) = biwcm_root(&l);
        for (a, b) in sol.x.iter().zip(&x).chain(sol.y.iter().zip(&y)) {
            assert!((a / b - 1.0).abs() <= 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn pvalue_mode_at_alpha_one_flags_every_positive_cell() {
    let l = DMatrix::from_row_slice(3, 3, &[4.0, 0.0, 2.0, 1.0, 3.0, 0.0, 0.0, 2.0, 6.0]);
    let sol = fit_biwcm(&weighted(&l), &BiwcmOptions::default()).unwrap();
    let m = build_ica_matrix(&weighted(&l), &sol, IcaMode::Pvalue { alpha: 1.0 }).unwrap();
    for r in 0..3 {
        for c in 0..3 {
            assert_eq!(m.get(r, c), l[(r, c)] >= 1.0);
        }
    }
}

fn spec(rows: usize, cols: usize, data: &[u8]) -> SpecializationMatrix {
    SpecializationMatrix::new(
        labels("C", rows),
        labels("I", cols),
        DMatrix::from_row_slice(rows, cols, data),
        Provenance::External,
    )
    .unwrap()
}

#[test]
fn anchored_scores_match_fixed_point_oracle() {
    let m = add_dummy_row(&spec(4, 4, &[1, 1, 0, 0, 0, 1, 1, 0, 1, 0, 1, 1, 0, 0, 1, 1])).unwrap();
    let s = run_efc(&m, 2000, &EfcOptions::default()).unwrap();
    assert!(s.converged);
    let dense = DMatrix::from_fn(5, 4, |r, c| f64::from(m.entries()[(r, c)]));
    let (f, q) = efc_oracle(&dense, 5000);
    let anchor = f[4];
    for (a, b) in s.fitness.iter().zip(&f) {
        assert!((a - b / anchor).abs() <= 1e-8, "fitness {a} vs {}", b / anchor);
    }
    for (a, b) in s.complexity.iter().zip(&q) {
        assert!((a - b / anchor).abs() <= 1e-8, "complexity {a} vs {}", b / anchor);
    }
}

#[test]
fn nested_complexity_is_antitone_in_ubiquity() {
    let m = add_dummy_row(&spec(4, 4, &[1, 1, 1, 1, 1, 1, 1, 0, 1, 1, 0, 0, 1, 0, 0, 0])).unwrap();
    let s = run_efc(&m, 2000, &EfcOptions::default()).unwrap();
    for w in s.complexity.windows(2) {
        assert!(w[0] < w[1], "{:?}", s.complexity);
    }
    for w in s.fitness[..4].windows(2) {
        assert!(w[0] > w[1], "{:?}", s.fitness);
    }
}

#[test]
fn constant_edges_win_on_flat_edged_truth() {
    let t: Vec<i32> = (2001..=2009).collect();
    let shapes: [[f64; 9]; 4] = [
        [3.0, 3.0, 3.0, 5.0, 7.0, 9.0, 9.0, 9.0, 9.0],
        [40.0, 40.0, 40.0, 40.0, 30.0, 20.0, 20.0, 20.0, 20.0],
        [8.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 18.0, 18.0],
        [100.0, 100.0, 100.0, 90.0, 80.0, 80.0, 80.0, 80.0, 80.0],
    ];
    let data = CompleteSeries::new(
        t,
        (0..4).map(|k| (format!("C{k}"), "I".to_string())).collect(),
        shapes.iter().map(|s| s.to_vec()).collect(),
    )
    .unwrap();
    let seeds: Vec<u64> = (1..=8).collect();
    let report = evaluate_strategies(&data, &[0.15, 0.3], &seeds).unwrap();
    for fraction in [0.15, 0.3] {
        let best = report.mean_mae(Strategy::ConstantEdges, fraction).unwrap();
        for s in Strategy::ALL {
            let mae = report.mean_mae(s, fraction).unwrap();
            assert!(best <= mae + 1e-12, "strategy {} beats 1 at {fraction}: {mae} < {best}", s.id());
        }
    }
}

#[test]
fn linear_truth_is_recovered_by_global_fit_only() {
    let t: Vec<i32> = (1..=10).collect();
    let data = CompleteSeries::new(
        t.clone(),
        vec![("A".into(), "I1".into()), ("A".into(), "I2".into()), ("B".into(), "I1".into())],
        vec![
            t.iter().map(|&v| 2.0 * v as f64).collect(),
            t.iter().map(|&v| 3.0 * v as f64 + 1.0).collect(),
            t.iter().map(|&v| 0.5 * v as f64 + 4.0).collect(),
        ],
    )
    .unwrap();
    let seeds: Vec<u64> = (1..=10).collect();
    let report = evaluate_strategies(&data, &[0.2], &seeds).unwrap();
    let mut edge_hits = 0;
    for seed in seeds {
        assert!(report.get(Strategy::LinearFit, 0.2, seed).unwrap().mae <= 1e-12);
        assert!(report.get(Strategy::LinearFitEdges, 0.2, seed).unwrap().mae <= 1e-12);
        // interior gaps are interpolated exactly, masked edges are not
        let (masked, _) = mask_random(&data, 0.2, seed).unwrap();
        let edge = masked
            .iter()
            .any(|s| s.values()[0].is_none() || s.values()[t.len() - 1].is_none());
        edge_hits += usize::from(edge);
        let mae1 = report.get(Strategy::ConstantEdges, 0.2, seed).unwrap().mae;
        assert_eq!(mae1 > 0.0, edge, "seed {seed}: MAE {mae1}");
    }
    assert!(edge_hits > 0);
}

fn row(country: &str, year: i32, between: f64, g: f64) -> PanelRow {
    PanelRow {
        country: country.into(),
        year,
        between: Some(between),
        g: Some(g),
        ..Default::default()
    }
}

fn between_spec() -> RegressionSpec {
    RegressionSpec::new("g", "1", &["between"], &[], ClusterScheme::Twoway).unwrap()
}

#[test]
fn extreme_country_moves_the_estimate_most() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let mut rows = Vec::new();
    for c in 0..8 {
        for t in 0..6 {
            let mut b: f64 = rng.random_range(-1.0..1.0);
            let mut g = 0.8 * b + 0.3 * c as f64 + rng.random_range(-0.1..0.1);
            if c == 5 {
                b *= 25.0;
                g = -1.5 * b;
            }
            rows.push(row(&format!("K{c}"), 2010 + t, b, g));
        }
    }
    let opts = FitOptions::default();
    let full = fit_twoway_fe(&rows, &between_spec(), &opts).unwrap().coefficients[0].estimate;
    let loo = leave_one_out(&rows, &between_spec(), "between", &opts).unwrap();
    assert_eq!(loo.len(), 8);
    let mut shifts = Vec::new();
    for r in &loo {
        let direct = fit_excluding(&rows, &between_spec(), &r.excluded, &opts).unwrap().coefficients[0].estimate;
        assert_eq!(r.estimate, Some(direct));
        shifts.push(((direct - full).abs(), r.excluded.clone()));
    }
    shifts.sort_by(|a, b| b.0.total_cmp(&a.0));
    assert_eq!(shifts[0].1, "K5");
    assert!(fit_excluding(&rows, &between_spec(), "ZZ", &opts).is_err());
}

#[test]
fn excluding_either_duplicate_gives_the_original_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let mut rows = Vec::new();
    for c in 0..6 {
        for t in 0..5 {
            let b: f64 = rng.random_range(-1.0..1.0);
            rows.push(row(&format!("K{c}"), 2010 + t, b, 0.4 * b + rng.random_range(-0.3..0.3)));
        }
    }
    let original = rows.clone();
    let twins: Vec<PanelRow> = rows
        .iter()
        .filter(|r| r.country == "K2")
        .map(|r| PanelRow {
            country: "K2b".into(),
            ..r.clone()
        })
        .collect();
    rows.extend(twins);
    let opts = FitOptions::default();
    let base = fit_twoway_fe(&original, &between_spec(), &opts).unwrap().coefficients[0].estimate;
    let loo = leave_one_out(&rows, &between_spec(), "between", &opts).unwrap();
    for name in ["K2", "K2b"] {
        let r = loo.iter().find(|r| r.excluded == name).unwrap();
        let est = r.estimate.unwrap();
        assert!((est - base).abs() <= 1e-12 * base.abs().max(1.0), "{name}: {est} vs {base}");
    }
}

/// Residual of `v` after projection on intercept, country and year dummies.
fn dummy_residual(d: &Design, v: &DVector<f64>) -> DVector<f64> {
    let countries: Vec<&String> = {
        let mut c: Vec<&String> = d.countries.iter().collect();
        c.sort();
        c.dedup();
        c
    };
    let mut years = d.years.clone();
    years.sort();
    years.dedup();
    let p = 1 + countries.len() - 1 + years.len() - 1;
    let mut z = DMatrix::zeros(d.n(), p);
    for r in 0..d.n() {
        z[(r, 0)] = 1.0;
        let ci = countries.iter().position(|c| *c == &d.countries[r]).unwrap();
        if ci > 0 {
            z[(r, ci)] = 1.0;
        }
        let yi = years.iter().position(|y| *y == d.years[r]).unwrap();
        if yi > 0 {
            z[(r, countries.len() + yi - 1)] = 1.0;
        }
    }
    let coef = z.clone().svd(true, true).solve(v, 1e-12).unwrap();
    v - z * coef
}

#[test]
fn pure_noise_has_negligible_within_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let (mut countries, mut years, mut y, mut x) = (vec![], vec![], vec![], vec![]);
    for c in 0..50 {
        for t in 0..10 {
            countries.push(format!("K{c:02}"));
            years.push(2000 + t);
            y.push(StandardNormal.sample(&mut rng));
            x.push(StandardNormal.sample(&mut rng));
        }
    }
    let d = Design::new(
        vec!["x".into()],
        countries,
        years,
        DVector::from_vec(y),
        DMatrix::from_column_slice(500, 1, &x),
    )
    .unwrap();
    let fit = fit_design(&d, ClusterScheme::Country, &FitOptions::default()).unwrap();
    assert!(fit.within_r2 < 0.05, "within R2 {}", fit.within_r2);

    let yt = dummy_residual(&d, &d.y);
    let xt = dummy_residual(&d, &d.x.column(0).into_owned());
    let beta = xt.dot(&yt) / xt.dot(&xt);
    let r2 = beta * beta * xt.dot(&xt) / yt.dot(&yt);
    assert!((fit.coefficients[0].estimate - beta).abs() <= 1e-10);
    assert!((fit.within_r2 - r2).abs() <= 1e-8);
}

fn control_panel() -> Vec<PanelRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut rows = Vec::new();
    for c in 0..9 {
        for t in 0..6 {
            let between = rng.random_range(-1.0..1.0);
            let within = rng.random_range(-1.0..1.0);
            let between_s = rng.random_range(-1.0..1.0);
            let within_s = rng.random_range(-1.0..1.0);
            rows.push(PanelRow {
                country: format!("K{c}"),
                year: 2010 + t,
                g: Some(between - 0.5 * within + rng.random_range(-0.5..0.5)),
                between: Some(between),
                within: Some(within),
                dlwf: Some(between + within),
                between_s: Some(between_s),
                within_s: Some(within_s),
                dlws: Some(between_s + within_s),
                log_pop: Some(rng.random_range(14.0..17.0)),
                log_gdppc: Some(rng.random_range(9.0..11.0)),
                rd_gdp: Some(rng.random_range(0.5..3.5)),
                exports_gdp: Some(rng.random_range(20.0..90.0)),
                ..Default::default()
            });
        }
    }
    rows
}

#[test]
fn results_table_has_four_columns_per_outcome() {
    let rows = control_panel();
    let opts = FitOptions::default();
    let table = run_table(&rows, &model_specs("g", false, ClusterScheme::Twoway).unwrap(), &opts).unwrap();
    assert!(table.failures.is_empty(), "{:?}", table.failures);
    let mut models: Vec<&str> = table.rows.iter().map(|r| r.model.as_str()).collect();
    models.dedup();
    assert_eq!(models, ["1", "2", "3", "4"]);
    let labels: Vec<(&str, &str)> = table
        .rows
        .iter()
        .filter(|r| !lwf::econometrics::CONTROLS.contains(&r.term.as_str()))
        .map(|r| (r.model.as_str(), r.label.as_str()))
        .collect();
    assert_eq!(
        labels,
        [
            ("1", "Between"),
            ("2", "Within"),
            ("3", "Delta LWF"),
            ("4", "Between"),
            ("4", "Within")
        ]
    );

    let entropy = run_table(&rows, &model_specs("g", true, ClusterScheme::Twoway).unwrap(), &opts).unwrap();
    let names: Vec<&str> = entropy.rows.iter().map(|r| r.label.as_str()).collect();
    assert!(names.contains(&"Between (Entropy)"));
    assert!(names.contains(&"Within (Entropy)"));

    assert!(run_table(&rows, &[], &opts).is_err());
}

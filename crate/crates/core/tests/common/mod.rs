//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use lwf::econometrics::Design;
use lwf::null_model::WeightedMatrix;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|k| format!("{prefix}{k:02}")).collect()
}

pub fn weighted(m: &DMatrix<f64>) -> WeightedMatrix {
    WeightedMatrix::new(labels("C", m.nrows()), labels("I", m.ncols()), m.clone()).unwrap()
}

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn demo_config() -> PathBuf {
    workspace_root().join("data/demo/run.toml")
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Strength residuals of the geometric model at log-multipliers `(u, v)`,
/// relative to `max(1, s)`.
fn strength_residuals(l: &DMatrix<f64>, u: &[f64], v: &[f64]) -> Vec<f64> {
    let (m, n) = l.shape();
    let mut r = Vec::with_capacity(m + n);
    for c in 0..m {
        let s: f64 = l.row(c).sum();
        let e: f64 = (0..n).map(|i| mean_weight(u[c] + v[i])).sum();
        r.push((e - s) / s.max(1.0));
    }
    for i in 0..n - 1 {
        let s: f64 = l.column(i).sum();
        let e: f64 = (0..m).map(|c| mean_weight(u[c] + v[i])).sum();
        r.push((e - s) / s.max(1.0));
    }
    let mu = u.iter().sum::<f64>() / m as f64;
    let mv = v.iter().sum::<f64>() / n as f64;
    r.push(mu - mv);
    r
}

fn mean_weight(log_p: f64) -> f64 {
    if log_p >= 0.0 {
        return f64::INFINITY;
    }
    let p = log_p.exp();
    p / (1.0 - p)
}

fn norm(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Multipliers `(x, y)` of the geometric bipartite weighted model found by a
/// generic damped Newton iteration with a finite-difference Jacobian. The
/// last column equation is redundant and is replaced by the gauge
/// `mean(ln x) = mean(ln y)`.
pub fn biwcm_root(l: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = l.shape();
    let total = l.sum();
    let p0 = total / (total + (m * n) as f64);
    let mut z = vec![0.5 * p0.ln(); m + n];
    let eval = |z: &[f64]| strength_residuals(l, &z[..m], &z[m..]);
    let mut r = eval(&z);
    for _ in 0..500 {
        if r.iter().all(|v| v.abs() < 1e-14) {
            break;
        }
        let k = m + n;
        let mut jac = DMatrix::zeros(k, k);
        for j in 0..k {
            let h = 1e-7 * z[j].abs().max(1.0);
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[j] += h;
            zm[j] -= h;
            let (rp, rm) = (eval(&zp), eval(&zm));
            for i in 0..k {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let step = jac
            .lu()
            .solve(&DVector::from_column_slice(&r))
            .expect("non-singular Jacobian");
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = z.iter().zip(step.iter()).map(|(a, d)| a - t * d).collect();
            let rc = eval(&cand);
            if rc.iter().all(|v| v.is_finite()) && norm(&rc) < norm(&r) {
                z = cand;
                r = rc;
                break;
            }
            t *= 0.5;
            assert!(t > 1e-12, "line search failed");
        }
    }
    assert!(r.iter().all(|v| v.abs() < 1e-12), "oracle did not converge: {r:?}");
    (
        z[..m].iter().map(|v| v.exp()).collect(),
        z[m..].iter().map(|v| v.exp()).collect(),
    )
}

/// Plain fitness-complexity iteration with mean normalization from `F = Q = 1`,
/// `iterations` steps.
pub fn efc_oracle(m: &DMatrix<f64>, iterations: usize) -> (Vec<f64>, Vec<f64>) {
    let (nr, nc) = m.shape();
    let mut f = vec![1.0; nr];
    let mut q = vec![1.0; nc];
    for _ in 0..iterations {
        let mut f_new: Vec<f64> = (0..nr).map(|c| (0..nc).map(|i| m[(c, i)] * q[i]).sum()).collect();
        let mut q_new: Vec<f64> = (0..nc)
            .map(|i| 1.0 / (0..nr).map(|c| m[(c, i)] / f[c]).sum::<f64>())
            .collect();
        let mf = f_new.iter().sum::<f64>() / nr as f64;
        let mq = q_new.iter().sum::<f64>() / nc as f64;
        f_new.iter_mut().for_each(|v| *v /= mf);
        q_new.iter_mut().for_each(|v| *v /= mq);
        f = f_new;
        q = q_new;
    }
    (f, q)
}

/// Indices sorted by descending value.
pub fn descending(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    idx
}

/// Slopes of OLS with an intercept and explicit country and year dummies.
pub fn dummy_ols(d: &Design) -> Vec<f64> {
    let countries: Vec<&String> = {
        let mut v: Vec<&String> = d.countries.iter().collect();
        v.sort();
        v.dedup();
        v
    };
    let years: Vec<i32> = {
        let mut v = d.years.clone();
        v.sort();
        v.dedup();
        v
    };
    let k = d.x.ncols();
    let p = k + 1 + (countries.len() - 1) + (years.len() - 1);
    let n = d.n();
    let mut x = DMatrix::zeros(n, p);
    for r in 0..n {
        for j in 0..k {
            x[(r, j)] = d.x[(r, j)];
        }
        x[(r, k)] = 1.0;
        let ci = countries.iter().position(|c| *c == &d.countries[r]).unwrap();
        if ci > 0 {
            x[(r, k + ci)] = 1.0;
        }
        let yi = years.iter().position(|y| *y == d.years[r]).unwrap();
        if yi > 0 {
            x[(r, k + countries.len() + yi - 1)] = 1.0;
        }
    }
    let beta = x.svd(true, true).solve(&d.y, 1e-12).unwrap();
    beta.iter().take(k).copied().collect()
}

/// Random unbalanced panel with `k` slopes and additive two-way effects.
pub fn random_design<R: Rng>(rng: &mut R, k: usize, noise: f64) -> Design {
    let nc = rng.random_range(6..12);
    let nt = rng.random_range(4..8);
    let alpha: Vec<f64> = (0..nc).map(|_| rng.random_range(-3.0..3.0)).collect();
    let tau: Vec<f64> = (0..nt).map(|_| rng.random_range(-2.0..2.0)).collect();
    let beta: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut countries = Vec::new();
    let mut years = Vec::new();
    let mut y = Vec::new();
    let mut x = Vec::new();
    for c in 0..nc {
        for t in 0..nt {
            // keep every country and year present at least once
            if t > 0 && c > 0 && rng.random::<f64>() < 0.25 {
                continue;
            }
            let xs: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0) + 0.3 * alpha[c]).collect();
            let fit: f64 = xs.iter().zip(&beta).map(|(a, b)| a * b).sum();
            y.push(fit + alpha[c] + tau[t] + noise * rng.random_range(-1.0..1.0));
            x.extend(xs);
            countries.push(format!("K{c}"));
            years.push(2000 + t as i32);
        }
    }
    let n = y.len();
    Design::new(
        (0..k).map(|j| format!("x{j}")).collect(),
        countries,
        years,
        DVector::from_vec(y),
        DMatrix::from_row_slice(n, k, &x),
    )
    .unwrap()
}

/// Reference two-way clustered SEs for `cgm_panel.csv`, produced by
/// `cgm_reference.py`.
pub const CGM_REFERENCE: [(&str, f64, f64); 2] = [
    ("x1", 0.501053186777, 0.421638616284),
    ("x2", -1.647341493757, 0.312063226921),
];

pub fn cgm_design() -> Design {
    #[derive(serde::Deserialize)]
    struct Row {
        country: String,
        year: i32,
        y: f64,
        x1: f64,
        x2: f64,
    }
    let mut rdr = csv::Reader::from_path(fixture("cgm_panel.csv")).unwrap();
    let rows: Vec<Row> = rdr.deserialize().collect::<Result<_, _>>().unwrap();
    let n = rows.len();
    Design::new(
        vec!["x1".into(), "x2".into()],
        rows.iter().map(|r| r.country.clone()).collect(),
        rows.iter().map(|r| r.year).collect(),
        DVector::from_iterator(n, rows.iter().map(|r| r.y)),
        DMatrix::from_row_iterator(n, 2, rows.iter().flat_map(|r| [r.x1, r.x2])),
    )
    .unwrap()
}

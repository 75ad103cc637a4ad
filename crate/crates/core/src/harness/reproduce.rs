//! Exact reproductions of the optimal-portfolio table, the breakpoint table,
//! the portfolio sweep curve and the family comparison, plus multi-seed
//! training runs. Each command returns its rows and, given an output
//! directory, writes a CSV, an SVG rendering and the parameters used.

use std::fs::{self, File};
use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::svg::{LineChart, Series};
use super::train::{train, ExperimentLog};
use crate::error::{Error, Result};
use crate::policy::{breaking_points_linear, expected_runtime, optimal_restricted_policy, Portfolio};
use crate::portfolio::{
    binomial, cumulative_curve, make_portfolio, search_optimal_portfolio, sweep_all_portfolios, write_sweep_csv,
    FamilyKind, SweepRecord,
};

fn radii_field(p: &Portfolio) -> String {
    p.radii().iter().map(|r| r.to_string()).collect::<Vec<_>>().join(" ")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::WriterBuilder::new()
        .delimiter(b';')
        .from_writer(File::create(path)?))
}

fn echo<T: Serialize>(dir: &Path, params: &T) -> Result<()> {
    fs::create_dir_all(dir)?;
    let text = toml::to_string(params).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(dir.join("config.toml"), text)?;
    Ok(())
}

fn check_cap(n: usize, k: usize, cap: u128) -> Result<()> {
    let count = binomial(n as u64 - 1, k as u64 - 1);
    if count > cap {
        return Err(Error::EnumerationTooLarge { count, cap });
    }
    Ok(())
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k < 2 || k > n {
        return Err(Error::FamilyUndefined {
            family: FamilyKind::Optimal.name().into(),
            k,
            n,
        });
    }
    Ok(())
}

#[derive(Serialize)]
struct Params<'a> {
    command: &'a str,
    n: Vec<usize>,
    k: Vec<usize>,
    jobs: usize,
    cap: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table1Row {
    pub n: usize,
    pub k: usize,
    pub portfolio: Portfolio,
    pub expected_runtime: f64,
    pub normalized: f64,
}

/// Optimal portfolio of every size `k` for every `n`.
pub fn table1(ns: &[usize], ks: &[usize], jobs: usize, cap: u128, out: Option<&Path>) -> Result<Vec<Table1Row>> {
    for &n in ns {
        for &k in ks {
            check_k(k, n)?;
            check_cap(n, k, cap)?;
        }
    }
    let mut rows = Vec::new();
    for &n in ns {
        for &k in ks {
            let (portfolio, moments) = search_optimal_portfolio(k, n, jobs)?;
            rows.push(Table1Row {
                n,
                k,
                portfolio,
                expected_runtime: moments.expectation,
                normalized: moments.expectation / (n * n) as f64,
            });
        }
    }
    if let Some(dir) = out {
        echo(
            dir,
            &Params {
                command: "table1",
                n: ns.to_vec(),
                k: ks.to_vec(),
                jobs,
                cap: cap.to_string(),
            },
        )?;
        let mut w = csv_writer(&dir.join("table1.csv"))?;
        w.write_record(["n", "k", "portfolio", "expected_runtime", "normalized"])?;
        for r in &rows {
            w.write_record([
                r.n.to_string(),
                r.k.to_string(),
                radii_field(&r.portfolio),
                r.expected_runtime.to_string(),
                r.normalized.to_string(),
            ])?;
        }
        w.flush()?;
        let mut chart = LineChart::new("Optimal portfolios", "k", "expected runtime / n^2");
        for &n in ns {
            let pts = rows
                .iter()
                .filter(|r| r.n == n)
                .map(|r| (r.k as f64, r.normalized))
                .collect();
            chart = chart.with_series(Series::new(format!("n = {n}"), pts));
        }
        fs::write(dir.join("table1.svg"), chart.render())?;
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table2Row {
    pub n: usize,
    pub k: usize,
    pub family: FamilyKind,
    pub portfolio: Portfolio,
    pub breakpoints: Vec<i64>,
}

impl Table2Row {
    /// Breakpoints divided by `n`.
    pub fn normalized(&self) -> Vec<f64> {
        self.breakpoints.iter().map(|&b| b as f64 / self.n as f64).collect()
    }
}

fn family_portfolio(kind: FamilyKind, k: usize, n: usize, jobs: usize, cap: u128) -> Result<Portfolio> {
    if kind == FamilyKind::Optimal {
        check_k(k, n)?;
        check_cap(n, k, cap)?;
        Ok(search_optimal_portfolio(k, n, jobs)?.0)
    } else {
        make_portfolio(kind, k, n)
    }
}

/// Breakpoints of the optimal policy for each family where it is defined.
pub fn table2(ns: &[usize], ks: &[usize], jobs: usize, cap: u128, out: Option<&Path>) -> Result<Vec<Table2Row>> {
    let mut rows = Vec::new();
    for &n in ns {
        for &k in ks {
            for kind in FamilyKind::ALL {
                if !kind.defined(k, n) {
                    continue;
                }
                let portfolio = family_portfolio(kind, k, n, jobs, cap)?;
                let breakpoints = breaking_points_linear(&portfolio)?;
                rows.push(Table2Row {
                    n,
                    k,
                    family: kind,
                    portfolio,
                    breakpoints,
                });
            }
        }
    }
    if let Some(dir) = out {
        echo(
            dir,
            &Params {
                command: "table2",
                n: ns.to_vec(),
                k: ks.to_vec(),
                jobs,
                cap: cap.to_string(),
            },
        )?;
        let mut w = csv_writer(&dir.join("table2.csv"))?;
        w.write_record(["n", "k", "family", "portfolio", "breakpoints", "normalized_breakpoints"])?;
        for r in &rows {
            let b: Vec<String> = r.breakpoints.iter().map(|b| b.to_string()).collect();
            let nb: Vec<String> = r.normalized().iter().map(|b| format!("{b:.2}")).collect();
            w.write_record([
                r.n.to_string(),
                r.k.to_string(),
                r.family.name().to_string(),
                radii_field(&r.portfolio),
                b.join(" "),
                nb.join(" "),
            ])?;
        }
        w.flush()?;
        let mut chart = LineChart::new("Breakpoints", "index", "breakpoint / n");
        for r in &rows {
            let pts = r
                .normalized()
                .iter()
                .enumerate()
                .map(|(j, &b)| ((j + 1) as f64, b))
                .collect();
            chart = chart.with_series(Series::new(format!("{} n={} k={}", r.family, r.n, r.k), pts));
        }
        fs::write(dir.join("table2.svg"), chart.render())?;
    }
    Ok(rows)
}

/// All size-`k` portfolios containing radius 1, sorted by expected runtime.
pub fn fig1(n: usize, k: usize, cap: u128, out: Option<&Path>) -> Result<Vec<SweepRecord>> {
    let records = sweep_all_portfolios(k, n, true, cap)?;
    if let Some(dir) = out {
        echo(
            dir,
            &Params {
                command: "fig1",
                n: vec![n],
                k: vec![k],
                jobs: 1,
                cap: cap.to_string(),
            },
        )?;
        write_sweep_csv(&records, File::create(dir.join("fig1_sweep.csv"))?)?;
        let curve = cumulative_curve(&records);
        let mut w = csv_writer(&dir.join("fig1_cdf.csv"))?;
        w.write_record(["normalized", "cumulative_fraction"])?;
        for (x, y) in &curve {
            w.write_record([x.to_string(), y.to_string()])?;
        }
        w.flush()?;
        let chart = LineChart::new(
            format!("Portfolios of size {k}, n = {n}"),
            "expected runtime / n^2",
            "cumulative fraction",
        )
        .with_series(Series::new("all portfolios", curve));
        fs::write(dir.join("fig1.svg"), chart.render())?;
    }
    Ok(records)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fig4Point {
    pub n: usize,
    pub k: usize,
    pub family: FamilyKind,
    pub portfolio: Portfolio,
    pub expected_runtime: f64,
    pub normalized: f64,
}

/// Expected runtime of the optimal policy for each family and size.
pub fn fig4(n: usize, ks: &[usize], jobs: usize, cap: u128, out: Option<&Path>) -> Result<Vec<Fig4Point>> {
    for &k in ks {
        check_k(k, n)?;
        check_cap(n, k, cap)?;
    }
    let mut points = Vec::new();
    for &k in ks {
        for kind in FamilyKind::ALL {
            if !kind.defined(k, n) {
                continue;
            }
            let portfolio = family_portfolio(kind, k, n, jobs, cap)?;
            let e = expected_runtime(&optimal_restricted_policy(&portfolio)?);
            points.push(Fig4Point {
                n,
                k,
                family: kind,
                portfolio,
                expected_runtime: e,
                normalized: e / (n * n) as f64,
            });
        }
    }
    if let Some(dir) = out {
        echo(
            dir,
            &Params {
                command: "fig4",
                n: vec![n],
                k: ks.to_vec(),
                jobs,
                cap: cap.to_string(),
            },
        )?;
        let mut w = csv_writer(&dir.join("fig4.csv"))?;
        w.write_record(["n", "k", "family", "portfolio", "expected_runtime", "normalized"])?;
        for p in &points {
            w.write_record([
                p.n.to_string(),
                p.k.to_string(),
                p.family.name().to_string(),
                radii_field(&p.portfolio),
                p.expected_runtime.to_string(),
                p.normalized.to_string(),
            ])?;
        }
        w.flush()?;
        let mut chart = LineChart::new(format!("Optimal policies, n = {n}"), "k", "expected runtime / n^2");
        for kind in FamilyKind::ALL {
            let pts: Vec<_> = points
                .iter()
                .filter(|p| p.family == kind)
                .map(|p| (p.k as f64, p.normalized))
                .collect();
            if !pts.is_empty() {
                chart = chart.with_series(Series::new(kind.name(), pts));
            }
        }
        fs::write(dir.join("fig4.svg"), chart.render())?;
    }
    Ok(points)
}

/// Trains every seed of `config` and writes per-seed logs, a summary table
/// and the evaluation curves.
pub fn training(config: &ExperimentConfig, jobs: usize, out: Option<&Path>) -> Result<Vec<ExperimentLog>> {
    let logs = train(config, jobs, out)?;
    if let Some(dir) = out {
        write_training_summary(&logs, dir)?;
    }
    Ok(logs)
}

fn opt_field(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// `summary.csv` and `training.svg` for a set of finished runs.
pub fn write_training_summary(logs: &[ExperimentLog], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv_writer(&dir.join("summary.csv"))?;
    w.write_record([
        "seed",
        "best_step",
        "best_mean",
        "best_sem",
        "last_mean",
        "optimal_mean",
        "optimal_sem",
        "optimal_expectation",
        "hitting_ratio",
        "ruggedness",
        "first_hit",
    ])?;
    for log in logs {
        let fe = log.final_eval.as_ref();
        w.write_record([
            log.seed.to_string(),
            fe.map_or_else(String::new, |f| f.best_step.to_string()),
            opt_field(fe.map(|f| f.best.mean)),
            opt_field(fe.map(|f| f.best.sem())),
            opt_field(fe.map(|f| f.last.mean)),
            opt_field(fe.map(|f| f.optimal.mean)),
            opt_field(fe.map(|f| f.optimal.sem())),
            log.optimal.expectation.to_string(),
            opt_field(log.hitting_ratio),
            opt_field(log.ruggedness),
            log.first_hit.map_or_else(String::new, |s| s.to_string()),
        ])?;
    }
    w.flush()?;
    let mut chart = LineChart::new("Training progress", "train step", "evaluation mean");
    for log in logs {
        let pts = log.evaluations.iter().map(|r| (r.train_step as f64, r.mean)).collect();
        chart = chart.with_series(Series::new(format!("seed {}", log.seed), pts));
    }
    if let Some(log) = logs.first() {
        let last = log.evaluations.last().map_or(0.0, |r| r.train_step as f64);
        let e = log.optimal.expectation;
        chart = chart.with_series(Series::new("optimal", vec![(0.0, e), (last, e)]));
    }
    fs::write(dir.join("training.svg"), chart.render())?;
    Ok(())
}

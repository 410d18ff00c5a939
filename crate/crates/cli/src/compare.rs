//! Deviation report between an empirical run table and an SE trajectory.
//!
//! Both inputs need `theta`, `t`, `overlap` and `mse` columns, so a
//! `simulate` table, a `lifted_mc` table and an `se_trace` table all work
//! on either side. Rows are averaged over seeds within each
//! `(theta, prior, t)` group, and groups are matched by position: the two
//! grids must have the same shape, and a θ that differs between the sides
//! flags the row.

use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::error::CliError;
use crate::output::{write_json, write_table, CsvData, Table};
use crate::row;

const THETA_MATCH: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
struct Group {
    theta: f64,
    prior: String,
    t: usize,
    overlap: f64,
    mse: f64,
    count: usize,
}

fn groups(data: &CsvData) -> Result<Vec<Group>, CliError> {
    let (ct, ci, co, cm) = (
        data.column("theta")?,
        data.column("t")?,
        data.column("overlap")?,
        data.column("mse")?,
    );
    let cp = data.column("prior").ok();
    let mut out: Vec<Group> = Vec::new();
    for r in 0..data.rows.len() {
        let theta = data.number(r, ct)?;
        let t = data.number(r, ci)? as usize;
        let prior = cp.map(|c| data.rows[r][c].clone()).unwrap_or_default();
        let (ov, mse) = (data.number(r, co)?, data.number(r, cm)?);
        match out.iter_mut().find(|g| g.theta == theta && g.prior == prior && g.t == t) {
            Some(g) => {
                g.overlap += ov;
                g.mse += mse;
                g.count += 1;
            }
            None => out.push(Group {
                theta,
                prior,
                t,
                overlap: ov,
                mse,
                count: 1,
            }),
        }
    }
    for g in &mut out {
        g.overlap /= g.count as f64;
        g.mse /= g.count as f64;
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub theta_mc: f64,
    pub theta_se: f64,
    pub prior: String,
    pub t: usize,
    pub overlap_mc: f64,
    pub overlap_se: f64,
    pub overlap_dev: f64,
    pub mse_mc: f64,
    pub mse_se: f64,
    pub mse_dev: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThetaSummary {
    pub theta: f64,
    pub max_overlap_dev: f64,
    pub max_mse_dev: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub tolerance: f64,
    pub rows: Vec<CompareRow>,
    pub per_theta: Vec<ThetaSummary>,
    pub max_deviation: f64,
    pub failed_rows: usize,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        self.failed_rows == 0
    }
}

/// Compares two tables already in memory.
pub fn compare_data(mc: &CsvData, se: &CsvData, tol: f64) -> Result<CompareReport, CliError> {
    let (a, b) = (groups(mc)?, groups(se)?);
    if a.len() != b.len() {
        return Err(CliError::GridMismatch(format!(
            "{} has {} (theta, prior, t) groups, {} has {}",
            mc.path.display(),
            a.len(),
            se.path.display(),
            b.len()
        )));
    }
    let mut rows = Vec::with_capacity(a.len());
    for (x, y) in a.iter().zip(&b) {
        if x.t != y.t {
            return Err(CliError::GridMismatch(format!(
                "iteration {} at theta = {} pairs with iteration {} at theta = {}",
                x.t, x.theta, y.t, y.theta
            )));
        }
        let overlap_dev = (x.overlap - y.overlap).abs();
        let mse_dev = (x.mse - y.mse).abs();
        let same_theta = (x.theta - y.theta).abs() <= THETA_MATCH * x.theta.abs().max(1.0);
        rows.push(CompareRow {
            theta_mc: x.theta,
            theta_se: y.theta,
            prior: x.prior.clone(),
            t: x.t,
            overlap_mc: x.overlap,
            overlap_se: y.overlap,
            overlap_dev,
            mse_mc: x.mse,
            mse_se: y.mse,
            mse_dev,
            pass: same_theta && overlap_dev < tol && mse_dev < tol,
        });
    }
    let mut per_theta: Vec<ThetaSummary> = Vec::new();
    for r in &rows {
        let dev = (r.overlap_dev, r.mse_dev);
        match per_theta.iter_mut().find(|s| s.theta == r.theta_mc) {
            Some(s) => {
                s.max_overlap_dev = s.max_overlap_dev.max(dev.0);
                s.max_mse_dev = s.max_mse_dev.max(dev.1);
                s.pass &= r.pass;
            }
            None => per_theta.push(ThetaSummary {
                theta: r.theta_mc,
                max_overlap_dev: dev.0,
                max_mse_dev: dev.1,
                pass: r.pass,
            }),
        }
    }
    let max_deviation = rows.iter().map(|r| r.overlap_dev.max(r.mse_dev)).fold(0.0, f64::max);
    let failed_rows = rows.iter().filter(|r| !r.pass).count();
    Ok(CompareReport {
        tolerance: tol,
        rows,
        per_theta,
        max_deviation,
        failed_rows,
    })
}

/// Reads both files, writes `compare.csv` and `compare.json` into `out`.
pub fn compare_runs(mc: &Path, se: &Path, tol: f64, out: &Path) -> Result<CompareReport, CliError> {
    let report = compare_data(&CsvData::read(mc)?, &CsvData::read(se)?, tol)?;
    let mut table = Table::new(
        "compare",
        &[
            "theta_mc",
            "theta_se",
            "prior",
            "t",
            "overlap_mc",
            "overlap_se",
            "overlap_dev",
            "mse_mc",
            "mse_se",
            "mse_dev",
            "pass",
        ],
    );
    for r in &report.rows {
        table.push(row![
            r.theta_mc,
            r.theta_se,
            r.prior,
            r.t,
            r.overlap_mc,
            r.overlap_se,
            r.overlap_dev,
            r.mse_mc,
            r.mse_se,
            r.mse_dev,
            r.pass
        ]);
    }
    write_table(out, &table, None)?;
    write_json(
        &out.join("compare.json"),
        &json!({
            "mc": mc,
            "se": se,
            "tolerance": tol,
            "max_deviation": report.max_deviation,
            "failed_rows": report.failed_rows,
            "per_theta": report.per_theta,
            "passed": report.passed(),
        }),
    )?;
    Ok(report)
}

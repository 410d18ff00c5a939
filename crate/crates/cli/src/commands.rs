//! One runner per experiment command. Jobs (θ × prior × seed) run on the
//! rayon pool; tables keep the configured order.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use spiked_oamp::engine::{
    lifted_moments, lifted_se, run_lifted_oamp, run_oamp, run_pca, DenoiserBackend, NoiseMode, OampOptions,
    RunMetrics, SpikedModel, DENSE_LIMIT,
};
use spiked_oamp::priors::Prior;
use spiked_oamp::spectral::{NoiseSpectrum, PhiContext};
use spiked_oamp::state_evolution::{
    fixed_point, pca_asymptotics, replica_residual, run_se, scan_landscape, Regime, SEParams,
};

use crate::config::{Command, ExperimentConfig};
use crate::error::CliError;
use crate::output::{write_json, write_table, Table};
use crate::row;

/// Columns shared by `simulate` and `lifted` Monte-Carlo tables.
pub const RUN_COLUMNS: &[&str] = &[
    "theta", "prior", "seed", "t", "overlap", "inner", "norm", "mse", "est_overlap", "se_overlap", "se_mse", "rho",
    "cg_iters", "cg_residual",
];

/// Columns of the state-evolution trajectory table.
pub const SE_TRACE_COLUMNS: &[&str] = &["theta", "prior", "t", "omega", "rho", "overlap", "mse"];

/// What a command produced.
#[derive(Debug)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub summary: Value,
    /// Set when the run completed but a built-in check failed.
    pub failure: Option<String>,
}

fn label(cmd: Command, theta: f64, prior: Option<&Prior>, seed: Option<u64>) -> String {
    let mut s = format!("{cmd} at theta = {theta}");
    if let Some(p) = prior {
        s.push_str(&format!(", prior {}", p.name()));
    }
    if let Some(seed) = seed {
        s.push_str(&format!(", seed {seed}"));
    }
    s
}

fn grid<'a>(thetas: &[f64], priors: &'a [Prior]) -> Vec<(f64, &'a Prior)> {
    thetas.iter().flat_map(|&t| priors.iter().map(move |p| (t, p))).collect()
}

fn grid_seeds<'a>(thetas: &[f64], priors: &'a [Prior], seeds: &[u64]) -> Vec<(f64, &'a Prior, u64)> {
    grid(thetas, priors)
        .into_iter()
        .flat_map(|(t, p)| seeds.iter().map(move |&s| (t, p, s)))
        .collect()
}

fn params(cmd: Command, spec: &NoiseSpectrum, theta: f64, prior: &Prior) -> Result<SEParams, CliError> {
    let ctx = PhiContext::new(spec.clone(), theta).map_err(CliError::engine(label(cmd, theta, Some(prior), None)))?;
    SEParams::new(prior.clone(), ctx).map_err(CliError::engine(label(cmd, theta, Some(prior), None)))
}

fn noise_mode(cfg: &ExperimentConfig) -> NoiseMode {
    if cfg.noise == "dense" {
        NoiseMode::Dense
    } else {
        NoiseMode::Structured
    }
}

fn run_rows(theta: f64, prior: &Prior, m: &RunMetrics) -> Vec<Vec<String>> {
    m.steps
        .iter()
        .map(|s| {
            row![
                theta,
                prior.name(),
                m.seed,
                s.t,
                s.overlap,
                s.inner,
                s.norm,
                s.mse,
                s.est_overlap,
                s.se_overlap,
                s.se_mse,
                s.rho,
                s.cg_iters,
                s.cg_residual
            ]
        })
        .collect()
}

/// Validates, runs and writes every output of `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let out = cfg.output.as_path();
    let outcome = match cfg.command {
        Command::Se => se(cfg)?,
        Command::Simulate => simulate(cfg, out)?,
        Command::Landscape => landscape(cfg)?,
        Command::ReplicaCheck => replica_check(cfg)?,
        Command::Pca => pca(cfg)?,
        Command::SpectrumDump => spectrum_dump(cfg)?,
        Command::Lifted => lifted(cfg)?,
    };
    for t in &outcome.tables {
        write_table(out, t, Some(cfg))?;
    }
    write_json(
        &out.join("summary.json"),
        &json!({
            "command": cfg.command.as_str(),
            "config": cfg,
            "results": outcome.summary,
            "passed": outcome.failure.is_none(),
        }),
    )?;
    Ok(outcome)
}

fn collect<T: Send>(results: Vec<Result<T, CliError>>) -> Result<Vec<T>, CliError> {
    results.into_iter().collect()
}

fn se(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = cfg.spectrum()?;
    let priors = cfg.priors()?;
    let tol = &cfg.tolerances;
    let jobs = grid(&cfg.thetas(), &priors);
    let results = collect(
        jobs.par_iter()
            .map(|&(theta, prior)| {
                let ctx = label(Command::Se, theta, Some(prior), None);
                let p = params(Command::Se, &spec, theta, prior)?;
                let fp = fixed_point(&p, tol.se, tol.max_iter).map_err(CliError::engine(&ctx))?;
                let tr = run_se(&p, cfg.t).map_err(CliError::engine(&ctx))?;
                Ok((theta, prior, p.regime(), fp, tr))
            })
            .collect(),
    )?;

    let mut points = Table::new(
        "se",
        &["theta", "prior", "regime", "omega_star", "rho_star", "mmse_star", "overlap_star", "iterations"],
    );
    let mut trace = Table::new("se_trace", SE_TRACE_COLUMNS);
    let mut summary = Vec::new();
    for (theta, prior, regime, fp, tr) in results {
        let regime = serde_json::to_value(regime).unwrap_or(Value::Null);
        let regime_str = regime.as_str().unwrap_or_default().to_string();
        points.push(row![
            theta,
            prior.name(),
            regime_str,
            fp.omega_star,
            fp.rho_star,
            fp.mmse_star,
            fp.omega_star.sqrt(),
            fp.iterations
        ]);
        for t in 0..tr.len() {
            let w = tr.omegas[t];
            trace.push(row![theta, prior.name(), t + 1, w, tr.rhos[t], w.sqrt(), tr.mmse_curve[t]]);
        }
        summary.push(json!({
            "theta": theta,
            "prior": prior.name(),
            "regime": regime,
            "fixed_point": fp,
        }));
    }
    Ok(Outcome {
        tables: vec![points, trace],
        summary: Value::Array(summary),
        failure: None,
    })
}

#[derive(Serialize)]
struct SimSummary {
    theta: f64,
    prior: String,
    seed: u64,
    final_overlap: f64,
    final_mse: f64,
    se_overlap: f64,
    pca_overlap: f64,
    pca_limit_overlap: f64,
    max_overlap_dev: f64,
    max_mse_dev: f64,
    max_norm_dev: f64,
}

fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let spec = cfg.spectrum()?;
    let priors = cfg.priors()?;
    let backend = DenoiserBackend::Cg {
        tol: cfg.tolerances.cg,
        max_iter: 5000,
    };
    let opts = OampOptions {
        backend,
        record_iterates: false,
    };
    let jobs = grid_seeds(&cfg.thetas(), &priors, &cfg.seeds);
    let results = collect(
        jobs.par_iter()
            .enumerate()
            .map(|(idx, &(theta, prior, seed))| {
                let err = CliError::engine(label(Command::Simulate, theta, Some(prior), Some(seed)));
                let run = (|| {
                    let ctx = PhiContext::new(spec.clone(), theta)?;
                    let model = SpikedModel::sample(prior, &spec, theta, cfg.n, seed, noise_mode(cfg), DENSE_LIMIT)?;
                    let m = run_oamp(&model, prior, &ctx, cfg.t, opts)?;
                    let p = run_pca(&model, cfg.pca_iters)?;
                    Ok((m, p, pca_asymptotics(&ctx)))
                })();
                let (m, p, lim) = run.map_err(err)?;
                let mut table = Table::new(format!("runs/simulate_{idx:04}"), RUN_COLUMNS);
                for r in run_rows(theta, prior, &m) {
                    table.push(r);
                }
                write_table(out, &table, Some(cfg))?;
                let last = m.steps.last().expect("t ≥ 1");
                let fold = |f: &dyn Fn(&spiked_oamp::engine::StepMetrics) -> f64| {
                    m.steps.iter().map(f).fold(0.0f64, f64::max)
                };
                let s = SimSummary {
                    theta,
                    prior: prior.name().to_string(),
                    seed,
                    final_overlap: last.overlap,
                    final_mse: last.mse,
                    se_overlap: last.se_overlap,
                    pca_overlap: p.overlap_sq.sqrt(),
                    pca_limit_overlap: lim.overlap_sq.sqrt(),
                    max_overlap_dev: fold(&|s| (s.overlap - s.se_overlap).abs()),
                    max_mse_dev: fold(&|s| (s.mse - s.se_mse).abs()),
                    max_norm_dev: fold(&|s| (s.norm - 1.0).abs()),
                };
                Ok((table, s))
            })
            .collect(),
    )?;
    let mut all = Table::new("simulate", RUN_COLUMNS);
    let mut summary = Table::new(
        "simulate_summary",
        &["theta", "prior", "seed", "final_overlap", "final_mse", "se_overlap", "pca_overlap", "pca_limit_overlap"],
    );
    let mut json_rows = Vec::new();
    for (t, s) in results {
        all.extend(t);
        summary.push(row![
            s.theta,
            s.prior,
            s.seed,
            s.final_overlap,
            s.final_mse,
            s.se_overlap,
            s.pca_overlap,
            s.pca_limit_overlap
        ]);
        json_rows.push(s);
    }
    Ok(Outcome {
        tables: vec![all, summary],
        summary: serde_json::to_value(json_rows).unwrap_or(Value::Null),
        failure: None,
    })
}

fn landscape(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = cfg.spectrum()?;
    let priors = cfg.priors()?;
    let jobs = grid(&cfg.thetas(), &priors);
    let results = collect(
        jobs.par_iter()
            .map(|&(theta, prior)| {
                let p = params(Command::Landscape, &spec, theta, prior)?;
                let l = scan_landscape(&p, cfg.grid)
                    .map_err(CliError::engine(label(Command::Landscape, theta, Some(prior), None)))?;
                Ok((theta, prior, l))
            })
            .collect(),
    )?;
    let mut curve = Table::new("landscape", &["theta", "prior", "omega", "f1f2"]);
    let mut fixed = Table::new("fixed_points", &["theta", "prior", "omega", "slope", "stable", "reachable"]);
    let mut summary = Vec::new();
    for (theta, prior, l) in results {
        for &(w, v) in &l.points {
            curve.push(row![theta, prior.name(), w, v]);
        }
        for f in &l.fixed_points {
            fixed.push(row![theta, prior.name(), f.omega, f.slope, f.stable, f.reachable]);
        }
        summary.push(json!({
            "theta": theta,
            "prior": prior.name(),
            "fixed_points": l.fixed_points,
            "n_fixed_points": l.fixed_points.len(),
            "n_stable": l.n_stable(),
        }));
    }
    Ok(Outcome {
        tables: vec![curve, fixed],
        summary: Value::Array(summary),
        failure: None,
    })
}

fn replica_check(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = cfg.spectrum()?;
    let priors = cfg.priors()?;
    let tol = &cfg.tolerances;
    let jobs = grid(&cfg.thetas(), &priors);
    let results = collect(
        jobs.par_iter()
            .map(|&(theta, prior)| {
                let ctx = label(Command::ReplicaCheck, theta, Some(prior), None);
                let p = params(Command::ReplicaCheck, &spec, theta, prior)?;
                let fp = fixed_point(&p, tol.se, tol.max_iter).map_err(CliError::engine(&ctx))?;
                let interior = p.regime() == Regime::Typical && fp.omega_star > 0.0 && fp.omega_star < 1.0;
                let residuals = if interior {
                    Some(replica_residual(&p, fp.omega_star, fp.rho_star).map_err(CliError::engine(&ctx))?.residuals)
                } else {
                    None
                };
                Ok((theta, prior, fp, residuals))
            })
            .collect(),
    )?;
    let mut table = Table::new(
        "replica_check",
        &[
            "theta",
            "prior",
            "omega_star",
            "rho_star",
            "res_overlap",
            "res_d0",
            "res_chi",
            "res_mhat",
            "max_residual",
            "status",
        ],
    );
    let mut summary = Vec::new();
    let mut failed = Vec::new();
    for (theta, prior, fp, res) in results {
        let (r, max, status) = match res {
            Some(r) => {
                let max = r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                let ok = max < tol.replica;
                if !ok {
                    failed.push(format!("theta = {theta}, prior {}: {max:e}", prior.name()));
                }
                (r, max, if ok { "pass" } else { "fail" })
            }
            None => ([f64::NAN; 4], f64::NAN, "skipped"),
        };
        table.push(row![theta, prior.name(), fp.omega_star, fp.rho_star, r[0], r[1], r[2], r[3], max, status]);
        summary.push(json!({
            "theta": theta,
            "prior": prior.name(),
            "omega_star": fp.omega_star,
            "max_residual": max,
            "status": status,
        }));
    }
    let failure = (!failed.is_empty()).then(|| {
        format!("replica residuals above {:e} at {}", tol.replica, failed.join("; "))
    });
    Ok(Outcome {
        tables: vec![table],
        summary: Value::Array(summary),
        failure,
    })
}

fn pca(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = cfg.spectrum()?;
    let priors = cfg.priors()?;
    let jobs = grid_seeds(&cfg.thetas(), &priors, &cfg.seeds);
    let results = collect(
        jobs.par_iter()
            .map(|&(theta, prior, seed)| {
                let run = (|| {
                    let ctx = PhiContext::new(spec.clone(), theta)?;
                    let model = SpikedModel::sample(prior, &spec, theta, cfg.n, seed, noise_mode(cfg), DENSE_LIMIT)?;
                    Ok((run_pca(&model, cfg.pca_iters)?, pca_asymptotics(&ctx)))
                })();
                let (p, lim) = run.map_err(CliError::engine(label(Command::Pca, theta, Some(prior), Some(seed))))?;
                Ok((theta, prior, seed, p, lim))
            })
            .collect(),
    )?;
    let mut table = Table::new(
        "pca",
        &["theta", "prior", "seed", "top_eig", "overlap_sq", "limit_top_eig", "limit_overlap_sq"],
    );
    let mut summary = Vec::new();
    for (theta, prior, seed, p, lim) in results {
        let edge = spec.support().1;
        let limit_eig = lim.lambda_c.unwrap_or(edge);
        table.push(row![theta, prior.name(), seed, p.top_eig, p.overlap_sq, limit_eig, lim.overlap_sq]);
        summary.push(json!({
            "theta": theta,
            "prior": prior.name(),
            "seed": seed,
            "empirical": p,
            "limit": lim,
        }));
    }
    Ok(Outcome {
        tables: vec![table],
        summary: Value::Array(summary),
        failure: None,
    })
}

/// Uniform grid over the support plus margins that reach past any outlier,
/// with both support edges landing exactly on grid points.
fn dump_grid(spec: &NoiseSpectrum, outlier: Option<f64>, points: usize) -> Vec<f64> {
    let (lo, hi) = spec.support();
    let w = hi - lo;
    let right = (outlier.unwrap_or(hi) - hi).max(0.0) + 0.05 * w;
    let left = 0.05 * w;
    let intervals = points - 1;
    let h0 = (w + left + right) / intervals as f64;
    let inside = ((w / h0).round() as usize).clamp(1, intervals);
    let h = w / inside as f64;
    let n_left = ((left / h).round() as usize).min(intervals - inside);
    (0..points)
        .map(|i| {
            let k = i as isize - n_left as isize;
            if k as usize == inside {
                hi
            } else {
                lo + k as f64 * h
            }
        })
        .collect()
}

/// Trapezoid integral of `ys` over `xs`.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2).zip(ys.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

fn spectrum_dump(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = cfg.spectrum()?;
    let thetas = cfg.thetas();
    let results = collect(
        thetas
            .par_iter()
            .map(|&theta| {
                let ctx = PhiContext::new(spec.clone(), theta)
                    .map_err(CliError::engine(label(Command::SpectrumDump, theta, None, None)))?;
                let outlier = ctx.outlier();
                let xs = dump_grid(&spec, outlier.map(|o| o.location), cfg.grid);
                let (lo, hi) = spec.support();
                let mut table = Table::new(
                    format!("spectrum_theta{theta}"),
                    &["kind", "lambda", "mu_density", "phi", "phi_poly", "nu_ac_density", "atom_weight"],
                );
                let mut nu_ac = Vec::with_capacity(xs.len());
                for &x in &xs {
                    let mu = spec.density(x);
                    let phi = ctx.phi(x);
                    let nu = if x > lo && x < hi && mu > 0.0 { mu / phi } else { 0.0 };
                    let poly = ctx.phi_poly(x).unwrap_or(f64::NAN);
                    nu_ac.push(nu);
                    table.push(row!["grid", x, mu, phi, poly, nu, 0.0]);
                }
                if let Some(o) = outlier {
                    let poly = ctx.phi_poly(o.location).unwrap_or(f64::NAN);
                    table.push(row!["atom", o.location, 0.0, ctx.phi(o.location), poly, 0.0, o.weight]);
                }
                let ac_mass = trapezoid(&xs, &nu_ac);
                let atom = outlier.map_or(0.0, |o| o.weight);
                let summary = json!({
                    "theta": theta,
                    "theta_c": ctx.theta_c(),
                    "support": [lo, hi],
                    "outlier": outlier.map(|o| json!({"location": o.location, "weight": o.weight})),
                    "nu_ac_mass_trapezoid": ac_mass,
                    "nu_total_mass_trapezoid": ac_mass + atom,
                });
                Ok((table, summary))
            })
            .collect(),
    )?;
    let (tables, summary): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(Outcome {
        tables,
        summary: Value::Array(summary),
        failure: None,
    })
}

fn lifted(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = cfg.spectrum()?;
    let priors = cfg.priors()?;
    let jobs = grid(&cfg.thetas(), &priors);
    let se_results = collect(
        jobs.par_iter()
            .map(|&(theta, prior)| {
                let ctx = label(Command::Lifted, theta, Some(prior), None);
                let p = params(Command::Lifted, &spec, theta, prior)?;
                let opt = run_se(&p, cfg.t).map_err(CliError::engine(&ctx))?;
                let nu = p.ctx.nu_measure().map_err(CliError::engine(&ctx))?;
                let mut per_degree = Vec::with_capacity(cfg.degree);
                for d in 1..=cfg.degree {
                    let mom = lifted_moments(&p.ctx, &nu, d).map_err(CliError::engine(&ctx))?;
                    per_degree.push(lifted_se(&mom, prior, cfg.t).map_err(CliError::engine(&ctx))?);
                }
                Ok((theta, prior, opt, per_degree))
            })
            .collect(),
    )?;
    let mut table = Table::new("lifted_se", &["theta", "prior", "degree", "t", "omega", "omega_opt", "gap"]);
    let mut summary = Vec::new();
    for (theta, prior, opt, per_degree) in &se_results {
        let mut warnings = Vec::new();
        for lse in per_degree {
            for st in &lse.steps {
                let w_opt = opt.omegas[st.t - 1];
                table.push(row![theta, prior.name(), lse.degree, st.t, st.omega, w_opt, w_opt - st.omega]);
            }
            warnings.extend(lse.warnings.iter().map(|w| format!("D = {}: {w}", lse.degree)));
        }
        let last = per_degree.last().expect("degree ≥ 1");
        let gap = last
            .steps
            .iter()
            .map(|s| (opt.omegas[s.t - 1] - s.omega).abs())
            .fold(0.0f64, f64::max);
        summary.push(json!({
            "theta": theta,
            "prior": prior.name(),
            "max_degree": cfg.degree,
            "max_gap_at_max_degree": gap,
            "warnings": warnings,
        }));
    }

    let mut tables = vec![table];
    if !cfg.seeds.is_empty() {
        let mc_jobs = grid_seeds(&cfg.thetas(), &priors, &cfg.seeds);
        let runs = collect(
            mc_jobs
                .par_iter()
                .map(|&(theta, prior, seed)| {
                    let run = (|| {
                        let ctx = PhiContext::new(spec.clone(), theta)?;
                        let model =
                            SpikedModel::sample(prior, &spec, theta, cfg.n, seed, noise_mode(cfg), DENSE_LIMIT)?;
                        run_lifted_oamp(&model, prior, &ctx, cfg.degree, cfg.t)
                    })();
                    let (m, _) =
                        run.map_err(CliError::engine(label(Command::Lifted, theta, Some(prior), Some(seed))))?;
                    Ok(run_rows(theta, prior, &m))
                })
                .collect(),
        )?;
        let mut mc = Table::new("lifted_mc", RUN_COLUMNS);
        for rows in runs {
            for r in rows {
                mc.push(r);
            }
        }
        tables.push(mc);
    }
    Ok(Outcome {
        tables,
        summary: Value::Array(summary),
        failure: None,
    })
}

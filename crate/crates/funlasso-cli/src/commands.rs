//! Subcommand implementations.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde_json::json;

use funlasso::covariance;
use funlasso::data::{self, EnergyConfig};
use funlasso::debias::{self, DebiasOptions};
use funlasso::hilbert::{Coefficient, Dataset};
use funlasso::selection::{self, SelectionReport};
use funlasso::simulate::{simulate as generate, SimConfig};
use funlasso::solver::{self, FitResult, PathOptions, PathResult, SolverOptions};

use crate::report::RunReport;
use crate::{Cli, EnergyArgs, FitArgs, GridArgs, MonteCarloArgs, PathArgs, SelectRule, SimulateArgs};

/// Step budget for the ridge fits inside rho cross-validation; the final
/// debias fit runs with the full default budget.
const DEBIAS_CV_STEPS: usize = 5_000;

fn sim_block_names() -> Vec<String> {
    (1..=7).map(|j| format!("x{j}")).collect()
}

fn rule_name(rule: SelectRule) -> &'static str {
    match rule {
        SelectRule::Cv => "cv",
        SelectRule::Sigma => "sigma",
        SelectRule::Bic => "bic",
    }
}

fn path_options(cli: &Cli, grid: &GridArgs, data: &Dataset<f64>) -> Result<PathOptions<f64>> {
    let rmax = solver::r_max(data).context("computing r_max")?;
    Ok(PathOptions {
        delta: grid.delta,
        n_r: grid.n_r,
        solver: SolverOptions {
            tol: cli.tol,
            max_iter: cli.max_iter,
            kkt_tol: Some(grid.kkt_tol_factor * rmax),
        },
    })
}

fn one_based(support: &BTreeSet<usize>) -> Vec<usize> {
    support.iter().map(|&j| j + 1).collect()
}

fn support_string(support: &BTreeSet<usize>) -> String {
    support
        .iter()
        .map(|&j| (j + 1).to_string())
        .collect::<Vec<_>>()
        .join("+")
}

fn write_norms_csv(path: &Path, result: &PathResult<f64>) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "r,block,norm,converged")?;
    for (k, norms) in result.per_r_block_norms.iter().enumerate() {
        for (j, &norm) in norms.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{}",
                result.grid[k],
                j + 1,
                norm,
                result.fits[k].converged
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Fit at an arbitrary penalty scale, reusing the path fit when the value
/// lies on the grid and warm-starting from the nearest larger grid value
/// otherwise.
fn fit_at(
    data: &Dataset<f64>,
    path: &PathResult<f64>,
    r: f64,
    opts: &SolverOptions<f64>,
) -> Result<FitResult<f64>> {
    if let Some(k) = path.grid.iter().position(|&g| g == r) {
        return Ok(path.fits[k].clone());
    }
    let warm_idx = path
        .grid
        .iter()
        .rposition(|&g| g > r)
        .unwrap_or(0);
    let weights = solver::penalty_weights(data, r)?;
    Ok(solver::gpd_fit(data, &weights, &path.fits[warm_idx].beta, opts)?)
}

fn select_r(
    rule: SelectRule,
    data: &Dataset<f64>,
    path: &PathResult<f64>,
    alpha: f64,
    folds: usize,
    opts: &SolverOptions<f64>,
) -> Result<SelectionReport<f64>> {
    Ok(match rule {
        SelectRule::Sigma => selection::select_r_sigma(data, path, alpha)?,
        SelectRule::Cv => selection::select_r_cv(data, &path.grid, folds, opts)?,
        SelectRule::Bic => selection::select_r_bic(data, path)?,
    })
}

fn error_summary(
    estimate: &Coefficient<f64>,
    truth: &Coefficient<f64>,
) -> Result<serde_json::Value> {
    let mut diff = estimate.clone();
    diff.add_scaled(-1.0, truth)
        .map_err(|e| anyhow::anyhow!("truth space mismatch: {e}"))?;
    Ok(json!({
        "total": diff.norm(),
        "per_block": diff.block_norms(),
    }))
}

pub fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let mut report = RunReport::new(
        "simulate",
        json!({
            "example": args.example,
            "n": args.n,
            "sigma": args.sigma,
            "grid_size": args.grid_size,
            "stem": args.stem,
        }),
        cli.seed,
    );
    let config = SimConfig {
        example: args.example,
        n: args.n,
        sigma: args.sigma,
        grid_size: args.grid_size,
        seed: cli.seed,
    };
    let sim = report.time("simulate", || generate(&config))?;
    let names = sim_block_names();
    fs::create_dir_all(&cli.out_dir)?;
    let manifest = data::save_dataset(&sim.dataset, &names, &cli.out_dir, &args.stem)?;
    report.add_output(&manifest);
    report.add_output(&cli.out_dir.join(format!("{}.csv", args.stem)));
    let truth_path = cli.out_dir.join(format!("{}_truth.csv", args.stem));
    data::save_coefficient(&sim.true_beta, &names, &truth_path)?;
    report.add_output(&truth_path);
    report.summary = json!({
        "n": sim.dataset.n(),
        "p": sim.dataset.n_blocks(),
        "support": one_based(&sim.support),
    });
    report.write(&cli.out_dir, &args.stem)?;
    Ok(())
}

pub fn path(cli: &Cli, args: &PathArgs) -> Result<()> {
    let mut report = RunReport::new(
        "path",
        json!({
            "data": args.data.display().to_string(),
            "project": args.project,
            "n_r": args.grid.n_r,
            "delta": args.grid.delta,
            "kkt_tol_factor": args.grid.kkt_tol_factor,
        }),
        cli.seed,
    );
    let (raw, _names) = data::load_dataset::<f64>(&args.data)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let data = report.time("prepare", || raw.prepare())?;
    let opts = path_options(cli, &args.grid, &data)?;
    let result = match args.project {
        None => report.time("path", || solver::fit_path(&data, &opts))?,
        Some(m) => {
            let basis = report.time("pca", || {
                covariance::pca_basis(&data, covariance::DEFAULT_TOL_RANK)
            })?;
            report.time("path", || solver::fit_path_projected(&data, &basis, m, &opts))?
        }
    };
    fs::create_dir_all(&cli.out_dir)?;
    let csv_path = cli.out_dir.join(format!("{}.csv", args.stem));
    write_norms_csv(&csv_path, &result)?;
    report.add_output(&csv_path);
    report.summary = json!({
        "r_max": result.grid[0],
        "grid_len": result.grid.len(),
        "converged": result.fits.iter().filter(|f| f.converged).count(),
        "r_min_feasible": result.r_min_feasible(),
    });
    report.write(&cli.out_dir, &args.stem)?;
    Ok(())
}

pub fn fit(cli: &Cli, args: &FitArgs) -> Result<()> {
    let mut report = RunReport::new(
        "fit",
        json!({
            "data": args.data.display().to_string(),
            "select": rule_name(args.select),
            "project": args.project,
            "debias": args.debias,
            "kappa": args.kappa,
            "alpha": args.alpha,
            "folds": args.folds,
            "n_r": args.grid.n_r,
            "delta": args.grid.delta,
            "kkt_tol_factor": args.grid.kkt_tol_factor,
            "tol": cli.tol,
            "max_iter": cli.max_iter,
        }),
        cli.seed,
    );
    let (raw, names) = data::load_dataset::<f64>(&args.data)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let truth = args
        .truth
        .as_ref()
        .map(|p| data::load_coefficient::<f64>(raw.space(), &names, p))
        .transpose()
        .context("loading truth coefficient")?;
    let data = report.time("prepare", || raw.prepare())?;
    let opts = path_options(cli, &args.grid, &data)?;
    let path = report.time("path", || solver::fit_path(&data, &opts))?;

    let selection_report = report.time("select_r", || {
        select_r(args.select, &data, &path, args.alpha, args.folds, &opts.solver)
    })?;
    let chosen_r = selection_report.chosen_r;
    let plain = report.time("refit", || fit_at(&data, &path, chosen_r, &opts.solver))?;

    fs::create_dir_all(&cli.out_dir)?;
    let beta_path = cli.out_dir.join(format!("{}_beta.csv", args.stem));
    data::save_coefficient(&plain.beta, &names, &beta_path)?;
    report.add_output(&beta_path);

    // Noise variance: reported by the sigma rule, needed by projection.
    let sigma2 = match selection_report.sigma_hat2 {
        Some(s2) => Some(s2),
        None => selection::estimate_noise_variance(&path, &data).ok(),
    };

    let mut projected: Option<(usize, FitResult<f64>)> = None;
    if let Some(spec) = &args.project {
        let basis = report.time("pca", || {
            covariance::pca_basis(&data, covariance::DEFAULT_TOL_RANK)
        })?;
        let weights = solver::penalty_weights(&data, chosen_r)?;
        let m = if spec == "auto" {
            let s2 = sigma2
                .ok_or_else(|| anyhow::anyhow!("dimension selection needs a noise variance"))?;
            report
                .time("select_dimension", || {
                    selection::select_dimension(&data, &basis, &weights, args.kappa, s2, &opts.solver)
                })?
                .chosen_m
        } else {
            spec.parse::<usize>()
                .with_context(|| format!("--project must be 'auto' or a dimension, got '{spec}'"))?
        };
        let fit = report.time("projected_fit", || {
            solver::gpd_fit_projected(&data, &basis, m, &weights, &opts.solver)
        })?;
        let proj_path = cli.out_dir.join(format!("{}_beta_projected.csv", args.stem));
        data::save_coefficient(&fit.beta, &names, &proj_path)?;
        report.add_output(&proj_path);
        projected = Some((m, fit));
    }

    let mut debiased: Option<debias::DebiasResult<f64>> = None;
    if args.debias {
        let (support, init) = match &projected {
            Some((_, fit)) => (fit.support.clone(), fit.beta.clone()),
            None => (plain.support.clone(), plain.beta.clone()),
        };
        let grid = debias::default_rho_grid::<f64>();
        let cv_opts = DebiasOptions { max_steps: DEBIAS_CV_STEPS, ..DebiasOptions::default() };
        let rho = report.time("select_rho", || {
            debias::select_rho_cv(&data, &support, &grid, args.folds, &init, &cv_opts)
        })?;
        let result = report.time("debias", || {
            debias::tikhonov_fit(&data, &support, rho, &init, &DebiasOptions::default())
        })?;
        let debias_path = cli.out_dir.join(format!("{}_beta_debiased.csv", args.stem));
        data::save_coefficient(&result.beta_tilde, &names, &debias_path)?;
        report.add_output(&debias_path);
        debiased = Some(result);
    }

    let mut summary = json!({
        "r_max": path.grid[0],
        "chosen_r": chosen_r,
        "sigma_hat2": sigma2,
        "support": one_based(&plain.support),
        "support_names": data::support_labels(&plain.support, &names),
        "converged": plain.converged,
        "kkt_gap": plain.kkt_gap,
        "score_table_len": selection_report.score_table.len(),
    });
    if let Some((m, fit)) = &projected {
        summary["projected"] = json!({
            "m": m,
            "support": one_based(&fit.support),
            "converged": fit.converged,
        });
    }
    if let Some(d) = &debiased {
        summary["debias"] = json!({
            "rho": d.rho,
            "n_steps": d.n_steps,
            "gradient_norm": d.gradient_norm,
        });
    }
    if let Some(truth) = &truth {
        let mut errors = json!({ "plain": error_summary(&plain.beta, truth)? });
        if let Some((_, fit)) = &projected {
            errors["projected"] = error_summary(&fit.beta, truth)?;
        }
        if let Some(d) = &debiased {
            errors["debiased"] = error_summary(&d.beta_tilde, truth)?;
        }
        summary["errors"] = errors;
    }
    report.summary = summary;
    report.write(&cli.out_dir, &args.stem)?;
    Ok(())
}

struct RepRecord {
    rep: usize,
    seed: u64,
    chosen_r: f64,
    support: BTreeSet<usize>,
    exact: bool,
    chosen_m: Option<usize>,
    support_projected: Option<BTreeSet<usize>>,
    exact_projected: Option<bool>,
    error: Option<String>,
}

fn montecarlo_rep(
    cli: &Cli,
    args: &MonteCarloArgs,
    rep: usize,
    expected: &BTreeSet<usize>,
) -> Result<RepRecord> {
    let seed = cli.seed + rep as u64;
    let sim = generate(&SimConfig {
        example: args.example,
        n: args.n,
        sigma: args.sigma,
        grid_size: args.grid_size,
        seed,
    })?;
    let data = sim.dataset.prepare()?;
    let opts = path_options(cli, &args.grid, &data)?;
    let path = solver::fit_path(&data, &opts)?;
    let selection_report = select_r(args.select, &data, &path, args.alpha, args.folds, &opts.solver)?;
    let chosen_r = selection_report.chosen_r;
    let plain = fit_at(&data, &path, chosen_r, &opts.solver)?;

    let (chosen_m, support_projected, exact_projected) = if args.project {
        let basis = covariance::pca_basis(&data, covariance::DEFAULT_TOL_RANK)?;
        let sigma2 = match selection_report.sigma_hat2 {
            Some(s2) => s2,
            None => selection::estimate_noise_variance(&path, &data)?,
        };
        let weights = solver::penalty_weights(&data, chosen_r)?;
        let sel =
            selection::select_dimension(&data, &basis, &weights, args.kappa, sigma2, &opts.solver)?;
        let fit = solver::gpd_fit_projected(&data, &basis, sel.chosen_m, &weights, &opts.solver)?;
        let exact = fit.support == *expected;
        (Some(sel.chosen_m), Some(fit.support), Some(exact))
    } else {
        (None, None, None)
    };

    Ok(RepRecord {
        rep,
        seed,
        chosen_r,
        exact: plain.support == *expected,
        support: plain.support,
        chosen_m,
        support_projected,
        exact_projected,
        error: None,
    })
}

pub fn montecarlo(cli: &Cli, args: &MonteCarloArgs) -> Result<()> {
    if args.reps == 0 {
        bail!("--reps must be positive");
    }
    let expected: BTreeSet<usize> = match args.example {
        1 => [0].into_iter().collect(),
        2 => [0, 3, 6].into_iter().collect(),
        other => bail!("example must be 1 or 2, got {other}"),
    };
    let mut report = RunReport::new(
        "montecarlo",
        json!({
            "reps": args.reps,
            "example": args.example,
            "select": rule_name(args.select),
            "project": args.project,
            "n": args.n,
            "sigma": args.sigma,
            "grid_size": args.grid_size,
            "kappa": args.kappa,
            "alpha": args.alpha,
            "folds": args.folds,
            "n_r": args.grid.n_r,
            "delta": args.grid.delta,
            "kkt_tol_factor": args.grid.kkt_tol_factor,
        }),
        cli.seed,
    );

    // Replications are independent; failures are recorded, not fatal.
    let records: Vec<RepRecord> = report.time("replications", || {
        (0..args.reps)
            .into_par_iter()
            .map(|rep| {
                montecarlo_rep(cli, args, rep, &expected).unwrap_or_else(|e| RepRecord {
                    rep,
                    seed: cli.seed + rep as u64,
                    chosen_r: f64::NAN,
                    support: BTreeSet::new(),
                    exact: false,
                    chosen_m: None,
                    support_projected: None,
                    exact_projected: None,
                    error: Some(format!("{e:#}")),
                })
            })
            .collect()
    });

    fs::create_dir_all(&cli.out_dir)?;
    let reps_path = cli.out_dir.join(format!("{}_reps.csv", args.stem));
    {
        let mut out = std::io::BufWriter::new(fs::File::create(&reps_path)?);
        writeln!(
            out,
            "rep,seed,chosen_r,support,exact,chosen_m,support_projected,exact_projected,error"
        )?;
        for r in &records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.rep,
                r.seed,
                r.chosen_r,
                support_string(&r.support),
                r.exact,
                r.chosen_m.map_or(String::new(), |m| m.to_string()),
                r.support_projected.as_ref().map_or(String::new(), support_string),
                r.exact_projected.map_or(String::new(), |b| b.to_string()),
                r.error.as_deref().unwrap_or(""),
            )?;
        }
    }
    report.add_output(&reps_path);

    let failures = records.iter().filter(|r| r.error.is_some()).count();
    let exact = records.iter().filter(|r| r.exact).count();
    let pct = 100.0 * exact as f64 / args.reps as f64;
    let summary_path = cli.out_dir.join(format!("{}_summary.csv", args.stem));
    {
        let mut out = std::io::BufWriter::new(fs::File::create(&summary_path)?);
        writeln!(out, "estimator,reps,failures,exact_count,recovery_pct")?;
        writeln!(out, "plain,{},{failures},{exact},{pct}", args.reps)?;
        if args.project {
            let exact_proj =
                records.iter().filter(|r| r.exact_projected == Some(true)).count();
            let pct_proj = 100.0 * exact_proj as f64 / args.reps as f64;
            writeln!(out, "projected,{},{failures},{exact_proj},{pct_proj}", args.reps)?;
        }
    }
    report.add_output(&summary_path);

    let mut summary = json!({
        "expected_support": one_based(&expected),
        "failures": failures,
        "recovery_pct": pct,
    });
    if args.project {
        let exact_proj = records.iter().filter(|r| r.exact_projected == Some(true)).count();
        summary["recovery_pct_projected"] = json!(100.0 * exact_proj as f64 / args.reps as f64);
    }
    report.summary = summary;
    report.write(&cli.out_dir, &args.stem)?;
    Ok(())
}

pub fn energy(cli: &Cli, args: &EnergyArgs) -> Result<()> {
    let mut report = RunReport::new(
        "energy",
        json!({
            "raw": args.raw.display().to_string(),
            "samples_per_day": args.samples_per_day,
            "alpha": args.alpha,
            "n_r": args.grid.n_r,
            "delta": args.grid.delta,
            "kkt_tol_factor": args.grid.kkt_tol_factor,
        }),
        cli.seed,
    );
    let config = EnergyConfig {
        raw_csv_path: args.raw.clone(),
        samples_per_day: args.samples_per_day,
    };
    let prepared = report.time("ingest", || data::prepare_energy::<f64>(&config))?;
    let data_set = &prepared.dataset;
    let opts = path_options(cli, &args.grid, data_set)?;
    let path = report.time("path", || solver::fit_path(data_set, &opts))?;
    let selection_report = report.time("select_r", || {
        selection::select_r_sigma(data_set, &path, args.alpha)
    })?;
    let fit = report.time("refit", || {
        fit_at(data_set, &path, selection_report.chosen_r, &opts.solver)
    })?;

    fs::create_dir_all(&cli.out_dir)?;
    let norms_path = cli.out_dir.join(format!("{}_norms.csv", args.stem));
    write_norms_csv(&norms_path, &path)?;
    report.add_output(&norms_path);

    // Coefficient curves of the selected blocks, long format.
    let curves_path = cli.out_dir.join(format!("{}_selected.csv", args.stem));
    {
        let mut out = std::io::BufWriter::new(fs::File::create(&curves_path)?);
        writeln!(out, "block,name,t,value")?;
        for &j in &fit.support {
            let el = fit.beta.block(j);
            let grid = el.spec().grid().unwrap_or(&[]);
            for (t, v) in grid.iter().zip(el.values()) {
                writeln!(out, "{},{},{},{}", j + 1, prepared.names[j], t, v)?;
            }
        }
    }
    report.add_output(&curves_path);

    report.summary = json!({
        "n": data_set.n(),
        "p": data_set.n_blocks(),
        "incomplete_days": prepared.incomplete_days,
        "days_dropped": prepared.days_dropped,
        "sigma_hat2": selection_report.sigma_hat2,
        "chosen_r": selection_report.chosen_r,
        "support": one_based(&fit.support),
        "selected_names": data::support_labels(&fit.support, &prepared.names),
        "scaled_range_max_deviation": prepared
            .scaled_ranges
            .iter()
            .map(|r| (r - 1.0).abs())
            .fold(0.0f64, f64::max),
    });
    report.write(&cli.out_dir, &args.stem)?;
    Ok(())
}

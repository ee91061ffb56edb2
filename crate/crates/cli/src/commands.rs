//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use drift_ar::bootstrap::{bootstrap_ci, BootstrapConfig, Multiplier, Scheme};
use drift_ar::diagnostics::PortmanteauTest;
use drift_ar::experiments::{
    run_exp1, run_exp2, run_exp3, run_exp4, Exp1Config, Exp2Config, Exp3Config, Exp4Config,
};
use drift_ar::preprocess::clean;
use drift_ar::simulate::{gen_series, recoverable, DriftKind, DriftSpec, SimConfig};
use drift_ar::solver::fit_l2_variant;
use drift_ar::tuning::{tune, Constraint, Transform, TuneConfig, TuneMethod};
use drift_ar::{fit, FitConfig, FitResult, NoiseKind, NoiseModel, SolverMethod, TimeSeries};
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::io::{read_column, with_suffix, write_csv, write_json, Cell};
use crate::CliError;

#[derive(Serialize)]
struct Manifest {
    command: &'static str,
    parameters: serde_json::Value,
    seed: Option<u64>,
    version: String,
    timing_seconds: f64,
    outputs: Vec<String>,
}

/// Runs a command and writes its manifest next to the outputs.
pub fn run(command: Command) -> Result<(), CliError> {
    let start = Instant::now();
    let name = command.name();
    let (parameters, seed) = match &command {
        Command::Simulate(a) => (to_value(a)?, Some(a.seed)),
        Command::Fit(a) => (to_value(a)?, None),
        Command::Tune(a) => (to_value(a)?, None),
        Command::Bootstrap(a) => (to_value(a)?, Some(a.seed)),
        Command::Preprocess(a) => (to_value(a)?, None),
        Command::Experiment(a) => (to_value(a)?, Some(a.seed)),
    };
    let (manifest_path, outputs) = match &command {
        Command::Simulate(a) => (manifest_for(&a.out), simulate(a)?),
        Command::Fit(a) => (manifest_for(&a.out), fit_cmd(a)?),
        Command::Tune(a) => (manifest_for(&a.out), tune_cmd(a)?),
        Command::Bootstrap(a) => (manifest_for(&a.out), bootstrap_cmd(a)?),
        Command::Preprocess(a) => (manifest_for(&a.out), preprocess(a)?),
        Command::Experiment(a) => {
            let stem = a.out_dir.join(experiment_stem(a.name));
            (manifest_for(&stem), experiment(a)?)
        }
    };
    let manifest = Manifest {
        command: name,
        parameters,
        seed,
        version: format!("drift-ar {}", env!("CARGO_PKG_VERSION")),
        timing_seconds: start.elapsed().as_secs_f64(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    write_json(&manifest_path, &manifest)
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Internal(e.to_string()))
}

fn manifest_for(prefix: &Path) -> PathBuf {
    with_suffix(prefix, ".manifest.json")
}

fn load_series(a: &SeriesArgs) -> Result<TimeSeries, CliError> {
    let values = read_column(&a.input, a.column.as_deref())?.complete()?;
    match &a.history {
        Some(h) => {
            if h.len() != a.p {
                return Err(CliError::Input(format!(
                    "--history has {} values but --p is {}",
                    h.len(),
                    a.p
                )));
            }
            Ok(TimeSeries::new(values, h.clone())?)
        }
        None => {
            if values.len() <= a.p {
                return Err(CliError::Input(format!(
                    "{} values cannot hold {} history values and any observations",
                    values.len(),
                    a.p
                )));
            }
            Ok(TimeSeries::from_raw(&values, a.p)?)
        }
    }
}

fn fit_config(s: &SolverArgs, delta: f64) -> FitConfig {
    FitConfig {
        delta,
        delta_s: s.delta_s.unwrap_or(f64::INFINITY),
        max_iters: s.max_iters,
        tol: s.tol,
        method: match s.solver {
            MethodArg::Profile => SolverMethod::Profile,
            MethodArg::Accelerated => SolverMethod::Accelerated,
        },
        ..FitConfig::default()
    }
}

fn tune_config(t: &TuneArgs, variant: VariantArg) -> TuneConfig {
    TuneConfig {
        epsilon: t.epsilon,
        method: match t.method {
            SearchArg::Grid => TuneMethod::Grid,
            SearchArg::Golden => TuneMethod::Golden,
        },
        test: match t.test {
            TestArg::Lb => PortmanteauTest::LjungBox,
            TestArg::Dw => PortmanteauTest::DurbinWatson,
        },
        lags: t.lags,
        transform: match t.transform {
            TransformArg::None => Transform::None,
            TransformArg::Log => Transform::ShiftedLog,
        },
        constraint: match variant {
            VariantArg::Tv => Constraint::TotalVariation,
            VariantArg::L2 => Constraint::SquaredVariation,
        },
        ..TuneConfig::new(t.delta_lo, t.delta_hi)
    }
}

/// `alpha_hat` for a single coefficient, `alpha_hat_1..p` otherwise.
fn alpha_columns(prefix: &str, p: usize) -> Vec<String> {
    if p == 1 {
        vec![prefix.to_owned()]
    } else {
        (1..=p).map(|j| format!("{prefix}_{j}")).collect()
    }
}

fn simulate(a: &SimulateArgs) -> Result<Vec<PathBuf>, CliError> {
    let p = a.alpha.len();
    if let Some(declared) = a.p {
        if declared != p {
            return Err(CliError::Input(format!(
                "--p is {declared} but {p} coefficients were given"
            )));
        }
    }
    let kind = match a.drift {
        DriftArg::None => DriftKind::None,
        DriftArg::Rw => DriftKind::RandomWalk,
        DriftArg::Pwc => DriftKind::PiecewiseConstant,
        DriftArg::Pwl => DriftKind::PiecewiseLinear,
    };
    let noise = match a.noise {
        NoiseArg::Gaussian => NoiseKind::Gaussian,
        NoiseArg::Uniform => NoiseKind::UniformCentered,
        NoiseArg::Rademacher => NoiseKind::RademacherScaled,
    };
    let cfg = SimConfig {
        alpha: a.alpha.clone(),
        drift: DriftSpec {
            kind,
            delta0: a.delta0,
            changes: a.s,
            len: a.t,
        },
        noise: NoiseModel::new(noise, a.sigma0sq)?,
        history: a.history.clone().unwrap_or_else(|| vec![0.0; p]),
        seed: a.seed,
    };
    let (series, f_true) = gen_series(&cfg)?;
    let recover = match (a.epsilon, a.vol_s) {
        (Some(eps), Some(vol)) => {
            Some(recoverable(a.s, a.delta0, eps, a.recover_delta, vol, a.c1)?)
        }
        _ => None,
    };

    let mut rows = Vec::with_capacity(p + a.t);
    for (k, h) in series.history().iter().enumerate() {
        let t = k as i64 - p as i64 + 1;
        rows.push(vec![Cell::Int(t), Cell::Float(*h), Cell::Empty]);
    }
    for (i, (x, f)) in series.values().iter().zip(&f_true).enumerate() {
        rows.push(vec![
            Cell::Int(i as i64 + 1),
            Cell::Float(*x),
            Cell::Float(*f),
        ]);
    }
    let csv = with_suffix(&a.out, ".csv");
    write_csv(&csv, &["t", "x", "f_true"], rows)?;

    let summary = json!({
        "t": a.t,
        "p": p,
        "true_total_variation": f_true.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>(),
        "jumps": f_true.windows(2).filter(|w| w[1] != w[0]).count(),
        "recoverable": recover,
    });
    let js = with_suffix(&a.out, ".json");
    write_json(&js, &summary)?;
    Ok(vec![csv, js])
}

#[derive(Serialize)]
struct FitOutput<'a> {
    alpha: &'a [f64],
    mu: f64,
    objective: f64,
    converged: bool,
    kkt_gap: f64,
    iterations: usize,
    multiplier: f64,
    rank_deficient: bool,
    total_variation: f64,
}

impl<'a> FitOutput<'a> {
    fn new(r: &'a FitResult) -> Self {
        Self {
            alpha: r.alpha(),
            mu: r.coefficients.mu,
            objective: r.objective,
            converged: r.converged,
            kkt_gap: r.kkt_gap,
            iterations: r.iterations,
            multiplier: r.multiplier,
            rank_deficient: r.rank_deficient,
            total_variation: r.coefficients.total_variation(),
        }
    }
}

fn warn_nonconverged(r: &FitResult) {
    if !r.converged {
        eprintln!(
            "warning: solver stopped after {} iterations without meeting the tolerance (gap {:e})",
            r.iterations, r.kkt_gap
        );
    }
}

fn fit_cmd(a: &FitArgs) -> Result<Vec<PathBuf>, CliError> {
    let series = load_series(&a.series)?;
    let cfg = fit_config(&a.solver, a.delta);
    let r = match a.solver.variant {
        VariantArg::Tv => fit(&series, &cfg)?,
        VariantArg::L2 => fit_l2_variant(&series, &cfg)?,
    };
    warn_nonconverged(&r);
    let js = with_suffix(&a.out, ".json");
    write_json(&js, &FitOutput::new(&r))?;

    let f = r.background();
    let fitted = r.fitted(&series);
    let rows = (0..series.len())
        .map(|i| {
            vec![
                Cell::from(i + 1),
                series.values()[i].into(),
                f[i].into(),
                fitted[i].into(),
                r.residuals[i].into(),
            ]
        })
        .collect();
    let csv = with_suffix(&a.out, ".csv");
    write_csv(&csv, &["t", "x", "f_hat", "fitted", "residual"], rows)?;
    Ok(vec![js, csv])
}

fn tune_cmd(a: &TuneCmdArgs) -> Result<Vec<PathBuf>, CliError> {
    let series = load_series(&a.series)?;
    let tc = tune_config(&a.tune, a.solver.variant);
    let r = tune(&series, &tc, &fit_config(&a.solver, 0.0))?;
    warn_nonconverged(&r.fit);
    let out = json!({
        "delta_star": r.delta_star,
        "p_star": r.p_star,
        "alpha_hat": r.alpha_star(),
        "evaluations": r.evaluations,
        "nonconverged": r.nonconverged,
        "fit": FitOutput::new(&r.fit),
    });
    let js = with_suffix(&a.out, ".json");
    write_json(&js, &out)?;

    let p = series.order();
    let mut header = vec!["delta".to_owned(), "p_value".to_owned()];
    header.extend(alpha_columns("alpha_hat", p));
    header.push("converged".to_owned());
    let rows = r
        .trace
        .iter()
        .map(|pt| {
            let mut row = vec![Cell::Float(pt.delta), Cell::Float(pt.p_value)];
            row.extend(pt.alpha_hat.iter().map(|v| Cell::Float(*v)));
            row.push(pt.converged.into());
            row
        })
        .collect();
    let csv = with_suffix(&a.out, ".csv");
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&csv, &header, rows)?;
    Ok(vec![js, csv])
}

fn bootstrap_cmd(a: &BootstrapArgs) -> Result<Vec<PathBuf>, CliError> {
    let series = load_series(&a.series)?;
    let tc = tune_config(&a.tune, a.solver.variant);
    let fc = fit_config(&a.solver, 0.0);
    let bc = BootstrapConfig {
        scheme: match a.scheme {
            SchemeArg::Wild => Scheme::Wild,
            SchemeArg::Block => Scheme::LocalBlock,
        },
        replicates: a.replicates,
        multiplier: match a.multiplier {
            MultiplierArg::Normal => Multiplier::StandardNormal,
            MultiplierArg::Rademacher => Multiplier::Rademacher,
        },
        block_size: a.block_size,
        neighborhood: a.neighborhood,
        levels: a.levels.clone(),
        ..BootstrapConfig::default()
    };
    bc.validate(series.len())?;
    let tuned = tune(&series, &tc, &fc)?;
    let r = bootstrap_ci(&series, &tuned, &bc, &tc, &fc, a.seed)?;
    let warning = r.unreliable.then(|| {
        format!(
            "{} of {} replicates failed; intervals may be unreliable",
            r.dropped, a.replicates
        )
    });
    if let Some(w) = &warning {
        eprintln!("warning: {w}");
    }
    let intervals: Vec<_> = r
        .intervals
        .iter()
        .map(|iv| {
            json!({
                "level": iv.level,
                "lower": iv.bounds.iter().map(|b| b.0).collect::<Vec<_>>(),
                "upper": iv.bounds.iter().map(|b| b.1).collect::<Vec<_>>(),
            })
        })
        .collect();
    let out = json!({
        "point": r.point,
        "delta_star": tuned.delta_star,
        "replicates": a.replicates,
        "kept": r.draws.len(),
        "dropped": r.dropped,
        "unreliable": r.unreliable,
        "warning": warning,
        "intervals": intervals,
    });
    let js = with_suffix(&a.out, ".json");
    write_json(&js, &out)?;

    let mut header = vec!["draw".to_owned(), "delta".to_owned()];
    header.extend(alpha_columns("alpha_hat", series.order()));
    let rows = r
        .draws
        .iter()
        .zip(&r.deltas)
        .enumerate()
        .map(|(k, (d, delta))| {
            let mut row = vec![Cell::from(k + 1), Cell::Float(*delta)];
            row.extend(d.iter().map(|v| Cell::Float(*v)));
            row
        })
        .collect();
    let csv = with_suffix(&a.out, ".csv");
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&csv, &header, rows)?;
    Ok(vec![js, csv])
}

fn preprocess(a: &PreprocessArgs) -> Result<Vec<PathBuf>, CliError> {
    let col = read_column(&a.input, a.column.as_deref())?;
    let (cleaned, report) = clean(&col.values)?;
    let mut status = vec!["observed"; cleaned.len()];
    for &i in &report.missing_indices {
        status[i] = "missing";
    }
    for &i in &report.outlier_indices {
        status[i] = "outlier";
    }
    let rows = cleaned
        .iter()
        .zip(&status)
        .map(|(x, s)| vec![Cell::Float(*x), Cell::from(*s)])
        .collect();
    let csv = with_suffix(&a.out, ".csv");
    write_csv(&csv, &["x", "status"], rows)?;
    let js = with_suffix(&a.out, ".json");
    write_json(&js, &report)?;
    Ok(vec![csv, js])
}

fn experiment_stem(name: ExperimentName) -> &'static str {
    match name {
        ExperimentName::Exp1 => "exp1",
        ExperimentName::Exp2 => "exp2",
        ExperimentName::Exp3 => "exp3",
        ExperimentName::Exp4 => "exp4",
    }
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::Wild => "wild",
        Scheme::LocalBlock => "block",
    }
}

fn check_reps(reps: Option<usize>) -> Result<Option<usize>, CliError> {
    match reps {
        Some(0) => Err(CliError::Input("--reps must be positive".into())),
        r => Ok(r),
    }
}

fn experiment(a: &ExperimentArgs) -> Result<Vec<PathBuf>, CliError> {
    let reps = check_reps(a.reps)?;
    let stem = experiment_stem(a.name);
    let file = |suffix: &str| a.out_dir.join(format!("{stem}{suffix}"));
    let mut outputs = Vec::new();
    match a.name {
        ExperimentName::Exp1 => {
            let mut cfg = Exp1Config::scaled(a.scale, a.seed)?;
            cfg.reps = reps.unwrap_or(cfg.reps);
            let r = run_exp1(&cfg)?;
            let rows = r
                .rows
                .iter()
                .map(|w| {
                    [
                        w.setting.alpha,
                        w.setting.delta0,
                        w.setting.sigma0_sq,
                        w.oracle_mean,
                        w.oracle_sd,
                        w.lb_mean,
                        w.lb_sd,
                        w.dw_mean,
                        w.dw_sd,
                        w.naive_mean,
                        w.naive_sd,
                        w.oracle_mse,
                        w.lb_mse,
                        w.dw_mse,
                        w.naive_mse,
                    ]
                    .into_iter()
                    .map(Cell::from)
                    .collect()
                })
                .collect();
            let table = file("_table.csv");
            write_csv(
                &table,
                &[
                    "alpha",
                    "delta0",
                    "sigma0_sq",
                    "oracle_mean",
                    "oracle_sd",
                    "lb_mean",
                    "lb_sd",
                    "dw_mean",
                    "dw_sd",
                    "naive_mean",
                    "naive_sd",
                    "oracle_mse",
                    "lb_mse",
                    "dw_mse",
                    "naive_mse",
                ],
                rows,
            )?;
            let rows = r
                .curves
                .iter()
                .map(|c| {
                    vec![
                        Cell::from(c.setting + 1),
                        c.delta.into(),
                        c.mean_alpha.into(),
                        c.mse.into(),
                        c.mean_p_lb.into(),
                        c.mean_p_dw.into(),
                    ]
                })
                .collect();
            let curves = file("_curves.csv");
            write_csv(
                &curves,
                &[
                    "setting",
                    "delta",
                    "mean_alpha",
                    "mse",
                    "mean_p_lb",
                    "mean_p_dw",
                ],
                rows,
            )?;
            let js = file(".json");
            write_json(&js, &json!({ "config": cfg, "rows": r.rows }))?;
            outputs.extend([js, table, curves]);
        }
        ExperimentName::Exp2 => {
            let mut cfg = Exp2Config::scaled(a.scale, a.seed)?;
            cfg.reps = reps.unwrap_or(cfg.reps);
            let r = run_exp2(&cfg)?;
            let rows = r
                .iter()
                .map(|w| {
                    vec![
                        Cell::from(w.s),
                        w.mean_alpha.into(),
                        w.sd_alpha.into(),
                        w.mean_abs_error.into(),
                        w.mean_delta.into(),
                    ]
                })
                .collect();
            let curve = file("_error_vs_s.csv");
            write_csv(
                &curve,
                &[
                    "s",
                    "mean_alpha",
                    "sd_alpha",
                    "mean_abs_error",
                    "mean_delta",
                ],
                rows,
            )?;
            let js = file(".json");
            write_json(&js, &json!({ "config": cfg, "rows": r }))?;
            outputs.extend([js, curve]);
        }
        ExperimentName::Exp3 => {
            let mut cfg = Exp3Config::scaled(a.scale, a.seed)?;
            cfg.reps = reps.unwrap_or(cfg.reps);
            let r = run_exp3(&cfg)?;
            let rows = r
                .reps
                .iter()
                .map(|w| {
                    vec![
                        Cell::from(w.case + 1),
                        Cell::from(w.rep + 1),
                        w.true_tv.into(),
                        w.tv_alpha.into(),
                        w.tv_delta.into(),
                        w.l2_alpha.into(),
                        w.l2_delta.into(),
                        w.poly_alpha.into(),
                        w.naive_alpha.into(),
                    ]
                })
                .collect();
            let reps_csv = file("_reps.csv");
            write_csv(
                &reps_csv,
                &[
                    "case",
                    "rep",
                    "true_tv",
                    "tv_alpha",
                    "tv_delta",
                    "l2_alpha",
                    "l2_delta",
                    "poly_alpha",
                    "naive_alpha",
                ],
                rows,
            )?;
            let rows = r
                .summary
                .iter()
                .enumerate()
                .map(|(k, w)| {
                    vec![
                        Cell::from(k + 1),
                        Cell::from(w.case.s),
                        w.case.delta0.into(),
                        w.tv_mean_abs_error.into(),
                        w.l2_mean_abs_error.into(),
                        w.poly_mean_abs_error.into(),
                        w.naive_mean_abs_error.into(),
                        Cell::from(w.tv_wins),
                    ]
                })
                .collect();
            let summary = file("_summary.csv");
            write_csv(
                &summary,
                &[
                    "case",
                    "s",
                    "delta0",
                    "tv_mae",
                    "l2_mae",
                    "poly_mae",
                    "naive_mae",
                    "tv_wins",
                ],
                rows,
            )?;
            let mut rows = Vec::new();
            for c in &r.curves {
                for i in 0..c.f_true.len() {
                    rows.push(vec![
                        Cell::from(c.case + 1),
                        Cell::from(i + 1),
                        c.f_true[i].into(),
                        c.f_tv[i].into(),
                        c.f_l2[i].into(),
                        c.f_poly[i].into(),
                    ]);
                }
            }
            let curves = file("_backgrounds.csv");
            write_csv(
                &curves,
                &["case", "t", "f_true", "f_tv", "f_l2", "f_poly"],
                rows,
            )?;
            let js = file(".json");
            write_json(&js, &json!({ "config": cfg, "summary": r.summary }))?;
            outputs.extend([js, reps_csv, summary, curves]);
        }
        ExperimentName::Exp4 => {
            let mut cfg = Exp4Config::scaled(a.scale, a.seed)?;
            cfg.outer = reps.unwrap_or(cfg.outer);
            let r = run_exp4(&cfg)?;
            let rows = r
                .rows
                .iter()
                .map(|w| {
                    vec![
                        Cell::from(scheme_name(w.scheme)),
                        w.level.into(),
                        w.coverage.into(),
                        w.mean_length.into(),
                        Cell::from(w.unreliable),
                    ]
                })
                .collect();
            let coverage = file("_coverage.csv");
            write_csv(
                &coverage,
                &["scheme", "level", "coverage", "mean_length", "unreliable"],
                rows,
            )?;
            let mut rows = Vec::new();
            for h in &r.histograms {
                for (k, d) in h.draws.iter().enumerate() {
                    rows.push(vec![
                        Cell::from(scheme_name(h.scheme)),
                        Cell::from(k + 1),
                        h.point.into(),
                        (*d).into(),
                    ]);
                }
            }
            let draws = file("_draws.csv");
            write_csv(&draws, &["scheme", "draw", "point", "alpha_hat"], rows)?;
            let js = file(".json");
            write_json(&js, &json!({ "config": cfg, "rows": r.rows }))?;
            outputs.extend([js, coverage, draws]);
        }
    }
    Ok(outputs)
}

use std::fs;
use std::path::Path;
use std::time::Instant;

use pcp::assembly::{BvpSystem, NonlinearSystem};
use pcp::conditioning::{
    condition_number_with, poisson1d_theory_norm, preconditioned_condition_number, BiasNorm,
};
use pcp::neural::{gradcheck, GradcheckReport};
use pcp::parallel::map_jobs;
use pcp::sparse::{ilu_factorize, norm2, IluFactors};
use pcp::training::{
    heat_step_builder, newton_oracle, train_linear, train_linear_with, train_newton,
    train_time_stepping, DiscreteLoss, FactorStats, LossMode, Metrics, TrainConfig,
};
use serde::Serialize;

use crate::config::{Assembled, ExperimentConfig, ProblemSpec};
use crate::output::{write_csv, write_json};
use crate::{CliError, EXIT_ALL_FAILED, EXIT_OK, EXIT_PARTIAL};

/// How many independent jobs a command ran and how many failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub jobs: usize,
    pub failed: usize,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.failed == 0 {
            EXIT_OK
        } else if self.failed == self.jobs {
            EXIT_ALL_FAILED
        } else {
            EXIT_PARTIAL
        }
    }
}

fn trial_seeds(config: &ExperimentConfig) -> Vec<u64> {
    (0..config.trials as u64)
        .map(|t| config.seed.wrapping_add(t))
        .collect()
}

// ---------------------------------------------------------------- cond

pub const COND_HEADER: [&str; 13] = [
    "problem",
    "parameter",
    "n",
    "method",
    "numerator",
    "inverse_norm",
    "bias_norm",
    "solution_norm",
    "cond",
    "iterations",
    "theory",
    "rel_deviation",
    "error",
];

#[derive(Debug, Clone, Serialize)]
struct CondRow {
    problem: &'static str,
    parameter: f64,
    n: Option<usize>,
    method: &'static str,
    numerator: &'static str,
    inverse_norm: Option<f64>,
    bias_norm: Option<f64>,
    solution_norm: Option<f64>,
    cond: Option<f64>,
    iterations: Option<usize>,
    theory: Option<f64>,
    rel_deviation: Option<f64>,
    error: String,
}

fn numerator_name(b: BiasNorm) -> &'static str {
    match b {
        BiasNorm::Full => "full",
        BiasNorm::Source => "source",
    }
}

/// One `cond.csv` row per sweep value; failing points keep their row with
/// the message in `error`.
pub fn cmd_cond_sweep(config: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep: required by `cond`".into()))?;
    let specs: Vec<ProblemSpec> = sweep
        .values
        .iter()
        .map(|&v| config.problem.with_parameter(v))
        .collect::<Result<_, _>>()?;
    let rows = map_jobs(specs, |spec| {
        let mut row = CondRow {
            problem: spec.name(),
            parameter: spec.parameter(),
            n: None,
            method: sweep.method.name(),
            numerator: numerator_name(sweep.bias_norm),
            inverse_norm: None,
            bias_norm: None,
            solution_norm: None,
            cond: None,
            iterations: None,
            theory: None,
            rel_deviation: None,
            error: String::new(),
        };
        if let ProblemSpec::Poisson1d { p, .. } = spec {
            row.theory = poisson1d_theory_norm(p).ok();
        }
        let result = spec.assemble_linear().and_then(|s| {
            Ok((
                s.n(),
                condition_number_with(&s, sweep.method, sweep.bias_norm)?,
            ))
        });
        match result {
            Ok((n, est)) => {
                row.n = Some(n);
                row.inverse_norm = Some(est.inverse_norm);
                row.bias_norm = Some(est.bias_norm);
                row.solution_norm = Some(est.solution_norm);
                row.cond = Some(est.cond);
                row.iterations = Some(est.iterations);
                row.rel_deviation = row.theory.map(|t| (est.inverse_norm - t).abs() / t);
            }
            Err(e) => row.error = e.to_string(),
        }
        row
    });
    write_csv(&out.join("cond.csv"), &COND_HEADER, &rows)?;
    Ok(Outcome {
        jobs: rows.len(),
        failed: rows.iter().filter(|r| !r.error.is_empty()).count(),
    })
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, Serialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub status: &'static str,
    pub error: Option<String>,
    pub metrics: Option<Metrics>,
    pub iterations: Option<usize>,
    pub factor: Option<FactorStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Mean and population standard deviation; zero spread for one value.
pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some(MeanStd {
        mean,
        std: var.sqrt(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub problem: &'static str,
    pub loss_mode: LossMode,
    pub trials: Vec<TrialSummary>,
    pub n_ok: usize,
    pub n_failed: usize,
    pub l2re: Option<MeanStd>,
    pub l1re: Option<MeanStd>,
    pub mse: Option<MeanStd>,
}

#[derive(Serialize)]
struct StepRow {
    step: usize,
    iterations: usize,
    final_loss: f64,
    l2re: f64,
}

#[derive(Serialize)]
struct StepTimingRow {
    step: usize,
    wall_ms: f64,
    factor_ms: f64,
}

#[derive(Serialize)]
struct NewtonRow {
    step: usize,
    residual_inf: f64,
    inner_iterations: Option<usize>,
    inner_final_loss: Option<f64>,
}

pub const HISTORY_HEADER: [&str; 3] = ["iteration", "loss", "l2re"];
pub const TIMING_HEADER: [&str; 2] = ["iteration", "wall_ms"];
pub const STEPS_HEADER: [&str; 4] = ["step", "iterations", "final_loss", "l2re"];
pub const STEPS_TIMING_HEADER: [&str; 3] = ["step", "wall_ms", "factor_ms"];
pub const NEWTON_HEADER: [&str; 4] = [
    "step",
    "residual_inf",
    "inner_iterations",
    "inner_final_loss",
];

/// Problem data shared by every trial.
enum Prepared {
    Linear(BvpSystem),
    Stepping { kappa: f64, nx: usize },
    Nonlinear(NonlinearSystem),
}

fn prepare(config: &ExperimentConfig) -> Result<Prepared, CliError> {
    Ok(match config.problem.assemble()? {
        Assembled::Linear(s) => Prepared::Linear(s),
        Assembled::Stepping { kappa, nx } => Prepared::Stepping { kappa, nx },
        Assembled::Nonlinear(mut s) => {
            let (u, _) = newton_oracle(&s, &config.newton)?;
            s.set_reference(u)?;
            Prepared::Nonlinear(s)
        }
    })
}

fn run_trial(
    config: &ExperimentConfig,
    prepared: &Prepared,
    seed: u64,
    dir: &Path,
) -> Result<(Metrics, usize, FactorStats), CliError> {
    fs::create_dir_all(dir)?;
    let mut model = config.network.build(config.problem.input_dim(), seed)?;
    let train = TrainConfig {
        seed,
        ..config.train
    };
    match prepared {
        Prepared::Linear(system) => {
            let rec = train_linear(system, &mut model, &train)?;
            let mut buf = Vec::new();
            rec.write_history_csv(&mut buf)?;
            fs::write(dir.join("history.csv"), buf)?;
            let mut buf = Vec::new();
            rec.write_timing_csv(&mut buf)?;
            fs::write(dir.join("history_timing.csv"), buf)?;
            Ok((rec.final_metrics, rec.iterations, rec.factor))
        }
        &Prepared::Stepping { kappa, nx } => {
            let (builder, initial) = heat_step_builder(kappa, nx, config.time_stepping.dt)?;
            let rec =
                train_time_stepping(builder, &initial, &mut model, &config.time_stepping, &train)?;
            let rows: Vec<StepRow> = rec
                .steps
                .iter()
                .enumerate()
                .map(|(i, r)| StepRow {
                    step: i + 1,
                    iterations: r.iterations,
                    final_loss: r.final_loss,
                    l2re: r.final_metrics.l2re,
                })
                .collect();
            write_csv(&dir.join("steps.csv"), &STEPS_HEADER, &rows)?;
            let timing: Vec<StepTimingRow> = rec
                .steps
                .iter()
                .enumerate()
                .map(|(i, r)| StepTimingRow {
                    step: i + 1,
                    wall_ms: r.history.last().map_or(0.0, |e| e.wall_ms),
                    factor_ms: r.factor.factor_ms,
                })
                .collect();
            write_csv(&dir.join("steps_timing.csv"), &STEPS_TIMING_HEADER, &timing)?;
            let factor = rec.steps.first().map(|r| r.factor).unwrap_or_default();
            Ok((rec.final_metrics, rec.total_iterations, factor))
        }
        Prepared::Nonlinear(system) => {
            let rec = train_newton(system, &mut model, &config.newton, &train)?;
            let rows: Vec<NewtonRow> = rec
                .residual_history
                .iter()
                .enumerate()
                .map(|(i, &r)| NewtonRow {
                    step: i,
                    residual_inf: r,
                    inner_iterations: i.checked_sub(1).map(|k| rec.steps[k].iterations),
                    inner_final_loss: i.checked_sub(1).map(|k| rec.steps[k].final_loss),
                })
                .collect();
            write_csv(&dir.join("newton.csv"), &NEWTON_HEADER, &rows)?;
            let metrics = rec
                .final_metrics
                .ok_or_else(|| CliError::Config("problem has no reference".into()))?;
            let iterations = rec.steps.iter().map(|r| r.iterations).sum();
            let factor = rec.steps.first().map(|r| r.factor).unwrap_or_default();
            Ok((metrics, iterations, factor))
        }
    }
}

/// Runs the seeded trials; each writes into `trial_<k>/`, then
/// `summary.json` aggregates the final metrics.
pub fn cmd_train(
    config: &ExperimentConfig,
    out: &Path,
) -> Result<(Outcome, TrainSummary), CliError> {
    let prepared = prepare(config)?;
    let jobs: Vec<(usize, u64)> = trial_seeds(config).into_iter().enumerate().collect();
    let trials = map_jobs(jobs, |(trial, seed)| {
        let dir = out.join(format!("trial_{trial}"));
        match run_trial(config, &prepared, seed, &dir) {
            Ok((metrics, iterations, factor)) => TrialSummary {
                trial,
                seed,
                status: "ok",
                error: None,
                metrics: Some(metrics),
                iterations: Some(iterations),
                factor: Some(factor),
            },
            Err(e) => TrialSummary {
                trial,
                seed,
                status: "failed",
                error: Some(e.to_string()),
                metrics: None,
                iterations: None,
                factor: None,
            },
        }
    });
    let ok: Vec<Metrics> = trials.iter().filter_map(|t| t.metrics).collect();
    let pick = |f: fn(&Metrics) -> f64| mean_std(&ok.iter().map(f).collect::<Vec<_>>());
    let summary = TrainSummary {
        problem: config.problem.name(),
        loss_mode: config.train.loss_mode,
        n_ok: ok.len(),
        n_failed: trials.len() - ok.len(),
        l2re: pick(|m| m.l2re),
        l1re: pick(|m| m.l1re),
        mse: pick(|m| m.mse),
        trials,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok((
        Outcome {
            jobs: summary.trials.len(),
            failed: summary.n_failed,
        },
        summary,
    ))
}

// ---------------------------------------------------------------- ablate

pub const ABLATION_HEADER: [&str; 7] = [
    "label",
    "drop_tol",
    "cond",
    "pinv_b_error",
    "l2re",
    "nnz_factors",
    "error",
];
pub const ABLATION_TIMING_HEADER: [&str; 3] = ["label", "drop_tol", "factor_ms"];

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub label: &'static str,
    pub drop_tol: Option<f64>,
    pub cond: Option<f64>,
    /// `‖P⁻¹b − A⁻¹b‖ / ‖A⁻¹b‖`.
    pub pinv_b_error: Option<f64>,
    /// Mean final l2re over the trials.
    pub l2re: Option<f64>,
    pub nnz_factors: Option<usize>,
    pub error: String,
}

#[derive(Serialize)]
struct AblationTimingRow {
    label: &'static str,
    drop_tol: Option<f64>,
    factor_ms: Option<f64>,
}

fn ablation_row(
    config: &ExperimentConfig,
    system: &BvpSystem,
    solution: &[f64],
    drop_tol: Option<f64>,
) -> Result<(AblationRow, f64), CliError> {
    let start = Instant::now();
    let factors = match drop_tol {
        Some(t) => ilu_factorize(system.matrix(), t)?,
        None => IluFactors::identity(system.n()),
    };
    let factor_ms = start.elapsed().as_secs_f64() * 1e3;
    let cond = preconditioned_condition_number(system, &factors)?.cond;
    let mut pb = system.bias().to_vec();
    factors.precondition_in_place(&mut pb)?;
    let diff: Vec<f64> = pb.iter().zip(solution).map(|(a, b)| a - b).collect();
    let pinv_b_error = norm2(&diff) / norm2(solution);
    let stats = FactorStats {
        nnz_a: system.matrix().nnz(),
        nnz_factors: factors.nnz(),
        factor_ms,
    };
    let mode = if drop_tol.is_some() {
        LossMode::Preconditioned
    } else {
        LossMode::RawDiscrete
    };
    let mut l2re = Vec::with_capacity(config.trials);
    for seed in trial_seeds(config) {
        let train = TrainConfig {
            seed,
            loss_mode: mode,
            drop_tol: drop_tol.unwrap_or(0.0),
            ..config.train
        };
        let mut model = config.network.build(config.problem.input_dim(), seed)?;
        let rec = train_linear_with(system, &mut model, &train, &factors, stats, solution)?;
        l2re.push(rec.final_metrics.l2re);
    }
    let row = AblationRow {
        label: if drop_tol.is_some() { "ilu" } else { "none" },
        drop_tol,
        cond: Some(cond),
        pinv_b_error: Some(pinv_b_error),
        l2re: mean_std(&l2re).map(|m| m.mean),
        nnz_factors: Some(factors.nnz()),
        error: String::new(),
    };
    Ok((row, factor_ms))
}

/// One row per drop tolerance, plus a `none` row trained without a
/// preconditioner. Errors are measured against the discrete solution.
pub fn cmd_ablation(
    config: &ExperimentConfig,
    out: &Path,
) -> Result<(Outcome, Vec<AblationRow>), CliError> {
    let spec = config
        .ablation
        .as_ref()
        .ok_or_else(|| CliError::Config("ablation: required by `ablate`".into()))?;
    let system = config.problem.assemble_linear()?;
    let solution = system.discrete_solution()?;
    let mut points: Vec<Option<f64>> = spec.drop_tols.iter().map(|&t| Some(t)).collect();
    if spec.include_none {
        points.push(None);
    }
    let results = map_jobs(points, |tol| {
        ablation_row(config, &system, &solution, tol).unwrap_or_else(|e| {
            let row = AblationRow {
                label: if tol.is_some() { "ilu" } else { "none" },
                drop_tol: tol,
                cond: None,
                pinv_b_error: None,
                l2re: None,
                nnz_factors: None,
                error: e.to_string(),
            };
            (row, f64::NAN)
        })
    });
    let timing: Vec<AblationTimingRow> = results
        .iter()
        .map(|(r, ms)| AblationTimingRow {
            label: r.label,
            drop_tol: r.drop_tol,
            factor_ms: ms.is_finite().then_some(*ms),
        })
        .collect();
    let rows: Vec<AblationRow> = results.into_iter().map(|(r, _)| r).collect();
    write_csv(&out.join("ablation.csv"), &ABLATION_HEADER, &rows)?;
    write_csv(
        &out.join("ablation_timing.csv"),
        &ABLATION_TIMING_HEADER,
        &timing,
    )?;
    let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
    Ok((
        Outcome {
            jobs: rows.len(),
            failed,
        },
        rows,
    ))
}

// ---------------------------------------------------------------- gradcheck

pub const GRADCHECK_HEADER: [&str; 8] = [
    "trial",
    "seed",
    "n_params",
    "n_compared",
    "max_rel_error",
    "argmax",
    "max_abs_error_small",
    "passed",
];

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckRow {
    pub trial: usize,
    pub seed: u64,
    pub n_params: Option<usize>,
    pub n_compared: Option<usize>,
    pub max_rel_error: Option<f64>,
    pub argmax: Option<usize>,
    pub max_abs_error_small: Option<f64>,
    pub passed: bool,
}

fn check_one(
    config: &ExperimentConfig,
    system: &BvpSystem,
    seed: u64,
) -> Result<GradcheckReport, CliError> {
    let factors = match config.train.loss_mode {
        LossMode::Preconditioned => ilu_factorize(system.matrix(), config.train.drop_tol)?,
        LossMode::RawDiscrete => IluFactors::identity(system.n()),
    };
    let model = config.network.build(config.problem.input_dim(), seed)?;
    let loss = DiscreteLoss::new(system, &factors, &model)?;
    Ok(gradcheck(&model, &loss)?)
}

/// Finite-difference check of the training loss gradient, one row per
/// trial seed. A trial fails when its error exceeds the tolerance.
pub fn cmd_gradcheck(
    config: &ExperimentConfig,
    out: &Path,
) -> Result<(Outcome, Vec<GradcheckRow>), CliError> {
    let system = config.problem.assemble_linear()?;
    let jobs: Vec<(usize, u64)> = trial_seeds(config).into_iter().enumerate().collect();
    let rows = map_jobs(jobs, |(trial, seed)| {
        match check_one(config, &system, seed) {
            Ok(r) => GradcheckRow {
                trial,
                seed,
                n_params: Some(r.n_params),
                n_compared: Some(r.n_compared),
                max_rel_error: Some(r.max_rel_error),
                argmax: Some(r.argmax),
                max_abs_error_small: Some(r.max_abs_error_small),
                passed: r.max_rel_error < config.gradcheck.tolerance,
            },
            Err(_) => GradcheckRow {
                trial,
                seed,
                n_params: None,
                n_compared: None,
                max_rel_error: None,
                argmax: None,
                max_abs_error_small: None,
                passed: false,
            },
        }
    });
    write_csv(&out.join("gradcheck.csv"), &GRADCHECK_HEADER, &rows)?;
    Ok((
        Outcome {
            jobs: rows.len(),
            failed: rows.iter().filter(|r| !r.passed).count(),
        },
        rows,
    ))
}

//! Command execution: configs in, `report.json` plus CSV tables out.
//! Exit codes encode the classification trichotomy: 0 success/attainable,
//! 1 usage or config error, 2 gate failed (not attainable), 3 solver or
//! classification non-convergence.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};

use exterior_yamabe::calculus::probe_inequalities;
use exterior_yamabe::conformal::{conformal_curvatures, mms_case};
use exterior_yamabe::domain::{
    build_grid, flat_metric, grid_from_nodes, region_from_intervals, well_metric, CurvatureTarget,
    GridFunction, Metric, RadialGrid, RegionPair, Spacing,
};
use exterior_yamabe::energy::probe_coercivity;
use exterior_yamabe::io::{
    format_g17, lambda_curve_csv, metric_to_json, mms_to_json, solution_csv, solve_report_json,
    suite_csv,
};
use exterior_yamabe::prescribe::{prescribe_pipeline, Gate, PrescribeOptions};
use exterior_yamabe::spectral::{
    lambda_delta, scaled_curvature_metric, CurvePoint, LambdaCurve, SignClass,
};
use exterior_yamabe::yamabe::{classify_sign, sign_independence_suite, YamabeOptions};
use exterior_yamabe::zero_set;

use crate::config::{
    Command, ExperimentConfig, MetricConfig, ScalarSpec, SpacingConfig, TargetConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_GATE: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;

/// Everything a command run produces: files to write plus the exit code.
struct RunOutput {
    report: String,
    files: Vec<(String, String)>,
    exit: i32,
}

fn build_grid_from_config(config: &ExperimentConfig) -> anyhow::Result<Arc<RadialGrid>> {
    if let MetricConfig::Inline { inline } = &config.metric {
        if inline.n != config.grid.n {
            bail!("inline metric dimension does not match the grid section");
        }
        return Ok(grid_from_nodes(inline.n, inline.nodes.clone())?);
    }
    let spacing = match config.grid.spacing {
        SpacingConfig::Log => Spacing::Log,
        SpacingConfig::Uniform => Spacing::Uniform,
    };
    Ok(build_grid(
        config.grid.n,
        config.grid.r_max,
        config.grid.cells,
        spacing,
    )?)
}

fn build_metric(config: &ExperimentConfig, grid: &Arc<RadialGrid>) -> anyhow::Result<Metric> {
    match &config.metric {
        MetricConfig::Name(name) if name == "flat" => Ok(flat_metric(grid)),
        MetricConfig::Name(name) => bail!("unknown metric name {name:?} (expected \"flat\")"),
        MetricConfig::Well { well } => Ok(well_metric(grid, well.r_lo, well.r_hi, well.depth)),
        MetricConfig::Inline { inline } => Ok(Metric::new(
            Arc::clone(grid),
            inline.phi.clone(),
            inline.scalar.clone(),
            inline.mean,
            inline.tau,
        )?),
    }
}

fn build_target(target: &TargetConfig, grid: &Arc<RadialGrid>) -> anyhow::Result<CurvatureTarget> {
    let scalar: Vec<f64> = match &target.scalar {
        ScalarSpec::Zero => vec![0.0; grid.len()],
        ScalarSpec::Const { value } => vec![*value; grid.len()],
        ScalarSpec::Bump { r_lo, r_hi, depth } => grid
            .nodes
            .iter()
            .map(|&r| {
                if r >= *r_lo && r <= *r_hi {
                    -depth
                } else {
                    0.0
                }
            })
            .collect(),
        ScalarSpec::Samples { values } => {
            if values.len() != grid.len() {
                bail!("target sample count does not match the grid");
            }
            values.clone()
        }
    };
    let mut built = CurvatureTarget::new(scalar, target.mean);
    if let Some(tol) = target.zero_tol {
        built = built.with_zero_tol(tol);
    }
    Ok(built)
}

fn build_region(config: &ExperimentConfig, grid: &Arc<RadialGrid>) -> anyhow::Result<RegionPair> {
    match &config.region {
        None => Ok(RegionPair::full(grid)),
        Some(rc) => Ok(region_from_intervals(
            grid,
            &rc.intervals,
            rc.include_boundary,
        )?),
    }
}

fn delta_list(config: &ExperimentConfig) -> Vec<f64> {
    config
        .params
        .delta_list
        .clone()
        .unwrap_or_else(|| vec![0.0, -0.25])
}

fn prescribe_options(config: &ExperimentConfig) -> PrescribeOptions {
    let defaults = PrescribeOptions::default();
    PrescribeOptions {
        delta_list: delta_list(config),
        schedule: config.params.schedule.clone(),
        r_cut: config.params.r_cut,
        max_newton: config.params.max_iters.unwrap_or(defaults.max_newton),
        tol: config.params.tol.unwrap_or(defaults.tol),
        ..defaults
    }
}

fn yamabe_options(config: &ExperimentConfig, seed: u64) -> YamabeOptions {
    let defaults = YamabeOptions::default();
    YamabeOptions {
        seed,
        max_iters: config.params.max_iters.unwrap_or(defaults.max_iters),
        ..defaults
    }
}

fn run_classify(config: &ExperimentConfig) -> anyhow::Result<RunOutput> {
    let grid = build_grid_from_config(config)?;
    let metric = build_metric(config, &grid)?;
    let region = build_region(config, &grid)?;
    let sign = classify_sign(&metric, &region, &delta_list(config))?;
    Ok(RunOutput {
        report: format!(
            "{{\"command\":\"classify\",\"sign\":\"{}\",\"exit\":0}}",
            sign.as_str()
        ),
        files: vec![("metric.json".to_string(), metric_to_json(&metric))],
        exit: EXIT_OK,
    })
}

fn run_eigen(config: &ExperimentConfig) -> anyhow::Result<RunOutput> {
    let grid = build_grid_from_config(config)?;
    let metric = build_metric(config, &grid)?;
    let region = build_region(config, &grid)?;
    let delta = config.params.delta.unwrap_or(0.0);
    let report = lambda_delta(&metric, &region, delta)?;
    let mut minimizer_csv = String::from("r,u\n");
    if let Some(minimizer) = &report.minimizer {
        for (r, u) in grid.nodes.iter().zip(minimizer.values()) {
            minimizer_csv.push_str(&format!("{},{}\n", format_g17(*r), format_g17(*u)));
        }
    }
    let value_json = if report.value.is_finite() {
        format_g17(report.value)
    } else {
        "null".to_string()
    };
    Ok(RunOutput {
        report: format!(
            "{{\"command\":\"eigen\",\"delta\":{},\"value\":{},\"sign\":\"{}\",\"iterations\":{},\"residual\":{},\"exit\":0}}",
            format_g17(delta),
            value_json,
            report.sign.as_str(),
            report.iterations,
            format_g17(report.residual),
        ),
        files: vec![
            ("minimizer.csv".to_string(), minimizer_csv),
            ("metric.json".to_string(), metric_to_json(&metric)),
        ],
        exit: EXIT_OK,
    })
}

fn run_yamabe(config: &ExperimentConfig, seed: u64) -> anyhow::Result<RunOutput> {
    let grid = build_grid_from_config(config)?;
    let metric = build_metric(config, &grid)?;
    let region = build_region(config, &grid)?;
    let b_list = config.params.b_list.clone().unwrap_or_else(|| vec![1.0]);
    let r_list = config
        .params
        .r_list
        .clone()
        .unwrap_or_else(|| vec![grid.dims.crit_boundary]);
    let opts = yamabe_options(config, seed);
    let suite = sign_independence_suite(&metric, &region, &b_list, &r_list, &opts)?;
    let sign = suite
        .rows
        .first()
        .map(|row| row.sign.as_str())
        .unwrap_or("positive");
    Ok(RunOutput {
        report: format!(
            "{{\"command\":\"yamabe\",\"rows\":{},\"all_equal\":{},\"sign\":\"{}\",\"exit\":0}}",
            suite.rows.len(),
            suite.all_equal,
            sign
        ),
        files: vec![
            ("suite.csv".to_string(), suite_csv(&suite)),
            ("metric.json".to_string(), metric_to_json(&metric)),
        ],
        exit: EXIT_OK,
    })
}

fn run_prescribe(config: &ExperimentConfig) -> anyhow::Result<RunOutput> {
    let grid = build_grid_from_config(config)?;
    let metric = build_metric(config, &grid)?;
    let target = build_target(
        config
            .target
            .as_ref()
            .ok_or_else(|| anyhow!("prescribe requires a target section"))?,
        &grid,
    )?;
    let opts = prescribe_options(config);
    let report = prescribe_pipeline(&metric, &target, &opts)?;

    let exit = if report.gate == Gate::Failed {
        EXIT_GATE
    } else if !report.converged {
        EXIT_NO_CONVERGENCE
    } else {
        EXIT_OK
    };
    let mut files = vec![("metric.json".to_string(), metric_to_json(&metric))];
    if report.gate == Gate::Passed {
        let factor = GridFunction::new(
            Arc::clone(&grid),
            report.solution.values().iter().map(|&v| v + 1.0).collect(),
        );
        let readback = conformal_curvatures(&metric, &factor)?;
        files.push((
            "solution.csv".to_string(),
            solution_csv(&grid, report.solution.values(), &readback.scalar),
        ));
    }
    Ok(RunOutput {
        report: format!(
            "{{\"command\":\"prescribe\",\"exit\":{},\"result\":{}}}",
            exit,
            solve_report_json(&report)
        ),
        files,
        exit,
    })
}

fn run_mms(config: &ExperimentConfig) -> anyhow::Result<RunOutput> {
    let grid = build_grid_from_config(config)?;
    let metric = build_metric(config, &grid)?;
    let a = config.params.mms_a.unwrap_or(-0.5);
    let case = mms_case(&grid, a)?;
    let opts = prescribe_options(config);
    let report = prescribe_pipeline(&metric, &case.target, &opts)?;
    let exit = if report.gate == Gate::Failed {
        EXIT_GATE
    } else if !report.converged {
        EXIT_NO_CONVERGENCE
    } else {
        EXIT_OK
    };
    let linf = report
        .solution
        .values()
        .iter()
        .zip(case.u_exact.values())
        .map(|(got, want)| (got - want).abs())
        .fold(0.0f64, f64::max);
    let factor = GridFunction::new(
        Arc::clone(&grid),
        report.solution.values().iter().map(|&v| v + 1.0).collect(),
    );
    let readback = conformal_curvatures(&metric, &factor)?;
    Ok(RunOutput {
        report: format!(
            "{{\"command\":\"mms\",\"a\":{},\"linf_error\":{},\"exit\":{},\"result\":{}}}",
            format_g17(a),
            format_g17(linf),
            exit,
            solve_report_json(&report)
        ),
        files: vec![
            ("mms.json".to_string(), mms_to_json(&grid, &case)),
            (
                "solution.csv".to_string(),
                solution_csv(&grid, report.solution.values(), &readback.scalar),
            ),
        ],
        exit,
    })
}

fn run_sweep(config: &ExperimentConfig, jobs: usize) -> anyhow::Result<RunOutput> {
    let grid = build_grid_from_config(config)?;
    let template = build_metric(config, &grid)?;
    let region = build_region(config, &grid)?;
    let delta = config.params.delta.unwrap_or(0.0);
    let axis = config
        .params
        .axis
        .clone()
        .ok_or_else(|| anyhow!("sweep requires a parameter axis"))?;
    if axis.is_empty() {
        bail!("sweep axis is empty");
    }

    // rows are independent pure computations; run them across jobs threads
    let jobs = jobs.max(1);
    let mut points: Vec<Option<CurvePoint>> = vec![None; axis.len()];
    std::thread::scope(|scope| -> anyhow::Result<()> {
        let mut handles = Vec::new();
        for (chunk_idx, chunk) in axis.chunks(axis.len().div_ceil(jobs)).enumerate() {
            let template = &template;
            let region = &region;
            let chunk = chunk.to_vec();
            handles.push((
                chunk_idx,
                scope.spawn(move || -> anyhow::Result<Vec<CurvePoint>> {
                    let mut out = Vec::with_capacity(chunk.len());
                    for s in chunk {
                        let metric = scaled_curvature_metric(template, s);
                        let report = lambda_delta(&metric, region, delta)?;
                        out.push(CurvePoint {
                            s,
                            lambda: report.value,
                            sign: report.sign,
                        });
                    }
                    Ok(out)
                }),
            ));
        }
        let chunk_size = axis.len().div_ceil(jobs);
        for (chunk_idx, handle) in handles {
            let rows = handle
                .join()
                .map_err(|_| anyhow!("sweep worker panicked"))??;
            for (offset, point) in rows.into_iter().enumerate() {
                points[chunk_idx * chunk_size + offset] = Some(point);
            }
        }
        Ok(())
    })?;
    let points: Vec<CurvePoint> = points
        .into_iter()
        .map(|p| p.expect("row computed"))
        .collect();

    // locate the crossing sequentially from the sampled signs
    let mut crossing = None;
    for w in points.windows(2) {
        if w[0].lambda.is_finite() && w[1].lambda.is_finite() && w[0].lambda * w[1].lambda < 0.0 {
            let (mut lo, mut hi) = if w[0].lambda > 0.0 {
                (w[0].s, w[1].s)
            } else {
                (w[1].s, w[0].s)
            };
            let mut s_star = 0.5 * (lo + hi);
            for _ in 0..200 {
                s_star = 0.5 * (lo + hi);
                let metric = scaled_curvature_metric(&template, s_star);
                let report = lambda_delta(&metric, &region, delta)?;
                match report.sign {
                    SignClass::Zero => break,
                    SignClass::Positive | SignClass::Infinite => lo = s_star,
                    SignClass::Negative => hi = s_star,
                }
            }
            crossing = Some(s_star);
            break;
        }
    }

    let mut csv = String::from("value,lambda,sign,s_star\n");
    let star = crossing.map(format_g17).unwrap_or_default();
    for p in &points {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            format_g17(p.s),
            if p.lambda.is_finite() {
                format_g17(p.lambda)
            } else {
                "inf".to_string()
            },
            p.sign.as_str(),
            star
        ));
    }
    let curve = LambdaCurve {
        points: points.clone(),
        crossing,
    };
    Ok(RunOutput {
        report: format!(
            "{{\"command\":\"sweep\",\"rows\":{},\"s_star\":{},\"exit\":0}}",
            points.len(),
            crossing
                .map(format_g17)
                .unwrap_or_else(|| "null".to_string()),
        ),
        files: vec![
            ("sweep.csv".to_string(), csv),
            ("curve.csv".to_string(), lambda_curve_csv(&curve)),
        ],
        exit: EXIT_OK,
    })
}

fn run_probe(config: &ExperimentConfig, seed: u64) -> anyhow::Result<RunOutput> {
    let grid = build_grid_from_config(config)?;
    let kind = config
        .params
        .probe
        .clone()
        .unwrap_or_else(|| "inequalities".to_string());
    let samples = config.params.samples.unwrap_or(100);
    match kind.as_str() {
        "inequalities" => {
            let (c1, c2) = probe_inequalities(&grid, samples, seed)?;
            let csv = format!(
                "quantity,value\npoincare_hat,{}\nsobolev_hat,{}\n",
                format_g17(c1),
                format_g17(c2)
            );
            Ok(RunOutput {
                report: format!(
                    "{{\"command\":\"probe\",\"kind\":\"inequalities\",\"poincare_hat\":{},\"sobolev_hat\":{},\"exit\":0}}",
                    format_g17(c1),
                    format_g17(c2)
                ),
                files: vec![("probe.csv".to_string(), csv)],
                exit: EXIT_OK,
            })
        }
        "coercivity" => {
            let metric = build_metric(config, &grid)?;
            let target = build_target(
                config
                    .target
                    .as_ref()
                    .ok_or_else(|| anyhow!("coercivity probe requires a target section"))?,
                &grid,
            )?;
            // the coercivity statement assumes a Yamabe-positive zero set
            let pair = zero_set(&target, &grid);
            let sign = classify_sign(&metric, &pair, &delta_list(config))?;
            if sign != SignClass::Positive {
                return Ok(RunOutput {
                    report: format!(
                        "{{\"command\":\"probe\",\"kind\":\"coercivity\",\"gate\":\"failed\",\"sign\":\"{}\",\"exit\":2}}",
                        sign.as_str()
                    ),
                    files: Vec::new(),
                    exit: EXIT_GATE,
                });
            }
            let q0 = config.params.q0.unwrap_or(2.0);
            let r0 = config.params.r0.unwrap_or(2.0);
            let levels = config
                .params
                .levels
                .clone()
                .unwrap_or_else(|| vec![0.0, 10.0, 100.0]);
            let rows = probe_coercivity(&metric, &target, q0, r0, &levels, samples, seed)?;
            let mut csv = String::from("B,K_hat,below_count\n");
            for row in &rows {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    format_g17(row.level),
                    format_g17(row.k_hat),
                    row.below_count
                ));
            }
            Ok(RunOutput {
                report: format!(
                    "{{\"command\":\"probe\",\"kind\":\"coercivity\",\"levels\":{},\"exit\":0}}",
                    rows.len()
                ),
                files: vec![("probe.csv".to_string(), csv)],
                exit: EXIT_OK,
            })
        }
        other => bail!("unknown probe kind {other:?}"),
    }
}

fn dispatch(config: &ExperimentConfig, jobs: usize, seed: u64) -> anyhow::Result<RunOutput> {
    match config.command {
        Command::Classify => run_classify(config),
        Command::Eigen => run_eigen(config),
        Command::Yamabe => run_yamabe(config, seed),
        Command::Prescribe => run_prescribe(config),
        Command::Mms => run_mms(config),
        Command::Sweep => run_sweep(config, jobs),
        Command::Probe => run_probe(config, seed),
    }
}

fn classify_error_exit(err: &anyhow::Error) -> i32 {
    if let Some(lib_err) = err.downcast_ref::<exterior_yamabe::Error>() {
        match lib_err {
            exterior_yamabe::Error::SignInconsistency(_)
            | exterior_yamabe::Error::NoConvergence(_)
            | exterior_yamabe::Error::OrderingViolated(_)
            | exterior_yamabe::Error::NonCoerciveSystem => EXIT_NO_CONVERGENCE,
            _ => EXIT_USAGE,
        }
    } else {
        EXIT_USAGE
    }
}

/// Executes the config at `config_path`, writing `report.json` and CSVs
/// under `out_dir`. The returned exit code encodes the outcome.
pub fn run(
    command_arg: Command,
    config_path: &Path,
    out_dir: &Path,
    jobs: usize,
    seed_override: Option<u64>,
) -> i32 {
    let write_error_report = |message: &str, exit: i32| {
        let _ = fs::create_dir_all(out_dir);
        let report = format!(
            "{{\"command\":\"{}\",\"error\":{:?},\"exit\":{}}}",
            command_arg.as_str(),
            message,
            exit
        );
        let _ = fs::write(out_dir.join("report.json"), report);
    };

    let config: ExperimentConfig = match fs::read_to_string(config_path)
        .context("reading config")
        .and_then(|text| serde_json::from_str(&text).context("parsing config"))
    {
        Ok(c) => c,
        Err(err) => {
            write_error_report(&format!("{err:#}"), EXIT_USAGE);
            eprintln!("config error: {err:#}");
            return EXIT_USAGE;
        }
    };
    if config.command != command_arg {
        let msg = format!(
            "config command {:?} does not match the invoked subcommand {:?}",
            config.command.as_str(),
            command_arg.as_str()
        );
        write_error_report(&msg, EXIT_USAGE);
        eprintln!("{msg}");
        return EXIT_USAGE;
    }

    let seed = seed_override.or(config.params.seed).unwrap_or(0);
    match dispatch(&config, jobs, seed) {
        Ok(output) => {
            if let Err(err) = fs::create_dir_all(out_dir) {
                eprintln!("cannot create output directory: {err}");
                return EXIT_USAGE;
            }
            for (name, contents) in &output.files {
                if let Err(err) = fs::write(out_dir.join(name), contents) {
                    eprintln!("cannot write {name}: {err}");
                    return EXIT_USAGE;
                }
            }
            if let Err(err) = fs::write(out_dir.join("report.json"), &output.report) {
                eprintln!("cannot write report.json: {err}");
                return EXIT_USAGE;
            }
            output.exit
        }
        Err(err) => {
            let exit = classify_error_exit(&err);
            write_error_report(&format!("{err:#}"), exit);
            eprintln!("error: {err:#}");
            exit
        }
    }
}

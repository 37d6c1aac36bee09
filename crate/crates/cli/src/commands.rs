use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use serde::Serialize;
use serde_json::{json, Value};
use tensorar::evaluation::{
    error_scaling_study, experiment_case, rolling_forecast, scaling_case, summarize,
    write_results_csv, Estimator, FitConfig, ForecastMethod, ForecastOptions, ModelDraw,
    ScalingLambda, ScalingOptions, EXPERIMENT_CASES, SCALING_CASES,
};
use tensorar::io::{self, Encoding};
use tensorar::regularized::LambdaChoice;
use tensorar::{make_dgp, RegressionDesign};

use crate::{
    BenchArgs, CliError, Command, DiffArgs, DrawArg, EstimatorArgs, ExportArgs, FitArgs,
    ForecastArgs, IngestArgs, SimulateArgs,
};

pub fn dispatch(cmd: Command) -> Result<ExitCode, CliError> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Forecast(a) => forecast(a),
        Command::Bench(a) => bench(a),
        Command::Ingest(a) => ingest(a),
        Command::Export(a) => export(a),
        Command::DiffTensor(a) => diff_tensor(a),
    }?;
    Ok(ExitCode::SUCCESS)
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("input file not found: {}", path.display())))
    }
}

fn encoding(binary: bool) -> Encoding {
    if binary {
        Encoding::Binary
    } else {
        Encoding::Text
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut w = create(path)?;
    let io_err = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    if a.t == 0 {
        return Err(usage("--T must be at least 1"));
    }
    let model = make_dgp(&a.dims, &a.ranks, a.seed)?;
    let series = model.simulate(a.t, a.burn_in, a.seed)?;
    let model_out = a.model_out.unwrap_or_else(|| sibling(&a.out, "model.json"));
    io::save_series(&a.out, &series, encoding(a.binary))?;
    io::save_model(&model_out, &model)?;
    println!(
        "wrote {} (dims {:?}, T={}) and {}; spectral radius {:.4}",
        a.out.display(),
        a.dims,
        a.t,
        model_out.display(),
        model.spectral_radius()
    );
    Ok(())
}

fn parse_lambda(s: &str) -> Result<LambdaChoice, CliError> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("bic") {
        return Ok(LambdaChoice::DefaultGrid);
    }
    if let Some(c) = s.strip_prefix("rate:") {
        return c
            .parse()
            .map(LambdaChoice::Rate)
            .map_err(|_| usage(format!("bad rate constant in --lambda {s:?}")));
    }
    if let Some(c) = s.strip_prefix("unit:") {
        return c
            .parse()
            .map(LambdaChoice::UnitRate)
            .map_err(|_| usage(format!("bad rate constant in --lambda {s:?}")));
    }
    s.parse().map(LambdaChoice::Fixed).map_err(|_| {
        usage(format!(
            "--lambda must be 'bic', a number or 'rate:<c>', got {s:?}"
        ))
    })
}

fn fit_config(est: &EstimatorArgs) -> Result<FitConfig, CliError> {
    let mut cfg = FitConfig {
        ranks: est.ranks.clone(),
        ..FitConfig::default()
    };
    cfg.reg.lambda = match &est.grid {
        Some(g) => LambdaChoice::Grid(g.clone()),
        None => parse_lambda(&est.lambda)?,
    };
    cfg.reg.rho = est.rho;
    if let Some(r) = est.relaxation {
        cfg.reg.relaxation = r;
    }
    if let Some(n) = est.max_iter {
        if n == 0 {
            return Err(usage("--max-iter must be at least 1"));
        }
        cfg.reg.max_iter = n;
        cfg.als.max_iter = n;
    }
    if let Some(t) = est.tol {
        if !(t > 0.0) {
            return Err(usage("--tol must be positive"));
        }
        cfg.reg.tol_primal = t;
        cfg.reg.tol_dual = t;
    }
    if let Some(t) = est.als_tol {
        if !(t > 0.0) {
            return Err(usage("--als-tol must be positive"));
        }
        cfg.als.tol = t;
    }
    cfg.reg.gamma = match est.gamma.trim() {
        "auto" => None,
        g => Some(
            g.parse::<f64>()
                .ok()
                .filter(|x| *x >= 0.0 && x.is_finite())
                .ok_or_else(|| {
                    usage(format!(
                        "--gamma must be 'auto' or a nonnegative number, got {g:?}"
                    ))
                })?,
        ),
    };
    cfg.reg.validate()?;
    Ok(cfg)
}

fn parse_estimator(s: &str) -> Result<Estimator, CliError> {
    s.parse().map_err(|e: tensorar::Error| usage(e.to_string()))
}

fn fit(a: FitArgs) -> Result<(), CliError> {
    let estimator = parse_estimator(&a.estimator)?;
    let cfg = fit_config(&a.est)?;
    require_file(&a.input)?;
    let series = io::load_series(&a.input)?;
    let design = RegressionDesign::from_series(&series)?;
    let report = tensorar::evaluation::fit_estimator(&design, estimator, &cfg)?;

    io::save_tensor(&a.out, &report.estimate, encoding(a.binary))?;
    let mut json = serde_json::to_value(&report).map_err(|e| usage(e.to_string()))?;
    let obj = json
        .as_object_mut()
        .expect("report serializes to an object");
    obj.remove("estimate");
    if !a.timing {
        obj.remove("elapsed");
    }
    obj.insert("dims".into(), json!(series.dims()));
    obj.insert("T".into(), json!(series.len()));
    let report_path = a.report.unwrap_or_else(|| sibling(&a.out, "json"));
    write_json(&report_path, &json)?;

    if !report.converged {
        eprintln!(
            "warning: {} did not converge in {} iterations",
            estimator, report.iterations
        );
    }
    let mut line = format!(
        "{estimator}: converged={} iterations={}",
        report.converged, report.iterations
    );
    if let Some(l) = report.lambda {
        line.push_str(&format!(" lambda={l:.6e}"));
    }
    if let Some(r) = &report.ranks {
        line.push_str(&format!(" ranks={r:?}"));
    }
    println!("{line}");
    Ok(())
}

fn forecast(a: ForecastArgs) -> Result<(), CliError> {
    let chosen = [
        a.estimator.is_some(),
        a.model.is_some(),
        a.transition.is_some(),
        a.zero,
    ];
    if chosen.iter().filter(|&&c| c).count() != 1 {
        return Err(usage(
            "choose exactly one of --estimator, --model, --transition, --zero",
        ));
    }
    let method = if let Some(e) = &a.estimator {
        ForecastMethod::Fit {
            estimator: parse_estimator(e)?,
            config: fit_config(&a.est)?,
        }
    } else if let Some(path) = &a.model {
        require_file(path)?;
        ForecastMethod::Fixed {
            label: "model".into(),
            transition: io::load_model(path)?.transition().clone(),
        }
    } else if let Some(path) = &a.transition {
        require_file(path)?;
        ForecastMethod::Fixed {
            label: "transition".into(),
            transition: io::load_tensor(path)?,
        }
    } else {
        ForecastMethod::Zero
    };
    require_file(&a.input)?;
    let series = io::load_series(&a.input)?;
    let opts = ForecastOptions {
        retune_every: a.retune_every,
    };
    let report = rolling_forecast(&series, &method, a.start, &opts)?;
    write_json(&a.out, &report)?;
    if let Some(path) = &a.csv {
        let mut w = create(path)?;
        let io_err = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
        writeln!(w, "origin,l2,linf,lambda").map_err(io_err)?;
        for r in &report.rows {
            let lambda = r.lambda.map(|l| l.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{}", r.origin, r.l2, r.linf, lambda).map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;
    }
    let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.6}"));
    println!(
        "{}: origins {}..{} mean_l2={} mean_linf={} missing={}",
        report.method,
        report.start_origin,
        report.end_origin,
        fmt(report.mean_l2),
        fmt(report.mean_linf),
        report.missing.len()
    );
    Ok(())
}

fn valid_cases() -> String {
    let mut names: Vec<&str> = EXPERIMENT_CASES.iter().map(|c| c.name).collect();
    names.extend(SCALING_CASES);
    names.join(", ")
}

fn bench(a: BenchArgs) -> Result<(), CliError> {
    if a.reps == Some(0) {
        return Err(usage("--reps must be at least 1"));
    }
    let summary_path = a.summary.clone().unwrap_or_else(|| sibling(&a.out, "json"));
    if let Some(case) = experiment_case(&a.case) {
        let mut spec = case.spec();
        if let Some(ts) = &a.t {
            spec.sample_sizes = ts.clone();
        }
        if let Some(r) = &a.ranks {
            spec.ranks = r.clone();
        }
        if let Some(list) = &a.estimators {
            spec.estimators = list
                .split(',')
                .map(parse_estimator)
                .collect::<Result<_, _>>()?;
        }
        spec.replications = a.reps.unwrap_or(spec.replications);
        spec.root_seed = a.seed;
        spec.burn_in = a.burn_in;
        spec.model_draw = match a.model_draw {
            DrawArg::PerReplication => ModelDraw::PerReplication,
            DrawArg::Fixed => ModelDraw::Fixed,
        };
        let lambda = a.lambda.as_deref().unwrap_or("bic");
        spec.config.reg.lambda = parse_lambda(lambda)?;
        spec.validate()?;

        let rows = tensorar::evaluation::run_experiment(&spec)?;
        write_results_csv(create(&a.out)?, &rows)?;
        let summary = summarize(&rows);
        for s in &summary {
            println!(
                "{} T={} {}: mean_fro={} se={} failures={}",
                s.case,
                s.t,
                s.estimator,
                s.mean_fro.map_or("n/a".into(), |v| format!("{v:.4}")),
                s.se_fro.map_or("n/a".into(), |v| format!("{v:.4}")),
                s.failures
            );
        }
        let meta = json!({
            "kind": "comparison",
            "case": spec.name,
            "dims": spec.dims,
            "ranks": spec.ranks,
            "sample_sizes": spec.sample_sizes,
            "estimators": spec.estimators,
            "replications": spec.replications,
            "root_seed": spec.root_seed,
            "burn_in": spec.burn_in,
            "model_draw": spec.model_draw,
            "lambda": lambda,
            "summary": summary,
        });
        return write_json(&summary_path, &meta);
    }

    let case = scaling_case(&a.case).ok_or_else(|| {
        usage(format!(
            "unknown case '{}' (valid cases: {})",
            a.case,
            valid_cases()
        ))
    })?;
    if a.t.is_some() || a.ranks.is_some() || a.estimators.is_some() {
        return Err(usage(
            "--T, --ranks and --estimators apply to comparison cases only",
        ));
    }
    let lambda = match a.lambda.as_deref() {
        None => ScalingOptions::default().lambda,
        Some(s) => match parse_lambda(s)? {
            LambdaChoice::DefaultGrid => ScalingLambda::Bic,
            LambdaChoice::Rate(c) => ScalingLambda::Rate(c),
            LambdaChoice::UnitRate(c) => ScalingLambda::UnitRate(c),
            _ => {
                return Err(usage(
                    "scaling sweeps take --lambda bic, rate:<c> or unit:<c>",
                ))
            }
        },
    };
    let opts = ScalingOptions {
        replications: a.reps.unwrap_or(30),
        root_seed: a.seed,
        burn_in: a.burn_in,
        lambda,
        ..ScalingOptions::default()
    };
    let (rows, raw) = error_scaling_study(&case, &opts)?;
    write_results_csv(create(&a.out)?, &raw)?;
    for r in &rows {
        println!(
            "({}) {}: mean_sq={} sd={} failures={}",
            case.name,
            r.label,
            r.mean_sq.map_or("n/a".into(), |v| format!("{v:.5}")),
            r.sd_sq.map_or("n/a".into(), |v| format!("{v:.5}")),
            r.failures
        );
    }
    let trend = linear_trend(
        &rows
            .iter()
            .filter_map(|r| Some((r.value, r.mean_sq?)))
            .collect::<Vec<_>>(),
    );
    let meta = json!({
        "kind": "scaling",
        "case": case.name,
        "varying": case.varying,
        "points": case.points,
        "replications": opts.replications,
        "root_seed": opts.root_seed,
        "burn_in": opts.burn_in,
        "lambda": opts.lambda,
        "rows": rows,
        "trend": trend,
    });
    write_json(&summary_path, &meta)
}

/// Least-squares line of mean error on the swept value, with R² and the
/// max/min ratio of the means.
fn linear_trend(pts: &[(f64, f64)]) -> Value {
    if pts.len() < 2 {
        return Value::Null;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let max = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let min = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    json!({
        "slope": slope,
        "intercept": my - slope * mx,
        "r_squared": sxy * sxy / (sxx * syy),
        "max_min_ratio": max / min,
    })
}

fn ingest(a: IngestArgs) -> Result<(), CliError> {
    require_file(&a.input)?;
    let file =
        File::open(&a.input).map_err(|e| CliError::Io(format!("{}: {e}", a.input.display())))?;
    let series = io::read_csv_series(file, &a.dims, a.demean)?;
    io::save_series(&a.out, &series, encoding(a.binary))?;
    println!(
        "wrote {} (dims {:?}, T={})",
        a.out.display(),
        series.dims(),
        series.len()
    );
    Ok(())
}

fn export(a: ExportArgs) -> Result<(), CliError> {
    require_file(&a.input)?;
    let series = io::load_series(&a.input)?;
    match &a.out {
        Some(path) => io::write_csv_series(create(path)?, &series)?,
        None => io::write_csv_series(std::io::stdout().lock(), &series)?,
    }
    Ok(())
}

/// A tensor file, or the transition tensor of a model JSON file.
fn load_tensor_or_model(path: &Path) -> Result<tensorar::DenseTensor, CliError> {
    if path.extension().is_some_and(|e| e == "json") {
        Ok(io::load_model(path)?.transition().clone())
    } else {
        Ok(io::load_tensor(path)?)
    }
}

fn diff_tensor(a: DiffArgs) -> Result<(), CliError> {
    require_file(&a.left)?;
    require_file(&a.right)?;
    let x = load_tensor_or_model(&a.left)?;
    let y = load_tensor_or_model(&a.right)?;
    if x.dims() != y.dims() {
        return Err(usage(format!(
            "shapes differ: {:?} vs {:?}",
            x.dims(),
            y.dims()
        )));
    }
    let diff = x.sub(&y)?.max_abs();
    println!("max_abs_diff {diff:e}");
    if diff > a.tol {
        return Err(CliError::Differ(format!(
            "tensors differ by {diff:e} > {:e}",
            a.tol
        )));
    }
    Ok(())
}

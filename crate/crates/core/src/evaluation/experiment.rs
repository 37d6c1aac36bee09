use crate::clock::Stopwatch;
use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{fit_estimator, Estimator, FitConfig};
use crate::error::{invalid, Error, Result};
use crate::least_squares::{FitReport, RegressionDesign};
use crate::model::{make_dgp, param_count};
use crate::regularized::truncate_report;
use crate::rng::{derive_seed, TAG_MODEL, TAG_SERIES};

/// Whether each replication draws its own transition tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelDraw {
    PerReplication,
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub dims: Vec<usize>,
    pub ranks: Vec<usize>,
    pub sample_sizes: Vec<usize>,
    pub estimators: Vec<Estimator>,
    pub replications: usize,
    pub root_seed: u64,
    pub burn_in: usize,
    pub model_draw: ModelDraw,
    /// Estimator settings; RRR and LTR use `ranks` unless this sets its own.
    pub config: FitConfig,
}

impl ExperimentSpec {
    pub fn new(name: &str, dims: &[usize], ranks: &[usize]) -> Self {
        Self {
            name: name.to_string(),
            dims: dims.to_vec(),
            ranks: ranks.to_vec(),
            sample_sizes: vec![1000],
            estimators: vec![Estimator::Ols],
            replications: 50,
            root_seed: 0,
            burn_in: 200,
            model_draw: ModelDraw::PerReplication,
            config: FitConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(invalid("replications must be at least 1"));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(invalid("sample sizes must be nonempty and positive"));
        }
        if self.estimators.is_empty() {
            return Err(invalid("at least one estimator is required"));
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(invalid(format!("invalid dims {:?}", self.dims)));
        }
        param_count(&self.dims, &self.ranks)?;
        if self.ranks.contains(&0) {
            return Err(invalid("ranks must be positive"));
        }
        self.config.reg.validate()
    }

    fn model_seed(&self, rep: usize) -> u64 {
        match self.model_draw {
            ModelDraw::PerReplication => derive_seed(self.root_seed, &[TAG_MODEL, rep as u64]),
            ModelDraw::Fixed => derive_seed(self.root_seed, &[TAG_MODEL]),
        }
    }
}

/// One (estimator, T, replication) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub case: String,
    pub estimator: Estimator,
    #[serde(rename = "T")]
    pub t: usize,
    pub replication: usize,
    pub fro_error: Option<f64>,
    pub sq_error: Option<f64>,
    pub runtime_s: f64,
    pub converged: bool,
    pub lambda: Option<f64>,
    pub ranks: Option<Vec<usize>>,
    pub error: Option<String>,
}

impl ResultRow {
    fn failed(case: &str, estimator: Estimator, t: usize, replication: usize, err: &Error) -> Self {
        Self {
            case: case.to_string(),
            estimator,
            t,
            replication,
            fro_error: None,
            sq_error: None,
            runtime_s: 0.0,
            converged: false,
            lambda: None,
            ranks: None,
            error: Some(err.to_string()),
        }
    }
}

fn replication(spec: &ExperimentSpec, rep: usize) -> Vec<ResultRow> {
    let cells = spec.sample_sizes.len() * spec.estimators.len();
    let fail_all = |e: &Error| {
        let mut rows = Vec::with_capacity(cells);
        for &t in &spec.sample_sizes {
            for &est in &spec.estimators {
                rows.push(ResultRow::failed(&spec.name, est, t, rep, e));
            }
        }
        rows
    };
    let model = match make_dgp(&spec.dims, &spec.ranks, spec.model_seed(rep)) {
        Ok(m) => m,
        Err(e) => return fail_all(&e),
    };
    let t_max = *spec.sample_sizes.iter().max().expect("validated");
    let series_seed = derive_seed(spec.root_seed, &[TAG_SERIES, rep as u64]);
    // T + 1 observations give T lagged pairs; smaller T use prefixes of the same path
    let series = match model.simulate(t_max + 1, spec.burn_in, series_seed) {
        Ok(s) => s,
        Err(e) => return fail_all(&e),
    };
    let mut config = spec.config.clone();
    config.ranks.get_or_insert_with(|| spec.ranks.clone());

    let mut rows = Vec::with_capacity(cells);
    for &t in &spec.sample_sizes {
        let design = series
            .window(0, t + 1)
            .and_then(|s| RegressionDesign::from_series(&s));
        let mut ssn: Option<FitReport> = None;
        for &est in &spec.estimators {
            let design = match &design {
                Ok(d) => d,
                Err(e) => {
                    rows.push(ResultRow::failed(&spec.name, est, t, rep, e));
                    continue;
                }
            };
            let start = Stopwatch::start();
            let fit = match (est, &ssn) {
                (Estimator::Tssn, Some(s)) => truncate_report(s.clone(), config.reg.gamma),
                _ => fit_estimator(design, est, &config),
            };
            let mut runtime = start.seconds();
            match fit {
                Ok(f) => {
                    if est == Estimator::Tssn {
                        if let Some(s) = &ssn {
                            runtime += s.elapsed;
                        }
                    }
                    let err = match f.estimate.sub(model.transition()) {
                        Ok(diff) => diff.norm(),
                        Err(e) => {
                            rows.push(ResultRow::failed(&spec.name, est, t, rep, &e));
                            continue;
                        }
                    };
                    rows.push(ResultRow {
                        case: spec.name.clone(),
                        estimator: est,
                        t,
                        replication: rep,
                        fro_error: Some(err),
                        sq_error: Some(err * err),
                        runtime_s: runtime,
                        converged: f.converged,
                        lambda: f.lambda,
                        ranks: f.ranks.clone(),
                        error: None,
                    });
                    if est == Estimator::Ssn {
                        ssn = Some(f);
                    }
                }
                Err(e) => rows.push(ResultRow::failed(&spec.name, est, t, rep, &e)),
            }
        }
    }
    rows
}

/// Runs every replication of `spec`. Replication `r` draws its model from
/// `(root_seed, r)` (or one model for all under [`ModelDraw::Fixed`]) and
/// simulates one path of length `max T + 1`; each sample size uses a
/// prefix of that path. Failed fits are recorded per cell.
///
/// Rows come back ordered by replication, then T, then estimator, and apart
/// from `runtime_s` are a pure function of the spec.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    #[cfg(feature = "parallel")]
    let per_rep: Vec<Vec<ResultRow>> = {
        use rayon::prelude::*;
        (0..spec.replications)
            .into_par_iter()
            .map(|r| replication(spec, r))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_rep: Vec<Vec<ResultRow>> = (0..spec.replications)
        .map(|r| replication(spec, r))
        .collect();
    Ok(per_rep.into_iter().flatten().collect())
}

/// Mean, standard deviation and standard error per (case, estimator, T).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub case: String,
    pub estimator: Estimator,
    #[serde(rename = "T")]
    pub t: usize,
    pub n: usize,
    pub failures: usize,
    pub nonconverged: usize,
    pub mean_fro: Option<f64>,
    pub sd_fro: Option<f64>,
    pub se_fro: Option<f64>,
    pub mean_sq: Option<f64>,
    pub sd_sq: Option<f64>,
    pub mean_runtime_s: Option<f64>,
}

fn mean_sd(v: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = v.len();
    if n == 0 {
        return (None, None);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(sd))
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, usize, usize), (&ResultRow, Vec<&ResultRow>)> =
        BTreeMap::new();
    let mut case_order: Vec<&str> = Vec::new();
    for r in rows {
        let ci = case_order
            .iter()
            .position(|c| *c == r.case)
            .unwrap_or_else(|| {
                case_order.push(&r.case);
                case_order.len() - 1
            });
        let est = Estimator::ALL
            .iter()
            .position(|e| *e == r.estimator)
            .expect("closed set");
        groups
            .entry((ci, r.t, est))
            .or_insert_with(|| (r, Vec::new()))
            .1
            .push(r);
    }
    groups
        .into_values()
        .map(|(first, members)| {
            let ok: Vec<&ResultRow> = members
                .iter()
                .copied()
                .filter(|r| r.fro_error.is_some())
                .collect();
            let fro: Vec<f64> = ok.iter().filter_map(|r| r.fro_error).collect();
            let sq: Vec<f64> = ok.iter().filter_map(|r| r.sq_error).collect();
            let rt: Vec<f64> = ok.iter().map(|r| r.runtime_s).collect();
            let (mean_fro, sd_fro) = mean_sd(&fro);
            let (mean_sq, sd_sq) = mean_sd(&sq);
            SummaryRow {
                case: first.case.clone(),
                estimator: first.estimator,
                t: first.t,
                n: ok.len(),
                failures: members.len() - ok.len(),
                nonconverged: ok.iter().filter(|r| !r.converged).count(),
                mean_fro,
                sd_fro,
                se_fro: sd_fro.map(|s| s / (ok.len() as f64).sqrt()),
                mean_sq,
                sd_sq,
                mean_runtime_s: mean_sd(&rt).0,
            }
        })
        .collect()
}

/// CSV with columns `case, estimator, T, replication, fro_error, sq_error,
/// runtime_s`; failed cells leave the error columns empty.
pub fn write_results_csv<W: Write>(w: W, rows: &[ResultRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Io(e.into());
    out.write_record([
        "case",
        "estimator",
        "T",
        "replication",
        "fro_error",
        "sq_error",
        "runtime_s",
    ])
    .map_err(io)?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        out.write_record([
            r.case.clone(),
            r.estimator.to_string(),
            r.t.to_string(),
            r.replication.to_string(),
            opt(r.fro_error),
            opt(r.sq_error),
            format!("{:.6}", r.runtime_s),
        ])
        .map_err(io)?;
    }
    Ok(out.flush()?)
}

use serde::{Deserialize, Serialize};

use super::experiment::{run_experiment, ExperimentSpec, ResultRow};
use super::{Estimator, FitConfig};
use crate::error::{invalid, Result};
use crate::regularized::{LambdaChoice, RegOptions, SquareModeSets};
use crate::rng::derive_seed;

pub const SCALING_CASES: [&str; 8] = ["a", "b", "c", "d", "e", "f", "g", "h"];

/// One setting of the swept parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub label: String,
    /// Regressor for the error trend: `p`, `1/T`, `s_0` or the first `p_i`.
    pub value: f64,
    pub dims: Vec<usize>,
    pub ranks: Vec<usize>,
    #[serde(rename = "T")]
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCase {
    pub name: String,
    /// What `value` measures.
    pub varying: String,
    pub points: Vec<ScalingPoint>,
}

/// Average generic rank of the square matricizations of a Tucker tensor
/// with the given multilinear ranks.
fn s0(ranks: &[usize]) -> f64 {
    let sets = SquareModeSets::new(ranks.len() / 2);
    let total: usize = sets
        .sets()
        .iter()
        .map(|set| {
            let rows: usize = set.iter().map(|&m| ranks[m]).product();
            let all: usize = ranks.iter().product();
            rows.min(all / rows)
        })
        .sum();
    total as f64 / sets.sets().len() as f64
}

fn point(label: String, value: f64, dims: &[usize], ranks: &[usize], t: usize) -> ScalingPoint {
    ScalingPoint {
        label,
        value,
        dims: dims.to_vec(),
        ranks: ranks.to_vec(),
        t,
    }
}

fn join(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn by_dims(
    varying: &str,
    dims: &[&[usize]],
    ranks: &[usize],
    t: usize,
    value: fn(&[usize]) -> f64,
) -> (String, Vec<ScalingPoint>) {
    let pts = dims
        .iter()
        .map(|d| point(format!("p=({})", join(d)), value(d), d, ranks, t))
        .collect();
    (varying.to_string(), pts)
}

fn by_t(dims: &[usize], ranks: &[usize], ts: &[usize]) -> (String, Vec<ScalingPoint>) {
    let pts = ts
        .iter()
        .map(|&t| point(format!("T={t}"), 1.0 / t as f64, dims, ranks, t))
        .collect();
    ("1/T".to_string(), pts)
}

fn by_ranks(dims: &[usize], ranks: &[&[usize]], t: usize) -> (String, Vec<ScalingPoint>) {
    let pts = ranks
        .iter()
        .map(|r| point(format!("r=({})", join(r)), s0(r), dims, r, t))
        .collect();
    ("s0".to_string(), pts)
}

fn total(d: &[usize]) -> f64 {
    d.iter().product::<usize>() as f64
}

fn first(d: &[usize]) -> f64 {
    d[0] as f64
}

/// The eight sweeps of the SSN error-scaling study.
pub fn scaling_case(name: &str) -> Option<ScalingCase> {
    let name = name.to_ascii_lowercase();
    let r4: &[usize] = &[2, 2, 2, 2];
    let r6: &[usize] = &[2, 2, 2, 2, 2, 2];
    let (varying, points) = match name.as_str() {
        "a" => by_dims(
            "p",
            &[&[5, 5], &[7, 7], &[9, 9], &[10, 10], &[11, 11]],
            r4,
            500,
            total,
        ),
        "b" => by_t(&[8, 8], r4, &[200, 400, 600, 800, 1000]),
        "c" => by_ranks(
            &[8, 8],
            &[
                &[1, 1, 1, 1],
                &[1, 2, 1, 2],
                &[2, 2, 2, 2],
                &[2, 3, 2, 3],
                &[3, 3, 3, 3],
            ],
            500,
        ),
        "d" => by_dims(
            "p1",
            &[&[3, 48], &[4, 36], &[6, 24], &[8, 18], &[12, 12]],
            &[1, 1, 1, 1],
            1000,
            first,
        ),
        "e" => by_dims(
            "p",
            &[&[4, 4, 4], &[4, 4, 5], &[4, 5, 5], &[5, 5, 5], &[5, 5, 6]],
            r6,
            1000,
            total,
        ),
        "f" => by_t(&[5, 5, 5], r6, &[600, 800, 1000, 1200, 1400]),
        "g" => by_ranks(
            &[5, 5, 5],
            &[
                &[1, 1, 1, 1, 1, 1],
                &[1, 1, 2, 1, 1, 2],
                &[1, 2, 2, 1, 2, 2],
                &[2, 2, 2, 2, 2, 2],
                &[2, 2, 3, 2, 2, 3],
            ],
            1000,
        ),
        "h" => by_dims(
            "p1",
            &[
                &[2, 2, 36],
                &[3, 3, 16],
                &[4, 4, 9],
                &[3, 4, 12],
                &[4, 6, 6],
            ],
            &[1, 1, 1, 1, 1, 1],
            1000,
            first,
        ),
        _ => return None,
    };
    Some(ScalingCase {
        name,
        varying,
        points,
    })
}

/// Default `c` in `λ = c · unit_rate_lambda`. It minimizes the mean squared
/// SSN error at the middle points of sweeps (b) and (d) on draws independent
/// of the study seeds.
pub const DEFAULT_SCALING_RATE: f64 = 1.5;

/// How λ is set in the scaling study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingLambda {
    /// BIC over the default grid.
    Bic,
    /// `c` times [`rate_lambda`](crate::regularized::rate_lambda).
    Rate(f64),
    /// `c` times [`unit_rate_lambda`](crate::regularized::unit_rate_lambda).
    UnitRate(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingOptions {
    pub replications: usize,
    pub root_seed: u64,
    pub burn_in: usize,
    pub lambda: ScalingLambda,
    pub reg: RegOptions,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        Self {
            replications: 30,
            root_seed: 0,
            burn_in: 200,
            lambda: ScalingLambda::UnitRate(DEFAULT_SCALING_RATE),
            reg: RegOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub label: String,
    pub value: f64,
    pub n: usize,
    pub failures: usize,
    pub mean_sq: Option<f64>,
    pub sd_sq: Option<f64>,
}

/// Replicates SSN fits at every point of `case` and reports the mean and
/// standard deviation of `‖Â − A‖_F²`. Returns the per-point summary and the
/// raw rows (with `case` set to `<name>:<label>`).
pub fn error_scaling_study(
    case: &ScalingCase,
    opts: &ScalingOptions,
) -> Result<(Vec<ScalingRow>, Vec<ResultRow>)> {
    if opts.replications == 0 {
        return Err(invalid("replications must be at least 1"));
    }
    let mut reg = opts.reg.clone();
    reg.lambda = match opts.lambda {
        ScalingLambda::Bic => LambdaChoice::DefaultGrid,
        ScalingLambda::Rate(c) => LambdaChoice::Rate(c),
        ScalingLambda::UnitRate(c) => LambdaChoice::UnitRate(c),
    };
    let mut summary = Vec::with_capacity(case.points.len());
    let mut raw = Vec::new();
    for (i, pt) in case.points.iter().enumerate() {
        let mut spec =
            ExperimentSpec::new(&format!("{}:{}", case.name, pt.label), &pt.dims, &pt.ranks);
        spec.sample_sizes = vec![pt.t];
        spec.estimators = vec![Estimator::Ssn];
        spec.replications = opts.replications;
        spec.root_seed = derive_seed(opts.root_seed, &[i as u64]);
        spec.burn_in = opts.burn_in;
        spec.config = FitConfig {
            reg: reg.clone(),
            ..FitConfig::default()
        };
        let rows = run_experiment(&spec)?;
        let sq: Vec<f64> = rows.iter().filter_map(|r| r.sq_error).collect();
        let n = sq.len();
        let mean = (n > 0).then(|| sq.iter().sum::<f64>() / n as f64);
        let sd = mean.map(|m| {
            if n > 1 {
                (sq.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            }
        });
        summary.push(ScalingRow {
            label: pt.label.clone(),
            value: pt.value,
            n,
            failures: rows.len() - n,
            mean_sq: mean,
            sd_sq: sd,
        });
        raw.extend(rows);
    }
    Ok((summary, raw))
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tensorar::io::{load_series, save_series, Encoding};
use tensorar::{make_dgp, DenseTensor, TensorSeries};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tensorar"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tensorar-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn ok(out: Output) -> Output {
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_header_and_is_deterministic() {
    let dir = scratch("simulate");
    let args = [
        "simulate", "--dims", "5,5", "--ranks", "2,2,2,2", "--T", "1000", "--seed", "7", "--out",
        "s.tsr",
    ];
    ok(run(&dir, &args));
    let first = fs::read(dir.join("s.tsr")).unwrap();
    let header = String::from_utf8_lossy(&first)
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert_eq!(header, "TSR1 d=2 dims=5,5 T=1000");
    assert!(dir.join("s.model.json").is_file());
    let model_first = fs::read(dir.join("s.model.json")).unwrap();
    ok(run(&dir, &args));
    assert_eq!(fs::read(dir.join("s.tsr")).unwrap(), first);
    assert_eq!(fs::read(dir.join("s.model.json")).unwrap(), model_first);

    let bad = run(
        &dir,
        &[
            "simulate", "--dims", "3,3", "--ranks", "4,2,2,2", "--T", "10", "--out", "x.tsr",
        ],
    );
    assert_eq!(code(&bad), 2);
}

#[test]
fn binary_series_round_trips() {
    let dir = scratch("binary");
    ok(run(
        &dir,
        &[
            "simulate", "--dims", "2,3", "--ranks", "1,1,1,1", "--T", "20", "--binary", "--out",
            "b.tsr",
        ],
    ));
    ok(run(
        &dir,
        &[
            "simulate", "--dims", "2,3", "--ranks", "1,1,1,1", "--T", "20", "--out", "t.tsr",
        ],
    ));
    let b = load_series(&dir.join("b.tsr")).unwrap();
    let t = load_series(&dir.join("t.tsr")).unwrap();
    assert_eq!(b.observations(), t.observations());
}

#[test]
fn fit_ols_is_close_to_truth_and_missing_input_is_usage_error() {
    let dir = scratch("fit-ols");
    ok(run(
        &dir,
        &[
            "simulate", "--dims", "2,2", "--ranks", "1,1,1,1", "--T", "20000", "--seed", "3",
            "--out", "s.tsr",
        ],
    ));
    ok(run(
        &dir,
        &[
            "fit",
            "--input",
            "s.tsr",
            "--estimator",
            "ols",
            "--out",
            "ols.tsr",
        ],
    ));
    let report = json(&dir.join("ols.json"));
    assert_eq!(report["estimator"], "OLS");
    assert!(report.get("elapsed").is_none());
    assert_eq!(
        code(&run(
            &dir,
            &["diff-tensor", "ols.tsr", "s.model.json", "--tol", "0.05"]
        )),
        0
    );
    assert_eq!(
        code(&run(
            &dir,
            &["diff-tensor", "ols.tsr", "s.model.json", "--tol", "1e-9"]
        )),
        1
    );
    assert_eq!(
        code(&run(
            &dir,
            &["diff-tensor", "ols.tsr", "ols.tsr", "--tol", "0"]
        )),
        0
    );

    let missing = run(
        &dir,
        &[
            "fit",
            "--input",
            "nope.tsr",
            "--estimator",
            "ols",
            "--out",
            "x.tsr",
        ],
    );
    assert_eq!(code(&missing), 2);
    assert!(stderr(&missing).contains("not found"));
    let unknown = run(
        &dir,
        &[
            "fit",
            "--input",
            "s.tsr",
            "--estimator",
            "lasso",
            "--out",
            "x.tsr",
        ],
    );
    assert_eq!(code(&unknown), 2);
    let no_ranks = run(
        &dir,
        &[
            "fit",
            "--input",
            "s.tsr",
            "--estimator",
            "ltr",
            "--out",
            "x.tsr",
        ],
    );
    assert_eq!(code(&no_ranks), 2);
}

#[test]
fn fit_tssn_records_auto_gamma_and_bic_table() {
    let dir = scratch("fit-tssn");
    ok(run(
        &dir,
        &[
            "simulate", "--dims", "3,3", "--ranks", "1,1,1,1", "--T", "400", "--seed", "5",
            "--out", "s.tsr",
        ],
    ));
    ok(run(
        &dir,
        &[
            "fit",
            "--input",
            "s.tsr",
            "--estimator",
            "TSSN",
            "--out",
            "a.tsr",
            "--timing",
        ],
    ));
    let r = json(&dir.join("a.json"));
    let lambda = r["lambda"].as_f64().unwrap();
    let gamma = r["gamma"].as_f64().unwrap();
    // 2^{d-1} λ / 4 with d = 2
    assert!((gamma - lambda / 2.0).abs() <= 1e-15 * lambda);
    assert!(r["bic_table"].as_array().unwrap().len() > 1);
    assert!(r["objective_trace"].as_array().unwrap().len() > 1);
    assert_eq!(r["ranks"].as_array().unwrap().len(), 4);
    assert!(r["elapsed"].is_number());

    ok(run(
        &dir,
        &[
            "fit",
            "--input",
            "s.tsr",
            "--estimator",
            "ssn",
            "--lambda",
            "0.05",
            "--out",
            "f.tsr",
        ],
    ));
    assert_eq!(json(&dir.join("f.json"))["lambda"].as_f64(), Some(0.05));
    let bad = run(
        &dir,
        &[
            "fit",
            "--input",
            "s.tsr",
            "--estimator",
            "ssn",
            "--lambda",
            "-1",
            "--out",
            "f.tsr",
        ],
    );
    assert_eq!(code(&bad), 2);
}

#[test]
fn soft_nonconvergence_still_exits_zero() {
    let dir = scratch("nonconv");
    ok(run(
        &dir,
        &[
            "simulate", "--dims", "3,3", "--ranks", "2,2,2,2", "--T", "300", "--out", "s.tsr",
        ],
    ));
    let out = ok(run(
        &dir,
        &[
            "fit",
            "--input",
            "s.tsr",
            "--estimator",
            "sn",
            "--lambda",
            "0.01",
            "--max-iter",
            "2",
            "--out",
            "a.tsr",
        ],
    ));
    assert!(String::from_utf8_lossy(&out.stdout).contains("converged=false"));
    assert_eq!(json(&dir.join("a.json"))["converged"], false);
}

fn noiseless(dims: &[usize], t_len: usize) -> (tensorar::LrtarModel, TensorSeries) {
    let model = make_dgp(dims, &[2, 2, 2, 2], 8).unwrap();
    let mut y = DenseTensor::from_fn(dims, |i| 1.0 + i.iter().sum::<usize>() as f64);
    let mut obs = vec![y.clone()];
    for _ in 1..t_len {
        y = model.conditional_mean(&y).unwrap();
        obs.push(y.clone());
    }
    (model, TensorSeries::new(dims.to_vec(), obs).unwrap())
}

#[test]
fn forecast_reports() {
    let dir = scratch("forecast");
    let (model, series) = noiseless(&[3, 2], 30);
    save_series(&dir.join("n.tsr"), &series, Encoding::Text).unwrap();
    tensorar::io::save_model(&dir.join("m.json"), &model).unwrap();

    ok(run(
        &dir,
        &[
            "forecast", "--input", "n.tsr", "--model", "m.json", "--start", "5", "--out", "o.json",
            "--csv", "o.csv",
        ],
    ));
    let r = json(&dir.join("o.json"));
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 26);
    assert!(rows.iter().all(|x| x["l2"].as_f64().unwrap() < 1e-12));
    assert_eq!(
        fs::read_to_string(dir.join("o.csv"))
            .unwrap()
            .lines()
            .count(),
        27
    );

    ok(run(
        &dir,
        &[
            "forecast", "--input", "n.tsr", "--zero", "--start", "30", "--out", "z.json",
        ],
    ));
    let z = json(&dir.join("z.json"));
    assert_eq!(z["rows"].as_array().unwrap().len(), 1);

    ok(run(
        &dir,
        &[
            "simulate", "--dims", "2,2", "--ranks", "1,1,1,1", "--T", "120", "--seed", "2",
            "--out", "s.tsr",
        ],
    ));
    ok(run(
        &dir,
        &[
            "forecast",
            "--input",
            "s.tsr",
            "--estimator",
            "ols",
            "--start",
            "100",
            "--out",
            "f.json",
        ],
    ));
    let f = json(&dir.join("f.json"));
    let rows = f["rows"].as_array().unwrap();
    let mean = rows.iter().map(|x| x["l2"].as_f64().unwrap()).sum::<f64>() / rows.len() as f64;
    let linf = rows
        .iter()
        .map(|x| x["linf"].as_f64().unwrap())
        .sum::<f64>()
        / rows.len() as f64;
    assert!((mean - f["mean_l2"].as_f64().unwrap()).abs() < 1e-12);
    assert!((linf - f["mean_linf"].as_f64().unwrap()).abs() < 1e-12);

    assert_eq!(
        code(&run(
            &dir,
            &["forecast", "--input", "s.tsr", "--zero", "--start", "121", "--out", "x.json"]
        )),
        2
    );
    assert_eq!(
        code(&run(
            &dir,
            &[
                "forecast",
                "--input",
                "s.tsr",
                "--zero",
                "--estimator",
                "ols",
                "--start",
                "50",
                "--out",
                "x.json"
            ]
        )),
        2
    );
}

#[test]
fn bench_comparison_table_shape() {
    let dir = scratch("bench");
    ok(run(
        &dir,
        &[
            "bench", "--case", "1a", "--reps", "5", "--T", "1000", "--out", "r.csv",
        ],
    ));
    let csv = fs::read_to_string(dir.join("r.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "case,estimator,T,replication,fro_error,sq_error,runtime_s"
    );
    assert_eq!(lines.count(), 15);
    let s = json(&dir.join("r.json"));
    assert_eq!(s["kind"], "comparison");
    assert_eq!(s["summary"].as_array().unwrap().len(), 3);

    assert_eq!(
        code(&run(
            &dir,
            &["bench", "--case", "1a", "--reps", "0", "--out", "x.csv"]
        )),
        2
    );
    let unknown = run(&dir, &["bench", "--case", "9z", "--out", "x.csv"]);
    assert_eq!(code(&unknown), 2);
    let msg = stderr(&unknown);
    assert!(
        msg.contains("1a") && msg.contains("4b") && msg.contains("h"),
        "{msg}"
    );
}

#[test]
fn bench_scaling_sweeps_sample_sizes() {
    let dir = scratch("bench-b");
    ok(run(
        &dir,
        &["bench", "--case", "b", "--reps", "1", "--out", "b.csv"],
    ));
    let s = json(&dir.join("b.json"));
    assert_eq!(s["kind"], "scaling");
    let ts: Vec<u64> = s["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["T"].as_u64().unwrap())
        .collect();
    assert_eq!(ts, vec![200, 400, 600, 800, 1000]);
    assert_eq!(s["rows"].as_array().unwrap().len(), 5);
    assert_eq!(
        code(&run(
            &dir,
            &["bench", "--case", "b", "--T", "100", "--out", "x.csv"]
        )),
        2
    );
}

#[test]
fn ingest_export_round_trip() {
    let dir = scratch("ingest");
    fs::write(dir.join("p.csv"), "a,b,c,d\n1,2,3,4\n5,6,7,8\n9,10,11,13\n").unwrap();
    ok(run(
        &dir,
        &[
            "ingest", "--input", "p.csv", "--dims", "2,2", "--out", "p.tsr",
        ],
    ));
    let s = load_series(&dir.join("p.tsr")).unwrap();
    assert_eq!(s.len(), 3);
    assert_eq!(s.dims(), &[2, 2]);
    assert_eq!(s.get(2).get(&[1, 1]), 13.0);

    ok(run(
        &dir,
        &["export", "--input", "p.tsr", "--out", "back.csv"],
    ));
    let back: Vec<Vec<f64>> = fs::read_to_string(dir.join("back.csv"))
        .unwrap()
        .lines()
        .filter_map(|l| l.split(',').map(|x| x.trim().parse().ok()).collect())
        .collect();
    assert_eq!(
        back,
        vec![
            vec![1.0, 2.0, 3.0, 4.0],
            vec![5.0, 6.0, 7.0, 8.0],
            vec![9.0, 10.0, 11.0, 13.0]
        ]
    );

    ok(run(
        &dir,
        &[
            "ingest", "--input", "p.csv", "--dims", "2,2", "--demean", "--out", "d.tsr",
        ],
    ));
    let d = load_series(&dir.join("d.tsr")).unwrap();
    let rows = d.to_rows();
    for j in 0..4 {
        assert!(rows.column(j).mean().abs() < 1e-12);
    }
    assert_eq!(
        code(&run(
            &dir,
            &["ingest", "--input", "p.csv", "--dims", "3,2", "--out", "x.tsr"]
        )),
        2
    );
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = scratch("config");
    fs::write(dir.join("sim.conf"), "# simulation\ndims = 2,2\nranks = 1,1,1,1\nT = 50\nseed = 4\nout = c.tsr\nbinary = false\n").unwrap();
    ok(run(&dir, &["simulate", "--config", "sim.conf"]));
    assert_eq!(load_series(&dir.join("c.tsr")).unwrap().len(), 50);
    ok(run(
        &dir,
        &["simulate", "--config", "sim.conf", "--T", "60"],
    ));
    assert_eq!(load_series(&dir.join("c.tsr")).unwrap().len(), 60);

    fs::write(dir.join("bad.conf"), "dims = 2,2\nwhatever = 1\n").unwrap();
    let bad = run(
        &dir,
        &[
            "simulate", "--config", "bad.conf", "--ranks", "1,1,1,1", "--T", "5", "--out", "x.tsr",
        ],
    );
    assert_eq!(code(&bad), 2);
    assert!(stderr(&bad).contains("whatever"));
    assert_eq!(code(&run(&dir, &["simulate", "--config", "none.conf"])), 2);
}

#[test]
fn unwritable_output_is_io_error() {
    let dir = scratch("io");
    let out = run(
        &dir,
        &[
            "simulate",
            "--dims",
            "2,2",
            "--ranks",
            "1,1,1,1",
            "--T",
            "5",
            "--out",
            "no/such/dir/s.tsr",
        ],
    );
    assert_eq!(code(&out), 3);
}

#[test]
fn thread_variable_is_validated() {
    let dir = scratch("threads");
    let out = bin()
        .current_dir(&dir)
        .env("TENSORAR_THREADS", "zero")
        .args([
            "simulate", "--dims", "2,2", "--ranks", "1,1,1,1", "--T", "5", "--out", "s.tsr",
        ])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

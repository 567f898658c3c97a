use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sr1qn::solvers::trace_io::parse_trace_csv;
use sr1qn_cli::textio::parse_matrix;

fn sr1qn(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sr1qn"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_sr1_on_quadratic_has_zero_lambda() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sr1qn(&["run", "--preset", "quadratic-kernel", "--method", "sr1", "--no-wall-clock"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let recs = parse_trace_csv(&fs::read_to_string(tmp.path().join("sr1.csv")).unwrap()).unwrap();
    assert!(recs.len() > 1);
    assert!(recs.iter().all(|r| r.lambda == 0.0 && r.elapsed_s == 0.0));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("sr1.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["termination"]["kind"], "converged");
    assert_eq!(meta["config"]["rows"], 250);
    assert_eq!(meta["config"]["cols"], 300);
    assert!(stdout(&o).starts_with("sr1: converged"));
}

#[test]
fn zero_iterations_give_a_single_row() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sr1qn(
        &["run", "--preset", "quadratic-kernel", "--method", "gd", "--max-iter", "0", "--rows", "5", "--cols", "4"],
        tmp.path(),
    );
    assert!(o.status.success());
    let text = fs::read_to_string(tmp.path().join("gd.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with("iter,f,gnorm,r,lambda,traceG,restart,elapsed_s\n"));
}

#[test]
fn unknown_method_and_preset_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sr1qn(&["run", "--preset", "quadratic-kernel", "--method", "bfgs"], tmp.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("bfgs"));
    let o = sr1qn(&["run", "--preset", "rosenbrock"], tmp.path());
    assert!(!o.status.success());
    let o = sr1qn(&["run", "--method", "gd"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unreadable_data_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sr1qn(
        &["run", "--preset", "logistic-mushrooms", "--data", "/nonexistent/mushrooms"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/mushrooms"));
}

#[test]
fn bench_writes_one_csv_per_method_and_a_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sr1qn(
        &["bench", "--preset", "quadratic-kernel", "--rows", "30", "--cols", "40", "--no-wall-clock"],
        tmp.path(),
    );
    assert!(o.status.success());
    for m in ["sr1", "gd", "nag"] {
        let recs = parse_trace_csv(&fs::read_to_string(tmp.path().join(format!("{m}.csv"))).unwrap()).unwrap();
        assert!(!recs.is_empty());
        assert!(tmp.path().join(format!("{m}.meta.json")).exists());
    }
    let svg = fs::read_to_string(tmp.path().join("bench.svg")).unwrap();
    assert!(svg.starts_with("<?xml"));
    // Known optimal value: gnorm and gap panels, one curve per method each.
    assert_eq!(svg.matches("<polyline").count(), 3 * 4);
    assert!(!tmp.path().join("INCOMPLETE").exists());
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn bench_method_subset_and_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("cfg.json");
    fs::write(&config, r#"{"preset": "deblur", "size": 6, "max_iter": 5}"#).unwrap();
    let out = tmp.path().join("out");
    let o = sr1qn(
        &["bench", "--config", config.to_str().unwrap(), "--methods", "gd-bt,hb-bt", "--no-wall-clock"],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let recs = parse_trace_csv(&fs::read_to_string(out.join("gd-bt.csv")).unwrap()).unwrap();
    assert_eq!(recs.len(), 6);
    assert!(out.join("hb-bt.csv").exists());
    assert!(!out.join("cubic-sr1.csv").exists());

    // A sidecar works as a config file and reproduces the run.
    let again = tmp.path().join("again");
    let meta = out.join("gd-bt.meta.json");
    let o = sr1qn(&["run", "--config", meta.to_str().unwrap()], &again);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(out.join("gd-bt.csv")).unwrap(), fs::read(again.join("gd-bt.csv")).unwrap());
}

#[test]
fn certify_reports_satisfied_and_violated() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sr1qn(
        &["run", "--preset", "quadratic-kernel", "--method", "grad-sr1", "--rows", "30", "--cols", "40"],
        tmp.path(),
    );
    assert!(o.status.success());
    let trace = tmp.path().join("grad-sr1.csv");
    let certify = |extra: &[&str]| {
        let mut args = vec!["certify", "--trace", trace.to_str().unwrap()];
        args.extend_from_slice(extra);
        Command::new(env!("CARGO_BIN_EXE_sr1qn")).args(&args).output().unwrap()
    };
    let o = certify(&["--theorem", "gradient-dominated"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("N,bound,observed,ok"));
    assert!(text.trim_end().lines().last().unwrap().starts_with("SATISFIED"));

    // A far too small gradient-domination constant collapses the envelope.
    let o = certify(&["--theorem", "gradient-dominated", "--c", "1e-12"]);
    assert!(o.status.success());
    assert!(stdout(&o).trim_end().lines().last().unwrap().starts_with("VIOLATED at N="));

    // The local theorems need L_H > 0, which a quadratic does not have.
    let o = certify(&["--theorem", "grad", "--k0", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("L_H > 0"));

    let report = tmp.path().join("report.csv");
    let o = certify(&["--theorem", "pl", "--out", report.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(fs::read_to_string(&report).unwrap().contains("# case pl"));
}

#[test]
fn certify_needs_the_sidecar() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("lonely.csv");
    fs::write(&csv, "iter,f,gnorm,r,lambda,traceG,restart,elapsed_s\n0,1,0,0,0,0,0,0\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_sr1qn"))
        .args(["certify", "--theorem", "pl", "--trace", csv.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lonely.meta.json"));
}

#[test]
fn gen_writes_reproducible_data() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        assert!(sr1qn(&["gen", "--preset", "quadratic-kernel", "--seed", "0"], dir).status.success());
    }
    let m = parse_matrix(&fs::read_to_string(a.join("A.txt")).unwrap()).unwrap();
    assert_eq!((m.nrows(), m.ncols()), (250, 300));
    let v = parse_matrix(&fs::read_to_string(a.join("b.txt")).unwrap()).unwrap();
    assert_eq!((v.nrows(), v.ncols()), (250, 1));
    assert_eq!(fs::read(a.join("A.txt")).unwrap(), fs::read(b.join("A.txt")).unwrap());

    let img = tmp.path().join("img");
    assert!(sr1qn(&["gen", "--preset", "deblur", "--seed", "1", "--size", "32"], &img).status.success());
    let mut names: Vec<_> = fs::read_dir(&img).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names, ["blurred.pgm", "clean.pgm"]);
    assert!(fs::read(img.join("clean.pgm")).unwrap().starts_with(b"P5\n32 32\n255\n"));
}

#[test]
fn generated_data_feeds_back_into_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(sr1qn(&["gen", "--preset", "quadratic-kernel", "--rows", "20", "--cols", "25"], &data).status.success());
    let o = sr1qn(
        &["run", "--preset", "quadratic-kernel", "--method", "sr1", "--data", data.to_str().unwrap()],
        &tmp.path().join("out"),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/sr1.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["dim"], 25);

    let img = tmp.path().join("img");
    assert!(sr1qn(&["gen", "--preset", "deblur", "--size", "8"], &img).status.success());
    let blurred = img.join("blurred.pgm");
    let o = sr1qn(
        &["run", "--preset", "deblur", "--method", "gd-bt", "--max-iter", "3", "--data", blurred.to_str().unwrap()],
        &tmp.path().join("deb"),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn converged_at_start_is_trivially_satisfied() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sr1qn(
        &["run", "--preset", "quadratic-kernel", "--method", "cubic-sr1", "--rows", "10", "--cols", "12", "--tol", "1e10"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = tmp.path().join("cubic-sr1.csv");
    for theorem in ["cubic", "grad", "gradient-dominated", "pl"] {
        let o = Command::new(env!("CARGO_BIN_EXE_sr1qn"))
            .args(["certify", "--theorem", theorem, "--trace", trace.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(o.status.success(), "{theorem}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).trim_end().lines().last().unwrap().starts_with("SATISFIED from N=1"), "{theorem}");
    }
}

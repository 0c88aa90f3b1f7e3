use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;
use wehrlflux_cli::rows::ResultsFile;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_wehrlflux"));
    c.env_remove("WEHRLFLUX_THREADS");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(cfg: &Path, extra: &[&str]) -> Output {
    bin().arg("run").arg(cfg).args(extra).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const CAVITY: &str = r#"{"schema_version": 1, "model": "cavity",
  "params": {"kappa": 0.5},
  "sweep": {"eps_grid": {"min": 1.0, "max": 1.0, "count": 1}},
  "output": "cavity.csv"}"#;

#[test]
fn cavity_run_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", CAVITY);
    let o = run(&cfg, &["--threads", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let f = ResultsFile::read(&dir.path().join("cavity.csv")).unwrap();
    assert_eq!(f.rows.len(), 1);
    let r = &f.rows[0];
    assert!((r.pi_ext - 4.0).abs() < 1e-6, "Pi_ext = {}", r.pi_ext);
    // a coherent state: all production is external
    assert!(r.pi_u.abs() < 1e-6 && r.pi_d.abs() < 1e-6, "{} {}", r.pi_u, r.pi_d);
    assert_eq!(f.header.get("model"), Some("cavity"));
    assert!(f.header.get("config_sha256").is_some_and(|h| h.len() == 64));
}

#[test]
fn malformed_config_reports_position() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "bad.json", "{\"schema_version\": 1,\n  \"model\": \"kerr\",\n  \"params\": {\"detuning\": -2.0,, }\n}");
    let o = run(&cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("line 3"), "{e}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", &CAVITY.replace("\"kappa\": 0.5", "\"kappa\": 0.5, \"kapa\": 1"));
    let o = run(&cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kapa"));
}

#[test]
fn missing_config_is_io_error() {
    let dir = TempDir::new().unwrap();
    let o = run(&dir.path().join("nope.json"), &[]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn numerical_failure_aborts_without_output() {
    let dir = TempDir::new().unwrap();
    let text = CAVITY
        .replace(r#""count": 1"#, r#""count": 3"#)
        .replace(r#""max": 1.0"#, r#""max": 2.0"#)
        .replace(r#""output""#, r#""numerics": {"mass_tol": 1e-300}, "output""#);
    let cfg = write(dir.path(), "c.json", &text);
    let o = run(&cfg, &["--threads", "2"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(!dir.path().join("cavity.csv").exists());
    assert!(!dir.path().join("cavity.csv.partial").exists());

    let o = run(&cfg, &["--threads", "2", "--keep-going"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("cavity.csv")).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("# failed")).count(), 3, "{text}");
}

fn kerr_sweep(dir: &Path) -> PathBuf {
    let cfg = write(
        dir,
        "k.json",
        r#"{"schema_version": 1, "model": "kerr",
          "params": {"detuning": -2.0, "nonlinearity": 1.0, "kappa": 0.5},
          "sweep": {"N_list": [10], "eps_grid": {"min": 0.8, "max": 1.1, "count": 40}},
          "numerics": {"points_per_axis": 64, "compute_gap": false},
          "output": "out/kerr.csv"}"#,
    );
    std::fs::create_dir(dir.join("out")).unwrap();
    let o = run(&cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join("out/kerr.csv")
}

#[test]
fn kerr_sweep_rows_and_collapse() {
    let dir = TempDir::new().unwrap();
    let out = kerr_sweep(dir.path());
    let f = ResultsFile::read(&out).unwrap();
    assert_eq!(f.rows.len(), 40);
    assert!(f.rows.windows(2).all(|w| w[1].eps_or_lambda > w[0].eps_or_lambda));
    assert!(f.rows.iter().all(|r| r.size == 10 && r.pi_d > 0.0 && r.s.is_finite()));

    let o = bin().arg("collapse").arg(&out).args(["--eps-c", "0.95"]).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("# metric: undefined"), "{text}");
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 41);

    let o = bin().arg("collapse").arg(&out).args(["--eps-c", "-1"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_thread_env_is_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", CAVITY);
    let o = bin().arg("run").arg(&cfg).env("WEHRLFLUX_THREADS", "many").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().arg("run").arg(&cfg).args(["--threads", "0"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().arg("run").arg(&cfg).env("WEHRLFLUX_THREADS", "3").output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
}

fn dicke_scan(dir: &Path) -> PathBuf {
    let cfg = write(
        dir,
        "d.json",
        r#"{"schema_version": 1, "model": "dicke",
          "params": {"omega0": 0.005, "omega": 0.01, "kappa": 1.0, "gamma": 0.001},
          "sweep": {"lambda_grid": {"min": 0.8, "max": 1.2, "count": 401, "relative": true}},
          "output": "dicke.csv"}"#,
    );
    let o = run(&cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join("dicke.csv")
}

fn slopes(text: &str) -> Vec<f64> {
    text.lines()
        .filter(|l| l.starts_with("below:") || l.starts_with("above:"))
        .map(|l| l.split_whitespace().nth(2).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn fit_divergence_on_dicke_scan() {
    let dir = TempDir::new().unwrap();
    let out = dicke_scan(dir.path());
    let o = bin().arg("fit-divergence").arg(&out).args(["--window", "0.03,0.12"]).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let s = slopes(&text);
    assert_eq!(s.len(), 2, "{text}");
    assert!(s.iter().all(|v| (v + 1.0).abs() < 0.1), "{text}");
    assert!(!text.contains("warning"), "{text}");

    // a window reaching into the dissipative rounding core is flagged
    let o = bin().arg("fit-divergence").arg(&out).args(["--window", "0.005,0.1"]).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().contains("warning"));

    let o = bin().arg("collapse").arg(&out).args(["--eps-c", "1"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fit_divergence_recovers_exact_power_law() {
    let dir = TempDir::new().unwrap();
    let out = dicke_scan(dir.path());
    let f = ResultsFile::read(&out).unwrap();
    let lc = f.header.get_f64("lambda_c").unwrap();
    // Rewrite Pi_d as 2.5/|lambda_c - lambda| and keep everything else.
    let text = std::fs::read_to_string(&out).unwrap();
    let cols: Vec<&str> = text.lines().find(|l| !l.starts_with('#')).unwrap().split(',').collect();
    let (il, id) = (cols.iter().position(|c| *c == "eps_or_lambda").unwrap(), cols.iter().position(|c| *c == "Pi_d").unwrap());
    let mut synth = String::new();
    let mut seen_columns = false;
    for line in text.lines() {
        if line.starts_with('#') || !seen_columns {
            seen_columns |= !line.starts_with('#');
            synth.push_str(line);
        } else {
            let mut f: Vec<String> = line.split(',').map(str::to_string).collect();
            let l: f64 = f[il].parse().unwrap();
            f[id] = format!("{:.16e}", 2.5 / (lc - l).abs());
            synth.push_str(&f.join(","));
        }
        synth.push('\n');
    }
    let synth_path = write(dir.path(), "synth.csv", &synth);
    let o = bin().arg("fit-divergence").arg(&synth_path).args(["--window", "0.03,0.12"]).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let s = slopes(&String::from_utf8(o.stdout).unwrap());
    assert!(s.iter().all(|v| (v + 1.0).abs() < 1e-6), "{s:?}");
}

#[test]
fn fit_divergence_rejects_bad_window() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "x.csv", "");
    let o = bin().arg("fit-divergence").arg(&p).args(["--window", "0.2,0.1"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

//! `wehrlflux run`: evaluate every sweep point and stream rows to disk.
//!
//! Points are computed on a worker pool. A single writer thread receives
//! them, restores input order and appends to `<output>.partial`; the file is
//! renamed over the target only after the last row is flushed and synced.

use crate::config::{self, ModelParams, RunConfig};
use crate::error::{CliError, CliResult};
use crate::rows::{self, fmt_f64, Header, ResultRow};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::time::Instant;
use wehrlflux_core::dicke::{self, monte_carlo};
use wehrlflux_core::kerr;
use wehrlflux_core::KerrParams;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_ENV: &str = "WEHRLFLUX_THREADS";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub keep_going: bool,
    /// Worker count; `None` falls back to the environment, then to the core count.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub output: PathBuf,
    pub rows: usize,
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
    pub threads: usize,
    pub max_balance_residual: f64,
    /// Largest relative Monte-Carlo deviation over `S`, `Π_d`, `Π_u`.
    pub mc_max_deviation: Option<f64>,
}

impl std::fmt::Display for RunSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "wrote {} rows to {} ({} threads)", self.rows, self.output.display(), self.threads)?;
        writeln!(f, "max balance residual: {:.3e}", self.max_balance_residual)?;
        if let Some(d) = self.mc_max_deviation {
            writeln!(f, "max Monte-Carlo deviation: {d:.3e}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        for e in &self.failures {
            writeln!(f, "failed: {e}")?;
        }
        Ok(())
    }
}

pub fn resolve_threads(flag: Option<usize>) -> CliResult<usize> {
    if let Some(k) = flag {
        if k == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        return Ok(k);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(k) if k > 0 => Ok(k),
            _ => Err(CliError::Config(format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn header_for(cfg: &RunConfig, config_bytes: &[u8]) -> Header {
    let mut e = BTreeMap::new();
    let nm = &cfg.numerics;
    e.insert("schema_version".into(), cfg.schema_version.to_string());
    e.insert("code_version".into(), format!("wehrlflux {CODE_VERSION}"));
    e.insert("config_sha256".into(), sha256_hex(config_bytes));
    e.insert("model".into(), cfg.model.as_str().into());
    e.insert("params".into(), cfg.describe_params());
    e.insert(
        "numerics".into(),
        format!(
            "n_max={} points_per_axis={} mass_tol={:e} balance_tol={:e} compute_gap={} certify_cutoff={} mc_samples={} seed={}",
            nm.n_max.map_or("auto".to_string(), |n| n.to_string()),
            nm.points_per_axis,
            nm.mass_tol,
            nm.balance_tol,
            nm.compute_gap,
            nm.certify(cfg.model),
            nm.mc_samples,
            nm.seed
        ),
    );
    if let Some(lc) = cfg.lambda_c() {
        e.insert("lambda_c".into(), fmt_f64(lc));
    }
    Header { entries: e }
}

struct PointOut {
    row: ResultRow,
    balance_residual: f64,
    mc_deviation: Option<f64>,
}

fn compute_point(cfg: &RunConfig, size: usize, x: f64) -> CliResult<PointOut> {
    let start = Instant::now();
    let nm = &cfg.numerics;
    let kerr_row = |p: &KerrParams| -> CliResult<PointOut> {
        let rec = kerr::sweep_point(p, &nm.sweep_options(cfg.model))?;
        let b = &rec.budget;
        Ok(PointOut {
            row: ResultRow {
                model: cfg.model.as_str().into(),
                size,
                eps_or_lambda: x,
                s: b.s,
                phi_ext: b.phi_ext,
                phi_q: b.phi_q,
                pi_ext: b.pi_ext,
                pi_u: b.pi_u,
                pi_d: b.pi_d,
                gap: rec.gap,
                alpha_re: b.alpha.re,
                alpha_im: b.alpha.im,
                beta: None,
                residual: rec.residual,
                n_max_used: Some(rec.n_max_used),
                wall_time_s: None,
            },
            balance_residual: if b.phi_q > 1e-10 { b.balance_residual } else { 0.0 },
            mc_deviation: None,
        })
    };
    let mut out = match &cfg.params {
        ModelParams::Kerr(base) => kerr_row(&base.with_size(size).with_eps(x))?,
        ModelParams::Cavity { kappa, detuning } => kerr_row(&KerrParams::empty_cavity(*detuning, *kappa, x)?.with_size(size))?,
        ModelParams::Dicke(base) => {
            let p = base.with_lambda(x);
            let pt = dicke::solve_point(&p, size)?;
            let g = &pt.budget;
            let b = &g.budget;
            let mc_deviation = if nm.mc_samples > 0 {
                let o = monte_carlo::McOptions { samples: nm.mc_samples, seed: nm.seed, ..Default::default() };
                let mc = monte_carlo::monte_carlo_budget(&pt.covariance.sigma, &pt.hp, &p, &o)?;
                let rel = |est: f64, exact: f64| (est - exact).abs() / exact.abs().max(1e-300);
                Some(rel(mc.s.value, b.s).max(rel(mc.pi_d_a.value, b.pi_d)).max(rel(mc.pi_u.value, b.pi_u)))
            } else {
                None
            };
            PointOut {
                row: ResultRow {
                    model: "dicke".into(),
                    size,
                    eps_or_lambda: x,
                    s: b.s,
                    phi_ext: b.phi_ext,
                    phi_q: b.phi_q,
                    pi_ext: b.pi_ext,
                    pi_u: b.pi_u,
                    pi_d: b.pi_d,
                    gap: None,
                    alpha_re: b.alpha.re,
                    alpha_im: b.alpha.im,
                    beta: Some(g.beta),
                    residual: pt.covariance.residual,
                    n_max_used: None,
                    wall_time_s: None,
                },
                balance_residual: b.balance_residual,
                mc_deviation,
            }
        }
    };
    if nm.record_wall_time {
        out.row.wall_time_s = Some(start.elapsed().as_secs_f64());
    }
    if let Some(field) = out.row.non_finite_field() {
        return Err(CliError::Numerical(format!("non-finite {field}")));
    }
    Ok(out)
}

enum Message {
    Done(CliResult<PointOut>),
    Skipped,
}

struct WriterState {
    rows: usize,
    failures: Vec<String>,
    fatal: Option<String>,
    max_balance: f64,
    mc_max: Option<f64>,
}

pub fn partial_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    output.with_file_name(name)
}

/// Runs the configuration at `path`.
pub fn run(path: &Path, opts: &RunOptions) -> CliResult<RunSummary> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path.display(), e))?;
    let cfg = config::load(path)?;
    run_config(&cfg, &bytes, opts)
}

pub fn run_config(cfg: &RunConfig, config_bytes: &[u8], opts: &RunOptions) -> CliResult<RunSummary> {
    let threads = resolve_threads(opts.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))?;
    let points = cfg.points();
    let partial = partial_path(&cfg.output);
    if let Some(dir) = cfg.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    }
    let file = File::create(&partial).map_err(|e| CliError::io(partial.display(), e))?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| CliError::io(partial.display(), e);
    header_for(cfg, config_bytes).write(&mut w).map_err(io)?;
    rows::write_column_line(&mut w).map_err(io)?;

    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, Message)>();
    let keep_going = opts.keep_going;
    let describe = |i: usize| {
        let (n, x) = points[i];
        format!("N={n} {}={x}", if cfg.lambda_c().is_some() { "lambda" } else { "eps" })
    };
    let result = std::thread::scope(|scope| {
        let writer = scope.spawn(|| -> std::io::Result<(BufWriter<File>, WriterState)> {
            let mut st = WriterState { rows: 0, failures: Vec::new(), fatal: None, max_balance: 0.0, mc_max: None };
            let mut pending: BTreeMap<usize, Message> = BTreeMap::new();
            let mut next = 0usize;
            for (i, msg) in rx {
                pending.insert(i, msg);
                while let Some(msg) = pending.remove(&next) {
                    match msg {
                        Message::Done(Ok(p)) => {
                            if st.fatal.is_none() {
                                rows::write_row(&mut w, &p.row)?;
                                st.rows += 1;
                                st.max_balance = st.max_balance.max(p.balance_residual);
                                if let Some(d) = p.mc_deviation {
                                    st.mc_max = Some(st.mc_max.map_or(d, |m: f64| m.max(d)));
                                }
                            }
                        }
                        Message::Done(Err(e)) => {
                            let line = format!("{}: {e}", describe(next));
                            if keep_going {
                                writeln!(w, "# failed {line}")?;
                                st.failures.push(line);
                            } else if st.fatal.is_none() {
                                abort.store(true, Ordering::SeqCst);
                                st.fatal = Some(line);
                            }
                        }
                        Message::Skipped => {}
                    }
                    next += 1;
                }
            }
            Ok((w, st))
        });
        pool.install(|| {
            (0..points.len()).into_par_iter().for_each_with(tx, |tx, i| {
                let msg = if abort.load(Ordering::SeqCst) {
                    Message::Skipped
                } else {
                    let (n, x) = points[i];
                    let r = compute_point(cfg, n, x);
                    if r.is_err() && !keep_going {
                        abort.store(true, Ordering::SeqCst);
                    }
                    Message::Done(r)
                };
                let _ = tx.send((i, msg));
            });
        });
        writer.join().expect("writer thread panicked")
    });
    let (w, st) = result.map_err(io)?;
    if let Some(fatal) = st.fatal {
        drop(w);
        let _ = std::fs::remove_file(&partial);
        return Err(CliError::Numerical(format!("{fatal} (rerun with --keep-going to skip failing points)")));
    }
    let file = w.into_inner().map_err(|e| io(e.into_error()))?;
    file.sync_all().map_err(io)?;
    drop(file);
    std::fs::rename(&partial, &cfg.output).map_err(|e| CliError::io(cfg.output.display(), e))?;
    Ok(RunSummary {
        output: cfg.output.clone(),
        rows: st.rows,
        failures: st.failures,
        warnings: cfg.warnings.clone(),
        threads,
        max_balance_residual: st.max_balance,
        mc_max_deviation: st.mc_max,
    })
}

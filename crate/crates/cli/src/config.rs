//! Run configuration: a versioned JSON document.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "model": "kerr",
//!   "params": { "detuning": -2.0, "nonlinearity": 1.0, "kappa": 0.5 },
//!   "sweep": { "N_list": [10], "eps_grid": { "min": 0.8, "max": 1.1, "count": 40 } },
//!   "numerics": { "points_per_axis": 128 },
//!   "output": "kerr_n10.csv"
//! }
//! ```
//!
//! Every object rejects unknown keys. Errors carry `line:column` of the
//! offending token; semantic errors point at the key that holds the bad value.

use crate::error::{CliError, CliResult};
use serde::Deserialize;
use serde_json::value::RawValue;
use std::path::{Path, PathBuf};
use wehrlflux_core::dicke::{self, DickeParams};
use wehrlflux_core::kerr::{self, SweepOptions};
use wehrlflux_core::phase_space::MIN_POINTS_PER_AXIS;
use wehrlflux_core::KerrParams;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Kerr,
    Dicke,
    Cavity,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Kerr => "kerr",
            ModelKind::Dicke => "dicke",
            ModelKind::Cavity => "cavity",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig<'a> {
    schema_version: u32,
    model: ModelKind,
    #[serde(borrow)]
    params: &'a RawValue,
    sweep: SweepBlock,
    #[serde(default)]
    numerics: Numerics,
    output: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct KerrBlock {
    detuning: f64,
    nonlinearity: f64,
    kappa: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct DickeBlock {
    omega0: f64,
    omega: f64,
    kappa: f64,
    gamma: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CavityBlock {
    kappa: f64,
    #[serde(default)]
    detuning: f64,
}

/// `count` evenly spaced values from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    /// Dicke only: values are in units of the critical coupling.
    #[serde(default)]
    pub relative: bool,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count).map(|k| if k + 1 == self.count { self.max } else { self.min + step * k as f64 }).collect()
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepBlock {
    #[serde(rename = "N_list")]
    n_list: Option<Vec<usize>>,
    eps_grid: Option<Grid>,
    lambda_grid: Option<Grid>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub n_max: Option<usize>,
    pub points_per_axis: usize,
    pub mass_tol: f64,
    pub balance_tol: f64,
    pub compute_gap: bool,
    /// Defaults to on for the empty cavity, where solves are cheap, and off otherwise.
    pub certify_cutoff: Option<bool>,
    /// Dicke only: Monte-Carlo samples per point for the closed-form check; 0 disables it.
    pub mc_samples: usize,
    pub seed: u64,
    /// Off by default so that repeated runs produce identical files.
    pub record_wall_time: bool,
}

impl Default for Numerics {
    fn default() -> Self {
        let o = SweepOptions::default();
        Numerics {
            n_max: None,
            points_per_axis: o.points_per_axis,
            mass_tol: o.mass_tol,
            balance_tol: o.balance_tol,
            compute_gap: o.compute_gap,
            certify_cutoff: None,
            mc_samples: 0,
            seed: 0,
            record_wall_time: false,
        }
    }
}

impl Numerics {
    pub fn certify(&self, model: ModelKind) -> bool {
        self.certify_cutoff.unwrap_or(model == ModelKind::Cavity)
    }

    pub fn sweep_options(&self, model: ModelKind) -> SweepOptions {
        SweepOptions {
            n_max_override: self.n_max,
            points_per_axis: self.points_per_axis,
            mass_tol: self.mass_tol,
            balance_tol: self.balance_tol,
            compute_gap: self.compute_gap,
            certify_cutoff: self.certify(model),
            ..SweepOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    /// `eps` and `size` are placeholders filled per point.
    Kerr(KerrParams),
    /// `lambda` is filled per point.
    Dicke(DickeParams),
    Cavity { kappa: f64, detuning: f64 },
}

/// Validated configuration with every sweep point resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: ModelKind,
    pub params: ModelParams,
    pub sizes: Vec<usize>,
    /// Drives (`kerr`, `cavity`) or absolute couplings (`dicke`).
    pub grid: Vec<f64>,
    pub numerics: Numerics,
    /// Resolved against the config file's directory when relative.
    pub output: PathBuf,
    pub warnings: Vec<String>,
}

impl RunConfig {
    /// Every `(N, ε or λ)` job in output order.
    pub fn points(&self) -> Vec<(usize, f64)> {
        self.sizes.iter().flat_map(|&n| self.grid.iter().map(move |&x| (n, x))).collect()
    }

    pub fn lambda_c(&self) -> Option<f64> {
        match &self.params {
            ModelParams::Dicke(p) => Some(dicke::critical_coupling(p)),
            _ => None,
        }
    }

    /// Parameter summary for the output header.
    pub fn describe_params(&self) -> String {
        match &self.params {
            ModelParams::Kerr(p) => format!("detuning={:e} nonlinearity={:e} kappa={:e}", p.detuning, p.nonlinearity, p.kappa),
            ModelParams::Dicke(p) => {
                format!("omega0={:e} omega={:e} kappa={:e} gamma={:e}", p.omega0, p.omega, p.kappa, p.gamma)
            }
            ModelParams::Cavity { kappa, detuning } => format!("kappa={kappa:e} detuning={detuning:e}"),
        }
    }
}

/// 1-based line and column of byte `offset` in `text`.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, col)
}

/// Position of the first `"key"` token at or after `from`.
fn locate(text: &str, key: &str, from: usize) -> String {
    match text[from.min(text.len())..].find(&format!("\"{key}\"")) {
        Some(i) => {
            let (l, c) = line_col(text, from + i);
            format!("line {l} column {c}")
        }
        None => "(key absent)".to_string(),
    }
}

fn json_error(e: serde_json::Error, line_offset: usize, col_offset: usize) -> CliError {
    let (line, col) = if e.line() == 1 { (line_offset, col_offset + e.column() - 1) } else { (line_offset + e.line() - 1, e.column()) };
    // serde_json appends its own position; strip it so ours is the only one.
    let msg = e.to_string();
    let msg = msg.rsplit_once(" at line ").map_or(msg.as_str(), |(m, _)| m).to_string();
    CliError::Config(format!("line {line} column {col}: {msg}"))
}

pub fn load(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse(&text, base)
}

/// Parses and validates; relative output paths are joined onto `base`.
pub fn parse(text: &str, base: &Path) -> CliResult<RunConfig> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| json_error(e, 1, 1))?;
    let at = |key: &str| locate(text, key, 0);
    if raw.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "{}: unsupported schema_version {} (this build reads {SCHEMA_VERSION})",
            at("schema_version"),
            raw.schema_version
        )));
    }
    let p_off = raw.params.get().as_ptr() as usize - text.as_ptr() as usize;
    let (pl, pc) = line_col(text, p_off);
    let pat = |key: &str| locate(text, key, p_off);
    let bad = |loc: String, msg: String| CliError::Config(format!("{loc}: {msg}"));
    let sweep = raw.sweep;
    let nm = raw.numerics;
    let mut warnings = Vec::new();

    if nm.points_per_axis < MIN_POINTS_PER_AXIS {
        return Err(bad(at("points_per_axis"), format!("points_per_axis must be at least {MIN_POINTS_PER_AXIS}")));
    }
    for (key, v) in [("mass_tol", nm.mass_tol), ("balance_tol", nm.balance_tol)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(bad(at(key), format!("{key} must be positive and finite, got {v}")));
        }
    }
    if nm.n_max == Some(0) {
        return Err(bad(at("n_max"), "n_max must be positive".into()));
    }

    let check_grid = |g: &Grid, key: &str, positive: bool| -> CliResult<Vec<f64>> {
        if g.count == 0 {
            return Err(bad(locate(text, key, 0), "grid count must be at least 1".into()));
        }
        if !(g.min.is_finite() && g.max.is_finite()) || g.min > g.max || (positive && g.min < 0.0) {
            return Err(bad(locate(text, key, 0), format!("need finite 0 ≤ min ≤ max, got [{}, {}]", g.min, g.max)));
        }
        if g.count == 1 && g.min != g.max {
            return Err(bad(locate(text, key, 0), "count 1 needs min == max".into()));
        }
        Ok(g.values())
    };
    let sizes_or = |default: Vec<usize>| -> CliResult<Vec<usize>> {
        let v = sweep.n_list.clone().unwrap_or(default);
        if v.is_empty() || v.contains(&0) {
            return Err(bad(at("N_list"), "N_list needs at least one positive size".into()));
        }
        let mut s = v.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != v.len() {
            return Err(bad(at("N_list"), "N_list has duplicates".into()));
        }
        Ok(v)
    };
    let forbid = |present: bool, key: &str| -> CliResult<()> {
        if present {
            Err(bad(at(key), format!("{key} does not apply to model {}", raw.model.as_str())))
        } else {
            Ok(())
        }
    };
    let need = |g: &Option<Grid>, key: &str| -> CliResult<Grid> {
        g.ok_or_else(|| bad(at("sweep"), format!("model {} needs sweep.{key}", raw.model.as_str())))
    };

    let (params, sizes, grid) = match raw.model {
        ModelKind::Kerr => {
            let b: KerrBlock = serde_json::from_str(raw.params.get()).map_err(|e| json_error(e, pl, pc))?;
            forbid(sweep.lambda_grid.is_some(), "lambda_grid")?;
            forbid(nm.mc_samples > 0, "mc_samples")?;
            if sweep.n_list.is_none() {
                return Err(bad(at("sweep"), "model kerr needs sweep.N_list".into()));
            }
            let g = need(&sweep.eps_grid, "eps_grid")?;
            forbid(g.relative, "relative")?;
            let grid = check_grid(&g, "eps_grid", true)?;
            let p = KerrParams::new(b.detuning, b.nonlinearity, b.kappa, 0.0, 1).map_err(|e| bad(pat(param_key(&e)), e.to_string()))?;
            if let Some((lo, hi)) = kerr::sweep_range(&p) {
                if let Some(e) = grid.iter().find(|e| **e < lo || **e > hi) {
                    return Err(bad(at("eps_grid"), format!("drive {e} outside the supported range [{lo}, {hi}]")));
                }
            } else {
                warnings.push("parameters have no bistability window".to_string());
            }
            (ModelParams::Kerr(p), sizes_or(vec![])?, grid)
        }
        ModelKind::Cavity => {
            let b: CavityBlock = serde_json::from_str(raw.params.get()).map_err(|e| json_error(e, pl, pc))?;
            forbid(sweep.lambda_grid.is_some(), "lambda_grid")?;
            forbid(nm.mc_samples > 0, "mc_samples")?;
            let g = need(&sweep.eps_grid, "eps_grid")?;
            forbid(g.relative, "relative")?;
            let grid = check_grid(&g, "eps_grid", true)?;
            KerrParams::empty_cavity(b.detuning, b.kappa, 0.0).map_err(|e| bad(pat(param_key(&e)), e.to_string()))?;
            (ModelParams::Cavity { kappa: b.kappa, detuning: b.detuning }, sizes_or(vec![1])?, grid)
        }
        ModelKind::Dicke => {
            let b: DickeBlock = serde_json::from_str(raw.params.get()).map_err(|e| json_error(e, pl, pc))?;
            forbid(sweep.eps_grid.is_some(), "eps_grid")?;
            forbid(nm.n_max.is_some(), "n_max")?;
            let g = need(&sweep.lambda_grid, "lambda_grid")?;
            let p = DickeParams::new(b.omega0, b.omega, b.kappa, 0.0, b.gamma).map_err(|e| bad(pat(param_key(&e)), e.to_string()))?;
            warnings.extend(p.warnings());
            let mut grid = check_grid(&g, "lambda_grid", true)?;
            if g.relative {
                let lc = dicke::critical_coupling(&p);
                grid.iter_mut().for_each(|l| *l *= lc);
            }
            (ModelParams::Dicke(p), sizes_or(vec![1])?, grid)
        }
    };
    let output = if raw.output.is_absolute() { raw.output } else { base.join(raw.output) };
    if output.as_os_str().is_empty() || output.file_name().is_none() {
        return Err(bad(at("output"), "output must name a file".into()));
    }
    Ok(RunConfig { schema_version: raw.schema_version, model: raw.model, params, sizes, grid, numerics: nm, output, warnings })
}

fn param_key(e: &wehrlflux_core::Error) -> &'static str {
    match e {
        wehrlflux_core::Error::InvalidParameter { name, .. } => name,
        _ => "params",
    }
}

//! `collapse` and `fit-divergence`: post-processing of results files.

use crate::error::{CliError, CliResult};
use crate::rows::{fmt_f64, ResultsFile};
use std::fmt::Write as _;
use std::path::Path;
use wehrlflux_core::dicke::{self, DivergenceFit, FitWindow};
use wehrlflux_core::kerr::{self, CollapseTable};

fn require_model(f: &ResultsFile, model: &str) -> CliResult<()> {
    match f.header.get("model") {
        Some(m) if m == model => {}
        Some(m) => return Err(CliError::Input(format!("expected {model} results, file holds {m}"))),
        None => return Err(CliError::Input("missing `# model` header".into())),
    }
    if let Some(r) = f.rows.iter().find(|r| r.model != model) {
        return Err(CliError::Input(format!("row with model {:?} in a {model} file", r.model)));
    }
    Ok(())
}

pub fn collapse_table(f: &ResultsFile, eps_c: f64) -> CliResult<CollapseTable> {
    require_model(f, "kerr")?;
    let pts: Vec<(usize, f64, f64, f64)> = f.rows.iter().map(|r| (r.size, r.eps_or_lambda, r.pi_u, r.pi_d)).collect();
    Ok(kerr::collapse_transform(&pts, eps_c)?)
}

/// Text emitted by `wehrlflux collapse`.
pub fn render_collapse(t: &CollapseTable, eps_c: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# eps_c: {}", fmt_f64(eps_c));
    match t.metric {
        Some(m) => {
            let _ = writeln!(s, "# metric: {}", fmt_f64(m));
        }
        None => {
            let _ = writeln!(s, "# metric: undefined ({})", t.note.as_deref().unwrap_or("no overlapping sizes"));
        }
    }
    for p in &t.pairs {
        let _ = writeln!(s, "# pair N={},{}: Pi_u={} Pi_d_over_N={}", p.sizes.0, p.sizes.1, fmt_f64(p.pi_u), fmt_f64(p.pi_d_over_n));
    }
    s.push_str("x,Pi_u,Pi_d_over_N,N\n");
    for p in &t.points {
        let _ = writeln!(s, "{},{},{},{}", fmt_f64(p.x), fmt_f64(p.pi_u), fmt_f64(p.pi_d_over_n), p.size);
    }
    s
}

pub fn collapse(path: &Path, eps_c: f64) -> CliResult<String> {
    if !(eps_c.is_finite() && eps_c > 0.0) {
        return Err(CliError::Config(format!("--eps-c must be positive, got {eps_c}")));
    }
    let f = ResultsFile::read(path)?;
    Ok(render_collapse(&collapse_table(&f, eps_c)?, eps_c))
}

pub fn divergence_fit(f: &ResultsFile, window: FitWindow) -> CliResult<DivergenceFit> {
    require_model(f, "dicke")?;
    let lc = f.header.get_f64("lambda_c")?;
    let ratio = match (f.header.param("gamma"), f.header.param("kappa")) {
        (Some(g), Some(k)) if k > 0.0 => Some(g / k),
        _ => None,
    };
    let pts: Vec<(f64, f64)> = f.rows.iter().map(|r| (r.eps_or_lambda, r.pi_d)).collect();
    Ok(dicke::fit_divergence(&pts, lc, window, ratio)?)
}

pub fn render_fit(fit: &DivergenceFit) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "lambda_c: {}", fmt_f64(fit.lambda_c));
    let _ = writeln!(s, "window: {} <= |lambda/lambda_c - 1| <= {}", fit.window.lo, fit.window.hi);
    for (name, side) in [("below", &fit.below), ("above", &fit.above)] {
        let _ = writeln!(
            s,
            "{name}: slope {:.6} stderr {:.2e} points {} used {:.4}..{:.4}",
            side.slope, side.stderr, side.points, side.used.0, side.used.1
        );
    }
    for w in &fit.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

pub fn fit_divergence(path: &Path, window: FitWindow) -> CliResult<String> {
    let f = ResultsFile::read(path)?;
    Ok(render_fit(&divergence_fit(&f, window)?))
}

/// Parses `lo,hi`.
pub fn parse_window(s: &str) -> Result<FitWindow, String> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| format!("expected lo,hi, got {s:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower edge {lo:?}"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper edge {hi:?}"))?;
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(format!("need 0 < lo < hi, got {lo},{hi}"));
    }
    Ok(FitWindow { lo, hi })
}

//! Kerr bistability: mean-field branches, the bistable window, drive sweeps
//! across system sizes and the finite-size collapse of the entropy rates.
//!
//! Mean field: with `α = ⟨a⟩/√N` the steady state obeys
//! `0 = ε − (κ + iΔ)α − iu|α|²α`, hence `ε² = n[κ² + (Δ + un)²]` for `n = |α|²`.

use crate::error::{check_finite, Error, Result};
use crate::fock;
use crate::liouvillian::{self, build_kerr_liouvillian, build_kerr_liouvillian_unchecked, CutoffRule, KerrParams};
use crate::phase_space::{self, EntropyBudget, DEFAULT_BALANCE_TOL, DEFAULT_MASS_TOL, DEFAULT_POINTS_PER_AXIS};
use num_complex::Complex64 as C64;

/// `ε²(n) = n[κ² + (Δ + un)²]`.
pub fn drive_squared(p: &KerrParams, n: f64) -> f64 {
    n * (p.kappa * p.kappa + (p.detuning + p.nonlinearity * n).powi(2))
}

/// Drive at which the mean-field photon number is `n`.
pub fn drive_for_photons(p: &KerrParams, n: f64) -> f64 {
    drive_squared(p, n).sqrt()
}

/// Mean-field amplitude on the branch with photon number `n`.
pub fn amplitude_for_photons(p: &KerrParams, n: f64) -> C64 {
    if p.eps == 0.0 {
        return C64::new(0.0, 0.0);
    }
    C64::new(p.eps, 0.0) / C64::new(p.kappa, p.detuning + p.nonlinearity * n)
}

/// Turning points of the mean-field S-curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BistabilityWindow {
    pub n_minus: f64,
    pub n_plus: f64,
    /// `ε(n₋)`, the larger of the two edges for `Δ < 0`.
    pub eps_minus: f64,
    /// `ε(n₊)`.
    pub eps_plus: f64,
}

impl BistabilityWindow {
    /// Drive interval `(min, max)` with three mean-field solutions.
    pub fn drive_range(&self) -> (f64, f64) {
        (self.eps_minus.min(self.eps_plus), self.eps_minus.max(self.eps_plus))
    }

    pub fn contains(&self, eps: f64) -> bool {
        let (lo, hi) = self.drive_range();
        eps > lo && eps < hi
    }
}

/// `None` when `Δ ≥ 0`, `Δ² < 3κ²` or `u = 0`.
pub fn bistability_window(p: &KerrParams) -> Option<BistabilityWindow> {
    let (d, k, u) = (p.detuning, p.kappa, p.nonlinearity);
    let disc = d * d - 3.0 * k * k;
    // Rounding can push the degenerate case Δ² = 3κ² slightly negative.
    if d >= 0.0 || disc < -1e-14 * d * d || u <= 0.0 {
        return None;
    }
    let s = disc.max(0.0).sqrt();
    let n_plus = (-2.0 * d + s) / (3.0 * u);
    let n_minus = (-2.0 * d - s) / (3.0 * u);
    if n_minus <= 0.0 {
        return None;
    }
    Some(BistabilityWindow {
        n_minus,
        n_plus,
        eps_minus: drive_for_photons(p, n_minus),
        eps_plus: drive_for_photons(p, n_plus),
    })
}

/// Real non-negative roots of `n[κ² + (Δ+un)²] = ε²`, ascending.
///
/// The cubic is monotone between its turning points, so each root is
/// bracketed and bisected to machine precision, then Newton-polished.
pub fn mean_field_curve(p: &KerrParams, eps: f64) -> Vec<f64> {
    if eps <= 0.0 {
        return vec![0.0];
    }
    let target = eps * eps;
    let f = |n: f64| drive_squared(p, n) - target;
    let (d, k, u) = (p.detuning, p.kappa, p.nonlinearity);
    // n ≤ ε²/κ² since the bracket is at least κ².
    let upper = target / (k * k) * (1.0 + 1e-12) + 1e-300;
    let mut edges = vec![0.0];
    if u > 0.0 && d * d > 3.0 * k * k {
        let s = (d * d - 3.0 * k * k).sqrt();
        for c in [(-2.0 * d - s) / (3.0 * u), (-2.0 * d + s) / (3.0 * u)] {
            if c > 0.0 && c < upper {
                edges.push(c);
            }
        }
    }
    edges.push(upper);
    let mut roots: Vec<f64> = Vec::new();
    for w in edges.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        let (flo, fhi) = (f(lo), f(hi));
        if flo == 0.0 {
            roots.push(lo);
            continue;
        }
        if flo.signum() == fhi.signum() {
            continue;
        }
        let rising = flo < 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if (f(mid) < 0.0) == rising {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut n = 0.5 * (lo + hi);
        for _ in 0..3 {
            let df = k * k + (d + u * n) * (d + 3.0 * u * n);
            if df.abs() > 0.0 {
                let next = n - f(n) / df;
                if next >= w[0] && next <= w[1] {
                    n = next;
                }
            }
        }
        roots.push(n);
    }
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1e-300));
    roots
}

/// Photon number `n₊` of the highest mean-field branch at the current drive.
pub fn upper_branch_photons(p: &KerrParams) -> f64 {
    mean_field_curve(p, p.eps).last().copied().unwrap_or(0.0)
}

/// Brute-force turning points of `ε(n)` from a dense scan of the sign of `dε²/dn`.
pub fn scan_turning_points(p: &KerrParams, n_hi: f64, samples: usize) -> Result<Vec<f64>> {
    check_finite("n_hi", n_hi)?;
    if samples < 3 || n_hi <= 0.0 {
        return Err(Error::InvalidParameter { name: "samples", reason: "need at least 3 samples on (0, n_hi]".into() });
    }
    let h = n_hi / samples as f64;
    let slope = |n: f64| drive_squared(p, n + 0.5 * h) - drive_squared(p, n - 0.5 * h);
    let mut out = Vec::new();
    let mut prev = slope(h);
    for i in 2..samples {
        let n = i as f64 * h;
        let s = slope(n);
        if s.signum() != prev.signum() {
            // Linear interpolation of the sign change.
            let t = prev / (prev - s);
            out.push(n - h + t * h);
        }
        prev = s;
    }
    Ok(out)
}

/// Numerical settings for one sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub cutoff: CutoffRule,
    /// Fixed cutoff instead of the rule.
    pub n_max_override: Option<usize>,
    pub points_per_axis: usize,
    pub mass_tol: f64,
    pub balance_tol: f64,
    pub compute_gap: bool,
    /// Grow the cutoff until `⟨a†a⟩` is stable against `n_max + 10`.
    pub certify_cutoff: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            cutoff: CutoffRule::default(),
            n_max_override: None,
            points_per_axis: DEFAULT_POINTS_PER_AXIS,
            mass_tol: DEFAULT_MASS_TOL,
            balance_tol: DEFAULT_BALANCE_TOL,
            compute_gap: true,
            certify_cutoff: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub size: usize,
    pub eps: f64,
    pub budget: EntropyBudget,
    pub gap: Option<f64>,
    /// `⟨a†a⟩/N`.
    pub n_mean: f64,
    pub n_max_used: usize,
    pub points_per_axis: usize,
    pub half_width: f64,
    /// `‖L(ρ)‖_F` of the accepted steady state.
    pub residual: f64,
    /// `|⟨a†a⟩(n_max) − ⟨a†a⟩(n_max + 10)|` when certified.
    pub cutoff_drift: Option<f64>,
}

/// Tolerance on `|Δ⟨a†a⟩|` between `n_max` and `n_max + 10`.
pub const CUTOFF_DRIFT_TOL: f64 = 1e-8;
/// How many times certification may grow the cutoff by 10 levels before giving up.
pub const CUTOFF_MAX_EXTENSIONS: usize = 8;

fn solve_at(p: &KerrParams, n_max: usize, checked: bool) -> Result<(liouvillian::Superoperator, liouvillian::SteadyState)> {
    let l = if checked { build_kerr_liouvillian(p, n_max)? } else { build_kerr_liouvillian_unchecked(p, n_max)? };
    let ss = liouvillian::steady_state(&l)?;
    Ok((l, ss))
}

/// Steady state, gap and entropy budget at one drive.
///
/// With `certify_cutoff` the cutoff grows in steps of 10 until `⟨a†a⟩` moves by less than
/// [`CUTOFF_DRIFT_TOL`]; the accepted state is the smaller of the last two.
pub fn sweep_point(p: &KerrParams, opts: &SweepOptions) -> Result<SweepRecord> {
    p.validate()?;
    let mut n_max = match opts.n_max_override {
        Some(n) => n,
        None => opts.cutoff.n_max(p),
    };
    let (mut l, mut ss) = solve_at(p, n_max, opts.n_max_override.is_none())?;
    let mut n = fock::first_moments(&ss.rho).1;
    let mut cutoff_drift = None;
    if opts.certify_cutoff {
        let mut extensions = 0;
        loop {
            let (l2, ss2) = solve_at(p, n_max + 10, false)?;
            let n2 = fock::first_moments(&ss2.rho).1;
            let drift = (n2 - n).abs();
            if drift < CUTOFF_DRIFT_TOL {
                cutoff_drift = Some(drift);
                break;
            }
            extensions += 1;
            if extensions > CUTOFF_MAX_EXTENSIONS {
                return Err(Error::TruncationInadequate { n_max, required: n_max + 10 });
            }
            n_max += 10;
            (l, ss, n) = (l2, ss2, n2);
        }
    }
    let gap = if opts.compute_gap { Some(liouvillian::liouvillian_gap(&l)?) } else { None };
    drop(l);
    let grid = phase_space::auto_grid(&ss.rho, opts.points_per_axis)?;
    let budget = phase_space::entropy_budget_with(&ss.rho, p, &grid, opts.mass_tol, opts.balance_tol)?;
    Ok(SweepRecord {
        size: p.size,
        eps: p.eps,
        budget,
        gap,
        n_mean: n / p.size as f64,
        n_max_used: n_max,
        points_per_axis: opts.points_per_axis,
        half_width: grid.half_width(),
        residual: ss.residual,
        cutoff_drift,
    })
}

/// Outcome of one `(N, ε)` job; failures are kept alongside successes.
#[derive(Debug)]
pub struct SweepOutcome {
    pub size: usize,
    pub eps: f64,
    pub result: Result<SweepRecord>,
}

/// Drives accepted by [`sweep`]: `0.5·min(ε₋, ε₊) ..= 1.5·max(ε₋, ε₊)` when a window exists.
pub fn sweep_range(p: &KerrParams) -> Option<(f64, f64)> {
    bistability_window(p).map(|w| {
        let (lo, hi) = w.drive_range();
        (0.5 * lo, 1.5 * hi)
    })
}

/// Every `(N, ε)` combination, sorted by `(N, ε)`. Points run in parallel when
/// the `parallel` feature is on; the result order does not depend on scheduling.
pub fn sweep(p_base: &KerrParams, sizes: &[usize], eps_grid: &[f64], opts: &SweepOptions) -> Result<Vec<SweepOutcome>> {
    p_base.validate()?;
    if let Some((lo, hi)) = sweep_range(p_base) {
        if let Some(bad) = eps_grid.iter().find(|e| **e < lo || **e > hi) {
            return Err(Error::InvalidParameter { name: "eps_grid", reason: format!("{bad} outside [{lo}, {hi}]") });
        }
    }
    let mut jobs: Vec<(usize, f64)> = sizes.iter().flat_map(|&n| eps_grid.iter().map(move |&e| (n, e))).collect();
    jobs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let run = |&(n, e): &(usize, f64)| SweepOutcome {
        size: n,
        eps: e,
        result: sweep_point(&p_base.with_size(n).with_eps(e), opts),
    };
    #[cfg(feature = "parallel")]
    let out = {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let out = jobs.iter().map(run).collect();
    Ok(out)
}

/// Location of the gap minimum in `[lo, hi]` by golden-section search on `ln gap`.
pub fn gap_minimum(p: &KerrParams, lo: f64, hi: f64, tol: f64, opts: &SweepOptions) -> Result<f64> {
    if !(lo < hi) {
        return Err(Error::InvalidParameter { name: "interval", reason: format!("need lo < hi, got [{lo}, {hi}]") });
    }
    let gap_at = |e: f64| -> Result<f64> {
        let q = p.with_eps(e);
        let n_max = opts.n_max_override.unwrap_or_else(|| opts.cutoff.n_max(&q));
        Ok(liouvillian::liouvillian_gap(&build_kerr_liouvillian_unchecked(&q, n_max)?)?.ln())
    };
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (gap_at(c)?, gap_at(d)?);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = gap_at(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = gap_at(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Finite-size transition points and their large-`N` extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalDriveEstimate {
    /// Intercept of the fit `ε_min(N) = ε_c + b/N`, or the single `ε_min` when only one size is given.
    pub eps_c: f64,
    pub slope: f64,
    pub per_size: Vec<(usize, f64)>,
}

/// Fits `ε_min(N) = ε_c + b/N` to gap-minimum locations.
pub fn extrapolate_critical_drive(per_size: &[(usize, f64)]) -> Result<CriticalDriveEstimate> {
    match per_size.len() {
        0 => Err(Error::InsufficientData("no gap minima to extrapolate".into())),
        1 => Ok(CriticalDriveEstimate { eps_c: per_size[0].1, slope: 0.0, per_size: per_size.to_vec() }),
        _ => {
            let xs: Vec<f64> = per_size.iter().map(|(n, _)| 1.0 / *n as f64).collect();
            let ys: Vec<f64> = per_size.iter().map(|(_, e)| *e).collect();
            let (intercept, slope) = linear_fit(&xs, &ys)?;
            Ok(CriticalDriveEstimate { eps_c: intercept, slope, per_size: per_size.to_vec() })
        }
    }
}

/// Gap minimum per size inside the bistable window, then the `1/N` extrapolation.
pub fn estimate_critical_drive(p_base: &KerrParams, sizes: &[usize], tol: f64, opts: &SweepOptions) -> Result<CriticalDriveEstimate> {
    let w = bistability_window(p_base)
        .ok_or_else(|| Error::InvalidParameter { name: "detuning", reason: "no bistable window".into() })?;
    let (lo, hi) = w.drive_range();
    let mut per = Vec::with_capacity(sizes.len());
    for &n in sizes {
        per.push((n, gap_minimum(&p_base.with_size(n), lo, hi, tol, opts)?));
    }
    extrapolate_critical_drive(&per)
}

/// Location of the largest `Δ⟨a†a⟩/N / Δε` between consecutive records of one size.
pub fn susceptibility_peak(records: &[&SweepRecord]) -> Option<f64> {
    let mut r: Vec<&&SweepRecord> = records.iter().collect();
    r.sort_by(|a, b| a.eps.total_cmp(&b.eps));
    r.windows(2)
        .filter(|w| w[1].eps > w[0].eps)
        .map(|w| ((w[1].n_mean - w[0].n_mean) / (w[1].eps - w[0].eps), 0.5 * (w[0].eps + w[1].eps)))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, e)| e)
}

/// Ordinary least squares `y = a + b·x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len() as f64;
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 points, got {}", xs.len())));
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all abscissae coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    Ok((my - b * mx, b))
}

/// One rescaled point `x = N(ε/ε_c − 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapsePoint {
    pub size: usize,
    pub x: f64,
    pub pi_u: f64,
    pub pi_d_over_n: f64,
}

/// Spread between the curves of two consecutive sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSpread {
    pub sizes: (usize, usize),
    /// Max `|ΔΠ_u|` over the common x-range, divided by the larger peak `|Π_u|`.
    pub pi_u: f64,
    /// Same for `Π_d/N`.
    pub pi_d_over_n: f64,
}

impl PairSpread {
    pub fn worst(&self) -> f64 {
        self.pi_u.max(self.pi_d_over_n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseTable {
    pub points: Vec<CollapsePoint>,
    pub pairs: Vec<PairSpread>,
    /// Worst pair spread; `None` with fewer than two sizes or no x-overlap.
    pub metric: Option<f64>,
    pub note: Option<String>,
}

/// Rescales records and measures how well consecutive sizes overlap.
pub fn collapse_transform(points: &[(usize, f64, f64, f64)], eps_c: f64) -> Result<CollapseTable> {
    check_finite("eps_c", eps_c)?;
    if eps_c <= 0.0 {
        return Err(Error::InvalidParameter { name: "eps_c", reason: format!("must be positive, got {eps_c}") });
    }
    let mut pts: Vec<CollapsePoint> = points
        .iter()
        .map(|&(n, eps, pi_u, pi_d)| CollapsePoint {
            size: n,
            x: n as f64 * (eps / eps_c - 1.0),
            pi_u,
            pi_d_over_n: pi_d / n as f64,
        })
        .collect();
    pts.sort_by(|a, b| a.size.cmp(&b.size).then(a.x.total_cmp(&b.x)));
    let mut sizes: Vec<usize> = pts.iter().map(|p| p.size).collect();
    sizes.dedup();
    if sizes.len() < 2 {
        return Ok(CollapseTable { points: pts, pairs: vec![], metric: None, note: Some("fewer than two sizes".into()) });
    }
    let curve = |n: usize| -> Vec<CollapsePoint> { pts.iter().filter(|p| p.size == n).copied().collect() };
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for w in sizes.windows(2) {
        let (a, b) = (curve(w[0]), curve(w[1]));
        match pair_spread(&a, &b) {
            Some((du, dd)) => pairs.push(PairSpread { sizes: (w[0], w[1]), pi_u: du, pi_d_over_n: dd }),
            None => skipped.push(format!("{}-{}", w[0], w[1])),
        }
    }
    let metric = if skipped.is_empty() { pairs.iter().map(|p| p.worst()).reduce(f64::max) } else { None };
    let note = (!skipped.is_empty()).then(|| format!("no common x-range for sizes {}", skipped.join(", ")));
    Ok(CollapseTable { points: pts, pairs, metric, note })
}

fn pair_spread(a: &[CollapsePoint], b: &[CollapsePoint]) -> Option<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let lo = a[0].x.max(b[0].x);
    let hi = a[a.len() - 1].x.min(b[b.len() - 1].x);
    if !(lo < hi) {
        return None;
    }
    let mut xs: Vec<f64> = a.iter().chain(b).map(|p| p.x).filter(|x| *x >= lo && *x <= hi).collect();
    xs.push(lo);
    xs.push(hi);
    let spread = |get: fn(&CollapsePoint) -> f64| {
        let peak = a.iter().chain(b).filter(|p| p.x >= lo && p.x <= hi).map(|p| get(p).abs()).fold(0.0, f64::max);
        let peak = peak.max(interp(a, lo, get).abs()).max(interp(b, hi, get).abs());
        let d = xs.iter().map(|&x| (interp(a, x, get) - interp(b, x, get)).abs()).fold(0.0, f64::max);
        if peak > 0.0 {
            d / peak
        } else {
            d
        }
    };
    Some((spread(|p| p.pi_u), spread(|p| p.pi_d_over_n)))
}

/// Piecewise-linear interpolation on a curve sorted by `x`; `x` must lie in range.
fn interp(c: &[CollapsePoint], x: f64, get: fn(&CollapsePoint) -> f64) -> f64 {
    let k = c.partition_point(|p| p.x < x);
    if k == 0 {
        return get(&c[0]);
    }
    if k == c.len() {
        return get(&c[c.len() - 1]);
    }
    let (p0, p1) = (&c[k - 1], &c[k]);
    if p1.x == p0.x {
        return get(p1);
    }
    let t = (x - p0.x) / (p1.x - p0.x);
    get(p0) + t * (get(p1) - get(p0))
}

/// Largest `|ΔΠ_u/Δε|` between consecutive drives of one size.
pub fn max_pi_u_slope(records: &[(f64, f64)]) -> Option<f64> {
    let mut r = records.to_vec();
    r.sort_by(|a, b| a.0.total_cmp(&b.0));
    r.windows(2).filter(|w| w[1].0 > w[0].0).map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs()).reduce(f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bistable_kerr(eps: f64) -> KerrParams {
        KerrParams::new(-2.0, 1.0, 0.5, eps, 10).unwrap()
    }

    #[test]
    fn window_values() {
        let w = bistability_window(&bistable_kerr(1.0)).unwrap();
        assert!((w.n_plus - (4.0 + 3.25f64.sqrt()) / 3.0).abs() < 1e-14);
        assert!((w.n_minus - (4.0 - 3.25f64.sqrt()) / 3.0).abs() < 1e-14);
        assert!((w.eps_minus - 1.1662).abs() < 1e-4, "{}", w.eps_minus);
        assert!((w.eps_plus - 0.7014).abs() < 1e-4, "{}", w.eps_plus);
        assert!(w.eps_minus > w.eps_plus);
    }

    #[test]
    fn window_degenerates_and_vanishes() {
        let k = 0.5;
        let p = KerrParams::new(-3f64.sqrt() * k, 1.0, k, 1.0, 1).unwrap();
        let w = bistability_window(&p).unwrap();
        assert!((w.n_plus - w.n_minus).abs() < 1e-7);
        assert!(bistability_window(&KerrParams::new(-1.0, 1.0, 1.0, 1.0, 1).unwrap()).is_none());
    }

    #[test]
    fn scan_confirms_turning_points() {
        let p = bistable_kerr(1.0);
        let w = bistability_window(&p).unwrap();
        let tp = scan_turning_points(&p, 4.0, 400_000).unwrap();
        assert_eq!(tp.len(), 2);
        assert!((tp[0] - w.n_minus).abs() < 1e-5);
        assert!((tp[1] - w.n_plus).abs() < 1e-5);
    }

    #[test]
    fn root_counts() {
        let p = bistable_kerr(1.0);
        assert_eq!(mean_field_curve(&p, 0.0), vec![0.0]);
        let inside = mean_field_curve(&p, 0.9);
        assert_eq!(inside.len(), 3);
        for n in &inside {
            assert!((drive_squared(&p, *n) - 0.81).abs() < 1e-10);
        }
        assert_eq!(mean_field_curve(&p, 0.5).len(), 1);
        let far = mean_field_curve(&p, 20.0);
        assert_eq!(far.len(), 1);
        assert!((drive_squared(&p, far[0]) - 400.0).abs() < 1e-10 * 400.0);
    }

    #[test]
    fn linear_cavity_root() {
        let p = KerrParams::new(-1.0, 0.0, 0.5, 1.0, 1).unwrap();
        let r = mean_field_curve(&p, 1.0);
        assert_eq!(r.len(), 1);
        assert!((r[0] - 1.0 / 1.25).abs() < 1e-14);
    }

    #[test]
    fn amplitude_solves_mean_field() {
        let p = bistable_kerr(0.9);
        for n in mean_field_curve(&p, p.eps) {
            let a = amplitude_for_photons(&p, n);
            assert!((a.norm_sqr() - n).abs() < 1e-12);
            let rhs = C64::new(p.eps, 0.0) - C64::new(p.kappa, p.detuning) * a - C64::new(0.0, p.nonlinearity * a.norm_sqr()) * a;
            assert!(rhs.norm() < 1e-12);
        }
    }
    fn synthetic(n: usize, eps_c: f64, shift: f64) -> Vec<(usize, f64, f64, f64)> {
        (0..41)
            .map(|k| {
                let x = -2.0 + 0.1 * k as f64;
                let eps = eps_c * (1.0 + x / n as f64);
                let prof = (-(x - shift).powi(2)).exp();
                (n, eps, 0.1 + 0.05 * (x - shift).tanh(), n as f64 * prof)
            })
            .collect()
    }

    #[test]
    fn exact_collapse_has_zero_spread() {
        let mut pts = synthetic(10, 0.93, 0.0);
        pts.extend(synthetic(20, 0.93, 0.0));
        let t = collapse_transform(&pts, 0.93).unwrap();
        assert!(t.metric.unwrap() < 1e-12, "{:?}", t.pairs);
        assert_eq!(t.points.len(), 82);
    }

    #[test]
    fn collapse_metric_undefined_cases() {
        let t = collapse_transform(&synthetic(10, 0.93, 0.0), 0.93).unwrap();
        assert!(t.metric.is_none());
        let mut pts = synthetic(10, 0.93, 0.0);
        pts.extend(synthetic(20, 2.0, 0.0));
        let t = collapse_transform(&pts, 0.93).unwrap();
        assert!(t.metric.is_none() && t.note.is_some());
    }

    #[test]
    fn wrong_eps_c_degrades_collapse() {
        let mut pts = synthetic(10, 0.93, 0.0);
        pts.extend(synthetic(20, 0.93, 0.0));
        let good = collapse_transform(&pts, 0.93).unwrap().metric.unwrap();
        let bad = collapse_transform(&pts, 0.93 * 1.05).unwrap().metric.unwrap();
        assert!(bad > good + 0.1);
    }

    #[test]
    fn extrapolation_recovers_intercept() {
        let per: Vec<(usize, f64)> = [10, 20, 30].iter().map(|&n| (n, 0.933 + 0.245 / n as f64)).collect();
        let e = extrapolate_critical_drive(&per).unwrap();
        assert!((e.eps_c - 0.933).abs() < 1e-12 && (e.slope - 0.245).abs() < 1e-10);
    }

    #[test]
    fn sweep_single_point_matches_direct_budget() {
        let p = bistable_kerr(0.8).with_size(4);
        let opts = SweepOptions { compute_gap: false, ..Default::default() };
        let out = sweep(&p, &[4], &[0.8], &opts).unwrap();
        let rec = out[0].result.as_ref().unwrap();
        let n_max = CutoffRule::default().n_max(&p);
        let ss = liouvillian::steady_state(&build_kerr_liouvillian(&p, n_max).unwrap()).unwrap();
        let b = phase_space::entropy_budget(&ss.rho, &p, &phase_space::auto_grid(&ss.rho, 128).unwrap()).unwrap();
        assert_eq!(rec.budget, b);
    }

    #[test]
    fn sweep_rejects_far_drives_and_orders_results() {
        let p = bistable_kerr(1.0).with_size(3);
        assert!(sweep(&p, &[3], &[5.0], &SweepOptions::default()).is_err());
        let opts = SweepOptions { compute_gap: false, ..Default::default() };
        let out = sweep(&p, &[4, 3], &[1.0, 0.5], &opts).unwrap();
        let keys: Vec<(usize, f64)> = out.iter().map(|o| (o.size, o.eps)).collect();
        assert_eq!(keys, vec![(3, 0.5), (3, 1.0), (4, 0.5), (4, 1.0)]);
    }

    #[test]
    fn gap_shrinks_with_size_inside_window() {
        let mut last = f64::INFINITY;
        for n in [5, 10, 15] {
            let p = bistable_kerr(0.95).with_size(n);
            let l = build_kerr_liouvillian(&p, CutoffRule::default().n_max(&p)).unwrap();
            let g = liouvillian::liouvillian_gap(&l).unwrap();
            assert!(g > 0.0 && g < last, "N={n}: {g}");
            last = g;
        }
    }

    #[test]
    fn slope_helper() {
        assert_eq!(max_pi_u_slope(&[(0.0, 0.0), (1.0, 2.0), (2.0, 2.5)]), Some(2.0));
        assert_eq!(max_pi_u_slope(&[(0.0, 1.0)]), None);
    }
}

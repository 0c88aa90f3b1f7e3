//! wasm-bindgen entry points for the static demo page in `www/`.
//!
//! Results are returned as flat `Float64Array`s; each function documents its
//! layout. Errors surface as JavaScript exceptions carrying the message.

use wasm_bindgen::prelude::*;
use wehrlflux_core::dicke::{self, DickeParams};
use wehrlflux_core::kerr;
use wehrlflux_core::liouvillian::{self, CutoffRule};
use wehrlflux_core::phase_space;
use wehrlflux_core::KerrParams;

fn js<E: std::fmt::Display>(e: E) -> JsError {
    JsError::new(&e.to_string())
}

/// Critical coupling `λ_c` for the given frequencies and loss.
#[wasm_bindgen]
pub fn dicke_critical_coupling(omega0: f64, omega: f64, kappa: f64) -> f64 {
    dicke::critical_coupling_of(omega0, omega, kappa)
}

/// Gaussian Dicke scan over `λ/λ_c ∈ [lo, hi]`.
///
/// Layout: 7 values per point, `[λ/λ_c, S, Π_u, Π_d, Φ_q, β, ⟨δa†δa⟩]`.
#[wasm_bindgen]
pub fn dicke_scan(omega0: f64, omega: f64, kappa: f64, gamma: f64, lo: f64, hi: f64, count: usize) -> Result<Vec<f64>, JsError> {
    let p = DickeParams::new(omega0, omega, kappa, 0.0, gamma).map_err(js)?;
    let lc = dicke::critical_coupling(&p);
    if count < 2 || !(0.0 <= lo && lo < hi) {
        return Err(JsError::new("need count ≥ 2 and 0 ≤ lo < hi"));
    }
    let mut out = Vec::with_capacity(7 * count);
    for k in 0..count {
        let r = lo + (hi - lo) * k as f64 / (count - 1) as f64;
        match dicke::solve_point(&p.with_lambda(r * lc), 1) {
            Ok(pt) => {
                let b = &pt.budget.budget;
                out.extend([r, b.s, b.pi_u, b.pi_d, b.phi_q, pt.budget.beta, pt.covariance.cavity_fluctuations()]);
            }
            Err(_) => out.extend([r, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN]),
        }
    }
    Ok(out)
}

/// Mean-field photon number per size against drive.
///
/// Layout: `[ε₋, ε₊, n₋, n₊]` (NaN without bistability) followed by
/// `(ε, n)` pairs for every real root of the mean-field cubic.
#[wasm_bindgen]
pub fn kerr_mean_field(detuning: f64, nonlinearity: f64, kappa: f64, eps_max: f64, count: usize) -> Result<Vec<f64>, JsError> {
    let p = KerrParams::new(detuning, nonlinearity, kappa, 0.0, 1).map_err(js)?;
    let mut out = match kerr::bistability_window(&p) {
        Some(w) => vec![w.eps_minus, w.eps_plus, w.n_minus, w.n_plus],
        None => vec![f64::NAN; 4],
    };
    for k in 1..=count {
        let e = eps_max * k as f64 / count as f64;
        for n in kerr::mean_field_curve(&p, e) {
            out.extend([e, n]);
        }
    }
    Ok(out)
}

/// Husimi function of the Kerr steady state on a square grid.
///
/// Layout: `[center_re, center_im, half_width, points_per_axis, S, Π_u, Π_d, Φ_q]`
/// followed by `Q` in row-major order (imaginary axis outer).
#[wasm_bindgen]
pub fn kerr_husimi(detuning: f64, nonlinearity: f64, kappa: f64, eps: f64, size: usize, points_per_axis: usize) -> Result<Vec<f64>, JsError> {
    if size == 0 || size > 8 {
        return Err(JsError::new("the browser demo supports 1 ≤ N ≤ 8"));
    }
    let p = KerrParams::new(detuning, nonlinearity, kappa, eps, size).map_err(js)?;
    let l = liouvillian::build_kerr_liouvillian(&p, CutoffRule::default().n_max(&p)).map_err(js)?;
    let ss = liouvillian::steady_state(&l).map_err(js)?;
    let grid = phase_space::auto_grid(&ss.rho, points_per_axis.max(phase_space::MIN_POINTS_PER_AXIS)).map_err(js)?;
    let b = phase_space::entropy_budget(&ss.rho, &p, &grid).map_err(js)?;
    let f = phase_space::husimi_field_unchecked(&ss.rho, &grid).map_err(js)?;
    let mut out = vec![
        grid.center().re,
        grid.center().im,
        grid.half_width(),
        grid.points_per_axis() as f64,
        b.s,
        b.pi_u,
        b.pi_d,
        b.phi_q,
    ];
    out.extend_from_slice(f.q());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scan_layout() {
        let v = dicke_scan(0.005, 0.01, 1.0, 1e-3, 0.5, 1.5, 5).unwrap();
        assert_eq!(v.len(), 35);
        assert_eq!(v[0], 0.5);
        assert_eq!(v[5], 0.0);
        assert!(v[7 * 4 + 5] > 0.0);
    }

    #[test]
    fn mean_field_layout() {
        let v = kerr_mean_field(-2.0, 1.0, 0.5, 1.5, 30).unwrap();
        assert!((v[0] - 1.1662).abs() < 1e-3 && (v[1] - 0.7014).abs() < 1e-3);
        assert_eq!((v.len() - 4) % 2, 0);
    }

    #[test]
    fn husimi_layout() {
        let v = kerr_husimi(-2.0, 1.0, 0.5, 0.9, 2, 64).unwrap();
        let n = v[3] as usize;
        assert_eq!(v.len(), 8 + n * n);
        let h = 2.0 * v[2] / (n - 1) as f64;
        let mass: f64 = v[8..].iter().sum::<f64>() * h * h;
        assert!((mass - 1.0).abs() < 1e-2, "{mass}");
    }
}

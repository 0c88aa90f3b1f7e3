//! Driven-dissipative Dicke model in the thermodynamic limit: mean field,
//! Holstein-Primakoff Gaussianization, Lyapunov steady state and the
//! closed-form Gaussian entropy budget.
//!
//! Quadrature ordering is `R = (δq_b, δp_b, δq_a, δp_a)` throughout. The
//! Husimi covariance is `Σ_Q = σ + I/2` and, over `d²μ_a d²μ_b`,
//! `Q = exp(−½ rᵀ Σ_Q⁻¹ r) / (π² √det Σ_Q)`.

pub mod monte_carlo;

use crate::error::{check_finite, Error, Result};
use crate::kerr::linear_fit;
use crate::phase_space::{EntropyBudget, DEFAULT_BALANCE_TOL};
use nalgebra::{Matrix4, SMatrix, SVector};
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

/// Stabilizer widths above this fraction of `κ` trigger a warning.
pub const GAMMA_WARN_RATIO: f64 = 0.01;
pub const LYAPUNOV_RESIDUAL_TOL: f64 = 1e-10;
pub const PHYSICALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DickeParams {
    pub omega0: f64,
    pub omega: f64,
    pub kappa: f64,
    pub lambda: f64,
    /// Loss rate of the auxiliary `2γ D[δb]` channel.
    pub gamma: f64,
}

impl DickeParams {
    pub fn new(omega0: f64, omega: f64, kappa: f64, lambda: f64, gamma: f64) -> Result<Self> {
        let p = DickeParams { omega0, omega, kappa, lambda, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("omega0", self.omega0), ("omega", self.omega), ("kappa", self.kappa), ("gamma", self.gamma)] {
            check_finite(name, v)?;
            if v <= 0.0 {
                return Err(Error::InvalidParameter { name, reason: format!("must be positive, got {v}") });
            }
        }
        check_finite("lambda", self.lambda)?;
        if self.lambda < 0.0 {
            return Err(Error::InvalidParameter { name: "lambda", reason: format!("must be non-negative, got {}", self.lambda) });
        }
        Ok(())
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.gamma > GAMMA_WARN_RATIO * self.kappa {
            w.push(format!("gamma = {} exceeds {GAMMA_WARN_RATIO}·kappa; the divergence will be strongly rounded", self.gamma));
        }
        w
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }
}

/// `λ_c = ½ √((ω₀/ω)(κ² + ω²))`.
pub fn critical_coupling(p: &DickeParams) -> f64 {
    critical_coupling_of(p.omega0, p.omega, p.kappa)
}

pub fn critical_coupling_of(omega0: f64, omega: f64, kappa: f64) -> f64 {
    0.5 * (omega0 / omega * (kappa * kappa + omega * omega)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldState {
    /// `⟨a⟩/√N`.
    pub alpha: C64,
    /// `⟨J₋⟩/N`.
    pub beta: C64,
    /// `⟨J_z⟩/N`.
    pub w: f64,
}

impl MeanFieldState {
    /// Right-hand sides `(dα/dt, dβ/dt, dw/dt)` of the mean-field equations.
    pub fn derivatives(&self, p: &DickeParams) -> (C64, C64, f64) {
        let i = C64::new(0.0, 1.0);
        let re2 = self.alpha + self.alpha.conj();
        let da = -C64::new(p.kappa, p.omega) * self.alpha - i * p.lambda * (self.beta + self.beta.conj());
        let db = -i * p.omega0 * self.beta + i * 2.0 * p.lambda * re2 * self.w;
        let dw = (i * p.lambda * re2 * (self.beta - self.beta.conj())).re;
        (da, db, dw)
    }

    pub fn residual(&self, p: &DickeParams) -> f64 {
        let (a, b, w) = self.derivatives(p);
        a.norm().max(b.norm()).max(w.abs())
    }

    /// `|w² + |β|² − 1/4|`.
    pub fn spin_length_defect(&self) -> f64 {
        (self.w * self.w + self.beta.norm_sqr() - 0.25).abs()
    }
}

/// Steady state on the `w ≤ 0` branch: normal phase below `λ_c`, ordered above.
pub fn mean_field_fixed_point(p: &DickeParams) -> MeanFieldState {
    let lc = critical_coupling(p);
    if p.lambda <= lc {
        return MeanFieldState { alpha: C64::new(0.0, 0.0), beta: C64::new(0.0, 0.0), w: -0.5 };
    }
    let r = (lc / p.lambda).powi(2);
    let beta = 0.5 * (1.0 - r * r).sqrt();
    let alpha = C64::new(0.0, -2.0 * p.lambda * beta) / C64::new(p.kappa, p.omega);
    MeanFieldState { alpha, beta: C64::new(beta, 0.0), w: -0.5 * r }
}

/// Coefficients of the quadratic fluctuation Hamiltonian
/// `ω̃₀ δb†δb + ω δa†δa + λ̃(δa + δa†)(δb + δb†) − ζ(δb + δb†)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HPCoefficients {
    pub beta_tilde_minus: f64,
    pub beta_tilde_plus: f64,
    pub omega0_tilde: f64,
    pub lambda_tilde: f64,
    pub zeta: f64,
}

pub fn hp_coefficients(mf: &MeanFieldState, p: &DickeParams) -> Result<HPCoefficients> {
    let beta = mf.beta.re;
    let root = (1.0 - 4.0 * beta * beta).max(0.0).sqrt();
    let bm = ((1.0 - root) / 2.0).sqrt();
    let bp = ((1.0 + root) / 2.0).sqrt();
    if bp == 0.0 {
        return Err(Error::SingularBranch);
    }
    let ratio = bm / bp;
    let re2 = (mf.alpha + mf.alpha.conj()).re;
    Ok(HPCoefficients {
        beta_tilde_minus: bm,
        beta_tilde_plus: bp,
        omega0_tilde: p.omega0 - p.lambda * re2 * ratio,
        lambda_tilde: p.lambda * bp * (1.0 - ratio * ratio),
        zeta: 0.5 * p.lambda * re2 * ratio * (1.0 + 0.5 * ratio * ratio),
    })
}

/// Drift `A` and diffusion `D = diag(γ, γ, κ, κ)` of `dσ/dt = Aσ + σAᵀ + D`.
pub fn drift_diffusion(hp: &HPCoefficients, p: &DickeParams) -> (Matrix4<f64>, Matrix4<f64>) {
    let (g, k, w, w0, l, z) = (p.gamma, p.kappa, p.omega, hp.omega0_tilde, hp.lambda_tilde, hp.zeta);
    #[rustfmt::skip]
    let a = Matrix4::new(
        -g,           w0,  0.0,      0.0,
        4.0 * z - w0, -g,  -2.0 * l, 0.0,
        0.0,          0.0, -k,       w,
        -2.0 * l,     0.0, -w,       -k,
    );
    (a, Matrix4::from_diagonal(&nalgebra::Vector4::new(g, g, k, k)))
}

/// Eigenvalue of `a` with the largest real part.
pub fn leading_eigenvalue(a: &Matrix4<f64>) -> C64 {
    a.complex_eigenvalues().iter().copied().max_by(|x, y| x.re.total_cmp(&y.re)).unwrap_or(C64::new(0.0, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceMatrix {
    pub sigma: Matrix4<f64>,
    /// `‖Aσ + σAᵀ + D‖_F`.
    pub residual: f64,
}

impl CovarianceMatrix {
    /// Smallest eigenvalue of `σ + iΩ/2`.
    pub fn uncertainty_margin(&self) -> f64 {
        let i = C64::new(0.0, 0.5);
        let mut m: SMatrix<C64, 4, 4> = self.sigma.map(|v| C64::new(v, 0.0));
        for k in [0, 2] {
            m[(k, k + 1)] += i;
            m[(k + 1, k)] -= i;
        }
        m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `⟨δa†δa⟩ = (σ₃₃ + σ₄₄ − 1)/2`.
    pub fn cavity_fluctuations(&self) -> f64 {
        0.5 * (self.sigma[(2, 2)] + self.sigma[(3, 3)] - 1.0)
    }

    /// `⟨δb†δb⟩ = (σ₁₁ + σ₂₂ − 1)/2`.
    pub fn spin_fluctuations(&self) -> f64 {
        0.5 * (self.sigma[(0, 0)] + self.sigma[(1, 1)] - 1.0)
    }
}

/// Solves `Aσ + σAᵀ + D = 0` and checks that `σ` is a quantum covariance.
pub fn solve_lyapunov(a: &Matrix4<f64>, d: &Matrix4<f64>) -> Result<CovarianceMatrix> {
    let cm = lyapunov_kernel(a, d)?;
    let margin = cm.uncertainty_margin();
    if margin < -PHYSICALITY_TOL {
        return Err(Error::InvalidCovariance(format!("σ + iΩ/2 has eigenvalue {margin:.3e}")));
    }
    Ok(cm)
}

/// 16×16 Kronecker solve with one step of iterative refinement.
fn lyapunov_kernel(a: &Matrix4<f64>, d: &Matrix4<f64>) -> Result<CovarianceMatrix> {
    let lead = leading_eigenvalue(a);
    if lead.re >= -1e-12 {
        return Err(Error::Unstable { re: lead.re, im: lead.im });
    }
    let id = Matrix4::<f64>::identity();
    let k: SMatrix<f64, 16, 16> = id.kronecker(a) + a.kronecker(&id);
    let lu = k.lu();
    let rhs: SVector<f64, 16> = SVector::from_iterator((-d).iter().copied());
    let mut x = lu.solve(&rhs).ok_or_else(|| Error::NoConvergence("singular Lyapunov operator".into()))?;
    let r = rhs - k * x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let s = Matrix4::from_iterator(x.iter().copied());
    let sigma = 0.5 * (s + s.transpose());
    let residual = (a * sigma + sigma * a.transpose() + d).norm();
    let cm = CovarianceMatrix { sigma, residual };
    let scale = sigma.norm().max(1.0);
    if residual > LYAPUNOV_RESIDUAL_TOL * scale {
        return Err(Error::NoConvergence(format!("Lyapunov residual {residual:.3e}")));
    }
    Ok(cm)
}

/// Gaussian budget with the stabilizer channel kept separate.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBudget {
    /// Headline values: cavity-channel `Φ_q` and `Π_d`. `dsdt` and the
    /// balance fields include the `δb` channel.
    pub budget: EntropyBudget,
    pub phi_q_b: f64,
    pub pi_d_b: f64,
    pub beta: f64,
}

/// Generator of the unitary part of the Husimi dynamics reduced to its
/// diffusion matrix `D_u = −½(A_H + A_Hᵀ)`, where `A_H` is the drift without damping.
pub fn unitary_diffusion(a: &Matrix4<f64>, p: &DickeParams) -> Matrix4<f64> {
    let damping = Matrix4::from_diagonal(&nalgebra::Vector4::new(-p.gamma, -p.gamma, -p.kappa, -p.kappa));
    let ah = a - damping;
    -0.5 * (ah + ah.transpose())
}

/// Closed-form entropy rates of the Gaussian steady state.
pub fn gaussian_budget(
    cm: &CovarianceMatrix,
    hp: &HPCoefficients,
    p: &DickeParams,
    mf: &MeanFieldState,
    size: usize,
) -> Result<GaussianBudget> {
    let sq = cm.sigma + Matrix4::identity() * 0.5;
    let chol = sq
        .cholesky()
        .ok_or_else(|| Error::InvalidCovariance("Σ_Q = σ + I/2 is not positive definite".into()))?;
    let inv = chol.inverse();
    let det = sq.determinant();
    let s = 2.0 * (1.0 + PI.ln()) + 0.5 * det.ln();
    let m = sq - Matrix4::identity() * 2.0 + inv;
    let phi_q = p.kappa * (sq[(2, 2)] + sq[(3, 3)] - 2.0);
    let phi_q_b = p.gamma * (sq[(0, 0)] + sq[(1, 1)] - 2.0);
    let pi_d = p.kappa * (m[(2, 2)] + m[(3, 3)]);
    let pi_d_b = p.gamma * (m[(0, 0)] + m[(1, 1)]);
    let (a, _) = drift_diffusion(hp, p);
    let pi_u = 0.5 * (unitary_diffusion(&a, p) * inv).trace();
    let phi_ext = 2.0 * p.kappa * size as f64 * mf.alpha.norm_sqr();
    let mut b = EntropyBudget::assemble(s, phi_ext, phi_q, pi_u, pi_d, mf.alpha, size, DEFAULT_BALANCE_TOL);
    let produced = pi_u + pi_d + pi_d_b;
    let flux = phi_q + phi_q_b;
    b.dsdt = produced - flux;
    b.balance_residual = (produced - flux).abs() / flux.max(1e-12);
    b.balanced = b.balance_residual < DEFAULT_BALANCE_TOL;
    Ok(GaussianBudget { budget: b, phi_q_b, pi_d_b, beta: mf.beta.re })
}

/// Everything computed at one coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct DickePoint {
    pub lambda: f64,
    pub mean_field: MeanFieldState,
    pub hp: HPCoefficients,
    pub covariance: CovarianceMatrix,
    pub budget: GaussianBudget,
}

pub fn solve_point(p: &DickeParams, size: usize) -> Result<DickePoint> {
    p.validate()?;
    let mf = mean_field_fixed_point(p);
    let hp = hp_coefficients(&mf, p)?;
    let (a, d) = drift_diffusion(&hp, p);
    let cm = solve_lyapunov(&a, &d)?;
    let budget = gaussian_budget(&cm, &hp, p, &mf, size)?;
    Ok(DickePoint { lambda: p.lambda, mean_field: mf, hp, covariance: cm, budget })
}

/// Relative window `lo ≤ |λ/λ_c − 1| ≤ hi` applied on both sides of `λ_c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitWindow {
    pub lo: f64,
    pub hi: f64,
}

impl Default for FitWindow {
    fn default() -> Self {
        FitWindow { lo: 0.03, hi: 0.12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SideFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
    /// Range of `|λ/λ_c − 1|` actually used.
    pub used: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceFit {
    pub lambda_c: f64,
    pub window: FitWindow,
    pub below: SideFit,
    pub above: SideFit,
    pub warnings: Vec<String>,
}

/// Least-squares slope of `log₁₀ Π_d` against `log₁₀ |λ_c − λ|` on each side.
pub fn fit_divergence(points: &[(f64, f64)], lambda_c: f64, window: FitWindow, gamma_over_kappa: Option<f64>) -> Result<DivergenceFit> {
    if !(window.lo > 0.0 && window.lo < window.hi) {
        return Err(Error::InvalidParameter { name: "window", reason: format!("need 0 < lo < hi, got {window:?}") });
    }
    let mut warnings = Vec::new();
    if let Some(g) = gamma_over_kappa {
        let core = 10.0 * g;
        if window.lo < core {
            warnings.push(format!("window starts at {} inside the stabilizer-rounded core |λ/λ_c − 1| < {core}", window.lo));
        }
    }
    let side = |below: bool| -> Result<SideFit> {
        let sel: Vec<(f64, f64)> = points
            .iter()
            .filter(|(l, v)| {
                let r = (l / lambda_c - 1.0).abs();
                (*l < lambda_c) == below && r >= window.lo && r <= window.hi && *v > 0.0
            })
            .map(|(l, v)| ((lambda_c - l).abs().log10(), v.log10()))
            .collect();
        if sel.len() < 5 {
            return Err(Error::InsufficientData(format!(
                "{} side has {} points in the window, need 5",
                if below { "lower" } else { "upper" },
                sel.len()
            )));
        }
        let xs: Vec<f64> = sel.iter().map(|s| s.0).collect();
        let ys: Vec<f64> = sel.iter().map(|s| s.1).collect();
        let (intercept, slope) = linear_fit(&xs, &ys)?;
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        let stderr = (sse / (n - 2.0) / sxx).sqrt();
        let rel: Vec<f64> = xs.iter().map(|x| 10f64.powf(*x) / lambda_c).collect();
        let used = (rel.iter().cloned().fold(f64::INFINITY, f64::min), rel.iter().cloned().fold(0.0, f64::max));
        Ok(SideFit { slope, stderr, intercept, points: xs.len(), used })
    };
    Ok(DivergenceFit { lambda_c, window, below: side(true)?, above: side(false)?, warnings })
}

/// Solves every coupling in `lambda_grid` and fits the `Π_d` divergence.
pub fn divergence_scan(p_base: &DickeParams, lambda_grid: &[f64], window: FitWindow) -> Result<DivergenceFit> {
    let mut pts = Vec::with_capacity(lambda_grid.len());
    for &l in lambda_grid {
        let pt = solve_point(&p_base.with_lambda(l), 1)?;
        pts.push((l, pt.budget.budget.pi_d));
    }
    fit_divergence(&pts, critical_coupling(p_base), window, Some(p_base.gamma / p_base.kappa))
}

/// One-sided slopes of `Π_u(λ)` at `λ_c` with their finite-difference error estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct KinkReport {
    pub lambda_c: f64,
    pub pi_u_at_critical: f64,
    pub left_slope: f64,
    pub right_slope: f64,
    /// Change of each one-sided slope when the stencil is moved one node outwards.
    pub left_error: f64,
    pub right_error: f64,
    /// Mismatch between the one-sided extrapolations of `Π_u` to `λ_c`.
    pub jump: f64,
    /// What a smooth curve could produce from the grid spacing alone.
    pub jump_bound: f64,
    pub max_abs_pi_u: f64,
    pub max_pi_d: f64,
}

impl KinkReport {
    pub fn noise_floor(&self) -> f64 {
        self.left_error + self.right_error
    }

    pub fn is_kink(&self, factor: f64) -> bool {
        (self.left_slope - self.right_slope).abs() > factor * self.noise_floor()
    }

    pub fn is_continuous(&self) -> bool {
        self.jump <= self.jump_bound
    }
}

/// Slopes of `Π_u` from the three nearest couplings on each side of `λ_c`
/// (excluding `λ_c` itself), in units of `Π_u` per unit `λ/λ_c`.
pub fn kink_detector(p_base: &DickeParams, lambda_grid: &[f64]) -> Result<KinkReport> {
    let lc = critical_coupling(p_base);
    let mut pts: Vec<(f64, f64, f64)> = Vec::with_capacity(lambda_grid.len());
    for &l in lambda_grid {
        let b = solve_point(&p_base.with_lambda(l), 1)?.budget.budget;
        pts.push((l / lc, b.pi_u, b.pi_d));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let left: Vec<(f64, f64)> = pts.iter().rev().filter(|p| p.0 < 1.0).take(3).map(|p| (p.0, p.1)).collect();
    let right: Vec<(f64, f64)> = pts.iter().filter(|p| p.0 > 1.0).take(3).map(|p| (p.0, p.1)).collect();
    if left.len() < 3 || right.len() < 3 {
        return Err(Error::InsufficientData("need three couplings on each side of the critical point".into()));
    }
    let slope = |a: (f64, f64), b: (f64, f64)| (b.1 - a.1) / (b.0 - a.0);
    let (ls, ls_out) = (slope(left[1], left[0]), slope(left[2], left[1]));
    let (rs, rs_out) = (slope(right[0], right[1]), slope(right[1], right[2]));
    let at_c = solve_point(&p_base.with_lambda(lc), 1)?.budget.budget.pi_u;
    let from_left = left[0].1 + ls * (1.0 - left[0].0);
    let from_right = right[0].1 - rs * (right[0].0 - 1.0);
    let h = (1.0 - left[0].0).max(right[0].0 - 1.0);
    let jump_bound = (ls.abs() + rs.abs()) * h + (ls - ls_out).abs() + (rs - rs_out).abs();
    Ok(KinkReport {
        lambda_c: lc,
        pi_u_at_critical: at_c,
        left_slope: ls,
        right_slope: rs,
        left_error: (ls - ls_out).abs() * (1.0 - left[0].0) / (left[0].0 - left[1].0).max(f64::MIN_POSITIVE),
        right_error: (rs - rs_out).abs() * (right[0].0 - 1.0) / (right[1].0 - right[0].0).max(f64::MIN_POSITIVE),
        jump: (from_left - from_right).abs(),
        jump_bound,
        max_abs_pi_u: pts.iter().map(|p| p.1.abs()).fold(at_c.abs(), f64::max),
        max_pi_d: pts.iter().map(|p| p.2).fold(0.0, f64::max),
    })
}

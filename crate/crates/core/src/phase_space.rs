//! Husimi quadrature: grids, the field `Q(μ) = ⟨μ|ρ|μ⟩/π` with its analytic
//! derivative, Wehrl entropy, fluxes and the entropy-production integrals.
//!
//! `∂_μ̄ Q = −μQ + ⟨μ|aρ|μ⟩/π` holds exactly for a truncated `ρ`, so no finite
//! differences are needed anywhere.

use crate::error::{check_finite, Error, Result};
use crate::fock::{self, DensityMatrix};
use crate::liouvillian::KerrParams;
use nalgebra::Matrix2;
use num_complex::Complex64 as C64;
use std::collections::BTreeMap;
use std::f64::consts::PI;

pub const MIN_POINTS_PER_AXIS: usize = 64;
pub const DEFAULT_POINTS_PER_AXIS: usize = 128;
pub const DEFAULT_MASS_TOL: f64 = 1e-6;
pub const DEFAULT_BALANCE_TOL: f64 = 1e-2;
/// Nodes with `Q < Q_FLOOR · max Q` are left out of the `1/Q` integrals.
pub const Q_FLOOR: f64 = 1e-14;
/// Imaginary parts of the real-valued integrals above this are a quadrature failure.
pub const IMAG_RESIDUE_TOL: f64 = 1e-6;

#[cfg(feature = "parallel")]
fn map_nodes<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_nodes<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Uniform tensor grid with trapezoidal weights over `d²μ = dRe(μ) dIm(μ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceGrid {
    center: C64,
    half_width: f64,
    points_per_axis: usize,
    nodes: Vec<C64>,
    weights: Vec<f64>,
}

impl PhaseSpaceGrid {
    pub fn center(&self) -> C64 {
        self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    /// Node spacing along each axis.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points_per_axis - 1) as f64
    }

    /// Nodes in row-major order: index `j·P + i` sits at `center + x_i + i·y_j`.
    pub fn nodes(&self) -> &[C64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ wᵢ f(i)`, summed in node order.
    pub fn integrate<F: Fn(usize) -> f64>(&self, f: F) -> f64 {
        self.weights.iter().enumerate().map(|(i, w)| w * f(i)).sum()
    }
}

pub fn build_grid(center: C64, half_width: f64, points_per_axis: usize) -> Result<PhaseSpaceGrid> {
    check_finite("center.re", center.re)?;
    check_finite("center.im", center.im)?;
    check_finite("half_width", half_width)?;
    if half_width <= 0.0 {
        return Err(Error::InvalidParameter { name: "half_width", reason: format!("must be positive, got {half_width}") });
    }
    if points_per_axis < MIN_POINTS_PER_AXIS {
        return Err(Error::InvalidParameter {
            name: "points_per_axis",
            reason: format!("need at least {MIN_POINTS_PER_AXIS}, got {points_per_axis}"),
        });
    }
    let p = points_per_axis;
    let h = 2.0 * half_width / (p - 1) as f64;
    let axis: Vec<f64> = (0..p).map(|i| -half_width + i as f64 * h).collect();
    let w1: Vec<f64> = (0..p).map(|i| if i == 0 || i == p - 1 { 0.5 * h } else { h }).collect();
    let mut nodes = Vec::with_capacity(p * p);
    let mut weights = Vec::with_capacity(p * p);
    for j in 0..p {
        for i in 0..p {
            nodes.push(center + C64::new(axis[i], axis[j]));
            weights.push(w1[i] * w1[j]);
        }
    }
    Ok(PhaseSpaceGrid { center, half_width, points_per_axis, nodes, weights })
}

/// Populations below this do not widen [`auto_grid`].
pub const OCCUPIED_POPULATION: f64 = 1e-18;

/// Grid centred on `⟨a⟩` with half-width `|⟨a⟩| + √n_top + 6`, `n_top` the highest occupied level.
///
/// Q of a state confined to levels `≤ n_top` decays like `e^{−(|μ| − √n_top)²}` outside that
/// disc. A width set by the variance misses the tails of crescent-shaped Kerr states.
pub fn auto_grid(rho: &DensityMatrix, points_per_axis: usize) -> Result<PhaseSpaceGrid> {
    let (a, _) = fock::first_moments(rho);
    let m = rho.matrix();
    let top = (0..rho.dim()).rev().find(|&n| m[(n, n)].re > OCCUPIED_POPULATION).unwrap_or(0);
    build_grid(a, a.norm() + (top as f64).sqrt() + 6.0, points_per_axis)
}

/// Husimi function and its antiholomorphic derivative on a grid.
#[derive(Debug, Clone)]
pub struct PhaseSpaceField {
    grid: PhaseSpaceGrid,
    q: Vec<f64>,
    dq_dmubar: Vec<C64>,
    mass: f64,
}

impl PhaseSpaceField {
    /// Field from sampled values; `q` is clipped at zero.
    pub fn from_samples(grid: PhaseSpaceGrid, q: Vec<f64>, dq_dmubar: Vec<C64>) -> Result<Self> {
        if q.len() != grid.len() || dq_dmubar.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: q.len().min(dq_dmubar.len()) });
        }
        let q: Vec<f64> = q.into_iter().map(|v| v.max(0.0)).collect();
        let mass = grid.integrate(|i| q[i]);
        Ok(PhaseSpaceField { grid, q, dq_dmubar, mass })
    }

    /// Normalized Gaussian with mean `mean` and covariance `cov` in `(Re μ, Im μ)`.
    pub fn gaussian(grid: PhaseSpaceGrid, mean: C64, cov: Matrix2<f64>) -> Result<Self> {
        let det = cov.determinant();
        let inv = cov
            .try_inverse()
            .filter(|_| det > 0.0 && cov[(0, 0)] > 0.0)
            .ok_or_else(|| Error::InvalidCovariance("2×2 covariance is not positive definite".into()))?;
        let norm = 1.0 / (2.0 * PI * det.sqrt());
        let vals = map_nodes(grid.len(), |k| {
            let r = grid.nodes[k] - mean;
            let (x, y) = (r.re, r.im);
            let g0 = inv[(0, 0)] * x + inv[(0, 1)] * y;
            let g1 = inv[(1, 0)] * x + inv[(1, 1)] * y;
            let q = norm * (-0.5 * (x * g0 + y * g1)).exp();
            (q, C64::new(-0.5 * g0 * q, -0.5 * g1 * q))
        });
        let (q, d) = vals.into_iter().unzip();
        Self::from_samples(grid, q, d)
    }

    pub fn grid(&self) -> &PhaseSpaceGrid {
        &self.grid
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn dq_dmubar(&self) -> &[C64] {
        &self.dq_dmubar
    }

    /// `∂_μ Q = conj(∂_μ̄ Q)` since `Q` is real.
    pub fn dq_dmu(&self) -> Vec<C64> {
        self.dq_dmubar.iter().map(|d| d.conj()).collect()
    }

    /// `∫ Q d²μ`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn check_mass(&self, tol: f64) -> Result<()> {
        if self.mass < 1.0 - tol {
            return Err(Error::MassDeficit { mass: self.mass, tol });
        }
        Ok(())
    }

    /// Displaced currents `J^ν = κ((μ − shift)Q + ∂_μ̄Q)`; `shift = 0` gives `J`.
    pub fn currents(&self, kappa: f64, shift: C64) -> Vec<C64> {
        self.grid
            .nodes
            .iter()
            .zip(&self.q)
            .zip(&self.dq_dmubar)
            .map(|((mu, q), d)| (*mu - shift) * *q * kappa + *d * kappa)
            .collect()
    }

    fn floor(&self) -> f64 {
        Q_FLOOR * self.q.iter().cloned().fold(0.0, f64::max)
    }

    /// Fraction of the mass on nodes below the `1/Q` floor.
    pub fn excluded_mass(&self) -> f64 {
        let floor = self.floor();
        self.grid.integrate(|i| if self.q[i] < floor { self.q[i] } else { 0.0 }) / self.mass.max(f64::MIN_POSITIVE)
    }

    /// `∫ f(i)/Q` over nodes above the floor.
    fn integrate_over_q<F: Fn(usize) -> C64>(&self, f: F) -> C64 {
        let floor = self.floor();
        let mut acc = C64::new(0.0, 0.0);
        for (i, w) in self.grid.weights.iter().enumerate() {
            let q = self.q[i];
            if q >= floor && q > 0.0 {
                acc += f(i) * (*w / q);
            }
        }
        acc
    }
}

/// Evaluates `Q` and `∂_μ̄Q` at every grid node.
pub fn husimi_field(rho: &DensityMatrix, grid: &PhaseSpaceGrid) -> Result<PhaseSpaceField> {
    husimi_field_with_tol(rho, grid, DEFAULT_MASS_TOL)
}

pub fn husimi_field_with_tol(rho: &DensityMatrix, grid: &PhaseSpaceGrid, mass_tol: f64) -> Result<PhaseSpaceField> {
    let f = husimi_field_unchecked(rho, grid)?;
    f.check_mass(mass_tol)?;
    Ok(f)
}

/// As [`husimi_field`] without the mass check.
pub fn husimi_field_unchecked(rho: &DensityMatrix, grid: &PhaseSpaceGrid) -> Result<PhaseSpaceField> {
    let d = rho.dim();
    let m = rho.matrix();
    let log_fact = fock::log_factorials(d);
    let sqrt_n: Vec<f64> = (0..d).map(|n| (n as f64).sqrt()).collect();
    let vals = map_nodes(grid.len(), |k| {
        let mu = grid.nodes[k];
        let mut c = vec![C64::new(0.0, 0.0); d];
        fock::coherent_components_into(mu, &log_fact, &mut c);
        // v = ρ|μ⟩, Q = ⟨μ|v⟩/π, ⟨μ|aρ|μ⟩ = Σ_m c̄_m √(m+1) v_{m+1}.
        let v = m * nalgebra::DVector::from_column_slice(&c);
        let mut q = C64::new(0.0, 0.0);
        let mut arho = C64::new(0.0, 0.0);
        for n in 0..d {
            q += c[n].conj() * v[n];
            if n + 1 < d {
                arho += c[n].conj() * v[n + 1] * sqrt_n[n + 1];
            }
        }
        let q = q.re / PI;
        (q, -mu * q + arho / PI)
    });
    let (q, dq) = vals.into_iter().unzip();
    PhaseSpaceField::from_samples(grid.clone(), q, dq)
}

/// Wehrl entropy `−∫ Q ln Q`, with `0 ln 0 = 0`.
pub fn wehrl_entropy(f: &PhaseSpaceField) -> f64 {
    -f.grid.integrate(|i| {
        let q = f.q[i];
        if q > 0.0 {
            q * q.ln()
        } else {
            0.0
        }
    })
}

/// Total flux `Φ = 2κ⟨a†a⟩`.
pub fn entropy_flux(rho: &DensityMatrix, kappa: f64) -> f64 {
    2.0 * kappa * fock::first_moments(rho).1
}

/// `(Φ_ext, Φ_q)` with `Φ_ext = 2κ|⟨a⟩|²` and `Φ_q = Φ − Φ_ext`.
pub fn flux_split(rho: &DensityMatrix, kappa: f64, size: usize) -> (f64, f64) {
    let _ = size;
    let (a, n) = fock::first_moments(rho);
    let phi = 2.0 * kappa * n;
    let phi_ext = 2.0 * kappa * a.norm_sqr();
    (phi_ext, phi - phi_ext)
}

/// `Π_d = (2/κ) ∫ |J^ν|²/Q` with `ν = μ − α√N`.
pub fn pi_d(f: &PhaseSpaceField, kappa: f64, alpha: C64, size: usize) -> f64 {
    let shift = alpha * (size as f64).sqrt();
    let j = f.currents(kappa, shift);
    2.0 / kappa * f.integrate_over_q(|i| C64::new(j[i].norm_sqr(), 0.0)).re
}

/// `Π_u = (iu/2N) ∫ [μ²(∂_μQ)² − μ̄²(∂_μ̄Q)²]/Q` for the Kerr term.
pub fn pi_u_kerr(f: &PhaseSpaceField, u: f64, size: usize) -> Result<f64> {
    let val = f.integrate_over_q(|i| {
        let mu = f.grid.nodes[i];
        let d = f.dq_dmubar[i];
        mu * mu * d.conj() * d.conj() - mu.conj() * mu.conj() * d * d
    }) * C64::new(0.0, u / (2.0 * size as f64));
    real_or_fail(val)
}

fn real_or_fail(val: C64) -> Result<f64> {
    if val.im.abs() > IMAG_RESIDUE_TOL * val.re.abs().max(1.0) {
        return Err(Error::Quadrature { residue: val.im });
    }
    Ok(val.re)
}

/// Normal-ordered `H = N Σ h_rs (a†/√N)^r (a/√N)^s`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NormalOrderedHamiltonian {
    terms: BTreeMap<(u32, u32), C64>,
}

impl NormalOrderedHamiltonian {
    pub fn new(terms: BTreeMap<(u32, u32), C64>) -> Result<Self> {
        for (&(r, s), &h) in &terms {
            let partner = terms.get(&(s, r)).copied().unwrap_or(C64::new(0.0, 0.0));
            if (h - partner.conj()).norm() > 1e-12 * h.norm().max(1.0) {
                return Err(Error::InvalidParameter {
                    name: "h_rs",
                    reason: format!("h_{r}{s} = {h} is not the conjugate of h_{s}{r} = {partner}"),
                });
            }
            check_finite("h_rs", h.re)?;
            check_finite("h_rs", h.im)?;
        }
        Ok(NormalOrderedHamiltonian { terms })
    }

    /// `Δ a†a + (u/2N) a†a†aa + iε√N(a† − a)`.
    pub fn kerr(p: &KerrParams) -> Self {
        let mut t = BTreeMap::new();
        t.insert((1, 1), C64::new(p.detuning, 0.0));
        t.insert((2, 2), C64::new(0.5 * p.nonlinearity, 0.0));
        if p.eps != 0.0 {
            t.insert((1, 0), C64::new(0.0, p.eps));
            t.insert((0, 1), C64::new(0.0, -p.eps));
        }
        NormalOrderedHamiltonian { terms: t }
    }

    pub fn terms(&self) -> &BTreeMap<(u32, u32), C64> {
        &self.terms
    }

    /// Symbol `h(ᾱ, α) = Σ h_rs ᾱ^r α^s`.
    pub fn symbol(&self, alpha_bar: C64, alpha: C64) -> C64 {
        self.terms.iter().map(|(&(r, s), h)| h * alpha_bar.powu(r) * alpha.powu(s)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitaryGeneratorCoefficients {
    pub xi1: C64,
    pub xi2: C64,
    pub xi11: C64,
}

/// `ξ₁ = −iΣ s h_rs α^{s−1}ᾱ^r`, `ξ₂ = −iΣ s(s−1) h_rs α^{s−2}ᾱ^r`,
/// `ξ₁₁ = −iΣ rs h_rs α^{s−1}ᾱ^{r−1}`.
pub fn xi_coefficients(h: &NormalOrderedHamiltonian, alpha: C64) -> Result<UnitaryGeneratorCoefficients> {
    let ab = alpha.conj();
    let zero = C64::new(0.0, 0.0);
    let term = |h: C64, mult: i64, pa: i64, pab: i64, r: u32, s: u32| -> Result<C64> {
        if mult == 0 || h == zero {
            return Ok(zero);
        }
        if (pa < 0 || pab < 0) && alpha == zero {
            return Err(Error::SingularExpansion { r, s });
        }
        Ok(h * mult as f64 * alpha.powi(pa as i32) * ab.powi(pab as i32))
    };
    let (mut xi1, mut xi2, mut xi11) = (zero, zero, zero);
    for (&(r, s), &c) in &h.terms {
        let (ri, si) = (r as i64, s as i64);
        xi1 += term(c, si, si - 1, ri, r, s)?;
        xi2 += term(c, si * (si - 1), si - 2, ri, r, s)?;
        xi11 += term(c, ri * si, si - 1, ri - 1, r, s)?;
    }
    let mi = C64::new(0.0, -1.0);
    Ok(UnitaryGeneratorCoefficients { xi1: mi * xi1, xi2: mi * xi2, xi11: mi * xi11 })
}

/// Leading-order `Π_u = ½ ∫ [ξ₂(∂_ν̄Q)² + ξ̄₂(∂_νQ)²]/Q`.
pub fn pi_u_leading(f: &PhaseSpaceField, xi: &UnitaryGeneratorCoefficients) -> Result<f64> {
    let val = f.integrate_over_q(|i| {
        let d = f.dq_dmubar[i];
        xi.xi2 * d * d + xi.xi2.conj() * d.conj() * d.conj()
    }) * 0.5;
    real_or_fail(val)
}

/// Closed form of [`pi_d`] for a Gaussian `Q` centred at `α√N` with
/// covariance `cov` in `(Re μ, Im μ)`: `2κ[tr C − 2 + ¼ tr C⁻¹]`.
pub fn gaussian_pi_d(cov: &Matrix2<f64>, kappa: f64) -> Result<f64> {
    let inv = cov.try_inverse().ok_or_else(|| Error::InvalidCovariance("singular 2×2 covariance".into()))?;
    Ok(2.0 * kappa * (cov.trace() - 2.0 + 0.25 * inv.trace()))
}

/// Closed form of [`pi_u_leading`] for a Gaussian `Q`: `¼ Re[ξ₂(P₁₁ − P₂₂ + 2iP₁₂)]`, `P = C⁻¹`.
pub fn gaussian_pi_u_leading(cov: &Matrix2<f64>, xi2: C64) -> Result<f64> {
    let p = cov.try_inverse().ok_or_else(|| Error::InvalidCovariance("singular 2×2 covariance".into()))?;
    Ok(0.25 * (xi2 * C64::new(p[(0, 0)] - p[(1, 1)], 2.0 * p[(0, 1)])).re)
}

/// `1 + ln π + ½ ln(4 det C)`: Wehrl entropy of a Gaussian `Q` with covariance `C`.
pub fn gaussian_wehrl(cov: &Matrix2<f64>) -> f64 {
    1.0 + PI.ln() + 0.5 * (4.0 * cov.determinant()).ln()
}

/// Full entropy bookkeeping for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyBudget {
    pub s: f64,
    /// `Π − Φ`, which reduces to `Π_u + Π_d − Φ_q`.
    pub dsdt: f64,
    pub phi_ext: f64,
    pub phi_q: f64,
    pub pi_ext: f64,
    pub pi_u: f64,
    pub pi_d: f64,
    pub alpha: C64,
    pub size: usize,
    /// `|Π_u + Π_d − Φ_q| / max(Φ_q, 1e-12)`.
    pub balance_residual: f64,
    pub balanced: bool,
    pub mass: f64,
    pub excluded_mass: f64,
}

impl EntropyBudget {
    pub fn pi_total(&self) -> f64 {
        self.pi_ext + self.pi_u + self.pi_d
    }

    pub fn phi_total(&self) -> f64 {
        self.phi_ext + self.phi_q
    }

    /// Assembles derived fields from the primary rates.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        s: f64,
        phi_ext: f64,
        phi_q: f64,
        pi_u: f64,
        pi_d: f64,
        alpha: C64,
        size: usize,
        balance_tol: f64,
    ) -> Self {
        let pi_ext = phi_ext;
        let dsdt = (pi_ext + pi_u + pi_d) - (phi_ext + phi_q);
        let balance_residual = (pi_u + pi_d - phi_q).abs() / phi_q.max(1e-12);
        EntropyBudget {
            s,
            dsdt,
            phi_ext,
            phi_q,
            pi_ext,
            pi_u,
            pi_d,
            alpha,
            size,
            balance_residual,
            balanced: balance_residual < balance_tol,
            mass: 1.0,
            excluded_mass: 0.0,
        }
    }
}

/// Budget of a Kerr state on `grid`; the balance flag is informational.
pub fn entropy_budget(rho: &DensityMatrix, p: &KerrParams, grid: &PhaseSpaceGrid) -> Result<EntropyBudget> {
    entropy_budget_with(rho, p, grid, DEFAULT_MASS_TOL, DEFAULT_BALANCE_TOL)
}

pub fn entropy_budget_with(
    rho: &DensityMatrix,
    p: &KerrParams,
    grid: &PhaseSpaceGrid,
    mass_tol: f64,
    balance_tol: f64,
) -> Result<EntropyBudget> {
    p.validate()?;
    let f = husimi_field_with_tol(rho, grid, mass_tol)?;
    budget_from_field(rho, p, &f, balance_tol)
}

/// As [`entropy_budget`] for an already evaluated field of `rho`.
pub fn budget_from_field(rho: &DensityMatrix, p: &KerrParams, f: &PhaseSpaceField, balance_tol: f64) -> Result<EntropyBudget> {
    let (a, _) = fock::first_moments(rho);
    let alpha = a / (p.size as f64).sqrt();
    let (phi_ext, phi_q) = flux_split(rho, p.kappa, p.size);
    let pi_u = if p.nonlinearity == 0.0 { 0.0 } else { pi_u_kerr(f, p.nonlinearity, p.size)? };
    let pi_d = pi_d(f, p.kappa, alpha, p.size);
    let mut b = EntropyBudget::assemble(wehrl_entropy(f), phi_ext, phi_q, pi_u, pi_d, alpha, p.size, balance_tol);
    b.mass = f.mass();
    b.excluded_mass = f.excluded_mass();
    Ok(b)
}

//! Lindblad generator in vectorized form, its null space and spectral gap,
//! and a fixed-step RK4 propagator used as an independent steady-state oracle.
//!
//! Vectorization is column stacking, `vec(A X B) = (Bᵀ ⊗ A) vec(X)`, so
//!
//! ```text
//! L = −i(I⊗H − Hᵀ⊗I) + Σ_k γ_k (L̄_k⊗L_k − ½ I⊗L_k†L_k − ½ (L_k†L_k)ᵀ⊗I)
//! ```
//!
//! For a single Fock mode the pattern is banded with half-width `n_max + 1`,
//! which [`BandLu`] exploits.

use crate::banded::BandLu;
use crate::error::{check_finite, Error, Result};
use crate::fock::{self, annihilation, DensityMatrix, FockOperator};
use crate::kerr;
use crate::sparse::CsrMatrix;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Accepted steady states satisfy `‖L(ρ)‖_F` below this.
pub const STEADY_RESIDUAL_TOL: f64 = 1e-10;
/// Trace drift allowed over a whole RK4 run.
pub const TRACE_DRIFT_TOL: f64 = 1e-9;
/// Largest `dt · ‖L‖∞` accepted by [`evolve`]; RK4's real-axis stability limit is ≈ 2.785.
pub const RK4_STABILITY: f64 = 2.5;
/// Pivots below this magnitude (frequency units) count towards the null space.
pub const NULL_PIVOT_TOL: f64 = 1e-12;

/// Parameters of the driven Kerr cavity
/// `H = Δ a†a + (u/2N) a†a†aa + i ε√N (a† − a)` with loss `2κ D[a]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KerrParams {
    pub detuning: f64,
    pub nonlinearity: f64,
    pub kappa: f64,
    /// Intensive pump; the physical drive is `ε√N`.
    pub eps: f64,
    /// Thermodynamic scale `N`.
    pub size: usize,
}

impl KerrParams {
    pub fn new(detuning: f64, nonlinearity: f64, kappa: f64, eps: f64, size: usize) -> Result<Self> {
        let p = KerrParams { detuning, nonlinearity, kappa, eps, size };
        p.validate()?;
        Ok(p)
    }

    /// Linear cavity (`u = 0`) driven with the physical amplitude `drive` at `N = 1`.
    pub fn empty_cavity(detuning: f64, kappa: f64, drive: f64) -> Result<Self> {
        Self::new(detuning, 0.0, kappa, drive, 1)
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("detuning", self.detuning)?;
        check_finite("nonlinearity", self.nonlinearity)?;
        check_finite("kappa", self.kappa)?;
        check_finite("eps", self.eps)?;
        if self.kappa <= 0.0 {
            return Err(Error::InvalidParameter { name: "kappa", reason: format!("must be positive, got {}", self.kappa) });
        }
        if self.nonlinearity < 0.0 {
            return Err(Error::InvalidParameter {
                name: "nonlinearity",
                reason: format!("must be non-negative, got {}", self.nonlinearity),
            });
        }
        if self.eps < 0.0 {
            return Err(Error::InvalidParameter { name: "eps", reason: format!("must be non-negative, got {}", self.eps) });
        }
        if self.size == 0 {
            return Err(Error::InvalidParameter { name: "size", reason: "N must be at least 1".into() });
        }
        Ok(())
    }

    /// Physical drive amplitude `𝓔 = ε√N`.
    pub fn drive(&self) -> f64 {
        self.eps * (self.size as f64).sqrt()
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_size(mut self, size: usize) -> Self {
        self.size = size;
        self
    }
}

/// Fock cutoff `⌈c₁·N·n₊ + c₂·√(N·n₊)⌉` around the upper mean-field branch `n₊`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffRule {
    pub c1: f64,
    pub c2: f64,
    /// Floor for nearly empty cavities, where the rule alone would give a handful of levels.
    pub min_levels: usize,
}

impl Default for CutoffRule {
    fn default() -> Self {
        CutoffRule { c1: 1.5, c2: 5.0, min_levels: 12 }
    }
}

impl CutoffRule {
    pub fn n_max(&self, p: &KerrParams) -> usize {
        let photons = p.size as f64 * kerr::upper_branch_photons(p);
        let n = (self.c1 * photons + self.c2 * photons.sqrt()).ceil() as usize;
        n.max(self.min_levels)
    }
}

/// The Lindblad generator acting on column-stacked density matrices.
#[derive(Debug, Clone)]
pub struct Superoperator {
    n_max: usize,
    matrix: CsrMatrix,
}

impl Superoperator {
    pub fn from_matrix(n_max: usize, matrix: CsrMatrix) -> Result<Self> {
        if matrix.nrows() != n_max * n_max || matrix.ncols() != n_max * n_max {
            return Err(Error::DimensionMismatch { expected: n_max * n_max, got: matrix.nrows() });
        }
        Ok(Superoperator { n_max, matrix })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Vectorized dimension `n_max²`.
    pub fn dim(&self) -> usize {
        self.n_max * self.n_max
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn apply_vec(&self, x: &[C64]) -> Vec<C64> {
        self.matrix.mul_vec(x)
    }

    pub fn apply(&self, rho: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        let v = self.apply_vec(&fock::vectorize(rho));
        fock::unvectorize(&v, self.n_max)
    }

    /// `max_j |Σ_i L_{(i,i), j}|`: how far the generator is from preserving trace.
    pub fn trace_defect(&self) -> f64 {
        let d = self.n_max;
        let mut sums = vec![ZERO; self.dim()];
        for i in 0..d {
            for (c, v) in self.matrix.row(i + d * i) {
                sums[c] += v;
            }
        }
        sums.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }

    /// `‖L(ρ)‖_F`.
    pub fn residual(&self, rho: &DensityMatrix) -> Result<f64> {
        if rho.dim() != self.n_max {
            return Err(Error::DimensionMismatch { expected: self.n_max, got: rho.dim() });
        }
        let v = self.apply_vec(rho.matrix().as_slice());
        Ok(v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt())
    }
}

/// Generic single-mode Lindblad generator `−i[H, ·] + Σ rate·D[L]`.
pub fn build_lindblad(hamiltonian: &FockOperator, jumps: &[(f64, FockOperator)]) -> Result<Superoperator> {
    let d = hamiltonian.dim();
    let id = CsrMatrix::identity(d);
    let h = hamiltonian.to_csr();
    let mut l = id.kron(&h).add(&h.transpose().kron(&id).scale(-ONE)).scale(-I);
    for (rate, jump) in jumps {
        check_finite("rate", *rate)?;
        if jump.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: jump.dim() });
        }
        let j = jump.to_csr();
        let jdj = j.adjoint().matmul(&j);
        let term = j
            .conj()
            .kron(&j)
            .add(&id.kron(&jdj).scale(C64::new(-0.5, 0.0)))
            .add(&jdj.transpose().kron(&id).scale(C64::new(-0.5, 0.0)));
        l = l.add(&term.scale(C64::new(*rate, 0.0)));
    }
    Superoperator::from_matrix(d, l)
}

/// Kerr Hamiltonian including the coherent drive.
pub fn kerr_hamiltonian(p: &KerrParams, n_max: usize) -> Result<FockOperator> {
    let a = annihilation(n_max)?;
    let ad = a.adjoint();
    let n_op = ad.mul(&a)?;
    let kerr = ad.mul(&ad)?.mul(&a)?.mul(&a)?;
    let drive = ad.add(&a.scale(-ONE))?.scale(I * p.drive());
    n_op.scale(C64::new(p.detuning, 0.0))
        .add(&kerr.scale(C64::new(p.nonlinearity / (2.0 * p.size as f64), 0.0)))?
        .add(&drive)
}

/// Kerr Liouvillian; rejects cutoffs below [`CutoffRule::default`].
pub fn build_kerr_liouvillian(p: &KerrParams, n_max: usize) -> Result<Superoperator> {
    p.validate()?;
    let required = CutoffRule::default().n_max(p);
    if n_max < required {
        return Err(Error::TruncationInadequate { n_max, required });
    }
    build_kerr_liouvillian_unchecked(p, n_max)
}

/// Kerr Liouvillian at any cutoff `≥ 2`, for convergence studies.
pub fn build_kerr_liouvillian_unchecked(p: &KerrParams, n_max: usize) -> Result<Superoperator> {
    p.validate()?;
    let h = kerr_hamiltonian(p, n_max)?;
    build_lindblad(&h, &[(2.0 * p.kappa, annihilation(n_max)?)])
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: DensityMatrix,
    /// `‖L(ρ)‖_F` after Hermitization and normalization.
    pub residual: f64,
    pub iterations: usize,
}

/// Null eigenvector of `L` by inverse iteration on its (singular) band LU.
///
/// The shift is zero: inside a bistable window the Liouvillian gap is already
/// ~1e-9 at `N = 30`, so any fixed positive shift would converge to a mixture
/// of the steady state and the slow mode. A floored pivot stands in for the
/// exact zero.
pub fn steady_state(l: &Superoperator) -> Result<SteadyState> {
    let d = l.n_max();
    let lu = BandLu::factor(l.matrix(), ZERO, 1e-15)?;
    let null_pivots = lu.pivot_magnitudes().iter().filter(|&&p| p <= NULL_PIVOT_TOL).count();
    if null_pivots >= 2 {
        return Err(Error::DegenerateSteadyState(null_pivots));
    }
    let mut x: Vec<C64> = fock::vectorize(&(DMatrix::identity(d, d) / C64::new(d as f64, 0.0)));
    let mut last = f64::INFINITY;
    for it in 1..=6 {
        lu.solve_in_place(&mut x);
        let norm = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::NoConvergence("inverse iteration produced a non-finite iterate".into()));
        }
        x.iter_mut().for_each(|v| *v /= norm);
        let rho = DensityMatrix::hermitized(fock::unvectorize(&x, d)?)?;
        let residual = l.residual(&rho)?;
        if it >= 2 && residual < STEADY_RESIDUAL_TOL {
            rho.validate()?;
            return Ok(SteadyState { rho, residual, iterations: it });
        }
        last = residual;
    }
    Err(Error::NoConvergence(format!("steady-state residual stuck at {last:.3e}")))
}

/// Gershgorin bound on the spectral radius of `L`.
pub fn spectral_radius_bound(l: &Superoperator) -> f64 {
    l.matrix().norm_inf()
}

/// Largest step accepted by [`evolve`].
pub fn max_stable_dt(l: &Superoperator) -> f64 {
    RK4_STABILITY / spectral_radius_bound(l).max(f64::MIN_POSITIVE)
}

/// Fixed-step RK4 propagation of `ρ0` to `t_final`.
pub fn evolve(rho0: &DensityMatrix, l: &Superoperator, t_final: f64, dt: f64) -> Result<DensityMatrix> {
    evolve_observed(rho0, l, t_final, dt, 0, |_, _| {})
}

/// As [`evolve`], calling `observer(t, ρ(t))` every `every` steps (and at `t = 0`)
/// when `every > 0`.
pub fn evolve_observed<F>(
    rho0: &DensityMatrix,
    l: &Superoperator,
    t_final: f64,
    dt: f64,
    every: usize,
    mut observer: F,
) -> Result<DensityMatrix>
where
    F: FnMut(f64, &DMatrix<C64>),
{
    if rho0.dim() != l.n_max() {
        return Err(Error::DimensionMismatch { expected: l.n_max(), got: rho0.dim() });
    }
    if !(dt > 0.0) || !(t_final >= 0.0) {
        return Err(Error::StepSize(format!("need dt > 0 and t_final >= 0, got dt={dt}, t_final={t_final}")));
    }
    let bound = spectral_radius_bound(l);
    if dt * bound > RK4_STABILITY {
        return Err(Error::StepSize(format!(
            "dt·‖L‖ = {:.3} exceeds the RK4 stability limit {RK4_STABILITY}",
            dt * bound
        )));
    }
    let d = l.n_max();
    let steps = (t_final / dt).round() as usize;
    let dim = l.dim();
    let mut x = fock::vectorize(rho0.matrix());
    let tr0 = rho0.trace();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![ZERO; dim], vec![ZERO; dim], vec![ZERO; dim], vec![ZERO; dim]);
    let mut tmp = vec![ZERO; dim];
    let m = l.matrix();
    if every > 0 {
        observer(0.0, &fock::unvectorize(&x, d)?);
    }
    for step in 1..=steps {
        m.mul_vec_into(&x, &mut k1);
        axpy_into(&x, 0.5 * dt, &k1, &mut tmp);
        m.mul_vec_into(&tmp, &mut k2);
        axpy_into(&x, 0.5 * dt, &k2, &mut tmp);
        m.mul_vec_into(&tmp, &mut k3);
        axpy_into(&x, dt, &k3, &mut tmp);
        m.mul_vec_into(&tmp, &mut k4);
        let w = dt / 6.0;
        for i in 0..dim {
            x[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * w;
        }
        if every > 0 && step % every == 0 {
            observer(step as f64 * dt, &fock::unvectorize(&x, d)?);
        }
    }
    let out = fock::unvectorize(&x, d)?;
    let drift = (out.trace() - tr0).norm();
    if drift > TRACE_DRIFT_TOL {
        return Err(Error::StepSize(format!("trace drifted by {drift:.3e}")));
    }
    DensityMatrix::new(out)
}

/// Long-time RK4 limit: propagates in chunks of `chunk` until two
/// consecutive chunk ends are within `tol` in trace distance.
pub fn propagate_to_steady_state(
    l: &Superoperator,
    rho0: &DensityMatrix,
    dt: f64,
    chunk: f64,
    tol: f64,
    max_time: f64,
) -> Result<(DensityMatrix, f64)> {
    let mut rho = rho0.clone();
    let mut t = 0.0;
    while t < max_time {
        let next = evolve(&rho, l, chunk, dt)?;
        t += chunk;
        let change = next.trace_distance(&rho)?;
        rho = next;
        if change < tol {
            return Ok((rho, t));
        }
    }
    Err(Error::NoConvergence(format!("propagation not stationary after t = {max_time}")))
}

fn axpy_into(x: &[C64], a: f64, y: &[C64], out: &mut [C64]) {
    for i in 0..x.len() {
        out[i] = x[i] + y[i] * a;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapOptions {
    /// Real shift of the shift-invert operator, in frequency units.
    pub shift: f64,
    pub krylov_dim: usize,
    pub max_restarts: usize,
    /// Relative Ritz residual for convergence.
    pub tol: f64,
    pub seed: u64,
}

impl Default for GapOptions {
    fn default() -> Self {
        GapOptions { shift: 1e-3, krylov_dim: 40, max_restarts: 30, tol: 1e-9, seed: 0x5eed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapResult {
    pub gap: f64,
    /// The slowest decaying eigenvalue `λ₁`.
    pub eigenvalue: C64,
    pub restarts: usize,
    /// Ritz values found on the last pass, sorted by decreasing real part.
    pub ritz_values: Vec<C64>,
}

/// `−Re λ₁` for the nonzero eigenvalue of `L` with the largest real part.
pub fn liouvillian_gap(l: &Superoperator) -> Result<f64> {
    Ok(liouvillian_gap_with(l, &GapOptions::default())?.gap)
}

/// Shift-invert Arnoldi on the trace-zero subspace.
///
/// Every eigenvector of a trace-preserving generator other than the steady
/// state is traceless, and `(L − σ)⁻¹` maps traceless matrices to traceless
/// matrices, so restricting the Krylov space removes the zero eigenvalue
/// without knowing the steady state.
pub fn liouvillian_gap_with(l: &Superoperator, opts: &GapOptions) -> Result<GapResult> {
    let d = l.n_max();
    let dim = l.dim();
    let sigma = C64::new(opts.shift, 0.0);
    let lu = BandLu::factor(l.matrix(), sigma, 1e-300)?;
    let m = opts.krylov_dim.min(dim - 1).max(2);

    let project = |x: &mut [C64]| {
        let tr: C64 = (0..d).map(|i| x[i + d * i]).sum::<C64>() / d as f64;
        for i in 0..d {
            x[i + d * i] -= tr;
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start: Vec<C64> = (0..dim).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();

    let mut best: Option<(C64, f64)> = None;
    for restart in 0..=opts.max_restarts {
        project(&mut start);
        let (basis, h, steps) = arnoldi(&lu, &start, m, &project)?;
        let ritz = ritz_pairs(&h, steps)?;
        // λ = σ + 1/θ, ranked by real part.
        // After a Krylov breakdown the leftover directions are noise with θ ≈ 0.
        let theta_max = ritz.iter().map(|r| r.0.norm()).fold(0.0, f64::max);
        let mut cands: Vec<(C64, f64, DVector<C64>)> = ritz
            .into_iter()
            .filter(|(theta, _, _)| theta.norm() > 1e-10 * theta_max)
            .map(|(theta, res, y)| (sigma + ONE / theta, res / theta.norm(), y))
            .collect();
        cands.sort_by(|a, b| b.0.re.partial_cmp(&a.0.re).unwrap());
        let ritz_values: Vec<C64> = cands.iter().map(|c| c.0).collect();
        if let Some((lambda, rel, _)) = cands.first() {
            let converged = *rel < opts.tol || steps < m;
            best = Some((*lambda, *rel));
            if converged {
                if lambda.re.abs() < NULL_PIVOT_TOL {
                    return Err(Error::DegenerateSteadyState(2));
                }
                return Ok(GapResult { gap: -lambda.re, eigenvalue: *lambda, restarts: restart, ritz_values });
            }
        }
        // Restart from the leading Ritz vectors.
        start = vec![ZERO; dim];
        for (_, _, y) in cands.iter().take(4) {
            for (k, v) in basis.iter().enumerate().take(steps) {
                let c = y[k];
                for i in 0..dim {
                    start[i] += v[i] * c;
                }
            }
        }
    }
    let (lambda, rel) = best.unwrap_or((ZERO, f64::INFINITY));
    Err(Error::NoConvergence(format!(
        "Arnoldi gap estimate {lambda} not converged (relative residual {rel:.3e})"
    )))
}

type Basis = Vec<Vec<C64>>;

/// `steps` Arnoldi steps of `x ↦ P (L − σ)⁻¹ x`; returns the basis, the
/// `(steps + 1) × steps` Hessenberg matrix and the number of steps taken.
fn arnoldi<P>(lu: &BandLu, start: &[C64], m: usize, project: &P) -> Result<(Basis, DMatrix<C64>, usize)>
where
    P: Fn(&mut [C64]),
{
    let dim = start.len();
    let mut basis: Basis = Vec::with_capacity(m + 1);
    let norm = l2(start);
    if norm == 0.0 {
        return Err(Error::NoConvergence("Arnoldi start vector vanished".into()));
    }
    basis.push(start.iter().map(|v| v / norm).collect());
    let mut h = DMatrix::zeros(m + 1, m);
    let mut steps = m;
    for j in 0..m {
        let mut w = lu.solve(&basis[j]);
        project(&mut w);
        // Two passes of classical Gram-Schmidt keep the basis orthogonal to working precision.
        for _ in 0..2 {
            for (k, v) in basis.iter().enumerate() {
                let c: C64 = v.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
                h[(k, j)] += c;
                for i in 0..dim {
                    w[i] -= v[i] * c;
                }
            }
        }
        let hn = l2(&w);
        h[(j + 1, j)] = C64::new(hn, 0.0);
        if !hn.is_finite() {
            return Err(Error::NoConvergence("Arnoldi produced a non-finite vector".into()));
        }
        if hn <= 1e-13 * h.column(j).norm() {
            steps = j + 1;
            break;
        }
        basis.push(w.iter().map(|v| v / hn).collect());
    }
    Ok((basis, h, steps))
}

/// Eigenpairs `(θ, residual, y)` of the leading `k × k` block of `h`, with
/// residual `|h_{k+1,k} y_k|` for unit `y`.
fn ritz_pairs(h: &DMatrix<C64>, k: usize) -> Result<Vec<(C64, f64, DVector<C64>)>> {
    let hk = h.view((0, 0), (k, k)).into_owned();
    let schur = nalgebra::Schur::try_new(hk.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::NoConvergence("Hessenberg Schur decomposition failed".into()))?;
    let (q, t) = schur.unpack();
    let beta = h[(k, k - 1)].norm();
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let theta = t[(i, i)];
        // Back substitution on the triangular factor for its i-th eigenvector.
        let mut z = DVector::zeros(k);
        z[i] = ONE;
        for r in (0..i).rev() {
            let s: C64 = ((r + 1)..=i).map(|c| t[(r, c)] * z[c]).sum();
            let mut den = t[(r, r)] - theta;
            if den.norm() < 1e-14 * theta.norm().max(1e-300) {
                den = C64::new(1e-14 * theta.norm().max(1e-300), 0.0);
            }
            z[r] = -s / den;
        }
        let mut y = &q * z;
        let n = y.norm();
        y /= C64::new(n, 0.0);
        let res = beta * y[k - 1].norm();
        out.push((theta, res, y));
    }
    Ok(out)
}

fn l2(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

//! Truncated Fock-space algebra: ladder operators, coherent states,
//! density matrices and expectation values.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// Operators up to this cutoff are stored densely.
pub const DENSE_LIMIT: usize = 64;

pub const TOL_HERMITIAN: f64 = 1e-10;
pub const TOL_TRACE: f64 = 1e-10;
pub const TOL_POSITIVITY: f64 = 1e-8;

/// Default ratio `n_max / |μ|²` below which a coherent state is refused.
pub const COHERENT_ADEQUACY: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Dense(DMatrix<C64>),
    Sparse(CsrMatrix),
}

/// A linear operator on the span of `|0⟩ … |n_max − 1⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    dim: usize,
    storage: Storage,
}

impl FockOperator {
    pub fn from_triplets(dim: usize, triplets: Vec<(usize, usize, C64)>) -> Result<Self> {
        check_dim(dim)?;
        if triplets.iter().any(|(_, _, v)| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidParameter { name: "entries", reason: "non-finite operator entry".into() });
        }
        let csr = CsrMatrix::from_triplets(dim, dim, triplets);
        Ok(Self::from_csr(csr))
    }

    fn from_csr(csr: CsrMatrix) -> Self {
        let dim = csr.nrows();
        let storage = if dim <= DENSE_LIMIT { Storage::Dense(csr.to_dense()) } else { Storage::Sparse(csr) };
        FockOperator { dim, storage }
    }

    pub fn from_dense(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidDimension(format!("operator must be square, got {}x{}", m.nrows(), m.ncols())));
        }
        let mut t = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)] != C64::new(0.0, 0.0) {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), t)
    }

    pub fn identity(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self::from_csr(CsrMatrix::identity(dim)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn to_csr(&self) -> CsrMatrix {
        match &self.storage {
            Storage::Sparse(s) => s.clone(),
            Storage::Dense(d) => {
                let mut t = Vec::new();
                for j in 0..self.dim {
                    for i in 0..self.dim {
                        if d[(i, j)] != C64::new(0.0, 0.0) {
                            t.push((i, j, d[(i, j)]));
                        }
                    }
                }
                CsrMatrix::from_triplets(self.dim, self.dim, t)
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        match &self.storage {
            Storage::Dense(d) => d.clone(),
            Storage::Sparse(s) => s.to_dense(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        match &self.storage {
            Storage::Dense(d) => d[(i, j)],
            Storage::Sparse(s) => s.get(i, j),
        }
    }

    /// Stored (possibly zero for dense storage) entries.
    pub fn entries(&self) -> Vec<(usize, usize, C64)> {
        match &self.storage {
            Storage::Sparse(s) => s.iter().collect(),
            Storage::Dense(d) => {
                let mut out = Vec::with_capacity(self.dim * self.dim);
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        out.push((i, j, d[(i, j)]));
                    }
                }
                out
            }
        }
    }

    pub fn adjoint(&self) -> Self {
        match &self.storage {
            Storage::Dense(d) => FockOperator { dim: self.dim, storage: Storage::Dense(d.adjoint()) },
            Storage::Sparse(s) => FockOperator { dim: self.dim, storage: Storage::Sparse(s.adjoint()) },
        }
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same_dim(other)?;
        Ok(match (&self.storage, &other.storage) {
            (Storage::Dense(a), Storage::Dense(b)) => FockOperator { dim: self.dim, storage: Storage::Dense(a * b) },
            _ => Self::from_csr(self.to_csr().matmul(&other.to_csr())),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_dim(other)?;
        Ok(match (&self.storage, &other.storage) {
            (Storage::Dense(a), Storage::Dense(b)) => FockOperator { dim: self.dim, storage: Storage::Dense(a + b) },
            _ => Self::from_csr(self.to_csr().add(&other.to_csr())),
        })
    }

    pub fn scale(&self, s: C64) -> Self {
        match &self.storage {
            Storage::Dense(d) => FockOperator { dim: self.dim, storage: Storage::Dense(d * s) },
            Storage::Sparse(m) => FockOperator { dim: self.dim, storage: Storage::Sparse(m.scale(s)) },
        }
    }

    pub fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        Ok(match &self.storage {
            Storage::Sparse(s) => s.mul_vec(v),
            Storage::Dense(d) => (0..self.dim).map(|i| (0..self.dim).map(|j| d[(i, j)] * v[j]).sum()).collect(),
        })
    }

    /// `[self, other]`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        Ok(self.mul(other)?.add(&other.mul(self)?.scale(C64::new(-1.0, 0.0)))?)
    }

    fn same_dim(&self, other: &Self) -> Result<()> {
        if self.dim == other.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim, got: other.dim })
        }
    }
}

fn check_dim(n_max: usize) -> Result<()> {
    if n_max < 2 {
        Err(Error::InvalidDimension(format!("Fock cutoff must be at least 2, got {n_max}")))
    } else {
        Ok(())
    }
}

/// Truncated annihilation operator: `a|n⟩ = √n |n−1⟩`.
pub fn annihilation(n_max: usize) -> Result<FockOperator> {
    check_dim(n_max)?;
    FockOperator::from_triplets(n_max, (1..n_max).map(|n| (n - 1, n, C64::new((n as f64).sqrt(), 0.0))).collect())
}

pub fn creation(n_max: usize) -> Result<FockOperator> {
    Ok(annihilation(n_max)?.adjoint())
}

pub fn number(n_max: usize) -> Result<FockOperator> {
    check_dim(n_max)?;
    FockOperator::from_triplets(n_max, (0..n_max).map(|n| (n, n, C64::new(n as f64, 0.0))).collect())
}

/// `ln n!` for `n = 0..len`, accumulated as `Σ ln k` so it stays finite past `n = 170`.
pub fn log_factorials(len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut acc = 0.0;
    for n in 0..len {
        if n > 1 {
            acc += (n as f64).ln();
        }
        out.push(acc);
    }
    out
}

/// A coherent state `|μ⟩` truncated to the first `n_max` Fock levels.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherentStateVector {
    pub amplitude: C64,
    pub components: Vec<C64>,
}

impl CoherentStateVector {
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.components.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Probability weight lost to truncation, `1 − ‖v‖²`.
    pub fn leakage(&self) -> f64 {
        1.0 - self.norm_sqr()
    }

    pub fn inner(&self, other: &Self) -> C64 {
        self.components.iter().zip(&other.components).map(|(a, b)| a.conj() * b).sum()
    }
}

/// Fills `out[n] = e^{−|μ|²/2} μⁿ/√n!` using precomputed `ln n!`.
pub(crate) fn coherent_components_into(mu: C64, log_fact: &[f64], out: &mut [C64]) {
    let r2 = mu.norm_sqr();
    if r2 == 0.0 {
        out.iter_mut().for_each(|c| *c = C64::new(0.0, 0.0));
        out[0] = C64::new(1.0, 0.0);
        return;
    }
    let ln_r = r2.sqrt().ln();
    let phase = mu / mu.norm();
    let mut ph = C64::new(1.0, 0.0);
    for (n, c) in out.iter_mut().enumerate() {
        let log_mag = -0.5 * r2 + n as f64 * ln_r - 0.5 * log_fact[n];
        *c = ph * log_mag.exp();
        ph *= phase;
    }
}

/// Coherent state with the default adequacy guard `|μ|² ≤ n_max / 2`.
pub fn coherent_state(mu: C64, n_max: usize) -> Result<CoherentStateVector> {
    coherent_state_with_guard(mu, n_max, COHERENT_ADEQUACY)
}

pub fn coherent_state_with_guard(mu: C64, n_max: usize, adequacy: f64) -> Result<CoherentStateVector> {
    check_dim(n_max)?;
    if !(mu.re.is_finite() && mu.im.is_finite()) {
        return Err(Error::InvalidParameter { name: "mu", reason: "non-finite amplitude".into() });
    }
    let r2 = mu.norm_sqr();
    if r2 * adequacy > n_max as f64 {
        return Err(Error::TruncationInadequate { n_max, required: (r2 * adequacy).ceil() as usize });
    }
    let log_fact = log_factorials(n_max);
    let mut components = vec![C64::new(0.0, 0.0); n_max];
    coherent_components_into(mu, &log_fact, &mut components);
    Ok(CoherentStateVector { amplitude: mu, components })
}

/// A validated state: Hermitian, unit trace and positive up to truncation noise.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        let rho = Self::new_unchecked(matrix)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Only checks shape and finiteness.
    pub fn new_unchecked(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::InvalidDimension(format!(
                "density matrix must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        check_dim(matrix.nrows())?;
        if matrix.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidState("non-finite entry".into()));
        }
        Ok(DensityMatrix { matrix })
    }

    /// `(ρ + ρ†)/2`, then divided by its trace.
    pub fn hermitized(matrix: DMatrix<C64>) -> Result<Self> {
        let h = (&matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
        let tr = h.trace();
        if tr.norm() == 0.0 || !tr.re.is_finite() {
            return Err(Error::InvalidState("cannot normalize a traceless matrix".into()));
        }
        Self::new_unchecked(h / tr)
    }

    pub fn pure(psi: &[C64]) -> Result<Self> {
        let v = nalgebra::DVector::from_column_slice(psi);
        let n = v.norm_squared();
        Self::new(&v * v.adjoint() / C64::new(n, 0.0))
    }

    pub fn vacuum(n_max: usize) -> Result<Self> {
        check_dim(n_max)?;
        let mut m = DMatrix::zeros(n_max, n_max);
        m[(0, 0)] = C64::new(1.0, 0.0);
        Self::new(m)
    }

    pub fn maximally_mixed(n_max: usize) -> Result<Self> {
        check_dim(n_max)?;
        Self::new(DMatrix::identity(n_max, n_max) / C64::new(n_max as f64, 0.0))
    }

    /// Truncated thermal state with mean occupation `n_bar`, renormalized.
    pub fn thermal(n_bar: f64, n_max: usize) -> Result<Self> {
        check_dim(n_max)?;
        if !(n_bar >= 0.0) {
            return Err(Error::InvalidParameter { name: "n_bar", reason: format!("must be non-negative, got {n_bar}") });
        }
        let ratio = n_bar / (1.0 + n_bar);
        let mut m = DMatrix::zeros(n_max, n_max);
        let mut p = 1.0;
        for n in 0..n_max {
            m[(n, n)] = C64::new(p, 0.0);
            p *= ratio;
        }
        let tr = m.trace();
        Self::new(m / tr)
    }

    /// `|μ⟩⟨μ|` with the truncated vector renormalized.
    pub fn coherent(mu: C64, n_max: usize) -> Result<Self> {
        let v = coherent_state(mu, n_max)?;
        Self::pure(&v.components)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let m = &self.matrix;
        let n = m.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_defect();
        if herm > TOL_HERMITIAN {
            return Err(Error::InvalidState(format!("Hermiticity defect {herm:.3e}")));
        }
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > TOL_TRACE {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = self.eigenvalues()[0];
        if min < -TOL_POSITIVITY {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    /// `−tr ρ ln ρ`, ignoring eigenvalues at or below zero.
    pub fn von_neumann_entropy(&self) -> f64 {
        self.eigenvalues().into_iter().filter(|&p| p > 0.0).map(|p| -p * p.ln()).sum()
    }

    /// `½‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        let d = &self.matrix - &other.matrix;
        let h = (&d + d.adjoint()) * C64::new(0.5, 0.0);
        Ok(0.5 * nalgebra::SymmetricEigen::new(h).eigenvalues.iter().map(|v| v.abs()).sum::<f64>())
    }

    /// Diagonal of the matrix as photon-number probabilities.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|n| self.matrix[(n, n)].re).collect()
    }

    /// Embeds into a larger cutoff by zero padding, or truncates and renormalizes.
    pub fn resized(&self, n_max: usize) -> Result<Self> {
        check_dim(n_max)?;
        let k = n_max.min(self.dim());
        let mut m = DMatrix::zeros(n_max, n_max);
        m.view_mut((0, 0), (k, k)).copy_from(&self.matrix.view((0, 0), (k, k)));
        Self::hermitized(m)
    }

    /// `Σ_ij ρ_ij O_ji`; no validation of either argument.
    fn trace_product(&self, op: &FockOperator) -> C64 {
        op.entries().into_iter().map(|(i, j, v)| self.matrix[(j, i)] * v).sum()
    }
}

/// `tr(ρ O)`.
pub fn expectation(rho: &DensityMatrix, op: &FockOperator) -> Result<C64> {
    if rho.dim() != op.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), got: op.dim() });
    }
    Ok(rho.trace_product(op))
}

/// Convenience moments `(⟨a⟩, ⟨a†a⟩)` from the matrix elements directly.
pub fn first_moments(rho: &DensityMatrix) -> (C64, f64) {
    let m = rho.matrix();
    let d = rho.dim();
    let mut a = C64::new(0.0, 0.0);
    let mut n = 0.0;
    for k in 1..d {
        a += m[(k, k - 1)] * (k as f64).sqrt();
        n += m[(k, k)].re * k as f64;
    }
    (a, n)
}

/// Column-stacking vectorization: `vec(ρ)[i + d·j] = ρ_ij`.
pub fn vectorize(m: &DMatrix<C64>) -> Vec<C64> {
    m.as_slice().to_vec()
}

pub fn unvectorize(v: &[C64], dim: usize) -> Result<DMatrix<C64>> {
    if v.len() != dim * dim {
        return Err(Error::DimensionMismatch { expected: dim * dim, got: v.len() });
    }
    Ok(DMatrix::from_column_slice(dim, dim, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn annihilation_entries() {
        let a = annihilation(3).unwrap();
        assert_eq!(a.get(0, 1), c(1.0, 0.0));
        assert_eq!(a.get(1, 2), c(2f64.sqrt(), 0.0));
        let nonzero = a.entries().into_iter().filter(|e| e.2 != c(0.0, 0.0)).count();
        assert_eq!(nonzero, 2);
        assert!(matches!(annihilation(1), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn annihilation_kills_vacuum() {
        let a = annihilation(6).unwrap();
        let mut vac = vec![c(0.0, 0.0); 6];
        vac[0] = c(1.0, 0.0);
        assert!(a.apply(&vac).unwrap().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn number_operator_spectrum() {
        for n_max in [2, 7, 70] {
            let a = annihilation(n_max).unwrap();
            let n = a.adjoint().mul(&a).unwrap();
            let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(n.to_dense()).eigenvalues.iter().copied().collect();
            ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for (k, e) in ev.iter().enumerate() {
                assert!((e - k as f64).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn storage_switches_above_dense_limit() {
        assert!(annihilation(DENSE_LIMIT).unwrap().is_dense());
        assert!(!annihilation(DENSE_LIMIT + 1).unwrap().is_dense());
    }

    #[test]
    fn coherent_vacuum_and_overlap() {
        let v = coherent_state(c(0.0, 0.0), 5).unwrap();
        assert_eq!(v.components[0], c(1.0, 0.0));
        assert!(v.components[1..].iter().all(|x| x.norm() == 0.0));

        // |⟨μ|ν⟩|² = e^{−|μ−ν|²}
        let mu = coherent_state(c(1.0, 0.0), 40).unwrap();
        let nu = coherent_state(c(0.0, 0.0), 40).unwrap();
        assert!((mu.inner(&nu).norm_sqr() - (-1.0f64).exp()).abs() < 1e-10);
        let nu = coherent_state(c(0.3, -0.8), 40).unwrap();
        let expected = (-(c(1.0, 0.0) - c(0.3, -0.8)).norm_sqr()).exp();
        assert!((mu.inner(&nu).norm_sqr() - expected).abs() < 1e-10);
    }

    #[test]
    fn coherent_mean_photon_number() {
        let v = coherent_state(c(1.5, 0.0), 40).unwrap();
        let n = number(40).unwrap().apply(&v.components).unwrap();
        let mean: f64 = v.components.iter().zip(&n).map(|(x, y)| (x.conj() * y).re).sum();
        assert!((mean - 2.25).abs() < 1e-8);
    }

    #[test]
    fn coherent_guard_reports_required_cutoff() {
        match coherent_state(c(3.0, 0.0), 10) {
            Err(Error::TruncationInadequate { n_max: 10, required }) => assert_eq!(required, 18),
            other => panic!("unexpected {other:?}"),
        }
        assert!(coherent_state_with_guard(c(3.0, 0.0), 10, 1.0).is_ok());
    }

    #[test]
    fn log_factorials_survive_past_170() {
        let lf = log_factorials(400);
        assert!(lf[399].is_finite());
        assert!((lf[5] - 120f64.ln()).abs() < 1e-12);
        let v = coherent_state(c(12.0, 5.0), 400).unwrap();
        assert!(v.components.iter().all(|x| x.re.is_finite() && x.im.is_finite()));
        assert!(v.leakage().abs() < 1e-12);
    }

    #[test]
    fn expectation_examples() {
        let vac = DensityMatrix::vacuum(8).unwrap();
        assert_eq!(expectation(&vac, &number(8).unwrap()).unwrap(), c(0.0, 0.0));

        let coh = DensityMatrix::coherent(c(1.0, 0.0), 40).unwrap();
        let a = expectation(&coh, &annihilation(40).unwrap()).unwrap();
        assert!((a - c(1.0, 0.0)).norm() < 1e-10);

        let mixed = DensityMatrix::maximally_mixed(4).unwrap();
        let n = expectation(&mixed, &number(4).unwrap()).unwrap();
        assert!((n - c(1.5, 0.0)).norm() < 1e-14);

        assert!(matches!(expectation(&mixed, &number(5).unwrap()), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn hermitian_expectations_are_real() {
        let rho = DensityMatrix::thermal(1.3, 30).unwrap();
        let a = annihilation(30).unwrap();
        let x = a.add(&a.adjoint()).unwrap();
        assert!(expectation(&rho, &x).unwrap().im.abs() < 1e-10);
    }

    #[test]
    fn density_matrix_validation() {
        let mut m = DMatrix::zeros(3, 3);
        m[(0, 0)] = c(0.5, 0.0);
        m[(1, 1)] = c(0.5, 0.0);
        m[(0, 1)] = c(0.0, 0.1);
        assert!(DensityMatrix::new(m.clone()).is_err());
        m[(1, 0)] = c(0.0, -0.1);
        assert!(DensityMatrix::new(m.clone()).is_ok());
        m[(0, 1)] = c(0.0, 0.9);
        m[(1, 0)] = c(0.0, -0.9);
        assert!(matches!(DensityMatrix::new(m), Err(Error::InvalidState(_))));
    }

    #[test]
    fn von_neumann_and_trace_distance() {
        let mixed = DensityMatrix::maximally_mixed(4).unwrap();
        assert!((mixed.von_neumann_entropy() - 4f64.ln()).abs() < 1e-12);
        let vac = DensityMatrix::vacuum(4).unwrap();
        assert!(vac.von_neumann_entropy().abs() < 1e-12);
        assert!((vac.trace_distance(&mixed).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn first_moments_match_operator_route() {
        let rho = DensityMatrix::coherent(c(0.7, -1.1), 30).unwrap();
        let (a, n) = first_moments(&rho);
        let a2 = expectation(&rho, &annihilation(30).unwrap()).unwrap();
        let n2 = expectation(&rho, &number(30).unwrap()).unwrap();
        assert!((a - a2).norm() < 1e-13);
        assert!((n - n2.re).abs() < 1e-13);
    }

    #[test]
    fn vectorization_is_column_stacking() {
        let m = DMatrix::from_fn(3, 3, |i, j| c(i as f64, j as f64));
        let v = vectorize(&m);
        assert_eq!(v[1 + 3 * 2], c(1.0, 2.0));
        assert_eq!(unvectorize(&v, 3).unwrap(), m);
    }

    proptest! {
        #[test]
        fn commutator_is_identity_except_top_level(n_max in 2usize..80) {
            let a = annihilation(n_max).unwrap();
            let comm = a.commutator(&a.adjoint()).unwrap().to_dense();
            for i in 0..n_max {
                for j in 0..n_max {
                    let expected = if i != j {
                        0.0
                    } else if i == n_max - 1 {
                        -((n_max - 1) as f64)
                    } else {
                        1.0
                    };
                    prop_assert!((comm[(i, j)] - c(expected, 0.0)).norm() < 1e-12);
                }
            }
        }

        #[test]
        fn leakage_decreases_with_cutoff(re in -2.0f64..2.0, im in -2.0f64..2.0, n in 10usize..60) {
            let mu = c(re, im);
            let small = coherent_state_with_guard(mu, n, 0.0).unwrap().leakage();
            let large = coherent_state_with_guard(mu, n + 1, 0.0).unwrap().leakage();
            prop_assert!(large <= small + 1e-15);
        }

        #[test]
        fn expectation_is_linear_and_conjugate_symmetric(
            re in -1.0f64..1.0, im in -1.0f64..1.0, s in -3.0f64..3.0, t in -3.0f64..3.0,
        ) {
            let d = 12;
            let rho = DensityMatrix::coherent(c(re, im), d).unwrap();
            let a = annihilation(d).unwrap();
            let n = number(d).unwrap();
            let a2 = a.mul(&a).unwrap();
            let combo = a.scale(c(s, 0.0)).add(&a2.scale(c(0.0, t))).unwrap();
            let lhs = expectation(&rho, &combo).unwrap();
            let rhs = expectation(&rho, &a).unwrap() * s + expectation(&rho, &a2).unwrap() * c(0.0, t);
            prop_assert!((lhs - rhs).norm() < 1e-12);
            let o = a2.add(&n).unwrap();
            let e = expectation(&rho, &o).unwrap();
            let e_dag = expectation(&rho, &o.adjoint()).unwrap();
            prop_assert!((e_dag - e.conj()).norm() < 1e-12);
        }
    }
}

//! Banded LU factorization with partial pivoting.
//!
//! The Liouvillian in column-stacked Fock coordinates only couples indices
//! within `n_max + 1` of each other, so a band solver factors it in
//! `O(n · kl · (kl + ku))` work instead of the dense `O(n³)`.
//!
//! Storage follows the LAPACK `gbtrf` layout: column-major with
//! `ldab = 2·kl + ku + 1` rows per column, entry `(i, j)` at row
//! `kl + ku + i − j`. The extra `kl` rows absorb the fill-in that row
//! interchanges push into `U`.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use num_complex::Complex64 as C64;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<C64>,
    ipiv: Vec<usize>,
    /// Pivots that were replaced by `tiny_pivot` because they were (numerically) zero.
    replaced_pivots: Vec<usize>,
    scale: f64,
}

impl BandLu {
    /// Factors `m − shift·I`.
    ///
    /// Pivots with magnitude below `pivot_floor · ‖m‖∞` are replaced by that
    /// floor rather than rejected: for a singular generator this turns the
    /// factorization into an inverse-iteration operator whose range is
    /// dominated by the null space.
    pub fn factor(m: &CsrMatrix, shift: C64, pivot_floor: f64) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidDimension(format!(
                "band LU needs a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        let (kl, ku) = m.bandwidths();
        let ldab = 2 * kl + ku + 1;
        let mut ab = vec![ZERO; ldab * n];
        for (i, j, v) in m.iter() {
            ab[j * ldab + kl + ku + i - j] += v;
        }
        if shift != ZERO {
            for j in 0..n {
                ab[j * ldab + kl + ku] -= shift;
            }
        }
        let scale = m.norm_inf().max(shift.norm()).max(f64::MIN_POSITIVE);
        let mut lu = BandLu { n, kl, ku, ldab, ab, ipiv: vec![0; n], replaced_pivots: Vec::new(), scale };
        lu.factor_in_place(pivot_floor * scale);
        Ok(lu)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ldab + self.kl + self.ku + i - j
    }

    fn factor_in_place(&mut self, tiny: f64) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let kv = ku + kl;
        // `ju` tracks the last column touched by any row interchange so far.
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut p = 0;
            let mut best = -1.0;
            for i in 0..=km {
                let a = self.ab[self.idx(j + i, j)].norm();
                if a > best {
                    best = a;
                    p = i;
                }
            }
            self.ipiv[j] = j + p;
            if best <= tiny {
                let d = self.idx(j, j);
                let phase = if self.ab[d] == ZERO { C64::new(1.0, 0.0) } else { self.ab[d] / self.ab[d].norm() };
                // Keep the row order untouched; a floored pivot just bounds the growth.
                self.ipiv[j] = j;
                p = 0;
                self.ab[d] = phase * tiny.max(f64::MIN_POSITIVE);
                self.replaced_pivots.push(j);
            }
            ju = ju.max((j + ku + p).min(n - 1));
            if p != 0 {
                for c in j..=ju {
                    let a = self.idx(j, c);
                    let b = self.idx(j + p, c);
                    self.ab.swap(a, b);
                }
            }
            let inv = C64::new(1.0, 0.0) / self.ab[self.idx(j, j)];
            let col = j * self.ldab + kv;
            for i in 1..=km {
                self.ab[col + i] *= inv;
            }
            for c in (j + 1)..=ju {
                let pivot_row = self.ab[self.idx(j, c)];
                if pivot_row == ZERO {
                    continue;
                }
                let base_c = c * self.ldab + kv + j - c;
                for i in 1..=km {
                    let l = self.ab[col + i];
                    self.ab[base_c + i] -= l * pivot_row;
                }
            }
        }
        debug_assert!(kv < self.ldab);
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Indices of pivots that were floored during factorization.
    pub fn replaced_pivots(&self) -> &[usize] {
        &self.replaced_pivots
    }

    /// `|U_jj|` for every column.
    pub fn pivot_magnitudes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.ab[self.idx(j, j)].norm()).collect()
    }

    pub fn matrix_scale(&self) -> f64 {
        self.scale
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [C64]) {
        assert_eq!(b.len(), self.n);
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let kv = kl + ku;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj == ZERO {
                continue;
            }
            let km = kl.min(n - 1 - j);
            let col = j * self.ldab + kv;
            for i in 1..=km {
                b[j + i] -= self.ab[col + i] * bj;
            }
        }
        for j in (0..n).rev() {
            let col = j * self.ldab + kv;
            b[j] /= self.ab[col];
            let bj = b[j];
            if bj == ZERO {
                continue;
            }
            let top = j.saturating_sub(kv);
            for i in top..j {
                b[i] -= self.ab[col + i - j] * bj;
            }
        }
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

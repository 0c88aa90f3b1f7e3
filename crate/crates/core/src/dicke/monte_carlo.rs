//! Monte-Carlo estimates of the two-mode Husimi integrals, sampling
//! `r ~ N(0, Σ_Q)` and evaluating the defining integrands pointwise.
//!
//! The unitary term uses the Husimi correspondence rules applied to the
//! normal-ordered fluctuation Hamiltonian,
//! `a†^r a^s ρ ↔ μ̄^r (μ + ∂_μ̄)^s Q` and `ρ a†^r a^s ↔ μ^s (μ̄ + ∂_μ)^r Q`,
//! so it does not go through the drift matrix. Samples are drawn in fixed
//! chunks from per-chunk ChaCha streams and reduced in chunk order, which
//! makes the result independent of the thread count.
//!
//! The `Π_u` integrand is a quartic whose large terms cancel on average, so
//! its estimate is regressed against zero-mean Stein control variates
//! `Δm − z·∇m` (with `r = Lz`, `z ~ N(0, I)`) over all even monomials `m`
//! of degree 2 and 4. The uncorrected mean is kept as `pi_u_raw`.

use super::{DickeParams, HPCoefficients};
use crate::error::{Error, Result};
use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub samples: usize,
    pub seed: u64,
    pub chunk: usize,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions { samples: 1_000_000, seed: 0x5eed, chunk: 1 << 15 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McBudget {
    pub s: McEstimate,
    pub pi_d_a: McEstimate,
    pub pi_d_b: McEstimate,
    pub pi_u: McEstimate,
    pub pi_u_raw: McEstimate,
    /// Sample mean of the imaginary part of the `Π_u` integrand.
    pub pi_u_imag: f64,
    pub samples: usize,
}

/// `coef · a†^ra a^sa b†^rb b^sb`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalOrderedTerm {
    pub coef: f64,
    pub ra: u32,
    pub sa: u32,
    pub rb: u32,
    pub sb: u32,
}

/// Fluctuation Hamiltonian in normal order, constants dropped.
pub fn fluctuation_hamiltonian(hp: &HPCoefficients, p: &DickeParams) -> Vec<NormalOrderedTerm> {
    let t = |coef, ra, sa, rb, sb| NormalOrderedTerm { coef, ra, sa, rb, sb };
    let l = hp.lambda_tilde;
    vec![
        t(p.omega, 1, 1, 0, 0),
        t(hp.omega0_tilde - 2.0 * hp.zeta, 0, 0, 1, 1),
        t(-hp.zeta, 0, 0, 0, 2),
        t(-hp.zeta, 0, 0, 2, 0),
        t(l, 0, 1, 0, 1),
        t(l, 0, 1, 1, 0),
        t(l, 1, 0, 0, 1),
        t(l, 1, 0, 1, 0),
    ]
}

const B: usize = 0;
const A: usize = 1;
const N_ACC: usize = 5;

/// Exponent vectors of the even monomials of degree 2 and 4 in four variables.
fn control_monomials() -> Vec<[u32; 4]> {
    let mut out = Vec::new();
    for deg in [2u32, 4] {
        for a in 0..=deg {
            for b in 0..=deg - a {
                for c in 0..=deg - a - b {
                    out.push([a, b, c, deg - a - b - c]);
                }
            }
        }
    }
    out
}

/// `Δm − z·∇m` for `m = z^e`; zero mean under `N(0, I)`.
fn stein_feature(z: &Vector4<f64>, e: &[u32; 4]) -> f64 {
    let mono = |e: &[u32; 4]| (0..4).map(|i| z[i].powi(e[i] as i32)).product::<f64>();
    let deg: u32 = e.iter().sum();
    let mut lap = 0.0;
    for i in 0..4 {
        if e[i] >= 2 {
            let mut f = *e;
            f[i] -= 2;
            lap += (e[i] * (e[i] - 1)) as f64 * mono(&f);
        }
    }
    lap - deg as f64 * mono(e)
}

/// Running sums for the control-variate regression.
#[derive(Clone)]
struct CvSums {
    h: Vec<f64>,
    hh: Vec<f64>,
    hg: Vec<f64>,
}

impl CvSums {
    fn new(k: usize) -> Self {
        CvSums { h: vec![0.0; k], hh: vec![0.0; k * k], hg: vec![0.0; k] }
    }

    fn add(&mut self, feats: &[f64], g: f64) {
        let k = feats.len();
        for i in 0..k {
            self.h[i] += feats[i];
            self.hg[i] += feats[i] * g;
            let row = &mut self.hh[i * k..i * k + k];
            for j in i..k {
                row[j] += feats[i] * feats[j];
            }
        }
    }

    fn merge(&mut self, o: &CvSums) {
        for (a, b) in self.h.iter_mut().zip(&o.h) {
            *a += b;
        }
        for (a, b) in self.hh.iter_mut().zip(&o.hh) {
            *a += b;
        }
        for (a, b) in self.hg.iter_mut().zip(&o.hg) {
            *a += b;
        }
    }
}

struct Sampler {
    chol: Matrix4<f64>,
    prec: Matrix4<f64>,
    log_norm: f64,
    terms: Vec<NormalOrderedTerm>,
    /// `∂_μ̄i ∂_μ̄j ln Q`, constant for a Gaussian.
    hess_bar: [[C64; 2]; 2],
    kappa: f64,
    gamma: f64,
    monomials: Vec<[u32; 4]>,
}

impl Sampler {
    fn ln_q(&self, r: &Vector4<f64>) -> f64 {
        -0.5 * r.dot(&(self.prec * r)) - self.log_norm
    }

    /// `ν + ∂_ν̄ ln Q` for the mode whose quadratures start at `k`, by central differences.
    fn current(&self, r: &Vector4<f64>, k: usize) -> C64 {
        let h = 1e-4;
        let mut d = [0.0; 2];
        for (o, dv) in d.iter_mut().enumerate() {
            let mut up = *r;
            let mut dn = *r;
            up[k + o] += h;
            dn[k + o] -= h;
            *dv = (self.ln_q(&up) - self.ln_q(&dn)) / (2.0 * h);
        }
        C64::new(r[k] + d[0], r[k + 1] + d[1]) * FRAC_1_SQRT_2
    }

    fn unitary_over_q(&self, r: &Vector4<f64>) -> C64 {
        let pr = self.prec * r;
        let mu = [C64::new(r[0], r[1]) * FRAC_1_SQRT_2, C64::new(r[2], r[3]) * FRAC_1_SQRT_2];
        let g_bar = [C64::new(-pr[0], -pr[1]) * FRAC_1_SQRT_2, C64::new(-pr[2], -pr[3]) * FRAC_1_SQRT_2];
        // (c_i + ∂_i)(c_j + ∂_j)…Q / Q for commuting first-order factors.
        let chain = |modes: &[usize], c: &[C64; 2], g: &[C64; 2], hess: &dyn Fn(usize, usize) -> C64| -> C64 {
            match modes {
                [] => C64::new(1.0, 0.0),
                [i] => c[*i] + g[*i],
                [i, j] => (c[*i] + g[*i]) * (c[*j] + g[*j]) + hess(*i, *j),
                _ => unreachable!("fluctuation Hamiltonian is quadratic"),
            }
        };
        let mu_bar = [mu[0].conj(), mu[1].conj()];
        let g = [g_bar[0].conj(), g_bar[1].conj()];
        let hb = |i: usize, j: usize| self.hess_bar[i][j];
        let h = |i: usize, j: usize| self.hess_bar[i][j].conj();
        let mut acc = C64::new(0.0, 0.0);
        for t in &self.terms {
            let ops = |a: u32, b: u32| -> Vec<usize> {
                std::iter::repeat_n(A, a as usize).chain(std::iter::repeat_n(B, b as usize)).collect()
            };
            let left = mu_bar[A].powu(t.ra) * mu_bar[B].powu(t.rb) * chain(&ops(t.sa, t.sb), &mu, &g_bar, &hb);
            let right = mu[A].powu(t.sa) * mu[B].powu(t.sb) * chain(&ops(t.ra, t.rb), &mu_bar, &g, &h);
            acc += (left - right) * t.coef;
        }
        acc * C64::new(0.0, -1.0)
    }

    fn accumulate(&self, z: &Vector4<f64>, sums: &mut [f64; N_ACC], sq: &mut [f64; N_ACC], cv: &mut CvSums, feats: &mut [f64]) {
        let r = &(self.chol * z);
        let quad = -0.5 * r.dot(&(self.prec * r));
        let u = self.unitary_over_q(r);
        let ja = self.current(r, 2);
        let jb = self.current(r, 0);
        let vals = [
            -self.ln_q(r),
            2.0 * self.kappa * ja.norm_sqr(),
            2.0 * self.gamma * jb.norm_sqr(),
            // ∫𝓤Q = 0, so the normalization constant of ln Q drops out.
            -u.re * quad,
            -u.im * quad,
        ];
        for k in 0..N_ACC {
            sums[k] += vals[k];
            sq[k] += vals[k] * vals[k];
        }
        for (f, e) in feats.iter_mut().zip(&self.monomials) {
            *f = stein_feature(z, e);
        }
        cv.add(feats, vals[3]);
    }
}

type ChunkSums = ([f64; N_ACC], [f64; N_ACC], CvSums);

fn run_chunk(s: &Sampler, seed: u64, index: usize, len: usize) -> ChunkSums {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mut sums = [0.0; N_ACC];
    let mut sq = [0.0; N_ACC];
    let mut cv = CvSums::new(s.monomials.len());
    let mut feats = vec![0.0; s.monomials.len()];
    for _ in 0..len {
        let z = Vector4::from_fn(|_, _| StandardNormal.sample(&mut rng));
        s.accumulate(&z, &mut sums, &mut sq, &mut cv, &mut feats);
    }
    (sums, sq, cv)
}

/// Estimates `S`, `Π_d` of both channels and `Π_u` for the Gaussian state with covariance `σ`.
pub fn monte_carlo_budget(sigma: &Matrix4<f64>, hp: &HPCoefficients, p: &DickeParams, opts: &McOptions) -> Result<McBudget> {
    if opts.samples < 2 || opts.chunk == 0 {
        return Err(Error::InvalidParameter { name: "samples", reason: "need at least two samples and a positive chunk".into() });
    }
    let sq = sigma + Matrix4::identity() * 0.5;
    let chol = sq.cholesky().ok_or_else(|| Error::InvalidCovariance("Σ_Q is not positive definite".into()))?;
    let prec = chol.inverse();
    let mut hess_bar = [[C64::new(0.0, 0.0); 2]; 2];
    for (i, row) in hess_bar.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (qi, pi, qj, pj) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
            *v = -0.5 * C64::new(prec[(qi, qj)] - prec[(pi, pj)], prec[(qi, pj)] + prec[(pi, qj)]);
        }
    }
    let sampler = Sampler {
        chol: chol.l(),
        prec,
        log_norm: (PI * PI * sq.determinant().sqrt()).ln(),
        terms: fluctuation_hamiltonian(hp, p),
        hess_bar,
        kappa: p.kappa,
        gamma: p.gamma,
        monomials: control_monomials(),
    };
    let n_chunks = opts.samples.div_ceil(opts.chunk);
    let len = |k: usize| opts.chunk.min(opts.samples - k * opts.chunk);
    #[cfg(feature = "parallel")]
    let parts: Vec<_> = {
        use rayon::prelude::*;
        (0..n_chunks).into_par_iter().map(|k| run_chunk(&sampler, opts.seed, k, len(k))).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<_> = (0..n_chunks).map(|k| run_chunk(&sampler, opts.seed, k, len(k))).collect();
    let mut sums = [0.0; N_ACC];
    let mut sqs = [0.0; N_ACC];
    let mut cv = CvSums::new(sampler.monomials.len());
    for (s, q, c) in &parts {
        for k in 0..N_ACC {
            sums[k] += s[k];
            sqs[k] += q[k];
        }
        cv.merge(c);
    }
    let n = opts.samples as f64;
    let est = |k: usize| {
        let mean = sums[k] / n;
        let var = (sqs[k] / n - mean * mean).max(0.0) * n / (n - 1.0);
        McEstimate { value: mean, stderr: (var / n).sqrt() }
    };
    let pi_u_raw = est(3);
    let pi_u = controlled_mean(&cv, sums[3], sqs[3], n).unwrap_or(pi_u_raw);
    Ok(McBudget { s: est(0), pi_d_a: est(1), pi_d_b: est(2), pi_u, pi_u_raw, pi_u_imag: est(4).value, samples: opts.samples })
}

/// Mean of `g − cᵀh` with `c` minimizing the sample variance.
fn controlled_mean(cv: &CvSums, sg: f64, sgg: f64, n: f64) -> Option<McEstimate> {
    let k = cv.h.len();
    let mg = sg / n;
    let cov_hh = nalgebra::DMatrix::from_fn(k, k, |i, j| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        cv.hh[a * k + b] / n - cv.h[a] / n * cv.h[b] / n
    });
    let cov_hg = nalgebra::DVector::from_fn(k, |i, _| cv.hg[i] / n - cv.h[i] / n * mg);
    let c = cov_hh.clone().cholesky()?.solve(&cov_hg);
    let mh = nalgebra::DVector::from_fn(k, |i, _| cv.h[i] / n);
    let var_g = sgg / n - mg * mg;
    let var = (var_g - c.dot(&cov_hg)).max(0.0) * n / (n - 1.0 - k as f64);
    Some(McEstimate { value: mg - c.dot(&mh), stderr: (var / n).sqrt() })
}

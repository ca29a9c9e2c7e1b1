//! Dense complex linear-algebra helpers shared by the decomposition, estimator
//! and bound modules.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// `e^{j x}`.
#[inline]
pub fn cis(x: f64) -> C64 {
    C64::from_polar(1.0, x)
}

/// Unitary length-`n` DFT with cached plans.
#[derive(Clone)]
pub struct Dft {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl Dft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Dft {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            scale: 1.0 / (n as f64).sqrt(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In place `buf <- F buf` with `F[m, n] = e^{-j 2 pi m n / N} / sqrt(N)`.
    pub fn forward(&self, buf: &mut [C64]) {
        self.fwd.process(buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
    }

    /// In place `buf <- F^H buf`.
    pub fn inverse(&self, buf: &mut [C64]) {
        self.inv.process(buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted descending.
pub fn hermitian_eig_desc(a: &CMat) -> (Vec<f64>, CMat) {
    let eig = a.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// General complex eigen-decomposition `A = M diag(w) M^{-1}`.
///
/// Computed from the complex Schur form `A = Q T Q^H`: eigenvectors of the
/// upper-triangular `T` come from back substitution and are rotated by `Q`.
/// Columns of `M` have unit norm.
pub fn eig(a: &CMat) -> Option<(Vec<C64>, CMat)> {
    let n = a.nrows();
    if n != a.ncols() {
        return None;
    }
    let (q, t) = a.clone().try_schur(1e-15, 10_000)?.unpack();
    let vals: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    let tnorm = t.norm().max(f64::MIN_POSITIVE);
    let mut y = CMat::zeros(n, n);
    for i in 0..n {
        y[(i, i)] = ONE;
        for j in (0..i).rev() {
            let mut acc = ZERO;
            for k in j + 1..=i {
                acc += t[(j, k)] * y[(k, i)];
            }
            let mut den = t[(j, j)] - t[(i, i)];
            if den.norm() < 1e-14 * tnorm {
                den = C64::new(1e-14 * tnorm, 0.0);
            }
            y[(j, i)] = -acc / den;
        }
    }
    let mut m = q * y;
    for mut col in m.column_iter_mut() {
        let nrm = col.norm();
        if nrm > 0.0 {
            col /= C64::new(nrm, 0.0);
        }
    }
    Some((vals, m))
}

/// Moore-Penrose pseudo-inverse dropping singular values below
/// `rel_cutoff * sigma_max`. Returns the inverse and the retained rank.
pub fn pinv(a: &CMat, rel_cutoff: f64) -> (CMat, usize) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut rank = 0;
    let mut out = CMat::zeros(a.ncols(), a.nrows());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > rel_cutoff * smax && s > 0.0 {
            rank += 1;
            let v = vt.row(i).adjoint();
            let uh = u.column(i).adjoint();
            out += (v * uh) * C64::new(1.0 / s, 0.0);
        }
    }
    (out, rank)
}

/// `|<a, b>| / (||a|| ||b||)`, the phase- and scale-free column correlation.
pub fn abs_correlation(a: &[C64], b: &[C64]) -> f64 {
    let mut ip = ZERO;
    let (mut na, mut nb) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ip += x.conj() * y;
        na += x.norm_sqr();
        nb += y.norm_sqr();
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    ip.norm() / (na * nb).sqrt()
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

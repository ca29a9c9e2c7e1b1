//! Dense `G x N x K` complex tensors, unfoldings, Khatri-Rao algebra, spatial
//! smoothing, model-order selection and uniqueness predicates.
//!
//! Storage is `[g, m, k] -> g + G (m + N k)`, receive index fastest. Unfoldings:
//!
//! | mode | shape        | column of `[g, m, k]` | factor form              |
//! |------|--------------|-----------------------|--------------------------|
//! | 1    | `G x KN`     | `k N + m`             | `A_R (A_T ⊙ B_C)^T`      |
//! | 2    | `N x KG`     | `k G + g`             | `B_C (A_T ⊙ A_R)^T`      |
//! | 3    | `K x NG`     | `m G + g`             | `A_T (B_C ⊙ A_R)^T`      |
//!
//! For the 2x2x2 tensor `t[g,m,k] = 100g + 10m + k` the mode-2 unfolding is
//! `[[0, 100, 1, 101], [10, 110, 11, 111]]`.

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64, ZERO};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    g: usize,
    n: usize,
    k: usize,
    data: Vec<C64>,
}

impl Tensor3 {
    pub fn zeros(g: usize, n: usize, k: usize) -> Self {
        assert!(g > 0 && n > 0 && k > 0, "tensor dims must be positive");
        Tensor3 {
            g,
            n,
            k,
            data: vec![ZERO; g * n * k],
        }
    }

    /// Wraps storage-ordered data.
    pub fn from_data(g: usize, n: usize, k: usize, data: Vec<C64>) -> Result<Self> {
        if g == 0 || n == 0 || k == 0 {
            return Err(Error::DimMismatch("tensor dims must be positive".into()));
        }
        if data.len() != g * n * k {
            return Err(Error::LengthMismatch {
                expected: g * n * k,
                got: data.len(),
            });
        }
        Ok(Tensor3 { g, n, k, data })
    }

    pub fn from_fn(g: usize, n: usize, k: usize, mut f: impl FnMut(usize, usize, usize) -> C64) -> Self {
        let mut t = Self::zeros(g, n, k);
        for kk in 0..k {
            for m in 0..n {
                for gg in 0..g {
                    *t.get_mut(gg, m, kk) = f(gg, m, kk);
                }
            }
        }
        t
    }

    /// `(G, N, K)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.g, self.n, self.k)
    }

    #[inline]
    fn idx(&self, g: usize, m: usize, k: usize) -> usize {
        g + self.g * (m + self.n * k)
    }

    #[inline]
    pub fn get(&self, g: usize, m: usize, k: usize) -> C64 {
        self.data[self.idx(g, m, k)]
    }

    #[inline]
    pub fn get_mut(&mut self, g: usize, m: usize, k: usize) -> &mut C64 {
        let i = self.idx(g, m, k);
        &mut self.data[i]
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `||self - other||_F / ||other||_F`.
    pub fn rel_diff(&self, other: &Tensor3) -> f64 {
        let d: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm_sqr()).sum();
        d.sqrt() / other.frobenius()
    }

    /// Adds `w a o b o c`.
    pub fn add_rank1(&mut self, w: C64, a: &[C64], b: &[C64], c: &[C64]) {
        assert_eq!((a.len(), b.len(), c.len()), self.dims());
        for (kk, ck) in c.iter().enumerate() {
            let wc = w * ck;
            for (m, bm) in b.iter().enumerate() {
                let wcb = wc * bm;
                let base = self.g * (m + self.n * kk);
                for (gg, ag) in a.iter().enumerate() {
                    self.data[base + gg] += wcb * ag;
                }
            }
        }
    }

    pub fn unfold(&self, mode: usize) -> Result<CMat> {
        let (g, n, k) = self.dims();
        match mode {
            1 => Ok(CMat::from_fn(g, k * n, |r, c| self.get(r, c % n, c / n))),
            2 => Ok(CMat::from_fn(n, k * g, |r, c| self.get(c % g, r, c / g))),
            3 => Ok(CMat::from_fn(k, n * g, |r, c| self.get(c % g, c / g, r))),
            _ => Err(Error::InvalidMode(mode)),
        }
    }

    /// Inverse of [`Tensor3::unfold`].
    pub fn refold(mat: &CMat, mode: usize, dims: (usize, usize, usize)) -> Result<Self> {
        let (g, n, k) = dims;
        let want = match mode {
            1 => (g, k * n),
            2 => (n, k * g),
            3 => (k, n * g),
            _ => return Err(Error::InvalidMode(mode)),
        };
        if mat.shape() != want {
            return Err(Error::DimMismatch(format!("mode-{mode} matrix {:?}, expected {want:?}", mat.shape())));
        }
        Ok(match mode {
            1 => Self::from_fn(g, n, k, |gg, m, kk| mat[(gg, kk * n + m)]),
            2 => Self::from_fn(g, n, k, |gg, m, kk| mat[(m, kk * g + gg)]),
            _ => Self::from_fn(g, n, k, |gg, m, kk| mat[(kk, m * g + gg)]),
        })
    }
}

/// Column-wise Kronecker product; row `i N_b + j` of column `r` is `a[i,r] b[j,r]`.
pub fn khatri_rao(a: &CMat, b: &CMat) -> Result<CMat> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimMismatch(format!(
            "khatri-rao column counts {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let nb = b.nrows();
    Ok(CMat::from_fn(a.nrows() * nb, a.ncols(), |row, r| a[(row / nb, r)] * b[(row % nb, r)]))
}

/// `sum_r gamma_r a_r o b_r o c_r`.
pub fn cp_reconstruct(gamma: &[C64], a_r: &CMat, b_c: &CMat, a_t: &CMat) -> Result<Tensor3> {
    let r = gamma.len();
    if a_r.ncols() != r || b_c.ncols() != r || a_t.ncols() != r {
        return Err(Error::DimMismatch("factor column counts differ from gamma length".into()));
    }
    let mut t = Tensor3::zeros(a_r.nrows(), b_c.nrows(), a_t.nrows());
    for (i, &w) in gamma.iter().enumerate() {
        let a: Vec<C64> = a_r.column(i).iter().cloned().collect();
        let b: Vec<C64> = b_c.column(i).iter().cloned().collect();
        let c: Vec<C64> = a_t.column(i).iter().cloned().collect();
        t.add_rank1(w, &a, &b, &c);
    }
    Ok(t)
}

/// Spatial smoothing split `K3 + L3 = K + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmoothingPlan {
    pub k3: usize,
    pub l3: usize,
}

impl SmoothingPlan {
    pub fn new(k3: usize, l3: usize, k: usize) -> Result<Self> {
        if k3 < 2 || k3 > k {
            return Err(Error::InvalidPlan(format!("k3 = {k3} must lie in [2, {k}]")));
        }
        if k3 + l3 != k + 1 {
            return Err(Error::InvalidPlan(format!("k3 + l3 = {} but K + 1 = {}", k3 + l3, k + 1)));
        }
        Ok(SmoothingPlan { k3, l3 })
    }

    /// `K3 = ceil(K/2) + 1` clipped to `K`; gives (5, 4) for `K = 8`.
    pub fn default_for(k: usize) -> Result<Self> {
        let k3 = (k.div_ceil(2) + 1).min(k);
        Self::new(k3, k + 1 - k3, k)
    }

    pub fn check(&self, k: usize) -> Result<()> {
        Self::new(self.k3, self.l3, k).map(|_| ())
    }
}

/// `[J_1 Y_(2)^T, ..., J_L3 Y_(2)^T]`, size `K3 G x L3 N`; entry
/// `(k3 G + g, l N + m)` is `Y_(2)[m, (k3 + l) G + g]`.
pub fn spatial_smooth(y2: &CMat, plan: SmoothingPlan, g: usize) -> Result<CMat> {
    if g == 0 || !y2.ncols().is_multiple_of(g) {
        return Err(Error::DimMismatch(format!("{} columns not a multiple of G = {g}", y2.ncols())));
    }
    let k = y2.ncols() / g;
    plan.check(k)?;
    let n = y2.nrows();
    Ok(CMat::from_fn(plan.k3 * g, plan.l3 * n, |row, col| {
        let (kk, gg) = (row / g, row % g);
        let (l, m) = (col / n, col % n);
        y2[(m, (kk + l) * g + gg)]
    }))
}

/// Generic Kruskal condition `min(G,R) + min(N,R) + min(K,R) >= 2R + 2`.
pub fn kruskal_generic(g: usize, n: usize, k: usize, rank: usize) -> bool {
    g.min(rank) + n.min(rank) + k.min(rank) >= 2 * rank + 2
}

/// Relaxed uniqueness after smoothing, `min((K3-1) G, L3 N) >= R`.
pub fn relaxed_unique(g: usize, n: usize, plan: SmoothingPlan, rank: usize) -> bool {
    ((plan.k3 - 1) * g).min(plan.l3 * n) >= rank
}

/// Classical MDL order estimate on the squared singular values.
///
/// `MDL(k) = n (p-k) ln(A_k / G_k) + k (2p - k) ln(n) / 2` with `A_k`, `G_k` the
/// arithmetic and geometric means of the trailing `p - k` eigenvalues. Values
/// below `1e-12` of the largest are lifted to that floor so a numerically
/// exact null space reads as white.
pub fn mdl_rank(singular_values: &[f64], n_samples: usize, max_rank: usize) -> Result<usize> {
    let p = singular_values.len();
    if p < 2 {
        return Err(Error::Degenerate("MDL needs at least two singular values".into()));
    }
    if max_rank >= p {
        return Err(Error::RankTooLarge {
            rank: max_rank,
            limit: p - 1,
        });
    }
    let lmax = singular_values.iter().map(|s| s * s).fold(0.0, f64::max);
    if lmax == 0.0 {
        return Ok(0);
    }
    let floor = lmax * 1e-12;
    let lam: Vec<f64> = singular_values.iter().map(|s| (s * s).max(floor)).collect();
    let ns = n_samples as f64;
    let mut best = (f64::INFINITY, 0);
    for k in 0..=max_rank {
        let tail = &lam[k..];
        let m = tail.len() as f64;
        let arith = tail.iter().sum::<f64>() / m;
        let log_geo = tail.iter().map(|v| v.ln()).sum::<f64>() / m;
        let fit = ns * m * (arith.ln() - log_geo).max(0.0);
        let pen = 0.5 * (k as f64) * (2.0 * p as f64 - k as f64) * ns.ln();
        let score = fit + pen;
        if score < best.0 {
            best = (score, k);
        }
    }
    Ok(best.1)
}

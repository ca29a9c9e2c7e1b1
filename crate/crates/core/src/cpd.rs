//! Vandermonde-structured CP decomposition of the smoothed matrix, plus an
//! alternating least squares baseline.
//!
//! The structured path: truncated SVD `Y = U S V^H`, shift invariance between
//! the first and last `(K3-1) G` rows of `U` gives `U1^+ U2 = M Z M^{-1}`, the
//! unit-modulus eigenvalues are the transmit generators, and the receive and
//! DAF-domain factors are read off `U M` and `V^* S M^{-T}`.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{eig, hermitian_eig_desc, pinv, CMat, C64, ONE, ZERO};
use crate::tensor::{khatri_rao, SmoothingPlan, Tensor3};

/// Rank-`R` factors of a matrix, singular values descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

/// Full singular spectrum and the leading singular vectors of `m`.
///
/// Works on the Gram matrix of the short side, so the cost is dominated by
/// one `min(r,c)^2 max(r,c)` product.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub singular_values: Vec<f64>,
    vecs: CMat,
    wide: bool,
}

impl Spectrum {
    pub fn new(m: &CMat) -> Self {
        let wide = m.nrows() <= m.ncols();
        let gram = if wide { m * m.adjoint() } else { m.adjoint() * m };
        let (vals, vecs) = hermitian_eig_desc(&gram);
        Spectrum {
            singular_values: vals.into_iter().map(|v| v.max(0.0).sqrt()).collect(),
            vecs,
            wide,
        }
    }

    pub fn truncate(&self, m: &CMat, rank: usize) -> Result<Svd> {
        let limit = self.singular_values.len();
        if rank == 0 {
            return Err(Error::ZeroRank);
        }
        if rank > limit {
            return Err(Error::RankTooLarge { rank, limit });
        }
        let s: Vec<f64> = self.singular_values[..rank].to_vec();
        if s[rank - 1] <= f64::MIN_POSITIVE * 1e10 {
            return Err(Error::RankDeficient);
        }
        let lead = self.vecs.columns(0, rank).into_owned();
        let inv = CMat::from_diagonal(&DVector::from_iterator(rank, s.iter().map(|v| C64::new(1.0 / v, 0.0))));
        let (u, v) = if self.wide {
            let v = m.adjoint() * &lead * &inv;
            (lead, v)
        } else {
            let u = m * &lead * &inv;
            (u, lead)
        };
        Ok(Svd { u, s, v })
    }
}

/// Best rank-`rank` approximation factors of `m`.
pub fn truncated_svd(m: &CMat, rank: usize) -> Result<Svd> {
    Spectrum::new(m).truncate(m, rank)
}

/// Output of the structured decomposition.
#[derive(Debug, Clone)]
pub struct FactorEstimates {
    /// `G x R`, middle entry of every column equal to one.
    pub a_r_hat: CMat,
    /// `N x R`, scale ambiguous.
    pub b_c_hat: CMat,
    /// `K x R`, Vandermonde in `generators`.
    pub a_t_hat: CMat,
    pub generators: Vec<C64>,
    /// Eigenvector matrix `M`.
    pub mixing: CMat,
    /// `P = M^{-T}`.
    pub dual_mixing: CMat,
}

/// Eigen-decomposes `U1^+ U2` and returns unit-modulus generators sorted by
/// phase together with the matching eigenvector matrix.
pub fn esprit_generators(u: &CMat, g: usize, k3: usize) -> Result<(Vec<C64>, CMat)> {
    if k3 < 2 {
        return Err(Error::InvalidPlan(format!("k3 = {k3} leaves no shift")));
    }
    if u.nrows() != k3 * g {
        return Err(Error::DimMismatch(format!("U has {} rows, expected {}", u.nrows(), k3 * g)));
    }
    let r = u.ncols();
    let rows = (k3 - 1) * g;
    let u1 = u.rows(0, rows).into_owned();
    let u2 = u.rows(g, rows).into_owned();
    let (u1p, rank) = pinv(&u1, 1e-10);
    if rank < r {
        return Err(Error::RankDeficient);
    }
    let psi = u1p * u2;
    let (vals, m) = eig(&psi).ok_or(Error::RankDeficient)?;
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| vals[a].arg().total_cmp(&vals[b].arg()));
    let gens = order
        .iter()
        .map(|&i| {
            let v = vals[i];
            if v.norm() == 0.0 {
                ONE
            } else {
                v / v.norm()
            }
        })
        .collect();
    let m_sorted = CMat::from_fn(r, r, |i, j| m[(i, order[j])]);
    Ok((gens, m_sorted))
}

/// Column `r` is `[1, z_r, ..., z_r^{K-1}]`.
pub fn rebuild_at(generators: &[C64], k_tx: usize) -> CMat {
    CMat::from_fn(k_tx, generators.len(), |k, r| generators[r].powu(k as u32))
}

/// Receive factor from `(a_T^{(K3)H} ⊗ I_G) U m_r`, normalized to a unit
/// middle entry.
pub fn rebuild_ar(u: &CMat, m: &CMat, a_t_hat: &CMat, plan: SmoothingPlan, g: usize) -> Result<CMat> {
    let r = m.ncols();
    if u.nrows() != plan.k3 * g || a_t_hat.nrows() < plan.k3 {
        return Err(Error::DimMismatch("rebuild_ar inputs".into()));
    }
    let um = u * m;
    let mid = g / 2;
    let mut out = CMat::zeros(g, r);
    for c in 0..r {
        for k in 0..plan.k3 {
            let w = a_t_hat[(k, c)].conj();
            for gg in 0..g {
                out[(gg, c)] += w * um[(k * g + gg, c)];
            }
        }
        let pivot = out[(mid, c)];
        if pivot.norm() > 0.0 {
            for gg in 0..g {
                out[(gg, c)] /= pivot;
            }
        }
    }
    Ok(out)
}

/// DAF-domain factor `((a_T^{(L3)H} / ||a_T^{(L3)}||^2) ⊗ I_N) V^* S p_r`.
pub fn rebuild_bc(v: &CMat, s: &[f64], p: &CMat, a_t_hat: &CMat, plan: SmoothingPlan, n_sub: usize) -> Result<CMat> {
    let r = p.ncols();
    if v.nrows() != plan.l3 * n_sub || s.len() != v.ncols() || a_t_hat.nrows() < plan.l3 {
        return Err(Error::DimMismatch("rebuild_bc inputs".into()));
    }
    let sdiag = CMat::from_diagonal(&DVector::from_iterator(s.len(), s.iter().map(|x| C64::new(*x, 0.0))));
    let vsp = v.map(|z| z.conj()) * sdiag * p;
    let mut out = CMat::zeros(n_sub, r);
    for c in 0..r {
        let norm: f64 = (0..plan.l3).map(|l| a_t_hat[(l, c)].norm_sqr()).sum();
        for l in 0..plan.l3 {
            let w = a_t_hat[(l, c)].conj() / norm;
            for m in 0..n_sub {
                out[(m, c)] += w * vsp[(l * n_sub + m, c)];
            }
        }
    }
    Ok(out)
}

/// Structured decomposition of the smoothed matrix for a known rank.
pub fn structured_cpd(upsilon: &CMat, rank: usize, plan: SmoothingPlan, g: usize, k_tx: usize, n_sub: usize) -> Result<FactorEstimates> {
    let svd = truncated_svd(upsilon, rank)?;
    structured_from_svd(&svd, plan, g, k_tx, n_sub)
}

pub fn structured_from_svd(svd: &Svd, plan: SmoothingPlan, g: usize, k_tx: usize, n_sub: usize) -> Result<FactorEstimates> {
    let (generators, m) = esprit_generators(&svd.u, g, plan.k3)?;
    let p = m
        .clone()
        .try_inverse()
        .ok_or(Error::RankDeficient)?
        .transpose();
    let a_t_hat = rebuild_at(&generators, k_tx);
    let a_r_hat = rebuild_ar(&svd.u, &m, &a_t_hat, plan, g)?;
    let b_c_hat = rebuild_bc(&svd.v, &svd.s, &p, &a_t_hat, plan, n_sub)?;
    Ok(FactorEstimates {
        a_r_hat,
        b_c_hat,
        a_t_hat,
        generators,
        mixing: m,
        dual_mixing: p,
    })
}

/// Result of the alternating least squares baseline.
#[derive(Debug, Clone)]
pub struct AlsOutcome {
    /// Receive factor, middle entry normalized to one.
    pub a_r: CMat,
    pub b_c: CMat,
    /// Transmit factor, first entry normalized to one.
    pub a_t: CMat,
    /// Least-squares shift ratio of each transmit column, unit modulus.
    pub generators: Vec<C64>,
    pub iterations: usize,
    pub converged: bool,
    /// `||Y - X_hat||_F / ||Y||_F`.
    pub rel_residual: f64,
}

fn als_update(y: &CMat, p: &CMat, q: &CMat) -> Option<CMat> {
    // y ≈ F (p ⊙ q)^T, so F = y conj(p ⊙ q) conj(H)^{-1} with H = (p^H p) ∘ (q^H q).
    let kr = khatri_rao(p, q).ok()?;
    let h = (p.adjoint() * p).component_mul(&(q.adjoint() * q));
    let hinv = h.map(|z| z.conj()).try_inverse()?;
    Some(y * kr.map(|z| z.conj()) * hinv)
}

fn als_iterate(t: &Tensor3, mut a: CMat, mut b: CMat, mut c: CMat, max_iter: usize, tol: f64) -> Result<AlsOutcome> {
    let y1 = t.unfold(1)?;
    let y2 = t.unfold(2)?;
    let y3 = t.unfold(3)?;
    let ynorm = t.frobenius().max(f64::MIN_POSITIVE);
    let mut prev = f64::INFINITY;
    let mut fit = f64::INFINITY;
    let mut converged = false;
    let mut iters = 0;
    for it in 0..max_iter {
        iters = it + 1;
        a = als_update(&y1, &c, &b).ok_or(Error::RankDeficient)?;
        b = als_update(&y2, &c, &a).ok_or(Error::RankDeficient)?;
        c = als_update(&y3, &b, &a).ok_or(Error::RankDeficient)?;
        fit = (&y3 - &c * khatri_rao(&b, &a)?.transpose()).norm() / ynorm;
        if (prev - fit).abs() < tol || fit < 1e-13 {
            converged = true;
            break;
        }
        prev = fit;
    }
    Ok(normalize_als(a, b, c, iters, converged, fit))
}

fn normalize_als(mut a: CMat, mut b: CMat, mut c: CMat, iterations: usize, converged: bool, rel_residual: f64) -> AlsOutcome {
    let r = a.ncols();
    let mid = a.nrows() / 2;
    let mut gens = Vec::with_capacity(r);
    for col in 0..r {
        let sa = a[(mid, col)];
        let sc = c[(0, col)];
        if sa.norm() > 0.0 && sc.norm() > 0.0 {
            a.column_mut(col).iter_mut().for_each(|v| *v /= sa);
            c.column_mut(col).iter_mut().for_each(|v| *v /= sc);
            b.column_mut(col).iter_mut().for_each(|v| *v *= sa * sc);
        }
        let mut acc = ZERO;
        for k in 0..c.nrows().saturating_sub(1) {
            acc += c[(k, col)].conj() * c[(k + 1, col)];
        }
        gens.push(if acc.norm() > 0.0 { acc / acc.norm() } else { ONE });
    }
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&x, &y| gens[x].arg().total_cmp(&gens[y].arg()));
    let perm = |m: &CMat| CMat::from_fn(m.nrows(), r, |i, j| m[(i, order[j])]);
    AlsOutcome {
        a_r: perm(&a),
        b_c: perm(&b),
        a_t: perm(&c),
        generators: order.iter().map(|&i| gens[i]).collect(),
        iterations,
        converged,
        rel_residual,
    }
}

/// ALS from a seeded complex Gaussian start. Non-convergence is reported in
/// the outcome rather than as an error.
pub fn als_baseline(t: &Tensor3, rank: usize, max_iter: usize, tol: f64, seed: u64) -> Result<AlsOutcome> {
    if rank == 0 {
        return Err(Error::ZeroRank);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize| {
        CMat::from_fn(rows, rank, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            C64::new(re, im)
        })
    };
    let (g, n, k) = t.dims();
    let (a, b, c) = (draw(g), draw(n), draw(k));
    als_iterate(t, a, b, c, max_iter, tol)
}

/// ALS started from the leading left singular vectors of each unfolding.
pub fn als_hosvd(t: &Tensor3, rank: usize, max_iter: usize, tol: f64) -> Result<AlsOutcome> {
    if rank == 0 {
        return Err(Error::ZeroRank);
    }
    let mut init = Vec::with_capacity(3);
    for mode in 1..=3 {
        let y = t.unfold(mode)?;
        let (_, v) = hermitian_eig_desc(&(&y * y.adjoint()));
        if v.ncols() < rank {
            return Err(Error::RankTooLarge {
                rank,
                limit: v.ncols(),
            });
        }
        init.push(v.columns(0, rank).into_owned());
    }
    let c = init.pop().expect("three modes");
    let b = init.pop().expect("three modes");
    let a = init.pop().expect("three modes");
    als_iterate(t, a, b, c, max_iter, tol)
}

/// ALS refinement started from the structured estimate.
pub fn als_refine(t: &Tensor3, init: &FactorEstimates, max_iter: usize, tol: f64) -> Result<AlsOutcome> {
    als_iterate(
        t,
        init.a_r_hat.clone(),
        init.b_c_hat.clone(),
        init.a_t_hat.clone(),
        max_iter,
        tol,
    )
}

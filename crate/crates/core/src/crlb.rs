//! Cramér-Rao bounds for `Psi = [theta, r0, tau, f_d, phi, gamma]`.
//!
//! Every derivative of the noise-free cube with respect to one parameter of
//! one target is itself a rank-1 tensor, so FIM entries reduce to products of
//! three short inner products.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig_desc, CMat, C64, ZERO};
use crate::scene::{apply_delay, apply_doppler, steering, DafChannel, Scenario, SceneConfig, Target};
use crate::tensor::Tensor3;
use crate::waveform::{AfdmConfig, DafFrame};

/// Parameters per target in the printed ordering.
pub const PARAMS: [&str; 6] = ["theta", "r0", "tau", "f_d", "phi", "gamma"];

/// Treatment of the complex gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaModel {
    /// Single-term complex blocks `(1/sigma^2) D_gamma^H D_j`.
    #[default]
    Printed,
    /// `Re gamma` and `Im gamma` as two real parameters; the FIM is `7R x 7R`.
    RealImagSplit,
}

/// `d a_R / d theta`.
pub fn d_ar_dtheta(target: &Target, scene: &SceneConfig) -> Result<Vec<C64>> {
    let a = steering(target, scene)?.a_rx;
    let lam = scene.wavelength();
    let d = scene.d_rx;
    let drho = -2.0 * PI * d / lam * target.theta.cos();
    let dxi = if target.is_far_field() {
        0.0
    } else {
        -PI * d * d / (lam * target.range * target.range) * target.theta.sin()
    };
    let gx = scene.gx as i64;
    Ok((-gx..=gx)
        .zip(a)
        .map(|(g, v)| {
            let g = g as f64;
            C64::new(0.0, g * drho + g * g * dxi) * v
        })
        .collect())
}

/// `d a_R / d r0`; zero with `far_field` set for an infinite range.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDerivative {
    pub values: Vec<C64>,
    pub far_field: bool,
}

pub fn d_ar_dr0(target: &Target, scene: &SceneConfig) -> Result<RangeDerivative> {
    let a = steering(target, scene)?.a_rx;
    if target.is_far_field() {
        return Ok(RangeDerivative {
            values: vec![ZERO; a.len()],
            far_field: true,
        });
    }
    let d = scene.d_rx;
    let dxi = -2.0 * PI * d * d * target.theta.cos() / (scene.wavelength() * target.range.powi(3));
    let gx = scene.gx as i64;
    Ok(RangeDerivative {
        values: (-gx..=gx)
            .zip(a)
            .map(|(g, v)| C64::new(0.0, (g * g) as f64 * dxi) * v)
            .collect(),
        far_field: false,
    })
}

/// `d a_T / d phi` and the gain-scaled column `gamma d a_T / d phi`.
pub fn d_at_dphi(target: &Target, scene: &SceneConfig) -> (Vec<C64>, Vec<C64>) {
    let z = -PI * target.phi.sin();
    let dz = -PI * target.phi.cos();
    let bare: Vec<C64> = (0..scene.k_tx)
        .map(|k| {
            let k = k as f64;
            C64::new(0.0, k * dz) * C64::from_polar(1.0, k * z)
        })
        .collect();
    let scaled = bare.iter().map(|v| v * target.gamma).collect();
    (bare, scaled)
}

fn db_dtau_with(ch: &DafChannel, target: &Target, cfg: &AfdmConfig) -> Vec<C64> {
    let n = cfg.n_sub;
    let (beta, nu) = (target.beta(cfg), target.nu(cfg));
    let dft = ch.afdm().dft();
    let mut buf = ch.time_frame().to_vec();
    dft.forward(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let w = 2.0 * PI * k as f64 / n as f64;
        *b *= C64::new(0.0, -w) * C64::from_polar(1.0, -w * beta);
    }
    dft.inverse(&mut buf);
    apply_doppler(&mut buf, nu);
    let inv_ts = 1.0 / cfg.sample_period();
    ch.afdm().daft(&buf).into_iter().map(|v| v * inv_ts).collect()
}

fn db_dfd_with(ch: &DafChannel, target: &Target, cfg: &AfdmConfig) -> Vec<C64> {
    let n = cfg.n_sub as f64;
    let mut r = apply_delay(ch.afdm().dft(), ch.time_frame(), target.beta(cfg));
    apply_doppler(&mut r, target.nu(cfg));
    for (i, v) in r.iter_mut().enumerate() {
        *v *= C64::new(0.0, 2.0 * PI * i as f64 / n);
    }
    let scale = 1.0 / cfg.delta_f;
    ch.afdm().daft(&r).into_iter().map(|v| v * scale).collect()
}

/// `d b / d tau`, chained through `beta = tau / T_s`.
pub fn d_b_dtau(target: &Target, frame: &DafFrame, cfg: &AfdmConfig) -> Vec<C64> {
    db_dtau_with(&DafChannel::new(frame, cfg), target, cfg)
}

/// `d b / d f_d`, chained through `nu = f_d / delta_f`.
pub fn d_b_dfd(target: &Target, frame: &DafFrame, cfg: &AfdmConfig) -> Vec<C64> {
    db_dfd_with(&DafChannel::new(frame, cfg), target, cfg)
}

/// `E{ conj(vec W_(p)) vec(W_(q))^T }` for white noise of variance `sigma2`,
/// with `vec` stacking the columns of the unfoldings of [`Tensor3::unfold`].
///
/// The matrix has exactly one nonzero, `sigma2`, per row; it is held as the
/// column index of that entry.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCrossCov {
    pub p: usize,
    pub q: usize,
    pub sigma2: f64,
    /// `perm[a] = b` iff entry `a` of `vec W_(p)` is entry `b` of `vec W_(q)`.
    pub perm: Vec<usize>,
}

/// Tensor index of position `a` in the column-major vectorization of an unfolding.
fn unfold_element(mode: usize, a: usize, dims: (usize, usize, usize)) -> (usize, usize, usize) {
    let (g, n, k) = dims;
    match mode {
        1 => {
            let (r, c) = (a % g, a / g);
            (r, c % n, c / n)
        }
        2 => {
            let (r, c) = (a % n, a / n);
            (c % g, r, c / g)
        }
        _ => {
            let (r, c) = (a % k, a / k);
            (c % g, c / g, r)
        }
    }
}

fn unfold_position(mode: usize, (gi, m, ki): (usize, usize, usize), dims: (usize, usize, usize)) -> usize {
    let (g, n, k) = dims;
    match mode {
        1 => gi + g * (m + n * ki),
        2 => m + n * (gi + g * ki),
        _ => ki + k * (gi + g * m),
    }
}

pub fn noise_cross_cov(p: usize, q: usize, dims: (usize, usize, usize), sigma2: f64) -> Result<NoiseCrossCov> {
    if !(1..=3).contains(&p) || !(1..=3).contains(&q) || p == q {
        return Err(Error::InvalidModePair(p, q));
    }
    let len = dims.0 * dims.1 * dims.2;
    let perm = (0..len).map(|a| unfold_position(q, unfold_element(p, a, dims), dims)).collect();
    Ok(NoiseCrossCov { p, q, sigma2, perm })
}

impl NoiseCrossCov {
    /// Row `a` of `C M`.
    pub fn apply(&self, m: &CMat) -> Result<CMat> {
        if m.nrows() != self.perm.len() {
            return Err(Error::DimMismatch(format!("operator has {} columns, matrix has {} rows", self.perm.len(), m.nrows())));
        }
        Ok(CMat::from_fn(self.perm.len(), m.ncols(), |a, c| m[(self.perm[a], c)] * self.sigma2))
    }

    /// `u^H C v`.
    pub fn form(&self, u: &[C64], v: &[C64]) -> C64 {
        u.iter().zip(&self.perm).map(|(x, &b)| x.conj() * v[b]).sum::<C64>() * self.sigma2
    }

    pub fn dense(&self) -> CMat {
        let n = self.perm.len();
        let mut c = CMat::zeros(n, n);
        for (a, &b) in self.perm.iter().enumerate() {
            c[(a, b)] = C64::new(self.sigma2, 0.0);
        }
        c
    }
}

/// Column-major vectorization of a mode-`mode` unfolding.
pub fn vec_unfolding(t: &Tensor3, mode: usize) -> Result<Vec<C64>> {
    Ok(t.unfold(mode)?.iter().cloned().collect())
}

#[derive(Debug, Clone)]
pub struct FimInput {
    pub scene: SceneConfig,
    pub cfg: AfdmConfig,
    pub frame: DafFrame,
    pub sigma2: f64,
    pub gamma_model: GammaModel,
}

/// Rank-1 factor triple of one derivative tensor.
#[derive(Debug, Clone)]
pub struct DerivativeColumn {
    pub a: Vec<C64>,
    pub b: Vec<C64>,
    pub c: Vec<C64>,
    /// Enters the FIM as a complex parameter.
    pub complex: bool,
}

impl DerivativeColumn {
    pub fn tensor(&self) -> Tensor3 {
        let mut t = Tensor3::zeros(self.a.len(), self.b.len(), self.c.len());
        t.add_rank1(C64::new(1.0, 0.0), &self.a, &self.b, &self.c);
        t
    }

    fn inner(&self, other: &DerivativeColumn) -> C64 {
        let dot = |x: &[C64], y: &[C64]| x.iter().zip(y).map(|(u, v)| u.conj() * v).sum::<C64>();
        dot(&self.a, &other.a) * dot(&self.b, &other.b) * dot(&self.c, &other.c)
    }
}

/// Derivative columns in parameter-major order: all `theta`, then all `r0`,
/// and so on. Under [`GammaModel::RealImagSplit`] the gain contributes a
/// `Re gamma` and an `Im gamma` column per target.
pub fn derivative_columns(input: &FimInput) -> Result<Vec<DerivativeColumn>> {
    let scene = &input.scene;
    let cfg = &input.cfg;
    if scene.targets.is_empty() {
        return Err(Error::EmptyScene);
    }
    let ch = DafChannel::new(&input.frame, cfg);
    let nparam = match input.gamma_model {
        GammaModel::Printed => 6,
        GammaModel::RealImagSplit => 7,
    };
    let mut per_param: Vec<Vec<DerivativeColumn>> = vec![Vec::new(); nparam];
    for t in &scene.targets {
        let sv = steering(t, scene)?;
        let b = ch.response(t.beta(cfg), t.nu(cfg));
        let ga: Vec<C64> = sv.a_rx.iter().map(|v| v * t.gamma).collect();
        let col = |a: Vec<C64>, b: Vec<C64>, c: Vec<C64>, complex| DerivativeColumn { a, b, c, complex };
        let scale = |v: Vec<C64>| v.into_iter().map(|x| x * t.gamma).collect::<Vec<_>>();
        per_param[0].push(col(scale(d_ar_dtheta(t, scene)?), b.clone(), sv.a_tx.clone(), false));
        per_param[1].push(col(scale(d_ar_dr0(t, scene)?.values), b.clone(), sv.a_tx.clone(), false));
        per_param[2].push(col(ga.clone(), db_dtau_with(&ch, t, cfg), sv.a_tx.clone(), false));
        per_param[3].push(col(ga.clone(), db_dfd_with(&ch, t, cfg), sv.a_tx.clone(), false));
        per_param[4].push(col(sv.a_rx.clone(), b.clone(), d_at_dphi(t, scene).1, false));
        match input.gamma_model {
            GammaModel::Printed => per_param[5].push(col(sv.a_rx.clone(), b.clone(), sv.a_tx.clone(), true)),
            GammaModel::RealImagSplit => {
                per_param[5].push(col(sv.a_rx.clone(), b.clone(), sv.a_tx.clone(), false));
                let ja = sv.a_rx.iter().map(|v| v * C64::i()).collect();
                per_param[6].push(col(ja, b.clone(), sv.a_tx.clone(), false));
            }
        }
    }
    Ok(per_param.into_iter().flatten().collect())
}

/// FIM from explicit derivative columns: `(2/sigma^2) Re(D_i^H D_j)` between
/// real parameters, `(1/sigma^2) D_i^H D_j` when either side is complex.
pub fn fim_from_columns(cols: &[DerivativeColumn], sigma2: f64) -> CMat {
    let n = cols.len();
    let inv = 1.0 / sigma2;
    let mut fim = CMat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let ip = cols[i].inner(&cols[j]);
            let v = if cols[i].complex || cols[j].complex {
                ip * inv
            } else {
                C64::new(2.0 * ip.re * inv, 0.0)
            };
            fim[(i, j)] = v;
            fim[(j, i)] = v.conj();
        }
        fim[(i, i)].im = 0.0;
    }
    fim
}

pub fn assemble_fim(input: &FimInput) -> Result<CMat> {
    if !(input.sigma2 > 0.0) {
        return Err(Error::InvalidConfig("sigma2 must be positive".into()));
    }
    Ok(fim_from_columns(&derivative_columns(input)?, input.sigma2))
}

/// One FIM entry computed from unfoldings: column `i` vectorized along mode
/// `p`, column `j` along mode `q`, coupled by the noise cross-covariance.
pub fn fim_entry_via_unfoldings(cols: &[DerivativeColumn], i: usize, j: usize, p: usize, q: usize, sigma2: f64) -> Result<C64> {
    let u = vec_unfolding(&cols[i].tensor(), p)?;
    let v = vec_unfolding(&cols[j].tensor(), q)?;
    let c = noise_cross_cov(p, q, cols[i].tensor().dims(), sigma2)?;
    let ip = c.form(&u, &v) / (sigma2 * sigma2);
    Ok(if cols[i].complex || cols[j].complex {
        ip
    } else {
        C64::new(2.0 * ip.re, 0.0)
    })
}

#[derive(Debug, Clone)]
pub struct CrlbReport {
    pub crlb_theta: Vec<f64>,
    /// NaN for far-field targets.
    pub crlb_r0: Vec<f64>,
    pub crlb_tau: Vec<f64>,
    pub crlb_fd: Vec<f64>,
    pub crlb_phi: Vec<f64>,
    /// Bound on `E|gamma_hat - gamma|^2`.
    pub crlb_gamma: Vec<f64>,
    pub fim: CMat,
    /// Of the equilibrated FIM restricted to informative parameters.
    pub condition_number: f64,
    /// Set when the pseudo-inverse dropped directions.
    pub singular: bool,
    pub gamma_model: GammaModel,
}

impl CrlbReport {
    /// Bound vectors in parameter order.
    pub fn bounds(&self) -> [(&'static str, &[f64]); 6] {
        [
            ("theta", &self.crlb_theta),
            ("r0", &self.crlb_r0),
            ("tau", &self.crlb_tau),
            ("f_d", &self.crlb_fd),
            ("phi", &self.crlb_phi),
            ("gamma", &self.crlb_gamma),
        ]
    }
}

/// Relative eigenvalue cutoff of the pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-12;

/// Inverts the FIM and reads per-parameter bounds off the diagonal.
///
/// Parameters with zero information (the range of a far-field target) are
/// removed before inversion and reported as NaN. The remaining block is
/// scaled to unit diagonal and pseudo-inverted through its eigenvalues.
pub fn crlb_bounds(fim: &CMat, model: GammaModel) -> Result<CrlbReport> {
    let np = match model {
        GammaModel::Printed => 6,
        GammaModel::RealImagSplit => 7,
    };
    let n = fim.nrows();
    if fim.ncols() != n || n == 0 || !n.is_multiple_of(np) {
        return Err(Error::DimMismatch(format!("FIM is {}x{}, expected a multiple of {np}", n, fim.ncols())));
    }
    let r = n / np;
    let active: Vec<usize> = (0..n).filter(|&i| fim[(i, i)].re > 0.0).collect();
    let d: Vec<f64> = active.iter().map(|&i| 1.0 / fim[(i, i)].re.sqrt()).collect();
    let m = active.len();
    let sub = CMat::from_fn(m, m, |a, b| fim[(active[a], active[b])] * (d[a] * d[b]));
    let (vals, vecs) = hermitian_eig_desc(&sub);
    let lmax = vals.first().copied().unwrap_or(0.0);
    let kept: Vec<usize> = (0..m).filter(|&i| vals[i] > PINV_CUTOFF * lmax).collect();
    let lmin = kept.last().map(|&i| vals[i]).unwrap_or(0.0);
    let mut diag = vec![f64::NAN; n];
    for (a, &i) in active.iter().enumerate() {
        let mut s = 0.0;
        for &e in &kept {
            s += vecs[(a, e)].norm_sqr() / vals[e];
        }
        diag[i] = s * d[a] * d[a];
    }
    let block = |p: usize| diag[p * r..(p + 1) * r].to_vec();
    let crlb_gamma = match model {
        GammaModel::Printed => block(5),
        GammaModel::RealImagSplit => block(5).iter().zip(block(6)).map(|(a, b)| a + b).collect(),
    };
    Ok(CrlbReport {
        crlb_theta: block(0),
        crlb_r0: block(1),
        crlb_tau: block(2),
        crlb_fd: block(3),
        crlb_phi: block(4),
        crlb_gamma,
        fim: fim.clone(),
        condition_number: if lmin > 0.0 { lmax / lmin } else { f64::INFINITY },
        singular: kept.len() < m,
        gamma_model: model,
    })
}

/// Per-entry noise variance realizing `snr_db` for a noise-free cube of the
/// given energy and entry count.
pub fn noise_variance(signal_energy: f64, entries: usize, snr_db: f64) -> f64 {
    signal_energy / (10f64.powf(snr_db / 10.0) * entries as f64)
}

/// Bounds for a scenario's targets at one SNR, using the given frame.
pub fn crlb_for_scenario(sc: &Scenario, frame: &DafFrame, snr_db: f64, model: GammaModel) -> Result<CrlbReport> {
    let clean = crate::scene::synthesize_tensor(&sc.scene, frame, &sc.afdm, None, 0)?.clean;
    let (g, n, k) = clean.dims();
    let sigma2 = noise_variance(clean.frobenius().powi(2), g * n * k, snr_db);
    let input = FimInput {
        scene: sc.scene.clone(),
        cfg: sc.afdm.clone(),
        frame: frame.clone(),
        sigma2,
        gamma_model: model,
    };
    crlb_bounds(&assemble_fim(&input)?, model)
}

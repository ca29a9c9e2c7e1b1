//! Parameter extraction from the recovered factors: AoD from the transmit
//! generators, AoA from a Toeplitz correlation and propagator projection, and
//! delay/Doppler from pulse compression plus alternating golden-section
//! refinement.

use std::f64::consts::PI;

use crate::cpd::{structured_from_svd, FactorEstimates, Spectrum};
use crate::error::{Error, Result};
use crate::linalg::{cis, CMat, C64, ZERO};
use crate::scene::{apply_delay, SceneConfig};
use crate::tensor::{mdl_rank, spatial_smooth, SmoothingPlan, Tensor3};
use crate::waveform::{Afdm, AfdmConfig, DafFrame};

/// Golden ratio conjugate `(sqrt 5 - 1) / 2`.
pub const ETA: f64 = 0.618_033_988_749_894_9;

/// `asin(arg(z) / -pi)`.
pub fn estimate_aod(generator: C64) -> f64 {
    (generator.arg() / -PI).clamp(-1.0, 1.0).asin()
}

/// AoA grid search settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoaSearchConfig {
    /// Grid spacing in radians.
    pub grid_step: f64,
    /// Search interval, open at both ends.
    pub range: (f64, f64),
    /// Parabolic refinement of the grid minimum.
    pub refine: bool,
    /// Receive spacing in wavelengths.
    pub spacing: f64,
}

impl Default for AoaSearchConfig {
    fn default() -> Self {
        AoaSearchConfig {
            grid_step: 0.1_f64.to_radians(),
            range: (-PI / 2.0, PI / 2.0),
            refine: true,
            spacing: 0.25,
        }
    }
}

impl AoaSearchConfig {
    pub fn for_scene(scene: &SceneConfig) -> Self {
        AoaSearchConfig {
            spacing: scene.d_rx / scene.wavelength(),
            ..Default::default()
        }
    }
}

/// `(G_x+1) x (G_x+1)` Toeplitz matrix with `T[p,q] = a[Gx+p-q] conj(a[Gx-p+q])`.
///
/// The products pair antenna `g` with `-g`, so the quadratic range term of a
/// near-field response cancels and `T = ã ã^H` with `ã[p] = e^{j 2 p rho}`.
pub fn aoa_toeplitz(a_r_col: &[C64]) -> Result<CMat> {
    let g = a_r_col.len();
    if g.is_multiple_of(2) {
        return Err(Error::EvenArray(g));
    }
    let gx = g / 2;
    let c: Vec<C64> = (0..g).map(|i| a_r_col[i] * a_r_col[2 * gx - i].conj()).collect();
    Ok(CMat::from_fn(gx + 1, gx + 1, |p, q| c[gx + p - q]))
}

/// Noise-subspace projector `Q (Q^H Q)^{-1} Q^H` built from the propagator
/// `P = (T1 T1^H)^{-1} T1 T2^H`, `Q = [P; -I]`.
pub fn propagator_projector(t: &CMat) -> Result<CMat> {
    let n = t.nrows();
    if n < 2 {
        return Err(Error::Degenerate("Toeplitz matrix needs at least two rows".into()));
    }
    let t1 = t.rows(0, 1);
    let t2 = t.rows(1, n - 1);
    let s = (t1 * t1.adjoint())[(0, 0)];
    if s.norm() < 1e-30 {
        return Err(Error::Degenerate("T1 T1^H vanishes".into()));
    }
    let p = (t1 * t2.adjoint()) / s;
    let mut q = CMat::zeros(n, n - 1);
    q.rows_mut(0, 1).copy_from(&p);
    for i in 0..n - 1 {
        q[(i + 1, i)] = C64::new(-1.0, 0.0);
    }
    let gram = q.adjoint() * &q;
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("Q^H Q is singular".into()))?;
    Ok(&q * inv * q.adjoint())
}

/// Reduced search vector `[1, e^{j 2 rho}, ..., e^{j 2 Gx rho}]`.
pub fn reduced_steering(theta: f64, len: usize, spacing: f64) -> Vec<C64> {
    let rho = -2.0 * PI * spacing * theta.sin();
    (0..len).map(|p| cis(2.0 * rho * p as f64)).collect()
}

/// `ã(theta)^H Pi_Q ã(theta)`.
pub fn aoa_objective(proj: &CMat, theta: f64, spacing: f64) -> f64 {
    let a = reduced_steering(theta, proj.nrows(), spacing);
    let mut acc = ZERO;
    for (p, ap) in a.iter().enumerate() {
        let mut row = ZERO;
        for (q, aq) in a.iter().enumerate() {
            row += proj[(p, q)] * aq;
        }
        acc += ap.conj() * row;
    }
    acc.re
}

/// AoA grid points, excluding the endpoints of the open search interval.
pub fn aoa_grid(cfg: &AoaSearchConfig) -> Vec<f64> {
    let (lo, hi) = cfg.range;
    let count = ((hi - lo) / cfg.grid_step).ceil() as usize;
    (1..count).map(|i| lo + i as f64 * cfg.grid_step).filter(|t| *t < hi).collect()
}

pub fn estimate_aoa(a_r_col: &[C64], cfg: &AoaSearchConfig) -> Result<f64> {
    if cfg.grid_step <= 0.0 {
        return Err(Error::InvalidConfig("grid_step must be positive".into()));
    }
    if a_r_col.len() < 5 {
        return Err(Error::Degenerate("AoA search needs gx >= 2".into()));
    }
    let t = aoa_toeplitz(a_r_col)?;
    let proj = propagator_projector(&t)?;
    let f = |th: f64| aoa_objective(&proj, th, cfg.spacing);
    let grid = aoa_grid(cfg);
    let mut best = (f64::INFINITY, 0usize);
    for (i, &th) in grid.iter().enumerate() {
        let v = f(th);
        if v < best.0 {
            best = (v, i);
        }
    }
    let mut theta = grid[best.1];
    if !cfg.refine {
        return Ok(theta);
    }
    let (lo, hi) = cfg.range;
    let mut h = cfg.grid_step;
    while h > 1e-9 {
        let (fm, f0, fp) = (f(theta - h), f(theta), f(theta + h));
        let curv = fm - 2.0 * f0 + fp;
        if curv > 0.0 {
            let step = (0.5 * h * (fm - fp) / curv).clamp(-h, h);
            let cand = theta + step;
            if cand > lo && cand < hi && f(cand) <= f0 {
                theta = cand;
            }
        }
        h *= 0.1;
    }
    Ok(theta)
}

/// Pulse compression output.
#[derive(Debug, Clone)]
pub struct PulseCompression {
    pub u: Vec<C64>,
    pub magnitude: Vec<f64>,
    /// Global magnitude argmax, ties toward the smaller index.
    pub peak: usize,
}

impl PulseCompression {
    /// Peak magnitude over the median magnitude, in dB.
    pub fn peak_to_median_db(&self) -> f64 {
        let mut m = self.magnitude.clone();
        m.sort_by(f64::total_cmp);
        let med = if m.len() % 2 == 1 {
            m[m.len() / 2]
        } else {
            0.5 * (m[m.len() / 2 - 1] + m[m.len() / 2])
        };
        20.0 * (self.magnitude[self.peak] / med).log10()
    }
}

/// Integer delay hypothesis compensated at DAF location `q`.
fn lattice_delay(q: usize, cfg: &AfdmConfig) -> usize {
    let n = cfg.n_sub as i64;
    let q = q as i64;
    let qs = if q < n - cfg.doppler_span() as i64 { q } else { q - n };
    ((qs + 1).div_euclid(cfg.lattice_step() as i64)).clamp(0, cfg.ell_max as i64) as usize
}

/// `u[q] = sum_m conj(b[m]) x[(m+q) mod N] e^{-j 2 pi L(q) ((m+q) mod N) / N}`.
///
/// `L(q) = floor((q+1)/(2 N c1))` with locations in the top `alpha_max + k_v`
/// bins read as small negative offsets, clipped to `[0, ell_max]`.
pub fn pulse_compress(b_hat: &[C64], frame: &DafFrame, cfg: &AfdmConfig) -> Result<PulseCompression> {
    let n = cfg.n_sub;
    if b_hat.len() != n || frame.symbols.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: if b_hat.len() != n { b_hat.len() } else { frame.symbols.len() },
        });
    }
    let twiddle: Vec<C64> = (0..n).map(|t| cis(-2.0 * PI * t as f64 / n as f64)).collect();
    let x = &frame.symbols;
    let u: Vec<C64> = (0..n)
        .map(|q| {
            let l = lattice_delay(q, cfg);
            let mut acc = ZERO;
            for (m, bm) in b_hat.iter().enumerate() {
                let idx = (m + q) % n;
                acc += bm.conj() * x[idx] * twiddle[(l * idx) % n];
            }
            acc
        })
        .collect();
    let magnitude: Vec<f64> = u.iter().map(|v| v.norm()).collect();
    let mut peak = 0;
    for (i, &v) in magnitude.iter().enumerate() {
        if v > magnitude[peak] {
            peak = i;
        }
    }
    Ok(PulseCompression { u, magnitude, peak })
}

/// Nearest-lattice decode of a DAF location into integer delay and Doppler.
pub fn decode_integer(loc_hat: f64, cfg: &AfdmConfig) -> (i64, i64) {
    let n = cfg.n_sub as f64;
    let span = cfg.doppler_span() as f64;
    let q = cfg.lattice_step() as f64;
    let ls = if loc_hat < n - span - 0.5 { loc_hat } else { loc_hat - n };
    let ell = (ls / q).round().clamp(0.0, cfg.ell_max as f64);
    let alpha = (q * ell - ls).round().clamp(-span, span);
    (ell as i64, alpha as i64)
}

/// Outcome of one golden-section maximization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldenSection {
    /// Midpoint of the final bracket.
    pub x: f64,
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
}

/// Maximizes `f` on `[lo, hi]`; one new probe per step, stopping when the
/// bracket is narrower than `tol` or after `max_iter` steps.
pub fn golden_section_max(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> GoldenSection {
    let mut g1 = hi - ETA * (hi - lo);
    let mut g2 = lo + ETA * (hi - lo);
    let (mut f1, mut f2) = (f(g1), f(g2));
    let mut it = 0;
    while hi - lo >= tol && it < max_iter {
        if f1 <= f2 {
            lo = g1;
            g1 = g2;
            f1 = f2;
            g2 = lo + ETA * (hi - lo);
            f2 = f(g2);
        } else {
            hi = g2;
            g2 = g1;
            f2 = f1;
            g1 = hi - ETA * (hi - lo);
            f1 = f(g1);
        }
        it += 1;
    }
    GoldenSection {
        x: 0.5 * (lo + hi),
        lo,
        hi,
        iterations: it,
    }
}

/// Golden-section stopping width.
pub const GOLDEN_TOL: f64 = 1e-4;
/// Golden-section iteration cap.
pub const GOLDEN_MAX_ITER: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct DelayDopplerEstimate {
    pub beta_hat: f64,
    pub nu_hat: f64,
    /// Seconds.
    pub tau_hat: f64,
    /// Hz.
    pub fd_hat: f64,
    pub loc_hat: f64,
    /// Outer rounds run.
    pub iterations: usize,
    /// `(beta, nu)` after each outer round.
    pub history: Vec<(f64, f64)>,
}

/// Matched-filter objective `|<Delta_{-g} Pi^l s, y>|^2` for one frame.
#[derive(Clone)]
pub struct DelayDopplerSearch {
    afdm: Afdm,
    s: Vec<C64>,
}

impl DelayDopplerSearch {
    pub fn new(frame: &DafFrame, cfg: &AfdmConfig) -> Self {
        let afdm = Afdm::new(cfg);
        let s = afdm.idaft(&frame.symbols);
        DelayDopplerSearch { afdm, s }
    }

    /// Time-domain image `y = Lambda_c1^H F^H Lambda_c2^H b`.
    pub fn image(&self, b_hat: &[C64]) -> Vec<C64> {
        self.afdm.idaft(b_hat)
    }

    fn doppler_corr(delayed: &[C64], y: &[C64], nu: f64) -> f64 {
        let n = delayed.len() as f64;
        let mut acc = ZERO;
        for (i, (d, v)) in delayed.iter().zip(y).enumerate() {
            acc += (d * cis(2.0 * PI * nu * i as f64 / n)).conj() * v;
        }
        acc.norm_sqr()
    }

    pub fn objective(&self, y: &[C64], beta: f64, nu: f64) -> f64 {
        let delayed = apply_delay(self.afdm.dft(), &self.s, beta);
        Self::doppler_corr(&delayed, y, nu)
    }

    /// Alternating golden-section search over `nu` then `beta`, each in a
    /// width-2 window around the previous value.
    pub fn refine(&self, b_hat: &[C64], init: (f64, f64), t_outer: usize, cfg: &AfdmConfig) -> DelayDopplerEstimate {
        let y = self.image(b_hat);
        let (mut l, mut a) = init;
        let mut history = Vec::with_capacity(t_outer);
        for _ in 0..t_outer {
            let delayed = apply_delay(self.afdm.dft(), &self.s, l);
            a = golden_section_max(|g| Self::doppler_corr(&delayed, &y, g), a - 1.0, a + 1.0, GOLDEN_TOL, GOLDEN_MAX_ITER).x;
            l = golden_section_max(|q| self.objective(&y, q, a), l - 1.0, l + 1.0, GOLDEN_TOL, GOLDEN_MAX_ITER).x;
            history.push((l, a));
        }
        DelayDopplerEstimate {
            beta_hat: l,
            nu_hat: a,
            tau_hat: l * cfg.sample_period(),
            fd_hat: a * cfg.delta_f,
            loc_hat: f64::NAN,
            iterations: t_outer,
            history,
        }
    }
}

pub fn refine_delay_doppler(
    b_hat: &[C64],
    frame: &DafFrame,
    cfg: &AfdmConfig,
    init: (i64, i64),
    t_outer: usize,
) -> Result<DelayDopplerEstimate> {
    if b_hat.len() != cfg.n_sub {
        return Err(Error::LengthMismatch {
            expected: cfg.n_sub,
            got: b_hat.len(),
        });
    }
    if t_outer == 0 {
        return Err(Error::InvalidConfig("t_outer must be at least 1".into()));
    }
    let search = DelayDopplerSearch::new(frame, cfg);
    Ok(search.refine(b_hat, (init.0 as f64, init.1 as f64), t_outer, cfg))
}

/// Pulse compression, lattice decode and refinement for one DAF column.
pub fn estimate_delay_doppler(search: &DelayDopplerSearch, b_hat: &[C64], frame: &DafFrame, cfg: &AfdmConfig, t_outer: usize) -> Result<DelayDopplerEstimate> {
    let pc = pulse_compress(b_hat, frame, cfg)?;
    let (ell, alpha) = decode_integer(pc.peak as f64, cfg);
    let mut est = search.refine(b_hat, (ell as f64, alpha as f64), t_outer.max(1), cfg);
    est.loc_hat = pc.peak as f64;
    Ok(est)
}

/// Number of targets: fixed or chosen by MDL.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMode {
    Fixed(usize),
    Mdl,
}

/// Knobs of the full pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Smoothing split; `None` picks [`SmoothingPlan::default_for`].
    pub plan: Option<SmoothingPlan>,
    pub aoa: Option<AoaSearchConfig>,
    /// Outer delay/Doppler rounds.
    pub t_outer: usize,
    /// Largest order MDL may return.
    pub mdl_max_rank: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            plan: None,
            aoa: None,
            t_outer: 3,
            mdl_max_rank: 16,
        }
    }
}

/// Estimates for one recovered component.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetEstimate {
    pub theta: f64,
    pub phi: f64,
    pub tau: f64,
    pub f_d: f64,
    pub beta: f64,
    pub nu: f64,
    pub loc: f64,
    pub generator: C64,
}

/// Output of the full pipeline, in generator-phase order.
#[derive(Debug, Clone)]
pub struct Estimates {
    pub targets: Vec<TargetEstimate>,
    pub rank: usize,
    /// MDL order when the rank was selected automatically.
    pub mdl_rank: Option<usize>,
    pub singular_values: Vec<f64>,
    /// Relative energy of the smoothed matrix outside the rank-`R` subspace.
    pub cpd_residual: f64,
    pub plan: SmoothingPlan,
    pub factors: FactorEstimates,
}

pub fn estimate_all(t: &Tensor3, frame: &DafFrame, cfg: &AfdmConfig, scene: &SceneConfig, rank: RankMode) -> Result<Estimates> {
    estimate_all_with(t, frame, cfg, scene, rank, &EstimatorConfig::default())
}

pub fn estimate_all_with(
    t: &Tensor3,
    frame: &DafFrame,
    cfg: &AfdmConfig,
    scene: &SceneConfig,
    rank: RankMode,
    opts: &EstimatorConfig,
) -> Result<Estimates> {
    let (g, n, k) = t.dims();
    if g != scene.g() || n != cfg.n_sub || k != scene.k_tx || frame.symbols.len() != n {
        return Err(Error::DimMismatch(format!(
            "tensor {:?} vs scene ({}, {}, {})",
            t.dims(),
            scene.g(),
            cfg.n_sub,
            scene.k_tx
        )));
    }
    let plan = match opts.plan {
        Some(p) => {
            p.check(k)?;
            p
        }
        None => SmoothingPlan::default_for(k)?,
    };
    let ups = spatial_smooth(&t.unfold(2)?, plan, g)?;
    let spec = Spectrum::new(&ups);
    let sv = spec.singular_values.clone();
    let (r, mdl) = match rank {
        RankMode::Fixed(r) => (r, None),
        RankMode::Mdl => {
            let max = opts.mdl_max_rank.min(sv.len() - 1);
            let r = mdl_rank(&sv, plan.l3 * n, max)?;
            (r, Some(r))
        }
    };
    if r == 0 {
        return Err(Error::ZeroRank);
    }
    let svd = spec.truncate(&ups, r)?;
    let factors = structured_from_svd(&svd, plan, g, k, n)?;
    let total: f64 = sv.iter().map(|s| s * s).sum();
    let kept: f64 = sv[..r].iter().map(|s| s * s).sum();
    let cpd_residual = if total > 0.0 { ((total - kept).max(0.0) / total).sqrt() } else { 0.0 };

    let aoa = opts.aoa.unwrap_or_else(|| AoaSearchConfig::for_scene(scene));
    let search = DelayDopplerSearch::new(frame, cfg);
    let mut targets = Vec::with_capacity(r);
    for c in 0..r {
        let a_col: Vec<C64> = factors.a_r_hat.column(c).iter().cloned().collect();
        let b_col: Vec<C64> = factors.b_c_hat.column(c).iter().cloned().collect();
        let z = factors.generators[c];
        let dd = estimate_delay_doppler(&search, &b_col, frame, cfg, opts.t_outer)?;
        targets.push(TargetEstimate {
            theta: estimate_aoa(&a_col, &aoa)?,
            phi: estimate_aod(z),
            tau: dd.tau_hat,
            f_d: dd.fd_hat,
            beta: dd.beta_hat,
            nu: dd.nu_hat,
            loc: dd.loc_hat,
            generator: z,
        });
    }
    Ok(Estimates {
        targets,
        rank: r,
        mdl_rank: mdl,
        singular_values: sv,
        cpd_residual,
        plan,
        factors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{rx_steering, synthesize_tensor, tx_steering, DafChannel, Scenario, Target};
    use crate::waveform::gen_qam_frame_len;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn aod_examples() {
        assert_eq!(estimate_aod(C64::new(1.0, 0.0)), 0.0);
        assert!((estimate_aod(cis(-PI / 2.0)) - PI / 6.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let phi = (rng.random::<f64>() - 0.5) * 0.999 * PI;
            let a = tx_steering(phi, 2);
            assert!((estimate_aod(a[1]) - phi).abs() < 1e-12);
        }
    }

    #[test]
    fn toeplitz_examples() {
        let sc = Scenario::reference().scene;
        let t = aoa_toeplitz(&rx_steering(0.0, 4.0, &sc).unwrap()).unwrap();
        assert!(t.iter().all(|v| (v - 1.0).norm() < 1e-12));

        let near = rx_steering(PI / 9.0, 4.0, &sc).unwrap();
        let far = rx_steering(PI / 9.0, f64::INFINITY, &sc).unwrap();
        let tn = aoa_toeplitz(&near).unwrap();
        let tf = aoa_toeplitz(&far).unwrap();
        let at = reduced_steering(PI / 9.0, 51, 0.25);
        for p in 0..51 {
            for q in 0..51 {
                assert!((tn[(p, q)] - at[p] * at[q].conj()).norm() < 1e-12);
                assert!((tn[(p, q)] - tf[(p, q)]).norm() < 1e-12);
            }
        }
        let s = C64::new(-1.5, 2.0);
        let scaled: Vec<C64> = near.iter().map(|v| v * s).collect();
        let ts = aoa_toeplitz(&scaled).unwrap();
        assert!((ts - tn * C64::new(s.norm_sqr(), 0.0)).norm() < 1e-9);
        assert!(matches!(aoa_toeplitz(&near[..100]), Err(Error::EvenArray(100))));
    }

    #[test]
    fn aoa_far_and_near() {
        let sc = Scenario::reference().scene;
        let cfg = AoaSearchConfig::for_scene(&sc);
        for (theta, r) in [(PI / 6.0, f64::INFINITY), (PI / 9.0, 4.0), (-0.7, 1.5)] {
            let a = rx_steering(theta, r, &sc).unwrap();
            let est = estimate_aoa(&a, &cfg).unwrap();
            assert!((est - theta).abs() < 1e-6, "theta {theta} est {est}");
            let coarse = estimate_aoa(&a, &AoaSearchConfig { refine: false, ..cfg }).unwrap();
            assert!((coarse - theta).abs() <= cfg.grid_step);
        }
        let zero = estimate_aoa(&rx_steering(0.0, f64::INFINITY, &sc).unwrap(), &AoaSearchConfig { refine: false, ..cfg }).unwrap();
        assert!(zero.abs() < cfg.grid_step / 2.0 + 1e-12);
    }

    #[test]
    fn aoa_matches_fine_grid_oracle() {
        let sc = Scenario::desk().scene;
        let cfg = AoaSearchConfig::for_scene(&sc);
        let theta = 0.4321;
        let a = rx_steering(theta, 0.3, &sc).unwrap();
        let proj = propagator_projector(&aoa_toeplitz(&a).unwrap()).unwrap();
        let fine = (0..200_001)
            .map(|i| theta - 1e-3 + i as f64 * 1e-8)
            .min_by(|x, y| aoa_objective(&proj, *x, cfg.spacing).total_cmp(&aoa_objective(&proj, *y, cfg.spacing)))
            .unwrap();
        let est = estimate_aoa(&a, &cfg).unwrap();
        assert!((est - fine).abs() < 1e-6);
    }

    #[test]
    fn degenerate_aoa_input() {
        let z = vec![ZERO; 11];
        let cfg = AoaSearchConfig::default();
        assert!(matches!(estimate_aoa(&z, &cfg), Err(Error::Degenerate(_))));
    }

    fn frame(n: usize, seed: u64) -> DafFrame {
        gen_qam_frame_len(16, seed, n).unwrap()
    }

    #[test]
    fn pulse_compression_static() {
        let cfg = AfdmConfig::reference();
        let x = frame(256, 1);
        let pc = pulse_compress(&x.symbols, &x, &cfg).unwrap();
        assert_eq!(pc.peak, 0);
        let e: f64 = x.symbols.iter().map(|v| v.norm_sqr()).sum();
        assert!((pc.magnitude[0] - e).abs() < 1e-9);
    }

    #[test]
    fn pulse_compression_on_grid_peaks() {
        let cfg = AfdmConfig::reference();
        let x = frame(256, 2);
        let ch = DafChannel::new(&x, &cfg);
        for (beta, nu) in [(8.0, 1.0), (8.0, -1.0), (3.0, 0.0), (12.0, 1.0), (1.0, -1.0), (5.0, 0.0)] {
            let pc = pulse_compress(&ch.response(beta, nu), &x, &cfg).unwrap();
            let loc = ((9.0 * beta - nu) as i64).rem_euclid(256) as usize;
            assert_eq!(pc.peak, loc, "beta {beta} nu {nu}");
            let (l, a) = decode_integer(pc.peak as f64, &cfg);
            assert_eq!((l as f64, a as f64), (beta, nu));
        }
    }

    #[test]
    fn decode_examples() {
        let cfg = AfdmConfig::reference();
        assert_eq!(decode_integer(0.0, &cfg), (0, 0));
        assert_eq!(decode_integer(70.0, &cfg), (8, 2));
        let (l, a) = decode_integer(71.5, &cfg);
        assert_eq!(l, 8);
        assert!(a == 0 || a == 1);
        assert!((l as f64 - 8.13).abs() <= 1.0 && (a as f64 - 1.67).abs() <= 1.0);
        assert_eq!(decode_integer(255.0, &cfg), (0, 1));
        assert_eq!(decode_integer(200.0, &cfg), (12, -4));
    }

    #[test]
    fn golden_section_width_schedule() {
        let mut widths = Vec::new();
        for n in 0..30 {
            let gs = golden_section_max(|x| -(x - 0.3).powi(2), -1.0, 1.0, 0.0, n);
            widths.push(gs.hi - gs.lo);
            assert_eq!(gs.iterations, n);
            assert!((gs.hi - gs.lo - 2.0 * ETA.powi(n as i32)).abs() < 1e-12);
        }
        let gs = golden_section_max(|x| -(x - 0.3).powi(2), -1.0, 1.0, GOLDEN_TOL, GOLDEN_MAX_ITER);
        assert!(gs.hi - gs.lo < GOLDEN_TOL);
        assert!((gs.x - 0.3).abs() < GOLDEN_TOL);
    }

    #[test]
    fn refine_on_grid_stays_put() {
        let cfg = AfdmConfig::reference();
        let x = frame(256, 3);
        let b = DafChannel::new(&x, &cfg).response(8.0, 2.0);
        let est = refine_delay_doppler(&b, &x, &cfg, (8, 2), 3).unwrap();
        assert!((est.beta_hat - 8.0).abs() < 1e-4 && (est.nu_hat - 2.0).abs() < 1e-4);
        assert!((est.tau_hat - est.beta_hat * cfg.sample_period()).abs() < 1e-20);
        assert!((est.fd_hat - est.nu_hat * cfg.delta_f).abs() < 1e-9);
    }

    #[test]
    fn refine_fractional_target() {
        let cfg = AfdmConfig::reference();
        let x = frame(256, 4);
        let b = DafChannel::new(&x, &cfg).response(8.13, 1.67);
        let est = refine_delay_doppler(&b, &x, &cfg, (8, 1), 3).unwrap();
        assert!((est.beta_hat - 8.13).abs() < 1e-3, "{est:?}");
        assert!((est.nu_hat - 1.67).abs() < 1e-3, "{est:?}");
    }

    #[test]
    fn refine_is_scale_invariant() {
        let cfg = AfdmConfig::desk();
        let x = frame(64, 5);
        let b = DafChannel::new(&x, &cfg).response(3.3, -0.4);
        let b10: Vec<C64> = b.iter().map(|v| v * 10.0).collect();
        let a = refine_delay_doppler(&b, &x, &cfg, (3, 0), 3).unwrap();
        let c = refine_delay_doppler(&b10, &x, &cfg, (3, 0), 3).unwrap();
        assert_eq!(a.beta_hat, c.beta_hat);
        assert_eq!(a.nu_hat, c.nu_hat);
    }

    #[test]
    fn end_to_end_desk_noise_free() {
        let sc = Scenario::desk();
        let x = sc.frame().unwrap();
        let t = synthesize_tensor(&sc.scene, &x, &sc.afdm, None, 0).unwrap().clean;
        let est = estimate_all(&t, &x, &sc.afdm, &sc.scene, RankMode::Mdl).unwrap();
        assert_eq!(est.rank, 3);
        for truth in &sc.scene.targets {
            let e = est
                .targets
                .iter()
                .min_by(|a, b| (a.phi - truth.phi).abs().total_cmp(&(b.phi - truth.phi).abs()))
                .unwrap();
            assert!((e.phi - truth.phi).abs() < 1e-6);
            assert!((e.theta - truth.theta).abs() < 1e-3);
            assert!((e.beta - truth.beta(&sc.afdm)).abs() < 1e-3);
            assert!((e.nu - truth.nu(&sc.afdm)).abs() < 1e-3);
        }
    }

    #[test]
    fn single_static_target_reports_zeros() {
        let mut sc = Scenario::desk();
        sc.scene.targets = vec![Target {
            theta: 0.0,
            phi: 0.0,
            range: f64::INFINITY,
            tau: 0.0,
            f_d: 0.0,
            gamma: C64::new(1.0, 0.0),
        }];
        let x = sc.frame().unwrap();
        let t = synthesize_tensor(&sc.scene, &x, &sc.afdm, None, 0).unwrap().clean;
        let est = estimate_all(&t, &x, &sc.afdm, &sc.scene, RankMode::Fixed(1)).unwrap();
        let e = &est.targets[0];
        assert!(e.phi.abs() < 1e-12 && e.theta.abs() < 1e-6);
        assert!(e.beta.abs() < 1e-4 && e.nu.abs() < 1e-4);
    }

    #[test]
    fn shared_aoa_targets_resolved() {
        let mut sc = Scenario::desk();
        let th = sc.scene.targets[1].theta;
        sc.scene.targets.truncate(2);
        sc.scene.targets[0].theta = th;
        sc.scene.targets[0].range = f64::INFINITY;
        let x = sc.frame().unwrap();
        let t = synthesize_tensor(&sc.scene, &x, &sc.afdm, None, 0).unwrap().clean;
        let est = estimate_all(&t, &x, &sc.afdm, &sc.scene, RankMode::Fixed(2)).unwrap();
        for truth in &sc.scene.targets {
            let e = est
                .targets
                .iter()
                .min_by(|a, b| (a.phi - truth.phi).abs().total_cmp(&(b.phi - truth.phi).abs()))
                .unwrap();
            assert!((e.theta - th).abs() < 1e-3);
            assert!((e.beta - truth.beta(&sc.afdm)).abs() < 1e-3);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn aoa_argmin_scale_invariant(theta in -1.3f64..1.3, re in -5.0f64..5.0, im in 0.1f64..5.0) {
            let sc = Scenario::desk().scene;
            let cfg = AoaSearchConfig { refine: false, ..AoaSearchConfig::for_scene(&sc) };
            let a = rx_steering(theta, 0.5, &sc).unwrap();
            let s = C64::new(re, im);
            let b: Vec<C64> = a.iter().map(|v| v * s).collect();
            prop_assert_eq!(estimate_aoa(&a, &cfg).unwrap(), estimate_aoa(&b, &cfg).unwrap());
        }

        #[test]
        fn refinement_error_non_increasing(beta in 0.6f64..6.4, nu in -1.4f64..1.4, seed in any::<u64>()) {
            let cfg = AfdmConfig::desk();
            let x = frame(64, seed);
            let b = DafChannel::new(&x, &cfg).response(beta, nu);
            let pc = pulse_compress(&b, &x, &cfg).unwrap();
            let init = decode_integer(pc.peak as f64, &cfg);
            let est = refine_delay_doppler(&b, &x, &cfg, init, 3).unwrap();
            let errs: Vec<f64> = est.history.iter().map(|(l, a)| (l - beta).abs().max((a - nu).abs())).collect();
            prop_assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", errs);
            prop_assert!(errs[2] < 1e-2, "{:?}", errs);
        }
    }
}

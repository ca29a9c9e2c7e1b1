//! Array geometry, targets, channel operators and synthesis of the received
//! DAF-domain data cube.
//!
//! Physical Doppler multiplies time sample `n` by `e^{+j 2 pi nu n / N}`,
//! which is `doppler_op(-nu)`. With that convention an on-grid path lands at
//! DAF index `loc = 2 N c1 beta - nu` and `b[m]` carries `x[m + loc]`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{cis, norm_sqr, Dft, C64, ZERO};
use crate::tensor::Tensor3;
use crate::waveform::{append_cpp, Afdm, AfdmConfig, DafFrame, TimeFrame};
use crate::SPEED_OF_LIGHT;

/// One point scatterer.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    /// Angle of arrival in radians.
    pub theta: f64,
    /// Angle of departure in radians.
    pub phi: f64,
    /// Distance to the reference antenna in meters, `f64::INFINITY` for far field.
    pub range: f64,
    /// Delay in seconds.
    pub tau: f64,
    /// Doppler shift in Hz.
    pub f_d: f64,
    pub gamma: C64,
}

impl Target {
    /// Builds a target from normalized delay and Doppler.
    #[allow(clippy::too_many_arguments)]
    pub fn normalized(theta: f64, phi: f64, range: f64, beta: f64, nu: f64, gamma: C64, cfg: &AfdmConfig) -> Self {
        Target {
            theta,
            phi,
            range,
            tau: beta * cfg.sample_period(),
            f_d: nu * cfg.delta_f,
            gamma,
        }
    }

    /// `beta = tau / T_s`.
    pub fn beta(&self, cfg: &AfdmConfig) -> f64 {
        self.tau / cfg.sample_period()
    }

    /// `nu = N f_d T_s = f_d / delta_f`.
    pub fn nu(&self, cfg: &AfdmConfig) -> f64 {
        self.f_d / cfg.delta_f
    }

    pub fn is_far_field(&self) -> bool {
        self.range.is_infinite()
    }
}

/// Transmit/receive array geometry plus the target list.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub fc: f64,
    pub delta_f: f64,
    /// Number of transmit antennas `K`.
    pub k_tx: usize,
    /// Half-aperture index; the receive array has `2 gx + 1` elements.
    pub gx: usize,
    /// Receive spacing in meters.
    pub d_rx: f64,
    /// Transmit spacing in meters.
    pub d_tx: f64,
    pub targets: Vec<Target>,
}

impl SceneConfig {
    /// Quarter-wavelength receive and half-wavelength transmit spacing.
    pub fn new(fc: f64, delta_f: f64, k_tx: usize, gx: usize, targets: Vec<Target>) -> Self {
        let lambda = SPEED_OF_LIGHT / fc;
        SceneConfig {
            fc,
            delta_f,
            k_tx,
            gx,
            d_rx: lambda / 4.0,
            d_tx: lambda / 2.0,
            targets,
        }
    }

    /// Receive element count `G`.
    pub fn g(&self) -> usize {
        2 * self.gx + 1
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.fc
    }

    /// Aperture `D = 2 gx d_rx`.
    pub fn aperture(&self) -> f64 {
        2.0 * self.gx as f64 * self.d_rx
    }

    /// Smallest admissible finite range, `0.62 (D^3/lambda)^{1/2}`.
    pub fn fresnel_limit(&self) -> f64 {
        0.62 * (self.aperture().powi(3) / self.wavelength()).sqrt()
    }

    pub fn is_near_field(&self, t: &Target) -> bool {
        t.range <= rayleigh_distance(self)
    }

    /// Checks angle domains, the range floor and the delay/Doppler budget.
    pub fn validate_target(&self, t: &Target, cfg: &AfdmConfig) -> Result<()> {
        check_angle(t.theta)?;
        check_angle(t.phi)?;
        if t.range.is_finite() && t.range < self.fresnel_limit() {
            return Err(Error::RangeTooShort {
                range: t.range,
                limit: self.fresnel_limit(),
            });
        }
        let beta = t.beta(cfg);
        if !(beta > 0.0 && beta <= cfg.ell_max as f64 + 0.5) {
            return Err(Error::InvalidConfig(format!(
                "normalized delay {beta} outside (0, {}]",
                cfg.ell_max as f64 + 0.5
            )));
        }
        let nu = t.nu(cfg);
        if nu.abs() > cfg.alpha_max as f64 + 0.5 {
            return Err(Error::InvalidConfig(format!(
                "normalized Doppler {nu} outside +-{}",
                cfg.alpha_max as f64 + 0.5
            )));
        }
        Ok(())
    }
}

fn check_angle(a: f64) -> Result<()> {
    if !(a.abs() < PI / 2.0) {
        return Err(Error::AngleOutOfRange(a));
    }
    Ok(())
}

/// `2 D^2 / lambda`.
pub fn rayleigh_distance(scene: &SceneConfig) -> f64 {
    2.0 * scene.aperture().powi(2) / scene.wavelength()
}

/// Steering vectors of one target and their phase coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVectors {
    pub a_rx: Vec<C64>,
    pub a_tx: Vec<C64>,
    pub rho: f64,
    pub xi: f64,
}

/// `rho = -(2 pi d / lambda) sin theta`.
pub fn rho(theta: f64, scene: &SceneConfig) -> f64 {
    -2.0 * PI * scene.d_rx / scene.wavelength() * theta.sin()
}

/// `xi = pi d^2 cos theta / (lambda r0^2)`, zero in the far field.
pub fn xi(theta: f64, range: f64, scene: &SceneConfig) -> f64 {
    if range.is_infinite() {
        return 0.0;
    }
    PI * scene.d_rx * scene.d_rx * theta.cos() / (scene.wavelength() * range * range)
}

/// Receive response, element `g + gx` equal to `e^{j g rho + j g^2 xi}`.
pub fn rx_steering(theta: f64, range: f64, scene: &SceneConfig) -> Result<Vec<C64>> {
    check_angle(theta)?;
    if range.is_finite() && range < scene.fresnel_limit() {
        return Err(Error::RangeTooShort {
            range,
            limit: scene.fresnel_limit(),
        });
    }
    let (r, x) = (rho(theta, scene), xi(theta, range, scene));
    let gx = scene.gx as i64;
    Ok((-gx..=gx)
        .map(|g| {
            let g = g as f64;
            cis(g * r + g * g * x)
        })
        .collect())
}

/// Spherical-wave receive response `e^{j (2 pi / lambda) (r_g - r0)}` with
/// `r_g = sqrt(r0^2 + (g d)^2 - 2 r0 g d sin theta)`. Its second-order
/// expansion has the same linear term as [`rx_steering`] and a quadratic
/// coefficient `pi d^2 cos^2 theta / (lambda r0)`.
pub fn rx_steering_exact(theta: f64, range: f64, scene: &SceneConfig) -> Vec<C64> {
    if range.is_infinite() {
        return rx_steering(theta, range, scene).unwrap_or_default();
    }
    let (d, k) = (scene.d_rx, 2.0 * PI / scene.wavelength());
    let gx = scene.gx as i64;
    (-gx..=gx)
        .map(|g| {
            let gd = g as f64 * d;
            let rg = (range * range + gd * gd - 2.0 * range * gd * theta.sin()).sqrt();
            cis(k * (rg - range))
        })
        .collect()
}

/// Transmit response, entry `k` equal to `e^{-j pi k sin phi}`.
pub fn tx_steering(phi: f64, k_tx: usize) -> Vec<C64> {
    let z = -PI * phi.sin();
    (0..k_tx).map(|k| cis(z * k as f64)).collect()
}

pub fn steering(t: &Target, scene: &SceneConfig) -> Result<SteeringVectors> {
    check_angle(t.phi)?;
    Ok(SteeringVectors {
        a_rx: rx_steering(t.theta, t.range, scene)?,
        a_tx: tx_steering(t.phi, scene.k_tx),
        rho: rho(t.theta, scene),
        xi: xi(t.theta, t.range, scene),
    })
}

/// Dense `Pi^beta = F^H diag(e^{-j 2 pi n beta / N}) F`, row-major.
pub fn delay_op(beta: f64, n_sub: usize) -> Vec<Vec<C64>> {
    let n = n_sub as f64;
    (0..n_sub)
        .map(|t| {
            (0..n_sub)
                .map(|u| {
                    (0..n_sub)
                        .map(|k| cis(2.0 * PI * k as f64 * (t as f64 - u as f64 - beta) / n))
                        .sum::<C64>()
                        / n
                })
                .collect()
        })
        .collect()
}

/// Diagonal of `Delta_nu = diag(e^{-j 2 pi n nu / N})`.
pub fn doppler_op(nu: f64, n_sub: usize) -> Vec<C64> {
    (0..n_sub)
        .map(|i| {
            // Reduce n*nu modulo N first so integer nu gives exact unit phases.
            let e = (i as f64 * nu).rem_euclid(n_sub as f64);
            cis(-2.0 * PI * e / n_sub as f64)
        })
        .collect()
}

/// Fast application of `Pi^beta` through the DFT.
pub fn apply_delay(dft: &Dft, v: &[C64], beta: f64) -> Vec<C64> {
    let n = v.len();
    let mut buf = v.to_vec();
    dft.forward(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        *b *= cis(-2.0 * PI * k as f64 * beta / n as f64);
    }
    dft.inverse(&mut buf);
    buf
}

/// Multiplies by the physical Doppler ramp `e^{+j 2 pi nu n / N}` in place.
pub fn apply_doppler(v: &mut [C64], nu: f64) {
    let n = v.len();
    for (i, x) in v.iter_mut().enumerate() {
        *x *= cis(2.0 * PI * nu * i as f64 / n as f64);
    }
}

/// DAF-domain channel shared across targets of one frame.
#[derive(Clone)]
pub struct DafChannel {
    afdm: Afdm,
    s: Vec<C64>,
}

impl DafChannel {
    pub fn new(frame: &DafFrame, cfg: &AfdmConfig) -> Self {
        let afdm = Afdm::new(cfg);
        let s = afdm.idaft(&frame.symbols);
        DafChannel { afdm, s }
    }

    pub fn afdm(&self) -> &Afdm {
        &self.afdm
    }

    /// Transmitted time-domain symbol `s`.
    pub fn time_frame(&self) -> &[C64] {
        &self.s
    }

    /// Time-domain echo `Delta_{-nu} Pi^beta s` for one unit-gain path.
    pub fn time_response(&self, beta: f64, nu: f64) -> Vec<C64> {
        let mut r = apply_delay(self.afdm.dft(), &self.s, beta);
        apply_doppler(&mut r, nu);
        r
    }

    /// `b(beta, nu)`.
    pub fn response(&self, beta: f64, nu: f64) -> Vec<C64> {
        self.afdm.daft(&self.time_response(beta, nu))
    }
}

/// `b = Lambda_c2 F Lambda_c1 Delta_{-nu} Pi^beta Lambda_c1^H F^H Lambda_c2^H x`.
pub fn daf_response(target: &Target, frame: &DafFrame, cfg: &AfdmConfig) -> Vec<C64> {
    DafChannel::new(frame, cfg).response(target.beta(cfg), target.nu(cfg))
}

/// Noise-free cube and, when an SNR was requested, its noisy counterpart.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub clean: Tensor3,
    pub noisy: Option<Tensor3>,
}

/// Builds `X = sum_r gamma_r a_R o b o a_T` and optionally `Y = X + W` with
/// `||X||^2 / ||W||^2` equal to the requested SNR for this realization.
///
/// Noise is drawn as white circular Gaussian time samples per (receive,
/// transmit) slot and carried to the DAF domain by the forward transform.
pub fn synthesize_tensor(
    scene: &SceneConfig,
    frame: &DafFrame,
    cfg: &AfdmConfig,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<Synthesis> {
    if scene.targets.is_empty() {
        return Err(Error::EmptyScene);
    }
    if frame.symbols.len() != cfg.n_sub {
        return Err(Error::LengthMismatch {
            expected: cfg.n_sub,
            got: frame.symbols.len(),
        });
    }
    let chan = DafChannel::new(frame, cfg);
    let (g, n, k) = (scene.g(), cfg.n_sub, scene.k_tx);
    let mut clean = Tensor3::zeros(g, n, k);
    for t in &scene.targets {
        let sv = steering(t, scene)?;
        let b = chan.response(t.beta(cfg), t.nu(cfg));
        clean.add_rank1(t.gamma, &sv.a_rx, &b, &sv.a_tx);
    }
    let noisy = match snr_db {
        None => None,
        Some(snr) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut w = Tensor3::zeros(g, n, k);
            let mut slot = vec![ZERO; n];
            for kk in 0..k {
                for gg in 0..g {
                    for v in slot.iter_mut() {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        *v = C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
                    }
                    let daf = chan.afdm().daft(&slot);
                    for (m, v) in daf.into_iter().enumerate() {
                        *w.get_mut(gg, m, kk) = v;
                    }
                }
            }
            let target = norm_sqr(clean.data()) / 10f64.powf(snr / 10.0);
            let scale = (target / norm_sqr(w.data())).sqrt();
            let mut y = clean.clone();
            for (a, b) in y.data_mut().iter_mut().zip(w.data()) {
                *a += b * scale;
            }
            Some(y)
        }
    };
    Ok(Synthesis { clean, noisy })
}

/// Independent time-domain construction of the noise-free cube.
///
/// Each path is delayed by direct periodic band-limited interpolation of the
/// prefixed time symbol, Doppler-rotated, summed with its steering weights per
/// (receive, transmit) slot, stripped of the prefix and mapped to the DAF
/// domain by a direct-sum transform. Shares no code with the factor path.
pub fn synthesize_time_domain(scene: &SceneConfig, frame: &DafFrame, cfg: &AfdmConfig) -> Result<Tensor3> {
    if scene.targets.is_empty() {
        return Err(Error::EmptyScene);
    }
    let n = cfg.n_sub;
    let nf = n as f64;
    let lcp = cfg.l_cpp;
    let c1 = cfg.c1_f64();

    // s[t] = (1/sqrt N) sum_m x[m] e^{j 2 pi (c1 t^2 + c2 m^2 + m t / N)}
    let s: Vec<C64> = (0..n)
        .map(|t| {
            let tt = t as f64;
            frame
                .symbols
                .iter()
                .enumerate()
                .map(|(m, x)| {
                    let mm = m as f64;
                    x * cis(2.0 * PI * (c1 * tt * tt + cfg.c2 * mm * mm + mm * tt / nf))
                })
                .sum::<C64>()
                / nf.sqrt()
        })
        .collect();
    let buf = append_cpp(&TimeFrame { samples: s }, cfg)?.samples;
    let sample = |i: i64| -> C64 {
        if i >= -(lcp as i64) {
            buf[(i + lcp as i64) as usize]
        } else {
            buf[(i.rem_euclid(n as i64)) as usize + lcp]
        }
    };

    let mut paths = Vec::with_capacity(scene.targets.len());
    for t in &scene.targets {
        let (beta, nu) = (t.beta(cfg), t.nu(cfg));
        let kernel: Vec<C64> = (0..n)
            .map(|d| {
                (0..n)
                    .map(|q| cis(2.0 * PI * q as f64 * (d as f64 - beta) / nf))
                    .sum::<C64>()
                    / nf
            })
            .collect();
        let r: Vec<C64> = (0..n)
            .map(|i| {
                let delayed: C64 = (0..n).map(|d| kernel[d] * sample(i as i64 - d as i64)).sum();
                delayed * cis(2.0 * PI * nu * i as f64 / nf)
            })
            .collect();
        paths.push((t, steering(t, scene)?, r));
    }

    // phi_t(m)^* = e^{-j 2 pi (c1 t^2 + c2 m^2 + m t / N)} / sqrt N
    let basis: Vec<C64> = (0..n * n)
        .map(|idx| {
            let (m, t) = ((idx / n) as f64, (idx % n) as f64);
            cis(-2.0 * PI * (c1 * t * t + cfg.c2 * m * m + m * t / nf)) / nf.sqrt()
        })
        .collect();

    let g = scene.g();
    let mut out = Tensor3::zeros(g, n, scene.k_tx);
    let mut rx = vec![ZERO; n];
    for kk in 0..scene.k_tx {
        for gg in 0..g {
            rx.iter_mut().for_each(|v| *v = ZERO);
            for (t, sv, r) in &paths {
                let w = t.gamma * sv.a_rx[gg] * sv.a_tx[kk];
                for (acc, v) in rx.iter_mut().zip(r) {
                    *acc += w * v;
                }
            }
            for m in 0..n {
                let row = &basis[m * n..(m + 1) * n];
                *out.get_mut(gg, m, kk) = row.iter().zip(&rx).map(|(a, b)| a * b).sum();
            }
        }
    }
    Ok(out)
}

/// Waveform, geometry, targets and frame source of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub afdm: AfdmConfig,
    pub scene: SceneConfig,
    /// QAM order of the transmitted frame.
    pub qam: u32,
    /// Seed of the transmitted frame.
    pub frame_seed: u64,
    /// Noise level and seed recorded alongside a stored tensor.
    pub noise: Option<NoiseRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseRecord {
    pub snr_db: f64,
    pub seed: u64,
}

impl Scenario {
    /// Full-scale scene: K=8, G=101, N=256 with one near-field and two
    /// far-field targets.
    pub fn reference() -> Self {
        let afdm = AfdmConfig::reference();
        let deg = PI / 180.0;
        let targets = vec![
            Target::normalized(20.0 * deg, -10.0 * deg, 4.0, 8.13, 1.2, C64::new(1.0, 0.0), &afdm),
            Target::normalized(-35.0 * deg, 25.0 * deg, f64::INFINITY, 3.4, -0.8, C64::from_polar(0.8, 0.7), &afdm),
            Target::normalized(50.0 * deg, 45.0 * deg, f64::INFINITY, 11.6, 0.45, C64::from_polar(0.6, -1.9), &afdm),
        ];
        let scene = SceneConfig::new(afdm.fc, afdm.delta_f, 8, 50, targets);
        Scenario {
            afdm,
            scene,
            qam: 16,
            frame_seed: 1,
            noise: None,
        }
    }

    /// Desk-scale scene: K=8, G=33, N=64, near-field target at 0.4 m.
    pub fn desk() -> Self {
        let afdm = AfdmConfig::desk();
        let deg = PI / 180.0;
        let targets = vec![
            Target::normalized(20.0 * deg, -10.0 * deg, 0.4, 4.3, 0.7, C64::new(1.0, 0.0), &afdm),
            Target::normalized(-35.0 * deg, 25.0 * deg, f64::INFINITY, 1.6, -0.8, C64::from_polar(0.8, 0.7), &afdm),
            Target::normalized(50.0 * deg, 45.0 * deg, f64::INFINITY, 5.7, 0.3, C64::from_polar(0.6, -1.9), &afdm),
        ];
        let scene = SceneConfig::new(afdm.fc, afdm.delta_f, 8, 16, targets);
        Scenario {
            afdm,
            scene,
            qam: 16,
            frame_seed: 1,
            noise: None,
        }
    }

    pub fn frame(&self) -> Result<DafFrame> {
        crate::waveform::gen_qam_frame_len(self.qam, self.frame_seed, self.afdm.n_sub)
    }

    pub fn frame_with_seed(&self, seed: u64) -> Result<DafFrame> {
        crate::waveform::gen_qam_frame_len(self.qam, seed, self.afdm.n_sub)
    }

    pub fn validate(&self) -> Result<()> {
        self.afdm.validate()?;
        if self.scene.targets.is_empty() {
            return Err(Error::EmptyScene);
        }
        for t in &self.scene.targets {
            self.scene.validate_target(t, &self.afdm)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses the sectioned `key = value` scene text.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: origin.to_string(),
            line,
            msg,
        };
        let mut afdm_kv: Vec<(String, String, usize)> = Vec::new();
        let mut array_kv = Vec::new();
        let mut frame_kv = Vec::new();
        let mut noise_kv = Vec::new();
        let mut targets: Vec<(usize, Vec<(String, String, usize)>)> = Vec::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                if let Some(idx) = section.strip_prefix("target.") {
                    let idx: usize = idx.parse().map_err(|_| perr(lineno, format!("bad target section [{section}]")))?;
                    targets.push((idx, Vec::new()));
                } else if !["afdm", "array", "frame", "noise"].contains(&section.as_str()) {
                    return Err(perr(lineno, format!("unknown section [{section}]")));
                }
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| perr(lineno, format!("expected key = value, got '{line}'")))?;
            let entry = (k.trim().to_string(), v.trim().to_string(), lineno);
            match section.as_str() {
                "afdm" => afdm_kv.push(entry),
                "array" => array_kv.push(entry),
                "frame" => frame_kv.push(entry),
                "noise" => noise_kv.push(entry),
                s if s.starts_with("target.") => targets.last_mut().expect("section pushed").1.push(entry),
                _ => return Err(perr(lineno, "key outside any section".into())),
            }
        }

        fn take<T: std::str::FromStr>(
            kv: &[(String, String, usize)],
            key: &str,
            perr: &dyn Fn(usize, String) -> Error,
        ) -> Result<Option<T>> {
            match kv.iter().find(|(k, _, _)| k == key) {
                None => Ok(None),
                Some((_, v, line)) => v
                    .parse::<T>()
                    .map(Some)
                    .map_err(|_| perr(*line, format!("cannot parse {key} = {v}"))),
            }
        }
        fn known(kv: &[(String, String, usize)], keys: &[&str], perr: &dyn Fn(usize, String) -> Error) -> Result<()> {
            for (k, _, line) in kv {
                if !keys.contains(&k.as_str()) {
                    return Err(perr(*line, format!("unknown key '{k}'")));
                }
            }
            Ok(())
        }
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| perr(0, format!("missing key '{key}'")));
        let need_u = |v: Option<usize>, key: &str| v.ok_or_else(|| perr(0, format!("missing key '{key}'")));

        known(
            &afdm_kv,
            &["n_sub", "alpha_max", "k_v", "ell_max", "l_cpp", "c2", "delta_f", "fc"],
            &perr,
        )?;
        let n_sub = need_u(take(&afdm_kv, "n_sub", &perr)?, "n_sub")?;
        let alpha_max = need_u(take(&afdm_kv, "alpha_max", &perr)?, "alpha_max")?;
        let k_v = take(&afdm_kv, "k_v", &perr)?.unwrap_or(3);
        let ell_max = need_u(take(&afdm_kv, "ell_max", &perr)?, "ell_max")?;
        let l_cpp = take(&afdm_kv, "l_cpp", &perr)?.unwrap_or(ell_max);
        let delta_f = need(take(&afdm_kv, "delta_f", &perr)?, "delta_f")?;
        let fc = need(take(&afdm_kv, "fc", &perr)?, "fc")?;
        let mut afdm = AfdmConfig::new(n_sub, alpha_max, k_v, ell_max, l_cpp, delta_f, fc)
            .map_err(|e| perr(0, e.to_string()))?;
        afdm.c2 = take(&afdm_kv, "c2", &perr)?.unwrap_or(0.0);

        known(&array_kv, &["k_tx", "gx", "d_rx", "d_tx"], &perr)?;
        let k_tx = need_u(take(&array_kv, "k_tx", &perr)?, "k_tx")?;
        let gx = need_u(take(&array_kv, "gx", &perr)?, "gx")?;
        let mut scene = SceneConfig::new(fc, delta_f, k_tx, gx, Vec::new());
        if let Some(d) = take(&array_kv, "d_rx", &perr)? {
            scene.d_rx = d;
        }
        if let Some(d) = take(&array_kv, "d_tx", &perr)? {
            scene.d_tx = d;
        }

        known(&frame_kv, &["qam", "seed"], &perr)?;
        let qam = take(&frame_kv, "qam", &perr)?.unwrap_or(16);
        let frame_seed = take(&frame_kv, "seed", &perr)?.unwrap_or(1);

        known(&noise_kv, &["snr_db", "seed"], &perr)?;
        let noise = match (take::<f64>(&noise_kv, "snr_db", &perr)?, take::<u64>(&noise_kv, "seed", &perr)?) {
            (Some(snr_db), Some(seed)) => Some(NoiseRecord { snr_db, seed }),
            (None, None) => None,
            _ => return Err(perr(0, "[noise] needs both snr_db and seed".into())),
        };

        targets.sort_by_key(|(i, _)| *i);
        for (_, kv) in &targets {
            known(kv, &["theta", "phi", "range", "tau", "f_d", "gamma_re", "gamma_im"], &perr)?;
            scene.targets.push(Target {
                theta: need(take(kv, "theta", &perr)?, "theta")?,
                phi: need(take(kv, "phi", &perr)?, "phi")?,
                range: take(kv, "range", &perr)?.unwrap_or(f64::INFINITY),
                tau: need(take(kv, "tau", &perr)?, "tau")?,
                f_d: need(take(kv, "f_d", &perr)?, "f_d")?,
                gamma: C64::new(
                    take(kv, "gamma_re", &perr)?.unwrap_or(1.0),
                    take(kv, "gamma_im", &perr)?.unwrap_or(0.0),
                ),
            });
        }
        let sc = Scenario {
            afdm,
            scene,
            qam,
            frame_seed,
            noise,
        };
        sc.validate().map_err(|e| perr(0, e.to_string()))?;
        Ok(sc)
    }

    /// Writes the scene text; floats use shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let a = &self.afdm;
        let s = &self.scene;
        let mut out = String::new();
        let _ = writeln!(out, "[afdm]");
        let _ = writeln!(out, "n_sub = {}", a.n_sub);
        let _ = writeln!(out, "alpha_max = {}", a.alpha_max);
        let _ = writeln!(out, "k_v = {}", a.k_v);
        let _ = writeln!(out, "ell_max = {}", a.ell_max);
        let _ = writeln!(out, "l_cpp = {}", a.l_cpp);
        let _ = writeln!(out, "c2 = {:?}", a.c2);
        let _ = writeln!(out, "delta_f = {:?}", a.delta_f);
        let _ = writeln!(out, "fc = {:?}", a.fc);
        let _ = writeln!(out, "\n[array]");
        let _ = writeln!(out, "k_tx = {}", s.k_tx);
        let _ = writeln!(out, "gx = {}", s.gx);
        let _ = writeln!(out, "d_rx = {:?}", s.d_rx);
        let _ = writeln!(out, "d_tx = {:?}", s.d_tx);
        let _ = writeln!(out, "\n[frame]");
        let _ = writeln!(out, "qam = {}", self.qam);
        let _ = writeln!(out, "seed = {}", self.frame_seed);
        if let Some(nr) = &self.noise {
            let _ = writeln!(out, "\n[noise]");
            let _ = writeln!(out, "snr_db = {:?}", nr.snr_db);
            let _ = writeln!(out, "seed = {}", nr.seed);
        }
        for (i, t) in s.targets.iter().enumerate() {
            let _ = writeln!(out, "\n[target.{}]", i + 1);
            let _ = writeln!(out, "theta = {:?}", t.theta);
            let _ = writeln!(out, "phi = {:?}", t.phi);
            let _ = writeln!(out, "range = {}", if t.range.is_infinite() { "inf".to_string() } else { format!("{:?}", t.range) });
            let _ = writeln!(out, "tau = {:?}", t.tau);
            let _ = writeln!(out, "f_d = {:?}", t.f_d);
            let _ = writeln!(out, "gamma_re = {:?}", t.gamma.re);
            let _ = writeln!(out, "gamma_im = {:?}", t.gamma.im);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::gen_qam_frame_len;
    use proptest::prelude::*;

    fn ref_scene() -> Scenario {
        Scenario::reference()
    }

    #[test]
    fn rayleigh_examples() {
        let s = ref_scene();
        assert!((rayleigh_distance(&s.scene) - 6.25).abs() < 0.01);
        let mut z = s.scene.clone();
        z.gx = 0;
        assert_eq!(rayleigh_distance(&z), 0.0);
        let mut one = s.scene.clone();
        one.fc = SPEED_OF_LIGHT / 0.005;
        one.gx = 1;
        one.d_rx = 0.5;
        assert!((rayleigh_distance(&one) - 400.0).abs() < 1e-9);
        assert!(s.scene.is_near_field(&s.scene.targets[0]));
        assert!(!s.scene.is_near_field(&s.scene.targets[1]));
    }

    #[test]
    fn rx_steering_examples() {
        let s = ref_scene().scene;
        assert!(rx_steering(0.0, f64::INFINITY, &s).unwrap().iter().all(|v| (v - 1.0).norm() < 1e-15));
        let a = rx_steering(PI / 6.0, f64::INFINITY, &s).unwrap();
        for (i, v) in a.iter().enumerate() {
            let g = i as f64 - 50.0;
            assert!((v - cis(-g * PI / 4.0)).norm() < 1e-12);
        }
        let (theta, r0) = (PI / 9.0, 4.0);
        let a = rx_steering(theta, r0, &s).unwrap();
        let lambda = s.wavelength();
        let d = lambda / 4.0;
        for (i, v) in a.iter().enumerate() {
            let g = i as f64 - 50.0;
            let ph = -g * 2.0 * PI * d / lambda * theta.sin() + g * g * PI * d * d * theta.cos() / (lambda * r0 * r0);
            assert!((v - cis(ph)).norm() < 1e-12);
        }
        assert_eq!(a[50], C64::new(1.0, 0.0));
        assert!(matches!(rx_steering(PI / 2.0, 4.0, &s), Err(Error::AngleOutOfRange(_))));
        assert!(matches!(rx_steering(0.1, 0.1, &s), Err(Error::RangeTooShort { .. })));
    }

    #[test]
    fn exact_steering_shares_linear_term() {
        // Far out, the spherical model collapses onto the plane wave.
        let s = ref_scene().scene;
        let exact = rx_steering_exact(0.3, 1e5, &s);
        let far = rx_steering(0.3, f64::INFINITY, &s).unwrap();
        for (a, b) in exact.iter().zip(&far) {
            assert!((a - b).norm() < 1e-3);
        }
    }

    #[test]
    fn far_field_limit_rate() {
        let s = ref_scene().scene;
        let far = rx_steering(0.4, f64::INFINITY, &s).unwrap();
        let err = |r: f64| {
            rx_steering(0.4, r, &s)
                .unwrap()
                .iter()
                .zip(&far)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(100.0), err(200.0));
        assert!((e1 / e2 - 4.0).abs() < 0.01, "ratio {}", e1 / e2);
    }

    #[test]
    fn tx_steering_examples() {
        assert!(tx_steering(0.0, 5).iter().all(|v| *v == C64::new(1.0, 0.0)));
        let a = tx_steering(PI / 6.0, 4);
        let want = [cis(0.0), cis(-PI / 2.0), cis(-PI), cis(-1.5 * PI)];
        for (x, y) in a.iter().zip(want) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn delay_operator_examples() {
        let d0 = delay_op(0.0, 6);
        for (i, row) in d0.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((v - if i == j { 1.0 } else { 0.0 }).norm() < 1e-12);
            }
        }
        let v: Vec<C64> = (0..8).map(|i| C64::new(i as f64, -(i as f64))).collect();
        let shifted = apply_delay(&Dft::new(8), &v, 3.0);
        for i in 0..8 {
            assert!((shifted[i] - v[(i + 5) % 8]).norm() < 1e-12);
        }
        let n = 256;
        let x = gen_qam_frame_len(16, 2, n).unwrap().symbols;
        let dense = delay_op(8.13, n);
        let fast = apply_delay(&Dft::new(n), &x, 8.13);
        for (row, f) in dense.iter().zip(&fast) {
            let want: C64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
            assert!((want - f).norm() < 1e-10);
        }
    }

    #[test]
    fn doppler_operator_examples() {
        assert!(doppler_op(0.0, 16).iter().all(|v| *v == C64::new(1.0, 0.0)));
        assert!(doppler_op(16.0, 16).iter().all(|v| (v - 1.0).norm() < 1e-15));
        let d = doppler_op(1.67, 256);
        for (i, v) in d.iter().enumerate() {
            assert!((v - cis(-2.0 * PI * i as f64 * 1.67 / 256.0)).norm() < 1e-12);
        }
        let mut ones = vec![C64::new(1.0, 0.0); 256];
        apply_doppler(&mut ones, -1.67);
        for (a, b) in ones.iter().zip(&d) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn response_identity_at_origin() {
        let cfg = AfdmConfig::reference();
        let x = gen_qam_frame_len(16, 4, 256).unwrap();
        let t = Target::normalized(0.0, 0.0, f64::INFINITY, 0.0, 0.0, C64::new(1.0, 0.0), &cfg);
        let b = daf_response(&t, &x, &cfg);
        for (a, c) in b.iter().zip(&x.symbols) {
            assert!((a - c).norm() < 1e-12);
        }
    }

    #[test]
    fn on_grid_response_is_a_shift() {
        let cfg = AfdmConfig::reference();
        let x = gen_qam_frame_len(16, 5, 256).unwrap();
        for (beta, nu) in [(8.0, 2.0), (8.0, 1.0), (3.0, -1.0), (12.0, 0.0)] {
            let t = Target::normalized(0.0, 0.0, f64::INFINITY, beta, nu, C64::new(1.0, 0.0), &cfg);
            let b = daf_response(&t, &x, &cfg);
            let loc = (9.0 * beta - nu) as i64;
            for m in 0..256 {
                let src = (m as i64 + loc).rem_euclid(256) as usize;
                assert!((b[m].norm() - x.symbols[src].norm()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn response_matches_dense_chain() {
        let cfg = AfdmConfig::desk();
        let n = cfg.n_sub;
        let x = gen_qam_frame_len(16, 6, n).unwrap();
        let (beta, nu) = (4.37, -0.61);
        let afdm = Afdm::new(&cfg);
        let s = afdm.idaft(&x.symbols);
        let pi = delay_op(beta, n);
        let dn = doppler_op(-nu, n);
        let r: Vec<C64> = (0..n)
            .map(|i| dn[i] * pi[i].iter().zip(&s).map(|(a, b)| a * b).sum::<C64>())
            .collect();
        let want = afdm.daft(&r);
        let t = Target::normalized(0.0, 0.0, f64::INFINITY, beta, nu, C64::new(1.0, 0.0), &cfg);
        let got = daf_response(&t, &x, &cfg);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn single_static_target_cube_is_frame() {
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
        let syn = synthesize_tensor(&sc.scene, &x, &sc.afdm, None, 0).unwrap();
        assert!(syn.noisy.is_none());
        let (g, n, k) = syn.clean.dims();
        for kk in 0..k {
            for m in 0..n {
                for gg in 0..g {
                    assert!((syn.clean.get(gg, m, kk) - x.symbols[m]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn empty_scene_rejected() {
        let mut sc = Scenario::desk();
        sc.scene.targets.clear();
        let x = sc.frame().unwrap();
        assert!(matches!(synthesize_tensor(&sc.scene, &x, &sc.afdm, None, 0), Err(Error::EmptyScene)));
    }

    #[test]
    fn dual_path_desk_scale() {
        let sc = Scenario::desk();
        let x = sc.frame().unwrap();
        let a = synthesize_tensor(&sc.scene, &x, &sc.afdm, None, 0).unwrap().clean;
        let b = synthesize_time_domain(&sc.scene, &x, &sc.afdm).unwrap();
        assert!(a.rel_diff(&b) < 1e-10, "rel err {}", a.rel_diff(&b));
    }

    #[test]
    fn realized_snr_is_exact() {
        let sc = Scenario::reference();
        let x = sc.frame().unwrap();
        let syn = synthesize_tensor(&sc.scene, &x, &sc.afdm, Some(15.0), 42).unwrap();
        let y = syn.noisy.unwrap();
        let sig = norm_sqr(syn.clean.data());
        let noise: f64 = y.data().iter().zip(syn.clean.data()).map(|(a, b)| (a - b).norm_sqr()).sum();
        let snr = 10.0 * (sig / noise).log10();
        assert!((snr - 15.0).abs() < 0.1, "snr {snr}");
    }

    #[test]
    fn daf_noise_stays_white() {
        let cfg = AfdmConfig::reference();
        let afdm = Afdm::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut sum = 0.0;
        let mut count = 0usize;
        for _ in 0..400 {
            let w: Vec<C64> = (0..256)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
                })
                .collect();
            let d = afdm.daft(&w);
            sum += norm_sqr(&d);
            count += d.len();
        }
        let var = sum / count as f64;
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn scene_text_round_trip() {
        let mut sc = Scenario::reference();
        sc.noise = Some(NoiseRecord { snr_db: 12.5, seed: 99 });
        let text = sc.to_text();
        let back = Scenario::parse(&text, "mem").unwrap();
        assert_eq!(back, sc);
    }

    #[test]
    fn scene_text_errors_name_origin() {
        let err = Scenario::parse("[afdm]\nn_sub = x\n", "foo.scene").unwrap_err();
        assert!(err.to_string().contains("foo.scene"));
        let err = Scenario::parse("[bogus]\n", "foo.scene").unwrap_err();
        assert!(err.to_string().contains("bogus"));
        assert!(matches!(Scenario::load(Path::new("/no/such.scene")), Err(Error::NotFound(_))));
    }

    proptest! {
        #[test]
        fn steering_has_unit_modulus(theta in -1.5f64..1.5, phi in -1.5f64..1.5, r in 0.5f64..50.0) {
            let s = Scenario::reference().scene;
            for v in rx_steering(theta, r, &s).unwrap().iter().chain(&tx_steering(phi, 8)) {
                prop_assert!((v.norm() - 1.0).abs() < 1e-12);
            }
            let a = tx_steering(phi, 8);
            let z = a[1] / a[0];
            for w in a.windows(2) {
                prop_assert!((w[1] / w[0] - z).norm() < 1e-12);
            }
        }

        #[test]
        fn response_preserves_norm(beta in 0.0f64..12.5, nu in -1.5f64..1.5, seed in any::<u64>()) {
            let cfg = AfdmConfig::desk();
            let x = gen_qam_frame_len(16, seed, cfg.n_sub).unwrap();
            let ch = DafChannel::new(&x, &cfg);
            let b = ch.response(beta, nu);
            let (nb, nx) = (norm_sqr(&b), norm_sqr(&x.symbols));
            prop_assert!((nb - nx).abs() < 1e-10 * nx);
        }
    }
}

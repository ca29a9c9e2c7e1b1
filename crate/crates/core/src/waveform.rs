//! AFDM frame generation and the discrete affine Fourier transform pair.
//!
//! Conventions: `Lambda_c = diag(e^{-j 2 pi c n^2})`, `F` is the unitary DFT,
//! the inverse transform is `s = Lambda_c1^H F^H Lambda_c2^H x` and the forward
//! transform `x = Lambda_c2 F Lambda_c1 s`.

use std::f64::consts::PI;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{cis, Dft, C64};

/// Chirp and budget parameters of one AFDM symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct AfdmConfig {
    /// Subcarrier count `N_c`.
    pub n_sub: usize,
    /// First chirp parameter, exact.
    pub c1: Ratio<i64>,
    /// Second chirp parameter.
    pub c2: f64,
    /// Chirp-periodic prefix length in samples.
    pub l_cpp: usize,
    pub alpha_max: usize,
    /// Doppler guard `k_v`.
    pub k_v: usize,
    pub ell_max: usize,
    /// Subcarrier spacing in Hz.
    pub delta_f: f64,
    /// Carrier frequency in Hz.
    pub fc: f64,
}

/// `c1 = (2(alpha_max + k_v) + 1) / (2 n_sub)`.
pub fn compute_c1(alpha_max: usize, k_v: usize, n_sub: usize) -> Ratio<i64> {
    assert!(n_sub > 0, "n_sub must be positive");
    Ratio::new((2 * (alpha_max + k_v) + 1) as i64, (2 * n_sub) as i64)
}

/// True iff `2(a+k) + l + 2(a+k) l < N` for `a = alpha_max`, `k = k_v`, `l = ell_max`.
pub fn check_diversity(cfg: &AfdmConfig) -> bool {
    let q = 2 * (cfg.alpha_max + cfg.k_v);
    q + cfg.ell_max + q * cfg.ell_max < cfg.n_sub
}

impl AfdmConfig {
    /// Builds a validated configuration with `c1` derived from the budgets.
    pub fn new(
        n_sub: usize,
        alpha_max: usize,
        k_v: usize,
        ell_max: usize,
        l_cpp: usize,
        delta_f: f64,
        fc: f64,
    ) -> Result<Self> {
        if n_sub == 0 {
            return Err(Error::InvalidConfig("n_sub must be positive".into()));
        }
        let cfg = AfdmConfig {
            n_sub,
            c1: compute_c1(alpha_max, k_v, n_sub),
            c2: 0.0,
            l_cpp,
            alpha_max,
            k_v,
            ell_max,
            delta_f,
            fc,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// N=256, alpha_max=1, k_v=3, ell_max=12, CPP 12, 30 kHz spacing at 60 GHz.
    pub fn reference() -> Self {
        Self::new(256, 1, 3, 12, 12, 30e3, 60e9).expect("reference config is valid")
    }

    /// N=64 desk-scale variant of [`AfdmConfig::reference`] with `ell_max = 6`.
    pub fn desk() -> Self {
        Self::new(64, 1, 3, 6, 6, 30e3, 60e9).expect("desk config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !self.n_sub.is_multiple_of(2) {
            return bad("n_sub must be even");
        }
        if self.c1 != compute_c1(self.alpha_max, self.k_v, self.n_sub) {
            return bad("c1 does not match (2(alpha_max+k_v)+1)/(2 n_sub)");
        }
        if (self.c1 * Ratio::from_integer(2 * self.n_sub as i64)).denom() != &1 {
            return bad("2 n_sub c1 must be an integer");
        }
        if !check_diversity(self) {
            return bad("delay/Doppler budgets violate the diversity inequality");
        }
        if self.l_cpp < self.ell_max {
            return bad("l_cpp must be at least ell_max");
        }
        if !(self.delta_f > 0.0) || !(self.fc > 0.0) {
            return bad("delta_f and fc must be positive");
        }
        Ok(())
    }

    pub fn c1_f64(&self) -> f64 {
        *self.c1.numer() as f64 / *self.c1.denom() as f64
    }

    /// `2 N c1`, the DAF-domain spacing between consecutive integer delays.
    pub fn lattice_step(&self) -> usize {
        2 * (self.alpha_max + self.k_v) + 1
    }

    /// `alpha_max + k_v`.
    pub fn doppler_span(&self) -> usize {
        self.alpha_max + self.k_v
    }

    /// Sampling interval `T_s = 1/(N delta_f)`.
    pub fn sample_period(&self) -> f64 {
        1.0 / (self.n_sub as f64 * self.delta_f)
    }

    pub fn wavelength(&self) -> f64 {
        crate::SPEED_OF_LIGHT / self.fc
    }

    /// Diagonal of `Lambda_c1`: `e^{-j 2 pi c1 n^2}` with the exponent reduced
    /// modulo one in exact arithmetic.
    pub fn chirp1(&self) -> Vec<C64> {
        let num = *self.c1.numer() as i128;
        let den = *self.c1.denom() as i128;
        (0..self.n_sub as i128)
            .map(|n| {
                let frac = (num * n * n).rem_euclid(den) as f64 / den as f64;
                cis(-2.0 * PI * frac)
            })
            .collect()
    }

    /// Diagonal of `Lambda_c2`.
    pub fn chirp2(&self) -> Vec<C64> {
        (0..self.n_sub)
            .map(|n| {
                let e = self.c2 * (n * n) as f64;
                cis(-2.0 * PI * (e - e.floor()))
            })
            .collect()
    }
}

/// DAF-domain symbol vector `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DafFrame {
    pub symbols: Vec<C64>,
}

/// Time-domain samples, with or without prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFrame {
    pub samples: Vec<C64>,
}

/// Precomputed chirps and DFT plans for repeated transforms.
#[derive(Clone)]
pub struct Afdm {
    dft: Dft,
    chirp1: Vec<C64>,
    chirp2: Vec<C64>,
}

impl Afdm {
    pub fn new(cfg: &AfdmConfig) -> Self {
        Afdm {
            dft: Dft::new(cfg.n_sub),
            chirp1: cfg.chirp1(),
            chirp2: cfg.chirp2(),
        }
    }

    pub fn n(&self) -> usize {
        self.dft.len()
    }

    pub fn dft(&self) -> &Dft {
        &self.dft
    }

    /// `Lambda_c1^H F^H Lambda_c2^H x`.
    pub fn idaft(&self, x: &[C64]) -> Vec<C64> {
        let mut s: Vec<C64> = x.iter().zip(&self.chirp2).map(|(v, c)| v * c.conj()).collect();
        self.dft.inverse(&mut s);
        s.iter_mut().zip(&self.chirp1).for_each(|(v, c)| *v *= c.conj());
        s
    }

    /// `Lambda_c2 F Lambda_c1 s`.
    pub fn daft(&self, s: &[C64]) -> Vec<C64> {
        let mut x: Vec<C64> = s.iter().zip(&self.chirp1).map(|(v, c)| v * c).collect();
        self.dft.forward(&mut x);
        x.iter_mut().zip(&self.chirp2).for_each(|(v, c)| *v *= c);
        x
    }
}

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::LengthMismatch { expected, got });
    }
    Ok(())
}

pub fn idaft(frame: &DafFrame, cfg: &AfdmConfig) -> Result<TimeFrame> {
    check_len(frame.symbols.len(), cfg.n_sub)?;
    Ok(TimeFrame {
        samples: Afdm::new(cfg).idaft(&frame.symbols),
    })
}

pub fn daft(time: &TimeFrame, cfg: &AfdmConfig) -> Result<DafFrame> {
    check_len(time.samples.len(), cfg.n_sub)?;
    Ok(DafFrame {
        symbols: Afdm::new(cfg).daft(&time.samples),
    })
}

/// Prepends the chirp-periodic prefix `s[n] = s[N+n] e^{-j 2 pi c1 (N^2 + 2 N n)}`.
pub fn append_cpp(time: &TimeFrame, cfg: &AfdmConfig) -> Result<TimeFrame> {
    let n = cfg.n_sub;
    check_len(time.samples.len(), n)?;
    let num = *cfg.c1.numer() as i128;
    let den = *cfg.c1.denom() as i128;
    let mut out = Vec::with_capacity(n + cfg.l_cpp);
    for i in (1..=cfg.l_cpp).rev() {
        let k = -(i as i128);
        let nn = n as i128;
        let frac = (num * (nn * nn + 2 * nn * k)).rem_euclid(den);
        let v = time.samples[n - i];
        // An exactly integer exponent leaves the tail sample untouched.
        out.push(if frac == 0 {
            v
        } else {
            v * cis(-2.0 * PI * frac as f64 / den as f64)
        });
    }
    out.extend_from_slice(&time.samples);
    Ok(TimeFrame { samples: out })
}

/// Square QAM constellation normalized to unit average power.
pub fn qam_constellation(order: u32) -> Result<Vec<C64>> {
    let side = match order {
        4 => 2,
        16 => 4,
        64 => 8,
        _ => return Err(Error::UnsupportedQamOrder(order)),
    };
    let scale = (2.0 * (order as f64 - 1.0) / 3.0).sqrt();
    let levels: Vec<f64> = (0..side).map(|i| (2 * i - (side - 1)) as f64 / scale).collect();
    Ok(levels
        .iter()
        .flat_map(|&re| levels.iter().map(move |&im| C64::new(re, im)))
        .collect())
}

/// Frame of `n_sub` symbols drawn uniformly from the normalized constellation.
pub fn gen_qam_frame_len(order: u32, seed: u64, n_sub: usize) -> Result<DafFrame> {
    let points = qam_constellation(order)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let symbols = (0..n_sub).map(|_| points[rng.random_range(0..points.len())]).collect();
    Ok(DafFrame { symbols })
}

/// Reference-length (256) frame; see [`gen_qam_frame_len`] for other lengths.
pub fn gen_qam_frame(order: u32, seed: u64) -> Result<DafFrame> {
    gen_qam_frame_len(order, seed, 256)
}

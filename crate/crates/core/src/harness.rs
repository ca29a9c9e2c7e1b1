//! Monte Carlo experiment runner: target matching, NMSE, SNR sweeps with a
//! CRLB overlay, result files and the binary tensor format.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crlb::{crlb_for_scenario, CrlbReport, GammaModel};
use crate::error::{Error, Result};
use crate::estimators::{estimate_all_with, EstimatorConfig, Estimates, RankMode, TargetEstimate};
use crate::linalg::C64;
use crate::scene::{synthesize_tensor, Scenario, Target};
use crate::tensor::Tensor3;

/// Estimated parameters scored against the truth.
pub const SCORED: [&str; 4] = ["theta", "phi", "tau", "f_d"];

fn truth_params(t: &Target) -> [f64; 4] {
    [t.theta, t.phi, t.tau, t.f_d]
}

fn est_params(e: &TargetEstimate) -> [f64; 4] {
    [e.theta, e.phi, e.tau, e.f_d]
}

/// `||truth - est||^2 / ||truth||^2`.
pub fn nmse(truth: &[f64], est: &[f64]) -> Result<f64> {
    if truth.len() != est.len() {
        return Err(Error::CountMismatch {
            truth: truth.len(),
            est: est.len(),
        });
    }
    let den: f64 = truth.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::ZeroNormTruth);
    }
    Ok(truth.iter().zip(est).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / den)
}

/// Minimum-cost assignment of estimates to truth targets.
///
/// Cost of pairing truth `r` with estimate `e` is the sum over the four scored
/// parameters of the squared difference divided by that parameter's truth
/// energy. Returns `perm` with `perm[r]` the estimate assigned to truth `r`.
pub fn match_targets(truth: &[Target], est: &[TargetEstimate]) -> Result<(Vec<usize>, f64)> {
    let r = truth.len();
    if r != est.len() {
        return Err(Error::CountMismatch { truth: r, est: est.len() });
    }
    if r > 20 {
        return Err(Error::InvalidConfig(format!("matching supports at most 20 targets, got {r}")));
    }
    let mut energy = [0.0f64; 4];
    for t in truth {
        for (e, v) in energy.iter_mut().zip(truth_params(t)) {
            *e += v * v;
        }
    }
    let cost: Vec<Vec<f64>> = truth
        .iter()
        .map(|t| {
            est.iter()
                .map(|e| {
                    let (a, b) = (truth_params(t), est_params(e));
                    (0..4).map(|p| if energy[p] > 0.0 { (a[p] - b[p]).powi(2) / energy[p] } else { 0.0 }).sum()
                })
                .collect()
        })
        .collect();
    // dp[mask] = best cost assigning truth 0..popcount(mask) to the estimates in mask
    let full = 1usize << r;
    let mut dp = vec![f64::INFINITY; full];
    let mut choice = vec![usize::MAX; full];
    dp[0] = 0.0;
    for mask in 0..full {
        if !dp[mask].is_finite() {
            continue;
        }
        let row = mask.count_ones() as usize;
        if row == r {
            continue;
        }
        for (e, c) in cost[row].iter().enumerate() {
            if mask & (1 << e) == 0 {
                let next = mask | (1 << e);
                let v = dp[mask] + c;
                if v < dp[next] {
                    dp[next] = v;
                    choice[next] = e;
                }
            }
        }
    }
    let mut perm = vec![0; r];
    let mut mask = full - 1;
    for row in (0..r).rev() {
        let e = choice[mask];
        perm[row] = e;
        mask &= !(1 << e);
    }
    Ok((perm, dp[full - 1]))
}

/// Per-parameter NMSE of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamNmse {
    pub theta: f64,
    pub phi: f64,
    pub tau: f64,
    pub f_d: f64,
}

impl ParamNmse {
    pub fn get(&self, p: usize) -> f64 {
        [self.theta, self.phi, self.tau, self.f_d][p]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub mdl_rank: Option<usize>,
    pub cpd_residual: f64,
    pub refine_iterations: usize,
}

/// Matched estimates of one tensor.
#[derive(Debug, Clone)]
pub struct EstimationReport {
    pub estimates: Estimates,
    /// `permutation[r]` is the estimate matched to truth target `r`.
    pub permutation: Vec<usize>,
    pub nmse: ParamNmse,
    pub diagnostics: Diagnostics,
}

impl EstimationReport {
    /// Estimates reordered to follow the truth targets.
    pub fn matched(&self) -> Vec<&TargetEstimate> {
        self.permutation.iter().map(|&i| &self.estimates.targets[i]).collect()
    }
}

pub fn score(truth: &[Target], estimates: Estimates, t_outer: usize) -> Result<EstimationReport> {
    let (permutation, _) = match_targets(truth, &estimates.targets)?;
    let mut vals = [0.0; 4];
    for (p, v) in vals.iter_mut().enumerate() {
        let t: Vec<f64> = truth.iter().map(|x| truth_params(x)[p]).collect();
        let e: Vec<f64> = permutation.iter().map(|&i| est_params(&estimates.targets[i])[p]).collect();
        *v = nmse(&t, &e)?;
    }
    let diagnostics = Diagnostics {
        mdl_rank: estimates.mdl_rank,
        cpd_residual: estimates.cpd_residual,
        refine_iterations: t_outer,
    };
    Ok(EstimationReport {
        estimates,
        permutation,
        nmse: ParamNmse {
            theta: vals[0],
            phi: vals[1],
            tau: vals[2],
            f_d: vals[3],
        },
        diagnostics,
    })
}

/// CRLB-implied NMSE floor per scored parameter: summed bounds over truth energy.
pub fn crlb_floor(report: &CrlbReport, truth: &[Target]) -> [f64; 4] {
    let bounds = [&report.crlb_theta, &report.crlb_phi, &report.crlb_tau, &report.crlb_fd];
    let mut out = [0.0; 4];
    for (p, b) in bounds.iter().enumerate() {
        let den: f64 = truth.iter().map(|t| truth_params(t)[p].powi(2)).sum();
        out[p] = b.iter().sum::<f64>() / den;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub scene_file: PathBuf,
    /// `f64::INFINITY` runs noise-free trials.
    pub snr_grid_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// `None` uses the true target count.
    pub rank_mode: Option<RankMode>,
    pub t_outer: usize,
    /// Path prefix of the result files.
    pub outputs: Option<PathBuf>,
}

impl ExperimentPlan {
    pub fn new(scene_file: impl Into<PathBuf>) -> Self {
        ExperimentPlan {
            scene_file: scene_file.into(),
            snr_grid_db: vec![0.0, 10.0, 20.0, 30.0],
            trials: 500,
            seed: 0,
            rank_mode: None,
            t_outer: 3,
            outputs: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::InvalidConfig("SNR grid is empty".into()));
        }
        if self.t_outer == 0 {
            return Err(Error::InvalidConfig("t_outer must be at least 1".into()));
        }
        Ok(())
    }
}

/// One output row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub param: String,
    pub nmse_mean: f64,
    pub nmse_stderr: f64,
    pub crlb: f64,
    pub trials_ok: usize,
    pub trials_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub snr_db: f64,
    pub trial: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<TrialFailure>,
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Frame and noise seeds of one trial, a pure function of its coordinates.
pub fn trial_seeds(seed: u64, snr_index: usize, trial: usize) -> (u64, u64) {
    let base = mix(mix(seed ^ mix(snr_index as u64)) ^ trial as u64);
    (mix(base ^ 1), mix(base ^ 2))
}

/// One synthesized and estimated trial.
pub fn run_trial(sc: &Scenario, snr_db: f64, frame_seed: u64, noise_seed: u64, rank: RankMode, opts: &EstimatorConfig) -> Result<EstimationReport> {
    let frame = sc.frame_with_seed(frame_seed)?;
    let snr = snr_db.is_finite().then_some(snr_db);
    let syn = synthesize_tensor(&sc.scene, &frame, &sc.afdm, snr, noise_seed)?;
    let y = syn.noisy.unwrap_or(syn.clean);
    let est = estimate_all_with(&y, &frame, &sc.afdm, &sc.scene, rank, opts)?;
    score(&sc.scene.targets, est, opts.t_outer)
}

pub fn run_sweep(plan: &ExperimentPlan) -> Result<SweepResult> {
    let sc = Scenario::load(&plan.scene_file)?;
    let res = run_sweep_scenario(&sc, plan)?;
    if let Some(prefix) = &plan.outputs {
        write_csv(&res.rows, &prefix.with_extension("csv"))?;
        write_json(&res.rows, &prefix.with_extension("json"))?;
    }
    Ok(res)
}

/// Sweep on an in-memory scenario. The CRLB overlay uses the scenario's own
/// frame; trials draw fresh frames.
pub fn run_sweep_scenario(sc: &Scenario, plan: &ExperimentPlan) -> Result<SweepResult> {
    plan.validate()?;
    sc.validate()?;
    let truth = &sc.scene.targets;
    let rank = plan.rank_mode.unwrap_or(RankMode::Fixed(truth.len()));
    let opts = EstimatorConfig {
        t_outer: plan.t_outer,
        ..Default::default()
    };
    let frame = sc.frame()?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (si, &snr) in plan.snr_grid_db.iter().enumerate() {
        let outcomes: Vec<std::result::Result<ParamNmse, String>> = (0..plan.trials)
            .into_par_iter()
            .map(|trial| {
                let (fs, ns) = trial_seeds(plan.seed, si, trial);
                run_trial(sc, snr, fs, ns, rank, &opts).map(|r| r.nmse).map_err(|e| e.to_string())
            })
            .collect();
        let floor = if snr.is_finite() {
            crlb_floor(&crlb_for_scenario(sc, &frame, snr, GammaModel::Printed)?, truth)
        } else {
            [0.0; 4]
        };
        let ok: Vec<ParamNmse> = outcomes.iter().filter_map(|o| o.as_ref().ok().copied()).collect();
        for (trial, o) in outcomes.iter().enumerate() {
            if let Err(reason) = o {
                failures.push(TrialFailure {
                    snr_db: snr,
                    trial,
                    reason: reason.clone(),
                });
            }
        }
        for (p, name) in SCORED.iter().enumerate() {
            let vals: Vec<f64> = ok.iter().map(|n| n.get(p)).collect();
            let (mean, stderr) = mean_stderr(&vals);
            rows.push(SweepRow {
                snr_db: snr,
                param: name.to_string(),
                nmse_mean: mean,
                nmse_stderr: stderr,
                crlb: floor[p],
                trials_ok: ok.len(),
                trials_failed: plan.trials - ok.len(),
            });
        }
    }
    Ok(SweepResult { rows, failures })
}

/// Sample mean and standard error of the mean; NaN mean when empty.
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn write_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<SweepRow>, _>>()?;
    Ok(rows)
}

pub fn write_json(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, rows)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Magic bytes of the tensor file.
pub const TENSOR_MAGIC: &[u8; 8] = b"AFDMTNS1";

/// Encodes `magic, g, n, k` (u64 LE) and the entries as LE `re, im` pairs in
/// storage order `g + G (m + N k)`.
pub fn encode_tensor(t: &Tensor3) -> Vec<u8> {
    let (g, n, k) = t.dims();
    let mut out = Vec::with_capacity(32 + 16 * t.data().len());
    out.extend_from_slice(TENSOR_MAGIC);
    for d in [g, n, k] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor3> {
    if bytes.len() < 32 || &bytes[..8] != TENSOR_MAGIC {
        return Err(Error::BadTensorFile("missing magic header".into()));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().expect("8 bytes")) as usize;
    let (g, n, k) = (word(0), word(1), word(2));
    let count = g
        .checked_mul(n)
        .and_then(|v| v.checked_mul(k))
        .ok_or_else(|| Error::BadTensorFile("dimensions overflow".into()))?;
    if bytes.len() - 32 != count * 16 {
        return Err(Error::BadTensorFile(format!("expected {} data bytes, found {}", count * 16, bytes.len() - 32)));
    }
    let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let data = (0..count).map(|i| C64::new(f(32 + 16 * i), f(40 + 16 * i))).collect();
    Tensor3::from_data(g, n, k, data)
}

pub fn write_tensor(t: &Tensor3, path: &Path) -> Result<()> {
    fs::write(path, encode_tensor(t))?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<Tensor3> {
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    decode_tensor(&fs::read(path)?)
}

/// Truth sidecar path: the tensor path with `.scene` appended.
pub fn sidecar_path(tensor: &Path) -> PathBuf {
    let mut s = tensor.as_os_str().to_owned();
    s.push(".scene");
    PathBuf::from(s)
}

/// Synthesizes the scenario's tensor (noisy when it carries a noise record)
/// and writes it with its sidecar.
pub fn simulate_to_file(sc: &Scenario, path: &Path) -> Result<Tensor3> {
    sc.validate()?;
    let frame = sc.frame()?;
    let (snr, seed) = match sc.noise {
        Some(nr) => (Some(nr.snr_db), nr.seed),
        None => (None, 0),
    };
    let syn = synthesize_tensor(&sc.scene, &frame, &sc.afdm, snr, seed)?;
    let t = syn.noisy.unwrap_or(syn.clean);
    write_tensor(&t, path)?;
    fs::write(sidecar_path(path), sc.to_text())?;
    Ok(t)
}

/// Loads a stored tensor and its sidecar and runs the estimator.
pub fn estimate_file(path: &Path, rank: Option<RankMode>, opts: &EstimatorConfig) -> Result<(Scenario, EstimationReport)> {
    let t = read_tensor(path)?;
    let sc = Scenario::load(&sidecar_path(path))?;
    let frame = sc.frame()?;
    let rank = rank.unwrap_or(RankMode::Fixed(sc.scene.targets.len()));
    let est = estimate_all_with(&t, &frame, &sc.afdm, &sc.scene, rank, opts)?;
    let rep = if est.targets.len() == sc.scene.targets.len() {
        score(&sc.scene.targets, est, opts.t_outer)?
    } else {
        let diagnostics = Diagnostics {
            mdl_rank: est.mdl_rank,
            cpd_residual: est.cpd_residual,
            refine_iterations: opts.t_outer,
        };
        EstimationReport {
            permutation: (0..est.targets.len()).collect(),
            estimates: est,
            nmse: ParamNmse {
                theta: f64::NAN,
                phi: f64::NAN,
                tau: f64::NAN,
                f_d: f64::NAN,
            },
            diagnostics,
        }
    };
    Ok((sc, rep))
}

/// Outcome of one built-in oracle check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfCheck {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Fast oracle checks: transform round trip, dual-path synthesis, noise-free
/// estimation, CRLB derivatives against finite differences and the tensor codec.
pub fn selftest() -> Vec<SelfCheck> {
    let mut out = Vec::new();
    let mut push = |name, r: Result<(bool, String)>| {
        let (pass, detail) = r.unwrap_or_else(|e| (false, e.to_string()));
        out.push(SelfCheck { name, pass, detail });
    };
    let sc = Scenario::desk();
    push("transform round trip", (|| {
        let mut worst = 0.0f64;
        for seed in 0..10 {
            let x = sc.frame_with_seed(seed)?;
            let back = crate::waveform::daft(&crate::waveform::idaft(&x, &sc.afdm)?, &sc.afdm)?;
            for (a, b) in back.symbols.iter().zip(&x.symbols) {
                worst = worst.max((a - b).norm());
            }
        }
        Ok((worst < 1e-10, format!("max error {worst:.1e}")))
    })());
    push("dual-path synthesis", (|| {
        let x = sc.frame()?;
        let a = synthesize_tensor(&sc.scene, &x, &sc.afdm, None, 0)?.clean;
        let b = crate::scene::synthesize_time_domain(&sc.scene, &x, &sc.afdm)?;
        let e = a.rel_diff(&b);
        Ok((e <= 1e-8, format!("relative error {e:.1e}")))
    })());
    push("noise-free estimation", (|| {
        let rep = run_trial(&sc, f64::INFINITY, sc.frame_seed, 0, RankMode::Mdl, &EstimatorConfig::default())?;
        let worst = (0..4).map(|p| rep.nmse.get(p)).fold(0.0, f64::max);
        Ok((worst < 1e-6, format!("worst NMSE {worst:.1e}")))
    })());
    push("CRLB derivatives", (|| {
        let x = sc.frame()?;
        let ch = crate::scene::DafChannel::new(&x, &sc.afdm);
        let mut worst = 0.0f64;
        for t in &sc.scene.targets {
            let (beta, nu) = (t.beta(&sc.afdm), t.nu(&sc.afdm));
            let h = 1e-6;
            let (p, m) = (ch.response(beta + h, nu), ch.response(beta - h, nu));
            let an = crate::crlb::d_b_dtau(t, &x, &sc.afdm);
            let ts = sc.afdm.sample_period();
            let num: f64 = an.iter().zip(p.iter().zip(&m)).map(|(a, (u, v))| (a - (u - v) / (2.0 * h * ts)).norm_sqr()).sum();
            let den: f64 = an.iter().map(|a| a.norm_sqr()).sum();
            worst = worst.max((num / den).sqrt());
            let (p, m) = (crate::scene::rx_steering(t.theta + h, t.range, &sc.scene)?, crate::scene::rx_steering(t.theta - h, t.range, &sc.scene)?);
            let an = crate::crlb::d_ar_dtheta(t, &sc.scene)?;
            let num: f64 = an.iter().zip(p.iter().zip(&m)).map(|(a, (u, v))| (a - (u - v) / (2.0 * h)).norm_sqr()).sum();
            let den: f64 = an.iter().map(|a| a.norm_sqr()).sum();
            worst = worst.max((num / den).sqrt());
        }
        Ok((worst < 1e-6, format!("worst relative error {worst:.1e}")))
    })());
    push("tensor codec", (|| {
        let x = sc.frame()?;
        let t = synthesize_tensor(&sc.scene, &x, &sc.afdm, Some(10.0), 1)?.noisy.unwrap_or_else(|| Tensor3::zeros(1, 1, 1));
        let back = decode_tensor(&encode_tensor(&t))?;
        let exact = back.data().iter().zip(t.data()).all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits());
        Ok((exact && back.dims() == t.dims(), format!("bit-exact {exact}")))
    })());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn est_of(t: &Target) -> TargetEstimate {
        TargetEstimate {
            theta: t.theta,
            phi: t.phi,
            tau: t.tau,
            f_d: t.f_d,
            beta: 0.0,
            nu: 0.0,
            loc: 0.0,
            generator: C64::new(1.0, 0.0),
        }
    }

    fn brute(truth: &[Target], est: &[TargetEstimate]) -> f64 {
        fn rec(row: usize, used: &mut Vec<bool>, acc: f64, f: &dyn Fn(usize, usize) -> f64, best: &mut f64) {
            if row == used.len() {
                *best = best.min(acc);
                return;
            }
            for e in 0..used.len() {
                if !used[e] {
                    used[e] = true;
                    rec(row + 1, used, acc + f(row, e), f, best);
                    used[e] = false;
                }
            }
        }
        let mut energy = [0.0; 4];
        for t in truth {
            for p in 0..4 {
                energy[p] += truth_params(t)[p].powi(2);
            }
        }
        let f = |r: usize, e: usize| (0..4).map(|p| (truth_params(&truth[r])[p] - est_params(&est[e])[p]).powi(2) / energy[p]).sum::<f64>();
        let mut best = f64::INFINITY;
        rec(0, &mut vec![false; truth.len()], 0.0, &f, &mut best);
        best
    }

    #[test]
    fn nmse_examples() {
        assert_eq!(nmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(nmse(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!((nmse(&[1.0, 2.0], &[1.0, 3.0]).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(nmse(&[0.0], &[1.0]), Err(Error::ZeroNormTruth)));
        assert!(nmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn matching_examples() {
        let truth = Scenario::reference().scene.targets;
        let est: Vec<TargetEstimate> = truth.iter().map(est_of).collect();
        let (perm, cost) = match_targets(&truth, &est).unwrap();
        assert_eq!(perm, vec![0, 1, 2]);
        assert_eq!(cost, 0.0);
        let rev: Vec<TargetEstimate> = est.iter().rev().cloned().collect();
        assert_eq!(match_targets(&truth, &rev).unwrap().0, vec![2, 1, 0]);
        assert!(matches!(match_targets(&truth, &est[..2]), Err(Error::CountMismatch { .. })));
    }

    #[test]
    fn trial_seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for s in 0..4 {
            for t in 0..500 {
                let (a, b) = trial_seeds(7, s, t);
                assert!(seen.insert(a) && seen.insert(b));
            }
        }
        assert_eq!(trial_seeds(7, 2, 9), trial_seeds(7, 2, 9));
    }

    #[test]
    fn tensor_codec_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = Tensor3::from_fn(3, 4, 2, |_, _, _| C64::new(rng.random::<f64>() - 0.5, f64::MIN_POSITIVE * rng.random::<f64>()));
        let back = decode_tensor(&encode_tensor(&t)).unwrap();
        assert_eq!(back.dims(), (3, 4, 2));
        for (a, b) in t.data().iter().zip(back.data()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        let bytes = encode_tensor(&t);
        assert!(decode_tensor(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_tensor(b"nonsense").is_err());
    }

    #[test]
    fn noise_free_desk_trial() {
        let sc = Scenario::desk();
        let rep = run_trial(&sc, f64::INFINITY, 5, 0, RankMode::Fixed(3), &EstimatorConfig::default()).unwrap();
        for p in 0..4 {
            assert!(rep.nmse.get(p) < 1e-6, "{:?}", rep.nmse);
        }
        let mut seen = rep.permutation.clone();
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2]);
    }

    #[test]
    fn selftest_passes() {
        for c in selftest() {
            assert!(c.pass, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn mean_stderr_examples() {
        assert_eq!(mean_stderr(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert!(mean_stderr(&[]).0.is_nan());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matching_is_optimal(seed in any::<u64>(), r in 1usize..7, spread in 0.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth: Vec<Target> = (0..r)
                .map(|_| Target {
                    theta: rng.random::<f64>() - 0.5,
                    phi: rng.random::<f64>() - 0.5,
                    range: f64::INFINITY,
                    tau: rng.random::<f64>() * 1e-7,
                    f_d: rng.random::<f64>() * 1e4 - 5e3,
                    gamma: C64::new(1.0, 0.0),
                })
                .collect();
            let mut est: Vec<TargetEstimate> = truth
                .iter()
                .map(|t| {
                    let mut e = est_of(t);
                    e.theta += spread * (rng.random::<f64>() - 0.5);
                    e.tau += spread * 1e-7 * (rng.random::<f64>() - 0.5);
                    e
                })
                .collect();
            est.reverse();
            let (perm, cost) = match_targets(&truth, &est).unwrap();
            let mut sorted = perm.clone();
            sorted.sort();
            prop_assert_eq!(sorted, (0..r).collect::<Vec<_>>());
            prop_assert!((cost - brute(&truth, &est)).abs() <= 1e-12 * cost.max(1.0));
        }

        #[test]
        fn nmse_nonnegative(v in proptest::collection::vec(-10.0f64..10.0, 1..8), seed in any::<u64>()) {
            prop_assume!(v.iter().any(|x| *x != 0.0));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e: Vec<f64> = v.iter().map(|x| x + rng.random::<f64>() - 0.5).collect();
            prop_assert!(nmse(&v, &e).unwrap() >= 0.0);
        }
    }
}

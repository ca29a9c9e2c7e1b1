use std::path::Path;

use afdm_isac::estimators::{decode_integer, pulse_compress, refine_delay_doppler, RankMode};
use afdm_isac::harness::{run_sweep, run_sweep_scenario, ExperimentPlan, SweepRow};
use afdm_isac::linalg::C64;
use afdm_isac::scene::{DafChannel, Scenario};
use afdm_isac::waveform::{gen_qam_frame_len, AfdmConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn refinement_at_15db_lands_within_a_hundredth_of_a_bin() {
    let cfg = AfdmConfig::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let trials = 200;
    let mut good = 0;
    for i in 0..trials {
        let beta = 0.5 + rng.random::<f64>() * 11.5;
        let nu = -1.5 + 3.0 * rng.random::<f64>();
        let x = gen_qam_frame_len(16, 10_000 + i as u64, 256).unwrap();
        let mut b = DafChannel::new(&x, &cfg).response(beta, nu);
        let p = b.iter().map(|v| v.norm_sqr()).sum::<f64>() / b.len() as f64;
        let sd = (p / 10f64.powf(1.5) / 2.0).sqrt();
        for v in b.iter_mut() {
            let (re, im): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            *v += C64::new(re, im) * sd;
        }
        let pc = pulse_compress(&b, &x, &cfg).unwrap();
        let est = refine_delay_doppler(&b, &x, &cfg, decode_integer(pc.peak as f64, &cfg), 3).unwrap();
        if (est.beta_hat - beta).abs() < 1e-2 && (est.nu_hat - nu).abs() < 1e-2 {
            good += 1;
        }
    }
    assert!(good * 10 >= trials * 9, "{good}/{trials}");
}

fn desk_plan() -> ExperimentPlan {
    ExperimentPlan {
        snr_grid_db: vec![5.0, 25.0],
        trials: 6,
        seed: 77,
        ..ExperimentPlan::new(Path::new(env!("CARGO_MANIFEST_DIR")).join("scenes/desk.scene"))
    }
}

#[test]
fn sweep_is_deterministic() {
    let plan = desk_plan();
    let a = run_sweep(&plan).unwrap();
    let b = run_sweep(&plan).unwrap();
    assert_eq!(a.rows, b.rows);
    let mut other = plan.clone();
    other.seed = 78;
    assert_ne!(run_sweep(&other).unwrap().rows, a.rows);
}

#[test]
fn sweep_nmse_sits_above_the_floor_and_falls_with_snr() {
    let res = run_sweep_scenario(&Scenario::desk(), &desk_plan()).unwrap();
    assert_eq!(res.rows.len(), 8);
    assert!(res.failures.is_empty());
    for r in &res.rows {
        assert_eq!(r.trials_ok, 6);
        assert!(r.crlb > 0.0 && r.nmse_mean > 0.0);
    }
    for p in 0..4 {
        assert!(res.rows[4 + p].nmse_mean < res.rows[p].nmse_mean, "{}", res.rows[p].param);
    }
}

#[test]
fn sweep_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = desk_plan();
    plan.trials = 2;
    plan.rank_mode = Some(RankMode::Fixed(3));
    plan.outputs = Some(dir.path().join("sweep"));
    let res = run_sweep(&plan).unwrap();
    let back = afdm_isac::harness::read_csv(&dir.path().join("sweep.csv")).unwrap();
    let json: Vec<SweepRow> = serde_json::from_str(&std::fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
    for got in [back, json] {
        assert_eq!(got.len(), res.rows.len());
        for (a, b) in got.iter().zip(&res.rows) {
            assert_eq!((a.snr_db, &a.param, a.trials_ok, a.trials_failed), (b.snr_db, &b.param, b.trials_ok, b.trials_failed));
            for (x, y) in [(a.nmse_mean, b.nmse_mean), (a.nmse_stderr, b.nmse_stderr), (a.crlb, b.crlb)] {
                assert!((x - y).abs() <= 1e-14 * y.abs(), "{x} vs {y}");
            }
        }
    }
}

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use afdm_isac::crlb::{crlb_for_scenario, GammaModel};
use afdm_isac::error::{Error, Result};
use afdm_isac::estimators::{EstimatorConfig, RankMode};
use afdm_isac::harness::{self, ExperimentPlan, SweepRow};
use afdm_isac::scene::{NoiseRecord, Scenario};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "afdm-isac", version, about = "AFDM sensing: simulation, estimation, CRLB and Monte Carlo sweeps")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a received tensor and write it with a truth sidecar.
    Simulate {
        /// Scene file; the built-in reference scene when omitted.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// SNR in dB, or `inf` for a noise-free tensor.
        #[arg(long, default_value = "inf")]
        snr: f64,
        /// Noise seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate all targets from a stored tensor (reads `<tensor>.scene`).
    Estimate {
        tensor: PathBuf,
        /// Target count, or `mdl`; the sidecar's target count when omitted.
        #[arg(long, value_parser = parse_rank)]
        rank: Option<RankMode>,
        #[arg(long, default_value_t = 3)]
        t_outer: usize,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cramer-Rao bounds of a scene at one SNR.
    Crlb {
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, default_value_t = 15.0)]
        snr: f64,
        /// Treat the reflection coefficient as two real parameters.
        #[arg(long)]
        split_gamma: bool,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo NMSE sweep over SNR with the CRLB floor.
    Sweep {
        #[arg(long)]
        scene: PathBuf,
        /// Comma-separated SNR grid in dB.
        #[arg(long, value_delimiter = ',', default_value = "0,10,20,30")]
        snr: Vec<f64>,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = parse_rank)]
        rank: Option<RankMode>,
        #[arg(long, default_value_t = 3)]
        t_outer: usize,
        /// Output prefix; writes `<out>.csv` and `<out>.json` unless
        /// `--format` picks one. Prints CSV to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Run the built-in oracle checks.
    Selftest,
}

fn parse_rank(s: &str) -> std::result::Result<RankMode, String> {
    if s.eq_ignore_ascii_case("mdl") {
        return Ok(RankMode::Mdl);
    }
    match s.parse::<usize>() {
        Ok(0) => Err("rank must be at least 1".into()),
        Ok(r) => Ok(RankMode::Fixed(r)),
        Err(_) => Err(format!("expected a positive integer or `mdl`, got `{s}`")),
    }
}

fn load_scene(path: Option<&Path>) -> Result<Scenario> {
    match path {
        Some(p) => Scenario::load(p),
        None => Ok(Scenario::reference()),
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn json_f64(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        serde_json::Value::Null
    }
}

fn simulate(scene: Option<&Path>, snr: f64, seed: u64, out: &Path) -> Result<()> {
    let mut sc = load_scene(scene)?;
    sc.noise = snr.is_finite().then_some(NoiseRecord { snr_db: snr, seed });
    let t = harness::simulate_to_file(&sc, out)?;
    let (g, n, k) = t.dims();
    eprintln!("wrote {} ({g} x {n} x {k}) and {}", out.display(), harness::sidecar_path(out).display());
    Ok(())
}

fn estimate(tensor: &Path, rank: Option<RankMode>, t_outer: usize, format: Format, out: Option<&Path>) -> Result<()> {
    if t_outer == 0 {
        return Err(Error::InvalidConfig("t_outer must be at least 1".into()));
    }
    let opts = EstimatorConfig {
        t_outer,
        ..Default::default()
    };
    let (_, rep) = harness::estimate_file(tensor, rank, &opts)?;
    let est = &rep.estimates;
    let text = match format {
        Format::Csv => {
            let mut s = String::from("target,theta,phi,tau,f_d,beta,nu\n");
            for (r, &i) in rep.permutation.iter().enumerate() {
                let e = &est.targets[i];
                writeln!(s, "{r},{},{},{},{},{},{}", e.theta, e.phi, e.tau, e.f_d, e.beta, e.nu).expect("string write");
            }
            s
        }
        Format::Json => {
            let targets: Vec<_> = rep
                .permutation
                .iter()
                .map(|&i| {
                    let e = &est.targets[i];
                    json!({
                        "theta": e.theta, "phi": e.phi, "tau": e.tau, "f_d": e.f_d,
                        "beta": e.beta, "nu": e.nu, "loc": e.loc,
                    })
                })
                .collect();
            let v = json!({
                "rank": est.rank,
                "mdl_rank": est.mdl_rank,
                "cpd_residual": json_f64(est.cpd_residual),
                "singular_values": &est.singular_values[..est.singular_values.len().min(16)],
                "smoothing": [est.plan.k3, est.plan.l3],
                "targets": targets,
                "nmse": {
                    "theta": json_f64(rep.nmse.theta),
                    "phi": json_f64(rep.nmse.phi),
                    "tau": json_f64(rep.nmse.tau),
                    "f_d": json_f64(rep.nmse.f_d),
                },
            });
            serde_json::to_string_pretty(&v)? + "\n"
        }
    };
    emit(&text, out)
}

fn crlb(scene: Option<&Path>, snr: f64, split: bool, format: Format, out: Option<&Path>) -> Result<()> {
    let sc = load_scene(scene)?;
    sc.validate()?;
    let model = if split { GammaModel::RealImagSplit } else { GammaModel::Printed };
    let rep = crlb_for_scenario(&sc, &sc.frame()?, snr, model)?;
    let text = match format {
        Format::Csv => {
            let mut s = String::from("param,target,bound\n");
            for (name, vals) in rep.bounds() {
                for (r, v) in vals.iter().enumerate() {
                    writeln!(s, "{name},{r},{v:e}").expect("string write");
                }
            }
            s
        }
        Format::Json => {
            let mut bounds = serde_json::Map::new();
            for (name, vals) in rep.bounds() {
                bounds.insert(name.into(), vals.iter().map(|&v| json_f64(v)).collect());
            }
            let v = json!({
                "snr_db": snr,
                "condition_number": json_f64(rep.condition_number),
                "singular": rep.singular,
                "bounds": bounds,
            });
            serde_json::to_string_pretty(&v)? + "\n"
        }
    };
    if rep.singular {
        eprintln!("warning: FIM is singular; bounds use the pseudo-inverse");
    }
    emit(&text, out)
}

fn rows_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn sweep(plan: ExperimentPlan, format: Option<Format>) -> Result<()> {
    let sc = Scenario::load(&plan.scene_file)?;
    let res = harness::run_sweep_scenario(&sc, &plan)?;
    for f in &res.failures {
        eprintln!("trial {} at {} dB failed: {}", f.trial, f.snr_db, f.reason);
    }
    match &plan.outputs {
        Some(prefix) => {
            if !matches!(format, Some(Format::Json)) {
                let p = prefix.with_extension("csv");
                harness::write_csv(&res.rows, &p)?;
                eprintln!("wrote {}", p.display());
            }
            if !matches!(format, Some(Format::Csv)) {
                let p = prefix.with_extension("json");
                harness::write_json(&res.rows, &p)?;
                eprintln!("wrote {}", p.display());
            }
        }
        None => match format {
            Some(Format::Json) => println!("{}", serde_json::to_string_pretty(&res.rows)?),
            _ => print!("{}", rows_csv(&res.rows)?),
        },
    }
    Ok(())
}

fn selftest() -> bool {
    let checks = harness::selftest();
    for c in &checks {
        println!("{:<24} {}  {}", c.name, if c.pass { "ok" } else { "FAILED" }, c.detail);
    }
    checks.iter().all(|c| c.pass)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Simulate { scene, snr, seed, out } => simulate(scene.as_deref(), snr, seed, &out)?,
        Cmd::Estimate {
            tensor,
            rank,
            t_outer,
            format,
            out,
        } => estimate(&tensor, rank, t_outer, format, out.as_deref())?,
        Cmd::Crlb {
            scene,
            snr,
            split_gamma,
            format,
            out,
        } => crlb(scene.as_deref(), snr, split_gamma, format, out.as_deref())?,
        Cmd::Sweep {
            scene,
            snr,
            trials,
            seed,
            rank,
            t_outer,
            out,
            format,
        } => {
            let plan = ExperimentPlan {
                snr_grid_db: snr,
                trials,
                seed,
                rank_mode: rank,
                t_outer,
                outputs: out,
                ..ExperimentPlan::new(scene)
            };
            sweep(plan, format)?
        }
        Cmd::Selftest => return Ok(selftest()),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NotFound(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

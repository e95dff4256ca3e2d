use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use xnet_core::sim::{read_csv, run_sweep_with, write_csv, SimConfig};
use xnet_core::stbc::{code_by_name, make_perfect3, make_replicated_unchecked};
use xnet_core::verify::{
    check_cc, check_full_rank_code, estimate_diversity_slope, heq_rank_stats, lemma2_sweep,
};
use xnet_core::xnetwork::{appendix_c_closed_form, appendix_c_identity};
use xnet_core::{Constellation, Error, StbcCode};

#[derive(Parser)]
#[command(name = "xnet", version, about = "MIMO X-network simulator and code checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a BER sweep described by a TOML config and write it as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `workers` from the config.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        quiet: bool,
    },
    /// Run one algebraic check and print a single PASS/FAIL line.
    Verify {
        check: Check,
        #[arg(long, default_value = "lowdelay3")]
        code: String,
        #[arg(long, default_value = "qpsk-rot")]
        constellation: String,
        #[arg(long, default_value_t = PI / 4.0)]
        theta: f64,
        /// Channel draws for `rank`, unitaries per size for `lemma2`.
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the structured report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Full-rank statistics of both receivers' effective channels.
    Rankstats {
        #[arg(long, default_value = "lowdelay3")]
        code: String,
        #[arg(long, default_value_t = PI / 4.0)]
        theta: f64,
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Replicate the 3-antenna perfect code with P = I instead of `--code`.
        #[arg(long)]
        identity_p: bool,
    },
    /// Fit the diversity slope of a sweep CSV over its highest-SNR points.
    Slope {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 3)]
        window: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    Cc,
    FullRank,
    Lemma2,
    AppendixC,
    Rank,
}

impl Check {
    fn name(self) -> &'static str {
        match self {
            Check::Cc => "cc",
            Check::FullRank => "full-rank",
            Check::Lemma2 => "lemma2",
            Check::AppendixC => "appendix-c",
            Check::Rank => "rank",
        }
    }
}

enum Failure {
    Error(Error),
    VerifyFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Parse { .. } | Error::UnknownName(_) | Error::UnsupportedSize { .. } => 2,
        Error::CodebookTooLarge { .. } => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate { config, out, workers, quiet } => simulate(&config, &out, workers, quiet),
        Command::Verify { check, code, constellation, theta, draws, seed, report } => {
            verify(check, &code, &constellation, theta, draws, seed, report.as_deref())
        }
        Command::Rankstats { code, theta, draws, seed, identity_p } => rankstats(&code, theta, draws, seed, identity_p),
        Command::Slope { input, window } => slope(&input, window),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::VerifyFailed) => ExitCode::from(3),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn simulate(config: &Path, out: &Path, workers: Option<usize>, quiet: bool) -> Result<(), Failure> {
    let mut cfg = SimConfig::from_file(config).map_err(|e| match e {
        Error::Io(msg) => Error::Config { field: "<file>".into(), message: msg },
        other => other,
    })?;
    if let Some(w) = workers {
        cfg.workers = w;
    }
    let result = run_sweep_with(&cfg, |p| {
        if !quiet {
            eprintln!(
                "{:>6.2} dB  trials {:>9}  bit errors {:>9}  ber {:.3e}  cwer {:.3e}",
                p.snr_db,
                p.trials,
                p.bit_errors,
                p.ber(),
                p.cwer()
            );
        }
    })?;
    write_csv(&result, out)?;
    Ok(())
}

fn resolve_code(name: &str, theta: f64) -> Result<StbcCode, Error> {
    code_by_name(name, theta)
}

fn verify(
    check: Check,
    code: &str,
    constellation: &str,
    theta: f64,
    draws: Option<usize>,
    seed: u64,
    report_path: Option<&Path>,
) -> Result<(), Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (pass, summary, report): (bool, String, Value) = match check {
        Check::Cc => {
            let r = check_cc(&resolve_code(code, theta)?)?;
            (r.pass, format!("{code} max_residual={:.3e}", r.max_residual), json!(r))
        }
        Check::FullRank => {
            let c = Constellation::by_name(constellation)?;
            let r = check_full_rank_code(&resolve_code(code, theta)?, &c)?;
            let summary = format!(
                "{code} {constellation} min_rank={} tuples={}",
                r.min_rank_found, r.tuples_checked
            );
            (r.pass, summary, json!(r))
        }
        Check::Lemma2 => {
            let per_size = draws.unwrap_or(100);
            let r = lemma2_sweep(&[2, 3, 4, 5, 6], per_size, 8, &mut rng)?;
            let summary = format!(
                "instances={} feasible={} disagreements={} witness_failures={}",
                r.instances, r.feasible, r.disagreements, r.witness_failures
            );
            (r.pass(), summary, json!(r))
        }
        Check::AppendixC => {
            let worst = (0..100)
                .map(|i| {
                    let t = -PI + 2.0 * PI * i as f64 / 99.0;
                    (appendix_c_identity(t) - appendix_c_closed_form(t)).norm()
                })
                .fold(0.0, f64::max);
            let value = appendix_c_identity(0.0);
            let summary = format!("max_error={worst:.3e} det(theta=0)={:.6}", value.re);
            (worst <= 1e-9, summary, json!({ "max_error": worst, "det_at_zero": [value.re, value.im] }))
        }
        Check::Rank => {
            let r = heq_rank_stats(&resolve_code(code, theta)?, draws.unwrap_or(1000), &mut rng)?;
            let summary = format!("{code} full_rank_fraction={} min_rank={}", r.full_rank_fraction, r.min_rank);
            (r.full_rank_fraction == 1.0, summary, json!(r))
        }
    };
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("{verdict} {} {summary}", check.name());
    if let Some(path) = report_path {
        let doc = json!({ "check": check.name(), "pass": pass, "report": report });
        std::fs::write(path, serde_json::to_string_pretty(&doc).expect("report serializes") + "\n")
            .map_err(Error::from)?;
    }
    if pass {
        Ok(())
    } else {
        Err(Failure::VerifyFailed)
    }
}

fn rankstats(code: &str, theta: f64, draws: usize, seed: u64, identity_p: bool) -> Result<(), Failure> {
    let code = if identity_p {
        make_replicated_unchecked(&make_perfect3(), &xnet_core::numerics::CMatrix::identity(3, 3))?
    } else {
        resolve_code(code, theta)?
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = heq_rank_stats(&code, draws, &mut rng)?;
    println!("{}", json!({ "code": code.name, "stats": r }));
    Ok(())
}

fn slope(input: &Path, window: usize) -> Result<(), Failure> {
    let sweep = read_csv(input)?;
    let d = estimate_diversity_slope(&sweep.points, window)?;
    println!("{d:.4}");
    Ok(())
}

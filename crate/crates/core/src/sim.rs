//! Monte Carlo BER sweeps and their CSV persistence.
//!
//! Every trial owns a ChaCha8 stream keyed by `(seed, snr index, trial index)`
//! and trials are run in fixed-size batches, so counters do not depend on the
//! number of worker threads.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constellation::Constellation;
use crate::decoder::{count_errors, sphere_decode};
use crate::error::{Error, Result};
use crate::stbc::{code_by_name, StbcCode};
use crate::xnetwork::{
    assemble_transmit, draw_channel, lij_precoders, receive, receiver_systems, Messages, Snr,
};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));
pub const CSV_COLUMNS: [&str; 7] = ["snr_db", "trials", "bits_sent", "bit_errors", "codeword_errors", "ber", "cwer"];
/// Codewords per trial: two messages at each of two receivers.
pub const CODEWORDS_PER_TRIAL: u64 = 4;
const MAX_DECODE_REDRAWS: usize = 100;

fn default_theta() -> f64 {
    PI / 4.0
}
fn default_min_codeword_errors() -> u64 {
    200
}
fn default_max_trials() -> u64 {
    1_000_000
}
fn default_workers() -> usize {
    1
}
fn default_batch_size() -> u64 {
    256
}
fn default_noise() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub scheme: String,
    pub m: usize,
    pub constellation: String,
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub snr_db_list: Vec<f64>,
    #[serde(default = "default_min_codeword_errors")]
    pub min_codeword_errors: u64,
    #[serde(default = "default_max_trials")]
    pub max_trials_per_point: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Trials run between stopping-rule checks.
    #[serde(default = "default_batch_size")]
    pub batch_size: u64,
    /// Disabling noise is a debugging aid; every decision should then be correct.
    #[serde(default = "default_noise")]
    pub noise: bool,
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.to_string(), message: message.into() }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let field = message
                .split('`')
                .nth(1)
                .filter(|_| message.contains("field"))
                .unwrap_or("<file>")
                .to_string();
            Error::Config { field, message: e.to_string().trim().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let code = self.code()?;
        if code.m != self.m {
            return Err(config_err(
                "m",
                format!("scheme `{}` uses {} antennas, config says {}", self.scheme, code.m, self.m),
            ));
        }
        self.resolve_constellation()?;
        if !self.theta.is_finite() {
            return Err(config_err("theta", "must be finite"));
        }
        if self.snr_db_list.is_empty() {
            return Err(config_err("snr_db_list", "must not be empty"));
        }
        if self.snr_db_list.iter().any(|s| !s.is_finite()) {
            return Err(config_err("snr_db_list", "entries must be finite"));
        }
        if self.snr_db_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_err("snr_db_list", "must be strictly ascending"));
        }
        for (field, value) in [
            ("min_codeword_errors", self.min_codeword_errors),
            ("max_trials_per_point", self.max_trials_per_point),
            ("batch_size", self.batch_size),
            ("workers", self.workers as u64),
        ] {
            if value == 0 {
                return Err(config_err(field, "must be at least 1"));
            }
        }
        Ok(())
    }

    /// The scheme's code with columns in cancellation order.
    pub fn code(&self) -> Result<StbcCode> {
        code_by_name(&self.scheme, self.theta)
            .and_then(|c| c.cc_ordered())
            .map_err(|e| config_err("scheme", e.to_string()))
    }

    pub fn resolve_constellation(&self) -> Result<Constellation> {
        Constellation::by_name(&self.constellation).map_err(|e| config_err("constellation", e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BerPoint {
    pub snr_db: f64,
    pub trials: u64,
    pub bits_sent: u64,
    pub bit_errors: u64,
    pub codeword_errors: u64,
}

impl BerPoint {
    pub fn ber(&self) -> f64 {
        if self.bits_sent == 0 {
            0.0
        } else {
            self.bit_errors as f64 / self.bits_sent as f64
        }
    }

    /// Fraction of decoded codewords (four per trial) with at least one symbol error.
    pub fn cwer(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.codeword_errors as f64 / (CODEWORDS_PER_TRIAL * self.trials) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepMeta {
    pub scheme: String,
    pub m: usize,
    pub constellation: String,
    pub theta: f64,
    /// Constellation rotation in radians.
    pub phi: f64,
    pub seed: u64,
    pub min_codeword_errors: u64,
    pub max_trials_per_point: u64,
    pub noise: bool,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub meta: SweepMeta,
    pub points: Vec<BerPoint>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    bits_sent: u64,
    bit_errors: u64,
    codeword_errors: u64,
}

impl Tally {
    fn merge(self, o: Tally) -> Tally {
        Tally {
            bits_sent: self.bits_sent + o.bits_sent,
            bit_errors: self.bit_errors + o.bit_errors,
            codeword_errors: self.codeword_errors + o.codeword_errors,
        }
    }
}

/// Deterministic RNG of one trial.
pub fn trial_rng(seed: u64, snr_index: usize, trial: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(snr_index as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(trial);
    rng
}

struct Setup {
    code: StbcCode,
    constellation: Constellation,
    noise: bool,
}

impl Setup {
    fn trial(&self, snr: Snr, rng: &mut ChaCha8Rng) -> Result<Tally> {
        let c = &self.constellation;
        let k = self.code.k;
        for _ in 0..MAX_DECODE_REDRAWS {
            let ch = draw_channel(rng, self.code.m)?;
            let pre = lij_precoders(&ch)?;
            let mut draw = || (0..k).map(|_| rng.random_range(0..c.len())).collect::<Vec<usize>>();
            let idx = [draw(), draw(), draw(), draw()];
            let sym = |v: &[usize]| v.iter().map(|&i| c.map(i)).collect::<Vec<_>>();
            let msg = Messages { x11: sym(&idx[0]), x12: sym(&idx[1]), x21: sym(&idx[2]), x22: sym(&idx[3]) };
            let (x1, x2) = assemble_transmit(&self.code, &msg, &pre, snr)?;
            let (y1, y2) = receive(&ch, &x1, &x2, rng, self.noise);
            let [s1, s2] = receiver_systems(&self.code, &ch, &pre, (&y1, &y2), snr)?;
            let (d1, d2) = match (sphere_decode(&s1, c), sphere_decode(&s2, c)) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(Error::RankDeficient { .. }), _) | (_, Err(Error::RankDeficient { .. })) => continue,
                (Err(e), _) | (_, Err(e)) => return Err(e),
            };
            let mut tally = Tally {
                bits_sent: CODEWORDS_PER_TRIAL * k as u64 * c.bits_per_symbol() as u64,
                ..Tally::default()
            };
            // receiver 1 wants x11, x21; receiver 2 wants x12, x22
            for (truth, decoded) in [(&idx[0], &d1.first), (&idx[2], &d1.second), (&idx[1], &d2.first), (&idx[3], &d2.second)] {
                let e = count_errors(truth, decoded, c);
                tally.bit_errors += e.bit_errors;
                tally.codeword_errors += e.codeword_error as u64;
            }
            return Ok(tally);
        }
        Err(Error::RngPathology { attempts: MAX_DECODE_REDRAWS })
    }

    fn batch(&self, snr: Snr, seed: u64, snr_index: usize, trials: std::ops::Range<u64>, pool: &Pool) -> Result<Tally> {
        let one = |t: u64| self.trial(snr, &mut trial_rng(seed, snr_index, t));
        pool.run(trials, &one)
    }
}

#[cfg(feature = "parallel")]
struct Pool(rayon::ThreadPool);

#[cfg(feature = "parallel")]
impl Pool {
    fn new(workers: usize) -> Result<Self> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map(Pool)
            .map_err(|e| config_err("workers", e.to_string()))
    }

    fn run(&self, trials: std::ops::Range<u64>, one: &(dyn Fn(u64) -> Result<Tally> + Sync)) -> Result<Tally> {
        use rayon::prelude::*;
        self.0.install(|| {
            trials
                .into_par_iter()
                .map(one)
                .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))
        })
    }
}

#[cfg(not(feature = "parallel"))]
struct Pool;

#[cfg(not(feature = "parallel"))]
impl Pool {
    fn new(_workers: usize) -> Result<Self> {
        Ok(Pool)
    }

    fn run(&self, trials: std::ops::Range<u64>, one: &dyn Fn(u64) -> Result<Tally>) -> Result<Tally> {
        trials.map(one).try_fold(Tally::default(), |a, b| Ok(a.merge(b?)))
    }
}

pub fn run_sweep(cfg: &SimConfig) -> Result<SweepResult> {
    run_sweep_with(cfg, |_| {})
}

/// Like [`run_sweep`], calling `progress` after each finished SNR point.
pub fn run_sweep_with(cfg: &SimConfig, mut progress: impl FnMut(&BerPoint)) -> Result<SweepResult> {
    cfg.validate()?;
    let setup = Setup {
        code: cfg.code()?,
        constellation: cfg.resolve_constellation()?,
        noise: cfg.noise,
    };
    let pool = Pool::new(cfg.workers)?;
    let mut points = Vec::with_capacity(cfg.snr_db_list.len());
    for (si, &db) in cfg.snr_db_list.iter().enumerate() {
        let snr = Snr::from_db(db);
        let mut tally = Tally::default();
        let mut trials = 0;
        while tally.codeword_errors < cfg.min_codeword_errors && trials < cfg.max_trials_per_point {
            let end = (trials + cfg.batch_size).min(cfg.max_trials_per_point);
            tally = tally.merge(setup.batch(snr, cfg.seed, si, trials..end, &pool)?);
            trials = end;
        }
        let point = BerPoint {
            snr_db: db,
            trials,
            bits_sent: tally.bits_sent,
            bit_errors: tally.bit_errors,
            codeword_errors: tally.codeword_errors,
        };
        progress(&point);
        points.push(point);
    }
    Ok(SweepResult {
        meta: SweepMeta {
            scheme: cfg.scheme.clone(),
            m: cfg.m,
            constellation: cfg.constellation.clone(),
            theta: cfg.theta,
            phi: setup.constellation.rotation(),
            seed: cfg.seed,
            min_codeword_errors: cfg.min_codeword_errors,
            max_trials_per_point: cfg.max_trials_per_point,
            noise: cfg.noise,
            version: VERSION.to_string(),
        },
        points,
    })
}

/// Serializes a sweep: `# key = value` metadata lines, then the CSV table.
pub fn to_csv_string(result: &SweepResult) -> Result<String> {
    let m = &result.meta;
    let mut out = String::new();
    let _ = writeln!(out, "# xnet sweep {}", m.version);
    for (key, value) in [
        ("scheme", m.scheme.clone()),
        ("m", m.m.to_string()),
        ("constellation", m.constellation.clone()),
        ("theta", m.theta.to_string()),
        ("phi", m.phi.to_string()),
        ("seed", m.seed.to_string()),
        ("min_codeword_errors", m.min_codeword_errors.to_string()),
        ("max_trials_per_point", m.max_trials_per_point.to_string()),
        ("noise", m.noise.to_string()),
        ("labels", "gray (qam/psk), row-major (hex)".to_string()),
    ] {
        let _ = writeln!(out, "# {key} = {value}");
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_COLUMNS).map_err(io)?;
    for p in &result.points {
        w.write_record([
            p.snr_db.to_string(),
            p.trials.to_string(),
            p.bits_sent.to_string(),
            p.bit_errors.to_string(),
            p.codeword_errors.to_string(),
            p.ber().to_string(),
            p.cwer().to_string(),
        ])
        .map_err(io)?;
    }
    let table = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    out.push_str(&String::from_utf8(table).expect("csv output is utf-8"));
    Ok(out)
}

pub fn write_csv(result: &SweepResult, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv_string(result)?)?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<SweepResult> {
    from_csv_str(&std::fs::read_to_string(path)?)
}

fn parse_meta<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        line,
        message: format!("metadata `{key}`: cannot parse `{value}`"),
    })
}

pub fn from_csv_str(text: &str) -> Result<SweepResult> {
    let mut meta = SweepMeta {
        scheme: String::new(),
        m: 0,
        constellation: String::new(),
        theta: 0.0,
        phi: 0.0,
        seed: 0,
        min_codeword_errors: 0,
        max_trials_per_point: 0,
        noise: true,
        version: String::new(),
    };
    for (i, line) in text.lines().enumerate() {
        let Some(body) = line.strip_prefix('#') else { continue };
        let line_no = i + 1;
        let body = body.trim();
        if let Some(v) = body.strip_prefix("xnet sweep ") {
            meta.version = v.trim().to_string();
            continue;
        }
        let Some((key, value)) = body.split_once('=') else { continue };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "scheme" => meta.scheme = value.to_string(),
            "constellation" => meta.constellation = value.to_string(),
            "m" => meta.m = parse_meta(line_no, key, value)?,
            "theta" => meta.theta = parse_meta(line_no, key, value)?,
            "phi" => meta.phi = parse_meta(line_no, key, value)?,
            "seed" => meta.seed = parse_meta(line_no, key, value)?,
            "min_codeword_errors" => meta.min_codeword_errors = parse_meta(line_no, key, value)?,
            "max_trials_per_point" => meta.max_trials_per_point = parse_meta(line_no, key, value)?,
            "noise" => meta.noise = parse_meta(line_no, key, value)?,
            _ => {}
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header_err = |line, message: String| Error::Parse { line, message };
    let headers = reader.headers().map_err(|e| header_err(0, e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names != CSV_COLUMNS {
        return Err(header_err(
            text.lines().position(|l| !l.starts_with('#')).map_or(1, |i| i + 1),
            format!("expected columns {CSV_COLUMNS:?}, found {names:?}"),
        ));
    }

    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse { line, message: e.to_string() }
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let float = |i: usize| -> Result<f64> {
            field(i).parse().map_err(|_| Error::Parse {
                line,
                message: format!("field `{}`: `{}` is not a number", CSV_COLUMNS[i], field(i)),
            })
        };
        let count = |i: usize| -> Result<u64> {
            field(i).parse().map_err(|_| Error::Parse {
                line,
                message: format!("field `{}`: `{}` is not a non-negative integer", CSV_COLUMNS[i], field(i)),
            })
        };
        let point = BerPoint {
            snr_db: float(0)?,
            trials: count(1)?,
            bits_sent: count(2)?,
            bit_errors: count(3)?,
            codeword_errors: count(4)?,
        };
        if point.bit_errors > point.bits_sent {
            return Err(Error::Parse {
                line,
                message: "field `bit_errors`: exceeds bits_sent".into(),
            });
        }
        points.push(point);
    }
    Ok(SweepResult { meta, points })
}

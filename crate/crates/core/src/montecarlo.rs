//! Seeded bit-error-rate campaigns over designed-SNR grids.
//!
//! A campaign draws a fresh channel for every trial, builds the beamformers
//! for the configured mode, sends `symbols_per_block` BPSK vectors per
//! stream and zero-forcing detects them. The zero-forcing output is affine
//! in the symbol amplitude, so one trial's channel, bits and noise are
//! evaluated at every SNR point at once; points differ only in how many
//! trials they keep before reaching the error target.

use std::io::{BufRead, Write};
use std::ops::Range;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arrays::ArrayGeometry;
use crate::beamforming::{hybrid_decompose, multiuser_downlink, pc_greedy_assign, svd_pair, BeamformerSet, DiversityMode};
use crate::channel::{ChannelLayout, SubchannelSpec};
use crate::detect::noise_matrix;
use crate::error::{Error, Result};
use crate::linalg::{pinv, CMatrix};
use crate::rng::{stream, Purpose, StreamId};

/// Hex SHA-256 of the canonical JSON encoding of `value`.
pub fn hash_json<T: Serialize + ?Sized>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("serializable value");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// How a curve's error rates were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Counted bit errors.
    BitCount,
    /// Average of a conditional error probability; `errors` holds the
    /// equivalent error count.
    ConditionalMean,
    /// Analytic reference curve.
    Reference,
}

impl EstimatorKind {
    fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::BitCount => "bit_count",
            EstimatorKind::ConditionalMean => "conditional_mean",
            EstimatorKind::Reference => "reference",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [EstimatorKind::BitCount, EstimatorKind::ConditionalMean, EstimatorKind::Reference]
            .into_iter()
            .find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub snr_db: f64,
    pub ber: f64,
    pub errors: u64,
    /// Valid trials (channel realizations or GSC draws).
    pub trials: u64,
    pub invalid_trials: u64,
    /// Detected bits, `trials * bits per trial`.
    pub bits: u64,
    /// Standard error of `ber`, from the spread of per-trial outcomes.
    pub std_err: f64,
    /// Stopped at the trial cap before reaching the error target.
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerCurve {
    pub kind: EstimatorKind,
    pub seed: u64,
    pub config_hash: String,
    pub points: Vec<BerPoint>,
}

pub const CSV_COLUMNS: &str = "snr_db,ber,errors,trials,invalid_trials";

impl BerCurve {
    pub fn all_capped(&self) -> bool {
        !self.points.is_empty() && self.points.iter().all(|p| p.capped)
    }

    /// CSV with a `#` provenance line followed by
    /// `snr_db,ber,errors,trials,invalid_trials`. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# config_hash={} seed={} estimator={}",
            self.config_hash,
            self.seed,
            self.kind.as_str()
        )?;
        writeln!(w, "{CSV_COLUMNS}")?;
        for p in &self.points {
            writeln!(w, "{},{},{},{},{}", p.snr_db, p.ber, p.errors, p.trials, p.invalid_trials)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub snr_db: f64,
    pub ber: f64,
    pub errors: u64,
    pub trials: u64,
    pub invalid_trials: u64,
}

/// Provenance and rows recovered from [`BerCurve::write_csv`] output.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCsv {
    pub config_hash: String,
    pub seed: u64,
    pub kind: EstimatorKind,
    pub rows: Vec<CsvRow>,
}

pub fn read_csv<R: BufRead>(r: R) -> Result<ParsedCsv> {
    let bad = |m: String| Error::Config(format!("malformed curve CSV: {m}"));
    let mut lines = r.lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| bad("unexpected end of file".into()))?
            .map_err(|e| bad(e.to_string()))
    };
    let head = next()?;
    let mut config_hash = None;
    let mut seed = None;
    let mut kind = None;
    for field in head.trim_start_matches('#').split_whitespace() {
        match field.split_once('=') {
            Some(("config_hash", v)) => config_hash = Some(v.to_string()),
            Some(("seed", v)) => seed = v.parse().ok(),
            Some(("estimator", v)) => kind = EstimatorKind::parse(v),
            _ => {}
        }
    }
    if next()? != CSV_COLUMNS {
        return Err(bad("unexpected column header".into()));
    }
    let mut rows = Vec::new();
    for line in lines {
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad(format!("expected 5 fields in {line:?}")));
        }
        let float = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        let int = |s: &str| s.parse::<u64>().map_err(|e| bad(format!("{s:?}: {e}")));
        rows.push(CsvRow {
            snr_db: float(f[0])?,
            ber: float(f[1])?,
            errors: int(f[2])?,
            trials: int(f[3])?,
            invalid_trials: int(f[4])?,
        });
    }
    Ok(ParsedCsv {
        config_hash: config_hash.ok_or_else(|| bad("missing config_hash".into()))?,
        seed: seed.ok_or_else(|| bad("missing seed".into()))?,
        kind: kind.ok_or_else(|| bad("missing estimator".into()))?,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    SingleUserFc,
    SingleUserPc,
    MultiuserDl,
}

/// Large-scale gains in dB: one value for every subchannel or a
/// `K_r x K_t` matrix (rows are receive RAUs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl Default for GainSpec {
    fn default() -> Self {
        GainSpec::Scalar(-20.0)
    }
}

impl GainSpec {
    /// Row-major gains for a `k_r x k_t` grid.
    pub fn grid(&self, k_r: usize, k_t: usize) -> Result<Vec<f64>> {
        let g = match self {
            GainSpec::Scalar(g) => vec![*g; k_r * k_t],
            GainSpec::Matrix(rows) => {
                if rows.len() != k_r || rows.iter().any(|r| r.len() != k_t) {
                    return Err(Error::Config(format!("g_db must be a {k_r}x{k_t} matrix")));
                }
                rows.concat()
            }
        };
        if let Some(x) = g.iter().find(|x| !x.is_finite()) {
            return Err(Error::Config(format!("g_db entries must be finite, got {x}")));
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stopping {
    /// Errors a point needs before it stops.
    #[serde(default = "default_min_errors")]
    pub min_errors: u64,
    /// Trial cap per point.
    #[serde(default = "default_max_trials")]
    pub max_trials: u64,
    /// Trials evaluated between stopping checks.
    #[serde(default = "default_batch")]
    pub batch: u64,
}

fn default_min_errors() -> u64 {
    100
}
fn default_max_trials() -> u64 {
    200_000
}
fn default_batch() -> u64 {
    1024
}

impl Default for Stopping {
    fn default() -> Self {
        Stopping {
            min_errors: default_min_errors(),
            max_trials: default_max_trials(),
            batch: default_batch(),
        }
    }
}

/// Mobile stations of a multiuser downlink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsersConfig {
    /// Number of users `K_u`.
    pub count: usize,
    /// RF chains per user, default `N_s`.
    #[serde(default)]
    pub rf_chains: Option<usize>,
}

/// A BER campaign.
///
/// Single-user modes use `k_t`, `k_r`, `n_t`, `n_r` for the RAU counts and
/// per-RAU array sizes. In multiuser mode `k_t`/`n_t` describe the base
/// station (`K_b`, `N_b`), `n_r` is the per-user array size `N_u`, `k_r`
/// must be 1 and `rf_chains` is the base-station chain count (default
/// `K_u` times the per-user chain count).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub k_t: usize,
    pub k_r: usize,
    pub n_t: usize,
    pub n_r: usize,
    pub n_s: usize,
    /// RF chains per side, default `2 N_s` (fully connected only).
    #[serde(default)]
    pub rf_chains: Option<usize>,
    /// Paths per subchannel.
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub g_db: GainSpec,
    /// Designed-SNR grid.
    pub snr_db: Vec<f64>,
    #[serde(default)]
    pub stopping: Stopping,
    #[serde(default = "default_block")]
    pub symbols_per_block: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub users: Option<UsersConfig>,
    /// Drops the receiver noise (for pipeline checks).
    #[serde(default)]
    pub noiseless: bool,
}

fn default_paths() -> usize {
    3
}
fn default_block() -> usize {
    10
}

/// Transmit power `P = 10^(snr_db/10) N_s L / (N_r N_t)` for a designed SNR.
pub fn designed_snr_to_power(snr_db: f64, n_s: usize, paths: usize, n_r: usize, n_t: usize) -> f64 {
    10f64.powf(snr_db / 10.0) * (n_s * paths) as f64 / (n_r * n_t) as f64
}

impl ExperimentConfig {
    /// Single-user fully connected campaign with the usual defaults.
    pub fn single_user(mode: Mode, k: usize, n: usize, n_s: usize, snr_db: Vec<f64>) -> Self {
        ExperimentConfig {
            mode,
            k_t: k,
            k_r: k,
            n_t: n,
            n_r: n,
            n_s,
            rf_chains: None,
            paths: default_paths(),
            g_db: GainSpec::default(),
            snr_db,
            stopping: Stopping::default(),
            symbols_per_block: default_block(),
            seed: 0,
            users: None,
            noiseless: false,
        }
    }

    pub fn hash(&self) -> String {
        hash_json(self)
    }

    pub fn rf_chains(&self) -> usize {
        match self.mode {
            Mode::SingleUserFc => self.rf_chains.unwrap_or(2 * self.n_s),
            Mode::SingleUserPc => self.k_t,
            Mode::MultiuserDl => self.rf_chains.unwrap_or(self.user_count() * self.user_rf_chains()),
        }
    }

    pub fn user_count(&self) -> usize {
        self.users.as_ref().map_or(1, |u| u.count)
    }

    pub fn user_rf_chains(&self) -> usize {
        self.users.as_ref().and_then(|u| u.rf_chains).unwrap_or(self.n_s)
    }

    /// Detected bits per trial.
    pub fn bits_per_trial(&self) -> u64 {
        (self.user_count() * self.n_s * self.symbols_per_block) as u64
    }

    /// Closed-form diversity target for this configuration.
    pub fn diversity_mode(&self) -> DiversityMode {
        match self.mode {
            Mode::SingleUserFc => DiversityMode::Full {
                k_t: self.k_t,
                k_r: self.k_r,
                paths: self.paths,
            },
            Mode::SingleUserPc => DiversityMode::Pc {
                k_t: self.k_t,
                k_r: self.k_r,
                paths: self.paths,
            },
            Mode::MultiuserDl => DiversityMode::MuDownlink {
                k_b: self.k_t,
                paths: self.paths,
            },
        }
    }

    /// Per-user layout (multiuser) or the link layout (single user).
    pub fn layout(&self) -> Result<ChannelLayout> {
        let rx = ArrayGeometry::half_wave_ula(self.n_r)?;
        let tx = ArrayGeometry::half_wave_ula(self.n_t)?;
        let specs = self
            .g_db
            .grid(self.k_r, self.k_t)?
            .into_iter()
            .map(|g| SubchannelSpec::new(self.paths, g))
            .collect::<Result<Vec<_>>>()?;
        ChannelLayout::new(self.k_r, self.k_t, rx, tx, specs)
    }

    /// Checks the schema and every precondition of the chosen mode.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("k_t", self.k_t),
            ("k_r", self.k_r),
            ("n_t", self.n_t),
            ("n_r", self.n_r),
            ("n_s", self.n_s),
            ("paths", self.paths),
            ("symbols_per_block", self.symbols_per_block),
        ] {
            if v == 0 {
                return cfg_err(format!("{name} must be at least 1"));
            }
        }
        if self.snr_db.is_empty() {
            return cfg_err("snr_db must list at least one point".into());
        }
        if let Some(x) = self.snr_db.iter().find(|x| !x.is_finite()) {
            return cfg_err(format!("snr_db entries must be finite, got {x}"));
        }
        if self.stopping.max_trials == 0 || self.stopping.batch == 0 {
            return cfg_err("stopping.max_trials and stopping.batch must be at least 1".into());
        }
        if self.stopping.max_trials >= 1 << StreamId::TRIAL_BITS {
            return cfg_err("stopping.max_trials is too large".into());
        }
        self.layout()?;
        crate::beamforming::diversity_gain_formula(self.diversity_mode(), self.n_s)?;
        match self.mode {
            Mode::SingleUserFc => {
                if self.users.is_some() {
                    return cfg_err("users is only valid in multiuser_dl mode".into());
                }
                let rf = self.rf_chains();
                let cap = (self.k_t * self.n_t).min(self.k_r * self.n_r);
                if rf < self.n_s || rf > cap {
                    return Err(Error::Precondition(format!(
                        "need N_s <= rf_chains <= {cap}, got N_s = {}, rf_chains = {rf}",
                        self.n_s
                    )));
                }
            }
            Mode::SingleUserPc => {
                if self.users.is_some() {
                    return cfg_err("users is only valid in multiuser_dl mode".into());
                }
                if self.rf_chains.is_some_and(|rf| rf != self.k_t) {
                    return Err(Error::Precondition(
                        "the partially connected architecture uses one RF chain per RAU".into(),
                    ));
                }
            }
            Mode::MultiuserDl => {
                let Some(users) = &self.users else {
                    return cfg_err("multiuser_dl mode requires the users table".into());
                };
                if users.count == 0 {
                    return cfg_err("users.count must be at least 1".into());
                }
                if self.k_r != 1 {
                    return cfg_err("multiuser_dl mode requires k_r = 1 (one array per user)".into());
                }
                let (k_u, n_s, u_rf, b_rf) = (users.count, self.n_s, self.user_rf_chains(), self.rf_chains());
                if n_s > u_rf || u_rf > self.n_r {
                    return Err(Error::Precondition(format!(
                        "need N_s <= N_u^rf <= N_u, got N_s = {n_s}, N_u^rf = {u_rf}, N_u = {}",
                        self.n_r
                    )));
                }
                if k_u * n_s > b_rf || b_rf > self.k_t * self.n_t {
                    return Err(Error::Precondition(format!(
                        "need K_u N_s <= N_b^rf <= K_b N_b, got K_u N_s = {}, N_b^rf = {b_rf}, K_b N_b = {}",
                        k_u * n_s,
                        self.k_t * self.n_t
                    )));
                }
                if k_u * u_rf > b_rf {
                    return Err(Error::Precondition(format!(
                        "zero-forcing needs N_b^rf >= K_u N_u^rf = {}, got {b_rf}",
                        k_u * u_rf
                    )));
                }
            }
        }
        Ok(())
    }

    /// Transmit power at designed SNR `snr_db`.
    pub fn power(&self, snr_db: f64) -> f64 {
        designed_snr_to_power(snr_db, self.n_s, self.paths, self.n_r, self.n_t)
    }

    /// Per-stream symbol amplitude at designed SNR `snr_db`.
    pub fn amplitude(&self, snr_db: f64) -> f64 {
        (self.power(snr_db) / (self.user_count() * self.n_s) as f64).sqrt()
    }
}

/// Zero-forcing decision statistics of one detected bit: it is in error at
/// symbol amplitude `a` exactly when `a * gain <= margin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitMargin {
    pub gain: f64,
    pub margin: f64,
}

impl BitMargin {
    pub fn is_error(&self, amplitude: f64) -> bool {
        amplitude * self.gain <= self.margin
    }
}

/// `rows x cols` matrix of random signs.
fn random_signs<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
    }
    m
}

/// Decision statistics for the streams `own` received through analog
/// combiner `f_r` with effective channel `eff_all` (all transmitted
/// streams). The combined noise `F_r^H n` is drawn as `R^H z` from the QR
/// factor of `F_r`, which has the same distribution.
fn link_margins<R: Rng + ?Sized>(
    eff_all: &CMatrix,
    own: Range<usize>,
    f_r: &CMatrix,
    signs: &DMatrix<f64>,
    noise_rng: &mut R,
    noiseless: bool,
    out: &mut Vec<BitMargin>,
) -> Result<()> {
    let eff_own = eff_all.columns(own.start, own.len()).into_owned();
    let p = pinv(&eff_own);
    if p.rank < eff_own.ncols() {
        return Err(Error::RankDeficient {
            rank: p.rank,
            required: eff_own.ncols(),
        });
    }
    let t = signs.ncols();
    let s = signs.map(|x| num_complex::Complex64::new(x, 0.0));
    let signal = &p.matrix * (eff_all * s);
    let filtered = if noiseless {
        None
    } else {
        let r = f_r.clone().qr().r();
        let w = r.adjoint() * noise_matrix(noise_rng, r.nrows(), t);
        Some(&p.matrix * w)
    };
    for c in 0..t {
        for k in 0..own.len() {
            let sgn = signs[(own.start + k, c)];
            out.push(BitMargin {
                gain: sgn * signal[(k, c)].re,
                margin: filtered.as_ref().map_or(f64::NEG_INFINITY, |f| -sgn * f[(k, c)].re),
            });
        }
    }
    Ok(())
}

/// Beamformers and decision statistics for one trial; `Err` marks an
/// invalid trial (rank-deficient channel or effective channel).
pub fn trial_margins(cfg: &ExperimentConfig, layout: &ChannelLayout, trial: u64) -> Result<Vec<BitMargin>> {
    let seed = cfg.seed;
    let t = cfg.symbols_per_block;
    let mut bits_rng = stream(seed, StreamId::new(trial, Purpose::Bits, 0, 0));
    let mut out = Vec::with_capacity(cfg.bits_per_trial() as usize);
    match cfg.mode {
        Mode::SingleUserFc | Mode::SingleUserPc => {
            let ch = layout.draw(seed, trial)?;
            let bf: BeamformerSet = if cfg.mode == Mode::SingleUserFc {
                let rf = cfg.rf_chains();
                hybrid_decompose(&svd_pair(&ch, cfg.n_s)?, rf, rf)?
            } else {
                pc_greedy_assign(&ch, cfg.n_s)?.set
            };
            let chains = bf.detection_chains();
            let f_r = bf.f_r.select_columns(chains.iter());
            let eff = f_r.adjoint() * (ch.matrix() * bf.precoder());
            let signs = random_signs(&mut bits_rng, cfg.n_s, t);
            let mut noise_rng = stream(seed, StreamId::new(trial, Purpose::Noise, 0, 0));
            link_margins(&eff, 0..cfg.n_s, &f_r, &signs, &mut noise_rng, cfg.noiseless, &mut out)?;
        }
        Mode::MultiuserDl => {
            let k_u = cfg.user_count();
            let users = (0..k_u)
                .map(|u| layout.draw_with_offset(seed, trial, u))
                .collect::<Result<Vec<_>>>()?;
            let mu = multiuser_downlink(&users, cfg.n_s, cfg.user_rf_chains(), cfg.rf_chains())?;
            let signs = random_signs(&mut bits_rng, k_u * cfg.n_s, t);
            let radiated = &mu.f_b * &mu.w_b;
            for (i, ch) in users.iter().enumerate() {
                let f_u = &mu.users[i].f_u;
                let eff = f_u.adjoint() * (ch.matrix() * &radiated);
                let mut noise_rng = stream(seed, StreamId::new(trial, Purpose::Noise, 0, i));
                let own = i * cfg.n_s..(i + 1) * cfg.n_s;
                link_margins(&eff, own, f_u, &signs, &mut noise_rng, cfg.noiseless, &mut out)?;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
struct PointAcc {
    errors: u64,
    sum_sq: f64,
    trials: u64,
    invalid: u64,
    active: bool,
}

/// Runs a campaign on the current rayon pool.
///
/// Trials are evaluated in batches of `stopping.batch`; after each batch a
/// point stops once it has `stopping.min_errors` errors. Points still short
/// of the target at `stopping.max_trials` are flagged `capped`. Results
/// depend only on the configuration (including its seed), never on the
/// number of worker threads.
pub fn run_campaign(cfg: &ExperimentConfig) -> Result<BerCurve> {
    cfg.validate()?;
    let layout = cfg.layout()?;
    let amps: Vec<f64> = cfg.snr_db.iter().map(|&db| cfg.amplitude(db)).collect();
    let per_trial = cfg.bits_per_trial();
    let stop = &cfg.stopping;
    let mut acc = vec![
        PointAcc {
            active: true,
            ..Default::default()
        };
        amps.len()
    ];
    let mut next = 0u64;
    while next < stop.max_trials && acc.iter().any(|a| a.active) {
        let n = stop.batch.min(stop.max_trials - next);
        let outcomes: Vec<Option<Vec<u32>>> = (next..next + n)
            .into_par_iter()
            .map(|trial| match trial_margins(cfg, &layout, trial) {
                Ok(margins) => Some(
                    amps.iter()
                        .map(|&a| margins.iter().filter(|m| m.is_error(a)).count() as u32)
                        .collect(),
                ),
                Err(Error::RankDeficient { .. }) => None,
                Err(e) => panic!("trial {trial} failed after validation: {e}"),
            })
            .collect();
        for outcome in &outcomes {
            for (k, a) in acc.iter_mut().enumerate() {
                if !a.active {
                    continue;
                }
                match outcome {
                    Some(errs) => {
                        a.errors += errs[k] as u64;
                        a.sum_sq += (errs[k] as f64).powi(2);
                        a.trials += 1;
                    }
                    None => a.invalid += 1,
                }
            }
        }
        next += n;
        for a in acc.iter_mut() {
            if a.active && a.errors >= stop.min_errors {
                a.active = false;
            }
        }
    }
    let points = cfg
        .snr_db
        .iter()
        .zip(&acc)
        .map(|(&db, a)| {
            let bits = a.trials * per_trial;
            let (ber, std_err) = if a.trials == 0 {
                (0.0, 0.0)
            } else {
                let n = a.trials as f64;
                let mean = a.errors as f64 / n;
                let var = if a.trials > 1 {
                    ((a.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
                } else {
                    0.0
                };
                (a.errors as f64 / bits as f64, (var / n).sqrt() / per_trial as f64)
            };
            BerPoint {
                snr_db: db,
                ber,
                errors: a.errors,
                trials: a.trials,
                invalid_trials: a.invalid,
                bits,
                std_err,
                capped: a.errors < stop.min_errors,
            }
        })
        .collect();
    Ok(BerCurve {
        kind: EstimatorKind::BitCount,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        points,
    })
}

/// Runs a campaign on a dedicated pool of `threads` workers.
pub fn run_campaign_with_threads(cfg: &ExperimentConfig, threads: usize) -> Result<BerCurve> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_campaign(cfg))
}

/// The six two-RAU gain matrices (dB) mixing -20 and -25 dB subchannels.
pub fn standard_inhomogeneous_gains() -> Vec<Vec<Vec<f64>>> {
    let (a, b) = (-20.0, -25.0);
    vec![
        vec![vec![b, a], vec![a, b]],
        vec![vec![a, a], vec![b, b]],
        vec![vec![a, b], vec![b, a]],
        vec![vec![a, b], vec![a, b]],
        vec![vec![b, b], vec![a, a]],
        vec![vec![b, a], vec![b, a]],
    ]
}

/// A labelled curve from [`inhomogeneous_g_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledCurve {
    pub label: String,
    pub g_db: GainSpec,
    pub curve: BerCurve,
}

/// One campaign per gain matrix (labelled `G1`, `G2`, ...) followed by the
/// homogeneous -20 dB and -25 dB references, all with the base seed so that
/// every curve sees the same path draws.
pub fn inhomogeneous_g_suite(base: &ExperimentConfig, gains: &[Vec<Vec<f64>>]) -> Result<Vec<LabelledCurve>> {
    let mut specs: Vec<(String, GainSpec)> = gains
        .iter()
        .enumerate()
        .map(|(k, g)| (format!("G{}", k + 1), GainSpec::Matrix(g.clone())))
        .collect();
    specs.push(("homogeneous_-20dB".into(), GainSpec::Scalar(-20.0)));
    specs.push(("homogeneous_-25dB".into(), GainSpec::Scalar(-25.0)));
    specs
        .into_iter()
        .map(|(label, g_db)| {
            let cfg = ExperimentConfig {
                g_db: g_db.clone(),
                ..base.clone()
            };
            Ok(LabelledCurve {
                label,
                g_db,
                curve: run_campaign(&cfg)?,
            })
        })
        .collect()
}

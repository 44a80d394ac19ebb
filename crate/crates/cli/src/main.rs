//! `dmimo`: run link-level campaigns and diversity checks from TOML run
//! files.
//!
//! Exit codes: 0 success, 2 configuration error, 3 precondition
//! violation, 4 some curve has every point stopped at the trial cap,
//! 1 anything else (I/O).

mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dmimo::beamforming::{diversity_gain_formula, DiversityMode};
use toml::Table;

use crate::config::{apply_sets, decode, load_table, parse_grid, set, set_if, usize_list};
use crate::run::{read_manifest, Manifest, MultiuserRun, Run, MANIFEST_FILE};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Precondition(String),
    Capped(Vec<String>),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Precondition(_) => 3,
            CliError::Capped(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Precondition(m) => write!(f, "{m}"),
            CliError::Capped(files) => write!(f, "every point hit the trial cap in {}", files.join(", ")),
            CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl From<dmimo::Error> for CliError {
    fn from(e: dmimo::Error) -> Self {
        use dmimo::Error as E;
        match e {
            E::Precondition(_) | E::RankDeficient { .. } | E::InsufficientPoints { .. } => {
                CliError::Precondition(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "dmimo", version, about = "Distributed-subarray mmWave MIMO diversity simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean ordered singular values of the channel against array size.
    SvdSweep(SweepArgs),
    /// One BER campaign.
    Ber(CampaignArgs),
    /// Fully and partially connected campaigns on the same configuration.
    PcCompare(CampaignArgs),
    /// Multiuser downlink campaigns, one per user count.
    Multiuser(MultiuserArgs),
    /// The six mixed -20/-25 dB gain matrices plus both homogeneous references.
    GInhomo(CampaignArgs),
    /// Selection-combining error rate with its reference power-law curve.
    Gsc(GscArgs),
    /// Closed-form asymptotic diversity gain.
    Gain(GainArgs),
    /// Re-run a manifest written by an earlier invocation.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct Common {
    /// TOML run file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Override any run-file key, e.g. `--set stopping.batch=2048`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct CampaignArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    min_errors: Option<u64>,
    #[arg(long)]
    max_trials: Option<u64>,
    #[arg(long)]
    kt: Option<i64>,
    #[arg(long)]
    kr: Option<i64>,
    #[arg(long)]
    nt: Option<i64>,
    #[arg(long)]
    nr: Option<i64>,
    #[arg(long)]
    ns: Option<i64>,
    /// Paths per subchannel.
    #[arg(long = "L")]
    paths: Option<i64>,
    #[arg(long)]
    rf_chains: Option<i64>,
    /// Designed-SNR grid in dB, `lo:hi:step` or `a,b,c`.
    #[arg(long)]
    snr: Option<String>,
}

#[derive(Args)]
struct MultiuserArgs {
    #[command(flatten)]
    campaign: CampaignArgs,
    /// Comma-separated user counts; defaults to the run file's `users.count`.
    #[arg(long)]
    users: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// RAUs per side.
    #[arg(long)]
    k: Option<i64>,
    /// Receive array sizes, comma-separated.
    #[arg(long)]
    nr: Option<String>,
    #[arg(long)]
    seeds: Option<i64>,
}

#[derive(Args)]
struct GscArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    min_errors: Option<u64>,
    #[arg(long)]
    branches: Option<i64>,
    #[arg(long)]
    rank: Option<i64>,
    #[arg(long)]
    draws: Option<i64>,
    #[arg(long)]
    snr: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GainMode {
    Full,
    Pc,
    MuDownlink,
    MuUplink,
}

#[derive(Args)]
struct GainArgs {
    #[arg(long, value_enum)]
    mode: GainMode,
    #[arg(long, default_value_t = 1)]
    kt: usize,
    #[arg(long, default_value_t = 1)]
    kr: usize,
    /// Base-station RAUs (multiuser modes).
    #[arg(long, default_value_t = 1)]
    kb: usize,
    #[arg(long = "L")]
    paths: usize,
    #[arg(long)]
    ns: usize,
}

#[derive(Args)]
struct ReplayArgs {
    /// Manifest file, or a directory containing `manifest.json`.
    manifest: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "replay")]
    out_dir: PathBuf,
}

fn u64_value(v: u64) -> Result<toml::Value, CliError> {
    i64::try_from(v)
        .map(toml::Value::Integer)
        .map_err(|_| CliError::Config(format!("value {v} is too large")))
}

fn base_table(common: &Common) -> Result<Table, CliError> {
    let mut t = load_table(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        set(&mut t, "seed", u64_value(seed)?)?;
    }
    Ok(t)
}

fn grid_value(text: &str) -> Result<toml::Value, CliError> {
    Ok(toml::Value::Array(parse_grid(text)?.into_iter().map(toml::Value::Float).collect()))
}

fn campaign_table(a: &CampaignArgs) -> Result<Table, CliError> {
    let mut t = base_table(&a.common)?;
    if let Some(v) = a.min_errors {
        set(&mut t, "stopping.min_errors", u64_value(v)?)?;
    }
    if let Some(v) = a.max_trials {
        set(&mut t, "stopping.max_trials", u64_value(v)?)?;
    }
    set_if(&mut t, "k_t", a.kt)?;
    set_if(&mut t, "k_r", a.kr)?;
    set_if(&mut t, "n_t", a.nt)?;
    set_if(&mut t, "n_r", a.nr)?;
    set_if(&mut t, "n_s", a.ns)?;
    set_if(&mut t, "paths", a.paths)?;
    set_if(&mut t, "rf_chains", a.rf_chains)?;
    if let Some(s) = &a.snr {
        set(&mut t, "snr_db", grid_value(s)?)?;
    }
    apply_sets(&mut t, &a.common.sets)?;
    Ok(t)
}

fn ensure_mode(t: &mut Table, mode: &str) -> Result<(), CliError> {
    if !t.contains_key("mode") {
        set(t, "mode", toml::Value::String(mode.into()))?;
    }
    Ok(())
}

fn setup_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("threads: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))?;
    }
    Ok(())
}

fn resolve(command: Command) -> Result<(Run, Option<usize>, PathBuf), CliError> {
    Ok(match command {
        Command::SvdSweep(a) => {
            let mut t = base_table(&a.common)?;
            set_if(&mut t, "k", a.k)?;
            set_if(&mut t, "seeds", a.seeds)?;
            if let Some(s) = &a.nr {
                let ns = usize_list(s)?.into_iter().map(|n| toml::Value::Integer(n as i64)).collect();
                set(&mut t, "n_r", toml::Value::Array(ns))?;
            }
            apply_sets(&mut t, &a.common.sets)?;
            (Run::SvdSweep(decode(t)?), a.common.threads, a.common.out_dir)
        }
        Command::Ber(a) => (Run::Ber(decode(campaign_table(&a)?)?), a.common.threads, a.common.out_dir),
        Command::PcCompare(a) => {
            let mut t = campaign_table(&a)?;
            ensure_mode(&mut t, "single_user_fc")?;
            (Run::PcCompare(decode(t)?), a.common.threads, a.common.out_dir)
        }
        Command::GInhomo(a) => {
            let mut t = campaign_table(&a)?;
            ensure_mode(&mut t, "single_user_fc")?;
            (Run::GInhomo(decode(t)?), a.common.threads, a.common.out_dir)
        }
        Command::Multiuser(a) => {
            let mut t = campaign_table(&a.campaign)?;
            ensure_mode(&mut t, "multiuser_dl")?;
            let experiment: dmimo::montecarlo::ExperimentConfig = decode(t)?;
            let user_counts = match &a.users {
                Some(s) => usize_list(s)?,
                None => vec![experiment.user_count()],
            };
            let c = a.campaign.common;
            (Run::Multiuser(MultiuserRun { experiment, user_counts }), c.threads, c.out_dir)
        }
        Command::Gsc(a) => {
            let mut t = base_table(&a.common)?;
            if let Some(v) = a.min_errors {
                set(&mut t, "min_errors", u64_value(v)?)?;
            }
            set_if(&mut t, "branches", a.branches)?;
            set_if(&mut t, "rank", a.rank)?;
            set_if(&mut t, "draws", a.draws)?;
            if let Some(s) = &a.snr {
                set(&mut t, "snr_db", grid_value(s)?)?;
            }
            apply_sets(&mut t, &a.common.sets)?;
            (Run::Gsc(decode(t)?), a.common.threads, a.common.out_dir)
        }
        Command::Replay(a) => {
            let path = if a.manifest.is_dir() {
                a.manifest.join(MANIFEST_FILE)
            } else {
                a.manifest
            };
            let m = read_manifest(&path)?;
            (m.run, a.threads, a.out_dir)
        }
        Command::Gain(_) => unreachable!("handled before resolution"),
    })
}

fn gain(a: &GainArgs) -> Result<(), CliError> {
    let mode = match a.mode {
        GainMode::Full => DiversityMode::Full {
            k_t: a.kt,
            k_r: a.kr,
            paths: a.paths,
        },
        GainMode::Pc => DiversityMode::Pc {
            k_t: a.kt,
            k_r: a.kr,
            paths: a.paths,
        },
        GainMode::MuDownlink => DiversityMode::MuDownlink { k_b: a.kb, paths: a.paths },
        GainMode::MuUplink => DiversityMode::MuUplink { k_b: a.kb, paths: a.paths },
    };
    println!("{}", diversity_gain_formula(mode, a.ns)?);
    Ok(())
}

fn report(m: &Manifest, out_dir: &Path) {
    for o in &m.outputs {
        let fit = m.fits.iter().find(|f| f.file == o.file);
        match fit {
            Some(f) => match (f.slope, f.std_err) {
                (Some(s), Some(e)) => println!("{}  slope {s:.3} +/- {e:.3}", out_dir.join(&o.file).display()),
                _ => println!(
                    "{}  no slope fit: {}",
                    out_dir.join(&o.file).display(),
                    f.error.as_deref().unwrap_or("")
                ),
            },
            None => println!("{}", out_dir.join(&o.file).display()),
        }
    }
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    if let Command::Gain(a) = &cli.command {
        return gain(a);
    }
    let (run, threads, out_dir) = resolve(cli.command)?;
    setup_threads(threads)?;
    let manifest = run.execute(&out_dir)?;
    report(&manifest, &out_dir);
    let capped = manifest.capped_files();
    if capped.is_empty() {
        Ok(())
    } else {
        Err(CliError::Capped(capped.into_iter().map(String::from).collect()))
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dmimo: {e}");
            ExitCode::from(e.code())
        }
    }
}

//! Fully resolved runs, their execution and the replayable manifest.

use std::fs;
use std::path::Path;

use dmimo::analysis::{fit_slope, singular_value_sweep, write_sweep_csv, SweepConfig};
use dmimo::montecarlo::{
    hash_json, inhomogeneous_g_suite, run_campaign, standard_inhomogeneous_gains, BerCurve, ExperimentConfig, Mode,
    UsersConfig,
};
use dmimo::orderstats::{dgv_curve, gsc_ber_sim, GscConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GscRun {
    pub branches: usize,
    /// Which branch is selected, 1 = strongest.
    pub rank: usize,
    /// Relative mean SNRs of the branches; i.i.d. when absent.
    #[serde(default)]
    pub branch_weights: Option<Vec<f64>>,
    pub snr_db: Vec<f64>,
    #[serde(default = "default_draws")]
    pub draws: u64,
    #[serde(default)]
    pub seed: u64,
    /// Equivalent error count a point needs to enter the slope fit.
    #[serde(default = "default_min_errors")]
    pub min_errors: u64,
}

fn default_draws() -> u64 {
    1_000_000
}

fn default_min_errors() -> u64 {
    100
}

impl GscRun {
    fn gsc_config(&self) -> dmimo::Result<GscConfig> {
        match &self.branch_weights {
            None => GscConfig::iid(self.branches, self.rank),
            Some(w) if w.len() == self.branches => GscConfig::new(self.rank, w.clone()),
            Some(w) => Err(dmimo::Error::Config(format!(
                "branch_weights: expected {} entries, got {}",
                self.branches,
                w.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiuserRun {
    pub experiment: ExperimentConfig,
    pub user_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "kebab-case")]
pub enum Run {
    SvdSweep(SweepConfig),
    Ber(ExperimentConfig),
    PcCompare(ExperimentConfig),
    Multiuser(MultiuserRun),
    GInhomo(ExperimentConfig),
    Gsc(GscRun),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_err: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Every point stopped at the trial cap.
    pub all_capped: bool,
}

/// Everything needed to reproduce a run. Worker count is deliberately
/// absent: it never changes results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub run: Run,
    pub run_hash: String,
    pub outputs: Vec<OutputFile>,
    pub fits: Vec<FitRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Run {
    pub fn validate(&self) -> dmimo::Result<()> {
        match self {
            Run::SvdSweep(_) => Ok(()),
            Run::Ber(c) | Run::GInhomo(c) => c.validate(),
            Run::PcCompare(c) => {
                for mode in [Mode::SingleUserFc, Mode::SingleUserPc] {
                    with_mode(c, mode).validate()?;
                }
                Ok(())
            }
            Run::Multiuser(m) => {
                if m.user_counts.is_empty() {
                    return Err(dmimo::Error::Config("user_counts: need at least one user count".into()));
                }
                if m.experiment.mode != Mode::MultiuserDl {
                    return Err(dmimo::Error::Config("mode: multiuser runs need mode = \"multiuser_dl\"".into()));
                }
                m.user_counts.iter().try_for_each(|&k| with_users(&m.experiment, k).validate())
            }
            Run::Gsc(g) => g.gsc_config().map(|_| ()),
        }
    }

    /// Executes the run, writing CSVs and the manifest into `out_dir`.
    pub fn execute(&self, out_dir: &Path) -> Result<Manifest, CliError> {
        self.validate()?;
        fs::create_dir_all(out_dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", out_dir.display())))?;
        let mut out = Outputs::default();
        match self {
            Run::SvdSweep(cfg) => {
                let rows = singular_value_sweep(cfg)?;
                let mut buf = Vec::new();
                write_sweep_csv(&rows, &cfg.indices, &mut buf).expect("writing to memory");
                out.files.push(("svd_sweep.csv".into(), String::from_utf8(buf).expect("ascii csv")));
            }
            Run::Ber(cfg) => out.curve("ber.csv".into(), &run_campaign(cfg)?, cfg.stopping.min_errors),
            Run::PcCompare(cfg) => {
                for (mode, name) in [(Mode::SingleUserFc, "ber_fc.csv"), (Mode::SingleUserPc, "ber_pc.csv")] {
                    let c = with_mode(cfg, mode);
                    out.curve(name.into(), &run_campaign(&c)?, c.stopping.min_errors);
                }
            }
            Run::Multiuser(m) => {
                for &k in &m.user_counts {
                    let c = with_users(&m.experiment, k);
                    out.curve(format!("ber_users_{k}.csv"), &run_campaign(&c)?, c.stopping.min_errors);
                }
            }
            Run::GInhomo(cfg) => {
                for lc in inhomogeneous_g_suite(cfg, &standard_inhomogeneous_gains())? {
                    out.curve(format!("g_{}.csv", lc.label), &lc.curve, cfg.stopping.min_errors);
                }
            }
            Run::Gsc(g) => {
                let cfg = g.gsc_config()?;
                let curve = gsc_ber_sim(&cfg, &g.snr_db, g.draws, g.seed)?;
                let anchor = curve.points.iter().rev().find(|p| p.ber > 0.0);
                let dgv = anchor.map(|p| dgv_curve(cfg.diversity(), &g.snr_db, p.snr_db, p.ber)).transpose()?;
                out.curve("gsc.csv".into(), &curve, g.min_errors);
                if let Some(d) = dgv {
                    out.curve("dgv.csv".into(), &d, g.min_errors);
                }
            }
        }
        let Outputs { files, fits } = out;
        let mut outputs = Vec::with_capacity(files.len());
        for (name, body) in &files {
            write(&out_dir.join(name), body)?;
            outputs.push(OutputFile {
                file: name.clone(),
                sha256: hex::encode(Sha256::digest(body.as_bytes())),
            });
        }
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            run: self.clone(),
            run_hash: hash_json(self),
            outputs,
            fits,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        write(&out_dir.join(MANIFEST_FILE), &text)?;
        Ok(manifest)
    }
}

impl Manifest {
    /// Curves whose points all stopped at the trial cap.
    pub fn capped_files(&self) -> Vec<&str> {
        self.fits.iter().filter(|f| f.all_capped).map(|f| f.file.as_str()).collect()
    }
}

#[derive(Default)]
struct Outputs {
    files: Vec<(String, String)>,
    fits: Vec<FitRecord>,
}

impl Outputs {
    fn curve(&mut self, name: String, curve: &BerCurve, min_errors: u64) {
        self.fits.push(fit_record(&name, curve, min_errors));
        self.files.push((name, curve.to_csv_string()));
    }
}

fn write(path: &Path, body: &str) -> Result<(), CliError> {
    fs::write(path, body).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn with_mode(cfg: &ExperimentConfig, mode: Mode) -> ExperimentConfig {
    ExperimentConfig { mode, ..cfg.clone() }
}

fn with_users(cfg: &ExperimentConfig, count: usize) -> ExperimentConfig {
    let rf_chains = cfg.users.as_ref().and_then(|u| u.rf_chains);
    ExperimentConfig {
        users: Some(UsersConfig { count, rf_chains }),
        ..cfg.clone()
    }
}

fn fit_record(file: &str, curve: &BerCurve, min_errors: u64) -> FitRecord {
    let all_capped = curve.all_capped();
    match fit_slope(curve, min_errors) {
        Ok(f) => FitRecord {
            file: file.into(),
            slope: Some(f.slope),
            std_err: Some(f.std_err),
            snr_db: Some(f.snr_db),
            error: None,
            all_capped,
        },
        Err(e) => FitRecord {
            file: file.into(),
            slope: None,
            std_err: None,
            snr_db: None,
            error: Some(e.to_string()),
            all_capped,
        },
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

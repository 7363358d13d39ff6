//! CSV tables and the run manifest.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde::Serialize;

use crate::bias::BiasReport;
use crate::config::ExperimentConfig;
use crate::error::{io_err, Result};
use crate::experiment::Metrics;
use crate::replay::RelativeResult;
use crate::slls::HeatmapCell;

/// Directory that receives one file per table.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
}

#[derive(Serialize)]
struct ChannelRow {
    iteration: usize,
    channel: usize,
    side: &'static str,
    mean: f64,
    var: f64,
}

#[derive(Serialize)]
struct MaeRow {
    iteration: usize,
    mae_phi_deg: f64,
    mae_gamma: f64,
    recon_error: f64,
}

#[derive(Serialize)]
struct TrialRow {
    trial: usize,
    final_mae_phi_deg: f64,
    final_mae_gamma: f64,
    skips: u64,
    sbb_detected: bool,
    detection_iteration: Option<u64>,
    detection_delay: Option<u64>,
    false_alarm: bool,
    slls_db: Option<f64>,
    ideal_slls_db: Option<f64>,
}

#[derive(Serialize)]
struct BiasRow {
    channel: usize,
    measured_re: f64,
    measured_im: f64,
    b0_re: f64,
    b0_im: f64,
    b0_im_se: f64,
    z_re: f64,
    z_im: f64,
    b0_full_re: f64,
    b0_full_im: f64,
    z_full_re: f64,
    z_full_im: f64,
}

#[derive(Serialize)]
struct RelativeRow {
    iteration: usize,
    method: &'static str,
    mae_phi_deg: f64,
    mae_gamma: f64,
}

#[derive(Serialize)]
struct Manifest<'a, S: Serialize> {
    command: &'a str,
    version: &'a str,
    git_describe: Option<String>,
    seed: u64,
    config: &'a ExperimentConfig,
    summary: S,
}

/// `git describe --always --dirty` of the working directory, if available.
pub fn git_describe() -> Option<String> {
    let out = Command::new("git").args(["describe", "--always", "--dirty"]).output().ok()?;
    if !out.status.success() {
        return None;
    }
    let s = String::from_utf8(out.stdout).ok()?.trim().to_owned();
    (!s.is_empty()).then_some(s)
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self { root })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn write_rows<R: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<PathBuf> {
        let path = self.file(name);
        let mut w = csv::Writer::from_path(&path)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(io_err(&path))?;
        Ok(path)
    }

    /// Per-channel error mean and variance tables (gain, phase in degrees),
    /// MAE curves, per-trial summaries and the detection-delay histogram.
    pub fn write_metrics(&self, m: &Metrics) -> Result<Vec<PathBuf>> {
        let mode = m.mode.name();
        let rows = |phase: bool| {
            m.channels.iter().flat_map(move |c| {
                let series = if phase { &c.phi } else { &c.gamma };
                series.iter().enumerate().map(move |(i, s)| ChannelRow {
                    iteration: i + 1,
                    channel: c.channel,
                    side: c.side.name(),
                    mean: s.mean,
                    var: s.var(),
                })
            })
        };
        let mut out = vec![
            self.write_rows(&format!("gpi_gamma_{mode}.csv"), rows(false))?,
            self.write_rows(&format!("gpi_phi_{mode}.csv"), rows(true))?,
        ];
        out.push(self.write_rows(
            &format!("mae_{mode}.csv"),
            (0..m.mae_phi_deg.len()).map(|i| MaeRow {
                iteration: i + 1,
                mae_phi_deg: m.mae_phi_deg[i],
                mae_gamma: m.mae_gamma[i],
                recon_error: m.recon_error[i],
            }),
        )?);
        out.push(self.write_rows(
            &format!("trials_{mode}.csv"),
            m.trials.iter().map(|t| TrialRow {
                trial: t.trial,
                final_mae_phi_deg: t.final_mae_phi_deg,
                final_mae_gamma: t.final_mae_gamma,
                skips: t.skips,
                sbb_detected: t.sbb.detected,
                detection_iteration: t.sbb.detection_iteration,
                detection_delay: t.detection_delay,
                false_alarm: t.false_alarm,
                slls_db: t.slls_db,
                ideal_slls_db: t.ideal_slls_db,
            }),
        )?);
        let hist = m.sbb_histogram();
        if !hist.is_empty() {
            #[derive(Serialize)]
            struct HistRow {
                delay: u64,
                count: usize,
            }
            out.push(self.write_rows(
                &format!("sbb_hist_{mode}.csv"),
                hist.into_iter().map(|(delay, count)| HistRow { delay, count }),
            )?);
        }
        Ok(out)
    }

    pub fn write_heatmap(&self, cells: &[HeatmapCell]) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Row {
            snr_db: f64,
            level: u32,
            method: &'static str,
            mean_slls_db: f64,
            max_slls_db: f64,
            trials: usize,
        }
        self.write_rows(
            "heatmap.csv",
            cells.iter().map(|c| Row {
                snr_db: c.snr_db,
                level: c.level,
                method: c.method.name(),
                mean_slls_db: c.mean_slls_db,
                max_slls_db: c.max_slls_db,
                trials: c.trials,
            }),
        )
    }

    pub fn write_bias(&self, rep: &BiasReport) -> Result<PathBuf> {
        self.write_rows(
            "bias.csv",
            rep.channels.iter().map(|c| {
                let (z_re, z_im) = c.z();
                let (z_full_re, z_full_im) = c.z_full();
                BiasRow {
                    channel: c.channel,
                    measured_re: c.measured.re,
                    measured_im: c.measured.im,
                    b0_re: c.b0.re,
                    b0_im: c.b0.im,
                    b0_im_se: c.b0_im_se,
                    z_re,
                    z_im,
                    b0_full_re: c.b0_full.re,
                    b0_full_im: c.b0_full.im,
                    z_full_re,
                    z_full_im,
                }
            }),
        )
    }

    pub fn write_relative(&self, r: &RelativeResult) -> Result<PathBuf> {
        let rows = [&r.proposed, &r.st].into_iter().flat_map(|c| {
            (0..c.mae_phi_deg.len()).map(move |i| RelativeRow {
                iteration: i + 1,
                method: c.method,
                mae_phi_deg: c.mae_phi_deg[i],
                mae_gamma: c.mae_gamma[i],
            })
        });
        self.write_rows("relative.csv", rows)
    }

    pub fn write_table<R: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<PathBuf> {
        self.write_rows(name, rows)
    }

    /// `manifest.json`: command, crate version, git description, seed, the
    /// resolved configuration and a command-specific summary.
    pub fn write_manifest<S: Serialize>(&self, command: &str, cfg: &ExperimentConfig, summary: S) -> Result<PathBuf> {
        let path = self.file("manifest.json");
        let m = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            git_describe: git_describe(),
            seed: cfg.scenario.seed,
            config: cfg,
            summary,
        };
        let text = serde_json::to_string_pretty(&m)?;
        std::fs::write(&path, text + "\n").map_err(io_err(&path))?;
        Ok(path)
    }
}

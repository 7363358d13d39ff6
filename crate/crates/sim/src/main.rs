use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use radcal::{ArrayGeometry64, EstimatorConfig64};
use radcal_sim::bias::{empirical_bias_oracle, BiasOptions};
use radcal_sim::config::{HeatmapSpec, ImbalanceGen, RelativeSpec, SbbInjection, SllsEval};
use radcal_sim::doa::{estimate_doa_bias, synthesize_observations, DoaBiasObservation};
use radcal_sim::experiment::{ChannelSide, Experiment, Metrics};
use radcal_sim::output::OutputDir;
use radcal_sim::plots::{self, Series};
use radcal_sim::replay::{generate_replay, read_replay, relative_estimation, save_replay};
use radcal_sim::slls::{slls_heatmap, SllsMethod};
use radcal_sim::{run_experiment, ExperimentConfig, Mode, RunOptions};

#[derive(Parser)]
#[command(name = "radcal-sim", version, about = "Monte Carlo experiments for online radar channel imbalance estimation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML file layered over the command's defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo trials.
    #[arg(long, global = true)]
    mcs: Option<usize>,
    /// Signal vectors per trial.
    #[arg(long, global = true)]
    iters: Option<u64>,
    /// Output directory [default: results/<command>].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads [default: available cores].
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Write SVG figures next to the CSV tables.
    #[arg(long, global = true, default_value_t = true, action = clap::ArgAction::Set)]
    plots: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Constant imbalances, constant step size.
    Calibrate,
    /// Drifting phases, constant versus staged step size.
    Heatup,
    /// Proposed method against the single-target baseline, with sidelobe suppression.
    CompareSt,
    /// Sidelobe suppression over an SNR x imbalance-level grid.
    SllsHeatmap,
    /// Standalone break detection against the single-target baseline.
    Sbb,
    /// Break detection in the combined calibration and detection structure.
    Combined,
    /// Steady-state bias against its prediction from reconstruction statistics.
    Bias,
    /// Relative estimation of artificial imbalances on recorded vectors.
    Replay(ReplayArgs),
    /// DoA bias from stationary-target velocities.
    DoaBias(DoaArgs),
}

#[derive(Args)]
struct ReplayArgs {
    /// Replay file to read.
    #[arg(long, conflicts_with = "generate")]
    input: Option<PathBuf>,
    /// Generate a synthetic replay file with this many vectors first.
    #[arg(long)]
    generate: Option<usize>,
}

#[derive(Args)]
struct DoaArgs {
    /// CSV with columns `theta_meas,v_t`.
    #[arg(long, conflicts_with = "generate")]
    input: Option<PathBuf>,
    /// Synthesize this many noisy observations instead.
    #[arg(long)]
    generate: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    v_s: f64,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    theta_b: f64,
    /// Velocity noise standard deviation for generated observations.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
}

fn default_config(cmd: &Command) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    match cmd {
        Command::Calibrate | Command::Bias => {}
        Command::Heatup => {
            cfg.scenario.imbalance_gen = ImbalanceGen::HeatUp {
                phase_deg: 20.0,
                gain: 0.2,
                tau: 250.0,
                duration: 1000,
            };
        }
        Command::CompareSt => cfg.slls_eval = Some(SllsEval::default()),
        Command::SllsHeatmap => cfg.heatmap = Some(HeatmapSpec::default()),
        Command::Sbb | Command::Combined => {
            cfg.scenario.imbalance_gen = ImbalanceGen::None;
            cfg.sbb_injection = Some(SbbInjection::default());
        }
        Command::Replay(_) => {
            cfg.scenario.geom = ArrayGeometry64::new(3, 4, 0.6)?;
            cfg.relative = Some(RelativeSpec::default());
        }
        Command::DoaBias(_) => {}
    }
    Ok(cfg)
}

fn resolve(global: &Global, cmd: &Command) -> anyhow::Result<ExperimentConfig> {
    let base = default_config(cmd)?;
    let mut cfg = match &global.config {
        Some(p) => ExperimentConfig::load_over(&base, p)?,
        None => base,
    };
    if let Some(s) = global.seed {
        cfg.scenario.seed = s;
    }
    if let Some(m) = global.mcs {
        cfg.scenario.n_mcs = m;
    }
    if let Some(i) = global.iters {
        cfg.scenario.n_iterations = i;
    }
    if matches!(cmd, Command::Sbb) {
        let mu_0 = cfg.sbb.mu_0_fast;
        cfg = cfg.with_constant_step(mu_0)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn stats(v: &[f64]) -> Value {
    if v.is_empty() {
        return Value::Null;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    json!({ "mean": mean, "min": min, "max": max, "n": v.len() })
}

fn mode_summary(m: &Metrics) -> Value {
    let last = m.n_iterations.saturating_sub(1);
    let worst = |side: ChannelSide, phase: bool| {
        m.channels
            .iter()
            .filter(|c| c.side == side)
            .map(|c| if phase { c.phi[last].mean.abs() } else { c.gamma[last].mean.abs() })
            .fold(0.0, f64::max)
    };
    let delays: Vec<f64> = m.detection_delays().iter().map(|d| *d as f64).collect();
    let skips: Vec<f64> = m.trials.iter().map(|t| t.skips as f64).collect();
    json!({
        "mode": m.mode.name(),
        "completed": m.completed,
        "final_mae_phi_deg": m.mae_phi_deg.last(),
        "final_mae_gamma": m.mae_gamma.last(),
        "max_abs_mean_phase_error_deg": worst(ChannelSide::Va, true),
        "max_abs_mean_gain_error": worst(ChannelSide::Va, false),
        "skips": stats(&skips),
        "slls_db": stats(&m.slls_values()),
        "ideal_slls_db": stats(&m.ideal_slls_values()),
        "sbb_delay": stats(&delays),
        "sbb_missed": m.trials.iter().filter(|t| !t.sbb.detected).count(),
        "sbb_false_alarms": m.false_alarms(),
    })
}

fn curve(v: &[f64]) -> Vec<(f64, f64)> {
    v.iter().enumerate().map(|(i, y)| ((i + 1) as f64, *y)).collect()
}

fn experiment_plots(out: &OutputDir, exp: &Experiment, tag: &str) -> anyhow::Result<()> {
    let names: Vec<String> = exp.metrics.iter().map(|m| format!("{tag}{}", m.mode.name())).collect();
    let mae = |f: fn(&Metrics) -> &Vec<f64>| -> Vec<Series> {
        exp.metrics
            .iter()
            .zip(&names)
            .map(|(m, n)| Series {
                name: n,
                points: curve(f(m)),
            })
            .collect()
    };
    plots::line_chart(&out.file(&format!("{tag}mae_phi.svg")), "MAE of phase", "iteration", "degrees", &mae(|m| &m.mae_phi_deg))?;
    plots::line_chart(&out.file(&format!("{tag}mae_gamma.svg")), "MAE of gain", "iteration", "gain", &mae(|m| &m.mae_gamma))?;
    for m in &exp.metrics {
        let labels: Vec<String> = m
            .channels
            .iter()
            .filter(|c| c.side != ChannelSide::Va)
            .map(|c| format!("{} {}", c.side.name(), c.channel + 1))
            .collect();
        let series: Vec<Series> = m
            .channels
            .iter()
            .filter(|c| c.side != ChannelSide::Va)
            .zip(&labels)
            .map(|(c, l)| Series {
                name: l,
                points: c.phi.iter().enumerate().map(|(i, s)| ((i + 1) as f64, s.mean)).collect(),
            })
            .collect();
        plots::line_chart(
            &out.file(&format!("{tag}txrx_phase_error_{}.svg", m.mode.name())),
            "mean Tx/Rx phase error",
            "iteration",
            "degrees",
            &series,
        )?;
        let hist = m.sbb_histogram();
        if !hist.is_empty() {
            plots::histogram(
                &out.file(&format!("{tag}sbb_hist_{}.svg", m.mode.name())),
                "detection delay",
                "vectors after the break",
                &hist,
            )?;
        }
    }
    Ok(())
}

fn run_modes(
    cfg: &ExperimentConfig,
    modes: &[Mode],
    opts: &RunOptions,
    out: &OutputDir,
    plots: bool,
    tag: &str,
) -> anyhow::Result<Value> {
    let exp = run_experiment(cfg, modes, opts)?;
    let sub = if tag.is_empty() {
        out.clone()
    } else {
        OutputDir::create(out.file(tag.trim_end_matches('_')))?
    };
    for m in &exp.metrics {
        sub.write_metrics(m)?;
    }
    if plots {
        experiment_plots(&sub, &exp, "")?;
    }
    Ok(json!({
        "modes": exp.metrics.iter().map(mode_summary).collect::<Vec<_>>(),
        "failed_trials": exp.failures,
    }))
}

fn read_doa_csv(path: &Path) -> anyhow::Result<Vec<DoaBiasObservation>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(r.deserialize().collect::<Result<Vec<DoaBiasObservation>, _>>()?)
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let cfg = resolve(&cli.global, &cli.command)?;
    let name = match &cli.command {
        Command::Calibrate => "calibrate",
        Command::Heatup => "heatup",
        Command::CompareSt => "compare-st",
        Command::SllsHeatmap => "slls-heatmap",
        Command::Sbb => "sbb",
        Command::Combined => "combined",
        Command::Bias => "bias",
        Command::Replay(_) => "replay",
        Command::DoaBias(_) => "doa-bias",
    };
    let out = OutputDir::create(cli.global.out.clone().unwrap_or_else(|| Path::new("results").join(name)))?;
    let workers = cli.global.workers.unwrap_or_else(radcal_sim::parallel::default_workers);
    let opts = RunOptions {
        workers,
        keep_traces: false,
    };
    let plots = cli.global.plots;

    let summary = match &cli.command {
        Command::Calibrate | Command::CompareSt => {
            let modes: &[Mode] = if matches!(cli.command, Command::Calibrate) {
                &[Mode::Calibration]
            } else {
                &[Mode::Calibration, Mode::StBaseline]
            };
            run_modes(&cfg, modes, &opts, &out, plots, "")?
        }
        Command::Heatup => {
            let constant = run_modes(&cfg, &[Mode::Calibration], &opts, &out, plots, "constant_")?;
            let mut staged_cfg = cfg.clone();
            staged_cfg.estimator = EstimatorConfig64::heat_up(cfg.scenario.geom.k())?;
            let staged = run_modes(&staged_cfg, &[Mode::Calibration], &opts, &out, plots, "staged_")?;
            json!({ "constant": constant, "staged": staged })
        }
        Command::Sbb => run_modes(&cfg, &[Mode::Sbb, Mode::StBaseline], &opts, &out, plots, "")?,
        Command::Combined => run_modes(&cfg, &[Mode::Combined], &opts, &out, plots, "")?,
        Command::SllsHeatmap => {
            let cells = slls_heatmap(&cfg, workers)?;
            out.write_heatmap(&cells)?;
            if plots {
                for m in [SllsMethod::Proposed, SllsMethod::Ideal, SllsMethod::St] {
                    plots::heatmap(&out.file(&format!("heatmap_{}.svg", m.name())), &cells, m)?;
                }
            }
            serde_json::to_value(&cells)?
        }
        Command::Bias => {
            let rep = empirical_bias_oracle(
                &cfg,
                &BiasOptions {
                    converged_after: cfg.scenario.n_iterations / 2,
                    exact_reconstruction: false,
                    workers,
                },
            )?;
            out.write_bias(&rep)?;
            serde_json::to_value(&rep)?
        }
        Command::Replay(args) => {
            let records = match (&args.input, args.generate) {
                (Some(p), _) => read_replay(p)?,
                (None, Some(n)) => {
                    let (recs, _) = generate_replay(&cfg.scenario, n, 10)?;
                    save_replay(&out.file("replay.txt"), &recs, Some("synthetic replay"))?;
                    recs
                }
                (None, None) => bail!("replay needs --input <file> or --generate <n>"),
            };
            let res = relative_estimation(&records, &cfg, workers)?;
            out.write_relative(&res)?;
            if plots {
                for (file, title, unit, pick) in [
                    ("relative_mae_phi.svg", "MAE of artificial phase", "degrees", 0),
                    ("relative_mae_gamma.svg", "MAE of artificial gain", "gain", 1),
                ] {
                    let series: Vec<Series> = [&res.proposed, &res.st]
                        .iter()
                        .map(|c| Series {
                            name: c.method,
                            points: curve(if pick == 0 { &c.mae_phi_deg } else { &c.mae_gamma }),
                        })
                        .collect();
                    plots::line_chart(&out.file(file), title, "iteration", unit, &series)?;
                }
            }
            json!({
                "first_vectors": res.first_vectors,
                "second_vectors": res.second_vectors,
                "proposed_final_mae_phi_deg": res.proposed.mae_phi_deg.last(),
                "st_final_mae_phi_deg": res.st.mae_phi_deg.last(),
                "proposed_final_mae_gamma": res.proposed.mae_gamma.last(),
                "st_final_mae_gamma": res.st.mae_gamma.last(),
            })
        }
        Command::DoaBias(args) => {
            let obs = match (&args.input, args.generate) {
                (Some(p), _) => read_doa_csv(p)?,
                (None, Some(n)) => {
                    use rand::Rng;
                    use rand_distr::Distribution;
                    let mut rng = radcal_sim::trial::trial_rng(cfg.scenario.seed, 0);
                    let angles: Vec<f64> = (0..n).map(|_| rng.random_range(-70.0..70.0)).collect();
                    let mut obs = synthesize_observations(args.v_s, args.theta_b, &angles);
                    let noise = rand_distr::Normal::new(0.0, args.noise)?;
                    for o in obs.iter_mut() {
                        o.v_t += noise.sample(&mut rng);
                    }
                    out.write_table("doa_observations.csv", obs.iter())?;
                    obs
                }
                (None, None) => bail!("doa-bias needs --input <file> or --generate <n>"),
            };
            let fit = estimate_doa_bias(&obs)?;
            out.write_table("doa_bias.csv", std::iter::once(fit))?;
            json!({ "observations": obs.len(), "v_s": fit.v_s, "theta_b_deg": fit.theta_b })
        }
    };
    out.write_manifest(name, &cfg, &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    eprintln!("results in {}", out.path().display());
    Ok(())
}

//! Replay files of recorded signal vectors and the two-step relative
//! estimation of artificially injected imbalances.
//!
//! One vector per line: `frame_id, peak_id, K, re_1, im_1, ..., re_K, im_K`.
//! Lines starting with `#` and blank lines are ignored.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use radcal::imbalance::complex_to_gpi;
use radcal::{Complex64, Pipeline64, SignalKind, SignalVector64};
use serde::Serialize;

use crate::config::{ExperimentConfig, ImbalanceGen, ScenarioConfig};
use crate::error::{io_err, Result, SimError};
use crate::experiment::{wrap_angle, Moments};
use crate::parallel::fold_trials;
use crate::scene::{ImbalanceTrack, SceneGenerator};
use crate::trial::{st_baseline_step, trial_rng};

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayRecord {
    pub frame_id: u64,
    pub peak_id: u64,
    pub samples: Vec<Complex64>,
}

pub fn parse_replay<R: BufRead>(reader: R) -> Result<Vec<ReplayRecord>> {
    let mut out = Vec::new();
    let mut k_seen: Option<usize> = None;
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let bad = |msg: String| SimError::Replay { line: line_no, msg };
        let line = line.map_err(|e| bad(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(bad(format!("expected at least 3 fields, got {}", fields.len())));
        }
        let int = |i: usize, name: &str| fields[i].parse::<u64>().map_err(|e| bad(format!("{name}: {e}")));
        let frame_id = int(0, "frame_id")?;
        let peak_id = int(1, "peak_id")?;
        let k = int(2, "K")? as usize;
        if k == 0 {
            return Err(bad("K must be positive".into()));
        }
        if fields.len() != 3 + 2 * k {
            return Err(bad(format!("K = {k} needs {} fields, got {}", 3 + 2 * k, fields.len())));
        }
        if let Some(prev) = k_seen {
            if prev != k {
                return Err(bad(format!("K = {k} differs from earlier K = {prev}")));
            }
        }
        k_seen = Some(k);
        let mut values = Vec::with_capacity(2 * k);
        for f in &fields[3..] {
            let v: f64 = f.parse().map_err(|e| bad(format!("{f:?}: {e}")))?;
            if !v.is_finite() {
                return Err(bad(format!("non-finite sample {f}")));
            }
            values.push(v);
        }
        let samples = values.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
        out.push(ReplayRecord {
            frame_id,
            peak_id,
            samples,
        });
    }
    Ok(out)
}

pub fn read_replay(path: &Path) -> Result<Vec<ReplayRecord>> {
    let f = std::fs::File::open(path).map_err(io_err(path))?;
    parse_replay(std::io::BufReader::new(f))
}

pub fn write_replay<W: Write>(mut w: W, records: &[ReplayRecord], comment: Option<&str>) -> std::io::Result<()> {
    if let Some(c) = comment {
        for l in c.lines() {
            writeln!(w, "# {l}")?;
        }
    }
    writeln!(w, "# frame_id, peak_id, K, re_1, im_1, ..., re_K, im_K")?;
    let mut line = String::new();
    for r in records {
        line.clear();
        write!(line, "{}, {}, {}", r.frame_id, r.peak_id, r.samples.len()).expect("string write");
        for s in &r.samples {
            write!(line, ", {:.16e}, {:.16e}", s.re, s.im).expect("string write");
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn save_replay(path: &Path, records: &[ReplayRecord], comment: Option<&str>) -> Result<()> {
    let f = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(f);
    write_replay(&mut w, records, comment).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Synthetic recording: `n_vectors` scenes drawn from `cfg` under one
/// imbalance profile, `peaks_per_frame` vectors per frame. Returns the
/// records and the profile used.
pub fn generate_replay(
    cfg: &ScenarioConfig,
    n_vectors: usize,
    peaks_per_frame: usize,
) -> Result<(Vec<ReplayRecord>, radcal::ImbalanceProfile64)> {
    let gen = SceneGenerator::new(cfg)?;
    let mut rng = trial_rng(cfg.seed, 0);
    let track = ImbalanceTrack::draw(&cfg.imbalance_gen, &cfg.geom, &mut rng)?;
    let per = peaks_per_frame.max(1);
    let mut records = Vec::with_capacity(n_vectors);
    for i in 0..n_vectors {
        let profile = track.profile_at(i as u64 + 1)?;
        let scene = gen.draw_scene(&profile, &mut rng)?;
        records.push(ReplayRecord {
            frame_id: (i / per) as u64,
            peak_id: (i % per) as u64,
            samples: scene.measured.samples,
        });
    }
    let profile = track.profile_at(n_vectors as u64)?.into_owned();
    Ok((records, profile))
}

/// Mean curves of one method over the Monte Carlo runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelativeCurve {
    pub method: &'static str,
    /// Mean absolute VA phase error per iteration, degrees.
    pub mae_phi_deg: Vec<f64>,
    pub mae_gamma: Vec<f64>,
    /// Final MAE(phi) of each run, degrees.
    pub final_mae_phi_deg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelativeResult {
    pub first_vectors: usize,
    pub second_vectors: usize,
    pub proposed: RelativeCurve,
    pub st: RelativeCurve,
}

/// Odd-numbered vectors (1-based) and even-numbered ones.
pub fn split_odd_even(records: &[ReplayRecord]) -> (Vec<&ReplayRecord>, Vec<&ReplayRecord>) {
    let odd = records.iter().step_by(2).collect();
    let even = records.iter().skip(1).step_by(2).collect();
    (odd, even)
}

fn run_estimation(
    cfg: &ExperimentConfig,
    vectors: impl Iterator<Item = SignalVector64>,
    gated: bool,
    mut each: impl FnMut(&Pipeline64) -> Result<()>,
) -> Result<Pipeline64> {
    let mut p = Pipeline64::new(cfg.estimator.clone(), cfg.clean)?;
    for x in vectors {
        if gated {
            let r = p.reconstruct(&x)?;
            st_baseline_step(p.estimator_mut(), &x, &r)?;
        } else {
            p.process(&x)?;
        }
        each(&p)?;
    }
    Ok(p)
}

struct RunCurves {
    mae_phi: Vec<f64>,
    mae_gamma: Vec<f64>,
}

/// First estimation on the odd vectors gives a baseline per method; each run
/// then multiplies the even vectors by random artificial imbalances, estimates
/// again from scratch and scores `xi_hat_2 / xi_hat_base` against them.
pub fn relative_estimation(records: &[ReplayRecord], cfg: &ExperimentConfig, workers: usize) -> Result<RelativeResult> {
    cfg.validate()?;
    let spec = cfg.relative.clone().unwrap_or_default();
    if records.len() < spec.min_vectors {
        return Err(SimError::InsufficientData {
            needed: spec.min_vectors,
            got: records.len(),
        });
    }
    let geom = cfg.scenario.geom;
    if let Some(r) = records.iter().find(|r| r.samples.len() != geom.k()) {
        return Err(SimError::Config(format!(
            "replay vector of length {} does not match the {}-channel geometry",
            r.samples.len(),
            geom.k()
        )));
    }
    let (odd, even) = split_odd_even(records);
    let to_vec = |r: &ReplayRecord| SignalVector64::new(r.samples.clone(), SignalKind::Measured);
    let base: Vec<Vec<Complex64>> = [false, true]
        .iter()
        .map(|&gated| {
            let p = run_estimation(cfg, odd.iter().map(|r| to_vec(r)), gated, |_| Ok(()))?;
            Ok(p.estimator().state().xi_hat.clone())
        })
        .collect::<Result<_>>()?;

    let gen = ImbalanceGen::Uniform {
        phase_deg: spec.phase_deg,
        gain: spec.gain,
    };
    let n = even.len();
    let mut acc: Vec<Vec<(Moments, Moments)>> = vec![vec![Default::default(); n]; 2];
    let mut finals: [Vec<f64>; 2] = Default::default();
    fold_trials(
        cfg.scenario.n_mcs,
        workers,
        |m| {
            let mut rng = trial_rng(cfg.scenario.seed, m);
            let track = ImbalanceTrack::draw(&gen, &geom, &mut rng)?;
            let art = track.profile_at(1)?;
            let injected: Vec<SignalVector64> = even
                .iter()
                .map(|r| {
                    let s = r.samples.iter().zip(&art.psi).map(|(x, p)| x * p).collect();
                    SignalVector64::new(s, SignalKind::Measured)
                })
                .collect();
            [false, true]
                .iter()
                .zip(&base)
                .map(|(&gated, base)| {
                    let mut c = RunCurves {
                        mae_phi: Vec::with_capacity(n),
                        mae_gamma: Vec::with_capacity(n),
                    };
                    run_estimation(cfg, injected.iter().cloned(), gated, |p| {
                        let ratio: Vec<Complex64> =
                            p.estimator().state().xi_hat.iter().zip(base).map(|(a, b)| a / b).collect();
                        let (g, ph) = complex_to_gpi(&ratio);
                        let k = g.len() as f64;
                        c.mae_phi.push(
                            ph.iter().zip(&art.phi).map(|(e, t)| wrap_angle(e - t).abs()).sum::<f64>().to_degrees() / k,
                        );
                        c.mae_gamma.push(g.iter().zip(&art.gamma).map(|(e, t)| (e - t).abs()).sum::<f64>() / k);
                        Ok(())
                    })?;
                    Ok(c)
                })
                .collect::<Result<Vec<_>>>()
        },
        |_, curves| {
            for (method, c) in curves.into_iter().enumerate() {
                for (i, (p, g)) in c.mae_phi.iter().zip(&c.mae_gamma).enumerate() {
                    acc[method][i].0.push(*p);
                    acc[method][i].1.push(*g);
                }
                finals[method].push(c.mae_phi.last().copied().unwrap_or(0.0));
            }
        },
    )?;
    let [fp, fs] = finals;
    let curve = |method, a: &[(Moments, Moments)], fin| RelativeCurve {
        method,
        mae_phi_deg: a.iter().map(|m| m.0.mean).collect(),
        mae_gamma: a.iter().map(|m| m.1.mean).collect(),
        final_mae_phi_deg: fin,
    };
    Ok(RelativeResult {
        first_vectors: odd.len(),
        second_vectors: n,
        proposed: curve("proposed", &acc[0], fp),
        st: curve("st", &acc[1], fs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RelativeSpec;

    fn replay_cfg(n_mcs: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.scenario.geom = radcal::ArrayGeometry64::new(3, 4, 0.6).unwrap();
        cfg.scenario.n_mcs = n_mcs;
        cfg.scenario.snr_db = 25.0;
        cfg.estimator = radcal::EstimatorConfig64::heat_up(12).unwrap();
        cfg
    }

    #[test]
    fn write_then_parse_is_lossless() {
        let cfg = replay_cfg(1);
        let (recs, _) = generate_replay(&cfg.scenario, 25, 4).unwrap();
        let mut buf = Vec::new();
        write_replay(&mut buf, &recs, Some("synthetic\nsecond line")).unwrap();
        let back = parse_replay(buf.as_slice()).unwrap();
        assert_eq!(back, recs);
        assert_eq!((back[9].frame_id, back[9].peak_id), (2, 1));
    }

    #[test]
    fn malformed_lines_report_their_number() {
        let text = "# header\n0, 0, 2, 1, 0, 1, 0\n\n1, 0, 2, 1, 0, 1\n";
        match parse_replay(text.as_bytes()) {
            Err(SimError::Replay { line: 4, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(parse_replay("0, 0, 1, 1, nan\n".as_bytes()).is_err());
        assert!(parse_replay("0, 0, 1, 1, 0\n0, 1, 2, 1, 0, 1, 0\n".as_bytes()).is_err());
    }

    #[test]
    fn odd_count_splits_unevenly() {
        let r: Vec<ReplayRecord> = (0..7)
            .map(|i| ReplayRecord {
                frame_id: i,
                peak_id: 0,
                samples: vec![],
            })
            .collect();
        let (odd, even) = split_odd_even(&r);
        assert_eq!((odd.len(), even.len()), (4, 3));
        assert_eq!(odd[1].frame_id, 2);
        assert_eq!(even[0].frame_id, 1);
    }

    #[test]
    fn too_few_vectors() {
        let cfg = replay_cfg(1);
        let (recs, _) = generate_replay(&cfg.scenario, 99, 10).unwrap();
        assert!(matches!(
            relative_estimation(&recs, &cfg, 1),
            Err(SimError::InsufficientData { needed: 100, got: 99 })
        ));
    }

    #[test]
    fn null_injection_gives_unit_ratio() {
        let mut cfg = replay_cfg(2);
        cfg.relative = Some(RelativeSpec {
            phase_deg: 0.0,
            gain: 0.0,
            min_vectors: 100,
        });
        let (recs, _) = generate_replay(&cfg.scenario, 3000, 10).unwrap();
        let res = relative_estimation(&recs, &cfg, 1).unwrap();
        assert_eq!((res.first_vectors, res.second_vectors), (1500, 1500));
        let last = *res.proposed.mae_phi_deg.last().unwrap();
        // what remains is the steady-state noise of two independent estimates
        assert!(last < 1.5, "{last}");
        assert!(*res.proposed.mae_gamma.last().unwrap() < 0.05);
    }

    #[test]
    fn proposed_beats_st_on_synthetic_replay() {
        let cfg = replay_cfg(8);
        let (recs, _) = generate_replay(&cfg.scenario, 1200, 10).unwrap();
        let res = relative_estimation(&recs, &cfg, 1).unwrap();
        let p = *res.proposed.mae_phi_deg.last().unwrap();
        let s = *res.st.mae_phi_deg.last().unwrap();
        assert!(p < s, "proposed {p} vs st {s}");
        assert!(p < 2.0, "{p}");
    }
}

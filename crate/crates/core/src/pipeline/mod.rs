//! The four commands of the workbench as library functions:
//! [`generate`], [`train`], [`rollout_file`] and [`evaluate`].
//!
//! A dataset directory holds one `LGTR` file per trajectory plus
//! `dataset.json` (the run configuration and split manifest) and
//! `ekin.csv`. A checkpoint directory holds `latest.ckpt`, `best.ckpt`,
//! `curve.csv` and `config.json`. Every output embeds the configuration and
//! seed it was produced from.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::io::{
    ekin_csv, eval_steps_csv, read_curve_csv, read_trajectory, summary_json, write_curve_csv, write_trajectory, Checkpoint,
    EvalSummary, RunConfig, Split,
};
use crate::metrics::{evaluate_rollout, frame_kinetic_energies, EvalReport};
use crate::models::Model;
use crate::par;
use crate::sph::{generate_trajectory, Scenario, Trajectory};
use crate::training::{
    compute_stats, connectivity_radius, rollout, AccelerationModel, CurveRow, LearnedSimulator, TrainState, Trainer,
};

pub const MANIFEST_FILE: &str = "dataset.json";
pub const EKIN_FILE: &str = "ekin.csv";
pub const LATEST_CHECKPOINT: &str = "latest.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const CURVE_FILE: &str = "curve.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const STEPS_FILE: &str = "steps.csv";

/// One trajectory (or time window of one) in a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub split: Split,
    /// File name relative to the dataset directory.
    pub file: String,
    /// `[start, end)` frame window, or the whole file if absent.
    pub window: Option<(usize, usize)>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub config: RunConfig,
    pub entries: Vec<DatasetEntry>,
}

impl DatasetManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Loads the trajectories of `split`, cut to their windows, with names.
    pub fn load_split(&self, dir: &Path, split: Split) -> Result<Vec<(String, Trajectory)>> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| {
                let traj = read_trajectory(&dir.join(&e.file))?;
                let (name, traj) = match e.window {
                    Some((a, b)) => (format!("{}[{a}..{b}]", e.file), slice_frames(&traj, a, b)?),
                    None => (e.file.clone(), traj),
                };
                Ok((name, traj))
            })
            .collect()
    }
}

/// Frames `start..end` of `traj` as a trajectory of their own.
pub fn slice_frames(traj: &Trajectory, start: usize, end: usize) -> Result<Trajectory> {
    if start >= end || end > traj.num_frames() {
        return Err(Error::Index(format!("frame window {start}..{end} outside {} frames", traj.num_frames())));
    }
    let mut metadata = traj.metadata.clone();
    if let Some(obj) = metadata.as_object_mut() {
        obj.insert("window".into(), json!([start, end]));
    }
    Ok(Trajectory {
        scenario: traj.scenario,
        domain: traj.domain,
        frame_dt: traj.frame_dt,
        positions: traj.positions[start..end].to_vec(),
        velocities: traj.velocities.as_ref().map(|v| v[start..end].to_vec()),
        metadata,
    })
}

/// Removes the listed files unless disarmed; keeps failed runs from
/// leaving half a dataset behind.
struct Cleanup(Vec<PathBuf>);

impl Drop for Cleanup {
    fn drop(&mut self) {
        for p in &self.0 {
            let _ = fs::remove_file(p);
        }
    }
}

fn ekin_series(traj: &Trajectory) -> Vec<f64> {
    traj.kinetic_energy().unwrap_or_else(|| frame_kinetic_energies(traj))
}

/// Generates the dataset described by `run` into `out_dir`.
///
/// Taylor-Green: the requested number of independent trajectories per split,
/// each from its own derived seed. Reverse Poiseuille: one long trajectory
/// cut into consecutive train/valid/test windows. `progress` receives one
/// line per finished trajectory.
pub fn generate(run: &RunConfig, out_dir: &Path, mut progress: impl FnMut(&str)) -> Result<DatasetManifest> {
    run.validate()?;
    fs::create_dir_all(out_dir)?;
    let jobs: Vec<(Split, usize)> = match run.scenario.scenario {
        Scenario::Tgv => {
            let d = &run.dataset;
            Split::ALL
                .iter()
                .zip([d.train_trajectories, d.valid_trajectories, d.test_trajectories])
                .flat_map(|(&s, n)| (0..n).map(move |i| (s, i)))
                .collect()
        }
        Scenario::Rpf => vec![(Split::Train, 0)],
    };
    let mut cleanup = Cleanup(Vec::new());
    let mut entries = Vec::new();
    let mut energies = Vec::new();
    for (split, index) in jobs {
        let seed = run.trajectory_seed(split, index);
        let traj = generate_trajectory(&run.scenario, seed)?;
        let file = match run.scenario.scenario {
            Scenario::Tgv => format!("{}_{index:03}.lgtr", split.name()),
            Scenario::Rpf => "rpf.lgtr".to_string(),
        };
        let path = out_dir.join(&file);
        cleanup.0.push(path.clone());
        write_trajectory(&path, &traj)?;
        // Energies of the stored (single-precision) data, as consumers see it.
        let stored = read_trajectory(&path)?;
        let series = ekin_series(&stored);
        progress(&format!(
            "{file}: {} frames, {} particles, E_kin {:.6e} -> {:.6e}",
            stored.num_frames(),
            stored.num_particles(),
            series.first().copied().unwrap_or(f64::NAN),
            series.last().copied().unwrap_or(f64::NAN)
        ));
        energies.push((file.clone(), series));
        match run.scenario.scenario {
            Scenario::Tgv => entries.push(DatasetEntry { split, file, window: None, seed }),
            Scenario::Rpf => {
                for (s, w) in Split::ALL.iter().zip(run.time_windows()) {
                    entries.push(DatasetEntry { split: *s, file: file.clone(), window: Some(w), seed });
                }
            }
        }
    }
    let manifest = DatasetManifest { config: run.clone(), entries };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    cleanup.0.push(manifest_path.clone());
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    let ekin_path = out_dir.join(EKIN_FILE);
    cleanup.0.push(ekin_path.clone());
    fs::write(&ekin_path, ekin_csv(&energies))?;
    cleanup.0.clear();
    Ok(manifest)
}

fn check_dataset(run: &RunConfig, trajs: &[(String, Trajectory)]) -> Result<()> {
    for (name, t) in trajs {
        if t.domain != run.scenario.domain {
            return Err(Error::Config(format!("{name}: box {:?} differs from the configured box", t.domain.lengths)));
        }
        if t.scenario != run.scenario.scenario {
            return Err(Error::Config(format!("{name}: scenario differs from the configuration")));
        }
        let h = run.model.history;
        if t.num_frames() < h + 2 {
            return Err(Error::Config(format!("{name}: {} frames are too few for history {h}", t.num_frames())));
        }
    }
    Ok(())
}

fn checkpoint_metadata(run: &RunConfig) -> Result<serde_json::Value> {
    Ok(json!({
        "run": serde_json::to_value(run)?,
        "generator": concat!("lagfluid ", env!("CARGO_PKG_VERSION")),
    }))
}

/// What [`train`] did.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Every curve row of the run, including rows from before a resume.
    pub curve: Vec<CurveRow>,
    /// Step the run resumed from, if it did.
    pub resumed_from: Option<u64>,
}

/// Trains the configured model on `dataset_dir`, writing checkpoints and the
/// training curve to `checkpoint_dir`. Resumes from `latest.ckpt` if present.
pub fn train(
    run: &RunConfig,
    dataset_dir: &Path,
    checkpoint_dir: &Path,
    mut on_row: impl FnMut(&CurveRow),
) -> Result<TrainOutcome> {
    run.validate()?;
    let manifest = DatasetManifest::load(dataset_dir)?;
    let train_set = manifest.load_split(dataset_dir, Split::Train)?;
    let valid_set = manifest.load_split(dataset_dir, Split::Valid)?;
    check_dataset(run, &train_set)?;
    check_dataset(run, &valid_set)?;
    let train_trajs: Vec<Trajectory> = train_set.into_iter().map(|(_, t)| t).collect();
    let valid_trajs: Vec<Trajectory> = valid_set.into_iter().map(|(_, t)| t).collect();
    fs::create_dir_all(checkpoint_dir)?;
    fs::write(checkpoint_dir.join(CONFIG_FILE), run.to_json()?)?;

    let (model, fresh_params) = Model::build(&run.model)?;
    let latest = checkpoint_dir.join(LATEST_CHECKPOINT);
    let curve_path = checkpoint_dir.join(CURVE_FILE);
    let (stats, mut state, mut curve, resumed_from) = if latest.exists() {
        let ckpt = Checkpoint::load(&latest)?;
        if ckpt.model != run.model {
            return Err(Error::Config("checkpoint was written for a different model configuration".into()));
        }
        model.check_store(&ckpt.params)?;
        let optimizer = ckpt.optimizer.ok_or_else(|| Error::Format("latest checkpoint lacks optimizer state".into()))?;
        let step = optimizer.step;
        let curve: Vec<CurveRow> = if curve_path.exists() {
            read_curve_csv(&curve_path)?.into_iter().filter(|r| r.step <= step).collect()
        } else {
            Vec::new()
        };
        let state = TrainState { params: ckpt.params, optimizer, best_valid: ckpt.best_valid };
        (ckpt.stats, state, curve, Some(step))
    } else {
        let stats = compute_stats(&train_trajs, run.model.kind.normalization())?;
        (stats, TrainState::new(fresh_params), Vec::new(), None)
    };
    let trainer = Trainer::new(&model, &run.train, &stats, &train_trajs, &valid_trajs)?;
    let metadata = checkpoint_metadata(run)?;
    let snapshot = |state: &TrainState| Checkpoint {
        model: run.model.clone(),
        stats: stats.clone(),
        params: state.params.clone(),
        optimizer: Some(state.optimizer.clone()),
        best_valid: state.best_valid,
        metadata: metadata.clone(),
    };
    trainer.run(&mut state, |row, state, improved| {
        let ckpt = snapshot(state);
        ckpt.save(&latest)?;
        if improved {
            ckpt.save(&checkpoint_dir.join(BEST_CHECKPOINT))?;
        }
        curve.push(row.clone());
        write_curve_csv(&curve_path, &curve)?;
        on_row(row);
        Ok(())
    })?;
    Ok(TrainOutcome { curve, resumed_from })
}

fn load_consistent_checkpoint(run: &RunConfig, path: &Path) -> Result<(Model, Checkpoint)> {
    let ckpt = Checkpoint::load(path)?;
    if ckpt.model != run.model {
        return Err(Error::Config(format!("{} holds a different model than the configuration", path.display())));
    }
    let (model, _) = Model::build(&ckpt.model)?;
    model.check_store(&ckpt.params)?;
    Ok((model, ckpt))
}

/// Rolls the checkpointed model out from the first `H + 1` frames of the
/// trajectory at `input` and writes seed plus predicted frames to `output`.
/// Returns the step at which the rollout diverged, if it did.
pub fn rollout_file(run: &RunConfig, checkpoint: &Path, input: &Path, output: &Path) -> Result<Option<usize>> {
    run.validate()?;
    let (model, ckpt) = load_consistent_checkpoint(run, checkpoint)?;
    let reference = read_trajectory(input)?;
    check_dataset(run, &[(input.display().to_string(), reference.clone())])?;
    let sim = LearnedSimulator { model: &model, params: &ckpt.params, stats: &ckpt.stats };
    let radius = connectivity_radius(&reference.domain, reference.num_particles(), run.train.radius_factor);
    let outcome = rollout(&sim, &reference, 0, run.eval.rollout_steps, radius)?;
    write_trajectory(output, &outcome.trajectory)?;
    Ok(outcome.diverged_at)
}

/// Rolls `model` out over every trajectory and scores it. Rollouts start at
/// frame 0 and run `rollout_steps` or as far as the reference allows.
pub fn evaluate_model<M: AccelerationModel + Sync + ?Sized>(
    model: &M,
    run: &RunConfig,
    tests: &[(String, Trajectory)],
) -> Result<Vec<(String, EvalReport)>> {
    let h = model.history();
    par::map_range(tests.len(), |i| {
        let (name, reference) = &tests[i];
        let steps = run.eval.rollout_steps.min(reference.num_frames().saturating_sub(h + 1));
        let radius = connectivity_radius(&reference.domain, reference.num_particles(), run.train.radius_factor);
        let outcome = rollout(model, reference, 0, steps, radius)?;
        let report = evaluate_rollout(&outcome.trajectory, reference, 0, h + 1, outcome.diverged_at, &run.eval.options)?;
        Ok((name.clone(), report))
    })
    .into_iter()
    .collect()
}

/// Writes `steps.csv` and `summary.json` for `reports` into `report_dir`.
pub fn write_reports(run: &RunConfig, reports: &[(String, EvalReport)], report_dir: &Path) -> Result<EvalSummary> {
    fs::create_dir_all(report_dir)?;
    let summary = EvalSummary::from_reports(reports.iter().map(|(_, r)| r));
    let dataset = match run.scenario.scenario {
        Scenario::Tgv => "tgv",
        Scenario::Rpf => "rpf",
    };
    let mut all = BTreeMap::new();
    all.insert(dataset.to_string(), summary);
    fs::write(report_dir.join(STEPS_FILE), eval_steps_csv(reports))?;
    fs::write(report_dir.join(SUMMARY_FILE), summary_json(&all)?)?;
    Ok(summary)
}

/// Result of [`evaluate`].
#[derive(Clone, Debug)]
pub struct EvaluateOutcome {
    pub summary: EvalSummary,
    pub reports: Vec<(String, EvalReport)>,
}

impl EvaluateOutcome {
    /// `(trajectory, step)` of every rollout that blew up.
    pub fn divergences(&self) -> Vec<(&str, usize)> {
        self.reports.iter().filter_map(|(n, r)| r.diverged_at.map(|s| (n.as_str(), s))).collect()
    }
}

/// Evaluates the checkpoint on the dataset's test split.
pub fn evaluate(run: &RunConfig, checkpoint: &Path, dataset_dir: &Path, report_dir: &Path) -> Result<EvaluateOutcome> {
    run.validate()?;
    let (model, ckpt) = load_consistent_checkpoint(run, checkpoint)?;
    let manifest = DatasetManifest::load(dataset_dir)?;
    let tests = manifest.load_split(dataset_dir, Split::Test)?;
    if tests.is_empty() {
        return Err(Error::Config("dataset has no test trajectories".into()));
    }
    check_dataset(run, &tests)?;
    let sim = LearnedSimulator { model: &model, params: &ckpt.params, stats: &ckpt.stats };
    let reports = evaluate_model(&sim, run, &tests)?;
    let summary = write_reports(run, &reports, report_dir)?;
    Ok(EvaluateOutcome { summary, reports })
}

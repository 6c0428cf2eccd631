//! On-disk layout of one run:
//! `<outdir>/<problem>/<method>/<mode>/seed<k>/` holding `records.csv`,
//! `config.json`, `checkpoint.bin` and optionally `scores_<cycle>.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, Observer, TrainError, TrainState, Trainer};
use crate::eval::{read_records, write_records, GroundTruth, RunRecord};
use crate::mlp::write_checkpoint;
use crate::pde::Point;
use crate::scoring::ScoreVector;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Zero wall-clock column, so records depend only on the config.
    pub deterministic: bool,
    /// Recompute even when a finished run with the same fingerprint exists.
    pub force: bool,
}

#[derive(Serialize, Deserialize)]
struct Stamp {
    fingerprint: String,
    config: ExperimentConfig,
}

pub fn run_dir(outdir: &Path, config: &ExperimentConfig) -> PathBuf {
    outdir
        .join(config.problem.name())
        .join(config.method.name())
        .join(config.mode.name())
        .join(format!("seed{}", config.seed))
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io { path: path.display().to_string(), source }
}

/// Writes `scores_<cycle>.csv` with columns `x,t,score,selected`.
pub struct ScoreDump {
    dir: PathBuf,
    error: Option<TrainError>,
}

impl ScoreDump {
    pub fn new(dir: &Path) -> Self {
        ScoreDump { dir: dir.to_path_buf(), error: None }
    }

    fn write(&self, cycle: usize, candidates: &[Point], scores: &ScoreVector, selected: &[usize]) -> Result<(), TrainError> {
        let path = self.dir.join(format!("scores_{cycle}.csv"));
        let mut flag = vec![false; candidates.len()];
        for &i in selected {
            flag[i] = true;
        }
        let csv_fail = |e: csv::Error| TrainError::Artifact(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(csv_fail)?;
        w.write_record(["x", "t", "score", "selected"]).map_err(csv_fail)?;
        for ((p, s), f) in candidates.iter().zip(scores.scores()).zip(&flag) {
            w.serialize((p[0], p[1], s, u8::from(*f))).map_err(csv_fail)?;
        }
        w.flush().map_err(io(&path))
    }

    pub fn take_error(&mut self) -> Option<TrainError> {
        self.error.take()
    }
}

impl Observer for ScoreDump {
    fn on_scores(&mut self, cycle: usize, candidates: &[Point], scores: &ScoreVector, selected: &[usize]) {
        if self.error.is_none() {
            self.error = self.write(cycle, candidates, scores, selected).err();
        }
    }
}

/// Persists records after every cycle so progress is visible on disk.
struct DirObserver {
    records: PathBuf,
    scores: Option<ScoreDump>,
    error: Option<TrainError>,
}

impl Observer for DirObserver {
    fn on_scores(&mut self, cycle: usize, candidates: &[Point], scores: &ScoreVector, selected: &[usize]) {
        if let Some(dump) = &mut self.scores {
            dump.on_scores(cycle, candidates, scores, selected);
        }
    }

    fn on_cycle_end(&mut self, state: &TrainState) {
        if self.error.is_none() {
            self.error = write_records(&self.records, &state.records).err().map(TrainError::from);
        }
    }
}

fn finished(dir: &Path, config: &ExperimentConfig) -> Option<Vec<RunRecord>> {
    let stamp: Stamp = serde_json::from_str(&fs::read_to_string(dir.join("config.json")).ok()?).ok()?;
    if stamp.fingerprint != format!("{:016x}", config.fingerprint()) || !dir.join("checkpoint.bin").is_file() {
        return None;
    }
    let records = read_records(&dir.join("records.csv")).ok()?;
    let last = records.last()?;
    (!last.is_ok() || last.cycle == config.cycles).then_some(records)
}

/// Outcome of [`run_in_dir`].
#[derive(Clone, Debug)]
pub struct RunResult {
    pub dir: PathBuf,
    pub records: Vec<RunRecord>,
    /// Reused from an earlier identical run.
    pub skipped: bool,
}

impl RunResult {
    pub fn failed(&self) -> bool {
        self.records.iter().any(|r| !r.is_ok())
    }
}

/// Runs `config` into its directory under `outdir`, or reuses a finished
/// run with the same fingerprint.
pub fn run_in_dir(
    config: &ExperimentConfig,
    truth: &GroundTruth,
    outdir: &Path,
    options: RunOptions,
) -> Result<RunResult, TrainError> {
    config.validate()?;
    let dir = run_dir(outdir, config);
    if !options.force {
        if let Some(records) = finished(&dir, config) {
            info!("{}: finished run found, skipping", dir.display());
            return Ok(RunResult { dir, records, skipped: true });
        }
    }
    fs::create_dir_all(&dir).map_err(io(&dir))?;
    // a stale checkpoint would mark a half-written run as finished
    let checkpoint = dir.join("checkpoint.bin");
    if checkpoint.exists() {
        fs::remove_file(&checkpoint).map_err(io(&checkpoint))?;
    }
    let stamp = Stamp { fingerprint: format!("{:016x}", config.fingerprint()), config: config.clone() };
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&stamp).expect("config serializes") + "\n").map_err(io(&path))?;

    let trainer = Trainer::new(config.clone(), truth)?.deterministic(options.deterministic);
    let mut observer = DirObserver {
        records: dir.join("records.csv"),
        scores: config.save_scores.then(|| ScoreDump::new(&dir)),
        error: None,
    };
    let state = trainer.run(&mut observer)?;
    if let Some(e) = observer.error.take().or_else(|| observer.scores.as_mut().and_then(ScoreDump::take_error)) {
        return Err(e);
    }
    write_checkpoint(&checkpoint, &state.theta, config.seeds.model)?;
    Ok(RunResult { dir, records: state.records, skipped: false })
}

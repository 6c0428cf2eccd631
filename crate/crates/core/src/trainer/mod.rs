//! The resampling loop: sample candidates, score them with the current
//! model, draw new collocation points, perturb the training set and
//! fine-tune, for a fixed number of cycles.

use std::time::Instant;

use log::{debug, info, warn};
use thiserror::Error;

use crate::autodiff::AdError;
use crate::engine;
use crate::eval::{EvalError, Evaluator, GroundTruth, RunRecord, RunStatus};
use crate::influence::{test_loss_grad, InfluenceContext};
use crate::mlp::{init, MlpError, MlpSpec, ParamVector};
use crate::optim::{adam_run, lbfgs_run, AdamState, OptimError};
use crate::pde::{PdeProblem, Point};
use crate::sampling::{build_pmf, hammersley, sample_without_replacement, uniform_sample, SamplingError};
use crate::scoring::{
    score_grad_dot, score_loss_grad, score_output_grad, score_pinnfluence, score_random, score_rar, Method,
    ScoreVector, ScoringError,
};

mod artifacts;
mod config;

pub use artifacts::{run_dir, run_in_dir, RunOptions, RunResult, ScoreDump};
pub use config::{mix_seed, full_scale_hidden, ExperimentConfig, Mode, Seeds};

#[derive(Debug, Error)]
pub enum TrainError {
    /// `keys` names the settings involved.
    #[error("invalid configuration: {message}")]
    InvalidConfig { keys: &'static [&'static str], message: String },
    /// A numerical failure inside a cycle; the run is recorded as failed.
    #[error("diverged in cycle {cycle}: {reason}")]
    Diverged { cycle: usize, reason: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Artifact(String),
}

/// Parameters, training set and bookkeeping of a run in progress.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub theta: ParamVector,
    pub x_train: Vec<Point>,
    /// Last completed cycle; 0 before the first.
    pub cycle: usize,
    pub adam: AdamState,
    pub records: Vec<RunRecord>,
}

/// Instrumentation hooks, called in loop order.
pub trait Observer {
    /// After scoring and selection, before the training set changes.
    fn on_scores(&mut self, _cycle: usize, _candidates: &[Point], _scores: &ScoreVector, _selected: &[usize]) {}
    /// After the cycle's fine-tuning and evaluation.
    fn on_cycle_end(&mut self, _state: &TrainState) {}
}

impl Observer for () {}

/// Everything fixed for the lifetime of one run.
pub struct Trainer {
    config: ExperimentConfig,
    problem: PdeProblem,
    spec: MlpSpec,
    evaluator: Evaluator,
    started: Instant,
    deterministic: bool,
}

fn diverged(cycle: usize) -> impl Fn(String) -> TrainError {
    move |reason| TrainError::Diverged { cycle, reason }
}

impl Trainer {
    pub fn new(config: ExperimentConfig, truth: &GroundTruth) -> Result<Self, TrainError> {
        config.validate()?;
        let problem = PdeProblem::new(config.problem);
        let spec = MlpSpec::new(2, config.hidden.clone(), 1)?;
        let evaluator = Evaluator::new(&problem, truth, config.n_eval, config.n_holdout, config.eval_seed)?;
        Ok(Trainer { config, problem, spec, evaluator, started: Instant::now(), deterministic: false })
    }

    /// Reports zero wall-clock time so records depend only on the config.
    pub fn deterministic(mut self, on: bool) -> Self {
        self.deterministic = on;
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn problem(&self) -> &PdeProblem {
        &self.problem
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    fn elapsed(&self) -> f64 {
        if self.deterministic {
            0.0
        } else {
            self.started.elapsed().as_secs_f64()
        }
    }

    /// Scores of `candidates` under `theta` with the configured method.
    pub fn score(
        &self,
        theta: &[f64],
        x_train: &[Point],
        candidates: &[Point],
        cycle: usize,
    ) -> Result<ScoreVector, ScoringError> {
        let (p, s, cfg) = (&self.problem, &self.spec, &self.config);
        let x_test = || uniform_sample(p.domain(), cfg.influence.test_size, cfg.seeds.test_set(cycle));
        match cfg.method {
            Method::Pinnfluence => {
                let ctx =
                    InfluenceContext::prepare(p, s, theta, x_train, &x_test(), &cfg.influence, cfg.seeds.arnoldi(cycle))?;
                score_pinnfluence(&ctx, p, s, candidates)
            }
            Method::GradDot => {
                let g_test = test_loss_grad(p, s, theta, &x_test())?;
                score_grad_dot(p, s, theta, &g_test, candidates)
            }
            Method::Rar => score_rar(p, s, theta, candidates),
            Method::OutputGrad => score_output_grad(p, s, theta, candidates),
            Method::LossGrad => score_loss_grad(p, s, theta, candidates),
            Method::Random => Ok(score_random(candidates.len(), cfg.seeds.random_scores(cycle))),
            Method::Static => Err(ScoringError::Unscored(Method::Static)),
        }
    }

    /// Steps 2 to 4 of a cycle: candidates, scores, selected indices.
    fn select(
        &self,
        theta: &[f64],
        x_train: &[Point],
        cycle: usize,
        count: usize,
        observer: &mut dyn Observer,
    ) -> Result<Vec<Point>, TrainError> {
        let cfg = &self.config;
        let fail = diverged(cycle);
        let candidates = uniform_sample(self.problem.domain(), cfg.n_cand, cfg.seeds.candidates(cycle));
        let scores = self.score(theta, x_train, &candidates, cycle).map_err(|e| fail(e.to_string()))?;
        let pmf = build_pmf(scores.scores(), cfg.alpha, cfg.c).map_err(|e: SamplingError| fail(e.to_string()))?;
        let chosen = sample_without_replacement(&pmf, count, cfg.seeds.selection(cycle)).map_err(|e| fail(e.to_string()))?;
        observer.on_scores(cycle, &candidates, &scores, &chosen);
        Ok(chosen.iter().map(|&i| candidates[i]).collect())
    }

    /// Initial collocation set: Hammersley in add mode; in replace mode a
    /// scored draw from fresh candidates with the untrained model (uniform
    /// for the static baseline).
    pub fn init_training_set(&self, theta: &[f64], observer: &mut dyn Observer) -> Result<Vec<Point>, TrainError> {
        let cfg = &self.config;
        let domain = self.problem.domain();
        match (cfg.mode, cfg.method) {
            (Mode::Add, _) => Ok(hammersley(domain, cfg.n_train)),
            (Mode::Replace, Method::Static) => Ok(uniform_sample(domain, cfg.n_train, cfg.seeds.candidates(0))),
            (Mode::Replace, _) => {
                // a provisional set stands in for the training Hessian
                let provisional = hammersley(domain, cfg.n_train);
                self.select(theta, &provisional, 0, cfg.n_train, observer)
            }
        }
    }

    fn fine_tune(&self, state: &mut TrainState, adam_iters: usize, lbfgs_iters: usize, cycle: usize) -> Result<f64, TrainError> {
        let (problem, spec, x) = (&self.problem, &self.spec, &state.x_train);
        let weight = 1.0 / x.len() as f64;
        let n = state.theta.len();
        let mut objective = |theta: &[f64]| match engine::loss_and_grad(problem, spec, theta, x, weight) {
            Err(AdError::NonFiniteResidual { .. }) => Ok((f64::NAN, vec![0.0; n])),
            other => other,
        };
        let fail = diverged(cycle);
        let optim_fail = |e: OptimError| fail(e.to_string());
        state.adam = AdamState::new(n);
        let mut loss = adam_run(&mut objective, state.theta.values_mut(), adam_iters, &mut state.adam, &self.config.adam())
            .map_err(optim_fail)?;
        if lbfgs_iters > 0 {
            let report = lbfgs_run(&mut objective, state.theta.values_mut(), lbfgs_iters, &self.config.lbfgs())
                .map_err(optim_fail)?;
            debug!("cycle {cycle}: L-BFGS {:?} after {} iterations", report.stop, report.iterations);
            loss = report.loss;
        }
        if !loss.is_finite() || state.theta.values().iter().any(|t| !t.is_finite()) {
            return Err(fail(format!("non-finite training loss {loss}")));
        }
        Ok(loss)
    }

    fn record(&self, state: &TrainState, cycle: usize) -> Result<RunRecord, TrainError> {
        let (l2, test_loss) = self
            .evaluator
            .evaluate(&self.problem, &self.spec, state.theta.values())
            .map_err(|e| match e {
                EvalError::Ad(ad) => diverged(cycle)(ad.to_string()),
                other => other.into(),
            })?;
        if !(l2.is_finite() && test_loss.is_finite()) {
            return Err(diverged(cycle)(format!("non-finite metrics l2={l2} loss={test_loss}")));
        }
        Ok(RunRecord {
            cycle,
            train_size: state.x_train.len(),
            test_loss,
            l2_rel_error: l2,
            wall_seconds: self.elapsed(),
            status: RunStatus::Ok,
        })
    }

    /// Initial model and collocation set, optional pretraining, and the
    /// cycle-0 snapshot.
    pub fn init_state(&self, observer: &mut dyn Observer) -> Result<TrainState, TrainError> {
        let theta = init(&self.spec, self.config.seeds.model);
        let x_train = self.init_training_set(theta.values(), observer)?;
        let n = theta.len();
        let mut state = TrainState { theta, x_train, cycle: 0, adam: AdamState::new(n), records: Vec::new() };
        if self.config.pretrain_iters > 0 {
            self.fine_tune(&mut state, self.config.pretrain_iters, self.config.pretrain_iters, 0)?;
        }
        let rec = self.record(&state, 0)?;
        state.records.push(rec);
        observer.on_cycle_end(&state);
        Ok(state)
    }

    /// One pass: score with the current parameters, perturb the training
    /// set, reset Adam, fine-tune, evaluate.
    pub fn run_cycle(&self, state: &mut TrainState, observer: &mut dyn Observer) -> Result<(), TrainError> {
        let cycle = state.cycle + 1;
        let cfg = &self.config;
        if cfg.method != Method::Static {
            let fresh = self.select(state.theta.values(), &state.x_train, cycle, cfg.n_new, observer)?;
            match cfg.mode {
                Mode::Add => state.x_train.extend(fresh),
                Mode::Replace => state.x_train = fresh,
            }
        }
        let loss = self.fine_tune(state, cfg.adam_iters, cfg.lbfgs_iters, cycle)?;
        state.cycle = cycle;
        let rec = self.record(state, cycle)?;
        info!(
            "{} {} {} seed {}: cycle {cycle} train loss {loss:.3e} L2 {:.3e}",
            cfg.problem, cfg.method, cfg.mode, cfg.seed, rec.l2_rel_error
        );
        state.records.push(rec);
        observer.on_cycle_end(state);
        Ok(())
    }

    /// All cycles. A divergence ends the run with a failed record; other
    /// errors propagate.
    pub fn run(&self, observer: &mut dyn Observer) -> Result<TrainState, TrainError> {
        let mut state = match self.init_state(observer) {
            Ok(s) => s,
            Err(TrainError::Diverged { reason, .. }) => {
                warn!("run failed before the first cycle: {reason}");
                let state = TrainState {
                    theta: init(&self.spec, self.config.seeds.model),
                    x_train: Vec::new(),
                    cycle: 0,
                    adam: AdamState::new(self.spec.param_count()),
                    records: vec![RunRecord::failed(0, 0, self.elapsed())],
                };
                observer.on_cycle_end(&state);
                return Ok(state);
            }
            Err(e) => return Err(e),
        };
        while state.cycle < self.config.cycles {
            match self.run_cycle(&mut state, observer) {
                Ok(()) => {}
                Err(TrainError::Diverged { cycle, reason }) => {
                    warn!("run failed in cycle {cycle}: {reason}");
                    state.records.push(RunRecord::failed(cycle, state.x_train.len(), self.elapsed()));
                    observer.on_cycle_end(&state);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(state)
    }
}

/// Initial training set of `config` with freshly initialized parameters.
pub fn init_training_set(config: &ExperimentConfig, truth: &GroundTruth) -> Result<Vec<Point>, TrainError> {
    let trainer = Trainer::new(config.clone(), truth)?;
    let theta = init(trainer.spec(), config.seeds.model);
    trainer.init_training_set(theta.values(), &mut ())
}

/// Records of a complete run: the cycle-0 snapshot followed by one entry
/// per cycle, ending early with a failed entry on divergence.
pub fn run_experiment(config: &ExperimentConfig, truth: &GroundTruth) -> Result<Vec<RunRecord>, TrainError> {
    Ok(Trainer::new(config.clone(), truth)?.run(&mut ())?.records)
}

#[cfg(test)]
mod tests;

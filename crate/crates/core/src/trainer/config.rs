use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::eval::{DEFAULT_EVAL_SEED, DEFAULT_N_EVAL, DEFAULT_N_HOLDOUT};
use crate::influence::InfluenceSettings;
use crate::optim::{AdamConfig, LbfgsConfig, LineSearch};
use crate::pde::ProblemKind;
use crate::scoring::Method;

/// How selected points enter the training set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Add,
    Replace,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Add => "add",
            Mode::Replace => "replace",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "add" => Ok(Mode::Add),
            "replace" => Ok(Mode::Replace),
            other => Err(format!("unknown mode {other:?} (expected add or replace)")),
        }
    }
}

/// splitmix64 finalizer over `(base, stream)`.
pub fn mix_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent random streams of one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub model: u64,
    pub sampling: u64,
    pub scoring: u64,
}

impl Seeds {
    /// Streams of run `k`. Every method shares them, so runs with equal
    /// `k` start from the same network and see the same candidates.
    pub fn for_run(k: u64) -> Self {
        Seeds { model: mix_seed(k, 1), sampling: mix_seed(k, 2), scoring: mix_seed(k, 3) }
    }

    pub(crate) fn candidates(&self, cycle: usize) -> u64 {
        mix_seed(self.sampling, 2 * cycle as u64)
    }

    pub(crate) fn selection(&self, cycle: usize) -> u64 {
        mix_seed(self.sampling, 2 * cycle as u64 + 1)
    }

    pub(crate) fn test_set(&self, cycle: usize) -> u64 {
        mix_seed(self.scoring, 3 * cycle as u64)
    }

    pub(crate) fn arnoldi(&self, cycle: usize) -> u64 {
        mix_seed(self.scoring, 3 * cycle as u64 + 1)
    }

    pub(crate) fn random_scores(&self, cycle: usize) -> u64 {
        mix_seed(self.scoring, 3 * cycle as u64 + 2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub hidden: Vec<usize>,
    pub method: Method,
    pub mode: Mode,
    pub n_cand: usize,
    pub n_train: usize,
    pub n_new: usize,
    pub alpha: f64,
    pub c: f64,
    pub cycles: usize,
    /// Adam and L-BFGS budget on the initial set before the first cycle.
    pub pretrain_iters: usize,
    pub adam_iters: usize,
    pub adam_lr: f64,
    pub lbfgs_iters: usize,
    pub lbfgs_history: usize,
    pub lbfgs_line_search: LineSearch,
    /// Run index; names the run directory.
    pub seed: u64,
    pub seeds: Seeds,
    pub influence: InfluenceSettings,
    pub n_eval: usize,
    pub n_holdout: usize,
    pub eval_seed: u64,
    pub save_scores: bool,
}

/// Network widths used for each problem at full scale.
pub fn full_scale_hidden(problem: ProblemKind) -> Vec<usize> {
    match problem {
        ProblemKind::Diffusion | ProblemKind::Burgers => vec![32; 3],
        ProblemKind::AllenCahn | ProblemKind::DriftDiffusion => vec![64; 3],
        ProblemKind::Wave => vec![100; 5],
    }
}

impl ExperimentConfig {
    /// Full-scale protocol for `problem` in `mode`.
    pub fn full_scale(problem: ProblemKind, mode: Mode) -> Self {
        let (n_train, n_add) = match problem {
            ProblemKind::Diffusion => (30, 1),
            _ => (1000, 10),
        };
        let (n_new, alpha, c) = match mode {
            Mode::Add => (n_add, 2.0, 0.0),
            Mode::Replace => (n_train, 1.0, 1.0),
        };
        ExperimentConfig {
            problem,
            hidden: full_scale_hidden(problem),
            method: Method::Pinnfluence,
            mode,
            n_cand: 10_000,
            n_train,
            n_new,
            alpha,
            c,
            cycles: 100,
            pretrain_iters: 0,
            adam_iters: 1000,
            adam_lr: AdamConfig::default().lr,
            lbfgs_iters: 1000,
            lbfgs_history: LbfgsConfig::default().history,
            lbfgs_line_search: LineSearch::StrongWolfe,
            seed: 0,
            seeds: Seeds::for_run(0),
            influence: InfluenceSettings::default(),
            n_eval: DEFAULT_N_EVAL,
            n_holdout: DEFAULT_N_HOLDOUT,
            eval_seed: DEFAULT_EVAL_SEED,
            save_scores: false,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |keys: &'static [&'static str], message: String| Err(TrainError::InvalidConfig { keys, message });
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return fail(&["hidden"], format!("hidden widths must be non-empty and positive, got {:?}", self.hidden));
        }
        if self.n_train == 0 {
            return fail(&["n_train"], "n_train must be positive".into());
        }
        if self.mode == Mode::Replace && self.n_new != self.n_train {
            return fail(&["mode", "n_new", "n_train"], format!("replace mode needs n_new = n_train, got {} and {}", self.n_new, self.n_train));
        }
        if self.method != Method::Static {
            if self.n_new == 0 {
                return fail(&["n_new"], "n_new must be positive".into());
            }
            if self.n_new > self.n_cand {
                return fail(&["n_new", "n_cand"], format!("cannot select {} of {} candidates", self.n_new, self.n_cand));
            }
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0 && self.c.is_finite() && self.c >= 0.0) {
            return fail(&["alpha", "c"], format!("alpha and c must be finite and non-negative, got {} and {}", self.alpha, self.c));
        }
        if !(self.adam_lr.is_finite() && self.adam_lr > 0.0) {
            return fail(&["adam_lr"], format!("adam_lr must be positive, got {}", self.adam_lr));
        }
        if self.lbfgs_history == 0 {
            return fail(&["lbfgs_history"], "lbfgs_history must be positive".into());
        }
        if self.n_eval == 0 || self.n_holdout == 0 {
            return fail(&["n_eval", "n_holdout"], "n_eval and n_holdout must be positive".into());
        }
        if self.method.uses_test_set() && self.influence.test_size == 0 {
            return fail(&["influence.test_size"], "influence.test_size must be positive".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.adam_lr, ..AdamConfig::default() }
    }

    pub fn lbfgs(&self) -> LbfgsConfig {
        LbfgsConfig { history: self.lbfgs_history, line_search: self.lbfgs_line_search, ..LbfgsConfig::default() }
    }

    /// FNV-1a over the canonical JSON form.
    pub fn fingerprint(&self) -> u64 {
        let json = serde_json::to_string(self).expect("config serializes");
        json.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
    }
}

//! Flat `key = value` experiment files.
//!
//! One setting per line, `#` starts a comment. `preset = paper_<problem>_<mode>`
//! loads the full-scale protocol and is applied before every other key, so
//! the remaining lines always override it. `methods` and `seeds` list the
//! cells of a sweep; `seeds` accepts `0,1,2` or the range `0..3`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::optim::LineSearch;
use crate::pde::ProblemKind;
use crate::scoring::Method;
use crate::trainer::{ExperimentConfig, Mode, Seeds, TrainError};

/// Where a setting came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Origin {
    /// Line number in the config file, 1-based.
    Line(usize),
    /// Position among the `--set` overrides, 1-based.
    Override(usize),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Override(n) => write!(f, "--set {n}"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("{}: {message}", origin.map_or("configuration".to_string(), |o| o.to_string()))]
pub struct ConfigError {
    pub origin: Option<Origin>,
    pub message: String,
}

fn at(origin: Origin, message: impl Into<String>) -> ConfigError {
    ConfigError { origin: Some(origin), message: message.into() }
}

/// Every recognised key.
pub const KEYS: &[&str] = &[
    "preset",
    "problem",
    "hidden",
    "method",
    "methods",
    "mode",
    "n_cand",
    "n_train",
    "n_new",
    "alpha",
    "c",
    "cycles",
    "pretrain_iters",
    "adam_iters",
    "adam_lr",
    "lbfgs_iters",
    "lbfgs_history",
    "lbfgs_line_search",
    "seed",
    "seeds",
    "seed.model",
    "seed.sampling",
    "seed.scoring",
    "influence.projection_dim",
    "influence.top_k",
    "influence.tol",
    "influence.damping",
    "influence.discard_negative",
    "influence.test_size",
    "n_eval",
    "n_holdout",
    "eval_seed",
    "save_scores",
];

/// A validated base configuration plus the sweep axes.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedConfig {
    pub base: ExperimentConfig,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    explicit_seeds: [Option<u64>; 3],
}

impl ParsedConfig {
    /// One configuration per (method, seed), methods outermost.
    pub fn cells(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &method in &self.methods {
            for &seed in &self.seeds {
                let mut c = self.base.clone();
                c.method = method;
                c.seed = seed;
                c.seeds = self.seeds_for(seed);
                out.push(c);
            }
        }
        out
    }

    fn seeds_for(&self, run: u64) -> Seeds {
        let mut s = Seeds::for_run(run);
        let [m, a, b] = self.explicit_seeds;
        s.model = m.unwrap_or(s.model);
        s.sampling = a.unwrap_or(s.sampling);
        s.scoring = b.unwrap_or(s.scoring);
        s
    }
}

fn parse_line(text: &str) -> Option<Result<(String, String), String>> {
    let content = text.split('#').next().unwrap_or("").trim();
    if content.is_empty() {
        return None;
    }
    Some(match content.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(format!("expected `key = value`, got `{content}`")),
    })
}

fn value<T: FromStr>(origin: Origin, key: &str, raw: &str, kind: &str) -> Result<T, ConfigError> {
    raw.parse().map_err(|_| at(origin, format!("`{key}` expects {kind}, got `{raw}`")))
}

fn list<T: FromStr>(origin: Origin, key: &str, raw: &str, kind: &str) -> Result<Vec<T>, ConfigError> {
    let items: Vec<&str> = raw.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(at(origin, format!("`{key}` expects a non-empty list of {kind}")));
    }
    items.into_iter().map(|s| value(origin, key, s, kind)).collect()
}

fn seed_list(origin: Origin, raw: &str) -> Result<Vec<u64>, ConfigError> {
    if let Some((a, b)) = raw.split_once("..") {
        let (a, b): (u64, u64) = (value(origin, "seeds", a.trim(), "an integer")?, value(origin, "seeds", b.trim(), "an integer")?);
        if a >= b {
            return Err(at(origin, format!("empty seed range `{raw}`")));
        }
        return Ok((a..b).collect());
    }
    list(origin, "seeds", raw, "integers")
}

fn preset(origin: Origin, raw: &str) -> Result<ExperimentConfig, ConfigError> {
    let unknown = || at(origin, format!("unknown preset `{raw}` (expected paper_<problem>_<add|replace>)"));
    let rest = raw.strip_prefix("paper_").ok_or_else(unknown)?;
    let (problem, mode) = rest.rsplit_once('_').ok_or_else(unknown)?;
    let problem: ProblemKind = problem.parse().map_err(|_| unknown())?;
    let mode: Mode = mode.parse().map_err(|_| unknown())?;
    Ok(ExperimentConfig::full_scale(problem, mode))
}

/// Parses `text` then applies `overrides` (each `key=value`) on top.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ParsedConfig, ConfigError> {
    let mut entries: Vec<(Origin, String, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(kv) = parse_line(line) {
            let (k, v) = kv.map_err(|m| at(Origin::Line(i + 1), m))?;
            entries.push((Origin::Line(i + 1), k, v));
        }
    }
    for (i, o) in overrides.iter().enumerate() {
        let origin = Origin::Override(i + 1);
        let (k, v) = parse_line(o).unwrap_or_else(|| Err("empty override".into())).map_err(|m| at(origin, m))?;
        entries.push((origin, k, v));
    }
    for (origin, k, _) in &entries {
        if !KEYS.contains(&k.as_str()) {
            return Err(at(*origin, format!("unknown key `{k}`")));
        }
    }

    // the preset (the last one given) is the base everything else edits;
    // without one the base is the protocol of the named problem and mode
    let mut set_at: HashMap<&str, Origin> = HashMap::new();
    let preset_entry = entries.iter().rev().find(|(_, k, _)| k == "preset");
    let mut cfg = match preset_entry {
        Some((origin, _, v)) => {
            for key in ["problem", "hidden", "mode", "n_cand", "n_train", "n_new", "alpha", "c", "cycles"] {
                set_at.insert(key, *origin);
            }
            preset(*origin, v)?
        }
        None => {
            let find = |key: &str| entries.iter().rev().find(|(_, k, _)| k == key);
            let problem = match find("problem") {
                Some((o, _, v)) => value(*o, "problem", v, "a problem name")?,
                None => ProblemKind::Diffusion,
            };
            let mode = match find("mode") {
                Some((o, _, v)) => v.parse().map_err(|m: String| at(*o, m))?,
                None => Mode::Add,
            };
            ExperimentConfig::full_scale(problem, mode)
        }
    };
    let mut methods = None;
    let mut seeds = None;
    let mut explicit = [None; 3];
    for (origin, key, raw) in &entries {
        let o = *origin;
        let (int, real, flag) = ("a non-negative integer", "a number", "true or false");
        match key.as_str() {
            "preset" => continue,
            "problem" => {
                let p: ProblemKind = value(o, key, raw, "a problem name")?;
                if p != cfg.problem {
                    cfg.problem = p;
                    cfg.hidden = crate::trainer::full_scale_hidden(p);
                }
            }
            "hidden" => cfg.hidden = list(o, key, raw, "layer widths")?,
            "method" => cfg.method = raw.parse().map_err(|e: crate::scoring::ScoringError| at(o, e.to_string()))?,
            "methods" => {
                let names: Vec<String> = list(o, key, raw, "method names")?;
                let parsed = names
                    .iter()
                    .map(|n| n.parse::<Method>().map_err(|e| at(o, e.to_string())))
                    .collect::<Result<Vec<_>, _>>()?;
                methods = Some(parsed);
            }
            "mode" => cfg.mode = raw.parse().map_err(|m: String| at(o, m))?,
            "n_cand" => cfg.n_cand = value(o, key, raw, int)?,
            "n_train" => cfg.n_train = value(o, key, raw, int)?,
            "n_new" => cfg.n_new = value(o, key, raw, int)?,
            "alpha" => cfg.alpha = value(o, key, raw, real)?,
            "c" => cfg.c = value(o, key, raw, real)?,
            "cycles" => cfg.cycles = value(o, key, raw, int)?,
            "pretrain_iters" => cfg.pretrain_iters = value(o, key, raw, int)?,
            "adam_iters" => cfg.adam_iters = value(o, key, raw, int)?,
            "adam_lr" => cfg.adam_lr = value(o, key, raw, real)?,
            "lbfgs_iters" => cfg.lbfgs_iters = value(o, key, raw, int)?,
            "lbfgs_history" => cfg.lbfgs_history = value(o, key, raw, int)?,
            "lbfgs_line_search" => {
                cfg.lbfgs_line_search = match raw.as_str() {
                    "strong_wolfe" => LineSearch::StrongWolfe,
                    "none" => LineSearch::None,
                    _ => return Err(at(o, format!("`{key}` expects strong_wolfe or none, got `{raw}`"))),
                }
            }
            "seed" => cfg.seed = value(o, key, raw, int)?,
            "seeds" => seeds = Some(seed_list(o, raw)?),
            "seed.model" => explicit[0] = Some(value(o, key, raw, int)?),
            "seed.sampling" => explicit[1] = Some(value(o, key, raw, int)?),
            "seed.scoring" => explicit[2] = Some(value(o, key, raw, int)?),
            "influence.projection_dim" => cfg.influence.projection_dim = value(o, key, raw, int)?,
            "influence.top_k" => cfg.influence.top_k = value(o, key, raw, int)?,
            "influence.tol" => cfg.influence.tol = value(o, key, raw, real)?,
            "influence.damping" => cfg.influence.damping = value(o, key, raw, real)?,
            "influence.discard_negative" => cfg.influence.discard_negative = value(o, key, raw, flag)?,
            "influence.test_size" => cfg.influence.test_size = value(o, key, raw, int)?,
            "n_eval" => cfg.n_eval = value(o, key, raw, int)?,
            "n_holdout" => cfg.n_holdout = value(o, key, raw, int)?,
            "eval_seed" => cfg.eval_seed = value(o, key, raw, int)?,
            "save_scores" => cfg.save_scores = value(o, key, raw, flag)?,
            _ => unreachable!("keys checked above"),
        }
        set_at.insert(KEYS.iter().find(|k| **k == key.as_str()).expect("known key"), o);
    }
    let parsed = ParsedConfig {
        methods: methods.unwrap_or_else(|| vec![cfg.method]),
        seeds: seeds.unwrap_or_else(|| vec![cfg.seed]),
        explicit_seeds: explicit,
        base: cfg,
    };
    let mut base = parsed.base.clone();
    base.seeds = parsed.seeds_for(base.seed);
    for cell in std::iter::once(base.clone()).chain(parsed.cells()) {
        if let Err(TrainError::InvalidConfig { keys, message }) = cell.validate() {
            let origin = keys.iter().filter_map(|k| set_at.get(k).copied()).max();
            return Err(ConfigError { origin, message });
        }
    }
    Ok(ParsedConfig { base, ..parsed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_expands() {
        let p = parse_config("preset = paper_diffusion_add\n", &[]).unwrap();
        let c = &p.base;
        assert_eq!(c.problem, ProblemKind::Diffusion);
        assert_eq!((c.n_train, c.n_new, c.alpha, c.c, c.n_cand, c.cycles), (30, 1, 2.0, 0.0, 10_000, 100));
        assert_eq!(c.mode, Mode::Add);
    }

    #[test]
    fn override_changes_only_its_key() {
        let text = "preset = paper_burgers_replace\n";
        let a = parse_config(text, &[]).unwrap();
        let b = parse_config(text, &["cycles=5".to_string()]).unwrap();
        assert_eq!(b.base.cycles, 5);
        assert_eq!(ExperimentConfig { cycles: 100, ..b.base.clone() }, a.base);
    }

    #[test]
    fn preset_applies_first_wherever_it_appears() {
        let p = parse_config("cycles = 7\npreset = paper_wave_add\n", &[]).unwrap();
        assert_eq!(p.base.cycles, 7);
        assert_eq!(p.base.problem, ProblemKind::Wave);
    }

    #[test]
    fn replace_with_mismatched_n_new_is_line_numbered() {
        let err = parse_config("preset = paper_burgers_add\n\nmode = replace\n", &[]).unwrap_err();
        assert_eq!(err.origin, Some(Origin::Line(3)));
        assert!(err.message.contains("replace"), "{err}");
        assert!(err.to_string().starts_with("line 3:"));
    }

    #[test]
    fn unknown_keys_and_bad_values() {
        let err = parse_config("# header\nproblem = burgers\nfoo = 1\n", &[]).unwrap_err();
        assert_eq!(err, at(Origin::Line(3), "unknown key `foo`"));
        let err = parse_config("cycles = many\n", &[]).unwrap_err();
        assert_eq!(err.origin, Some(Origin::Line(1)));
        assert!(err.message.contains("cycles"));
        let err = parse_config("", &["nope=1".into()]).unwrap_err();
        assert_eq!(err.origin, Some(Origin::Override(1)));
        let err = parse_config("just words\n", &[]).unwrap_err();
        assert_eq!(err.origin, Some(Origin::Line(1)));
        assert!(parse_config("method = rad\n", &[]).is_err());
        assert!(parse_config("preset = paper_heat_add\n", &[]).is_err());
    }

    #[test]
    fn comments_and_blank_lines() {
        let p = parse_config("# c\n\n  n_cand = 50   # inline\n", &[]).unwrap();
        assert_eq!(p.base.n_cand, 50);
    }

    #[test]
    fn sweep_axes() {
        let p = parse_config("methods = rar, random\nseeds = 2..4\nproblem = diffusion\n", &[]).unwrap();
        assert_eq!(p.methods, vec![Method::Rar, Method::Random]);
        assert_eq!(p.seeds, vec![2, 3]);
        let cells = p.cells();
        assert_eq!(cells.len(), 4);
        assert_eq!((cells[1].method, cells[1].seed), (Method::Rar, 3));
        assert_eq!(cells[1].seeds, Seeds::for_run(3));
        assert_eq!(cells[0].seeds, cells[2].seeds);
        let q = parse_config("seeds = 0, 5\nseed.model = 9\n", &[]).unwrap();
        assert!(q.cells().iter().all(|c| c.seeds.model == 9));
        assert_ne!(q.cells()[0].seeds.sampling, q.cells()[1].seeds.sampling);
    }

    #[test]
    fn problem_key_picks_its_architecture() {
        let p = parse_config("problem = wave\n", &[]).unwrap();
        assert_eq!(p.base.hidden, vec![100; 5]);
        let q = parse_config("problem = wave\nhidden = 8, 8\n", &[]).unwrap();
        assert_eq!(q.base.hidden, vec![8, 8]);
    }

    #[test]
    fn typed_values() {
        let p = parse_config(
            "lbfgs_line_search = none\ninfluence.discard_negative = true\nadam_lr = 5e-4\nsave_scores = false\n",
            &[],
        )
        .unwrap();
        assert_eq!(p.base.lbfgs_line_search, LineSearch::None);
        assert!(p.base.influence.discard_negative);
        assert_eq!(p.base.adam_lr, 5e-4);
        assert!(parse_config("save_scores = yes\n", &[]).is_err());
    }
}

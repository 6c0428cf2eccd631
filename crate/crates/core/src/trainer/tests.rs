use super::*;
use crate::pde::ProblemKind;

fn small(method: Method, mode: Mode) -> ExperimentConfig {
    let mut c = ExperimentConfig::full_scale(ProblemKind::Diffusion, mode);
    c.hidden = vec![6];
    c.method = method;
    c.n_cand = 200;
    c.n_train = 12;
    c.n_new = if mode == Mode::Add { 3 } else { 12 };
    c.cycles = 3;
    c.adam_iters = 15;
    c.lbfgs_iters = 5;
    c.n_eval = 300;
    c.n_holdout = 200;
    c.influence.test_size = 50;
    c.influence.projection_dim = 20;
    c.influence.top_k = 10;
    c
}

#[derive(Default)]
struct Log {
    sets: Vec<Vec<Point>>,
    thetas: Vec<Vec<f64>>,
    scored: Vec<(usize, Vec<Point>, Vec<f64>, Vec<usize>)>,
}

impl Observer for Log {
    fn on_scores(&mut self, cycle: usize, candidates: &[Point], scores: &ScoreVector, selected: &[usize]) {
        self.scored.push((cycle, candidates.to_vec(), scores.scores().to_vec(), selected.to_vec()));
    }

    fn on_cycle_end(&mut self, state: &TrainState) {
        self.sets.push(state.x_train.clone());
        self.thetas.push(state.theta.values().to_vec());
    }
}

fn run(config: ExperimentConfig) -> (Trainer, TrainState, Log) {
    let trainer = Trainer::new(config, &GroundTruth::ClosedForm).unwrap().deterministic(true);
    let mut log = Log::default();
    let state = trainer.run(&mut log).unwrap();
    (trainer, state, log)
}

#[test]
fn add_mode_grows_by_n_new() {
    let (_, state, _) = run(small(Method::Rar, Mode::Add));
    let sizes: Vec<usize> = state.records.iter().map(|r| r.train_size).collect();
    assert_eq!(sizes, vec![12, 15, 18, 21]);
    assert!(state.records.iter().all(|r| r.is_ok()));
}

#[test]
fn replace_mode_keeps_size() {
    let (_, state, log) = run(small(Method::Rar, Mode::Replace));
    assert!(state.records.iter().all(|r| r.train_size == 12));
    // the set is actually replaced
    assert_ne!(log.sets[0], log.sets[1]);
}

#[test]
fn static_set_never_changes() {
    for mode in [Mode::Add, Mode::Replace] {
        let mut cfg = small(Method::Static, mode);
        cfg.n_new = cfg.n_train;
        let (_, _, log) = run(cfg);
        assert!(log.scored.is_empty());
        assert!(log.sets.windows(2).all(|w| w[0] == w[1]), "{mode}");
    }
}

#[test]
fn new_points_are_interior() {
    let problem = PdeProblem::new(ProblemKind::Diffusion);
    for method in [Method::Pinnfluence, Method::Random, Method::OutputGrad] {
        let (_, state, _) = run(small(method, Mode::Add));
        assert!(state.x_train.iter().all(|p| problem.domain().contains_open(p)), "{method}");
    }
}

#[test]
fn scores_use_previous_cycle_parameters() {
    for method in [Method::Rar, Method::Pinnfluence, Method::LossGrad] {
        let (trainer, _, log) = run(small(method, Mode::Add));
        assert_eq!(log.scored.len(), 3);
        for (cycle, cands, scores, selected) in &log.scored {
            // snapshot k is the state after cycle k
            let theta = &log.thetas[cycle - 1];
            let x_train = &log.sets[cycle - 1];
            let again = trainer.score(theta, x_train, cands, *cycle).unwrap();
            assert_eq!(again.scores(), &scores[..], "{method} cycle {cycle}");
            // and the selection enters the set of this cycle
            let now = &log.sets[*cycle];
            assert_eq!(now.len(), x_train.len() + selected.len());
            assert_eq!(&now[..x_train.len()], &x_train[..]);
            let added: Vec<Point> = selected.iter().map(|&i| cands[i]).collect();
            assert_eq!(&now[x_train.len()..], &added[..]);
        }
    }
}

#[test]
fn identical_configs_give_identical_records() {
    let cfg = small(Method::GradDot, Mode::Add);
    let (_, a, _) = run(cfg.clone());
    let (_, b, _) = run(cfg);
    assert_eq!(a.records, b.records);
    assert_eq!(a.theta, b.theta);
}

#[test]
fn zero_cycles_is_snapshot_only() {
    let mut cfg = small(Method::Rar, Mode::Add);
    cfg.cycles = 0;
    let (_, state, _) = run(cfg);
    assert_eq!(state.records.len(), 1);
    assert_eq!(state.records[0].cycle, 0);
}

#[test]
fn divergence_is_recorded_not_raised() {
    let mut cfg = small(Method::Rar, Mode::Add);
    cfg.adam_lr = 1e300;
    let (_, state, _) = run(cfg);
    let last = state.records.last().unwrap();
    assert!(!last.is_ok());
    assert_eq!(last.cycle, 1);
    assert_eq!(state.records.len(), 2);
}

#[test]
fn initial_sets() {
    let cfg = ExperimentConfig::full_scale(ProblemKind::Diffusion, Mode::Add);
    let problem = PdeProblem::new(ProblemKind::Diffusion);
    let set = init_training_set(&cfg, &GroundTruth::ClosedForm).unwrap();
    assert_eq!(set.len(), 30);
    assert_eq!(set, hammersley(problem.domain(), 30));

    let mut cfg = small(Method::Static, Mode::Replace);
    let uniform = init_training_set(&cfg, &GroundTruth::ClosedForm).unwrap();
    assert_eq!(uniform, uniform_sample(problem.domain(), 12, cfg.seeds.candidates(0)));
    cfg.method = Method::Rar;
    let scored = init_training_set(&cfg, &GroundTruth::ClosedForm).unwrap();
    assert_eq!(scored.len(), 12);
    assert_eq!(scored, init_training_set(&cfg, &GroundTruth::ClosedForm).unwrap());
    assert!(scored.iter().all(|p| problem.domain().contains_open(p)));
}

#[test]
fn validation() {
    let mut cfg = small(Method::Rar, Mode::Replace);
    cfg.n_new = 3;
    assert!(matches!(cfg.validate(), Err(TrainError::InvalidConfig { keys, .. }) if keys.contains(&"mode")));
    let mut cfg = small(Method::Rar, Mode::Add);
    cfg.n_new = cfg.n_cand + 1;
    assert!(cfg.validate().is_err());
    let mut cfg = small(Method::Rar, Mode::Add);
    cfg.hidden = vec![];
    assert!(cfg.validate().is_err());
}

#[test]
fn full_scale_presets() {
    let d = ExperimentConfig::full_scale(ProblemKind::Diffusion, Mode::Add);
    assert_eq!((d.n_train, d.n_new, d.alpha, d.c, d.n_cand, d.cycles), (30, 1, 2.0, 0.0, 10_000, 100));
    let b = ExperimentConfig::full_scale(ProblemKind::Burgers, Mode::Replace);
    assert_eq!((b.n_train, b.n_new, b.alpha, b.c), (1000, 1000, 1.0, 1.0));
    assert_eq!((b.adam_iters, b.lbfgs_iters), (1000, 1000));
    assert!(b.validate().is_ok());
}

#[test]
fn seeds_are_shared_across_methods_and_distinct_across_runs() {
    assert_eq!(Seeds::for_run(3), Seeds::for_run(3));
    let (a, b) = (Seeds::for_run(0), Seeds::for_run(1));
    assert!(a.model != b.model && a.sampling != b.sampling && a.scoring != b.scoring);
    assert_ne!(a.candidates(1), a.candidates(2));
    assert_ne!(a.candidates(1), a.selection(1));
}

#[test]
fn run_directory_artifacts_and_resume() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = small(Method::Rar, Mode::Add);
    cfg.seed = 4;
    cfg.seeds = Seeds::for_run(4);
    cfg.save_scores = true;
    let opts = RunOptions { deterministic: true, force: false };
    let first = run_in_dir(&cfg, &GroundTruth::ClosedForm, out.path(), opts).unwrap();
    assert!(!first.skipped);
    assert_eq!(first.dir, out.path().join("diffusion/rar/add/seed4"));
    for f in ["records.csv", "config.json", "checkpoint.bin", "scores_1.csv", "scores_3.csv"] {
        assert!(first.dir.join(f).is_file(), "{f}");
    }
    let scores = std::fs::read_to_string(first.dir.join("scores_2.csv")).unwrap();
    assert_eq!(scores.lines().next().unwrap(), "x,t,score,selected");
    assert_eq!(scores.lines().count(), 201);
    assert_eq!(scores.lines().skip(1).filter(|l| l.ends_with(",1")).count(), 3);
    let (theta, _) = crate::mlp::read_checkpoint(&first.dir.join("checkpoint.bin")).unwrap();
    assert_eq!(theta.len(), MlpSpec::new(2, vec![6], 1).unwrap().param_count());

    let before = std::fs::read(first.dir.join("records.csv")).unwrap();
    let second = run_in_dir(&cfg, &GroundTruth::ClosedForm, out.path(), opts).unwrap();
    assert!(second.skipped);
    assert_eq!(second.records, first.records);

    // any change to the config invalidates the stored run
    cfg.adam_iters += 1;
    let third = run_in_dir(&cfg, &GroundTruth::ClosedForm, out.path(), opts).unwrap();
    assert!(!third.skipped);
    cfg.adam_iters -= 1;
    let fourth = run_in_dir(&cfg, &GroundTruth::ClosedForm, out.path(), RunOptions { force: true, ..opts }).unwrap();
    assert!(!fourth.skipped);
    assert_eq!(std::fs::read(first.dir.join("records.csv")).unwrap(), before);
}

use std::path::Path;
use std::process::{Command, Output};

use pinn_resample::cli::{cmd_sweep, constraint_check, load_config, parse_config, Context, Origin};
use pinn_resample::eval::read_summary;
use pinn_resample::pde::{PdeProblem, ProblemKind};
use pinn_resample::trainer::RunOptions;

const TINY: &str = "\
# small enough for a test
problem = diffusion
hidden = 6
n_train = 10
n_new = 2
n_cand = 100
cycles = 2
adam_iters = 20
lbfgs_iters = 5
n_eval = 200
n_holdout = 100
influence.test_size = 40
influence.projection_dim = 15
influence.top_k = 5
";

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pinn-resample"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .env_remove("PINN_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn context(out: &Path) -> Context {
    Context {
        out: out.to_path_buf(),
        data_dir: out.join("data"),
        jobs: 2,
        options: RunOptions { deterministic: true, force: false },
    }
}

#[test]
fn preset_then_override() {
    let p = parse_config("preset = paper_diffusion_add\n", &["cycles=5".into()]).unwrap();
    assert_eq!(p.base.cycles, 5);
    assert_eq!((p.base.n_train, p.base.n_new, p.base.n_cand), (30, 1, 10_000));
}

#[test]
fn override_of_unknown_key_is_rejected() {
    let err = parse_config(TINY, &["cycles=3".into(), "cyles=4".into()]).unwrap_err();
    assert_eq!(err.origin, Some(Origin::Override(2)));
    assert!(err.to_string().contains("cyles"));
}

#[test]
fn sweep_runs_every_cell_then_reports_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{TINY}methods = rar, random\nseeds = 0..2\n");
    let parsed = parse_config(&text, &[]).unwrap();
    let ctx = context(dir.path());
    let outcome = cmd_sweep(&parsed, &ctx).unwrap();
    assert!(outcome.success(), "{:?}", outcome.report);
    assert_eq!(outcome.cells.len(), 4);
    for method in ["rar", "random"] {
        for seed in 0..2 {
            let run = dir.path().join(format!("diffusion/{method}/add/seed{seed}"));
            assert!(run.join("records.csv").is_file(), "{}", run.display());
        }
    }
    let summary = read_summary(&dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.len(), 2);
    assert!(summary.iter().all(|s| s.seed_count == 2 && s.failed_count == 0));
    assert!(dir.path().join("ratio.svg").is_file());

    let again = cmd_sweep(&parsed, &ctx).unwrap();
    assert!(again.cells.iter().all(|(_, r)| r.as_ref().unwrap().skipped));

    // one more seed computes only the new cells
    let more = parse_config(&format!("{TINY}methods = rar, random\nseeds = 0..3\n"), &[]).unwrap();
    let third = cmd_sweep(&more, &ctx).unwrap();
    let computed: Vec<u64> =
        third.cells.iter().filter(|(_, r)| !r.as_ref().unwrap().skipped).map(|(c, _)| c.seed).collect();
    assert_eq!(computed, vec![2, 2]);
}

#[test]
fn interrupted_run_is_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    let parsed = parse_config(TINY, &["method=rar".into()]).unwrap();
    let ctx = context(dir.path());
    let first = cmd_sweep(&parsed, &ctx).unwrap();
    let run = &first.cells[0].1.as_ref().unwrap().dir;
    // a run killed mid-way never wrote its checkpoint
    std::fs::remove_file(run.join("checkpoint.bin")).unwrap();
    let second = cmd_sweep(&parsed, &ctx).unwrap();
    assert!(!second.cells[0].1.as_ref().unwrap().skipped);
    assert!(run.join("checkpoint.bin").is_file());
}

#[test]
fn corrupted_ansatz_fails_naming_the_equation() {
    let broken = PdeProblem::new(ProblemKind::Burgers).with_ansatz(ProblemKind::Diffusion);
    let check = constraint_check(&broken);
    assert!(!check.passed);
    assert!(check.detail.contains("burgers"), "{}", check.detail);
    assert!(constraint_check(&PdeProblem::new(ProblemKind::Burgers)).passed);
}

#[test]
fn verify_passes_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let a = bin(&["verify"], dir.path());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stdout));
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 20);
    assert!(!text.contains("FAIL"));
    let b = bin(&["verify"], dir.path());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn run_command_writes_and_reuses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    let args = ["run", "--deterministic", "--config", cfg.to_str().unwrap(), "--out", "out", "--set", "method=grad_dot"];
    let first = bin(&args, dir.path());
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let records = dir.path().join("out/diffusion/grad_dot/add/seed0/records.csv");
    let bytes = std::fs::read(&records).unwrap();
    let second = bin(&args, dir.path());
    assert!(String::from_utf8_lossy(&second.stdout).contains("reused"));
    assert_eq!(std::fs::read(&records).unwrap(), bytes);

    let report = bin(&["report", "--out", "out"], dir.path());
    assert!(report.status.success());
    assert!(dir.path().join("out/summary.csv").is_file());
}

#[test]
fn bad_config_exits_nonzero_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "preset = paper_burgers_add\nmode = replace\n").unwrap();
    let out = bin(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
    assert!(load_config(Some(&cfg), &[]).is_err());
}

#[test]
fn missing_ground_truth_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["run", "--set", "problem=burgers", "--set", "cycles=0"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("burgers.txt"));
}

#[test]
fn generated_grids_serve_as_ground_truth() {
    use pinn_resample::cli::cmd_gen_data;
    use pinn_resample::eval::GroundTruth;

    let dir = tempfile::tempdir().unwrap();
    let written = cmd_gen_data(dir.path()).unwrap();
    assert_eq!(written.len(), 2);
    for kind in [ProblemKind::Burgers, ProblemKind::AllenCahn] {
        let truth = GroundTruth::locate(&PdeProblem::new(kind), dir.path()).unwrap();
        let GroundTruth::Grid(grid) = truth else { panic!("{kind} should load a grid") };
        // initial condition row
        let x = grid.x()[100];
        let want = match kind {
            ProblemKind::Burgers => -(std::f64::consts::PI * x).sin(),
            _ => x * x * (std::f64::consts::PI * x).cos(),
        };
        assert!((grid.at(100, 0) - want).abs() < 1e-12, "{kind}");
    }
}

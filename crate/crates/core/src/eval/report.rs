use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::svg::{log_chart, Series};
use super::{EvalError, RunRecord};

const BASELINE: &str = "random";

/// Records of one seeded run, as found on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub problem: String,
    pub method: String,
    pub mode: String,
    pub seed: u64,
    pub records: Vec<RunRecord>,
}

impl RunSummary {
    pub fn failed(&self) -> bool {
        self.records.is_empty() || self.records.iter().any(|r| !r.is_ok())
    }

    pub fn final_record(&self) -> Option<&RunRecord> {
        self.records.last()
    }
}

/// Statistics of one (problem, method, mode) over its seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub problem: String,
    pub method: String,
    pub mode: String,
    /// Completed runs entering the statistics.
    pub seed_count: usize,
    pub failed_count: usize,
    pub mean_l2: f64,
    pub std_l2: f64,
    pub mean_test_loss: f64,
    pub std_test_loss: f64,
}

/// Per-method statistics plus the curves behind them.
#[derive(Clone, Debug)]
pub struct ComparisonSummary {
    pub methods: Vec<MethodSummary>,
    /// L² error per cycle of each completed run, keyed like `methods`.
    pub curves: Vec<Vec<Vec<f64>>>,
    /// Ratio of mean L² error to the random baseline per cycle; `None`
    /// without a baseline, and per entry where the guard trips.
    pub ratios: Vec<Option<Vec<Option<f64>>>>,
    pub runs: Vec<RunSummary>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn mean_over_seeds(series: &[Vec<f64>]) -> Vec<f64> {
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    (0..len).map(|c| series.iter().map(|s| s[c]).sum::<f64>() / series.len() as f64).collect()
}

/// Per-cycle ratio of seed-averaged errors, method over baseline.
/// Entries where the baseline mean is not a positive finite number are
/// `None`.
pub fn ratio_to_baseline(method: &[Vec<f64>], baseline: &[Vec<f64>]) -> Result<Vec<Option<f64>>, EvalError> {
    let (m, b) = (mean_over_seeds(method), mean_over_seeds(baseline));
    if m.len() != b.len() {
        return Err(EvalError::CycleMismatch { method: m.len(), baseline: b.len() });
    }
    Ok(m.iter()
        .zip(&b)
        .map(|(x, y)| (y.is_finite() && *y > 0.0 && x.is_finite()).then(|| x / y))
        .collect())
}

/// Groups runs by (problem, mode, method) and aggregates completed ones.
pub fn summarize(runs: Vec<RunSummary>) -> ComparisonSummary {
    let mut groups: BTreeMap<(String, String, String), Vec<&RunSummary>> = BTreeMap::new();
    for r in &runs {
        groups.entry((r.problem.clone(), r.mode.clone(), r.method.clone())).or_default().push(r);
    }
    let mut methods = Vec::new();
    let mut curves = Vec::new();
    for ((problem, mode, method), members) in &groups {
        let done: Vec<&RunSummary> = members.iter().copied().filter(|r| !r.failed()).collect();
        let finals: Vec<&RunRecord> = done.iter().filter_map(|r| r.final_record()).collect();
        let (mean_l2, std_l2) = mean_std(&finals.iter().map(|r| r.l2_rel_error).collect::<Vec<_>>());
        let (mean_test_loss, std_test_loss) = mean_std(&finals.iter().map(|r| r.test_loss).collect::<Vec<_>>());
        methods.push(MethodSummary {
            problem: problem.clone(),
            method: method.clone(),
            mode: mode.clone(),
            seed_count: done.len(),
            failed_count: members.len() - done.len(),
            mean_l2,
            std_l2,
            mean_test_loss,
            std_test_loss,
        });
        curves.push(done.iter().map(|r| r.records.iter().map(|x| x.l2_rel_error).collect()).collect::<Vec<Vec<f64>>>());
    }
    let ratios = methods
        .iter()
        .zip(&curves)
        .map(|(m, c)| {
            let base = methods
                .iter()
                .position(|b| b.problem == m.problem && b.mode == m.mode && b.method == BASELINE)?;
            if c.is_empty() || curves[base].is_empty() {
                return None;
            }
            let len = mean_over_seeds(c).len().min(mean_over_seeds(&curves[base]).len());
            let trim = |s: &Vec<Vec<f64>>| s.iter().map(|v| v[..len].to_vec()).collect::<Vec<_>>();
            ratio_to_baseline(&trim(c), &trim(&curves[base])).ok()
        })
        .collect();
    ComparisonSummary { methods, curves, ratios, runs }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct RunRow {
    pub problem: String,
    pub method: String,
    pub mode: String,
    pub seed: u64,
    pub status: String,
    pub cycles: usize,
    pub final_l2: f64,
    pub final_test_loss: f64,
    pub wall_seconds: f64,
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> EvalError + '_ {
    move |source| EvalError::Csv { path: path.to_path_buf(), source }
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| EvalError::Io { path: path.to_path_buf(), source })
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, EvalError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err(path))
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<(), EvalError> {
    write_rows(path, records)
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, EvalError> {
    read_rows(path)
}

pub fn read_summary(path: &Path) -> Result<Vec<MethodSummary>, EvalError> {
    read_rows(path)
}

/// Every `<root>/<problem>/<method>/<mode>/seed<k>/records.csv`, in path
/// order.
pub fn collect_runs(root: &Path) -> Result<Vec<RunSummary>, EvalError> {
    fn subdirs(dir: &Path) -> Result<Vec<(String, PathBuf)>, EvalError> {
        let io = |source| EvalError::Io { path: dir.to_path_buf(), source };
        let mut out = Vec::new();
        for entry in fs::read_dir(dir).map_err(io)? {
            let entry = entry.map_err(io)?;
            if entry.file_type().map_err(io)?.is_dir() {
                out.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
            }
        }
        out.sort();
        Ok(out)
    }
    let mut runs = Vec::new();
    for (problem, p) in subdirs(root)? {
        for (method, m) in subdirs(&p)? {
            for (mode, d) in subdirs(&m)? {
                for (seed_dir, s) in subdirs(&d)? {
                    let Some(seed) = seed_dir.strip_prefix("seed").and_then(|k| k.parse().ok()) else {
                        continue;
                    };
                    let path = s.join("records.csv");
                    if !path.is_file() {
                        continue;
                    }
                    let records = read_records(&path)?;
                    runs.push(RunSummary {
                        problem: problem.clone(),
                        method: method.clone(),
                        mode: mode.clone(),
                        seed,
                        records,
                    });
                }
            }
        }
    }
    runs.sort_by_key(|r| (r.problem.clone(), r.mode.clone(), r.method.clone(), r.seed));
    Ok(runs)
}

fn label(m: &MethodSummary, single_group: bool) -> String {
    if single_group {
        m.method.clone()
    } else {
        format!("{}/{}/{}", m.problem, m.mode, m.method)
    }
}

/// Writes `summary.csv`, `runs.csv`, `convergence.svg` and, when a random
/// baseline is present, `ratio.svg`. Returns the written paths.
pub fn emit(summary: &ComparisonSummary, outdir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    if summary.methods.is_empty() {
        return Err(EvalError::NothingToReport);
    }
    fs::create_dir_all(outdir).map_err(|source| EvalError::Io { path: outdir.to_path_buf(), source })?;
    let mut written = Vec::new();

    let path = outdir.join("summary.csv");
    write_rows(&path, &summary.methods)?;
    written.push(path);

    let path = outdir.join("runs.csv");
    write_rows(
        &path,
        summary.runs.iter().map(|r| {
            let last = r.final_record();
            RunRow {
                problem: r.problem.clone(),
                method: r.method.clone(),
                mode: r.mode.clone(),
                seed: r.seed,
                status: if r.failed() { "failed" } else { "ok" }.to_string(),
                cycles: last.map_or(0, |x| x.cycle),
                final_l2: last.map_or(f64::NAN, |x| x.l2_rel_error),
                final_test_loss: last.map_or(f64::NAN, |x| x.test_loss),
                wall_seconds: last.map_or(0.0, |x| x.wall_seconds),
            }
        }),
    )?;
    written.push(path);

    let single = summary.methods.iter().all(|m| m.problem == summary.methods[0].problem && m.mode == summary.methods[0].mode);
    let convergence: Vec<Series> = summary
        .methods
        .iter()
        .zip(&summary.curves)
        .map(|(m, runs)| {
            let len = runs.iter().map(Vec::len).min().unwrap_or(0);
            let mut points = Vec::with_capacity(len);
            let mut band = Vec::with_capacity(len);
            for c in 0..len {
                let logs: Vec<f64> = runs.iter().map(|r| r[c].log10()).collect();
                let (mu, sd) = mean_std(&logs);
                points.push((c as f64, 10f64.powf(mu)));
                band.push((c as f64, 10f64.powf(mu - sd), 10f64.powf(mu + sd)));
            }
            Series { label: label(m, single), points, band: Some(band) }
        })
        .collect();
    let path = outdir.join("convergence.svg");
    let svg = log_chart("L2 relative error (geometric mean, ±1 std in log space)", "L2 relative error", &convergence, None);
    fs::write(&path, svg).map_err(|source| EvalError::Io { path: path.clone(), source })?;
    written.push(path);

    let ratios: Vec<Series> = summary
        .methods
        .iter()
        .zip(&summary.ratios)
        .filter(|(m, _)| m.method != BASELINE)
        .filter_map(|(m, r)| {
            let r = r.as_ref()?;
            let points = r.iter().enumerate().filter_map(|(c, v)| v.map(|v| (c as f64, v))).collect();
            Some(Series { label: label(m, single), points, band: None })
        })
        .collect();
    if !ratios.is_empty() {
        let path = outdir.join("ratio.svg");
        let svg = log_chart("L2 relative error relative to random sampling", "ratio to random", &ratios, Some(1.0));
        fs::write(&path, svg).map_err(|source| EvalError::Io { path: path.clone(), source })?;
        written.push(path);
    }
    Ok(written)
}

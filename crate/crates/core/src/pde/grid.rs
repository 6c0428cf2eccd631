use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("ground-truth file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{axis} grid is not strictly increasing at index {index}")]
    NotMonotone { axis: &'static str, index: usize },
    #[error("non-finite value at (x index {i}, t index {j})")]
    NonFinite { i: usize, j: usize },
    #[error("value matrix is {rows}x{cols}, grids are {nx}x{nt}")]
    Shape { rows: usize, cols: usize, nx: usize, nt: usize },
}

/// Tabulated reference solution `u(x_i, t_j)` on a tensor grid.
///
/// Text format: a header line `nx nt`, then the x grid on one line, the t grid
/// on the next, then `nx` rows of `nt` values.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthGrid {
    x: Vec<f64>,
    t: Vec<f64>,
    /// Row-major: `values[i * nt + j] = u(x_i, t_j)`.
    values: Vec<f64>,
}

impl GroundTruthGrid {
    pub fn new(x: Vec<f64>, t: Vec<f64>, values: Vec<f64>) -> Result<Self, GridError> {
        check_increasing("x", &x)?;
        check_increasing("t", &t)?;
        if values.len() != x.len() * t.len() {
            return Err(GridError::Shape {
                rows: values.len() / t.len().max(1),
                cols: t.len(),
                nx: x.len(),
                nt: t.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite { i: k / t.len(), j: k % t.len() });
        }
        Ok(GroundTruthGrid { x, t, values })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.t.len() + j]
    }

    /// Bilinear interpolation; queries outside the grid are clamped to it.
    pub fn interpolate(&self, x: f64, t: f64) -> f64 {
        let (i, fx) = locate(&self.x, x);
        let (j, ft) = locate(&self.t, t);
        let i1 = (i + 1).min(self.x.len() - 1);
        let j1 = (j + 1).min(self.t.len() - 1);
        let v00 = self.at(i, j);
        let v01 = self.at(i, j1);
        let v10 = self.at(i1, j);
        let v11 = self.at(i1, j1);
        (1.0 - fx) * ((1.0 - ft) * v00 + ft * v01) + fx * ((1.0 - ft) * v10 + ft * v11)
    }

    pub fn parse(text: &str) -> Result<Self, GridError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| GridError::Parse { line: 0, message: format!("missing {what}") })
        };
        let (ln, header) = next("header")?;
        let dims = parse_row(ln, header)?;
        if dims.len() != 2 || dims.iter().any(|d| *d < 1.0 || d.fract() != 0.0) {
            return Err(GridError::Parse { line: ln, message: "header must be `nx nt`".into() });
        }
        let (nx, nt) = (dims[0] as usize, dims[1] as usize);
        let (ln, xs) = next("x grid")?;
        let x = parse_row(ln, xs)?;
        expect_len(ln, &x, nx)?;
        let (ln, ts) = next("t grid")?;
        let t = parse_row(ln, ts)?;
        expect_len(ln, &t, nt)?;
        let mut values = Vec::with_capacity(nx * nt);
        for r in 0..nx {
            let (ln, row) = next(&format!("value row {r}"))?;
            let row = parse_row(ln, row)?;
            expect_len(ln, &row, nt)?;
            values.extend(row);
        }
        Self::new(x, t, values)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.x.len(), self.t.len());
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "{}", join(&self.x));
        let _ = writeln!(s, "{}", join(&self.t));
        for row in self.values.chunks(self.t.len()) {
            let _ = writeln!(s, "{}", join(row));
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), GridError> {
        std::fs::write(path, self.to_text())
            .map_err(|source| GridError::Io { path: path.display().to_string(), source })
    }
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruthGrid, GridError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| GridError::Io { path: path.display().to_string(), source })?;
    GroundTruthGrid::parse(&text)
}

fn parse_row(line: usize, s: &str) -> Result<Vec<f64>, GridError> {
    s.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|e| GridError::Parse { line, message: format!("`{tok}`: {e}") })
        })
        .collect()
}

fn expect_len(line: usize, v: &[f64], n: usize) -> Result<(), GridError> {
    if v.len() != n {
        return Err(GridError::Parse { line, message: format!("expected {n} values, found {}", v.len()) });
    }
    Ok(())
}

fn check_increasing(axis: &'static str, v: &[f64]) -> Result<(), GridError> {
    if v.is_empty() {
        return Err(GridError::Parse { line: 0, message: format!("empty {axis} grid") });
    }
    if let Some(k) = v.iter().position(|x| !x.is_finite()) {
        return Err(GridError::Parse { line: 0, message: format!("non-finite {axis} grid entry {k}") });
    }
    match v.windows(2).position(|w| w[1] <= w[0]) {
        Some(k) => Err(GridError::NotMonotone { axis, index: k + 1 }),
        None => Ok(()),
    }
}

/// Cell index and fractional offset of `q` on a sorted grid, clamped.
fn locate(grid: &[f64], q: f64) -> (usize, f64) {
    let n = grid.len();
    if n == 1 || q <= grid[0] {
        return (0, 0.0);
    }
    if q >= grid[n - 1] {
        return (n - 1, 0.0);
    }
    let i = grid.partition_point(|&g| g <= q) - 1;
    (i, (q - grid[i]) / (grid[i + 1] - grid[i]))
}

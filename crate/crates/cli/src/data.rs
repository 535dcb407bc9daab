//! Synthetic datasets and CSV input.

use std::f64::consts::PI;
use std::path::Path;

use kpls_core::Dataset;

use crate::error::CliError;
use crate::rng::Xorshift64Star;
use crate::table::fmt_f64;

pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// x uniform on [-π, π], y = sinc(x) + N(0, σ²). Fails for n < 2.
pub fn synth_sinc(n: usize, sigma: f64, seed: u64) -> kpls_core::Result<Dataset> {
    let mut g = Xorshift64Star::new(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = g.uniform(-PI, PI);
        x.push(vec![xi]);
        y.push(sinc(xi) + sigma * g.normal());
    }
    Dataset::new(x, y)
}

pub fn polymix_curve(x: f64) -> f64 {
    (x - 1.0) * (x + 2.0) * (x - 1.5) * (-x * x / 10.0).exp()
}

/// x from the equal mixture of N(-2, 1) and N(3, 1), y = f(x) + N(0, σ²).
pub fn synth_polymix(n: usize, sigma: f64, seed: u64) -> kpls_core::Result<Dataset> {
    let mut g = Xorshift64Star::new(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mean = if g.next_f64() < 0.5 { -2.0 } else { 3.0 };
        let xi = mean + g.normal();
        x.push(vec![xi]);
        y.push(polymix_curve(xi) + sigma * g.normal());
    }
    Dataset::new(x, y)
}

pub const KIN_DIM: usize = 8;

/// Link lengths of the surrogate arm, shortening towards the tip.
const KIN_LINKS: [f64; KIN_DIM] = [1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3];

/// x coordinate of the tip of a planar arm with joint angles `q`.
pub fn arm_tip(q: &[f64]) -> f64 {
    let mut angle = 0.0;
    let mut tip = 0.0;
    for (a, l) in q.iter().zip(KIN_LINKS) {
        angle += a;
        tip += l * angle.cos();
    }
    tip
}

/// Stand-in for the delve "kin" data: eight joint angles uniform on
/// [-π/2, π/2], target the arm tip's x coordinate plus N(0, σ²).
pub fn synth_kinlike(n: usize, sigma: f64, seed: u64) -> kpls_core::Result<Dataset> {
    let mut g = Xorshift64Star::new(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let q: Vec<f64> = (0..KIN_DIM).map(|_| g.uniform(-PI / 2.0, PI / 2.0)).collect();
        y.push(arm_tip(&q) + sigma * g.normal());
        x.push(q);
    }
    Dataset::new(x, y)
}

/// Parses `x1,..,xd,y` rows after one header line. Line and column numbers
/// in errors are 1-based.
pub fn parse_csv(text: &str) -> Result<Dataset, CliError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| CliError::csv(1, 0, "file is empty"))?;
    let cols = header.split(',').count();
    if cols < 2 {
        return Err(CliError::csv(1, 0, "need at least one input column and a target column"));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, line) in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols {
            return Err(CliError::csv(i + 1, 0, format!("expected {cols} fields, found {}", cells.len())));
        }
        let mut row = Vec::with_capacity(cols);
        for (j, cell) in cells.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| CliError::csv(i + 1, j + 1, format!("not a number: {:?}", cell.trim())))?;
            if !v.is_finite() {
                return Err(CliError::csv(i + 1, j + 1, format!("not finite: {v}")));
            }
            row.push(v);
        }
        y.push(row.pop().expect("at least two columns"));
        x.push(row);
    }
    if x.is_empty() {
        return Err(CliError::csv(1, 0, "no data rows"));
    }
    Ok(Dataset::new(x, y)?)
}

pub fn load_csv(path: &Path) -> Result<Dataset, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_csv(&text).map_err(|e| e.in_file(path))
}

pub fn dataset_csv(data: &Dataset) -> String {
    let mut out: Vec<String> = (1..=data.dim()).map(|j| format!("x{j}")).collect();
    out.push("y".into());
    let mut s = out.join(",");
    s.push('\n');
    for (row, y) in data.x().iter().zip(data.y()) {
        for v in row {
            s.push_str(&fmt_f64(*v));
            s.push(',');
        }
        s.push_str(&fmt_f64(*y));
        s.push('\n');
    }
    s
}

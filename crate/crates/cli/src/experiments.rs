//! The three experiments: approximation quality of the degrees of freedom,
//! runtime scaling, and confidence bands.

use std::str::FromStr;
use std::time::Instant;

use kpls_core::kernels::{center, gram};
use kpls_core::linalg::dot;
use kpls_core::modelsel::gmdl;
use kpls_core::sensitivity::exact_spectrum;
use kpls_core::{confidence_band, dof_approx, dof_exact, fit, ConfidenceBand, Dataset, KernelMatrix, SigmaDof};

use crate::config::{DataSource, ExperimentConfig};
use crate::error::CliError;
use crate::table::{Cell, Table};

/// Largest n for which the cubic-cost experiments run without `force`.
pub const EXACT_GUARD_N: usize = 500;

/// (components, width) of the two band models.
pub const CI_MODELS: [(usize, f64); 2] = [(15, 0.1), (9, 1.0)];

pub fn centered_kernel(config: &ExperimentConfig, data: &Dataset, width: f64) -> Result<KernelMatrix, CliError> {
    Ok(center(&gram(&config.kernel_spec(width)?, data.x())?)?)
}

fn guard(config: &ExperimentConfig, n: usize) -> Result<(), CliError> {
    if n > EXACT_GUARD_N && !config.force {
        return Err(CliError::usage(format!(
            "exact degrees of freedom cost O(n³); n = {n} exceeds {EXACT_GUARD_N}. Pass --force to run anyway"
        )));
    }
    Ok(())
}

fn rss_and_yty(model: &kpls_core::KplsModel, y: &[f64], m: usize) -> Result<(f64, f64), CliError> {
    let yc = model.center_y(y)?;
    let rss = yc.iter().zip(model.yhat(m)).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((rss, dot(&yc, &yc)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DofSweepRow {
    pub width: f64,
    pub m_max: usize,
    pub m: usize,
    pub dof_exact: Option<f64>,
    pub dof_approx: Option<f64>,
    pub gmdl_exact: Option<f64>,
    pub gmdl_approx: Option<f64>,
}

/// For every width, every m_max of the sweep and m = 1..=m_star: exact and
/// approximate degrees of freedom with their gMDL values. Cells are empty
/// where m exceeds m_max or the number of components the fit produced.
pub fn run_dof_experiment(config: &ExperimentConfig) -> Result<Vec<DofSweepRow>, CliError> {
    let data = config.dataset()?;
    let n = data.n();
    guard(config, n)?;
    let sweep_top = *config.m_max_sweep.iter().max().expect("validated sweep");
    let mut rows = Vec::new();
    for &width in &config.widths {
        let k = centered_kernel(config, &data, width)?;
        let model = fit(&k, data.y(), sweep_top.max(config.m_star).min(n))?;
        let m_top = config.m_star.min(model.actual_m());
        let spectrum = exact_spectrum(&k, data.y(), &model, m_top)?;
        let mut exact = Vec::with_capacity(m_top);
        for m in 1..=m_top {
            let dof = spectrum.dof(&model, m)?.dof();
            let (rss, yty) = rss_and_yty(&model, data.y(), m)?;
            exact.push((dof, gmdl(rss, dof, n, yty).ok(), rss, yty));
        }
        for &m_max in &config.m_max_sweep {
            for m in 1..=config.m_star {
                let mut row =
                    DofSweepRow { width, m_max, m, dof_exact: None, dof_approx: None, gmdl_exact: None, gmdl_approx: None };
                if let Some(&(dof, g, rss, yty)) = exact.get(m - 1) {
                    row.dof_exact = Some(dof);
                    row.gmdl_exact = g;
                    if m <= m_max {
                        let a = dof_approx(&k, data.y(), &model, m, m_max)?.dof();
                        row.dof_approx = Some(a);
                        row.gmdl_approx = gmdl(rss, a, n, yty).ok();
                    }
                }
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

pub fn dof_sweep_table(rows: &[DofSweepRow]) -> Table {
    let mut t = Table::new(&["width", "m_max", "m", "dof_exact", "dof_approx", "gmdl_exact", "gmdl_approx"]);
    for r in rows {
        t.push(vec![
            r.width.into(),
            r.m_max.into(),
            r.m.into(),
            r.dof_exact.into(),
            r.dof_approx.into(),
            r.gmdl_exact.into(),
            r.gmdl_approx.into(),
        ]);
    }
    t
}

/// One row with both degrees-of-freedom variants for a single model.
pub fn dof_report_table(config: &ExperimentConfig) -> Result<Table, CliError> {
    let data = config.dataset()?;
    let width = config.width();
    let k = centered_kernel(config, &data, width)?;
    let model = fit(&k, data.y(), config.m_max.min(data.n()))?;
    let approx = dof_approx(&k, data.y(), &model, config.m, config.m_max)?;
    let exact = if data.n() <= EXACT_GUARD_N || config.force {
        Some(dof_exact(&k, data.y(), &model, config.m)?)
    } else {
        None
    };
    let mut t = Table::new(&[
        "n",
        "width",
        "m",
        "m_max",
        "dof_exact",
        "dof_approx",
        "trace_exact",
        "latent_exact",
        "residual_exact",
        "trace_approx",
        "latent_approx",
        "residual_approx",
        "warning",
    ]);
    let width_cell = config.kernel_spec(width)?.width().into();
    t.push(vec![
        data.n().into(),
        width_cell,
        config.m.into(),
        approx.m_max_used.into(),
        exact.as_ref().and_then(|e| e.dof_exact).into(),
        approx.dof_approx.into(),
        exact.as_ref().map(|e| e.term_trace).into(),
        exact.as_ref().map(|e| e.term_latent).into(),
        exact.as_ref().map(|e| e.term_residual).into(),
        approx.term_trace.into(),
        approx.term_latent.into(),
        approx.term_residual.into(),
        approx.warning.as_deref().map_or(Cell::Empty, Cell::from),
    ]);
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Fit with m components, exact degrees of freedom.
    Exact,
    /// Fit with m_max components, approximate degrees of freedom for m.
    Approx,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Exact => "exact",
            Variant::Approx => "approx",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeRecord {
    pub n: usize,
    pub variant: Variant,
    pub seconds: f64,
    pub components: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeReport {
    pub records: Vec<RuntimeRecord>,
    /// Least-squares slope of log(time) against log(n), upper half of the ladder.
    pub slope_exact: f64,
    pub slope_approx: f64,
}

impl RuntimeReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&["n", "variant", "seconds", "components"]);
        for r in &self.records {
            t.push(vec![r.n.into(), r.variant.name().into(), r.seconds.into(), r.components.into()]);
        }
        t
    }

    pub fn seconds(&self, n: usize, variant: Variant) -> Option<f64> {
        self.records.iter().find(|r| r.n == n && r.variant == variant).map(|r| r.seconds)
    }
}

/// Runs shorter than this are repeated and averaged.
const MIN_SAMPLE_SECONDS: f64 = 0.02;

/// Median over three samples after one discarded warm-up run.
fn time_median(mut f: impl FnMut() -> Result<usize, CliError>) -> Result<(f64, usize), CliError> {
    let start = Instant::now();
    let components = f()?;
    let warm = start.elapsed().as_secs_f64();
    let reps = if warm < MIN_SAMPLE_SECONDS { (MIN_SAMPLE_SECONDS / warm.max(1e-7)).ceil() as usize } else { 1 };
    let mut samples = Vec::with_capacity(3);
    for _ in 0..3 {
        let start = Instant::now();
        for _ in 0..reps {
            f()?;
        }
        samples.push(start.elapsed().as_secs_f64() / reps as f64);
    }
    samples.sort_by(f64::total_cmp);
    Ok((samples[1], components))
}

/// Least-squares slope of log(seconds) on log(n) over the upper half of the
/// ladder (at least two points).
pub fn loglog_slope(points: &[(usize, f64)]) -> f64 {
    let start = (points.len() / 2).min(points.len().saturating_sub(2));
    let pts: Vec<(f64, f64)> = points[start..].iter().map(|&(n, t)| ((n as f64).ln(), t.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Times both pipelines on nested prefixes of one dataset, single-threaded.
/// The kernel matrix is built outside the timed region.
pub fn run_runtime_benchmark(config: &ExperimentConfig) -> Result<RuntimeReport, CliError> {
    if config.ladder.len() < 2 {
        return Err(CliError::usage("the runtime ladder needs at least two sizes"));
    }
    let cfg = if config.n.is_none() && config.source == DataSource::Kinlike {
        ExperimentConfig { n: config.ladder.last().copied(), ..config.clone() }
    } else {
        config.clone()
    };
    let data = cfg.dataset()?;
    let top = *config.ladder.last().expect("non-empty ladder");
    if top > data.n() {
        return Err(CliError::usage(format!("ladder size {top} exceeds the {} available points", data.n())));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| CliError::usage(format!("cannot build thread pool: {e}")))?;
    let (m, m_max) = (config.m, config.m_max);
    let width = config.width();
    pool.install(|| {
        let mut records = Vec::with_capacity(2 * config.ladder.len());
        for &n in &config.ladder {
            let sub = data.prefix(n)?;
            let k = centered_kernel(config, &sub, width)?;
            let y = sub.y();
            let (t_exact, c_exact) = time_median(|| {
                let model = fit(&k, y, m.min(n))?;
                dof_exact(&k, y, &model, m.min(model.actual_m()))?;
                Ok(model.actual_m())
            })?;
            let (t_approx, c_approx) = time_median(|| {
                let model = fit(&k, y, m_max.min(n))?;
                dof_approx(&k, y, &model, m.min(model.actual_m()), m_max)?;
                Ok(model.actual_m())
            })?;
            records.push(RuntimeRecord { n, variant: Variant::Exact, seconds: t_exact, components: c_exact });
            records.push(RuntimeRecord { n, variant: Variant::Approx, seconds: t_approx, components: c_approx });
        }
        let series = |v: Variant| -> Vec<(usize, f64)> {
            records.iter().filter(|r| r.variant == v).map(|r| (r.n, r.seconds)).collect()
        };
        Ok(RuntimeReport {
            slope_exact: loglog_slope(&series(Variant::Exact)),
            slope_approx: loglog_slope(&series(Variant::Approx)),
            records,
        })
    })
}

/// Evenly spaced 1-D grid `lo..=hi` with `points` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1d {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for Grid1d {
    fn default() -> Self {
        Grid1d { lo: -6.0, hi: 7.0, points: 261 }
    }
}

impl Grid1d {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.lo + step * i as f64).collect()
    }
}

impl FromStr for Grid1d {
    type Err = String;

    /// `lo,hi,points`
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [lo, hi, points] = parts[..] else {
            return Err(format!("expected lo,hi,points, got {s:?}"));
        };
        let lo: f64 = lo.parse().map_err(|e| format!("{lo:?}: {e}"))?;
        let hi: f64 = hi.parse().map_err(|e| format!("{hi:?}: {e}"))?;
        let points: usize = points.parse().map_err(|e| format!("{points:?}: {e}"))?;
        if !(lo < hi) || points == 0 {
            return Err(format!("need lo < hi and at least one point, got {s:?}"));
        }
        Ok(Grid1d { lo, hi, points })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CiBlock {
    pub width: f64,
    pub m: usize,
    pub band: ConfidenceBand,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CiDemo {
    pub data: Dataset,
    pub blocks: Vec<CiBlock>,
}

impl CiDemo {
    pub fn table(&self) -> Table {
        let mut t =
            Table::new(&["model", "width", "m", "level", "sigma", "x", "prediction", "stderr", "lower", "upper"]);
        for (i, b) in self.blocks.iter().enumerate() {
            let band = &b.band;
            for g in 0..band.points.len() {
                t.push(vec![
                    (i + 1).into(),
                    b.width.into(),
                    b.m.into(),
                    band.level.into(),
                    band.sigma.into(),
                    band.points[g][0].into(),
                    band.prediction[g].into(),
                    band.stderr[g].into(),
                    band.lower[g].into(),
                    band.upper[g].into(),
                ]);
            }
        }
        t
    }
}

/// Bands for each `(m, width)` model on a 1-D dataset. The noise level is
/// estimated from the residuals with approximate degrees of freedom.
pub fn run_ci(config: &ExperimentConfig, models: &[(usize, f64)], grid: &Grid1d) -> Result<CiDemo, CliError> {
    let data = config.dataset()?;
    if data.dim() != 1 {
        return Err(CliError::usage(format!("confidence bands are emitted on a 1-D grid; data has {} inputs", data.dim())));
    }
    let points: Vec<Vec<f64>> = grid.values().into_iter().map(|v| vec![v]).collect();
    let mut blocks = Vec::with_capacity(models.len());
    for &(m, width) in models {
        let k = centered_kernel(config, &data, width)?;
        let model = fit(&k, data.y(), m.min(data.n()))?;
        let m_used = m.min(model.actual_m());
        let band = confidence_band(&model, &k, &data, &points, m_used, config.level, None, SigmaDof::Approx)?;
        blocks.push(CiBlock { width, m: m_used, band });
    }
    Ok(CiDemo { data, blocks })
}

/// Both band models on the two-cluster data over [-6, 7].
pub fn run_ci_demo(config: &ExperimentConfig) -> Result<CiDemo, CliError> {
    run_ci(config, &CI_MODELS, &Grid1d::default())
}

/// Medians of the standard error inside the two clusters of the polymix
/// data (within one SD of a component mean) and outside them (more than
/// two SDs from both means: the gap between the clusters and the
/// periphery).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionMedians {
    pub cluster: f64,
    pub outside: f64,
}

impl RegionMedians {
    pub fn ratio(&self) -> f64 {
        self.outside / self.cluster
    }
}

pub fn stderr_by_region(band: &ConfidenceBand) -> RegionMedians {
    let means = [-2.0, 3.0];
    let dist = |x: f64| means.iter().map(|m| (x - m).abs()).fold(f64::INFINITY, f64::min);
    let mut cluster = Vec::new();
    let mut outside = Vec::new();
    for (p, s) in band.points.iter().zip(&band.stderr) {
        let d = dist(p[0]);
        if d <= 1.0 {
            cluster.push(*s);
        } else if d > 2.0 {
            outside.push(*s);
        }
    }
    RegionMedians { cluster: median(&mut cluster), outside: median(&mut outside) }
}

pub fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    if v.len() % 2 == 1 {
        v[h]
    } else {
        0.5 * (v[h - 1] + v[h])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_power_law() {
        let pts: Vec<(usize, f64)> = [100, 200, 400, 800].iter().map(|&n| (n, 3e-9 * (n as f64).powi(3))).collect();
        assert!((loglog_slope(&pts) - 3.0).abs() < 1e-12);
        assert!((loglog_slope(&pts[..2]) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn grid_and_median() {
        let g: Grid1d = "-6,7,14".parse().unwrap();
        let v = g.values();
        assert_eq!((v[0], v[13], v.len()), (-6.0, 7.0, 14));
        assert!("1,0,5".parse::<Grid1d>().is_err());
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn guard_refuses_large_exact_runs() {
        let cfg = ExperimentConfig { n: Some(600), widths: vec![1.0], m_max_sweep: vec![3], m_star: 2, ..Default::default() };
        let e = run_dof_experiment(&cfg).unwrap_err().to_string();
        assert!(e.contains("--force"), "{e}");
    }
}

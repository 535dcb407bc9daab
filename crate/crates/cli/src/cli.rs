//! Argument parsing and subcommand dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use kpls_core::kernels::{center, gram};
use kpls_core::{fit, select, SelectionGrid};

use crate::config::{pick, ConfigFile, DataSource, ExperimentConfig, KernelKind, List};
use crate::data::dataset_csv;
use crate::error::CliError;
use crate::experiments::{self, Grid1d, CI_MODELS};
use crate::persist::SavedModel;
use crate::table::{Cell, Table};

#[derive(Debug, Parser)]
#[command(name = "kpls", version, about = "Kernel partial least squares: fits, degrees of freedom, bands, benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Synth(Common),
    /// Fit a model and write it in the text model format.
    Fit(Common),
    /// Exact and approximate degrees of freedom for one model, or the full sweep.
    Dof(DofArgs),
    /// gMDL selection over widths and components; saves the winning model.
    Select(SelectArgs),
    /// Pointwise confidence bands on a 1-D grid.
    Ci(CiArgs),
    /// Runtime of the exact and approximate pipelines over a ladder of sizes.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// key=value settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV with header x1,..,xd,y.
    #[arg(long)]
    input: Option<PathBuf>,
    /// sinc, polymix, kinlike or csv:<path>.
    #[arg(long)]
    dataset: Option<DataSource>,
    /// Sample size of synthetic data.
    #[arg(long)]
    n: Option<usize>,
    /// Noise level of synthetic data.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// rbf or linear.
    #[arg(long)]
    kernel: Option<KernelKind>,
    /// rbf width; a comma-separated list where several are used.
    #[arg(long, allow_hyphen_values = true)]
    width: Option<List<f64>>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long = "m-max")]
    m_max: Option<usize>,
    #[arg(long = "m-star")]
    m_star: Option<usize>,
    /// Confidence level in (0, 1).
    #[arg(long)]
    level: Option<f64>,
    /// Output file; standard output if absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DofArgs {
    #[command(flatten)]
    common: Common,
    /// Sweep widths, m_max values and m = 1..=m-star.
    #[arg(long)]
    sweep: bool,
    /// m_max values of the sweep, comma-separated.
    #[arg(long = "m-max-sweep")]
    m_max_sweep: Option<List<usize>>,
    /// Allow exact degrees of freedom above the size guard.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[command(flatten)]
    common: Common,
    /// Score with exact instead of approximate degrees of freedom.
    #[arg(long = "exact-dof")]
    exact_dof: bool,
    /// Where the winning model is written.
    #[arg(long = "save-model", default_value = "kpls-model.txt")]
    save_model: PathBuf,
}

#[derive(Debug, Args)]
struct CiArgs {
    #[command(flatten)]
    common: Common,
    /// lo,hi,points of the evaluation grid.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<Grid1d>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Ascending sample sizes, comma-separated.
    #[arg(long)]
    ladder: Option<List<usize>>,
}

fn resolve(c: &Common, mut cfg: ExperimentConfig) -> Result<(ExperimentConfig, ConfigFile), CliError> {
    let file = match &c.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let input: Option<PathBuf> = pick(c.input.clone(), &file, "input")?;
    let dataset: Option<DataSource> = pick(c.dataset.clone(), &file, "dataset")?;
    cfg.source = match (input, dataset) {
        (Some(_), Some(_)) => return Err(CliError::usage("give either --input or --dataset, not both")),
        (Some(p), None) => DataSource::Csv(p),
        (None, Some(d)) => d,
        (None, None) => cfg.source,
    };
    if let Some(v) = pick(c.n, &file, "n")? {
        cfg.n = Some(v);
    }
    if let Some(v) = pick(c.sigma, &file, "sigma")? {
        cfg.sigma = Some(v);
    }
    cfg.seed = pick(c.seed, &file, "seed")?.unwrap_or(cfg.seed);
    cfg.kernel = pick(c.kernel, &file, "kernel")?.unwrap_or(cfg.kernel);
    cfg.widths = pick(c.width.clone(), &file, "width")?.map_or(cfg.widths, |l| l.0);
    cfg.m = pick(c.m, &file, "m")?.unwrap_or(cfg.m);
    cfg.m_max = pick(c.m_max, &file, "m-max")?.unwrap_or(cfg.m_max);
    cfg.m_star = pick(c.m_star, &file, "m-star")?.unwrap_or(cfg.m_star);
    cfg.level = pick(c.level, &file, "level")?.unwrap_or(cfg.level);
    cfg.output = pick(c.output.clone(), &file, "output")?.or(cfg.output);
    cfg.m_max_sweep = file.get::<List<usize>>("m-max-sweep")?.map_or(cfg.m_max_sweep, |l| l.0);
    cfg.ladder = file.get::<List<usize>>("ladder")?.map_or(cfg.ladder, |l| l.0);
    cfg.force = file.get::<bool>("force")?.unwrap_or(cfg.force);
    Ok((cfg, file))
}

fn given(c: &Common, file: &ConfigFile, key: &str) -> bool {
    let flag = match key {
        "width" => c.width.is_some(),
        "m" => c.m.is_some(),
        _ => false,
    };
    flag || file.get::<String>(key).ok().flatten().is_some()
}

fn emit(text: &str, output: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    match output {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => out.write_all(text.as_bytes()).map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn run_command(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Synth(c) => {
            let (cfg, _) = resolve(&c, ExperimentConfig::default())?;
            cfg.validate()?;
            emit(&dataset_csv(&cfg.dataset()?), cfg.output.as_deref(), out)
        }
        Command::Fit(c) => {
            let base = ExperimentConfig { widths: vec![1.0], m_max: 20, ..Default::default() };
            let (cfg, _) = resolve(&c, base)?;
            cfg.validate()?;
            let data = cfg.dataset()?;
            let spec = cfg.kernel_spec(cfg.width())?;
            let k = center(&gram(&spec, data.x())?)?;
            let model = fit(&k, data.y(), cfg.m_max.min(data.n()))?;
            let m = model.actual_m();
            if m < cfg.m_max {
                let _ = writeln!(err, "fit stopped after {m} of {} components", cfg.m_max);
            }
            let saved = SavedModel::new(model, spec, data.x().to_vec(), m)?;
            emit(&saved.to_text(), cfg.output.as_deref(), out)
        }
        Command::Dof(a) => {
            let base = ExperimentConfig { force: a.force, ..Default::default() };
            let (mut cfg, file) = resolve(&a.common, base)?;
            if let Some(l) = a.m_max_sweep {
                cfg.m_max_sweep = l.0;
            }
            cfg.force |= a.force;
            if !a.sweep {
                cfg.m_max = a.common.m_max.or(file.get("m-max")?).unwrap_or(20);
                if !given(&a.common, &file, "width") {
                    cfg.widths = vec![1.0];
                }
            }
            cfg.validate()?;
            let table = if a.sweep {
                experiments::dof_sweep_table(&experiments::run_dof_experiment(&cfg)?)
            } else {
                experiments::dof_report_table(&cfg)?
            };
            emit(&table.to_csv(), cfg.output.as_deref(), out)
        }
        Command::Select(a) => {
            let base = ExperimentConfig { m_star: 15, m_max: 30, ..Default::default() };
            let (cfg, _) = resolve(&a.common, base)?;
            cfg.validate()?;
            let data = cfg.dataset()?;
            if cfg.kernel != KernelKind::Rbf {
                return Err(CliError::usage("selection searches over rbf widths; --kernel linear is not supported here"));
            }
            let grid = SelectionGrid { widths: cfg.widths.clone(), m_star: cfg.m_star, m_max: cfg.m_max.min(data.n()) };
            let report = select(&data, &grid, !a.exact_dof)?;
            for d in &report.diagnostics {
                let _ = writeln!(err, "{d}");
            }
            let mut t = Table::new(&["width", "m", "rss", "dof", "gmdl", "chosen"]);
            for e in &report.entries {
                let chosen = e.width == report.chosen_width && e.m == report.chosen_m;
                t.push(vec![e.width.into(), e.m.into(), e.rss.into(), e.dof.into(), e.gmdl.into(), Cell::U(chosen as usize)]);
            }
            let spec = cfg.kernel_spec(report.chosen_width)?;
            let k = center(&gram(&spec, data.x())?)?;
            let model = fit(&k, data.y(), grid.m_max)?;
            let saved = SavedModel::new(model, spec, data.x().to_vec(), report.chosen_m)?;
            std::fs::write(&a.save_model, saved.to_text()).map_err(|e| CliError::io(&a.save_model, e))?;
            emit(&t.to_csv(), cfg.output.as_deref(), out)
        }
        Command::Ci(a) => {
            let base = ExperimentConfig { source: DataSource::Polymix, ..Default::default() };
            let (cfg, file) = resolve(&a.common, base)?;
            cfg.validate()?;
            let grid = pick(a.grid, &file, "grid")?.unwrap_or_default();
            let custom = given(&a.common, &file, "width") || given(&a.common, &file, "m");
            let models: Vec<(usize, f64)> = if custom {
                let m = if given(&a.common, &file, "m") { cfg.m } else { CI_MODELS[1].0 };
                let w = if given(&a.common, &file, "width") { cfg.width() } else { CI_MODELS[1].1 };
                vec![(m, w)]
            } else {
                CI_MODELS.to_vec()
            };
            let demo = experiments::run_ci(&cfg, &models, &grid)?;
            emit(&demo.table().to_csv(), cfg.output.as_deref(), out)
        }
        Command::Bench(a) => {
            let base = ExperimentConfig {
                source: DataSource::Kinlike,
                widths: vec![2.0],
                m: 10,
                m_max: 30,
                ..Default::default()
            };
            let (mut cfg, _) = resolve(&a.common, base)?;
            if let Some(l) = a.ladder {
                cfg.ladder = l.0;
            }
            cfg.validate()?;
            let report = experiments::run_runtime_benchmark(&cfg)?;
            let _ = writeln!(err, "log-log slope exact: {:.3}", report.slope_exact);
            let _ = writeln!(err, "log-log slope approx: {:.3}", report.slope_approx);
            emit(&report.table().to_csv(), cfg.output.as_deref(), out)
        }
    }
}

fn valid_flags(args: &[OsString]) -> String {
    let root = Cli::command();
    let sub = args
        .iter()
        .skip(1)
        .filter_map(|a| a.to_str())
        .find_map(|a| root.get_subcommands().find(|s| s.get_name() == a));
    match sub {
        Some(s) => {
            let flags: Vec<String> = s.get_arguments().filter_map(|a| a.get_long()).map(|l| format!("--{l}")).collect();
            format!("valid flags for {}: {}", s.get_name(), flags.join(", "))
        }
        None => {
            let subs: Vec<&str> = root.get_subcommands().map(|s| s.get_name()).collect();
            format!("subcommands: {}", subs.join(", "))
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("KPLS_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::usage(format!("KPLS_THREADS must be a positive integer, got {v:?}")))?;
    // a second call in the same process finds the pool already built
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Runs the tool and returns the process exit code: 0 on success, 1 on
/// usage or input errors, 2 on numerical failure.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                kind => {
                    let _ = write!(err, "{}", e.render());
                    if kind == ErrorKind::UnknownArgument {
                        let _ = writeln!(err, "{}", valid_flags(&args));
                    }
                    1
                }
            };
        }
    };
    let result = init_threads().and_then(|_| run_command(cli.command, out, err));
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

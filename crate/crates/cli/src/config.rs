//! Experiment settings and the `key=value` config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use kpls_core::{Dataset, KernelSpec};

use crate::data;
use crate::error::CliError;

/// Keys accepted in a config file. Underscores are read as dashes.
pub const CONFIG_KEYS: &[&str] = &[
    "dataset",
    "force",
    "grid",
    "input",
    "kernel",
    "ladder",
    "level",
    "m",
    "m-max",
    "m-max-sweep",
    "m-star",
    "n",
    "output",
    "seed",
    "sigma",
    "width",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, (usize, String)>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("config line {}: expected key=value, got {line:?}", i + 1)))?;
            let key = key.trim().replace('_', "-");
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(CliError::usage(format!(
                    "config line {}: unknown key {key:?}; valid keys: {}",
                    i + 1,
                    CONFIG_KEYS.join(", ")
                )));
            }
            values.insert(key, (i + 1, value.trim().to_string()));
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    /// Parsed value of `key`, if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::usage(format!("config line {line}: bad value for {key}: {e}"))),
        }
    }
}

/// Flag value if given, else the config file's value.
pub fn pick<T: FromStr>(flag: Option<T>, file: &ConfigFile, key: &str) -> Result<Option<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(Some(v)),
        None => file.get(key),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Sinc,
    Polymix,
    Kinlike,
    Csv(PathBuf),
}

impl FromStr for DataSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sinc" => Ok(DataSource::Sinc),
            "polymix" => Ok(DataSource::Polymix),
            "kinlike" => Ok(DataSource::Kinlike),
            _ => match s.strip_prefix("csv:") {
                Some(p) if !p.is_empty() => Ok(DataSource::Csv(PathBuf::from(p))),
                _ => Err(format!("unknown dataset {s:?}; use sinc, polymix, kinlike or csv:<path>")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Rbf,
    Linear,
}

impl FromStr for KernelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rbf" => Ok(KernelKind::Rbf),
            "linear" => Ok(KernelKind::Linear),
            _ => Err(format!("unknown kernel {s:?}; use rbf or linear")),
        }
    }
}

/// Comma-separated list, as used for widths, ladders and sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: std::fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<T>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(List)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Sample size for synthetic sources; `None` means the source default.
    pub n: Option<usize>,
    /// Noise level for synthetic sources; `None` means the source default.
    pub sigma: Option<f64>,
    pub kernel: KernelKind,
    pub widths: Vec<f64>,
    pub m: usize,
    pub m_star: usize,
    pub m_max: usize,
    /// m_max values of the approximation sweep.
    pub m_max_sweep: Vec<usize>,
    pub level: f64,
    pub output: Option<PathBuf>,
    pub source: DataSource,
    pub ladder: Vec<usize>,
    /// Lifts the size guard on cubic-cost experiments.
    pub force: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            n: None,
            sigma: None,
            kernel: KernelKind::Rbf,
            widths: vec![0.01, 0.1, 1.0],
            m: 5,
            m_star: 10,
            m_max: 30,
            m_max_sweep: (1..=30).collect(),
            level: 0.98,
            output: None,
            source: DataSource::Sinc,
            ladder: (1..=10).map(|i| 100 * i).collect(),
            force: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::usage(msg));
        if self.n == Some(0) {
            return bad("n must be at least 1".into());
        }
        if self.m == 0 || self.m_star == 0 || self.m_max == 0 {
            return bad(format!("m ({}), m-star ({}) and m-max ({}) must be at least 1", self.m, self.m_star, self.m_max));
        }
        if self.m_max_sweep.is_empty() || self.m_max_sweep.contains(&0) {
            return bad("m-max-sweep needs positive entries".into());
        }
        if let Some(s) = self.sigma {
            if !(s >= 0.0) || !s.is_finite() {
                return bad(format!("sigma must be finite and >= 0, got {s}"));
            }
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("level must lie in (0, 1), got {}", self.level));
        }
        if self.widths.is_empty() {
            return bad("at least one width is needed".into());
        }
        if let Some(w) = self.widths.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return bad(format!("kernel width must be positive, got {w}"));
        }
        if self.ladder.is_empty() || self.ladder.contains(&0) || self.ladder.windows(2).any(|w| w[0] >= w[1]) {
            return bad("ladder must be a strictly ascending list of positive sizes".into());
        }
        Ok(())
    }

    /// The first configured width, for commands that fit a single model.
    pub fn width(&self) -> f64 {
        self.widths[0]
    }

    pub fn kernel_spec(&self, width: f64) -> Result<KernelSpec, CliError> {
        Ok(match self.kernel {
            KernelKind::Rbf => KernelSpec::rbf(width)?,
            KernelKind::Linear => KernelSpec::Linear,
        })
    }

    /// Loads or generates the configured dataset. Defaults: sinc n = 100,
    /// σ = 0.1; polymix n = 40, σ = 1; kinlike n = largest ladder size,
    /// σ = 0.1.
    pub fn dataset(&self) -> Result<Dataset, CliError> {
        Ok(match &self.source {
            DataSource::Sinc => data::synth_sinc(self.n.unwrap_or(100), self.sigma.unwrap_or(0.1), self.seed)?,
            DataSource::Polymix => data::synth_polymix(self.n.unwrap_or(40), self.sigma.unwrap_or(1.0), self.seed)?,
            DataSource::Kinlike => {
                let n = self.n.unwrap_or(*self.ladder.last().expect("validated ladder"));
                data::synth_kinlike(n, self.sigma.unwrap_or(0.1), self.seed)?
            }
            DataSource::Csv(path) => data::load_csv(path)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_syntax() {
        let f = ConfigFile::parse("# sweep\nwidth = 0.5,1 # two widths\nm_star=4\n\nseed=7\n").unwrap();
        assert_eq!(f.get::<List<f64>>("width").unwrap(), Some(List(vec![0.5, 1.0])));
        assert_eq!(f.get::<usize>("m-star").unwrap(), Some(4));
        assert_eq!(f.get::<u64>("level").unwrap(), None);
        assert_eq!(pick(Some(3u64), &f, "seed").unwrap(), Some(3));
        assert_eq!(pick(None::<u64>, &f, "seed").unwrap(), Some(7));
    }

    #[test]
    fn config_file_errors() {
        let e = ConfigFile::parse("widht=1\n").unwrap_err().to_string();
        assert!(e.contains("line 1") && e.contains("valid keys"), "{e}");
        assert!(ConfigFile::parse("seed\n").is_err());
        let f = ConfigFile::parse("\nseed=x\n").unwrap();
        assert!(f.get::<u64>("seed").unwrap_err().to_string().contains("line 2"));
    }

    #[test]
    fn sources_and_validation() {
        assert_eq!("csv:a/b.csv".parse::<DataSource>().unwrap(), DataSource::Csv("a/b.csv".into()));
        assert!("csv:".parse::<DataSource>().is_err());
        let mut c = ExperimentConfig::default();
        c.validate().unwrap();
        c.level = 1.0;
        assert!(c.validate().is_err());
        c.level = 0.9;
        c.ladder = vec![200, 100];
        assert!(c.validate().is_err());
    }
}

use std::path::{Path, PathBuf};

use kpls_core::KplsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{}line {line}{}: {msg}", file_prefix(.file), column_suffix(*.column))]
    Csv { file: Option<PathBuf>, line: usize, column: usize, msg: String },

    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Kpls(#[from] KplsError),
}

fn file_prefix(file: &Option<PathBuf>) -> String {
    file.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default()
}

fn column_suffix(column: usize) -> String {
    if column == 0 {
        String::new()
    } else {
        format!(", column {column}")
    }
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub(crate) fn csv(line: usize, column: usize, msg: impl Into<String>) -> Self {
        CliError::Csv { file: None, line, column, msg: msg.into() }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn in_file(self, path: &Path) -> Self {
        match self {
            CliError::Csv { line, column, msg, .. } => CliError::Csv { file: Some(path.to_path_buf()), line, column, msg },
            other => other,
        }
    }

    /// 2 for numerical failures, 1 for everything the caller can fix.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Kpls(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

//! Plain-text model files.
//!
//! ```text
//! kpls-model,1
//! [scalars]
//! kernel,rbf
//! ...
//! [t]
//! <n rows of m values>
//! ```
//!
//! Every block is CSV with floats at 17 significant digits, so a saved and
//! reloaded model predicts bit-identically. The training inputs are stored
//! too; prediction needs them for the kernel column.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use kpls_core::kernels::{center, gram, kernel_column};
use kpls_core::{predict, KernelMatrix, KernelSpec, KplsModel, StopReason};

use crate::error::CliError;
use crate::table::fmt_f64;

const MAGIC: &str = "kpls-model,1";

#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub model: KplsModel,
    pub spec: KernelSpec,
    pub x: Vec<Vec<f64>>,
    /// Components used for prediction.
    pub m: usize,
}

impl SavedModel {
    pub fn new(model: KplsModel, spec: KernelSpec, x: Vec<Vec<f64>>, m: usize) -> Result<Self, CliError> {
        model.check_m(m)?;
        if x.len() != model.n() {
            return Err(CliError::usage("training inputs and model disagree on n"));
        }
        Ok(SavedModel { model, spec, x, m })
    }

    /// Rebuilds the (centered, if the model was) training kernel matrix.
    pub fn kernel(&self) -> Result<KernelMatrix, CliError> {
        let k = gram(&self.spec, &self.x)?;
        Ok(if self.model.is_centered() { center(&k)? } else { k })
    }

    pub fn predict(&self, k: &KernelMatrix, point: &[f64]) -> Result<f64, CliError> {
        let raw = kernel_column(&self.spec, &self.x, point)?;
        let kx = if self.model.is_centered() { k.center_column(&raw)? } else { raw };
        Ok(predict(&self.model, &kx, self.m)?)
    }

    pub fn to_text(&self) -> String {
        let md = &self.model;
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        s.push_str("[scalars]\n");
        match self.spec {
            KernelSpec::Linear => s.push_str("kernel,linear\n"),
            KernelSpec::Rbf { width } => {
                s.push_str("kernel,rbf\n");
                let _ = writeln!(s, "width,{}", fmt_f64(width));
            }
        }
        let _ = writeln!(s, "centered,{}", md.is_centered());
        let _ = writeln!(s, "y_mean,{}", fmt_f64(md.y_mean()));
        let _ = writeln!(s, "m_max,{}", md.m_max());
        let _ = writeln!(s, "m,{}", self.m);
        let _ = writeln!(s, "stop,{}", stop_name(md.stop_reason()));
        matrix_block(&mut s, "x", &self.x);
        let rows = |cols: &[Vec<f64>]| -> Vec<Vec<f64>> {
            (0..md.n()).map(|i| cols.iter().map(|c| c[i]).collect()).collect()
        };
        matrix_block(&mut s, "t", &rows(md.t_columns()));
        matrix_block(&mut s, "r", &rows(md.r_columns()));
        let m = md.actual_m();
        let yhat: Vec<Vec<f64>> = (1..=m).map(|j| md.yhat(j).to_vec()).collect();
        let alpha: Vec<Vec<f64>> = (1..=m).map(|j| md.alpha(j).to_vec()).collect();
        matrix_block(&mut s, "yhat", &rows(&yhat));
        matrix_block(&mut s, "alpha", &rows(&alpha));
        vector_block(&mut s, "knorms", md.knorms());
        vector_block(&mut s, "l_superdiag", md.l_superdiag());
        vector_block(&mut s, "residual_knorms", md.residual_knorms());
        s
    }

    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == MAGIC => {}
            _ => return Err(CliError::csv(1, 0, format!("not a model file (expected {MAGIC:?})"))),
        }
        let mut blocks: BTreeMap<String, Vec<(usize, &str)>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                blocks.insert(name.to_string(), Vec::new());
                current = Some(name.to_string());
            } else {
                let name = current.as_ref().ok_or_else(|| CliError::csv(i + 1, 0, "data before first block"))?;
                blocks.get_mut(name).expect("block opened").push((i + 1, line));
            }
        }
        let block = |name: &str| {
            blocks.get(name).ok_or_else(|| CliError::csv(0, 0, format!("missing block [{name}]")))
        };
        let mut scalars = BTreeMap::new();
        for (line, row) in block("scalars")? {
            let (k, v) = row.split_once(',').ok_or_else(|| CliError::csv(*line, 0, "expected key,value"))?;
            scalars.insert(k, (*line, v));
        }
        let scalar = |k: &str| scalars.get(k).copied().ok_or_else(|| CliError::csv(0, 0, format!("missing scalar {k}")));
        let spec = match scalar("kernel")?.1 {
            "linear" => KernelSpec::Linear,
            "rbf" => KernelSpec::rbf(parse_cell(scalar("width")?, 2)?)?,
            other => return Err(CliError::csv(scalar("kernel")?.0, 2, format!("unknown kernel {other:?}"))),
        };
        let centered = match scalar("centered")? {
            (_, "true") => true,
            (_, "false") => false,
            (l, v) => return Err(CliError::csv(l, 2, format!("expected true or false, got {v:?}"))),
        };
        let y_mean: f64 = parse_cell(scalar("y_mean")?, 2)?;
        let m_max: usize = parse_cell(scalar("m_max")?, 2)?;
        let m: usize = parse_cell(scalar("m")?, 2)?;
        let stop = match scalar("stop")? {
            (_, "completed") => StopReason::Completed,
            (_, "residual-exhausted") => StopReason::ResidualExhausted,
            (_, "krylov-exhausted") => StopReason::KrylovExhausted,
            (l, v) => return Err(CliError::csv(l, 2, format!("unknown stop reason {v:?}"))),
        };
        let x = parse_rows(block("x")?)?;
        let cols = |name: &str| -> Result<Vec<Vec<f64>>, CliError> {
            let rows = parse_rows(block(name)?)?;
            let width = rows.first().map_or(0, Vec::len);
            Ok((0..width).map(|j| rows.iter().map(|r| r[j]).collect()).collect())
        };
        let vector = |name: &str| -> Result<Vec<f64>, CliError> {
            block(name)?.iter().map(|&(l, v)| parse_cell((l, v), 1)).collect()
        };
        let model = KplsModel::from_parts(
            m_max,
            centered,
            y_mean,
            cols("t")?,
            cols("r")?,
            vector("knorms")?,
            vector("l_superdiag")?,
            vector("residual_knorms")?,
            cols("yhat")?,
            cols("alpha")?,
            stop,
        )?;
        SavedModel::new(model, spec, x, m)
    }
}

fn stop_name(s: StopReason) -> &'static str {
    match s {
        StopReason::Completed => "completed",
        StopReason::ResidualExhausted => "residual-exhausted",
        StopReason::KrylovExhausted => "krylov-exhausted",
    }
}

fn matrix_block(s: &mut String, name: &str, rows: &[Vec<f64>]) {
    let _ = writeln!(s, "[{name}]");
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| fmt_f64(*v)).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
}

fn vector_block(s: &mut String, name: &str, v: &[f64]) {
    let _ = writeln!(s, "[{name}]");
    for x in v {
        let _ = writeln!(s, "{}", fmt_f64(*x));
    }
}

fn parse_cell<T: std::str::FromStr>((line, v): (usize, &str), column: usize) -> Result<T, CliError> {
    v.trim().parse().map_err(|_| CliError::csv(line, column, format!("cannot parse {v:?}")))
}

fn parse_rows(rows: &[(usize, &str)]) -> Result<Vec<Vec<f64>>, CliError> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
    for &(line, row) in rows {
        let r = row
            .split(',')
            .enumerate()
            .map(|(j, c)| parse_cell((line, c), j + 1))
            .collect::<Result<Vec<f64>, _>>()?;
        if out.first().is_some_and(|f| f.len() != r.len()) {
            return Err(CliError::csv(line, 0, "ragged block"));
        }
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_sinc;
    use kpls_core::fit;

    fn saved(m_max: usize, m: usize) -> (SavedModel, kpls_core::Dataset) {
        let d = synth_sinc(30, 0.1, 4).unwrap();
        let spec = KernelSpec::rbf(0.7).unwrap();
        let k = center(&gram(&spec, d.x()).unwrap()).unwrap();
        let model = fit(&k, d.y(), m_max).unwrap();
        (SavedModel::new(model, spec, d.x().to_vec(), m).unwrap(), d)
    }

    #[test]
    fn round_trip_is_exact() {
        for (m_max, m) in [(1, 1), (6, 4)] {
            let (s, d) = saved(m_max, m);
            let back = SavedModel::from_text(&s.to_text()).unwrap();
            assert_eq!(back, s);
            let k = back.kernel().unwrap();
            let p = back.predict(&k, &d.x()[3]).unwrap();
            assert!((p - s.model.y_mean() - s.model.yhat(m)[3]).abs() < 1e-10);
        }
    }

    #[test]
    fn damaged_files_are_rejected() {
        let (s, _) = saved(3, 2);
        let text = s.to_text();
        assert!(SavedModel::from_text(&text.replacen("kpls-model,1", "kpls-model,9", 1)).is_err());
        assert!(SavedModel::from_text(&text.replacen("[alpha]", "[beta]", 1)).is_err());
        let broken = text.replacen("centered,true", "centered,maybe", 1);
        assert!(SavedModel::from_text(&broken).unwrap_err().to_string().contains("line"));
    }
}

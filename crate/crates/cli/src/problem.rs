//! Problem files: a TOML document in either gamble form or interval form.
//!
//! ```toml
//! name = "two states"
//! states = 2
//! gambles = [[1.0, -1.0], [-1.0, 1.0]]
//! # one row per gamble, one column per state
//! lower_bounds = [[-3.0, 0.5], [0.2, -4.0]]
//! ```
//!
//! or `states`, `q_lower` and `q_upper` (both `m × m`).

use std::fs;
use std::path::Path;

use ictmc_core::ImpreciseQMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{}", describe(.line, .field, .message))]
    Parse {
        line: Option<usize>,
        field: Option<String>,
        message: String,
    },
    #[error(transparent)]
    Model(#[from] ictmc_core::Error),
}

fn describe(line: &Option<usize>, field: &Option<String>, message: &str) -> String {
    let mut out = String::from("parse error");
    if let Some(l) = line {
        out.push_str(&format!(" at line {l}"));
    }
    if let Some(f) = field {
        out.push_str(&format!(" in `{f}`"));
    }
    out.push_str(": ");
    out.push_str(message);
    out
}

fn shape_error(field: &str, message: String) -> LoadError {
    LoadError::Parse {
        line: None,
        field: Some(field.to_string()),
        message,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub states: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gambles: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_bounds: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_lower: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_upper: Option<Vec<Vec<f64>>>,
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self, LoadError> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            LoadError::Parse {
                line,
                field: None,
                message: e.message().to_string(),
            }
        })
    }

    /// Floats are written in shortest round-trip form, so reading back is bit-exact.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("problem files serialise")
    }

    /// Gamble form of a model, including any indicator gambles it added.
    pub fn from_model(model: &ImpreciseQMatrix, name: Option<String>) -> Self {
        let m = model.states();
        Self {
            name,
            description: None,
            states: m,
            gambles: Some(model.gambles().iter().map(|g| g.to_vec()).collect()),
            lower_bounds: Some(
                (0..model.gamble_count())
                    .map(|i| (0..m).map(|k| model.lower_bound(i, k)).collect())
                    .collect(),
            ),
            q_lower: None,
            q_upper: None,
        }
    }

    pub fn to_model(&self) -> Result<ImpreciseQMatrix, LoadError> {
        let m = self.states;
        if m == 0 {
            return Err(shape_error("states", "must be at least 1".into()));
        }
        match (&self.gambles, &self.lower_bounds, &self.q_lower, &self.q_upper) {
            (Some(g), Some(l), None, None) => {
                check_matrix("gambles", g, None, m)?;
                check_matrix("lower_bounds", l, Some(g.len()), m)?;
                Ok(ImpreciseQMatrix::new(m, g.clone(), l.clone())?)
            }
            (None, None, Some(lo), Some(up)) => {
                check_matrix("q_lower", lo, Some(m), m)?;
                check_matrix("q_upper", up, Some(m), m)?;
                Ok(ImpreciseQMatrix::from_intervals(lo, up)?)
            }
            _ => Err(LoadError::Parse {
                line: None,
                field: None,
                message: "give either `gambles` and `lower_bounds`, or `q_lower` and `q_upper`".into(),
            }),
        }
    }
}

fn check_matrix(field: &str, rows: &[Vec<f64>], count: Option<usize>, m: usize) -> Result<(), LoadError> {
    if let Some(n) = count {
        if rows.len() != n {
            return Err(shape_error(field, format!("expected {n} rows, found {}", rows.len())));
        }
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != m {
            return Err(shape_error(
                field,
                format!("row {i} has {} entries, expected {m}", r.len()),
            ));
        }
        if let Some(v) = r.iter().find(|v| v.is_nan()) {
            return Err(shape_error(field, format!("row {i} contains {v}")));
        }
    }
    Ok(())
}

pub fn read_problem(path: &Path) -> Result<ProblemFile, LoadError> {
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ProblemFile::parse(&text)
}

pub fn load_problem(path: &Path) -> Result<(ProblemFile, ImpreciseQMatrix), LoadError> {
    let file = read_problem(path)?;
    let model = file.to_model()?;
    Ok((file, model))
}

#[cfg(test)]
mod tests {
    use super::*;

    const GAMBLE_FORM: &str = r#"
name = "small"
states = 2
gambles = [[1.0, -1.0], [-1.0, 1.0]]
lower_bounds = [[-3.0, 0.5], [0.2, -4.0]]
"#;

    #[test]
    fn parses_gamble_form() {
        let f = ProblemFile::parse(GAMBLE_FORM).unwrap();
        assert_eq!(f.states, 2);
        let model = f.to_model().unwrap();
        assert_eq!(model.states(), 2);
        assert!(model.gamble_count() >= 3);
    }

    #[test]
    fn syntax_errors_carry_line() {
        let err = ProblemFile::parse("states = 2\ngambles = [[1.0, \n").unwrap_err();
        match err {
            LoadError::Parse { line: Some(l), .. } => assert!(l >= 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = ProblemFile::parse("states = 2\nq_lowr = []\n").unwrap_err();
        assert!(err.to_string().contains("q_lowr"), "{err}");
    }

    #[test]
    fn shape_mismatch_names_field() {
        let f = ProblemFile::parse("states = 2\ngambles = [[1.0, -1.0]]\nlower_bounds = [[0.0]]\n").unwrap();
        match f.to_model().unwrap_err() {
            LoadError::Parse { field: Some(f), .. } => assert_eq!(f, "lower_bounds"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mixed_forms_are_rejected() {
        let f = ProblemFile::parse("states = 1\ngambles = []\nq_lower = [[0.0]]\n").unwrap();
        assert!(matches!(f.to_model(), Err(LoadError::Parse { .. })));
    }

    #[test]
    fn model_round_trip() {
        let model = ictmc_core::fixtures::example1();
        let text = ProblemFile::from_model(&model, Some("ex1".into())).to_toml();
        let back = ProblemFile::parse(&text).unwrap().to_model().unwrap();
        assert_eq!(format!("{back:?}"), format!("{model:?}"));
        assert_eq!(back.lower_bounds(), model.lower_bounds());
        assert_eq!(back.gambles(), model.gambles());
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let f = ProblemFile {
            name: Some("x".into()),
            description: Some("d".into()),
            states: 2,
            gambles: None,
            lower_bounds: None,
            q_lower: Some(vec![vec![-0.1 - 0.2, 0.1 + 0.2], vec![1.0 / 3.0, -1.0 / 3.0]]),
            q_upper: Some(vec![vec![-0.1, 0.7], vec![2.0 / 3.0, -1.0 / 7.0]]),
        };
        let back = ProblemFile::parse(&f.to_toml()).unwrap();
        assert_eq!(back, f);
    }
}

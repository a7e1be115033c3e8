use std::fmt;
use std::str::FromStr;

use ictmc_core::Gamble;
use serde::Serialize;

/// The initial gamble as given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum GambleSpec {
    Values(Vec<f64>),
    /// `1_i`
    State(usize),
    /// `-1_i`
    NegState(usize),
}

impl GambleSpec {
    pub fn resolve(&self, m: usize) -> Result<Gamble, String> {
        let check = |i: usize| {
            if i < m {
                Ok(i)
            } else {
                Err(format!("state {i} out of range 0..{m}"))
            }
        };
        match self {
            GambleSpec::Values(v) => {
                if v.len() != m {
                    return Err(format!("gamble has {} entries, model has {m} states", v.len()));
                }
                Gamble::new(v.clone()).map_err(|e| e.to_string())
            }
            GambleSpec::State(i) => Ok(Gamble::indicator(m, check(*i)?)),
            GambleSpec::NegState(i) => Ok(Gamble::indicator(m, check(*i)?).neg()),
        }
    }
}

impl FromStr for GambleSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let index = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| format!("invalid state index `{t}`"))
        };
        if let Some(rest) = s.strip_prefix("neg-state:") {
            return Ok(GambleSpec::NegState(index(rest)?));
        }
        if let Some(rest) = s.strip_prefix("state:") {
            return Ok(GambleSpec::State(index(rest)?));
        }
        let values = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("invalid number `{}` in gamble", t.trim()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(GambleSpec::Values(values))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Adaptive,
    UniformExp,
    UniformEuler,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Adaptive => "adaptive",
            Method::UniformExp => "uniform-exp",
            Method::UniformEuler => "uniform-euler",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Text,
    /// A single JSON document.
    Structured,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub h: GambleSpec,
    pub horizon: f64,
    pub max_error: f64,
    pub method: Method,
    pub steps: Option<usize>,
    pub dt_min: Option<f64>,
    pub output: OutputFormat,
    pub debug_invariants: bool,
    pub upper: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(format!("--T must be finite and >= 0, got {}", self.horizon));
        }
        if self.method == Method::Adaptive && (self.max_error.is_nan() || self.max_error <= 0.0) {
            return Err(format!("--max-error must be > 0, got {}", self.max_error));
        }
        if self.steps == Some(0) {
            return Err("--steps must be at least 1".into());
        }
        if let Some(d) = self.dt_min {
            if d.is_nan() || d <= 0.0 {
                return Err(format!("--dt-min must be > 0, got {d}"));
            }
        }
        Ok(())
    }
}

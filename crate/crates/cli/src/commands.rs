use std::fmt::Write as _;

use ictmc_core::solver::{self, GridReport, SolveOptions, SolveReport, Variant};
use ictmc_core::{lp, Error, Gamble, ImpreciseQMatrix};
use serde::Serialize;
use thiserror::Error;

use crate::config::{Method, RunConfig};
use crate::problem::LoadError;

/// Largest grid the `compare` command will run.
pub const MAX_GRID_STEPS: usize = 200_000;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("invalid arguments: {0}")]
    Config(String),
    #[error(transparent)]
    Solve(Error),
    #[error("{error}")]
    Budget {
        error: Error,
        partial: Option<Box<SolveOutput>>,
    },
}

impl CommandError {
    /// 2 for parse and validation problems, 3 for an exhausted error budget, 4 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Load(LoadError::Model(e)) | CommandError::Solve(e) => core_code(e),
            CommandError::Load(_) | CommandError::Config(_) => 2,
            CommandError::Budget { .. } => 3,
        }
    }
}

fn core_code(e: &Error) -> i32 {
    match e {
        Error::InvalidModel(_)
        | Error::InvalidInput(_)
        | Error::InfeasibleModel { .. }
        | Error::UnboundedModel { .. }
        | Error::StepTooCoarse { .. } => 2,
        Error::BudgetExhausted { .. } => 3,
        Error::NotInCone { .. }
        | Error::RankDeficientActiveSet { .. }
        | Error::IllConditionedBasis { .. }
        | Error::SeriesCapExceeded { .. } => 4,
    }
}

fn variant_name(upper: bool) -> &'static str {
    if upper {
        "upper"
    } else {
        "lower"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRow {
    pub t_start: f64,
    pub dt: f64,
    pub epsilon: f64,
    pub step_error: f64,
    pub exact: bool,
    pub method: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveOutput {
    pub command: &'static str,
    pub problem: Option<String>,
    pub method: Method,
    pub variant: &'static str,
    pub horizon: f64,
    pub max_error: f64,
    pub h0: Vec<f64>,
    pub h_t: Vec<f64>,
    /// Certified bound (adaptive, uniform-exp) or reference estimate (uniform-euler).
    pub error_bound: f64,
    pub step_count: usize,
    pub lp_calls: usize,
    pub all_exact: bool,
    pub steps: Vec<StepRow>,
    /// Smallest interior partial-sum coefficient, with `--debug-invariants`.
    pub interior_min: Option<f64>,
}

impl SolveOutput {
    fn from_adaptive(problem: Option<String>, cfg: &RunConfig, h0: &Gamble, r: &SolveReport) -> Self {
        Self {
            command: "solve",
            problem,
            method: Method::Adaptive,
            variant: variant_name(cfg.upper),
            horizon: cfg.horizon,
            max_error: cfg.max_error,
            h0: h0.to_vec(),
            h_t: r.h_t.to_vec(),
            error_bound: r.max_err,
            step_count: r.steps.len(),
            lp_calls: r.lp_calls,
            all_exact: r.all_exact(),
            steps: r
                .steps
                .iter()
                .map(|s| StepRow {
                    t_start: s.t_start,
                    dt: s.dt,
                    epsilon: s.epsilon,
                    step_error: s.step_error,
                    exact: s.exact,
                    method: s.method.as_str(),
                })
                .collect(),
            interior_min: r
                .debug
                .as_ref()
                .map(|d| d.interior_min.iter().copied().fold(f64::INFINITY, f64::min)),
        }
    }

    fn from_grid(problem: Option<String>, cfg: &RunConfig, h0: &Gamble, g: &GridReport, h_t: &Gamble) -> Self {
        Self {
            command: "solve",
            problem,
            method: cfg.method,
            variant: variant_name(cfg.upper),
            horizon: cfg.horizon,
            max_error: cfg.max_error,
            h0: h0.to_vec(),
            h_t: h_t.to_vec(),
            error_bound: g.bound,
            step_count: g.n,
            lp_calls: g.lp_calls,
            all_exact: false,
            steps: Vec::new(),
            interior_min: None,
        }
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        if let Some(p) = &self.problem {
            let _ = writeln!(out, "problem: {p}");
        }
        let _ = writeln!(
            out,
            "method: {} ({} expectation), T = {}, max error = {:e}",
            self.method, self.variant, self.horizon, self.max_error
        );
        let _ = writeln!(out, "h_0: {}", fmt_vec(&self.h0));
        let _ = writeln!(out, "h_T: {}", fmt_vec(&self.h_t));
        let _ = writeln!(out, "error bound: {:.6e}", self.error_bound);
        let _ = writeln!(out, "steps: {}, LP calls: {}", self.step_count, self.lp_calls);
        if !self.steps.is_empty() {
            let _ = writeln!(
                out,
                "{:>5}  {:>22}  {:>22}  {:>12}  {:>12}  {:>5}  method",
                "step", "t_start", "dt", "epsilon", "step error", "exact"
            );
            for (i, s) in self.steps.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{:>5}  {:>22.15}  {:>22.15}  {:>12.3e}  {:>12.3e}  {:>5}  {}",
                    i + 1,
                    s.t_start,
                    s.dt,
                    s.epsilon,
                    s.step_error,
                    s.exact,
                    s.method
                );
            }
        }
        if let Some(v) = self.interior_min {
            let _ = writeln!(out, "smallest interior partial-sum coefficient: {v:.3e}");
        }
        out
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.15}")).collect();
    format!("({})", parts.join(", "))
}

fn solve_options(cfg: &RunConfig, upper: bool) -> SolveOptions {
    SolveOptions {
        variant: if upper { Variant::Upper } else { Variant::Lower },
        dt_min: cfg.dt_min,
        debug_invariants: cfg.debug_invariants,
        ..SolveOptions::default()
    }
}

fn grid_run(model: &ImpreciseQMatrix, h: &Gamble, cfg: &RunConfig, method: Method, n: usize) -> Result<(GridReport, Gamble), Error> {
    let start = if cfg.upper { h.neg() } else { h.clone() };
    let g = match method {
        Method::UniformEuler => solver::solve_uniform_euler(model, &start, cfg.horizon, n)?,
        _ => solver::solve_uniform_exp(model, &start, cfg.horizon, n)?,
    };
    let h_t = if cfg.upper { g.h_t.neg() } else { g.h_t.clone() };
    Ok((g, h_t))
}

fn prepare(model: &ImpreciseQMatrix, cfg: &RunConfig) -> Result<Gamble, CommandError> {
    cfg.validate().map_err(CommandError::Config)?;
    cfg.h.resolve(model.states()).map_err(CommandError::Config)
}

/// Grid size used when `--steps` is absent.
fn default_steps(model: &ImpreciseQMatrix, h: &Gamble, cfg: &RunConfig) -> Result<usize, CommandError> {
    if let Some(n) = cfg.steps {
        return Ok(n);
    }
    if cfg.max_error.is_nan() || cfg.max_error <= 0.0 {
        return Err(CommandError::Config("grid methods need --steps or a positive --max-error".into()));
    }
    let q = model.qset_norm().map_err(CommandError::Solve)?;
    Ok(solver::required_steps_uniform(cfg.horizon, q, h.center_seminorm(), cfg.max_error))
}

pub fn cmd_solve(model: &ImpreciseQMatrix, problem: Option<String>, cfg: &RunConfig) -> Result<SolveOutput, CommandError> {
    let h = prepare(model, cfg)?;
    match cfg.method {
        Method::Adaptive => {
            match solver::solve_adaptive_with(model, &h, cfg.horizon, cfg.max_error, &solve_options(cfg, cfg.upper)) {
                Ok(r) => Ok(SolveOutput::from_adaptive(problem, cfg, &h, &r)),
                Err(Error::BudgetExhausted {
                    time,
                    dt,
                    required,
                    allowed,
                    partial,
                }) => {
                    let partial_out = partial
                        .as_ref()
                        .map(|p| Box::new(SolveOutput::from_adaptive(problem.clone(), cfg, &h, p)));
                    Err(CommandError::Budget {
                        error: Error::BudgetExhausted {
                            time,
                            dt,
                            required,
                            allowed,
                            partial: None,
                        },
                        partial: partial_out,
                    })
                }
                Err(e) => Err(CommandError::Solve(e)),
            }
        }
        method => {
            let mut n = default_steps(model, &h, cfg)?;
            if method == Method::UniformEuler && cfg.steps.is_none() {
                let q = model.qset_norm().map_err(CommandError::Solve)?;
                n = n.max((cfg.horizon * q).ceil() as usize).max(1);
            }
            let (g, h_t) = grid_run(model, &h, cfg, method, n).map_err(CommandError::Solve)?;
            Ok(SolveOutput::from_grid(problem, cfg, &h, &g, &h_t))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub steps: usize,
    pub lp_calls: usize,
    pub error_bound: f64,
    pub h_t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareOutput {
    pub command: &'static str,
    pub problem: Option<String>,
    pub variant: &'static str,
    pub horizon: f64,
    pub max_error: f64,
    pub h0: Vec<f64>,
    pub required_steps_uniform: usize,
    pub adaptive: MethodSummary,
    pub uniform_exp: Option<MethodSummary>,
    pub uniform_euler: Option<MethodSummary>,
    pub diff_adaptive_exp: Option<f64>,
    pub diff_adaptive_euler: Option<f64>,
    pub diff_exp_euler: Option<f64>,
    pub notes: Vec<String>,
}

impl CompareOutput {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        if let Some(p) = &self.problem {
            let _ = writeln!(out, "problem: {p}");
        }
        let _ = writeln!(
            out,
            "{} expectation, T = {}, max error = {:e}, h_0 = {}",
            self.variant,
            self.horizon,
            self.max_error,
            fmt_vec(&self.h0)
        );
        let _ = writeln!(out, "uniform grid steps needed for the same bound: {}", self.required_steps_uniform);
        let _ = writeln!(out, "{:<14} {:>9} {:>10} {:>13}  h_T", "method", "steps", "LP calls", "error bound");
        for s in [Some(&self.adaptive), self.uniform_exp.as_ref(), self.uniform_euler.as_ref()]
            .into_iter()
            .flatten()
        {
            let _ = writeln!(
                out,
                "{:<14} {:>9} {:>10} {:>13.3e}  {}",
                s.method.to_string(),
                s.steps,
                s.lp_calls,
                s.error_bound,
                fmt_vec(&s.h_t)
            );
        }
        for (name, d) in [
            ("adaptive vs uniform-exp", self.diff_adaptive_exp),
            ("adaptive vs uniform-euler", self.diff_adaptive_euler),
            ("uniform-exp vs uniform-euler", self.diff_exp_euler),
        ] {
            if let Some(d) = d {
                let _ = writeln!(out, "max difference {name}: {d:.3e}");
            }
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

pub fn cmd_compare(model: &ImpreciseQMatrix, problem: Option<String>, cfg: &RunConfig) -> Result<CompareOutput, CommandError> {
    let h = prepare(model, cfg)?;
    if cfg.max_error.is_nan() || cfg.max_error <= 0.0 {
        return Err(CommandError::Config(format!("--max-error must be > 0, got {}", cfg.max_error)));
    }
    let adaptive_cfg = RunConfig {
        method: Method::Adaptive,
        ..cfg.clone()
    };
    let a = cmd_solve(model, problem.clone(), &adaptive_cfg)?;
    let q = model.qset_norm().map_err(CommandError::Solve)?;
    let required = solver::required_steps_uniform(cfg.horizon, q, h.center_seminorm(), cfg.max_error);
    let n = cfg.steps.unwrap_or(required);
    let euler_n = n.max((cfg.horizon * q).ceil() as usize).max(1);
    let mut notes = Vec::new();

    let summary = |method, g: &GridReport, h_t: &Gamble| MethodSummary {
        method,
        steps: g.n,
        lp_calls: g.lp_calls,
        error_bound: g.bound,
        h_t: h_t.to_vec(),
    };
    let mut run = |method: Method, n: usize| -> Result<Option<MethodSummary>, CommandError> {
        if n > MAX_GRID_STEPS {
            notes.push(format!("{method} skipped: {n} steps exceed the limit of {MAX_GRID_STEPS}"));
            return Ok(None);
        }
        let (g, h_t) = grid_run(model, &h, cfg, method, n).map_err(CommandError::Solve)?;
        Ok(Some(summary(method, &g, &h_t)))
    };
    let exp = run(Method::UniformExp, n)?;
    let euler = run(Method::UniformEuler, euler_n)?;

    let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    let adaptive = MethodSummary {
        method: Method::Adaptive,
        steps: a.step_count,
        lp_calls: a.lp_calls,
        error_bound: a.error_bound,
        h_t: a.h_t.clone(),
    };
    Ok(CompareOutput {
        command: "compare",
        problem,
        variant: variant_name(cfg.upper),
        horizon: cfg.horizon,
        max_error: cfg.max_error,
        h0: h.to_vec(),
        required_steps_uniform: required,
        diff_adaptive_exp: exp.as_ref().map(|e| diff(&adaptive.h_t, &e.h_t)),
        diff_adaptive_euler: euler.as_ref().map(|e| diff(&adaptive.h_t, &e.h_t)),
        diff_exp_euler: match (&exp, &euler) {
            (Some(x), Some(y)) => Some(diff(&x.h_t, &y.h_t)),
            _ => None,
        },
        adaptive,
        uniform_exp: exp,
        uniform_euler: euler,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfoOutput {
    pub command: &'static str,
    pub problem: Option<String>,
    pub states: usize,
    pub gambles: usize,
    pub augmented_indicators: Vec<usize>,
    pub qset_norm: f64,
    pub imprecision_bound: f64,
    /// Vertex count per row, when small enough to enumerate.
    pub row_vertices: Vec<Option<usize>>,
    pub valid: bool,
}

impl InfoOutput {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        if let Some(p) = &self.problem {
            let _ = writeln!(out, "problem: {p}");
        }
        let _ = writeln!(out, "states: {}", self.states);
        let _ = writeln!(
            out,
            "gambles: {} ({} indicator gambles added)",
            self.gambles,
            self.augmented_indicators.len()
        );
        let _ = writeln!(out, "norm of the rate set: {}", self.qset_norm);
        let _ = writeln!(out, "imprecision bound: {}", self.imprecision_bound);
        let counts: Vec<String> = self
            .row_vertices
            .iter()
            .map(|c| c.map_or("many".to_string(), |c| c.to_string()))
            .collect();
        let _ = writeln!(out, "vertices per row: [{}]", counts.join(", "));
        let _ = writeln!(out, "validation: ok");
        out
    }
}

pub fn cmd_info(model: &ImpreciseQMatrix, problem: Option<String>) -> Result<InfoOutput, CommandError> {
    let metrics = model.metrics().map_err(CommandError::Solve)?;
    Ok(InfoOutput {
        command: "info",
        problem,
        states: model.states(),
        gambles: model.gamble_count(),
        augmented_indicators: model.augmented_indicators().to_vec(),
        qset_norm: metrics.qset_norm,
        imprecision_bound: metrics.imprecision_bound,
        row_vertices: (0..model.states())
            .map(|k| lp::row_vertices(model, k, 20_000).map(|v| v.len()))
            .collect(),
        valid: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsOutput {
    pub command: &'static str,
    pub problem: Option<String>,
    pub state: usize,
    pub horizon: f64,
    pub max_error: f64,
    /// Entry `j`: lower probability of being in `state` at `T` when starting in `j`.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower_error: f64,
    pub upper_error: f64,
    pub lower_steps: usize,
    pub upper_steps: usize,
    pub lower_converged: bool,
    pub upper_converged: bool,
}

impl BoundsOutput {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        if let Some(p) = &self.problem {
            let _ = writeln!(out, "problem: {p}");
        }
        let _ = writeln!(
            out,
            "state {}, T = {}, max error = {:e}",
            self.state, self.horizon, self.max_error
        );
        let _ = writeln!(
            out,
            "lower: {}  (error {:.3e}, {} steps{})",
            fmt_vec(&self.lower),
            self.lower_error,
            self.lower_steps,
            if self.lower_converged { ", converged" } else { "" }
        );
        let _ = writeln!(
            out,
            "upper: {}  (error {:.3e}, {} steps{})",
            fmt_vec(&self.upper),
            self.upper_error,
            self.upper_steps,
            if self.upper_converged { ", converged" } else { "" }
        );
        out
    }
}

pub fn cmd_bounds(
    model: &ImpreciseQMatrix,
    problem: Option<String>,
    state: usize,
    cfg: &RunConfig,
) -> Result<BoundsOutput, CommandError> {
    cfg.validate().map_err(CommandError::Config)?;
    if state >= model.states() {
        return Err(CommandError::Config(format!(
            "state {state} out of range 0..{}",
            model.states()
        )));
    }
    let b = solver::transition_bounds(model, state, cfg.horizon, cfg.max_error, &solve_options(cfg, false))
        .map_err(|e| match e {
            Error::BudgetExhausted { .. } => CommandError::Budget { error: e, partial: None },
            e => CommandError::Solve(e),
        })?;
    Ok(BoundsOutput {
        command: "bounds",
        problem,
        state,
        horizon: cfg.horizon,
        max_error: cfg.max_error,
        lower: b.lower,
        upper: b.upper,
        lower_error: b.lower_report.max_err,
        upper_error: b.upper_report.max_err,
        lower_steps: b.lower_report.steps.len(),
        upper_steps: b.upper_report.steps.len(),
        lower_converged: b.lower_converged,
        upper_converged: b.upper_converged,
    })
}

/// Any command result.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Output {
    Solve(SolveOutput),
    Compare(CompareOutput),
    Info(InfoOutput),
    Bounds(BoundsOutput),
}

impl Output {
    pub fn render_text(&self) -> String {
        match self {
            Output::Solve(o) => o.render_text(),
            Output::Compare(o) => o.render_text(),
            Output::Info(o) => o.render_text(),
            Output::Bounds(o) => o.render_text(),
        }
    }

    pub fn render_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("outputs serialise")
    }
}

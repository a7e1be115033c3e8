//! Solvers for `dh/dt = lowQ h`: the adaptive cone-stepping method with a certified
//! error budget, uniform-grid baselines, and transition-probability bounds.

use std::time::{Duration, Instant};

use log::{debug, info, warn};
use nalgebra::DMatrix;

use crate::cones::{self, ConeFamily, ConeOptions};
use crate::error::{Error, Result};
use crate::expstep::{self, PartialSumTrace, StepCertificate, StepMethod};
use crate::lp::{self, LowerApplication};
use crate::model::{Gamble, ImpreciseQMatrix};
use crate::tol;

/// Whether to compute the lower (`lowT_t h`) or upper (`upT_t h`) expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    #[default]
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub variant: Variant,
    /// Smallest trial interval; defaults to `max(1e-9, remaining·1e-6)`.
    pub dt_min: Option<f64>,
    /// Sample partial sums inside every accepted cone step.
    pub debug_invariants: bool,
    /// Break ties between minimising vertices by `lowQ h`.
    pub lex_refine: bool,
    /// Certify a step with the worst-case bound when it beats the cone bound.
    pub grid_fallback: bool,
    pub cones: ConeOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            variant: Variant::Lower,
            dt_min: None,
            debug_invariants: false,
            lex_refine: true,
            grid_fallback: true,
            cones: ConeOptions::default(),
        }
    }
}

/// Results of the interior partial-sum checks.
#[derive(Debug, Clone, PartialEq)]
pub struct DebugReport {
    /// Smallest non-constant coefficient seen at interior times, per checked step.
    pub interior_min: Vec<f64>,
}

/// Outcome of [`solve_adaptive`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub h_t: Gamble,
    /// Certified bound on `‖h_t − exact‖`; the sum of the step errors.
    pub max_err: f64,
    pub steps: Vec<StepCertificate>,
    /// Row minimisations performed.
    pub lp_calls: usize,
    pub variant: Variant,
    pub debug: Option<DebugReport>,
    pub elapsed: Duration,
}

impl SolveReport {
    pub fn all_exact(&self) -> bool {
        self.steps.iter().all(|s| s.exact)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridVariant {
    Exp,
    Euler,
}

impl GridVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            GridVariant::Exp => "uniform-exp",
            GridVariant::Euler => "uniform-euler",
        }
    }
}

/// Outcome of a uniform-grid solve.
#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    pub h_t: Gamble,
    pub n: usize,
    /// Error bound for the exponential grid; the reference estimate for Euler.
    pub bound: f64,
    pub variant: GridVariant,
    pub lp_calls: usize,
    pub elapsed: Duration,
}

pub fn solve_adaptive(
    problem: &ImpreciseQMatrix,
    h: &Gamble,
    horizon: f64,
    max_error: f64,
) -> Result<SolveReport> {
    solve_adaptive_with(problem, h, horizon, max_error, &SolveOptions::default())
}

/// Adaptive solve. The upper variant runs the lower solver on `-h` and negates.
pub fn solve_adaptive_with(
    problem: &ImpreciseQMatrix,
    h: &Gamble,
    horizon: f64,
    max_error: f64,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    check_gamble(problem, h)?;
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidInput(format!("time horizon {horizon} must be finite and >= 0")));
    }
    if max_error.is_nan() || max_error <= 0.0 {
        return Err(Error::InvalidInput(format!("maximal error {max_error} must be > 0")));
    }
    let start = match opts.variant {
        Variant::Lower => h.clone(),
        Variant::Upper => h.neg(),
    };
    let flip = |mut r: SolveReport| {
        if opts.variant == Variant::Upper {
            r.h_t = r.h_t.neg();
        }
        r.variant = opts.variant;
        r
    };
    match Adaptive::new(problem, opts, horizon, max_error)?.run(start) {
        Ok(r) => Ok(flip(r)),
        Err(Error::BudgetExhausted {
            time,
            dt,
            required,
            allowed,
            partial,
        }) => Err(Error::BudgetExhausted {
            time,
            dt,
            required,
            allowed,
            partial: partial.map(|p| Box::new(flip(*p))),
        }),
        Err(e) => Err(e),
    }
}

struct Adaptive<'a> {
    problem: &'a ImpreciseQMatrix,
    opts: &'a SolveOptions,
    horizon: f64,
    max_error: f64,
    qset_norm: f64,
    iota: f64,
}

/// A row minimisation together with the cone data needed to certify steps.
struct Linearisation {
    app: LowerApplication,
    family: Option<ConeFamily>,
    qjs: Vec<Option<DMatrix<f64>>>,
}

impl<'a> Adaptive<'a> {
    fn new(
        problem: &'a ImpreciseQMatrix,
        opts: &'a SolveOptions,
        horizon: f64,
        max_error: f64,
    ) -> Result<Self> {
        let qset_norm = problem.qset_norm()?;
        Ok(Self {
            problem,
            opts,
            horizon,
            max_error,
            qset_norm,
            iota: 2.0 * qset_norm,
        })
    }

    fn linearise(&self, h: &Gamble, lp_calls: &mut usize) -> Result<Linearisation> {
        let m = self.problem.states();
        let mut app = lp::lower_operator_apply(self.problem, h)?;
        *lp_calls += m;
        if self.opts.lex_refine {
            let g = app.value.clone();
            app = lp::lower_operator_apply_lex(self.problem, &[h, &g])?;
            *lp_calls += m;
        }
        let family = match cones::build_family(self.problem, &app, h, self.opts.cones) {
            Ok(f) => Some(f),
            Err(e) => {
                warn!("cone construction failed ({e}); certifying with the worst-case bound");
                None
            }
        };
        let qjs = family.as_ref().map_or_else(Vec::new, |f| {
            f.bases
                .iter()
                .map(|b| cones::change_of_basis(&app.q, b).ok())
                .collect()
        });
        Ok(Linearisation { app, family, qjs })
    }

    fn guess(&self, lin: &Linearisation, remaining: f64, dt_min: f64) -> f64 {
        let Some(family) = &lin.family else {
            return remaining;
        };
        let mut dt = remaining;
        for row in &family.rows {
            if row.whole_space {
                continue;
            }
            let best = row
                .candidates()
                .filter_map(|b| {
                    lin.qjs[b]
                        .as_ref()
                        .map(|qj| expstep::initial_interval_guess(&family.bases[b], qj, remaining, dt_min))
                })
                .fold(0.0, f64::max);
            dt = dt.min(best);
        }
        dt.max(dt_min).min(remaining)
    }

    fn traces(&self, lin: &Linearisation, dt: f64) -> Vec<Option<PartialSumTrace>> {
        let Some(family) = &lin.family else {
            return Vec::new();
        };
        family
            .bases
            .iter()
            .zip(&lin.qjs)
            .map(|(b, qj)| {
                qj.as_ref()
                    .and_then(|qj| expstep::partial_sum_trace(b, qj, dt).ok())
            })
            .collect()
    }

    fn certify(&self, lin: &Linearisation, dt: f64, remaining: f64, budget: f64, h_c: f64) -> Trial {
        let traces = self.traces(lin, dt);
        let epsilon = lin
            .family
            .as_ref()
            .map_or(f64::INFINITY, |f| expstep::estimate_epsilon(f, &traces));
        let cone_err = expstep::step_error_bound(epsilon, dt, self.qset_norm, self.iota);
        let grid_err = if self.opts.grid_fallback {
            expstep::worst_case_step_error(dt, self.qset_norm, h_c)
        } else {
            f64::INFINITY
        };
        let (error, method) = if cone_err <= grid_err {
            (cone_err, StepMethod::Cone)
        } else {
            (grid_err, StepMethod::Grid)
        };
        Trial {
            epsilon,
            error,
            allowed: budget * dt / remaining,
            method,
            traces,
        }
    }

    fn run(&self, h0: Gamble) -> Result<SolveReport> {
        let clock = Instant::now();
        let mut h = h0;
        let mut steps: Vec<StepCertificate> = Vec::new();
        let mut lp_calls = self.problem.states();
        let mut t = 0.0;
        let mut err_total = 0.0;
        let mut debug = self.opts.debug_invariants.then(|| DebugReport {
            interior_min: Vec::new(),
        });

        let report = |h: &Gamble, steps: &[StepCertificate], err: f64, calls, debug: &Option<DebugReport>| {
            SolveReport {
                h_t: h.clone(),
                max_err: err,
                steps: steps.to_vec(),
                lp_calls: calls,
                variant: Variant::Lower,
                debug: debug.clone(),
                elapsed: clock.elapsed(),
            }
        };

        while self.horizon - t > 0.0 {
            let remaining = self.horizon - t;
            let budget = self.max_error - err_total;
            let dt_min = self
                .opts
                .dt_min
                .unwrap_or_else(|| (remaining * 1e-6).max(1e-9))
                .min(remaining);
            let lin = self.linearise(&h, &mut lp_calls)?;
            let h_c = h.center_seminorm();
            let guess = self.guess(&lin, remaining, dt_min);
            let mut dt = guess;
            let mut trial = loop {
                if remaining - dt <= 1e-12 * self.horizon {
                    dt = remaining;
                }
                let trial = self.certify(&lin, dt, remaining, budget, h_c);
                if trial.error <= trial.allowed {
                    break trial;
                }
                if dt <= dt_min {
                    let partial = report(&h, &steps, err_total, lp_calls, &debug);
                    return Err(Error::BudgetExhausted {
                        time: t,
                        dt,
                        required: trial.error,
                        allowed: trial.allowed,
                        partial: Some(Box::new(partial)),
                    });
                }
                debug!("t = {t}: dt = {dt:e} needs {:e} > {:e}, halving", trial.error, trial.allowed);
                dt = (dt / 2.0).max(dt_min);
            };
            // a minimal first try that turned out exact is widened while it stays exact
            if guess <= dt_min && trial.exact() {
                while dt < remaining {
                    let mut next = (2.0 * dt).min(remaining);
                    if remaining - next <= 1e-12 * self.horizon {
                        next = remaining;
                    }
                    let wider = self.certify(&lin, next, remaining, budget, h_c);
                    if !(wider.exact() && wider.error <= wider.allowed) {
                        break;
                    }
                    dt = next;
                    trial = wider;
                }
            }
            let Trial {
                epsilon,
                error: step_error,
                method,
                traces,
                ..
            } = trial;

            if let (Some(dbg), Some(family)) = (debug.as_mut(), lin.family.as_ref()) {
                if method == StepMethod::Cone {
                    dbg.interior_min.push(interior_check(family, &lin.qjs, &traces, dt));
                }
            }

            let exact = method == StepMethod::Cone && epsilon <= tol::CONE;
            debug!(
                "step {}: t = {t}, dt = {dt}, eps = {epsilon:e}, err = {step_error:e}, {}",
                steps.len() + 1,
                method.as_str()
            );
            h = expstep::exp_apply(&lin.app.q, dt, &h);
            steps.push(StepCertificate {
                t_start: t,
                dt,
                q: lin.app.q,
                epsilon,
                step_error,
                exact,
                method,
            });
            err_total += step_error;
            t = if dt == remaining { self.horizon } else { t + dt };
        }
        info!(
            "solved to t = {} in {} steps, certified error {:e}",
            self.horizon,
            steps.len(),
            err_total
        );
        Ok(report(&h, &steps, err_total, lp_calls, &debug))
    }
}

struct Trial {
    epsilon: f64,
    error: f64,
    allowed: f64,
    method: StepMethod,
    traces: Vec<Option<PartialSumTrace>>,
}

impl Trial {
    fn exact(&self) -> bool {
        self.method == StepMethod::Cone && self.epsilon <= tol::CONE
    }
}

/// Smallest interior partial-sum coefficient over each row's best basis.
fn interior_check(
    family: &ConeFamily,
    qjs: &[Option<DMatrix<f64>>],
    traces: &[Option<PartialSumTrace>],
    dt: f64,
) -> f64 {
    let mut lowest = f64::INFINITY;
    for row in family.rows.iter().filter(|r| !r.whole_space) {
        let best = row
            .candidates()
            .filter(|&b| traces[b].is_some())
            .min_by(|&a, &b| {
                let ea = traces[a].as_ref().map(|t| t.epsilon).unwrap_or(f64::INFINITY);
                let eb = traces[b].as_ref().map(|t| t.epsilon).unwrap_or(f64::INFINITY);
                ea.total_cmp(&eb)
            });
        if let (Some(b), Some(_)) = (best, best.and_then(|b| qjs[b].as_ref())) {
            let qj = qjs[b].as_ref().expect("checked");
            let s_max = traces[b].as_ref().map_or(0, |t| t.alphas.len() - 1);
            let v = expstep::interior_min_coefficient(&family.bases[b], qj, dt, s_max, 20);
            lowest = lowest.min(v);
        }
    }
    lowest
}

fn check_gamble(problem: &ImpreciseQMatrix, h: &Gamble) -> Result<()> {
    if h.len() != problem.states() {
        return Err(Error::InvalidInput(format!(
            "gamble has {} entries, model has {} states",
            h.len(),
            problem.states()
        )));
    }
    Ok(())
}

/// `2n‖h‖_c (1 − e^{x}(1 − x))` with `x = (T/n)‖𝒬‖`.
pub fn uniform_grid_bound(horizon: f64, n: usize, qset_norm: f64, h_c: f64) -> f64 {
    n as f64 * expstep::worst_case_step_error(horizon / n as f64, qset_norm, h_c)
}

/// Smallest `n` whose uniform-grid bound is at most `max_error`.
pub fn required_steps_uniform(horizon: f64, qset_norm: f64, h_c: f64, max_error: f64) -> usize {
    let ok = |n: usize| uniform_grid_bound(horizon, n, qset_norm, h_c) <= max_error;
    if ok(1) {
        return 1;
    }
    let mut hi = 2usize;
    while !ok(hi) {
        hi *= 2;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `n` equal exponential steps, re-minimising at each grid point.
pub fn solve_uniform_exp(
    problem: &ImpreciseQMatrix,
    h: &Gamble,
    horizon: f64,
    n: usize,
) -> Result<GridReport> {
    grid(problem, h, horizon, n, GridVariant::Exp)
}

/// `n` equal Euler steps `h ← h + δ lowQ h`. Requires `n >= T‖𝒬‖`.
pub fn solve_uniform_euler(
    problem: &ImpreciseQMatrix,
    h: &Gamble,
    horizon: f64,
    n: usize,
) -> Result<GridReport> {
    grid(problem, h, horizon, n, GridVariant::Euler)
}

fn grid(
    problem: &ImpreciseQMatrix,
    h: &Gamble,
    horizon: f64,
    n: usize,
    variant: GridVariant,
) -> Result<GridReport> {
    check_gamble(problem, h)?;
    if n == 0 {
        return Err(Error::InvalidInput("grid needs at least one step".into()));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidInput(format!("time horizon {horizon} must be finite and >= 0")));
    }
    let clock = Instant::now();
    let m = problem.states();
    let qset_norm = problem.qset_norm()?;
    let h_c = h.center_seminorm();
    let delta = horizon / n as f64;
    let bound = match variant {
        GridVariant::Exp => uniform_grid_bound(horizon, n, qset_norm, h_c),
        GridVariant::Euler => {
            let required = (horizon * qset_norm).ceil() as usize;
            if n < required {
                return Err(Error::StepTooCoarse { steps: n, required });
            }
            n as f64 * delta * delta * h_c * qset_norm * qset_norm
        }
    };
    let mut cur = h.clone();
    for _ in 0..n {
        let app = lp::lower_operator_apply(problem, &cur)?;
        cur = match variant {
            GridVariant::Exp => expstep::exp_apply(&app.q, delta, &cur),
            GridVariant::Euler => cur.add(&app.value.scale(delta)),
        };
    }
    Ok(GridReport {
        h_t: cur,
        n,
        bound,
        variant,
        lp_calls: m * (n + 1),
        elapsed: clock.elapsed(),
    })
}

/// Lower and upper probabilities of being in state `i` at time `T`, per start state.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBounds {
    pub state: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower_report: SolveReport,
    pub upper_report: SolveReport,
    /// `‖h_T‖_v < 2E`: the start state no longer matters.
    pub lower_converged: bool,
    pub upper_converged: bool,
}

pub fn transition_bounds(
    problem: &ImpreciseQMatrix,
    state: usize,
    horizon: f64,
    max_error: f64,
    opts: &SolveOptions,
) -> Result<TransitionBounds> {
    let m = problem.states();
    if state >= m {
        return Err(Error::InvalidInput(format!("state {state} out of range 0..{m}")));
    }
    let ind = Gamble::indicator(m, state);
    let lower_opts = SolveOptions {
        variant: Variant::Lower,
        ..*opts
    };
    let upper_opts = SolveOptions {
        variant: Variant::Upper,
        ..*opts
    };
    let lower_report = solve_adaptive_with(problem, &ind, horizon, max_error, &lower_opts)?;
    let upper_report = solve_adaptive_with(problem, &ind, horizon, max_error, &upper_opts)?;
    Ok(TransitionBounds {
        state,
        lower: lower_report.h_t.to_vec(),
        upper: upper_report.h_t.to_vec(),
        lower_converged: lower_report.h_t.variational_seminorm() < 2.0 * max_error,
        upper_converged: upper_report.h_t.variational_seminorm() < 2.0 * max_error,
        lower_report,
        upper_report,
    })
}

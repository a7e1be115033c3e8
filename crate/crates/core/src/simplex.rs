//! Dense two-phase simplex with Bland's rule.
//!
//! Solves `min c·x` subject to `a_i·x >= b_i` or `a_i·x = b_i`, `x >= 0`. Several
//! objectives may be given; each later objective is optimised over the optimal face of
//! the earlier ones. Pivoting is fully deterministic: the entering column is the lowest
//! index with a negative reduced cost and ratio-test ties go to the lowest basic index.

use nalgebra::{DMatrix, DVector};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Relation {
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub(crate) struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub(crate) enum Outcome {
    Optimal { x: Vec<f64>, pivots: usize },
    Infeasible { residual: f64 },
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    // original row index for each tableau row (rows may be dropped as redundant)
    origin: Vec<usize>,
    ncols: usize,
    pivots: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.ncols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        d.push(0.0);
        for (i, row) in self.rows.iter().enumerate() {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for (dj, a) in d.iter_mut().zip(row) {
                    *dj -= cb * a;
                }
            }
        }
        d
    }

    /// Runs Bland's rule on `cost` over columns flagged in `allowed`.
    /// Returns `false` if the objective is unbounded below.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> bool {
        loop {
            if self.pivots > MAX_PIVOTS {
                // Bland's rule terminates; this only guards against NaN input.
                return true;
            }
            let d = self.reduced_costs(cost);
            let entering = (0..self.ncols).find(|&j| allowed[j] && d[j] < -COST_TOL);
            let Some(c) = entering else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i).max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                            if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, c),
                None => return false,
            }
        }
    }
}

/// Normalises a constraint row so its largest coefficient has magnitude one.
fn normalized(con: &Constraint) -> (Vec<f64>, f64) {
    let scale = con.coeffs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale > 0.0 {
        (con.coeffs.iter().map(|v| v / scale).collect(), con.rhs / scale)
    } else {
        (con.coeffs.clone(), con.rhs)
    }
}

pub(crate) fn solve(n: usize, constraints: &[Constraint], objectives: &[Vec<f64>]) -> Outcome {
    let nrows = constraints.len();
    let nslack = constraints
        .iter()
        .filter(|c| c.relation == Relation::Ge)
        .count();

    // column layout: [structural | slack | artificial]
    let mut slack_col = vec![None; nrows];
    let mut next = n;
    for (i, c) in constraints.iter().enumerate() {
        if c.relation == Relation::Ge {
            slack_col[i] = Some(next);
            next += 1;
        }
    }
    debug_assert_eq!(next, n + nslack);

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(nrows);
    let mut needs_art = vec![false; nrows];
    let mut basis = vec![usize::MAX; nrows];
    for (i, c) in constraints.iter().enumerate() {
        let (mut a, mut b) = normalized(c);
        let mut slack = if c.relation == Relation::Ge { -1.0 } else { 0.0 };
        if b < 0.0 {
            a.iter_mut().for_each(|v| *v = -*v);
            b = -b;
            slack = -slack;
        }
        let mut row = a;
        row.resize(n + nslack, 0.0);
        if let Some(s) = slack_col[i] {
            row[s] = slack;
            if slack > 0.0 {
                basis[i] = s;
            }
        }
        if basis[i] == usize::MAX {
            needs_art[i] = true;
        }
        row.push(b);
        rows.push(row);
    }
    let nart = needs_art.iter().filter(|&&a| a).count();
    let ncols = n + nslack + nart;
    let mut art = n + nslack;
    for (i, row) in rows.iter_mut().enumerate() {
        let b = row.pop().unwrap();
        row.resize(ncols, 0.0);
        if needs_art[i] {
            row[art] = 1.0;
            basis[i] = art;
            art += 1;
        }
        row.push(b);
    }

    let mut tab = Tableau {
        rows,
        basis,
        origin: (0..nrows).collect(),
        ncols,
        pivots: 0,
    };

    let is_art = |j: usize| j >= n + nslack;
    if nart > 0 {
        let cost: Vec<f64> = (0..ncols).map(|j| if is_art(j) { 1.0 } else { 0.0 }).collect();
        tab.optimize(&cost, &vec![true; ncols]);
        let residual: f64 = (0..tab.rows.len())
            .filter(|&i| is_art(tab.basis[i]))
            .map(|i| tab.rhs(i).max(0.0))
            .sum();
        if residual > FEAS_TOL {
            return Outcome::Infeasible { residual };
        }
        // drive zero-level artificials out of the basis, dropping redundant rows
        let mut i = 0;
        while i < tab.rows.len() {
            if is_art(tab.basis[i]) {
                let col = (0..n + nslack).find(|&j| tab.rows[i][j].abs() > PIVOT_TOL);
                match col {
                    Some(c) => {
                        tab.pivot(i, c);
                        i += 1;
                    }
                    None => {
                        tab.rows.remove(i);
                        tab.basis.remove(i);
                        tab.origin.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }

    let mut allowed: Vec<bool> = (0..ncols).map(|j| !is_art(j)).collect();
    for (level, obj) in objectives.iter().enumerate() {
        let scale = obj.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut cost = vec![0.0; ncols];
        if scale > 0.0 {
            for (j, v) in obj.iter().enumerate() {
                cost[j] = v / scale;
            }
        }
        if !tab.optimize(&cost, &allowed) {
            if level == 0 {
                return Outcome::Unbounded;
            }
            break;
        }
        // restrict later objectives to the optimal face
        let d = tab.reduced_costs(&cost);
        for j in 0..ncols {
            if d[j] > COST_TOL && !tab.basis.contains(&j) {
                allowed[j] = false;
            }
        }
    }

    let x = refine_solution(n, nslack, constraints, &slack_col, &tab);
    Outcome::Optimal {
        x,
        pivots: tab.pivots,
    }
}

/// Recomputes the basic solution from the original data by a direct solve, which
/// removes the round-off accumulated in the tableau.
fn refine_solution(
    n: usize,
    nslack: usize,
    constraints: &[Constraint],
    slack_col: &[Option<usize>],
    tab: &Tableau,
) -> Vec<f64> {
    let mut from_tableau = vec![0.0; n + nslack];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n + nslack {
            from_tableau[b] = tab.rhs(i).max(0.0);
        }
    }
    let k = tab.rows.len();
    if k == 0 || tab.basis.iter().any(|&b| b >= n + nslack) {
        return from_tableau[..n].to_vec();
    }
    let bmat = DMatrix::from_fn(k, k, |r, c| {
        let orig = tab.origin[r];
        let col = tab.basis[c];
        if col < n {
            constraints[orig].coeffs[col]
        } else if slack_col[orig] == Some(col) {
            -1.0
        } else {
            0.0
        }
    });
    let rhs = DVector::from_fn(k, |r, _| constraints[tab.origin[r]].rhs);
    match bmat.lu().solve(&rhs) {
        Some(sol) if sol.iter().all(|v| v.is_finite()) => {
            let mut x = vec![0.0; n];
            for (c, &col) in tab.basis.iter().enumerate() {
                if col < n {
                    x[col] = sol[c].max(0.0);
                }
            }
            // keep the refined point only if it is at least as feasible
            let viol = |x: &[f64]| -> f64 {
                constraints
                    .iter()
                    .map(|c| {
                        let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
                        match c.relation {
                            Relation::Ge => (c.rhs - lhs).max(0.0),
                            Relation::Eq => (c.rhs - lhs).abs(),
                        }
                    })
                    .fold(0.0, f64::max)
            };
            if viol(&x) <= viol(&from_tableau[..n]) + 1e-15 {
                x
            } else {
                from_tableau[..n].to_vec()
            }
        }
        _ => from_tableau[..n].to_vec(),
    }
}

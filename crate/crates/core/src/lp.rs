//! Row-wise linear programs defining the lower transition operator, and the auxiliary
//! problem expressing a gamble as a non-negative combination of cone generators.
//!
//! A row polytope is parametrised by its off-diagonal entries `x_l = q_l >= 0`
//! (`l != k`) with the diagonal fixed at `q_k = -Σ x_l`. The row-sum equality then
//! holds exactly, and every vertex of the reduced problem is a vertex of the row
//! polytope.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{Gamble, ImpreciseQMatrix, QMatrix};
use crate::simplex::{self, Constraint, Outcome, Relation};
use crate::tol;

/// Minimiser of `q·h` over one row polytope.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    /// The minimising row `q_k` (a vertex of the row polytope).
    pub vertex: Vec<f64>,
    /// `q_k·h`, i.e. `[lowQ h]_k`.
    pub value: f64,
    /// Gamble indices whose constraint is tight at `vertex`.
    pub active_set: Vec<usize>,
    pub pivots: usize,
}

/// One row's minimisation problem, in reduced (off-diagonal) coordinates.
#[derive(Debug, Clone)]
pub struct RowLpProblem {
    row: usize,
    m: usize,
    constraints: Vec<Constraint>,
}

impl RowLpProblem {
    pub fn new(problem: &ImpreciseQMatrix, k: usize) -> Self {
        let m = problem.states();
        let mut constraints = Vec::new();
        for (i, f) in problem.gambles().iter().enumerate() {
            let bound = problem.lower_bound(i, k);
            if bound == f64::NEG_INFINITY {
                continue;
            }
            let coeffs = reduce(f.as_slice(), k);
            // implied by x >= 0
            if bound <= 0.0 && coeffs.iter().all(|&c| c >= 0.0) {
                continue;
            }
            constraints.push(Constraint {
                coeffs,
                relation: Relation::Ge,
                rhs: bound,
            });
        }
        Self {
            row: k,
            m,
            constraints,
        }
    }

    pub fn row(&self) -> usize {
        self.row
    }

    /// Lexicographically minimises the given objectives; the first is the primary one.
    fn solve(&self, objectives: &[&Gamble]) -> Result<(Vec<f64>, usize)> {
        let n = self.m - 1;
        let costs: Vec<Vec<f64>> = objectives
            .iter()
            .map(|h| reduce(h.as_slice(), self.row))
            .collect();
        match simplex::solve(n, &self.constraints, &costs) {
            Outcome::Optimal { x, pivots } => Ok((expand(&x, self.row, self.m), pivots)),
            Outcome::Infeasible { .. } => Err(Error::InfeasibleModel { row: self.row }),
            Outcome::Unbounded => Err(Error::UnboundedModel { row: self.row }),
        }
    }
}

/// `f ↦ (f_l - f_k)_{l != k}`: the objective/constraint row in reduced coordinates.
fn reduce(f: &[f64], k: usize) -> Vec<f64> {
    f.iter()
        .enumerate()
        .filter(|&(l, _)| l != k)
        .map(|(_, v)| v - f[k])
        .collect()
}

fn expand(x: &[f64], k: usize, m: usize) -> Vec<f64> {
    let mut q = Vec::with_capacity(m);
    let mut it = x.iter();
    for l in 0..m {
        if l == k {
            q.push(0.0);
        } else {
            q.push(*it.next().unwrap());
        }
    }
    q[k] = -x.iter().sum::<f64>();
    q
}

/// Indices `i` with `q·f_i = L[i,k]` within the active tolerance.
pub(crate) fn tight_constraints(problem: &ImpreciseQMatrix, k: usize, q: &[f64]) -> Vec<usize> {
    problem
        .gambles()
        .iter()
        .enumerate()
        .filter(|&(i, f)| {
            let bound = problem.lower_bound(i, k);
            bound.is_finite() && (f.dot_slice(q) - bound).abs() <= tol::active(bound)
        })
        .map(|(i, _)| i)
        .collect()
}

/// Vertex minimiser of `q·h` over row polytope `k`.
pub fn minimize_row(problem: &ImpreciseQMatrix, k: usize, h: &Gamble) -> Result<LpSolution> {
    minimize_row_lex(problem, k, &[h])
}

/// Vertex minimiser of the first objective; ties on the optimal face are broken by the
/// following objectives in order.
pub fn minimize_row_lex(
    problem: &ImpreciseQMatrix,
    k: usize,
    objectives: &[&Gamble],
) -> Result<LpSolution> {
    let h = objectives
        .first()
        .ok_or_else(|| Error::InvalidInput("at least one objective required".into()))?;
    check_len(problem, h)?;
    let (vertex, pivots) = RowLpProblem::new(problem, k).solve(objectives)?;
    let value = h.dot_slice(&vertex);
    let active_set = tight_constraints(problem, k, &vertex);
    Ok(LpSolution {
        vertex,
        value,
        active_set,
        pivots,
    })
}

fn check_len(problem: &ImpreciseQMatrix, h: &Gamble) -> Result<()> {
    if h.len() != problem.states() {
        return Err(Error::InvalidInput(format!(
            "gamble has {} entries, model has {} states",
            h.len(),
            problem.states()
        )));
    }
    Ok(())
}

/// Result of applying the lower transition operator.
#[derive(Debug, Clone)]
pub struct LowerApplication {
    /// A matrix of `𝒬` attaining the row minima.
    pub q: QMatrix,
    /// `lowQ h`.
    pub value: Gamble,
    pub rows: Vec<LpSolution>,
}

/// `lowQ h`, together with a minimising matrix assembled from the row minimisers.
pub fn lower_operator_apply(problem: &ImpreciseQMatrix, h: &Gamble) -> Result<LowerApplication> {
    lower_operator_apply_lex(problem, &[h])
}

pub(crate) fn lower_operator_apply_lex(
    problem: &ImpreciseQMatrix,
    objectives: &[&Gamble],
) -> Result<LowerApplication> {
    let m = problem.states();
    let rows = (0..m)
        .map(|k| minimize_row_lex(problem, k, objectives))
        .collect::<Result<Vec<_>>>()?;
    let q = DMatrix::from_fn(m, m, |k, l| rows[k].vertex[l]);
    let value = Gamble::new(rows.iter().map(|r| r.value).collect())?;
    Ok(LowerApplication {
        q: QMatrix::from_matrix_unchecked(q),
        value,
        rows,
    })
}

/// `upQ h = -lowQ(-h)`, with a maximising matrix.
pub fn upper_operator_apply(problem: &ImpreciseQMatrix, h: &Gamble) -> Result<LowerApplication> {
    let mut res = lower_operator_apply(problem, &h.neg())?;
    res.value = res.value.neg();
    for r in &mut res.rows {
        r.value = -r.value;
    }
    Ok(res)
}

/// Non-negative coefficients writing `h` in terms of `candidates` plus a signed multiple
/// of the constant gamble.
#[derive(Debug, Clone, PartialEq)]
pub struct Combination {
    /// Coefficient of each candidate, all `>= 0`.
    pub coefficients: Vec<f64>,
    /// Coefficient of the constant gamble (any sign).
    pub constant: f64,
}

impl Combination {
    pub fn reconstruct(&self, candidates: &[Gamble], m: usize) -> Gamble {
        let mut v = Gamble::constant(m, self.constant);
        for (a, f) in self.coefficients.iter().zip(candidates) {
            if *a != 0.0 {
                v = v.add(&f.scale(*a));
            }
        }
        v
    }
}

/// Finds `α >= 0` and a signed `α₀` with `Σ α_i f_i + α₀·1 = h`, minimising `Σ α`.
/// Fails with [`Error::NotInCone`] when `h` is outside the cone.
pub fn nonneg_combination(candidates: &[Gamble], h: &Gamble) -> Result<Combination> {
    let m = h.len();
    if let Some(bad) = candidates.iter().position(|f| f.len() != m) {
        return Err(Error::InvalidInput(format!(
            "candidate {bad} has length {}, expected {m}",
            candidates[bad].len()
        )));
    }
    let n = candidates.len() + 2;
    let constraints: Vec<Constraint> = (0..m)
        .map(|j| {
            let mut coeffs: Vec<f64> = candidates.iter().map(|f| f[j]).collect();
            coeffs.push(1.0);
            coeffs.push(-1.0);
            Constraint {
                coeffs,
                relation: Relation::Eq,
                rhs: h[j],
            }
        })
        .collect();
    let scale = 1.0 + h.max_norm();
    match simplex::solve(n, &constraints, &[vec![1.0; n]]) {
        Outcome::Optimal { x, .. } => {
            let comb = Combination {
                coefficients: x[..candidates.len()].to_vec(),
                constant: x[n - 2] - x[n - 1],
            };
            let residual = comb.reconstruct(candidates, m).sub(h).max_norm();
            if residual > tol::FEAS * scale {
                return Err(Error::NotInCone { residual });
            }
            Ok(comb)
        }
        Outcome::Infeasible { residual } => Err(Error::NotInCone { residual }),
        Outcome::Unbounded => unreachable!("objective is bounded below by zero"),
    }
}

/// All vertices of row polytope `k`, or `None` when more than `max_subsets` candidate
/// constraint subsets would have to be examined.
pub fn row_vertices(problem: &ImpreciseQMatrix, k: usize, max_subsets: usize) -> Option<Vec<Vec<f64>>> {
    let m = problem.states();
    let n = m - 1;
    if n == 0 {
        return Some(vec![vec![0.0]]);
    }
    let mut rows: Vec<(Vec<f64>, f64)> = RowLpProblem::new(problem, k)
        .constraints
        .into_iter()
        .map(|c| (c.coeffs, c.rhs))
        .collect();
    for l in 0..n {
        let mut e = vec![0.0; n];
        e[l] = 1.0;
        rows.push((e, 0.0));
    }
    let count = binomial(rows.len(), n)?;
    if count > max_subsets {
        return None;
    }
    let feasible = |x: &[f64]| {
        rows.iter().all(|(a, b)| {
            let v: f64 = a.iter().zip(x).map(|(p, q)| p * q).sum();
            v >= b - tol::FEAS * (1.0 + b.abs())
        })
    };
    let mut found: Vec<Vec<f64>> = Vec::new();
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let a = DMatrix::from_fn(n, n, |r, c| rows[idx[r]].0[c]);
        let b = nalgebra::DVector::from_fn(n, |r, _| rows[idx[r]].1);
        if let Some(x) = a.lu().solve(&b) {
            let x: Vec<f64> = x.iter().copied().collect();
            if x.iter().all(|v| v.is_finite())
                && feasible(&x)
                && !found.iter().any(|v| v.iter().zip(&x).all(|(p, q)| (p - q).abs() <= 1e-9))
            {
                found.push(x);
            }
        }
        // next subset in lexicographic order
        let mut i = n;
        loop {
            if i == 0 {
                return Some(found.iter().map(|x| expand(x, k, m)).collect());
            }
            i -= 1;
            if idx[i] != i + rows.len() - n {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn binomial(n: usize, r: usize) -> Option<usize> {
    if r > n {
        return Some(0);
    }
    let mut acc: usize = 1;
    for i in 0..r {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;

    #[test]
    fn example1_upper_minimiser_row() {
        // the matrix printed with the first example minimises q·(-h)
        let model = fixtures::example1();
        let h = Gamble::new(vec![0.7, -1.7, 1.0]).unwrap();
        let sol = minimize_row(&model, 0, &h).unwrap();
        let expected = [-0.56, 0.46, 0.1];
        for (a, b) in sol.vertex.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        assert_eq!(sol.active_set, vec![1, 2]);
    }

    #[test]
    fn example1_lower_minimiser_is_active_on_f4_f5() {
        let model = fixtures::example1();
        let h = fixtures::example1_h();
        for k in 0..3 {
            let sol = minimize_row(&model, k, &h).unwrap();
            assert_eq!(sol.active_set, vec![3, 4], "row {k}");
        }
    }

    #[test]
    fn example1_full_matrix() {
        let model = fixtures::example1();
        let app = upper_operator_apply(&model, &fixtures::example1_h()).unwrap();
        let expected = [
            [-0.56, 0.46, 0.1],
            [0.606666666666667, -0.806666666666667, 0.2],
            [0.146666666666667, 0.36, -0.506666666666667],
        ];
        for k in 0..3 {
            for l in 0..3 {
                assert_abs_diff_eq!(app.q.as_matrix()[(k, l)], expected[k][l], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn singleton_rows_are_returned() {
        let q = QMatrix::from_rows(&[vec![-1.0, 0.25, 0.75], vec![0.5, -0.5, 0.0], vec![1.0, 2.0, -3.0]])
            .unwrap();
        let model = ImpreciseQMatrix::singleton(&q).unwrap();
        let h = Gamble::new(vec![0.3, -2.0, 1.1]).unwrap();
        for k in 0..3 {
            let sol = minimize_row(&model, k, &h).unwrap();
            for (a, b) in sol.vertex.iter().zip(q.row(k)) {
                assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn constant_objective_has_zero_value() {
        let model = fixtures::example1();
        for k in 0..3 {
            let sol = minimize_row(&model, k, &Gamble::constant(3, 2.5)).unwrap();
            assert_abs_diff_eq!(sol.value, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn conjugacy() {
        let model = fixtures::example1();
        let h = Gamble::new(vec![0.2, -0.4, 1.3]).unwrap();
        let up = upper_operator_apply(&model, &h).unwrap().value;
        let low = lower_operator_apply(&model, &h.neg()).unwrap().value;
        assert_eq!(up, low.neg());
    }

    #[test]
    fn combination_of_example1_generators() {
        let model = fixtures::example1();
        let cands = vec![model.gamble(3).clone(), model.gamble(4).clone()];
        let c = nonneg_combination(&cands, &fixtures::example1_h()).unwrap();
        assert_abs_diff_eq!(c.coefficients[0], 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(c.coefficients[1], 1.6, epsilon = 1e-12);
        assert_abs_diff_eq!(c.constant, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn combination_trivial_cases() {
        let model = fixtures::example1();
        let cands: Vec<Gamble> = model.gambles()[..6].to_vec();
        let c = nonneg_combination(&cands, &cands[0]).unwrap();
        assert_abs_diff_eq!(c.coefficients[0], 1.0, epsilon = 1e-12);
        assert!(c.coefficients[1..].iter().all(|v| v.abs() < 1e-12));
        let c = nonneg_combination(&cands, &Gamble::constant(3, 1.0)).unwrap();
        assert_abs_diff_eq!(c.constant, 1.0, epsilon = 1e-12);
        assert!(c.coefficients.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn combination_outside_cone_fails() {
        let cands = vec![Gamble::new(vec![1.0, 0.0]).unwrap()];
        let err = nonneg_combination(&cands, &Gamble::new(vec![-1.0, 0.0]).unwrap());
        assert!(matches!(err, Err(Error::NotInCone { .. })));
    }

    #[test]
    fn vertex_enumeration() {
        let (lo, up) = fixtures::example2_bounds();
        let model = ImpreciseQMatrix::from_intervals(&lo, &up).unwrap();
        // a box of three off-diagonal rates has eight corners
        let v = row_vertices(&model, 0, 10_000).unwrap();
        assert_eq!(v.len(), 8);
        for q in &v {
            assert!(q.iter().sum::<f64>().abs() < 1e-12);
        }
        assert!(row_vertices(&model, 0, 3).is_none());
        let single = ImpreciseQMatrix::singleton(&model_q()).unwrap();
        assert_eq!(row_vertices(&single, 1, 10_000).unwrap().len(), 1);
    }

    fn model_q() -> QMatrix {
        QMatrix::from_rows(&[vec![-1.0, 1.0], vec![2.0, -2.0]]).unwrap()
    }
}

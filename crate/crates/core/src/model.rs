//! Domain types: gambles, Q-matrices and polyhedral imprecise Q-matrices, together with
//! the norms and seminorms used throughout the error analysis.

use std::fmt;
use std::ops::Index;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lp;
use crate::tol;

/// A real-valued reward over the state space.
#[derive(Clone, PartialEq)]
pub struct Gamble(DVector<f64>);

impl Gamble {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("gamble must have at least one state".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "gamble entry {pos} is not finite"
            )));
        }
        Ok(Self(DVector::from_vec(values)))
    }

    pub(crate) fn from_vector(v: DVector<f64>) -> Self {
        Self(v)
    }

    pub fn constant(m: usize, value: f64) -> Self {
        Self(DVector::from_element(m, value))
    }

    pub fn indicator(m: usize, state: usize) -> Self {
        let mut v = DVector::zeros(m);
        v[state] = 1.0;
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.as_slice().to_vec()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn dot(&self, other: &Gamble) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn dot_slice(&self, q: &[f64]) -> f64 {
        self.0.iter().zip(q).map(|(a, b)| a * b).sum()
    }

    pub fn neg(&self) -> Gamble {
        Gamble(-&self.0)
    }

    pub fn scale(&self, lambda: f64) -> Gamble {
        Gamble(&self.0 * lambda)
    }

    pub fn add(&self, other: &Gamble) -> Gamble {
        Gamble(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Gamble) -> Gamble {
        Gamble(&self.0 - &other.0)
    }

    pub fn max(&self) -> f64 {
        self.0.max()
    }

    pub fn min(&self) -> f64 {
        self.0.min()
    }

    /// Maximum norm `max_i |f_i|`.
    pub fn max_norm(&self) -> f64 {
        max_norm(self)
    }

    pub fn variational_seminorm(&self) -> f64 {
        variational_seminorm(self)
    }

    pub fn center_seminorm(&self) -> f64 {
        center_seminorm(self)
    }

    /// True when all entries coincide within `tol`.
    pub fn is_constant(&self, tol: f64) -> bool {
        self.variational_seminorm() <= tol
    }
}

impl Index<usize> for Gamble {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Debug for Gamble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Gamble").field(&self.as_slice()).finish()
    }
}

/// A transition-rate matrix: zero row sums, non-negative off-diagonal entries.
#[derive(Clone, PartialEq)]
pub struct QMatrix(DMatrix<f64>);

impl QMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "Q-matrix must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("Q-matrix entries must be finite".into()));
        }
        let m = entries.nrows();
        for k in 0..m {
            let row = entries.row(k);
            let sum: f64 = row.iter().sum();
            if sum.abs() > tol::ROW {
                return Err(Error::InvalidInput(format!(
                    "row {k} of Q-matrix sums to {sum:e}"
                )));
            }
            for l in 0..m {
                if l != k && row[l] < -tol::ROW {
                    return Err(Error::InvalidInput(format!(
                        "off-diagonal entry ({k},{l}) = {} is negative",
                        row[l]
                    )));
                }
            }
        }
        Ok(Self(entries))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidInput("Q-matrix rows have inconsistent length".into()));
        }
        Self::new(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
    }

    /// Assembles a matrix from rows that are already known to be valid rate rows.
    pub(crate) fn from_matrix_unchecked(entries: DMatrix<f64>) -> Self {
        Self(entries)
    }

    pub fn zeros(m: usize) -> Self {
        Self(DMatrix::zeros(m, m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn row(&self, k: usize) -> Vec<f64> {
        self.0.row(k).iter().copied().collect()
    }

    pub fn apply(&self, f: &Gamble) -> Gamble {
        Gamble(&self.0 * f.as_vector())
    }

    pub fn operator_norm(&self) -> f64 {
        operator_norm(self)
    }
}

impl fmt::Debug for QMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<Vec<f64>> = (0..self.dim()).map(|k| self.row(k)).collect();
        f.debug_tuple("QMatrix").field(&rows).finish()
    }
}

/// Maximum norm of a gamble.
pub fn max_norm(f: &Gamble) -> f64 {
    f.0.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Induced operator norm: largest absolute row sum.
pub fn operator_norm(q: &QMatrix) -> f64 {
    matrix_inf_norm(&q.0)
}

pub(crate) fn matrix_inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `max f - min f`.
pub fn variational_seminorm(f: &Gamble) -> f64 {
    f.max() - f.min()
}

/// Half the variational seminorm: the max-norm distance to the nearest constant.
pub fn center_seminorm(f: &Gamble) -> f64 {
    0.5 * variational_seminorm(f)
}

/// Size metrics of an imprecise Q-matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Largest operator norm over the set.
    pub qset_norm: f64,
    /// Upper bound on the imprecision (diameter in operator norm).
    pub imprecision_bound: f64,
}

/// A convex polyhedral set of Q-matrices with separately specified rows.
///
/// Row `k` is the polytope `{q : q·1 = 0, q·f_i >= L[i,k] for all i}`. Entries of `L`
/// equal to `-inf` impose no constraint. Indicator gambles of every state are always
/// present among the `f_i`; the constant gamble never is.
#[derive(Clone, PartialEq)]
pub struct ImpreciseQMatrix {
    m: usize,
    gambles: Vec<Gamble>,
    lower: DMatrix<f64>,
    augmented: Vec<usize>,
}

impl ImpreciseQMatrix {
    /// Builds and validates a model from gambles (rows of `F`) and lower rates
    /// (`lower[i][k]` bounds `q_k·f_i`).
    ///
    /// Missing indicator gambles are appended (bound 0 off the diagonal, none on it) and
    /// existing off-diagonal indicator bounds are raised to at least 0. Every row polytope
    /// must be non-empty and bounded.
    pub fn new(m: usize, gambles: Vec<Vec<f64>>, lower: Vec<Vec<f64>>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidModel("state count must be at least 1".into()));
        }
        if gambles.len() != lower.len() {
            return Err(Error::InvalidModel(format!(
                "{} gambles but {} rows of lower bounds",
                gambles.len(),
                lower.len()
            )));
        }
        let mut fs = Vec::with_capacity(gambles.len() + m);
        for (i, g) in gambles.into_iter().enumerate() {
            if g.len() != m {
                return Err(Error::InvalidModel(format!(
                    "gamble {i} has length {}, expected {m}",
                    g.len()
                )));
            }
            let g = Gamble::new(g).map_err(|e| Error::InvalidModel(format!("gamble {i}: {e}")))?;
            if g.is_constant(0.0) {
                return Err(Error::InvalidModel(format!(
                    "gamble {i} is constant; the constant gamble is handled by the row-sum equality"
                )));
            }
            fs.push(g);
        }
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(lower.len() + m);
        for (i, row) in lower.into_iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidModel(format!(
                    "lower-bound row {i} has length {}, expected {m}",
                    row.len()
                )));
            }
            if row.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
                return Err(Error::InvalidModel(format!(
                    "lower-bound row {i} contains NaN or +inf"
                )));
            }
            rows.push(row);
        }

        let mut augmented = Vec::new();
        if m > 1 {
            for l in 0..m {
                let ind = Gamble::indicator(m, l);
                match fs.iter().position(|g| *g == ind) {
                    Some(i) => {
                        for (k, v) in rows[i].iter_mut().enumerate() {
                            if k != l && *v < 0.0 {
                                *v = 0.0;
                            }
                        }
                    }
                    None => {
                        let mut row = vec![0.0; m];
                        row[l] = f64::NEG_INFINITY;
                        fs.push(ind);
                        rows.push(row);
                        augmented.push(fs.len() - 1);
                    }
                }
            }
        }
        if !augmented.is_empty() {
            log::info!(
                "appended indicator constraints for {} state(s); effective gamble count {}",
                augmented.len(),
                fs.len()
            );
        }

        let n = fs.len();
        let lower = DMatrix::from_fn(n, m, |i, k| rows[i][k]);
        let model = Self {
            m,
            gambles: fs,
            lower,
            augmented,
        };
        model.validate_rows()?;
        Ok(model)
    }

    /// Interval model `{Q : lower <= Q <= upper entrywise, row sums 0}`.
    pub fn from_intervals(q_lower: &[Vec<f64>], q_upper: &[Vec<f64>]) -> Result<Self> {
        let m = q_lower.len();
        if q_upper.len() != m
            || q_lower.iter().chain(q_upper).any(|r| r.len() != m)
        {
            return Err(Error::InvalidModel(
                "interval bounds must be two m x m matrices".into(),
            ));
        }
        for k in 0..m {
            for l in 0..m {
                if q_lower[k][l] > q_upper[k][l] {
                    return Err(Error::InvalidModel(format!(
                        "lower bound exceeds upper bound at ({k},{l})"
                    )));
                }
                if !q_lower[k][l].is_finite() || !q_upper[k][l].is_finite() {
                    return Err(Error::InvalidModel(format!(
                        "non-finite interval bound at ({k},{l})"
                    )));
                }
            }
        }
        let mut gambles = Vec::with_capacity(2 * m);
        let mut lower = Vec::with_capacity(2 * m);
        for l in 0..m {
            let mut up = vec![0.0; m];
            up[l] = 1.0;
            gambles.push(up);
            lower.push((0..m).map(|k| q_lower[k][l]).collect());
        }
        for l in 0..m {
            let mut down = vec![0.0; m];
            down[l] = -1.0;
            gambles.push(down);
            lower.push((0..m).map(|k| -q_upper[k][l]).collect());
        }
        if m == 1 {
            // the only gamble is constant
            if q_lower[0][0] > 0.0 || q_upper[0][0] < 0.0 {
                return Err(Error::InfeasibleModel { row: 0 });
            }
            return Self::new(1, Vec::new(), Vec::new());
        }
        Self::new(m, gambles, lower)
    }

    /// The single-element set `{Q}`.
    pub fn singleton(q: &QMatrix) -> Result<Self> {
        let rows: Vec<Vec<f64>> = (0..q.dim()).map(|k| q.row(k)).collect();
        Self::from_intervals(&rows, &rows)
    }

    fn validate_rows(&self) -> Result<()> {
        for k in 0..self.m {
            for l in 0..self.m {
                if l == k {
                    continue;
                }
                // maximising q_l bounds the row, since q_k = -sum of the others
                lp::minimize_row(self, k, &Gamble::indicator(self.m, l).neg())?;
            }
            if self.m == 1 {
                lp::minimize_row(self, k, &Gamble::constant(1, 0.0))?;
            }
        }
        Ok(())
    }

    pub fn states(&self) -> usize {
        self.m
    }

    pub fn gamble_count(&self) -> usize {
        self.gambles.len()
    }

    pub fn gambles(&self) -> &[Gamble] {
        &self.gambles
    }

    pub fn gamble(&self, i: usize) -> &Gamble {
        &self.gambles[i]
    }

    /// `L[i,k]`: the lower rate bound of gamble `i` on row `k` (`-inf` = unconstrained).
    pub fn lower_bound(&self, i: usize, k: usize) -> f64 {
        self.lower[(i, k)]
    }

    pub fn lower_bounds(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Indices of indicator gambles appended during construction.
    pub fn augmented_indicators(&self) -> &[usize] {
        &self.augmented
    }

    /// `‖𝒬‖ = 2 max_k |[lowQ 1_k]_k|`.
    pub fn qset_norm(&self) -> Result<f64> {
        let mut best: f64 = 0.0;
        for k in 0..self.m {
            let sol = lp::minimize_row(self, k, &Gamble::indicator(self.m, k))?;
            best = best.max(sol.value.abs());
        }
        Ok(2.0 * best)
    }

    /// Safe upper bound on the imprecision: `2‖𝒬‖`.
    pub fn imprecision_bound(&self) -> Result<f64> {
        Ok(2.0 * self.qset_norm()?)
    }

    pub fn metrics(&self) -> Result<Metrics> {
        let qset_norm = self.qset_norm()?;
        Ok(Metrics {
            qset_norm,
            imprecision_bound: 2.0 * qset_norm,
        })
    }
}

impl fmt::Debug for ImpreciseQMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImpreciseQMatrix")
            .field("m", &self.m)
            .field("gambles", &self.gambles)
            .field("lower", &self.lower)
            .finish()
    }
}

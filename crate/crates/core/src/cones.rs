//! Normal cones of row polytopes and their simplicial bases.
//!
//! At a vertex `q_k` of row polytope `k`, the normal cone is generated by the tight
//! gambles together with `±1`. A gamble `h` in that cone is written as a non-negative
//! combination of a linearly independent subset, completed to a basis `M_J` of `R^m`
//! whose first column is the constant gamble. Cone membership of any `g` then reads off
//! the signs of `M_J⁻¹ g` (all but the first entry must be non-negative).

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::lp::{self, Combination, LowerApplication};
use crate::model::{Gamble, ImpreciseQMatrix, QMatrix};
use crate::tol;

/// Simplicial sub-cone `posi{f_j : j ∈ J} + span{1}` containing a gamble.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeBasis {
    /// Row of the first polytope this basis was built for.
    pub row: usize,
    /// Gamble indices `J`, in column order after the constant.
    pub indices: Vec<usize>,
    /// `M_J = [1 | f_j ...]`.
    pub matrix: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    /// Coordinates of the gamble in this basis; entries after the first are `>= 0`.
    pub alpha0: DVector<f64>,
    pub condition: f64,
}

impl ConeBasis {
    pub fn new(
        problem: &ImpreciseQMatrix,
        row: usize,
        indices: Vec<usize>,
        alpha0: DVector<f64>,
    ) -> Result<Self> {
        let m = problem.states();
        let matrix = basis_matrix(problem, &indices);
        let (condition, inverse) = linalg::condition_and_inverse(&matrix);
        let inverse = match inverse {
            Some(inv) if condition <= tol::COND_MAX => inv,
            _ => return Err(Error::IllConditionedBasis { row, condition }),
        };
        debug_assert_eq!(alpha0.len(), m);
        Ok(Self {
            row,
            indices,
            matrix,
            inverse,
            alpha0,
            condition,
        })
    }

    /// Coordinates of `g` in this basis.
    pub fn coordinates(&self, g: &Gamble) -> DVector<f64> {
        &self.inverse * g.as_vector()
    }

    /// `M_J α`.
    pub fn gamble(&self, alpha: &DVector<f64>) -> Gamble {
        Gamble::new((&self.matrix * alpha).as_slice().to_vec()).expect("finite basis")
    }

    pub fn key(&self) -> BTreeSet<usize> {
        self.indices.iter().copied().collect()
    }

    /// `‖M_J α₀ − h‖`.
    pub fn reconstruction_error(&self, h: &Gamble) -> f64 {
        self.gamble(&self.alpha0).sub(h).max_norm()
    }
}

fn basis_matrix(problem: &ImpreciseQMatrix, indices: &[usize]) -> DMatrix<f64> {
    let m = problem.states();
    DMatrix::from_fn(m, indices.len() + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            problem.gamble(indices[c - 1])[r]
        }
    })
}

/// Tight constraints at `q_k`; together with the constant they must span `R^m`.
pub fn active_indices(problem: &ImpreciseQMatrix, k: usize, q_k: &[f64]) -> Result<Vec<usize>> {
    let act = lp::tight_constraints(problem, k, q_k);
    let m = problem.states();
    let rank = linalg::rank(&basis_matrix(problem, &act));
    if rank < m {
        return Err(Error::RankDeficientActiveSet {
            row: k,
            rank,
            expected: m,
        });
    }
    Ok(act)
}

/// Drops gambles from a non-negative combination until the remaining ones, together
/// with the constant, are linearly independent. Returns the kept positions (into
/// `gambles`) and their coefficients.
pub fn reduce_to_independent(gambles: &[Gamble], comb: &Combination) -> (Vec<usize>, Combination) {
    let m = gambles.first().map_or(0, |g| g.len());
    let scale = 1.0 + comb.coefficients.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut alpha = comb.coefficients.clone();
    let mut constant = comb.constant;
    let mut support: Vec<usize> = (0..gambles.len())
        .filter(|&i| alpha[i] > tol::CONE * scale)
        .collect();

    for _ in 0..=gambles.len() {
        let cols = DMatrix::from_fn(m, support.len() + 1, |r, c| {
            if c == 0 {
                1.0
            } else {
                gambles[support[c - 1]][r]
            }
        });
        let Some(beta) = linalg::null_vector(&cols) else {
            break;
        };
        // move along the null direction until the first coefficient reaches zero
        let neg = support
            .iter()
            .enumerate()
            .filter(|(p, _)| beta[p + 1] < 0.0)
            .map(|(p, &i)| (p, alpha[i] / -beta[p + 1]))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let (hit, c) = match neg {
            Some((p, c)) => (p, c),
            None => {
                let (p, c) = support
                    .iter()
                    .enumerate()
                    .filter(|(p, _)| beta[p + 1] > 0.0)
                    .map(|(p, &i)| (p, alpha[i] / beta[p + 1]))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .expect("null vector has a non-zero gamble coefficient");
                (p, -c)
            }
        };
        for (p, &i) in support.iter().enumerate() {
            alpha[i] = (alpha[i] + c * beta[p + 1]).max(0.0);
        }
        constant += c * beta[0];
        alpha[support[hit]] = 0.0;
        support.retain(|&i| alpha[i] > 0.0);
    }

    let coefficients = support.iter().map(|&i| alpha[i]).collect();
    (
        support,
        Combination {
            coefficients,
            constant,
        },
    )
}

/// Completes an independent subset of the active gambles to a basis of `R^m`, giving the
/// added gambles zero coefficients.
pub fn complete_to_basis(
    problem: &ImpreciseQMatrix,
    row: usize,
    kept: &[usize],
    comb: &Combination,
    actives: &[usize],
) -> Result<ConeBasis> {
    let m = problem.states();
    let mut indices = kept.to_vec();
    let mut coeffs = comb.coefficients.clone();
    for &i in actives {
        if indices.len() + 1 >= m {
            break;
        }
        if indices.contains(&i) {
            continue;
        }
        let mut trial = indices.clone();
        trial.push(i);
        if linalg::rank(&basis_matrix(problem, &trial)) == trial.len() + 1 {
            indices = trial;
            coeffs.push(0.0);
        }
    }
    if indices.len() + 1 != m {
        return Err(Error::RankDeficientActiveSet {
            row,
            rank: indices.len() + 1,
            expected: m,
        });
    }
    let mut alpha = Vec::with_capacity(m);
    alpha.push(comb.constant);
    alpha.extend(coeffs);
    ConeBasis::new(problem, row, indices, DVector::from_vec(alpha))
}

/// `Q_J = M_J⁻¹ Q M_J`: the action of `Q` in cone coordinates.
pub fn change_of_basis(q: &QMatrix, basis: &ConeBasis) -> Result<DMatrix<f64>> {
    if basis.condition > tol::COND_MAX || !basis.condition.is_finite() {
        return Err(Error::IllConditionedBasis {
            row: basis.row,
            condition: basis.condition,
        });
    }
    Ok(&basis.inverse * q.as_matrix() * &basis.matrix)
}

/// Cone data for one row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowCone {
    pub row: usize,
    pub actives: Vec<usize>,
    /// Index into [`ConeFamily::bases`] of the basis found by reduction and completion.
    pub primary: usize,
    /// Further bases (indices into [`ConeFamily::bases`]) that also contain the gamble.
    pub alternatives: Vec<usize>,
    /// True when the tight gambles positively span all of `R^m`: every gamble is then
    /// minimised by this row.
    pub whole_space: bool,
}

impl RowCone {
    /// Primary first, then the alternatives.
    pub fn candidates(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.primary).chain(self.alternatives.iter().copied())
    }
}

/// Cone bases for all rows at one minimising matrix, with identical bases merged.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeFamily {
    pub bases: Vec<ConeBasis>,
    pub rows: Vec<RowCone>,
}

impl ConeFamily {
    fn intern(&mut self, basis: ConeBasis) -> usize {
        let key = basis.key();
        match self.bases.iter().position(|b| b.key() == key) {
            Some(i) => i,
            None => {
                self.bases.push(basis);
                self.bases.len() - 1
            }
        }
    }

    pub fn primary(&self, k: usize) -> &ConeBasis {
        &self.bases[self.rows[k].primary]
    }
}

/// Options for building cone families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeOptions {
    /// Collect alternative bases from degenerate active sets.
    pub alternatives: bool,
    /// Upper limit on the number of subsets examined per row.
    pub max_subsets: usize,
}

impl Default for ConeOptions {
    fn default() -> Self {
        Self {
            alternatives: true,
            max_subsets: 256,
        }
    }
}

/// Builds cone bases for every row of the minimising matrix in `app`, for gamble `h`.
pub fn build_family(
    problem: &ImpreciseQMatrix,
    app: &LowerApplication,
    h: &Gamble,
    opts: ConeOptions,
) -> Result<ConeFamily> {
    let m = problem.states();
    let mut family = ConeFamily {
        bases: Vec::new(),
        rows: Vec::with_capacity(m),
    };
    for (k, sol) in app.rows.iter().enumerate() {
        let actives = active_indices(problem, k, &sol.vertex)?;
        let cands: Vec<Gamble> = actives.iter().map(|&i| problem.gamble(i).clone()).collect();
        let comb = lp::nonneg_combination(&cands, h)?;
        let (kept_pos, reduced) = reduce_to_independent(&cands, &comb);
        let kept: Vec<usize> = kept_pos.iter().map(|&p| actives[p]).collect();
        let basis = complete_to_basis(problem, k, &kept, &reduced, &actives)?;
        debug_assert!(basis.reconstruction_error(h) <= 1e-7 * (1.0 + h.max_norm()));
        let primary = family.intern(basis);

        let mut alternatives = Vec::new();
        let mut whole_space = false;
        if actives.len() + 1 > m {
            whole_space = positively_spans(&cands);
            if opts.alternatives && !whole_space {
                for b in enumerate_bases(problem, k, &actives, h, opts.max_subsets) {
                    let idx = family.intern(b);
                    if idx != primary && !alternatives.contains(&idx) {
                        alternatives.push(idx);
                    }
                }
            }
        }
        family.rows.push(RowCone {
            row: k,
            actives,
            primary,
            alternatives,
            whole_space,
        });
    }
    Ok(family)
}

/// Whether `posi(gambles) + span{1}` is all of `R^m`: every `-f_i` must be a
/// non-negative combination as well.
fn positively_spans(gambles: &[Gamble]) -> bool {
    gambles
        .iter()
        .all(|f| lp::nonneg_combination(gambles, &f.neg()).is_ok())
}

/// All `(m-1)`-subsets of the actives whose simplicial cone contains `h`.
fn enumerate_bases(
    problem: &ImpreciseQMatrix,
    row: usize,
    actives: &[usize],
    h: &Gamble,
    max_subsets: usize,
) -> Vec<ConeBasis> {
    let m = problem.states();
    let size = m - 1;
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..size).collect();
    let n = actives.len();
    let mut visited = 0;
    if size > n {
        return out;
    }
    loop {
        visited += 1;
        if visited > max_subsets {
            break;
        }
        let subset: Vec<usize> = idx.iter().map(|&p| actives[p]).collect();
        let mat = basis_matrix(problem, &subset);
        let (cond, inv) = linalg::condition_and_inverse(&mat);
        if let Some(inv) = inv.filter(|_| cond <= tol::COND_MAX) {
            let alpha = &inv * h.as_vector();
            let scale = 1.0 + alpha.amax();
            if alpha.iter().skip(1).all(|&a| a >= -tol::CONE * scale) {
                let alpha = alpha.map(|a| a);
                let mut alpha = alpha;
                for a in alpha.iter_mut().skip(1) {
                    if *a < 0.0 {
                        *a = 0.0;
                    }
                }
                if let Ok(b) = ConeBasis::new(problem, row, subset, alpha) {
                    out.push(b);
                }
            }
        }
        // next combination in lexicographic order
        let mut i = size;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - size {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;

    fn g(v: &[f64]) -> Gamble {
        Gamble::new(v.to_vec()).unwrap()
    }

    #[test]
    fn example1_upper_family_shares_one_basis() {
        let model = fixtures::example1();
        let h = fixtures::example1_h().neg();
        let app = lp::lower_operator_apply(&model, &h).unwrap();
        let fam = build_family(&model, &app, &h, ConeOptions::default()).unwrap();
        assert_eq!(fam.bases.len(), 1);
        assert!(fam.rows.iter().all(|r| r.primary == 0));
        let b = &fam.bases[0];
        assert_eq!(b.key(), BTreeSet::from([1, 2]));
        assert!(b.reconstruction_error(&h) < 1e-12);
    }

    #[test]
    fn example1_change_of_basis_matches_printed_matrix() {
        let model = fixtures::example1();
        let h = fixtures::example1_h();
        let app = lp::upper_operator_apply(&model, &h).unwrap();
        // basis (1, f5, f4): h = 1.6 f5 + 0.2 f4
        let alpha = DVector::from_vec(vec![0.0, 1.6, 0.2]);
        let basis = ConeBasis::new(&model, 0, vec![4, 3], alpha).unwrap();
        assert!(basis.reconstruction_error(&h) < 1e-12);
        let qj = change_of_basis(&app.q, &basis).unwrap();
        // printed in (f5, f4, 1) order; permute ours (1, f5, f4)
        let perm = [1, 2, 0];
        let printed = [
            [-1.26667, -0.1, 0.0],
            [0.1, -0.60667, 0.0],
            [0.006667, 0.103333, 0.0],
        ];
        for r in 0..3 {
            for c in 0..3 {
                assert_abs_diff_eq!(qj[(perm[r], perm[c])], printed[r][c], epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn change_of_basis_trivial_cases() {
        let model = fixtures::example1();
        let basis =
            ConeBasis::new(&model, 0, vec![3, 4], DVector::from_vec(vec![0.0, 0.2, 1.6])).unwrap();
        let qj = change_of_basis(&QMatrix::zeros(3), &basis).unwrap();
        assert!(qj.iter().all(|v| *v == 0.0));
        let q = QMatrix::from_rows(&[vec![-1.0, 1.0, 0.0], vec![0.0, -2.0, 2.0], vec![3.0, 0.0, -3.0]])
            .unwrap();
        // identity-like basis: 1 and two indicators does not give M = I, so check M⁻¹QM directly
        let direct = &basis.inverse * q.as_matrix() * &basis.matrix;
        assert_eq!(change_of_basis(&q, &basis).unwrap(), direct);
    }

    #[test]
    fn reduce_keeps_independent_input() {
        let gs = vec![g(&[1.0, 0.0, 0.0]), g(&[0.0, 1.0, 0.0])];
        let comb = Combination {
            coefficients: vec![0.5, 2.0],
            constant: -1.0,
        };
        let (kept, red) = reduce_to_independent(&gs, &comb);
        assert_eq!(kept, vec![0, 1]);
        assert_eq!(red, comb);
    }

    #[test]
    fn reduce_coplanar_gambles() {
        // four gambles in R^3 with a positive combination
        let gs = vec![
            g(&[1.0, 0.0, 0.0]),
            g(&[0.0, 1.0, 0.0]),
            g(&[1.0, 1.0, 0.0]),
            g(&[2.0, -1.0, 0.0]),
        ];
        let comb = Combination {
            coefficients: vec![1.0, 1.0, 1.0, 1.0],
            constant: 0.5,
        };
        let h = comb.reconstruct(&gs, 3);
        let (kept, red) = reduce_to_independent(&gs, &comb);
        assert!(kept.len() <= 2, "{kept:?}");
        assert!(red.coefficients.iter().all(|&a| a >= 0.0));
        let sub: Vec<Gamble> = kept.iter().map(|&i| gs[i].clone()).collect();
        assert!(red.reconstruct(&sub, 3).sub(&h).max_norm() < 1e-12);
        let cols = basis_from(&sub);
        assert_eq!(linalg::rank(&cols), sub.len() + 1);
    }

    fn basis_from(gs: &[Gamble]) -> DMatrix<f64> {
        let m = gs[0].len();
        DMatrix::from_fn(m, gs.len() + 1, |r, c| if c == 0 { 1.0 } else { gs[c - 1][r] })
    }

    #[test]
    fn completion_appends_zero_coefficients() {
        let model = fixtures::example1();
        // h = 2 f4 lies on a ray; one more active gamble is needed
        let h = model.gamble(3).scale(2.0);
        let comb = Combination {
            coefficients: vec![2.0],
            constant: 0.0,
        };
        let basis = complete_to_basis(&model, 0, &[3], &comb, &[3, 4]).unwrap();
        assert_eq!(basis.indices, vec![3, 4]);
        assert_eq!(basis.alpha0[2], 0.0);
        assert!(basis.reconstruction_error(&h) < 1e-12);
    }

    #[test]
    fn completion_of_full_subset_adds_nothing() {
        let model = fixtures::example1();
        let comb = Combination {
            coefficients: vec![0.2, 1.6],
            constant: 0.0,
        };
        let basis = complete_to_basis(&model, 0, &[3, 4], &comb, &[3, 4, 0]).unwrap();
        assert_eq!(basis.indices, vec![3, 4]);
    }

    #[test]
    fn rank_deficient_actives_are_reported() {
        let model = fixtures::example1();
        // an interior point of row 0 has no tight constraints
        let q = [-0.6, 0.42, 0.18];
        let err = active_indices(&model, 0, &q);
        assert!(matches!(err, Err(Error::RankDeficientActiveSet { .. })));
    }

    #[test]
    fn singleton_rows_span_everything() {
        let q = QMatrix::from_rows(&[vec![-1.0, 0.5, 0.5], vec![0.2, -0.2, 0.0], vec![0.0, 3.0, -3.0]])
            .unwrap();
        let model = ImpreciseQMatrix::singleton(&q).unwrap();
        let h = g(&[0.3, -1.0, 2.0]);
        let app = lp::lower_operator_apply(&model, &h).unwrap();
        let fam = build_family(&model, &app, &h, ConeOptions::default()).unwrap();
        assert!(fam.rows.iter().all(|r| r.whole_space));
        for r in &fam.rows {
            // every constraint of a point polytope is tight
            assert_eq!(r.actives.len(), model.gamble_count());
        }
    }

    #[test]
    fn interval_vertex_actives_are_the_bound_rows() {
        let (lo, up) = fixtures::example2_bounds();
        let model = ImpreciseQMatrix::from_intervals(&lo, &up).unwrap();
        // row 0 at lower off-diagonal bounds: q = (-0.83, 0.32, 0.32, 0.19)
        let q = [-0.83, 0.32, 0.32, 0.19];
        let act = active_indices(&model, 0, &q).unwrap();
        // 1_l >= lower for l = 1..3 (indices 1..3) and -1_0 >= -upper (index 4)
        let expected: Vec<usize> = model
            .gambles()
            .iter()
            .enumerate()
            .filter(|(i, f)| {
                let b = model.lower_bound(*i, 0);
                b.is_finite() && (f.dot_slice(&q) - b).abs() < 1e-9
            })
            .map(|(i, _)| i)
            .collect();
        assert_eq!(act, expected);
        assert_eq!(act, vec![1, 2, 3, 4]);
    }
}

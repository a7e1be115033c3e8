use nalgebra::DMatrix;

/// Row-reduces a copy of `a` with partial pivoting; returns the pivot columns.
fn pivot_columns(a: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, Vec<usize>) {
    let mut r = a.clone();
    let (m, n) = r.shape();
    let scale = r.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = rel_tol * scale.max(f64::MIN_POSITIVE);
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..n {
        if row == m {
            break;
        }
        let (best, val) = (row..m)
            .map(|i| (i, r[(i, col)].abs()))
            .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= tol {
            continue;
        }
        r.swap_rows(row, best);
        let p = r[(row, col)];
        for j in 0..n {
            r[(row, j)] /= p;
        }
        for i in 0..m {
            if i != row {
                let f = r[(i, col)];
                if f != 0.0 {
                    for j in 0..n {
                        let v = r[(row, j)];
                        r[(i, j)] -= f * v;
                    }
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    (r, pivots)
}

const RANK_TOL: f64 = 1e-10;

pub(crate) fn rank(a: &DMatrix<f64>) -> usize {
    pivot_columns(a, RANK_TOL).1.len()
}

/// A non-zero vector `v` with `a v ≈ 0`, if the columns of `a` are dependent.
pub(crate) fn null_vector(a: &DMatrix<f64>) -> Option<Vec<f64>> {
    let (r, pivots) = pivot_columns(a, RANK_TOL);
    let n = a.ncols();
    let free = (0..n).find(|c| !pivots.contains(c))?;
    let mut v = vec![0.0; n];
    v[free] = 1.0;
    for (row, &pc) in pivots.iter().enumerate() {
        v[pc] = -r[(row, free)];
    }
    Some(v)
}

/// `‖a‖₁·‖a⁻¹‖₁`, or infinity for a singular matrix. Returns the inverse alongside.
pub(crate) fn condition_and_inverse(a: &DMatrix<f64>) -> (f64, Option<DMatrix<f64>>) {
    let norm1 = |m: &DMatrix<f64>| {
        m.column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    match a.clone().try_inverse() {
        Some(inv) if inv.iter().all(|v| v.is_finite()) => (norm1(a) * norm1(&inv), Some(inv)),
        _ => (f64::INFINITY, None),
    }
}

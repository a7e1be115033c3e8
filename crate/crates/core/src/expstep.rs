//! Exponential stepping: Taylor partial sums in cone coordinates, the cone-exit
//! measure ε, and the per-step error bounds.

use nalgebra::{DMatrix, DVector};

use crate::cones::{ConeBasis, ConeFamily};
use crate::error::{Error, Result};
use crate::model::{matrix_inf_norm, Gamble, QMatrix};
use crate::tol;

/// Fraction of the linear-approximation root taken as the first trial interval.
pub const GUESS_MARGIN: f64 = 0.99;

/// `e^{tA}` by scaling and squaring of a truncated Taylor series.
pub fn matrix_exponential(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let mut scaled = a * t;
    let norm = matrix_inf_norm(&scaled);
    let mut s = 0u32;
    if norm > 0.5 {
        s = (norm / 0.5).log2().ceil() as u32;
        scaled /= 2f64.powi(s as i32);
    }
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=30 {
        term = &term * &scaled / k as f64;
        result += &term;
        if matrix_inf_norm(&term) <= f64::EPSILON * matrix_inf_norm(&result) {
            break;
        }
    }
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

/// `e^{tQ} h`.
pub fn exp_apply(q: &QMatrix, t: f64, h: &Gamble) -> Gamble {
    Gamble::from_vector(matrix_exponential(q.as_matrix(), t) * h.as_vector())
}

/// Partial sums `α_r = p_r(T Q_J) α₀` for one cone basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialSumTrace {
    pub horizon: f64,
    /// `α_0 .. α_{r_max}`.
    pub alphas: Vec<DVector<f64>>,
    /// `e^{T Q_J} α₀`.
    pub limit: DVector<f64>,
    /// Bound on `‖α_∞ − α_r‖` for `r >= r_max`.
    pub tail: f64,
    pub epsilon: f64,
}

/// `‖M_J α⁻‖_c`, where `α⁻` keeps the magnitudes of the negative non-constant entries.
pub fn negative_part(basis: &ConeBasis, alpha: &DVector<f64>) -> f64 {
    let m = alpha.len();
    let mut neg = DVector::zeros(m);
    let mut any = false;
    for j in 1..m {
        if alpha[j] < 0.0 {
            neg[j] = -alpha[j];
            any = true;
        }
    }
    if !any {
        return 0.0;
    }
    let g = &basis.matrix * neg;
    (g.max() - g.min()) / 2.0
}

pub fn partial_sum_trace(
    basis: &ConeBasis,
    qj: &DMatrix<f64>,
    horizon: f64,
) -> Result<PartialSumTrace> {
    let a = qj * horizon;
    let a_norm = matrix_inf_norm(&a);
    let alpha0 = basis.alpha0.clone();
    let alpha_norm = alpha0.amax();
    let tail_tol = tol::TAIL_REL * alpha_norm;
    let growth = a_norm.exp();
    if !growth.is_finite() {
        return Err(Error::SeriesCapExceeded { cap: tol::R_CAP });
    }

    let mut alphas = vec![alpha0.clone()];
    let mut term = alpha0.clone();
    let mut sum = alpha0;
    // ‖A‖^{r+1}/(r+1)!
    let mut power = a_norm;
    let mut epsilon = negative_part(basis, &sum);
    let mut r = 0;
    let tail = loop {
        let tail = power * growth * alpha_norm;
        if tail <= tail_tol || alpha_norm == 0.0 {
            break tail;
        }
        if r >= tol::R_CAP {
            return Err(Error::SeriesCapExceeded { cap: tol::R_CAP });
        }
        r += 1;
        term = &a * term / r as f64;
        sum += &term;
        epsilon = epsilon.max(negative_part(basis, &sum));
        alphas.push(sum.clone());
        power *= a_norm / (r + 1) as f64;
    };
    let limit = matrix_exponential(qj, horizon) * &basis.alpha0;
    let m_norm = matrix_inf_norm(&basis.matrix);
    Ok(PartialSumTrace {
        horizon,
        alphas,
        limit,
        tail,
        epsilon: epsilon + m_norm * tail,
    })
}

/// Max over rows of the smallest ε among that row's bases. `traces[b]` belongs to
/// `family.bases[b]`; `None` marks a basis whose trace could not be computed.
pub fn estimate_epsilon(family: &ConeFamily, traces: &[Option<PartialSumTrace>]) -> f64 {
    family
        .rows
        .iter()
        .map(|row| {
            if row.whole_space {
                return 0.0;
            }
            row.candidates()
                .map(|b| traces[b].as_ref().map_or(f64::INFINITY, |t| t.epsilon))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// How a step's error was certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMethod {
    /// Cone-exit bound from ε.
    Cone,
    /// Worst-case bound for a single exponential step.
    Grid,
}

impl StepMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            StepMethod::Cone => "cone",
            StepMethod::Grid => "grid",
        }
    }
}

/// An accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCertificate {
    pub t_start: f64,
    pub dt: f64,
    pub q: QMatrix,
    pub epsilon: f64,
    pub step_error: f64,
    pub exact: bool,
    pub method: StepMethod,
}

/// `(e^{q·dt} − 1)·(ι/q)·ε`.
pub fn step_error_bound(epsilon: f64, dt: f64, qset_norm: f64, iota_bound: f64) -> f64 {
    if epsilon == 0.0 || dt == 0.0 {
        return 0.0;
    }
    if qset_norm == 0.0 {
        return iota_bound * dt * epsilon;
    }
    (qset_norm * dt).exp_m1() * (iota_bound / qset_norm) * epsilon
}

/// `2‖h‖_c (1 − e^x (1 − x))` with `x = q·dt`.
pub fn worst_case_step_error(dt: f64, qset_norm: f64, h_c: f64) -> f64 {
    let x = qset_norm * dt;
    if x == 0.0 || h_c == 0.0 {
        return 0.0;
    }
    let g = if x < 1.0 {
        // Σ_{k>=2} x^k (k−1)/k!
        let mut term = x; // x^k / k! at k = 1
        let mut sum = 0.0;
        for k in 2..60 {
            term *= x / k as f64;
            let add = term * (k - 1) as f64;
            sum += add;
            if add <= f64::EPSILON * sum {
                break;
            }
        }
        sum
    } else {
        x * x.exp() - x.exp_m1()
    };
    2.0 * h_c * g
}

/// First trial interval from the linear approximation `α₀ + t Q_J α₀ >= 0`.
pub fn initial_interval_guess(
    basis: &ConeBasis,
    qj: &DMatrix<f64>,
    remaining: f64,
    dt_min: f64,
) -> f64 {
    let alpha = &basis.alpha0;
    let v = qj * alpha;
    let scale = 1.0 + alpha.amax();
    let mut t = f64::INFINITY;
    for j in 1..alpha.len() {
        if v[j] < -tol::CONE * scale {
            if alpha[j] <= tol::CONE * scale {
                return dt_min.min(remaining);
            }
            t = t.min(alpha[j] / -v[j]);
        }
    }
    if t.is_finite() {
        (GUESS_MARGIN * t).min(remaining)
    } else {
        remaining
    }
}

/// Smallest non-constant coefficient of `p_s(t Q_J) α₀` over `samples` interior `t`
/// in `(0, horizon)` and `s <= s_max`.
pub fn interior_min_coefficient(
    basis: &ConeBasis,
    qj: &DMatrix<f64>,
    horizon: f64,
    s_max: usize,
    samples: usize,
) -> f64 {
    let mut lowest = f64::INFINITY;
    for i in 1..=samples {
        let t = horizon * i as f64 / (samples + 1) as f64;
        let a = qj * t;
        let mut term = basis.alpha0.clone();
        let mut sum = term.clone();
        for s in 0..=s_max {
            if s > 0 {
                term = &a * term / s as f64;
                sum += &term;
            }
            lowest = sum.iter().skip(1).fold(lowest, |acc, &v| acc.min(v));
        }
    }
    lowest
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::lp;
    use approx::assert_abs_diff_eq;

    fn example1_basis() -> (ConeBasis, DMatrix<f64>) {
        let model = fixtures::example1();
        let h = fixtures::example1_h();
        let app = lp::upper_operator_apply(&model, &h).unwrap();
        let basis = ConeBasis::new(&model, 0, vec![4, 3], DVector::from_vec(vec![0.0, 1.6, 0.2])).unwrap();
        let qj = crate::cones::change_of_basis(&app.q, &basis).unwrap();
        (basis, qj)
    }

    #[test]
    fn exponential_at_zero_is_identity() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -2.0]);
        assert_eq!(matrix_exponential(&a, 0.0), DMatrix::identity(2, 2));
    }

    #[test]
    fn exponential_two_state_closed_form() {
        let (a, b) = (3.0, 0.7);
        let q = DMatrix::from_row_slice(2, 2, &[-a, a, b, -b]);
        for &t in &[0.01, 0.5, 2.0, 40.0] {
            let e = matrix_exponential(&q, t);
            let s = a + b;
            let d = (-s * t).exp();
            let exact = [
                [(b + a * d) / s, a * (1.0 - d) / s],
                [b * (1.0 - d) / s, (a + b * d) / s],
            ];
            for r in 0..2 {
                for c in 0..2 {
                    assert_abs_diff_eq!(e[(r, c)], exact[r][c], epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    fn exponential_of_q_matrix_is_stochastic() {
        let q = fixtures::example2_bounds().0;
        let mut m = DMatrix::from_fn(4, 4, |r, c| q[r][c]);
        for r in 0..4 {
            let off: f64 = (0..4).filter(|&c| c != r).map(|c| m[(r, c)]).sum();
            m[(r, r)] = -off;
        }
        let e = matrix_exponential(&m, 0.3);
        for r in 0..4 {
            let s: f64 = e.row(r).iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
            assert!(e.row(r).iter().all(|&v| v >= -1e-15));
        }
    }

    #[test]
    fn example1_intermediate_value() {
        let model = fixtures::example1();
        let h = fixtures::example1_h();
        let app = lp::upper_operator_apply(&model, &h).unwrap();
        let ht = exp_apply(&app.q, 0.773941371859648, &h);
        for (v, e) in ht.as_slice().iter().zip([-0.182, 0.704, -0.460]) {
            assert_abs_diff_eq!(*v, e, epsilon = 5e-3);
        }
    }

    #[test]
    fn example1_partial_sum_table() {
        let (basis, qj) = example1_basis();
        let tr = partial_sum_trace(&basis, &qj, 0.773941371859648).unwrap();
        // (f5, f4, 1) print order
        let printed = [
            [0.016, 0.230, 0.024],
            [0.791, 0.162, 0.021],
            [0.540, 0.192, 0.021],
            [0.601, 0.184, 0.021],
            [0.589, 0.186, 0.021],
        ];
        for (r, row) in printed.iter().enumerate() {
            let a = &tr.alphas[r + 1];
            for (j, &p) in [1usize, 2, 0].iter().enumerate() {
                assert_abs_diff_eq!(a[p], row[j], epsilon = 5e-3);
            }
        }
        assert_abs_diff_eq!(tr.limit[1], 0.591, epsilon = 5e-3);
        assert_abs_diff_eq!(tr.limit[2], 0.185, epsilon = 5e-3);
        assert!(tr.epsilon < 1e-10);
        let last = tr.alphas.last().unwrap();
        assert!((last - &tr.limit).amax() < 1e-10);
    }

    #[test]
    fn trace_shrinks_to_alpha0() {
        let (basis, qj) = example1_basis();
        let tr = partial_sum_trace(&basis, &qj, 1e-14).unwrap();
        for a in &tr.alphas {
            assert!((a - &basis.alpha0).amax() < 1e-12);
        }
    }

    #[test]
    fn negative_part_of_single_coefficient() {
        let (basis, _) = example1_basis();
        let delta = 0.3;
        let alpha = DVector::from_vec(vec![5.0, -delta, 1.0]);
        let f5 = fixtures::example1().gamble(4).clone();
        assert_abs_diff_eq!(
            negative_part(&basis, &alpha),
            delta * f5.center_seminorm(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn step_error_formula() {
        assert_eq!(step_error_bound(0.0, 1.0, 2.0, 4.0), 0.0);
        assert_eq!(step_error_bound(1e-3, 0.0, 2.0, 4.0), 0.0);
        let (eps, q, dt) = (1e-4, 1.82_f64, 0.25);
        let expected = ((q * dt).exp() - 1.0) * 2.0 * eps;
        assert_abs_diff_eq!(step_error_bound(eps, dt, q, 2.0 * q), expected, epsilon = 1e-18);
        assert!(step_error_bound(eps, 0.3, q, 2.0 * q) > step_error_bound(eps, dt, q, 2.0 * q));
    }

    #[test]
    fn worst_case_is_second_order() {
        assert_eq!(worst_case_step_error(0.0, 1.82, 0.45), 0.0);
        let (q, hc) = (1.82, 0.45);
        for &dt in &[1e-3, 1e-4] {
            let ratio = worst_case_step_error(dt, q, hc) / (dt * dt);
            assert_abs_diff_eq!(ratio, q * q * hc, epsilon = 2e-2 * q * q * hc * dt / 1e-3);
        }
        // branches agree at the switch point
        let below = worst_case_step_error(1.0 - 1e-12, 1.0, 1.0);
        let above = worst_case_step_error(1.0, 1.0, 1.0);
        assert_abs_diff_eq!(below, above, epsilon = 1e-10);
    }

    #[test]
    fn worst_case_matches_integrated_rate() {
        // E_t = 2‖h‖_c ∫_0^t q^2 s e^{qs} ds
        let (q, hc, t) = (1.3, 0.8, 0.9);
        let n = 20000;
        let h = t / n as f64;
        let f = |s: f64| q * q * s * (q * s).exp();
        let mut integral = 0.0;
        for i in 0..n {
            let a = i as f64 * h;
            integral += h / 6.0 * (f(a) + 4.0 * f(a + h / 2.0) + f(a + h));
        }
        assert_abs_diff_eq!(worst_case_step_error(t, q, hc), 2.0 * hc * integral, epsilon = 1e-10);
    }

    #[test]
    fn example1_initial_guess() {
        let (basis, qj) = example1_basis();
        let t = initial_interval_guess(&basis, &qj, 1.0, 1e-9);
        assert_abs_diff_eq!(t, 0.99 * 240.0 / 307.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t, 0.773941371859648, epsilon = 1e-8);
        assert_eq!(initial_interval_guess(&basis, &qj, 0.1, 1e-9), 0.1);
    }

    #[test]
    fn guess_without_binding_coordinate_is_remaining() {
        let (basis, _) = example1_basis();
        let qj = DMatrix::zeros(3, 3);
        assert_eq!(initial_interval_guess(&basis, &qj, 0.7, 1e-9), 0.7);
    }

    #[test]
    fn guess_with_zero_coefficient_leaving() {
        let model = fixtures::example1();
        let basis = ConeBasis::new(&model, 0, vec![4, 3], DVector::from_vec(vec![0.0, 1.0, 0.0])).unwrap();
        let mut qj = DMatrix::zeros(3, 3);
        qj[(2, 1)] = -1.0;
        assert_eq!(initial_interval_guess(&basis, &qj, 0.7, 1e-6), 1e-6);
    }

    #[test]
    fn interior_partial_sums_stay_in_cone() {
        let (basis, qj) = example1_basis();
        let tr = partial_sum_trace(&basis, &qj, 0.773941371859648).unwrap();
        let low = interior_min_coefficient(&basis, &qj, tr.horizon, tr.alphas.len() - 1, 20);
        assert!(low >= -1e-8, "{low}");
    }

    #[test]
    fn epsilon_grows_with_horizon() {
        let (basis, qj) = example1_basis();
        let mut prev = 0.0;
        for &t in &[0.5, 1.0, 2.0, 3.0, 5.0] {
            let eps = partial_sum_trace(&basis, &qj, t).unwrap().epsilon;
            assert!(eps + 1e-12 >= prev, "t = {t}");
            prev = eps;
        }
        assert!(prev > 0.0);
    }
}

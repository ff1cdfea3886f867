//! Least squares over `{x : lo <= x <= hi, sum x = 0}`.
//!
//! Primary method is a bounded-variable active-set scheme: on each face the
//! free coordinates are solved exactly (minimum-norm least squares in an
//! orthonormal basis of the sum-zero subspace), blocked steps add a bound to
//! the working set, and bounds whose multipliers have the wrong sign are
//! released. Projected gradient with exact line search polishes the rare
//! degenerate cases the active set does not settle.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RsmError};

const STEP_EPS: f64 = 1e-14;
const BOUND_EPS: f64 = 1e-13;
const SVD_RCOND: f64 = 1e-12;
const POLISH_ITERS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Scaled KKT residual of `x`, see [`kkt_residual`].
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Minimizes `||r - A x||^2` subject to `lo <= x <= hi` and `sum x = 0`.
///
/// Requires `lo <= 0 <= hi` so that `x = 0` is feasible.
pub fn solve_box_sum_lsq(a: &DMatrix<f64>, r: &DVector<f64>, lo: &[f64], hi: &[f64], tol: f64) -> Result<QpSolution> {
    let k = a.ncols();
    if a.nrows() != r.len() || lo.len() != k || hi.len() != k {
        return Err(RsmError::shape("subproblem dimensions disagree"));
    }
    if lo.iter().zip(hi).any(|(l, h)| !(*l <= 0.0 && 0.0 <= *h)) {
        return Err(RsmError::Subproblem("box does not contain the origin".into()));
    }

    let scale = gradient_scale(a, r);
    let mut x = vec![0.0; k];
    let mut state: Vec<Bound> = (0..k)
        .map(|i| if lo[i] == hi[i] { Bound::Fixed } else { Bound::Free })
        .collect();

    let cap = 20 * (k + 1) * (k + 1);
    let mut iterations = 0;
    let mut settled = false;
    while iterations < cap {
        iterations += 1;
        let free: Vec<usize> = (0..k).filter(|&i| state[i] == Bound::Free).collect();
        let p = face_step(a, r, &x, &free);
        let pmax = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));

        if pmax <= STEP_EPS {
            let g = gradient(a, r, &x);
            match release_candidate(&g, &state, &free, tol * scale) {
                Some(i) => state[i] = Bound::Free,
                None => {
                    settled = true;
                    break;
                }
            }
            continue;
        }

        // ratio test along p
        let mut alpha = 1.0;
        let mut blocking = None;
        for &i in &free {
            let limit = if p[i] < 0.0 {
                (lo[i] - x[i]) / p[i]
            } else if p[i] > 0.0 {
                (hi[i] - x[i]) / p[i]
            } else {
                continue;
            };
            if limit < alpha {
                alpha = limit.max(0.0);
                blocking = Some(i);
            }
        }
        for &i in &free {
            x[i] = (x[i] + alpha * p[i]).clamp(lo[i], hi[i]);
        }
        if let Some(i) = blocking {
            if (x[i] - lo[i]).abs() <= (x[i] - hi[i]).abs() {
                x[i] = lo[i];
                state[i] = Bound::Lower;
            } else {
                x[i] = hi[i];
                state[i] = Bound::Upper;
            }
        }
        rebalance(&mut x, lo, hi, &state);
    }

    let mut kkt = kkt_residual(a, r, lo, hi, &x);
    if !settled || kkt > tol {
        x = polish(a, r, lo, hi, x, tol);
        kkt = kkt_residual(a, r, lo, hi, &x);
    }
    if kkt > tol {
        return Err(RsmError::Subproblem(format!("KKT residual {kkt:e} above tolerance {tol:e}")));
    }
    Ok(QpSolution { x, kkt_residual: kkt, iterations })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
    Fixed,
}

fn gradient_scale(a: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
    (a.transpose() * r).amax().max(1.0)
}

/// `A^T (A x - r)`, half the gradient of the squared residual.
fn gradient(a: &DMatrix<f64>, r: &DVector<f64>, x: &[f64]) -> DVector<f64> {
    let xv = DVector::from_column_slice(x);
    a.transpose() * (a * xv - r)
}

/// Orthonormal basis of `{v in R^f : sum v = 0}` as the columns of an `f x (f-1)` matrix.
fn sum_zero_basis(f: usize) -> DMatrix<f64> {
    let mut n = DMatrix::zeros(f, f.saturating_sub(1));
    for j in 1..f {
        let c = 1.0 / ((j * (j + 1)) as f64).sqrt();
        for i in 0..j {
            n[(i, j - 1)] = c;
        }
        n[(j, j - 1)] = -(j as f64) * c;
    }
    n
}

/// Move from `x` to the minimizer over the current face (free coordinates only, sum preserved).
fn face_step(a: &DMatrix<f64>, r: &DVector<f64>, x: &[f64], free: &[usize]) -> Vec<f64> {
    let k = x.len();
    let mut p = vec![0.0; k];
    if free.len() < 2 {
        return p;
    }
    let basis = sum_zero_basis(free.len());
    let xv = DVector::from_column_slice(x);
    let b = r - a * xv;
    let a_free = DMatrix::from_fn(a.nrows(), free.len(), |q, c| a[(q, free[c])]);
    let reduced = a_free * &basis;
    let svd = reduced.svd(true, true);
    let cutoff = SVD_RCOND * svd.singular_values.max();
    let y = match svd.solve(&b, cutoff) {
        Ok(y) => y,
        Err(_) => return p,
    };
    let step = basis * y;
    for (c, &i) in free.iter().enumerate() {
        p[i] = step[c];
    }
    p
}

/// Bound whose multiplier has the wrong sign by the largest margin, if any exceeds `tol`.
fn release_candidate(g: &DVector<f64>, state: &[Bound], free: &[usize], tol: f64) -> Option<usize> {
    let bounded: Vec<usize> = (0..state.len()).filter(|&i| matches!(state[i], Bound::Lower | Bound::Upper)).collect();
    if bounded.is_empty() {
        return None;
    }
    let nu = if free.is_empty() {
        // multiplier of the sum constraint is free; take the one that best satisfies the bounds
        let lower_need = bounded.iter().filter(|&&i| state[i] == Bound::Lower).map(|&i| -g[i]).fold(f64::NEG_INFINITY, f64::max);
        let upper_need = bounded.iter().filter(|&&i| state[i] == Bound::Upper).map(|&i| -g[i]).fold(f64::INFINITY, f64::min);
        match (lower_need.is_finite(), upper_need.is_finite()) {
            (true, true) => 0.5 * (lower_need + upper_need),
            (true, false) => lower_need,
            (false, true) => upper_need,
            (false, false) => 0.0,
        }
    } else {
        -free.iter().map(|&i| g[i]).sum::<f64>() / free.len() as f64
    };
    let mut worst = None;
    let mut worst_val = -tol;
    for &i in &bounded {
        let mu = match state[i] {
            Bound::Lower => g[i] + nu,
            Bound::Upper => -(g[i] + nu),
            _ => unreachable!(),
        };
        if mu < worst_val {
            worst_val = mu;
            worst = Some(i);
        }
    }
    worst
}

/// Pushes accumulated rounding in `sum x` onto free coordinates with slack.
fn rebalance(x: &mut [f64], lo: &[f64], hi: &[f64], state: &[Bound]) {
    let s: f64 = x.iter().sum();
    if s == 0.0 {
        return;
    }
    if let Some(i) = (0..x.len())
        .filter(|&i| state[i] == Bound::Free)
        .max_by(|&i, &j| slack(x, lo, hi, i).total_cmp(&slack(x, lo, hi, j)))
    {
        x[i] = (x[i] - s).clamp(lo[i], hi[i]);
    }
}

fn slack(x: &[f64], lo: &[f64], hi: &[f64], i: usize) -> f64 {
    (x[i] - lo[i]).min(hi[i] - x[i])
}

/// Scaled KKT residual of `x`.
///
/// Combines primal infeasibility (bound violations and `|sum x|`) with the
/// best achievable stationarity violation over the sum-constraint multiplier
/// `nu`: free coordinates need `g_i + nu = 0`, coordinates at their lower bound
/// need `g_i + nu >= 0`, at their upper bound `g_i + nu <= 0`, where
/// `g = A^T (A x - r)`. The stationarity part is divided by `max(1, ||A^T r||_inf)`.
pub fn kkt_residual(a: &DMatrix<f64>, r: &DVector<f64>, lo: &[f64], hi: &[f64], x: &[f64]) -> f64 {
    let k = x.len();
    let primal = (0..k)
        .map(|i| (lo[i] - x[i]).max(x[i] - hi[i]).max(0.0))
        .fold(x.iter().sum::<f64>().abs(), f64::max);
    let g = gradient(a, r, x);
    let scale = gradient_scale(a, r);

    let at_lo: Vec<bool> = (0..k).map(|i| x[i] - lo[i] <= BOUND_EPS).collect();
    let at_hi: Vec<bool> = (0..k).map(|i| hi[i] - x[i] <= BOUND_EPS).collect();
    let violation = |nu: f64| -> f64 {
        (0..k)
            .map(|i| {
                let v = g[i] + nu;
                match (at_lo[i], at_hi[i]) {
                    (true, true) => 0.0,
                    (true, false) => (-v).max(0.0),
                    (false, true) => v.max(0.0),
                    (false, false) => v.abs(),
                }
            })
            .fold(0.0, f64::max)
    };
    // violation is convex piecewise linear in nu with slopes +-1; its minimum sits
    // at a kink -g_i or where a rising and a falling piece cross, a pairwise midpoint.
    let kinks: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut candidates = kinks.clone();
    for (i, a) in kinks.iter().enumerate() {
        for b in &kinks[i + 1..] {
            candidates.push(0.5 * (a + b));
        }
    }
    let dual = candidates.into_iter().map(violation).fold(f64::INFINITY, f64::min);
    primal.max(dual / scale)
}

/// Euclidean projection onto `{lo <= x <= hi, sum x = 0}` by bisection on the shift.
fn project(y: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let total = |tau: f64| -> f64 { y.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| (v - tau).clamp(*l, *h)).sum() };
    let mut a = y.iter().zip(hi).map(|(v, h)| v - h).fold(f64::INFINITY, f64::min);
    let mut b = y.iter().zip(lo).map(|(v, l)| v - l).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if total(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let tau = 0.5 * (a + b);
    y.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| (v - tau).clamp(*l, *h)).collect()
}

fn polish(a: &DMatrix<f64>, r: &DVector<f64>, lo: &[f64], hi: &[f64], mut x: Vec<f64>, tol: f64) -> Vec<f64> {
    let h = a.transpose() * a;
    let lipschitz = h.norm().max(f64::MIN_POSITIVE);
    for _ in 0..POLISH_ITERS {
        let g = gradient(a, r, &x);
        let trial: Vec<f64> = x.iter().zip(g.iter()).map(|(xi, gi)| xi - gi / lipschitz).collect();
        let target = project(&trial, lo, hi);
        let d = DVector::from_iterator(x.len(), target.iter().zip(&x).map(|(t, xi)| t - xi));
        let curvature = (d.transpose() * &h * &d)[(0, 0)];
        let slope = g.dot(&d);
        if slope >= 0.0 || d.amax() < 1e-16 {
            break;
        }
        let t = if curvature > 0.0 { (-slope / curvature).min(1.0) } else { 1.0 };
        for (xi, di) in x.iter_mut().zip(d.iter()) {
            *xi += t * di;
        }
        if kkt_residual(a, r, lo, hi, &x) <= tol {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn objective(a: &DMatrix<f64>, r: &DVector<f64>, x: &[f64]) -> f64 {
        (r - a * DVector::from_column_slice(x)).norm_squared()
    }

    #[test]
    fn basis_is_orthonormal_and_sum_zero() {
        for f in 2..8 {
            let n = sum_zero_basis(f);
            let gram = n.transpose() * &n;
            assert_abs_diff_eq!(gram, DMatrix::identity(f - 1, f - 1), epsilon = 1e-14);
            for c in n.column_iter() {
                assert_abs_diff_eq!(c.sum(), 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn two_coordinates_match_closed_form() {
        // x = (t, -t): minimize sum (r_q - t (a_q1 - a_q2))^2, t clipped to the box
        let a = DMatrix::from_row_slice(3, 2, &[0.3, 0.1, 0.2, 0.5, 0.4, 0.0]);
        let r = DVector::from_column_slice(&[0.01, -0.02, 0.015]);
        let d: Vec<f64> = (0..3).map(|q| a[(q, 0)] - a[(q, 1)]).collect();
        let t_free = d.iter().zip(r.iter()).map(|(d, r)| d * r).sum::<f64>() / d.iter().map(|d| d * d).sum::<f64>();
        for (lo, hi) in [([-1.0f64, -1.0], [1.0f64, 1.0]), ([-0.02, -0.05], [0.05, 0.01])] {
            let t = t_free.clamp(lo[0].max(-hi[1]), hi[0].min(-lo[1]));
            let sol = solve_box_sum_lsq(&a, &r, &lo, &hi, 1e-10).unwrap();
            assert_abs_diff_eq!(sol.x[0], t, epsilon = 1e-10);
            assert_abs_diff_eq!(sol.x[1], -t, epsilon = 1e-10);
        }
    }

    #[test]
    fn interior_optimum_is_equality_constrained_lsq() {
        let a = DMatrix::from_row_slice(5, 3, &[
            0.3, 0.1, 0.2, 0.2, 0.5, 0.1, 0.4, 0.0, 0.3, 0.1, 0.2, 0.6, 0.5, 0.5, 0.1,
        ]);
        let r = DVector::from_column_slice(&[0.001, -0.002, 0.0015, 0.0005, -0.001]);
        // pseudoinverse oracle in the sum-zero parametrization x = E y, E = [I; -1^T]
        let e = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, -1.0]);
        let ae = &a * &e;
        let y = ae.clone().pseudo_inverse(1e-14).unwrap() * &r;
        let expected = e * y;
        let sol = solve_box_sum_lsq(&a, &r, &[-1.0; 3], &[1.0; 3], 1e-10).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(sol.x[i], expected[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn degenerate_columns_still_settle() {
        // identical columns: objective flat along x0 - x1
        let a = DMatrix::from_row_slice(3, 3, &[0.2, 0.2, 0.5, 0.1, 0.1, 0.3, 0.4, 0.4, 0.0]);
        let r = DVector::from_column_slice(&[0.05, 0.01, -0.03]);
        let lo = [-0.05; 3];
        let hi = [0.05; 3];
        let sol = solve_box_sum_lsq(&a, &r, &lo, &hi, 1e-10).unwrap();
        assert!(sol.kkt_residual <= 1e-10);
        assert!(objective(&a, &r, &sol.x) <= objective(&a, &r, &[0.0; 3]));
    }

    #[test]
    fn projection_lands_in_set() {
        let p = project(&[0.3, -0.7, 0.1, 0.9], &[-0.2; 4], &[0.25; 4]);
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 0.0, epsilon = 1e-12);
        assert!(p.iter().all(|v| (-0.2..=0.25).contains(v)));
    }

    #[test]
    fn rejects_box_without_origin() {
        let a = DMatrix::from_element(1, 2, 1.0);
        let r = DVector::from_element(1, 1.0);
        assert!(solve_box_sum_lsq(&a, &r, &[0.1, -1.0], &[1.0, 1.0], 1e-10).is_err());
    }
}

//! Dense stochastic-matrix kernel.
//!
//! Stationary distributions, the limiting matrix `1 p^T`, the fundamental matrix
//! `Z = [I - (P - 1 p^T)]^-1`, and the perturbation identity
//! `(p - p*)^T = p^T (P - P*) Z*` that links a change of transition matrix to the
//! resulting shift of the stationary distribution.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RsmError};
use crate::tolerances::{
    DIRECT_SOLVE_MAX_N, FUNDAMENTAL_RESIDUAL_TOL, NEGATIVE_CLAMP, POWER_ITERATION_MAX_STEPS,
    POWER_ITERATION_TOL, ROW_SUM_TOL, STATIONARY_RCOND, STATIONARY_RESIDUAL_TOL,
};

/// A square nonnegative matrix whose rows all sum to `1 - deficit`.
///
/// `deficit == 0` is an ordinary row-stochastic transition matrix. A positive
/// deficit marks a substochastic matrix such as `P - (lambda/n) J`, which the
/// perturbation series runs over.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    matrix: DMatrix<f64>,
    deficit: f64,
}

impl StochasticMatrix {
    /// Validates a row-stochastic matrix.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        Self::with_deficit(matrix, 0.0)
    }

    /// Validates a matrix whose rows sum to `1 - deficit`.
    pub fn substochastic(matrix: DMatrix<f64>, deficit: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&deficit) {
            return Err(RsmError::NotStochastic(format!("row deficit {deficit} outside [0, 1]")));
        }
        Self::with_deficit(matrix, deficit)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(RsmError::shape("rows must all have length equal to the row count"));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Row-major slice of `n * n` entries.
    pub fn from_row_slice(n: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(RsmError::shape(format!("expected {} entries, got {}", n * n, entries.len())));
        }
        Self::new(DMatrix::from_row_slice(n, n, entries))
    }

    fn with_deficit(mut matrix: DMatrix<f64>, deficit: f64) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n {
            return Err(RsmError::shape(format!("matrix must be square and nonempty, got {}x{}", n, matrix.ncols())));
        }
        for v in matrix.iter_mut() {
            if !v.is_finite() {
                return Err(RsmError::NotStochastic("non-finite entry".into()));
            }
            if *v < 0.0 {
                if *v < -NEGATIVE_CLAMP {
                    return Err(RsmError::NotStochastic(format!("negative entry {v}")));
                }
                *v = 0.0;
            }
        }
        let target = 1.0 - deficit;
        for (i, row) in matrix.row_iter().enumerate() {
            let s = row.sum();
            if (s - target).abs() > ROW_SUM_TOL {
                return Err(RsmError::NotStochastic(format!("row {i} sums to {s}, expected {target}")));
            }
        }
        Ok(Self { matrix, deficit })
    }

    /// The matrix with every entry `1/n`.
    pub fn uniform(n: usize) -> Self {
        Self { matrix: DMatrix::from_element(n, n, 1.0 / n as f64), deficit: 0.0 }
    }

    pub fn identity(n: usize) -> Self {
        Self { matrix: DMatrix::identity(n, n), deficit: 0.0 }
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn deficit(&self) -> f64 {
        self.deficit
    }

    pub fn is_stochastic(&self) -> bool {
        self.deficit == 0.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn min_entry(&self) -> f64 {
        self.matrix.min()
    }

    /// `Q = P - (lambda/n) J`: strips a uniform restart of strength `lambda`.
    ///
    /// Fails unless every entry of `P` is at least `lambda/n`, i.e. unless the
    /// restart really was mixed in.
    pub fn without_restart(&self, lambda: f64) -> Result<StochasticMatrix> {
        if !self.is_stochastic() {
            return Err(RsmError::NotStochastic("restart can only be stripped from a stochastic matrix".into()));
        }
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(RsmError::InvalidConfig(format!("lambda must be in (0, 1), got {lambda}")));
        }
        let floor = lambda / self.n() as f64;
        let q = self.matrix.map(|v| v - floor);
        StochasticMatrix::substochastic(q, lambda)
    }
}

/// A probability vector over `n` items.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(RsmError::NotDistribution("empty".into()));
        }
        for p in probs.iter_mut() {
            if !p.is_finite() || *p < -NEGATIVE_CLAMP {
                return Err(RsmError::NotDistribution(format!("invalid entry {p}")));
            }
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(RsmError::NotDistribution(format!("entries sum to {s}")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        Self { probs: vec![1.0 / n as f64; n] }
    }

    /// Unit mass on item `u`.
    pub fn indicator(n: usize, u: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[u] = 1.0;
        Self { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn to_row(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, self.probs.len(), &self.probs)
    }
}

/// `Z = [I - (P - 1 p^T)]^-1` together with the stationary distribution it was built from.
#[derive(Debug, Clone)]
pub struct FundamentalMatrix {
    z: DMatrix<f64>,
    stationary: Distribution,
}

impl FundamentalMatrix {
    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn stationary(&self) -> &Distribution {
        &self.stationary
    }

    pub fn into_parts(self) -> (DMatrix<f64>, Distribution) {
        (self.z, self.stationary)
    }
}

/// Stationary distribution `p` with `p^T P = p^T`.
///
/// Chains up to [`DIRECT_SOLVE_MAX_N`] states are solved exactly from the
/// balance equations with one row replaced by `1^T p = 1`; larger chains fall back to
/// power iteration. A rank-deficient system (several closed classes, e.g. the
/// identity) is reported as [`RsmError::NoUniqueStationary`].
pub fn stationary(p: &StochasticMatrix) -> Result<Distribution> {
    if !p.is_stochastic() {
        return Err(RsmError::NotStochastic("stationary distribution needs a stochastic matrix".into()));
    }
    let probs = if p.n() <= DIRECT_SOLVE_MAX_N {
        stationary_direct(p.matrix())?
    } else {
        stationary_power(p.matrix())?
    };
    let dist = normalize(probs)?;
    if stationary_residual(p.matrix(), dist.as_slice()) > STATIONARY_RESIDUAL_TOL {
        return Err(RsmError::NoUniqueStationary);
    }
    Ok(dist)
}

fn stationary_direct(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = p.nrows();
    let mut a = DMatrix::zeros(n + 1, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = p[(j, i)] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n, j)] = 1.0;
    }

    // Rank check on the full augmented system.
    let sv = a.clone().singular_values();
    if !(sv.min() > STATIONARY_RCOND * sv.max()) {
        return Err(RsmError::NoUniqueStationary);
    }
    // Solve the square system with the last balance equation swapped for normalization.
    // Pivoted LU is backward stable here; the SVD solve is not accurate enough.
    let square = a.remove_row(n - 1);
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = square.lu().solve(&b).ok_or(RsmError::NoUniqueStationary)?;
    Ok(x.iter().copied().collect())
}

fn stationary_power(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = p.nrows();
    let mut cur = DMatrix::from_element(1, n, 1.0 / n as f64);
    for _ in 0..POWER_ITERATION_MAX_STEPS {
        let next = &cur * p;
        let change: f64 = (&next - &cur).iter().map(|v| v.abs()).sum();
        cur = next;
        if change < POWER_ITERATION_TOL {
            return Ok(cur.iter().copied().collect());
        }
    }
    Err(RsmError::NoUniqueStationary)
}

fn normalize(mut probs: Vec<f64>) -> Result<Distribution> {
    for v in probs.iter_mut() {
        if *v < 0.0 {
            // Perron vectors are nonnegative; anything beyond rounding noise means the solve failed.
            if *v < -1e-9 {
                return Err(RsmError::NoUniqueStationary);
            }
            *v = 0.0;
        }
    }
    let s: f64 = probs.iter().sum();
    if !(s > 0.0) {
        return Err(RsmError::NoUniqueStationary);
    }
    probs.iter_mut().for_each(|v| *v /= s);
    Distribution::new(probs)
}

/// `max_j |(p^T P)_j - p_j|`.
pub fn stationary_residual(p: &DMatrix<f64>, dist: &[f64]) -> f64 {
    let n = p.nrows();
    (0..n)
        .map(|j| {
            let pj: f64 = (0..n).map(|i| dist[i] * p[(i, j)]).sum();
            (pj - dist[j]).abs()
        })
        .fold(0.0, f64::max)
}

/// `P_inf = 1 p^T`: every row is the stationary distribution.
pub fn limiting_matrix(p: &StochasticMatrix) -> Result<DMatrix<f64>> {
    let dist = stationary(p)?;
    Ok(outer_ones(&dist))
}

fn outer_ones(dist: &Distribution) -> DMatrix<f64> {
    let n = dist.len();
    DMatrix::from_fn(n, n, |_, j| dist.get(j))
}

/// `Z = [I - (P - P_inf)]^-1`, computed by direct inversion and checked by multiplying back.
pub fn fundamental_matrix(p: &StochasticMatrix) -> Result<FundamentalMatrix> {
    let dist = stationary(p)?;
    fundamental_matrix_with(p, dist)
}

/// Same as [`fundamental_matrix`] when the stationary distribution is already known.
pub fn fundamental_matrix_with(p: &StochasticMatrix, dist: Distribution) -> Result<FundamentalMatrix> {
    let n = p.n();
    if dist.len() != n {
        return Err(RsmError::shape(format!("distribution has {} entries, matrix has {n} states", dist.len())));
    }
    let system = DMatrix::identity(n, n) - p.matrix() + outer_ones(&dist);
    let z = system
        .clone()
        .try_inverse()
        .ok_or_else(|| RsmError::SingularFundamental("inverse does not exist".into()))?;
    let residual = (&z * &system - DMatrix::identity(n, n)).amax();
    if !(residual <= FUNDAMENTAL_RESIDUAL_TOL) {
        return Err(RsmError::SingularFundamental(format!("inverse residual {residual:e}")));
    }
    Ok(FundamentalMatrix { z, stationary: dist })
}

/// `(I - Q)^-1` for a substochastic `Q`; the closed form of `sum_i Q^i`.
pub fn resolvent(q: &StochasticMatrix) -> Result<DMatrix<f64>> {
    let n = q.n();
    let system = DMatrix::identity(n, n) - q.matrix();
    system
        .try_inverse()
        .ok_or_else(|| RsmError::SingularFundamental("I - Q is singular".into()))
}

/// `p_from^T * delta * Z`.
///
/// With `p_from` the stationary distribution of `P` and `Z` the fundamental matrix
/// of `P*`, and `delta = P - P*`, this is exactly `(p - p*)^T`.
pub fn stationary_shift(p_from: &Distribution, delta: &DMatrix<f64>, z: &FundamentalMatrix) -> Result<Vec<f64>> {
    stationary_shift_with(p_from, delta, z.z())
}

/// [`stationary_shift`] against an arbitrary right-hand operator, e.g. a [`resolvent`].
pub fn stationary_shift_with(p_from: &Distribution, delta: &DMatrix<f64>, operator: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = p_from.len();
    if delta.nrows() != n || delta.ncols() != n || operator.nrows() != n || operator.ncols() != n {
        return Err(RsmError::shape(format!(
            "distribution of length {n}, delta {}x{}, operator {}x{}",
            delta.nrows(),
            delta.ncols(),
            operator.nrows(),
            operator.ncols()
        )));
    }
    let row = p_from.to_row() * delta * operator;
    Ok(row.iter().copied().collect())
}

/// Induced infinity norm: the largest absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

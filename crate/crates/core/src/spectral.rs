//! Reproduction matrix, Perron root and left eigenvector, the size-biased
//! limit law of sampled broods and the exact variances of the moment
//! statistics under that law.
//!
//! Row `i` of the reproduction matrix is the mean brood of a type-`i` parent.
//! Under this convention `b` is a *left* eigenvector, `b M = rho b`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BranchingModel, TypedVector};
use crate::scalar::{count, Real};

const MAX_POWER_ITERATIONS: usize = 10_000;

/// Square nonnegative matrix, row-major, `m[i][k]` = expected number of
/// type-`k` children of a type-`i` parent.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReproductionMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> ReproductionMatrix<T> {
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend(row);
        }
        if data.iter().any(|&x| x < T::zero() || !x.is_finite()) {
            return Err(Error::ParameterOutOfRange(
                "matrix entries must be finite and >= 0".into(),
            ));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> T {
        self.data[i * self.dim + k]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim;
        let data = (0..n * n).map(|idx| self.get(idx % n, idx / n)).collect();
        Self { dim: n, data }
    }

    /// Row vector times matrix, `x M`.
    pub fn left_mul(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.dim];
        for (i, &xi) in x.iter().enumerate() {
            for (yk, &m) in y.iter_mut().zip(self.row(i)) {
                *yk += xi * m;
            }
        }
        y
    }
}

pub fn reproduction_matrix<T: Real>(model: &BranchingModel<T>) -> ReproductionMatrix<T> {
    let dim = model.dim();
    let data = model.laws().iter().flat_map(|law| law.mean()).collect();
    ReproductionMatrix { dim, data }
}

/// Primitivity test on the zero pattern: some power up to Wielandt's bound
/// `(l-1)^2 + 1` must be entrywise positive.
pub fn is_positively_regular<T: Real>(m: &ReproductionMatrix<T>) -> bool {
    let n = m.dim();
    if n == 0 {
        return false;
    }
    let pattern: Vec<bool> = m.data.iter().map(|&x| x > T::zero()).collect();
    let mut power = pattern.clone();
    for _ in 0..(n - 1) * (n - 1) + 1 {
        if power.iter().all(|&p| p) {
            return true;
        }
        let mut next = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                next[i * n + j] = (0..n).any(|k| power[i * n + k] && pattern[k * n + j]);
            }
        }
        power = next;
    }
    false
}

/// Perron root with its L1-normalized nonnegative left eigenvector.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerronPair<T> {
    pub rho: T,
    pub b: Vec<T>,
    /// `|b M - rho b|_1`
    pub residual: T,
    pub iterations: usize,
}

/// Power iteration on the transpose of `m`, i.e. repeated `x <- x M / |x M|_1`.
pub fn perron<T: Real>(m: &ReproductionMatrix<T>) -> Result<PerronPair<T>> {
    if !is_positively_regular(m) {
        return Err(Error::NotPositivelyRegular);
    }
    let n = m.dim();
    let mut x = vec![T::one() / count::<T>(n as u64); n];
    let mut iterations = 0;
    while iterations < MAX_POWER_ITERATIONS {
        iterations += 1;
        let mut y = m.left_mul(&x);
        let norm: T = y.iter().copied().sum();
        y.iter_mut().for_each(|v| *v /= norm);
        let change: T = y.iter().zip(&x).map(|(a, b)| (*a - *b).abs()).sum();
        x = y;
        if change < T::eigen_step_tol() {
            break;
        }
    }
    let xm = m.left_mul(&x);
    let rho =
        xm.iter().zip(&x).map(|(a, b)| *a * *b).sum::<T>() / x.iter().map(|v| *v * *v).sum::<T>();
    let residual: T = xm.iter().zip(&x).map(|(a, b)| (*a - rho * *b).abs()).sum();
    if !(residual <= T::eigen_residual_tol()) {
        return Err(Error::ConvergenceFailure {
            iterations,
            residual: residual.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(PerronPair {
        rho,
        b: x,
        residual,
        iterations,
    })
}

/// Limit law of a sampled brood: `p_S(u) = |u|/rho * sum_i b_i p_i(u)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizeBiasedLaw<T> {
    pub support: Vec<TypedVector>,
    pub probs: Vec<T>,
    pub rho: T,
    pub b: Vec<T>,
}

impl<T: Real> SizeBiasedLaw<T> {
    pub fn prob(&self, v: &TypedVector) -> T {
        self.support
            .iter()
            .position(|s| s == v)
            .map_or(T::zero(), |i| self.probs[i])
    }

    pub fn total_mass(&self) -> T {
        self.probs.iter().copied().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TypedVector, T)> + '_ {
        self.support.iter().zip(self.probs.iter().copied())
    }
}

pub fn size_biased_pmf<T: Real>(
    model: &BranchingModel<T>,
    pair: &PerronPair<T>,
) -> SizeBiasedLaw<T> {
    let support = model.union_support();
    let probs = support
        .iter()
        .map(|u| {
            let mix: T = model
                .laws()
                .iter()
                .zip(&pair.b)
                .map(|(law, &bi)| bi * law.prob(u))
                .sum();
            count::<T>(u.total()) / pair.rho * mix
        })
        .collect();
    SizeBiasedLaw {
        support,
        probs,
        rho: pair.rho,
        b: pair.b.clone(),
    }
}

/// Exact `(E|X|^{-1}, E(X_i/|X|))` under `p_S`; these should equal
/// `(1/rho, b)`.
pub fn moment_identities<T: Real>(ps: &SizeBiasedLaw<T>) -> (T, Vec<T>) {
    let dim = ps.b.len();
    let mut inv = T::zero();
    let mut ratio = vec![T::zero(); dim];
    for (v, p) in ps.iter() {
        let total = count::<T>(v.total());
        inv += p / total;
        for (r, &c) in ratio.iter_mut().zip(v.as_slice()) {
            *r += p * count::<T>(c) / total;
        }
    }
    (inv, ratio)
}

/// Asymptotic variance of `T_n` (variance of `1/|X|`) and covariance matrix
/// of `U_n` (covariance of `X/|X|`) under `p_S`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymptoticVariances<T> {
    pub sigma_t_sq: T,
    pub sigma: Vec<Vec<T>>,
}

pub fn asymptotic_variances<T: Real>(
    model: &BranchingModel<T>,
    pair: &PerronPair<T>,
) -> AsymptoticVariances<T> {
    let dim = model.dim();
    let inv_rho = T::one() / pair.rho;
    let mut inv_sum = T::zero();
    let mut cross = vec![vec![T::zero(); dim]; dim];
    for (law, &bk) in model.laws().iter().zip(&pair.b) {
        for (v, p) in law.iter() {
            let w = bk * p / count::<T>(v.total());
            inv_sum += w;
            for i in 0..dim {
                let vi = count::<T>(v[i]);
                for j in 0..dim {
                    cross[i][j] += w * vi * count::<T>(v[j]);
                }
            }
        }
    }
    let mut sigma_t_sq = inv_rho * (inv_sum - inv_rho);
    // an exact zero comes out as +-1e-17
    if sigma_t_sq.abs() < T::mass_tol() {
        sigma_t_sq = T::zero();
    }
    let sigma = (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| inv_rho * cross[i][j] - pair.b[i] * pair.b[j])
                .collect()
        })
        .collect();
    AsymptoticVariances { sigma_t_sq, sigma }
}

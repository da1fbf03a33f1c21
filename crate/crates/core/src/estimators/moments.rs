use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::TypedVector;
use crate::scalar::{count, lit, Real};
use crate::spectral::AsymptoticVariances;

/// Method-of-moments estimates of `rho` and `b`.
///
/// `T_n` is the sample mean of `1/|X_j|`, whose limit is `1/rho`, and
/// `U_n` the sample mean of `X_j/|X_j|`, whose limit is `b`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentEstimates<T> {
    pub t_n: T,
    pub rho_hat: T,
    pub u_n: Vec<T>,
    pub r: usize,
    pub ci_rho: Option<(T, T)>,
    pub ci_b: Option<Vec<(T, T)>>,
    pub level: Option<T>,
    /// The variance of `1/|X|` is zero, so the interval for `rho` is a point.
    pub rho_degenerate: bool,
}

pub fn mom_estimates<T: Real>(sample: &[TypedVector]) -> Result<MomentEstimates<T>> {
    let first = sample.first().ok_or(Error::EmptySample)?;
    let dim = first.dim();
    let mut t_sum = T::zero();
    let mut u_sum = vec![T::zero(); dim];
    for x in sample {
        if x.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: x.dim(),
            });
        }
        if x.is_zero() {
            return Err(Error::ZeroVectorInSupport);
        }
        let size = count::<T>(x.total());
        t_sum += T::one() / size;
        for (u, &c) in u_sum.iter_mut().zip(x.as_slice()) {
            *u += count::<T>(c) / size;
        }
    }
    let r = count::<T>(sample.len() as u64);
    let t_n = t_sum / r;
    Ok(MomentEstimates {
        t_n,
        rho_hat: T::one() / t_n,
        u_n: u_sum.into_iter().map(|u| u / r).collect(),
        r: sample.len(),
        ci_rho: None,
        ci_b: None,
        level: None,
        rho_degenerate: false,
    })
}

/// Wald intervals: `rho_hat +- z sqrt(sigma_T^2 rho_hat^4 / r)` and
/// `U_{n,i} +- z sqrt(Sigma_ii / r)`.
pub fn mom_confidence<T: Real>(
    est: &MomentEstimates<T>,
    var: &AsymptoticVariances<T>,
    level: T,
) -> Result<MomentEstimates<T>> {
    if !(level > T::zero() && level < T::one()) {
        return Err(Error::ParameterOutOfRange(format!(
            "level = {level} must lie in (0, 1)"
        )));
    }
    if est.r < 2 {
        return Err(Error::InvalidSampleSize(
            "confidence intervals need r >= 2".into(),
        ));
    }
    if var.sigma.len() != est.u_n.len() {
        return Err(Error::DimensionMismatch {
            expected: est.u_n.len(),
            found: var.sigma.len(),
        });
    }
    let p = (T::one() + level) / lit(2.0);
    let z: T = lit(normal_quantile(p.to_f64().unwrap()));
    let r = count::<T>(est.r as u64);
    let rho_half = z * (var.sigma_t_sq * est.rho_hat.powi(4) / r).sqrt();
    let ci_b = est
        .u_n
        .iter()
        .zip(&var.sigma)
        .enumerate()
        .map(|(i, (&u, row))| {
            let half = z * (row[i].max(T::zero()) / r).sqrt();
            (u - half, u + half)
        })
        .collect();
    Ok(MomentEstimates {
        ci_rho: Some((est.rho_hat - rho_half, est.rho_hat + rho_half)),
        ci_b: Some(ci_b),
        level: Some(level),
        rho_degenerate: var.sigma_t_sq <= T::zero(),
        ..est.clone()
    })
}

/// Sample variance of `1/|X_j|` and sample covariance of `X_j/|X_j|`, both
/// with denominator `r - 1`.
pub fn plugin_variances<T: Real>(sample: &[TypedVector]) -> Result<AsymptoticVariances<T>> {
    if sample.len() < 2 {
        return Err(Error::EmptySample);
    }
    let est = mom_estimates::<T>(sample)?;
    let dim = est.u_n.len();
    let mut sigma_t_sq = T::zero();
    let mut sigma = vec![vec![T::zero(); dim]; dim];
    for x in sample {
        let size = count::<T>(x.total());
        let dt = T::one() / size - est.t_n;
        sigma_t_sq += dt * dt;
        let d: Vec<T> = x
            .as_slice()
            .iter()
            .zip(&est.u_n)
            .map(|(&c, &u)| count::<T>(c) / size - u)
            .collect();
        for i in 0..dim {
            for j in 0..dim {
                sigma[i][j] += d[i] * d[j];
            }
        }
    }
    let denom = count::<T>(sample.len() as u64 - 1);
    Ok(AsymptoticVariances {
        sigma_t_sq: sigma_t_sq / denom,
        sigma: sigma
            .into_iter()
            .map(|row| row.into_iter().map(|s| s / denom).collect())
            .collect(),
    })
}

/// Standard normal quantile by Acklam's rational approximation with one
/// Halley refinement step; absolute error below `1e-12` on `(1e-300, 1)`.
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    if p.is_nan() || p <= 0.0 {
        return if p == 0.0 {
            f64::NEG_INFINITY
        } else {
            f64::NAN
        };
    }
    if p >= 1.0 {
        return if p == 1.0 { f64::INFINITY } else { f64::NAN };
    }
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // Halley step against the normal cdf
    let e = 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

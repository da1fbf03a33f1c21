//! Asymptotic maximum likelihood for parametric offspring families.
//!
//! The objective treats the sampled broods as iid draws from `p_S`:
//! `l(theta) = sum_j log|X_j| - log rho(theta) + log sum_i b_i(theta) p_i(X_j; theta)`.
//! `rho` and `b` are recomputed by power iteration at every evaluation and all
//! derivatives are central differences.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BranchingModel, TypedVector};
use crate::spectral::{perron, reproduction_matrix, PerronPair};

const REL_STEP: f64 = 1e-6;
const MAX_ITERATIONS: usize = 200;
const JITTER_STARTS: usize = 4;

/// Box constraints `lower <= theta <= upper`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::ParameterOutOfRange(
                "lower bound above upper bound".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.lower)
                .zip(&self.upper)
                .all(|((v, l), u)| l <= v && v <= u)
    }

    fn project(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StartSummary {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MleFit {
    pub theta_hat: Vec<f64>,
    pub loglik: f64,
    /// Largest per-observation imbalance of the first-order conditions,
    /// `|sum_j (sum_i p_i' b_i + b_i' p_i)/(sum_i p_i b_i) - r rho'/rho| / r`;
    /// `None` when `theta_hat` touches the box.
    pub stationarity_residual: Option<f64>,
    pub converged: bool,
    pub starts: Vec<StartSummary>,
}

fn group(sample: &[TypedVector]) -> Vec<(TypedVector, u64)> {
    let mut counts: BTreeMap<Vec<u64>, u64> = BTreeMap::new();
    for x in sample {
        *counts.entry(x.as_slice().to_vec()).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .map(|(v, c)| (TypedVector::new(v), c))
        .collect()
}

fn spectral_pair(model: &BranchingModel<f64>) -> Result<PerronPair<f64>> {
    perron(&reproduction_matrix(model))
}

fn grouped_loglik(model: &BranchingModel<f64>, grouped: &[(TypedVector, u64)]) -> Result<f64> {
    let pair = spectral_pair(model)?;
    let log_rho = pair.rho.ln();
    let mut total = 0.0;
    for (v, c) in grouped {
        if v.dim() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                found: v.dim(),
            });
        }
        let mix: f64 = model
            .laws()
            .iter()
            .zip(&pair.b)
            .map(|(law, b)| b * law.prob(v))
            .sum();
        total += *c as f64 * ((v.total() as f64).ln() - log_rho + mix.ln());
    }
    Ok(total)
}

/// Asymptotic log-likelihood of `sample` under `model`.
pub fn log_likelihood(model: &BranchingModel<f64>, sample: &[TypedVector]) -> Result<f64> {
    grouped_loglik(model, &group(sample))
}

struct Objective<'a, F> {
    family: &'a F,
    grouped: Vec<(TypedVector, u64)>,
    bounds: &'a Bounds,
}

impl<F> Objective<'_, F>
where
    F: Fn(&[f64]) -> Result<BranchingModel<f64>>,
{
    /// Negative log-likelihood; `+inf` where the family is invalid.
    fn value(&self, x: &[f64]) -> f64 {
        match (self.family)(x).and_then(|m| grouped_loglik(&m, &self.grouped)) {
            Ok(l) if l.is_finite() => -l,
            _ => f64::INFINITY,
        }
    }

    fn step(&self, x: &[f64], j: usize) -> f64 {
        REL_STEP * x[j].abs().max(1.0)
    }

    /// Central differences, one-sided against the box or invalid neighbors.
    fn gradient(&self, x: &[f64], fx: f64) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        let mut probe = x.to_vec();
        for j in 0..x.len() {
            let h = self.step(x, j);
            let up_ok = x[j] + h <= self.bounds.upper[j];
            let down_ok = x[j] - h >= self.bounds.lower[j];
            probe[j] = x[j] + h;
            let fp = if up_ok {
                self.value(&probe)
            } else {
                f64::INFINITY
            };
            probe[j] = x[j] - h;
            let fm = if down_ok {
                self.value(&probe)
            } else {
                f64::INFINITY
            };
            probe[j] = x[j];
            g[j] = match (fp.is_finite(), fm.is_finite()) {
                (true, true) => (fp - fm) / (2.0 * h),
                (true, false) => (fp - fx) / h,
                (false, true) => (fx - fm) / h,
                (false, false) => 0.0,
            };
        }
        g
    }

    /// Zeroes gradient components that would push through an active bound.
    fn projected(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        g.iter()
            .enumerate()
            .map(|(j, &gj)| {
                let at_low = x[j] <= self.bounds.lower[j] && gj > 0.0;
                let at_high = x[j] >= self.bounds.upper[j] && gj < 0.0;
                if at_low || at_high {
                    0.0
                } else {
                    gj
                }
            })
            .collect()
    }

    /// Projected BFGS descent on the negative log-likelihood.
    fn minimize(&self, start: &[f64]) -> StartSummary {
        let d = start.len();
        let mut x = start.to_vec();
        self.bounds.project(&mut x);
        let mut fx = self.value(&x);
        let mut h_inv = identity(d);
        let mut scaled = false;
        let mut converged = false;
        let mut iterations = 0;
        if !fx.is_finite() {
            return StartSummary {
                start: start.to_vec(),
                end: x,
                loglik: f64::NEG_INFINITY,
                iterations,
                converged,
            };
        }
        let mut g = self.gradient(&x, fx);
        while iterations < MAX_ITERATIONS {
            iterations += 1;
            let pg = self.projected(&x, &g);
            let pg_norm = inf_norm(&pg);
            if pg_norm <= 1e-7 * fx.abs().max(1.0) {
                converged = true;
                break;
            }
            let free: Vec<bool> = (0..d).map(|j| pg[j] != 0.0 || g[j] == 0.0).collect();
            let mut dir: Vec<f64> = (0..d)
                .map(|i| {
                    if free[i] {
                        -(0..d)
                            .filter(|&k| free[k])
                            .map(|k| h_inv[i][k] * g[k])
                            .sum::<f64>()
                    } else {
                        0.0
                    }
                })
                .collect();
            if dot(&dir, &pg) >= 0.0 {
                h_inv = identity(d);
                scaled = false;
                dir = pg.iter().map(|v| -v).collect();
            }
            if !scaled {
                // first step moves at most 10% of the box width
                let width = (0..d)
                    .map(|j| self.bounds.upper[j] - self.bounds.lower[j])
                    .fold(f64::INFINITY, f64::min);
                let len = inf_norm(&dir);
                if len > 0.0 {
                    let t = (0.1 * width.min(1.0)) / len;
                    dir.iter_mut().for_each(|v| *v *= t);
                }
            }
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let mut trial: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
                self.bounds.project(&mut trial);
                let ft = self.value(&trial);
                let decrease: f64 = dot(&g, &sub(&trial, &x));
                if ft.is_finite() && ft <= fx + 1e-4 * decrease.min(0.0) {
                    accepted = Some((trial, ft));
                    break;
                }
                t *= 0.5;
            }
            let Some((next, f_next)) = accepted else {
                // no progress possible along the projected direction
                converged = pg_norm <= 1e-5 * fx.abs().max(1.0);
                break;
            };
            let s = sub(&next, &x);
            let g_next = self.gradient(&next, f_next);
            let y = sub(&g_next, &g);
            let sy = dot(&s, &y);
            let small_move =
                inf_norm(&s) <= 1e-13 && (fx - f_next).abs() <= 1e-15 * fx.abs().max(1.0);
            x = next;
            fx = f_next;
            g = g_next;
            if small_move {
                converged = inf_norm(&self.projected(&x, &g)) <= 1e-5 * fx.abs().max(1.0);
                break;
            }
            if sy > 1e-12 {
                if !scaled {
                    let gamma = sy / dot(&y, &y);
                    h_inv = identity(d)
                        .into_iter()
                        .map(|row| row.into_iter().map(|v| v * gamma).collect())
                        .collect();
                    scaled = true;
                }
                bfgs_update(&mut h_inv, &s, &y, sy);
            }
        }
        StartSummary {
            start: start.to_vec(),
            end: x,
            loglik: -fx,
            iterations,
            converged,
        }
    }
}

fn identity(d: usize) -> Vec<Vec<f64>> {
    (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let d = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..d).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..d {
        for j in 0..d {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Deterministic starting points: `theta0` followed by four points offset by a
/// quarter of the box width in alternating sign patterns.
fn starts(theta0: &[f64], bounds: &Bounds) -> Vec<Vec<f64>> {
    const PATTERNS: [[f64; 2]; JITTER_STARTS] =
        [[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]];
    let mut out = vec![theta0.to_vec()];
    for pattern in PATTERNS {
        let point = theta0
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let (lo, hi) = (bounds.lower[j], bounds.upper[j]);
                let flip = if (j / 2) % 2 == 0 { 1.0 } else { -1.0 };
                let margin = 1e-3 * (hi - lo);
                (v + 0.25 * (hi - lo) * pattern[j % 2] * flip).clamp(lo + margin, hi - margin)
            })
            .collect();
        out.push(point);
    }
    out
}

/// Maximizes the asymptotic likelihood over the box by multi-start projected
/// quasi-Newton ascent and returns the best start; ties keep the earlier one.
pub fn amle_fit<F>(
    family: F,
    sample: &[TypedVector],
    theta0: &[f64],
    bounds: &Bounds,
) -> Result<MleFit>
where
    F: Fn(&[f64]) -> Result<BranchingModel<f64>>,
{
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if !bounds.contains(theta0) {
        return Err(Error::ParameterOutOfRange(format!(
            "theta0 = {theta0:?} lies outside the box"
        )));
    }
    let model0 = family(theta0).map_err(|e| Error::ModelConstructionFailed(e.to_string()))?;
    grouped_loglik(&model0, &group(sample))?;
    let objective = Objective {
        family: &family,
        grouped: group(sample),
        bounds,
    };
    let runs: Vec<StartSummary> = starts(theta0, bounds)
        .iter()
        .map(|s| objective.minimize(s))
        .collect();
    let mut best = 0;
    for (k, run) in runs.iter().enumerate().skip(1) {
        if run.loglik > runs[best].loglik + 1e-9 * runs[best].loglik.abs().max(1.0) {
            best = k;
        }
    }
    let winner = &runs[best];
    if !winner.loglik.is_finite() {
        return Err(Error::OptimizerDiverged(
            "no start reached a finite likelihood".into(),
        ));
    }
    let theta_hat = winner.end.clone();
    let interior = (0..theta_hat.len()).all(|j| {
        let h = objective.step(&theta_hat, j);
        theta_hat[j] - h > bounds.lower[j] && theta_hat[j] + h < bounds.upper[j]
    });
    let stationarity_residual = if interior {
        Some(stationarity_residual(
            &family,
            &objective.grouped,
            &theta_hat,
        )?)
    } else {
        None
    };
    Ok(MleFit {
        loglik: winner.loglik,
        converged: winner.converged,
        theta_hat,
        stationarity_residual,
        starts: runs,
    })
}

/// Evaluates both sides of the first-order conditions from numerical
/// derivatives of `rho`, `b` and the laws.
fn stationarity_residual<F>(
    family: &F,
    grouped: &[(TypedVector, u64)],
    theta: &[f64],
) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<BranchingModel<f64>>,
{
    let model = family(theta)?;
    let pair = spectral_pair(&model)?;
    let r: u64 = grouped.iter().map(|(_, c)| c).sum();
    let mut worst: f64 = 0.0;
    for d in 0..theta.len() {
        let h = REL_STEP * theta[d].abs().max(1.0);
        let mut up = theta.to_vec();
        up[d] += h;
        let mut down = theta.to_vec();
        down[d] -= h;
        let (m_up, m_down) = (family(&up)?, family(&down)?);
        let (p_up, p_down) = (spectral_pair(&m_up)?, spectral_pair(&m_down)?);
        let d_rho = (p_up.rho - p_down.rho) / (2.0 * h);
        let d_b: Vec<f64> = p_up
            .b
            .iter()
            .zip(&p_down.b)
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        let mut lhs = 0.0;
        for (v, c) in grouped {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..model.dim() {
                let p = model.law(i).prob(v);
                let dp = (m_up.law(i).prob(v) - m_down.law(i).prob(v)) / (2.0 * h);
                num += dp * pair.b[i] + d_b[i] * p;
                den += p * pair.b[i];
            }
            lhs += *c as f64 * num / den;
        }
        let rhs = r as f64 / pair.rho * d_rho;
        worst = worst.max((lhs - rhs).abs() / r as f64);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::mitosis_model;

    fn sample_from_counts(n1: u64, nb: u64, n2: u64) -> Vec<TypedVector> {
        let mut s = Vec::new();
        s.extend(std::iter::repeat_n(TypedVector::from([2, 0]), n1 as usize));
        s.extend(std::iter::repeat_n(TypedVector::from([1, 1]), nb as usize));
        s.extend(std::iter::repeat_n(TypedVector::from([0, 2]), n2 as usize));
        s
    }

    fn mitosis_family(t: &[f64]) -> Result<BranchingModel<f64>> {
        mitosis_model(t[0], t[1])
    }

    fn box_() -> Bounds {
        Bounds::new(vec![1e-4, 1e-4], vec![1.0 - 1e-4, 1.0 - 1e-4]).unwrap()
    }

    #[test]
    fn recovers_expected_count_parameters() {
        let fit = amle_fit(
            mitosis_family,
            &sample_from_counts(52, 96, 252),
            &[0.5, 0.5],
            &box_(),
        )
        .unwrap();
        assert!((fit.theta_hat[0] - 0.9).abs() < 1e-4, "{:?}", fit.theta_hat);
        assert!((fit.theta_hat[1] - 0.7).abs() < 1e-4, "{:?}", fit.theta_hat);
        assert!(fit.converged);
        assert!(fit.stationarity_residual.unwrap() < 1e-4);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = sample_from_counts(1, 1, 1);
        assert!(matches!(
            amle_fit(mitosis_family, &s, &[1.5, 0.5], &box_()),
            Err(Error::ParameterOutOfRange(_))
        ));
        assert_eq!(
            amle_fit(mitosis_family, &[], &[0.5, 0.5], &box_()),
            Err(Error::EmptySample)
        );
    }
}

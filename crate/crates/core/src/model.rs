//! Offspring laws, multi-type branching models and their standing assumptions.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{count, lit, Real};
use crate::spectral::{is_positively_regular, perron, reproduction_matrix};

/// A vector of per-type counts (a brood, or a generation's composition).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypedVector(Vec<u64>);

impl TypedVector {
    pub fn new(counts: Vec<u64>) -> Self {
        Self(counts)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    /// Canonical basis vector `e_k`.
    pub fn unit(dim: usize, k: usize) -> Self {
        let mut v = vec![0; dim];
        v[k] = 1;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// L1 norm `|v|`.
    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<u64> {
        self.0
    }

    /// `self += times * other`, saturating on overflow.
    pub fn add_scaled(&mut self, other: &TypedVector, times: u64) {
        for (a, &b) in self.0.iter_mut().zip(&other.0) {
            *a = a.saturating_add(b.saturating_mul(times));
        }
    }
}

impl From<Vec<u64>> for TypedVector {
    fn from(v: Vec<u64>) -> Self {
        Self(v)
    }
}

impl<const N: usize> From<[u64; N]> for TypedVector {
    fn from(v: [u64; N]) -> Self {
        Self(v.to_vec())
    }
}

impl Index<usize> for TypedVector {
    type Output = u64;
    fn index(&self, i: usize) -> &u64 {
        &self.0[i]
    }
}

impl fmt::Display for TypedVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Finite-support probability mass function over typed offspring vectors,
/// the law of one parent type's brood.
#[derive(Clone, Debug, PartialEq)]
pub struct OffspringLaw<T> {
    dim: usize,
    support: Vec<TypedVector>,
    probs: Vec<T>,
}

impl<T: Real> OffspringLaw<T> {
    /// Builds a law from `(brood, probability)` pairs.
    ///
    /// Probabilities within `T::normalize_tol()` of summing to one are
    /// renormalized; anything further off is rejected. The zero vector and
    /// repeated support points are rejected.
    pub fn new(dim: usize, entries: Vec<(TypedVector, T)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::ParameterOutOfRange(
                "offspring law has empty support".into(),
            ));
        }
        let mut seen = HashSet::with_capacity(entries.len());
        let mut total = T::zero();
        for (v, p) in &entries {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.dim(),
                });
            }
            if v.is_zero() {
                return Err(Error::ZeroVectorInSupport);
            }
            if !(*p > T::zero()) || !p.is_finite() {
                return Err(Error::ParameterOutOfRange(format!(
                    "probability {p} of {v} must be positive"
                )));
            }
            if !seen.insert(v.clone()) {
                return Err(Error::DuplicateSupportPoint(v.as_slice().to_vec()));
            }
            total += *p;
        }
        if (total - T::one()).abs() > T::normalize_tol() {
            return Err(Error::ProbabilitiesDontSumToOne(
                total.to_f64().unwrap_or(f64::NAN),
            ));
        }
        let (support, probs) = entries.into_iter().map(|(v, p)| (v, p / total)).unzip();
        Ok(Self {
            dim,
            support,
            probs,
        })
    }

    /// Point mass at `v`.
    pub fn degenerate(v: TypedVector) -> Result<Self> {
        Self::new(v.dim(), vec![(v, T::one())])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &[TypedVector] {
        &self.support
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TypedVector, T)> + '_ {
        self.support.iter().zip(self.probs.iter().copied())
    }

    /// `p(v)`, zero off the support.
    pub fn prob(&self, v: &TypedVector) -> T {
        self.support
            .iter()
            .position(|s| s == v)
            .map_or(T::zero(), |i| self.probs[i])
    }

    /// Mean offspring vector `mu = sum_v v p(v)`.
    pub fn mean(&self) -> Vec<T> {
        let mut mu = vec![T::zero(); self.dim];
        for (v, p) in self.iter() {
            for (m, &c) in mu.iter_mut().zip(v.as_slice()) {
                *m += count::<T>(c) * p;
            }
        }
        mu
    }

    /// `E(|Y|^{-1})`.
    pub fn inverse_moment(&self) -> T {
        self.iter().map(|(v, p)| p / count::<T>(v.total())).sum()
    }

    /// `E(|Y|^2)`.
    pub fn second_moment(&self) -> T {
        self.iter()
            .map(|(v, p)| {
                let t = count::<T>(v.total());
                p * t * t
            })
            .sum()
    }

    /// `sum_k p(e_k)`, the mass on single-child broods.
    pub fn single_child_mass(&self) -> T {
        self.iter()
            .filter(|(v, _)| v.total() == 1)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn total_mass(&self) -> T {
        self.probs.iter().copied().sum()
    }
}

/// An `l`-type branching model: one offspring law per parent type.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchingModel<T> {
    type_names: Vec<String>,
    laws: Vec<OffspringLaw<T>>,
    /// `C = max_i E(|Y^(i)|^2)`
    second_moment_bound: T,
    /// `K = max_i E(|Y^(i)|^{-1})`
    inverse_moment_bound: T,
}

impl<T: Real> BranchingModel<T> {
    pub fn new(type_names: Vec<String>, laws: Vec<OffspringLaw<T>>) -> Result<Self> {
        let dim = laws.len();
        if dim < 2 {
            return Err(Error::ParameterOutOfRange(format!(
                "a multi-type model needs at least 2 types, got {dim}"
            )));
        }
        if type_names.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: type_names.len(),
            });
        }
        if let Some(law) = laws.iter().find(|law| law.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: law.dim(),
            });
        }
        let c = laws
            .iter()
            .map(OffspringLaw::second_moment)
            .fold(T::zero(), T::max);
        let k = laws
            .iter()
            .map(OffspringLaw::inverse_moment)
            .fold(T::zero(), T::max);
        Ok(Self {
            type_names,
            laws,
            second_moment_bound: c,
            inverse_moment_bound: k,
        })
    }

    /// Model with types named `1..=l`.
    pub fn from_laws(laws: Vec<OffspringLaw<T>>) -> Result<Self> {
        let names = (1..=laws.len()).map(|i| i.to_string()).collect();
        Self::new(names, laws)
    }

    pub fn dim(&self) -> usize {
        self.laws.len()
    }

    pub fn laws(&self) -> &[OffspringLaw<T>] {
        &self.laws
    }

    pub fn law(&self, parent_type: usize) -> &OffspringLaw<T> {
        &self.laws[parent_type]
    }

    pub fn type_names(&self) -> &[String] {
        &self.type_names
    }

    /// `(C, K)`.
    pub fn moment_bounds(&self) -> (T, T) {
        (self.second_moment_bound, self.inverse_moment_bound)
    }

    /// Union of all laws' supports, in first-appearance order.
    pub fn union_support(&self) -> Vec<TypedVector> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for law in &self.laws {
            for v in law.support() {
                if seen.insert(v) {
                    out.push(v.clone());
                }
            }
        }
        out
    }

    /// Re-labels types by `perm`: new type `i` is old type `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let dim = self.dim();
        if perm.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: perm.len(),
            });
        }
        let laws = perm
            .iter()
            .map(|&old| {
                let entries = self
                    .law(old)
                    .iter()
                    .map(|(v, p)| (TypedVector::new(perm.iter().map(|&o| v[o]).collect()), p))
                    .collect();
                OffspringLaw::new(dim, entries)
            })
            .collect::<Result<Vec<_>>>()?;
        let names = perm.iter().map(|&o| self.type_names[o].clone()).collect();
        Self::new(names, laws)
    }
}

/// Outcome of checking a model against the standing assumptions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport<T> {
    /// No zero vector in any support and `sum_k p_j(e_k) < 1` for every `j`.
    pub assumption1_ok: bool,
    /// Positive regularity and `rho > 1`.
    pub assumption2_ok: bool,
    pub positively_regular: bool,
    pub c: T,
    pub k: T,
    pub rho: Option<T>,
    /// `-log_rho(K)`; the admissible rate exponents are `(0, max_alpha)`.
    pub max_alpha: Option<T>,
    pub messages: Vec<String>,
}

pub fn validate_model<T: Real>(model: &BranchingModel<T>) -> ValidationReport<T> {
    let mut messages = Vec::new();
    let mut assumption1_ok = true;
    for (j, law) in model.laws().iter().enumerate() {
        let single = law.single_child_mass();
        if single >= T::one() - T::mass_tol() {
            assumption1_ok = false;
            messages.push(format!(
                "type {}: all mass on single-child broods (sum_k p(e_k) = {single})",
                model.type_names()[j]
            ));
        }
    }

    let m = reproduction_matrix(model);
    let positively_regular = is_positively_regular(&m);
    if !positively_regular {
        messages.push("reproduction matrix is not positively regular".into());
    }
    let rho = if positively_regular {
        match perron(&m) {
            Ok(pair) => Some(pair.rho),
            Err(e) => {
                messages.push(format!("Perron root unavailable: {e}"));
                None
            }
        }
    } else {
        None
    };
    let supercritical = rho.is_some_and(|r| r > T::one());
    if rho.is_some() && !supercritical {
        messages.push("largest eigenvalue does not exceed 1".into());
    }
    let (c, k) = model.moment_bounds();
    let max_alpha = rho.filter(|_| supercritical).map(|r| -k.ln() / r.ln());
    if let Some(a) = max_alpha {
        if a <= T::zero() {
            messages.push(format!("K = {k} >= 1 leaves no admissible rate exponent"));
        }
    }
    ValidationReport {
        assumption1_ok,
        assumption2_ok: positively_regular && supercritical,
        positively_regular,
        c,
        k,
        rho,
        max_alpha,
        messages,
    }
}

fn open_unit(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange(format!(
            "{name} = {x} must lie in (0, 1)"
        )))
    }
}

/// Two-type mitosis model: type 1 cells without a mutation, type 2 with.
///
/// Each cell has exactly two daughters. A type-1 parent's number of type-1
/// daughters is Binomial(2, theta); a type-2 parent's is Binomial(2, 1 - alpha).
pub fn mitosis_model<T: Real>(alpha: T, theta: T) -> Result<BranchingModel<T>> {
    open_unit("alpha", alpha.to_f64().unwrap_or(f64::NAN))?;
    open_unit("theta", theta.to_f64().unwrap_or(f64::NAN))?;
    let two = lit::<T>(2.0);
    let one = T::one();
    let split = |q: T| -> Result<OffspringLaw<T>> {
        OffspringLaw::new(
            2,
            vec![
                (TypedVector::from([2, 0]), q * q),
                (TypedVector::from([1, 1]), two * q * (one - q)),
                (TypedVector::from([0, 2]), (one - q) * (one - q)),
            ],
        )
    };
    BranchingModel::new(
        vec!["wild".into(), "mutant".into()],
        vec![split(theta)?, split(one - alpha)?],
    )
}

/// Respondent-driven sampling model parameters.
///
/// A respondent of type `x` hands out `n_x` surveys with `P(n_x = k)`
/// proportional to `1/k` on `1..=max_surveys[x]`; each survey independently
/// reaches type `y` with probability proportional to
/// `weights[x][y] * pop_props[y]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdsConfig<T> {
    pub type_names: Vec<String>,
    pub pop_props: Vec<T>,
    pub max_surveys: Vec<u32>,
    pub weights: Vec<Vec<T>>,
}

impl<T: Real> Default for RdsConfig<T> {
    /// Four groups: disclosing (A) and undisclosing (B) individuals with the
    /// condition, the community (C) and everyone else (D). Everyone triples
    /// the weight of A and doubles the community; only B and C know to triple B.
    fn default() -> Self {
        let w = |row: [f64; 4]| row.iter().map(|&x| lit(x)).collect();
        Self {
            type_names: ["A", "B", "C", "D"].iter().map(|s| s.to_string()).collect(),
            pop_props: [0.01, 0.01, 0.1, 0.88].iter().map(|&x| lit(x)).collect(),
            max_surveys: vec![10, 10, 7, 5],
            weights: vec![
                w([3.0, 1.0, 2.0, 1.0]),
                w([3.0, 3.0, 2.0, 1.0]),
                w([3.0, 3.0, 2.0, 1.0]),
                w([3.0, 1.0, 2.0, 1.0]),
            ],
        }
    }
}

impl<T: Real> RdsConfig<T> {
    fn check(&self) -> Result<()> {
        let l = self.pop_props.len();
        if l < 2 {
            return Err(Error::ParameterOutOfRange(
                "need at least 2 respondent types".into(),
            ));
        }
        for len in [
            self.type_names.len(),
            self.max_surveys.len(),
            self.weights.len(),
        ] {
            if len != l {
                return Err(Error::DimensionMismatch {
                    expected: l,
                    found: len,
                });
            }
        }
        if let Some(row) = self.weights.iter().find(|row| row.len() != l) {
            return Err(Error::DimensionMismatch {
                expected: l,
                found: row.len(),
            });
        }
        if self.pop_props.iter().any(|&p| !(p > T::zero())) {
            return Err(Error::ParameterOutOfRange(
                "population proportions must be positive".into(),
            ));
        }
        let total: T = self.pop_props.iter().copied().sum();
        if (total - T::one()).abs() > T::normalize_tol() {
            return Err(Error::ParameterOutOfRange(format!(
                "population proportions sum to {total}, not 1"
            )));
        }
        if self
            .weights
            .iter()
            .flatten()
            .any(|&w| w < T::zero() || !w.is_finite())
        {
            return Err(Error::ParameterOutOfRange(
                "weights must be nonnegative".into(),
            ));
        }
        if let Some(&n) = self
            .max_surveys
            .iter()
            .find(|&&n| n == 0 || n > MAX_SURVEYS)
        {
            return Err(Error::ParameterOutOfRange(format!(
                "max surveys {n} outside 1..={MAX_SURVEYS}"
            )));
        }
        Ok(())
    }

    /// `pi_x`, the distribution of the type receiving one of `x`'s surveys.
    pub fn referral_probs(&self, x: usize) -> Result<Vec<T>> {
        let raw: Vec<T> = self.weights[x]
            .iter()
            .zip(&self.pop_props)
            .map(|(&w, &p)| w * p)
            .collect();
        let total: T = raw.iter().copied().sum();
        if !(total > T::zero()) {
            return Err(Error::ParameterOutOfRange(format!(
                "type {x} refers nobody"
            )));
        }
        Ok(raw.into_iter().map(|w| w / total).collect())
    }

    /// `P(n_x = k)` for `k = 1..=N_x`.
    pub fn survey_count_probs(&self, x: usize) -> Vec<T> {
        let n = self.max_surveys[x];
        let harmonic: T = (1..=n).map(|k| T::one() / count::<T>(k as u64)).sum();
        (1..=n)
            .map(|k| T::one() / (count::<T>(k as u64) * harmonic))
            .collect()
    }

    /// `E(n_x)`.
    pub fn expected_surveys(&self, x: usize) -> T {
        self.survey_count_probs(x)
            .iter()
            .enumerate()
            .map(|(i, &p)| count::<T>(i as u64 + 1) * p)
            .sum()
    }
}

const MAX_SURVEYS: u32 = 30;

/// Builds the respondent-driven sampling model; the offspring law of type `x`
/// is the exact mixture over `k` of Multinomial(k, pi_x).
pub fn rds_model<T: Real>(config: &RdsConfig<T>) -> Result<BranchingModel<T>> {
    config.check()?;
    let l = config.pop_props.len();
    let factorials: Vec<u128> = std::iter::once(1u128)
        .chain((1..=MAX_SURVEYS as u128).scan(1u128, |acc, k| {
            *acc *= k;
            Some(*acc)
        }))
        .collect();

    let mut laws = Vec::with_capacity(l);
    for x in 0..l {
        let pi = config.referral_probs(x)?;
        let mut pmf: BTreeMap<Vec<u64>, T> = BTreeMap::new();
        for (k_minus_1, &pk) in config.survey_count_probs(x).iter().enumerate() {
            let k = k_minus_1 as u64 + 1;
            for_each_composition(k, l, &mut |parts: &[u64]| {
                let mut mass = pk;
                let mut coef = factorials[k as usize];
                for (&c, &p) in parts.iter().zip(&pi) {
                    coef /= factorials[c as usize];
                    if c > 0 {
                        mass *= p.powi(c as i32);
                    }
                }
                mass *= lit::<T>(coef as f64);
                if mass > T::zero() {
                    *pmf.entry(parts.to_vec()).or_insert_with(T::zero) += mass;
                }
            });
        }
        let entries = pmf
            .into_iter()
            .map(|(v, p)| (TypedVector::new(v), p))
            .collect();
        laws.push(OffspringLaw::new(l, entries)?);
    }
    BranchingModel::new(config.type_names.clone(), laws)
}

/// Calls `f` on every vector of `parts` nonnegative integers summing to `total`.
fn for_each_composition(total: u64, parts: usize, f: &mut impl FnMut(&[u64])) {
    fn go(rest: u64, slot: usize, buf: &mut Vec<u64>, f: &mut impl FnMut(&[u64])) {
        if slot + 1 == buf.len() {
            buf[slot] = rest;
            f(buf);
            return;
        }
        for c in (0..=rest).rev() {
            buf[slot] = c;
            go(rest - c, slot + 1, buf, f);
        }
    }
    let mut buf = vec![0; parts];
    go(total, 0, &mut buf, f);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tv<const N: usize>(v: [u64; N]) -> TypedVector {
        TypedVector::from(v)
    }

    #[test]
    fn mitosis_law_at_point_eight() {
        let law = OffspringLaw::<f64>::new(
            2,
            vec![(tv([2, 0]), 0.64), (tv([1, 1]), 0.32), (tv([0, 2]), 0.04)],
        )
        .unwrap();
        assert_eq!(law.len(), 3);
        assert_abs_diff_eq!(law.total_mass(), 1.0, epsilon = 1e-12);
        let model = mitosis_model(0.8, 0.8).unwrap();
        assert_eq!(model.law(0).support(), law.support());
        for (a, b) in model.law(0).probs().iter().zip(law.probs()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn rejects_bad_laws() {
        assert_eq!(
            OffspringLaw::<f64>::new(2, vec![(tv([0, 0]), 1.0)]),
            Err(Error::ZeroVectorInSupport)
        );
        assert_eq!(
            OffspringLaw::<f64>::new(2, vec![(tv([1, 0]), 0.5), (tv([1, 0]), 0.5)]),
            Err(Error::DuplicateSupportPoint(vec![1, 0]))
        );
        assert!(matches!(
            OffspringLaw::<f64>::new(2, vec![(tv([1, 0]), 0.5), (tv([2, 0]), 0.4)]),
            Err(Error::ProbabilitiesDontSumToOne(_))
        ));
        assert!(matches!(
            OffspringLaw::<f64>::new(2, vec![(tv([1, 0, 0]), 1.0)]),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 3
            })
        ));
    }

    #[test]
    fn renormalizes_small_drift() {
        let law = OffspringLaw::<f64>::new(2, vec![(tv([1, 0]), 0.5 + 4e-10), (tv([0, 1]), 0.5)])
            .unwrap();
        assert_abs_diff_eq!(law.total_mass(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn law_moments() {
        let m = mitosis_model(0.8, 0.8).unwrap();
        let mu = m.law(0).mean();
        assert_abs_diff_eq!(mu[0], 1.6, epsilon = 1e-12);
        assert_abs_diff_eq!(mu[1], 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(m.law(0).inverse_moment(), 0.5, epsilon = 1e-15);

        let point = OffspringLaw::<f64>::degenerate(tv([3, 1])).unwrap();
        assert_eq!(point.mean(), vec![3.0, 1.0]);
        let unit = OffspringLaw::<f64>::degenerate(tv([1, 0])).unwrap();
        assert_eq!(unit.inverse_moment(), 1.0);

        let two_point =
            OffspringLaw::<f64>::new(2, vec![(tv([1, 0]), 0.5), (tv([3, 0]), 0.5)]).unwrap();
        assert_abs_diff_eq!(two_point.inverse_moment(), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn mitosis_parameters() {
        let m = mitosis_model(0.5, 0.5).unwrap();
        for law in m.laws() {
            assert_eq!(law.probs(), &[0.25, 0.5, 0.25]);
        }
        assert!(matches!(
            mitosis_model(1.0, 0.5),
            Err(Error::ParameterOutOfRange(_))
        ));
        assert!(matches!(
            mitosis_model(0.5, 0.0),
            Err(Error::ParameterOutOfRange(_))
        ));
    }

    #[test]
    fn validation_of_mitosis() {
        let report = validate_model(&mitosis_model(0.8, 0.8).unwrap());
        assert!(report.assumption1_ok && report.assumption2_ok);
        assert_abs_diff_eq!(report.rho.unwrap(), 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(report.k, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(report.c, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.max_alpha.unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn degenerate_single_child_laws_fail_assumption_one() {
        let e1 = OffspringLaw::<f64>::degenerate(tv([1, 0])).unwrap();
        let model = BranchingModel::from_laws(vec![e1.clone(), e1]).unwrap();
        let report = validate_model(&model);
        assert!(!report.assumption1_ok);
        assert!(!report.assumption2_ok);
    }

    #[test]
    fn rds_referral_probabilities() {
        let cfg = RdsConfig::<f64>::default();
        let expected_ad = [0.026785714, 0.008928571, 0.178571429, 0.785714286];
        let expected_bc = [0.02631579, 0.02631579, 0.17543860, 0.77192982];
        for x in [0, 3] {
            for (a, b) in cfg.referral_probs(x).unwrap().iter().zip(expected_ad) {
                assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
            }
        }
        for x in [1, 2] {
            for (a, b) in cfg.referral_probs(x).unwrap().iter().zip(expected_bc) {
                assert_abs_diff_eq!(*a, b, epsilon = 1e-8);
            }
        }
        let h10: f64 = (1..=10).map(|k| 1.0 / k as f64).sum();
        assert_abs_diff_eq!(cfg.expected_surveys(0), 10.0 / h10, epsilon = 1e-12);
        assert_abs_diff_eq!(cfg.expected_surveys(0), 3.4141715, epsilon = 1e-7);
    }

    #[test]
    fn rds_laws_satisfy_wald_identity() {
        let cfg = RdsConfig::<f64>::default();
        let model = rds_model(&cfg).unwrap();
        for x in 0..4 {
            let law = model.law(x);
            assert_abs_diff_eq!(law.total_mass(), 1.0, epsilon = 1e-12);
            let en = cfg.expected_surveys(x);
            let pi = cfg.referral_probs(x).unwrap();
            for (m, p) in law.mean().iter().zip(pi) {
                assert_abs_diff_eq!(*m, en * p, epsilon = 1e-12);
            }
            assert!(law
                .support()
                .iter()
                .all(|v| v.total() >= 1 && v.total() <= cfg.max_surveys[x] as u64));
        }
        // all compositions of 1..=10 into 4 parts
        assert_eq!(model.law(0).len(), 1000);
    }

    #[test]
    fn rds_rejects_bad_config() {
        let mut cfg = RdsConfig::<f64>::default();
        cfg.pop_props[0] = 0.5;
        assert!(matches!(
            rds_model(&cfg),
            Err(Error::ParameterOutOfRange(_))
        ));
        let mut cfg = RdsConfig::<f64>::default();
        cfg.max_surveys[2] = 0;
        assert!(matches!(
            rds_model(&cfg),
            Err(Error::ParameterOutOfRange(_))
        ));
    }

    #[test]
    fn single_precision_model() {
        let m = mitosis_model(0.8f32, 0.8f32).unwrap();
        let report = validate_model(&m);
        assert!((report.rho.unwrap() - 2.0).abs() < 1e-5);
    }
}

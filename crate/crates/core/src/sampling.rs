//! Sampling individuals of the last generation and reporting their family sizes.
//!
//! A sample of `r` individuals drawn without replacement from generation `n`
//! reports, for each individual, the offspring vector of its parent. The
//! sampled broods are what the estimators see.

use std::collections::{BTreeMap, HashMap};

use num_traits::{FromPrimitive, Num};
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_model, BranchingModel, TypedVector};
use crate::rng::{SeedSpec, StreamKey};
use crate::scalar::Real;
use crate::sim::{simulate_to_families, FamilyStream, SimOptions};
use crate::spectral::SizeBiasedLaw;

/// Below this many families the sampler indexes families in memory instead of
/// replaying the stream.
pub const STORED_FALLBACK_LIMIT: u64 = 1_000_000;

/// A generation's families, enumerated type-major then by index.
pub trait FamilySource {
    /// Parent counts per type, `Z_{n-1}`.
    fn parents(&self) -> &TypedVector;
    /// Generation the children belong to, `n`.
    fn child_generation(&self) -> usize;
    fn brood(&self, parent_type: usize, parent_index: u64) -> TypedVector;

    /// Calls `f(parent_type, parent_index, |brood|)` for every family in order.
    fn for_each_size(&self, f: &mut dyn FnMut(usize, u64, u64)) {
        for (t, &count) in self.parents().as_slice().iter().enumerate() {
            for s in 0..count {
                f(t, s, self.brood(t, s).total());
            }
        }
    }

    fn family_count(&self) -> u64 {
        self.parents().total()
    }
}

impl FamilySource for FamilyStream {
    fn parents(&self) -> &TypedVector {
        FamilyStream::parents(self)
    }

    fn child_generation(&self) -> usize {
        self.generation() + 1
    }

    fn brood(&self, parent_type: usize, parent_index: u64) -> TypedVector {
        let prefix = self.seed().family_prefix(self.generation(), parent_type);
        let j = self.support_index(prefix, parent_type, parent_index);
        self.tables().brood(parent_type, j).clone()
    }

    fn for_each_size(&self, f: &mut dyn FnMut(usize, u64, u64)) {
        self.for_each_family(|fam| f(fam.parent_type, fam.parent_index, fam.size));
    }
}

/// Explicitly listed families, mainly for tests and CSV input.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredFamilies {
    parents: TypedVector,
    broods: Vec<Vec<TypedVector>>,
    generation: usize,
}

impl StoredFamilies {
    /// `families` lists `(parent_type, brood)`; indices are assigned in order
    /// of appearance within each type.
    pub fn new(dim: usize, generation: usize, families: Vec<(usize, TypedVector)>) -> Result<Self> {
        let mut broods = vec![Vec::new(); dim];
        for (t, brood) in families {
            if t >= dim || brood.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: brood.dim().max(t + 1),
                });
            }
            if brood.is_zero() {
                return Err(Error::ZeroVectorInSupport);
            }
            broods[t].push(brood);
        }
        let parents = TypedVector::new(broods.iter().map(|b| b.len() as u64).collect());
        if parents.total() == 0 {
            return Err(Error::InvalidSampleSize("no families".into()));
        }
        Ok(Self {
            parents,
            broods,
            generation,
        })
    }
}

impl FamilySource for StoredFamilies {
    fn parents(&self) -> &TypedVector {
        &self.parents
    }

    fn child_generation(&self) -> usize {
        self.generation
    }

    fn brood(&self, parent_type: usize, parent_index: u64) -> TypedVector {
        self.broods[parent_type][parent_index as usize].clone()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledBrood {
    pub brood: TypedVector,
    pub parent_type: usize,
    pub parent_index: u64,
}

/// `r` sampled individuals, in draw order, each with its parent's brood.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilySample {
    pub records: Vec<SampledBrood>,
    pub generation: usize,
    pub population_total: u64,
}

impl FamilySample {
    pub fn r(&self) -> usize {
        self.records.len()
    }

    pub fn broods(&self) -> Vec<TypedVector> {
        self.records.iter().map(|r| r.brood.clone()).collect()
    }
}

/// How many individuals to sample at generation `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleSizeRule {
    Fixed {
        r: u64,
    },
    /// `r_n = round(n^exponent)`
    Polynomial {
        exponent: f64,
    },
    /// Explicit `(n, r_n)` pairs.
    Custom {
        table: BTreeMap<usize, u64>,
    },
}

impl Default for SampleSizeRule {
    fn default() -> Self {
        SampleSizeRule::Polynomial { exponent: 2.0 }
    }
}

impl SampleSizeRule {
    pub fn r_for(&self, n: usize) -> Result<u64> {
        let r = match self {
            SampleSizeRule::Fixed { r } => *r,
            SampleSizeRule::Polynomial { exponent } => (n as f64).powf(*exponent).round() as u64,
            SampleSizeRule::Custom { table } => *table.get(&n).ok_or_else(|| {
                Error::InvalidSampleSize(format!("no sample size given for n = {n}"))
            })?,
        };
        if r == 0 {
            return Err(Error::InvalidSampleSize(format!(
                "rule gives r = 0 at n = {n}"
            )));
        }
        Ok(r)
    }

    /// `r_n^2 rho^{-n}`, which must vanish for the asymptotics to apply.
    pub fn validity(&self, n: usize, rho: f64) -> Result<f64> {
        let r = self.r_for(n)? as f64;
        Ok(r * r * rho.powi(-(n as i32)))
    }
}

/// Draws `r` distinct individuals uniformly from the children of `source`.
///
/// Individuals are numbered consecutively through the families in stream
/// order. A first pass learns the total, `r` distinct indices are drawn, and
/// a second pass locates their families. Small generations are indexed in
/// memory instead; both paths return the same sample.
pub fn draw_family_sample<S: FamilySource + ?Sized>(
    source: &S,
    r: u64,
    key: StreamKey,
) -> Result<FamilySample> {
    if source.family_count() <= STORED_FALLBACK_LIMIT {
        draw_stored(source, r, key)
    } else {
        draw_streaming(source, r, key)
    }
}

fn population_total<S: FamilySource + ?Sized>(source: &S) -> u64 {
    let mut total = 0u64;
    source.for_each_size(&mut |_, _, size| total += size);
    total
}

fn choose_indices(population: u64, r: u64, key: StreamKey) -> Result<Vec<u64>> {
    if r > population {
        return Err(Error::SampleExceedsPopulation { r, population });
    }
    let mut rng = key.rng();
    Ok(index::sample(&mut rng, population as usize, r as usize)
        .into_iter()
        .map(|i| i as u64)
        .collect())
}

fn draw_streaming<S: FamilySource + ?Sized>(
    source: &S,
    r: u64,
    key: StreamKey,
) -> Result<FamilySample> {
    let population = population_total(source);
    let chosen = choose_indices(population, r, key)?;
    let mut order: Vec<(u64, usize)> = chosen
        .iter()
        .enumerate()
        .map(|(pos, &i)| (i, pos))
        .collect();
    order.sort_unstable();
    let mut hits: Vec<Option<(usize, u64)>> = vec![None; chosen.len()];
    let mut next = 0;
    let mut start = 0u64;
    source.for_each_size(&mut |t, s, size| {
        let end = start + size;
        while next < order.len() && order[next].0 < end {
            hits[order[next].1] = Some((t, s));
            next += 1;
        }
        start = end;
    });
    let records = hits
        .into_iter()
        .map(|h| {
            let (t, s) = h.expect("every index falls in some family");
            SampledBrood {
                brood: source.brood(t, s),
                parent_type: t,
                parent_index: s,
            }
        })
        .collect();
    Ok(FamilySample {
        records,
        generation: source.child_generation(),
        population_total: population,
    })
}

fn draw_stored<S: FamilySource + ?Sized>(
    source: &S,
    r: u64,
    key: StreamKey,
) -> Result<FamilySample> {
    let mut ends = Vec::with_capacity(source.family_count() as usize);
    let mut total = 0u64;
    source.for_each_size(&mut |_, _, size| {
        total += size;
        ends.push(total);
    });
    let chosen = choose_indices(total, r, key)?;
    let offsets: Vec<u64> = source
        .parents()
        .as_slice()
        .iter()
        .scan(0u64, |acc, &c| {
            let start = *acc;
            *acc += c;
            Some(start)
        })
        .collect();
    let records = chosen
        .into_iter()
        .map(|i| {
            let ordinal = ends.partition_point(|&e| e <= i) as u64;
            let t = offsets.partition_point(|&o| o <= ordinal) - 1;
            let s = ordinal - offsets[t];
            SampledBrood {
                brood: source.brood(t, s),
                parent_type: t,
                parent_index: s,
            }
        })
        .collect();
    Ok(FamilySample {
        records,
        generation: source.child_generation(),
        population_total: total,
    })
}

#[doc(hidden)]
pub fn draw_family_sample_streaming<S: FamilySource + ?Sized>(
    source: &S,
    r: u64,
    key: StreamKey,
) -> Result<FamilySample> {
    draw_streaming(source, r, key)
}

/// The non-sibling event: every sampled individual has a different parent.
pub fn is_non_sibling(sample: &FamilySample) -> bool {
    let mut seen = std::collections::HashSet::with_capacity(sample.records.len());
    sample
        .records
        .iter()
        .all(|rec| seen.insert((rec.parent_type, rec.parent_index)))
}

/// Exact probability that `r` individuals drawn without replacement from
/// families of the given sizes all come from different families.
///
/// Equals `e_r(c) / C(N, r)` with `e_r` the elementary symmetric polynomial of
/// the sizes. It is computed in the scaled form `k! e_k(c/N)`, which stays in
/// `[0, 1]`, with families of equal size handled together.
pub fn prob_distinct_exact<T>(family_sizes: &[u64], r: u64) -> Result<T>
where
    T: Clone + Num + FromPrimitive,
{
    let mut histogram = BTreeMap::new();
    for &c in family_sizes {
        if c == 0 {
            return Err(Error::InvalidSampleSize(
                "family sizes must be positive".into(),
            ));
        }
        *histogram.entry(c).or_insert(0u64) += 1;
    }
    prob_distinct_from_histogram(&histogram, r)
}

/// [`prob_distinct_exact`] with the sizes given as `size -> multiplicity`.
pub fn prob_distinct_from_histogram<T>(histogram: &BTreeMap<u64, u64>, r: u64) -> Result<T>
where
    T: Clone + Num + FromPrimitive,
{
    let total: u64 = histogram.iter().map(|(&c, &m)| c * m).sum();
    if r > total {
        return Err(Error::InvalidSampleSize(format!(
            "r = {r} exceeds population {total}"
        )));
    }
    if r <= 1 {
        return Ok(T::one());
    }
    let families: u64 = histogram.values().sum();
    if r > families {
        return Ok(T::zero());
    }
    let num = |x: u64| T::from_u64(x).expect("representable count");
    let n_total = num(total);
    let r = r as usize;
    // g[k] = k! e_k(c / N) over the groups processed so far
    let mut g = vec![T::zero(); r + 1];
    g[0] = T::one();
    let mut degree = 0usize;
    for (&c, &m) in histogram {
        let x = num(c) / n_total.clone();
        let top = (m as usize).min(r);
        // q[i] = m (m-1) ... (m-i+1) x^i
        let mut q = Vec::with_capacity(top + 1);
        q.push(T::one());
        for i in 1..=top {
            let prev = q[i - 1].clone();
            q.push(prev * num(m - i as u64 + 1) * x.clone());
        }
        degree = (degree + top).min(r);
        for k in (1..=degree).rev() {
            let mut acc = g[k].clone();
            let mut binom = T::one();
            for i in 1..=k.min(top) {
                binom = binom * num((k - i + 1) as u64) / num(i as u64);
                acc = acc + binom.clone() * g[k - i].clone() * q[i].clone();
            }
            g[k] = acc;
        }
    }
    let mut falling = T::one();
    for a in 0..r {
        falling = falling * (T::one() - num(a as u64) / n_total.clone());
    }
    Ok(g[r].clone() / falling)
}

/// Family-size histogram of a generation's families.
pub fn size_histogram<S: FamilySource + ?Sized>(source: &S) -> BTreeMap<u64, u64> {
    let mut hist = BTreeMap::new();
    source.for_each_size(&mut |_, _, size| *hist.entry(size).or_insert(0) += 1);
    hist
}

/// Monte Carlo summary of `P(D_n)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbDistinctEstimate {
    pub n: usize,
    pub r: u64,
    /// Mean over replicates of the exact conditional probability.
    pub estimate: f64,
    pub std_error: f64,
    pub ci: (f64, f64),
    /// `rho^{alpha n} r^{-2} (1 - estimate)` at `alpha`.
    pub rate_diag: Option<f64>,
    pub alpha: Option<f64>,
    /// Mean of `1 - r(r-1)/|Z_{n-1}|`.
    pub mean_lower_bound: f64,
    /// Fraction of replicates whose drawn sample had no siblings.
    pub non_sibling_frequency: f64,
    pub per_replicate: Vec<f64>,
}

/// Averages the exact conditional `P(D_n | Z_{n-1}, families)` over simulated
/// trees. Each replicate also draws one actual sample to record the indicator.
pub fn estimate_prob_distinct<T: Real>(
    model: &BranchingModel<T>,
    z0: &TypedVector,
    n: usize,
    rule: &SampleSizeRule,
    replicates: usize,
    seed: SeedSpec,
) -> Result<ProbDistinctEstimate> {
    if replicates == 0 {
        return Err(Error::InvalidSampleSize(
            "need at least one replicate".into(),
        ));
    }
    let r = rule.r_for(n)?;
    let options = SimOptions::default();
    let rows: Vec<(f64, f64, bool)> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let seed = seed.with_replicate(rep as u64);
            let (_, stream) = simulate_to_families(model, z0, n, seed, &options)?;
            let hist = size_histogram(&stream);
            let p: f64 = prob_distinct_from_histogram(&hist, r)?;
            let m = stream.family_count() as f64;
            let bound = 1.0 - (r as f64) * (r as f64 - 1.0) / m;
            let sample = draw_family_sample(&stream, r, seed.sampling_key(n))?;
            Ok((p, bound, is_non_sibling(&sample)))
        })
        .collect::<Result<_>>()?;
    let k = rows.len() as f64;
    let per_replicate: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let estimate = per_replicate.iter().sum::<f64>() / k;
    let var = if rows.len() > 1 {
        per_replicate
            .iter()
            .map(|p| (p - estimate).powi(2))
            .sum::<f64>()
            / (k - 1.0)
    } else {
        0.0
    };
    let std_error = (var / k).sqrt();
    let z = crate::estimators::normal_quantile(0.975);
    let report = validate_model(model);
    let alpha = report
        .max_alpha
        .and_then(|a| a.to_f64())
        .filter(|a| *a > 0.0)
        .map(|a| a / 2.0);
    let rate_diag = match (alpha, report.rho) {
        (Some(a), Some(rho)) => {
            let rho = rho.to_f64().unwrap();
            Some(rho.powf(a * n as f64) / (r as f64 * r as f64) * (1.0 - estimate))
        }
        _ => None,
    };
    Ok(ProbDistinctEstimate {
        n,
        r,
        estimate,
        std_error,
        ci: (estimate - z * std_error, estimate + z * std_error),
        rate_diag,
        alpha,
        mean_lower_bound: rows.iter().map(|r| r.1).sum::<f64>() / k,
        non_sibling_frequency: rows.iter().filter(|r| r.2).count() as f64 / k,
        per_replicate,
    })
}

/// Joint law of the broods of two individuals drawn without replacement.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairPmf<T> {
    pub support: Vec<TypedVector>,
    /// `probs[a][b] = P(X_1 = support[a], X_2 = support[b])`
    pub probs: Vec<Vec<T>>,
}

impl<T: Real> PairPmf<T> {
    pub fn prob(&self, u: &TypedVector, v: &TypedVector) -> T {
        let a = self.support.iter().position(|s| s == u);
        let b = self.support.iter().position(|s| s == v);
        match (a, b) {
            (Some(a), Some(b)) => self.probs[a][b],
            _ => T::zero(),
        }
    }

    pub fn total_mass(&self) -> T {
        self.probs.iter().flatten().copied().sum()
    }

    pub fn marginal(&self) -> Vec<T> {
        self.probs
            .iter()
            .map(|row| row.iter().copied().sum())
            .collect()
    }
}

const PAIR_ENUMERATION_LIMIT: u128 = 10_000_000;

/// `P(X_1 = u, X_2 = v | Z_{n-1} = z_prev)` by enumerating every assignment of
/// broods to the parents and every ordered pair of distinct children.
pub fn pair_pmf_exact<T: Real>(
    model: &BranchingModel<T>,
    z_prev: &TypedVector,
) -> Result<PairPmf<T>> {
    if z_prev.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: z_prev.dim(),
        });
    }
    let m = z_prev.total();
    let mut assignments: u128 = 1;
    for (t, &c) in z_prev.as_slice().iter().enumerate() {
        for _ in 0..c {
            assignments = assignments.saturating_mul(model.law(t).len() as u128);
        }
    }
    if m > 8 || assignments > PAIR_ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge(format!(
            "{m} parents with {assignments} brood assignments"
        )));
    }
    let support = model.union_support();
    let position: HashMap<&TypedVector, usize> =
        support.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let parent_types: Vec<usize> = z_prev
        .as_slice()
        .iter()
        .enumerate()
        .flat_map(|(t, &c)| std::iter::repeat_n(t, c as usize))
        .collect();
    let k = support.len();
    let mut probs = vec![vec![T::zero(); k]; k];
    let sizes: Vec<u64> = support.iter().map(TypedVector::total).collect();
    let mut chosen: Vec<usize> = Vec::with_capacity(parent_types.len());
    let tables = Enumeration {
        model,
        parent_types: &parent_types,
        position: &position,
        sizes: &sizes,
    };
    tables.visit(T::one(), &mut chosen, &mut probs)?;
    Ok(PairPmf { support, probs })
}

struct Enumeration<'a, T> {
    model: &'a BranchingModel<T>,
    parent_types: &'a [usize],
    position: &'a HashMap<&'a TypedVector, usize>,
    sizes: &'a [u64],
}

impl<T: Real> Enumeration<'_, T> {
    /// `chosen[f]` is the union-support index of parent `f`'s brood.
    fn visit(&self, weight: T, chosen: &mut Vec<usize>, probs: &mut [Vec<T>]) -> Result<()> {
        let depth = chosen.len();
        if depth == self.parent_types.len() {
            let sizes: Vec<u64> = chosen.iter().map(|&a| self.sizes[a]).collect();
            let total: u64 = sizes.iter().sum();
            if total < 2 {
                return Err(Error::InvalidSampleSize(
                    "a brood assignment has fewer than two children".into(),
                ));
            }
            let pairs = count::<T>(total) * count::<T>(total - 1);
            for f in 0..chosen.len() {
                for g in 0..chosen.len() {
                    let ordered = if f == g {
                        sizes[f] * (sizes[f] - 1)
                    } else {
                        sizes[f] * sizes[g]
                    };
                    if ordered > 0 {
                        probs[chosen[f]][chosen[g]] += weight * count::<T>(ordered) / pairs;
                    }
                }
            }
            return Ok(());
        }
        for (brood, p) in self.model.law(self.parent_types[depth]).iter() {
            chosen.push(self.position[brood]);
            self.visit(weight * p, chosen, probs)?;
            chosen.pop();
        }
        Ok(())
    }
}

fn count<T: Real>(x: u64) -> T {
    crate::scalar::count(x)
}

/// Total-variation distances between sampled broods and `p_S`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TvReport {
    /// Pooled empirical law of all reported broods against `p_S`.
    pub marginal: f64,
    /// Empirical law of the first two broods of each sample against
    /// `p_S x p_S`; `None` when no sample has two records.
    pub pair: Option<f64>,
}

pub fn empirical_tv_to_limit<T: Real>(samples: &[FamilySample], ps: &SizeBiasedLaw<T>) -> TvReport {
    let limit: HashMap<&TypedVector, f64> =
        ps.iter().map(|(v, p)| (v, p.to_f64().unwrap())).collect();
    let lookup = |v: &TypedVector| limit.get(v).copied().unwrap_or(0.0);

    let mut counts: HashMap<&TypedVector, u64> = HashMap::new();
    let mut pooled = 0u64;
    let mut pair_counts: HashMap<(&TypedVector, &TypedVector), u64> = HashMap::new();
    let mut pairs = 0u64;
    for s in samples {
        for rec in &s.records {
            *counts.entry(&rec.brood).or_insert(0) += 1;
            pooled += 1;
        }
        if s.records.len() >= 2 {
            *pair_counts
                .entry((&s.records[0].brood, &s.records[1].brood))
                .or_insert(0) += 1;
            pairs += 1;
        }
    }
    let marginal = if pooled == 0 {
        1.0
    } else {
        let mut diff: f64 = counts
            .iter()
            .map(|(v, &c)| (c as f64 / pooled as f64 - lookup(v)).abs())
            .sum();
        diff += limit
            .iter()
            .filter(|(v, _)| !counts.contains_key(*v))
            .map(|(_, p)| p)
            .sum::<f64>();
        diff / 2.0
    };
    let pair = (pairs > 0).then(|| {
        let mut diff = 0.0;
        let mut covered = 0.0;
        for ((u, v), &c) in &pair_counts {
            let target = lookup(u) * lookup(v);
            covered += target;
            diff += (c as f64 / pairs as f64 - target).abs();
        }
        (diff + (1.0 - covered).max(0.0)) / 2.0
    });
    TvReport { marginal, pair }
}

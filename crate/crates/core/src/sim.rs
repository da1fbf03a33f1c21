//! Forward simulation of the branching recursion.
//!
//! Generations before the sampled one are advanced in aggregate: for each
//! parent type the number of parents choosing each support point is drawn as
//! one multinomial, so a step costs `O(l * support)` regardless of population
//! size. The generation that gets sampled is instead exposed as a
//! [`FamilyStream`], in which every parent's brood is a pure function of its
//! `(generation, type, index)` address.

use std::sync::Arc;

use rand::distr::Distribution;
use rand_distr::Binomial;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BranchingModel, TypedVector};
use crate::rng::{SeedSpec, StreamKey};
use crate::scalar::Real;
use crate::spectral::PerronPair;

pub const DEFAULT_POPULATION_CAP: u64 = 1 << 40;

/// How an aggregate step draws the broods of `Z_{k,i}` parents.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StepMode {
    /// One multinomial over the support per parent type.
    #[default]
    Multinomial,
    /// One draw per parent from the same streams [`FamilyStream`] uses.
    PerFamily,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimOptions {
    pub population_cap: u64,
    pub mode: StepMode,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            population_cap: DEFAULT_POPULATION_CAP,
            mode: StepMode::Multinomial,
        }
    }
}

/// `Z_0..Z_n` together with the child totals `S_{k,i}` of each parent type.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenerationTrace {
    pub z: Vec<TypedVector>,
    /// `s[k][i]`: children born to type-`i` parents of generation `k`.
    pub s: Vec<Vec<u64>>,
    #[serde(skip)]
    pub seed: SeedSpec,
}

impl GenerationTrace {
    /// Number of simulated generations `n` (the trace holds `n + 1` vectors).
    pub fn generations(&self) -> usize {
        self.z.len() - 1
    }

    pub fn last(&self) -> &TypedVector {
        self.z.last().expect("trace holds Z_0")
    }

    /// Checks `|Z_{k+1}| = sum_i S_{k,i}`, `S_{k,i} >= Z_{k,i}` and `|Z_k| >= 1`.
    pub fn check_consistency(&self) -> std::result::Result<(), String> {
        if self.s.len() + 1 != self.z.len() {
            return Err(format!(
                "{} S rows for {} generations",
                self.s.len(),
                self.z.len()
            ));
        }
        for (k, z) in self.z.iter().enumerate() {
            if z.total() == 0 {
                return Err(format!("generation {k} is extinct"));
            }
        }
        for (k, s) in self.s.iter().enumerate() {
            let total: u64 = s.iter().sum();
            if total != self.z[k + 1].total() {
                return Err(format!(
                    "|Z_{}| = {} but sum S = {total}",
                    k + 1,
                    self.z[k + 1].total()
                ));
            }
            if let Some(i) = (0..s.len()).find(|&i| s[i] < self.z[k][i]) {
                return Err(format!("S_{{{k},{i}}} = {} < Z = {}", s[i], self.z[k][i]));
            }
        }
        Ok(())
    }
}

/// Per-type cumulative tables used for drawing broods.
#[derive(Clone, Debug)]
pub struct BroodTables {
    types: Vec<TypeTable>,
}

#[derive(Clone, Debug)]
struct TypeTable {
    support: Vec<TypedVector>,
    sizes: Vec<u64>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl BroodTables {
    pub fn new<T: Real>(model: &BranchingModel<T>) -> Self {
        let types = model
            .laws()
            .iter()
            .map(|law| {
                let probs: Vec<f64> = law.probs().iter().map(|p| p.to_f64().unwrap()).collect();
                let mut acc = 0.0;
                let mut cumulative: Vec<f64> = probs
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect();
                *cumulative.last_mut().unwrap() = 1.0;
                TypeTable {
                    support: law.support().to_vec(),
                    sizes: law.support().iter().map(TypedVector::total).collect(),
                    probs,
                    cumulative,
                }
            })
            .collect();
        Self { types }
    }

    pub fn dim(&self) -> usize {
        self.types.len()
    }

    #[inline]
    fn categorical(&self, parent_type: usize, u: f64) -> usize {
        let cum = &self.types[parent_type].cumulative;
        cum.partition_point(|&c| c <= u).min(cum.len() - 1)
    }

    pub fn brood(&self, parent_type: usize, support_index: usize) -> &TypedVector {
        &self.types[parent_type].support[support_index]
    }

    pub fn brood_size(&self, parent_type: usize, support_index: usize) -> u64 {
        self.types[parent_type].sizes[support_index]
    }

    /// Multinomial counts of `trials` draws over `parent_type`'s support.
    fn multinomial(&self, parent_type: usize, trials: u64, key: StreamKey) -> Vec<u64> {
        let probs = &self.types[parent_type].probs;
        let mut counts = vec![0; probs.len()];
        let mut rng = key.rng();
        let mut remaining = trials;
        let mut remaining_mass = 1.0;
        for (j, &p) in probs.iter().enumerate() {
            if remaining == 0 {
                break;
            }
            if j + 1 == probs.len() {
                counts[j] = remaining;
                break;
            }
            let q = (p / remaining_mass).clamp(0.0, 1.0);
            let x = Binomial::new(remaining, q)
                .expect("valid binomial")
                .sample(&mut rng);
            counts[j] = x;
            remaining -= x;
            remaining_mass -= p;
        }
        counts
    }
}

fn check_start(dim: usize, z0: &TypedVector) -> Result<()> {
    if z0.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: z0.dim(),
        });
    }
    if z0.total() == 0 {
        return Err(Error::ParameterOutOfRange(
            "initial population must be nonempty".into(),
        ));
    }
    Ok(())
}

pub fn simulate_aggregate<T: Real>(
    model: &BranchingModel<T>,
    z0: &TypedVector,
    n: usize,
    seed: SeedSpec,
) -> Result<GenerationTrace> {
    simulate_aggregate_with(model, z0, n, seed, &SimOptions::default())
}

pub fn simulate_aggregate_with<T: Real>(
    model: &BranchingModel<T>,
    z0: &TypedVector,
    n: usize,
    seed: SeedSpec,
    options: &SimOptions,
) -> Result<GenerationTrace> {
    check_start(model.dim(), z0)?;
    let tables = Arc::new(BroodTables::new(model));
    advance(&tables, z0.clone(), 0, n, seed, options)
}

fn advance(
    tables: &Arc<BroodTables>,
    z0: TypedVector,
    start_generation: usize,
    steps: usize,
    seed: SeedSpec,
    options: &SimOptions,
) -> Result<GenerationTrace> {
    let dim = tables.dim();
    let mut z = Vec::with_capacity(steps + 1);
    let mut s = Vec::with_capacity(steps);
    z.push(z0);
    for k in start_generation..start_generation + steps {
        let current = z.last().unwrap();
        let (next, totals) = match options.mode {
            StepMode::Multinomial => {
                let mut next = TypedVector::zeros(dim);
                let mut totals = vec![0u64; dim];
                for (i, &parents) in current.as_slice().iter().enumerate() {
                    if parents == 0 {
                        continue;
                    }
                    let counts = tables.multinomial(i, parents, seed.aggregate_key(k, i));
                    for (j, &c) in counts.iter().enumerate() {
                        if c > 0 {
                            next.add_scaled(tables.brood(i, j), c);
                            totals[i] =
                                totals[i].saturating_add(c.saturating_mul(tables.brood_size(i, j)));
                        }
                    }
                }
                (next, totals)
            }
            StepMode::PerFamily => {
                let stream = FamilyStream::new(Arc::clone(tables), current.clone(), k, seed);
                stream.offspring()
            }
        };
        if next.total() > options.population_cap {
            return Err(Error::PopulationOverflow {
                generation: k + 1,
                size: next.total(),
                cap: options.population_cap,
            });
        }
        z.push(next);
        s.push(totals);
    }
    Ok(GenerationTrace { z, s, seed })
}

/// One parent of the streamed generation and its brood.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FamilyRecord {
    pub parent_type: usize,
    pub parent_index: u64,
    pub brood: TypedVector,
}

/// Lightweight address of a family; the brood lives in [`BroodTables`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FamilyRef {
    pub parent_type: usize,
    pub parent_index: u64,
    pub support_index: usize,
    pub size: u64,
}

/// The families of generation `generation`, enumerated type-major then by
/// index. Iterating twice yields identical records; nothing is stored.
#[derive(Clone, Debug)]
pub struct FamilyStream {
    tables: Arc<BroodTables>,
    parents: TypedVector,
    generation: usize,
    seed: SeedSpec,
}

impl FamilyStream {
    pub fn new(
        tables: Arc<BroodTables>,
        parents: TypedVector,
        generation: usize,
        seed: SeedSpec,
    ) -> Self {
        Self {
            tables,
            parents,
            generation,
            seed,
        }
    }

    pub fn parents(&self) -> &TypedVector {
        &self.parents
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn seed(&self) -> SeedSpec {
        self.seed
    }

    pub fn tables(&self) -> &BroodTables {
        &self.tables
    }

    /// Number of families, `|Z_{n-1}|`.
    pub fn family_count(&self) -> u64 {
        self.parents.total()
    }

    /// Support index of the brood of parent `(parent_type, parent_index)`.
    #[inline]
    pub fn support_index(&self, prefix: StreamKey, parent_type: usize, parent_index: u64) -> usize {
        self.tables
            .categorical(parent_type, prefix.child(parent_index).first_unit())
    }

    pub fn for_each_family(&self, mut f: impl FnMut(FamilyRef)) {
        for (parent_type, &count) in self.parents.as_slice().iter().enumerate() {
            let prefix = self.seed.family_prefix(self.generation, parent_type);
            for parent_index in 0..count {
                let support_index = self.support_index(prefix, parent_type, parent_index);
                f(FamilyRef {
                    parent_type,
                    parent_index,
                    support_index,
                    size: self.tables.brood_size(parent_type, support_index),
                });
            }
        }
    }

    pub fn brood(&self, family: &FamilyRef) -> &TypedVector {
        self.tables.brood(family.parent_type, family.support_index)
    }

    pub fn iter(&self) -> impl Iterator<Item = FamilyRecord> + '_ {
        self.parents
            .as_slice()
            .iter()
            .enumerate()
            .flat_map(move |(parent_type, &count)| {
                let prefix = self.seed.family_prefix(self.generation, parent_type);
                (0..count).map(move |parent_index| {
                    let j = self.support_index(prefix, parent_type, parent_index);
                    FamilyRecord {
                        parent_type,
                        parent_index,
                        brood: self.tables.brood(parent_type, j).clone(),
                    }
                })
            })
    }

    /// Brood sizes in stream order.
    pub fn sizes(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.family_count() as usize);
        self.for_each_family(|f| out.push(f.size));
        out
    }

    /// `(Z_n, S_{n-1,.})` obtained by summing every brood.
    pub fn offspring(&self) -> (TypedVector, Vec<u64>) {
        let dim = self.tables.dim();
        let mut next = TypedVector::zeros(dim);
        let mut totals = vec![0u64; dim];
        self.for_each_family(|f| {
            next.add_scaled(self.brood(&f), 1);
            totals[f.parent_type] += f.size;
        });
        (next, totals)
    }
}

/// Streams the families of generation `z_prev` belongs to (`generation`).
pub fn materialize_families<T: Real>(
    model: &BranchingModel<T>,
    z_prev: &TypedVector,
    generation: usize,
    seed: SeedSpec,
) -> Result<FamilyStream> {
    check_start(model.dim(), z_prev)?;
    Ok(FamilyStream::new(
        Arc::new(BroodTables::new(model)),
        z_prev.clone(),
        generation,
        seed,
    ))
}

/// Simulates `Z_0..Z_{n-1}` in aggregate and returns the families of
/// generation `n - 1`, whose children form generation `n`.
pub fn simulate_to_families<T: Real>(
    model: &BranchingModel<T>,
    z0: &TypedVector,
    n: usize,
    seed: SeedSpec,
    options: &SimOptions,
) -> Result<(GenerationTrace, FamilyStream)> {
    if n == 0 {
        return Err(Error::ParameterOutOfRange("sampling needs n >= 1".into()));
    }
    check_start(model.dim(), z0)?;
    let tables = Arc::new(BroodTables::new(model));
    let trace = advance(&tables, z0.clone(), 0, n - 1, seed, options)?;
    let stream = FamilyStream::new(tables, trace.last().clone(), n - 1, seed);
    Ok((trace, stream))
}

/// One row of the Kesten-Stigum diagnostic.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthRow<T> {
    pub generation: usize,
    pub total: u64,
    /// `|Z_k| rho^{-k}`, the realized proxy of the martingale limit.
    pub scaled_total: T,
    pub proportions: Vec<T>,
    /// `Z_{k,i}/|Z_k| - b_i`
    pub deviations: Vec<T>,
}

pub fn kesten_stigum_diagnostic<T: Real>(
    trace: &GenerationTrace,
    pair: &PerronPair<T>,
) -> Vec<GrowthRow<T>> {
    trace
        .z
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let total = z.total();
            let t = T::from_u64(total).unwrap();
            let proportions: Vec<T> = z
                .as_slice()
                .iter()
                .map(|&c| T::from_u64(c).unwrap() / t)
                .collect();
            let deviations = proportions
                .iter()
                .zip(&pair.b)
                .map(|(p, b)| *p - *b)
                .collect();
            GrowthRow {
                generation: k,
                total,
                scaled_total: t / pair.rho.powi(k as i32),
                proportions,
                deviations,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::mitosis_model;

    #[test]
    fn mitosis_totals_are_deterministic() {
        let model = mitosis_model(0.8, 0.8).unwrap();
        let z0 = TypedVector::from([1, 1]);
        let trace = simulate_aggregate(&model, &z0, 5, SeedSpec::new(1)).unwrap();
        assert_eq!(trace.last().total(), 64);
        trace.check_consistency().unwrap();
        let trace = simulate_aggregate(&model, &z0, 20, SeedSpec::new(2)).unwrap();
        assert_eq!(trace.last().total(), 2_097_152);
        trace.check_consistency().unwrap();
    }

    #[test]
    fn population_cap_is_enforced() {
        let model = mitosis_model(0.8, 0.8).unwrap();
        let opts = SimOptions {
            population_cap: 1000,
            ..Default::default()
        };
        let err = simulate_aggregate_with(
            &model,
            &TypedVector::from([1, 1]),
            10,
            SeedSpec::new(0),
            &opts,
        )
        .unwrap_err();
        assert_eq!(
            err,
            Error::PopulationOverflow {
                generation: 9,
                size: 1024,
                cap: 1000
            }
        );
    }

    #[test]
    fn rejects_empty_start() {
        let model = mitosis_model(0.8, 0.8).unwrap();
        assert!(
            simulate_aggregate(&model, &TypedVector::from([0, 0]), 3, SeedSpec::new(0)).is_err()
        );
        assert!(
            simulate_aggregate(&model, &TypedVector::from([1, 0, 0]), 3, SeedSpec::new(0)).is_err()
        );
    }

    #[test]
    fn stream_order_and_replay() {
        let model = mitosis_model(0.8, 0.8).unwrap();
        let stream =
            materialize_families(&model, &TypedVector::from([1, 1]), 0, SeedSpec::new(5)).unwrap();
        let records: Vec<_> = stream.iter().collect();
        assert_eq!(records.len(), 2);
        assert_eq!((records[0].parent_type, records[1].parent_type), (0, 1));
        assert!(records.iter().all(|r| r.brood.total() == 2));
        assert_eq!(records, stream.iter().collect::<Vec<_>>());
    }

    #[test]
    fn stream_matches_per_family_step() {
        let model = mitosis_model(0.7, 0.6).unwrap();
        let seed = SeedSpec::new(11).with_replicate(4);
        let z = TypedVector::from([37, 12]);
        let stream = materialize_families(&model, &z, 3, seed).unwrap();
        let (from_stream, _) = stream.offspring();
        let mut summed = TypedVector::zeros(2);
        for r in stream.iter() {
            summed.add_scaled(&r.brood, 1);
        }
        assert_eq!(from_stream, summed);
        let opts = SimOptions {
            mode: StepMode::PerFamily,
            ..Default::default()
        };
        let tables = Arc::new(BroodTables::new(&model));
        let trace = advance(&tables, z, 3, 1, seed, &opts).unwrap();
        assert_eq!(trace.z[1], from_stream);
    }

    #[test]
    fn diagnostic_on_deterministic_totals() {
        let model = mitosis_model(0.8f64, 0.8).unwrap();
        let pair = crate::spectral::perron(&crate::spectral::reproduction_matrix(&model)).unwrap();
        let trace =
            simulate_aggregate(&model, &TypedVector::from([1, 1]), 8, SeedSpec::new(3)).unwrap();
        for row in kesten_stigum_diagnostic(&trace, &pair) {
            assert!((row.scaled_total - 2.0).abs() < 1e-12);
            let sum: f64 = row.deviations.iter().sum();
            assert!(sum.abs() < 1e-12);
        }
    }
}

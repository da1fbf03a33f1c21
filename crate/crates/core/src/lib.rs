//! Supercritical multi-type Galton-Watson processes observed through the
//! family sizes of a sample of individuals from one generation.
//!
//! Scalar-generic code is parameterized by [`Real`]; the aliases below fix the
//! common precisions. Exact combinatorial oracles also accept [`Rational`].

pub mod error;
pub mod estimators;
pub mod model;
pub mod model_file;
pub mod rng;
pub mod sampling;
pub mod scalar;
pub mod sim;
pub mod spectral;

pub use error::{Error, Result};
pub use estimators::{
    amle_fit, log_likelihood, mitosis_closed_form, mom_confidence, mom_estimates, normal_quantile,
    plugin_variances, Bounds, ClosedFormStatus, MitosisCounts, MitosisEstimate, MleFit,
    MomentEstimates,
};
pub use model::{
    mitosis_model, rds_model, validate_model, BranchingModel, OffspringLaw, RdsConfig, TypedVector,
    ValidationReport,
};
pub use model_file::ModelSpec;
pub use rng::{SeedSpec, StreamKey};
pub use sampling::{
    draw_family_sample, empirical_tv_to_limit, estimate_prob_distinct, is_non_sibling,
    pair_pmf_exact, prob_distinct_exact, FamilySample, FamilySource, PairPmf, ProbDistinctEstimate,
    SampleSizeRule, SampledBrood, StoredFamilies, TvReport,
};
pub use scalar::Real;
pub use sim::{
    kesten_stigum_diagnostic, materialize_families, simulate_aggregate, simulate_aggregate_with,
    simulate_to_families, FamilyRecord, FamilyStream, GenerationTrace, GrowthRow, SimOptions,
    StepMode,
};
pub use spectral::{
    asymptotic_variances, is_positively_regular, moment_identities, perron, reproduction_matrix,
    size_biased_pmf, AsymptoticVariances, PerronPair, ReproductionMatrix, SizeBiasedLaw,
};

/// Arbitrary-precision rationals for the exact oracles.
pub type Rational = num_rational::BigRational;

pub type ModelF64 = BranchingModel<f64>;
pub type LawF64 = OffspringLaw<f64>;
pub type ReportF64 = ValidationReport<f64>;
pub type MatrixF64 = ReproductionMatrix<f64>;
pub type PerronPairF64 = PerronPair<f64>;
pub type SizeBiasedLawF64 = SizeBiasedLaw<f64>;
pub type VariancesF64 = AsymptoticVariances<f64>;
pub type MomentEstimatesF64 = MomentEstimates<f64>;
pub type PairPmfF64 = PairPmf<f64>;

pub type ModelF32 = BranchingModel<f32>;
pub type LawF32 = OffspringLaw<f32>;
pub type PerronPairF32 = PerronPair<f32>;
pub type SizeBiasedLawF32 = SizeBiasedLaw<f32>;
pub type VariancesF32 = AsymptoticVariances<f32>;
pub type MomentEstimatesF32 = MomentEstimates<f32>;

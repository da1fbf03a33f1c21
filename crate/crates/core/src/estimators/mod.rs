//! Estimators of `rho`, `b` and parametric offspring laws from sampled broods.

mod amle;
mod mitosis;
mod moments;

pub use amle::{amle_fit, log_likelihood, Bounds, MleFit, StartSummary};
pub use mitosis::{mitosis_closed_form, ClosedFormStatus, MitosisCounts, MitosisEstimate};
pub use moments::{
    mom_confidence, mom_estimates, normal_quantile, plugin_variances, MomentEstimates,
};

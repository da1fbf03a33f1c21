use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::TypedVector;

/// Counts of the three mitosis broods in a sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MitosisCounts {
    /// Broods `(2, 0)`.
    pub n1: u64,
    /// Broods `(1, 1)`.
    pub nb: u64,
    /// Broods `(0, 2)`.
    pub n2: u64,
}

impl MitosisCounts {
    pub fn r(&self) -> u64 {
        self.n1 + self.nb + self.n2
    }

    pub fn from_sample(sample: &[TypedVector]) -> Result<Self> {
        let mut c = Self::default();
        for x in sample {
            match x.as_slice() {
                [2, 0] => c.n1 += 1,
                [1, 1] => c.nb += 1,
                [0, 2] => c.n2 += 1,
                other => {
                    return Err(Error::ParameterOutOfRange(format!(
                        "{other:?} is not a mitosis brood"
                    )))
                }
            }
        }
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedFormStatus {
    Interior,
    /// The formulas returned values outside `[0, 1]` or a negative radicand.
    OutOfRange,
    /// `2 N_2 + N_b = 0` or `2 N_1 + N_b = 0`; boundary values are reported.
    DegenerateCounts,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MitosisEstimate {
    pub alpha_hat: f64,
    pub theta_hat: f64,
    pub b1_hat: f64,
    /// `+1` when `4 N_1 N_2 >= N_b^2`, else `-1`.
    pub sign: i8,
    pub status: ClosedFormStatus,
}

/// Closed-form maximizer of the asymptotic likelihood for the mitosis model:
///
/// `alpha = (2N_2 + N_b + s sqrt(s (4N_1N_2 - N_b^2)(2N_1 + N_b)/(2N_2 + N_b))) / 2r`
///
/// and symmetrically for `theta` with the roles of `N_1` and `N_2` swapped.
pub fn mitosis_closed_form(n1: u64, nb: u64, n2: u64, r: u64) -> Result<MitosisEstimate> {
    if r == 0 || n1 + nb + n2 != r {
        return Err(Error::InvalidSampleSize(format!(
            "counts {n1} + {nb} + {n2} do not sum to r = {r}"
        )));
    }
    let (f1, fb, f2, fr) = (n1 as f64, nb as f64, n2 as f64, r as f64);
    let two_r = 2.0 * fr;
    let left = 2.0 * f1 + fb;
    let right = 2.0 * f2 + fb;
    let b1_hat = left / two_r;
    let disc = 4.0 * f1 * f2 - fb * fb;
    let sign: i8 = if disc >= 0.0 { 1 } else { -1 };
    let s = sign as f64;
    if right == 0.0 || left == 0.0 {
        // only one brood type was seen, so one of the parameters sits on the edge
        let (alpha_hat, theta_hat) = if right == 0.0 { (0.0, 1.0) } else { (1.0, 0.0) };
        return Ok(MitosisEstimate {
            alpha_hat,
            theta_hat,
            b1_hat,
            sign,
            status: ClosedFormStatus::DegenerateCounts,
        });
    }
    let alpha_hat = (right + s * ((left / right) * s * disc).sqrt()) / two_r;
    let theta_hat = (left + s * ((right / left) * s * disc).sqrt()) / two_r;
    let inside = |x: f64| (0.0..=1.0).contains(&x);
    let status = if inside(alpha_hat) && inside(theta_hat) {
        ClosedFormStatus::Interior
    } else {
        ClosedFormStatus::OutOfRange
    };
    Ok(MitosisEstimate {
        alpha_hat,
        theta_hat,
        b1_hat,
        sign,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn expected_counts_recover_parameters() {
        let e = mitosis_closed_form(52, 96, 252, 400).unwrap();
        assert_abs_diff_eq!(e.alpha_hat, 0.9, epsilon = 1e-14);
        assert_abs_diff_eq!(e.theta_hat, 0.7, epsilon = 1e-14);
        assert_eq!(e.b1_hat, 0.25);
        assert_eq!(e.status, ClosedFormStatus::Interior);
        let e = mitosis_closed_form(136, 128, 136, 400).unwrap();
        assert_abs_diff_eq!(e.alpha_hat, 0.8, epsilon = 1e-14);
        assert_abs_diff_eq!(e.theta_hat, 0.8, epsilon = 1e-14);
        assert_eq!(e.b1_hat, 0.5);
    }

    #[test]
    fn degenerate_and_invalid_counts() {
        let e = mitosis_closed_form(400, 0, 0, 400).unwrap();
        assert_eq!(e.status, ClosedFormStatus::DegenerateCounts);
        assert_eq!((e.alpha_hat, e.theta_hat, e.b1_hat), (0.0, 1.0, 1.0));
        let e = mitosis_closed_form(0, 0, 7, 7).unwrap();
        assert_eq!((e.alpha_hat, e.theta_hat, e.b1_hat), (1.0, 0.0, 0.0));
        assert!(mitosis_closed_form(1, 1, 1, 4).is_err());
    }

    #[test]
    fn negative_discriminant_uses_minus_sign() {
        let e = mitosis_closed_form(10, 80, 10, 100).unwrap();
        assert_eq!(e.sign, -1);
        assert!(e.alpha_hat.is_finite() && e.theta_hat.is_finite());
    }

    #[test]
    fn counts_from_sample() {
        let s = [
            TypedVector::from([2, 0]),
            TypedVector::from([1, 1]),
            TypedVector::from([1, 1]),
        ];
        assert_eq!(
            MitosisCounts::from_sample(&s).unwrap(),
            MitosisCounts {
                n1: 1,
                nb: 2,
                n2: 0
            }
        );
        assert!(MitosisCounts::from_sample(&[TypedVector::from([3, 0])]).is_err());
    }
}

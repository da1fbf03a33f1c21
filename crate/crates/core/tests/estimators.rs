use broodsize::{
    amle_fit, asymptotic_variances, log_likelihood, mitosis_closed_form, mitosis_model, mom_confidence,
    mom_estimates, perron, plugin_variances, rds_model, reproduction_matrix, size_biased_pmf, BranchingModel,
    Bounds, ClosedFormStatus, MitosisCounts, ModelF64, OffspringLaw, RdsConfig, Result, SeedSpec, TypedVector,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand::rngs::StdRng;

fn mitosis_family(t: &[f64]) -> Result<ModelF64> {
    mitosis_model(t[0], t[1])
}

fn unit_box() -> Bounds {
    Bounds::new(vec![1e-4, 1e-4], vec![1.0 - 1e-4, 1.0 - 1e-4]).unwrap()
}

fn sample_from_counts(c: MitosisCounts) -> Vec<TypedVector> {
    let mut s = Vec::new();
    s.extend(std::iter::repeat_n(TypedVector::from([2, 0]), c.n1 as usize));
    s.extend(std::iter::repeat_n(TypedVector::from([1, 1]), c.nb as usize));
    s.extend(std::iter::repeat_n(TypedVector::from([0, 2]), c.n2 as usize));
    s
}

/// Draws `r` iid broods from `p_S`.
fn iid_from_ps(model: &ModelF64, r: usize, rng: &mut StdRng) -> Vec<TypedVector> {
    let pair = perron(&reproduction_matrix(model)).unwrap();
    let ps = size_biased_pmf(model, &pair);
    (0..r)
        .map(|_| {
            let mut u: f64 = rng.random();
            for (v, p) in ps.iter() {
                if u < p {
                    return v.clone();
                }
                u -= p;
            }
            ps.support.last().unwrap().clone()
        })
        .collect()
}

/// `p_S` of the mitosis model in closed form: `(b1 theta^2 + b2 (1-alpha)^2, ...)`
/// with `b1 = (1 - alpha) / (2 - alpha - theta)`.
fn mitosis_ps(alpha: f64, theta: f64) -> [f64; 3] {
    let b1 = (1.0 - alpha) / (2.0 - alpha - theta);
    let b2 = 1.0 - b1;
    let q = 1.0 - alpha;
    [
        b1 * theta * theta + b2 * q * q,
        b1 * 2.0 * theta * (1.0 - theta) + b2 * 2.0 * q * alpha,
        b1 * (1.0 - theta).powi(2) + b2 * alpha * alpha,
    ]
}

#[test]
fn closed_form_and_optimizer_agree_on_random_counts() {
    let mut rng = StdRng::seed_from_u64(17);
    let mut checked = 0;
    while checked < 100 {
        // the likelihood has a mirror root; starting at the generating values keeps
        // the optimizer and the closed form on the same branch
        let alpha: f64 = rng.random_range(0.55..0.97);
        let theta: f64 = rng.random_range(0.55..0.97);
        let r = 400u64;
        let ps = mitosis_ps(alpha, theta);
        let n1 = (ps[0] * r as f64 + rng.random_range(-8.0..8.0)).round().max(1.0) as u64;
        let nb = (ps[1] * r as f64 + rng.random_range(-8.0..8.0)).round().max(1.0) as u64;
        if n1 + nb >= r {
            continue;
        }
        let n2 = r - n1 - nb;
        let cf = mitosis_closed_form(n1, nb, n2, r).unwrap();
        // with 4 N1 N2 < Nb^2 the counts fall outside the model's image and the
        // closed form is not the maximizer; see the test below
        if cf.sign < 0 || cf.status != ClosedFormStatus::Interior || cf.alpha_hat > 0.999 || cf.theta_hat > 0.999 {
            continue;
        }
        let counts = MitosisCounts { n1, nb, n2 };
        let fit = amle_fit(mitosis_family, &sample_from_counts(counts), &[alpha, theta], &unit_box()).unwrap();
        assert!(
            (fit.theta_hat[0] - cf.alpha_hat).abs() < 1e-4 && (fit.theta_hat[1] - cf.theta_hat).abs() < 1e-4,
            "{counts:?}: optimizer {:?} vs closed form ({}, {})",
            fit.theta_hat,
            cf.alpha_hat,
            cf.theta_hat
        );
        checked += 1;
    }
}

#[test]
fn negative_sign_counts_are_fit_on_the_binomial_ridge() {
    let counts = MitosisCounts { n1: 115, nb: 200, n2: 85 };
    let sample = sample_from_counts(counts);
    let cf = mitosis_closed_form(counts.n1, counts.nb, counts.n2, counts.r()).unwrap();
    assert_eq!(cf.sign, -1);
    let fit = amle_fit(mitosis_family, &sample, &[0.5, 0.5], &unit_box()).unwrap();
    let at_cf = log_likelihood(&mitosis_model(cf.alpha_hat, cf.theta_hat).unwrap(), &sample).unwrap();
    assert!(fit.loglik > at_cf + 1e-3);
    // on alpha + theta = 1 the size-biased law is Binomial(2, theta), fit by the
    // observed type-1 frequency
    assert!((fit.theta_hat[0] + fit.theta_hat[1] - 1.0).abs() < 1e-4, "{:?}", fit.theta_hat);
    assert!((fit.theta_hat[1] - cf.b1_hat).abs() < 1e-4);
}

#[test]
fn symmetric_counts_from_a_far_start() {
    let counts = MitosisCounts { n1: 136, nb: 128, n2: 136 };
    let fit = amle_fit(mitosis_family, &sample_from_counts(counts), &[0.6, 0.6], &unit_box()).unwrap();
    assert!((fit.theta_hat[0] - 0.8).abs() < 1e-4 && (fit.theta_hat[1] - 0.8).abs() < 1e-4, "{:?}", fit.theta_hat);
    assert_eq!(fit.starts.len(), 5);
}

#[test]
fn likelihood_at_estimate_dominates_truth() {
    let mut rng = StdRng::seed_from_u64(3);
    for (alpha, theta) in [(0.8, 0.8), (0.9, 0.7), (0.8, 0.9), (0.9, 0.9)] {
        let truth = mitosis_model(alpha, theta).unwrap();
        let sample = iid_from_ps(&truth, 400, &mut rng);
        let fit = amle_fit(mitosis_family, &sample, &[0.5, 0.5], &unit_box()).unwrap();
        let at_truth = log_likelihood(&truth, &sample).unwrap();
        assert!(fit.loglik >= at_truth - 1e-8, "({alpha},{theta}): {} < {at_truth}", fit.loglik);
    }
}

/// Family of one parameter where type 1 always has broods of size two and type
/// 2 has two or three children; the likelihood rises all the way to `theta = 1`.
fn edge_family(t: &[f64]) -> Result<ModelF64> {
    let p = t[0];
    BranchingModel::from_laws(vec![
        OffspringLaw::new(2, vec![(TypedVector::from([1, 1]), 1.0)])?,
        OffspringLaw::new(2, vec![(TypedVector::from([1, 1]), p), (TypedVector::from([1, 2]), 1.0 - p)])?,
    ])
}

#[test]
fn boundary_estimate_stays_on_the_edge() {
    let sample = vec![TypedVector::from([1, 1]); 50];
    let bounds = Bounds::new(vec![0.0], vec![1.0]).unwrap();
    let fit = amle_fit(edge_family, &sample, &[0.5], &bounds).unwrap();
    assert!((fit.theta_hat[0] - 1.0).abs() < 1e-9, "{:?}", fit.theta_hat);
    assert_eq!(fit.stationarity_residual, None);
    assert!(bounds.contains(&fit.theta_hat));
}

#[test]
fn b1_hat_is_the_moment_estimate() {
    for counts in [(52, 96, 252), (136, 128, 136), (1, 2, 3), (77, 0, 5)] {
        let c = MitosisCounts { n1: counts.0, nb: counts.1, n2: counts.2 };
        let est = mom_estimates::<f64>(&sample_from_counts(c)).unwrap();
        let cf = mitosis_closed_form(c.n1, c.nb, c.n2, c.r()).unwrap();
        assert_eq!(cf.b1_hat, est.u_n[0]);
        assert_eq!(est.t_n, 0.5);
    }
}

#[test]
fn plugin_variances_approach_exact_covariance() {
    let model = rds_model::<f64>(&RdsConfig::default()).unwrap();
    let pair = perron(&reproduction_matrix(&model)).unwrap();
    let exact = asymptotic_variances(&model, &pair);
    let mut rng = StdRng::seed_from_u64(12);
    let r = 100_000;
    let sample = iid_from_ps(&model, r, &mut rng);
    let plug = plugin_variances::<f64>(&sample).unwrap();
    // sd of a sample covariance entry is about sqrt(E[d_i^2 d_j^2] / r) <= sqrt(s_ii s_jj * 3 / r)
    for i in 0..4 {
        for j in 0..4 {
            let scale = (3.0 * exact.sigma[i][i] * exact.sigma[j][j] / r as f64).sqrt();
            assert!((plug.sigma[i][j] - exact.sigma[i][j]).abs() < 3.0 * scale.max(1e-12), "({i},{j})");
        }
    }
    let t_scale = (3.0 * exact.sigma_t_sq.powi(2) / r as f64).sqrt();
    assert!((plug.sigma_t_sq - exact.sigma_t_sq).abs() < 3.0 * t_scale);
}

#[test]
fn interval_half_width_for_b1() {
    let model = mitosis_model(0.8, 0.8).unwrap();
    let pair = perron(&reproduction_matrix(&model)).unwrap();
    let var = asymptotic_variances(&model, &pair);
    let sample = sample_from_counts(MitosisCounts { n1: 136, nb: 128, n2: 136 });
    let ci = mom_confidence(&mom_estimates(&sample).unwrap(), &var, 0.95).unwrap();
    let (lo, hi) = ci.ci_b.unwrap()[0];
    assert!(((hi - lo) / 2.0 - 1.959964 * (0.17f64 / 400.0).sqrt()).abs() < 1e-5);
    assert!(ci.rho_degenerate);
    assert_eq!(ci.ci_rho, Some((2.0, 2.0)));
}

#[test]
fn seeded_samples_are_reproducible() {
    let model = mitosis_model(0.8, 0.8).unwrap();
    let z0 = TypedVector::from([1, 1]);
    let draw = || {
        let seed = SeedSpec::new(1).with_replicate(3);
        let (_, stream) =
            broodsize::simulate_to_families(&model, &z0, 10, seed, &broodsize::SimOptions::default()).unwrap();
        broodsize::draw_family_sample(&stream, 100, seed.sampling_key(10)).unwrap()
    };
    assert_eq!(draw(), draw());
}

proptest! {
    #[test]
    fn moment_proportions_lie_on_the_simplex(
        sample in prop::collection::vec(prop::collection::vec(0u64..6, 3).prop_filter("nonzero", |v| v.iter().any(|&c| c > 0)), 1..200)
    ) {
        let sample: Vec<TypedVector> = sample.into_iter().map(TypedVector::new).collect();
        let est = mom_estimates::<f64>(&sample).unwrap();
        prop_assert!((est.u_n.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(est.u_n.iter().all(|&u| u >= 0.0));
        prop_assert!(est.t_n > 0.0 && est.t_n <= 1.0);
        prop_assert!(est.rho_hat >= 1.0);
    }
}

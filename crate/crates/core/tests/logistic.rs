mod support;

use std::fs::File;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use support::{data_path, rat};
use transport_core::formats::read_records_csv;
use transport_core::logistic::{
    beta2_misspecification_test, fit_design, fit_logistic, information, log_likelihood, score,
    wald_test, Design, ModelSpec, Record, RecordSet,
};
use transport_core::model::PopulationId;
use transport_core::simgen::{make_table, Enforcement, ScenarioSpec, SplitMix64};
use transport_core::Error;

const NO_INTERACTION: ModelSpec = ModelSpec { interaction: false };

fn reference() -> RecordSet {
    read_records_csv(File::open(data_path("irls_reference.records.csv")).unwrap()).unwrap()
}

#[test]
fn reference_fit_zeroes_the_score() {
    let data = reference();
    let design = Design::build(&data, NO_INTERACTION).unwrap();
    let fit = fit_design(&design, NO_INTERACTION).unwrap();
    assert!(fit.converged);
    assert_eq!(fit.names, ["intercept", "a", "p", "V=1", "V=2"]);
    let beta = DVector::from_vec(fit.coefficients.clone());
    let max = score(&design, &beta).amax();
    assert!(max <= 1e-8, "score {max}");
    assert!((fit.deviance + 2.0 * log_likelihood(&design, &beta)).abs() < 1e-9);
}

/// Central differences of the log-likelihood, step `h`.
fn fd_hessian(design: &Design, beta: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let k = beta.len();
    let ll = |b: &DVector<f64>| log_likelihood(design, b);
    let mut out = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let shifted = |di: f64, dj: f64| {
                let mut b = beta.clone();
                b[i] += di;
                b[j] += dj;
                ll(&b)
            };
            out[(i, j)] =
                (shifted(h, h) - shifted(h, -h) - shifted(-h, h) + shifted(-h, -h)) / (4.0 * h * h);
        }
    }
    out
}

#[test]
fn information_matches_finite_differences() {
    let data = reference();
    let design = Design::build(&data, NO_INTERACTION).unwrap();
    let fit = fit_design(&design, NO_INTERACTION).unwrap();
    for beta in [
        DVector::from_vec(fit.coefficients.clone()),
        DVector::from_element(5, 0.1),
    ] {
        let analytic = information(&design, &beta);
        let numeric = -fd_hessian(&design, &beta, 1e-4);
        let rel = (&analytic - &numeric).norm() / analytic.norm();
        assert!(rel <= 1e-4, "relative error {rel}");
    }
}

#[test]
fn covariance_is_symmetric_positive_semidefinite() {
    let fit = fit_logistic(&reference(), NO_INTERACTION).unwrap();
    let k = fit.coefficients.len();
    let cov = DMatrix::from_fn(k, k, |i, j| fit.covariance[i][j]);
    assert!((&cov - cov.transpose()).amax() < 1e-14);
    let eig = SymmetricEigen::new(cov);
    assert!(eig.eigenvalues.iter().all(|&e| e >= -1e-14));
    for i in 0..k {
        assert!((fit.std_errors[i] - fit.covariance[i][i].sqrt()).abs() < 1e-15);
    }
}

/// `Pr(true) = p` from the library generator's integer Bernoulli draw.
fn draw(rng: &mut SplitMix64, p: f64) -> bool {
    const SCALE: u64 = 1 << 40;
    rng.bernoulli((p * SCALE as f64).round() as u64, SCALE)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `n` records with `V` uniform on three levels, `A` and `P` fair coins
/// and `logit Pr(Y=1) = β·(1, A, P, [V=1], [V=2])`.
fn simulate(beta: [f64; 5], n: usize, seed: u64) -> RecordSet {
    let mut rng = SplitMix64::new(seed);
    let mut data = RecordSet::new(vec!["V".into()]).unwrap();
    for _ in 0..n {
        let v = rng.below(3);
        let a = draw(&mut rng, 0.5);
        let p = draw(&mut rng, 0.5);
        let eta = beta[0]
            + beta[1] * a as u8 as f64
            + beta[2] * p as u8 as f64
            + if v == 1 { beta[3] } else { 0.0 }
            + if v == 2 { beta[4] } else { 0.0 };
        let y = draw(&mut rng, logistic(eta));
        data.push(Record {
            y,
            a,
            p,
            levels: vec![v.to_string()],
            weight: 1.0,
        })
        .unwrap();
    }
    data
}

#[test]
fn known_coefficients_are_recovered_within_four_standard_errors() {
    let truth = [-1.0, 0.7, 0.4, 0.3, -0.5];
    let fit = fit_logistic(&simulate(truth, 100_000, 2024), NO_INTERACTION).unwrap();
    assert!(fit.converged);
    for (i, b) in truth.iter().enumerate() {
        let z = (fit.coefficients[i] - b) / fit.std_errors[i];
        assert!(
            z.abs() < 4.0,
            "{}: {} vs {b} (z = {z})",
            fit.names[i],
            fit.coefficients[i]
        );
    }
}

#[test]
fn null_treatment_effect_is_near_zero() {
    let fit = fit_logistic(
        &simulate([-0.3, 0.0, 0.5, -0.2, 0.4], 100_000, 7),
        NO_INTERACTION,
    )
    .unwrap();
    let a = fit.index("a").unwrap();
    assert!((fit.coefficients[a] / fit.std_errors[a]).abs() < 4.0);
}

#[test]
fn separated_data_is_detected() {
    let mut data = RecordSet::new(vec![]).unwrap();
    for (y, a, p) in [
        (false, false, false),
        (false, false, true),
        (true, true, false),
        (true, true, true),
    ] {
        data.push(Record {
            y,
            a,
            p,
            levels: vec![],
            weight: 5.0,
        })
        .unwrap();
    }
    assert!(matches!(
        fit_logistic(&data, NO_INTERACTION),
        Err(Error::SeparationDetected { .. })
    ));
}

/// Exact population fit on tables built from a no-interaction logistic
/// model in which `P` has no effect given `V`.
#[test]
fn exact_population_fit_recovers_zero_selection_coefficient() {
    for seed in 0..25 {
        let table = make_table(&ScenarioSpec::new(Enforcement::LogisticNull, 3, seed)).unwrap();
        let data = RecordSet::from_table(&table, &PopulationId::study(), &rat(1, 2)).unwrap();
        let fit = fit_logistic(&data, NO_INTERACTION).unwrap();
        assert!(fit.converged);
        let b2 = fit.coefficient("p").unwrap();
        assert!(b2.abs() <= 1e-8, "seed {seed}: {b2}");
    }
}

#[test]
fn shifted_outcome_cause_moves_the_selection_coefficient() {
    let spec = ScenarioSpec::new(Enforcement::ShiftedCause, 3, 3).with_cause_shift(rat(1, 2));
    let table = make_table(&spec).unwrap();
    let data = RecordSet::from_table(&table, &PopulationId::study(), &rat(1, 2)).unwrap();
    let fit = fit_logistic(&data, NO_INTERACTION).unwrap();
    assert!(fit.coefficient("p").unwrap().abs() > 0.05);
}

#[test]
fn wald_p_value_matches_an_independent_chi_square() {
    let fit = fit_logistic(
        &simulate([-0.5, 0.2, 0.05, 0.1, 0.1], 4000, 99),
        NO_INTERACTION,
    )
    .unwrap();
    let chi2 = ChiSquared::new(1.0).unwrap();
    for name in ["a", "p", "V=1", "V=2"] {
        let w = wald_test(&fit, name).unwrap();
        assert_eq!(w.dof, 1);
        let expected_stat = (w.estimate / w.std_error).powi(2);
        assert!((w.statistic - expected_stat).abs() <= 1e-12 * expected_stat.max(1.0));
        assert!((w.p_value - chi2.sf(w.statistic)).abs() <= 1e-10, "{name}");
    }
}

#[test]
fn misspecification_test_reports_every_assumption() {
    let fit = fit_logistic(&reference(), NO_INTERACTION).unwrap();
    let test = beta2_misspecification_test(&fit, 0.05).unwrap();
    assert_eq!(test.reject, test.wald.p_value < 0.05);
    assert_eq!(test.assumptions.len(), 3);
    let mut stalled = fit.clone();
    stalled.converged = false;
    assert!(matches!(
        beta2_misspecification_test(&stalled, 0.05),
        Err(Error::NotConverged { .. })
    ));
}

#[test]
fn interaction_model_adds_a_term() {
    let spec = ModelSpec { interaction: true };
    let fit = fit_logistic(&reference(), spec).unwrap();
    assert_eq!(fit.names.len(), 6);
    assert!(fit.index("a:p").is_some());
    assert_eq!(fit.beta_label(fit.index("a:p").unwrap()), "beta3");
}

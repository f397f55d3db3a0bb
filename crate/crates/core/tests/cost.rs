mod support;

use std::collections::BTreeMap;
use std::fs::File;

use num_traits::{One, Zero};
use proptest::prelude::*;
use support::{blocks, data_path, f, pooled_risk, rat, Block, Q};
use transport_core::cost::{
    cost_from_joint, cost_identify_monotone, monotonicity_bias, predict_target_risk,
    standardize_cost, CostParams, Identification, Monotonicity,
};
use transport_core::formats::read_joint_csv;
use transport_core::homogeneity::{check_claim, ClaimKind, HomogeneityClaim};
use transport_core::model::{PopulationId, Risk, StratifiedCounts, Stratum};
use transport_core::simgen::{
    expected_counts, make_table, Enforcement, PotentialOutcomeTable, ScenarioSpec, COVARIATE,
};
use transport_core::standardization::{compute_weights, WeightKind};
use transport_core::Error;

fn s() -> PopulationId {
    PopulationId::study()
}

fn t() -> PopulationId {
    PopulationId::target()
}

fn v(level: &str) -> Stratum {
    Stratum::new([(COVARIATE, level)]).unwrap()
}

fn joint(text: &str) -> PotentialOutcomeTable {
    read_joint_csv(text.as_bytes()).unwrap()
}

fn risk(events: u64, total: u64) -> Risk {
    Risk::new(events, total).unwrap()
}

#[test]
fn null_effect_has_unit_parameters() {
    let table = joint("population,V,y0,y1,mass\ns,0,0,0,3\ns,0,1,1,1\nt,0,0,0,1\nt,0,1,1,1\n");
    let p = cost_from_joint(&table, &s(), &v("0")).unwrap();
    assert_eq!(
        (p.g, p.h, p.identification),
        (1.0, 1.0, Identification::ExactFromJoint)
    );
}

#[test]
fn g_is_the_share_of_baseline_cases_kept() {
    // Pr(Y0=1) = 1/2, of which 4/5 stays at Y1=1
    let table =
        joint("population,V,y0,y1,mass\ns,0,1,1,2/5\ns,0,1,0,1/10\ns,0,0,0,1/2\nt,0,0,0,1\n");
    let p = cost_from_joint(&table, &s(), &v("0")).unwrap();
    assert!((p.g - 0.8).abs() < 1e-15);
    assert_eq!(p.h, 1.0);
}

#[test]
fn empty_conditioning_event_is_named() {
    let table = joint("population,V,y0,y1,mass\ns,0,0,0,1\ns,0,0,1,1\nt,0,0,0,1\n");
    match cost_from_joint(&table, &s(), &v("0")) {
        Err(Error::DegenerateBaseline { event, .. }) => {
            assert!(event.contains("Y^{a=0}=1"), "{event}")
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn joint_parameters_match_block_arithmetic() {
    for (i, enforce) in Enforcement::ALL.into_iter().enumerate() {
        for seed in 0..5 {
            let table = make_table(&ScenarioSpec::new(enforce, 4, seed * 31 + i as u64)).unwrap();
            for b in blocks(&table) {
                let (Some(g), Some(h)) = (b.g(), b.h()) else {
                    continue;
                };
                let p = cost_from_joint(
                    &table,
                    &b.population.parse().unwrap(),
                    &v(&b.stratum["V=".len()..]),
                )
                .unwrap();
                assert!(
                    (p.g - f(&g)).abs() <= 1e-15 && (p.h - f(&h)).abs() <= 1e-15,
                    "{b:?}"
                );
            }
        }
    }
}

#[test]
fn monotone_identification_arithmetic() {
    let p = cost_identify_monotone(&risk(2, 5), &risk(1, 5), Monotonicity::Increasing).unwrap();
    assert_eq!(p.g, 1.0);
    assert!((p.h - 0.75).abs() < 1e-15);
    assert_eq!(p.identification, Identification::MonotoneIncreasing);
    for direction in [Monotonicity::Increasing, Monotonicity::Decreasing] {
        let p = cost_identify_monotone(&risk(3, 10), &risk(6, 20), direction).unwrap();
        assert_eq!((p.g, p.h), (1.0, 1.0));
    }
    let p = cost_identify_monotone(&risk(1, 5), &risk(2, 5), Monotonicity::Decreasing).unwrap();
    assert_eq!((p.g, p.h), (0.5, 1.0));
}

#[test]
fn contradicted_direction_is_an_error() {
    assert!(matches!(
        cost_identify_monotone(&risk(1, 5), &risk(2, 5), Monotonicity::Increasing),
        Err(Error::MonotonicityContradicted { .. })
    ));
    assert!(matches!(
        cost_identify_monotone(&risk(2, 5), &risk(1, 5), Monotonicity::Decreasing),
        Err(Error::MonotonicityContradicted { .. })
    ));
}

/// Monotone tables: identification from the trial arm risks alone recovers
/// the joint parameters.
#[test]
fn monotone_tables_are_identified_exactly() {
    let mut checked = 0;
    for direction in [Monotonicity::Increasing, Monotonicity::Decreasing] {
        for seed in 0..40 {
            let spec = ScenarioSpec::new(Enforcement::Cost, 3, seed)
                .with_gap(rat(1, 10))
                .with_monotone(direction);
            let table = make_table(&spec).unwrap();
            let counts: StratifiedCounts = expected_counts(&table).unwrap();
            for b in blocks(&table) {
                let p: PopulationId = b.population.parse().unwrap();
                let stratum = v(&b.stratum["V=".len()..]);
                let r1 = counts.risk(&p, &stratum, true).unwrap();
                let r0 = counts.risk(&p, &stratum, false).unwrap();
                let identified = match cost_identify_monotone(&r1, &r0, direction) {
                    Ok(x) => x,
                    Err(Error::DegenerateBaseline { .. }) => continue,
                    Err(e) => panic!("{e}"),
                };
                let truth = cost_from_joint(&table, &p, &stratum).unwrap();
                match direction {
                    Monotonicity::Increasing => {
                        assert_eq!(identified.g, 1.0);
                        assert!((identified.h - truth.h).abs() <= 1e-12, "{b:?}");
                    }
                    Monotonicity::Decreasing => {
                        assert_eq!(identified.h, 1.0);
                        assert!((identified.g - truth.g).abs() <= 1e-12, "{b:?}");
                    }
                }
                checked += 1;
            }
        }
    }
    assert!(checked >= 200);
}

#[test]
fn prediction_arithmetic() {
    let mut params = BTreeMap::new();
    params.insert(
        v("0"),
        CostParams::new(1.0, 0.75, Identification::MonotoneIncreasing).unwrap(),
    );
    let baselines = BTreeMap::from([(v("0"), 0.2)]);
    let w = transport_core::standardization::StandardizationWeights::new(
        WeightKind::Prevalence,
        BTreeMap::from([(v("0"), 1.0)]),
    )
    .unwrap();
    let est = predict_target_risk(&params, &baselines, &w).unwrap();
    assert!((est.risk1 - 0.4).abs() < 1e-15);
    let null = CostParams::new(1.0, 1.0, Identification::ExactFromJoint).unwrap();
    assert_eq!(null.predict(0.37), 0.37);
    let wrong = transport_core::standardization::StandardizationWeights::new(
        WeightKind::BaselineCases,
        BTreeMap::from([(v("0"), 1.0)]),
    )
    .unwrap();
    assert!(matches!(
        predict_target_risk(&params, &baselines, &wrong),
        Err(Error::WeightMismatch(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn prediction_stays_a_probability(g in 0.0f64..=1.0, h in 0.0f64..=1.0, p0 in 0.0f64..=1.0) {
        let x = CostParams::new(g, h, Identification::ExactFromJoint).unwrap().predict(p0);
        prop_assert!((0.0..=1.0).contains(&x));
    }
}

/// Target risk under treatment from source `(G, H)`, target baselines and
/// target prevalence, against the pooled truth.
fn cost_prediction_error(table: &PotentialOutcomeTable) -> f64 {
    let w = compute_weights(table, WeightKind::Prevalence, &t()).unwrap();
    let mut params = BTreeMap::new();
    let mut baselines = BTreeMap::new();
    for (stratum, _) in w.iter() {
        params.insert(
            stratum.clone(),
            cost_from_joint(table, &s(), stratum).unwrap(),
        );
        baselines.insert(
            stratum.clone(),
            f(&table.cf_risk(&t(), stratum, false).unwrap()),
        );
    }
    let est = predict_target_risk(&params, &baselines, &w).unwrap();
    let truth = pooled_risk(&blocks(table), "t", true);
    (est.risk1 - f(&truth)).abs()
}

#[test]
fn cost_homogeneous_scenarios_predict_the_target_exactly() {
    let mut scenarios = 0;
    for seed in 0..500u64 {
        let gap = rat((seed % 9) as i64, 20);
        let table = make_table(
            &ScenarioSpec::new(Enforcement::Cost, 1 + (seed % 4) as usize, seed).with_gap(gap),
        )
        .unwrap();
        let err = cost_prediction_error(&table);
        assert!(err <= 1e-12, "seed {seed}: {err}");
        scenarios += 1;
    }
    assert_eq!(scenarios, 500);
}

#[test]
fn standardization_arithmetic() {
    // equal Pr(V=v, Y0=1) in the target: G weights 1/2 each
    let mut counts = StratifiedCounts::new(vec![COVARIATE.into()]).unwrap();
    for level in ["0", "1"] {
        for p in [s(), t()] {
            for (a, y, n) in [
                (false, true, 5),
                (false, false, 5),
                (true, true, 6),
                (true, false, 4),
            ] {
                counts.add(p.clone(), v(level), a, y, n).unwrap();
            }
        }
    }
    let params = BTreeMap::from([
        (
            v("0"),
            CostParams::new(1.0, 0.9, Identification::ExactFromJoint).unwrap(),
        ),
        (
            v("1"),
            CostParams::new(0.5, 0.9, Identification::ExactFromJoint).unwrap(),
        ),
    ]);
    let marginal = standardize_cost(&params, &counts, &t()).unwrap();
    assert!((marginal.g - 0.75).abs() < 1e-15);
    assert!((marginal.h - 0.9).abs() < 1e-15);
}

#[test]
fn standardized_parameters_equal_the_pooled_target_parameters() {
    for seed in 0..60 {
        let table = make_table(&ScenarioSpec::new(Enforcement::Distribution, 4, seed)).unwrap();
        let mut params = BTreeMap::new();
        for stratum in table.strata(&t()) {
            if let Ok(p) = cost_from_joint(&table, &t(), stratum) {
                params.insert(stratum.clone(), p);
            }
        }
        let marginal = standardize_cost(&params, &table, &t()).unwrap();
        let pooled = table.collapse(&[]).unwrap();
        let truth = cost_from_joint(&pooled, &t(), &Stratum::empty()).unwrap();
        assert!((marginal.g - truth.g).abs() <= 1e-12, "seed {seed}");
        assert!((marginal.h - truth.h).abs() <= 1e-12, "seed {seed}");
    }
}

#[test]
fn no_bias_when_monotone_or_baselines_match() {
    for seed in 0..50 {
        for spec in [
            ScenarioSpec::new(Enforcement::Cost, 3, seed),
            ScenarioSpec::new(Enforcement::Distribution, 3, seed),
            ScenarioSpec::new(Enforcement::Cost, 3, seed)
                .with_gap(rat(3, 10))
                .with_monotone(Monotonicity::Increasing),
        ] {
            let table = make_table(&spec).unwrap();
            let report = monotonicity_bias(&table, &s(), &t(), &[COVARIATE.into()]).unwrap();
            assert!(report.bias <= 1e-12, "{spec}: {}", report.bias);
        }
    }
}

/// Independent bias oracle for one stratum, with the direction taken from
/// the source arm risks.
fn block_bias(src: &Block, tgt: &Block) -> Q {
    let one = Q::one();
    let (r1, r0) = (src.risk(true), src.risk(false));
    let p0 = tgt.risk(false);
    let (gm, hm) = if r1 >= r0 {
        (one.clone(), (&one - &r1) / (&one - &r0))
    } else {
        (&r1 / &r0, one.clone())
    };
    let (g, h) = (src.g().unwrap(), src.h().unwrap());
    let predict = |g: &Q, h: &Q| g * &p0 + (&one - h) * (&one - &p0);
    let d = predict(&gm, &hm) - predict(&g, &h);
    if d < Q::zero() {
        -d
    } else {
        d
    }
}

fn case(level: &str) -> (f64, f64) {
    let (m, g) = level[1..].split_once("_g").unwrap();
    (m.parse().unwrap(), g.parse().unwrap())
}

#[test]
fn shipped_instances_show_bias_growing_with_mass_and_gap() {
    let table =
        read_joint_csv(File::open(data_path("monotonicity_bias.joint.csv")).unwrap()).unwrap();
    let report = monotonicity_bias(&table, &s(), &t(), &["case".into()]).unwrap();
    let b = blocks(&table);
    let mut by_case = BTreeMap::new();
    for stratum in &report.strata {
        let level = stratum.stratum.level("case").unwrap().to_string();
        let key = format!("case={level}");
        let src = b
            .iter()
            .find(|x| x.population == "s" && x.stratum == key)
            .unwrap();
        let tgt = b
            .iter()
            .find(|x| x.population == "t" && x.stratum == key)
            .unwrap();
        let oracle = f(&block_bias(src, tgt));
        let bias = (stratum.predicted_monotone - stratum.predicted_true_cost).abs();
        assert!(
            (bias - oracle).abs() <= 1e-12,
            "{level}: {bias} vs {oracle}"
        );
        let (m, gap) = case(&level);
        assert!((stratum.off_diagonal_mass - m).abs() <= 1e-12, "{level}");
        assert!((stratum.baseline_gap - gap).abs() <= 1e-12, "{level}");
        // target shares the source (G, H), so monotone error is all bias
        assert!((stratum.predicted_true_cost - stratum.true_target_risk).abs() <= 1e-12);
        by_case.insert((level_key(m), level_key(gap)), bias);
    }
    assert_eq!(by_case.len(), 16);
    let ms: Vec<i64> = [0.0, 0.025, 0.05, 0.1].map(level_key).to_vec();
    let gaps: Vec<i64> = [0.0, 0.1, 0.2, 0.3].map(level_key).to_vec();
    for &m in &ms {
        assert!(by_case[&(m, 0)] <= 1e-15);
    }
    for &g in &gaps {
        assert!(by_case[&(0, g)] <= 1e-15);
    }
    for w in ms.windows(2) {
        for &g in &gaps[1..] {
            assert!(by_case[&(w[1], g)] > by_case[&(w[0], g)]);
        }
    }
    for &m in &ms[1..] {
        for w in gaps.windows(2) {
            assert!(by_case[&(m, w[1])] > by_case[&(m, w[0])]);
        }
    }
    assert!(report.bias > 0.0);
}

fn level_key(x: f64) -> i64 {
    (x * 1000.0).round() as i64
}

#[test]
fn marginal_independence_without_joint_independence_is_flagged() {
    let table =
        read_joint_csv(File::open(data_path("marginal_not_joint.joint.csv")).unwrap()).unwrap();
    let claim = |k| check_claim(&table, &HomogeneityClaim::new(k, &[COVARIATE]), 1e-12).unwrap();
    assert!(claim(ClaimKind::Distribution).holds);
    for kind in [ClaimKind::CostIntroduce, ClaimKind::CostRemove] {
        let verdict = claim(kind);
        assert!(!verdict.holds, "{kind}");
        assert!(verdict.max_residual > 0.1);
    }
    // witness checked by hand: equal arm risks per stratum, unequal G
    let b = blocks(&table);
    for level in ["V=0", "V=1"] {
        let src = b
            .iter()
            .find(|x| x.population == "s" && x.stratum == level)
            .unwrap();
        let tgt = b
            .iter()
            .find(|x| x.population == "t" && x.stratum == level)
            .unwrap();
        assert_eq!(src.risk(true), tgt.risk(true));
        assert_eq!(src.risk(false), tgt.risk(false));
        assert_ne!(src.g(), tgt.g());
    }
}

#[test]
fn joint_independence_implies_equal_parameters() {
    for seed in 0..200 {
        let table = make_table(&ScenarioSpec::new(Enforcement::Distribution, 3, seed)).unwrap();
        let b = blocks(&table);
        for src in b.iter().filter(|x| x.population == "s") {
            let tgt = b
                .iter()
                .find(|x| x.population == "t" && x.stratum == src.stratum)
                .unwrap();
            let normalized = |x: &Block| x.m.clone().map(|row| row.map(|m| m / x.total()));
            assert_eq!(normalized(src), normalized(tgt));
            assert_eq!(src.g(), tgt.g());
            assert_eq!(src.h(), tgt.h());
        }
        for kind in [ClaimKind::CostIntroduce, ClaimKind::CostRemove] {
            assert!(
                check_claim(&table, &HomogeneityClaim::new(kind, &[COVARIATE]), 1e-12)
                    .unwrap()
                    .holds
            );
        }
    }
}

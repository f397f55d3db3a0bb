mod support;

use num_traits::{One, Zero};
use proptest::prelude::*;
use support::{blocks, f, pooled_risk, random_dag_edges, rat, subsets, TestRng};
use transport_core::diagram::{parse_diagram, DSepQuery};
use transport_core::exact::q;
use transport_core::graph::Dag;
use transport_core::homogeneity::{
    check_claim, exact_conditional_independence, ClaimKind, HomogeneityClaim,
};
use transport_core::simgen::{
    enumerate_joint, make_table, sample_trial, true_target_quantities, Enforcement,
    JointDistribution, ScenarioSpec, SplitMix64, StructuralModel, COVARIATE, MAX_ENUMERATED_NODES,
};
use transport_core::{Error, MeasureKind, PopulationId};

#[test]
fn single_root_node() {
    let dag = Dag::from_edges(1, &[]).unwrap();
    let model = StructuralModel::new(dag, 10, vec![vec![3]]).unwrap();
    let joint = enumerate_joint(&model).unwrap();
    assert_eq!(joint.probability(0), rat(7, 10));
    assert_eq!(joint.probability(1), rat(3, 10));
}

#[test]
fn independent_nodes_give_a_product() {
    let dag = Dag::from_edges(3, &[]).unwrap();
    let model = StructuralModel::new(dag, 8, vec![vec![1], vec![3], vec![6]]).unwrap();
    let joint = enumerate_joint(&model).unwrap();
    let p = [rat(1, 8), rat(3, 8), rat(6, 8)];
    for c in 0..8u32 {
        let expected = (0..3).fold(support::Q::one(), |acc, i| {
            acc * if c >> i & 1 == 1 {
                p[i].clone()
            } else {
                support::Q::one() - &p[i]
            }
        });
        assert_eq!(joint.probability(c), expected);
    }
}

#[test]
fn enumeration_guards_size() {
    let n = MAX_ENUMERATED_NODES + 1;
    let dag = Dag::from_edges(n, &[]).unwrap();
    assert!(matches!(
        StructuralModel::random(dag, 1, 4),
        Err(Error::TooLarge { .. })
    ));
    let names: Vec<String> = (0..n).map(|i| format!("X{i}")).collect();
    assert!(matches!(
        JointDistribution::from_weights(names, vec![]),
        Err(Error::TooLarge { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Masses are exact, sum to one and marginalize consistently in any
    /// variable order.
    #[test]
    fn joint_normalizes_and_marginalizes(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = TestRng::new(seed);
        let edges = random_dag_edges(&mut rng, n, 0.4);
        let model = StructuralModel::random(Dag::from_edges(n, &edges).unwrap(), seed, 7).unwrap();
        let joint = enumerate_joint(&model).unwrap();
        let sum = (0..1u32 << n).fold(support::Q::zero(), |a, c| a + joint.probability(c));
        prop_assert!(sum.is_one());
        let all: Vec<usize> = (0..n).collect();
        for sub in subsets(&all) {
            let forward = joint.marginal(&sub);
            let mut reversed = sub.clone();
            reversed.reverse();
            let backward = joint.marginal(&reversed);
            // reversing the variable order reverses the bit order of the index
            for (i, m) in forward.iter().enumerate() {
                let mut j = 0;
                for b in 0..sub.len() {
                    j |= (i >> b & 1) << (sub.len() - 1 - b);
                }
                prop_assert_eq!(m, &backward[j]);
            }
            let total = forward.iter().fold(support::Q::zero(), |a, b| a + b);
            prop_assert!(total.is_one());
        }
    }
}

#[test]
fn product_distribution_is_independent_and_copy_is_not() {
    let product =
        JointDistribution::from_weights(vec!["X".into(), "Y".into()], vec![6, 2, 3, 1]).unwrap();
    assert!(exact_conditional_independence(&product, &["X"], &["Y"], &[]).unwrap());
    let copy =
        JointDistribution::from_weights(vec!["X".into(), "Y".into()], vec![1, 0, 0, 1]).unwrap();
    assert!(!exact_conditional_independence(&copy, &["X"], &["Y"], &[]).unwrap());
}

fn random_diagram(
    rng: &mut TestRng,
    baseline: usize,
) -> Option<transport_core::diagram::SelectionDiagram> {
    let edges = random_dag_edges(rng, baseline, 0.3);
    let mut text =
        String::from("node A\nnode Y\nnode P\nedge A -> Y\ntreatment A\noutcome Y\nselection P\n");
    for i in 0..baseline {
        text.push_str(&format!("node X{i}\n"));
    }
    for (a, b) in edges {
        text.push_str(&format!("edge X{a} -> X{b}\n"));
    }
    for i in 0..baseline {
        if rng.unit() < 0.3 {
            text.push_str(&format!("edge P -> X{i}\n"));
        }
        if rng.unit() < 0.3 {
            text.push_str(&format!("edge X{i} -> Y\n"));
        }
        if rng.unit() < 0.2 {
            text.push_str(&format!("edge X{i} -> A\n"));
        }
    }
    parse_diagram(&text).ok()
}

#[test]
fn d_separation_implies_exact_independence() {
    let mut rng = TestRng::new(77);
    let mut checked = 0;
    for model_seed in 0..40u64 {
        let size = 2 + rng.below(4) as usize;
        let Some(g) = random_diagram(&mut rng, size) else {
            continue;
        };
        let model = StructuralModel::from_diagram(&g, model_seed, 9).unwrap();
        let joint = enumerate_joint(&model).unwrap();
        let names = g.dag().names().to_vec();
        let n = names.len();
        for x in 0..n {
            for y in x + 1..n {
                let rest: Vec<usize> = (0..n).filter(|&v| v != x && v != y).collect();
                for z in subsets(&rest) {
                    let given: Vec<&str> = z.iter().map(|&i| names[i].as_str()).collect();
                    let q = DSepQuery::new(names[x].clone(), names[y].clone(), &given);
                    if g.d_separated(&q).unwrap() {
                        assert!(exact_conditional_independence(
                            &joint,
                            &[&names[x]],
                            &[&names[y]],
                            &given
                        )
                        .unwrap());
                        checked += 1;
                    }
                }
            }
        }
    }
    assert!(checked > 100);
}

#[test]
fn distribution_scenario_passes_every_claim() {
    for seed in 0..20 {
        let table = make_table(&ScenarioSpec::new(Enforcement::Distribution, 3, seed)).unwrap();
        for kind in ClaimKind::ALL {
            let verdict =
                check_claim(&table, &HomogeneityClaim::new(kind, &[COVARIATE]), 1e-12).unwrap();
            assert!(verdict.holds, "seed {seed} {kind}");
        }
    }
}

#[test]
fn cost_scenario_with_gap_keeps_cost_and_breaks_distribution() {
    let spec = ScenarioSpec::new(Enforcement::Cost, 3, 9).with_gap(q(1, 5));
    let table = make_table(&spec).unwrap();
    let blocks = blocks(&table);
    for s in blocks.iter().filter(|b| b.population == "s") {
        let t = blocks
            .iter()
            .find(|b| b.population == "t" && b.stratum == s.stratum)
            .unwrap();
        assert_eq!(s.g(), t.g());
        assert_eq!(s.h(), t.h());
        assert_eq!(t.risk(false) - s.risk(false), rat(1, 5));
    }
    let claim = |k| {
        check_claim(&table, &HomogeneityClaim::new(k, &[COVARIATE]), 1e-12)
            .unwrap()
            .holds
    };
    assert!(claim(ClaimKind::CostIntroduce));
    assert!(!claim(ClaimKind::Distribution));
}

#[test]
fn marginal_not_joint_scenario() {
    for seed in 0..10 {
        let table = make_table(&ScenarioSpec::new(Enforcement::MarginalNotJoint, 2, seed)).unwrap();
        let claim = |k| {
            check_claim(&table, &HomogeneityClaim::new(k, &[COVARIATE]), 1e-12)
                .unwrap()
                .holds
        };
        assert!(claim(ClaimKind::Distribution));
        assert!(!claim(ClaimKind::CostIntroduce));
        assert!(!claim(ClaimKind::CostRemove));
    }
}

#[test]
fn infeasible_specs_are_rejected_with_a_reason() {
    let bad = [
        ScenarioSpec::new(Enforcement::Distribution, 0, 1),
        ScenarioSpec::new(Enforcement::Distribution, 2, 1).with_gap(q(1, 10)),
        ScenarioSpec::new(Enforcement::Cost, 2, 1).with_gap(q(1, 1)),
        ScenarioSpec::new(Enforcement::Distribution, 2, 1).with_violation(q(1, 10)),
    ];
    for spec in bad {
        match make_table(&spec) {
            Err(Error::InfeasibleScenario(reason)) => assert!(!reason.is_empty()),
            other => panic!("{spec}: {other:?}"),
        }
    }
}

#[test]
fn scenario_text_round_trips() {
    let text = "enforce = cost\nstrata = 4\nbaseline_gap = 0.2\nseed = 42\n";
    let spec = ScenarioSpec::from_kv(text).unwrap();
    assert_eq!(spec.enforce, Enforcement::Cost);
    assert_eq!((spec.strata, spec.seed), (4, 42));
    assert_eq!(spec.baseline_gap, q(1, 5));
    assert_eq!(ScenarioSpec::from_kv(&spec.to_string()).unwrap(), spec);
    assert!(matches!(
        ScenarioSpec::from_kv("enforce = nothing\n"),
        Err(Error::Parse {
            line: 1,
            column: 11,
            ..
        })
    ));
    assert!(matches!(
        ScenarioSpec::from_kv("enforce = rr\ncolour = red\n"),
        Err(Error::Parse { line: 2, .. })
    ));
}

#[test]
fn null_table_has_null_quantities() {
    let table = transport_core::formats::read_joint_csv(
        "population,V,y0,y1,mass\ns,0,0,0,1\ns,0,1,1,1\nt,0,0,0,2\nt,0,1,1,1\n".as_bytes(),
    )
    .unwrap();
    let truth = true_target_quantities(&table, &PopulationId::target()).unwrap();
    for m in &truth.measures {
        let null = if m.kind == MeasureKind::RiskDifference {
            0.0
        } else {
            1.0
        };
        assert_eq!(m.value, null);
    }
    let cost = truth.cost.unwrap();
    assert_eq!((cost.g, cost.h), (1.0, 1.0));
}

#[test]
fn truth_agrees_with_independent_recomputation() {
    for (i, enforce) in Enforcement::ALL.into_iter().enumerate() {
        let table = make_table(&ScenarioSpec::new(enforce, 3, 100 + i as u64)).unwrap();
        let b = blocks(&table);
        for pop in ["s", "t"] {
            let truth = true_target_quantities(&table, &pop.parse().unwrap()).unwrap();
            let r1 = pooled_risk(&b, pop, true);
            let r0 = pooled_risk(&b, pop, false);
            assert!((truth.risk1 - f(&r1)).abs() <= 1e-12);
            assert!((truth.risk0 - f(&r0)).abs() <= 1e-12);
            for m in &truth.measures {
                let expected = match m.kind {
                    MeasureKind::RiskDifference => f(&(&r1 - &r0)),
                    MeasureKind::RiskRatio => f(&(&r1 / &r0)),
                    MeasureKind::OddsRatio => f(&(support::odds(&r1) / support::odds(&r0))),
                };
                assert!((m.value - expected).abs() <= 1e-12 * expected.abs().max(1.0));
            }
        }
    }
}

#[test]
fn generator_reference_vector() {
    let mut rng = SplitMix64::new(1234567);
    assert_eq!(rng.next_u64(), 6457827717110365317);
    assert_eq!(rng.next_u64(), 3203168211198807973);
}

#[test]
fn sampling_is_reproducible_and_consistent() {
    let table = make_table(&ScenarioSpec::new(Enforcement::Distribution, 2, 4)).unwrap();
    let a = sample_trial(&table, 2000, &q(1, 2), 8).unwrap();
    let b = sample_trial(&table, 2000, &q(1, 2), 8).unwrap();
    assert_eq!(a, b);
    assert!(a
        .records
        .iter()
        .all(|r| r.y == if r.a { r.y1 } else { r.y0 }));
    let treated = sample_trial(&table, 500, &q(1, 1), 8).unwrap();
    assert!(treated.records.iter().all(|r| r.a && r.y == r.y1));
}

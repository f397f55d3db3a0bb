//! Counterfactual outcome state transition (COST) parameters
//! `G = Pr(Y¹=1 | Y⁰=1)` and `H = Pr(Y¹=0 | Y⁰=0)`.
//!
//! `G` and `H` are only identified from trial arms under monotonicity,
//! which zeroes one off-diagonal cell of the joint of `(Y⁰, Y¹)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{to_f64, Q};
use crate::homogeneity::transition_pair;
use crate::model::{PopulationId, Risk, Stratum};
use crate::simgen::PotentialOutcomeTable;
use crate::standardization::{
    compute_weights, Approach, Assumption, StandardizationWeights, StratumSource, StratumTerm,
    TransportEstimate, WeightKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Identification {
    ExactFromJoint,
    MonotoneIncreasing,
    MonotoneDecreasing,
    /// Standardized from strata identified in different ways.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Monotonicity {
    /// `Y¹ ≥ Y⁰` for everyone: no one is harmed out of the outcome.
    Increasing,
    /// `Y¹ ≤ Y⁰` for everyone.
    Decreasing,
}

impl Monotonicity {
    pub fn code(self) -> &'static str {
        match self {
            Monotonicity::Increasing => "increasing",
            Monotonicity::Decreasing => "decreasing",
        }
    }

    fn identification(self) -> Identification {
        match self {
            Monotonicity::Increasing => Identification::MonotoneIncreasing,
            Monotonicity::Decreasing => Identification::MonotoneDecreasing,
        }
    }
}

impl fmt::Display for Monotonicity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Monotonicity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "increasing" => Ok(Monotonicity::Increasing),
            "decreasing" => Ok(Monotonicity::Decreasing),
            _ => Err(Error::InvalidLabel(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostParams {
    pub g: f64,
    pub h: f64,
    pub identification: Identification,
}

impl CostParams {
    pub fn new(g: f64, h: f64, identification: Identification) -> Result<Self> {
        for x in [g, h] {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidProbability(x));
            }
        }
        Ok(CostParams {
            g,
            h,
            identification,
        })
    }

    /// `Pr(Y¹=1) = G·p0 + (1−H)·(1−p0)` for baseline risk `p0`.
    pub fn predict(&self, p0: f64) -> f64 {
        // convex combination of g and 1-h: stays in [0, 1]
        (self.g * p0 + (1.0 - self.h) * (1.0 - p0)).clamp(0.0, 1.0)
    }
}

/// Exact `(G, H)` of one stratum.
pub fn cost_from_joint(
    table: &PotentialOutcomeTable,
    p: &PopulationId,
    v: &Stratum,
) -> Result<CostParams> {
    let (g, h) = exact_cost(table, p, v)?;
    CostParams::new(to_f64(&g), to_f64(&h), Identification::ExactFromJoint)
}

pub(crate) fn exact_cost(
    table: &PotentialOutcomeTable,
    p: &PopulationId,
    v: &Stratum,
) -> Result<(Q, Q)> {
    if !table.has_population(p) {
        return Err(Error::UnknownPopulation(p.to_string()));
    }
    let empty = Default::default();
    let cell = table.cell(p, v).unwrap_or(&empty);
    transition_pair(cell, true, p, v)
}

/// `(G, H)` forced by a zero off-diagonal cell: increasing gives `G = 1`,
/// `H = (1−r1)/(1−r0)`; decreasing gives `H = 1`, `G = r1/r0`.
pub(crate) fn identify_exact(r1: &Q, r0: &Q, direction: Monotonicity) -> Result<(Q, Q)> {
    let one = Q::one();
    let contradicted = || Error::MonotonicityContradicted {
        direction: direction.code(),
        risk1: to_f64(r1),
        risk0: to_f64(r0),
    };
    let degenerate = |event| Error::DegenerateBaseline {
        population: "(arm risks)".into(),
        stratum: "(all)".into(),
        event,
    };
    match direction {
        Monotonicity::Increasing => {
            if r1 < r0 {
                return Err(contradicted());
            }
            if *r0 == one {
                return Err(degenerate("Y^{a=0}=0"));
            }
            Ok((one.clone(), (&one - r1) / (&one - r0)))
        }
        Monotonicity::Decreasing => {
            if r1 > r0 {
                return Err(contradicted());
            }
            if r0.is_zero() {
                return Err(degenerate("Y^{a=0}=1"));
            }
            Ok((r1 / r0, one))
        }
    }
}

/// Identifies `(G, H)` from arm risks under monotonicity in `direction`.
pub fn cost_identify_monotone(
    risk1: &Risk,
    risk0: &Risk,
    direction: Monotonicity,
) -> Result<CostParams> {
    let exact = |r: &Risk| Q::new(r.numerator().into(), r.denominator().into());
    let (g, h) = identify_exact(&exact(risk1), &exact(risk0), direction)?;
    CostParams::new(to_f64(&g), to_f64(&h), direction.identification())
}

fn aligned<T>(params: &BTreeMap<Stratum, T>, weights: &StandardizationWeights) -> Result<()> {
    for v in weights.strata() {
        if !params.contains_key(v) {
            return Err(Error::WeightMismatch(format!(
                "no COST parameters for stratum {v}"
            )));
        }
    }
    Ok(())
}

/// Predicted target risks: per stratum `G·p0 + (1−H)(1−p0)` averaged over
/// `Pr(V=v | P=t)`.
pub fn predict_target_risk(
    params: &BTreeMap<Stratum, CostParams>,
    baseline_target: &BTreeMap<Stratum, f64>,
    target_weights: &StandardizationWeights,
) -> Result<TransportEstimate> {
    if target_weights.kind != WeightKind::Prevalence {
        return Err(Error::WeightMismatch(
            "predicted risks are averaged over Pr(V=v|P=t)".into(),
        ));
    }
    aligned(params, target_weights)?;
    let mut terms = Vec::with_capacity(target_weights.len());
    for (v, weight) in target_weights.iter() {
        let p0 = *baseline_target.get(v).ok_or_else(|| {
            Error::WeightMismatch(format!("no target baseline risk for stratum {v}"))
        })?;
        if !(0.0..=1.0).contains(&p0) {
            return Err(Error::InvalidProbability(p0));
        }
        terms.push(StratumTerm {
            stratum: v.clone(),
            weight,
            risk0: Some(p0),
            risk1: params[v].predict(p0),
        });
    }
    Ok(TransportEstimate::from_terms(
        Approach::Cost,
        Assumption::CostHomogeneity,
        terms,
    ))
}

/// Marginal target `G = Σ_v G_v·Pr(V=v|Y⁰=1,P=t)` and
/// `H = Σ_v H_v·Pr(V=v|Y⁰=0,P=t)`.
pub fn standardize_cost(
    params: &BTreeMap<Stratum, CostParams>,
    source: &impl StratumSource,
    target: &PopulationId,
) -> Result<CostParams> {
    let wg = compute_weights(source, WeightKind::BaselineCases, target)?;
    let wh = compute_weights(source, WeightKind::BaselineNonCases, target)?;
    aligned(params, &wg)?;
    aligned(params, &wh)?;
    let g: f64 = wg.iter().map(|(v, w)| w * params[v].g).sum();
    let h: f64 = wh.iter().map(|(v, w)| w * params[v].h).sum();
    let mut kinds = wg
        .strata()
        .chain(wh.strata())
        .map(|v| params[v].identification);
    let first = kinds.next().unwrap_or(Identification::ExactFromJoint);
    let identification = if kinds.all(|k| k == first) {
        first
    } else {
        Identification::Mixed
    };
    CostParams::new(g.clamp(0.0, 1.0), h.clamp(0.0, 1.0), identification)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumBias {
    pub stratum: Stratum,
    pub weight: f64,
    pub direction: Monotonicity,
    /// Source mass of the cell monotonicity assumes empty, within the stratum.
    pub off_diagonal_mass: f64,
    /// `|Pr(Y⁰=1|v,t) − Pr(Y⁰=1|v,s)|`.
    pub baseline_gap: f64,
    pub predicted_monotone: f64,
    pub predicted_true_cost: f64,
    pub true_target_risk: f64,
}

/// How far monotone identification moves the COST prediction of the target
/// risk under treatment, computed by exact enumeration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasReport {
    pub strata: Vec<StratumBias>,
    /// Prediction from monotone-identified source parameters.
    pub predicted_monotone: f64,
    /// Prediction from the true source parameters.
    pub predicted_true_cost: f64,
    /// `Pr(Y¹=1 | P=t)` in the table.
    pub true_target_risk: f64,
    /// `|predicted_monotone − predicted_true_cost|`: the part of the error
    /// due to non-monotonicity alone.
    pub bias: f64,
    /// `|predicted_monotone − true_target_risk|`; equals `bias` when the
    /// COST parameters are conditionally homogeneous.
    pub total_error: f64,
}

/// Applies monotone identification stratum by stratum in the source (the
/// direction follows the ordering of the source arm risks) and compares
/// the resulting target prediction with the prediction from the true source
/// `(G, H)` and with the truth.
///
/// A parameter whose conditioning event is empty in the source is taken as
/// 1; it multiplies a target mass of zero whenever baselines match.
pub fn monotonicity_bias(
    table: &PotentialOutcomeTable,
    source: &PopulationId,
    target: &PopulationId,
    v_set: &[String],
) -> Result<BiasReport> {
    let table = table.collapse(v_set)?;
    for p in [source, target] {
        if !table.has_population(p) {
            return Err(Error::UnknownPopulation(p.to_string()));
        }
    }
    let one = Q::one();
    let mut strata = Vec::new();
    let (mut mono, mut cost, mut truth) = (Q::zero(), Q::zero(), Q::zero());
    for v in table.strata(target) {
        let w = table.stratum_mass(target, v);
        if w.is_zero() {
            continue;
        }
        let src = table
            .cell(source, v)
            .filter(|c| !c.total().is_zero())
            .ok_or_else(|| Error::PositivityViolation {
                strata: vec![v.to_string()],
            })?
            .normalized()
            .unwrap_or_default();
        let (r1, r0) = (src.events(true), src.events(false));
        let direction = if r1 >= r0 {
            Monotonicity::Increasing
        } else {
            Monotonicity::Decreasing
        };
        let (g_m, h_m) = match identify_exact(&r1, &r0, direction) {
            Ok(gh) => gh,
            Err(_) => (one.clone(), one.clone()),
        };
        let conditional = |num: &Q, den: Q| {
            if den.is_zero() {
                one.clone()
            } else {
                num / den
            }
        };
        let g = conditional(src.mass(true, true), r0.clone());
        let h = conditional(src.mass(false, false), &one - &r0);
        let p0 = table.cf_risk(target, v, false)?;
        let predict = |g: &Q, h: &Q| g * &p0 + (&one - h) * (&one - &p0);
        let (pm, pc) = (predict(&g_m, &h_m), predict(&g, &h));
        let rt = table.cf_risk(target, v, true)?;
        let off = match direction {
            Monotonicity::Increasing => src.mass(true, false).clone(),
            Monotonicity::Decreasing => src.mass(false, true).clone(),
        };
        mono += &pm * &w;
        cost += &pc * &w;
        truth += &rt * &w;
        strata.push(StratumBias {
            stratum: v.clone(),
            weight: to_f64(&w),
            direction,
            off_diagonal_mass: to_f64(&off),
            baseline_gap: to_f64(&crate::exact::abs_diff(&p0, &r0)),
            predicted_monotone: to_f64(&pm),
            predicted_true_cost: to_f64(&pc),
            true_target_risk: to_f64(&rt),
        });
    }
    Ok(BiasReport {
        strata,
        predicted_monotone: to_f64(&mono),
        predicted_true_cost: to_f64(&cost),
        true_target_risk: to_f64(&truth),
        bias: to_f64(&crate::exact::abs_diff(&mono, &cost)),
        total_error: to_f64(&crate::exact::abs_diff(&mono, &truth)),
    })
}

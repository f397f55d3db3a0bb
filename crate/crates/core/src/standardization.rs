//! Standardizing trial results to a target covariate distribution.
//!
//! Three routes are provided, each valid under a different homogeneity
//! condition:
//!
//! 1. [`standardize_measure`]: a weighted average of stratum effect measures.
//!    Valid for collapsible measures (RD, RR) under conditional homogeneity
//!    of that measure, with measure-specific weights.
//! 2. [`standardize_predicted_risk`]: apply each stratum's effect to the
//!    target's stratum baseline risk, then average the predicted risks over
//!    the target covariate distribution. Valid for any measure under
//!    conditional homogeneity of that measure.
//! 3. [`standardize_distribution`]: standardize the risk under each
//!    treatment separately. Valid under conditional homogeneity in
//!    distribution; [`ipw_estimate`] is the same estimator written as an
//!    inverse-probability-weighted mean.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::exact::to_f64;
use crate::model::{EffectMeasure, MeasureKind, PopulationId, StratifiedCounts, Stratum};
use crate::simgen::PotentialOutcomeTable;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// Per-stratum quantities needed to compute standardization weights.
pub trait StratumSource {
    /// Strata of `p` with positive probability.
    fn support(&self, p: &PopulationId) -> Result<Vec<Stratum>>;
    /// `Pr(V=v | P=p)`.
    fn stratum_share(&self, p: &PopulationId, v: &Stratum) -> Result<f64>;
    /// `Pr(Y^{a=0}=1 | V=v, P=p)`.
    fn baseline_risk(&self, p: &PopulationId, v: &Stratum) -> Result<f64>;
}

impl StratumSource for StratifiedCounts {
    fn support(&self, p: &PopulationId) -> Result<Vec<Stratum>> {
        if !self.has_population(p) {
            return Err(Error::UnknownPopulation(p.to_string()));
        }
        Ok(self
            .strata(p)
            .into_iter()
            .filter(|v| self.stratum_total(p, v) > 0)
            .cloned()
            .collect())
    }

    fn stratum_share(&self, p: &PopulationId, v: &Stratum) -> Result<f64> {
        let total = self.population_total(p);
        if total == 0 {
            return Err(Error::UnknownPopulation(p.to_string()));
        }
        Ok(self.stratum_total(p, v) as f64 / total as f64)
    }

    fn baseline_risk(&self, p: &PopulationId, v: &Stratum) -> Result<f64> {
        Ok(self.risk(p, v, false)?.value())
    }
}

impl StratumSource for PotentialOutcomeTable {
    fn support(&self, p: &PopulationId) -> Result<Vec<Stratum>> {
        if !self.has_population(p) {
            return Err(Error::UnknownPopulation(p.to_string()));
        }
        Ok(self
            .iter()
            .filter(|(q, _, c)| *q == p && !num_traits::Zero::is_zero(&c.total()))
            .map(|(_, v, _)| v.clone())
            .collect())
    }

    fn stratum_share(&self, p: &PopulationId, v: &Stratum) -> Result<f64> {
        Ok(to_f64(&self.stratum_mass(p, v)))
    }

    fn baseline_risk(&self, p: &PopulationId, v: &Stratum) -> Result<f64> {
        Ok(to_f64(&self.cf_risk(p, v, false)?))
    }
}

/// Which conditional covariate distribution the weights represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    /// `Pr(V=v | P=t)`: for RD and for predicted-risk standardization.
    Prevalence,
    /// `Pr(V=v | Y^{a=0}=1, P=t)`: for RR and the COST parameter G.
    BaselineCases,
    /// `Pr(V=v | Y^{a=0}=0, P=t)`: for the COST parameter H.
    BaselineNonCases,
}

impl WeightKind {
    /// The weights that make a collapsible measure's weighted average equal
    /// its marginal value.
    pub fn for_measure(kind: MeasureKind) -> Result<WeightKind> {
        match kind {
            MeasureKind::RiskDifference => Ok(WeightKind::Prevalence),
            MeasureKind::RiskRatio => Ok(WeightKind::BaselineCases),
            MeasureKind::OddsRatio => Err(Error::NonCollapsibleMeasure(kind)),
        }
    }
}

/// Normalized, non-negative weights over strata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StandardizationWeights {
    pub kind: WeightKind,
    weights: BTreeMap<Stratum, f64>,
}

impl StandardizationWeights {
    /// Validates and stores weights; strata with weight zero are dropped.
    pub fn new(kind: WeightKind, weights: BTreeMap<Stratum, f64>) -> Result<Self> {
        let mut sum = 0.0;
        for (v, &w) in &weights {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::WeightMismatch(format!(
                    "weight {w} for stratum {v} outside [0, 1]"
                )));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::WeightMismatch(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        let weights = weights.into_iter().filter(|&(_, w)| w > 0.0).collect();
        Ok(StandardizationWeights { kind, weights })
    }

    pub fn get(&self, v: &Stratum) -> Option<f64> {
        self.weights.get(v).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Stratum, f64)> {
        self.weights.iter().map(|(v, &w)| (v, w))
    }

    pub fn strata(&self) -> impl Iterator<Item = &Stratum> {
        self.weights.keys()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Weights of `kind` for the target population of `source`.
pub fn compute_weights(
    source: &impl StratumSource,
    kind: WeightKind,
    target: &PopulationId,
) -> Result<StandardizationWeights> {
    let mut raw = BTreeMap::new();
    for v in source.support(target)? {
        let share = source.stratum_share(target, &v)?;
        let w = match kind {
            WeightKind::Prevalence => share,
            WeightKind::BaselineCases => share * source.baseline_risk(target, &v)?,
            WeightKind::BaselineNonCases => share * (1.0 - source.baseline_risk(target, &v)?),
        };
        raw.insert(v, w);
    }
    let total: f64 = raw.values().sum();
    if total <= 0.0 {
        return Err(Error::ZeroBaselineRisk {
            population: target.to_string(),
            event: match kind {
                WeightKind::Prevalence => "V in support",
                WeightKind::BaselineCases => "Y^{a=0}=1",
                WeightKind::BaselineNonCases => "Y^{a=0}=0",
            },
        });
    }
    for w in raw.values_mut() {
        *w /= total;
    }
    StandardizationWeights::new(kind, raw)
}

/// An effect measure observed in one stratum of the source population.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumEffect {
    pub stratum: Stratum,
    pub measure: EffectMeasure,
}

/// Stratum effects of `kind` computed from the source arms of `counts`,
/// restricted to `strata`.
pub fn stratum_effects<'a>(
    counts: &StratifiedCounts,
    source: &PopulationId,
    kind: MeasureKind,
    strata: impl IntoIterator<Item = &'a Stratum>,
) -> Result<Vec<StratumEffect>> {
    strata
        .into_iter()
        .map(|v| {
            let r1 = counts.risk(source, v, true)?;
            let r0 = counts.risk(source, v, false)?;
            Ok(StratumEffect {
                stratum: v.clone(),
                measure: crate::model::effect_measure(kind, &r1, &r0)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Approach {
    /// Weighted average of stratum effect measures.
    Measure,
    /// Weighted average of predicted stratum risks.
    PredictedRisk,
    /// Separate standardization of each counterfactual risk.
    Distribution,
    /// Inverse-probability-weighted form of [`Approach::Distribution`].
    Ipw,
    /// Prediction from COST parameters.
    Cost,
}

impl Approach {
    pub fn code(self) -> &'static str {
        match self {
            Approach::Measure => "1",
            Approach::PredictedRisk => "2",
            Approach::Distribution => "3",
            Approach::Ipw => "ipw",
            Approach::Cost => "cost",
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl std::str::FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Approach::Measure),
            "2" => Ok(Approach::PredictedRisk),
            "3" => Ok(Approach::Distribution),
            "ipw" => Ok(Approach::Ipw),
            "cost" => Ok(Approach::Cost),
            _ => Err(Error::InvalidLabel(s.to_owned())),
        }
    }
}

impl Serialize for Approach {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

/// The homogeneity condition an estimate relies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    MeasureHomogeneity(MeasureKind),
    DistributionHomogeneity,
    CostHomogeneity,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assumption::MeasureHomogeneity(k) => {
                write!(f, "conditional effect homogeneity on the {} scale", k)
            }
            Assumption::DistributionHomogeneity => {
                f.write_str("conditional effect homogeneity in distribution (Y^a independent of P given V)")
            }
            Assumption::CostHomogeneity => f.write_str(
                "conditional homogeneity of COST parameters (Y^{a=1} independent of P given Y^{a=0}, V)",
            ),
        }
    }
}

impl Serialize for Assumption {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// One stratum's contribution to a standardized estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumTerm {
    pub stratum: Stratum,
    pub weight: f64,
    pub risk0: Option<f64>,
    pub risk1: f64,
}

/// Predicted outcome risks in the target population.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportEstimate {
    pub approach: Approach,
    pub assumption: Assumption,
    /// `Pr(Y^{a=1}=1 | P=t)`.
    pub risk1: f64,
    /// `Pr(Y^{a=0}=1 | P=t)` when the route determines it.
    pub risk0: Option<f64>,
    /// Every measure defined at `(risk1, risk0)`.
    pub measures: Vec<EffectMeasure>,
    pub terms: Vec<StratumTerm>,
}

impl TransportEstimate {
    pub(crate) fn from_terms(
        approach: Approach,
        assumption: Assumption,
        terms: Vec<StratumTerm>,
    ) -> Self {
        let risk1 = terms.iter().map(|t| t.weight * t.risk1).sum();
        let risk0 = terms
            .iter()
            .map(|t| t.risk0.map(|r| r * t.weight))
            .sum::<Option<f64>>();
        let measures = match risk0 {
            Some(r0) => MeasureKind::ALL
                .iter()
                .filter_map(|&k| EffectMeasure::from_risks(k, risk1, r0).ok())
                .collect(),
            None => Vec::new(),
        };
        TransportEstimate {
            approach,
            assumption,
            risk1,
            risk0,
            measures,
            terms,
        }
    }

    pub fn measure(&self, kind: MeasureKind) -> Option<EffectMeasure> {
        self.measures.iter().copied().find(|m| m.kind == kind)
    }
}

fn check_alignment<'a>(
    weights: &StandardizationWeights,
    strata: impl IntoIterator<Item = &'a Stratum>,
) -> Result<()> {
    let given: Vec<&Stratum> = strata.into_iter().collect();
    for v in weights.strata() {
        if !given.contains(&v) {
            return Err(Error::WeightMismatch(format!(
                "no stratum effect for weighted stratum {v}"
            )));
        }
    }
    for v in &given {
        if weights.get(v).is_none() {
            return Err(Error::WeightMismatch(format!("stratum {v} has no weight")));
        }
    }
    if given.len() != weights.len() {
        return Err(Error::WeightMismatch("duplicate strata".into()));
    }
    Ok(())
}

/// Approach 1: `M_t = Σ_v M_{s,v} · w_v` for a collapsible measure `M`.
///
/// RD requires prevalence weights `Pr(V=v|P=t)`; RR requires
/// `Pr(V=v|Y^{a=0}=1,P=t)`. Both come from [`compute_weights`].
pub fn standardize_measure(
    effects: &[StratumEffect],
    weights: &StandardizationWeights,
    kind: MeasureKind,
) -> Result<EffectMeasure> {
    let required = WeightKind::for_measure(kind)?;
    if weights.kind != required {
        return Err(Error::WeightMismatch(format!(
            "{kind} must be standardized with {required:?} weights, got {:?}",
            weights.kind
        )));
    }
    if let Some(e) = effects.iter().find(|e| e.measure.kind != kind) {
        return Err(Error::WeightMismatch(format!(
            "stratum {} carries a {} where {kind} was requested",
            e.stratum, e.measure.kind
        )));
    }
    check_alignment(weights, effects.iter().map(|e| &e.stratum))?;
    let value = effects
        .iter()
        .map(|e| e.measure.value * weights.get(&e.stratum).unwrap_or(0.0))
        .sum();
    Ok(EffectMeasure { kind, value })
}

/// Approach 2: predicted stratum risks under treatment, averaged over the
/// target covariate distribution.
///
/// A stratum whose predicted risk leaves `[0, 1]` is an error, never
/// clamped.
pub fn standardize_predicted_risk(
    baseline_target: &BTreeMap<Stratum, f64>,
    effects: &[StratumEffect],
    target_weights: &StandardizationWeights,
) -> Result<TransportEstimate> {
    if target_weights.kind != WeightKind::Prevalence {
        return Err(Error::WeightMismatch(
            "predicted risks are averaged over Pr(V=v|P=t)".into(),
        ));
    }
    let kind = match effects.first() {
        Some(e) => e.measure.kind,
        None => return Err(Error::WeightMismatch("no stratum effects".into())),
    };
    if effects.iter().any(|e| e.measure.kind != kind) {
        return Err(Error::WeightMismatch(
            "stratum effects mix measure kinds".into(),
        ));
    }
    check_alignment(target_weights, effects.iter().map(|e| &e.stratum))?;
    let mut terms = Vec::with_capacity(effects.len());
    for e in effects {
        let r0 = *baseline_target.get(&e.stratum).ok_or_else(|| {
            Error::WeightMismatch(format!("no target baseline risk for stratum {}", e.stratum))
        })?;
        if !(0.0..=1.0).contains(&r0) {
            return Err(Error::InvalidProbability(r0));
        }
        let r1 = e.measure.apply(r0);
        if !(0.0..=1.0).contains(&r1) {
            return Err(Error::RiskOutOfRange {
                stratum: e.stratum.to_string(),
                value: r1,
            });
        }
        terms.push(StratumTerm {
            stratum: e.stratum.clone(),
            weight: target_weights.get(&e.stratum).unwrap_or(0.0),
            risk0: Some(r0),
            risk1: r1,
        });
    }
    Ok(TransportEstimate::from_terms(
        Approach::PredictedRisk,
        Assumption::MeasureHomogeneity(kind),
        terms,
    ))
}

/// Target baseline risks `Pr(Y=1 | A=0, V=v, P=t)` for every weighted
/// stratum.
pub fn target_baselines(
    counts: &StratifiedCounts,
    target: &PopulationId,
    weights: &StandardizationWeights,
) -> Result<BTreeMap<Stratum, f64>> {
    weights
        .strata()
        .map(|v| Ok((v.clone(), counts.risk(target, v, false)?.value())))
        .collect()
}

/// Target strata with positive mass, checked for source support in both
/// arms. Every violating stratum is listed.
fn supported_target_strata(
    counts: &StratifiedCounts,
    source: &PopulationId,
    target: &PopulationId,
) -> Result<Vec<Stratum>> {
    if !counts.has_population(source) {
        return Err(Error::UnknownPopulation(source.to_string()));
    }
    let strata = counts.support(target)?;
    let mut missing = Vec::new();
    for v in &strata {
        for a in [false, true] {
            if counts.risk(source, v, a).is_err() {
                missing.push(format!("{v} (source arm a={})", a as u8));
            }
        }
    }
    if missing.is_empty() {
        Ok(strata)
    } else {
        Err(Error::PositivityViolation { strata: missing })
    }
}

/// Approach 3: `Pr(Y^a=1 | P=t) = Σ_v Pr(Y=1 | A=a, V=v, P=s) · Pr(V=v | P=t)`
/// for both arms, with `V` the covariates in `v_set`.
pub fn standardize_distribution(
    counts: &StratifiedCounts,
    v_set: &[String],
    source: &PopulationId,
    target: &PopulationId,
) -> Result<TransportEstimate> {
    let counts = counts.collapse(v_set)?;
    let strata = supported_target_strata(&counts, source, target)?;
    let weights = compute_weights(&counts, WeightKind::Prevalence, target)?;
    let terms = strata
        .iter()
        .map(|v| {
            Ok(StratumTerm {
                stratum: v.clone(),
                weight: weights.get(v).unwrap_or(0.0),
                risk0: Some(counts.risk(source, v, false)?.value()),
                risk1: counts.risk(source, v, true)?.value(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransportEstimate::from_terms(
        Approach::Distribution,
        Assumption::DistributionHomogeneity,
        terms,
    ))
}

/// Inverse-probability-weighted risks in the source population.
///
/// Each source individual in stratum `v` and arm `a` gets weight
/// `[Pr(V=v|P=t) / Pr(V=v|P=s)] / Pr(A=a | V=v, P=s)`; the risk in arm `a`
/// is the weighted mean outcome among individuals with `A=a`. On count data
/// this equals [`standardize_distribution`] algebraically.
pub fn ipw_estimate(
    counts: &StratifiedCounts,
    v_set: &[String],
    source: &PopulationId,
    target: &PopulationId,
) -> Result<TransportEstimate> {
    let counts = counts.collapse(v_set)?;
    let strata = supported_target_strata(&counts, source, target)?;
    let n_source = counts.population_total(source) as f64;
    let n_target = counts.population_total(target) as f64;

    let mut weighted_events = [0.0f64; 2];
    let mut weighted_n = [0.0f64; 2];
    let mut terms = Vec::with_capacity(strata.len());
    for v in &strata {
        let cell = counts.cell(source, v).copied().unwrap_or_default();
        let n_v = cell.total() as f64;
        let odds = (counts.stratum_total(target, v) as f64 / n_target) / (n_v / n_source);
        let mut per_arm = [0.0; 2];
        for a in [false, true] {
            let n_va = cell.arm_total(a) as f64;
            let w = odds / (n_va / n_v);
            let events = cell.get(a, true) as f64;
            weighted_events[a as usize] += w * events;
            weighted_n[a as usize] += w * n_va;
            per_arm[a as usize] = events / n_va;
        }
        terms.push(StratumTerm {
            stratum: v.clone(),
            weight: odds * n_v / n_source,
            risk0: Some(per_arm[0]),
            risk1: per_arm[1],
        });
    }
    let risk1 = weighted_events[1] / weighted_n[1];
    let risk0 = weighted_events[0] / weighted_n[0];
    let measures = MeasureKind::ALL
        .iter()
        .filter_map(|&k| EffectMeasure::from_risks(k, risk1, risk0).ok())
        .collect();
    Ok(TransportEstimate {
        approach: Approach::Ipw,
        assumption: Assumption::DistributionHomogeneity,
        risk1,
        risk0: Some(risk0),
        measures,
        terms,
    })
}

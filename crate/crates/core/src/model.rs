//! Populations, covariate strata, observed counts and the three standard
//! effect measures.
//!
//! Observed data are binary treatment `a` and binary outcome `y` within
//! discrete covariate strata of each population. Risks keep their integer
//! numerator and denominator so that oracle comparisons can be made exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Label of a population. `s` is the study population, `t` the target.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct PopulationId(String);

impl PopulationId {
    pub const STUDY: &'static str = "s";
    pub const TARGET: &'static str = "t";

    pub fn new(label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if is_identifier(&label) {
            Ok(PopulationId(label))
        } else {
            Err(Error::InvalidLabel(label))
        }
    }

    pub fn study() -> Self {
        PopulationId(Self::STUDY.to_owned())
    }

    pub fn target() -> Self {
        PopulationId(Self::TARGET.to_owned())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_study(&self) -> bool {
        self.0 == Self::STUDY
    }
}

impl fmt::Display for PopulationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for PopulationId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PopulationId::new(s)
    }
}

/// Identifier grammar shared by population labels, covariate names and
/// diagram node names.
pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    s.len() <= 64 && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Covariate levels are short printable tokens without separators.
pub(crate) fn is_level(s: &str) -> bool {
    !s.is_empty()
        && s.len() <= 64
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | '+'))
}

/// One assignment of levels to the covariates `V`, e.g. `sex=f,gene=2`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Stratum(Vec<(String, String)>);

impl Stratum {
    pub fn new<N, L>(assignments: impl IntoIterator<Item = (N, L)>) -> Result<Self>
    where
        N: Into<String>,
        L: Into<String>,
    {
        let assignments: Vec<(String, String)> = assignments
            .into_iter()
            .map(|(n, l)| (n.into(), l.into()))
            .collect();
        let mut seen = BTreeSet::new();
        for (name, level) in &assignments {
            if !is_identifier(name) {
                return Err(Error::InvalidLabel(name.clone()));
            }
            if !is_level(level) {
                return Err(Error::InvalidLabel(level.clone()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateCovariate(name.clone()));
            }
        }
        Ok(Stratum(assignments))
    }

    /// The stratum of a dataset without covariates.
    pub fn empty() -> Self {
        Stratum(Vec::new())
    }

    pub fn assignments(&self) -> &[(String, String)] {
        &self.0
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|(n, _)| n.as_str())
    }

    pub fn level(&self, name: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, l)| l.as_str())
    }

    /// Keep only the named covariates, in the order given.
    pub fn restrict(&self, names: &[String]) -> Result<Stratum> {
        names
            .iter()
            .map(|n| {
                self.level(n)
                    .map(|l| (n.clone(), l.to_owned()))
                    .ok_or_else(|| Error::UnknownCovariate(n.clone()))
            })
            .collect::<Result<Vec<_>>>()
            .map(Stratum)
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("(all)");
        }
        for (i, (n, l)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{n}={l}")?;
        }
        Ok(())
    }
}

impl Serialize for Stratum {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Checks that a set of covariate names is valid and duplicate free.
pub(crate) fn validate_covariates(names: &[String]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for name in names {
        if !is_identifier(name) {
            return Err(Error::InvalidLabel(name.clone()));
        }
        if !seen.insert(name.as_str()) {
            return Err(Error::DuplicateCovariate(name.clone()));
        }
    }
    Ok(())
}

/// An empirical risk `events / total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Risk {
    numerator: u64,
    denominator: u64,
}

impl Risk {
    pub fn new(events: u64, total: u64) -> Result<Self> {
        if total == 0 || events > total {
            return Err(Error::InvalidProbability(if total == 0 {
                f64::NAN
            } else {
                events as f64 / total as f64
            }));
        }
        Ok(Risk {
            numerator: events,
            denominator: total,
        })
    }

    pub fn numerator(&self) -> u64 {
        self.numerator
    }

    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    pub fn value(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }

    pub fn as_ratio(&self) -> Ratio<u64> {
        Ratio::new(self.numerator, self.denominator)
    }
}

impl Serialize for Risk {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("Risk", 3)?;
        s.serialize_field("numerator", &self.numerator)?;
        s.serialize_field("denominator", &self.denominator)?;
        s.serialize_field("value", &self.value())?;
        s.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum MeasureKind {
    #[serde(rename = "rd")]
    RiskDifference,
    #[serde(rename = "rr")]
    RiskRatio,
    #[serde(rename = "or")]
    OddsRatio,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 3] = [
        MeasureKind::RiskDifference,
        MeasureKind::RiskRatio,
        MeasureKind::OddsRatio,
    ];

    pub fn code(self) -> &'static str {
        match self {
            MeasureKind::RiskDifference => "rd",
            MeasureKind::RiskRatio => "rr",
            MeasureKind::OddsRatio => "or",
        }
    }

    /// RD and RR are collapsible with measure-specific weights; OR is not.
    pub fn is_collapsible(self) -> bool {
        !matches!(self, MeasureKind::OddsRatio)
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeasureKind::RiskDifference => "RD",
            MeasureKind::RiskRatio => "RR",
            MeasureKind::OddsRatio => "OR",
        })
    }
}

impl FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rd" => Ok(MeasureKind::RiskDifference),
            "rr" => Ok(MeasureKind::RiskRatio),
            "or" => Ok(MeasureKind::OddsRatio),
            _ => Err(Error::InvalidLabel(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectMeasure {
    pub kind: MeasureKind,
    pub value: f64,
}

fn check_probability(r: f64) -> Result<()> {
    if (0.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(Error::InvalidProbability(r))
    }
}

impl EffectMeasure {
    /// Contrast of the risk under treatment `risk1` with the risk under no
    /// treatment `risk0`.
    pub fn from_risks(kind: MeasureKind, risk1: f64, risk0: f64) -> Result<Self> {
        check_probability(risk1)?;
        check_probability(risk0)?;
        let value = match kind {
            MeasureKind::RiskDifference => risk1 - risk0,
            MeasureKind::RiskRatio => {
                if risk0 == 0.0 {
                    return Err(Error::UndefinedMeasure {
                        kind,
                        reason: "baseline risk is 0",
                    });
                }
                risk1 / risk0
            }
            MeasureKind::OddsRatio => {
                if risk0 == 0.0 || risk1 == 0.0 {
                    return Err(Error::UndefinedMeasure {
                        kind,
                        reason: "a risk is 0",
                    });
                }
                if risk0 == 1.0 || risk1 == 1.0 {
                    return Err(Error::UndefinedMeasure {
                        kind,
                        reason: "a risk is 1",
                    });
                }
                (risk1 / (1.0 - risk1)) / (risk0 / (1.0 - risk0))
            }
        };
        Ok(EffectMeasure { kind, value })
    }

    /// Predicted risk under treatment when this effect acts on `baseline`.
    ///
    /// The result is not range-checked; callers decide how to report a
    /// prediction outside `[0, 1]`.
    pub fn apply(&self, baseline: f64) -> f64 {
        match self.kind {
            MeasureKind::RiskDifference => baseline + self.value,
            MeasureKind::RiskRatio => baseline * self.value,
            MeasureKind::OddsRatio => {
                if baseline <= 0.0 || baseline >= 1.0 {
                    return baseline;
                }
                let odds = self.value * baseline / (1.0 - baseline);
                odds / (1.0 + odds)
            }
        }
    }
}

/// `effect_measure(kind, r1, r0)` on observed risks.
pub fn effect_measure(kind: MeasureKind, risk1: &Risk, risk0: &Risk) -> Result<EffectMeasure> {
    EffectMeasure::from_risks(kind, risk1.value(), risk0.value())
}

/// Counts of the four `(a, y)` cells of one population stratum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ArmCounts {
    cells: [[u64; 2]; 2],
}

impl ArmCounts {
    pub fn get(&self, a: bool, y: bool) -> u64 {
        self.cells[a as usize][y as usize]
    }

    pub fn arm_total(&self, a: bool) -> u64 {
        self.cells[a as usize][0] + self.cells[a as usize][1]
    }

    pub fn total(&self) -> u64 {
        self.arm_total(false) + self.arm_total(true)
    }

    fn add(&mut self, a: bool, y: bool, count: u64) -> Result<()> {
        let cell = self.cells[a as usize][y as usize]
            .checked_add(count)
            .ok_or(Error::CountOverflow)?;
        self.cells[a as usize][y as usize] = cell;
        Ok(())
    }
}

/// Observed cell counts keyed by population, stratum, treatment and outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratifiedCounts {
    covariates: Vec<String>,
    cells: BTreeMap<(PopulationId, Stratum), ArmCounts>,
    // grand total; bounding it keeps every partial sum representable
    total: u64,
}

impl StratifiedCounts {
    pub fn new(covariates: Vec<String>) -> Result<Self> {
        validate_covariates(&covariates)?;
        Ok(StratifiedCounts {
            covariates,
            cells: BTreeMap::new(),
            total: 0,
        })
    }

    pub fn covariates(&self) -> &[String] {
        &self.covariates
    }

    /// Adds `count` to a cell; duplicate keys accumulate.
    pub fn add(
        &mut self,
        population: PopulationId,
        stratum: Stratum,
        a: bool,
        y: bool,
        count: u64,
    ) -> Result<()> {
        if !stratum
            .names()
            .eq(self.covariates.iter().map(String::as_str))
        {
            return Err(Error::CovariateMismatch {
                expected: self.covariates.join(","),
                found: stratum.names().collect::<Vec<_>>().join(","),
            });
        }
        let total = self.total.checked_add(count).ok_or(Error::CountOverflow)?;
        self.cells
            .entry((population, stratum))
            .or_default()
            .add(a, y, count)?;
        self.total = total;
        Ok(())
    }

    pub fn populations(&self) -> Vec<PopulationId> {
        let set: BTreeSet<&PopulationId> = self.cells.keys().map(|(p, _)| p).collect();
        set.into_iter().cloned().collect()
    }

    pub fn has_population(&self, p: &PopulationId) -> bool {
        self.cells.keys().any(|(q, _)| q == p)
    }

    /// Strata recorded for a population, in sorted order.
    pub fn strata(&self, p: &PopulationId) -> Vec<&Stratum> {
        self.cells
            .keys()
            .filter(|(q, _)| q == p)
            .map(|(_, v)| v)
            .collect()
    }

    pub fn cell(&self, p: &PopulationId, v: &Stratum) -> Option<&ArmCounts> {
        self.cells.get(&(p.clone(), v.clone()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PopulationId, &Stratum, &ArmCounts)> {
        self.cells.iter().map(|((p, v), c)| (p, v, c))
    }

    pub fn stratum_total(&self, p: &PopulationId, v: &Stratum) -> u64 {
        self.cell(p, v).map_or(0, ArmCounts::total)
    }

    pub fn population_total(&self, p: &PopulationId) -> u64 {
        self.iter()
            .filter(|(q, _, _)| *q == p)
            .map(|(_, _, c)| c.total())
            .sum()
    }

    /// Empirical `Pr(Y=1 | A=a, V=v, P=p)`.
    pub fn risk(&self, p: &PopulationId, v: &Stratum, a: bool) -> Result<Risk> {
        let empty = || Error::EmptyCell {
            population: p.to_string(),
            stratum: v.to_string(),
            arm: a as u8,
        };
        let cell = self.cell(p, v).ok_or_else(empty)?;
        let total = cell.arm_total(a);
        if total == 0 {
            return Err(empty());
        }
        Risk::new(cell.get(a, true), total)
    }

    /// Risk in arm `a` of population `p`, pooling all strata.
    pub fn marginal_risk(&self, p: &PopulationId, a: bool) -> Result<Risk> {
        let (events, total) = self
            .iter()
            .filter(|(q, _, _)| *q == p)
            .fold((0u64, 0u64), |(e, t), (_, _, c)| {
                (e + c.get(a, true), t + c.arm_total(a))
            });
        if total == 0 {
            return Err(Error::EmptyCell {
                population: p.to_string(),
                stratum: Stratum::empty().to_string(),
                arm: a as u8,
            });
        }
        Risk::new(events, total)
    }

    /// Sums over covariates outside `keep`; the result is stratified by
    /// `keep` in the order given.
    pub fn collapse(&self, keep: &[String]) -> Result<StratifiedCounts> {
        for name in keep {
            if !self.covariates.contains(name) {
                return Err(Error::UnknownCovariate(name.clone()));
            }
        }
        let mut out = StratifiedCounts::new(keep.to_vec())?;
        for (p, v, c) in self.iter() {
            let restricted = v.restrict(keep)?;
            for a in [false, true] {
                for y in [false, true] {
                    out.add(p.clone(), restricted.clone(), a, y, c.get(a, y))?;
                }
            }
        }
        Ok(out)
    }
}

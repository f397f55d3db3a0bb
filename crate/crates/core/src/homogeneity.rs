//! Checkers for the conditional effect homogeneity definitions and for exact
//! conditional independence in enumerated joints.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{Signed, Zero};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::exact::{to_f64, Q};
use crate::model::{MeasureKind, PopulationId, StratifiedCounts, Stratum};
use crate::simgen::{JointCell, JointDistribution, PotentialOutcomeTable, MAX_ENUMERATED_NODES};

/// One row of the table of homogeneity definitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClaimKind {
    /// Equal stratum effect measures across populations.
    Measure(MeasureKind),
    /// `Y^a ⟂ P | V` for both values of `a`.
    Distribution,
    /// `Y^{a=1} ⟂ P | Y^{a=0}, V`: equal `G` and `H`.
    CostIntroduce,
    /// `Y^{a=0} ⟂ P | Y^{a=1}, V`: equal `Pr(Y⁰=1|Y¹=1)` and `Pr(Y⁰=0|Y¹=0)`.
    CostRemove,
}

impl ClaimKind {
    pub const ALL: [ClaimKind; 6] = [
        ClaimKind::Measure(MeasureKind::RiskDifference),
        ClaimKind::Measure(MeasureKind::RiskRatio),
        ClaimKind::Measure(MeasureKind::OddsRatio),
        ClaimKind::Distribution,
        ClaimKind::CostIntroduce,
        ClaimKind::CostRemove,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ClaimKind::Measure(k) => k.code(),
            ClaimKind::Distribution => "distribution",
            ClaimKind::CostIntroduce => "cost-introduce",
            ClaimKind::CostRemove => "cost-remove",
        }
    }

    /// Names of the per-stratum quantities compared across populations.
    pub fn quantities(self) -> &'static [&'static str] {
        match self {
            ClaimKind::Measure(MeasureKind::RiskDifference) => &["RD"],
            ClaimKind::Measure(MeasureKind::RiskRatio) => &["RR"],
            ClaimKind::Measure(MeasureKind::OddsRatio) => &["OR"],
            ClaimKind::Distribution => &["Pr(Y^{a=0}=1)", "Pr(Y^{a=1}=1)"],
            ClaimKind::CostIntroduce => &["G", "H"],
            ClaimKind::CostRemove => &["Pr(Y^{a=0}=1|Y^{a=1}=1)", "Pr(Y^{a=0}=0|Y^{a=1}=0)"],
        }
    }

    /// Whether the claim concerns the joint of `(Y⁰, Y¹)`, which trial
    /// counts do not reveal.
    pub fn needs_joint(self) -> bool {
        matches!(self, ClaimKind::CostIntroduce | ClaimKind::CostRemove)
    }
}

impl fmt::Display for ClaimKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ClaimKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClaimKind::ALL
            .into_iter()
            .find(|k| k.code() == s)
            .ok_or_else(|| Error::InvalidLabel(s.to_owned()))
    }
}

impl Serialize for ClaimKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HomogeneityClaim {
    pub kind: ClaimKind,
    pub given: Vec<String>,
}

impl HomogeneityClaim {
    pub fn new(kind: ClaimKind, given: &[&str]) -> Self {
        HomogeneityClaim {
            kind,
            given: given.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationValues {
    pub population: PopulationId,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumResidual {
    pub stratum: Stratum,
    pub populations: Vec<PopulationValues>,
    /// Largest absolute difference from the reference population.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClaimVerdict {
    pub claim: HomogeneityClaim,
    pub holds: bool,
    pub tolerance: f64,
    pub reference: PopulationId,
    pub quantities: Vec<&'static str>,
    pub max_residual: f64,
    pub strata: Vec<StratumResidual>,
}

/// Exact per-stratum quantities for one population.
trait ClaimSource {
    fn populations(&self) -> Vec<PopulationId>;
    fn strata(&self) -> Vec<Stratum>;
    fn quantities(&self, p: &PopulationId, v: &Stratum, kind: ClaimKind) -> Result<Vec<Q>>;
}

fn degenerate(p: &PopulationId, v: &Stratum, event: &'static str) -> Error {
    Error::DegenerateBaseline {
        population: p.to_string(),
        stratum: v.to_string(),
        event,
    }
}

/// Measure `kind` from exact risks, with undefined cases reported against
/// the stratum.
pub(crate) fn exact_measure(
    kind: MeasureKind,
    r1: &Q,
    r0: &Q,
    p: &PopulationId,
    v: &Stratum,
) -> Result<Q> {
    let one = Q::from_integer(1.into());
    match kind {
        MeasureKind::RiskDifference => Ok(r1 - r0),
        MeasureKind::RiskRatio => {
            if r0.is_zero() {
                return Err(degenerate(p, v, "Y^{a=0}=1"));
            }
            Ok(r1 / r0)
        }
        MeasureKind::OddsRatio => {
            if r0.is_zero() {
                return Err(degenerate(p, v, "Y^{a=0}=1"));
            }
            if r1.is_zero() {
                return Err(degenerate(p, v, "Y^{a=1}=1"));
            }
            if *r0 == one {
                return Err(degenerate(p, v, "Y^{a=0}=0"));
            }
            if *r1 == one {
                return Err(degenerate(p, v, "Y^{a=1}=0"));
            }
            Ok((r1 / (&one - r1)) / (r0 / (&one - r0)))
        }
    }
}

fn risk_quantities(kind: ClaimKind, r1: Q, r0: Q, p: &PopulationId, v: &Stratum) -> Result<Vec<Q>> {
    match kind {
        ClaimKind::Measure(k) => Ok(vec![exact_measure(k, &r1, &r0, p, v)?]),
        ClaimKind::Distribution => Ok(vec![r0, r1]),
        ClaimKind::CostIntroduce | ClaimKind::CostRemove => Err(Error::InvalidQuery(format!(
            "claim {kind} needs the joint counterfactual distribution, not trial counts"
        ))),
    }
}

/// `(Pr(Y¹=1|Y⁰=1), Pr(Y¹=0|Y⁰=0))` with `given_y0`, otherwise the same with
/// the roles of `Y⁰` and `Y¹` swapped.
pub(crate) fn transition_pair(
    c: &JointCell,
    given_y0: bool,
    p: &PopulationId,
    v: &Stratum,
) -> Result<(Q, Q)> {
    let m = |y0: bool, y1: bool| c.mass(y0, y1).clone();
    // (stay at 1, from 1 to 0, stay at 0, from 0 to 1) in the conditioning
    // variable's frame
    let (stay1, flip1, stay0, flip0) = if given_y0 {
        (
            m(true, true),
            m(true, false),
            m(false, false),
            m(false, true),
        )
    } else {
        (
            m(true, true),
            m(false, true),
            m(false, false),
            m(true, false),
        )
    };
    let (ev1, ev0) = if given_y0 {
        ("Y^{a=0}=1", "Y^{a=0}=0")
    } else {
        ("Y^{a=1}=1", "Y^{a=1}=0")
    };
    let ones = &stay1 + &flip1;
    if ones.is_zero() {
        return Err(degenerate(p, v, ev1));
    }
    let zeros = &stay0 + &flip0;
    if zeros.is_zero() {
        return Err(degenerate(p, v, ev0));
    }
    Ok((stay1 / ones, stay0 / zeros))
}

impl ClaimSource for PotentialOutcomeTable {
    fn populations(&self) -> Vec<PopulationId> {
        PotentialOutcomeTable::populations(self)
    }

    fn strata(&self) -> Vec<Stratum> {
        self.all_strata().into_iter().cloned().collect()
    }

    fn quantities(&self, p: &PopulationId, v: &Stratum, kind: ClaimKind) -> Result<Vec<Q>> {
        let cell = self
            .cell(p, v)
            .filter(|c| !c.total().is_zero())
            .ok_or_else(|| Error::EmptyCell {
                population: p.to_string(),
                stratum: v.to_string(),
                arm: 0,
            })?;
        match kind {
            ClaimKind::CostIntroduce | ClaimKind::CostRemove => {
                let (a, b) = transition_pair(cell, kind == ClaimKind::CostIntroduce, p, v)?;
                Ok(vec![a, b])
            }
            _ => {
                let r1 = self.cf_risk(p, v, true)?;
                let r0 = self.cf_risk(p, v, false)?;
                risk_quantities(kind, r1, r0, p, v)
            }
        }
    }
}

impl ClaimSource for StratifiedCounts {
    fn populations(&self) -> Vec<PopulationId> {
        StratifiedCounts::populations(self)
    }

    fn strata(&self) -> Vec<Stratum> {
        let mut all: Vec<Stratum> = self.iter().map(|(_, v, _)| v.clone()).collect();
        all.sort();
        all.dedup();
        all
    }

    fn quantities(&self, p: &PopulationId, v: &Stratum, kind: ClaimKind) -> Result<Vec<Q>> {
        let exact = |a: bool| -> Result<Q> {
            let r = self.risk(p, v, a)?;
            Ok(Q::new(r.numerator().into(), r.denominator().into()))
        };
        risk_quantities(kind, exact(true)?, exact(false)?, p, v)
    }
}

/// One stratum: each population's quantities and the stratum residual.
type StratumRows = (Stratum, Vec<(PopulationId, Vec<Q>)>, Q);

/// Exact residual per stratum: the largest absolute difference of any
/// compared quantity from the first population in sorted order.
fn residuals(
    source: &impl ClaimSource,
    kind: ClaimKind,
) -> Result<(PopulationId, Vec<StratumRows>)> {
    let pops = source.populations();
    if pops.len() < 2 {
        return Err(Error::InvalidQuery(format!(
            "a homogeneity claim compares at least two populations, found {}",
            pops.len()
        )));
    }
    let mut out = Vec::new();
    for v in source.strata() {
        let values = pops
            .iter()
            .map(|p| Ok((p.clone(), source.quantities(p, &v, kind)?)))
            .collect::<Result<Vec<_>>>()?;
        let reference = &values[0].1;
        let residual = values[1..]
            .iter()
            .flat_map(|(_, qs)| qs.iter().zip(reference).map(|(a, b)| (a - b).abs()))
            .max()
            .unwrap_or_default();
        out.push((v, values, residual));
    }
    Ok((pops[0].clone(), out))
}

/// Largest exact residual of `kind` over strata of `table`, which must
/// already be stratified by the claim's covariates.
pub(crate) fn max_exact_residual(table: &PotentialOutcomeTable, kind: ClaimKind) -> Result<Q> {
    let (_, rows) = residuals(table, kind)?;
    Ok(rows
        .into_iter()
        .map(|(_, _, r)| r)
        .max()
        .unwrap_or_default())
}

fn verdict(source: &impl ClaimSource, claim: &HomogeneityClaim, tol: f64) -> Result<ClaimVerdict> {
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::InvalidProbability(tol));
    }
    let (reference, rows) = residuals(source, claim.kind)?;
    let strata: Vec<StratumResidual> = rows
        .into_iter()
        .map(|(stratum, values, residual)| StratumResidual {
            stratum,
            populations: values
                .into_iter()
                .map(|(population, qs)| PopulationValues {
                    population,
                    values: qs.iter().map(to_f64).collect(),
                })
                .collect(),
            residual: to_f64(&residual),
        })
        .collect();
    let max_residual = strata.iter().map(|s| s.residual).fold(0.0, f64::max);
    Ok(ClaimVerdict {
        claim: claim.clone(),
        holds: max_residual <= tol,
        tolerance: tol,
        reference,
        quantities: claim.kind.quantities().to_vec(),
        max_residual,
        strata,
    })
}

/// Checks `claim` on an exact joint counterfactual table, comparing every
/// population with the first in sorted order within strata of
/// `claim.given`. Residuals are computed exactly and holds iff none
/// exceeds `tol`.
pub fn check_claim(
    table: &PotentialOutcomeTable,
    claim: &HomogeneityClaim,
    tol: f64,
) -> Result<ClaimVerdict> {
    verdict(&table.collapse(&claim.given)?, claim, tol)
}

/// Checks a measure or distribution claim on trial counts, where
/// `Pr(Y=1 | A=a, V=v, P=p)` stands in for `Pr(Y^a=1 | V=v, P=p)`.
pub fn check_claim_counts(
    counts: &StratifiedCounts,
    claim: &HomogeneityClaim,
    tol: f64,
) -> Result<ClaimVerdict> {
    if claim.kind.needs_joint() {
        return Err(Error::InvalidQuery(format!(
            "claim {} needs the joint counterfactual distribution, not trial counts",
            claim.kind
        )));
    }
    verdict(&counts.collapse(&claim.given)?, claim, tol)
}

fn mul(a: u128, b: u128) -> BigUint {
    match a.checked_mul(b) {
        Some(x) => BigUint::from(x),
        None => BigUint::from(a) * BigUint::from(b),
    }
}

/// Whether `xs ⟂ ys | given` holds exactly in `joint`:
/// `Pr(x,y,z)·Pr(z) = Pr(x,z)·Pr(y,z)` for every cell, compared as
/// integers so there is no rounding.
pub fn exact_conditional_independence(
    joint: &JointDistribution,
    xs: &[&str],
    ys: &[&str],
    given: &[&str],
) -> Result<bool> {
    if joint.len() > MAX_ENUMERATED_NODES {
        return Err(Error::TooLarge {
            nodes: joint.len(),
            limit: MAX_ENUMERATED_NODES,
        });
    }
    let resolve = |names: &[&str]| {
        names
            .iter()
            .map(|n| joint.index(n))
            .collect::<Result<Vec<_>>>()
    };
    let (x, y, z) = (resolve(xs)?, resolve(ys)?, resolve(given)?);
    let mut all: Vec<usize> = x.iter().chain(&y).chain(&z).copied().collect();
    all.sort_unstable();
    if all.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidQuery("variable sets must be disjoint".into()));
    }
    Ok(independent_by_index(joint, &x, &y, &z))
}

pub(crate) fn independent_by_index(
    joint: &JointDistribution,
    x: &[usize],
    y: &[usize],
    z: &[usize],
) -> bool {
    let vars: Vec<usize> = x.iter().chain(y).chain(z).copied().collect();
    let full = joint.marginal_weights(&vars);
    let (nx, ny, nz) = (x.len(), y.len(), z.len());
    let (mx, my, mz) = ((1usize << nx) - 1, (1usize << ny) - 1, (1usize << nz) - 1);
    let mut xz = vec![0u128; 1 << (nx + nz)];
    let mut yz = vec![0u128; 1 << (ny + nz)];
    let mut zz = vec![0u128; 1 << nz];
    for (k, &w) in full.iter().enumerate() {
        let (kx, ky, kz) = (k & mx, (k >> nx) & my, k >> (nx + ny));
        xz[kx | (kz << nx)] += w;
        yz[ky | (kz << ny)] += w;
        zz[kz] += w;
    }
    full.iter().enumerate().all(|(k, &w)| {
        let (kx, ky, kz) = (k & mx, (k >> nx) & my, (k >> (nx + ny)) & mz);
        zz[kz] == 0 || mul(w, zz[kz]) == mul(xz[kx | (kz << nx)], yz[ky | (kz << ny)])
    })
}

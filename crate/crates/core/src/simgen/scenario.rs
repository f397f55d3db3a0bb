//! Scenario-driven construction of exact joint counterfactual tables.
//!
//! Every table has one covariate `V` with levels `0..strata` and two
//! populations `s` and `t` whose covariate distributions differ. What is
//! shared between the populations within a stratum depends on the
//! enforcement:
//!
//! | enforce              | shared within stratum                 | varies between populations      |
//! |----------------------|---------------------------------------|---------------------------------|
//! | `distribution`       | joint of `(Y⁰, Y¹)`                   | nothing                         |
//! | `rd`, `rr`, `or`     | the effect measure                    | baseline risk by `baseline_gap` |
//! | `cost`               | `G` and `H`                           | baseline risk by `baseline_gap` |
//! | `marginal-not-joint` | marginals of `Y⁰` and `Y¹`            | their coupling                  |
//! | `logistic-null`      | joint, with a constant stratum odds ratio | nothing                     |
//! | `shifted-cause`      | risks given a hidden cause `U`        | `Pr(U=1)` by `cause_shift`      |

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Zero};
use serde::Serialize;

use super::{JointCell, PotentialOutcomeTable, SplitMix64};
use crate::cost::{exact_cost, Monotonicity};
use crate::cost::{CostParams, Identification};
use crate::error::{Error, Result};
use crate::exact::{format, parse_nonneg, q, q_int, to_f64, Q};
use crate::formats::parse_key_values;
use crate::homogeneity::{exact_measure, max_exact_residual, ClaimKind};
use crate::model::{EffectMeasure, MeasureKind, PopulationId, Stratum};

pub const COVARIATE: &str = "V";
pub const MAX_STRATA: usize = 64;
const ATTEMPTS: usize = 200;
// grid for random risks and parameters
const GRID: i64 = 64;
// odds multiplier of the hidden cause in `shifted-cause`
const CAUSE_ODDS: i64 = 4;
const CAUSE_BASE: (i64, i64) = (1, 5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Enforcement {
    Distribution,
    Measure(MeasureKind),
    Cost,
    MarginalNotJoint,
    LogisticNull,
    ShiftedCause,
}

impl Enforcement {
    pub const ALL: [Enforcement; 8] = [
        Enforcement::Distribution,
        Enforcement::Measure(MeasureKind::RiskDifference),
        Enforcement::Measure(MeasureKind::RiskRatio),
        Enforcement::Measure(MeasureKind::OddsRatio),
        Enforcement::Cost,
        Enforcement::MarginalNotJoint,
        Enforcement::LogisticNull,
        Enforcement::ShiftedCause,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Enforcement::Distribution => "distribution",
            Enforcement::Measure(k) => k.code(),
            Enforcement::Cost => "cost",
            Enforcement::MarginalNotJoint => "marginal-not-joint",
            Enforcement::LogisticNull => "logistic-null",
            Enforcement::ShiftedCause => "shifted-cause",
        }
    }

    /// Claims (given `V`) that hold exactly in every generated table.
    pub fn enforced_claims(self) -> Vec<ClaimKind> {
        match self {
            Enforcement::Distribution | Enforcement::LogisticNull => ClaimKind::ALL.to_vec(),
            Enforcement::Measure(k) => vec![ClaimKind::Measure(k)],
            Enforcement::Cost => vec![ClaimKind::CostIntroduce],
            Enforcement::MarginalNotJoint => vec![
                ClaimKind::Measure(MeasureKind::RiskDifference),
                ClaimKind::Measure(MeasureKind::RiskRatio),
                ClaimKind::Measure(MeasureKind::OddsRatio),
                ClaimKind::Distribution,
            ],
            Enforcement::ShiftedCause => Vec::new(),
        }
    }

    /// Claims (given `V`) violated by at least `violation` in some stratum
    /// whenever the scenario's gap parameter is positive.
    pub fn violated_claims(self) -> Vec<ClaimKind> {
        match self {
            Enforcement::Distribution | Enforcement::LogisticNull => Vec::new(),
            Enforcement::Measure(_) | Enforcement::Cost | Enforcement::ShiftedCause => {
                vec![ClaimKind::Distribution]
            }
            Enforcement::MarginalNotJoint => vec![ClaimKind::CostIntroduce, ClaimKind::CostRemove],
        }
    }
}

impl fmt::Display for Enforcement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Enforcement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Enforcement::ALL
            .into_iter()
            .find(|e| e.code() == s)
            .ok_or_else(|| Error::InvalidLabel(s.to_owned()))
    }
}

/// What [`make_table`] should build.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioSpec {
    pub enforce: Enforcement,
    /// Number of levels of `V`, `1..=64`.
    pub strata: usize,
    /// `Pr(Y⁰=1|v,t) − Pr(Y⁰=1|v,s)` for `rd`, `rr`, `or` and `cost`.
    pub baseline_gap: Q,
    /// Minimum residual of every violated claim.
    pub violation: Q,
    /// `Pr(U=1|t) − Pr(U=1|s)` for `shifted-cause`.
    pub cause_shift: Q,
    /// Zero the matching off-diagonal cell (`distribution` and `cost`).
    pub monotone: Option<Monotonicity>,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(enforce: Enforcement, strata: usize, seed: u64) -> Self {
        ScenarioSpec {
            enforce,
            strata,
            baseline_gap: Q::zero(),
            violation: Q::zero(),
            cause_shift: Q::zero(),
            monotone: None,
            seed,
        }
    }

    pub fn with_gap(mut self, gap: Q) -> Self {
        self.baseline_gap = gap;
        self
    }

    pub fn with_violation(mut self, violation: Q) -> Self {
        self.violation = violation;
        self
    }

    pub fn with_cause_shift(mut self, shift: Q) -> Self {
        self.cause_shift = shift;
        self
    }

    pub fn with_monotone(mut self, m: Monotonicity) -> Self {
        self.monotone = Some(m);
        self
    }

    /// Parses the key-value scenario format. Keys: `enforce` (required),
    /// `strata`, `baseline_gap`, `violation`, `cause_shift`, `monotone`,
    /// `seed`. Numbers may be decimals or fractions.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut spec: Option<ScenarioSpec> = None;
        let mut rest = Vec::new();
        for kv in parse_key_values(text)? {
            if kv.key == "enforce" {
                let e = kv.value.parse().map_err(|_| {
                    Error::parse(
                        kv.line,
                        kv.value_column,
                        format!("unknown enforcement {:?}", kv.value),
                    )
                })?;
                spec = Some(ScenarioSpec::new(e, 2, 0));
            } else {
                rest.push(kv);
            }
        }
        let mut spec = spec.ok_or_else(|| Error::parse(1, 1, "missing key `enforce`"))?;
        for kv in rest {
            let bad = |what: &str| {
                Error::parse(
                    kv.line,
                    kv.value_column,
                    format!("invalid {what} {:?}", kv.value),
                )
            };
            match kv.key.as_str() {
                "strata" => spec.strata = kv.value.parse().map_err(|_| bad("stratum count"))?,
                "seed" => spec.seed = kv.value.parse().map_err(|_| bad("seed"))?,
                "baseline_gap" => {
                    spec.baseline_gap = parse_nonneg(&kv.value).ok_or_else(|| bad("gap"))?
                }
                "violation" => {
                    spec.violation = parse_nonneg(&kv.value).ok_or_else(|| bad("violation"))?
                }
                "cause_shift" => {
                    spec.cause_shift = parse_nonneg(&kv.value).ok_or_else(|| bad("shift"))?
                }
                "monotone" => spec.monotone = Some(kv.value.parse().map_err(|_| bad("direction"))?),
                other => {
                    return Err(Error::parse(kv.line, 1, format!("unknown key {other:?}")));
                }
            }
        }
        Ok(spec)
    }
}

/// Canonical key-value form, accepted by [`ScenarioSpec::from_kv`].
impl fmt::Display for ScenarioSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "enforce = {}", self.enforce)?;
        writeln!(f, "strata = {}", self.strata)?;
        writeln!(f, "baseline_gap = {}", format(&self.baseline_gap))?;
        writeln!(f, "violation = {}", format(&self.violation))?;
        writeln!(f, "cause_shift = {}", format(&self.cause_shift))?;
        if let Some(m) = self.monotone {
            writeln!(f, "monotone = {m}")?;
        }
        writeln!(f, "seed = {}", self.seed)
    }
}

fn infeasible(msg: impl Into<String>) -> Error {
    Error::InfeasibleScenario(msg.into())
}

fn validate(spec: &ScenarioSpec) -> Result<()> {
    let e = spec.enforce;
    if spec.strata == 0 || spec.strata > MAX_STRATA {
        return Err(infeasible(format!("strata must be in 1..={MAX_STRATA}")));
    }
    if spec.baseline_gap >= Q::one() {
        return Err(infeasible("baseline_gap must be below 1"));
    }
    if spec.cause_shift >= q(4, 5) {
        return Err(infeasible("cause_shift must be below 4/5"));
    }
    let gap_driven = matches!(e, Enforcement::Measure(_) | Enforcement::Cost);
    if !gap_driven && !spec.baseline_gap.is_zero() {
        return Err(infeasible(format!(
            "baseline_gap must be 0 when enforcing {e}"
        )));
    }
    if e != Enforcement::ShiftedCause && !spec.cause_shift.is_zero() {
        return Err(infeasible(format!(
            "cause_shift only applies to shifted-cause, not {e}"
        )));
    }
    if spec.monotone.is_some() && !matches!(e, Enforcement::Distribution | Enforcement::Cost) {
        return Err(infeasible(format!("monotone cannot be combined with {e}")));
    }
    if !spec.violation.is_zero() {
        let violated = e.violated_claims();
        if violated.is_empty() {
            return Err(infeasible(format!(
                "{e} violates no claim; violation must be 0"
            )));
        }
        if gap_driven && spec.baseline_gap < spec.violation {
            return Err(infeasible(format!(
                "claim {} cannot be violated by {} with baseline_gap {}",
                violated[0],
                format(&spec.violation),
                format(&spec.baseline_gap)
            )));
        }
        if e == Enforcement::ShiftedCause && spec.cause_shift.is_zero() {
            return Err(infeasible(
                "shifted-cause with cause_shift 0 violates nothing",
            ));
        }
    }
    Ok(())
}

struct Draw<'a>(&'a mut SplitMix64);

impl Draw<'_> {
    /// Uniform on `{lo, ..., hi} / den`.
    fn grid(&mut self, lo: i64, hi: i64, den: i64) -> Q {
        q(self.0.range(lo as u64, hi as u64) as i64, den)
    }

    /// A multiple of `1/GRID` strictly inside `(lo, hi)`, or `None` if there
    /// is none.
    fn inside(&mut self, lo: &Q, hi: &Q) -> Option<Q> {
        let scale = q_int(GRID);
        let first = (lo * &scale).floor().to_integer() + 1;
        let last = (hi * &scale).ceil().to_integer() - 1;
        let first: i64 = num_traits::ToPrimitive::to_i64(&first)?;
        let last: i64 = num_traits::ToPrimitive::to_i64(&last)?;
        if first > last {
            return None;
        }
        let k = first + self.0.below((last - first + 1) as u64) as i64;
        Some(q(k, GRID))
    }
}

/// Joint with independent `Y⁰` and `Y¹` at the given risks.
fn product_cell(r0: &Q, r1: &Q) -> JointCell {
    let one = Q::one();
    let (n0, n1) = (&one - r0, &one - r1);
    JointCell::new(&n0 * &n1, &n0 * r1, r0 * &n1, r0 * r1)
}

/// Joint from baseline risk and `(G, H)`.
fn cost_cell(p0: &Q, g: &Q, h: &Q) -> JointCell {
    let one = Q::one();
    let n0 = &one - p0;
    JointCell::new(&n0 * h, &n0 * (&one - h), p0 * (&one - g), p0 * g)
}

fn scale(c: &JointCell, w: &Q) -> JointCell {
    let m = |a, b| c.mass(a, b) * w;
    JointCell::new(
        m(false, false),
        m(false, true),
        m(true, false),
        m(true, true),
    )
}

fn zero_off_diagonal(c: &JointCell, m: Monotonicity) -> JointCell {
    // moving the forbidden transition's mass onto the diagonal keeps the
    // baseline risk
    let x = |a, b| c.mass(a, b).clone();
    match m {
        Monotonicity::Increasing => JointCell::new(
            x(false, false),
            x(false, true),
            Q::zero(),
            x(true, false) + x(true, true),
        ),
        Monotonicity::Decreasing => JointCell::new(
            x(false, false) + x(false, true),
            Q::zero(),
            x(true, false),
            x(true, true),
        ),
    }
}

fn odds_to_risk(o: &Q) -> Q {
    o / (Q::one() + o)
}

/// Per-stratum `(source, target)` joints, each normalized within stratum.
fn draw_strata(spec: &ScenarioSpec, d: &mut Draw<'_>) -> Option<Vec<(JointCell, JointCell)>> {
    let one = Q::one();
    let gap = &spec.baseline_gap;
    let mut out = Vec::with_capacity(spec.strata);
    for _ in 0..spec.strata {
        let pair = match spec.enforce {
            Enforcement::Distribution => {
                let w: Vec<Q> = (0..4).map(|_| d.grid(1, 16, 1)).collect();
                let total: Q = w.iter().sum();
                let mut c = JointCell::new(
                    &w[0] / &total,
                    &w[1] / &total,
                    &w[2] / &total,
                    &w[3] / &total,
                );
                if let Some(m) = spec.monotone {
                    c = zero_off_diagonal(&c, m);
                }
                (c.clone(), c)
            }
            Enforcement::LogisticNull => {
                // shared odds ratio drawn once per table; see make_table
                unreachable!("handled by draw_logistic")
            }
            Enforcement::Measure(kind) => {
                let r0s = d.inside(&Q::zero(), &(&one - gap))?;
                let r0t = &r0s + gap;
                let (r1s, r1t) = match kind {
                    MeasureKind::RiskDifference => {
                        // r0t >= r0s, so both shifted risks stay inside (0, 1)
                        let shift = d.inside(&-r0s.clone(), &(&one - &r0t))?;
                        (&r0s + &shift, &r0t + &shift)
                    }
                    MeasureKind::RiskRatio => {
                        let bound = (&one / &r0t).min(q_int(4));
                        let ratio = d.inside(&Q::zero(), &bound)?;
                        (&r0s * &ratio, &r0t * &ratio)
                    }
                    MeasureKind::OddsRatio => {
                        let ratio = d.grid(1, 16, 4);
                        let apply = |r: &Q| odds_to_risk(&(r / (&one - r) * &ratio));
                        (apply(&r0s), apply(&r0t))
                    }
                };
                (product_cell(&r0s, &r1s), product_cell(&r0t, &r1t))
            }
            Enforcement::Cost => {
                let p0s = d.inside(&Q::zero(), &(&one - gap))?;
                let p0t = &p0s + gap;
                let mut g = d.grid(1, 16, 16);
                let mut h = d.grid(1, 16, 16);
                match spec.monotone {
                    Some(Monotonicity::Increasing) => g = one.clone(),
                    Some(Monotonicity::Decreasing) => h = one.clone(),
                    None => {}
                }
                (cost_cell(&p0s, &g, &h), cost_cell(&p0t, &g, &h))
            }
            Enforcement::MarginalNotJoint => {
                let r0 = d.inside(&Q::zero(), &one)?;
                let r1 = d.inside(&Q::zero(), &one)?;
                let s = product_cell(&r0, &r1);
                let delta = s.mass(true, false).clone().min(s.mass(false, true).clone());
                let x = |a, b| s.mass(a, b).clone();
                let t = JointCell::new(
                    x(false, false) + &delta,
                    x(false, true) - &delta,
                    x(true, false) - &delta,
                    x(true, true) + &delta,
                );
                (s, t)
            }
            Enforcement::ShiftedCause => {
                let base = d.grid(1, 12, 8);
                let ratio = q(2, 1);
                let mix = |pu: &Q| {
                    let mut acc = JointCell::default();
                    for (u, weight) in [(false, &one - pu), (true, pu.clone())] {
                        let o = if u {
                            &base * q_int(CAUSE_ODDS)
                        } else {
                            base.clone()
                        };
                        let c = product_cell(&odds_to_risk(&o), &odds_to_risk(&(&o * &ratio)));
                        acc = add_cells(&acc, &scale(&c, &weight));
                    }
                    acc
                };
                let us = q(CAUSE_BASE.0, CAUSE_BASE.1);
                let ut = &us + &spec.cause_shift;
                (mix(&us), mix(&ut))
            }
        };
        out.push(pair);
    }
    Some(out)
}

fn add_cells(a: &JointCell, b: &JointCell) -> JointCell {
    let m = |x, y| a.mass(x, y) + b.mass(x, y);
    JointCell::new(
        m(false, false),
        m(false, true),
        m(true, false),
        m(true, true),
    )
}

fn draw_logistic(spec: &ScenarioSpec, d: &mut Draw<'_>) -> Vec<(JointCell, JointCell)> {
    let ratio = d.grid(2, 12, 4);
    (0..spec.strata)
        .map(|_| {
            let odds = d.grid(1, 16, 8);
            let c = product_cell(&odds_to_risk(&odds), &odds_to_risk(&(&odds * &ratio)));
            (c.clone(), c)
        })
        .collect()
}

fn assemble(
    spec: &ScenarioSpec,
    strata: Vec<(JointCell, JointCell)>,
    d: &mut Draw<'_>,
) -> Result<PotentialOutcomeTable> {
    let mut cells = BTreeMap::new();
    for (index, pop) in [PopulationId::study(), PopulationId::target()]
        .into_iter()
        .enumerate()
    {
        let weights: Vec<Q> = (0..spec.strata).map(|_| d.grid(1, 8, 1)).collect();
        let total: Q = weights.iter().sum();
        for (v, pair) in strata.iter().enumerate() {
            let c = if index == 0 { &pair.0 } else { &pair.1 };
            let stratum = Stratum::new([(COVARIATE, v.to_string())])?;
            cells.insert((pop.clone(), stratum), scale(c, &(&weights[v] / &total)));
        }
    }
    PotentialOutcomeTable::from_joint_cells(vec![COVARIATE.to_owned()], cells)
}

/// Checks the table against the scenario; returns the first unmet
/// constraint.
fn verify(spec: &ScenarioSpec, table: &PotentialOutcomeTable) -> Result<Option<String>> {
    for claim in spec.enforce.enforced_claims() {
        if !max_exact_residual(table, claim)?.is_zero() {
            return Ok(Some(format!("enforced claim {claim} does not hold")));
        }
    }
    let gap_positive = !(spec.baseline_gap.is_zero() && spec.cause_shift.is_zero());
    let must_violate = spec.enforce == Enforcement::MarginalNotJoint || gap_positive;
    if must_violate {
        for claim in spec.enforce.violated_claims() {
            let r = max_exact_residual(table, claim)?;
            if r.is_zero() || r < spec.violation {
                return Ok(Some(format!(
                    "claim {claim} violated by only {} (requested {})",
                    format(&r),
                    format(&spec.violation)
                )));
            }
        }
    }
    if let Some(m) = spec.monotone {
        for (p, v, c) in table.iter() {
            let off = match m {
                Monotonicity::Increasing => c.mass(true, false),
                Monotonicity::Decreasing => c.mass(false, true),
            };
            if !off.is_zero() {
                return Ok(Some(format!("monotonicity fails in {p}, {v}")));
            }
        }
    }
    Ok(None)
}

/// Builds an exact table meeting `spec`, verified before return.
///
/// Draws are retried a bounded number of times; when no draw satisfies
/// every constraint the last unmet constraint is reported as
/// [`Error::InfeasibleScenario`].
pub fn make_table(spec: &ScenarioSpec) -> Result<PotentialOutcomeTable> {
    validate(spec)?;
    let mut rng = SplitMix64::new(spec.seed);
    let mut last = String::from("no admissible draw");
    for _ in 0..ATTEMPTS {
        let mut d = Draw(&mut rng);
        let strata = if spec.enforce == Enforcement::LogisticNull {
            Some(draw_logistic(spec, &mut d))
        } else {
            draw_strata(spec, &mut d)
        };
        let Some(strata) = strata else {
            continue;
        };
        let table = assemble(spec, strata, &mut d)?;
        match verify(spec, &table)? {
            None => return Ok(table),
            Some(reason) => last = reason,
        }
    }
    Err(infeasible(last))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumTruth {
    pub stratum: Stratum,
    pub weight: f64,
    pub risk0: f64,
    pub risk1: f64,
    pub cost: Option<CostParams>,
}

/// The exact answer key for one population of a table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrueQuantities {
    pub population: PopulationId,
    pub risk0: f64,
    pub risk1: f64,
    pub measures: Vec<EffectMeasure>,
    /// Pooled `(G, H)`; absent when a conditioning event is empty.
    pub cost: Option<CostParams>,
    pub strata: Vec<StratumTruth>,
}

/// `Pr(Y^a=1 | P=target)`, every defined effect measure and the COST
/// parameters, computed exactly from the table.
pub fn true_target_quantities(
    table: &PotentialOutcomeTable,
    target: &PopulationId,
) -> Result<TrueQuantities> {
    let pooled = table.pooled(target)?;
    let r1 = pooled.events(true);
    let r0 = pooled.events(false);
    let measures = MeasureKind::ALL
        .into_iter()
        .filter_map(|k| {
            exact_measure(k, &r1, &r0, target, &Stratum::empty())
                .ok()
                .map(|m| EffectMeasure {
                    kind: k,
                    value: to_f64(&m),
                })
        })
        .collect();
    let exact_params =
        |g: Q, h: Q| CostParams::new(to_f64(&g), to_f64(&h), Identification::ExactFromJoint).ok();
    let pooled_table = table.collapse(&[])?;
    let cost = exact_cost(&pooled_table, target, &Stratum::empty())
        .ok()
        .and_then(|(g, h)| exact_params(g, h));
    let strata = table
        .strata(target)
        .into_iter()
        .map(|v| {
            Ok(StratumTruth {
                stratum: v.clone(),
                weight: to_f64(&table.stratum_mass(target, v)),
                risk0: to_f64(&table.cf_risk(target, v, false)?),
                risk1: to_f64(&table.cf_risk(target, v, true)?),
                cost: exact_cost(table, target, v)
                    .ok()
                    .and_then(|(g, h)| exact_params(g, h)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrueQuantities {
        population: target.clone(),
        risk0: to_f64(&r0),
        risk1: to_f64(&r1),
        measures,
        cost,
        strata,
    })
}

//! Randomized trials drawn from a joint counterfactual table.

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};

use super::{PotentialOutcomeTable, SplitMix64};
use crate::error::{Error, Result};
use crate::exact::{common_denominator, Q};
use crate::model::{PopulationId, StratifiedCounts, Stratum};

/// One sampled individual; indices point into [`TrialSample::populations`]
/// and [`TrialSample::strata`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampledRecord {
    pub population: usize,
    pub stratum: usize,
    pub a: bool,
    pub y0: bool,
    pub y1: bool,
    /// Observed outcome: `Y = Y^a`.
    pub y: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialSample {
    pub populations: Vec<PopulationId>,
    pub strata: Vec<Stratum>,
    pub records: Vec<SampledRecord>,
    pub counts: StratifiedCounts,
}

fn to_u64(x: &BigInt, what: &str) -> Result<u64> {
    x.to_u64()
        .ok_or_else(|| Error::Overflow(format!("{what} does not fit in 64 bits")))
}

/// Draws `n_per_population` individuals from every population of `table`
/// and assigns treatment with probability `assignment` independently of
/// `(Y⁰, Y¹)`.
///
/// Sampling is integer-only: each population's masses are scaled to a
/// common integer denominator and drawn by exact rejection sampling, so a
/// seed reproduces the same sample on every platform. Per individual the
/// stream yields the cell draw followed by the assignment draw;
/// populations are visited in sorted order.
pub fn sample_trial(
    table: &PotentialOutcomeTable,
    n_per_population: u64,
    assignment: &Q,
    seed: u64,
) -> Result<TrialSample> {
    if n_per_population == 0 {
        return Err(Error::InfeasibleScenario(
            "sample size must be positive".into(),
        ));
    }
    if *assignment < Q::zero() || *assignment > Q::from_integer(1.into()) {
        return Err(Error::InvalidProbability(crate::exact::to_f64(assignment)));
    }
    let (assign_num, assign_den) = (
        to_u64(assignment.numer(), "assignment probability")?,
        to_u64(assignment.denom(), "assignment probability")?,
    );
    let populations = table.populations();
    let strata: Vec<Stratum> = table.all_strata().into_iter().cloned().collect();
    let mut counts = StratifiedCounts::new(table.covariates().to_vec())?;
    let n_records = usize::try_from(n_per_population)
        .ok()
        .and_then(|n| n.checked_mul(populations.len()))
        .ok_or_else(|| Error::Overflow("sample size".into()))?;
    let mut records = Vec::with_capacity(n_records.min(1 << 24));
    let mut rng = SplitMix64::new(seed);

    for (pi, p) in populations.iter().enumerate() {
        // cumulative integer weights over (stratum, y0, y1)
        let cells: Vec<(usize, bool, bool, &Q)> = strata
            .iter()
            .enumerate()
            .filter_map(|(si, v)| table.cell(p, v).map(|c| (si, c)))
            .flat_map(|(si, c)| {
                [(false, false), (false, true), (true, false), (true, true)]
                    .into_iter()
                    .map(move |(y0, y1)| (si, y0, y1, c.mass(y0, y1)))
            })
            .collect();
        let den = common_denominator(cells.iter().map(|c| c.3));
        let mut cumulative = Vec::with_capacity(cells.len());
        let mut acc = 0u64;
        for &(_, _, _, m) in &cells {
            let w = to_u64(&(m.numer() * (&den / m.denom())), "cell weight")?;
            acc = acc
                .checked_add(w)
                .ok_or_else(|| Error::Overflow("cell weights".into()))?;
            cumulative.push(acc);
        }
        if acc == 0 {
            return Err(Error::ZeroBaselineRisk {
                population: p.to_string(),
                event: "P=p (population has no mass)",
            });
        }
        for (si, _) in strata
            .iter()
            .enumerate()
            .filter(|(_, v)| table.cell(p, v).is_some())
        {
            for a in [false, true] {
                for y in [false, true] {
                    counts.add(p.clone(), strata[si].clone(), a, y, 0)?;
                }
            }
        }
        for _ in 0..n_per_population {
            let u = rng.below(acc);
            let k = cumulative.partition_point(|&c| c <= u);
            let (si, y0, y1, _) = cells[k];
            let a = rng.bernoulli(assign_num, assign_den);
            let y = if a { y1 } else { y0 };
            counts.add(p.clone(), strata[si].clone(), a, y, 1)?;
            records.push(SampledRecord {
                population: pi,
                stratum: si,
                a,
                y0,
                y1,
                y,
            });
        }
    }
    Ok(TrialSample {
        populations,
        strata,
        records,
        counts,
    })
}

/// The counts of a trial with both arms equal to the whole population:
/// `count(p, v, a, y) = D_p · Pr(V=v, Y^a=y | P=p)` with one integer `D_p`
/// per population, so every risk and stratum share is exact.
pub fn expected_counts(table: &PotentialOutcomeTable) -> Result<StratifiedCounts> {
    let mut counts = StratifiedCounts::new(table.covariates().to_vec())?;
    for p in table.populations() {
        let cells: Vec<_> = table.iter().filter(|(q, _, _)| **q == p).collect();
        let den = common_denominator(cells.iter().flat_map(|(_, _, c)| {
            [(false, false), (false, true), (true, false), (true, true)]
                .map(|(y0, y1)| c.mass(y0, y1))
        }));
        for (_, v, c) in cells {
            for a in [false, true] {
                let events = c.events(a);
                let total = c.total();
                for (y, mass) in [(true, events.clone()), (false, total - events)] {
                    let scaled = mass.numer() * (&den / mass.denom());
                    counts.add(
                        p.clone(),
                        v.clone(),
                        a,
                        y,
                        to_u64(&scaled, "expected count")?,
                    )?;
                }
            }
        }
    }
    Ok(counts)
}

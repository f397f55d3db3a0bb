//! Exact joint counterfactual distributions.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::exact::Q;
use crate::model::{validate_covariates, PopulationId, Stratum};

/// Mass of one `(population, stratum, Y⁰, Y¹)` cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointCounterfactualCell {
    pub population: PopulationId,
    pub stratum: Stratum,
    pub y0: bool,
    pub y1: bool,
    pub mass: Q,
}

/// The four `(Y⁰, Y¹)` masses of one population stratum, on the scale
/// `Pr(V=v, Y⁰, Y¹ | P=p)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct JointCell {
    mass: [[Q; 2]; 2],
}

impl JointCell {
    pub fn new(m00: Q, m01: Q, m10: Q, m11: Q) -> Self {
        JointCell {
            mass: [[m00, m01], [m10, m11]],
        }
    }

    pub fn mass(&self, y0: bool, y1: bool) -> &Q {
        &self.mass[y0 as usize][y1 as usize]
    }

    pub fn total(&self) -> Q {
        self.mass.iter().flatten().sum()
    }

    /// Mass with `Y^a = 1`.
    pub fn events(&self, a: bool) -> Q {
        if a {
            &self.mass[0][1] + &self.mass[1][1]
        } else {
            &self.mass[1][0] + &self.mass[1][1]
        }
    }

    /// `Pr(Y^a = 1)` within the cell, `None` when the cell is empty.
    pub fn risk(&self, a: bool) -> Option<Q> {
        let total = self.total();
        (!total.is_zero()).then(|| self.events(a) / total)
    }

    /// The same distribution scaled to total mass one.
    pub fn normalized(&self) -> Option<JointCell> {
        let total = self.total();
        if total.is_zero() {
            return None;
        }
        let mut out = self.clone();
        for m in out.mass.iter_mut().flatten() {
            *m = &*m / &total;
        }
        Some(out)
    }

    fn accumulate(&mut self, other: &JointCell) {
        for (a, b) in self
            .mass
            .iter_mut()
            .flatten()
            .zip(other.mass.iter().flatten())
        {
            *a += b;
        }
    }
}

/// Exact joint distribution of `(V, Y⁰, Y¹)` in each population.
///
/// Masses are normalized so that each population sums to one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PotentialOutcomeTable {
    covariates: Vec<String>,
    cells: BTreeMap<(PopulationId, Stratum), JointCell>,
}

impl PotentialOutcomeTable {
    /// Builds a table from raw masses (probabilities or counts). Duplicate
    /// keys are summed, then every population is normalized.
    pub fn from_cells(
        covariates: Vec<String>,
        cells: impl IntoIterator<Item = JointCounterfactualCell>,
    ) -> Result<Self> {
        validate_covariates(&covariates)?;
        let mut map: BTreeMap<(PopulationId, Stratum), JointCell> = BTreeMap::new();
        for cell in cells {
            if cell.mass.is_negative() {
                return Err(Error::InvalidProbability(crate::exact::to_f64(&cell.mass)));
            }
            if !cell
                .stratum
                .names()
                .eq(covariates.iter().map(String::as_str))
            {
                return Err(Error::CovariateMismatch {
                    expected: covariates.join(","),
                    found: cell.stratum.names().collect::<Vec<_>>().join(","),
                });
            }
            let entry = map.entry((cell.population, cell.stratum)).or_default();
            entry.mass[cell.y0 as usize][cell.y1 as usize] += cell.mass;
        }
        let mut totals: BTreeMap<PopulationId, Q> = BTreeMap::new();
        for ((p, _), c) in &map {
            *totals.entry(p.clone()).or_default() += c.total();
        }
        for (p, total) in &totals {
            if total.is_zero() {
                return Err(Error::ZeroBaselineRisk {
                    population: p.to_string(),
                    event: "P=p (population has no mass)",
                });
            }
        }
        for ((p, _), c) in map.iter_mut() {
            let total = &totals[p];
            for m in c.mass.iter_mut().flatten() {
                *m = &*m / total;
            }
        }
        Ok(PotentialOutcomeTable {
            covariates,
            cells: map,
        })
    }

    /// Builds a table from per-stratum cells already on the population scale.
    pub(crate) fn from_joint_cells(
        covariates: Vec<String>,
        cells: BTreeMap<(PopulationId, Stratum), JointCell>,
    ) -> Result<Self> {
        Self::from_cells(
            covariates,
            cells.into_iter().flat_map(|((p, v), c)| {
                let [[m00, m01], [m10, m11]] = c.mass;
                [
                    (false, false, m00),
                    (false, true, m01),
                    (true, false, m10),
                    (true, true, m11),
                ]
                .into_iter()
                .map(move |(y0, y1, mass)| JointCounterfactualCell {
                    population: p.clone(),
                    stratum: v.clone(),
                    y0,
                    y1,
                    mass,
                })
            }),
        )
    }

    pub fn covariates(&self) -> &[String] {
        &self.covariates
    }

    pub fn populations(&self) -> Vec<PopulationId> {
        let set: BTreeSet<&PopulationId> = self.cells.keys().map(|(p, _)| p).collect();
        set.into_iter().cloned().collect()
    }

    pub fn has_population(&self, p: &PopulationId) -> bool {
        self.cells.keys().any(|(q, _)| q == p)
    }

    pub fn strata(&self, p: &PopulationId) -> Vec<&Stratum> {
        self.cells
            .keys()
            .filter(|(q, _)| q == p)
            .map(|(_, v)| v)
            .collect()
    }

    /// Union of strata over all populations.
    pub fn all_strata(&self) -> Vec<&Stratum> {
        let set: BTreeSet<&Stratum> = self.cells.keys().map(|(_, v)| v).collect();
        set.into_iter().collect()
    }

    pub fn cell(&self, p: &PopulationId, v: &Stratum) -> Option<&JointCell> {
        self.cells.get(&(p.clone(), v.clone()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PopulationId, &Stratum, &JointCell)> {
        self.cells.iter().map(|((p, v), c)| (p, v, c))
    }

    pub fn cells(&self) -> impl Iterator<Item = JointCounterfactualCell> + '_ {
        self.iter().flat_map(|(p, v, c)| {
            [(false, false), (false, true), (true, false), (true, true)]
                .into_iter()
                .map(move |(y0, y1)| JointCounterfactualCell {
                    population: p.clone(),
                    stratum: v.clone(),
                    y0,
                    y1,
                    mass: c.mass(y0, y1).clone(),
                })
        })
    }

    /// `Pr(V=v | P=p)`.
    pub fn stratum_mass(&self, p: &PopulationId, v: &Stratum) -> Q {
        self.cell(p, v).map(JointCell::total).unwrap_or_default()
    }

    /// Exact `Pr(Y^a = 1 | V=v, P=p)`.
    pub fn cf_risk(&self, p: &PopulationId, v: &Stratum, a: bool) -> Result<Q> {
        self.cell(p, v)
            .and_then(|c| c.risk(a))
            .ok_or_else(|| Error::EmptyCell {
                population: p.to_string(),
                stratum: v.to_string(),
                arm: a as u8,
            })
    }

    /// The joint distribution of `(Y⁰, Y¹)` in population `p`, pooled over
    /// strata (total mass one).
    pub fn pooled(&self, p: &PopulationId) -> Result<JointCell> {
        if !self.has_population(p) {
            return Err(Error::UnknownPopulation(p.to_string()));
        }
        let mut out = JointCell::default();
        for (_, _, c) in self.iter().filter(|(q, _, _)| *q == p) {
            out.accumulate(c);
        }
        Ok(out)
    }

    /// Marginalizes over covariates outside `keep`.
    pub fn collapse(&self, keep: &[String]) -> Result<PotentialOutcomeTable> {
        for name in keep {
            if !self.covariates.contains(name) {
                return Err(Error::UnknownCovariate(name.clone()));
            }
        }
        validate_covariates(keep)?;
        let mut map: BTreeMap<(PopulationId, Stratum), JointCell> = BTreeMap::new();
        for (p, v, c) in self.iter() {
            map.entry((p.clone(), v.restrict(keep)?))
                .or_default()
                .accumulate(c);
        }
        Ok(PotentialOutcomeTable {
            covariates: keep.to_vec(),
            cells: map,
        })
    }
}

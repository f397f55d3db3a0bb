//! Selection diagrams: a causal DAG shared by the study and target
//! populations, augmented with a selection node `P` pointing at every
//! mechanism that may differ between them.
//!
//! Transportability of the effect of treatment `A` on outcome `Y` over a
//! baseline covariate set `V` is decided by d-separation of `Y` from `P`
//! given `V ∪ {A}` in the graph with the edges into `A` removed.

mod adjust;
mod parse;

use serde::Serialize;

pub use adjust::{
    check_baseline_reduction, decide_transportability, sufficient_adjustment_sets,
    BaselineReduction, TransportabilityVerdict, VerdictReason, DEFAULT_MAX_SET_SIZE,
};
pub use parse::parse_diagram;

use crate::error::{Error, Result};
use crate::graph::Dag;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionDiagram {
    dag: Dag,
    latent: Vec<bool>,
    treatment: usize,
    outcome: usize,
    selection: usize,
    // the graph with edges into treatment removed
    intervened: Dag,
    treatment_descendants: Vec<bool>,
}

/// A d-separation query `x ⟂ y | given`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DSepQuery {
    pub x: String,
    pub y: String,
    pub given: Vec<String>,
}

impl DSepQuery {
    pub fn new(x: impl Into<String>, y: impl Into<String>, given: &[&str]) -> Self {
        DSepQuery {
            x: x.into(),
            y: y.into(),
            given: given.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Incremental construction; [`DiagramBuilder::build`] enforces every
/// structural invariant.
#[derive(Debug, Clone, Default)]
pub struct DiagramBuilder {
    dag: Dag,
    latent: Vec<bool>,
    treatment: Option<String>,
    outcome: Option<String>,
    selection: Option<String>,
}

impl DiagramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(mut self, name: &str, latent: bool) -> Result<Self> {
        self.add_node(name, latent)?;
        Ok(self)
    }

    pub fn edge(mut self, from: &str, to: &str) -> Result<Self> {
        self.add_edge(from, to)?;
        Ok(self)
    }

    pub fn treatment(mut self, name: &str) -> Result<Self> {
        self.set_role(Role::Treatment, name)?;
        Ok(self)
    }

    pub fn outcome(mut self, name: &str) -> Result<Self> {
        self.set_role(Role::Outcome, name)?;
        Ok(self)
    }

    pub fn selection(mut self, name: &str) -> Result<Self> {
        self.set_role(Role::Selection, name)?;
        Ok(self)
    }

    pub(crate) fn add_node(&mut self, name: &str, latent: bool) -> Result<()> {
        if !crate::model::is_identifier(name) {
            return Err(Error::InvalidLabel(name.to_owned()));
        }
        self.dag.add_node(name)?;
        self.latent.push(latent);
        Ok(())
    }

    pub(crate) fn add_edge(&mut self, from: &str, to: &str) -> Result<()> {
        let a = self.dag.require(from)?;
        let b = self.dag.require(to)?;
        self.dag.add_edge(a, b)
    }

    pub(crate) fn set_role(&mut self, role: Role, name: &str) -> Result<()> {
        self.dag.require(name)?;
        let slot = match role {
            Role::Treatment => &mut self.treatment,
            Role::Outcome => &mut self.outcome,
            Role::Selection => &mut self.selection,
        };
        if slot.is_some() {
            return Err(Error::Role(format!(
                "{} declared more than once",
                role.keyword()
            )));
        }
        *slot = Some(name.to_owned());
        Ok(())
    }

    pub fn build(self) -> Result<SelectionDiagram> {
        self.dag.topological_order()?;
        let role = |slot: Option<String>, r: Role| -> Result<usize> {
            let name = slot.ok_or_else(|| Error::Role(format!("missing {}", r.keyword())))?;
            self.dag.require(&name)
        };
        let treatment = role(self.treatment.clone(), Role::Treatment)?;
        let outcome = role(self.outcome.clone(), Role::Outcome)?;
        let selection = role(self.selection.clone(), Role::Selection)?;
        if treatment == outcome || treatment == selection || outcome == selection {
            return Err(Error::Role(
                "treatment, outcome and selection must be distinct nodes".into(),
            ));
        }
        for id in [treatment, outcome, selection] {
            if self.latent[id] {
                return Err(Error::Role(format!(
                    "role node {} cannot be latent",
                    self.dag.name(id)
                )));
            }
        }
        let treatment_descendants = self.dag.descendants(&[treatment]);
        if treatment_descendants[selection] {
            return Err(Error::SelectionAfterTreatment(format!(
                "{} -> ... -> {}",
                self.dag.name(treatment),
                self.dag.name(selection)
            )));
        }
        if !self.dag.parents(selection).is_empty() {
            return Err(Error::SelectionNotRoot(self.dag.name(selection).to_owned()));
        }
        let intervened = self.dag.without_incoming(treatment);
        Ok(SelectionDiagram {
            dag: self.dag,
            latent: self.latent,
            treatment,
            outcome,
            selection,
            intervened,
            treatment_descendants,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Role {
    Treatment,
    Outcome,
    Selection,
}

impl Role {
    pub(crate) fn keyword(self) -> &'static str {
        match self {
            Role::Treatment => "treatment",
            Role::Outcome => "outcome",
            Role::Selection => "selection",
        }
    }
}

impl SelectionDiagram {
    pub fn builder() -> DiagramBuilder {
        DiagramBuilder::new()
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn treatment(&self) -> &str {
        self.dag.name(self.treatment)
    }

    pub fn outcome(&self) -> &str {
        self.dag.name(self.outcome)
    }

    pub fn selection(&self) -> &str {
        self.dag.name(self.selection)
    }

    pub fn is_latent(&self, name: &str) -> Result<bool> {
        Ok(self.latent[self.dag.require(name)?])
    }

    pub(crate) fn latent_flags(&self) -> &[bool] {
        &self.latent
    }

    pub(crate) fn role_ids(&self) -> [usize; 3] {
        [self.treatment, self.outcome, self.selection]
    }

    pub(crate) fn intervened(&self) -> &Dag {
        &self.intervened
    }

    /// Descends from treatment (treatment itself included).
    pub fn is_post_treatment(&self, name: &str) -> Result<bool> {
        Ok(self.treatment_descendants[self.dag.require(name)?])
    }

    pub(crate) fn is_post_treatment_id(&self, id: usize) -> bool {
        self.treatment_descendants[id]
    }

    /// Observed, non-role nodes that do not descend from treatment.
    pub fn baseline_nodes(&self) -> Vec<String> {
        (0..self.dag.len())
            .filter(|&i| {
                !self.latent[i] && !self.role_ids().contains(&i) && !self.treatment_descendants[i]
            })
            .map(|i| self.dag.name(i).to_owned())
            .collect()
    }

    /// Plain d-separation on the diagram as drawn.
    pub fn d_separated(&self, query: &DSepQuery) -> Result<bool> {
        let x = self.dag.require(&query.x)?;
        let y = self.dag.require(&query.y)?;
        if x == y {
            return Err(Error::InvalidQuery("x and y must differ".into()));
        }
        let mut given = Vec::with_capacity(query.given.len());
        for name in &query.given {
            let id = self.dag.require(name)?;
            if id == x || id == y {
                return Err(Error::InvalidQuery(format!(
                    "{name} is queried and conditioned on"
                )));
            }
            if self.latent[id] {
                return Err(Error::LatentConditioning(name.clone()));
            }
            given.push(id);
        }
        Ok(self.dag.d_separated(&[x], &[y], &given))
    }

    /// Whether `Y ⟂ P | V ∪ {A}` holds after removing the edges into `A`,
    /// i.e. `V` makes the counterfactual outcome ignorable for selection.
    pub(crate) fn separates(&self, v: &[usize]) -> bool {
        let mut given = v.to_vec();
        given.push(self.treatment);
        self.intervened
            .d_separated(&[self.selection], &[self.outcome], &given)
    }
}

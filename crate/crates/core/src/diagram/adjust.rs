//! Search for covariate sets that make the outcome ignorable for selection.

use itertools::Itertools;
use serde::Serialize;

use super::SelectionDiagram;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_SET_SIZE: usize = 6;

// Open-path listings are diagnostics; stop enumerating after this many
// partial paths so that dense diagrams cannot stall a report.
const PATH_SEARCH_BUDGET: usize = 100_000;
const MAX_LISTED_PATHS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VerdictReason {
    /// The witness set blocks every path between outcome and selection.
    Separated,
    /// `P -> Y` cannot be blocked by any set.
    DirectEdge,
    /// Paths that stay open even when every candidate is conditioned on.
    OpenPaths { paths: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransportabilityVerdict {
    pub transportable: bool,
    pub witness_set: Option<Vec<String>>,
    pub minimal_sets: Vec<Vec<String>>,
    pub reason: VerdictReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BaselineReduction {
    pub sound: bool,
    pub reason: String,
}

fn resolve_candidates(g: &SelectionDiagram, candidates: &[String]) -> Result<Vec<usize>> {
    let mut ids = Vec::with_capacity(candidates.len());
    for name in candidates {
        let id = g.dag().require(name)?;
        if g.latent_flags()[id] {
            return Err(Error::LatentConditioning(name.clone()));
        }
        if g.role_ids().contains(&id) || g.is_post_treatment_id(id) {
            return Err(Error::NonBaselineCandidate(name.clone()));
        }
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    ids.sort_by_key(|&i| g.dag().name(i));
    Ok(ids)
}

/// Inclusion-minimal separators among `pool`, smallest first.
fn minimal_separators(g: &SelectionDiagram, pool: &[usize], max_size: usize) -> Vec<Vec<usize>> {
    let mut found: Vec<Vec<usize>> = Vec::new();
    for size in 0..=max_size.min(pool.len()) {
        for subset in pool.iter().copied().combinations(size) {
            if found.iter().any(|f| f.iter().all(|x| subset.contains(x))) {
                continue;
            }
            if g.separates(&subset) {
                found.push(subset);
            }
        }
    }
    found
}

fn names(g: &SelectionDiagram, ids: &[usize]) -> Vec<String> {
    let mut out: Vec<String> = ids.iter().map(|&i| g.dag().name(i).to_owned()).collect();
    out.sort();
    out
}

/// All inclusion-minimal subsets `V` of `candidates` with `|V| ≤ max_size`
/// such that `Y ⟂ P | V ∪ {A}` in the diagram with edges into `A` removed.
///
/// Candidates must be observed baseline nodes. An empty result means no
/// sufficient set exists among the candidates.
pub fn sufficient_adjustment_sets(
    g: &SelectionDiagram,
    candidates: &[String],
    max_size: usize,
) -> Result<Vec<Vec<String>>> {
    let pool = resolve_candidates(g, candidates)?;
    Ok(minimal_separators(g, &pool, max_size)
        .iter()
        .map(|s| names(g, s))
        .collect())
}

/// Decides transportability over baseline covariates. With `candidates`
/// unset every observed baseline node is a candidate.
pub fn decide_transportability(
    g: &SelectionDiagram,
    candidates: Option<&[String]>,
    max_size: usize,
) -> Result<TransportabilityVerdict> {
    let pool = match candidates {
        Some(c) => resolve_candidates(g, c)?,
        None => resolve_candidates(g, &g.baseline_nodes())?,
    };
    let sets = minimal_separators(g, &pool, max_size);
    if let Some(first) = sets.first() {
        return Ok(TransportabilityVerdict {
            transportable: true,
            witness_set: Some(names(g, first)),
            minimal_sets: sets.iter().map(|s| names(g, s)).collect(),
            reason: VerdictReason::Separated,
        });
    }
    let [_, outcome, selection] = g.role_ids();
    let reason = if g.dag().has_edge(selection, outcome) {
        VerdictReason::DirectEdge
    } else {
        VerdictReason::OpenPaths {
            paths: open_paths(g, &pool),
        }
    };
    Ok(TransportabilityVerdict {
        transportable: false,
        witness_set: None,
        minimal_sets: Vec::new(),
        reason,
    })
}

/// Checks that searching baseline covariates only is sound for `g`: the
/// selection node is a root that treatment cannot reach, there is no direct
/// `P -> Y` edge, and whenever some observed set separates `Y` from `P`, a
/// baseline-only set does too.
pub fn check_baseline_reduction(g: &SelectionDiagram) -> BaselineReduction {
    let [treatment, outcome, selection] = g.role_ids();
    let dag = g.dag();
    if !dag.parents(selection).is_empty() || dag.descendants(&[treatment])[selection] {
        return BaselineReduction {
            sound: false,
            reason: "selection node is not a root outside the treatment's descendants".into(),
        };
    }
    if dag.has_edge(selection, outcome) {
        return BaselineReduction {
            sound: false,
            reason: "direct edge from selection to outcome".into(),
        };
    }
    let pool: Vec<usize> = (0..dag.len())
        .filter(|&i| !g.latent_flags()[i] && !g.role_ids().contains(&i))
        .collect();
    let separators = minimal_separators(g, &pool, super::DEFAULT_MAX_SET_SIZE);
    if separators.is_empty() {
        return BaselineReduction {
            sound: true,
            reason:
                "no observed separator exists; baseline search will report non-transportability"
                    .into(),
        };
    }
    if separators
        .iter()
        .all(|s| s.iter().any(|&i| g.is_post_treatment_id(i)))
    {
        let example = names(g, &separators[0]).join(",");
        return BaselineReduction {
            sound: false,
            reason: format!(
                "every separator contains a descendant of treatment (e.g. {{{example}}}); post-treatment adjustment would be required"
            ),
        };
    }
    BaselineReduction {
        sound: true,
        reason: "a baseline-only separator exists".into(),
    }
}

/// Lists paths from selection to outcome that remain open given
/// `pool ∪ {A}` in the intervened graph.
fn open_paths(g: &SelectionDiagram, pool: &[usize]) -> Vec<String> {
    let dag = g.intervened();
    let [treatment, outcome, selection] = g.role_ids();
    let mut observed = vec![false; dag.len()];
    for &z in pool.iter().chain(std::iter::once(&treatment)) {
        observed[z] = true;
    }
    let mut given: Vec<usize> = pool.to_vec();
    given.push(treatment);
    let anc = dag.ancestors(&given);

    let mut out = Vec::new();
    let mut budget = PATH_SEARCH_BUDGET;
    let mut path = vec![selection];
    let mut on_path = vec![false; dag.len()];
    on_path[selection] = true;

    // depth-first over simple trails; `forward[i]` records whether the
    // i-th step followed edge direction
    #[allow(clippy::too_many_arguments)]
    fn walk(
        dag: &crate::graph::Dag,
        target: usize,
        observed: &[bool],
        anc: &[bool],
        path: &mut Vec<usize>,
        forward: &mut Vec<bool>,
        on_path: &mut [bool],
        out: &mut Vec<String>,
        budget: &mut usize,
    ) {
        if out.len() >= MAX_LISTED_PATHS || *budget == 0 {
            return;
        }
        *budget -= 1;
        let here = *path.last().unwrap();
        if here == target {
            let mut text = dag.name(path[0]).to_owned();
            for (i, &node) in path.iter().enumerate().skip(1) {
                text.push_str(if forward[i - 1] { " -> " } else { " <- " });
                text.push_str(dag.name(node));
            }
            out.push(text);
            return;
        }
        let steps = dag
            .children(here)
            .iter()
            .map(|&c| (c, true))
            .chain(dag.parents(here).iter().map(|&p| (p, false)))
            .collect::<Vec<_>>();
        for (next, fwd) in steps {
            if on_path[next] {
                continue;
            }
            // `here` is interior when we leave it; check its blocking status
            if path.len() > 1 {
                let arrived_forward = *forward.last().unwrap();
                let collider = arrived_forward && !fwd;
                let blocked = if collider { !anc[here] } else { observed[here] };
                if blocked {
                    continue;
                }
            }
            path.push(next);
            forward.push(fwd);
            on_path[next] = true;
            walk(
                dag, target, observed, anc, path, forward, on_path, out, budget,
            );
            on_path[next] = false;
            forward.pop();
            path.pop();
        }
    }

    walk(
        dag,
        outcome,
        &observed,
        &anc,
        &mut path,
        &mut Vec::new(),
        &mut on_path,
        &mut out,
        &mut budget,
    );
    out
}

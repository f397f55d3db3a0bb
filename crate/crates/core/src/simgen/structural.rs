//! Binary structural models on a DAG and exact enumeration of their joints.

use num_bigint::BigInt;

use super::SplitMix64;
use crate::diagram::SelectionDiagram;
use crate::error::{Error, Result};
use crate::exact::Q;
use crate::graph::Dag;

/// Enumeration visits `2^n` configurations.
pub const MAX_ENUMERATED_NODES: usize = 20;

/// A binary Bayesian network. Every conditional probability is
/// `numerator / denom` with one shared denominator, so joint masses are
/// integers over `denom^n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuralModel {
    dag: Dag,
    denom: u64,
    // cpt[node][row]: numerator of Pr(node = 1 | parents), row bit j is the
    // value of parents(node)[j]
    cpt: Vec<Vec<u64>>,
}

impl StructuralModel {
    pub fn new(dag: Dag, denom: u64, cpt: Vec<Vec<u64>>) -> Result<Self> {
        dag.topological_order()?;
        if denom == 0 {
            return Err(Error::InvalidProbability(f64::NAN));
        }
        if cpt.len() != dag.len() {
            return Err(Error::InfeasibleScenario(format!(
                "{} conditional tables for {} nodes",
                cpt.len(),
                dag.len()
            )));
        }
        for (node, rows) in cpt.iter().enumerate() {
            let k = dag.parents(node).len();
            if k >= 32 || rows.len() != 1usize << k {
                return Err(Error::InfeasibleScenario(format!(
                    "node {} needs {} rows, found {}",
                    dag.name(node),
                    1u64.checked_shl(k as u32).unwrap_or(0),
                    rows.len()
                )));
            }
            if let Some(&bad) = rows.iter().find(|&&r| r > denom) {
                return Err(Error::InvalidProbability(bad as f64 / denom as f64));
            }
        }
        Ok(StructuralModel { dag, denom, cpt })
    }

    /// Conditional tables drawn uniformly from `{1, ..., denom-1} / denom`.
    pub fn random(dag: Dag, seed: u64, denom: u64) -> Result<Self> {
        if denom < 2 {
            return Err(Error::InfeasibleScenario(
                "denominator must be at least 2".into(),
            ));
        }
        if dag.len() > MAX_ENUMERATED_NODES {
            return Err(Error::TooLarge {
                nodes: dag.len(),
                limit: MAX_ENUMERATED_NODES,
            });
        }
        let mut rng = SplitMix64::new(seed);
        let cpt = (0..dag.len())
            .map(|i| {
                (0..1usize << dag.parents(i).len())
                    .map(|_| rng.range(1, denom - 1))
                    .collect()
            })
            .collect();
        StructuralModel::new(dag, denom, cpt)
    }

    /// A random model on the diagram's graph; latent nodes are ordinary
    /// variables here.
    pub fn from_diagram(diagram: &SelectionDiagram, seed: u64, denom: u64) -> Result<Self> {
        StructuralModel::random(diagram.dag().clone(), seed, denom)
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn denom(&self) -> u64 {
        self.denom
    }

    /// `Pr(node = 1 | parents)` for the parent values in `config`.
    pub fn probability_one(&self, node: usize, config: u32) -> Q {
        let row = self.row(node, config);
        Q::new(BigInt::from(self.cpt[node][row]), BigInt::from(self.denom))
    }

    fn row(&self, node: usize, config: u32) -> usize {
        self.dag
            .parents(node)
            .iter()
            .enumerate()
            .map(|(j, &p)| (((config >> p) & 1) as usize) << j)
            .sum()
    }
}

/// Exact joint distribution over up to [`MAX_ENUMERATED_NODES`] binary
/// variables. Configuration `c` sets node `i` to bit `i` of `c`; its
/// probability is `weights[c] / total`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointDistribution {
    names: Vec<String>,
    weights: Vec<u128>,
    total: u128,
}

impl JointDistribution {
    /// Builds a distribution from integer weights; `weights.len()` must be
    /// `2^names.len()`.
    pub fn from_weights(names: Vec<String>, weights: Vec<u128>) -> Result<Self> {
        if names.len() > MAX_ENUMERATED_NODES {
            return Err(Error::TooLarge {
                nodes: names.len(),
                limit: MAX_ENUMERATED_NODES,
            });
        }
        if weights.len() != 1usize << names.len() {
            return Err(Error::InvalidQuery(format!(
                "{} weights for {} variables",
                weights.len(),
                names.len()
            )));
        }
        let total = weights
            .iter()
            .try_fold(0u128, |acc, &w| acc.checked_add(w))
            .ok_or_else(|| Error::Overflow("joint weights".into()))?;
        if total == 0 {
            return Err(Error::InvalidQuery("joint distribution has no mass".into()));
        }
        Ok(JointDistribution {
            names,
            weights,
            total,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownNode(name.to_owned()))
    }

    pub fn weights(&self) -> &[u128] {
        &self.weights
    }

    pub fn total(&self) -> u128 {
        self.total
    }

    /// Probability of configuration `config`.
    pub fn probability(&self, config: u32) -> Q {
        Q::new(
            BigInt::from(self.weights[config as usize]),
            BigInt::from(self.total),
        )
    }

    /// Weights of the marginal over `vars`; entry `k` has `vars[j]` set to
    /// bit `j` of `k`. Summation order does not affect the exact result.
    pub fn marginal_weights(&self, vars: &[usize]) -> Vec<u128> {
        let mut out = vec![0u128; 1usize << vars.len()];
        for (config, &w) in self.weights.iter().enumerate() {
            let key: usize = vars
                .iter()
                .enumerate()
                .map(|(j, &v)| ((config >> v) & 1) << j)
                .sum();
            out[key] += w;
        }
        out
    }

    /// Exact marginal probabilities over `vars`, indexed as in
    /// [`JointDistribution::marginal_weights`].
    pub fn marginal(&self, vars: &[usize]) -> Vec<Q> {
        self.marginal_weights(vars)
            .into_iter()
            .map(|w| Q::new(BigInt::from(w), BigInt::from(self.total)))
            .collect()
    }
}

/// Every configuration's probability as a product of conditional table
/// entries.
pub fn enumerate_joint(model: &StructuralModel) -> Result<JointDistribution> {
    let n = model.dag.len();
    if n > MAX_ENUMERATED_NODES {
        return Err(Error::TooLarge {
            nodes: n,
            limit: MAX_ENUMERATED_NODES,
        });
    }
    let overflow = || Error::Overflow(format!("{}^{n} does not fit in 128 bits", model.denom));
    (model.denom as u128)
        .checked_pow(n as u32)
        .ok_or_else(overflow)?;
    let weights = (0..1u32 << n)
        .map(|config| {
            (0..n).fold(1u128, |acc, node| {
                let one = model.cpt[node][model.row(node, config)];
                let factor = if (config >> node) & 1 == 1 {
                    one
                } else {
                    model.denom - one
                };
                // bounded by denom^n, checked above
                acc * factor as u128
            })
        })
        .collect();
    JointDistribution::from_weights(model.dag.names().to_vec(), weights)
}

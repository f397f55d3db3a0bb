//! Directed acyclic graphs with d-separation queries.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};

/// A directed graph over named nodes. Acyclicity is checked by
/// [`Dag::topological_order`]; constructors that need it call it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dag {
    names: Vec<String>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl Dag {
    pub fn new() -> Self {
        Self::default()
    }

    /// A graph on nodes `X0..X{n-1}` with the given edges, for tests and
    /// random generation. Fails on cycles.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Dag::new();
        for i in 0..n {
            g.add_node(format!("X{i}"))?;
        }
        for &(a, b) in edges {
            g.add_edge(a, b)?;
        }
        g.topological_order()?;
        Ok(g)
    }

    pub fn add_node(&mut self, name: impl Into<String>) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::InvalidQuery(format!("duplicate node {name}")));
        }
        let id = self.names.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.parents.push(Vec::new());
        self.children.push(Vec::new());
        Ok(id)
    }

    /// Adds `from -> to`; repeated edges are ignored.
    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<()> {
        if from >= self.len() || to >= self.len() {
            return Err(Error::UnknownNode(format!("#{}", from.max(to))));
        }
        if from == to {
            return Err(Error::Cycle(self.names[from].clone()));
        }
        if !self.children[from].contains(&to) {
            self.children[from].push(to);
            self.parents[to].push(from);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.id(name)
            .ok_or_else(|| Error::UnknownNode(name.to_owned()))
    }

    pub fn parents(&self, id: usize) -> &[usize] {
        &self.parents[id]
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.children
            .iter()
            .enumerate()
            .flat_map(|(from, cs)| cs.iter().map(move |&to| (from, to)))
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.children[from].contains(&to)
    }

    /// Kahn's algorithm; on failure names a node that lies on a cycle.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..self.len()).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(self.len());
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &c in &self.children[u] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if order.len() == self.len() {
            Ok(order)
        } else {
            let stuck = (0..self.len()).find(|&i| indegree[i] > 0).unwrap_or(0);
            Err(Error::Cycle(self.names[stuck].clone()))
        }
    }

    fn closure(&self, seeds: &[usize], up: bool) -> Vec<bool> {
        let mut mark = vec![false; self.len()];
        let mut stack: Vec<usize> = seeds.to_vec();
        while let Some(u) = stack.pop() {
            if std::mem::replace(&mut mark[u], true) {
                continue;
            }
            let next = if up {
                &self.parents[u]
            } else {
                &self.children[u]
            };
            stack.extend(next.iter().copied().filter(|&w| !mark[w]));
        }
        mark
    }

    /// Ancestors of `seeds`, seeds included.
    pub fn ancestors(&self, seeds: &[usize]) -> Vec<bool> {
        self.closure(seeds, true)
    }

    /// Descendants of `seeds`, seeds included.
    pub fn descendants(&self, seeds: &[usize]) -> Vec<bool> {
        self.closure(seeds, false)
    }

    /// The graph with every edge into `node` removed.
    pub fn without_incoming(&self, node: usize) -> Dag {
        let mut g = self.clone();
        for &p in &self.parents[node] {
            g.children[p].retain(|&c| c != node);
        }
        g.parents[node].clear();
        g
    }

    /// Whether `xs` and `ys` are d-separated given `given`.
    ///
    /// Reachability over (node, direction) states: a trail may continue
    /// through a non-collider only when it is unobserved, and through a
    /// collider only when the collider has an observed descendant. Runs in
    /// O(nodes + edges). Nodes that appear in `given` are never reported as
    /// reachable.
    pub fn d_separated(&self, xs: &[usize], ys: &[usize], given: &[usize]) -> bool {
        let n = self.len();
        let mut observed = vec![false; n];
        for &z in given {
            observed[z] = true;
        }
        let has_observed_descendant = self.ancestors(given);
        let mut target = vec![false; n];
        for &y in ys {
            target[y] = true;
        }

        // state 0: arrived from a child (moving up); state 1: from a parent
        let mut visited = vec![[false; 2]; n];
        let mut queue: VecDeque<(usize, usize)> = xs.iter().map(|&x| (x, 0)).collect();
        while let Some((node, dir)) = queue.pop_front() {
            if std::mem::replace(&mut visited[node][dir], true) {
                continue;
            }
            if !observed[node] && target[node] {
                return false;
            }
            if dir == 0 {
                if !observed[node] {
                    queue.extend(self.parents[node].iter().map(|&p| (p, 0)));
                    queue.extend(self.children[node].iter().map(|&c| (c, 1)));
                }
            } else {
                if !observed[node] {
                    queue.extend(self.children[node].iter().map(|&c| (c, 1)));
                }
                if has_observed_descendant[node] {
                    queue.extend(self.parents[node].iter().map(|&p| (p, 0)));
                }
            }
        }
        true
    }
}

//! Independent oracles shared by the integration and acceptance tests.
//! Nothing here calls the library code it is used to check.
#![allow(dead_code)]

use std::path::PathBuf;

use num_rational::BigRational;
use num_traits::{One, Zero};

/// Repository-level `data/` directory.
pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

/// Small deterministic generator for test inputs (xorshift64*), kept apart
/// from the library generator.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1)
    }

    pub fn next(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.0 = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    pub fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }
}

/// Random DAG over `n` nodes: edges only go from lower to higher index of a
/// random permutation, each present with probability `p`.
pub fn random_dag_edges(rng: &mut TestRng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        order.swap(i, j);
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.unit() < p {
                edges.push((order[i], order[j]));
            }
        }
    }
    edges
}

/// d-separation by enumerating every simple path in the skeleton and
/// applying the chain, fork and collider rules to each.
pub fn dsep_by_paths(
    n: usize,
    edges: &[(usize, usize)],
    x: usize,
    y: usize,
    given: &[usize],
) -> bool {
    let has = |a: usize, b: usize| edges.contains(&(a, b));
    let mut children = vec![Vec::new(); n];
    for &(a, b) in edges {
        children[a].push(b);
    }
    let descendants_in_given = |c: usize| -> bool {
        let mut stack = vec![c];
        let mut seen = vec![false; n];
        while let Some(u) = stack.pop() {
            if given.contains(&u) {
                return true;
            }
            for &w in &children[u] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        false
    };
    let blocked = |path: &[usize]| -> bool {
        for k in 1..path.len() - 1 {
            let (a, m, b) = (path[k - 1], path[k], path[k + 1]);
            let collider = has(a, m) && has(b, m);
            if collider {
                if !descendants_in_given(m) {
                    return true;
                }
            } else if given.contains(&m) {
                return true;
            }
        }
        false
    };
    let mut path = vec![x];
    let mut visited = vec![false; n];
    visited[x] = true;
    fn walk(
        n: usize,
        edges: &[(usize, usize)],
        y: usize,
        path: &mut Vec<usize>,
        visited: &mut Vec<bool>,
        blocked: &dyn Fn(&[usize]) -> bool,
    ) -> bool {
        let u = *path.last().unwrap();
        if u == y {
            return !blocked(path);
        }
        for w in 0..n {
            if !visited[w] && (edges.contains(&(u, w)) || edges.contains(&(w, u))) {
                visited[w] = true;
                path.push(w);
                let open = walk(n, edges, y, path, visited, blocked);
                path.pop();
                visited[w] = false;
                if open {
                    return true;
                }
            }
        }
        false
    }
    !walk(n, edges, y, &mut path, &mut visited, &blocked)
}

/// Whether some simple path from `x` to `y` has no collider and no
/// interior node in `z`.
pub fn collider_free_path_avoiding(
    n: usize,
    edges: &[(usize, usize)],
    x: usize,
    y: usize,
    z: &[usize],
) -> bool {
    fn walk(
        n: usize,
        edges: &[(usize, usize)],
        y: usize,
        z: &[usize],
        path: &mut Vec<usize>,
    ) -> bool {
        let u = *path.last().unwrap();
        if u == y {
            return true;
        }
        for w in 0..n {
            if path.contains(&w) || !(edges.contains(&(u, w)) || edges.contains(&(w, u))) {
                continue;
            }
            if w != y && z.contains(&w) {
                continue;
            }
            // u would be a collider between its predecessor and w
            if path.len() >= 2 {
                let prev = path[path.len() - 2];
                if edges.contains(&(prev, u)) && edges.contains(&(w, u)) {
                    continue;
                }
            }
            path.push(w);
            let found = walk(n, edges, y, z, path);
            path.pop();
            if found {
                return true;
            }
        }
        false
    }
    walk(n, edges, y, z, &mut vec![x])
}

/// Every subset of `items`, as index lists.
pub fn subsets(items: &[usize]) -> Vec<Vec<usize>> {
    (0u32..1 << items.len())
        .map(|mask| {
            items
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &v)| v)
                .collect()
        })
        .collect()
}

pub type Q = BigRational;

pub fn rat(n: i64, d: i64) -> Q {
    Q::new(n.into(), d.into())
}

pub fn f(x: &Q) -> f64 {
    use num_traits::ToPrimitive;
    x.to_f64().unwrap()
}

/// One `(population, stratum)` block of four joint masses `m[y0][y1]`.
#[derive(Clone, Debug)]
pub struct Block {
    pub population: String,
    pub stratum: String,
    pub m: [[Q; 2]; 2],
}

impl Block {
    pub fn total(&self) -> Q {
        self.m.iter().flatten().fold(Q::zero(), |a, b| a + b)
    }

    /// `Pr(Y^a = 1)` within the block.
    pub fn risk(&self, a: bool) -> Q {
        let events = if a {
            &self.m[0][1] + &self.m[1][1]
        } else {
            &self.m[1][0] + &self.m[1][1]
        };
        events / self.total()
    }

    /// `G = Pr(Y¹=1 | Y⁰=1)`.
    pub fn g(&self) -> Option<Q> {
        let den = &self.m[1][0] + &self.m[1][1];
        (!den.is_zero()).then(|| &self.m[1][1] / den)
    }

    /// `H = Pr(Y¹=0 | Y⁰=0)`.
    pub fn h(&self) -> Option<Q> {
        let den = &self.m[0][0] + &self.m[0][1];
        (!den.is_zero()).then(|| &self.m[0][0] / den)
    }
}

/// Reads the blocks of a table through its public cell listing, then
/// recomputes everything by hand.
pub fn blocks(table: &transport_core::simgen::PotentialOutcomeTable) -> Vec<Block> {
    let mut out: Vec<Block> = Vec::new();
    for c in table.cells() {
        let key = (c.population.to_string(), c.stratum.to_string());
        let i = match out
            .iter()
            .position(|b| (b.population.clone(), b.stratum.clone()) == key)
        {
            Some(i) => i,
            None => {
                out.push(Block {
                    population: key.0,
                    stratum: key.1,
                    m: Default::default(),
                });
                out.len() - 1
            }
        };
        out[i].m[c.y0 as usize][c.y1 as usize] += c.mass.clone();
    }
    out
}

/// `Pr(Y^a = 1 | P = population)` by summing blocks.
pub fn pooled_risk(blocks: &[Block], population: &str, a: bool) -> Q {
    let mine: Vec<&Block> = blocks
        .iter()
        .filter(|b| b.population == population)
        .collect();
    let total = mine.iter().fold(Q::zero(), |acc, b| acc + b.total());
    let events = mine
        .iter()
        .fold(Q::zero(), |acc, b| acc + b.risk(a) * b.total());
    events / total
}

pub fn odds(r: &Q) -> Q {
    r / (Q::one() - r)
}

//! Exact plug-in mutual information over small finite joint tables.

use crate::error::{invalid, Result};

/// Largest alphabet allowed per axis.
pub const MAX_ALPHABET: usize = 16;

const SUM_TOLERANCE: f64 = 1e-12;

/// A probability table `p[a, b, c]` over three finite alphabets.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    dims: [usize; 3],
    probs: Vec<f64>,
}

/// Which quantity [`discrete_mi`] computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiQuery {
    /// `I(A; B)`
    Ab,
    /// `I(A; B | C)`
    AbGivenC,
}

impl DiscreteJoint {
    /// Build from a row-major table (`c` fastest).
    pub fn new(dims: [usize; 3], probs: Vec<f64>) -> Result<Self> {
        for (axis, &n) in dims.iter().enumerate() {
            if n == 0 || n > MAX_ALPHABET {
                return Err(invalid(
                    "dims",
                    format!("axis {axis} has size {n}, expected 1..={MAX_ALPHABET}"),
                ));
            }
        }
        let len = dims[0] * dims[1] * dims[2];
        if probs.len() != len {
            return Err(invalid("probs", format!("expected {len} entries, got {}", probs.len())));
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(invalid(
                "probs",
                format!("entry {bad} is not a finite nonnegative number"),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(invalid("probs", format!("entries sum to {total}, expected 1")));
        }
        Ok(Self { dims, probs })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut probs = Vec::with_capacity(dims.iter().product());
        for a in 0..dims[0] {
            for b in 0..dims[1] {
                for c in 0..dims[2] {
                    probs.push(f(a, b, c));
                }
            }
        }
        Self::new(dims, probs)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn prob(&self, a: usize, b: usize, c: usize) -> f64 {
        self.probs[(a * self.dims[1] + b) * self.dims[2] + c]
    }

    /// Permute the axes: `order[i]` names which current axis becomes axis `i`.
    pub fn reorder(&self, order: [usize; 3]) -> Result<Self> {
        let mut seen = [false; 3];
        for &o in &order {
            if o > 2 || seen[o] {
                return Err(invalid("order", format!("{order:?} is not a permutation")));
            }
            seen[o] = true;
        }
        let dims = [self.dims[order[0]], self.dims[order[1]], self.dims[order[2]]];
        Self::from_fn(dims, |i, j, k| {
            let mut idx = [0usize; 3];
            idx[order[0]] = i;
            idx[order[1]] = j;
            idx[order[2]] = k;
            self.prob(idx[0], idx[1], idx[2])
        })
    }

    /// Replace axis A by a deterministic coarsening `map[a]` into `0..n_out`.
    pub fn coarsen_a(&self, map: &[usize], n_out: usize) -> Result<Self> {
        if map.len() != self.dims[0] || map.iter().any(|&m| m >= n_out) {
            return Err(invalid("map", "coarsening map does not match the A alphabet"));
        }
        let [_, nb, nc] = self.dims;
        let mut probs = vec![0.0; n_out * nb * nc];
        for (a, &s) in map.iter().enumerate() {
            for b in 0..nb {
                for c in 0..nc {
                    probs[(s * nb + b) * nc + c] += self.prob(a, b, c);
                }
            }
        }
        // Summation reorders terms, so renormalise to stay inside the table tolerance.
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Self::new([n_out, nb, nc], probs)
    }
}

/// Exact plug-in `I(A;B)` or `I(A;B|C)` in nats.
pub fn discrete_mi(joint: &DiscreteJoint, which: MiQuery) -> f64 {
    let [na, nb, nc] = joint.dims;
    match which {
        MiQuery::Ab => {
            let mut pab = vec![0.0; na * nb];
            for a in 0..na {
                for b in 0..nb {
                    pab[a * nb + b] = (0..nc).map(|c| joint.prob(a, b, c)).sum();
                }
            }
            let pa: Vec<f64> = (0..na).map(|a| pab[a * nb..(a + 1) * nb].iter().sum()).collect();
            let pb: Vec<f64> = (0..nb).map(|b| (0..na).map(|a| pab[a * nb + b]).sum()).collect();
            let mut mi = 0.0;
            for a in 0..na {
                for b in 0..nb {
                    let p = pab[a * nb + b];
                    if p > 0.0 {
                        mi += p * (p / (pa[a] * pb[b])).ln();
                    }
                }
            }
            mi
        }
        MiQuery::AbGivenC => {
            let mut pc = vec![0.0; nc];
            let mut pac = vec![0.0; na * nc];
            let mut pbc = vec![0.0; nb * nc];
            for a in 0..na {
                for b in 0..nb {
                    for c in 0..nc {
                        let p = joint.prob(a, b, c);
                        pc[c] += p;
                        pac[a * nc + c] += p;
                        pbc[b * nc + c] += p;
                    }
                }
            }
            let mut mi = 0.0;
            for a in 0..na {
                for b in 0..nb {
                    for c in 0..nc {
                        let p = joint.prob(a, b, c);
                        if p > 0.0 {
                            mi += p * (p * pc[c] / (pac[a * nc + c] * pbc[b * nc + c])).ln();
                        }
                    }
                }
            }
            mi
        }
    }
}

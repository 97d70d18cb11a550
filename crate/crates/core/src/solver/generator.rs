//! Discrete generator as a list of jump rates between grid nodes.
//!
//! Node `i` carries the mass `m_i = w_i * dV` of its control volume, where
//! `w_i` is 1/2 per reflecting wall it sits on. A transition `i -> j` at
//! rate `r` moves probability mass. The forward operator on densities is
//! `(L_h u)_j = (sum_i r_ij m_i u_i - m_j u_j sum_k r_jk) / m_j`, the backward
//! operator is `(Lf)_i = sum_j r_ij (f_j - f_i)`, and the two are adjoint in
//! the `m`-weighted inner product by construction.

use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;
use rayon::prelude::*;

use super::banded::BandMatrix;
use crate::error::Result;
use crate::grid::{BoundaryKind, Grid};
use crate::problem::ProblemSpec;

/// Diffusion below this is treated as absent.
const DEGENERATE: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
}

#[derive(Debug, Clone)]
pub struct DiscreteGenerator {
    n: usize,
    weights: Vec<f64>,
    transitions: Vec<Transition>,
    max_peclet: f64,
    /// Largest `|from - to|`.
    reach: usize,
}

/// `z / (e^z - 1)`, continuous at 0.
pub fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - 0.5 * z
    } else if z > 700.0 {
        z * (-z).exp()
    } else {
        z / z.exp_m1()
    }
}

fn chain_weight(grid: &Grid, flat: usize) -> f64 {
    grid.multi_index(flat)
        .iter()
        .zip(grid.axes())
        .map(|(&k, ax)| {
            if ax.kind() == BoundaryKind::Reflecting && (k == 0 || k == ax.len() - 1) {
                0.5
            } else {
                1.0
            }
        })
        .product()
}

fn axis_weight(grid: &Grid, flat: usize, axis: usize) -> f64 {
    let ax = grid.axis(axis);
    let k = grid.multi_index(flat)[axis];
    if ax.kind() == BoundaryKind::Reflecting && (k == 0 || k == ax.len() - 1) {
        0.5
    } else {
        1.0
    }
}

struct NodeRates {
    transitions: Vec<Transition>,
    peclet: f64,
}

impl DiscreteGenerator {
    pub fn assemble(p: &ProblemSpec, grid: &Grid) -> Result<DiscreteGenerator> {
        let n = grid.len();
        let dim = grid.dim();
        let strides: Vec<usize> = match dim {
            1 => vec![1],
            _ => vec![grid.axis(1).len(), 1],
        };
        let per_node: Vec<NodeRates> = (0..n)
            .into_par_iter()
            .map(|i| node_rates(p, grid, i, &strides))
            .collect::<Result<_>>()?;
        let mut transitions = Vec::new();
        let mut max_peclet: f64 = 0.0;
        for r in per_node {
            max_peclet = max_peclet.max(r.peclet);
            transitions.extend(r.transitions);
        }
        let reach = transitions
            .iter()
            .map(|t| t.from.abs_diff(t.to))
            .max()
            .unwrap_or(0);
        Ok(DiscreteGenerator {
            n,
            weights: (0..n).map(|i| chain_weight(grid, i)).collect(),
            transitions,
            max_peclet,
            reach,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest cell Peclet number `|V| h / (2 a)` over faces with diffusion.
    pub fn max_peclet(&self) -> f64 {
        self.max_peclet
    }

    /// `L_h u` on nodal densities.
    pub fn forward(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for t in &self.transitions {
            let flow = t.rate * self.weights[t.from] * u[t.from];
            out[t.to] += flow;
            out[t.from] -= flow;
        }
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o /= w;
        }
        out
    }

    /// `L_h f` acting on test functions.
    pub fn backward(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for t in &self.transitions {
            out[t.from] += t.rate * (f[t.to] - f[t.from]);
        }
        out
    }

    /// `max_i sum_j |Q_ij|` of the rate matrix.
    pub fn norm_inf(&self) -> f64 {
        let mut row = vec![0.0; self.n];
        for t in &self.transitions {
            row[t.from] += 2.0 * t.rate.abs();
        }
        row.into_iter().fold(0.0, f64::max)
    }

    /// Number of closed communicating classes of the positive-rate graph.
    /// A unique stationary distribution needs exactly one.
    pub fn closed_classes(&self) -> usize {
        let mut g: DiGraph<(), ()> = DiGraph::with_capacity(self.n, self.transitions.len());
        let nodes: Vec<_> = (0..self.n).map(|_| g.add_node(())).collect();
        for t in &self.transitions {
            if t.rate > 0.0 && t.from != t.to {
                g.add_edge(nodes[t.from], nodes[t.to], ());
            }
        }
        let sccs = kosaraju_scc(&g);
        let mut comp = vec![0usize; self.n];
        for (c, members) in sccs.iter().enumerate() {
            for v in members {
                comp[v.index()] = c;
            }
        }
        let mut leaves = vec![true; sccs.len()];
        for t in &self.transitions {
            if t.rate > 0.0 && comp[t.from] != comp[t.to] {
                leaves[comp[t.from]] = false;
            }
        }
        leaves.iter().filter(|&&l| l).count()
    }

    /// `sigma I - Q^T` acting on node masses.
    pub(crate) fn shifted_transpose(&self, sigma: f64) -> BandMatrix {
        let b = self.reach.max(1);
        let mut m = BandMatrix::zeros(self.n, b, b);
        for i in 0..self.n {
            m.add(i, i, sigma);
        }
        for t in &self.transitions {
            m.add(t.to, t.from, -t.rate);
            m.add(t.from, t.from, t.rate);
        }
        m
    }
}

fn node_rates(p: &ProblemSpec, grid: &Grid, i: usize, strides: &[usize]) -> Result<NodeRates> {
    let dim = grid.dim();
    let idx = grid.multi_index(i);
    let xi = grid.point(i);
    let a_i = p.diffusion_at(&xi)?;
    let mut out = Vec::new();
    let mut peclet: f64 = 0.0;
    for k in 0..dim {
        if idx[k] + 1 >= grid.axis(k).len() {
            continue;
        }
        let j = i + strides[k];
        let xj = grid.point(j);
        let a_j = p.diffusion_at(&xj)?;
        let xf: Vec<f64> = xi.iter().zip(&xj).map(|(a, b)| 0.5 * (a + b)).collect();
        let v_f = p.drift_at(&xf)?[k];
        let h = grid.axis(k).spacing();
        let (aik, ajk) = (a_i[k * dim + k], a_j[k * dim + k]);
        let (rij, rji) = if dim == 1 {
            let a_f = p.diffusion_at(&xf)?[0];
            if a_f <= DEGENERATE {
                (v_f.max(0.0) / h, (-v_f).max(0.0) / h)
            } else {
                let z = h * v_f / a_f;
                peclet = peclet.max(0.5 * z.abs());
                (bernoulli(-z) * aik / (h * h), bernoulli(z) * ajk / (h * h))
            }
        } else {
            let amin = aik.min(ajk);
            let theta = if amin <= DEGENERATE {
                1.0
            } else {
                let pe = v_f.abs() * h / (2.0 * amin);
                peclet = peclet.max(pe);
                if pe > 1.0 {
                    1.0 - 1.0 / pe
                } else {
                    0.0
                }
            };
            let central = 0.5 * (1.0 - theta);
            let ci = central + if v_f > 0.0 { theta } else { 0.0 };
            let cj = central + if v_f < 0.0 { theta } else { 0.0 };
            (
                aik / (h * h) + v_f * ci / h,
                ajk / (h * h) - v_f * cj / h,
            )
        };
        let wi = axis_weight(grid, i, k);
        let wj = axis_weight(grid, j, k);
        out.push(Transition {
            from: i,
            to: j,
            rate: rij / wi,
        });
        out.push(Transition {
            from: j,
            to: i,
            rate: rji / wj,
        });
    }
    if dim == 2 {
        let a01 = 0.5 * (a_i[1] + a_i[2]);
        if a01 != 0.0 {
            let (h0, h1) = (grid.axis(0).spacing(), grid.axis(1).spacing());
            let (n0, n1) = (grid.axis(0).len() as isize, grid.axis(1).len() as isize);
            let c = 2.0 * a01 / (4.0 * h0 * h1) / chain_weight(grid, i);
            for (s0, s1) in [(1isize, 1isize), (-1, -1), (1, -1), (-1, 1)] {
                let t0 = idx[0] as isize + s0;
                let t1 = idx[1] as isize + s1;
                if t0 < 0 || t1 < 0 || t0 >= n0 || t1 >= n1 {
                    continue;
                }
                out.push(Transition {
                    from: i,
                    to: grid.index(&[t0 as usize, t1 as usize]),
                    rate: (s0 * s1) as f64 * c,
                });
            }
        }
    }
    Ok(NodeRates {
        transitions: out,
        peclet,
    })
}

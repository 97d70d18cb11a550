//! Sublevel sets `{U < rho}` of a compact function against a density grid.
//!
//! Cells cut by the level are integrated piecewise. In 1D the interpolant is
//! integrated up to the polished crossing; in 2D over the inside polygon of
//! the marching-squares cut, with saddle cells resolved by the sign of
//! `U - rho` at the cell centre. Wall half-cells follow the same power law
//! as normalization.

mod geometry;
mod profile;

pub use profile::{build_profile, build_profile_with, derivative_check, rho_grid, LevelProfile, ProfileLevel, Spacing};

use serde::{Deserialize, Serialize};

use crate::density::{wall_exponent, DensityGrid};
use crate::error::{Error, Result};
use crate::grid::{BoundaryKind, Segment, SegmentKind};
use crate::problem::{polish_root, CompactFunction, ProblemSpec};
use geometry::{bilinear, polygon_area, polygon_integral, P2};

/// Levels whose contour carries a gradient at or below this are irregular.
pub const REGULAR_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceWeight {
    /// `u / |grad U|`, the derivative of the sublevel measure.
    InvGrad,
    /// `u a(grad U, grad U) / |grad U|`, the outward flux of `a grad U`.
    FluxForm,
}

/// One piece of a level set: a crossing point in 1D (length 1), a polyline
/// segment in 2D, located at its midpoint projected onto the level.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourElement {
    pub point: Vec<f64>,
    pub length: f64,
    pub normal: Vec<f64>,
    pub density: f64,
    pub grad: Vec<f64>,
}

impl ContourElement {
    pub fn grad_norm(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourSet {
    pub level: f64,
    pub elements: Vec<ContourElement>,
}

impl ContourSet {
    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.elements.iter().map(|e| e.length).sum()
    }

    /// Element with the smallest gradient.
    pub fn weakest(&self) -> Option<&ContourElement> {
        self.elements
            .iter()
            .min_by(|a, b| a.grad_norm().total_cmp(&b.grad_norm()))
    }

    pub fn is_regular(&self, tol: f64) -> bool {
        self.weakest().is_none_or(|e| e.grad_norm() > tol)
    }

    pub fn check_regular(&self, tol: f64) -> Result<()> {
        match self.weakest() {
            Some(e) if !(e.grad_norm() > tol) => Err(Error::IrregularLevel {
                rho: self.level,
                point: e.point.clone(),
                grad: e.grad_norm(),
            }),
            _ => Ok(()),
        }
    }
}

/// Inside and outside integrals of one cut, plus its contour.
struct Cut {
    inside: f64,
    outside: f64,
    elements: Vec<ContourElement>,
}

/// `U` sampled once on the grid nodes and wall points, reused across levels.
pub struct LevelSet<'a> {
    density: &'a DensityGrid,
    u: &'a CompactFunction,
    segs: Vec<Vec<Segment>>,
    /// Segment endpoints per axis.
    ext: Vec<Vec<f64>>,
    /// `U` on the product of `ext`, axis 0 outermost.
    ext_u: Vec<f64>,
    cell_mass: Vec<f64>,
}

impl<'a> LevelSet<'a> {
    pub fn new(density: &'a DensityGrid, u: &'a CompactFunction) -> Result<LevelSet<'a>> {
        let grid = density.grid();
        if grid.dim() != u.dim() {
            return Err(Error::Precondition(format!(
                "U is {}-dimensional but the density grid is {}-dimensional",
                u.dim(),
                grid.dim()
            )));
        }
        let segs: Vec<Vec<Segment>> = grid.axes().iter().map(|ax| ax.segments()).collect();
        let ext: Vec<Vec<f64>> = segs
            .iter()
            .map(|s| {
                let mut e: Vec<f64> = s.iter().map(|s| s.a).collect();
                e.push(s.last().expect("axis has segments").b);
                e
            })
            .collect();
        let ext_u = match ext.len() {
            1 => ext[0].iter().map(|&x| u.value_or_inf(&[x])).collect(),
            _ => ext[0]
                .iter()
                .flat_map(|&x0| ext[1].iter().map(move |&x1| [x0, x1]))
                .map(|x| u.value_or_inf(&x))
                .collect(),
        };
        let cell_mass = Self::cell_values(density, &segs, None);
        Ok(LevelSet {
            density,
            u,
            segs,
            ext,
            ext_u,
            cell_mass,
        })
    }

    fn cell_values(density: &DensityGrid, segs: &[Vec<Segment>], g: Option<&[f64]>) -> Vec<f64> {
        match segs.len() {
            1 => segs[0].iter().map(|s| density.cell_integral(&[*s], g)).collect(),
            _ => segs[0]
                .iter()
                .flat_map(|s0| segs[1].iter().map(move |s1| [*s0, *s1]))
                .map(|c| density.cell_integral(&c, g))
                .collect(),
        }
    }

    pub fn density(&self) -> &DensityGrid {
        self.density
    }

    pub fn function(&self) -> &CompactFunction {
        self.u
    }

    /// Sublevel measure `y(rho) = mu({U < rho})`.
    pub fn measure(&self, rho: f64) -> f64 {
        self.cut(rho, None, &self.cell_mass, false).inside
    }

    /// `mu(box \ {U < rho})`, integrated over the complementary pieces.
    pub fn complement(&self, rho: f64) -> f64 {
        self.cut(rho, None, &self.cell_mass, false).outside
    }

    /// `int_{U < rho} g u dx` for `g` given at the grid nodes.
    pub fn integrate(&self, rho: f64, g: &[f64]) -> Result<f64> {
        if g.len() != self.density.grid().len() {
            return Err(Error::Precondition(format!(
                "{} integrand values for {} nodes",
                g.len(),
                self.density.grid().len()
            )));
        }
        let full = Self::cell_values(self.density, &self.segs, Some(g));
        Ok(self.cut(rho, Some(g), &full, false).inside)
    }

    pub fn contour(&self, rho: f64) -> ContourSet {
        ContourSet {
            level: rho,
            elements: self.cut(rho, None, &self.cell_mass, true).elements,
        }
    }

    /// `int_{U = rho} u w / |grad U| ds` with `w` chosen by `weight`.
    pub fn surface_integral(&self, p: &ProblemSpec, rho: f64, weight: SurfaceWeight) -> Result<f64> {
        let c = self.contour(rho);
        c.check_regular(REGULAR_TOL)?;
        let mut total = 0.0;
        for e in &c.elements {
            let w = match weight {
                SurfaceWeight::InvGrad => 1.0,
                SurfaceWeight::FluxForm => p.quadratic(&e.grad, &e.point)?,
            };
            total += e.length * e.density * w / e.grad_norm();
        }
        Ok(total)
    }

    fn cut(&self, rho: f64, g: Option<&[f64]>, full: &[f64], contour: bool) -> Cut {
        match self.segs.len() {
            1 => self.cut_1d(rho, g, full, contour),
            _ => self.cut_2d(rho, g, full, contour),
        }
    }

    fn element(&self, x: Vec<f64>, length: f64, density: f64) -> ContourElement {
        let grad = self
            .u
            .function()
            .grad_at(&x)
            .unwrap_or_else(|_| vec![0.0; x.len()]);
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let normal = if norm > 0.0 {
            grad.iter().map(|g| g / norm).collect()
        } else {
            vec![0.0; x.len()]
        };
        ContourElement {
            point: x,
            length,
            normal,
            density,
            grad,
        }
    }

    fn cut_1d(&self, rho: f64, g: Option<&[f64]>, full: &[f64], contour: bool) -> Cut {
        let vals = self.density.values();
        let gv = |k: usize| g.map_or(1.0, |g| g[k]);
        let mut out = Cut {
            inside: 0.0,
            outside: 0.0,
            elements: Vec::new(),
        };
        for (c, seg) in self.segs[0].iter().enumerate() {
            let (ua, ub) = (self.ext_u[c], self.ext_u[c + 1]);
            let (ia, ib) = (ua < rho, ub < rho);
            if ia == ib {
                if ia {
                    out.inside += full[c];
                } else {
                    out.outside += full[c];
                }
                continue;
            }
            let x = polish_root(self.u, rho, &[seg.a], &[seg.b], ua, ub)[0];
            let w = seg.width();
            // part of the cell on the `a` side of the crossing, and density there
            let (below, dens) = match seg.kind {
                SegmentKind::Interior(k) => {
                    let t = ((x - seg.a) / w).clamp(0.0, 1.0);
                    let (va, vb) = (vals[k] * gv(k), vals[k + 1] * gv(k + 1));
                    let part = w * (t * va + 0.5 * t * t * (vb - va));
                    (part, vals[k] + t * (vals[k + 1] - vals[k]))
                }
                SegmentKind::Low => {
                    let alpha = wall_exponent(vals[0], vals[1]);
                    let s = ((x - seg.a) / w).clamp(0.0, 1.0);
                    (full[c] * s.powf(1.0 + alpha), vals[0] * s.powf(alpha))
                }
                SegmentKind::High => {
                    let n = vals.len();
                    let alpha = wall_exponent(vals[n - 1], vals[n - 2]);
                    let s = ((seg.b - x) / w).clamp(0.0, 1.0);
                    (full[c] * (1.0 - s.powf(1.0 + alpha)), vals[n - 1] * s.powf(alpha))
                }
            };
            let above = full[c] - below;
            if ia {
                out.inside += below;
                out.outside += above;
            } else {
                out.inside += above;
                out.outside += below;
            }
            if contour {
                out.elements.push(self.element(vec![x], 1.0, dens));
            }
        }
        out
    }

    fn ext_index(&self, e0: usize, e1: usize) -> usize {
        e0 * self.ext[1].len() + e1
    }

    /// Grid node at an extended index, `None` on an open wall.
    fn node_of(&self, axis: usize, e: usize) -> Option<usize> {
        let ax = self.density.grid().axis(axis);
        match ax.kind() {
            BoundaryKind::Reflecting => Some(e),
            BoundaryKind::Open => (e >= 1 && e <= ax.len()).then(|| e - 1),
        }
    }

    /// Pulls a point onto the level along the gradient.
    fn project(&self, mut x: [f64; 2], rho: f64) -> [f64; 2] {
        let tol = 1e-12 * (1.0 + rho.abs());
        for _ in 0..30 {
            let Ok(jet) = self.u.function().jet(&x) else {
                break;
            };
            let r = jet.value - rho;
            if r.abs() <= tol {
                break;
            }
            let g2 = jet.grad[0] * jet.grad[0] + jet.grad[1] * jet.grad[1];
            if !(g2 > 0.0) {
                break;
            }
            x = [x[0] - r * jet.grad[0] / g2, x[1] - r * jet.grad[1] / g2];
        }
        x
    }

    fn cut_2d(&self, rho: f64, g: Option<&[f64]>, full: &[f64], contour: bool) -> Cut {
        let grid = self.density.grid();
        let vals = self.density.values();
        let n1 = self.segs[1].len();
        let mut out = Cut {
            inside: 0.0,
            outside: 0.0,
            elements: Vec::new(),
        };
        for (c0, s0) in self.segs[0].iter().enumerate() {
            for (c1, s1) in self.segs[1].iter().enumerate() {
                let cell = c0 * n1 + c1;
                let ce = [(c0, c1), (c0 + 1, c1), (c0 + 1, c1 + 1), (c0, c1 + 1)];
                let cu: [f64; 4] = ce.map(|(a, b)| self.ext_u[self.ext_index(a, b)]);
                let flags = cu.map(|v| v < rho);
                if flags.iter().all(|&f| f) {
                    out.inside += full[cell];
                    continue;
                }
                if flags.iter().all(|&f| !f) {
                    out.outside += full[cell];
                    continue;
                }
                let corners: [P2; 4] = [[s0.a, s1.a], [s0.b, s1.a], [s0.b, s1.b], [s0.a, s1.b]];
                // crossings on edge k (corner k to k+1), polished from the
                // lower-coordinate end so neighbouring cells agree
                let mut cross: [Option<P2>; 4] = [None; 4];
                for k in 0..4 {
                    let j = (k + 1) % 4;
                    if flags[k] == flags[j] {
                        continue;
                    }
                    let (p, q) = if k < 2 { (k, j) } else { (j, k) };
                    let x = polish_root(self.u, rho, &corners[p], &corners[q], cu[p], cu[q]);
                    cross[k] = Some([x[0], x[1]]);
                }
                let saddle = flags[0] == flags[2] && flags[1] == flags[3];
                let centre = [0.5 * (s0.a + s0.b), 0.5 * (s1.a + s1.b)];
                let connected_inside = !saddle || self.u.value_or_inf(&centre) < rho;
                let walk = |side: bool| -> Vec<P2> {
                    let mut poly = Vec::with_capacity(6);
                    for k in 0..4 {
                        if flags[k] == side {
                            poly.push(corners[k]);
                        }
                        if let Some(p) = cross[k] {
                            poly.push(p);
                        }
                    }
                    poly
                };
                let corner_triangle = |k: usize| -> Vec<P2> {
                    let prev = cross[(k + 3) % 4].expect("saddle edge crossing");
                    let next = cross[k].expect("saddle edge crossing");
                    vec![prev, corners[k], next]
                };
                let (inside_polys, outside_polys): (Vec<Vec<P2>>, Vec<Vec<P2>>) = if !saddle {
                    (vec![walk(true)], vec![walk(false)])
                } else if connected_inside {
                    let sep = (0..4).filter(|&k| !flags[k]).map(corner_triangle).collect();
                    (vec![walk(true)], sep)
                } else {
                    let sep = (0..4).filter(|&k| flags[k]).map(corner_triangle).collect();
                    (sep, vec![walk(false)])
                };

                let nodes: Option<[usize; 4]> = {
                    let n: Vec<Option<usize>> = ce
                        .iter()
                        .map(|&(a, b)| Some(grid.index(&[self.node_of(0, a)?, self.node_of(1, b)?])))
                        .collect();
                    (n.iter().all(Option::is_some)).then(|| [n[0].unwrap(), n[1].unwrap(), n[2].unwrap(), n[3].unwrap()])
                };
                let interior = matches!(s0.kind, SegmentKind::Interior(_))
                    && matches!(s1.kind, SegmentKind::Interior(_))
                    && nodes.is_some();
                let area = s0.width() * s1.width();
                let (pin, pout) = if interior {
                    let nd = nodes.expect("interior cell has nodes");
                    let v = nd.map(|i| vals[i] * g.map_or(1.0, |g| g[i]));
                    let f = |p: P2| bilinear(&v, &corners, p);
                    let pin: f64 = inside_polys.iter().map(|q| polygon_integral(q, f)).sum();
                    let pout: f64 = outside_polys.iter().map(|q| polygon_integral(q, f)).sum();
                    (pin, pout)
                } else {
                    let fin: f64 = inside_polys.iter().map(|q| polygon_area(q)).sum::<f64>() / area;
                    let fout: f64 = outside_polys.iter().map(|q| polygon_area(q)).sum::<f64>() / area;
                    (fin * full[cell], fout * full[cell])
                };
                out.inside += pin;
                out.outside += pout;

                if contour {
                    let pairs: Vec<(P2, P2)> = if !saddle {
                        let pts: Vec<P2> = cross.iter().flatten().copied().collect();
                        vec![(pts[0], pts[1])]
                    } else {
                        (0..4)
                            .filter(|&k| flags[k] != connected_inside)
                            .map(|k| (cross[(k + 3) % 4].unwrap(), cross[k].unwrap()))
                            .collect()
                    };
                    let mean = self.cell_mass[cell] / area;
                    for (p, q) in pairs {
                        let length = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
                        if length == 0.0 {
                            continue;
                        }
                        let m = self.project([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])], rho);
                        let dens = match nodes {
                            Some(nd) if interior => {
                                let uv = nd.map(|i| vals[i]);
                                bilinear(&uv, &corners, m).max(0.0)
                            }
                            _ => mean,
                        };
                        out.elements.push(self.element(m.to_vec(), length, dens));
                    }
                }
            }
        }
        out
    }
}

pub fn sublevel_measure(d: &DensityGrid, u: &CompactFunction, rho: f64) -> Result<f64> {
    Ok(LevelSet::new(d, u)?.measure(rho))
}

pub fn complement_measure(d: &DensityGrid, u: &CompactFunction, rho: f64) -> Result<f64> {
    Ok(LevelSet::new(d, u)?.complement(rho))
}

pub fn contour(d: &DensityGrid, u: &CompactFunction, rho: f64) -> Result<ContourSet> {
    Ok(LevelSet::new(d, u)?.contour(rho))
}

pub fn surface_integral(
    d: &DensityGrid,
    p: &ProblemSpec,
    u: &CompactFunction,
    rho: f64,
    weight: SurfaceWeight,
) -> Result<f64> {
    LevelSet::new(d, u)?.surface_integral(p, rho, weight)
}

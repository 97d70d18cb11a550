//! Normalized densities on a grid and the cell quadrature shared by
//! normalization and level-set measures.
//!
//! Node-to-node cells integrate the (bi)linear interpolant. The wall
//! half-cells of open axes cannot use the trapezoid rule because densities
//! there may vanish or blow up like a power of the wall distance; they are
//! integrated against the power law fitted through the two outermost nodes.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{BoundaryKind, Grid, Segment, SegmentKind};

/// Values in `[-NEGATIVE_TOL, 0)` are roundoff and are set to zero; anything
/// more negative is a positivity failure.
pub const NEGATIVE_TOL: f64 = 1e-12;

const ALPHA_MIN: f64 = -0.9;
const ALPHA_MAX: f64 = 50.0;

/// Exponent of `u ~ d^alpha` through the outermost node (distance `h/2`
/// from the wall, value `u0`) and its neighbour (distance `3h/2`, `u1`).
pub(crate) fn wall_exponent(u0: f64, u1: f64) -> f64 {
    if u0 <= 0.0 {
        return ALPHA_MAX;
    }
    if u1 <= 0.0 {
        return ALPHA_MIN;
    }
    ((u0 / u1).ln() / (1.0f64 / 3.0).ln()).clamp(ALPHA_MIN, ALPHA_MAX)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    grid: Grid,
    values: Vec<f64>,
}

impl DensityGrid {
    /// Validates nodal values and rescales them to unit mass.
    pub fn normalize(grid: Grid, mut values: Vec<f64>) -> Result<DensityGrid> {
        if values.len() != grid.len() {
            return Err(Error::Precondition(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        for (i, v) in values.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::Precondition(format!(
                    "non-finite density value at node {i} ({:?})",
                    grid.point(i)
                )));
            }
            if *v < -NEGATIVE_TOL {
                return Err(Error::Positivity { node: i, value: *v });
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let raw = DensityGrid { grid, values };
        let mass = raw.total_mass();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::NonPositiveMass(mass));
        }
        let DensityGrid { grid, mut values } = raw;
        for v in &mut values {
            *v /= mass;
        }
        Ok(DensityGrid { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, flat: usize) -> f64 {
        self.values[flat]
    }

    /// `1 / (1 + alpha)` for the wall half-cell next to `node` on `axis`.
    pub(crate) fn wall_factor(&self, node: &[usize], axis: usize, inward: isize) -> f64 {
        let mut nb = node.to_vec();
        nb[axis] = (nb[axis] as isize + inward) as usize;
        let u0 = self.values[self.grid.index(node)];
        let u1 = self.values[self.grid.index(&nb)];
        1.0 / (1.0 + wall_exponent(u0, u1))
    }

    /// Mass of the cell spanned by one segment per axis.
    pub(crate) fn cell_mass(&self, segs: &[Segment]) -> f64 {
        self.cell_integral(segs, None)
    }

    /// Integral of `g u` over a cell, `g` given at the nodes and frozen at the
    /// node value across wall half-cells.
    pub(crate) fn cell_integral(&self, segs: &[Segment], g: Option<&[f64]>) -> f64 {
        let choices: Vec<Vec<(usize, f64, Option<isize>)>> = segs
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let w = s.width();
                match s.kind {
                    SegmentKind::Interior(j) => vec![(j, 0.5 * w, None), (j + 1, 0.5 * w, None)],
                    SegmentKind::Low => vec![(0, w, Some(1))],
                    SegmentKind::High => vec![(self.grid.axis(k).len() - 1, w, Some(-1))],
                }
            })
            .collect();
        let mut total = 0.0;
        let mut visit = |picks: &[(usize, f64, Option<isize>)]| {
            let node: Vec<usize> = picks.iter().map(|p| p.0).collect();
            let flat = self.grid.index(&node);
            let mut c = self.values[flat] * g.map_or(1.0, |g| g[flat]);
            for (axis, &(_, w, inward)) in picks.iter().enumerate() {
                c *= w;
                if let Some(step) = inward {
                    c *= self.wall_factor(&node, axis, step);
                }
            }
            total += c;
        };
        match choices.len() {
            1 => {
                for a in &choices[0] {
                    visit(&[*a]);
                }
            }
            _ => {
                for a in &choices[0] {
                    for b in &choices[1] {
                        visit(&[*a, *b]);
                    }
                }
            }
        }
        total
    }

    /// All quadrature cells in a fixed order with their masses.
    pub(crate) fn cells(&self) -> Vec<(Vec<Segment>, f64)> {
        let per_axis: Vec<Vec<Segment>> =
            self.grid.axes().iter().map(|ax| ax.segments()).collect();
        let mut out = Vec::new();
        match per_axis.len() {
            1 => {
                for s in &per_axis[0] {
                    let segs = vec![*s];
                    let m = self.cell_mass(&segs);
                    out.push((segs, m));
                }
            }
            _ => {
                for s0 in &per_axis[0] {
                    for s1 in &per_axis[1] {
                        let segs = vec![*s0, *s1];
                        let m = self.cell_mass(&segs);
                        out.push((segs, m));
                    }
                }
            }
        }
        out
    }

    pub fn total_mass(&self) -> f64 {
        self.cells().iter().map(|(_, m)| m).sum()
    }

    /// Mass of the cells touching a reflecting wall, where the box truncates
    /// an unbounded domain.
    pub fn truncation_mass(&self) -> f64 {
        let axes = self.grid.axes();
        self.cells()
            .iter()
            .filter(|(segs, _)| {
                segs.iter().zip(axes).any(|(s, ax)| {
                    ax.kind() == BoundaryKind::Reflecting
                        && matches!(s.kind, SegmentKind::Interior(j) if j == 0 || j + 2 == ax.len())
                })
            })
            .map(|(_, m)| m)
            .sum()
    }

    /// Relative L1 distance `sum |u - v| w / sum |v| w` with trapezoid weights.
    pub fn relative_l1(&self, reference: &[f64]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, (u, v)) in self.values.iter().zip(reference).enumerate() {
            let w = self.grid.trapezoid_weight(i);
            num += (u - v).abs() * w;
            den += v.abs() * w;
        }
        num / den
    }

    pub fn to_csv(&self) -> String {
        let n = self.grid.dim();
        let mut s = String::new();
        s.push_str(if n == 1 { "x1,u\n" } else { "x1,x2,u\n" });
        for (i, v) in self.values.iter().enumerate() {
            for x in self.grid.point(i) {
                let _ = write!(s, "{x:.16e},");
            }
            let _ = writeln!(s, "{v:.16e}");
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Reads a density written by [`DensityGrid::to_csv`] for `grid`.
    pub fn from_csv(text: &str, grid: &Grid) -> Result<DensityGrid> {
        let n = grid.dim();
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::DensityFormat("empty file".into()))?;
        let expected = if n == 1 { "x1,u" } else { "x1,x2,u" };
        if header.trim() != expected {
            return Err(Error::DensityFormat(format!(
                "header '{header}', expected '{expected}'"
            )));
        }
        let mut values = Vec::with_capacity(grid.len());
        for (row, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            if row >= grid.len() {
                return Err(Error::DensityFormat(format!(
                    "more rows than the {} grid nodes",
                    grid.len()
                )));
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::DensityFormat(format!("row {}: {e}", row + 2)))?;
            if fields.len() != n + 1 {
                return Err(Error::DensityFormat(format!(
                    "row {}: {} fields, expected {}",
                    row + 2,
                    fields.len(),
                    n + 1
                )));
            }
            for (x, want) in fields.iter().zip(grid.point(row)) {
                if (x - want).abs() > 1e-12 * (1.0 + want.abs()) {
                    return Err(Error::DensityFormat(format!(
                        "row {}: coordinate {x} does not match grid node {want}",
                        row + 2
                    )));
                }
            }
            values.push(fields[n]);
        }
        if values.len() != grid.len() {
            return Err(Error::DensityFormat(format!(
                "{} rows for {} grid nodes",
                values.len(),
                grid.len()
            )));
        }
        let d = DensityGrid {
            grid: grid.clone(),
            values,
        };
        if d.values.iter().any(|v| !v.is_finite() || *v < 0.0)
            || (d.total_mass() - 1.0).abs() > 1e-12
        {
            return DensityGrid::normalize(d.grid, d.values);
        }
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;

    fn grid1(lo: f64, hi: f64, n: usize, kind: BoundaryKind) -> Grid {
        Grid::new(vec![Axis::new(lo, hi, n, kind).unwrap()]).unwrap()
    }

    #[test]
    fn constant_normalizes_to_half() {
        let g = grid1(0.0, 2.0, 11, BoundaryKind::Reflecting);
        let d = DensityGrid::normalize(g, vec![3.0; 11]).unwrap();
        for v in d.values() {
            assert!((v - 0.5).abs() < 1e-15);
        }
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_on_open_axis() {
        let g = grid1(0.0, 2.0, 10, BoundaryKind::Open);
        let d = DensityGrid::normalize(g, vec![1.0; 10]).unwrap();
        for v in d.values() {
            assert!((v - 0.5).abs() < 1e-14, "{v}");
        }
    }

    #[test]
    fn wall_exponent_recovers_power_laws() {
        for alpha in [-0.5, 0.5, 2.0] {
            let u0 = 0.5f64.powf(alpha);
            let u1 = 1.5f64.powf(alpha);
            assert!((wall_exponent(u0, u1) - alpha).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_negative_and_zero_mass() {
        let g = grid1(0.0, 1.0, 5, BoundaryKind::Reflecting);
        assert!(matches!(
            DensityGrid::normalize(g.clone(), vec![1.0, -1e-6, 1.0, 1.0, 1.0]),
            Err(Error::Positivity { node: 1, .. })
        ));
        assert!(matches!(
            DensityGrid::normalize(g.clone(), vec![0.0; 5]),
            Err(Error::NonPositiveMass(_))
        ));
        let d = DensityGrid::normalize(g, vec![1.0, -1e-13, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(d.value(1), 0.0);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let g = Grid::new(vec![
            Axis::new(-1.0, 1.0, 7, BoundaryKind::Open).unwrap(),
            Axis::new(0.0, 3.0, 5, BoundaryKind::Reflecting).unwrap(),
        ])
        .unwrap();
        let vals: Vec<f64> = (0..g.len()).map(|i| 1.0 + (i as f64).sin().powi(2) / 3.0).collect();
        let d = DensityGrid::normalize(g.clone(), vals).unwrap();
        let text = d.to_csv();
        assert!(text.starts_with("x1,x2,u\n"));
        let back = DensityGrid::from_csv(&text, &g).unwrap();
        assert_eq!(back.values(), d.values());
    }

    #[test]
    fn csv_grid_mismatch() {
        let g = grid1(0.0, 1.0, 5, BoundaryKind::Reflecting);
        let d = DensityGrid::normalize(g, vec![1.0; 5]).unwrap();
        let other = grid1(0.0, 2.0, 5, BoundaryKind::Reflecting);
        assert!(DensityGrid::from_csv(&d.to_csv(), &other).is_err());
    }
}

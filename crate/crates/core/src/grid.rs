//! Uniform tensor grids over a box.
//!
//! Reflecting axes put nodes on both walls. Open axes inset every node by
//! half a cell so that densities singular at the wall stay finite at nodes;
//! the two half-cells between the outermost nodes and the walls are handled
//! by the quadrature in [`crate::density`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Reflecting,
    Open,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    lo: f64,
    hi: f64,
    n: usize,
    kind: BoundaryKind,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize, kind: BoundaryKind) -> Result<Axis> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidProblem(format!(
                "degenerate interval [{lo}, {hi}]"
            )));
        }
        if n < 3 {
            return Err(Error::InvalidProblem(format!(
                "need at least 3 nodes per axis, got {n}"
            )));
        }
        Ok(Axis { lo, hi, n, kind })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn kind(&self) -> BoundaryKind {
        self.kind
    }

    pub fn spacing(&self) -> f64 {
        match self.kind {
            BoundaryKind::Reflecting => (self.hi - self.lo) / (self.n - 1) as f64,
            BoundaryKind::Open => (self.hi - self.lo) / self.n as f64,
        }
    }

    pub fn node(&self, k: usize) -> f64 {
        debug_assert!(k < self.n);
        let h = self.spacing();
        match self.kind {
            BoundaryKind::Reflecting if k == self.n - 1 => self.hi,
            BoundaryKind::Reflecting => self.lo + k as f64 * h,
            BoundaryKind::Open => self.lo + (k as f64 + 0.5) * h,
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.node(k)).collect()
    }

    /// Composite trapezoid weight of node `k` in units of the spacing.
    pub fn trapezoid_weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.n - 1 {
            0.5
        } else {
            1.0
        }
    }

    /// Quadrature segments covering the axis: node-to-node cells and, on
    /// open axes, the two wall half-cells.
    pub(crate) fn segments(&self) -> Vec<Segment> {
        let mut out = Vec::with_capacity(self.n + 1);
        if self.kind == BoundaryKind::Open {
            out.push(Segment {
                a: self.lo,
                b: self.node(0),
                kind: SegmentKind::Low,
            });
        }
        for k in 0..self.n - 1 {
            out.push(Segment {
                a: self.node(k),
                b: self.node(k + 1),
                kind: SegmentKind::Interior(k),
            });
        }
        if self.kind == BoundaryKind::Open {
            out.push(Segment {
                a: self.node(self.n - 1),
                b: self.hi,
                kind: SegmentKind::High,
            });
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum SegmentKind {
    /// Between nodes `k` and `k + 1`.
    Interior(usize),
    /// Between the low wall and node 0.
    Low,
    /// Between the last node and the high wall.
    High,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Segment {
    pub a: f64,
    pub b: f64,
    pub kind: SegmentKind,
}

impl Segment {
    pub fn width(&self) -> f64 {
        self.b - self.a
    }
}

/// Tensor grid in one or two dimensions. Flat indices are row-major with
/// axis 0 outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Grid> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidProblem(format!(
                "only 1D and 2D grids are supported, got {} axes",
                axes.len()
            )));
        }
        Ok(Grid { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Axis::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::len).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        match self.axes.len() {
            1 => multi[0],
            _ => multi[0] * self.axes[1].len() + multi[1],
        }
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        match self.axes.len() {
            1 => vec![flat],
            _ => {
                let n1 = self.axes[1].len();
                vec![flat / n1, flat % n1]
            }
        }
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&k, ax)| ax.node(k))
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Trapezoid weight of a node in units of the cell volume.
    pub fn trapezoid_weight(&self, flat: usize) -> f64 {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&k, ax)| ax.trapezoid_weight(k))
            .product()
    }

    /// True when the node lies on the outermost layer of the grid.
    pub fn is_outer(&self, flat: usize) -> bool {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .any(|(&k, ax)| k == 0 || k == ax.len() - 1)
    }

    /// Same box and kinds with `factor` times as many cells per axis.
    pub fn refined(&self, factor: usize) -> Grid {
        let axes = self
            .axes
            .iter()
            .map(|ax| {
                let n = match ax.kind {
                    BoundaryKind::Reflecting => (ax.n - 1) * factor + 1,
                    BoundaryKind::Open => ax.n * factor,
                };
                Axis { n, ..ax.clone() }
            })
            .collect();
        Grid { axes }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflecting_nodes_hit_walls() {
        let ax = Axis::new(-8.0, 8.0, 801, BoundaryKind::Reflecting).unwrap();
        assert_eq!(ax.node(0), -8.0);
        assert_eq!(ax.node(800), 8.0);
        assert!((ax.spacing() - 0.02).abs() < 1e-15);
        assert!((ax.node(400)).abs() < 1e-13);
    }

    #[test]
    fn open_nodes_are_inset() {
        let ax = Axis::new(-1.0, 1.0, 2000, BoundaryKind::Open).unwrap();
        assert!(ax.node(0) > -1.0);
        assert!((ax.node(0) + 1.0 - 0.0005).abs() < 1e-15);
        assert!(ax.node(1999) < 1.0);
        let segs = ax.segments();
        assert_eq!(segs.len(), 2001);
        let covered: f64 = segs.iter().map(Segment::width).sum();
        assert!((covered - 2.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_spacing() {
        let ax = Axis::new(0.0, 1.0, 101, BoundaryKind::Reflecting).unwrap();
        let x = ax.nodes();
        let h = ax.spacing();
        for w in x.windows(2) {
            assert!(w[1] > w[0]);
            assert!(((w[1] - w[0]) - h).abs() <= 1e-12 * h.max(1.0));
        }
    }

    #[test]
    fn indexing_round_trips() {
        let g = Grid::new(vec![
            Axis::new(0.0, 1.0, 4, BoundaryKind::Reflecting).unwrap(),
            Axis::new(0.0, 2.0, 5, BoundaryKind::Open).unwrap(),
        ])
        .unwrap();
        for i in 0..g.len() {
            assert_eq!(g.index(&g.multi_index(i)), i);
        }
        assert_eq!(g.multi_index(7), vec![1, 2]);
    }

    #[test]
    fn rejects_degenerate_axes() {
        assert!(Axis::new(1.0, 1.0, 10, BoundaryKind::Open).is_err());
        assert!(Axis::new(0.0, 1.0, 2, BoundaryKind::Open).is_err());
    }

    #[test]
    fn refinement_halves_spacing() {
        let g = Grid::new(vec![
            Axis::new(-8.0, 8.0, 801, BoundaryKind::Reflecting).unwrap()
        ])
        .unwrap();
        let f = g.refined(2);
        assert_eq!(f.axis(0).len(), 1601);
        assert!((f.axis(0).spacing() * 2.0 - g.axis(0).spacing()).abs() < 1e-15);
        let g = Grid::new(vec![Axis::new(-1.0, 1.0, 100, BoundaryKind::Open).unwrap()]).unwrap();
        assert_eq!(g.refined(2).axis(0).len(), 200);
    }
}

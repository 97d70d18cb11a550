//! Stationary densities: discrete solve, closed-form evaluation and the weak
//! residual `int (Lf) u dx`.
//!
//! 1D uses Scharfetter-Gummel (exponentially fitted) fluxes, which keep every
//! jump rate nonnegative at any Peclet number. 2D uses central fluxes blended
//! toward upwind once the cell Peclet number exceeds 1. Both boundary kinds
//! carry zero flux through the wall.

mod banded;
mod generator;

use rayon::prelude::*;

pub use banded::{BandLu, BandMatrix};
pub use generator::{bernoulli, DiscreteGenerator, Transition};

use crate::density::DensityGrid;
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::grid::Grid;
use crate::problem::{min_eigenvalue, Differentiated, ProblemSpec};

pub const MAX_ITERATIONS: usize = 200;
pub const CONVERGENCE_TOL: f64 = 1e-13;
/// Relative shift of the inverse iteration, in units of `||Q||_inf`.
const SHIFT: f64 = 1e-10;
/// Target for `||L_h u||_inf / ||u||_inf`.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Smallest admissible diffusion eigenvalue at interior nodes.
const ELLIPTIC_TOL: f64 = 1e-10;
/// Reflecting-wall cell mass above which truncation is flagged.
pub const TRUNCATION_MASS_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub density: DensityGrid,
    pub iterations: usize,
    /// `||L_h u||_inf / ||u||_inf` of the returned density.
    pub residual: f64,
    pub max_peclet: f64,
    pub warnings: Vec<String>,
}

fn check_elliptic(p: &ProblemSpec, grid: &Grid) -> Result<()> {
    let n = grid.dim();
    let bad = (0..grid.len())
        .into_par_iter()
        .filter(|&i| !grid.is_outer(i))
        .map(|i| -> Result<Option<(Vec<f64>, f64)>> {
            let x = grid.point(i);
            let l = min_eigenvalue(&p.diffusion_at(&x)?, n);
            Ok((l < ELLIPTIC_TOL).then_some((x, l)))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .next();
    match bad {
        Some((x, l)) => Err(Error::Precondition(format!(
            "diffusion degenerates inside the box: smallest eigenvalue {l:e} at {x:?}"
        ))),
        None => Ok(()),
    }
}

fn truncation_warning(d: &DensityGrid) -> Option<String> {
    let m = d.truncation_mass();
    (m > TRUNCATION_MASS_TOL).then(|| {
        format!("mass {m:.3e} in the cells along the reflecting walls; the box may truncate the domain too tightly")
    })
}

/// Solves `L_h u = 0` by shifted inverse iteration from the all-ones vector.
pub fn solve_stationary(p: &ProblemSpec, grid: &Grid) -> Result<SolveReport> {
    p.validate_on_grid(grid)?;
    check_elliptic(p, grid)?;
    let gen = DiscreteGenerator::assemble(p, grid)?;
    let classes = gen.closed_classes();
    if classes != 1 {
        return Err(Error::NonUnique {
            components: classes,
        });
    }
    let sigma = SHIFT * gen.norm_inf().max(f64::MIN_POSITIVE);
    let lu = gen.shifted_transpose(sigma).factor()?;

    let n = gen.len();
    let mut x = vec![1.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut y = x.clone();
        lu.solve(&mut y);
        let sum: f64 = y.iter().sum();
        let scale = y.iter().fold(0.0_f64, |m, v| m.max(v.abs())) * sum.signum();
        if !(scale.is_finite() && scale != 0.0) {
            return Err(Error::Solver("inverse iteration produced a degenerate vector".into()));
        }
        for v in &mut y {
            *v /= scale;
        }
        let diff = x
            .iter()
            .zip(&y)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        x = y;
        if diff <= CONVERGENCE_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Solver(format!(
            "inverse iteration did not converge in {MAX_ITERATIONS} iterations"
        )));
    }

    // node masses -> densities with unit chain mass
    let dv = grid.cell_volume();
    let total: f64 = x.iter().sum();
    let u: Vec<f64> = x
        .iter()
        .zip(gen.weights())
        .map(|(m, w)| m / (total * w * dv))
        .collect();
    let density = DensityGrid::normalize(grid.clone(), u)?;
    let lu_res = gen.forward(density.values());
    let unorm = density.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let residual = lu_res.iter().fold(0.0_f64, |m, v| m.max(v.abs())) / unorm;

    let mut warnings = Vec::new();
    if residual > RESIDUAL_TOL {
        warnings.push(format!(
            "discrete residual {residual:.3e} exceeds {RESIDUAL_TOL:e} relative to max |u|"
        ));
    }
    warnings.extend(truncation_warning(&density));
    Ok(SolveReport {
        density,
        iterations,
        residual,
        max_peclet: gen.max_peclet(),
        warnings,
    })
}

/// Evaluates the closed-form density at the nodes and normalizes it.
pub fn analytic_density(p: &ProblemSpec, grid: &Grid) -> Result<DensityGrid> {
    let expr = p
        .exact_density()
        .ok_or_else(|| Error::Precondition("problem has no exact density".into()))?;
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| expr.evaluate(&grid.point(i)))
        .collect::<Result<_, _>>()?;
    DensityGrid::normalize(grid.clone(), values)
}

/// A smooth test function, taken to vanish outside an open support box.
#[derive(Debug, Clone)]
pub struct TestFunction {
    f: Differentiated,
    support: Vec<[f64; 2]>,
}

impl TestFunction {
    pub fn new(f: Expression, support: Vec<[f64; 2]>) -> Result<TestFunction> {
        if support.len() != f.dim() {
            return Err(Error::Precondition(
                "support box dimension differs from the test function".into(),
            ));
        }
        Ok(TestFunction {
            f: Differentiated::new(f),
            support,
        })
    }

    fn inside(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.support).all(|(v, [lo, hi])| v > lo && v < hi)
    }

    /// Value, gradient magnitude sum and Hessian magnitude sum at `x`.
    fn magnitudes(&self, x: &[f64]) -> Result<[f64; 3]> {
        if !self.inside(x) {
            return Ok([0.0; 3]);
        }
        let j = self.f.jet(x)?;
        Ok([
            j.value.abs(),
            j.grad.iter().map(|v| v.abs()).sum(),
            j.hess.iter().map(|v| v.abs()).sum(),
        ])
    }

    pub fn generator(&self, p: &ProblemSpec, x: &[f64]) -> Result<f64> {
        if !self.inside(x) {
            return Ok(0.0);
        }
        Ok(p.generator(&self.f, x)?)
    }
}

const SUPPORT_TOL: f64 = 1e-12;

/// Trapezoid quadrature of `(Lf) u` over the grid.
pub fn weak_residual(p: &ProblemSpec, d: &DensityGrid, f: &TestFunction) -> Result<f64> {
    let grid = d.grid();
    for i in 0..grid.len() {
        let idx = grid.multi_index(i);
        let near_wall = idx
            .iter()
            .zip(grid.axes())
            .any(|(&k, ax)| k < 2 || k + 2 >= ax.len());
        if near_wall {
            let m = f.magnitudes(&grid.point(i))?;
            if m.iter().any(|v| *v > SUPPORT_TOL) {
                return Err(Error::Precondition(format!(
                    "test function or its derivatives do not vanish near the wall at {:?}",
                    grid.point(i)
                )));
            }
        }
    }
    let terms: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let x = grid.point(i);
            Ok(f.generator(p, &x)? * d.value(i) * grid.trapezoid_weight(i))
        })
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum::<f64>() * grid.cell_volume())
}

//! Checks the flux identity `int_{U<rho} (L F) u dx = int_{U=rho} a(grad F, nu) u ds`
//! for boundary-constant test functions `F = phi(U)`.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::bounds::Cutoff;
use crate::error::{Error, Result};
use crate::format::fmt_num;
use crate::levelset::{LevelSet, SurfaceWeight, REGULAR_TOL};
use crate::problem::ProblemSpec;

/// Profile `phi` of the test function `F = phi(U)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Phi {
    Identity,
    Constant(f64),
    Cutoff(Cutoff),
    Sum(Box<Phi>, Box<Phi>),
}

impl Phi {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Phi::Identity => t,
            Phi::Constant(c) => *c,
            Phi::Cutoff(c) => c.value(t),
            Phi::Sum(a, b) => a.value(t) + b.value(t),
        }
    }

    pub fn d1(&self, t: f64) -> f64 {
        match self {
            Phi::Identity => 1.0,
            Phi::Constant(_) => 0.0,
            Phi::Cutoff(c) => c.d1(t),
            Phi::Sum(a, b) => a.d1(t) + b.d1(t),
        }
    }

    pub fn d2(&self, t: f64) -> f64 {
        match self {
            Phi::Identity | Phi::Constant(_) => 0.0,
            Phi::Cutoff(c) => c.d2(t),
            Phi::Sum(a, b) => a.d2(t) + b.d2(t),
        }
    }

    fn d2_limits(&self, t: f64) -> (f64, f64) {
        match self {
            Phi::Identity | Phi::Constant(_) => (0.0, 0.0),
            Phi::Cutoff(c) => c.d2_limits(t),
            Phi::Sum(a, b) => {
                let (x, y) = (a.d2_limits(t), b.d2_limits(t));
                (x.0 + y.0, x.1 + y.1)
            }
        }
    }

    fn knots(&self) -> Vec<f64> {
        match self {
            Phi::Identity | Phi::Constant(_) => Vec::new(),
            Phi::Cutoff(c) => vec![c.rho_m(), c.rho_0()],
            Phi::Sum(a, b) => {
                let mut k = a.knots();
                k.extend(b.knots());
                k
            }
        }
    }

    /// Fails when `phi''` jumps at a knot in `[0, rho]`.
    pub fn check_c2(&self, rho: f64) -> Result<()> {
        for k in self.knots().into_iter().filter(|&k| k >= 0.0 && k <= rho) {
            let (l, r) = self.d2_limits(k);
            if (l - r).abs() > 1e-6 * (1.0 + l.abs().max(r.abs())) {
                return Err(Error::Precondition(format!(
                    "phi is not C² at the knot {k}: phi'' jumps from {l} to {r}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub rho: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub rel_residual: f64,
    /// Set for levels a sweep could not check; the numbers are then NaN.
    pub skipped: Option<String>,
}

impl IdentityReport {
    fn skip(rho: f64, why: String) -> IdentityReport {
        IdentityReport {
            rho,
            lhs: f64::NAN,
            rhs: f64::NAN,
            residual: f64::NAN,
            rel_residual: f64::NAN,
            skipped: Some(why),
        }
    }
}

/// `phi'(U) LU + phi''(U) a(grad U, grad U)` at the grid nodes; NaN where it
/// cannot be evaluated.
fn nodal_integrand(ls: &LevelSet, p: &ProblemSpec, phi: &Phi) -> Vec<f64> {
    let grid = ls.density().grid();
    let u = ls.function().function();
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.point(i);
            let eval = || -> Result<f64> {
                let jet = u.jet(&x)?;
                let (d1, d2) = (phi.d1(jet.value), phi.d2(jet.value));
                let mut g = 0.0;
                if d1 != 0.0 {
                    g += d1 * p.generator_from_jet(&jet, &x)?;
                }
                if d2 != 0.0 {
                    g += d2 * p.quadratic(&jet.grad, &x)?;
                }
                Ok(g)
            };
            eval().unwrap_or(f64::NAN)
        })
        .collect()
}

fn verify_with(ls: &LevelSet, p: &ProblemSpec, phi: &Phi, g: &[f64], rho: f64) -> Result<IdentityReport> {
    phi.check_c2(rho)?;
    let contour = ls.contour(rho);
    contour.check_regular(REGULAR_TOL)?;
    let lhs = ls.integrate(rho, g)?;
    if !lhs.is_finite() {
        return Err(Error::Precondition(format!(
            "L(phi(U)) cannot be evaluated at some node inside the level {rho}"
        )));
    }
    let d1 = phi.d1(rho);
    let rhs = if d1 == 0.0 {
        0.0
    } else {
        d1 * ls.surface_integral(p, rho, SurfaceWeight::FluxForm)?
    };
    let residual = (lhs - rhs).abs();
    Ok(IdentityReport {
        rho,
        lhs,
        rhs,
        residual,
        rel_residual: residual / (lhs.abs() + rhs.abs() + 1e-300),
        skipped: None,
    })
}

pub fn verify_identity(ls: &LevelSet, p: &ProblemSpec, phi: &Phi, rho: f64) -> Result<IdentityReport> {
    let g = nodal_integrand(ls, p, phi);
    verify_with(ls, p, phi, &g, rho)
}

/// One report per level in order; levels that cannot be checked are kept as
/// skip records.
pub fn identity_sweep(ls: &LevelSet, p: &ProblemSpec, phi: &Phi, rho_grid: &[f64]) -> Vec<IdentityReport> {
    if rho_grid.is_empty() {
        return Vec::new();
    }
    let g = nodal_integrand(ls, p, phi);
    rho_grid
        .par_iter()
        .map(|&rho| verify_with(ls, p, phi, &g, rho).unwrap_or_else(|e| IdentityReport::skip(rho, e.to_string())))
        .collect()
}

pub fn reports_to_csv(reports: &[IdentityReport]) -> String {
    let mut s = String::from("rho,lhs,rhs,residual,rel_residual,skipped\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            fmt_num(r.rho),
            fmt_num(r.lhs),
            fmt_num(r.rhs),
            fmt_num(r.residual),
            fmt_num(r.rel_residual),
            r.skipped.is_some()
        );
    }
    s
}

pub fn write_csv(reports: &[IdentityReport], path: &Path) -> Result<()> {
    std::fs::write(path, reports_to_csv(reports))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use statrs::function::erf::erf;

    use super::*;
    use crate::bounds::build_cutoff;
    use crate::density::DensityGrid;
    use crate::expr::Expression;
    use crate::grid::BoundaryKind;
    use crate::problem::CompactFunction;
    use crate::solver::analytic_density;

    fn ou1(n: usize) -> (ProblemSpec, DensityGrid) {
        let p = ProblemSpec::from_sources(&[[-8.0, 8.0]], &[BoundaryKind::Reflecting], &[&["1"]], &["-x1"])
            .unwrap()
            .with_exact_density(Expression::parse("exp(-x1^2/2)", 1).unwrap())
            .unwrap();
        let g = p.grid(&[n]).unwrap();
        let d = analytic_density(&p, &g).unwrap();
        (p, d)
    }

    #[test]
    fn gaussian_hand_check() {
        let (p, d) = ou1(1601);
        let u = CompactFunction::parse("x1^2", 1, 0.5, None).unwrap();
        let ls = LevelSet::new(&d, &u).unwrap();
        let r = verify_identity(&ls, &p, &Phi::Identity, 1.0).unwrap();
        // E[(2 - 2X^2) 1{|X|<1}] with E[X^2 1{|X|<1}] = erf(1/sqrt 2) - 2 phi(1)
        let pdf1 = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let e = erf(1.0 / 2f64.sqrt());
        let want = 2.0 * e - 2.0 * (e - 2.0 * pdf1);
        assert!((want - 0.9678829).abs() < 1e-6);
        assert!((r.lhs - want).abs() < 1e-3 && (r.rhs - want).abs() < 1e-3, "{r:?}");
        assert!(r.rel_residual < 1e-3);
    }

    #[test]
    fn constant_phi_is_trivial() {
        let (p, d) = ou1(401);
        let u = CompactFunction::parse("x1^2", 1, 0.5, None).unwrap();
        let ls = LevelSet::new(&d, &u).unwrap();
        let r = verify_identity(&ls, &p, &Phi::Constant(3.0), 2.0).unwrap();
        assert_eq!((r.lhs, r.rhs, r.residual), (0.0, 0.0, 0.0));
    }

    #[test]
    fn uniform_density_is_exact() {
        let p = ProblemSpec::from_sources(&[[-2.0, 2.0]], &[BoundaryKind::Reflecting], &[&["1"]], &["0"]).unwrap();
        let g = p.grid(&[101]).unwrap();
        let d = DensityGrid::normalize(g, vec![1.0; 101]).unwrap();
        let u = CompactFunction::parse("x1^2", 1, 0.1, None).unwrap();
        let ls = LevelSet::new(&d, &u).unwrap();
        let reports = identity_sweep(&ls, &p, &Phi::Identity, &[0.3, 1.0, 2.7]);
        for r in &reports {
            let want = r.rho.sqrt();
            assert!((r.lhs - want).abs() < 1e-8 && (r.rhs - want).abs() < 1e-8, "{r:?}");
            assert!(r.residual < 1e-8);
        }
        assert!(identity_sweep(&ls, &p, &Phi::Identity, &[]).is_empty());
    }

    #[test]
    fn sums_split_and_cutoffs_pass() {
        let (p, d) = ou1(1601);
        let u = CompactFunction::parse("x1^2", 1, 0.5, None).unwrap();
        let ls = LevelSet::new(&d, &u).unwrap();
        let cut = Phi::Cutoff(build_cutoff(1.0, 3.0).unwrap());
        let sum = Phi::Sum(Box::new(Phi::Identity), Box::new(cut.clone()));
        for rho in [0.7, 2.0, 5.0] {
            let a = verify_identity(&ls, &p, &Phi::Identity, rho).unwrap();
            let b = verify_identity(&ls, &p, &cut, rho).unwrap();
            let s = verify_identity(&ls, &p, &sum, rho).unwrap();
            assert!((s.lhs - a.lhs - b.lhs).abs() < 1e-10);
            assert!((s.rhs - a.rhs - b.rhs).abs() < 1e-10);
            assert!(b.rhs >= -1e-10);
            if rho > 1.0 {
                assert!(b.rel_residual < 5e-3, "{b:?}");
            }
        }
    }

    #[test]
    fn irregular_levels_are_skipped() {
        let (p, d) = ou1(201);
        let u = CompactFunction::parse("(x1^2 - 1)^2", 1, 0.0, None).unwrap();
        let ls = LevelSet::new(&d, &u).unwrap();
        let r = identity_sweep(&ls, &p, &Phi::Identity, &[0.5, 1.0, 2.0]);
        assert!(r[0].skipped.is_none() && r[2].skipped.is_none());
        assert!(r[1].skipped.as_deref().unwrap().contains("irregular"));
        assert!(reports_to_csv(&r).lines().nth(2).unwrap().ends_with(",true"));
    }
}

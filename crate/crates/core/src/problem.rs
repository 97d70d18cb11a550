//! Problem data: box, diffusion matrix, drift, compact functions and the
//! adjoint generator `Lf = a^ij d_ij f + V^i d_i f`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::{EvalError, Expression, Func};
use crate::grid::{Axis, BoundaryKind, Grid};

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
/// Tolerance separating strict from weak Lyapunov kinds.
pub const CLASSIFY_TOL: f64 = 1e-8;

/// A scalar expression bundled with its symbolic gradient and Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct Differentiated {
    value: Expression,
    grad: Vec<Expression>,
    hess: Vec<Vec<Expression>>,
}

/// Value, gradient and row-major Hessian at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

impl Differentiated {
    pub fn new(value: Expression) -> Differentiated {
        let grad = value.gradient();
        let hess = grad.iter().map(Expression::gradient).collect();
        Differentiated { value, grad, hess }
    }

    pub fn expression(&self) -> &Expression {
        &self.value
    }

    pub fn gradient(&self) -> &[Expression] {
        &self.grad
    }

    pub fn hessian(&self) -> &[Vec<Expression>] {
        &self.hess
    }

    pub fn dim(&self) -> usize {
        self.value.dim()
    }

    pub fn value_at(&self, x: &[f64]) -> Result<f64, EvalError> {
        self.value.evaluate(x)
    }

    pub fn grad_at(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.grad.iter().map(|g| g.evaluate(x)).collect()
    }

    pub fn jet(&self, x: &[f64]) -> Result<Jet, EvalError> {
        let n = self.dim();
        let mut hess = Vec::with_capacity(n * n);
        for row in &self.hess {
            for e in row {
                hess.push(e.evaluate(x)?);
            }
        }
        Ok(Jet {
            value: self.value.evaluate(x)?,
            grad: self.grad_at(x)?,
            hess,
        })
    }
}

/// Stationary Fokker-Planck problem on a box.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    bounds: Vec<[f64; 2]>,
    boundary: Vec<BoundaryKind>,
    diffusion: Vec<Vec<Expression>>,
    drift: Vec<Expression>,
    exact_density: Option<Expression>,
    /// Integrability exponent of the coefficients. Recorded, never checked.
    sobolev_p: Option<f64>,
}

impl ProblemSpec {
    pub fn new(
        bounds: Vec<[f64; 2]>,
        boundary: Vec<BoundaryKind>,
        diffusion: Vec<Vec<Expression>>,
        drift: Vec<Expression>,
    ) -> Result<ProblemSpec> {
        let n = bounds.len();
        if n == 0 || n > 2 {
            return Err(Error::InvalidProblem(format!(
                "dimension must be 1 or 2, got {n}"
            )));
        }
        if boundary.len() != n {
            return Err(Error::InvalidProblem(format!(
                "{} boundary kinds for dimension {n}",
                boundary.len()
            )));
        }
        if diffusion.len() != n || diffusion.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidProblem(format!(
                "diffusion matrix must be {n}x{n}"
            )));
        }
        if drift.len() != n {
            return Err(Error::InvalidProblem(format!(
                "drift must have {n} components, got {}",
                drift.len()
            )));
        }
        for [lo, hi] in &bounds {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidProblem(format!(
                    "degenerate box interval [{lo}, {hi}]"
                )));
            }
        }
        let all = diffusion.iter().flatten().chain(&drift);
        for e in all {
            if e.dim() != n {
                return Err(Error::InvalidProblem(format!(
                    "coefficient '{e}' declared over dimension {}, problem has {n}",
                    e.dim()
                )));
            }
        }
        Ok(ProblemSpec {
            bounds,
            boundary,
            diffusion,
            drift,
            exact_density: None,
            sobolev_p: None,
        })
    }

    /// Parses every coefficient from source text.
    pub fn from_sources(
        bounds: &[[f64; 2]],
        boundary: &[BoundaryKind],
        diffusion: &[&[&str]],
        drift: &[&str],
    ) -> Result<ProblemSpec> {
        let n = bounds.len();
        let a = diffusion
            .iter()
            .map(|row| {
                row.iter()
                    .map(|s| Expression::parse(s, n))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let v = drift
            .iter()
            .map(|s| Expression::parse(s, n))
            .collect::<Result<Vec<_>, _>>()?;
        ProblemSpec::new(bounds.to_vec(), boundary.to_vec(), a, v)
    }

    pub fn with_exact_density(mut self, density: Expression) -> Result<ProblemSpec> {
        if density.dim() != self.dim() {
            return Err(Error::InvalidProblem(
                "exact density dimension differs from the problem".into(),
            ));
        }
        self.exact_density = Some(density);
        Ok(self)
    }

    pub fn with_sobolev_p(mut self, p: f64) -> ProblemSpec {
        self.sobolev_p = Some(p);
        self
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[[f64; 2]] {
        &self.bounds
    }

    pub fn boundary(&self) -> &[BoundaryKind] {
        &self.boundary
    }

    pub fn diffusion(&self) -> &[Vec<Expression>] {
        &self.diffusion
    }

    pub fn drift(&self) -> &[Expression] {
        &self.drift
    }

    pub fn exact_density(&self) -> Option<&Expression> {
        self.exact_density.as_ref()
    }

    pub fn sobolev_p(&self) -> Option<f64> {
        self.sobolev_p
    }

    /// Grid over this problem's box with `counts[k]` nodes on axis `k`.
    pub fn grid(&self, counts: &[usize]) -> Result<Grid> {
        if counts.len() != self.dim() {
            return Err(Error::InvalidProblem(format!(
                "{} node counts for dimension {}",
                counts.len(),
                self.dim()
            )));
        }
        let axes = self
            .bounds
            .iter()
            .zip(&self.boundary)
            .zip(counts)
            .map(|((&[lo, hi], &kind), &n)| Axis::new(lo, hi, n, kind))
            .collect::<Result<Vec<_>>>()?;
        Grid::new(axes)
    }

    /// Row-major diffusion matrix at `x`.
    pub fn diffusion_at(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.diffusion
            .iter()
            .flatten()
            .map(|e| e.evaluate(x))
            .collect()
    }

    pub fn drift_at(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.drift.iter().map(|e| e.evaluate(x)).collect()
    }

    /// `a^ij d_ij f + V^i d_i f` from a precomputed jet.
    pub fn generator_from_jet(&self, jet: &Jet, x: &[f64]) -> Result<f64, EvalError> {
        let n = self.dim();
        let a = self.diffusion_at(x)?;
        let v = self.drift_at(x)?;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += a[i * n + j] * jet.hess[i * n + j];
            }
            s += v[i] * jet.grad[i];
        }
        Ok(s)
    }

    pub fn generator(&self, f: &Differentiated, x: &[f64]) -> Result<f64, EvalError> {
        self.generator_from_jet(&f.jet(x)?, x)
    }

    /// `a^ij d_i f d_j f`.
    pub fn quadratic(&self, grad: &[f64], x: &[f64]) -> Result<f64, EvalError> {
        let n = self.dim();
        let a = self.diffusion_at(x)?;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += a[i * n + j] * grad[i] * grad[j];
            }
        }
        Ok(s)
    }

    /// Checks symmetry and positive semidefiniteness of `A` at every node.
    pub fn validate_on_grid(&self, grid: &Grid) -> Result<()> {
        let n = self.dim();
        let points = grid.points();
        let failure = points.par_iter().find_map_first(|x| {
            let a = match self.diffusion_at(x) {
                Ok(a) => a,
                Err(e) => return Some(Error::from(e)),
            };
            if n == 2 && (a[1] - a[2]).abs() > SYMMETRY_TOL {
                return Some(Error::InvalidProblem(format!(
                    "diffusion matrix not symmetric at {x:?}: a12 = {}, a21 = {}",
                    a[1], a[2]
                )));
            }
            let lmin = min_eigenvalue(&a, n);
            if lmin < -PSD_TOL {
                return Some(Error::InvalidProblem(format!(
                    "diffusion matrix not positive semidefinite at {x:?}: eigenvalue {lmin:e}"
                )));
            }
            None
        });
        failure.map_or(Ok(()), Err)
    }
}

/// Smallest eigenvalue of a symmetric 1x1 or 2x2 matrix (off-diagonals
/// averaged).
pub fn min_eigenvalue(a: &[f64], n: usize) -> f64 {
    if n == 1 {
        return a[0];
    }
    let (p, q) = (a[0], a[3]);
    let r = 0.5 * (a[1] + a[2]);
    let mean = 0.5 * (p + q);
    let half = 0.5 * (p - q);
    mean - (half * half + r * r).sqrt()
}

/// A C² compact function `U` with its essential bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactFunction {
    u: Differentiated,
    rho_m: f64,
    /// `None` is `+inf`.
    rho_max: Option<f64>,
}

impl CompactFunction {
    pub fn new(u: Expression, rho_m: f64, rho_max: Option<f64>) -> Result<CompactFunction> {
        for f in [Func::Abs, Func::Sign] {
            if u.uses_func(f) {
                return Err(Error::NotC2(f.name()));
            }
        }
        if !rho_m.is_finite() || rho_m < 0.0 {
            return Err(Error::InvalidProblem(format!(
                "rho_m must be finite and nonnegative, got {rho_m}"
            )));
        }
        if let Some(m) = rho_max {
            if !(m > rho_m) {
                return Err(Error::InvalidProblem(format!(
                    "rho_m = {rho_m} must be below rho_M = {m}"
                )));
            }
        }
        Ok(CompactFunction {
            u: Differentiated::new(u),
            rho_m,
            rho_max,
        })
    }

    pub fn parse(source: &str, dim: usize, rho_m: f64, rho_max: Option<f64>) -> Result<Self> {
        CompactFunction::new(Expression::parse(source, dim)?, rho_m, rho_max)
    }

    pub fn function(&self) -> &Differentiated {
        &self.u
    }

    pub fn expression(&self) -> &Expression {
        self.u.expression()
    }

    pub fn dim(&self) -> usize {
        self.u.dim()
    }

    pub fn rho_m(&self) -> f64 {
        self.rho_m
    }

    pub fn rho_max(&self) -> Option<f64> {
        self.rho_max
    }

    pub fn with_rho_m(&self, rho_m: f64) -> Result<CompactFunction> {
        CompactFunction::new(self.expression().clone(), rho_m, self.rho_max)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, EvalError> {
        self.u.value_at(x)
    }

    /// `U` at a point that may lie on a wall of the box; a failed or
    /// non-finite evaluation there means `U` blows up and is read as `+inf`.
    pub fn value_or_inf(&self, x: &[f64]) -> f64 {
        self.u.value_at(x).unwrap_or(f64::INFINITY)
    }

    /// Fills in `rho_M` when it was not declared: `+inf` if any axis is a
    /// reflecting truncation or `U` blows up on the walls, otherwise the
    /// sampled supremum over nodes and wall points.
    pub fn resolve_rho_max(&mut self, problem: &ProblemSpec, grid: &Grid) -> Result<()> {
        if self.rho_max.is_some() {
            return Ok(());
        }
        if problem.boundary().contains(&BoundaryKind::Reflecting) {
            return Ok(());
        }
        let mut sup: f64 = 0.0;
        for x in closure_samples(grid) {
            sup = sup.max(self.value_or_inf(&x));
        }
        if sup.is_finite() {
            if !(sup > self.rho_m) {
                return Err(Error::InvalidProblem(format!(
                    "sampled sup of U ({sup}) does not exceed rho_m = {}",
                    self.rho_m
                )));
            }
            self.rho_max = Some(sup);
        }
        Ok(())
    }

    /// Checks `0 <= U < rho_M` at interior nodes and, for `rho_M = +inf`
    /// on a reflecting truncation, that `U` peaks on the outer layer.
    pub fn validate_on_grid(&self, problem: &ProblemSpec, grid: &Grid) -> Result<()> {
        let values: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|i| self.value(&grid.point(i)))
            .collect::<Result<_, _>>()?;
        for (i, &v) in values.iter().enumerate() {
            if grid.is_outer(i) {
                continue;
            }
            if v < 0.0 {
                return Err(Error::InvalidProblem(format!(
                    "U is negative ({v}) at {:?}",
                    grid.point(i)
                )));
            }
            if let Some(m) = self.rho_max {
                if v >= m {
                    return Err(Error::InvalidProblem(format!(
                        "U = {v} reaches rho_M = {m} at interior node {:?}",
                        grid.point(i)
                    )));
                }
            }
        }
        let truncated = problem.boundary().contains(&BoundaryKind::Reflecting);
        if self.rho_max.is_none() && truncated {
            let max_all = values.iter().copied().fold(f64::MIN, f64::max);
            let max_outer = values
                .iter()
                .enumerate()
                .filter(|(i, _)| grid.is_outer(*i))
                .map(|(_, &v)| v)
                .fold(f64::MIN, f64::max);
            if max_outer < 0.99 * max_all {
                return Err(Error::InvalidProblem(format!(
                    "U does not grow toward the box boundary (outer max {max_outer}, overall max {max_all}); \
                     it cannot be compact on the untruncated domain"
                )));
            }
        }
        Ok(())
    }
}

/// Nodes plus the wall points of each grid line.
fn closure_samples(grid: &Grid) -> Vec<Vec<f64>> {
    let axis_points = |ax: &Axis| {
        let mut p = vec![ax.lo()];
        p.extend(ax.nodes());
        p.push(ax.hi());
        p
    };
    match grid.dim() {
        1 => axis_points(grid.axis(0)).into_iter().map(|x| vec![x]).collect(),
        _ => {
            let (p0, p1) = (axis_points(grid.axis(0)), axis_points(grid.axis(1)));
            p0.iter()
                .flat_map(|&a| p1.iter().map(move |&b| vec![a, b]))
                .collect()
        }
    }
}

pub fn generator_apply(p: &ProblemSpec, u: &CompactFunction, x: &[f64]) -> Result<f64, EvalError> {
    p.generator(u.function(), x)
}

pub fn quadratic_form(p: &ProblemSpec, u: &CompactFunction, x: &[f64]) -> Result<f64, EvalError> {
    p.quadratic(&u.function().grad_at(x)?, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LyapunovKind {
    Lyapunov,
    WeakLyapunov,
    AntiLyapunov,
    WeakAntiLyapunov,
    None,
}

impl LyapunovKind {
    pub fn name(self) -> &'static str {
        match self {
            LyapunovKind::Lyapunov => "Lyapunov",
            LyapunovKind::WeakLyapunov => "WeakLyapunov",
            LyapunovKind::AntiLyapunov => "AntiLyapunov",
            LyapunovKind::WeakAntiLyapunov => "WeakAntiLyapunov",
            LyapunovKind::None => "None",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovClassification {
    pub kind: LyapunovKind,
    pub gamma: f64,
    /// Sample where the deciding extremum of `LU` was attained.
    pub witness: Vec<f64>,
    /// Supremum of `LU` over the samples.
    pub sup: f64,
    /// Infimum of `LU` over the samples.
    pub inf: f64,
    pub samples: usize,
    /// Largest change of `LU` between neighbouring samples along a grid line.
    pub modulus: f64,
}

fn sample_axis(lo: f64, hi: f64, m: usize, kind: BoundaryKind) -> Vec<f64> {
    match kind {
        BoundaryKind::Reflecting => (0..m)
            .map(|k| {
                if k == m - 1 {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (m - 1) as f64
                }
            })
            .collect(),
        BoundaryKind::Open => (0..m)
            .map(|k| lo + (hi - lo) * (k as f64 + 0.5) / m as f64)
            .collect(),
    }
}

/// Root of `U - level` on the segment `a..b`, where the sign changes.
/// Safeguarded Newton along the segment direction.
pub(crate) fn polish_root(
    u: &CompactFunction,
    level: f64,
    a: &[f64],
    b: &[f64],
    fa: f64,
    fb: f64,
) -> Vec<f64> {
    let dir: Vec<f64> = a.iter().zip(b).map(|(p, q)| q - p).collect();
    let at = |t: f64| -> Vec<f64> { a.iter().zip(&dir).map(|(p, d)| p + t * d).collect() };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut glo = fa - level;
    let ghi = fb - level;
    let mut t = if glo.is_finite() && ghi.is_finite() && glo != ghi {
        (glo / (glo - ghi)).clamp(0.0, 1.0)
    } else {
        0.5
    };
    let tol = 1e-10 * (1.0 + level.abs());
    for _ in 0..100 {
        let x = at(t);
        let g = u.value(&x).map(|v| v - level).unwrap_or(f64::INFINITY);
        if g.abs() <= tol * 1e-2 || hi - lo < 1e-15 {
            return x;
        }
        if (g < 0.0) == (glo < 0.0) {
            lo = t;
            glo = g;
        } else {
            hi = t;
        }
        let slope = u
            .function()
            .grad_at(&x)
            .map(|gr| gr.iter().zip(&dir).map(|(p, q)| p * q).sum::<f64>())
            .unwrap_or(0.0);
        let newton = if slope != 0.0 && g.is_finite() {
            t - g / slope
        } else {
            f64::NAN
        };
        t = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    at(t)
}

/// Samples `LU` on `U > rho_m` and on the polished level set `U = rho_m`.
pub fn classify(p: &ProblemSpec, u: &CompactFunction, density: usize) -> Result<LyapunovClassification> {
    if density < 2 {
        return Err(Error::Precondition("sample density must be at least 2".into()));
    }
    let n = p.dim();
    let lines: Vec<Vec<f64>> = (0..n)
        .map(|k| sample_axis(p.bounds()[k][0], p.bounds()[k][1], density, p.boundary()[k]))
        .collect();
    let points: Vec<Vec<f64>> = match n {
        1 => lines[0].iter().map(|&x| vec![x]).collect(),
        _ => lines[0]
            .iter()
            .flat_map(|&a| lines[1].iter().map(move |&b| vec![a, b]))
            .collect(),
    };
    let values: Vec<f64> = points
        .par_iter()
        .map(|x| u.value(x))
        .collect::<Result<_, _>>()?;
    let rho_m = u.rho_m();

    // crossings of rho_m along sample lines
    let mut crossings = Vec::new();
    let stride = if n == 1 { points.len() } else { density };
    let mut neighbours = Vec::new();
    for i in 0..points.len() {
        if (i % stride) + 1 < stride {
            neighbours.push((i, i + 1));
        }
        if n == 2 && i + stride < points.len() {
            neighbours.push((i, i + stride));
        }
    }
    for &(i, j) in &neighbours {
        let (a, b) = (values[i] - rho_m, values[j] - rho_m);
        if (a > 0.0) != (b > 0.0) {
            crossings.push(polish_root(u, rho_m, &points[i], &points[j], values[i], values[j]));
        }
    }

    let mut samples: Vec<Vec<f64>> = points
        .iter()
        .zip(&values)
        .filter(|(_, &v)| v > rho_m)
        .map(|(x, _)| x.clone())
        .collect();
    let interior_count = samples.len();
    samples.extend(crossings);
    if samples.is_empty() {
        return Err(Error::Precondition(format!(
            "no samples with U > rho_m = {rho_m}; rho_m is too large for the box"
        )));
    }
    let lu: Vec<f64> = samples
        .par_iter()
        .map(|x| generator_apply(p, u, x))
        .collect::<Result<_, _>>()?;

    let (mut imax, mut imin) = (0, 0);
    for k in 1..lu.len() {
        if lu[k] > lu[imax] {
            imax = k;
        }
        if lu[k] < lu[imin] {
            imin = k;
        }
    }
    let (sup, inf) = (lu[imax], lu[imin]);

    // modulus of continuity over grid-line neighbours inside the sample set
    let mut index_of = vec![usize::MAX; points.len()];
    let mut k = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > rho_m {
            index_of[i] = k;
            k += 1;
        }
    }
    debug_assert_eq!(k, interior_count);
    let mut modulus: f64 = 0.0;
    for &(i, j) in &neighbours {
        let (a, b) = (index_of[i], index_of[j]);
        if a != usize::MAX && b != usize::MAX {
            modulus = modulus.max((lu[a] - lu[b]).abs());
        }
    }

    let (kind, gamma, witness) = if sup < -CLASSIFY_TOL {
        (LyapunovKind::Lyapunov, -sup, imax)
    } else if inf > CLASSIFY_TOL {
        (LyapunovKind::AntiLyapunov, inf, imin)
    } else if sup.abs() <= CLASSIFY_TOL {
        (LyapunovKind::WeakLyapunov, 0.0, imax)
    } else if inf.abs() <= CLASSIFY_TOL {
        (LyapunovKind::WeakAntiLyapunov, 0.0, imin)
    } else {
        (LyapunovKind::None, 0.0, imax)
    };
    Ok(LyapunovClassification {
        kind,
        gamma,
        witness: samples[witness].clone(),
        sup,
        inf,
        samples: samples.len(),
        modulus,
    })
}

/// Classification at two successive sample densities.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementReport {
    pub coarse: LyapunovClassification,
    pub fine: LyapunovClassification,
    pub kind_stable: bool,
    pub gamma_change: f64,
}

pub fn classify_with_refinement(
    p: &ProblemSpec,
    u: &CompactFunction,
    density: usize,
) -> Result<RefinementReport> {
    let coarse = classify(p, u, density)?;
    let fine = classify(p, u, 2 * density - 1)?;
    Ok(RefinementReport {
        kind_stable: coarse.kind == fine.kind,
        gamma_change: (coarse.gamma - fine.gamma).abs(),
        coarse,
        fine,
    })
}

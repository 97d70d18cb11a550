//! Measure profiles over a grid of levels.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LevelSet, REGULAR_TOL};
use crate::density::DensityGrid;
use crate::error::{Error, Result};
use crate::format::fmt_num;
use crate::problem::{CompactFunction, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

/// `count` levels from `lo` to `hi` inclusive.
pub fn rho_grid(lo: f64, hi: f64, count: usize, spacing: Spacing) -> Result<Vec<f64>> {
    if count < 2 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Precondition(format!(
            "level grid needs count >= 2 and lo < hi, got {count} levels on [{lo}, {hi}]"
        )));
    }
    let last = (count - 1) as f64;
    Ok(match spacing {
        Spacing::Linear => (0..count).map(|k| lo + (hi - lo) * k as f64 / last).collect(),
        Spacing::Log => {
            if !(lo > 0.0) {
                return Err(Error::Precondition(format!("log spacing needs lo > 0, got {lo}")));
            }
            let (a, b) = (lo.ln(), hi.ln());
            let mut v: Vec<f64> = (0..count).map(|k| (a + (b - a) * k as f64 / last).exp()).collect();
            v[0] = lo;
            v[count - 1] = hi;
            v
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileLevel {
    pub rho: f64,
    pub y: f64,
    pub yprime: f64,
    /// Minimum of `a(grad U, grad U)` on the level.
    pub h: f64,
    /// Maximum of `a(grad U, grad U)` on the level.
    pub big_h: f64,
    /// `h(rho) int_{rho_m}^rho 1/H`.
    pub htilde_a: f64,
    /// `H(rho) int_{rho_m}^rho 1/h`.
    pub htilde_b: f64,
    pub regular: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelProfile {
    pub rho_m: f64,
    pub levels: Vec<ProfileLevel>,
    /// The first level is `rho_m`, added in front of the requested grid.
    pub anchored: bool,
    pub warnings: Vec<String>,
}

impl LevelProfile {
    /// Level whose `rho` matches to relative 1e-12.
    pub fn level(&self, rho: f64) -> Option<&ProfileLevel> {
        self.levels
            .iter()
            .find(|l| (l.rho - rho).abs() <= 1e-12 * (1.0 + rho.abs()))
    }

    /// Levels requested by the caller, without the anchor.
    pub fn requested(&self) -> &[ProfileLevel] {
        &self.levels[usize::from(self.anchored)..]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("rho,y,yprime,h,H,Htilde_A,Htilde_B,regular\n");
        for l in &self.levels {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                fmt_num(l.rho),
                fmt_num(l.y),
                fmt_num(l.yprime),
                fmt_num(l.h),
                fmt_num(l.big_h),
                fmt_num(l.htilde_a),
                fmt_num(l.htilde_b),
                l.regular
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

struct Raw {
    y: f64,
    yprime: f64,
    h: f64,
    big_h: f64,
    regular: bool,
    warning: Option<String>,
}

fn measure_level(ls: &LevelSet, p: &ProblemSpec, rho: f64, regular_tol: f64) -> Result<Raw> {
    let y = ls.measure(rho);
    let c = ls.contour(rho);
    if c.is_empty() {
        let what = if y >= 0.5 { "covers" } else { "misses" };
        return Ok(Raw {
            y,
            yprime: 0.0,
            h: f64::NAN,
            big_h: f64::NAN,
            regular: false,
            warning: Some(format!(
                "level {rho}: no contour inside the box, the sublevel set {what} the box (truncation)"
            )),
        });
    }
    if !c.is_regular(regular_tol) {
        let e = c.weakest().expect("non-empty contour");
        return Ok(Raw {
            y,
            yprime: f64::NAN,
            h: f64::NAN,
            big_h: f64::NAN,
            regular: false,
            warning: Some(format!(
                "level {rho}: irregular, |grad U| = {:e} at {:?}",
                e.grad_norm(),
                e.point
            )),
        });
    }
    let (mut yprime, mut h, mut big_h) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
    for e in &c.elements {
        yprime += e.length * e.density / e.grad_norm();
        let q = p.quadratic(&e.grad, &e.point)?;
        h = h.min(q);
        big_h = big_h.max(q);
    }
    Ok(Raw {
        y,
        yprime,
        h,
        big_h,
        regular: true,
        warning: None,
    })
}

/// Measures `y`, `y'`, `h`, `H` and the cumulative `H~` on each level. Levels
/// must increase and lie in `[rho_m, rho_M]`; `rho_m` is prepended when the
/// grid starts above it, since both `H~` integrate from there.
pub fn build_profile(
    d: &DensityGrid,
    p: &ProblemSpec,
    u: &CompactFunction,
    rho_grid: &[f64],
) -> Result<LevelProfile> {
    build_profile_with(d, p, u, rho_grid, REGULAR_TOL)
}

/// [`build_profile`] with a custom gradient threshold for regular levels.
pub fn build_profile_with(
    d: &DensityGrid,
    p: &ProblemSpec,
    u: &CompactFunction,
    rho_grid: &[f64],
    regular_tol: f64,
) -> Result<LevelProfile> {
    let rho_m = u.rho_m();
    if rho_grid.is_empty() {
        return Err(Error::Precondition("empty level grid".into()));
    }
    if rho_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Precondition("level grid must be strictly increasing".into()));
    }
    let tol = 1e-12 * (1.0 + rho_m.abs());
    if rho_grid[0] < rho_m - tol {
        return Err(Error::Precondition(format!(
            "level {} lies below rho_m = {rho_m}",
            rho_grid[0]
        )));
    }
    if let Some(m) = u.rho_max() {
        let last = rho_grid[rho_grid.len() - 1];
        if last > m * (1.0 + 1e-12) {
            return Err(Error::Precondition(format!("level {last} lies above rho_M = {m}")));
        }
    }
    let anchored = rho_grid[0] > rho_m + tol;
    let mut rhos = Vec::with_capacity(rho_grid.len() + 1);
    if anchored {
        rhos.push(rho_m);
    }
    rhos.extend_from_slice(rho_grid);

    let ls = LevelSet::new(d, u)?;
    let raw: Vec<Raw> = rhos
        .par_iter()
        .map(|&rho| measure_level(&ls, p, rho, regular_tol))
        .collect::<Result<_>>()?;

    let mut levels = Vec::with_capacity(rhos.len());
    let mut warnings = Vec::new();
    // running trapezoid integrals of 1/H and 1/h over regular levels
    let (mut int_inv_big_h, mut int_inv_h) = (0.0, 0.0);
    let mut last: Option<(f64, f64, f64)> = None;
    for (&rho, r) in rhos.iter().zip(raw) {
        if let Some(w) = r.warning {
            warnings.push(w);
        }
        let (ta, tb) = if r.regular {
            let (ih, ibh) = (1.0 / r.h, 1.0 / r.big_h);
            if let Some((r0, ih0, ibh0)) = last {
                int_inv_big_h += 0.5 * (rho - r0) * (ibh0 + ibh);
                int_inv_h += 0.5 * (rho - r0) * (ih0 + ih);
            }
            last = Some((rho, ih, ibh));
            (
                if int_inv_big_h == 0.0 { 0.0 } else { r.h * int_inv_big_h },
                if int_inv_h == 0.0 { 0.0 } else { r.big_h * int_inv_h },
            )
        } else {
            (f64::NAN, f64::NAN)
        };
        levels.push(ProfileLevel {
            rho,
            y: r.y,
            yprime: r.yprime,
            h: r.h,
            big_h: r.big_h,
            htilde_a: ta,
            htilde_b: tb,
            regular: r.regular,
        });
    }
    if let Some(first) = levels.iter().find(|l| l.regular) {
        if first.rho > rho_m + tol {
            warnings.push(format!(
                "the cumulative integrals start at the first regular level {} instead of rho_m = {rho_m}",
                first.rho
            ));
        }
    }
    Ok(LevelProfile {
        rho_m,
        levels,
        anchored,
        warnings,
    })
}

/// Largest relative gap between `y'` and the centred difference of `y` over
/// interior requested levels whose neighbours are regular too.
pub fn derivative_check(profile: &LevelProfile) -> Option<f64> {
    let l = profile.requested();
    let mut worst: Option<f64> = None;
    for k in 1..l.len().saturating_sub(1) {
        let (a, b, c) = (&l[k - 1], &l[k], &l[k + 1]);
        if !(a.regular && b.regular && c.regular) || !(b.yprime > 0.0) {
            continue;
        }
        let fd = (c.y - a.y) / (c.rho - a.rho);
        let rel = (b.yprime - fd).abs() / b.yprime;
        worst = Some(worst.map_or(rel, |w: f64| w.max(rel)));
    }
    worst
}

//! Upper bounds on the mass outside a sublevel set and lower bounds on the
//! mass between two levels, evaluated from a measure profile and compared
//! with measured values.

mod cutoff;

pub use cutoff::{build_cutoff, Cutoff};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::format::fmt_num;
use crate::levelset::{LevelProfile, LevelSet, ProfileLevel};
use crate::problem::{LyapunovClassification, LyapunovKind};

/// Default multiplicative slack for discretization error.
pub const DEFAULT_EPS_DISC: f64 = 1e-2;

/// Fraction of profile levels in the integration range that must be regular.
const MIN_REGULAR_FRACTION: f64 = 0.9;

/// Log-log slope of `1 / H~_A` over the last half-decade of levels above
/// which the tail integral is judged divergent.
const DIVERGENCE_SLOPE: f64 = -1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Theorem {
    Aa,
    Ab,
    Ac,
    Ba,
    Bb,
}

impl Theorem {
    pub fn name(self) -> &'static str {
        match self {
            Theorem::Aa => "Aa",
            Theorem::Ab => "Ab",
            Theorem::Ac => "Ac",
            Theorem::Ba => "Ba",
            Theorem::Bb => "Bb",
        }
    }

    /// Classifications under which the bound applies.
    pub fn admissible(self) -> &'static [LyapunovKind] {
        match self {
            Theorem::Aa | Theorem::Ab => &[LyapunovKind::Lyapunov],
            Theorem::Ac => &[LyapunovKind::Lyapunov, LyapunovKind::WeakLyapunov],
            Theorem::Ba => &[LyapunovKind::AntiLyapunov],
            Theorem::Bb => &[LyapunovKind::AntiLyapunov, LyapunovKind::WeakAntiLyapunov],
        }
    }

    /// Upper bounds (`measured <= bound`) versus lower bounds.
    pub fn is_upper(self) -> bool {
        matches!(self, Theorem::Aa | Theorem::Ab | Theorem::Ac)
    }
}

pub fn check_kind(theorem: Theorem, class: &LyapunovClassification) -> Result<()> {
    let ok = theorem.admissible();
    if ok.contains(&class.kind) {
        return Ok(());
    }
    Err(Error::ClassificationMismatch {
        check: theorem.name().into(),
        required: ok.iter().map(|k| k.name()).collect::<Vec<_>>().join(" or "),
        found: class.kind.name().into(),
    })
}

fn ser_num<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(&fmt_num(*v))
    }
}

fn ser_opt<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => ser_num(v, s),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub theorem: Theorem,
    #[serde(serialize_with = "ser_num")]
    pub rho_m: f64,
    #[serde(serialize_with = "ser_opt")]
    pub rho_0: Option<f64>,
    #[serde(serialize_with = "ser_opt")]
    pub rho: Option<f64>,
    #[serde(serialize_with = "ser_opt")]
    pub gamma: Option<f64>,
    #[serde(serialize_with = "ser_num")]
    pub measured: f64,
    #[serde(serialize_with = "ser_num")]
    pub bound: f64,
    pub satisfied: bool,
    #[serde(serialize_with = "ser_num")]
    pub slack: f64,
    pub notes: Vec<String>,
}

impl BoundReport {
    fn new(theorem: Theorem, rho_m: f64, measured: f64, bound: f64, slack: f64) -> BoundReport {
        let satisfied = if theorem.is_upper() {
            measured <= bound * (1.0 + slack)
        } else {
            measured >= bound / (1.0 + slack)
        };
        BoundReport {
            theorem,
            rho_m,
            rho_0: None,
            rho: None,
            gamma: None,
            measured,
            bound,
            satisfied,
            slack,
            notes: Vec::new(),
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn reports_to_csv(reports: &[BoundReport]) -> String {
    let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
    let mut s = String::from("theorem,rho_m,rho_0,rho,gamma,measured,bound,satisfied,slack,notes\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.theorem.name(),
            fmt_num(r.rho_m),
            opt(r.rho_0),
            opt(r.rho),
            opt(r.gamma),
            fmt_num(r.measured),
            fmt_num(r.bound),
            r.satisfied,
            fmt_num(r.slack),
            csv_field(&r.notes.join("; "))
        );
    }
    s
}

pub fn reports_to_json(reports: &[BoundReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}

/// Measured values straight from the density, bound ingredients from the
/// profile.
pub struct BoundInputs<'a> {
    pub levels: &'a LevelSet<'a>,
    pub profile: &'a LevelProfile,
    pub eps_disc: f64,
}

impl BoundInputs<'_> {
    fn rho_m(&self) -> f64 {
        self.profile.rho_m
    }

    fn y(&self, rho: f64) -> f64 {
        self.levels.measure(rho)
    }

    fn top(&self) -> f64 {
        self.profile.levels.last().map_or(f64::NAN, |l| l.rho)
    }

    fn check_range(&self, lo: f64, hi: f64) -> Result<()> {
        let first = self.profile.levels.first().map_or(f64::NAN, |l| l.rho);
        let tol = 1e-12 * (1.0 + hi.abs());
        if !(lo >= first - tol && hi <= self.top() + tol) {
            return Err(Error::Precondition(format!(
                "profile covers [{first}, {}] but [{lo}, {hi}] is needed",
                self.top()
            )));
        }
        Ok(())
    }

    fn check_density_of_regular(&self, lo: f64, hi: f64) -> Result<()> {
        let inside: Vec<&ProfileLevel> = self
            .profile
            .levels
            .iter()
            .filter(|l| l.rho >= lo && l.rho <= hi)
            .collect();
        let regular = inside.iter().filter(|l| l.regular).count();
        if !inside.is_empty() && (regular as f64) < MIN_REGULAR_FRACTION * inside.len() as f64 {
            return Err(Error::Precondition(format!(
                "only {regular} of {} profile levels in [{lo}, {hi}] are regular",
                inside.len()
            )));
        }
        Ok(())
    }
}

/// Trapezoid integral over `[a, b]` of `f` sampled at the regular profile
/// levels, linearly interpolated at the ends.
fn integrate_profile(profile: &LevelProfile, f: impl Fn(&ProfileLevel) -> f64, a: f64, b: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let pts: Vec<(f64, f64)> = profile
        .levels
        .iter()
        .filter(|l| l.regular)
        .map(|l| (l.rho, f(l)))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Precondition("fewer than two regular profile levels".into()));
    }
    let (first, last) = (pts[0].0, pts[pts.len() - 1].0);
    let snap = |x: f64| {
        let tol = 1e-12 * (1.0 + x.abs());
        if (x - first).abs() <= tol {
            first
        } else if (x - last).abs() <= tol {
            last
        } else {
            x
        }
    };
    let (a, b) = (snap(a), snap(b));
    let at = |x: f64| -> Option<f64> {
        let k = pts.windows(2).position(|w| w[0].0 <= x && x <= w[1].0)?;
        let ((x0, f0), (x1, f1)) = (pts[k], pts[k + 1]);
        Some(if x == x0 {
            f0
        } else if x == x1 {
            f1
        } else {
            f0 + (f1 - f0) * (x - x0) / (x1 - x0)
        })
    };
    let (fa, fb) = match (at(a), at(b)) {
        (Some(fa), Some(fb)) => (fa, fb),
        _ => {
            return Err(Error::Precondition(format!(
                "regular profile levels do not cover [{a}, {b}]"
            )))
        }
    };
    let mut nodes = vec![(a, fa)];
    nodes.extend(pts.iter().copied().filter(|&(x, _)| x > a && x < b));
    nodes.push((b, fb));
    Ok(nodes
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum())
}

fn require_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Precondition(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

fn inverse(v: f64, what: &str, rho: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::Precondition(format!(
            "{what} = {v} at regular level {rho}; its reciprocal is not integrable"
        )));
    }
    Ok(1.0 / v)
}

fn checked_inverse(profile: &LevelProfile, field: fn(&ProfileLevel) -> f64, what: &str, lo: f64, hi: f64) -> Result<()> {
    for l in profile.levels.iter().filter(|l| l.regular && l.rho >= lo && l.rho <= hi) {
        inverse(field(l), what, l.rho)?;
    }
    Ok(())
}

/// Mass outside `Omega_{rho_0}` against `C max H (y(rho_0) - y(rho_m)) / gamma`.
pub fn bound_aa(inp: &BoundInputs, gamma: f64, rho_0: f64) -> Result<BoundReport> {
    require_gamma(gamma)?;
    let rho_m = inp.rho_m();
    inp.check_range(rho_m, rho_0)?;
    let phi = build_cutoff(rho_m, rho_0)?;
    let big_h = inp
        .profile
        .levels
        .iter()
        .filter(|l| l.regular && l.rho >= rho_m && l.rho <= rho_0)
        .map(|l| l.big_h)
        .fold(f64::NEG_INFINITY, f64::max);
    if !big_h.is_finite() {
        return Err(Error::Precondition(format!(
            "no regular profile level in [{rho_m}, {rho_0}]"
        )));
    }
    let shell = inp.y(rho_0) - inp.y(rho_m);
    let measured = inp.levels.complement(rho_0);
    let bound = phi.constant() * big_h * shell / gamma;
    let mut r = BoundReport::new(Theorem::Aa, rho_m, measured, bound, inp.eps_disc);
    r.rho_0 = Some(rho_0);
    r.gamma = Some(gamma);
    r.notes.push(format!("C = {}", fmt_num(phi.constant())));
    if !bound.is_finite() {
        r.notes.push("bound diverges".into());
    }
    if measured == 0.0 {
        r.notes.push("no mass beyond rho_0; satisfied trivially".into());
    }
    Ok(r)
}

/// Mass outside `Omega_rho` against `exp(-gamma int_{rho_m}^rho 1/H)`.
pub fn bound_ab(inp: &BoundInputs, gamma: f64, rho: f64) -> Result<BoundReport> {
    require_gamma(gamma)?;
    let rho_m = inp.rho_m();
    inp.check_range(rho_m, rho)?;
    inp.check_density_of_regular(rho_m, rho)?;
    checked_inverse(inp.profile, |l| l.big_h, "H", rho_m, rho)?;
    let t = integrate_profile(inp.profile, |l| 1.0 / l.big_h, rho_m, rho)?;
    let measured = inp.levels.complement(rho);
    let bound = (-gamma * t).exp();
    let mut r = BoundReport::new(Theorem::Ab, rho_m, measured, bound, inp.eps_disc);
    r.rho = Some(rho);
    r.gamma = Some(gamma);
    Ok(r)
}

/// Mass outside `Omega_{rho_m}` against
/// `(y(rho_0) - y(rho_m)) exp(int_{rho_0}^{rho_cap} 1/H~_A)`.
pub fn bound_ac(inp: &BoundInputs, rho_0: f64, rho_cap: Option<f64>) -> Result<BoundReport> {
    let rho_m = inp.rho_m();
    let cap = rho_cap.unwrap_or_else(|| inp.top());
    if !(rho_0 > rho_m) || !(cap >= rho_0) {
        return Err(Error::Precondition(format!(
            "need rho_m < rho_0 <= rho_cap, got {rho_m}, {rho_0}, {cap}"
        )));
    }
    inp.check_range(rho_m, cap)?;
    checked_inverse(inp.profile, |l| l.h, "h", rho_m, cap)?;
    let measured = inp.levels.complement(rho_m);
    let shell = inp.y(rho_0) - inp.y(rho_m);
    let mut notes = Vec::new();
    let tail: Vec<(f64, f64)> = inp
        .profile
        .levels
        .iter()
        .filter(|l| l.regular && l.rho >= cap / 10f64.sqrt() && l.rho <= cap && l.htilde_a > 0.0)
        .map(|l| (l.rho, 1.0 / l.htilde_a))
        .collect();
    let slope = log_slope(&tail, true);
    let bound = match slope {
        Some(s) if s > DIVERGENCE_SLOPE => {
            notes.push(format!(
                "integral of 1/Htilde_A judged divergent (log-log slope {s:.3} over the last half-decade); bound = +inf"
            ));
            f64::INFINITY
        }
        _ => {
            let int = integrate_profile(inp.profile, |l| 1.0 / l.htilde_a, rho_0, cap)?;
            let b = shell * int.exp();
            if b.is_infinite() {
                notes.push("bound diverges".into());
            }
            if inp.levels.function().rho_max().is_none_or(|m| cap < m) {
                notes.push(format!(
                    "integral truncated at rho_cap = {cap}; the truncated bound under-estimates the full one"
                ));
                if let Some(rate) = log_slope(&tail, false).filter(|r| *r < 0.0) {
                    let last = tail.last().map_or(0.0, |p| p.1);
                    notes.push(format!(
                        "heuristic tail beyond rho_cap from a log-linear fit: {:.3e}",
                        last / -rate
                    ));
                }
            }
            b
        }
    };
    let mut r = BoundReport::new(Theorem::Ac, rho_m, measured, bound, inp.eps_disc);
    r.rho_0 = Some(rho_0);
    r.rho = Some(cap);
    r.notes = notes;
    Ok(r)
}

/// Least-squares slope of `ln f` against `ln rho` (`loglog`) or `rho`.
fn log_slope(pts: &[(f64, f64)], loglog: bool) -> Option<f64> {
    if pts.len() < 3 {
        return None;
    }
    let xs: Vec<f64> = pts.iter().map(|p| if loglog { p.0.ln() } else { p.0 }).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn lower(
    inp: &BoundInputs,
    theorem: Theorem,
    rho_0: f64,
    rho: f64,
    exponent: f64,
) -> BoundReport {
    let rho_m = inp.rho_m();
    let ym = inp.y(rho_m);
    let measured = inp.y(rho) - ym;
    let reference = inp.y(rho_0) - ym;
    let bound = reference * exponent.exp();
    let mut r = BoundReport::new(theorem, rho_m, measured, bound, inp.eps_disc);
    r.rho_0 = Some(rho_0);
    r.rho = Some(rho);
    r.notes
        .push("mass of Omega*_rho_m taken as that of Omega_rho_m (the level is null)".into());
    r
}

fn check_lower_range(inp: &BoundInputs, rho_0: f64, rho: f64) -> Result<()> {
    let rho_m = inp.rho_m();
    if !(rho_0 > rho_m) || !(rho >= rho_0) {
        return Err(Error::Precondition(format!(
            "need rho_m < rho_0 <= rho, got {rho_m}, {rho_0}, {rho}"
        )));
    }
    inp.check_range(rho_m, rho)?;
    inp.check_density_of_regular(rho_0, rho)
}

/// `y(rho) - y(rho_m)` against `(y(rho_0) - y(rho_m)) exp(gamma int 1/H)`.
pub fn bound_ba(inp: &BoundInputs, gamma: f64, rho_0: f64, rho: f64) -> Result<BoundReport> {
    require_gamma(gamma)?;
    check_lower_range(inp, rho_0, rho)?;
    checked_inverse(inp.profile, |l| l.big_h, "H", rho_0, rho)?;
    let t = integrate_profile(inp.profile, |l| 1.0 / l.big_h, rho_0, rho)?;
    let mut r = lower(inp, Theorem::Ba, rho_0, rho, gamma * t);
    r.gamma = Some(gamma);
    Ok(r)
}

/// `y(rho) - y(rho_m)` against `(y(rho_0) - y(rho_m)) exp(int 1/H~_B)`.
pub fn bound_bb(inp: &BoundInputs, rho_0: f64, rho: f64) -> Result<BoundReport> {
    check_lower_range(inp, rho_0, rho)?;
    checked_inverse(inp.profile, |l| l.h, "h", inp.rho_m(), rho)?;
    let t = integrate_profile(inp.profile, |l| 1.0 / l.htilde_b, rho_0, rho)?;
    Ok(lower(inp, Theorem::Bb, rho_0, rho, t))
}

#[cfg(test)]
mod tests;

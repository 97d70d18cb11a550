//! The C² monotone bridge `phi` that vanishes below `rho_m` and is the
//! identity above `rho_0`.

use crate::error::{Error, Result};

const SCAN_POINTS: usize = 10_001;
const MONOTONE_POINTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff {
    rho_m: f64,
    rho_0: f64,
    /// Coefficients of `s^3, s^4, s^5` with `s = (t - rho_m) / (rho_0 - rho_m)`.
    coeffs: [f64; 3],
    c: f64,
}

/// Builds the quintic with `(phi, phi', phi'') = (0, 0, 0)` at `rho_m` and
/// `(rho_0, 1, 0)` at `rho_0`, and the constant `C = max |phi''|`.
pub fn build_cutoff(rho_m: f64, rho_0: f64) -> Result<Cutoff> {
    if !(rho_0 > rho_m) || !rho_m.is_finite() || !rho_0.is_finite() {
        return Err(Error::Precondition(format!(
            "cutoff needs rho_m < rho_0, got {rho_m} and {rho_0}"
        )));
    }
    let w = rho_0 - rho_m;
    let r = rho_0;
    let coeffs = [10.0 * r - 4.0 * w, 7.0 * w - 15.0 * r, 6.0 * r - 3.0 * w];
    let mut phi = Cutoff {
        rho_m,
        rho_0,
        coeffs,
        c: 0.0,
    };
    for k in 0..MONOTONE_POINTS {
        let t = rho_m + w * k as f64 / (MONOTONE_POINTS - 1) as f64;
        let d = phi.d1(t);
        if d < -1e-12 {
            return Err(Error::Precondition(format!(
                "cutoff on [{rho_m}, {rho_0}] decreases at {t} (phi' = {d:e})"
            )));
        }
    }
    let mut c: f64 = 0.0;
    for k in 0..SCAN_POINTS {
        c = c.max(phi.p2(k as f64 / (SCAN_POINTS - 1) as f64).abs());
    }
    // critical points of p'' are the roots of p''' = 6a + 24b s + 60c s^2
    let [a, b, cc] = coeffs;
    let (qa, qb, qc) = (60.0 * cc, 24.0 * b, 6.0 * a);
    let mut crit = Vec::new();
    if qa.abs() > 1e-300 {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            crit.push((-qb + sq) / (2.0 * qa));
            crit.push((-qb - sq) / (2.0 * qa));
        }
    } else if qb.abs() > 1e-300 {
        crit.push(-qc / qb);
    }
    for s in crit.into_iter().filter(|s| (0.0..=1.0).contains(s)) {
        c = c.max(phi.p2(s).abs());
    }
    phi.c = c / (w * w);
    Ok(phi)
}

impl Cutoff {
    pub fn rho_m(&self) -> f64 {
        self.rho_m
    }

    pub fn rho_0(&self) -> f64 {
        self.rho_0
    }

    pub fn coefficients(&self) -> [f64; 3] {
        self.coeffs
    }

    /// `max |phi''|` over `[rho_m, rho_0]`.
    pub fn constant(&self) -> f64 {
        self.c
    }

    fn width(&self) -> f64 {
        self.rho_0 - self.rho_m
    }

    fn p2(&self, s: f64) -> f64 {
        let [a, b, c] = self.coeffs;
        s * (6.0 * a + s * (12.0 * b + s * 20.0 * c))
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= self.rho_m {
            0.0
        } else if t >= self.rho_0 {
            t
        } else {
            let s = (t - self.rho_m) / self.width();
            let [a, b, c] = self.coeffs;
            s * s * s * (a + s * (b + s * c))
        }
    }

    pub fn d1(&self, t: f64) -> f64 {
        if t <= self.rho_m {
            0.0
        } else if t >= self.rho_0 {
            1.0
        } else {
            let s = (t - self.rho_m) / self.width();
            let [a, b, c] = self.coeffs;
            s * s * (3.0 * a + s * (4.0 * b + s * 5.0 * c)) / self.width()
        }
    }

    /// One-sided limits of `phi''` at `t`, from below and from above.
    pub fn d2_limits(&self, t: f64) -> (f64, f64) {
        let w = self.width();
        let inner = self.p2(((t - self.rho_m) / w).clamp(0.0, 1.0)) / (w * w);
        let below = if t > self.rho_m && t <= self.rho_0 { inner } else { 0.0 };
        let above = if t >= self.rho_m && t < self.rho_0 { inner } else { 0.0 };
        (below, above)
    }

    pub fn d2(&self, t: f64) -> f64 {
        if t <= self.rho_m || t >= self.rho_0 {
            0.0
        } else {
            let w = self.width();
            self.p2((t - self.rho_m) / w) / (w * w)
        }
    }
}

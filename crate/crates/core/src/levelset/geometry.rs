//! Planar polygon helpers for cut cells.

pub(super) type P2 = [f64; 2];

pub(super) fn polygon_area(poly: &[P2]) -> f64 {
    let n = poly.len();
    let mut twice = 0.0;
    for k in 0..n {
        let (p, q) = (poly[k], poly[(k + 1) % n]);
        twice += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * twice.abs()
}

/// Integral over a convex polygon by fan triangulation and the edge-midpoint
/// rule, exact for quadratics and hence for bilinear integrands.
pub(super) fn polygon_integral(poly: &[P2], f: impl Fn(P2) -> f64) -> f64 {
    let mid = |p: P2, q: P2| [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
    let mut total = 0.0;
    for k in 1..poly.len().saturating_sub(1) {
        let (a, b, c) = (poly[0], poly[k], poly[k + 1]);
        let area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs();
        if area == 0.0 {
            continue;
        }
        total += area * (f(mid(a, b)) + f(mid(b, c)) + f(mid(c, a))) / 3.0;
    }
    total
}

/// Bilinear interpolant of corner values `v` (counter-clockwise from the low
/// corner) of the axis-aligned cell with those corners.
pub(super) fn bilinear(v: &[f64; 4], corners: &[P2; 4], p: P2) -> f64 {
    let s = (p[0] - corners[0][0]) / (corners[1][0] - corners[0][0]);
    let t = (p[1] - corners[0][1]) / (corners[3][1] - corners[0][1]);
    let (s, t) = (s.clamp(0.0, 1.0), t.clamp(0.0, 1.0));
    v[0] * (1.0 - s) * (1.0 - t) + v[1] * s * (1.0 - t) + v[2] * s * t + v[3] * (1.0 - s) * t
}

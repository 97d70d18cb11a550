use std::sync::OnceLock;

use proptest::prelude::*;

use fpmeasure::bounds::{bound_ab, build_cutoff, BoundInputs, DEFAULT_EPS_DISC};
use fpmeasure::density::DensityGrid;
use fpmeasure::expr::{BinOp, Expr, Expression, Func};
use fpmeasure::grid::BoundaryKind;
use fpmeasure::levelset::{build_profile, rho_grid, LevelProfile, LevelSet, Spacing};
use fpmeasure::problem::{CompactFunction, Differentiated, ProblemSpec};
use fpmeasure::solver::{analytic_density, solve_stationary, DiscreteGenerator};
use fpmeasure::verifier::{verify_identity, Phi};

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (-20i32..=20).prop_map(|k| Expr::num(k as f64 / 10.0)),
        Just(Expr::var(0)),
        Just(Expr::var(1)),
    ]
}

fn one_plus_square(e: Expr) -> Expr {
    Expr::binary(BinOp::Add, Expr::num(1.0), Expr::binary(BinOp::Pow, e, Expr::num(2.0)))
}

/// Smooth expressions in `x1, x2` that stay finite everywhere.
fn smooth_expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::binary(BinOp::Add, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::binary(BinOp::Sub, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::binary(BinOp::Mul, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::binary(BinOp::Div, a, one_plus_square(b))),
            (inner.clone(), 2u32..=3).prop_map(|(a, k)| Expr::binary(BinOp::Pow, a, Expr::num(k as f64))),
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            inner.clone().prop_map(|a| Expr::call(Func::Sin, a)),
            inner.clone().prop_map(|a| Expr::call(Func::Cos, a)),
            inner.clone().prop_map(|a| Expr::call(Func::Tanh, a)),
            inner.clone().prop_map(|a| Expr::call(Func::Exp, Expr::call(Func::Tanh, a))),
            inner.clone().prop_map(|a| Expr::call(Func::Log, one_plus_square(a))),
            inner.prop_map(|a| Expr::call(Func::Sqrt, one_plus_square(a))),
        ]
    })
}

fn expression() -> impl Strategy<Value = Expression> {
    smooth_expr().prop_map(|e| Expression::from_tree(e, 2).unwrap())
}

fn point() -> impl Strategy<Value = [f64; 2]> {
    (-1.5f64..1.5, -1.5f64..1.5).prop_map(|(a, b)| [a, b])
}

/// Richardson-extrapolated central difference along axis `k`.
fn central_difference(e: &Expression, x: [f64; 2], k: usize) -> Option<f64> {
    let d = |h: f64| -> Option<f64> {
        let (mut p, mut m) = (x, x);
        p[k] += h;
        m[k] -= h;
        Some((e.evaluate(&p).ok()? - e.evaluate(&m).ok()?) / (2.0 * h))
    };
    let h = 1e-3;
    Some((4.0 * d(h / 2.0)? - d(h)?) / 3.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn symbolic_derivative_matches_differences(e in expression(), x in point(), k in 0usize..2) {
        let v = e.evaluate(&x).unwrap();
        prop_assume!(v.is_finite() && v.abs() < 1e6);
        let fd = central_difference(&e, x, k).unwrap();
        let d = e.differentiate(k).evaluate(&x).unwrap();
        prop_assume!(fd.is_finite() && d.abs() < 1e6);
        prop_assert!((d - fd).abs() <= 1e-6 * (1.0 + d.abs()), "{} at {x:?}: {d} vs {fd}", e.render());
    }

    #[test]
    fn render_parse_render_is_idempotent(e in expression()) {
        // any rendered tree is a parseable source
        let source = e.render();
        let once = Expression::parse(&source, 2).unwrap().render();
        let twice = Expression::parse(&once, 2).unwrap().render();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn mixed_partials_commute(e in expression(), x in point()) {
        let a = e.differentiate(0).differentiate(1).evaluate(&x).unwrap();
        let b = e.differentiate(1).differentiate(0).evaluate(&x).unwrap();
        prop_assume!(a.is_finite() && b.is_finite());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs())), "{}: {a} vs {b}", e.render());
    }
}

fn coupled_2d() -> ProblemSpec {
    ProblemSpec::from_sources(
        &[[-3.0, 3.0], [-3.0, 3.0]],
        &[BoundaryKind::Reflecting; 2],
        &[&["1 + 0.5*sin(x1)", "0.2"], &["0.2", "1"]],
        &["-x1 + x2", "-x2^3"],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn generator_is_linear(u1 in smooth_expr(), u2 in smooth_expr(), al in -3f64..3.0, be in -3f64..3.0, x in point()) {
        let p = coupled_2d();
        let combined = Expr::binary(
            BinOp::Add,
            Expr::binary(BinOp::Mul, Expr::num(al), u1.clone()),
            Expr::binary(BinOp::Mul, Expr::num(be), u2.clone()),
        );
        let g = |e: Expr| p.generator(&Differentiated::new(Expression::from_tree(e, 2).unwrap()), &x).unwrap();
        let (l1, l2, l) = (g(u1), g(u2), g(combined));
        let scale = 1.0 + (al * l1).abs() + (be * l2).abs();
        prop_assert!((l - (al * l1 + be * l2)).abs() <= 1e-10 * scale, "{l} vs {}", al * l1 + be * l2);
    }

    #[test]
    fn quadratic_form_is_nonnegative(l in prop::array::uniform4(-2f64..2.0), grad in point(), x in point()) {
        // a = L L^T is positive semidefinite by construction
        let a = [l[0] * l[0] + l[1] * l[1], l[0] * l[2] + l[1] * l[3], l[2] * l[2] + l[3] * l[3]];
        let s: Vec<String> = a.iter().map(|v| format!("{v:e}")).collect();
        let p = ProblemSpec::from_sources(
            &[[-2.0, 2.0], [-2.0, 2.0]],
            &[BoundaryKind::Reflecting; 2],
            &[&[&s[0], &s[1]], &[&s[1], &s[2]]],
            &["0", "0"],
        )
        .unwrap();
        let q = p.quadratic(&grad, &x).unwrap();
        let scale = (a[0] + a[2]) * (grad[0] * grad[0] + grad[1] * grad[1]);
        prop_assert!(q >= -1e-12 * (1.0 + scale), "{q}");
    }
}

fn drifted_1d(k: f64, c: f64) -> ProblemSpec {
    let drift = format!("-{k}*x1 + {c}*sin(x1)");
    ProblemSpec::from_sources(&[[-6.0, 6.0]], &[BoundaryKind::Reflecting], &[&["1 + 0.5*cos(x1)"]], &[&drift]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn solved_density_has_unit_mass(k in 0.5f64..3.0, c in -1f64..1.0, n in 101usize..402) {
        let p = drifted_1d(k, c);
        let g = p.grid(&[n]).unwrap();
        let r = solve_stationary(&p, &g).unwrap();
        prop_assert!((r.density.total_mass() - 1.0).abs() <= 1e-12, "{}", r.density.total_mass());
        prop_assert!(r.density.values().iter().all(|v| *v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn discrete_adjoint_is_consistent(
        n in 5usize..16,
        seed in prop::collection::vec(-1f64..1.0, 256),
    ) {
        let p = coupled_2d();
        let g = p.grid(&[n, n]).unwrap();
        let gen = DiscreteGenerator::assemble(&p, &g).unwrap();
        let u: Vec<f64> = (0..g.len()).map(|i| 1.0 + 0.5 * seed[i % 256]).collect();
        let f: Vec<f64> = (0..g.len())
            .map(|i| if g.is_outer(i) { 0.0 } else { seed[(7 * i + 3) % 256] })
            .collect();
        let (lu, lf) = (gen.forward(&u), gen.backward(&f));
        let w = gen.weights();
        let (mut a, mut b, mut scale) = (0.0, 0.0, 0.0);
        for i in 0..g.len() {
            a += lu[i] * f[i] * w[i];
            b += u[i] * lf[i] * w[i];
            scale += (lu[i] * f[i] * w[i]).abs() + (u[i] * lf[i] * w[i]).abs();
        }
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + scale), "{a} vs {b}");
    }
}

fn ou_2d(n: usize) -> (ProblemSpec, DensityGrid) {
    let p = ProblemSpec::from_sources(
        &[[-5.0, 5.0], [-5.0, 5.0]],
        &[BoundaryKind::Reflecting; 2],
        &[&["1", "0"], &["0", "1"]],
        &["-x1", "-x2"],
    )
    .unwrap()
    .with_exact_density(Expression::parse("exp(-(x1^2 + x2^2)/2)", 2).unwrap())
    .unwrap();
    let g = p.grid(&[n, n]).unwrap();
    let d = analytic_density(&p, &g).unwrap();
    (p, d)
}

fn ou_2d_cached() -> &'static (ProblemSpec, DensityGrid) {
    static CELL: OnceLock<(ProblemSpec, DensityGrid)> = OnceLock::new();
    CELL.get_or_init(|| ou_2d(81))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn profiles_are_monotone_and_consistent(a in 0.5f64..2.0, b in 0.5f64..2.0, t in -0.8f64..0.8) {
        let (p, d) = ou_2d_cached();
        let r = t * (a * b).sqrt();
        let u = CompactFunction::parse(&format!("{a}*x1^2 + {b}*x2^2 + {r}*x1*x2"), 2, 0.0, None).unwrap();
        let levels = rho_grid(0.2, 6.0, 12, Spacing::Linear).unwrap();
        let prof = build_profile(d, p, &u, &levels).unwrap();
        let mut last = 0.0;
        for l in &prof.levels {
            prop_assert!(l.y >= last && (0.0..=1.0).contains(&l.y));
            last = l.y;
            if l.regular {
                prop_assert!(l.h <= l.big_h && l.yprime >= 0.0);
            }
        }
        let ls = LevelSet::new(d, &u).unwrap();
        for &rho in &levels {
            prop_assert!((ls.measure(rho) + ls.complement(rho) - 1.0).abs() <= 1e-10);
        }
        let again = build_profile(d, p, &u, &levels).unwrap();
        prop_assert_eq!(prof.to_csv(), again.to_csv());
    }

    #[test]
    fn radial_levels_have_equal_envelopes(c in 0.2f64..3.0, rho in 0.3f64..8.0) {
        let cs = format!("{c}");
        let p = ProblemSpec::from_sources(
            &[[-5.0, 5.0], [-5.0, 5.0]],
            &[BoundaryKind::Reflecting; 2],
            &[&[&cs, "0"], &["0", &cs]],
            &["-x1", "-x2"],
        )
        .unwrap();
        let d = &ou_2d_cached().1;
        let u = CompactFunction::parse("x1^2 + x2^2", 2, 0.0, None).unwrap();
        let prof = build_profile(d, &p, &u, &[rho]).unwrap();
        let l = prof.level(rho).unwrap();
        prop_assert!(l.regular);
        prop_assert!((l.big_h - l.h) <= 1e-6 * l.big_h, "{} {}", l.h, l.big_h);
        prop_assert!((l.h - 4.0 * c * rho).abs() <= 1e-6 * l.h);
    }
}

fn ou_1d() -> &'static (ProblemSpec, DensityGrid, CompactFunction, LevelProfile) {
    static CELL: OnceLock<(ProblemSpec, DensityGrid, CompactFunction, LevelProfile)> = OnceLock::new();
    CELL.get_or_init(|| {
        let p = ProblemSpec::from_sources(&[[-8.0, 8.0]], &[BoundaryKind::Reflecting], &[&["1"]], &["-x1"])
            .unwrap()
            .with_exact_density(Expression::parse("exp(-x1^2/2)", 1).unwrap())
            .unwrap();
        let d = analytic_density(&p, &p.grid(&[801]).unwrap()).unwrap();
        let u = CompactFunction::parse("x1^2", 1, 2.0, None).unwrap();
        let prof = build_profile(&d, &p, &u, &rho_grid(2.0, 16.0, 141, Spacing::Linear).unwrap()).unwrap();
        (p, d, u, prof)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identity_sides_are_additive_in_phi(rm in 0.1f64..3.0, w in 0.5f64..4.0, rho in 0.2f64..12.0) {
        let (p, d, u, _) = ou_1d();
        let ls = LevelSet::new(d, u).unwrap();
        let cut = Phi::Cutoff(build_cutoff(rm, rm + w).unwrap());
        let sum = Phi::Sum(Box::new(cut.clone()), Box::new(Phi::Identity));
        let a = verify_identity(&ls, p, &cut, rho).unwrap();
        let b = verify_identity(&ls, p, &Phi::Identity, rho).unwrap();
        let s = verify_identity(&ls, p, &sum, rho).unwrap();
        prop_assert!((s.lhs - a.lhs - b.lhs).abs() <= 1e-10 * (1.0 + a.lhs.abs() + b.lhs.abs()));
        prop_assert!((s.rhs - a.rhs - b.rhs).abs() <= 1e-10 * (1.0 + a.rhs.abs() + b.rhs.abs()));
        // monotone phi and PSD diffusion give a nonnegative flux
        prop_assert!(a.rhs >= -1e-10 && b.rhs >= -1e-10 && s.rhs >= -1e-10);
    }

    #[test]
    fn tail_bound_is_monotone(r1 in 2.0f64..16.0, r2 in 2.0f64..16.0, gamma in 0.1f64..2.0) {
        let (_, d, u, prof) = ou_1d();
        let ls = LevelSet::new(d, u).unwrap();
        let inp = BoundInputs { levels: &ls, profile: prof, eps_disc: DEFAULT_EPS_DISC };
        let (lo, hi) = (r1.min(r2), r1.max(r2));
        let a = bound_ab(&inp, gamma, lo).unwrap();
        let b = bound_ab(&inp, gamma, hi).unwrap();
        prop_assert!(b.bound <= a.bound * (1.0 + 1e-12));
        let half = bound_ab(&inp, gamma / 2.0, lo).unwrap();
        prop_assert!(a.bound <= half.bound * (1.0 + 1e-12));
        prop_assert!(a.satisfied && b.satisfied && half.satisfied);
    }

    #[test]
    fn cutoff_constant_scales_inversely(rm in 0.0f64..5.0, w in 0.1f64..5.0, s in 0.1f64..10.0) {
        let c = build_cutoff(rm, rm + w).unwrap().constant();
        let cs = build_cutoff(s * rm, s * (rm + w)).unwrap().constant();
        prop_assert!((cs * s - c).abs() <= 1e-8 * c, "{} vs {c}", cs * s);
    }
}

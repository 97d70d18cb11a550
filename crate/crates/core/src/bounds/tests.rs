use statrs::function::erf::erfc;

use super::*;
use crate::density::DensityGrid;
use crate::expr::Expression;
use crate::grid::BoundaryKind;
use crate::levelset::{build_profile, rho_grid, Spacing};
use crate::problem::{classify, CompactFunction, ProblemSpec};
use crate::solver::analytic_density;

fn ou1() -> (ProblemSpec, DensityGrid) {
    let p = ProblemSpec::from_sources(&[[-8.0, 8.0]], &[BoundaryKind::Reflecting], &[&["1"]], &["-x1"])
        .unwrap()
        .with_exact_density(Expression::parse("exp(-x1^2/2)", 1).unwrap())
        .unwrap();
    let g = p.grid(&[801]).unwrap();
    let d = analytic_density(&p, &g).unwrap();
    (p, d)
}

fn arcsine() -> (ProblemSpec, DensityGrid) {
    let p = ProblemSpec::from_sources(&[[-1.0, 1.0]], &[BoundaryKind::Open], &[&["1"]], &["x1/(1 - x1^2)"])
        .unwrap()
        .with_exact_density(Expression::parse("1/sqrt(1 - x1^2)", 1).unwrap())
        .unwrap();
    let g = p.grid(&[2001]).unwrap();
    let d = analytic_density(&p, &g).unwrap();
    (p, d)
}

#[test]
fn ou_tail_bound_at_nine() {
    let (p, d) = ou1();
    let u = CompactFunction::parse("x1^2", 1, 2.0, None).unwrap();
    let levels = rho_grid(2.0, 16.0, 141, Spacing::Linear).unwrap();
    let prof = build_profile(&d, &p, &u, &levels).unwrap();
    let ls = LevelSet::new(&d, &u).unwrap();
    let inp = BoundInputs {
        levels: &ls,
        profile: &prof,
        eps_disc: DEFAULT_EPS_DISC,
    };
    let r = bound_ab(&inp, 2.0, 9.0).unwrap();
    assert!((r.bound - (2.0f64 / 9.0).sqrt()).abs() < 1e-4, "{}", r.bound);
    assert!((r.measured - erfc(3.0 / 2f64.sqrt())).abs() < 1e-5);
    assert!(r.satisfied);
    let at_m = bound_ab(&inp, 2.0, 2.0).unwrap();
    assert_eq!(at_m.bound, 1.0);
    // larger gamma, smaller bound; later level, smaller bound
    assert!(bound_ab(&inp, 1.0, 9.0).unwrap().bound >= r.bound);
    assert!(bound_ab(&inp, 2.0, 12.0).unwrap().bound <= r.bound);
    assert!(bound_ab(&inp, 0.0, 9.0).is_err());
    assert!(bound_ab(&inp, 2.0, 20.0).is_err());

    let a = bound_aa(&inp, 2.0, 4.0).unwrap();
    let shell = erfc(2f64.sqrt() / 2f64.sqrt()) - erfc(2.0 / 2f64.sqrt());
    let want = 0.5 * 4.839506172835653 * 16.0 * shell;
    assert!((a.bound - want).abs() < 1e-3 * want, "{} vs {want}", a.bound);
    assert!((a.measured - 0.0455003).abs() < 1e-5);
    assert!(a.satisfied);
}

#[test]
fn ou_ac_tail_diverges() {
    let (p, d) = ou1();
    let u = CompactFunction::parse("x1^2", 1, 2.0, None).unwrap();
    let levels = rho_grid(2.0, 60.0, 300, Spacing::Log).unwrap();
    let prof = build_profile(&d, &p, &u, &levels).unwrap();
    let ls = LevelSet::new(&d, &u).unwrap();
    let inp = BoundInputs {
        levels: &ls,
        profile: &prof,
        eps_disc: DEFAULT_EPS_DISC,
    };
    let r = bound_ac(&inp, 4.0, None).unwrap();
    assert_eq!(r.bound, f64::INFINITY);
    assert!(r.satisfied);
    assert!(r.notes[0].contains("divergent"));
    let json = reports_to_json(&[r.clone()]);
    assert!(json.contains("\"bound\": \"inf\""), "{json}");
    let csv = reports_to_csv(&[r]);
    assert!(csv.starts_with("theorem,rho_m,rho_0,rho,gamma,measured,bound,satisfied,slack,notes\n"));
    assert!(csv.lines().nth(1).unwrap().starts_with("Ac,"));
}

#[test]
fn arcsine_lower_bounds() {
    let (p, d) = arcsine();
    let u = CompactFunction::parse("-log(1 - x1^2)", 1, 0.25, None).unwrap();
    let levels = rho_grid(0.25, 4.0, 151, Spacing::Linear).unwrap();
    let prof = build_profile(&d, &p, &u, &levels).unwrap();
    let ls = LevelSet::new(&d, &u).unwrap();
    let inp = BoundInputs {
        levels: &ls,
        profile: &prof,
        eps_disc: DEFAULT_EPS_DISC,
    };
    for rho in [1.0, 1.5, 3.0, 4.0] {
        let a = bound_ba(&inp, 2.0, 1.0, rho).unwrap();
        let b = bound_bb(&inp, 1.0, rho).unwrap();
        assert!(a.satisfied && b.satisfied, "rho {rho}: {a:?} {b:?}");
    }
    let eq = bound_ba(&inp, 2.0, 1.0, 1.0).unwrap();
    assert!((eq.measured - eq.bound).abs() < 1e-10);
    // frozen values for gamma = 2
    let r = bound_ba(&inp, 2.0, 1.0, 4.0).unwrap();
    assert!((r.bound - 0.286073).abs() < 2e-3, "{}", r.bound);
    assert!((r.measured - 0.601856).abs() < 2e-3, "{}", r.measured);
    let r = bound_bb(&inp, 1.0, 4.0).unwrap();
    assert!((r.bound - 0.312169).abs() < 2e-3, "{}", r.bound);
}

#[test]
fn kind_mismatch_is_reported() {
    let p = ProblemSpec::from_sources(&[[-8.0, 8.0]], &[BoundaryKind::Reflecting], &[&["1"]], &["-x1"]).unwrap();
    let u = CompactFunction::parse("x1^2", 1, 2.0, None).unwrap();
    let c = classify(&p, &u, 801).unwrap();
    assert!(check_kind(Theorem::Ab, &c).is_ok());
    assert!(check_kind(Theorem::Ac, &c).is_ok());
    let err = check_kind(Theorem::Ba, &c).unwrap_err();
    assert!(err.to_string().contains("classification mismatch"), "{err}");
}

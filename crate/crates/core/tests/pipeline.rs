use approx::{assert_abs_diff_eq, assert_relative_eq};

use rlab_core::ccbp::{check_target, fitting_radius};
use rlab_core::measure::draw_probes;
use rlab_core::parametrize::{containment_tolerance, summarize};
use rlab_core::*;

fn region(s: &DiscreteSurface, radius: f64) -> Ball {
    let (i, _) = s.index().nearest(&Vector::zeros(s.ambient_dim())).unwrap();
    Ball::new(s.point(i), radius).unwrap()
}

#[test]
fn csv_round_trip_preserves_sample() {
    let s = generate(&ZooSpec::graph_sin(2, 2_000, 0.01, 0.5).with_seed(3)).unwrap();
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    let back = DiscreteSurface::from_csv_reader(buf.as_slice()).unwrap();
    assert_eq!(back.points(), s.points());
    assert_eq!(back.weights(), s.weights());
    assert_eq!(back.normals().unwrap(), s.normals().unwrap());
}

#[test]
fn total_mass_matches_analytic_area() {
    for spec in [ZooSpec::plane(2, 10_000, 1.0), ZooSpec::sphere(2, 10_000, 1.0), ZooSpec::new(Shape::HoledPlane, 2, 10_000)] {
        let s = generate(&spec).unwrap();
        assert_relative_eq!(s.total_weight(), spec.analytic_area().unwrap(), max_relative = 1e-9);
    }
}

#[test]
fn pipeline_on_gentle_graph() {
    let s = generate(&ZooSpec::graph_sin(2, 40_000, 0.005, 0.5)).unwrap();
    let ladder = ScaleLadder::new(0.25, 2.0, 3).unwrap();
    let c = build_ccbp(&s, &region(&s, 0.25), &ladder, 0.05).unwrap();
    assert!(c.achieved_eps > 0.0 && c.achieved_eps <= 0.05);
    assert!(verify_ccbp(&c, &s).passed());
    for k in 0..=c.depth() {
        assert_eq!(c.planes[k].len(), c.net.levels[k].len());
    }
    assert_abs_diff_eq!(c.plane_radius[0], fitting_radius(0.25, 0.25).0, epsilon = 1e-15);

    let spacing = 0.25 * c.radius(3);
    let trace = run_flow(&c, spacing, 3).unwrap();
    assert!(trace.within_bound);
    let summary = summarize(&trace).unwrap();
    assert!(summary.k_lower >= 1.0 && summary.k_lower < 1.01, "{}", summary.k_lower);

    let half = Ball::new(c.net.region.center, 0.125).unwrap();
    let report = containment_check(&s, &half, trace.image(), containment_tolerance(spacing, c.radius(3)));
    assert!(report.passed());
}

#[test]
fn ccbp_json_round_trip_is_exact() {
    let s = generate(&ZooSpec::graph_sin(2, 20_000, 0.01, 0.5)).unwrap();
    let ladder = ScaleLadder::new(0.25, 2.0, 2).unwrap();
    let c = assemble_ccbp(&s, &region(&s, 0.25), &ladder, 1.0).unwrap();
    let back = Ccbp::from_json(&c.to_json().unwrap()).unwrap();
    assert_eq!(back.achieved_eps, c.achieved_eps);
    assert_eq!(back.to_json().unwrap(), c.to_json().unwrap());
    assert!(check_target(&back).is_ok());
}

#[test]
fn rough_surface_misses_tight_target() {
    let spec: ZooSpec = "snowflake-like:lambda=4,gamma=0,levels=6,a=0.05,l=0.5,samples=40000".parse().unwrap();
    let s = generate(&spec).unwrap();
    let ladder = ScaleLadder::new(0.25, 2.0, 2).unwrap();
    match build_ccbp(&s, &region(&s, 0.25), &ladder, 0.05) {
        Err(Error::EpsilonExceeded { achieved, target, worst }) => {
            assert!(achieved > target);
            assert_relative_eq!(worst.value, achieved);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn carleson_statistics_order_the_corpus() {
    let ladder = ScaleLadder::new(0.25, 2.0, 3).unwrap();
    let mut totals = Vec::new();
    for a in [0.0025, 0.005, 0.01] {
        let s = generate(&ZooSpec::graph_sin(2, 40_000, a, 0.5)).unwrap();
        let probes = draw_probes(&s, 16, 1, Some(&region(&s, 0.5)));
        let report = check_dyadic_equivalence(&s, &probes, &ladder).unwrap();
        totals.push(report.records.iter().map(|r| r.dyadic).fold(0.0, f64::max));
    }
    assert!(totals.windows(2).all(|w| w[1] > w[0]), "{totals:?}");
    // α is linear in the amplitude for gentle slopes, so the sums scale by 4
    assert_relative_eq!(totals[2] / totals[1], 4.0, max_relative = 0.05);
}

#[test]
fn poincare_and_quasiconvexity_on_sphere() {
    let s = generate(&ZooSpec::sphere(2, 20_000, 1.0)).unwrap();
    let probes = draw_probes(&s, 16, 2, None);
    let audit = poincare_audit(&s, &poincare::audit_family(&s, 2), &probes, &[0.125, 0.25]).unwrap();
    assert!(!audit.diverged);
    assert!(audit.estimate() > 0.0 && audit.estimate() < 2.0);
    let q = quasiconvexity_audit(&s, s.h_min(), 64, 2).unwrap();
    assert!(q.kappa > 1.0 && q.kappa < 1.65);
}

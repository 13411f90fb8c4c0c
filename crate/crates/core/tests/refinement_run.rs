mod common;

use magtv::certificate::{atom_elimination_check, dual_field_sample, level_set_extract};
use magtv::forward::{self, forward_measure, SensorGrid};
use magtv::measure::{Atom, DiscreteVectorMeasure, Point3, Vec3};
use magtv::partition::Aabb;
use magtv::refinement::{
    delta, inequality_audit, kappa_upper_bound, run_refinement, RefinementData, RefinementOptions, RefinementPlan,
};
use magtv::solver::{self, ConvergedBy};

struct Scenario {
    region: Aabb,
    sensors: SensorGrid,
    f: Vec<f64>,
}

fn scenario() -> Scenario {
    let region = Aabb::new([0.0, 0.0, 0.0], [1.0, 1.0, 0.25]).unwrap();
    let sensors = SensorGrid::planar([-0.25, 1.25], [-0.25, 1.25], [12, 12], 1.1, Vec3::z()).unwrap();
    let truth = DiscreteVectorMeasure::new(vec![
        Atom::new(Point3::new(0.3, 0.35, 0.1), Vec3::new(0.0, 0.0, 1.0)),
        Atom::new(Point3::new(0.7, 0.6, 0.15), Vec3::new(1.0, 0.0, 0.5)),
    ])
    .unwrap();
    let f = forward_measure(&sensors, 1.0, &truth).unwrap();
    Scenario { region, sensors, f }
}

fn lambda_for(s: &Scenario, plan: &RefinementPlan, ratio: f64) -> f64 {
    let spaces = plan.spaces(s.region).unwrap();
    let model = forward::assemble(spaces.last().unwrap(), &s.sensors, 1.0).unwrap();
    ratio * solver::lambda_max(&model, &s.f).unwrap()
}

#[test]
fn three_level_run_is_consistent() {
    let s = scenario();
    let plan = RefinementPlan::new([2, 2, 1], 3, 2).unwrap();
    let lambda = lambda_for(&s, &plan, 0.1);
    let data = RefinementData { region: s.region, sensors: &s.sensors, scale: 1.0, f: &s.f, level_data: None, lambda };
    let out = run_refinement(&plan, &data, &RefinementOptions::default()).unwrap();
    let rows = &out.trace.rows;
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert_eq!(r.converged_by, ConvergedBy::Certificate);
        assert!(r.fncond3_ok && r.fncond2_ok, "level {}: {:?}", r.level, r.flags);
        assert_eq!(r.delta, 0.0);
    }
    for w in rows.windows(2) {
        assert!(w[1].objective <= w[0].objective * (1.0 + 1e-8));
    }
    assert!(rows[0].hausdorff_to_previous.is_none());
    let last = rows.last().unwrap();
    assert_eq!(last.kappa_upper, 0.0);
    assert_eq!(last.r_distance_to_finest, 0.0);
    // Finest actives lie on lattice points inside the band.
    assert_eq!(last.dist_to_levelset, 0.0);

    let again = run_refinement(&plan, &data, &RefinementOptions::default()).unwrap();
    assert_eq!(again.trace.to_csv(), out.trace.to_csv());

    let cold = run_refinement(&plan, &data, &RefinementOptions { warm_start: false, ..Default::default() }).unwrap();
    for (a, b) in cold.trace.rows.iter().zip(rows) {
        assert!((a.objective - b.objective).abs() <= 1e-8 * b.objective);
    }
}

#[test]
fn single_level_plan() {
    let s = scenario();
    let plan = RefinementPlan::new([4, 4, 2], 1, 2).unwrap();
    let lambda = lambda_for(&s, &plan, 0.2);
    let data = RefinementData { region: s.region, sensors: &s.sensors, scale: 1.0, f: &s.f, level_data: None, lambda };
    let opts = RefinementOptions { band_rel: 1e-3, ..Default::default() };
    let out = run_refinement(&plan, &data, &opts).unwrap();
    assert_eq!(out.trace.rows.len(), 1);
    let r = &out.trace.rows[0];
    assert!(r.hausdorff_to_previous.is_none());
    assert!(r.dist_to_levelset <= out.reference_sample.spacing_diagonal());
    assert_eq!(r.dist_from_ref_support, 0.0);
}

#[test]
fn lambda_above_max_gives_empty_supports() {
    let s = scenario();
    let plan = RefinementPlan::new([2, 2, 1], 2, 2).unwrap();
    let lambda = lambda_for(&s, &plan, 1.5);
    let data = RefinementData { region: s.region, sensors: &s.sensors, scale: 1.0, f: &s.f, level_data: None, lambda };
    let out = run_refinement(&plan, &data, &RefinementOptions::default()).unwrap();
    for r in &out.trace.rows {
        assert_eq!(r.active_nodes, 0);
        assert_eq!(r.dist_to_levelset, 0.0);
        assert_eq!(r.dist_from_ref_support, 0.0);
        assert!(r.flags.is_empty());
    }
}

#[test]
fn noisy_levels_report_delta_and_pass_audits() {
    let s = scenario();
    let plan = RefinementPlan::new([2, 2, 1], 2, 2).unwrap();
    let lambda = lambda_for(&s, &plan, 0.1);
    let level_data: Vec<Vec<f64>> = (0..2)
        .map(|n| s.f.iter().enumerate().map(|(i, v)| v + 1e-3 * ((i * (n + 3)) as f64).sin()).collect())
        .collect();
    let data = RefinementData {
        region: s.region,
        sensors: &s.sensors,
        scale: 1.0,
        f: &s.f,
        level_data: Some(&level_data),
        lambda,
    };
    let out = run_refinement(&plan, &data, &RefinementOptions::default()).unwrap();
    for r in &out.trace.rows {
        assert!(r.delta > 0.0);
        assert!(r.fncond3_ok && r.fncond2_ok, "level {}: {:?}", r.level, r.flags);
    }
}

#[test]
fn audit_negative_control_is_reported_not_fatal() {
    let s = scenario();
    let plan = RefinementPlan::new([2, 2, 1], 2, 2).unwrap();
    let spaces = plan.spaces(s.region).unwrap();
    let model = forward::assemble(&spaces[1], &s.sensors, 1.0).unwrap();
    let lambda = 0.1 * solver::lambda_max(&model, &s.f).unwrap();
    let sol = solver::solve(&model, &s.f, lambda, &Default::default()).unwrap();
    let good = inequality_audit(&model, &s.f, &s.f, lambda, &sol.moments, Some(&sol.measure)).unwrap();
    assert!(good.fncond3_ok && good.fncond2_ok);
    assert!(good.fncond3_slack.abs() <= good.tolerance);
    let zeroed = sol.measure.scaled(0.0);
    let bad = inequality_audit(&model, &s.f, &s.f, lambda, &sol.moments, Some(&zeroed)).unwrap();
    assert!(bad.fncond3_ok);
    assert!(!bad.fncond2_ok);
}

#[test]
fn delta_bounded_by_fine_field_sample() {
    let s = scenario();
    let plan = RefinementPlan::new([3, 3, 2], 1, 2).unwrap();
    let space = &plan.spaces(s.region).unwrap()[0];
    let model = forward::assemble(space, &s.sensors, 1.0).unwrap();
    let g: Vec<f64> = (0..s.sensors.len()).map(|i| ((i * 13) as f64).cos()).collect();
    let empty = DiscreteVectorMeasure::new(vec![]).unwrap();
    let sample = dual_field_sample(&model, &g, &empty, 4).unwrap();
    let d = delta(&g, &model).unwrap();
    assert!(d <= sample.max_value() * (1.0 + 1e-12));
    for (k, node) in space.nodes().iter().enumerate() {
        let at = sample.value_at(node).expect("cell centers are lattice points");
        let c = model.adjoint_apply(&g).unwrap()[k].norm();
        assert!((at - c).abs() <= 1e-12 * (1.0 + c));
    }
}

#[test]
fn kappa_vanishes_only_on_the_owning_level() {
    let s = scenario();
    let plan = RefinementPlan::new([2, 2, 1], 3, 2).unwrap();
    let spaces = plan.spaces(s.region).unwrap();
    let finest = spaces.last().unwrap();
    let mu = DiscreteVectorMeasure::new(vec![Atom::new(finest.nodes()[5], Vec3::new(0.2, 0.1, 1.0))]).unwrap();
    let kappas: Vec<f64> = spaces
        .iter()
        .map(|sp| kappa_upper_bound(&mu, &forward::assemble(sp, &s.sensors, 1.0).unwrap()).unwrap())
        .collect();
    assert_eq!(kappas[2], 0.0);
    assert!(kappas[0] > 0.0 && kappas[0].is_finite());
}

#[test]
fn elimination_agrees_with_certificate() {
    let s = scenario();
    let plan = RefinementPlan::new([4, 4, 2], 1, 2).unwrap();
    let space = &plan.spaces(s.region).unwrap()[0];
    let model = forward::assemble(space, &s.sensors, 1.0).unwrap();
    let lambda = 0.1 * solver::lambda_max(&model, &s.f).unwrap();
    let sol = solver::solve(&model, &s.f, lambda, &Default::default()).unwrap();
    let sample = dual_field_sample(&model, &s.f, &sol.measure, 2).unwrap();
    let rep = atom_elimination_check(&sol.certificate, space, &sample, lambda, 1e-3 * lambda).unwrap();
    assert!(rep.hypothesis_holds);
    assert!(rep.active_overlap.is_empty());
    assert_eq!(rep.unsampled, 0);
    assert!(!rep.eliminated.is_empty());
    let ls = level_set_extract(&sample, 0.5 * lambda, 1e-6 * lambda).unwrap();
    for a in sol.measure.atoms() {
        assert!(ls.contains(&a.location));
    }
}

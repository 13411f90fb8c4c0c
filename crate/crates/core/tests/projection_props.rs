mod common;

use magtv::measure::{Atom, DiscreteVectorMeasure, Point3, Vec3};
use magtv::metric::directed_hausdorff;
use magtv::partition::{is_node_supported, project_onto_gsm, Aabb, DipoleGsmSpace, VoxelPartition};
use proptest::prelude::*;

fn space_strategy() -> impl Strategy<Value = DipoleGsmSpace> {
    (1usize..6, 1usize..6, 1usize..4, 1usize..3).prop_map(|(nx, ny, nz, levels)| {
        let region = Aabb::new([-1.0, 0.0, 0.0], [1.0, 2.0, 0.5]).unwrap();
        let mut part = VoxelPartition::new(region, [nx, ny, nz]).unwrap();
        let mut space = DipoleGsmSpace::cell_centers(part.clone());
        for _ in 1..levels {
            part = part.refined(2).unwrap();
            space = DipoleGsmSpace::nested(part.clone(), &space).unwrap();
        }
        space
    })
}

fn measure_strategy() -> impl Strategy<Value = DiscreteVectorMeasure> {
    prop::collection::vec(
        ((0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64), (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64)),
        0..12,
    )
    .prop_map(|atoms| {
        let mut seen = std::collections::HashSet::new();
        let atoms = atoms
            .into_iter()
            .filter(|((x, y, z), _)| seen.insert((x.to_bits(), y.to_bits(), z.to_bits())))
            .map(|((x, y, z), (a, b, c))| {
                Atom::new(Point3::new(-1.0 + 2.0 * x, 2.0 * y, 0.5 * z), Vec3::new(a, b, c))
            })
            .collect();
        DiscreteVectorMeasure::new(atoms).unwrap()
    })
}

fn support(mu: &DiscreteVectorMeasure) -> Vec<Point3> {
    mu.atoms().iter().map(|a| a.location).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projection_does_not_increase_tv(space in space_strategy(), mu in measure_strategy()) {
        let p = project_onto_gsm(&mu, &space).unwrap();
        prop_assert!(p.tv_norm() <= mu.tv_norm() * (1.0 + 1e-12) + 1e-15);
        prop_assert!(is_node_supported(&p, &space));
    }

    #[test]
    fn projection_is_idempotent(space in space_strategy(), mu in measure_strategy()) {
        let p = project_onto_gsm(&mu, &space).unwrap();
        let pp = project_onto_gsm(&p, &space).unwrap();
        prop_assert_eq!(pp, p);
    }

    #[test]
    fn projection_moves_support_by_at_most_mesh(space in space_strategy(), mu in measure_strategy()) {
        let p = project_onto_gsm(&mu, &space).unwrap();
        let a = space.mesh_size();
        prop_assert!(directed_hausdorff(&support(&p), &support(&mu)) <= a);
        // Atoms can cancel, so only the projected support is guaranteed to be
        // near the original; the converse holds for the pre-image nodes.
        for atom in mu.atoms() {
            let k = space.owner(&atom.location).unwrap();
            prop_assert!((space.nodes()[k] - atom.location).norm() <= a);
        }
    }

    #[test]
    fn projection_preserves_total_moment(space in space_strategy(), mu in measure_strategy()) {
        let p = project_onto_gsm(&mu, &space).unwrap();
        let total = |m: &DiscreteVectorMeasure| m.atoms().iter().fold(Vec3::zeros(), |s, a| s + a.moment);
        prop_assert!((total(&p) - total(&mu)).norm() <= 1e-12 * (1.0 + mu.tv_norm()));
    }

    #[test]
    fn tv_norm_is_a_norm(mu in measure_strategy(), nu in measure_strategy(), s in -3.0..3.0f64) {
        let sum = mu.add(&nu).unwrap();
        prop_assert!(sum.tv_norm() <= (mu.tv_norm() + nu.tv_norm()) * (1.0 + 1e-12));
        prop_assert!((mu.scaled(s).tv_norm() - s.abs() * mu.tv_norm()).abs() <= 1e-12 * (1.0 + mu.tv_norm()));
    }
}

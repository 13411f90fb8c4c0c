#![allow(dead_code)]

use magtv::forward::{self, ForwardModel, SensorGrid};
use magtv::measure::{Atom, DiscreteVectorMeasure, Point3, Vec3};
use magtv::partition::{Aabb, DipoleGsmSpace, VoxelPartition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_vector(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn region() -> Aabb {
    Aabb::new([0.0, 0.0, 0.0], [1.0, 1.0, 0.5]).unwrap()
}

/// Random sensors above `region` with random positive weights, at least
/// `gap` above the top face.
pub fn random_sensors(rng: &mut ChaCha8Rng, region: &Aabb, count: usize, gap: f64) -> SensorGrid {
    let dir = unit_vector(rng);
    let points = (0..count)
        .map(|_| {
            Point3::new(
                rng.random_range(region.min[0] - 0.5..region.max[0] + 0.5),
                rng.random_range(region.min[1] - 0.5..region.max[1] + 0.5),
                region.max[2] + gap + rng.random_range(0.0..0.5),
            )
        })
        .collect();
    let weights = (0..count).map(|_| rng.random_range(0.5..1.5)).collect();
    SensorGrid::new(points, weights, dir).unwrap()
}

pub fn random_space(rng: &mut ChaCha8Rng, max_nodes: usize) -> DipoleGsmSpace {
    loop {
        let res = [rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(1..=3)];
        if res.iter().product::<usize>() <= max_nodes {
            return DipoleGsmSpace::cell_centers(VoxelPartition::new(region(), res).unwrap());
        }
    }
}

pub fn random_node_measure(rng: &mut ChaCha8Rng, space: &DipoleGsmSpace, atoms: usize) -> DiscreteVectorMeasure {
    let mut ks: Vec<usize> = (0..space.num_nodes()).collect();
    let mut out = Vec::new();
    for _ in 0..atoms.min(ks.len()) {
        let k = ks.swap_remove(rng.random_range(0..ks.len()));
        out.push(Atom::new(space.nodes()[k], unit_vector(rng) * rng.random_range(0.5..2.0)));
    }
    DiscreteVectorMeasure::new(out).unwrap()
}

pub fn random_measure_in(rng: &mut ChaCha8Rng, region: &Aabb, atoms: usize) -> DiscreteVectorMeasure {
    let out = (0..atoms)
        .map(|_| {
            let p = Point3::new(
                rng.random_range(region.min[0]..region.max[0]),
                rng.random_range(region.min[1]..region.max[1]),
                rng.random_range(region.min[2]..region.max[2]),
            );
            Atom::new(p, unit_vector(rng) * rng.random_range(0.1..2.0))
        })
        .collect();
    DiscreteVectorMeasure::new(out).unwrap()
}

/// A small instance with data `f = Aμ₀ + noise`.
pub struct Instance {
    pub model: ForwardModel,
    pub truth: DiscreteVectorMeasure,
    pub f: Vec<f64>,
}

pub fn random_instance(rng: &mut ChaCha8Rng, max_nodes: usize, sensors: usize, noise: f64) -> Instance {
    let space = random_space(rng, max_nodes);
    let sensors = random_sensors(rng, space.region(), sensors, space.mesh_size());
    let model = forward::assemble(&space, &sensors, 1.0).unwrap();
    let truth = random_node_measure(rng, &space, 1 + space.num_nodes() / 4);
    let m = space.stack(&truth).unwrap();
    let mut f = model.apply(&m).unwrap();
    let scale = f.iter().map(|v| v.abs()).fold(0.0, f64::max);
    for v in &mut f {
        *v += noise * scale * rng.random_range(-1.0..1.0);
    }
    Instance { model, truth, f }
}

//! Voxel partitions of the source region and the dipole spaces built on them.
//!
//! A [`DipoleGsmSpace`] is the span of unit Dirac masses `δ_{x_k}` at a finite
//! node set, together with a compatible partition `{E_k}` of the region: each
//! cell owns exactly one node. Cells use the half-open convention `[lo, hi)`
//! per axis, closed on the region's max faces, so every point of the region
//! belongs to exactly one cell.
//!
//! Nested spaces (the node set of a coarser level carried into a finer one)
//! add *extra* nodes that do not sit at cell centers. An extra node owns the
//! singleton `{x}` carved out of the fine cell containing it; the cell's
//! center node keeps the remainder. The result is still a compatible Borel
//! partition with the same mesh size.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{Atom, DiscreteVectorMeasure, Point3, Vec3};

/// Relative tolerance (in units of the cell diagonal) for matching an atom
/// to an extra node.
const NODE_MATCH_TOL: f64 = 1e-9;

/// Axis-aligned box `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        for c in 0..3 {
            if !(min[c].is_finite() && max[c].is_finite()) {
                return Err(Error::NonFinite("box corner".into()));
            }
            if max[c] <= min[c] {
                return Err(Error::Config(format!("degenerate box along axis {c}")));
            }
        }
        Ok(Aabb { min, max })
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|c| p[c] >= self.min[c] && p[c] <= self.max[c])
    }

    pub fn lengths(&self) -> [f64; 3] {
        [self.max[0] - self.min[0], self.max[1] - self.min[1], self.max[2] - self.min[2]]
    }

    /// Euclidean distance from `p` to the box (0 inside).
    pub fn distance_to(&self, p: &Point3) -> f64 {
        let mut d2 = 0.0;
        for c in 0..3 {
            let excess = (self.min[c] - p[c]).max(p[c] - self.max[c]).max(0.0);
            d2 += excess * excess;
        }
        d2.sqrt()
    }
}

/// Uniform grid of `n_x × n_y × n_z` cells over a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelPartition {
    region: Aabb,
    resolution: [usize; 3],
}

impl VoxelPartition {
    pub fn new(region: Aabb, resolution: [usize; 3]) -> Result<Self> {
        if resolution.contains(&0) {
            return Err(Error::Config("partition resolution must be positive".into()));
        }
        Ok(VoxelPartition { region, resolution })
    }

    pub fn region(&self) -> &Aabb {
        &self.region
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    pub fn num_cells(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn cell_size(&self) -> [f64; 3] {
        let len = self.region.lengths();
        [
            len[0] / self.resolution[0] as f64,
            len[1] / self.resolution[1] as f64,
            len[2] / self.resolution[2] as f64,
        ]
    }

    /// Cell diameter `a` (all cells are congruent).
    pub fn mesh_size(&self) -> f64 {
        let h = self.cell_size();
        (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt()
    }

    pub fn cell_index(&self, ijk: [usize; 3]) -> usize {
        let [nx, ny, _] = self.resolution;
        ijk[0] + nx * (ijk[1] + ny * ijk[2])
    }

    pub fn cell_ijk(&self, k: usize) -> [usize; 3] {
        let [nx, ny, _] = self.resolution;
        [k % nx, (k / nx) % ny, k / (nx * ny)]
    }

    pub fn cell_center(&self, k: usize) -> Point3 {
        let ijk = self.cell_ijk(k);
        let h = self.cell_size();
        let lo = self.region.min;
        Point3::new(
            lo[0] + (ijk[0] as f64 + 0.5) * h[0],
            lo[1] + (ijk[1] as f64 + 0.5) * h[1],
            lo[2] + (ijk[2] as f64 + 0.5) * h[2],
        )
    }

    /// Cell containing `p`, or `None` outside the region.
    pub fn locate(&self, p: &Point3) -> Option<usize> {
        if !self.region.contains(p) {
            return None;
        }
        let h = self.cell_size();
        let mut ijk = [0usize; 3];
        for c in 0..3 {
            let t = ((p[c] - self.region.min[c]) / h[c]).floor();
            ijk[c] = (t.max(0.0) as usize).min(self.resolution[c] - 1);
        }
        Some(self.cell_index(ijk))
    }

    /// Refines every axis by an integer factor.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Config("refinement factor must be positive".into()));
        }
        let r = self.resolution;
        Self::new(self.region, [r[0] * factor, r[1] * factor, r[2] * factor])
    }
}

/// Span of Dirac atoms at a finite node set, with a compatible partition.
#[derive(Debug, Clone)]
pub struct DipoleGsmSpace {
    partition: VoxelPartition,
    nodes: Vec<Point3>,
    /// Node index of each cell's center.
    center_node: Vec<usize>,
    /// Extra (singleton-cell) nodes per fine cell.
    extras: HashMap<usize, Vec<usize>>,
    /// Cell containing each node.
    node_cell: Vec<usize>,
}

impl DipoleGsmSpace {
    /// One node at the center of every cell.
    pub fn cell_centers(partition: VoxelPartition) -> Self {
        let n = partition.num_cells();
        let nodes: Vec<Point3> = (0..n).map(|k| partition.cell_center(k)).collect();
        DipoleGsmSpace {
            partition,
            nodes,
            center_node: (0..n).collect(),
            extras: HashMap::new(),
            node_cell: (0..n).collect(),
        }
    }

    /// Cell centers of `partition` plus every node of `coarser` that is not
    /// already a center, giving a space that contains `coarser`.
    pub fn nested(partition: VoxelPartition, coarser: &DipoleGsmSpace) -> Result<Self> {
        let mut space = Self::cell_centers(partition);
        let tol = NODE_MATCH_TOL * space.partition.mesh_size();
        for p in coarser.nodes() {
            let cell = space.partition.locate(p).ok_or(Error::OutsideRegion {
                index: 0,
                x: p.x,
                y: p.y,
                z: p.z,
            })?;
            if (space.nodes[space.center_node[cell]] - p).norm() <= tol {
                continue;
            }
            let idx = space.nodes.len();
            space.nodes.push(*p);
            space.node_cell.push(cell);
            space.extras.entry(cell).or_default().push(idx);
        }
        Ok(space)
    }

    pub fn partition(&self) -> &VoxelPartition {
        &self.partition
    }

    pub fn region(&self) -> &Aabb {
        self.partition.region()
    }

    pub fn nodes(&self) -> &[Point3] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn mesh_size(&self) -> f64 {
        self.partition.mesh_size()
    }

    pub fn node_cell(&self, k: usize) -> usize {
        self.node_cell[k]
    }

    /// Index of the node whose partition set `E_k` contains `p`.
    pub fn owner(&self, p: &Point3) -> Option<usize> {
        let cell = self.partition.locate(p)?;
        if let Some(extra) = self.extras.get(&cell) {
            let tol = NODE_MATCH_TOL * self.partition.mesh_size();
            if let Some(&k) = extra.iter().find(|&&k| (self.nodes[k] - p).norm() <= tol) {
                return Some(k);
            }
        }
        Some(self.center_node[cell])
    }

    /// Index of the node located at `p` (within a relative tolerance).
    pub fn node_at(&self, p: &Point3) -> Option<usize> {
        let k = self.owner(p)?;
        let tol = NODE_MATCH_TOL * self.partition.mesh_size();
        ((self.nodes[k] - p).norm() <= tol).then_some(k)
    }

    /// Stacked moment vector `[m_0x, m_0y, m_0z, m_1x, ...]` of a measure
    /// supported on the nodes.
    pub fn stack(&self, mu: &DiscreteVectorMeasure) -> Result<Vec<f64>> {
        let mut m = vec![0.0; 3 * self.num_nodes()];
        for (index, atom) in mu.atoms().iter().enumerate() {
            let p = atom.location;
            let k = self.node_at(&p).ok_or(Error::OffNode { index, x: p.x, y: p.y, z: p.z })?;
            for c in 0..3 {
                m[3 * k + c] += atom.moment[c];
            }
        }
        Ok(m)
    }

    /// Measure with atom `m_k` at node `k`, skipping zero blocks.
    pub fn unstack(&self, m: &[f64]) -> Result<DiscreteVectorMeasure> {
        if m.len() != 3 * self.num_nodes() {
            return Err(Error::Dimension { expected: 3 * self.num_nodes(), got: m.len() });
        }
        let atoms = m
            .chunks_exact(3)
            .zip(&self.nodes)
            .filter(|(b, _)| b.iter().any(|&v| v != 0.0))
            .map(|(b, p)| Atom::new(*p, Vec3::new(b[0], b[1], b[2])))
            .collect();
        DiscreteVectorMeasure::new(atoms)
    }
}

/// `P_V(μ) = Σ_k μ(E_k) δ_{x_k}`: sums the moments falling in each node's
/// partition set.
pub fn project_onto_gsm(mu: &DiscreteVectorMeasure, space: &DipoleGsmSpace) -> Result<DiscreteVectorMeasure> {
    let mut sums: Vec<Option<Vec3>> = vec![None; space.num_nodes()];
    let mut order = Vec::new();
    for (index, atom) in mu.atoms().iter().enumerate() {
        let p = atom.location;
        let k = space.owner(&p).ok_or(Error::OutsideRegion { index, x: p.x, y: p.y, z: p.z })?;
        match &mut sums[k] {
            Some(s) => *s += atom.moment,
            slot @ None => {
                *slot = Some(atom.moment);
                order.push(k);
            }
        }
    }
    let atoms = order
        .into_iter()
        .map(|k| Atom::new(space.nodes[k], sums[k].unwrap()))
        .collect();
    DiscreteVectorMeasure::new(atoms)
}

/// True when every atom sits exactly on a distinct node.
pub fn is_node_supported(mu: &DiscreteVectorMeasure, space: &DipoleGsmSpace) -> bool {
    let mut seen = std::collections::HashSet::new();
    mu.atoms().iter().all(|a| match space.node_at(&a.location) {
        Some(k) => seen.insert(k),
        None => false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: [usize; 3]) -> VoxelPartition {
        VoxelPartition::new(Aabb::new([0.0; 3], [1.0; 3]).unwrap(), n).unwrap()
    }

    #[test]
    fn half_open_cells_and_closed_max_face() {
        let part = unit_grid([2, 2, 2]);
        assert_eq!(part.locate(&Point3::new(0.5, 0.0, 0.0)), Some(1));
        assert_eq!(part.locate(&Point3::new(0.4999, 0.0, 0.0)), Some(0));
        assert_eq!(part.locate(&Point3::new(1.0, 1.0, 1.0)), Some(7));
        assert_eq!(part.locate(&Point3::new(1.0 + 1e-12, 0.5, 0.5)), None);
        assert!((part.mesh_size() - 0.75f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn centers_lie_in_their_cells() {
        let part = unit_grid([3, 4, 5]);
        for k in 0..part.num_cells() {
            assert_eq!(part.locate(&part.cell_center(k)), Some(k));
        }
    }

    #[test]
    fn projection_examples() {
        let space = DipoleGsmSpace::cell_centers(unit_grid([2, 2, 2]));
        let m = Vec3::new(0.3, -1.0, 2.0);
        let mu = DiscreteVectorMeasure::new(vec![Atom::new(Point3::new(0.1, 0.2, 0.3), m)]).unwrap();
        let p = project_onto_gsm(&mu, &space).unwrap();
        assert_eq!(p.atoms(), &[Atom::new(space.nodes()[0], m)]);

        let mu = DiscreteVectorMeasure::new(vec![
            Atom::new(Point3::new(0.1, 0.2, 0.3), m),
            Atom::new(Point3::new(0.2, 0.1, 0.1), -m),
        ])
        .unwrap();
        assert!(project_onto_gsm(&mu, &space).unwrap().is_empty());

        let mu = DiscreteVectorMeasure::new(vec![
            Atom::new(Point3::new(0.1, 0.2, 0.3), Vec3::x()),
            Atom::new(Point3::new(0.2, 0.1, 0.1), Vec3::y()),
        ])
        .unwrap();
        let p = project_onto_gsm(&mu, &space).unwrap();
        assert!((p.tv_norm() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mu.tv_norm(), 2.0);
    }

    #[test]
    fn projection_rejects_outside_atoms() {
        let space = DipoleGsmSpace::cell_centers(unit_grid([2, 2, 2]));
        let mu = DiscreteVectorMeasure::new(vec![
            Atom::new(Point3::new(0.1, 0.2, 0.3), Vec3::x()),
            Atom::new(Point3::new(0.1, 0.2, 1.5), Vec3::x()),
        ])
        .unwrap();
        match project_onto_gsm(&mu, &space) {
            Err(Error::OutsideRegion { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected OutsideRegion, got {other:?}"),
        }
    }

    #[test]
    fn nested_space_contains_coarse_nodes() {
        let coarse = DipoleGsmSpace::cell_centers(unit_grid([2, 2, 1]));
        let fine = DipoleGsmSpace::nested(unit_grid([4, 4, 2]), &coarse).unwrap();
        assert_eq!(fine.num_nodes(), 32 + 4);
        for p in coarse.nodes() {
            let k = fine.node_at(p).unwrap();
            assert!(k >= 32);
            assert_eq!(fine.owner(p), Some(k));
        }
        // A point next to (but not at) the coarse node falls to the fine center.
        let p = coarse.nodes()[0] + Vec3::new(1e-3, 1e-3, 1e-3);
        let k = fine.owner(&p).unwrap();
        assert!(k < 32);

        // Factor 3 refinement: coarse centers coincide with fine centers.
        let fine3 = DipoleGsmSpace::nested(unit_grid([6, 6, 3]), &coarse).unwrap();
        assert_eq!(fine3.num_nodes(), 108);
    }

    #[test]
    fn stack_unstack() {
        let space = DipoleGsmSpace::cell_centers(unit_grid([2, 1, 1]));
        let mu = DiscreteVectorMeasure::new(vec![Atom::new(space.nodes()[1], Vec3::new(1.0, 2.0, 3.0))]).unwrap();
        let m = space.stack(&mu).unwrap();
        assert_eq!(m, vec![0.0, 0.0, 0.0, 1.0, 2.0, 3.0]);
        assert_eq!(space.unstack(&m).unwrap(), mu);
        let off = DiscreteVectorMeasure::new(vec![Atom::new(Point3::new(0.1, 0.1, 0.1), Vec3::x())]).unwrap();
        assert!(matches!(space.stack(&off), Err(Error::OffNode { .. })));
    }
}

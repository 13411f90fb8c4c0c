//! Magnetostatic forward operator for dipole spaces.
//!
//! For a unit sensing direction `v` the field component of a measure at a
//! sensor `x` is
//!
//! ```text
//! b_v(μ)(x) = −scale · Σ_k K_v(x − x_k) · m_k,
//! K_v(x)    = v/|x|³ − 3x (v·x)/|x|⁵ = ∇(v·x/|x|³),
//! ```
//!
//! with `scale = μ₀/4π` (1e-7 in SI). Data live in `L²(Q, ρ)` with `ρ` a
//! weighted point measure on the sensors, so `⟨g, h⟩_H = Σ_i w_i g_i h_i`
//! and the adjoint carries the weights: `(A*g)(y) = Σ_i w_i g_i (−scale K_v(x_i − y))`.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};
use crate::measure::{DiscreteVectorMeasure, Point3, Vec3};
use crate::partition::DipoleGsmSpace;

/// `μ₀/4π` in SI units.
pub const MU0_OVER_4PI: f64 = 1e-7;

const SINGULAR_RADIUS: f64 = 1e-12;
const UNIT_TOL: f64 = 1e-12;

/// Dense storage above this many bytes switches to matrix-free application.
pub const DEFAULT_MEMORY_CAP: usize = 2 << 30;

#[inline]
fn kernel_unchecked(x: &Vec3, v: &Vec3) -> Vec3 {
    let r2 = x.norm_squared();
    let r = r2.sqrt();
    let r3 = r2 * r;
    let r5 = r3 * r2;
    v / r3 - x * (3.0 * v.dot(x) / r5)
}

/// `K_v(x) = v/|x|³ − 3x(v·x)/|x|⁵`.
pub fn kernel_kv(x: &Vec3, v: &Vec3) -> Result<Vec3> {
    let r = x.norm();
    if !(r >= SINGULAR_RADIUS) {
        return Err(Error::Singularity(r));
    }
    Ok(kernel_unchecked(x, v))
}

/// `b_v(μ)(x) = −scale Σ_k K_v(x − x_k)·m_k`.
pub fn field_component(mu: &DiscreteVectorMeasure, x: &Point3, v: &Vec3, scale: f64) -> Result<f64> {
    let mut acc = 0.0;
    for atom in mu.atoms() {
        acc += kernel_kv(&(x - atom.location), v)?.dot(&atom.moment);
    }
    Ok(-scale * acc)
}

/// `Aμ` for an arbitrary (not necessarily node-supported) measure, by direct
/// summation at every sensor.
pub fn forward_measure(sensors: &SensorGrid, scale: f64, mu: &DiscreteVectorMeasure) -> Result<Vec<f64>> {
    sensors
        .points()
        .par_iter()
        .map(|x| field_component(mu, x, sensors.direction(), scale))
        .collect()
}

/// Sensor locations, quadrature weights of `ρ`, and the sensing direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorGrid {
    points: Vec<Point3>,
    weights: Vec<f64>,
    direction: Vec3,
}

impl SensorGrid {
    pub fn new(points: Vec<Point3>, weights: Vec<f64>, direction: Vec3) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::Dimension { expected: points.len(), got: weights.len() });
        }
        if points.is_empty() {
            return Err(Error::Config("sensor grid is empty".into()));
        }
        if points.iter().any(|p| !p.coords.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("sensor location".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Config("sensor weights must be finite and positive".into()));
        }
        if (direction.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::Config(format!("sensing direction has norm {}", direction.norm())));
        }
        Ok(SensorGrid { points, weights, direction })
    }

    /// Planar `nx × ny` grid at height `z` spanning `[x0,x1] × [y0,y1]` with
    /// uniform weights `area / (nx·ny)`.
    pub fn planar(x_range: [f64; 2], y_range: [f64; 2], counts: [usize; 2], z: f64, direction: Vec3) -> Result<Self> {
        let [nx, ny] = counts;
        if nx == 0 || ny == 0 {
            return Err(Error::Config("sensor grid counts must be positive".into()));
        }
        let coord = |range: [f64; 2], n: usize, i: usize| {
            if n == 1 {
                0.5 * (range[0] + range[1])
            } else {
                range[0] + (range[1] - range[0]) * i as f64 / (n - 1) as f64
            }
        };
        let mut points = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                points.push(Point3::new(coord(x_range, nx, i), coord(y_range, ny, j), z));
            }
        }
        let area = ((x_range[1] - x_range[0]) * (y_range[1] - y_range[0])).abs();
        let w = if area > 0.0 { area / (nx * ny) as f64 } else { 1.0 };
        Self::new(points, vec![w; nx * ny], direction)
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn direction(&self) -> &Vec3 {
        &self.direction
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `⟨g, h⟩_H`.
    pub fn inner(&self, g: &[f64], h: &[f64]) -> f64 {
        linalg::weighted_dot(&self.weights, g, h)
    }

    /// `‖g‖_H`.
    pub fn norm(&self, g: &[f64]) -> f64 {
        self.inner(g, g).sqrt()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AssembleOptions {
    /// Minimum sensor-to-region distance; `None` uses the mesh size.
    pub min_gap: Option<f64>,
    pub memory_cap_bytes: usize,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        AssembleOptions { min_gap: None, memory_cap_bytes: DEFAULT_MEMORY_CAP }
    }
}

#[derive(Debug, Clone)]
enum Storage {
    Dense(DenseMatrix),
    MatrixFree,
}

/// The operator `A` restricted to a dipole space: a `num_sensors × 3·num_nodes`
/// matrix whose block `(3k..3k+2)` is `−scale·K_v(x_i − node_k)ᵀ`.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    sensors: SensorGrid,
    space: DipoleGsmSpace,
    scale: f64,
    storage: Storage,
}

pub fn assemble(space: &DipoleGsmSpace, sensors: &SensorGrid, scale: f64) -> Result<ForwardModel> {
    assemble_with(space, sensors, scale, AssembleOptions::default())
}

pub fn assemble_with(
    space: &DipoleGsmSpace,
    sensors: &SensorGrid,
    scale: f64,
    opts: AssembleOptions,
) -> Result<ForwardModel> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Config(format!("scale must be positive, got {scale}")));
    }
    let gap = opts.min_gap.unwrap_or_else(|| space.mesh_size());
    let closest = sensors
        .points()
        .iter()
        .map(|p| space.region().distance_to(p))
        .fold(f64::INFINITY, f64::min);
    if !(closest >= gap && closest > 0.0) {
        return Err(Error::Config(format!(
            "sensors are {closest} from the source region, need at least {gap}"
        )));
    }
    let rows = sensors.len();
    let cols = 3 * space.num_nodes();
    let bytes = rows.saturating_mul(cols).saturating_mul(8);
    let storage = if bytes > opts.memory_cap_bytes {
        log::info!("forward model of {bytes} bytes exceeds cap; using matrix-free application");
        Storage::MatrixFree
    } else {
        let mut m = DenseMatrix::zeros(rows, cols);
        let v = *sensors.direction();
        let nodes = space.nodes();
        m.par_fill_rows(|i, row| {
            let x = sensors.points()[i];
            for (k, node) in nodes.iter().enumerate() {
                let kv = kernel_unchecked(&(x - node), &v);
                row[3 * k] = -scale * kv.x;
                row[3 * k + 1] = -scale * kv.y;
                row[3 * k + 2] = -scale * kv.z;
            }
        });
        Storage::Dense(m)
    };
    Ok(ForwardModel { sensors: sensors.clone(), space: space.clone(), scale, storage })
}

impl ForwardModel {
    /// Model with an explicit matrix, for synthetic operators in tests and
    /// experiments. The matrix must be `sensors × 3·nodes`.
    pub fn from_matrix(space: DipoleGsmSpace, sensors: SensorGrid, scale: f64, matrix: DenseMatrix) -> Result<Self> {
        if matrix.rows() != sensors.len() {
            return Err(Error::Dimension { expected: sensors.len(), got: matrix.rows() });
        }
        if matrix.cols() != 3 * space.num_nodes() {
            return Err(Error::Dimension { expected: 3 * space.num_nodes(), got: matrix.cols() });
        }
        Ok(ForwardModel { sensors, space, scale, storage: Storage::Dense(matrix) })
    }

    pub fn sensors(&self) -> &SensorGrid {
        &self.sensors
    }

    pub fn space(&self) -> &DipoleGsmSpace {
        &self.space
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn num_sensors(&self) -> usize {
        self.sensors.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.space.num_nodes()
    }

    pub fn num_unknowns(&self) -> usize {
        3 * self.space.num_nodes()
    }

    pub fn matrix(&self) -> Option<&DenseMatrix> {
        match &self.storage {
            Storage::Dense(m) => Some(m),
            Storage::MatrixFree => None,
        }
    }

    pub fn is_matrix_free(&self) -> bool {
        matches!(self.storage, Storage::MatrixFree)
    }

    /// `⟨g, h⟩_H`.
    pub fn inner(&self, g: &[f64], h: &[f64]) -> f64 {
        self.sensors.inner(g, h)
    }

    pub fn norm(&self, g: &[f64]) -> f64 {
        self.sensors.norm(g)
    }

    fn check_unknowns(&self, m: &[f64]) -> Result<()> {
        if m.len() != self.num_unknowns() {
            return Err(Error::Dimension { expected: self.num_unknowns(), got: m.len() });
        }
        Ok(())
    }

    fn check_data(&self, g: &[f64]) -> Result<()> {
        if g.len() != self.num_sensors() {
            return Err(Error::Dimension { expected: self.num_sensors(), got: g.len() });
        }
        Ok(())
    }

    /// `Aμ` for stacked moments.
    pub fn apply(&self, m: &[f64]) -> Result<Vec<f64>> {
        self.check_unknowns(m)?;
        Ok(match &self.storage {
            Storage::Dense(a) => a.mul_vec(m),
            Storage::MatrixFree => {
                let v = *self.sensors.direction();
                let nodes = self.space.nodes();
                self.sensors
                    .points()
                    .par_iter()
                    .map(|x| {
                        let mut acc = 0.0;
                        for (k, node) in nodes.iter().enumerate() {
                            let b = &m[3 * k..3 * k + 3];
                            if b.iter().any(|&t| t != 0.0) {
                                let kv = kernel_unchecked(&(x - node), &v);
                                acc += kv.x * b[0] + kv.y * b[1] + kv.z * b[2];
                            }
                        }
                        -self.scale * acc
                    })
                    .collect()
            }
        })
    }

    /// `A*g` sampled at the nodes, stacked as `3·num_nodes` values.
    pub fn adjoint_apply_stacked(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.check_data(g)?;
        let wg: Vec<f64> = g.iter().zip(self.sensors.weights()).map(|(g, w)| g * w).collect();
        Ok(match &self.storage {
            Storage::Dense(a) => a.tr_mul_vec(&wg),
            Storage::MatrixFree => {
                let mut out = vec![0.0; self.num_unknowns()];
                out.par_chunks_mut(3).zip(self.space.nodes().par_iter()).for_each(|(o, node)| {
                    let c = self.field_at_unchecked(&wg, node);
                    o.copy_from_slice(c.as_slice());
                });
                out
            }
        })
    }

    /// `(A*g)(node_k)` for every node.
    pub fn adjoint_apply(&self, g: &[f64]) -> Result<Vec<Vec3>> {
        let flat = self.adjoint_apply_stacked(g)?;
        Ok(flat.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect())
    }

    fn field_at_unchecked(&self, wg: &[f64], y: &Point3) -> Vec3 {
        let v = *self.sensors.direction();
        let mut acc = Vec3::zeros();
        for (x, &wgi) in self.sensors.points().iter().zip(wg) {
            acc += kernel_unchecked(&(x - y), &v) * wgi;
        }
        -self.scale * acc
    }

    /// `(A*g)(y) = Σ_i w_i g_i (−scale K_v(x_i − y))` at an arbitrary point.
    pub fn adjoint_field_at(&self, g: &[f64], y: &Point3) -> Result<Vec3> {
        self.check_data(g)?;
        let v = *self.sensors.direction();
        let mut acc = Vec3::zeros();
        for ((x, &gi), &wi) in self.sensors.points().iter().zip(g).zip(self.sensors.weights()) {
            acc += kernel_kv(&(x - y), &v)? * (wi * gi);
        }
        Ok(-self.scale * acc)
    }

    /// The three columns of node `k`.
    pub fn node_columns(&self, k: usize) -> [Vec<f64>; 3] {
        match &self.storage {
            Storage::Dense(a) => {
                let col = |c: usize| (0..a.rows()).map(|i| a.get(i, 3 * k + c)).collect::<Vec<f64>>();
                [col(0), col(1), col(2)]
            }
            Storage::MatrixFree => {
                let v = *self.sensors.direction();
                let node = self.space.nodes()[k];
                let mut cols = [Vec::new(), Vec::new(), Vec::new()];
                for x in self.sensors.points() {
                    let kv = kernel_unchecked(&(x - node), &v);
                    for c in 0..3 {
                        cols[c].push(-self.scale * kv[c]);
                    }
                }
                cols
            }
        }
    }

    /// Content hash of `(space, sensors, scale)`, used as the cache key.
    pub fn content_hash(&self) -> String {
        content_hash(&self.space, &self.sensors, self.scale)
    }

    /// Writes the dense matrix to a binary cache file. Matrix-free models are
    /// not cached.
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let Storage::Dense(a) = &self.storage else {
            return Err(Error::Precondition("matrix-free models have no cache".into()));
        };
        let mut buf = Vec::with_capacity(64 + 8 * a.data().len());
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&hex::decode(self.content_hash()).expect("hex digest"));
        buf.extend_from_slice(&(a.rows() as u64).to_le_bytes());
        buf.extend_from_slice(&(a.cols() as u64).to_le_bytes());
        for v in a.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    /// Loads a cached matrix for `(space, sensors, scale)`; fails when the
    /// stored key does not match.
    pub fn read_cache(path: &Path, space: &DipoleGsmSpace, sensors: &SensorGrid, scale: f64) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let bad = |msg: &str| Error::Parse { path: path.display().to_string(), line: 0, msg: msg.into() };
        if bytes.len() < 56 || &bytes[..8] != CACHE_MAGIC {
            return Err(bad("not a forward-model cache"));
        }
        let key = hex::encode(&bytes[8..40]);
        if key != content_hash(space, sensors, scale) {
            return Err(bad("cache key does not match the requested model"));
        }
        let rows = u64::from_le_bytes(bytes[40..48].try_into().unwrap()) as usize;
        let cols = u64::from_le_bytes(bytes[48..56].try_into().unwrap()) as usize;
        let body = &bytes[56..];
        if body.len() != 8 * rows * cols {
            return Err(bad("truncated cache body"));
        }
        let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Self::from_matrix(space.clone(), sensors.clone(), scale, DenseMatrix::from_row_major(rows, cols, data))
    }
}

const CACHE_MAGIC: &[u8; 8] = b"MAGTVFM1";

fn content_hash(space: &DipoleGsmSpace, sensors: &SensorGrid, scale: f64) -> String {
    let mut h = Sha256::new();
    let region = space.region();
    for v in region.min.iter().chain(region.max.iter()) {
        h.update(v.to_le_bytes());
    }
    for n in space.partition().resolution() {
        h.update((n as u64).to_le_bytes());
    }
    h.update((space.num_nodes() as u64).to_le_bytes());
    for p in space.nodes() {
        for c in 0..3 {
            h.update(p[c].to_le_bytes());
        }
    }
    h.update((sensors.len() as u64).to_le_bytes());
    for (p, w) in sensors.points().iter().zip(sensors.weights()) {
        for c in 0..3 {
            h.update(p[c].to_le_bytes());
        }
        h.update(w.to_le_bytes());
    }
    for c in 0..3 {
        h.update(sensors.direction()[c].to_le_bytes());
    }
    h.update(scale.to_le_bytes());
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Atom;
    use crate::partition::{Aabb, VoxelPartition};

    fn v3(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn kernel_examples() {
        let ez = v3(0.0, 0.0, 1.0);
        assert_eq!(kernel_kv(&v3(0.0, 0.0, 1.0), &ez).unwrap(), v3(0.0, 0.0, -2.0));
        assert_eq!(kernel_kv(&v3(1.0, 0.0, 0.0), &ez).unwrap(), v3(0.0, 0.0, 1.0));
        assert_eq!(kernel_kv(&v3(0.0, 0.0, 2.0), &ez).unwrap(), v3(0.0, 0.0, -0.25));
        assert!(matches!(kernel_kv(&v3(0.0, 0.0, 0.0), &ez), Err(Error::Singularity(_))));
        assert!(matches!(kernel_kv(&v3(1e-13, 0.0, 0.0), &ez), Err(Error::Singularity(_))));
    }

    #[test]
    fn field_examples() {
        let ez = v3(0.0, 0.0, 1.0);
        let x = Point3::new(0.0, 0.0, 1.0);
        assert_eq!(field_component(&DiscreteVectorMeasure::empty(), &x, &ez, 1.0).unwrap(), 0.0);
        let mu = DiscreteVectorMeasure::new(vec![Atom::new(Point3::origin(), ez)]).unwrap();
        assert_eq!(field_component(&mu, &x, &ez, 1.0).unwrap(), 2.0);
        assert!(field_component(&mu, &Point3::origin(), &ez, 1.0).is_err());
    }

    fn one_cell_space() -> DipoleGsmSpace {
        let part = VoxelPartition::new(Aabb::new([-0.5; 3], [0.5; 3]).unwrap(), [1, 1, 1]).unwrap();
        DipoleGsmSpace::cell_centers(part)
    }

    #[test]
    fn single_sensor_single_node() {
        let space = one_cell_space();
        let ez = v3(0.0, 0.0, 1.0);
        let sensors = SensorGrid::new(vec![Point3::new(0.3, -0.2, 3.0)], vec![0.7], ez).unwrap();
        let model = assemble(&space, &sensors, 1.0).unwrap();
        let k = kernel_kv(&v3(0.3, -0.2, 3.0), &ez).unwrap();
        let a = model.matrix().unwrap();
        assert_eq!((a.rows(), a.cols()), (1, 3));
        for c in 0..3 {
            assert_eq!(a.get(0, c), -k[c]);
        }
        assert_eq!(model.apply(&[0.0; 3]).unwrap(), vec![0.0]);
        // (A*g)(node) = w g · column block.
        let g = [1.3];
        let c = model.adjoint_apply(&g).unwrap();
        for comp in 0..3 {
            assert!((c[0][comp] - 0.7 * 1.3 * a.get(0, comp)).abs() < 1e-15);
        }
        assert_eq!(model.adjoint_apply(&[0.0]).unwrap()[0], Vec3::zeros());
        let at = model.adjoint_field_at(&g, &space.nodes()[0]).unwrap();
        assert!((at - c[0]).norm() <= 1e-14 * c[0].norm());
    }

    #[test]
    fn separation_is_enforced() {
        let space = one_cell_space();
        let ez = v3(0.0, 0.0, 1.0);
        let sensors = SensorGrid::new(vec![Point3::new(0.0, 0.0, 0.6)], vec![1.0], ez).unwrap();
        assert!(matches!(assemble(&space, &sensors, 1.0), Err(Error::Config(_))));
        let opts = AssembleOptions { min_gap: Some(0.05), ..Default::default() };
        assert!(assemble_with(&space, &sensors, 1.0, opts).is_ok());
    }

    #[test]
    fn sensor_grid_validation() {
        let p = vec![Point3::new(0.0, 0.0, 1.0)];
        assert!(SensorGrid::new(p.clone(), vec![1.0], v3(0.0, 0.0, 2.0)).is_err());
        assert!(SensorGrid::new(p.clone(), vec![0.0], v3(0.0, 0.0, 1.0)).is_err());
        assert!(SensorGrid::new(p, vec![1.0, 1.0], v3(0.0, 0.0, 1.0)).is_err());
        let g = SensorGrid::planar([0.0, 1.0], [0.0, 2.0], [3, 4], 1.0, v3(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(g.len(), 12);
        assert!((g.weights().iter().sum::<f64>() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn matrix_free_matches_dense() {
        let part = VoxelPartition::new(Aabb::new([0.0; 3], [1.0, 1.0, 0.5]).unwrap(), [3, 2, 2]).unwrap();
        let space = DipoleGsmSpace::cell_centers(part);
        let sensors = SensorGrid::planar([-0.2, 1.2], [-0.2, 1.2], [4, 3], 1.5, v3(0.0, 0.6, 0.8)).unwrap();
        let dense = assemble(&space, &sensors, 1.0).unwrap();
        let free = assemble_with(&space, &sensors, 1.0, AssembleOptions { min_gap: None, memory_cap_bytes: 0 }).unwrap();
        assert!(free.is_matrix_free());
        let m: Vec<f64> = (0..dense.num_unknowns()).map(|j| (j as f64 * 0.37).sin()).collect();
        let g: Vec<f64> = (0..dense.num_sensors()).map(|i| (i as f64 * 1.1).cos()).collect();
        for (a, b) in dense.apply(&m).unwrap().iter().zip(free.apply(&m).unwrap()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
        for (a, b) in dense.adjoint_apply_stacked(&g).unwrap().iter().zip(free.adjoint_apply_stacked(&g).unwrap()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
        for k in 0..space.num_nodes() {
            let (cd, cf) = (dense.node_columns(k), free.node_columns(k));
            for c in 0..3 {
                for (a, b) in cd[c].iter().zip(&cf[c]) {
                    assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
                }
            }
        }
    }

    #[test]
    fn cache_round_trips_bit_exactly() {
        let part = VoxelPartition::new(Aabb::new([0.0; 3], [1.0, 1.0, 0.5]).unwrap(), [2, 2, 1]).unwrap();
        let space = DipoleGsmSpace::cell_centers(part);
        let sensors = SensorGrid::planar([0.0, 1.0], [0.0, 1.0], [3, 3], 2.0, v3(0.0, 0.0, 1.0)).unwrap();
        let model = assemble(&space, &sensors, MU0_OVER_4PI).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(format!("{}.bin", model.content_hash()));
        model.write_cache(&path).unwrap();
        let back = ForwardModel::read_cache(&path, &space, &sensors, MU0_OVER_4PI).unwrap();
        let (a, b) = (model.matrix().unwrap().data(), back.matrix().unwrap().data());
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(ForwardModel::read_cache(&path, &space, &sensors, 1.0).is_err());
    }
}

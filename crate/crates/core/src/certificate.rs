//! Optimality certificates for minimizers over dipole spaces.
//!
//! With `c_k = (A*(f − Aμ))(x_k)`, a node-supported `μ = Σ m_k δ_{x_k}`
//! minimizes `‖f − Aμ‖²_H + λ‖μ‖_TV` over the space exactly when
//!
//! ```text
//! c_k = (λ/2) m_k/|m_k|   for every active node,
//! |c_k| ≤ λ/2             for every node.
//! ```
//!
//! [`certificate_check`] measures how far a candidate is from satisfying
//! these relations. All tolerances are relative to `λ/2`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::ForwardModel;
use crate::measure::{DiscreteVectorMeasure, Point3, Vec3};
use crate::partition::{Aabb, DipoleGsmSpace};

/// Default angular tolerance (radians) for "parallel" moments.
pub const DEFAULT_ANGULAR_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateReport {
    pub lambda: f64,
    pub tol: f64,
    /// `c_k` for every node.
    pub duals: Vec<[f64; 3]>,
    /// Nodes with nonzero moment.
    pub active: Vec<usize>,
    pub tv_norm: f64,
    /// `max_k (|c_k| − λ/2)₊`.
    pub bound_gap: f64,
    /// `max_k |c_k| − λ/2`, negative when every bound holds strictly.
    pub bound_margin: f64,
    /// `max_{active k} |c_k − (λ/2) m_k/|m_k||`, 0 without active nodes.
    pub alignment_gap: f64,
    /// `⟨μ, A*(f − Aμ)⟩ = Σ_k m_k·c_k`.
    pub pairing: f64,
    /// `|⟨μ, A*(f − Aμ)⟩ − (λ/2)‖μ‖_TV|`.
    pub pairing_residual: f64,
    /// Inactive nodes with `||c_k| − λ/2| ≤ tol·λ/2` (on the level set but
    /// carrying no mass).
    pub inactive_on_level_set: usize,
    pub pass: bool,
}

impl CertificateReport {
    /// Worst violation relative to `λ/2`, with the pairing residual scaled by
    /// `1 + ‖μ‖_TV`.
    pub fn relative_gap(&self) -> f64 {
        let half = 0.5 * self.lambda;
        self.bound_gap
            .max(self.alignment_gap)
            .max(self.pairing_residual / (1.0 + self.tv_norm))
            / half
    }

    pub fn dual(&self, k: usize) -> Vec3 {
        Vec3::from(self.duals[k])
    }

    pub fn dual_norm(&self, k: usize) -> f64 {
        self.dual(k).norm()
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.active.binary_search(&k).is_ok()
    }
}

/// Builds the report from stacked moments `m` and stacked duals `c`.
pub fn certificate_from_duals(lambda: f64, m: &[f64], c: &[f64], tol: f64) -> CertificateReport {
    let half = 0.5 * lambda;
    let mut rep = CertificateReport {
        lambda,
        tol,
        duals: c.chunks_exact(3).map(|b| [b[0], b[1], b[2]]).collect(),
        active: Vec::new(),
        tv_norm: 0.0,
        bound_gap: 0.0,
        bound_margin: f64::NEG_INFINITY,
        alignment_gap: 0.0,
        pairing: 0.0,
        pairing_residual: 0.0,
        inactive_on_level_set: 0,
        pass: false,
    };
    for (k, (mb, cb)) in m.chunks_exact(3).zip(c.chunks_exact(3)).enumerate() {
        let mk = Vec3::new(mb[0], mb[1], mb[2]);
        let ck = Vec3::new(cb[0], cb[1], cb[2]);
        let cn = ck.norm();
        rep.bound_margin = rep.bound_margin.max(cn - half);
        let mn = mk.norm();
        if mn > 0.0 {
            rep.active.push(k);
            rep.tv_norm += mn;
            rep.pairing += mk.dot(&ck);
            rep.alignment_gap = rep.alignment_gap.max((ck - mk * (half / mn)).norm());
        } else if (cn - half).abs() <= tol * half {
            rep.inactive_on_level_set += 1;
        }
    }
    if rep.duals.is_empty() {
        rep.bound_margin = -half;
    }
    rep.bound_gap = rep.bound_margin.max(0.0);
    rep.pairing_residual = (rep.pairing - half * rep.tv_norm).abs();
    rep.pass = rep.bound_gap <= tol * half
        && rep.alignment_gap <= tol * half
        && rep.pairing_residual <= tol * half * (1.0 + rep.tv_norm);
    rep
}

fn check_lambda_tol(lambda: f64, tol: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Precondition(format!("λ must be positive, got {lambda}")));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Precondition(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

/// Certificate for stacked node moments.
pub fn certificate_stacked(model: &ForwardModel, f: &[f64], lambda: f64, m: &[f64], tol: f64) -> Result<CertificateReport> {
    check_lambda_tol(lambda, tol)?;
    let r = crate::solver::residual(model, f, m)?;
    let c = model.adjoint_apply_stacked(&r)?;
    Ok(certificate_from_duals(lambda, m, &c, tol))
}

/// Checks the optimality relations for a node-supported measure. Atoms off
/// the node set are a domain error; project first.
pub fn certificate_check(
    model: &ForwardModel,
    f: &[f64],
    lambda: f64,
    mu: &DiscreteVectorMeasure,
    tol: f64,
) -> Result<CertificateReport> {
    let m = model.space().stack(mu)?;
    certificate_stacked(model, f, lambda, &m, tol)
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    /// `‖A(μ − μ′)‖_H ≤ tol (1 + ‖Aμ‖_H)`.
    pub same_image: bool,
    /// Every `m′_k` is a nonnegative multiple of `m_k` where `m_k ≠ 0`, and
    /// of `c_k` with `|c_k| = λ/2` where `m_k = 0`.
    pub condition_b: bool,
    pub image_distance: f64,
    /// `|⟨μ′, A*(f − Aμ)⟩ − (λ/2)‖μ′‖_TV|`.
    pub pairing_residual: f64,
    /// Largest angle found between a moment of `μ′` and its reference direction.
    pub max_angle: f64,
}

fn angle(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Compares a second candidate `μ′` against a certified minimizer `μ`.
pub fn equivalence_check(
    model: &ForwardModel,
    f: &[f64],
    lambda: f64,
    mu: &DiscreteVectorMeasure,
    mu_prime: &DiscreteVectorMeasure,
    tol: f64,
) -> Result<EquivalenceReport> {
    equivalence_check_with(model, f, lambda, mu, mu_prime, tol, DEFAULT_ANGULAR_TOL)
}

pub fn equivalence_check_with(
    model: &ForwardModel,
    f: &[f64],
    lambda: f64,
    mu: &DiscreteVectorMeasure,
    mu_prime: &DiscreteVectorMeasure,
    tol: f64,
    angular_tol: f64,
) -> Result<EquivalenceReport> {
    let m = model.space().stack(mu)?;
    let mp = model.space().stack(mu_prime)?;
    let rep = certificate_stacked(model, f, lambda, &m, tol)?;
    if !rep.pass {
        return Err(Error::Precondition(format!(
            "reference measure fails its certificate (gap {:.3e})",
            rep.relative_gap()
        )));
    }
    let half = 0.5 * lambda;
    let am = model.apply(&m)?;
    let diff: Vec<f64> = m.iter().zip(&mp).map(|(a, b)| a - b).collect();
    let ad = model.apply(&diff)?;
    let image_distance = model.norm(&ad);
    let same_image = image_distance <= tol * (1.0 + model.norm(&am));

    let mut condition_b = true;
    let mut max_angle: f64 = 0.0;
    let mut pairing = 0.0;
    let mut tv_prime = 0.0;
    for k in 0..model.num_nodes() {
        let mk = Vec3::new(m[3 * k], m[3 * k + 1], m[3 * k + 2]);
        let mpk = Vec3::new(mp[3 * k], mp[3 * k + 1], mp[3 * k + 2]);
        let ck = rep.dual(k);
        pairing += mpk.dot(&ck);
        tv_prime += mpk.norm();
        if mpk == Vec3::zeros() {
            continue;
        }
        if mk != Vec3::zeros() {
            let a = angle(&mpk, &mk);
            max_angle = max_angle.max(a);
            condition_b &= a <= angular_tol;
        } else {
            let a = angle(&mpk, &ck);
            max_angle = max_angle.max(a);
            condition_b &= a <= angular_tol && (ck.norm() - half).abs() <= tol * half;
        }
    }
    Ok(EquivalenceReport {
        same_image,
        condition_b,
        image_distance,
        pairing_residual: (pairing - half * tv_prime).abs(),
        max_angle,
    })
}

/// Dual-field magnitudes `|A*(f − Aμ)|` on a lattice finer than the node grid.
///
/// The lattice has spacing `h/factor` per axis (`h` the cell size) and
/// includes the region faces, so for even `factor` every cell center, and
/// every node of a coarser nested level, is a sample point.
#[derive(Debug, Clone)]
pub struct LevelSetSample {
    region: Aabb,
    counts: [usize; 3],
    spacing: [f64; 3],
    points: Vec<Point3>,
    values: Vec<f64>,
}

impl LevelSetSample {
    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Lattice spacing diagonal.
    pub fn spacing_diagonal(&self) -> f64 {
        let s = self.spacing;
        (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Sampled value at a lattice point, `None` if `p` is not one.
    pub fn value_at(&self, p: &Point3) -> Option<f64> {
        let mut idx = [0usize; 3];
        for c in 0..3 {
            let t = (p[c] - self.region.min[c]) / self.spacing[c];
            let j = t.round();
            if (t - j).abs() > 1e-6 || j < 0.0 || j as usize >= self.counts[c] {
                return None;
            }
            idx[c] = j as usize;
        }
        Some(self.values[idx[0] + self.counts[0] * (idx[1] + self.counts[1] * idx[2])])
    }
}

/// Samples `|A*(f − Aμ)|` at lattice spacing `h/factor`; `factor` must be
/// even and at least 2.
pub fn dual_field_sample(
    model: &ForwardModel,
    f: &[f64],
    mu: &DiscreteVectorMeasure,
    factor: usize,
) -> Result<LevelSetSample> {
    let m = model.space().stack(mu)?;
    let r = crate::solver::residual(model, f, &m)?;
    dual_field_sample_residual(model, &r, factor)
}

/// [`dual_field_sample`] from a precomputed residual `f − Aμ`.
pub fn dual_field_sample_residual(model: &ForwardModel, residual: &[f64], factor: usize) -> Result<LevelSetSample> {
    if factor < 2 || !factor.is_multiple_of(2) {
        return Err(Error::Precondition(format!("sample factor must be even and ≥ 2, got {factor}")));
    }
    let part = model.space().partition();
    let region = *part.region();
    let res = part.resolution();
    let h = part.cell_size();
    let counts = [res[0] * factor + 1, res[1] * factor + 1, res[2] * factor + 1];
    let spacing = [h[0] / factor as f64, h[1] / factor as f64, h[2] / factor as f64];
    let coord = |c: usize, j: usize| {
        if j + 1 == counts[c] {
            region.max[c]
        } else {
            region.min[c] + j as f64 * spacing[c]
        }
    };
    let mut points = Vec::with_capacity(counts.iter().product());
    for k in 0..counts[2] {
        for j in 0..counts[1] {
            for i in 0..counts[0] {
                points.push(Point3::new(coord(0, i), coord(1, j), coord(2, k)));
            }
        }
    }
    let values = points
        .par_iter()
        .map(|p| model.adjoint_field_at(residual, p).map(|v| v.norm()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(LevelSetSample { region, counts, spacing, points, values })
}

/// Sample points with `|g(x) − α| ≤ band`. An empty result is allowed.
pub fn level_set_extract(sample: &LevelSetSample, alpha: f64, band: f64) -> Result<Vec<Point3>> {
    if !(band > 0.0) {
        return Err(Error::Precondition(format!("band must be positive, got {band}")));
    }
    Ok(sample
        .points
        .iter()
        .zip(&sample.values)
        .filter(|(_, g)| (*g - alpha).abs() <= band)
        .map(|(p, _)| *p)
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct EliminationReport {
    /// Nodes whose sampled field is below `λ/2 − ε`.
    pub eliminated: Vec<usize>,
    /// Eliminated nodes that nevertheless carry mass (should be empty when
    /// the closeness hypothesis holds).
    pub active_overlap: Vec<usize>,
    /// `max_k ||c_k| − g(x_k)|` over nodes found in the sample.
    pub max_field_gap: f64,
    /// `max_field_gap < ε`.
    pub hypothesis_holds: bool,
    /// Nodes that are not lattice points of the sample.
    pub unsampled: usize,
}

/// Lists nodes provably inactive: a reference field `g` below `λ/2 − ε` at a
/// node, together with `|c_k|` within `ε` of `g`, forces `m_k = 0`.
pub fn atom_elimination_check(
    report: &CertificateReport,
    space: &DipoleGsmSpace,
    g_fine: &LevelSetSample,
    lambda: f64,
    eps: f64,
) -> Result<EliminationReport> {
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!("ε must be positive, got {eps}")));
    }
    if report.duals.len() != space.num_nodes() {
        return Err(Error::Dimension { expected: space.num_nodes(), got: report.duals.len() });
    }
    let half = 0.5 * lambda;
    let mut out = EliminationReport {
        eliminated: Vec::new(),
        active_overlap: Vec::new(),
        max_field_gap: 0.0,
        hypothesis_holds: true,
        unsampled: 0,
    };
    for (k, node) in space.nodes().iter().enumerate() {
        let Some(g) = g_fine.value_at(node) else {
            out.unsampled += 1;
            continue;
        };
        out.max_field_gap = out.max_field_gap.max((report.dual_norm(k) - g).abs());
        if g < half - eps {
            out.eliminated.push(k);
            if report.is_active(k) {
                out.active_overlap.push(k);
            }
        }
    }
    out.hypothesis_holds = out.max_field_gap < eps;
    Ok(out)
}

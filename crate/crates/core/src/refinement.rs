//! Nested refinement runs and the approximation quantities attached to them.
//!
//! A run solves the problem on `V_1 ⊂ … ⊂ V_L`, warm-starting each level
//! from the previous solution, then compares every level against the finest
//! one, which stands in for the continuous minimizer.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::certificate::{self, LevelSetSample};
use crate::error::{Error, Result};
use crate::forward::{self, AssembleOptions, ForwardModel, SensorGrid};
use crate::measure::{DiscreteVectorMeasure, Point3};
use crate::metric::{directed_hausdorff, hausdorff_distance, r_distance_proxy, TestFunctionFamily};
use crate::partition::{project_onto_gsm, Aabb, DipoleGsmSpace, VoxelPartition};
use crate::solver::{self, ConvergedBy, SolveOptions, SolveResult};

/// Relative tolerance applied to both sides of the audited inequalities.
pub const AUDIT_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementPlan {
    pub base: [usize; 3],
    pub levels: usize,
    #[serde(default = "default_factor")]
    pub factor: usize,
}

fn default_factor() -> usize {
    2
}

impl RefinementPlan {
    pub fn new(base: [usize; 3], levels: usize, factor: usize) -> Result<Self> {
        let plan = RefinementPlan { base, levels, factor };
        plan.validate()?;
        Ok(plan)
    }

    /// A single level is accepted as a degenerate plan.
    pub fn validate(&self) -> Result<()> {
        if self.base.contains(&0) {
            return Err(Error::Config("base resolution must be positive on every axis".into()));
        }
        if self.levels == 0 {
            return Err(Error::Config("a refinement plan needs at least one level".into()));
        }
        if self.factor < 2 {
            return Err(Error::Config(format!("refinement factor must be ≥ 2, got {}", self.factor)));
        }
        Ok(())
    }

    /// The nested spaces `V_1 ⊂ … ⊂ V_L` over `region`.
    pub fn spaces(&self, region: Aabb) -> Result<Vec<DipoleGsmSpace>> {
        self.validate()?;
        let mut part = VoxelPartition::new(region, self.base)?;
        let mut out = vec![DipoleGsmSpace::cell_centers(part.clone())];
        for _ in 1..self.levels {
            part = part.refined(self.factor)?;
            let next = DipoleGsmSpace::nested(part.clone(), out.last().unwrap())?;
            out.push(next);
        }
        Ok(out)
    }
}

/// Components of the projection bound on `κ(V, μ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaBound {
    /// `‖A(μ − Pμ)‖_H`.
    pub image_term: f64,
    /// `| ‖μ‖_TV − ‖Pμ‖_TV |`.
    pub tv_term: f64,
}

impl KappaBound {
    pub fn value(&self) -> f64 {
        self.image_term.max(self.tv_term)
    }
}

/// Upper bound on `κ(V, μ)` obtained at `ν = P_V μ`.
pub fn kappa_bound(mu: &DiscreteVectorMeasure, space: &DipoleGsmSpace, sensors: &SensorGrid, scale: f64) -> Result<KappaBound> {
    let proj = project_onto_gsm(mu, space)?;
    let diff = mu.sub(&proj)?;
    let image = forward::forward_measure(sensors, scale, &diff)?;
    Ok(KappaBound {
        image_term: sensors.norm(&image),
        tv_term: (mu.tv_norm() - proj.tv_norm()).abs(),
    })
}

/// `max{‖A(μ − Pμ)‖_H, |‖μ‖ − ‖Pμ‖|}` for the space and sensors of `model`.
pub fn kappa_upper_bound(mu: &DiscreteVectorMeasure, model: &ForwardModel) -> Result<f64> {
    Ok(kappa_bound(mu, model.space(), model.sensors(), model.scale())?.value())
}

/// `δ(g, V) = max_k |(A*g)(node_k)|`.
pub fn delta(g: &[f64], model: &ForwardModel) -> Result<f64> {
    if g.len() != model.num_sensors() {
        return Err(Error::Dimension { expected: model.num_sensors(), got: g.len() });
    }
    let c = model.adjoint_apply_stacked(g)?;
    Ok(solver::max_block_norm(&c))
}

/// `d_λ = κ (2‖f̃‖ + 4‖f‖ + κ + λ)`.
pub fn d_lambda(kappa: f64, norm_f: f64, norm_ftilde: f64, lambda: f64) -> f64 {
    kappa * (2.0 * norm_ftilde + 4.0 * norm_f + kappa + lambda)
}

/// Scalars entering the audit for one level. All objectives are shifted by
/// the squared data norm: `F_g(μ) = ‖Aμ‖² − 2⟨g, Aμ⟩ + λ‖μ‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditInputs {
    pub lambda: f64,
    pub norm_f: f64,
    pub norm_ftilde: f64,
    /// `F_f̃(μ^V)`.
    pub level_objective: f64,
    /// `‖μ^V‖_TV`.
    pub level_tv: f64,
    /// `F_f̃(μ_ref)`.
    pub reference_objective_tilde: f64,
    /// `F_f(μ_ref)`.
    pub reference_objective: f64,
    /// `‖μ_ref‖_TV`.
    pub reference_tv: f64,
    pub kappa: f64,
    /// `δ(f̃ − f, V)`.
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditReport {
    pub fncond3_ok: bool,
    pub fncond2_ok: bool,
    /// `F_f̃(μ_ref) + d_λ − F_f̃(μ^V)`.
    pub fncond3_slack: f64,
    /// `F_f̃(μ^V) − F_f(μ_ref) + 2δ‖μ^V‖`.
    pub fncond2_lower_slack: f64,
    /// `2δ‖μ_ref‖ + d_λ − (F_f̃(μ^V) − F_f(μ_ref))`.
    pub fncond2_upper_slack: f64,
    pub d_lambda: f64,
    pub tolerance: f64,
}

/// Checks
/// `F_f̃(μ^V) ≤ F_f̃(μ_ref) + d_λ` and
/// `−2δ‖μ^V‖ ≤ F_f̃(μ^V) − F_f(μ_ref) ≤ 2δ‖μ_ref‖ + d_λ`.
pub fn audit_from(inputs: &AuditInputs) -> AuditReport {
    let d = d_lambda(inputs.kappa, inputs.norm_f, inputs.norm_ftilde, inputs.lambda);
    let tolerance = AUDIT_REL_TOL
        * (1.0 + inputs.norm_f.powi(2) + inputs.norm_ftilde.powi(2) + inputs.reference_objective.abs());
    let fncond3_slack = inputs.reference_objective_tilde + d - inputs.level_objective;
    let mid = inputs.level_objective - inputs.reference_objective;
    let fncond2_lower_slack = mid + 2.0 * inputs.delta * inputs.level_tv;
    let fncond2_upper_slack = 2.0 * inputs.delta * inputs.reference_tv + d - mid;
    AuditReport {
        fncond3_ok: fncond3_slack >= -tolerance,
        fncond2_ok: fncond2_lower_slack >= -tolerance && fncond2_upper_slack >= -tolerance,
        fncond3_slack,
        fncond2_lower_slack,
        fncond2_upper_slack,
        d_lambda: d,
        tolerance,
    }
}

fn shifted_objective_of(sensors: &SensorGrid, g: &[f64], a_mu: &[f64], lambda: f64, tv: f64) -> f64 {
    sensors.inner(a_mu, a_mu) - 2.0 * sensors.inner(g, a_mu) + lambda * tv
}

/// Audits a level solution `m` (stacked on the space of `model`) against a
/// reference minimizer.
pub fn inequality_audit(
    model: &ForwardModel,
    f: &[f64],
    f_tilde: &[f64],
    lambda: f64,
    m: &[f64],
    reference: Option<&DiscreteVectorMeasure>,
) -> Result<AuditReport> {
    let reference = reference.ok_or_else(|| Error::Precondition("the audit needs a reference solution".into()))?;
    for g in [f, f_tilde] {
        if g.len() != model.num_sensors() {
            return Err(Error::Dimension { expected: model.num_sensors(), got: g.len() });
        }
    }
    let sensors = model.sensors();
    let a_level = model.apply(m)?;
    let level_tv = solver::block_norms_sum(m);
    let a_ref = forward::forward_measure(sensors, model.scale(), reference)?;
    let ref_tv = reference.tv_norm();
    let diff: Vec<f64> = f_tilde.iter().zip(f).map(|(a, b)| a - b).collect();
    Ok(audit_from(&AuditInputs {
        lambda,
        norm_f: sensors.norm(f),
        norm_ftilde: sensors.norm(f_tilde),
        level_objective: shifted_objective_of(sensors, f_tilde, &a_level, lambda, level_tv),
        level_tv,
        reference_objective_tilde: shifted_objective_of(sensors, f_tilde, &a_ref, lambda, ref_tv),
        reference_objective: shifted_objective_of(sensors, f, &a_ref, lambda, ref_tv),
        reference_tv: ref_tv,
        kappa: kappa_upper_bound(reference, model)?,
        delta: delta(&diff, model)?,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupportDistances {
    /// `max_{x ∈ supp μ_n} d(x, L)`.
    pub dist_to_levelset: f64,
    /// `max_{x ∈ supp μ_ref} d(x, supp μ_n)`.
    pub dist_from_ref_support: f64,
    /// Set when a distance is infinite because the target set is empty.
    pub flagged: bool,
}

/// Support distances of each level to the sampled level set and from the
/// reference support. A supremum over an empty set is 0; a distance to an
/// empty set is `∞` and flagged.
pub fn support_convergence(level_supports: &[Vec<Point3>], reference_support: &[Point3], level_set: &[Point3]) -> Vec<SupportDistances> {
    level_supports
        .iter()
        .map(|supp| {
            let a = directed_hausdorff(supp, level_set);
            let b = directed_hausdorff(reference_support, supp);
            SupportDistances { dist_to_levelset: a, dist_from_ref_support: b, flagged: !(a.is_finite() && b.is_finite()) }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinementOptions {
    pub solve: SolveOptions,
    /// Lattice refinement of the finest dual-field sample (even, ≥ 2).
    pub sample_factor: usize,
    /// Level-set band half-width relative to `λ/2`.
    pub band_rel: f64,
    pub warm_start: bool,
    pub test_functions: usize,
    /// Minimum sensor-to-region distance; `None` uses each level's mesh size.
    pub min_gap: Option<f64>,
    /// Also sample the dual field of every level (for export).
    pub level_samples: bool,
}

impl Default for RefinementOptions {
    fn default() -> Self {
        RefinementOptions {
            solve: SolveOptions::default(),
            sample_factor: 2,
            band_rel: 1e-3,
            warm_start: true,
            test_functions: 64,
            min_gap: None,
            level_samples: false,
        }
    }
}

/// Data for a run: `f` is the reference data; `level_data`, when present,
/// gives a perturbed `f̃_n` per level.
#[derive(Debug, Clone)]
pub struct RefinementData<'a> {
    pub region: Aabb,
    pub sensors: &'a SensorGrid,
    pub scale: f64,
    pub f: &'a [f64],
    pub level_data: Option<&'a [Vec<f64>]>,
    pub lambda: f64,
}

/// One row per level. Quantities that do not apply are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub level: usize,
    pub resolution: [usize; 3],
    pub num_nodes: usize,
    pub mesh_size: f64,
    /// `‖f̃_n − Aμ_n‖² + λ‖μ_n‖`.
    pub objective: f64,
    pub shifted_objective: f64,
    pub tv_norm: f64,
    pub active_nodes: usize,
    pub cert_gap: f64,
    pub converged_by: ConvergedBy,
    pub iterations: usize,
    pub r_distance_to_finest: f64,
    pub hausdorff_to_previous: Option<f64>,
    pub dist_to_levelset: f64,
    pub dist_from_ref_support: f64,
    pub kappa_upper: f64,
    pub delta: f64,
    pub d_lambda: f64,
    pub fncond3_ok: bool,
    pub fncond2_ok: bool,
    pub fncond3_slack: f64,
    pub fncond2_lower_slack: f64,
    pub fncond2_upper_slack: f64,
    pub flags: Vec<String>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub lambda: f64,
    pub plan: RefinementPlan,
    pub rows: Vec<TraceRow>,
}

pub const TRACE_CSV_COLUMNS: [&str; 25] = [
    "level",
    "nx",
    "ny",
    "nz",
    "num_nodes",
    "mesh_size",
    "objective",
    "shifted_objective",
    "tv_norm",
    "active_nodes",
    "cert_gap",
    "converged_by",
    "iterations",
    "r_distance_to_finest",
    "hausdorff_to_previous",
    "dist_to_levelset",
    "dist_from_ref_support",
    "kappa_upper",
    "delta",
    "d_lambda",
    "fncond3_ok",
    "fncond2_ok",
    "fncond3_slack",
    "fncond2_slack",
    "flags",
];

impl RefinementTrace {
    /// CSV in the column order of [`TRACE_CSV_COLUMNS`]; `fncond2_slack` is
    /// the smaller of the two one-sided slacks and missing values are empty.
    /// Wall time is left out so the file is reproducible.
    pub fn to_csv(&self) -> String {
        let f = crate::io::fmt_f64;
        let mut out = String::new();
        let _ = writeln!(out, "{}", TRACE_CSV_COLUMNS.join(","));
        for r in &self.rows {
            let fields = [
                r.level.to_string(),
                r.resolution[0].to_string(),
                r.resolution[1].to_string(),
                r.resolution[2].to_string(),
                r.num_nodes.to_string(),
                f(r.mesh_size),
                f(r.objective),
                f(r.shifted_objective),
                f(r.tv_norm),
                r.active_nodes.to_string(),
                f(r.cert_gap),
                r.converged_by.as_str().to_string(),
                r.iterations.to_string(),
                f(r.r_distance_to_finest),
                r.hausdorff_to_previous.map(f).unwrap_or_default(),
                f(r.dist_to_levelset),
                f(r.dist_from_ref_support),
                f(r.kappa_upper),
                f(r.delta),
                f(r.d_lambda),
                r.fncond3_ok.to_string(),
                r.fncond2_ok.to_string(),
                f(r.fncond3_slack),
                f(r.fncond2_lower_slack.min(r.fncond2_upper_slack)),
                r.flags.join(";"),
            ];
            let _ = writeln!(out, "{}", fields.join(","));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn all_audits_pass(&self) -> bool {
        self.rows.iter().all(|r| r.fncond3_ok && r.fncond2_ok)
    }
}

#[derive(Debug, Clone)]
pub struct LevelOutcome {
    pub space: DipoleGsmSpace,
    pub data: Vec<f64>,
    pub solution: SolveResult,
    pub sample: Option<LevelSetSample>,
}

#[derive(Debug, Clone)]
pub struct RefinementOutcome {
    pub trace: RefinementTrace,
    pub levels: Vec<LevelOutcome>,
    /// Finest-level minimizer for the reference data `f`.
    pub reference: DiscreteVectorMeasure,
    /// Dual field of the reference on the finest lattice.
    pub reference_sample: LevelSetSample,
    pub level_set: Vec<Point3>,
}

fn support(mu: &DiscreteVectorMeasure) -> Vec<Point3> {
    mu.atoms().iter().map(|a| a.location).collect()
}

/// Solves every level of `plan`, then fills the trace against the finest
/// level. Levels that stop without a certificate are flagged, not fatal.
pub fn run_refinement(plan: &RefinementPlan, data: &RefinementData<'_>, opts: &RefinementOptions) -> Result<RefinementOutcome> {
    plan.validate()?;
    opts.solve.validate()?;
    if !(opts.band_rel > 0.0) {
        return Err(Error::Config(format!("band_rel must be positive, got {}", opts.band_rel)));
    }
    if data.f.len() != data.sensors.len() {
        return Err(Error::Dimension { expected: data.sensors.len(), got: data.f.len() });
    }
    if let Some(ld) = data.level_data {
        if ld.len() != plan.levels {
            return Err(Error::Dimension { expected: plan.levels, got: ld.len() });
        }
    }
    let lambda = data.lambda;
    let spaces = plan.spaces(data.region)?;
    let asm = AssembleOptions { min_gap: opts.min_gap, ..AssembleOptions::default() };

    struct LevelNumbers {
        delta: f64,
        norm_ftilde: f64,
        shifted: f64,
        wall: f64,
    }
    let mut levels: Vec<LevelOutcome> = Vec::with_capacity(plan.levels);
    let mut numbers: Vec<LevelNumbers> = Vec::with_capacity(plan.levels);
    let mut finest_model = None;
    for (n, space) in spaces.into_iter().enumerate() {
        let start = Instant::now();
        let model = forward::assemble_with(&space, data.sensors, data.scale, asm)?;
        let f_n: Vec<f64> = match data.level_data {
            Some(ld) => ld[n].clone(),
            None => data.f.to_vec(),
        };
        let warm = match (opts.warm_start, levels.last()) {
            (true, Some(prev)) => Some(space.stack(&project_onto_gsm(&prev.solution.measure, &space)?)?),
            _ => None,
        };
        let solution = solver::solve_from(&model, &f_n, lambda, &opts.solve, warm.as_deref())?;
        if solution.converged_by != ConvergedBy::Certificate {
            log::warn!("level {} stopped by {:?}", n + 1, solution.converged_by);
        }
        let diff: Vec<f64> = f_n.iter().zip(data.f).map(|(a, b)| a - b).collect();
        let delta_n = delta(&diff, &model)?;
        let norm_ftilde = data.sensors.norm(&f_n);
        let sample = if opts.level_samples {
            let r = solver::residual(&model, &f_n, &solution.moments)?;
            Some(certificate::dual_field_sample_residual(&model, &r, opts.sample_factor)?)
        } else {
            None
        };
        numbers.push(LevelNumbers {
            delta: delta_n,
            norm_ftilde,
            shifted: solution.objective - norm_ftilde * norm_ftilde,
            wall: start.elapsed().as_secs_f64(),
        });
        levels.push(LevelOutcome { space, data: f_n, solution, sample });
        if n + 1 == plan.levels {
            finest_model = Some(model);
        }
    }
    let finest_model = finest_model.expect("plan has at least one level");
    let finest = levels.last().unwrap();

    let reference = if data.level_data.is_some() {
        let warm = finest.solution.moments.clone();
        let sol = solver::solve_from(&finest_model, data.f, lambda, &opts.solve, Some(&warm))?;
        sol.measure
    } else {
        finest.solution.measure.clone()
    };
    let ref_m = finest_model.space().stack(&reference)?;
    let ref_r = solver::residual(&finest_model, data.f, &ref_m)?;
    let reference_sample = certificate::dual_field_sample_residual(&finest_model, &ref_r, opts.sample_factor)?;
    let half = 0.5 * lambda;
    let level_set = certificate::level_set_extract(&reference_sample, half, opts.band_rel * half)?;
    drop(finest_model);

    let phi = TestFunctionFamily::new(data.region, opts.test_functions);
    let supports: Vec<Vec<Point3>> = levels.iter().map(|l| support(&l.solution.measure)).collect();
    let ref_support = support(&reference);
    let dists = support_convergence(&supports, &ref_support, &level_set);

    let norm_f = data.sensors.norm(data.f);
    let a_ref = forward::forward_measure(data.sensors, data.scale, &reference)?;
    let ref_tv = reference.tv_norm();
    let ref_obj = shifted_objective_of(data.sensors, data.f, &a_ref, lambda, ref_tv);

    let mut rows = Vec::with_capacity(levels.len());
    for (n, (lvl, num)) in levels.iter().zip(&numbers).enumerate() {
        let sol = &lvl.solution;
        let kappa = kappa_bound(&reference, &lvl.space, data.sensors, data.scale)?.value();
        let ref_obj_tilde = if data.level_data.is_some() {
            shifted_objective_of(data.sensors, &lvl.data, &a_ref, lambda, ref_tv)
        } else {
            ref_obj
        };
        let audit = audit_from(&AuditInputs {
            lambda,
            norm_f,
            norm_ftilde: num.norm_ftilde,
            level_objective: num.shifted,
            level_tv: sol.measure.tv_norm(),
            reference_objective_tilde: ref_obj_tilde,
            reference_objective: ref_obj,
            reference_tv: ref_tv,
            kappa,
            delta: num.delta,
        });
        let mut flags = Vec::new();
        match sol.converged_by {
            ConvergedBy::Certificate => {}
            other => flags.push(format!("stopped_by_{}", other.as_str())),
        }
        if dists[n].flagged {
            flags.push("empty_support_target".to_string());
        }
        if level_set.is_empty() && !supports[n].is_empty() {
            flags.push("empty_level_set".to_string());
        }
        if !audit.fncond3_ok {
            flags.push("fncond3_failed".to_string());
        }
        if !audit.fncond2_ok {
            flags.push("fncond2_failed".to_string());
        }
        let part = lvl.space.partition();
        rows.push(TraceRow {
            level: n + 1,
            resolution: part.resolution(),
            num_nodes: lvl.space.num_nodes(),
            mesh_size: lvl.space.mesh_size(),
            objective: sol.objective,
            shifted_objective: num.shifted,
            tv_norm: sol.measure.tv_norm(),
            active_nodes: sol.measure.len(),
            cert_gap: sol.certificate.relative_gap(),
            converged_by: sol.converged_by,
            iterations: sol.iterations,
            r_distance_to_finest: r_distance_proxy(&sol.measure, &reference, &phi),
            hausdorff_to_previous: (n > 0).then(|| hausdorff_distance(&supports[n], &supports[n - 1])),
            dist_to_levelset: dists[n].dist_to_levelset,
            dist_from_ref_support: dists[n].dist_from_ref_support,
            kappa_upper: kappa,
            delta: num.delta,
            d_lambda: audit.d_lambda,
            fncond3_ok: audit.fncond3_ok,
            fncond2_ok: audit.fncond2_ok,
            fncond3_slack: audit.fncond3_slack,
            fncond2_lower_slack: audit.fncond2_lower_slack,
            fncond2_upper_slack: audit.fncond2_upper_slack,
            flags,
            wall_time_s: num.wall,
        });
    }
    for r in &rows {
        if !(r.fncond3_ok && r.fncond2_ok) {
            log::error!("inequality audit failed at level {}: {:?}", r.level, r.flags);
        }
    }
    Ok(RefinementOutcome {
        trace: RefinementTrace { lambda, plan: *plan, rows },
        levels,
        reference,
        reference_sample,
        level_set,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Atom, Vec3};

    fn setup() -> (Aabb, SensorGrid) {
        let region = Aabb::new([0.0, 0.0, 0.0], [1.0, 1.0, 0.5]).unwrap();
        let sensors = SensorGrid::planar([-0.2, 1.2], [-0.2, 1.2], [6, 6], 1.5, Vec3::z()).unwrap();
        (region, sensors)
    }

    #[test]
    fn d_lambda_examples() {
        assert_eq!(d_lambda(0.0, 3.0, 2.0, 1.0), 0.0);
        assert_eq!(d_lambda(1.0, 0.0, 0.0, 1.0), 2.0);
        let base = d_lambda(0.3, 1.0, 2.0, 0.5);
        assert!(d_lambda(0.31, 1.0, 2.0, 0.5) > base);
        assert!(d_lambda(0.3, 1.1, 2.0, 0.5) > base);
        assert!(d_lambda(0.3, 1.0, 2.1, 0.5) > base);
        assert!(d_lambda(0.3, 1.0, 2.0, 0.6) > base);
    }

    #[test]
    fn kappa_examples() {
        let (region, sensors) = setup();
        let space = DipoleGsmSpace::cell_centers(VoxelPartition::new(region, [2, 2, 1]).unwrap());
        let model = forward::assemble(&space, &sensors, 1.0).unwrap();
        let on_node = DiscreteVectorMeasure::new(vec![Atom::new(space.nodes()[1], Vec3::new(0.0, 1.0, 2.0))]).unwrap();
        assert_eq!(kappa_upper_bound(&on_node, &model).unwrap(), 0.0);

        let off = DiscreteVectorMeasure::new(vec![Atom::new(Point3::new(0.1, 0.2, 0.3), Vec3::new(0.0, 0.0, 1.0))]).unwrap();
        let b = kappa_bound(&off, &space, &sensors, 1.0).unwrap();
        assert_eq!(b.tv_term, 0.0);
        assert!(b.image_term > 0.0);
        assert_eq!(b.value(), b.image_term);

        let outside = DiscreteVectorMeasure::new(vec![Atom::new(Point3::new(2.0, 0.2, 0.3), Vec3::x())]).unwrap();
        assert!(kappa_upper_bound(&outside, &model).is_err());
    }

    #[test]
    fn delta_matches_lambda_max() {
        let (region, sensors) = setup();
        let space = DipoleGsmSpace::cell_centers(VoxelPartition::new(region, [3, 2, 2]).unwrap());
        let model = forward::assemble(&space, &sensors, 1.0).unwrap();
        let g: Vec<f64> = (0..sensors.len()).map(|i| ((i * 7) as f64).sin()).collect();
        assert_eq!(delta(&g, &model).unwrap(), 0.5 * solver::lambda_max(&model, &g).unwrap());
        assert_eq!(delta(&vec![0.0; sensors.len()], &model).unwrap(), 0.0);
    }

    #[test]
    fn audit_requires_reference() {
        let (region, sensors) = setup();
        let space = DipoleGsmSpace::cell_centers(VoxelPartition::new(region, [2, 2, 1]).unwrap());
        let model = forward::assemble(&space, &sensors, 1.0).unwrap();
        let f = vec![1.0; sensors.len()];
        let m = vec![0.0; model.num_unknowns()];
        assert!(matches!(
            inequality_audit(&model, &f, &f, 0.1, &m, None),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn support_convergence_conventions() {
        let p = Point3::new(0.0, 0.0, 0.0);
        let q = Point3::new(1.0, 0.0, 0.0);
        let d = support_convergence(&[vec![], vec![p]], &[], &[]);
        assert_eq!(d[0].dist_to_levelset, 0.0);
        assert_eq!(d[0].dist_from_ref_support, 0.0);
        assert!(!d[0].flagged);
        assert!(d[1].flagged);
        let d = support_convergence(&[vec![p]], &[q], &[q]);
        assert_eq!(d[0].dist_to_levelset, 1.0);
        assert_eq!(d[0].dist_from_ref_support, 1.0);
    }

    #[test]
    fn plan_validation_and_nesting() {
        assert!(RefinementPlan::new([2, 2, 1], 0, 2).is_err());
        assert!(RefinementPlan::new([2, 2, 1], 2, 1).is_err());
        let (region, _) = setup();
        let spaces = RefinementPlan::new([2, 2, 1], 3, 2).unwrap().spaces(region).unwrap();
        for w in spaces.windows(2) {
            for node in w[0].nodes() {
                assert!(w[1].node_at(node).is_some());
            }
        }
    }
}

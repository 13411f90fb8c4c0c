//! Inversion, sweep, certificate and refinement drivers.

use std::path::Path;

use anyhow::{bail, Context, Result};
use magtv::certificate::{certificate_check, CertificateReport};
use magtv::forward::{self, AssembleOptions, ForwardModel, SensorGrid};
use magtv::io;
use magtv::partition::{Aabb, DipoleGsmSpace};
use magtv::refinement::{run_refinement, RefinementData, RefinementOutcome};
use magtv::solver::{self, ConvergedBy};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, CONFIG_VERSION};
use crate::scenario::{self, add_noise, units_comments};

/// Relative slack for monotonicity checks across levels and along sweeps.
pub const MONOTONE_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct LoadedData {
    pub region: Aabb,
    pub sensors: SensorGrid,
    pub scale: f64,
    pub f: Vec<f64>,
}

/// Loads the data named by `cfg`. A scenario is generated into
/// `<output>/scenario` and read back from disk.
pub fn load_data(cfg: &RunConfig) -> Result<LoadedData> {
    if let Some(sc) = &cfg.scenario {
        let files = scenario::generate_scenario(sc, &cfg.output.dir.join("scenario"))?;
        let sensors = io::read_sensors_csv(&files.sensors, magtv::Vec3::from(sc.sensors.direction))?;
        let f = io::read_field_for_sensors(&files.field, &sensors)?;
        return Ok(LoadedData { region: sc.region.aabb()?, sensors, scale: sc.scale, f });
    }
    let Some(d) = &cfg.data else { bail!("config names neither a scenario nor data files") };
    let sensors = io::read_sensors_csv(&d.sensors, magtv::Vec3::from(d.direction))
        .with_context(|| format!("reading sensors {}", d.sensors.display()))?;
    let f = io::read_field_for_sensors(&d.field, &sensors)
        .with_context(|| format!("reading field {}", d.field.display()))?;
    Ok(LoadedData { region: d.region.aabb()?, sensors, scale: d.scale, f })
}

fn finest_space(cfg: &RunConfig, region: Aabb) -> Result<DipoleGsmSpace> {
    Ok(cfg.grid.spaces(region)?.pop().expect("plan has a level"))
}

fn assemble(cfg: &RunConfig, space: &DipoleGsmSpace, data: &LoadedData, matrix_free: bool) -> Result<ForwardModel> {
    let mut opts = AssembleOptions { min_gap: cfg.refinement.min_gap, ..AssembleOptions::default() };
    if matrix_free {
        opts.memory_cap_bytes = 0;
    }
    Ok(forward::assemble_with(space, &data.sensors, data.scale, opts)?)
}

/// `λ_max` of the data on the finest space of the plan.
pub fn finest_lambda_max(cfg: &RunConfig, data: &LoadedData) -> Result<f64> {
    let space = finest_space(cfg, data.region)?;
    let model = assemble(cfg, &space, data, true)?;
    Ok(solver::lambda_max(&model, &data.f)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: usize,
    pub num_nodes: usize,
    pub mesh_size: f64,
    pub objective: f64,
    pub tv: f64,
    pub residual_sq: f64,
    pub active_count: usize,
    pub cert_gap: f64,
    pub converged_by: ConvergedBy,
    pub fncond3_ok: bool,
    pub fncond2_ok: bool,
    pub r_distance_to_finest: f64,
    pub hausdorff_to_previous: Option<f64>,
    pub dist_to_levelset: f64,
    pub dist_from_ref_support: f64,
    pub kappa_upper: f64,
    pub delta: f64,
    pub d_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub ratio: f64,
    pub lambda: f64,
    pub audits_pass: bool,
    pub objectives_monotone: bool,
    pub levels: Vec<LevelSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_version: u32,
    pub lambda_max: f64,
    pub scale: f64,
    pub num_sensors: usize,
    pub data_norm_sq: f64,
    pub runs: Vec<RunSummary>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Timing {
    ratio: f64,
    level_wall_s: Vec<f64>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn level_data(cfg: &RunConfig, f: &[f64]) -> Result<Option<Vec<Vec<f64>>>> {
    let Some(noise) = &cfg.refinement.level_noise else { return Ok(None) };
    (0..cfg.grid.levels)
        .map(|n| {
            let mut v = f.to_vec();
            add_noise(&mut v, noise.std, noise.seed.wrapping_add(n as u64))?;
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn write_outcome(dir: &Path, outcome: &RefinementOutcome, comments: &[String], record_trace: bool) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    outcome.trace.write_csv(&dir.join("trace.csv"))?;
    outcome.trace.write_json(&dir.join("trace.json"))?;
    let ls_values: Vec<f64> = outcome
        .level_set
        .iter()
        .map(|p| outcome.reference_sample.value_at(p).unwrap_or(f64::NAN))
        .collect();
    io::write_field_csv(&dir.join("level_set.csv"), &outcome.level_set, &ls_values, comments)?;
    for (n, lvl) in outcome.levels.iter().enumerate() {
        let ld = dir.join(format!("level_{}", n + 1));
        std::fs::create_dir_all(&ld)?;
        io::write_measure_csv(&ld.join("solution.csv"), &lvl.solution.measure, comments)?;
        write_json(&ld.join("certificate.json"), &lvl.solution.certificate)?;
        if let Some(sample) = &lvl.sample {
            io::write_dual_field_csv(&ld.join("dual_field.csv"), sample, comments)?;
        }
        if record_trace {
            io::write_iter_trace_csv(&ld.join("iter_trace.csv"), &lvl.solution.trace)?;
        }
    }
    Ok(())
}

fn summarize_run(ratio: f64, outcome: &RefinementOutcome, warnings: &mut Vec<String>) -> RunSummary {
    let lambda = outcome.trace.lambda;
    let rows = &outcome.trace.rows;
    let levels: Vec<LevelSummary> = rows
        .iter()
        .map(|r| LevelSummary {
            level: r.level,
            num_nodes: r.num_nodes,
            mesh_size: r.mesh_size,
            objective: r.objective,
            tv: r.tv_norm,
            residual_sq: r.objective - lambda * r.tv_norm,
            active_count: r.active_nodes,
            cert_gap: r.cert_gap,
            converged_by: r.converged_by,
            fncond3_ok: r.fncond3_ok,
            fncond2_ok: r.fncond2_ok,
            r_distance_to_finest: r.r_distance_to_finest,
            hausdorff_to_previous: r.hausdorff_to_previous,
            dist_to_levelset: r.dist_to_levelset,
            dist_from_ref_support: r.dist_from_ref_support,
            kappa_upper: r.kappa_upper,
            delta: r.delta,
            d_lambda: r.d_lambda,
        })
        .collect();
    for r in rows {
        if !r.flags.is_empty() {
            warnings.push(format!("ratio {ratio}: level {}: {}", r.level, r.flags.join(", ")));
        }
    }
    for (n, lvl) in outcome.levels.iter().enumerate() {
        if let Some(w) = &lvl.solution.warning {
            warnings.push(format!("ratio {ratio}: level {}: {w}", n + 1));
        }
    }
    let objectives_monotone = rows.windows(2).all(|w| w[1].objective <= w[0].objective * (1.0 + MONOTONE_TOL));
    if !objectives_monotone {
        warnings.push(format!("ratio {ratio}: objectives increase across levels"));
    }
    RunSummary { ratio, lambda, audits_pass: outcome.trace.all_audits_pass(), objectives_monotone, levels }
}

/// Runs the refinement plan for every `λ` ratio and writes all artifacts
/// under the output directory. Mathematical problems become warnings.
pub fn run_inversion(cfg: &RunConfig) -> Result<Summary> {
    cfg.validate()?;
    let out = &cfg.output.dir;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("config.toml"), cfg.to_toml_string()?)?;
    let data = load_data(cfg)?;
    let lambda_max = finest_lambda_max(cfg, &data)?;
    let level_data = level_data(cfg, &data.f)?;
    let comments = units_comments(data.scale, data.sensors.direction());
    let opts = cfg.refinement_options();
    let mut warnings = Vec::new();
    let mut runs = Vec::new();
    let mut timing = Vec::new();
    for (i, &ratio) in cfg.lambda.ratios.iter().enumerate() {
        let lambda = ratio * lambda_max;
        if !(lambda > 0.0) {
            bail!("λ = {ratio}·λ_max is not positive (λ_max = {lambda_max}); is the data zero?");
        }
        let input = RefinementData {
            region: data.region,
            sensors: &data.sensors,
            scale: data.scale,
            f: &data.f,
            level_data: level_data.as_deref(),
            lambda,
        };
        let outcome = run_refinement(&cfg.grid, &input, &opts)?;
        write_outcome(&out.join(format!("lambda_{i:02}")), &outcome, &comments, cfg.solver.record_trace)?;
        timing.push(Timing { ratio, level_wall_s: outcome.trace.rows.iter().map(|r| r.wall_time_s).collect() });
        runs.push(summarize_run(ratio, &outcome, &mut warnings));
    }
    let summary = Summary {
        config_version: CONFIG_VERSION,
        lambda_max,
        scale: data.scale,
        num_sensors: data.sensors.len(),
        data_norm_sq: data.sensors.inner(&data.f, &data.f),
        runs,
        warnings,
    };
    write_json(&out.join("summary.json"), &summary)?;
    write_json(&out.join("timing.json"), &timing)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio: f64,
    pub lambda: f64,
    pub residual_sq: f64,
    pub tv: f64,
    pub objective: f64,
    pub active_count: usize,
    pub converged_by: ConvergedBy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config_version: u32,
    pub lambda_max: f64,
    pub num_nodes: usize,
    pub rows: Vec<SweepRow>,
    pub warnings: Vec<String>,
}

pub const SWEEP_HEADER: &str = "lambda,residual_sq,tv,objective,active_count";

/// Solves on the finest space for every ratio, from the largest `λ` down,
/// each solve warm-started from the previous one. Writes `sweep.csv`, the
/// solutions and `summary.json`.
pub fn lambda_sweep(cfg: &RunConfig) -> Result<SweepSummary> {
    cfg.validate()?;
    let out = &cfg.output.dir;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("config.toml"), cfg.to_toml_string()?)?;
    let data = load_data(cfg)?;
    let space = finest_space(cfg, data.region)?;
    let model = assemble(cfg, &space, &data, false)?;
    let lambda_max = solver::lambda_max(&model, &data.f)?;
    let comments = units_comments(data.scale, data.sensors.direction());

    let mut ratios = cfg.lambda.ratios.clone();
    ratios.sort_by(|a, b| b.total_cmp(a));
    ratios.dedup();
    let mut rows = Vec::with_capacity(ratios.len());
    let mut warnings = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    let sol_dir = out.join("solutions");
    std::fs::create_dir_all(&sol_dir)?;
    for (i, &ratio) in ratios.iter().enumerate() {
        let lambda = ratio * lambda_max;
        if !(lambda > 0.0) {
            bail!("λ = {ratio}·λ_max is not positive (λ_max = {lambda_max}); is the data zero?");
        }
        let sol = solver::solve_from(&model, &data.f, lambda, &cfg.solver, warm.as_deref())?;
        if let Some(w) = &sol.warning {
            warnings.push(format!("ratio {ratio}: {w}"));
        }
        io::write_measure_csv(&sol_dir.join(format!("lambda_{i:02}.csv")), &sol.measure, &comments)?;
        write_json(&sol_dir.join(format!("lambda_{i:02}_certificate.json")), &sol.certificate)?;
        let tv = sol.measure.tv_norm();
        rows.push(SweepRow {
            ratio,
            lambda,
            residual_sq: sol.objective - lambda * tv,
            tv,
            objective: sol.objective,
            active_count: sol.measure.len(),
            converged_by: sol.converged_by,
        });
        warm = Some(sol.moments);
    }
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.residual_sq > a.residual_sq + MONOTONE_TOL * (1.0 + a.objective.abs()) {
            warnings.push(format!("residual_sq increases from λ = {} to λ = {}", a.lambda, b.lambda));
        }
        if b.tv < a.tv * (1.0 - MONOTONE_TOL) {
            warnings.push(format!("tv decreases from λ = {} to λ = {}", a.lambda, b.lambda));
        }
        if b.active_count < a.active_count {
            warnings.push(format!("active_count decreases from λ = {} to λ = {}", a.lambda, b.lambda));
        }
    }
    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            io::fmt_f64(r.lambda),
            io::fmt_f64(r.residual_sq),
            io::fmt_f64(r.tv),
            io::fmt_f64(r.objective),
            r.active_count
        ));
    }
    std::fs::write(out.join("sweep.csv"), csv)?;
    let summary = SweepSummary { config_version: CONFIG_VERSION, lambda_max, num_nodes: space.num_nodes(), rows, warnings };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Checks the optimality certificate of a measure file on the finest space.
pub fn certify(cfg: &RunConfig, measure: &Path, ratio: f64, tol: f64) -> Result<CertificateReport> {
    cfg.validate()?;
    let out = &cfg.output.dir;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let data = load_data(cfg)?;
    let space = finest_space(cfg, data.region)?;
    let model = assemble(cfg, &space, &data, false)?;
    let lambda = ratio * solver::lambda_max(&model, &data.f)?;
    let mu = io::read_measure_csv(measure).with_context(|| format!("reading {}", measure.display()))?;
    let report = certificate_check(&model, &data.f, lambda, &mu, tol)
        .with_context(|| format!("{} is not supported on the finest grid nodes", measure.display()))?;
    write_json(&out.join("certificate.json"), &report)?;
    Ok(report)
}

/// Runs one refinement at `ratio` and returns the trace as CSV text; the
/// artifacts go to `<output>/refine`.
pub fn refine(cfg: &RunConfig, ratio: f64) -> Result<(Summary, String)> {
    let mut c = cfg.clone();
    c.lambda.ratios = vec![ratio];
    c.output.dir = cfg.output.dir.join("refine");
    let summary = run_inversion(&c)?;
    let trace = std::fs::read_to_string(c.output.dir.join("lambda_00").join("trace.csv"))?;
    Ok((summary, trace))
}

//! TOML run configuration.
//!
//! ```toml
//! config_version = 1
//!
//! [scenario]                      # or a [data] table pointing at CSV files
//! region = { min = [0.0, 0.0, 0.0], max = [1.0, 1.0, 0.25] }
//! scale = 1.0
//! truth = { dipoles = [{ position = [0.3, 0.35, 0.1], moment = [0.0, 0.0, 1.0] }] }
//! sensors = { x_range = [-0.25, 1.25], y_range = [-0.25, 1.25], spacing = 0.0625, height = 0.4, direction = [0.0, 0.0, 1.0] }
//! noise = { std = 0.0, seed = 1 }
//!
//! [grid]
//! base = [4, 4, 2]
//! levels = 4
//! factor = 2
//!
//! [lambda]
//! ratios = [0.1]
//!
//! [solver]
//! certificate_tol = 1e-7
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use magtv::partition::Aabb;
use magtv::refinement::{RefinementOptions, RefinementPlan};
use magtv::solver::SolveOptions;
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl RegionConfig {
    pub fn aabb(&self) -> Result<Aabb> {
        Ok(Aabb::new(self.min, self.max)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DipoleConfig {
    pub position: [f64; 3],
    pub moment: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomTruthConfig {
    pub count: usize,
    pub moment_range: [f64; 2],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    #[serde(default)]
    pub dipoles: Vec<DipoleConfig>,
    pub random: Option<RandomTruthConfig>,
}

/// Planar sensor grid `height` above the top face of the region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub spacing: f64,
    pub height: f64,
    pub direction: [f64; 3],
}

impl SensorConfig {
    pub fn counts(&self) -> [usize; 2] {
        let n = |r: [f64; 2]| ((r[1] - r[0]) / self.spacing).round() as usize + 1;
        [n(self.x_range), n(self.y_range)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Standard deviation of additive Gaussian noise on each reading.
    pub std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub region: RegionConfig,
    #[serde(default = "default_scale")]
    pub scale: f64,
    pub truth: TruthConfig,
    pub sensors: SensorConfig,
    pub noise: Option<NoiseConfig>,
}

fn default_scale() -> f64 {
    1.0
}

impl ScenarioConfig {
    /// Three dipoles in `[0,1]² × [0,0.25]` under a 25 × 25 sensor grid.
    pub fn standard() -> Self {
        let dipole = |position, moment| DipoleConfig { position, moment };
        ScenarioConfig {
            region: RegionConfig { min: [0.0, 0.0, 0.0], max: [1.0, 1.0, 0.25] },
            scale: 1.0,
            truth: TruthConfig {
                dipoles: vec![
                    dipole([0.3, 0.35, 0.1], [0.0, 0.0, 1.0]),
                    dipole([0.7, 0.6, 0.15], [1.0, 0.0, 0.5]),
                    dipole([0.45, 0.75, 0.08], [0.0, -1.0, 0.3]),
                ],
                random: None,
            },
            sensors: SensorConfig {
                x_range: [-0.25, 1.25],
                y_range: [-0.25, 1.25],
                spacing: 0.0625,
                height: 0.4,
                direction: [0.0, 0.0, 1.0],
            },
            noise: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let region = self.region.aabb()?;
        if !(self.scale.is_finite() && self.scale > 0.0) {
            bail!("scenario.scale must be positive");
        }
        let s = &self.sensors;
        if !(s.height > 0.0) {
            bail!("scenario.sensors.height must be positive (sensors must be separated from the region)");
        }
        if !(s.spacing > 0.0) || s.x_range[1] < s.x_range[0] || s.y_range[1] < s.y_range[0] {
            bail!("scenario.sensors: spacing must be positive and ranges increasing");
        }
        for d in &self.truth.dipoles {
            let p = magtv::measure::Point3::from(d.position);
            if !region.contains(&p) {
                bail!("dipole at {:?} lies outside the region", d.position);
            }
        }
        if let Some(r) = &self.truth.random {
            if !(r.moment_range[0] >= 0.0 && r.moment_range[1] >= r.moment_range[0]) {
                bail!("scenario.truth.random.moment_range must be [lo, hi] with 0 ≤ lo ≤ hi");
            }
        }
        if let Some(n) = &self.noise {
            if !(n.std >= 0.0 && n.std.is_finite()) {
                bail!("scenario.noise.std must be nonnegative");
            }
        }
        Ok(())
    }
}

/// Measured data given as CSV files, relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub region: RegionConfig,
    #[serde(default = "default_scale")]
    pub scale: f64,
    pub sensors: PathBuf,
    pub field: PathBuf,
    pub direction: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaConfig {
    /// Regularization weights as multiples of `λ_max` on the finest level.
    pub ratios: Vec<f64>,
}

/// Independent noise on the data of every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelNoiseConfig {
    pub std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefinementConfig {
    pub sample_factor: usize,
    pub band_rel: f64,
    pub warm_start: bool,
    pub test_functions: usize,
    pub min_gap: Option<f64>,
    pub level_noise: Option<LevelNoiseConfig>,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        let d = RefinementOptions::default();
        RefinementConfig {
            sample_factor: d.sample_factor,
            band_rel: d.band_rel,
            warm_start: d.warm_start,
            test_functions: d.test_functions,
            min_gap: d.min_gap,
            level_noise: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub config_version: u32,
    pub scenario: Option<ScenarioConfig>,
    pub data: Option<DataConfig>,
    pub grid: RefinementPlan,
    pub lambda: LambdaConfig,
    #[serde(default)]
    pub solver: SolveOptions,
    #[serde(default)]
    pub refinement: RefinementConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    /// The standard scenario with a four-level plan at `0.1 λ_max`.
    pub fn standard(output: impl Into<PathBuf>) -> Self {
        RunConfig {
            config_version: CONFIG_VERSION,
            scenario: Some(ScenarioConfig::standard()),
            data: None,
            grid: RefinementPlan { base: [4, 4, 2], levels: 4, factor: 2 },
            lambda: LambdaConfig { ratios: vec![0.1] },
            solver: SolveOptions::default(),
            refinement: RefinementConfig::default(),
            output: OutputConfig { dir: output.into() },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| anyhow::anyhow!("invalid config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; relative data paths are resolved against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg =
            Self::from_toml_str(&text).with_context(|| format!("in {}", path.display()))?;
        if let (Some(data), Some(base)) = (cfg.data.as_mut(), path.parent()) {
            data.sensors = base.join(&data.sensors);
            data.field = base.join(&data.field);
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.config_version != CONFIG_VERSION {
            bail!("unsupported config_version {} (expected {CONFIG_VERSION})", self.config_version);
        }
        match (&self.scenario, &self.data) {
            (Some(s), None) => s.validate()?,
            (None, Some(d)) => {
                d.region.aabb()?;
                if !(d.scale.is_finite() && d.scale > 0.0) {
                    bail!("data.scale must be positive");
                }
            }
            _ => bail!("exactly one of [scenario] or [data] must be given"),
        }
        self.grid.validate()?;
        self.solver.validate()?;
        if self.lambda.ratios.is_empty() {
            bail!("lambda.ratios must not be empty");
        }
        if self.lambda.ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            bail!("lambda.ratios must be positive");
        }
        if let Some(n) = &self.refinement.level_noise {
            if !(n.std >= 0.0 && n.std.is_finite()) {
                bail!("refinement.level_noise.std must be nonnegative");
            }
        }
        Ok(())
    }

    pub fn refinement_options(&self) -> RefinementOptions {
        let r = &self.refinement;
        RefinementOptions {
            solve: self.solver.clone(),
            sample_factor: r.sample_factor,
            band_rel: r.band_rel,
            warm_start: r.warm_start,
            test_functions: r.test_functions,
            min_gap: r.min_gap,
            level_samples: true,
        }
    }

    /// Replaces every seed in the scenario by `seed` (noise) and `seed + 1`
    /// (random truth), and the level-noise seed by `seed + 2`.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(s) = self.scenario.as_mut() {
            if let Some(n) = s.noise.as_mut() {
                n.seed = seed;
            }
            if let Some(r) = s.truth.random.as_mut() {
                r.seed = seed.wrapping_add(1);
            }
        }
        if let Some(n) = self.refinement.level_noise.as_mut() {
            n.seed = seed.wrapping_add(2);
        }
    }
}

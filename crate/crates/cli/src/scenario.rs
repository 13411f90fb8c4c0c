//! Synthetic scenarios: ground truth, sensors and simulated readings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use magtv::forward::{field_component, SensorGrid};
use magtv::io;
use magtv::measure::{Atom, DiscreteVectorMeasure, Point3, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ScenarioConfig, CONFIG_VERSION};

pub const TRUTH_FILE: &str = "truth.csv";
pub const SENSOR_FILE: &str = "sensors.csv";
pub const FIELD_FILE: &str = "field.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_version: u32,
    pub scale: f64,
    pub direction: [f64; 3],
    pub noise_std: f64,
    pub noise_seed: Option<u64>,
    pub truth_seed: Option<u64>,
    /// SHA-256 of each written file.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub truth: DiscreteVectorMeasure,
    pub sensors: SensorGrid,
    pub field: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ScenarioFiles {
    pub truth: PathBuf,
    pub sensors: PathBuf,
    pub field: PathBuf,
    pub manifest: PathBuf,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn units_comments(scale: f64, direction: &Vec3) -> Vec<String> {
    vec![
        "units: positions in m, moments in A*m^2, field in T when scale = 1e-7 (mu0/4pi)".to_string(),
        format!("scale = {}", io::fmt_f64(scale)),
        format!("direction = {}, {}, {}", direction.x, direction.y, direction.z),
    ]
}

fn truth_measure(cfg: &ScenarioConfig) -> Result<DiscreteVectorMeasure> {
    let mut atoms: Vec<Atom> = cfg
        .truth
        .dipoles
        .iter()
        .map(|d| Atom::new(Point3::from(d.position), Vec3::from(d.moment)))
        .collect();
    if let Some(r) = &cfg.truth.random {
        let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
        let (lo, hi) = (cfg.region.min, cfg.region.max);
        for _ in 0..r.count {
            let p = Point3::new(
                rng.random_range(lo[0]..=hi[0]),
                rng.random_range(lo[1]..=hi[1]),
                rng.random_range(lo[2]..=hi[2]),
            );
            let dir: [f64; 3] = UnitSphere.sample(&mut rng);
            let mag = rng.random_range(r.moment_range[0]..=r.moment_range[1]);
            atoms.push(Atom::new(p, Vec3::from(dir) * mag));
        }
    }
    Ok(DiscreteVectorMeasure::new(atoms)?)
}

/// Builds the scenario in memory.
pub fn build_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let truth = truth_measure(cfg)?;
    let s = &cfg.sensors;
    let z = cfg.region.max[2] + s.height;
    let sensors = SensorGrid::planar(s.x_range, s.y_range, s.counts(), z, Vec3::from(s.direction))?;
    let mut field = sensors
        .points()
        .iter()
        .map(|x| field_component(&truth, x, sensors.direction(), cfg.scale))
        .collect::<magtv::Result<Vec<f64>>>()?;
    if let Some(n) = &cfg.noise {
        add_noise(&mut field, n.std, n.seed)?;
    }
    Ok(Scenario { truth, sensors, field })
}

/// Adds i.i.d. `N(0, std²)` noise drawn from a seeded generator.
pub fn add_noise(values: &mut [f64], std: f64, seed: u64) -> Result<()> {
    if std == 0.0 {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std)?;
    for v in values {
        *v += normal.sample(&mut rng);
    }
    Ok(())
}

/// Writes truth, sensor and field files plus a manifest of their hashes.
pub fn generate_scenario(cfg: &ScenarioConfig, dir: &Path) -> Result<ScenarioFiles> {
    let sc = build_scenario(cfg)?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let comments = units_comments(cfg.scale, sc.sensors.direction());
    let files = ScenarioFiles {
        truth: dir.join(TRUTH_FILE),
        sensors: dir.join(SENSOR_FILE),
        field: dir.join(FIELD_FILE),
        manifest: dir.join(MANIFEST_FILE),
    };
    io::write_measure_csv(&files.truth, &sc.truth, &comments)?;
    io::write_sensors_csv(&files.sensors, &sc.sensors, &comments)?;
    io::write_field_csv(&files.field, sc.sensors.points(), &sc.field, &comments)?;
    let mut hashes = BTreeMap::new();
    for (name, path) in [(TRUTH_FILE, &files.truth), (SENSOR_FILE, &files.sensors), (FIELD_FILE, &files.field)] {
        hashes.insert(name.to_string(), sha256_file(path)?);
    }
    let manifest = Manifest {
        config_version: CONFIG_VERSION,
        scale: cfg.scale,
        direction: cfg.sensors.direction,
        noise_std: cfg.noise.as_ref().map_or(0.0, |n| n.std),
        noise_seed: cfg.noise.as_ref().map(|n| n.seed),
        truth_seed: cfg.truth.random.as_ref().map(|r| r.seed),
        files: hashes,
    };
    std::fs::write(&files.manifest, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DipoleConfig, NoiseConfig, RandomTruthConfig};

    #[test]
    fn zero_truth_gives_zero_field() {
        let mut cfg = ScenarioConfig::standard();
        cfg.truth.dipoles.clear();
        let sc = build_scenario(&cfg).unwrap();
        assert!(sc.field.iter().all(|&v| v == 0.0));
        cfg.noise = Some(NoiseConfig { std: 0.1, seed: 3 });
        let sc = build_scenario(&cfg).unwrap();
        assert!(sc.field.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn nadir_value_matches_kernel() {
        let mut cfg = ScenarioConfig::standard();
        cfg.truth.dipoles = vec![DipoleConfig { position: [0.5, 0.5, 0.25], moment: [0.0, 0.0, 1.0] }];
        cfg.sensors.x_range = [0.0, 1.0];
        cfg.sensors.y_range = [0.0, 1.0];
        cfg.sensors.spacing = 0.5;
        let sc = build_scenario(&cfg).unwrap();
        // Center sensor sits 0.4 above the dipole: on-axis field 2/h³.
        assert_eq!(sc.sensors.points()[4], Point3::new(0.5, 0.5, 0.65));
        let expected = 2.0 / 0.4f64.powi(3);
        assert!((sc.field[4] - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn fixed_seed_is_byte_identical() {
        let mut cfg = ScenarioConfig::standard();
        cfg.truth.random = Some(RandomTruthConfig { count: 4, moment_range: [0.5, 1.5], seed: 9 });
        cfg.noise = Some(NoiseConfig { std: 1e-3, seed: 5 });
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_scenario(&cfg, a.path()).unwrap();
        generate_scenario(&cfg, b.path()).unwrap();
        for f in [TRUTH_FILE, SENSOR_FILE, FIELD_FILE, MANIFEST_FILE] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        }
        let truth = io::read_measure_csv(&a.path().join(TRUTH_FILE)).unwrap();
        assert_eq!(truth.len(), 7);
    }
}

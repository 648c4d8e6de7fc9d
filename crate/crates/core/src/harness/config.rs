//! Experiment configuration files.
//!
//! A configuration is a TOML document. Neighbor lists use 1-based node
//! numbers, as they are usually written down by hand. Exactly one of
//! `sweep.snr_db` and `sweep.samples` is given; the other quantity is held at
//! its `fixed` value. A sweep is either an explicit list or a
//! `{ from, to, step }` range with both ends included.
//!
//! ```toml
//! name = "example"
//! kind = "dpm"            # or "desprit"
//! trials = 200
//! base_seed = 1
//! p_values = [10, 20, 30]
//!
//! [geometry]
//! spacing = 1.0
//! subarrays = [{ xi = [0.0, 0.0], sensors = 2 }, { xi = [0.45, 0.99], sensors = 2 }]
//!
//! [topology]
//! neighbors = [[2], [1]]
//!
//! [scenario]
//! doas_deg = [-14.0, 5.0]
//! source_power = 1.0
//!
//! [sweep]
//! snr_db = { from = -10.0, to = 30.0, step = 5.0 }
//!
//! [fixed]
//! samples = 100
//!
//! [dpm]
//! q = 10
//!
//! [curves]
//! monte_carlo = true
//! analytical = true
//! centralized = false
//!
//! [output]
//! path = "results/example"
//! formats = ["csv", "json"]
//! mode = "emulated"       # or "full"
//! esprit_mode = "a3-shortcut"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::array_model::{ArrayGeometry, SourceScenario, Subarray};
use crate::dpm::{DpmConfig, DEFAULT_AUX_DEPTH};
use crate::error::{Error, Result};
use crate::esprit::DespritMode;
use crate::network::{build_metropolis_weights, check_convergence, Topology, WeightMatrix, DEFAULT_CONVERGENCE_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Eigenvector error of the decentralized power method.
    Dpm,
    /// DOA error of decentralized ESPRIT.
    Desprit,
}

/// How the decentralized power method is simulated in Monte Carlo trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationMode {
    /// Power method on the equivalent covariance; the auxiliary consensus
    /// runs are taken as exact.
    #[default]
    Emulated,
    /// Every consensus run is simulated message by message.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Values<T> {
    List(Vec<T>),
    Range { from: T, to: T, step: T },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default = "one")]
    pub spacing: f64,
    pub subarrays: Vec<Subarray>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    /// 1-based neighbor lists, one per node.
    pub neighbors: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub doas_deg: Vec<f64>,
    #[serde(default = "one")]
    pub source_power: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub snr_db: Option<Values<f64>>,
    pub samples: Option<Values<usize>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedConfig {
    pub snr_db: Option<f64>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpmSettings {
    pub q: usize,
    #[serde(default = "aux_depth")]
    pub p1: usize,
    #[serde(default = "aux_depth")]
    pub p2: usize,
    #[serde(default = "aux_depth")]
    pub p3: usize,
}

impl DpmSettings {
    pub fn at_depth(&self, p: usize) -> DpmConfig {
        DpmConfig {
            p,
            p1: self.p1,
            p2: self.p2,
            p3: self.p3,
            q: self.q,
            seed: 0,
            rayleigh: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSelection {
    #[serde(default = "yes")]
    pub monte_carlo: bool,
    #[serde(default = "yes")]
    pub analytical: bool,
    /// Centralized ESPRIT references (DOA experiments only).
    #[serde(default)]
    pub centralized: bool,
}

impl Default for CurveSelection {
    fn default() -> Self {
        Self {
            monte_carlo: true,
            analytical: true,
            centralized: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// File stem; `.csv` and `.json` are appended.
    pub path: PathBuf,
    #[serde(default = "csv_only")]
    pub formats: Vec<OutputFormat>,
    #[serde(default)]
    pub mode: SimulationMode,
    #[serde(default)]
    pub esprit_mode: DespritMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: ExperimentKind,
    pub trials: usize,
    pub base_seed: u64,
    pub p_values: Vec<usize>,
    pub geometry: GeometryConfig,
    pub topology: TopologyConfig,
    pub scenario: ScenarioConfig,
    pub sweep: SweepConfig,
    #[serde(default)]
    pub fixed: FixedConfig,
    pub dpm: DpmSettings,
    #[serde(default)]
    pub curves: CurveSelection,
    pub output: OutputConfig,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn aux_depth() -> usize {
    DEFAULT_AUX_DEPTH
}

fn csv_only() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SnrDb,
    Samples,
}

/// SNR and sample count of one point on a curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatingPoint {
    pub snr_db: f64,
    pub samples: usize,
}

impl OperatingPoint {
    pub fn sweep_value(&self, axis: SweepAxis) -> f64 {
        match axis {
            SweepAxis::SnrDb => self.snr_db,
            SweepAxis::Samples => self.samples as f64,
        }
    }
}

/// Array, network and sources shared by every point of an experiment.
#[derive(Debug, Clone)]
pub struct Scene {
    pub geometry: ArrayGeometry,
    pub topology: Topology,
    pub weights: WeightMatrix,
    pub doas_deg: Vec<f64>,
    pub source_power: f64,
}

impl Scene {
    pub fn new(geometry: ArrayGeometry, topology: Topology, doas_deg: Vec<f64>, source_power: f64) -> Result<Self> {
        if topology.node_count() != geometry.node_count() {
            return Err(Error::Dimension(format!(
                "{} network nodes for {} subarrays",
                topology.node_count(),
                geometry.node_count()
            )));
        }
        let weights = build_metropolis_weights(&topology);
        let scene = Self {
            geometry,
            topology,
            weights,
            doas_deg,
            source_power,
        };
        scene.scenario(0.0)?;
        Ok(scene)
    }

    /// Six subarrays of two sensors, six nodes, three sources at -14, -10 and
    /// 5 degrees with unit power.
    pub fn reference() -> Self {
        Self::new(
            ArrayGeometry::six_subarray_reference(),
            Topology::six_node_reference(),
            vec![-14.0, -10.0, 5.0],
            1.0,
        )
        .expect("reference scene is valid")
    }

    pub fn source_count(&self) -> usize {
        self.doas_deg.len()
    }

    pub fn scenario(&self, snr_db: f64) -> Result<SourceScenario> {
        SourceScenario::from_snr_db(self.doas_deg.clone(), self.source_power, snr_db)
    }
}

/// A validated configuration with everything derived from it.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub scene: Scene,
    pub axis: SweepAxis,
    pub points: Vec<OperatingPoint>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("<document>", e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string().trim_end()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<document>", e.to_string()))
    }

    /// SHA-256 of the normalized TOML rendering, as lowercase hex.
    pub fn digest(&self) -> Result<String> {
        let text = self.to_toml_string()?;
        let hash = Sha256::digest(text.as_bytes());
        Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        self
    }

    pub fn with_mode(mut self, mode: SimulationMode) -> Self {
        self.output.mode = mode;
        self
    }

    pub fn with_output(mut self, path: PathBuf) -> Self {
        self.output.path = path;
        self
    }

    pub fn with_formats(mut self, formats: Vec<OutputFormat>) -> Self {
        self.output.formats = formats;
        self
    }

    pub fn validate(self) -> Result<Experiment> {
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.p_values.is_empty() {
            return Err(Error::config("p_values", "needs at least one consensus depth"));
        }
        for (name, v) in [("dpm.q", self.dpm.q), ("dpm.p1", self.dpm.p1), ("dpm.p2", self.dpm.p2), ("dpm.p3", self.dpm.p3)] {
            if v == 0 {
                return Err(Error::config(name, "must be positive"));
            }
        }
        if self.output.formats.is_empty() {
            return Err(Error::config("output.formats", "needs at least one format"));
        }

        let geometry = ArrayGeometry::new(self.geometry.subarrays.clone(), self.geometry.spacing)
            .map_err(|e| Error::config("geometry", e.to_string()))?;
        let topology = Topology::from_one_based(&self.topology.neighbors)
            .map_err(|e| Error::config("topology.neighbors", e.to_string()))?;
        if topology.node_count() != geometry.node_count() {
            return Err(Error::config(
                "topology.neighbors",
                format!(
                    "lists {} nodes but geometry.subarrays has {}",
                    topology.node_count(),
                    geometry.node_count()
                ),
            ));
        }
        let scene = Scene::new(
            geometry,
            topology,
            self.scenario.doas_deg.clone(),
            self.scenario.source_power,
        )
        .map_err(|e| Error::config("scenario", e.to_string()))?;
        let diag = check_convergence(&scene.weights, DEFAULT_CONVERGENCE_TOL)?;
        if let Some(f) = diag.failure {
            return Err(Error::config(
                "topology.neighbors",
                format!("consensus weights do not converge ({f:?})"),
            ));
        }
        if self.kind == ExperimentKind::Desprit && scene.geometry.subarrays().iter().all(|s| s.sensors < 2) {
            return Err(Error::config(
                "geometry.subarrays",
                "ESPRIT needs at least one subarray with two or more sensors",
            ));
        }

        let (axis, points) = match (&self.sweep.snr_db, &self.sweep.samples) {
            (Some(_), Some(_)) => {
                return Err(Error::config("sweep", "give exactly one of snr_db and samples"));
            }
            (None, None) => return Err(Error::config("sweep", "give one of snr_db and samples")),
            (Some(snr), None) => {
                if self.fixed.snr_db.is_some() {
                    return Err(Error::config("fixed.snr_db", "conflicts with sweep.snr_db"));
                }
                let n = self
                    .fixed
                    .samples
                    .ok_or_else(|| Error::config("fixed.samples", "required when sweeping snr_db"))?;
                check_samples("fixed.samples", n)?;
                let snrs = expand_f64("sweep.snr_db", snr)?;
                (
                    SweepAxis::SnrDb,
                    snrs.into_iter().map(|snr_db| OperatingPoint { snr_db, samples: n }).collect::<Vec<_>>(),
                )
            }
            (None, Some(samples)) => {
                if self.fixed.samples.is_some() {
                    return Err(Error::config("fixed.samples", "conflicts with sweep.samples"));
                }
                let snr_db = self
                    .fixed
                    .snr_db
                    .ok_or_else(|| Error::config("fixed.snr_db", "required when sweeping samples"))?;
                check_snr("fixed.snr_db", snr_db)?;
                let ns = expand_usize("sweep.samples", samples)?;
                for (i, &n) in ns.iter().enumerate() {
                    check_samples(&format!("sweep.samples[{i}]"), n)?;
                }
                (
                    SweepAxis::Samples,
                    ns.into_iter().map(|samples| OperatingPoint { snr_db, samples }).collect(),
                )
            }
        };
        Ok(Experiment {
            config: self,
            scene,
            axis,
            points,
        })
    }
}

fn check_samples(path: &str, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::config(path, "sample count must be positive"));
    }
    Ok(())
}

fn check_snr(path: &str, snr: f64) -> Result<()> {
    if !snr.is_finite() {
        return Err(Error::config(path, "SNR must be finite"));
    }
    Ok(())
}

fn expand_f64(path: &str, v: &Values<f64>) -> Result<Vec<f64>> {
    let out = match v {
        Values::List(xs) => xs.clone(),
        &Values::Range { from, to, step } => {
            if step.is_nan() || step <= 0.0 || !from.is_finite() || !to.is_finite() || to < from {
                return Err(Error::config(path, "range needs finite from <= to and step > 0"));
            }
            let count = ((to - from) / step + 1e-9).floor() as usize + 1;
            (0..count).map(|i| from + i as f64 * step).collect()
        }
    };
    if out.is_empty() {
        return Err(Error::config(path, "sweep is empty"));
    }
    for (i, &x) in out.iter().enumerate() {
        check_snr(&format!("{path}[{i}]"), x)?;
    }
    Ok(out)
}

fn expand_usize(path: &str, v: &Values<usize>) -> Result<Vec<usize>> {
    let out: Vec<usize> = match v {
        Values::List(xs) => xs.clone(),
        &Values::Range { from, to, step } => {
            if step == 0 || to < from {
                return Err(Error::config(path, "range needs from <= to and step > 0"));
            }
            (from..=to).step_by(step).collect()
        }
    };
    if out.is_empty() {
        return Err(Error::config(path, "sweep is empty"));
    }
    Ok(out)
}

/// Shipped configurations, by name.
pub const PRESETS: [(&str, &str); 4] = [
    ("fig2", include_str!("../../../../configs/fig2.toml")),
    ("fig3", include_str!("../../../../configs/fig3.toml")),
    ("fig4", include_str!("../../../../configs/fig4.toml")),
    ("fig5", include_str!("../../../../configs/fig5.toml")),
];

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| ExperimentConfig::from_toml_str(text).expect("shipped preset parses"))
}

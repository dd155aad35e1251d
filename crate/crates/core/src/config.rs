//! Single TOML file driving every command.
//!
//! ```toml
//! seed = 7
//!
//! [simulation]
//! world = "room"          # room | corridor_hall | corridor | open_plane
//! profile = "gentle"      # gentle | aggressive | stationary | spin | corridor_shuttle
//!
//! [simulation.sensors.lidar]
//! range_noise = 0.01
//!
//! [pipeline.divider]
//! n_max = 4
//!
//! [pipeline.smoother]
//! enabled = true
//!
//! [benchmark]
//! scans = 600
//! ```
//!
//! Every table and key is optional; missing entries take their defaults. Unknown keys are
//! ignored by the nested tables but rejected at the top level.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::BenchConfig;
use crate::error::{Error, Result};
use crate::pipeline::PipelineConfig;
use crate::sim::{profile_by_name, world_by_name, SensorConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub world: String,
    pub profile: String,
    pub sensors: SensorConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            world: "room".into(),
            profile: "gentle".into(),
            sensors: SensorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub seed: u64,
    pub simulation: SimulationConfig,
    pub pipeline: PipelineConfig,
    pub benchmark: BenchConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            simulation: SimulationConfig::default(),
            pipeline: PipelineConfig {
                seed: 7,
                ..PipelineConfig::default()
            },
            benchmark: BenchConfig::default(),
        }
    }
}

impl AppConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: Self =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.set_seed(cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// The top-level seed drives both the simulator and the pipeline.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.pipeline.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.simulation.sensors.validate()?;
        self.benchmark.validate()?;
        world_by_name(&self.simulation.world)?;
        profile_by_name(&self.simulation.profile)?;
        let sensor_range = self.simulation.sensors.lidar.max_range;
        let map_range = self.pipeline.map.lidar_range;
        if sensor_range > map_range {
            return Err(Error::InvalidConfig(format!(
                "sensor max_range {sensor_range} m exceeds map lidar_range {map_range} m"
            )));
        }
        Ok(())
    }
}

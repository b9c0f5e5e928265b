use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use socnav::controllers::{build_named, list_paper_controllers, ControllerDefaults, ControllerSpec};
use socnav::crowd::EpisodeParams;
use socnav::scenarios::{ScenarioKind, ScenarioParams};

use crate::{BenchError, Result};

/// Environment variable that overrides `master_seed`.
pub const SEED_ENV: &str = "BENCH_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub dir: PathBuf,
    /// File names below are relative to `dir`.
    pub records: PathBuf,
    pub summary: PathBuf,
    pub table: PathBuf,
    pub manifest: PathBuf,
    pub traces: PathBuf,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            dir: "bench-out".into(),
            records: "records.csv".into(),
            summary: "summary.csv".into(),
            table: "summary.txt".into(),
            manifest: "manifest.json".into(),
            traces: "traces".into(),
        }
    }
}

impl OutputPaths {
    pub fn records_path(&self) -> PathBuf {
        self.dir.join(&self.records)
    }

    pub fn summary_path(&self) -> PathBuf {
        self.dir.join(&self.summary)
    }

    pub fn table_path(&self) -> PathBuf {
        self.dir.join(&self.table)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.dir.join(&self.manifest)
    }

    pub fn traces_dir(&self) -> PathBuf {
        self.dir.join(&self.traces)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub controllers: Vec<String>,
    pub scenarios: Vec<ScenarioKind>,
    pub n_ped_min: usize,
    pub n_ped_max: usize,
    pub scenes_per_cell: usize,
    pub master_seed: u64,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    /// Write a per-episode trajectory CSV below `output.traces`.
    pub trace: bool,
    /// Fill `wall_time_s` in the records. Off by default because timing
    /// makes the records file differ between runs.
    pub record_wall_time: bool,
    pub output: OutputPaths,
    pub episode: EpisodeParams,
    pub controller: ControllerDefaults,
    pub scenario: ScenarioParams,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            controllers: list_paper_controllers().into_iter().map(String::from).collect(),
            scenarios: ScenarioKind::ALL.to_vec(),
            n_ped_min: 3,
            n_ped_max: 8,
            scenes_per_cell: 100,
            master_seed: 0,
            jobs: 0,
            trace: false,
            record_wall_time: false,
            output: OutputPaths::default(),
            episode: EpisodeParams::default(),
            controller: ControllerDefaults::default(),
            scenario: ScenarioParams::default(),
        }
    }
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            BenchError::Config(m) => BenchError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises to TOML")
    }

    /// Applies `BENCH_SEED` if it is set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(s) = std::env::var(SEED_ENV) {
            self.master_seed = s
                .trim()
                .parse()
                .map_err(|_| BenchError::Config(format!("{SEED_ENV}={s:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn n_ped_values(&self) -> std::ops::RangeInclusive<usize> {
        self.n_ped_min..=self.n_ped_max
    }

    pub fn expected_records(&self) -> usize {
        self.controllers.len() * self.scenarios.len() * self.n_ped_values().count() * self.scenes_per_cell
    }

    pub fn worker_threads(&self) -> usize {
        if self.jobs == 0 {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        } else {
            self.jobs
        }
    }

    /// Resolves the controller names in config order.
    pub fn controller_specs(&self) -> Result<Vec<ControllerSpec>> {
        self.controllers
            .iter()
            .map(|n| build_named(n, &self.controller).map_err(BenchError::from))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.scenes_per_cell == 0 {
            return bad("scenes_per_cell must be at least 1".into());
        }
        if self.controllers.is_empty() || self.scenarios.is_empty() {
            return bad("at least one controller and one scenario are required".into());
        }
        if self.n_ped_min > self.n_ped_max {
            return bad(format!("n_ped_min {} exceeds n_ped_max {}", self.n_ped_min, self.n_ped_max));
        }
        let mut seen = HashSet::new();
        if let Some(d) = self.controllers.iter().find(|c| !seen.insert(c.as_str())) {
            return bad(format!("controller {d} listed twice"));
        }
        let mut seen = HashSet::new();
        if let Some(d) = self.scenarios.iter().find(|s| !seen.insert(**s)) {
            return bad(format!("scenario {d} listed twice"));
        }
        self.controller_specs()?;
        self.controller.weights.validate()?;
        self.controller.geometry.validate()?;
        self.episode.validate()?;
        self.scenario.validate()?;

        // The same quantities appear in several parameter tables.
        let g = &self.controller.geometry;
        let m = &self.episode.mpc;
        let s = &self.scenario;
        let pairs = [
            ("scenario.r_rob vs controller.geometry.r_rob", s.r_rob, g.r_rob),
            ("scenario.r_ped vs controller.geometry.r_ped", s.r_ped, g.r_ped),
            ("episode.sfm.r_ped vs controller.geometry.r_ped", self.episode.sfm.r_ped, g.r_ped),
            ("scenario.v_max vs episode.mpc.v_max", s.v_max, m.v_max),
            ("scenario.dt vs episode.mpc.dt", s.dt, m.dt),
            ("scenario.horizon vs episode.mpc.horizon", s.horizon as f64, m.horizon as f64),
        ];
        for (what, a, b) in pairs {
            if a != b {
                return bad(format!("{what} disagree ({a} != {b})"));
            }
        }
        Ok(())
    }
}

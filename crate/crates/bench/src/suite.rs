use std::fs::File;
use std::io::BufWriter;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use socnav::crowd::{run_episode, write_trace_csv};
use socnav::scenarios::{derive_seed, generate, ScenarioKind, SceneInstance};

use crate::config::BenchConfig;
use crate::{BenchError, Result};

/// One episode. Field order is the records CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub scenario: ScenarioKind,
    pub n_ped: usize,
    pub scene_id: usize,
    pub controller: String,
    pub steps_to_target: Option<usize>,
    pub collisions: usize,
    pub timeout: bool,
    pub solver_failures: usize,
    pub wall_time_s: Option<f64>,
}

/// Seed-stream cell of a (scenario, n_ped) pair. Independent of the config's
/// ordering so adding a scenario or controller leaves existing scenes intact.
pub fn cell_id(kind: ScenarioKind, n_ped: usize) -> u64 {
    let k = ScenarioKind::ALL.iter().position(|x| *x == kind).unwrap() as u64;
    (k << 32) | n_ped as u64
}

pub fn scene_seed(master: u64, kind: ScenarioKind, n_ped: usize, index: usize) -> u64 {
    derive_seed(master, cell_id(kind, n_ped), index as u64)
}

/// Every scene of the suite in canonical order (scenario, n_ped, index).
pub fn generate_scenes(cfg: &BenchConfig) -> Result<Vec<(usize, SceneInstance)>> {
    let mut out = Vec::new();
    for &kind in &cfg.scenarios {
        for n_ped in cfg.n_ped_values() {
            for index in 0..cfg.scenes_per_cell {
                let seed = scene_seed(cfg.master_seed, kind, n_ped, index);
                let scene = generate(kind, n_ped, seed, &cfg.scenario).map_err(|e| BenchError::Generation {
                    scenario: kind.to_string(),
                    n_ped,
                    index,
                    seed,
                    message: e.to_string(),
                })?;
                out.push((index, scene));
            }
        }
    }
    Ok(out)
}

pub fn trace_file_name(scene: &SceneInstance, scene_id: usize, controller: &str) -> String {
    format!("{}-n{}-s{}-{}.csv", scene.scenario_kind, scene.n_ped, scene_id, controller)
}

pub fn run_suite(cfg: &BenchConfig) -> Result<Vec<Record>> {
    run_suite_with_progress(cfg, |_, _| {})
}

/// Runs every (scene, controller) episode. `progress(done, total)` is called
/// from worker threads after each episode.
pub fn run_suite_with_progress(cfg: &BenchConfig, progress: impl Fn(usize, usize) + Sync) -> Result<Vec<Record>> {
    cfg.validate()?;
    let specs = cfg.controller_specs()?;
    let scenes = generate_scenes(cfg)?;
    let tasks: Vec<(usize, usize)> = (0..scenes.len())
        .flat_map(|s| (0..specs.len()).map(move |c| (s, c)))
        .collect();
    let total = tasks.len();
    let done = AtomicUsize::new(0);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.worker_threads())
        .build()
        .map_err(|e| BenchError::Config(format!("worker pool: {e}")))?;

    // Indexed parallel collect keeps task order, so output never depends on
    // scheduling.
    pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s, c)| {
                let (scene_id, scene) = &scenes[s];
                let spec = &specs[c];
                let start = Instant::now();
                let run = run_episode(scene, spec, &cfg.episode, cfg.trace)?;
                let wall = start.elapsed().as_secs_f64();
                if let Some(trace) = &run.trace {
                    let path = cfg.output.traces_dir().join(trace_file_name(scene, *scene_id, &spec.name));
                    let f = File::create(&path).map_err(|e| BenchError::io(&path, e))?;
                    write_trace_csv(trace, BufWriter::new(f)).map_err(|e| BenchError::io(&path, e))?;
                }
                progress(done.fetch_add(1, Ordering::Relaxed) + 1, total);
                Ok(Record {
                    scenario: scene.scenario_kind,
                    n_ped: scene.n_ped,
                    scene_id: *scene_id,
                    controller: spec.name.clone(),
                    steps_to_target: run.steps_to_target,
                    collisions: run.collisions,
                    timeout: run.timeout,
                    solver_failures: run.solver_failures,
                    wall_time_s: cfg.record_wall_time.then_some(wall),
                })
            })
            .collect()
    })
}

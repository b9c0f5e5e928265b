//! Social-force crowd simulation and the closed-loop episode runner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controllers::ControllerSpec;
use crate::dynamics::{step_unchecked, wrap_angle, ControlInput, RobotState};
use crate::error::{Error, Result};
use crate::nmpc::{mpc_step, MpcParams, SolveStatus};
use crate::perception::{ghost_update, sense, GrowthModel, PedestrianState, PredictedTrack, SensorConfig};
use crate::scenarios::SceneInstance;
use crate::socialcost::SafetyGeometry;
use crate::Vec2;

/// Distance below which two pedestrians count as coincident [m].
const COINCIDENT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SfmParams {
    pub desired_speed: f64,
    pub relaxation_time: f64,
    pub repulsion_strength: f64,
    pub repulsion_range: f64,
    /// Rate at which the body heading follows the walking direction [1/s].
    pub heading_gain: f64,
    pub r_ped: f64,
    /// Speed cap as a multiple of the desired speed.
    pub speed_cap_factor: f64,
    /// A pedestrian closer than this to its goal turns around [m].
    pub goal_radius: f64,
}

impl Default for SfmParams {
    fn default() -> Self {
        Self {
            desired_speed: 1.5,
            relaxation_time: 0.5,
            repulsion_strength: 2.0,
            repulsion_range: 0.35,
            heading_gain: 5.0,
            r_ped: SafetyGeometry::default().r_ped,
            speed_cap_factor: 1.3,
            goal_radius: 0.3,
        }
    }
}

impl SfmParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.desired_speed,
            self.relaxation_time,
            self.repulsion_strength,
            self.repulsion_range,
            self.heading_gain,
            self.r_ped,
            self.speed_cap_factor,
            self.goal_radius,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Config("social force parameters must be positive".into()))
        }
    }

    pub fn max_speed(&self) -> f64 {
        self.desired_speed * self.speed_cap_factor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pedestrian {
    pub state: PedestrianState,
    pub heading: f64,
    pub start: Vec2,
    pub goal: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub robot: RobotState,
    pub pedestrians: Vec<Pedestrian>,
    pub sim_step: usize,
    pub rng: ChaCha8Rng,
}

impl WorldState {
    pub fn from_scene(scene: &SceneInstance) -> Self {
        let pedestrians = scene
            .ped_starts
            .iter()
            .zip(&scene.ped_goals)
            .enumerate()
            .map(|(id, (s, g))| Pedestrian {
                state: PedestrianState::new(id, *s, Vec2::zeros()),
                heading: (g.y - s.y).atan2(g.x - s.x),
                start: *s,
                goal: *g,
            })
            .collect();
        Self {
            robot: scene.robot_start,
            pedestrians,
            sim_step: 0,
            rng: ChaCha8Rng::seed_from_u64(scene.seed),
        }
    }

    pub fn pedestrian_states(&self) -> Vec<PedestrianState> {
        self.pedestrians.iter().map(|p| p.state).collect()
    }
}

fn random_unit(rng: &mut impl Rng) -> Vec2 {
    let a = rng.random::<f64>() * std::f64::consts::TAU;
    Vec2::new(a.cos(), a.sin())
}

/// Goal attraction plus exponential repulsion from the other pedestrians.
/// The robot exerts no force.
pub fn sfm_accel(ped: &PedestrianState, others: &[PedestrianState], goal: &Vec2, p: &SfmParams, rng: &mut impl Rng) -> Vec2 {
    let to_goal = goal - ped.position;
    let dist = to_goal.norm();
    let desired = if dist > 0.0 { to_goal * (p.desired_speed / dist) } else { Vec2::zeros() };
    let mut a = (desired - ped.velocity) / p.relaxation_time;
    for o in others {
        if o.id == ped.id {
            continue;
        }
        let diff = ped.position - o.position;
        let d = diff.norm();
        let dir = if d < COINCIDENT { random_unit(rng) } else { diff / d };
        a += dir * (p.repulsion_strength * ((2.0 * p.r_ped - d) / p.repulsion_range).exp());
    }
    a
}

/// Advances the world by one simulation step holding `control` on the robot.
pub fn step_world(w: &mut WorldState, control: &ControlInput, dt_sim: f64, p: &SfmParams) {
    let snapshot = w.pedestrian_states();
    let cap = p.max_speed();
    for ped in w.pedestrians.iter_mut() {
        let acc = sfm_accel(&ped.state, &snapshot, &ped.goal, p, &mut w.rng);
        let mut v = ped.state.velocity + acc * dt_sim;
        let speed = v.norm();
        if speed > cap {
            v *= cap / speed;
        }
        ped.state.velocity = v;
        ped.state.position += v * dt_sim;
        if v.norm() > 1e-6 {
            let err = wrap_angle(v.y.atan2(v.x) - ped.heading);
            let turn = (p.heading_gain * dt_sim).min(1.0) * err;
            ped.heading = wrap_angle(ped.heading + turn);
        }
        if (ped.goal - ped.state.position).norm() < p.goal_radius {
            std::mem::swap(&mut ped.goal, &mut ped.start);
        }
    }
    w.robot = step_unchecked(&w.robot, control, dt_sim);
    w.sim_step += 1;
}

/// Ids of pedestrians whose bodies overlap the robot's.
pub fn detect_collision(w: &WorldState, g: &SafetyGeometry) -> Vec<usize> {
    let r = w.robot.position();
    w.pedestrians
        .iter()
        .filter(|p| (p.state.position - r).norm() < g.body_sum())
        .map(|p| p.state.id)
        .collect()
}

pub fn target_reached(robot: &RobotState, target: &Vec2, g: &SafetyGeometry, eps: f64) -> bool {
    (robot.position() - target).norm() - g.r_rob < eps
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeParams {
    pub dt_sim: f64,
    /// Simulation step budget.
    pub t_sim: usize,
    /// Target-reach tolerance beyond the robot radius [m].
    pub epsilon: f64,
    pub h_ghost: usize,
    pub mpc: MpcParams,
    pub sensor: SensorConfig,
    pub growth: GrowthModel,
    pub sfm: SfmParams,
}

impl Default for EpisodeParams {
    fn default() -> Self {
        Self {
            dt_sim: 0.01,
            t_sim: 2000,
            epsilon: 0.1,
            h_ghost: 20,
            mpc: MpcParams::default(),
            sensor: SensorConfig::default(),
            growth: GrowthModel::default(),
            sfm: SfmParams::default(),
        }
    }
}

impl EpisodeParams {
    /// Simulation steps per controller step.
    pub fn control_period(&self) -> Result<usize> {
        if !(self.dt_sim.is_finite() && self.dt_sim > 0.0) {
            return Err(Error::Config(format!("dt_sim must be positive, got {}", self.dt_sim)));
        }
        let ratio = self.mpc.dt / self.dt_sim;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Config(format!(
                "controller dt {} is not an integer multiple of dt_sim {}",
                self.mpc.dt, self.dt_sim
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.control_period()?;
        self.mpc.validate()?;
        self.sensor.validate()?;
        self.growth.validate()?;
        self.sfm.validate()?;
        if self.t_sim == 0 || self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::Config("t_sim must be positive and epsilon non-negative".into()));
        }
        Ok(())
    }
}

/// One controller step of an episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub sim_step: usize,
    pub robot: RobotState,
    pub control: ControlInput,
    pub pedestrians: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// Simulation steps until the target was reached; absent on timeout.
    pub steps_to_target: Option<usize>,
    pub collisions: usize,
    pub timeout: bool,
    /// Controller calls that errored or reported an infeasible problem.
    pub solver_failures: usize,
    /// Controller calls that stopped on the iteration budget.
    pub unconverged: usize,
    pub controller_steps: usize,
    pub solver_iterations: usize,
    pub path_length: f64,
    /// Smallest robot-pedestrian centre distance over the episode.
    pub min_distance: f64,
    pub trace: Option<Vec<TraceRow>>,
}

/// Writes a trace as CSV: one row per controller step, pedestrians as
/// trailing `px_i,py_i` column pairs.
pub fn write_trace_csv(trace: &[TraceRow], mut out: impl std::io::Write) -> std::io::Result<()> {
    let n = trace.first().map_or(0, |r| r.pedestrians.len());
    write!(out, "sim_step,x,y,theta,v,omega")?;
    for i in 0..n {
        write!(out, ",px_{i},py_{i}")?;
    }
    writeln!(out)?;
    for r in trace {
        write!(
            out,
            "{},{},{},{},{},{}",
            r.sim_step, r.robot.x, r.robot.y, r.robot.theta, r.control.v, r.control.omega
        )?;
        for p in &r.pedestrians {
            write!(out, ",{},{}", p.x, p.y)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Closed-loop episode: sense, predict and solve every controller period,
/// integrate the world every simulation step.
pub fn run_episode(scene: &SceneInstance, spec: &ControllerSpec, params: &EpisodeParams, record_trace: bool) -> Result<RunRecord> {
    params.validate()?;
    let period = params.control_period()?;
    let g = &spec.geometry;
    let mut world = WorldState::from_scene(scene);
    let target = scene.robot_goal;
    let mut record = RunRecord {
        steps_to_target: None,
        collisions: 0,
        timeout: false,
        solver_failures: 0,
        unconverged: 0,
        controller_steps: 0,
        solver_iterations: 0,
        path_length: 0.0,
        min_distance: f64::INFINITY,
        trace: record_trace.then(Vec::new),
    };
    let update_min = |w: &WorldState, rec: &mut RunRecord| {
        let r = w.robot.position();
        for p in &w.pedestrians {
            rec.min_distance = rec.min_distance.min((p.state.position - r).norm());
        }
    };
    update_min(&world, &mut record);
    if target_reached(&world.robot, &target, g, params.epsilon) {
        record.steps_to_target = Some(0);
        return Ok(record);
    }

    let mut tracks: Vec<PredictedTrack> = Vec::new();
    let mut warm: Option<Vec<ControlInput>> = None;
    let mut control = ControlInput::ZERO;
    let mut overlapping = !detect_collision(&world, g).is_empty();
    if overlapping {
        record.collisions += 1;
    }

    while world.sim_step < params.t_sim {
        if world.sim_step.is_multiple_of(period) {
            let visible = sense(&world.robot, &world.pedestrian_states(), &params.sensor);
            let step = ghost_update(&tracks, &visible, params.mpc.horizon, params.h_ghost, params.mpc.dt, &params.growth)
                .and_then(|t| {
                    tracks = t;
                    mpc_step(spec, &world.robot, &target, &tracks, &params.mpc, warm.as_deref())
                });
            record.controller_steps += 1;
            match step {
                Ok(out) => {
                    if let Some(rep) = &out.report {
                        record.solver_iterations += rep.iterations;
                        match rep.status {
                            SolveStatus::Infeasible => record.solver_failures += 1,
                            SolveStatus::MaxIter => record.unconverged += 1,
                            SolveStatus::Converged => {}
                        }
                    }
                    control = out.control;
                    warm = out.warm_start;
                }
                Err(_) => {
                    record.solver_failures += 1;
                    control = ControlInput::ZERO;
                    warm = None;
                }
            }
            if let Some(trace) = record.trace.as_mut() {
                trace.push(TraceRow {
                    sim_step: world.sim_step,
                    robot: world.robot,
                    control,
                    pedestrians: world.pedestrians.iter().map(|p| p.state.position).collect(),
                });
            }
        }
        let before = world.robot.position();
        step_world(&mut world, &control, params.dt_sim, &params.sfm);
        record.path_length += (world.robot.position() - before).norm();
        update_min(&world, &mut record);

        let now = !detect_collision(&world, g).is_empty();
        if now && !overlapping {
            record.collisions += 1;
        }
        overlapping = now;

        if target_reached(&world.robot, &target, g, params.epsilon) {
            record.steps_to_target = Some(world.sim_step);
            return Ok(record);
        }
    }
    record.timeout = true;
    Ok(record)
}

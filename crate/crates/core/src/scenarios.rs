//! Seeded scene generators and the robot local-goal rule.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::RobotState;
use crate::error::{Error, Result};
use crate::socialcost::SafetyGeometry;
use crate::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Circular,
    Random,
    Parallel,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [ScenarioKind::Circular, ScenarioKind::Random, ScenarioKind::Parallel];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::Circular => "circular",
            ScenarioKind::Random => "random",
            ScenarioKind::Parallel => "parallel",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario '{s}' (expected circular, random or parallel)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub r_inner: f64,
    pub r_outer: f64,
    /// Half side of the square sampling area centred at the origin [m].
    pub half_extent: f64,
    /// Depth of the edge strips used by the parallel scenario [m].
    pub edge_depth: f64,
    /// Half width of the band the robot starts in for the parallel scenario [m].
    pub band_half_width: f64,
    /// Spawn separation beyond body contact [m].
    pub spawn_slack: f64,
    pub d_min: f64,
    pub horizon: usize,
    pub v_max: f64,
    pub dt: f64,
    pub eps_range: f64,
    pub max_attempts: usize,
    pub r_rob: f64,
    pub r_ped: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        let g = SafetyGeometry::default();
        Self {
            r_inner: 2.0,
            r_outer: 3.5,
            half_extent: 4.0,
            edge_depth: 0.5,
            band_half_width: 0.5,
            spawn_slack: 0.1,
            d_min: 2.0,
            horizon: 25,
            v_max: 2.0,
            dt: 0.1,
            eps_range: 1.0,
            max_attempts: 10_000,
            r_rob: g.r_rob,
            r_ped: g.r_ped,
        }
    }
}

impl ScenarioParams {
    /// Upper end of the local-goal distance range.
    pub fn d_max(&self) -> f64 {
        self.horizon as f64 * self.v_max * self.dt + self.eps_range
    }

    pub fn ped_separation(&self) -> f64 {
        2.0 * self.r_ped + self.spawn_slack
    }

    pub fn robot_separation(&self) -> f64 {
        self.r_rob + self.r_ped + self.spawn_slack
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.half_extent;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config("half_extent must be positive".into()));
        }
        if !(0.0 <= self.r_inner && self.r_inner < self.r_outer && self.r_outer <= h) {
            return Err(Error::Config(format!(
                "need 0 <= r_inner < r_outer <= {h}, got {} / {}",
                self.r_inner, self.r_outer
            )));
        }
        if !(self.edge_depth > 0.0 && self.edge_depth < h) || !(self.band_half_width >= 0.0 && self.band_half_width <= h) {
            return Err(Error::Config("edge_depth and band_half_width must fit inside the area".into()));
        }
        if !(self.d_min >= 0.0 && self.d_min <= self.d_max()) {
            return Err(Error::Config(format!("goal range [{}, {}] is empty", self.d_min, self.d_max())));
        }
        if self.max_attempts == 0 || self.spawn_slack < 0.0 || self.r_rob <= 0.0 || self.r_ped <= 0.0 {
            return Err(Error::Config("invalid spawn parameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneInstance {
    pub scenario_kind: ScenarioKind,
    pub n_ped: usize,
    pub ped_starts: Vec<Vec2>,
    pub ped_goals: Vec<Vec2>,
    pub robot_start: RobotState,
    pub robot_goal: Vec2,
    pub seed: u64,
}

impl SceneInstance {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("scene instances always serialize")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let scene: SceneInstance =
            serde_json::from_str(line).map_err(|e| Error::Config(format!("bad scene record: {e}")))?;
        if scene.ped_starts.len() != scene.n_ped || scene.ped_goals.len() != scene.n_ped {
            return Err(Error::Config("scene record pedestrian counts disagree".into()));
        }
        Ok(scene)
    }

    /// Checks the spawn separation, bounds and goal-range invariants.
    pub fn check(&self, p: &ScenarioParams) -> Result<()> {
        let h = p.half_extent + 1e-12;
        let inside = |q: &Vec2| q.x.abs() <= h && q.y.abs() <= h;
        let r0 = self.robot_start.position();
        let fail = |msg: String| Err(Error::Generation(msg));
        if self.ped_starts.len() != self.n_ped || self.ped_goals.len() != self.n_ped {
            return fail("pedestrian counts disagree".into());
        }
        for (i, a) in self.ped_starts.iter().enumerate() {
            if !inside(a) || !inside(&self.ped_goals[i]) {
                return fail(format!("pedestrian {i} outside the area"));
            }
            if (a - r0).norm() <= p.robot_separation() {
                return fail(format!("pedestrian {i} spawned on the robot"));
            }
            for b in &self.ped_starts[i + 1..] {
                if (a - b).norm() <= p.ped_separation() {
                    return fail(format!("pedestrian {i} overlaps another"));
                }
            }
        }
        if !inside(&r0) || !inside(&self.robot_goal) {
            return fail("robot start or goal outside the area".into());
        }
        let d = (self.robot_goal - r0).norm();
        if d < p.d_min - 1e-12 || d > p.d_max() + 1e-12 {
            return fail(format!("robot goal distance {d} outside [{}, {}]", p.d_min, p.d_max()));
        }
        Ok(())
    }
}

fn uniform_in(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draws points from `draw` until one is clear of `taken` by `sep`.
fn rejection(
    rng: &mut ChaCha8Rng,
    p: &ScenarioParams,
    what: &str,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> Vec2,
    clear: impl Fn(&Vec2) -> bool,
) -> Result<Vec2> {
    for _ in 0..p.max_attempts {
        let q = draw(rng);
        if clear(&q) {
            return Ok(q);
        }
    }
    Err(Error::Generation(format!("could not place {what} after {} attempts", p.max_attempts)))
}

fn clear_of(q: &Vec2, others: &[Vec2], sep: f64) -> bool {
    others.iter().all(|o| (q - o).norm() > sep)
}

/// Uniform over the part of the goal-range annulus around `start` that lies
/// inside the sampling square.
pub fn sample_robot_goal(start: &Vec2, rng: &mut impl Rng, p: &ScenarioParams) -> Result<Vec2> {
    let h = p.half_extent;
    let (d_min, d_max) = (p.d_min, p.d_max());
    let farthest = (start.x.abs() + h).hypot(start.y.abs() + h);
    if farthest < d_min {
        return Err(Error::Generation(format!("no goal at distance >= {d_min} from {start:?} inside the area")));
    }
    for _ in 0..p.max_attempts {
        let q = Vec2::new(uniform_in(rng, -h, h), uniform_in(rng, -h, h));
        let d = (q - start).norm();
        if d >= d_min && d <= d_max {
            return Ok(q);
        }
    }
    Err(Error::Generation(format!("robot goal rejection exceeded {} attempts", p.max_attempts)))
}

fn finish(
    kind: ScenarioKind,
    seed: u64,
    ped_starts: Vec<Vec2>,
    ped_goals: Vec<Vec2>,
    robot: Vec2,
    rng: &mut ChaCha8Rng,
    p: &ScenarioParams,
) -> Result<SceneInstance> {
    let goal = sample_robot_goal(&robot, rng, p)?;
    let heading = (goal.y - robot.y).atan2(goal.x - robot.x);
    Ok(SceneInstance {
        scenario_kind: kind,
        n_ped: ped_starts.len(),
        ped_starts,
        ped_goals,
        robot_start: RobotState::new(robot.x, robot.y, heading),
        robot_goal: goal,
        seed,
    })
}

/// Pedestrians on an annulus walking to their antipodes; robot inside the ring.
pub fn gen_circular(n_ped: usize, seed: u64, p: &ScenarioParams) -> Result<SceneInstance> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ri2, ro2) = (p.r_inner * p.r_inner, p.r_outer * p.r_outer);
    let mut starts: Vec<Vec2> = Vec::with_capacity(n_ped);
    for i in 0..n_ped {
        let q = rejection(
            &mut rng,
            p,
            &format!("pedestrian {i}"),
            |rng| {
                // area-uniform radius
                let r = (ri2 + (ro2 - ri2) * rng.random::<f64>()).sqrt();
                let phi = uniform_in(rng, -std::f64::consts::PI, std::f64::consts::PI);
                Vec2::new(r * phi.cos(), r * phi.sin())
            },
            |q| clear_of(q, &starts, p.ped_separation()),
        )?;
        starts.push(q);
    }
    let goals = starts.iter().map(|s| -s).collect();
    let robot = rejection(
        &mut rng,
        p,
        "robot",
        |rng| {
            let r = p.r_inner * rng.random::<f64>().sqrt();
            let phi = uniform_in(rng, -std::f64::consts::PI, std::f64::consts::PI);
            Vec2::new(r * phi.cos(), r * phi.sin())
        },
        |q| clear_of(q, &starts, p.robot_separation()),
    )?;
    finish(ScenarioKind::Circular, seed, starts, goals, robot, &mut rng, p)
}

/// Starts, goals and robot uniform in the sampling square.
pub fn gen_random(n_ped: usize, seed: u64, p: &ScenarioParams) -> Result<SceneInstance> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = p.half_extent;
    let square = |rng: &mut ChaCha8Rng| Vec2::new(uniform_in(rng, -h, h), uniform_in(rng, -h, h));
    let mut starts: Vec<Vec2> = Vec::with_capacity(n_ped);
    let mut goals = Vec::with_capacity(n_ped);
    for i in 0..n_ped {
        let q = rejection(&mut rng, p, &format!("pedestrian {i}"), square, |q| {
            clear_of(q, &starts, p.ped_separation())
        })?;
        starts.push(q);
        goals.push(square(&mut rng));
    }
    let robot = rejection(&mut rng, p, "robot", square, |q| clear_of(q, &starts, p.robot_separation()))?;
    finish(ScenarioKind::Random, seed, starts, goals, robot, &mut rng, p)
}

/// Two opposing streams from the left and right edges; robot in the central band.
pub fn gen_parallel(n_ped: usize, seed: u64, p: &ScenarioParams) -> Result<SceneInstance> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = p.half_extent;
    let mut starts: Vec<Vec2> = Vec::with_capacity(n_ped);
    let mut goals = Vec::with_capacity(n_ped);
    for i in 0..n_ped {
        let side = if i % 2 == 0 { -1.0 } else { 1.0 };
        let q = rejection(
            &mut rng,
            p,
            &format!("pedestrian {i}"),
            |rng| Vec2::new(side * uniform_in(rng, h - p.edge_depth, h), uniform_in(rng, -h, h)),
            |q| clear_of(q, &starts, p.ped_separation()),
        )?;
        starts.push(q);
        goals.push(Vec2::new(-side * uniform_in(&mut rng, h - p.edge_depth, h), q.y));
    }
    let robot = rejection(
        &mut rng,
        p,
        "robot",
        |rng| Vec2::new(uniform_in(rng, -p.band_half_width, p.band_half_width), uniform_in(rng, -h, h)),
        |q| clear_of(q, &starts, p.robot_separation()),
    )?;
    finish(ScenarioKind::Parallel, seed, starts, goals, robot, &mut rng, p)
}

pub fn generate(kind: ScenarioKind, n_ped: usize, seed: u64, p: &ScenarioParams) -> Result<SceneInstance> {
    match kind {
        ScenarioKind::Circular => gen_circular(n_ped, seed, p),
        ScenarioKind::Random => gen_random(n_ped, seed, p),
        ScenarioKind::Parallel => gen_parallel(n_ped, seed, p),
    }
}

/// Derives an independent 64-bit seed from a master seed and two indices.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(master) ^ a) ^ b.rotate_left(32))
}

//! Field-of-view sensing, constant-velocity prediction and ghost tracks.
//!
//! Prediction uncertainty is modelled parametrically: the standard deviation
//! grows linearly with prediction depth, faster along the direction of motion
//! than across it. Pedestrians that leave the field of view keep their last
//! prediction (advanced one step per controller call) for a bounded number of
//! calls.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::TAU;

use crate::dynamics::{wrap_angle, RobotState};
use crate::error::{Error, Result};
use crate::Vec2;

/// Determinant floor below which a covariance is treated as singular [m⁴].
pub const DET_EPS: f64 = 1e-12;

/// Speeds below this use the world axes for the uncertainty frame [m/s].
pub const LOW_SPEED: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PedestrianState {
    pub id: usize,
    pub position: Vec2,
    pub velocity: Vec2,
}

impl PedestrianState {
    pub fn new(id: usize, position: Vec2, velocity: Vec2) -> Self {
        Self { id, position, velocity }
    }
}

/// Symmetric 2×2 covariance stored by its three distinct entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Covariance2 {
    pub sxx: f64,
    pub sxy: f64,
    pub syy: f64,
}

/// Eigen-decomposition of a [`Covariance2`]: `major ≥ minor`, `angle` is the
/// direction of the major eigenvector folded into `[-π/2, π/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigen2 {
    pub major: f64,
    pub minor: f64,
    pub angle: f64,
}

impl Covariance2 {
    pub fn new(sxx: f64, sxy: f64, syy: f64) -> Self {
        Self { sxx, sxy, syy }
    }

    pub fn isotropic(variance: f64) -> Self {
        Self::new(variance, 0.0, variance)
    }

    pub fn identity() -> Self {
        Self::isotropic(1.0)
    }

    /// Covariance with standard deviations `sd_along` / `sd_across` in a frame
    /// rotated by `heading`.
    pub fn from_axes(sd_along: f64, sd_across: f64, heading: f64) -> Self {
        let (s, c) = heading.sin_cos();
        let (l, t) = (sd_along * sd_along, sd_across * sd_across);
        Self::new(l * c * c + t * s * s, (l - t) * c * s, l * s * s + t * c * c)
    }

    pub fn det(&self) -> f64 {
        self.sxx * self.syy - self.sxy * self.sxy
    }

    pub fn trace(&self) -> f64 {
        self.sxx + self.syy
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new(self.sxx * c, self.sxy * c, self.syy * c)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.sxx > 0.0 && self.det() > DET_EPS && self.is_finite()
    }

    fn is_finite(&self) -> bool {
        self.sxx.is_finite() && self.sxy.is_finite() && self.syy.is_finite()
    }

    pub fn check_positive_definite(&self, track: Option<usize>) -> Result<()> {
        if self.is_positive_definite() {
            Ok(())
        } else {
            Err(Error::NotPositiveDefinite { track, det: self.det() })
        }
    }

    /// Inverse as `(ixx, ixy, iyy)`. Requires positive definiteness.
    pub fn inverse(&self, track: Option<usize>) -> Result<Covariance2> {
        self.check_positive_definite(track)?;
        let d = self.det();
        Ok(Covariance2::new(self.syy / d, -self.sxy / d, self.sxx / d))
    }

    /// Quadratic form `dᵀ S d`.
    pub fn quad(&self, d: &Vec2) -> f64 {
        self.sxx * d.x * d.x + 2.0 * self.sxy * d.x * d.y + self.syy * d.y * d.y
    }

    /// Matrix-vector product `S d`.
    pub fn apply(&self, d: &Vec2) -> Vec2 {
        Vec2::new(self.sxx * d.x + self.sxy * d.y, self.sxy * d.x + self.syy * d.y)
    }

    pub fn eigen(&self) -> Eigen2 {
        let mean = 0.5 * (self.sxx + self.syy);
        let half_diff = 0.5 * (self.sxx - self.syy);
        let radius = half_diff.hypot(self.sxy);
        // atan2(0, 0) = 0 gives the isotropic tie-break
        let mut angle = 0.5 * (2.0 * self.sxy).atan2(self.sxx - self.syy);
        if angle >= std::f64::consts::FRAC_PI_2 {
            angle -= std::f64::consts::PI;
        }
        Eigen2 {
            major: mean + radius,
            minor: mean - radius,
            angle,
        }
    }
}

/// Linear-in-time growth of the prediction standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthModel {
    /// Standard deviation at zero prediction depth [m].
    pub sigma0: f64,
    /// Growth rate along the direction of travel [m/s].
    pub alpha_long: f64,
    /// Growth rate across the direction of travel [m/s].
    pub alpha_lat: f64,
}

impl Default for GrowthModel {
    fn default() -> Self {
        Self {
            sigma0: 0.1,
            alpha_long: 0.3,
            alpha_lat: 0.1,
        }
    }
}

impl GrowthModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0.is_finite() && self.sigma0 > 0.0) {
            return Err(Error::Config(format!("growth sigma0 must be positive, got {}", self.sigma0)));
        }
        if !(self.alpha_long >= 0.0 && self.alpha_lat >= 0.0) {
            return Err(Error::Config("growth rates must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    /// Vision range [m].
    pub vis_range: f64,
    /// Full angle of view [rad].
    pub vis_angle: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            vis_range: 5.0,
            vis_angle: TAU,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.vis_range > 0.0 && self.vis_angle > 0.0 && self.vis_angle <= TAU;
        if !ok {
            return Err(Error::Config(format!(
                "sensor needs vis_range > 0 and 0 < vis_angle <= 2π, got {} / {}",
                self.vis_range, self.vis_angle
            )));
        }
        Ok(())
    }
}

/// Predicted means and covariances of one pedestrian over the horizon.
/// Index `k` holds the prediction `k + 1` controller steps ahead.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedTrack {
    pub ped_id: usize,
    pub means: Vec<Vec2>,
    pub covariances: Vec<Covariance2>,
    /// Controller calls since the pedestrian was last seen; 0 when visible.
    pub ghost_age: usize,
}

impl PredictedTrack {
    pub fn horizon(&self) -> usize {
        self.means.len()
    }

    pub fn is_ghost(&self) -> bool {
        self.ghost_age > 0
    }

    /// Drops the first element and repeats the last one.
    fn advance(&mut self) {
        if self.means.len() > 1 {
            self.means.rotate_left(1);
            let n = self.means.len();
            self.means[n - 1] = self.means[n - 2];
            self.covariances.rotate_left(1);
            self.covariances[n - 1] = self.covariances[n - 2];
        }
    }
}

/// Pedestrians inside the range and angular field of view of `robot`.
pub fn sense(robot: &RobotState, peds: &[PedestrianState], cfg: &SensorConfig) -> Vec<PedestrianState> {
    let r = robot.position();
    let half = 0.5 * cfg.vis_angle;
    peds.iter()
        .filter(|p| {
            let d = p.position - r;
            if d.norm() > cfg.vis_range {
                return false;
            }
            let bearing = d.y.atan2(d.x);
            wrap_angle(bearing - robot.theta).abs() <= half
        })
        .copied()
        .collect()
}

/// Constant-velocity means for steps `1..=horizon`.
pub fn predict_cv(ped: &PedestrianState, horizon: usize, dt: f64) -> Vec<Vec2> {
    (1..=horizon)
        .map(|k| ped.position + ped.velocity * (k as f64 * dt))
        .collect()
}

/// Prediction covariance `k ≥ 1` steps ahead.
pub fn covariance_growth(ped: &PedestrianState, k: usize, dt: f64, model: &GrowthModel) -> Result<Covariance2> {
    model.validate()?;
    Ok(growth_unchecked(ped, k, dt, model))
}

fn growth_unchecked(ped: &PedestrianState, k: usize, dt: f64, model: &GrowthModel) -> Covariance2 {
    let t = k as f64 * dt;
    let along = model.sigma0 + model.alpha_long * t;
    let across = model.sigma0 + model.alpha_lat * t;
    let heading = if ped.velocity.norm() < LOW_SPEED {
        0.0
    } else {
        ped.velocity.y.atan2(ped.velocity.x)
    };
    Covariance2::from_axes(along, across, heading)
}

/// Fresh prediction for a visible pedestrian.
pub fn predict_track(ped: &PedestrianState, horizon: usize, dt: f64, model: &GrowthModel) -> Result<PredictedTrack> {
    model.validate()?;
    Ok(PredictedTrack {
        ped_id: ped.id,
        means: predict_cv(ped, horizon, dt),
        covariances: (1..=horizon).map(|k| growth_unchecked(ped, k, dt, model)).collect(),
        ghost_age: 0,
    })
}

/// Refreshes visible pedestrians and ages the rest.
///
/// Ghost tracks keep their last prediction, shifted one step forward; their
/// covariances are frozen rather than grown further. Tracks whose age exceeds
/// `h_ghost` are dropped. Output is ordered by pedestrian id.
pub fn ghost_update(
    tracks: &[PredictedTrack],
    visible: &[PedestrianState],
    horizon: usize,
    h_ghost: usize,
    dt: f64,
    model: &GrowthModel,
) -> Result<Vec<PredictedTrack>> {
    let mut out: BTreeMap<usize, PredictedTrack> = BTreeMap::new();
    for ped in visible {
        out.insert(ped.id, predict_track(ped, horizon, dt, model)?);
    }
    for track in tracks {
        if out.contains_key(&track.ped_id) {
            continue;
        }
        let age = track.ghost_age + 1;
        if age > h_ghost {
            continue;
        }
        let mut ghost = track.clone();
        ghost.ghost_age = age;
        ghost.advance();
        out.insert(ghost.ped_id, ghost);
    }
    Ok(out.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn ped(id: usize, x: f64, y: f64, vx: f64, vy: f64) -> PedestrianState {
        PedestrianState::new(id, Vec2::new(x, y), Vec2::new(vx, vy))
    }

    #[test]
    fn sensing_range_and_fov() {
        let robot = RobotState::new(0.0, 0.0, 0.0);
        let far = ped(0, 6.0, 0.0, 0.0, 0.0);
        let behind = ped(1, -1.0, 0.0, 0.0, 0.0);
        let near = ped(2, 1.0, 0.0, 0.0, 0.0);
        let all = [far, behind, near];

        let full = SensorConfig::default();
        let seen: Vec<_> = sense(&robot, &all, &full).iter().map(|p| p.id).collect();
        assert_eq!(seen, vec![1, 2]);

        let half = SensorConfig { vis_range: 5.0, vis_angle: PI };
        let seen: Vec<_> = sense(&robot, &all, &half).iter().map(|p| p.id).collect();
        assert_eq!(seen, vec![2]);
    }

    #[test]
    fn cv_prediction() {
        let m = predict_cv(&ped(0, 0.0, 0.0, 1.0, 0.0), 3, 0.1);
        for (k, p) in m.iter().enumerate() {
            assert_abs_diff_eq!(p.x, 0.1 * (k + 1) as f64, epsilon = 1e-12);
            assert_abs_diff_eq!(p.y, 0.0);
        }
        let still = predict_cv(&ped(0, 2.0, -1.0, 0.0, 0.0), 4, 0.1);
        assert!(still.iter().all(|p| *p == Vec2::new(2.0, -1.0)));

        let m = predict_cv(&ped(0, 1.0, 1.0, -1.0, 2.0), 25, 0.1);
        assert_abs_diff_eq!(m[24].x, -1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m[24].y, 6.0, epsilon = 1e-12);
    }

    #[test]
    fn growth_examples() {
        let flat = GrowthModel { sigma0: 0.1, alpha_long: 0.0, alpha_lat: 0.0 };
        let c = covariance_growth(&ped(0, 0.0, 0.0, 0.0, 0.0), 1, 0.1, &flat).unwrap();
        assert_abs_diff_eq!(c.sxx, 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(c.syy, 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(c.sxy, 0.0);

        let model = GrowthModel { sigma0: 0.1, alpha_long: 0.5, alpha_lat: 0.1 };
        let c = covariance_growth(&ped(0, 0.0, 0.0, 1.0, 0.0), 10, 0.1, &model).unwrap();
        assert_abs_diff_eq!(c.sxx, 0.36, epsilon = 1e-12);
        assert_abs_diff_eq!(c.syy, 0.04, epsilon = 1e-12);
        assert_abs_diff_eq!(c.sxy, 0.0, epsilon = 1e-12);

        let c = covariance_growth(&ped(0, 0.0, 0.0, 0.0, 1.0), 10, 0.1, &model).unwrap();
        assert_abs_diff_eq!(c.sxx, 0.04, epsilon = 1e-12);
        assert_abs_diff_eq!(c.syy, 0.36, epsilon = 1e-12);
        assert_abs_diff_eq!(c.sxy, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn growth_rejects_bad_sigma() {
        let bad = GrowthModel { sigma0: 0.0, ..GrowthModel::default() };
        assert!(matches!(
            covariance_growth(&ped(0, 0.0, 0.0, 1.0, 0.0), 1, 0.1, &bad),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn eigen_of_correlated_covariance() {
        let e = Covariance2::new(0.025, 0.015, 0.025).eigen();
        assert_abs_diff_eq!(e.major, 0.04, epsilon = 1e-12);
        assert_abs_diff_eq!(e.minor, 0.01, epsilon = 1e-12);
        assert_abs_diff_eq!(e.angle, PI / 4.0, epsilon = 1e-12);
        assert_eq!(Covariance2::isotropic(0.3).eigen().angle, 0.0);
        // major axis along y folds to -π/2
        assert_abs_diff_eq!(Covariance2::new(0.01, 0.0, 0.04).eigen().angle, -PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn ghost_lifecycle() {
        let model = GrowthModel::default();
        let p = ped(7, 0.0, 0.0, 1.0, 0.0);
        let mut tracks = ghost_update(&[], &[p], 25, 20, 0.1, &model).unwrap();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].ghost_age, 0);
        assert_eq!(tracks[0].means, predict_cv(&p, 25, 0.1));

        let first = tracks[0].clone();
        for step in 1..=20 {
            tracks = ghost_update(&tracks, &[], 25, 20, 0.1, &model).unwrap();
            assert_eq!(tracks.len(), 1, "dropped early at step {step}");
            assert_eq!(tracks[0].ghost_age, step);
        }
        // drop first, repeat last
        assert_eq!(tracks[0].means[0], first.means[20]);
        assert_eq!(tracks[0].means[24], first.means[24]);
        assert_eq!(tracks[0].covariances[0], first.covariances[20]);

        tracks = ghost_update(&tracks, &[], 25, 20, 0.1, &model).unwrap();
        assert!(tracks.is_empty());
    }

    #[test]
    fn visibility_resets_ghost() {
        let model = GrowthModel::default();
        let p = ped(3, 1.0, 1.0, 0.0, 1.0);
        let mut tracks = ghost_update(&[], &[p], 5, 20, 0.1, &model).unwrap();
        tracks = ghost_update(&tracks, &[], 5, 20, 0.1, &model).unwrap();
        assert_eq!(tracks[0].ghost_age, 1);
        let moved = ped(3, 2.0, 1.0, 0.0, 1.0);
        tracks = ghost_update(&tracks, &[moved], 5, 20, 0.1, &model).unwrap();
        assert_eq!(tracks[0].ghost_age, 0);
        assert_eq!(tracks[0].means, predict_cv(&moved, 5, 0.1));
    }

    #[test]
    fn unseen_pedestrian_has_no_track() {
        let tracks = ghost_update(&[], &[], 25, 20, 0.1, &GrowthModel::default()).unwrap();
        assert!(tracks.is_empty());
    }

    #[test]
    fn zero_ghost_budget_drops_immediately() {
        let model = GrowthModel::default();
        let tracks = ghost_update(&[], &[ped(0, 0.0, 0.0, 0.0, 0.0)], 5, 0, 0.1, &model).unwrap();
        assert!(ghost_update(&tracks, &[], 5, 0, 0.1, &model).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn growth_is_positive_definite(
            sigma0 in 1e-3..1.0f64, al in 0.0..5.0f64, at in 0.0..5.0f64,
            vx in -3.0..3.0f64, vy in -3.0..3.0f64, k in 1usize..10_000,
        ) {
            let model = GrowthModel { sigma0, alpha_long: al, alpha_lat: at };
            let c = covariance_growth(&ped(0, 0.0, 0.0, vx, vy), k, 0.1, &model).unwrap();
            prop_assert!(c.is_positive_definite(), "{c:?}");
        }

        #[test]
        fn trace_non_decreasing(vx in -3.0..3.0f64, vy in -3.0..3.0f64, h in 1usize..60) {
            let t = predict_track(&ped(0, 0.0, 0.0, vx, vy), h, 0.1, &GrowthModel::default()).unwrap();
            prop_assert_eq!(t.means.len(), t.covariances.len());
            for w in t.covariances.windows(2) {
                prop_assert!(w[1].trace() >= w[0].trace() - 1e-15);
            }
        }

        #[test]
        fn cv_means_are_collinear(
            x in -4.0..4.0f64, y in -4.0..4.0f64, vx in -2.0..2.0f64, vy in -2.0..2.0f64, h in 1usize..40,
        ) {
            let p = ped(0, x, y, vx, vy);
            for m in predict_cv(&p, h, 0.1) {
                let d = m - p.position;
                let cross = d.x * vy - d.y * vx;
                prop_assert!(cross.abs() < 1e-9);
            }
        }

        #[test]
        fn ghost_age_bounded(
            visible_mask in proptest::collection::vec(proptest::bool::ANY, 1..60),
            h_ghost in 0usize..25,
        ) {
            let model = GrowthModel::default();
            let p = ped(0, 0.0, 0.0, 1.0, 0.0);
            let q = ped(1, 1.0, 0.0, 0.0, 1.0);
            let mut tracks = Vec::new();
            for (i, vis) in visible_mask.iter().enumerate() {
                let seen: Vec<_> = if *vis { vec![p] } else if i % 3 == 0 { vec![q] } else { vec![] };
                tracks = ghost_update(&tracks, &seen, 10, h_ghost, 0.1, &model).unwrap();
                prop_assert!(tracks.iter().all(|t| t.ghost_age <= h_ghost));
            }
        }
    }
}

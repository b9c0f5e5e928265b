//! Cost terms and constraint residuals of the social MPC family.
//!
//! Every term that depends on the robot position comes with its analytic
//! gradient, which the horizon solver chains through the unicycle rollout.
//! Residuals follow the convention `residual ≥ 0 ⇔ constraint satisfied`.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::dynamics::ControlInput;
use crate::error::{Error, Result};
use crate::perception::{Covariance2, Eigen2};
use crate::Vec2;

/// Distances below this are clamped in the inverse-distance penalties [m].
pub const DIV_EPS: f64 = 1e-3;
/// Floor for the target-distance normaliser [m].
pub const DEN_EPS: f64 = 1e-6;
/// Upper bound of the adaptive ellipse slack.
pub const AELC_DELTA_MAX: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Weights {
    pub q_u: Matrix2<f64>,
    pub q_ubar: Matrix3<f64>,
    pub q_r: f64,
    pub q_ed: f64,
    pub q_md: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            q_u: Matrix2::identity(),
            q_ubar: Matrix3::from_diagonal(&Vector3::new(0.005, 0.005, 100_000.0)),
            q_r: 1000.0,
            q_ed: 500.0,
            q_md: 1000.0,
        }
    }
}

fn is_symmetric_psd2(m: &Matrix2<f64>) -> bool {
    (m - m.transpose()).abs().max() <= 1e-12 && m.symmetric_eigenvalues().min() >= -1e-12
}

fn is_symmetric_psd3(m: &Matrix3<f64>) -> bool {
    (m - m.transpose()).abs().max() <= 1e-12 && m.symmetric_eigenvalues().min() >= -1e-12
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        if !is_symmetric_psd2(&self.q_u) || !is_symmetric_psd3(&self.q_ubar) {
            return Err(Error::Config("weight matrices must be symmetric PSD".into()));
        }
        if !(self.q_r >= 0.0 && self.q_ed >= 0.0 && self.q_md >= 0.0) {
            return Err(Error::Config("scalar weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Body radii, planning margin and collision-probability threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyGeometry {
    pub r_rob: f64,
    pub r_ped: f64,
    pub d_safe: f64,
    pub p_col: f64,
}

impl Default for SafetyGeometry {
    fn default() -> Self {
        Self {
            r_rob: 0.35,
            r_ped: 0.3,
            d_safe: 0.3,
            p_col: 0.01,
        }
    }
}

impl SafetyGeometry {
    /// Centre distance at which bodies touch.
    pub fn body_sum(&self) -> f64 {
        self.r_rob + self.r_ped
    }

    /// Centre distance required by the planning constraints.
    pub fn margin(&self) -> f64 {
        self.r_rob + self.r_ped + self.d_safe
    }

    /// Volume of the sphere of radius [`margin`](Self::margin) [m³].
    pub fn sphere_volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.margin().powi(3)
    }

    /// Lower bound of the adaptive Euclidean/Mahalanobis slack: the relaxed
    /// Euclidean margin never drops below body contact.
    pub fn delta_min(&self) -> f64 {
        self.body_sum().powi(2) - self.margin().powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_rob > 0.0 && self.r_ped > 0.0 && self.d_safe >= 0.0) {
            return Err(Error::Config("radii must be positive and d_safe non-negative".into()));
        }
        if !(self.p_col > 0.0 && self.p_col < 1.0) {
            return Err(Error::Config(format!("p_col must lie in (0, 1), got {}", self.p_col)));
        }
        Ok(())
    }
}

/// Bounding ellipse: semi-axes `a ≥ b > 0`, major axis at angle `psi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseParams {
    pub a: f64,
    pub b: f64,
    pub psi: f64,
}

/// Value and position gradient of a cost term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEval {
    pub value: f64,
    pub grad: Vec2,
    /// At least one distance hit the [`DIV_EPS`] clamp.
    pub saturated: bool,
}

/// Value and gradients of a constraint residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualEval {
    pub value: f64,
    pub grad_r: Vec2,
    pub grad_delta: f64,
}

pub fn control_cost(u: &ControlInput, w: &Weights) -> f64 {
    let v = Vector2::new(u.v, u.omega);
    v.dot(&(w.q_u * v))
}

/// Gradient of [`control_cost`] with respect to `(v, ω)`.
pub fn control_cost_grad(u: &ControlInput, w: &Weights) -> [f64; 2] {
    let v = Vector2::new(u.v, u.omega);
    let g = (w.q_u + w.q_u.transpose()) * v;
    [g.x, g.y]
}

pub fn augmented_control_cost(u: &ControlInput, delta: f64, w: &Weights) -> f64 {
    let v = Vector3::new(u.v, u.omega, delta);
    v.dot(&(w.q_ubar * v))
}

/// Gradient of [`augmented_control_cost`] with respect to `(v, ω, δ)`.
pub fn augmented_control_cost_grad(u: &ControlInput, delta: f64, w: &Weights) -> [f64; 3] {
    let v = Vector3::new(u.v, u.omega, delta);
    let g = (w.q_ubar + w.q_ubar.transpose()) * v;
    [g.x, g.y, g.z]
}

/// Squared distance to the target normalised by the distance at the start of
/// the horizon.
pub fn target_cost(r_k: &Vec2, r_0: &Vec2, target: &Vec2, q_r: f64) -> CostEval {
    let den = (r_0 - target).norm().max(DEN_EPS);
    let scale = q_r / (den * den);
    let d = r_k - target;
    CostEval {
        value: scale * d.norm_squared(),
        grad: d * (2.0 * scale),
        saturated: false,
    }
}

pub fn terminal_cost(r_h: &Vec2, r_0: &Vec2, target: &Vec2, q_r: f64) -> CostEval {
    target_cost(r_h, r_0, target, q_r)
}

pub fn stage_cost(u: &ControlInput, r_k: &Vec2, r_0: &Vec2, target: &Vec2, w: &Weights) -> f64 {
    control_cost(u, w) + target_cost(r_k, r_0, target, w.q_r).value
}

pub fn euclidean_distance(r: &Vec2, p: &Vec2) -> f64 {
    (r - p).norm()
}

/// Inverse squared distance penalty summed over the pedestrian means.
pub fn ed_cost(r: &Vec2, peds: &[Vec2], q_ed: f64) -> CostEval {
    let mut out = CostEval { value: 0.0, grad: Vec2::zeros(), saturated: false };
    for p in peds {
        let d = r - p;
        let d2 = d.norm_squared();
        if d2 < DIV_EPS * DIV_EPS {
            out.value += q_ed / (DIV_EPS * DIV_EPS);
            out.saturated = true;
        } else {
            out.value += q_ed / d2;
            out.grad -= d * (2.0 * q_ed / (d2 * d2));
        }
    }
    out
}

pub fn mahalanobis_distance(r: &Vec2, p: &Vec2, s: &Covariance2) -> Result<f64> {
    let inv = s.inverse(None)?;
    Ok(inv.quad(&(r - p)).max(0.0).sqrt())
}

/// One pedestrian's contribution to the Mahalanobis penalty given `S⁻¹`.
pub(crate) fn md_term(r: &Vec2, p: &Vec2, s_inv: &Covariance2, q_md: f64, out: &mut CostEval) {
    let d = r - p;
    let m2 = s_inv.quad(&d);
    if m2 < DIV_EPS * DIV_EPS {
        out.value += q_md / (DIV_EPS * DIV_EPS);
        out.saturated = true;
    } else {
        out.value += q_md / m2;
        out.grad -= s_inv.apply(&d) * (2.0 * q_md / (m2 * m2));
    }
}

/// Inverse squared Mahalanobis distance penalty over `(mean, covariance)` pairs.
pub fn md_cost(r: &Vec2, peds: &[(Vec2, Covariance2)], q_md: f64) -> Result<CostEval> {
    let mut out = CostEval { value: 0.0, grad: Vec2::zeros(), saturated: false };
    for (i, (p, s)) in peds.iter().enumerate() {
        let inv = s.inverse(Some(i))?;
        md_term(r, p, &inv, q_md, &mut out);
    }
    Ok(out)
}

pub fn edc_residual(r: &Vec2, p: &Vec2, g: &SafetyGeometry) -> ResidualEval {
    edc_delta_residual(r, p, g, 0.0)
}

pub fn edc_delta_residual(r: &Vec2, p: &Vec2, g: &SafetyGeometry, delta: f64) -> ResidualEval {
    let d = r - p;
    ResidualEval {
        value: d.norm_squared() - g.margin().powi(2) - delta,
        grad_r: d * 2.0,
        grad_delta: -1.0,
    }
}

/// Threshold `κ` on the squared Mahalanobis distance that keeps the
/// approximate collision probability below `p_col`, clamped at zero.
pub fn mdc_threshold(s: &Covariance2, g: &SafetyGeometry) -> Result<f64> {
    s.check_positive_definite(None)?;
    // det(2πS) = (2π)² det(S) for a 2×2 matrix
    let norm = 2.0 * PI * s.det().sqrt();
    let kappa = -2.0 * (norm * g.p_col / g.sphere_volume()).ln();
    Ok(kappa.max(0.0))
}

pub(crate) fn mdc_term(r: &Vec2, p: &Vec2, s_inv: &Covariance2, kappa: f64, delta: f64) -> ResidualEval {
    let d = r - p;
    ResidualEval {
        value: s_inv.quad(&d) - kappa - delta,
        grad_r: s_inv.apply(&d) * 2.0,
        grad_delta: -1.0,
    }
}

pub fn mdc_residual(r: &Vec2, p: &Vec2, s: &Covariance2, g: &SafetyGeometry) -> Result<ResidualEval> {
    mdc_delta_residual(r, p, s, g, 0.0)
}

pub fn mdc_delta_residual(r: &Vec2, p: &Vec2, s: &Covariance2, g: &SafetyGeometry, delta: f64) -> Result<ResidualEval> {
    let inv = s.inverse(None)?;
    Ok(mdc_term(r, p, &inv, mdc_threshold(s, g)?, delta))
}

/// Pre-decomposed iso-contour of one prediction; evaluates the (adaptive)
/// ellipse constraint for any slack value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsoContour {
    /// `γ√λ⁽¹⁾`, `γ√λ⁽²⁾`.
    pub scaled_major: f64,
    pub scaled_minor: f64,
    pub psi: f64,
    /// Constant inflation added to both semi-axes [m].
    pub inflation: f64,
}

impl IsoContour {
    pub fn new(s: &Covariance2, gamma: f64, inflation: f64) -> Result<Self> {
        s.check_positive_definite(None)?;
        if gamma.is_nan() || gamma <= 0.0 {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        let Eigen2 { major, minor, angle } = s.eigen();
        Ok(Self {
            scaled_major: gamma * major.sqrt(),
            scaled_minor: gamma * minor.max(0.0).sqrt(),
            psi: angle,
            inflation,
        })
    }

    pub fn params(&self, delta: f64) -> EllipseParams {
        EllipseParams {
            a: self.scaled_major * (1.0 - delta) + self.inflation,
            b: self.scaled_minor * (1.0 - delta) + self.inflation,
            psi: self.psi,
        }
    }

    pub fn residual(&self, r: &Vec2, p: &Vec2, delta: f64) -> ResidualEval {
        let (value, grad_r, (qa, qb)) = ellipse_eval(&(r - p), &self.params(delta));
        ResidualEval {
            value,
            grad_r,
            grad_delta: 2.0 * (qa * self.scaled_major + qb * self.scaled_minor),
        }
    }
}

/// Semi-axes and orientation of the `gamma`-sigma bounding ellipse inflated by
/// the safety margin. Non-adaptive callers pass `delta = 0`.
pub fn ellipse_from_covariance(s: &Covariance2, gamma: f64, g: &SafetyGeometry, delta: f64) -> Result<EllipseParams> {
    Ok(IsoContour::new(s, gamma, g.margin())?.params(delta))
}

/// `qᵀ D q − 1` with `q` the offset expressed in the ellipse frame.
///
/// `Rot(ψ)` here is the world-to-ellipse frame change `[[cos ψ, sin ψ], [−sin ψ, cos ψ]]`,
/// so the major semi-axis lies along the direction `ψ` in world coordinates.
pub fn elc_residual(r: &Vec2, p: &Vec2, e: &EllipseParams) -> ResidualEval {
    let (value, grad_r, _) = ellipse_eval(&(r - p), e);
    ResidualEval { value, grad_r, grad_delta: 0.0 }
}

/// Residual, position gradient and `(q₁²/a³, q₂²/b³)` for the slack derivative.
fn ellipse_eval(d: &Vec2, e: &EllipseParams) -> (f64, Vec2, (f64, f64)) {
    let (s, c) = e.psi.sin_cos();
    let q1 = c * d.x + s * d.y;
    let q2 = -s * d.x + c * d.y;
    let (ia2, ib2) = (1.0 / (e.a * e.a), 1.0 / (e.b * e.b));
    (
        q1 * q1 * ia2 + q2 * q2 * ib2 - 1.0,
        Vec2::new(c, s) * (2.0 * q1 * ia2) + Vec2::new(-s, c) * (2.0 * q2 * ib2),
        (q1 * q1 * ia2 / e.a, q2 * q2 * ib2 / e.b),
    )
}

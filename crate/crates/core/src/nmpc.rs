//! Receding-horizon transcription and solver.
//!
//! The horizon problem is single-shooting: the decision variables are the
//! `H` controls (plus one slack `δ` shared across the horizon for adaptive
//! constraints) and robot positions are produced by rolling the unicycle model
//! forward. Inequality constraints are handled with an augmented Lagrangian,
//! control bounds by projection, and each subproblem is minimised with
//! projected Newton steps and Armijo backtracking.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::controllers::{ConstraintType, ControllerSpec, CostComponent};
use crate::dynamics::{step_unchecked, ControlInput, RobotState};
use crate::error::{Error, Result};
use crate::perception::{Covariance2, PredictedTrack};
use crate::socialcost::{
    augmented_control_cost, augmented_control_cost_grad, control_cost, control_cost_grad, ed_cost, md_term, mdc_term,
    mdc_threshold, target_cost, CostEval, IsoContour, ResidualEval, Weights, AELC_DELTA_MAX,
};
use crate::Vec2;

/// Relative step of the finite-difference Hessian.
const FD_STEP: f64 = 1e-6;
/// Upper bound on the distance at which a bound counts as active.
const ACTIVE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Maximum constraint violation accepted as feasible.
    pub tol_con: f64,
    /// Relative objective decrease below which a subproblem is considered solved.
    pub tol_obj: f64,
    /// Projected-gradient norm below which a subproblem is considered solved.
    pub tol_grad: f64,
    /// Gradient iterations summed over all outer iterations.
    pub iter_max: usize,
    pub max_outer: usize,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub penalty_max: f64,
    pub armijo_c: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_con: 1e-3,
            tol_obj: 1e-6,
            tol_grad: 1e-6,
            iter_max: 200,
            max_outer: 20,
            penalty_init: 100000.0,
            penalty_growth: 10.0,
            penalty_max: 1e8,
            armijo_c: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcParams {
    pub horizon: usize,
    /// Controller step [s].
    pub dt: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    /// Distance to the target below which no problem is solved [m].
    pub goal_tolerance: f64,
    /// Euler substeps per controller step in the prediction model. Matching
    /// the simulator's integration step makes predictions exact under
    /// sample-and-hold.
    pub substeps: usize,
    pub solver: SolverSettings,
}

impl Default for MpcParams {
    fn default() -> Self {
        Self {
            horizon: 25,
            dt: 0.1,
            v_min: 0.0,
            v_max: 2.0,
            omega_min: -2.0,
            omega_max: 2.0,
            goal_tolerance: 0.05,
            substeps: 10,
            solver: SolverSettings::default(),
        }
    }
}

impl MpcParams {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least one step".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("controller dt must be positive, got {}", self.dt)));
        }
        let ordered = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !ordered(self.v_min, self.v_max) || !ordered(self.omega_min, self.omega_max) {
            return Err(Error::Config("control bounds must be finite and ordered".into()));
        }
        if self.substeps == 0 {
            return Err(Error::Config("substeps must be at least one".into()));
        }
        if self.solver.iter_max == 0 || self.solver.max_outer == 0 {
            return Err(Error::Config("solver budgets must be positive".into()));
        }
        Ok(())
    }

    pub fn clamp(&self, u: ControlInput) -> ControlInput {
        ControlInput::new(u.v.clamp(self.v_min, self.v_max), u.omega.clamp(self.omega_min, self.omega_max))
    }
}

/// Penalty attached to one horizon step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SocialTerm {
    Euclidean { center: Vec2, weight: f64 },
    /// `inv` is the inverse prediction covariance.
    Mahalanobis { center: Vec2, inv: Covariance2, weight: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstraintKind {
    Euclidean { center: Vec2, margin_sq: f64 },
    Mahalanobis { center: Vec2, inv: Covariance2, kappa: f64 },
    Ellipse { center: Vec2, contour: IsoContour },
}

/// One inequality `residual(r_{step+1}, δ) ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonConstraint {
    /// Horizon index `k`; the constraint applies to the robot position after `k + 1` controls.
    pub step: usize,
    pub ped_id: usize,
    pub kind: ConstraintKind,
}

impl HorizonConstraint {
    pub fn residual(&self, r: &Vec2, delta: f64) -> ResidualEval {
        match &self.kind {
            ConstraintKind::Euclidean { center, margin_sq } => {
                let d = r - center;
                ResidualEval {
                    value: d.norm_squared() - margin_sq - delta,
                    grad_r: d * 2.0,
                    grad_delta: -1.0,
                }
            }
            ConstraintKind::Mahalanobis { center, inv, kappa } => mdc_term(r, center, inv, *kappa, delta),
            ConstraintKind::Ellipse { center, contour } => contour.residual(r, center, delta),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonProblem {
    pub horizon: usize,
    pub dt: f64,
    pub initial: RobotState,
    pub target: Vec2,
    pub params: MpcParams,
    pub weights: Weights,
    /// Adaptive problems optimise a shared slack within these bounds and use
    /// the augmented control cost.
    pub delta_bounds: Option<(f64, f64)>,
    /// Indexed by horizon step; terms apply to the position after `k + 1` controls.
    pub social: Vec<Vec<SocialTerm>>,
    pub constraints: Vec<HorizonConstraint>,
}

/// Builds the horizon problem for `spec` around the current estimate.
pub fn transcribe(
    spec: &ControllerSpec,
    state: &RobotState,
    target: &Vec2,
    tracks: &[PredictedTrack],
    params: &MpcParams,
) -> Result<HorizonProblem> {
    params.validate()?;
    spec.weights.validate()?;
    spec.geometry.validate()?;
    if !state.is_finite() {
        return Err(Error::NonFinite("robot state"));
    }
    let h = params.horizon;
    for t in tracks {
        if t.means.len() < h {
            return Err(Error::Config(format!(
                "track {} predicts {} steps, horizon needs {h}",
                t.ped_id,
                t.means.len()
            )));
        }
        if spec.needs_covariance() && t.covariances.len() < h {
            return Err(Error::Config(format!("track {} lacks covariances for {h} steps", t.ped_id)));
        }
    }

    let g = &spec.geometry;
    let mut social = vec![Vec::new(); h];
    for (k, terms) in social.iter_mut().enumerate() {
        for t in tracks {
            match spec.cost_component {
                CostComponent::None => {}
                CostComponent::Euclidean => terms.push(SocialTerm::Euclidean {
                    center: t.means[k],
                    weight: spec.weights.q_ed,
                }),
                CostComponent::Mahalanobis => terms.push(SocialTerm::Mahalanobis {
                    center: t.means[k],
                    inv: t.covariances[k].inverse(Some(t.ped_id))?,
                    weight: spec.weights.q_md,
                }),
            }
        }
    }

    let mut constraints = Vec::new();
    if spec.constraint != ConstraintType::None {
        constraints.reserve(h * tracks.len());
        for k in 0..h {
            for t in tracks {
                let center = t.means[k];
                let kind = match spec.constraint {
                    ConstraintType::None => unreachable!(),
                    ConstraintType::Edc | ConstraintType::Aedc => ConstraintKind::Euclidean {
                        center,
                        margin_sq: g.margin().powi(2),
                    },
                    ConstraintType::Mdc | ConstraintType::Amdc => {
                        let s = &t.covariances[k];
                        ConstraintKind::Mahalanobis {
                            center,
                            inv: s.inverse(Some(t.ped_id))?,
                            kappa: mdc_threshold(s, g)?,
                        }
                    }
                    ConstraintType::Elc { gamma } | ConstraintType::Aelc { gamma } => {
                        t.covariances[k].check_positive_definite(Some(t.ped_id))?;
                        ConstraintKind::Ellipse {
                            center,
                            contour: IsoContour::new(&t.covariances[k], gamma, g.margin())?,
                        }
                    }
                };
                constraints.push(HorizonConstraint { step: k, ped_id: t.ped_id, kind });
            }
        }
    }

    let delta_bounds = match spec.constraint {
        ConstraintType::Aedc | ConstraintType::Amdc => Some((g.delta_min(), 0.0)),
        ConstraintType::Aelc { .. } => Some((0.0, AELC_DELTA_MAX)),
        _ => None,
    };

    Ok(HorizonProblem {
        horizon: h,
        dt: params.dt,
        initial: *state,
        target: *target,
        params: *params,
        weights: spec.weights,
        delta_bounds,
        social,
        constraints,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Infeasible,
}

/// Objective and violation after one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterateSummary {
    pub cost: f64,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Gradient iterations used.
    pub iterations: usize,
    pub outer_iterations: usize,
    pub final_cost: f64,
    pub max_constraint_violation: f64,
    pub first_control: ControlInput,
    pub delta: Option<f64>,
    pub controls: Vec<ControlInput>,
    pub history: Vec<IterateSummary>,
}

/// Violation used to rank iterates: anything within tolerance counts as zero.
pub fn effective_violation(violation: f64, tol_con: f64) -> f64 {
    if violation <= tol_con {
        0.0
    } else {
        violation
    }
}

struct Workspace {
    /// States at controller-step boundaries.
    states: Vec<RobotState>,
    /// States at every integration substep.
    fine: Vec<RobotState>,
    grad_pos: Vec<Vec2>,
}

impl HorizonProblem {
    pub fn n_vars(&self) -> usize {
        2 * self.horizon + usize::from(self.delta_bounds.is_some())
    }

    fn workspace(&self) -> Workspace {
        Workspace {
            states: vec![self.initial; self.horizon + 1],
            fine: vec![self.initial; self.horizon * self.params.substeps + 1],
            grad_pos: vec![Vec2::zeros(); self.horizon + 1],
        }
    }

    fn lower_upper(&self) -> (Vec<f64>, Vec<f64>) {
        let p = &self.params;
        let mut lo = Vec::with_capacity(self.n_vars());
        let mut hi = Vec::with_capacity(self.n_vars());
        for _ in 0..self.horizon {
            lo.extend([p.v_min, p.omega_min]);
            hi.extend([p.v_max, p.omega_max]);
        }
        if let Some((a, b)) = self.delta_bounds {
            lo.push(a);
            hi.push(b);
        }
        (lo, hi)
    }

    fn pack(&self, controls: &[ControlInput], delta: f64) -> Vec<f64> {
        let mut z: Vec<f64> = controls.iter().flat_map(|u| [u.v, u.omega]).collect();
        if self.delta_bounds.is_some() {
            z.push(delta);
        }
        z
    }

    fn unpack(&self, z: &[f64]) -> (Vec<ControlInput>, Option<f64>) {
        let controls = z[..2 * self.horizon]
            .chunks_exact(2)
            .map(|c| ControlInput::new(c[0], c[1]))
            .collect();
        (controls, self.delta_bounds.map(|_| z[2 * self.horizon]))
    }

    fn delta_of(&self, z: &[f64]) -> f64 {
        if self.delta_bounds.is_some() {
            z[2 * self.horizon]
        } else {
            0.0
        }
    }

    fn control(z: &[f64], k: usize) -> ControlInput {
        ControlInput::new(z[2 * k], z[2 * k + 1])
    }

    /// Positions `r_1..r_H` produced by `controls`.
    pub fn rollout_positions(&self, controls: &[ControlInput]) -> Vec<Vec2> {
        let m = self.params.substeps;
        let h = self.dt / m as f64;
        let mut s = self.initial;
        controls
            .iter()
            .take(self.horizon)
            .map(|u| {
                for _ in 0..m {
                    s = step_unchecked(&s, u, h);
                }
                s.position()
            })
            .collect()
    }

    /// Objective value (without constraint terms).
    pub fn objective(&self, controls: &[ControlInput], delta: f64) -> f64 {
        let z = self.pack(controls, delta);
        self.evaluate(&z, None, None, &mut self.workspace())
    }

    /// Constraint residuals in the order of [`HorizonProblem::constraints`].
    pub fn constraint_values(&self, controls: &[ControlInput], delta: f64) -> Vec<f64> {
        let positions = self.rollout_positions(controls);
        self.constraints
            .iter()
            .map(|c| c.residual(&positions[c.step], delta).value)
            .collect()
    }

    pub fn max_violation(&self, controls: &[ControlInput], delta: f64) -> f64 {
        self.constraint_values(controls, delta)
            .into_iter()
            .fold(0.0, |m, g| m.max(-g))
    }

    fn rollout_into(&self, z: &[f64], ws: &mut Workspace) {
        let m = self.params.substeps;
        let h = self.dt / m as f64;
        ws.fine[0] = self.initial;
        ws.states[0] = self.initial;
        for k in 0..self.horizon {
            let u = Self::control(z, k);
            for j in k * m..(k + 1) * m {
                ws.fine[j + 1] = step_unchecked(&ws.fine[j], &u, h);
            }
            ws.states[k + 1] = ws.fine[(k + 1) * m];
        }
    }

    /// Objective plus, when `al = Some((λ, ρ))`, the augmented-Lagrangian
    /// terms. Writes the gradient with respect to `z` into `grad` if given.
    fn evaluate(&self, z: &[f64], al: Option<(&[f64], f64)>, mut grad: Option<&mut [f64]>, ws: &mut Workspace) -> f64 {
        self.rollout_into(z, ws);
        let delta = self.delta_of(z);
        let want_grad = grad.is_some();
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        ws.grad_pos.fill(Vec2::zeros());
        let r0 = self.initial.position();
        let w = &self.weights;
        let mut total = 0.0;

        for k in 0..self.horizon {
            let u = Self::control(z, k);
            if self.delta_bounds.is_some() {
                total += augmented_control_cost(&u, delta, w);
                if let Some(g) = grad.as_deref_mut() {
                    let cg = augmented_control_cost_grad(&u, delta, w);
                    g[2 * k] += cg[0];
                    g[2 * k + 1] += cg[1];
                    g[2 * self.horizon] += cg[2];
                }
            } else {
                total += control_cost(&u, w);
                if let Some(g) = grad.as_deref_mut() {
                    let cg = control_cost_grad(&u, w);
                    g[2 * k] += cg[0];
                    g[2 * k + 1] += cg[1];
                }
            }
        }

        // stage target terms at r_0..r_{H-1} plus the terminal term at r_H
        for k in 0..=self.horizon {
            let c = target_cost(&ws.states[k].position(), &r0, &self.target, w.q_r);
            total += c.value;
            ws.grad_pos[k] += c.grad;
        }

        for (k, terms) in self.social.iter().enumerate() {
            let r = ws.states[k + 1].position();
            let mut acc = CostEval { value: 0.0, grad: Vec2::zeros(), saturated: false };
            for term in terms {
                match term {
                    SocialTerm::Euclidean { center, weight } => {
                        let c = ed_cost(&r, std::slice::from_ref(center), *weight);
                        acc.value += c.value;
                        acc.grad += c.grad;
                    }
                    SocialTerm::Mahalanobis { center, inv, weight } => md_term(&r, center, inv, *weight, &mut acc),
                }
            }
            total += acc.value;
            ws.grad_pos[k + 1] += acc.grad;
        }

        if let Some((lambda, rho)) = al {
            let mut grad_delta = 0.0;
            for (c, &lam) in self.constraints.iter().zip(lambda) {
                let res = c.residual(&ws.states[c.step + 1].position(), delta);
                let shifted = (lam - rho * res.value).max(0.0);
                total += (shifted * shifted - lam * lam) / (2.0 * rho);
                if want_grad && shifted > 0.0 {
                    ws.grad_pos[c.step + 1] -= res.grad_r * shifted;
                    grad_delta -= res.grad_delta * shifted;
                }
            }
            if let Some(g) = grad.as_deref_mut() {
                if self.delta_bounds.is_some() {
                    g[2 * self.horizon] += grad_delta;
                }
            }
        }

        if let Some(g) = grad {
            // adjoint sweep through the unicycle rollout
            let m = self.params.substeps;
            let h = self.dt / m as f64;
            let (mut ax, mut ay, mut ath) = (0.0, 0.0, 0.0);
            for j in (0..self.horizon * m).rev() {
                let k = j / m;
                if (j + 1) % m == 0 {
                    ax += ws.grad_pos[k + 1].x;
                    ay += ws.grad_pos[k + 1].y;
                }
                let (sin, cos) = ws.fine[j].theta.sin_cos();
                let v = z[2 * k];
                g[2 * k] += (ax * cos + ay * sin) * h;
                g[2 * k + 1] += ath * h;
                ath += (-ax * sin + ay * cos) * v * h;
            }
        }
        total
    }

    /// Gradient of the objective (or of the augmented Lagrangian) with
    /// respect to the packed decision vector `(v₀, ω₀, …, v_{H−1}, ω_{H−1}[, δ])`.
    pub fn gradient(&self, controls: &[ControlInput], delta: f64, al: Option<(&[f64], f64)>) -> (f64, Vec<f64>) {
        let z = self.pack(controls, delta);
        let mut g = vec![0.0; z.len()];
        let v = self.evaluate(&z, al, Some(&mut g), &mut self.workspace());
        (v, g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InnerExit {
    Stationary,
    SmallDecrease,
    Budget,
}

struct Subproblem<'a> {
    problem: &'a HorizonProblem,
    scale: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    ws: Workspace,
    z: Vec<f64>,
    gz: Vec<f64>,
}

impl Subproblem<'_> {
    /// Value and scaled gradient at scaled point `y`.
    fn eval(&mut self, y: &[f64], al: Option<(&[f64], f64)>, grad: Option<&mut [f64]>) -> f64 {
        for ((z, y), s) in self.z.iter_mut().zip(y).zip(&self.scale) {
            *z = y * s;
        }
        match grad {
            Some(g) => {
                let v = self.problem.evaluate(&self.z, al, Some(&mut self.gz), &mut self.ws);
                for ((g, gz), s) in g.iter_mut().zip(&self.gz).zip(&self.scale) {
                    *g = gz * s;
                }
                v
            }
            None => self.problem.evaluate(&self.z, al, None, &mut self.ws),
        }
    }

    fn project(&self, y: &mut [f64]) {
        for (i, v) in y.iter_mut().enumerate() {
            *v = v.clamp(self.lo[i], self.hi[i]);
        }
    }

    /// Forward-difference Hessian of the analytic gradient, symmetrised.
    fn hessian(&mut self, y: &[f64], al: Option<(&[f64], f64)>, g: &[f64]) -> DMatrix<f64> {
        let n = y.len();
        let mut hess = DMatrix::zeros(n, n);
        let mut yp = y.to_vec();
        let mut gp = vec![0.0; n];
        for j in 0..n {
            let h = FD_STEP * (1.0 + y[j].abs());
            yp[j] = y[j] + h;
            self.eval(&yp, al, Some(&mut gp));
            yp[j] = y[j];
            for i in 0..n {
                hess[(i, j)] = (gp[i] - g[i]) / h;
            }
        }
        let t = hess.transpose();
        (hess + t) * 0.5
    }

    /// Newton direction on the free variables, damped until the reduced
    /// Hessian is positive definite. Variables held at a bound get the
    /// negative gradient, which the projection then cancels.
    fn newton_direction(&self, hess: &DMatrix<f64>, g: &[f64], free: &[usize]) -> Option<Vec<f64>> {
        let mut d: Vec<f64> = g.iter().map(|gi| -gi).collect();
        if free.is_empty() {
            return Some(d);
        }
        let m = free.len();
        let reduced = DMatrix::from_fn(m, m, |i, j| hess[(free[i], free[j])]);
        let rhs = DVector::from_iterator(m, free.iter().map(|&i| -g[i]));
        let diag_max = (0..m).fold(1.0f64, |acc, i| acc.max(reduced[(i, i)].abs()));
        let mut mu = 0.0;
        for _ in 0..12 {
            let damped = &reduced + DMatrix::identity(m, m) * mu;
            if let Some(chol) = damped.cholesky() {
                let step = chol.solve(&rhs);
                if step.iter().all(|v| v.is_finite()) {
                    for (k, &i) in free.iter().enumerate() {
                        d[i] = step[k];
                    }
                    return Some(d);
                }
            }
            mu = if mu == 0.0 { 1e-8 * diag_max } else { mu * 10.0 };
        }
        None
    }

    /// Projected Newton iterations (finite-difference Hessian, Armijo
    /// backtracking along the projection arc) with a projected-gradient
    /// fallback whenever the Newton step gives no decrease.
    fn minimize(&mut self, y: &mut Vec<f64>, al: Option<(&[f64], f64)>, budget: usize, s: &SolverSettings) -> (usize, InnerExit) {
        let n = y.len();
        let mut g = vec![0.0; n];
        let mut f = self.eval(y, al, Some(&mut g));
        let mut trial = vec![0.0; n];

        for it in 0..budget {
            // projected-gradient measure and the binding set
            for i in 0..n {
                trial[i] = y[i] - g[i];
            }
            self.project(&mut trial);
            let pg = (0..n).fold(0.0f64, |m, i| m.max((trial[i] - y[i]).abs()));
            if pg <= s.tol_grad {
                return (it, InnerExit::Stationary);
            }
            let eps = pg.min(ACTIVE_EPS);
            let free: Vec<usize> = (0..n)
                .filter(|&i| !((y[i] - self.lo[i] <= eps && g[i] > 0.0) || (self.hi[i] - y[i] <= eps && g[i] < 0.0)))
                .collect();

            let hess = self.hessian(y, al, &g);
            let mut next = None;
            if let Some(d) = self.newton_direction(&hess, &g, &free) {
                next = self.arc_search(y, &d, f, &g, al, s);
            }
            if next.is_none() {
                let d: Vec<f64> = g.iter().map(|gi| -gi / pg.max(1e-12)).collect();
                next = self.arc_search(y, &d, f, &g, al, s);
            }
            let Some((y_new, f_new)) = next else {
                return (it + 1, InnerExit::SmallDecrease);
            };
            let decrease = f - f_new;
            *y = y_new;
            f = self.eval(y, al, Some(&mut g));
            if decrease <= s.tol_obj * (1.0 + f.abs()) {
                return (it + 1, InnerExit::SmallDecrease);
            }
        }
        (budget, InnerExit::Budget)
    }

    /// Backtracks `t` until `P(y + t·d)` satisfies the Armijo condition.
    fn arc_search(&mut self, y: &[f64], d: &[f64], f: f64, g: &[f64], al: Option<(&[f64], f64)>, s: &SolverSettings) -> Option<(Vec<f64>, f64)> {
        let mut trial = vec![0.0; y.len()];
        let mut t = 1.0;
        for _ in 0..40 {
            for i in 0..y.len() {
                trial[i] = y[i] + t * d[i];
            }
            self.project(&mut trial);
            let slope: f64 = (0..y.len()).map(|i| g[i] * (trial[i] - y[i])).sum();
            if slope < 0.0 {
                let f_new = self.eval(&trial, al, None);
                if f_new.is_finite() && f_new <= f + s.armijo_c * slope {
                    return Some((trial, f_new));
                }
            }
            t *= 0.5;
        }
        None
    }
}

/// Curvature-based scale for the slack variable so that one step length
/// suits both controls and slack.
fn slack_scale(problem: &HorizonProblem) -> f64 {
    let curvature = 2.0 * problem.weights.q_ubar[(2, 2)] * problem.horizon as f64;
    if curvature > 1.0 {
        1.0 / curvature.sqrt()
    } else {
        1.0
    }
}

struct Attempt {
    status: SolveStatus,
    iterations: usize,
    outer: usize,
    z: Vec<f64>,
    cost: f64,
    violation: f64,
    history: Vec<IterateSummary>,
}

impl Attempt {
    fn key(&self, tol_con: f64) -> (f64, f64) {
        (effective_violation(self.violation, tol_con), self.cost)
    }
}

fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// One augmented-Lagrangian run from `z0`.
fn run_al(problem: &HorizonProblem, z0: Vec<f64>) -> Attempt {
    let s = &problem.params.solver;
    let h = problem.horizon;
    let (lo, hi) = problem.lower_upper();
    let mut scale = vec![1.0; problem.n_vars()];
    if problem.delta_bounds.is_some() {
        scale[2 * h] = slack_scale(problem);
    }
    let mut sub = Subproblem {
        problem,
        lo: lo.iter().zip(&scale).map(|(l, s)| l / s).collect(),
        hi: hi.iter().zip(&scale).map(|(u, s)| u / s).collect(),
        scale,
        ws: problem.workspace(),
        z: vec![0.0; problem.n_vars()],
        gz: vec![0.0; problem.n_vars()],
    };
    let mut y: Vec<f64> = z0.iter().zip(&sub.scale).map(|(z, s)| z / s).collect();

    let f0 = sub.eval(&y, None, None);
    if !f0.is_finite() {
        return Attempt {
            status: SolveStatus::Infeasible,
            iterations: 0,
            outer: 0,
            z: z0,
            cost: f0,
            violation: f64::INFINITY,
            history: Vec::new(),
        };
    }

    let m = problem.constraints.len();
    let mut lambda = vec![0.0; m];
    let mut rho = s.penalty_init;
    let mut used = 0;
    let mut prev_violation = f64::INFINITY;
    let mut history = Vec::new();
    let mut best: Option<((f64, f64), Vec<f64>, f64)> = None;
    let mut status = SolveStatus::MaxIter;
    let mut outer = 0;
    let mut residuals = vec![0.0; m];

    while outer < s.max_outer {
        outer += 1;
        let al = if m > 0 { Some((lambda.as_slice(), rho)) } else { None };
        let (iters, exit) = sub.minimize(&mut y, al, s.iter_max - used, s);
        used += iters;

        let z: Vec<f64> = y.iter().zip(&sub.scale).map(|(y, s)| y * s).collect();
        let cost = problem.evaluate(&z, None, None, &mut sub.ws);
        let delta = problem.delta_of(&z);
        let mut violation: f64 = 0.0;
        for (c, r) in problem.constraints.iter().zip(residuals.iter_mut()) {
            *r = c.residual(&sub.ws.states[c.step + 1].position(), delta).value;
            violation = violation.max(-*r);
        }
        history.push(IterateSummary { cost, violation });

        let key = (effective_violation(violation, s.tol_con), cost);
        if cost.is_finite() && best.as_ref().is_none_or(|(k, _, _)| better(key, *k)) {
            best = Some((key, z, violation));
        }

        if violation <= s.tol_con && exit != InnerExit::Budget {
            status = SolveStatus::Converged;
            break;
        }
        if used >= s.iter_max {
            break;
        }
        for (lam, r) in lambda.iter_mut().zip(&residuals) {
            *lam = (*lam - rho * r).max(0.0);
        }
        if violation > 0.25 * prev_violation {
            rho = (rho * s.penalty_growth).min(s.penalty_max);
        }
        prev_violation = violation;
    }

    match best {
        Some(((_, cost), z, violation)) => Attempt { status, iterations: used, outer, z, cost, violation, history },
        None => Attempt {
            status: SolveStatus::Infeasible,
            iterations: used,
            outer,
            z: z0,
            cost: f0,
            violation: f64::INFINITY,
            history,
        },
    }
}

/// Solves `problem` from `warm_start` (or the cold start `(v_max/2, 0)`).
///
/// A run that ends infeasible is followed by runs from the cold start (if a
/// warm start was used) and from standstill; the best of them is kept.
/// Straight-line guesses through a pedestrian otherwise leave the method in
/// a local minimum on the far side.
pub fn solve(problem: &HorizonProblem, warm_start: Option<&[ControlInput]>) -> SolveReport {
    let p = &problem.params;
    let tol = p.solver.tol_con;
    let h = problem.horizon;
    let cold = vec![p.clamp(ControlInput::new(0.5 * p.v_max, 0.0)); h];
    let mut starts = Vec::with_capacity(3);
    if let Some(w) = warm_start.filter(|w| !w.is_empty() && w.iter().all(|u| u.is_finite())) {
        starts.push((0..h).map(|k| p.clamp(*w.get(k).unwrap_or(w.last().unwrap()))).collect());
    }
    starts.push(cold);
    starts.push(vec![p.clamp(ControlInput::ZERO); h]);
    let delta0 = problem.delta_bounds.map_or(0.0, |(a, b)| 0.0f64.clamp(a, b));

    let mut chosen: Option<Attempt> = None;
    let mut iterations = 0;
    for controls in &starts {
        let attempt = run_al(problem, problem.pack(controls, delta0));
        iterations += attempt.iterations;
        let replace = match &chosen {
            None => true,
            Some(c) => c.status == SolveStatus::Infeasible || better(attempt.key(tol), c.key(tol)),
        };
        if replace {
            chosen = Some(attempt);
        }
        let c = chosen.as_ref().unwrap();
        if c.violation <= tol || problem.constraints.is_empty() {
            break;
        }
    }
    let chosen = chosen.expect("at least one start");

    let (controls, delta) = problem.unpack(&chosen.z);
    SolveReport {
        status: chosen.status,
        iterations,
        outer_iterations: chosen.outer,
        final_cost: chosen.cost,
        max_constraint_violation: if chosen.violation.is_finite() { chosen.violation } else { f64::INFINITY },
        first_control: controls[0],
        delta,
        controls,
        history: chosen.history,
    }
}

/// Result of one receding-horizon step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub control: ControlInput,
    /// Absent when the robot is already at the target.
    pub report: Option<SolveReport>,
    /// Solution shifted by one step, for the next call.
    pub warm_start: Option<Vec<ControlInput>>,
}

/// Shifts a control sequence one step forward, repeating the last control.
pub fn shift_controls(controls: &[ControlInput]) -> Vec<ControlInput> {
    let mut out: Vec<ControlInput> = controls.iter().skip(1).copied().collect();
    if let Some(last) = controls.last() {
        out.push(*last);
    }
    out
}

/// Transcribes and solves, returning the first control to hold.
/// An infeasible solve yields the stop command `(0, 0)`.
pub fn mpc_step(
    spec: &ControllerSpec,
    state: &RobotState,
    target: &Vec2,
    tracks: &[PredictedTrack],
    params: &MpcParams,
    warm_start: Option<&[ControlInput]>,
) -> Result<StepOutcome> {
    if (state.position() - target).norm() < params.goal_tolerance {
        return Ok(StepOutcome { control: ControlInput::ZERO, report: None, warm_start: None });
    }
    let problem = transcribe(spec, state, target, tracks, params)?;
    let report = solve(&problem, warm_start);
    if report.status == SolveStatus::Infeasible {
        return Ok(StepOutcome { control: ControlInput::ZERO, report: Some(report), warm_start: None });
    }
    Ok(StepOutcome {
        control: report.first_control,
        warm_start: Some(shift_controls(&report.controls)),
        report: Some(report),
    })
}

//! Per-cycle step adaptation.
//!
//! Solving the DCM dynamics backwards from the end of the step gives
//! `u_T = (ξ_mea − u0) e^{ω0 (T − t)} + u0 − b`, which is nonlinear in the
//! step duration `T`. Substituting `τ = e^{ω0 T}` makes it linear:
//!
//! ```text
//!     u_T − (ξ_mea − u0) e^{−ω0 t} τ + b = u0
//! ```
//!
//! so next footprint, timing and end-of-step offset can be traded off in a
//! small QP with decision vector `(u_T,x, u_T,y, τ, b_x, b_y)`.

use thiserror::Error;

use crate::lipm::{lateral_sign, Dcm, DcmOffset, Footprint, ModelParams, Vec2};
use crate::nominal::{GaitLimits, NominalGait};
use crate::qp::{QpError, QpProblem, QpSolution, QpSolver};

/// Minimum remaining swing time kept by the adapter, and the width of the
/// window before landing in which the plan is frozen.
pub const DEFAULT_TIMING_MARGIN: f64 = 0.02;

pub const VAR_UX: usize = 0;
pub const VAR_UY: usize = 1;
pub const VAR_TAU: usize = 2;
pub const VAR_BX: usize = 3;
pub const VAR_BY: usize = 4;

/// Inequality row order of the step QP.
pub const ROW_L_MAX: usize = 0;
pub const ROW_L_MIN: usize = 1;
pub const ROW_W_MAX: usize = 2;
pub const ROW_W_MIN: usize = 3;
pub const ROW_TAU_MAX: usize = 4;
pub const ROW_TAU_MIN: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdaptError {
    #[error("step QP could not be solved: {0}")]
    SolverFailure(#[from] QpError),
    #[error("invalid step context: {0}")]
    InvalidContext(String),
}

/// Weights on the deviation of each decision variable from its nominal value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdapterWeights {
    pub step_x: f64,
    pub step_y: f64,
    pub tau: f64,
    pub offset_x: f64,
    pub offset_y: f64,
}

impl Default for AdapterWeights {
    fn default() -> Self {
        Self { step_x: 1.0, step_y: 1.0, tau: 5.0, offset_x: 1e6, offset_y: 1e6 }
    }
}

impl AdapterWeights {
    pub fn as_array(&self) -> [f64; 5] {
        [self.step_x, self.step_y, self.tau, self.offset_x, self.offset_y]
    }

    pub fn validate(&self) -> Result<(), AdaptError> {
        if self.as_array().iter().all(|w| w.is_finite() && *w > 0.0) {
            Ok(())
        } else {
            Err(AdaptError::InvalidContext("adapter weights must be finite and positive".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimingMode {
    #[default]
    Adaptive,
    /// Step duration pinned to the nominal value; only location and offset adapt.
    Fixed,
}

/// Everything the adapter needs at one control cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepContext {
    /// Measured DCM.
    pub dcm: Dcm,
    pub stance: Footprint,
    /// Time since the start of the current step.
    pub t: f64,
    pub nominal: NominalGait,
    pub limits: GaitLimits,
    pub model: ModelParams,
}

impl StepContext {
    fn validate(&self) -> Result<(), AdaptError> {
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(AdaptError::InvalidContext(format!("step time must be >= 0, got {}", self.t)));
        }
        if !(self.dcm.0.iter().all(|v| v.is_finite()) && self.stance.pos.iter().all(|v| v.is_finite())) {
            return Err(AdaptError::InvalidContext("DCM and stance must be finite".into()));
        }
        Ok(())
    }

    /// Coefficient of τ in the equality rows: `(ξ_mea − u0) e^{−ω0 t}`.
    pub fn tau_coefficient(&self) -> Vec2 {
        (self.dcm.0 - self.stance.pos) * (-self.model.omega0() * self.t).exp()
    }
}

/// Output of the adapter for one cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedStep {
    pub next: Footprint,
    pub tau: f64,
    /// `ln(τ) / ω0`
    pub duration: f64,
    /// Planned DCM offset at landing, `ξ_T − u_T`.
    pub offset: DcmOffset,
    pub objective_value: f64,
    /// Lower duration bound that was in force for this solve.
    pub lower_duration: f64,
    pub active_set: Vec<usize>,
}

impl AdaptedStep {
    /// True when the duration sits on its lower bound (within `tol` seconds).
    pub fn at_lower_bound(&self, tol: f64) -> bool {
        self.duration <= self.lower_duration + tol
    }
}

/// Lower bound on the step duration at step time `t`. Mid-step the landing
/// cannot be earlier than `t + margin`, except that a step still short of its
/// nominal duration may always keep it: inside the last `margin` before
/// `T_nom` the bound relaxes to `T_nom` so the nominal plan stays feasible.
pub fn effective_lower_duration(ctx: &StepContext, margin: f64) -> f64 {
    let t_nom = ctx.nominal.duration;
    let guard = if ctx.t + margin > t_nom && ctx.t < t_nom { t_nom } else { ctx.t + margin };
    ctx.limits.t_min.max(guard)
}

/// Assemble the step QP. In [`TimingMode::Fixed`] an extra equality row pins
/// `τ = τ_nom` and the timing box falls back to the plain `[T_min, T_max]`.
pub fn build_step_qp(ctx: &StepContext, w: &AdapterWeights, margin: f64, mode: TimingMode) -> QpProblem {
    let u0 = ctx.stance.pos;
    let n = ctx.stance.index;
    let s = lateral_sign(n);
    let g = &ctx.nominal;
    let lim = &ctx.limits;
    let omega = ctx.model.omega0();

    let step = u0 + g.displacement(n);
    let b_next = g.offset(n + 1).0;
    let targets = [step.x, step.y, g.tau, b_next.x, b_next.y];
    let mut qp = QpProblem::new(&targets, &w.as_array());

    let lower = match mode {
        TimingMode::Adaptive => effective_lower_duration(ctx, margin),
        TimingMode::Fixed => lim.t_min,
    };
    qp.add_inequality(&[1.0, 0.0, 0.0, 0.0, 0.0], u0.x + lim.l_max)
        .add_inequality(&[-1.0, 0.0, 0.0, 0.0, 0.0], -(u0.x + lim.l_min))
        .add_inequality(&[0.0, s, 0.0, 0.0, 0.0], lim.w_max + s * u0.y)
        .add_inequality(&[0.0, -s, 0.0, 0.0, 0.0], -(lim.w_min + s * u0.y))
        .add_inequality(&[0.0, 0.0, 1.0, 0.0, 0.0], (omega * lim.t_max).exp())
        .add_inequality(&[0.0, 0.0, -1.0, 0.0, 0.0], -(omega * lower).exp());

    let c = ctx.tau_coefficient();
    qp.add_equality(&[1.0, 0.0, -c.x, 1.0, 0.0], u0.x).add_equality(&[0.0, 1.0, -c.y, 0.0, 1.0], u0.y);
    if mode == TimingMode::Fixed {
        qp.add_equality(&[0.0, 0.0, 1.0, 0.0, 0.0], g.tau);
    }
    qp
}

/// Stateful adapter: owns the QP workspace and warm-starts each cycle from
/// the previous active set.
#[derive(Debug, Clone)]
pub struct StepAdapter {
    pub weights: AdapterWeights,
    pub timing_margin: f64,
    solver: QpSolver,
}

impl Default for StepAdapter {
    fn default() -> Self {
        Self::new(AdapterWeights::default())
    }
}

impl StepAdapter {
    pub fn new(weights: AdapterWeights) -> Self {
        Self { weights, timing_margin: DEFAULT_TIMING_MARGIN, solver: QpSolver::new() }
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.timing_margin = margin;
        self
    }

    pub fn build_qp(&self, ctx: &StepContext, mode: TimingMode) -> QpProblem {
        build_step_qp(ctx, &self.weights, self.timing_margin, mode)
    }

    pub fn adapt(&mut self, ctx: &StepContext) -> Result<AdaptedStep, AdaptError> {
        self.solve(ctx, TimingMode::Adaptive)
    }

    pub fn fixed_timing(&mut self, ctx: &StepContext) -> Result<AdaptedStep, AdaptError> {
        self.solve(ctx, TimingMode::Fixed)
    }

    pub fn solve(&mut self, ctx: &StepContext, mode: TimingMode) -> Result<AdaptedStep, AdaptError> {
        ctx.validate()?;
        self.weights.validate()?;
        let qp = self.build_qp(ctx, mode);
        let seed = self.solver.last_active_set().to_vec();
        let sol = self.solver.solve_warm(&qp, &seed)?;
        let lower = match mode {
            TimingMode::Adaptive => effective_lower_duration(ctx, self.timing_margin),
            TimingMode::Fixed => ctx.limits.t_min,
        };
        Ok(to_step(ctx, &sol, lower))
    }
}

fn to_step(ctx: &StepContext, sol: &QpSolution, lower_duration: f64) -> AdaptedStep {
    let z = &sol.z;
    let tau = z[VAR_TAU];
    AdaptedStep {
        next: Footprint::new(Vec2::new(z[VAR_UX], z[VAR_UY]), ctx.stance.index + 1),
        tau,
        duration: tau.ln() / ctx.model.omega0(),
        offset: DcmOffset(Vec2::new(z[VAR_BX], z[VAR_BY])),
        objective_value: sol.objective,
        lower_duration,
        active_set: sol.active_set.clone(),
    }
}

/// One-shot helpers with a fresh solver, mirroring [`StepAdapter`].
pub fn adapt_step(ctx: &StepContext, w: &AdapterWeights) -> Result<AdaptedStep, AdaptError> {
    StepAdapter::new(*w).adapt(ctx)
}

pub fn fixed_timing_step(ctx: &StepContext, w: &AdapterWeights) -> Result<AdaptedStep, AdaptError> {
    StepAdapter::new(*w).fixed_timing(ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lipm::propagate_dcm;
    use crate::nominal::{nominal_gait, VelocityCommand};
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn context(vx: f64, n: i64, t: f64, disturbance: Vec2) -> StepContext {
        let model = ModelParams::default();
        let limits = GaitLimits::default();
        let nominal = nominal_gait(&VelocityCommand::new(vx, 0.0), &limits, &model).unwrap();
        let stance = Footprint::new(Vec2::new(0.7, -0.1), n);
        let xi0 = Dcm(stance.pos + nominal.offset(n).0 + disturbance);
        StepContext { dcm: propagate_dcm(&xi0, &stance, t, &model), stance, t, nominal, limits, model }
    }

    #[test]
    fn nominal_point_satisfies_equalities() {
        for n in [0, 1] {
            let ctx = context(1.0, n, 0.0, Vec2::zeros());
            let qp = build_step_qp(&ctx, &AdapterWeights::default(), DEFAULT_TIMING_MARGIN, TimingMode::Adaptive);
            let target = qp.targets().clone();
            for i in 0..qp.n_eq() {
                let (row, rhs) = qp.equality(i);
                assert!((row.dot(&target) - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dcm_on_contact_zeroes_tau_coefficient() {
        let mut ctx = context(1.0, 0, 0.1, Vec2::zeros());
        ctx.dcm = Dcm(ctx.stance.pos);
        let qp = build_step_qp(&ctx, &AdapterWeights::default(), DEFAULT_TIMING_MARGIN, TimingMode::Adaptive);
        for i in 0..2 {
            assert_eq!(qp.equality(i).0[VAR_TAU], 0.0);
        }
        let s = adapt_step(&ctx, &AdapterWeights::default()).unwrap();
        let sum = s.next.pos + s.offset.0;
        assert_abs_diff_eq!(sum, ctx.stance.pos, epsilon = 1e-9);
    }

    #[test]
    fn tau_coefficient_decays_with_step_time() {
        let model = ModelParams::default();
        let mut ctx = context(1.0, 0, 0.0, Vec2::zeros());
        let c0 = ctx.tau_coefficient();
        ctx.t = 0.2;
        let c1 = ctx.tau_coefficient();
        assert_abs_diff_eq!(c1, c0 * (-model.omega0() * 0.2).exp(), epsilon = 1e-15);
    }

    #[test]
    fn unperturbed_forward_walk_returns_nominal_step() {
        for n in [0, 1] {
            let ctx = context(1.0, n, 0.0, Vec2::zeros());
            let s = adapt_step(&ctx, &AdapterWeights::default()).unwrap();
            let d = s.next.pos - ctx.stance.pos;
            assert_abs_diff_eq!(d.x, 0.35, epsilon = 1e-12);
            assert_abs_diff_eq!(d.y, lateral_sign(n) * 0.2, epsilon = 1e-12);
            assert_abs_diff_eq!(s.duration, 0.35, epsilon = 1e-12);
            assert_abs_diff_eq!(s.offset.0, ctx.nominal.offset(n + 1).0, epsilon = 1e-12);
            assert_eq!(s.next.index, n + 1);
            assert!(s.active_set.is_empty());
            let fixed = fixed_timing_step(&ctx, &AdapterWeights::default()).unwrap();
            assert_abs_diff_eq!(fixed.next.pos, s.next.pos, epsilon = 1e-12);
            assert_abs_diff_eq!(fixed.duration, s.duration, epsilon = 1e-12);
        }
    }

    #[test]
    fn small_lateral_error_is_absorbed_by_the_footprint() {
        let ctx = context(1.0, 1, 0.0, Vec2::new(0.0, 0.01));
        let s = adapt_step(&ctx, &AdapterWeights::default()).unwrap();
        let b_nom = ctx.nominal.offset(2).0;
        assert!((s.offset.0 - b_nom).amax() <= 1e-6);
        assert!((s.next.pos - (ctx.stance.pos + ctx.nominal.displacement(1))).amax() > 1e-3);
    }

    #[test]
    fn severe_push_pins_box_and_shortens_step() {
        // Left stance, DCM pushed 0.15 m to the right (the free side).
        let ctx = context(1.0, 1, 0.0, Vec2::new(0.0, -0.15));
        let w = AdapterWeights::default();
        let s = adapt_step(&ctx, &w).unwrap();
        let d = s.next.pos - ctx.stance.pos;
        assert_abs_diff_eq!(d.y, -ctx.limits.w_max, epsilon = 1e-9);
        assert!(s.duration < 0.5 * (ctx.nominal.duration + ctx.limits.t_min));
        assert!(s.active_set.contains(&ROW_W_MAX));
        let b_nom = ctx.nominal.offset(2).0;
        let fixed = fixed_timing_step(&ctx, &w).unwrap();
        let dev_fixed = (fixed.offset.0 - b_nom).norm();
        let dev_adapt = (s.offset.0 - b_nom).norm();
        assert!(dev_fixed > 1e-3);
        assert!(dev_adapt < dev_fixed);
        assert!(s.objective_value <= fixed.objective_value);

        let harder = context(1.0, 1, 0.0, Vec2::new(0.0, -0.25));
        let s = adapt_step(&harder, &w).unwrap();
        assert!(s.at_lower_bound(1e-9));
        assert!(s.active_set.contains(&ROW_TAU_MIN));
        assert!((s.offset.0 - b_nom).norm() > 1e-3);
    }

    #[test]
    fn mid_step_lower_bound_tracks_elapsed_time() {
        let mut ctx = context(1.0, 1, 0.25, Vec2::zeros());
        ctx.dcm = Dcm(ctx.dcm.0 + Vec2::new(0.0, -0.3));
        let s = adapt_step(&ctx, &AdapterWeights::default()).unwrap();
        assert_abs_diff_eq!(s.lower_duration, 0.27, epsilon = 1e-15);
        assert!(s.duration >= 0.27 - 1e-9);
    }

    #[test]
    fn fixed_timing_mid_step_stays_on_nominal_offset() {
        let ctx = context(1.0, 0, 0.2, Vec2::zeros());
        let s = fixed_timing_step(&ctx, &AdapterWeights::default()).unwrap();
        assert_abs_diff_eq!(s.tau, ctx.nominal.tau, epsilon = 1e-12);
        assert_abs_diff_eq!(s.offset.0, ctx.nominal.offset(1).0, epsilon = 1e-9);
    }

    #[test]
    fn rejects_bad_context() {
        let mut ctx = context(1.0, 0, 0.0, Vec2::zeros());
        ctx.t = -0.1;
        assert!(matches!(adapt_step(&ctx, &AdapterWeights::default()), Err(AdaptError::InvalidContext(_))));
        let ctx = context(1.0, 0, 0.0, Vec2::zeros());
        let w = AdapterWeights { tau: 0.0, ..Default::default() };
        assert!(adapt_step(&ctx, &w).is_err());
    }

    #[test]
    fn duration_round_trip() {
        let ctx = context(1.0, 1, 0.0, Vec2::new(0.05, -0.12));
        let s = adapt_step(&ctx, &AdapterWeights::default()).unwrap();
        let back = (ctx.model.omega0() * s.duration).exp();
        assert!((back - s.tau).abs() <= 1e-12 * s.tau);
        let z = DVector::from_vec(vec![s.next.pos.x, s.next.pos.y, s.tau, s.offset.0.x, s.offset.0.y]);
        let qp = build_step_qp(&ctx, &AdapterWeights::default(), DEFAULT_TIMING_MARGIN, TimingMode::Adaptive);
        assert!(qp.max_violation(&z) <= 1e-9);
    }
}

//! Nominal gait selection, run once per step.
//!
//! Given a commanded average velocity, every admissible step duration must
//! keep step length and width inside their boxes. The admissible durations
//! form an interval `[B_l, B_u]`; the nominal duration is its midpoint, which
//! keeps the most room for the per-cycle adaptation on both sides.

use thiserror::Error;

use crate::lipm::{lateral_sign, DcmOffset, ModelParams, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("no step duration satisfies the gait limits at this velocity (lower bound {lower} s > upper bound {upper} s)")]
    Infeasible { lower: f64, upper: f64 },
    #[error("invalid gait limits: {0}")]
    InvalidLimits(String),
    #[error("velocity command must be finite")]
    InvalidVelocity,
}

/// Box bounds on step displacement and duration.
///
/// `l_*` bound the sagittal displacement of the swing foot relative to the
/// stance foot. `w_*` bound the magnitude of the lateral displacement; its
/// sign is fixed by the stance foot (see [`crate::lipm::lateral_sign`]) so the
/// swing foot never crosses over the stance foot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitLimits {
    pub l_min: f64,
    pub l_max: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for GaitLimits {
    fn default() -> Self {
        Self { l_min: -0.5, l_max: 0.5, w_min: 0.1, w_max: 0.4, t_min: 0.2, t_max: 0.8 }
    }
}

impl GaitLimits {
    pub fn validate(&self) -> Result<(), PlanError> {
        let all = [self.l_min, self.l_max, self.w_min, self.w_max, self.t_min, self.t_max];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(PlanError::InvalidLimits("limits must be finite".into()));
        }
        if self.l_min >= self.l_max {
            return Err(PlanError::InvalidLimits("l_min must be < l_max".into()));
        }
        if !(0.0 <= self.w_min && self.w_min < self.w_max) {
            return Err(PlanError::InvalidLimits("w_min must satisfy 0 <= w_min < w_max".into()));
        }
        if !(0.0 < self.t_min && self.t_min < self.t_max) {
            return Err(PlanError::InvalidLimits("t_min must satisfy 0 < t_min < t_max".into()));
        }
        Ok(())
    }
}

/// Desired average walking velocity (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VelocityCommand {
    pub vx: f64,
    pub vy: f64,
}

impl VelocityCommand {
    pub fn new(vx: f64, vy: f64) -> Self {
        Self { vx, vy }
    }

    /// Unit heading of the command; +x when standing still.
    pub fn heading(&self) -> Vec2 {
        let v = Vec2::new(self.vx, self.vy);
        let n = v.norm();
        if n > 0.0 {
            v / n
        } else {
            Vec2::x()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingBounds {
    pub lower: f64,
    pub upper: f64,
}

impl TimingBounds {
    pub fn is_feasible(&self) -> bool {
        self.lower <= self.upper
    }
}

/// Output of the nominal planner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NominalGait {
    pub duration: f64,
    pub length: f64,
    pub width: f64,
    /// `e^{ω0 · duration}`
    pub tau: f64,
    pub offset_x: f64,
    pelvis_width: f64,
}

impl NominalGait {
    /// Nominal DCM offset at the start of a step on stance `foot_index`.
    pub fn offset(&self, foot_index: i64) -> DcmOffset {
        DcmOffset(Vec2::new(self.offset_x, self.offset_y(foot_index)))
    }

    pub fn offset_y(&self, foot_index: i64) -> f64 {
        lateral_sign(foot_index) * self.pelvis_width / (1.0 + self.tau) - self.width / (1.0 - self.tau)
    }

    /// Nominal displacement from stance `foot_index` to the next footprint.
    pub fn displacement(&self, foot_index: i64) -> Vec2 {
        Vec2::new(self.length, lateral_sign(foot_index) * self.pelvis_width + self.width)
    }
}

/// Interval of step durations compatible with the velocity and limits.
/// A zero velocity component contributes no bound.
pub fn timing_bounds(v: &VelocityCommand, lim: &GaitLimits) -> Result<TimingBounds, PlanError> {
    lim.validate()?;
    if !(v.vx.is_finite() && v.vy.is_finite()) {
        return Err(PlanError::InvalidVelocity);
    }
    let mut lower = lim.t_min;
    let mut upper = lim.t_max;
    if v.vx != 0.0 {
        lower = lower.max(lim.l_min / v.vx.abs());
        upper = upper.min(lim.l_max / v.vx.abs());
    }
    if v.vy != 0.0 {
        lower = lower.max(lim.w_min / v.vy.abs());
        upper = upper.min(lim.w_max / v.vy.abs());
    }
    let bounds = TimingBounds { lower, upper };
    if bounds.is_feasible() {
        Ok(bounds)
    } else {
        Err(PlanError::Infeasible { lower, upper })
    }
}

pub fn nominal_gait(v: &VelocityCommand, lim: &GaitLimits, p: &ModelParams) -> Result<NominalGait, PlanError> {
    let b = timing_bounds(v, lim)?;
    let duration = 0.5 * (b.lower + b.upper);
    let tau = (p.omega0() * duration).exp();
    let length = v.vx * duration;
    Ok(NominalGait {
        duration,
        length,
        width: v.vy * duration,
        tau,
        offset_x: length / (tau - 1.0),
        pelvis_width: p.pelvis_width(),
    })
}

/// Nominal `(b_x, b_y)` for stance `foot_index`.
pub fn nominal_dcm_offsets(g: &NominalGait, foot_index: i64) -> DcmOffset {
    g.offset(foot_index)
}

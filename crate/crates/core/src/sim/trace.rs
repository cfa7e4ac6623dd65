use nalgebra::Vector3;

use crate::lipm::{ComState, Footprint, Vec2};
use crate::nominal::NominalGait;

/// State at the end of one control cycle (the first record is the initial state).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleRecord {
    pub t: f64,
    pub com: ComState,
    pub dcm: Vec2,
    pub stance: Footprint,
    pub swing: Vector3<f64>,
    pub plan_step: Vec2,
    pub plan_duration: f64,
    pub plan_offset: Vec2,
    pub step_index: usize,
}

/// One completed step, written at its support exchange.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub index: usize,
    /// Stance during the step.
    pub stance: Footprint,
    pub start_time: f64,
    pub end_time: f64,
    pub duration: f64,
    /// Footprint that became the new stance.
    pub landing: Footprint,
    /// Realized `ξ − u_T` at the exchange.
    pub offset_end: Vec2,
    /// Nominal offset for the new stance.
    pub offset_nominal: Vec2,
    pub lower_duration: f64,
    pub at_lower_bound: bool,
    pub com_end: ComState,
}

impl StepRecord {
    pub fn offset_error(&self) -> f64 {
        (self.offset_end - self.offset_nominal).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PushRecord {
    pub event: usize,
    pub t: f64,
    /// Step in progress when the (last part of the) push was applied.
    pub step_index: usize,
    pub delta_v: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    Completed,
    MaxSteps,
    Diverged { t: f64, distance: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub dt: f64,
    pub initial_com: ComState,
    pub initial_nominal: NominalGait,
    /// Empty unless cycle recording is enabled.
    pub cycles: Vec<CycleRecord>,
    /// Number of cycle records produced, stored or not.
    pub records: usize,
    pub steps: Vec<StepRecord>,
    pub pushes: Vec<PushRecord>,
    pub termination: Termination,
    /// Largest DCM–stance distance seen at any cycle boundary.
    pub max_dcm_distance: f64,
    pub end_time: f64,
    /// Cycles where the swing replanning failed and the previous trajectory was kept.
    pub swing_replan_failures: usize,
    /// Vertical plans that had to drop the height bounds.
    pub swing_unconstrained: usize,
}

impl Trace {
    pub fn diverged(&self) -> bool {
        matches!(self.termination, Termination::Diverged { .. })
    }

    pub fn max_offset_error(&self) -> f64 {
        self.steps.iter().map(StepRecord::offset_error).fold(0.0, f64::max)
    }

    pub fn steps_at_lower_bound(&self) -> usize {
        self.steps.iter().filter(|s| s.at_lower_bound).count()
    }

    /// Mean CoM velocity from the start to the last support exchange.
    pub fn mean_velocity(&self) -> Option<Vec2> {
        let last = self.steps.last()?;
        Some((last.com_end.pos - self.initial_com.pos) / last.end_time)
    }

    /// Mean CoM velocity over steps `first..=last`.
    pub fn mean_velocity_between(&self, first: usize, last: usize) -> Option<Vec2> {
        let end = self.steps.get(last)?;
        let (t0, x0) = if first == 0 {
            (0.0, self.initial_com.pos)
        } else {
            let s = self.steps.get(first - 1)?;
            (s.end_time, s.com_end.pos)
        };
        Some((end.com_end.pos - x0) / (end.end_time - t0))
    }

    /// Index of the step in progress when the last push was applied.
    pub fn last_push_step(&self) -> Option<usize> {
        self.pushes.iter().map(|p| p.step_index).max()
    }
}

/// Thresholds separating recovered from failed runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryTolerances {
    /// DCM–stance distance at which the run counts as diverged (m).
    pub divergence_radius: f64,
    /// Allowed end-of-step offset error (m).
    pub offset_tolerance: f64,
    /// Steps after the last push within which the offset must settle.
    pub recovery_steps: usize,
}

impl Default for RecoveryTolerances {
    fn default() -> Self {
        Self { divergence_radius: 2.0, offset_tolerance: 1e-3, recovery_steps: 10 }
    }
}

/// True when the DCM never left the divergence radius and, within
/// `recovery_steps` steps of the last push, some step ends on its nominal
/// offset and every later step does too.
///
/// The trace must extend at least `recovery_steps` steps past the push;
/// shorter traces count as not recovered.
pub fn is_recovered(trace: &Trace, tol: &RecoveryTolerances) -> bool {
    if trace.diverged() || trace.max_dcm_distance > tol.divergence_radius {
        return false;
    }
    let Some(i0) = trace.last_push_step() else {
        return true;
    };
    let steps = &trace.steps;
    if steps.len() < i0 + tol.recovery_steps {
        return false;
    }
    let ok: Vec<bool> = steps.iter().map(|s| s.offset_error() <= tol.offset_tolerance).collect();
    // First index from which every step is within tolerance.
    let settled = ok.iter().rposition(|v| !v).map_or(0, |i| i + 1);
    settled < steps.len() && settled < i0 + tol.recovery_steps
}

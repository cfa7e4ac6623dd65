use rayon::prelude::*;

use super::{is_recovered, run_scenario, PushEvent, SimConfig, SimError};
use crate::nominal::nominal_gait;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    /// Push onset; `None` picks the start of the first left-stance step
    /// after at least one full step.
    pub push_time: Option<f64>,
    pub push_duration: f64,
    pub force_max: f64,
    pub resolution: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self { push_time: None, push_duration: 0.1, force_max: 1500.0, resolution: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub theta: f64,
    pub f_max: f64,
}

/// Start time of the first left-stance step with index ≥ 1, assuming
/// nominal step durations.
pub fn default_push_time(cfg: &SimConfig) -> Result<f64, SimError> {
    let g = nominal_gait(&cfg.velocity, &cfg.limits, &cfg.model)?;
    let first = if cfg.initial_foot_index.rem_euclid(2) == 1 { 2.0 } else { 1.0 };
    Ok(first * g.duration)
}

/// Whether the scenario, with its own pushes replaced by `push`, recovers.
pub fn recovers_from(cfg: &SimConfig, push: PushEvent) -> Result<bool, SimError> {
    let mut c = cfg.clone();
    c.pushes = vec![push];
    c.track_swing = false;
    c.record_cycles = false;
    let trace = run_scenario(&c)?;
    Ok(is_recovered(&trace, &c.recovery))
}

/// Largest recoverable push per direction, by bisection on the force.
/// Directions run in parallel; results keep the order of `thetas`.
pub fn max_push_sweep(cfg: &SimConfig, thetas: &[f64], settings: &SweepSettings) -> Result<Vec<SweepPoint>, SimError> {
    cfg.validate()?;
    if !(settings.resolution > 0.0 && settings.force_max >= 0.0 && settings.push_duration > 0.0) {
        return Err(SimError::Config("sweep resolution, bracket and push duration must be positive".into()));
    }
    let t_push = match settings.push_time {
        Some(t) => t,
        None => default_push_time(cfg)?,
    };
    thetas
        .par_iter()
        .map(|&theta| {
            let push = |force: f64| PushEvent { t_push, force, duration: settings.push_duration, theta_deg: theta };
            let ok = |units: u64| recovers_from(cfg, push(units as f64 * settings.resolution));
            let mut hi = (settings.force_max / settings.resolution).floor() as u64;
            if !ok(0)? {
                return Ok(SweepPoint { theta, f_max: 0.0 });
            }
            if ok(hi)? {
                return Ok(SweepPoint { theta, f_max: hi as f64 * settings.resolution });
            }
            let mut lo = 0;
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if ok(mid)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(SweepPoint { theta, f_max: lo as f64 * settings.resolution })
        })
        .collect()
}

//! Closed-loop simulation: exact LIPM plant, point-foot support exchange,
//! scheduled pushes, and the two-stage controller running every cycle.
//!
//! The plant is integrated in closed form, so the only discretization is the
//! controller's sampling. Support exchange happens exactly at the planned
//! landing time, splitting the cycle in which it falls.

mod sweep;
mod trace;

pub use sweep::{default_push_time, max_push_sweep, recovers_from, SweepPoint, SweepSettings};
pub use trace::{is_recovered, CycleRecord, PushRecord, RecoveryTolerances, StepRecord, Termination, Trace};

use thiserror::Error;

use crate::adapter::{AdaptError, AdaptedStep, AdapterWeights, StepAdapter, StepContext, TimingMode};
use crate::lipm::{dcm_from_state, dcm_offset, propagate_com, ComState, Dcm, Footprint, ModelParams, Vec2};
use crate::nominal::{nominal_gait, GaitLimits, NominalGait, PlanError, VelocityCommand};
use crate::qp::QpSolver;
use crate::swing::{plan_swing, SwingConfig, SwingError, SwingState, SwingTrajectory, MIN_SWING_INTERVAL};

/// Landing closer than this to the end of a cycle is treated as on it.
const EXCHANGE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Adapt(#[from] AdaptError),
    #[error(transparent)]
    Swing(#[from] SwingError),
}

/// A push of constant force `force` over `[t_push, t_push + duration)`,
/// directed `theta_deg` counterclockwise from the walking direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PushEvent {
    pub t_push: f64,
    pub force: f64,
    pub duration: f64,
    pub theta_deg: f64,
}

impl PushEvent {
    /// Total velocity change for a body of mass `mass`, given the walking heading.
    pub fn delta_v(&self, heading: Vec2, mass: f64) -> Vec2 {
        let (s, c) = self.theta_deg.to_radians().sin_cos();
        let dir = Vec2::new(c * heading.x - s * heading.y, s * heading.x + c * heading.y);
        dir * (self.force * self.duration / mass)
    }

    /// Control cycle at which the impulse is applied.
    pub fn onset_cycle(&self, dt: f64) -> u64 {
        (self.t_push / dt - 1e-9).ceil().max(0.0) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PushModel {
    /// Whole impulse `F Δt / m` at the first cycle at or after `t_push`.
    #[default]
    Impulse,
    /// Per-cycle velocity increments proportional to the overlap of each
    /// cycle with the push interval.
    Distributed,
}

/// Instantaneous velocity change; position is untouched.
pub fn apply_push(com: &ComState, e: &PushEvent, heading: Vec2, p: &ModelParams) -> ComState {
    ComState::new(com.pos, com.vel + e.delta_v(heading, p.mass()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: ModelParams,
    pub limits: GaitLimits,
    pub velocity: VelocityCommand,
    pub weights: AdapterWeights,
    pub swing: SwingConfig,
    pub dt: f64,
    pub duration: f64,
    pub pushes: Vec<PushEvent>,
    pub mode: TimingMode,
    pub max_steps: usize,
    /// Foot index of the first stance; odd is left stance.
    pub initial_foot_index: i64,
    pub initial_stance: Vec2,
    pub push_model: PushModel,
    pub timing_margin: f64,
    pub recovery: RecoveryTolerances,
    /// Plan and advance the swing foot. The plant does not depend on it.
    pub track_swing: bool,
    pub record_cycles: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            model: ModelParams::default(),
            limits: GaitLimits::default(),
            velocity: VelocityCommand::new(1.0, 0.0),
            weights: AdapterWeights::default(),
            swing: SwingConfig::default(),
            dt: 0.001,
            duration: 7.0,
            pushes: Vec::new(),
            mode: TimingMode::Adaptive,
            max_steps: 1000,
            initial_foot_index: 1,
            initial_stance: Vec2::zeros(),
            push_model: PushModel::Impulse,
            timing_margin: crate::adapter::DEFAULT_TIMING_MARGIN,
            recovery: RecoveryTolerances::default(),
            track_swing: true,
            record_cycles: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        self.limits.validate()?;
        self.weights.validate()?;
        self.swing.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration must be > 0, got {}", self.duration));
        }
        if !(self.timing_margin.is_finite() && self.timing_margin >= 0.0 && self.timing_margin < self.limits.t_max) {
            return bad("timing_margin must be in [0, t_max)".into());
        }
        if !self.initial_stance.iter().all(|v| v.is_finite()) {
            return bad("initial stance must be finite".into());
        }
        let r = &self.recovery;
        if !(r.divergence_radius > 0.0 && r.offset_tolerance > 0.0 && r.recovery_steps > 0) {
            return bad("recovery tolerances must be positive".into());
        }
        for (i, p) in self.pushes.iter().enumerate() {
            if !(p.t_push.is_finite() && p.t_push >= 0.0) {
                return bad(format!("push {i}: t_push must be >= 0"));
            }
            if !(p.force.is_finite() && p.force >= 0.0) {
                return bad(format!("push {i}: force must be >= 0"));
            }
            if !(p.duration.is_finite() && p.duration > 0.0) {
                return bad(format!("push {i}: duration must be > 0"));
            }
            if !p.theta_deg.is_finite() {
                return bad(format!("push {i}: theta must be finite"));
            }
        }
        nominal_gait(&self.velocity, &self.limits, &self.model)?;
        Ok(())
    }

    pub fn cycles(&self) -> u64 {
        (self.duration / self.dt + 1e-9).floor() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub cycle: u64,
    pub t: f64,
    pub t_step: f64,
    pub com: ComState,
    pub stance: Footprint,
    pub swing: SwingState,
    pub plan: AdaptedStep,
    pub nominal: NominalGait,
    pub step_count: usize,
}

impl SimState {
    pub fn dcm(&self, p: &ModelParams) -> Dcm {
        dcm_from_state(&self.com, p)
    }
}

/// CoM state on the periodic orbit at the start of a step on `stance`.
pub fn periodic_start(stance: &Footprint, g: &NominalGait, p: &ModelParams) -> ComState {
    let prev = g.displacement(stance.index - 1);
    let pos = stance.pos - prev * 0.5;
    let xi = stance.pos + g.offset(stance.index).0;
    ComState::new(pos, (xi - pos) * p.omega0())
}

pub struct Simulator {
    cfg: SimConfig,
    state: SimState,
    adapter: StepAdapter,
    swing_solver: QpSolver,
    swing_traj: Option<SwingTrajectory>,
    step_start: f64,
    trace: Trace,
    done: bool,
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let p = cfg.model;
        let nominal = nominal_gait(&cfg.velocity, &cfg.limits, &p)?;
        let stance = Footprint::new(cfg.initial_stance, cfg.initial_foot_index);
        let com = periodic_start(&stance, &nominal, &p);
        let swing_start = stance.pos - nominal.displacement(stance.index - 1);
        let mut adapter = StepAdapter::new(cfg.weights).with_margin(cfg.timing_margin);
        let ctx = StepContext { dcm: dcm_from_state(&com, &p), stance, t: 0.0, nominal, limits: cfg.limits, model: p };
        let plan = adapter.solve(&ctx, cfg.mode)?;
        let state = SimState {
            cycle: 0,
            t: 0.0,
            t_step: 0.0,
            com,
            stance,
            swing: SwingState::at_rest(swing_start),
            plan,
            nominal,
            step_count: 0,
        };
        let trace = Trace {
            dt: cfg.dt,
            initial_com: com,
            initial_nominal: nominal,
            cycles: Vec::new(),
            records: 0,
            steps: Vec::new(),
            pushes: Vec::new(),
            termination: Termination::Completed,
            max_dcm_distance: 0.0,
            end_time: 0.0,
            swing_replan_failures: 0,
            swing_unconstrained: 0,
        };
        let mut sim = Self {
            cfg,
            state,
            adapter,
            swing_solver: QpSolver::new(),
            swing_traj: None,
            step_start: 0.0,
            trace,
            done: false,
        };
        sim.replan_swing();
        sim.record();
        Ok(sim)
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    fn context(&self) -> StepContext {
        StepContext {
            dcm: self.state.dcm(&self.cfg.model),
            stance: self.state.stance,
            t: self.state.t_step,
            nominal: self.state.nominal,
            limits: self.cfg.limits,
            model: self.cfg.model,
        }
    }

    fn record(&mut self) {
        let p = self.cfg.model;
        let st = &self.state;
        let xi = st.dcm(&p).0;
        let dist = (xi - st.stance.pos).norm();
        self.trace.max_dcm_distance = self.trace.max_dcm_distance.max(dist);
        self.trace.end_time = st.t;
        self.trace.records += 1;
        if self.cfg.record_cycles {
            self.trace.cycles.push(CycleRecord {
                t: st.t,
                com: st.com,
                dcm: xi,
                stance: st.stance,
                swing: st.swing.pos,
                plan_step: st.plan.next.pos,
                plan_duration: st.plan.duration,
                plan_offset: st.plan.offset.0,
                step_index: st.step_count,
            });
        }
    }

    fn replan_swing(&mut self) {
        if !self.cfg.track_swing {
            return;
        }
        let st = &self.state;
        if st.plan.duration - st.t_step < MIN_SWING_INTERVAL {
            return;
        }
        match plan_swing(st.t_step, &st.swing, st.plan.next.pos, st.plan.duration, &self.cfg.swing, &mut self.swing_solver) {
            Ok(traj) => {
                if traj.z_unconstrained {
                    self.trace.swing_unconstrained += 1;
                }
                self.swing_traj = Some(traj);
            }
            Err(_) => self.trace.swing_replan_failures += 1,
        }
    }

    fn advance_swing(&mut self) {
        if !self.cfg.track_swing {
            return;
        }
        if let Some(traj) = &self.swing_traj {
            let t = self.state.t_step.min(traj.landing_time());
            if let Ok(s) = traj.eval(t) {
                self.state.swing = s;
            }
        }
    }

    fn apply_pushes(&mut self) {
        let k = self.state.cycle;
        let dt = self.cfg.dt;
        let heading = self.cfg.velocity.heading();
        for (i, e) in self.cfg.pushes.iter().enumerate() {
            let dv = match self.cfg.push_model {
                PushModel::Impulse => {
                    if e.onset_cycle(dt) != k {
                        continue;
                    }
                    e.delta_v(heading, self.cfg.model.mass())
                }
                PushModel::Distributed => {
                    let (a, b) = (k as f64 * dt, (k + 1) as f64 * dt);
                    let overlap = b.min(e.t_push + e.duration) - a.max(e.t_push);
                    if overlap <= 0.0 {
                        continue;
                    }
                    e.delta_v(heading, self.cfg.model.mass()) * (overlap / e.duration)
                }
            };
            self.state.com.vel += dv;
            let rec = PushRecord { event: i, t: self.state.t, step_index: self.state.step_count, delta_v: dv };
            match self.trace.pushes.iter_mut().find(|r| r.event == i) {
                Some(r) => {
                    r.step_index = rec.step_index;
                    r.delta_v += dv;
                }
                None => self.trace.pushes.push(rec),
            }
        }
    }

    fn solve_plan(&mut self) -> Result<(), SimError> {
        let ctx = self.context();
        self.state.plan = self.adapter.solve(&ctx, self.cfg.mode)?;
        Ok(())
    }

    /// Support exchange at the planned landing time `t_exchange`.
    fn exchange(&mut self, t_exchange: f64) -> Result<(), SimError> {
        let p = self.cfg.model;
        let st = &self.state;
        let landing = st.plan.next;
        let xi = st.dcm(&p);
        let nominal = nominal_gait(&self.cfg.velocity, &self.cfg.limits, &p)?;
        self.trace.steps.push(StepRecord {
            index: st.step_count,
            stance: st.stance,
            start_time: self.step_start,
            end_time: t_exchange,
            duration: t_exchange - self.step_start,
            landing,
            offset_end: dcm_offset(&xi, &landing).0,
            offset_nominal: nominal.offset(landing.index).0,
            lower_duration: st.plan.lower_duration,
            at_lower_bound: st.plan.at_lower_bound(1e-6),
            com_end: st.com,
        });
        let old_stance = st.stance.pos;
        self.state.swing = SwingState::at_rest(old_stance);
        self.state.stance = landing;
        self.state.nominal = nominal;
        self.state.t_step = 0.0;
        self.state.step_count += 1;
        self.step_start = t_exchange;
        self.solve_plan()?;
        self.replan_swing();
        Ok(())
    }

    /// Advance one control cycle.
    pub fn step_cycle(&mut self) -> Result<(), SimError> {
        if self.done {
            return Ok(());
        }
        let p = self.cfg.model;
        let dt = self.cfg.dt;
        let t0 = self.state.cycle as f64 * dt;

        self.apply_pushes();
        // Outside the freeze window the plan follows the measured DCM.
        if self.state.plan.duration - self.state.t_step >= self.cfg.timing_margin + 1e-12 {
            self.solve_plan()?;
            self.replan_swing();
        }

        let mut elapsed = 0.0;
        loop {
            let remaining = dt - elapsed;
            let to_land = self.state.plan.duration - self.state.t_step;
            if to_land <= remaining + EXCHANGE_TOL {
                let h = to_land.max(0.0);
                self.state.com = propagate_com(&self.state.com, &self.state.stance, h, &p);
                self.state.t_step += h;
                self.advance_swing();
                elapsed += h;
                self.exchange(t0 + elapsed)?;
                if self.state.step_count >= self.cfg.max_steps {
                    self.trace.termination = Termination::MaxSteps;
                    self.done = true;
                    break;
                }
                if elapsed >= dt {
                    break;
                }
            } else {
                self.state.com = propagate_com(&self.state.com, &self.state.stance, remaining, &p);
                self.state.t_step += remaining;
                self.advance_swing();
                break;
            }
        }

        self.state.cycle += 1;
        self.state.t = self.state.cycle as f64 * dt;
        self.record();
        let dist = (self.state.dcm(&p).0 - self.state.stance.pos).norm();
        if dist > self.cfg.recovery.divergence_radius {
            self.trace.termination = Termination::Diverged { t: self.state.t, distance: dist };
            self.done = true;
        }
        if self.state.cycle >= self.cfg.cycles() {
            self.done = true;
        }
        Ok(())
    }

    pub fn run(mut self) -> Result<Trace, SimError> {
        while !self.done {
            self.step_cycle()?;
        }
        Ok(self.trace)
    }
}

/// Run a scenario to completion, divergence or the step limit.
pub fn run_scenario(cfg: &SimConfig) -> Result<Trace, SimError> {
    Simulator::new(cfg.clone())?.run()
}

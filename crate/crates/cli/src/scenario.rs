//! Scenario files: flat `section.key = value` lines, `#` comments.
//!
//! Every key is optional; missing keys take the defaults of
//! [`SimConfig::default`]. Unknown or repeated keys are errors. Pushes are
//! numbered from 0: `push.0.t`, `push.0.force`, `push.0.duration`,
//! `push.0.theta`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use steptiming::adapter::TimingMode;
use steptiming::lipm::{ModelError, ModelParams};
use steptiming::nominal::{nominal_gait, PlanError};
use steptiming::sim::{PushEvent, PushModel, SimConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioError {
    pub line: Option<usize>,
    pub fields: Vec<String>,
    pub message: String,
}

impl ScenarioError {
    fn at_line(line: usize, key: &str, message: impl Into<String>) -> Self {
        Self { line: Some(line), fields: vec![key.to_string()], message: message.into() }
    }

    fn fields(fields: &[&str], message: impl Into<String>) -> Self {
        Self { line: None, fields: fields.iter().map(|s| s.to_string()).collect(), message: message.into() }
    }
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if !self.fields.is_empty() {
            write!(f, "{}: ", self.fields.join(", "))?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ScenarioError {}

const PUSH_DEFAULT_DURATION: f64 = 0.1;

#[derive(Debug, Clone, Copy, Default)]
struct RawPush {
    t: Option<f64>,
    force: Option<f64>,
    duration: Option<f64>,
    theta: Option<f64>,
}

/// Plain values as read, before cross-field validation.
#[derive(Debug, Clone)]
struct Raw {
    com_height: f64,
    gravity: f64,
    mass: f64,
    pelvis_width: f64,
    cfg: SimConfig,
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64, ScenarioError> {
    let x: f64 = v.parse().map_err(|_| ScenarioError::at_line(line, key, format!("expected a number, got `{v}`")))?;
    if !x.is_finite() {
        return Err(ScenarioError::at_line(line, key, "value must be finite"));
    }
    Ok(x)
}

fn parse_int<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ScenarioError> {
    v.parse().map_err(|_| ScenarioError::at_line(line, key, format!("expected an integer, got `{v}`")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool, ScenarioError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ScenarioError::at_line(line, key, format!("expected true or false, got `{v}`"))),
    }
}

pub fn parse_mode(v: &str) -> Option<TimingMode> {
    match v {
        "adaptive" => Some(TimingMode::Adaptive),
        "fixed" | "fixed_timing" => Some(TimingMode::Fixed),
        _ => None,
    }
}

pub fn mode_name(m: TimingMode) -> &'static str {
    match m {
        TimingMode::Adaptive => "adaptive",
        TimingMode::Fixed => "fixed",
    }
}

fn push_model_name(m: PushModel) -> &'static str {
    match m {
        PushModel::Impulse => "impulse",
        PushModel::Distributed => "distributed",
    }
}

fn set_push(pushes: &mut BTreeMap<usize, RawPush>, line: usize, key: &str, value: &str) -> Result<(), ScenarioError> {
    let rest = &key["push.".len()..];
    let (idx, field) = rest
        .split_once('.')
        .ok_or_else(|| ScenarioError::at_line(line, key, "unknown key"))?;
    let idx: usize = idx.parse().map_err(|_| ScenarioError::at_line(line, key, "unknown key"))?;
    let x = parse_f64(line, key, value)?;
    let p = pushes.entry(idx).or_default();
    let slot = match field {
        "t" => &mut p.t,
        "force" => &mut p.force,
        "duration" => &mut p.duration,
        "theta" => &mut p.theta,
        _ => return Err(ScenarioError::at_line(line, key, "unknown key")),
    };
    *slot = Some(x);
    Ok(())
}

fn set(raw: &mut Raw, line: usize, key: &str, v: &str) -> Result<(), ScenarioError> {
    let f = |v: &str| parse_f64(line, key, v);
    let c = &mut raw.cfg;
    match key {
        "model.com_height" => raw.com_height = f(v)?,
        "model.gravity" => raw.gravity = f(v)?,
        "model.mass" => raw.mass = f(v)?,
        "model.pelvis_width" => raw.pelvis_width = f(v)?,
        "limits.L_min" => c.limits.l_min = f(v)?,
        "limits.L_max" => c.limits.l_max = f(v)?,
        "limits.W_min" => c.limits.w_min = f(v)?,
        "limits.W_max" => c.limits.w_max = f(v)?,
        "limits.T_min" => c.limits.t_min = f(v)?,
        "limits.T_max" => c.limits.t_max = f(v)?,
        "velocity.vx" => c.velocity.vx = f(v)?,
        "velocity.vy" => c.velocity.vy = f(v)?,
        "weights.step_x" => c.weights.step_x = f(v)?,
        "weights.step_y" => c.weights.step_y = f(v)?,
        "weights.tau" => c.weights.tau = f(v)?,
        "weights.offset_x" => c.weights.offset_x = f(v)?,
        "weights.offset_y" => c.weights.offset_y = f(v)?,
        "swing.Z_des" => c.swing.apex_height = f(v)?,
        "swing.Z_max" => c.swing.max_height = f(v)?,
        "swing.samples" => c.swing.samples = parse_int(line, key, v)?,
        "sim.dt" => c.dt = f(v)?,
        "sim.duration" => c.duration = f(v)?,
        "sim.max_steps" => c.max_steps = parse_int(line, key, v)?,
        "sim.initial_foot_index" => c.initial_foot_index = parse_int(line, key, v)?,
        "sim.initial_stance_x" => c.initial_stance.x = f(v)?,
        "sim.initial_stance_y" => c.initial_stance.y = f(v)?,
        "sim.timing_margin" => c.timing_margin = f(v)?,
        "sim.track_swing" => c.track_swing = parse_bool(line, key, v)?,
        "sim.push_model" => {
            c.push_model = match v {
                "impulse" => PushModel::Impulse,
                "distributed" => PushModel::Distributed,
                _ => return Err(ScenarioError::at_line(line, key, format!("expected impulse or distributed, got `{v}`"))),
            }
        }
        "controller.mode" => {
            c.mode = parse_mode(v)
                .ok_or_else(|| ScenarioError::at_line(line, key, format!("expected adaptive or fixed, got `{v}`")))?
        }
        "recovery.divergence_radius" => c.recovery.divergence_radius = f(v)?,
        "recovery.offset_tolerance" => c.recovery.offset_tolerance = f(v)?,
        "recovery.steps" => c.recovery.recovery_steps = parse_int(line, key, v)?,
        _ => return Err(ScenarioError::at_line(line, key, "unknown key")),
    }
    Ok(())
}

pub fn parse_scenario(text: &str) -> Result<SimConfig, ScenarioError> {
    let d = ModelParams::default();
    let mut raw = Raw {
        com_height: d.com_height(),
        gravity: d.gravity(),
        mass: d.mass(),
        pelvis_width: d.pelvis_width(),
        cfg: SimConfig::default(),
    };
    let mut pushes = BTreeMap::new();
    let mut seen = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| ScenarioError { line: Some(n), fields: vec![], message: "expected `key = value`".into() })?;
        let (key, value) = (key.trim(), value.trim());
        if let Some(prev) = seen.insert(key.to_string(), n) {
            return Err(ScenarioError::at_line(n, key, format!("duplicate key (first set on line {prev})")));
        }
        if key.starts_with("push.") {
            set_push(&mut pushes, n, key, value)?;
        } else {
            set(&mut raw, n, key, value)?;
        }
    }
    finish(raw, pushes)
}

fn finish(raw: Raw, pushes: BTreeMap<usize, RawPush>) -> Result<SimConfig, ScenarioError> {
    let mut cfg = raw.cfg;
    cfg.model = ModelParams::new(raw.com_height, raw.gravity, raw.mass, raw.pelvis_width).map_err(|e| match e {
        ModelError::InvalidParameter { field, reason } => ScenarioError::fields(&[&format!("model.{field}")], reason),
    })?;

    for (i, (&idx, p)) in pushes.iter().enumerate() {
        if idx != i {
            return Err(ScenarioError::fields(&[&format!("push.{i}")], "push indices must be contiguous from 0"));
        }
        let name = |f: &str| format!("push.{idx}.{f}");
        let t = p.t.ok_or_else(|| ScenarioError::fields(&[&name("t")], "missing push time"))?;
        let force = p.force.ok_or_else(|| ScenarioError::fields(&[&name("force")], "missing push force"))?;
        let duration = p.duration.unwrap_or(PUSH_DEFAULT_DURATION);
        if t < 0.0 {
            return Err(ScenarioError::fields(&[&name("t")], "must be >= 0"));
        }
        if force < 0.0 {
            return Err(ScenarioError::fields(&[&name("force")], "must be >= 0"));
        }
        if duration <= 0.0 {
            return Err(ScenarioError::fields(&[&name("duration")], "must be > 0"));
        }
        cfg.pushes.push(PushEvent { t_push: t, force, duration, theta_deg: p.theta.unwrap_or(0.0) });
    }

    let l = &cfg.limits;
    if l.l_min >= l.l_max {
        return Err(ScenarioError::fields(&["limits.L_min", "limits.L_max"], "L_min must be < L_max"));
    }
    if l.w_min < 0.0 {
        return Err(ScenarioError::fields(&["limits.W_min"], "must be >= 0"));
    }
    if l.w_min >= l.w_max {
        return Err(ScenarioError::fields(&["limits.W_min", "limits.W_max"], "W_min must be < W_max"));
    }
    if l.t_min <= 0.0 {
        return Err(ScenarioError::fields(&["limits.T_min"], "must be > 0"));
    }
    if l.t_min >= l.t_max {
        return Err(ScenarioError::fields(&["limits.T_min", "limits.T_max"], "T_min must be < T_max"));
    }
    let w = &cfg.weights;
    for (name, v) in [
        ("weights.step_x", w.step_x),
        ("weights.step_y", w.step_y),
        ("weights.tau", w.tau),
        ("weights.offset_x", w.offset_x),
        ("weights.offset_y", w.offset_y),
    ] {
        if v <= 0.0 {
            return Err(ScenarioError::fields(&[name], "must be > 0"));
        }
    }
    let s = &cfg.swing;
    if s.apex_height <= 0.0 || s.apex_height > s.max_height {
        return Err(ScenarioError::fields(&["swing.Z_des", "swing.Z_max"], "need 0 < Z_des <= Z_max"));
    }
    if s.samples < 2 {
        return Err(ScenarioError::fields(&["swing.samples"], "must be >= 2"));
    }
    if cfg.dt <= 0.0 {
        return Err(ScenarioError::fields(&["sim.dt"], "must be > 0"));
    }
    if cfg.duration <= 0.0 {
        return Err(ScenarioError::fields(&["sim.duration"], "must be > 0"));
    }
    if cfg.timing_margin < 0.0 || cfg.timing_margin >= l.t_max {
        return Err(ScenarioError::fields(&["sim.timing_margin"], "must be in [0, T_max)"));
    }
    let r = &cfg.recovery;
    for (name, ok) in [
        ("recovery.divergence_radius", r.divergence_radius > 0.0),
        ("recovery.offset_tolerance", r.offset_tolerance > 0.0),
        ("recovery.steps", r.recovery_steps > 0),
    ] {
        if !ok {
            return Err(ScenarioError::fields(&[name], "must be > 0"));
        }
    }
    if let Err(PlanError::Infeasible { lower, upper }) = nominal_gait(&cfg.velocity, &cfg.limits, &cfg.model) {
        return Err(ScenarioError::fields(
            &["velocity.vx", "velocity.vy"],
            format!("no step duration fits the limits at this velocity ({lower} s > {upper} s)"),
        ));
    }
    cfg.validate().map_err(|e| ScenarioError::fields(&[], e.to_string()))?;
    Ok(cfg)
}

/// Effective configuration in scenario syntax. Numbers use the shortest
/// representation that parses back to the same value.
pub fn echo_scenario(cfg: &SimConfig) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    let m = &cfg.model;
    kv("model.com_height", m.com_height().to_string());
    kv("model.gravity", m.gravity().to_string());
    kv("model.mass", m.mass().to_string());
    kv("model.pelvis_width", m.pelvis_width().to_string());
    let l = &cfg.limits;
    kv("limits.L_min", l.l_min.to_string());
    kv("limits.L_max", l.l_max.to_string());
    kv("limits.W_min", l.w_min.to_string());
    kv("limits.W_max", l.w_max.to_string());
    kv("limits.T_min", l.t_min.to_string());
    kv("limits.T_max", l.t_max.to_string());
    kv("velocity.vx", cfg.velocity.vx.to_string());
    kv("velocity.vy", cfg.velocity.vy.to_string());
    let w = &cfg.weights;
    kv("weights.step_x", w.step_x.to_string());
    kv("weights.step_y", w.step_y.to_string());
    kv("weights.tau", w.tau.to_string());
    kv("weights.offset_x", w.offset_x.to_string());
    kv("weights.offset_y", w.offset_y.to_string());
    kv("swing.Z_des", cfg.swing.apex_height.to_string());
    kv("swing.Z_max", cfg.swing.max_height.to_string());
    kv("swing.samples", cfg.swing.samples.to_string());
    kv("controller.mode", mode_name(cfg.mode).to_string());
    kv("sim.dt", cfg.dt.to_string());
    kv("sim.duration", cfg.duration.to_string());
    kv("sim.max_steps", cfg.max_steps.to_string());
    kv("sim.initial_foot_index", cfg.initial_foot_index.to_string());
    kv("sim.initial_stance_x", cfg.initial_stance.x.to_string());
    kv("sim.initial_stance_y", cfg.initial_stance.y.to_string());
    kv("sim.timing_margin", cfg.timing_margin.to_string());
    kv("sim.track_swing", cfg.track_swing.to_string());
    kv("sim.push_model", push_model_name(cfg.push_model).to_string());
    kv("recovery.divergence_radius", cfg.recovery.divergence_radius.to_string());
    kv("recovery.offset_tolerance", cfg.recovery.offset_tolerance.to_string());
    kv("recovery.steps", cfg.recovery.recovery_steps.to_string());
    for (i, p) in cfg.pushes.iter().enumerate() {
        kv(&format!("push.{i}.t"), p.t_push.to_string());
        kv(&format!("push.{i}.force"), p.force.to_string());
        kv(&format!("push.{i}.duration"), p.duration.to_string());
        kv(&format!("push.{i}.theta"), p.theta_deg.to_string());
    }
    out
}

const FIG2_ADAPTIVE: &str = "\
# Walking at 1 m/s, pushed to the right at the start of a left-stance step.
velocity.vx = 1.0
velocity.vy = 0.0
controller.mode = adaptive
sim.dt = 0.001
sim.duration = 7.0
sim.initial_foot_index = 1
push.0.t = 1.4
push.0.force = 325
push.0.duration = 0.1
push.0.theta = -90
";

const FIG2_FIXED: &str = "\
# As fig2b with the step duration pinned to its nominal value.
velocity.vx = 1.0
velocity.vy = 0.0
controller.mode = fixed
sim.dt = 0.001
sim.duration = 7.0
sim.initial_foot_index = 1
push.0.t = 1.4
push.0.force = 325
push.0.duration = 0.1
push.0.theta = -90
";

const NOMINAL_1MS: &str = "\
# Unperturbed walking at 1 m/s with a 1 kHz controller.
velocity.vx = 1.0
velocity.vy = 0.0
sim.dt = 0.001
sim.duration = 7.0
";

const INPLACE: &str = "\
# Stepping in place; the base scenario for push sweeps.
velocity.vx = 0.0
velocity.vy = 0.0
sim.dt = 0.001
sim.duration = 10.0
sim.initial_foot_index = 1
";

pub const BUILTIN_NAMES: [&str; 4] = ["fig2a", "fig2b", "nominal_1ms", "inplace"];

pub fn builtin_text(name: &str) -> Option<&'static str> {
    match name {
        "fig2a" => Some(FIG2_FIXED),
        "fig2b" => Some(FIG2_ADAPTIVE),
        "nominal_1ms" => Some(NOMINAL_1MS),
        "inplace" => Some(INPLACE),
        _ => None,
    }
}

pub fn builtin(name: &str) -> Option<SimConfig> {
    builtin_text(name).map(|t| parse_scenario(t).expect("built-in scenarios parse"))
}

//! Trace CSV, run summary and sweep CSV writers.

use std::fmt::Write as _;
use std::io::{self, Write};

use steptiming::sim::{is_recovered, SimConfig, SweepPoint, Termination, Trace};

use crate::scenario::mode_name;

pub const TRACE_COLUMNS: [&str; 18] = [
    "t", "com_x", "com_y", "comd_x", "comd_y", "dcm_x", "dcm_y", "stance_x", "stance_y", "swing_x", "swing_y",
    "swing_z", "plan_uT_x", "plan_uT_y", "plan_T", "plan_b_x", "plan_b_y", "step_index",
];

/// `printf("%.9g")`: 9 significant digits, trailing zeros dropped.
pub fn fmt_g9(x: f64) -> String {
    const P: i32 = 9;
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if exp < -4 || exp >= P {
        let mant = trim_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (P - 1 - exp) as usize, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_trace_csv<W: Write>(trace: &Trace, mut w: W) -> io::Result<()> {
    writeln!(w, "{}", TRACE_COLUMNS.join(","))?;
    for r in &trace.cycles {
        let vals = [
            r.t,
            r.com.pos.x,
            r.com.pos.y,
            r.com.vel.x,
            r.com.vel.y,
            r.dcm.x,
            r.dcm.y,
            r.stance.pos.x,
            r.stance.pos.y,
            r.swing.x,
            r.swing.y,
            r.swing.z,
            r.plan_step.x,
            r.plan_step.y,
            r.plan_duration,
            r.plan_offset.x,
            r.plan_offset.y,
        ];
        let mut line = vals.iter().map(|v| fmt_g9(*v)).collect::<Vec<_>>().join(",");
        let _ = write!(line, ",{}", r.step_index);
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub mode: &'static str,
    pub recovered: bool,
    pub termination: &'static str,
    pub termination_time: f64,
    pub cycles: usize,
    pub steps_total: usize,
    pub steps_at_timing_bound: usize,
    pub max_dcm_offset_error: f64,
    pub max_dcm_distance: f64,
    /// Mean CoM velocity along the commanded heading.
    pub mean_velocity: f64,
    pub mean_velocity_x: f64,
    pub mean_velocity_y: f64,
    pub nominal_step_duration: f64,
    pub swing_replan_failures: usize,
    steps: Vec<[f64; 8]>,
}

impl Summary {
    pub fn new(cfg: &SimConfig, trace: &Trace) -> Self {
        let v = trace.mean_velocity().unwrap_or_default();
        let termination = match trace.termination {
            Termination::Completed => "completed",
            Termination::MaxSteps => "max_steps",
            Termination::Diverged { .. } => "diverged",
        };
        let steps = trace
            .steps
            .iter()
            .map(|s| {
                [
                    s.index as f64,
                    s.start_time,
                    s.duration,
                    s.landing.pos.x,
                    s.landing.pos.y,
                    s.offset_end.x,
                    s.offset_end.y,
                    if s.at_lower_bound { 1.0 } else { 0.0 },
                ]
            })
            .collect();
        Self {
            mode: mode_name(cfg.mode),
            recovered: is_recovered(trace, &cfg.recovery),
            termination,
            termination_time: trace.end_time,
            cycles: trace.records,
            steps_total: trace.steps.len(),
            steps_at_timing_bound: trace.steps_at_lower_bound(),
            max_dcm_offset_error: trace.max_offset_error(),
            max_dcm_distance: trace.max_dcm_distance,
            mean_velocity: v.dot(&cfg.velocity.heading()),
            mean_velocity_x: v.x,
            mean_velocity_y: v.y,
            nominal_step_duration: trace.initial_nominal.duration,
            swing_replan_failures: trace.swing_replan_failures,
            steps,
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[summary]");
        let _ = writeln!(s, "mode = {}", self.mode);
        let _ = writeln!(s, "recovered = {}", self.recovered);
        let _ = writeln!(s, "termination = {}", self.termination);
        let _ = writeln!(s, "termination_time = {}", fmt_g9(self.termination_time));
        let _ = writeln!(s, "cycles = {}", self.cycles);
        let _ = writeln!(s, "steps_total = {}", self.steps_total);
        let _ = writeln!(s, "steps_at_timing_bound = {}", self.steps_at_timing_bound);
        let _ = writeln!(s, "max_dcm_offset_error = {}", fmt_g9(self.max_dcm_offset_error));
        let _ = writeln!(s, "max_dcm_distance = {}", fmt_g9(self.max_dcm_distance));
        let _ = writeln!(s, "mean_velocity = {}", fmt_g9(self.mean_velocity));
        let _ = writeln!(s, "mean_velocity_x = {}", fmt_g9(self.mean_velocity_x));
        let _ = writeln!(s, "mean_velocity_y = {}", fmt_g9(self.mean_velocity_y));
        let _ = writeln!(s, "nominal_step_duration = {}", fmt_g9(self.nominal_step_duration));
        let _ = writeln!(s, "swing_replan_failures = {}", self.swing_replan_failures);
        let _ = writeln!(s, "\n[steps]");
        let _ = writeln!(s, "index,start_time,T,uT_x,uT_y,b_end_x,b_end_y,at_timing_bound");
        for r in &self.steps {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r[0] as usize,
                fmt_g9(r[1]),
                fmt_g9(r[2]),
                fmt_g9(r[3]),
                fmt_g9(r[4]),
                fmt_g9(r[5]),
                fmt_g9(r[6]),
                r[7] != 0.0
            );
        }
        s
    }
}

/// Look up `key` in the `[summary]` section of rendered summary text.
pub fn summary_value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines()
        .take_while(|l| !l.starts_with("[steps]"))
        .filter_map(|l| l.split_once(" = "))
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v)
}

pub fn write_sweep_csv<W: Write>(adaptive: &[SweepPoint], fixed: &[SweepPoint], mut w: W) -> io::Result<()> {
    writeln!(w, "theta_deg,f_max_adaptive_N,f_max_fixed_N")?;
    for (a, f) in adaptive.iter().zip(fixed) {
        writeln!(w, "{},{},{}", fmt_g9(a.theta), fmt_g9(a.f_max), fmt_g9(f.f_max))?;
    }
    Ok(())
}

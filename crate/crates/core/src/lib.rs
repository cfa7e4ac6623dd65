//! Step location and step timing adaptation for biped walking.
//!
//! A two-stage controller on top of the linear inverted pendulum: a nominal
//! planner picks step length, width and duration for a commanded velocity
//! once per step, and a five-variable QP adapts the next footprint, the step
//! duration and the end-of-step DCM offset every control cycle. Swing-foot
//! trajectories are replanned every cycle to follow the adapted landing.
//! [`sim`] closes the loop around an exact LIPM plant.

pub mod adapter;
pub mod lipm;
pub mod nominal;
pub mod qp;
pub mod sim;
pub mod swing;

//! Linear inverted pendulum and divergent component of motion (DCM).
//!
//! With a fixed CoM height `z0` and a point contact `u0` the horizontal CoM
//! obeys `ẍ = ω0² (x − u0)`, `ω0 = sqrt(g / z0)`. Splitting the state into the
//! CoM `x` and the DCM `ξ = x + ẋ/ω0` gives
//!
//! ```text
//!     ẋ = ω0 (ξ − x)
//!     ξ̇ = ω0 (ξ − u0)
//! ```
//!
//! Everything here is closed form and applies componentwise to 2-vectors.

use nalgebra::Vector2;
use thiserror::Error;

pub type Vec2 = Vector2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
}

/// Physical constants of the pendulum model.
///
/// `omega0` is always derived from gravity and CoM height, so an inconsistent
/// parameter set cannot be constructed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    com_height: f64,
    gravity: f64,
    mass: f64,
    pelvis_width: f64,
}

impl ModelParams {
    pub fn new(com_height: f64, gravity: f64, mass: f64, pelvis_width: f64) -> Result<Self, ModelError> {
        let positive = |field, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ModelError::InvalidParameter { field, reason: format!("must be finite and > 0, got {v}") })
            }
        };
        positive("com_height", com_height)?;
        positive("gravity", gravity)?;
        positive("mass", mass)?;
        if !(pelvis_width.is_finite() && pelvis_width >= 0.0) {
            return Err(ModelError::InvalidParameter {
                field: "pelvis_width",
                reason: format!("must be finite and >= 0, got {pelvis_width}"),
            });
        }
        Ok(Self { com_height, gravity, mass, pelvis_width })
    }

    pub fn com_height(&self) -> f64 {
        self.com_height
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Default lateral distance between the feet.
    pub fn pelvis_width(&self) -> f64 {
        self.pelvis_width
    }

    /// Natural frequency of the pendulum, `sqrt(g / z0)`.
    pub fn omega0(&self) -> f64 {
        (self.gravity / self.com_height).sqrt()
    }
}

impl Default for ModelParams {
    /// 60 kg, 0.8 m CoM height, 0.2 m pelvis.
    fn default() -> Self {
        Self { com_height: 0.8, gravity: 9.81, mass: 60.0, pelvis_width: 0.2 }
    }
}

/// Horizontal CoM position and velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComState {
    pub pos: Vec2,
    pub vel: Vec2,
}

impl ComState {
    pub fn new(pos: Vec2, vel: Vec2) -> Self {
        Self { pos, vel }
    }

    pub fn at_rest(pos: Vec2) -> Self {
        Self { pos, vel: Vec2::zeros() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dcm(pub Vec2);

/// A point-contact footprint. `index` alternates at every support exchange;
/// see [`lateral_sign`] for the side convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub pos: Vec2,
    pub index: i64,
}

impl Footprint {
    pub fn new(pos: Vec2, index: i64) -> Self {
        Self { pos, index }
    }
}

/// `ξ − u` between the DCM and a footprint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcmOffset(pub Vec2);

/// `(−1)^n`. Even indices are right-foot stance (the swing foot lands on the
/// +y side), odd indices are left-foot stance.
pub fn lateral_sign(foot_index: i64) -> f64 {
    if foot_index.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn dcm_from_state(c: &ComState, p: &ModelParams) -> Dcm {
    Dcm(c.pos + c.vel / p.omega0())
}

/// `ξ(t) = (ξ0 − u0) e^{ω0 t} + u0`.
pub fn propagate_dcm(xi0: &Dcm, u0: &Footprint, t: f64, p: &ModelParams) -> Dcm {
    Dcm((xi0.0 - u0.pos) * (p.omega0() * t).exp() + u0.pos)
}

/// Exact CoM state after `t` seconds on contact `u0`.
pub fn propagate_com(c0: &ComState, u0: &Footprint, t: f64, p: &ModelParams) -> ComState {
    let w = p.omega0();
    let (sh, ch) = ((w * t).sinh(), (w * t).cosh());
    let rel = c0.pos - u0.pos;
    ComState {
        pos: u0.pos + rel * ch + c0.vel * (sh / w),
        vel: rel * (w * sh) + c0.vel * ch,
    }
}

pub fn dcm_offset(xi: &Dcm, u: &Footprint) -> DcmOffset {
    DcmOffset(xi.0 - u.pos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn foot(x: f64, y: f64) -> Footprint {
        Footprint::new(Vec2::new(x, y), 0)
    }

    /// Classical RK4 on ẍ = ω0² (x − u0); independent of the closed forms.
    pub(crate) fn rk4(c0: &ComState, u0: &Footprint, t: f64, h: f64, p: &ModelParams) -> ComState {
        let w2 = p.omega0().powi(2);
        let f = |x: Vec2, v: Vec2| (v, (x - u0.pos) * w2);
        let n = (t / h).round() as usize;
        let (mut x, mut v) = (c0.pos, c0.vel);
        for _ in 0..n {
            let (k1x, k1v) = f(x, v);
            let (k2x, k2v) = f(x + k1x * (h / 2.0), v + k1v * (h / 2.0));
            let (k3x, k3v) = f(x + k2x * (h / 2.0), v + k2v * (h / 2.0));
            let (k4x, k4v) = f(x + k3x * h, v + k3v * h);
            x += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
            v += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
        }
        ComState::new(x, v)
    }

    #[test]
    fn omega_is_derived() {
        let p = ModelParams::default();
        assert_abs_diff_eq!(p.omega0(), (9.81f64 / 0.8).sqrt(), epsilon = 0.0);
        assert_abs_diff_eq!(p.omega0(), 3.50178, epsilon = 1e-5);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ModelParams::new(0.0, 9.81, 60.0, 0.2).is_err());
        assert!(ModelParams::new(0.8, -9.81, 60.0, 0.2).is_err());
        assert!(ModelParams::new(0.8, 9.81, 0.0, 0.2).is_err());
        assert!(ModelParams::new(0.8, 9.81, 60.0, -0.1).is_err());
        assert!(ModelParams::new(0.8, 9.81, 60.0, 0.0).is_ok());
    }

    #[test]
    fn dcm_examples() {
        let p = ModelParams::default();
        let xi = dcm_from_state(&ComState::at_rest(Vec2::zeros()), &p);
        assert_eq!(xi.0, Vec2::zeros());

        let xi = dcm_from_state(&ComState::new(Vec2::new(0.1, 0.0), Vec2::new(0.35, 0.0)), &p);
        assert_abs_diff_eq!(xi.0.x, 0.19995, epsilon = 1e-5);
        assert_eq!(xi.0.y, 0.0);

        let u = foot(0.3, -0.1);
        assert_eq!(dcm_from_state(&ComState::at_rest(u.pos), &p).0, u.pos);
    }

    #[test]
    fn propagate_dcm_examples() {
        let p = ModelParams::default();
        let u = foot(0.0, 0.0);
        let xi = propagate_dcm(&Dcm(Vec2::new(0.1, 0.0)), &u, 0.35, &p);
        assert_abs_diff_eq!(xi.0.x, 0.34062, epsilon = 1e-5);
        let xi0 = Dcm(Vec2::new(0.2, -0.3));
        assert_eq!(propagate_dcm(&xi0, &u, 0.0, &p), xi0);
    }

    #[test]
    fn offset_grows_exponentially_over_a_step() {
        let p = ModelParams::default();
        let u = foot(0.4, 0.1);
        let b = Vec2::new(0.14546, -0.03);
        let t = 0.35;
        let end = dcm_offset(&propagate_dcm(&Dcm(u.pos + b), &u, t, &p), &u);
        let expected = b * (p.omega0() * t).exp();
        assert_abs_diff_eq!(end.0, expected, epsilon = 1e-15);
        assert_eq!(dcm_offset(&Dcm(u.pos), &u).0, Vec2::zeros());
    }

    #[test]
    fn com_equilibrium_and_initial_condition() {
        let p = ModelParams::default();
        let u = foot(0.2, 0.1);
        let rest = ComState::at_rest(u.pos);
        for t in [0.0, 0.1, 1.0] {
            let c = propagate_com(&rest, &u, t, &p);
            assert_eq!(c.pos, u.pos);
            assert_eq!(c.vel, Vec2::zeros());
        }
        let c0 = ComState::new(Vec2::new(0.1, 0.2), Vec2::new(-0.3, 0.4));
        assert_eq!(propagate_com(&c0, &u, 0.0, &p), c0);
    }

    #[test]
    fn com_matches_rk4_at_step_length() {
        let p = ModelParams::default();
        let u = foot(0.05, -0.1);
        let c0 = ComState::new(Vec2::new(-0.12, 0.07), Vec2::new(0.8, -0.25));
        let exact = propagate_com(&c0, &u, 0.35, &p);
        let num = rk4(&c0, &u, 0.35, 1e-5, &p);
        assert_abs_diff_eq!(exact.pos, num.pos, epsilon = 1e-8);
        assert_abs_diff_eq!(exact.vel, num.vel, epsilon = 1e-8);
    }

    fn vec2() -> impl Strategy<Value = Vec2> {
        (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y)| Vec2::new(x, y))
    }

    proptest! {
        #[test]
        fn fixed_point(u in vec2(), t in 0.0..2.0f64) {
            let p = ModelParams::default();
            let f = Footprint::new(u, 3);
            prop_assert_eq!(propagate_dcm(&Dcm(u), &f, t, &p).0, u);
        }

        #[test]
        fn semigroup(xi in vec2(), u in vec2(), t1 in 0.0..1.0f64, t2 in 0.0..1.0f64) {
            let p = ModelParams::default();
            let f = Footprint::new(u, 0);
            let two = propagate_dcm(&propagate_dcm(&Dcm(xi), &f, t1, &p), &f, t2, &p);
            let one = propagate_dcm(&Dcm(xi), &f, t1 + t2, &p);
            let scale = one.0.amax().max(1.0);
            prop_assert!((two.0 - one.0).amax() <= 1e-12 * scale);
        }

        #[test]
        fn com_and_dcm_propagation_agree(x in vec2(), v in vec2(), u in vec2(), t in 0.0..1.0f64) {
            let p = ModelParams::default();
            let f = Footprint::new(u, 0);
            let c0 = ComState::new(x, v);
            let via_com = dcm_from_state(&propagate_com(&c0, &f, t, &p), &p);
            let direct = propagate_dcm(&dcm_from_state(&c0, &p), &f, t, &p);
            prop_assert!((via_com.0 - direct.0).amax() <= 1e-10);
        }
    }
}

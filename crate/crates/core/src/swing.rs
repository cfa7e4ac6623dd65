//! Swing-foot trajectories, replanned every control cycle.
//!
//! Horizontally each axis is a quintic joining the swing state of the
//! previous cycle to the adapted landing point at the adapted landing time
//! with zero velocity and acceleration. Vertically a single 9th-order
//! polynomial covers the whole step: it starts and ends on the ground at rest,
//! passes through the previous cycle's state, stays within `[0, Z_max]` at
//! sample points and aims for `Z_des` at mid-step. Matching position, velocity
//! and acceleration at the previous cycle keeps the replanned motion C².
//!
//! Polynomials are stored in a normalized variable `s = (t − origin) / scale`,
//! which keeps the monomial basis well conditioned; evaluation returns
//! derivatives with respect to `t`.

use nalgebra::{DMatrix, DVector, Vector3};
use thiserror::Error;

use crate::lipm::Vec2;
use crate::qp::{QpError, QpProblem, QpSolver};

/// Shortest remaining swing interval that is still replanned.
pub const MIN_SWING_INTERVAL: f64 = 1e-4;
pub const VERTICAL_DEGREE: usize = 9;
const DOMAIN_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwingError {
    #[error("swing interval of {remaining} s is too short to replan")]
    IllConditioned { remaining: f64 },
    #[error("inconsistent swing boundary conditions")]
    Inconsistent,
    #[error("t = {t} outside polynomial domain [{start}, {end}]")]
    OutOfDomain { t: f64, start: f64, end: f64 },
    #[error("vertical swing QP failed: {0}")]
    SolverFailure(#[from] QpError),
    #[error("invalid swing configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
    origin: f64,
    scale: f64,
    start: f64,
    end: f64,
}

impl Polynomial {
    /// `p(t) = Σ c_i ((t − origin) / scale)^i`, valid on `[start, end]`.
    pub fn new(coeffs: Vec<f64>, origin: f64, scale: f64, start: f64, end: f64) -> Self {
        assert!(!coeffs.is_empty(), "polynomial needs at least one coefficient");
        assert!(scale > 0.0 && start <= end);
        Self { coeffs, origin, scale, start, end }
    }

    /// Polynomial in plain `t` on `[start, end]`.
    pub fn in_time(coeffs: Vec<f64>, start: f64, end: f64) -> Self {
        Self::new(coeffs, 0.0, 1.0, start, end)
    }

    pub fn constant(c: f64, start: f64, end: f64) -> Self {
        Self::in_time(vec![c], start, end)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.start, self.end)
    }

    /// Value, first and second time derivative at `t`.
    pub fn eval(&self, t: f64) -> Result<(f64, f64, f64), SwingError> {
        if !(t >= self.start - DOMAIN_TOL && t <= self.end + DOMAIN_TOL) {
            return Err(SwingError::OutOfDomain { t, start: self.start, end: self.end });
        }
        Ok(self.eval_unchecked(t))
    }

    /// Like [`Polynomial::eval`] but without the domain check.
    pub fn eval_unchecked(&self, t: f64) -> (f64, f64, f64) {
        let s = (t - self.origin) / self.scale;
        let (mut p, mut d1, mut d2) = (0.0, 0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            d2 = d2 * s + d1;
            d1 = d1 * s + p;
            p = p * s + c;
        }
        (p, d1 / self.scale, 2.0 * d2 / (self.scale * self.scale))
    }
}

pub fn eval_poly(p: &Polynomial, t: f64) -> Result<(f64, f64, f64), SwingError> {
    p.eval(t)
}

/// Per-axis boundary data for one replanning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingBoundary {
    pub t_prev: f64,
    pub pos: f64,
    pub vel: f64,
    pub acc: f64,
    /// Landing time.
    pub t_land: f64,
    /// Landing position; ignored by the vertical planner, which lands at 0.
    pub target: f64,
}

impl SwingBoundary {
    fn check(&self) -> Result<(), SwingError> {
        let all = [self.t_prev, self.pos, self.vel, self.acc, self.t_land, self.target];
        if all.iter().any(|v| !v.is_finite()) || self.t_prev < 0.0 {
            return Err(SwingError::Inconsistent);
        }
        let remaining = self.t_land - self.t_prev;
        if remaining < MIN_SWING_INTERVAL {
            return Err(SwingError::IllConditioned { remaining });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingConfig {
    /// Desired height at mid-step.
    pub apex_height: f64,
    pub max_height: f64,
    /// Points on `[0, T]` where `0 ≤ Z ≤ Z_max` is imposed.
    pub samples: usize,
}

impl Default for SwingConfig {
    fn default() -> Self {
        Self { apex_height: 0.05, max_height: 0.1, samples: 50 }
    }
}

impl SwingConfig {
    pub fn validate(&self) -> Result<(), SwingError> {
        if !(self.apex_height > 0.0 && self.apex_height <= self.max_height && self.max_height.is_finite()) {
            return Err(SwingError::InvalidConfig("need 0 < apex_height <= max_height".into()));
        }
        if self.samples < 2 {
            return Err(SwingError::InvalidConfig("need at least 2 samples".into()));
        }
        Ok(())
    }
}

/// Row of `d^k/ds^k` of the monomials `s^0..s^degree` at `s`.
fn basis_row(s: f64, k: usize, degree: usize) -> Vec<f64> {
    (0..=degree)
        .map(|i| {
            if i < k {
                0.0
            } else {
                let falling: f64 = ((i - k + 1)..=i).map(|j| j as f64).product();
                falling * s.powi((i - k) as i32)
            }
        })
        .collect()
}

/// Quintic from the previous state to `(target, 0, 0)` at `t_land`.
pub fn horizontal_coeffs(b: &SwingBoundary) -> Result<Polynomial, SwingError> {
    b.check()?;
    let d = b.t_land - b.t_prev;
    let mut a = DMatrix::<f64>::zeros(6, 6);
    for k in 0..3 {
        a.row_mut(k).copy_from_slice(&basis_row(0.0, k, 5));
        a.row_mut(3 + k).copy_from_slice(&basis_row(1.0, k, 5));
    }
    let rhs = DVector::from_vec(vec![b.pos, b.vel * d, b.acc * d * d, b.target, 0.0, 0.0]);
    let c = a.lu().solve(&rhs).ok_or(SwingError::IllConditioned { remaining: d })?;
    Ok(Polynomial::new(c.iter().copied().collect(), b.t_prev, d, b.t_prev, b.t_land))
}

/// Result of the vertical planner, with a flag for the equality-only fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct VerticalPlan {
    pub poly: Polynomial,
    /// True when the inequality-constrained QP had no solution and only the
    /// boundary conditions and apex objective were kept.
    pub unconstrained: bool,
}

/// Height profile over the whole step: at rest on the ground at 0 and at
/// `t_land`, matching the previous state at `t_prev`.
pub fn vertical_coeffs(b: &SwingBoundary, cfg: &SwingConfig, solver: &mut QpSolver) -> Result<Polynomial, SwingError> {
    vertical_plan(b, cfg, solver, false).map(|p| p.poly)
}

/// As [`vertical_coeffs`]; with `allow_fallback` an infeasible inequality set
/// yields the equality-only solution instead of an error.
pub fn vertical_plan(
    b: &SwingBoundary,
    cfg: &SwingConfig,
    solver: &mut QpSolver,
    allow_fallback: bool,
) -> Result<VerticalPlan, SwingError> {
    b.check()?;
    cfg.validate()?;
    let n = VERTICAL_DEGREE + 1;
    let big_t = b.t_land;
    let sp = b.t_prev / big_t;

    // Equality rows in s = t / T; derivatives scale by T^k.
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(9);
    let mut push_row = |row: Vec<f64>, rhs: f64| -> Result<(), SwingError> {
        for (r, v) in rows.iter() {
            let same = r.iter().zip(&row).all(|(a, b)| (a - b).abs() <= 1e-14 * (1.0 + a.abs()));
            if same {
                if (v - rhs).abs() <= 1e-12 {
                    return Ok(());
                }
                return Err(SwingError::Inconsistent);
            }
        }
        rows.push((row, rhs));
        Ok(())
    };
    let prev = [b.pos, b.vel * big_t, b.acc * big_t * big_t];
    for k in 0..3 {
        push_row(basis_row(0.0, k, VERTICAL_DEGREE), 0.0)?;
        push_row(basis_row(sp, k, VERTICAL_DEGREE), prev[k])?;
        push_row(basis_row(1.0, k, VERTICAL_DEGREE), 0.0)?;
    }

    let m = rows.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for (i, (r, v)) in rows.iter().enumerate() {
        a.row_mut(i).copy_from_slice(r);
        rhs[i] = *v;
    }
    let svd = a.clone().svd(true, true);
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let smax = svd.singular_values.max();
    let thr = 1e-12 * smax;
    let mut cp = DVector::<f64>::zeros(n);
    let mut null_cols = Vec::new();
    for i in 0..n {
        let sv = svd.singular_values[i];
        if sv > thr {
            let coef = u.column(i).dot(&rhs) / sv;
            cp += vt.row(i).transpose() * coef;
        } else {
            null_cols.push(vt.row(i).transpose());
        }
    }
    let resid = (a.rows(0, m) * &cp - rhs.rows(0, m)).amax();
    if resid > 1e-9 {
        return Err(SwingError::Inconsistent);
    }
    if null_cols.is_empty() {
        let poly = Polynomial::new(cp.iter().copied().collect(), 0.0, big_t, 0.0, big_t);
        return Ok(VerticalPlan { poly, unconstrained: false });
    }
    let mut null = DMatrix::from_columns(&null_cols);
    let r = null.ncols();

    // Rotate the null-space basis so only its first direction moves the apex.
    let e = DVector::from_vec(basis_row(0.5, 0, VERTICAL_DEGREE));
    let k = null.transpose() * &e;
    let knorm = k.norm();
    let apex0 = e.dot(&cp);
    let mut targets = vec![0.0; r];
    let reg = 1e-3 * knorm.max(1e-6).powi(2);
    let mut weights = vec![reg; r];
    if knorm > 1e-12 {
        let mut v = k.clone();
        let sigma = -k[0].signum() * knorm;
        let sigma = if sigma == 0.0 { -knorm } else { sigma };
        v[0] -= sigma;
        let vv = v.dot(&v);
        if vv > 0.0 {
            let h = DMatrix::<f64>::identity(r, r) - (&v * v.transpose()) * (2.0 / vv);
            null = null * h;
        }
        let lead = null.column(0).dot(&e);
        weights[0] = lead * lead;
        targets[0] = (cfg.apex_height - apex0) / lead;
    }

    let mut qp = QpProblem::new(&targets, &weights);
    let nt = null.transpose();
    for i in 0..cfg.samples {
        let ti = big_t * i as f64 / (cfg.samples - 1) as f64;
        if ti < b.t_prev {
            continue;
        }
        let phi = DVector::from_vec(basis_row(ti / big_t, 0, VERTICAL_DEGREE));
        let row = &nt * &phi;
        if row.amax() <= 1e-12 {
            continue;
        }
        let base = phi.dot(&cp);
        let row: Vec<f64> = row.iter().copied().collect();
        let neg: Vec<f64> = row.iter().map(|x| -x).collect();
        qp.add_inequality(&row, cfg.max_height - base);
        qp.add_inequality(&neg, base);
    }

    let (y, unconstrained) = match solver.solve(&qp) {
        Ok(sol) => (sol.z, false),
        Err(QpError::Infeasible { .. }) if allow_fallback => (DVector::from_vec(targets), true),
        Err(err) => return Err(err.into()),
    };
    let c = cp + null * y;
    Ok(VerticalPlan { poly: Polynomial::new(c.iter().copied().collect(), 0.0, big_t, 0.0, big_t), unconstrained })
}

/// 3-D swing-foot state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingState {
    pub pos: Vector3<f64>,
    pub vel: Vector3<f64>,
    pub acc: Vector3<f64>,
}

impl SwingState {
    pub fn at_rest(ground: Vec2) -> Self {
        Self { pos: Vector3::new(ground.x, ground.y, 0.0), vel: Vector3::zeros(), acc: Vector3::zeros() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwingTrajectory {
    pub x: Polynomial,
    pub y: Polynomial,
    pub z: Polynomial,
    pub z_unconstrained: bool,
}

impl SwingTrajectory {
    pub fn eval(&self, t: f64) -> Result<SwingState, SwingError> {
        let (x, y, z) = (self.x.eval(t)?, self.y.eval(t)?, self.z.eval(t)?);
        Ok(SwingState {
            pos: Vector3::new(x.0, y.0, z.0),
            vel: Vector3::new(x.1, y.1, z.1),
            acc: Vector3::new(x.2, y.2, z.2),
        })
    }

    pub fn landing_time(&self) -> f64 {
        self.z.domain().1
    }
}

/// Replan all three axes from `state` at `t_prev` to `target` at `t_land`.
pub fn plan_swing(
    t_prev: f64,
    state: &SwingState,
    target: Vec2,
    t_land: f64,
    cfg: &SwingConfig,
    solver: &mut QpSolver,
) -> Result<SwingTrajectory, SwingError> {
    let axis = |i: usize, target: f64| SwingBoundary {
        t_prev,
        pos: state.pos[i],
        vel: state.vel[i],
        acc: state.acc[i],
        t_land,
        target,
    };
    let x = horizontal_coeffs(&axis(0, target.x))?;
    let y = horizontal_coeffs(&axis(1, target.y))?;
    let z = vertical_plan(&axis(2, 0.0), cfg, solver, true)?;
    Ok(SwingTrajectory { x, y, z: z.poly, z_unconstrained: z.unconstrained })
}

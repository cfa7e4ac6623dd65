//! Independent oracles shared by the integration tests and the acceptance
//! harness. None of these call into the solver or closed forms they check.
#![allow(dead_code)]

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use steptiming::adapter::{AdapterWeights, StepContext};
use steptiming::lipm::{lateral_sign, propagate_dcm, ComState, Dcm, Footprint, ModelParams, Vec2};
use steptiming::nominal::{nominal_gait, GaitLimits, VelocityCommand};
use steptiming::qp::QpProblem;

/// Classical RK4 on ẍ = ω0² (x − u0).
pub fn rk4(c0: &ComState, u0: Vec2, t: f64, h: f64, p: &ModelParams) -> ComState {
    let w2 = p.omega0().powi(2);
    let f = |x: Vec2, v: Vec2| (v, (x - u0) * w2);
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

/// Box-plus-one-equality QP: `min Σ w_i (z_i − r_i)²` s.t. `lo ≤ z ≤ hi`, `a·z = c`.
#[derive(Debug, Clone)]
pub struct BoxEqProblem {
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub a: Vec<f64>,
    pub c: f64,
}

impl BoxEqProblem {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.gen_range(1..=3);
        let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        let lo: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..0.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(0.3..1.2)).collect();
        let a: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(0.5..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let inside: Vec<f64> = (0..n).map(|i| lo[i] + (hi[i] - lo[i]) * rng.gen_range(0.1..0.9)).collect();
        let c = a.iter().zip(&inside).map(|(a, z)| a * z).sum();
        Self { targets, weights, lo, hi, a, c }
    }

    pub fn to_qp(&self) -> QpProblem {
        let n = self.targets.len();
        let mut qp = QpProblem::new(&self.targets, &self.weights);
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            qp.add_inequality(&e, self.hi[i]);
            e[i] = -1.0;
            qp.add_inequality(&e, -self.lo[i]);
        }
        qp.add_equality(&self.a, self.c);
        qp
    }

    fn objective(&self, z: &[f64]) -> f64 {
        z.iter().enumerate().map(|(i, v)| self.weights[i] * (v - self.targets[i]).powi(2)).sum()
    }

    /// Exhaustive grid search. Every face of the box is visited (each
    /// coordinate free, at its lower bound or at its upper bound); on a face
    /// the free coordinate with the largest equality coefficient is solved
    /// for and the rest are gridded, first at 1e-2, then 1e-3, then `fine`
    /// around the incumbent.
    pub fn grid_search(&self, fine: f64) -> Vec<f64> {
        let n = self.targets.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for code in 0..3usize.pow(n as u32) {
            let mut base = vec![f64::NAN; n];
            let mut free = Vec::new();
            let mut c = code;
            for i in 0..n {
                match c % 3 {
                    0 => free.push(i),
                    1 => base[i] = self.lo[i],
                    _ => base[i] = self.hi[i],
                }
                c /= 3;
            }
            if let Some(cand) = self.search_face(&base, &free, fine) {
                if best.as_ref().is_none_or(|(f, _)| cand.0 < *f) {
                    best = Some(cand);
                }
            }
        }
        best.expect("problem is feasible by construction").1
    }

    fn search_face(&self, base: &[f64], free: &[usize], fine: f64) -> Option<(f64, Vec<f64>)> {
        let fixed_sum: f64 = (0..base.len()).filter(|i| !free.contains(i)).map(|i| self.a[i] * base[i]).sum();
        if free.is_empty() {
            let z = base.to_vec();
            return ((fixed_sum - self.c).abs() <= 1e-12).then(|| (self.objective(&z), z));
        }
        let k = *free.iter().max_by(|&&i, &&j| self.a[i].abs().total_cmp(&self.a[j].abs())).unwrap();
        let grid: Vec<usize> = free.iter().copied().filter(|&i| i != k).collect();
        let complete = |pt: &[f64]| -> Option<Vec<f64>> {
            let mut z = base.to_vec();
            let mut s = self.c - fixed_sum;
            for (j, &i) in grid.iter().enumerate() {
                z[i] = pt[j];
                s -= self.a[i] * pt[j];
            }
            z[k] = s / self.a[k];
            (z[k] >= self.lo[k] && z[k] <= self.hi[k]).then_some(z)
        };
        let mut ranges: Vec<(f64, f64)> = grid.iter().map(|&i| (self.lo[i], self.hi[i])).collect();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for res in [1e-2, 1e-3, fine] {
            let axes: Vec<Vec<f64>> = ranges
                .iter()
                .map(|&(a, b)| {
                    let m = ((b - a) / res).ceil().max(0.0) as usize;
                    (0..=m).map(|i| (a + i as f64 * res).min(b)).collect()
                })
                .collect();
            let mut visit = |pt: &[f64]| {
                if let Some(z) = complete(pt) {
                    let f = self.objective(&z);
                    if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                        best = Some((f, z));
                    }
                }
            };
            match axes.len() {
                0 => visit(&[]),
                1 => axes[0].iter().for_each(|&x| visit(&[x])),
                _ => {
                    for &x in &axes[0] {
                        for &y in &axes[1] {
                            visit(&[x, y]);
                        }
                    }
                }
            }
            let (_, z) = best.as_ref()?;
            ranges = grid
                .iter()
                .map(|&i| ((z[i] - 20.0 * res).max(self.lo[i]), (z[i] + 20.0 * res).min(self.hi[i])))
                .collect();
        }
        best
    }
}

/// Step-QP oracle. For fixed τ the problem separates per axis into
/// `min α_u (u − u*)² + α_b (b − b*)²` with `u + b = u0 + cτ` and `u` boxed,
/// whose solution is a clamped weighted average. The outer search is a grid
/// on τ, refined around the best cell.
pub struct StepOracle {
    pub u: Vec2,
    pub tau: f64,
    pub b: Vec2,
    pub objective: f64,
}

pub fn step_oracle(ctx: &StepContext, w: &AdapterWeights, tau_lo: f64, tau_hi: f64) -> StepOracle {
    let n = ctx.stance.index;
    let s = lateral_sign(n);
    let u0 = ctx.stance.pos;
    let g = &ctx.nominal;
    let u_star = u0 + g.displacement(n);
    let b_star = g.offset(n + 1).0;
    let c = (ctx.dcm.0 - u0) * (-ctx.model.omega0() * ctx.t).exp();
    let lim = &ctx.limits;
    let ux_box = (u0.x + lim.l_min, u0.x + lim.l_max);
    let uy_box = if s > 0.0 { (u0.y + lim.w_min, u0.y + lim.w_max) } else { (u0.y - lim.w_max, u0.y - lim.w_min) };
    let axis = |rhs: f64, us: f64, bs: f64, wu: f64, wb: f64, bx: (f64, f64)| {
        // u + b = rhs; unconstrained minimizer then clamp u.
        let u = ((wu * us + wb * (rhs - bs)) / (wu + wb)).clamp(bx.0, bx.1);
        let b = rhs - u;
        (u, b, wu * (u - us).powi(2) + wb * (b - bs).powi(2))
    };
    let eval = |tau: f64| {
        let r = u0 + c * tau;
        let (ux, bx, fx) = axis(r.x, u_star.x, b_star.x, w.step_x, w.offset_x, ux_box);
        let (uy, by, fy) = axis(r.y, u_star.y, b_star.y, w.step_y, w.offset_y, uy_box);
        let f = fx + fy + w.tau * (tau - g.tau).powi(2);
        StepOracle { u: Vec2::new(ux, uy), tau, b: Vec2::new(bx, by), objective: f }
    };
    let mut lo = tau_lo;
    let mut hi = tau_hi;
    let mut best = eval(lo);
    for _ in 0..6 {
        let m = 2000;
        let h = (hi - lo) / m as f64;
        for i in 0..=m {
            let cand = eval((lo + i as f64 * h).min(tau_hi));
            if cand.objective < best.objective {
                best = cand;
            }
        }
        lo = (best.tau - 2.0 * h).max(tau_lo);
        hi = (best.tau + 2.0 * h).min(tau_hi);
    }
    best
}

/// A random but well-formed adapter context: random velocity, stance,
/// foot index, step time in `[0, t_frac · T_nom]` and DCM disturbance of at
/// most `dist` metres from the nominal orbit.
pub fn random_context(rng: &mut ChaCha8Rng, dist: f64, t_frac: f64) -> StepContext {
    let model = ModelParams::default();
    let limits = GaitLimits::default();
    let nominal = loop {
        let v = VelocityCommand::new(rng.gen_range(-1.2..1.2), rng.gen_range(-0.3..0.3));
        if let Ok(g) = nominal_gait(&v, &limits, &model) {
            break g;
        }
    };
    let n = rng.gen_range(0..4);
    let stance = Footprint::new(Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)), n);
    let t = rng.gen_range(0.0..=t_frac) * nominal.duration;
    let xi0 = Dcm(stance.pos + nominal.offset(n).0);
    let on_orbit = propagate_dcm(&xi0, &stance, t, &model);
    let ang = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = rng.gen_range(0.0..=dist);
    let dcm = Dcm(on_orbit.0 + Vec2::new(ang.cos(), ang.sin()) * r);
    StepContext { dcm, stance, t, nominal, limits, model }
}

pub fn dvec(z: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(z)
}

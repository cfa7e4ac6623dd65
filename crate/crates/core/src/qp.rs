//! Dense active-set solver for small strictly convex QPs of the form
//!
//! ```text
//!     minimize     Σ w_i (z_i − z*_i)²        w_i > 0
//!     subject to   A_eq z  = b_eq
//!                  A_in z <= b_in
//! ```
//!
//! The Hessian is diagonal, so every working-set KKT system is solved in
//! range-space form through the small Schur complement `N W⁻¹ Nᵀ`.
//!
//! The iteration follows Goldfarb and Idnani: start from the
//! equality-constrained minimum, repeatedly add the most violated inequality
//! and drop working-set rows whose multiplier would turn negative. Iterates
//! stay dual feasible, so the first primal-feasible iterate is optimal and an
//! infeasible problem is detected when a violated row cannot be reached.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("equality constraints are rank deficient")]
    DegenerateProblem,
    #[error("constraints are inconsistent (inequality row {constraint} cannot be satisfied)")]
    Infeasible { constraint: usize },
    #[error("active-set iteration limit reached")]
    IterationLimit,
}

/// Problem data. Rows are stored densely; `n` is expected to stay small.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    targets: DVector<f64>,
    weights: DVector<f64>,
    eq: Vec<(DVector<f64>, f64)>,
    ineq: Vec<(DVector<f64>, f64)>,
}

impl QpProblem {
    pub fn new(targets: &[f64], weights: &[f64]) -> Self {
        Self {
            targets: DVector::from_column_slice(targets),
            weights: DVector::from_column_slice(weights),
            eq: Vec::new(),
            ineq: Vec::new(),
        }
    }

    /// `row · z = rhs`
    pub fn add_equality(&mut self, row: &[f64], rhs: f64) -> &mut Self {
        self.eq.push((DVector::from_column_slice(row), rhs));
        self
    }

    /// `row · z <= rhs`
    pub fn add_inequality(&mut self, row: &[f64], rhs: f64) -> &mut Self {
        self.ineq.push((DVector::from_column_slice(row), rhs));
        self
    }

    pub fn dim(&self) -> usize {
        self.targets.len()
    }

    pub fn n_eq(&self) -> usize {
        self.eq.len()
    }

    pub fn n_ineq(&self) -> usize {
        self.ineq.len()
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn equality(&self, i: usize) -> (&DVector<f64>, f64) {
        (&self.eq[i].0, self.eq[i].1)
    }

    pub fn inequality(&self, i: usize) -> (&DVector<f64>, f64) {
        (&self.ineq[i].0, self.ineq[i].1)
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        self.weights.iter().zip(z.iter().zip(self.targets.iter())).map(|(w, (z, t))| w * (z - t).powi(2)).sum()
    }

    /// Largest constraint violation at `z` (0 when feasible).
    pub fn max_violation(&self, z: &DVector<f64>) -> f64 {
        let eq = self.eq.iter().map(|(a, b)| (a.dot(z) - b).abs());
        let ineq = self.ineq.iter().map(|(a, b)| (a.dot(z) - b).max(0.0));
        eq.chain(ineq).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.dim();
        if n == 0 {
            return Err(QpError::InvalidProblem("empty problem".into()));
        }
        if self.weights.len() != n {
            return Err(QpError::InvalidProblem(format!("{} weights for {} variables", self.weights.len(), n)));
        }
        if let Some(w) = self.weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(QpError::InvalidProblem(format!("weights must be finite and positive, got {w}")));
        }
        if self.targets.iter().any(|t| !t.is_finite()) {
            return Err(QpError::InvalidProblem("targets must be finite".into()));
        }
        for (kind, rows) in [("equality", &self.eq), ("inequality", &self.ineq)] {
            for (i, (a, b)) in rows.iter().enumerate() {
                if a.len() != n {
                    return Err(QpError::InvalidProblem(format!("{kind} row {i} has {} entries, expected {n}", a.len())));
                }
                if a.iter().any(|v| !v.is_finite()) || !b.is_finite() {
                    return Err(QpError::InvalidProblem(format!("{kind} row {i} is not finite")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    /// Indices of inequality rows in the final working set, ascending.
    pub active_set: Vec<usize>,
    pub eq_multipliers: DVector<f64>,
    /// One entry per inequality row; zero for rows outside the working set.
    pub ineq_multipliers: DVector<f64>,
    /// Scaled stationarity residual `‖∇f + Aᵀλ‖∞ / max(1, ‖∇f‖∞, ‖Wz*‖∞)`.
    pub kkt_residual: f64,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Row {
    Eq(usize),
    In(usize),
}

/// Reusable solver. Keeps the last working set for warm starts; not meant
/// to be shared between threads.
#[derive(Debug, Clone)]
pub struct QpSolver {
    pub feasibility_tol: f64,
    pub max_iterations: usize,
    last_active: Vec<usize>,
}

impl Default for QpSolver {
    fn default() -> Self {
        Self { feasibility_tol: 1e-9, max_iterations: 0, last_active: Vec::new() }
    }
}

/// One-shot cold solve.
pub fn solve_qp(p: &QpProblem) -> Result<QpSolution, QpError> {
    QpSolver::default().solve(p)
}

impl QpSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_active_set(&self) -> &[usize] {
        &self.last_active
    }

    pub fn solve(&mut self, p: &QpProblem) -> Result<QpSolution, QpError> {
        self.solve_warm(p, &[])
    }

    /// Solve starting from a seeded working set of inequality rows, typically
    /// the previous control cycle's active set. Seeds that are out of range or
    /// linearly dependent are ignored.
    pub fn solve_warm(&mut self, p: &QpProblem, seed: &[usize]) -> Result<QpSolution, QpError> {
        p.validate()?;
        let ws = Workspace::new(p);
        ws.check_equalities()?;
        let max_iter = if self.max_iterations > 0 { self.max_iterations } else { 10 * (p.dim() + p.n_ineq()) + 50 };

        let mut active: Vec<Row> = (0..p.n_eq()).map(Row::Eq).collect();
        let mut seeds: Vec<usize> = seed.iter().copied().filter(|&i| i < p.n_ineq()).collect();
        seeds.sort_unstable();
        seeds.dedup();
        for j in seeds {
            let (dz, _) = ws.direction(&active, ws.row(Row::In(j)))?;
            if !ws.is_dependent(Row::In(j), &dz) {
                active.push(Row::In(j));
            }
        }

        // Drop seeded rows until the face minimizer is dual feasible.
        let (mut z, mut mult) = loop {
            let (z, mult) = ws.face_solve(&active)?;
            let worst = active
                .iter()
                .enumerate()
                .filter(|(_, r)| matches!(r, Row::In(_)))
                .map(|(k, _)| (k, mult[k]))
                .filter(|(_, m)| *m < 0.0)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match worst {
                Some((k, _)) => {
                    active.remove(k);
                }
                None => break (z, mult),
            }
        };

        let mut iterations = 0;
        loop {
            // Most violated inequality; lowest index wins exact ties.
            let mut pick: Option<(usize, f64)> = None;
            for j in 0..p.n_ineq() {
                if active.contains(&Row::In(j)) {
                    continue;
                }
                let v = ws.violation(j, &z);
                if v > self.feasibility_tol && pick.map_or(true, |(_, best)| v > best) {
                    pick = Some((j, v));
                }
            }
            let Some((pj, _)) = pick else { break };

            let np = ws.row(Row::In(pj)).clone();
            loop {
                iterations += 1;
                if iterations > max_iter {
                    return Err(QpError::IterationLimit);
                }
                let (dz, r) = ws.direction(&active, &np)?;

                // Largest dual step keeping active inequality multipliers >= 0.
                let mut block: Option<(usize, f64)> = None;
                for (k, row) in active.iter().enumerate() {
                    if matches!(row, Row::In(_)) && r[k] < 0.0 {
                        let t = mult[k] / -r[k];
                        if block.map_or(true, |(_, tb)| t < tb) {
                            block = Some((k, t));
                        }
                    }
                }

                if ws.is_dependent(Row::In(pj), &dz) {
                    let Some((k, t)) = block else {
                        return Err(QpError::Infeasible { constraint: pj });
                    };
                    mult.axpy(t, &r, 1.0);
                    mult = drop_entry(&mult, k);
                    active.remove(k);
                    continue;
                }

                let full = ws.violation(pj, &z) / -np.dot(&dz);
                match block {
                    Some((k, t)) if t < full => {
                        z.axpy(t, &dz, 1.0);
                        mult.axpy(t, &r, 1.0);
                        mult = drop_entry(&mult, k);
                        active.remove(k);
                    }
                    _ => {
                        active.push(Row::In(pj));
                        // Re-solve the new face directly instead of trusting
                        // the accumulated step updates.
                        let (zf, mf) = ws.face_solve(&active)?;
                        z = zf;
                        mult = mf;
                        break;
                    }
                }
            }
        }

        let mut eq_mult = DVector::zeros(p.n_eq());
        let mut in_mult = DVector::zeros(p.n_ineq());
        let mut active_set = Vec::new();
        for (k, row) in active.iter().enumerate() {
            match *row {
                Row::Eq(i) => eq_mult[i] = mult[k],
                Row::In(j) => {
                    in_mult[j] = mult[k].max(0.0);
                    active_set.push(j);
                }
            }
        }
        active_set.sort_unstable();

        let kkt_residual = ws.stationarity(&z, &eq_mult, &in_mult);
        self.last_active = active_set.clone();
        Ok(QpSolution { objective: p.objective(&z), z, active_set, eq_multipliers: eq_mult, ineq_multipliers: in_mult, kkt_residual, iterations })
    }
}

fn drop_entry(v: &DVector<f64>, k: usize) -> DVector<f64> {
    v.clone().remove_row(k)
}

struct Workspace<'a> {
    p: &'a QpProblem,
    /// Diagonal of the inverse Hessian, `1 / (2 w)`.
    hinv: DVector<f64>,
}

impl<'a> Workspace<'a> {
    fn new(p: &'a QpProblem) -> Self {
        Self { p, hinv: p.weights.map(|w| 0.5 / w) }
    }

    fn row(&self, r: Row) -> &DVector<f64> {
        match r {
            Row::Eq(i) => &self.p.eq[i].0,
            Row::In(j) => &self.p.ineq[j].0,
        }
    }

    fn rhs(&self, r: Row) -> f64 {
        match r {
            Row::Eq(i) => self.p.eq[i].1,
            Row::In(j) => self.p.ineq[j].1,
        }
    }

    fn violation(&self, j: usize, z: &DVector<f64>) -> f64 {
        self.p.ineq[j].0.dot(z) - self.p.ineq[j].1
    }

    fn check_equalities(&self) -> Result<(), QpError> {
        let m = self.p.n_eq();
        if m == 0 {
            return Ok(());
        }
        let n = self.p.dim();
        if m > n {
            return Err(QpError::DegenerateProblem);
        }
        let mut a = DMatrix::zeros(m, n);
        for i in 0..m {
            let row = &self.p.eq[i].0;
            let norm = row.amax();
            if norm == 0.0 {
                return Err(QpError::DegenerateProblem);
            }
            a.set_row(i, &(row / norm).transpose());
        }
        let sv = a.singular_values();
        let max = sv.max();
        if sv.min() <= 1e-10 * max {
            return Err(QpError::DegenerateProblem);
        }
        Ok(())
    }

    fn rows_matrix(&self, active: &[Row]) -> DMatrix<f64> {
        let mut n = DMatrix::zeros(active.len(), self.p.dim());
        for (k, r) in active.iter().enumerate() {
            n.set_row(k, &self.row(*r).transpose());
        }
        n
    }

    fn schur(&self, n: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>, QpError> {
        let mut scaled = n.clone();
        for (mut col, h) in scaled.column_iter_mut().zip(self.hinv.iter()) {
            col *= *h;
        }
        let s = &scaled * n.transpose();
        Cholesky::new(s).ok_or(QpError::DegenerateProblem)
    }

    /// Minimizer of the objective on `{z : N z = c}` and the face multipliers.
    fn face_solve(&self, active: &[Row]) -> Result<(DVector<f64>, DVector<f64>), QpError> {
        let t = &self.p.targets;
        if active.is_empty() {
            return Ok((t.clone(), DVector::zeros(0)));
        }
        let n = self.rows_matrix(active);
        let c = DVector::from_iterator(active.len(), active.iter().map(|r| self.rhs(*r)));
        let chol = self.schur(&n)?;
        let lambda = chol.solve(&(&n * t - c));
        let z = t - self.hinv.component_mul(&(n.transpose() * &lambda));
        Ok((z, lambda))
    }

    /// Primal and dual rates for raising the multiplier of row `v`:
    /// `H dz + Nᵀ r = −v`, `N dz = 0`.
    fn direction(&self, active: &[Row], v: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>), QpError> {
        if active.is_empty() {
            return Ok((-self.hinv.component_mul(v), DVector::zeros(0)));
        }
        let n = self.rows_matrix(active);
        let chol = self.schur(&n)?;
        let r = -chol.solve(&(&n * self.hinv.component_mul(v)));
        let dz = -self.hinv.component_mul(&(v + n.transpose() * &r));
        Ok((dz, r))
    }

    /// True when the row's normal lies in the span of the working set, i.e.
    /// moving inside the current face cannot change its value.
    fn is_dependent(&self, r: Row, dz: &DVector<f64>) -> bool {
        let a = self.row(r);
        let free = a.dot(&self.hinv.component_mul(a));
        (-a.dot(dz)) <= 1e-11 * free
    }

    fn stationarity(&self, z: &DVector<f64>, eq_mult: &DVector<f64>, in_mult: &DVector<f64>) -> f64 {
        let w = &self.p.weights;
        let grad = 2.0 * w.component_mul(&(z - &self.p.targets));
        let mut res = grad.clone();
        for (i, (a, _)) in self.p.eq.iter().enumerate() {
            res.axpy(eq_mult[i], a, 1.0);
        }
        for (j, (a, _)) in self.p.ineq.iter().enumerate() {
            if in_mult[j] != 0.0 {
                res.axpy(in_mult[j], a, 1.0);
            }
        }
        let scale = 1.0_f64.max(grad.amax()).max(w.component_mul(z).amax()).max(w.component_mul(&self.p.targets).amax());
        res.amax() / scale
    }
}

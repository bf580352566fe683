//! Small dense nonlinear programming: SQP with BFGS and an l1 merit function.
//!
//! Problems have the form
//!
//! ```text
//!     minimize    f(x)
//!     subject to  c_i(x) <= 0        i = 1..m
//!                 lower <= x <= upper
//! ```
//!
//! Each iteration solves a strictly convex QP built from the current BFGS
//! matrix and the linearised constraints. Bounds are carried into the QP
//! exactly, so iterates never leave the box.

mod fd;
pub mod qp;

use nalgebra::{DMatrix, DVector};

pub use fd::{finite_diff_grad, finite_diff_jacobian};
pub use qp::{solve_qp, QpError, QpSolution};

use crate::error::{Error, Result};

/// Objective, gradient, constraint values and Jacobian at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: f64,
    pub gradient: DVector<f64>,
    pub constraints: DVector<f64>,
    /// `m x n`
    pub jacobian: DMatrix<f64>,
}

pub trait NlpProblem {
    fn dim(&self) -> usize;
    fn num_constraints(&self) -> usize;
    fn lower_bounds(&self) -> &[f64];
    fn upper_bounds(&self) -> &[f64];

    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);
    /// Values of `c(x)`; feasible means every entry is `<= 0`.
    fn constraints(&self, x: &[f64], out: &mut [f64]);
    fn jacobian(&self, x: &[f64], jac: &mut DMatrix<f64>);

    /// Everything at once. Override when the pieces share work.
    fn evaluate(&self, x: &[f64]) -> Evaluation {
        let (n, m) = (self.dim(), self.num_constraints());
        let mut gradient = DVector::zeros(n);
        self.gradient(x, gradient.as_mut_slice());
        let mut constraints = DVector::zeros(m);
        self.constraints(x, constraints.as_mut_slice());
        let mut jacobian = DMatrix::zeros(m, n);
        self.jacobian(x, &mut jacobian);
        Evaluation {
            objective: self.objective(x),
            gradient,
            constraints,
            jacobian,
        }
    }

    /// Objective and constraint values only, used by the line search.
    fn evaluate_values(&self, x: &[f64]) -> (f64, DVector<f64>) {
        let mut c = DVector::zeros(self.num_constraints());
        self.constraints(x, c.as_mut_slice());
        (self.objective(x), c)
    }

    /// Optional positive definite starting matrix for the quasi-Newton
    /// update. Identity when `None`.
    fn hessian_seed(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqpOptions {
    pub tol_kkt: f64,
    pub tol_feas: f64,
    pub max_iter: usize,
}

impl Default for SqpOptions {
    fn default() -> Self {
        Self {
            tol_kkt: 1e-6,
            tol_feas: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub x_star: Vec<f64>,
    pub objective_value: f64,
    /// Scaled first-order optimality error, see [`kkt_residual`].
    pub kkt_residual: f64,
    pub constraint_violation_max: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Multipliers of `c(x) <= 0` from the last QP.
    pub multipliers: Vec<f64>,
}

fn max_violation(c: &DVector<f64>) -> f64 {
    c.iter().fold(0.0, |acc, &v| acc.max(v))
}

fn l1_violation(c: &DVector<f64>) -> f64 {
    c.iter().map(|&v| v.max(0.0)).sum()
}

fn check_finite(eval: &Evaluation) -> Result<()> {
    if !eval.objective.is_finite() {
        return Err(Error::Callback(format!("objective = {}", eval.objective)));
    }
    if eval.gradient.iter().any(|v| !v.is_finite()) {
        return Err(Error::Callback("non-finite gradient entry".into()));
    }
    if eval.constraints.iter().any(|v| !v.is_finite()) {
        return Err(Error::Callback("non-finite constraint value".into()));
    }
    if eval.jacobian.iter().any(|v| !v.is_finite()) {
        return Err(Error::Callback("non-finite Jacobian entry".into()));
    }
    Ok(())
}

/// First-order optimality error at `x` for multipliers `lambda` (general
/// constraints) and `mu_lo`/`mu_hi` (bounds): the larger of the stationarity
/// and complementarity errors, divided by `max(1, |grad f|_inf)`.
pub fn kkt_residual(
    eval: &Evaluation,
    x: &[f64],
    lower: &[f64],
    upper: &[f64],
    lambda: &DVector<f64>,
    mu_lo: &DVector<f64>,
    mu_hi: &DVector<f64>,
) -> f64 {
    let stationarity = &eval.gradient + eval.jacobian.tr_mul(lambda) - mu_lo + mu_hi;
    let mut err = stationarity.amax();
    for (l, c) in lambda.iter().zip(eval.constraints.iter()) {
        err = err.max((l * c).abs());
    }
    for i in 0..x.len() {
        if lower[i].is_finite() {
            err = err.max((mu_lo[i] * (x[i] - lower[i])).abs());
        }
        if upper[i].is_finite() {
            err = err.max((mu_hi[i] * (upper[i] - x[i])).abs());
        }
    }
    err / eval.gradient.amax().max(1.0)
}

fn make_positive_definite(mut b: DMatrix<f64>) -> DMatrix<f64> {
    let n = b.nrows();
    let scale = (0..n).map(|i| b[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let mut ridge = 1e-10 * scale;
    for _ in 0..40 {
        if b.clone().cholesky().is_some() {
            return b;
        }
        for i in 0..n {
            b[(i, i)] += ridge;
        }
        ridge *= 10.0;
    }
    DMatrix::identity(n, n)
}

struct Step {
    d: DVector<f64>,
    lambda: DVector<f64>,
    mu_lo: DVector<f64>,
    mu_hi: DVector<f64>,
    elastic: bool,
}

/// Solve the SQP subproblem. Falls back to an elastic formulation when the
/// linearised constraints are inconsistent.
fn subproblem(
    b: &DMatrix<f64>,
    eval: &Evaluation,
    x: &[f64],
    lower: &[f64],
    upper: &[f64],
    penalty: f64,
) -> Result<Option<Step>> {
    let n = x.len();
    let m = eval.constraints.len();
    let lo = DVector::from_iterator(n, (0..n).map(|i| lower[i] - x[i]));
    let hi = DVector::from_iterator(n, (0..n).map(|i| upper[i] - x[i]));
    // c + J d <= 0  <=>  -J d >= c
    let c_rows = -&eval.jacobian;
    match solve_qp(b, &eval.gradient, &c_rows, &eval.constraints, &lo, &hi) {
        Ok(sol) => {
            return Ok(Some(Step {
                d: sol.x,
                lambda: sol.multipliers,
                mu_lo: sol.lower_multipliers,
                mu_hi: sol.upper_multipliers,
                elastic: false,
            }))
        }
        Err(QpError::NotPositiveDefinite) => return Ok(None),
        Err(_) => {}
    }

    // Elastic mode: one extra variable t >= 0 relaxes every row,
    // c + J d - t <= 0, at linear cost `weight * t`.
    let weight = 1e3 * penalty.max(1.0);
    let mut be = DMatrix::zeros(n + 1, n + 1);
    be.view_mut((0, 0), (n, n)).copy_from(b);
    be[(n, n)] = 1e-6 * weight;
    let mut ge = DVector::zeros(n + 1);
    ge.rows_mut(0, n).copy_from(&eval.gradient);
    ge[n] = weight;
    let mut ce = DMatrix::zeros(m, n + 1);
    ce.view_mut((0, 0), (m, n)).copy_from(&c_rows);
    ce.column_mut(n).fill(1.0);
    let mut loe = DVector::zeros(n + 1);
    loe.rows_mut(0, n).copy_from(&lo);
    let mut hie = DVector::from_element(n + 1, f64::INFINITY);
    hie.rows_mut(0, n).copy_from(&hi);
    let sol = match solve_qp(&be, &ge, &ce, &eval.constraints, &loe, &hie) {
        Ok(sol) => sol,
        Err(QpError::NotPositiveDefinite) => return Ok(None),
        Err(e) => return Err(Error::SolverAbort(format!("elastic subproblem failed: {e:?}"))),
    };
    Ok(Some(Step {
        d: sol.x.rows(0, n).into_owned(),
        lambda: sol.multipliers,
        mu_lo: sol.lower_multipliers.rows(0, n).into_owned(),
        mu_hi: sol.upper_multipliers.rows(0, n).into_owned(),
        elastic: true,
    }))
}

/// Solve `p` from `x0` (projected onto the box first).
///
/// Returns the converged point, or the last iterate with status `MaxIter`
/// when the iteration budget runs out or the line search stalls. Status
/// `Infeasible` means the iteration ended with a constraint violation above
/// `tol_feas` after the linearisation itself had become inconsistent.
pub fn solve_nlp(p: &dyn NlpProblem, x0: &[f64], opts: &SqpOptions) -> Result<NlpSolution> {
    let n = p.dim();
    assert_eq!(x0.len(), n, "starting point has the wrong dimension");
    let lower = p.lower_bounds().to_vec();
    let upper = p.upper_bounds().to_vec();
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("starting point must be finite"));
    }
    let project = |x: &mut [f64]| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };

    let mut x = x0.to_vec();
    project(&mut x);
    let mut eval = p.evaluate(&x);
    check_finite(&eval)?;

    let seed = |x: &[f64]| make_positive_definite(p.hessian_seed(x).unwrap_or_else(|| DMatrix::identity(n, n)));
    let mut b = seed(&x);
    let mut penalty = 1.0_f64;
    let mut fresh_matrix = true;
    let mut identity_tried = false;
    let mut last_elastic = false;
    let mut lambda = DVector::zeros(p.num_constraints());
    let mut kkt = f64::INFINITY;
    let mut iterations = 0;
    let mut status = SolveStatus::MaxIter;

    while iterations < opts.max_iter {
        let Some(step) = subproblem(&b, &eval, &x, &lower, &upper, penalty)? else {
            if fresh_matrix && identity_tried {
                return Err(Error::SolverAbort("QP Hessian is not positive definite".into()));
            }
            // round-off broke the quasi-Newton matrix: restart it
            b = if fresh_matrix {
                identity_tried = true;
                let scale = (0..n).map(|i| b[(i, i)].abs()).fold(1.0, f64::max);
                DMatrix::identity(n, n) * scale
            } else {
                seed(&x)
            };
            fresh_matrix = true;
            continue;
        };
        last_elastic = step.elastic;
        lambda = step.lambda.clone();
        kkt = kkt_residual(&eval, &x, &lower, &upper, &step.lambda, &step.mu_lo, &step.mu_hi);
        let violation = max_violation(&eval.constraints);
        if kkt <= opts.tol_kkt && violation <= opts.tol_feas {
            status = SolveStatus::Converged;
            break;
        }
        if step.elastic && step.d.amax() <= 1e-14 * (1.0 + x.iter().fold(0.0_f64, |a, v| a.max(v.abs()))) {
            // Stationary for the infeasibility measure: no progress possible.
            break;
        }
        iterations += 1;

        let lam_max = step.lambda.amax();
        if penalty < 1.1 * lam_max {
            penalty = 1.5 * lam_max + 1e-3;
        }
        let merit = |f: f64, c: &DVector<f64>| f + penalty * l1_violation(c);
        let phi0 = merit(eval.objective, &eval.constraints);
        let slope = eval.gradient.dot(&step.d) - penalty * l1_violation(&eval.constraints);

        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha >= 1e-10 {
            let mut trial: Vec<f64> = x.iter().zip(step.d.iter()).map(|(xi, di)| xi + alpha * di).collect();
            project(&mut trial);
            let (f, c) = p.evaluate_values(&trial);
            if f.is_finite() && c.iter().all(|v| v.is_finite()) {
                let phi = merit(f, &c);
                let decrease = 1e-4 * alpha * slope.min(0.0);
                // Accept tiny increases at round-off level near a solution.
                let slack = 1e-14 * phi0.abs().max(1.0);
                if phi <= phi0 + decrease + slack {
                    accepted = Some(trial);
                    break;
                }
            }
            alpha *= 0.5;
        }

        let Some(x_new) = accepted else {
            if fresh_matrix {
                log::debug!("SQP line search stalled at iteration {iterations}");
                break;
            }
            b = seed(&x);
            fresh_matrix = true;
            continue;
        };

        let eval_new = p.evaluate(&x_new);
        check_finite(&eval_new)?;

        let s = DVector::from_iterator(n, x_new.iter().zip(&x).map(|(a, b)| a - b));
        let grad_lag = |e: &Evaluation| &e.gradient + e.jacobian.tr_mul(&step.lambda);
        let mut y = grad_lag(&eval_new) - grad_lag(&eval);
        let bs = &b * &s;
        let sbs = s.dot(&bs);
        if sbs > 1e-300 {
            let sy = s.dot(&y);
            if sy < 0.2 * sbs {
                // Powell damping keeps the update positive definite.
                let theta = 0.8 * sbs / (sbs - sy);
                y = theta * y + (1.0 - theta) * &bs;
            }
            let sy = s.dot(&y);
            if sy > 1e-300 {
                b += &y * y.transpose() / sy - &bs * bs.transpose() / sbs;
                b = 0.5 * (&b + b.transpose());
            }
        }
        fresh_matrix = false;
        identity_tried = false;
        x = x_new;
        eval = eval_new;
    }

    let violation = max_violation(&eval.constraints);
    if status != SolveStatus::Converged && last_elastic && violation > opts.tol_feas {
        status = SolveStatus::Infeasible;
    }
    Ok(NlpSolution {
        objective_value: eval.objective,
        x_star: x,
        kkt_residual: kkt,
        constraint_violation_max: violation,
        iterations,
        status,
        multipliers: lambda.iter().copied().collect(),
    })
}

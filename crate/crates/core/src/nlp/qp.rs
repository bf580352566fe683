//! Dense strictly convex QP solver (Goldfarb–Idnani dual active set).
//!
//! Solves
//!
//! ```text
//!     minimize    1/2 x' G x + a' x
//!     subject to  C x >= b
//!                 lower <= x <= upper
//! ```
//!
//! `G` must be positive definite. Bounds may be infinite. The factorisation
//! `J = L^{-T} Q` and the triangular `R` are updated with Givens rotations as
//! constraints enter and leave the active set, so each iteration costs
//! `O(n^2)`.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpError {
    NotPositiveDefinite,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Multipliers of the general rows `C x >= b` (non-negative).
    pub multipliers: DVector<f64>,
    /// Multipliers of `x >= lower`.
    pub lower_multipliers: DVector<f64>,
    /// Multipliers of `x <= upper`.
    pub upper_multipliers: DVector<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Row {
    General(usize),
    Lower(usize),
    Upper(usize),
}

struct Constraints<'a> {
    c: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    lower: &'a DVector<f64>,
    upper: &'a DVector<f64>,
    row_norms: Vec<f64>,
}

impl Constraints<'_> {
    fn rows(&self) -> impl Iterator<Item = Row> + '_ {
        let n = self.lower.len();
        (0..self.c.nrows())
            .map(Row::General)
            .chain((0..n).filter(|&i| self.lower[i].is_finite()).map(Row::Lower))
            .chain((0..n).filter(|&i| self.upper[i].is_finite()).map(Row::Upper))
    }

    /// Slack `n' x - b` of one row.
    fn slack(&self, row: Row, x: &DVector<f64>) -> f64 {
        match row {
            Row::General(i) => self.c.row(i).dot(&x.transpose()) - self.b[i],
            Row::Lower(i) => x[i] - self.lower[i],
            Row::Upper(i) => self.upper[i] - x[i],
        }
    }

    fn norm(&self, row: Row) -> f64 {
        match row {
            Row::General(i) => self.row_norms[i],
            _ => 1.0,
        }
    }

    fn rhs(&self, row: Row) -> f64 {
        match row {
            Row::General(i) => self.b[i],
            Row::Lower(i) => self.lower[i],
            Row::Upper(i) => -self.upper[i],
        }
    }

    /// `J' n` for the normal of `row`.
    fn project(&self, row: Row, j: &DMatrix<f64>, out: &mut DVector<f64>) {
        match row {
            Row::General(i) => {
                let normal = self.c.row(i);
                for col in 0..j.ncols() {
                    out[col] = j.column(col).dot(&normal.transpose());
                }
            }
            Row::Lower(i) => {
                for col in 0..j.ncols() {
                    out[col] = j[(i, col)];
                }
            }
            Row::Upper(i) => {
                for col in 0..j.ncols() {
                    out[col] = -j[(i, col)];
                }
            }
        }
    }

    fn normal_dot(&self, row: Row, z: &DVector<f64>) -> f64 {
        match row {
            Row::General(i) => self.c.row(i).dot(&z.transpose()),
            Row::Lower(i) => z[i],
            Row::Upper(i) => -z[i],
        }
    }
}

fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    let h = a.hypot(b);
    if h == 0.0 {
        (1.0, 0.0, 0.0)
    } else {
        (a / h, b / h, h)
    }
}

fn rotate_columns(m: &mut DMatrix<f64>, i: usize, k: usize, c: f64, s: f64) {
    for r in 0..m.nrows() {
        let (a, b) = (m[(r, i)], m[(r, k)]);
        m[(r, i)] = c * a + s * b;
        m[(r, k)] = -s * a + c * b;
    }
}

/// Solve the QP. `c` is `m x n` (possibly `0 x n`).
pub fn solve_qp(
    g: &DMatrix<f64>,
    a: &DVector<f64>,
    c: &DMatrix<f64>,
    b: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> Result<QpSolution, QpError> {
    let n = a.len();
    assert_eq!(g.shape(), (n, n));
    assert_eq!(c.ncols(), n);
    assert_eq!(c.nrows(), b.len());
    assert_eq!(lower.len(), n);
    assert_eq!(upper.len(), n);

    let chol = g.clone().cholesky().ok_or(QpError::NotPositiveDefinite)?;
    let l_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(QpError::NotPositiveDefinite)?;
    let mut j = l_inv.transpose();
    let mut x = chol.solve(&(-a));

    let cons = Constraints {
        c,
        b,
        lower,
        upper,
        row_norms: (0..c.nrows()).map(|i| c.row(i).norm().max(1e-300)).collect(),
    };
    let all_rows: Vec<Row> = cons.rows().collect();

    let mut r = DMatrix::<f64>::zeros(n, n);
    let mut active: Vec<Row> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut d = DVector::<f64>::zeros(n);
    let mut z = DVector::<f64>::zeros(n);
    let mut rr = vec![0.0; n];

    let max_iter = 50 * (n + all_rows.len()) + 100;
    let mut iterations = 0;

    'outer: loop {
        let x_scale = 1.0 + x.amax();
        let mut worst: Option<(Row, f64)> = None;
        for &row in &all_rows {
            if active.contains(&row) {
                continue;
            }
            let s = cons.slack(row, &x) / cons.norm(row);
            let tol = 1e-11 * (x_scale + cons.rhs(row).abs() / cons.norm(row));
            if s < -tol && worst.is_none_or(|(_, w)| s < w) {
                worst = Some((row, s));
            }
        }
        let Some((p, _)) = worst else { break };
        let mut u_p = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(QpError::MaxIterations);
            }
            let q = active.len();
            cons.project(p, &j, &mut d);

            z.fill(0.0);
            for col in q..n {
                z.axpy(d[col], &j.column(col), 1.0);
            }
            for i in (0..q).rev() {
                let mut acc = d[i];
                for k in i + 1..q {
                    acc -= r[(i, k)] * rr[k];
                }
                rr[i] = acc / r[(i, i)];
            }

            let mut t1 = f64::INFINITY;
            let mut drop_idx = None;
            for i in 0..q {
                if rr[i] > 0.0 {
                    let ratio = u[i] / rr[i];
                    if ratio < t1 {
                        t1 = ratio;
                        drop_idx = Some(i);
                    }
                }
            }

            let d2: f64 = (q..n).map(|k| d[k] * d[k]).sum();
            let n_norm = cons.norm(p);
            let s_p = cons.slack(p, &x);
            let t2 = if d2 > 1e-24 * n_norm * n_norm {
                -s_p / cons.normal_dot(p, &z)
            } else {
                f64::INFINITY
            };

            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(QpError::Infeasible);
            }

            if t2.is_finite() {
                x.axpy(t, &z, 1.0);
            }
            for i in 0..q {
                u[i] -= t * rr[i];
            }
            u_p += t;

            if t2 <= t1 {
                // full step: p becomes active
                for k in (q + 1..n).rev() {
                    let (cs, sn, h) = givens(d[k - 1], d[k]);
                    if sn == 0.0 && cs == 1.0 {
                        continue;
                    }
                    d[k - 1] = h;
                    d[k] = 0.0;
                    rotate_columns(&mut j, k - 1, k, cs, sn);
                }
                for i in 0..=q {
                    r[(i, q)] = d[i];
                }
                active.push(p);
                u.push(u_p);
                continue 'outer;
            }

            let k = drop_idx.expect("finite partial step has an index");
            drop_constraint(&mut r, &mut j, &mut active, &mut u, k);
        }
    }

    let mut multipliers = DVector::zeros(c.nrows());
    let mut lower_multipliers = DVector::zeros(n);
    let mut upper_multipliers = DVector::zeros(n);
    for (row, &mult) in active.iter().zip(&u) {
        match *row {
            Row::General(i) => multipliers[i] = mult,
            Row::Lower(i) => lower_multipliers[i] = mult,
            Row::Upper(i) => upper_multipliers[i] = mult,
        }
    }
    let objective = 0.5 * (g * &x).dot(&x) + a.dot(&x);
    Ok(QpSolution {
        x,
        objective,
        multipliers,
        lower_multipliers,
        upper_multipliers,
        iterations,
    })
}

fn drop_constraint(r: &mut DMatrix<f64>, j: &mut DMatrix<f64>, active: &mut Vec<Row>, u: &mut Vec<f64>, k: usize) {
    let q = active.len();
    active.remove(k);
    u.remove(k);
    for col in k..q - 1 {
        for row in 0..=col + 1 {
            r[(row, col)] = r[(row, col + 1)];
        }
    }
    for row in 0..r.nrows() {
        r[(row, q - 1)] = 0.0;
    }
    let q = q - 1;
    for col in k..q {
        let (cs, sn, h) = givens(r[(col, col)], r[(col + 1, col)]);
        r[(col, col)] = h;
        r[(col + 1, col)] = 0.0;
        for k2 in col + 1..q {
            let (a, b) = (r[(col, k2)], r[(col + 1, k2)]);
            r[(col, k2)] = cs * a + sn * b;
            r[(col + 1, k2)] = -sn * a + cs * b;
        }
        rotate_columns(j, col, col + 1, cs, sn);
    }
}

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use shev_mompc::nlp::{solve_nlp, NlpProblem, SolveStatus, SqpOptions};

/// `0.5 x'Hx + g'x` subject to `A x <= b` and a box.
#[derive(Debug, Clone)]
struct ConvexQp {
    h: DMatrix<f64>,
    g: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl NlpProblem for ConvexQp {
    fn dim(&self) -> usize {
        self.g.len()
    }
    fn num_constraints(&self) -> usize {
        self.b.len()
    }
    fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }
    fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }
    fn objective(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        0.5 * x.dot(&(&self.h * &x)) + self.g.dot(&x)
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        let x = DVector::from_column_slice(x);
        grad.copy_from_slice((&self.h * x + &self.g).as_slice());
    }
    fn constraints(&self, x: &[f64], out: &mut [f64]) {
        let x = DVector::from_column_slice(x);
        out.copy_from_slice((&self.a * x - &self.b).as_slice());
    }
    fn jacobian(&self, _x: &[f64], jac: &mut DMatrix<f64>) {
        jac.copy_from(&self.a);
    }
}

/// Minimum over every active set of at most `n` rows whose equality
/// solution is feasible.
fn enumerate_active_sets(qp: &ConvexQp) -> f64 {
    let n = qp.dim();
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for i in 0..qp.num_constraints() {
        rows.push((qp.a.row(i).transpose(), qp.b[i]));
    }
    for i in 0..n {
        let mut e = DVector::zeros(n);
        if qp.upper[i].is_finite() {
            e[i] = 1.0;
            rows.push((e.clone(), qp.upper[i]));
        }
        if qp.lower[i].is_finite() {
            e[i] = -1.0;
            rows.push((e, -qp.lower[i]));
        }
    }
    let feasible = |x: &DVector<f64>| rows.iter().all(|(a, b)| a.dot(x) <= b + 1e-9);
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << rows.len()) {
        let active: Vec<usize> = (0..rows.len()).filter(|i| mask & (1 << i) != 0).collect();
        let k = active.len();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
        rhs.rows_mut(0, n).copy_from(&(-&qp.g));
        for (j, &r) in active.iter().enumerate() {
            let (a, b) = &rows[r];
            for c in 0..n {
                kkt[(n + j, c)] = a[c];
                kkt[(c, n + j)] = a[c];
            }
            rhs[n + j] = *b;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let x = sol.rows(0, n).into_owned();
        if x.iter().all(|v| v.is_finite()) && feasible(&x) {
            best = best.min(qp.objective(x.as_slice()));
        }
    }
    best
}

fn arb_qp() -> impl Strategy<Value = ConvexQp> {
    (1usize..=4, 0usize..=3).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-2.0..2.0f64, n * n),
            prop::collection::vec(-5.0..5.0f64, n),
            prop::collection::vec(-2.0..2.0f64, m * n),
            prop::collection::vec(-1.0..1.0f64, n),
            prop::collection::vec(0.0..1.0f64, m),
            prop::collection::vec((0.1..3.0f64, 0.1..3.0f64, any::<bool>()), n),
        )
            .prop_map(move |(l, g, a, xf, slack, boxes)| {
                let l = DMatrix::from_row_slice(n, n, &l);
                let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.5;
                let a = DMatrix::from_row_slice(m, n, &a);
                let xf = DVector::from_column_slice(&xf);
                let b = &a * &xf + DVector::from_column_slice(&slack);
                let (lower, upper) = boxes
                    .iter()
                    .enumerate()
                    .map(|(i, &(lo, hi, bounded))| {
                        if bounded {
                            (xf[i] - lo, xf[i] + hi)
                        } else {
                            (f64::NEG_INFINITY, f64::INFINITY)
                        }
                    })
                    .unzip();
                ConvexQp {
                    h,
                    g: DVector::from_column_slice(&g),
                    a,
                    b,
                    lower,
                    upper,
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_active_set_enumeration(qp in arb_qp()) {
        let oracle = enumerate_active_sets(&qp);
        let x0 = vec![0.0; qp.dim()];
        let sol = solve_nlp(&qp, &x0, &SqpOptions::default()).unwrap();
        prop_assert_eq!(sol.status, SolveStatus::Converged);
        prop_assert!(
            (sol.objective_value - oracle).abs() <= 1e-6 * oracle.abs().max(1.0),
            "solver {} vs oracle {}", sol.objective_value, oracle
        );
    }

    #[test]
    fn iterates_are_deterministic(qp in arb_qp()) {
        let x0 = vec![0.3; qp.dim()];
        let a = solve_nlp(&qp, &x0, &SqpOptions::default()).unwrap();
        let b = solve_nlp(&qp, &x0, &SqpOptions::default()).unwrap();
        prop_assert_eq!(a.iterations, b.iterations);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a.x_star), bits(&b.x_star));
    }
}

/// Central-difference gradient `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_diff_grad<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Jacobian of a vector function with `m` outputs,
/// returned row-major as `m` rows of length `x.len()`.
pub fn finite_diff_jacobian<F>(f: F, x: &[f64], m: usize, h: f64) -> Vec<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let n = x.len();
    let mut jac = vec![vec![0.0; n]; m];
    let mut probe = x.to_vec();
    let mut up = vec![0.0; m];
    let mut down = vec![0.0; m];
    for i in 0..n {
        probe[i] = x[i] + h;
        f(&probe, &mut up);
        probe[i] = x[i] - h;
        f(&probe, &mut down);
        probe[i] = x[i];
        for r in 0..m {
            jac[r][i] = (up[r] - down[r]) / (2.0 * h);
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let g = finite_diff_grad(|_| 4.2, &[1.0, -2.0, 3.0], 1e-4);
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn product_rule() {
        let g = finite_diff_grad(|x| x[0] * x[1], &[2.0, 5.0], 1e-5);
        assert!((g[0] - 5.0).abs() < 1e-7);
        assert!((g[1] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn jacobian_rows() {
        let j = finite_diff_jacobian(
            |x, out| {
                out[0] = x[0] * x[1];
                out[1] = x[0] + 3.0 * x[1];
            },
            &[2.0, 5.0],
            2,
            1e-5,
        );
        assert!((j[0][0] - 5.0).abs() < 1e-7 && (j[0][1] - 2.0).abs() < 1e-7);
        assert!((j[1][0] - 1.0).abs() < 1e-9 && (j[1][1] - 3.0).abs() < 1e-9);
    }
}

use super::NeuralError;
use crate::scalar::norm;

/// Outcome of [`conjugate_gradient`].
#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Recursively updated residual norm `||b - A x||` at exit.
    pub residual_norm: f64,
    /// Whether `residual_norm <= tol * ||b||` was reached before the cap.
    pub converged: bool,
    /// Residual norm after each iteration, starting with `||b||`.
    pub residual_history: Vec<f64>,
}

/// Solves `A x = b` for symmetric positive-definite `A`, given only the
/// product `matvec(p, out)` writing `A p` into `out`. Starts from `x = 0`.
pub fn conjugate_gradient<F>(
    mut matvec: F,
    b: &[f64],
    max_iters: usize,
    tol: f64,
) -> Result<CgSolution, NeuralError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rs: f64 = r.iter().map(|v| v * v).sum();
    if !rs.is_finite() {
        return Err(NeuralError::NonFinite { iteration: 0 });
    }
    let target = tol * rs.sqrt();
    let mut history = vec![rs.sqrt()];
    let mut iterations = 0;
    let mut converged = rs.sqrt() <= target;
    while !converged && iterations < max_iters {
        matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !pap.is_finite() {
            return Err(NeuralError::NonFinite {
                iteration: iterations,
            });
        }
        if pap <= 0.0 {
            // Not positive definite along p; keep the current iterate.
            break;
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        iterations += 1;
        if !rs_new.is_finite() || !alpha.is_finite() {
            return Err(NeuralError::NonFinite {
                iteration: iterations - 1,
            });
        }
        history.push(rs_new.sqrt());
        converged = rs_new.sqrt() <= target;
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    Ok(CgSolution {
        residual_norm: norm(&r),
        x,
        iterations,
        converged,
        residual_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(a: &[Vec<f64>]) -> impl FnMut(&[f64], &mut [f64]) + '_ {
        move |p, out| {
            for (o, row) in out.iter_mut().zip(a) {
                *o = row.iter().zip(p).map(|(x, y)| x * y).sum();
            }
        }
    }

    #[test]
    fn identity_solves_in_one_iteration() {
        let b = [1.0, -2.0, 3.5];
        let sol = conjugate_gradient(|p, o| o.copy_from_slice(p), &b, 10, 1e-12).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(sol.converged);
        assert_eq!(sol.x, b.to_vec());
    }

    #[test]
    fn diagonal_system() {
        let a = vec![vec![2.0, 0.0], vec![0.0, 4.0]];
        let sol = conjugate_gradient(dense(&a), &[2.0, 4.0], 10, 1e-12).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-14 && (sol.x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let sol = conjugate_gradient(|p, o| o.copy_from_slice(p), &[0.0; 4], 10, 1e-10).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.x, vec![0.0; 4]);
    }

    #[test]
    fn non_finite_operator_names_iteration() {
        let mut calls = 0;
        let err = conjugate_gradient(
            |p, o| {
                calls += 1;
                for (oi, pi) in o.iter_mut().zip(p) {
                    *oi = if calls == 2 { f64::NAN } else { 3.0 * pi + 0.1 };
                }
            },
            &[1.0, 2.0],
            10,
            1e-14,
        )
        .unwrap_err();
        assert_eq!(err, NeuralError::NonFinite { iteration: 1 });
    }

    #[test]
    fn iteration_cap_is_reported() {
        let a: Vec<Vec<f64>> = (0..10)
            .map(|i| {
                (0..10)
                    .map(|j| if i == j { 1.0 + i as f64 } else { 0.0 })
                    .collect()
            })
            .collect();
        let sol = conjugate_gradient(dense(&a), &[1.0; 10], 3, 1e-12).unwrap();
        assert_eq!(sol.iterations, 3);
        assert!(!sol.converged);
    }
}

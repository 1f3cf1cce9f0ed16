//! Minimal dense linear algebra: just enough to fit (weighted, ridge)
//! least-squares models through the normal equations.

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot collapses below `pivot_tol` (singular system).
pub fn solve_in_place(a: &mut [Vec<f64>], b: &mut [f64], pivot_tol: f64) -> Option<Vec<f64>> {
    let n = b.len();
    debug_assert!(a.len() == n && a.iter().all(|row| row.len() == n));
    for col in 0..n {
        let mut pivot_row = col;
        for r in (col + 1)..n {
            if a[r][col].abs() > a[pivot_row][col].abs() {
                pivot_row = r;
            }
        }
        if a[pivot_row][col].abs() <= pivot_tol {
            return None;
        }
        if pivot_row != col {
            a.swap(pivot_row, col);
            b.swap(pivot_row, col);
        }
        for r in (col + 1)..n {
            let factor = a[r][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                a[r][c] -= factor * a[col][c];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in (row + 1)..n {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// A fitted linear model `y = intercept + coefficients . x`.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// True when the ordinary normal equations were singular and a small
    /// ridge regularizer was added to obtain a solution.
    pub ridge_fallback: bool,
}

impl LinearFit {
    pub fn predict_one(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.coefficients.len());
        let mut acc = self.intercept;
        for (c, v) in self.coefficients.iter().zip(x) {
            acc += c * v;
        }
        acc
    }

    /// Standard deviation of the (unweighted) residuals on the given rows.
    pub fn residual_std(&self, rows: &[Vec<f64>], y: &[f64]) -> f64 {
        if rows.len() <= 1 {
            return 0.0;
        }
        let sse: f64 = rows
            .iter()
            .zip(y)
            .map(|(row, &yi)| {
                let r = yi - self.predict_one(row);
                r * r
            })
            .sum();
        (sse / (rows.len() - 1) as f64).sqrt()
    }
}

const SINGULAR_FALLBACK_LAMBDA: f64 = 1e-8;

/// Fits `y ~ intercept + x` by weighted ridge regression via the normal
/// equations. The intercept is never penalized. `lambda = 0` gives ordinary
/// (weighted) least squares; if that system is singular the fit silently
/// retries with a tiny ridge term and flags `ridge_fallback`.
///
/// Passing `weights = None` means unit weights.
pub fn fit_linear(
    rows: &[Vec<f64>],
    y: &[f64],
    weights: Option<&[f64]>,
    lambda: f64,
) -> Option<LinearFit> {
    assert_eq!(rows.len(), y.len(), "row/target length mismatch");
    if rows.is_empty() {
        return None;
    }
    let p = rows[0].len();
    let n = p + 1; // intercept in slot 0

    let mut xtx = vec![vec![0.0; n]; n];
    let mut xty = vec![0.0; n];
    for (i, row) in rows.iter().enumerate() {
        debug_assert_eq!(row.len(), p);
        let w = weights.map_or(1.0, |ws| ws[i]);
        if w == 0.0 {
            continue;
        }
        xtx[0][0] += w;
        xty[0] += w * y[i];
        for (j, &xj) in row.iter().enumerate() {
            xtx[0][j + 1] += w * xj;
            xty[j + 1] += w * xj * y[i];
            for (k, &xk) in row.iter().enumerate().skip(j) {
                xtx[j + 1][k + 1] += w * xj * xk;
            }
        }
    }
    // mirror the upper triangle (intercept row already fills column 0)
    for j in 1..n {
        xtx[j][0] = xtx[0][j];
        for k in (j + 1)..n {
            xtx[k][j] = xtx[j][k];
        }
    }

    let apply = |xtx: &[Vec<f64>], xty: &[f64], lam: f64| -> Option<Vec<f64>> {
        let mut a: Vec<Vec<f64>> = xtx.to_vec();
        let mut b = xty.to_vec();
        for j in 1..n {
            a[j][j] += lam;
        }
        solve_in_place(&mut a, &mut b, 1e-12)
    };

    let (solution, fallback) = match apply(&xtx, &xty, lambda) {
        Some(s) => (s, false),
        None => (
            apply(&xtx, &xty, lambda.max(SINGULAR_FALLBACK_LAMBDA))?,
            true,
        ),
    };

    Some(LinearFit {
        intercept: solution[0],
        coefficients: solution[1..].to_vec(),
        ridge_fallback: fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn solves_small_system() {
        let mut a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let mut b = vec![5.0, 10.0];
        let x = solve_in_place(&mut a, &mut b, 1e-12).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn singular_system_is_rejected() {
        let mut a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        let mut b = vec![1.0, 2.0];
        assert!(solve_in_place(&mut a, &mut b, 1e-12).is_none());
    }

    #[test]
    fn ols_recovers_exact_line() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 1.5 + 2.0 * r[0] - 0.5 * r[1]).collect();
        let fit = fit_linear(&rows, &y, None, 0.0).unwrap();
        assert!(!fit.ridge_fallback);
        assert_abs_diff_eq!(fit.intercept, 1.5, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.coefficients[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.coefficients[1], -0.5, epsilon = 1e-9);
    }

    #[test]
    fn collinear_design_falls_back_to_ridge() {
        // second feature duplicates the first
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, i as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0]).collect();
        let fit = fit_linear(&rows, &y, None, 0.0).unwrap();
        assert!(fit.ridge_fallback);
        // predictions are still essentially exact even though the
        // coefficient split between the twins is arbitrary
        for (row, &yi) in rows.iter().zip(&y) {
            assert_abs_diff_eq!(fit.predict_one(row), yi, epsilon = 1e-5);
        }
    }

    #[test]
    fn weights_focus_the_fit() {
        // two clusters with different slopes; weights select the first
        let rows: Vec<Vec<f64>> = vec![
            vec![0.0],
            vec![1.0],
            vec![2.0],
            vec![10.0],
            vec![11.0],
            vec![12.0],
        ];
        let y = vec![0.0, 2.0, 4.0, 0.0, 0.0, 0.0];
        let w = vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let fit = fit_linear(&rows, &y, Some(&w), 0.0).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 2.0, epsilon = 1e-9);
    }
}

//! Lawson–Hanson active-set non-negative least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solution of `min ‖A x − b‖₂` subject to `x ≥ 0`.
#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

fn passive_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[usize]) -> Result<DVector<f64>> {
    let sub = a.select_columns(passive);
    sub.svd(true, true)
        .solve(b, 1e-13)
        .map_err(|e| Error::Numerical(format!("passive least squares failed: {e}")))
}

/// Entering columns are chosen by largest dual value, ties to the smallest index.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, max_iter: usize) -> Result<NnlsSolution> {
    let n = a.ncols();
    if a.nrows() != b.len() {
        return Err(Error::Domain("matrix and right-hand side disagree in length".into()));
    }
    let scale = a.amax().max(1e-300) * b.amax().max(1e-300);
    let tol = 1e-12 * scale * (n as f64).sqrt();
    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let mut iterations = 0;
    loop {
        let w = a.transpose() * (b - a * &x);
        let mut enter = None;
        let mut best = tol;
        for j in 0..n {
            if !passive[j] && w[j] > best {
                best = w[j];
                enter = Some(j);
            }
        }
        let Some(j) = enter else { break };
        if iterations >= max_iter {
            break;
        }
        passive[j] = true;
        loop {
            iterations += 1;
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let s_p = passive_lstsq(a, b, &idx)?;
            if s_p.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (k, &i) in idx.iter().enumerate() {
                    x[i] = s_p[k];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (k, &i) in idx.iter().enumerate() {
                if s_p[k] <= 0.0 {
                    let denom = x[i] - s_p[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[i] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (k, &i) in idx.iter().enumerate() {
                x[i] += alpha * (s_p[k] - x[i]);
                if x[i] <= 1e-15 * scale.sqrt() {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if iterations >= max_iter {
                break;
            }
        }
    }
    let residual_norm = (b - a * &x).norm();
    Ok(NnlsSolution { x, residual_norm, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_nonnegative_solution() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.5, 0.0, 1.0, 0.5, 1.0, 1.0, 0.0]);
        let truth = DVector::from_vec(vec![0.3, 0.0, 1.2]);
        let b = &a * &truth;
        let s = nnls(&a, &b, 100).unwrap();
        assert!((s.x - truth).amax() < 1e-12);
        assert!(s.residual_norm < 1e-12);
    }

    #[test]
    fn clips_negative_least_squares() {
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![1.0, -2.0]);
        let s = nnls(&a, &b, 100).unwrap();
        assert_eq!(s.x[1], 0.0);
        assert!((s.x[0] - 1.0).abs() < 1e-14);
    }
}

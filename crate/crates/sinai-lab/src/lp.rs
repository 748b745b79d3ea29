//! A small dense-tableau simplex solver for the grid linear programs of the
//! variational routines: maximize `c . x` subject to `A x <= b`, `x >= 0`,
//! with `b >= 0` (so the slack basis is feasible).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("b must be nonnegative for the slack start")]
    NegativeRhs,
    #[error("dimension mismatch")]
    Shape,
    #[error("unbounded objective")]
    Unbounded,
    #[error("iteration limit reached")]
    Stalled,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
}

pub fn solve_max(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<LpSolution, LpError> {
    let m = a.len();
    let n = c.len();
    if b.len() != m || a.iter().any(|row| row.len() != n) {
        return Err(LpError::Shape);
    }
    if b.iter().any(|&v| v < 0.0) {
        return Err(LpError::NegativeRhs);
    }
    // tableau: m rows of [A | I | b], objective row [-c | 0 | 0]
    let w = n + m + 1;
    let mut t = vec![vec![0.0f64; w]; m + 1];
    for i in 0..m {
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][w - 1] = b[i];
    }
    for j in 0..n {
        t[m][j] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let eps = 1e-12;
    for _ in 0..10 * (n + m).max(64) {
        // entering: most negative objective coefficient
        let mut enter = None;
        let mut best = -eps;
        for (j, &v) in t[m][..w - 1].iter().enumerate() {
            if v < best {
                best = v;
                enter = Some(j);
            }
        }
        let Some(enter) = enter else {
            let mut x = vec![0.0; n];
            for (i, &bj) in basis.iter().enumerate() {
                if bj < n {
                    x[bj] = t[i][w - 1];
                }
            }
            return Ok(LpSolution { value: t[m][w - 1], x });
        };
        // ratio test
        let mut leave = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..m {
            if t[i][enter] > eps {
                let r = t[i][w - 1] / t[i][enter];
                if r < best_ratio - eps || (r < best_ratio + eps && leave.is_none()) {
                    best_ratio = r;
                    leave = Some(i);
                }
            }
        }
        let Some(leave) = leave else {
            return Err(LpError::Unbounded);
        };
        // pivot
        let piv = t[leave][enter];
        for v in t[leave].iter_mut() {
            *v /= piv;
        }
        for i in 0..=m {
            if i != leave {
                let f = t[i][enter];
                if f != 0.0 {
                    for j in 0..w {
                        t[i][j] -= f * t[leave][j];
                    }
                }
            }
        }
        basis[leave] = enter;
    }
    Err(LpError::Stalled)
}

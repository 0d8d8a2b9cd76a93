//! Thomas algorithm for tridiagonal systems.

use crate::scalar::Scalar;

/// Pre-factored tridiagonal matrix; repeated solves reuse the elimination.
///
/// Row `i` reads `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]`;
/// `lower[0]` and `upper[n-1]` are ignored.
#[derive(Debug, Clone)]
pub struct Tridiagonal<T> {
    lower: Vec<T>,
    // modified upper diagonal c'_i = c_i / (b_i - a_i c'_{i-1})
    upper_mod: Vec<T>,
    // pivots b_i - a_i c'_{i-1}
    pivots: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("tridiagonal elimination broke down at row {row}")]
pub struct Breakdown {
    pub row: usize,
}

impl<T: Scalar> Tridiagonal<T> {
    pub fn new(lower: Vec<T>, diag: Vec<T>, upper: Vec<T>) -> Result<Self, Breakdown> {
        let n = diag.len();
        assert!(n >= 1 && lower.len() == n && upper.len() == n);
        let mut upper_mod = vec![T::zero(); n];
        let mut pivots = vec![T::zero(); n];
        for i in 0..n {
            let piv = if i == 0 {
                diag[0]
            } else {
                diag[i] - lower[i] * upper_mod[i - 1]
            };
            if piv == T::zero() || !piv.is_finite() {
                return Err(Breakdown { row: i });
            }
            pivots[i] = piv;
            upper_mod[i] = if i + 1 < n { upper[i] / piv } else { T::zero() };
        }
        Ok(Tridiagonal {
            lower,
            upper_mod,
            pivots,
        })
    }

    pub fn len(&self) -> usize {
        self.pivots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivots.is_empty()
    }

    /// Overwrites `rhs` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [T]) {
        let n = self.len();
        assert_eq!(rhs.len(), n);
        rhs[0] /= self.pivots[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) / self.pivots[i];
        }
        for i in (0..n - 1).rev() {
            let next = rhs[i + 1];
            rhs[i] -= self.upper_mod[i] * next;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matvec(l: &[f64], d: &[f64], u: &[f64], x: &[f64]) -> Vec<f64> {
        let n = d.len();
        (0..n)
            .map(|i| {
                let mut s = d[i] * x[i];
                if i > 0 {
                    s += l[i] * x[i - 1];
                }
                if i + 1 < n {
                    s += u[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    #[test]
    fn solves_diagonally_dominant_system() {
        let n = 50;
        let l: Vec<f64> = (0..n).map(|i| -1.0 - 0.01 * i as f64).collect();
        let u: Vec<f64> = (0..n).map(|i| -0.5 + 0.003 * i as f64).collect();
        let d: Vec<f64> = (0..n).map(|i| 4.0 + (i % 3) as f64).collect();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut rhs = matvec(&l, &d, &u, &x);
        let t = Tridiagonal::new(l, d, u).unwrap();
        t.solve_in_place(&mut rhs);
        for (a, b) in rhs.iter().zip(&x) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn single_row() {
        let t = Tridiagonal::new(vec![0.0], vec![2.0], vec![0.0]).unwrap();
        let mut r = vec![3.0];
        t.solve_in_place(&mut r);
        assert_eq!(r, vec![1.5]);
    }

    #[test]
    fn zero_pivot_reported() {
        let err = Tridiagonal::new(vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 0.0]).unwrap_err();
        assert_eq!(err.row, 1);
    }
}

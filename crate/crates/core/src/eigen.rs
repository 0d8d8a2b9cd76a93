//! Eigenvalues of the small dense matrices met in linear stability checks.

use num_complex::Complex;

use crate::scalar::Scalar;

/// Square matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> SmallMatrix<T> {
    pub fn from_rows(rows: &[&[T]]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            assert_eq!(row.len(), n, "matrix must be square");
            data.extend_from_slice(row);
        }
        SmallMatrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    fn is_triangular(&self) -> bool {
        let n = self.n;
        let lower = (0..n).all(|i| (i + 1..n).all(|j| self.get(i, j) == T::zero()));
        let upper = (0..n).all(|i| (0..i).all(|j| self.get(i, j) == T::zero()));
        lower || upper
    }

    /// Coefficients `c[0..=n]` of `det(lambda I - A) = sum c[k] lambda^k` (Faddeev-LeVerrier).
    pub fn characteristic_polynomial(&self) -> Vec<T> {
        let n = self.n;
        let mut coeffs = vec![T::zero(); n + 1];
        coeffs[n] = T::one();
        let mut m = vec![T::zero(); n * n];
        for k in 1..=n {
            // M_k = A M_{k-1} + c_{n-k+1} I
            let mut next = vec![T::zero(); n * n];
            for i in 0..n {
                for j in 0..n {
                    let mut s = T::zero();
                    for l in 0..n {
                        s += self.get(i, l) * m[l * n + j];
                    }
                    next[i * n + j] = s;
                }
                next[i * n + i] += coeffs[n - k + 1];
            }
            let mut trace = T::zero();
            for i in 0..n {
                for l in 0..n {
                    trace += self.get(i, l) * next[l * n + i];
                }
            }
            coeffs[n - k] = -trace / T::from_usize_lossy(k);
            m = next;
        }
        coeffs
    }

    /// All eigenvalues. Triangular matrices return their diagonal exactly;
    /// others go through the characteristic polynomial.
    pub fn eigenvalues(&self) -> Vec<Complex<T>> {
        if self.is_triangular() {
            return (0..self.n).map(|i| Complex::new(self.get(i, i), T::zero())).collect();
        }
        polynomial_roots(&self.characteristic_polynomial())
    }
}

/// Roots of `sum c[k] z^k` by Durand-Kerner iteration, polished real parts
/// sorted ascending.
pub fn polynomial_roots<T: Scalar>(coeffs: &[T]) -> Vec<Complex<T>> {
    let deg = coeffs.len() - 1;
    let lead = coeffs[deg];
    let monic: Vec<Complex<T>> = coeffs.iter().map(|&c| Complex::new(c / lead, T::zero())).collect();
    let eval = |z: Complex<T>| monic.iter().rev().fold(Complex::new(T::zero(), T::zero()), |acc, &c| acc * z + c);
    let radius = T::one() + monic[..deg].iter().map(|c| c.norm()).fold(T::zero(), T::max);
    let seed = Complex::new(T::lit(0.4), T::lit(0.9));
    let mut z: Vec<Complex<T>> = (0..deg)
        .map(|k| {
            let mut p = Complex::new(T::one(), T::zero());
            for _ in 0..k {
                p = p * seed;
            }
            p * radius / T::lit(2.0)
        })
        .collect();
    let tol = T::epsilon() * T::lit(64.0) * radius;
    for _ in 0..1000 {
        let mut moved = T::zero();
        for i in 0..deg {
            let mut denom = Complex::new(T::one(), T::zero());
            for j in 0..deg {
                if i != j {
                    denom = denom * (z[i] - z[j]);
                }
            }
            let delta = eval(z[i]) / denom;
            z[i] = z[i] - delta;
            moved = moved.max(delta.norm());
        }
        if moved <= tol {
            break;
        }
    }
    for zi in z.iter_mut() {
        if zi.im.abs() <= T::epsilon().sqrt() * radius {
            zi.im = T::zero();
        }
    }
    z.sort_by(|a, b| a.re.partial_cmp(&b.re).expect("finite eigenvalues"));
    z
}

//! Small dense LU solve with a 1-norm condition estimate, and the Thomas
//! algorithm for tridiagonal systems.

use crate::real::Real;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    fn norm1(&self) -> T {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.get(i, j).abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseSolution<T> {
    pub x: Vec<T>,
    /// 1-norm condition number of the row-equilibrated matrix.
    pub condition: T,
}

struct Lu<T> {
    lu: DenseMatrix<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    fn factor(mut a: DenseMatrix<T>) -> Option<Self> {
        let n = a.n;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, a.get(i, k).abs()))
                .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())?;
            if pivot == T::zero() || !pivot.is_finite() {
                return None;
            }
            if p != k {
                for j in 0..n {
                    let tmp = a.get(k, j);
                    a.set(k, j, a.get(p, j));
                    a.set(p, j, tmp);
                }
                perm.swap(k, p);
            }
            let akk = a.get(k, k);
            for i in k + 1..n {
                let l = a.get(i, k) / akk;
                a.set(i, k, l);
                for j in k + 1..n {
                    a.set(i, j, a.get(i, j) - l * a.get(k, j));
                }
            }
        }
        Some(Self { lu: a, perm })
    }

    fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.n;
        let mut y: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                let l = self.lu.get(i, j);
                let yj = y[j];
                y[i] -= l * yj;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let u = self.lu.get(i, j);
                let yj = y[j];
                y[i] -= u * yj;
            }
            y[i] /= self.lu.get(i, i);
        }
        y
    }
}

/// Solves `a x = b` with partial pivoting after scaling every row to unit
/// max-norm. Returns `None` when the matrix is numerically singular.
pub fn solve_dense<T: Real>(a: &DenseMatrix<T>, b: &[T]) -> Option<DenseSolution<T>> {
    let n = a.n;
    assert_eq!(b.len(), n);
    let mut scaled = a.clone();
    let mut rhs = b.to_vec();
    for i in 0..n {
        let s = (0..n).map(|j| a.get(i, j).abs()).fold(T::zero(), T::max);
        if s == T::zero() {
            return None;
        }
        for j in 0..n {
            scaled.set(i, j, a.get(i, j) / s);
        }
        rhs[i] /= s;
    }
    let norm = scaled.norm1();
    let lu = Lu::factor(scaled)?;
    let x = lu.solve(&rhs);

    let mut inv_norm = T::zero();
    let mut e = vec![T::zero(); n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = T::zero());
        e[j] = T::one();
        let col = lu.solve(&e);
        inv_norm = inv_norm.max(col.iter().map(|v| v.abs()).sum());
    }
    Some(DenseSolution {
        x,
        condition: norm * inv_norm,
    })
}

/// Solves a tridiagonal system. `sub[i]` multiplies `x[i-1]` in row `i`
/// (ignored for `i == 0`), `sup[i]` multiplies `x[i+1]` (ignored for the
/// last row). Returns the index of the first vanishing pivot on failure.
pub fn solve_tridiagonal<T: Real>(
    sub: &[T],
    diag: &[T],
    sup: &[T],
    rhs: &[T],
) -> Result<Vec<T>, usize> {
    let n = diag.len();
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    let tiny = T::epsilon() * T::epsilon();
    let mut scale = diag[0].abs() + if n > 1 { sup[0].abs() } else { T::zero() };
    let mut pivot = diag[0];
    if pivot.abs() <= tiny * scale || !pivot.is_finite() {
        return Err(0);
    }
    c[0] = if n > 1 { sup[0] / pivot } else { T::zero() };
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - sub[i] * c[i - 1];
        scale = diag[i].abs() + sub[i].abs() + if i + 1 < n { sup[i].abs() } else { T::zero() };
        if pivot.abs() <= tiny * scale || !pivot.is_finite() {
            return Err(i);
        }
        c[i] = if i + 1 < n { sup[i] / pivot } else { T::zero() };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        let next = d[i + 1];
        d[i] -= c[i] * next;
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_solve_needs_pivoting() {
        let mut a = DenseMatrix::<f64>::zeros(3);
        let rows = [[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]];
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                a.set(i, j, *v);
            }
        }
        let sol = solve_dense(&a, &[5.0, 3.0, 6.0]).unwrap();
        // x = (7/5, 8/5, 9/5)
        for (got, want) in sol.x.iter().zip([1.4, 1.6, 1.8]) {
            assert!((got - want).abs() < 1e-14);
        }
        assert!(sol.condition >= 1.0 && sol.condition < 100.0);
    }

    #[test]
    fn dense_singular_is_none() {
        let mut a = DenseMatrix::<f64>::zeros(2);
        a.set(0, 0, 1.0);
        a.set(0, 1, 2.0);
        a.set(1, 0, 2.0);
        a.set(1, 1, 4.0);
        let sol = solve_dense(&a, &[1.0, 2.0]);
        assert!(sol.is_none() || sol.unwrap().condition > 1e14);
    }

    #[test]
    fn tridiagonal_matches_known_solution() {
        // -x[i-1] + 2x[i] - x[i+1] with x = i^2 gives -2 in the interior.
        let n = 6;
        let want: Vec<f64> = (0..n).map(|i| (i * i) as f64).collect();
        let mut sub = vec![-1.0; n];
        let mut diag = vec![2.0; n];
        let mut sup = vec![-1.0; n];
        let mut rhs = vec![-2.0; n];
        sub[0] = 0.0;
        sup[0] = 0.0;
        diag[0] = 1.0;
        rhs[0] = want[0];
        sub[n - 1] = 0.0;
        diag[n - 1] = 1.0;
        rhs[n - 1] = want[n - 1];
        let got = solve_tridiagonal(&sub, &diag, &sup, &rhs).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }
}

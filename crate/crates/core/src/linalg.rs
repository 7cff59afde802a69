//! Small dense linear algebra: row-major matrices and an LU factorization
//! with partial pivoting. Problem sizes here are tens to low hundreds.

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] += v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// LU factors `P A = L U` of a square matrix.
#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("matrix is singular to working precision (pivot {pivot:e} at column {column})")]
pub struct SingularMatrix {
    pub column: usize,
    pub pivot: f64,
}

impl LuFactors {
    pub fn factor(a: &DenseMatrix) -> Result<Self, SingularMatrix> {
        assert_eq!(a.rows, a.cols, "LU needs a square matrix");
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = lu.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|r| (r, lu[r * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax <= 1e-13 * scale {
                return Err(SingularMatrix {
                    column: k,
                    pivot: pmax,
                });
            }
            if p != k {
                for c in 0..n {
                    lu.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let piv = lu[k * n + k];
            for r in k + 1..n {
                let f = lu[r * n + k] / piv;
                if f == 0.0 {
                    continue;
                }
                lu[r * n + k] = f;
                for c in k + 1..n {
                    lu[r * n + c] -= f * lu[k * n + c];
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut s = x[r];
            for c in 0..r {
                s -= self.lu[r * n + c] * x[c];
            }
            x[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for c in r + 1..n {
                s -= self.lu[r * n + c] * x[c];
            }
            x[r] = s / self.lu[r * n + r];
        }
        x
    }

    /// Solves `Aᵀ y = c`.
    pub fn solve_transpose(&self, c: &[f64]) -> Vec<f64> {
        let n = self.n;
        // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ z = c, Lᵀ w = z, then y = Pᵀ w.
        let mut z = c.to_vec();
        for r in 0..n {
            let mut s = z[r];
            for k in 0..r {
                s -= self.lu[k * n + r] * z[k];
            }
            z[r] = s / self.lu[r * n + r];
        }
        for r in (0..n).rev() {
            let mut s = z[r];
            for k in r + 1..n {
                s -= self.lu[k * n + r] * z[k];
            }
            z[r] = s;
        }
        let mut y = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            y[p] = z[i];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DenseMatrix {
        let mut a = DenseMatrix::zeros(3, 3);
        let vals = [[0.0, 2.0, 1.0], [4.0, -1.0, 3.0], [2.0, 5.0, -2.0]];
        for (r, row) in vals.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                a.set(r, c, *v);
            }
        }
        a
    }

    #[test]
    fn solve_and_transpose_roundtrip() {
        let a = sample();
        let lu = LuFactors::factor(&a).unwrap();
        let x = [1.0, -2.0, 0.5];
        let b = a.mul_vec(&x);
        for (got, want) in lu.solve(&b).iter().zip(x) {
            assert!((got - want).abs() < 1e-12);
        }
        // Aᵀ y = c
        let y = [0.3, 1.7, -4.0];
        let c: Vec<f64> = (0..3)
            .map(|col| (0..3).map(|r| a.get(r, col) * y[r]).sum())
            .collect();
        for (got, want) in lu.solve_transpose(&c).iter().zip(y) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_is_reported() {
        let mut a = DenseMatrix::zeros(2, 2);
        a.set(0, 0, 1.0);
        a.set(0, 1, 2.0);
        a.set(1, 0, 2.0);
        a.set(1, 1, 4.0);
        assert!(LuFactors::factor(&a).is_err());
    }
}

//! Dense lower-triangular Cholesky factor with row appends.

/// Lower-triangular factor `L` of a symmetric positive definite matrix,
/// stored row by row in packed form (row `i` holds `i + 1` entries).
#[derive(Debug, Clone)]
pub(crate) struct Cholesky {
    n: usize,
    packed: Vec<f64>,
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

impl Cholesky {
    /// Factor a full row-major `n x n` matrix. Only the lower triangle is read.
    /// Returns `None` when a pivot is not strictly positive.
    pub fn factor(a: &[f64], n: usize) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        let mut chol = Cholesky {
            n: 0,
            packed: Vec::with_capacity(row_start(n)),
        };
        let mut row = vec![0.0; n];
        for i in 0..n {
            row[..=i].copy_from_slice(&a[i * n..i * n + i + 1]);
            if !chol.append_row(&row[..=i]) {
                return None;
            }
        }
        Some(chol)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let s = row_start(i);
        &self.packed[s..s + i + 1]
    }

    /// Extend the factor by one row. `entries` holds the new matrix row:
    /// cross terms with the existing `n` rows followed by the diagonal.
    /// On failure the factor is left unchanged and `false` is returned.
    pub fn append_row(&mut self, entries: &[f64]) -> bool {
        let n = self.n;
        debug_assert_eq!(entries.len(), n + 1);
        let mut r = entries[..n].to_vec();
        self.solve_lower_in_place(&mut r);
        let d = entries[n] - r.iter().map(|v| v * v).sum::<f64>();
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        self.packed.extend_from_slice(&r);
        self.packed.push(d.sqrt());
        self.n += 1;
        true
    }

    /// Solve `L y = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let row = self.row(i);
            let mut s = b[i];
            for (lij, bj) in row[..i].iter().zip(&b[..i]) {
                s -= lij * bj;
            }
            b[i] = s / row[i];
        }
    }

    /// Solve `L^T x = y` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        for i in (0..self.n).rev() {
            let xi = b[i] / self.row(i)[i];
            b[i] = xi;
            for (j, lij) in self.row(i)[..i].iter().enumerate() {
                b[j] -= lij * xi;
            }
        }
    }

    /// Solve `L L^T x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }

    /// `log det(L L^T)`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.row(i)[i].ln()).sum::<f64>()
    }

    /// Dense row-major `L L^T`, for consistency checks.
    #[cfg(test)]
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (ri, rj) = (self.row(i), self.row(j));
                let v: f64 = ri[..=j].iter().zip(rj).map(|(a, b)| a * b).sum();
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }
}

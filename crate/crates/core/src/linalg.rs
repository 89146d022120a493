//! Small dense symmetric eigen-solvers and the block-banded direct solver
//! used for Newton steps.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::GeometryError;

/// Eigen-decomposition of a symmetric matrix with eigenvalues in ascending
/// order. Columns of `vectors` are the matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

fn check_finite(a: &DMatrix<f64>) -> Result<(), GeometryError> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(GeometryError::NonFinite)
    }
}

/// Ascending eigenvalues of a symmetric matrix. The 2x2 case uses the closed
/// form; ties keep their input order.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>, GeometryError> {
    check_finite(a)?;
    match a.nrows() {
        0 => Ok(Vec::new()),
        1 => Ok(vec![a[(0, 0)]]),
        2 => {
            let (lo, hi) = eig2(a[(0, 0)], a[(0, 1)], a[(1, 1)]);
            Ok(vec![lo, hi])
        }
        _ => Ok(sym_eigen(a)?.values),
    }
}

fn eig2(a: f64, b: f64, c: f64) -> (f64, f64) {
    let mean = 0.5 * (a + c);
    let rad = (0.5 * (a - c)).hypot(b);
    (mean - rad, mean + rad)
}

/// Full symmetric eigen-decomposition, ascending.
pub fn sym_eigen(a: &DMatrix<f64>) -> Result<SymEigen, GeometryError> {
    check_finite(a)?;
    let n = a.nrows();
    match n {
        1 => Ok(SymEigen {
            values: vec![a[(0, 0)]],
            vectors: DMatrix::identity(1, 1),
        }),
        2 => {
            let (p, b, c) = (a[(0, 0)], a[(0, 1)], a[(1, 1)]);
            let (lo, hi) = eig2(p, b, c);
            // angle of the eigenvector belonging to the larger eigenvalue
            let t = 0.5 * (2.0 * b).atan2(p - c);
            let (s, co) = t.sin_cos();
            let vectors = DMatrix::from_row_slice(2, 2, &[-s, co, co, s]);
            Ok(SymEigen {
                values: vec![lo, hi],
                vectors,
            })
        }
        _ => {
            let eig = SymmetricEigen::new(a.clone());
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
            let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
            let mut vectors = DMatrix::zeros(n, n);
            for (dst, &src) in order.iter().enumerate() {
                vectors.set_column(dst, &eig.eigenvectors.column(src));
            }
            Ok(SymEigen { values, vectors })
        }
    }
}

/// Ascending eigenvalues of the pencil `h v = k g v` with `g` positive
/// definite, via Cholesky reduction `L^{-1} h L^{-T}`.
pub fn generalized_eigenvalues(
    h: &DMatrix<f64>,
    g: &DMatrix<f64>,
) -> Result<Vec<f64>, GeometryError> {
    check_finite(h)?;
    check_finite(g)?;
    let chol = g
        .clone()
        .cholesky()
        .ok_or(GeometryError::NotPositiveDefinite)?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or(GeometryError::NotPositiveDefinite)?;
    let mut reduced = &linv * h * linv.transpose();
    // symmetrize rounding
    let r = reduced.clone();
    reduced = 0.5 * (&r + r.transpose());
    sym_eigenvalues(&reduced)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> Result<f64, GeometryError> {
    Ok(sym_eigenvalues(a)?[0])
}

/// Block-banded matrix with square dense blocks of equal size: block row `i`
/// couples to block columns `i - lower ..= i + upper`.
#[derive(Debug, Clone)]
pub struct BlockBanded {
    pub block: usize,
    pub lower: usize,
    pub upper: usize,
    /// `bands[i][k]` is block `(i, i + k - lower)`.
    pub bands: Vec<Vec<DMatrix<f64>>>,
}

impl BlockBanded {
    pub fn zeros(blocks: usize, block: usize, lower: usize, upper: usize) -> Self {
        Self {
            block,
            lower,
            upper,
            bands: vec![vec![DMatrix::zeros(block, block); lower + upper + 1]; blocks],
        }
    }

    pub fn blocks(&self) -> usize {
        self.bands.len()
    }

    pub fn dim(&self) -> usize {
        self.blocks() * self.block
    }

    fn slot(&self, bi: usize, bj: usize) -> Option<usize> {
        let k = bj as isize - bi as isize + self.lower as isize;
        (0..=(self.lower + self.upper) as isize).contains(&k).then_some(k as usize)
    }

    /// Adds `value` at global `(row, col)`. Entries outside the band are a
    /// programming error.
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        let (bi, bj) = (row / self.block, col / self.block);
        let k = self
            .slot(bi, bj)
            .unwrap_or_else(|| panic!("entry ({row}, {col}) outside block band"));
        self.bands[bi][k][(row % self.block, col % self.block)] += value;
    }

    fn columns(&self, bi: usize) -> impl Iterator<Item = (usize, usize)> {
        let lo = bi.saturating_sub(self.lower);
        let hi = (bi + self.upper).min(self.blocks() - 1);
        let lower = self.lower;
        (lo..=hi).map(move |bj| (bj, bj + lower - bi))
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let b = self.block;
        let mut y = DVector::zeros(self.dim());
        for bi in 0..self.blocks() {
            let mut acc = DVector::zeros(b);
            for (bj, k) in self.columns(bi) {
                acc += &self.bands[bi][k] * x.rows(bj * b, b);
            }
            y.rows_mut(bi * b, b).copy_from(&acc);
        }
        y
    }

    /// Solves `self * x = rhs` by block LU without pivoting across blocks
    /// (partial pivoting inside each diagonal block). Returns `None` when a
    /// pivot block is singular or the result is not finite.
    pub fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let (b, nb, lw) = (self.block, self.blocks(), self.lower);
        let mut a = self.bands.clone();
        let mut inv: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        for k in 0..nb {
            let pivot = a[k][lw].clone().lu().try_inverse()?;
            for i in k + 1..=(k + lw).min(nb - 1) {
                let li = k + lw - i;
                let l = &a[i][li] * &pivot;
                for j in k + 1..=(k + self.upper).min(nb - 1) {
                    let update = &l * &a[k][j + lw - k];
                    a[i][j + lw - i] -= update;
                }
                a[i][li] = l;
            }
            inv.push(pivot);
        }
        // forward: unit lower factor
        let mut y: Vec<DVector<f64>> = Vec::with_capacity(nb);
        for i in 0..nb {
            let mut yi: DVector<f64> = rhs.rows(i * b, b).into_owned();
            for k in i.saturating_sub(lw)..i {
                yi -= &a[i][k + lw - i] * &y[k];
            }
            y.push(yi);
        }
        let mut x = DVector::zeros(self.dim());
        for k in (0..nb).rev() {
            let mut r = y[k].clone();
            for j in k + 1..=(k + self.upper).min(nb - 1) {
                r -= &a[k][j + lw - k] * x.rows(j * b, b);
            }
            x.rows_mut(k * b, b).copy_from(&(&inv[k] * r));
        }
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eig2_matches_nalgebra() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.7, 0.7, -1.0]);
        let e = sym_eigen(&a).unwrap();
        let mut reference: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
        reference.sort_by(f64::total_cmp);
        for (x, y) in e.values.iter().zip(&reference) {
            assert!((x - y).abs() < 1e-14);
        }
        let recon = &e.vectors * DMatrix::from_diagonal(&DVector::from_vec(e.values.clone())) * e.vectors.transpose();
        assert!((recon - a).abs().max() < 1e-14);
    }

    #[test]
    fn identity_eigenvalues_are_exact() {
        let e = sym_eigenvalues(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(e, vec![1.0, 1.0]);
    }

    #[test]
    fn generalized_pencil() {
        let h = DMatrix::identity(2, 2) * 2.0;
        let g = DMatrix::identity(2, 2) * 4.0;
        let k = generalized_eigenvalues(&h, &g).unwrap();
        assert!((k[0] - 0.5).abs() < 1e-15 && (k[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn non_finite_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[f64::NAN, 0.0, 0.0, 1.0]);
        assert!(matches!(sym_eigenvalues(&a), Err(GeometryError::NonFinite)));
    }

    #[test]
    fn block_solver_matches_dense() {
        let nb = 7;
        let b = 3;
        let mut m = BlockBanded::zeros(nb, b, 3, 2);
        let n = nb * b;
        let mut dense = DMatrix::zeros(n, n);
        let mut seed = 17u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for i in 0..n {
            for j in 0..n {
                let (bi, bj) = (i / b, j / b);
                if bj + 3 >= bi && bj <= bi + 2 {
                    let v = if i == j { 6.0 } else { next() };
                    m.add(i, j, v);
                    dense[(i, j)] = v;
                }
            }
        }
        let rhs = DVector::from_fn(n, |i, _| (i as f64).sin());
        let x = m.solve(&rhs).unwrap();
        let reference = dense.clone().lu().solve(&rhs).unwrap();
        assert!((x - &reference).abs().max() < 1e-12);
        assert!((m.mul_vec(&reference) - rhs).abs().max() < 1e-12);
    }
}

//! Small dense linear algebra for the per-step acceleration and multiplier
//! solves. Systems here have a few dozen unknowns at most and are assembled
//! fresh at every field evaluation, so there is no factor caching.

use std::fmt;

/// Pivots smaller than this fraction of the largest initial entry mark the
/// matrix as singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("singular matrix: pivot {pivot:e} at column {column} below threshold {threshold:e}")]
    Singular {
        column: usize,
        pivot: f64,
        threshold: f64,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry in linear system")]
    NonFinite,
}

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 {
            return Err(LinalgError::Dimension("empty matrix".into()));
        }
        if rows.iter().any(|row| row.len() != c) {
            return Err(LinalgError::Dimension("ragged rows".into()));
        }
        Ok(Matrix {
            rows: r,
            cols: c,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = (0..self.rows).map(|i| self.row(i)).collect();
        f.debug_struct("Matrix")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("data", &rows)
            .finish()
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
///
/// ```
/// use herglotz::densela::{solve, Matrix};
///
/// let a = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap();
/// assert_eq!(solve(&a, &[4.0, 9.0]).unwrap(), vec![2.0, 3.0]);
/// ```
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.rows;
    if a.cols != n {
        return Err(LinalgError::Dimension(format!(
            "expected a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    if b.len() != n {
        return Err(LinalgError::Dimension(format!(
            "right-hand side has length {}, expected {}",
            b.len(),
            n
        )));
    }
    if a.data.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let threshold = SINGULAR_PIVOT_RATIO * a.max_abs();
    let mut m = a.clone();
    let mut x = b.to_vec();

    for col in 0..n {
        let (p, pivot) = (col..n)
            .map(|i| (i, m[(i, col)].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot < threshold || pivot == 0.0 {
            return Err(LinalgError::Singular {
                column: col,
                pivot,
                threshold,
            });
        }
        m.swap_rows(col, p);
        x.swap(col, p);
        let d = m[(col, col)];
        for i in col + 1..n {
            let f = m[(i, col)] / d;
            if f == 0.0 {
                continue;
            }
            m[(i, col)] = 0.0;
            for j in col + 1..n {
                let v = m[(col, j)];
                m[(i, j)] -= f * v;
            }
            x[i] -= f * x[col];
        }
    }
    for i in (0..n).rev() {
        let tail: f64 = (i + 1..n).map(|j| m[(i, j)] * x[j]).sum();
        x[i] = (x[i] - tail) / m[(i, i)];
    }
    Ok(x)
}

/// Number of pivots larger than `tol` times the largest initial entry after
/// row-echelon reduction with partial pivoting.
pub fn rank_estimate(a: &Matrix, tol: f64) -> usize {
    let scale = a.max_abs();
    if scale == 0.0 {
        return 0;
    }
    let threshold = tol * scale;
    let mut m = a.clone();
    let mut rank = 0;
    for col in 0..m.cols {
        if rank == m.rows {
            break;
        }
        let (p, pivot) = (rank..m.rows)
            .map(|i| (i, m[(i, col)].abs()))
            .fold((rank, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot <= threshold {
            continue;
        }
        m.swap_rows(rank, p);
        let d = m[(rank, col)];
        for i in rank + 1..m.rows {
            let f = m[(i, col)] / d;
            for j in col..m.cols {
                let v = m[(rank, j)];
                m[(i, j)] -= f * v;
            }
        }
        rank += 1;
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_passes_through() {
        let b = [1.0, -2.0, 3.5, 0.25];
        assert_eq!(solve(&Matrix::identity(4), &b).unwrap(), b.to_vec());
    }

    #[test]
    fn rank_deficient_is_singular() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(
            solve(&a, &[1.0, 2.0]),
            Err(LinalgError::Singular { column: 1, .. })
        ));
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(solve(&a, &[0.0, 0.0]), Err(LinalgError::Dimension(_))));
        let a = Matrix::identity(2);
        assert!(matches!(solve(&a, &[0.0]), Err(LinalgError::Dimension(_))));
        assert!(matches!(
            solve(&a, &[f64::NAN, 0.0]),
            Err(LinalgError::NonFinite)
        ));
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn needs_pivoting() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(solve(&a, &[3.0, 4.0]).unwrap(), vec![4.0, 3.0]);
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_estimate(&Matrix::zeros(2, 3), 1e-9), 0);
        assert_eq!(rank_estimate(&Matrix::identity(3), 1e-9), 3);
        for phi in [0.0, 0.3, std::f64::consts::FRAC_PI_2, 2.0, -2.7] {
            let (c, s) = (f64::cos(phi), f64::sin(phi));
            let a = Matrix::from_rows(&[vec![1.0, 0.0, -c, 0.0], vec![0.0, 1.0, -s, 0.0]])
                .unwrap();
            assert_eq!(rank_estimate(&a, 1e-9), 2);
        }
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]]).unwrap();
        assert_eq!(rank_estimate(&a, 1e-9), 1);
    }

    // Random matrices with a dominant diagonal have modest condition numbers.
    fn well_conditioned() -> impl Strategy<Value = (Matrix, Vec<f64>)> {
        (1usize..=12).prop_flat_map(|n| {
            (
                proptest::collection::vec(-1.0f64..1.0, n * n),
                proptest::collection::vec(-10.0f64..10.0, n),
                proptest::collection::vec(prop_oneof![Just(-1.0), Just(1.0)], n),
            )
                .prop_map(move |(mut data, b, signs)| {
                    for i in 0..n {
                        data[i * n + i] = signs[i] * (n as f64 + 1.0 + data[i * n + i].abs());
                    }
                    (
                        Matrix {
                            rows: n,
                            cols: n,
                            data,
                        },
                        b,
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn multiply_back((a, b) in well_conditioned()) {
            let x = solve(&a, &b).unwrap();
            let r = a.mul_vec(&x);
            let err = r.iter().zip(&b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            prop_assert!(err <= 1e-9, "residual {err}");
        }

        #[test]
        fn row_permutation_invariance((a, b) in well_conditioned(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let n = a.rows;
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let rows: Vec<Vec<f64>> = perm.iter().map(|&i| a.row(i).to_vec()).collect();
            let pb: Vec<f64> = perm.iter().map(|&i| b[i]).collect();
            let x = solve(&a, &b).unwrap();
            let y = solve(&Matrix::from_rows(&rows).unwrap(), &pb).unwrap();
            for (p, q) in x.iter().zip(&y) {
                prop_assert!((p - q).abs() <= 1e-10);
            }
        }
    }
}

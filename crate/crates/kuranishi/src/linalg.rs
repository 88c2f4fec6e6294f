//! Exact rational matrices and the floating-point rank helpers used for
//! differential data.

use nalgebra::{DMatrix, DVector};
use num_traits::{One, Signed, Zero};

use crate::poly::{rat, rat_to_f64, Rat};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RatMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Rat>,
}

impl RatMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Rat>) -> Self {
        assert_eq!(data.len(), rows * cols);
        RatMatrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![Rat::zero(); rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Rat::one());
        }
        m
    }

    pub fn from_rows(rows: &[Vec<Rat>], cols: usize) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols);
            data.extend(r.iter().cloned());
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn from_i64(rows: &[&[i64]], cols: usize) -> Self {
        let r: Vec<Vec<Rat>> = rows.iter().map(|r| r.iter().map(|&v| rat(v)).collect()).collect();
        Self::from_rows(&r, cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &Rat {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Rat) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> Vec<Rat> {
        self.data[r * self.cols..(r + 1) * self.cols].to_vec()
    }

    pub fn mul(&self, o: &RatMatrix) -> RatMatrix {
        assert_eq!(self.cols, o.rows, "matrix product shape");
        let mut out = Self::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..o.cols {
                    let v = out.get(i, j) + a * o.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> RatMatrix {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j).clone());
            }
        }
        out
    }

    /// Horizontal concatenation.
    pub fn hstack(blocks: &[&RatMatrix]) -> RatMatrix {
        let rows = blocks.first().map_or(0, |b| b.rows);
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = Self::zeros(rows, cols);
        let mut off = 0;
        for b in blocks {
            assert_eq!(b.rows, rows);
            for i in 0..rows {
                for j in 0..b.cols {
                    out.set(i, off + j, b.get(i, j).clone());
                }
            }
            off += b.cols;
        }
        out
    }

    fn echelon(&self) -> (RatMatrix, usize, bool) {
        let mut m = self.clone();
        let mut rank = 0;
        let mut swaps_odd = false;
        for c in 0..m.cols {
            if rank == m.rows {
                break;
            }
            let Some(p) = (rank..m.rows).find(|&r| !m.get(r, c).is_zero()) else {
                continue;
            };
            if p != rank {
                for j in 0..m.cols {
                    m.data.swap(p * m.cols + j, rank * m.cols + j);
                }
                swaps_odd = !swaps_odd;
            }
            let piv = m.get(rank, c).clone();
            for r in rank + 1..m.rows {
                let f = m.get(r, c) / &piv;
                if f.is_zero() {
                    continue;
                }
                for j in c..m.cols {
                    let v = m.get(r, j) - &f * m.get(rank, j);
                    m.set(r, j, v);
                }
            }
            rank += 1;
        }
        (m, rank, swaps_odd)
    }

    pub fn rank(&self) -> usize {
        self.echelon().1
    }

    pub fn det(&self) -> Rat {
        assert_eq!(self.rows, self.cols);
        if self.rows == 0 {
            return Rat::one();
        }
        let (m, rank, odd) = self.echelon();
        if rank < self.rows {
            return Rat::zero();
        }
        let mut d = Rat::one();
        for i in 0..self.rows {
            d *= m.get(i, i);
        }
        if odd {
            -d
        } else {
            d
        }
    }

    pub fn inverse(&self) -> Option<RatMatrix> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = RatMatrix::hstack(&[self, &RatMatrix::identity(n)]);
        for c in 0..n {
            let p = (c..n).find(|&r| !a.get(r, c).is_zero())?;
            if p != c {
                for j in 0..2 * n {
                    a.data.swap(p * 2 * n + j, c * 2 * n + j);
                }
            }
            let piv = a.get(c, c).clone();
            for j in 0..2 * n {
                let v = a.get(c, j) / &piv;
                a.set(c, j, v);
            }
            for r in 0..n {
                if r == c || a.get(r, c).is_zero() {
                    continue;
                }
                let f = a.get(r, c).clone();
                for j in 0..2 * n {
                    let v = a.get(r, j) - &f * a.get(c, j);
                    a.set(r, j, v);
                }
            }
        }
        let mut inv = RatMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                inv.set(i, j, a.get(i, n + j).clone());
            }
        }
        Some(inv)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| v.is_zero())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| rat_to_f64(&v.abs())).fold(0.0, f64::max)
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| rat_to_f64(self.get(i, j)))
    }
}

/// Singular values of `a` in decreasing order (empty for degenerate shapes).
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

/// Numerical rank with tolerance `tau_rank · σ_max`.
pub fn numerical_rank(a: &DMatrix<f64>, tau_rank: f64) -> usize {
    let s = singular_values(a);
    let Some(&top) = s.first() else { return 0 };
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > tau_rank * top).count()
}

/// Orthonormal basis of the kernel of `a`.
pub fn kernel_basis(a: &DMatrix<f64>, tau_rank: f64) -> Vec<DVector<f64>> {
    let (m, n) = a.shape();
    if n == 0 {
        return Vec::new();
    }
    if m == 0 {
        return (0..n).map(|i| DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })).collect();
    }
    // pad to at least square so the SVD returns a full right basis
    let rows = m.max(n);
    let mut p = DMatrix::zeros(rows, n);
    p.view_mut((0, 0), (m, n)).copy_from(a);
    let svd = p.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = if top == 0.0 { 0.0 } else { tau_rank * top };
    (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= tol)
        .map(|i| vt.row(i).transpose())
        .collect()
}

pub fn cokernel_basis(a: &DMatrix<f64>, tau_rank: f64) -> Vec<DVector<f64>> {
    kernel_basis(&a.transpose(), tau_rank)
}

/// Smallest of the `min(m, n)` singular values; `+∞` for an empty map.
pub fn sigma_min(a: &DMatrix<f64>) -> f64 {
    singular_values(a).last().copied().unwrap_or(f64::INFINITY)
}

/// Orthonormal basis of the orthogonal complement of the column span.
pub fn complement_basis(a: &DMatrix<f64>, tau_rank: f64) -> Vec<DVector<f64>> {
    cokernel_basis(a, tau_rank)
}

/// Sign of the determinant of a square matrix; 0 when numerically singular.
pub fn det_sign(a: &DMatrix<f64>) -> i32 {
    if a.nrows() == 0 {
        return 1;
    }
    let d = a.clone().lu().determinant();
    if d > 0.0 {
        1
    } else if d < 0.0 {
        -1
    } else {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::ratio;

    #[test]
    fn exact_rank_and_det() {
        let a = RatMatrix::from_i64(&[&[1, 2], &[2, 4]], 2);
        assert_eq!(a.rank(), 1);
        assert_eq!(a.det(), rat(0));
        let b = RatMatrix::from_i64(&[&[0, 1], &[1, 0]], 2);
        assert_eq!(b.det(), rat(-1));
        let c = RatMatrix::from_i64(&[&[2, 1], &[1, 1]], 2);
        let ci = c.inverse().unwrap();
        assert_eq!(c.mul(&ci), RatMatrix::identity(2));
        assert_eq!(ci.get(0, 1), &rat(-1));
        assert!(a.inverse().is_none());
    }

    #[test]
    fn composite_matrix_product() {
        let a = RatMatrix::from_rows(&[vec![rat(1)], vec![ratio(1, 2)]], 1);
        let b = RatMatrix::from_i64(&[&[1, 0], &[0, 2], &[1, 1]], 2);
        let ba = b.mul(&a);
        assert_eq!(ba.rows(), 3);
        assert_eq!(ba.get(1, 0), &rat(1));
        assert_eq!(ba.get(2, 0), &ratio(3, 2));
    }

    #[test]
    fn kernel_and_cokernel_of_rank_one_map() {
        let j = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let k = kernel_basis(&j, 1e-8);
        assert_eq!(k.len(), 1);
        assert!((k[0][0].abs() - 1.0).abs() < 1e-12);
        let c = cokernel_basis(&j, 1e-8);
        assert_eq!(c.len(), 1);
        assert!((c[0][0].abs() - 1.0).abs() < 1e-12);
        assert_eq!(numerical_rank(&j, 1e-8), 1);
    }

    #[test]
    fn wide_and_empty_shapes() {
        let j = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        assert_eq!(kernel_basis(&j, 1e-8).len(), 2);
        assert_eq!(cokernel_basis(&j, 1e-8).len(), 0);
        let e = DMatrix::<f64>::zeros(0, 2);
        assert_eq!(kernel_basis(&e, 1e-8).len(), 2);
        assert_eq!(sigma_min(&DMatrix::<f64>::zeros(0, 0)), f64::INFINITY);
        assert_eq!(det_sign(&DMatrix::<f64>::zeros(0, 0)), 1);
    }
}

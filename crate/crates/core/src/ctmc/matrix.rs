//! Small dense square matrices (at most 4x4) on the stack.

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

pub const MAX_STATES: usize = 4;

#[derive(Clone, Copy, PartialEq)]
pub struct SquareMat {
    n: usize,
    a: [[f64; MAX_STATES]; MAX_STATES],
}

impl SquareMat {
    pub fn zeros(n: usize) -> Self {
        assert!(n <= MAX_STATES, "at most {MAX_STATES} states supported");
        SquareMat { n, a: [[0.0; MAX_STATES]; MAX_STATES] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i][i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let mut m = Self::zeros(rows.len());
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), rows.len(), "matrix must be square");
            m.a[i][..r.len()].copy_from_slice(r);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.a[i][..self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i][j] *= s;
            }
        }
        m
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut m = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i][j] += other.a[i][j];
            }
        }
        m
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        (0..self.n).flat_map(|i| self.row(i).iter()).fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut d = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                d = d.max((self.a[i][j] - other.a[i][j]).abs());
            }
        }
        d
    }

    /// `self * v` for a column vector.
    pub fn mul_vec(&self, v: &[f64]) -> [f64; MAX_STATES] {
        let mut out = [0.0; MAX_STATES];
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            *o = self.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
        }
        out
    }

    /// `v^T * self` for a row vector.
    pub fn vec_mul(&self, v: &[f64]) -> [f64; MAX_STATES] {
        let mut out = [0.0; MAX_STATES];
        for (i, &vi) in v.iter().enumerate().take(self.n) {
            for (j, o) in out.iter_mut().enumerate().take(self.n) {
                *o += vi * self.a[i][j];
            }
        }
        out
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Option<Self> {
        let n = self.n;
        let mut a = *self;
        let mut inv = Self::identity(n);
        let scale = self.max_abs();
        if scale == 0.0 {
            return None;
        }
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a.a[i][c].abs().total_cmp(&a.a[j][c].abs()))?;
            if a.a[p][c].abs() <= 1e-14 * scale {
                return None;
            }
            a.a.swap(c, p);
            inv.a.swap(c, p);
            let d = a.a[c][c];
            for j in 0..n {
                a.a[c][j] /= d;
                inv.a[c][j] /= d;
            }
            for r in 0..n {
                if r != c {
                    let f = a.a[r][c];
                    if f != 0.0 {
                        for j in 0..n {
                            a.a[r][j] -= f * a.a[c][j];
                            inv.a[r][j] -= f * inv.a[c][j];
                        }
                    }
                }
            }
        }
        Some(inv)
    }

    /// Sets negative entries to zero and rescales each row to sum to one.
    pub fn clamp_stochastic(&mut self) {
        for i in 0..self.n {
            let row = &mut self.a[i][..self.n];
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = x.max(0.0);
                s += *x;
            }
            if s > 0.0 && s != 1.0 {
                let r = 1.0 / s;
                for x in row.iter_mut() {
                    *x *= r;
                }
            }
        }
    }

    /// `reach[i][j]` is true when a chain with this rate matrix can get
    /// from `i` to `j` (every state reaches itself).
    pub fn reachability(&self) -> [[bool; MAX_STATES]; MAX_STATES] {
        let n = self.n;
        let mut reach = [[false; MAX_STATES]; MAX_STATES];
        for (i, row) in reach.iter_mut().enumerate().take(n) {
            for (j, r) in row.iter_mut().enumerate().take(n) {
                *r = i == j || self.a[i][j] > 0.0;
            }
        }
        for k in 0..n {
            for i in 0..n {
                if reach[i][k] {
                    for j in 0..n {
                        reach[i][j] |= reach[k][j];
                    }
                }
            }
        }
        reach
    }

    /// Zeroes the entries that `reach` marks unreachable. Removes round-off
    /// mass from transitions a rate matrix cannot produce.
    pub fn mask_unreachable(&mut self, reach: &[[bool; MAX_STATES]; MAX_STATES]) {
        for i in 0..self.n {
            for j in 0..self.n {
                if !reach[i][j] {
                    self.a[i][j] = 0.0;
                }
            }
        }
    }
}

impl Index<(usize, usize)> for SquareMat {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.n && j < self.n);
        &self.a[i][j]
    }
}

impl IndexMut<(usize, usize)> for SquareMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.n && j < self.n);
        &mut self.a[i][j]
    }
}

impl Mul for &SquareMat {
    type Output = SquareMat;

    fn mul(self, rhs: &SquareMat) -> SquareMat {
        debug_assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut m = SquareMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let x = self.a[i][k];
                if x != 0.0 {
                    for j in 0..n {
                        m.a[i][j] += x * rhs.a[k][j];
                    }
                }
            }
        }
        m
    }
}

impl Mul for SquareMat {
    type Output = SquareMat;

    fn mul(self, rhs: SquareMat) -> SquareMat {
        &self * &rhs
    }
}

impl fmt::Debug for SquareMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries((0..self.n).map(|i| self.row(i))).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_round_trip() {
        let m = SquareMat::from_rows(&[
            vec![0.0, 2.0, 1.0],
            vec![1.0, -1.0, 0.5],
            vec![3.0, 0.0, 4.0],
        ]);
        let inv = m.inverse().unwrap();
        assert!((&m * &inv).max_abs_diff(&SquareMat::identity(3)) < 1e-14);
    }

    #[test]
    fn singular_has_no_inverse() {
        let m = SquareMat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(m.inverse().is_none());
    }

    #[test]
    fn clamp_renormalizes() {
        let mut m = SquareMat::from_rows(&[vec![1.0 + 1e-13, -1e-13], vec![0.25, 0.75]]);
        m.clamp_stochastic();
        assert_eq!(m[(0, 1)], 0.0);
        assert_eq!(m[(0, 0)], 1.0);
    }
}

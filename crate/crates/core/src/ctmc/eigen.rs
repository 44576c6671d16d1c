//! Spectral decomposition of small rate matrices.
//!
//! Eigenvalues of triangular matrices are read off the diagonal. Otherwise
//! they are the roots of the characteristic polynomial, with the zero root
//! of a conservative rate matrix factored out first. A complex conjugate
//! pair `a +- ib` with eigenvector `u + iw` contributes the columns `u, w`
//! to the basis and the real block `[[a, b], [-b, a]]`.

use num_complex::Complex64 as C64;

use super::matrix::{SquareMat, MAX_STATES};
use crate::error::{Error, Result};

/// Eigenvalues closer than this (relative to the spectral scale) are
/// treated as one repeated eigenvalue.
pub const GAP_TOL: f64 = 1e-8;
/// Bases with a larger infinity-norm condition number are rejected.
pub const MAX_CONDITION: f64 = 1e5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Column {
    Real(f64),
    /// First column of a complex pair `alpha +- i beta`, `beta > 0`.
    PairRe { alpha: f64, beta: f64 },
    /// Second column of the pair started in the previous column.
    PairIm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    columns: Vec<Column>,
    basis: SquareMat,
    basis_inv: SquareMat,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn basis(&self) -> &SquareMat {
        &self.basis
    }

    pub fn basis_inv(&self) -> &SquareMat {
        &self.basis_inv
    }

    pub fn has_complex_pair(&self) -> bool {
        self.columns.iter().any(|c| matches!(c, Column::PairRe { .. }))
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.dim());
        for c in &self.columns {
            match *c {
                Column::Real(l) => out.push(C64::new(l, 0.0)),
                Column::PairRe { alpha, beta } => {
                    out.push(C64::new(alpha, beta));
                    out.push(C64::new(alpha, -beta));
                }
                Column::PairIm => {}
            }
        }
        out
    }

    /// The real canonical (block diagonal) matrix `V`.
    pub fn canonical(&self) -> SquareMat {
        self.block_map(|l| l, |a, b| [[a, b], [-b, a]])
    }

    /// `exp(dt V)`.
    pub fn canonical_exp(&self, dt: f64) -> SquareMat {
        self.block_map(
            |l| (l * dt).exp(),
            |a, b| {
                let r = (a * dt).exp();
                let (s, c) = (b * dt).sin_cos();
                [[r * c, r * s], [-r * s, r * c]]
            },
        )
    }

    fn block_map(&self, real: impl Fn(f64) -> f64, pair: impl Fn(f64, f64) -> [[f64; 2]; 2]) -> SquareMat {
        let mut m = SquareMat::zeros(self.dim());
        for (k, c) in self.columns.iter().enumerate() {
            match *c {
                Column::Real(l) => m[(k, k)] = real(l),
                Column::PairRe { alpha, beta } => {
                    let b = pair(alpha, beta);
                    m[(k, k)] = b[0][0];
                    m[(k, k + 1)] = b[0][1];
                    m[(k + 1, k)] = b[1][0];
                    m[(k + 1, k + 1)] = b[1][1];
                }
                Column::PairIm => {}
            }
        }
        m
    }

    /// `T V T^-1`.
    pub fn reconstruct(&self) -> SquareMat {
        &(&self.basis * &self.canonical()) * &self.basis_inv
    }

    /// `T exp(dt V) T^-1`, before any clamping.
    pub fn exp_raw(&self, dt: f64) -> SquareMat {
        if self.has_complex_pair() {
            return &(&self.basis * &self.canonical_exp(dt)) * &self.basis_inv;
        }
        // Diagonal case: sum of rank-one terms, no intermediate products.
        let n = self.dim();
        let mut e = [0.0; MAX_STATES];
        for (k, c) in self.columns.iter().enumerate() {
            if let Column::Real(l) = *c {
                e[k] = if l == 0.0 { 1.0 } else { (l * dt).exp() };
            }
        }
        let mut m = SquareMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let tik = self.basis[(i, k)] * e[k];
                if tik != 0.0 {
                    for j in 0..n {
                        m[(i, j)] += tik * self.basis_inv[(k, j)];
                    }
                }
            }
        }
        m
    }
}

/// Decomposes `a`, or reports that the series fallback is needed.
pub fn eigen_decompose(a: &SquareMat) -> Result<EigenSystem> {
    let n = a.dim();
    let scale = a.max_abs();
    if scale == 0.0 {
        return Ok(EigenSystem {
            columns: vec![Column::Real(0.0); n],
            basis: SquareMat::identity(n),
            basis_inv: SquareMat::identity(n),
        });
    }
    let mut values = eigenvalues(a);
    let spread = values.iter().map(|v| v.norm()).fold(scale, f64::max);
    let tol = GAP_TOL * spread;
    for v in values.iter_mut() {
        if v.im.abs() <= tol {
            v.im = 0.0;
        }
    }
    values.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));

    let mut columns = Vec::with_capacity(n);
    let mut vecs: Vec<[f64; MAX_STATES]> = Vec::with_capacity(n);
    let mut k = 0;
    while k < n {
        let v = values[k];
        if v.im == 0.0 {
            let mut m = 1;
            while k + m < n && values[k + m].im == 0.0 && (values[k + m].re - v.re).abs() <= tol {
                m += 1;
            }
            let lambda = values[k..k + m].iter().map(|x| x.re).sum::<f64>() / m as f64;
            let basis = null_space(a, C64::new(lambda, 0.0), m, tol).ok_or(Error::NearDefective)?;
            for b in basis {
                let mut col = [0.0; MAX_STATES];
                for i in 0..n {
                    col[i] = b[i].re;
                }
                columns.push(Column::Real(lambda));
                vecs.push(col);
            }
            k += m;
        } else {
            // Conjugates sort adjacently: (a, -b) then (a, b).
            let beta = v.im.abs();
            if beta <= tol || k + 1 >= n {
                return Err(Error::NearDefective);
            }
            let lambda = C64::new(0.5 * (v.re + values[k + 1].re), beta);
            let b = null_space(a, lambda, 1, tol).ok_or(Error::NearDefective)?;
            let (mut u, mut w) = ([0.0; MAX_STATES], [0.0; MAX_STATES]);
            for i in 0..n {
                u[i] = b[0][i].re;
                w[i] = b[0][i].im;
            }
            columns.push(Column::PairRe { alpha: lambda.re, beta });
            columns.push(Column::PairIm);
            vecs.push(u);
            vecs.push(w);
            k += 2;
        }
    }

    let mut basis = SquareMat::zeros(n);
    for (j, col) in vecs.iter().enumerate() {
        for i in 0..n {
            basis[(i, j)] = col[i];
        }
    }
    let basis_inv = basis.inverse().ok_or(Error::NearDefective)?;
    if basis.norm_inf() * basis_inv.norm_inf() > MAX_CONDITION {
        return Err(Error::NearDefective);
    }
    let es = EigenSystem { columns, basis, basis_inv };
    if es.reconstruct().max_abs_diff(a) > 1e-10 * scale.max(1.0) {
        return Err(Error::NearDefective);
    }
    Ok(es)
}

fn is_triangular(a: &SquareMat) -> bool {
    let n = a.dim();
    let upper = (0..n).all(|i| (0..i).all(|j| a[(i, j)] == 0.0));
    let lower = (0..n).all(|i| (i + 1..n).all(|j| a[(i, j)] == 0.0));
    upper || lower
}

/// All eigenvalues of `a`, with multiplicity.
pub fn eigenvalues(a: &SquareMat) -> Vec<C64> {
    let n = a.dim();
    if is_triangular(a) {
        return (0..n).map(|i| C64::new(a[(i, i)], 0.0)).collect();
    }
    // Faddeev-LeVerrier: coefficients c[0..=n] of det(x I - A), c[n] = 1.
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut m = SquareMat::zeros(n);
    for k in 1..=n {
        let mut next = a * &m;
        for i in 0..n {
            next[(i, i)] += c[n - k + 1];
        }
        m = next;
        let am = a * &m;
        let tr: f64 = (0..n).map(|i| am[(i, i)]).sum();
        c[n - k] = -tr / k as f64;
    }
    let mut roots = Vec::with_capacity(n);
    let conservative = (0..n).all(|i| a.row(i).iter().sum::<f64>().abs() <= 1e-12 * a.max_abs());
    let mut coeffs = c;
    if conservative {
        roots.push(C64::new(0.0, 0.0));
        coeffs.remove(0);
    }
    roots.extend(monic_roots(&coeffs));
    roots
}

/// Roots of the monic polynomial with ascending coefficients `c`.
fn monic_roots(c: &[f64]) -> Vec<C64> {
    match c.len() - 1 {
        0 => vec![],
        1 => vec![C64::new(-c[0], 0.0)],
        2 => quadratic(c[1], c[0]).to_vec(),
        3 => {
            let r = cubic_real_root(c[2], c[1], c[0]);
            let b = c[2] + r;
            let q = c[1] + r * b;
            let [x, y] = quadratic(b, q);
            vec![C64::new(r, 0.0), x, y]
        }
        d => panic!("degree {d} characteristic polynomial not supported"),
    }
}

/// Roots of `x^2 + b x + c`.
fn quadratic(b: f64, c: f64) -> [C64; 2] {
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        if q == 0.0 {
            [C64::new(0.0, 0.0); 2]
        } else {
            [C64::new(q, 0.0), C64::new(c / q, 0.0)]
        }
    } else {
        let im = 0.5 * (-disc).sqrt();
        [C64::new(-0.5 * b, im), C64::new(-0.5 * b, -im)]
    }
}

/// One real root of `x^3 + a x^2 + b x + c` by bisection then Newton.
fn cubic_real_root(a: f64, b: f64, c: f64) -> f64 {
    let p = |x: f64| ((x + a) * x + b) * x + c;
    let dp = |x: f64| (3.0 * x + 2.0 * a) * x + b;
    let bound = 1.0 + a.abs().max(b.abs()).max(c.abs());
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * bound {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..3 {
        let d = dp(x);
        if d == 0.0 {
            break;
        }
        let step = p(x) / d;
        if !step.is_finite() {
            break;
        }
        x -= step;
    }
    x
}

/// `m` independent vectors spanning the null space of `a - lambda I`, or
/// `None` if its rank exceeds `n - m`.
fn null_space(a: &SquareMat, lambda: C64, m: usize, tol: f64) -> Option<Vec<[C64; MAX_STATES]>> {
    let n = a.dim();
    let mut u = [[C64::new(0.0, 0.0); MAX_STATES]; MAX_STATES];
    for i in 0..n {
        for j in 0..n {
            u[i][j] = C64::new(a[(i, j)], 0.0);
        }
        u[i][i] -= lambda;
    }
    let mut perm: [usize; MAX_STATES] = [0, 1, 2, 3];
    let rank = n - m;
    for s in 0..rank {
        // Complete pivoting.
        let (mut pr, mut pc, mut best) = (s, s, -1.0);
        for (i, row) in u.iter().enumerate().take(n).skip(s) {
            for (j, x) in row.iter().enumerate().take(n).skip(s) {
                if x.norm() > best {
                    best = x.norm();
                    pr = i;
                    pc = j;
                }
            }
        }
        if best <= 0.0 {
            return None;
        }
        u.swap(s, pr);
        for row in u.iter_mut() {
            row.swap(s, pc);
        }
        perm.swap(s, pc);
        for i in s + 1..n {
            let f = u[i][s] / u[s][s];
            for j in s..n {
                let d = f * u[s][j];
                u[i][j] -= d;
            }
        }
    }
    for row in u.iter().take(n).skip(rank) {
        if row.iter().take(n).skip(rank).any(|x| x.norm() > tol) {
            return None;
        }
    }
    let mut out = Vec::with_capacity(m);
    for f in rank..n {
        let mut y = [C64::new(0.0, 0.0); MAX_STATES];
        y[f] = C64::new(1.0, 0.0);
        for i in (0..rank).rev() {
            let mut s = C64::new(0.0, 0.0);
            for j in i + 1..n {
                s += u[i][j] * y[j];
            }
            y[i] = -s / u[i][i];
        }
        let mut x = [C64::new(0.0, 0.0); MAX_STATES];
        for k in 0..n {
            x[perm[k]] = y[k];
        }
        // Scale so the largest component is exactly 1.
        let big = (0..n).max_by(|&i, &j| x[i].norm().total_cmp(&x[j].norm()))?;
        let d = x[big];
        for v in x.iter_mut().take(n) {
            *v /= d;
        }
        out.push(x);
    }
    Some(out)
}

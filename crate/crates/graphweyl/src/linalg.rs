//! Dense and sparse complex matrix helpers on top of `faer`.

use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};
use crate::rng::{complex_gaussian, derived_rng};
use crate::C64;

/// Row-compressed complex matrix (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseComplex {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<C64>,
}

impl SparseComplex {
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, C64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut r in rows.iter().cloned() {
            r.sort_by_key(|e| e.0);
            for (c, v) in r {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        SparseComplex { nrows: rows.len(), ncols, row_ptr, cols, vals }
    }

    /// Exact zeros are dropped.
    pub fn from_dense(m: MatRef<'_, C64>) -> Self {
        let rows = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .filter_map(|j| {
                        let v = m[(i, j)];
                        (v != C64::new(0.0, 0.0)).then_some((j, v))
                    })
                    .collect()
            })
            .collect();
        Self::from_rows(m.ncols(), rows)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows(n, (0..n).map(|i| vec![(i, C64::new(1.0, 0.0))]).collect())
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.row(i).find(|e| e.0 == j).map(|e| e.1).unwrap_or_default()
    }

    pub fn to_dense(&self) -> Mat<C64> {
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// `y = A^* x`.
    pub fn matvec_adjoint(&self, x: &[C64], y: &mut [C64]) {
        y.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for (i, xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                y[j] += v.conj() * xi;
            }
        }
    }

    pub fn adjoint(&self) -> Self {
        let mut rows = vec![Vec::new(); self.ncols];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                rows[j].push((i, v.conj()));
            }
        }
        Self::from_rows(self.nrows, rows)
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.ncols];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                rows[j].push((i, v));
            }
        }
        Self::from_rows(self.nrows, rows)
    }

    /// Sparse product; entries with modulus `<= drop_tol` are removed.
    pub fn mul(&self, other: &Self, drop_tol: f64) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut acc = vec![C64::new(0.0, 0.0); other.ncols];
        let mut touched = vec![false; other.ncols];
        let mut list = Vec::new();
        let mut rows = Vec::with_capacity(self.nrows);
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if !touched[j] {
                        touched[j] = true;
                        list.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            let mut r = Vec::with_capacity(list.len());
            for &j in &list {
                if acc[j].norm() > drop_tol {
                    r.push((j, acc[j]));
                }
                acc[j] = C64::new(0.0, 0.0);
                touched[j] = false;
            }
            list.clear();
            rows.push(r);
        }
        Self::from_rows(other.ncols, rows)
    }

    /// `diag(d) * self * diag(e)`-style column scaling: returns `self * diag(d)`.
    pub fn scale_cols(&self, d: &[f64]) -> Self {
        let mut s = self.clone();
        for (c, v) in s.cols.iter().zip(s.vals.iter_mut()) {
            *v *= d[*c];
        }
        s
    }

    /// `self - diag(d)`.
    pub fn sub_diag(&self, d: &[f64]) -> Self {
        let rows = (0..self.nrows)
            .map(|i| {
                let mut r: Vec<(usize, C64)> = self.row(i).collect();
                match r.iter_mut().find(|e| e.0 == i) {
                    Some(e) => e.1 -= d[i],
                    None => r.push((i, C64::new(-d[i], 0.0))),
                }
                r
            })
            .collect();
        Self::from_rows(self.ncols, rows)
    }

    /// Dense `self * b`.
    pub fn mul_dense(&self, b: MatRef<'_, C64>) -> Mat<C64> {
        let mut out = Mat::<C64>::zeros(self.nrows, b.ncols());
        for j in 0..b.ncols() {
            let col = b.col(j);
            for i in 0..self.nrows {
                let mut s = C64::new(0.0, 0.0);
                for (k, v) in self.row(i) {
                    s += v * col[k];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

pub fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

pub fn max_abs_diff(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

/// `||A^* A - I||_max`.
pub fn unitarity_defect(a: MatRef<'_, C64>) -> f64 {
    let g = a.adjoint() * a;
    let n = g.nrows();
    let mut m = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            m = m.max((g[(i, j)] - id).norm());
        }
    }
    m
}

pub fn identity(n: usize) -> Mat<C64> {
    Mat::from_fn(n, n, |i, j| if i == j { C64::new(1.0, 0.0) } else { zero() })
}

/// Dense power by repeated squaring.
pub fn mat_pow(a: MatRef<'_, C64>, mut k: usize) -> Mat<C64> {
    let mut result = identity(a.nrows());
    let mut base = a.to_owned();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Result of an operator-norm computation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct NormEstimate {
    pub value: f64,
    /// Number of power iterations, 0 if computed exactly by blocks.
    pub iterations: usize,
    pub converged: bool,
}

/// Spectral norm by power iteration on `A^* A` given `A` and `A^*` actions.
/// Stops when the relative change of the estimate drops below `tol`.
pub fn power_iteration_norm<F, G>(n: usize, apply: F, apply_adj: G, tol: f64, max_iter: usize, seed: u64) -> NormEstimate
where
    F: Fn(&[C64], &mut [C64]),
    G: Fn(&[C64], &mut [C64]),
{
    let mut rng = derived_rng(seed, 0x6e6f726d);
    let mut v: Vec<C64> = (0..n).map(|_| complex_gaussian(&mut rng)).collect();
    let nv = vec_norm(&v);
    v.iter_mut().for_each(|z| *z /= nv);
    let mut w = vec![zero(); n];
    let mut z = vec![zero(); n];
    let mut est = 0.0f64;
    for it in 1..=max_iter {
        apply(&v, &mut w);
        apply_adj(&w, &mut z);
        let nz = vec_norm(&z);
        if nz == 0.0 {
            return NormEstimate { value: 0.0, iterations: it, converged: true };
        }
        let new = nz.sqrt();
        z.iter().zip(v.iter_mut()).for_each(|(a, b)| *b = a / nz);
        if (new - est).abs() <= tol * new {
            return NormEstimate { value: new, iterations: it, converged: true };
        }
        est = new;
    }
    NormEstimate { value: est, iterations: max_iter, converged: false }
}

/// Largest singular value of a small dense matrix, from the Hermitian
/// eigenproblem of `A^* A`.
pub fn dense_norm(a: MatRef<'_, C64>) -> Result<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0.0);
    }
    let g = a.adjoint() * a;
    let eig = g
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::EigensolverFailure(format!("{e:?}")))?;
    let s = eig.S().column_vector();
    let top = s[s.nrows() - 1].re.max(0.0);
    Ok(top.sqrt())
}

/// Spectral norm of a sparse matrix. When the support graph splits into
/// connected blocks of size at most `block_limit` the norm is the exact
/// maximum over blocks; otherwise power iteration is used.
pub fn sparse_norm(a: &SparseComplex, block_limit: usize, tol: f64, max_iter: usize) -> Result<NormEstimate> {
    let n = a.nrows.max(a.ncols);
    if a.nnz() == 0 {
        return Ok(NormEstimate { value: 0.0, iterations: 0, converged: true });
    }
    // Union rows and columns that share an entry (bipartite components).
    let mut uf = UnionFind::new(a.nrows + a.ncols);
    for i in 0..a.nrows {
        for (j, _) in a.row(i) {
            uf.union(i, a.nrows + j);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, (Vec<usize>, Vec<usize>)> = Default::default();
    for i in 0..a.nrows {
        groups.entry(uf.find(i)).or_default().0.push(i);
    }
    for j in 0..a.ncols {
        groups.entry(uf.find(a.nrows + j)).or_default().1.push(j);
    }
    let largest = groups.values().map(|(r, c)| r.len().max(c.len())).max().unwrap_or(0);
    if largest <= block_limit {
        let mut best = 0.0f64;
        let mut col_pos = vec![usize::MAX; a.ncols];
        for (rows, cols) in groups.values() {
            if rows.is_empty() || cols.is_empty() {
                continue;
            }
            for (p, &c) in cols.iter().enumerate() {
                col_pos[c] = p;
            }
            let mut blk = Mat::<C64>::zeros(rows.len(), cols.len());
            for (p, &r) in rows.iter().enumerate() {
                for (c, v) in a.row(r) {
                    blk[(p, col_pos[c])] = v;
                }
            }
            best = best.max(dense_norm(blk.as_ref())?);
        }
        return Ok(NormEstimate { value: best, iterations: 0, converged: true });
    }
    let at = a.adjoint();
    Ok(power_iteration_norm(
        n,
        |x, y| a.matvec(x, y),
        |x, y| at.matvec(x, y),
        tol,
        max_iter,
        a.nnz() as u64,
    ))
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

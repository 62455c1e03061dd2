//! Markov matrices `P_n` of admissible maps and their powers.
//!
//! `(P_n)_{xy} = 1/|S'|` on `E_x` when `S(E_x)` meets `E_y`. Weights are
//! exact rationals. Storage is 0-based; the coordinate-facing operations
//! (`bad_coordinates`, `unique_path`, CSV export) use 1-based cells.

use std::collections::BTreeMap;
use std::io::Write;

use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interval_map::{floor_log2, PiecewiseLinearMap};
use crate::Q;

/// Sparse nonnegative matrix with sorted rows of `(col, weight)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowStochasticSparse {
    n: usize,
    rows: Vec<Vec<(usize, Q)>>,
}

impl RowStochasticSparse {
    /// Rows must be sorted by column with positive weights summing to one.
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, Q)>>) -> Result<Self> {
        if rows.len() != n {
            return Err(Error::DimensionMismatch(rows.len(), n));
        }
        for (i, r) in rows.iter().enumerate() {
            let s: Q = r.iter().map(|e| e.1).sum();
            if !s.is_one() || r.iter().any(|e| e.1 <= Q::zero() || e.0 >= n) {
                return Err(Error::NotBistochastic(format!("row {} sums to {s}", i + 1)));
            }
            if r.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::InvalidArgument(format!("row {} not strictly sorted", i + 1)));
            }
        }
        Ok(RowStochasticSparse { n, rows })
    }

    pub fn identity(n: usize) -> Self {
        RowStochasticSparse { n, rows: (0..n).map(|i| vec![(i, Q::one())]).collect() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Row `i` (0-based).
    pub fn row(&self, i: usize) -> &[(usize, Q)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<(usize, Q)>] {
        &self.rows
    }

    /// Entry at 0-based `(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> Q {
        self.rows[i]
            .binary_search_by_key(&j, |e| e.0)
            .map(|k| self.rows[i][k].1)
            .unwrap_or_else(|_| Q::zero())
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn diag_nnz(&self) -> usize {
        (0..self.n).filter(|&i| !self.get(i, i).is_zero()).count()
    }

    pub fn column_sums(&self) -> Vec<Q> {
        let mut s = vec![Q::zero(); self.n];
        for r in &self.rows {
            for &(j, w) in r {
                s[j] += w;
            }
        }
        s
    }

    pub fn is_bistochastic(&self) -> bool {
        self.column_sums().iter().all(One::is_one)
    }

    /// Exact sparse product.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut acc: BTreeMap<usize, Q> = BTreeMap::new();
                for &(k, a) in r {
                    for &(j, b) in &other.rows[k] {
                        *acc.entry(j).or_insert_with(Q::zero) += a * b;
                    }
                }
                acc.into_iter().collect()
            })
            .collect();
        RowStochasticSparse { n: self.n, rows }
    }

    pub fn to_f64_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, w) in r {
                d[i][j] = crate::interval_map::q_to_f64(w);
            }
        }
        d
    }

    /// Coordinate-list CSV `row,col,num,den` with 1-based indices.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "row,col,num,den")?;
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, q) in r {
                writeln!(w, "{},{},{},{}", i + 1, j + 1, q.numer(), q.denom())?;
            }
        }
        Ok(())
    }
}

/// `P_n` for the map.
pub fn build_markov(map: &PiecewiseLinearMap, n: usize) -> Result<RowStochasticSparse> {
    if n == 0 || n % map.m0() != 0 {
        return Err(Error::NotMultipleOfM0 { n, m0: map.m0() });
    }
    let nn = n as i64;
    let rows = (1..=n)
        .map(|x| {
            let (lo, hi, slope) = map.cell_image(n, x);
            let a = (lo * nn).to_integer() as usize;
            let b = (hi * nn).to_integer() as usize;
            let w = Q::new(1, slope.abs());
            (a..b).map(|y| (y, w)).collect()
        })
        .collect();
    let p = RowStochasticSparse::from_rows(n, rows)?;
    if let Some((j, s)) = p.column_sums().iter().enumerate().find(|(_, s)| !s.is_one()) {
        return Err(Error::NotBistochastic(format!("column {} sums to {s}", j + 1)));
    }
    Ok(p)
}

/// `P^ell` by repeated exact multiplication, valid for any `ell`.
pub fn power_by_multiplication(p: &RowStochasticSparse, ell: usize) -> RowStochasticSparse {
    let mut acc = RowStochasticSparse::identity(p.n());
    for _ in 0..ell {
        acc = acc.mul(p);
    }
    acc
}

/// `P^ell` from the images `S^ell(E_x)`. Requires `S^ell` affine on every
/// cell, which holds up to `K~(n)+1`.
pub fn power_closed_form(map: &PiecewiseLinearMap, n: usize, ell: usize) -> Option<RowStochasticSparse> {
    let nn = n as i64;
    let mut rows = Vec::with_capacity(n);
    for x in 1..=n {
        let a = Q::new(x as i64 - 1, nn);
        let b = Q::new(x as i64, nn);
        let (lo, hi, slope) = map.iterate_interval(a, b, ell)?;
        let w = Q::new(1, slope.abs());
        let (c0, c1) = ((lo * nn).floor().to_integer() as usize, (hi * nn).ceil().to_integer() as usize);
        rows.push((c0..c1).map(|y| (y, w)).collect());
    }
    RowStochasticSparse::from_rows(n, rows).ok()
}

/// `P^ell` for `1 <= ell <= K~(n)+1`, computed by the closed form and by
/// repeated multiplication; the two must agree exactly.
pub fn markov_power(p: &RowStochasticSparse, map: &PiecewiseLinearMap, ell: usize) -> Result<RowStochasticSparse> {
    let n = p.n();
    let limit = map.k_tilde(n)? + 1;
    if ell > limit {
        return Err(Error::PowerBeyondEhrenfest { ell, limit });
    }
    if ell == 0 {
        return Ok(RowStochasticSparse::identity(n));
    }
    let mult = power_by_multiplication(p, ell);
    let closed = power_closed_form(map, n, ell)
        .ok_or_else(|| Error::VerificationFailed(format!("S^{ell} is not affine on every cell")))?;
    if closed != mult {
        return Err(Error::VerificationFailed(format!("closed form and product differ at ell = {ell}")));
    }
    Ok(mult)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SupportReport {
    pub n: usize,
    pub ell: usize,
    pub diag_nonzeros: usize,
    pub total_nonzeros: usize,
    pub diag_bound: u64,
    pub total_bound: u64,
    /// Exact total asserted for the doubling map, `n 2^ell`.
    pub exact_total: Option<u64>,
}

/// Count nonzeros of `P^ell` and check the support lemmas.
pub fn support_report(map: &PiecewiseLinearMap, n: usize, ell: usize) -> Result<SupportReport> {
    let p = build_markov(map, n)?;
    let limit = map.exact_horizon(n)?;
    if ell > limit {
        return Err(Error::PowerBeyondEhrenfest { ell, limit });
    }
    let pl = power_by_multiplication(&p, ell);
    support_report_of(map, &pl, ell)
}

/// Support report for an already computed `P^ell`.
pub fn support_report_of(map: &PiecewiseLinearMap, pl: &RowStochasticSparse, ell: usize) -> Result<SupportReport> {
    let n = pl.n();
    let c = map.constants();
    let (m0, l0, smax) = (c.m0 as u64, c.l0 as u64, c.s_max as u64);
    let diag_bound = if ell == 0 { n as u64 } else { 2 * m0 * l0.pow(ell as u32 - 1) };
    let total_bound = n as u64 * smax.pow(ell as u32);
    let exact_total = map.is_doubling().then(|| n as u64 * 2u64.pow(ell as u32));
    let rep = SupportReport {
        n,
        ell,
        diag_nonzeros: pl.diag_nnz(),
        total_nonzeros: pl.nnz(),
        diag_bound,
        total_bound,
        exact_total,
    };
    if rep.diag_nonzeros as u64 > rep.diag_bound {
        return Err(Error::BoundViolated(format!("diagonal count {} > {}", rep.diag_nonzeros, rep.diag_bound)));
    }
    if rep.total_nonzeros as u64 > rep.total_bound {
        return Err(Error::BoundViolated(format!("total count {} > {}", rep.total_nonzeros, rep.total_bound)));
    }
    if let Some(t) = exact_total {
        if rep.total_nonzeros as u64 != t {
            return Err(Error::BoundViolated(format!("total count {} != n 2^ell = {t}", rep.total_nonzeros)));
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BadCoordinateSet {
    pub n: usize,
    pub r: usize,
    /// 1-based cells with a loop of length at most `r`.
    pub members: Vec<usize>,
    pub bound: u64,
}

impl BadCoordinateSet {
    pub fn contains(&self, x: usize) -> bool {
        self.members.binary_search(&x).is_ok()
    }

    /// Complement `G_n`, 1-based.
    pub fn good(&self) -> Vec<usize> {
        (1..=self.n).filter(|&x| !self.contains(x)).collect()
    }
}

/// Largest admissible cutoff: `K~(n)` in general, `floor(log2 n)` for doubling.
pub fn max_cutoff(map: &PiecewiseLinearMap, n: usize) -> Result<usize> {
    let kt = map.k_tilde(n)?;
    Ok(if map.is_doubling() { kt.max(floor_log2(n)) } else { kt })
}

/// Cells `x` with `(P^ell)_{xx} != 0` for some `1 <= ell <= r`.
pub fn bad_coordinates(map: &PiecewiseLinearMap, n: usize, r: usize) -> Result<BadCoordinateSet> {
    let limit = max_cutoff(map, n)?;
    if r > limit {
        return Err(Error::CutoffTooLarge { r, limit });
    }
    let p = build_markov(map, n)?;
    let mut bad = vec![false; n];
    let mut acc = RowStochasticSparse::identity(n);
    for _ in 0..r {
        acc = acc.mul(&p);
        for (i, b) in bad.iter_mut().enumerate() {
            *b |= !acc.get(i, i).is_zero();
        }
    }
    let c = map.constants();
    let (m0, l0) = (c.m0 as u64, c.l0 as u64);
    let bound = 2 * m0 * (l0.pow(r as u32) - 1) / (l0 - 1);
    let members: Vec<usize> = (0..n).filter(|&i| bad[i]).map(|i| i + 1).collect();
    if members.len() as u64 > bound {
        return Err(Error::BoundViolated(format!("#B = {} > {bound}", members.len())));
    }
    Ok(BadCoordinateSet { n, r, members, bound })
}

/// The unique intermediate cells `tau_1..tau_{ell-1}` of a positive-weight
/// path `x -> y` of length `ell` (1-based), or `None` if no path exists.
pub fn unique_path(p: &RowStochasticSparse, x: usize, y: usize, ell: usize) -> Result<Option<Vec<usize>>> {
    let n = p.n();
    if x == 0 || y == 0 || x > n || y > n {
        return Err(Error::IndexOutOfRange { index: x.max(y), len: n });
    }
    if ell == 0 {
        return Err(Error::InvalidArgument("ell must be at least 1".into()));
    }
    let mut found: Vec<Vec<usize>> = Vec::new();
    let mut stack = Vec::with_capacity(ell);
    dfs(p, x - 1, y - 1, ell, &mut stack, &mut found);
    match found.len() {
        0 => Ok(None),
        1 => Ok(Some(found.pop().unwrap())),
        _ => Err(Error::MultiplePathsFound { x, y, ell }),
    }
}

fn dfs(p: &RowStochasticSparse, cur: usize, target: usize, left: usize, stack: &mut Vec<usize>, found: &mut Vec<Vec<usize>>) {
    if found.len() > 1 {
        return;
    }
    if left == 1 {
        if !p.get(cur, target).is_zero() {
            found.push(stack.iter().map(|v| v + 1).collect());
        }
        return;
    }
    for &(next, _) in p.row(cur) {
        stack.push(next);
        dfs(p, next, target, left - 1, stack, found);
        stack.pop();
    }
}

//! Unitary quantizations `U` with `|U_xy|^2 = P_xy`.

use std::collections::HashMap;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval_map::q_to_f64;
use crate::linalg::{identity, max_abs_diff, unitarity_defect, SparseComplex, UnionFind};
use crate::markov::RowStochasticSparse;
use crate::rng::derived_rng;
use crate::{C64, Q, TAU};

/// Tolerance on `||U^*U - I||_max` accepted by `ComplexUnitary::new`.
pub const UNITARY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    DoublingOrthogonal,
    BlockDft,
    /// Block-diagonal up to permutations, blocks solved by alternating
    /// projections when they are not constant.
    BlockPhaseSearch,
    PhaseDecorated,
    RandomBinRotation,
    UserSupplied,
}

/// Dense unitary with its unitarity certificate.
#[derive(Debug, Clone)]
pub struct ComplexUnitary {
    matrix: Mat<C64>,
    provenance: Provenance,
    defect: f64,
}

impl ComplexUnitary {
    /// Wrap a matrix, checking `||U^*U - I||_max <= 1e-10`.
    pub fn new(matrix: Mat<C64>, provenance: Provenance) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch(matrix.nrows(), matrix.ncols()));
        }
        let defect = fast_unitarity_defect(matrix.as_ref());
        if !(defect <= UNITARY_TOL) {
            return Err(Error::NotUnitary(defect));
        }
        Ok(ComplexUnitary { matrix, provenance, defect })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> MatRef<'_, C64> {
        self.matrix.as_ref()
    }

    pub fn into_matrix(self) -> Mat<C64> {
        self.matrix
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// `||U^*U - I||_max` measured at construction.
    pub fn unitarity_defect(&self) -> f64 {
        self.defect
    }

    pub fn is_real(&self) -> bool {
        let m = &self.matrix;
        (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].im == 0.0))
    }

    pub fn to_sparse(&self) -> SparseComplex {
        SparseComplex::from_dense(self.matrix.as_ref())
    }

    /// Fraction of nonzero entries.
    pub fn density(&self) -> f64 {
        let n = self.n();
        let nz = (0..n).map(|j| (0..n).filter(|&i| self.matrix[(i, j)] != C64::new(0.0, 0.0)).count()).sum::<usize>();
        nz as f64 / (n * n) as f64
    }
}

/// Unitarity defect, using a sparse product when the matrix is sparse.
fn fast_unitarity_defect(m: MatRef<'_, C64>) -> f64 {
    let n = m.nrows();
    let sp = SparseComplex::from_dense(m);
    if sp.nnz() <= 64 * n {
        let g = sp.adjoint().mul(&sp, 0.0);
        let mut d = 0.0f64;
        for i in 0..n {
            let mut diag_seen = false;
            for (j, v) in g.row(i) {
                let target = if i == j {
                    diag_seen = true;
                    1.0
                } else {
                    0.0
                };
                d = d.max((v - target).norm());
            }
            if !diag_seen {
                d = d.max(1.0);
            }
        }
        d
    } else {
        unitarity_defect(m)
    }
}

/// The real orthogonal quantization of the doubling map: row `x <= n/2` is
/// `(1, -1)/sqrt 2` on columns `(2x-1, 2x)`, row `n/2 + x` is `(1, 1)/sqrt 2`
/// on the same columns.
pub fn doubling_unitary(n: usize) -> Result<ComplexUnitary> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::OddDimension(n));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let h = n / 2;
    let mut m = Mat::<C64>::zeros(n, n);
    for x in 0..h {
        m[(x, 2 * x)] = C64::new(s, 0.0);
        m[(x, 2 * x + 1)] = C64::new(-s, 0.0);
        m[(h + x, 2 * x)] = C64::new(s, 0.0);
        m[(h + x, 2 * x + 1)] = C64::new(s, 0.0);
    }
    ComplexUnitary::new(m, Provenance::DoublingOrthogonal)
}

/// `diag(e^{i phi}) U`.
pub fn apply_phases(u: &ComplexUnitary, phi: &[f64]) -> Result<ComplexUnitary> {
    let n = u.n();
    if phi.len() != n {
        return Err(Error::DimensionMismatch(phi.len(), n));
    }
    let mut m = u.matrix.clone();
    for (i, &p) in phi.iter().enumerate() {
        let z = C64::from_polar(1.0, p);
        for j in 0..n {
            m[(i, j)] *= z;
        }
    }
    Ok(ComplexUnitary { matrix: m, provenance: Provenance::PhaseDecorated, defect: u.defect })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnistochasticReport {
    /// `max_xy | |U_xy|^2 - P_xy |`
    pub max_entry_error: f64,
    /// `||U^*U - I||_max`
    pub unitarity_defect: f64,
}

pub fn verify_unistochastic(u: &ComplexUnitary, p: &RowStochasticSparse) -> Result<UnistochasticReport> {
    entry_error(u.matrix(), p).map(|e| UnistochasticReport { max_entry_error: e, unitarity_defect: u.defect })
}

/// `max_xy | |A_xy|^2 - P_xy |` for any square matrix `A`.
pub fn entry_error(a: MatRef<'_, C64>, p: &RowStochasticSparse) -> Result<f64> {
    let n = p.n();
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch(a.nrows(), n));
    }
    let mut err = 0.0f64;
    for i in 0..n {
        let row = p.row(i);
        let mut k = 0;
        for j in 0..n {
            let pij = if k < row.len() && row[k].0 == j {
                k += 1;
                q_to_f64(row[k - 1].1)
            } else {
                0.0
            };
            err = err.max((a[(i, j)].norm_sqr() - pij).abs());
        }
    }
    Ok(err)
}

/// Connected blocks of the bipartite support graph of `P`:
/// `(rows, cols)`, both sorted, 0-based.
pub fn support_blocks(p: &RowStochasticSparse) -> Vec<(Vec<usize>, Vec<usize>)> {
    let n = p.n();
    let mut uf = UnionFind::new(2 * n);
    for i in 0..n {
        for &(j, _) in p.row(i) {
            uf.union(i, n + j);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, (Vec<usize>, Vec<usize>)> = Default::default();
    for i in 0..n {
        groups.entry(uf.find(i)).or_default().0.push(i);
    }
    for j in 0..n {
        groups.entry(uf.find(n + j)).or_default().1.push(j);
    }
    groups.into_values().collect()
}

/// Quantize `P` when its support blocks are constant `J_m/m` after
/// permutation; each block becomes a normalized DFT matrix.
pub fn block_dft_quantize(p: &RowStochasticSparse) -> Result<ComplexUnitary> {
    if !p.is_bistochastic() {
        return Err(Error::NotBistochastic("block_dft_quantize needs a bistochastic matrix".into()));
    }
    let n = p.n();
    let mut m = Mat::<C64>::zeros(n, n);
    for (rows, cols) in support_blocks(p) {
        let k = rows.len();
        let w = Q::new(1, k as i64);
        let constant = cols.len() == k && rows.iter().all(|&r| p.row(r).len() == k && p.row(r).iter().all(|e| e.1 == w));
        if !constant {
            return Err(Error::NoBlockStructureFound(format!(
                "block with rows {:?}.. is not a constant {k}x{k} block",
                rows.iter().take(4).map(|r| r + 1).collect::<Vec<_>>()
            )));
        }
        let scale = 1.0 / (k as f64).sqrt();
        for (a, &r) in rows.iter().enumerate() {
            for (b, &c) in cols.iter().enumerate() {
                let ang = -TAU * ((a * b) % k) as f64 / k as f64;
                m[(r, c)] = C64::from_polar(scale, ang);
            }
        }
    }
    let u = ComplexUnitary::new(m, Provenance::BlockDft).map_err(|e| Error::VerificationFailed(e.to_string()))?;
    check_entries(&u, p)?;
    Ok(u)
}

fn check_entries(u: &ComplexUnitary, p: &RowStochasticSparse) -> Result<()> {
    let r = verify_unistochastic(u, p)?;
    if r.max_entry_error > 1e-12 || r.unitarity_defect > 1e-12 {
        return Err(Error::VerificationFailed(format!(
            "entry error {:e}, unitarity defect {:e}",
            r.max_entry_error, r.unitarity_defect
        )));
    }
    Ok(())
}

/// Settings for `block_phase_search_quantize`.
#[derive(Debug, Clone, Copy)]
pub struct PhaseSearch {
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    /// Target `max | |W|^2 - B |` on a block.
    pub tol: f64,
    /// Largest block solved numerically.
    pub max_block: usize,
}

impl Default for PhaseSearch {
    fn default() -> Self {
        PhaseSearch { seed: 0, restarts: 64, max_iter: 20_000, tol: 1e-14, max_block: 64 }
    }
}

/// Quantize `P` block by block. Constant blocks get the DFT; other blocks
/// are solved by alternating projections between the unitary group and
/// the set of matrices with moduli `sqrt(P)`. Blocks with equal patterns
/// share one solution.
pub fn block_phase_search_quantize(p: &RowStochasticSparse, opts: PhaseSearch) -> Result<ComplexUnitary> {
    if !p.is_bistochastic() {
        return Err(Error::NotBistochastic("quantization needs a bistochastic matrix".into()));
    }
    let n = p.n();
    let mut m = Mat::<C64>::zeros(n, n);
    let mut cache: HashMap<Vec<Vec<Q>>, Mat<C64>> = HashMap::new();
    for (rows, cols) in support_blocks(p) {
        let k = rows.len();
        if cols.len() != k {
            return Err(Error::NoBlockStructureFound(format!("non-square block {}x{}", k, cols.len())));
        }
        let pattern: Vec<Vec<Q>> = rows.iter().map(|&r| cols.iter().map(|&c| p.get(r, c)).collect()).collect();
        if !cache.contains_key(&pattern) {
            if k > opts.max_block {
                return Err(Error::NoBlockStructureFound(format!("block of size {k} exceeds search limit")));
            }
            let sol = solve_block(&pattern, &opts, cache.len() as u64)?;
            cache.insert(pattern.clone(), sol);
        }
        let sol = &cache[&pattern];
        for (a, &r) in rows.iter().enumerate() {
            for (b, &c) in cols.iter().enumerate() {
                m[(r, c)] = sol[(a, b)];
            }
        }
    }
    let u = ComplexUnitary::new(m, Provenance::BlockPhaseSearch).map_err(|e| Error::VerificationFailed(e.to_string()))?;
    check_entries(&u, p)?;
    Ok(u)
}

fn solve_block(pattern: &[Vec<Q>], opts: &PhaseSearch, stream: u64) -> Result<Mat<C64>> {
    let k = pattern.len();
    let w = Q::new(1, k as i64);
    if pattern.iter().all(|r| r.iter().all(|&v| v == w)) {
        return Ok(Mat::from_fn(k, k, |a, b| {
            C64::from_polar(1.0 / (k as f64).sqrt(), -TAU * ((a * b) % k) as f64 / k as f64)
        }));
    }
    let target: Vec<Vec<f64>> = pattern.iter().map(|r| r.iter().map(|&v| q_to_f64(v)).collect()).collect();
    let amp = Mat::from_fn(k, k, |a, b| target[a][b].sqrt());
    let mut rng = derived_rng(opts.seed, 0x7068_6173_6500 + stream);
    let mut best = f64::INFINITY;
    for _ in 0..opts.restarts {
        let mut x = Mat::from_fn(k, k, |a, b| {
            let t: f64 = rand::Rng::random::<f64>(&mut rng);
            C64::from_polar(amp[(a, b)], TAU * t)
        });
        for _ in 0..opts.max_iter {
            let wm = polar_factor(x.as_ref())?;
            let err = (0..k)
                .flat_map(|a| (0..k).map(move |b| (a, b)))
                .map(|(a, b)| (wm[(a, b)].norm_sqr() - target[a][b]).abs())
                .fold(0.0f64, f64::max);
            best = best.min(err);
            if err <= opts.tol {
                // Clean up exact zeros required by the support pattern.
                let mut out = wm;
                for a in 0..k {
                    for b in 0..k {
                        if target[a][b] == 0.0 {
                            out[(a, b)] = C64::new(0.0, 0.0);
                        }
                    }
                }
                return Ok(polar_factor(out.as_ref())?);
            }
            x = Mat::from_fn(k, k, |a, b| {
                let z = wm[(a, b)];
                let ph = if z.norm() > 0.0 { z / z.norm() } else { C64::new(1.0, 0.0) };
                ph * amp[(a, b)]
            });
        }
    }
    Err(Error::NoBlockStructureFound(format!("phase search on a {k}x{k} block reached error {best:e}")))
}

/// Unitary factor of the polar decomposition.
fn polar_factor(x: MatRef<'_, C64>) -> Result<Mat<C64>> {
    let svd = x.svd().map_err(|e| Error::EigensolverFailure(format!("{e:?}")))?;
    Ok(svd.U() * svd.V().adjoint())
}

/// `U = I` of dimension `n`, tagged as user supplied.
pub fn identity_unitary(n: usize) -> ComplexUnitary {
    ComplexUnitary { matrix: identity(n), provenance: Provenance::UserSupplied, defect: 0.0 }
}

/// Maximum entrywise difference between two unitaries.
pub fn max_entry_diff(a: &ComplexUnitary, b: &ComplexUnitary) -> f64 {
    max_abs_diff(a.matrix(), b.matrix())
}

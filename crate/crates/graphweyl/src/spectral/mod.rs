//! Eigendecomposition of unitaries, arc spectral projections and pointwise
//! Weyl sums.
//!
//! A unitary is normal, so its eigenvectors can be taken from Hermitian
//! problems. The decomposition first diagonalizes `(U + U^*)/2`, whose
//! eigenvalues `cos(theta)` pair up `theta` and `-theta`, and then splits
//! each cluster with the Hermitian part of `-i Q^* U Q`. Phases are Rayleigh
//! quotients of the final vectors.

pub mod selberg;

use faer::{Mat, MatRef, Side};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interval_map::{floor_log2, PiecewiseLinearMap};
use crate::linalg::{zero, SparseComplex};
use crate::markov::{bad_coordinates, BadCoordinateSet};
use crate::quantize::{ComplexUnitary, UNITARY_TOL};
use crate::{C64, TAU};

/// Eigen-decomposition of a unitary. Columns of `vectors` are sorted by phase.
#[derive(Debug, Clone)]
pub struct SpectralData {
    phases: Vec<f64>,
    vectors: Mat<C64>,
    clusters: Vec<Vec<usize>>,
    cluster_tol: f64,
    residuals: Vec<f64>,
}

/// Knobs for `eigendecompose_with`.
#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Eigenvalue gap below which Hermitian eigenvalues are grouped before
    /// the next splitting stage.
    pub split_tol: f64,
    /// Phase tolerance for the reported clusters; `None` means
    /// `max(1e-8 * 2pi/n, 1e-12)`.
    pub cluster_tol: Option<f64>,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { split_tol: 1e-7, cluster_tol: None }
    }
}

/// Multiplies by `U` either sparsely or densely.
enum Op<'a> {
    Sparse(SparseComplex),
    Dense(MatRef<'a, C64>),
}

impl Op<'_> {
    fn apply(&self, x: MatRef<'_, C64>) -> Mat<C64> {
        match self {
            Op::Sparse(s) => s.mul_dense(x),
            Op::Dense(d) => *d * x,
        }
    }
}

pub fn eigendecompose(u: &ComplexUnitary) -> Result<SpectralData> {
    eigendecompose_with(u, EigenOptions::default())
}

pub fn eigendecompose_with(u: &ComplexUnitary, opts: EigenOptions) -> Result<SpectralData> {
    if !(u.unitarity_defect() <= UNITARY_TOL) {
        return Err(Error::NotUnitary(u.unitarity_defect()));
    }
    let n = u.n();
    let um = u.matrix();
    let sparse = u.to_sparse();
    let op = if sparse.nnz() <= 64 * n { Op::Sparse(sparse) } else { Op::Dense(um) };

    // Stage 1: H = (U + U^*)/2.
    let (values, q): (Vec<f64>, Mat<C64>) = if u.is_real() {
        let h = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (um[(i, j)].re + um[(j, i)].re));
        let eig = h.self_adjoint_eigen(Side::Lower).map_err(|e| Error::EigensolverFailure(format!("{e:?}")))?;
        let s = eig.S().column_vector();
        let vals = (0..n).map(|i| s[i]).collect();
        let uq = eig.U();
        (vals, Mat::from_fn(n, n, |i, j| C64::new(uq[(i, j)], 0.0)))
    } else {
        let h = Mat::<C64>::from_fn(n, n, |i, j| (um[(i, j)] + um[(j, i)].conj()) * 0.5);
        let eig = h.self_adjoint_eigen(Side::Lower).map_err(|e| Error::EigensolverFailure(format!("{e:?}")))?;
        let s = eig.S().column_vector();
        let vals = (0..n).map(|i| s[i].re).collect();
        (vals, eig.U().to_owned())
    };

    let mut out_vecs: Vec<(f64, Vec<C64>)> = Vec::with_capacity(n);
    for group in group_sorted(&values, opts.split_tol) {
        let block = Mat::from_fn(n, group.len(), |i, k| q[(i, group[k])]);
        resolve(&op, block, None, opts.split_tol, 0, &mut out_vecs)?;
    }
    drop(q);

    for v in &mut out_vecs {
        v.0 = normalize_phase(v.0);
    }
    out_vecs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let phases: Vec<f64> = out_vecs.iter().map(|v| v.0).collect();
    let mut vectors = Mat::<C64>::zeros(n, n);
    for (j, (_, v)) in out_vecs.into_iter().enumerate() {
        for (i, z) in v.into_iter().enumerate() {
            vectors[(i, j)] = z;
        }
    }
    let cluster_tol = opts.cluster_tol.unwrap_or((1e-8 * TAU / n as f64).max(1e-12));
    let clusters = cluster_phases(&phases, cluster_tol);
    let residuals = residuals(&op, vectors.as_ref(), &phases);
    Ok(SpectralData { phases, vectors, clusters, cluster_tol, residuals })
}

/// Split the span of `block` (orthonormal columns, invariant under `U` up to
/// rounding) into eigenvectors, appending `(phase, vector)` pairs.
fn resolve(op: &Op<'_>, block: Mat<C64>, hint: Option<f64>, tol: f64, depth: usize, out: &mut Vec<(f64, Vec<C64>)>) -> Result<()> {
    let m = block.ncols();
    let ub = op.apply(block.as_ref());
    let c = block.adjoint() * &ub;
    if m == 1 {
        out.push((c[(0, 0)].arg(), block.col(0).iter().copied().collect()));
        return Ok(());
    }
    // Degenerate block: C is already a multiple of the identity.
    let tr: C64 = (0..m).map(|i| c[(i, i)]).sum::<C64>() / m as f64;
    let spread = (0..m)
        .flat_map(|j| (0..m).map(move |i| (i, j)))
        .map(|(i, j)| (c[(i, j)] - if i == j { tr } else { zero() }).norm())
        .fold(0.0f64, f64::max);
    if spread <= 1e-12 || depth >= 4 {
        for j in 0..m {
            let v: Vec<C64> = block.col(j).iter().copied().collect();
            let ph = c[(j, j)].arg();
            out.push((ph, v));
        }
        return Ok(());
    }
    // Hermitian part of -i e^{-i phi} C: eigenvalues sin(theta - phi).
    let rot = match hint {
        Some(phi) => C64::from_polar(1.0, -phi),
        None => C64::new(1.0, 0.0),
    };
    let a = Mat::<C64>::from_fn(m, m, |i, j| {
        let x = rot * c[(i, j)];
        let y = rot * c[(j, i)];
        (x - y.conj()) * C64::new(0.0, -0.5)
    });
    let eig = a.self_adjoint_eigen(Side::Lower).map_err(|e| Error::EigensolverFailure(format!("{e:?}")))?;
    let s = eig.S().column_vector();
    let vals: Vec<f64> = (0..m).map(|i| s[i].re).collect();
    let y = eig.U();
    let groups = group_sorted(&vals, tol);
    if groups.len() == 1 {
        // No separation at this angle: rotate to the mean phase and retry.
        let phi = tr.arg();
        let next = if hint.is_some() { hint.map(|h| h + 0.5) } else { Some(phi) };
        return resolve(op, block, next, tol * 1e-2, depth + 1, out);
    }
    for g in groups {
        let yg = Mat::from_fn(m, g.len(), |i, k| y[(i, g[k])]);
        let sub = &block * &yg;
        if g.len() == 1 {
            resolve(op, sub, None, tol, depth, out)?;
        } else {
            let sub_c = sub.adjoint() * op.apply(sub.as_ref());
            let t: C64 = (0..g.len()).map(|i| sub_c[(i, i)]).sum::<C64>() / g.len() as f64;
            resolve(op, sub, Some(t.arg()), tol * 1e-2, depth + 1, out)?;
        }
    }
    Ok(())
}

/// Indices of an ascending sequence grouped where consecutive gaps are `<= tol`.
fn group_sorted(values: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        if k > 0 && values[i] - values[order[k - 1]] <= tol {
            groups.last_mut().unwrap().push(i);
        } else {
            groups.push(vec![i]);
        }
    }
    groups
}

/// Map to `[0, 2pi)`, sending values within `1e-12` of `2pi` to 0.
pub fn normalize_phase(t: f64) -> f64 {
    let p = t.rem_euclid(TAU);
    if TAU - p < 1e-12 {
        0.0
    } else {
        p
    }
}

/// Group sorted phases on the circle; consecutive gaps `<= tol` join.
pub fn cluster_phases(phases: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let n = phases.len();
    if n == 0 {
        return Vec::new();
    }
    let mut clusters: Vec<Vec<usize>> = vec![vec![0]];
    for j in 1..n {
        if phases[j] - phases[j - 1] <= tol {
            clusters.last_mut().unwrap().push(j);
        } else {
            clusters.push(vec![j]);
        }
    }
    if clusters.len() > 1 && phases[0] + TAU - phases[n - 1] <= tol {
        let first = clusters.remove(0);
        clusters.last_mut().unwrap().extend(first);
    }
    clusters
}

fn residuals(op: &Op<'_>, v: MatRef<'_, C64>, phases: &[f64]) -> Vec<f64> {
    let n = v.ncols();
    let mut res = Vec::with_capacity(n);
    let chunk = 256;
    let mut start = 0;
    while start < n {
        let w = chunk.min(n - start);
        let blk = v.subcols(start, w);
        let ub = op.apply(blk);
        for k in 0..w {
            let z = C64::from_polar(1.0, phases[start + k]);
            let r: f64 = (0..v.nrows()).map(|i| (ub[(i, k)] - z * blk[(i, k)]).norm_sqr()).sum();
            res.push(r.sqrt());
        }
        start += w;
    }
    res
}

impl SpectralData {
    /// Assemble from precomputed parts (phases sorted ascending).
    pub fn from_parts(phases: Vec<f64>, vectors: Mat<C64>, cluster_tol: f64, residuals: Vec<f64>) -> Self {
        let clusters = cluster_phases(&phases, cluster_tol);
        SpectralData { phases, vectors, clusters, cluster_tol, residuals }
    }

    pub fn n(&self) -> usize {
        self.phases.len()
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn vectors(&self) -> MatRef<'_, C64> {
        self.vectors.as_ref()
    }

    /// Index groups (into the sorted phase list) of numerically equal phases.
    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn cluster_tol(&self) -> f64 {
        self.cluster_tol
    }

    /// `||U psi_j - e^{i theta_j} psi_j||_2` per column.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// `||Psi^* Psi - I||_max`; costs one dense product.
    pub fn orthonormality_defect(&self) -> f64 {
        crate::linalg::unitarity_defect(self.vectors.as_ref())
    }

    pub fn max_multiplicity(&self) -> usize {
        self.clusters.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Replace the basis of every cluster by `basis * W` with `W` from `f`.
    pub fn rotate_clusters<F>(&mut self, mut f: F)
    where
        F: FnMut(usize) -> Mat<C64>,
    {
        let n = self.n();
        for cl in &self.clusters {
            let d = cl.len();
            if d < 2 {
                continue;
            }
            let w = f(d);
            let blk = Mat::from_fn(n, d, |i, k| self.vectors[(i, cl[k])]);
            let rotated = &blk * &w;
            for (k, &j) in cl.iter().enumerate() {
                for i in 0..n {
                    self.vectors[(i, j)] = rotated[(i, k)];
                }
            }
        }
    }
}

/// Half-open arc `[center - width/2, center + width/2)` on `R/2piZ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArcWindow {
    center: f64,
    width: f64,
}

impl ArcWindow {
    pub fn new(center: f64, width: f64) -> Result<Self> {
        if !(width > 0.0 && width <= TAU) || !center.is_finite() {
            return Err(Error::InvalidArgument(format!("arc width {width} outside (0, 2pi]")));
        }
        Ok(ArcWindow { center, width })
    }

    /// Arc `[a, b)` traversed counterclockwise.
    pub fn from_endpoints(a: f64, b: f64) -> Result<Self> {
        let w = (b - a).rem_euclid(TAU);
        let w = if w == 0.0 { TAU } else { w };
        Self::new(a + w / 2.0, w)
    }

    pub fn full() -> Self {
        ArcWindow { center: std::f64::consts::PI, width: TAU }
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn start(&self) -> f64 {
        self.center - self.width / 2.0
    }

    pub fn end(&self) -> f64 {
        self.center + self.width / 2.0
    }

    pub fn contains(&self, theta: f64) -> bool {
        if self.width >= TAU {
            return true;
        }
        (theta - self.start()).rem_euclid(TAU) < self.width
    }

    /// Whether `theta` lies within `tol` of either endpoint.
    pub fn near_boundary(&self, theta: f64, tol: f64) -> bool {
        if self.width >= TAU {
            return false;
        }
        let d = |a: f64| {
            let t = (theta - a).rem_euclid(TAU);
            t.min(TAU - t)
        };
        d(self.start()) <= tol || d(self.end()) <= tol
    }
}

fn in_window(spec: &SpectralData, arc: &ArcWindow) -> Vec<usize> {
    (0..spec.n()).filter(|&j| arc.contains(spec.phases[j])).collect()
}

/// `P^I = sum over theta_j in I of psi_j psi_j^*`.
pub fn arc_projection(spec: &SpectralData, arc: &ArcWindow) -> Mat<C64> {
    let idx = in_window(spec, arc);
    let n = spec.n();
    let b = Mat::from_fn(n, idx.len(), |i, k| spec.vectors[(i, idx[k])]);
    &b * b.adjoint()
}

/// `sum over theta_j in I of |psi_{x,j}|^2`, `x` 1-based.
pub fn pointwise_weyl(spec: &SpectralData, arc: &ArcWindow, x: usize) -> Result<f64> {
    let n = spec.n();
    if x == 0 || x > n {
        return Err(Error::IndexOutOfRange { index: x, len: n });
    }
    Ok(in_window(spec, arc).iter().map(|&j| spec.vectors[(x - 1, j)].norm_sqr()).sum())
}

/// `pointwise_weyl` for every coordinate (index 0 is cell 1).
pub fn pointwise_weyl_all(spec: &SpectralData, arc: &ArcWindow) -> Vec<f64> {
    let n = spec.n();
    let mut acc = vec![0.0; n];
    for j in in_window(spec, arc) {
        let col = spec.vectors.col(j);
        for (i, a) in acc.iter_mut().enumerate() {
            *a += col[i].norm_sqr();
        }
    }
    acc
}

pub fn weyl_count(spec: &SpectralData, arc: &ArcWindow) -> usize {
    spec.phases.iter().filter(|&&t| arc.contains(t)).count()
}

/// Phases within `tol` of an arc endpoint.
pub fn boundary_phases(spec: &SpectralData, arc: &ArcWindow, tol: f64) -> usize {
    spec.phases.iter().filter(|&&t| arc.near_boundary(t, tol)).count()
}

/// Finite-n envelope for `|pointwise_weyl - |I|/2pi|` at good coordinates:
/// `(|I|/2pi) [2pi/(|I| K) + (1 + 2pi/(|I| K)) 6 2^{-r/2}]`.
pub fn weyl_envelope(width: f64, k: usize, r: usize) -> f64 {
    let a = TAU / (width * k as f64);
    width / TAU * (a + (1.0 + a) * 6.0 * 2f64.powf(-(r as f64) / 2.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct WeylRemainderReport {
    pub n: usize,
    /// Horizon used in the envelope (`K~(n)`, or `floor(log2 n)` for doubling).
    pub k: usize,
    pub r: usize,
    pub center: f64,
    pub width: f64,
    pub expected: f64,
    pub envelope: f64,
    /// Envelope at least `1 - |I|/2pi`, so it cannot fail.
    pub vacuous: bool,
    pub count: usize,
    pub boundary_phases: usize,
    pub bad_count: usize,
    pub bad_bound: u64,
    pub max_deviation_good: f64,
    pub max_deviation_all: f64,
    pub max_ratio: f64,
    /// 1-based good coordinates violating the envelope.
    pub violations: Vec<usize>,
}

/// Horizon for the envelope: `K~(n)`, or `floor(log2 n)` for doubling.
pub fn envelope_horizon(map: &PiecewiseLinearMap, n: usize) -> Result<usize> {
    let kt = map.k_tilde(n)?;
    Ok(if map.is_doubling() { kt.max(floor_log2(n)) } else { kt })
}

/// Compare pointwise Weyl sums at good coordinates with the envelope.
/// Returns the report even when coordinates violate it.
pub fn weyl_remainder_data(spec: &SpectralData, map: &PiecewiseLinearMap, arc: &ArcWindow, r: usize) -> Result<WeylRemainderReport> {
    let n = spec.n();
    let k = envelope_horizon(map, n)?;
    if r >= k {
        return Err(Error::CutoffTooLarge { r, limit: k.saturating_sub(1) });
    }
    let bad: BadCoordinateSet = bad_coordinates(map, n, r)?;
    Ok(weyl_remainder_with(spec, arc, k, &bad))
}

/// As `weyl_remainder_data` with a precomputed bad set and horizon.
pub fn weyl_remainder_with(spec: &SpectralData, arc: &ArcWindow, k: usize, bad: &BadCoordinateSet) -> WeylRemainderReport {
    let n = spec.n();
    let expected = arc.width() / TAU;
    let envelope = weyl_envelope(arc.width(), k, bad.r);
    let w = pointwise_weyl_all(spec, arc);
    let mut max_good = 0.0f64;
    let mut max_all = 0.0f64;
    let mut violations = Vec::new();
    for (i, v) in w.iter().enumerate() {
        let d = (v - expected).abs();
        max_all = max_all.max(d);
        if !bad.contains(i + 1) {
            max_good = max_good.max(d);
            if d > envelope {
                violations.push(i + 1);
            }
        }
    }
    WeylRemainderReport {
        n,
        k,
        r: bad.r,
        center: arc.center(),
        width: arc.width(),
        expected,
        envelope,
        vacuous: envelope >= expected.max(1.0 - expected),
        count: weyl_count(spec, arc),
        boundary_phases: boundary_phases(spec, arc, 1e-12),
        bad_count: bad.members.len(),
        bad_bound: bad.bound,
        max_deviation_good: max_good,
        max_deviation_all: max_all,
        max_ratio: if envelope > 0.0 { max_good / envelope } else { 0.0 },
        violations,
    }
}

/// Checked version: fails with `BoundViolated` when any good coordinate
/// leaves the envelope.
pub fn weyl_remainder_report(spec: &SpectralData, map: &PiecewiseLinearMap, arc: &ArcWindow, r: usize) -> Result<WeylRemainderReport> {
    let rep = weyl_remainder_data(spec, map, arc, r)?;
    if !rep.violations.is_empty() {
        return Err(Error::BoundViolated(format!(
            "{} good coordinates outside the envelope {:.3e}",
            rep.violations.len(),
            rep.envelope
        )));
    }
    Ok(rep)
}

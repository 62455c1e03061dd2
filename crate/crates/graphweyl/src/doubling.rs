//! Exact structure of the doubling quantization.
//!
//! For `n = 2^K` the atom `E_x` is labelled by the `K` binary digits of
//! `x - 1` and `S` acts by the left shift. The powers of `U` then satisfy
//! `U^K = 2^{-K/2} (1,-1;1,1)^{(x)K}`, `U^{2K} = (0,-1;1,0)^{(x)K}` and
//! `U^{4K} = (-1)^K I`, so the spectrum sits on the `4K`-th roots of
//! `(-1)^K`.

use faer::Mat;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interval_map::floor_log2;
use crate::linalg::{zero, SparseComplex};
use crate::quantize::{doubling_unitary, ComplexUnitary};
use crate::random_quant::{coordinate_measure, gaussian_distance, haar_rotate_clusters, GaussianDistanceReport};
use crate::rng::Rng;
use crate::spectral::{eigendecompose, SpectralData};
use crate::{C64, TAU};

/// Binary label of an atom of the `2^K` partition, most significant bit first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitStringIndex {
    pub k: usize,
    pub bits: Vec<u8>,
}

impl BitStringIndex {
    /// Label of cell `x` (1-based).
    pub fn from_coordinate(k: usize, x: usize) -> Result<Self> {
        let n = 1usize << k;
        if x == 0 || x > n {
            return Err(Error::IndexOutOfRange { index: x, len: n });
        }
        let v = x - 1;
        Ok(BitStringIndex { k, bits: (0..k).rev().map(|b| ((v >> b) & 1) as u8).collect() })
    }

    pub fn to_coordinate(&self) -> usize {
        self.bits.iter().fold(0usize, |acc, &b| 2 * acc + b as usize) + 1
    }

    /// Labels of the two cells met by `S(E_x)`: drop the first bit, append 0 or 1.
    pub fn successors(&self) -> [BitStringIndex; 2] {
        let mut tail: Vec<u8> = self.bits[1..].to_vec();
        tail.push(0);
        let a = BitStringIndex { k: self.k, bits: tail.clone() };
        *tail.last_mut().unwrap() = 1;
        [a, BitStringIndex { k: self.k, bits: tail }]
    }

    /// Smallest period of the cyclic bit string.
    pub fn period(&self) -> usize {
        (1..=self.k).find(|&p| self.k % p == 0 && (0..self.k).all(|i| self.bits[i] == self.bits[(i + p) % self.k])).unwrap_or(self.k)
    }
}

/// Support pattern of `2^{m/2} U^m` (descending) or `2^{m/2} U^{2K+m}` (flipped).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StaircaseClass {
    pub m: usize,
    pub flipped: bool,
}

impl StaircaseClass {
    /// Columns (1-based, sorted) of row `i` (1-based) in the pattern at `n = 2^k`.
    /// Descending rows are `{2^m i - (2^m - 1), ..., 2^m i} mod 2^K`; the
    /// flipped class uses row `n + 1 - i` of the descending one.
    pub fn columns(&self, k: usize, i: usize) -> Vec<usize> {
        let n = 1usize << k;
        let row = if self.flipped { n + 1 - i } else { i };
        let step = 1usize << self.m;
        let top = step * row;
        let mut cols: Vec<usize> = (0..step.min(n)).map(|d| (top - d - 1) % n + 1).collect();
        cols.sort_unstable();
        cols.dedup();
        cols
    }

    pub fn contains(&self, k: usize, i: usize, j: usize) -> bool {
        self.columns(k, i).binary_search(&j).is_ok()
    }
}

/// `gamma(K)`: `e^{i pi/4K}` for odd `K`, `1` for even `K`.
pub fn gamma(k: usize) -> C64 {
    if k % 2 == 1 {
        C64::from_polar(1.0, std::f64::consts::PI / (4 * k) as f64)
    } else {
        C64::new(1.0, 0.0)
    }
}

/// Angle of the `j`-th root `gamma(K) e^{2 pi i j/4K}` in `[0, 2pi)`.
pub fn root_angle(k: usize, j: usize) -> f64 {
    (gamma(k).arg() + TAU * j as f64 / (4 * k) as f64).rem_euclid(TAU)
}

fn check_k(k: usize) -> Result<usize> {
    if k == 0 || k > 13 {
        return Err(Error::InvalidArgument(format!("K = {k} outside 1..=13")));
    }
    Ok(1usize << k)
}

/// `U^{2K}` as a signed anti-diagonal permutation: row `i` (0-based) has
/// `(-1)^{#zero bits of i}` in column `n - 1 - i`.
pub fn u_2k_sparse(k: usize) -> SparseComplex {
    let n = 1usize << k;
    let rows = (0..n)
        .map(|i| {
            let zeros = k - (i as u64).count_ones() as usize;
            let s = if zeros % 2 == 0 { 1.0 } else { -1.0 };
            vec![(n - 1 - i, C64::new(s, 0.0))]
        })
        .collect();
    SparseComplex::from_rows(n, rows)
}

/// Kronecker-form entry of `2^{-K/2} (1,-1;1,1)^{(x)K}` (0-based indices).
fn tensor_uk_entry(k: usize, i: usize, j: usize) -> f64 {
    let minus = ((!i) & j & ((1 << k) - 1)).count_ones();
    let s = if minus % 2 == 0 { 1.0 } else { -1.0 };
    s * 2f64.powf(-(k as f64) / 2.0)
}

fn dense_transpose(m: &Mat<C64>) -> Mat<C64> {
    Mat::from_fn(m.ncols(), m.nrows(), |i, j| m[(j, i)])
}

fn max_diff(a: &Mat<C64>, b: &Mat<C64>) -> f64 {
    let mut d = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            d = d.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    d
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorPowerReport {
    pub k: usize,
    pub n: usize,
    pub u_k_error: f64,
    pub u_2k_error: f64,
    pub u_4k_error: f64,
    pub transpose_error: f64,
}

/// Check the Kronecker forms of `U^K`, `U^{2K}`, the identity
/// `U^{4K} = (-1)^K I` and `U^r = (-1)^K (U^{4K-r})^T` for `1 <= r < 4K`.
pub fn tensor_power_identities(k: usize) -> Result<TensorPowerReport> {
    let n = check_k(k)?;
    let u = doubling_unitary(n)?.to_sparse();
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    // Forward powers U^r and W_r = (-1)^K (U^T)^{4K-r}, stepped by W_{r+1} = W_r conj(U).
    let ut = u.transpose();
    let mut w = Mat::<C64>::from_fn(n, n, |i, j| if i == j { C64::new(sign, 0.0) } else { zero() });
    for _ in 0..4 * k - 1 {
        w = ut.mul_dense(w.as_ref());
    }
    let uadj = u.adjoint();
    let mut p = crate::linalg::identity(n);
    let (mut u_k_error, mut u_2k_error, mut transpose_error) = (0.0f64, 0.0f64, 0.0f64);
    let j2k = u_2k_sparse(k).to_dense();
    for r in 1..4 * k {
        p = u.mul_dense(p.as_ref());
        transpose_error = transpose_error.max(max_diff(&p, &w));
        // W conj(U) = (U^* W^T)^T
        w = dense_transpose(&uadj.mul_dense(dense_transpose(&w).as_ref()));
        if r == k {
            for j in 0..n {
                for i in 0..n {
                    u_k_error = u_k_error.max((p[(i, j)] - tensor_uk_entry(k, i, j)).norm());
                }
            }
        }
        if r == 2 * k {
            u_2k_error = max_diff(&p, &j2k);
        }
    }
    p = u.mul_dense(p.as_ref());
    let mut u_4k_error = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let want = if i == j { sign } else { 0.0 };
            u_4k_error = u_4k_error.max((p[(i, j)] - want).norm());
        }
    }
    let rep = TensorPowerReport { k, n, u_k_error, u_2k_error, u_4k_error, transpose_error };
    let worst = u_k_error.max(u_2k_error).max(u_4k_error).max(transpose_error);
    if !(worst <= 1e-10) {
        return Err(Error::IdentityViolated(format!("{rep:?}")));
    }
    Ok(rep)
}

/// Distance from every eigenphase to the nearest root of the `gamma(K)`
/// lattice, and the nearest-root index of each phase. A phase farther than
/// `2pi/16K` from every root is an error.
pub fn root_assignment(phases: &[f64], k: usize) -> Result<(Vec<usize>, f64)> {
    let step = TAU / (4 * k) as f64;
    let g = gamma(k).arg();
    let mut worst = 0.0f64;
    let mut idx = Vec::with_capacity(phases.len());
    for &t in phases {
        let s = (t - g).rem_euclid(TAU) / step;
        let j = s.round() as usize % (4 * k);
        let d = (s - s.round()).abs() * step;
        if d > step / 4.0 {
            return Err(Error::IdentityViolated(format!("phase {t} is {d:e} from the nearest root")));
        }
        worst = worst.max(d);
        idx.push(j);
    }
    Ok((idx, worst))
}

/// Dense `P^{(n,j)} = (1/4K) sum_{l<4K} (e^{-2 pi i j/4K} conj(gamma))^l U^l`.
pub fn eigenspace_projection_poly(u: &ComplexUnitary, k: usize, j: usize) -> Result<Mat<C64>> {
    let n = check_k(k)?;
    if u.n() != n {
        return Err(Error::DimensionMismatch(u.n(), n));
    }
    if j >= 4 * k {
        return Err(Error::IndexOutOfRange { index: j, len: 4 * k });
    }
    let us = u.to_sparse();
    let c = C64::from_polar(1.0, -TAU * j as f64 / (4 * k) as f64) * gamma(k).conj();
    let mut p = crate::linalg::identity(n);
    let mut acc = crate::linalg::identity(n);
    let mut cl = C64::new(1.0, 0.0);
    for _ in 1..4 * k {
        p = us.mul_dense(p.as_ref());
        cl *= c;
        for col in 0..n {
            for row in 0..n {
                acc[(row, col)] += cl * p[(row, col)];
            }
        }
    }
    let s = 1.0 / (4 * k) as f64;
    Ok(Mat::from_fn(n, n, |a, b| acc[(a, b)] * s))
}

/// Diagonals `(U^l)_{xx}` for `l = 0..=max_pow`, computed on column chunks.
pub fn power_diagonals(u: &SparseComplex, max_pow: usize) -> Vec<Vec<C64>> {
    let n = u.nrows;
    let mut out = vec![vec![zero(); n]; max_pow + 1];
    out[0] = vec![C64::new(1.0, 0.0); n];
    for_each_power_chunk(u, max_pow, 128, |start, l, x| {
        for k in 0..x.ncols() {
            out[l][start + k] = x[(start + k, k)];
        }
    });
    out
}

/// Call `f(start, l, U^l E)` for `l = 1..=max_pow` where `E` holds the unit
/// columns `start..start+w`.
fn for_each_power_chunk<F>(u: &SparseComplex, max_pow: usize, chunk: usize, mut f: F)
where
    F: FnMut(usize, usize, &Mat<C64>),
{
    let n = u.nrows;
    let mut start = 0;
    while start < n {
        let w = chunk.min(n - start);
        let mut x = Mat::<C64>::from_fn(n, w, |i, k| if i == start + k { C64::new(1.0, 0.0) } else { zero() });
        for l in 1..=max_pow {
            x = u.mul_dense(x.as_ref());
            f(start, l, &x);
        }
        start += w;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DegeneracyProfile {
    pub k: usize,
    pub n: usize,
    pub multiplicities: Vec<usize>,
    pub traces: Vec<f64>,
    pub max_trace_residual: f64,
    /// `max_j |mult_j - 2^K/4K| / (2^K/4K)`
    pub max_relative_deviation: f64,
}

/// Multiplicities of the `4K` roots from the traces of the projection
/// polynomials.
pub fn degeneracy_profile(k: usize) -> Result<DegeneracyProfile> {
    let n = check_k(k)?;
    let u = doubling_unitary(n)?.to_sparse();
    let m = 4 * k;
    let diags = power_diagonals(&u, m - 1);
    let traces_u: Vec<C64> = diags.iter().map(|d| d.iter().sum()).collect();
    let mut multiplicities = Vec::with_capacity(m);
    let mut traces = Vec::with_capacity(m);
    let mut max_res = 0.0f64;
    for j in 0..m {
        let c = C64::from_polar(1.0, -TAU * j as f64 / m as f64) * gamma(k).conj();
        let mut cl = C64::new(1.0, 0.0);
        let mut t = zero();
        for tr in &traces_u {
            t += cl * tr;
            cl *= c;
        }
        let t = t / m as f64;
        let rounded = t.re.round();
        let res = (t - C64::new(rounded, 0.0)).norm();
        if res > 1e-6 {
            return Err(Error::NonIntegerTrace { j, trace: t.re });
        }
        max_res = max_res.max(res);
        traces.push(t.re);
        multiplicities.push(rounded as usize);
    }
    let sum: usize = multiplicities.iter().sum();
    if sum != n {
        return Err(Error::IdentityViolated(format!("multiplicities sum to {sum}, not {n}")));
    }
    let mean = n as f64 / m as f64;
    let max_relative_deviation = multiplicities.iter().map(|&d| (d as f64 - mean).abs() / mean).fold(0.0, f64::max);
    Ok(DegeneracyProfile { k, n, multiplicities, traces, max_trace_residual: max_res, max_relative_deviation })
}

#[derive(Debug, Clone, Serialize)]
pub struct StaircaseReport {
    pub k: usize,
    pub m: usize,
    pub descending_ok: bool,
    pub flipped_ok: bool,
    pub max_modulus_error: f64,
}

fn pattern_error(p: &SparseComplex, class: StaircaseClass, k: usize, scale: f64) -> (bool, f64) {
    let n = p.nrows;
    let mut ok = true;
    let mut err = 0.0f64;
    for i in 0..n {
        let mut cols: Vec<usize> = p.row(i).filter(|(_, v)| v.norm() * scale > 0.5).map(|(j, _)| j + 1).collect();
        cols.sort_unstable();
        ok &= cols == class.columns(k, i + 1);
        for (_, v) in p.row(i) {
            let a = v.norm() * scale;
            err = err.max(a.min((a - 1.0).abs()));
        }
    }
    (ok, err)
}

/// Support of `2^{m/2} U^m` is `A_m` and of `2^{m/2} U^{2K+m}` is `B_m`,
/// with entries of modulus 0 or 1.
pub fn staircase_check(k: usize, m: usize) -> Result<StaircaseReport> {
    let n = check_k(k)?;
    if m == 0 || m > k {
        return Err(Error::InvalidArgument(format!("m = {m} outside 1..=K")));
    }
    let u = doubling_unitary(n)?.to_sparse();
    let mut p = SparseComplex::identity(n);
    for _ in 0..m {
        p = p.mul(&u, 0.0);
    }
    let scale = 2f64.powf(m as f64 / 2.0);
    let (a_ok, ea) = pattern_error(&p, StaircaseClass { m, flipped: false }, k, scale);
    let q = u_2k_sparse(k).mul(&p, 0.0);
    let (b_ok, eb) = pattern_error(&q, StaircaseClass { m, flipped: true }, k, scale);
    let rep = StaircaseReport { k, m, descending_ok: a_ok, flipped_ok: b_ok, max_modulus_error: ea.max(eb) };
    if !(a_ok && b_ok && rep.max_modulus_error <= 1e-10) {
        return Err(Error::PatternViolated(format!("{rep:?}")));
    }
    Ok(rep)
}

#[derive(Debug, Clone, Serialize)]
pub struct BadPairsReport {
    pub k: usize,
    pub r: usize,
    /// `B_K`, 1-based.
    pub bad_coordinates: Vec<usize>,
    pub bad_bound: usize,
    pub bad_pair_count: usize,
    pub pair_bound: usize,
    /// `max |P^{(n,j)}_{xx} - 1/4K|` over good `x` and all `j`.
    pub diag_deviation: f64,
    pub diag_envelope: f64,
    /// `max |P^{(n,j)}_{yx}|` over good pairs and all `j`.
    pub off_max: f64,
    pub off_envelope: f64,
}

/// Sorted supports (0-based) of the rows of `U^m` for `m = 0..=r`.
fn low_power_supports(u: &SparseComplex, r: usize) -> Vec<Vec<Vec<usize>>> {
    let n = u.nrows;
    let mut out = Vec::with_capacity(r + 1);
    let mut p = SparseComplex::identity(n);
    out.push((0..n).map(|i| vec![i]).collect());
    for _ in 0..r {
        p = p.mul(u, 0.0);
        out.push((0..n).map(|i| p.row(i).map(|(j, _)| j).collect()).collect());
    }
    out
}

fn transpose_support(s: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut t = vec![Vec::new(); s.len()];
    for (i, row) in s.iter().enumerate() {
        for &j in row {
            t[j].push(i);
        }
    }
    t.iter_mut().for_each(|r| r.sort_unstable());
    t
}

/// Row supports of `U^l` for the exponents in `windows`, from the low
/// powers: `U^{2K+m} = J U^m`, `U^{2K-m} = J (U^m)^*`, `U^{4K-m} = +-(U^m)^*`.
fn window_supports(k: usize, r: usize, windows: &[usize], low: &[Vec<Vec<usize>>]) -> Vec<Vec<Vec<usize>>> {
    let n = 1usize << k;
    let (k2, k4) = (2 * k, 4 * k);
    windows
        .iter()
        .map(|&l| {
            if l <= r {
                low[l].clone()
            } else if l >= k4 - r {
                transpose_support(&low[k4 - l])
            } else if l <= k2 {
                let t = transpose_support(&low[k2 - l]);
                (0..n).map(|x| t[n - 1 - x].clone()).collect()
            } else {
                (0..n).map(|x| low[l - k2][n - 1 - x].clone()).collect()
            }
        })
        .collect()
}

/// Bad coordinates and pairs for `n = 2^K` with cutoff `r`, and the
/// envelopes `|P_xx - 1/4K| <= 10 2^{-r/2}/4K` on good coordinates and
/// `|P_yx| <= 10 2^{-r/2}/4K` on good pairs.
pub fn bad_pairs_2k(k: usize, r: usize) -> Result<BadPairsReport> {
    let n = check_k(k)?;
    if r == 0 || r >= k {
        return Err(Error::CutoffTooLarge { r, limit: k });
    }
    let uu = doubling_unitary(n)?;
    let u = uu.to_sparse();
    let low = low_power_supports(&u, r);
    let (k2, k4) = (2 * k, 4 * k);

    let diag_windows: Vec<usize> = (1..=r).chain(k2 - r..=k2).collect();
    let mut bad = vec![false; n];
    for s in window_supports(k, r, &diag_windows, &low) {
        for (x, row) in s.iter().enumerate() {
            if row.binary_search(&x).is_ok() {
                bad[x] = true;
            }
        }
    }
    let bad_coordinates: Vec<usize> = (0..n).filter(|&x| bad[x]).map(|x| x + 1).collect();

    let pair_windows: Vec<usize> = (1..=r).chain(k2 - r..=k2 + r).chain(k4 - r..k4).collect();
    let mut pairs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for s in window_supports(k, r, &pair_windows, &low) {
        for (x, row) in s.into_iter().enumerate() {
            pairs[x].extend(row.into_iter().filter(|&y| y != x));
        }
    }
    pairs.iter_mut().for_each(|p| {
        p.sort_unstable();
        p.dedup();
    });
    let bad_pair_count: usize = pairs.iter().map(|p| p.len()).sum();

    let scale = 1.0 / k4 as f64;
    let env = scale * 10.0 * 2f64.powf(-(r as f64) / 2.0);
    let roots: Vec<C64> = (0..k4).map(|j| C64::from_polar(1.0, -TAU * j as f64 / k4 as f64) * gamma(k).conj()).collect();
    let (mut diag_dev, mut off_max) = (0.0f64, 0.0f64);
    // Projector columns on chunks: P_j E = (1/4K) sum_l c_j^l U^l E.
    let chunk = 64;
    let mut start = 0;
    while start < n {
        let w = chunk.min(n - start);
        let mut acc: Vec<Mat<C64>> =
            (0..k4).map(|_| Mat::from_fn(n, w, |i, c| if i == start + c { C64::new(1.0, 0.0) } else { zero() })).collect();
        let mut x = Mat::<C64>::from_fn(n, w, |i, c| if i == start + c { C64::new(1.0, 0.0) } else { zero() });
        let mut cl = vec![C64::new(1.0, 0.0); k4];
        for _ in 1..k4 {
            x = u.mul_dense(x.as_ref());
            for j in 0..k4 {
                cl[j] *= roots[j];
                let c = cl[j];
                let a = &mut acc[j];
                for col in 0..w {
                    for row in 0..n {
                        a[(row, col)] += c * x[(row, col)];
                    }
                }
            }
        }
        for a in &acc {
            for col in 0..w {
                let xcol = start + col;
                for row in 0..n {
                    let v = a[(row, col)] * scale;
                    if row == xcol {
                        if !bad[xcol] {
                            diag_dev = diag_dev.max((v.re - scale).abs().max(v.im.abs()));
                        }
                    } else if pairs[xcol].binary_search(&row).is_err() && pairs[row].binary_search(&xcol).is_err() {
                        off_max = off_max.max(v.norm());
                    }
                }
            }
        }
        start += w;
    }
    let rep = BadPairsReport {
        k,
        r,
        bad_bound: 4 * ((1 << r) - 1),
        bad_pair_count,
        pair_bound: 8 * ((1 << r) - 1) * n,
        bad_coordinates,
        diag_deviation: diag_dev,
        diag_envelope: env,
        off_max,
        off_envelope: env,
    };
    if rep.bad_coordinates.len() > rep.bad_bound
        || rep.bad_pair_count > rep.pair_bound
        || rep.diag_deviation > env
        || rep.off_max > env
    {
        return Err(Error::BoundViolated(format!(
            "#B={} (<= {}), #BP={} (<= {}), diag {:e}, off {:e}, envelope {:e}",
            rep.bad_coordinates.len(),
            rep.bad_bound,
            rep.bad_pair_count,
            rep.pair_bound,
            rep.diag_deviation,
            rep.off_max,
            env
        )));
    }
    Ok(rep)
}

/// Haar-rotate every eigenspace of `U_{2^K}` and measure the Gaussian
/// distance of each resulting eigenvector.
pub fn random_eigenbasis_gaussian(k: usize, rng: &mut Rng) -> Result<Vec<GaussianDistanceReport>> {
    let n = check_k(k)?;
    let spec = eigendecompose(&doubling_unitary(n)?)?;
    random_eigenbasis_gaussian_with(spec, rng)
}

/// As `random_eigenbasis_gaussian`, reusing a decomposition.
pub fn random_eigenbasis_gaussian_with(mut spec: SpectralData, rng: &mut Rng) -> Result<Vec<GaussianDistanceReport>> {
    haar_rotate_clusters(&mut spec, rng);
    let n = spec.n();
    let mut dim = vec![1usize; n];
    for c in spec.clusters() {
        for &j in c {
            dim[j] = c.len();
        }
    }
    let v = spec.vectors();
    Ok((0..n)
        .map(|j| {
            let col: Vec<C64> = (0..n).map(|i| v[(i, j)]).collect();
            let mut r = gaussian_distance(&coordinate_measure(&col));
            r.dimension = dim[j];
            r
        })
        .collect())
}

/// Fourier coefficient of the trapezoid `h_Delta`, equal to 1 on
/// `|t| <= pi/2 - Delta`, 0 for `|t| >= pi/2`, linear in between.
pub fn h_delta_fourier(delta: f64, j: i64) -> f64 {
    let pi = std::f64::consts::PI;
    if j == 0 {
        return (pi - delta) / TAU;
    }
    let jf = j as f64;
    2.0 / (pi * jf * jf * delta) * (jf * (pi - delta) / 2.0).sin() * (jf * delta / 2.0).sin()
}

/// `h_Delta(t)` on `R/2piZ`.
pub fn h_delta(delta: f64, t: f64) -> f64 {
    let a = crate::spectral::normalize_phase(t);
    let a = if a > std::f64::consts::PI { TAU - a } else { a };
    let half = std::f64::consts::FRAC_PI_2;
    if a <= half - delta {
        1.0
    } else if a >= half {
        0.0
    } else {
        (half - a) / delta
    }
}

/// `(1/pi) sum_l (5 + 4l) / ((1 + 4l)(3 + 4l) 2^{(1+4l)/2})`.
pub fn series_constant() -> f64 {
    let mut s = 0.0;
    for l in 0..200 {
        let lf = l as f64;
        s += (5.0 + 4.0 * lf) / ((1.0 + 4.0 * lf) * (3.0 + 4.0 * lf) * 2f64.powf((1.0 + 4.0 * lf) / 2.0));
    }
    s / std::f64::consts::PI
}

#[derive(Debug, Clone, Serialize)]
pub struct FailingCoordinateReport {
    pub n: usize,
    pub k: usize,
    pub delta: f64,
    /// `(S_K h_Delta)(U)_{11}`
    pub series_bound: f64,
    pub series_constant: f64,
    /// `1/2 + series_constant`
    pub limit_bound: f64,
    /// `(P^{[-pi/2, pi/2]})_{11}` from the eigendecomposition.
    pub exact: f64,
    /// `4/(pi K Delta)`
    pub tail_bound: f64,
    /// Eigenphases within the cluster tolerance of `+-pi/2`.
    pub boundary_phases: usize,
}

/// `(U^j)_{11}` for `j = 1..=kmax` by sparse powers.
pub fn corner_powers(n: usize, kmax: usize) -> Result<Vec<f64>> {
    let u = doubling_unitary(n)?.to_sparse();
    let mut v = vec![zero(); n];
    v[0] = C64::new(1.0, 0.0);
    let mut out = Vec::with_capacity(kmax);
    let mut w = vec![zero(); n];
    for _ in 0..kmax {
        u.matvec(&v, &mut w);
        std::mem::swap(&mut v, &mut w);
        out.push(v[0].re);
    }
    Ok(out)
}

/// Lower bound for `(P^I)_{11}` from the truncated Fourier series of
/// `h_Delta <= chi_I`, and the exact value for the closed arc
/// `[-pi/2, pi/2]`.
pub fn failing_coordinate_bound(n: usize) -> Result<FailingCoordinateReport> {
    let spec = eigendecompose(&doubling_unitary(n)?)?;
    failing_coordinate_bound_with(&spec)
}

pub fn failing_coordinate_bound_with(spec: &SpectralData) -> Result<FailingCoordinateReport> {
    let n = spec.n();
    if n < 4 || n % 2 != 0 {
        return Err(Error::OddDimension(n));
    }
    let k = floor_log2(n);
    let delta = (k as f64).powf(-0.75);
    let corners = corner_powers(n, k)?;
    let series_bound =
        h_delta_fourier(delta, 0) + 2.0 * (1..=k).map(|j| h_delta_fourier(delta, j as i64) * corners[j - 1]).sum::<f64>();
    let half = std::f64::consts::FRAC_PI_2;
    let tol = spec.cluster_tol().max(1e-9);
    let v = spec.vectors();
    let mut exact = 0.0;
    let mut boundary = 0;
    for (j, &t) in spec.phases().iter().enumerate() {
        let a = t.min(TAU - t);
        if (a - half).abs() <= tol {
            boundary += 1;
        }
        if a <= half + tol {
            exact += v[(0, j)].norm_sqr();
        }
    }
    let c = series_constant();
    Ok(FailingCoordinateReport {
        n,
        k,
        delta,
        series_bound,
        series_constant: c,
        limit_bound: 0.5 + c,
        exact,
        tail_bound: 4.0 / (std::f64::consts::PI * k as f64 * delta),
        boundary_phases: boundary,
    })
}

/// Maximum number of length-`ell` paths between two cells and the number of
/// connected pairs for the doubling graph on `n` cells (`n` even).
pub fn doubling_path_counts(n: usize, ell: usize) -> Result<(u64, usize)> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::OddDimension(n));
    }
    let p = crate::markov::build_markov(&crate::interval_map::doubling(), n)?;
    let mut max_paths = 0u64;
    let mut pairs = 0usize;
    let mut cur = vec![0u64; n];
    let mut next = vec![0u64; n];
    for x in 0..n {
        cur.iter_mut().for_each(|c| *c = 0);
        cur[x] = 1;
        for _ in 0..ell {
            next.iter_mut().for_each(|c| *c = 0);
            for (y, &c) in cur.iter().enumerate() {
                if c > 0 {
                    for &(z, _) in p.row(y) {
                        next[z] += c;
                    }
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        for &c in &cur {
            if c > 0 {
                pairs += 1;
                max_paths = max_paths.max(c);
            }
        }
    }
    Ok((max_paths, pairs))
}

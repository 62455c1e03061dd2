//! Haar sampling in spectral bins, randomized quantizations and Gaussian
//! statistics of eigenvector coordinates.

use faer::Mat;
use serde::Serialize;

use crate::ergodic::{adaptive_simpson, conjugation_defect_dense, matrix_elements, observable, Func};
use crate::error::{Error, Result};
use crate::interval_map::PiecewiseLinearMap;
use crate::linalg::{power_iteration_norm, zero, NormEstimate};
use crate::markov::RowStochasticSparse;
use crate::quantize::{entry_error, ComplexUnitary, Provenance};
use crate::rng::{complex_gaussian, rng_from_seed, Rng};
use crate::spectral::{normalize_phase, ArcWindow, SpectralData};
use crate::{C64, TAU};

/// Haar-distributed `d x d` unitary: QR of a complex Ginibre matrix with the
/// diagonal of `R` normalized to positive reals.
pub fn haar_random_unitary(d: usize, rng: &mut Rng) -> Mat<C64> {
    assert!(d >= 1, "dimension must be positive");
    let g = Mat::<C64>::from_fn(d, d, |_, _| complex_gaussian(rng));
    let qr = g.qr();
    let mut q = qr.compute_Q();
    let r = qr.R();
    for j in 0..d {
        let rjj = r[(j, j)];
        let ph = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..d {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// Rotate every degenerate eigenspace by an independent Haar unitary.
pub fn haar_rotate_clusters(spec: &mut SpectralData, rng: &mut Rng) {
    spec.rotate_clusters(|d| haar_random_unitary(d, rng));
}

fn bin_indices(spec: &SpectralData, arc: &ArcWindow) -> Vec<usize> {
    (0..spec.n()).filter(|&j| arc.contains(spec.phases()[j])).collect()
}

/// Uniform unit vector in the span of the eigenvectors with phase in `arc`.
pub fn random_bin_vector(spec: &SpectralData, arc: &ArcWindow, rng: &mut Rng) -> Result<Vec<C64>> {
    let idx = bin_indices(spec, arc);
    if idx.is_empty() {
        return Err(Error::EmptyBin);
    }
    let mut g: Vec<C64> = idx.iter().map(|_| complex_gaussian(rng)).collect();
    let norm = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    g.iter_mut().for_each(|z| *z /= norm);
    let v = spec.vectors();
    let n = spec.n();
    let mut out = vec![zero(); n];
    for (k, &j) in idx.iter().enumerate() {
        let col = v.col(j);
        for i in 0..n {
            out[i] += col[i] * g[k];
        }
    }
    Ok(out)
}

/// Scaled coordinates `sqrt(n) v_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub values: Vec<C64>,
    pub n: usize,
}

impl EmpiricalMeasure {
    /// `(1/n) sum |value|^2`; one for a unit vector.
    pub fn second_moment(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.values.len() as f64
    }
}

pub fn coordinate_measure(v: &[C64]) -> EmpiricalMeasure {
    let s = (v.len() as f64).sqrt();
    EmpiricalMeasure { values: v.iter().map(|z| z * s).collect(), n: v.len() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianDistanceReport {
    pub ks_real: f64,
    pub ks_imag: f64,
    pub lip_max: f64,
    pub n: usize,
    /// Dimension of the subspace the vector was drawn from, when known.
    pub dimension: usize,
}

/// CDF of N(0, 1/2).
fn half_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x))
}

/// Kolmogorov-Smirnov distance of a sample against N(0, 1/2).
pub fn ks_distance(sample: &mut [f64]) -> f64 {
    sample.sort_by(|a, b| a.total_cmp(b));
    let m = sample.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sample.iter().enumerate() {
        let f = half_normal_cdf(x);
        d = d.max((i as f64 + 1.0) / m - f).max(f - i as f64 / m);
    }
    d
}

/// Centers of the test functions `min(1, |z - c|)`.
pub fn dictionary_centers() -> Vec<C64> {
    let mut c = Vec::with_capacity(9);
    for a in [-1.0, 0.0, 1.0] {
        for b in [-1.0, 0.0, 1.0] {
            c.push(C64::new(a, b));
        }
    }
    c
}

fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let (mut term, mut sum) = (1.0, 1.0);
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// `E min(1, |Z - c|)` for a standard complex Gaussian `Z`. `|Z - c|` is
/// Rice distributed with density `2r exp(-(r^2 + nu^2)) I0(2 r nu)`.
pub fn dictionary_expectation(c: C64) -> f64 {
    let nu = c.norm();
    let pdf = |r: f64| 2.0 * r * (-(r * r + nu * nu)).exp() * bessel_i0(2.0 * r * nu);
    let first = adaptive_simpson(&|r| r * pdf(r), 0.0, 1.0, 1e-13).expect("smooth integrand");
    let mass = adaptive_simpson(&pdf, 0.0, 1.0, 1e-13).expect("smooth integrand");
    first + 1.0 - mass
}

pub fn gaussian_distance(m: &EmpiricalMeasure) -> GaussianDistanceReport {
    let mut re: Vec<f64> = m.values.iter().map(|z| z.re).collect();
    let mut im: Vec<f64> = m.values.iter().map(|z| z.im).collect();
    let len = m.values.len() as f64;
    let lip_max = dictionary_centers()
        .into_iter()
        .map(|c| {
            let emp = m.values.iter().map(|z| (z - c).norm().min(1.0)).sum::<f64>() / len;
            (emp - dictionary_expectation(c)).abs()
        })
        .fold(0.0, f64::max);
    GaussianDistanceReport { ks_real: ks_distance(&mut re), ks_imag: ks_distance(&mut im), lip_max, n: m.n, dimension: 0 }
}

/// `V = Psi' diag(e^{i theta'}) Psi'^*` with its spectral data.
#[derive(Debug, Clone)]
pub struct RandomQuantization {
    pub v: ComplexUnitary,
    pub kappa: usize,
    pub seed: u64,
    /// Left edge of the first bin.
    pub offset: f64,
    pub epsilon_split: f64,
    /// Bin of each eigenvector.
    pub bin_of: Vec<usize>,
    /// `(index, old phase, new phase)` for every moved phase.
    pub reassigned: Vec<(usize, f64, f64)>,
    /// Eigenphases `theta'` and eigenvectors `Psi'` of `V`.
    pub spectrum: SpectralData,
}

/// Bin edge offset in `[0, w)` maximizing the distance from every phase to
/// the nearest edge of the `2pi/kappa` lattice.
fn auto_offset(points: &[f64], w: f64) -> f64 {
    let mut r: Vec<f64> = points.iter().map(|p| p.rem_euclid(w)).collect();
    if r.is_empty() {
        return 0.0;
    }
    r.sort_by(|a, b| a.total_cmp(b));
    let mut best = (r[0] + w - r[r.len() - 1], r[r.len() - 1]);
    for k in 1..r.len() {
        let gap = r[k] - r[k - 1];
        if gap > best.0 {
            best = (gap, r[k - 1]);
        }
    }
    (best.1 + best.0 / 2.0).rem_euclid(w)
}

/// Circular mean of phases in a cluster.
fn mean_phase(phases: &[f64], idx: &[usize]) -> f64 {
    let z: C64 = idx.iter().map(|&j| C64::from_polar(1.0, phases[j])).sum();
    normalize_phase(z.arg())
}

fn circ_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Smallest circular gap in a list of phases.
pub fn min_phase_gap(phases: &[f64]) -> f64 {
    if phases.len() < 2 {
        return TAU;
    }
    let mut p: Vec<f64> = phases.iter().map(|&t| t.rem_euclid(TAU)).collect();
    p.sort_by(|a, b| a.total_cmp(b));
    let mut g = p[0] + TAU - p[p.len() - 1];
    for k in 1..p.len() {
        g = g.min(p[k] - p[k - 1]);
    }
    g
}

/// Haar-rotate the eigenvectors within each of `kappa` equal spectral bins
/// and split degenerate phases inside a window of width `epsilon_split`
/// (default: a tenth of the smaller of the bin width and the smallest gap
/// between clusters).
pub fn build_random_quantization(spec: &SpectralData, kappa: usize, epsilon_split: Option<f64>, seed: u64) -> Result<RandomQuantization> {
    if kappa == 0 {
        return Err(Error::InvalidArgument("kappa must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let n = spec.n();
    let w = TAU / kappa as f64;
    let phases = spec.phases();
    let clusters = spec.clusters();
    let centers: Vec<f64> = clusters.iter().map(|c| mean_phase(phases, c)).collect();
    let offset = auto_offset(&centers, w);
    let cluster_gap = min_phase_gap(&centers);
    let eps = epsilon_split.unwrap_or(0.1 * w.min(cluster_gap));
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("split window {eps} must be positive")));
    }
    let bin = |t: f64| (((t - offset).rem_euclid(TAU) / w).floor() as usize).min(kappa - 1);

    let mut bin_of = vec![0usize; n];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); kappa];
    let mut new_phase = phases.to_vec();
    let mut reassigned = Vec::new();
    for (c, idx) in clusters.iter().enumerate() {
        let b = bin(centers[c]);
        let d = idx.len();
        for (k, &j) in idx.iter().enumerate() {
            bin_of[j] = b;
            members[b].push(j);
            if d > 1 {
                let t = normalize_phase(centers[c] + eps * (k as f64 / (d - 1) as f64 - 0.5));
                if bin(t) != b || circ_dist(t, centers[c]) >= 0.5 * w {
                    return Err(Error::SplitWindowTooLarge(format!(
                        "phase {:.6} of a {d}-fold cluster leaves its bin with window {eps:e}",
                        centers[c]
                    )));
                }
                reassigned.push((j, phases[j], t));
                new_phase[j] = t;
            }
        }
    }

    let v = spec.vectors();
    let mut psi = Mat::<C64>::zeros(n, n);
    for idx in members.iter().filter(|m| !m.is_empty()) {
        let d = idx.len();
        let blk = Mat::from_fn(n, d, |i, k| v[(i, idx[k])]);
        let rot = &blk * haar_random_unitary(d, &mut rng);
        for (k, &j) in idx.iter().enumerate() {
            for i in 0..n {
                psi[(i, j)] = rot[(i, k)];
            }
        }
    }
    let scaled = Mat::from_fn(n, n, |i, j| psi[(i, j)] * C64::from_polar(1.0, new_phase[j]));
    let vm = &scaled * psi.adjoint();
    let vq = ComplexUnitary::new(vm, Provenance::RandomBinRotation)?;
    let spectrum = SpectralData::from_parts(new_phase, psi, 1e-12, vec![0.0; n]);
    Ok(RandomQuantization { v: vq, kappa, seed, offset, epsilon_split: eps, bin_of, reassigned, spectrum })
}

/// `||A - B||` for dense unitaries by power iteration.
pub fn unitary_distance(a: &ComplexUnitary, b: &ComplexUnitary, tol: f64, max_iter: usize) -> NormEstimate {
    let (ma, mb) = (a.matrix(), b.matrix());
    let n = a.n();
    let apply = |x: &[C64], y: &mut [C64]| {
        y.iter_mut().for_each(|z| *z = zero());
        for j in 0..n {
            let (ca, cb) = (ma.col(j), mb.col(j));
            let xj = x[j];
            for i in 0..n {
                y[i] += (ca[i] - cb[i]) * xj;
            }
        }
    };
    let apply_adj = |x: &[C64], y: &mut [C64]| {
        for j in 0..n {
            let (ca, cb) = (ma.col(j), mb.col(j));
            let mut s = zero();
            for i in 0..n {
                s += (ca[i] - cb[i]).conj() * x[i];
            }
            y[j] = s;
        }
    };
    power_iteration_norm(n, apply, apply_adj, tol, max_iter, 29)
}

/// `max_j |<phi_j, O_n(h) phi_j> - int h|` over the columns of a basis.
pub fn que_pairing(spec: &SpectralData, h: &Func) -> Result<f64> {
    let obs = observable(h, spec.n())?;
    Ok(matrix_elements(spec, &obs).into_iter().map(|m| (m - obs.integral).abs()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Serialize)]
pub struct EgorovComparison {
    pub observable: String,
    pub defect_u: f64,
    pub defect_v: f64,
    pub allowance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct QueEntry {
    pub observable: String,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RandomQuantizationReport {
    pub n: usize,
    pub kappa: usize,
    pub seed: u64,
    pub epsilon_split: f64,
    /// (a)
    pub distance: NormEstimate,
    pub distance_constant: f64,
    pub egorov: Vec<EgorovComparison>,
    /// (b)
    pub ks_real_median: f64,
    pub ks_real_max: f64,
    pub ks_imag_max: f64,
    pub lip_max: f64,
    /// (c)
    pub que: Vec<QueEntry>,
    /// (d)
    pub min_gap: f64,
    /// (e)
    pub entry_error: f64,
    pub entry_allowance: f64,
}

/// Measure properties (a)-(e) of a randomized quantization. `hs` pairs a
/// label with each observable.
pub fn verify_random_quantization(
    q: &RandomQuantization,
    u: &ComplexUnitary,
    p: &RowStochasticSparse,
    map: &PiecewiseLinearMap,
    hs: &[(String, Func)],
) -> Result<RandomQuantizationReport> {
    let n = u.n();
    if q.v.n() != n {
        return Err(Error::DimensionMismatch(q.v.n(), n));
    }
    let distance = unitary_distance(&q.v, u, 1e-8, 500);
    let mut egorov = Vec::new();
    let mut que = Vec::new();
    for (label, h) in hs {
        let o = observable(h, n)?;
        let o2 = observable(&h.compose(map, 1), n)?;
        let du = conjugation_defect_dense(u, &o.diagonal, &o2.diagonal, 1e-6, 300).value;
        let dv = conjugation_defect_dense(&q.v, &o.diagonal, &o2.diagonal, 1e-6, 300).value;
        let allowance = 2.0 * distance.value * o.sup_norm;
        egorov.push(EgorovComparison {
            observable: label.clone(),
            defect_u: du,
            defect_v: dv,
            allowance,
            pass: (dv - du).abs() <= allowance + 1e-12,
        });
        let me = matrix_elements(&q.spectrum, &o);
        let max_deviation = me.into_iter().map(|m| (m - o.integral).abs()).fold(0.0, f64::max);
        que.push(QueEntry { observable: label.clone(), max_deviation });
    }
    let vecs = q.spectrum.vectors();
    let mut ks_re = Vec::with_capacity(n);
    let (mut ks_imag_max, mut lip_max) = (0.0f64, 0.0f64);
    for j in 0..n {
        let col: Vec<C64> = (0..n).map(|i| vecs[(i, j)]).collect();
        let r = gaussian_distance(&coordinate_measure(&col));
        ks_re.push(r.ks_real);
        ks_imag_max = ks_imag_max.max(r.ks_imag);
        lip_max = lip_max.max(r.lip_max);
    }
    ks_re.sort_by(|a, b| a.total_cmp(b));
    let ks_real_median = if n % 2 == 1 { ks_re[n / 2] } else { 0.5 * (ks_re[n / 2 - 1] + ks_re[n / 2]) };
    let entry_err = entry_error(q.v.matrix(), p)?;
    Ok(RandomQuantizationReport {
        n,
        kappa: q.kappa,
        seed: q.seed,
        epsilon_split: q.epsilon_split,
        distance,
        distance_constant: distance.value * q.kappa as f64 / TAU,
        egorov,
        ks_real_median,
        ks_real_max: *ks_re.last().unwrap(),
        ks_imag_max,
        lip_max,
        que,
        min_gap: min_phase_gap(q.spectrum.phases()),
        entry_error: entry_err,
        entry_allowance: 2.0 * distance.value,
    })
}

/// Default bin count: `max(1, floor(sqrt(K)))` with `K` the exact horizon.
pub fn default_kappa(map: &PiecewiseLinearMap, n: usize) -> Result<usize> {
    let k = if map.is_doubling() { crate::interval_map::floor_log2(n) } else { map.k_tilde(n)? };
    Ok(((k as f64).sqrt().floor() as usize).max(1))
}

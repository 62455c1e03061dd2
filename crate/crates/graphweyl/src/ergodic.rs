//! Quantized observables, Egorov defects and quantum variance.
//!
//! `O_n(h)` is the diagonal matrix of cell averages `n * int_{E_x} h`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval_map::{q_to_f64, PiecewiseLinearMap};
use crate::linalg::{power_iteration_norm, sparse_norm, zero, NormEstimate, SparseComplex};
use crate::quantize::ComplexUnitary;
use crate::spectral::{ArcWindow, SpectralData};
use crate::{C64, Q, TAU};

/// A real function on `[0,1]` with known integrals and Lipschitz bounds.
#[derive(Clone)]
pub enum Func {
    Const(f64),
    /// `sum_k c[k] x^k`
    Poly(Vec<f64>),
    /// `cos(2 pi k x)`
    Cos(u32),
    /// `sin(2 pi k x)`
    Sin(u32),
    /// Linear interpolation through sorted knots `(x, y)` spanning `[0,1]`.
    PiecewiseLinear(Vec<(f64, f64)>),
    /// `h o S^t`
    Compose(Box<Func>, PiecewiseLinearMap, usize),
    /// `sum w_i f_i`
    Sum(Vec<(f64, Func)>),
    /// Pointwise product; integrated by quadrature.
    Product(Box<Func>, Box<Func>),
    /// User function with a global Lipschitz constant; integrated by quadrature.
    Custom { f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, lip: f64, name: String },
}

impl fmt::Debug for Func {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Func::Const(c) => write!(f, "{c}"),
            Func::Poly(c) => write!(f, "poly{c:?}"),
            Func::Cos(k) => write!(f, "cos(2pi {k} x)"),
            Func::Sin(k) => write!(f, "sin(2pi {k} x)"),
            Func::PiecewiseLinear(k) => write!(f, "pwl{k:?}"),
            Func::Compose(h, _, t) => write!(f, "({h:?}) o S^{t}"),
            Func::Sum(t) => write!(f, "sum{t:?}"),
            Func::Product(a, b) => write!(f, "({a:?})*({b:?})"),
            Func::Custom { name, .. } => write!(f, "{name}"),
        }
    }
}

/// Serializable description of a built-in observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FuncSpec {
    Const { c: f64 },
    X,
    X2,
    Poly { coeffs: Vec<f64> },
    Cos { k: u32 },
    Sin { k: u32 },
    PiecewiseLinear { knots: Vec<(f64, f64)> },
}

impl FuncSpec {
    pub fn to_func(&self) -> Func {
        match self {
            FuncSpec::Const { c } => Func::Const(*c),
            FuncSpec::X => Func::Poly(vec![0.0, 1.0]),
            FuncSpec::X2 => Func::Poly(vec![0.0, 0.0, 1.0]),
            FuncSpec::Poly { coeffs } => Func::Poly(coeffs.clone()),
            FuncSpec::Cos { k } => Func::Cos(*k),
            FuncSpec::Sin { k } => Func::Sin(*k),
            FuncSpec::PiecewiseLinear { knots } => Func::PiecewiseLinear(knots.clone()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            FuncSpec::Const { c } => format!("const({c})"),
            FuncSpec::X => "x".into(),
            FuncSpec::X2 => "x^2".into(),
            FuncSpec::Poly { coeffs } => format!("poly{coeffs:?}"),
            FuncSpec::Cos { k } => format!("cos(2pi*{k}x)"),
            FuncSpec::Sin { k } => format!("sin(2pi*{k}x)"),
            FuncSpec::PiecewiseLinear { .. } => "piecewise_linear".into(),
        }
    }
}

/// Largest `|sin(w x + p)|` for `x` in `[a, b]`.
fn max_abs_sin(w: f64, p: f64, a: f64, b: f64) -> f64 {
    let (u, v) = (w * a + p, w * b + p);
    let (lo, hi) = if u < v { (u, v) } else { (v, u) };
    // Peaks at pi/2 + m pi.
    let m = ((lo - std::f64::consts::FRAC_PI_2) / std::f64::consts::PI).ceil();
    if std::f64::consts::FRAC_PI_2 + m * std::f64::consts::PI <= hi {
        1.0
    } else {
        u.sin().abs().max(v.sin().abs())
    }
}

fn cell_f64(q: Q) -> f64 {
    q_to_f64(q)
}

impl Func {
    pub fn x() -> Func {
        Func::Poly(vec![0.0, 1.0])
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Func::Const(c) => *c,
            Func::Poly(c) => c.iter().rev().fold(0.0, |acc, k| acc * x + k),
            Func::Cos(k) => (TAU * *k as f64 * x).cos(),
            Func::Sin(k) => (TAU * *k as f64 * x).sin(),
            Func::PiecewiseLinear(knots) => pwl_eval(knots, x),
            Func::Compose(h, map, t) => {
                let mut y = x;
                for _ in 0..*t {
                    y = map_eval_f64(map, y);
                }
                h.eval(y)
            }
            Func::Sum(terms) => terms.iter().map(|(w, f)| w * f.eval(x)).sum(),
            Func::Product(a, b) => a.eval(x) * b.eval(x),
            Func::Custom { f, .. } => f(x),
        }
    }

    /// `int_a^b h` (signed when `a > b`).
    pub fn integral(&self, a: Q, b: Q) -> Result<f64> {
        if a > b {
            return self.integral(b, a).map(|v| -v);
        }
        let (fa, fb) = (cell_f64(a), cell_f64(b));
        Ok(match self {
            Func::Const(c) => c * (fb - fa),
            Func::Poly(c) => c
                .iter()
                .enumerate()
                .map(|(k, ck)| ck * (fb.powi(k as i32 + 1) - fa.powi(k as i32 + 1)) / (k as f64 + 1.0))
                .sum(),
            Func::Cos(k) => {
                if *k == 0 {
                    fb - fa
                } else {
                    let w = std::f64::consts::PI * *k as f64;
                    2.0 * (w * (fa + fb)).cos() * (w * (fb - fa)).sin() / (2.0 * w)
                }
            }
            Func::Sin(k) => {
                if *k == 0 {
                    0.0
                } else {
                    let w = std::f64::consts::PI * *k as f64;
                    2.0 * (w * (fa + fb)).sin() * (w * (fb - fa)).sin() / (2.0 * w)
                }
            }
            Func::PiecewiseLinear(knots) => pwl_integral(knots, fa, fb),
            Func::Compose(h, map, t) => {
                let mut s = 0.0;
                for (p0, p1, seg) in map.affine_pieces(a, b, *t) {
                    let (y0, y1) = (seg.apply(p0), seg.apply(p1));
                    s += h.integral(y0, y1)? / seg.slope as f64;
                }
                s
            }
            Func::Sum(terms) => {
                let mut s = 0.0;
                for (w, f) in terms {
                    s += w * f.integral(a, b)?;
                }
                s
            }
            Func::Product(..) | Func::Custom { .. } => adaptive_simpson(&|x| self.eval(x), fa, fb, 1e-13 * (fb - fa))?,
        })
    }

    /// Lipschitz bound of `h` on `[a, b]`.
    pub fn lip_on(&self, a: Q, b: Q) -> f64 {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        let (fa, fb) = (cell_f64(a), cell_f64(b));
        match self {
            Func::Const(_) => 0.0,
            Func::Poly(c) => {
                let r = fa.abs().max(fb.abs());
                c.iter().enumerate().skip(1).map(|(k, ck)| (k as f64 * ck).abs() * r.powi(k as i32 - 1)).sum()
            }
            Func::Cos(k) => {
                let w = TAU * *k as f64;
                w * max_abs_sin(w, 0.0, fa, fb)
            }
            Func::Sin(k) => {
                let w = TAU * *k as f64;
                w * max_abs_sin(w, std::f64::consts::FRAC_PI_2, fa, fb)
            }
            Func::PiecewiseLinear(knots) => knots
                .windows(2)
                .filter(|w| w[1].0 > fa && w[0].0 < fb)
                .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
                .fold(0.0, f64::max),
            Func::Compose(h, map, t) => map
                .affine_pieces(a, b, *t)
                .into_iter()
                .map(|(p0, p1, seg)| seg.slope.abs() as f64 * h.lip_on(seg.apply(p0), seg.apply(p1)))
                .fold(0.0, f64::max),
            Func::Sum(terms) => terms.iter().map(|(w, f)| w.abs() * f.lip_on(a, b)).sum(),
            Func::Product(f, g) => {
                let sup = |h: &Func| h.sup_bound();
                f.lip_on(a, b) * sup(g) + g.lip_on(a, b) * sup(f)
            }
            Func::Custom { lip, .. } => *lip,
        }
    }

    /// Global Lipschitz bound on `[0,1]`.
    pub fn lip(&self) -> f64 {
        self.lip_on(Q::from(0), Q::from(1))
    }

    /// Upper bound on `sup |h|` over `[0,1]`.
    pub fn sup_bound(&self) -> f64 {
        match self {
            Func::Const(c) => c.abs(),
            Func::Poly(c) => c.iter().map(|v| v.abs()).sum(),
            Func::Cos(_) | Func::Sin(_) => 1.0,
            Func::PiecewiseLinear(k) => k.iter().map(|p| p.1.abs()).fold(0.0, f64::max),
            Func::Compose(h, _, _) => h.sup_bound(),
            Func::Sum(t) => t.iter().map(|(w, f)| w.abs() * f.sup_bound()).sum(),
            Func::Product(f, g) => f.sup_bound() * g.sup_bound(),
            Func::Custom { f, lip, .. } => f(0.0).abs() + lip,
        }
    }

    pub fn compose(&self, map: &PiecewiseLinearMap, t: usize) -> Func {
        if t == 0 {
            self.clone()
        } else {
            Func::Compose(Box::new(self.clone()), map.clone(), t)
        }
    }
}

/// Floating-point `S(x)` with the right-limit convention.
fn map_eval_f64(map: &PiecewiseLinearMap, x: f64) -> f64 {
    let m = map.m0();
    let j = ((x * m as f64).floor() as i64).clamp(0, m as i64 - 1) as usize;
    let seg = map.segments()[j];
    seg.slope as f64 * x + q_to_f64(seg.intercept)
}

fn pwl_eval(knots: &[(f64, f64)], x: f64) -> f64 {
    for w in knots.windows(2) {
        if x <= w[1].0 {
            let t = (x - w[0].0) / (w[1].0 - w[0].0);
            return w[0].1 + t * (w[1].1 - w[0].1);
        }
    }
    knots.last().map(|k| k.1).unwrap_or(0.0)
}

fn pwl_integral(knots: &[(f64, f64)], a: f64, b: f64) -> f64 {
    let mut s = 0.0;
    for w in knots.windows(2) {
        let lo = a.max(w[0].0);
        let hi = b.min(w[1].0);
        if hi > lo {
            s += 0.5 * (hi - lo) * (pwl_eval(knots, lo) + pwl_eval(knots, hi));
        }
    }
    s
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Option<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Some(left + right + delta / 15.0);
        }
        if depth == 0 {
            return None;
        }
        Some(rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)? + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40).ok_or(Error::QuadratureFailure(a, b))
}

/// Diagonal observable `O_n(h)`.
#[derive(Debug, Clone)]
pub struct Observable {
    pub n: usize,
    pub diagonal: Vec<f64>,
    pub source: String,
    pub lip_constant: f64,
    pub sup_norm: f64,
    /// `int_0^1 h`
    pub integral: f64,
}

impl Observable {
    /// `(1/n) tr O_n(h)`.
    pub fn normalized_trace(&self) -> f64 {
        self.diagonal.iter().sum::<f64>() / self.n as f64
    }
}

pub fn observable(h: &Func, n: usize) -> Result<Observable> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let nn = n as i64;
    let mut diagonal = Vec::with_capacity(n);
    for x in 0..nn {
        diagonal.push(n as f64 * h.integral(Q::new(x, nn), Q::new(x + 1, nn))?);
    }
    let sup_norm = diagonal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(Observable {
        n,
        diagonal,
        source: format!("{h:?}"),
        lip_constant: h.lip(),
        sup_norm,
        integral: h.integral(Q::from(0), Q::from(1))?,
    })
}

/// `[h]_T = (1/T) sum_{t<T} h o S^t`.
pub fn birkhoff_average(map: &PiecewiseLinearMap, h: &Func, t_max: usize) -> Result<Func> {
    if t_max == 0 {
        return Err(Error::InvalidArgument("T must be at least 1".into()));
    }
    if t_max == 1 {
        return Ok(h.clone());
    }
    let w = 1.0 / t_max as f64;
    Ok(Func::Sum((0..t_max).map(|t| (w, h.compose(map, t))).collect()))
}

#[derive(Debug, Clone, Serialize)]
pub struct EgorovReport {
    pub n: usize,
    pub t: usize,
    pub defect: f64,
    pub bound: f64,
    /// Lipschitz constant entering the bound.
    pub lip: f64,
    pub norm: NormEstimate,
}

impl EgorovReport {
    pub fn within_bound(&self) -> bool {
        self.defect <= self.bound * (1.0 + 1e-12) + 1e-14
    }
}

fn check_dimension(map: &PiecewiseLinearMap, n: usize) -> Result<()> {
    let modulus = map.m0() * map.l0();
    if n == 0 || n % modulus != 0 {
        return Err(Error::BadDimension { n, modulus });
    }
    Ok(())
}

fn sparse_power(u: &SparseComplex, t: usize) -> SparseComplex {
    let mut p = SparseComplex::identity(u.nrows);
    for _ in 0..t {
        p = p.mul(u, 0.0);
    }
    p
}

/// `||U^t O U^{-t} - O'||` for sparse `U`.
fn conjugation_defect_sparse(ut: &SparseComplex, o: &[f64], o2: &[f64]) -> Result<NormEstimate> {
    let d = ut.scale_cols(o).mul(&ut.adjoint(), 0.0).sub_diag(o2);
    sparse_norm(&d, 512, 1e-8, 10_000)
}

/// `||U O U^* - O'||` for dense `U` by power iteration.
pub fn conjugation_defect_dense(u: &ComplexUnitary, o: &[f64], o2: &[f64], tol: f64, max_iter: usize) -> NormEstimate {
    let m = u.matrix();
    let n = u.n();
    let apply = |x: &[C64], y: &mut [C64]| {
        // y = U O U^* x - O' x
        let mut t = vec![zero(); n];
        for j in 0..n {
            let col = m.col(j);
            let mut s = zero();
            for i in 0..n {
                s += col[i].conj() * x[i];
            }
            t[j] = s * o[j];
        }
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = -x[i] * o2[i];
        }
        for j in 0..n {
            let col = m.col(j);
            let tj = t[j];
            for i in 0..n {
                y[i] += col[i] * tj;
            }
        }
    };
    // The defect operator is Hermitian, so it is its own adjoint.
    power_iteration_norm(n, apply, apply, tol, max_iter, 17)
}

/// Measure the one-step Egorov defect and its bound
/// `(1/2) L0^2 M0 max_x Lip(h on S(E_x)) / n` without asserting.
pub fn egorov_measure(u: &ComplexUnitary, map: &PiecewiseLinearMap, h: &Func, n: usize) -> Result<EgorovReport> {
    check_dimension(map, n)?;
    if u.n() != n {
        return Err(Error::DimensionMismatch(u.n(), n));
    }
    let o = observable(h, n)?.diagonal;
    let o2 = observable(&h.compose(map, 1), n)?.diagonal;
    let norm = conjugation_defect_sparse(&u.to_sparse(), &o, &o2)?;
    let lip = (1..=n)
        .map(|x| {
            let (lo, hi, _) = map.cell_image(n, x);
            h.lip_on(lo, hi)
        })
        .fold(0.0, f64::max);
    let c = map.constants();
    let bound = 0.5 * (c.l0 * c.l0 * c.m0) as f64 * lip / n as f64;
    Ok(EgorovReport { n, t: 1, defect: norm.value, bound, lip, norm })
}

/// One-step Egorov defect; fails with `BoundViolated` above the bound.
pub fn egorov_defect(u: &ComplexUnitary, map: &PiecewiseLinearMap, h: &Func, n: usize) -> Result<EgorovReport> {
    let r = egorov_measure(u, map, h, n)?;
    if !r.within_bound() {
        return Err(Error::BoundViolated(format!("Egorov defect {:e} > {:e}", r.defect, r.bound)));
    }
    Ok(r)
}

/// `||U^t O_n(h) U^{-t} - O_n(h o S^t)||` against the geometric-sum bound
/// `sum_{r<=t} (L0^2 M0/2) Lip(h) L0^{r-1} / n`.
pub fn egorov_iterated(u: &ComplexUnitary, map: &PiecewiseLinearMap, h: &Func, n: usize, t: usize) -> Result<EgorovReport> {
    check_dimension(map, n)?;
    let limit = map.k_tilde(n)? + 1;
    if t > limit {
        return Err(Error::PowerBeyondEhrenfest { ell: t, limit });
    }
    let lip = h.lip();
    let c = map.constants();
    let bound: f64 = (1..=t)
        .map(|r| 0.5 * (c.l0 * c.l0 * c.m0) as f64 * lip * (c.l0 as f64).powi(r as i32 - 1) / n as f64)
        .sum();
    if t == 0 {
        let norm = NormEstimate { value: 0.0, iterations: 0, converged: true };
        return Ok(EgorovReport { n, t, defect: 0.0, bound, lip, norm });
    }
    let o = observable(h, n)?.diagonal;
    let o2 = observable(&h.compose(map, t), n)?.diagonal;
    let ut = sparse_power(&u.to_sparse(), t);
    let norm = conjugation_defect_sparse(&ut, &o, &o2)?;
    let r = EgorovReport { n, t, defect: norm.value, bound, lip, norm };
    if !r.within_bound() {
        return Err(Error::BoundViolated(format!("iterated Egorov defect {:e} > {:e}", r.defect, r.bound)));
    }
    Ok(r)
}

/// `<psi_j, O psi_j>` for every eigenvector.
pub fn matrix_elements(spec: &SpectralData, obs: &Observable) -> Vec<f64> {
    let v = spec.vectors();
    (0..spec.n())
        .map(|j| {
            let col = v.col(j);
            (0..obs.n).map(|x| obs.diagonal[x] * col[x].norm_sqr()).sum()
        })
        .collect()
}

/// Mean of `(<psi_j, O psi_j> - int h)^2` over eigenphases in the arc.
pub fn quantum_variance_bin(spec: &SpectralData, obs: &Observable, arc: &ArcWindow) -> Result<f64> {
    if spec.n() != obs.n {
        return Err(Error::DimensionMismatch(spec.n(), obs.n));
    }
    let v = spec.vectors();
    let idx: Vec<usize> = (0..spec.n()).filter(|&j| arc.contains(spec.phases()[j])).collect();
    if idx.is_empty() {
        return Err(Error::EmptyBin);
    }
    let s: f64 = idx
        .iter()
        .map(|&j| {
            let col = v.col(j);
            let m: f64 = (0..obs.n).map(|x| obs.diagonal[x] * col[x].norm_sqr()).sum();
            (m - obs.integral).powi(2)
        })
        .sum();
    Ok(s / idx.len() as f64)
}

/// `max_x |O(ab)_x - O(a)_x O(b)_x|` and its bound
/// `max_x Lip(a on E_x) Lip(b on E_x) / n^2`.
pub fn multiplication_defect(a: &Func, b: &Func, n: usize) -> Result<(f64, f64)> {
    let prod = Func::Product(Box::new(a.clone()), Box::new(b.clone()));
    let (oa, ob, oab) = (observable(a, n)?, observable(b, n)?, observable(&prod, n)?);
    let defect = (0..n).map(|x| (oab.diagonal[x] - oa.diagonal[x] * ob.diagonal[x]).abs()).fold(0.0, f64::max);
    let nn = n as i64;
    let bound = (0..nn)
        .map(|x| {
            let (lo, hi) = (Q::new(x, nn), Q::new(x + 1, nn));
            a.lip_on(lo, hi) * b.lip_on(lo, hi)
        })
        .fold(0.0, f64::max)
        / (n * n) as f64;
    Ok((defect, bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval_map::{doubling, four_legs};
    use crate::quantize::{block_phase_search_quantize, doubling_unitary, PhaseSearch};
    use crate::markov::build_markov;
    use proptest::prelude::*;

    #[test]
    fn observable_examples() {
        let o = observable(&Func::Const(2.5), 6).unwrap();
        assert!(o.diagonal.iter().all(|&v| (v - 2.5).abs() < 1e-15));
        let o = observable(&Func::x(), 4).unwrap();
        for (v, w) in o.diagonal.iter().zip([0.125, 0.375, 0.625, 0.875]) {
            assert!((v - w).abs() < 1e-15);
        }
        let n = 8;
        let o = observable(&Func::Cos(1), n).unwrap();
        for x in 0..n {
            let want = (n as f64 / TAU) * ((TAU * (x + 1) as f64 / n as f64).sin() - (TAU * x as f64 / n as f64).sin());
            assert!((o.diagonal[x] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn trace_equals_integral() {
        let map = four_legs();
        let funcs = [
            Func::x(),
            Func::Poly(vec![0.0, 0.0, 1.0]),
            Func::Cos(3),
            Func::Sin(2),
            Func::PiecewiseLinear(vec![(0.0, 0.0), (0.3, 1.0), (1.0, -0.5)]),
            Func::Cos(1).compose(&map, 2),
            Func::Custom { f: Arc::new(|x: f64| (x * 3.0).exp()), lip: 3.0 * 3f64.exp(), name: "exp3x".into() },
        ];
        for h in &funcs {
            for n in [16, 64, 256] {
                let o = observable(h, n).unwrap();
                assert!((o.normalized_trace() - o.integral).abs() < 1e-10, "{h:?} n={n}");
            }
        }
    }

    #[test]
    fn composition_against_quadrature() {
        let map = four_legs();
        let h = Func::Cos(1).compose(&map, 2);
        // Midpoint rule; the composition jumps, so no high-order quadrature.
        let m = 200_000;
        let q: f64 = (0..m).map(|k| h.eval(0.1 + 0.1 * (k as f64 + 0.5) / m as f64)).sum::<f64>() * 0.1 / m as f64;
        let exact = h.integral(Q::new(1, 10), Q::new(2, 10)).unwrap();
        assert!((q - exact).abs() < 1e-6, "{q} {exact}");
    }

    #[test]
    fn birkhoff_examples() {
        let d = doubling();
        let h = Func::Cos(1);
        let b2 = birkhoff_average(&d, &h, 2).unwrap();
        for x in [0.1, 0.37, 0.8] {
            let want = 0.5 * ((TAU * x).cos() + (2.0 * TAU * x).cos());
            assert!((b2.eval(x) - want).abs() < 1e-12);
        }
        let b5 = birkhoff_average(&d, &Func::x(), 5).unwrap();
        assert!((b5.integral(Q::from(0), Q::from(1)).unwrap() - 0.5).abs() < 1e-14);
        let b1 = birkhoff_average(&d, &Func::x(), 1).unwrap();
        assert_eq!(b1.eval(0.3), 0.3);
        // Observable of the average equals the average of observables.
        let n = 64;
        let ob = observable(&b5, n).unwrap();
        let parts: Vec<Observable> = (0..5).map(|t| observable(&Func::x().compose(&d, t), n).unwrap()).collect();
        for x in 0..n {
            let avg: f64 = parts.iter().map(|p| p.diagonal[x]).sum::<f64>() / 5.0;
            assert!((ob.diagonal[x] - avg).abs() < 1e-10);
        }
    }

    #[test]
    fn egorov_doubling() {
        let d = doubling();
        for n in [64, 256, 1024] {
            let u = doubling_unitary(n).unwrap();
            let r = egorov_defect(&u, &d, &Func::Const(1.0), n).unwrap();
            assert!(r.defect < 1e-14);
            // For h = x the defect is exactly 1/(2n).
            let r = egorov_defect(&u, &d, &Func::x(), n).unwrap();
            assert!((r.defect - 0.5 / n as f64).abs() < 1e-12, "{r:?}");
            let r = egorov_defect(&u, &d, &Func::Cos(1), n).unwrap();
            assert!(r.defect <= 0.5 * 4.0 * 2.0 * TAU / n as f64);
        }
        assert!(matches!(
            egorov_defect(&doubling_unitary(6).unwrap(), &d, &Func::x(), 6),
            Err(Error::BadDimension { .. })
        ));
    }

    #[test]
    fn egorov_four_legs() {
        let f = four_legs();
        let n = 256;
        let u = block_phase_search_quantize(&build_markov(&f, n).unwrap(), PhaseSearch::default()).unwrap();
        let r = egorov_defect(&u, &f, &Func::x(), n).unwrap();
        assert!(r.defect <= 0.5 * 16.0 * 4.0 / n as f64);
    }

    #[test]
    fn egorov_iterated_cases() {
        let d = doubling();
        let n = 4096;
        let u = doubling_unitary(n).unwrap();
        let r0 = egorov_iterated(&u, &d, &Func::Sin(1), n, 0).unwrap();
        assert_eq!(r0.defect, 0.0);
        let r1 = egorov_iterated(&u, &d, &Func::Sin(1), n, 1).unwrap();
        let e1 = egorov_defect(&u, &d, &Func::Sin(1), n).unwrap();
        assert!((r1.defect - e1.defect).abs() < 1e-14);
        let r3 = egorov_iterated(&u, &d, &Func::Sin(1), n, 3).unwrap();
        assert!(r3.defect <= r3.bound);
        let small = doubling_unitary(16).unwrap();
        assert!(matches!(egorov_iterated(&small, &d, &Func::x(), 16, 5), Err(Error::PowerBeyondEhrenfest { .. })));
    }

    #[test]
    fn dense_and_sparse_defects_agree() {
        let d = doubling();
        let n = 64;
        let u = doubling_unitary(n).unwrap();
        let o = observable(&Func::Cos(1), n).unwrap().diagonal;
        let o2 = observable(&Func::Cos(1).compose(&d, 1), n).unwrap().diagonal;
        let a = conjugation_defect_dense(&u, &o, &o2, 1e-12, 10_000);
        let b = egorov_measure(&u, &d, &Func::Cos(1), n).unwrap();
        assert!((a.value - b.defect).abs() < 1e-8, "{a:?} {b:?}");
    }

    #[test]
    fn quantum_variance_basics() {
        let n = 64;
        let spec = crate::spectral::eigendecompose(&doubling_unitary(n).unwrap()).unwrap();
        let c = observable(&Func::Const(3.0), n).unwrap();
        assert!(quantum_variance_bin(&spec, &c, &ArcWindow::full()).unwrap() < 1e-24);
        let o = observable(&Func::Cos(1), n).unwrap();
        let gap = ArcWindow::new(TAU / 48.0, 0.01).unwrap();
        assert!(matches!(quantum_variance_bin(&spec, &o, &gap), Err(Error::EmptyBin)));
        // A bin holding one eigenphase gives that single squared deviation.
        let t = spec.phases()[0];
        let p = spec.phases().iter().copied().find(|&p| p > t + 1e-6).unwrap();
        let _ = p;
        let elems = matrix_elements(&spec, &o);
        let one = ArcWindow::new(t, 1e-9).unwrap();
        let want: f64 = spec.clusters()[0].iter().map(|&j| elems[j].powi(2)).sum::<f64>() / spec.clusters()[0].len() as f64;
        assert!((quantum_variance_bin(&spec, &o, &one).unwrap() - want).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn multiplication_defect_bounded(k1 in 1u32..4, k2 in 1u32..4, n in 8usize..200) {
            let pairs = [(Func::Cos(k1), Func::Sin(k2)), (Func::x(), Func::Cos(k1)), (Func::Poly(vec![0.0, 0.0, 1.0]), Func::Sin(k2))];
            for (a, b) in pairs.iter() {
                let (d, bound) = multiplication_defect(a, b, n).unwrap();
                prop_assert!(d <= bound + 1e-13, "{:?} {:?} {} {}", a, b, d, bound);
            }
        }

        #[test]
        fn egorov_decays_with_n(k in 1u32..3) {
            let d = doubling();
            let h = Func::Cos(k);
            let mut prev = f64::INFINITY;
            for n in [64usize, 128, 256, 512] {
                let r = egorov_defect(&doubling_unitary(n).unwrap(), &d, &h, n).unwrap();
                prop_assert!(r.defect <= prev / 1.6 || prev.is_infinite());
                prev = r.defect;
            }
        }
    }
}

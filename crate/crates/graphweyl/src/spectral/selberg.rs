//! Trigonometric majorants and minorants of arc indicators.
//!
//! For an arc `[a, b)` with `alpha = a/2pi`, `beta = b/2pi` the indicator on
//! `R/Z` is `beta - alpha + psi(alpha - x) - psi(beta - x)` with the sawtooth
//! `psi(x) = x - floor(x) - 1/2`. Vaaler's polynomial `V_N` approximates
//! `psi` with error bounded by the Fejer-type kernel
//! `Delta_N = (1/(2N+2)) sum_{|m|<=N} (1 - |m|/(N+1)) e(mx)`. Adding or
//! subtracting the kernel at both jumps gives polynomials of degree `N`
//! below and above the indicator whose integrals differ from `|I|/2pi` by
//! exactly `1/(N+1)`. Here `N + 1 = floor(delta)`.

use faer::{Mat, MatRef};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::SparseComplex;
use crate::spectral::ArcWindow;
use crate::{C64, TAU};

/// Coefficients `c_m`, `m = -N..=N`, of `sum c_m e^{imt}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrigPoly {
    coeffs: Vec<C64>,
}

impl TrigPoly {
    /// `coeffs[k]` is the coefficient of `e^{i(k-N)t}`; length must be odd.
    pub fn new(coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() % 2 != 1 {
            return Err(Error::InvalidArgument("coefficient list must have odd length".into()));
        }
        Ok(TrigPoly { coeffs })
    }

    pub fn constant(c: f64) -> Self {
        TrigPoly { coeffs: vec![C64::new(c, 0.0)] }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() / 2
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeff(&self, m: i64) -> C64 {
        let d = self.degree() as i64;
        if m.abs() > d {
            C64::new(0.0, 0.0)
        } else {
            self.coeffs[(m + d) as usize]
        }
    }

    pub fn evaluate(&self, t: f64) -> C64 {
        evaluate_trig_poly(&self.coeffs, t)
    }

    /// Maximum of `|c_m - conj(c_{-m})|`; zero for real-valued polynomials.
    pub fn hermitian_defect(&self) -> f64 {
        let d = self.degree() as i64;
        (-d..=d).map(|m| (self.coeff(m) - self.coeff(-m).conj()).norm()).fold(0.0, f64::max)
    }
}

/// `sum_k coeffs[k] e^{i(k-N)t}` with `N = (len-1)/2`.
pub fn evaluate_trig_poly(coeffs: &[C64], t: f64) -> C64 {
    let d = (coeffs.len() / 2) as i64;
    coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| c * C64::from_polar(1.0, (k as i64 - d) as f64 * t))
        .sum()
}

/// Fejer kernel `sum_{|m|<=N} (1 - |m|/(N+1)) e^{imt}`.
pub fn fejer(n: usize) -> TrigPoly {
    let d = n as i64;
    TrigPoly {
        coeffs: (-d..=d).map(|m| C64::new(1.0 - m.abs() as f64 / (d + 1) as f64, 0.0)).collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SelbergPolyPair {
    pub delta: f64,
    pub arc: ArcWindow,
    pub minus: TrigPoly,
    pub plus: TrigPoly,
}

impl SelbergPolyPair {
    /// Mass excess/deficit `2pi/floor(delta)` actually achieved.
    pub fn mass_offset(&self) -> f64 {
        TAU / self.delta.floor()
    }
}

fn vaaler_f(u: f64) -> f64 {
    let pu = std::f64::consts::PI * u;
    pu * (1.0 - u) * pu.cos() / pu.sin() + u
}

/// Minorant and majorant of the arc indicator with degree `floor(delta) - 1`.
pub fn selberg_polynomials(arc: &ArcWindow, delta: f64) -> Result<SelbergPolyPair> {
    if !(delta >= 1.0) {
        return Err(Error::DegreeTooSmall(delta));
    }
    let np1 = delta.floor() as i64;
    let n = np1 - 1;
    let alpha = arc.start() / TAU;
    let beta = arc.end() / TAU;
    let v = |m: i64| -> C64 {
        if m == 0 {
            C64::new(0.0, 0.0)
        } else {
            C64::new(0.0, vaaler_f(m.abs() as f64 / np1 as f64) / (TAU * m as f64))
        }
    };
    let d = |m: i64| (1.0 - m.abs() as f64 / np1 as f64) / (2.0 * np1 as f64);
    let e = |x: f64| C64::from_polar(1.0, TAU * x);
    let build = |sign: f64| -> TrigPoly {
        let b = |m: i64| v(m) + sign * d(m);
        let coeffs = (-n..=n)
            .map(|m| {
                let base = if m == 0 { beta - alpha } else { 0.0 };
                C64::new(base, 0.0) + b(m) * e(-(m as f64) * beta) + b(-m) * e(-(m as f64) * alpha)
            })
            .collect();
        TrigPoly { coeffs }
    };
    Ok(SelbergPolyPair { delta, arc: *arc, minus: build(-1.0), plus: build(1.0) })
}

/// Real diagonal of `F(U) = sum_m c_m U^m` for a sparse unitary `U`,
/// using `U^{-m} = (U^m)^*`.
pub fn poly_diagonal_sparse(u: &SparseComplex, poly: &TrigPoly) -> Vec<f64> {
    let n = u.nrows;
    let deg = poly.degree();
    let mut out: Vec<f64> = vec![poly.coeff(0).re; n];
    let chunk = 256;
    let mut start = 0;
    while start < n {
        let w = chunk.min(n - start);
        let mut v = Mat::<C64>::from_fn(n, w, |i, k| if i == start + k { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
        for m in 1..=deg {
            v = u.mul_dense(v.as_ref());
            let (cp, cm) = (poly.coeff(m as i64), poly.coeff(-(m as i64)));
            for k in 0..w {
                let z = v[(start + k, k)];
                out[start + k] += (cp * z + cm * z.conj()).re;
            }
        }
        start += w;
    }
    out
}

/// Real diagonal of `F(U)` for a dense unitary.
pub fn poly_diagonal_dense(u: MatRef<'_, C64>, poly: &TrigPoly) -> Vec<f64> {
    let n = u.nrows();
    let mut out: Vec<f64> = vec![poly.coeff(0).re; n];
    let mut p = crate::linalg::identity(n);
    for m in 1..=poly.degree() {
        p = u * &p;
        let (cp, cm) = (poly.coeff(m as i64), poly.coeff(-(m as i64)));
        for (x, o) in out.iter_mut().enumerate() {
            let z = p[(x, x)];
            *o += (cp * z + cm * z.conj()).re;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn indicator(arc: &ArcWindow, t: f64) -> f64 {
        if arc.contains(t) {
            1.0
        } else {
            0.0
        }
    }

    #[test]
    fn constant_and_fejer() {
        let c = TrigPoly::constant(0.3);
        assert!((evaluate_trig_poly(c.coeffs(), 1.7).re - 0.3).abs() < 1e-15);
        for n in [0usize, 1, 5, 17] {
            assert!((fejer(n).evaluate(0.0).re - (n + 1) as f64).abs() < 1e-12);
        }
        // Closed form away from 0: sin^2((N+1)t/2) / ((N+1) sin^2(t/2)).
        let (n, t) = (7usize, 0.9f64);
        let want = ((n as f64 + 1.0) * t / 2.0).sin().powi(2) / ((n as f64 + 1.0) * (t / 2.0).sin().powi(2));
        assert!((fejer(n).evaluate(t).re - want).abs() < 1e-12);
    }

    fn check_pair(width: f64, delta: f64, center: f64) {
        let arc = ArcWindow::new(center, width).unwrap();
        let pair = selberg_polynomials(&arc, delta).unwrap();
        assert_eq!(pair.plus.degree(), delta as usize - 1);
        assert!((pair.plus.coeff(0).re - (width + TAU / delta) / TAU).abs() < 1e-14);
        assert!((pair.minus.coeff(0).re - (width - TAU / delta) / TAU).abs() < 1e-14);
        let bound = (width + TAU / delta) / TAU + 1e-14;
        for m in -(pair.plus.degree() as i64)..=pair.plus.degree() as i64 {
            assert!(pair.plus.coeff(m).norm() <= bound && pair.minus.coeff(m).norm() <= bound);
        }
        assert!(pair.plus.hermitian_defect() < 1e-15);
        let grid = 10_000;
        let (mut mp, mut mm) = (0.0, 0.0);
        for k in 0..grid {
            let t = TAU * k as f64 / grid as f64;
            let gp = pair.plus.evaluate(t);
            let gm = pair.minus.evaluate(t);
            assert!(gp.im.abs() < 1e-10 && gm.im.abs() < 1e-10);
            mp += gp.re;
            mm += gm.re;
            if arc.near_boundary(t, 1e-6) {
                continue;
            }
            let chi = indicator(&arc, t);
            assert!(gm.re <= chi + 1e-12 && chi <= gp.re + 1e-12, "t={t} {} {chi} {}", gm.re, gp.re);
        }
        let (mp, mm) = (mp * TAU / grid as f64, mm * TAU / grid as f64);
        assert!((mp - width - TAU / delta).abs() < 1e-6);
        assert!((width - mm - TAU / delta).abs() < 1e-6);
    }

    #[test]
    fn sandwich_and_mass() {
        check_pair(PI / 2.0, 8.0, 1.0);
        check_pair(PI / 8.0, 64.0, 5.9);
        check_pair(1.3, 3.0, 0.2);
        check_pair(TAU, 5.0, 0.0);
    }

    #[test]
    fn degree_too_small() {
        let arc = ArcWindow::new(0.0, 1.0).unwrap();
        assert!(matches!(selberg_polynomials(&arc, 0.5), Err(Error::DegreeTooSmall(_))));
        let p = selberg_polynomials(&arc, 1.0).unwrap();
        assert_eq!(p.plus.degree(), 0);
    }

    #[test]
    fn sparse_and_dense_diagonals_agree() {
        let u = crate::quantize::doubling_unitary(32).unwrap();
        let arc = ArcWindow::new(0.7, 1.1).unwrap();
        let pair = selberg_polynomials(&arc, 9.0).unwrap();
        let a = poly_diagonal_sparse(&u.to_sparse(), &pair.plus);
        let b = poly_diagonal_dense(u.matrix(), &pair.plus);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

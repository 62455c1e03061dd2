//! Piecewise-linear interval maps with integer slopes.
//!
//! A map is given by `M0` affine branches, branch `j` living on the base atom
//! `((j-1)/M0, j/M0)`. Admissible maps satisfy four conditions: every branch
//! image starts and ends on the grid `{0, 1/M0, ..., 1}`, every slope has
//! modulus at least two, and Lebesgue measure is preserved (the masses
//! `1/|slope|` of the branches covering each range atom sum to one).
//!
//! All evaluation is exact over `Ratio<i64>`.

use std::fmt;

use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Q;

/// Which one-sided limit `S` takes at a breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    #[default]
    RightLimit,
    LeftLimit,
}

/// One affine branch `x -> slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub slope: i64,
    pub intercept: Q,
}

impl Segment {
    pub fn apply(&self, x: Q) -> Q {
        x * self.slope + self.intercept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapConstants {
    pub m0: i64,
    /// Least common multiple of the slope moduli.
    pub l0: i64,
    pub s_max: i64,
}

/// A single failed admissibility condition. Atoms are 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Empty,
    SegmentCount { expected: usize, found: usize },
    NonIntegerGridImage { atom: usize, start: Q, end: Q },
    SlopeTooSmall { atom: usize, slope: i64 },
    NotMeasurePreserving { atom: usize, mass: Q },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "empty segment list"),
            Violation::SegmentCount { expected, found } => {
                write!(f, "expected {expected} segments, found {found}")
            }
            Violation::NonIntegerGridImage { atom, start, end } => write!(
                f,
                "NonIntegerGridImage: atom {atom} image ({start}, {end}) is not a grid interval in [0,1]"
            ),
            Violation::SlopeTooSmall { atom, slope } => {
                write!(f, "SlopeTooSmall: atom {atom} has slope {slope}")
            }
            Violation::NotMeasurePreserving { atom, mass } => {
                write!(f, "NotMeasurePreserving: range atom {atom} receives mass {mass}")
            }
        }
    }
}

/// A validated map. Immutable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PiecewiseLinearMap {
    m0: usize,
    segments: Vec<Segment>,
    convention: Endpoint,
    constants: MapConstants,
}

/// Check conditions (grid images, slope size, measure preservation) and
/// return the map, or every violation found.
pub fn validate_map(m0: usize, segments: &[Segment], convention: Endpoint) -> Result<PiecewiseLinearMap> {
    let mut violations = Vec::new();
    if segments.is_empty() || m0 == 0 {
        return Err(Error::InvalidMap(vec![Violation::Empty]));
    }
    if segments.len() != m0 {
        return Err(Error::InvalidMap(vec![Violation::SegmentCount {
            expected: m0,
            found: segments.len(),
        }]));
    }
    let m = m0 as i64;
    let mut mass = vec![Q::zero(); m0];
    for (j, seg) in segments.iter().enumerate() {
        let atom = j + 1;
        if seg.slope.abs() < 2 {
            violations.push(Violation::SlopeTooSmall { atom, slope: seg.slope });
        }
        if seg.slope == 0 {
            continue;
        }
        let start = seg.apply(Q::new(j as i64, m));
        let end = seg.apply(Q::new(j as i64 + 1, m));
        let (lo, hi) = if start < end { (start, end) } else { (end, start) };
        let on_grid = |v: Q| (v * m).is_integer();
        if !on_grid(lo) || !on_grid(hi) || lo < Q::zero() || hi > Q::one() {
            violations.push(Violation::NonIntegerGridImage { atom, start, end });
            continue;
        }
        let a = (lo * m).to_integer() as usize;
        let b = (hi * m).to_integer() as usize;
        for k in a..b {
            mass[k] += Q::new(1, seg.slope.abs());
        }
    }
    let grid_ok = !violations
        .iter()
        .any(|v| matches!(v, Violation::NonIntegerGridImage { .. } | Violation::SlopeTooSmall { slope: 0, .. }));
    if grid_ok {
        for (k, w) in mass.iter().enumerate() {
            if !w.is_one() {
                violations.push(Violation::NotMeasurePreserving { atom: k + 1, mass: *w });
            }
        }
    }
    if !violations.is_empty() {
        return Err(Error::InvalidMap(violations));
    }
    let l0 = segments.iter().fold(1i64, |acc, s| acc.lcm(&s.slope.abs()));
    let s_max = segments.iter().map(|s| s.slope.abs()).max().unwrap_or(0);
    Ok(PiecewiseLinearMap {
        m0,
        segments: segments.to_vec(),
        convention,
        constants: MapConstants { m0: m, l0, s_max },
    })
}

/// One branch as written in a map file: slope and the value of `S` at the
/// left end of its atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub slope: i64,
    pub image_start: String,
}

/// Map definition file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub m0: usize,
    pub segments: Vec<SegmentSpec>,
    #[serde(default)]
    pub convention: Endpoint,
}

impl MapSpec {
    pub fn build(&self) -> Result<PiecewiseLinearMap> {
        let m = self.m0 as i64;
        if m == 0 {
            return Err(Error::InvalidMap(vec![Violation::Empty]));
        }
        let mut segs = Vec::with_capacity(self.segments.len());
        for (j, s) in self.segments.iter().enumerate() {
            let start = parse_rational(&s.image_start)?;
            segs.push(Segment { slope: s.slope, intercept: start - Q::new(j as i64, m) * s.slope });
        }
        validate_map(self.m0, &segs, self.convention)
    }
}

/// Parse `"p/q"` or `"p"`.
pub fn parse_rational(s: &str) -> Result<Q> {
    s.trim()
        .parse::<Q>()
        .map_err(|e| Error::InvalidArgument(format!("bad rational {s:?}: {e}")))
}

fn from_starts(m0: usize, slopes: &[i64], starts: &[Q]) -> PiecewiseLinearMap {
    let m = m0 as i64;
    let segs: Vec<Segment> = slopes
        .iter()
        .zip(starts)
        .enumerate()
        .map(|(j, (&slope, &start))| Segment { slope, intercept: start - Q::new(j as i64, m) * slope })
        .collect();
    validate_map(m0, &segs, Endpoint::RightLimit).expect("built-in map is admissible")
}

/// `x -> 2x mod 1`.
pub fn doubling() -> PiecewiseLinearMap {
    from_starts(2, &[2, 2], &[Q::zero(), Q::zero()])
}

/// Four branches with slopes (2, 4, 4, 2). The outer branches cover the
/// lower and upper halves; the two inner branches cover all of `[0,1]`.
pub fn four_legs() -> PiecewiseLinearMap {
    let z = Q::zero();
    from_starts(4, &[2, 4, 4, 2], &[z, z, z, Q::new(1, 2)])
}

/// Direct sum of two doubling maps on `[0,1/2)` and `[1/2,1)`. Not ergodic.
pub fn doubling_pair() -> PiecewiseLinearMap {
    let z = Q::zero();
    let h = Q::new(1, 2);
    from_starts(4, &[2, 2, 2, 2], &[z, z, h, h])
}

/// Look up a built-in map.
pub fn builtin(name: &str) -> Option<PiecewiseLinearMap> {
    match name {
        "doubling" => Some(doubling()),
        "four_legs" => Some(four_legs()),
        "doubling_pair" => Some(doubling_pair()),
        _ => None,
    }
}

impl PiecewiseLinearMap {
    pub fn m0(&self) -> usize {
        self.m0
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn convention(&self) -> Endpoint {
        self.convention
    }

    pub fn constants(&self) -> MapConstants {
        self.constants
    }

    pub fn l0(&self) -> usize {
        self.constants.l0 as usize
    }

    pub fn s_max(&self) -> usize {
        self.constants.s_max as usize
    }

    pub fn with_convention(mut self, convention: Endpoint) -> Self {
        self.convention = convention;
        self
    }

    /// True for `x -> 2x mod 1`, which gets sharper power lemmas.
    pub fn is_doubling(&self) -> bool {
        self.m0 == 2 && self.segments == doubling().segments
    }

    /// 0-based branch index used at `x` under the endpoint convention.
    pub fn branch_at(&self, x: Q) -> usize {
        let t = x * self.m0 as i64;
        let fl = t.floor().to_integer();
        let idx = match self.convention {
            Endpoint::RightLimit => fl,
            Endpoint::LeftLimit => {
                if t.is_integer() {
                    fl - 1
                } else {
                    fl
                }
            }
        };
        idx.clamp(0, self.m0 as i64 - 1) as usize
    }

    /// 0-based branch whose closed atom contains the open interval `(a, b)`,
    /// or `None` if the interval straddles a breakpoint.
    pub fn branch_of_interval(&self, a: Q, b: Q) -> Option<usize> {
        let m = self.m0 as i64;
        let j = (a * m).floor().to_integer();
        if j < 0 || j >= m {
            return None;
        }
        if b <= Q::new(j + 1, m) {
            Some(j as usize)
        } else {
            None
        }
    }

    pub fn evaluate(&self, x: Q) -> Result<Q> {
        if x < Q::zero() || x > Q::one() {
            return Err(Error::InvalidArgument(format!("x = {x} outside [0,1]")));
        }
        Ok(self.segments[self.branch_at(x)].apply(x))
    }

    /// `S^ell(x)`, exact.
    pub fn evaluate_iterate(&self, x: Q, ell: usize) -> Result<Q> {
        if ell == 0 {
            return Err(Error::InvalidArgument("ell must be at least 1".into()));
        }
        let mut y = x;
        for _ in 0..ell {
            y = self.evaluate(y)?;
        }
        Ok(y)
    }

    /// Largest `k` with `L0^k | n/M0`.
    pub fn k_tilde(&self, n: usize) -> Result<usize> {
        if n == 0 || n % self.m0 != 0 {
            return Err(Error::NotMultipleOfM0 { n, m0: self.m0 });
        }
        let l0 = self.l0();
        let mut r = n / self.m0;
        let mut k = 0;
        while r % l0 == 0 {
            r /= l0;
            k += 1;
        }
        Ok(k)
    }

    /// Largest power for which the closed-form power lemmas are exact at `n`:
    /// `K~(n)+1` in general, `floor(log2 n)` for the doubling map.
    pub fn exact_horizon(&self, n: usize) -> Result<usize> {
        let kt = self.k_tilde(n)?;
        if self.is_doubling() {
            Ok((kt + 1).max(floor_log2(n)))
        } else {
            Ok(kt + 1)
        }
    }

    /// Image of the open interval `(a, b)` under `S^ell` when `S^ell` is
    /// affine on it: `(lo, hi, slope product)`. `None` if some intermediate
    /// image straddles a breakpoint.
    pub fn iterate_interval(&self, a: Q, b: Q, ell: usize) -> Option<(Q, Q, i64)> {
        let (mut lo, mut hi, mut slope) = (a, b, 1i64);
        for _ in 0..ell {
            let j = self.branch_of_interval(lo, hi)?;
            let seg = &self.segments[j];
            let (u, v) = (seg.apply(lo), seg.apply(hi));
            slope = slope.checked_mul(seg.slope)?;
            if u < v {
                lo = u;
                hi = v;
            } else {
                lo = v;
                hi = u;
            }
        }
        Some((lo, hi, slope))
    }

    /// Image of the partition cell `E_x = ((x-1)/n, x/n)`, `x` 1-based.
    pub fn cell_image(&self, n: usize, x: usize) -> (Q, Q, i64) {
        let a = Q::new(x as i64 - 1, n as i64);
        let b = Q::new(x as i64, n as i64);
        self.iterate_interval(a, b, 1).expect("cells of an M0-multiple partition lie in one atom")
    }

    /// Split `(a, b)` into maximal pieces on which `S^t` is affine.
    /// Each piece is `(a_i, b_i, segment of S^t on it)`.
    pub fn affine_pieces(&self, a: Q, b: Q, t: usize) -> Vec<(Q, Q, Segment)> {
        let mut out = Vec::new();
        self.pieces_rec(a, b, t, Segment { slope: 1, intercept: Q::zero() }, &mut out);
        out
    }

    fn pieces_rec(&self, a: Q, b: Q, t: usize, acc: Segment, out: &mut Vec<(Q, Q, Segment)>) {
        if a >= b {
            return;
        }
        if t == 0 {
            out.push((a, b, acc));
            return;
        }
        // The current image of (a, b) under acc; split where it crosses a breakpoint.
        let (u, v) = (acc.apply(a), acc.apply(b));
        let (lo, hi) = if u < v { (u, v) } else { (v, u) };
        let m = self.m0 as i64;
        let first = (lo * m).floor().to_integer();
        let last = (hi * m).ceil().to_integer();
        let mut cuts = Vec::new();
        for k in first..last {
            let g0 = Q::new(k, m).max(lo);
            let g1 = Q::new(k + 1, m).min(hi);
            if g0 >= g1 {
                continue;
            }
            // Preimages of g0, g1 under acc.
            let p0 = (g0 - acc.intercept) / acc.slope;
            let p1 = (g1 - acc.intercept) / acc.slope;
            let (p0, p1) = if p0 < p1 { (p0, p1) } else { (p1, p0) };
            cuts.push((p0, p1, k as usize));
        }
        cuts.sort_by(|x, y| x.0.cmp(&y.0));
        for (p0, p1, k) in cuts {
            let seg = self.segments[k];
            let next = Segment {
                slope: seg.slope * acc.slope,
                intercept: Q::from(seg.slope) * acc.intercept + seg.intercept,
            };
            if t == 1 {
                out.push((p0, p1, next));
            } else {
                self.pieces_rec(p0, p1, t - 1, next, out);
            }
        }
    }
}

pub fn floor_log2(n: usize) -> usize {
    assert!(n > 0);
    (usize::BITS - 1 - n.leading_zeros()) as usize
}

pub fn q_to_f64(q: Q) -> f64 {
    q.numer().to_f64().unwrap_or(f64::NAN) / q.denom().to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: i64, b: i64) -> Q {
        Q::new(a, b)
    }

    #[test]
    fn builtins_validate_with_constants() {
        let d = doubling();
        assert_eq!(d.constants(), MapConstants { m0: 2, l0: 2, s_max: 2 });
        assert_eq!(d.segments()[1].intercept, q(-1, 1));
        let f = four_legs();
        assert_eq!(f.constants(), MapConstants { m0: 4, l0: 4, s_max: 4 });
        assert!(d.is_doubling());
        assert!(!doubling_pair().is_doubling());
    }

    #[test]
    fn explicit_doubling_segments() {
        let segs = [Segment { slope: 2, intercept: q(0, 1) }, Segment { slope: 2, intercept: q(-1, 1) }];
        let m = validate_map(2, &segs, Endpoint::RightLimit).unwrap();
        assert_eq!(m, doubling());
    }

    #[test]
    fn identity_slope_too_small() {
        let err = validate_map(1, &[Segment { slope: 1, intercept: q(0, 1) }], Endpoint::RightLimit).unwrap_err();
        match err {
            Error::InvalidMap(v) => {
                assert!(v.iter().any(|x| matches!(x, Violation::SlopeTooSmall { atom: 1, slope: 1 })))
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn off_grid_and_mass_violations_reported() {
        let spec = MapSpec {
            m0: 2,
            segments: vec![
                SegmentSpec { slope: 2, image_start: "1/3".into() },
                SegmentSpec { slope: 2, image_start: "0".into() },
            ],
            convention: Endpoint::RightLimit,
        };
        let Err(Error::InvalidMap(v)) = spec.build() else { panic!() };
        assert!(matches!(v[0], Violation::NonIntegerGridImage { atom: 1, .. }));

        // Both branches cover [0,1] with slope 3: mass 2/3 per range atom.
        let spec = MapSpec {
            m0: 2,
            segments: vec![
                SegmentSpec { slope: 2, image_start: "0".into() },
                SegmentSpec { slope: 4, image_start: "0".into() },
            ],
            convention: Endpoint::RightLimit,
        };
        let Err(Error::InvalidMap(v)) = spec.build() else { panic!() };
        assert!(v.iter().any(|x| matches!(x, Violation::NonIntegerGridImage { atom: 2, .. })));
    }

    #[test]
    fn not_measure_preserving() {
        let spec = MapSpec {
            m0: 2,
            segments: vec![
                SegmentSpec { slope: 2, image_start: "0".into() },
                SegmentSpec { slope: -2, image_start: "1".into() },
            ],
            convention: Endpoint::RightLimit,
        };
        // Tent map: admissible.
        assert!(spec.build().is_ok());
        let spec = MapSpec {
            m0: 4,
            segments: vec![
                SegmentSpec { slope: 2, image_start: "0".into() },
                SegmentSpec { slope: 2, image_start: "0".into() },
                SegmentSpec { slope: 2, image_start: "0".into() },
                SegmentSpec { slope: 2, image_start: "1/2".into() },
            ],
            convention: Endpoint::RightLimit,
        };
        let Err(Error::InvalidMap(v)) = spec.build() else { panic!() };
        assert!(v.contains(&Violation::NotMeasurePreserving { atom: 1, mass: q(3, 2) }));
        assert!(v.contains(&Violation::NotMeasurePreserving { atom: 3, mass: q(1, 2) }));
    }

    #[test]
    fn map_spec_json_roundtrip() {
        let text = r#"{"m0":4,"segments":[{"slope":2,"image_start":"0"},{"slope":4,"image_start":"0"},
            {"slope":4,"image_start":"0"},{"slope":2,"image_start":"1/2"}]}"#;
        let spec: MapSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.build().unwrap(), four_legs());
    }

    #[test]
    fn k_tilde_examples() {
        let d = doubling();
        assert_eq!(d.k_tilde(16).unwrap(), 3);
        assert_eq!(d.k_tilde(2).unwrap(), 0);
        assert_eq!(d.k_tilde(12).unwrap(), 1);
        assert!(matches!(d.k_tilde(7), Err(Error::NotMultipleOfM0 { .. })));
        assert_eq!(four_legs().k_tilde(64).unwrap(), 2);
    }

    #[test]
    fn evaluate_examples() {
        let d = doubling();
        assert_eq!(d.evaluate_iterate(q(3, 10), 2).unwrap(), q(1, 5));
        for ell in 1..6 {
            assert_eq!(d.evaluate_iterate(q(0, 1), ell).unwrap(), q(0, 1));
        }
        // 5/16 lies in the second atom, slope 4, intercept -1.
        assert_eq!(four_legs().evaluate(q(5, 16)).unwrap(), q(1, 4));
        assert_eq!(d.evaluate(q(1, 2)).unwrap(), q(0, 1));
        let left = doubling().with_convention(Endpoint::LeftLimit);
        assert_eq!(left.evaluate(q(1, 2)).unwrap(), q(1, 1));
    }

    #[test]
    fn iterates_affine_on_cells() {
        for map in [doubling(), four_legs()] {
            for n in (map.m0()..=64).step_by(map.m0()) {
                let h = map.k_tilde(n).unwrap() + 1;
                for x in 1..=n {
                    let a = q(x as i64 - 1, n as i64);
                    let w = q(1, 4 * n as i64);
                    for ell in 1..=h {
                        let (p0, p1, p2) = (a + w, a + w * 2, a + w * 3);
                        let (y0, y1, y2) = (
                            map.evaluate_iterate(p0, ell).unwrap(),
                            map.evaluate_iterate(p1, ell).unwrap(),
                            map.evaluate_iterate(p2, ell).unwrap(),
                        );
                        assert_eq!(y1 - y0, y2 - y1, "map m0={} n={n} x={x} ell={ell}", map.m0());
                        assert!(map.iterate_interval(a, a + w * 4, ell).is_some());
                    }
                }
            }
        }
    }

    #[test]
    fn partition_measure_preserved() {
        for map in [doubling(), four_legs(), doubling_pair()] {
            for n in (map.m0()..=256).step_by(map.m0()) {
                let mut mass = vec![Q::zero(); n];
                for x in 1..=n {
                    let (lo, hi, s) = map.cell_image(n, x);
                    let a = (lo * n as i64).to_integer() as usize;
                    let b = (hi * n as i64).to_integer() as usize;
                    for m in &mut mass[a..b] {
                        *m += Q::new(1, s.abs());
                    }
                }
                assert!(mass.iter().all(|m| m.is_one()));
            }
        }
    }

    #[test]
    fn affine_pieces_cover_and_agree() {
        let map = four_legs();
        let pieces = map.affine_pieces(q(0, 1), q(1, 1), 2);
        assert_eq!(pieces.len(), 12);
        let mut cursor = q(0, 1);
        for (a, b, seg) in &pieces {
            assert_eq!(*a, cursor);
            cursor = *b;
            let mid = (*a + *b) / 2;
            assert_eq!(seg.apply(mid), map.evaluate_iterate(mid, 2).unwrap());
        }
        assert_eq!(cursor, q(1, 1));
    }

    #[test]
    fn floor_log2_values() {
        assert_eq!(floor_log2(1), 0);
        assert_eq!(floor_log2(6), 2);
        assert_eq!(floor_log2(4096), 12);
    }
}

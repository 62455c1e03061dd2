//! File output: atomic writes, binary unitaries with JSON sidecars, CSV.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantize::{ComplexUnitary, Provenance};
use crate::C64;

/// Write to `path.tmp` and rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// Sidecar describing a binary matrix file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSidecar {
    pub n: usize,
    pub provenance: Provenance,
    /// Always `"f64le-interleaved-row-major"`.
    pub format: String,
    pub unitarity_defect: f64,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Row-major little-endian `(re, im)` pairs, plus `<path>.json`.
pub fn write_unitary_binary(path: &Path, u: &ComplexUnitary) -> Result<()> {
    let n = u.n();
    let m = u.matrix();
    let mut bytes = Vec::with_capacity(16 * n * n);
    for i in 0..n {
        for j in 0..n {
            let z = m[(i, j)];
            bytes.extend_from_slice(&z.re.to_le_bytes());
            bytes.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    write_atomic(path, &bytes)?;
    let side = MatrixSidecar {
        n,
        provenance: u.provenance(),
        format: "f64le-interleaved-row-major".into(),
        unitarity_defect: u.unitarity_defect(),
    };
    write_json(&sidecar_path(path), &side)
}

pub fn read_unitary_binary(path: &Path) -> Result<(Mat<C64>, MatrixSidecar)> {
    let side: MatrixSidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    let bytes = fs::read(path)?;
    let n = side.n;
    if bytes.len() != 16 * n * n {
        return Err(Error::DimensionMismatch(bytes.len(), 16 * n * n));
    }
    let f = |k: usize| f64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap());
    let m = Mat::from_fn(n, n, |i, j| {
        let k = 2 * (i * n + j);
        C64::new(f(k), f(k + 1))
    });
    Ok((m, side))
}

/// Comma-separated file with a header line.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

/// Density of N(0, 1/2), the marginal of a standard complex Gaussian.
pub fn gaussian_pdf(x: f64) -> f64 {
    (-x * x).exp() / std::f64::consts::PI.sqrt()
}

/// Histogram row: `(left, right, count, reference count)`.
pub type HistogramRow = (f64, f64, usize, f64);

/// Equal-width histogram on `[lo, hi)` with the expected counts under
/// N(0, 1/2) at bin midpoints.
pub fn histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<HistogramRow> {
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v >= lo && v < hi {
            counts[(((v - lo) / w) as usize).min(bins - 1)] += 1;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| {
            let left = lo + b as f64 * w;
            (left, left + w, c, values.len() as f64 * w * gaussian_pdf(left + w / 2.0))
        })
        .collect()
}

pub fn write_histogram_csv(path: &Path, rows: &[HistogramRow]) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(l, r, c, g)| vec![format!("{l:.6}"), format!("{r:.6}"), c.to_string(), format!("{g:.6}")])
        .collect();
    write_csv(path, &["bin_left", "bin_right", "count", "gaussian_pdf_reference"], &body)
}

//! Experiment drivers behind the `graphweyl` binary.
//!
//! Each command reads an [`ExperimentConfig`], runs the library operations
//! over the configured dimensions and writes a JSON report plus CSV data to
//! the output directory. Reports carry the config hash and library version
//! and no timestamps, so identical inputs give identical bytes.

pub mod config;

use std::path::{Path, PathBuf};

use graphweyl::doubling::{
    bad_pairs_2k, degeneracy_profile, failing_coordinate_bound, root_angle, series_constant, staircase_check,
    tensor_power_identities,
};
use graphweyl::ergodic::{egorov_measure, observable, quantum_variance_bin};
use graphweyl::interval_map::PiecewiseLinearMap;
use graphweyl::io::{histogram, write_csv, write_histogram_csv, write_json, write_unitary_binary};
use graphweyl::markov::{bad_coordinates, build_markov, RowStochasticSparse};
use graphweyl::quantize::{
    block_dft_quantize, block_phase_search_quantize, doubling_unitary, verify_unistochastic, ComplexUnitary, PhaseSearch as Search,
};
use graphweyl::random_quant::{
    build_random_quantization, coordinate_measure, default_kappa, haar_rotate_clusters, random_bin_vector,
    verify_random_quantization,
};
use graphweyl::rng::derived_rng;
use graphweyl::spectral::{eigendecompose, envelope_horizon, weyl_remainder_with, ArcWindow};
use graphweyl::{Error, TAU};
use serde::Serialize;
use serde_json::{json, Value};

pub use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Lib(#[from] Error),
}

impl CliError {
    /// 1 invariant violation, 2 configuration error, 3 construction failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Lib(e) => match e {
                Error::InvalidMap(_)
                | Error::NotMultipleOfM0 { .. }
                | Error::BadDimension { .. }
                | Error::OddDimension(..)
                | Error::CutoffTooLarge { .. }
                | Error::PowerBeyondEhrenfest { .. }
                | Error::DegreeTooSmall(_)
                | Error::IndexOutOfRange { .. }
                | Error::InvalidArgument(_)
                | Error::DimensionMismatch(..)
                | Error::Json(_) => 2,
                Error::BoundViolated(_)
                | Error::IdentityViolated(_)
                | Error::PatternViolated(_)
                | Error::NonIntegerTrace { .. }
                | Error::NotBistochastic(_)
                | Error::MultiplePathsFound { .. } => 1,
                _ => 3,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Invariant failures become report entries instead of aborting the run.
fn is_invariant(e: &Error) -> bool {
    CliError::Lib(clone_err(e)).exit_code() == 1
}

fn clone_err(e: &Error) -> Error {
    match e {
        Error::BoundViolated(s) => Error::BoundViolated(s.clone()),
        Error::IdentityViolated(s) => Error::IdentityViolated(s.clone()),
        Error::PatternViolated(s) => Error::PatternViolated(s.clone()),
        Error::NonIntegerTrace { j, trace } => Error::NonIntegerTrace { j: *j, trace: *trace },
        Error::NotBistochastic(s) => Error::NotBistochastic(s.clone()),
        Error::MultiplePathsFound { x, y, ell } => Error::MultiplePathsFound { x: *x, y: *y, ell: *ell },
        other => Error::InvalidArgument(other.to_string()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub thresholds: config::Thresholds,
    pub pass: bool,
    pub failures: Vec<String>,
    pub results: Value,
}

/// Result of one command: where the report went and what to print.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report_path: PathBuf,
    pub pass: bool,
    pub summary: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }
}

fn finish(cfg: &ExperimentConfig, command: &str, failures: Vec<String>, results: Value, summary: Vec<String>) -> CliResult<Outcome> {
    let report = Report {
        command: command.into(),
        version: graphweyl::VERSION.into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        thresholds: cfg.thresholds,
        pass: failures.is_empty(),
        failures,
        results,
    };
    let path = cfg.out.join(format!("{command}.json"));
    write_json(&path, &report)?;
    Ok(Outcome { report_path: path, pass: report.pass, summary })
}

fn out_file(cfg: &ExperimentConfig, name: String) -> PathBuf {
    cfg.out.join(name)
}

/// Quantize `P_n` as configured.
pub fn quantize(cfg: &ExperimentConfig, map: &PiecewiseLinearMap, p: &RowStochasticSparse) -> CliResult<ComplexUnitary> {
    use config::QuantizationKind::*;
    let n = p.n();
    Ok(match cfg.quantization {
        Auto if map.is_doubling() => doubling_unitary(n)?,
        Doubling => {
            if !map.is_doubling() {
                return Err(CliError::Config("quantization 'doubling' needs the doubling map".into()));
            }
            doubling_unitary(n)?
        }
        BlockDft => block_dft_quantize(p)?,
        Auto | PhaseSearch => block_phase_search_quantize(p, Search { seed: cfg.seed, ..Default::default() })?,
    })
}

fn matrices(cfg: &ExperimentConfig, map: &PiecewiseLinearMap, n: usize) -> CliResult<(RowStochasticSparse, ComplexUnitary)> {
    let p = build_markov(map, n)?;
    let u = quantize(cfg, map, &p)?;
    Ok((p, u))
}

pub fn cmd_build(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let map = cfg.validate()?;
    let mut results = Vec::new();
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    for &n in &cfg.n {
        let p = build_markov(&map, n)?;
        let u = quantize(cfg, &map, &p)?;
        let check = verify_unistochastic(&u, &p)?;
        let p_path = out_file(cfg, format!("P_n{n}.csv"));
        let mut buf = Vec::new();
        p.write_csv(&mut buf).map_err(Error::from)?;
        graphweyl::io::write_atomic(&p_path, &buf)?;
        let u_path = out_file(cfg, format!("U_n{n}.bin"));
        write_unitary_binary(&u_path, &u)?;
        if check.max_entry_error > 1e-10 {
            failures.push(format!("n={n}: | |U|^2 - P | = {:e}", check.max_entry_error));
        }
        summary.push(format!("n={n}: {:?}, entry error {:.1e}", u.provenance(), check.max_entry_error));
        results.push(json!({
            "n": n,
            "nnz_p": p.nnz(),
            "provenance": u.provenance(),
            "max_entry_error": check.max_entry_error,
            "unitarity_defect": check.unitarity_defect,
            "files": [file_name(&p_path), file_name(&u_path), format!("{}.json", file_name(&u_path))],
        }));
    }
    finish(cfg, "build", failures, Value::Array(results), summary)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn cmd_weyl(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let map = cfg.validate()?;
    let mut results = Vec::new();
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    for &n in &cfg.n {
        let (_, u) = matrices(cfg, &map, n)?;
        let spec = eigendecompose(&u)?;
        let k = envelope_horizon(&map, n)?;
        let r = cfg.cutoff(k)?;
        let bad = bad_coordinates(&map, n, r)?;
        // eigenphase histogram; the reference column is the uniform expectation
        let mut ph = histogram(spec.phases(), cfg.histogram_bins, 0.0, TAU);
        for row in &mut ph {
            row.3 = n as f64 * (row.1 - row.0) / TAU;
        }
        write_histogram_csv(&out_file(cfg, format!("weyl_phases_n{n}.csv")), &ph)?;
        for (i, a) in cfg.arcs.iter().enumerate() {
            let arc = ArcWindow::new(a.center, a.width)?;
            let rep = weyl_remainder_with(&spec, &arc, k, &bad);
            if !rep.violations.is_empty() {
                failures.push(format!("n={n} arc {i}: {} good coordinates outside the envelope", rep.violations.len()));
            }
            let mut hist_file = Value::Null;
            if rep.count > 0 {
                let v = random_bin_vector(&spec, &arc, &mut derived_rng(cfg.seed, (n * 1000 + i) as u64))?;
                let re: Vec<f64> = coordinate_measure(&v).values.iter().map(|z| z.re).collect();
                let path = out_file(cfg, format!("weyl_hist_n{n}_arc{i}.csv"));
                write_histogram_csv(&path, &histogram(&re, cfg.histogram_bins, -3.0, 3.0))?;
                hist_file = json!(file_name(&path));
            } else {
                summary.push(format!("n={n} arc {i}: no eigenphases in the arc"));
            }
            summary.push(format!(
                "n={n} arc {i}: count {}, max deviation (good) {:.3e}, envelope {:.3e}",
                rep.count, rep.max_deviation_good, rep.envelope
            ));
            results.push(json!({ "arc": i, "report": rep, "histogram": hist_file }));
        }
    }
    finish(cfg, "weyl", failures, Value::Array(results), summary)
}

/// Bins for variance sweeps: `kappa` equal bins, else the configured arcs.
fn variance_bins(cfg: &ExperimentConfig) -> CliResult<Vec<ArcWindow>> {
    match cfg.kappa {
        Some(k) => (0..k).map(|b| ArcWindow::new(TAU * (b as f64 + 0.5) / k as f64, TAU / k as f64).map_err(CliError::from)).collect(),
        None => cfg.arcs.iter().map(|a| ArcWindow::new(a.center, a.width).map_err(CliError::from)).collect(),
    }
}

const VARIANCE_FLOOR: f64 = 1e-12;

pub fn cmd_qe(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let map = cfg.validate()?;
    let bins = variance_bins(cfg)?;
    let mut ns = cfg.n.clone();
    ns.sort_unstable();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    let mut rows = Vec::new();
    // variances[observable][bin] along the n sweep
    let mut sweep = vec![vec![Vec::new(); bins.len()]; cfg.observables.len()];
    for &n in &ns {
        let (_, u) = matrices(cfg, &map, n)?;
        let mut spec = eigendecompose(&u)?;
        haar_rotate_clusters(&mut spec, &mut derived_rng(cfg.seed, n as u64));
        for (oi, fs) in cfg.observables.iter().enumerate() {
            let h = fs.to_func();
            let eg = egorov_measure(&u, &map, &h, n)?;
            if !eg.within_bound() {
                failures.push(format!("n={n} {}: Egorov defect {:e} > {:e}", fs.label(), eg.defect, eg.bound));
            }
            let obs = observable(&h, n)?;
            let mut vars = Vec::new();
            for (bi, arc) in bins.iter().enumerate() {
                let count = graphweyl::spectral::weyl_count(&spec, arc);
                let var = match quantum_variance_bin(&spec, &obs, arc) {
                    Ok(v) => Some(v),
                    Err(Error::EmptyBin) => None,
                    Err(e) => return Err(e.into()),
                };
                if let Some(v) = var {
                    sweep[oi][bi].push(v);
                }
                rows.push(vec![
                    n.to_string(),
                    format!("{:.6}", arc.center()),
                    format!("{:.6}", arc.width()),
                    var.map(|v| format!("{v:.6e}")).unwrap_or_default(),
                    count.to_string(),
                    fs.label(),
                ]);
                vars.push(json!({ "bin": bi, "center": arc.center(), "width": arc.width(), "count": count, "variance": var }));
            }
            summary.push(format!("n={n} {}: Egorov {:.3e} (bound {:.3e})", fs.label(), eg.defect, eg.bound));
            results.push(json!({ "n": n, "observable": fs.label(), "egorov": eg, "bins": vars }));
        }
    }
    let mut trends = Vec::new();
    for (oi, fs) in cfg.observables.iter().enumerate() {
        for (bi, seq) in sweep[oi].iter().enumerate() {
            // values at roundoff level count as converged
            let decreasing = seq.windows(2).all(|w| w[1] < w[0] || w[1] <= VARIANCE_FLOOR);
            let last = seq.last().copied();
            let below = last.is_some_and(|v| v < cfg.thresholds.variance_max);
            if cfg.ergodic && ns.len() > 1 && !(decreasing && below) {
                failures.push(format!("{} bin {bi}: variance sweep {seq:?} not decreasing below {}", fs.label(), cfg.thresholds.variance_max));
            }
            trends.push(json!({ "observable": fs.label(), "bin": bi, "variances": seq, "decreasing": decreasing, "last_below_threshold": below }));
        }
    }
    write_csv(
        &out_file(cfg, "variance.csv".into()),
        &["n", "bin_center", "bin_width", "variance", "bin_count", "observable"],
        &rows,
    )?;
    let results = json!({ "ergodic_assumed": cfg.ergodic, "runs": results, "trends": trends });
    finish(cfg, "qe", failures, results, summary)
}

pub fn cmd_perturb(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let map = cfg.validate()?;
    let hs: Vec<(String, graphweyl::ergodic::Func)> = cfg.observables.iter().map(|f| (f.label(), f.to_func())).collect();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    let th = cfg.thresholds;
    for &n in &cfg.n {
        let (p, u) = matrices(cfg, &map, n)?;
        let spec = eigendecompose(&u)?;
        let kappa = match cfg.kappa {
            Some(k) => k,
            None => default_kappa(&map, n)?,
        };
        let q = build_random_quantization(&spec, kappa, cfg.epsilon_split, cfg.seed)?;
        let rep = verify_random_quantization(&q, &u, &p, &map, &hs)?;
        let dist = rep.distance.value;
        let mut fail = |cond: bool, msg: String| {
            if !cond {
                failures.push(format!("n={n}: {msg}"));
            }
        };
        fail(dist <= th.distance_constant * TAU / kappa as f64, format!("||V-U|| = {dist:.4}"));
        fail(rep.min_gap > 1e-12, format!("min phase gap {:e}", rep.min_gap));
        fail(rep.entry_error <= 2.0 * dist + 1e-12, format!("entry error {:.4} > 2||V-U||", rep.entry_error));
        fail(rep.ks_real_median < th.ks_max, format!("median KS {:.4}", rep.ks_real_median));
        for e in &rep.egorov {
            fail(e.pass, format!("Egorov comparison for {} outside 2||V-U|| ||O||", e.observable));
        }
        for qe in &rep.que {
            fail(qe.max_deviation < th.que_max, format!("QUE pairing {} = {:.4}", qe.observable, qe.max_deviation));
        }
        summary.push(format!(
            "n={n} kappa={kappa}: ||V-U|| {dist:.3}, median KS {:.4}, min gap {:.1e}",
            rep.ks_real_median, rep.min_gap
        ));
        results.push(json!({ "n": n, "report": rep, "moved_phases": q.reassigned.len(), "offset": q.offset }));
    }
    finish(cfg, "perturb", failures, Value::Array(results), summary)
}

pub fn cmd_doubling2k(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    if cfg.k.is_empty() {
        return Err(CliError::Config("k list is empty".into()));
    }
    let mut results = Vec::new();
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    let mut rows = Vec::new();
    let record = |label: String, r: graphweyl::Result<Value>, failures: &mut Vec<String>| -> CliResult<Value> {
        match r {
            Ok(v) => Ok(v),
            Err(e) if is_invariant(&e) => {
                failures.push(format!("{label}: {e}"));
                Ok(json!({ "error": e.to_string() }))
            }
            Err(e) => Err(e.into()),
        }
    };
    for &k in &cfg.k {
        if k == 0 || k > 13 {
            return Err(CliError::Config(format!("K = {k} outside 1..=13")));
        }
        let tensor = record(format!("K={k} tensor"), tensor_power_identities(k).map(|r| json!(r)), &mut failures)?;
        let profile = degeneracy_profile(k);
        if let Ok(p) = &profile {
            for (j, &m) in p.multiplicities.iter().enumerate() {
                rows.push(vec![k.to_string(), j.to_string(), format!("{:.12}", root_angle(k, j)), m.to_string()]);
            }
            summary.push(format!("K={k}: multiplicities {:?}", p.multiplicities));
        }
        let profile = record(format!("K={k} degeneracy"), profile.map(|r| json!(r)), &mut failures)?;
        let mut stairs = Vec::new();
        let mut pairs = Value::Null;
        if k <= 10 {
            for m in 1..=k {
                stairs.push(record(format!("K={k} m={m} staircase"), staircase_check(k, m).map(|r| json!(r)), &mut failures)?);
            }
            if k >= 2 {
                let r = cfg.cutoff(k)?;
                pairs = record(format!("K={k} r={r} bad pairs"), bad_pairs_2k(k, r).map(|r| json!(r)), &mut failures)?;
            }
        }
        results.push(json!({ "k": k, "tensor": tensor, "degeneracy": profile, "staircases": stairs, "bad_pairs": pairs }));
    }
    write_csv(&out_file(cfg, "multiplicities.csv".into()), &["K", "j", "root_angle", "multiplicity"], &rows)?;
    finish(cfg, "doubling2k", failures, Value::Array(results), summary)
}

pub fn cmd_failcoord(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let c = series_constant();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    let mut summary = vec![format!("series constant {c:.8}")];
    let mut rows = Vec::new();
    for &n in &cfg.n {
        let r = failing_coordinate_bound(n)?;
        if r.series_bound > r.exact + r.tail_bound + 1e-9 {
            failures.push(format!("n={n}: series bound {:.6} above exact {:.6} + tail", r.series_bound, r.exact));
        }
        rows.push(vec![n.to_string(), format!("{:.10}", r.series_bound), format!("{:.10}", r.exact)]);
        summary.push(format!("n={n}: (P^I)_11 = {:.8}, series bound {:.8}", r.exact, r.series_bound));
        results.push(json!(r));
    }
    write_csv(&out_file(cfg, "failcoord.csv".into()), &["n", "series_bound", "exact_value"], &rows)?;
    finish(cfg, "failcoord", failures, json!({ "series_constant": c, "runs": results }), summary)
}

/// Dispatch by subcommand name.
pub fn run(command: &str, cfg: &ExperimentConfig) -> CliResult<Outcome> {
    match command {
        "build" => cmd_build(cfg),
        "weyl" => cmd_weyl(cfg),
        "qe" => cmd_qe(cfg),
        "perturb" => cmd_perturb(cfg),
        "doubling2k" => cmd_doubling2k(cfg),
        "failcoord" => cmd_failcoord(cfg),
        other => Err(CliError::Config(format!("unknown command '{other}'"))),
    }
}

/// Apply `GRAPHWEYL_THREADS` to the dense kernels.
pub fn configure_threads() {
    if let Ok(v) = std::env::var("GRAPHWEYL_THREADS") {
        if let Ok(t) = v.trim().parse::<usize>() {
            let par = if t <= 1 { faer::Par::Seq } else { faer::Par::rayon(t) };
            faer::set_global_parallelism(par);
        }
    }
}

use std::path::{Path, PathBuf};

use graphweyl::ergodic::FuncSpec;
use graphweyl::interval_map::{builtin, MapSpec, PiecewiseLinearMap};
use graphweyl::TAU;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuantizationKind {
    /// Real orthogonal matrix for the doubling map, phase search otherwise.
    #[default]
    Auto,
    Doubling,
    BlockDft,
    PhaseSearch,
}

/// Rule choosing the Selberg cutoff `r` from the horizon `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RRule {
    /// `floor(K/2)`
    #[default]
    Half,
    /// `floor(log2 K)`, at least 1
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcSpec {
    pub center: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// QUE pairing for randomized quantizations.
    pub que_max: f64,
    /// Median KS distance of eigenvector coordinates.
    pub ks_max: f64,
    /// Quantum variance at the largest n.
    pub variance_max: f64,
    /// `||V - U|| <= distance_constant * 2pi/kappa`.
    pub distance_constant: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { que_max: 0.1, ks_max: 0.05, variance_max: 0.05, distance_constant: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in map name.
    pub map: String,
    /// JSON map definition; overrides `map`.
    pub map_file: Option<PathBuf>,
    pub n: Vec<usize>,
    pub quantization: QuantizationKind,
    pub arcs: Vec<ArcSpec>,
    /// Number of equal spectral bins; the default schedule when absent.
    pub kappa: Option<usize>,
    pub r_rule: RRule,
    /// Fixed cutoff; overrides `r_rule`.
    pub r: Option<usize>,
    pub observables: Vec<FuncSpec>,
    pub seed: u64,
    pub out: PathBuf,
    pub thresholds: Thresholds,
    /// The map is assumed ergodic; variance is reported either way.
    pub ergodic: bool,
    /// Exponents `K` for `doubling2k`.
    pub k: Vec<usize>,
    pub histogram_bins: usize,
    pub epsilon_split: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            map: "doubling".into(),
            map_file: None,
            n: vec![256],
            quantization: QuantizationKind::Auto,
            arcs: vec![ArcSpec { center: 0.0, width: TAU }],
            kappa: None,
            r_rule: RRule::Half,
            r: None,
            observables: vec![FuncSpec::Cos { k: 1 }],
            seed: 0,
            out: PathBuf::from("out"),
            thresholds: Thresholds::default(),
            ergodic: true,
            k: vec![8],
            histogram_bins: 40,
            epsilon_split: None,
        }
    }
}

impl ExperimentConfig {
    /// Parse TOML or JSON, chosen by extension (`.json` is JSON, anything else TOML).
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        };
        // map files are relative to the config that names them
        if let (Some(f), Some(dir)) = (&cfg.map_file, path.parent()) {
            if f.is_relative() {
                cfg.map_file = Some(dir.join(f));
            }
        }
        Ok(cfg)
    }

    pub fn resolve_map(&self) -> Result<PiecewiseLinearMap, CliError> {
        if let Some(f) = &self.map_file {
            let text = std::fs::read_to_string(f).map_err(|e| CliError::Config(format!("{}: {e}", f.display())))?;
            let spec: MapSpec = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", f.display())))?;
            return spec.build().map_err(CliError::from);
        }
        builtin(&self.map).ok_or_else(|| CliError::Config(format!("unknown map '{}'", self.map)))
    }

    /// Check the invariants that do not depend on a construction.
    pub fn validate(&self) -> Result<PiecewiseLinearMap, CliError> {
        let map = self.resolve_map()?;
        if self.n.is_empty() {
            return Err(CliError::Config("n list is empty".into()));
        }
        for &n in &self.n {
            if n == 0 || n % map.m0() != 0 {
                return Err(CliError::Lib(graphweyl::Error::NotMultipleOfM0 { n, m0: map.m0() }));
            }
        }
        for a in &self.arcs {
            if !(a.width > 0.0 && a.width <= TAU) {
                return Err(CliError::Config(format!("arc width {} outside (0, 2pi]", a.width)));
            }
        }
        if self.kappa == Some(0) {
            return Err(CliError::Config("kappa must be positive".into()));
        }
        if self.histogram_bins == 0 {
            return Err(CliError::Config("histogram_bins must be positive".into()));
        }
        Ok(map)
    }

    /// Cutoff for horizon `k`; must stay below `k`.
    pub fn cutoff(&self, k: usize) -> Result<usize, CliError> {
        let r = match (self.r, self.r_rule) {
            (Some(r), _) => r,
            (None, RRule::Half) => k / 2,
            (None, RRule::Log) => graphweyl::interval_map::floor_log2(k.max(1)).max(1),
        };
        if r == 0 || r >= k {
            return Err(CliError::Lib(graphweyl::Error::CutoffTooLarge { r, limit: k.saturating_sub(1) }));
        }
        Ok(r)
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("out");
        }
        let s = v.to_string();
        hex::encode(Sha256::digest(s.as_bytes()))
    }
}

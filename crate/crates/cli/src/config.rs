//! Run configuration: TOML (`key = value` with dotted sections) or JSON,
//! selected by file extension. The schema is documented in `docs/config.md`.

use std::path::{Path, PathBuf};

use chemostab::{Grid, ModelParams, StepperConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Optional; must agree with the number of extents when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    pub lengths: Vec<f64>,
    pub cells: Vec<usize>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid, CliError> {
        if let Some(d) = self.dimension {
            if d != self.lengths.len() {
                return Err(CliError::Input(format!(
                    "grid.dimension = {d} but grid.lengths has {} entries",
                    self.lengths.len()
                )));
            }
        }
        Grid::new(&self.lengths, &self.cells).map_err(|e| CliError::Input(format!("grid: {e}")))
    }
}

/// Which artifacts `simulate` writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Overridden by `--out`.
    pub dir: PathBuf,
    pub series: bool,
    pub summary: bool,
    /// Checkpoints every `stepper.snapshot_stride` steps.
    pub snapshots: bool,
    /// Checkpoint of the final state.
    pub checkpoint: bool,
    pub plots: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: PathBuf::from("out"),
            series: true,
            summary: true,
            snapshots: false,
            checkpoint: true,
            plots: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub chi1: [f64; 2],
    pub chi2: [f64; 2],
    pub k: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec { chi1: [0.01, 1.0], chi2: [0.01, 1.0], k: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: ModelParams,
    pub grid: GridSpec,
    #[serde(default)]
    pub stepper: StepperConfig,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
}

impl RunConfig {
    pub fn parse(text: &str, json: bool) -> Result<Self, CliError> {
        if json {
            serde_json::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))
        } else {
            toml::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::parse(&text, json)
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        self.grid.build()
    }

    pub fn seed(&self) -> u64 {
        self.stepper.seed
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form. The
    /// output directory is excluded, so the same run written elsewhere
    /// carries the same hash.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output.dir = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[params]
chi1 = 0.05
chi2 = 0.05
a1 = 10.0
a2 = 10.0
b1 = 1.0
b2 = 1.0
c1 = 0.1
c2 = 0.1
mu = 1.0
nu = 1.0
lambda = 1.0

[grid]
lengths = [1.0]
cells = [32]
"#;

    #[test]
    fn toml_and_json_agree() {
        let a = RunConfig::parse(MINIMAL, false).unwrap();
        let json = serde_json::to_string(&a).unwrap();
        let b = RunConfig::parse(&json, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn missing_parameter_is_named() {
        let text = MINIMAL.replace("mu = 1.0\n", "");
        let err = RunConfig::parse(&text, false).unwrap_err().to_string();
        assert!(err.contains("mu"), "{err}");
    }

    #[test]
    fn hash_ignores_output_dir_but_not_seed() {
        let a = RunConfig::parse(MINIMAL, false).unwrap();
        let mut b = a.clone();
        b.output.dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.stepper.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn nested_initial_condition() {
        let text = format!(
            "{MINIMAL}\n[stepper]\nt_end = 2.0\n[stepper.initial]\nkind = \"random_positive\"\nlow = 0.5\nhigh = 2.0\n"
        );
        let c = RunConfig::parse(&text, false).unwrap();
        assert_eq!(c.stepper.t_end, 2.0);
        assert!(matches!(c.stepper.initial, chemostab::InitialCondition::RandomPositive { .. }));
    }
}

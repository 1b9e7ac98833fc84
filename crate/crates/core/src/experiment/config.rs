//! Experiment configuration tree.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asymptotics::EstimationBudget;
use crate::constants::{DriftSpec, PiterbargVariant};
use crate::error::{Error, Result};
use crate::process::{validate_spec, ThresholdFamily, VectorProcessSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SamplePaths,
    Constant,
    Probability,
    Compare,
    Audit,
    BoundsTable,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::SamplePaths => "sample_paths",
            ExperimentKind::Constant => "constant",
            ExperimentKind::Probability => "probability",
            ExperimentKind::Compare => "compare",
            ExperimentKind::Audit => "audit",
            ExperimentKind::BoundsTable => "bounds_table",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub kind: ExperimentKind,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub processes: BTreeMap<String, VectorProcessSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_paths: Option<SamplePathsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<ConstantSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<ProbabilitySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds_table: Option<BoundsSection>,
}

/// Grid on `[origin, end]`; without a step the conjunction default applies.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<f64>,
}

fn default_replications() -> u64 {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplePathsSection {
    pub process: String,
    #[serde(default = "default_replications")]
    pub replications: u64,
    #[serde(default)]
    pub grid: GridConfig,
    /// Also dump all paths in the raw binary format.
    #[serde(default)]
    pub write_raw: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantEstimator {
    Window,
    Pickands,
    Piterbarg,
    DiscreteZero,
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantSection {
    pub estimator: ConstantEstimator,
    pub c: Vec<f64>,
    pub kappa: f64,
    #[serde(default = "default_replications")]
    pub replications: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_ladder: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<(f64, f64)>,
    /// Fixed absolute step; overrides `steps_per_window`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_per_window: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<PiterbargVariant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_ladder: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbabilitySection {
    pub process: String,
    #[serde(default = "default_replications")]
    pub replications: u64,
    /// Fixed thresholds for a single estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    /// Shared-path ladder of `u` values for thresholds `c·u + o`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_ladder: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<ThresholdFamily>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine_levels: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderChoice {
    ClosedForm,
    Estimating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub process: String,
    pub u_ladder: Vec<f64>,
    #[serde(default = "default_replications")]
    pub replications: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<ThresholdFamily>,
    #[serde(default)]
    pub grid: GridConfig,
    pub provider: ProviderChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<EstimationBudget>,
    /// Acceptance band for the ratio empirical/asymptotic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_step: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditTest {
    Slepian,
    Borell,
    PiterbargDecay,
    DoubleEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSection {
    pub test: AuditTest,
    pub process: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process_b: Option<String>,
    #[serde(default = "default_replications")]
    pub replications: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_ladder: Option<Vec<f64>>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftExample {
    /// Per-coordinate drift coefficients below and above zero.
    pub d_lower: f64,
    pub d_upper: f64,
    pub variant: PiterbargVariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    #[serde(default = "default_n_range")]
    pub n_range: (usize, usize),
    #[serde(default = "default_kappas")]
    pub kappas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drifts: Vec<DriftExample>,
}

fn default_n_range() -> (usize, usize) {
    (1, 3)
}

fn default_kappas() -> Vec<f64> {
    vec![1.0, 2.0]
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            n_range: default_n_range(),
            kappas: default_kappas(),
            drifts: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML; schema errors name the offending key.
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::config(path, inner.message().trim().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("", e.to_string()))
    }

    /// SHA-256 of the canonical JSON form (sorted keys) without the output
    /// directory.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = None;
        let value = serde_json::to_value(&canon).expect("config serializes");
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn process(&self, key: &str, name: &str) -> Result<&VectorProcessSpec> {
        self.processes
            .get(name)
            .ok_or_else(|| Error::config(key, format!("undefined process `{name}`")))
    }

    /// Checks that the section for `kind` exists, process references
    /// resolve, and every process passes structural validation.
    pub fn validate(&self) -> Result<()> {
        if self.experiment_id.is_empty() {
            return Err(Error::config("experiment_id", "must be nonempty"));
        }
        for (name, spec) in &self.processes {
            if let Err(Error::Validation(errors)) = validate_spec(spec).into_result() {
                return Err(Error::config(format!("processes.{name}"), errors.join("; ")));
            }
        }
        let missing =
            |section: &str| Error::config(section, format!("section required for kind `{}`", self.kind.as_str()));
        match self.kind {
            ExperimentKind::SamplePaths => {
                let s = self.sample_paths.as_ref().ok_or_else(|| missing("sample_paths"))?;
                self.process("sample_paths.process", &s.process)?;
            }
            ExperimentKind::Constant => {
                self.constant.as_ref().ok_or_else(|| missing("constant"))?;
            }
            ExperimentKind::Probability => {
                let s = self.probability.as_ref().ok_or_else(|| missing("probability"))?;
                self.process("probability.process", &s.process)?;
                if s.thresholds.is_none() && s.u_ladder.is_none() {
                    return Err(Error::config("probability", "needs `thresholds` or `u_ladder`"));
                }
            }
            ExperimentKind::Compare => {
                let s = self.compare.as_ref().ok_or_else(|| missing("compare"))?;
                self.process("compare.process", &s.process)?;
            }
            ExperimentKind::Audit => {
                let s = self.audit.as_ref().ok_or_else(|| missing("audit"))?;
                self.process("audit.process", &s.process)?;
                if let Some(b) = &s.process_b {
                    self.process("audit.process_b", b)?;
                } else if s.test == AuditTest::Slepian {
                    return Err(Error::config("audit.process_b", "slepian audit needs a second process"));
                }
            }
            ExperimentKind::BoundsTable => {
                if let Some(b) = &self.bounds_table {
                    if let Some(k) = b.kappas.iter().find(|&&k| k != 1.0 && k != 2.0) {
                        return Err(Error::config(
                            "bounds_table.kappas",
                            format!("kappa {k} not in {{1, 2}}"),
                        ));
                    }
                    if b.n_range.0 == 0 || b.n_range.0 > b.n_range.1 {
                        return Err(Error::config("bounds_table.n_range", "need 1 <= lo <= hi"));
                    }
                }
            }
        }
        Ok(())
    }
}

//! Experiment configuration schema. Every document is schema-validated
//! before any computation; unknown keys are rejected.

use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    pub grid: GridConfig,
    #[serde(default)]
    pub metric: MetricConfig,
    #[serde(default)]
    pub target: Option<TargetConfig>,
    #[serde(default)]
    pub region: Option<RegionConfig>,
    #[serde(default)]
    pub params: Params,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Classify,
    Eigen,
    Yamabe,
    Prescribe,
    Mms,
    Sweep,
    Probe,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Eigen => "eigen",
            Command::Yamabe => "yamabe",
            Command::Prescribe => "prescribe",
            Command::Mms => "mms",
            Command::Sweep => "sweep",
            Command::Probe => "probe",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub r_max: f64,
    pub cells: usize,
    #[serde(default)]
    pub spacing: SpacingConfig,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpacingConfig {
    #[default]
    Log,
    Uniform,
}

/// Metric selector: `"flat"`, a curvature well, or an inline metric
/// document.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum MetricConfig {
    Name(String),
    Well { well: WellSpec },
    Inline { inline: InlineMetric },
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig::Name("flat".to_string())
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WellSpec {
    pub r_lo: f64,
    pub r_hi: f64,
    pub depth: f64,
}

/// Inline metric document matching the serialized schema.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineMetric {
    pub n: usize,
    pub nodes: Vec<f64>,
    pub phi: Vec<f64>,
    #[serde(rename = "R")]
    pub scalar: Vec<f64>,
    #[serde(rename = "H")]
    pub mean: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_tau() -> f64 {
    -1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub scalar: ScalarSpec,
    pub mean: f64,
    #[serde(default)]
    pub zero_tol: Option<f64>,
}

/// Target scalar curvature: `"zero"`, a constant, a square bump, or
/// explicit samples.
#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarSpec {
    Zero,
    Const { value: f64 },
    Bump { r_lo: f64, r_hi: f64, depth: f64 },
    Samples { values: Vec<f64> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub intervals: Vec<(f64, f64)>,
    pub include_boundary: bool,
}

/// Command-specific parameters; all optional with documented defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Weight index for `eigen`.
    pub delta: Option<f64>,
    /// Weight indices for classification gates.
    pub delta_list: Option<Vec<f64>>,
    /// Coupling values for the `yamabe` suite.
    pub b_list: Option<Vec<f64>>,
    /// Boundary exponents for the `yamabe` suite.
    pub r_list: Option<Vec<f64>>,
    /// Continuation schedule for `prescribe`.
    pub schedule: Option<Vec<(f64, f64)>>,
    pub seed: Option<u64>,
    /// Sample count for `probe`.
    pub samples: Option<usize>,
    /// Probe kind: `"inequalities"` (default) or `"coercivity"`.
    pub probe: Option<String>,
    pub q0: Option<f64>,
    pub r0: Option<f64>,
    /// Coercivity levels `B`.
    pub levels: Option<Vec<f64>>,
    /// Parameter axis for `sweep`.
    pub axis: Option<Vec<f64>>,
    /// Manufactured-case amplitude for `mms`.
    pub mms_a: Option<f64>,
    /// End-flattening cut radius for `prescribe`.
    pub r_cut: Option<f64>,
    /// Iteration cap for descent-based commands.
    pub max_iters: Option<usize>,
    /// Residual tolerance for solver commands.
    pub tol: Option<f64>,
}

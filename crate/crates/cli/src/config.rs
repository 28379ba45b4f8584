//! JSON configuration schemas. Unknown keys are rejected everywhere.

use manifold_core::lattice::Mat;
use manifold_core::{
    ContinuumProfile, CorrelationFunction, EuclideanModelSpec, Form, LatticeSpec, MixingFunction,
    PanchenkoProfile, SphericalModelSpec, TalagrandProfile,
};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

/// Reads and validates a configuration file.
pub fn load<T: DeserializeOwned>(path: &std::path::Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())).into())
}

/// Schema or file error; maps to exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn matrix(rows: &[Vec<f64>]) -> anyhow::Result<Mat> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(ConfigError(format!("field `d`: expected a square {n}×{n} matrix")).into());
    }
    Ok(Mat::from_fn(n, n, |i, j| rows[i][j]))
}

/// Spherical model: coupling rows, mixing coefficients per site and an optional field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphericalConfig {
    pub d: Vec<Vec<f64>>,
    /// `β_p²` coefficients per site.
    pub xi: Vec<Vec<f64>>,
    #[serde(default)]
    pub h: Option<Vec<f64>>,
}

impl SphericalConfig {
    pub fn build(&self) -> anyhow::Result<SphericalModelSpec> {
        let d = matrix(&self.d)?;
        let xi = self
            .xi
            .iter()
            .map(|c| MixingFunction::new(c.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let h = self.h.clone().unwrap_or_else(|| vec![0.0; d.nrows()]);
        Ok(SphericalModelSpec::new(d, xi, h)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KdConfig {
    pub d: Vec<Vec<f64>>,
    pub u: Vec<f64>,
}

impl KdConfig {
    pub fn matrix(&self) -> anyhow::Result<Mat> {
        matrix(&self.d)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum ProfileInput {
    Talagrand(TalagrandProfile),
    Panchenko(PanchenkoProfile),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub profile: ProfileInput,
    /// Optional caps to rescale the unit profile to.
    #[serde(default)]
    pub q: Option<Vec<f64>>,
}

fn default_nodes() -> usize {
    32
}

fn default_multistart() -> usize {
    8
}

/// Functional evaluation request.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "functional", rename_all = "snake_case")]
pub enum FunctionalConfig {
    /// `ℬ` of a Talagrand profile.
    B {
        model: SphericalConfig,
        profile: TalagrandProfile,
        #[serde(default = "default_nodes")]
        nodes: usize,
    },
    /// `𝒜` at `b` (minimized over `b` when absent).
    A {
        model: SphericalConfig,
        profile: ProfileInput,
        #[serde(default)]
        b: Option<Vec<f64>>,
        #[serde(default = "default_nodes")]
        nodes: usize,
    },
    /// `𝒫` at caps `q`.
    P {
        model: EuclideanModelSpec,
        q: Vec<f64>,
        profile: ContinuumProfile,
        #[serde(default = "default_nodes")]
        nodes: usize,
    },
    /// `Y^b(v)`, `W(b)` and `Γ₂` of a Panchenko profile.
    Cascade {
        model: SphericalConfig,
        profile: PanchenkoProfile,
        b: Vec<f64>,
        #[serde(default)]
        v: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimizeConfig {
    pub model: SphericalConfig,
    pub levels: usize,
    #[serde(default = "default_form")]
    pub form: Form,
    #[serde(default = "default_multistart")]
    pub multistart: usize,
}

fn default_form() -> Form {
    Form::TalagrandB
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EuclideanConfig {
    pub model: EuclideanModelSpec,
    #[serde(default = "default_box")]
    pub box_m: f64,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_small_multistart")]
    pub multistart: usize,
}

fn default_box() -> f64 {
    manifold_core::optimize::DEFAULT_Q_BOX
}

fn default_levels() -> usize {
    1
}

fn default_grid() -> usize {
    9
}

fn default_small_multistart() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YbConfig {
    pub model: SphericalConfig,
    pub profile: PanchenkoProfile,
    /// Defaults to the minimizer of `𝒜`.
    #[serde(default)]
    pub b: Option<Vec<f64>>,
    /// Defaults to the model field.
    #[serde(default)]
    pub v: Option<Vec<f64>>,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
}

fn default_max_nodes() -> usize {
    16
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmConfig {
    pub model: SphericalConfig,
    pub profile: PanchenkoProfile,
    #[serde(default = "default_am_nodes")]
    pub max_nodes: usize,
}

fn default_am_nodes() -> usize {
    24
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "field", rename_all = "snake_case")]
pub enum CovarianceConfig {
    Spherical {
        xi: Vec<f64>,
        n: usize,
        overlap: f64,
        samples: usize,
    },
    Euclidean {
        b: CorrelationFunction,
        n: usize,
        dist2: f64,
        features: usize,
        samples: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HShiftConfig {
    pub lattice: LatticeSpec,
    pub b: CorrelationFunction,
    pub n: usize,
    pub h: f64,
    #[serde(default = "default_features")]
    pub features: usize,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_features() -> usize {
    64
}

fn default_points() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoConfig {
    pub model: EuclideanModelSpec,
    pub n: usize,
    pub draws: usize,
    #[serde(default = "default_demo_nodes")]
    pub nodes: usize,
    #[serde(default = "default_features")]
    pub features: usize,
}

fn default_demo_nodes() -> usize {
    24
}

//! Config file schemas for the five analysis workflows.

use serde::Deserialize;
use tailsum::dependence::DependenceSpec;
use tailsum::Distribution;

/// Probe grid: either explicit points or a geometric span.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GridConfig {
    Explicit(Vec<f64>),
    Geometric { from: f64, to: f64, points: usize },
}

impl GridConfig {
    pub fn points(&self) -> anyhow::Result<Vec<f64>> {
        let xs = match self {
            GridConfig::Explicit(xs) => xs.clone(),
            GridConfig::Geometric { from, to, points } => {
                anyhow::ensure!(
                    *from > 0.0 && to > from && *points >= 2,
                    "grid: need 0 < from < to and points >= 2"
                );
                tailsum::tail_classes::geometric_grid(*from, *to, *points)
            }
        };
        anyhow::ensure!(
            !xs.is_empty() && xs.windows(2).all(|w| w[1] > w[0]) && xs[0] > 0.0,
            "grid: points must be positive and strictly increasing"
        );
        Ok(xs)
    }
}

/// Constructive-h parameters.
#[derive(Debug, Clone, Deserialize)]
pub struct HConfig {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_breakpoints")]
    pub breakpoints: usize,
}

impl Default for HConfig {
    fn default() -> Self {
        Self {
            delta: default_delta(),
            breakpoints: default_breakpoints(),
        }
    }
}

fn default_delta() -> f64 {
    1.0
}

fn default_breakpoints() -> usize {
    20
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    LongTail,
    DominatedVariation,
    ConsistentVariation,
    Subexponential,
    Insensitivity,
}

impl std::fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DiagnosticKind::LongTail => "long-tail",
            DiagnosticKind::DominatedVariation => "dominated-variation",
            DiagnosticKind::ConsistentVariation => "consistent-variation",
            DiagnosticKind::Subexponential => "subexponential",
            DiagnosticKind::Insensitivity => "insensitivity",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct DiagnoseConfig {
    pub distribution: Distribution,
    pub diagnostic: DiagnosticKind,
    /// Shift (long-tail) or contraction factor (dominated-variation).
    #[serde(default)]
    pub y: Option<f64>,
    /// Contraction levels for the consistent-variation scan.
    #[serde(default)]
    pub ys: Option<Vec<f64>>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    /// h parameters for the insensitivity diagnostic.
    #[serde(default)]
    pub h: Option<HConfig>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ConstructHConfig {
    pub distribution: Distribution,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_breakpoints")]
    pub breakpoints: usize,
    /// Evaluation table grid (defaults to the certified range).
    #[serde(default)]
    pub table: Option<GridConfig>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct EquivalenceConfig {
    pub margins: Vec<Distribution>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    pub dependence: DependenceSpec,
    pub x_grid: GridConfig,
    #[serde(default)]
    pub tolerance: Option<f64>,
    /// Optional weight-band uniformity scan (independent problems): the
    /// band at each x comes from the marginals' constructed h.
    #[serde(default)]
    pub band: Option<BandConfig>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct BandConfig {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub h: HConfig,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ShiftCheckConfig {
    pub margins: Vec<Distribution>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default = "independent")]
    pub dependence: DependenceSpec,
    pub x_grid: GridConfig,
    #[serde(default)]
    pub h: HConfig,
    /// Weight-band exponent; absent scans only the fixed weights.
    #[serde(default)]
    pub band_delta: Option<f64>,
    /// Oracle relative-error target.
    #[serde(default)]
    pub oracle_target: Option<f64>,
    #[serde(default)]
    pub tolerance: Option<f64>,
}

fn independent() -> DependenceSpec {
    DependenceSpec::Independent
}

#[derive(Debug, Clone, Deserialize)]
pub struct RuinConfig {
    pub x: f64,
    pub rates: Vec<f64>,
    pub horizon: usize,
    pub losses: Vec<Distribution>,
    pub dependence: DependenceSpec,
    /// Surplus sweep for the ratio trace (defaults around x).
    #[serde(default)]
    pub sweep: Option<GridConfig>,
    #[serde(default)]
    pub tolerance: Option<f64>,
}

impl RuinConfig {
    /// Broadcasts length-1 rates/losses across the horizon.
    pub fn expand(&self) -> anyhow::Result<(Vec<f64>, Vec<Distribution>)> {
        let expand_len = |len: usize, what: &str| -> anyhow::Result<()> {
            anyhow::ensure!(
                len == self.horizon || len == 1,
                "{what}: length {len} must be 1 or match horizon {}",
                self.horizon
            );
            Ok(())
        };
        expand_len(self.rates.len(), "rates")?;
        expand_len(self.losses.len(), "losses")?;
        let rates = if self.rates.len() == 1 {
            vec![self.rates[0]; self.horizon]
        } else {
            self.rates.clone()
        };
        let losses = if self.losses.len() == 1 {
            vec![self.losses[0]; self.horizon]
        } else {
            self.losses.clone()
        };
        Ok((rates, losses))
    }
}

//! Experiment configuration: JSON schema, validation and resolution.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use hsf_core::dynamics::Propagator;
use hsf_core::model::{EffectiveMode, InteractionProfile, ModelParams};
use hsf_core::spectral::Window;
use hsf_core::{RegimeTag, RootTemplate, SpinConfig};
use serde::{Deserialize, Serialize};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "HSF_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "results";

/// A validation failure attached to a config field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

type Checked<T> = Result<T, ConfigError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Free-form description, copied to outputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub experiment: Experiment,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Worker thread cap; all cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Sectors(SectorsConfig),
    Fragment(FragmentConfig),
    Spectrum(SpectrumConfig),
    Quench(QuenchConfig),
    DisorderSweep(SweepConfig),
    Fss(FssConfig),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Sectors(_) => "sectors",
            Experiment::Fragment(_) => "fragment",
            Experiment::Spectrum(_) => "spectrum",
            Experiment::Quench(_) => "quench",
            Experiment::DisorderSweep(_) => "disorder-sweep",
            Experiment::Fss(_) => "fss",
        }
    }
}

/// Interaction tail in units of the NN coupling `V`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionSpec {
    Nn,
    /// `V / r^6` up to `cutoff`.
    Vdw {
        cutoff: usize,
    },
    /// Entry `r - 1` multiplies `V` at distance `r`.
    Range(Vec<f64>),
}

impl InteractionSpec {
    fn default_regime(&self) -> RegimeTag {
        match self {
            InteractionSpec::Nn => RegimeTag::NnOnly,
            _ => RegimeTag::WeakNonlocal,
        }
    }
}

impl std::str::FromStr for InteractionSpec {
    type Err = String;

    /// `nn`, `vdw:3`, `range:1,0,0.0014`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (head, tail) = s.split_once(':').unwrap_or((s, ""));
        match head {
            "nn" if tail.is_empty() => Ok(InteractionSpec::Nn),
            "vdw" => {
                let cutoff = if tail.is_empty() { 3 } else { tail.parse().map_err(|e| format!("vdw cutoff: {e}"))? };
                Ok(InteractionSpec::Vdw { cutoff })
            }
            "range" => tail
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| format!("range entry {x:?}: {e}")))
                .collect::<Result<Vec<_>, _>>()
                .map(InteractionSpec::Range),
            _ => Err(format!("expected nn, vdw[:cutoff] or range:v1,v2,..., got {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "one")]
    pub omega: f64,
    #[serde(default = "five")]
    pub delta_over_omega: f64,
    #[serde(default = "half")]
    pub v_over_delta: f64,
    #[serde(default = "nn")]
    pub interaction: InteractionSpec,
    /// Inferred from the interaction when absent.
    #[serde(default)]
    pub regime: Option<RegimeTag>,
    #[serde(default = "numeric_sw")]
    pub effective: EffectiveMode,
}

fn one() -> f64 {
    1.0
}
fn five() -> f64 {
    5.0
}
fn half() -> f64 {
    0.5
}
fn nn() -> InteractionSpec {
    InteractionSpec::Nn
}
fn numeric_sw() -> EffectiveMode {
    EffectiveMode::NumericSw
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            omega: 1.0,
            delta_over_omega: 5.0,
            v_over_delta: 0.5,
            interaction: InteractionSpec::Nn,
            regime: None,
            effective: EffectiveMode::NumericSw,
        }
    }
}

impl ModelConfig {
    pub fn regime(&self) -> RegimeTag {
        self.regime.unwrap_or_else(|| self.interaction.default_regime())
    }

    pub fn params(&self) -> Checked<ModelParams> {
        for (field, x) in [("omega", self.omega), ("delta_over_omega", self.delta_over_omega)] {
            if !(x.is_finite() && x > 0.0) {
                return Err(ConfigError::new(format!("model.{field}"), format!("must be positive, got {x}")));
            }
        }
        if !(self.v_over_delta.is_finite() && self.v_over_delta >= 0.0) {
            return Err(ConfigError::new("model.v_over_delta", "must be non-negative"));
        }
        let delta = self.omega * self.delta_over_omega;
        let v = delta * self.v_over_delta;
        let interaction = match &self.interaction {
            InteractionSpec::Nn => InteractionProfile::nearest_neighbour(v),
            InteractionSpec::Vdw { cutoff } => {
                if *cutoff == 0 {
                    return Err(ConfigError::new("model.interaction.vdw.cutoff", "must be at least 1"));
                }
                InteractionProfile::van_der_waals(v, *cutoff)
            }
            InteractionSpec::Range(r) => {
                if r.is_empty() {
                    return Err(ConfigError::new("model.interaction.range", "must not be empty"));
                }
                InteractionProfile::Range(r.iter().map(|x| x * v).collect())
            }
        };
        ModelParams::new(self.omega, delta, interaction, self.regime())
            .map_err(|e| ConfigError::new("model", e.to_string()))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Falls back to `--out-dir`, then `$HSF_OUT_DIR`, then `results`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Prepended to every output file name.
    #[serde(default)]
    pub prefix: String,
}

impl OutputConfig {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.clone().unwrap_or_default().join(format!("{}{name}", self.prefix))
    }
}

/// Root state: a literal bitstring (site 1 first) or a named template.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RootSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bits: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<RootTemplate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
}

impl RootSpec {
    pub fn resolve(&self, field: &str) -> Checked<SpinConfig> {
        let cfg = match (&self.bits, self.template) {
            (Some(bits), None) => {
                let c: SpinConfig = bits
                    .parse()
                    .map_err(|e: hsf_core::Error| ConfigError::new(format!("{field}.bits"), e.to_string()))?;
                if let Some(l) = self.length.filter(|&l| l != c.len()) {
                    return Err(ConfigError::new(
                        format!("{field}.length"),
                        format!("{l} does not match bitstring length {}", c.len()),
                    ));
                }
                c
            }
            (None, Some(t)) => {
                let len = self
                    .length
                    .ok_or_else(|| ConfigError::new(format!("{field}.length"), "required with a template"))?;
                t.build(len).map_err(|e| ConfigError::new(format!("{field}.template"), e.to_string()))?
            }
            _ => return Err(ConfigError::new(field, "give exactly one of bits or template")),
        };
        Ok(cfg)
    }

    /// Replace a template by its literal bitstring.
    fn resolved(&self, field: &str) -> Checked<RootSpec> {
        let c = self.resolve(field)?;
        Ok(RootSpec { bits: Some(c.to_string()), template: None, length: Some(c.len()) })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectorsConfig {
    pub length: usize,
    /// Also decompose each sector into fragments.
    #[serde(default)]
    pub fragments: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FragmentConfig {
    pub root: RootSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    /// Include basis and edges in the JSON dump.
    #[serde(default = "yes")]
    pub dump_basis: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowSpec {
    Full,
    Mid(usize),
}

impl From<WindowSpec> for Window {
    fn from(w: WindowSpec) -> Self {
        match w {
            WindowSpec::Full => Window::Full,
            WindowSpec::Mid(n) => Window::Mid(n),
        }
    }
}

impl std::str::FromStr for WindowSpec {
    type Err = String;

    /// `full` or `mid:N`.
    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "full" => Ok(WindowSpec::Full),
            Some(("mid", n)) => n.parse().map(WindowSpec::Mid).map_err(|e| format!("mid window: {e}")),
            _ => Err(format!("expected full or mid:N, got {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub root: RootSpec,
    #[serde(default = "full")]
    pub window: WindowSpec,
    /// Restrict to the inversion-even block.
    #[serde(default)]
    pub inversion: bool,
    /// Eigenstate entanglement entropy at `cut` (half chain by default).
    #[serde(default)]
    pub entropy: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut: Option<usize>,
    #[serde(default = "fifty")]
    pub bins: usize,
}

fn full() -> WindowSpec {
    WindowSpec::Full
}
fn fifty() -> usize {
    50
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Log,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    /// `1 / J_P`.
    #[serde(rename = "jp")]
    #[value(name = "jp")]
    JP,
    /// `1 / J_Q`.
    #[serde(rename = "jq")]
    #[value(name = "jq")]
    JQ,
    /// `1 / Omega`.
    Omega,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub kind: GridKind,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub unit: TimeUnit,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { kind: GridKind::Log, start: 0.1, stop: 40.0, points: 200, unit: TimeUnit::JP }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuenchConfig {
    pub root: RootSpec,
    #[serde(default)]
    pub times: TimeGrid,
    #[serde(default)]
    pub propagator: Propagator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut: Option<usize>,
    /// Also evolve under the full driven Ising Hamiltonian.
    #[serde(default)]
    pub compare_exact: bool,
    /// Interaction range kept in the exact Hamiltonian.
    #[serde(default = "three")]
    pub exact_cutoff: usize,
}

fn three() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub template: RootTemplate,
    pub lengths: Vec<usize>,
    pub widths: Vec<f64>,
    #[serde(default = "two_hundred")]
    pub realizations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "fifty")]
    pub window: usize,
    #[serde(default = "three")]
    pub cutoff: usize,
    #[serde(default = "yes")]
    pub r: bool,
    #[serde(default = "yes")]
    pub entropy: bool,
}

fn two_hundred() -> usize {
    200
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    R,
    Entropy,
    EntropyVariance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FssConfig {
    /// `sweep.json` written by a disorder sweep.
    pub input: PathBuf,
    #[serde(default = "variance")]
    pub observable: Observable,
    #[serde(default = "critical_range")]
    pub critical_range: (f64, f64),
    #[serde(default = "nu_range")]
    pub nu_range: (f64, f64),
    #[serde(default = "grid")]
    pub grid: usize,
    #[serde(default = "four")]
    pub refinements: usize,
    #[serde(default = "yes")]
    pub per_site: bool,
}

fn variance() -> Observable {
    Observable::EntropyVariance
}
fn critical_range() -> (f64, f64) {
    (0.001, 0.05)
}
fn nu_range() -> (f64, f64) {
    (0.3, 3.0)
}
fn grid() -> usize {
    41
}
fn four() -> usize {
    4
}

fn positive_range(field: &str, (lo, hi): (f64, f64)) -> Checked<()> {
    if lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("need 0 < lo < hi, got ({lo}, {hi})")))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Checked<Self> {
        serde_json::from_str(text).map_err(|e| ConfigError::new("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Checked<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Validate every field and return the config with defaults made explicit:
    /// templates expanded to bitstrings, regime inferred, output directory fixed.
    pub fn resolve(&self, fallback_dir: Option<&Path>) -> Checked<Self> {
        let mut out = self.clone();
        out.model.regime = Some(self.model.regime());
        if self.jobs == Some(0) {
            return Err(ConfigError::new("jobs", "must be at least 1"));
        }
        let dir = self
            .output
            .dir
            .clone()
            .or_else(|| fallback_dir.map(Path::to_path_buf))
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        out.output.dir = Some(dir);
        let needs_model = !matches!(self.experiment, Experiment::Sectors(_) | Experiment::Fss(_));
        if needs_model {
            self.model.params()?;
        }
        match &mut out.experiment {
            Experiment::Sectors(s) => {
                if s.length == 0 || s.length > hsf_core::basis::MAX_ENUMERATION_LEN {
                    return Err(ConfigError::new(
                        "experiment.length",
                        format!("must be in 1..={}", hsf_core::basis::MAX_ENUMERATION_LEN),
                    ));
                }
            }
            Experiment::Fragment(f) => {
                f.root = f.root.resolved("experiment.root")?;
                if f.cap == Some(0) {
                    return Err(ConfigError::new("experiment.cap", "must be at least 1"));
                }
            }
            Experiment::Spectrum(s) => {
                s.root = s.root.resolved("experiment.root")?;
                let len = s.root.length.unwrap_or(0);
                if let Some(c) = s.cut.filter(|&c| c == 0 || c >= len) {
                    return Err(ConfigError::new("experiment.cut", format!("must be in 1..{len}, got {c}")));
                }
                if s.bins == 0 {
                    return Err(ConfigError::new("experiment.bins", "must be at least 1"));
                }
                if matches!(s.window, WindowSpec::Mid(n) if n < 3) {
                    return Err(ConfigError::new("experiment.window", "mid window needs at least 3 levels"));
                }
            }
            Experiment::Quench(q) => {
                q.root = q.root.resolved("experiment.root")?;
                let len = q.root.length.unwrap_or(0);
                let t = &q.times;
                let ok = t.points >= 1
                    && t.start.is_finite()
                    && t.stop.is_finite()
                    && t.start >= 0.0
                    && t.stop >= t.start
                    && (t.kind == GridKind::Linear || t.start > 0.0);
                if !ok {
                    return Err(ConfigError::new(
                        "experiment.times",
                        "need points >= 1 and 0 <= start <= stop (start > 0 for a log grid)",
                    ));
                }
                if let Some(c) = q.cut.filter(|&c| c == 0 || c >= len) {
                    return Err(ConfigError::new("experiment.cut", format!("must be in 1..{len}, got {c}")));
                }
                if q.compare_exact && len > hsf_core::model::MAX_EXACT_LEN {
                    return Err(ConfigError::new(
                        "experiment.compare_exact",
                        format!("exact evolution supports L <= {}", hsf_core::model::MAX_EXACT_LEN),
                    ));
                }
                if q.exact_cutoff == 0 {
                    return Err(ConfigError::new("experiment.exact_cutoff", "must be at least 1"));
                }
            }
            Experiment::DisorderSweep(s) => {
                if s.lengths.is_empty() || s.widths.is_empty() {
                    return Err(ConfigError::new("experiment", "lengths and widths must be non-empty"));
                }
                for (i, &l) in s.lengths.iter().enumerate() {
                    s.template
                        .build(l)
                        .map_err(|e| ConfigError::new(format!("experiment.lengths[{i}]"), e.to_string()))?;
                }
                if let Some(i) = s.widths.iter().position(|w| !(w.is_finite() && *w >= 0.0 && *w < 1.0)) {
                    return Err(ConfigError::new(format!("experiment.widths[{i}]"), "must lie in [0, 1)"));
                }
                if s.realizations == 0 {
                    return Err(ConfigError::new("experiment.realizations", "must be at least 1"));
                }
                if s.window < 3 {
                    return Err(ConfigError::new("experiment.window", "must be at least 3"));
                }
                if !(s.r || s.entropy) {
                    return Err(ConfigError::new("experiment", "enable at least one of r and entropy"));
                }
            }
            Experiment::Fss(f) => {
                positive_range("experiment.critical_range", f.critical_range)?;
                positive_range("experiment.nu_range", f.nu_range)?;
                if f.grid < 3 {
                    return Err(ConfigError::new("experiment.grid", "must be at least 3"));
                }
            }
        }
        Ok(out)
    }
}

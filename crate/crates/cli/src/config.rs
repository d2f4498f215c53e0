//! Pipeline configuration: a JSON file merged with command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use transit_deconv::blind::SolverConfig;
use transit_deconv::simkit::{FilterSpec, SyntheticScenario};
use transit_deconv::wavelet::WaveletDictionary;
use transit_deconv::DiskGeometry;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    Blind,
    Deconv,
    Validate,
    LongrangeCheck,
}

/// Where the noise level comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SigmaSource {
    Fixed(f64),
    /// Wavelet median estimate, averaged over the observations.
    Rme,
    /// Best whiteness over `m·σ_RME` for each multiplier.
    Adaptive(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MuSource {
    Fixed(f64),
    Estimate,
}

fn parse_number(s: &str, what: &str) -> Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("{what}: '{s}' is not a finite number"))
}

impl FromStr for SigmaSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "rme" => Ok(SigmaSource::Rme),
            Some(("fixed", v)) => {
                let v = parse_number(v, "sigma")?;
                if v < 0.0 {
                    return Err("sigma must be >= 0".into());
                }
                Ok(SigmaSource::Fixed(v))
            }
            Some(("adaptive", list)) => {
                let m = list.split(',').map(|v| parse_number(v, "sigma multiplier")).collect::<Result<Vec<_>, _>>()?;
                if m.is_empty() || m.iter().any(|v| *v < 0.0) {
                    return Err("sigma multipliers must be >= 0".into());
                }
                Ok(SigmaSource::Adaptive(m))
            }
            _ => Err(format!("sigma source '{s}' is not fixed:<v>, rme or adaptive:<m1>,<m2>,...")),
        }
    }
}

impl fmt::Display for SigmaSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaSource::Fixed(v) => write!(f, "fixed:{v}"),
            SigmaSource::Rme => write!(f, "rme"),
            SigmaSource::Adaptive(m) => {
                let parts: Vec<String> = m.iter().map(|v| v.to_string()).collect();
                write!(f, "adaptive:{}", parts.join(","))
            }
        }
    }
}

impl TryFrom<String> for SigmaSource {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<SigmaSource> for String {
    fn from(s: SigmaSource) -> String {
        s.to_string()
    }
}

impl FromStr for MuSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "estimate" => Ok(MuSource::Estimate),
            Some(("fixed", v)) => Ok(MuSource::Fixed(parse_number(v, "mu")?)),
            _ => Err(format!("mu source '{s}' is not fixed:<v> or estimate")),
        }
    }
}

impl fmt::Display for MuSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MuSource::Fixed(v) => write!(f, "fixed:{v}"),
            MuSource::Estimate => write!(f, "estimate"),
        }
    }
}

impl TryFrom<String> for MuSource {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<MuSource> for String {
    fn from(s: MuSource) -> String {
        s.to_string()
    }
}

/// Disk position in observed-patch pixels; the Ω / Θ radii default to `R ∓ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub center: (f64, f64),
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_radius: Option<f64>,
}

impl GeometrySpec {
    pub fn build(&self) -> Result<DiskGeometry, CliError> {
        let inner = self.inner_radius.unwrap_or(self.radius - 1.0);
        let outer = self.outer_radius.unwrap_or(self.radius + 1.0);
        Ok(DiskGeometry::with_radii(self.center, self.radius, inner, outer)?)
    }
}

impl From<DiskGeometry> for GeometrySpec {
    fn from(g: DiskGeometry) -> Self {
        Self { center: g.center, radius: g.radius, inner_radius: Some(g.inner_radius), outer_radius: Some(g.outer_radius) }
    }
}

/// Array stems (paths without the `.f64` / `.json` suffix) and side inputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    /// Manifest written by `simulate`; fills the fields below that are left empty.
    pub manifest: Option<PathBuf>,
    pub observations: Vec<PathBuf>,
    pub geometry: Vec<GeometrySpec>,
    /// Ground-truth images matching `observations`, for metrics only.
    pub truth: Vec<PathBuf>,
    pub truth_filter: Option<PathBuf>,
    /// Filter used by `deconv` and `validate`.
    pub filter: Option<PathBuf>,
    /// Blind run report; supplies ρ (and μ) to `deconv` / `validate`.
    pub report: Option<PathBuf>,
    pub held_out: Option<PathBuf>,
    pub held_out_geometry: Option<GeometrySpec>,
    pub held_out_truth: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub filter: FilterSpec,
    pub patches: usize,
    /// Also write one extra cutout for validation.
    pub held_out: bool,
    /// Full scenario; overrides `filter` / `patches` and the default geometry.
    pub scenario: Option<SyntheticScenario>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { filter: FilterSpec::standard_gaussian(), patches: 3, held_out: true, scenario: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeconvConfig {
    /// Base ρ of the non-blind sweep; defaults to half the blind run's ρ.
    pub rho: Option<f64>,
    /// Emit the observed / deconvolved profile through the disk center.
    pub profile_csv: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LongRangeConfig {
    pub texture_side: usize,
    pub texture_seed: u64,
    /// Half-width of the full power-law PSF.
    pub psf_half_width: usize,
    pub exponent: f64,
    /// Disk painted black on the texture before convolution.
    pub disk: GeometrySpec,
    /// Radius of the measurement window around the disk center.
    pub window_radius: f64,
}

impl Default for LongRangeConfig {
    fn default() -> Self {
        Self {
            texture_side: 512,
            texture_seed: transit_deconv::simkit::DEFAULT_TEXTURE_SEED,
            psf_half_width: 200,
            exponent: 3.0,
            disk: GeometrySpec { center: (256.0, 256.0), radius: 48.0, inner_radius: None, outer_radius: None },
            window_radius: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mode: Option<Mode>,
    pub out_dir: PathBuf,
    pub inputs: Inputs,
    /// Filter half-width and unknown border width.
    pub b: usize,
    pub levels: usize,
    pub sigma: SigmaSource,
    pub mu: MuSource,
    /// Parametric prefilter kernel (array stem).
    pub prefilter: Option<PathBuf>,
    pub seed: u64,
    /// Worker cap; all cores when absent.
    pub threads: Option<usize>,
    pub emit_pgm: bool,
    pub trace: bool,
    /// Rerun with the first 1, 2, …, P observations, each warm-started.
    pub sweep: bool,
    /// Caps, tolerances and schedule; σ, μ, b, levels and seed are taken from the fields above.
    pub solver: SolverConfig,
    pub simulate: SimulateConfig,
    pub deconv: DeconvConfig,
    pub longrange: LongRangeConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: None,
            out_dir: PathBuf::from("out"),
            inputs: Inputs::default(),
            b: 16,
            levels: WaveletDictionary::DEFAULT_LEVELS,
            sigma: SigmaSource::Rme,
            mu: MuSource::Estimate,
            prefilter: None,
            seed: 0,
            threads: None,
            emit_pgm: false,
            trace: false,
            sweep: false,
            solver: SolverConfig::default(),
            simulate: SimulateConfig::default(),
            deconv: DeconvConfig::default(),
            longrange: LongRangeConfig::default(),
        }
    }
}

/// Command-line values that replace config keys when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub sigma: Option<SigmaSource>,
    pub mu: Option<MuSource>,
    pub prefilter: Option<PathBuf>,
    pub b: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub emit_pgm: bool,
    pub trace: bool,
    pub sweep: bool,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("missing_input", format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config("config_error", format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, mode: Mode, o: Overrides) {
        self.mode = Some(mode);
        if let Some(v) = o.out_dir {
            self.out_dir = v;
        }
        if let Some(v) = o.sigma {
            self.sigma = v;
        }
        if let Some(v) = o.mu {
            self.mu = v;
        }
        if let Some(v) = o.prefilter {
            self.prefilter = Some(v);
        }
        if let Some(v) = o.b {
            self.b = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.threads {
            self.threads = Some(v);
        }
        self.emit_pgm |= o.emit_pgm;
        self.trace |= o.trace;
        self.sweep |= o.sweep;
    }

    /// Solver settings with the top-level keys folded in; σ and μ still to be resolved.
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig { border: self.b, levels: self.levels, theta_seed: self.seed, ..self.solver.clone() }
    }

    /// The simulation scenario, built from the short form unless a full one is given.
    pub fn scenario(&self) -> Result<SyntheticScenario, CliError> {
        if let Some(s) = &self.simulate.scenario {
            let mut s = s.clone();
            s.seed = self.seed;
            return Ok(s);
        }
        let count = self.simulate.patches + usize::from(self.simulate.held_out);
        Ok(SyntheticScenario::standard(self.simulate.filter.clone(), count, self.seed)?)
    }
}

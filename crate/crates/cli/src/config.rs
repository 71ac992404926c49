use std::fmt;
use std::path::{Path, PathBuf};

use eigenbound::fredholm::GridSpec;
use eigenbound::verify::Fault;
use eigenbound::zerocount::{LocateOptions, Rect};
use eigenbound::{BoundMode, DecayClass, Potential, PotentialSpec, QuadSpec};
use serde::{Deserialize, Serialize};

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub const EXIT_VIOLATION: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<eigenbound::Error> for CliError {
    fn from(e: eigenbound::Error) -> Self {
        let code = if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_CONFIG };
        CliError { code, message: e.to_string() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeChoice {
    #[default]
    Auto,
    Theorem1,
    Theorem2,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub n_re: usize,
    pub n_im: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { n_re: 21, n_im: 11 }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub sup_samples: Option<usize>,
    pub min_box: Option<f64>,
    /// Largest |k| at which the Jensen circle is sampled.
    pub jensen_k_max: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub kernel_samples: usize,
    pub counting: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { kernel_samples: 20, counting: true }
    }
}

/// The on-disk config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub potential: PotentialSpec,
    pub eps: Option<f64>,
    #[serde(default)]
    pub mode: ModeChoice,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    pub region: Option<Rect>,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub verify: VerifyConfig,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub l_max: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Double,
    Extended,
}

impl Precision {
    pub fn from_env() -> Result<Self, CliError> {
        match std::env::var("EIGENBOUND_PRECISION") {
            Err(_) => Ok(Precision::Double),
            Ok(v) => match v.trim() {
                "" | "double" => Ok(Precision::Double),
                "extended" => Ok(Precision::Extended),
                other => {
                    Err(CliError::config(format!("EIGENBOUND_PRECISION must be double or extended, got {other:?}")))
                }
            },
        }
    }
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub eps: Option<f64>,
    pub grid: Option<String>,
    pub region: Option<String>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub refine: bool,
    pub seed: Option<u64>,
    pub fault: Option<String>,
}

/// Everything a subcommand needs, validated.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: PotentialSpec,
    pub potential: Potential,
    pub eps: f64,
    pub mode: BoundMode,
    pub grid: GridSpec,
    pub region: Option<Rect>,
    pub scan: ScanConfig,
    pub quad: QuadSpec,
    pub locate: LocateOptions,
    pub jensen_k_max: f64,
    pub verify: VerifyConfig,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub refine: bool,
    pub l_max: Option<usize>,
    pub precision: Precision,
    pub fault: Option<Fault>,
}

pub fn parse_file(text: &str, path: &Path) -> Result<FileConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::config(format!("{name} must be positive and finite, got {v}")))
    }
}

fn parse_fault(s: &str) -> Result<Fault, CliError> {
    let bad = || CliError::config(format!("fault must look like kernel=0.01 or ceiling=1e-30, got {s:?}"));
    let (what, v) = s.split_once('=').ok_or_else(bad)?;
    let v: f64 = v.trim().parse().map_err(|_| bad())?;
    match what.trim() {
        "kernel" => Ok(Fault::ScaleKernelConstant(v)),
        "ceiling" => Ok(Fault::ScaleCeiling(v)),
        _ => Err(bad()),
    }
}

impl RunConfig {
    pub fn load(path: &Path, ov: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::resolve(parse_file(&text, path)?, ov)
    }

    pub fn resolve(file: FileConfig, ov: &Overrides) -> Result<Self, CliError> {
        let potential =
            Potential::from_spec(&file.potential).map_err(|e| CliError::config(format!("potential: {e}")))?;
        let class = potential.decay_class();
        let eps = match (ov.eps.or(file.eps), class) {
            (Some(e), _) => positive("eps", e)?,
            (None, DecayClass::CompactSupport { .. }) => 1.0,
            (None, DecayClass::ExponentialDecay { .. }) => {
                return Err(CliError::config("eps is required for exponential-decay potentials"))
            }
        };
        let mode = match file.mode {
            ModeChoice::Auto => BoundMode::for_class(class),
            ModeChoice::Theorem1 => BoundMode::Theorem1,
            ModeChoice::Theorem2 => BoundMode::Theorem2,
        };
        if mode != BoundMode::for_class(class) {
            return Err(CliError::config(format!("mode {mode} does not match the {} potential", class.name())));
        }
        let grid = match &ov.grid {
            Some(s) => GridSpec::parse(s)?,
            None => file.grid.unwrap_or_default(),
        };
        let region = match &ov.region {
            Some(s) => Some(Rect::parse(s)?),
            None => match file.region {
                Some(r) => Some(Rect::new(r.re0, r.re1, r.im0, r.im1)?),
                None => None,
            },
        };
        let seed = ov.seed.or(file.seed).unwrap_or(0);
        let t = file.tolerances;
        let mut quad = QuadSpec { seed, ..QuadSpec::default() };
        if let Some(v) = t.rel_tol {
            quad.rel_tol = positive("rel_tol", v)?;
        }
        if let Some(v) = t.abs_tol {
            quad.abs_tol = positive("abs_tol", v)?;
        }
        if let Some(n) = t.sup_samples {
            if n == 0 {
                return Err(CliError::config("sup_samples must be positive"));
            }
            quad.sup_samples = n;
        }
        let mut locate = LocateOptions::default();
        if let Some(v) = t.min_box {
            locate.min_box = positive("min_box", v)?;
        }
        let jensen_k_max = positive("jensen_k_max", t.jensen_k_max.unwrap_or(6.0))?;
        if file.scan.n_re < 1 || file.scan.n_im < 1 {
            return Err(CliError::config("scan needs at least one point per direction"));
        }
        let threads = ov.threads.or(file.threads);
        if threads == Some(0) {
            return Err(CliError::config("threads must be at least 1"));
        }
        Ok(RunConfig {
            spec: file.potential,
            potential,
            eps,
            mode,
            grid,
            region,
            scan: file.scan,
            quad,
            locate,
            jensen_k_max,
            verify: file.verify,
            out: ov.out.clone().or(file.out),
            threads,
            refine: ov.refine,
            l_max: file.l_max,
            precision: Precision::from_env()?,
            fault: ov.fault.as_deref().map(parse_fault).transpose()?,
        })
    }
}

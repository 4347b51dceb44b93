//! Run configuration: one TOML file drives the whole pipeline, so dataset
//! generation, training, evaluation, and tracking all read the same
//! parameters. Command-line flags override individual fields.
//!
//! Invariants enforced at load time (violations are usage errors, exit 2):
//! every referenced file exists, exactly one case source is given, and the
//! seeds are explicit — there are no entropy-derived defaults anywhere, so
//! a config names its outputs completely.

use std::fmt;
use std::path::{Path, PathBuf};

use gridopf::grid::{derive_family, parse_case, NetworkCase};
use gridopf::nn::Schedule;
use serde::Deserialize;

/// Errors carrying the process exit code: usage problems (bad flags,
/// malformed or inconsistent config) exit 2, domain failures (solver,
/// data, model) exit 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Domain(m) => write!(f, "{m}"),
        }
    }
}

impl From<gridopf::Error> for CliError {
    fn from(e: gridopf::Error) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Domain(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Directory receiving every artifact of the run.
    pub output_dir: PathBuf,
    pub cases: CasesCfg,
    pub sampling: Option<SamplingCfg>,
    #[serde(default)]
    pub tracking: TrackingCfg,
    #[serde(default)]
    pub solver: SolverCfg,
    pub train: Option<TrainCfg>,
    #[serde(default)]
    pub eval: EvalCfg,
}

/// Where the networks come from: explicit case files, or a nested family
/// derived from one base case. Exactly one source must be configured.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CasesCfg {
    #[serde(default)]
    pub paths: Vec<PathBuf>,
    pub derive: Option<DeriveCfg>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeriveCfg {
    pub base: PathBuf,
    /// Bus counts of the family members, strictly increasing; the last may
    /// equal the base size to include the full network.
    pub targets: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingCfg {
    /// Sampling seed; mandatory so datasets are reproducible by config.
    pub seed: u64,
    #[serde(default = "default_n_per_network")]
    pub n_per_network: usize,
    /// Per-bus uniform scaling range as fractions of base load.
    #[serde(default = "default_range")]
    pub range: (f64, f64),
    #[serde(default = "default_split")]
    pub split_fraction: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackingCfg {
    /// Peak-to-trough swing of the daily profile as a fraction of base load.
    pub swing: f64,
    /// Time slots per day.
    pub slots: usize,
    /// Jittered training samples around each slot base.
    pub per_slot: usize,
}

impl Default for TrackingCfg {
    fn default() -> Self {
        TrackingCfg { swing: 0.54, slots: 288, per_slot: 2 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverCfg {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverCfg {
    fn default() -> Self {
        SolverCfg { tol: 1e-6, max_iter: 150 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCfg {
    /// Shuffle/init seed; mandatory so checkpoints are reproducible by config.
    pub seed: u64,
    pub hidden_dims: Vec<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_halving")]
    pub lr_halving_period: usize,
    #[serde(default)]
    pub schedule: Schedule,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalCfg {
    /// Constraint-satisfaction tolerance (p.u.).
    pub tol: f64,
}

impl Default for EvalCfg {
    fn default() -> Self {
        EvalCfg { tol: 1e-4 }
    }
}

fn default_n_per_network() -> usize {
    1000
}
fn default_range() -> (f64, f64) {
    (0.9, 1.1)
}
fn default_split() -> f64 {
    0.8
}
fn default_alpha() -> f64 {
    1e-3
}
fn default_batch_size() -> usize {
    100
}
fn default_epochs() -> usize {
    150
}
fn default_gamma() -> f64 {
    1.0
}
fn default_halving() -> usize {
    50
}

impl RunConfig {
    /// Parses and validates a config file. Any inconsistency — including a
    /// referenced file that does not exist — is a usage error.
    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        match (&self.cases.paths.is_empty(), &self.cases.derive) {
            (true, None) => {
                return Err(usage("config names no networks: set cases.paths or cases.derive"))
            }
            (false, Some(_)) => {
                return Err(usage("cases.paths and cases.derive are mutually exclusive"))
            }
            _ => {}
        }
        for p in &self.cases.paths {
            if !p.is_file() {
                return Err(usage(format!("case file not found: {}", p.display())));
            }
        }
        if let Some(d) = &self.cases.derive {
            if !d.base.is_file() {
                return Err(usage(format!("base case file not found: {}", d.base.display())));
            }
            if d.targets.is_empty() {
                return Err(usage("cases.derive.targets is empty"));
            }
            if d.targets.windows(2).any(|w| w[0] >= w[1]) {
                return Err(usage("cases.derive.targets must be strictly increasing"));
            }
        }
        if let Some(s) = &self.sampling {
            if !(s.range.0 > 0.0 && s.range.0 <= s.range.1) {
                return Err(usage(format!(
                    "sampling.range [{}, {}] must satisfy 0 < lo <= hi",
                    s.range.0, s.range.1
                )));
            }
            if !(0.0..=1.0).contains(&s.split_fraction) {
                return Err(usage(format!(
                    "sampling.split_fraction {} outside [0, 1]",
                    s.split_fraction
                )));
            }
            if s.n_per_network == 0 {
                return Err(usage("sampling.n_per_network must be at least 1"));
            }
        }
        if !(0.0..1.0).contains(&self.tracking.swing) {
            return Err(usage(format!("tracking.swing {} outside [0, 1)", self.tracking.swing)));
        }
        if self.tracking.slots == 0 {
            return Err(usage("tracking.slots must be at least 1"));
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return Err(usage("solver.tol must be positive and solver.max_iter at least 1"));
        }
        if let Some(t) = &self.train {
            if t.hidden_dims.is_empty() || t.hidden_dims.contains(&0) {
                return Err(usage("train.hidden_dims must be non-empty positive widths"));
            }
            if t.batch_size == 0 || t.epochs == 0 {
                return Err(usage("train.batch_size and train.epochs must be at least 1"));
            }
            if !(t.alpha > 0.0) || t.lr_halving_period == 0 {
                return Err(usage(
                    "train.alpha must be positive and train.lr_halving_period at least 1",
                ));
            }
            if !(t.gamma >= 0.0) {
                return Err(usage("train.gamma must be non-negative"));
            }
        }
        if !(self.eval.tol > 0.0) {
            return Err(usage("eval.tol must be positive"));
        }
        Ok(())
    }

    /// The sampling section, required by data-generating commands.
    pub fn sampling(&self) -> CliResult<&SamplingCfg> {
        self.sampling
            .as_ref()
            .ok_or_else(|| usage("config has no [sampling] section (required, seed included)"))
    }

    /// The training section, required by model-building commands.
    pub fn train(&self) -> CliResult<&TrainCfg> {
        self.train
            .as_ref()
            .ok_or_else(|| usage("config has no [train] section (required, seed included)"))
    }

    /// Parses the configured networks in registration order. For a derived
    /// family, member names are `<base>_<target>`.
    pub fn load_cases(&self) -> CliResult<Vec<NetworkCase>> {
        if let Some(d) = &self.cases.derive {
            let text = std::fs::read_to_string(&d.base)?;
            let base = parse_case(&text)
                .map_err(|e| CliError::Domain(format!("{}: {e}", d.base.display())))?;
            return Ok(derive_family(&base, &d.targets)?);
        }
        self.cases
            .paths
            .iter()
            .map(|p| {
                let text = std::fs::read_to_string(p)?;
                parse_case(&text).map_err(|e| CliError::Domain(format!("{}: {e}", p.display())))
            })
            .collect()
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoders::{DecoderKind, MatchScope};
use crate::ensemble::{
    CompressionConstraint, MappingPolicy, MappingStrategy, DEFAULT_BRUTE_FORCE_CAP, DEFAULT_MAX_WORDS_PER_TYPE,
};
use crate::error::{Error, Result};
use crate::exponents::{ContinuousMapping, ExponentOptions, DEFAULT_INNER_TOL};
use crate::simulation::{SystemConfig, DEFAULT_MAX_USERS};
use crate::types::{ConditionalKernel, Distribution};

/// Environment variable whose value replaces the configured master seed.
pub const SEED_ENV: &str = "IDENT_SEED";

fn default_strategy() -> MappingStrategy {
    MappingStrategy::IdentityIfAllowed
}

fn default_trials() -> u64 {
    1000
}

fn default_decoders() -> Vec<DecoderKind> {
    vec![DecoderKind::Universal, DecoderKind::Mmi]
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Caps {
    #[serde(default = "Caps::users")]
    pub max_users: u64,
    #[serde(default = "Caps::words")]
    pub max_words_per_type: u64,
    #[serde(default = "Caps::brute")]
    pub brute_force_cap: u64,
}

impl Caps {
    fn users() -> u64 {
        DEFAULT_MAX_USERS
    }
    fn words() -> u64 {
        DEFAULT_MAX_WORDS_PER_TYPE
    }
    fn brute() -> u64 {
        DEFAULT_BRUTE_FORCE_CAP
    }
}

impl Default for Caps {
    fn default() -> Self {
        Self { max_users: Self::users(), max_words_per_type: Self::words(), brute_force_cap: Self::brute() }
    }
}

/// `[exponents]` section: solver options plus the rate grids of the `exponent` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentSection {
    /// Compute `E(R_I)` and `E_DD(R_I)` for the experiment summary.
    #[serde(default = "default_true")]
    pub predict: bool,
    /// Identification rates of the exponent curve.
    #[serde(default)]
    pub rates: Vec<f64>,
    /// Compression rates of the capacity curve.
    #[serde(default)]
    pub capacity_rates: Vec<f64>,
    #[serde(flatten)]
    pub options: ExponentOptions,
}

impl Default for ExponentSection {
    fn default() -> Self {
        Self { predict: true, rates: Vec::new(), capacity_rates: Vec::new(), options: ExponentOptions::default() }
    }
}

/// The on-disk TOML configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// Optional alphabet sizes, checked against `source` and `channel`.
    #[serde(default)]
    pub k_x: Option<usize>,
    /// Reproduction alphabet size; defaults to `|X|`.
    #[serde(default)]
    pub k_y: Option<usize>,
    #[serde(default)]
    pub k_z: Option<usize>,
    pub source: Distribution,
    pub channel: ConditionalKernel,
    /// Block length for single-length commands.
    pub n: usize,
    /// Lengths of a simulation sweep; defaults to `[n]`.
    #[serde(default)]
    pub n_list: Vec<usize>,
    /// Identification rate `R_I` (nats).
    pub rate: f64,
    pub delta: f64,
    pub epsilon: f64,
    #[serde(default = "default_strategy")]
    pub policy: MappingStrategy,
    #[serde(default = "CompressionConstraint::unconstrained")]
    pub constraint: CompressionConstraint,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_decoders")]
    pub decoders: Vec<DecoderKind>,
    #[serde(default)]
    pub fixed_codebook: bool,
    #[serde(default)]
    pub match_scope: MatchScope,
    #[serde(default)]
    pub caps: Caps,
    #[serde(default)]
    pub exponents: ExponentSection,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| e.context(path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let kx = self.source.len();
        if self.channel.k_in() != kx {
            return Err(Error::DimensionMismatch(format!(
                "channel has {} input rows, source has {kx} symbols",
                self.channel.k_in()
            )));
        }
        for (name, given, actual) in [("k_x", self.k_x, kx), ("k_z", self.k_z, self.channel.k_out())] {
            if given.is_some_and(|g| g != actual) {
                return Err(Error::DimensionMismatch(format!("{name} = {} but the arrays have {actual}", given.unwrap())));
            }
        }
        if self.k_y() == 0 || self.k_y() > 255 {
            return Err(Error::InvalidParameter(format!("k_y = {}", self.k_y())));
        }
        self.policy()?;
        self.constraint.validate()?;
        self.exponents.options.validate()?;
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        self.system(self.n).map(|_| ())
    }

    pub fn k_y(&self) -> usize {
        self.k_y.unwrap_or(self.source.len())
    }

    pub fn policy(&self) -> Result<MappingPolicy> {
        MappingPolicy::new(self.policy.clone(), self.delta, self.epsilon)
    }

    /// The lengths to sweep.
    pub fn lengths(&self) -> Vec<usize> {
        if self.n_list.is_empty() {
            vec![self.n]
        } else {
            self.n_list.clone()
        }
    }

    /// System at block length `n`.
    pub fn system(&self, n: usize) -> Result<SystemConfig> {
        let cfg = SystemConfig {
            source: self.source.clone(),
            channel: self.channel.clone(),
            n,
            rate: self.rate,
            k_y: self.k_y(),
            policy: self.policy()?,
            constraint: self.constraint.clone(),
            max_users: self.caps.max_users,
            max_words_per_type: self.caps.max_words_per_type,
            brute_force_cap: self.caps.brute_force_cap,
            match_scope: self.match_scope,
            inner_tol: DEFAULT_INNER_TOL,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The continuous mapping the ensemble policy induces, for exponent evaluation.
    pub fn continuous_mapping(&self) -> Result<ContinuousMapping> {
        Ok(ContinuousMapping::Policy { policy: self.policy()?, constraint: self.constraint.clone(), k_y: self.k_y() })
    }
}

/// Master seed: an explicit value wins, then `IDENT_SEED`, then the configured seed.
pub fn resolve_seed(configured: u64, explicit: Option<u64>) -> Result<u64> {
    if let Some(s) = explicit {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("{SEED_ENV}='{v}' is not an unsigned 64-bit integer"))),
        Err(std::env::VarError::NotPresent) => Ok(configured),
        Err(e) => Err(Error::InvalidParameter(format!("{SEED_ENV}: {e}"))),
    }
}

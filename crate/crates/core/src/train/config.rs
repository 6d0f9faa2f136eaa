use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::BucketConfig;
use crate::error::{Error, Result};
use crate::io::sha256_hex;
use crate::losses::LossWeights;
use crate::model::ModelConfig;
use crate::nn::LearningRates;

pub const CONFIG_FORMAT_VERSION: u32 = 1;

/// Named points of the ablation lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Variant {
    /// Single-task, no bias tower, no ordinal distillation; midpoint decode.
    Nm,
    /// `Nm` plus the bias tower.
    Nmb,
    /// `Nm` plus ordinal distillation.
    Nmo,
    /// Full single-task block.
    Mdme,
    /// Multi-task shared bottom without Mono Units or calibration.
    S,
    /// `S` plus Mono Units.
    Sm,
    /// `S` plus calibration.
    Sc,
    /// Mono Units and calibration.
    Odmn,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Nm,
        Variant::Nmb,
        Variant::Nmo,
        Variant::Mdme,
        Variant::S,
        Variant::Sm,
        Variant::Sc,
        Variant::Odmn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Nm => "NM",
            Variant::Nmb => "NMB",
            Variant::Nmo => "NMO",
            Variant::Mdme => "MDME",
            Variant::S => "S",
            Variant::Sm => "SM",
            Variant::Sc => "SC",
            Variant::Odmn => "ODMN",
        }
    }

    pub fn flags(self) -> Flags {
        let single = |bias_tower, distillation| Flags {
            mono: false,
            calibration: false,
            distillation,
            bias_tower,
            single_task: true,
        };
        let multi = |mono, calibration| Flags {
            mono,
            calibration,
            distillation: true,
            bias_tower: true,
            single_task: false,
        };
        match self {
            Variant::Nm => single(false, false),
            Variant::Nmb => single(true, false),
            Variant::Nmo => single(false, true),
            Variant::Mdme => single(true, true),
            Variant::S => multi(false, false),
            Variant::Sm => multi(true, false),
            Variant::Sc => multi(false, true),
            Variant::Odmn => multi(true, true),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::Config(format!(
                    "unknown variant `{s}`, expected one of {}",
                    names.join("|")
                ))
            })
    }
}

/// Resolved component switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub mono: bool,
    pub calibration: bool,
    /// Ordinal towers are trained and distilled into the classifiers.
    pub distillation: bool,
    pub bias_tower: bool,
    /// Train only the longest horizon.
    pub single_task: bool,
}

/// Per-component overrides applied on top of the variant's flags.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub mono: Option<bool>,
    pub calibration: Option<bool>,
    pub distillation: Option<bool>,
    pub bias_tower: Option<bool>,
    pub single_task: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub format_version: u32,
    /// Feature schema for delimited datasets; defaults to `<data>.schema.json`.
    pub schema: Option<PathBuf>,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rates: LearningRates,
    pub loss: LossWeights,
    pub model: ModelConfig,
    /// One entry for every task, or a single entry shared by all.
    pub buckets: Vec<BucketConfig>,
    pub variant: Variant,
    pub overrides: Overrides,
    /// Fit the plain-MSE regressor instead of the bucketed network.
    pub baseline: bool,
    pub validation_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            schema: None,
            seed: 0,
            epochs: 10,
            batch_size: 512,
            learning_rates: LearningRates {
                embedding: 0.1,
                network: 0.05,
            },
            loss: LossWeights::default(),
            model: ModelConfig::default(),
            buckets: vec![BucketConfig::default()],
            variant: Variant::Odmn,
            overrides: Overrides::default(),
            baseline: false,
            validation_fraction: 0.1,
        }
    }
}

impl RunConfig {
    pub fn flags(&self) -> Flags {
        let mut f = self.variant.flags();
        let o = &self.overrides;
        f.mono = o.mono.unwrap_or(f.mono);
        f.calibration = o.calibration.unwrap_or(f.calibration);
        f.distillation = o.distillation.unwrap_or(f.distillation);
        f.bias_tower = o.bias_tower.unwrap_or(f.bias_tower);
        f.single_task = o.single_task.unwrap_or(f.single_task);
        f
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "config format_version {}, this build reads {CONFIG_FORMAT_VERSION}",
                self.format_version
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        let lr = self.learning_rates;
        if !(lr.embedding.is_finite()
            && lr.embedding > 0.0
            && lr.network.is_finite()
            && lr.network > 0.0)
        {
            return Err(Error::Config(format!(
                "learning rates must be positive: {lr:?}"
            )));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(
                "validation_fraction must lie in (0, 1)".into(),
            ));
        }
        if self.buckets.is_empty() {
            return Err(Error::Config(
                "at least one bucket config is required".into(),
            ));
        }
        self.loss.validate()?;
        self.model.validate()
    }

    /// Bucket configs for `tasks` tasks.
    pub fn bucket_configs(&self, tasks: usize) -> Result<Vec<BucketConfig>> {
        match self.buckets.len() {
            1 => Ok(vec![self.buckets[0].clone(); tasks]),
            n if n == tasks => Ok(self.buckets.clone()),
            n => Err(Error::Config(format!(
                "{n} bucket configs for {tasks} tasks"
            ))),
        }
    }

    /// Hash of everything that shapes a run except the epoch budget, so a
    /// checkpoint can be resumed with a larger one.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.epochs = 0;
        c.schema = None;
        sha256_hex(&serde_json::to_vec(&c).expect("config serializes"))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("config: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_hyperparameters() {
        let c = RunConfig::default();
        assert_eq!(c.batch_size, 512);
        assert_eq!(c.learning_rates.embedding, 0.1);
        assert_eq!(c.learning_rates.network, 0.05);
        assert_eq!(c.loss.alpha, 1.0);
        assert_eq!(c.loss.beta, 0.5);
        assert_eq!(c.loss.gamma, 0.5);
        c.validate().unwrap();
    }

    #[test]
    fn variant_lattice() {
        let f = |v: Variant| v.flags();
        assert!(!f(Variant::S).mono && !f(Variant::S).calibration);
        assert!(f(Variant::Sm).mono && !f(Variant::Sm).calibration);
        assert!(!f(Variant::Sc).mono && f(Variant::Sc).calibration);
        assert!(f(Variant::Odmn).mono && f(Variant::Odmn).calibration);
        assert!(!f(Variant::Nm).bias_tower && !f(Variant::Nm).distillation);
        assert!(f(Variant::Nmb).bias_tower && !f(Variant::Nmb).distillation);
        assert!(!f(Variant::Nmo).bias_tower && f(Variant::Nmo).distillation);
        assert!(f(Variant::Mdme).bias_tower && f(Variant::Mdme).distillation);
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            assert_eq!(v.to_string().to_lowercase().parse::<Variant>().unwrap(), v);
        }
        assert!("XYZ".parse::<Variant>().is_err());
    }

    #[test]
    fn overrides_compose() {
        let c = RunConfig {
            variant: Variant::S,
            overrides: Overrides {
                calibration: Some(true),
                bias_tower: Some(false),
                ..Overrides::default()
            },
            ..RunConfig::default()
        };
        let f = c.flags();
        assert!(f.calibration && !f.bias_tower && !f.mono);
    }

    #[test]
    fn toml_round_trip_and_errors() {
        let c = RunConfig {
            seed: 9,
            variant: Variant::Nmb,
            ..RunConfig::default()
        };
        let text = c.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), c);
        let partial =
            RunConfig::from_toml_str("format_version = 1\nepochs = 3\nvariant = \"SM\"\n").unwrap();
        assert_eq!(partial.epochs, 3);
        assert_eq!(partial.variant, Variant::Sm);
        assert!(RunConfig::from_toml_str("format_version = 2").is_err());
        assert!(RunConfig::from_toml_str("bogus = 1").is_err());
        assert!(RunConfig::from_toml_str("batch_size = 0").is_err());
    }

    #[test]
    fn hash_ignores_epoch_budget() {
        let a = RunConfig::default();
        let b = RunConfig {
            epochs: 99,
            ..RunConfig::default()
        };
        let c = RunConfig {
            seed: 1,
            ..RunConfig::default()
        };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }
}

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heads::{TrainConfig, DEFAULT_QUERIES};

/// Which parts of the loop are active. Everything except `Full` is an
/// ablation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Mode {
    #[default]
    Full,
    /// Pairs are merged but no patches are created.
    NoGrounding,
    /// Patches are created but pairs are never merged; patches join the flat
    /// global training set.
    NoHierarchy,
    /// Parsed segments are swapped for random ones before grounding.
    RandomGrounding,
    /// Queried pairs are drawn uniformly instead of by divergence.
    RandomPairs,
    /// No queries; one extra flat round with this fraction of additional
    /// labelled pool samples.
    ExtraData(f64),
}

impl Mode {
    pub fn queries_experts(self) -> bool {
        !matches!(self, Mode::ExtraData(_))
    }

    pub fn merges(self) -> bool {
        !matches!(self, Mode::NoHierarchy | Mode::ExtraData(_))
    }

    pub fn grounds(self) -> bool {
        !matches!(self, Mode::NoGrounding | Mode::ExtraData(_))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Full => f.write_str("full"),
            Mode::NoGrounding => f.write_str("no-grounding"),
            Mode::NoHierarchy => f.write_str("no-hierarchy"),
            Mode::RandomGrounding => f.write_str("random-grounding"),
            Mode::RandomPairs => f.write_str("random-pairs"),
            Mode::ExtraData(x) => write!(f, "extra-data:{x}"),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        let mode = match norm.as_str() {
            "full" => Mode::Full,
            "no-grounding" | "nogrounding" => Mode::NoGrounding,
            "no-hierarchy" | "nohierarchy" => Mode::NoHierarchy,
            "random-grounding" | "randomgrounding" => Mode::RandomGrounding,
            "random-pairs" | "randompairs" => Mode::RandomPairs,
            other => {
                let frac = other
                    .strip_prefix("extra-data:")
                    .or_else(|| other.strip_prefix("extradata:"))
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown mode {s:?}")))?;
                let x: f64 = frac
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad extra-data fraction {frac:?}")))?;
                Mode::ExtraData(x)
            }
        };
        Ok(mode)
    }
}

impl TryFrom<String> for Mode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Mode> for String {
    fn from(m: Mode) -> Self {
        m.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub dataset: PathBuf,
    pub k: u32,
    pub b: usize,
    pub mode: Mode,
    pub queries: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            dataset: PathBuf::new(),
            k: 4,
            b: 3,
            mode: Mode::Full,
            queries: DEFAULT_QUERIES,
            epochs: t.epochs,
            base_lr: t.base_lr,
            batch_size: t.batch_size,
            seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            base_lr: self.base_lr,
            batch_size: self.batch_size,
            ..TrainConfig::default()
        }
    }

    /// Checks that do not need the dataset.
    pub fn validate(&self) -> Result<()> {
        if self.b == 0 {
            return Err(Error::InvalidConfig("query budget b must be at least 1".into()));
        }
        if self.queries == 0 {
            return Err(Error::InvalidConfig("at least one attention query is required".into()));
        }
        if let Mode::ExtraData(x) = self.mode {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::InvalidConfig(format!("extra-data fraction {x} must be non-negative")));
            }
        }
        self.train_config().validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_strings_roundtrip() {
        for m in [
            Mode::Full,
            Mode::NoGrounding,
            Mode::NoHierarchy,
            Mode::RandomGrounding,
            Mode::RandomPairs,
            Mode::ExtraData(0.33),
        ] {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert_eq!("NoGrounding".parse::<Mode>().unwrap(), Mode::NoGrounding);
        assert_eq!("extra_data:1".parse::<Mode>().unwrap(), Mode::ExtraData(1.0));
        assert!("bogus".parse::<Mode>().is_err());
    }

    #[test]
    fn config_defaults_and_validation() {
        let c: SessionConfig = serde_json::from_str(r#"{"dataset": "x"}"#).unwrap();
        assert_eq!((c.k, c.b, c.queries, c.epochs, c.batch_size), (4, 3, 6, 30, 16));
        assert!(c.validate().is_ok());
        assert!(SessionConfig { b: 0, ..c.clone() }.validate().is_err());
        assert!(SessionConfig { mode: Mode::ExtraData(-1.0), ..c.clone() }.validate().is_err());
        assert!(serde_json::from_str::<SessionConfig>(r#"{"k": -1}"#).is_err());
    }
}

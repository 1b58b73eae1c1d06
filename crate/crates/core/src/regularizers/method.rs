use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policies::{ArchSpec, LipsNetSpec, LiuLipschitzSpec, LocalSnSpec};

use super::{CapsConfig, L2c2Config};

pub const METHOD_GRAMMAR: &str = "vanilla | caps | l2c2 | local_sn | liu | lipsnet | lipsnet+caps | lipsnet+l2c2";

pub const METHOD_NAMES: [&str; 8] =
    ["vanilla", "caps", "l2c2", "local_sn", "liu", "lipsnet", "lipsnet+caps", "lipsnet+l2c2"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Plain,
    LocalSn,
    Liu,
    Lipsnet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    Caps,
    L2c2,
    LiuLoss,
    LipsnetKLoss,
}

/// One benchmarked method: actor architecture, active regularizers and
/// their settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub arch: ArchSpec,
    pub regularizers: BTreeSet<Regularizer>,
    #[serde(default)]
    pub caps: CapsConfig,
    #[serde(default)]
    pub l2c2: L2c2Config,
}

impl MethodSpec {
    pub fn vanilla() -> Self {
        Self {
            arch: ArchSpec::default(),
            regularizers: BTreeSet::new(),
            caps: CapsConfig::default(),
            l2c2: L2c2Config::default(),
        }
    }

    pub fn architecture(&self) -> Architecture {
        match self.arch {
            ArchSpec::Plain { .. } => Architecture::Plain,
            ArchSpec::LocalSn(_) => Architecture::LocalSn,
            ArchSpec::Liu(_) => Architecture::Liu,
            ArchSpec::Lipsnet(_) => Architecture::Lipsnet,
        }
    }

    pub fn has(&self, r: Regularizer) -> bool {
        self.regularizers.contains(&r)
    }

    pub fn validate(&self) -> Result<()> {
        let arch = self.architecture();
        if self.has(Regularizer::LiuLoss) != (arch == Architecture::Liu) {
            return Err(Error::Config("liu_loss must be active exactly when the architecture is liu".into()));
        }
        if self.has(Regularizer::LipsnetKLoss) != (arch == Architecture::Lipsnet) {
            return Err(Error::Config("lipsnet_k_loss must be active exactly when the architecture is lipsnet".into()));
        }
        if self.has(Regularizer::Caps) && self.has(Regularizer::L2c2) {
            return Err(Error::Config("caps and l2c2 cannot both be active".into()));
        }
        if self.has(Regularizer::Caps) {
            self.caps.validate()?;
        }
        if self.has(Regularizer::L2c2) {
            self.l2c2.validate()?;
        }
        match &self.arch {
            ArchSpec::Lipsnet(s) => s.validate(),
            ArchSpec::Liu(s) if !(s.initial_bound > 0.0 && s.c_loss_weight >= 0.0) => {
                Err(Error::Config(format!("invalid liu settings: {s:?}")))
            }
            ArchSpec::LocalSn(s) if !(s.delta > 0.0) => {
                Err(Error::Config(format!("invalid local_sn delta {}", s.delta)))
            }
            _ => Ok(()),
        }
    }

    /// Canonical grammar name.
    pub fn name(&self) -> String {
        let base = match self.architecture() {
            Architecture::Plain => "",
            Architecture::LocalSn => "local_sn",
            Architecture::Liu => "liu",
            Architecture::Lipsnet => "lipsnet",
        };
        let loss = if self.has(Regularizer::Caps) {
            "caps"
        } else if self.has(Regularizer::L2c2) {
            "l2c2"
        } else {
            ""
        };
        match (base, loss) {
            ("", "") => "vanilla".into(),
            ("", l) => l.into(),
            (b, "") => b.into(),
            (b, l) => format!("{b}+{l}"),
        }
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_lowercase();
        let mut m = Self::vanilla();
        let mut add = |r| {
            m.regularizers.insert(r);
        };
        let arch = match key.as_str() {
            "vanilla" => None,
            "caps" => {
                add(Regularizer::Caps);
                None
            }
            "l2c2" => {
                add(Regularizer::L2c2);
                None
            }
            "local_sn" => Some(ArchSpec::LocalSn(LocalSnSpec::default())),
            "liu" => {
                add(Regularizer::LiuLoss);
                Some(ArchSpec::Liu(LiuLipschitzSpec::default()))
            }
            "lipsnet" | "lipsnet+caps" | "lipsnet+l2c2" => {
                add(Regularizer::LipsnetKLoss);
                match key.as_str() {
                    "lipsnet+caps" => add(Regularizer::Caps),
                    "lipsnet+l2c2" => add(Regularizer::L2c2),
                    _ => {}
                }
                Some(ArchSpec::Lipsnet(LipsNetSpec::default()))
            }
            _ => {
                return Err(Error::Input(format!("unknown method `{}` (expected {METHOD_GRAMMAR})", s.trim())));
            }
        };
        if let Some(a) = arch {
            m.arch = a;
        }
        m.validate()?;
        Ok(m)
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

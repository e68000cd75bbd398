use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{ModelVariant, Scope, TemperatureGrid};
use crate::calibration::BinKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SchemeArg {
    Equal,
    Log,
}

impl From<SchemeArg> for BinKind {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Equal => BinKind::EqualSpaced,
            SchemeArg::Log => BinKind::LogSpaced,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum ModelArg {
    #[value(name = "1")]
    #[serde(rename = "1")]
    One,
    #[value(name = "2")]
    #[serde(rename = "2")]
    Two,
    #[value(name = "3")]
    #[serde(rename = "3")]
    Three,
    #[value(name = "surprisal-only")]
    #[serde(rename = "surprisal-only")]
    SurprisalOnly,
}

impl From<ModelArg> for ModelVariant {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::One => ModelVariant::Model1,
            ModelArg::Two => ModelVariant::Model2,
            ModelArg::Three => ModelVariant::Model3,
            ModelArg::SurprisalOnly => ModelVariant::SurprisalOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScopeArg {
    All,
    Single,
    Multi,
}

impl From<ScopeArg> for Scope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::All => Scope::All,
            ScopeArg::Single => Scope::Single,
            ScopeArg::Multi => Scope::Multi,
        }
    }
}

/// Settings shared by every command. Flags override the config file, which
/// overrides the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub archive: Option<PathBuf>,
    pub words: Option<PathBuf>,
    pub rts: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    /// `"paper"` or a comma-separated list.
    pub grid: String,
    pub model: ModelArg,
    pub bins: usize,
    /// `None` means both schemes.
    pub scheme: Option<SchemeArg>,
    pub t: f64,
    pub tstar: Option<f64>,
    pub scope: ScopeArg,
    pub seed: u64,
    /// Never echoed: results do not depend on it.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    pub trials: usize,
    pub top_n: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            archive: None,
            words: None,
            rts: None,
            out: None,
            grid: "paper".into(),
            model: ModelArg::One,
            bins: 15,
            scheme: None,
            t: 1.0,
            tstar: None,
            scope: ScopeArg::All,
            seed: 0,
            workers: None,
            trials: 10_000,
            top_n: 15,
        }
    }
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn grid(&self) -> Result<TemperatureGrid> {
        TemperatureGrid::parse(&self.grid)
    }

    pub fn schemes(&self) -> Vec<BinKind> {
        match self.scheme {
            Some(s) => vec![s.into()],
            None => vec![BinKind::EqualSpaced, BinKind::LogSpaced],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::Config("bins must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        self.grid()?;
        Ok(())
    }

    /// Compact JSON of the settings that determine the results.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    pub(crate) fn require(&self, field: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
        let p = field
            .clone()
            .ok_or_else(|| Error::Config(format!("--{flag} is required")))?;
        if !p.exists() {
            return Err(Error::io(&p, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")));
        }
        Ok(p)
    }
}

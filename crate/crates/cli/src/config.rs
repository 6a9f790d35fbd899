use std::path::{Path, PathBuf};

use newsframe_core::corpus::DEFAULT_MIN_PARAGRAPH_CHARS;
use newsframe_core::TrainingConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable naming the application config file.
pub const CONFIG_ENV: &str = "NEWSFRAME_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvDefaults {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub stratified: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_k() -> usize {
    5
}

impl Default for CvDefaults {
    fn default() -> Self {
        CvDefaults {
            k: default_k(),
            stratified: false,
            seed: 0,
        }
    }
}

fn default_port() -> u16 {
    8080
}

fn default_min_chars() -> usize {
    DEFAULT_MIN_PARAGRAPH_CHARS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    /// Paragraph JSONL served to coders.
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    /// Append-only annotation JSONL.
    #[serde(default)]
    pub annotations: Option<PathBuf>,
    /// Model artifact directory used for classification.
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default)]
    pub training: Option<TrainingConfig>,
    #[serde(default = "default_min_chars")]
    pub min_paragraph_chars: usize,
    #[serde(default)]
    pub cv: CvDefaults,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            corpus: None,
            annotations: None,
            model: None,
            port: default_port(),
            training: None,
            min_paragraph_chars: default_min_chars(),
            cv: CvDefaults::default(),
        }
    }
}

impl AppConfig {
    /// Reads the file named by `explicit`, else by the environment variable,
    /// else returns defaults. Relative paths inside the file resolve against
    /// the file's directory.
    pub fn load(explicit: Option<&Path>) -> Result<Self, CliError> {
        let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        let Some(path) = explicit.map(Path::to_path_buf).or(from_env) else {
            return Ok(AppConfig::default());
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: AppConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.corpus, &mut cfg.annotations, &mut cfg.model]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Startup checks: port nonzero, corpus and model present, annotation
    /// file's directory present.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.port == 0 {
            return Err(CliError::Config("port must lie in 1..=65535".into()));
        }
        if let Some(c) = &self.corpus {
            if !c.is_file() {
                return Err(CliError::Config(format!("corpus {} not found", c.display())));
            }
        }
        if let Some(a) = &self.annotations {
            let dir = a.parent().filter(|d| !d.as_os_str().is_empty());
            if let Some(dir) = dir {
                if !dir.is_dir() {
                    return Err(CliError::Config(format!(
                        "annotation directory {} not found",
                        dir.display()
                    )));
                }
            }
        }
        if let Some(m) = &self.model {
            if !m.is_dir() {
                return Err(CliError::Config(format!("model {} not found", m.display())));
            }
        }
        if self.cv.k < 2 {
            return Err(CliError::Config("cv.k must be at least 2".into()));
        }
        Ok(())
    }
}

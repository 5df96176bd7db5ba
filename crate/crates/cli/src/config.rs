//! Parameter files: one model block at the top level plus an optional `[run]`
//! table of command options. TOML or JSON, chosen by file extension.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spherefield::models::{
    build_sequence, LegendreMaternParams, ModelSpec, MultiquadraticParams, DEFAULT_K_MAX, DEFAULT_L_MAX,
};
use spherefield::{SchoenbergSequence, SphereDim};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelBlock {
    Multiquadratic(MultiquadraticParams),
    LegendreMatern(LegendreMaternBlock),
    /// A precomputed Schoenberg sequence file (numeric diagnostics only).
    Sequence {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegendreMaternBlock {
    pub sigma: f64,
    pub alpha: f64,
    pub nu: f64,
    #[serde(default, rename = "K_max", alias = "k_max", skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyOptions {
    pub margin: Option<f64>,
    pub eps: Option<f64>,
    pub floor: Option<f64>,
}

/// Command options that may also be given on the command line (flags win).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    #[serde(rename = "L_max", alias = "l_max")]
    pub l_max: Option<usize>,
    #[serde(rename = "K_max", alias = "k_max")]
    pub k_max: Option<usize>,
    pub seed: Option<u64>,
    pub stream: Option<u64>,
    pub n_samples: Option<usize>,
    pub grid: Option<String>,
    pub thetas: Option<Vec<f64>>,
    pub z_threshold: Option<f64>,
    #[serde(default)]
    pub policy: PolicyOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub model: ModelBlock,
    #[serde(default)]
    pub run: RunOptions,
    /// Directory of the config file, for resolving relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn parse_text(text: &str, path: &Path) -> Result<RunConfig, CliError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let bad = |msg: String| CliError::Usage(format!("{}: {msg}", path.display()));
    match ext.as_str() {
        "toml" => toml::from_str(text).map_err(|e| bad(e.to_string())),
        "json" => serde_json::from_str(text).map_err(|e| bad(e.to_string())),
        other => Err(bad(format!("unknown config extension {other:?} (expected .toml or .json)"))),
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse_text(&text, path)?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    if let ModelBlock::Sequence { path: p } = &mut cfg.model {
        if p.is_relative() {
            *p = cfg.base_dir.join(&*p);
        }
        if !p.exists() {
            return Err(CliError::Usage(format!("sequence file {} does not exist", p.display())));
        }
    }
    Ok(cfg)
}

/// A model resolved against truncation options.
#[derive(Debug, Clone)]
pub struct ResolvedModel {
    /// Known family, when the block is not a raw sequence.
    pub spec: Option<ModelSpec>,
    pub sequence: SchoenbergSequence,
}

impl ResolvedModel {
    pub fn dim(&self) -> SphereDim {
        self.sequence.dim()
    }
}

impl ModelBlock {
    /// The family spec with truncation applied (raw sequences have none).
    pub fn spec(&self, l_max: usize, k_max: Option<usize>) -> Option<ModelSpec> {
        match self {
            ModelBlock::Multiquadratic(p) => Some(ModelSpec::Multiquadratic(*p)),
            ModelBlock::LegendreMatern(b) => {
                let k = k_max.or(b.k_max).unwrap_or(DEFAULT_K_MAX);
                Some(ModelSpec::LegendreMatern(
                    LegendreMaternParams::new(b.sigma, b.alpha, b.nu).with_truncation(l_max, k),
                ))
            }
            ModelBlock::Sequence { .. } => None,
        }
    }

    pub fn dim(&self) -> Result<SphereDim, CliError> {
        match self {
            ModelBlock::Sequence { path } => Ok(read_sequence(path)?.dim()),
            _ => Ok(self.spec(DEFAULT_L_MAX, None).expect("family block").dim()),
        }
    }

    /// Builds the sequence up to `l_max`. Raw sequences are truncated to it
    /// when they are longer, and used as-is otherwise.
    pub fn resolve(&self, l_max: usize, k_max: Option<usize>) -> Result<ResolvedModel, CliError> {
        match self.spec(l_max, k_max) {
            Some(spec) => {
                let sequence = build_sequence(&spec, l_max)?;
                Ok(ResolvedModel { spec: Some(spec), sequence })
            }
            None => {
                let ModelBlock::Sequence { path } = self else { unreachable!("non-family block") };
                let seq = read_sequence(path)?;
                let sequence = if seq.l_max() > l_max { seq.truncated(l_max) } else { seq };
                Ok(ResolvedModel { spec: None, sequence })
            }
        }
    }
}

pub fn read_sequence(path: &Path) -> Result<SchoenbergSequence, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let file: spherefield::schoenberg::SequenceFile =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(SchoenbergSequence::try_from(file)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_parse_to_the_same_block() {
        let t = r#"
model = "multiquadratic"
d = 2
sigma = [1, 1]
rho12 = 0.4
alpha = [0.5, 0.5, 0.45]

[run]
L_max = 40
seed = 7
"#;
        let j = r#"{"model": "multiquadratic", "d": 2, "sigma": [1, 1], "rho12": 0.4,
                    "alpha": [0.5, 0.5, 0.45], "run": {"L_max": 40, "seed": 7}}"#;
        let a = parse_text(t, Path::new("a.toml")).unwrap();
        let b = parse_text(j, Path::new("a.json")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.run.l_max, Some(40));
    }

    #[test]
    fn missing_field_is_a_usage_error() {
        let j = r#"{"model": "legendre_matern", "sigma": 1.0, "alpha": 1.0}"#;
        let err = parse_text(j, Path::new("x.json")).unwrap_err();
        assert!(matches!(&err, CliError::Usage(m) if m.contains("nu")), "{err}");
    }

    #[test]
    fn unknown_extension_rejected() {
        assert!(parse_text("{}", Path::new("x.yaml")).is_err());
    }
}

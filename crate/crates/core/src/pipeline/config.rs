use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::baselines::{AnnConfig, ForestConfig, SvmConfig};
use crate::error::{Error, Result};
use crate::nn::{OptimizerKind, TrainConfig};
use crate::pipeline::Readout;
use crate::{CLASS_NAMES, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Cnn,
    Ann,
    Rf,
    Svm,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cnn => "cnn",
            ModelKind::Ann => "ann",
            ModelKind::Rf => "rf",
            ModelKind::Svm => "svm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(ModelKind::Cnn),
            "ann" => Ok(ModelKind::Ann),
            "rf" => Ok(ModelKind::Rf),
            "svm" => Ok(ModelKind::Svm),
            other => Err(Error::invalid(format!(
                "unknown model kind `{other}` (cnn, ann, rf or svm)"
            ))),
        }
    }
}

/// Every tunable of a run.
///
/// Files hold `key = value` lines; `#` starts a comment. Command-line flags
/// are applied afterwards with [`PipelineConfig::set`], so they win.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub raster: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub model: ModelKind,
    pub kernel_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub dropout: bool,
    pub ann_epochs: usize,
    pub ann_dropout: f64,
    pub rf_trees: usize,
    pub svm_epochs: usize,
    pub svm_lambda: f64,
    pub mv_kernel: usize,
    pub seed: u64,
    pub split: (usize, usize, usize),
    pub readout: Readout,
    pub class_names: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            raster: None,
            samples: None,
            out_dir: None,
            model: ModelKind::Cnn,
            kernel_size: 3,
            epochs: 300,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            dropout: true,
            ann_epochs: 250,
            ann_dropout: 0.5,
            rf_trees: 32,
            svm_epochs: 20,
            svm_lambda: 1e-4,
            mv_kernel: 11,
            seed: 0,
            split: (5, 2, 3),
            readout: Readout::CenterPixel,
            class_names: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::invalid(format!("`{key}`: expected a boolean, got `{value}`"))),
    }
}

impl PipelineConfig {
    pub const KEYS: [&'static str; 20] = [
        "raster",
        "samples",
        "out_dir",
        "model",
        "kernel_size",
        "epochs",
        "batch_size",
        "learning_rate",
        "optimizer",
        "dropout",
        "ann_epochs",
        "ann_dropout",
        "rf_trees",
        "svm_epochs",
        "svm_lambda",
        "mv_kernel",
        "seed",
        "split",
        "readout",
        "class_names",
    ];

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: n + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected `key = value`, got `{line}`")))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| parse_err(e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "raster" => self.raster = Some(value.into()),
            "samples" => self.samples = Some(value.into()),
            "out_dir" => self.out_dir = Some(value.into()),
            "model" => self.model = value.parse()?,
            "kernel_size" => self.kernel_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "optimizer" => self.optimizer = value.parse().map_err(Error::InvalidArgument)?,
            "dropout" => self.dropout = parse_bool(key, value)?,
            "ann_epochs" => self.ann_epochs = parse(key, value)?,
            "ann_dropout" => self.ann_dropout = parse(key, value)?,
            "rf_trees" => self.rf_trees = parse(key, value)?,
            "svm_epochs" => self.svm_epochs = parse(key, value)?,
            "svm_lambda" => self.svm_lambda = parse(key, value)?,
            "mv_kernel" => self.mv_kernel = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "split" => {
                let parts: Vec<usize> = value.split(':').map(|p| parse(key, p.trim())).collect::<Result<_>>()?;
                let [a, b, c] = parts[..] else {
                    return Err(Error::invalid("`split`: expected train:val:test, e.g. 5:2:3"));
                };
                self.split = (a, b, c);
            }
            "readout" => self.readout = value.parse()?,
            "class_names" => {
                let names: Vec<String> = value.split(',').map(|s| s.trim().to_string()).collect();
                if names.len() != NUM_CLASSES || names.iter().any(String::is_empty) {
                    return Err(Error::invalid("`class_names`: expected 14 comma-separated names"));
                }
                self.class_names = names;
            }
            other => return Err(Error::invalid(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if ![1, 3, 5].contains(&self.kernel_size) {
            return Err(Error::invalid("kernel_size must be 1, 3 or 5"));
        }
        if self.mv_kernel == 0 || self.mv_kernel % 2 == 0 {
            return Err(Error::invalid("mv_kernel must be odd"));
        }
        if self.split.0 + self.split.1 + self.split.2 == 0 {
            return Err(Error::invalid("split ratios must not all be zero"));
        }
        self.cnn_train_config().validate()
    }

    /// Returns the path stored under `key`, checking that it exists.
    pub fn require_path(&self, key: &str) -> Result<&Path> {
        let p = match key {
            "raster" => self.raster.as_deref(),
            "samples" => self.samples.as_deref(),
            "out_dir" => self.out_dir.as_deref(),
            _ => None,
        };
        let p = p.ok_or_else(|| Error::invalid(format!("`{key}` is not set")))?;
        if !p.exists() {
            return Err(Error::invalid(format!("`{key}`: {} does not exist", p.display())));
        }
        Ok(p)
    }

    /// All keys with their current values, for manifests.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let values = [
            path(&self.raster),
            path(&self.samples),
            path(&self.out_dir),
            self.model.to_string(),
            self.kernel_size.to_string(),
            self.epochs.to_string(),
            self.batch_size.to_string(),
            self.learning_rate.to_string(),
            format!("{:?}", self.optimizer).to_ascii_lowercase(),
            self.dropout.to_string(),
            self.ann_epochs.to_string(),
            self.ann_dropout.to_string(),
            self.rf_trees.to_string(),
            self.svm_epochs.to_string(),
            self.svm_lambda.to_string(),
            self.mv_kernel.to_string(),
            self.seed.to_string(),
            format!("{}:{}:{}", self.split.0, self.split.1, self.split.2),
            self.readout.to_string(),
            self.class_names.join(","),
        ];
        Self::KEYS.iter().map(|k| k.to_string()).zip(values).collect()
    }

    /// A config file that parses back to the same values.
    pub fn to_text(&self) -> String {
        self.snapshot()
            .into_iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn cnn_train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            seed: self.seed,
            dropout: self.dropout,
            kernel_size: self.kernel_size,
        }
    }

    pub fn ann_config(&self) -> AnnConfig {
        AnnConfig {
            epochs: self.ann_epochs,
            dropout: self.ann_dropout,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
            seed: self.seed,
        }
    }

    pub fn forest_config(&self) -> ForestConfig {
        ForestConfig {
            trees: self.rf_trees,
            seed: self.seed,
        }
    }

    pub fn svm_config(&self) -> SvmConfig {
        SvmConfig {
            epochs: self.svm_epochs,
            lambda: self.svm_lambda,
            seed: self.seed,
            ..SvmConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let text = "# run\nmodel = rf   # baseline\n\nseed=7\nsplit = 6:1:3\nreadout = patch-vote\n";
        let mut cfg = PipelineConfig::parse(text, Path::new("run.cfg")).unwrap();
        assert_eq!(cfg.model, ModelKind::Rf);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.split, (6, 1, 3));
        assert_eq!(cfg.readout, Readout::PatchVote);
        assert_eq!(cfg.mv_kernel, 11);
        cfg.set("seed", "9").unwrap();
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = PipelineConfig::parse("seed = 1\nbogus = 2\n", Path::new("x.cfg")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(PipelineConfig::parse("seed\n", Path::new("x.cfg")).is_err());
        assert!(PipelineConfig::parse("mv_kernel = 4\n", Path::new("x.cfg")).is_err());
        assert!(PipelineConfig::parse("kernel_size = 7\n", Path::new("x.cfg")).is_err());
        assert!(PipelineConfig::parse("dropout = maybe\n", Path::new("x.cfg")).is_err());
    }

    #[test]
    fn text_roundtrip() {
        let mut cfg = PipelineConfig::default();
        cfg.set("raster", "scene/scene.hdr").unwrap();
        cfg.set("learning_rate", "0.0005").unwrap();
        cfg.set("optimizer", "sgd").unwrap();
        let back = PipelineConfig::parse(&cfg.to_text(), Path::new("snap")).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.snapshot().len(), PipelineConfig::KEYS.len());
    }

    #[test]
    fn missing_paths_are_reported() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.require_path("raster").is_err());
        cfg.raster = Some("/definitely/not/here.hdr".into());
        assert!(cfg.require_path("raster").is_err());
    }
}

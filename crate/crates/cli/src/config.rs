//! Run configuration: defaults (or the toy preset), then a flat
//! `key = value` file, then command-line overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use srcondense::model::ModelConfig;
use srcondense::toy;
use srcondense::TrainConfig;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub train_dirs: Vec<PathBuf>,
    pub val_dir: Option<PathBuf>,
    pub precision: Precision,
}

pub const TRAIN_KEYS: [&str; 10] =
    ["epochs", "lr", "batch_size", "lasso_weight", "charbonnier_eps", "clip_norm", "seed", "beta1", "beta2", "adam_eps"];
pub const DATA_KEYS: [&str; 3] = ["train_dir", "val_dir", "precision"];

/// Help text listing every accepted key.
pub fn keys_help() -> String {
    let mut s = String::from("Config file keys (one `key = value` per line, `#` starts a comment):\n");
    let _ = writeln!(s, "  model: {}", ModelConfig::KEYS.join(", "));
    let _ = writeln!(s, "  training: {}", TRAIN_KEYS.join(", "));
    let _ = writeln!(s, "  data: {} (train_dir may repeat; precision is f32 or f64)", DATA_KEYS.join(", "));
    s.push_str("Command-line flags and --set key=value override the file.");
    s
}

impl RunConfig {
    pub fn defaults(toy_preset: bool) -> Self {
        if toy_preset {
            RunConfig {
                model: toy::model_config(2),
                train: toy::train_config(),
                train_dirs: Vec::new(),
                val_dir: None,
                precision: Precision::F32,
            }
        } else {
            RunConfig {
                model: ModelConfig::default(),
                train: TrainConfig::default(),
                train_dirs: Vec::new(),
                val_dir: None,
                precision: Precision::F32,
            }
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        let bad = |e: &dyn std::fmt::Display| CliError::Usage(format!("{key}: {e}"));
        let float = || value.parse::<f64>().map_err(|e| bad(&e));
        let int = || value.parse::<usize>().map_err(|e| bad(&e));
        match key {
            "epochs" => self.train.epochs = int()?,
            "lr" => self.train.lr = float()?,
            "batch_size" => self.train.batch_size = int()?,
            "lasso_weight" => self.train.lasso_weight = float()?,
            "charbonnier_eps" => self.train.charbonnier_eps = float()?,
            "clip_norm" => self.train.clip_norm = if value == "none" { None } else { Some(float()?) },
            "seed" => self.train.seed = value.parse().map_err(|e| bad(&e))?,
            "beta1" => self.train.beta1 = float()?,
            "beta2" => self.train.beta2 = float()?,
            "adam_eps" => self.train.adam_eps = float()?,
            "train_dir" => self.train_dirs.push(PathBuf::from(value)),
            "val_dir" => self.val_dir = Some(PathBuf::from(value)),
            "precision" => {
                self.precision = match value {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    _ => return Err(bad(&"expected f32 or f64")),
                }
            }
            _ if ModelConfig::KEYS.contains(&key) => self.model.set(key, value)?,
            _ => return Err(CliError::Usage(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected `key = value`", n + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Applies `key=value` overrides given on the command line.
    pub fn apply_overrides(&mut self, pairs: &[String]) -> Result<(), CliError> {
        for p in pairs {
            let (k, v) = p.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{p}`")))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }

    /// Resolved configuration in the file format.
    pub fn to_text(&self) -> String {
        let mut s = self.model.to_text();
        let t = &self.train;
        let clip = t.clip_norm.map_or("none".to_string(), |c| format!("{c:?}"));
        let _ = write!(
            s,
            "epochs = {}\nlr = {:?}\nbatch_size = {}\nlasso_weight = {:?}\ncharbonnier_eps = {:?}\nclip_norm = {clip}\nseed = {}\nbeta1 = {:?}\nbeta2 = {:?}\nadam_eps = {:?}\n",
            t.epochs, t.lr, t.batch_size, t.lasso_weight, t.charbonnier_eps, t.seed, t.beta1, t.beta2, t.adam_eps
        );
        for d in &self.train_dirs {
            let _ = writeln!(s, "train_dir = {}", d.display());
        }
        if let Some(v) = &self.val_dir {
            let _ = writeln!(s, "val_dir = {}", v.display());
        }
        let _ = writeln!(s, "precision = {}", if self.precision == Precision::F64 { "f64" } else { "f32" });
        s
    }
}

//! Flat `key = value` run configuration files and their resolution against
//! per-mode defaults and command-line overrides.

use std::path::Path;
use std::str::FromStr;

use tnvqc::training::{Mode, OptimizerKind, TrainConfig};

use crate::CliError;

/// One `key = value` pair with the line it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Parse `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse(text: &str) -> Result<Vec<Entry>, CliError> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Usage(format!("config line {}: expected key=value, got '{line}'", i + 1)));
        };
        let key = k.trim().replace('-', "_");
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(CliError::Usage(format!(
                "config line {}: '{key}' already set on line {}",
                i + 1,
                prev.line
            )));
        }
        out.push(Entry {
            key,
            value: v.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<Vec<Entry>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text)
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| CliError::Usage(format!("invalid value '{v}' for {key}: {e}")))
}

pub fn parse_digits(v: &str) -> Result<(u8, u8), CliError> {
    let (a, b) = v
        .split_once(',')
        .ok_or_else(|| CliError::Usage(format!("digits must look like '3,6', got '{v}'")))?;
    Ok((value("digits", a.trim())?, value("digits", b.trim())?))
}

/// Overrides gathered from the command line, applied after the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub chi: Option<usize>,
    pub output_site: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub optimizer: Option<OptimizerKind>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub digits: Option<(u8, u8)>,
}

/// Keys that describe where things live rather than how to train.
pub const PATH_KEYS: [&str; 2] = ["data_dir", "out"];

/// Materialize a full configuration: mode defaults, then the file, then flags.
pub fn resolve(entries: &[Entry], flags: &Overrides) -> Result<TrainConfig, CliError> {
    let file_mode = entries
        .iter()
        .find(|e| e.key == "mode")
        .map(|e| value::<Mode>("mode", &e.value))
        .transpose()?;
    let mode = flags
        .mode
        .or(file_mode)
        .ok_or_else(|| CliError::Usage("no mode given (use --mode or 'mode = ...' in the config)".into()))?;
    let mut cfg = TrainConfig::defaults(mode);

    for e in entries {
        let v = e.value.as_str();
        match e.key.as_str() {
            "mode" => {}
            "chi" => cfg.chi = Some(value(&e.key, v)?),
            "output_site" => cfg.output_site = Some(value(&e.key, v)?),
            "optimizer" => cfg.optimizer = value(&e.key, v)?,
            "lr" | "learning_rate" => cfg.learning_rate = value(&e.key, v)?,
            "rmsprop_alpha" => cfg.rmsprop_alpha = value(&e.key, v)?,
            "rmsprop_eps" => cfg.rmsprop_eps = value(&e.key, v)?,
            "adam_beta1" => cfg.adam_beta1 = value(&e.key, v)?,
            "adam_beta2" => cfg.adam_beta2 = value(&e.key, v)?,
            "adam_eps" => cfg.adam_eps = value(&e.key, v)?,
            "batch_size" => cfg.batch_size = value(&e.key, v)?,
            "epochs" => cfg.epochs = value(&e.key, v)?,
            "seed" => cfg.seed = value(&e.key, v)?,
            "workers" => cfg.workers = value(&e.key, v)?,
            "digits" => cfg.digits = parse_digits(v)?,
            k if PATH_KEYS.contains(&k) => {}
            k => return Err(CliError::Usage(format!("config line {}: unknown key '{k}'", e.line))),
        }
    }

    let f = flags;
    if f.chi.is_some() {
        cfg.chi = f.chi;
    }
    if f.output_site.is_some() {
        cfg.output_site = f.output_site;
    }
    if let Some(v) = f.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = f.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = f.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = f.optimizer {
        cfg.optimizer = v;
    }
    if let Some(v) = f.seed {
        cfg.seed = v;
    }
    if let Some(v) = f.workers {
        cfg.workers = v;
    }
    if let Some(v) = f.digits {
        cfg.digits = v;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

/// Value of a path-like key from the file, if present.
pub fn path_entry<'a>(entries: &'a [Entry], key: &str) -> Option<&'a str> {
    entries.iter().find(|e| e.key == key).map(|e| e.value.as_str())
}

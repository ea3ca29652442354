//! Run configuration and its `key = value` text format.
//!
//! ```text
//! arch = tinyconvnet
//! mode = GHFP
//! goal_rate = 0.4
//!
//! [layer.conv3]
//! goal_rate = 0.5
//! ```
//!
//! Blank lines and `#` comments are ignored. Keys outside a section configure
//! the run; a `[layer.<id>]` section overrides that layer's goal rate.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::arch::build_arch;
use crate::data::DatasetConfig;
use crate::error::{Error, Result};
use crate::flops::validate_rates;
use crate::pruning::{Mode, Norm, ScheduleConfig};
use crate::sgd::SgdConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub arch: String,
    pub schedule: ScheduleConfig,
    pub sgd: SgdConfig,
    pub batch_size: usize,
    pub seed: u64,
    pub norm: Norm,
    pub dataset: DatasetConfig,
    pub metrics_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
    /// Start from this checkpoint's weights with a tenth of the learning rate.
    pub pretrained: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            arch: "tinyconvnet".into(),
            schedule: ScheduleConfig {
                t_max: 40,
                ..ScheduleConfig::default()
            },
            sgd: SgdConfig::default(),
            batch_size: 64,
            seed: 0,
            norm: Norm::L2,
            dataset: DatasetConfig::default(),
            metrics_path: None,
            checkpoint_path: None,
            pretrained: None,
        }
    }
}

/// Every recognised top-level key with its default, for `--help` output.
pub const KEYS: &[(&str, &str)] = &[
    ("arch", "tinyconvnet"),
    ("mode", "GHFP (SFP, SRFP, ASFP, ASRFP, HFP, GHFP, SoftAndHard(<ratio>))"),
    ("seed", "0"),
    ("epochs", "40 (also t_max)"),
    ("batch_size", "64"),
    ("learning_rate", "0.05"),
    ("momentum", "0.9"),
    ("weight_decay", "0.0005"),
    ("alpha0", "0"),
    ("epsilon", "0.0001"),
    ("lambda_i", "0"),
    ("lambda_f", "1"),
    ("goal_rate", "0"),
    ("rate_ramp", "cubic (cubic, linear, constant)"),
    ("norm", "l2 (l2, l1)"),
    ("classes", "10"),
    ("n_train", "2000"),
    ("n_test", "500"),
    ("noise_std", "0.3"),
    ("contrast", "0.35"),
    ("metrics_path", "(none)"),
    ("checkpoint_path", "(none)"),
    ("pretrained", "(none)"),
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let arch = build_arch(&self.arch)?;
        self.schedule.validate()?;
        self.sgd.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        validate_rates(&arch, &self.schedule.layer_rates)?;
        if self.dataset.classes < 2 {
            return Err(Error::Config("classes must be at least 2".into()));
        }
        if !(self.dataset.noise_std >= 0.0) {
            return Err(Error::Config("noise_std must be non-negative".into()));
        }
        Ok(())
    }

    pub fn epochs(&self) -> usize {
        self.schedule.t_max
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let s = &mut self.schedule;
        match key {
            "arch" => self.arch = value.to_string(),
            "mode" => s.mode = value.parse::<Mode>().map_err(|e| e.to_string())?,
            "seed" => self.seed = parse_value(key, value)?,
            "epochs" | "t_max" => s.t_max = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "learning_rate" => self.sgd.learning_rate = parse_value(key, value)?,
            "momentum" => self.sgd.momentum = parse_value(key, value)?,
            "weight_decay" => self.sgd.weight_decay = parse_value(key, value)?,
            "alpha0" => s.alpha0 = parse_value(key, value)?,
            "epsilon" => s.epsilon = parse_value(key, value)?,
            "lambda_i" => s.lambda_i = parse_value(key, value)?,
            "lambda_f" => s.lambda_f = parse_value(key, value)?,
            "goal_rate" => s.goal_rate = parse_value(key, value)?,
            "rate_ramp" => s.rate_ramp = value.parse().map_err(|e: Error| e.to_string())?,
            "norm" => self.norm = value.parse().map_err(|e: Error| e.to_string())?,
            "classes" => self.dataset.classes = parse_value(key, value)?,
            "n_train" => self.dataset.n_train = parse_value(key, value)?,
            "n_test" => self.dataset.n_test = parse_value(key, value)?,
            "noise_std" => self.dataset.noise_std = parse_value(key, value)?,
            "contrast" => self.dataset.contrast = parse_value(key, value)?,
            "metrics_path" => self.metrics_path = Some(value.into()),
            "checkpoint_path" => self.checkpoint_path = Some(value.into()),
            "pretrained" => self.pretrained = Some(value.into()),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Parses the text format on top of the defaults. Errors carry the
    /// offending line number.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section: Option<String> = None;
        let mut seen_epochs: Option<(usize, usize)> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| Error::Parse { line: line_no, msg };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(inner) = line.strip_prefix('[') {
                let inner = inner
                    .strip_suffix(']')
                    .ok_or_else(|| err(format!("unterminated section header `{line}`")))?;
                let layer = inner
                    .trim()
                    .strip_prefix("layer.")
                    .filter(|l| !l.is_empty())
                    .ok_or_else(|| err(format!("unknown section `{inner}`")))?;
                section = Some(layer.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() {
                return Err(err(format!("missing value for `{key}`")));
            }
            match &section {
                Some(layer) => {
                    if key != "goal_rate" {
                        return Err(err(format!("unknown layer key `{key}`")));
                    }
                    let rate = parse_value(key, value).map_err(err)?;
                    cfg.schedule.layer_rates.insert(layer.clone(), rate);
                }
                None => {
                    if key == "epochs" || key == "t_max" {
                        let v: usize = parse_value(key, value).map_err(err)?;
                        if let Some((prev, prev_line)) = seen_epochs {
                            if prev != v {
                                return Err(err(format!(
                                    "`{key}` = {v} disagrees with {prev} on line {prev_line}"
                                )));
                            }
                        }
                        seen_epochs = Some((v, line_no));
                    }
                    cfg.set(key, value).map_err(err)?;
                }
            }
        }
        Ok(cfg)
    }

    /// Canonical text form; [`RunConfig::from_text`] reads it back unchanged.
    pub fn to_text(&self) -> String {
        let s = &self.schedule;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        kv("arch", self.arch.clone());
        kv("mode", s.mode.to_string());
        kv("seed", self.seed.to_string());
        kv("epochs", s.t_max.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("learning_rate", self.sgd.learning_rate.to_string());
        kv("momentum", self.sgd.momentum.to_string());
        kv("weight_decay", self.sgd.weight_decay.to_string());
        kv("alpha0", s.alpha0.to_string());
        kv("epsilon", s.epsilon.to_string());
        kv("lambda_i", s.lambda_i.to_string());
        kv("lambda_f", s.lambda_f.to_string());
        kv("goal_rate", s.goal_rate.to_string());
        kv("rate_ramp", s.rate_ramp.to_string());
        kv(
            "norm",
            match self.norm {
                Norm::L2 => "l2".into(),
                Norm::L1 => "l1".into(),
            },
        );
        kv("classes", self.dataset.classes.to_string());
        kv("n_train", self.dataset.n_train.to_string());
        kv("n_test", self.dataset.n_test.to_string());
        kv("noise_std", self.dataset.noise_std.to_string());
        kv("contrast", self.dataset.contrast.to_string());
        for (k, p) in [
            ("metrics_path", &self.metrics_path),
            ("checkpoint_path", &self.checkpoint_path),
            ("pretrained", &self.pretrained),
        ] {
            if let Some(p) = p {
                kv(k, p.display().to_string());
            }
        }
        for (layer, rate) in &s.layer_rates {
            writeln!(out, "\n[layer.{layer}]\ngoal_rate = {rate}").unwrap();
        }
        out
    }
}

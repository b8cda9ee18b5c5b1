//! Flat `key = value` run configuration files.
//!
//! Keys are the field names of [`ModelConfig`] and [`TrainConfig`]; `#` starts a
//! comment. Unknown or repeated keys are errors. `mixer_order` takes two
//! comma-separated transform names. When `base_lr` is given without `min_lr`,
//! the floor follows as `base_lr · 1e-2`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::train::TrainConfig;
use crate::transforms::TransformKind;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

/// Ratio of the schedule floor to the peak learning rate when only `base_lr` is set.
pub const MIN_LR_RATIO: f64 = 1e-2;

fn parse_value<V: FromStr>(line: usize, key: &str, raw: &str) -> Result<V> {
    raw.parse()
        .map_err(|_| Error::format(format!("line {line}: invalid value `{raw}` for `{key}`")))
}

impl RunConfig {
    /// The small configuration used for desk-scale experiments.
    pub fn toy() -> Self {
        RunConfig {
            model: ModelConfig::toy(),
            train: TrainConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::format(format!(
                    "line {line_no}: expected `key = value`, got `{line}`"
                ))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(Error::format(format!(
                    "line {line_no}: duplicate key `{key}`"
                )));
            }
            seen.push(key.to_string());
            cfg.set(line_no, key, value)?;
        }
        if seen.iter().any(|k| k == "base_lr") && !seen.iter().any(|k| k == "min_lr") {
            cfg.train.min_lr = cfg.train.base_lr * MIN_LR_RATIO;
        }
        cfg.model.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<()> {
        let (m, t) = (&mut self.model, &mut self.train);
        match key {
            "image_size" => m.image_size = parse_value(line, key, v)?,
            "patch_size" => m.patch_size = parse_value(line, key, v)?,
            "channels_in" => m.channels_in = parse_value(line, key, v)?,
            "dim" => m.dim = parse_value(line, key, v)?,
            "depth" => m.depth = parse_value(line, key, v)?,
            "expansion" => m.expansion = parse_value(line, key, v)?,
            "num_classes" => m.num_classes = parse_value(line, key, v)?,
            "output_activation" => m.output_activation = parse_value(line, key, v)?,
            "mixer_order" => {
                let kinds = v
                    .split(',')
                    .map(|s| parse_value::<TransformKind>(line, key, s.trim()))
                    .collect::<Result<Vec<_>>>()?;
                m.mixer_order = kinds.try_into().map_err(|_| {
                    Error::format(format!(
                        "line {line}: `mixer_order` needs exactly two transforms"
                    ))
                })?;
            }
            "epochs" => t.epochs = parse_value(line, key, v)?,
            "warmup_epochs" => t.warmup_epochs = parse_value(line, key, v)?,
            "base_lr" => t.base_lr = parse_value(line, key, v)?,
            "min_lr" => t.min_lr = parse_value(line, key, v)?,
            "weight_decay" => t.weight_decay = parse_value(line, key, v)?,
            "mixup_alpha" => t.mixup_alpha = parse_value(line, key, v)?,
            "cutmix_alpha" => t.cutmix_alpha = parse_value(line, key, v)?,
            "batch_size" => t.batch_size = parse_value(line, key, v)?,
            "seed" => t.seed = parse_value(line, key, v)?,
            "beta1" => t.beta1 = parse_value(line, key, v)?,
            "beta2" => t.beta2 = parse_value(line, key, v)?,
            "eps" => t.eps = parse_value(line, key, v)?,
            _ => return Err(Error::format(format!("line {line}: unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Renders every key; `parse(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let (m, t) = (&self.model, &self.train);
        let mut s = String::from("# model\n");
        let _ = writeln!(s, "image_size = {}", m.image_size);
        let _ = writeln!(s, "patch_size = {}", m.patch_size);
        let _ = writeln!(s, "channels_in = {}", m.channels_in);
        let _ = writeln!(s, "dim = {}", m.dim);
        let _ = writeln!(s, "depth = {}", m.depth);
        let _ = writeln!(s, "expansion = {}", m.expansion);
        let _ = writeln!(s, "num_classes = {}", m.num_classes);
        let _ = writeln!(s, "mixer_order = {},{}", m.mixer_order[0], m.mixer_order[1]);
        let _ = writeln!(s, "output_activation = {}", m.output_activation);
        s.push_str("\n# training\n");
        let _ = writeln!(s, "epochs = {}", t.epochs);
        let _ = writeln!(s, "warmup_epochs = {}", t.warmup_epochs);
        let _ = writeln!(s, "base_lr = {:?}", t.base_lr);
        let _ = writeln!(s, "min_lr = {:?}", t.min_lr);
        let _ = writeln!(s, "weight_decay = {:?}", t.weight_decay);
        let _ = writeln!(s, "mixup_alpha = {:?}", t.mixup_alpha);
        let _ = writeln!(s, "cutmix_alpha = {:?}", t.cutmix_alpha);
        let _ = writeln!(s, "batch_size = {}", t.batch_size);
        let _ = writeln!(s, "seed = {}", t.seed);
        let _ = writeln!(s, "beta1 = {:?}", t.beta1);
        let _ = writeln!(s, "beta2 = {:?}", t.beta2);
        let _ = writeln!(s, "eps = {:?}", t.eps);
        s
    }
}

//! Run configuration: a preset, a global seed and flat `section.key = value`
//! overrides.

use std::fmt::Write as _;
use std::str::FromStr;

use ordrank::features::RadiomicsConfig;
use ordrank::forest::{ForestConfig, MaxFeatures};
use ordrank::neural::{Augmentation, Head, NetConfig, TrainConfig};
use ordrank::rng::derive_seed;
use ordrank::synthgen::SynthConfig;
use ordrank::volume::BoundingBox;
use ordrank::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Toy,
    AdniPaper,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Toy => "toy",
            Preset::AdniPaper => "adni-paper",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(Preset::Toy),
            "adni-paper" => Ok(Preset::AdniPaper),
            _ => Err(Error::ConfigInvalid(format!("unknown preset {s:?} (toy | adni-paper)"))),
        }
    }
}

/// How `augment` expands a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentMode {
    Translate,
    Elastic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub mode: AugmentMode,
    /// Translation step in voxels.
    pub magnitude: usize,
    pub amplitude: f64,
    pub smoothness: f64,
    /// Elastic copies per region.
    pub copies: usize,
}

/// Stream indices for [`derive_seed`]; one per consumer of the global seed.
pub mod streams {
    pub const SPLIT: u64 = 1;
    pub const FOREST: u64 = 2;
    pub const NET_INIT: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const AUGMENT: u64 = 5;
    pub const GRADCHECK: u64 = 6;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub synth: SynthConfig,
    pub train_fraction: f64,
    pub radiomics: RadiomicsConfig,
    pub forest: ForestConfig,
    /// Head is replaced by the training strategy.
    pub net: NetConfig,
    pub train: TrainConfig,
    pub train_augmentation: Augmentation,
    pub augment: AugmentConfig,
}

const DEFAULT_SEED: u64 = 42;

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let placeholder = Head::Ordinal { classes: 4 };
        let augment = AugmentConfig {
            mode: AugmentMode::Translate,
            magnitude: 2,
            amplitude: 1.0,
            smoothness: 2.0,
            copies: 2,
        };
        match preset {
            Preset::Toy => Self {
                preset,
                seed: DEFAULT_SEED,
                synth: SynthConfig::toy(150, DEFAULT_SEED),
                train_fraction: 2.0 / 3.0,
                radiomics: RadiomicsConfig::default(),
                forest: ForestConfig::desk(0),
                net: NetConfig::toy(placeholder),
                train: TrainConfig::toy(0),
                train_augmentation: Augmentation::None,
                augment,
            },
            Preset::AdniPaper => Self {
                preset,
                seed: DEFAULT_SEED,
                synth: SynthConfig {
                    bbox: BoundingBox::PAPER,
                    base_radius: 9.5,
                    atrophy_step: 0.8,
                    subject_jitter: 0.6,
                    ..SynthConfig::toy(150, DEFAULT_SEED)
                },
                train_fraction: 2.0 / 3.0,
                radiomics: RadiomicsConfig::default(),
                forest: ForestConfig::paper(0),
                net: NetConfig::paper(placeholder),
                train: TrainConfig::paper(0),
                train_augmentation: Augmentation::Translate { magnitude: 2 },
                augment,
            },
        }
    }

    /// Preset from the flag, else from a `preset` line, else toy; then the
    /// remaining lines; then the seed flag.
    pub fn load(text: Option<&str>, preset: Option<Preset>, seed: Option<u64>) -> Result<Self> {
        let entries = match text {
            Some(t) => parse_lines(t)?,
            None => Vec::new(),
        };
        let from_file = entries.iter().find(|(k, _)| k == "preset").map(|(_, v)| v.parse()).transpose()?;
        let mut cfg = Self::preset(preset.or(from_file).unwrap_or(Preset::Toy));
        for (k, v) in entries.iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v)?;
        }
        if let Some(s) = seed {
            cfg.set("seed", &s.to_string())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.forest.validate()?;
        self.net.validate()?;
        self.train.validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::ConfigInvalid(format!("split.train_fraction {} outside (0, 1)", self.train_fraction)));
        }
        if self.radiomics.gray_levels < 2 {
            return Err(Error::ConfigInvalid("extract.gray_levels must be >= 2".into()));
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.synth.classes
    }

    pub fn stream_seed(&self, stream: u64) -> u64 {
        derive_seed(self.seed, stream)
    }

    pub fn forest_config(&self) -> ForestConfig {
        ForestConfig { seed: self.stream_seed(streams::FOREST), ..self.forest }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.stream_seed(streams::TRAIN), ..self.train }
    }

    pub fn net_config(&self, head: Head) -> NetConfig {
        NetConfig { head, ..self.net.clone() }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig { seed: self.seed, ..self.synth.clone() }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = num(key, v)?,
            "synth.classes" => self.synth.classes = num(key, v)?,
            "synth.per_class" => self.synth.per_class = num(key, v)?,
            "synth.bbox" => self.synth.bbox = BoundingBox::new(triple(key, v)?)?,
            "synth.base_radius" => self.synth.base_radius = num(key, v)?,
            "synth.atrophy_step" => self.synth.atrophy_step = num(key, v)?,
            "synth.texture_noise_step" => self.synth.texture_noise_step = num(key, v)?,
            "synth.subject_jitter" => self.synth.subject_jitter = num(key, v)?,
            "split.train_fraction" => self.train_fraction = num(key, v)?,
            "extract.gray_levels" => self.radiomics.gray_levels = num(key, v)?,
            "extract.wavelet" => self.radiomics.wavelet = boolean(key, v)?,
            "forest.n_trees" => self.forest.n_trees = num(key, v)?,
            "forest.min_leaf" => self.forest.min_leaf = num(key, v)?,
            "forest.max_features" => self.forest.max_features = v.parse::<MaxFeatures>()?,
            "net.input_dims" => self.net.input_dims = triple(key, v)?,
            "net.conv1_kernels" => self.net.conv1_kernels = num(key, v)?,
            "net.resblock_kernels" => self.net.resblock_kernels = list(key, v)?,
            "net.kernel_size" => self.net.kernel_size = num(key, v)?,
            "net.pool_size" => self.net.pool_size = num(key, v)?,
            "net.pool_stride" => self.net.pool_stride = num(key, v)?,
            "net.pool_after" => {
                self.net.pool_after = list::<u8>(key, v)?.into_iter().map(|b| b != 0).collect();
            }
            "net.fc1_width" => self.net.fc1_width = num(key, v)?,
            "net.dropout_rate" => self.net.dropout_rate = num(key, v)?,
            "train.base_lr" => self.train.base_lr = num(key, v)?,
            "train.momentum" => self.train.momentum = num(key, v)?,
            "train.lr_step" => self.train.lr_step = num(key, v)?,
            "train.lr_gamma" => self.train.lr_gamma = num(key, v)?,
            "train.max_iter" => self.train.max_iter = num(key, v)?,
            "train.batch_size" => self.train.batch_size = num(key, v)?,
            "train.augmentation" => self.train_augmentation = parse_augmentation(v)?,
            "augment.mode" => {
                self.augment.mode = match v {
                    "translate" => AugmentMode::Translate,
                    "elastic" => AugmentMode::Elastic,
                    _ => return Err(Error::ConfigInvalid(format!("augment.mode {v:?} (translate | elastic)"))),
                }
            }
            "augment.magnitude" => self.augment.magnitude = num(key, v)?,
            "augment.amplitude" => self.augment.amplitude = num(key, v)?,
            "augment.smoothness" => self.augment.smoothness = num(key, v)?,
            "augment.copies" => self.augment.copies = num(key, v)?,
            _ => return Err(Error::ConfigInvalid(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Every effective setting as `key = value` lines; parsing the result
    /// with [`RunConfig::load`] reproduces this config.
    pub fn echo(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let s = &self.synth;
        let n = &self.net;
        let t = &self.train;
        let a = &self.augment;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("preset", self.preset.name().into());
        put("seed", self.seed.to_string());
        put("synth.classes", s.classes.to_string());
        put("synth.per_class", s.per_class.to_string());
        put("synth.bbox", join(&s.bbox.dims()));
        put("synth.base_radius", format!("{:?}", s.base_radius));
        put("synth.atrophy_step", format!("{:?}", s.atrophy_step));
        put("synth.texture_noise_step", format!("{:?}", s.texture_noise_step));
        put("synth.subject_jitter", format!("{:?}", s.subject_jitter));
        put("split.train_fraction", format!("{:?}", self.train_fraction));
        put("extract.gray_levels", self.radiomics.gray_levels.to_string());
        put("extract.wavelet", self.radiomics.wavelet.to_string());
        put("forest.n_trees", self.forest.n_trees.to_string());
        put("forest.min_leaf", self.forest.min_leaf.to_string());
        put("forest.max_features", self.forest.max_features.to_string());
        put("net.input_dims", join(&n.input_dims));
        put("net.conv1_kernels", n.conv1_kernels.to_string());
        put("net.resblock_kernels", join(&n.resblock_kernels));
        put("net.kernel_size", n.kernel_size.to_string());
        put("net.pool_size", n.pool_size.to_string());
        put("net.pool_stride", n.pool_stride.to_string());
        put("net.pool_after", join(&n.pool_after.iter().map(|&b| b as usize).collect::<Vec<_>>()));
        put("net.fc1_width", n.fc1_width.to_string());
        put("net.dropout_rate", format!("{:?}", n.dropout_rate));
        put("train.base_lr", format!("{:?}", t.base_lr));
        put("train.momentum", format!("{:?}", t.momentum));
        put("train.lr_step", t.lr_step.to_string());
        put("train.lr_gamma", format!("{:?}", t.lr_gamma));
        put("train.max_iter", t.max_iter.to_string());
        put("train.batch_size", t.batch_size.to_string());
        put("train.augmentation", augmentation_text(self.train_augmentation));
        put(
            "augment.mode",
            match a.mode {
                AugmentMode::Translate => "translate".into(),
                AugmentMode::Elastic => "elastic".into(),
            },
        );
        put("augment.magnitude", a.magnitude.to_string());
        put("augment.amplitude", format!("{:?}", a.amplitude));
        put("augment.smoothness", format!("{:?}", a.smoothness));
        put("augment.copies", a.copies.to_string());
        out
    }
}

/// `key = value` pairs; `#` starts a comment line.
pub fn parse_lines(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::ConfigInvalid(format!("config line {}: expected key = value", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::ConfigInvalid(format!("{key}: cannot parse {v:?}")))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(Error::ConfigInvalid(format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|p| num(key, p.trim())).collect()
}

fn triple(key: &str, v: &str) -> Result<[usize; 3]> {
    let l: Vec<usize> = list(key, v)?;
    l.try_into().map_err(|_| Error::ConfigInvalid(format!("{key}: expected x,y,z")))
}

fn augmentation_text(a: Augmentation) -> String {
    match a {
        Augmentation::None => "none".into(),
        Augmentation::Translate { magnitude } => format!("translate:{magnitude}"),
        Augmentation::Elastic { amplitude, smoothness } => format!("elastic:{amplitude:?}:{smoothness:?}"),
    }
}

/// `none`, `translate:<voxels>` or `elastic:<amplitude>:<smoothness>`.
pub fn parse_augmentation(v: &str) -> Result<Augmentation> {
    let key = "train.augmentation";
    let parts: Vec<&str> = v.split(':').collect();
    match parts.as_slice() {
        ["none"] => Ok(Augmentation::None),
        ["translate", m] => Ok(Augmentation::Translate { magnitude: num(key, m)? }),
        ["elastic", a, s] => Ok(Augmentation::Elastic { amplitude: num(key, a)?, smoothness: num(key, s)? }),
        _ => Err(Error::ConfigInvalid(format!("{key}: {v:?} (none | translate:M | elastic:A:S)"))),
    }
}

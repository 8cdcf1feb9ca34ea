//! Declarative experiment configuration.
//!
//! A config is a JSON object; every key has a default, so `{}` is a valid
//! config. [`parse_config`] layers the defaults, the file and dotted-key
//! overrides (`optimizer.lr=0.01`) in that order, then validates ranges.
//! All randomness in a run is derived from the single top-level `seed`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::adversarial::AdversarialSpec;
use crate::data::Normalization;
use crate::erm::{ListNetTarget, MaskedLabelPolicy, RankerKind, RankerSpec, TiePolicy};
use crate::metrics::{EvalOptions, ZeroIdealPolicy};
use crate::nn::{Activation, AdamConfig, NetConfig};
use crate::{seed, Error, Result};

/// File name of the resolved-config echo written into an output directory.
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    #[default]
    Erm,
    Adversarial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_queries: usize,
    pub docs_per_query: usize,
    pub dim: usize,
    pub noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_queries: 200,
            docs_per_query: 30,
            dim: 20,
            noise: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// LibSVM file; when absent a synthetic dataset is generated.
    pub path: Option<PathBuf>,
    pub feature_dim: Option<usize>,
    /// Merge non-contiguous blocks of the same qid instead of failing.
    pub merge_qids: bool,
    pub normalization: Normalization,
    pub binarize_threshold: Option<f64>,
    pub synthetic: SyntheticConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: None,
            feature_dim: None,
            merge_qids: false,
            normalization: Normalization::Zscore,
            binarize_threshold: None,
            synthetic: SyntheticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankerConfig {
    pub framework: Framework,
    pub kind: RankerKind,
    pub sigma: f64,
    pub alpha: f64,
    pub masked_label_policy: MaskedLabelPolicy,
    pub listnet_target: ListNetTarget,
    pub listmle_ties: TiePolicy,
    pub k: usize,
    pub temperature: f64,
    pub g_steps: usize,
    pub d_steps: usize,
    pub samples_per_query: usize,
}

impl Default for RankerConfig {
    fn default() -> Self {
        let erm = RankerSpec::new(RankerKind::LambdaRank);
        let adv = AdversarialSpec::default();
        RankerConfig {
            framework: Framework::Erm,
            kind: erm.kind,
            sigma: erm.sigma,
            alpha: erm.alpha,
            masked_label_policy: erm.masked_label_policy,
            listnet_target: erm.listnet_target,
            listmle_ties: erm.listmle_ties,
            k: adv.k,
            temperature: adv.temperature,
            g_steps: adv.g_steps,
            d_steps: adv.d_steps,
            samples_per_query: adv.samples_per_query,
        }
    }
}

/// Net shape. Unset fields resolve per framework: ERM nets default to
/// 3 layers with batchnorm and the ranker's reference activation,
/// adversarial nets to 5 layers, ReLU, no batchnorm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetShape {
    pub layers: Option<usize>,
    pub hidden: usize,
    pub activation: Option<Activation>,
    pub batchnorm: Option<bool>,
}

impl Default for NetShape {
    fn default() -> Self {
        NetShape {
            layers: None,
            hidden: 100,
            activation: None,
            batchnorm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        OptimizerConfig {
            lr: a.lr,
            weight_decay: a.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub num_folds: usize,
    pub cutoffs: Vec<usize>,
    pub selection_cutoff: usize,
    /// Label mask ratio applied to training splits.
    pub mask_ratio: f64,
    pub zero_ideal: ZeroIdealPolicy,
    pub relevance_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            num_folds: 5,
            cutoffs: vec![1, 3, 5, 10, 20, 50],
            selection_cutoff: 5,
            mask_ratio: 0.0,
            zero_ideal: ZeroIdealPolicy::Zero,
            relevance_threshold: 1.0,
        }
    }
}

/// Candidate values per hyperparameter; empty lists keep the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub kind: Vec<RankerKind>,
    pub activation: Vec<Activation>,
    pub layers: Vec<usize>,
    pub hidden: Vec<usize>,
    pub lr: Vec<f64>,
    pub k: Vec<usize>,
    pub max_cells: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            kind: Vec::new(),
            activation: Vec::new(),
            layers: Vec::new(),
            hidden: Vec::new(),
            lr: Vec::new(),
            k: Vec::new(),
            max_cells: 256,
        }
    }
}

impl GridSpec {
    pub fn num_cells(&self) -> usize {
        [
            self.kind.len(),
            self.activation.len(),
            self.layers.len(),
            self.hidden.len(),
            self.lr.len(),
            self.k.len(),
        ]
        .iter()
        .map(|&n| n.max(1))
        .product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub mask_ratios: Vec<f64>,
    /// Adversarial ranking sizes compared in the sweep table.
    pub ks: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            mask_ratios: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            ks: vec![1, 2, 5, 10],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub ranker: RankerConfig,
    pub net: NetShape,
    pub optimizer: OptimizerConfig,
    pub train: TrainConfig,
    pub grid: GridSpec,
    pub sweep: SweepConfig,
    /// Not part of the config hash.
    pub output_dir: Option<PathBuf>,
}

fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

fn check_positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_err(
            key,
            format!("{v} out of range; expected a finite value > 0"),
        ))
    }
}

fn check_unit(key: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(config_err(key, format!("{v} out of range; expected [0, 1]")))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.train;
        if t.cutoffs.is_empty() {
            return Err(config_err("train.cutoffs", "must be nonempty"));
        }
        if t.cutoffs.contains(&0) || t.cutoffs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err(
                "train.cutoffs",
                format!("{:?} must be strictly ascending positive integers", t.cutoffs),
            ));
        }
        if t.selection_cutoff == 0 {
            return Err(config_err("train.selection_cutoff", "0 out of range; expected >= 1"));
        }
        if t.num_folds < 3 {
            return Err(config_err(
                "train.num_folds",
                format!("{} out of range; expected >= 3", t.num_folds),
            ));
        }
        check_unit("train.mask_ratio", t.mask_ratio)?;
        for (i, &r) in self.sweep.mask_ratios.iter().enumerate() {
            check_unit(&format!("sweep.mask_ratios[{i}]"), r)?;
        }
        check_positive("optimizer.lr", self.optimizer.lr)?;
        if !(self.optimizer.weight_decay >= 0.0 && self.optimizer.weight_decay.is_finite()) {
            return Err(config_err(
                "optimizer.weight_decay",
                format!("{} out of range; expected >= 0", self.optimizer.weight_decay),
            ));
        }
        let r = &self.ranker;
        check_positive("ranker.sigma", r.sigma)?;
        check_positive("ranker.alpha", r.alpha)?;
        check_positive("ranker.temperature", r.temperature)?;
        if r.k == 0 {
            return Err(config_err("ranker.k", "0 out of range; expected >= 1"));
        }
        if r.samples_per_query == 0 {
            return Err(config_err("ranker.samples_per_query", "0 out of range; expected >= 1"));
        }
        if r.g_steps == 0 && r.d_steps == 0 {
            return Err(config_err("ranker.g_steps", "g_steps and d_steps cannot both be 0"));
        }
        if let Some(l) = self.net.layers {
            if l == 0 {
                return Err(config_err("net.layers", "0 out of range; expected >= 1"));
            }
        }
        if self.net.hidden == 0 {
            return Err(config_err("net.hidden", "0 out of range; expected >= 1"));
        }
        for (i, &l) in self.grid.layers.iter().enumerate() {
            if l == 0 {
                return Err(config_err(
                    &format!("grid.layers[{i}]"),
                    "0 out of range; expected >= 1",
                ));
            }
        }
        for (i, &lr) in self.grid.lr.iter().enumerate() {
            check_positive(&format!("grid.lr[{i}]"), lr)?;
        }
        if self.grid.num_cells() > self.grid.max_cells {
            return Err(config_err(
                "grid.max_cells",
                format!(
                    "grid has {} cells, more than the allowed {}",
                    self.grid.num_cells(),
                    self.grid.max_cells
                ),
            ));
        }
        let s = &self.data.synthetic;
        if self.data.path.is_none() && (s.num_queries == 0 || s.docs_per_query == 0 || s.dim == 0) {
            return Err(config_err("data.synthetic", "sizes must be >= 1"));
        }
        if !(s.noise >= 0.0 && s.noise.is_finite()) {
            return Err(config_err(
                "data.synthetic.noise",
                format!("{} out of range; expected >= 0", s.noise),
            ));
        }
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.net.layers.unwrap_or(match self.ranker.framework {
            Framework::Erm => 3,
            Framework::Adversarial => 5,
        })
    }

    pub fn activation(&self) -> Activation {
        self.net.activation.unwrap_or(match self.ranker.framework {
            Framework::Erm => self.ranker.kind.reference_activation(),
            Framework::Adversarial => Activation::ReLU,
        })
    }

    pub fn batchnorm(&self) -> bool {
        self.net.batchnorm.unwrap_or(self.ranker.framework == Framework::Erm)
    }

    /// Net for `role` ("net", "generator", "discriminator") in fold `fold`.
    pub fn net_config(&self, input_dim: usize, role: &str, fold: usize) -> NetConfig {
        NetConfig {
            input_dim,
            layers: self.layers(),
            hidden: self.net.hidden,
            activation: self.activation(),
            batchnorm: self.batchnorm(),
            seed: seed::derive(self.seed, role, &[fold as u64]),
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            lr: self.optimizer.lr,
            weight_decay: self.optimizer.weight_decay,
            ..AdamConfig::default()
        }
    }

    pub fn ranker_spec(&self, fold: usize) -> RankerSpec {
        let r = &self.ranker;
        RankerSpec {
            kind: r.kind,
            sigma: r.sigma,
            alpha: r.alpha,
            seed: seed::derive(self.seed, "erm", &[fold as u64]),
            masked_label_policy: r.masked_label_policy,
            listnet_target: r.listnet_target,
            listmle_ties: r.listmle_ties,
        }
    }

    pub fn adversarial_spec(&self, fold: usize) -> AdversarialSpec {
        let r = &self.ranker;
        AdversarialSpec {
            k: r.k,
            temperature: r.temperature,
            g_steps: r.g_steps,
            d_steps: r.d_steps,
            samples_per_query: r.samples_per_query,
            seed: seed::derive(self.seed, "adversarial", &[fold as u64]),
        }
    }

    pub fn eval_options(&self, label_max: f64) -> EvalOptions {
        EvalOptions {
            cutoffs: self.train.cutoffs.clone(),
            relevance_threshold: self.train.relevance_threshold,
            label_max,
            zero_ideal: self.train.zero_ideal,
        }
    }

    /// Short human-readable label of the ranker, e.g. `LambdaRank` or
    /// `Adversarial-k10`.
    pub fn ranker_label(&self) -> String {
        match self.ranker.framework {
            Framework::Erm => self.ranker.kind.to_string(),
            Framework::Adversarial => format!("Adversarial-k{}", self.ranker.k),
        }
    }

    /// First 12 hex digits of the SHA-256 of the canonical JSON form,
    /// ignoring `output_dir`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    /// Writes the resolved config as pretty JSON into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(RESOLVED_CONFIG_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// Applies one `dotted.key=value` override. The key must already exist;
/// the value is read as JSON, falling back to a plain string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(assignment, "override must look like key=value"))?;
    let key = key.trim();
    let mut slot = &mut *root;
    for part in key.split('.') {
        slot = slot
            .as_object_mut()
            .and_then(|o| o.get_mut(part))
            .ok_or_else(|| config_err(key, "unknown config key"))?;
    }
    let raw = raw.trim();
    *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(())
}

/// Resolves a config from JSON text plus overrides.
pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let file: Value = serde_json::from_str(text).map_err(|e| config_err("<root>", format!("malformed JSON: {e}")))?;
    if !file.is_object() {
        return Err(config_err("<root>", "config must be a JSON object"));
    }
    let mut value = serde_json::to_value(ExperimentConfig::default())?;
    merge(&mut value, file);
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let key = e.path().to_string();
        config_err(&key, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Resolves a config: defaults, then the file at `path` (if any), then
/// `overrides`.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| config_err("<file>", format!("{}: {e}", p.display())))?,
        None => "{}".to_string(),
    };
    parse_config_str(&text, overrides)
}

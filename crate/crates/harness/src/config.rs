//! TOML experiment configurations.
//!
//! A config names one suite and carries the section for it:
//!
//! ```toml
//! suite = "exp1"
//! seeds = [1, 2, 3]
//!
//! [exp1]
//! widths = [200]
//! ...
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use hiernet::baselines::KernelSpec;
use hiernet::concept::SmoothActivation;
use hiernet::concept::{benchmark_instance, min_complexity_instance, parity_instance};
use hiernet::lowerbound::{Anchors, FeatureMap, LabelPart, SeparationSetup};
use hiernet::resnet::{LrDrop, TrainConfig, TrainableSet};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Exp1,
    Exp2,
    Mincomplexity,
    Separation,
    HermiteVerify,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Exp1 => "exp1",
            Suite::Exp2 => "exp2",
            Suite::Mincomplexity => "mincomplexity",
            Suite::Separation => "separation",
            Suite::HermiteVerify => "hermite-verify",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub suite: Suite,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exp1: Option<Exp1Config>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exp2: Option<Exp2Config>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mincomplexity: Option<MinComplexityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation: Option<SeparationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hermite: Option<HermiteConfig>,
}

/// Learner tags as they appear in result files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "3resnet(all)")]
    ResNetAll,
    #[serde(rename = "3resnet(hidden)")]
    ResNetHidden,
    #[serde(rename = "3layer(all)")]
    ThreeLayerAll,
    #[serde(rename = "3layer(hidden)")]
    ThreeLayerHidden,
    #[serde(rename = "2layer(all)")]
    TwoLayerAll,
    #[serde(rename = "2layer(hidden)")]
    TwoLayerHidden,
    /// Output layer of a two-layer net on fixed random features.
    #[serde(rename = "last")]
    Last,
    /// Two-layer net linearized at its initialization.
    #[serde(rename = "NTK")]
    Ntk,
}

impl Algorithm {
    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::ResNetAll => "3resnet(all)",
            Algorithm::ResNetHidden => "3resnet(hidden)",
            Algorithm::ThreeLayerAll => "3layer(all)",
            Algorithm::ThreeLayerHidden => "3layer(hidden)",
            Algorithm::TwoLayerAll => "2layer(all)",
            Algorithm::TwoLayerHidden => "2layer(hidden)",
            Algorithm::Last => "last",
            Algorithm::Ntk => "NTK",
        }
    }

    /// File-name friendly form of the tag.
    pub fn slug(self) -> &'static str {
        match self {
            Algorithm::ResNetAll => "3resnet-all",
            Algorithm::ResNetHidden => "3resnet-hidden",
            Algorithm::ThreeLayerAll => "3layer-all",
            Algorithm::ThreeLayerHidden => "3layer-hidden",
            Algorithm::TwoLayerAll => "2layer-all",
            Algorithm::TwoLayerHidden => "2layer-hidden",
            Algorithm::Last => "last",
            Algorithm::Ntk => "ntk",
        }
    }

    pub fn trainable(self) -> TrainableSet {
        match self {
            Algorithm::ResNetAll | Algorithm::ThreeLayerAll | Algorithm::TwoLayerAll | Algorithm::Ntk => {
                TrainableSet::All
            }
            Algorithm::ResNetHidden | Algorithm::ThreeLayerHidden | Algorithm::TwoLayerHidden => TrainableSet::Hidden,
            Algorithm::Last => TrainableSet::Last,
        }
    }
}

fn default_batch() -> usize {
    50
}

fn default_momentum() -> f64 {
    0.9
}

/// Minibatch SGD settings shared by every practice-mode run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_drop: Option<LrDrop>,
    /// Test risk cadence in epochs; the final epoch is always evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_every: Option<usize>,
}

impl TrainingConfig {
    pub fn train_config(&self, lr: f64, weight_decay: f64, trainable: TrainableSet) -> TrainConfig {
        let mut cfg = TrainConfig::practice(lr, weight_decay);
        cfg.steps = self.epochs;
        cfg.batch_size = self.batch_size;
        cfg.momentum = self.momentum;
        cfg.lr_drop = self.lr_drop;
        cfg.trainable = trainable;
        cfg.eval_every = self.eval_every.unwrap_or(self.epochs).max(1);
        cfg
    }

    fn validate(&self, what: &str) -> Result<()> {
        self.train_config(0.1, 0.0, TrainableSet::Hidden)
            .validate()
            .map_err(|e| HarnessError::Config(format!("{what}: {e}")))?;
        if self.epochs == 0 {
            return Err(HarnessError::Config(format!("{what}: epochs must be positive")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub tag: Algorithm,
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

fn default_alpha() -> f64 {
    0.3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exp1Config {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub widths: Vec<usize>,
    pub training: TrainingConfig,
    pub algorithms: Vec<AlgorithmConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    All,
    Hidden,
}

impl Variant {
    pub fn algorithm(self) -> Algorithm {
        match self {
            Variant::All => Algorithm::ResNetAll,
            Variant::Hidden => Algorithm::ResNetHidden,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantConfig {
    pub variant: Variant,
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exp2Config {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub betas: Vec<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub width: usize,
    pub training: TrainingConfig,
    pub variants: Vec<VariantConfig>,
}

/// Training of the two-layer net with a fixed `±1/√m` readout on fresh samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParityTraining {
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
    pub hidden_std: f64,
    pub epochs: usize,
    pub epoch_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_drop: Option<LrDrop>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub widths: Vec<usize>,
    pub lrs: Vec<f64>,
    pub decays: Vec<f64>,
    pub hidden_std: f64,
    pub epochs: usize,
    pub epoch_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_drop: Option<LrDrop>,
}

fn default_test_samples() -> usize {
    20_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinComplexityConfig {
    /// Input dimension of the padded problem and the sweep.
    pub d: usize,
    /// Width of the reference net trained at `d = 6`.
    pub width: usize,
    pub reference: ParityTraining,
    /// How many times the padded reference is widened by row duplication.
    #[serde(default)]
    pub duplications: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    /// Monte-Carlo sample count when the cube is too large to enumerate.
    #[serde(default = "default_test_samples")]
    pub test_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparationResNetConfig {
    /// 0-based coordinates of the fixed parity.
    pub subset: Vec<usize>,
    pub n_train: usize,
    pub width: usize,
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
    pub training: TrainingConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparationConfig {
    pub d: usize,
    pub d1: usize,
    pub k: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub anchors: usize,
    pub ridge: f64,
    pub kernel: KernelSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub feature_maps: Vec<FeatureMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resnet: Option<SeparationResNetConfig>,
}

impl SeparationConfig {
    pub fn setup(&self) -> SeparationSetup {
        SeparationSetup {
            d: self.d,
            d1: self.d1,
            k: self.k,
            alpha: self.alpha,
            anchors: Anchors::Sampled { n: self.anchors },
            label: LabelPart::Composite,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExistentialConfig {
    pub d: usize,
    pub m: usize,
    pub eps: f64,
    pub points: usize,
}

fn default_coefficients() -> Vec<f64> {
    vec![0.0, 1.0]
}

fn default_grid() -> usize {
    9
}

fn default_max_degree() -> usize {
    9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HermiteConfig {
    /// Taylor coefficients of the activation, constant term first.
    #[serde(default = "default_coefficients")]
    pub coefficients: Vec<f64>,
    pub eps: f64,
    pub mc: usize,
    /// Number of evenly spaced points in `[−1, 1]`.
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Largest odd degree in the `p′_i` table.
    #[serde(default = "default_max_degree")]
    pub max_degree: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub existential: Option<ExistentialConfig>,
}

impl HermiteConfig {
    pub fn activation(&self) -> SmoothActivation {
        SmoothActivation::polynomial(self.coefficients.clone())
    }
}

fn config_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(e.to_string())
}

fn require_nonempty<T>(items: &[T], what: &str) -> Result<()> {
    if items.is_empty() {
        return Err(HarnessError::Config(format!("{what} must not be empty")));
    }
    Ok(())
}

fn require_positive(v: usize, what: &str) -> Result<()> {
    if v == 0 {
        return Err(HarnessError::Config(format!("{what} must be positive")));
    }
    Ok(())
}

fn require_rate(v: f64, what: &str) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(HarnessError::Config(format!(
            "{what} must be a finite nonnegative number, got {v}"
        )));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize to TOML")
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from("results").join(self.suite.name()))
    }

    pub fn validate(&self) -> Result<()> {
        require_nonempty(&self.seeds, "seeds")?;
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(HarnessError::Config("seeds must be distinct".into()));
        }
        let missing = || {
            HarnessError::Config(format!(
                "suite {} needs a [{}] section",
                self.suite.name(),
                section(self.suite)
            ))
        };
        match self.suite {
            Suite::Exp1 => self.exp1.as_ref().ok_or_else(missing)?.validate(),
            Suite::Exp2 => self.exp2.as_ref().ok_or_else(missing)?.validate(),
            Suite::Mincomplexity => self.mincomplexity.as_ref().ok_or_else(missing)?.validate(),
            Suite::Separation => self.separation.as_ref().ok_or_else(missing)?.validate(),
            Suite::HermiteVerify => self.hermite.as_ref().ok_or_else(missing)?.validate(),
        }
    }
}

fn section(suite: Suite) -> &'static str {
    match suite {
        Suite::HermiteVerify => "hermite",
        other => other.name(),
    }
}

impl Exp1Config {
    fn validate(&self) -> Result<()> {
        benchmark_instance(self.alpha).map_err(config_err)?;
        require_nonempty(&self.widths, "exp1.widths")?;
        require_nonempty(&self.algorithms, "exp1.algorithms")?;
        require_positive(self.n_train, "exp1.n_train")?;
        require_positive(self.n_test, "exp1.n_test")?;
        if let Some(&m) = self.widths.iter().find(|&&m| m < 15) {
            return Err(HarnessError::Config(format!(
                "width {m} is below the output dimension 15"
            )));
        }
        self.training.validate("exp1.training")?;
        let mut tags = BTreeSet::new();
        for a in &self.algorithms {
            require_rate(a.lr, "exp1 learning rate")?;
            require_rate(a.weight_decay, "exp1 weight decay")?;
            if !tags.insert(a.tag) {
                return Err(HarnessError::Config(format!("algorithm {} listed twice", a.tag.tag())));
            }
        }
        Ok(())
    }
}

impl Exp2Config {
    fn validate(&self) -> Result<()> {
        let base = benchmark_instance(self.alpha).map_err(config_err)?;
        require_nonempty(&self.betas, "exp2.betas")?;
        require_nonempty(&self.variants, "exp2.variants")?;
        require_positive(self.n_train, "exp2.n_train")?;
        require_positive(self.n_test, "exp2.n_test")?;
        if self.width < 15 {
            return Err(HarnessError::Config(format!(
                "width {} is below the output dimension 15",
                self.width
            )));
        }
        for &beta in &self.betas {
            if !(0.0..=1.0).contains(&beta) {
                return Err(HarnessError::Config(format!("beta {beta} lies outside [0, 1]")));
            }
            base.with_beta(beta).map_err(config_err)?;
        }
        self.training.validate("exp2.training")?;
        let mut seen = BTreeSet::new();
        for v in &self.variants {
            require_rate(v.lr, "exp2 learning rate")?;
            require_rate(v.weight_decay, "exp2 weight decay")?;
            if !seen.insert(v.variant) {
                return Err(HarnessError::Config(format!("variant {:?} listed twice", v.variant)));
            }
        }
        Ok(())
    }
}

impl ParityTraining {
    fn validate(&self, what: &str) -> Result<()> {
        require_rate(self.lr, what)?;
        require_rate(self.weight_decay, what)?;
        require_rate(self.hidden_std, what)?;
        require_positive(self.epochs, what)?;
        require_positive(self.epoch_size, what)
    }
}

/// Coordinates of the degree-6 parity used by the min-complexity suite.
pub const MIN_COMPLEXITY_COORDS: [usize; 6] = [0, 1, 2, 3, 4, 5];

impl MinComplexityConfig {
    fn validate(&self) -> Result<()> {
        if self.d < 6 {
            return Err(HarnessError::Config(format!(
                "mincomplexity.d must be at least 6, got {}",
                self.d
            )));
        }
        min_complexity_instance(self.d, &MIN_COMPLEXITY_COORDS).map_err(config_err)?;
        if self.width == 0 || !self.width.is_multiple_of(2) {
            return Err(HarnessError::Config(format!(
                "mincomplexity.width must be even and positive, got {}",
                self.width
            )));
        }
        self.reference.validate("mincomplexity.reference")?;
        require_positive(self.test_samples, "mincomplexity.test_samples")?;
        if let Some(s) = &self.sweep {
            require_nonempty(&s.widths, "mincomplexity.sweep.widths")?;
            require_nonempty(&s.lrs, "mincomplexity.sweep.lrs")?;
            require_nonempty(&s.decays, "mincomplexity.sweep.decays")?;
            if let Some(&m) = s.widths.iter().find(|&&m| m == 0 || m % 2 != 0) {
                return Err(HarnessError::Config(format!(
                    "sweep width {m} must be even and positive"
                )));
            }
            for &v in s.lrs.iter().chain(&s.decays) {
                require_rate(v, "mincomplexity.sweep rates")?;
            }
            require_rate(s.hidden_std, "mincomplexity.sweep.hidden_std")?;
            require_positive(s.epochs, "mincomplexity.sweep.epochs")?;
            require_positive(s.epoch_size, "mincomplexity.sweep.epoch_size")?;
        }
        Ok(())
    }
}

impl SeparationConfig {
    fn validate(&self) -> Result<()> {
        self.setup().validate().map_err(config_err)?;
        self.kernel.validate().map_err(config_err)?;
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(HarnessError::Config(format!(
                "ridge must be nonnegative, got {}",
                self.ridge
            )));
        }
        if let Some(r) = &self.resnet {
            parity_instance(self.d, self.d1, self.k, self.alpha, &r.subset).map_err(config_err)?;
            require_positive(r.n_train, "separation.resnet.n_train")?;
            if r.width < self.k {
                return Err(HarnessError::Config(format!(
                    "resnet width {} is below k = {}",
                    r.width, self.k
                )));
            }
            require_rate(r.lr, "separation.resnet.lr")?;
            require_rate(r.weight_decay, "separation.resnet.weight_decay")?;
            r.training.validate("separation.resnet.training")?;
        }
        Ok(())
    }
}

impl HermiteConfig {
    fn validate(&self) -> Result<()> {
        hiernet::hermite::fit_indicator_function(&self.activation(), self.eps).map_err(config_err)?;
        if self.mc < 10_000 {
            return Err(HarnessError::Config(format!(
                "hermite.mc must be at least 10^4, got {}",
                self.mc
            )));
        }
        if self.grid < 2 {
            return Err(HarnessError::Config("hermite.grid needs at least two points".into()));
        }
        if self.max_degree == 0 || self.max_degree > hiernet::hermite::MAX_HERMITE_DEGREE {
            return Err(HarnessError::Config(format!(
                "hermite.max_degree {} out of range",
                self.max_degree
            )));
        }
        if let Some(e) = &self.existential {
            require_positive(e.d, "hermite.existential.d")?;
            require_positive(e.m, "hermite.existential.m")?;
            require_positive(e.points, "hermite.existential.points")?;
            if !(e.eps > 0.0 && e.eps < 1.0) {
                return Err(HarnessError::Config(format!(
                    "hermite.existential.eps must lie in (0,1), got {}",
                    e.eps
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXP1: &str = r#"
suite = "exp1"
seeds = [1, 2]

[exp1]
n_train = 100
n_test = 100
widths = [20]

[exp1.training]
epochs = 2

[[exp1.algorithms]]
tag = "3resnet(hidden)"
lr = 0.5
weight_decay = 5e-4

[[exp1.algorithms]]
tag = "NTK"
lr = 0.05
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml(EXP1).unwrap();
        let e = cfg.exp1.as_ref().unwrap();
        assert_eq!(e.alpha, 0.3);
        assert_eq!(e.training.batch_size, 50);
        assert_eq!(e.algorithms[1].tag, Algorithm::Ntk);
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(cfg.out_dir(), PathBuf::from("results/exp1"));
    }

    #[test]
    fn rejects_duplicate_seeds_and_missing_sections() {
        let dup = EXP1.replace("[1, 2]", "[1, 1]");
        assert!(matches!(
            ExperimentConfig::from_toml(&dup),
            Err(HarnessError::Config(_))
        ));
        let other = EXP1.replace("suite = \"exp1\"", "suite = \"exp2\"");
        assert!(matches!(
            ExperimentConfig::from_toml(&other),
            Err(HarnessError::Config(_))
        ));
    }

    #[test]
    fn rejects_bad_grids() {
        let empty = EXP1.replace("widths = [20]", "widths = []");
        assert!(ExperimentConfig::from_toml(&empty).is_err());
        let narrow = EXP1.replace("widths = [20]", "widths = [10]");
        assert!(ExperimentConfig::from_toml(&narrow).is_err());
        let twice = EXP1.replace("tag = \"NTK\"", "tag = \"3resnet(hidden)\"");
        assert!(ExperimentConfig::from_toml(&twice).is_err());
        let unknown = EXP1.replace("tag = \"NTK\"", "tag = \"4resnet\"");
        assert!(ExperimentConfig::from_toml(&unknown).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let extra = EXP1.replace("n_test = 100", "n_test = 100\nn_val = 3");
        assert!(ExperimentConfig::from_toml(&extra).is_err());
    }

    #[test]
    fn tags_match_their_serialized_form() {
        for a in [
            Algorithm::ResNetAll,
            Algorithm::ResNetHidden,
            Algorithm::ThreeLayerAll,
            Algorithm::ThreeLayerHidden,
            Algorithm::TwoLayerAll,
            Algorithm::TwoLayerHidden,
            Algorithm::Last,
            Algorithm::Ntk,
        ] {
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{}\"", a.tag()));
        }
    }
}

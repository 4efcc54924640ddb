//! Run configuration: one TOML file covering every subcommand. Unknown keys
//! are rejected, and each run writes the resolved form next to its outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xaiseg_core::attribution::Method;
use xaiseg_core::explainer::{explainer_train_config, LossWeights};
use xaiseg_core::growth::{growth_crack_params, GrowthParams};
use xaiseg_core::nn::TrainConfig;
use xaiseg_core::postproc::PostprocConfig;
use xaiseg_core::severity::DEFAULT_MM_PER_PX;
use xaiseg_core::synth::{CrackParams, SynthConfig};

use crate::error::{io_err, CliError, Result};

/// Environment variable that replaces the master seed.
pub const SEED_ENV: &str = "XAISEG_SEED";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; when present it is copied into every component seed.
    pub seed: Option<u64>,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub model: ModelPaths,
    /// Method for `attribute` and `growth`.
    pub method: MethodChoice,
    /// Methods compared by `benchmark`; empty means the standard set.
    pub methods: Vec<Method>,
    /// Defaults scale with `synth.patch_size` when left out.
    pub postproc: Option<PostprocConfig>,
    pub explainer: ExplainerConfig,
    pub severity: SeverityConfig,
    pub growth: GrowthConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelPaths {
    pub classifier: Option<PathBuf>,
    pub explainer: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MethodChoice(pub Method);

impl Default for MethodChoice {
    fn default() -> Self {
        MethodChoice(Method::Lrp {
            rules: Default::default(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainerConfig {
    pub weights: LossWeights,
    pub train: TrainConfig,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            train: explainer_train_config(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeverityConfig {
    pub mm_per_px: f64,
}

impl Default for SeverityConfig {
    fn default() -> Self {
        Self {
            mm_per_px: DEFAULT_MM_PER_PX,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthConfig {
    pub n: usize,
    pub seed: u64,
    /// Defaults scale with `synth.patch_size` when left out.
    pub params: Option<GrowthParams>,
    pub crack: CrackParams,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        Self {
            n: 100,
            seed: 0,
            params: None,
            crack: growth_crack_params(),
        }
    }
}

impl RunConfig {
    /// Reads `path` (or starts from defaults), applies `XAISEG_SEED` and
    /// resolves every derived default.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let env = std::env::var(SEED_ENV).ok();
        Self::load_with_seed(path, env.as_deref())
    }

    pub fn load_with_seed(path: Option<&Path>, seed_override: Option<&str>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(io_err(p))?;
                Self::parse(&text).map_err(|source| CliError::ConfigParse {
                    path: p.to_path_buf(),
                    source,
                })?
            }
            None => Self::default(),
        };
        if let Some(s) = seed_override {
            let seed = s
                .trim()
                .parse()
                .map_err(|_| CliError::config(format!("{SEED_ENV}={s:?} is not an unsigned integer")))?;
            cfg.seed = Some(seed);
        }
        cfg.resolve();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    fn resolve(&mut self) {
        if let Some(s) = self.seed {
            self.synth.seed = s;
            self.train.seed = s;
            self.explainer.train.seed = s;
            self.growth.seed = s;
        }
        let size = self.synth.patch_size;
        self.postproc
            .get_or_insert_with(|| PostprocConfig::for_patch_size(size));
        self.growth
            .params
            .get_or_insert_with(|| GrowthParams::for_patch_size(size));
        if self.methods.is_empty() {
            self.methods = Method::standard_set();
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        self.explainer.train.validate()?;
        self.explainer.weights.validate()?;
        self.postproc().validate()?;
        self.growth_params().validate()?;
        if !(self.severity.mm_per_px > 0.0 && self.severity.mm_per_px.is_finite()) {
            return Err(CliError::config("severity.mm_per_px must be positive"));
        }
        Ok(())
    }

    pub fn postproc(&self) -> &PostprocConfig {
        self.postproc.as_ref().expect("resolved")
    }

    pub fn growth_params(&self) -> &GrowthParams {
        self.growth.params.as_ref().expect("resolved")
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Writes the resolved config as `dir/name`.
    pub fn write_to(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(name);
        fs::write(&path, self.to_toml()?).map_err(io_err(&path))?;
        Ok(path)
    }
}

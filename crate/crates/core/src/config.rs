//! Run configuration: model sizes, training schedule, retrieval and
//! ablation switches. Loaded from TOML, validated before any work starts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::Backend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StaticAgg {
    #[default]
    Sum,
    Mean,
}

impl std::str::FromStr for StaticAgg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(StaticAgg::Sum),
            "mean" => Ok(StaticAgg::Mean),
            other => Err(Error::Config(format!("unknown static aggregation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train_corpus: Option<PathBuf>,
    pub valid_corpus: Option<PathBuf>,

    /// Node and hidden size.
    pub d: usize,
    /// Edge-type embedding size.
    pub d_e: usize,
    /// Token embedding size.
    pub d_w: usize,
    /// Node-type embedding size.
    pub d_t: usize,
    pub hops: usize,
    pub dropout: f64,
    pub vocab_cap: usize,
    pub static_agg: StaticAgg,

    pub retrieval: bool,
    pub backend: Backend,
    pub no_static: bool,
    pub no_dynamic: bool,
    pub no_augment: bool,

    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Floor of the teacher-forcing probability.
    pub teacher_min: f64,
    /// Stop once the mean epoch loss falls below this value.
    pub target_loss: Option<f64>,
    /// Abort when more than this fraction of training functions fail to parse.
    pub max_skip_ratio: f64,

    pub beam: usize,
    pub max_decode_len: usize,
    pub length_alpha: f64,

    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train_corpus: None,
            valid_corpus: None,
            d: 64,
            d_e: 16,
            d_w: 64,
            d_t: 16,
            hops: 1,
            dropout: 0.3,
            vocab_cap: 4000,
            static_agg: StaticAgg::Sum,
            retrieval: true,
            backend: Backend::Cosine,
            no_static: false,
            no_dynamic: false,
            no_augment: false,
            lr: 1e-3,
            batch: 8,
            epochs: 50,
            patience: 10,
            teacher_min: 0.7,
            target_loss: None,
            max_skip_ratio: 0.2,
            beam: 5,
            max_decode_len: 30,
            length_alpha: 0.7,
            seed: 42,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Whether retrieved code and summaries feed the model.
    pub fn uses_retrieval(&self) -> bool {
        self.retrieval && !self.no_augment
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.d < 2 || !self.d.is_multiple_of(2) {
            return fail(format!("d must be even and at least 2, got {}", self.d));
        }
        for (name, v) in [("d_e", self.d_e), ("d_w", self.d_w), ("d_t", self.d_t), ("batch", self.batch)] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.epochs == 0 || self.beam == 0 || self.max_decode_len == 0 {
            return fail("epochs, beam and max_decode_len must be positive".into());
        }
        if self.vocab_cap < 5 {
            return fail(format!("vocab_cap must be at least 5, got {}", self.vocab_cap));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..=1.0).contains(&self.teacher_min) || !(0.0..=1.0).contains(&self.max_skip_ratio) {
            return fail("teacher_min and max_skip_ratio must lie in [0, 1]".into());
        }
        if !(self.length_alpha >= 0.0) {
            return fail("length_alpha must be non-negative".into());
        }
        Ok(())
    }

    /// FNV-1a over the canonical JSON form.
    pub fn hash(&self) -> u64 {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
    }
}

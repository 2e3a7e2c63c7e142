use std::path::{Path, PathBuf};

use ckks::{FheParams, SecurityProfile};
use logreg::LrConfig;
use secureboost::SplitConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Schema;
use crate::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub label: String,
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub positive: Option<String>,
    #[serde(default)]
    pub drop: Vec<String>,
}

impl DatasetConfig {
    pub fn schema(&self) -> Schema {
        Schema { label: self.label.clone(), id: self.id.clone(), positive: self.positive.clone(), drop: self.drop.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Horizontal,
    Vertical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Secureboost,
    Lr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub mode: Mode,
    /// Feature names held by the active party (vertical).
    pub a_features: Vec<String>,
    /// Feature names held by the passive party; the remainder when empty.
    pub b_features: Vec<String>,
    /// Without explicit lists: the first `a_count` features go to A.
    pub a_count: Option<usize>,
    /// Horizontal client count.
    pub clients: usize,
    pub test_fraction: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            mode: Mode::Vertical,
            a_features: Vec::new(),
            b_features: Vec::new(),
            a_count: None,
            clients: 3,
            test_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub woe: bool,
    pub bins: usize,
    /// Synthetic minority rows to add; zero disables SMOTE.
    pub smote_synthetic: usize,
    pub smote_k: usize,
    /// Fixed interpolation weight instead of random draws.
    pub smote_lambda: Option<f64>,
    /// Standardized values are clipped to `[-clip, clip]`.
    pub clip: f64,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        Self { woe: false, bins: 10, smote_synthetic: 0, smote_k: 5, smote_lambda: None, clip: 8.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsiSection {
    pub enabled: bool,
    /// Each side pads its id list with random ids up to this many.
    pub pad_to: usize,
}

impl Default for PsiSection {
    fn default() -> Self {
        Self { enabled: true, pad_to: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub repeats: usize,
    pub seed: u64,
    pub profile: SecurityProfile,
    pub out: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { repeats: 1, seed: 0, profile: SecurityProfile::Desk, out: PathBuf::from("out") }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: ModelKind,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub secureboost: SplitConfig,
    #[serde(default)]
    pub lr: LrConfig,
    #[serde(default)]
    pub preprocess: PreprocessSection,
    #[serde(default)]
    pub psi: PsiSection,
    #[serde(default)]
    pub run: RunSection,
}

/// Command-line values that replace config entries.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    /// Experiment TOML file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `desk` or `std128`.
    #[arg(long)]
    pub profile: Option<SecurityProfile>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Config from `--config` (or defaults for breast cancer) with flags
    /// applied on top.
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let mut cfg = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::breast_cancer(),
        };
        if let Some(v) = &o.dataset {
            cfg.dataset.path = v.clone();
        }
        if let Some(v) = o.model {
            cfg.model = v;
        }
        if let Some(v) = o.mode {
            cfg.split.mode = v;
        }
        if let Some(v) = o.repeats {
            cfg.run.repeats = v;
        }
        if let Some(v) = o.seed {
            cfg.run.seed = v;
        }
        if let Some(v) = o.profile {
            cfg.run.profile = v;
        }
        if let Some(v) = &o.out {
            cfg.run.out = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// SecureBoost on breast cancer, features split in half.
    pub fn breast_cancer() -> Self {
        Self {
            dataset: DatasetConfig {
                path: PathBuf::from("breast_cancer.csv"),
                label: "label".into(),
                id: Some("id".into()),
                positive: None,
                drop: Vec::new(),
            },
            model: ModelKind::Secureboost,
            split: SplitSection { a_count: Some(15), ..Default::default() },
            secureboost: SplitConfig::default(),
            lr: LrConfig::default(),
            preprocess: PreprocessSection::default(),
            psi: PsiSection::default(),
            run: RunSection::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.run.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return bad(format!("test fraction {} outside (0, 1)", self.split.test_fraction));
        }
        match self.split.mode {
            Mode::Horizontal => {
                if self.model == ModelKind::Secureboost {
                    return bad("secureboost needs a vertical split".into());
                }
                if self.split.clients == 0 {
                    return bad("horizontal split needs at least one client".into());
                }
                if self.preprocess.woe || self.preprocess.smote_synthetic > 0 {
                    return bad("woe and smote run on vertical splits only".into());
                }
            }
            Mode::Vertical => {
                let overlap: Vec<&String> =
                    self.split.a_features.iter().filter(|f| self.split.b_features.contains(f)).collect();
                if !overlap.is_empty() {
                    return bad(format!("features held by both parties: {overlap:?}"));
                }
            }
        }
        if self.model == ModelKind::Secureboost && self.preprocess.smote_synthetic > 0 {
            return bad("smote leaves passive rows masked, which trees cannot split on".into());
        }
        if self.preprocess.woe && self.preprocess.bins < 2 {
            return bad("woe needs at least 2 bins".into());
        }
        if self.preprocess.clip <= 0.0 {
            return bad("clip must be positive".into());
        }
        self.secureboost.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.lr.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    /// Column indices for A and B. Together they cover every feature once.
    pub fn vertical_columns(&self, names: &[String]) -> Result<(Vec<usize>, Vec<usize>)> {
        let index = |n: &String| {
            names.iter().position(|m| m == n).ok_or_else(|| CliError::Config(format!("no feature named {n:?}")))
        };
        let s = &self.split;
        let a: Vec<usize> = if !s.a_features.is_empty() {
            s.a_features.iter().map(index).collect::<Result<_>>()?
        } else if !s.b_features.is_empty() {
            let b: Vec<usize> = s.b_features.iter().map(index).collect::<Result<_>>()?;
            (0..names.len()).filter(|c| !b.contains(c)).collect()
        } else {
            (0..s.a_count.unwrap_or(names.len() / 2).min(names.len())).collect()
        };
        let b: Vec<usize> = if s.b_features.is_empty() {
            (0..names.len()).filter(|c| !a.contains(c)).collect()
        } else {
            s.b_features.iter().map(index).collect::<Result<_>>()?
        };
        let mut all = [a.clone(), b.clone()].concat();
        all.sort_unstable();
        all.dedup();
        if all.len() != a.len() + b.len() || all.len() != names.len() {
            return Err(CliError::Config("vertical feature lists must be disjoint and cover every feature".into()));
        }
        if a.is_empty() || b.is_empty() {
            return Err(CliError::Config("each party needs at least one feature".into()));
        }
        Ok((a, b))
    }

    pub fn fhe_params(&self) -> FheParams {
        FheParams::for_profile(self.run.profile)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

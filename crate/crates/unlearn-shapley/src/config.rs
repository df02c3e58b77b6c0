//! Experiment configuration: a flat `key = value` file with `[section]`
//! headers. Unknown keys are rejected by name, parse errors carry line
//! numbers, and validation reports every field left at its default.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::baselines::BetaParams;
use crate::data::Granularity;
use crate::error::{Result, ValuationError};
use crate::harness::RemovalDirection;
use crate::model::Activation;
use crate::shapley::ConvergenceCriterion;
use crate::train::TrainConfig;
use crate::unlearn::{UnlearnConfig, UnlearnOptimizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Value,
    EvalNoisy,
    EvalRemoval,
    Partial,
    Audit,
    Bench,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Value => "value",
            Self::EvalNoisy => "eval-noisy",
            Self::EvalRemoval => "eval-removal",
            Self::Partial => "partial",
            Self::Audit => "audit",
            Self::Bench => "bench",
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum DataSource {
    Synthetic {
        num_points: usize,
        num_features: usize,
        num_classes: usize,
        separation: f64,
        test_points: usize,
    },
    Csv {
        path: PathBuf,
        test_path: PathBuf,
        label_column: String,
        num_classes: usize,
    },
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DataConfig {
    pub source: DataSource,
    pub flip_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ModelConfig {
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueMethod {
    Retrain,
    Unlearn,
    Knn,
    Beta,
    Influence,
}

/// Whether the unlearning utility uses gradient-ascent unlearning or the
/// retrain-on-complement oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeFlag {
    Approx,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ShapleyConfig {
    pub method: ValueMethod,
    pub mode: ModeFlag,
    pub granularity: Granularity,
    /// Number of players at subset granularity; ignored at point granularity.
    pub num_players: usize,
    pub criterion: ConvergenceCriterion,
    pub beta: BetaParams,
    pub k: usize,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TaskConfig {
    pub bin_fraction: f64,
    pub removal_fractions: Vec<f64>,
    pub direction: RemovalDirection,
    pub num_subsets: usize,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub unlearn: UnlearnConfig,
    pub shapley: ShapleyConfig,
    pub task: TaskConfig,
}

/// Result of `validate`: which fields were set and which kept defaults.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ValidationReport {
    pub kind: &'static str,
    pub set_fields: Vec<(String, String)>,
    pub defaulted_fields: Vec<(String, String)>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "experiment kind: {}", self.kind)?;
        writeln!(f, "fields set explicitly:")?;
        for (k, v) in &self.set_fields {
            writeln!(f, "  {k} = {v}")?;
        }
        writeln!(f, "fields at default values:")?;
        for (k, v) in &self.defaulted_fields {
            writeln!(f, "  {k} = {v}")?;
        }
        Ok(())
    }
}

struct RawConfig {
    entries: BTreeMap<String, (String, usize)>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or(ValuationError::Parse {
                    line: line_no,
                    message: format!("unterminated section header `{line}`"),
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ValuationError::Parse {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let full_key = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            if entries
                .insert(full_key.clone(), (value.trim().to_string(), line_no))
                .is_some()
            {
                return Err(ValuationError::Parse {
                    line: line_no,
                    message: format!("duplicate key `{full_key}`"),
                });
            }
        }
        Ok(Self { entries })
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.remove(key)
    }

    fn reject_leftovers(&self) -> Result<()> {
        if let Some((key, (_, line))) = self.entries.iter().next() {
            return Err(ValuationError::Parse {
                line: *line,
                message: format!("unknown key `{key}`"),
            });
        }
        Ok(())
    }
}

/// Tracks which keys were set vs defaulted while draining a RawConfig.
struct FieldTracker {
    set: Vec<(String, String)>,
    defaulted: Vec<(String, String)>,
}

impl FieldTracker {
    fn new() -> Self {
        Self { set: Vec::new(), defaulted: Vec::new() }
    }

    fn scalar<T: FromStr + fmt::Display>(
        &mut self,
        raw: &mut RawConfig,
        key: &str,
        default: T,
    ) -> Result<T> {
        match raw.take(key) {
            Some((value, line)) => {
                let parsed = value.parse::<T>().map_err(|_| ValuationError::Parse {
                    line,
                    message: format!("cannot parse `{value}` for key `{key}`"),
                })?;
                self.set.push((key.to_string(), format!("{parsed}")));
                Ok(parsed)
            }
            None => {
                self.defaulted.push((key.to_string(), format!("{default}")));
                Ok(default)
            }
        }
    }

    fn keyword<T: Copy>(
        &mut self,
        raw: &mut RawConfig,
        key: &str,
        choices: &[(&str, T)],
        default: Option<T>,
        default_name: &str,
    ) -> Result<T> {
        match raw.take(key) {
            Some((value, line)) => {
                for &(name, variant) in choices {
                    if value == name {
                        self.set.push((key.to_string(), value));
                        return Ok(variant);
                    }
                }
                let accepted: Vec<&str> = choices.iter().map(|&(n, _)| n).collect();
                Err(ValuationError::Parse {
                    line,
                    message: format!(
                        "invalid value `{value}` for key `{key}`; accepted: {}",
                        accepted.join(" | ")
                    ),
                })
            }
            None => match default {
                Some(d) => {
                    self.defaulted.push((key.to_string(), default_name.to_string()));
                    Ok(d)
                }
                None => Err(ValuationError::Parse {
                    line: 0,
                    message: format!("missing required key `{key}`"),
                }),
            },
        }
    }

    fn list<T: FromStr + fmt::Display>(
        &mut self,
        raw: &mut RawConfig,
        key: &str,
        default: Vec<T>,
    ) -> Result<Vec<T>> {
        match raw.take(key) {
            Some((value, line)) => {
                let mut out = Vec::new();
                for piece in value.split(',') {
                    let piece = piece.trim();
                    if piece.is_empty() {
                        continue;
                    }
                    out.push(piece.parse::<T>().map_err(|_| ValuationError::Parse {
                        line,
                        message: format!("cannot parse element `{piece}` for key `{key}`"),
                    })?);
                }
                self.set.push((key.to_string(), value));
                Ok(out)
            }
            None => {
                let shown: Vec<String> = default.iter().map(|v| format!("{v}")).collect();
                self.defaulted.push((key.to_string(), shown.join(",")));
                Ok(default)
            }
        }
    }
}

fn default_removal_fractions() -> Vec<f64> {
    (0..20).map(|i| i as f64 / 20.0).collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(Self::parse_with_report(text)?.0)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse_with_report(text: &str) -> Result<(Self, ValidationReport)> {
        let mut raw = RawConfig::parse(text)?;
        let mut t = FieldTracker::new();

        let kind = t.keyword(
            &mut raw,
            "experiment.kind",
            &[
                ("value", ExperimentKind::Value),
                ("eval-noisy", ExperimentKind::EvalNoisy),
                ("eval-removal", ExperimentKind::EvalRemoval),
                ("partial", ExperimentKind::Partial),
                ("audit", ExperimentKind::Audit),
                ("bench", ExperimentKind::Bench),
            ],
            None,
            "",
        )?;
        let seed = t.scalar(&mut raw, "experiment.seed", 0u64)?;
        let out_dir = PathBuf::from(t.scalar(&mut raw, "experiment.out_dir", "out".to_string())?);

        let source_kind =
            t.keyword(&mut raw, "data.source", &[("synthetic", 0), ("csv", 1)], Some(0), "synthetic")?;
        let num_classes = t.scalar(&mut raw, "data.num_classes", 2usize)?;
        let source = if source_kind == 0 {
            DataSource::Synthetic {
                num_points: t.scalar(&mut raw, "data.num_points", 200usize)?,
                num_features: t.scalar(&mut raw, "data.num_features", 10usize)?,
                num_classes,
                separation: t.scalar(&mut raw, "data.separation", 3.0f64)?,
                test_points: t.scalar(&mut raw, "data.test_points", 100usize)?,
            }
        } else {
            let path = t.scalar(&mut raw, "data.csv_path", String::new())?;
            let test_path = t.scalar(&mut raw, "data.test_csv_path", String::new())?;
            if path.is_empty() || test_path.is_empty() {
                return Err(ValuationError::Parse {
                    line: 0,
                    message: "csv source requires `data.csv_path` and `data.test_csv_path`".into(),
                });
            }
            DataSource::Csv {
                path: PathBuf::from(path),
                test_path: PathBuf::from(test_path),
                label_column: t.scalar(&mut raw, "data.label_column", "label".to_string())?,
                num_classes,
            }
        };
        let data = DataConfig {
            source,
            flip_fraction: t.scalar(&mut raw, "data.flip_fraction", 0.0f64)?,
        };

        let model = ModelConfig {
            hidden_dims: t.list(&mut raw, "model.hidden_dims", Vec::<usize>::new())?,
            activation: t.keyword(
                &mut raw,
                "model.activation",
                &[("relu", Activation::Relu), ("tanh", Activation::Tanh)],
                Some(Activation::Relu),
                "relu",
            )?,
        };

        let td = TrainConfig::default();
        let train = TrainConfig {
            epochs: t.scalar(&mut raw, "train.epochs", td.epochs)?,
            batch_size: t.scalar(&mut raw, "train.batch_size", td.batch_size)?,
            learning_rate: t.scalar(&mut raw, "train.learning_rate", td.learning_rate)?,
            beta1: t.scalar(&mut raw, "train.beta1", td.beta1)?,
            beta2: t.scalar(&mut raw, "train.beta2", td.beta2)?,
            eps: t.scalar(&mut raw, "train.eps", td.eps)?,
            weight_decay: t.scalar(&mut raw, "train.weight_decay", td.weight_decay)?,
            seed: 0, // derived from the master seed at run time
        };

        let ud = UnlearnConfig::default();
        let unlearn = UnlearnConfig {
            steps: t.scalar(&mut raw, "unlearn.steps", ud.steps)?,
            batch_size: t.scalar(&mut raw, "unlearn.batch_size", ud.batch_size)?,
            learning_rate: t.scalar(&mut raw, "unlearn.learning_rate", ud.learning_rate)?,
            lambda1: t.scalar(&mut raw, "unlearn.lambda1", ud.lambda1)?,
            lambda2: t.scalar(&mut raw, "unlearn.lambda2", ud.lambda2)?,
            optimizer: t.keyword(
                &mut raw,
                "unlearn.optimizer",
                &[("sgd", UnlearnOptimizer::Sgd), ("adamw", UnlearnOptimizer::AdamW)],
                Some(UnlearnOptimizer::Sgd),
                "sgd",
            )?,
            seed: 0, // derived from the master seed at run time
        };

        let granularity = t.keyword(
            &mut raw,
            "shapley.granularity",
            &[("point", Granularity::Point), ("subset", Granularity::Subset)],
            Some(Granularity::Point),
            "point",
        )?;
        // permutation budget defaults differ by granularity
        let default_perms = match granularity {
            Granularity::Point => 1000,
            Granularity::Subset => 10,
        };
        let cd = ConvergenceCriterion::default();
        let shapley = ShapleyConfig {
            method: t.keyword(
                &mut raw,
                "shapley.method",
                &[
                    ("retrain", ValueMethod::Retrain),
                    ("unlearn", ValueMethod::Unlearn),
                    ("knn", ValueMethod::Knn),
                    ("beta", ValueMethod::Beta),
                    ("influence", ValueMethod::Influence),
                ],
                Some(ValueMethod::Unlearn),
                "unlearn",
            )?,
            mode: t.keyword(
                &mut raw,
                "shapley.mode",
                &[("approx", ModeFlag::Approx), ("oracle", ModeFlag::Oracle)],
                Some(ModeFlag::Approx),
                "approx",
            )?,
            granularity,
            num_players: t.scalar(&mut raw, "shapley.num_players", 10usize)?,
            criterion: ConvergenceCriterion {
                max_permutations: t.scalar(&mut raw, "shapley.max_permutations", default_perms)?,
                window: t.scalar(&mut raw, "shapley.window", cd.window)?,
                mean_abs_change_threshold: t.scalar(
                    &mut raw,
                    "shapley.threshold",
                    cd.mean_abs_change_threshold,
                )?,
                relative: t.scalar(&mut raw, "shapley.relative", cd.relative)?,
            },
            beta: BetaParams::new(
                t.scalar(&mut raw, "shapley.alpha", 16.0f64)?,
                t.scalar(&mut raw, "shapley.beta", 1.0f64)?,
            )?,
            k: t.scalar(&mut raw, "shapley.k", 5usize)?,
            exact: t.scalar(&mut raw, "shapley.exact", false)?,
        };

        let task = TaskConfig {
            bin_fraction: t.scalar(&mut raw, "task.bin_fraction", 0.05f64)?,
            removal_fractions: t.list(
                &mut raw,
                "task.removal_fractions",
                default_removal_fractions(),
            )?,
            direction: t.keyword(
                &mut raw,
                "task.direction",
                &[
                    ("highest", RemovalDirection::HighestFirst),
                    ("lowest", RemovalDirection::LowestFirst),
                ],
                Some(RemovalDirection::HighestFirst),
                "highest",
            )?,
            num_subsets: t.scalar(&mut raw, "task.num_subsets", 10usize)?,
            repeats: t.scalar(&mut raw, "task.repeats", 3usize)?,
        };

        raw.reject_leftovers()?;

        let config =
            Self { kind, seed, out_dir, data, model, train, unlearn, shapley, task };
        config.check_invariants()?;
        let report = ValidationReport {
            kind: config.kind.as_str(),
            set_fields: t.set,
            defaulted_fields: t.defaulted,
        };
        Ok((config, report))
    }

    pub fn check_invariants(&self) -> Result<()> {
        self.train.validate().map_err(|e| named("train", e))?;
        self.unlearn.validate().map_err(|e| named("unlearn", e))?;
        self.shapley.criterion.validate().map_err(|e| named("shapley", e))?;
        if let DataSource::Synthetic { num_points, num_features, num_classes, separation, test_points } =
            &self.data.source
        {
            if *num_points == 0 || *test_points == 0 {
                return Err(ValuationError::Invalid(
                    "data.num_points and data.test_points must be >= 1".into(),
                ));
            }
            if *num_features == 0 || *num_classes < 2 {
                return Err(ValuationError::Invalid(
                    "data.num_features must be >= 1 and data.num_classes >= 2".into(),
                ));
            }
            if !separation.is_finite() || *separation < 0.0 {
                return Err(ValuationError::Invalid("data.separation must be >= 0".into()));
            }
        }
        if !(0.0..=0.5).contains(&self.data.flip_fraction) {
            return Err(ValuationError::Invalid(
                "data.flip_fraction must lie in [0, 0.5]".into(),
            ));
        }
        if !(0.0 < self.task.bin_fraction && self.task.bin_fraction <= 1.0) {
            return Err(ValuationError::Invalid(
                "task.bin_fraction must lie in (0, 1]".into(),
            ));
        }
        if self.task.removal_fractions.iter().any(|f| !(0.0..=0.95).contains(f)) {
            return Err(ValuationError::Invalid(
                "task.removal_fractions must lie in [0, 0.95]".into(),
            ));
        }
        if self.task.num_subsets == 0 || self.shapley.num_players == 0 {
            return Err(ValuationError::Invalid(
                "task.num_subsets and shapley.num_players must be >= 1".into(),
            ));
        }
        if self.task.repeats == 0 {
            return Err(ValuationError::Invalid("task.repeats must be >= 1".into()));
        }
        if self.shapley.k == 0 {
            return Err(ValuationError::Invalid("shapley.k must be >= 1".into()));
        }
        Ok(())
    }
}

fn named(section: &str, e: ValuationError) -> ValuationError {
    match e {
        ValuationError::Invalid(msg) => ValuationError::Invalid(format!("{section}.{msg}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[experiment]\nkind = value\n";

    #[test]
    fn minimal_config_takes_defaults() {
        let (cfg, report) = ExperimentConfig::parse_with_report(MINIMAL).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::Value);
        assert_eq!(cfg.train.epochs, 10);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.train.learning_rate, 3e-4);
        assert_eq!(cfg.train.weight_decay, 0.01);
        assert_eq!(cfg.unlearn.steps, 100);
        assert_eq!(cfg.unlearn.learning_rate, 2e-5);
        assert_eq!(cfg.shapley.criterion.max_permutations, 1000);
        let rendered = report.to_string();
        assert!(rendered.contains("unlearn.lambda1 = 1"));
        assert!(rendered.contains("unlearn.lambda2 = 1"));
    }

    #[test]
    fn subset_granularity_changes_permutation_default() {
        let text = "[experiment]\nkind = value\n[shapley]\ngranularity = subset\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.shapley.criterion.max_permutations, 10);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = "[experiment]\nkind = value\nbogus = 3\n";
        let err = ExperimentConfig::parse(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("experiment.bogus"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn bad_keyword_lists_accepted_values() {
        let text = "[experiment]\nkind = frobnicate\n";
        let msg = ExperimentConfig::parse(text).unwrap_err().to_string();
        assert!(msg.contains("eval-noisy"), "{msg}");
    }

    #[test]
    fn negative_learning_rate_names_the_constraint() {
        let text = "[experiment]\nkind = value\n[train]\nlearning_rate = -0.1\n";
        let msg = ExperimentConfig::parse(text).unwrap_err().to_string();
        assert!(msg.contains("learning_rate"), "{msg}");
    }

    #[test]
    fn parse_error_carries_line_number() {
        let text = "[experiment]\nkind = value\n[train]\nepochs ten\n";
        match ExperimentConfig::parse(text).unwrap_err() {
            ValuationError::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn duplicate_key_rejected() {
        let text = "[experiment]\nkind = value\nseed = 1\nseed = 2\n";
        assert!(ExperimentConfig::parse(text).is_err());
    }

    #[test]
    fn explicit_values_round_trip() {
        let text = "\
[experiment]
kind = eval-noisy
seed = 42
out_dir = results

[data]
num_points = 500
flip_fraction = 0.2

[model]
hidden_dims = 16, 8
activation = tanh

[unlearn]
optimizer = adamw
lambda1 = 0.5

[shapley]
method = retrain
max_permutations = 77

[task]
bin_fraction = 0.1
removal_fractions = 0, 0.25, 0.5
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::EvalNoisy);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.model.hidden_dims, vec![16, 8]);
        assert_eq!(cfg.model.activation, Activation::Tanh);
        assert_eq!(cfg.unlearn.optimizer, UnlearnOptimizer::AdamW);
        assert_eq!(cfg.unlearn.lambda1, 0.5);
        assert_eq!(cfg.shapley.method, ValueMethod::Retrain);
        assert_eq!(cfg.shapley.criterion.max_permutations, 77);
        assert_eq!(cfg.task.removal_fractions, vec![0.0, 0.25, 0.5]);
        match cfg.data.source {
            DataSource::Synthetic { num_points, .. } => assert_eq!(num_points, 500),
            _ => panic!("expected synthetic source"),
        }
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let text = "# top comment\n\n[experiment]\n# mid comment\nkind = bench\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::Bench);
    }

    #[test]
    fn missing_kind_is_an_error() {
        assert!(ExperimentConfig::parse("[experiment]\nseed = 1\n").is_err());
    }
}

//! TOML run configuration.
//!
//! String values may reference environment variables as `${NAME}`; `$$`
//! escapes a literal dollar sign. Relative paths are resolved against the
//! directory holding the configuration file.
//!
//! ```toml
//! output_dir = "out"
//!
//! [dataset]
//! labels = ["Medical problem", "Treatment", "Test"]
//! unlabeled = "train.jsonl"
//! test = "test.jsonl"
//!
//! [discriminator]
//! K = 12
//! k = 3
//!
//! [backends.annotator]
//! kind = "http_openai_compatible"
//! base_url = "${OPENAI_BASE_URL}"
//! model = "gpt-3.5-turbo"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use oema_core::corpus::LabelSet;
use oema_core::prompt::{PromptForge, PromptTemplate, TemplateKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AnnotatorConfig, DiscriminatorConfig, PredictorConfig};
use crate::gateway::{BackendConfig, BackendKind};

/// Embedding model used when the embedder role is not configured.
pub const DEFAULT_EMBED_MODEL: &str = "text-embedding-ada-002";

/// Configuration problems.
#[derive(Debug, Error)]
pub enum ConfigError {
    /// The file could not be read.
    #[error("{}: {source}", path.display())]
    Io {
        /// File involved.
        path: PathBuf,
        /// Cause.
        #[source]
        source: std::io::Error,
    },
    /// The TOML does not parse or does not fit the schema.
    #[error("{}: {message}", path.display())]
    Parse {
        /// File involved.
        path: PathBuf,
        /// Parser message.
        message: String,
    },
    /// An interpolated environment variable is not set.
    #[error("environment variable {0} is not set")]
    MissingEnv(String),
    /// A value is out of range or inconsistent.
    #[error("{0}")]
    Invalid(String),
}

/// Pipeline role that talks to a backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    /// Self-annotation.
    Annotator,
    /// Ontology extraction and scoring.
    Discriminator,
    /// Final prediction.
    Predictor,
    /// Sentence embeddings.
    Embedder,
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "annotator" => Ok(Role::Annotator),
            "discriminator" => Ok(Role::Discriminator),
            "predictor" => Ok(Role::Predictor),
            "embedder" => Ok(Role::Embedder),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

/// Dataset files and label set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Label set name; defaults to `preset` or `dataset`.
    #[serde(default)]
    pub name: Option<String>,
    /// Built-in label set, `mtsamples` or `vaers`, used when `labels` is empty.
    #[serde(default)]
    pub preset: Option<String>,
    /// Entity types in tie-break order.
    #[serde(default)]
    pub labels: Vec<String>,
    /// Label → description for the prediction prompt.
    #[serde(default)]
    pub descriptions: BTreeMap<String, String>,
    /// Unlabeled sentences for self-annotation.
    pub unlabeled: PathBuf,
    /// Gold-annotated test sentences.
    pub test: PathBuf,
}

impl DatasetConfig {
    /// Builds the label set.
    pub fn label_set(&self) -> Result<LabelSet, ConfigError> {
        let base = match (self.labels.is_empty(), self.preset.as_deref()) {
            (false, _) => LabelSet::from_labels(self.name.clone().unwrap_or_else(|| "dataset".into()), self.labels.clone())
                .map_err(|e| ConfigError::Invalid(e.to_string()))?,
            (true, Some("mtsamples")) => LabelSet::mtsamples(),
            (true, Some("vaers")) => LabelSet::vaers(),
            (true, Some(other)) => return Err(ConfigError::Invalid(format!("unknown label set preset `{other}`"))),
            (true, None) => return Err(ConfigError::Invalid("dataset needs `labels` or `preset`".into())),
        };
        base.with_descriptions(self.descriptions.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

/// Backends per role. Unset roles fall back to the annotator backend; the
/// embedder fallback uses [`DEFAULT_EMBED_MODEL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsConfig {
    /// Self-annotation backend.
    pub annotator: BackendConfig,
    /// Discriminator backend.
    #[serde(default)]
    pub discriminator: Option<BackendConfig>,
    /// Predictor backend.
    #[serde(default)]
    pub predictor: Option<BackendConfig>,
    /// Embedding backend.
    #[serde(default)]
    pub embedder: Option<BackendConfig>,
}

impl BackendsConfig {
    /// Effective configuration of `role`.
    pub fn for_role(&self, role: Role) -> BackendConfig {
        let fallback = || self.annotator.clone();
        match role {
            Role::Annotator => self.annotator.clone(),
            Role::Discriminator => self.discriminator.clone().unwrap_or_else(fallback),
            Role::Predictor => self.predictor.clone().unwrap_or_else(fallback),
            Role::Embedder => self.embedder.clone().unwrap_or_else(|| BackendConfig {
                model: DEFAULT_EMBED_MODEL.into(),
                ..self.annotator.clone()
            }),
        }
    }

    /// Replaces the kind of `role`, materializing the fallback first.
    pub fn set_kind(&mut self, role: Role, kind: BackendKind) {
        let mut cfg = self.for_role(role);
        cfg.kind = kind;
        match role {
            Role::Annotator => self.annotator = cfg,
            Role::Discriminator => self.discriminator = Some(cfg),
            Role::Predictor => self.predictor = Some(cfg),
            Role::Embedder => self.embedder = Some(cfg),
        }
    }
}

/// A fixed ontology demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OntologyExemplar {
    /// Demonstration text.
    pub text: String,
    /// Its answer object.
    pub answer: String,
}

/// Prompt overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptsConfig {
    /// Template file for self-annotation.
    #[serde(default)]
    pub self_annotation: Option<PathBuf>,
    /// Template file for ontology extraction.
    #[serde(default)]
    pub ontology_extraction: Option<PathBuf>,
    /// Template file for helpfulness scoring.
    #[serde(default)]
    pub example_scoring: Option<PathBuf>,
    /// Template file for final prediction.
    #[serde(default)]
    pub final_prediction: Option<PathBuf>,
    /// Top-level ontology categories offered to the extractor.
    #[serde(default)]
    pub categories: Option<Vec<String>>,
    /// Extra ontology demonstrations.
    #[serde(default)]
    pub ontology_exemplars: Vec<OntologyExemplar>,
}

fn default_k_grid() -> Vec<usize> {
    vec![1, 2, 3, 4, 5]
}
fn default_big_k_grid() -> Vec<usize> {
    vec![6, 8, 10, 12, 15]
}
fn default_fixed_big_k() -> usize {
    12
}
fn default_fixed_k() -> usize {
    3
}

/// Hyperparameter sweep grids: `k_grid` at `K = fixed_K`, then `K_grid` at
/// `k = fixed_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Values of k.
    #[serde(default = "default_k_grid")]
    pub k_grid: Vec<usize>,
    /// Values of K.
    #[serde(rename = "K_grid", default = "default_big_k_grid")]
    pub big_k_grid: Vec<usize>,
    /// K used with `k_grid`.
    #[serde(rename = "fixed_K", default = "default_fixed_big_k")]
    pub fixed_big_k: usize,
    /// k used with `K_grid`.
    #[serde(default = "default_fixed_k")]
    pub fixed_k: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            k_grid: default_k_grid(),
            big_k_grid: default_big_k_grid(),
            fixed_big_k: default_fixed_big_k(),
            fixed_k: default_fixed_k(),
        }
    }
}

impl SweepConfig {
    /// (K, k) cells in run order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        let left = self.k_grid.iter().map(|&k| (self.fixed_big_k, k));
        let right = self.big_k_grid.iter().map(|&big| (big, self.fixed_k));
        left.chain(right).collect()
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Everything a run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Reserved for randomized stages; every current stage is deterministic.
    #[serde(default)]
    pub seed: u64,
    /// Root of corpus/, index/, traces/ and reports/.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Dataset.
    pub dataset: DatasetConfig,
    /// Self-annotator settings.
    #[serde(default)]
    pub annotator: AnnotatorConfig,
    /// Discriminator settings.
    #[serde(default)]
    pub discriminator: DiscriminatorConfig,
    /// Predictor settings.
    #[serde(default)]
    pub predictor: PredictorConfig,
    /// Backends per role.
    pub backends: BackendsConfig,
    /// Prompt overrides.
    #[serde(default)]
    pub prompts: PromptsConfig,
    /// Sweep grids.
    #[serde(default)]
    pub sweep: SweepConfig,
}

/// Replaces `${NAME}` with the value of `lookup(NAME)`; `$$` yields `$`.
pub fn interpolate(s: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<String, ConfigError> {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('$') {
        out.push_str(&rest[..i]);
        let tail = &rest[i + 1..];
        if let Some(t) = tail.strip_prefix('$') {
            out.push('$');
            rest = t;
        } else if let Some(body) = tail.strip_prefix('{') {
            let end = body
                .find('}')
                .ok_or_else(|| ConfigError::Invalid(format!("unterminated ${{ in {s:?}")))?;
            let name = &body[..end];
            out.push_str(&lookup(name).ok_or_else(|| ConfigError::MissingEnv(name.to_string()))?);
            rest = &body[end + 1..];
        } else {
            out.push('$');
            rest = tail;
        }
    }
    out.push_str(rest);
    Ok(out)
}

fn interpolate_value(v: &mut toml::Value, lookup: &dyn Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
    match v {
        toml::Value::String(s) => *s = interpolate(s, lookup)?,
        toml::Value::Array(items) => {
            for item in items {
                interpolate_value(item, lookup)?;
            }
        }
        toml::Value::Table(table) => {
            for (_, item) in table.iter_mut() {
                interpolate_value(item, lookup)?;
            }
        }
        _ => {}
    }
    Ok(())
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Parses TOML text; relative paths resolve against `base_dir`.
    pub fn from_toml_str(
        text: &str,
        base_dir: &Path,
        lookup: &dyn Fn(&str) -> Option<String>,
        origin: &Path,
    ) -> Result<Self, ConfigError> {
        let parse_err = |message: String| ConfigError::Parse { path: origin.to_path_buf(), message };
        let mut value: toml::Value = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        interpolate_value(&mut value, lookup)?;
        let mut config: RunConfig = value.try_into().map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
        config.resolve_paths(base_dir);
        config.validate()?;
        Ok(config)
    }

    /// Reads and parses a configuration file, interpolating from the process
    /// environment.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base, &|name| std::env::var(name).ok(), path)
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.output_dir);
        resolve(base, &mut self.dataset.unlabeled);
        resolve(base, &mut self.dataset.test);
        let backends = [
            Some(&mut self.backends.annotator),
            self.backends.discriminator.as_mut(),
            self.backends.predictor.as_mut(),
            self.backends.embedder.as_mut(),
        ];
        for b in backends.into_iter().flatten() {
            if let Some(p) = b.cache_dir.as_mut() {
                resolve(base, p);
            }
            if let Some(p) = b.fixtures.as_mut() {
                resolve(base, p);
            }
        }
        let prompts = &mut self.prompts;
        for p in [
            &mut prompts.self_annotation,
            &mut prompts.ontology_extraction,
            &mut prompts.example_scoring,
            &mut prompts.final_prediction,
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, p);
        }
    }

    /// Cross-field checks.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.dataset.label_set()?;
        let invalid = |e: crate::agents::AgentError| ConfigError::Invalid(e.to_string());
        self.annotator.validate().map_err(invalid)?;
        self.discriminator.validate().map_err(invalid)?;
        self.predictor.validate().map_err(invalid)?;
        for role in [Role::Annotator, Role::Discriminator, Role::Predictor, Role::Embedder] {
            self.backends
                .for_role(role)
                .validate()
                .map_err(|e| ConfigError::Invalid(format!("{role:?} backend: {e}")))?;
        }
        Ok(())
    }

    /// Prompt forge with the configured overrides.
    pub fn prompt_forge(&self) -> Result<PromptForge, ConfigError> {
        let mut forge = PromptForge::default();
        let files = [
            (TemplateKind::SelfAnnotation, &self.prompts.self_annotation),
            (TemplateKind::OntologyExtraction, &self.prompts.ontology_extraction),
            (TemplateKind::ExampleScoring, &self.prompts.example_scoring),
            (TemplateKind::FinalPrediction, &self.prompts.final_prediction),
        ];
        for (kind, path) in files {
            let Some(path) = path else { continue };
            let body = std::fs::read_to_string(path)
                .map_err(|source| ConfigError::Io { path: path.clone(), source })?;
            let template = PromptTemplate::new(kind, body)
                .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
            forge = forge.with_template(template);
        }
        if let Some(categories) = &self.prompts.categories {
            forge = forge.with_categories(categories.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        let exemplars = self.prompts.ontology_exemplars.iter().map(|e| (e.text.clone(), e.answer.clone())).collect();
        Ok(forge.with_ontology_exemplars(exemplars))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(name: &str) -> Option<String> {
        match name {
            "BASE" => Some("http://localhost:9".into()),
            "KEY" => Some("OEMA_KEY".into()),
            _ => None,
        }
    }

    const MINIMAL: &str = r#"
output_dir = "runs/a"

[dataset]
preset = "mtsamples"
unlabeled = "data/train.jsonl"
test = "/abs/test.jsonl"

[discriminator]
K = 8
k = 2

[backends.annotator]
kind = "http_openai_compatible"
base_url = "${BASE}/v1"
api_key_env = "${KEY}"
cache_dir = "cache"
"#;

    #[test]
    fn parses_interpolates_and_resolves() {
        let c = RunConfig::from_toml_str(MINIMAL, Path::new("/etc/oema"), &env, Path::new("run.toml")).unwrap();
        assert_eq!(c.output_dir, Path::new("/etc/oema/runs/a"));
        assert_eq!(c.dataset.unlabeled, Path::new("/etc/oema/data/train.jsonl"));
        assert_eq!(c.dataset.test, Path::new("/abs/test.jsonl"));
        assert_eq!(c.backends.annotator.base_url.as_deref(), Some("http://localhost:9/v1"));
        assert_eq!(c.backends.annotator.api_key_env, "OEMA_KEY");
        assert_eq!(c.backends.annotator.cache_dir.as_deref(), Some(Path::new("/etc/oema/cache")));
        assert_eq!((c.discriminator.retrieve, c.discriminator.select), (8, 2));
        assert_eq!(c.annotator, AnnotatorConfig::default());
        assert_eq!(c.backends.for_role(Role::Embedder).model, DEFAULT_EMBED_MODEL);
        assert_eq!(c.backends.for_role(Role::Predictor), c.backends.annotator);
        assert_eq!(c.sweep.cells().len(), 10);
    }

    #[test]
    fn missing_variable_is_reported() {
        let text = MINIMAL.replace("${BASE}", "${NOPE}");
        let err = RunConfig::from_toml_str(&text, Path::new("."), &env, Path::new("run.toml")).unwrap_err();
        assert!(matches!(err, ConfigError::MissingEnv(ref v) if v == "NOPE"));
    }

    #[test]
    fn k_above_big_k_is_rejected() {
        let text = MINIMAL.replace("k = 2", "k = 9");
        let err = RunConfig::from_toml_str(&text, Path::new("."), &env, Path::new("run.toml")).unwrap_err();
        assert!(err.to_string().contains("exceeds"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("k = 2", "k = 2\ntopk = 3");
        assert!(RunConfig::from_toml_str(&text, Path::new("."), &env, Path::new("run.toml")).is_err());
    }

    #[test]
    fn interpolation_escapes() {
        assert_eq!(interpolate("a$$b ${BASE} $x", &env).unwrap(), "a$b http://localhost:9 $x");
        assert!(interpolate("${BASE", &env).is_err());
    }
}

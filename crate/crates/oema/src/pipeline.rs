//! Stage orchestration and the output directory layout.
//!
//! ```text
//! <output_dir>/
//!   corpus/self_annotated.jsonl   corpus/predictions.jsonl
//!   index/embeddings.jsonl
//!   traces/annotate.jsonl         traces/predict.jsonl
//!   reports/eval_<regime>.{json,txt}   reports/sweep.csv
//!   sweep/K<K>_k<k>/{corpus,traces,reports}/
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use oema_core::corpus::{Corpus, LabelSet};
use oema_core::eval::{evaluate, EvalError, EvalReport, Regime};
use oema_core::prompt::PromptForge;
use oema_core::retrieval::VectorIndex;
use serde::Serialize;
use thiserror::Error;

use crate::agents::discriminator::check_alignment;
use crate::agents::{
    build_index, build_self_annotated_corpus, discriminate, par_map, predict, AgentError, DiscriminatorConfig,
    PredictionTrace, PredictorConfig, SelectionTrace,
};
use crate::config::{ConfigError, Role, RunConfig};
use crate::corpus_io::{load_corpus, load_index, push_json_line, save_corpus, save_index, write_atomic, IoError};
use crate::gateway::{BackendConfig, Gateway, GatewayError, Gateways};
use crate::report;

/// Pipeline failures, grouped by exit code.
#[derive(Debug, Error)]
pub enum PipelineError {
    /// Configuration problem.
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// File read/write or format problem.
    #[error(transparent)]
    Io(#[from] IoError),
    /// Backend construction failed.
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    /// An agent failed.
    #[error(transparent)]
    Agent(#[from] AgentError),
    /// Gold and predictions do not cover the same sentences.
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl PipelineError {
    /// Process exit code: 3 configuration, 4 files, 5 backend, 6 evaluation.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 3,
            PipelineError::Agent(AgentError::Config(_)) => 3,
            PipelineError::Io(_) => 4,
            PipelineError::Agent(AgentError::Misaligned(_)) => 4,
            PipelineError::Gateway(GatewayError::Config(_)) => 3,
            PipelineError::Gateway(_) | PipelineError::Agent(_) => 5,
            PipelineError::Eval(_) => 6,
        }
    }
}

/// Paths under one output root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    /// Layout rooted at `root`.
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// Root directory.
    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Corpora.
    pub fn corpus_dir(&self) -> PathBuf {
        self.root.join("corpus")
    }

    /// Vector index sidecars.
    pub fn index_dir(&self) -> PathBuf {
        self.root.join("index")
    }

    /// Run logs.
    pub fn traces_dir(&self) -> PathBuf {
        self.root.join("traces")
    }

    /// Evaluation reports.
    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    /// Self-annotated corpus.
    pub fn self_annotated(&self) -> PathBuf {
        self.corpus_dir().join("self_annotated.jsonl")
    }

    /// Predictions corpus.
    pub fn predictions(&self) -> PathBuf {
        self.corpus_dir().join("predictions.jsonl")
    }

    /// Index sidecar.
    pub fn index(&self) -> PathBuf {
        self.index_dir().join("embeddings.jsonl")
    }

    /// Directory of one sweep cell.
    pub fn sweep_cell(&self, big_k: usize, k: usize) -> Layout {
        Layout::new(self.root.join("sweep").join(format!("K{big_k}_k{k}")))
    }

    /// Creates the four subdirectories.
    pub fn create(&self) -> Result<(), IoError> {
        for dir in [self.corpus_dir(), self.index_dir(), self.traces_dir(), self.reports_dir()] {
            fs::create_dir_all(&dir).map_err(|source| IoError::Io { path: dir, source })?;
        }
        Ok(())
    }
}

/// Builds one gateway per distinct backend configuration.
pub fn gateways_from_config(config: &RunConfig) -> Result<Gateways, GatewayError> {
    let mut built: Vec<(BackendConfig, Arc<Gateway>)> = Vec::new();
    let mut get = |role: Role| -> Result<Arc<Gateway>, GatewayError> {
        let cfg = config.backends.for_role(role);
        if let Some((_, g)) = built.iter().find(|(c, _)| *c == cfg) {
            return Ok(g.clone());
        }
        let g = Arc::new(Gateway::from_config(&cfg)?);
        built.push((cfg, g.clone()));
        Ok(g)
    };
    Ok(Gateways {
        annotator: get(Role::Annotator)?,
        discriminator: get(Role::Discriminator)?,
        predictor: get(Role::Predictor)?,
        embedder: get(Role::Embedder)?,
    })
}

/// A configured run: settings, label set, prompts and gateways.
#[derive(Debug)]
pub struct Pipeline {
    config: RunConfig,
    label_set: LabelSet,
    forge: PromptForge,
    gateways: Gateways,
    layout: Layout,
}

/// One line of `traces/predict.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetTrace {
    /// Target sentence id.
    pub id: String,
    /// Example selection; absent when examples are disabled.
    pub selection: Option<SelectionTrace>,
    /// Final prediction.
    pub prediction: PredictionTrace,
}

/// One row of the sweep table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    /// Candidates retrieved.
    #[serde(rename = "K")]
    pub big_k: usize,
    /// Examples kept.
    pub k: usize,
    /// Exact micro F1.
    pub exact_f1: f64,
    /// Relaxed micro F1.
    pub relaxed_f1: f64,
}

impl Pipeline {
    /// Builds gateways from the configuration.
    pub fn new(config: RunConfig) -> Result<Self, PipelineError> {
        let gateways = gateways_from_config(&config)?;
        Self::with_gateways(config, gateways)
    }

    /// Uses the given gateways instead of the configured backends.
    pub fn with_gateways(config: RunConfig, gateways: Gateways) -> Result<Self, PipelineError> {
        config.validate()?;
        for path in [&config.dataset.unlabeled, &config.dataset.test] {
            if !path.is_file() {
                return Err(ConfigError::Invalid(format!("corpus {} does not exist", path.display())).into());
            }
        }
        let label_set = config.dataset.label_set()?;
        let forge = config.prompt_forge()?;
        let layout = Layout::new(config.output_dir.clone());
        Ok(Self { config, label_set, forge, gateways, layout })
    }

    /// Settings.
    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Active label set.
    pub fn label_set(&self) -> &LabelSet {
        &self.label_set
    }

    /// Gateways.
    pub fn gateways(&self) -> &Gateways {
        &self.gateways
    }

    /// Output layout.
    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    fn load(&self, path: &Path) -> Result<Corpus, PipelineError> {
        Ok(load_corpus(path, &self.label_set)?)
    }

    /// Self-annotated corpus from disk, or annotated now when missing.
    pub fn self_annotated(&self) -> Result<Corpus, PipelineError> {
        let path = self.layout.self_annotated();
        if path.exists() {
            return self.load(&path);
        }
        cmd_annotate(self)
    }

    /// Index from disk when it matches the corpus and embedding model, else
    /// rebuilt and saved.
    pub fn index_for(&self, corpus: &Corpus) -> Result<VectorIndex, PipelineError> {
        let path = self.layout.index();
        if path.exists() {
            let index = load_index(&path, self.gateways.embedder.model())?;
            if index.model() == self.gateways.embedder.model() && check_alignment(corpus, &index).is_ok() {
                return Ok(index);
            }
            log::info!("{} is stale, rebuilding", path.display());
        }
        self.layout.create()?;
        let index = build_index(corpus, &self.gateways.embedder)?;
        save_index(&index, &path)?;
        Ok(index)
    }

    /// Runs selection and prediction for every test sentence with the given
    /// settings and writes predictions and traces under `out`.
    pub fn predict_into(
        &self,
        out: &Layout,
        discriminator: &DiscriminatorConfig,
        predictor: &PredictorConfig,
    ) -> Result<Corpus, PipelineError> {
        discriminator.validate()?;
        predictor.validate()?;
        let test = self.load(&self.config.dataset.test)?;
        let use_examples = predictor.include_examples;
        let (pool, index) = if use_examples {
            let pool = self.self_annotated()?;
            let index = self.index_for(&pool)?;
            (pool, Some(index))
        } else {
            (Corpus::new("self_annotated", self.label_set.clone(), Vec::new()).expect("empty corpus"), None)
        };
        let g = &self.gateways;
        let results = par_map(test.examples(), g.predictor.max_parallel(), |ex| {
            let target = &ex.sentence;
            let selection = match &index {
                Some(index) => Some(discriminate(
                    target,
                    &pool,
                    index,
                    discriminator,
                    &self.label_set,
                    &g.embedder,
                    &g.discriminator,
                    &self.forge,
                )?),
                None => None,
            };
            let examples = selection.as_ref().map(|s| s.selected.as_slice()).unwrap_or_default();
            let (predicted, trace) = predict(target, examples, &self.label_set, predictor, &g.predictor, &self.forge)?;
            let trace = TargetTrace { id: target.id.clone(), selection: selection.map(|s| s.trace), prediction: trace };
            Ok::<_, AgentError>((predicted, trace))
        });
        let mut examples = Vec::new();
        let mut log = String::new();
        for r in results {
            let (ex, trace) = r?;
            examples.push(ex);
            push_json_line(&mut log, &trace);
        }
        let predictions = Corpus::new("predictions", self.label_set.clone(), examples)
            .map_err(|e| AgentError::Config(format!("predictions are invalid: {e}")))?;
        out.create()?;
        save_corpus(&predictions, &out.predictions())?;
        write_atomic(&out.traces_dir().join("predict.jsonl"), log.as_bytes())?;
        Ok(predictions)
    }
}

/// Annotates the unlabeled pool; writes `corpus/self_annotated.jsonl` and
/// `traces/annotate.jsonl`.
pub fn cmd_annotate(pipeline: &Pipeline) -> Result<Corpus, PipelineError> {
    let unlabeled = pipeline.load(&pipeline.config.dataset.unlabeled)?;
    let (corpus, traces) = build_self_annotated_corpus(
        &unlabeled,
        &pipeline.label_set,
        &pipeline.config.annotator,
        &pipeline.gateways.annotator,
        &pipeline.forge,
    )?;
    let layout = &pipeline.layout;
    layout.create()?;
    save_corpus(&corpus, &layout.self_annotated())?;
    let mut log = String::new();
    for t in &traces {
        push_json_line(&mut log, t);
    }
    write_atomic(&layout.traces_dir().join("annotate.jsonl"), log.as_bytes())?;
    log::info!("annotated {} sentences into {}", corpus.len(), layout.self_annotated().display());
    Ok(corpus)
}

/// Predicts the test sentences with the configured settings; writes
/// `corpus/predictions.jsonl` and `traces/predict.jsonl`.
pub fn cmd_predict(pipeline: &Pipeline) -> Result<Corpus, PipelineError> {
    let c = &pipeline.config;
    pipeline.predict_into(&pipeline.layout, &c.discriminator, &c.predictor)
}

/// Scores `pred` against `gold` under each regime and writes
/// `eval_<regime>.json` and `eval_<regime>.txt` into `reports_dir`.
pub fn cmd_evaluate(
    gold: &Path,
    pred: &Path,
    label_set: &LabelSet,
    regimes: &[Regime],
    reports_dir: &Path,
) -> Result<Vec<EvalReport>, PipelineError> {
    let gold = load_corpus(gold, label_set)?;
    let pred = load_corpus(pred, label_set)?;
    fs::create_dir_all(reports_dir).map_err(|source| IoError::Io { path: reports_dir.to_path_buf(), source })?;
    let mut reports = Vec::new();
    for &regime in regimes {
        let r = evaluate(&gold, &pred, regime)?;
        let stem = reports_dir.join(format!("eval_{}", regime.name()));
        write_atomic(&stem.with_extension("json"), report::render_json(&r).as_bytes())?;
        write_atomic(&stem.with_extension("txt"), report::render_text(&r).as_bytes())?;
        reports.push(r);
    }
    Ok(reports)
}

/// Runs prediction and evaluation for every valid (K, k) cell and writes
/// `reports/sweep.csv`. Cells with `k > K` or `k = 0` are skipped.
pub fn cmd_sweep(pipeline: &Pipeline, cells: &[(usize, usize)]) -> Result<Vec<SweepRow>, PipelineError> {
    let c = &pipeline.config;
    let mut rows = Vec::new();
    for &(big_k, k) in cells {
        let disc = DiscriminatorConfig { retrieve: big_k, select: k, ..c.discriminator };
        if let Err(e) = disc.validate() {
            log::warn!("skipping sweep cell K={big_k}, k={k}: {e}");
            continue;
        }
        let cell = pipeline.layout.sweep_cell(big_k, k);
        pipeline.predict_into(&cell, &disc, &c.predictor)?;
        let reports = cmd_evaluate(
            &c.dataset.test,
            &cell.predictions(),
            &pipeline.label_set,
            &Regime::BOTH,
            &cell.reports_dir(),
        )?;
        rows.push(SweepRow { big_k, k, exact_f1: reports[0].micro.f1, relaxed_f1: reports[1].micro.f1 });
    }
    pipeline.layout.create()?;
    write_atomic(&pipeline.layout.reports_dir().join("sweep.csv"), render_sweep_csv(&rows).as_bytes())?;
    Ok(rows)
}

/// `K,k,exact_f1,relaxed_f1` with six decimals.
pub fn render_sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("K,k,exact_f1,relaxed_f1\n");
    for r in rows {
        out.push_str(&format!("{},{},{:.6},{:.6}\n", r.big_k, r.k, r.exact_f1, r.relaxed_f1));
    }
    out
}


//! Regenerates `testdata/e2e/fixtures.json`.
//!
//! A small rule-based stand-in for the LLM answers every prompt the pipeline
//! issues on the fixture dataset (all ablation combinations, the sweep grid
//! and a K = k cell); the answers are recorded per prompt hash and written as
//! a scripted fixture file.
//!
//! ```text
//! cargo run -p oema --example synth_fixtures
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use oema::agents::DiscriminatorConfig;
use oema::config::RunConfig;
use oema::gateway::{hashed_bow, sha256_hex, Backend, ChatRequest, FixtureFile, Gateway, GatewayError, Gateways};
use oema::pipeline::{cmd_annotate, cmd_sweep, Layout, Pipeline};
use sha2::{Digest, Sha256};

const EMBED_DIM: usize = 16;

/// (surface, label, category, concept). An empty label marks a concept that
/// is not an entity.
const LEXICON: &[(&str, &str, &str, &str)] = &[
    ("shortness of breath", "Medical problem", "Clinical finding", "Dyspnea"),
    ("abdominal pain", "Medical problem", "Clinical finding", "Abdominal pain"),
    ("blood pressure", "Test", "Observable entity", "Blood pressure"),
    ("blood cultures", "Test", "Procedure", "Blood culture"),
    ("appendectomy", "Treatment", "Procedure", "Appendectomy"),
    ("hypertension", "Medical problem", "Clinical finding", "Hypertensive disorder"),
    ("antibiotics", "Treatment", "Substance", "Antibacterial agent"),
    ("chest x-ray", "Test", "Procedure", "Plain chest X-ray"),
    ("chest pain", "Medical problem", "Clinical finding", "Chest pain"),
    ("lisinopril", "Treatment", "Pharmaceutical / biologic product", "Lisinopril"),
    ("metformin", "Treatment", "Pharmaceutical / biologic product", "Metformin"),
    ("albuterol", "Treatment", "Pharmaceutical / biologic product", "Albuterol"),
    ("pneumonia", "Medical problem", "Clinical finding", "Pneumonia"),
    ("diabetes", "Medical problem", "Clinical finding", "Diabetes mellitus"),
    ("CT scan", "Test", "Procedure", "Computed tomography"),
    ("aspirin", "Treatment", "Pharmaceutical / biologic product", "Aspirin"),
    ("abdomen", "", "Body structure", "Abdominal structure"),
    ("fever", "Medical problem", "Clinical finding", "Fever"),
    ("cough", "Medical problem", "Clinical finding", "Cough"),
    ("rash", "Medical problem", "Clinical finding", "Eruption"),
    ("ECG", "Test", "Procedure", "Electrocardiogram"),
    ("arm", "", "Body structure", "Upper limb structure"),
];

const LABELS: [&str; 3] = ["Medical problem", "Treatment", "Test"];

fn h(parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p.as_bytes());
        hasher.update([0]);
    }
    u64::from_le_bytes(hasher.finalize()[..8].try_into().unwrap())
}

/// Lexicon hits in order of appearance, longest match first at each
/// position: (char start, matched text, lexicon row).
fn find_terms(text: &str) -> Vec<(usize, String, usize)> {
    let lower = text.to_lowercase();
    let mut hits = Vec::new();
    let mut taken = vec![false; lower.len()];
    for (row, (surface, ..)) in LEXICON.iter().enumerate() {
        let needle = surface.to_lowercase();
        let mut from = 0;
        while let Some(off) = lower[from..].find(&needle) {
            let start = from + off;
            let end = start + needle.len();
            let word_edge = |i: usize| i >= lower.len() || !lower.as_bytes()[i].is_ascii_alphanumeric();
            let left_ok = start == 0 || !lower.as_bytes()[start - 1].is_ascii_alphanumeric();
            if left_ok && word_edge(end) && !taken[start..end].iter().any(|t| *t) {
                taken[start..end].iter_mut().for_each(|t| *t = true);
                hits.push((start, text[start..end].to_string(), row));
            }
            from = end;
        }
    }
    hits.sort();
    hits
}

fn previous_word(text: &str, start: usize) -> Option<&str> {
    let before = text[..start].trim_end();
    let word = before.rsplit(' ').next()?;
    (!word.is_empty() && word.chars().all(|c| c.is_ascii_alphabetic())).then_some(word)
}

fn between<'a>(s: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let i = s.find(open)? + open.len();
    let j = s[i..].find(close)? + i;
    Some(&s[i..j])
}

fn target_text(prompt: &str) -> &str {
    let i = prompt.rfind("Text: \"").expect("prompt has a target") + 7;
    prompt[i..].strip_suffix("\"\nAnswer:").expect("prompt ends with Answer:")
}

fn render_entities(pairs: &[(String, String)], style: u64) -> String {
    let q = if style % 4 == 1 { '\'' } else { '"' };
    let body: Vec<String> = pairs.iter().map(|(s, l)| format!("{{{q}{s}{q}: {q}{l}{q}}}")).collect();
    let array = format!("[{}]", body.join(", "));
    match style % 4 {
        2 => format!("```json\n{array}\n```"),
        3 => format!("Here are the entities: {array}"),
        _ => array,
    }
}

fn answer_ner(prompt: &str, sample: usize) -> String {
    let text = target_text(prompt);
    let shots = prompt.matches("Text: \"").count() - 1;
    let described = prompt.contains("Entity type descriptions:");
    let salt = sample.to_string();
    let mut pairs = Vec::new();
    for (start, surface, row) in find_terms(text) {
        let label = LEXICON[row].1;
        if label.is_empty() {
            continue;
        }
        let r = h(&[text, &surface, &salt, &shots.to_string(), &described.to_string()]);
        let keep = 6 + 2 * shots.min(2) as u64;
        if r % 10 >= keep {
            continue;
        }
        let mut label = label.to_string();
        if (r / 10).is_multiple_of(if described { 11 } else { 5 }) {
            let i = LABELS.iter().position(|l| *l == label).unwrap();
            label = LABELS[(i + 1) % 3].to_string();
        }
        let mut surface = surface;
        if !described && (r / 100).is_multiple_of(3) {
            if let Some(w) = previous_word(text, start) {
                surface = format!("{w} {surface}");
            }
        }
        pairs.push((surface, label));
    }
    if h(&[text, "noise", &salt]).is_multiple_of(5) && text.contains("patient") {
        pairs.push(("patient".into(), "Medical problem".into()));
    }
    render_entities(&pairs, h(&[text, "style", &salt]))
}

fn answer_ontology(prompt: &str) -> String {
    let text = target_text(prompt);
    let pairs: Vec<String> = find_terms(text)
        .into_iter()
        .map(|(_, surface, row)| {
            let (_, _, category, concept) = LEXICON[row];
            format!("\"({category}, {concept})\": \"{surface}\"")
        })
        .collect();
    let style = h(&[text, "ontology"]);
    if pairs.is_empty() {
        return if style.is_multiple_of(2) { "{}".into() } else { "No clinical concepts were found in this text.".into() };
    }
    let object = format!("{{{}}}", pairs.join(", "));
    match style % 4 {
        0 => object.replace('"', "'"),
        1 => format!("Extracted concepts: {object}"),
        _ => object,
    }
}

fn concepts(ontology: &str) -> Vec<&'static str> {
    LEXICON.iter().map(|r| r.3).filter(|c| ontology.contains(&format!(", {c})"))).collect()
}

fn answer_scoring(prompt: &str) -> String {
    let target = between(prompt, "'ontology': '", "'\n}").unwrap_or_default();
    let wanted = concepts(target);
    let lines = prompt.split("### Sentences\n").nth(1).unwrap_or_default();
    let mut records = Vec::new();
    for line in lines.lines() {
        let idx: i64 = between(line, "{'idx': ", ",").and_then(|s| s.parse().ok()).expect("candidate idx");
        let ontology = line.split("'ontology': '").nth(1).unwrap_or_default();
        let shared = concepts(ontology).iter().filter(|c| wanted.contains(c)).count() as u64;
        let r = h(&[prompt, &idx.to_string()]);
        let score = (1 + 2 * shared + r % 2).min(5);
        let reason = format!("shares {shared} concept(s) with the target");
        match r % 13 {
            0 => continue,
            1 => records.push(format!("{{\"idx\": {idx}, \"score\": 7, \"reason\": \"{reason}\"}}")),
            2 => records.push(format!("{{\"idx\": {idx}, \"score\": \"{score}\", \"reason\": \"{reason}\"}}")),
            3 => records.push(format!("{{'idx': {idx}, 'score': {score}.5, 'reason': '{reason}'}}")),
            _ => records.push(format!("{{\"idx\": {idx}, \"score\": {score}, \"reason\": \"{reason}\"}}")),
        }
    }
    let array = format!("[{}]", records.join(", "));
    if h(&[prompt, "fence"]).is_multiple_of(5) {
        format!("```json\n{array}\n```")
    } else {
        array
    }
}

fn answer(prompt: &str, sample: usize) -> String {
    if prompt.starts_with("### Example Scoring") {
        answer_scoring(prompt)
    } else if prompt.contains("\nTop-level categories: ") {
        answer_ontology(prompt)
    } else {
        answer_ner(prompt, sample)
    }
}

/// Answers with the simulator and remembers every answer per prompt hash.
#[derive(Default)]
struct Recorder {
    completions: Mutex<BTreeMap<String, BTreeMap<usize, String>>>,
    embeddings: Mutex<BTreeMap<String, Vec<f64>>>,
}

impl Backend for Recorder {
    fn id(&self) -> &str {
        "recorder"
    }

    fn chat(&self, request: &ChatRequest, sample_indices: &[usize]) -> Result<Vec<String>, GatewayError> {
        let prompt = request.prompt();
        let texts: Vec<String> = sample_indices.iter().map(|&i| answer(&prompt, i)).collect();
        let mut map = self.completions.lock().unwrap();
        let slot = map.entry(sha256_hex(&prompt)).or_default();
        for (&i, t) in sample_indices.iter().zip(&texts) {
            slot.insert(i, t.clone());
        }
        Ok(texts)
    }

    fn embed(&self, _model: &str, texts: &[&str]) -> Result<Vec<Vec<f64>>, GatewayError> {
        let mut map = self.embeddings.lock().unwrap();
        Ok(texts
            .iter()
            .map(|t| map.entry(t.to_string()).or_insert_with(|| hashed_bow(t, EMBED_DIM)).clone())
            .collect())
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata/e2e");
    let base = RunConfig::load(&dir.join("config.toml"))?;
    let recorder = Arc::new(Recorder::default());
    let chat = Arc::new(Gateway::new(recorder.clone(), base.backends.annotator.model.clone()));
    let embed = Arc::new(Gateway::new(recorder.clone(), "text-embedding-ada-002"));
    let gateways = Gateways { annotator: chat.clone(), discriminator: chat.clone(), predictor: chat, embedder: embed };
    let scratch = tempfile::tempdir()?;

    let mut config = base.clone();
    config.output_dir = scratch.path().to_path_buf();
    let pipeline = Pipeline::with_gateways(config.clone(), gateways.clone())?;
    cmd_annotate(&pipeline)?;
    for descriptions in [true, false] {
        for examples in [true, false] {
            let mut predictor = config.predictor;
            predictor.include_type_descriptions = descriptions;
            predictor.include_examples = examples;
            let out = Layout::new(scratch.path().join(format!("flags_{descriptions}_{examples}")));
            pipeline.predict_into(&out, &config.discriminator, &predictor)?;
        }
    }
    for (big_k, k) in [(3, 3), (4, 4)] {
        let disc = DiscriminatorConfig { retrieve: big_k, select: k, ..config.discriminator };
        pipeline.predict_into(&Layout::new(scratch.path().join(format!("eq_{big_k}"))), &disc, &config.predictor)?;
    }
    cmd_sweep(&pipeline, &config.sweep.cells())?;

    let completions = recorder
        .completions
        .lock()
        .unwrap()
        .iter()
        .map(|(k, samples)| {
            let texts: Vec<String> = samples.values().cloned().collect();
            assert!(samples.keys().copied().eq(0..texts.len()), "non-contiguous samples for {k}");
            (k.clone(), texts)
        })
        .collect();
    let fixtures = FixtureFile { completions, embeddings: recorder.embeddings.lock().unwrap().clone() };
    let mut json = serde_json::to_string_pretty(&fixtures)?;
    json.push('\n');
    std::fs::write(dir.join("fixtures.json"), json)?;
    println!(
        "{} completion fixtures, {} embedding fixtures -> {}",
        fixtures.completions.len(),
        fixtures.embeddings.len(),
        dir.join("fixtures.json").display()
    );
    Ok(())
}

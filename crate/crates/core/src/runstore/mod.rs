//! Persistent run directory, response cache and the `curate` driver.
//!
//! Layout under the run directory:
//!
//! ```text
//! run.lock                  held while a writer is active
//! manifests/manifest.jsonl  copy of the input manifest
//! cache/ab/<key>.json       one response per request hash
//! candidates/<task>.json    candidates, claims, probes and scores
//! probes/<task>.jsonl       one line per probe: raw answer and parsed value
//! pairs/pairs.jsonl         exported preference pairs
//! reports/summary.json      run counters
//! reports/failures.jsonl    tasks that produced no complete candidate
//! ```

mod cache;

use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{cache_key, CacheEntry, CachingBackend};

use crate::claims::ObjectLexicon;
use crate::fsio::{parse_jsonl, write_atomic, JsonlError};
use crate::gateway::{BinaryAnswer, ChatBackend, Gateway, GatewayError, HttpBackend, ModelEndpointConfig};
use crate::pipeline::{
    export_pairs, make_pairs, CandidateResponse, CurationOptions, CurationTask, Curator, PairPolicy, PairingOptions,
    PairingOutcome, PipelineError, PreferencePair, RankingStrategy, SamplingConfig, TaskReport,
    DEFAULT_CAPTION_PROMPT, DEFAULT_QA_DESCRIPTION_PROMPT,
};

pub const LAYOUT_DIRS: [&str; 6] = ["manifests", "cache", "candidates", "probes", "pairs", "reports"];
pub const PAIRS_FILE: &str = "pairs/pairs.jsonl";
pub const SUMMARY_FILE: &str = "reports/summary.json";
pub const LOCK_FILE: &str = "run.lock";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: line {line}: {message}")]
    Manifest { path: String, line: usize, message: String },
    #[error("run directory {0} is locked by another writer (remove {LOCK_FILE} if stale)")]
    Locked(PathBuf),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt run store file {path}: {message}")]
    Corrupt { path: String, message: String },
}

impl RunError {
    fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        RunError::Io { context: context.into(), source }
    }

    /// Whether the error stems from bad configuration or input files rather
    /// than from running the tasks.
    pub fn is_config(&self) -> bool {
        matches!(self, RunError::Config(_) | RunError::Manifest { .. } | RunError::Locked(_))
    }
}

impl From<GatewayError> for RunError {
    fn from(e: GatewayError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<PipelineError> for RunError {
    fn from(e: PipelineError) -> Self {
        RunError::Config(e.to_string())
    }
}

/// Model backend and optional separate extraction backend.
pub type Backends = (Arc<dyn ChatBackend>, Option<Arc<dyn ChatBackend>>);

/// JSON run configuration. Credentials are never stored here, only the name
/// of the environment variable holding them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub endpoint: ModelEndpointConfig,
    /// Model used for semantic claim extraction; the main endpoint when
    /// absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extraction_endpoint: Option<ModelEndpointConfig>,
    pub sampling: SamplingConfig,
    pub strategy: RankingStrategy,
    pub pair_policy: PairPolicy,
    pub coverage_constraint: bool,
    pub two_round_qa: bool,
    pub existence_in_qa: bool,
    pub probe_cap: usize,
    pub concurrency: usize,
    pub run_dir: PathBuf,
    pub caption_prompt: String,
    pub qa_description_prompt: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let options = CurationOptions::default();
        Self {
            endpoint: ModelEndpointConfig::new("http://localhost:8000/v1", "default"),
            extraction_endpoint: None,
            sampling: options.sampling,
            strategy: RankingStrategy::default(),
            pair_policy: PairPolicy::default(),
            coverage_constraint: false,
            two_round_qa: true,
            existence_in_qa: false,
            probe_cap: options.probe_cap,
            concurrency: 4,
            run_dir: PathBuf::from("run"),
            caption_prompt: DEFAULT_CAPTION_PROMPT.into(),
            qa_description_prompt: DEFAULT_QA_DESCRIPTION_PROMPT.into(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(|e| RunError::Config(format!("invalid run config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn pairing(&self) -> PairingOptions {
        PairingOptions { strategy: self.strategy, coverage_constraint: self.coverage_constraint, policy: self.pair_policy }
    }

    pub fn curation_options(&self) -> CurationOptions {
        CurationOptions {
            sampling: self.sampling,
            caption_prompt: self.caption_prompt.clone(),
            qa_description_prompt: self.qa_description_prompt.clone(),
            two_round_qa: self.two_round_qa,
            existence_in_qa: self.existence_in_qa,
            probe_cap: self.probe_cap,
            pairing: self.pairing(),
            ..CurationOptions::default()
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.concurrency == 0 {
            return Err(RunError::Config("concurrency must be at least 1".into()));
        }
        self.endpoint.validate()?;
        if let Some(e) = &self.extraction_endpoint {
            e.validate()?;
        }
        self.curation_options().validate()?;
        Ok(())
    }

    /// HTTP backends for the configured endpoints.
    pub fn http_backends(&self) -> Result<Backends, RunError> {
        let model: Arc<dyn ChatBackend> = Arc::new(HttpBackend::new(&self.endpoint)?);
        let extractor = match &self.extraction_endpoint {
            Some(e) => Some(Arc::new(HttpBackend::new(e)?) as Arc<dyn ChatBackend>),
            None => None,
        };
        Ok((model, extractor))
    }
}

/// Reads a manifest of curation tasks, one JSON object per line.
pub fn load_manifest(path: &Path) -> Result<Vec<CurationTask>, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Manifest {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    parse_manifest(&text, &path.display().to_string())
}

pub fn parse_manifest(text: &str, path: &str) -> Result<Vec<CurationTask>, RunError> {
    let err = |line: usize, message: String| RunError::Manifest { path: path.to_string(), line, message };
    let mut tasks: Vec<CurationTask> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let task: CurationTask = serde_json::from_str(line).map_err(|e| err(i + 1, e.to_string()))?;
        task.validate().map_err(|e| err(i + 1, e.to_string()))?;
        if tasks.iter().any(|t| t.task_id == task.task_id) {
            return Err(err(i + 1, format!("duplicate task_id {:?}", task.task_id)));
        }
        tasks.push(task);
    }
    Ok(tasks)
}

/// File-name stem for a task id. Ids that are not already safe get a short
/// hash suffix so distinct ids never collide.
pub fn task_file_stem(task_id: &str) -> String {
    let safe: String =
        task_id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect();
    if safe == task_id && !safe.starts_with('.') {
        safe
    } else {
        format!("{}-{}", safe.trim_start_matches('.'), &hex::encode(Sha256::digest(task_id.as_bytes()))[..8])
    }
}

/// What `candidates/<task>.json` holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTask {
    pub task: CurationTask,
    pub prompt: String,
    pub candidates: Vec<CandidateResponse>,
    pub pairing: PairingOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeLine {
    pub task_id: String,
    pub candidate: usize,
    pub question: String,
    pub raw_answer: String,
    pub answer: BinaryAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub task_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub tasks: usize,
    pub tasks_failed: usize,
    pub candidates: usize,
    pub incomplete_candidates: usize,
    pub zero_claim_candidates: usize,
    pub probes_issued: usize,
    pub model_calls: u64,
    pub cache_hits: u64,
    pub pairs_emitted: usize,
    pub ties_discarded: usize,
    pub coverage_discarded: usize,
}

impl RunSummary {
    pub fn all_failed(&self) -> bool {
        self.tasks > 0 && self.tasks_failed == self.tasks
    }
}

/// An open run directory. Holds the writer lock until dropped.
#[derive(Debug)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    /// Creates the layout if needed and takes the lock.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, RunError> {
        let root = root.into();
        for d in LAYOUT_DIRS {
            std::fs::create_dir_all(root.join(d)).map_err(|e| RunError::io(format!("creating {}", root.display()), e))?;
        }
        let lock = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => return Err(RunError::Locked(root)),
            Err(e) => return Err(RunError::io(format!("creating {}", lock.display()), e)),
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn write(&self, rel: impl AsRef<Path>, bytes: &[u8]) -> Result<(), RunError> {
        let p = self.root.join(rel);
        write_atomic(&p, bytes).map_err(|e| RunError::io(format!("writing {}", p.display()), e))
    }

    fn persist_task(&self, stored: &StoredTask) -> Result<(), RunError> {
        let stem = task_file_stem(&stored.task.task_id);
        let json = serde_json::to_vec_pretty(stored).expect("stored task serialises");
        self.write(format!("candidates/{stem}.json"), &json)?;
        let mut probes = String::new();
        for c in &stored.candidates {
            for p in &c.probes {
                let line = ProbeLine {
                    task_id: stored.task.task_id.clone(),
                    candidate: c.index,
                    question: p.question.clone(),
                    raw_answer: p.raw_answer.clone(),
                    answer: p.answer,
                };
                probes.push_str(&serde_json::to_string(&line).expect("probe serialises"));
                probes.push('\n');
            }
        }
        self.write(format!("probes/{stem}.jsonl"), probes.as_bytes())
    }

    /// Every stored task, ordered by task id.
    pub fn stored_tasks(&self) -> Result<Vec<StoredTask>, RunError> {
        let dir = self.root.join("candidates");
        let entries = std::fs::read_dir(&dir).map_err(|e| RunError::io(format!("reading {}", dir.display()), e))?;
        let mut out = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| RunError::io("listing candidates", e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| RunError::io(format!("reading {}", path.display()), e))?;
            let stored: StoredTask = serde_json::from_str(&text)
                .map_err(|e| RunError::Corrupt { path: path.display().to_string(), message: e.to_string() })?;
            out.push(stored);
        }
        out.sort_by(|a, b| a.task.task_id.cmp(&b.task.task_id));
        Ok(out)
    }

    /// Rebuilds pairs from stored candidates without touching any model.
    pub fn rederive_pairs(&self, pairing: &PairingOptions) -> Result<Vec<PreferencePair>, RunError> {
        Ok(self
            .stored_tasks()?
            .iter()
            .flat_map(|s| make_pairs(&s.task, &s.prompt, &s.candidates, pairing).0)
            .collect())
    }

    pub fn export(&self, pairs: &[PreferencePair], path: &Path) -> Result<(), RunError> {
        export_pairs(pairs, path).map_err(|e| RunError::io(format!("writing {}", path.display()), e))
    }
}

impl Drop for RunStore {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(self.root.join(LOCK_FILE));
    }
}

/// Runs every manifest task, persists all intermediates and writes the
/// pairs file. A task whose candidates are all incomplete is recorded as a
/// failure and skipped.
pub fn curate(
    store: &RunStore,
    manifest_path: &Path,
    config: &RunConfig,
    model: Arc<dyn ChatBackend>,
    extractor: Option<Arc<dyn ChatBackend>>,
) -> Result<RunSummary, RunError> {
    config.validate()?;
    let manifest_text = std::fs::read_to_string(manifest_path).map_err(|e| RunError::Manifest {
        path: manifest_path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    let tasks = parse_manifest(&manifest_text, &manifest_path.display().to_string())?;
    store.write("manifests/manifest.jsonl", manifest_text.as_bytes())?;

    let cache_dir = store.path("cache");
    let model_cache = Arc::new(CachingBackend::new(model, &cache_dir));
    let model_gw = Gateway::new(model_cache.clone(), config.endpoint.retry_policy(), config.concurrency);
    let extractor_cache = extractor.map(|e| Arc::new(CachingBackend::new(e, &cache_dir)));
    let extractor_gw = extractor_cache.as_ref().map(|c| {
        let endpoint = config.extraction_endpoint.as_ref().unwrap_or(&config.endpoint);
        Gateway::new(c.clone(), endpoint.retry_policy(), config.concurrency)
    });

    let lexicon = ObjectLexicon::coco();
    let options = config.curation_options();
    let curator = Curator::new(&model_gw, extractor_gw.as_ref().unwrap_or(&model_gw), &lexicon, &options)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.concurrency)
        .build()
        .map_err(|e| RunError::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<TaskReport, PipelineError>> =
        pool.install(|| tasks.par_iter().map(|t| curator.run_task(t)).collect());

    let mut summary = RunSummary { tasks: tasks.len(), ..Default::default() };
    let mut failures = Vec::new();
    let mut pairs = Vec::new();
    for (task, result) in tasks.iter().zip(results) {
        let report = match result {
            Ok(r) => r,
            Err(e) => {
                summary.tasks_failed += 1;
                failures.push(TaskFailure { task_id: task.task_id.clone(), reason: e.to_string() });
                continue;
            }
        };
        summary.candidates += report.candidates.len();
        summary.incomplete_candidates += report.candidates.iter().filter(|c| !c.is_complete()).count();
        summary.zero_claim_candidates += report.candidates.iter().filter(|c| c.is_zero_claim()).count();
        summary.probes_issued += report.candidates.iter().map(|c| c.probes.len()).sum::<usize>();
        summary.ties_discarded += report.pairing.ties_discarded;
        summary.coverage_discarded += report.pairing.coverage_discarded;
        store.persist_task(&StoredTask {
            task: report.task.clone(),
            prompt: options.pair_prompt(&report.task),
            candidates: report.candidates.clone(),
            pairing: report.pairing.clone(),
        })?;
        if report.failed() {
            summary.tasks_failed += 1;
            let reason = report
                .candidates
                .iter()
                .find_map(|c| match &c.status {
                    crate::pipeline::CandidateStatus::Incomplete { reason } => Some(reason.clone()),
                    _ => None,
                })
                .unwrap_or_default();
            log::warn!("task {} failed: {reason}", task.task_id);
            failures.push(TaskFailure { task_id: task.task_id.clone(), reason });
            continue;
        }
        pairs.extend(report.pairs);
    }
    summary.pairs_emitted = pairs.len();
    summary.cache_hits = model_cache.hits() + extractor_cache.as_ref().map_or(0, |c| c.hits());
    summary.model_calls = model_cache.misses() + extractor_cache.as_ref().map_or(0, |c| c.misses());

    store.export(&pairs, &store.path(PAIRS_FILE))?;
    let mut failure_lines = String::new();
    for f in &failures {
        failure_lines.push_str(&serde_json::to_string(f).expect("failure serialises"));
        failure_lines.push('\n');
    }
    store.write("reports/failures.jsonl", failure_lines.as_bytes())?;
    store.write(SUMMARY_FILE, &serde_json::to_vec_pretty(&summary).expect("summary serialises"))?;
    Ok(summary)
}

/// Reads stored probes back from a run directory.
pub fn read_probe_lines(path: &Path) -> Result<Vec<ProbeLine>, JsonlError> {
    let text = std::fs::read_to_string(path).map_err(|e| JsonlError::Io(path.display().to_string(), e))?;
    parse_jsonl(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_unknown_fields() {
        let c = RunConfig::from_json(r#"{"concurrency": 2, "strategy": "relative_ratio"}"#).unwrap();
        assert_eq!(c.concurrency, 2);
        assert!(c.two_round_qa);
        assert_eq!(c.strategy, RankingStrategy::RelativeRatio);
        assert!(RunConfig::from_json(r#"{"api_key": "secret"}"#).is_err());
        let zero = RunConfig { concurrency: 0, ..Default::default() };
        assert!(zero.validate().unwrap_err().is_config());
    }

    #[test]
    fn manifest_errors_carry_line_numbers() {
        let text = "{\"task_id\": \"a\", \"image\": \"x\", \"kind\": \"captioning\"}\n\n{not json}\n";
        match parse_manifest(text, "m.jsonl") {
            Err(RunError::Manifest { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let dup = "{\"task_id\": \"a\", \"image\": \"x\", \"kind\": \"captioning\"}\n{\"task_id\": \"a\", \"image\": \"y\", \"kind\": \"captioning\"}";
        assert!(matches!(parse_manifest(dup, "m"), Err(RunError::Manifest { line: 2, .. })));
        let qa = "{\"task_id\": \"q\", \"image\": \"x\", \"kind\": \"qa\"}";
        assert!(matches!(parse_manifest(qa, "m"), Err(RunError::Manifest { line: 1, .. })));
    }

    #[test]
    fn file_stems() {
        assert_eq!(task_file_stem("task-01"), "task-01");
        let s = task_file_stem("a/b");
        assert!(s.starts_with("a_b-") && s.len() == 12);
        assert_ne!(task_file_stem("a/b"), task_file_stem("a_b"));
        assert!(!task_file_stem("..").starts_with('.'));
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        assert!(matches!(RunStore::open(dir.path()), Err(RunError::Locked(_))));
        for d in LAYOUT_DIRS {
            assert!(dir.path().join(d).is_dir());
        }
        drop(store);
        RunStore::open(dir.path()).unwrap();
    }
}

//! Self-consistency data curation.
//!
//! For every task the model writes `N` candidate responses. Atomic claims
//! are pulled from each response and turned into yes/no probes, which the
//! same model answers about the same image. A "No" marks an inconsistent
//! claim; candidates are ranked by their inconsistency count and turned into
//! chosen/rejected preference pairs.

mod curator;
mod export;
mod ranking;

use serde::{Deserialize, Serialize};

use crate::claims::{AtomicClaim, ClaimCategory, SemanticWarning};
use crate::gateway::{parse_binary, BinaryAnswer, ImageRef, SamplingParams};

pub use curator::{CurationOptions, Curator, PipelineError, TaskReport, DEFAULT_CAPTION_PROMPT, DEFAULT_QA_DESCRIPTION_PROMPT};
pub use export::{export_pairs, pairs_to_jsonl, read_pairs};
pub use ranking::{
    compare_scores, make_pairs, rank, score, select_pairs, PairView, PairingOptions, PairingOutcome,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Captioning,
    Qa,
}

/// One image plus its prompt; the unit of pipeline work.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurationTask {
    pub task_id: String,
    pub image: ImageRef,
    pub kind: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
}

impl CurationTask {
    pub fn captioning(task_id: impl Into<String>, image: impl Into<String>) -> Self {
        Self { task_id: task_id.into(), image: ImageRef::new(image), kind: TaskKind::Captioning, question: None }
    }

    pub fn qa(task_id: impl Into<String>, image: impl Into<String>, question: impl Into<String>) -> Self {
        Self {
            task_id: task_id.into(),
            image: ImageRef::new(image),
            kind: TaskKind::Qa,
            question: Some(question.into()),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.task_id.trim().is_empty() {
            return Err(PipelineError::Precondition("task_id is empty".into()));
        }
        match (self.kind, &self.question) {
            (TaskKind::Qa, Some(q)) if !q.trim().is_empty() => Ok(()),
            (TaskKind::Qa, _) => Err(PipelineError::Precondition(format!("QA task {} has no question", self.task_id))),
            (TaskKind::Captioning, None) => Ok(()),
            (TaskKind::Captioning, Some(_)) => Err(PipelineError::Precondition(format!(
                "captioning task {} must not carry a question",
                self.task_id
            ))),
        }
    }
}

/// A probe question, the model's raw reply and its binary reading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryProbe {
    pub question: String,
    pub raw_answer: String,
    pub answer: BinaryAnswer,
    pub claim_category: ClaimCategory,
}

impl BinaryProbe {
    pub fn new(question: impl Into<String>, raw_answer: impl Into<String>, claim_category: ClaimCategory) -> Self {
        let raw_answer = raw_answer.into();
        Self { question: question.into(), answer: parse_binary(&raw_answer), raw_answer, claim_category }
    }
}

/// `K` ("No" answers) and `T` (parseable answers) for one response.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConsistencyScore {
    pub k_no: u32,
    pub t_total: u32,
    pub n_unparseable: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum CandidateStatus {
    Complete,
    Incomplete { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateResponse {
    pub index: usize,
    /// Final response `y`; the only text that enters a preference pair.
    pub text: String,
    /// Question-relevant description from the first QA round.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux_description: Option<String>,
    pub claims: Vec<AtomicClaim>,
    pub probes: Vec<BinaryProbe>,
    pub score: ConsistencyScore,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<SemanticWarning>,
    /// Claims removed by deduplication or the probe cap.
    #[serde(default)]
    pub dropped_claims: usize,
    pub status: CandidateStatus,
}

impl CandidateResponse {
    pub fn is_complete(&self) -> bool {
        self.status == CandidateStatus::Complete
    }

    pub fn is_zero_claim(&self) -> bool {
        self.is_complete() && self.score.t_total == 0
    }

    pub(crate) fn incomplete(index: usize, reason: impl Into<String>) -> Self {
        Self {
            index,
            text: String::new(),
            aux_description: None,
            claims: Vec::new(),
            probes: Vec::new(),
            score: ConsistencyScore::default(),
            warnings: Vec::new(),
            dropped_claims: 0,
            status: CandidateStatus::Incomplete { reason: reason.into() },
        }
    }
}

/// How many candidates to draw and with which decoding parameters.
///
/// Candidate `i` is sampled with seed `candidate_sampling.seed + i`
/// (base 0 when unset) so that every candidate is a distinct request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub n_candidates: usize,
    pub candidate_sampling: SamplingParams,
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.n_candidates < 2 {
            return Err(PipelineError::Precondition(format!(
                "n_candidates must be at least 2 to form pairs, got {}",
                self.n_candidates
            )));
        }
        self.candidate_sampling
            .validate()
            .map_err(|e| PipelineError::Precondition(e.to_string()))
    }

    pub fn for_candidate(&self, index: usize) -> SamplingParams {
        SamplingParams {
            seed: Some(self.candidate_sampling.seed.unwrap_or(0) + index as u64),
            ..self.candidate_sampling
        }
    }
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { n_candidates: 3, candidate_sampling: SamplingParams::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingStrategy {
    /// Ascending `K`.
    #[default]
    Occurrence,
    /// Ascending `K / T`.
    RelativeRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairPolicy {
    #[default]
    AllPairs,
    BestVsWorst,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMeta {
    pub k_chosen: u32,
    pub t_chosen: u32,
    pub k_rejected: u32,
    pub t_rejected: u32,
    pub strategy: RankingStrategy,
    pub claim_count_chosen: usize,
    pub claim_count_rejected: usize,
}

/// Exported training unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub task_id: String,
    pub image: ImageRef,
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub meta: PairMeta,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_validation() {
        assert!(CurationTask::captioning("t1", "img").validate().is_ok());
        assert!(CurationTask::qa("t2", "img", "What color is the bus?").validate().is_ok());
        let mut t = CurationTask::qa("t3", "img", "q?");
        t.question = None;
        assert!(t.validate().is_err());
        let mut t = CurationTask::captioning("t4", "img");
        t.question = Some("q?".into());
        assert!(t.validate().is_err());
        assert!(CurationTask::captioning(" ", "img").validate().is_err());
    }

    #[test]
    fn manifest_line_shape() {
        let t: CurationTask =
            serde_json::from_str(r#"{"task_id": "a", "image": "x.jpg", "kind": "qa", "question": "Why?"}"#).unwrap();
        assert_eq!(t.kind, TaskKind::Qa);
        assert!(serde_json::from_str::<CurationTask>(r#"{"task_id": "a", "image": "x", "kind": "vqa"}"#).is_err());
    }

    #[test]
    fn candidate_seeds_are_distinct() {
        let cfg = SamplingConfig::default();
        let seeds: Vec<_> = (0..3).map(|i| cfg.for_candidate(i).seed).collect();
        assert_eq!(seeds, [Some(0), Some(1), Some(2)]);
        let mut one = cfg;
        one.n_candidates = 1;
        assert!(one.validate().is_err());
    }

    #[test]
    fn probe_parses_raw_answer() {
        let p = BinaryProbe::new("Is there a cat in the image?", "No, there is not.", ClaimCategory::Existence);
        assert_eq!(p.answer, BinaryAnswer::No);
    }
}

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ranking::{make_pairs, score, PairingOptions, PairingOutcome};
use super::{BinaryProbe, CandidateResponse, CandidateStatus, CurationTask, PreferencePair, SamplingConfig, TaskKind};
use crate::claims::{
    build_semantic_extraction_prompt, dedup_and_cap, existence_claims, parse_semantic_claims, AtomicClaim,
    ObjectLexicon, SemanticExtractionResult,
};
use crate::gateway::{ChatRequest, Gateway, GatewayError, ImageRef, SamplingParams, Turn};

pub const DEFAULT_CAPTION_PROMPT: &str = "Describe the image in detail.";
pub const DEFAULT_QA_DESCRIPTION_PROMPT: &str = "Describe the image.";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("precondition failed: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationOptions {
    pub sampling: SamplingConfig,
    pub caption_prompt: String,
    /// First-round prompt for QA tasks; `{question}` is replaced by the task
    /// question when present.
    pub qa_description_prompt: String,
    pub two_round_qa: bool,
    /// Also probe object-existence claims on QA responses.
    pub existence_in_qa: bool,
    pub probe_cap: usize,
    pub extraction_max_tokens: u32,
    pub pairing: PairingOptions,
}

impl Default for CurationOptions {
    fn default() -> Self {
        Self {
            sampling: SamplingConfig::default(),
            caption_prompt: DEFAULT_CAPTION_PROMPT.into(),
            qa_description_prompt: DEFAULT_QA_DESCRIPTION_PROMPT.into(),
            two_round_qa: true,
            existence_in_qa: false,
            probe_cap: 40,
            extraction_max_tokens: 2048,
            pairing: PairingOptions::default(),
        }
    }
}

impl CurationOptions {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.sampling.validate()?;
        if self.probe_cap == 0 {
            return Err(PipelineError::Precondition("probe_cap must be positive".into()));
        }
        if self.caption_prompt.trim().is_empty() {
            return Err(PipelineError::Precondition("caption prompt is empty".into()));
        }
        Ok(())
    }

    /// Text shown to the model as the prompt of a pair.
    pub fn pair_prompt(&self, task: &CurationTask) -> String {
        match task.kind {
            TaskKind::Captioning => self.caption_prompt.clone(),
            TaskKind::Qa => task.question.clone().unwrap_or_default(),
        }
    }
}

/// Everything produced for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: CurationTask,
    pub candidates: Vec<CandidateResponse>,
    pub pairs: Vec<PreferencePair>,
    pub pairing: PairingOutcome,
}

impl TaskReport {
    /// A task fails when no candidate could be completed.
    pub fn failed(&self) -> bool {
        self.candidates.iter().all(|c| !c.is_complete())
    }
}

/// Runs the curation branches against a target model (and an extraction
/// model for semantic claims, which may be the same gateway).
pub struct Curator<'a> {
    model: &'a Gateway,
    extractor: &'a Gateway,
    lexicon: &'a ObjectLexicon,
    options: &'a CurationOptions,
}

impl<'a> Curator<'a> {
    pub fn new(
        model: &'a Gateway,
        extractor: &'a Gateway,
        lexicon: &'a ObjectLexicon,
        options: &'a CurationOptions,
    ) -> Result<Self, PipelineError> {
        options.validate()?;
        Ok(Self { model, extractor, lexicon, options })
    }

    pub fn options(&self) -> &CurationOptions {
        self.options
    }

    fn probe(&self, image: &ImageRef, claims: &[AtomicClaim]) -> Result<Vec<BinaryProbe>, GatewayError> {
        claims
            .iter()
            .map(|c| {
                let raw = self.model.complete_binary(image, &c.question)?;
                Ok(BinaryProbe::new(c.question.clone(), raw, c.category))
            })
            .collect()
    }

    fn finish(
        &self,
        image: &ImageRef,
        index: usize,
        text: String,
        aux_description: Option<String>,
        mut claims: Vec<AtomicClaim>,
        extraction: Option<SemanticExtractionResult>,
    ) -> CandidateResponse {
        let dropped_claims = dedup_and_cap(&mut claims, self.options.probe_cap);
        match self.probe(image, &claims) {
            Ok(probes) => CandidateResponse {
                index,
                text,
                aux_description,
                score: score(&probes),
                claims,
                probes,
                warnings: extraction.map(|e| e.warnings).unwrap_or_default(),
                dropped_claims,
                status: CandidateStatus::Complete,
            },
            Err(e) => {
                let mut c = CandidateResponse::incomplete(index, format!("probe failed: {e}"));
                c.text = text;
                c.aux_description = aux_description;
                c.claims = claims;
                c
            }
        }
    }

    /// Detailed captions, scored by object-existence probes.
    pub fn run_caption_branch(&self, task: &CurationTask) -> Result<Vec<CandidateResponse>, PipelineError> {
        task.validate()?;
        if task.kind != TaskKind::Captioning {
            return Err(PipelineError::Precondition(format!("task {} is not a captioning task", task.task_id)));
        }
        self.options.sampling.validate()?;
        let candidates = (0..self.options.sampling.n_candidates)
            .map(|i| {
                let request = ChatRequest::with_image(
                    task.image.clone(),
                    vec![Turn::user(self.options.caption_prompt.clone())],
                    self.options.sampling.for_candidate(i),
                );
                match self.model.complete(&request) {
                    Ok(text) => {
                        let claims = existence_claims(&text, self.lexicon);
                        self.finish(&task.image, i, text, None, claims, None)
                    }
                    Err(e) => CandidateResponse::incomplete(i, format!("generation failed: {e}")),
                }
            })
            .collect();
        Ok(candidates)
    }

    fn extract(&self, text: &str) -> Result<SemanticExtractionResult, String> {
        let prompt = build_semantic_extraction_prompt(text);
        let mut last_error = String::new();
        // The retry changes only the seed so that it is a distinct request
        // (and cache entry) with the same prompt.
        for attempt in 0..2u64 {
            let sampling = SamplingParams {
                seed: (attempt > 0).then_some(attempt),
                ..SamplingParams::greedy(self.options.extraction_max_tokens)
            };
            let request = ChatRequest::text_only(vec![Turn::user(prompt.clone())], sampling);
            let output = self.extractor.complete(&request).map_err(|e| format!("extraction failed: {e}"))?;
            match parse_semantic_claims(&output, text) {
                Ok(result) => return Ok(result),
                Err(e) => {
                    log::warn!("claim extraction attempt {} rejected: {e}", attempt + 1);
                    last_error = e.to_string();
                }
            }
        }
        Err(format!("extraction unusable: {last_error}"))
    }

    fn qa_candidate(&self, task: &CurationTask, question: &str, index: usize) -> CandidateResponse {
        let sampling = self.options.sampling.for_candidate(index);
        let (aux, answer) = if self.options.two_round_qa {
            let describe = self.options.qa_description_prompt.replace("{question}", question);
            let first = ChatRequest::with_image(task.image.clone(), vec![Turn::user(describe.clone())], sampling);
            let description = match self.model.complete(&first) {
                Ok(d) => d,
                Err(e) => return CandidateResponse::incomplete(index, format!("description failed: {e}")),
            };
            let second = ChatRequest::with_image(
                task.image.clone(),
                vec![Turn::user(describe), Turn::assistant(description.clone()), Turn::user(question)],
                sampling,
            );
            (Some(description), self.model.complete(&second))
        } else {
            let only = ChatRequest::with_image(task.image.clone(), vec![Turn::user(question)], sampling);
            (None, self.model.complete(&only))
        };
        let answer = match answer {
            Ok(a) => a,
            Err(e) => {
                let mut c = CandidateResponse::incomplete(index, format!("answer failed: {e}"));
                c.aux_description = aux;
                return c;
            }
        };
        let source = match &aux {
            Some(c) => format!("{c}\n{answer}"),
            None => answer.clone(),
        };
        let extraction = match self.extract(&source) {
            Ok(r) => r,
            Err(reason) => {
                let mut c = CandidateResponse::incomplete(index, reason);
                c.text = answer;
                c.aux_description = aux;
                return c;
            }
        };
        let mut claims = extraction.claims.clone();
        if self.options.existence_in_qa {
            claims.extend(existence_claims(&source, self.lexicon));
        }
        self.finish(&task.image, index, answer, aux, claims, Some(extraction))
    }

    /// Question answering with an optional first round that describes the
    /// image; semantic claims come from the description and the answer.
    pub fn run_qa_branch(&self, task: &CurationTask) -> Result<Vec<CandidateResponse>, PipelineError> {
        task.validate()?;
        let question = match (task.kind, &task.question) {
            (TaskKind::Qa, Some(q)) => q.as_str(),
            _ => return Err(PipelineError::Precondition(format!("task {} is not a QA task", task.task_id))),
        };
        self.options.sampling.validate()?;
        Ok((0..self.options.sampling.n_candidates).map(|i| self.qa_candidate(task, question, i)).collect())
    }

    /// Runs the matching branch and builds the task's preference pairs.
    pub fn run_task(&self, task: &CurationTask) -> Result<TaskReport, PipelineError> {
        let candidates = match task.kind {
            TaskKind::Captioning => self.run_caption_branch(task)?,
            TaskKind::Qa => self.run_qa_branch(task)?,
        };
        let (pairs, pairing) =
            make_pairs(task, &self.options.pair_prompt(task), &candidates, &self.options.pairing);
        Ok(TaskReport { task: task.clone(), candidates, pairs, pairing })
    }
}

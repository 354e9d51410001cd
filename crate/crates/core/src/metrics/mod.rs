//! Hallucination metrics: CHAIR, Cover, Hal and Cog over captions, the
//! response- and mention-level rates of Object-HalBench, and
//! accuracy/precision/recall/F1 over yes/no questions.
//!
//! Every metric is generic over [`Ratio`](crate::scalar::Ratio) so it can be
//! evaluated exactly with rationals.

mod discriminative;
mod generative;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::claims::{extract_object_claims, ObjectLexicon};
use crate::fsio::{parse_jsonl, JsonlError};
use crate::scalar::Ratio;

pub use discriminative::{
    discriminative_metrics, DiscriminativeRecord, DiscriminativeReport, PositiveClass, QuestionCategory, ScoreSet, YesNo,
};
pub use generative::{
    generative_metrics, objhal_input, objhal_rates, split_sentences, ChairAggregation, GenerativeMetrics,
    ObjHalInput, ObjHalRates,
};
pub use report::{MetricReport, RawDiscriminativeRecord};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no annotation for image {0:?}")]
    UnknownImage(String),
    #[error("empty input")]
    EmptyInput,
    #[error("record {index}: {n_hallucinated} hallucinated mentions exceed {n_total} total")]
    InvalidCounts { index: usize, n_hallucinated: usize, n_total: usize },
    #[error("image {image_id}: {object:?} is not a canonical lexicon object")]
    NonCanonical { image_id: String, object: String },
    #[error("duplicate annotation for image {0:?}")]
    DuplicateImage(String),
    #[error("generation for image {0:?} has neither caption nor mentioned_objects")]
    MissingMentions(String),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

/// Ground truth for one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedImage {
    pub image_id: String,
    pub gt_objects: BTreeSet<String>,
    /// Objects human annotators flagged as likely hallucinations.
    #[serde(default)]
    pub hallucination_targets: BTreeSet<String>,
}

impl AnnotatedImage {
    pub fn new<S: Into<String>>(
        image_id: impl Into<String>,
        gt: impl IntoIterator<Item = S>,
        targets: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            image_id: image_id.into(),
            gt_objects: gt.into_iter().map(Into::into).collect(),
            hallucination_targets: targets.into_iter().map(Into::into).collect(),
        }
    }

    pub fn validate(&self, lexicon: &ObjectLexicon) -> Result<(), MetricsError> {
        for o in self.gt_objects.iter().chain(&self.hallucination_targets) {
            if !lexicon.contains(o) {
                return Err(MetricsError::NonCanonical { image_id: self.image_id.clone(), object: o.clone() });
            }
        }
        Ok(())
    }
}

pub type Annotations = BTreeMap<String, AnnotatedImage>;

/// Parses annotation JSON lines into a map keyed by image id.
pub fn parse_annotations(text: &str) -> Result<Annotations, MetricsError> {
    let mut out = Annotations::new();
    for a in parse_jsonl::<AnnotatedImage>(text)? {
        if out.contains_key(&a.image_id) {
            return Err(MetricsError::DuplicateImage(a.image_id));
        }
        out.insert(a.image_id.clone(), a);
    }
    Ok(out)
}

pub fn load_annotations(path: &Path) -> Result<Annotations, MetricsError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| MetricsError::Jsonl(JsonlError::Io(path.display().to_string(), e)))?;
    parse_annotations(&text)
}

/// Canonical objects a response mentions, in first-mention order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub image_id: String,
    pub mentioned_objects: Vec<String>,
}

impl GenerationRecord {
    pub fn new<S: Into<String>>(image_id: impl Into<String>, mentioned: impl IntoIterator<Item = S>) -> Self {
        let mut mentioned_objects: Vec<String> = Vec::new();
        for m in mentioned {
            let m = m.into();
            if !mentioned_objects.contains(&m) {
                mentioned_objects.push(m);
            }
        }
        Self { image_id: image_id.into(), mentioned_objects }
    }

    pub fn from_caption(image_id: impl Into<String>, caption: &str, lexicon: &ObjectLexicon) -> Self {
        Self { image_id: image_id.into(), mentioned_objects: extract_object_claims(caption, lexicon) }
    }

    fn mentioned_set(&self) -> BTreeSet<&str> {
        self.mentioned_objects.iter().map(String::as_str).collect()
    }
}

/// One line of a generations file: either a raw caption or pre-extracted
/// objects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationInput {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mentioned_objects: Option<Vec<String>>,
}

impl GenerationInput {
    pub fn to_record(&self, lexicon: &ObjectLexicon) -> Result<GenerationRecord, MetricsError> {
        match (&self.mentioned_objects, &self.caption) {
            (Some(m), _) => Ok(GenerationRecord::new(self.image_id.clone(), m.iter().cloned())),
            (None, Some(c)) => Ok(GenerationRecord::from_caption(self.image_id.clone(), c, lexicon)),
            (None, None) => Err(MetricsError::MissingMentions(self.image_id.clone())),
        }
    }
}

/// Mean of `values`, summed in sorted order so the result does not depend
/// on record order. Zero for an empty slice.
fn sorted_mean<R: Ratio>(mut values: Vec<R>) -> R {
    if values.is_empty() {
        return R::zero();
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("metric values are comparable"));
    let n = R::from_count(values.len());
    values.into_iter().fold(R::zero(), |acc, v| acc + v) / n
}

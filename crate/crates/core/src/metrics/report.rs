use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    discriminative_metrics, generative_metrics, objhal_input, objhal_rates, Annotations, ChairAggregation,
    DiscriminativeRecord, DiscriminativeReport, GenerationInput, GenerativeMetrics, MetricsError, ObjHalRates,
    PositiveClass, QuestionCategory, ScoreSet, YesNo,
};
use crate::claims::ObjectLexicon;
use crate::fsio::read_jsonl;
use crate::gateway::parse_binary;

/// A discriminative line as stored on disk: the prediction is the model's
/// raw reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDiscriminativeRecord {
    pub question_id: String,
    pub gt_answer: YesNo,
    pub pred: String,
    pub category: QuestionCategory,
}

impl RawDiscriminativeRecord {
    pub fn parse(&self) -> DiscriminativeRecord {
        DiscriminativeRecord {
            question_id: self.question_id.clone(),
            gt_answer: self.gt_answer,
            pred: parse_binary(&self.pred),
            category: self.category,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub generative: Option<GenerativeMetrics<f64>>,
    pub objhal: Option<ObjHalRates<f64>>,
    pub discriminative: Option<DiscriminativeReport<f64>>,
}

fn score_json(s: &ScoreSet<f64>) -> Value {
    json!({
        "accuracy": s.accuracy, "precision": s.precision, "recall": s.recall, "f1": s.f1,
        "n": s.n, "tp": s.tp, "fp": s.fp, "fn": s.fn_, "tn": s.tn, "unparseable": s.n_unparseable,
    })
}

impl MetricReport {
    /// Generative metrics and Object-HalBench rates for a generations file
    /// against its annotations. Lines carrying a caption also feed the rates.
    pub fn from_generations(
        inputs: &[GenerationInput],
        annotations: &Annotations,
        lexicon: &ObjectLexicon,
        aggregation: ChairAggregation,
    ) -> Result<Self, MetricsError> {
        let records = inputs.iter().map(|g| g.to_record(lexicon)).collect::<Result<Vec<_>, _>>()?;
        let generative = generative_metrics::<f64>(&records, annotations, aggregation)?;
        let mut per_response = Vec::new();
        for g in inputs {
            if let Some(caption) = &g.caption {
                let ann = annotations.get(&g.image_id).ok_or_else(|| MetricsError::UnknownImage(g.image_id.clone()))?;
                per_response.push(objhal_input(caption, ann, lexicon));
            }
        }
        let objhal = if per_response.is_empty() { None } else { Some(objhal_rates::<f64>(&per_response)?) };
        Ok(Self { generative: Some(generative), objhal, discriminative: None })
    }

    pub fn with_discriminative(
        mut self,
        records: &[RawDiscriminativeRecord],
        positive: PositiveClass,
    ) -> Result<Self, MetricsError> {
        let parsed: Vec<DiscriminativeRecord> = records.iter().map(RawDiscriminativeRecord::parse).collect();
        self.discriminative = Some(discriminative_metrics::<f64>(&parsed, positive)?);
        Ok(self)
    }

    /// Reads the files and evaluates everything present.
    pub fn evaluate_files(
        generations: Option<&Path>,
        annotations: Option<&Path>,
        discriminative: Option<&Path>,
        lexicon: &ObjectLexicon,
        aggregation: ChairAggregation,
        positive: PositiveClass,
    ) -> Result<Self, MetricsError> {
        let mut report = match (generations, annotations) {
            (Some(g), Some(a)) => {
                let anns = super::load_annotations(a)?;
                let inputs: Vec<GenerationInput> = read_jsonl(g)?;
                Self::from_generations(&inputs, &anns, lexicon, aggregation)?
            }
            _ => Self::default(),
        };
        if let Some(d) = discriminative {
            let raw: Vec<RawDiscriminativeRecord> = read_jsonl(d)?;
            report = report.with_discriminative(&raw, positive)?;
        }
        Ok(report)
    }

    pub fn to_json(&self) -> Value {
        let mut out = serde_json::Map::new();
        if let Some(g) = &self.generative {
            out.insert(
                "generative".into(),
                json!({
                    "chair": g.chair, "cover": g.cover, "hal": g.hal, "cog": g.cog,
                    "responses": g.n_responses, "hallucinating_responses": g.n_hallucinating,
                    "cog_undefined": g.cog_undefined, "chair_aggregation": g.aggregation,
                }),
            );
        }
        if let Some(o) = &self.objhal {
            out.insert(
                "object_halbench".into(),
                json!({"resp_rate": o.resp_rate, "ment_rate": o.ment_rate, "no_mentions": o.no_mentions}),
            );
        }
        if let Some(d) = &self.discriminative {
            let per: serde_json::Map<String, Value> = d
                .per_category
                .iter()
                .map(|(k, v)| (serde_json::to_value(k).unwrap().as_str().unwrap().to_string(), score_json(v)))
                .collect();
            out.insert(
                "discriminative".into(),
                json!({"positive_class": d.positive, "overall": score_json(&d.overall), "per_category": per}),
            );
        }
        Value::Object(out)
    }

    pub fn to_table(&self) -> String {
        let mut t = String::new();
        if let Some(g) = &self.generative {
            let _ = writeln!(t, "{:<12}{:>10}", "metric", "value");
            for (name, v) in [("CHAIR", g.chair), ("Cover", g.cover), ("Hal", g.hal), ("Cog", g.cog)] {
                let _ = writeln!(t, "{name:<12}{:>10.4}", v);
            }
            if g.cog_undefined {
                let _ = writeln!(t, "(Cog undefined: no response hallucinated)");
            }
        }
        if let Some(o) = &self.objhal {
            let _ = writeln!(t, "{:<12}{:>10.4}", "Resp.", o.resp_rate);
            let _ = writeln!(t, "{:<12}{:>10.4}", "Ment.", o.ment_rate);
        }
        if let Some(d) = &self.discriminative {
            if !t.is_empty() {
                t.push('\n');
            }
            let _ = writeln!(t, "{:<12}{:>10}{:>10}{:>10}{:>10}{:>6}", "slice", "acc", "prec", "recall", "f1", "n");
            let mut row = |name: &str, s: &ScoreSet<f64>| {
                let _ = writeln!(
                    t,
                    "{name:<12}{:>10.4}{:>10.4}{:>10.4}{:>10.4}{:>6}",
                    s.accuracy, s.precision, s.recall, s.f1, s.n
                );
            };
            row("overall", &d.overall);
            for (k, v) in &d.per_category {
                row(&format!("{k:?}").to_lowercase(), v);
            }
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::AnnotatedImage;

    #[test]
    fn report_json_and_table() {
        let lex = ObjectLexicon::coco();
        let anns: Annotations =
            [AnnotatedImage::new("i", ["dog", "frisbee"], ["cat"])].into_iter().map(|a| (a.image_id.clone(), a)).collect();
        let inputs = [GenerationInput { image_id: "i".into(), caption: Some("A dog and a cat.".into()), mentioned_objects: None }];
        let raw = [RawDiscriminativeRecord {
            question_id: "q1".into(),
            gt_answer: YesNo::No,
            pred: "No, there is none.".into(),
            category: QuestionCategory::Existence,
        }];
        let report = MetricReport::from_generations(&inputs, &anns, &lex, ChairAggregation::PerResponse)
            .unwrap()
            .with_discriminative(&raw, PositiveClass::Yes)
            .unwrap();
        let j = report.to_json();
        assert_eq!(j["generative"]["chair"], 0.5);
        assert_eq!(j["object_halbench"]["ment_rate"], 0.5);
        assert_eq!(j["discriminative"]["overall"]["accuracy"], 1.0);
        assert_eq!(j["discriminative"]["per_category"]["existence"]["n"], 1);
        let table = report.to_table();
        assert!(table.contains("CHAIR"));
        assert!(table.contains("overall"));
    }
}

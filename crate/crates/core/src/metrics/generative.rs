use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sorted_mean, AnnotatedImage, Annotations, GenerationRecord, MetricsError};
use crate::claims::{extract_object_mentions, ObjectLexicon};
use crate::scalar::Ratio;

/// How CHAIR is aggregated over a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChairAggregation {
    /// Mean of per-response `|H| / |mentioned|`.
    #[default]
    PerResponse,
    /// `Σ|H| / Σ|mentioned|` over the corpus.
    Corpus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeMetrics<R> {
    pub chair: R,
    pub cover: R,
    pub hal: R,
    pub cog: R,
    pub n_responses: usize,
    pub n_hallucinating: usize,
    /// No response hallucinated, so `cog` is reported as 0.
    pub cog_undefined: bool,
    pub aggregation: ChairAggregation,
}

impl<R: Ratio> GenerativeMetrics<R> {
    pub fn to_f64(&self) -> GenerativeMetrics<f64> {
        GenerativeMetrics {
            chair: self.chair.to_f64(),
            cover: self.cover.to_f64(),
            hal: self.hal.to_f64(),
            cog: self.cog.to_f64(),
            n_responses: self.n_responses,
            n_hallucinating: self.n_hallucinating,
            cog_undefined: self.cog_undefined,
            aggregation: self.aggregation,
        }
    }
}

struct Counts {
    mentioned: usize,
    hallucinated: usize,
    covered: usize,
    gt: usize,
    on_target: usize,
}

fn counts(record: &GenerationRecord, ann: &AnnotatedImage) -> Counts {
    let mentioned = record.mentioned_set();
    let gt = &ann.gt_objects;
    let hallucinated: Vec<&str> = mentioned.iter().copied().filter(|m| !gt.contains(*m)).collect();
    Counts {
        mentioned: mentioned.len(),
        hallucinated: hallucinated.len(),
        covered: mentioned.len() - hallucinated.len(),
        gt: gt.len(),
        on_target: hallucinated.iter().filter(|h| ann.hallucination_targets.contains(**h)).count(),
    }
}

/// CHAIR, Cover, Hal and Cog over a set of responses.
///
/// For a response with mentioned set `M` and hallucinated set `H = M \ gt`:
/// CHAIR is `|H|/|M|`, Cover is `|M ∩ gt|/|gt|`, Hal is `[|H| ≥ 1]`, and Cog
/// is `|H ∩ targets|/|H|` averaged over hallucinating responses only.
/// Empty denominators contribute 0.
pub fn generative_metrics<R: Ratio + Send>(
    records: &[GenerationRecord],
    annotations: &Annotations,
    aggregation: ChairAggregation,
) -> Result<GenerativeMetrics<R>, MetricsError> {
    let per: Vec<Counts> = records
        .par_iter()
        .map(|r| {
            annotations
                .get(&r.image_id)
                .map(|a| counts(r, a))
                .ok_or_else(|| MetricsError::UnknownImage(r.image_id.clone()))
        })
        .collect::<Result<_, _>>()?;

    let chair = match aggregation {
        ChairAggregation::PerResponse => {
            sorted_mean(per.iter().map(|c| R::ratio_or_zero(c.hallucinated, c.mentioned)).collect())
        }
        ChairAggregation::Corpus => R::ratio_or_zero(
            per.iter().map(|c| c.hallucinated).sum(),
            per.iter().map(|c| c.mentioned).sum(),
        ),
    };
    let cover = sorted_mean(per.iter().map(|c| R::ratio_or_zero(c.covered, c.gt)).collect());
    let n_hallucinating = per.iter().filter(|c| c.hallucinated > 0).count();
    let hal = R::ratio_or_zero(n_hallucinating, per.len());
    let cog = sorted_mean(
        per.iter()
            .filter(|c| c.hallucinated > 0)
            .map(|c| R::ratio_or_zero(c.on_target, c.hallucinated))
            .collect(),
    );
    Ok(GenerativeMetrics {
        chair,
        cover,
        hal,
        cog,
        n_responses: per.len(),
        n_hallucinating,
        cog_undefined: n_hallucinating == 0,
        aggregation,
    })
}

/// Per-response counts for the Object-HalBench rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjHalInput {
    pub n_hallucinated: usize,
    pub n_total: usize,
    pub has_hallucinated_sentence: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjHalRates<R> {
    pub resp_rate: R,
    pub ment_rate: R,
    /// No mentions at all, so `ment_rate` is reported as 0.
    pub no_mentions: bool,
}

impl<R: Ratio> ObjHalRates<R> {
    pub fn to_f64(&self) -> ObjHalRates<f64> {
        ObjHalRates { resp_rate: self.resp_rate.to_f64(), ment_rate: self.ment_rate.to_f64(), no_mentions: self.no_mentions }
    }
}

/// `resp_rate` is the share of responses with a hallucinated sentence;
/// `ment_rate` is `Σ n_hallucinated / Σ n_total`.
pub fn objhal_rates<R: Ratio>(per_response: &[ObjHalInput]) -> Result<ObjHalRates<R>, MetricsError> {
    let (mut hallucinated, mut total, mut flagged) = (0usize, 0usize, 0usize);
    for (index, r) in per_response.iter().enumerate() {
        if r.n_hallucinated > r.n_total {
            return Err(MetricsError::InvalidCounts { index, n_hallucinated: r.n_hallucinated, n_total: r.n_total });
        }
        hallucinated += r.n_hallucinated;
        total += r.n_total;
        flagged += usize::from(r.has_hallucinated_sentence);
    }
    Ok(ObjHalRates {
        resp_rate: R::ratio_or_zero(flagged, per_response.len()),
        ment_rate: R::ratio_or_zero(hallucinated, total),
        no_mentions: total == 0,
    })
}

/// Splits on `". "`, `"! "` and `"? "`, keeping the punctuation with its
/// sentence. Empty pieces are dropped.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for i in 0..bytes.len().saturating_sub(1) {
        if matches!(bytes[i], b'.' | b'!' | b'?') && bytes[i + 1] == b' ' {
            out.push(&text[start..=i]);
            start = i + 2;
        }
    }
    out.push(&text[start.min(text.len())..]);
    out.into_iter().map(str::trim).filter(|s| !s.is_empty()).collect()
}

/// Counts mention occurrences of a caption against its annotation. A
/// sentence is hallucinated when it mentions an object outside the ground
/// truth.
pub fn objhal_input(caption: &str, annotation: &AnnotatedImage, lexicon: &ObjectLexicon) -> ObjHalInput {
    let mut input = ObjHalInput { n_hallucinated: 0, n_total: 0, has_hallucinated_sentence: false };
    for sentence in split_sentences(caption) {
        let mentions = extract_object_mentions(sentence, lexicon);
        let bad = mentions.iter().filter(|m| !annotation.gt_objects.contains(&m.object)).count();
        input.n_total += mentions.len();
        input.n_hallucinated += bad;
        input.has_hallucinated_sentence |= bad > 0;
    }
    input
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    fn anns(list: Vec<AnnotatedImage>) -> Annotations {
        list.into_iter().map(|a| (a.image_id.clone(), a)).collect()
    }

    #[test]
    fn dog_cat_example() {
        let a = anns(vec![AnnotatedImage::new("i", ["dog", "frisbee"], ["cat"])]);
        let m: GenerativeMetrics<Rational64> =
            generative_metrics(&[GenerationRecord::new("i", ["dog", "cat"])], &a, ChairAggregation::PerResponse)
                .unwrap();
        assert_eq!((m.chair, m.cover, m.hal, m.cog), (r(1, 2), r(1, 2), r(1, 1), r(1, 1)));
        assert!(!m.cog_undefined);
    }

    #[test]
    fn grounded_and_empty_responses() {
        let a = anns(vec![AnnotatedImage::new("i", ["dog", "frisbee"], ["cat"])]);
        let m: GenerativeMetrics<Rational64> = generative_metrics(
            &[GenerationRecord::new("i", ["dog"]), GenerationRecord::new("i", Vec::<String>::new())],
            &a,
            ChairAggregation::PerResponse,
        )
        .unwrap();
        assert_eq!((m.chair, m.hal, m.cog), (r(0, 1), r(0, 1), r(0, 1)));
        assert_eq!(m.cover, r(1, 4));
        assert!(m.cog_undefined);
    }

    #[test]
    fn corpus_chair_differs_from_mean() {
        let a = anns(vec![AnnotatedImage::new("i", ["dog"], [])]);
        let recs = [GenerationRecord::new("i", ["cat"]), GenerationRecord::new("i", ["dog", "cup", "bed", "car"])];
        let mean: GenerativeMetrics<Rational64> = generative_metrics(&recs, &a, ChairAggregation::PerResponse).unwrap();
        let corpus: GenerativeMetrics<Rational64> = generative_metrics(&recs, &a, ChairAggregation::Corpus).unwrap();
        assert_eq!(mean.chair, r(7, 8));
        assert_eq!(corpus.chair, r(4, 5));
    }

    #[test]
    fn unknown_image_is_error() {
        let err = generative_metrics::<f64>(&[GenerationRecord::new("x", ["dog"])], &Annotations::new(), Default::default());
        assert!(matches!(err, Err(MetricsError::UnknownImage(_))));
    }

    #[test]
    fn objhal_examples() {
        let i = |h, t, s| ObjHalInput { n_hallucinated: h, n_total: t, has_hallucinated_sentence: s };
        let m: ObjHalRates<Rational64> = objhal_rates(&[i(1, 4, true), i(0, 3, false)]).unwrap();
        assert_eq!((m.resp_rate, m.ment_rate), (r(1, 2), r(1, 7)));
        let z: ObjHalRates<Rational64> = objhal_rates(&[i(0, 0, false)]).unwrap();
        assert_eq!((z.resp_rate, z.ment_rate, z.no_mentions), (r(0, 1), r(0, 1), true));
        let f: ObjHalRates<Rational64> = objhal_rates(&[i(3, 3, true)]).unwrap();
        assert_eq!((f.resp_rate, f.ment_rate), (r(1, 1), r(1, 1)));
        assert!(objhal_rates::<f64>(&[i(4, 3, true)]).is_err());
    }

    #[test]
    fn sentence_splitter() {
        assert_eq!(split_sentences("A dog. A cat! Why? Yes"), ["A dog.", "A cat!", "Why?", "Yes"]);
        assert_eq!(split_sentences("3.5 cats.Still one. "), ["3.5 cats.Still one."]);
        assert!(split_sentences("").is_empty());
    }

    #[test]
    fn objhal_from_caption() {
        let lex = ObjectLexicon::coco();
        let ann = AnnotatedImage::new("i", ["dog", "frisbee"], []);
        let input = objhal_input("A dog catches a frisbee. A cat and a dog watch.", &ann, &lex);
        assert_eq!(input, ObjHalInput { n_hallucinated: 1, n_total: 4, has_hallucinated_sentence: true });
    }
}

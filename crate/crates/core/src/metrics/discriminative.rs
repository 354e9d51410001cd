use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::gateway::BinaryAnswer;
use crate::scalar::Ratio;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum YesNo {
    Yes,
    No,
}

impl From<YesNo> for BinaryAnswer {
    fn from(v: YesNo) -> Self {
        match v {
            YesNo::Yes => BinaryAnswer::Yes,
            YesNo::No => BinaryAnswer::No,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionCategory {
    Existence,
    Attribute,
    Relation,
}

/// Which answer counts as the positive class for precision and recall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositiveClass {
    #[default]
    Yes,
    /// Hallucination benchmarks built from negative questions score "No" as
    /// the positive class.
    No,
}

impl PositiveClass {
    fn answer(self) -> BinaryAnswer {
        match self {
            PositiveClass::Yes => BinaryAnswer::Yes,
            PositiveClass::No => BinaryAnswer::No,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminativeRecord {
    pub question_id: String,
    pub gt_answer: YesNo,
    pub pred: BinaryAnswer,
    pub category: QuestionCategory,
}

/// Confusion counts and the derived scores for one slice of records.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet<R> {
    pub accuracy: R,
    pub precision: R,
    pub recall: R,
    pub f1: R,
    pub n: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub n_unparseable: usize,
}

impl<R: Ratio> ScoreSet<R> {
    fn from_counts(c: &Confusion) -> Self {
        let precision = R::ratio_or_zero(c.tp, c.tp + c.fp);
        let recall = R::ratio_or_zero(c.tp, c.tp + c.fn_);
        let sum = precision.clone() + recall.clone();
        let f1 = if sum == R::zero() {
            R::zero()
        } else {
            R::from_count(2) * precision.clone() * recall.clone() / sum
        };
        Self {
            accuracy: R::ratio_or_zero(c.correct, c.n),
            precision,
            recall,
            f1,
            n: c.n,
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            tn: c.tn,
            n_unparseable: c.unparseable,
        }
    }

    pub fn to_f64(&self) -> ScoreSet<f64> {
        ScoreSet {
            accuracy: self.accuracy.to_f64(),
            precision: self.precision.to_f64(),
            recall: self.recall.to_f64(),
            f1: self.f1.to_f64(),
            n: self.n,
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
            tn: self.tn,
            n_unparseable: self.n_unparseable,
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Confusion {
    n: usize,
    correct: usize,
    tp: usize,
    fp: usize,
    fn_: usize,
    tn: usize,
    unparseable: usize,
}

impl Confusion {
    fn add(&mut self, r: &DiscriminativeRecord, positive: BinaryAnswer) {
        let truth = BinaryAnswer::from(r.gt_answer);
        self.n += 1;
        self.correct += usize::from(r.pred == truth);
        self.unparseable += usize::from(r.pred == BinaryAnswer::Unparseable);
        match (r.pred == positive, truth == positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminativeReport<R> {
    pub positive: PositiveClass,
    pub overall: ScoreSet<R>,
    pub per_category: BTreeMap<QuestionCategory, ScoreSet<R>>,
}

impl<R: Ratio> DiscriminativeReport<R> {
    pub fn to_f64(&self) -> DiscriminativeReport<f64> {
        DiscriminativeReport {
            positive: self.positive,
            overall: self.overall.to_f64(),
            per_category: self.per_category.iter().map(|(k, v)| (*k, v.to_f64())).collect(),
        }
    }
}

/// Accuracy, precision, recall and F1, overall and per category.
///
/// An unparseable prediction is always wrong for accuracy and never a
/// positive prediction. Zero denominators give 0, as does F1 when
/// precision and recall are both 0.
pub fn discriminative_metrics<R: Ratio>(
    records: &[DiscriminativeRecord],
    positive: PositiveClass,
) -> Result<DiscriminativeReport<R>, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let pos = positive.answer();
    let mut overall = Confusion::default();
    let mut per: BTreeMap<QuestionCategory, Confusion> = BTreeMap::new();
    for r in records {
        overall.add(r, pos);
        per.entry(r.category).or_default().add(r, pos);
    }
    Ok(DiscriminativeReport {
        positive,
        overall: ScoreSet::from_counts(&overall),
        per_category: per.iter().map(|(k, c)| (*k, ScoreSet::from_counts(c))).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    fn rec(gt: YesNo, pred: BinaryAnswer, category: QuestionCategory) -> DiscriminativeRecord {
        DiscriminativeRecord { question_id: "q".into(), gt_answer: gt, pred, category }
    }

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn perfect_predictions() {
        let recs = [
            rec(YesNo::Yes, BinaryAnswer::Yes, QuestionCategory::Existence),
            rec(YesNo::No, BinaryAnswer::No, QuestionCategory::Relation),
        ];
        let m: DiscriminativeReport<Rational64> = discriminative_metrics(&recs, PositiveClass::Yes).unwrap();
        let o = &m.overall;
        assert_eq!((o.accuracy, o.precision, o.recall, o.f1), (r(1, 1), r(1, 1), r(1, 1), r(1, 1)));
        assert_eq!(m.per_category.len(), 2);
    }

    #[test]
    fn two_tp_one_fp_one_fn() {
        let c = QuestionCategory::Attribute;
        let recs = [
            rec(YesNo::Yes, BinaryAnswer::Yes, c),
            rec(YesNo::Yes, BinaryAnswer::Yes, c),
            rec(YesNo::No, BinaryAnswer::Yes, c),
            rec(YesNo::Yes, BinaryAnswer::No, c),
        ];
        let m: DiscriminativeReport<Rational64> = discriminative_metrics(&recs, PositiveClass::Yes).unwrap();
        let o = &m.overall;
        assert_eq!((o.precision, o.recall, o.f1), (r(2, 3), r(2, 3), r(2, 3)));
        assert_eq!(o.accuracy, r(1, 2));
    }

    #[test]
    fn all_negative_questions_recall_equals_accuracy() {
        let c = QuestionCategory::Existence;
        let recs = [
            rec(YesNo::No, BinaryAnswer::No, c),
            rec(YesNo::No, BinaryAnswer::No, c),
            rec(YesNo::No, BinaryAnswer::Yes, c),
            rec(YesNo::No, BinaryAnswer::Unparseable, c),
        ];
        let m: DiscriminativeReport<Rational64> = discriminative_metrics(&recs, PositiveClass::No).unwrap();
        assert_eq!(m.overall.recall, m.overall.accuracy);
        assert_eq!(m.overall.accuracy, r(1, 2));
        // With "Yes" as positive there are no positives to recall.
        let y: DiscriminativeReport<Rational64> = discriminative_metrics(&recs, PositiveClass::Yes).unwrap();
        assert_eq!(y.overall.recall, r(0, 1));
        assert_eq!(y.overall.f1, r(0, 1));
    }

    #[test]
    fn unparseable_is_wrong_and_negative() {
        let recs = [rec(YesNo::Yes, BinaryAnswer::Unparseable, QuestionCategory::Existence)];
        let m: DiscriminativeReport<Rational64> = discriminative_metrics(&recs, PositiveClass::Yes).unwrap();
        assert_eq!((m.overall.accuracy, m.overall.fn_, m.overall.n_unparseable), (r(0, 1), 1, 1));
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(discriminative_metrics::<f64>(&[], PositiveClass::Yes), Err(MetricsError::EmptyInput)));
    }
}

//! Monte Carlo model of self-consistency ranking.
//!
//! Each simulated candidate carries some claims, each independently
//! hallucinated or grounded. A noisy probe answers every claim with a
//! per-category precision, and the candidate's `K` is computed with the
//! curation pipeline's own scoring. The question is how often ranking by
//! observed `K` agrees with ranking by the true hallucination count.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::claims::ClaimCategory;
use crate::pipeline::{score, BinaryProbe};

pub const PRESETS_JSON: &str = include_str!("../resources/sim_presets.json");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("cannot parse parameters: {0}")]
    Parse(String),
}

/// Inclusive range of claims per response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRange {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoisyModelParams {
    pub claim_hallucination_prob: f64,
    pub claims_per_response: ClaimRange,
    /// Probability of answering "No" to a hallucinated claim.
    pub neg_answer_precision: BTreeMap<ClaimCategory, f64>,
    /// Probability of answering "Yes" to a grounded claim.
    pub pos_answer_precision: BTreeMap<ClaimCategory, f64>,
    /// Categories claims are drawn from, uniformly.
    pub categories: Vec<ClaimCategory>,
    pub seed: u64,
}

fn prob_ok(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl NoisyModelParams {
    pub fn presets() -> BTreeMap<String, NoisyModelParams> {
        serde_json::from_str(PRESETS_JSON).expect("bundled presets parse")
    }

    pub fn preset(name: &str) -> Result<Self, SimError> {
        Self::presets().remove(name).ok_or_else(|| SimError::UnknownPreset(name.to_string()))
    }

    /// Existence-only claims with the answer precisions measured by hand.
    pub fn measured() -> Self {
        Self::preset("measured").expect("bundled preset")
    }

    pub fn noiseless() -> Self {
        Self::preset("noiseless").expect("bundled preset")
    }

    /// Every answer is a fair coin.
    pub fn coin() -> Self {
        Self::preset("coin").expect("bundled preset")
    }

    /// Draws claims from existence, relation and attribute categories.
    pub fn three_category(mut self) -> Self {
        self.categories = vec![ClaimCategory::Existence, ClaimCategory::Relation, ClaimCategory::Attribute];
        self
    }

    /// Sets the same negative and positive precision for every category.
    pub fn with_uniform_precision(mut self, neg: f64, pos: f64) -> Self {
        for v in self.neg_answer_precision.values_mut() {
            *v = neg;
        }
        for v in self.pos_answer_precision.values_mut() {
            *v = pos;
        }
        self
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let p: Self = serde_json::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidParams(m));
        if !prob_ok(self.claim_hallucination_prob) {
            return bad(format!("claim_hallucination_prob {} outside [0, 1]", self.claim_hallucination_prob));
        }
        if self.claims_per_response.min > self.claims_per_response.max {
            return bad("claims_per_response range is empty".into());
        }
        if self.categories.is_empty() {
            return bad("no claim categories".into());
        }
        for c in &self.categories {
            for (name, map) in [("neg", &self.neg_answer_precision), ("pos", &self.pos_answer_precision)] {
                match map.get(c) {
                    Some(p) if prob_ok(*p) => {}
                    Some(p) => return bad(format!("{name} precision {p} for {c:?} outside [0, 1]")),
                    None => return bad(format!("no {name} precision for {c:?}")),
                }
            }
        }
        Ok(())
    }
}

/// Source of the random choices a trial makes. Tests can script it to walk
/// every outcome.
pub trait DrawSource {
    /// `true` with probability `p`.
    fn bernoulli(&mut self, p: f64) -> bool;
    /// Uniform index in `0..n`, `n > 0`.
    fn index(&mut self, n: usize) -> usize;
}

impl DrawSource for ChaCha8Rng {
    fn bernoulli(&mut self, p: f64) -> bool {
        self.random::<f64>() < p
    }

    fn index(&mut self, n: usize) -> usize {
        self.random_range(0..n)
    }
}

/// One simulated claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimClaim {
    pub category: ClaimCategory,
    pub hallucinated: bool,
    pub answered_no: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub true_hallucination_counts: Vec<u32>,
    pub observed_k: Vec<u32>,
    /// One entry per pair `i < j` with distinct true counts: did the
    /// truly better candidate get a strictly smaller `K`?
    pub pair_correct: Vec<bool>,
    /// Aligned with `pair_correct`: was observed `K` tied?
    pub pair_observed_tie: Vec<bool>,
}

fn sample_candidate<D: DrawSource>(params: &NoisyModelParams, draws: &mut D) -> Vec<SimClaim> {
    let ClaimRange { min, max } = params.claims_per_response;
    let n = if min == max { min } else { min + draws.index(max - min + 1) };
    (0..n)
        .map(|_| {
            let category = if params.categories.len() == 1 {
                params.categories[0]
            } else {
                params.categories[draws.index(params.categories.len())]
            };
            let hallucinated = draws.bernoulli(params.claim_hallucination_prob);
            let answered_no = if hallucinated {
                draws.bernoulli(params.neg_answer_precision[&category])
            } else {
                !draws.bernoulli(params.pos_answer_precision[&category])
            };
            SimClaim { category, hallucinated, answered_no }
        })
        .collect()
}

/// Observed `K` for simulated claims, through the pipeline's scoring.
pub fn observed_k(claims: &[SimClaim]) -> u32 {
    let probes: Vec<BinaryProbe> = claims
        .iter()
        .enumerate()
        .map(|(i, c)| BinaryProbe::new(format!("Is claim {i} true?"), if c.answered_no { "No" } else { "Yes" }, c.category))
        .collect();
    score(&probes).k_no
}

/// Compares candidates pairwise given true counts and observed `K`.
pub fn judge_pairs(true_counts: &[u32], observed: &[u32]) -> (Vec<bool>, Vec<bool>) {
    let (mut correct, mut tie) = (Vec::new(), Vec::new());
    for i in 0..true_counts.len() {
        for j in i + 1..true_counts.len() {
            if true_counts[i] == true_counts[j] {
                continue;
            }
            let (better, worse) = if true_counts[i] < true_counts[j] { (i, j) } else { (j, i) };
            correct.push(observed[better] < observed[worse]);
            tie.push(observed[better] == observed[worse]);
        }
    }
    (correct, tie)
}

/// Simulates one task with `n_candidates` candidates.
///
/// Panics if `n_candidates < 2`; parameters are assumed validated.
pub fn simulate_task<D: DrawSource>(params: &NoisyModelParams, n_candidates: usize, draws: &mut D) -> TrialOutcome {
    assert!(n_candidates >= 2, "need at least two candidates");
    let candidates: Vec<Vec<SimClaim>> = (0..n_candidates).map(|_| sample_candidate(params, draws)).collect();
    let true_hallucination_counts: Vec<u32> =
        candidates.iter().map(|c| c.iter().filter(|x| x.hallucinated).count() as u32).collect();
    let observed: Vec<u32> = candidates.iter().map(|c| observed_k(c)).collect();
    let (pair_correct, pair_observed_tie) = judge_pairs(&true_hallucination_counts, &observed);
    TrialOutcome { true_hallucination_counts, observed_k: observed, pair_correct, pair_observed_tie }
}

/// Generator for trial `t`: seeded with `seed + t`, so results do not depend
/// on scheduling.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// Correct pairs among pairs that differ in both true count and
    /// observed `K`.
    pub accuracy: f64,
    /// Correct pairs among all pairs that differ in true count; an observed
    /// tie counts as wrong.
    pub strict_accuracy: f64,
    /// Binomial standard error of `accuracy`.
    pub standard_error: f64,
    pub trials: u64,
    pub n_pairs: u64,
    pub n_decisive: u64,
    pub n_correct: u64,
    pub n_observed_ties: u64,
}

impl AccuracyReport {
    fn from_counts(trials: u64, n_pairs: u64, n_correct: u64, n_ties: u64) -> Self {
        let n_decisive = n_pairs - n_ties;
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let accuracy = ratio(n_correct, n_decisive);
        let standard_error =
            if n_decisive == 0 { 0.0 } else { (accuracy * (1.0 - accuracy) / n_decisive as f64).sqrt() };
        Self {
            accuracy,
            strict_accuracy: ratio(n_correct, n_pairs),
            standard_error,
            trials,
            n_pairs,
            n_decisive,
            n_correct,
            n_observed_ties: n_ties,
        }
    }
}

/// Runs `n_trials` seeded trials in parallel and reports how often observed
/// `K` orders pairs the same way as the true hallucination counts.
pub fn pairwise_ranking_accuracy(
    params: &NoisyModelParams,
    n_candidates: usize,
    n_trials: u64,
) -> Result<AccuracyReport, SimError> {
    params.validate()?;
    if n_candidates < 2 {
        return Err(SimError::InvalidParams("n_candidates must be at least 2".into()));
    }
    if n_trials == 0 {
        return Err(SimError::InvalidParams("n_trials must be positive".into()));
    }
    let (pairs, correct, ties) = (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let o = simulate_task(params, n_candidates, &mut trial_rng(params.seed, t));
            let correct = o.pair_correct.iter().filter(|c| **c).count() as u64;
            let ties = o.pair_observed_tie.iter().filter(|c| **c).count() as u64;
            (o.pair_correct.len() as u64, correct, ties)
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    Ok(AccuracyReport::from_counts(n_trials, pairs, correct, ties))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub neg_precision: f64,
    pub report: AccuracyReport,
}

/// Accuracy as every category's negative precision is set to each value in
/// turn. All points share the base seed.
pub fn neg_precision_sweep(
    params: &NoisyModelParams,
    n_candidates: usize,
    n_trials: u64,
    values: &[f64],
) -> Result<Vec<SweepPoint>, SimError> {
    values
        .iter()
        .map(|&v| {
            let mut p = params.clone();
            for x in p.neg_answer_precision.values_mut() {
                *x = v;
            }
            Ok(SweepPoint { neg_precision: v, report: pairwise_ranking_accuracy(&p, n_candidates, n_trials)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_load_and_validate() {
        let presets = NoisyModelParams::presets();
        assert_eq!(presets.len(), 3);
        for p in presets.values() {
            p.validate().unwrap();
        }
        let f = NoisyModelParams::measured();
        assert_eq!(f.neg_answer_precision[&ClaimCategory::Relation], 0.77);
        assert_eq!(f.pos_answer_precision[&ClaimCategory::Attribute], 0.82);
        assert_eq!(f.categories, [ClaimCategory::Existence]);
        assert_eq!(f.three_category().categories.len(), 3);
        assert!(NoisyModelParams::preset("nope").is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = NoisyModelParams::measured();
        p.claim_hallucination_prob = 1.5;
        assert!(p.validate().is_err());
        let mut p = NoisyModelParams::measured();
        p.claims_per_response = ClaimRange { min: 4, max: 2 };
        assert!(p.validate().is_err());
        let mut p = NoisyModelParams::measured();
        p.categories = vec![ClaimCategory::Knowledge];
        assert!(p.validate().is_err());
        assert!(pairwise_ranking_accuracy(&NoisyModelParams::measured(), 1, 10).is_err());
    }

    #[test]
    fn noiseless_observed_equals_truth() {
        let p = NoisyModelParams::noiseless();
        for t in 0..200 {
            let o = simulate_task(&p, 3, &mut trial_rng(7, t));
            assert_eq!(o.observed_k, o.true_hallucination_counts);
            assert!(o.pair_correct.iter().all(|c| *c));
        }
        let r = pairwise_ranking_accuracy(&p, 3, 2000).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.strict_accuracy, 1.0);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let p = NoisyModelParams::measured().three_category();
        let a: Vec<_> = (0..50).map(|t| simulate_task(&p, 4, &mut trial_rng(p.seed, t))).collect();
        let b: Vec<_> = (0..50).map(|t| simulate_task(&p, 4, &mut trial_rng(p.seed, t))).collect();
        assert_eq!(a, b);
        let r1 = pairwise_ranking_accuracy(&p, 3, 500).unwrap();
        let r2 = pairwise_ranking_accuracy(&p, 3, 500).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn judge_skips_true_ties() {
        let (c, t) = judge_pairs(&[1, 1, 3], &[0, 2, 2]);
        assert_eq!(c, [true, false]);
        assert_eq!(t, [false, true]);
    }
}

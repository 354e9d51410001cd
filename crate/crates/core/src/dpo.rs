//! Direct Preference Optimization loss kernel.
//!
//! Operates on sequence log-probabilities supplied by an external trainer.
//! The per-pair loss is `-ln σ(β·Δ)` where
//! `Δ = (pol_chosen - ref_chosen) - (pol_rejected - ref_rejected)`,
//! evaluated as `softplus(-β·Δ)`.

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{pairwise_mean, sigmoid, softplus};

/// β used when a caller does not specify one.
pub const DEFAULT_BETA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DpoError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("log-probability {field} = {value} is positive")]
    PositiveLogProb { field: &'static str, value: f64 },
    #[error("beta must be positive and finite, got {0}")]
    InvalidBeta(f64),
    #[error("empty batch")]
    EmptyBatch,
    #[error("length normalisation requires token lengths on pair {0}")]
    MissingLength(usize),
}

/// Loss configuration.
///
/// `test_mode` admits `beta = 0` and log-probabilities above zero, which the
/// kernel otherwise rejects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpoConfig<F> {
    pub beta: F,
    pub test_mode: bool,
}

impl<F: Float> DpoConfig<F> {
    pub fn new(beta: F) -> Result<Self, DpoError> {
        if !beta.is_finite() || beta <= F::zero() {
            return Err(DpoError::InvalidBeta(beta.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(Self { beta, test_mode: false })
    }

    /// Relaxed configuration for degenerate-case tests.
    pub fn for_testing(beta: F) -> Result<Self, DpoError> {
        if !beta.is_finite() || beta < F::zero() {
            return Err(DpoError::InvalidBeta(beta.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(Self { beta, test_mode: true })
    }
}

impl<F: Float> Default for DpoConfig<F> {
    fn default() -> Self {
        Self {
            beta: F::from(DEFAULT_BETA).expect("default beta representable"),
            test_mode: false,
        }
    }
}

/// Sequence log-probabilities (nats) of one preference pair under the policy
/// and the frozen reference model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairLogProbs<F> {
    pub pol_chosen: F,
    pub ref_chosen: F,
    pub pol_rejected: F,
    pub ref_rejected: F,
}

impl<F: Float> PairLogProbs<F> {
    pub fn new(pol_chosen: F, ref_chosen: F, pol_rejected: F, ref_rejected: F) -> Self {
        Self { pol_chosen, ref_chosen, pol_rejected, ref_rejected }
    }

    fn fields(&self) -> [(&'static str, F); 4] {
        [
            ("pol_chosen", self.pol_chosen),
            ("ref_chosen", self.ref_chosen),
            ("pol_rejected", self.pol_rejected),
            ("ref_rejected", self.ref_rejected),
        ]
    }

    /// Checks finiteness, and non-positivity unless `relaxed`.
    pub fn validate(&self, relaxed: bool) -> Result<(), DpoError> {
        for (name, v) in self.fields() {
            if !v.is_finite() {
                return Err(DpoError::NonFinite(name));
            }
            if !relaxed && v > F::zero() {
                return Err(DpoError::PositiveLogProb {
                    field: name,
                    value: v.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(())
    }

    /// The same pair with chosen and rejected exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            pol_chosen: self.pol_rejected,
            ref_chosen: self.ref_rejected,
            pol_rejected: self.pol_chosen,
            ref_rejected: self.ref_chosen,
        }
    }
}

/// Implicit reward margin `Δ`.
pub fn dpo_margin<F: Float>(lp: &PairLogProbs<F>) -> Result<F, DpoError> {
    lp.validate(true)?;
    let margin = (lp.pol_chosen - lp.ref_chosen) - (lp.pol_rejected - lp.ref_rejected);
    if !margin.is_finite() {
        return Err(DpoError::NonFinite("margin"));
    }
    Ok(margin)
}

/// Loss as a function of a precomputed margin.
pub fn loss_from_margin<F: Float>(margin: F, beta: F) -> F {
    softplus(-(beta * margin))
}

/// `d loss / d Δ = -β·σ(-β·Δ)`.
pub fn grad_from_margin<F: Float>(margin: F, beta: F) -> F {
    -beta * sigmoid(-(beta * margin))
}

pub fn dpo_loss<F: Float>(lp: &PairLogProbs<F>, cfg: &DpoConfig<F>) -> Result<F, DpoError> {
    check_config(cfg)?;
    lp.validate(cfg.test_mode)?;
    Ok(loss_from_margin(dpo_margin(lp)?, cfg.beta))
}

pub fn dpo_grad_margin<F: Float>(lp: &PairLogProbs<F>, cfg: &DpoConfig<F>) -> Result<F, DpoError> {
    check_config(cfg)?;
    lp.validate(cfg.test_mode)?;
    Ok(grad_from_margin(dpo_margin(lp)?, cfg.beta))
}

/// Mean per-pair loss over a batch.
///
/// Per-pair losses are sorted before pairwise summation, so the result is
/// bit-identical under any permutation of the batch.
pub fn dpo_loss_batch<F: Float>(batch: &[PairLogProbs<F>], cfg: &DpoConfig<F>) -> Result<F, DpoError> {
    if batch.is_empty() {
        return Err(DpoError::EmptyBatch);
    }
    let mut losses = batch
        .iter()
        .map(|lp| dpo_loss(lp, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    losses.sort_by(|a, b| a.partial_cmp(b).expect("losses are finite"));
    Ok(pairwise_mean(&losses))
}

fn check_config<F: Float>(cfg: &DpoConfig<F>) -> Result<(), DpoError> {
    let ok = cfg.beta.is_finite()
        && (cfg.beta > F::zero() || (cfg.test_mode && cfg.beta == F::zero()));
    if ok {
        Ok(())
    } else {
        Err(DpoError::InvalidBeta(cfg.beta.to_f64().unwrap_or(f64::NAN)))
    }
}

/// One line of a batch log-probability file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogProbRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<String>,
    pub pol_chosen: f64,
    pub ref_chosen: f64,
    pub pol_rejected: f64,
    pub ref_rejected: f64,
    /// Token count of the chosen response, needed for length normalisation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub len_chosen: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub len_rejected: Option<u32>,
}

impl LogProbRecord {
    /// Converts to kernel input, optionally dividing each side by its
    /// token count.
    pub fn to_log_probs(&self, index: usize, length_normalize: bool) -> Result<PairLogProbs<f64>, DpoError> {
        if !length_normalize {
            return Ok(PairLogProbs::new(
                self.pol_chosen,
                self.ref_chosen,
                self.pol_rejected,
                self.ref_rejected,
            ));
        }
        let (lc, lr) = match (self.len_chosen, self.len_rejected) {
            (Some(c), Some(r)) if c > 0 && r > 0 => (f64::from(c), f64::from(r)),
            _ => return Err(DpoError::MissingLength(index)),
        };
        Ok(PairLogProbs::new(
            self.pol_chosen / lc,
            self.ref_chosen / lc,
            self.pol_rejected / lr,
            self.ref_rejected / lr,
        ))
    }
}

/// Per-pair and aggregate loss figures for a batch file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossReport {
    pub beta: f64,
    pub length_normalized: bool,
    pub pairs: Vec<PairLoss>,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairLoss {
    pub pair_id: String,
    pub margin: f64,
    pub loss: f64,
    pub grad_margin: f64,
}

pub fn loss_report(
    records: &[LogProbRecord],
    cfg: &DpoConfig<f64>,
    length_normalize: bool,
) -> Result<LossReport, DpoError> {
    let batch = records
        .iter()
        .enumerate()
        .map(|(i, r)| r.to_log_probs(i, length_normalize))
        .collect::<Result<Vec<_>, _>>()?;
    let mean_loss = dpo_loss_batch(&batch, cfg)?;
    let pairs = records
        .iter()
        .zip(&batch)
        .enumerate()
        .map(|(i, (rec, lp))| {
            Ok(PairLoss {
                pair_id: rec.pair_id.clone().unwrap_or_else(|| i.to_string()),
                margin: dpo_margin(lp)?,
                loss: dpo_loss(lp, cfg)?,
                grad_margin: dpo_grad_margin(lp, cfg)?,
            })
        })
        .collect::<Result<Vec<_>, DpoError>>()?;
    Ok(LossReport { beta: cfg.beta, length_normalized: length_normalize, pairs, mean_loss })
}

#[cfg(test)]
mod tests {
    use super::*;

    // -ln σ(0.2), evaluated with 50-digit arithmetic.
    const LOSS_DELTA2_BETA01: f64 = 0.598_138_869_381_591_8;
    // softplus(50) = 50 + 1.928749847963917783e-22
    const SOFTPLUS_50: f64 = 50.0;

    fn lp(a: f64, b: f64, c: f64, d: f64) -> PairLogProbs<f64> {
        PairLogProbs::new(a, b, c, d)
    }

    #[test]
    fn margin_examples() {
        assert_eq!(dpo_margin(&lp(-3.0, -3.0, -3.0, -3.0)).unwrap(), 0.0);
        assert_eq!(dpo_margin(&lp(-1.0, -2.0, -4.0, -3.0)).unwrap(), 2.0);
        let p = lp(-1.0, -2.0, -4.0, -3.0);
        assert_eq!(dpo_margin(&p.swapped()).unwrap(), -2.0);
    }

    #[test]
    fn margin_rejects_non_finite() {
        assert_eq!(
            dpo_margin(&lp(f64::NAN, -1.0, -1.0, -1.0)),
            Err(DpoError::NonFinite("pol_chosen"))
        );
        assert!(dpo_margin(&lp(-1.0, f64::NEG_INFINITY, -1.0, -1.0)).is_err());
    }

    #[test]
    fn loss_zero_margin_is_ln2() {
        for beta in [0.01, 0.1, 1.0, 7.5] {
            let cfg = DpoConfig::new(beta).unwrap();
            let l = dpo_loss(&lp(-2.0, -2.0, -5.0, -5.0), &cfg).unwrap();
            assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_matches_high_precision_fixture() {
        let cfg = DpoConfig::new(0.1).unwrap();
        let l = dpo_loss(&lp(-1.0, -2.0, -4.0, -3.0), &cfg).unwrap();
        assert!((l - LOSS_DELTA2_BETA01).abs() < 1e-15, "{l}");
    }

    #[test]
    fn loss_large_negative_margin_no_overflow() {
        let cfg = DpoConfig::for_testing(1.0).unwrap();
        let l = dpo_loss(&lp(-50.0, 0.0, 0.0, 0.0), &cfg).unwrap();
        assert_eq!(l, SOFTPLUS_50);
        assert!(l.is_finite());
    }

    #[test]
    fn positive_log_prob_rejected_outside_test_mode() {
        let cfg = DpoConfig::new(0.1).unwrap();
        assert!(matches!(
            dpo_loss(&lp(0.5, -1.0, -1.0, -1.0), &cfg),
            Err(DpoError::PositiveLogProb { field: "pol_chosen", .. })
        ));
        let relaxed = DpoConfig::for_testing(0.1).unwrap();
        assert!(dpo_loss(&lp(0.5, -1.0, -1.0, -1.0), &relaxed).is_ok());
    }

    #[test]
    fn beta_validation() {
        assert!(DpoConfig::new(0.0).is_err());
        assert!(DpoConfig::new(-1.0).is_err());
        assert!(DpoConfig::new(f64::INFINITY).is_err());
        assert!(DpoConfig::for_testing(0.0).is_ok());
        assert_eq!(DpoConfig::<f64>::default().beta, DEFAULT_BETA);
    }

    #[test]
    fn gradient_examples() {
        let cfg = DpoConfig::new(1.0).unwrap();
        assert_eq!(dpo_grad_margin(&lp(-1.0, -1.0, -1.0, -1.0), &cfg).unwrap(), -0.5);
        let zero = DpoConfig::for_testing(0.0).unwrap();
        for d in [-10.0, 0.0, 3.0] {
            assert_eq!(grad_from_margin(d, zero.beta), 0.0);
            assert_eq!(dpo_grad_margin(&lp(d, 0.0, 0.0, 0.0), &zero).unwrap(), 0.0);
        }
    }

    #[test]
    fn batch_examples() {
        let cfg = DpoConfig::new(0.1).unwrap();
        let p = lp(-1.0, -2.0, -4.0, -3.0);
        let single = dpo_loss(&p, &cfg).unwrap();
        assert_eq!(dpo_loss_batch(&[p, p], &cfg).unwrap(), single);
        let zeros = vec![lp(-1.0, -1.0, -2.0, -2.0); 5];
        assert!((dpo_loss_batch(&zeros, &cfg).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(dpo_loss_batch::<f64>(&[], &cfg), Err(DpoError::EmptyBatch));
    }

    #[test]
    fn batch_is_permutation_invariant_bitwise() {
        let cfg = DpoConfig::new(0.3).unwrap();
        let batch: Vec<_> = (0..37)
            .map(|i| {
                let x = f64::from(i);
                lp(-x * 0.37 - 0.1, -x * 0.11 - 0.2, -(x * 1.7) % 5.0 - 0.3, -x * 0.05 - 0.4)
            })
            .collect();
        let forward = dpo_loss_batch(&batch, &cfg).unwrap();
        let mut reversed = batch.clone();
        reversed.reverse();
        let mut rotated = batch.clone();
        rotated.rotate_left(11);
        assert_eq!(forward.to_bits(), dpo_loss_batch(&reversed, &cfg).unwrap().to_bits());
        assert_eq!(forward.to_bits(), dpo_loss_batch(&rotated, &cfg).unwrap().to_bits());
    }

    #[test]
    fn generic_over_f32() {
        let cfg = DpoConfig::<f32>::new(0.1).unwrap();
        let l = dpo_loss(&PairLogProbs::new(-1.0f32, -2.0, -4.0, -3.0), &cfg).unwrap();
        assert!((f64::from(l) - LOSS_DELTA2_BETA01).abs() < 1e-6);
    }

    #[test]
    fn length_normalisation() {
        let rec = LogProbRecord {
            pair_id: None,
            pol_chosen: -10.0,
            ref_chosen: -12.0,
            pol_rejected: -9.0,
            ref_rejected: -6.0,
            len_chosen: Some(2),
            len_rejected: Some(3),
        };
        let raw = rec.to_log_probs(0, false).unwrap();
        assert_eq!(dpo_margin(&raw).unwrap(), 5.0);
        let norm = rec.to_log_probs(0, true).unwrap();
        assert_eq!(dpo_margin(&norm).unwrap(), 1.0 - (-1.0));
        let missing = LogProbRecord { len_rejected: None, ..rec };
        assert_eq!(missing.to_log_probs(4, true), Err(DpoError::MissingLength(4)));
    }
}

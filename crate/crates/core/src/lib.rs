//! Preference-pair curation from a vision-language model's own
//! inconsistencies, plus the DPO objective, hallucination metrics and a
//! Monte Carlo model of the ranking signal.
//!
//! Numeric code is generic over its scalar type; the aliases below fix the
//! common choices.

pub mod claims;
pub mod dpo;
pub mod fsio;
pub mod gateway;
pub mod metrics;
pub mod pipeline;
pub mod runstore;
pub mod scalar;
pub mod sim;

use num_rational::Rational64;

pub type DpoConfig64 = dpo::DpoConfig<f64>;
pub type DpoConfig32 = dpo::DpoConfig<f32>;
pub type PairLogProbs64 = dpo::PairLogProbs<f64>;
pub type PairLogProbs32 = dpo::PairLogProbs<f32>;

pub type GenerativeMetrics64 = metrics::GenerativeMetrics<f64>;
pub type ExactGenerativeMetrics = metrics::GenerativeMetrics<Rational64>;
pub type ObjHalRates64 = metrics::ObjHalRates<f64>;
pub type ExactObjHalRates = metrics::ObjHalRates<Rational64>;
pub type DiscriminativeReport64 = metrics::DiscriminativeReport<f64>;
pub type ExactDiscriminativeReport = metrics::DiscriminativeReport<Rational64>;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{
    BinaryProbe, CandidateResponse, ConsistencyScore, CurationTask, PairMeta, PairPolicy, PreferencePair,
    RankingStrategy,
};
use crate::gateway::BinaryAnswer;

pub fn score(probes: &[BinaryProbe]) -> ConsistencyScore {
    let mut s = ConsistencyScore::default();
    for p in probes {
        match p.answer {
            BinaryAnswer::No => {
                s.k_no += 1;
                s.t_total += 1;
            }
            BinaryAnswer::Yes => s.t_total += 1,
            BinaryAnswer::Unparseable => s.n_unparseable += 1,
        }
    }
    s
}

/// Orders two scores, lower inconsistency first.
///
/// `RelativeRatio` compares `K/T` by cross-multiplication; both scores must
/// have `T > 0`.
pub fn compare_scores(a: &ConsistencyScore, b: &ConsistencyScore, strategy: RankingStrategy) -> Ordering {
    match strategy {
        RankingStrategy::Occurrence => a.k_no.cmp(&b.k_no),
        RankingStrategy::RelativeRatio => {
            debug_assert!(a.t_total > 0 && b.t_total > 0);
            (u64::from(a.k_no) * u64::from(b.t_total)).cmp(&(u64::from(b.k_no) * u64::from(a.t_total)))
        }
    }
}

fn rankable(c: &CandidateResponse, strategy: RankingStrategy) -> bool {
    c.is_complete() && (strategy == RankingStrategy::Occurrence || c.score.t_total > 0)
}

/// Indices of rankable candidates, best first. The sort is stable: equal keys
/// keep input order. Incomplete candidates, and under `RelativeRatio` those
/// with `T = 0`, are left out.
pub fn rank(candidates: &[CandidateResponse], strategy: RankingStrategy) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).filter(|&i| rankable(&candidates[i], strategy)).collect();
    order.sort_by(|&a, &b| compare_scores(&candidates[a].score, &candidates[b].score, strategy));
    order
}

/// The facts pairing needs about one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairView {
    pub score: ConsistencyScore,
    pub claim_count: usize,
    pub complete: bool,
}

impl PairView {
    pub fn of(c: &CandidateResponse) -> Self {
        Self { score: c.score, claim_count: c.claims.len(), complete: c.is_complete() }
    }

    fn eligible(&self) -> bool {
        self.complete && self.score.t_total > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairingOptions {
    pub strategy: RankingStrategy,
    pub coverage_constraint: bool,
    pub policy: PairPolicy,
}

/// Selected `(chosen, rejected)` index pairs plus discard bookkeeping.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingOutcome {
    pub pairs: Vec<(usize, usize)>,
    pub ties_discarded: usize,
    pub coverage_discarded: usize,
}

impl PairingOutcome {
    fn consider(&mut self, views: &[PairView], a: usize, b: usize, opts: &PairingOptions) {
        let (chosen, rejected) = match compare_scores(&views[a].score, &views[b].score, opts.strategy) {
            Ordering::Less => (a, b),
            Ordering::Greater => (b, a),
            Ordering::Equal => {
                self.ties_discarded += 1;
                return;
            }
        };
        if opts.coverage_constraint && views[chosen].claim_count < views[rejected].claim_count {
            self.coverage_discarded += 1;
            return;
        }
        self.pairs.push((chosen, rejected));
    }
}

/// Chooses preference pairs among candidates.
///
/// Only complete candidates with at least one parseable probe take part.
/// `AllPairs` visits every unordered pair `i < j` in input order;
/// `BestVsWorst` compares the first and last candidate of the stable ranking.
/// Ties on the ranking key are discarded, and with the coverage constraint
/// so is any pair whose chosen side has fewer claims.
pub fn select_pairs(views: &[PairView], opts: &PairingOptions) -> PairingOutcome {
    let eligible: Vec<usize> = (0..views.len()).filter(|&i| views[i].eligible()).collect();
    let mut out = PairingOutcome::default();
    match opts.policy {
        PairPolicy::AllPairs => {
            for (x, &i) in eligible.iter().enumerate() {
                for &j in &eligible[x + 1..] {
                    out.consider(views, i, j, opts);
                }
            }
        }
        PairPolicy::BestVsWorst => {
            let mut order = eligible;
            order.sort_by(|&a, &b| compare_scores(&views[a].score, &views[b].score, opts.strategy));
            if let (Some(&best), Some(&worst)) = (order.first(), order.last()) {
                if best != worst {
                    out.consider(views, best, worst, opts);
                }
            }
        }
    }
    out
}

/// Builds exportable pairs for one task.
pub fn make_pairs(
    task: &CurationTask,
    prompt: &str,
    candidates: &[CandidateResponse],
    opts: &PairingOptions,
) -> (Vec<PreferencePair>, PairingOutcome) {
    let views: Vec<PairView> = candidates.iter().map(PairView::of).collect();
    let outcome = select_pairs(&views, opts);
    let pairs = outcome
        .pairs
        .iter()
        .map(|&(c, r)| {
            let (chosen, rejected) = (&candidates[c], &candidates[r]);
            PreferencePair {
                task_id: task.task_id.clone(),
                image: task.image.clone(),
                prompt: prompt.to_string(),
                chosen: chosen.text.clone(),
                rejected: rejected.text.clone(),
                meta: PairMeta {
                    k_chosen: chosen.score.k_no,
                    t_chosen: chosen.score.t_total,
                    k_rejected: rejected.score.k_no,
                    t_rejected: rejected.score.t_total,
                    strategy: opts.strategy,
                    claim_count_chosen: chosen.claims.len(),
                    claim_count_rejected: rejected.claims.len(),
                },
            }
        })
        .collect();
    (pairs, outcome)
}

use std::io;
use std::path::Path;

use super::PreferencePair;
use crate::fsio::write_atomic;

/// JSON-lines encoding, sorted by `(task_id, k_chosen, k_rejected)`. The
/// sort is stable so pairs with equal keys keep their enumeration order.
pub fn pairs_to_jsonl(pairs: &[PreferencePair]) -> String {
    let mut sorted: Vec<&PreferencePair> = pairs.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.task_id, a.meta.k_chosen, a.meta.k_rejected).cmp(&(&b.task_id, b.meta.k_chosen, b.meta.k_rejected))
    });
    let mut out = String::new();
    for p in sorted {
        out.push_str(&serde_json::to_string(p).expect("pair serialises"));
        out.push('\n');
    }
    out
}

/// Writes `pairs` to `path` atomically.
pub fn export_pairs(pairs: &[PreferencePair], path: &Path) -> io::Result<()> {
    write_atomic(path, pairs_to_jsonl(pairs).as_bytes())
}

pub fn read_pairs(path: &Path) -> io::Result<Vec<PreferencePair>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ImageRef;
    use crate::pipeline::{PairMeta, RankingStrategy};

    fn pair(task: &str, kc: u32, kr: u32) -> PreferencePair {
        PreferencePair {
            task_id: task.into(),
            image: ImageRef::new("img"),
            prompt: "Describe the image in detail.".into(),
            chosen: format!("chosen {kc}"),
            rejected: format!("rejected {kr}"),
            meta: PairMeta {
                k_chosen: kc,
                t_chosen: 4,
                k_rejected: kr,
                t_rejected: 4,
                strategy: RankingStrategy::Occurrence,
                claim_count_chosen: 4,
                claim_count_rejected: 4,
            },
        }
    }

    #[test]
    fn empty_export_creates_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pairs.jsonl");
        export_pairs(&[], &p).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"");
    }

    #[test]
    fn lines_sorted_and_parseable() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pairs.jsonl");
        let pairs = vec![pair("b", 0, 1), pair("a", 1, 2), pair("a", 0, 2)];
        export_pairs(&pairs, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 3);
        for line in text.lines() {
            serde_json::from_str::<serde_json::Value>(line).unwrap();
        }
        let back = read_pairs(&p).unwrap();
        let keys: Vec<_> = back.iter().map(|p| (p.task_id.as_str(), p.meta.k_chosen)).collect();
        assert_eq!(keys, [("a", 0), ("a", 1), ("b", 0)]);
        let first = std::fs::read(&p).unwrap();
        export_pairs(&pairs, &p).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), first);
    }

    #[test]
    fn field_order_is_fixed() {
        let line = pairs_to_jsonl(&[pair("a", 0, 1)]);
        let keys = ["\"task_id\"", "\"image\"", "\"prompt\"", "\"chosen\"", "\"rejected\"", "\"meta\"", "\"k_chosen\"", "\"t_chosen\"", "\"k_rejected\"", "\"t_rejected\"", "\"strategy\"", "\"claim_count_chosen\"", "\"claim_count_rejected\""];
        let positions: Vec<usize> = keys.iter().map(|k| line.find(k).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }
}

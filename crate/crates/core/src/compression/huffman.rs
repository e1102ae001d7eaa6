use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

/// A prefix code over symbols `0..n`, built from their probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HuffmanCode {
    /// Codeword length per symbol, in bits.
    pub lengths: Vec<u32>,
    /// Canonical codewords as strings of '0' and '1'.
    pub codewords: Vec<String>,
    pub expected_length: f64,
    pub entropy: f64,
}

#[derive(PartialEq)]
struct Weight(f64);

impl Eq for Weight {}

impl PartialOrd for Weight {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Weight {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Shannon entropy in bits; zero-probability symbols contribute nothing.
pub fn entropy_of(probs: &[f64]) -> f64 {
    probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum()
}

pub fn kraft_sum(lengths: &[u32]) -> f64 {
    lengths.iter().map(|&l| (-(l as f64)).exp2()).sum()
}

impl HuffmanCode {
    /// Builds an optimal prefix code. Ties are broken by the smallest symbol
    /// index in a subtree, so the result is deterministic. A lone symbol gets
    /// the empty codeword.
    pub fn build(probs: &[f64]) -> Self {
        let n = probs.len();
        let mut lengths = vec![0u32; n];
        if n > 1 {
            // Nodes: leaves 0..n, internal nodes appended after.
            let mut parent: Vec<usize> = vec![usize::MAX; n];
            let mut heap = BinaryHeap::new();
            for (i, &p) in probs.iter().enumerate() {
                heap.push(Reverse((Weight(p), i, i)));
            }
            while heap.len() > 1 {
                let Reverse((Weight(pa), ta, a)) = heap.pop().expect("two nodes");
                let Reverse((Weight(pb), tb, b)) = heap.pop().expect("two nodes");
                let id = parent.len();
                parent.push(usize::MAX);
                parent[a] = id;
                parent[b] = id;
                heap.push(Reverse((Weight(pa + pb), ta.min(tb), id)));
            }
            for (leaf, len) in lengths.iter_mut().enumerate() {
                let mut node = leaf;
                while parent[node] != usize::MAX {
                    node = parent[node];
                    *len += 1;
                }
            }
        }
        let codewords = canonical_codewords(&lengths);
        let expected_length = probs.iter().zip(&lengths).map(|(p, &l)| p * l as f64).sum();
        Self {
            lengths,
            codewords,
            expected_length,
            entropy: entropy_of(probs),
        }
    }

    pub fn kraft_sum(&self) -> f64 {
        kraft_sum(&self.lengths)
    }

    /// No codeword is a prefix of another.
    pub fn is_prefix_free(&self) -> bool {
        let mut words: Vec<&String> = self.codewords.iter().collect();
        words.sort();
        words.windows(2).all(|w| !w[1].starts_with(w[0].as_str()))
    }
}

/// Assigns codewords in order of (length, symbol index).
fn canonical_codewords(lengths: &[u32]) -> Vec<String> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by_key(|&i| (lengths[i], i));
    let mut words = vec![String::new(); lengths.len()];
    let mut code: u64 = 0;
    let mut prev = 0u32;
    for (k, &i) in order.iter().enumerate() {
        let len = lengths[i];
        if k > 0 {
            code = (code + 1) << (len - prev);
        }
        prev = len;
        words[i] = (0..len)
            .rev()
            .map(|b| if code >> b & 1 == 1 { '1' } else { '0' })
            .collect();
    }
    words
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_four() {
        let c = HuffmanCode::build(&[0.25; 4]);
        assert_eq!(c.lengths, vec![2; 4]);
        assert_eq!(c.expected_length, 2.0);
        assert_eq!(c.entropy, 2.0);
    }

    #[test]
    fn half_quarter_quarter() {
        let c = HuffmanCode::build(&[0.5, 0.25, 0.25]);
        assert_eq!(c.lengths, vec![1, 2, 2]);
        assert_eq!(c.expected_length, 1.5);
        assert!((c.entropy - 1.5).abs() < 1e-12);
        assert_eq!(c.codewords, vec!["0", "10", "11"]);
    }

    #[test]
    fn single_symbol_gets_empty_codeword() {
        let c = HuffmanCode::build(&[1.0]);
        assert_eq!(c.lengths, vec![0]);
        assert_eq!(c.codewords, vec![""]);
        assert_eq!(c.expected_length, 0.0);
    }

    #[test]
    fn deterministic_under_ties() {
        let p = [0.2; 5];
        assert_eq!(HuffmanCode::build(&p), HuffmanCode::build(&p));
    }

    fn brute_force_optimum(probs: &[f64]) -> f64 {
        // Every length vector with Kraft sum <= 1 and lengths < n.
        let n = probs.len();
        let mut best = f64::INFINITY;
        let mut lens = vec![1u32; n];
        loop {
            if kraft_sum(&lens) <= 1.0 + 1e-12 {
                let l: f64 = probs.iter().zip(&lens).map(|(p, &l)| p * l as f64).sum();
                best = best.min(l);
            }
            let mut i = 0;
            while i < n && lens[i] == n as u32 - 1 {
                lens[i] = 1;
                i += 1;
            }
            if i == n {
                return best;
            }
            lens[i] += 1;
        }
    }

    proptest! {
        #[test]
        fn kraft_and_entropy_bracket(weights in prop::collection::vec(0.0f64..1.0, 1..40)) {
            let total: f64 = weights.iter().sum();
            prop_assume!(total > 1e-6);
            let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let c = HuffmanCode::build(&probs);
            prop_assert!(c.kraft_sum() <= 1.0 + 1e-12);
            prop_assert!(c.is_prefix_free());
            prop_assert!(c.expected_length >= c.entropy - 1e-9);
            if probs.len() > 1 {
                prop_assert!(c.expected_length < c.entropy + 1.0 + 1e-9);
            }
        }

        #[test]
        fn matches_exhaustive_optimum(weights in prop::collection::vec(0.01f64..1.0, 2..6)) {
            let total: f64 = weights.iter().sum();
            let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let c = HuffmanCode::build(&probs);
            prop_assert!((c.expected_length - brute_force_optimum(&probs)).abs() < 1e-9);
        }
    }
}

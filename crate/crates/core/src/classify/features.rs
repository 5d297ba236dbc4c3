//! Hashed unigram + bigram bag-of-words features.

use std::hash::Hasher;

use fnv::FnvHasher;

pub const HASH_BITS: u32 = 18;
pub const NUM_BUCKETS: usize = 1 << HASH_BITS;

/// Sparse, L2-normalized feature vector; indices strictly increasing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    pub entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| dense[i as usize] * v).sum()
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (a, b) = (self.entries[i], other.entries[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a.1 * b.1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

fn bucket(kind: u8, parts: &[&str]) -> u32 {
    let mut h = FnvHasher::default();
    h.write_u8(kind);
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            h.write_u8(b' ');
        }
        h.write(p.as_bytes());
    }
    (h.finish() & (NUM_BUCKETS as u64 - 1)) as u32
}

pub fn featurize(text: &str) -> FeatureVector {
    let tokens = tokenize(text);
    let mut raw: Vec<u32> = Vec::with_capacity(tokens.len() * 2);
    for (i, tok) in tokens.iter().enumerate() {
        raw.push(bucket(b'u', &[tok]));
        if i + 1 < tokens.len() {
            raw.push(bucket(b'b', &[tok, &tokens[i + 1]]));
        }
    }
    raw.sort_unstable();
    let mut entries: Vec<(u32, f64)> = Vec::with_capacity(raw.len());
    for idx in raw {
        match entries.last_mut() {
            Some((last, count)) if *last == idx => *count += 1.0,
            _ => entries.push((idx, 1.0)),
        }
    }
    let mut v = FeatureVector { entries };
    let norm = v.norm();
    if norm > 0.0 {
        for e in &mut v.entries {
            e.1 /= norm;
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_is_zero() {
        assert!(featurize("").is_zero());
        assert!(featurize(" !!! ,, ").is_zero());
    }

    #[test]
    fn case_folding() {
        assert_eq!(featurize("Quake quake"), featurize("quake quake"));
    }

    #[test]
    fn bigrams_make_order_matter() {
        assert_ne!(featurize("a b c"), featurize("c b a"));
        assert_eq!(featurize("a b c").entries.len(), 5);
    }

    #[test]
    fn tokenizer_splits_on_punctuation() {
        assert_eq!(tokenize("I'm OK,fine!"), ["i", "m", "ok", "fine"]);
    }

    proptest! {
        #[test]
        fn unit_norm(text in "\\PC{0,80}") {
            let v = featurize(&text);
            if v.is_zero() {
                prop_assert!(tokenize(&text).is_empty());
            } else {
                prop_assert!((v.norm() - 1.0).abs() < 1e-12);
                prop_assert!(v.entries.windows(2).all(|w| w[0].0 < w[1].0));
            }
        }
    }
}

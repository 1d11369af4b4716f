//! Bundled frequency-weighted English vocabulary.

use std::sync::OnceLock;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

pub const VOCABULARY_VERSION: &str = "vocab-v1";

#[derive(Debug, Clone)]
pub struct Vocabulary {
    pub words: Vec<String>,
    pub weights: Vec<u64>,
    dist: WeightedIndex<u64>,
}

impl Vocabulary {
    /// Parses `word<TAB>weight` lines; `#` starts a comment line.
    pub fn parse(tsv: &str) -> Result<Vocabulary, String> {
        let mut words = Vec::new();
        let mut weights = Vec::new();
        for (n, line) in tsv.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (w, f) = line
                .split_once('\t')
                .ok_or_else(|| format!("line {}: expected word<TAB>weight", n + 1))?;
            let weight: u64 = f
                .trim()
                .parse()
                .map_err(|_| format!("line {}: bad weight `{f}`", n + 1))?;
            words.push(w.to_string());
            weights.push(weight);
        }
        let dist = WeightedIndex::new(&weights).map_err(|e| format!("vocabulary weights: {e}"))?;
        Ok(Vocabulary {
            words,
            weights,
            dist,
        })
    }

    pub fn bundled() -> &'static Vocabulary {
        static V: OnceLock<Vocabulary> = OnceLock::new();
        V.get_or_init(|| {
            Vocabulary::parse(include_str!("../data/vocabulary.v1.tsv"))
                .expect("bundled vocabulary parses")
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// One frequency-weighted draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &str {
        &self.words[self.dist.sample(rng)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_vocabulary_loads() {
        let v = Vocabulary::bundled();
        assert_eq!(v.len(), 2000);
        assert_eq!(v.words[0], "the");
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Vocabulary::parse("word 12\n").is_err());
        assert!(Vocabulary::parse("word\tx\n").is_err());
    }
}

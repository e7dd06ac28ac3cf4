use std::collections::HashMap;

use crate::corpus::SlicedCorpus;
use crate::error::{Error, Result};

/// Word inventory with dense ids, ordered by descending count and then
/// lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
    counts: Vec<u64>,
}

impl Vocabulary {
    /// Counts tokens over every slice and keeps words seen at least
    /// `min_count` times.
    pub fn build(corpus: &SlicedCorpus, min_count: u64) -> Result<Self> {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for tok in corpus.slices().iter().flat_map(|s| s.tokens()) {
            *counts.entry(tok).or_insert(0) += 1;
        }
        if counts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Self::from_counts(counts.into_iter().map(|(w, c)| (w.to_string(), c)), min_count)
    }

    pub fn from_counts(counts: impl IntoIterator<Item = (String, u64)>, min_count: u64) -> Result<Self> {
        let mut entries: Vec<(String, u64)> = counts.into_iter().filter(|&(_, c)| c >= min_count.max(1)).collect();
        if entries.is_empty() {
            return Err(Error::EmptyVocabulary { min_count });
        }
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut words = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (w, c)) in entries.into_iter().enumerate() {
            if index.insert(w.clone(), i as u32).is_some() {
                return Err(Error::Model(format!("duplicate vocabulary word {w:?}")));
            }
            words.push(w);
            counts.push(c);
        }
        Ok(Vocabulary { words, index, counts })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Maps tokens to ids, dropping out-of-vocabulary tokens.
    pub fn encode<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Vec<u32> {
        tokens.into_iter().filter_map(|t| self.id(t)).collect()
    }

    /// Error for a word missing from the vocabulary, listing the closest
    /// spellings in it.
    pub fn unknown_word(&self, word: &str) -> Error {
        closest_words(word, self.words.iter().map(String::as_str))
    }
}

const SUGGESTIONS: usize = 5;

/// [`Error::UnknownWord`] with up to five candidates by edit distance,
/// ties broken alphabetically.
pub fn closest_words<'a>(word: &str, candidates: impl IntoIterator<Item = &'a str>) -> Error {
    let mut scored: Vec<(usize, &str)> = candidates
        .into_iter()
        .map(|c| (strsim::levenshtein(word, c), c))
        .collect();
    scored.sort_unstable();
    Error::UnknownWord {
        word: word.to_string(),
        candidates: scored
            .into_iter()
            .take(SUGGESTIONS)
            .map(|(_, c)| c.to_string())
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AgeRange, SpeakerFilter, SpeakerRole, Utterance};

    fn corpus(tokens: &[&str]) -> SlicedCorpus {
        let utt = Utterance {
            speaker_role: SpeakerRole::Child,
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            child_age_months: 20,
        };
        SlicedCorpus::from_utterances(SpeakerFilter::ChildSpeech, AgeRange::default(), [utt]).unwrap()
    }

    #[test]
    fn counts_and_order() {
        let v = Vocabulary::build(&corpus(&["a", "b", "a"]), 1).unwrap();
        assert_eq!(v.words(), &["a", "b"]);
        assert_eq!(v.id("a"), Some(0));
        assert_eq!(v.count(0), 2);
        assert_eq!(v.count(1), 1);
    }

    #[test]
    fn ties_are_lexicographic() {
        let v = Vocabulary::build(&corpus(&["c", "b", "a", "b", "c", "a"]), 1).unwrap();
        assert_eq!(v.words(), &["a", "b", "c"]);
    }

    #[test]
    fn min_count_filters_everything() {
        let err = Vocabulary::build(&corpus(&["a", "b", "a"]), 3).unwrap_err();
        assert!(matches!(err, Error::EmptyVocabulary { min_count: 3 }));
    }
}

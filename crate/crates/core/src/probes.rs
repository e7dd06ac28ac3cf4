//! Probe-word lexicons and the all-slice common vocabulary.
//!
//! Probe files are CSV with columns `word,family,category`, where family is
//! `semantic` or `syntactic`. A header row is optional.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::compass::{words_in_every_slice, DiachronicModel};
use crate::error::{Error, Result};
use crate::warning::Warning;

/// Category inventory sizes of the standard lexicon.
pub const SEMANTIC_CATEGORIES: usize = 24;
pub const SYNTACTIC_CATEGORIES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Semantic,
    Syntactic,
}

impl Family {
    pub const ALL: [Family; 2] = [Family::Semantic, Family::Syntactic];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Semantic => "semantic",
            Family::Syntactic => "syntactic",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "semantic" => Ok(Family::Semantic),
            "syntactic" => Ok(Family::Syntactic),
            other => Err(Error::Config(format!("unknown probe family {other:?}"))),
        }
    }
}

/// Probe words with one category per family.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeLexicon {
    semantic: BTreeMap<String, String>,
    syntactic: BTreeMap<String, String>,
}

impl ProbeLexicon {
    /// Builds a lexicon; a word listed twice in one family with different
    /// categories is an error.
    pub fn from_entries<'a>(entries: impl IntoIterator<Item = (&'a str, Family, &'a str)>) -> Result<Self> {
        let mut lex = ProbeLexicon::default();
        for (word, family, category) in entries {
            lex.insert(word, family, category)?;
        }
        Ok(lex)
    }

    fn insert(&mut self, word: &str, family: Family, category: &str) -> Result<()> {
        let map = self.family_mut(family);
        match map.get(word) {
            Some(existing) if existing != category => Err(Error::Config(format!(
                "{family} probe {word:?} listed in both {existing:?} and {category:?}"
            ))),
            _ => {
                map.insert(word.to_string(), category.to_string());
                Ok(())
            }
        }
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(file);
        let mut lex = ProbeLexicon::default();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let line = record.position().map_or(i + 1, |p| p.line() as usize);
            if record.len() != 3 {
                return Err(Error::parse(path, line, "expected word,family,category"));
            }
            if i == 0 && &record[0] == "word" && &record[1] == "family" {
                continue;
            }
            let family: Family = record[1]
                .parse()
                .map_err(|e: Error| Error::parse(path, line, e.to_string()))?;
            let word = record[0].to_lowercase();
            if word.is_empty() || record[2].is_empty() {
                return Err(Error::parse(path, line, "empty word or category"));
            }
            lex.insert(&word, family, &record[2])
                .map_err(|e| Error::parse(path, line, e.to_string()))?;
        }
        Ok(lex)
    }

    /// Writes the lexicon in the format [`ProbeLexicon::load_csv`] reads.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["word", "family", "category"])?;
        for family in Family::ALL {
            for (word, category) in self.family(family) {
                writer.write_record([word.as_str(), family.as_str(), category.as_str()])?;
            }
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }

    pub fn family(&self, family: Family) -> &BTreeMap<String, String> {
        match family {
            Family::Semantic => &self.semantic,
            Family::Syntactic => &self.syntactic,
        }
    }

    fn family_mut(&mut self, family: Family) -> &mut BTreeMap<String, String> {
        match family {
            Family::Semantic => &mut self.semantic,
            Family::Syntactic => &mut self.syntactic,
        }
    }

    pub fn categories(&self, family: Family) -> BTreeSet<&str> {
        self.family(family).values().map(String::as_str).collect()
    }

    pub fn len(&self, family: Family) -> usize {
        self.family(family).len()
    }

    pub fn is_empty(&self) -> bool {
        self.semantic.is_empty() && self.syntactic.is_empty()
    }

    /// Words listed in both families. They stay in both analyses.
    pub fn overlap(&self) -> BTreeSet<&str> {
        self.semantic
            .keys()
            .filter(|w| self.syntactic.contains_key(*w))
            .map(String::as_str)
            .collect()
    }

    /// Checks the number of categories per family.
    pub fn check_inventory(&self, semantic: usize, syntactic: usize) -> Result<()> {
        for (family, want) in [(Family::Semantic, semantic), (Family::Syntactic, syntactic)] {
            let got = self.categories(family).len();
            if got != want {
                return Err(Error::Config(format!(
                    "{family} lexicon has {got} categories, expected {want}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_subset_of(&self, other: &ProbeLexicon) -> bool {
        Family::ALL
            .iter()
            .all(|&f| self.family(f).iter().all(|(w, c)| other.family(f).get(w) == Some(c)))
    }
}

/// Words with at least `per_slice_min_count` occurrences in every slice.
pub fn common_vocabulary(model: &DiachronicModel, per_slice_min_count: u64) -> BTreeSet<String> {
    words_in_every_slice(model, per_slice_min_count)
}

/// Words meeting the count in every month of the summed counts of several
/// models, i.e. the common vocabulary of the merged corpora.
pub fn common_vocabulary_merged(models: &[&DiachronicModel], per_slice_min_count: u64) -> Result<BTreeSet<String>> {
    let Some(first) = models.first() else {
        return Ok(BTreeSet::new());
    };
    let months = first.months();
    if models.iter().any(|m| m.months() != months) {
        return Err(Error::Model("models cover different months".into()));
    }
    let min = per_slice_min_count.max(1);
    let words: BTreeSet<&str> = models
        .iter()
        .flat_map(|m| m.vocabulary().words().iter().map(String::as_str))
        .collect();
    Ok(words
        .into_iter()
        .filter(|w| {
            months
                .iter()
                .all(|&month| models.iter().map(|m| m.slice_count(w, month)).sum::<u64>() >= min)
        })
        .map(String::from)
        .collect())
}

/// How the combined-speaker probe set is formed from two speaker models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinedRule {
    /// Intersect the two speaker-specific common vocabularies.
    #[default]
    IntersectSpeakers,
    /// Recompute the common vocabulary over the merged corpus.
    MergedCorpus,
}

pub fn combined_common_vocabulary(
    child: &DiachronicModel,
    adult: &DiachronicModel,
    per_slice_min_count: u64,
    rule: CombinedRule,
) -> Result<BTreeSet<String>> {
    match rule {
        CombinedRule::IntersectSpeakers => {
            let a = common_vocabulary(child, per_slice_min_count);
            let b = common_vocabulary(adult, per_slice_min_count);
            Ok(a.intersection(&b).cloned().collect())
        }
        CombinedRule::MergedCorpus => common_vocabulary_merged(&[child, adult], per_slice_min_count),
    }
}

/// Restricts a lexicon to `common`, reporting categories that became empty.
pub fn intersect_probes(lexicon: &ProbeLexicon, common: &BTreeSet<String>) -> (ProbeLexicon, Vec<Warning>) {
    let mut out = ProbeLexicon::default();
    let mut warnings = Vec::new();
    for family in Family::ALL {
        let kept: BTreeMap<String, String> = lexicon
            .family(family)
            .iter()
            .filter(|(w, _)| common.contains(*w))
            .map(|(w, c)| (w.clone(), c.clone()))
            .collect();
        let remaining: BTreeSet<&str> = kept.values().map(String::as_str).collect();
        for category in lexicon.categories(family) {
            if !remaining.contains(category) {
                warnings.push(Warning::EmptyCategory {
                    family,
                    category: category.to_string(),
                });
            }
        }
        *out.family_mut(family) = kept;
    }
    (out, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex() -> ProbeLexicon {
        ProbeLexicon::from_entries([
            ("dog", Family::Semantic, "mammal"),
            ("cat", Family::Semantic, "mammal"),
            ("milk", Family::Semantic, "drink"),
            ("dog", Family::Syntactic, "NOUN"),
            ("run", Family::Syntactic, "VERB"),
        ])
        .unwrap()
    }

    fn set(words: &[&str]) -> BTreeSet<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn identity_and_empty() {
        let l = lex();
        let all = set(&["dog", "cat", "milk", "run"]);
        let (same, warnings) = intersect_probes(&l, &all);
        assert_eq!(same, l);
        assert!(warnings.is_empty());
        let (empty, warnings) = intersect_probes(&l, &BTreeSet::new());
        assert!(empty.is_empty());
        assert_eq!(warnings.len(), 4);
    }

    #[test]
    fn empty_category_warning() {
        let (out, warnings) = intersect_probes(&lex(), &set(&["dog", "cat", "run"]));
        assert_eq!(out.len(Family::Semantic), 2);
        assert_eq!(
            warnings,
            vec![Warning::EmptyCategory {
                family: Family::Semantic,
                category: "drink".into()
            }]
        );
        assert_eq!(
            warnings[0].to_json_line(),
            r#"{"kind":"empty_category","family":"semantic","category":"drink"}"#
        );
    }

    #[test]
    fn conflicting_categories_rejected() {
        let err = ProbeLexicon::from_entries([("dog", Family::Semantic, "mammal"), ("dog", Family::Semantic, "toy")])
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn overlap_is_reported() {
        assert_eq!(lex().overlap(), BTreeSet::from(["dog"]));
    }

    #[test]
    fn inventory_check() {
        assert!(lex().check_inventory(2, 2).is_ok());
        assert!(lex()
            .check_inventory(SEMANTIC_CATEGORIES, SYNTACTIC_CATEGORIES)
            .is_err());
    }

    #[test]
    fn csv_loading() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("probes.csv");
        std::fs::write(
            &path,
            "word,family,category\nDog,semantic,mammal\n# note\nrun, syntactic ,VERB\n",
        )
        .unwrap();
        let l = ProbeLexicon::load_csv(&path).unwrap();
        assert_eq!(
            l.family(Family::Semantic).get("dog").map(String::as_str),
            Some("mammal")
        );
        assert_eq!(l.family(Family::Syntactic).get("run").map(String::as_str), Some("VERB"));

        std::fs::write(&path, "dog,lexical,mammal\n").unwrap();
        assert!(matches!(
            ProbeLexicon::load_csv(&path),
            Err(Error::Parse { line: 1, .. })
        ));
        std::fs::write(&path, "dog,semantic\n").unwrap();
        assert!(matches!(ProbeLexicon::load_csv(&path), Err(Error::Parse { .. })));
    }

    proptest! {
        #[test]
        fn intersection_is_subset_and_idempotent(keep in prop::collection::btree_set(prop::sample::select(vec!["dog", "cat", "milk", "run", "zoo"]), 0..5)) {
            let common: BTreeSet<String> = keep.iter().map(|s| s.to_string()).collect();
            let (once, _) = intersect_probes(&lex(), &common);
            prop_assert!(once.is_subset_of(&lex()));
            let (twice, _) = intersect_probes(&once, &common);
            prop_assert_eq!(once, twice);
        }
    }
}

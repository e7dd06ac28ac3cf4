//! Transcript ingestion, token cleaning and month slicing.
//!
//! Input transcripts use a line-oriented format:
//!
//! ```text
//! # comment
//! #@names eve adam
//! 24\tCHI\tlook at the doggie
//! 24.5\tADU\tyes Eve that's a doggie !
//! ```
//!
//! Each utterance line is `<age_months>\t<speaker_role>\t<tokens>`, with the
//! role one of `CHI` or `ADU`. Fractional ages are floored to whole months.
//! A `#@names` comment lists additional proper nouns for that file; all other
//! `#` lines are ignored.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::error::{Error, Result};

/// Replacement token for proper nouns.
pub const NAME_TOKEN: &str = "[NAME]";

const NAMES_DIRECTIVE: &str = "#@names";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpeakerRole {
    Child,
    Adult,
}

impl SpeakerRole {
    fn from_code(code: &str) -> Option<Self> {
        match code {
            "CHI" => Some(SpeakerRole::Child),
            "ADU" => Some(SpeakerRole::Adult),
            _ => None,
        }
    }
}

/// Which speakers a corpus keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeakerFilter {
    /// Utterances produced by the child.
    ChildSpeech,
    /// Utterances produced by adults in the child's environment.
    ChildDirectedSpeech,
    /// Both of the above.
    Combined,
}

impl SpeakerFilter {
    pub fn accepts(self, role: SpeakerRole) -> bool {
        match self {
            SpeakerFilter::ChildSpeech => role == SpeakerRole::Child,
            SpeakerFilter::ChildDirectedSpeech => role == SpeakerRole::Adult,
            SpeakerFilter::Combined => true,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SpeakerFilter::ChildSpeech => "child",
            SpeakerFilter::ChildDirectedSpeech => "adult",
            SpeakerFilter::Combined => "combined",
        }
    }
}

impl fmt::Display for SpeakerFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpeakerFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "child" | "child_speech" => Ok(SpeakerFilter::ChildSpeech),
            "adult" | "child_directed_speech" => Ok(SpeakerFilter::ChildDirectedSpeech),
            "combined" => Ok(SpeakerFilter::Combined),
            other => Err(Error::Config(format!("unknown speaker filter {other:?}"))),
        }
    }
}

/// Inclusive range of child ages in months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeRange {
    pub min_months: u32,
    pub max_months: u32,
}

impl AgeRange {
    pub fn new(min_months: u32, max_months: u32) -> Result<Self> {
        if min_months > max_months {
            return Err(Error::Config(format!(
                "age range [{min_months}, {max_months}] is empty"
            )));
        }
        Ok(AgeRange { min_months, max_months })
    }

    pub fn contains(&self, month: u32) -> bool {
        (self.min_months..=self.max_months).contains(&month)
    }

    pub fn months(&self) -> impl Iterator<Item = u32> {
        self.min_months..=self.max_months
    }

    pub fn len(&self) -> usize {
        (self.max_months - self.min_months + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl Default for AgeRange {
    fn default() -> Self {
        AgeRange {
            min_months: 18,
            max_months: 36,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker_role: SpeakerRole,
    pub tokens: Vec<String>,
    pub child_age_months: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemporalSlice {
    month_index: u32,
    utterances: Vec<Utterance>,
    token_count: usize,
}

impl TemporalSlice {
    pub fn month_index(&self) -> u32 {
        self.month_index
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn token_count(&self) -> usize {
        self.token_count
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.utterances.iter().flat_map(|u| u.tokens.iter().map(String::as_str))
    }
}

/// Per-slice counts reported by `ingest`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceSummary {
    pub month: u32,
    pub utterances: usize,
    pub tokens: usize,
    pub types: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub speaker_filter: SpeakerFilter,
    pub transcripts: usize,
    pub utterances: usize,
    pub tokens: usize,
    pub types: usize,
    pub slices: Vec<SliceSummary>,
}

/// Month-indexed corpus slices covering a contiguous age range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlicedCorpus {
    slices: Vec<TemporalSlice>,
    speaker_filter: SpeakerFilter,
    transcripts: usize,
}

impl SlicedCorpus {
    /// Builds a corpus from already-clean utterances. Utterances outside the
    /// range or not matching the filter are dropped, as are empty ones.
    pub fn from_utterances(
        speaker_filter: SpeakerFilter,
        age_range: AgeRange,
        utterances: impl IntoIterator<Item = Utterance>,
    ) -> Result<Self> {
        let mut by_month: BTreeMap<u32, Vec<Utterance>> = age_range.months().map(|m| (m, Vec::new())).collect();
        let mut kept = 0usize;
        for utt in utterances {
            if utt.tokens.is_empty()
                || !age_range.contains(utt.child_age_months)
                || !speaker_filter.accepts(utt.speaker_role)
            {
                continue;
            }
            kept += 1;
            by_month
                .get_mut(&utt.child_age_months)
                .expect("month in range")
                .push(utt);
        }
        if kept == 0 {
            return Err(Error::EmptyCorpus);
        }
        let slices = by_month
            .into_iter()
            .map(|(month_index, utterances)| {
                let token_count = utterances.iter().map(|u| u.tokens.len()).sum();
                TemporalSlice {
                    month_index,
                    utterances,
                    token_count,
                }
            })
            .collect();
        Ok(SlicedCorpus {
            slices,
            speaker_filter,
            transcripts: 0,
        })
    }

    pub fn slices(&self) -> &[TemporalSlice] {
        &self.slices
    }

    pub fn slice(&self, month: u32) -> Option<&TemporalSlice> {
        self.slices.iter().find(|s| s.month_index == month)
    }

    pub fn months(&self) -> Vec<u32> {
        self.slices.iter().map(|s| s.month_index).collect()
    }

    pub fn speaker_filter(&self) -> SpeakerFilter {
        self.speaker_filter
    }

    /// Number of transcript files that contributed at least one utterance.
    pub fn transcripts(&self) -> usize {
        self.transcripts
    }

    pub fn token_count(&self) -> usize {
        self.slices.iter().map(|s| s.token_count).sum()
    }

    pub fn utterance_count(&self) -> usize {
        self.slices.iter().map(|s| s.utterances.len()).sum()
    }

    pub fn utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.slices.iter().flat_map(|s| s.utterances.iter())
    }

    /// Token counts of a single slice.
    pub fn slice_counts(&self, month: u32) -> BTreeMap<&str, u64> {
        let mut counts = BTreeMap::new();
        if let Some(slice) = self.slice(month) {
            for tok in slice.tokens() {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn summary(&self) -> CorpusSummary {
        let mut all_types = HashSet::new();
        let slices = self
            .slices
            .iter()
            .map(|s| {
                let types: HashSet<&str> = s.tokens().collect();
                let n_types = types.len();
                all_types.extend(types);
                SliceSummary {
                    month: s.month_index,
                    utterances: s.utterances.len(),
                    tokens: s.token_count,
                    types: n_types,
                }
            })
            .collect();
        CorpusSummary {
            speaker_filter: self.speaker_filter,
            transcripts: self.transcripts,
            utterances: self.utterance_count(),
            tokens: self.token_count(),
            types: all_types.len(),
            slices,
        }
    }
}

/// Options for [`ingest_transcripts`].
#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub speaker_filter: SpeakerFilter,
    pub age_range: AgeRange,
    /// Lowercase proper nouns replaced by [`NAME_TOKEN`].
    pub proper_nouns: BTreeSet<String>,
}

impl IngestOptions {
    pub fn new(speaker_filter: SpeakerFilter) -> Self {
        IngestOptions {
            speaker_filter,
            age_range: AgeRange::default(),
            proper_nouns: BTreeSet::new(),
        }
    }
}

/// Reads, cleans and slices a set of transcript files.
///
/// Files are parsed independently (in parallel) and merged in the order the
/// paths are given, so the result depends only on file contents and options.
pub fn ingest_transcripts<P: AsRef<Path> + Sync>(paths: &[P], options: &IngestOptions) -> Result<SlicedCorpus> {
    let parsed: Vec<Vec<Utterance>> = paths
        .par_iter()
        .map(|p| {
            let path = p.as_ref();
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_transcript(&text, path, &options.proper_nouns)
        })
        .collect::<Result<_>>()?;

    let mut transcripts = 0;
    let mut utterances = Vec::new();
    for file in parsed {
        let before = utterances.len();
        utterances.extend(file.into_iter().filter(|u| {
            !u.tokens.is_empty()
                && options.age_range.contains(u.child_age_months)
                && options.speaker_filter.accepts(u.speaker_role)
        }));
        if utterances.len() > before {
            transcripts += 1;
        }
    }
    let mut corpus = SlicedCorpus::from_utterances(options.speaker_filter, options.age_range, utterances)?;
    corpus.transcripts = transcripts;
    Ok(corpus)
}

/// Parses one transcript into cleaned utterances (no age/speaker filtering).
pub fn parse_transcript(text: &str, path: &Path, proper_nouns: &BTreeSet<String>) -> Result<Vec<Utterance>> {
    let mut names: Option<BTreeSet<String>> = None;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if let Some(rest) = line.strip_prefix(NAMES_DIRECTIVE) {
            let set = names.get_or_insert_with(|| proper_nouns.clone());
            set.extend(
                rest.split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|s| !s.is_empty())
                    .map(str::to_lowercase),
            );
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let age = fields.next().unwrap_or_default();
        let role = fields
            .next()
            .ok_or_else(|| Error::parse(path, lineno, "expected <age>\\t<role>\\t<tokens>"))?;
        let tokens = fields.next().unwrap_or_default();

        let child_age_months =
            parse_age(age).ok_or_else(|| Error::parse(path, lineno, format!("invalid age {age:?}")))?;
        let speaker_role = SpeakerRole::from_code(role.trim())
            .ok_or_else(|| Error::parse(path, lineno, format!("invalid speaker role {role:?}")))?;
        let raw: Vec<&str> = tokens.split_whitespace().collect();
        let tokens = preprocess_utterance(&raw, names.as_ref().unwrap_or(proper_nouns));
        out.push(Utterance {
            speaker_role,
            tokens,
            child_age_months,
        });
    }
    Ok(out)
}

fn parse_age(field: &str) -> Option<u32> {
    let age: f64 = field.trim().parse().ok()?;
    if !age.is_finite() || age < 0.0 || age >= u32::MAX as f64 {
        return None;
    }
    Some(age.floor() as u32)
}

/// Loads a proper-noun lexicon: one token per line, blank lines ignored.
pub fn load_proper_nouns(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

/// Punctuation is any Unicode punctuation category plus the ASCII symbols
/// `+ < > ^ ~`.
pub fn is_punctuation(c: char) -> bool {
    matches!(c, '+' | '<' | '>' | '^' | '~')
        || matches!(
            get_general_category(c),
            GeneralCategory::ConnectorPunctuation
                | GeneralCategory::DashPunctuation
                | GeneralCategory::OpenPunctuation
                | GeneralCategory::ClosePunctuation
                | GeneralCategory::InitialPunctuation
                | GeneralCategory::FinalPunctuation
                | GeneralCategory::OtherPunctuation
        )
}

/// Cleans one utterance's raw tokens.
///
/// Punctuation characters are stripped, tokens lowercased, tokens found in
/// `proper_nouns` replaced by [`NAME_TOKEN`], and empty tokens dropped. A raw
/// token containing whitespace is split. The literal [`NAME_TOKEN`] passes
/// through unchanged, which makes the function idempotent.
pub fn preprocess_utterance<S: AsRef<str>>(raw_tokens: &[S], proper_nouns: &BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(raw_tokens.len());
    for raw in raw_tokens {
        for piece in raw.as_ref().split_whitespace() {
            if piece == NAME_TOKEN {
                out.push(NAME_TOKEN.to_string());
                continue;
            }
            let clean: String = piece
                .chars()
                .filter(|&c| !is_punctuation(c))
                .flat_map(char::to_lowercase)
                .collect();
            if clean.is_empty() {
                continue;
            }
            if proper_nouns.contains(&clean) {
                out.push(NAME_TOKEN.to_string());
            } else {
                out.push(clean);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(words: &[&str]) -> BTreeSet<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn preprocess_strips_and_replaces_names() {
        let out = preprocess_utterance(&["Look", ",", "Eve", "!"], &names(&["eve"]));
        assert_eq!(out, vec!["look", "[NAME]"]);
    }

    #[test]
    fn preprocess_empty() {
        let empty: [&str; 0] = [];
        assert!(preprocess_utterance(&empty, &BTreeSet::new()).is_empty());
    }

    #[test]
    fn punctuation_set() {
        for c in [
            '.', ',', '!', '?', '"', '\'', '(', ')', '[', ']', '-', '_', '¿', '«', '+', '<', '>', '^', '~',
        ] {
            assert!(is_punctuation(c), "{c:?}");
        }
        for c in ['a', 'Z', '0', '$', '=', '|', 'é'] {
            assert!(!is_punctuation(c), "{c:?}");
        }
    }

    #[test]
    fn mixed_tokens_keep_letters() {
        let out = preprocess_utterance(&["that's", "doggie+s", "<uh>"], &BTreeSet::new());
        assert_eq!(out, vec!["thats", "doggies", "uh"]);
    }

    proptest! {
        #[test]
        fn preprocess_is_idempotent(raw in prop::collection::vec("[ A-Za-z.,!?'\\[\\]+~éÉ-]{0,8}", 0..10),
                                    nouns in prop::collection::btree_set("[a-z]{1,3}", 0..4)) {
            let once = preprocess_utterance(&raw, &nouns);
            let twice = preprocess_utterance(&once, &nouns);
            prop_assert_eq!(&once, &twice);
            for tok in &once {
                prop_assert!(!tok.is_empty());
                prop_assert!(!tok.chars().any(char::is_whitespace));
                if tok != NAME_TOKEN {
                    prop_assert!(!tok.chars().any(is_punctuation));
                }
            }
        }
    }

    #[test]
    fn parse_lines_and_errors() {
        let text = "# header\n#@names eve\n24\tCHI\tEve want juice\n24.9\tADU\tyes .\n";
        let utts = parse_transcript(text, Path::new("t.txt"), &BTreeSet::new()).unwrap();
        assert_eq!(utts.len(), 2);
        assert_eq!(utts[0].tokens, vec!["[NAME]", "want", "juice"]);
        assert_eq!(utts[1].child_age_months, 24);
        assert_eq!(utts[1].speaker_role, SpeakerRole::Adult);

        let err = parse_transcript("24\tCHI\tok\n25\tMOT\thi\n", Path::new("t.txt"), &BTreeSet::new()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_transcript("x\tCHI\thi\n", Path::new("t.txt"), &BTreeSet::new()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_transcript("24 CHI hi\n", Path::new("t.txt"), &BTreeSet::new()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn single_utterance_gives_one_nonempty_slice() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.txt");
        std::fs::write(&path, "20\tCHI\tmore milk\n40\tCHI\ttoo old\n").unwrap();
        let corpus = ingest_transcripts(&[&path], &IngestOptions::new(SpeakerFilter::ChildSpeech)).unwrap();
        assert_eq!(corpus.slices().len(), 19);
        let nonempty: Vec<_> = corpus.slices().iter().filter(|s| !s.is_empty()).collect();
        assert_eq!(nonempty.len(), 1);
        assert_eq!(nonempty[0].month_index(), 20);
        assert_eq!(nonempty[0].token_count(), 2);
        assert_eq!(corpus.transcripts(), 1);
    }

    #[test]
    fn ingest_errors() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("missing.txt");
        let err = ingest_transcripts(&[&missing], &IngestOptions::new(SpeakerFilter::ChildSpeech)).unwrap_err();
        match err {
            Error::Io { path, .. } => assert_eq!(path, missing),
            other => panic!("unexpected {other}"),
        }
        let path = dir.path().join("adult.txt");
        std::fs::write(&path, "20\tADU\thello there\n").unwrap();
        let err = ingest_transcripts(&[&path], &IngestOptions::new(SpeakerFilter::ChildSpeech)).unwrap_err();
        assert!(matches!(err, Error::EmptyCorpus));
    }

    #[test]
    fn filters_speakers() {
        let utts = vec![
            Utterance {
                speaker_role: SpeakerRole::Child,
                tokens: vec!["a".into()],
                child_age_months: 18,
            },
            Utterance {
                speaker_role: SpeakerRole::Adult,
                tokens: vec!["b".into()],
                child_age_months: 18,
            },
        ];
        let range = AgeRange::new(18, 19).unwrap();
        let child = SlicedCorpus::from_utterances(SpeakerFilter::ChildSpeech, range, utts.clone()).unwrap();
        assert_eq!(child.utterance_count(), 1);
        let both = SlicedCorpus::from_utterances(SpeakerFilter::Combined, range, utts).unwrap();
        assert_eq!(both.utterance_count(), 2);
        assert_eq!(both.months(), vec![18, 19]);
        assert!(both.utterances().all(|u| both.speaker_filter().accepts(u.speaker_role)));
    }
}

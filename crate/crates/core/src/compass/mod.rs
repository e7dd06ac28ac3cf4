//! Compass-aligned diachronic training.
//!
//! The compass `(C, U)` is trained on the concatenation of all slices. Its
//! output layer `U` is then frozen and shared: every monthly slice fine-tunes
//! only an input layer `C_t` against it, which places all slices in the
//! same coordinate system. In incremental mode slice `t` starts from the
//! fine-tuned `C_{t-1}`; in non-incremental mode every slice starts from the
//! compass input layer.

mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{SlicedCorpus, SpeakerFilter, TemporalSlice};
use crate::error::{Error, Result};
use crate::trainer::{
    cosine, fine_tune, train_epochs, EmbeddingMatrix, Objective, TrainConfig, TrainOptions, TrainReport, Vocabulary,
    INIT_STREAM,
};

pub use io::{load_model, read_embeddings, save_model, write_embeddings, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    Incremental,
    NonIncremental,
}

impl TrainingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainingMode::Incremental => "incremental",
            TrainingMode::NonIncremental => "non_incremental",
        }
    }
}

impl fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "incremental" => Ok(TrainingMode::Incremental),
            "non_incremental" | "non-incremental" | "nonincremental" => Ok(TrainingMode::NonIncremental),
            other => Err(Error::Config(format!("unknown training mode {other:?}"))),
        }
    }
}

/// Which words get a fresh random input row when an incremental slice starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NewWordRule {
    /// Words occurring in this slice and in none of the earlier ones.
    #[default]
    AbsentFromAllPrevious,
    /// Words occurring in this slice but not in the one just before it.
    AbsentFromPreviousSlice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompassConfig {
    /// Shared hyperparameters; `train.objective` is the compass objective.
    pub train: TrainConfig,
    pub slice_objective: Objective,
    /// Epochs per slice; defaults to `train.epochs`.
    pub slice_epochs: Option<usize>,
    /// Per-month epoch overrides.
    pub slice_epoch_overrides: BTreeMap<u32, usize>,
    pub new_words: NewWordRule,
    /// Words never drawn as negatives during slice training.
    pub exclude_from_negatives: Vec<String>,
}

impl Default for CompassConfig {
    fn default() -> Self {
        CompassConfig {
            train: TrainConfig::default(),
            slice_objective: Objective::MeanContext,
            slice_epochs: None,
            slice_epoch_overrides: BTreeMap::new(),
            new_words: NewWordRule::default(),
            exclude_from_negatives: Vec::new(),
        }
    }
}

impl CompassConfig {
    pub fn epochs_for(&self, month: u32) -> usize {
        self.slice_epoch_overrides
            .get(&month)
            .copied()
            .or(self.slice_epochs)
            .unwrap_or(self.train.epochs)
    }
}

/// Output of [`train_compass`].
#[derive(Debug, Clone)]
pub struct Compass {
    pub vocabulary: Vocabulary,
    pub c: EmbeddingMatrix,
    pub u: EmbeddingMatrix,
    pub report: TrainReport,
}

/// What happened while one slice was fine-tuned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceRecord {
    pub month: u32,
    pub utterances: usize,
    pub tokens: u64,
    pub epochs: usize,
    pub epoch_losses: Vec<f64>,
    pub pairs: u64,
    /// Rows re-initialized as newly acquired words.
    pub new_words: usize,
    /// SHA-256 of the output layer the slice was trained against.
    pub compass_u_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiachronicModel {
    pub(crate) vocabulary: Vocabulary,
    pub(crate) compass_c: EmbeddingMatrix,
    pub(crate) compass_u: EmbeddingMatrix,
    pub(crate) slices: BTreeMap<u32, EmbeddingMatrix>,
    /// Per-month token counts of vocabulary words, sparse by id.
    pub(crate) slice_counts: BTreeMap<u32, BTreeMap<u32, u64>>,
    /// Per-month token totals, including out-of-vocabulary tokens.
    pub(crate) slice_tokens: BTreeMap<u32, u64>,
    pub(crate) mode: Option<TrainingMode>,
    pub(crate) speaker: SpeakerFilter,
    pub(crate) config: CompassConfig,
    pub(crate) records: Vec<SliceRecord>,
}

impl DiachronicModel {
    /// Untrained-slice model holding the compass and the corpus statistics.
    pub fn from_compass(compass: Compass, corpus: &SlicedCorpus, config: CompassConfig) -> Self {
        let mut slice_counts = BTreeMap::new();
        let mut slice_tokens = BTreeMap::new();
        for slice in corpus.slices() {
            let mut counts = BTreeMap::new();
            for tok in slice.tokens() {
                if let Some(id) = compass.vocabulary.id(tok) {
                    *counts.entry(id).or_insert(0) += 1;
                }
            }
            slice_counts.insert(slice.month_index(), counts);
            slice_tokens.insert(slice.month_index(), slice.token_count() as u64);
        }
        DiachronicModel {
            vocabulary: compass.vocabulary,
            compass_c: compass.c,
            compass_u: compass.u,
            slices: BTreeMap::new(),
            slice_counts,
            slice_tokens,
            mode: None,
            speaker: corpus.speaker_filter(),
            config,
            records: Vec::new(),
        }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn compass_c(&self) -> &EmbeddingMatrix {
        &self.compass_c
    }

    pub fn compass_u(&self) -> &EmbeddingMatrix {
        &self.compass_u
    }

    pub fn mode(&self) -> Option<TrainingMode> {
        self.mode
    }

    pub fn speaker(&self) -> SpeakerFilter {
        self.speaker
    }

    pub fn config(&self) -> &CompassConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.config.train.seed
    }

    pub fn dim(&self) -> usize {
        self.compass_c.dim()
    }

    pub fn records(&self) -> &[SliceRecord] {
        &self.records
    }

    /// Months of the corpus the model was built from.
    pub fn months(&self) -> Vec<u32> {
        self.slice_counts.keys().copied().collect()
    }

    /// Months with trained slice embeddings.
    pub fn trained_months(&self) -> Vec<u32> {
        self.slices.keys().copied().collect()
    }

    pub fn slice_embeddings(&self) -> &BTreeMap<u32, EmbeddingMatrix> {
        &self.slices
    }

    pub fn slice(&self, month: u32) -> Option<&EmbeddingMatrix> {
        self.slices.get(&month)
    }

    pub fn slice_mut(&mut self, month: u32) -> Option<&mut EmbeddingMatrix> {
        self.slices.get_mut(&month)
    }

    /// A word's vector at one month.
    pub fn vector(&self, word: &str, month: u32) -> Option<&[f64]> {
        let id = self.vocabulary.id(word)?;
        Some(self.slices.get(&month)?.row(id as usize))
    }

    pub fn slice_count(&self, word: &str, month: u32) -> u64 {
        self.vocabulary
            .id(word)
            .and_then(|id| self.slice_counts.get(&month)?.get(&id).copied())
            .unwrap_or(0)
    }

    pub fn slice_token_total(&self, month: u32) -> u64 {
        self.slice_tokens.get(&month).copied().unwrap_or(0)
    }

    /// Cosine similarity of two words at one month.
    pub fn similarity(&self, a: &str, b: &str, month: u32) -> Option<f64> {
        cosine(self.vector(a, month)?, self.vector(b, month)?)
    }

    pub(crate) fn check_invariants(&self) -> Result<()> {
        let (v, d) = (self.vocabulary.len(), self.compass_c.dim());
        let all = [&self.compass_c, &self.compass_u]
            .into_iter()
            .chain(self.slices.values());
        for m in all {
            if m.rows() != v || m.dim() != d {
                return Err(Error::Model(format!(
                    "matrix is {}x{}, expected {v}x{d}",
                    m.rows(),
                    m.dim()
                )));
            }
        }
        if !self.slices.is_empty() && self.slices.keys().ne(self.slice_counts.keys()) {
            return Err(Error::Model("slice months do not match corpus months".into()));
        }
        let digest = matrix_digest(&self.compass_u);
        if self.records.iter().any(|r| r.compass_u_digest != digest) {
            return Err(Error::Model(
                "a slice was trained against a different output layer".into(),
            ));
        }
        Ok(())
    }
}

/// SHA-256 over the bit patterns of a matrix.
pub fn matrix_digest(m: &EmbeddingMatrix) -> String {
    let mut h = Sha256::new();
    h.update((m.rows() as u64).to_le_bytes());
    h.update((m.dim() as u64).to_le_bytes());
    for v in m.as_slice() {
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Mixes a base seed with a tag (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn encode_slice(vocab: &Vocabulary, slice: &TemporalSlice) -> Vec<Vec<u32>> {
    slice
        .utterances()
        .iter()
        .map(|u| vocab.encode(u.tokens.iter().map(String::as_str)))
        .filter(|s| !s.is_empty())
        .collect()
}

/// Trains the base model on all slices in month order.
pub fn train_compass(corpus: &SlicedCorpus, config: &TrainConfig) -> Result<Compass> {
    config.validate()?;
    let vocabulary = Vocabulary::build(corpus, config.min_count)?;
    let sequences: Vec<Vec<u32>> = corpus
        .slices()
        .iter()
        .flat_map(|s| encode_slice(&vocabulary, s))
        .collect();
    let mut c = EmbeddingMatrix::zeros(vocabulary.len(), config.dim);
    let mut u = EmbeddingMatrix::zeros(vocabulary.len(), config.dim);
    let options = TrainOptions::from_config(config);
    let report = train_epochs(&sequences, &vocabulary, config, &options, &mut c, &mut u, false, false)?;
    Ok(Compass {
        vocabulary,
        c,
        u,
        report,
    })
}

/// Fine-tunes one input layer per slice against the frozen compass output
/// layer.
pub fn train_slices(mut model: DiachronicModel, corpus: &SlicedCorpus, mode: TrainingMode) -> Result<DiachronicModel> {
    if model.months() != corpus.months() {
        return Err(Error::Model(format!(
            "corpus months {:?} do not match model months {:?}",
            corpus.months(),
            model.months()
        )));
    }
    if model.speaker != corpus.speaker_filter() {
        return Err(Error::Model(format!(
            "corpus speaker filter {} does not match model speaker filter {}",
            corpus.speaker_filter(),
            model.speaker
        )));
    }
    if let Some(existing) = model.mode.filter(|&m| m != mode && !model.slices.is_empty()) {
        return Err(Error::Model(format!(
            "model slices were already trained in {existing} mode"
        )));
    }

    let vocab = &model.vocabulary;
    let config = &model.config;
    let mut excluded = Vec::new();
    for w in &config.exclude_from_negatives {
        excluded.push(vocab.id(w).ok_or_else(|| vocab.unknown_word(w))?);
    }
    let u = &model.compass_u;
    let digest = matrix_digest(u);
    let seed = config.train.seed;

    let train_one = |slice: &TemporalSlice, mut c: EmbeddingMatrix, new_words: usize| {
        let month = slice.month_index();
        let sequences = encode_slice(vocab, slice);
        let options = TrainOptions {
            objective: config.slice_objective,
            epochs: config.epochs_for(month),
            seed: derive_seed(seed, month as u64),
            excluded_negatives: &excluded,
        };
        let report = if options.epochs == 0 {
            TrainReport::default()
        } else {
            fine_tune(&sequences, vocab, &config.train, &options, &mut c, u)?
        };
        let record = SliceRecord {
            month,
            utterances: slice.utterances().len(),
            tokens: slice.token_count() as u64,
            epochs: options.epochs,
            epoch_losses: report.epoch_losses,
            pairs: report.pairs,
            new_words,
            compass_u_digest: digest.clone(),
        };
        Ok::<_, Error>((c, record))
    };

    let trained: Vec<(EmbeddingMatrix, SliceRecord)> = match mode {
        TrainingMode::NonIncremental => corpus
            .slices()
            .par_iter()
            .map(|s| train_one(s, model.compass_c.clone(), 0))
            .collect::<Result<_>>()?,
        TrainingMode::Incremental => {
            let mut out = Vec::with_capacity(corpus.slices().len());
            let mut seen = vec![false; vocab.len()];
            let mut previous = vec![false; vocab.len()];
            let mut prev_c = model.compass_c.clone();
            for (i, slice) in corpus.slices().iter().enumerate() {
                let mut present = vec![false; vocab.len()];
                for tok in slice.tokens() {
                    if let Some(id) = vocab.id(tok) {
                        present[id as usize] = true;
                    }
                }
                let mut c = prev_c;
                let mut new_words = 0;
                if i > 0 {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, slice.month_index() as u64 | 1 << 32));
                    rng.set_stream(INIT_STREAM);
                    for id in (0..vocab.len()).filter(|&id| present[id]) {
                        let is_new = match config.new_words {
                            NewWordRule::AbsentFromAllPrevious => !seen[id],
                            NewWordRule::AbsentFromPreviousSlice => !previous[id],
                        };
                        if is_new {
                            c.randomize_row(id, &mut rng);
                            new_words += 1;
                        }
                    }
                }
                let (c, record) = train_one(slice, c, new_words)?;
                prev_c = c.clone();
                out.push((c, record));
                for (s, p) in seen.iter_mut().zip(&present) {
                    *s |= *p;
                }
                previous = present;
            }
            out
        }
    };

    model.slices = BTreeMap::new();
    model.records = Vec::with_capacity(trained.len());
    for (c, record) in trained {
        model.slices.insert(record.month, c);
        model.records.push(record);
    }
    model.mode = Some(mode);
    Ok(model)
}

/// Compass then slices, in one call.
pub fn train_diachronic(corpus: &SlicedCorpus, config: &CompassConfig, mode: TrainingMode) -> Result<DiachronicModel> {
    let compass = train_compass(corpus, &config.train)?;
    let model = DiachronicModel::from_compass(compass, corpus, config.clone());
    train_slices(model, corpus, mode)
}

/// Words present (count ≥ `min_count`) in every month of a model.
pub(crate) fn words_in_every_slice(model: &DiachronicModel, min_count: u64) -> BTreeSet<String> {
    let min_count = min_count.max(1);
    (0..model.vocabulary.len() as u32)
        .filter(|id| {
            model
                .slice_counts
                .values()
                .all(|counts| counts.get(id).copied().unwrap_or(0) >= min_count)
        })
        .map(|id| model.vocabulary.word(id).to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AgeRange, SpeakerRole, Utterance};

    fn utt(month: u32, text: &str) -> Utterance {
        Utterance {
            speaker_role: SpeakerRole::Child,
            tokens: text.split_whitespace().map(String::from).collect(),
            child_age_months: month,
        }
    }

    fn config() -> CompassConfig {
        CompassConfig {
            train: TrainConfig {
                dim: 6,
                window: 2,
                negatives: 2,
                epochs: 2,
                min_count: 1,
                subsample_threshold: 1.0,
                ..TrainConfig::default()
            },
            ..CompassConfig::default()
        }
    }

    fn corpus(utts: Vec<Utterance>, range: (u32, u32)) -> SlicedCorpus {
        SlicedCorpus::from_utterances(
            SpeakerFilter::ChildSpeech,
            AgeRange::new(range.0, range.1).unwrap(),
            utts,
        )
        .unwrap()
    }

    #[test]
    fn empty_slice_copies_previous() {
        let c = corpus(
            vec![utt(18, "a b c a b"), utt(20, "b c a d"), utt(18, "c a b")],
            (18, 20),
        );
        let m = train_diachronic(&c, &config(), TrainingMode::Incremental).unwrap();
        assert_eq!(m.trained_months(), vec![18, 19, 20]);
        assert!(m.slice(19).unwrap().bit_eq(m.slice(18).unwrap()));
        assert!(!m.slice(20).unwrap().bit_eq(m.slice(19).unwrap()));
        assert_eq!(m.records()[2].new_words, 1);
        m.check_invariants().unwrap();
    }

    #[test]
    fn non_incremental_starts_from_compass() {
        let c = corpus(vec![utt(18, "a b c"), utt(19, "c b a")], (18, 19));
        let cfg = CompassConfig {
            slice_epochs: Some(0),
            ..config()
        };
        let m = train_diachronic(&c, &cfg, TrainingMode::NonIncremental).unwrap();
        for month in [18, 19] {
            assert!(m.slice(month).unwrap().bit_eq(m.compass_c()));
        }
    }

    #[test]
    fn mismatched_corpus_is_rejected() {
        let c = corpus(vec![utt(18, "a b c"), utt(19, "c b a")], (18, 19));
        let other = corpus(vec![utt(18, "a b c")], (18, 18));
        let compass = train_compass(&c, &config().train).unwrap();
        let model = DiachronicModel::from_compass(compass, &c, config());
        let err = train_slices(model.clone(), &other, TrainingMode::Incremental).unwrap_err();
        assert!(matches!(err, Error::Model(_)));
        let trained = train_slices(model, &c, TrainingMode::Incremental).unwrap();
        let err = train_slices(trained, &c, TrainingMode::NonIncremental).unwrap_err();
        assert!(matches!(err, Error::Model(_)));
    }

    #[test]
    fn new_word_rules_differ() {
        // "d" appears at 18 and 20 but not 19.
        let c = corpus(vec![utt(18, "a b d"), utt(19, "a b c"), utt(20, "a d b")], (18, 20));
        let all = train_diachronic(&c, &config(), TrainingMode::Incremental).unwrap();
        let prev_only = train_diachronic(
            &c,
            &CompassConfig {
                new_words: NewWordRule::AbsentFromPreviousSlice,
                ..config()
            },
            TrainingMode::Incremental,
        )
        .unwrap();
        assert_eq!(all.records()[2].new_words, 0);
        assert_eq!(prev_only.records()[2].new_words, 1);
        assert_eq!(all.records()[1].new_words, 1);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 18), derive_seed(1, 19));
        assert_ne!(derive_seed(1, 18), derive_seed(2, 18));
        assert_eq!(derive_seed(5, 7), derive_seed(5, 7));
    }
}

//! Synthetic corpora with planted category structure, for tests, demos and
//! benchmarks.
//!
//! Every utterance is about one of several topics. Content words belong to
//! a topic (the semantic category) and to a word class marked by the
//! function word in front of it (the syntactic category). Within a month,
//! each content word is drawn from the utterance's topic with probability
//! `purity`, otherwise from a uniformly random topic, so topic structure is
//! absent at purity 0 and sharp at purity 1. Purity rises linearly
//! across months.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::distributions::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::compass::CompassConfig;
use crate::corpus::{AgeRange, SpeakerRole, Utterance};
use crate::error::{Error, Result};
use crate::probes::{Family, ProbeLexicon};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub first_month: u32,
    pub months: u32,
    /// Per month, split evenly between child and adult speakers.
    pub utterances_per_month: usize,
    pub topics: usize,
    /// Content words per topic and word class.
    pub words_per_class: usize,
    /// Function-word/content-word pairs per utterance.
    pub pairs_per_utterance: usize,
    pub purity_start: f64,
    pub purity_end: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            first_month: 18,
            months: 6,
            utterances_per_month: 334,
            topics: 2,
            words_per_class: 6,
            pairs_per_utterance: 4,
            purity_start: 0.0,
            purity_end: 1.0,
            seed: 0,
        }
    }
}

/// Word classes and the function words that introduce them.
const CLASSES: [(&str, [&str; 2]); 2] = [("noun", ["the", "a"]), ("verb", ["to", "will"])];

/// Content word for topic `t`, class `c`, index `i`, e.g. `t0n3`.
pub fn planted_word(topic: usize, class: usize, index: usize) -> String {
    let tag = if class == 0 { 'n' } else { 'v' };
    format!("t{topic}{tag}{index}")
}

impl PlantedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.months == 0 || self.utterances_per_month == 0 || self.pairs_per_utterance == 0 {
            return Err(Error::Config("planted corpus dimensions must be positive".into()));
        }
        if self.topics < 2 || self.words_per_class < 2 {
            return Err(Error::Config("need at least 2 topics and 2 words per class".into()));
        }
        for p in [self.purity_start, self.purity_end] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("purity {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn purity(&self, month_offset: u32) -> f64 {
        if self.months == 1 {
            return self.purity_end;
        }
        let frac = month_offset as f64 / (self.months - 1) as f64;
        self.purity_start + (self.purity_end - self.purity_start) * frac
    }

    /// The months the corpus covers.
    pub fn age_range(&self) -> AgeRange {
        AgeRange {
            min_months: self.first_month,
            max_months: self.first_month + self.months.max(1) - 1,
        }
    }

    /// Probe lexicon: topic as semantic category, word class as syntactic.
    pub fn lexicon(&self) -> ProbeLexicon {
        let mut entries = Vec::new();
        for t in 0..self.topics {
            for (c, (class, _)) in CLASSES.iter().enumerate() {
                for i in 0..self.words_per_class {
                    let w = planted_word(t, c, i);
                    entries.push((w.clone(), Family::Semantic, format!("topic{t}")));
                    entries.push((w, Family::Syntactic, class.to_string()));
                }
            }
        }
        ProbeLexicon::from_entries(entries.iter().map(|(w, f, c)| (w.as_str(), *f, c.as_str())))
            .expect("planted words have one category per family")
    }

    pub fn utterances(&self) -> Result<Vec<Utterance>> {
        self.validate()?;
        // Zipf-like weights inside each topic/class block.
        let zipf =
            WeightedIndex::new((0..self.words_per_class).map(|i| 1.0 / (i + 1) as f64)).expect("positive weights");
        let mut out = Vec::with_capacity(self.months as usize * self.utterances_per_month);
        for m in 0..self.months {
            let month = self.first_month + m;
            let purity = self.purity(m);
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(month as u64);
            for k in 0..self.utterances_per_month {
                let topic = rng.gen_range(0..self.topics);
                let mut tokens = Vec::with_capacity(2 * self.pairs_per_utterance);
                for _ in 0..self.pairs_per_utterance {
                    let class = rng.gen_range(0..CLASSES.len());
                    let markers = CLASSES[class].1;
                    tokens.push(markers[rng.gen_range(0..markers.len())].to_string());
                    let t = if rng.gen_bool(purity) {
                        topic
                    } else {
                        rng.gen_range(0..self.topics)
                    };
                    tokens.push(planted_word(t, class, zipf.sample(&mut rng)));
                }
                out.push(Utterance {
                    speaker_role: if k % 2 == 0 {
                        SpeakerRole::Child
                    } else {
                        SpeakerRole::Adult
                    },
                    tokens,
                    child_age_months: month,
                });
            }
        }
        Ok(out)
    }

    /// Training settings suited to the planted vocabulary: small dimension,
    /// narrow window, mild subsampling, a high learning rate and a long
    /// first slice so that the structure the compass picks up from later
    /// months is trained out of the unstructured first month.
    pub fn compass_config(&self, seed: u64) -> CompassConfig {
        let mut config = CompassConfig {
            train: TrainConfig {
                dim: 32,
                window: 3,
                subsample_threshold: 1e-2,
                epochs: 5,
                initial_learning_rate: 0.1,
                min_count: 2,
                seed,
                ..TrainConfig::default()
            },
            slice_epochs: Some(10),
            ..CompassConfig::default()
        };
        config.slice_epoch_overrides.insert(self.first_month, 30);
        config
    }

    /// Writes one transcript file per month into `dir`.
    pub fn write_transcripts(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let utterances = self.utterances()?;
        let mut paths = Vec::new();
        for m in 0..self.months {
            let month = self.first_month + m;
            let path = dir.join(format!("planted_{month}.txt"));
            let mut text = format!("# planted corpus, month {month}\n");
            for u in utterances.iter().filter(|u| u.child_age_months == month) {
                let role = match u.speaker_role {
                    SpeakerRole::Child => "CHI",
                    SpeakerRole::Adult => "ADU",
                };
                text.push_str(&format!("{month}\t{role}\t{}\n", u.tokens.join(" ")));
            }
            std::fs::File::create(&path)
                .and_then(|mut f| f.write_all(text.as_bytes()))
                .map_err(|e| Error::io(&path, e))?;
            paths.push(path);
        }
        Ok(paths)
    }
}
